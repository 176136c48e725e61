//! Replicate studies over a grid of graph sizes.
//!
//! Every replicate derives its own seed from `(config.seed, n, replicate)`,
//! and aggregation folds results in `(method, n, replicate)` order, so a
//! report depends only on its configuration.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{adjusted_rand_index, mean_sd, rate_slope};
use crate::latent::{maximize_latent, BinaryCriterion, LatentOptions};
use crate::model::{
    BinaryAffiliationParams, FamilyKind, GroupProportions, NodePartition, SparsityKind, SparsityModel,
    WeightFamily, WeightedAffiliationParams,
};
use crate::moments::{fit_moments, MomentOptions};
use crate::rng::RngSeed;
use crate::sample::{sample_binary_graph, sample_weighted_graph};
use crate::triplet::{fit_triplet_em, TripletEmOptions};
use crate::weighted::{fit_weighted, WeightedOptions};

/// Presence probability used by the weighted presets.
pub const DEFAULT_WEIGHTED_SPARSITY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelParams {
    Binary(BinaryAffiliationParams),
    Weighted(WeightedAffiliationParams),
}

/// Named simulation settings: binary models 1–3 and Gaussian weighted models A–C.
pub fn preset(name: &str, q: usize, pi: Option<GroupProportions>) -> Result<ModelParams> {
    if q == 0 {
        return Err(Error::InvalidParameter("group count must be at least 1".into()));
    }
    let pi = match pi {
        Some(p) if p.q() != q => {
            return Err(Error::InvalidParameter(format!("{} proportions for {q} groups", p.q())))
        }
        Some(p) => p,
        None => GroupProportions::uniform(q),
    };
    let binary = |alpha, beta| Ok(ModelParams::Binary(BinaryAffiliationParams { pi: pi.clone(), alpha, beta }));
    let weighted = |delta: f64| {
        let sigma2 = (1.0 / delta).powi(2);
        Ok(ModelParams::Weighted(WeightedAffiliationParams {
            pi: pi.clone(),
            sparsity: SparsityModel::Global { p: DEFAULT_WEIGHTED_SPARSITY },
            theta_in: WeightFamily::Gaussian { mu: 2.0, sigma2 },
            theta_out: WeightFamily::Gaussian { mu: 1.0, sigma2 },
        }))
    };
    match name.to_ascii_lowercase().as_str() {
        "model1" => binary(0.3, 0.03),
        "model2" => binary(0.03, 0.3),
        "model3" => binary(0.55, 0.45),
        "modela" => weighted(10.0),
        "modelb" => weighted(2.0),
        "modelc" => weighted(1.0),
        _ => Err(Error::UnknownPreset(name.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "moments")]
    Moments,
    #[serde(rename = "triplet-em")]
    TripletEm,
    #[serde(rename = "weighted")]
    Weighted,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Moments => "moments",
            Method::TripletEm => "triplet-em",
            Method::Weighted => "weighted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    Preset(String),
    Binary { alpha: f64, beta: f64 },
    Weighted { sparsity: SparsityModel, theta_in: WeightFamily, theta_out: WeightFamily },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProportionChoice {
    /// Only `"equal"` is accepted.
    Named(String),
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub model: ModelChoice,
    pub q: usize,
    #[serde(default = "equal_proportions")]
    pub proportions: ProportionChoice,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the presence probability of weighted presets.
    #[serde(default)]
    pub sparsity_p: Option<f64>,
    /// Recover partitions and score them against the truth.
    #[serde(default = "yes")]
    pub recover_structure: bool,
    /// Restarts for every estimator stage; `None` keeps each stage's default.
    #[serde(default)]
    pub restarts: Option<usize>,
    /// Adds wall-clock timings, which makes reports differ between runs.
    #[serde(default)]
    pub record_timings: bool,
}

fn equal_proportions() -> ProportionChoice {
    ProportionChoice::Named("equal".into())
}

fn yes() -> bool {
    true
}

impl BenchmarkConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: BenchmarkConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_grid.is_empty() {
            return bad("n_grid is empty");
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_grid must be strictly increasing");
        }
        if self.n_grid[0] < 3 {
            return bad("every n must be at least 3");
        }
        if self.replicates < 2 {
            return bad("replicates must be at least 2");
        }
        if self.methods.is_empty() {
            return bad("methods is empty");
        }
        if self.q < 2 {
            return bad("q must be at least 2");
        }
        let params = self.params()?;
        for m in &self.methods {
            let ok = matches!(
                (&params, m),
                (ModelParams::Binary(_), Method::Moments | Method::TripletEm) | (ModelParams::Weighted(_), Method::Weighted)
            );
            if !ok {
                return Err(Error::InvalidConfig(format!("method {} does not fit the model", m.name())));
            }
        }
        Ok(())
    }

    pub fn proportions(&self) -> Result<Option<GroupProportions>> {
        match &self.proportions {
            ProportionChoice::Named(s) if s == "equal" => Ok(None),
            ProportionChoice::Named(s) => Err(Error::InvalidConfig(format!("unknown proportions {s:?}"))),
            ProportionChoice::Custom(v) => Ok(Some(GroupProportions::new(v.clone())?)),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        let pi = self.proportions()?;
        if let Some(p) = &pi {
            if p.q() != self.q {
                return Err(Error::InvalidConfig(format!("{} proportions for q = {}", p.q(), self.q)));
            }
        }
        let pi_or_equal = || pi.clone().unwrap_or_else(|| GroupProportions::uniform(self.q));
        let mut params = match &self.model {
            ModelChoice::Preset(name) => preset(name, self.q, pi.clone())?,
            ModelChoice::Binary { alpha, beta } => {
                ModelParams::Binary(BinaryAffiliationParams::new(pi_or_equal(), *alpha, *beta)?)
            }
            ModelChoice::Weighted { sparsity, theta_in, theta_out } => ModelParams::Weighted(
                WeightedAffiliationParams::new(pi_or_equal(), *sparsity, *theta_in, *theta_out)?,
            ),
        };
        if let (ModelParams::Weighted(w), Some(p)) = (&mut params, self.sparsity_p) {
            w.sparsity = SparsityModel::global(p)?;
        }
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub method: Method,
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub estimates: BTreeMap<String, f64>,
    pub ari: Option<f64>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub truth: Option<f64>,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub method: Method,
    pub n: usize,
    pub completed: usize,
    pub failed: usize,
    /// More than 10% of replicates failed.
    pub flagged: bool,
    pub params: BTreeMap<String, ParamSummary>,
    pub ari_mean: Option<f64>,
    pub ari_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub method: Method,
    pub param: String,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub method: Method,
    pub n: usize,
    pub replicate: usize,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub version: String,
    pub config: BenchmarkConfig,
    pub cells: Vec<CellReport>,
    pub slopes: Vec<SlopeReport>,
    pub replicates: Vec<ReplicateRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Vec<TimingRecord>>,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per `(method, n)` cell with mean and sd columns per parameter.
    pub fn to_csv(&self) -> String {
        let mut names: Vec<&String> = self.cells.iter().flat_map(|c| c.params.keys()).collect();
        names.sort();
        names.dedup();
        let mut out = String::from("method,n,completed,failed,flagged,ari_mean,ari_sd");
        for p in &names {
            out.push_str(&format!(",{p}_mean,{p}_sd"));
        }
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}",
                c.method.name(),
                c.n,
                c.completed,
                c.failed,
                c.flagged,
                opt(c.ari_mean),
                opt(c.ari_sd)
            ));
            for p in &names {
                match c.params.get(*p) {
                    Some(s) => out.push_str(&format!(",{},{}", s.mean, s.sd)),
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn cell(&self, method: Method, n: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.method == method && c.n == n)
    }

    pub fn slope(&self, method: Method, param: &str) -> Option<&SlopeReport> {
        self.slopes.iter().find(|s| s.method == method && s.param == param)
    }
}

/// Thread cap from `GRAPHMIX_THREADS`, defaulting to the machine's parallelism.
pub fn thread_limit() -> usize {
    std::env::var("GRAPHMIX_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

struct Outcome {
    estimates: BTreeMap<String, f64>,
    partition: Option<NodePartition>,
    warnings: Vec<String>,
}

fn family_params(prefix: &str, f: &WeightFamily, out: &mut BTreeMap<String, f64>) {
    match *f {
        WeightFamily::Gaussian { mu, sigma2 } => {
            out.insert(format!("mu_{prefix}"), mu);
            out.insert(format!("sigma2_{prefix}"), sigma2);
        }
        WeightFamily::TruncatedPoisson { lambda } => {
            out.insert(format!("lambda_{prefix}"), lambda);
        }
    }
}

fn sparsity_params(s: &SparsityModel, out: &mut BTreeMap<String, f64>) {
    match *s {
        SparsityModel::Global { p } => {
            out.insert("p".into(), p);
        }
        SparsityModel::Affiliation { alpha, beta } => {
            out.insert("sparsity_alpha".into(), alpha);
            out.insert("sparsity_beta".into(), beta);
        }
    }
}

fn truth_values(params: &ModelParams) -> BTreeMap<String, f64> {
    let mut t = BTreeMap::new();
    match params {
        ModelParams::Binary(b) => {
            t.insert("alpha".into(), b.alpha);
            t.insert("beta".into(), b.beta);
        }
        ModelParams::Weighted(w) => {
            family_params("in", &w.theta_in, &mut t);
            family_params("out", &w.theta_out, &mut t);
            sparsity_params(&w.sparsity, &mut t);
        }
    }
    t
}

fn run_one(
    config: &BenchmarkConfig,
    params: &ModelParams,
    method: Method,
    n: usize,
    seed: RngSeed,
) -> Result<(Outcome, NodePartition)> {
    let graph_seed = seed.derive(&[0]);
    let fit_seed = seed.derive(&[1, method as u64]);
    let q = config.q;
    match params {
        ModelParams::Binary(p) => {
            let (g, truth) = sample_binary_graph(p, n, graph_seed)?;
            let mut estimates = BTreeMap::new();
            let outcome = match method {
                Method::Moments => {
                    let mut opts = MomentOptions { seed: fit_seed, ..Default::default() };
                    if let Some(r) = config.restarts {
                        opts.restarts = r;
                    }
                    let fit = fit_moments(&g, q, &opts)?;
                    estimates.insert("alpha".into(), fit.alpha);
                    estimates.insert("beta".into(), fit.beta);
                    Outcome { estimates, partition: Some(fit.partition), warnings: fit.warnings }
                }
                Method::TripletEm => {
                    let mut opts = TripletEmOptions { seed: fit_seed, q, ..Default::default() };
                    if let Some(r) = config.restarts {
                        opts.restarts = r;
                    }
                    let fit = fit_triplet_em(&g, &opts)?;
                    estimates.insert("alpha".into(), fit.params.alpha);
                    estimates.insert("beta".into(), fit.params.beta);
                    let partition = if config.recover_structure {
                        let c = BinaryCriterion::new(&g, fit.params.alpha, fit.params.beta)?;
                        let mut lo = LatentOptions { seed: fit_seed.derive(&[7]), ..Default::default() };
                        if let Some(r) = config.restarts {
                            lo.restarts = r;
                        }
                        Some(maximize_latent(&c, q, &lo)?.partition)
                    } else {
                        None
                    };
                    Outcome { estimates, partition, warnings: fit.warnings }
                }
                Method::Weighted => unreachable!("validated"),
            };
            Ok((outcome, truth))
        }
        ModelParams::Weighted(p) => {
            let (g, truth) = sample_weighted_graph(p, n, graph_seed)?;
            let sparsity_kind = match p.sparsity {
                SparsityModel::Global { .. } => SparsityKind::Global,
                SparsityModel::Affiliation { .. } => SparsityKind::Affiliation,
            };
            let family: FamilyKind = p.theta_in.kind();
            let mut opts = WeightedOptions::seeded(fit_seed);
            if let Some(r) = config.restarts {
                opts.triplet.restarts = r;
                opts.present.restarts = r;
                opts.latent.restarts = r;
            }
            let fit = fit_weighted(&g, q, sparsity_kind, family, &opts)?;
            let mut estimates = BTreeMap::new();
            family_params("in", &fit.theta_in, &mut estimates);
            family_params("out", &fit.theta_out, &mut estimates);
            sparsity_params(&fit.sparsity, &mut estimates);
            Ok((
                Outcome { estimates, partition: Some(fit.partition), warnings: fit.warnings },
                truth,
            ))
        }
    }
}

/// Runs every `(method, n, replicate)` job and aggregates the results.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let params = config.params()?;
    let base = RngSeed(config.seed);
    let mut jobs = Vec::new();
    for &method in &config.methods {
        for &n in &config.n_grid {
            for r in 0..config.replicates {
                jobs.push((method, n, r));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_limit())
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let results: Vec<(ReplicateRecord, f64)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(method, n, r)| {
                let seed = base.derive(&[n as u64, r as u64]);
                let start = Instant::now();
                let outcome = run_one(config, &params, method, n, seed);
                let millis = start.elapsed().as_secs_f64() * 1e3;
                let record = match outcome {
                    Ok((o, truth)) => {
                        let ari = o.partition.as_ref().and_then(|z| adjusted_rand_index(z, &truth).ok());
                        ReplicateRecord {
                            method,
                            n,
                            replicate: r,
                            seed: seed.0,
                            estimates: o.estimates,
                            ari,
                            warnings: o.warnings,
                            error: None,
                        }
                    }
                    Err(e) => ReplicateRecord {
                        method,
                        n,
                        replicate: r,
                        seed: seed.0,
                        estimates: BTreeMap::new(),
                        ari: None,
                        warnings: vec![],
                        error: Some(e.to_string()),
                    },
                };
                (record, millis)
            })
            .collect()
    });

    let truth = truth_values(&params);
    let mut cells = Vec::new();
    for &method in &config.methods {
        for &n in &config.n_grid {
            let recs: Vec<&ReplicateRecord> =
                results.iter().map(|(r, _)| r).filter(|r| r.method == method && r.n == n).collect();
            let ok: Vec<&&ReplicateRecord> = recs.iter().filter(|r| r.error.is_none()).collect();
            let failed = recs.len() - ok.len();
            let mut names: Vec<&String> = ok.iter().flat_map(|r| r.estimates.keys()).collect();
            names.sort();
            names.dedup();
            let mut summary = BTreeMap::new();
            for name in names {
                let vals: Vec<f64> = ok.iter().filter_map(|r| r.estimates.get(name).copied()).collect();
                let (mean, sd) = mean_sd(&vals);
                summary.insert(name.clone(), ParamSummary { truth: truth.get(name).copied(), mean, sd });
            }
            let aris: Vec<f64> = ok.iter().filter_map(|r| r.ari).collect();
            let (ari_mean, ari_sd) = if aris.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_sd(&aris);
                (Some(m), Some(s))
            };
            cells.push(CellReport {
                method,
                n,
                completed: ok.len(),
                failed,
                flagged: failed * 10 > recs.len(),
                params: summary,
                ari_mean,
                ari_sd,
            });
        }
    }

    let mut slopes = Vec::new();
    if config.n_grid.len() >= 2 {
        for &method in &config.methods {
            let of_method: Vec<&CellReport> = cells.iter().filter(|c| c.method == method).collect();
            let names: Vec<String> = of_method.first().map(|c| c.params.keys().cloned().collect()).unwrap_or_default();
            for name in names {
                let sds: Option<Vec<f64>> = of_method.iter().map(|c| c.params.get(&name).map(|s| s.sd)).collect();
                if let Some((slope, intercept)) = sds.and_then(|sds| rate_slope(&config.n_grid, &sds)) {
                    slopes.push(SlopeReport { method, param: name, slope, intercept });
                }
            }
        }
    }

    let timings = config.record_timings.then(|| {
        results
            .iter()
            .map(|(r, ms)| TimingRecord { method: r.method, n: r.n, replicate: r.replicate, millis: *ms })
            .collect()
    });
    Ok(BenchmarkReport {
        version: crate::VERSION.to_string(),
        config: config.clone(),
        cells,
        slopes,
        replicates: results.into_iter().map(|(r, _)| r).collect(),
        timings,
    })
}
