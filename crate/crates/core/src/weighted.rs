//! Two-stage estimation for weighted graphs: sparsity first, then a
//! two-component mixture over the weights of present edges.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{resolve_label_swap, LatentOptions};
use crate::model::{
    as_positive_count, binarize, pair_count, FamilyKind, GroupProportions, NodePartition, SparsityKind,
    SparsityModel, WeightFamily, WeightedGraph,
};
use crate::rng::RngSeed;
use crate::triplet::{fit_triplet_em, TripletEmOptions, TripletFit};

/// Smallest variance a Gaussian component may take.
pub const VARIANCE_FLOOR: f64 = 1e-12;
/// Smallest rate a truncated-Poisson component may take.
pub const RATE_FLOOR: f64 = 1e-8;
const MAX_REINITS: usize = 10;

/// Present-edge fraction over all unordered pairs.
pub fn estimate_global_sparsity(g: &WeightedGraph) -> Result<f64> {
    if g.n() < 2 {
        return Err(Error::TooFewNodes { required: 2, actual: g.n() });
    }
    Ok(g.present_count() as f64 / pair_count(g.n()) as f64)
}

/// Triplet EM on the presence graph; returns `(alpha_hat, beta_hat)` and the full fit.
pub fn estimate_affiliation_sparsity(g: &WeightedGraph, opts: &TripletEmOptions) -> Result<(f64, f64, TripletFit)> {
    let fit = fit_triplet_em(&binarize(g), opts)?;
    Ok((fit.params.alpha, fit.params.beta, fit))
}

/// Two-component mixture over present-edge weights.
///
/// Components are unordered; they are stored sorted by mean so that the
/// output does not depend on initialization order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresentEdgeMixture {
    pub weights: [f64; 2],
    pub components: [WeightFamily; 2],
}

impl PresentEdgeMixture {
    fn canonical(mut self) -> Self {
        if self.components[0].mean() > self.components[1].mean() {
            self.weights.swap(0, 1);
            self.components.swap(0, 1);
        }
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PresentEdgeOptions {
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: RngSeed,
    /// Gaussian only: one variance for both components.
    #[serde(default)]
    pub shared_variance: bool,
    /// Replaces the quantile-split start of restart 0.
    #[serde(default)]
    pub init: Option<PresentEdgeMixture>,
}

impl Default for PresentEdgeOptions {
    fn default() -> Self {
        PresentEdgeOptions {
            restarts: 5,
            tol: 1e-10,
            max_iter: 1000,
            seed: RngSeed(0),
            shared_variance: false,
            init: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentEdgeFit {
    pub mixture: PresentEdgeMixture,
    pub loglik: f64,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Composite log-likelihood of the present edges.
pub fn present_edge_loglik(x: &[f64], mix: &PresentEdgeMixture) -> Result<f64> {
    let lw = [mix.weights[0].ln(), mix.weights[1].ln()];
    let mut total = 0.0;
    for &v in x {
        let a = lw[0] + mix.components[0].ln_density(v)?;
        let b = lw[1] + mix.components[1].ln_density(v)?;
        total += log_add(a, b);
    }
    Ok(total)
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Rate `lambda` with `lambda / (1 - e^-lambda) = mean`, for `mean > 1`.
pub fn truncated_poisson_rate(mean: f64) -> Result<f64> {
    if !(mean > 1.0) || !mean.is_finite() {
        return Err(Error::Domain(format!("truncated-Poisson mean {mean} must exceed 1")));
    }
    let target = |l: f64| truncated_poisson_mean(l) - mean;
    // mean map exceeds lambda, so the root lies in (0, mean)
    let (mut lo, mut hi) = (0.0f64, mean);
    let mut lambda = mean - 1.0 + (-mean).exp();
    lambda = lambda.clamp(f64::MIN_POSITIVE, mean);
    for _ in 0..100 {
        let f = target(lambda);
        if f == 0.0 {
            return Ok(lambda);
        }
        if f > 0.0 {
            hi = lambda;
        } else {
            lo = lambda;
        }
        let em = (-lambda).exp();
        let denom = -(-lambda).exp_m1();
        let slope = (denom - lambda * em) / (denom * denom);
        let mut next = lambda - f / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - lambda).abs() <= 1e-15 * lambda.max(1.0) {
            return Ok(next);
        }
        lambda = next;
    }
    Err(Error::NewtonFailure(mean))
}

/// `lambda / (1 - e^-lambda)`, the mean of a zero-truncated Poisson.
pub fn truncated_poisson_mean(lambda: f64) -> f64 {
    if lambda < 1e-300 {
        return 1.0;
    }
    lambda / -(-lambda).exp_m1()
}

struct EmState {
    mix: PresentEdgeMixture,
    reinits: usize,
}

fn fit_component(kind: FamilyKind, x: &[f64], resp: &[f64], warnings: &mut Vec<String>) -> Result<Option<WeightFamily>> {
    let mass: f64 = resp.iter().sum();
    if !(mass > 0.0) {
        return Ok(None);
    }
    let mean = x.iter().zip(resp).map(|(v, r)| v * r).sum::<f64>() / mass;
    match kind {
        FamilyKind::Gaussian => {
            let var = x.iter().zip(resp).map(|(v, r)| r * (v - mean).powi(2)).sum::<f64>() / mass;
            // Collapsed variances are handled by the caller.
            Ok(Some(WeightFamily::Gaussian { mu: mean, sigma2: var }))
        }
        FamilyKind::TruncatedPoisson => {
            if mean <= 1.0 + 1e-12 {
                push_once(warnings, "truncated-Poisson component hit the rate floor".into());
                return Ok(Some(WeightFamily::TruncatedPoisson { lambda: RATE_FLOOR }));
            }
            let lambda = truncated_poisson_rate(mean)?.max(RATE_FLOOR);
            Ok(Some(WeightFamily::TruncatedPoisson { lambda }))
        }
    }
}

fn global_moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

fn quantile_split(kind: FamilyKind, x: &[f64], warnings: &mut Vec<String>) -> Result<PresentEdgeMixture> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let half = sorted.len() / 2;
    let (lower, upper) = sorted.split_at(half);
    let mut comps = [None, None];
    for (slot, part) in comps.iter_mut().zip([lower, upper]) {
        *slot = fit_component(kind, part, &vec![1.0; part.len()], warnings)?;
    }
    let (gm, gv) = global_moments(x);
    let fallback = |c: Option<WeightFamily>| match (kind, c) {
        (_, Some(c)) => c,
        (FamilyKind::Gaussian, None) => WeightFamily::Gaussian { mu: gm, sigma2: gv.max(VARIANCE_FLOOR) },
        (FamilyKind::TruncatedPoisson, None) => WeightFamily::TruncatedPoisson { lambda: RATE_FLOOR },
    };
    let mut components = [fallback(comps[0]), fallback(comps[1])];
    for c in components.iter_mut() {
        if let WeightFamily::Gaussian { sigma2, .. } = c {
            *sigma2 = sigma2.max(gv.max(VARIANCE_FLOOR) * 1e-3).max(VARIANCE_FLOOR);
        }
    }
    Ok(PresentEdgeMixture { weights: [0.5, 0.5], components })
}

fn perturb(start: &PresentEdgeMixture, x: &[f64], seed: RngSeed) -> PresentEdgeMixture {
    let mut rng = seed.rng();
    let (_, gv) = global_moments(x);
    let sd = gv.sqrt();
    let w: f64 = 0.2 + 0.6 * rng.random::<f64>();
    let mut components = start.components;
    for c in components.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *c = match *c {
            WeightFamily::Gaussian { mu, sigma2 } => WeightFamily::Gaussian { mu: mu + 0.5 * sd * z, sigma2 },
            WeightFamily::TruncatedPoisson { lambda } => {
                WeightFamily::TruncatedPoisson { lambda: (lambda * (0.5 * z).exp()).max(RATE_FLOOR) }
            }
        };
    }
    PresentEdgeMixture { weights: [w, 1.0 - w], components }
}

fn run_em(
    x: &[f64],
    kind: FamilyKind,
    start: PresentEdgeMixture,
    opts: &PresentEdgeOptions,
    seed: RngSeed,
) -> Result<PresentEdgeFit> {
    let mut warnings = Vec::new();
    let mut state = EmState { mix: start, reinits: 0 };
    let (gm, gv) = global_moments(x);
    let mut rng = seed.rng();
    let mut loglik = present_edge_loglik(x, &state.mix)?;
    let mut trace = vec![loglik];
    let mut converged = false;
    let mut resp = [vec![0.0; x.len()], vec![0.0; x.len()]];

    for _ in 0..opts.max_iter {
        // E-step
        let lw = [state.mix.weights[0].ln(), state.mix.weights[1].ln()];
        for (i, &v) in x.iter().enumerate() {
            let a = lw[0] + state.mix.components[0].ln_density(v)?;
            let b = lw[1] + state.mix.components[1].ln_density(v)?;
            let m = log_add(a, b);
            let r0 = if m == f64::NEG_INFINITY { 0.5 } else { (a - m).exp() };
            resp[0][i] = r0;
            resp[1][i] = 1.0 - r0;
        }
        // M-step
        let mut next = state.mix;
        let n = x.len() as f64;
        let m0 = resp[0].iter().sum::<f64>();
        next.weights = [m0 / n, 1.0 - m0 / n];
        let mut collapsed = [false, false];
        for k in 0..2 {
            match fit_component(kind, x, &resp[k], &mut warnings)? {
                Some(c) => next.components[k] = c,
                None => collapsed[k] = true,
            }
        }
        if kind == FamilyKind::Gaussian && opts.shared_variance {
            let pooled = (0..2)
                .map(|k| {
                    let mu = next.components[k].mean();
                    x.iter().zip(&resp[k]).map(|(v, r)| r * (v - mu).powi(2)).sum::<f64>()
                })
                .sum::<f64>()
                / n;
            for c in next.components.iter_mut() {
                if let WeightFamily::Gaussian { sigma2, .. } = c {
                    *sigma2 = pooled;
                }
            }
        }
        for k in 0..2 {
            if let WeightFamily::Gaussian { sigma2, .. } = next.components[k] {
                if sigma2 < VARIANCE_FLOOR {
                    collapsed[k] = true;
                }
            }
        }
        for k in 0..2 {
            if !collapsed[k] {
                continue;
            }
            if kind == FamilyKind::Gaussian && gv >= VARIANCE_FLOOR && state.reinits < MAX_REINITS {
                state.reinits += 1;
                push_once(&mut warnings, "collapsed component restarted from the global fit".into());
                let z: f64 = StandardNormal.sample(&mut rng);
                next.components[k] = WeightFamily::Gaussian { mu: gm + 0.5 * gv.sqrt() * z, sigma2: gv };
                next.weights = [0.5, 0.5];
            } else {
                push_once(&mut warnings, "component variance hit the floor".into());
                next.components[k] = match next.components[k] {
                    WeightFamily::Gaussian { mu, sigma2 } => {
                        let mu = if sigma2.is_finite() && mu.is_finite() { mu } else { gm };
                        WeightFamily::Gaussian { mu, sigma2: sigma2.max(VARIANCE_FLOOR) }
                    }
                    other => other,
                };
                if next.weights[k] == 0.0 {
                    next.weights = [0.5, 0.5];
                }
            }
        }
        if let Some(w) = next.weights.iter_mut().find(|w| **w <= 0.0) {
            *w = 1e-12;
            let s = next.weights[0] + next.weights[1];
            next.weights = [next.weights[0] / s, next.weights[1] / s];
        }
        state.mix = next;
        let value = present_edge_loglik(x, &state.mix)?;
        trace.push(value);
        let change = (value - loglik).abs();
        loglik = value;
        if change <= opts.tol * loglik.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push("EM reached max_iter before the tolerance".into());
    }
    Ok(PresentEdgeFit {
        mixture: state.mix.canonical(),
        loglik,
        trace,
        converged,
        warnings,
    })
}

fn push_once(warnings: &mut Vec<String>, w: String) {
    if !warnings.contains(&w) {
        warnings.push(w);
    }
}

/// Two-component EM over the weights of present edges; best of several starts.
pub fn fit_present_edge_em(x: &[f64], kind: FamilyKind, opts: &PresentEdgeOptions) -> Result<PresentEdgeFit> {
    if x.len() < 2 {
        return Err(Error::Domain(format!("need at least 2 present edges, got {}", x.len())));
    }
    for &v in x {
        if v == 0.0 || !v.is_finite() {
            return Err(Error::Domain(format!("{v} is not a present-edge weight")));
        }
        if kind == FamilyKind::TruncatedPoisson {
            as_positive_count(v)?;
        }
    }
    let mut warnings = Vec::new();
    let base = match opts.init {
        Some(init) => init,
        None => quantile_split(kind, x, &mut warnings)?,
    };
    let runs: Vec<Result<PresentEdgeFit>> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let seed = opts.seed.derive(&[r as u64]);
            let start = if r == 0 { base } else { perturb(&base, x, seed.derive(&[1])) };
            run_em(x, kind, start, opts, seed)
        })
        .collect();
    let mut best: Option<PresentEdgeFit> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.loglik > b.loglik) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one restart");
    for w in warnings {
        push_once(&mut best.warnings, w);
    }
    Ok(best)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct WeightedOptions {
    pub triplet: TripletEmOptions,
    pub present: PresentEdgeOptions,
    pub latent: LatentOptions,
}

impl WeightedOptions {
    /// Derives all stage seeds from one seed.
    pub fn seeded(seed: RngSeed) -> Self {
        let mut o = WeightedOptions::default();
        o.triplet.seed = seed.derive(&[1]);
        o.present.seed = seed.derive(&[2]);
        o.latent.seed = seed.derive(&[3]);
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedFit {
    pub sparsity: SparsityModel,
    pub sparsity_fit: Option<TripletFit>,
    pub present: PresentEdgeFit,
    pub theta_in: WeightFamily,
    pub theta_out: WeightFamily,
    pub partition: NodePartition,
    pub pi_hat: GroupProportions,
    pub swap_choice: (u8, u8),
    pub criterion: f64,
    pub warnings: Vec<String>,
}

/// Sparsity stage, present-edge mixture, then latent structure with label-swap resolution.
pub fn fit_weighted(
    g: &WeightedGraph,
    q: usize,
    sparsity_kind: SparsityKind,
    family: FamilyKind,
    opts: &WeightedOptions,
) -> Result<WeightedFit> {
    if g.n() < 3 {
        return Err(Error::TooFewNodes { required: 3, actual: g.n() });
    }
    let x = g.present_weights();
    if x.is_empty() {
        return Err(Error::NoPresentEdges);
    }
    let mut warnings = Vec::new();
    let (sparsity, sparsity_fit) = match sparsity_kind {
        SparsityKind::Global => (SparsityModel::Global { p: estimate_global_sparsity(g)? }, None),
        SparsityKind::Affiliation => {
            let mut topts = opts.triplet.clone();
            topts.q = q.max(2);
            let (alpha, beta, fit) = estimate_affiliation_sparsity(g, &topts)?;
            warnings.extend(fit.warnings.iter().map(|w| format!("sparsity: {w}")));
            (SparsityModel::Affiliation { alpha, beta }, Some(fit))
        }
    };
    let present = fit_present_edge_em(&x, family, &opts.present)?;
    warnings.extend(present.warnings.iter().map(|w| format!("weights: {w}")));
    let pair = (present.mixture.components[0], present.mixture.components[1]);
    let latent = resolve_label_swap(g, sparsity, pair, q, &opts.latent)?;
    let swap = latent.swap_choice.unwrap_or((1, 2));
    // C^{u,v}: theta_u on cross-group pairs, theta_v on same-group pairs
    let (theta_out, theta_in) = if swap == (1, 2) { (pair.0, pair.1) } else { (pair.1, pair.0) };
    if latent.empty_groups {
        warnings.push("estimated partition has an empty group".into());
    }
    Ok(WeightedFit {
        sparsity,
        sparsity_fit,
        present,
        theta_in,
        theta_out,
        pi_hat: latent.pi_hat,
        partition: latent.partition,
        swap_choice: swap,
        criterion: latent.criterion_value,
        warnings,
    })
}
