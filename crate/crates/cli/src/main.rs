use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graphmix::bench::{preset, run_benchmark, BenchmarkConfig, ModelParams};
use graphmix::io::{
    normalized_laplacian_weights, parse_binary_edge_list, parse_matrix, parse_partition, parse_weighted_edge_list,
    symmetrize_mean, write_binary_edge_list, write_partition, write_weighted_edge_list, RunResultFile,
};
use graphmix::latent::BinaryCriterion;
use graphmix::{
    adjusted_rand_index, fit_moments, fit_triplet_em, fit_weighted, maximize_latent, sample_binary_graph,
    sample_weighted_graph, BinaryAffiliationParams, Error, ErrorKind, FamilyKind, GroupProportions, LatentOptions,
    MomentOptions, RngSeed, SparsityKind, SparsityModel, TripletEmOptions, WeightFamily, WeightedAffiliationParams,
    WeightedGraph, WeightedOptions,
};

#[derive(Parser)]
#[command(name = "graphmix", version, about = "Affiliation random-graph mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph and write it as a TSV edge list.
    Simulate(SimulateArgs),
    /// Fit a model to an edge list and write a JSON result.
    Estimate(EstimateArgs),
    /// Print the adjusted Rand index of two partition files.
    Evaluate(EvaluateArgs),
    /// Run a replicate study from a JSON config.
    Benchmark(BenchmarkArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Binary,
    Weighted,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    Gaussian,
    Tpoisson,
}

impl From<Family> for FamilyKind {
    fn from(f: Family) -> Self {
        match f {
            Family::Gaussian => FamilyKind::Gaussian,
            Family::Tpoisson => FamilyKind::TruncatedPoisson,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Sparsity {
    Global,
    Affiliation,
}

impl From<Sparsity> for SparsityKind {
    fn from(s: Sparsity) -> Self {
        match s {
            Sparsity::Global => SparsityKind::Global,
            Sparsity::Affiliation => SparsityKind::Affiliation,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Moments,
    TripletEm,
    Weighted,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Prep {
    None,
    Laplacian,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    /// TSV edge list.
    Edges,
    /// Square directed weight matrix, symmetrized by averaging.
    Matrix,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    /// model1, model2, model3, modelA, modelB or modelC.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum, default_value = "gaussian")]
    family: Family,
    #[arg(long)]
    mu_in: Option<f64>,
    #[arg(long)]
    sigma2_in: Option<f64>,
    #[arg(long)]
    mu_out: Option<f64>,
    #[arg(long)]
    sigma2_out: Option<f64>,
    #[arg(long)]
    lambda_in: Option<f64>,
    #[arg(long)]
    lambda_out: Option<f64>,
    /// Global presence probability of weighted edges.
    #[arg(long)]
    p: Option<f64>,
    /// Within-group presence probability (affiliation sparsity).
    #[arg(long)]
    p_in: Option<f64>,
    /// Between-group presence probability (affiliation sparsity).
    #[arg(long)]
    p_out: Option<f64>,
    #[arg(long, default_value_t = 2)]
    q: usize,
    #[arg(long)]
    n: usize,
    /// `equal` or comma-separated proportions.
    #[arg(long, default_value = "equal")]
    pi: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the sampled partition.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long, value_enum, default_value = "global")]
    sparsity: Sparsity,
    #[arg(long, value_enum, default_value = "gaussian")]
    family: Family,
    #[arg(long, default_value_t = 2)]
    q: usize,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "edges")]
    input_format: InputFormat,
    /// Preprocessing of weighted input.
    #[arg(long, value_enum, default_value = "none")]
    prep: Prep,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Restarts for every stage; stage defaults otherwise.
    #[arg(long)]
    restarts: Option<usize>,
    /// Result file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the recovered partition.
    #[arg(long)]
    partition_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    pred: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    config: PathBuf,
    /// JSON report.
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV summary, one row per method and size.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn parse_pi(text: &str, q: usize) -> Result<Option<GroupProportions>, Error> {
    if text == "equal" {
        return Ok(None);
    }
    let values = text
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| usage(format!("bad proportion {v:?}"))))
        .collect::<Result<Vec<f64>, Error>>()?;
    let pi = GroupProportions::new(values)?;
    if pi.q() != q {
        return Err(usage(format!("{} proportions given for q = {q}", pi.q())));
    }
    Ok(Some(pi))
}

fn need(v: Option<f64>, flag: &str) -> Result<f64, Error> {
    v.ok_or_else(|| usage(format!("--{flag} is required")))
}

fn simulation_params(a: &SimulateArgs) -> Result<ModelParams, Error> {
    let pi = parse_pi(&a.pi, a.q)?;
    let mut params = match &a.preset {
        Some(name) => preset(name, a.q, pi)?,
        None => {
            let pi = pi.unwrap_or_else(|| GroupProportions::uniform(a.q));
            match a.kind.unwrap_or(Kind::Binary) {
                Kind::Binary => ModelParams::Binary(BinaryAffiliationParams::new(
                    pi,
                    need(a.alpha, "alpha")?,
                    need(a.beta, "beta")?,
                )?),
                Kind::Weighted => {
                    let (theta_in, theta_out) = match a.family {
                        Family::Gaussian => (
                            WeightFamily::gaussian(need(a.mu_in, "mu-in")?, need(a.sigma2_in, "sigma2-in")?)?,
                            WeightFamily::gaussian(need(a.mu_out, "mu-out")?, need(a.sigma2_out, "sigma2-out")?)?,
                        ),
                        Family::Tpoisson => (
                            WeightFamily::truncated_poisson(need(a.lambda_in, "lambda-in")?)?,
                            WeightFamily::truncated_poisson(need(a.lambda_out, "lambda-out")?)?,
                        ),
                    };
                    let sparsity = match (a.p_in, a.p_out) {
                        (Some(pi_), Some(po)) => SparsityModel::affiliation(pi_, po)?,
                        (None, None) => SparsityModel::global(a.p.unwrap_or(graphmix::bench::DEFAULT_WEIGHTED_SPARSITY))?,
                        _ => return Err(usage("--p-in and --p-out go together")),
                    };
                    ModelParams::Weighted(WeightedAffiliationParams::new(pi, sparsity, theta_in, theta_out)?)
                }
            }
        }
    };
    if let ModelParams::Weighted(w) = &mut params {
        if a.preset.is_some() {
            if let Some(p) = a.p {
                w.sparsity = SparsityModel::global(p)?;
            }
        }
    }
    let kind = match params {
        ModelParams::Binary(_) => Kind::Binary,
        ModelParams::Weighted(_) => Kind::Weighted,
    };
    if a.kind.is_some_and(|k| k != kind) {
        return Err(usage("--kind does not match the preset"));
    }
    Ok(params)
}

fn simulate(a: SimulateArgs) -> Result<(), Error> {
    let params = simulation_params(&a)?;
    let seed = RngSeed(a.seed);
    let (text, truth) = match &params {
        ModelParams::Binary(p) => {
            let (g, z) = sample_binary_graph(p, a.n, seed)?;
            (write_binary_edge_list(&g), z)
        }
        ModelParams::Weighted(p) => {
            let (g, z) = sample_weighted_graph(p, a.n, seed)?;
            (write_weighted_edge_list(&g), z)
        }
    };
    write(&a.out, &text)?;
    if let Some(path) = &a.truth {
        write(path, &write_partition(&truth))?;
    }
    Ok(())
}

fn load_weighted(a: &EstimateArgs) -> Result<WeightedGraph, Error> {
    let text = read(&a.input)?;
    let g = match a.input_format {
        InputFormat::Edges => parse_weighted_edge_list(&text)?,
        InputFormat::Matrix => symmetrize_mean(&parse_matrix(&text)?)?,
    };
    match a.prep {
        Prep::None => Ok(g),
        Prep::Laplacian => normalized_laplacian_weights(&g),
    }
}

fn family_estimates(suffix: &str, f: &WeightFamily, r: &mut RunResultFile) {
    match *f {
        WeightFamily::Gaussian { mu, sigma2 } => {
            r.estimates.insert(format!("mu_{suffix}"), mu);
            r.estimates.insert(format!("sigma2_{suffix}"), sigma2);
        }
        WeightFamily::TruncatedPoisson { lambda } => {
            r.estimates.insert(format!("lambda_{suffix}"), lambda);
        }
    }
}

fn estimate(a: EstimateArgs) -> Result<(), Error> {
    let seed = RngSeed(a.seed);
    let binary_input = || -> Result<_, Error> {
        if a.input_format != InputFormat::Edges || a.prep != Prep::None {
            return Err(usage("--input-format and --prep apply to the weighted method"));
        }
        parse_binary_edge_list(&read(&a.input)?)
    };
    let result = match a.method {
        Method::Moments => {
            let g = binary_input()?;
            let mut opts = MomentOptions { seed, ..Default::default() };
            if let Some(r) = a.restarts {
                opts.restarts = r;
            }
            let fit = fit_moments(&g, a.q, &opts)?;
            let mut r = RunResultFile::new("moments", g.n(), a.q, a.seed);
            r.estimates.insert("alpha".into(), fit.alpha);
            r.estimates.insert("beta".into(), fit.beta);
            r.criterion = Some(fit.criterion);
            r.pi_hat = Some(fit.pi_hat.as_slice().to_vec());
            r.set_partition(&fit.partition);
            r.warnings = fit.warnings;
            r
        }
        Method::TripletEm => {
            let g = binary_input()?;
            let mut opts = TripletEmOptions { seed: seed.derive(&[1]), q: a.q, ..Default::default() };
            if let Some(rs) = a.restarts {
                opts.restarts = rs;
            }
            let fit = fit_triplet_em(&g, &opts)?;
            let mut r = RunResultFile::new("triplet-em", g.n(), a.q, a.seed);
            r.estimates.insert("alpha".into(), fit.params.alpha);
            r.estimates.insert("beta".into(), fit.params.beta);
            for (k, v) in fit.params.gamma.iter().enumerate() {
                r.estimates.insert(format!("gamma{}", k + 1), *v);
            }
            r.loglik = Some(fit.loglik);
            r.pi_hat = fit.pi_hat.as_ref().map(|p| p.as_slice().to_vec());
            r.warnings = fit.warnings;
            let mut lo = LatentOptions { seed: seed.derive(&[2]), ..Default::default() };
            if let Some(rs) = a.restarts {
                lo.restarts = rs;
            }
            let c = BinaryCriterion::new(&g, fit.params.alpha, fit.params.beta)?;
            let z = maximize_latent(&c, a.q, &lo)?;
            r.criterion = Some(z.criterion_value);
            r.set_partition(&z.partition);
            if r.pi_hat.is_none() {
                r.pi_hat = Some(z.pi_hat.as_slice().to_vec());
            }
            r
        }
        Method::Weighted => {
            let g = load_weighted(&a)?;
            let mut opts = WeightedOptions::seeded(seed);
            opts.triplet.q = a.q;
            if let Some(rs) = a.restarts {
                opts.triplet.restarts = rs;
                opts.present.restarts = rs;
                opts.latent.restarts = rs;
            }
            let fit = fit_weighted(&g, a.q, a.sparsity.into(), a.family.into(), &opts)?;
            let mut r = RunResultFile::new("weighted", g.n(), a.q, a.seed);
            match fit.sparsity {
                SparsityModel::Global { p } => {
                    r.estimates.insert("p".into(), p);
                }
                SparsityModel::Affiliation { alpha, beta } => {
                    r.estimates.insert("p_in".into(), alpha);
                    r.estimates.insert("p_out".into(), beta);
                }
            }
            family_estimates("in", &fit.theta_in, &mut r);
            family_estimates("out", &fit.theta_out, &mut r);
            r.loglik = Some(fit.present.loglik);
            r.criterion = Some(fit.criterion);
            r.pi_hat = Some(fit.pi_hat.as_slice().to_vec());
            r.set_partition(&fit.partition);
            r.swap_choice = Some(fit.swap_choice);
            r.warnings = fit.warnings;
            if let Some(path) = &a.partition_out {
                write(path, &write_partition(&fit.partition))?;
            }
            r
        }
    };
    if a.method != Method::Weighted {
        if let (Some(path), Some(z)) = (&a.partition_out, &result.partition) {
            let labels = z.iter().map(|g| g - 1).collect();
            write(path, &write_partition(&graphmix::NodePartition::new(labels, a.q)?))?;
        }
    }
    let json = result.to_json();
    match &a.out {
        Some(path) => write(path, &json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn evaluate(a: EvaluateArgs) -> Result<(), Error> {
    let truth = parse_partition(&read(&a.truth)?, None)?;
    let pred = parse_partition(&read(&a.pred)?, None)?;
    println!("{:?}", adjusted_rand_index(&truth, &pred)?);
    Ok(())
}

fn benchmark(a: BenchmarkArgs) -> Result<(), Error> {
    let config = BenchmarkConfig::from_json(&read(&a.config)?)?;
    let report = run_benchmark(&config)?;
    write(&a.out, &(report.to_json() + "\n"))?;
    if let Some(path) = &a.csv {
        write(path, &report.to_csv())?;
    }
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Solver => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Benchmark(a) => benchmark(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        assert_eq!(exit_code(Error::ZeroDensity.kind()), 3);
        assert_eq!(exit_code(Error::DegenerateDenominator("m1^2 - m2").kind()), 3);
        assert_eq!(exit_code(Error::NewtonFailure(2.0).kind()), 3);
        assert_eq!(exit_code(Error::SelfLoop { line: 1, node: 1 }.kind()), 2);
        assert_eq!(exit_code(Error::Domain("x".into()).kind()), 2);
        assert_eq!(exit_code(Error::UnknownPreset("x".into()).kind()), 1);
    }

    #[test]
    fn proportions_flag() {
        assert_eq!(parse_pi("equal", 3).unwrap(), None);
        assert_eq!(parse_pi("0.7,0.3", 2).unwrap().unwrap().as_slice(), &[0.7, 0.3]);
        assert!(parse_pi("0.7,0.3", 3).is_err());
        assert!(parse_pi("a,b", 2).is_err());
    }
}
