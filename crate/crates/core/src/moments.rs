//! Closed-form inversion of the edge/wedge/triangle moments and the iterative
//! moments estimator that alternates between parameters and partition.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{maximize_latent, BinaryCriterion, LatentOptions};
use crate::model::{clamp_probability, BinaryGraph, GroupProportions, NodePartition};
use crate::rng::RngSeed;
use crate::triad::{empirical_moments, MomentTriple};

const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "branch", rename_all = "snake_case")]
pub enum MomentSolveBranch {
    UnequalProportions,
    EqualProportions { q: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSolution {
    pub alpha: f64,
    pub beta: f64,
    /// Set when either value had to be clamped into `[DELTA, 1 - DELTA]`.
    pub clamped: bool,
}

fn clamp_pair(alpha: f64, beta: f64) -> MomentSolution {
    let (a, ca) = clamp_probability(alpha);
    let (b, cb) = clamp_probability(beta);
    MomentSolution { alpha: a, beta: b, clamped: ca || cb }
}

/// Unclamped rational inversion for unequal proportions.
pub fn invert_unequal(m: &MomentTriple, s2: f64, s3: f64) -> Result<(f64, f64)> {
    let spread = m.m1 * m.m1 - m.m2;
    if spread.abs() < DEGENERACY_TOL {
        return Err(Error::DegenerateDenominator("m1^2 - m2"));
    }
    let shape = 2.0 * s2.powi(3) - 3.0 * s3 * s2 + s3;
    if shape.abs() < DEGENERACY_TOL {
        return Err(Error::DegenerateDenominator("2 s2^3 - 3 s3 s2 + s3"));
    }
    let numerator = (s3 - s2 * s3) * m.m1.powi(3) + (s2.powi(3) - s3) * m.m2 * m.m1
        + (s3 * s2 - s2.powi(3)) * m.m3;
    let beta = numerator / (spread * shape);
    let alpha = (m.m1 + (s2 - 1.0) * beta) / s2;
    Ok((alpha, beta))
}

/// Unclamped inversion for `q` equal groups.
pub fn invert_equal(m: &MomentTriple, q: usize) -> (f64, f64) {
    let qf = q as f64;
    let beta = m.m1 + ((m.m1.powi(3) - m.m3) / (qf - 1.0)).cbrt();
    let alpha = qf * m.m1 + (1.0 - qf) * beta;
    (alpha, beta)
}

pub fn solve_unequal(m: &MomentTriple, s2: f64, s3: f64) -> Result<MomentSolution> {
    let (a, b) = invert_unequal(m, s2, s3)?;
    Ok(clamp_pair(a, b))
}

pub fn solve_equal(m: &MomentTriple, q: usize) -> Result<MomentSolution> {
    if q < 2 {
        return Err(Error::InvalidParameter("equal-proportion inversion needs q >= 2".into()));
    }
    let (a, b) = invert_equal(m, q);
    Ok(clamp_pair(a, b))
}

/// Moments estimate when the proportions are known in advance.
pub fn estimate_with_known_pi(g: &BinaryGraph, pi: &GroupProportions) -> Result<(MomentSolution, MomentSolveBranch)> {
    let m = empirical_moments(g)?;
    if pi.is_uniform() {
        let branch = MomentSolveBranch::EqualProportions { q: pi.q() };
        Ok((solve_equal(&m, pi.q())?, branch))
    } else {
        Ok((solve_unequal(&m, pi.s2(), pi.s3())?, MomentSolveBranch::UnequalProportions))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentOptions {
    /// Branch gate on `|m2 - m1^2|`; `None` means `max(1e-4, 1/n)`.
    pub epsilon: Option<f64>,
    pub restarts: usize,
    /// Cap on parameter/partition alternations per restart.
    pub max_sweeps: usize,
    pub seed: RngSeed,
    /// Cap on single-node updates inside each latent-structure step, in units of `n`.
    pub latent_max_sweeps: usize,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions {
            epsilon: None,
            restarts: 5,
            max_sweeps: 50,
            seed: RngSeed(0),
            latent_max_sweeps: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTraceStep {
    pub restart: usize,
    pub iteration: usize,
    pub alpha: f64,
    pub beta: f64,
    pub branch: MomentSolveBranch,
    pub criterion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentFit {
    pub alpha: f64,
    pub beta: f64,
    pub partition: NodePartition,
    pub pi_hat: GroupProportions,
    pub moments: MomentTriple,
    pub branch: MomentSolveBranch,
    pub criterion: f64,
    pub converged: bool,
    pub trace: Vec<MomentTraceStep>,
    pub warnings: Vec<String>,
}

struct RestartRun {
    fit: MomentFit,
}

pub fn default_epsilon(n: usize) -> f64 {
    f64::max(1e-4, 1.0 / n as f64)
}

/// Iterative moments estimator: parameters from the current partition's
/// proportions, then a latent-structure update, until the partition settles.
pub fn fit_moments(g: &BinaryGraph, q: usize, opts: &MomentOptions) -> Result<MomentFit> {
    if q < 2 {
        return Err(Error::InvalidParameter("moments estimator needs q >= 2".into()));
    }
    let m = empirical_moments(g)?;
    let eps = opts.epsilon.unwrap_or_else(|| default_epsilon(g.n()));
    let runs: Vec<Result<RestartRun>> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| run_restart(g, q, &m, eps, r, opts))
        .collect();

    let mut best: Option<MomentFit> = None;
    let mut trace = Vec::new();
    for run in runs {
        let run = run?;
        trace.extend(run.fit.trace.iter().cloned());
        let better = best.as_ref().is_none_or(|b| run.fit.criterion > b.criterion);
        if better {
            best = Some(run.fit);
        }
    }
    let mut best = best.expect("at least one restart");
    best.trace = trace;
    Ok(best)
}

fn run_restart(
    g: &BinaryGraph,
    q: usize,
    m: &MomentTriple,
    eps: f64,
    restart: usize,
    opts: &MomentOptions,
) -> Result<RestartRun> {
    use rand::Rng;
    let n = g.n();
    let seed = opts.seed.derive(&[restart as u64]);
    let mut rng = seed.rng();
    let mut z = NodePartition::from_raw((0..n).map(|_| rng.random_range(0..q)).collect(), q);
    let mut warnings = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut last = None;

    for iteration in 0..opts.max_sweeps.max(1) {
        let pi = z.frequencies();
        let (sol, branch) = if (m.m2 - m.m1 * m.m1).abs() < eps {
            (solve_equal(m, q)?, MomentSolveBranch::EqualProportions { q })
        } else {
            match solve_unequal(m, pi.s2(), pi.s3()) {
                Ok(s) => (s, MomentSolveBranch::UnequalProportions),
                Err(Error::DegenerateDenominator(what)) => {
                    push_once(&mut warnings, format!("degenerate {what}; used equal-proportion inversion"));
                    (solve_equal(m, q)?, MomentSolveBranch::EqualProportions { q })
                }
                Err(e) => return Err(e),
            }
        };
        if sol.clamped {
            push_once(&mut warnings, "parameter estimate clamped to [delta, 1 - delta]".into());
        }
        let criterion = BinaryCriterion::new(g, sol.alpha, sol.beta)?;
        let latent = maximize_latent(
            &criterion,
            q,
            &LatentOptions {
                restarts: 1,
                max_sweeps: opts.latent_max_sweeps,
                seed: seed.derive(&[iteration as u64]),
                init: Some(z.clone()),
            },
        )?;
        trace.push(MomentTraceStep {
            restart,
            iteration,
            alpha: sol.alpha,
            beta: sol.beta,
            branch,
            criterion: latent.criterion_value,
        });
        let settled = latent.partition == z;
        z = latent.partition;
        last = Some((sol, branch, latent.criterion_value));
        if settled {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push("partition did not settle within max_sweeps".into());
    }
    let (sol, branch, criterion) = last.expect("at least one iteration");
    let pi_hat = z.frequencies();
    if pi_hat.as_slice().contains(&0.0) {
        push_once(&mut warnings, "estimated partition has an empty group".into());
    }
    Ok(RestartRun {
        fit: MomentFit {
            alpha: sol.alpha,
            beta: sol.beta,
            partition: z,
            pi_hat,
            moments: *m,
            branch,
            criterion,
            converged,
            trace,
            warnings,
        },
    })
}

fn push_once(warnings: &mut Vec<String>, w: String) {
    if !warnings.contains(&w) {
        warnings.push(w);
    }
}
