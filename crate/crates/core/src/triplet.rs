//! Composite-likelihood EM over node triplets.
//!
//! Each ordered triplet `(i, j, k)` contributes the pattern
//! `(X_ij, X_ik, X_jk)`, distributed as a five-component constrained
//! Bernoulli mixture. Posteriors only depend on the observed pattern, so the
//! whole EM runs on eight pattern counts derived from the triad census.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{clamp_probability, BinaryGraph, GroupProportions, DELTA};
use crate::moments::invert_equal;
use crate::rng::RngSeed;
use crate::triad::{census_from_counts, moments_from_counts, subgraph_counts, TriadCensus};

/// Whether marginal `j` of component `k` uses `alpha` (true) or `beta`.
/// Marginals are ordered `(X_12, X_13, X_23)`.
pub const COMPONENT_LAYOUT: [[bool; 3]; 5] = [
    [true, true, true],
    [false, false, true],
    [false, true, false],
    [true, false, false],
    [false, false, false],
];

/// Pattern `r` encodes `(x12, x13, x23)` as `x12 << 2 | x13 << 1 | x23`.
pub fn pattern_bits(r: usize) -> [bool; 3] {
    [r & 4 != 0, r & 2 != 0, r & 1 != 0]
}

pub fn pattern_index(x: [bool; 3]) -> usize {
    (x[0] as usize) << 2 | (x[1] as usize) << 1 | x[2] as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletMixtureParams {
    pub gamma: [f64; 5],
    pub alpha: f64,
    pub beta: f64,
}

impl TripletMixtureParams {
    pub fn new(gamma: [f64; 5], alpha: f64, beta: f64) -> Result<Self> {
        if gamma.iter().any(|&g| !(g >= 0.0)) || (gamma.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("gamma {gamma:?} is not on the simplex")));
        }
        for (name, p) in [("alpha", alpha), ("beta", beta)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} = {p} is not in [0, 1]")));
            }
        }
        Ok(TripletMixtureParams { gamma, alpha, beta })
    }

    fn component_prob(&self, k: usize, x: [bool; 3]) -> f64 {
        COMPONENT_LAYOUT[k]
            .iter()
            .zip(x)
            .map(|(&uses_alpha, xj)| {
                let p = if uses_alpha { self.alpha } else { self.beta };
                if xj {
                    p
                } else {
                    1.0 - p
                }
            })
            .product()
    }
}

/// Mixture weights implied by group proportions.
pub fn gamma_from_pi(pi: &GroupProportions) -> [f64; 5] {
    gamma_from_power_sums(pi.s2(), pi.s3())
}

fn gamma_from_power_sums(s2: f64, s3: f64) -> [f64; 5] {
    let mixed = s2 - s3;
    [s3, mixed, mixed, mixed, 1.0 - 3.0 * s2 + 2.0 * s3]
}

fn gamma_distance(pi: &[f64], gamma: &[f64; 5]) -> f64 {
    let s2: f64 = pi.iter().map(|p| p * p).sum();
    let s3: f64 = pi.iter().map(|p| p * p * p).sum();
    gamma_from_power_sums(s2, s3)
        .iter()
        .zip(gamma)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Inverts [`gamma_from_pi`] for two or three groups, failing when no
/// proportions reproduce `gamma` within `1e-6`.
pub fn pi_from_gamma(gamma: &[f64; 5], q: usize) -> Result<(GroupProportions, f64)> {
    pi_from_gamma_with_tol(gamma, q, 1e-6)
}

/// Least-squares inversion; the returned residual is the Euclidean distance
/// between `gamma` and the weights implied by the returned proportions.
pub fn pi_from_gamma_with_tol(gamma: &[f64; 5], q: usize, tol: f64) -> Result<(GroupProportions, f64)> {
    let (pi, residual) = match q {
        2 => invert_two(gamma),
        3 => invert_three(gamma),
        _ => {
            return Err(Error::InvalidParameter(format!(
                "proportions are identifiable from gamma only for 2 or 3 groups, not {q}"
            )))
        }
    };
    if residual > tol {
        return Err(Error::NoValidProportions { residual });
    }
    Ok((GroupProportions::new(pi)?, residual))
}

fn implied_power_sums(gamma: &[f64; 5]) -> (f64, f64) {
    let s3 = gamma[0];
    let s2 = s3 + (gamma[1] + gamma[2] + gamma[3]) / 3.0;
    (s2, s3)
}

fn invert_two(gamma: &[f64; 5]) -> (Vec<f64>, f64) {
    let f = |p: f64| gamma_distance(&[p, 1.0 - p], gamma);
    let (s2, _) = implied_power_sums(gamma);
    let analytic = (1.0 + (2.0 * s2 - 1.0).max(0.0).sqrt()) / 2.0;
    let analytic = analytic.clamp(0.5, 1.0);

    let grid = 2000;
    let mut best = (0.5, f(0.5));
    for k in 1..=grid {
        let p = 0.5 + 0.5 * k as f64 / grid as f64;
        let v = f(p);
        if v < best.1 {
            best = (p, v);
        }
    }
    let h = 0.5 / grid as f64;
    let refined = golden_section(&f, (best.0 - h).max(0.5), (best.0 + h).min(1.0));
    let p = [analytic, refined]
        .into_iter()
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .expect("two candidates");
    (vec![p, 1.0 - p], f(p))
}

fn golden_section<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    for _ in 0..200 {
        if (b - a).abs() < 1e-15 {
            break;
        }
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - ratio * (b - a);
        d = a + ratio * (b - a);
    }
    (a + b) / 2.0
}

fn invert_three(gamma: &[f64; 5]) -> (Vec<f64>, f64) {
    let f = |p: &[f64; 2]| {
        let p3 = 1.0 - p[0] - p[1];
        if p[0] < 0.0 || p[1] < 0.0 || p3 < 0.0 {
            f64::INFINITY
        } else {
            gamma_distance(&[p[0], p[1], p3], gamma)
        }
    };
    let mut candidates: Vec<[f64; 2]> = Vec::new();
    if let Some(roots) = cubic_proportions(gamma) {
        candidates.push([roots[0], roots[1]]);
    }
    let mut coarse = ([1.0, 0.0], f64::INFINITY);
    let steps = 300;
    for a in 0..=steps {
        for b in 0..=steps - a {
            let p = [a as f64 / steps as f64, b as f64 / steps as f64];
            let v = f(&p);
            if v < coarse.1 {
                coarse = (p, v);
            }
        }
    }
    candidates.push(coarse.0);

    let mut best = ([1.0, 0.0], f64::INFINITY);
    for c in candidates {
        let p = pattern_search(&f, c, 1.0 / steps as f64);
        let v = f(&p);
        if v < best.1 {
            best = (p, v);
        }
    }
    let mut pi = vec![best.0[0], best.0[1], (1.0 - best.0[0] - best.0[1]).max(0.0)];
    pi.sort_by(|a, b| b.total_cmp(a));
    let residual = gamma_distance(&pi, gamma);
    (pi, residual)
}

/// Roots of `x^3 - x^2 + e2 x - e3` whose power sums match `gamma`, when real and nonnegative.
fn cubic_proportions(gamma: &[f64; 5]) -> Option<[f64; 3]> {
    let (s2, s3) = implied_power_sums(gamma);
    let e2 = (1.0 - s2) / 2.0;
    let e3 = (s3 - s2 + e2) / 3.0;
    // x = t + 1/3 gives t^3 + p t + c = 0
    let p = e2 - 1.0 / 3.0;
    let c = -2.0 / 27.0 + e2 / 3.0 - e3;
    let roots = if p.abs() < 1e-14 {
        let t = (-c).cbrt();
        [t, t, t]
    } else if p < 0.0 {
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * c / (p * r)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        let tau = 2.0 * std::f64::consts::PI / 3.0;
        [r * phi.cos(), r * (phi - tau).cos(), r * (phi - 2.0 * tau).cos()]
    } else {
        return None;
    };
    let mut x = roots.map(|t| t + 1.0 / 3.0);
    if x.iter().any(|&v| v < -1e-9) {
        return None;
    }
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    x.sort_by(|a, b| b.total_cmp(a));
    Some(x)
}

fn pattern_search<F: Fn(&[f64; 2]) -> f64>(f: &F, start: [f64; 2], step: f64) -> [f64; 2] {
    let mut x = start;
    let mut fx = f(&x);
    let mut h = step;
    while h > 1e-15 {
        let mut improved = false;
        for (dx, dy) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
            let y = [x[0] + dx * h, x[1] + dy * h];
            let fy = f(&y);
            if fy < fx {
                x = y;
                fx = fy;
                improved = true;
            }
        }
        if !improved {
            h /= 2.0;
        }
    }
    x
}

/// Probability of one triplet pattern under the constrained mixture.
pub fn triplet_density(x: [bool; 3], params: &TripletMixtureParams) -> f64 {
    (0..5).map(|k| params.gamma[k] * params.component_prob(k, x)).sum()
}

/// Ordered-triplet counts of the eight patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPatternCounts {
    pub counts: [u64; 8],
}

impl LabeledPatternCounts {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Spreads each unordered triad over its six orderings.
pub fn pattern_counts(census: &TriadCensus) -> LabeledPatternCounts {
    let mut counts = [0u64; 8];
    for (r, c) in counts.iter_mut().enumerate() {
        *c = match pattern_bits(r).iter().filter(|&&b| b).count() {
            0 => 6 * census.t0,
            1 => 2 * census.t1,
            2 => 2 * census.t2,
            _ => 6 * census.t3,
        };
    }
    LabeledPatternCounts { counts }
}

/// Posterior over the five components for each of the eight patterns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternPosterior {
    pub tau: [[f64; 5]; 8],
}

pub fn e_step(counts: &LabeledPatternCounts, params: &TripletMixtureParams) -> Result<PatternPosterior> {
    let mut tau = [[0.0; 5]; 8];
    for (r, row) in tau.iter_mut().enumerate() {
        let x = pattern_bits(r);
        for (k, t) in row.iter_mut().enumerate() {
            *t = params.gamma[k] * params.component_prob(k, x);
        }
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|t| *t /= total);
        } else if counts.counts[r] > 0 {
            return Err(Error::ZeroDensity);
        } else {
            *row = params.gamma;
        }
    }
    Ok(PatternPosterior { tau })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MStepOutcome {
    pub params: TripletMixtureParams,
    /// A denominator vanished and the previous value was kept.
    pub held_alpha: bool,
    pub held_beta: bool,
    pub clamped: bool,
}

pub fn m_step(
    counts: &LabeledPatternCounts,
    tau: &PatternPosterior,
    previous: &TripletMixtureParams,
) -> MStepOutcome {
    let total = counts.total() as f64;
    let mut weight = [0.0; 5];
    let (mut a_hits, mut a_trials, mut b_hits, mut b_trials) = (0.0, 0.0, 0.0, 0.0);
    for r in 0..8 {
        let c = counts.counts[r] as f64;
        if c == 0.0 {
            continue;
        }
        let x = pattern_bits(r);
        for k in 0..5 {
            let w = c * tau.tau[r][k];
            weight[k] += w;
            for j in 0..3 {
                let hit = if x[j] { w } else { 0.0 };
                if COMPONENT_LAYOUT[k][j] {
                    a_hits += hit;
                    a_trials += w;
                } else {
                    b_hits += hit;
                    b_trials += w;
                }
            }
        }
    }
    let mixed = (weight[1] + weight[2] + weight[3]) / (3.0 * total);
    let gamma = [weight[0] / total, mixed, mixed, mixed, weight[4] / total];

    let held_alpha = !(a_trials > 0.0);
    let held_beta = !(b_trials > 0.0);
    let (alpha, ca) = if held_alpha { (previous.alpha, false) } else { clamp_probability(a_hits / a_trials) };
    let (beta, cb) = if held_beta { (previous.beta, false) } else { clamp_probability(b_hits / b_trials) };
    MStepOutcome {
        params: TripletMixtureParams { gamma, alpha, beta },
        held_alpha,
        held_beta,
        clamped: ca || cb,
    }
}

pub fn composite_loglik_triplets(counts: &LabeledPatternCounts, params: &TripletMixtureParams) -> Result<f64> {
    let mut total = 0.0;
    for r in 0..8 {
        let c = counts.counts[r];
        if c == 0 {
            continue;
        }
        let d = triplet_density(pattern_bits(r), params);
        if !(d > 0.0) {
            return Err(Error::ZeroDensity);
        }
        total += c as f64 * d.ln();
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TripletEmOptions {
    pub restarts: usize,
    /// Relative change in composite log-likelihood that stops EM.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: RngSeed,
    /// Group count used for the moment warm start and for recovering `pi`.
    pub q: usize,
    /// Replaces the moment warm start of restart 0.
    #[serde(default)]
    pub init: Option<TripletMixtureParams>,
}

impl Default for TripletEmOptions {
    fn default() -> Self {
        TripletEmOptions {
            restarts: 10,
            tol: 1e-8,
            max_iter: 1000,
            seed: RngSeed(0),
            q: 2,
            init: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletEmRun {
    pub params: TripletMixtureParams,
    pub loglik: f64,
    /// Composite log-likelihood before the first and after every iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletFit {
    pub params: TripletMixtureParams,
    pub pi_hat: Option<GroupProportions>,
    pub pi_residual: Option<f64>,
    pub loglik: f64,
    pub trace: Vec<f64>,
    pub converged: bool,
    /// `alpha` and `beta` are too close for the mixture weights to be identified.
    pub near_nonidentifiable: bool,
    pub best_restart: usize,
    pub warnings: Vec<String>,
}

/// EM from one starting point.
pub fn run_triplet_em(
    counts: &LabeledPatternCounts,
    init: TripletMixtureParams,
    tol: f64,
    max_iter: usize,
) -> Result<TripletEmRun> {
    let mut params = init;
    params.alpha = clamp_probability(params.alpha).0;
    params.beta = clamp_probability(params.beta).0;
    let mut loglik = composite_loglik_triplets(counts, &params)?;
    let mut trace = vec![loglik];
    let mut converged = false;
    let mut clamped = false;
    for _ in 0..max_iter {
        let tau = e_step(counts, &params)?;
        let step = m_step(counts, &tau, &params);
        clamped |= step.clamped;
        params = step.params;
        let next = composite_loglik_triplets(counts, &params)?;
        trace.push(next);
        let change = (next - loglik).abs();
        loglik = next;
        if change <= tol * loglik.abs() {
            converged = true;
            break;
        }
    }
    Ok(TripletEmRun { params, loglik, trace, converged, clamped })
}

fn random_start(seed: RngSeed) -> TripletMixtureParams {
    let mut rng = seed.rng();
    let mut draw = || DELTA + (1.0 - 2.0 * DELTA) * rng.random::<f64>();
    let alpha = draw();
    let beta = draw();
    let e: Vec<f64> = (0..5).map(|_| Exp1.sample(&mut rng)).collect::<Vec<f64>>();
    let total: f64 = e.iter().sum();
    let mixed = (e[1] + e[2] + e[3]) / (3.0 * total);
    TripletMixtureParams {
        gamma: [e[0] / total, mixed, mixed, mixed, e[4] / total],
        alpha,
        beta,
    }
}

/// Residual of the `gamma` to `pi` inversion above which `gamma` counts as unattainable.
pub const PI_ATTAINABLE_TOL: f64 = 1e-2;

/// Gap `|alpha - beta|` below which the fit is reported as non-identifiable.
pub const IDENTIFIABILITY_GAP: f64 = 0.05;

pub fn fit_triplet_em(g: &BinaryGraph, opts: &TripletEmOptions) -> Result<TripletFit> {
    if g.n() < 3 {
        return Err(Error::TooFewNodes { required: 3, actual: g.n() });
    }
    let q = opts.q.max(1);
    let sub = subgraph_counts(g);
    let counts = pattern_counts(&census_from_counts(&sub));
    let moments = moments_from_counts(&sub);

    let warm = opts.init.unwrap_or_else(|| {
        let (alpha, beta) = if q >= 2 { invert_equal(&moments, q) } else { (moments.m1, moments.m1) };
        TripletMixtureParams {
            gamma: gamma_from_pi(&GroupProportions::uniform(q)),
            alpha: clamp_probability(if alpha.is_finite() { alpha } else { moments.m1 }).0,
            beta: clamp_probability(if beta.is_finite() { beta } else { moments.m1 }).0,
        }
    });

    let runs: Vec<Result<TripletEmRun>> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 { warm } else { random_start(opts.seed.derive(&[r as u64])) };
            run_triplet_em(&counts, start, opts.tol, opts.max_iter)
        })
        .collect();

    // The pattern counts only carry the triad census, so the likelihood is flat
    // along a curve of (gamma, alpha, beta). Runs whose gamma some Q-group pi
    // reproduces are preferred; the likelihood ranks within each class.
    let attainable = |params: &TripletMixtureParams| {
        !(2..=3).contains(&q)
            || pi_from_gamma_with_tol(&params.gamma, q, f64::INFINITY).is_ok_and(|(_, res)| res <= PI_ATTAINABLE_TOL)
    };
    let mut best: Option<(bool, usize, TripletEmRun)> = None;
    for (r, run) in runs.into_iter().enumerate() {
        let run = match run {
            Ok(run) => run,
            Err(Error::ZeroDensity) => continue,
            Err(e) => return Err(e),
        };
        let ok = attainable(&run.params);
        let better = match &best {
            None => true,
            Some((best_ok, _, b)) => (ok && !best_ok) || (ok == *best_ok && run.loglik > b.loglik),
        };
        if better {
            best = Some((ok, r, run));
        }
    }
    let (_, best_restart, run) = best.ok_or(Error::ZeroDensity)?;

    let mut warnings = Vec::new();
    if !run.converged {
        warnings.push("EM reached max_iter before the tolerance".into());
    }
    if run.clamped {
        warnings.push("parameter estimate clamped to [delta, 1 - delta]".into());
    }
    let near_nonidentifiable = (run.params.alpha - run.params.beta).abs() < IDENTIFIABILITY_GAP;
    if near_nonidentifiable {
        warnings.push("alpha and beta are nearly equal; mixture weights are not identified".into());
    }
    let (pi_hat, pi_residual) = if (2..=3).contains(&q) {
        match pi_from_gamma_with_tol(&run.params.gamma, q, f64::INFINITY) {
            Ok((pi, res)) => {
                if res > PI_ATTAINABLE_TOL {
                    warnings.push(format!("gamma is far from any {q}-group proportions (residual {res:.3e})"));
                }
                (Some(pi), Some(res))
            }
            Err(_) => (None, None),
        }
    } else {
        (None, None)
    };

    Ok(TripletFit {
        params: run.params,
        pi_hat,
        pi_residual,
        loglik: run.loglik,
        trace: run.trace,
        converged: run.converged,
        near_nonidentifiable,
        best_restart,
        warnings,
    })
}
