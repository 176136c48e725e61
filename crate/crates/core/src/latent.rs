//! Latent-group recovery by maximizing a classification likelihood.
//!
//! Both the binary and the weighted criteria are sums over node pairs whose
//! terms depend only on the pair's data and on whether the two endpoints share
//! a group. [`PairCriterion`] captures exactly that, and [`maximize_latent`]
//! runs randomized single-node coordinate ascent on any such criterion.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BinaryGraph, GroupProportions, NodePartition, SparsityModel, WeightFamily, WeightedGraph};
use crate::rng::RngSeed;

/// A classification criterion `sum_{i<j} term(i, j, same_group(i, j))`.
pub trait PairCriterion: Sync {
    fn n(&self) -> usize;
    /// Contributions of pair `(i, j)` when the endpoints share a group and when they do not.
    fn pair_terms(&self, i: usize, j: usize) -> (f64, f64);
}

pub fn criterion_value<C: PairCriterion + ?Sized>(c: &C, z: &NodePartition) -> f64 {
    let n = c.n();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (same, diff) = c.pair_terms(i, j);
            total += if z.label(i) == z.label(j) { same } else { diff };
        }
    }
    total
}

fn bernoulli_log(x: bool, p: f64) -> f64 {
    if x {
        p.ln()
    } else {
        (-p).ln_1p()
    }
}

/// Binary classification likelihood with plugged-in `(alpha, beta)`.
pub struct BinaryCriterion<'a> {
    g: &'a BinaryGraph,
    // [absent, present] log-probabilities
    same: [f64; 2],
    diff: [f64; 2],
}

impl<'a> BinaryCriterion<'a> {
    pub fn new(g: &'a BinaryGraph, alpha: f64, beta: f64) -> Result<Self> {
        for (name, p) in [("alpha", alpha), ("beta", beta)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} = {p} must lie in (0, 1)")));
            }
        }
        Ok(BinaryCriterion {
            g,
            same: [bernoulli_log(false, alpha), bernoulli_log(true, alpha)],
            diff: [bernoulli_log(false, beta), bernoulli_log(true, beta)],
        })
    }
}

impl PairCriterion for BinaryCriterion<'_> {
    fn n(&self) -> usize {
        self.g.n()
    }

    fn pair_terms(&self, i: usize, j: usize) -> (f64, f64) {
        let x = self.g.has_edge(i, j) as usize;
        (self.same[x], self.diff[x])
    }
}

pub fn binary_criterion(g: &BinaryGraph, z: &NodePartition, alpha: f64, beta: f64) -> Result<f64> {
    check_len(g.n(), z)?;
    Ok(criterion_value(&BinaryCriterion::new(g, alpha, beta)?, z))
}

/// Weighted classification likelihood: cross-group pairs use `theta_cross`,
/// same-group pairs `theta_same`, with presence probabilities from the sparsity model.
pub struct WeightedCriterion<'a> {
    g: &'a WeightedGraph,
    sparsity: SparsityModel,
    theta_same: WeightFamily,
    theta_cross: WeightFamily,
}

impl<'a> WeightedCriterion<'a> {
    pub fn new(
        g: &'a WeightedGraph,
        sparsity: SparsityModel,
        theta_same: WeightFamily,
        theta_cross: WeightFamily,
    ) -> Result<Self> {
        // Surface domain errors (e.g. non-integer counts) up front.
        for w in g.present_weights() {
            theta_same.ln_density(w)?;
            theta_cross.ln_density(w)?;
        }
        Ok(WeightedCriterion {
            g,
            sparsity,
            theta_same,
            theta_cross,
        })
    }

    fn term(&self, w: f64, same: bool) -> f64 {
        let p = self.sparsity.presence(same);
        if w == 0.0 {
            (-p).ln_1p()
        } else {
            let theta = if same { &self.theta_same } else { &self.theta_cross };
            theta.ln_density(w).unwrap_or(f64::NEG_INFINITY) + p.ln()
        }
    }
}

impl PairCriterion for WeightedCriterion<'_> {
    fn n(&self) -> usize {
        self.g.n()
    }

    fn pair_terms(&self, i: usize, j: usize) -> (f64, f64) {
        let w = self.g.weight(i, j);
        (self.term(w, true), self.term(w, false))
    }
}

/// `C^{u,v}`: cross-group pairs use `theta_u`, same-group pairs `theta_v`.
pub fn weighted_criterion(
    g: &WeightedGraph,
    z: &NodePartition,
    sparsity: SparsityModel,
    theta_u: WeightFamily,
    theta_v: WeightFamily,
) -> Result<f64> {
    check_len(g.n(), z)?;
    Ok(criterion_value(&WeightedCriterion::new(g, sparsity, theta_v, theta_u)?, z))
}

fn check_len(n: usize, z: &NodePartition) -> Result<()> {
    if z.len() != n {
        return Err(Error::SizeMismatch { expected: n, actual: z.len() });
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentOptions {
    pub restarts: usize,
    /// Cap on single-node updates, in units of `n`.
    pub max_sweeps: usize,
    pub seed: RngSeed,
    /// Used as the starting point of restart 0 when present.
    #[serde(default)]
    pub init: Option<NodePartition>,
}

impl Default for LatentOptions {
    fn default() -> Self {
        LatentOptions {
            restarts: 10,
            max_sweeps: 100,
            seed: RngSeed(0),
            init: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub partition: NodePartition,
    pub criterion_value: f64,
    pub pi_hat: GroupProportions,
    /// `(u, v)` chosen by [`resolve_label_swap`]; 1-based as in `C^{u,v}`.
    pub swap_choice: Option<(u8, u8)>,
    pub sweeps_used: usize,
    pub converged: bool,
    /// True when some group ended up empty.
    pub empty_groups: bool,
}

/// Dense symmetric matrix of `same - diff` plus the all-cross baseline.
struct PairTable {
    n: usize,
    delta: Vec<f64>,
    baseline: f64,
}

impl PairTable {
    fn build<C: PairCriterion + ?Sized>(c: &C) -> Self {
        let n = c.n();
        let mut delta = vec![0.0; n * n];
        let mut baseline = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let (same, diff) = c.pair_terms(i, j);
                baseline += diff;
                let d = same - diff;
                delta[i * n + j] = d;
                delta[j * n + i] = d;
            }
        }
        PairTable { n, delta, baseline }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.delta[i * self.n..(i + 1) * self.n]
    }

    fn node_scores(&self, i: usize, labels: &[usize], scores: &mut [f64]) {
        scores.iter_mut().for_each(|s| *s = 0.0);
        for (j, (&d, &g)) in self.row(i).iter().zip(labels).enumerate() {
            if j != i {
                scores[g] += d;
            }
        }
    }

    fn value(&self, labels: &[usize]) -> f64 {
        let mut v = self.baseline;
        for i in 0..self.n {
            let row = self.row(i);
            for j in i + 1..self.n {
                if labels[i] == labels[j] {
                    v += row[j];
                }
            }
        }
        v
    }
}

fn argmax_smallest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (q, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = q;
        }
    }
    best
}

struct AscentOutcome {
    labels: Vec<usize>,
    value: f64,
    sweeps: usize,
    converged: bool,
}

fn ascend(table: &PairTable, q: usize, mut labels: Vec<usize>, seed: RngSeed, max_sweeps: usize) -> AscentOutcome {
    let n = table.n;
    let mut rng = seed.rng();
    let mut scores = vec![0.0; q];
    let budget = max_sweeps.saturating_mul(n).max(n);
    let mut updates = 0usize;
    let mut converged = false;

    let visit = |i: usize, labels: &mut Vec<usize>, scores: &mut Vec<f64>| -> bool {
        table.node_scores(i, labels, scores);
        let best = argmax_smallest(scores);
        if best != labels[i] {
            labels[i] = best;
            true
        } else {
            false
        }
    };

    while updates < budget {
        let mut quiet = 0;
        while quiet < n && updates < budget {
            let i = rng.random_range(0..n);
            updates += 1;
            if visit(i, &mut labels, &mut scores) {
                quiet = 0;
            } else {
                quiet += 1;
            }
        }
        if quiet < n {
            break;
        }
        // Random picks may have skipped nodes; confirm with one ordered pass.
        let mut changed = false;
        for i in 0..n {
            updates += 1;
            changed |= visit(i, &mut labels, &mut scores);
        }
        if !changed {
            converged = true;
            break;
        }
    }
    let value = table.value(&labels);
    AscentOutcome {
        labels,
        value,
        sweeps: updates.div_ceil(n.max(1)),
        converged,
    }
}

/// Random-restart coordinate ascent on `criterion` over partitions into `q` groups.
pub fn maximize_latent<C: PairCriterion + ?Sized>(
    criterion: &C,
    q: usize,
    opts: &LatentOptions,
) -> Result<ClassificationResult> {
    let n = criterion.n();
    if q == 0 {
        return Err(Error::InvalidParameter("group count must be at least 1".into()));
    }
    if let Some(init) = &opts.init {
        check_len(n, init)?;
        if init.q() != q {
            return Err(Error::InvalidParameter("initial partition has wrong group count".into()));
        }
    }
    if q == 1 || n == 0 {
        let partition = NodePartition::single(n);
        let value = criterion_value(criterion, &partition);
        let pi_hat = if q == 1 { GroupProportions::uniform(1) } else { partition.frequencies() };
        return Ok(ClassificationResult {
            partition: NodePartition::from_raw(vec![0; n], q),
            criterion_value: value,
            pi_hat,
            swap_choice: None,
            sweeps_used: 0,
            converged: true,
            empty_groups: false,
        });
    }

    let table = PairTable::build(criterion);
    let restarts = opts.restarts.max(1);
    let outcomes: Vec<AscentOutcome> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let seed = opts.seed.derive(&[r as u64]);
            let start = match (&opts.init, r) {
                (Some(init), 0) => init.labels().to_vec(),
                _ => {
                    let mut rng = seed.derive(&[u64::MAX]).rng();
                    (0..n).map(|_| rng.random_range(0..q)).collect()
                }
            };
            ascend(&table, q, start, seed, opts.max_sweeps)
        })
        .collect();

    let mut best = 0;
    for (r, o) in outcomes.iter().enumerate().skip(1) {
        if o.value > outcomes[best].value {
            best = r;
        }
    }
    let sweeps_used = outcomes.iter().map(|o| o.sweeps).sum();
    let o = outcomes.into_iter().nth(best).expect("at least one restart");
    let partition = NodePartition::from_raw(o.labels, q);
    let pi_hat = partition.frequencies();
    Ok(ClassificationResult {
        empty_groups: pi_hat.as_slice().contains(&0.0),
        criterion_value: o.value,
        pi_hat,
        partition,
        swap_choice: None,
        sweeps_used,
        converged: o.converged,
    })
}

/// Runs the ascent under both role assignments of an unordered pair of
/// weight laws and keeps the one reaching the larger criterion.
///
/// `theta_pair.0` is the cross-group law under `C^{1,2}`; ties go to `(1, 2)`.
pub fn resolve_label_swap(
    g: &WeightedGraph,
    sparsity: SparsityModel,
    theta_pair: (WeightFamily, WeightFamily),
    q: usize,
    opts: &LatentOptions,
) -> Result<ClassificationResult> {
    let (t1, t2) = theta_pair;
    let c12 = WeightedCriterion::new(g, sparsity, t2, t1)?;
    let c21 = WeightedCriterion::new(g, sparsity, t1, t2)?;
    let mut r12 = maximize_latent(&c12, q, opts)?;
    let mut r21 = maximize_latent(&c21, q, opts)?;
    if r21.criterion_value > r12.criterion_value {
        r21.swap_choice = Some((2, 1));
        Ok(r21)
    } else {
        r12.swap_choice = Some((1, 2));
        Ok(r12)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planted_binary() -> (BinaryGraph, NodePartition) {
        // groups {0,1} and {2,3}: both intra edges, one cross edge
        let g = BinaryGraph::from_edges(4, [(0, 1), (2, 3), (1, 2)]);
        (g, NodePartition::new(vec![0, 0, 1, 1], 2).unwrap())
    }

    fn all_labelings(n: usize, q: usize) -> impl Iterator<Item = NodePartition> {
        (0..q.pow(n as u32)).map(move |mut code| {
            let labels = (0..n)
                .map(|_| {
                    let l = code % q;
                    code /= q;
                    l
                })
                .collect();
            NodePartition::new(labels, q).unwrap()
        })
    }

    fn same_clustering(a: &NodePartition, b: &NodePartition) -> bool {
        let n = a.len();
        (0..n).all(|i| (0..n).all(|j| (a.label(i) == a.label(j)) == (b.label(i) == b.label(j))))
    }

    #[test]
    fn binary_criterion_collapses_when_alpha_equals_beta() {
        let (g, _) = planted_binary();
        let values: Vec<f64> = all_labelings(4, 2)
            .map(|z| binary_criterion(&g, &z, 0.4, 0.4).unwrap())
            .collect();
        assert!(values.iter().all(|v| (v - values[0]).abs() < 1e-12));
    }

    #[test]
    fn complete_graph_single_group() {
        let g = BinaryGraph::complete(6);
        let z = NodePartition::new(vec![0; 6], 2).unwrap();
        let v = binary_criterion(&g, &z, 0.7, 0.2).unwrap();
        assert!((v - 15.0 * 0.7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn planted_labels_maximize_binary_criterion() {
        let (g, planted) = planted_binary();
        let best = all_labelings(4, 2)
            .map(|z| (binary_criterion(&g, &z, 0.9, 0.1).unwrap(), z))
            .fold(None::<(f64, NodePartition)>, |acc, (v, z)| match acc {
                Some((bv, _)) if bv >= v => acc,
                _ => Some((v, z)),
            })
            .unwrap();
        assert!(same_clustering(&best.1, &planted));
    }

    fn planted_weighted() -> (WeightedGraph, NodePartition) {
        let mut g = WeightedGraph::empty(4);
        for (i, j, w) in [(0, 1, 2.0), (2, 3, 2.1), (0, 2, 1.0), (0, 3, 0.9), (1, 2, 1.1), (1, 3, 1.0)] {
            g.set_weight(i, j, w);
        }
        (g, NodePartition::new(vec![0, 0, 1, 1], 2).unwrap())
    }

    #[test]
    fn weighted_criterion_cases() {
        let (g, planted) = planted_weighted();
        let inside = WeightFamily::gaussian(2.0, 0.01).unwrap();
        let outside = WeightFamily::gaussian(1.0, 0.01).unwrap();
        let sparsity = SparsityModel::global(1.0).unwrap();

        let z = NodePartition::new(vec![0, 1, 1, 0], 2).unwrap();
        let pure: f64 = g
            .present_edges()
            .map(|(i, j, w)| {
                let t = if z.label(i) == z.label(j) { inside } else { outside };
                t.ln_density(w).unwrap()
            })
            .sum();
        let v = weighted_criterion(&g, &z, sparsity, outside, inside).unwrap();
        assert!((v - pure).abs() < 1e-12);

        for z in all_labelings(4, 2) {
            let a = weighted_criterion(&g, &z, sparsity, inside, inside).unwrap();
            let b = weighted_criterion(&g, &z, sparsity, inside, inside).unwrap();
            assert_eq!(a, b);
        }

        let best = all_labelings(4, 2)
            .max_by(|a, b| {
                let va = weighted_criterion(&g, a, sparsity, outside, inside).unwrap();
                let vb = weighted_criterion(&g, b, sparsity, outside, inside).unwrap();
                va.partial_cmp(&vb).unwrap()
            })
            .unwrap();
        assert!(same_clustering(&best, &planted));
    }

    #[test]
    fn single_group_is_trivial() {
        let (g, _) = planted_binary();
        let c = BinaryCriterion::new(&g, 0.6, 0.2).unwrap();
        let r = maximize_latent(&c, 1, &LatentOptions::default()).unwrap();
        assert!(r.partition.labels().iter().all(|&l| l == 0));
        assert_eq!(r.pi_hat.as_slice(), &[1.0]);
    }

    #[test]
    fn result_is_self_consistent_and_locally_optimal() {
        use crate::model::BinaryAffiliationParams;
        use crate::sample::sample_binary_graph;
        let p = BinaryAffiliationParams::new(GroupProportions::uniform(3), 0.4, 0.1).unwrap();
        let (g, _) = sample_binary_graph(&p, 60, RngSeed(17)).unwrap();
        let c = BinaryCriterion::new(&g, 0.4, 0.1).unwrap();
        let r = maximize_latent(&c, 3, &LatentOptions { restarts: 3, ..Default::default() }).unwrap();
        assert!(r.converged);
        let direct = criterion_value(&c, &r.partition);
        assert!((direct - r.criterion_value).abs() < 1e-8 * direct.abs());
        let mut labels = r.partition.labels().to_vec();
        for i in 0..labels.len() {
            let orig = labels[i];
            for q in 0..3 {
                labels[i] = q;
                let v = criterion_value(&c, &NodePartition::new(labels.clone(), 3).unwrap());
                assert!(v <= r.criterion_value + 1e-9 * r.criterion_value.abs());
            }
            labels[i] = orig;
        }
    }

    #[test]
    fn ascent_never_decreases() {
        use crate::model::BinaryAffiliationParams;
        use crate::sample::sample_binary_graph;
        let p = BinaryAffiliationParams::new(GroupProportions::uniform(2), 0.5, 0.1).unwrap();
        let (g, _) = sample_binary_graph(&p, 40, RngSeed(2)).unwrap();
        let c = BinaryCriterion::new(&g, 0.5, 0.1).unwrap();
        let table = PairTable::build(&c);
        let mut rng = RngSeed(9).rng();
        let mut labels: Vec<usize> = (0..40).map(|_| rng.random_range(0..2)).collect();
        let mut scores = vec![0.0; 2];
        let mut last = table.value(&labels);
        for _ in 0..400 {
            let i = rng.random_range(0..40);
            table.node_scores(i, &labels, &mut scores);
            labels[i] = argmax_smallest(&scores);
            let v = table.value(&labels);
            assert!(v >= last - 1e-9 * last.abs());
            last = v;
        }
    }

    #[test]
    fn equal_laws_tie_to_first_ordering() {
        let (g, _) = planted_weighted();
        let t = WeightFamily::gaussian(1.5, 0.5).unwrap();
        let r = resolve_label_swap(&g, SparsityModel::global(1.0).unwrap(), (t, t), 2, &LatentOptions::default())
            .unwrap();
        assert_eq!(r.swap_choice, Some((1, 2)));
    }

    #[test]
    fn size_mismatch_is_reported() {
        let (g, _) = planted_binary();
        let z = NodePartition::new(vec![0, 1, 0], 2).unwrap();
        assert!(matches!(binary_criterion(&g, &z, 0.5, 0.2), Err(Error::SizeMismatch { .. })));
    }
}
