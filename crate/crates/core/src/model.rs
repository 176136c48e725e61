//! Graphs, partitions and parameter bundles of the affiliation models.
//!
//! Nodes are 0-based everywhere inside the crate; the file formats in
//! [`crate::io`] convert to and from 1-based ids. Both graph types keep only
//! the strict upper triangle, so symmetry and loop-freeness hold by
//! construction.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Lower bound on estimated probabilities; estimates are clamped to `[DELTA, 1 - DELTA]`.
pub const DELTA: f64 = 1e-6;

const SIMPLEX_TOL: f64 = 1e-9;

#[inline]
fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

#[inline]
fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Number of unordered pairs `n choose 2`.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

// ---------------------------------------------------------------------------
// Partitions and proportions

/// Latent group labels, one per node, each in `0..q`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodePartition {
    labels: Vec<usize>,
    q: usize,
}

impl NodePartition {
    pub fn new(labels: Vec<usize>, q: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidParameter("group count must be at least 1".into()));
        }
        if let Some((i, &g)) = labels.iter().enumerate().find(|(_, &g)| g >= q) {
            return Err(Error::InvalidParameter(format!(
                "node {i} has label {g} outside 0..{q}"
            )));
        }
        Ok(NodePartition { labels, q })
    }

    /// Partition with every node in group 0.
    pub fn single(n: usize) -> Self {
        NodePartition { labels: vec![0; n], q: 1 }
    }

    pub(crate) fn from_raw(labels: Vec<usize>, q: usize) -> Self {
        debug_assert!(labels.iter().all(|&g| g < q));
        NodePartition { labels, q }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.q];
        for &g in &self.labels {
            sizes[g] += 1;
        }
        sizes
    }

    /// Label frequencies. Empty groups yield zero entries.
    pub fn frequencies(&self) -> GroupProportions {
        let n = self.labels.len().max(1) as f64;
        GroupProportions {
            pi: self.group_sizes().into_iter().map(|c| c as f64 / n).collect(),
        }
    }
}

/// Group proportions `pi` on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GroupProportions {
    pi: Vec<f64>,
}

impl GroupProportions {
    /// Accepts vectors summing to one within `1e-9` and renormalises them.
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::InvalidProportions("empty vector".into()));
        }
        if pi.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::InvalidProportions(format!("{pi:?} has a negative or non-finite entry")));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidProportions(format!("{pi:?} sums to {total}")));
        }
        Ok(GroupProportions {
            pi: pi.into_iter().map(|p| p / total).collect(),
        })
    }

    pub fn uniform(q: usize) -> Self {
        assert!(q >= 1);
        GroupProportions {
            pi: vec![1.0 / q as f64; q],
        }
    }

    pub fn q(&self) -> usize {
        self.pi.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pi
    }

    /// Sum of squared proportions.
    pub fn s2(&self) -> f64 {
        self.pi.iter().map(|p| p * p).sum()
    }

    /// Sum of cubed proportions.
    pub fn s3(&self) -> f64 {
        self.pi.iter().map(|p| p * p * p).sum()
    }

    pub fn min(&self) -> f64 {
        self.pi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.q() as f64;
        self.pi.iter().all(|&p| p == u)
    }
}

impl TryFrom<Vec<f64>> for GroupProportions {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        GroupProportions::new(v)
    }
}

impl From<GroupProportions> for Vec<f64> {
    fn from(p: GroupProportions) -> Self {
        p.pi
    }
}

// ---------------------------------------------------------------------------
// Graphs

/// Undirected simple graph stored as a packed bitset over the upper triangle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryGraph {
    n: usize,
    bits: Vec<u64>,
}

impl BinaryGraph {
    pub fn empty(n: usize) -> Self {
        BinaryGraph {
            n,
            bits: vec![0; pair_count(n).div_ceil(64)],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in i + 1..n {
                g.set_edge(i, j, true);
            }
        }
        g
    }

    /// Builds a graph from 0-based pairs. Panics on self-loops or out-of-range ids.
    pub fn from_edges<I: IntoIterator<Item = (usize, usize)>>(n: usize, edges: I) -> Self {
        let mut g = Self::empty(n);
        for (i, j) in edges {
            g.set_edge(i, j, true);
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let (a, b) = ordered(i, j);
        let k = pair_index(self.n, a, b);
        (self.bits[k / 64] >> (k % 64)) & 1 == 1
    }

    pub fn set_edge(&mut self, i: usize, j: usize, present: bool) {
        assert!(i != j, "self-loop on node {i}");
        assert!(i < self.n && j < self.n, "node out of range");
        let (a, b) = ordered(i, j);
        let k = pair_index(self.n, a, b);
        if present {
            self.bits[k / 64] |= 1 << (k % 64);
        } else {
            self.bits[k / 64] &= !(1 << (k % 64));
        }
    }

    pub fn edge_count(&self) -> u64 {
        self.bits.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn degrees(&self) -> Vec<u64> {
        let mut d = vec![0; self.n];
        for (i, j) in self.edges() {
            d[i] += 1;
            d[j] += 1;
        }
        d
    }

    /// Present edges `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
            .filter(move |&(i, j)| self.has_edge(i, j))
    }

    /// Full symmetric adjacency as one bitset row per node.
    pub fn adjacency_rows(&self) -> Vec<Vec<u64>> {
        let words = self.n.div_ceil(64);
        let mut rows = vec![vec![0u64; words]; self.n];
        for (i, j) in self.edges() {
            rows[i][j / 64] |= 1 << (j % 64);
            rows[j][i / 64] |= 1 << (i % 64);
        }
        rows
    }
}

/// Undirected weighted graph; a zero weight encodes an absent edge.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    weights: Vec<f64>,
}

impl WeightedGraph {
    pub fn empty(n: usize) -> Self {
        WeightedGraph {
            n,
            weights: vec![0.0; pair_count(n)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = ordered(i, j);
        self.weights[pair_index(self.n, a, b)]
    }

    pub fn set_weight(&mut self, i: usize, j: usize, w: f64) {
        assert!(i != j, "self-loop on node {i}");
        assert!(i < self.n && j < self.n, "node out of range");
        let (a, b) = ordered(i, j);
        self.weights[pair_index(self.n, a, b)] = w;
    }

    /// All pairs `(i, j, w)` with `i < j` in row-major order, absent ones included.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n;
        (0..n)
            .flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
            .zip(self.weights.iter())
            .map(|((i, j), &w)| (i, j, w))
    }

    pub fn present_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.pairs().filter(|&(_, _, w)| w != 0.0)
    }

    pub fn present_weights(&self) -> Vec<f64> {
        self.weights.iter().copied().filter(|&w| w != 0.0).collect()
    }

    pub fn present_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w != 0.0).count()
    }
}

/// Presence indicator graph of a weighted graph.
pub fn binarize(g: &WeightedGraph) -> BinaryGraph {
    let mut b = BinaryGraph::empty(g.n());
    for (i, j, _) in g.present_edges() {
        b.set_edge(i, j, true);
    }
    b
}

// ---------------------------------------------------------------------------
// Parameters

/// Binary affiliation model: edge probability `alpha` within groups, `beta` across.
///
/// `alpha == beta` is accepted for simulation (Erdős–Rényi); estimation of
/// such a model is not identifiable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryAffiliationParams {
    pub pi: GroupProportions,
    pub alpha: f64,
    pub beta: f64,
}

impl BinaryAffiliationParams {
    pub fn new(pi: GroupProportions, alpha: f64, beta: f64) -> Result<Self> {
        check_probability("alpha", alpha)?;
        check_probability("beta", beta)?;
        Ok(BinaryAffiliationParams { pi, alpha, beta })
    }

    pub fn connectivity(&self, same_group: bool) -> f64 {
        if same_group {
            self.alpha
        } else {
            self.beta
        }
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {p} is not in [0, 1]")))
    }
}

/// Parametric law of a present edge's weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WeightFamily {
    Gaussian { mu: f64, sigma2: f64 },
    /// Poisson conditioned on being at least one.
    TruncatedPoisson { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Gaussian,
    TruncatedPoisson,
}

impl WeightFamily {
    pub fn gaussian(mu: f64, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite() && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("Gaussian({mu}, {sigma2})")));
        }
        Ok(WeightFamily::Gaussian { mu, sigma2 })
    }

    pub fn truncated_poisson(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("TruncatedPoisson({lambda})")));
        }
        Ok(WeightFamily::TruncatedPoisson { lambda })
    }

    pub fn kind(&self) -> FamilyKind {
        match self {
            WeightFamily::Gaussian { .. } => FamilyKind::Gaussian,
            WeightFamily::TruncatedPoisson { .. } => FamilyKind::TruncatedPoisson,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            WeightFamily::Gaussian { mu, .. } => mu,
            WeightFamily::TruncatedPoisson { lambda } => lambda / -(-lambda).exp_m1(),
        }
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        self.ln_density(x).map(f64::exp)
    }

    pub fn ln_density(&self, x: f64) -> Result<f64> {
        match *self {
            WeightFamily::Gaussian { mu, sigma2 } => {
                let d = x - mu;
                Ok(-0.5 * (2.0 * PI * sigma2).ln() - d * d / (2.0 * sigma2))
            }
            WeightFamily::TruncatedPoisson { lambda } => {
                let k = as_positive_count(x)?;
                Ok(k * lambda.ln() - statrs::function::gamma::ln_gamma(k + 1.0) - ln_expm1(lambda))
            }
        }
    }
}

/// `ln(e^x - 1)` without overflow for large `x`.
pub(crate) fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

pub(crate) fn as_positive_count(x: f64) -> Result<f64> {
    if x >= 1.0 && x.fract() == 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Domain(format!("{x} is not a positive integer")))
    }
}

/// Probability that a pair carries an edge, given whether its endpoints share a group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SparsityModel {
    Global { p: f64 },
    Affiliation { alpha: f64, beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityKind {
    Global,
    Affiliation,
}

impl SparsityModel {
    pub fn global(p: f64) -> Result<Self> {
        check_probability("p", p)?;
        Ok(SparsityModel::Global { p })
    }

    pub fn affiliation(alpha: f64, beta: f64) -> Result<Self> {
        check_probability("alpha", alpha)?;
        check_probability("beta", beta)?;
        Ok(SparsityModel::Affiliation { alpha, beta })
    }

    pub fn presence(&self, same_group: bool) -> f64 {
        match *self {
            SparsityModel::Global { p } => p,
            SparsityModel::Affiliation { alpha, beta } => {
                if same_group {
                    alpha
                } else {
                    beta
                }
            }
        }
    }
}

/// Weighted affiliation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedAffiliationParams {
    pub pi: GroupProportions,
    pub sparsity: SparsityModel,
    pub theta_in: WeightFamily,
    pub theta_out: WeightFamily,
}

impl WeightedAffiliationParams {
    pub fn new(
        pi: GroupProportions,
        sparsity: SparsityModel,
        theta_in: WeightFamily,
        theta_out: WeightFamily,
    ) -> Result<Self> {
        if theta_in.kind() != theta_out.kind() {
            return Err(Error::InvalidParameter(
                "theta_in and theta_out must belong to the same family".into(),
            ));
        }
        Ok(WeightedAffiliationParams {
            pi,
            sparsity,
            theta_in,
            theta_out,
        })
    }

    pub fn theta(&self, same_group: bool) -> &WeightFamily {
        if same_group {
            &self.theta_in
        } else {
            &self.theta_out
        }
    }
}

/// Clamp a probability estimate into `[DELTA, 1 - DELTA]`; reports whether it moved.
pub fn clamp_probability(p: f64) -> (f64, bool) {
    if p.is_nan() {
        return (DELTA, true);
    }
    let c = p.clamp(DELTA, 1.0 - DELTA);
    (c, c != p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_indexing_is_dense() {
        let n = 7;
        let mut seen = vec![false; pair_count(n)];
        for i in 0..n {
            for j in i + 1..n {
                let k = pair_index(n, i, j);
                assert!(!seen[k]);
                seen[k] = true;
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn binary_graph_is_symmetric() {
        let mut g = BinaryGraph::empty(5);
        g.set_edge(3, 1, true);
        assert!(g.has_edge(1, 3) && g.has_edge(3, 1));
        assert!(!g.has_edge(2, 2));
        assert_eq!(g.degrees(), vec![0, 1, 0, 1, 0]);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(1, 3)]);
        g.set_edge(1, 3, false);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn complete_graph_counts() {
        let g = BinaryGraph::complete(70);
        assert_eq!(g.edge_count(), 70 * 69 / 2);
        assert!(g.degrees().iter().all(|&d| d == 69));
    }

    #[test]
    #[should_panic]
    fn self_loop_rejected() {
        BinaryGraph::empty(3).set_edge(1, 1, true);
    }

    #[test]
    fn proportions_validation() {
        assert!(GroupProportions::new(vec![0.7, 0.3]).is_ok());
        assert!(GroupProportions::new(vec![0.7, 0.4]).is_err());
        assert!(GroupProportions::new(vec![-0.1, 1.1]).is_err());
        assert!(GroupProportions::new(vec![]).is_err());
        let p = GroupProportions::new(vec![0.7, 0.3]).unwrap();
        assert!((p.s2() - 0.58).abs() < 1e-15);
        assert!((p.s3() - 0.37).abs() < 1e-15);
        assert!(GroupProportions::uniform(4).is_uniform());
    }

    #[test]
    fn partition_checks_labels() {
        assert!(NodePartition::new(vec![0, 1, 2], 2).is_err());
        assert!(NodePartition::new(vec![0, 1], 0).is_err());
        let z = NodePartition::new(vec![0, 1, 1, 1], 3).unwrap();
        assert_eq!(z.group_sizes(), vec![1, 3, 0]);
        assert_eq!(z.frequencies().as_slice(), &[0.25, 0.75, 0.0]);
    }

    #[test]
    fn gaussian_density_at_mode() {
        let f = WeightFamily::gaussian(0.0, 1.0).unwrap();
        assert!((f.density(0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn truncated_poisson_density() {
        let f = WeightFamily::truncated_poisson(1.0).unwrap();
        let expected = 1.0 / (std::f64::consts::E - 1.0);
        assert!((f.density(1.0).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 0.581_976_706_869_326_4).abs() < 1e-15);
        assert!(matches!(f.density(0.0), Err(Error::Domain(_))));
        assert!(matches!(f.density(1.5), Err(Error::Domain(_))));
        assert!(matches!(f.density(-2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn truncated_poisson_normalizes() {
        for lambda in [0.05, 1.0, 4.0, 25.0, 80.0] {
            let f = WeightFamily::truncated_poisson(lambda).unwrap();
            let total: f64 = (1..=200).map(|k| f.density(k as f64).unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-10, "lambda {lambda}: {total}");
        }
    }

    #[test]
    fn gaussian_integrates_to_one() {
        let f = WeightFamily::gaussian(1.5, 0.25).unwrap();
        // Simpson over mu +- 12 sigma
        let (a, b, m) = (1.5 - 6.0, 1.5 + 6.0, 20_000);
        let h = (b - a) / m as f64;
        let mut s = f.density(a).unwrap() + f.density(b).unwrap();
        for k in 1..m {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f.density(a + k as f64 * h).unwrap();
        }
        assert!((s * h / 3.0 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn binarize_cases() {
        let mut w = WeightedGraph::empty(3);
        assert_eq!(binarize(&w).edge_count(), 0);
        w.set_weight(0, 1, 0.5);
        w.set_weight(0, 2, 0.0);
        let b = binarize(&w);
        assert_eq!(b.edges().collect::<Vec<_>>(), vec![(0, 1)]);

        let mut full = WeightedGraph::empty(6);
        for i in 0..6 {
            for j in i + 1..6 {
                full.set_weight(i, j, -1.25);
            }
        }
        assert_eq!(binarize(&full), BinaryGraph::complete(6));
    }

    #[test]
    fn weighted_params_require_same_family() {
        let r = WeightedAffiliationParams::new(
            GroupProportions::uniform(2),
            SparsityModel::global(0.5).unwrap(),
            WeightFamily::gaussian(2.0, 1.0).unwrap(),
            WeightFamily::truncated_poisson(1.0).unwrap(),
        );
        assert!(r.is_err());
    }
}
