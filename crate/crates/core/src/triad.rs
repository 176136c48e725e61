//! Triad census and edge/wedge/triangle moments of binary graphs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BinaryGraph, GroupProportions};

/// Unordered node triples classified by how many of their three pairs are edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriadCensus {
    pub t0: u64,
    pub t1: u64,
    pub t2: u64,
    pub t3: u64,
}

impl TriadCensus {
    pub fn total(&self) -> u64 {
        self.t0 + self.t1 + self.t2 + self.t3
    }
}

/// Probabilities that an edge, a wedge `X_ij X_ik`, and a triangle are present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentTriple {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

/// Edge count, wedge count `sum_i C(d_i, 2)` and triangle count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubgraphCounts {
    pub n: u64,
    pub edges: u64,
    pub wedges: u64,
    pub triangles: u64,
}

pub fn subgraph_counts(g: &BinaryGraph) -> SubgraphCounts {
    let rows = g.adjacency_rows();
    let degrees: Vec<u64> = rows
        .iter()
        .map(|r| r.iter().map(|w| w.count_ones() as u64).sum())
        .collect();
    let edges = degrees.iter().sum::<u64>() / 2;
    let wedges = degrees.iter().map(|&d| d * d.saturating_sub(1) / 2).sum();
    // Each triangle is seen once from each of its three edges.
    let mut closed = 0u64;
    for (i, j) in g.edges() {
        closed += rows[i]
            .iter()
            .zip(&rows[j])
            .map(|(a, b)| (a & b).count_ones() as u64)
            .sum::<u64>();
    }
    SubgraphCounts {
        n: g.n() as u64,
        edges,
        wedges,
        triangles: closed / 3,
    }
}

fn require_three(g: &BinaryGraph) -> Result<()> {
    if g.n() < 3 {
        Err(Error::TooFewNodes { required: 3, actual: g.n() })
    } else {
        Ok(())
    }
}

pub fn triad_census(g: &BinaryGraph) -> Result<TriadCensus> {
    require_three(g)?;
    Ok(census_from_counts(&subgraph_counts(g)))
}

pub fn census_from_counts(c: &SubgraphCounts) -> TriadCensus {
    let n = c.n;
    let triples = n * (n - 1) * (n - 2) / 6;
    let t3 = c.triangles;
    let t2 = c.wedges - 3 * t3;
    let t1 = c.edges * (n - 2) + 3 * t3 - 2 * c.wedges;
    let t0 = triples - t1 - t2 - t3;
    TriadCensus { t0, t1, t2, t3 }
}

pub fn empirical_moments(g: &BinaryGraph) -> Result<MomentTriple> {
    require_three(g)?;
    Ok(moments_from_counts(&subgraph_counts(g)))
}

pub fn moments_from_counts(c: &SubgraphCounts) -> MomentTriple {
    let n = c.n as f64;
    let ordered_pairs = n * (n - 1.0);
    let ordered_triples = ordered_pairs * (n - 2.0);
    MomentTriple {
        m1: 2.0 * c.edges as f64 / ordered_pairs,
        m2: 2.0 * c.wedges as f64 / ordered_triples,
        m3: 6.0 * c.triangles as f64 / ordered_triples,
    }
}

pub fn theoretical_moments(pi: &GroupProportions, alpha: f64, beta: f64) -> MomentTriple {
    let s2 = pi.s2();
    if pi.is_uniform() {
        // s3 = s2^2 holds exactly here, which keeps m2 = m1^2 free of rounding.
        return centered_moments(s2, 0.0, s2 * s2 * (1.0 - s2), alpha, beta);
    }
    moments_from_power_sums(s2, pi.s3(), alpha, beta)
}

pub fn moments_from_power_sums(s2: f64, s3: f64, alpha: f64, beta: f64) -> MomentTriple {
    centered_moments(s2, s3 - s2 * s2, s3 - s2 * s2 * s2, alpha, beta)
}

/// Moments expanded around `beta` with `d = alpha - beta`:
/// `m2 = m1^2 + e2 d^2` and `m3 = m1^3 + 3 e2 beta d^2 + e3 d^3`,
/// where `e2 = s3 - s2^2` and `e3 = s3 - s2^3`.
fn centered_moments(s2: f64, e2: f64, e3: f64, alpha: f64, beta: f64) -> MomentTriple {
    let d = alpha - beta;
    let m1 = beta + s2 * d;
    MomentTriple {
        m1,
        m2: m1 * m1 + e2 * d * d,
        m3: m1 * m1 * m1 + 3.0 * e2 * beta * d * d + e3 * d * d * d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force census over all unordered triples.
    fn census_oracle(g: &BinaryGraph) -> TriadCensus {
        let mut t = [0u64; 4];
        let n = g.n();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let e = g.has_edge(i, j) as usize + g.has_edge(i, k) as usize + g.has_edge(j, k) as usize;
                    t[e] += 1;
                }
            }
        }
        TriadCensus { t0: t[0], t1: t[1], t2: t[2], t3: t[3] }
    }

    /// Ordered-triple sums exactly as the estimator definitions read.
    fn moments_oracle(g: &BinaryGraph) -> MomentTriple {
        let n = g.n();
        let x = |a: usize, b: usize| g.has_edge(a, b) as u64 as f64;
        let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                s1 += x(i, j);
                for k in 0..n {
                    if k == i || k == j {
                        continue;
                    }
                    s2 += x(i, j) * x(i, k);
                    s3 += x(i, j) * x(i, k) * x(j, k);
                }
            }
        }
        let nf = n as f64;
        MomentTriple {
            m1: s1 / (nf * (nf - 1.0)),
            m2: s2 / (nf * (nf - 1.0) * (nf - 2.0)),
            m3: s3 / (nf * (nf - 1.0) * (nf - 2.0)),
        }
    }

    fn path3() -> BinaryGraph {
        BinaryGraph::from_edges(3, [(0, 1), (0, 2)])
    }

    #[test]
    fn census_examples() {
        let full = triad_census(&BinaryGraph::complete(3)).unwrap();
        assert_eq!(full, census_oracle(&BinaryGraph::complete(3)));
        assert_eq!(full, TriadCensus { t0: 0, t1: 0, t2: 0, t3: 1 });
        assert_eq!(triad_census(&path3()).unwrap(), TriadCensus { t0: 0, t1: 0, t2: 1, t3: 0 });
        assert_eq!(
            triad_census(&BinaryGraph::empty(4)).unwrap(),
            TriadCensus { t0: 4, t1: 0, t2: 0, t3: 0 }
        );
        assert!(matches!(triad_census(&BinaryGraph::empty(2)), Err(Error::TooFewNodes { .. })));
    }

    #[test]
    fn moment_examples() {
        for n in [3, 9, 70] {
            assert_eq!(
                empirical_moments(&BinaryGraph::complete(n)).unwrap(),
                MomentTriple { m1: 1.0, m2: 1.0, m3: 1.0 }
            );
            assert_eq!(
                empirical_moments(&BinaryGraph::empty(n)).unwrap(),
                MomentTriple { m1: 0.0, m2: 0.0, m3: 0.0 }
            );
        }
        let m = empirical_moments(&path3()).unwrap();
        let o = moments_oracle(&path3());
        assert!((o.m1 - 2.0 / 3.0).abs() < 1e-15 && (o.m2 - 1.0 / 3.0).abs() < 1e-15 && o.m3 == 0.0);
        assert!((m.m1 - o.m1).abs() < 1e-15);
        assert!((m.m2 - o.m2).abs() < 1e-15);
        assert_eq!(m.m3, 0.0);
    }

    #[test]
    fn theoretical_examples() {
        let p = 0.37;
        let m = theoretical_moments(&GroupProportions::new(vec![0.2, 0.5, 0.3]).unwrap(), p, p);
        assert!((m.m1 - p).abs() < 1e-15);
        assert!((m.m2 - p * p).abs() < 1e-15);
        assert!((m.m3 - p * p * p).abs() < 1e-15);

        let eq = theoretical_moments(&GroupProportions::uniform(2), 0.3, 0.03);
        assert!((eq.m1 - 0.165).abs() < 1e-15);
        assert!((eq.m2 - 0.027225).abs() < 1e-15);
        assert!((eq.m3 - 0.0069525).abs() < 1e-15);
        assert_eq!(eq.m2, eq.m1 * eq.m1);

        let un = theoretical_moments(&GroupProportions::new(vec![0.7, 0.3]).unwrap(), 0.3, 0.03);
        assert!((un.m1 - 0.1866).abs() < 1e-15);
    }

    /// Monte-Carlo oracle: average conditional products over random group triples.
    #[test]
    fn theoretical_matches_group_triple_average() {
        use rand::Rng;
        let pi = [0.7, 0.3];
        let (a, b) = (0.3, 0.03);
        let mut rng = crate::rng::RngSeed(21).rng();
        let draw = |rng: &mut crate::rng::GraphRng| if rng.random::<f64>() < pi[0] { 0 } else { 1 };
        let reps = 400_000;
        let (mut e1, mut e2, mut e3) = (0.0, 0.0, 0.0);
        for _ in 0..reps {
            let (q, l, m) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let p = |x: usize, y: usize| if x == y { a } else { b };
            e1 += p(q, l);
            e2 += p(q, l) * p(q, m);
            e3 += p(q, l) * p(q, m) * p(l, m);
        }
        let r = reps as f64;
        let t = theoretical_moments(&GroupProportions::new(pi.to_vec()).unwrap(), a, b);
        assert!((e1 / r - t.m1).abs() < 2e-3);
        assert!((e2 / r - t.m2).abs() < 1e-3);
        assert!((e3 / r - t.m3).abs() < 5e-4);
    }

    fn arb_graph(max_n: usize) -> impl Strategy<Value = BinaryGraph> {
        (3..=max_n).prop_flat_map(|n| {
            proptest::collection::vec(any::<bool>(), n * (n - 1) / 2).prop_map(move |bits| {
                let mut g = BinaryGraph::empty(n);
                let mut k = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        g.set_edge(i, j, bits[k]);
                        k += 1;
                    }
                }
                g
            })
        })
    }

    proptest! {
        #[test]
        fn census_matches_enumeration(g in arb_graph(8)) {
            let c = triad_census(&g).unwrap();
            prop_assert_eq!(c, census_oracle(&g));
            let n = g.n() as u64;
            prop_assert_eq!(c.total(), n * (n - 1) * (n - 2) / 6);
        }

        #[test]
        fn moments_match_ordered_sums(g in arb_graph(8)) {
            let m = empirical_moments(&g).unwrap();
            let o = moments_oracle(&g);
            prop_assert!((m.m1 - o.m1).abs() < 1e-12);
            prop_assert!((m.m2 - o.m2).abs() < 1e-12);
            prop_assert!((m.m3 - o.m3).abs() < 1e-12);
            prop_assert!(m.m3 <= m.m2 && m.m2 <= m.m1 && m.m1 <= 1.0);
        }
    }
}
