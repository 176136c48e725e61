//! Seeded samplers for partitions and affiliation graphs.
//!
//! Each sampler draws the node labels first and then visits pairs in
//! row-major order `(0,1), (0,2), ..., (n-2,n-1)`, so a seed fixes the
//! whole output.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::model::{
    BinaryAffiliationParams, BinaryGraph, GroupProportions, NodePartition, WeightFamily,
    WeightedAffiliationParams, WeightedGraph,
};
use crate::rng::{GraphRng, RngSeed};

pub fn sample_partition(pi: &GroupProportions, n: usize, seed: RngSeed) -> Result<NodePartition> {
    if n == 0 {
        return Err(Error::TooFewNodes { required: 1, actual: 0 });
    }
    let mut rng = seed.rng();
    Ok(draw_labels(pi, n, &mut rng))
}

fn draw_labels(pi: &GroupProportions, n: usize, rng: &mut GraphRng) -> NodePartition {
    let cumulative: Vec<f64> = pi
        .as_slice()
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let last = pi.q() - 1;
    let labels = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            cumulative.iter().position(|&c| u < c).unwrap_or(last)
        })
        .collect();
    NodePartition::from_raw(labels, pi.q())
}

pub fn sample_binary_graph(
    params: &BinaryAffiliationParams,
    n: usize,
    seed: RngSeed,
) -> Result<(BinaryGraph, NodePartition)> {
    if n < 2 {
        return Err(Error::TooFewNodes { required: 2, actual: n });
    }
    let mut rng = seed.rng();
    let z = draw_labels(&params.pi, n, &mut rng);
    let mut g = BinaryGraph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            let p = params.connectivity(z.label(i) == z.label(j));
            if rng.random::<f64>() < p {
                g.set_edge(i, j, true);
            }
        }
    }
    Ok((g, z))
}

pub fn sample_weighted_graph(
    params: &WeightedAffiliationParams,
    n: usize,
    seed: RngSeed,
) -> Result<(WeightedGraph, NodePartition)> {
    if n < 2 {
        return Err(Error::TooFewNodes { required: 2, actual: n });
    }
    let mut rng = seed.rng();
    let z = draw_labels(&params.pi, n, &mut rng);
    let inside = WeightSampler::new(&params.theta_in)?;
    let outside = WeightSampler::new(&params.theta_out)?;
    let mut g = WeightedGraph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            let same = z.label(i) == z.label(j);
            if rng.random::<f64>() < params.sparsity.presence(same) {
                let sampler = if same { &inside } else { &outside };
                let mut w = sampler.draw(&mut rng);
                if w == 0.0 {
                    w = sampler.draw(&mut rng);
                    if w == 0.0 {
                        return Err(Error::ZeroWeightDraw(i, j));
                    }
                }
                g.set_weight(i, j, w);
            }
        }
    }
    Ok((g, z))
}

enum WeightSampler {
    Gaussian(Normal<f64>),
    /// Rejection from an ordinary Poisson; acceptance is at least `1 - e^-1`.
    PoissonRejection(Poisson<f64>),
    /// Inverse-cdf walk for small rates where rejection would stall.
    PoissonInversion { lambda: f64 },
}

impl WeightSampler {
    fn new(family: &WeightFamily) -> Result<Self> {
        match *family {
            WeightFamily::Gaussian { mu, sigma2 } => Normal::new(mu, sigma2.sqrt())
                .map(WeightSampler::Gaussian)
                .map_err(|e| Error::InvalidParameter(e.to_string())),
            WeightFamily::TruncatedPoisson { lambda } if lambda >= 1.0 => Poisson::new(lambda)
                .map(WeightSampler::PoissonRejection)
                .map_err(|e| Error::InvalidParameter(e.to_string())),
            WeightFamily::TruncatedPoisson { lambda } => {
                Ok(WeightSampler::PoissonInversion { lambda })
            }
        }
    }

    fn draw(&self, rng: &mut GraphRng) -> f64 {
        match self {
            WeightSampler::Gaussian(d) => d.sample(rng),
            WeightSampler::PoissonRejection(d) => loop {
                let k = d.sample(rng);
                if k >= 1.0 {
                    break k;
                }
            },
            WeightSampler::PoissonInversion { lambda } => {
                let u: f64 = rng.random();
                // P(K = 1) = lambda / (e^lambda - 1), then ratio lambda / k.
                let mut k = 1.0;
                let mut pk = lambda / lambda.exp_m1();
                let mut acc = pk;
                while u >= acc && pk > 0.0 {
                    k += 1.0;
                    pk *= lambda / k;
                    acc += pk;
                }
                k
            }
        }
    }
}
