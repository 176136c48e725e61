//! Affiliation random-graph mixtures: simulation, moment and composite-likelihood
//! estimation, latent-structure recovery, and replicate benchmarks.

pub mod bench;
pub mod error;
pub mod eval;
pub mod io;
pub mod latent;
pub mod model;
pub mod moments;
pub mod rng;
pub mod sample;
pub mod triad;
pub mod triplet;
pub mod weighted;

pub use error::{Error, ErrorKind, Result};
pub use eval::adjusted_rand_index;
pub use latent::{maximize_latent, ClassificationResult, LatentOptions, PairCriterion};
pub use model::{
    BinaryAffiliationParams, BinaryGraph, FamilyKind, GroupProportions, NodePartition, SparsityKind, SparsityModel,
    WeightFamily, WeightedAffiliationParams, WeightedGraph,
};
pub use moments::{fit_moments, MomentFit, MomentOptions};
pub use rng::RngSeed;
pub use sample::{sample_binary_graph, sample_partition, sample_weighted_graph};
pub use triad::{empirical_moments, theoretical_moments, triad_census, MomentTriple, TriadCensus};
pub use triplet::{fit_triplet_em, TripletEmOptions, TripletFit};
pub use weighted::{fit_weighted, WeightedFit, WeightedOptions};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
