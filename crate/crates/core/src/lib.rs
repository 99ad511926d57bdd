//! Block-structured randomized response for label differential privacy.
//!
//! The crate builds BlockRR transition matrices from a label partition,
//! estimates a private label prior, derives the partition from that prior,
//! randomizes datasets, and verifies the resulting mechanisms.

pub mod dataset;
pub mod error;
pub mod mechanisms;
pub mod partition;
pub mod prior;
pub mod rng;
pub mod types;
pub mod verifier;

pub use error::{Error, Result};
pub use mechanisms::{
    build_blockrr_matrix, build_rr_matrix, build_rrwithprior_matrix, choose_topk, sample_label,
    solve_beta_gamma, BetaGamma,
};
pub use prior::{estimate_prior, PriorEstimate};
pub use rng::RandomStream;
pub use types::{
    validate_config, BlockMapping, Label, LabelSet, LabelSpace, MechanismMatrix,
    PartitionConfig, PartitionConfigFile, PriorDistribution,
};
