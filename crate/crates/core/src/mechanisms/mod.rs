//! Transition matrices for BlockRR and the mechanisms it generalizes, plus
//! seeded sampling from them.

mod baseline;
mod blockrr;
pub mod regression;
mod sampling;
pub mod tables;

pub use baseline::{build_rr_matrix, build_rrwithprior_matrix, choose_topk, TopKSelection};
pub use blockrr::{build_blockrr_matrix, solve_beta_gamma, BetaGamma, SystemShape};
pub use regression::{
    build_rpwithprior_grid_matrix, build_rronbins_matrix, rpwithprior_density,
    rpwithprior_neighborhood_mass, sample_rpwithprior, sample_rronbins, BinMap,
    RegressionMechanismConfig, RpWithPriorGrid, ValueGrid,
};
pub use sampling::{sample_label, MatrixSampler, RowSampler};
