//! BlockRR parameter configurations that recover each baseline mechanism.
//!
//! Single-block shapes put every true label in the majority block (or, for
//! the prior-based mechanisms, send the minority block uniformly over Δ = S~).
//! Split-block shapes divide the labels but set `l = 0`, where `β = γ`.

use crate::error::{Error, Result};
use crate::mechanisms::baseline::choose_topk;
use crate::mechanisms::regression::{RegressionMechanismConfig, RpWithPriorGrid};
use crate::types::{BlockMapping, Label, LabelSet, PartitionConfig, PriorDistribution};

/// RR: `S1 = S`, `S2 = ∅`, `B = I`.
pub fn rr_single_block(k: usize, epsilon: f64) -> Result<PartitionConfig> {
    PartitionConfig::new(
        k,
        (0..k).collect(),
        LabelSet::new(),
        (0..k).collect(),
        LabelSet::new(),
        epsilon,
        BlockMapping::identity(k),
    )
}

/// RR with an arbitrary nonempty minority block and `l = 0`.
pub fn rr_split_block(k: usize, epsilon: f64, s1: &LabelSet) -> Result<PartitionConfig> {
    let s2: LabelSet = (0..k).filter(|y| !s1.contains(y)).collect();
    PartitionConfig::new(
        k,
        s1.clone(),
        s2,
        (0..k).collect(),
        LabelSet::new(),
        epsilon,
        BlockMapping::identity(k),
    )
}

/// RRWithPrior: `S1 = S~ = Y_k`, `S2` the rest, `Δ = S~1` (`l = |S~1|`).
pub fn rrwithprior_config(prior: &PriorDistribution, epsilon: f64) -> Result<PartitionConfig> {
    let k = prior.k();
    let top = choose_topk(prior, epsilon).y_k;
    let s2: LabelSet = (0..k).filter(|y| !top.contains(y)).collect();
    PartitionConfig::new(
        k,
        top.clone(),
        s2,
        top.clone(),
        top,
        epsilon,
        BlockMapping::identity(k),
    )
}

/// RRonBins: `S1 = S` (grid labels), `S~` the bin representatives, `B = Φ`.
pub fn rronbins_single_block(config: &RegressionMechanismConfig) -> Result<PartitionConfig> {
    let bins = &config.bin_map;
    let n = bins.grid().len;
    PartitionConfig::new(
        n,
        (0..n).collect(),
        LabelSet::new(),
        bins.representatives().iter().copied().collect(),
        LabelSet::new(),
        config.epsilon,
        bins.block_mapping(),
    )
}

/// RRonBins with the grid labels of `minority_bins` in `S2` and `l = 0`.
pub fn rronbins_split_block(
    config: &RegressionMechanismConfig,
    minority_bins: &LabelSet,
) -> Result<PartitionConfig> {
    let bins = &config.bin_map;
    if let Some(&b) = minority_bins.iter().find(|&&b| b >= bins.bin_count()) {
        return Err(Error::EmptyBins(format!("bin {b} does not exist")));
    }
    let n = bins.grid().len;
    let (s2, s1): (Vec<Label>, Vec<Label>) =
        (0..n).partition(|&i| minority_bins.contains(&bins.bin_of_label(i)));
    PartitionConfig::new(
        n,
        s1.into_iter().collect(),
        s2.into_iter().collect(),
        bins.representatives().iter().copied().collect(),
        LabelSet::new(),
        config.epsilon,
        bins.block_mapping(),
    )
}

/// Discretized RPWithPrior: grid labels in `I` form `S1`, the margin of
/// `N_I` forms `S2`, `B` is the `±δ` window and `Δ = S~ = N_I`.
pub fn rpwithprior_config(grid: &RpWithPriorGrid) -> Result<PartitionConfig> {
    let n = grid.len();
    let s1 = grid.interval_labels();
    let s2: LabelSet = (0..n).filter(|i| !s1.contains(i)).collect();
    PartitionConfig::new(
        n,
        s1,
        s2,
        (0..n).collect(),
        (0..n).collect(),
        grid.config().epsilon,
        grid.block_mapping(),
    )
}
