//! Prior-driven partitioning and the two-stage dataset randomization
//! pipeline.
//!
//! The dataset is split into disjoint parts `D1` and `D2`. The prior is
//! estimated on `D1`, the weight matrix turns it into the `S1`/`S2` split and
//! Δ, and BlockRR privatizes `D2`. Both stages spend the full ε because they
//! touch disjoint records.

use std::collections::BTreeSet;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::dataset::{LabelDataset, LabelRecord, RandomizedDataset, RandomizedRecord};
use crate::error::{Error, Result};
use crate::mechanisms::{build_blockrr_matrix, MatrixSampler};
use crate::prior::{estimate_prior, PriorEstimate};
use crate::rng::RandomStream;
use crate::types::{
    derive_output_partition, BlockMapping, Label, LabelSet, MechanismMatrix, PartitionConfig,
    PartitionConfigFile, PriorDistribution,
};

pub const DEFAULT_SPLIT_FRACTION: f64 = 0.01;

/// `w_ij = p_j·exp(−1(i≠j)/σ)` for rows `i ∈ S` and columns `j ∈ S~`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    pub sigma: f64,
    pub columns: Vec<Label>,
    pub w: Vec<Vec<f64>>,
    /// `w_ii = p_i`, kept for rows whose label is not a column.
    pub diagonal: Vec<f64>,
}

impl WeightMatrix {
    pub fn k(&self) -> usize {
        self.w.len()
    }

    /// `e^{−1/σ}`.
    pub fn off_diagonal_factor(&self) -> f64 {
        (-1.0 / self.sigma).exp()
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::NonpositiveSigma(sigma));
    }
    Ok(())
}

pub fn build_weight_matrix(
    prior: &PriorDistribution,
    sigma: f64,
    s_tilde: &LabelSet,
) -> Result<WeightMatrix> {
    check_sigma(sigma)?;
    let k = prior.k();
    if let Some(&j) = s_tilde.iter().find(|&&j| j >= k) {
        return Err(Error::LabelOutOfRange { label: j, k });
    }
    let factor = (-1.0 / sigma).exp();
    let p = prior.probs();
    let w = (0..k)
        .map(|i| {
            s_tilde
                .iter()
                .map(|&j| if i == j { p[j] } else { p[j] * factor })
                .collect()
        })
        .collect();
    Ok(WeightMatrix {
        sigma,
        columns: s_tilde.iter().copied().collect(),
        w,
        diagonal: p.to_vec(),
    })
}

/// `S1 = {i : w_ii ≥ w_ij ∀ j ∈ S~}` by scanning each row; `S2` is the rest.
pub fn split_by_weights(w: &WeightMatrix) -> (LabelSet, LabelSet) {
    (0..w.k()).partition(|&i| w.w[i].iter().all(|&wij| w.diagonal[i] >= wij))
}

/// The same split through the threshold `e^{−1/σ}·max_{j∈S~} p_j`.
pub fn split_by_threshold(
    prior: &PriorDistribution,
    sigma: f64,
    s_tilde: &LabelSet,
) -> Result<(LabelSet, LabelSet)> {
    check_sigma(sigma)?;
    let max = s_tilde
        .iter()
        .map(|&j| prior.get(j))
        .fold(f64::NEG_INFINITY, f64::max);
    let factor = (-1.0 / sigma).exp();
    Ok((0..prior.k()).partition(|&i| prior.get(i) >= max * factor))
}

/// The `l` labels of `s_tilde1` with the largest prior, ties to the smaller
/// label.
pub fn select_delta(prior: &PriorDistribution, s_tilde1: &LabelSet, l: usize) -> Result<LabelSet> {
    if l > s_tilde1.len() {
        return Err(Error::LOutOfRange {
            l,
            max: s_tilde1.len(),
        });
    }
    Ok(prior
        .ranked()
        .into_iter()
        .filter(|y| s_tilde1.contains(y))
        .take(l)
        .collect())
}

/// Partition derived from a prior: the weight split, then Δ. When the split
/// leaves no minority labels the result is the RR configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivedPartition {
    pub config: PartitionConfig,
    pub weights: WeightMatrix,
    pub l_requested: usize,
    pub l_effective: usize,
    /// `S2 = ∅`; Δ and l were ignored.
    pub degraded_to_rr: bool,
}

pub fn derive_partition(
    prior: &PriorDistribution,
    epsilon: f64,
    sigma: f64,
    l: usize,
    mapping: &BlockMapping,
) -> Result<DerivedPartition> {
    let k = prior.k();
    if mapping.k() != k {
        return Err(Error::InvalidMapping(format!(
            "mapping covers {} labels but the prior has {k}",
            mapping.k()
        )));
    }
    let s_tilde: LabelSet = (0..k).collect();
    let weights = build_weight_matrix(prior, sigma, &s_tilde)?;
    let (s1, s2) = split_by_weights(&weights);
    let (s_tilde1, _) = derive_output_partition(&s1, &s2, &s_tilde, mapping);

    let degraded_to_rr = s2.is_empty();
    let l_effective = if degraded_to_rr {
        0
    } else if l > s_tilde1.len() {
        warn!(
            "l = {l} exceeds |S~1| = {}; clamping to {}",
            s_tilde1.len(),
            s_tilde1.len()
        );
        s_tilde1.len()
    } else {
        l
    };
    let delta = select_delta(prior, &s_tilde1, l_effective)?;
    let config = PartitionConfig::new(k, s1, s2, s_tilde, delta, epsilon, mapping.clone())?;
    Ok(DerivedPartition {
        config,
        weights,
        l_requested: l,
        l_effective,
        degraded_to_rr,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub partition: PartitionConfig,
    pub prior: PriorDistribution,
    pub sigma: f64,
    pub split_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineParams {
    pub epsilon: f64,
    pub sigma: f64,
    pub l: usize,
    pub mapping: Option<BlockMapping>,
    pub split_fraction: f64,
}

impl PipelineParams {
    pub fn new(epsilon: f64, sigma: f64, l: usize) -> Self {
        Self {
            epsilon,
            sigma,
            l,
            mapping: None,
            split_fraction: DEFAULT_SPLIT_FRACTION,
        }
    }
}

/// Everything produced before randomization.
#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub config: PipelineConfig,
    pub prior_estimate: PriorEstimate,
    pub derived: DerivedPartition,
    pub d1_ids: BTreeSet<u64>,
    /// `D2` in input order, with each record's row position in the input.
    pub d2: Vec<(u64, LabelRecord)>,
}

impl PipelineOutcome {
    pub fn d2_dataset(&self) -> LabelDataset {
        let records = self.d2.iter().map(|&(_, r)| r).collect();
        LabelDataset::new(self.config.partition.k(), records)
            .expect("subset of a valid dataset")
    }

    pub fn d2_ids(&self) -> BTreeSet<u64> {
        self.d2.iter().map(|(_, r)| r.id).collect()
    }

    pub fn matrix(&self) -> Result<MechanismMatrix> {
        build_blockrr_matrix(&self.config.partition)
    }
}

/// Size of `D1` for `n` records.
pub fn split_sizes(n: usize, split_fraction: f64) -> Result<(usize, usize)> {
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::InvalidSplitFraction(split_fraction));
    }
    let d1 = (split_fraction * n as f64).round() as usize;
    let d1 = d1.min(n);
    let d2 = n - d1;
    if d1 == 0 || d2 == 0 {
        return Err(Error::EmptySplit { d1, d2 });
    }
    Ok((d1, d2))
}

/// Splits, estimates the prior on `D1` and derives the partition.
///
/// Records are put in id order before the seeded shuffle, so the split
/// depends on the record set and the seed but not on file order.
pub fn build_pipeline(
    dataset: &LabelDataset,
    params: &PipelineParams,
    stream: &RandomStream,
) -> Result<PipelineOutcome> {
    let k = dataset.k();
    let (n1, _) = split_sizes(dataset.len(), params.split_fraction)?;

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_unstable_by_key(|&i| dataset.records()[i].id);
    stream.fork("split").shuffle(&mut order);
    let d1_positions: BTreeSet<usize> = order[..n1].iter().copied().collect();

    let d1_labels: Vec<Label> = d1_positions
        .iter()
        .map(|&i| dataset.records()[i].label)
        .collect();
    let prior_estimate = estimate_prior(&d1_labels, params.epsilon, k, &mut stream.fork("prior"))?;

    let mapping = params
        .mapping
        .clone()
        .unwrap_or_else(|| BlockMapping::identity(k));
    let derived = derive_partition(
        &prior_estimate.prior,
        params.epsilon,
        params.sigma,
        params.l,
        &mapping,
    )?;
    info!(
        "split {}/{}; |S1| = {}, |S2| = {}, l = {}",
        n1,
        dataset.len() - n1,
        derived.config.s1().len(),
        derived.config.s2().len(),
        derived.l_effective
    );

    let d1_ids = d1_positions
        .iter()
        .map(|&i| dataset.records()[i].id)
        .collect();
    let d2 = dataset
        .records()
        .iter()
        .enumerate()
        .filter(|(i, _)| !d1_positions.contains(i))
        .map(|(i, &r)| (i as u64, r))
        .collect();
    Ok(PipelineOutcome {
        config: PipelineConfig {
            partition: derived.config.clone(),
            prior: prior_estimate.prior.clone(),
            sigma: params.sigma,
            split_fraction: params.split_fraction,
        },
        prior_estimate,
        derived,
        d1_ids,
        d2,
    })
}

fn randomize_one(
    sampler: &MatrixSampler<'_>,
    stream: &RandomStream,
    position: u64,
    record: &LabelRecord,
) -> Result<RandomizedRecord> {
    let label = sampler.sample(record.label, &mut stream.substream(record.id))?;
    Ok(RandomizedRecord {
        id: record.id,
        label,
        original_index: position,
    })
}

/// Privatizes `(position, record)` pairs. Record `id` always draws from
/// substream `id`, so the result does not depend on order or threading.
pub fn randomize_records(
    records: &[(u64, LabelRecord)],
    config: &PartitionConfig,
    stream: &RandomStream,
) -> Result<RandomizedDataset> {
    let matrix = build_blockrr_matrix(config)?;
    let sampler = MatrixSampler::new(&matrix);
    #[cfg(feature = "parallel")]
    let out: Result<Vec<_>> = {
        use rayon::prelude::*;
        records
            .par_iter()
            .map(|(pos, r)| randomize_one(&sampler, stream, *pos, r))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let out: Result<Vec<_>> = records
        .iter()
        .map(|(pos, r)| randomize_one(&sampler, stream, *pos, r))
        .collect();
    Ok(RandomizedDataset { records: out? })
}

/// Privatizes every record of `d2`; `original_index` is the position in `d2`.
pub fn randomize_dataset(
    d2: &LabelDataset,
    config: &PartitionConfig,
    stream: &RandomStream,
) -> Result<RandomizedDataset> {
    let indexed: Vec<(u64, LabelRecord)> = d2
        .records()
        .iter()
        .enumerate()
        .map(|(i, &r)| (i as u64, r))
        .collect();
    randomize_records(&indexed, config, stream)
}

/// Audit record of one pipeline run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub epsilon: f64,
    pub sigma: f64,
    pub l_requested: usize,
    pub l_effective: usize,
    pub split_fraction: f64,
    pub n_total: usize,
    pub n_d1: usize,
    pub n_d2: usize,
    pub degraded_to_rr: bool,
    pub prior_degenerate: bool,
    pub prior: Vec<f64>,
    pub partition: PartitionConfigFile,
    pub beta: f64,
    pub gamma: f64,
}

/// Output of [`run_pipeline`].
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub outcome: PipelineOutcome,
    pub randomized: RandomizedDataset,
    pub manifest: RunManifest,
}

/// The whole pipeline under one seed.
pub fn run_pipeline(dataset: &LabelDataset, params: &PipelineParams, seed: u64) -> Result<PipelineRun> {
    let root = RandomStream::new(seed);
    let outcome = build_pipeline(dataset, params, &root)?;
    let randomized = randomize_records(&outcome.d2, &outcome.config.partition, &root.fork("randomize"))?;
    let bg = crate::mechanisms::solve_beta_gamma(&outcome.config.partition)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        epsilon: params.epsilon,
        sigma: params.sigma,
        l_requested: outcome.derived.l_requested,
        l_effective: outcome.derived.l_effective,
        split_fraction: params.split_fraction,
        n_total: dataset.len(),
        n_d1: outcome.d1_ids.len(),
        n_d2: outcome.d2.len(),
        degraded_to_rr: outcome.derived.degraded_to_rr,
        prior_degenerate: outcome.prior_estimate.degenerate,
        prior: outcome.prior_estimate.prior.probs().to_vec(),
        partition: outcome.config.partition.to_file(),
        beta: bg.beta,
        gamma: bg.gamma,
    };
    Ok(PipelineRun {
        outcome,
        randomized,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prior(p: &[f64]) -> PriorDistribution {
        PriorDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn weight_entries() {
        let w = build_weight_matrix(&prior(&[0.4, 0.3, 0.2, 0.1]), 1.0, &(0..4).collect()).unwrap();
        assert_eq!(w.w[0][0], 0.4);
        assert!((w.w[0][1] - 0.110_364).abs() < 1e-6);
        assert_eq!(w.w[2][1], 0.3 * (-1.0f64).exp());
    }

    #[test]
    fn sigma_must_be_positive() {
        let p = prior(&[0.5, 0.5]);
        let s: LabelSet = (0..2).collect();
        assert_eq!(build_weight_matrix(&p, 0.0, &s).unwrap_err().code(), "NONPOSITIVE_SIGMA");
        assert!(build_weight_matrix(&p, -1.0, &s).is_err());
        assert!(split_by_threshold(&p, f64::NAN, &s).is_err());
    }

    #[test]
    fn split_example() {
        let p = prior(&[0.4, 0.3, 0.2, 0.1]);
        let s: LabelSet = (0..4).collect();
        let w = build_weight_matrix(&p, 1.0, &s).unwrap();
        // Independent scan: compare w_ii against every other entry in its row.
        let mut s1 = LabelSet::new();
        for i in 0..4 {
            if (0..4).all(|j| w.w[i][i] >= w.w[i][j]) {
                s1.insert(i);
            }
        }
        assert_eq!(s1, LabelSet::from([0, 1, 2]));
        assert_eq!(split_by_weights(&w), (s1, LabelSet::from([3])));
        assert!((0.4 * (-1.0f64).exp() - 0.147_152).abs() < 1e-6);
    }

    #[test]
    fn uniform_prior_keeps_everything_majority() {
        let p = PriorDistribution::uniform(6).unwrap();
        for sigma in [0.01, 1.0, 1e9] {
            let w = build_weight_matrix(&p, sigma, &(0..6).collect()).unwrap();
            assert_eq!(split_by_weights(&w).1, LabelSet::new());
        }
    }

    #[test]
    fn huge_sigma_keeps_only_the_mode() {
        let p = prior(&[0.4, 0.3, 0.2, 0.1]);
        let w = build_weight_matrix(&p, 1e9, &(0..4).collect()).unwrap();
        assert_eq!(split_by_weights(&w).0, LabelSet::from([0]));
    }

    #[test]
    fn rows_outside_s_tilde() {
        let p = prior(&[0.1, 0.5, 0.4]);
        let w = build_weight_matrix(&p, 1.0, &LabelSet::from([1, 2])).unwrap();
        assert_eq!(w.k(), 3);
        assert_eq!(w.w[0].len(), 2);
        assert_eq!(w.diagonal[0], 0.1);
        let (s1, s2) = split_by_weights(&w);
        assert_eq!((s1.clone(), s2.clone()), split_by_threshold(&p, 1.0, &LabelSet::from([1, 2])).unwrap());
        assert!(s2.contains(&0));
    }

    #[test]
    fn delta_selection() {
        let p = prior(&[0.4, 0.3, 0.2, 0.1]);
        let s1 = LabelSet::from([0, 1, 2]);
        assert!(select_delta(&p, &s1, 0).unwrap().is_empty());
        assert_eq!(select_delta(&p, &s1, 2).unwrap(), LabelSet::from([0, 1]));
        let e = select_delta(&p, &s1, 4).unwrap_err();
        assert_eq!(e.code(), "L_OUT_OF_RANGE");
        let tied = PriorDistribution::uniform(4).unwrap();
        assert_eq!(select_delta(&tied, &(0..4).collect(), 1).unwrap(), LabelSet::from([0]));
        // Only labels inside S~1 are eligible.
        assert_eq!(select_delta(&p, &LabelSet::from([2, 3]), 1).unwrap(), LabelSet::from([2]));
    }

    #[test]
    fn derive_partition_clamps_l_and_degrades() {
        let p = prior(&[0.4, 0.3, 0.2, 0.1]);
        let d = derive_partition(&p, 1.0, 1.0, 10, &BlockMapping::identity(4)).unwrap();
        assert_eq!(d.l_effective, 3);
        assert_eq!(d.config.delta(), &LabelSet::from([0, 1, 2]));
        assert!(!d.degraded_to_rr);

        let u = PriorDistribution::uniform(4).unwrap();
        let d = derive_partition(&u, 1.0, 1.0, 2, &BlockMapping::identity(4)).unwrap();
        assert!(d.degraded_to_rr);
        assert_eq!(d.config.l(), 0);
    }

    #[test]
    fn split_sizes_rounding() {
        assert_eq!(split_sizes(50_000, 0.01).unwrap(), (500, 49_500));
        assert_eq!(split_sizes(10, 0.01).unwrap_err().code(), "EMPTY_SPLIT");
        assert_eq!(split_sizes(10, 0.99).unwrap_err().code(), "EMPTY_SPLIT");
        assert_eq!(split_sizes(10, 1.0).unwrap_err().code(), "INVALID_SPLIT_FRACTION");
        assert_eq!(split_sizes(10, 0.0).unwrap_err().code(), "INVALID_SPLIT_FRACTION");
    }

    fn small_dataset() -> LabelDataset {
        let labels: Vec<Label> = (0..2000).map(|i| [0, 0, 0, 1, 1, 2, 3][i % 7]).collect();
        LabelDataset::from_labels(4, &labels).unwrap()
    }

    #[test]
    fn pipeline_parts_are_disjoint_and_cover() {
        let d = small_dataset();
        let mut params = PipelineParams::new(1.0, 1.0, 1);
        params.split_fraction = 0.1;
        let out = build_pipeline(&d, &params, &RandomStream::new(5)).unwrap();
        assert_eq!(out.d1_ids.len(), 200);
        assert!(out.d1_ids.is_disjoint(&out.d2_ids()));
        let all: BTreeSet<u64> = out.d1_ids.union(&out.d2_ids()).copied().collect();
        assert_eq!(all, d.ids());
    }

    #[test]
    fn pipeline_is_deterministic_and_order_free() {
        let d = small_dataset();
        let mut params = PipelineParams::new(2.0, 0.8, 1);
        params.split_fraction = 0.1;
        let a = run_pipeline(&d, &params, 11).unwrap();
        let b = run_pipeline(&d, &params, 11).unwrap();
        assert_eq!(a.randomized, b.randomized);
        assert_eq!(a.manifest, b.manifest);

        let mut rev = d.records().to_vec();
        rev.reverse();
        let c = run_pipeline(&d.subset(rev), &params, 11).unwrap();
        assert_eq!(a.randomized.by_id(), c.randomized.by_id());
    }

    #[test]
    fn randomize_is_order_independent() {
        let config = crate::mechanisms::tables::rr_split_block(4, 1.0, &LabelSet::from([0, 1])).unwrap();
        let d = small_dataset();
        let s = RandomStream::new(3);
        let a = randomize_dataset(&d, &config, &s).unwrap();
        let mut shuffled = d.records().to_vec();
        RandomStream::new(99).shuffle(&mut shuffled);
        let b = randomize_dataset(&d.subset(shuffled), &config, &s).unwrap();
        assert_eq!(a.by_id(), b.by_id());
    }

    #[test]
    fn large_epsilon_keeps_labels() {
        let config = crate::mechanisms::tables::rr_single_block(4, 50.0).unwrap();
        let labels: Vec<Label> = (0..100_000).map(|i| i % 4).collect();
        let d = LabelDataset::from_labels(4, &labels).unwrap();
        let r = randomize_dataset(&d, &config, &RandomStream::new(1)).unwrap();
        let kept = r
            .records
            .iter()
            .zip(d.records())
            .filter(|(a, b)| a.label == b.label)
            .count();
        assert!(kept as f64 >= 0.999 * 100_000.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn threshold_equals_row_scan(
            weights in prop::collection::vec(0.0f64..1.0, 1..12),
            sigma in 0.01f64..20.0,
        ) {
            prop_assume!(weights.iter().sum::<f64>() > 0.0);
            let p = PriorDistribution::from_weights(&weights).unwrap();
            let s: LabelSet = (0..p.k()).collect();
            let w = build_weight_matrix(&p, sigma, &s).unwrap();
            prop_assert_eq!(split_by_weights(&w), split_by_threshold(&p, sigma, &s).unwrap());
        }

        #[test]
        fn s1_shrinks_as_sigma_grows(
            weights in prop::collection::vec(0.0f64..1.0, 1..12),
            sigma in 0.01f64..10.0,
            bump in 0.0f64..10.0,
        ) {
            prop_assume!(weights.iter().sum::<f64>() > 0.0);
            let p = PriorDistribution::from_weights(&weights).unwrap();
            let s: LabelSet = (0..p.k()).collect();
            let (small, _) = split_by_threshold(&p, sigma, &s).unwrap();
            let (large, _) = split_by_threshold(&p, sigma + bump, &s).unwrap();
            prop_assert!(large.is_subset(&small));
        }
    }
}
