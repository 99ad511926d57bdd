//! Domain types shared by every module: label sets, the block mapping, the
//! partition configuration, transition matrices and priors.
//!
//! Labels are always the contiguous integers `0..k`. Anything that arrives
//! with other label names is canonicalized before it reaches these types.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Label = usize;
pub type LabelSet = BTreeSet<Label>;

/// Row sums and prior totals must match 1 to this absolute tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// The true label set `S = {0, .., k-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSpace {
    k: usize,
}

impl LabelSpace {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidLabelSpace("k must be at least 1".into()));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + Clone {
        0..self.k
    }

    pub fn all(&self) -> LabelSet {
        self.labels().collect()
    }

    pub fn contains(&self, y: Label) -> bool {
        y < self.k
    }

    pub fn check(&self, y: Label) -> Result<()> {
        if self.contains(y) {
            Ok(())
        } else {
            Err(Error::LabelOutOfRange { label: y, k: self.k })
        }
    }
}

/// The block map `B`: each true label `y` owns a set of privatized candidates.
///
/// All blocks have the same cardinality. Self-membership (`y ∈ B(y)`) is
/// checked by [`validate_config`] for every `y` in the privatized set, since
/// binning maps send non-representative values to their bin representative.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockMapping {
    blocks: Vec<LabelSet>,
    block_size: usize,
}

impl BlockMapping {
    /// `blocks[y]` is `B(y)`.
    pub fn new(blocks: Vec<LabelSet>) -> Result<Self> {
        let k = blocks.len();
        if k == 0 {
            return Err(Error::InvalidMapping("mapping has no labels".into()));
        }
        let block_size = blocks[0].len();
        for (y, b) in blocks.iter().enumerate() {
            if b.is_empty() {
                return Err(Error::InvalidMapping(format!("B({y}) is empty")));
            }
            if b.len() != block_size {
                return Err(Error::InvalidMapping(format!(
                    "|B({y})| = {} differs from |B(0)| = {block_size}",
                    b.len()
                )));
            }
            if let Some(&bad) = b.iter().find(|&&t| t >= k) {
                return Err(Error::LabelOutOfRange { label: bad, k });
            }
        }
        Ok(Self { blocks, block_size })
    }

    pub fn identity(k: usize) -> Self {
        Self {
            blocks: (0..k).map(|y| LabelSet::from([y])).collect(),
            block_size: 1,
        }
    }

    /// `B(y) = {y, y+1, .., y+width-1} mod k`.
    pub fn cyclic(k: usize, width: usize) -> Result<Self> {
        if width == 0 || width > k {
            return Err(Error::InvalidMapping(format!(
                "cyclic block width {width} must be in 1..={k}"
            )));
        }
        Self::new(
            (0..k)
                .map(|y| (0..width).map(|d| (y + d) % k).collect())
                .collect(),
        )
    }

    /// Builds a mapping from an explicit map; every label `0..k` must be present.
    pub fn from_map(k: usize, map: &BTreeMap<Label, LabelSet>) -> Result<Self> {
        let mut blocks = Vec::with_capacity(k);
        for y in 0..k {
            match map.get(&y) {
                Some(b) => blocks.push(b.clone()),
                None => return Err(Error::InvalidMapping(format!("B({y}) is missing"))),
            }
        }
        if let Some(&extra) = map.keys().find(|&&y| y >= k) {
            return Err(Error::LabelOutOfRange { label: extra, k });
        }
        Self::new(blocks)
    }

    pub fn to_map(&self) -> BTreeMap<Label, LabelSet> {
        self.blocks.iter().cloned().enumerate().collect()
    }

    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, y: Label) -> &LabelSet {
        &self.blocks[y]
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn is_identity(&self) -> bool {
        self.block_size == 1 && self.blocks.iter().enumerate().all(|(y, b)| b.contains(&y))
    }

    /// `B(set)`: the union of the blocks of every label in `set`.
    pub fn image(&self, set: &LabelSet) -> LabelSet {
        set.iter()
            .flat_map(|&y| self.blocks[y].iter().copied())
            .collect()
    }
}

/// `S~1 = S~ ∩ B(S1)` and `S~2 = S~ \ S~1`.
pub fn derive_output_partition(
    s1: &LabelSet,
    _s2: &LabelSet,
    s_tilde: &LabelSet,
    mapping: &BlockMapping,
) -> (LabelSet, LabelSet) {
    let image = mapping.image(s1);
    let s_tilde1: LabelSet = s_tilde.intersection(&image).copied().collect();
    let s_tilde2: LabelSet = s_tilde.difference(&s_tilde1).copied().collect();
    (s_tilde1, s_tilde2)
}

/// On-disk form of a [`PartitionConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfigFile {
    pub epsilon: f64,
    pub k: usize,
    pub s1: LabelSet,
    pub s2: LabelSet,
    pub s_tilde: LabelSet,
    pub delta: LabelSet,
    pub l: usize,
    /// Absent means the identity mapping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<BTreeMap<Label, LabelSet>>,
}

/// A validated BlockRR configuration: the majority/minority split of the true
/// labels, the privatized set and its induced split, the mitigation set Δ,
/// the budget ε and the block mapping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PartitionConfigFile", into = "PartitionConfigFile")]
pub struct PartitionConfig {
    space: LabelSpace,
    s1: LabelSet,
    s2: LabelSet,
    s_tilde: LabelSet,
    s_tilde1: LabelSet,
    s_tilde2: LabelSet,
    delta: LabelSet,
    epsilon: f64,
    mapping: BlockMapping,
}

impl PartitionConfig {
    pub fn new(
        k: usize,
        s1: LabelSet,
        s2: LabelSet,
        s_tilde: LabelSet,
        delta: LabelSet,
        epsilon: f64,
        mapping: BlockMapping,
    ) -> Result<Self> {
        let l = delta.len();
        validate_config(&PartitionConfigFile {
            epsilon,
            k,
            s1,
            s2,
            s_tilde,
            delta,
            l,
            mapping: Some(mapping.to_map()),
        })
    }

    pub fn space(&self) -> LabelSpace {
        self.space
    }

    pub fn k(&self) -> usize {
        self.space.k()
    }

    pub fn s1(&self) -> &LabelSet {
        &self.s1
    }

    pub fn s2(&self) -> &LabelSet {
        &self.s2
    }

    pub fn s_tilde(&self) -> &LabelSet {
        &self.s_tilde
    }

    pub fn s_tilde1(&self) -> &LabelSet {
        &self.s_tilde1
    }

    pub fn s_tilde2(&self) -> &LabelSet {
        &self.s_tilde2
    }

    pub fn delta(&self) -> &LabelSet {
        &self.delta
    }

    pub fn l(&self) -> usize {
        self.delta.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mapping(&self) -> &BlockMapping {
        &self.mapping
    }

    /// Same partition with a different Δ (and hence l).
    pub fn with_delta(&self, delta: LabelSet) -> Result<Self> {
        Self::new(
            self.k(),
            self.s1.clone(),
            self.s2.clone(),
            self.s_tilde.clone(),
            delta,
            self.epsilon,
            self.mapping.clone(),
        )
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(
            self.k(),
            self.s1.clone(),
            self.s2.clone(),
            self.s_tilde.clone(),
            self.delta.clone(),
            epsilon,
            self.mapping.clone(),
        )
    }

    pub fn to_file(&self) -> PartitionConfigFile {
        PartitionConfigFile {
            epsilon: self.epsilon,
            k: self.k(),
            s1: self.s1.clone(),
            s2: self.s2.clone(),
            s_tilde: self.s_tilde.clone(),
            delta: self.delta.clone(),
            l: self.l(),
            mapping: if self.mapping.is_identity() {
                None
            } else {
                Some(self.mapping.to_map())
            },
        }
    }
}

impl TryFrom<PartitionConfigFile> for PartitionConfig {
    type Error = Error;

    fn try_from(file: PartitionConfigFile) -> Result<Self> {
        validate_config(&file)
    }
}

impl From<PartitionConfig> for PartitionConfigFile {
    fn from(c: PartitionConfig) -> Self {
        c.to_file()
    }
}

/// Validates a raw configuration and returns the checked [`PartitionConfig`].
///
/// Checks run in a fixed order and the first violation is returned: ε, label
/// ranges, the S1/S2 partition, the mapping, the privatized split, Δ, and
/// finally solvability of the normalization system.
pub fn validate_config(file: &PartitionConfigFile) -> Result<PartitionConfig> {
    let epsilon = file.epsilon;
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::NonpositiveEpsilon(epsilon));
    }
    let space = LabelSpace::new(file.k)?;
    for set in [&file.s1, &file.s2, &file.s_tilde, &file.delta] {
        if let Some(&y) = set.iter().find(|&&y| !space.contains(y)) {
            return Err(Error::LabelOutOfRange { label: y, k: space.k() });
        }
    }

    if let Some(&y) = file.s1.intersection(&file.s2).next() {
        return Err(Error::OverlappingPartition(y));
    }
    if let Some(y) = space
        .labels()
        .find(|y| !file.s1.contains(y) && !file.s2.contains(y))
    {
        return Err(Error::IncompletePartition(y));
    }

    let mapping = match &file.mapping {
        Some(map) => BlockMapping::from_map(space.k(), map)?,
        None => BlockMapping::identity(space.k()),
    };

    if file.s_tilde.is_empty() {
        return Err(Error::InconsistentOutputPartition(
            "the privatized label set is empty".into(),
        ));
    }
    if let Some(&y) = file.s_tilde.iter().find(|&&y| !mapping.block(y).contains(&y)) {
        return Err(Error::InvalidMapping(format!(
            "privatized label {y} is not in its own block B({y})"
        )));
    }

    let (s_tilde1, s_tilde2) =
        derive_output_partition(&file.s1, &file.s2, &file.s_tilde, &mapping);

    for &y in &file.s1 {
        if !mapping.block(y).is_subset(&file.s_tilde) {
            return Err(Error::InconsistentOutputPartition(format!(
                "B({y}) for majority label {y} leaves the privatized set"
            )));
        }
    }
    if !s_tilde2.is_empty() {
        for &y in &file.s2 {
            if !mapping.block(y).is_subset(&s_tilde2) {
                return Err(Error::InconsistentOutputPartition(format!(
                    "B({y}) for minority label {y} is not contained in S~2"
                )));
            }
        }
    }

    if !file.delta.is_subset(&s_tilde1) {
        return Err(Error::DeltaOutOfRange(
            "delta must be a subset of S~1".into(),
        ));
    }
    if file.delta.len() != file.l {
        return Err(Error::DeltaOutOfRange(format!(
            "l = {} but |delta| = {}",
            file.l,
            file.delta.len()
        )));
    }

    let config = PartitionConfig {
        space,
        s1: file.s1.clone(),
        s2: file.s2.clone(),
        s_tilde: file.s_tilde.clone(),
        s_tilde1,
        s_tilde2,
        delta: file.delta.clone(),
        epsilon,
        mapping,
    };

    let shape = crate::mechanisms::SystemShape::from_config(&config);
    if !config.s2.is_empty() && config.s_tilde2.is_empty() {
        // Only the second normalization equation constrains the S2 rows, and
        // with no minority outputs it fixes β independently of the first.
        let beta = 1.0 / (shape.a() + shape.s_tilde1 as f64);
        let residual = (shape.s_tilde1 as f64 - shape.l as f64) * beta
            - (1.0 - shape.l as f64 / shape.s_tilde as f64);
        if shape.l != shape.s_tilde1 && residual.abs() > STOCHASTIC_TOL {
            return Err(Error::EmptyOutputWithNonemptySource {
                l: shape.l,
                s_tilde1: shape.s_tilde1,
            });
        }
    }
    let bg = shape.solve()?;
    debug_assert!(bg.beta >= 0.0 && bg.gamma >= -STOCHASTIC_TOL);
    Ok(config)
}

/// Row-stochastic conditional distribution `p(ỹ | y)` over `S × S~`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixFile", into = "MatrixFile")]
pub struct MechanismMatrix {
    input_labels: Vec<Label>,
    output_labels: Vec<Label>,
    p: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixFile {
    pub input_labels: Vec<Label>,
    pub output_labels: Vec<Label>,
    pub p: Vec<Vec<f64>>,
}

impl MechanismMatrix {
    pub fn new(input_labels: Vec<Label>, output_labels: Vec<Label>, p: Vec<Vec<f64>>) -> Result<Self> {
        let m = Self::new_unnormalized(input_labels, output_labels, p)?;
        for (i, row) in m.p.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::MalformedMatrix(format!(
                    "row for label {} sums to {s}",
                    m.input_labels[i]
                )));
            }
        }
        Ok(m)
    }

    /// Shape, finiteness and sign checks only; rows need not sum to one.
    /// Used for constructing deliberate violations in verification tests.
    pub fn new_unnormalized(
        input_labels: Vec<Label>,
        output_labels: Vec<Label>,
        p: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if input_labels.is_empty() || output_labels.is_empty() {
            return Err(Error::MalformedMatrix("empty label list".into()));
        }
        if !is_distinct(&input_labels) || !is_distinct(&output_labels) {
            return Err(Error::MalformedMatrix("duplicate labels".into()));
        }
        if p.len() != input_labels.len() {
            return Err(Error::MalformedMatrix(format!(
                "{} rows for {} input labels",
                p.len(),
                input_labels.len()
            )));
        }
        for (i, row) in p.iter().enumerate() {
            if row.len() != output_labels.len() {
                return Err(Error::MalformedMatrix(format!(
                    "row {i} has {} entries for {} output labels",
                    row.len(),
                    output_labels.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::MalformedMatrix(format!(
                    "row {i} has invalid entry {v}"
                )));
            }
        }
        Ok(Self {
            input_labels,
            output_labels,
            p,
        })
    }

    pub fn input_labels(&self) -> &[Label] {
        &self.input_labels
    }

    pub fn output_labels(&self) -> &[Label] {
        &self.output_labels
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.p
    }

    pub fn n_inputs(&self) -> usize {
        self.input_labels.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.output_labels.len()
    }

    pub fn input_index(&self, y: Label) -> Option<usize> {
        self.input_labels.iter().position(|&v| v == y)
    }

    pub fn output_index(&self, y: Label) -> Option<usize> {
        self.output_labels.iter().position(|&v| v == y)
    }

    /// Row for true label `y`.
    pub fn row(&self, y: Label) -> Option<&[f64]> {
        self.input_index(y).map(|i| self.p[i].as_slice())
    }

    /// `p(ỹ | y)`; zero when `ỹ` is not an output label.
    pub fn prob(&self, y: Label, y_tilde: Label) -> Option<f64> {
        let i = self.input_index(y)?;
        Some(self.output_index(y_tilde).map_or(0.0, |j| self.p[i][j]))
    }

    /// Largest absolute entrywise difference; `None` if the label lists differ.
    pub fn max_abs_diff(&self, other: &MechanismMatrix) -> Option<f64> {
        if self.input_labels != other.input_labels || self.output_labels != other.output_labels {
            return None;
        }
        Some(
            self.p
                .iter()
                .zip(&other.p)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max),
        )
    }
}

fn is_distinct(v: &[Label]) -> bool {
    let set: LabelSet = v.iter().copied().collect();
    set.len() == v.len()
}

impl TryFrom<MatrixFile> for MechanismMatrix {
    type Error = Error;

    fn try_from(f: MatrixFile) -> Result<Self> {
        Self::new(f.input_labels, f.output_labels, f.p)
    }
}

impl From<MechanismMatrix> for MatrixFile {
    fn from(m: MechanismMatrix) -> Self {
        MatrixFile {
            input_labels: m.input_labels,
            output_labels: m.output_labels,
            p: m.p,
        }
    }
}

impl fmt::Display for MechanismMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>6}", "y\\ỹ")?;
        for o in &self.output_labels {
            write!(f, " {o:>9}")?;
        }
        writeln!(f)?;
        for (y, row) in self.input_labels.iter().zip(&self.p) {
            write!(f, "{y:>6}")?;
            for v in row {
                write!(f, " {v:>9.6}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// A label prior `p = [p_0 .. p_{K-1}]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorFile", into = "PriorFile")]
pub struct PriorDistribution {
    probs: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PriorFile {
    pub k: usize,
    pub p: Vec<f64>,
}

impl PriorDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidPrior("no classes".into()));
        }
        if let Some(v) = probs.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidPrior(format!("invalid entry {v}")));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidPrior(format!("entries sum to {s}")));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights; fails if they sum to zero.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidPrior(format!("weights sum to {total}")));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidPrior("no classes".into()));
        }
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, y: Label) -> f64 {
        self.probs[y]
    }

    /// Labels sorted by descending probability, ties by ascending label.
    pub fn ranked(&self) -> Vec<Label> {
        let mut idx: Vec<Label> = (0..self.k()).collect();
        idx.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        idx
    }
}

impl TryFrom<PriorFile> for PriorDistribution {
    type Error = Error;

    fn try_from(f: PriorFile) -> Result<Self> {
        if f.k != f.p.len() {
            return Err(Error::InvalidPrior(format!(
                "k = {} but {} probabilities given",
                f.k,
                f.p.len()
            )));
        }
        Self::new(f.p)
    }
}

impl From<PriorDistribution> for PriorFile {
    fn from(p: PriorDistribution) -> Self {
        PriorFile {
            k: p.k(),
            p: p.probs,
        }
    }
}
