//! Machine checks for the mechanisms: label-DP ratios, monotonicity in `l`,
//! agreement with the baseline mechanisms, LP feasibility and tightness, and
//! Monte Carlo sampling fidelity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::regression::{
    build_rpwithprior_grid_matrix, rpwithprior_density, sample_rpwithprior,
    RegressionMechanismConfig, RpWithPriorGrid,
};
use crate::mechanisms::tables;
use crate::mechanisms::{
    build_blockrr_matrix, build_rr_matrix, build_rronbins_matrix, build_rrwithprior_matrix,
    solve_beta_gamma, RowSampler, SystemShape,
};
use crate::rng::RandomStream;
use crate::types::{
    BlockMapping, Label, LabelSet, MechanismMatrix, PartitionConfig, PriorDistribution,
    STOCHASTIC_TOL,
};

/// Relative slack on the `e^ε` ratio bound.
pub const DP_RATIO_TOL: f64 = 1e-9;
/// Absolute tolerance on matrix agreement and LP equalities.
pub const EXACT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl NamedCheck {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Infinite when some column mixes zero and positive entries. Serialized
    /// as `null` in that case.
    pub max_ratio: f64,
    pub epsilon_bound: f64,
    pub dp_pass: bool,
    pub worst_column: Option<Label>,
    pub row_residuals: Vec<f64>,
    pub notes: Vec<NamedCheck>,
}

fn check_entries(matrix: &MechanismMatrix) -> Result<()> {
    if matrix.n_inputs() == 0 || matrix.n_outputs() == 0 {
        return Err(Error::MalformedMatrix("matrix has no rows or columns".into()));
    }
    for (i, row) in matrix.rows().iter().enumerate() {
        if row.len() != matrix.n_outputs() {
            return Err(Error::MalformedMatrix(format!("row {i} has {} entries", row.len())));
        }
        if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::MalformedMatrix(format!("row {i} has entry {p}")));
        }
    }
    Ok(())
}

/// Largest `max/min` over the positive entries of each column; a column that
/// mixes zeros and positives has ratio `∞`; all-zero columns are skipped.
pub fn column_ratios(matrix: &MechanismMatrix) -> Vec<Option<f64>> {
    (0..matrix.n_outputs())
        .map(|j| {
            let col = matrix.rows().iter().map(|r| r[j]);
            let max = col.clone().fold(0.0f64, f64::max);
            if max == 0.0 {
                return None;
            }
            let min = col.fold(f64::INFINITY, f64::min);
            Some(if min == 0.0 { f64::INFINITY } else { max / min })
        })
        .collect()
}

pub fn check_label_dp(matrix: &MechanismMatrix, epsilon: f64) -> Result<VerificationReport> {
    check_entries(matrix)?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::NonpositiveEpsilon(epsilon));
    }
    let bound = epsilon.exp();
    let ratios = column_ratios(matrix);
    let (worst, max_ratio) = ratios
        .iter()
        .enumerate()
        .filter_map(|(j, r)| r.map(|r| (j, r)))
        .fold((None, 1.0f64), |(bj, br), (j, r)| {
            if r > br {
                (Some(j), r)
            } else {
                (bj, br)
            }
        });
    let mixed: Vec<Label> = ratios
        .iter()
        .enumerate()
        .filter(|(_, r)| **r == Some(f64::INFINITY))
        .map(|(j, _)| matrix.output_labels()[j])
        .collect();
    let skipped = ratios.iter().filter(|r| r.is_none()).count();
    let dp_pass = mixed.is_empty() && max_ratio <= bound * (1.0 + DP_RATIO_TOL);
    let row_residuals: Vec<f64> = matrix
        .rows()
        .iter()
        .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
        .collect();
    let worst_residual = row_residuals.iter().copied().fold(0.0, f64::max);
    let notes = vec![
        NamedCheck::new(
            "column_ratio",
            max_ratio <= bound * (1.0 + DP_RATIO_TOL),
            format!("max ratio {max_ratio} against e^eps = {bound}"),
        ),
        NamedCheck::new(
            "mixed_zero_columns",
            mixed.is_empty(),
            format!("columns mixing zero and positive entries: {mixed:?}"),
        ),
        NamedCheck::new(
            "zero_columns_skipped",
            true,
            format!("{skipped} all-zero columns"),
        ),
        NamedCheck::new(
            "row_stochastic",
            worst_residual <= STOCHASTIC_TOL,
            format!("max |row sum - 1| = {worst_residual:e}"),
        ),
    ];
    Ok(VerificationReport {
        max_ratio,
        epsilon_bound: bound,
        dp_pass,
        worst_column: worst.map(|j| matrix.output_labels()[j]),
        row_residuals,
        notes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub beta_nondecreasing: bool,
    pub gamma_nonincreasing: bool,
    pub equal_at_zero: bool,
    /// `max_l γ = min_l β`.
    pub extremes_meet: bool,
    /// The sweep index of the smallest `γ`.
    pub argmin_gamma: usize,
    pub pass: bool,
}

/// Sweeps `l` over `0..=|S~1|` with the rest of `config` fixed, at budget
/// `epsilon`.
pub fn check_monotonicity(config: &PartitionConfig, epsilon: f64) -> Result<MonotonicityReport> {
    let base = SystemShape {
        epsilon,
        ..SystemShape::from_config(config)
    };
    let mut betas = Vec::with_capacity(base.s_tilde1 + 1);
    let mut gammas = Vec::with_capacity(base.s_tilde1 + 1);
    for l in 0..=base.s_tilde1 {
        let bg = base.with_l(l).solve()?;
        betas.push(bg.beta);
        gammas.push(bg.gamma);
    }
    // A few ulps of slack for rounding in the closed form.
    let slack = |x: f64| x.abs() * 4.0 * f64::EPSILON;
    let beta_nondecreasing = betas.windows(2).all(|w| w[1] >= w[0] - slack(w[0]));
    let gamma_nonincreasing = gammas.windows(2).all(|w| w[1] <= w[0] + slack(w[0]));
    let equal_at_zero = (betas[0] - gammas[0]).abs() <= EXACT_TOL;
    let max_gamma = gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_beta = betas.iter().copied().fold(f64::INFINITY, f64::min);
    let extremes_meet = (max_gamma - min_beta).abs() <= EXACT_TOL;
    let argmin_gamma = gammas
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &g)| if g < bv { (i, g) } else { (bi, bv) })
        .0;
    Ok(MonotonicityReport {
        pass: beta_nondecreasing && gamma_nonincreasing && equal_at_zero && extremes_meet,
        betas,
        gammas,
        beta_nondecreasing,
        gamma_nonincreasing,
        equal_at_zero,
        extremes_meet,
        argmin_gamma,
    })
}

/// Baselines BlockRR is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MechanismName {
    Rr,
    RrWithPrior,
    RrOnBins,
    RpWithPrior,
}

impl FromStr for MechanismName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "rr" => Ok(Self::Rr),
            "rrwithprior" => Ok(Self::RrWithPrior),
            "rronbins" => Ok(Self::RrOnBins),
            "rpwithprior" | "rpwithpriordiscretized" => Ok(Self::RpWithPrior),
            _ => Err(Error::UnknownMechanism(s.into())),
        }
    }
}

impl fmt::Display for MechanismName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rr => "RR",
            Self::RrWithPrior => "RRWithPrior",
            Self::RrOnBins => "RRonBins",
            Self::RpWithPrior => "RPWithPrior",
        })
    }
}

/// Inputs for [`check_unification`]; each mechanism reads the fields it needs.
#[derive(Clone, Debug)]
pub struct UnificationParams {
    pub k: usize,
    pub epsilon: f64,
    /// RRWithPrior prior; uniform when absent.
    pub prior: Option<PriorDistribution>,
    /// RR split for the `l = 0` comparison; the lower half when absent.
    pub s1: Option<LabelSet>,
    /// RRonBins / RPWithPrior parameters; `[0,1]`, δ = 0.1, `k` bins when
    /// absent.
    pub regression: Option<RegressionMechanismConfig>,
    /// RRonBins bins placed in `S2` for the `l = 0` comparison; the last bin
    /// when absent.
    pub minority_bins: Option<LabelSet>,
    /// Grid step for the discretized RPWithPrior comparison.
    pub grid_resolution: f64,
}

impl UnificationParams {
    pub fn new(k: usize, epsilon: f64) -> Self {
        Self {
            k,
            epsilon,
            prior: None,
            s1: None,
            regression: None,
            minority_bins: None,
            grid_resolution: 1e-3,
        }
    }

    fn regression(&self) -> Result<RegressionMechanismConfig> {
        match &self.regression {
            Some(r) => Ok(r.clone()),
            None => RegressionMechanismConfig::new(0.0, 1.0, 0.1, self.epsilon, self.k.max(1), 10 * self.k.max(1) + 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixDiff {
    pub mechanism: String,
    /// Which configuration or identity was compared.
    pub check: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl MatrixDiff {
    fn new(mechanism: MechanismName, check: &str, value: f64, tolerance: f64) -> Self {
        Self {
            mechanism: mechanism.to_string(),
            check: check.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

fn matrix_diff(a: &MechanismMatrix, b: &MechanismMatrix) -> f64 {
    a.max_abs_diff(b).unwrap_or(f64::INFINITY)
}

/// Builds BlockRR under each parameter configuration that should recover
/// `name` and compares it with the directly built baseline.
pub fn check_unification(name: &str, params: &UnificationParams) -> Result<Vec<MatrixDiff>> {
    let mech: MechanismName = name.parse()?;
    let k = params.k;
    let eps = params.epsilon;
    let mut out = Vec::new();
    match mech {
        MechanismName::Rr => {
            let rr = build_rr_matrix(k, eps)?;
            let single = build_blockrr_matrix(&tables::rr_single_block(k, eps)?)?;
            out.push(MatrixDiff::new(mech, "single_block", matrix_diff(&single, &rr), EXACT_TOL));
            let s1 = params.s1.clone().unwrap_or_else(|| (0..k.div_ceil(2)).collect());
            let split = build_blockrr_matrix(&tables::rr_split_block(k, eps, &s1)?)?;
            out.push(MatrixDiff::new(mech, "split_block_l0", matrix_diff(&split, &rr), EXACT_TOL));
        }
        MechanismName::RrWithPrior => {
            let prior = match &params.prior {
                Some(p) => p.clone(),
                None => PriorDistribution::uniform(k)?,
            };
            let direct = build_rrwithprior_matrix(&prior, eps)?;
            let block = build_blockrr_matrix(&tables::rrwithprior_config(&prior, eps)?)?;
            out.push(MatrixDiff::new(mech, "top_k_block", matrix_diff(&block, &direct), EXACT_TOL));
        }
        MechanismName::RrOnBins => {
            let reg = params.regression()?;
            let direct = build_rronbins_matrix(&reg)?;
            let single = build_blockrr_matrix(&tables::rronbins_single_block(&reg)?)?;
            out.push(MatrixDiff::new(mech, "single_block", matrix_diff(&single, &direct), EXACT_TOL));
            if reg.bin_map.bin_count() > 1 {
                let minority = params
                    .minority_bins
                    .clone()
                    .unwrap_or_else(|| LabelSet::from([reg.bin_map.bin_count() - 1]));
                let split = build_blockrr_matrix(&tables::rronbins_split_block(&reg, &minority)?)?;
                out.push(MatrixDiff::new(mech, "split_block_l0", matrix_diff(&split, &direct), EXACT_TOL));
            }
        }
        MechanismName::RpWithPrior => {
            let reg = params.regression()?;
            let d = rpwithprior_density_checks(&reg);
            out.push(MatrixDiff::new(mech, "density_normalization", d.normalization_error, 1e-9));
            out.push(MatrixDiff::new(mech, "density_ratio", d.ratio_error, EXACT_TOL));
            out.push(MatrixDiff::new(mech, "density_dp_ratio", d.dp_ratio_excess, DP_RATIO_TOL));

            let per_delta = (reg.delta_width / params.grid_resolution).round().max(1.0) as usize;
            let grid = RpWithPriorGrid::new(&reg, per_delta)?;
            let config = tables::rpwithprior_config(&grid)?;
            let block = build_blockrr_matrix(&config)?;
            let direct = build_rpwithprior_grid_matrix(&grid)?;
            out.push(MatrixDiff::new(mech, "grid_matrix", matrix_diff(&block, &direct), EXACT_TOL));
            // The grid's near-neighborhood mass per unit length tends to the
            // continuous density with relative error h / (γ + h).
            let bg = solve_beta_gamma(&config)?;
            let h = grid.step();
            let near = reg.epsilon.exp() * bg.beta / h;
            let rel = (near * reg.gamma_rp - 1.0).abs();
            let bound = h / reg.gamma_rp * (1.0 + DP_RATIO_TOL);
            out.push(MatrixDiff::new(mech, "grid_density_excess", (rel - bound).max(0.0), 0.0));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityChecks {
    /// Max over probe inputs of `|∫ f(ỹ|y) dỹ - 1|`.
    pub normalization_error: f64,
    /// Max relative deviation of `f(near)/f(far)` from `e^ε`.
    pub ratio_error: f64,
    /// How far the max/min ratio over inputs exceeds `e^ε`, relative.
    pub dp_ratio_excess: f64,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, 5 points.
const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Integrates `f` over `[a, b]` after splitting at `breaks`.
fn integrate_piecewise(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64]) -> f64 {
    let mut knots: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    knots.sort_by(f64::total_cmp);
    knots
        .windows(2)
        .map(|w| {
            let (lo, hi) = (w[0], w[1]);
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            GL5.iter().map(|&(x, wt)| wt * f(mid + half * x)).sum::<f64>() * half
        })
        .sum()
}

/// Normalization and ratio identities of the continuous RPWithPrior density
/// at probe inputs across `I` and outside it.
pub fn rpwithprior_density_checks(config: &RegressionMechanismConfig) -> DensityChecks {
    let (lo, hi) = config.support();
    let (a1, a2, d) = (config.interval_lo, config.interval_hi, config.delta_width);
    let mut probes: Vec<f64> = (0..=20).map(|i| a1 + (a2 - a1) * i as f64 / 20.0).collect();
    probes.extend([a1 + 0.5 * d, a2 - 0.5 * d, lo, hi, a1 - 0.5 * d]);

    let e = config.epsilon.exp();
    let mut normalization_error = 0.0f64;
    let mut ratio_error = 0.0f64;
    for &y in &probes {
        let f = |t: f64| rpwithprior_density(y, t, config);
        let total = integrate_piecewise(f, lo, hi, &[y - d, y + d]);
        normalization_error = normalization_error.max((total - 1.0).abs());
        if config.contains(y) {
            let near = f(y);
            // A point of N_I outside N_y, if there is one.
            let far_point = if y + d < hi { (y + d + hi) / 2.0 } else { (lo + y - d) / 2.0 };
            if far_point < y - d || far_point > y + d {
                ratio_error = ratio_error.max((near / f(far_point) / e - 1.0).abs());
            }
        }
    }
    // Max/min over inputs at fixed outputs.
    let outputs: Vec<f64> = (0..=40).map(|i| lo + (hi - lo) * i as f64 / 40.0).collect();
    let dp_ratio_excess = outputs
        .iter()
        .map(|&t| {
            let vals: Vec<f64> = probes.iter().map(|&y| rpwithprior_density(y, t, config)).collect();
            let max = vals.iter().copied().fold(0.0, f64::max);
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            (max / min / e - 1.0).max(0.0)
        })
        .fold(0.0, f64::max);
    DensityChecks {
        normalization_error,
        ratio_error,
        dp_ratio_excess,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpReport {
    pub feasible: bool,
    pub max_ratio: f64,
    pub min_entry: f64,
    pub max_row_residual: f64,
    /// Max `|p(ỹ|y) - 1/|S~||` over `y ∈ S2`, `ỹ ∈ Δ`.
    pub delta_uniform_deviation: f64,
    /// Max `|e^ε·p(ỹ|y) - max_{y'} p(ỹ|y')|` over `y ∈ S1`, `ỹ ∉ B(y)`.
    pub majority_boundary_gap: f64,
    /// Same over `y ∈ S2`, `ỹ ∉ B(y) ∪ Δ`.
    pub minority_boundary_gap: f64,
    pub boundary_equalities_hold: bool,
    pub notes: Vec<NamedCheck>,
}

impl LpReport {
    pub fn pass(&self) -> bool {
        self.feasible && self.boundary_equalities_hold
    }
}

/// Checks `matrix` against the constraint set of the BlockRR linear program
/// for `config` and the tightness of its ratio chains.
///
/// The tight partner of `p(ỹ|y)` is the column maximum; under the identity
/// mapping that is `p(ỹ|ỹ)`.
pub fn check_lp_conditions(matrix: &MechanismMatrix, config: &PartitionConfig) -> LpReport {
    let mut notes = Vec::new();
    let inputs: Vec<Label> = config.space().labels().collect();
    let outputs: Vec<Label> = config.s_tilde().iter().copied().collect();
    if matrix.input_labels() != inputs.as_slice() || matrix.output_labels() != outputs.as_slice() {
        notes.push(NamedCheck::new("labels", false, "matrix labels do not match the configuration"));
        return LpReport {
            feasible: false,
            max_ratio: f64::NAN,
            min_entry: f64::NAN,
            max_row_residual: f64::NAN,
            delta_uniform_deviation: f64::NAN,
            majority_boundary_gap: f64::NAN,
            minority_boundary_gap: f64::NAN,
            boundary_equalities_hold: false,
            notes,
        };
    }
    let e = config.epsilon().exp();
    let rows = matrix.rows();
    let col_max: Vec<f64> = (0..outputs.len())
        .map(|j| rows.iter().map(|r| r[j]).fold(0.0, f64::max))
        .collect();

    let min_entry = rows.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let max_row_residual = rows
        .iter()
        .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let max_ratio = column_ratios(matrix)
        .into_iter()
        .flatten()
        .fold(1.0, f64::max);
    let uniform = 1.0 / outputs.len() as f64;

    let mut delta_dev = 0.0f64;
    let mut gap1 = 0.0f64;
    let mut gap2 = 0.0f64;
    for (i, &y) in inputs.iter().enumerate() {
        let block = config.mapping().block(y);
        let majority = config.s1().contains(&y);
        for (j, &t) in outputs.iter().enumerate() {
            let p = rows[i][j];
            if !majority && config.delta().contains(&t) {
                delta_dev = delta_dev.max((p - uniform).abs());
                continue;
            }
            if block.contains(&t) {
                continue;
            }
            let gap = (e * p - col_max[j]).abs();
            if majority {
                gap1 = gap1.max(gap);
            } else {
                gap2 = gap2.max(gap);
            }
        }
    }

    let ratio_ok = max_ratio <= e * (1.0 + DP_RATIO_TOL);
    let nonneg = min_entry >= 0.0;
    let normalized = max_row_residual <= STOCHASTIC_TOL;
    let delta_ok = delta_dev <= EXACT_TOL;
    let boundary = gap1 <= EXACT_TOL && gap2 <= EXACT_TOL;
    notes.push(NamedCheck::new("pairwise_ratio", ratio_ok, format!("max ratio {max_ratio}")));
    notes.push(NamedCheck::new("nonnegativity", nonneg, format!("min entry {min_entry}")));
    notes.push(NamedCheck::new("normalization", normalized, format!("max residual {max_row_residual:e}")));
    notes.push(NamedCheck::new("delta_uniform", delta_ok, format!("max deviation {delta_dev:e}")));
    notes.push(NamedCheck::new("majority_boundary", gap1 <= EXACT_TOL, format!("max gap {gap1:e}")));
    notes.push(NamedCheck::new("minority_boundary", gap2 <= EXACT_TOL, format!("max gap {gap2:e}")));
    LpReport {
        feasible: ratio_ok && nonneg && normalized && delta_ok,
        max_ratio,
        min_entry,
        max_row_residual,
        delta_uniform_deviation: delta_dev,
        majority_boundary_gap: gap1,
        minority_boundary_gap: gap2,
        boundary_equalities_hold: boundary,
        notes,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalReport {
    pub n: usize,
    pub input_labels: Vec<Label>,
    pub output_labels: Vec<Label>,
    pub empirical: Vec<Vec<f64>>,
    /// Total-variation distance of each empirical row to its theoretical row.
    pub tv: Vec<f64>,
    pub max_tv: f64,
}

/// Draws `n` samples from every row; row `i` uses substream `i`.
pub fn empirical_transition(
    matrix: &MechanismMatrix,
    n: usize,
    stream: &RandomStream,
) -> Result<EmpiricalReport> {
    if n == 0 {
        return Err(Error::NonpositiveN);
    }
    let row_counts = |i: usize| {
        let sampler = RowSampler::new(&matrix.rows()[i]);
        let mut s = stream.substream(i as u64);
        let mut counts = vec![0u64; matrix.n_outputs()];
        for _ in 0..n {
            counts[sampler.index_for(s.next_uniform())] += 1;
        }
        counts
    };
    #[cfg(feature = "parallel")]
    let counts: Vec<Vec<u64>> = {
        use rayon::prelude::*;
        (0..matrix.n_inputs()).into_par_iter().map(row_counts).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let counts: Vec<Vec<u64>> = (0..matrix.n_inputs()).map(row_counts).collect();

    let empirical: Vec<Vec<f64>> = counts
        .iter()
        .map(|c| c.iter().map(|&x| x as f64 / n as f64).collect())
        .collect();
    let tv: Vec<f64> = empirical
        .iter()
        .zip(matrix.rows())
        .map(|(e, p)| 0.5 * e.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .collect();
    Ok(EmpiricalReport {
        n,
        input_labels: matrix.input_labels().to_vec(),
        output_labels: matrix.output_labels().to_vec(),
        max_tv: tv.iter().copied().fold(0.0, f64::max),
        empirical,
        tv,
    })
}

/// Fraction of `n` RPWithPrior draws for input `y` that land in `N_y`.
pub fn empirical_rpwithprior_mass(
    y: f64,
    config: &RegressionMechanismConfig,
    n: usize,
    stream: &mut RandomStream,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::NonpositiveN);
    }
    let hits = (0..n)
        .filter(|_| (sample_rpwithprior(y, config, stream) - y).abs() <= config.delta_width)
        .count();
    Ok(hits as f64 / n as f64)
}

/// A random valid BlockRR configuration with `2 ≤ k ≤ max_k` and
/// `ε ∈ [eps_lo, eps_hi]`.
///
/// Draws one of four shapes: identity mapping over all labels with random
/// `l`; the top-k shape (`S~ = S1`, `Δ = S~`); a binned mapping onto bin
/// representatives; and a wide cyclic mapping with every label in `S1`.
pub fn random_config(stream: &mut RandomStream, max_k: usize, eps_lo: f64, eps_hi: f64) -> PartitionConfig {
    let k = 2 + stream.next_below((max_k.max(2) - 1) as u64) as usize;
    let epsilon = eps_lo + (eps_hi - eps_lo) * stream.next_uniform();
    let random_subset = |stream: &mut RandomStream, n: usize| -> LabelSet {
        let mut s: LabelSet = (0..n).filter(|_| stream.next_below(2) == 1).collect();
        if s.is_empty() {
            s.insert(stream.next_below(n as u64) as usize);
        }
        s
    };
    let random_delta = |stream: &mut RandomStream, pool: &LabelSet| -> LabelSet {
        let l = stream.next_below(pool.len() as u64 + 1) as usize;
        let mut v: Vec<Label> = pool.iter().copied().collect();
        stream.shuffle(&mut v);
        v.into_iter().take(l).collect()
    };
    let all: LabelSet = (0..k).collect();
    let built = match stream.next_below(4) {
        0 => {
            let s1 = random_subset(stream, k);
            let s2 = all.difference(&s1).copied().collect();
            let delta = random_delta(stream, &s1);
            PartitionConfig::new(k, s1, s2, all, delta, epsilon, BlockMapping::identity(k))
        }
        1 => {
            let s1 = random_subset(stream, k);
            let s2 = all.difference(&s1).copied().collect();
            PartitionConfig::new(k, s1.clone(), s2, s1.clone(), s1, epsilon, BlockMapping::identity(k))
        }
        2 => {
            // Contiguous bins; each label maps to its bin's first label.
            let bins = 1 + stream.next_below(k as u64) as usize;
            let bin_of = |y: usize| y * bins / k;
            let rep = |b: usize| (0..k).find(|&y| bin_of(y) == b).expect("nonempty bin");
            let blocks = (0..k).map(|y| LabelSet::from([rep(bin_of(y))])).collect();
            let mapping = BlockMapping::new(blocks).expect("singleton blocks");
            let reps: LabelSet = (0..bins).map(rep).collect();
            let minority_bins = random_subset(stream, bins);
            let s2: LabelSet = if minority_bins.len() == bins {
                LabelSet::new()
            } else {
                (0..k).filter(|&y| minority_bins.contains(&bin_of(y))).collect()
            };
            let s1: LabelSet = all.difference(&s2).copied().collect();
            let s_tilde1: LabelSet = s1.iter().map(|&y| rep(bin_of(y))).collect();
            let delta = random_delta(stream, &s_tilde1);
            PartitionConfig::new(k, s1, s2, reps, delta, epsilon, mapping)
        }
        _ => {
            let width = 1 + stream.next_below(k as u64) as usize;
            let mapping = BlockMapping::cyclic(k, width).expect("width within k");
            let delta = random_delta(stream, &all);
            PartitionConfig::new(k, all.clone(), LabelSet::new(), all, delta, epsilon, mapping)
        }
    };
    built.expect("generator emits valid configurations")
}
