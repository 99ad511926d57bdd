//! Regression-label mechanisms: randomized response on bins and the
//! piecewise-uniform RPWithPrior density.
//!
//! Continuous values are handled directly by the density and its sampler.
//! For matrix-level comparisons both mechanisms are also materialized over a
//! finite grid of values whose indices act as labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::baseline::check_epsilon;
use crate::rng::RandomStream;
use crate::types::{BlockMapping, Label, LabelSet, MechanismMatrix};

/// Equally spaced values `lo + i·step` for `i in 0..len`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueGrid {
    pub lo: f64,
    pub step: f64,
    pub len: usize,
}

impl ValueGrid {
    /// `points` values spanning `[lo, hi]` inclusive.
    pub fn spanning(lo: f64, hi: f64, points: usize) -> Self {
        let step = if points > 1 {
            (hi - lo) / (points - 1) as f64
        } else {
            0.0
        };
        Self { lo, step, len: points }
    }

    pub fn value(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step
    }
}

/// Equal-width binning `Φ` over `[lo, hi]` with bin midpoints as
/// representatives. On the grid, each bin is represented by the grid point
/// nearest its midpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinMap {
    lo: f64,
    hi: f64,
    bin_count: usize,
    grid: ValueGrid,
    bin_of: Vec<usize>,
    representatives: Vec<Label>,
}

impl BinMap {
    pub fn equal_width(lo: f64, hi: f64, bin_count: usize, grid_points: usize) -> Result<Self> {
        if bin_count == 0 {
            return Err(Error::EmptyBins("bin count is zero".into()));
        }
        if grid_points == 0 {
            return Err(Error::EmptyBins("value grid is empty".into()));
        }
        let grid = ValueGrid::spanning(lo, hi, grid_points);
        let mut map = Self {
            lo,
            hi,
            bin_count,
            grid,
            bin_of: Vec::new(),
            representatives: Vec::new(),
        };
        map.bin_of = (0..grid_points).map(|i| map.bin_of_value(grid.value(i))).collect();
        for b in 0..bin_count {
            let mid = map.midpoint(b);
            let rep = (0..grid_points)
                .filter(|&i| map.bin_of[i] == b)
                .min_by(|&i, &j| {
                    (grid.value(i) - mid)
                        .abs()
                        .total_cmp(&(grid.value(j) - mid).abs())
                        .then(i.cmp(&j))
                })
                .ok_or_else(|| Error::EmptyBins(format!("bin {b} contains no grid point")))?;
            map.representatives.push(rep);
        }
        Ok(map)
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn grid(&self) -> ValueGrid {
        self.grid
    }

    fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bin_count as f64
    }

    /// Bin index of a continuous value; values outside `[lo, hi]` clamp to
    /// the end bins.
    pub fn bin_of_value(&self, v: f64) -> usize {
        let raw = ((v - self.lo) / self.width()).floor();
        if raw <= 0.0 {
            0
        } else {
            (raw as usize).min(self.bin_count - 1)
        }
    }

    pub fn midpoint(&self, bin: usize) -> f64 {
        self.lo + (bin as f64 + 0.5) * self.width()
    }

    /// `Φ(v)`: the representative value of `v`'s bin.
    pub fn phi(&self, v: f64) -> f64 {
        self.midpoint(self.bin_of_value(v))
    }

    /// Bin of grid label `i`.
    pub fn bin_of_label(&self, i: Label) -> usize {
        self.bin_of[i]
    }

    /// Grid labels acting as bin representatives, ascending.
    pub fn representatives(&self) -> &[Label] {
        &self.representatives
    }

    /// `B(i) = {Φ(i)}` on grid labels.
    pub fn block_mapping(&self) -> BlockMapping {
        BlockMapping::new(
            self.bin_of
                .iter()
                .map(|&b| LabelSet::from([self.representatives[b]]))
                .collect(),
        )
        .expect("singleton blocks inside the grid")
    }
}

/// Parameters shared by the two regression mechanisms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionMechanismConfig {
    pub interval_lo: f64,
    pub interval_hi: f64,
    pub delta_width: f64,
    pub epsilon: f64,
    pub bin_count: usize,
    pub bin_map: BinMap,
    /// `2δ + e^{-ε}(A2 - A1)`.
    pub gamma_rp: f64,
}

impl RegressionMechanismConfig {
    /// `grid_points` sets the resolution of the discrete value domain used
    /// for RRonBins matrices.
    pub fn new(
        interval_lo: f64,
        interval_hi: f64,
        delta_width: f64,
        epsilon: f64,
        bin_count: usize,
        grid_points: usize,
    ) -> Result<Self> {
        check_epsilon(epsilon)?;
        if !(interval_lo.is_finite() && interval_hi.is_finite() && interval_lo < interval_hi) {
            return Err(Error::InvalidRegressionConfig(format!(
                "interval [{interval_lo}, {interval_hi}] is empty"
            )));
        }
        if !(delta_width.is_finite() && delta_width > 0.0) {
            return Err(Error::InvalidRegressionConfig(format!(
                "neighborhood half-width must be positive, got {delta_width}"
            )));
        }
        let bin_map = BinMap::equal_width(interval_lo, interval_hi, bin_count, grid_points)?;
        Ok(Self {
            interval_lo,
            interval_hi,
            delta_width,
            epsilon,
            bin_count,
            bin_map,
            gamma_rp: 2.0 * delta_width + (-epsilon).exp() * (interval_hi - interval_lo),
        })
    }

    pub fn contains(&self, y: f64) -> bool {
        (self.interval_lo..=self.interval_hi).contains(&y)
    }

    /// `N_I = [A1 - δ, A2 + δ]`.
    pub fn support(&self) -> (f64, f64) {
        (
            self.interval_lo - self.delta_width,
            self.interval_hi + self.delta_width,
        )
    }
}

/// RRonBins over the grid labels of `config.bin_map`: `e^ε/(e^ε+|Ỹ|-1)` on
/// the representative of `y`'s bin, `1/(e^ε+|Ỹ|-1)` on every other one.
pub fn build_rronbins_matrix(config: &RegressionMechanismConfig) -> Result<MechanismMatrix> {
    check_epsilon(config.epsilon)?;
    let bins = &config.bin_map;
    if bins.bin_count() == 0 {
        return Err(Error::EmptyBins("bin count is zero".into()));
    }
    let outputs = bins.representatives().to_vec();
    let e = config.epsilon.exp();
    let denom = e + outputs.len() as f64 - 1.0;
    let rows = (0..bins.grid().len)
        .map(|i| {
            let rep = bins.representatives()[bins.bin_of_label(i)];
            outputs
                .iter()
                .map(|&t| if t == rep { e / denom } else { 1.0 / denom })
                .collect()
        })
        .collect();
    MechanismMatrix::new((0..bins.grid().len).collect(), outputs, rows)
}

/// Draws a privatized bin midpoint for a continuous value.
pub fn sample_rronbins(y: f64, config: &RegressionMechanismConfig, stream: &mut RandomStream) -> f64 {
    let bins = &config.bin_map;
    let own = bins.bin_of_value(y);
    let e = config.epsilon.exp();
    let count = bins.bin_count() as f64;
    let keep = e / (e + count - 1.0);
    let u = stream.next_uniform();
    if u < keep || bins.bin_count() == 1 {
        return bins.midpoint(own);
    }
    let other = stream.next_below(bins.bin_count() as u64 - 1) as usize;
    bins.midpoint(if other >= own { other + 1 } else { other })
}

/// Conditional density `f(ỹ | y)` of RPWithPrior.
pub fn rpwithprior_density(y: f64, y_tilde: f64, config: &RegressionMechanismConfig) -> f64 {
    let (lo, hi) = config.support();
    if !(lo..=hi).contains(&y_tilde) {
        return 0.0;
    }
    if !config.contains(y) {
        return 1.0 / (hi - lo);
    }
    if (y_tilde - y).abs() <= config.delta_width {
        1.0 / config.gamma_rp
    } else {
        (-config.epsilon).exp() / config.gamma_rp
    }
}

/// `N_y ∩ N_I`.
fn clipped_neighborhood(y: f64, config: &RegressionMechanismConfig) -> (f64, f64) {
    let (lo, hi) = config.support();
    (
        (y - config.delta_width).max(lo),
        (y + config.delta_width).min(hi),
    )
}

/// Probability mass on `N_y` for `y ∈ I` (the rest lies on `N_I \ N_y`).
pub fn rpwithprior_neighborhood_mass(y: f64, config: &RegressionMechanismConfig) -> f64 {
    let (lo, hi) = config.support();
    let (a, b) = clipped_neighborhood(y, config);
    if config.contains(y) {
        (b - a) / config.gamma_rp
    } else {
        (b - a) / (hi - lo)
    }
}

/// Two-stage draw: pick `N_y` or its complement by mass, then a uniform point
/// inside the chosen region.
pub fn sample_rpwithprior(y: f64, config: &RegressionMechanismConfig, stream: &mut RandomStream) -> f64 {
    let (lo, hi) = config.support();
    if !config.contains(y) {
        return lo + stream.next_uniform() * (hi - lo);
    }
    let (a, b) = clipped_neighborhood(y, config);
    let inner = b - a;
    let outer = (hi - lo) - inner;
    let mass_inner = inner / config.gamma_rp;
    let choose_inner = stream.next_uniform() < mass_inner;
    let u = stream.next_uniform();
    if choose_inner || outer <= 0.0 {
        a + u * inner
    } else {
        let t = u * outer;
        let left = a - lo;
        if t < left {
            lo + t
        } else {
            b + (t - left)
        }
    }
}

/// RPWithPrior restricted to an equally spaced grid over `N_I` with `per_delta`
/// steps per neighborhood half-width.
#[derive(Clone, Debug, PartialEq)]
pub struct RpWithPriorGrid {
    config: RegressionMechanismConfig,
    per_delta: usize,
    len: usize,
}

impl RpWithPriorGrid {
    pub fn new(config: &RegressionMechanismConfig, per_delta: usize) -> Result<Self> {
        if per_delta == 0 {
            return Err(Error::InvalidRegressionConfig("grid needs at least one step per δ".into()));
        }
        let h = config.delta_width / per_delta as f64;
        let steps = (config.interval_hi - config.interval_lo) / h;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::InvalidRegressionConfig(format!(
                "interval length is not a multiple of the grid step {h}"
            )));
        }
        Ok(Self {
            config: config.clone(),
            per_delta,
            len: steps.round() as usize + 2 * per_delta + 1,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn step(&self) -> f64 {
        self.config.delta_width / self.per_delta as f64
    }

    pub fn per_delta(&self) -> usize {
        self.per_delta
    }

    pub fn config(&self) -> &RegressionMechanismConfig {
        &self.config
    }

    pub fn value(&self, i: usize) -> f64 {
        self.config.interval_lo - self.config.delta_width + i as f64 * self.step()
    }

    /// Grid labels lying in `I`.
    pub fn interval_labels(&self) -> LabelSet {
        (self.per_delta..self.len - self.per_delta).collect()
    }

    /// Window of `2·per_delta + 1` consecutive labels around `i`, shifted to
    /// stay on the grid. For labels in `I` this is exactly `N_i`.
    pub fn block(&self, i: usize) -> LabelSet {
        let width = 2 * self.per_delta + 1;
        let start = i.saturating_sub(self.per_delta).min(self.len - width);
        (start..start + width).collect()
    }

    pub fn block_mapping(&self) -> BlockMapping {
        BlockMapping::new((0..self.len).map(|i| self.block(i)).collect())
            .expect("windows share one width")
    }
}

/// The density sampled at grid points and normalized per row.
pub fn build_rpwithprior_grid_matrix(grid: &RpWithPriorGrid) -> Result<MechanismMatrix> {
    let c = grid.config();
    let inside = grid.interval_labels();
    let near = 1.0 / c.gamma_rp;
    let far = (-c.epsilon).exp() / c.gamma_rp;
    let m = grid.per_delta();
    let rows = (0..grid.len())
        .map(|i| {
            if !inside.contains(&i) {
                return vec![1.0 / grid.len() as f64; grid.len()];
            }
            let w: Vec<f64> = (0..grid.len())
                .map(|j| if i.abs_diff(j) <= m { near } else { far })
                .collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|v| v / total).collect()
        })
        .collect();
    MechanismMatrix::new((0..grid.len()).collect(), (0..grid.len()).collect(), rows)
}
