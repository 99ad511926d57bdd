//! Browser bindings for the demo page. Every entry point returns a JSON
//! string; failures come back as `{"error": "..."}` so the page has one
//! code path.

use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

use blockrr::mechanisms::regression::{rpwithprior_density, RegressionMechanismConfig};
use blockrr::partition::derive_partition;
use blockrr::verifier::check_label_dp;
use blockrr::{
    build_blockrr_matrix, solve_beta_gamma, BlockMapping, LabelSet, PartitionConfig,
    PriorDistribution, Result,
};

fn respond<T: Serialize>(r: Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| json!({ "error": e.to_string() }).to_string()),
        Err(e) => json!({ "error": e.to_string(), "code": e.code() }).to_string(),
    }
}

#[derive(Serialize)]
pub struct MatrixView {
    pub labels: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
    pub s1: Vec<usize>,
    pub s2: Vec<usize>,
    pub delta: Vec<usize>,
    pub beta: f64,
    pub gamma: f64,
    pub max_ratio: f64,
    pub epsilon_bound: f64,
    pub retention: Vec<f64>,
}

fn view(c: &PartitionConfig) -> Result<MatrixView> {
    let m = build_blockrr_matrix(c)?;
    let bg = solve_beta_gamma(c)?;
    let dp = check_label_dp(&m, c.epsilon())?;
    let retention = m
        .input_labels()
        .iter()
        .map(|&y| c.mapping().block(y).iter().filter_map(|&t| m.prob(y, t)).sum())
        .collect();
    Ok(MatrixView {
        labels: m.output_labels().to_vec(),
        rows: m.rows().to_vec(),
        s1: c.s1().iter().copied().collect(),
        s2: c.s2().iter().copied().collect(),
        delta: c.delta().iter().copied().collect(),
        beta: bg.beta,
        gamma: bg.gamma,
        max_ratio: dp.max_ratio,
        epsilon_bound: dp.epsilon_bound,
        retention,
    })
}

/// Identity-mapped BlockRR on `k` labels with `0..majority` as S1 and the
/// first `l` of them as Δ.
pub fn matrix_view(k: usize, majority: usize, l: usize, epsilon: f64) -> Result<MatrixView> {
    let s1: LabelSet = (0..majority.min(k)).collect();
    let s2: LabelSet = (majority.min(k)..k).collect();
    let l = if s2.is_empty() { 0 } else { l };
    let delta: LabelSet = (0..l.min(s1.len())).collect();
    let c = PartitionConfig::new(k, s1, s2, (0..k).collect(), delta, epsilon, BlockMapping::identity(k))?;
    view(&c)
}

#[derive(Serialize)]
pub struct PartitionView {
    pub prior: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub l_effective: usize,
    pub degraded_to_rr: bool,
    pub matrix: MatrixView,
}

/// Prior from comma-separated class counts, then the derived partition.
pub fn partition_view(counts: &str, sigma: f64, epsilon: f64, l: usize) -> Result<PartitionView> {
    let weights = counts
        .split(',')
        .map(|c| c.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| blockrr::Error::InvalidPrior(format!("bad counts: {e}")))?;
    let prior = PriorDistribution::from_weights(&weights)?;
    let d = derive_partition(&prior, epsilon, sigma, l, &BlockMapping::identity(prior.k()))?;
    Ok(PartitionView {
        prior: prior.probs().to_vec(),
        weights: d.weights.w.clone(),
        l_effective: d.l_effective,
        degraded_to_rr: d.degraded_to_rr,
        matrix: view(&d.config)?,
    })
}

#[derive(Serialize)]
pub struct DensityCurve {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    pub peak: f64,
    pub floor: f64,
}

/// RPWithPrior output density on [0, 1] for input `y`.
pub fn density_curve(y: f64, delta: f64, epsilon: f64, points: usize) -> Result<DensityCurve> {
    let cfg = RegressionMechanismConfig::new(0.0, 1.0, delta, epsilon, 1, 2)?;
    let points = points.max(2);
    let x: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
    let density: Vec<f64> = x.iter().map(|&t| rpwithprior_density(y, t, &cfg)).collect();
    let peak = density.iter().copied().fold(f64::MIN, f64::max);
    let floor = density.iter().copied().fold(f64::MAX, f64::min);
    Ok(DensityCurve { x, density, peak, floor })
}

#[wasm_bindgen]
pub fn blockrr_matrix(k: usize, majority: usize, l: usize, epsilon: f64) -> String {
    respond(matrix_view(k, majority, l, epsilon))
}

#[wasm_bindgen]
pub fn prior_partition(counts: &str, sigma: f64, epsilon: f64, l: usize) -> String {
    respond(partition_view(counts, sigma, epsilon, l))
}

#[wasm_bindgen]
pub fn rpwithprior_curve(y: f64, delta: f64, epsilon: f64, points: usize) -> String {
    respond(density_curve(y, delta, epsilon, points))
}
