//! The classification-side baselines: plain randomized response and its
//! prior-aware top-k variant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Label, LabelSet, MechanismMatrix, PriorDistribution};

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(Error::NonpositiveEpsilon(epsilon))
    }
}

/// k-ary randomized response: `e^ε/(e^ε+k-1)` on the diagonal and
/// `1/(e^ε+k-1)` elsewhere.
pub fn build_rr_matrix(k: usize, epsilon: f64) -> Result<MechanismMatrix> {
    check_epsilon(epsilon)?;
    if k == 0 {
        return Err(Error::InvalidLabelSpace("k must be at least 1".into()));
    }
    let e = epsilon.exp();
    let denom = e + (k as f64 - 1.0);
    let rows = (0..k)
        .map(|y| {
            (0..k)
                .map(|t| if t == y { e / denom } else { 1.0 / denom })
                .collect()
        })
        .collect();
    MechanismMatrix::new((0..k).collect(), (0..k).collect(), rows)
}

/// The top-k candidate set chosen for RRWithPrior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKSelection {
    pub k: usize,
    pub y_k: LabelSet,
    pub objective: f64,
}

/// Picks `k` maximizing `e^ε/(e^ε+k-1) · Σ_{top k} p_j`, the probability that
/// the output equals the true label. Ties go to the smaller `k`; within the
/// top set, tied priors are ranked by ascending label.
pub fn choose_topk(prior: &PriorDistribution, epsilon: f64) -> TopKSelection {
    let ranked = prior.ranked();
    let e = epsilon.exp();
    let mut mass = 0.0;
    let mut best = (1, f64::NEG_INFINITY);
    for (i, &y) in ranked.iter().enumerate() {
        let k = i + 1;
        mass += prior.get(y);
        let objective = e / (e + k as f64 - 1.0) * mass;
        if objective > best.1 {
            best = (k, objective);
        }
    }
    TopKSelection {
        k: best.0,
        y_k: ranked[..best.0].iter().copied().collect(),
        objective: best.1,
    }
}

/// RRWithPrior over the output space `Y_k`: true labels inside `Y_k` get
/// randomized response on `Y_k`, labels outside get a uniform draw from it.
pub fn build_rrwithprior_matrix(prior: &PriorDistribution, epsilon: f64) -> Result<MechanismMatrix> {
    check_epsilon(epsilon)?;
    let sel = choose_topk(prior, epsilon);
    let outputs: Vec<Label> = sel.y_k.iter().copied().collect();
    let e = epsilon.exp();
    let k = sel.k as f64;
    let denom = e + k - 1.0;
    let rows = (0..prior.k())
        .map(|y| {
            outputs
                .iter()
                .map(|&t| {
                    if !sel.y_k.contains(&y) {
                        1.0 / k
                    } else if t == y {
                        e / denom
                    } else {
                        1.0 / denom
                    }
                })
                .collect()
        })
        .collect();
    MechanismMatrix::new((0..prior.k()).collect(), outputs, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rr_single_class() {
        let m = build_rr_matrix(1, 0.3).unwrap();
        assert_eq!(m.rows(), &[vec![1.0]]);
    }

    #[test]
    fn rr_binary_ln3() {
        let m = build_rr_matrix(2, 3f64.ln()).unwrap();
        for (row, exp) in m.rows().iter().zip([[0.75, 0.25], [0.25, 0.75]]) {
            for (v, x) in row.iter().zip(exp) {
                assert!((v - x).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rr_large_epsilon_limit() {
        let m = build_rr_matrix(10, 50.0).unwrap();
        for (i, row) in m.rows().iter().enumerate() {
            assert!((row[i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rr_rejects_bad_epsilon() {
        assert_eq!(build_rr_matrix(3, 0.0).unwrap_err().code(), "NONPOSITIVE_EPSILON");
    }

    #[test]
    fn topk_enumeration() {
        let p = PriorDistribution::new(vec![0.7, 0.2, 0.1]).unwrap();
        let sel = choose_topk(&p, 2f64.ln());
        assert_eq!(sel.k, 1);
        assert_eq!(sel.y_k, LabelSet::from([0]));
        assert!((sel.objective - 0.7).abs() < 1e-15);
    }

    #[test]
    fn topk_uniform_prior_takes_everything() {
        let p = PriorDistribution::uniform(10).unwrap();
        // Brute-force the objective over every k.
        let e = 1f64.exp();
        let objs: Vec<f64> = (1..=10)
            .map(|k| e / (e + k as f64 - 1.0) * k as f64 / 10.0)
            .collect();
        let argmax = objs
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
            .0;
        assert_eq!(argmax + 1, 10);
        assert_eq!(choose_topk(&p, 1.0).k, 10);
        assert_eq!(choose_topk(&PriorDistribution::uniform(1).unwrap(), 1.0).k, 1);
    }

    #[test]
    fn topk_ties_prefer_lower_labels() {
        let p = PriorDistribution::new(vec![0.1, 0.45, 0.45]).unwrap();
        let sel = choose_topk(&p, 0.01);
        assert_eq!(sel.y_k.iter().next(), Some(&1));
    }

    #[test]
    fn rrwithprior_reduces_to_rr_for_uniform_prior() {
        let p = PriorDistribution::uniform(6).unwrap();
        let a = build_rrwithprior_matrix(&p, 1.0).unwrap();
        let b = build_rr_matrix(6, 1.0).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-15);
    }

    #[test]
    fn rrwithprior_single_output() {
        let p = PriorDistribution::new(vec![0.7, 0.2, 0.1]).unwrap();
        let m = build_rrwithprior_matrix(&p, 2f64.ln()).unwrap();
        assert_eq!(m.output_labels(), &[0]);
        assert!(m.rows().iter().all(|r| r == &vec![1.0]));
    }
}
