use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Label, MechanismMatrix, PartitionConfig};

/// The cardinalities that determine the two block weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemShape {
    pub block_size: usize,
    pub s_tilde: usize,
    pub s_tilde1: usize,
    pub s_tilde2: usize,
    pub l: usize,
    pub epsilon: f64,
}

/// Closed-form block weights: `beta = beta1 / kappa`, `gamma = gamma1 / kappa`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaGamma {
    pub beta: f64,
    pub gamma: f64,
    pub beta1: f64,
    pub gamma1: f64,
    pub kappa: f64,
}

impl SystemShape {
    pub fn from_config(config: &PartitionConfig) -> Self {
        Self {
            block_size: config.mapping().block_size(),
            s_tilde: config.s_tilde().len(),
            s_tilde1: config.s_tilde1().len(),
            s_tilde2: config.s_tilde2().len(),
            l: config.l(),
            epsilon: config.epsilon(),
        }
    }

    pub fn with_l(self, l: usize) -> Self {
        Self { l, ..self }
    }

    /// `(e^ε - 1)·|B(y)|`.
    pub fn a(&self) -> f64 {
        self.epsilon.exp_m1() * self.block_size as f64
    }

    pub fn solve(&self) -> Result<BetaGamma> {
        let a = self.a();
        let n = self.s_tilde as f64;
        let n1 = self.s_tilde1 as f64;
        let n2 = self.s_tilde2 as f64;
        let l = self.l as f64;

        let beta1 = a + l * n2 / n;
        let gamma1 = (a + l) - l / n * (a + n1);
        let kappa = (a + n1) * (a + n2) - (n1 - l) * n2;
        if !(kappa > 0.0) {
            return Err(Error::DegenerateSystem(kappa));
        }
        Ok(BetaGamma {
            beta: beta1 / kappa,
            gamma: gamma1 / kappa,
            beta1,
            gamma1,
            kappa,
        })
    }

    /// `a² + a·|S~| + l·|S~2|`, algebraically equal to `kappa`.
    pub fn kappa_expansion(&self) -> f64 {
        let a = self.a();
        a * a + a * self.s_tilde as f64 + (self.l * self.s_tilde2) as f64
    }

    /// Residuals of the majority-row and minority-row normalization equations.
    pub fn residuals(&self, bg: &BetaGamma) -> (f64, f64) {
        let a = self.a();
        let n = self.s_tilde as f64;
        let n1 = self.s_tilde1 as f64;
        let n2 = self.s_tilde2 as f64;
        let l = self.l as f64;
        let r1 = (a + n1) * bg.beta + n2 * bg.gamma - 1.0;
        let r2 = (n1 - l) * bg.beta + (a + n2) * bg.gamma - (1.0 - l / n);
        (r1, r2)
    }
}

/// Solves the two-block normalization system for a validated configuration.
pub fn solve_beta_gamma(config: &PartitionConfig) -> Result<BetaGamma> {
    SystemShape::from_config(config).solve()
}

/// Materializes the BlockRR transition matrix. Rows cover `S` in label
/// order, columns cover `S~` in ascending order.
///
/// Majority rows put `e^ε·β` on `B(y)`, `β` on the rest of `S~1` and `γ` on
/// `S~2`. Minority rows put `1/|S~|` on Δ, `e^ε·γ` on `B(y)`, `β` on
/// `S~1 \ Δ` and `γ` on the rest of `S~2`; with `S~2` empty every output is
/// in Δ and the row is uniform.
pub fn build_blockrr_matrix(config: &PartitionConfig) -> Result<MechanismMatrix> {
    let bg = solve_beta_gamma(config)?;
    let e = config.epsilon().exp();
    let outputs: Vec<Label> = config.s_tilde().iter().copied().collect();
    let uniform = 1.0 / outputs.len() as f64;

    let rows = config
        .space()
        .labels()
        .map(|y| {
            let block = config.mapping().block(y);
            let majority = config.s1().contains(&y);
            outputs
                .iter()
                .map(|t| {
                    let in_block = block.contains(t);
                    if majority {
                        if config.s_tilde2().contains(t) {
                            bg.gamma
                        } else if in_block {
                            e * bg.beta
                        } else {
                            bg.beta
                        }
                    } else if config.delta().contains(t) {
                        uniform
                    } else if in_block {
                        e * bg.gamma
                    } else if config.s_tilde1().contains(t) {
                        bg.beta
                    } else {
                        bg.gamma
                    }
                })
                .collect()
        })
        .collect();
    MechanismMatrix::new(config.space().labels().collect(), outputs, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BlockMapping, LabelSet};
    use num_rational::Ratio;

    type Q = Ratio<i64>;

    fn k4(l: usize) -> PartitionConfig {
        PartitionConfig::new(
            4,
            LabelSet::from([0, 1]),
            LabelSet::from([2, 3]),
            (0..4).collect(),
            (0..l).collect(),
            2f64.ln(),
            BlockMapping::identity(4),
        )
        .unwrap()
    }

    /// Independent oracle: Cramer's rule on the 2x2 normalization system in
    /// exact rationals, with `e^ε` an integer.
    fn cramer(e: i64, b: i64, n1: i64, n2: i64, l: i64) -> (Q, Q) {
        let n = n1 + n2;
        let (a11, a12) = (Q::from(e * b + n1 - b), Q::from(n2));
        let (a21, a22) = (Q::from(n1 - l), Q::from(e * b + n2 - b));
        let (r1, r2) = (Q::from(1), Q::from(1) - Q::new(l, n));
        let det = a11 * a22 - a12 * a21;
        ((r1 * a22 - a12 * r2) / det, (a11 * r2 - r1 * a21) / det)
    }

    fn as_f64(q: Q) -> f64 {
        *q.numer() as f64 / *q.denom() as f64
    }

    #[test]
    fn oracle_values_for_k4() {
        assert_eq!(cramer(2, 1, 2, 2, 0), (Q::new(1, 5), Q::new(1, 5)));
        assert_eq!(cramer(2, 1, 2, 2, 1), (Q::new(3, 14), Q::new(5, 28)));
        assert_eq!(cramer(2, 1, 2, 2, 2), (Q::new(2, 9), Q::new(1, 6)));
    }

    #[test]
    fn closed_form_matches_frozen_oracle_values() {
        let expected = [(1.0 / 5.0, 1.0 / 5.0), (3.0 / 14.0, 5.0 / 28.0), (2.0 / 9.0, 1.0 / 6.0)];
        for (l, (b, g)) in expected.into_iter().enumerate() {
            let bg = solve_beta_gamma(&k4(l)).unwrap();
            assert!((bg.beta - b).abs() < 1e-15, "l={l} beta {}", bg.beta);
            assert!((bg.gamma - g).abs() < 1e-15, "l={l} gamma {}", bg.gamma);
        }
        let bg0 = solve_beta_gamma(&k4(0)).unwrap();
        assert!((bg0.beta1 - 1.0).abs() < 1e-15);
        assert!((bg0.gamma1 - 1.0).abs() < 1e-15);
        assert!((bg0.kappa - 5.0).abs() < 1e-14);
    }

    #[test]
    fn closed_form_matches_cramer_across_small_shapes() {
        for e in 2..5i64 {
            for b in 1..3i64 {
                for n1 in b..5 {
                    for n2 in b..5 {
                        for l in 0..=n1 {
                            let shape = SystemShape {
                                block_size: b as usize,
                                s_tilde: (n1 + n2) as usize,
                                s_tilde1: n1 as usize,
                                s_tilde2: n2 as usize,
                                l: l as usize,
                                epsilon: (e as f64).ln(),
                            };
                            let bg = shape.solve().unwrap();
                            let (qb, qg) = cramer(e, b, n1, n2, l);
                            assert!((bg.beta - as_f64(qb)).abs() < 1e-14);
                            assert!((bg.gamma - as_f64(qg)).abs() < 1e-14);
                            let (r1, r2) = shape.residuals(&bg);
                            assert!(r1.abs() <= 1e-12 && r2.abs() <= 1e-12);
                            assert!((shape.kappa_expansion() - bg.kappa).abs() <= 1e-12 * bg.kappa.max(1.0));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn k4_row_two_matches_exact_fractions() {
        let m = build_blockrr_matrix(&k4(1)).unwrap();
        let row = m.row(2).unwrap();
        let expected = [Q::new(1, 4), Q::new(3, 14), Q::new(5, 14), Q::new(5, 28)];
        let sum: Q = expected.iter().copied().sum();
        assert_eq!(sum, Q::from(1));
        for (v, q) in row.iter().zip(expected) {
            assert!((v - as_f64(q)).abs() < 1e-15);
        }
        // Majority row 0: e^ε·β on itself, β on 1, γ on S~2.
        let row0 = m.row(0).unwrap();
        for (v, q) in row0.iter().zip([Q::new(3, 7), Q::new(3, 14), Q::new(5, 28), Q::new(5, 28)]) {
            assert!((v - as_f64(q)).abs() < 1e-15);
        }
    }

    #[test]
    fn kappa_positive_for_positive_epsilon() {
        let shape = SystemShape {
            block_size: 1,
            s_tilde: 3,
            s_tilde1: 3,
            s_tilde2: 0,
            l: 0,
            epsilon: 1e-6,
        };
        assert!(shape.solve().unwrap().kappa > 0.0);
        let zero = SystemShape { epsilon: 0.0, ..shape };
        assert_eq!(zero.solve().unwrap_err().code(), "DEGENERATE_SYSTEM");
    }
}
