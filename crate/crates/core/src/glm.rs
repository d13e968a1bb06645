//! GLM negative-log-likelihood loss families and their derivatives.
//!
//! Every supported task loss has the exponential-family shape
//!
//! ```text
//! loss(y, eta) = -(y . eta - b(eta))
//! ```
//!
//! with natural parameter `eta`, log-partition `b`, and the label-dependent
//! constant dropped (`c(Y) = 0`). Dropping the constant means absolute loss
//! values for regression differ from `MSE/2` by `E[Y^2]/2`; loss
//! *differences* are unaffected, and all cross-form comparisons in this crate
//! are made on differences or with the constant added back explicitly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Task descriptor: fixes the shape of the natural parameter and label and
/// the log-partition function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossFamily {
    /// Scalar prediction, squared-error likelihood.
    Regression,
    /// Scalar logit for the positive class.
    Binary,
    /// Logit vector over `k` classes.
    Multiclass { k: usize },
    /// Per-step logit vectors over a vocabulary of `k`, up to `t_max` steps.
    SeqGen { k: usize, t_max: usize },
}

impl LossFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LossFamily::Multiclass { k } if k < 2 => {
                Err(Error::invalid(format!("multiclass requires k >= 2, got {k}")))
            }
            LossFamily::SeqGen { k, t_max } if k < 2 || t_max < 1 => Err(Error::invalid(format!(
                "seqgen requires k >= 2 and t_max >= 1, got k={k}, t_max={t_max}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Natural parameter for one sample. For sequences, `steps.len()` is the
/// realized length; steps beyond it simply do not appear (explicit masking).
#[derive(Debug, Clone, PartialEq)]
pub enum NaturalParam {
    Scalar(f64),
    Vector(Vec<f64>),
    /// One logit vector per realized step.
    Sequence(Vec<Vec<f64>>),
}

impl NaturalParam {
    fn check(&self, family: &LossFamily) -> Result<()> {
        let ok = match (family, self) {
            (LossFamily::Regression | LossFamily::Binary, NaturalParam::Scalar(v)) => v.is_finite(),
            (LossFamily::Multiclass { k }, NaturalParam::Vector(v)) => {
                v.len() == *k && v.iter().all(|x| x.is_finite())
            }
            (LossFamily::SeqGen { k, t_max }, NaturalParam::Sequence(steps)) => {
                !steps.is_empty()
                    && steps.len() <= *t_max
                    && steps.iter().all(|s| s.len() == *k && s.iter().all(|x| x.is_finite()))
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::shape(format!("natural parameter does not conform to {family:?}")))
        }
    }
}

/// Observed label for one sample. One-hot labels are stored as class indices,
/// which makes the sum-to-one invariant structural.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Label {
    Real(f64),
    Binary(u8),
    Class(usize),
    /// Realized token indices; length must match the natural parameter.
    Tokens(Vec<usize>),
}

impl Label {
    fn check(&self, family: &LossFamily, eta: &NaturalParam) -> Result<()> {
        let ok = match (family, self) {
            (LossFamily::Regression, Label::Real(v)) => v.is_finite(),
            (LossFamily::Binary, Label::Binary(b)) => *b <= 1,
            (LossFamily::Multiclass { k }, Label::Class(c)) => c < k,
            (LossFamily::SeqGen { k, .. }, Label::Tokens(toks)) => {
                let len_ok = match eta {
                    NaturalParam::Sequence(steps) => steps.len() == toks.len(),
                    _ => false,
                };
                len_ok && toks.iter().all(|c| c < k)
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::shape(format!("label does not conform to {family:?}")))
        }
    }
}

/// Values in label space: mean parameters, residuals, gradients.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Scalar(f64),
    Vector(Vec<f64>),
    Sequence(Vec<Vec<f64>>),
}

/// Overflow-safe `log(1 + exp(x))`.
pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Overflow-safe log-sum-exp with max subtraction.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

/// Log-partition `b(eta)`.
pub fn log_partition(family: &LossFamily, eta: &NaturalParam) -> Result<f64> {
    eta.check(family)?;
    Ok(match (family, eta) {
        (LossFamily::Regression, NaturalParam::Scalar(v)) => 0.5 * v * v,
        (LossFamily::Binary, NaturalParam::Scalar(v)) => log1p_exp(*v),
        (LossFamily::Multiclass { .. }, NaturalParam::Vector(v)) => log_sum_exp(v),
        (LossFamily::SeqGen { .. }, NaturalParam::Sequence(steps)) => {
            steps.iter().map(|s| log_sum_exp(s)).sum()
        }
        _ => unreachable!("shape already validated"),
    })
}

/// Mean parameter `b'(eta)`: identity, sigmoid, or per-row softmax.
pub fn mean_param(family: &LossFamily, eta: &NaturalParam) -> Result<ParamValue> {
    eta.check(family)?;
    Ok(match (family, eta) {
        (LossFamily::Regression, NaturalParam::Scalar(v)) => ParamValue::Scalar(*v),
        (LossFamily::Binary, NaturalParam::Scalar(v)) => {
            ParamValue::Scalar(1.0 / (1.0 + (-v).exp()))
        }
        (LossFamily::Multiclass { .. }, NaturalParam::Vector(v)) => ParamValue::Vector(softmax(v)),
        (LossFamily::SeqGen { .. }, NaturalParam::Sequence(steps)) => {
            ParamValue::Sequence(steps.iter().map(|s| softmax(s)).collect())
        }
        _ => unreachable!("shape already validated"),
    })
}

/// Inner product `<y, eta>` with the one-hot structure exploited.
fn label_dot_eta(label: &Label, eta: &NaturalParam) -> f64 {
    match (label, eta) {
        (Label::Real(y), NaturalParam::Scalar(e)) => y * e,
        (Label::Binary(y), NaturalParam::Scalar(e)) => f64::from(*y) * e,
        (Label::Class(c), NaturalParam::Vector(v)) => v[*c],
        (Label::Tokens(toks), NaturalParam::Sequence(steps)) => {
            toks.iter().zip(steps).map(|(c, s)| s[*c]).sum()
        }
        _ => unreachable!("shape already validated"),
    }
}

/// Negative log-likelihood `-(y . eta - b(eta))` with `c(Y) = 0`.
pub fn nll(family: &LossFamily, eta: &NaturalParam, label: &Label) -> Result<f64> {
    eta.check(family)?;
    label.check(family, eta)?;
    Ok(log_partition(family, eta)? - label_dot_eta(label, eta))
}

/// Gradient of `nll` with respect to `eta`: `-(y - b'(eta))`.
/// Matches central finite differences of `nll` to relative error < 1e-6.
pub fn grad_nll_eta(family: &LossFamily, eta: &NaturalParam, label: &Label) -> Result<ParamValue> {
    eta.check(family)?;
    label.check(family, eta)?;
    let mu = mean_param(family, eta)?;
    Ok(match (&mu, label) {
        (ParamValue::Scalar(m), Label::Real(y)) => ParamValue::Scalar(m - y),
        (ParamValue::Scalar(m), Label::Binary(y)) => ParamValue::Scalar(m - f64::from(*y)),
        (ParamValue::Vector(m), Label::Class(c)) => {
            let mut g = m.clone();
            g[*c] -= 1.0;
            ParamValue::Vector(g)
        }
        (ParamValue::Sequence(m), Label::Tokens(toks)) => {
            let mut g = m.clone();
            for (row, c) in g.iter_mut().zip(toks) {
                row[*c] -= 1.0;
            }
            ParamValue::Sequence(g)
        }
        _ => unreachable!("shape already validated"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN_2: f64 = std::f64::consts::LN_2;

    fn ln(x: f64) -> f64 {
        x.ln()
    }

    #[test]
    fn log_partition_values() {
        assert_eq!(
            log_partition(&LossFamily::Regression, &NaturalParam::Scalar(2.0)).unwrap(),
            2.0
        );
        assert!(
            (log_partition(&LossFamily::Binary, &NaturalParam::Scalar(0.0)).unwrap() - LN_2).abs()
                < 1e-12
        );
        let lp = log_partition(
            &LossFamily::Multiclass { k: 3 },
            &NaturalParam::Vector(vec![0.0; 3]),
        )
        .unwrap();
        assert!((lp - ln(3.0)).abs() < 1e-12);
    }

    #[test]
    fn log_partition_overflow_safe() {
        let big = log_partition(&LossFamily::Binary, &NaturalParam::Scalar(800.0)).unwrap();
        assert!((big - 800.0).abs() < 1e-9);
        let lp = log_partition(
            &LossFamily::Multiclass { k: 2 },
            &NaturalParam::Vector(vec![1000.0, -1000.0]),
        )
        .unwrap();
        assert!((lp - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn mean_param_values() {
        assert_eq!(
            mean_param(&LossFamily::Regression, &NaturalParam::Scalar(-1.5)).unwrap(),
            ParamValue::Scalar(-1.5)
        );
        match mean_param(&LossFamily::Binary, &NaturalParam::Scalar(0.0)).unwrap() {
            ParamValue::Scalar(p) => assert!((p - 0.5).abs() < 1e-12),
            _ => panic!(),
        }
        match mean_param(
            &LossFamily::Multiclass { k: 2 },
            &NaturalParam::Vector(vec![ln(3.0), 0.0]),
        )
        .unwrap()
        {
            ParamValue::Vector(p) => {
                assert!((p[0] - 0.75).abs() < 1e-12);
                assert!((p[1] - 0.25).abs() < 1e-12);
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn nll_values() {
        let r = nll(&LossFamily::Regression, &NaturalParam::Scalar(1.0), &Label::Real(1.0)).unwrap();
        assert!((r + 0.5).abs() < 1e-12);
        let b = nll(&LossFamily::Binary, &NaturalParam::Scalar(0.0), &Label::Binary(1)).unwrap();
        assert!((b - LN_2).abs() < 1e-12);
        let m = nll(
            &LossFamily::Multiclass { k: 3 },
            &NaturalParam::Vector(vec![0.0; 3]),
            &Label::Class(0),
        )
        .unwrap();
        assert!((m - ln(3.0)).abs() < 1e-12);
    }

    #[test]
    fn nll_shape_errors() {
        assert!(nll(
            &LossFamily::Multiclass { k: 3 },
            &NaturalParam::Vector(vec![0.0; 2]),
            &Label::Class(0)
        )
        .is_err());
        assert!(nll(&LossFamily::Binary, &NaturalParam::Scalar(0.0), &Label::Real(0.3)).is_err());
        assert!(nll(
            &LossFamily::SeqGen { k: 3, t_max: 2 },
            &NaturalParam::Sequence(vec![vec![0.0; 3]; 2]),
            &Label::Tokens(vec![0]),
        )
        .is_err());
    }

    #[test]
    fn grad_values() {
        match grad_nll_eta(&LossFamily::Binary, &NaturalParam::Scalar(0.0), &Label::Binary(1))
            .unwrap()
        {
            ParamValue::Scalar(g) => assert!((g + 0.5).abs() < 1e-12),
            _ => panic!(),
        }
        match grad_nll_eta(&LossFamily::Regression, &NaturalParam::Scalar(0.7), &Label::Real(0.7))
            .unwrap()
        {
            ParamValue::Scalar(g) => assert!(g.abs() < 1e-12),
            _ => panic!(),
        }
    }

    fn fd_check_scalar(family: &LossFamily, eta0: f64, label: &Label) {
        let h = 1e-5;
        let up = nll(family, &NaturalParam::Scalar(eta0 + h), label).unwrap();
        let dn = nll(family, &NaturalParam::Scalar(eta0 - h), label).unwrap();
        let fd = (up - dn) / (2.0 * h);
        let g = match grad_nll_eta(family, &NaturalParam::Scalar(eta0), label).unwrap() {
            ParamValue::Scalar(g) => g,
            _ => panic!(),
        };
        let denom = fd.abs().max(1e-3);
        assert!(
            ((g - fd) / denom).abs() < 1e-6,
            "fd mismatch: analytic {g}, fd {fd}"
        );
    }

    #[test]
    fn grad_matches_finite_differences_multiclass() {
        let family = LossFamily::Multiclass { k: 3 };
        let eta = vec![1.0, 0.0, -1.0];
        let label = Label::Class(1);
        let g = match grad_nll_eta(&family, &NaturalParam::Vector(eta.clone()), &label).unwrap() {
            ParamValue::Vector(g) => g,
            _ => panic!(),
        };
        let h = 1e-5;
        for j in 0..3 {
            let mut up = eta.clone();
            up[j] += h;
            let mut dn = eta.clone();
            dn[j] -= h;
            let fd = (nll(&family, &NaturalParam::Vector(up), &label).unwrap()
                - nll(&family, &NaturalParam::Vector(dn), &label).unwrap())
                / (2.0 * h);
            assert!(((g[j] - fd) / fd.abs().max(1e-3)).abs() < 1e-6);
        }
        // -(e_1 - softmax(1, 0, -1)) elementwise
        let p = softmax(&[1.0, 0.0, -1.0]);
        assert!((g[1] - (p[1] - 1.0)).abs() < 1e-12);
        assert!((g[0] - p[0]).abs() < 1e-12);
    }

    #[test]
    fn grad_matches_finite_differences_scalar_families() {
        for eta in [-2.0, -0.3, 0.0, 0.9, 3.0] {
            fd_check_scalar(&LossFamily::Binary, eta, &Label::Binary(1));
            fd_check_scalar(&LossFamily::Binary, eta, &Label::Binary(0));
            fd_check_scalar(&LossFamily::Regression, eta, &Label::Real(0.4));
        }
    }

    #[test]
    fn seqgen_with_one_step_equals_multiclass() {
        let logits = vec![0.4, -1.2, 0.9, 0.0, 2.2];
        let seq = LossFamily::SeqGen { k: 5, t_max: 3 };
        let mc = LossFamily::Multiclass { k: 5 };
        let l_seq = nll(
            &seq,
            &NaturalParam::Sequence(vec![logits.clone()]),
            &Label::Tokens(vec![2]),
        )
        .unwrap();
        let l_mc = nll(&mc, &NaturalParam::Vector(logits), &Label::Class(2)).unwrap();
        assert_eq!(l_seq, l_mc);
    }

    #[test]
    fn seqgen_masks_by_realized_length() {
        let seq = LossFamily::SeqGen { k: 2, t_max: 4 };
        let two = nll(
            &seq,
            &NaturalParam::Sequence(vec![vec![0.0, 1.0], vec![0.5, -0.5]]),
            &Label::Tokens(vec![1, 0]),
        )
        .unwrap();
        let one = nll(
            &seq,
            &NaturalParam::Sequence(vec![vec![0.0, 1.0]]),
            &Label::Tokens(vec![1]),
        )
        .unwrap();
        assert!(two > one); // second step adds positive per-step nll here
    }

    #[test]
    fn regression_loss_differences_match_half_square_differences() {
        // nll differences equal 0.5(y-eta)^2 differences: the c(Y) term cancels.
        let y = 1.3;
        for (e1, e2) in [(0.0, 1.0), (-2.0, 0.4), (3.0, 3.5)] {
            let d_nll = nll(&LossFamily::Regression, &NaturalParam::Scalar(e1), &Label::Real(y))
                .unwrap()
                - nll(&LossFamily::Regression, &NaturalParam::Scalar(e2), &Label::Real(y)).unwrap();
            let d_sq = 0.5 * (y - e1).powi(2) - 0.5 * (y - e2).powi(2);
            assert!((d_nll - d_sq).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_nll_is_cross_entropy() {
        for eta in [-3.0, -0.5, 0.0, 1.2, 4.0] {
            let p = 1.0 / (1.0 + (-eta_f64(eta)).exp());
            for y in [0u8, 1u8] {
                let ce = if y == 1 { -p.ln() } else { -(1.0 - p).ln() };
                let l =
                    nll(&LossFamily::Binary, &NaturalParam::Scalar(eta), &Label::Binary(y)).unwrap();
                assert!((l - ce).abs() < 1e-12, "eta={eta} y={y}");
            }
        }
    }

    fn eta_f64(x: f64) -> f64 {
        x
    }

    proptest! {
        #[test]
        fn log_partition_convex_on_segments(
            e1 in proptest::collection::vec(-5.0f64..5.0, 4),
            e2 in proptest::collection::vec(-5.0f64..5.0, 4),
            lambda in 0.0f64..1.0,
        ) {
            let fam = LossFamily::Multiclass { k: 4 };
            let mix: Vec<f64> = e1.iter().zip(&e2).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
            let b_mix = log_partition(&fam, &NaturalParam::Vector(mix)).unwrap();
            let b1 = log_partition(&fam, &NaturalParam::Vector(e1)).unwrap();
            let b2 = log_partition(&fam, &NaturalParam::Vector(e2)).unwrap();
            prop_assert!(b_mix <= lambda * b1 + (1.0 - lambda) * b2 + 1e-12);
        }

        #[test]
        fn mean_param_is_gradient_of_log_partition(eta in -4.0f64..4.0) {
            for fam in [LossFamily::Regression, LossFamily::Binary] {
                let h = 1e-5;
                let fd = (log_partition(&fam, &NaturalParam::Scalar(eta + h)).unwrap()
                    - log_partition(&fam, &NaturalParam::Scalar(eta - h)).unwrap()) / (2.0 * h);
                let mu = match mean_param(&fam, &NaturalParam::Scalar(eta)).unwrap() {
                    ParamValue::Scalar(m) => m,
                    _ => unreachable!(),
                };
                prop_assert!(((mu - fd) / fd.abs().max(1e-3)).abs() < 1e-6);
            }
        }

        #[test]
        fn softmax_rows_sum_to_one(v in proptest::collection::vec(-30.0f64..30.0, 6)) {
            match mean_param(&LossFamily::Multiclass { k: 6 }, &NaturalParam::Vector(v)).unwrap() {
                ParamValue::Vector(p) => prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12),
                _ => unreachable!(),
            }
        }
    }
}
