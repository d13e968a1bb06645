//! Loss estimators on the main fold: unadjusted, importance-weighted, and
//! doubly robust (general loss-space form and GLM label-space form), plus
//! the identifiable bound ingredients sigma^2 (fidelity) and nu^2 (overlap).
//!
//! All means use pairwise summation, so results are deterministic to ~1e-12
//! independent of any surrounding parallelism.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{log_partition, Label, LossFamily, NaturalParam, ParamValue};
use crate::util::mean;

/// Which doubly robust decomposition produced an estimate: the general form
/// (outcome model predicts the loss) or the GLM form (outcome model predicts
/// the label).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorForm {
    General,
    Glm,
}

/// Point estimates and bound ingredients from one evaluation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub l_unadjusted: f64,
    pub l_ipw: f64,
    pub l_dr_s: f64,
    /// Mean squared residual of the short outcome model.
    pub sigma2: f64,
    /// Second moment of the short representer values.
    pub nu2: f64,
    /// Loss-based overlap diagnostic `2 E_Q[w] - E_P[w^2]`; can go negative,
    /// which signals an overlap violation.
    pub nu2_loss_based: f64,
    pub n_main_p: usize,
    pub m_main_q: usize,
    pub form: EstimatorForm,
    pub data_digest: String,
    pub seed: u64,
}

fn check_same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

fn check_positive_weights(weights: &[f64]) -> Result<()> {
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::invalid(format!("weights must be positive, found {w}")));
    }
    Ok(())
}

/// Plain mean of source losses; the no-adjustment baseline.
pub fn unadjusted_loss(losses_p: &[f64]) -> Result<f64> {
    if losses_p.is_empty() {
        return Err(Error::Empty("losses".to_string()));
    }
    Ok(mean(losses_p))
}

/// Importance-weighted loss `mean(w_i * loss_i)`.
pub fn ipw_loss(losses_p: &[f64], weights: &[f64]) -> Result<f64> {
    check_same_len(losses_p.len(), weights.len(), "losses vs weights")?;
    if losses_p.is_empty() {
        return Err(Error::Empty("losses".to_string()));
    }
    check_positive_weights(weights)?;
    let terms: Vec<f64> = losses_p.iter().zip(weights).map(|(l, w)| l * w).collect();
    Ok(mean(&terms))
}

/// General-form doubly robust estimate
/// `mean_P[w (loss - g)] + mean_Q[g]`, with g predicting the loss.
pub fn dr_general(losses_p: &[f64], g_p: &[f64], weights: &[f64], g_q: &[f64]) -> Result<f64> {
    check_same_len(losses_p.len(), g_p.len(), "losses vs g_P")?;
    check_same_len(losses_p.len(), weights.len(), "losses vs weights")?;
    if losses_p.is_empty() || g_q.is_empty() {
        return Err(Error::Empty("dr_general inputs".to_string()));
    }
    check_positive_weights(weights)?;
    let p_terms: Vec<f64> =
        losses_p.iter().zip(g_p).zip(weights).map(|((l, g), w)| w * (l - g)).collect();
    Ok(mean(&p_terms) + mean(g_q))
}

fn inner_eta_value(eta: &NaturalParam, v: &ParamValue) -> Result<f64> {
    match (eta, v) {
        (NaturalParam::Scalar(e), ParamValue::Scalar(x)) => Ok(e * x),
        (NaturalParam::Vector(e), ParamValue::Vector(x)) if e.len() == x.len() => {
            Ok(e.iter().zip(x).map(|(a, b)| a * b).sum())
        }
        (NaturalParam::Sequence(e), ParamValue::Sequence(x)) if e.len() == x.len() => {
            let mut total = 0.0;
            for (er, xr) in e.iter().zip(x) {
                if er.len() != xr.len() {
                    return Err(Error::shape("sequence step width mismatch".to_string()));
                }
                total += er.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
            }
            Ok(total)
        }
        _ => Err(Error::shape("eta and value shapes do not match".to_string())),
    }
}

fn inner_eta_label(eta: &NaturalParam, y: &Label) -> Result<f64> {
    match (eta, y) {
        (NaturalParam::Scalar(e), Label::Real(v)) => Ok(e * v),
        (NaturalParam::Scalar(e), Label::Binary(b)) => Ok(e * f64::from(*b)),
        (NaturalParam::Vector(e), Label::Class(c)) if *c < e.len() => Ok(e[*c]),
        (NaturalParam::Sequence(e), Label::Tokens(toks)) if e.len() == toks.len() => {
            Ok(e.iter().zip(toks).map(|(row, c)| row[*c]).sum())
        }
        _ => Err(Error::shape("eta and label shapes do not match".to_string())),
    }
}

fn check_label_space(family: &LossFamily, g: &ParamValue) -> Result<()> {
    match (family, g) {
        (LossFamily::Regression, ParamValue::Scalar(_)) => Ok(()),
        (LossFamily::Binary, ParamValue::Scalar(p)) => {
            if (-1e-6..=1.0 + 1e-6).contains(p) {
                Ok(())
            } else {
                Err(Error::invalid(format!("binary g must lie in [0, 1], got {p}")))
            }
        }
        (LossFamily::Multiclass { k }, ParamValue::Vector(p)) if p.len() == *k => {
            check_prob_row(p)
        }
        (LossFamily::SeqGen { k, .. }, ParamValue::Sequence(rows)) => {
            for row in rows {
                if row.len() != *k {
                    return Err(Error::shape("g sequence width mismatch".to_string()));
                }
                check_prob_row(row)?;
            }
            Ok(())
        }
        _ => Err(Error::shape(format!("g does not conform to {family:?}"))),
    }
}

fn check_prob_row(p: &[f64]) -> Result<()> {
    if p.iter().any(|v| *v < -1e-6 || *v > 1.0 + 1e-6) {
        return Err(Error::invalid("class probabilities must lie in [0, 1]".to_string()));
    }
    if p.iter().sum::<f64>() > 1.0 + 1e-6 {
        return Err(Error::invalid("class probabilities must sum to at most 1".to_string()));
    }
    Ok(())
}

/// GLM-form doubly robust estimate
/// `mean_Q[b(eta) - <eta, g>] - mean_P[w <eta, y - g>]`, with g predicting
/// the label's conditional mean.
pub fn dr_glm(
    family: &LossFamily,
    eta_p: &[NaturalParam],
    eta_q: &[NaturalParam],
    y_p: &[Label],
    g_p: &[ParamValue],
    g_q: &[ParamValue],
    weights: &[f64],
) -> Result<f64> {
    check_same_len(eta_p.len(), y_p.len(), "eta_P vs y_P")?;
    check_same_len(eta_p.len(), g_p.len(), "eta_P vs g_P")?;
    check_same_len(eta_p.len(), weights.len(), "eta_P vs weights")?;
    check_same_len(eta_q.len(), g_q.len(), "eta_Q vs g_Q")?;
    if eta_p.is_empty() || eta_q.is_empty() {
        return Err(Error::Empty("dr_glm inputs".to_string()));
    }
    check_positive_weights(weights)?;
    for g in g_p.iter().chain(g_q) {
        check_label_space(family, g)?;
    }

    let mut q_terms = Vec::with_capacity(eta_q.len());
    for (eta, g) in eta_q.iter().zip(g_q) {
        q_terms.push(log_partition(family, eta)? - inner_eta_value(eta, g)?);
    }
    let mut p_terms = Vec::with_capacity(eta_p.len());
    for ((eta, (y, g)), w) in eta_p.iter().zip(y_p.iter().zip(g_p)).zip(weights) {
        p_terms.push(w * (inner_eta_label(eta, y)? - inner_eta_value(eta, g)?));
    }
    Ok(mean(&q_terms) - mean(&p_terms))
}

/// Scalar-family convenience wrapper for `dr_glm` (regression and binary).
pub fn dr_glm_scalar(
    family: &LossFamily,
    eta_p: &[f64],
    eta_q: &[f64],
    y_p: &[f64],
    g_p: &[f64],
    g_q: &[f64],
    weights: &[f64],
) -> Result<f64> {
    let wrap_eta = |v: &[f64]| v.iter().map(|x| NaturalParam::Scalar(*x)).collect::<Vec<_>>();
    let wrap_val = |v: &[f64]| v.iter().map(|x| ParamValue::Scalar(*x)).collect::<Vec<_>>();
    let labels: Vec<Label> = match family {
        LossFamily::Regression => y_p.iter().map(|y| Label::Real(*y)).collect(),
        LossFamily::Binary => y_p
            .iter()
            .map(|y| {
                if *y == 0.0 || *y == 1.0 {
                    Ok(Label::Binary(*y as u8))
                } else {
                    Err(Error::invalid(format!("binary label must be 0 or 1, got {y}")))
                }
            })
            .collect::<Result<_>>()?,
        other => {
            return Err(Error::shape(format!("dr_glm_scalar does not support {other:?}")));
        }
    };
    dr_glm(family, &wrap_eta(eta_p), &wrap_eta(eta_q), &labels, &wrap_val(g_p), &wrap_val(g_q), weights)
}

/// Fidelity: mean squared residual of the short outcome model against its
/// target (loss values in the general form, labels in the GLM form).
pub fn fidelity(residual_targets: &[f64], g_preds: &[f64]) -> Result<f64> {
    check_same_len(residual_targets.len(), g_preds.len(), "targets vs predictions")?;
    if residual_targets.is_empty() {
        return Err(Error::Empty("fidelity inputs".to_string()));
    }
    let sq: Vec<f64> =
        residual_targets.iter().zip(g_preds).map(|(t, g)| (t - g) * (t - g)).collect();
    Ok(mean(&sq))
}

/// Overlap: second moment of the per-sample short representer values. In the
/// GLM form the inputs already carry the natural-parameter factor.
pub fn overlap(alphas_p: &[f64]) -> Result<f64> {
    if alphas_p.is_empty() {
        return Err(Error::Empty("overlap inputs".to_string()));
    }
    let sq: Vec<f64> = alphas_p.iter().map(|a| a * a).collect();
    Ok(mean(&sq))
}

/// Secondary overlap diagnostic `2 mean_Q[w] - mean_P[w^2]`. Agrees with
/// `overlap` when the weights are consistent and can go negative when they
/// are not, signalling an overlap violation.
pub fn overlap_loss_based(w_on_q: &[f64], w_on_p: &[f64]) -> Result<f64> {
    if w_on_q.is_empty() || w_on_p.is_empty() {
        return Err(Error::Empty("overlap_loss_based inputs".to_string()));
    }
    let sq: Vec<f64> = w_on_p.iter().map(|w| w * w).collect();
    Ok(2.0 * mean(w_on_q) - mean(&sq))
}
