//! Nuisance models: the outcome model g-hat and the density-ratio model
//! w-hat, fitted on held-out folds and frozen before any estimator or
//! optimizer touches the main fold.
//!
//! The outcome model is either closed-form ridge or a one-hidden-layer tanh
//! network. The density ratio is a probabilistic domain classifier
//! (logistic regression) whose prior-corrected odds estimate dQ/dP, clipped
//! to configured bounds.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{select_rows, select_vals, FoldPlan, ShiftDataset};
use crate::error::{Error, Result};
use crate::util::derive_rng;

/// Outcome model architecture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeKind {
    /// Exact solve of (X'X + lambda I) beta = X'y with unpenalized intercept.
    /// `lambda = None` uses 1e-3 * trace(X'X) / d.
    Ridge { lambda: Option<f64> },
    /// One hidden tanh layer, full-batch gradient descent with a fixed step.
    Net { width: usize },
}

impl Default for OutcomeKind {
    fn default() -> Self {
        OutcomeKind::Ridge { lambda: None }
    }
}

/// What the outcome model predicts: the realized loss (general form) or the
/// label's conditional mean (GLM form).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    PredictsLoss,
    PredictsLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum OutcomeParams {
    /// (d+1) x k coefficients, intercept in the last row.
    Linear { coef: Vec<Vec<f64>> },
    Net {
        w1: Vec<Vec<f64>>, // d x width
        b1: Vec<f64>,
        w2: Vec<Vec<f64>>, // width x k
        b2: Vec<f64>,
        x_mean: Vec<f64>,
        x_scale: Vec<f64>,
        y_mean: Vec<f64>,
    },
}

/// A fitted outcome model with `out_dim` outputs (1 for scalar tasks,
/// K for multiclass label probabilities).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub kind: OutcomeKind,
    pub target_mode: TargetMode,
    pub in_dim: usize,
    pub out_dim: usize,
    pub seed: u64,
    params: OutcomeParams,
}

const NET_STEP: f64 = 0.05;
const NET_MAX_ITERS: usize = 2000;
const NET_GRAD_TOL: f64 = 1e-8;

/// Fits an outcome model on `features` (n x d) against `targets` (n x k).
pub fn fit_outcome(
    features: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    kind: OutcomeKind,
    target_mode: TargetMode,
    seed: u64,
) -> Result<OutcomeModel> {
    let (n, d) = features.shape();
    if targets.nrows() != n {
        return Err(Error::shape(format!(
            "{} feature rows vs {} target rows",
            n,
            targets.nrows()
        )));
    }
    if n < 2 {
        return Err(Error::invalid("need at least 2 rows to fit an outcome model".to_string()));
    }
    let params = match kind {
        OutcomeKind::Ridge { lambda } => fit_ridge(features, targets, lambda)?,
        OutcomeKind::Net { width } => fit_net(features, targets, width, seed)?,
    };
    Ok(OutcomeModel {
        kind,
        target_mode,
        in_dim: d,
        out_dim: targets.ncols(),
        seed,
        params,
    })
}

/// Scalar-target convenience wrapper.
pub fn fit_outcome_scalar(
    features: &DMatrix<f64>,
    targets: &[f64],
    kind: OutcomeKind,
    target_mode: TargetMode,
    seed: u64,
) -> Result<OutcomeModel> {
    let t = DMatrix::from_column_slice(targets.len(), 1, targets);
    fit_outcome(features, &t, kind, target_mode, seed)
}

fn fit_ridge(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: Option<f64>) -> Result<OutcomeParams> {
    let (n, d) = x.shape();
    let lam = lambda.unwrap_or_else(|| {
        let tr: f64 = (0..d).map(|j| x.column(j).dot(&x.column(j))).sum();
        1e-3 * tr / d.max(1) as f64
    });
    let xa = augment_intercept(x);
    let mut gram = xa.transpose() * &xa;
    for j in 0..d {
        gram[(j, j)] += lam; // intercept (row d) stays unpenalized
    }
    let rhs = xa.transpose() * y;
    let chol = gram.clone().cholesky().ok_or_else(|| {
        Error::Degenerate(format!(
            "ridge normal equations are singular (n={n}, d={d}, lambda={lam})"
        ))
    })?;
    let coef = chol.solve(&rhs);
    Ok(OutcomeParams::Linear {
        coef: (0..=d).map(|i| coef.row(i).iter().cloned().collect()).collect(),
    })
}

fn augment_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = x.shape();
    DMatrix::from_fn(n, d + 1, |i, j| if j < d { x[(i, j)] } else { 1.0 })
}

fn fit_net(x: &DMatrix<f64>, y: &DMatrix<f64>, width: usize, seed: u64) -> Result<OutcomeParams> {
    if width == 0 {
        return Err(Error::invalid("net width must be positive".to_string()));
    }
    let (n, d) = x.shape();
    let k = y.ncols();

    // Standardize inputs and center targets so the fixed step is usable
    // across data scales.
    let x_mean: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
    let x_scale: Vec<f64> = (0..d)
        .map(|j| {
            let m = x_mean[j];
            let v = x.column(j).iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            v.sqrt().max(1e-12)
        })
        .collect();
    let y_mean: Vec<f64> = (0..k).map(|j| y.column(j).mean()).collect();
    let xs = DMatrix::from_fn(n, d, |i, j| (x[(i, j)] - x_mean[j]) / x_scale[j]);
    let yc = DMatrix::from_fn(n, k, |i, j| y[(i, j)] - y_mean[j]);

    // Random hidden layer, zero output layer: predictions start at the
    // target mean, so constant targets are an exact fixed point.
    let mut rng = derive_rng(seed, 0x0E7);
    let a1 = (6.0 / (d + width) as f64).sqrt();
    let mut w1 = DMatrix::from_fn(d, width, |_, _| rng.gen_range(-a1..a1));
    let mut b1 = DVector::zeros(width);
    let mut w2 = DMatrix::<f64>::zeros(width, k);
    let mut b2 = DVector::zeros(k);

    let ones = DVector::from_element(n, 1.0);
    for _ in 0..NET_MAX_ITERS {
        let hidden_pre = &xs * &w1 + &ones * b1.transpose();
        let hidden = hidden_pre.map(f64::tanh);
        let pred = &hidden * &w2 + &ones * b2.transpose();
        let resid = &pred - &yc;

        // MSE/2 gradient, averaged over rows.
        let scale = 1.0 / n as f64;
        let g_w2 = hidden.transpose() * &resid * scale;
        let g_b2 = resid.row_sum().transpose() * scale;
        let back = (&resid * w2.transpose()).component_mul(&hidden.map(|h| 1.0 - h * h));
        let g_w1 = xs.transpose() * &back * scale;
        let g_b1 = back.row_sum().transpose() * scale;

        let gnorm = (g_w1.norm_squared() + g_b1.norm_squared() + g_w2.norm_squared()
            + g_b2.norm_squared())
        .sqrt();
        if gnorm < NET_GRAD_TOL {
            break;
        }
        w1 -= g_w1 * NET_STEP;
        b1 -= g_b1 * NET_STEP;
        w2 -= g_w2 * NET_STEP;
        b2 -= g_b2 * NET_STEP;
    }

    let to_rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
    };
    Ok(OutcomeParams::Net {
        w1: to_rows(&w1),
        b1: b1.iter().cloned().collect(),
        w2: to_rows(&w2),
        b2: b2.iter().cloned().collect(),
        x_mean,
        x_scale,
        y_mean,
    })
}

/// Predicts n x out_dim values; finite by construction of both model kinds.
pub fn predict_outcome(model: &OutcomeModel, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if features.ncols() != model.in_dim {
        return Err(Error::shape(format!(
            "model expects {} features, got {}",
            model.in_dim,
            features.ncols()
        )));
    }
    let n = features.nrows();
    match &model.params {
        OutcomeParams::Linear { coef } => {
            let xa = augment_intercept(features);
            let coef_m = DMatrix::from_fn(model.in_dim + 1, model.out_dim, |i, j| coef[i][j]);
            Ok(xa * coef_m)
        }
        OutcomeParams::Net { w1, b1, w2, b2, x_mean, x_scale, y_mean } => {
            let d = model.in_dim;
            let width = b1.len();
            let xs = DMatrix::from_fn(n, d, |i, j| (features[(i, j)] - x_mean[j]) / x_scale[j]);
            let w1m = DMatrix::from_fn(d, width, |i, j| w1[i][j]);
            let w2m = DMatrix::from_fn(width, model.out_dim, |i, j| w2[i][j]);
            let ones = DVector::from_element(n, 1.0);
            let hidden = (&xs * w1m + &ones * DVector::from_column_slice(b1).transpose())
                .map(f64::tanh);
            let mut out = hidden * w2m + ones * DVector::from_column_slice(b2).transpose();
            for j in 0..model.out_dim {
                for i in 0..n {
                    out[(i, j)] += y_mean[j];
                }
            }
            Ok(out)
        }
    }
}

/// Scalar-output convenience wrapper.
pub fn predict_outcome_scalar(model: &OutcomeModel, features: &DMatrix<f64>) -> Result<Vec<f64>> {
    let out = predict_outcome(model, features)?;
    if out.ncols() != 1 {
        return Err(Error::shape(format!("model has {} outputs, expected 1", out.ncols())));
    }
    Ok(out.column(0).iter().cloned().collect())
}

/// Density-ratio model: logistic domain classifier with prior correction
/// n_P / n_Q, clipped to `clip_bounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRatioModel {
    /// Logistic coefficients, intercept last.
    pub classifier: Vec<f64>,
    pub prior_correction: f64,
    pub clip_bounds: (f64, f64),
    /// Set when the training domains were perfectly separated, which signals
    /// an overlap violation.
    pub overlap_warning: bool,
    pub seed: u64,
}

pub const DEFAULT_CLIP: (f64, f64) = (0.01, 100.0);

/// Fits the domain classifier by Newton-Raphson on pooled P (label 0) and
/// Q (label 1) rows. Deterministic: the start point is zero and the data
/// order is fixed.
pub fn fit_density_ratio(
    features_p: &DMatrix<f64>,
    features_q: &DMatrix<f64>,
    seed: u64,
    clip_bounds: (f64, f64),
) -> Result<DensityRatioModel> {
    let (n_p, d) = features_p.shape();
    let (n_q, d2) = features_q.shape();
    if d != d2 {
        return Err(Error::shape(format!("P has {d} features, Q has {d2}")));
    }
    if n_p == 0 || n_q == 0 {
        return Err(Error::Empty("both domains must be non-empty".to_string()));
    }
    if !(clip_bounds.0 > 0.0 && clip_bounds.1 > clip_bounds.0) {
        return Err(Error::invalid(format!(
            "clip bounds must satisfy 0 < lo < hi, got {clip_bounds:?}"
        )));
    }

    let n = n_p + n_q;
    let xa = {
        let mut m = DMatrix::zeros(n, d + 1);
        for i in 0..n_p {
            for j in 0..d {
                m[(i, j)] = features_p[(i, j)];
            }
            m[(i, d)] = 1.0;
        }
        for i in 0..n_q {
            for j in 0..d {
                m[(n_p + i, j)] = features_q[(i, j)];
            }
            m[(n_p + i, d)] = 1.0;
        }
        m
    };
    let labels: Vec<f64> =
        (0..n).map(|i| if i < n_p { 0.0 } else { 1.0 }).collect();

    let mut w = DVector::zeros(d + 1);
    for _ in 0..100 {
        let logits = &xa * &w;
        let probs: Vec<f64> = logits.iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect();
        let mut grad = DVector::zeros(d + 1);
        for i in 0..n {
            let r = probs[i] - labels[i];
            for j in 0..=d {
                grad[j] += r * xa[(i, j)];
            }
        }
        grad /= n as f64;
        // ridge jitter keeps the Hessian invertible under near-separation
        let mut hess = DMatrix::from_element(d + 1, d + 1, 0.0);
        for i in 0..n {
            let v = probs[i] * (1.0 - probs[i]);
            for j in 0..=d {
                let xj = xa[(i, j)] * v;
                for l in j..=d {
                    hess[(j, l)] += xj * xa[(i, l)];
                }
            }
        }
        for j in 0..=d {
            for l in 0..j {
                hess[(j, l)] = hess[(l, j)];
            }
        }
        hess /= n as f64;
        for j in 0..=d {
            hess[(j, j)] += 1e-8;
        }
        let step = hess
            .cholesky()
            .map(|c| c.solve(&grad))
            .ok_or_else(|| Error::Numerical("domain classifier Hessian not PD".to_string()))?;
        w -= &step;
        if step.norm() < 1e-10 {
            break;
        }
    }

    // Perfect separation: every P score strictly below every Q score.
    let logits = &xa * &w;
    let max_p = logits.iter().take(n_p).cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_q = logits.iter().skip(n_p).cloned().fold(f64::INFINITY, f64::min);
    let overlap_warning = max_p < min_q;

    Ok(DensityRatioModel {
        classifier: w.iter().cloned().collect(),
        prior_correction: n_p as f64 / n_q as f64,
        clip_bounds,
        overlap_warning,
        seed,
    })
}

/// Clipped importance weights `clip(odds * n_P/n_Q)`; all outputs positive
/// and inside the clip bounds.
pub fn predict_ratio(model: &DensityRatioModel, features: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(predict_ratio_detailed(model, features)?.0)
}

/// Clipped weights plus the number of rows that hit a clip bound.
pub fn predict_ratio_detailed(
    model: &DensityRatioModel,
    features: &DMatrix<f64>,
) -> Result<(Vec<f64>, usize)> {
    let raw = predict_ratio_unclipped(model, features)?;
    let (lo, hi) = model.clip_bounds;
    let mut clipped = 0usize;
    let out = raw
        .into_iter()
        .map(|w| {
            if w < lo || w > hi {
                clipped += 1;
            }
            w.clamp(lo, hi)
        })
        .collect();
    Ok((out, clipped))
}

/// Raw prior-corrected odds, before clipping. Used by diagnostics that need
/// the calibration property E_P[w] -> 1.
pub fn predict_ratio_unclipped(
    model: &DensityRatioModel,
    features: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let d = model.classifier.len() - 1;
    if features.ncols() != d {
        return Err(Error::shape(format!(
            "ratio model expects {d} features, got {}",
            features.ncols()
        )));
    }
    Ok((0..features.nrows())
        .map(|i| {
            let z: f64 = (0..d).map(|j| features[(i, j)] * model.classifier[j]).sum::<f64>()
                + model.classifier[d];
            let p = (1.0 / (1.0 + (-z).exp())).clamp(1e-15, 1.0 - 1e-15);
            p / (1.0 - p) * model.prior_correction
        })
        .collect())
}

/// The fitted nuisance pair plus the fold plan it was fitted under.
/// Immutable once constructed; estimators and the optimizer only read it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NuisanceSet {
    pub version: u32,
    pub outcome: OutcomeModel,
    pub ratio: DensityRatioModel,
    pub fold_plan: FoldPlan,
    pub seed: u64,
    pub data_digest: String,
}

pub const NUISANCE_FORMAT_VERSION: u32 = 1;

impl NuisanceSet {
    /// Fits both nuisances on the nuisance folds of `plan`. The outcome model
    /// regresses `targets_p` (one row per source row; loss values or labels
    /// depending on `target_mode`) on source features.
    pub fn fit(
        dataset: &ShiftDataset,
        plan: &FoldPlan,
        targets_p: &DMatrix<f64>,
        kind: OutcomeKind,
        target_mode: TargetMode,
        clip_bounds: (f64, f64),
        seed: u64,
    ) -> Result<Self> {
        if targets_p.nrows() != dataset.n_source() {
            return Err(Error::shape(format!(
                "{} outcome targets for {} source rows",
                targets_p.nrows(),
                dataset.n_source()
            )));
        }
        let x_nu = select_rows(&dataset.source_features, &plan.nuisance_p);
        let t_rows: Vec<usize> = plan.nuisance_p.clone();
        let t_nu = DMatrix::from_fn(t_rows.len(), targets_p.ncols(), |i, j| {
            targets_p[(t_rows[i], j)]
        });
        let outcome = fit_outcome(&x_nu, &t_nu, kind, target_mode, seed)?;
        let xq_nu = select_rows(&dataset.target_features, &plan.nuisance_q);
        let ratio = fit_density_ratio(&x_nu, &xq_nu, seed, clip_bounds)?;
        Ok(NuisanceSet {
            version: NUISANCE_FORMAT_VERSION,
            outcome,
            ratio,
            fold_plan: plan.clone(),
            seed,
            data_digest: dataset.digest(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: NuisanceSet =
            serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        if set.version != NUISANCE_FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported nuisance format version {}",
                set.version
            )));
        }
        Ok(set)
    }

    /// Main-fold source rows as (features, scalar targets, weights, g-hat).
    pub fn main_fold_source(
        &self,
        dataset: &ShiftDataset,
        targets_p: &[f64],
    ) -> Result<(DMatrix<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        let x = select_rows(&dataset.source_features, &self.fold_plan.main_p);
        let t = select_vals(targets_p, &self.fold_plan.main_p);
        let w = predict_ratio(&self.ratio, &x)?;
        let g = predict_outcome_scalar(&self.outcome, &x)?;
        Ok((x, t, w, g))
    }

    /// Main-fold target rows as (features, g-hat).
    pub fn main_fold_target(&self, dataset: &ShiftDataset) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let x = select_rows(&dataset.target_features, &self.fold_plan.main_q);
        let g = predict_outcome_scalar(&self.outcome, &x)?;
        Ok((x, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::mean;
    use rand::Rng;

    #[test]
    fn ridge_identity_task_recovers_labels() {
        // features == labels, tiny lambda: predictions equal labels
        let x = DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let m = fit_outcome_scalar(&x, &y, OutcomeKind::Ridge { lambda: Some(1e-8) },
            TargetMode::PredictsLabel, 0).unwrap();
        let pred = predict_outcome_scalar(&m, &x).unwrap();
        for (p, t) in pred.iter().zip(&y) {
            assert!((p - t).abs() < 1e-6);
        }
    }

    #[test]
    fn ridge_constant_targets() {
        let x = DMatrix::from_fn(10, 3, |i, j| ((i + j) as f64).sin());
        let y = vec![4.2; 10];
        let m = fit_outcome_scalar(&x, &y, OutcomeKind::default(), TargetMode::PredictsLabel, 0)
            .unwrap();
        for p in predict_outcome_scalar(&m, &x).unwrap() {
            assert!((p - 4.2).abs() < 1e-8);
        }
    }

    #[test]
    fn ridge_singular_without_regularization() {
        let x = DMatrix::zeros(4, 2);
        let y = vec![1.0, 2.0, 3.0, 4.0];
        // rank-0 features with lambda = 0: intercept still fits, but the
        // slope block is singular
        let r = fit_outcome_scalar(&x, &y, OutcomeKind::Ridge { lambda: Some(0.0) },
            TargetMode::PredictsLabel, 0);
        assert!(r.is_err());
    }

    #[test]
    fn ridge_no_worse_than_best_constant() {
        let mut rng = derive_rng(3, 0);
        let x = DMatrix::from_fn(50, 4, |_, _| rng.gen_range(-1.0..1.0));
        let y: Vec<f64> = (0..50).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let m = fit_outcome_scalar(&x, &y, OutcomeKind::default(), TargetMode::PredictsLabel, 0)
            .unwrap();
        let pred = predict_outcome_scalar(&m, &x).unwrap();
        let mse = mean(&pred.iter().zip(&y).map(|(p, t)| (p - t) * (p - t)).collect::<Vec<_>>());
        let ybar = mean(&y);
        let mse_const = mean(&y.iter().map(|t| (t - ybar) * (t - ybar)).collect::<Vec<_>>());
        assert!(mse <= mse_const + 1e-9);
    }

    #[test]
    fn net_fits_constant_and_is_deterministic() {
        let x = DMatrix::from_fn(20, 2, |i, j| (i as f64 * 0.3 + j as f64).cos());
        let y = vec![0.0; 20];
        let m1 = fit_outcome_scalar(&x, &y, OutcomeKind::Net { width: 8 },
            TargetMode::PredictsLabel, 11).unwrap();
        let m2 = fit_outcome_scalar(&x, &y, OutcomeKind::Net { width: 8 },
            TargetMode::PredictsLabel, 11).unwrap();
        assert_eq!(m1, m2); // bit-identical refit
        for p in predict_outcome_scalar(&m1, &x).unwrap() {
            assert!(p.abs() < 1e-8);
        }
    }

    #[test]
    fn net_learns_linear_signal() {
        let mut rng = derive_rng(5, 1);
        let x = DMatrix::from_fn(200, 2, |_, _| rng.gen_range(-1.0..1.0));
        let y: Vec<f64> = (0..200).map(|i| 2.0 * x[(i, 0)] - x[(i, 1)]).collect();
        let m = fit_outcome_scalar(&x, &y, OutcomeKind::Net { width: 16 },
            TargetMode::PredictsLabel, 5).unwrap();
        let pred = predict_outcome_scalar(&m, &x).unwrap();
        let mse = mean(&pred.iter().zip(&y).map(|(p, t)| (p - t) * (p - t)).collect::<Vec<_>>());
        assert!(mse < 0.05, "net failed to fit linear signal, mse={mse}");
    }

    #[test]
    fn identical_domains_give_unit_weights() {
        let mut rng = derive_rng(7, 2);
        let x = DMatrix::from_fn(500, 2, |_, _| rng.gen_range(-1.0..1.0));
        let m = fit_density_ratio(&x, &x, 0, DEFAULT_CLIP).unwrap();
        let w = predict_ratio(&m, &x).unwrap();
        for wi in &w {
            assert!((wi - 1.0).abs() < 0.05, "weight {wi} too far from 1");
        }
        assert!(!m.overlap_warning);
    }

    #[test]
    fn ratio_outputs_respect_clip_bounds() {
        let xp = DMatrix::from_column_slice(20, 1, &(0..20).map(|i| i as f64 * 0.1).collect::<Vec<_>>());
        let xq = DMatrix::from_column_slice(20, 1, &(0..20).map(|i| 2.0 + i as f64 * 0.1).collect::<Vec<_>>());
        let m = fit_density_ratio(&xp, &xq, 0, (0.1, 10.0)).unwrap();
        let grid = DMatrix::from_column_slice(9, 1, &[-5.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 5.0, 9.0]);
        let (w, clipped) = predict_ratio_detailed(&m, &grid).unwrap();
        assert!(w.iter().all(|v| *v >= 0.1 && *v <= 10.0));
        assert!(w.iter().all(|v| *v > 0.0));
        assert!(clipped > 0);
    }

    #[test]
    fn separable_domains_raise_overlap_warning() {
        let xp = DMatrix::from_column_slice(30, 1, &(0..30).map(|i| -1.0 - i as f64 * 0.05).collect::<Vec<_>>());
        let xq = DMatrix::from_column_slice(30, 1, &(0..30).map(|i| 1.0 + i as f64 * 0.05).collect::<Vec<_>>());
        let m = fit_density_ratio(&xp, &xq, 0, DEFAULT_CLIP).unwrap();
        assert!(m.overlap_warning);
    }

    #[test]
    fn refit_reproduces_parameters_bitwise() {
        let mut rng = derive_rng(9, 3);
        let xp = DMatrix::from_fn(40, 3, |_, _| rng.gen_range(-1.0..1.0));
        let xq = DMatrix::from_fn(30, 3, |_, _| rng.gen_range(-0.5..1.5));
        let a = fit_density_ratio(&xp, &xq, 4, DEFAULT_CLIP).unwrap();
        let b = fit_density_ratio(&xp, &xq, 4, DEFAULT_CLIP).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_rows_predict_identically() {
        let mut rng = derive_rng(13, 4);
        let x = DMatrix::from_fn(30, 2, |_, _| rng.gen_range(-1.0..1.0));
        let y: Vec<f64> = (0..30).map(|i| x[(i, 0)] * 0.5).collect();
        let m = fit_outcome_scalar(&x, &y, OutcomeKind::default(), TargetMode::PredictsLabel, 0)
            .unwrap();
        let dup = DMatrix::from_fn(2, 2, |i, j| x[(i * 0, j)]); // two copies of row 0
        let p = predict_outcome_scalar(&m, &dup).unwrap();
        assert_eq!(p[0], p[1]);
    }

    #[test]
    fn nuisance_set_roundtrips_through_json() {
        let mut rng = derive_rng(17, 5);
        let ds = ShiftDataset::new(
            DMatrix::from_fn(20, 2, |_, _| rng.gen_range(-1.0..1.0)),
            (0..20).map(|i| crate::glm::Label::Real(i as f64 * 0.1)).collect(),
            DMatrix::from_fn(20, 2, |_, _| rng.gen_range(-1.0..1.0)),
            None,
        )
        .unwrap();
        let plan = crate::dataset::split_folds(&ds, 0.3, 1).unwrap();
        let targets = DMatrix::from_fn(20, 1, |i, _| i as f64 * 0.1);
        let set = NuisanceSet::fit(&ds, &plan, &targets, OutcomeKind::default(),
            TargetMode::PredictsLabel, DEFAULT_CLIP, 1).unwrap();
        let json = set.to_json().unwrap();
        let back = NuisanceSet::from_json(&json).unwrap();
        assert_eq!(set.outcome, back.outcome);
        assert_eq!(set.ratio, back.ratio);
        assert_eq!(set.data_digest, back.data_digest);
    }
}
