//! Labeled source / unlabeled target datasets over a shared feature space,
//! and the deterministic nuisance/main fold split.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::Label;
use crate::util::{derive_rng, digest_matrix};

/// A labeled sample from the source distribution plus an unlabeled sample
/// from the target distribution, both over the same `d` features.
///
/// `source_labels` holds labels in label space; in general-form pipelines the
/// per-row quantity of interest is a realized loss instead, which callers
/// compute from labels and a model before calling the estimators.
#[derive(Debug, Clone)]
pub struct ShiftDataset {
    /// n x d, rows drawn from the source distribution P.
    pub source_features: DMatrix<f64>,
    pub source_labels: Vec<Label>,
    /// m x d, rows drawn from the target distribution Q.
    pub target_features: DMatrix<f64>,
    /// Evaluation only; estimators never read these.
    pub target_labels: Option<Vec<Label>>,
}

impl ShiftDataset {
    pub fn new(
        source_features: DMatrix<f64>,
        source_labels: Vec<Label>,
        target_features: DMatrix<f64>,
        target_labels: Option<Vec<Label>>,
    ) -> Result<Self> {
        let ds = ShiftDataset { source_features, source_labels, target_features, target_labels };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.source_features.shape();
        let (m, d2) = self.target_features.shape();
        if d != d2 {
            return Err(Error::shape(format!(
                "source has {d} features but target has {d2}"
            )));
        }
        if n < 2 || m < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 rows per domain, got n={n}, m={m}"
            )));
        }
        if self.source_labels.len() != n {
            return Err(Error::shape(format!(
                "{} source labels for {n} source rows",
                self.source_labels.len()
            )));
        }
        if let Some(tl) = &self.target_labels {
            if tl.len() != m {
                return Err(Error::shape(format!("{} target labels for {m} target rows", tl.len())));
            }
        }
        if self.source_features.iter().any(|v| !v.is_finite())
            || self.target_features.iter().any(|v| !v.is_finite())
        {
            return Err(Error::invalid("non-finite feature value".to_string()));
        }
        Ok(())
    }

    pub fn n_source(&self) -> usize {
        self.source_features.nrows()
    }

    pub fn n_target(&self) -> usize {
        self.target_features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.source_features.ncols()
    }

    /// Scalar labels for regression/binary tasks.
    pub fn source_labels_f64(&self) -> Result<Vec<f64>> {
        self.source_labels.iter().map(label_as_f64).collect()
    }

    pub fn target_labels_f64(&self) -> Result<Option<Vec<f64>>> {
        match &self.target_labels {
            None => Ok(None),
            Some(tl) => Ok(Some(tl.iter().map(label_as_f64).collect::<Result<_>>()?)),
        }
    }

    /// Digest over both feature matrices and scalarizable labels, for
    /// provenance fields in serialized reports.
    pub fn digest(&self) -> String {
        let (n, d) = self.source_features.shape();
        let m = self.target_features.nrows();
        let label_vals = self.source_labels.iter().map(|l| label_as_f64(l).unwrap_or(f64::NAN));
        let chained = self
            .source_features
            .transpose()
            .iter()
            .cloned()
            .collect::<Vec<f64>>()
            .into_iter()
            .chain(self.target_features.transpose().iter().cloned().collect::<Vec<f64>>())
            .chain(label_vals.collect::<Vec<f64>>());
        digest_matrix(n + m, d, chained)
    }
}

pub fn label_as_f64(label: &Label) -> Result<f64> {
    match label {
        Label::Real(v) => Ok(*v),
        Label::Binary(b) => Ok(f64::from(*b)),
        _ => Err(Error::shape("label is not scalar-valued".to_string())),
    }
}

/// Disjoint covering split of source and target rows into a nuisance fold
/// (for fitting g-hat and the density ratio) and a main fold (for the
/// estimators). Deterministic given the seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub nuisance_p: Vec<usize>,
    pub main_p: Vec<usize>,
    pub nuisance_q: Vec<usize>,
    pub main_q: Vec<usize>,
    pub seed: u64,
}

/// Splits rows with a `holdout_frac` nuisance share (rounded to the nearest
/// row) per domain. Errors when either fold would have fewer than 2 rows.
pub fn split_folds(dataset: &ShiftDataset, holdout_frac: f64, seed: u64) -> Result<FoldPlan> {
    if !(holdout_frac > 0.0 && holdout_frac < 1.0) {
        return Err(Error::invalid(format!(
            "holdout_frac must be in (0, 1), got {holdout_frac}"
        )));
    }
    let mut rng = derive_rng(seed, 0xF01D);
    let split_one = |rows: usize, tag: &str, rng: &mut rand_chacha::ChaCha8Rng| -> Result<(Vec<usize>, Vec<usize>)> {
        let k = (holdout_frac * rows as f64).round() as usize;
        if k < 2 || rows - k < 2 {
            return Err(Error::invalid(format!(
                "{tag}: split of {rows} rows at fraction {holdout_frac} leaves a fold with fewer than 2 rows"
            )));
        }
        let mut idx: Vec<usize> = (0..rows).collect();
        idx.shuffle(rng);
        let mut nuisance = idx[..k].to_vec();
        let mut main = idx[k..].to_vec();
        nuisance.sort_unstable();
        main.sort_unstable();
        Ok((nuisance, main))
    };
    let (nuisance_p, main_p) = split_one(dataset.n_source(), "source", &mut rng)?;
    let (nuisance_q, main_q) = split_one(dataset.n_target(), "target", &mut rng)?;
    Ok(FoldPlan { nuisance_p, main_p, nuisance_q, main_q, seed })
}

/// Row-subset view as an owned matrix.
pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn select_vals<T: Clone>(v: &[T], rows: &[usize]) -> Vec<T> {
    rows.iter().map(|&i| v[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset(n: usize, m: usize) -> ShiftDataset {
        ShiftDataset::new(
            DMatrix::from_fn(n, 2, |i, j| (i * 2 + j) as f64),
            (0..n).map(|i| Label::Real(i as f64)).collect(),
            DMatrix::from_fn(m, 2, |i, j| (i + j) as f64 * 0.5),
            None,
        )
        .unwrap()
    }

    #[test]
    fn split_is_disjoint_covering_with_expected_sizes() {
        let ds = toy_dataset(10, 8);
        let plan = split_folds(&ds, 0.3, 7).unwrap();
        assert_eq!(plan.nuisance_p.len(), 3);
        assert_eq!(plan.main_p.len(), 7);
        let mut all: Vec<usize> = plan.nuisance_p.iter().chain(&plan.main_p).cloned().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        let mut all_q: Vec<usize> = plan.nuisance_q.iter().chain(&plan.main_q).cloned().collect();
        all_q.sort_unstable();
        assert_eq!(all_q, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_deterministic() {
        let ds = toy_dataset(20, 20);
        assert_eq!(split_folds(&ds, 0.3, 7).unwrap(), split_folds(&ds, 0.3, 7).unwrap());
        assert_ne!(split_folds(&ds, 0.3, 7).unwrap(), split_folds(&ds, 0.3, 8).unwrap());
    }

    #[test]
    fn degenerate_split_errors() {
        let ds = toy_dataset(2, 10);
        assert!(split_folds(&ds, 0.9, 1).is_err());
        assert!(split_folds(&ds, 0.0, 1).is_err());
        assert!(split_folds(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn mismatched_dims_rejected() {
        let r = ShiftDataset::new(
            DMatrix::zeros(3, 2),
            vec![Label::Real(0.0); 3],
            DMatrix::zeros(3, 3),
            None,
        );
        assert!(r.is_err());
    }

    #[test]
    fn digest_changes_with_data() {
        let a = toy_dataset(5, 5);
        let mut b = toy_dataset(5, 5);
        assert_eq!(a.digest(), b.digest());
        b.source_features[(0, 0)] += 1.0;
        assert_ne!(a.digest(), b.digest());
    }
}
