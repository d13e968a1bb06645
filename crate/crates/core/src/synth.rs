//! Controlled distribution-shift worlds with closed-form truths.
//!
//! Two families:
//! - [`OracleWorld`]: a finite discrete joint over (long features, label)
//!   with separate source and target cell probabilities. Every estimand is
//!   an exact finite sum, which makes these worlds the reference oracle for
//!   the estimators, bounds, and optimizer tests.
//! - Gaussian semi-synthetic worlds ([`SynthConfig`]): isotropic Gaussian
//!   features with a per-feature mean shift, a linear label in a known
//!   subset of features, and an omission mask hiding some label-relevant
//!   features from the short representation.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::ShiftDataset;
use crate::error::{Error, Result};
use crate::glm::{nll, Label, LossFamily, NaturalParam};
use crate::util::{derive_rng, mean};

/// One support point of a discrete world: long feature vector, label value,
/// and its probability under the source and target distributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleCell {
    pub x_long: Vec<f64>,
    pub y: f64,
    pub p_source: f64,
    pub p_target: f64,
}

/// Exactly enumerable world over a finite support.
///
/// The short representation is the projection of `x_long` onto
/// `short_dims`; estimators only ever see that projection, the remaining
/// coordinates act as the unobserved covariates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleWorld {
    pub cells: Vec<OracleCell>,
    pub short_dims: Vec<usize>,
    pub family: LossFamily,
}

fn key_of(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| v.to_bits()).collect()
}

impl OracleWorld {
    /// Checks normalization, overlap (p_target > 0 implies p_source > 0),
    /// and covariate shift (identical conditional label law given the long
    /// features under both distributions).
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Empty("oracle world has no cells".to_string()));
        }
        let sum_p: f64 = self.cells.iter().map(|c| c.p_source).sum();
        let sum_q: f64 = self.cells.iter().map(|c| c.p_target).sum();
        if (sum_p - 1.0).abs() > 1e-9 || (sum_q - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "cell probabilities must sum to 1 (source {sum_p}, target {sum_q})"
            )));
        }
        if self.cells.iter().any(|c| c.p_source < 0.0 || c.p_target < 0.0) {
            return Err(Error::invalid("negative cell probability".to_string()));
        }
        if self.cells.iter().any(|c| c.p_target > 0.0 && c.p_source == 0.0) {
            return Err(Error::invalid(
                "overlap violated: target support outside source support".to_string(),
            ));
        }
        let d = self.cells[0].x_long.len();
        if self.cells.iter().any(|c| c.x_long.len() != d) {
            return Err(Error::shape("ragged long feature vectors".to_string()));
        }
        if self.short_dims.iter().any(|&j| j >= d) {
            return Err(Error::invalid("short_dims out of range".to_string()));
        }
        // covariate shift: p(y | x_long) identical under both distributions
        let mut groups: HashMap<Vec<u64>, (f64, f64)> = HashMap::new();
        for c in &self.cells {
            let e = groups.entry(key_of(&c.x_long)).or_insert((0.0, 0.0));
            e.0 += c.p_source;
            e.1 += c.p_target;
        }
        for c in &self.cells {
            let (gp, gq) = groups[&key_of(&c.x_long)];
            if gp > 0.0 && gq > 0.0 {
                let cond_p = c.p_source / gp;
                let cond_q = c.p_target / gq;
                if (cond_p - cond_q).abs() > 1e-9 {
                    return Err(Error::invalid(
                        "covariate shift violated: label law differs across distributions"
                            .to_string(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn short_view(&self, x_long: &[f64]) -> Vec<f64> {
        self.short_dims.iter().map(|&j| x_long[j]).collect()
    }

    fn label_of(&self, y: f64) -> Label {
        match self.family {
            LossFamily::Regression => Label::Real(y),
            LossFamily::Binary => Label::Binary(y as u8),
            _ => unreachable!("oracle worlds are scalar-family only"),
        }
    }

    /// Draws i.i.d. samples; the dataset carries the short projection and
    /// labels on both sides (target labels for evaluation only). The full
    /// long features are returned separately for benchmarking tests; the
    /// estimators must never see them.
    pub fn sample(&self, n: usize, m: usize, seed: u64) -> Result<(ShiftDataset, HiddenLongFeatures)> {
        self.validate()?;
        if n < 2 || m < 2 {
            return Err(Error::invalid("need n >= 2 and m >= 2".to_string()));
        }
        let mut rng = derive_rng(seed, 0x0A17);
        let draw = |probs: &[f64], rng: &mut rand_chacha::ChaCha8Rng| -> usize {
            let u: f64 = rng.gen::<f64>();
            let mut acc = 0.0;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            probs.len() - 1
        };
        let p_probs: Vec<f64> = self.cells.iter().map(|c| c.p_source).collect();
        let q_probs: Vec<f64> = self.cells.iter().map(|c| c.p_target).collect();
        let d_short = self.short_dims.len();
        let d_long = self.cells[0].x_long.len();

        let mut src = DMatrix::zeros(n, d_short);
        let mut src_long = DMatrix::zeros(n, d_long);
        let mut src_labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = &self.cells[draw(&p_probs, &mut rng)];
            for (jj, &j) in self.short_dims.iter().enumerate() {
                src[(i, jj)] = c.x_long[j];
            }
            for j in 0..d_long {
                src_long[(i, j)] = c.x_long[j];
            }
            src_labels.push(self.label_of(c.y));
        }
        let mut tgt = DMatrix::zeros(m, d_short);
        let mut tgt_long = DMatrix::zeros(m, d_long);
        let mut tgt_labels = Vec::with_capacity(m);
        for i in 0..m {
            let c = &self.cells[draw(&q_probs, &mut rng)];
            for (jj, &j) in self.short_dims.iter().enumerate() {
                tgt[(i, jj)] = c.x_long[j];
            }
            for j in 0..d_long {
                tgt_long[(i, j)] = c.x_long[j];
            }
            tgt_labels.push(self.label_of(c.y));
        }
        let ds = ShiftDataset::new(src, src_labels, tgt, Some(tgt_labels))?;
        Ok((ds, HiddenLongFeatures { source: src_long, target: tgt_long }))
    }
}

/// Full-covariate feature matrices. Only world-level tests and sensitivity
/// benchmarking may read these; they stand in for the unobserved covariates.
#[derive(Debug, Clone)]
pub struct HiddenLongFeatures {
    pub source: DMatrix<f64>,
    pub target: DMatrix<f64>,
}

/// Exact population quantities for one decomposition form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormTruth {
    pub l_dr_short: f64,
    /// `l_dr_short - E_Q[loss]`.
    pub ovb: f64,
    pub sigma2: f64,
    pub nu2: f64,
    pub c_y: f64,
    pub c_d: f64,
    pub rho: f64,
    /// `rho * c_y * c_d * sigma * nu`.
    pub bound: f64,
}

/// Per-cell oracle nuisance values, aligned with `world.cells`.
#[derive(Debug, Clone)]
pub struct CellNuisances {
    pub loss: Vec<f64>,
    pub g_long_loss: Vec<f64>,
    pub g_short_loss: Vec<f64>,
    pub g_long_label: Vec<f64>,
    pub g_short_label: Vec<f64>,
    pub w_long: Vec<f64>,
    pub w_short: Vec<f64>,
}

/// Exact enumeration output: the oracle against which sampled estimators
/// are tested.
#[derive(Debug, Clone)]
pub struct WorldTruth {
    pub e_p_loss: f64,
    pub e_q_loss: f64,
    pub general: FormTruth,
    pub glm: FormTruth,
    pub cells: CellNuisances,
    short_lookup: HashMap<Vec<u64>, ShortValues>,
    long_lookup: HashMap<Vec<u64>, LongValues>,
}

#[derive(Debug, Clone, Copy)]
pub struct ShortValues {
    pub g_loss: f64,
    pub g_label: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LongValues {
    pub g_loss: f64,
    pub g_label: f64,
    pub weight: f64,
}

impl WorldTruth {
    /// Oracle short nuisances at a short feature vector from the support.
    pub fn short_at(&self, x_short: &[f64]) -> Option<ShortValues> {
        self.short_lookup.get(&key_of(x_short)).copied()
    }

    /// Oracle long nuisances at a long feature vector from the support.
    pub fn long_at(&self, x_long: &[f64]) -> Option<LongValues> {
        self.long_lookup.get(&key_of(x_long)).copied()
    }
}

/// Enumerates every population quantity of `world` under the evaluation
/// model `eta(x_short)`. Exact up to floating point; serves as the oracle
/// for sampled estimators.
pub fn enumerate_truth(world: &OracleWorld, eta: &dyn Fn(&[f64]) -> f64) -> Result<WorldTruth> {
    world.validate()?;
    let ncells = world.cells.len();

    let losses: Vec<f64> = world
        .cells
        .iter()
        .map(|c| {
            let e = eta(&world.short_view(&c.x_long));
            nll(&world.family, &NaturalParam::Scalar(e), &world.label_of(c.y))
        })
        .collect::<Result<_>>()?;
    let etas: Vec<f64> = world.cells.iter().map(|c| eta(&world.short_view(&c.x_long))).collect();

    // Group cells by long and by short covariate value.
    let mut long_groups: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
    let mut short_groups: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
    for (i, c) in world.cells.iter().enumerate() {
        long_groups.entry(key_of(&c.x_long)).or_default().push(i);
        short_groups.entry(key_of(&world.short_view(&c.x_long))).or_default().push(i);
    }

    let p = |i: usize| world.cells[i].p_source;
    let q = |i: usize| world.cells[i].p_target;
    let cond_mean_p = |idx: &[usize], f: &dyn Fn(usize) -> f64| -> f64 {
        let mass: f64 = idx.iter().map(|&i| p(i)).sum();
        idx.iter().map(|&i| p(i) * f(i)).sum::<f64>() / mass
    };

    let mut g_long_loss = vec![0.0; ncells];
    let mut g_short_loss = vec![0.0; ncells];
    let mut g_long_label = vec![0.0; ncells];
    let mut g_short_label = vec![0.0; ncells];
    let mut w_long = vec![0.0; ncells];
    let mut w_short = vec![0.0; ncells];
    for (_, idx) in &long_groups {
        let gl = cond_mean_p(idx, &|i| losses[i]);
        let gy = cond_mean_p(idx, &|i| world.cells[i].y);
        let mass_p: f64 = idx.iter().map(|&i| p(i)).sum();
        let mass_q: f64 = idx.iter().map(|&i| q(i)).sum();
        for &i in idx {
            g_long_loss[i] = gl;
            g_long_label[i] = gy;
            w_long[i] = mass_q / mass_p;
        }
    }
    for (_, idx) in &short_groups {
        let gs = cond_mean_p(idx, &|i| losses[i]);
        let gy = cond_mean_p(idx, &|i| world.cells[i].y);
        let mass_p: f64 = idx.iter().map(|&i| p(i)).sum();
        let mass_q: f64 = idx.iter().map(|&i| q(i)).sum();
        for &i in idx {
            g_short_loss[i] = gs;
            g_short_label[i] = gy;
            w_short[i] = mass_q / mass_p;
        }
    }

    let e_p = |f: &dyn Fn(usize) -> f64| (0..ncells).map(|i| p(i) * f(i)).sum::<f64>();
    let e_q = |f: &dyn Fn(usize) -> f64| (0..ncells).map(|i| q(i) * f(i)).sum::<f64>();

    let e_p_loss = e_p(&|i| losses[i]);
    let e_q_loss = e_q(&|i| losses[i]);

    let corr_p = |a: &dyn Fn(usize) -> f64, b: &dyn Fn(usize) -> f64| -> f64 {
        let ma = e_p(a);
        let mb = e_p(b);
        let cov = e_p(&|i| (a(i) - ma) * (b(i) - mb));
        let va = e_p(&|i| (a(i) - ma) * (a(i) - ma));
        let vb = e_p(&|i| (b(i) - mb) * (b(i) - mb));
        if va <= 0.0 || vb <= 0.0 {
            0.0
        } else {
            cov / (va * vb).sqrt()
        }
    };

    // General (loss-space) form.
    let general = {
        let l_dr_short =
            e_p(&|i| w_short[i] * (losses[i] - g_short_loss[i])) + e_q(&|i| g_short_loss[i]);
        let sigma2 = e_p(&|i| (losses[i] - g_short_loss[i]).powi(2));
        let nu2 = e_p(&|i| w_short[i] * w_short[i]);
        let cy2 = e_p(&|i| (g_long_loss[i] - g_short_loss[i]).powi(2)) / sigma2;
        let cd2 = (e_p(&|i| w_long[i] * w_long[i]) - nu2) / nu2;
        let rho =
            corr_p(&|i| g_long_loss[i] - g_short_loss[i], &|i| w_long[i] - w_short[i]).abs();
        let c_y = cy2.max(0.0).sqrt();
        let c_d = cd2.max(0.0).sqrt();
        FormTruth {
            l_dr_short,
            ovb: l_dr_short - e_q_loss,
            sigma2,
            nu2,
            c_y,
            c_d,
            rho,
            bound: rho * c_y * c_d * (sigma2 * nu2).sqrt(),
        }
    };

    // GLM (label-space) form; the representer carries the eta factor.
    let glm = {
        let b_of = |i: usize| {
            crate::glm::log_partition(&world.family, &NaturalParam::Scalar(etas[i])).unwrap()
        };
        let l_dr_short = e_q(&|i| b_of(i) - etas[i] * g_short_label[i])
            - e_p(&|i| w_short[i] * etas[i] * (world.cells[i].y - g_short_label[i]));
        let sigma2 = e_p(&|i| (world.cells[i].y - g_short_label[i]).powi(2));
        let a_short = |i: usize| w_short[i] * etas[i];
        let a_long = |i: usize| w_long[i] * etas[i];
        let nu2 = e_p(&|i| a_short(i) * a_short(i));
        let cy2 = e_p(&|i| (g_long_label[i] - g_short_label[i]).powi(2)) / sigma2;
        let cd2 = if nu2 > 0.0 {
            (e_p(&|i| a_long(i) * a_long(i)) - nu2) / nu2
        } else {
            0.0
        };
        let rho = corr_p(&|i| g_long_label[i] - g_short_label[i], &|i| a_long(i) - a_short(i))
            .abs();
        let c_y = cy2.max(0.0).sqrt();
        let c_d = cd2.max(0.0).sqrt();
        FormTruth {
            l_dr_short,
            ovb: l_dr_short - e_q_loss,
            sigma2,
            nu2,
            c_y,
            c_d,
            rho,
            bound: rho * c_y * c_d * (sigma2 * nu2).sqrt(),
        }
    };

    let mut short_lookup = HashMap::new();
    for (k, idx) in &short_groups {
        let i = idx[0];
        short_lookup.insert(
            k.clone(),
            ShortValues { g_loss: g_short_loss[i], g_label: g_short_label[i], weight: w_short[i] },
        );
    }
    let mut long_lookup = HashMap::new();
    for (k, idx) in &long_groups {
        let i = idx[0];
        long_lookup.insert(
            k.clone(),
            LongValues { g_loss: g_long_loss[i], g_label: g_long_label[i], weight: w_long[i] },
        );
    }

    Ok(WorldTruth {
        e_p_loss,
        e_q_loss,
        general,
        glm,
        cells: CellNuisances {
            loss: losses,
            g_long_loss,
            g_short_loss,
            g_long_label,
            g_short_label,
            w_long,
            w_short,
        },
        short_lookup,
        long_lookup,
    })
}

/// Canonical regression fixture: x uniform on {0,1} under both
/// distributions; an unobserved coordinate z in {0,1} with target probability
/// 0.8 versus source 0.5, independent of x; label y = x + z. The standard
/// evaluation model is `eta(x) = x` ([`w1_eta`]).
pub fn oracle_w1() -> OracleWorld {
    let mut cells = Vec::new();
    for x in [0.0, 1.0] {
        for z in [0.0, 1.0] {
            cells.push(OracleCell {
                x_long: vec![x, z],
                y: x + z,
                p_source: 0.5 * 0.5,
                p_target: 0.5 * if z == 1.0 { 0.8 } else { 0.2 },
            });
        }
    }
    OracleWorld { cells, short_dims: vec![0], family: LossFamily::Regression }
}

/// The evaluation model paired with [`oracle_w1`].
pub fn w1_eta(x_short: &[f64]) -> f64 {
    x_short[0]
}

/// W1 with the target equal to the source: the no-shift degenerate world.
pub fn oracle_w1_no_shift() -> OracleWorld {
    let mut w = oracle_w1();
    for c in &mut w.cells {
        c.p_target = c.p_source;
    }
    w
}

/// Binary-label analogue of [`oracle_w1`]: same covariate structure, label
/// Bernoulli with success probability 0.15 + 0.3 x + 0.4 z.
pub fn oracle_w1_binary() -> OracleWorld {
    let mut cells = Vec::new();
    for x in [0.0, 1.0] {
        for z in [0.0, 1.0] {
            let p_pos = 0.15 + 0.3 * x + 0.4 * z;
            let p_xz_src = 0.25;
            let p_xz_tgt = 0.5 * if z == 1.0 { 0.8 } else { 0.2 };
            for (y, py) in [(1.0, p_pos), (0.0, 1.0 - p_pos)] {
                cells.push(OracleCell {
                    x_long: vec![x, z],
                    y,
                    p_source: p_xz_src * py,
                    p_target: p_xz_tgt * py,
                });
            }
        }
    }
    OracleWorld { cells, short_dims: vec![0], family: LossFamily::Binary }
}

/// The evaluation model paired with [`oracle_w1_binary`].
pub fn w1_binary_eta(x_short: &[f64]) -> f64 {
    0.8 * x_short[0] - 0.4
}

/// Gaussian semi-synthetic world: features N(0, I_d) under the source and
/// N(shift, I_d) under the target; label linear in the first `k` features
/// plus Gaussian noise; `omit_mask` hides a subset of the label-relevant
/// features from the short representation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub d: usize,
    pub k: usize,
    pub coefficients: Vec<f64>,
    pub omit_mask: Vec<usize>,
    pub shift: Vec<f64>,
    pub noise_sd: f64,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k > self.d || self.k == 0 {
            return Err(Error::invalid(format!("need 1 <= k <= d, got k={}, d={}", self.k, self.d)));
        }
        if self.coefficients.len() != self.k {
            return Err(Error::shape(format!(
                "{} coefficients for k={}",
                self.coefficients.len(),
                self.k
            )));
        }
        if self.shift.len() != self.d {
            return Err(Error::shape(format!("{} shift entries for d={}", self.shift.len(), self.d)));
        }
        if self.noise_sd < 0.0 {
            return Err(Error::invalid("noise_sd must be nonnegative".to_string()));
        }
        let mut seen = vec![false; self.k];
        for &j in &self.omit_mask {
            if j >= self.k {
                return Err(Error::invalid(format!(
                    "omit_mask entry {j} is not a label-relevant feature (k={})",
                    self.k
                )));
            }
            if seen[j] {
                return Err(Error::invalid(format!("omit_mask entry {j} repeated")));
            }
            seen[j] = true;
        }
        if self.omit_mask.len() >= self.d {
            return Err(Error::invalid("omission would leave no observed features".to_string()));
        }
        Ok(())
    }

    /// Indices of the observed (short) features in long-feature order.
    pub fn kept_dims(&self) -> Vec<usize> {
        (0..self.d).filter(|j| !self.omit_mask.contains(j)).collect()
    }

    /// Randomized instance following the omission protocol: coefficients
    /// and per-feature shifts drawn from centered normals, and a uniform
    /// random subset (size uniform on 1..k-1) of label-relevant features
    /// omitted.
    #[allow(clippy::too_many_arguments)]
    pub fn draw(
        d: usize,
        k: usize,
        coef_sd: f64,
        relevant_shift_sd: f64,
        irrelevant_shift_sd: f64,
        noise_sd: f64,
        n: usize,
        m: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = derive_rng(seed, 0x5717);
        let normal = Normal::new(0.0, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
        let coefficients: Vec<f64> = (0..k).map(|_| coef_sd * normal.sample(&mut rng)).collect();
        let mut shift = vec![0.0; d];
        for (j, s) in shift.iter_mut().enumerate() {
            let sd = if j < k { relevant_shift_sd } else { irrelevant_shift_sd };
            *s = sd * normal.sample(&mut rng);
        }
        let n_omit = if k > 2 { rng.gen_range(1..k) } else { 1 };
        let mut pool: Vec<usize> = (0..k).collect();
        let mut omit_mask = Vec::with_capacity(n_omit);
        for _ in 0..n_omit {
            let i = rng.gen_range(0..pool.len());
            omit_mask.push(pool.swap_remove(i));
        }
        omit_mask.sort_unstable();
        let cfg = SynthConfig { d, k, coefficients, omit_mask, shift, noise_sd, n, m, seed };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A drawn Gaussian world: the short-feature dataset the pipelines see plus
/// the hidden long features for benchmark tests.
#[derive(Debug, Clone)]
pub struct GaussianSample {
    pub dataset: ShiftDataset,
    pub hidden: HiddenLongFeatures,
    pub kept_dims: Vec<usize>,
}

/// Draws a Gaussian world per the config. Deterministic given
/// `config.seed`; both source and target labels are generated (target
/// labels for evaluation only).
pub fn sample_gaussian(config: &SynthConfig) -> Result<GaussianSample> {
    config.validate()?;
    if config.n < 2 || config.m < 2 {
        return Err(Error::invalid("need n >= 2 and m >= 2".to_string()));
    }
    let mut rng = derive_rng(config.seed, 0x6A55);
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let kept = config.kept_dims();

    let gen_side = |rows: usize,
                        shifted: bool,
                        rng: &mut rand_chacha::ChaCha8Rng|
     -> (DMatrix<f64>, DMatrix<f64>, Vec<Label>) {
        let mut long = DMatrix::zeros(rows, config.d);
        for i in 0..rows {
            for j in 0..config.d {
                long[(i, j)] =
                    normal.sample(rng) + if shifted { config.shift[j] } else { 0.0 };
            }
        }
        let mut labels = Vec::with_capacity(rows);
        for i in 0..rows {
            let signal: f64 =
                (0..config.k).map(|j| config.coefficients[j] * long[(i, j)]).sum();
            labels.push(Label::Real(signal + config.noise_sd * normal.sample(rng)));
        }
        let short = DMatrix::from_fn(rows, kept.len(), |i, jj| long[(i, kept[jj])]);
        (long, short, labels)
    };

    let (long_p, short_p, labels_p) = gen_side(config.n, false, &mut rng);
    let (long_q, short_q, labels_q) = gen_side(config.m, true, &mut rng);
    let dataset = ShiftDataset::new(short_p, labels_p, short_q, Some(labels_q))?;
    Ok(GaussianSample {
        dataset,
        hidden: HiddenLongFeatures { source: long_p, target: long_q },
        kept_dims: kept,
    })
}

/// Closed-form long density ratio dQ/dP at a long feature vector:
/// `exp(shift . x - |shift|^2 / 2)` for an isotropic Gaussian mean shift.
pub fn true_density_ratio(config: &SynthConfig, x_long: &[f64]) -> Result<f64> {
    if x_long.len() != config.d {
        return Err(Error::shape(format!("expected {} coordinates, got {}", config.d, x_long.len())));
    }
    let dot: f64 = config.shift.iter().zip(x_long).map(|(m, x)| m * x).sum();
    let norm2: f64 = config.shift.iter().map(|m| m * m).sum();
    Ok((dot - 0.5 * norm2).exp())
}

/// Closed-form short density ratio over the observed coordinates only.
pub fn true_short_density_ratio(config: &SynthConfig, x_short: &[f64]) -> Result<f64> {
    let kept = config.kept_dims();
    if x_short.len() != kept.len() {
        return Err(Error::shape(format!(
            "expected {} observed coordinates, got {}",
            kept.len(),
            x_short.len()
        )));
    }
    let dot: f64 = kept.iter().zip(x_short).map(|(&j, x)| config.shift[j] * x).sum();
    let norm2: f64 = kept.iter().map(|&j| config.shift[j] * config.shift[j]).sum();
    Ok((dot - 0.5 * norm2).exp())
}

/// Closed-form label-space sensitivity parameters of the Gaussian world.
///
/// With omitted coefficient block `c_O`, omitted shift `mu_O`, observed
/// shift `mu_S`, and label noise `sd`:
///
/// ```text
/// sigma^2 = sd^2 + |c_O|^2                      (short-model residual)
/// C_Y     = |c_O| / sigma
/// C_D     = sqrt(exp(|mu_O|^2) - 1)
/// rho     = |c_O . mu_O| / (|c_O| exp(|mu_S|^2/2) sqrt(exp(|mu_O|^2) - 1))
/// s       = rho C_Y C_D = |c_O . mu_O| / (sigma exp(|mu_S|^2/2))
/// ```
///
/// Degenerate blocks (no omitted shift or no omitted coefficient mass) give
/// rho = 0 and s = 0.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GaussianSensitivity {
    pub sigma2: f64,
    pub c_y: f64,
    pub c_d: f64,
    pub rho: f64,
    pub s: f64,
}

pub fn true_sensitivity_product(config: &SynthConfig) -> Result<GaussianSensitivity> {
    config.validate()?;
    let kept = config.kept_dims();
    let c_o_sq: f64 = config.omit_mask.iter().map(|&j| config.coefficients[j].powi(2)).sum();
    let mu_o_sq: f64 = config.omit_mask.iter().map(|&j| config.shift[j].powi(2)).sum();
    let mu_s_sq: f64 = kept.iter().map(|&j| config.shift[j].powi(2)).sum();
    let c_dot_mu: f64 =
        config.omit_mask.iter().map(|&j| config.coefficients[j] * config.shift[j]).sum();

    let sigma2 = config.noise_sd.powi(2) + c_o_sq;
    let c_y = if sigma2 > 0.0 { (c_o_sq / sigma2).sqrt() } else { 0.0 };
    let c_d = (mu_o_sq.exp() - 1.0).max(0.0).sqrt();
    let denom = c_o_sq.sqrt() * (0.5 * mu_s_sq).exp() * c_d;
    let rho = if denom > 0.0 { (c_dot_mu.abs() / denom).min(1.0) } else { 0.0 };
    let s = rho * c_y * c_d;
    Ok(GaussianSensitivity { sigma2, c_y, c_d, rho, s })
}

/// Convenience: mean loss of a scalar evaluation model on labeled rows.
pub fn mean_loss_scalar(
    family: &LossFamily,
    etas: &[f64],
    labels: &[Label],
) -> Result<f64> {
    if etas.len() != labels.len() {
        return Err(Error::shape("eta/label length mismatch".to_string()));
    }
    let losses: Vec<f64> = etas
        .iter()
        .zip(labels)
        .map(|(e, y)| nll(family, &NaturalParam::Scalar(*e), y))
        .collect::<Result<_>>()?;
    Ok(mean(&losses))
}
