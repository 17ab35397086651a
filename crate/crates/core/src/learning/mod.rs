//! Binary logistic regression on secret-shared data, with plaintext and
//! finite-field baselines.
//!
//! All trainers start from `w = 0` and run a fixed number of full-batch
//! gradient steps `w <- w - (beta/m) X^T (g(Xw) - l)`. The shared trainer
//! uses `g(x) = 1/2 + x/4`, which turns the gradient into
//! `(1/4) X^T X w + X^T (1/2 - l)`; only the degree-3 product `X^T X w`
//! is computed by the workers.

mod analog;
mod compare;
mod fixed_point;
mod mnist;
mod report;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::runtime::gram_product;

pub use analog::{train_analog, AnalogConfig, AnalogRun};
pub use compare::{compare, CompareConfig, CompareReport, CurvePoint, TrainerOps, CURVE_CSV_HEADER};
pub use fixed_point::{
    certified_overflow_threshold, is_prime, train_fixed_point, Field, FixedPointConfig, FixedPointRun, MERSENNE_61,
};
pub use mnist::{load_mnist_idx, parse_idx_images, parse_idx_labels, read_maybe_gz, RawDataset, IMAGES_MAGIC, LABELS_MAGIC};
pub use report::{history_csv, RunReport, HISTORY_CSV_HEADER};

/// Which digits became label 1 and label 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap {
    pub positive: u8,
    pub negative: u8,
}

/// Feature units: raw pixel values in `[0, 255]`, or divided by 255.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureScale {
    #[default]
    Raw,
    Unit,
}

impl FeatureScale {
    pub fn divisor(self) -> f64 {
        match self {
            FeatureScale::Raw => 1.0,
            FeatureScale::Unit => 255.0,
        }
    }
}

/// `m x d` features (row-major) with labels in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub labels: Vec<f64>,
    pub m: usize,
    pub d: usize,
    pub class_map: ClassMap,
    pub scale: FeatureScale,
}

impl Dataset {
    pub fn new(x: Vec<f64>, labels: Vec<f64>, d: usize, class_map: ClassMap) -> Result<Self> {
        let m = labels.len();
        if m == 0 || d == 0 {
            return Err(Error::arg("dataset needs at least one sample and one feature"));
        }
        if x.len() != m * d {
            return Err(Error::arg(format!("{} feature values for {m} samples of {d} features", x.len())));
        }
        if labels.iter().any(|&l| l != 0.0 && l != 1.0) {
            return Err(Error::arg("labels must be 0 or 1"));
        }
        Ok(Dataset {
            x,
            labels,
            m,
            d,
            class_map,
            scale: FeatureScale::Raw,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn max_abs(&self) -> f64 {
        self.x.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1.0).count()
    }

    /// Converts from raw units to `scale`. Only valid on raw-scale data.
    pub fn with_scale(mut self, scale: FeatureScale) -> Result<Self> {
        if self.scale != FeatureScale::Raw {
            return Err(Error::arg("dataset has already been rescaled"));
        }
        let div = scale.divisor();
        if div != 1.0 {
            self.x.iter_mut().for_each(|v| *v /= div);
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            x,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            m: indices.len(),
            d: self.d,
            class_map: self.class_map,
            scale: self.scale,
        }
    }

    /// `per_class` samples of each label, drawn by a seeded shuffle. Positives
    /// come first in the result.
    pub fn balanced_subsample(&self, per_class: usize, seed: u64) -> Result<Dataset> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut pick = |label: f64| -> Result<Vec<usize>> {
            let mut idx: Vec<usize> = (0..self.m).filter(|&i| self.labels[i] == label).collect();
            if idx.len() < per_class {
                return Err(Error::arg(format!(
                    "asked for {per_class} samples of label {label}, only {} available",
                    idx.len()
                )));
            }
            idx.shuffle(&mut rng);
            idx.truncate(per_class);
            Ok(idx)
        };
        let mut idx = pick(1.0)?;
        idx.extend(pick(0.0)?);
        if idx.is_empty() {
            return Err(Error::arg("subsample would be empty"));
        }
        Ok(self.subset(&idx))
    }

    /// `X w`.
    pub fn predict_raw(&self, w: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|i| self.row(i).iter().zip(w).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `X^T v`.
    pub fn transpose_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for (i, &vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.x.iter().map(|&v| Complex64::new(v, 0.0)).collect()
    }
}

/// Keeps digits `class_a` (label 1) and `class_b` (label 0), in file order, raw units.
pub fn filter_binary(raw: &RawDataset, class_a: u8, class_b: u8) -> Result<Dataset> {
    if class_a == class_b {
        return Err(Error::arg("the two classes must differ"));
    }
    let d = raw.features();
    let mut x = Vec::new();
    let mut labels = Vec::new();
    for k in 0..raw.count {
        let l = raw.labels[k];
        if l == class_a || l == class_b {
            x.extend(raw.image(k).iter().map(|&p| p as f64));
            labels.push(if l == class_a { 1.0 } else { 0.0 });
        }
    }
    for (digit, label) in [(class_a, 1.0), (class_b, 0.0)] {
        if !labels.contains(&label) {
            return Err(Error::arg(format!("digit {digit} does not occur in the data")));
        }
    }
    Dataset::new(
        x,
        labels,
        d,
        ClassMap {
            positive: class_a,
            negative: class_b,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmoidMode {
    #[default]
    Exact,
    /// `g(x) = 1/2 + x/4`.
    Degree1,
}

impl SigmoidMode {
    pub fn eval(self, z: f64) -> f64 {
        match self {
            SigmoidMode::Exact => sigmoid(z),
            SigmoidMode::Degree1 => 0.5 + z / 4.0,
        }
    }
}

/// Logistic function without overflow for large `|z|`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean cross-entropy of the exact logistic model.
pub fn logistic_loss(data: &Dataset, w: &[f64]) -> f64 {
    let z = data.predict_raw(w);
    z.iter()
        .zip(&data.labels)
        .map(|(&z, &l)| softplus(z) - l * z)
        .sum::<f64>()
        / data.m as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub beta: f64,
    pub k: usize,
    pub sigmoid: SigmoidMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            beta: 1e-6,
            k: 25,
            sigmoid: SigmoidMode::Exact,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param(format!("learning rate {} must be positive and finite", self.beta)));
        }
        Ok(())
    }
}

/// Diagnostics after one update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub train_loss: f64,
    pub test_accuracy: Option<f64>,
    /// Largest imaginary part of the decoded product (0 for plaintext trainers).
    pub residue_max: f64,
    /// Bound on `max_j |u_j - (X^T X w)_j|` for the shared trainer.
    pub u_error_bound: Option<f64>,
    /// Observed `max_j |u_j - (X^T X w)_j|`, when tracked.
    pub u_drift: Option<f64>,
    /// The residue exceeded the configured fraction of `|u|`.
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub w: Vec<f64>,
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
    /// `w` after every iteration.
    pub snapshots: Vec<Vec<f64>>,
}

impl ModelState {
    pub fn zeros(d: usize) -> Self {
        ModelState {
            w: vec![0.0; d],
            iteration: 0,
            history: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, record: IterationRecord) {
        self.iteration += 1;
        self.snapshots.push(self.w.clone());
        self.history.push(record);
    }
}

/// Fraction of `test` classified correctly; `x.w = 0` predicts label 0.
pub fn evaluate(w: &[f64], test: &Dataset) -> Result<f64> {
    if w.len() != test.d {
        return Err(Error::arg(format!("model has {} weights, data has {} features", w.len(), test.d)));
    }
    let correct = test
        .predict_raw(w)
        .iter()
        .zip(&test.labels)
        .filter(|(&z, &l)| (z > 0.0) == (l == 1.0))
        .count();
    Ok(correct as f64 / test.m as f64)
}

fn plain_record(data: &Dataset, w: &[f64], test: Option<&Dataset>, iteration: usize) -> Result<IterationRecord> {
    Ok(IterationRecord {
        iteration,
        train_loss: logistic_loss(data, w),
        test_accuracy: test.map(|t| evaluate(w, t)).transpose()?,
        residue_max: 0.0,
        u_error_bound: None,
        u_drift: None,
        degraded: false,
    })
}

/// Plaintext gradient descent `w <- w - (beta/m) X^T (g(Xw) - l)`.
pub fn train_centralized(data: &Dataset, cfg: &TrainingConfig, test: Option<&Dataset>) -> Result<ModelState> {
    cfg.validate()?;
    let mut state = ModelState::zeros(data.d);
    let step = cfg.beta / data.m as f64;
    for j in 1..=cfg.k {
        let residual: Vec<f64> = data
            .predict_raw(&state.w)
            .iter()
            .zip(&data.labels)
            .map(|(&z, &l)| cfg.sigmoid.eval(z) - l)
            .collect();
        let grad = data.transpose_mul(&residual);
        for (w, g) in state.w.iter_mut().zip(&grad) {
            *w -= step * g;
        }
        let rec = plain_record(data, &state.w, test, j)?;
        state.push(rec);
    }
    Ok(state)
}

/// `X^T (1 - 2l)`, the label term of the expanded update.
pub fn label_term(data: &Dataset) -> Vec<f64> {
    let v: Vec<f64> = data.labels.iter().map(|&l| 1.0 - 2.0 * l).collect();
    data.transpose_mul(&v)
}

/// The expanded update `w - (beta/2m) [u/2 + X^T (1 - 2l)]` for a given `u`.
pub fn expanded_update(w: &mut [f64], u: &[f64], label_term: &[f64], beta: f64, m: usize) {
    let step = beta / (2.0 * m as f64);
    for ((w, u), c) in w.iter_mut().zip(u).zip(label_term) {
        *w -= step * (0.5 * u + c);
    }
}

/// The shared trainer's arithmetic in plaintext: the expanded update with
/// `u = X^T X w` computed by the same product routine the workers use.
/// With masking disabled the shared trainer reproduces this bit for bit.
pub fn train_expanded_plaintext(data: &Dataset, cfg: &TrainingConfig, test: Option<&Dataset>) -> Result<ModelState> {
    cfg.validate()?;
    let x = data.to_complex();
    let lt = label_term(data);
    let mut state = ModelState::zeros(data.d);
    for j in 1..=cfg.k {
        let wc: Vec<Complex64> = state.w.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let u: Vec<f64> = gram_product(&x, data.m, data.d, &wc, Execution::default())
            .iter()
            .map(|z| z.re)
            .collect();
        expanded_update(&mut state.w, &u, &lt, cfg.beta, data.m);
        let rec = plain_record(data, &state.w, test, j)?;
        state.push(rec);
    }
    Ok(state)
}

/// Relative L2 distance `|a - b| / |b|`.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

#[cfg(test)]
pub(crate) fn toy(m: usize, d: usize, seed: u64) -> Dataset {
    use rand::Rng;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let labels: Vec<f64> = (0..m).map(|i| (i % 2) as f64).collect();
    let x: Vec<f64> = (0..m * d)
        .map(|k| {
            let l = labels[k / d];
            rng.gen_range(0.0..1.0) + if k % d == 0 { l } else { 0.0 }
        })
        .collect();
    Dataset::new(x, labels, d, ClassMap { positive: 3, negative: 7 }).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn identity_data() -> Dataset {
        Dataset::new(vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 0.0], 2, ClassMap { positive: 3, negative: 7 }).unwrap()
    }

    #[test]
    fn one_step_on_identity() {
        for sigmoid in [SigmoidMode::Degree1, SigmoidMode::Exact] {
            let cfg = TrainingConfig { beta: 1.0, k: 1, sigmoid };
            let s = train_centralized(&identity_data(), &cfg, None).unwrap();
            assert_eq!(s.w, vec![0.25, -0.25]);
        }
        let s = train_centralized(&identity_data(), &TrainingConfig { beta: 1.0, k: 0, sigmoid: SigmoidMode::Exact }, None).unwrap();
        assert_eq!(s.w, vec![0.0, 0.0]);
        assert!(s.history.is_empty());
    }

    #[test]
    fn expanded_form_on_identity() {
        let cfg = TrainingConfig { beta: 1.0, k: 1, sigmoid: SigmoidMode::Degree1 };
        assert_eq!(train_expanded_plaintext(&identity_data(), &cfg, None).unwrap().w, vec![0.25, -0.25]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
        assert!(softplus(1000.0).is_finite() && (softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn evaluate_ties_and_separable() {
        let data = identity_data();
        assert_eq!(evaluate(&[0.0, 0.0], &data).unwrap(), 0.5);
        assert_eq!(evaluate(&[1.0, -1.0], &data).unwrap(), 1.0);
        assert!(evaluate(&[1.0], &data).is_err());
    }

    #[test]
    fn subsample_is_balanced_and_seeded() {
        let data = toy(40, 3, 1);
        let s = data.balanced_subsample(5, 9).unwrap();
        assert_eq!((s.m, s.positives()), (10, 5));
        assert_eq!(s, data.balanced_subsample(5, 9).unwrap());
        assert_ne!(s, data.balanced_subsample(5, 10).unwrap());
        assert!(data.balanced_subsample(21, 0).is_err());
    }

    #[test]
    fn filter_keeps_two_digits() {
        let raw = RawDataset {
            count: 4,
            rows: 1,
            cols: 2,
            pixels: vec![1, 2, 3, 4, 5, 6, 7, 8],
            labels: vec![3, 1, 7, 3],
        };
        let d = filter_binary(&raw, 3, 7).unwrap();
        assert_eq!(d.m, 3);
        assert_eq!(d.labels, vec![1.0, 0.0, 1.0]);
        assert_eq!(d.row(1), &[5.0, 6.0]);
        assert!(filter_binary(&raw, 3, 9).is_err());
        let unit = d.with_scale(FeatureScale::Unit).unwrap();
        assert_eq!(unit.row(0), &[1.0 / 255.0, 2.0 / 255.0]);
    }

    proptest! {
        #[test]
        fn expanded_update_equals_degree1_gradient(seed in any::<u64>(), m in 1usize..12, d in 1usize..6, beta in 0.01f64..2.0) {
            let data = toy(m, d, seed);
            let w: Vec<f64> = (0..d).map(|k| ((seed >> k) % 7) as f64 / 7.0 - 0.4).collect();
            // direct: w - (beta/m) X^T (1/2 + Xw/4 - l)
            let resid: Vec<f64> = data.predict_raw(&w).iter().zip(&data.labels).map(|(z, l)| 0.5 + z / 4.0 - l).collect();
            let g = data.transpose_mul(&resid);
            let direct: Vec<f64> = w.iter().zip(&g).map(|(w, g)| w - beta / m as f64 * g).collect();
            let u = data.transpose_mul(&data.predict_raw(&w));
            let mut expanded = w.clone();
            expanded_update(&mut expanded, &u, &label_term(&data), beta, m);
            for (a, b) in expanded.iter().zip(&direct) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}
