//! Rank-K factorized quadratic regression of RSRP measurements.
//!
//! The model predicts the noiseless power as `sum_k |v^H w_k|^2`, a
//! single-layer network of `K` two-neuron subnetworks with squared-norm
//! activations and tied real weights. Storing the complex weights `w_k`
//! directly represents the tied block structure exactly, and the trained
//! weights give the estimate `R = sum_k w_k w_k^H`.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{frobenius_sq, CMatrix, ZERO};
use crate::measurement::MeasurementDataset;
use crate::rng::complex_gaussian;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorModel {
    weights: Vec<Vec<Complex64>>,
}

impl EstimatorModel {
    pub fn new(weights: Vec<Vec<Complex64>>) -> Result<Self> {
        let Some(first) = weights.first() else {
            return invalid("model needs at least one subnetwork");
        };
        let dim = first.len();
        if dim == 0 || weights.iter().any(|w| w.len() != dim) {
            return invalid("all weight vectors must share a non-zero length");
        }
        if weights.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("weights must be finite");
        }
        Ok(Self { weights })
    }

    /// i.i.d. `CN(0, scale^2)` weights.
    pub fn random<R: Rng + ?Sized>(k_rank: usize, dim: usize, scale: f64, rng: &mut R) -> Result<Self> {
        if k_rank == 0 {
            return invalid("k_rank must be at least 1");
        }
        let weights = (0..k_rank).map(|_| (0..dim).map(|_| complex_gaussian(rng, scale * scale)).collect()).collect();
        Self::new(weights)
    }

    pub fn k_rank(&self) -> usize {
        self.weights.len()
    }

    /// Length of each weight vector, `N + 1`.
    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn weights(&self) -> &[Vec<Complex64>] {
        &self.weights
    }

    /// `sum_k |v^H w_k|^2`.
    pub fn forward_power(&self, v: &[Complex64]) -> Result<f64> {
        if v.len() != self.dim() {
            return invalid(format!("reflection has length {}, model expects {}", v.len(), self.dim()));
        }
        Ok(self.forward_unchecked(v))
    }

    fn forward_unchecked(&self, v: &[Complex64]) -> f64 {
        self.weights.iter().map(|w| inner(v, w).norm_sqr()).sum()
    }

    /// `R = sum_k w_k w_k^H`.
    pub fn reconstruct(&self) -> CMatrix {
        let dim = self.dim();
        let mut r = CMatrix::zeros(dim, dim);
        for w in &self.weights {
            for j in 0..dim {
                let wj = w[j].conj();
                for i in 0..dim {
                    r[(i, j)] += w[i] * wj;
                }
            }
        }
        r
    }

    fn scale(&mut self, factor: f64) {
        for z in self.weights.iter_mut().flatten() {
            *z *= factor;
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<ModelJson>(text)?.try_into()
    }
}

/// `v^H w`.
fn inner(v: &[Complex64], w: &[Complex64]) -> Complex64 {
    v.iter().zip(w).fold(ZERO, |acc, (a, b)| acc + a.conj() * b)
}

/// On-disk model: each weight vector as interleaved `[re, im, re, im, ...]`.
#[derive(Debug, Serialize, Deserialize)]
struct ModelJson {
    k_rank: usize,
    weights: Vec<Vec<f64>>,
}

impl From<&EstimatorModel> for ModelJson {
    fn from(m: &EstimatorModel) -> Self {
        Self {
            k_rank: m.k_rank(),
            weights: m.weights.iter().map(|w| w.iter().flat_map(|z| [z.re, z.im]).collect()).collect(),
        }
    }
}

impl TryFrom<ModelJson> for EstimatorModel {
    type Error = Error;

    fn try_from(j: ModelJson) -> Result<Self> {
        if j.weights.len() != j.k_rank {
            return invalid(format!("k_rank {} but {} weight vectors", j.k_rank, j.weights.len()));
        }
        if j.weights.iter().any(|w| w.len() % 2 != 0) {
            return invalid("interleaved weight arrays must have even length");
        }
        let weights =
            j.weights.iter().map(|w| w.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()).collect();
        Self::new(weights)
    }
}

/// One regression sample: extended reflection and noise-free target power.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub v: Vec<Complex64>,
    pub target: f64,
}

/// Mean squared error over `batch` and its gradient with respect to the
/// real and imaginary parts of each `w_k`, packed as complex numbers:
/// `-(4/B) sum_l r_l v_l (v_l^H w_k)` with residual `r_l = t_l - p(v_l)`.
pub fn loss_and_gradient(model: &EstimatorModel, batch: &[Sample]) -> Result<(f64, Vec<Vec<Complex64>>)> {
    if batch.is_empty() {
        return invalid("empty batch");
    }
    if let Some(s) = batch.iter().find(|s| s.v.len() != model.dim()) {
        return invalid(format!("sample has length {}, model expects {}", s.v.len(), model.dim()));
    }
    let mut grads = vec![vec![ZERO; model.dim()]; model.k_rank()];
    let loss = accumulate_gradient(model, batch, &mut grads);
    Ok((loss, grads))
}

fn accumulate_gradient(model: &EstimatorModel, batch: &[Sample], grads: &mut [Vec<Complex64>]) -> f64 {
    for g in grads.iter_mut() {
        g.fill(ZERO);
    }
    let mut projections = vec![ZERO; model.k_rank()];
    let mut loss = 0.0;
    let coef = -4.0 / batch.len() as f64;
    for s in batch {
        let mut predicted = 0.0;
        for (a, w) in projections.iter_mut().zip(&model.weights) {
            *a = inner(&s.v, w);
            predicted += a.norm_sqr();
        }
        let residual = s.target - predicted;
        loss += residual * residual;
        for (g, a) in grads.iter_mut().zip(&projections) {
            let c = *a * (coef * residual);
            for (gi, vi) in g.iter_mut().zip(&s.v) {
                *gi += vi * c;
            }
        }
    }
    loss / batch.len() as f64
}

/// Mean squared error only.
pub fn mse(model: &EstimatorModel, samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| (s.target - model.forward_unchecked(&s.v)).powi(2)).sum::<f64>() / samples.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UpdateRule {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for UpdateRule {
    fn default() -> Self {
        UpdateRule::Sgd { momentum: 0.9 }
    }
}

impl UpdateRule {
    /// Adam with the usual moment decay rates.
    pub fn adam() -> Self {
        UpdateRule::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-12 }
    }
}

/// How the noise power subtracted from each RSRP is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseFloor {
    /// Use the dataset's recorded noise power.
    Known,
    /// `(1 - margin) * min_l rsrp_l`.
    FromMinimum { margin: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingHyper {
    pub step_size: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub init_scale: f64,
    pub split_ratio: f64,
    pub early_stop_patience: usize,
    /// Relative validation improvement that resets the patience counter.
    pub convergence_tol: f64,
    /// Step size multiplier applied each time validation stalls for a
    /// quarter of the patience window.
    pub step_decay: f64,
    pub update: UpdateRule,
    pub noise_floor: NoiseFloor,
}

impl Default for TrainingHyper {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            epochs: 2000,
            batch_size: 64,
            init_scale: 1.0,
            split_ratio: 0.9,
            early_stop_patience: 80,
            convergence_tol: 1e-6,
            step_decay: 0.5,
            update: UpdateRule::default(),
            noise_floor: NoiseFloor::Known,
        }
    }
}

impl TrainingHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return invalid("step_size must be positive");
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return invalid("split_ratio must be in (0, 1)");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return invalid("epochs and batch_size must be at least 1");
        }
        if !(self.init_scale > 0.0) {
            return invalid("init_scale must be positive");
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return invalid("step_decay must be in (0, 1]");
        }
        if let NoiseFloor::FromMinimum { margin } = self.noise_floor {
            if !(0.0..1.0).contains(&margin) {
                return invalid("noise floor margin must be in [0, 1)");
            }
        }
        Ok(())
    }
}

/// Model plus per-epoch loss traces (normalized target scale).
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub model: EstimatorModel,
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// Noise power that was subtracted from the measurements.
    pub noise_floor: f64,
}

struct Stepper {
    rule: UpdateRule,
    first: Vec<Vec<Complex64>>,
    second: Vec<Vec<Complex64>>,
    t: i32,
}

impl Stepper {
    fn new(rule: UpdateRule, k: usize, dim: usize) -> Self {
        Self { rule, first: vec![vec![ZERO; dim]; k], second: vec![vec![ZERO; dim]; k], t: 0 }
    }

    fn apply(&mut self, weights: &mut [Vec<Complex64>], grads: &[Vec<Complex64>], step: f64) {
        self.t += 1;
        match self.rule {
            UpdateRule::Sgd { momentum } => {
                for ((w, g), m) in weights.iter_mut().zip(grads).zip(&mut self.first) {
                    for ((wi, gi), mi) in w.iter_mut().zip(g).zip(m.iter_mut()) {
                        *mi = *mi * momentum - gi * step;
                        *wi += *mi;
                    }
                }
            }
            UpdateRule::Adam { beta1, beta2, epsilon } => {
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for (((w, g), m), s) in weights.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
                    for (((wi, gi), mi), si) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(s.iter_mut()) {
                        *mi = *mi * beta1 + gi * (1.0 - beta1);
                        si.re = si.re * beta2 + gi.re * gi.re * (1.0 - beta2);
                        si.im = si.im * beta2 + gi.im * gi.im * (1.0 - beta2);
                        wi.re -= step * (mi.re / c1) / ((si.re / c2).sqrt() + epsilon);
                        wi.im -= step * (mi.im / c1) / ((si.im / c2).sqrt() + epsilon);
                    }
                }
            }
        }
    }
}

fn to_samples(entries: &[crate::measurement::Measurement], noise: f64, scale: f64) -> Vec<Sample> {
    entries
        .iter()
        .map(|e| Sample { v: e.reflection.extended().to_vec(), target: (e.rsrp - noise).max(0.0) * scale })
        .collect()
}

/// Fits a rank-`k_rank` model by mini-batch SGD on the training split and
/// returns the iterate with the lowest validation loss.
pub fn train<R: Rng + ?Sized>(
    dataset: &MeasurementDataset,
    k_rank: usize,
    hyper: &TrainingHyper,
    rng: &mut R,
) -> Result<EstimatorModel> {
    train_with_history(dataset, k_rank, hyper, rng).map(|run| run.model)
}

pub fn train_with_history<R: Rng + ?Sized>(
    dataset: &MeasurementDataset,
    k_rank: usize,
    hyper: &TrainingHyper,
    rng: &mut R,
) -> Result<TrainingRun> {
    if k_rank == 0 {
        return invalid("k_rank must be at least 1");
    }
    hyper.validate()?;
    if dataset.len() < 2 {
        return invalid("a dataset needs at least two measurements");
    }

    let noise_floor = match hyper.noise_floor {
        NoiseFloor::Known => dataset.noise_power,
        NoiseFloor::FromMinimum { margin } => {
            let min = dataset.entries.iter().map(|e| e.rsrp).fold(f64::INFINITY, f64::min);
            (1.0 - margin) * min
        }
    };
    let peak = dataset.entries.iter().map(|e| (e.rsrp - noise_floor).max(0.0)).fold(0.0, f64::max);
    if !(peak > 0.0) {
        return invalid("all measurements are at or below the noise floor");
    }
    let scale = 1.0 / peak;
    let mut train_set = to_samples(dataset.train(), noise_floor, scale);
    let validation_set = to_samples(dataset.validation(), noise_floor, scale);

    let dim = dataset.n_elements() + 1;
    let mean_target = train_set.iter().map(|s| s.target).sum::<f64>() / train_set.len() as f64;
    let init = hyper.init_scale * (mean_target.max(f64::MIN_POSITIVE) / (k_rank * dim) as f64).sqrt();
    let mut model = EstimatorModel::random(k_rank, dim, init, rng)?;

    let mut stepper = Stepper::new(hyper.update, k_rank, dim);
    let mut grads = vec![vec![ZERO; dim]; k_rank];
    let mut step = hyper.step_size;
    let mut best = model.clone();
    let mut best_val = mse(&model, &validation_set);
    let mut best_epoch = 0;
    let mut reference_val = best_val;
    let mut stalled = 0;
    let mut train_loss = Vec::with_capacity(hyper.epochs);
    let mut validation_loss = Vec::with_capacity(hyper.epochs);

    for epoch in 1..=hyper.epochs {
        train_set.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in train_set.chunks(hyper.batch_size) {
            let loss = accumulate_gradient(&model, batch, &mut grads);
            epoch_loss += loss * batch.len() as f64;
            stepper.apply(&mut model.weights, &grads, step);
        }
        epoch_loss /= train_set.len() as f64;
        let val = mse(&model, &validation_set);
        if !epoch_loss.is_finite() || !val.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        train_loss.push(epoch_loss);
        validation_loss.push(val);

        if val < best_val {
            best_val = val;
            best = model.clone();
            best_epoch = epoch;
        }
        if val < reference_val * (1.0 - hyper.convergence_tol) {
            reference_val = val;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= hyper.early_stop_patience {
                break;
            }
            if hyper.early_stop_patience >= 4 && stalled % (hyper.early_stop_patience / 4) == 0 {
                step *= hyper.step_decay;
            }
        }
    }

    best.scale(peak.sqrt());
    Ok(TrainingRun { model: best, best_epoch, train_loss, validation_loss, noise_floor })
}

/// `||estimate - truth||_F^2 / ||truth||_F^2`.
pub fn nmse(estimate: &CMatrix, truth: &CMatrix) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return invalid(format!("shape mismatch {:?} vs {:?}", estimate.shape(), truth.shape()));
    }
    let denom = frobenius_sq(truth);
    if denom == 0.0 {
        return invalid("reference matrix has zero norm");
    }
    Ok(frobenius_sq(&(estimate - truth)) / denom)
}

pub fn reconstruct_autocorrelation(model: &EstimatorModel) -> CMatrix {
    model.reconstruct()
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::{any, prop_assert, proptest};
    use rand::Rng;

    use super::*;
    use crate::channel::generate_realization;
    use crate::linalg::{hermitian_eigenvalues, numerical_rank, quadratic_form, ONE};
    use crate::measurement::{build_dataset, rs_pattern, MeasurementDataset};
    use crate::reflection::PhaseAlphabet;
    use crate::rng::seeded;
    use crate::SystemConfig;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_vec(len: usize, rng: &mut impl Rng) -> Vec<Complex64> {
        (0..len).map(|_| complex_gaussian(rng, 1.0)).collect()
    }

    fn noiseless_dataset(config: &SystemConfig, len: usize, seed: u64) -> (CMatrix, MeasurementDataset) {
        let mut rng = seeded(seed);
        let real = generate_realization(config, &mut rng).unwrap();
        let pattern = rs_pattern(config.n_subcarriers, config.n_rs_subcarriers, 0).unwrap();
        let ds = build_dataset(&real, config.alphabet(), &pattern, 1, 0.0, len, 0.9, &mut rng).unwrap();
        (real.autocorr, ds)
    }

    fn small_config() -> SystemConfig {
        SystemConfig {
            n_subcarriers: 16,
            n_rs_subcarriers: 4,
            taps_direct: 2,
            taps_bs_irs: 2,
            taps_irs_user: 2,
            ..SystemConfig::default().with_irs_shape(2, 3)
        }
    }

    #[test]
    fn forward_examples() {
        let m = EstimatorModel::new(vec![vec![ONE, ZERO, ZERO]]).unwrap();
        let v = [ONE, c(0.0, 1.0), c(-1.0, 0.0)];
        assert_relative_eq!(m.forward_power(&v).unwrap(), 1.0);
        let m = EstimatorModel::new(vec![vec![ONE, ZERO], vec![ZERO, ONE]]).unwrap();
        assert_relative_eq!(m.forward_power(&[ONE, ONE]).unwrap(), 2.0);
        assert!(m.forward_power(&[ONE]).is_err());
    }

    #[test]
    fn reconstruct_examples() {
        let m = EstimatorModel::new(vec![vec![ONE, ZERO], vec![ZERO, ONE]]).unwrap();
        assert_eq!(m.reconstruct(), CMatrix::identity(2, 2));
        let m = EstimatorModel::new(vec![vec![ONE, c(0.0, 1.0)]]).unwrap();
        let want = CMatrix::from_row_slice(2, 2, &[ONE, c(0.0, -1.0), c(0.0, 1.0), ONE]);
        assert_eq!(m.reconstruct(), want);
        assert_eq!(reconstruct_autocorrelation(&m), want);
    }

    #[test]
    fn random_model_reconstruction_is_low_rank_psd() {
        for seed in 0..10 {
            let m = EstimatorModel::random(3, 10, 1.0, &mut seeded(seed)).unwrap();
            let r = m.reconstruct();
            assert!(hermitian_eigenvalues(&r)[0] >= -1e-12);
            assert!(numerical_rank(&r, 1e-9) <= 3);
        }
    }

    #[test]
    fn model_validation() {
        assert!(EstimatorModel::new(vec![]).is_err());
        assert!(EstimatorModel::new(vec![vec![ONE], vec![ONE, ONE]]).is_err());
        assert!(EstimatorModel::new(vec![vec![c(f64::NAN, 0.0)]]).is_err());
        assert!(EstimatorModel::random(0, 3, 1.0, &mut seeded(1)).is_err());
    }

    #[test]
    fn loss_is_zero_at_exact_fit() {
        let mut rng = seeded(2);
        let m = EstimatorModel::random(2, 4, 1.0, &mut rng).unwrap();
        let batch: Vec<Sample> = (0..6)
            .map(|_| {
                let v = random_vec(4, &mut rng);
                let target = m.forward_power(&v).unwrap();
                Sample { v, target }
            })
            .collect();
        let (loss, grads) = loss_and_gradient(&m, &batch).unwrap();
        assert!(loss < 1e-28);
        assert!(grads.iter().flatten().all(|g| g.norm() < 1e-12));
    }

    #[test]
    fn scalar_loss_and_gradient() {
        let w = c(0.6, -0.8);
        let t = 3.0;
        let m = EstimatorModel::new(vec![vec![w]]).unwrap();
        let (loss, grads) = loss_and_gradient(&m, &[Sample { v: vec![ONE], target: t }]).unwrap();
        let r = t - w.norm_sqr();
        assert_relative_eq!(loss, r * r, max_relative = 1e-14);
        assert!((grads[0][0] - w * (-4.0 * r)).norm() < 1e-14);
        assert!(loss_and_gradient(&m, &[]).is_err());
        assert!(loss_and_gradient(&m, &[Sample { v: vec![ONE, ONE], target: 1.0 }]).is_err());
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn gradient_matches_finite_differences() {
        let mut rng = seeded(17);
        for _ in 0..5 {
            let base = EstimatorModel::random(3, 5, 1.0, &mut rng).unwrap();
            let batch: Vec<Sample> =
                (0..7).map(|_| Sample { v: random_vec(5, &mut rng), target: rng.random_range(0.0..10.0) }).collect();
            let (_, grads) = loss_and_gradient(&base, &batch).unwrap();
            let h = 1e-5;
            for k in 0..3 {
                for i in 0..5 {
                    for (dir, analytic) in [(c(1.0, 0.0), grads[k][i].re), (c(0.0, 1.0), grads[k][i].im)] {
                        let mut plus = base.clone();
                        plus.weights[k][i] += dir * h;
                        let mut minus = base.clone();
                        minus.weights[k][i] -= dir * h;
                        let fd = (loss_and_gradient(&plus, &batch).unwrap().0
                            - loss_and_gradient(&minus, &batch).unwrap().0)
                            / (2.0 * h);
                        assert_relative_eq!(analytic, fd, max_relative = 1e-5, epsilon = 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn nmse_examples() {
        let r = EstimatorModel::random(2, 4, 1.0, &mut seeded(3)).unwrap().reconstruct();
        assert_eq!(nmse(&r, &r).unwrap(), 0.0);
        assert_relative_eq!(nmse(&CMatrix::zeros(4, 4), &r).unwrap(), 1.0);
        assert_relative_eq!(nmse(&r.scale(2.0), &r).unwrap(), 1.0, max_relative = 1e-14);
        assert!(nmse(&r, &CMatrix::zeros(4, 4)).is_err());
        assert!(nmse(&r, &CMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let m = EstimatorModel::random(3, 7, 0.123, &mut seeded(4)).unwrap();
        let text = m.to_json().unwrap();
        assert_eq!(EstimatorModel::from_json(&text).unwrap(), m);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["k_rank"], 3);
        assert_eq!(v["weights"][0].as_array().unwrap().len(), 14);
        assert!(EstimatorModel::from_json(r#"{"k_rank": 2, "weights": [[1.0, 0.0]]}"#).is_err());
        assert!(EstimatorModel::from_json(r#"{"k_rank": 1, "weights": [[1.0]]}"#).is_err());
    }

    #[test]
    fn training_recovers_noiseless_autocorrelation() {
        let config = small_config();
        let (truth, ds) = noiseless_dataset(&config, 600, 21);
        let sgd = TrainingHyper::default();
        let adam = TrainingHyper { update: UpdateRule::adam(), ..TrainingHyper::default() };
        for (hyper, limit) in [(sgd, 2e-2), (adam, 1e-3)] {
            let model = train(&ds, config.max_taps(), &hyper, &mut seeded(1)).unwrap();
            let e = nmse(&model.reconstruct(), &truth).unwrap();
            assert!(e < limit, "{:?}: nmse {e}", hyper.update);
            let v = ds.entries[0].reflection.extended();
            let exact = quadratic_form(&truth, v).unwrap();
            assert_relative_eq!(model.forward_power(v).unwrap(), exact, max_relative = 5e-2);
        }
    }

    #[test]
    fn rank_one_is_worse_on_wideband_channel() {
        let config = small_config();
        let (truth, ds) = noiseless_dataset(&config, 600, 22);
        let hyper = TrainingHyper::default();
        let full = train(&ds, 3, &hyper, &mut seeded(1)).unwrap();
        let one = train(&ds, 1, &hyper, &mut seeded(1)).unwrap();
        let e_full = nmse(&full.reconstruct(), &truth).unwrap();
        let e_one = nmse(&one.reconstruct(), &truth).unwrap();
        assert!(e_one > e_full, "{e_one} vs {e_full}");
    }

    #[test]
    fn training_is_deterministic() {
        let config = small_config();
        let (_, ds) = noiseless_dataset(&config, 200, 5);
        let hyper = TrainingHyper { epochs: 30, ..TrainingHyper::default() };
        let a = train(&ds, 2, &hyper, &mut seeded(7)).unwrap();
        let b = train(&ds, 2, &hyper, &mut seeded(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_batch_loss_decreases() {
        let config = small_config();
        let (_, ds) = noiseless_dataset(&config, 300, 6);
        for update in [UpdateRule::adam(), UpdateRule::Sgd { momentum: 0.0 }] {
            let hyper = TrainingHyper {
                batch_size: 1000,
                epochs: 200,
                step_size: if matches!(update, UpdateRule::Sgd { .. }) { 0.05 } else { 0.01 },
                update,
                early_stop_patience: 1000,
                ..TrainingHyper::default()
            };
            let run = train_with_history(&ds, 3, &hyper, &mut seeded(2)).unwrap();
            let loss = &run.train_loss;
            for e in 0..loss.len() - 5 {
                assert!(loss[e + 5] <= loss[e], "{update:?} epoch {e}: {} > {}", loss[e + 5], loss[e]);
            }
            assert!(loss[loss.len() - 1] < 1e-2 * loss[0]);
        }
    }

    #[test]
    fn training_errors() {
        let config = small_config();
        let (_, ds) = noiseless_dataset(&config, 100, 9);
        let hyper = TrainingHyper::default();
        assert!(train(&ds, 0, &hyper, &mut seeded(1)).is_err());
        let bad = TrainingHyper { split_ratio: 1.0, ..TrainingHyper::default() };
        assert!(train(&ds, 1, &bad, &mut seeded(1)).is_err());
        let explode =
            TrainingHyper { step_size: 1e8, update: UpdateRule::Sgd { momentum: 0.0 }, ..TrainingHyper::default() };
        assert!(matches!(train(&ds, 2, &explode, &mut seeded(1)), Err(Error::TrainingDiverged { .. })));
    }

    #[test]
    fn noise_floor_from_minimum() {
        let config = small_config();
        let mut rng = seeded(10);
        let real = generate_realization(&config, &mut rng).unwrap();
        let pattern = rs_pattern(16, 4, 0).unwrap();
        let ds = build_dataset(&real, config.alphabet(), &pattern, 30, config.noise_power, 300, 0.9, &mut rng).unwrap();
        let hyper = TrainingHyper { noise_floor: NoiseFloor::FromMinimum { margin: 0.5 }, ..TrainingHyper::default() };
        let run = train_with_history(&ds, 3, &hyper, &mut seeded(1)).unwrap();
        let min = ds.entries.iter().map(|e| e.rsrp).fold(f64::INFINITY, f64::min);
        assert_relative_eq!(run.noise_floor, 0.5 * min);
        let bad = TrainingHyper { noise_floor: NoiseFloor::FromMinimum { margin: 1.5 }, ..TrainingHyper::default() };
        assert!(train(&ds, 3, &bad, &mut seeded(1)).is_err());
    }

    #[test]
    fn hyper_json_defaults() {
        let h: TrainingHyper =
            serde_json::from_str(r#"{"epochs": 5, "update": {"kind": "sgd", "momentum": 0.5}}"#).unwrap();
        assert_eq!(h.epochs, 5);
        assert_eq!(h.update, UpdateRule::Sgd { momentum: 0.5 });
        assert_eq!(h.batch_size, TrainingHyper::default().batch_size);
        let _ = PhaseAlphabet::new(1).unwrap();
    }

    proptest! {
        #[test]
        fn forward_matches_reconstructed_quadratic_form(seed in any::<u64>(), k in 1usize..4, dim in 1usize..8) {
            let mut rng = seeded(seed);
            let m = EstimatorModel::random(k, dim, 1.0, &mut rng).unwrap();
            let v = random_vec(dim, &mut rng);
            let direct = m.forward_power(&v).unwrap();
            let via_r = quadratic_form(&m.reconstruct(), &v).unwrap();
            prop_assert!((direct - via_r).abs() <= 1e-12 * direct.abs().max(1e-300) + 1e-14);
        }

        #[test]
        fn global_phase_and_permutation_invariance(seed in any::<u64>(), phase in -3.0f64..3.0) {
            let mut rng = seeded(seed);
            let m = EstimatorModel::random(3, 5, 1.0, &mut rng).unwrap();
            let v = random_vec(5, &mut rng);
            let rot = Complex64::from_polar(1.0, phase);
            let mut rotated = m.weights.clone();
            for z in rotated[1].iter_mut() {
                *z *= rot;
            }
            let rotated = EstimatorModel::new(rotated).unwrap();
            let r = m.reconstruct();
            let tol = 1e-12 * crate::linalg::frobenius_sq(&r).sqrt();
            prop_assert!((rotated.reconstruct() - &r).iter().all(|z| z.norm() <= tol));
            prop_assert!((rotated.forward_power(&v).unwrap() - m.forward_power(&v).unwrap()).abs() <= 1e-12 * m.forward_power(&v).unwrap());

            let mut permuted = m.weights.clone();
            permuted.reverse();
            let permuted = EstimatorModel::new(permuted).unwrap();
            prop_assert!((permuted.reconstruct() - &r).iter().all(|z| z.norm() <= tol));
        }
    }
}
