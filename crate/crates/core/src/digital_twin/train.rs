use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamParams, AdamState};
use super::mlp::{Activation, MlpModel};
use super::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without a new best validation MSE before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 2000,
            batch_size: 32,
            patience: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::param("hidden", "must be >= 1"));
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::param("learning_rate", "learning rate and epsilon must be > 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::param("beta1", "betas must lie in [0, 1)"));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::param("max_epochs", "max_epochs and batch_size must be >= 1"));
        }
        if self.patience == 0 {
            return Err(Error::param("patience", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Per-entry mean squared error, dB².
    pub train_mse: f64,
    pub val_mse: f64,
    pub val_rmse_db: f64,
    pub val_max_abs_err_db: f64,
    /// Spearman rank correlation with the oracle, per output batch.
    pub val_spearman: Vec<f64>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Best-so-far validation MSE after each epoch.
    pub best_val_history: Vec<f64>,
}

fn per_entry_mse<T: Scalar>(model: &MlpModel<T>, x: ArrayView2<T>, y: ArrayView2<T>) -> f64 {
    model.loss(x, y).as_f64() / y.ncols() as f64
}

/// Minibatch Adam on squared error; returns the model with the lowest
/// validation MSE seen.
pub fn train<T: Scalar>(dataset: &Dataset<T>, cfg: &TrainConfig) -> Result<(MlpModel<T>, ValidationReport)> {
    train_with_activation(dataset, cfg, Activation::Tanh)
}

pub(crate) fn train_with_activation<T: Scalar>(
    dataset: &Dataset<T>,
    cfg: &TrainConfig,
    activation: Activation,
) -> Result<(MlpModel<T>, ValidationReport)> {
    cfg.validate()?;
    dataset.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = MlpModel::<T>::random(
        cfg.hidden,
        activation,
        dataset.bounds.clone(),
        dataset.batches.clone(),
        dataset.n_batches,
        &mut rng,
    );
    let (tx, ty) = (dataset.train_x(), dataset.train_y());
    let (vx, vy) = (dataset.val_x(), dataset.val_y());

    // Start the output bias at the target mean so the net does not spend its
    // first epochs learning the dB offset.
    if let Some(mean) = ty.mean_axis(Axis(0)) {
        model.b2.assign(&mean);
    }

    let adam = AdamParams {
        learning_rate: T::lit(cfg.learning_rate),
        beta1: T::lit(cfg.beta1),
        beta2: T::lit(cfg.beta2),
        epsilon: T::lit(cfg.epsilon),
    };
    let mut s_w1 = AdamState::zeros(model.w1.raw_dim());
    let mut s_b1 = AdamState::zeros(model.b1.raw_dim());
    let mut s_w2 = AdamState::zeros(model.w2.raw_dim());
    let mut s_b2 = AdamState::zeros(model.b2.raw_dim());

    let mut best = model.clone();
    let mut best_val = per_entry_mse(&model, vx, vy);
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut indices: Vec<usize> = (0..tx.nrows()).collect();
    let mut step = 0i32;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(cfg.batch_size) {
            let bx: Array2<T> = tx.select(Axis(0), chunk);
            let by: Array2<T> = ty.select(Axis(0), chunk);
            let (loss, g) = model.loss_and_grad(bx.view(), by.view());
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    loss: loss.as_f64(),
                });
            }
            step = step.saturating_add(1);
            s_w1.update(&mut model.w1, &g.w1, &adam, step);
            s_b1.update(&mut model.b1, &g.b1, &adam, step);
            s_w2.update(&mut model.w2, &g.w2, &adam, step);
            s_b2.update(&mut model.b2, &g.b2, &adam, step);
        }
        let val = per_entry_mse(&model, vx, vy);
        if !val.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, loss: val });
        }
        if val < best_val {
            best_val = val;
            best_epoch = epoch;
            best = model.clone();
        }
        history.push(best_val);
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }

    let report = validation_report(&best, dataset, epochs_run, best_epoch, history);
    Ok((best, report))
}

fn validation_report<T: Scalar>(
    model: &MlpModel<T>,
    dataset: &Dataset<T>,
    epochs_run: usize,
    best_epoch: usize,
    best_val_history: Vec<f64>,
) -> ValidationReport {
    let (vx, vy) = (dataset.val_x(), dataset.val_y());
    let pred = model.forward(vx);
    let val_mse = per_entry_mse(model, vx, vy);
    let val_max_abs_err_db = pred
        .iter()
        .zip(vy.iter())
        .map(|(p, t)| (*p - *t).abs().as_f64())
        .fold(0.0, f64::max);
    let val_spearman = (0..vy.ncols())
        .map(|j| {
            let a: Vec<f64> = pred.column(j).iter().map(|v| v.as_f64()).collect();
            let b: Vec<f64> = vy.column(j).iter().map(|v| v.as_f64()).collect();
            spearman(&a, &b)
        })
        .collect();
    ValidationReport {
        train_mse: per_entry_mse(model, dataset.train_x(), dataset.train_y()),
        val_mse,
        val_rmse_db: val_mse.sqrt(),
        val_max_abs_err_db,
        val_spearman,
        epochs_run,
        best_epoch,
        best_val_history,
    }
}

/// Largest relative disagreement between backprop and central finite
/// differences (step 1e-5) over all parameters, on the sample `(x, y)`.
pub fn grad_check<T: Scalar>(model: &MlpModel<T>, x: ArrayView2<T>, y: ArrayView2<T>) -> T {
    let h = T::lit(1e-5);
    let (_, g) = model.loss_and_grad(x, y);
    let analytic = g.flat();
    let mut probe = model.clone();
    let mut worst = T::zero();
    for (i, &g_bp) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + h;
        let plus = probe.loss(x, y);
        *probe.param_mut(i) = orig - h;
        let minus = probe.loss(x, y);
        *probe.param_mut(i) = orig;
        let g_fd = (plus - minus) / (h + h);
        let denom = (g_bp.abs() + g_fd.abs()).max(T::lit(1e-8));
        worst = worst.max((g_bp - g_fd).abs() / denom);
    }
    worst
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        // ties share the mean rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}
