use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::net::{BatchStats, ClassifierNet, Mode, NetShape};
use super::{adam_step, bce_logit_loss, sigmoid, AdamState};

/// Optimiser and architecture settings for one classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stopping_patience: usize,
    pub lr_decay_factor: f64,
    pub lr_decay_patience: usize,
    pub validation_fraction: f64,
    pub weight_decay: f64,
    pub hidden_features: usize,
    pub blocks: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            batch_size: 128,
            max_epochs: 300,
            early_stopping_patience: 20,
            lr_decay_factor: 0.1,
            lr_decay_patience: 5,
            validation_fraction: 0.1,
            weight_decay: 0.0,
            hidden_features: 64,
            blocks: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            errs.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be at least 1".into());
        }
        if self.max_epochs == 0 {
            errs.push("max_epochs must be at least 1".into());
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            errs.push(format!("lr_decay_factor must be in (0, 1], got {}", self.lr_decay_factor));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            errs.push(format!("validation_fraction must be in (0, 1), got {}", self.validation_fraction));
        }
        if !(self.weight_decay >= 0.0) {
            errs.push(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.hidden_features == 0 {
            errs.push("hidden_features must be at least 1".into());
        }
        errs
    }

    /// Smallest training set for which the validation split is non-empty.
    pub fn min_samples(&self) -> usize {
        (2.0 / self.validation_fraction).ceil() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStopping,
    MaxEpochs,
}

/// Jointly drawn `(x_i, ϑ_i)` pairs, already standardised.
#[derive(Clone, Copy, Debug)]
pub struct PairedData<'a> {
    pub x: &'a [f64],
    pub x_dim: usize,
    pub theta: &'a [f64],
    pub theta_dim: usize,
}

impl PairedData<'_> {
    pub fn len(&self) -> usize {
        self.x.len().checked_div(self.x_dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn width(&self) -> usize {
        self.x_dim + self.theta_dim
    }

    /// Appends the row `[x_i, ϑ_j]`.
    fn push_row(&self, i: usize, j: usize, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.x[i * self.x_dim..(i + 1) * self.x_dim]);
        out.extend_from_slice(&self.theta[j * self.theta_dim..(j + 1) * self.theta_dim]);
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub net: ClassifierNet,
    pub trace: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop: StopReason,
}

/// Mean loss and gradient over one batch laid out as `b` joint rows followed by
/// `b` marginal rows.
fn batch_grad(net: &ClassifierNet, input: &[f64], b: usize) -> (f64, Vec<f64>, BatchStats) {
    let rows = 2 * b;
    let mut stats = BatchStats::new();
    let (logits, tape) = net.forward(input, rows, Mode::Train, true, Some(&mut stats));
    let scale = 1.0 / rows as f64;
    let mut loss = 0.0;
    let dout: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(r, &f)| {
            let y = if r < b { 1.0 } else { 0.0 };
            loss += bce_logit_loss(f, y);
            (sigmoid(f) - y) * scale
        })
        .collect();
    let grads = net.backward(tape.as_ref().expect("tape requested"), &dout);
    (loss * scale, grads, stats)
}

fn eval_loss(net: &ClassifierNet, joint: &[f64], marginal: &[f64], n: usize) -> f64 {
    let fj = net.predict(joint, n);
    let fm = net.predict(marginal, n);
    let total: f64 = fj.iter().map(|&f| bce_logit_loss(f, 1.0)).sum::<f64>() + fm.iter().map(|&f| bce_logit_loss(f, 0.0)).sum::<f64>();
    total / (2 * n) as f64
}

/// Trains a fresh classifier to tell joint pairs from marginal pairs, the
/// latter formed by pairing each `x` with an independently shuffled `ϑ`.
/// Returns the weights with the lowest validation loss.
pub fn train_classifier<R: Rng + ?Sized>(data: &PairedData, cfg: &TrainConfig, rng: &mut R) -> Result<TrainOutcome> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let n = data.len();
    if data.theta.len() != n * data.theta_dim {
        return Err(Error::DimensionMismatch {
            expected: n * data.theta_dim,
            got: data.theta.len(),
        });
    }
    if n < cfg.min_samples() {
        return Err(Error::precondition(format!(
            "training needs at least {} samples, got {n}",
            cfg.min_samples()
        )));
    }
    let shape = NetShape {
        input: data.width(),
        hidden: cfg.hidden_features,
        blocks: cfg.blocks,
    };
    let mut net = ClassifierNet::new(shape, rng);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_val = ((n as f64 * cfg.validation_fraction).floor() as usize).max(1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let train_idx = train_idx.to_vec();
    let mut val_perm = val_idx.to_vec();
    val_perm.shuffle(rng);
    let width = data.width();
    let mut val_joint = Vec::with_capacity(n_val * width);
    let mut val_marg = Vec::with_capacity(n_val * width);
    for (&i, &j) in val_idx.iter().zip(&val_perm) {
        data.push_row(i, i, &mut val_joint);
        data.push_row(i, j, &mut val_marg);
    }

    let mut adam = AdamState::new(net.num_params());
    adam.weight_decay = cfg.weight_decay;
    let mut lr = cfg.learning_rate;
    let mut best = (f64::INFINITY, 0usize, net.clone());
    let mut since_best = 0;
    let mut plateau = 0;
    let mut trace = Vec::new();
    let mut stop = StopReason::MaxEpochs;
    let mut perm_a = train_idx.clone();
    let mut perm_b = train_idx;
    let mut input = Vec::with_capacity(2 * cfg.batch_size * width);

    for epoch in 1..=cfg.max_epochs {
        perm_a.shuffle(rng);
        perm_b.shuffle(rng);
        let mut loss_sum = 0.0;
        let mut rows = 0usize;
        for (ja, jb) in perm_a.chunks(cfg.batch_size).zip(perm_b.chunks(cfg.batch_size)) {
            let b = ja.len();
            input.clear();
            for &i in ja {
                data.push_row(i, i, &mut input);
            }
            for (&i, &j) in ja.iter().zip(jb) {
                data.push_row(i, j, &mut input);
            }
            let (loss, grads, stats) = batch_grad(&net, &input, b);
            adam_step(&mut net, &grads, &mut adam, lr)?;
            net.update_running(&stats, 2 * b);
            loss_sum += loss * (2 * b) as f64;
            rows += 2 * b;
        }
        let train_loss = loss_sum / rows as f64;
        let val_loss = eval_loss(&net, &val_joint, &val_marg, n_val);
        trace.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        if val_loss.is_nan() || !train_loss.is_finite() {
            return Err(Error::TrainingAborted {
                epoch,
                message: "validation loss became NaN".into(),
                trace,
            });
        }
        if val_loss < best.0 {
            best = (val_loss, epoch, net.clone());
            since_best = 0;
            plateau = 0;
        } else {
            since_best += 1;
            plateau += 1;
            if plateau >= cfg.lr_decay_patience {
                lr *= cfg.lr_decay_factor;
                plateau = 0;
            }
            if since_best >= cfg.early_stopping_patience {
                stop = StopReason::EarlyStopping;
                break;
            }
        }
    }
    let (best_val_loss, best_epoch, net) = best;
    Ok(TrainOutcome {
        net,
        trace,
        best_epoch,
        best_val_loss,
        stop,
    })
}
