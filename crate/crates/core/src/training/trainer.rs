//! Epoch loop with plateau scheduling, early stopping and best-checkpoint
//! retention.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::{PairSet, TrainingData};
use super::optim::Adam;
use super::schedule::{PlateauScheduler, ScheduleEvent};
use crate::error::{HaruError, Result};
use crate::network::HaruNet;
use crate::nn::{Graph, Tensor};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_lr: f64,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-4,
            plateau_patience: 5,
            plateau_factor: 0.5,
            min_lr: 1e-6,
            early_stop_patience: 20,
            batch_size: 8,
            max_epochs: 100,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr0 > 0.0
            && self.plateau_factor > 0.0
            && self.plateau_factor < 1.0
            && self.plateau_patience >= 1
            && self.early_stop_patience >= 1
            && self.batch_size >= 1
            && self.min_lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(HaruError::Config(format!(
                "invalid training configuration {self:?}"
            )))
        }
    }

    pub fn scheduler(&self) -> PlateauScheduler {
        PlateauScheduler::new(
            self.lr0,
            self.plateau_factor,
            self.plateau_patience,
            self.min_lr,
            self.early_stop_patience,
        )
    }

    pub fn to_text(&self) -> String {
        format!(
            "lr0 = {}\nplateau_patience = {}\nplateau_factor = {}\nmin_lr = {}\nearly_stop_patience = {}\n\
             batch_size = {}\nmax_epochs = {}\nseed = {}\nbeta1 = {}\nbeta2 = {}\neps = {}\n",
            self.lr0,
            self.plateau_patience,
            self.plateau_factor,
            self.min_lr,
            self.early_stop_patience,
            self.batch_size,
            self.max_epochs,
            self.seed,
            self.beta1,
            self.beta2,
            self.eps
        )
    }

    /// Sets one field by name; returns `false` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        fn num<V: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<V, String> {
            v.parse().map_err(|_| format!("bad value '{v}' for {key}"))
        }
        match key {
            "lr0" => self.lr0 = num(key, value)?,
            "plateau_patience" => self.plateau_patience = num(key, value)?,
            "plateau_factor" => self.plateau_factor = num(key, value)?,
            "min_lr" => self.min_lr = num(key, value)?,
            "early_stop_patience" => self.early_stop_patience = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "max_epochs" => self.max_epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "eps" => self.eps = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    EpochBudget,
    EarlyStop,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::EpochBudget => "epoch budget",
            StopReason::EarlyStop => "early stop",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Rate used during this epoch.
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,lr,seconds\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{:.3}\n",
                r.epoch, r.train_loss, r.val_loss, r.lr, r.seconds
            ));
        }
        out
    }
}

/// Mean of squared differences, as a graph node.
pub fn mse_loss<T: Scalar>(
    g: &mut Graph<T>,
    pred: crate::nn::Var,
    target: crate::nn::Var,
) -> Result<crate::nn::Var> {
    g.mse_loss(pred, target)
}

/// Element-weighted mean MSE of `net` over `set`.
pub fn evaluate_loss<T: Scalar>(net: &HaruNet<T>, set: &PairSet, batch_size: usize) -> Result<f64> {
    if set.is_empty() {
        return Err(HaruError::Invalid(
            "cannot evaluate on an empty split".into(),
        ));
    }
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut sse = 0.0;
    let mut count = 0usize;
    for chunk in idx.chunks(batch_size.max(1)) {
        let b = set.batch::<T>(chunk)?;
        let pred = net.predict(b.noisy)?;
        sse += sq_error(&pred, &b.clean);
        count += pred.numel();
    }
    Ok(sse / count as f64)
}

fn sq_error<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum()
}

/// Trains `net` in place; on return it holds the parameters of the best
/// validation epoch. `log` receives one line per epoch.
pub fn train<T: Scalar>(
    net: &mut HaruNet<T>,
    data: &TrainingData,
    cfg: &TrainConfig,
    log: &mut dyn Write,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(HaruError::Invalid(format!(
            "training needs non-empty train and val splits (have {} and {})",
            data.train.len(),
            data.val.len()
        )));
    }
    let mut sched = cfg.scheduler();
    let mut adam = Adam::<T>::new(cfg.beta1, cfg.beta2, cfg.eps);
    let mut best: Option<Vec<Tensor<T>>> = None;
    let mut history = TrainHistory {
        epochs: Vec::new(),
        stop_reason: StopReason::EpochBudget,
        best_epoch: None,
        best_val_loss: f64::INFINITY,
    };
    net.params.zero_grads();
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let lr = sched.lr();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let (mut sse, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.train.batch::<T>(chunk)?;
            let mut g = Graph::new();
            let x = g.input(batch.noisy, false);
            let y = g.input(batch.clean, false);
            let pred = net.forward(&mut g, x)?;
            let loss = g.mse_loss(pred, y)?;
            let value = g.value(loss).data()[0].as_f64();
            if !value.is_finite() {
                return Err(HaruError::NonFinite(format!(
                    "training loss {value} at epoch {epoch}"
                )));
            }
            g.backward(loss, &mut net.params)?;
            adam.step(&mut net.params, lr)?;
            let n = g.value(pred).numel();
            sse += value * n as f64;
            count += n;
        }
        let train_loss = sse / count as f64;
        let val_loss = evaluate_loss(net, &data.val, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(HaruError::NonFinite(format!(
                "validation loss {val_loss} at epoch {epoch}"
            )));
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
            seconds: start.elapsed().as_secs_f64(),
        };
        let _ = writeln!(
            log,
            "epoch {epoch:4}  train {train_loss:.6e}  val {val_loss:.6e}  lr {lr:.3e}  {:.1}s",
            record.seconds
        );
        history.epochs.push(record);
        let event = sched.observe(val_loss);
        if event == ScheduleEvent::Improved {
            best = Some(net.params.snapshot());
            history.best_epoch = Some(epoch);
            history.best_val_loss = val_loss;
        }
        if event == ScheduleEvent::Stop {
            history.stop_reason = StopReason::EarlyStop;
            break;
        }
    }
    if let Some(best) = best {
        net.params.restore(&best)?;
    }
    Ok(history)
}
