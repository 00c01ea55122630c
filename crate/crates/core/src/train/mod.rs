//! Training: pose loss, Adam, truncated BPTT over trajectories, early
//! stopping and β calibration.

pub mod adam;
pub mod loss;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::net::model::{forward_step, RecurrentState};
use crate::net::{mix_seed, Model, NetConfig, NetworkParams};
use crate::pose::Pose;
use crate::tensor::{Real, Tensor};

pub use adam::{AdamConfig, AdamState, AdamVariant};
pub use loss::{aggregate_loss, pose_loss, PoseLoss, PoseLossConfig};

/// One trajectory prepared for the network: stacked pairs and the
/// ground-truth relative pose of each pair.
#[derive(Debug, Clone)]
pub struct Sequence<T: Real> {
    pub pairs: Vec<Tensor<T>>,
    pub targets: Vec<Pose>,
}

impl<T: Real> Sequence<T> {
    pub fn new(pairs: Vec<Tensor<T>>, targets: Vec<Pose>) -> Result<Self> {
        if pairs.len() != targets.len() {
            return Err(Error::Validation(format!(
                "{} pairs but {} target poses",
                pairs.len(),
                targets.len()
            )));
        }
        if pairs.is_empty() {
            return Err(Error::Validation("empty sequence".into()));
        }
        Ok(Sequence { pairs, targets })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub adam: AdamConfig,
    pub patience: usize,
    /// Validation loss must drop by more than this to count as improvement.
    pub min_improvement: f64,
    pub dropout_rate: f64,
    /// Truncated BPTT window, in frame pairs.
    pub window: usize,
    pub beta: f64,
    pub seed: u64,
    /// Writes zero wall time so logs are bit-identical across runs.
    pub strict: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 200,
            adam: AdamConfig::default(),
            patience: 10,
            min_improvement: 1e-6,
            dropout_rate: 0.0,
            window: 10,
            beta: 1.0,
            seed: 0,
            strict: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience == 0 || self.window == 0 {
            return Err(Error::Config(
                "max_epochs, patience and window must be at least 1".into(),
            ));
        }
        if !(self.adam.alpha > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.adam.alpha)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        PoseLossConfig::with_beta(self.beta).validate()
    }
}

/// Per-epoch record; one CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of `trans + β·rot` over training pairs, as seen during the epoch.
    pub train_loss: f64,
    /// Same quantity over validation pairs, eval mode, full-trajectory state.
    pub val_loss: f64,
    /// Mean translation term over training pairs.
    pub trans_loss: f64,
    /// Mean unweighted quaternion term over training pairs.
    pub rot_loss: f64,
    pub lr: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    /// Losses of the untrained model (epoch 0); not a stopping candidate.
    pub initial: Option<EpochRecord>,
    pub epochs: Vec<EpochRecord>,
}

pub const LOG_HEADER: &str = "epoch,train_loss,val_loss,trans_loss,rot_loss,lr,wall_seconds";

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        for r in self.initial.iter().chain(&self.epochs) {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.epoch, r.train_loss, r.val_loss, r.trans_loss, r.rot_loss, r.lr, r.wall_seconds
            );
        }
        s
    }

    /// Rows with epoch 0 become [`TrainingLog::initial`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(LOG_HEADER) {
            return Err(Error::Validation("training log header mismatch".into()));
        }
        let mut log = TrainingLog::default();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Validation(format!("bad training log row `{line}`"));
            if f.len() != 7 {
                return Err(bad());
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
            let r = EpochRecord {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_loss: num(1)?,
                val_loss: num(2)?,
                trans_loss: num(3)?,
                rot_loss: num(4)?,
                lr: num(5)?,
                wall_seconds: num(6)?,
            };
            if r.epoch == 0 {
                log.initial = Some(r);
            } else {
                log.epochs.push(r);
            }
        }
        Ok(log)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

pub struct TrainOutcome<T: Real> {
    /// Network configuration used for training (dropout as trained).
    pub config: NetConfig,
    /// Parameters from the epoch with the lowest validation loss.
    pub best: NetworkParams<T>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub log: TrainingLog,
}

/// Mean losses of `params` over whole sequences in eval mode, recurrent state
/// carried through each trajectory.
pub fn evaluate<T: Real>(
    config: &NetConfig,
    params: &NetworkParams<T>,
    data: &[Sequence<T>],
    beta: f64,
) -> Result<(f64, f64, f64)> {
    let per_seq = data
        .par_iter()
        .map(|seq| {
            let mut state = RecurrentState::zeros(config.lstm_hidden);
            let mut sums = [0.0; 3];
            for (pair, gt) in seq.pairs.iter().zip(&seq.targets) {
                let (raw, next) = forward_step(config, params, pair, &state)?;
                let l = pose_loss(&raw, gt, beta)?;
                sums[0] += l.total;
                sums[1] += l.trans;
                sums[2] += l.rot;
                state = next;
            }
            Ok(sums)
        })
        .collect::<Result<Vec<_>>>()?;
    // Summed in sequence order so results do not depend on thread count.
    let n = data.iter().map(Sequence::len).sum::<usize>().max(1) as f64;
    let sum = |k: usize| per_seq.iter().map(|s| s[k]).sum::<f64>() / n;
    Ok((sum(0), sum(1), sum(2)))
}

/// Predicted raw outputs for every pair, state carried per trajectory.
pub fn predict<T: Real>(
    config: &NetConfig,
    params: &NetworkParams<T>,
    pairs: &[Tensor<T>],
) -> Result<Vec<Tensor<T>>> {
    let mut state = RecurrentState::zeros(config.lstm_hidden);
    let mut out = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let (raw, next) = forward_step(config, params, pair, &state)?;
        out.push(raw);
        state = next;
    }
    Ok(out)
}

/// Trains `model` on `train` with early stopping on `val`. `on_epoch` sees
/// every record as it is produced (epoch 0 included).
pub fn train<T: Real>(
    mut model: Model<T>,
    train: &[Sequence<T>],
    val: &[Sequence<T>],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config(format!(
            "training needs non-empty splits (train {}, val {})",
            train.len(),
            val.len()
        )));
    }
    model.set_dropout(cfg.dropout_rate)?;
    let net = model.config().clone();
    let start = Instant::now();
    let elapsed = |strict: bool| if strict { 0.0 } else { start.elapsed().as_secs_f64() };
    let lr = cfg.adam.alpha;

    let (train0, trans0, rot0) = evaluate(&net, &model.params, train, cfg.beta)?;
    let (val0, _, _) = evaluate(&net, &model.params, val, cfg.beta)?;
    let initial = EpochRecord {
        epoch: 0,
        train_loss: train0,
        val_loss: val0,
        trans_loss: trans0,
        rot_loss: rot0,
        lr,
        wall_seconds: elapsed(cfg.strict),
    };
    on_epoch(&initial);
    let mut log = TrainingLog {
        initial: Some(initial),
        epochs: Vec::new(),
    };

    let mut adam = AdamState::for_params(cfg.adam, &model.params);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x5348_5546));
    let mut best = model.params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut waited = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut total, mut trans, mut rot, mut n) = (0.0, 0.0, 0.0, 0usize);
        for &ti in &order {
            let seq = &train[ti];
            let mut state = model.initial_state();
            for (wi, (pairs, targets)) in seq
                .pairs
                .chunks(cfg.window)
                .zip(seq.targets.chunks(cfg.window))
                .enumerate()
            {
                let seed = mix_seed(cfg.seed, ((epoch as u64) << 40) ^ ((ti as u64) << 20) ^ wi as u64);
                let (raws, last) = model.forward(pairs, &state, Mode::Train, seed)?;
                let scale = 1.0 / pairs.len() as f64;
                let mut grads = Vec::with_capacity(raws.len());
                for (k, (raw, gt)) in raws.iter().zip(targets).enumerate() {
                    let l = pose_loss(raw, gt, cfg.beta).map_err(|e| {
                        Error::Numeric(format!(
                            "epoch {epoch}, trajectory {ti}, pair {}: {e}",
                            wi * cfg.window + k
                        ))
                    })?;
                    total += l.total;
                    trans += l.trans;
                    rot += l.rot;
                    n += 1;
                    let mut g = l.grad;
                    g.scale(T::from_f64_lossy(scale));
                    grads.push(g);
                }
                let g = model.backward(&grads)?;
                adam.step(&mut model.params, &g)?;
                state = last;
            }
        }
        let n = n as f64;
        let (val_loss, _, _) = evaluate(&net, &model.params, val, cfg.beta)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("validation loss {val_loss} at epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            train_loss: total / n,
            val_loss,
            trans_loss: trans / n,
            rot_loss: rot / n,
            lr,
            wall_seconds: elapsed(cfg.strict),
        };
        on_epoch(&record);
        log.epochs.push(record);
        if val_loss < best_val - cfg.min_improvement {
            best_val = val_loss;
            best = model.params.clone();
            best_epoch = epoch;
            waited = 0;
        } else {
            waited += 1;
            if waited >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        config: net,
        best,
        best_epoch,
        stopped_early,
        log,
    })
}

/// β for the retraining run: final-epoch mean translation loss over mean
/// orientation loss from a β = 1 run.
pub fn calibrate_beta(log: &TrainingLog) -> Result<f64> {
    let last = log
        .last()
        .ok_or_else(|| Error::State("calibration needs a completed training run".into()))?;
    beta_from_losses(last.trans_loss, last.rot_loss)
}

pub fn beta_from_losses(trans: f64, rot: f64) -> Result<f64> {
    if !(rot >= 1e-12) {
        return Err(Error::DegenerateCalibration(rot));
    }
    Ok(trans / rot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_ratio() {
        assert_eq!(beta_from_losses(0.3, 0.3).unwrap(), 1.0);
        assert!((beta_from_losses(0.04, 0.008).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(
            beta_from_losses(0.04 * 7.0, 0.008 * 7.0).unwrap(),
            beta_from_losses(0.04, 0.008).unwrap()
        );
        assert!(matches!(
            beta_from_losses(1.0, 1e-13),
            Err(Error::DegenerateCalibration(_))
        ));
        assert!(matches!(calibrate_beta(&TrainingLog::default()), Err(Error::State(_))));
    }

    #[test]
    fn log_csv_round_trip() {
        let rec = |epoch| EpochRecord {
            epoch,
            train_loss: 0.1 / (epoch as f64 + 1.0),
            val_loss: 0.3,
            trans_loss: 1e-7,
            rot_loss: 0.25,
            lr: 1e-3,
            wall_seconds: 0.0,
        };
        let log = TrainingLog {
            initial: Some(rec(0)),
            epochs: vec![rec(1), rec(2)],
        };
        let text = log.to_csv();
        assert_eq!(TrainingLog::from_csv(&text).unwrap(), log);
        assert!(text.starts_with(LOG_HEADER));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { patience: 0, ..Default::default() },
            TrainConfig { beta: 0.0, ..Default::default() },
            TrainConfig { dropout_rate: 1.0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }
}
