//! Glue between the modules: running a checkpoint over a dataset, scoring
//! predictions against the naive baselines, and a small end-to-end smoke run.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::eval::{
    constant_velocity_baseline, default_bins, emit_reports, integrate_trajectory, rmse_vs_length_pooled,
    zero_motion_baseline, ErrorCurve, Overlay,
};
use crate::net::checkpoint::{self, Checkpoint, ParamSet};
use crate::net::{extract_pose, Model, NetConfig, NetworkParams};
use crate::pose::{Pose, Trajectory};
use crate::synth::dataset::{self, load_trajectory, make_sequence, prepare_frames, TrajectoryEntry};
use crate::synth::{build_dataset, DatasetManifest, DatasetOptions, DepthSource, SceneConfig, Split};
use crate::synth::{TrajectoryClass, TrajectorySpec};
use crate::tensor::Real;
use crate::train::{predict, train, TrainConfig, TrainOutcome, TrainingLog};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOG_FILE: &str = "training_log.csv";
pub const RELATIVE_FILE: &str = "relative.csv";
pub const POSES_FILE: &str = "poses.csv";

/// The network must accept the dataset's frames.
pub fn check_compatible(config: &NetConfig, manifest: &DatasetManifest) -> Result<()> {
    if config.input_height != manifest.height || config.input_width != manifest.width {
        return Err(Error::Config(format!(
            "checkpoint expects {}x{} frames, dataset has {}x{}",
            config.input_height, config.input_width, manifest.height, manifest.width
        )));
    }
    if config.input_channels != crate::net::PAIR_CHANNELS {
        return Err(Error::Config(format!(
            "checkpoint expects {} input channels, pairs have {}",
            config.input_channels,
            crate::net::PAIR_CHANNELS
        )));
    }
    Ok(())
}

/// Predictions for one trajectory.
#[derive(Debug, Clone)]
pub struct InferredTrajectory {
    pub name: String,
    /// Row `k` is the motion from frame `k` to `k + 1`, stamped at `k + 1`.
    pub relative: Trajectory,
    /// Integrated from the ground-truth first pose.
    pub absolute: Trajectory,
    pub ground_truth: Trajectory,
    /// Depth recovery and stacking, per frame.
    pub prep_seconds_per_frame: f64,
    /// Network forward pass, per pair.
    pub net_seconds_per_pair: f64,
}

pub fn infer_entry<T: Real>(
    config: &NetConfig,
    params: &NetworkParams<T>,
    root: &Path,
    manifest: &DatasetManifest,
    entry: &TrajectoryEntry,
    source: DepthSource,
) -> Result<InferredTrajectory> {
    check_compatible(config, manifest)?;
    let start = Instant::now();
    let frames = prepare_frames(root, manifest, entry, source)?;
    let gt = load_trajectory(root, entry)?;
    let seq = make_sequence::<T>(&frames, &gt.poses, &manifest.channel_means)?;
    let prep = start.elapsed().as_secs_f64() / frames.len() as f64;
    let start = Instant::now();
    let raw = predict(config, params, &seq.pairs)?;
    let net = start.elapsed().as_secs_f64() / seq.len() as f64;
    let rel: Vec<Pose> = raw.iter().map(extract_pose).collect::<Result<_>>()?;
    let absolute = integrate_trajectory(gt.timestamps.clone(), &gt.poses[0], &rel)?;
    let relative = Trajectory::new(gt.timestamps[1..].to_vec(), rel)?;
    log::info!(
        "stage=infer trajectory={} pairs={} prep_ms_per_frame={:.2} net_ms_per_pair={:.2}",
        entry.name,
        seq.len(),
        prep * 1e3,
        net * 1e3
    );
    Ok(InferredTrajectory {
        name: entry.name.clone(),
        relative,
        absolute,
        ground_truth: gt,
        prep_seconds_per_frame: prep,
        net_seconds_per_pair: net,
    })
}

/// Runs every trajectory of `split` (all of them when `None`).
pub fn infer_dataset<T: Real>(
    config: &NetConfig,
    params: &NetworkParams<T>,
    root: &Path,
    manifest: &DatasetManifest,
    split: Option<Split>,
    source: Option<DepthSource>,
) -> Result<Vec<InferredTrajectory>> {
    let source = source.unwrap_or(manifest.depth_source);
    manifest
        .trajectories
        .iter()
        .filter(|e| split.is_none_or(|s| e.split == s))
        .map(|e| infer_entry(config, params, root, manifest, e, source))
        .collect()
}

/// [`infer_dataset`] for a checkpoint of either precision.
pub fn infer_checkpoint(
    ckpt: &Checkpoint,
    root: &Path,
    manifest: &DatasetManifest,
    split: Option<Split>,
    source: Option<DepthSource>,
) -> Result<Vec<InferredTrajectory>> {
    match &ckpt.params {
        ParamSet::F32(p) => infer_dataset(&ckpt.config, p, root, manifest, split, source),
        ParamSet::F64(p) => infer_dataset(&ckpt.config, p, root, manifest, split, source),
    }
}

/// `<out>/<name>/relative.csv` and `<out>/<name>/poses.csv` per trajectory.
pub fn write_inference(out: &Path, inferred: &[InferredTrajectory]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for t in inferred {
        let dir = out.join(&t.name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (file, traj) in [(RELATIVE_FILE, &t.relative), (POSES_FILE, &t.absolute)] {
            let path = dir.join(file);
            fs::write(&path, traj.to_csv()).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Error curves of an estimate and of both baselines over the same spans.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub model: ErrorCurve,
    pub zero_motion: ErrorCurve,
    pub constant_velocity: ErrorCurve,
}

impl Scores {
    pub fn named(&self) -> Vec<(String, ErrorCurve)> {
        vec![
            ("model".to_string(), self.model.clone()),
            ("zero_motion".to_string(), self.zero_motion.clone()),
            ("constant_velocity".to_string(), self.constant_velocity.clone()),
        ]
    }
}

/// Pools `(estimate, ground truth)` pairs into model and baseline curves.
pub fn score(pairs: &[(Trajectory, Trajectory)], bins: &[f64]) -> Result<Scores> {
    let zero: Vec<Trajectory> = pairs.iter().map(|(_, g)| zero_motion_baseline(g)).collect::<Result<_>>()?;
    let cv: Vec<Trajectory> = pairs
        .iter()
        .map(|(_, g)| constant_velocity_baseline(g))
        .collect::<Result<_>>()?;
    let curve = |ests: Vec<&Trajectory>| {
        let refs: Vec<(&Trajectory, &Trajectory)> = ests.into_iter().zip(pairs.iter().map(|(_, g)| g)).collect();
        rmse_vs_length_pooled(&refs, bins)
    };
    Ok(Scores {
        model: curve(pairs.iter().map(|(e, _)| e).collect())?,
        zero_motion: curve(zero.iter().collect())?,
        constant_velocity: curve(cv.iter().collect())?,
    })
}

/// Scores inferred trajectories and writes curves, overlays and the summary.
pub fn report_inference(inferred: &[InferredTrajectory], bins: Option<&[f64]>, out: &Path) -> Result<(Scores, Vec<PathBuf>)> {
    let bins = match bins {
        Some(b) => b.to_vec(),
        None => default_bins(&inferred.iter().map(|t| &t.ground_truth).collect::<Vec<_>>(), 0.1)?,
    };
    let pairs: Vec<(Trajectory, Trajectory)> = inferred
        .iter()
        .map(|t| (t.absolute.clone(), t.ground_truth.clone()))
        .collect();
    let scores = score(&pairs, &bins)?;
    let overlays: Vec<Overlay> = inferred
        .iter()
        .map(|t| {
            Ok(Overlay {
                name: t.name.clone(),
                series: vec![
                    ("ground truth".to_string(), t.ground_truth.clone()),
                    ("estimate".to_string(), t.absolute.clone()),
                    ("constant velocity".to_string(), constant_velocity_baseline(&t.ground_truth)?),
                ],
            })
        })
        .collect::<Result<_>>()?;
    let files = emit_reports(&scores.named(), &overlays, out)?;
    Ok((scores, files))
}

/// Writes the best checkpoint and the log under `out`.
pub fn save_training<T: Real>(out: &Path, outcome: &TrainOutcome<T>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let ckpt = out.join(CHECKPOINT_FILE);
    let mut config = outcome.config.clone();
    config.dropout_rate = 0.0;
    checkpoint::save(&ckpt, &config, &outcome.best)?;
    let log = out.join(LOG_FILE);
    outcome.log.save(&log)?;
    Ok(vec![ckpt, log])
}

/// Loads the splits and trains a fresh model.
pub fn train_on_dataset<T: Real>(
    root: &Path,
    net: NetConfig,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&crate::train::EpochRecord),
) -> Result<TrainOutcome<T>> {
    let manifest = DatasetManifest::load(root)?;
    check_compatible(&net, &manifest)?;
    let train_set = dataset::load_split::<T>(root, &manifest, Split::Train)?;
    let val_set = dataset::load_split::<T>(root, &manifest, Split::Val)?;
    let model = Model::new(net, cfg.seed)?;
    train(model, &train_set, &val_set, cfg, on_epoch)
}

#[derive(Debug, Clone)]
pub struct SmokeReport {
    pub files: Vec<PathBuf>,
    pub log: TrainingLog,
    pub scores: Scores,
    pub seconds: f64,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

fn require_files(files: &[PathBuf]) -> Result<()> {
    match files.iter().find(|f| !f.is_file()) {
        Some(f) => Err(Error::Validation(format!("declared artifact {} is missing", f.display()))),
        None => Ok(()),
    }
}

/// generate (3 trajectories of 24 frames at 32x32) → train 2 epochs with a
/// 16-wide LSTM → infer on the test split → eval, checking every file.
pub fn run_pipeline_smoke(dir: &Path, seed: u64) -> Result<SmokeReport> {
    let start = Instant::now();
    let data = dir.join("data");
    let specs: Vec<(TrajectorySpec, Split)> = [Split::Train, Split::Val, Split::Test]
        .into_iter()
        .zip(dataset::trajectory_seeds(seed, 3))
        .map(|(split, s)| (TrajectorySpec::new(TrajectoryClass::Sharp, 24, s), split))
        .collect();
    let manifest = stage(
        "generate",
        build_dataset(&SceneConfig::new(32, 32, seed), &specs, &data, &DatasetOptions::default()),
    )?;
    let mut files = vec![data.join(dataset::MANIFEST_FILE)];
    for t in &manifest.trajectories {
        files.extend(t.frames.iter().chain(&t.depth).map(|f| data.join(f)));
        files.push(data.join(&t.poses));
    }
    stage("generate", require_files(&files))?;

    let net = NetConfig {
        input_height: 32,
        input_width: 32,
        lstm_hidden: 16,
        inception_widths: vec![[4; 4], [8; 4], [8; 4]],
        ..NetConfig::default()
    };
    let cfg = TrainConfig {
        max_epochs: 2,
        seed,
        strict: true,
        ..TrainConfig::default()
    };
    let model_dir = dir.join("model");
    let outcome = stage("train", train_on_dataset::<f32>(&data, net, &cfg, |_| {}))?;
    let saved = stage("train", save_training(&model_dir, &outcome))?;
    stage("train", require_files(&saved))?;
    let ckpt = stage("train", Checkpoint::load(&model_dir.join(CHECKPOINT_FILE)))?;
    let log_text = stage(
        "train",
        fs::read_to_string(model_dir.join(LOG_FILE)).map_err(|e| Error::io(model_dir.join(LOG_FILE), e)),
    )?;
    let log = stage("train", TrainingLog::from_csv(&log_text))?;
    files.extend(saved);

    let pred_dir = dir.join("pred");
    let inferred = stage("infer", infer_checkpoint(&ckpt, &data, &manifest, Some(Split::Test), None))?;
    let written = stage("infer", write_inference(&pred_dir, &inferred))?;
    for (t, pair) in inferred.iter().zip(written.chunks(2)) {
        let text = stage("infer", fs::read_to_string(&pair[1]).map_err(|e| Error::io(&pair[1], e)))?;
        let back = stage("infer", Trajectory::from_csv(&text))?;
        if back != t.absolute || back.len() != t.ground_truth.len() || t.relative.len() + 1 != back.len() {
            return Err(Error::Stage {
                stage: "infer",
                source: Box::new(Error::Validation(format!("{} does not re-parse to the prediction", pair[1].display()))),
            });
        }
    }
    files.extend(written);

    let (scores, reports) = stage("eval", report_inference(&inferred, None, &dir.join("eval")))?;
    stage("eval", require_files(&reports))?;
    files.extend(reports);
    Ok(SmokeReport {
        files,
        log,
        scores,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn incompatible_frame_size_is_config_error() {
        let manifest = DatasetManifest {
            version: dataset::MANIFEST_VERSION,
            height: 32,
            width: 32,
            frame_interval: 0.1,
            channel_means: [0.0; 8],
            depth_source: DepthSource::Sfs,
            sfs: Default::default(),
            scene: SceneConfig::new(32, 32, 0),
            trajectories: Vec::new(),
        };
        assert!(check_compatible(&NetConfig::default(), &manifest).is_err());
        let small = NetConfig {
            input_height: 32,
            input_width: 32,
            ..NetConfig::default()
        };
        assert!(check_compatible(&small, &manifest).is_ok());
    }

    #[test]
    fn perfect_estimate_scores_zero_and_baselines_do_not() {
        let poses = crate::synth::generate_trajectory(&TrajectorySpec::new(TrajectoryClass::Sharp, 60, 3)).unwrap();
        let gt = Trajectory::uniform(poses, 0.1).unwrap();
        let s = score(&[(gt.clone(), gt)], &[0.2, 0.5]).unwrap();
        for b in [0.2, 0.5] {
            assert_eq!(s.model.at(b).unwrap(), (0.0, 0.0));
            let (zt, zr) = s.zero_motion.at(b).unwrap();
            let (ct, cr) = s.constant_velocity.at(b).unwrap();
            assert!(zt > 0.0 && zr > 0.0 && ct > 0.0 && cr > 0.0);
        }
    }
}
