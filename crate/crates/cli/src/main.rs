use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};

use endovo::eval::{self, Alignment};
use endovo::net::checkpoint::Checkpoint;
use endovo::pipeline;
use endovo::pose::Trajectory;
use endovo::sfs::{self, SfsConfig};
use endovo::synth::{self, dataset, DatasetManifest, DepthSource, SceneConfig, Split, TrajectoryClass, TrajectorySpec};
use endovo::train::{calibrate_beta, AdamConfig, AdamVariant, TrainConfig, TrainingLog};
use endovo::{Error, NetConfig, Precision, Result};

mod config;
mod logging;

/// Endoscopic capsule visual odometry: synthetic data, shape from shading,
/// recurrent pose regression and evaluation.
///
/// Every flag can also come from a `key=value` file passed with `--config`,
/// keyed by the long flag name (`sfs-iterations` or `sfs_iterations`). Flags
/// on the command line win over the file, and the file wins over defaults.
#[derive(Parser, Debug)]
#[command(name = "endovo", version)]
struct Cli {
    /// Flat key=value settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset of tube-scene trajectories.
    Generate(GenerateArgs),
    /// Recover a depth map from one image.
    Sfs(SfsArgs),
    /// Train the pose regressor on a dataset.
    Train(TrainArgs),
    /// Predict relative and absolute poses for a dataset split.
    Infer(InferArgs),
    /// Score estimated trajectories against ground truth.
    Eval(EvalArgs),
    /// Print the translation/rotation loss ratio from a finished training log.
    CalibrateBeta(CalibrateArgs),
    /// Generate, train, infer and evaluate on a tiny dataset.
    Smoke(SmokeArgs),
}

#[derive(clap::Args, Debug)]
struct GenerateArgs {
    /// incremental, scan-with-loops or sharp.
    #[arg(long, default_value = "sharp")]
    class: String,
    #[arg(long, default_value_t = 200)]
    frames: usize,
    #[arg(long, default_value_t = 7)]
    trajectories: usize,
    /// Per-frame translation limit in meters; path length follows as half
    /// of this times the frame count.
    #[arg(long)]
    max_speed: Option<f64>,
    /// Per-frame rotation limit in radians.
    #[arg(long)]
    max_angular_speed: Option<f64>,
    /// Square frame size in pixels.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train, validation and test shares.
    #[arg(long, default_value = "0.7,0.15,0.15")]
    split: String,
    /// Depth channel fed to the network: sfs or true.
    #[arg(long, default_value = "sfs")]
    depth_source: String,
    #[arg(long, default_value_t = 50)]
    sfs_iterations: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct SfsArgs {
    /// RGB or grayscale image.
    #[arg(long)]
    input: PathBuf,
    /// 16-bit grayscale PNG; raw little-endian f32 values go to `<out>.f32`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    iterations: usize,
    /// Direction toward the light, `lx,ly,lz`.
    #[arg(long, default_value = "0,0,1")]
    light: String,
    #[arg(long, default_value_t = 1.0)]
    albedo: f64,
    #[arg(long, default_value_t = 1e-2)]
    epsilon: f64,
}

#[derive(clap::Args, Debug)]
struct TrainArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Receives checkpoint.bin, training_log.csv and run_config.txt.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Train once with beta = 1, set beta to the final loss ratio, train again.
    #[arg(long)]
    calibrate_beta: bool,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    /// Truncated backpropagation window, in frame pairs.
    #[arg(long, default_value_t = 10)]
    window: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Zero wall times in the log so reruns are byte-identical.
    #[arg(long)]
    strict_determinism: bool,
    /// f32 or f64.
    #[arg(long, default_value = "f32")]
    precision: String,
    /// printed or standard.
    #[arg(long, default_value = "printed")]
    adam: String,
}

#[derive(clap::Args, Debug)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Receives `<trajectory>/relative.csv` and `<trajectory>/poses.csv`.
    #[arg(long)]
    out: PathBuf,
    /// train, val, test or all.
    #[arg(long, default_value = "test")]
    split: String,
    /// Override the dataset's depth channel: sfs or true.
    #[arg(long)]
    depth_source: Option<String>,
}

#[derive(clap::Args, Debug)]
struct EvalArgs {
    /// Estimated poses; repeat to pool several trajectories.
    #[arg(long, required = true)]
    est: Vec<PathBuf>,
    /// Ground truth, one per `--est`, same order.
    #[arg(long, required = true)]
    gt: Vec<PathBuf>,
    /// `a,b,c` or `start:stop:step` in meters; default 0.1 m steps to the
    /// 90th percentile of path length.
    #[arg(long)]
    bins: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// none or scale (diagnostic only).
    #[arg(long, default_value = "none")]
    align: String,
    /// Also score the zero-motion and constant-velocity baselines.
    #[arg(long)]
    baselines: bool,
}

#[derive(clap::Args, Debug)]
struct CalibrateArgs {
    /// training_log.csv of a run with beta = 1.
    #[arg(long)]
    log: PathBuf,
}

#[derive(clap::Args, Debug)]
struct SmokeArgs {
    /// Working directory; a fresh temporary one when omitted.
    #[arg(long)]
    dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T> {
    s.parse()
}

fn parse_triple(s: &str, what: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("{what} `{s}` is not three numbers")))?;
    v.try_into().map_err(|_| Error::Config(format!("{what} `{s}` is not three numbers")))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let class: TrajectoryClass = parse(&a.class)?;
    let shares = parse_triple(&a.split, "split")?;
    let splits = dataset::assign_splits(a.trajectories, shares)?;
    let specs: Vec<(TrajectorySpec, Split)> = dataset::trajectory_seeds(a.seed, a.trajectories)
        .into_iter()
        .zip(splits)
        .map(|(s, split)| {
            let mut spec = TrajectorySpec::new(class, a.frames, s);
            if let Some(v) = a.max_speed {
                spec.max_speed = v;
                spec.length = 0.5 * v * a.frames.saturating_sub(1) as f64;
            }
            if let Some(v) = a.max_angular_speed {
                spec.max_angular_speed = v;
            }
            (spec, split)
        })
        .collect();
    let opts = dataset::DatasetOptions {
        sfs: SfsConfig {
            iterations: a.sfs_iterations,
            ..SfsConfig::default()
        },
        depth_source: parse(&a.depth_source)?,
        ..Default::default()
    };
    let m = synth::build_dataset(&SceneConfig::new(a.size, a.size, a.seed), &specs, &a.out, &opts)?;
    log::info!("stage=generate frames={} out={}", m.frame_count(), a.out.display());
    Ok(())
}

fn sfs_command(a: &SfsArgs) -> Result<()> {
    let img = image::open(&a.input).map_err(|e| Error::Format {
        path: a.input.clone(),
        msg: e.to_string(),
    })?;
    let rgb = dataset::rgb_from_image(&img.to_rgb8());
    let cfg = SfsConfig {
        iterations: a.iterations,
        albedo: a.albedo,
        epsilon: a.epsilon,
        ..SfsConfig::default()
    }
    .with_light(parse_triple(&a.light, "light")?)?;
    let depth = sfs::tsai_shah_depth(&sfs::rgb_to_intensity(&rgb)?, &cfg)?;
    let [h, w] = [depth.values.shape()[0], depth.values.shape()[1]];
    let v = depth.values.data();
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &x| (l.min(x), u.max(x)));
    let range = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u16> = v.iter().map(|&x| ((x - lo) / range * 65535.0).round() as u16).collect();
    let png = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(w as u32, h as u32, pixels)
        .expect("buffer matches dimensions");
    png.save(&a.out).map_err(|e| Error::Format {
        path: a.out.clone(),
        msg: e.to_string(),
    })?;
    let mut sidecar = a.out.clone().into_os_string();
    sidecar.push(".f32");
    dataset::write_depth_f32(Path::new(&sidecar), &depth.values)?;
    log::info!(
        "stage=sfs input={} valid={} degenerate={} out={}",
        a.input.display(),
        depth.valid_count(),
        depth.degenerate,
        a.out.display()
    );
    Ok(())
}

fn train_once<T: endovo::Real>(a: &TrainArgs, beta: f64, out: &Path) -> Result<TrainingLog> {
    let net = NetConfig {
        lstm_hidden: a.hidden,
        precision: parse(&a.precision)?,
        ..NetConfig::default()
    };
    let manifest = DatasetManifest::load(&a.data)?;
    let net = NetConfig {
        input_height: manifest.height,
        input_width: manifest.width,
        ..net
    };
    let cfg = TrainConfig {
        max_epochs: a.epochs,
        adam: AdamConfig {
            alpha: a.lr,
            variant: parse::<AdamVariant>(&a.adam)?,
            ..AdamConfig::default()
        },
        patience: a.patience,
        dropout_rate: a.dropout,
        window: a.window,
        beta,
        seed: a.seed,
        strict: a.strict_determinism,
        ..TrainConfig::default()
    };
    let outcome = pipeline::train_on_dataset::<T>(&a.data, net, &cfg, |r| {
        log::info!(
            "stage=train epoch={} train_loss={:.6} val_loss={:.6} trans_loss={:.6} rot_loss={:.6}",
            r.epoch,
            r.train_loss,
            r.val_loss,
            r.trans_loss,
            r.rot_loss
        )
    })?;
    pipeline::save_training(out, &outcome)?;
    log::info!(
        "stage=train best_epoch={} stopped_early={} out={}",
        outcome.best_epoch,
        outcome.stopped_early,
        out.display()
    );
    Ok(outcome.log)
}

fn train_command(a: &TrainArgs, settings: &[(String, String, &str)]) -> Result<()> {
    create_dir(&a.out)?;
    write_text(&a.out.join("run_config.txt"), &config::render_file(settings))?;
    let precision: Precision = parse(&a.precision)?;
    let run = |beta: f64, out: &Path| match precision {
        Precision::F32 => train_once::<f32>(a, beta, out),
        Precision::F64 => train_once::<f64>(a, beta, out),
    };
    if a.calibrate_beta {
        let pre = a.out.join("preliminary");
        let log = run(1.0, &pre)?;
        let beta = calibrate_beta(&log)?;
        write_text(&a.out.join("beta.txt"), &format!("{beta}\n"))?;
        log::info!("stage=calibrate-beta beta={beta}");
        run(beta, &a.out)?;
    } else {
        run(a.beta, &a.out)?;
    }
    Ok(())
}

fn infer_command(a: &InferArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let manifest = DatasetManifest::load(&a.data)?;
    let split = match a.split.as_str() {
        "all" => None,
        s => Some(parse::<Split>(s)?),
    };
    let source = a.depth_source.as_deref().map(parse::<DepthSource>).transpose()?;
    let inferred = pipeline::infer_checkpoint(&ckpt, &a.data, &manifest, split, source)?;
    pipeline::write_inference(&a.out, &inferred)?;
    let n = inferred.len().max(1) as f64;
    log::info!(
        "stage=infer trajectories={} prep_ms_per_frame={:.2} net_ms_per_pair={:.2} out={}",
        inferred.len(),
        inferred.iter().map(|t| t.prep_seconds_per_frame).sum::<f64>() / n * 1e3,
        inferred.iter().map(|t| t.net_seconds_per_pair).sum::<f64>() / n * 1e3,
        a.out.display()
    );
    Ok(())
}

fn eval_command(a: &EvalArgs) -> Result<()> {
    if a.est.len() != a.gt.len() {
        return Err(Error::Config(format!(
            "{} --est files but {} --gt files",
            a.est.len(),
            a.gt.len()
        )));
    }
    let alignment: Alignment = parse(&a.align)?;
    let load = |p: &PathBuf| -> Result<Trajectory> {
        Trajectory::from_csv(&read_text(p)?).map_err(|e| Error::Format {
            path: p.clone(),
            msg: e.to_string(),
        })
    };
    let mut pairs = Vec::new();
    for (e, g) in a.est.iter().zip(&a.gt) {
        let gt = load(g)?;
        let est = eval::align(&load(e)?, &gt, alignment)?;
        pairs.push((est, gt));
    }
    let bins = match &a.bins {
        Some(b) => eval::parse_bins(b)?,
        None => eval::default_bins(&pairs.iter().map(|(_, g)| g).collect::<Vec<_>>(), 0.1)?,
    };
    let (curves, overlays) = if a.baselines {
        let s = pipeline::score(&pairs, &bins)?;
        (s.named(), Vec::new())
    } else {
        let refs: Vec<(&Trajectory, &Trajectory)> = pairs.iter().map(|(e, g)| (e, g)).collect();
        (vec![("model".to_string(), eval::rmse_vs_length_pooled(&refs, &bins)?)], Vec::new())
    };
    let mut overlays: Vec<eval::Overlay> = overlays;
    for (k, (e, g)) in pairs.iter().enumerate() {
        overlays.push(eval::Overlay {
            name: format!("trajectory_{k}"),
            series: vec![("ground truth".into(), g.clone()), ("estimate".into(), e.clone())],
        });
    }
    let files = eval::emit_reports(&curves, &overlays, &a.out)?;
    log::info!("stage=eval files={} out={}", files.len(), a.out.display());
    Ok(())
}

fn calibrate_command(a: &CalibrateArgs) -> Result<()> {
    let log = TrainingLog::from_csv(&read_text(&a.log)?).map_err(|e| Error::Format {
        path: a.log.clone(),
        msg: e.to_string(),
    })?;
    println!("{}", calibrate_beta(&log)?);
    Ok(())
}

fn smoke_command(a: &SmokeArgs) -> Result<()> {
    let tmp;
    let dir = match &a.dir {
        Some(d) => d.clone(),
        None => {
            tmp = tempfile::tempdir().map_err(|e| Error::Io {
                path: std::env::temp_dir(),
                source: e,
            })?;
            tmp.path().to_path_buf()
        }
    };
    let report = pipeline::run_pipeline_smoke(&dir, a.seed)?;
    log::info!(
        "stage=smoke files={} epochs={} seconds={:.1} dir={}",
        report.files.len(),
        report.log.epochs.len(),
        report.seconds,
        dir.display()
    );
    Ok(())
}

fn run(cli: Cli, matches: &ArgMatches) -> Result<()> {
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let root = Cli::command();
    let settings = config::resolved(root.find_subcommand(name).expect("parsed subcommand exists"), sub);
    log::info!("stage=config {}", config::render_line(&settings));
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Sfs(a) => sfs_command(a),
        Command::Train(a) => train_command(a, &settings),
        Command::Infer(a) => infer_command(a),
        Command::Eval(a) => eval_command(a),
        Command::CalibrateBeta(a) => calibrate_command(a),
        Command::Smoke(a) => smoke_command(a),
    }
}

fn stage_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Generate(_) => "generate",
        Command::Sfs(_) => "sfs",
        Command::Train(_) => "train",
        Command::Infer(_) => "infer",
        Command::Eval(_) => "eval",
        Command::CalibrateBeta(_) => "calibrate-beta",
        Command::Smoke(_) => "smoke",
    }
}

fn main() -> ExitCode {
    logging::init();
    let args: Vec<String> = std::env::args().collect();
    let args = match config::merge_config_file(&Cli::command(), args) {
        Ok(a) => a,
        Err(e) => {
            log::error!("stage=config error=\"{e}\"");
            return ExitCode::from(2);
        }
    };
    let matches = Cli::command().get_matches_from(args);
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let stage = stage_name(&cli.command);
    match run(cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("stage={stage} error=\"{e}\"");
            ExitCode::FAILURE
        }
    }
}
