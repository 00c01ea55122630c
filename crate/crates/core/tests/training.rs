use endovo::pipeline::train_on_dataset;
use endovo::synth::dataset::{self, DatasetOptions};
use endovo::synth::{build_dataset, SceneConfig, Split, TrajectoryClass, TrajectorySpec};
use endovo::train::{train, Sequence, TrainConfig};
use endovo::{Model, NetConfig, Pose, Tensor};

fn tiny_net() -> NetConfig {
    NetConfig {
        input_height: 8,
        input_width: 8,
        lstm_hidden: 4,
        inception_widths: vec![[2; 4], [2; 4]],
        ..NetConfig::default()
    }
}

fn sequence(seed: u64, sign: f64) -> Sequence<f64> {
    let cfg = tiny_net();
    let pairs = (0..4)
        .map(|k| Tensor::from_fn(&cfg.input_shape(), |i| ((i as u64 * 31 + k * 7 + seed) % 17) as f64 / 17.0 - 0.5))
        .collect();
    let quarter = sign * std::f64::consts::FRAC_PI_2;
    let targets = vec![Pose::from_axis_angle([0.5 * sign, 0.0, 0.0], [quarter, 0.0, 0.0]); 4];
    Sequence::new(pairs, targets).unwrap()
}

#[test]
fn patience_one_with_worsening_validation_keeps_epoch_one() {
    // validation wants the opposite motion and the opposite quarter turn, so
    // every epoch of fitting the training target makes it worse
    let train_set = vec![sequence(1, 1.0)];
    let val_set = vec![sequence(1, -1.0)];
    let cfg = TrainConfig {
        max_epochs: 20,
        patience: 1,
        seed: 4,
        strict: true,
        adam: endovo::train::AdamConfig {
            alpha: 1e-2,
            ..Default::default()
        },
        ..TrainConfig::default()
    };
    let run = |cfg: &TrainConfig| train(Model::<f64>::new(tiny_net(), 4).unwrap(), &train_set, &val_set, cfg, |_| {}).unwrap();
    let out = run(&cfg);
    let vals: Vec<f64> = out.log.epochs.iter().map(|r| r.val_loss).collect();
    assert!(vals.windows(2).all(|w| w[1] > w[0]), "{vals:?}");
    assert!(out.stopped_early);
    assert_eq!(out.log.epochs.len(), 2);
    assert_eq!(out.best_epoch, 1);
    let one = run(&TrainConfig { max_epochs: 1, ..cfg });
    assert_eq!(out.best, one.best);
}

#[test]
fn desk_scale_training_cuts_loss_tenfold() {
    let dir = tempfile::tempdir().unwrap();
    let specs: Vec<(TrajectorySpec, Split)> = dataset::trajectory_seeds(8, 4)
        .into_iter()
        .zip([Split::Train, Split::Train, Split::Val, Split::Test])
        .map(|(s, split)| (TrajectorySpec::new(TrajectoryClass::Sharp, 30, s), split))
        .collect();
    build_dataset(&SceneConfig::new(16, 16, 8), &specs, dir.path(), &DatasetOptions::default()).unwrap();
    let net = NetConfig {
        input_height: 16,
        input_width: 16,
        lstm_hidden: 16,
        inception_widths: vec![[4; 4], [8; 4]],
        ..NetConfig::default()
    };
    let cfg = TrainConfig {
        max_epochs: 20,
        patience: 20,
        seed: 1,
        ..TrainConfig::default()
    };
    let out = train_on_dataset::<f32>(dir.path(), net, &cfg, |_| {}).unwrap();
    let first = out.log.initial.as_ref().unwrap().train_loss;
    let last = out.log.last().unwrap().train_loss;
    assert!(last * 10.0 <= first, "{first} -> {last}");
}
