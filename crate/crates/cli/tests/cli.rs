use std::path::Path;
use std::process::{Command, Output};

use endovo::net::checkpoint;
use endovo::pose::Trajectory;
use endovo::{NetConfig, NetworkParams, Tensor};

fn endovo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_endovo"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_lists_flags_with_defaults() {
    let cases: &[(&str, &[&str])] = &[
        ("generate", &["--class", "[default: sharp]", "--frames", "[default: 200]", "--size", "--split", "--out"]),
        ("sfs", &["--input", "--out", "--iterations", "--light", "[default: 0,0,1]", "--albedo", "--epsilon"]),
        (
            "train",
            &["--epochs", "[default: 200]", "--lr", "--beta", "--calibrate-beta", "--hidden", "[default: 64]", "--patience", "--window", "--strict-determinism", "--precision", "--adam"],
        ),
        ("infer", &["--checkpoint", "--data", "--out", "--split", "[default: test]", "--depth-source"]),
        ("eval", &["--est", "--gt", "--bins", "--align", "[default: none]", "--baselines"]),
        ("calibrate-beta", &["--log"]),
        ("smoke", &["--dir", "--seed"]),
    ];
    for (sub, needles) in cases {
        let o = endovo(&[sub, "--help"]);
        assert!(o.status.success(), "{sub}");
        let text = String::from_utf8_lossy(&o.stdout);
        for n in *needles {
            assert!(text.contains(n), "`{sub} --help` lacks {n}:\n{text}");
        }
        assert!(text.contains("--config"), "{sub}");
    }
}

#[test]
fn failure_is_nonzero_and_stage_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let o = endovo(&["train", "--data", p(&dir.path().join("missing")), "--out", p(&dir.path().join("m")), "--epochs", "1"]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("stage=train") && err.contains("level=ERROR"), "{err}");

    let o = endovo(&["calibrate-beta", "--log", p(&dir.path().join("none.csv"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("stage=calibrate-beta"));
}

#[test]
fn config_file_is_read_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.csv");
    std::fs::write(
        &log,
        "epoch,train_loss,val_loss,trans_loss,rot_loss,lr,wall_seconds\n1,0.5,0.5,0.4,0.1,0.001,0\n",
    )
    .unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, format!("# beta from a finished run\nlog = {}\n", log.display())).unwrap();
    let o = endovo(&["calibrate-beta", "--config", p(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "4");

    std::fs::write(&cfg, "log = /nonexistent/log.csv\n").unwrap();
    let o = endovo(&["calibrate-beta", "--config", p(&cfg), "--log", p(&log)]);
    assert!(o.status.success(), "{}", stderr(&o));

    std::fs::write(&cfg, "lgo = x\n").unwrap();
    let o = endovo(&["calibrate-beta", "--config", p(&cfg)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown setting"));
}

#[test]
fn logs_are_single_line_records() {
    let dir = tempfile::tempdir().unwrap();
    let o = endovo(&["generate", "--frames", "3", "--trajectories", "3", "--size", "16", "--out", p(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(!err.is_empty());
    for line in err.lines() {
        assert!(line.starts_with("ts=") && line.contains(" level=") && line.contains("stage="), "{line}");
    }
}

#[test]
fn infer_row_counts_and_zero_weights() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = endovo(&["generate", "--frames", "7", "--trajectories", "3", "--size", "16", "--seed", "2", "--out", p(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = NetConfig {
        input_height: 16,
        input_width: 16,
        lstm_hidden: 4,
        inception_widths: vec![[2; 4], [2; 4]],
        ..NetConfig::default()
    };
    let ckpt = dir.path().join("zero.bin");
    // zero weights everywhere; the regressor bias alone sets the output
    let mut params = NetworkParams::<f32>::zeros(&cfg).unwrap();
    params.regressor.bias = Tensor::from_slice(&[0.01, 0.0, 0.02, 1.0, 0.0, 0.01, 0.0]).unwrap();
    checkpoint::save(&ckpt, &cfg, &params).unwrap();
    let out = dir.path().join("pred");
    let o = endovo(&["infer", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(&out), "--split", "all"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for k in 0..3 {
        let t = out.join(format!("traj_{k:03}"));
        let rel = Trajectory::from_csv(&std::fs::read_to_string(t.join("relative.csv")).unwrap()).unwrap();
        let abs = Trajectory::from_csv(&std::fs::read_to_string(t.join("poses.csv")).unwrap()).unwrap();
        assert_eq!((rel.len(), abs.len()), (6, 7));
        assert!(rel.poses.windows(2).all(|w| w[0] == w[1]));
    }
}

#[test]
fn smoke_pipeline_is_fast_complete_and_repeatable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let start = std::time::Instant::now();
    for d in [&a, &b] {
        let o = endovo(&["smoke", "--dir", p(d.path()), "--seed", "5"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert!(start.elapsed().as_secs() < 2 * 300);
    for f in ["model/checkpoint.bin", "model/training_log.csv", "eval/summary.txt", "eval/curve_model.csv"] {
        assert!(a.path().join(f).is_file(), "{f}");
    }
    let poses = "pred/traj_002/poses.csv";
    assert_eq!(
        std::fs::read(a.path().join(poses)).unwrap(),
        std::fs::read(b.path().join(poses)).unwrap()
    );
}
