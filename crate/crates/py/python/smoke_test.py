"""Smoke test for the endovo_py extension.

Build first with `cargo build --release -p endovo-py`; the script imports an
installed module if there is one, else the freshly built library.
"""

import importlib.machinery
import importlib.util
import math
import pathlib
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[3]


def load():
    try:
        import endovo_py

        return endovo_py
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libendovo_py.so"
        if lib.exists():
            loader = importlib.machinery.ExtensionFileLoader("endovo_py", str(lib))
            spec = importlib.util.spec_from_file_location("endovo_py", lib, loader=loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            return module
    sys.exit("endovo_py not found; run `cargo build --release -p endovo-py`")


def main():
    ev = load()

    a = ev.Pose.from_axis_angle([0.1, 0.0, 0.2], [0.0, 0.3, 0.0])
    b = ev.Pose.from_axis_angle([0.0, -0.1, 0.05], [0.1, 0.0, 0.0])
    back = a.between(a.compose(b))
    assert back.between(b).translation_norm() < 1e-12
    assert abs(a.rotation_angle() - 0.3) < 1e-12

    poses = ev.generate_trajectory("sharp", 40, seed=3)
    assert len(poses) == 40
    gt = ev.Trajectory([0.1 * k for k in range(40)], poses)
    again = ev.Trajectory.from_csv(gt.to_csv())
    assert again.to_csv() == gt.to_csv() and len(again) == 40

    same = ev.rmse_vs_length(gt, gt, [0.2, 0.5])
    assert all(v == 0.0 for v in same.trans_rmse if v is not None)
    cv = ev.rmse_vs_length(ev.constant_velocity_baseline(gt), gt, [0.2, 0.5])
    assert all(v is None or v > 0.0 for v in cv.trans_rmse)

    rgb, depth = ev.render_frame(poses[0], size=32)
    assert len(rgb) == 3 and len(rgb[0]) == 32 and len(depth[0]) == 32
    gray = [[0.299 * r + 0.587 * g + 0.114 * b for r, g, b in zip(*rows)] for rows in zip(*rgb)]
    d = ev.sfs_depth(gray)
    flat = [v for row in d for v in row]
    assert len(flat) == 32 * 32 and all(math.isfinite(v) for v in flat)

    log = "epoch,train_loss,val_loss,trans_loss,rot_loss,lr,wall_seconds\n1,0.5,0.5,0.4,0.1,0.001,0\n"
    assert abs(ev.calibrate_beta(log) - 4.0) < 1e-12

    with tempfile.TemporaryDirectory() as tmp:
        files = ev.run_smoke(tmp, seed=1)
        assert all(pathlib.Path(f).is_file() for f in files)
        ckpt = ev.Checkpoint.load(str(pathlib.Path(tmp) / "model" / "checkpoint.bin"))
        assert "lstm_hidden=16" in ckpt.config()
        runs = ckpt.infer(str(pathlib.Path(tmp) / "data"))
        name, est, truth = runs[0]
        assert len(est) == len(truth) == 24

    print("endovo_py smoke test passed")


if __name__ == "__main__":
    main()
