"""Acceptance criteria, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
PASS lines. Criterion 2 trains three full models and takes a few minutes;
everything else completes in seconds.
"""

import json
from dataclasses import replace

import numpy as np
import pytest

from stimkit.cli import main as cli_main
from stimkit.evaluate import mean_fold_f1
from stimkit.flow import farneback_dense, lucas_kanade_grid
from stimkit.nn.gradcheck import grad_check, micro_config
from stimkit.pose import center_sequence, filter_head, load_manifest, sample_windows
from stimkit.synth import MotionParams, clip_rng, gen_clip, gen_dataset, gen_profiles

from test_flow import texture
from test_nn_ops import fd_grad, rel_err


def _report(name, ok, detail):
    print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})", flush=True)
    assert ok, detail


def test_criterion_1_fold_aggregation_reproduces_reported_mean():
    mean = mean_fold_f1([0.833, 0.890, 1.000])
    _report("1 aggregation", abs(mean - 0.9077) <= 0.00005, f"mean_f1 = {mean:.6f}")


@pytest.fixture(scope="module")
def default_cv_run(tmp_path_factory):
    """One full cmd_cv run on the default synthetic dataset, seed 1."""
    root = tmp_path_factory.mktemp("accept_cv")
    data_dir = root / "data"
    assert cli_main(["synth", "-o", str(data_dir), "--seed", "1"]) == 0
    out_dir = root / "out"
    config = {
        "manifest": str(data_dir / "manifest.json"),
        "output_dir": str(out_dir),
        "seed": 1,
    }
    cfg_path = root / "cv.json"
    cfg_path.write_text(json.dumps(config))
    code = cli_main(["cv", "-c", str(cfg_path)])
    return code, out_dir


def test_criterion_2_synthetic_end_to_end(default_cv_run):
    code, out_dir = default_cv_run
    assert code == 0
    report = json.loads((out_dir / "report.json").read_text())
    folds = report["folds"]
    assert len(folds) == 3
    subject_sets = [set(f["test_subjects"]) for f in folds]
    disjoint = all(
        not (a & b) for i, a in enumerate(subject_sets) for b in subject_sets[i + 1 :]
    )
    assert disjoint, "fold subjects overlap"
    assert set().union(*subject_sets) == {f"synth_{i:03d}" for i in range(12)}
    mean_f1 = report["mean_f1"]
    per_fold = ", ".join(f"{f['f1']:.4f}" for f in folds)
    _report(
        "2 synthetic end-to-end",
        mean_f1 >= 0.95,
        f"mean window F1 = {mean_f1:.4f} (folds: {per_fold}), subject-disjoint in all folds",
    )


def test_criterion_3_gradient_integrity():
    from stimkit.nn import ops
    from stimkit.nn.lstm import lstm_backward, lstm_forward

    rng = np.random.default_rng(42)
    worst = {}

    x = rng.standard_normal((2, 6, 6, 3))
    w = rng.standard_normal((3, 3, 3, 4)) * 0.3
    b = rng.standard_normal(4) * 0.1
    dy = rng.standard_normal((2, 6, 6, 4))
    dx, dw, db = ops.conv2d_backward(x, w, dy)
    conv_loss = lambda: float(np.sum(ops.conv2d_forward(x, w, b) * dy))
    worst["conv"] = max(
        rel_err(dx, fd_grad(conv_loss, x, eps=1e-3)),
        rel_err(dw, fd_grad(conv_loss, w, eps=1e-3)),
        rel_err(db, fd_grad(conv_loss, b, eps=1e-3)),
    )

    xp = rng.standard_normal((2, 4, 4, 3))
    dyp = rng.standard_normal((2, 2, 2, 3))
    pool_loss = lambda: float(np.sum(ops.maxpool2_forward(xp)[0] * dyp))
    _, idx = ops.maxpool2_forward(xp)
    worst["pool"] = rel_err(ops.maxpool2_backward(xp.shape, idx, dyp), fd_grad(pool_loss, xp, eps=1e-3))

    xd = rng.standard_normal((3, 5))
    wd = rng.standard_normal((5, 4)) * 0.5
    bd = rng.standard_normal(4) * 0.1
    dyd = rng.standard_normal((3, 4))
    dense_loss = lambda: float(np.sum(ops.dense_forward(xd, wd, bd, "relu")[0] * dyd))
    _, z = ops.dense_forward(xd, wd, bd, "relu")
    ddx, ddw, ddb = ops.dense_backward(xd, wd, z, dyd, "relu")
    worst["dense"] = max(
        rel_err(ddx, fd_grad(dense_loss, xd, eps=1e-3)),
        rel_err(ddw, fd_grad(dense_loss, wd, eps=1e-3)),
        rel_err(ddb, fd_grad(dense_loss, bd, eps=1e-3)),
    )

    wx = rng.standard_normal((3, 16)) * 0.4
    wh = rng.standard_normal((4, 16)) * 0.4
    bl = rng.standard_normal(16) * 0.1
    xs = rng.standard_normal((2, 3, 3))  # three timesteps
    probe = rng.standard_normal((2, 4))
    lstm_loss = lambda: float(np.sum(lstm_forward(xs, wx, wh, bl)[0] * probe))
    _, caches = lstm_forward(xs, wx, wh, bl)
    _, dwx, dwh, dbl = lstm_backward(probe, caches, wx, wh)
    worst["lstm"] = max(
        rel_err(dwx, fd_grad(lstm_loss, wx, eps=1e-3)),
        rel_err(dwh, fd_grad(lstm_loss, wh, eps=1e-3)),
        rel_err(dbl, fd_grad(lstm_loss, bl, eps=1e-3)),
    )

    clip = rng.random((2, 8, 8))
    worst["end-to-end"], _ = grad_check(micro_config(seed=3), clip, 1, epsilon=1e-3)

    detail = ", ".join(f"{k}={v:.2e}" for k, v in worst.items())
    _report("3 gradient integrity", max(worst.values()) < 1e-4, detail)


def test_criterion_4_flow_recovery():
    prev = texture(256, 256)
    nxt = texture(256, 256, shift=(2.0, 1.0))
    fracs = {}
    for name, fn in (("lk", lucas_kanade_grid), ("dense", farneback_dense)):
        flow = fn(prev, nxt)
        err = np.hypot(flow.vectors[flow.valid, 0] - 2.0, flow.vectors[flow.valid, 1] - 1.0)
        fracs[name] = float((err <= 0.5).mean())

    still_lk = lucas_kanade_grid(prev, prev)
    still_fb = farneback_dense(prev, prev)
    zero_ok = (
        np.all(np.abs(still_lk.vectors[still_lk.valid]) <= 1e-6)
        and np.all(np.abs(still_fb.vectors[still_fb.valid]) <= 1e-6)
    )
    ok = fracs["lk"] >= 0.8 and fracs["dense"] >= 0.8 and zero_ok
    _report(
        "4 flow recovery",
        ok,
        f"(2,1) within 0.5px: lk {fracs['lk']:.1%}, dense {fracs['dense']:.1%}; identical frames zero: {zero_ok}",
    )


def test_criterion_5_representation_robustness():
    ratios = []
    for i in range(100):
        rng = clip_rng(1, f"robust_{i:03d}")
        base = gen_profiles(1, rng)[0]
        profile = replace(base, subject_id=f"s{i}", detection_dropout_prob=0.0)
        params = MotionParams("stable", camera_drift_sigma=1.5)
        frames, _ = gen_clip(profile, params, 75, rng=rng, clip_id=f"r{i}")
        heads = [filter_head(f) for f in frames]
        centroids = np.array([h.coords[h.present].mean(axis=0) for h in heads])
        raw_path = float(np.sum(np.hypot(*np.diff(centroids, axis=0).T)))
        windows = sample_windows(
            heads, clip_id=f"r{i}", subject_id=f"s{i}", label="negative", frame_size=(640, 480)
        )
        window_paths = []
        for w in windows:
            fc = center_sequence(w).frame_centroids()
            window_paths.append(float(np.sum(np.hypot(*np.diff(fc, axis=0).T))))
        ratios.append(np.mean(window_paths) / raw_path)
    ratio = float(np.mean(ratios))
    _report(
        "5 representation robustness",
        ratio < 0.2,
        f"post-centering window motion / raw drift path = {ratio:.4f} over 100 clips",
    )


def test_criterion_6_whole_pipeline_determinism(tmp_path):
    data_dir = tmp_path / "data"
    assert cli_main(["synth", "-o", str(data_dir), "--subjects", "6", "--clips-per-subject", "2", "--seed", "7"]) == 0
    digests = []
    for name in ("run1", "run2"):
        out_dir = tmp_path / name
        config = {
            "manifest": str(data_dir / "manifest.json"),
            "output_dir": str(out_dir),
            "seed": 7,
            "raster": {"width": 32, "height": 32},
            "model": {"conv_blocks": [{"filters": 4}, {"filters": 8}], "frame_embedding": 16, "lstm_hidden": 8},
            "train": {"epochs": 3, "batch_size": 8},
        }
        cfg_path = tmp_path / f"{name}.json"
        cfg_path.write_text(json.dumps(config))
        assert cli_main(["cv", "-c", str(cfg_path)]) == 0
        digests.append(
            {
                p.name: p.read_bytes()
                for p in sorted(out_dir.iterdir())
                if p.suffix in (".json", ".csv", ".ckpt")
            }
        )
    same = digests[0] == digests[1]
    files = sorted(digests[0])
    _report("6 determinism", same, f"byte-identical outputs across two runs: {files}")


def test_criterion_7_protocol_fidelity(tmp_path):
    # stand-in for user-supplied keypoints: 27 positive + 27 negative clips
    # across 9 subjects, run through the full protocol (T=7, stride 5,
    # 3 subject-disjoint folds, rotation +-45, zoom 1-2, Adam 1e-4)
    data_dir = tmp_path / "ssbd_like"
    manifest_path = gen_dataset(data_dir, n_subjects=9, clips_per_subject=6, seed=11)
    manifest = load_manifest(manifest_path)
    labels = [c.label for c in manifest.clips]
    assert labels.count("positive") == 27 and labels.count("negative") == 27
    assert len({c.subject_id for c in manifest.clips}) >= 6

    out_dir = tmp_path / "out"
    config = {
        "manifest": str(manifest_path),
        "output_dir": str(out_dir),
        "seed": 11,
        "k": 3,
        "window": {"T": 7, "stride": 5},
        "augment": {"rotation_range": [-45, 45], "zoom_range": [1.0, 2.0]},
        "train": {"learning_rate": 1e-4, "epochs": 2},
    }
    cfg_path = tmp_path / "protocol.json"
    cfg_path.write_text(json.dumps(config))
    code = cli_main(["cv", "-c", str(cfg_path)])
    assert code == 0

    report = json.loads((out_dir / "report.json").read_text())
    assert len(report["folds"]) == 3
    subject_sets = [set(f["test_subjects"]) for f in report["folds"]]
    disjoint = all(not (a & b) for i, a in enumerate(subject_sets) for b in subject_sets[i + 1 :])
    f1s = [f["f1"] for f in report["folds"]]
    mean_ok = abs(report["mean_f1"] - sum(f1s) / 3) < 1e-12
    counted = sum(f["confusion"][k] for f in report["folds"] for k in ("tp", "fp", "fn", "tn"))
    rows = (out_dir / "predictions.csv").read_text().splitlines()
    ok = disjoint and mean_ok and code == 0 and counted == len(rows) - 1
    _report(
        "7 protocol fidelity",
        ok,
        f"54-clip balanced run completed: 3 disjoint folds, {counted} windows scored, "
        f"mean F1 field consistent",
    )
