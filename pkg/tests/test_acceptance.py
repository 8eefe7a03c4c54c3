"""Acceptance criteria, each checked at its stated tolerance.

Every check records one PASS/FAIL line, shown in the terminal summary.
Criterion 8 is report-only and long (two 2,000-iteration runs); it runs when
``PUCKLOC_DIRECTIONAL=1`` is set.
"""

import csv
import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest
import torch
from scipy.optimize import minimize_scalar

from oracles import (
    analytic_grad,
    brute_prf,
    central_fd,
    fine_grid_auc,
    five_zone_brute,
    nine_zone_brute,
    random_prediction_set,
    rel_err,
)
from puckloc.data import EventLabel, load_dataset, read_manifest
from puckloc.encoding import build_puck_gt, gaussian_bins
from puckloc.inference import SlidingWindowConfig, infer_trajectory, write_trajectory
from puckloc.metrics import auc, event_prf, phi_curve, zone_accuracy
from puckloc.model import ModelConfig, PuckNet, load_checkpoint, read_checkpoint, save_checkpoint
from puckloc.objective import event_loss, multitask_loss, puck_loss
from puckloc.rink import FIVE_ZONE, NINE_ZONE, RinkPoint
from puckloc.synth import GeneratorConfig, generate_dataset, generate_video
from puckloc.trainer import ClipSource, TrainConfig, predict, train

pytestmark = pytest.mark.acceptance

MEMORIZE_SEED = 1


def test_c01_default_shapes(criterion):
    t0 = time.perf_counter()
    torch.manual_seed(0)
    model = PuckNet(ModelConfig()).eval()
    with torch.no_grad():
        pred, feats = model(torch.rand(1, 3, 16, 256, 256), torch.rand(1, 1, 256, 256), return_features=True)
    elapsed = time.perf_counter() - t0
    got = feats.shapes()
    expected = {
        "F_v": (4, 32, 32, 256),
        "F_p": (32, 32, 8),
        "F_cat": (4, 32, 32, 264),
        "F_cat_prime": (4, 32, 32, 132),
        "F_a": (4, 32, 32, 256),
        "F_o": (4, 32, 32, 256),
    }
    heads = (tuple(pred.p_w.shape), tuple(pred.p_h.shape), tuple(pred.p_e.shape))
    ok = got == expected and heads == ((1, 200), (1, 85), (1, 4)) and elapsed < 60
    criterion(1, ok, f"feature shapes {'match' if got == expected else got}; heads {heads}; {elapsed:.1f} s (< 60 s)")
    assert ok


def test_c02_gradients(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {"puck": 0.0, "event": 0.0, "multi_s": 0.0, "multi_L": 0.0}

    def dist(n):
        v = rng.uniform(0.05, 1.0, n)
        return torch.tensor(v / v.sum(), dtype=torch.float64)

    for _ in range(100):
        pw = torch.tensor(rng.uniform(0.05, 0.95, 200), dtype=torch.float64)
        ph = torch.tensor(rng.uniform(0.05, 0.95, 85), dtype=torch.float64)
        wg, hg = dist(200), dist(85)
        for f, x in ((lambda x: puck_loss(x, ph, wg, hg)[2], pw), (lambda x: puck_loss(pw, x, wg, hg)[2], ph)):
            worst["puck"] = max(worst["puck"], rel_err(analytic_grad(f, x), central_fd(f, x.clone())))

        pe, label = dist(4), torch.tensor(int(rng.integers(4)))
        f = lambda x: event_loss(x, label)  # noqa: E731
        worst["event"] = max(worst["event"], rel_err(analytic_grad(f, pe), central_fd(f, pe.clone())))

        losses = torch.tensor(rng.uniform(0.01, 3.0, 3), dtype=torch.float64)
        s = torch.tensor(rng.uniform(-1.5, 1.5, 3), dtype=torch.float64)
        f = lambda x: multitask_loss(losses[0], losses[1], losses[2], x)  # noqa: E731
        worst["multi_s"] = max(worst["multi_s"], rel_err(analytic_grad(f, s), central_fd(f, s.clone())))
        f = lambda x: multitask_loss(x[0], x[1], x[2], s)  # noqa: E731
        worst["multi_L"] = max(worst["multi_L"], rel_err(analytic_grad(f, losses), central_fd(f, losses.clone())))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 120
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    criterion(2, ok, f"max relative error over 100 instances: {detail} (< 1e-4); {elapsed:.1f} s (< 120 s)")
    assert ok


def test_c03_attention_residual(criterion):
    torch.manual_seed(0)
    cfg = ModelConfig()
    model = PuckNet(cfg).eval()
    frames, heat = torch.rand(1, 3, 16, 256, 256), torch.rand(1, 1, 256, 256)
    with torch.no_grad():
        _, zero = model(frames, heat, return_features=True, gate=0.0)
        _, one = model(frames, heat, return_features=True, gate=1.0)
    bitwise = torch.equal(zero.F_o, zero.F_v)
    dev = float((one.F_o - 2 * one.F_v).abs().max())
    ok = bitwise and dev <= 1e-6
    criterion(3, ok, f"gate 0: F_o == F_v bitwise {bitwise}; gate 1: max |F_o - 2 F_v| = {dev:.1e} (<= 1e-6)")
    assert ok


def test_c04_gt_encoder(criterion):
    rng = np.random.default_rng(4)
    sum_dev = 0.0
    for w, h, sigma in zip(rng.uniform(0, 200, 1000), rng.uniform(0, 85, 1000), rng.uniform(0.5, 100, 1000)):
        gt = build_puck_gt(RinkPoint(w, h), sigma)
        sum_dev = max(sum_dev, abs(gt.w_gt.sum() - 1), abs(gt.h_gt.sum() - 1))
    ratio_dev = 0.0
    for sigma in range(1, 31):
        for center, n in ((100, 200), (42, 85)):
            for normalize in (True, False):
                g = gaussian_bins(center + 0.5, n, sigma, normalize=normalize)
                for d in (sigma, -sigma):
                    if 0 <= center + d < n:
                        ratio_dev = max(ratio_dev, abs(g[center + d] / g[center] - math.exp(-0.5)))
    whole_feet = build_puck_gt(RinkPoint(44, 5), 30)
    bins = (int(np.argmax(whole_feet.w_gt)), int(np.argmax(whole_feet.h_gt)))
    ok = sum_dev <= 1e-9 and ratio_dev <= 1e-9 and bins == (43, 4)
    criterion(4, ok, f"max |sum - 1| = {sum_dev:.1e}; max peak-ratio error {ratio_dev:.1e}; "
                     f"(w=44, h=5, sigma=30) peaks at bins {bins} (expected (43, 4))")
    assert ok


def test_c05_metric_oracles(criterion):
    rng = np.random.default_rng(5)
    classes = list(EventLabel)
    auc_dev, zone_ok, prf_ok, mono_ok, axis_ok = 0.0, True, True, True, True
    for _ in range(50):
        preds, gts = random_prediction_set(rng, int(rng.integers(1, 300)))
        for axis in ("both", "x", "y"):
            auc_dev = max(auc_dev, abs(auc(preds, gts, axis) - fine_grid_auc(preds, gts, axis)))
        for partition, brute in ((FIVE_ZONE, five_zone_brute), (NINE_ZONE, nine_zone_brute)):
            hits = [brute(p) == brute(g) for p, g in zip(preds, gts)]
            z = zone_accuracy(preds, gts, partition)
            # compare integer tallies: hit count overall and per ground-truth zone
            zone_ok &= round(z.overall * len(hits) / 100) == sum(hits)
            for k, count in z.counts.items():
                sel = [h for h, g in zip(hits, gts) if brute(g) == k]
                zone_ok &= count == len(sel)
                if sel:
                    zone_ok &= round(z.per_zone[k] * count / 100) == sum(sel)
        gt_l = [classes[i] for i in rng.integers(0, 4, 200)]
        pr_l = [classes[i] for i in rng.integers(0, 4, 200)]
        prf, brute = event_prf(pr_l, gt_l), brute_prf(pr_l, gt_l)
        for name, (p, r, f) in brute.items():
            prf_ok &= (abs(prf.precision[name] - p) < 1e-9 and abs(prf.recall[name] - r) < 1e-9
                       and abs(prf.f1[name] - f) < 1e-9)
        mono_ok &= bool(np.all(np.diff(phi_curve(preds, gts)) >= 0))
        joint = auc(preds, gts)
        axis_ok &= auc(preds, gts, "x") >= joint and auc(preds, gts, "y") >= joint
    ok = auc_dev < 0.2 and zone_ok and prf_ok and mono_ok and axis_ok
    criterion(5, ok, f"max |auc - fine grid| = {auc_dev:.2e} (< 0.2); zone tallies exact {zone_ok}; "
                     f"P/R/F1 exact {prf_ok}; phi monotone {mono_ok}; per-axis >= joint {axis_ok}")
    assert ok


def test_c06_multitask_reduction(criterion):
    rng = np.random.default_rng(6)
    dev = 0.0
    f64 = lambda v: torch.tensor(v, dtype=torch.float64)  # noqa: E731
    for lw, lh, le in rng.uniform(0, 10, (100, 3)):
        out = multitask_loss(f64(lw), f64(lh), f64(le), torch.zeros(3, dtype=torch.float64)).item()
        dev = max(dev, abs(out - (lw + lh + le)))
    stat = 0.0
    for c in (1e-3, 0.05, 0.5, 1.0, 2.0, 7.5):
        for i in range(3):
            def f(s):
                losses = [f64(0.0)] * 3
                losses[i] = f64(c)
                sig = torch.zeros(3, dtype=torch.float64)
                sig[i] = s
                return multitask_loss(*losses, sig).item()

            res = minimize_scalar(f, bracket=(-3, 3), method="brent", options={"xtol": 1e-12})
            stat = max(stat, abs(math.exp(2 * res.x) - 2 * c))
    ok = dev <= 1e-12 and stat <= 1e-6
    criterion(6, ok, f"s=0 reduction error {dev:.1e} (<= 1e-12); max |sigma^2 - 2c| = {stat:.1e} (<= 1e-6)")
    assert ok


# -- memorization -------------------------------------------------------------


def _train_set_puck_loss(model, source):
    """Mean eval-mode L_puck over the whole training set."""
    _, frames, heat, w_gt, h_gt, _ = source.batch(list(range(len(source))), "eval")
    model.eval()
    with torch.no_grad():
        pred = model(frames, heat)
        return float(puck_loss(pred.p_w, pred.p_h, w_gt, h_gt)[2])


@pytest.fixture(scope="module")
def memorization(tmp_path_factory):
    root = tmp_path_factory.mktemp("memorize")
    generate_dataset(20, root / "data", seed=0, config=GeneratorConfig.preset("test", frame_format="rawvid"))
    records, split = load_dataset(root / "data")
    cfg = ModelConfig.preset("test", multitask=False)
    torch.manual_seed(MEMORIZE_SEED)
    model = PuckNet(cfg)
    source = ClipSource([records[i] for i in split.train], cfg)
    initial_eval = _train_set_puck_loss(model, source)
    tcfg = TrainConfig.preset("test", seed=MEMORIZE_SEED, checkpoint_dir=str(root / "run"))
    t0 = time.perf_counter()
    result = train(model, (records, split), tcfg)
    elapsed = time.perf_counter() - t0
    final_eval = _train_set_puck_loss(model, source)
    preds = predict(model, source)
    floor = np.mean([
        -(w * np.log(w)).sum() / 200 - (h * np.log(h)).sum() / 85
        for w, h in (source.targets(r) for r in source.records)
    ])
    return {
        "n_train": len(split.train),
        "iters": result.iterations,
        "batch": tcfg.batch_size,
        "elapsed": elapsed,
        "initial": result.history[0]["L_puck"],
        "final": float(np.mean([r["L_puck"] for r in result.history[-25:]])),
        "initial_eval": initial_eval,
        "final_eval": final_eval,
        "floor": float(floor),
        "auc": auc([p.location for p in preds], [p.gt_location for p in preds]),
    }


def test_c07a_memorization_loss_drop(memorization, criterion):
    m = memorization
    ratio = m["final"] / m["initial"]
    excess = (m["final_eval"] - m["floor"]) / (m["initial_eval"] - m["floor"])
    ok = ratio < 0.10 and m["elapsed"] <= 900
    criterion("7a", ok, f"{m['n_train']} clips, {m['iters']} iters, batch {m['batch']}: final/initial train L_puck "
                        f"{m['final']:.5f}/{m['initial']:.5f} = {ratio:.3f} (< 0.10); eval-mode "
                        f"{m['final_eval']:.5f}/{m['initial_eval']:.5f}; target-entropy floor {m['floor']:.5f}, "
                        f"excess over floor ratio {excess:.3f}; {m['elapsed']:.0f} s (<= 900 s)")
    assert ok


def test_c07b_memorization_auc(memorization, criterion):
    m = memorization
    ok = m["auc"] >= 95 and m["elapsed"] <= 900
    criterion("7b", ok, f"train-set AUC {m['auc']:.2f} (>= 95); {m['elapsed']:.0f} s (<= 900 s)")
    assert ok


# -- directional --------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.skipif(os.environ.get("PUCKLOC_DIRECTIONAL") != "1", reason="set PUCKLOC_DIRECTIONAL=1 to run")
def test_c08_directional_sampling(tmp_path, criterion):
    generate_dataset(200, tmp_path / "data", seed=8, config=GeneratorConfig.preset("test", frame_format="rawvid"))
    records, split = load_dataset(tmp_path / "data")
    results = {}
    for sampling in ("random", "constant"):
        torch.manual_seed(8)
        model = PuckNet(ModelConfig.preset("test", multitask=False))
        tcfg = TrainConfig.preset("test", seed=8, max_iters=2000, lr_drop_iter=1000, eval_every=200,
                                  sampling=sampling)
        results[sampling] = train(model, (records, split), tcfg).best_metric
    direction = results["random"] >= results["constant"]
    # report-only: the line records the direction, the test never gates on it
    criterion(8, True, f"(report-only) best val AUC random {results['random']:.2f} vs constant "
                       f"{results['constant']:.2f}; random >= constant: {direction}")


# -- sliding window -----------------------------------------------------------


def test_c09_sliding_window(tmp_path, criterion):
    video = generate_video(10.0, tmp_path / "video", GeneratorConfig.preset("test", frame_format="rawvid"),
                           seed=9, video_id="v")
    torch.manual_seed(9)
    ckpt = save_checkpoint(tmp_path / "m.ckpt", PuckNet(ModelConfig.preset("test")))
    cfg = SlidingWindowConfig(window_s=2, stride_s=1)
    outputs = []
    for run in range(2):
        model, _ = load_checkpoint(ckpt)
        traj = infer_trajectory(video, model, cfg)
        outputs.append((len(traj), write_trajectory(traj, tmp_path / f"t{run}.csv")[0].read_bytes()))
    n = outputs[0][0]
    same = outputs[0][1] == outputs[1][1]
    ok = n == 9 and same
    criterion(9, ok, f"10 s / l=2 / s=1 -> {n} points (expected 9); repeat run byte-identical {same}")
    assert ok


# -- end to end ---------------------------------------------------------------


def _cli(*args):
    proc = subprocess.run([sys.executable, "-m", "puckloc", *map(str, args)], capture_output=True, text=True)
    return proc.returncode, proc.stdout + proc.stderr


MANIFEST_KEYS = {"clip_id", "frames_path", "n_frames", "fps", "width", "height", "puck_w_ft", "puck_h_ft",
                 "event", "player_boxes", "split"}


def test_c10_end_to_end(tmp_path, criterion):
    t0 = time.perf_counter()
    steps = [
        ("generate", ["generate", "--tier", "test", "--n-clips", 20, "--seed", 10, "--out", tmp_path / "data"]),
        ("train", ["train", "--tier", "test", "--data", tmp_path / "data", "--out", tmp_path / "run"]),
        ("eval", ["eval", "--tier", "test", "--checkpoint", tmp_path / "run" / "best.ckpt", "--data",
                  tmp_path / "data", "--split", "test", "--out", tmp_path / "eval"]),
        ("make-video", ["make-video", "--tier", "test", "--duration", 10, "--out", tmp_path / "video",
                        "--video-id", "v"]),
        ("infer", ["infer", "--tier", "test", "--checkpoint", tmp_path / "run" / "best.ckpt", "--video",
                   tmp_path / "video" / "v.video.json", "--out", tmp_path / "infer"]),
    ]
    codes = {}
    for name, argv in steps:
        codes[name], out = _cli(*argv)
        if codes[name] != 0:
            print(out)
            break
    elapsed = time.perf_counter() - t0

    problems = []
    if all(c == 0 for c in codes.values()) and len(codes) == len(steps):
        lines = (tmp_path / "data" / "manifest.jsonl").read_text().splitlines()
        if len(lines) != 20 or any(set(json.loads(line)) != MANIFEST_KEYS for line in lines):
            problems.append("manifest")
        read_manifest(tmp_path / "data")
        payload = read_checkpoint(tmp_path / "run" / "best.ckpt")
        if not {"model_config", "iteration", "state_dict"} <= set(payload):
            problems.append("checkpoint")
        load_checkpoint(tmp_path / "run" / "best.ckpt", ModelConfig.preset("test"))
        report = json.loads((tmp_path / "eval" / "eval_report.json").read_text())
        if not {"n", "auc", "auc_x", "auc_y", "phi_curve", "zone5", "zone9"} <= set(report) or not (
                0 <= report["auc"] <= 100):
            problems.append("eval report")
        with open(tmp_path / "infer" / "trajectory.csv") as fh:
            rows = list(csv.DictReader(fh))
        if len(rows) != 9 or not all(0 <= float(r["w_ft"]) <= 200 and 0 <= float(r["h_ft"]) <= 85 for r in rows):
            problems.append("trajectory")
    ok = len(codes) == len(steps) and all(c == 0 for c in codes.values()) and not problems and elapsed < 1800
    criterion(10, ok, f"exit codes {codes}; schema problems {problems or 'none'}; {elapsed:.0f} s (< 1800 s)")
    assert ok
