"""Acceptance criteria, one test each, at their stated tolerances.

Every test records a PASS/FAIL line that is printed in the terminal summary.
The desk-scale sweep trains 15 models and takes several minutes on one CPU.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy import stats as sps

from rhe_bench.augment import AugmentationConfig
from rhe_bench.cli import main
from rhe_bench.dataset import LabeledPatch, PathologyLabel, Split, Task
from rhe_bench.experiment import config_from_dict, sweep
from rhe_bench.gradcam import cam_from_maps
from rhe_bench.image import IntensityPatch, equalize_histogram
from rhe_bench.nn.model import ModelConfig, TrainConfig, backward, forward, init_model, weighted_cross_entropy
from rhe_bench.nn.training import train
from rhe_bench.stats import accuracy, f1_score, student_t_two_tailed_p, t_test_from_summary

from conftest import random_patch
from test_stats import brute_force_metrics


def he_violations(patch: IntensityPatch) -> list[str]:
    out = equalize_histogram(patch)
    src = patch.pixels.astype(np.int64).ravel()
    dst = out.pixels.astype(np.int64).ravel()
    problems = []
    if src.min() == src.max():
        if not np.array_equal(src, dst):
            problems.append("constant patch changed")
        return problems
    order = np.argsort(src, kind="stable")
    if np.any(np.diff(dst[order]) < 0):
        problems.append("not monotone")
    if dst[src == src.min()].max() != 0 or dst[src == src.max()].min() != patch.max_value:
        problems.append("range not mapped to [0, L-1]")
    twice = equalize_histogram(out).pixels.astype(np.int64).ravel()
    if np.abs(twice - dst).max() > 1:
        problems.append("HE(HE(x)) differs from HE(x) by more than one level")
    return problems


def test_he_property_suite(criterion):
    start = time.perf_counter()
    gen = np.random.default_rng(20240)
    failures = 0
    checked = 0
    for depth in (8, 16):
        for i in range(1000):
            # every tenth patch is constant to exercise the pass-through rule
            p = random_patch(gen, depth)
            if i % 10 == 0:
                p = IntensityPatch(np.full(p.pixels.shape, p.pixels.flat[0]), depth)
            failures += bool(he_violations(p))
            checked += 1
    worked = equalize_histogram(IntensityPatch(np.array([[52, 52], [154, 200]]), 8)).pixels.ravel().tolist()
    elapsed = time.perf_counter() - start
    ok = failures == 0 and worked == [0, 0, 128, 255] and elapsed < 10
    criterion("HE property suite", ok, f"{checked} patches, {failures} failing, worked example {worked}, {elapsed:.2f}s")
    assert ok


def test_gradient_check(criterion):
    start = time.perf_counter()
    gen = np.random.default_rng(7)
    state = init_model(ModelConfig(input_size=8, conv_blocks=[3, 4], num_classes=3, init_seed=5))
    x = gen.random((3, 1, 8, 8))
    y = np.array([0, 1, 2])
    w = np.array([0.8, 1.2, 1.05])
    logits, cache = forward(state, x)
    _, dlogits = weighted_cross_entropy(logits, y, w)
    grads = backward(state, cache, dlogits)
    h = 1e-5
    worst = 0.0
    count = 0
    for name, theta in state.params.items():
        for i in np.ndindex(theta.shape):
            old = theta[i]
            theta[i] = old + h
            up = weighted_cross_entropy(forward(state, x)[0], y, w)[0]
            theta[i] = old - h
            down = weighted_cross_entropy(forward(state, x)[0], y, w)[0]
            theta[i] = old
            num = (up - down) / (2 * h)
            ana = grads[name][i]
            worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-8))
            count += 1
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and elapsed < 60
    criterion("gradient check", ok, f"{count} parameters, max relative error {worst:.2e}, {elapsed:.2f}s")
    assert ok


def test_statistics_oracle(criterion):
    worst = 0.0
    for t in np.round(np.arange(0.1, 5.0001, 0.1), 10):
        for df in range(1, 31):
            worst = max(worst, abs(student_t_two_tailed_p(float(t), df) - 2 * sps.t.sf(t, df)))
    r = t_test_from_summary(0.9215, 0.0066, 5, 0.9325, 0.0085, 5, "POOLED")
    table_ok = (
        abs(r.t_statistic - (-2.285)) < 1e-3 and r.degrees_of_freedom == 8 and abs(r.p_value - 0.052) <= 1e-3
    )
    gen = np.random.default_rng(99)
    mismatches = 0
    for _ in range(1000):
        k = int(gen.integers(2, 5))
        n = int(gen.integers(1, 30))
        labels = gen.integers(0, k, size=n).tolist()
        preds = gen.integers(0, k, size=n).tolist()
        acc, f1 = brute_force_metrics(preds, labels, k)
        mismatches += accuracy(preds, labels) != acc or f1_score(preds, labels, k) != f1
    ok = worst < 1e-6 and table_ok and mismatches == 0
    detail = (
        f"grid max |dp| {worst:.1e}; summary case t={r.t_statistic:.4f} df={r.degrees_of_freedom:g} "
        f"p={r.p_value:.4f}; metric mismatches {mismatches}/1000"
    )
    criterion("statistics oracle equivalence", ok, detail)
    assert ok


def test_sweep_determinism(tmp_path, criterion):
    raw = {
        "task": "TWO_CLASS",
        "p_values": [0, 0.4, 1],
        "runs_per_p": 2,
        "data": {"synthetic": {"size": 32, "train_counts": [6, 6, 6], "test_counts": [3, 3, 3]}, "seed": 5},
        "model": {"input_size": 32},
        "augment": {"target_size": 32},
        "train": {"epochs": 2, "batch_size": 8},
    }
    cfg_path = tmp_path / "sweep.json"
    cfg_path.write_text(json.dumps(raw), encoding="utf-8")
    for name in ("first", "second"):
        assert main(["sweep", "--config", str(cfg_path), "--out", str(tmp_path / name)]) == 0
    same = {
        report: (tmp_path / "first" / report).read_bytes() == (tmp_path / "second" / report).read_bytes()
        for report in ("runs.csv", "summary.csv", "ttests.json")
    }
    ok = all(same.values())
    criterion("sweep determinism", ok, ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items()))
    assert ok


@pytest.mark.slow
def test_desk_scale_qualitative(tmp_path, criterion):
    start = time.perf_counter()
    cfg = config_from_dict(
        {"task": "TWO_CLASS", "p_values": [0, 0.4, 1], "runs_per_p": 5, "base_seed": 0, "data": {"synthetic": {}}},
        preset="desk",
    )
    params = cfg.data.synthetic_params()
    assert (params.size, params.train_counts, params.test_counts) == (64, (100, 100, 100), (50, 50, 50))
    dataset = cfg.data.load()
    results = sweep(cfg, dataset, tmp_path / "desk")
    acc = {p: np.array([s.accuracy for s in samples]) for p, samples in results.items()}
    mean = {p: float(a.mean()) for p, a in acc.items()}
    sd = {p: float(a.std(ddof=1)) for p, a in acc.items()}
    pooled_sd = math.sqrt((sd[1.0] ** 2 + sd[0.4] ** 2) / 2)
    gated = mean[1.0] < mean[0.4] - pooled_sd
    reported = mean[0.4] >= mean[0.0] - 0.01
    elapsed = time.perf_counter() - start
    table = ", ".join(f"P={p:g} {mean[p]:.4f} ({sd[p]:.4f})" for p in (0.0, 0.4, 1.0))
    criterion(
        "desk-scale qualitative ordering",
        gated,
        f"{table}; need acc(P=1) < acc(P=0.4) - pooled sd {pooled_sd:.4f}; "
        f"reported only: acc(P=0.4) >= acc(P=0) - 0.01 is {reported}; {elapsed / 60:.1f} min",
    )
    assert gated


def test_gradcam_sanity(tmp_path, criterion):
    start = time.perf_counter()
    gen = np.random.default_rng(3)
    act = gen.random((4, 8, 8))
    zero_ok = not cam_from_maps(act, np.zeros_like(act), (32, 32)).any()
    worst = 0.0
    for _ in range(50):
        grads = gen.normal(size=act.shape)
        base = cam_from_maps(act, grads, (32, 32))
        if not base.any():
            continue
        for c in (1e-3, 0.5, 7.0, 1e4):
            worst = max(worst, float(np.abs(cam_from_maps(act, c * grads, (32, 32)) - base).max()))
    scale_ok = worst <= 1e-12

    raw = {
        "task": "TWO_CLASS",
        "data": {"synthetic": {"size": 32, "train_counts": [4, 4, 4], "test_counts": [2, 2, 2]}},
        "model": {"input_size": 32, "conv_blocks": [4, 8]},
        "augment": {"target_size": 32},
        "train": {"epochs": 2},
        "gradcam": {"checkpoint": str(tmp_path / "run" / "checkpoint.rheb"), "count": 3},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(raw), encoding="utf-8")
    assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "run")]) == 0
    assert main(["gradcam", "--config", str(cfg_path), "--out", str(tmp_path / "cams")]) == 0
    names = sorted(p.name for p in (tmp_path / "cams").glob("*_cam.pgm"))
    labels = ("FOLLOW_UP", "NO_FOLLOW_UP")
    pattern_ok = len(names) == 3 and all(
        any(n.endswith(f"_{t}_{p}_cam.pgm") for t in labels for p in labels) and n.startswith("test_")
        for n in names
    )
    elapsed = time.perf_counter() - start
    ok = zero_ok and scale_ok and pattern_ok and elapsed < 10
    criterion(
        "Grad-CAM sanity",
        ok,
        f"zero map {zero_ok}, scale invariance max diff {worst:.1e}, overlays {names}, {elapsed:.2f}s",
    )
    assert ok


def test_overfit_two_samples(criterion):
    def patch(level):
        px = np.full((64, 64), level)
        px[20:40, 24:44] = 65535 - level
        return IntensityPatch(px, 16)

    items = [
        LabeledPatch(patch(9000), PathologyLabel.BENIGN, Split.TRAIN, "a"),
        LabeledPatch(patch(50000), PathologyLabel.BENIGN_WITHOUT_CALLBACK, Split.TRAIN, "b"),
    ]
    desk = config_from_dict({}, preset="desk")
    aug = AugmentationConfig(p_hflip=0, p_vflip=0, p_rotate=0, p_erase=0, target_size=64)
    tcfg = TrainConfig(epochs=200, learning_rate=desk.train.learning_rate)
    _, log = train(desk.model, tcfg, aug, items, Task.TWO_CLASS)
    accs = [r.train_accuracy for r in log.records]
    first = next((r.epoch for r in log.records if r.train_accuracy == 1.0), None)
    ok = accs[-1] == 1.0
    criterion("overfit invariant", ok, f"lr {tcfg.learning_rate:g}, first 100% at epoch {first}, final {accs[-1]:.2f}")
    assert ok
