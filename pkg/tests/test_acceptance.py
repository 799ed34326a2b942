"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line."""
import contextlib
import random
import time

import numpy as np
import pytest

from echodiet.analytics import SegmentConfig, build_report, count_intakes, detect_eating_episode
from echodiet.benchmark import run_benchmark
from echodiet.classifier import cosine_lr, focal_loss, focal_loss_grad, softmax
from echodiet.dataset import AugmentConfig, WindowSpec, augment, round_half_up
from echodiet.metrics import cohens_kappa, confusion, macro_f1, mae
from echodiet.signal_core import SensingConfig, compute_echo_profile, cross_correlate, differentiate
from helpers import ACCEPTANCE, run_pipeline, static_stream
from test_analytics import oracle_report, random_timeline
from test_dataset import samples_of
from test_metrics import oracle_counts, oracle_kappa, oracle_macro_f1, oracle_mae


@contextlib.contextmanager
def criterion(number, title):
    info = {}
    try:
        yield info
    except BaseException:
        line = f"criterion {number:2d} FAIL  {title}  {info.get('detail', '')}".rstrip()
        ACCEPTANCE[number] = line
        print(line)
        raise
    line = f"criterion {number:2d} PASS  {title}  {info.get('detail', '')}".rstrip()
    ACCEPTANCE[number] = line
    print(line)


def test_01_range_constants():
    with criterion(1, "range constants") as info:
        cfg = SensingConfig()
        assert cfg.bin_resolution_m == pytest.approx(0.00343, abs=1e-15)
        assert cfg.max_range_m == pytest.approx(2.058, abs=1e-12)
        assert cfg.range_bins_full == 600
        assert cfg.distance_m(150) * 100 == pytest.approx(51.45, abs=1e-9)
        assert cfg.frames_per_second == 83
        assert cfg.frames_for_duration(2.0) == 166
        assert WindowSpec(window_s=2.0).window_frames == 166
        info["detail"] = "3.43 mm, 2.058 m, 150 bins = 51.45 cm, 83 fps, 166 frames"


def test_02_ranging_accuracy():
    with criterion(2, "ranging accuracy +/-1 bin") as info:
        start = time.perf_counter()
        cfg = SensingConfig()
        worst = 0
        for d in (0.10, 0.343, 0.50, 1.00):
            echo = compute_echo_profile(static_stream([d], 1.0), cfg)
            err = np.abs(np.argmax(echo.data, axis=1) - round(d / 0.00343))
            worst = max(worst, int(err.max()))
        elapsed = time.perf_counter() - start
        info["detail"] = f"worst error {worst} bins, {elapsed:.1f} s"
        assert worst <= 1
        assert elapsed < 10


def test_03_correlation_oracle():
    with criterion(3, "FFT correlation vs direct") as info:
        start = time.perf_counter()
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(200):
            n = int(rng.integers(1, 1201))
            extra = int(rng.integers(0, 1201))
            tmpl, rx = rng.standard_normal(n), rng.standard_normal(n + extra)
            fast = cross_correlate(rx, tmpl)
            direct = np.array([sum(rx[l + k] * tmpl[k] for k in range(n)) if n < 8
                               else float(np.dot(rx[l:l + n], tmpl)) for l in range(extra + 1)])
            worst = max(worst, float(np.max(np.abs(fast - direct)) / np.max(np.abs(direct))))
        elapsed = time.perf_counter() - start
        info["detail"] = f"max relative error {worst:.2e}, {elapsed:.1f} s"
        assert worst <= 1e-6
        assert elapsed < 30


def test_04_differential_nullity():
    with criterion(4, "static differential vanishes") as info:
        echo = compute_echo_profile(static_stream([0.06, 0.3, 0.75], 2.0), SensingConfig())
        diff = differentiate(echo)
        ratio = float(np.abs(diff.data).max() / np.abs(echo.data).max())
        info["detail"] = f"max|diff| / max|echo| = {ratio:.1e}"
        assert ratio <= 1e-9


def test_05_numerics():
    with criterion(5, "focal loss, gradient, cosine schedule") as info:
        rng = np.random.default_rng(5)
        z = rng.normal(scale=2, size=(32, 6))
        y = rng.integers(0, 6, 32)
        p = softmax(z)
        ce = float(np.mean(-np.log(p[np.arange(32), y])))
        ce_err = abs(focal_loss(p, y, gamma=0) - ce)
        assert ce_err <= 1e-9
        worst = 0.0
        for gamma in (0.0, 0.5, 1.0, 2.0, 5.0):
            g = focal_loss_grad(z, y, gamma)
            num = np.zeros_like(z)
            for idx in np.ndindex(*z.shape):
                zp, zm = z.copy(), z.copy()
                zp[idx] += 1e-6
                zm[idx] -= 1e-6
                num[idx] = (focal_loss(softmax(zp), y, gamma) - focal_loss(softmax(zm), y, gamma)) / 2e-6
            worst = max(worst, float(np.max(np.abs(g - num)) / np.max(np.abs(num))))
        assert worst <= 1e-4
        assert abs(cosine_lr(0) - 1e-2) <= 1e-12
        assert abs(cosine_lr(30) - 0.0) <= 1e-12
        assert abs(cosine_lr(15) - 5e-3) <= 1e-12
        info["detail"] = f"CE gap {ce_err:.1e}, grad rel err {worst:.1e}"


@pytest.mark.slow
def test_06_synthetic_end_to_end():
    with criterion(6, "synthetic benchmark macro-F1 >= 0.90") as info:
        result = run_benchmark()
        folds = ", ".join(f"{f.holdout} {f.macro_f1:.3f}" for f in result.folds)
        info["detail"] = (f"macro-F1 {result.pooled_macro_f1:.3f} ({folds}), "
                          f"{result.seconds / 60:.1f} min")
        assert result.pooled_macro_f1 >= 0.90


def test_07_analytics_oracle():
    with criterion(7, "episode analytics vs brute force") as info:
        assert count_intakes(["food_intake", "chewing", "chewing"]) == 1
        assert SegmentConfig().intake_threshold == 5
        five = ["food_intake", "chewing", "chewing", "null"] * 5 + ["null"] * 250
        assert detect_eating_episode(five, mode="truth")
        assert not detect_eating_episode(five[4:] + ["null"] * 4, mode="truth")
        rng = random.Random(77)
        keys = ("fnr", "fpr", "mae_intakes_eating", "mae_intakes_non_eating", "mae_chew_eating",
                "mae_chew_non_eating")
        for _ in range(500):
            truth = random_timeline(rng, rng.randint(0, 1200))
            pred = [x if rng.random() < 0.8 else rng.choice(["null", "chewing", "food_intake"])
                    for x in truth]
            got = build_report(pred, truth).to_dict()
            want = oracle_report(pred, truth)
            assert [tuple(s.values()) for s in got["segments"]] == want["segments"]
            assert all(got[k] == want[k] for k in keys)
        info["detail"] = "500 pairs identical"


def test_08_metrics_oracle():
    with criterion(8, "metrics vs brute force") as info:
        rng = random.Random(88)
        for _ in range(500):
            n, k = rng.randint(1, 30), rng.randint(2, 6)
            t = [rng.randrange(k) for _ in range(n)]
            p = [rng.randrange(k) for _ in range(n)]
            cm = confusion(t, p)
            assert cm.counts.tolist() == oracle_counts(t, p, 6)
            assert macro_f1(cm).macro_f1 == oracle_macro_f1(t, p, 6)
            assert cohens_kappa(t, p) == oracle_kappa(t, p)
            assert mae(t, p) == oracle_mae(t, p)
        # p_o = 0.5 and p_e = 0.5
        assert cohens_kappa(list("xxyy"), list("xyxy")) == 0.0
        info["detail"] = "500 instances identical, kappa example 0"


def test_09_determinism(tmp_path):
    with criterion(9, "pipeline reruns are byte-identical") as info:
        a = run_pipeline(tmp_path / "run1", seed=3)
        b = run_pipeline(tmp_path / "run2", seed=3)
        files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        differing = [str(f) for f in files if (a / f).read_bytes() != (b / f).read_bytes()]
        info["detail"] = f"{len(files)} artifacts, {len(differing)} differ"
        assert not differing, differing


def test_10_augmentation_exactness():
    with criterion(10, "augmentation counts and mask width") as info:
        for n in (20, 100, 1000):
            before = samples_of(n)
            after = augment(before, AugmentConfig(seed=n))
            noised = masked = 0
            for x, y in zip(before, after):
                zero_rows = np.nonzero(~y.tensor.any(axis=(0, 2)))[0]
                if zero_rows.size:
                    masked += 1
                    assert zero_rows.size == 8 and zero_rows[-1] - zero_rows[0] == 7
                keep = np.ones(x.tensor.shape[1], bool)
                keep[zero_rows] = False
                noised += not np.array_equal(x.tensor[:, keep], y.tensor[:, keep])
            assert noised == round_half_up(0.05 * n) and masked == round_half_up(0.05 * n)
        info["detail"] = "N = 20, 100, 1000: 1/5/50 noised and masked, 8 rows each"
