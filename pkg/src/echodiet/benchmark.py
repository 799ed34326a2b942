"""Synthetic multi-participant benchmark.

Each synthetic participant is a scene with its own static facial
reflectors and noise realisation. Sessions follow a random
but plausible activity grammar: meals alternate intakes with chewing and
the occasional sip; non-eating stretches hold talking, face touches and
idle time.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import labels as L
from .analytics import SegmentConfig, build_report, to_frame_timeline
from .channel_sim import ActivityEntry, ActivityScript, Reflector, Scene, Static, render_scene
from .classifier import ModelConfig, TrainConfig, predict, train
from .dataset import AugmentConfig, assign_labels, augment, slice_windows, split
from .metrics import ConfusionMatrix, confusion, macro_f1
from .signal_core import SensingConfig, compute_echo_profile, differentiate

log = logging.getLogger(__name__)


@dataclass
class BenchmarkConfig:
    n_participants: int = 3
    sessions_per_participant: int = 5
    session_s: int = 120
    noise_rms: float = 0.5
    seed: int = 0
    window_s: float = 2.0
    overlap: float = 0.5
    n_bins: int = 150
    augment: bool = True

    @property
    def total_minutes(self) -> float:
        return self.n_participants * self.sessions_per_participant * self.session_s / 60


def participant_scene(index: int, seed: int, noise_rms: float = 0.5) -> Scene:
    """Scene for one synthetic participant.

    Participants share the default kinematic templates (each activity is still
    jittered per occurrence) and differ in facial geometry, i.e. the range and
    strength of static reflectors, drawn from ``(seed, index)``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 100, index]))

    def u(lo, hi):
        return float(rng.uniform(lo, hi))

    statics = [
        Reflector(Static(u(0.055, 0.07)), u(0.2, 0.4)),  # cheek
        Reflector(Static(u(0.25, 0.35)), u(0.5, 0.9)),  # shoulder
    ]
    return Scene(reflectors=statics, noise_rms=noise_rms,
                 seed=int(np.random.SeedSequence([seed, 200, index]).generate_state(1)[0]))


def session_script(duration_s: int, rng: np.random.Generator) -> ActivityScript:
    """Random activity sequence in whole seconds, cut to ``duration_s``."""
    entries = []
    t = 0

    def add(label, dur):
        nonlocal t
        dur = int(min(dur, duration_s - t))
        if dur > 0:
            entries.append(ActivityEntry(t, t + dur, label))
            t += dur

    while t < duration_s:
        r = rng.random()
        if r < 0.4:
            for _ in range(int(rng.integers(2, 4))):
                add("food_intake", 3)
                add("chewing", int(rng.integers(6, 13)))
                if rng.random() < 0.3:
                    add("drinking", 6)
        elif r < 0.6:
            add("talking", int(rng.integers(6, 16)))
        elif r < 0.8:
            add("face_touch", int(rng.integers(5, 9)))
        else:
            add("null", int(rng.integers(6, 16)))
    return ActivityScript(entries, float(duration_s))


def benchmark_recordings(cfg: BenchmarkConfig):
    """Yield ``(group, session, scene, script)`` for every simulated session."""
    for p in range(cfg.n_participants):
        base = participant_scene(p, cfg.seed, cfg.noise_rms)
        for s in range(cfg.sessions_per_participant):
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 300, p, s]))
            script = session_script(cfg.session_s, rng)
            scene = Scene(base.reflectors, base.noise_rms, base.seed + s,
                          template_overrides=base.template_overrides)
            yield f"p{p + 1}", s, scene, script


def session_samples(scene, script, group, cfg: BenchmarkConfig, sensing=None):
    sensing = sensing or SensingConfig()
    stream, truth = render_scene(scene, script)
    echo = compute_echo_profile(stream, sensing, n_bins=cfg.n_bins)
    diff = differentiate(echo, sensing.differential_mode)
    windows = slice_windows(diff, cfg.window_s, cfg.overlap, cfg.n_bins)
    return assign_labels(windows, truth, cfg.window_s, group), truth


def build_samples(cfg: BenchmarkConfig):
    samples, truths = [], {}
    for group, s, scene, script in benchmark_recordings(cfg):
        got, truth = session_samples(scene, script, group, cfg)
        # Session-unique start times keep group timelines ordered.
        offset = s * cfg.session_s
        for w in got:
            w.start_time_s += offset
        samples.extend(got)
        truths.setdefault(group, []).extend(truth.labels)
    return samples, truths


@dataclass
class FoldResult:
    holdout: str
    macro_f1: float
    confusion: np.ndarray
    train_log: list
    predictions: list = field(default_factory=list)


@dataclass
class BenchmarkResult:
    folds: list
    pooled_confusion: np.ndarray
    pooled_macro_f1: float
    per_class_f1: dict
    seconds: float

    def to_dict(self):
        return {
            "pooled_macro_f1": self.pooled_macro_f1,
            "per_class_f1": self.per_class_f1,
            "folds": {f.holdout: f.macro_f1 for f in self.folds},
            "pooled_confusion": self.pooled_confusion.tolist(),
            "seconds": self.seconds,
        }


def run_benchmark(cfg: BenchmarkConfig | None = None, train_cfg: TrainConfig | None = None,
                  holdouts=None, samples=None) -> BenchmarkResult:
    """Leave-one-participant-out evaluation on simulated data.

    Metrics are pooled over all held-out windows as well as reported per fold.
    """
    cfg = cfg or BenchmarkConfig()
    train_cfg = train_cfg or TrainConfig(seed=cfg.seed)
    start = time.perf_counter()
    if samples is None:
        samples, _ = build_samples(cfg)
    groups = sorted({s.group for s in samples})
    holdouts = groups if holdouts is None else holdouts
    folds = []
    pooled = np.zeros((L.N_CLASSES, L.N_CLASSES), dtype=np.int64)
    for g in holdouts:
        tr, te = split(samples, g)
        if cfg.augment:
            tr = augment(tr, AugmentConfig(seed=cfg.seed))
        result = train(tr, ModelConfig(input_shape=tr[0].tensor.shape), train_cfg)
        preds = predict(result.model, te)
        cm = confusion([s.label for s in te], [p.label for p in preds])
        pooled += cm.counts
        f1 = macro_f1(cm).macro_f1
        log.info("holdout %s macro-F1 %.4f", g, f1)
        folds.append(FoldResult(g, f1, cm.counts, result.log, preds))
    rep = macro_f1(ConfusionMatrix(pooled))
    per_class = {name: float(rep.f1[i]) for i, name in enumerate(L.CLASSES)}
    return BenchmarkResult(folds, pooled, rep.macro_f1, per_class, time.perf_counter() - start)


def episode_report_for(preds, truth_labels, segment_cfg: SegmentConfig | None = None):
    """Episode analytics for one held-out participant's predictions."""
    timeline = to_frame_timeline(preds)
    truth = list(truth_labels)[: len(timeline)]
    return build_report(timeline.labels[: len(truth)], truth, segment_cfg)
