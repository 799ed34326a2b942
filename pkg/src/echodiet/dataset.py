"""Labeled sliding windows over differential echo profiles."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np

from . import labels as L
from .errors import ConfigError, CoverageError


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class FrameTimeline:
    """One class label per second."""

    labels: list

    def __post_init__(self):
        self.labels = [L.to_name(x) for x in self.labels]

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, item):
        return self.labels[item]

    def __iter__(self):
        return iter(self.labels)

    def __eq__(self, other):
        if isinstance(other, FrameTimeline):
            return self.labels == other.labels
        return NotImplemented

    def indices(self) -> np.ndarray:
        return np.array([L.CLASS_INDEX[x] for x in self.labels], dtype=np.int64)


@dataclass
class Window:
    tensor: np.ndarray
    start_time_s: float


@dataclass
class WindowedSample:
    tensor: np.ndarray
    label: str
    start_time_s: float
    group: str = ""

    @property
    def label_index(self) -> int:
        return L.CLASS_INDEX[self.label]


@dataclass
class WindowSpec:
    window_s: float = 2.0
    overlap: float = 0.5
    n_bins: int = 150
    frame_rate: int = 83

    def __post_init__(self):
        if self.window_s <= 0:
            raise ConfigError("window length must be positive")
        if not 0 <= self.overlap < 1:
            raise ConfigError("overlap must lie in [0, 1)")
        if self.n_bins < 1:
            raise ConfigError("range bins must be positive")

    @property
    def hop_s(self) -> float:
        return self.window_s * (1 - self.overlap)

    @property
    def window_frames(self) -> int:
        return round_half_up(self.window_s * self.frame_rate)

    def start_frame(self, start_s: float) -> int:
        return round_half_up(start_s * self.frame_rate)

    def n_windows(self, duration_s: float) -> int:
        if duration_s + 1e-9 < self.window_s:
            return 0
        return int(math.floor((duration_s - self.window_s) / self.hop_s + 1e-9)) + 1


def slice_windows(profile, window_s: float = 2.0, overlap: float = 0.5,
                  n_bins: int = 150) -> list[Window]:
    """Cut a differential profile into overlapping, range-cropped windows.

    Column ``j`` of the window starting at second ``s`` is the change into
    echo frame ``s * 83 + j``. The change into the very first frame of a
    stream is unknown and left at zero, which is what gives a ``T`` second
    recording exactly ``floor((T - window) / hop) + 1`` windows.
    """
    from .signal_core import crop_range

    spec = WindowSpec(window_s, overlap, n_bins, profile.frame_rate)
    cropped = crop_range(profile, n_bins).data
    c, r, n = cropped.shape
    padded = np.zeros((c, r, n + 1), dtype=np.float32)
    padded[:, :, 1:] = cropped
    count = spec.n_windows(profile.duration_s)
    width = spec.window_frames
    windows = []
    for k in range(count):
        start_s = k * spec.hop_s
        f0 = spec.start_frame(start_s)
        if f0 + width > padded.shape[2]:
            break
        windows.append(Window(padded[:, :, f0:f0 + width].copy(), start_s))
    return windows


def window_label(seconds) -> str:
    """Majority label, ties broken by :data:`labels.TIE_PRIORITY`."""
    counts = Counter(L.to_name(s) for s in seconds)
    if not counts:
        raise ValueError("no labels to vote on")
    return min(counts, key=lambda lab: (-counts[lab], L.priority_rank(lab)))


def covered_seconds(start_s: float, window_s: float) -> range:
    return range(int(math.floor(start_s + 1e-9)), int(math.ceil(start_s + window_s - 1e-9)))


def assign_labels(windows, timeline: FrameTimeline, window_s: float = 2.0,
                  group: str = "") -> list[WindowedSample]:
    samples = []
    for w in windows:
        secs = covered_seconds(w.start_time_s, window_s)
        if secs.stop > len(timeline):
            raise CoverageError(
                f"window at {w.start_time_s}s needs {secs.stop}s of labels, timeline has {len(timeline)}")
        samples.append(WindowedSample(w.tensor, window_label(timeline[s] for s in secs),
                                      w.start_time_s, group))
    return samples


@dataclass
class AugmentConfig:
    noise_fraction: float = 0.05
    noise_sigma_rel: float = 0.05
    noise_sigma: float | None = None
    mask_fraction: float = 0.05
    seed: int = 0
    keep_originals: bool = False

    def __post_init__(self):
        for name in ("noise_fraction", "mask_fraction"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.noise_sigma is not None and self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")


def _pick(n_total, fraction, seed, stream):
    k = round_half_up(fraction * n_total)
    rng = np.random.default_rng(np.random.SeedSequence([seed, stream]))
    return set(rng.choice(n_total, size=k, replace=False).tolist()) if k else set()


def augment(samples, cfg: AugmentConfig | None = None) -> list[WindowedSample]:
    """Gaussian noise on a fraction of windows; a zeroed range band on another.

    Both selections are independent seeded draws without replacement, and
    every per-window random stream is keyed on ``(seed, index)``, so the
    result does not depend on processing order.
    """
    cfg = cfg or AugmentConfig()
    samples = list(samples)
    n = len(samples)
    if n == 0:
        return []
    noised = _pick(n, cfg.noise_fraction, cfg.seed, 0)
    masked = _pick(n, cfg.mask_fraction, cfg.seed, 1)
    out = []
    changed = []
    for i, s in enumerate(samples):
        if i not in noised and i not in masked:
            out.append(s)
            continue
        x = np.array(s.tensor, copy=True)
        if i in noised:
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2, i]))
            sigma = cfg.noise_sigma if cfg.noise_sigma is not None else cfg.noise_sigma_rel * float(x.std())
            x = x + rng.normal(0.0, sigma, size=x.shape).astype(x.dtype)
        if i in masked:
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 3, i]))
            n_rows = x.shape[-2]
            width = mask_width(n_rows, cfg.mask_fraction)
            lo = int(rng.integers(0, n_rows - width + 1))
            x[..., lo:lo + width, :] = 0
        aug = replace(s, tensor=x)
        if cfg.keep_originals:
            out.append(s)
            changed.append(aug)
        else:
            out.append(aug)
    return out + changed


def mask_width(n_rows: int, fraction: float = 0.05) -> int:
    return min(n_rows, round_half_up(fraction * n_rows))


def split(samples, holdout: str):
    """Leave-one-group-out partition."""
    samples = list(samples)
    groups = {s.group for s in samples}
    if holdout not in groups:
        raise ValueError(f"unknown holdout group {holdout!r}; have {sorted(groups)}")
    train = [s for s in samples if s.group != holdout]
    test = [s for s in samples if s.group == holdout]
    return train, test


def groups_of(samples) -> list[str]:
    return sorted({s.group for s in samples})
