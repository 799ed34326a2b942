"""Synthetic two-microphone recordings of scripted activity scenes.

Each reflector delays and attenuates the continuous transmit train by its
round-trip time. Scripted activities drive one moving reflector through
kinematic templates (jaw oscillation, hand approach, ...); static
reflectors model the face and the frame of the glasses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import labels as L
from .dataset import FrameTimeline
from .errors import ConfigError, SceneError
from .signal_core import AudioStream, SensingConfig, TransmitTrain

MIN_RANGE_M = 0.02
GAIN_FLOOR_M = 0.05
KNOT_RATE_HZ = 200


class Static:
    def __init__(self, range_m: float):
        self.range_m = float(range_m)

    def __call__(self, t):
        return np.full(np.shape(t), self.range_m)

    def to_dict(self):
        return {"kind": "static", "range_m": self.range_m}


class Sinusoid:
    def __init__(self, center_m, amplitude_m, rate_hz, phase=0.0):
        self.center_m = float(center_m)
        self.amplitude_m = float(amplitude_m)
        self.rate_hz = float(rate_hz)
        self.phase = float(phase)

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.center_m + self.amplitude_m * np.sin(2 * np.pi * self.rate_hz * t + self.phase)

    def to_dict(self):
        return {"kind": "sinusoid", "center_m": self.center_m, "amplitude_m": self.amplitude_m,
                "rate_hz": self.rate_hz, "phase": self.phase}


class PiecewiseLinear:
    def __init__(self, times, ranges):
        self.times = np.asarray(times, dtype=np.float64)
        self.ranges = np.asarray(ranges, dtype=np.float64)
        if self.times.shape != self.ranges.shape or self.times.ndim != 1 or self.times.size < 1:
            raise ConfigError("piecewise trajectory needs matching 1-D knot arrays")
        if np.any(np.diff(self.times) <= 0):
            raise ConfigError("piecewise trajectory knot times must increase")

    def __call__(self, t):
        return np.interp(t, self.times, self.ranges)

    def to_dict(self):
        return {"kind": "piecewise", "times": self.times.tolist(), "ranges": self.ranges.tolist()}


def trajectory_from_dict(d):
    kind = d.get("kind")
    try:
        if kind == "static":
            return Static(d["range_m"])
        if kind == "sinusoid":
            return Sinusoid(d["center_m"], d["amplitude_m"], d["rate_hz"], d.get("phase", 0.0))
        if kind == "piecewise":
            return PiecewiseLinear(d["times"], d["ranges"])
    except KeyError as e:
        raise ConfigError(f"trajectory of kind {kind!r} is missing {e}") from None
    raise ConfigError(f"unknown trajectory kind {kind!r}")


@dataclass
class Reflector:
    trajectory: object
    reflectivity: float = 1.0
    visible_to: tuple = (0, 1)

    def __post_init__(self):
        if not 0 <= self.reflectivity <= 1:
            raise SceneError(f"reflectivity must lie in [0, 1], got {self.reflectivity}")
        self.visible_to = tuple(int(m) for m in self.visible_to)

    def to_dict(self):
        return {"trajectory": self.trajectory.to_dict(), "reflectivity": self.reflectivity,
                "visible_to": list(self.visible_to)}

    @classmethod
    def from_dict(cls, d):
        if "trajectory" not in d:
            raise ConfigError("reflector needs a trajectory")
        return cls(trajectory_from_dict(d["trajectory"]), float(d.get("reflectivity", 1.0)),
                   tuple(d.get("visible_to", (0, 1))))


# Kinematic template defaults. Distances in metres, rates in Hz, durations
# in seconds. These are synthetic benchmark settings chosen to keep the
# classes separable, not measurements of human motion.
DEFAULT_TEMPLATES = {
    "chewing": {"center_m": 0.12, "amplitude_m": 0.01, "rate_hz": 1.5},
    "food_intake": {"far_m": 0.45, "near_m": 0.08, "approach_s": 1.5, "retreat_s": 1.5},
    "drinking": {"far_m": 0.40, "near_m": 0.10, "approach_s": 1.5, "hold_s": 2.0,
                 "retreat_s": 1.5, "tremor_m": 0.002, "tremor_hz": 0.8},
    "talking": {"center_m": 0.10, "amplitude_m": 0.004, "rate_hz": 3.0},
    "face_touch": {"far_m": 0.45, "near_m": 0.05, "approach_s": 1.5, "retreat_s": 1.0,
                   "tremor_m": 0.002, "tremor_hz": 2.0},
    "null": {"min_m": 0.65, "max_m": 0.95, "step_s": 2.0},
}

DEFAULT_JITTER = {"range": 0.05, "rate": 0.1, "phase": True}


@dataclass
class KinematicTemplate:
    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in DEFAULT_TEMPLATES:
            raise ConfigError(f"unknown kinematic template {self.name!r}")
        self.params = {**DEFAULT_TEMPLATES[self.name], **self.params}

    def knots(self, duration_s, rng, jitter=None):
        """Range knots (local time, metres) sampled at KNOT_RATE_HZ over [0, duration)."""
        jitter = DEFAULT_JITTER if jitter is None else jitter
        n = max(1, int(round(duration_s * KNOT_RATE_HZ)))
        t = np.arange(n) / KNOT_RATE_HZ
        p = self.params
        jr = float(jitter.get("range", 0.0))
        jf = float(jitter.get("rate", 0.0))

        def scale(x, frac):
            return x * (1 + rng.uniform(-frac, frac)) if frac else x

        phase = rng.uniform(0, 2 * np.pi) if jitter.get("phase", False) else 0.0
        if self.name in ("chewing", "talking"):
            r = Sinusoid(scale(p["center_m"], jr), scale(p["amplitude_m"], jr),
                         scale(p["rate_hz"], jf), phase)(t)
        elif self.name == "food_intake":
            r = _approach_hold_retreat(t, scale(p["far_m"], jr), scale(p["near_m"], jr),
                                       scale(p["approach_s"], jf), 0.0,
                                       scale(p["retreat_s"], jf), duration_s)
        elif self.name == "drinking":
            r = _approach_hold_retreat(t, scale(p["far_m"], jr), scale(p["near_m"], jr),
                                       scale(p["approach_s"], jf), scale(p["hold_s"], jf),
                                       scale(p["retreat_s"], jf), duration_s)
            r = r + _hold_tremor(r, scale(p["near_m"], 0), t, p["tremor_m"],
                                 scale(p["tremor_hz"], jf), phase)
        elif self.name == "face_touch":
            far, near = scale(p["far_m"], jr), scale(p["near_m"], jr)
            approach, retreat = scale(p["approach_s"], jf), scale(p["retreat_s"], jf)
            hold = max(0.0, duration_s - approach - retreat)
            r = _approach_hold_retreat(t, far, near, approach, hold, retreat, duration_s)
            r = r + _hold_tremor(r, near, t, p["tremor_m"], scale(p["tremor_hz"], jf), phase)
        else:
            step = p["step_s"]
            m = int(math.ceil(duration_s / step)) + 1
            r = np.interp(t, np.arange(m) * step, rng.uniform(p["min_m"], p["max_m"], size=m))
        return t, r


def _approach_hold_retreat(t, far, near, approach, hold, retreat, duration):
    total = approach + hold + retreat
    if total > duration:
        k = duration / total
        approach, hold, retreat = approach * k, hold * k, retreat * k
    xs = [0.0, approach, approach + hold, approach + hold + retreat]
    ys = [far, near, near, far]
    return np.interp(t, xs, ys)


def _hold_tremor(r, near, t, amp, rate, phase):
    # Tremor only while the hand rests at the face.
    at_face = np.isclose(r, near, atol=1e-9)
    return np.where(at_face, amp * np.sin(2 * np.pi * rate * t + phase), 0.0)


@dataclass
class ActivityEntry:
    start_s: float
    end_s: float
    label: str
    template: str | None = None

    def __post_init__(self):
        self.label = L.to_name(self.label)
        self.template = self.template or self.label


@dataclass
class ActivityScript:
    entries: list
    total_duration_s: float | None = None

    def __post_init__(self):
        if not self.entries:
            raise ValueError("activity script is empty")
        if self.total_duration_s is None:
            self.total_duration_s = self.entries[-1].end_s
        prev = 0.0
        for e in self.entries:
            if not math.isclose(e.start_s, prev, abs_tol=1e-9) or e.end_s <= e.start_s:
                raise ConfigError(
                    f"script entries must be sorted, contiguous and non-empty (entry at {e.start_s}s)")
            prev = e.end_s
        if not math.isclose(prev, self.total_duration_s, abs_tol=1e-9):
            raise ConfigError("script entries must cover the total duration")

    def label_at(self, t: float) -> str:
        for e in self.entries:
            if e.start_s <= t < e.end_s:
                return e.label
        return self.entries[-1].label

    def timeline(self) -> FrameTimeline:
        n = int(math.floor(self.total_duration_s + 1e-9))
        return FrameTimeline([self.label_at(s + 0.5) for s in range(n)])

    def to_dict(self):
        return {"total_duration_s": self.total_duration_s,
                "entries": [{"start_s": e.start_s, "end_s": e.end_s, "label": e.label,
                             "template": e.template} for e in self.entries]}

    @classmethod
    def from_dict(cls, d):
        try:
            entries = [ActivityEntry(float(e["start_s"]), float(e["end_s"]), e["label"],
                                     e.get("template")) for e in d["entries"]]
        except (KeyError, TypeError) as e:
            raise ConfigError(f"malformed script entry: {e}") from None
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if not entries:
            raise ValueError("activity script is empty")
        return cls(entries, d.get("total_duration_s"))


@dataclass
class Scene:
    reflectors: list = field(default_factory=list)
    noise_rms: float = 0.0
    seed: int = 0
    sensing: SensingConfig = field(default_factory=SensingConfig)
    activity_reflectivity: float = 1.0
    activity_visible_to: tuple = (0, 1)
    template_overrides: dict = field(default_factory=dict)
    jitter: dict = field(default_factory=lambda: dict(DEFAULT_JITTER))

    def __post_init__(self):
        if self.noise_rms < 0:
            raise SceneError("noise_rms must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def to_dict(self):
        return {"reflectors": [r.to_dict() for r in self.reflectors], "noise_rms": self.noise_rms,
                "seed": self.seed, "activity_reflectivity": self.activity_reflectivity,
                "activity_visible_to": list(self.activity_visible_to),
                "template_overrides": self.template_overrides, "jitter": self.jitter}

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("scene must be a JSON object")
        known = {"reflectors", "noise_rms", "seed", "activity_reflectivity",
                 "activity_visible_to", "template_overrides", "jitter"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scene fields: {sorted(unknown)}")
        try:
            return cls(
                reflectors=[Reflector.from_dict(r) for r in d.get("reflectors", [])],
                noise_rms=float(d.get("noise_rms", 0.0)),
                seed=int(d.get("seed", 0)),
                activity_reflectivity=float(d.get("activity_reflectivity", 1.0)),
                activity_visible_to=tuple(d.get("activity_visible_to", (0, 1))),
                template_overrides=dict(d.get("template_overrides", {})),
                jitter={**DEFAULT_JITTER, **d.get("jitter", {})},
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"invalid scene: {e}") from None


def script_trajectory(scene: Scene, script: ActivityScript) -> PiecewiseLinear:
    """Trajectory of the activity reflector across the whole script."""
    times, ranges = [], []
    for i, e in enumerate(script.entries):
        rng = np.random.default_rng(np.random.SeedSequence([scene.seed, 1, i]))
        tmpl = KinematicTemplate(e.template, scene.template_overrides.get(e.template, {}))
        t, r = tmpl.knots(e.end_s - e.start_s, rng, scene.jitter)
        times.append(e.start_s + t)
        ranges.append(r)
    times.append([script.total_duration_s])
    ranges.append([ranges[-1][-1]])
    return PiecewiseLinear(np.concatenate(times), np.concatenate(ranges))


def delay_and_attenuate(tx, ranges, sensing: SensingConfig | None = None,
                        reflectivity: float = 1.0) -> np.ndarray:
    """Echo of a periodic transmit train off a reflector at per-sample ranges.

    ``output[k] = gain(r_k) * tx(k - 2 r_k fs / c)`` with
    ``gain = reflectivity / max(r, 5 cm)^2``.

    ``tx`` is either one sampled period of the train, read periodically with
    linear interpolation at fractional delays, or a callable evaluating the
    continuous-time train at fractional sample positions (exact delays).
    """
    sensing = sensing or SensingConfig()
    ranges = np.asarray(ranges, dtype=np.float64)
    if ranges.size and (ranges.min() <= MIN_RANGE_M or ranges.max() > sensing.max_range_m + 1e-12):
        raise SceneError(
            f"reflector range [{ranges.min():.4f}, {ranges.max():.4f}] m outside "
            f"({MIN_RANGE_M}, {sensing.max_range_m}] m")
    delay = 2.0 * ranges * sensing.sample_rate / sensing.speed_of_sound
    near_int = np.abs(delay - np.round(delay)) < 1e-9
    delay = np.where(near_int, np.round(delay), delay)
    pos = np.arange(ranges.size) - delay
    gain = reflectivity / np.maximum(ranges, GAIN_FLOOR_M) ** 2
    if callable(tx):
        return gain * tx(pos)
    tx = np.asarray(tx, dtype=np.float64)
    base = np.floor(pos)
    frac = pos - base
    i0 = base.astype(np.int64) % tx.size
    i1 = (i0 + 1) % tx.size
    return gain * ((1.0 - frac) * tx[i0] + frac * tx[i1])


def render_scene(scene: Scene, script: ActivityScript, n_mics: int = 2,
                 include_activity: bool = True):
    """Render microphone streams and the per-second ground truth.

    Reflectors are summed in a fixed order (scene reflectors, then the
    activity reflector) so output is bit-identical for a given seed.
    """
    if script is None or not script.entries:
        raise ValueError("activity script is empty")
    if script.total_duration_s < 1:
        raise ValueError("script must last at least one second")
    cfg = scene.sensing
    n = int(round(script.total_duration_s * cfg.sample_rate))
    t = np.arange(n) / cfg.sample_rate
    tx = TransmitTrain(cfg)
    mics = np.zeros((n_mics, n))

    reflectors = list(scene.reflectors)
    if include_activity:
        reflectors.append(Reflector(script_trajectory(scene, script),
                                    scene.activity_reflectivity, scene.activity_visible_to))
    for refl in reflectors:
        contrib = delay_and_attenuate(tx, refl.trajectory(t), cfg)
        contrib *= refl.reflectivity
        for m in refl.visible_to:
            if not 0 <= m < n_mics:
                raise SceneError(f"reflector visible to unknown microphone {m}")
            mics[m] += contrib
    if scene.noise_rms > 0:
        rng = np.random.default_rng(np.random.SeedSequence([scene.seed, 0]))
        mics += rng.normal(0.0, scene.noise_rms, size=mics.shape)
    return AudioStream(mics, cfg.sample_rate), script.timeline()
