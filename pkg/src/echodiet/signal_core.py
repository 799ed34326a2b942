"""Chirp synthesis, band filtering and echo profile construction.

A received microphone stream is band-filtered once per transmit band and
correlated, frame by frame, against the transmitted chirp of that band. The
envelope of each correlation is one column of the echo profile: row ``r``
holds the reflection strength at one-way distance ``r * c / (2 * fs)``.
The envelope (modulus of the analytic correlation) is used by default
because the real correlation oscillates at the carrier and its absolute
value peaks up to a few bins away from the true delay.

Frames follow a fixed cadence of 83 chirp periods per whole second. Within
second ``s`` frame ``j`` starts at sample ``s * fs + j * 600``. Because the
transmit train is periodic, each frame is circularly correlated against the
slice of the transmit train that was on air over the same interval, so the
correlation peak sits at the round-trip delay regardless of where the frame
falls relative to chirp boundaries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import signal

from .errors import ConfigError

SPEED_OF_SOUND = 343.0
SAMPLE_RATE = 50_000
CHIRP_SAMPLES = 600
RANGE_BINS_FULL = 600
FRAMES_PER_SECOND = 83
PRIME_PERIODS = 10
# envelope: |analytic correlation|; magnitude: |real correlation|; signed: real correlation
PROFILE_MODES = ("envelope", "magnitude", "signed")

# (microphone, band) order of the four logical channels.
CHANNEL_LAYOUT = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class ChirpParams:
    f_start: float
    f_end: float
    n_samples: int = CHIRP_SAMPLES
    sample_rate: float = SAMPLE_RATE
    amplitude: float = 1.0
    taper: bool = False

    def __post_init__(self):
        if self.n_samples < 2:
            raise ConfigError(f"chirp needs at least 2 samples, got {self.n_samples}")
        if not 0 < self.f_start < self.f_end < self.sample_rate / 2:
            raise ConfigError(
                f"chirp band {self.f_start}-{self.f_end} Hz must satisfy "
                f"0 < f_start < f_end < {self.sample_rate / 2} Hz"
            )
        if not 0 < self.amplitude <= 1:
            raise ConfigError(f"chirp amplitude must lie in (0, 1], got {self.amplitude}")

    @property
    def sweep_period_s(self) -> float:
        return self.n_samples / self.sample_rate

    @property
    def band(self) -> tuple[float, float]:
        return (self.f_start, self.f_end)


def _default_bands():
    return (
        ChirpParams(18_000.0, 21_500.0, amplitude=0.5),
        ChirpParams(21_500.0, 24_500.0, amplitude=0.5),
    )


@dataclass(frozen=True)
class SensingConfig:
    """Acquisition constants plus the processing options that act on them.

    ``filter_order`` is the order of the analog prototype; the digital
    bandpass has twice that order (one biquad per prototype order).
    """

    bands: tuple[ChirpParams, ...] = field(default_factory=_default_bands)
    sample_rate: float = SAMPLE_RATE
    speed_of_sound: float = SPEED_OF_SOUND
    range_bins_full: int = RANGE_BINS_FULL
    frames_per_second: int = FRAMES_PER_SECOND
    filter_order: int = 4
    filter_ripple_db: float = 0.5
    filter_stop_db: float = 40.0
    profile_mode: str = "envelope"
    differential_mode: str = "signed"

    def __post_init__(self):
        object.__setattr__(self, "bands", tuple(self.bands))
        if len(self.bands) < 1:
            raise ConfigError("at least one band is required")
        for b in self.bands:
            if b.sample_rate != self.sample_rate:
                raise ConfigError("chirp sample rate differs from sensing sample rate")
            if b.n_samples != self.chirp_samples:
                raise ConfigError("all bands must share one chirp length")
        ordered = sorted(self.bands, key=lambda b: b.f_start)
        for lo, hi in zip(ordered, ordered[1:]):
            if hi.f_start < lo.f_end:
                raise ConfigError("transmit bands overlap")
        if self.frames_per_second * self.chirp_samples > self.sample_rate:
            raise ConfigError("frames per second exceed chirp periods per second")
        if self.profile_mode not in PROFILE_MODES:
            raise ConfigError(f"unknown profile mode {self.profile_mode!r}")
        if self.differential_mode not in ("signed", "magnitude"):
            raise ConfigError(f"unknown differential mode {self.differential_mode!r}")

    @property
    def chirp_samples(self) -> int:
        return self.bands[0].n_samples

    @property
    def n_bands(self) -> int:
        return len(self.bands)

    @property
    def bin_resolution_m(self) -> float:
        return self.distance_m(1)

    @property
    def max_range_m(self) -> float:
        return self.distance_m(self.range_bins_full)

    def distance_m(self, bins):
        """One-way distance covered by ``bins`` range bins."""
        return bins * self.speed_of_sound / (2 * self.sample_rate)

    def bins_for_distance(self, distance_m: float) -> int:
        return int(math.floor(distance_m * 2 * self.sample_rate / self.speed_of_sound + 0.5))

    def frames_for_duration(self, seconds: float) -> int:
        return int(math.floor(seconds * self.frames_per_second + 1e-9))

    def with_options(self, **changes) -> "SensingConfig":
        return replace(self, **changes)


@dataclass
class AudioStream:
    samples: np.ndarray  # (n_channels, n_samples)
    sample_rate: float = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples))

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate


@dataclass
class EchoProfile:
    """Correlation magnitudes shaped (channel, range bin, frame)."""

    data: np.ndarray
    bin_resolution_m: float
    frame_rate: int = FRAMES_PER_SECOND
    channel_layout: tuple = CHANNEL_LAYOUT

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_range_bins(self) -> int:
        return self.data.shape[1]

    @property
    def n_frames(self) -> int:
        return self.data.shape[2]

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.frame_rate

    @property
    def max_range_m(self) -> float:
        return self.n_range_bins * self.bin_resolution_m


@dataclass
class DifferentialEchoProfile(EchoProfile):
    """First difference of an echo profile along time.

    Column ``t`` holds ``echo[t + 1] - echo[t]``, so there is one column
    fewer than in the source profile.
    """

    @property
    def duration_s(self) -> float:
        return (self.n_frames + 1) / self.frame_rate


def generate_chirp(params: ChirpParams) -> np.ndarray:
    """Linear up-chirp starting at zero phase.

    Parameters
    ----------
    params : ChirpParams
        Sweep bounds, length and sampling rate.

    Returns
    -------
    ndarray of shape (n_samples,)
        ``amplitude * sin(2 pi (f0 t + (f1 - f0) t^2 / (2 T)))`` with
        ``t = k / fs`` and ``T`` the sweep period.
    """
    t = np.arange(params.n_samples) / params.sample_rate
    period = params.sweep_period_s
    k = (params.f_end - params.f_start) / period
    phase = 2 * np.pi * (params.f_start * t + 0.5 * k * t * t)
    wave = params.amplitude * np.sin(phase)
    if params.taper:
        wave = wave * signal.windows.tukey(params.n_samples, alpha=0.1)
    return wave


def chirp_at(params: ChirpParams, pos) -> np.ndarray:
    """Continuous-time chirp train evaluated at fractional sample positions.

    ``pos`` is in samples; the train repeats every ``n_samples``.
    """
    tau = np.mod(np.asarray(pos, dtype=np.float64), params.n_samples) / params.sample_rate
    k = (params.f_end - params.f_start) / params.sweep_period_s
    wave = params.amplitude * np.sin(2 * np.pi * (params.f_start * tau + 0.5 * k * tau * tau))
    if params.taper:
        idx = np.arange(params.n_samples)
        wave = wave * np.interp(tau * params.sample_rate, idx,
                                signal.windows.tukey(params.n_samples, alpha=0.1))
    return wave


class TransmitTrain:
    """Sum of the continuous chirp trains of the selected bands."""

    def __init__(self, cfg: SensingConfig, bands=None):
        self.chirps = [cfg.bands[b] for b in (range(cfg.n_bands) if bands is None else bands)]
        self.n_samples = cfg.chirp_samples

    def __call__(self, pos) -> np.ndarray:
        return np.sum([chirp_at(c, pos) for c in self.chirps], axis=0)


def transmit_period(cfg: SensingConfig, bands=None) -> np.ndarray:
    """One period of the summed transmit train for the selected bands."""
    idx = range(cfg.n_bands) if bands is None else bands
    return np.sum([generate_chirp(cfg.bands[b]) for b in idx], axis=0)


def _check_band(band, sample_rate):
    lo, hi = band
    if not 0 < lo < hi < sample_rate / 2:
        raise ConfigError(f"band {lo}-{hi} Hz outside (0, {sample_rate / 2}) Hz")


@lru_cache(maxsize=32)
def _design(band, sample_rate, order, ripple_db, stop_db):
    return signal.ellip(order, ripple_db, stop_db, band, btype="bandpass",
                        output="sos", fs=sample_rate)


def bandpass_sos(band: tuple[float, float], sample_rate: float, order: int = 4,
                 ripple_db: float = 0.5, stop_db: float = 40.0) -> np.ndarray:
    """Elliptic bandpass as second-order sections."""
    _check_band(band, sample_rate)
    return _design(tuple(band), sample_rate, order, ripple_db, stop_db).copy()


def _sos_for(cfg: SensingConfig, band_index: int) -> np.ndarray:
    return bandpass_sos(cfg.bands[band_index].band, cfg.sample_rate, cfg.filter_order,
                        cfg.filter_ripple_db, cfg.filter_stop_db)


def bandpass(stream: AudioStream, band, cfg: SensingConfig | None = None) -> AudioStream:
    """Causal (forward-only) bandpass of every channel."""
    cfg = cfg or SensingConfig()
    band = (float(band[0]), float(band[1]))
    sos = bandpass_sos(band, stream.sample_rate, cfg.filter_order,
                       cfg.filter_ripple_db, cfg.filter_stop_db)
    out = signal.sosfilt(sos, np.asarray(stream.samples, dtype=np.float64), axis=-1)
    return AudioStream(out, stream.sample_rate)


def cross_correlate(received, template) -> np.ndarray:
    """Valid-mode cross-correlation ``c[l] = sum_k received[l + k] * template[k]``.

    Computed with an FFT; agrees with the direct sum to float64 round-off.
    """
    received = np.asarray(received, dtype=np.float64)
    template = np.asarray(template, dtype=np.float64)
    if received.ndim != 1 or template.ndim != 1:
        raise ValueError("cross_correlate expects 1-D sequences")
    m, n = received.size, template.size
    if n < 1 or m < n:
        raise ValueError(f"template length {n} must be between 1 and received length {m}")
    if n <= 32 or m <= 64:
        return np.array([received[l:l + n] @ template for l in range(m - n + 1)])
    nfft = 1 << (m + n - 1).bit_length()
    spec = np.fft.rfft(received, nfft) * np.conj(np.fft.rfft(template, nfft))
    return np.fft.irfft(spec, nfft)[: m - n + 1]


def circular_cross_correlate(frames, template, analytic: bool = False) -> np.ndarray:
    """Circular correlation of each row of ``frames`` with ``template``.

    ``c[l] = sum_k frames[(l + k) mod N] * template[k]``; equals
    :func:`cross_correlate` on the frame extended by its first ``N - 1``
    samples. With ``analytic=True`` the result is complex: its real part is
    ``c`` and its modulus is the correlation envelope.
    """
    frames = np.asarray(frames, dtype=np.float64)
    template = np.asarray(template, dtype=np.float64)
    n = template.size
    if frames.shape[-1] != n:
        raise ValueError("frame length must equal template length")
    spec = np.fft.rfft(frames, axis=-1) * np.conj(np.fft.rfft(template))
    if not analytic:
        return np.fft.irfft(spec, n, axis=-1)
    full = np.zeros(frames.shape[:-1] + (n,), dtype=np.complex128)
    half = (n + 1) // 2
    full[..., 0] = spec[..., 0]
    full[..., 1:half] = 2 * spec[..., 1:half]
    if n % 2 == 0:
        full[..., n // 2] = spec[..., n // 2]
    return np.fft.ifft(full, axis=-1)


def reference_template(cfg: SensingConfig, band_index: int) -> np.ndarray:
    """Steady-state response of the band filter to that band's chirp train.

    Received echoes pass through the same filter, so correlating against
    the filtered train cancels the filter's group delay.
    """
    chirp = generate_chirp(cfg.bands[band_index])
    n = chirp.size
    _, h = signal.sosfreqz(_sos_for(cfg, band_index), worN=np.arange(n // 2 + 1) * 2 * np.pi / n)
    return np.fft.irfft(np.fft.rfft(chirp) * h, n)


def frame_starts(n_samples: int, cfg: SensingConfig) -> np.ndarray:
    """Sample index of every frame that fits in a stream of ``n_samples``."""
    fs = int(cfg.sample_rate)
    per_sec = cfg.frames_per_second
    hop = cfg.chirp_samples
    n_frames = (n_samples * per_sec) // fs
    i = np.arange(n_frames)
    return (i // per_sec) * fs + (i % per_sec) * hop


def compute_echo_profile(stream: AudioStream, cfg: SensingConfig | None = None,
                         n_bins: int | None = None, chunk_seconds: int = 10) -> EchoProfile:
    """Echo profile of a multi-microphone stream.

    Channels follow :data:`CHANNEL_LAYOUT`. ``n_bins`` keeps only the
    nearest range bins, which bounds memory on long recordings. The stream
    is filtered in chunks with carried filter state, so the result does not
    depend on ``chunk_seconds``.
    """
    cfg = cfg or SensingConfig()
    if stream.sample_rate != cfg.sample_rate:
        raise ValueError(f"stream sampled at {stream.sample_rate} Hz, expected {cfg.sample_rate} Hz")
    hop = cfg.chirp_samples
    if stream.n_samples < hop:
        raise ValueError("stream is shorter than one chirp")
    n_bins = cfg.range_bins_full if n_bins is None else n_bins
    if not 1 <= n_bins <= min(hop, cfg.range_bins_full):
        raise ValueError(f"n_bins must lie in [1, {cfg.range_bins_full}], got {n_bins}")

    fs = int(cfg.sample_rate)
    starts = frame_starts(stream.n_samples, cfg)
    n_mics = stream.n_channels
    layout = tuple((m, b) for m in range(n_mics) for b in range(cfg.n_bands))
    out = np.zeros((len(layout), n_bins, starts.size), dtype=np.float64)
    if starts.size == 0:
        return EchoProfile(out, cfg.bin_resolution_m, cfg.frames_per_second, layout)

    templates = [reference_template(cfg, b) for b in range(cfg.n_bands)]
    sos = [_sos_for(cfg, b) for b in range(cfg.n_bands)]
    samples = np.asarray(stream.samples, dtype=np.float64)
    chunk = max(1, chunk_seconds) * fs
    offsets = starts % hop
    for b in range(cfg.n_bands):
        # Prime the filter with the first chirp period repeated, standing in
        # for the unrecorded (periodic) past; a static scene then has no
        # start-up transient.
        zi = np.zeros((sos[b].shape[0], n_mics, 2))
        _, zi = signal.sosfilt(sos[b], np.tile(samples[:, :hop], PRIME_PERIODS), axis=-1, zi=zi)
        lo = 0
        while lo < samples.shape[1]:
            hi = min(lo + chunk, samples.shape[1])
            filtered, zi = signal.sosfilt(sos[b], samples[:, lo:hi], axis=-1, zi=zi)
            sel = np.nonzero((starts >= lo) & (starts + hop <= hi))[0]
            for off in np.unique(offsets[sel]):
                cols = sel[offsets[sel] == off]
                idx = (starts[cols] - lo)[:, None] + np.arange(hop)
                # Transmit slice on air during a frame starting at phase `off`.
                tmpl = np.roll(templates[b], -int(off))
                for m in range(n_mics):
                    corr = circular_cross_correlate(filtered[m][idx], tmpl,
                                                    analytic=cfg.profile_mode == "envelope")
                    corr = corr[:, :n_bins]
                    if cfg.profile_mode != "signed":
                        corr = np.abs(corr)
                    out[layout.index((m, b)), :, cols] = corr
            lo = hi
    return EchoProfile(out, cfg.bin_resolution_m, cfg.frames_per_second, layout)


def differentiate(echo: EchoProfile, mode: str = "signed") -> DifferentialEchoProfile:
    """Frame-to-frame change of an echo profile."""
    if echo.n_frames < 2:
        raise ValueError("differentiation needs at least two frames")
    if mode not in ("signed", "magnitude"):
        raise ConfigError(f"unknown differential mode {mode!r}")
    diff = np.diff(echo.data, axis=-1)
    if mode == "magnitude":
        diff = np.abs(diff)
    return DifferentialEchoProfile(diff, echo.bin_resolution_m, echo.frame_rate, echo.channel_layout)


def crop_range(profile: EchoProfile, n_bins: int) -> EchoProfile:
    """Keep the ``n_bins`` nearest range bins."""
    if not 1 <= n_bins <= profile.n_range_bins:
        raise ValueError(f"n_bins must lie in [1, {profile.n_range_bins}], got {n_bins}")
    return replace(profile, data=profile.data[:, :n_bins, :])
