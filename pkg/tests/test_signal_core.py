import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from echodiet.channel_sim import (ActivityEntry, ActivityScript, PiecewiseLinear, Reflector, Scene,
                                  render_scene)
from echodiet.errors import ConfigError
from echodiet.signal_core import (AudioStream, ChirpParams, EchoProfile, SensingConfig, TransmitTrain,
                                  bandpass, bandpass_sos, circular_cross_correlate, compute_echo_profile,
                                  crop_range, cross_correlate, differentiate, frame_starts, generate_chirp)

from helpers import brute_correlate, static_stream

FS = 50_000


def tone(freq, seconds=0.2):
    t = np.arange(int(seconds * FS)) / FS
    return AudioStream(np.sin(2 * np.pi * freq * t)[None, :], FS)


def rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


# -- configuration -------------------------------------------------------------

def test_range_constants(cfg):
    assert cfg.bin_resolution_m == pytest.approx(0.00343, abs=1e-15)
    assert cfg.max_range_m == pytest.approx(2.058, abs=1e-12)
    assert cfg.distance_m(150) == pytest.approx(0.5145, abs=1e-12)
    assert cfg.frames_per_second == 83
    assert cfg.n_bands == 2
    lo, hi = cfg.bands[0].band, cfg.bands[1].band
    assert lo == (18_000, 21_500) and hi == (21_500, 24_500)
    assert cfg.bands[0].sweep_period_s == pytest.approx(0.012)


@pytest.mark.parametrize("kw", [
    dict(f_start=21_000, f_end=18_000),
    dict(f_start=18_000, f_end=26_000),
    dict(f_start=0, f_end=1_000),
    dict(f_start=18_000, f_end=21_500, n_samples=1),
    dict(f_start=18_000, f_end=21_500, amplitude=1.5),
])
def test_chirp_params_invalid(kw):
    with pytest.raises(ConfigError):
        ChirpParams(**kw)


def test_overlapping_bands_rejected():
    with pytest.raises(ConfigError):
        SensingConfig(bands=(ChirpParams(18_000, 22_000), ChirpParams(21_500, 24_500)))


# -- chirps --------------------------------------------------------------------

def test_chirp_length_and_phase_zero():
    w = generate_chirp(ChirpParams(18_000, 21_500))
    assert w.shape == (600,)
    assert w[0] == 0.0


def test_chirp_formula():
    p = ChirpParams(18_000, 21_500, amplitude=0.7)
    t = np.arange(600) / FS
    expect = 0.7 * np.sin(2 * np.pi * (18_000 * t + 3_500 / (2 * 0.012) * t ** 2))
    np.testing.assert_allclose(generate_chirp(p), expect, atol=1e-12)


def test_chirp_instantaneous_frequency_rises():
    # Short-time FFT peak tracking on a 10x zero-padded grid.
    w = generate_chirp(ChirpParams(18_000, 21_500))
    f, t, z = signal.stft(w, FS, nperseg=128, noverlap=96, nfft=1280, boundary=None, padded=False)
    peaks = f[np.argmax(np.abs(z), axis=0)]
    assert np.all(np.diff(peaks) >= 0)
    # Linear law evaluated at each segment centre.
    expect = 18_000 + 3_500 * t / 0.012
    assert np.all(np.abs(peaks - expect) < 150)


def test_transmit_train_matches_sampled_chirps(cfg):
    pos = np.arange(1_800)
    expect = np.tile(generate_chirp(cfg.bands[0]) + generate_chirp(cfg.bands[1]), 3)
    np.testing.assert_allclose(TransmitTrain(cfg)(pos), expect, atol=1e-9)


# -- filtering -----------------------------------------------------------------

def test_bandpass_rejects_audible_tone():
    out = bandpass(tone(10_000), (18_000, 21_500))
    assert rms(out.samples[0, 2_000:]) <= 0.01 * rms(tone(10_000).samples)


def test_bandpass_passes_in_band_tone():
    src = tone(19_500)
    out = bandpass(src, (18_000, 21_500))
    ratio = rms(out.samples[0, 2_000:]) / rms(src.samples)
    assert 0.89 <= ratio <= 1.12


def test_bandpass_zero_is_zero():
    z = AudioStream(np.zeros((2, 1_000)), FS)
    assert not bandpass(z, (18_000, 21_500)).samples.any()


def test_bandpass_stopband_40db_two_khz_out():
    for band in [(18_000, 21_500), (21_500, 24_500)]:
        sos = bandpass_sos(band, FS)
        probes = [f for f in (band[0] - 2_000, band[1] + 2_000) if f < FS / 2]
        _, h = signal.sosfreqz(sos, worN=probes, fs=FS)
        assert np.all(20 * np.log10(np.abs(h)) <= -40)
        _, hp = signal.sosfreqz(sos, worN=np.linspace(band[0] + 50, band[1] - 50, 50), fs=FS)
        assert np.all(np.abs(20 * np.log10(np.abs(hp))) <= 1.0)


def test_bandpass_outside_nyquist():
    with pytest.raises(ConfigError):
        bandpass(tone(19_000), (18_000, 26_000))


# -- correlation ---------------------------------------------------------------

def test_autocorrelation_peaks_at_zero():
    w = generate_chirp(ChirpParams(18_000, 21_500))
    assert np.argmax(cross_correlate(w, w)) == 0


def test_delayed_chirp_lag():
    w = generate_chirp(ChirpParams(18_000, 21_500))
    rx = np.zeros(1_200)
    rx[100:700] = w
    c = cross_correlate(rx, w)
    assert np.argmax(c) == 100
    np.testing.assert_allclose(c, brute_correlate(rx, w), rtol=1e-6, atol=1e-9)


def test_correlate_zeros():
    assert not cross_correlate(np.zeros(700), generate_chirp(ChirpParams(18_000, 21_500))).any()


def test_correlate_bad_lengths():
    with pytest.raises(ValueError):
        cross_correlate(np.ones(3), np.ones(5))
    with pytest.raises(ValueError):
        cross_correlate(np.ones(3), np.ones(0))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 2048), st.integers(0, 300), st.integers(0, 2**32 - 1))
def test_fft_correlation_matches_direct(n, extra, seed):
    rng = np.random.default_rng(seed)
    tmpl = rng.standard_normal(n)
    rx = rng.standard_normal(n + extra)
    fast = cross_correlate(rx, tmpl)
    direct = np.array([rx[l:l + n] @ tmpl for l in range(extra + 1)])
    scale = np.abs(rx).sum() * np.abs(tmpl).max()
    assert np.max(np.abs(fast - direct)) <= 1e-6 * scale


def test_circular_matches_extended_linear():
    rng = np.random.default_rng(1)
    frame, tmpl = rng.standard_normal(64), rng.standard_normal(64)
    ext = np.concatenate([frame, frame[:-1]])
    np.testing.assert_allclose(circular_cross_correlate(frame, tmpl), cross_correlate(ext, tmpl),
                               atol=1e-10)
    analytic = circular_cross_correlate(frame, tmpl, analytic=True)
    np.testing.assert_allclose(analytic.real, cross_correlate(ext, tmpl), atol=1e-10)


# -- echo profiles -------------------------------------------------------------

def test_frame_count_one_second(cfg):
    echo = compute_echo_profile(static_stream([0.3], 1.0), cfg)
    assert echo.data.shape == (4, 600, 83)
    assert echo.channel_layout == ((0, 0), (0, 1), (1, 0), (1, 1))


def test_frame_starts_never_straddle_seconds(cfg):
    starts = frame_starts(3 * FS, cfg)
    assert starts.size == 249
    assert np.all((starts % FS) + 600 <= FS)


@pytest.mark.parametrize("d", [0.10, 0.343, 0.50, 1.00])
def test_static_reflector_peak_bin(cfg, d):
    echo = compute_echo_profile(static_stream([d], 1.0), cfg)
    expect = round(d / 0.00343)
    peaks = np.argmax(echo.data, axis=1)
    assert np.all(np.abs(peaks - expect) <= 1)


def test_silent_stream_gives_zero_profile(cfg):
    echo = compute_echo_profile(AudioStream(np.zeros((2, FS)), FS), cfg)
    assert not echo.data.any()


def test_profile_positively_homogeneous(cfg):
    s = static_stream([0.2, 0.4], 1.0, noise_rms=0.05)
    a = compute_echo_profile(s, cfg, n_bins=150).data
    b = compute_echo_profile(AudioStream(3.0 * s.samples, FS), cfg, n_bins=150).data
    np.testing.assert_allclose(b, 3.0 * a, rtol=1e-9, atol=1e-9 * a.max())


def test_chunking_does_not_change_profile(cfg):
    s = static_stream([0.25], 3.0, noise_rms=0.1)
    a = compute_echo_profile(s, cfg, n_bins=100, chunk_seconds=1).data
    b = compute_echo_profile(s, cfg, n_bins=100, chunk_seconds=10).data
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10 * a.max())


def test_band_separation(cfg):
    # Band-1-only transmit delayed by a 0.2 m round trip.
    n = FS // 2
    delay = 2 * 0.2 / cfg.speed_of_sound * FS
    x = TransmitTrain(cfg, bands=[0])(np.arange(n) - delay)
    echo = compute_echo_profile(AudioStream(np.vstack([x, x]), FS), cfg)
    own = echo.data[0].max(axis=0)
    other = echo.data[1].max(axis=0)
    assert np.all(other <= 0.1 * own)


def test_profile_errors(cfg):
    with pytest.raises(ValueError):
        compute_echo_profile(AudioStream(np.zeros((2, 599)), FS), cfg)
    with pytest.raises(ValueError):
        compute_echo_profile(AudioStream(np.zeros((2, 1_000)), 48_000), cfg)
    with pytest.raises(ValueError):
        compute_echo_profile(AudioStream(np.zeros((2, 1_000)), FS), cfg, n_bins=0)


# -- differential ----------------------------------------------------------------

def test_static_scene_differential_vanishes(cfg):
    echo = compute_echo_profile(static_stream([0.15, 0.4, 0.9], 1.0), cfg)
    diff = differentiate(echo)
    assert diff.n_frames == echo.n_frames - 1
    assert np.abs(diff.data).max() <= 1e-9 * echo.data.max()


def test_constant_profile_differentiates_to_zero():
    col = np.random.default_rng(0).random((4, 20, 1))
    echo = EchoProfile(np.repeat(col, 9, axis=2), 0.00343)
    assert not differentiate(echo).data.any()


def test_one_changed_column_two_nonzero_differences():
    data = np.ones((4, 10, 8))
    data[:, 3, 4] = 5.0
    d = differentiate(EchoProfile(data, 0.00343)).data
    nz = np.nonzero(np.abs(d).sum(axis=(0, 1)))[0]
    assert nz.tolist() == [3, 4]
    np.testing.assert_array_equal(np.abs(differentiate(EchoProfile(data, 0.00343), "magnitude").data),
                                  np.abs(d))


def test_differentiate_errors():
    with pytest.raises(ValueError):
        differentiate(EchoProfile(np.ones((4, 5, 1)), 0.00343))
    with pytest.raises(ConfigError):
        differentiate(EchoProfile(np.ones((4, 5, 3)), 0.00343), "log")


def test_moving_reflector_track(cfg):
    scene = Scene([Reflector(PiecewiseLinear([0.0, 1.0], [0.10, 0.20]))])
    stream, _ = render_scene(scene, ActivityScript([ActivityEntry(0, 1, "null")]), include_activity=False)
    echo = compute_echo_profile(stream, cfg, n_bins=150)
    track = np.argmax(echo.data[0], axis=0)
    # Near monotone: never more than one bin below the running maximum.
    assert np.all(track >= np.maximum.accumulate(track) - 1)
    assert abs(int(track[0]) - 29) <= 3 and abs(int(track[-1]) - 58) <= 2
    diff = differentiate(echo)
    # Column 0 mixes in the filter start-up (the primed past is static).
    energy = np.square(diff.data[0, :, 1:])
    rows = np.arange(energy.shape[0])[:, None]
    centroid = (energy * rows).sum(axis=0) / energy.sum(axis=0)
    expect = np.linspace(0.10, 0.20, centroid.size + 1)[1:] / 0.00343
    assert np.all(np.abs(centroid - expect) <= 8)
    slope, start = np.polyfit(np.arange(1, centroid.size + 1) / 83, centroid, 1)
    assert slope == pytest.approx(0.10 / 0.00343, rel=0.15)
    assert start == pytest.approx(0.10 / 0.00343, abs=3)
    assert np.corrcoef(centroid, expect)[0, 1] > 0.9


# -- cropping --------------------------------------------------------------------

def test_crop_range(cfg):
    echo = EchoProfile(np.random.default_rng(0).random((4, 600, 5)), cfg.bin_resolution_m)
    c = crop_range(echo, 150)
    assert c.n_range_bins == 150 and c.max_range_m == pytest.approx(0.5145)
    np.testing.assert_array_equal(c.data, echo.data[:, :150])
    assert crop_range(echo, 600).data.shape == echo.data.shape
    n80 = cfg.bins_for_distance(0.80)
    assert crop_range(echo, 80).max_range_m == pytest.approx(0.2744)
    assert n80 == 233
    for bad in (0, 601):
        with pytest.raises(ValueError):
            crop_range(echo, bad)
