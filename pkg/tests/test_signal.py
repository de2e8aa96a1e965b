import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adnet.errors import ConfigError, DimensionError, ValidationError
from adnet.signal import (
    AudioClip, SpectrogramConfig, fft, hann, ifft, log_spectrogram, make_audio_input, resample_linear,
    resize_bilinear_2d, stft_magnitude,
)
from adnet.tensor import Rng

from oracles import dft_naive, hann_periodic


def test_fft_matches_direct_dft():
    x = Rng(1).uniform((32,)) - 0.5
    assert np.max(np.abs(fft(x) - dft_naive(x))) < 1e-12


@given(st.integers(0, 10), st.integers(0, 2**32))
def test_fft_round_trip(log_n, seed):
    x = Rng(seed).uniform((2**log_n,)) - 0.5
    assert np.max(np.abs(ifft(fft(x)).real - x)) < 1e-9


def test_fft_rejects_non_power_of_two():
    with pytest.raises(ConfigError):
        fft(np.zeros(12))


def test_hann_is_periodic():
    assert np.allclose(hann(16), hann_periodic(16), atol=1e-15)


def test_stft_shape_and_nonnegative():
    cfg = SpectrogramConfig()
    n = 5000
    mag = stft_magnitude(AudioClip(Rng(2).uniform((n,)) - 0.5, 16000), cfg)
    assert mag.shape == (257, (n - 512) // 256 + 1)
    assert np.all(mag >= 0)


def test_stft_errors():
    with pytest.raises(ValidationError):
        stft_magnitude(AudioClip(np.zeros(100), 16000), SpectrogramConfig())
    with pytest.raises(ConfigError):
        stft_magnitude(AudioClip(np.zeros(1000), 16000), SpectrogramConfig(window_size=300, hop=100))
    with pytest.raises(ConfigError):
        SpectrogramConfig(hop=0)
    with pytest.raises(ConfigError):
        SpectrogramConfig(window="hamming")


@pytest.mark.parametrize("k", [1, 5, 16, 100, 255])
def test_stft_pure_tone_lands_in_its_bin(k):
    cfg = SpectrogramConfig()
    t = np.arange(4096) / 16000
    mag = stft_magnitude(AudioClip(np.cos(2 * np.pi * k * 16000 / 512 * t + 0.3), 16000), cfg)
    assert np.all(np.argmax(mag, axis=0) == k)


def test_resample_identity_and_constant():
    x = Rng(3).uniform((800,))
    out = resample_linear(AudioClip(x, 8000), 8000, 800)
    assert np.array_equal(out.samples, x)
    const = resample_linear(AudioClip(np.full(441, 0.25), 44100), 16000, 160)
    assert np.allclose(const.samples, 0.25)


def test_resample_pads_and_truncates_centrally():
    out = resample_linear(AudioClip(np.ones(4), 10), 10, 8).samples
    assert out.tolist() == [0, 0, 1, 1, 1, 1, 0, 0]
    out = resample_linear(AudioClip(np.arange(10.0), 10), 10, 4).samples
    assert out.tolist() == [3.0, 4.0, 5.0, 6.0]
    with pytest.raises(ValidationError):
        resample_linear(AudioClip(np.ones(3), 10), 0, 4)


def test_resample_preserves_frequency():
    cfg = SpectrogramConfig()
    t = np.arange(44100) / 44100
    clip = resample_linear(AudioClip(np.sin(2 * np.pi * 440 * t), 44100), 16000, 16000)
    mag = stft_magnitude(clip, cfg)
    bins = np.argmax(mag, axis=0) * 16000 / 512
    assert np.all(np.abs(bins - 440) <= 16000 / 512)


def test_log_spectrogram_guards_and_range():
    assert not np.any(log_spectrogram(np.zeros((4, 5))))
    assert not np.any(log_spectrogram(np.full((4, 5), 3.0)))
    out = log_spectrogram(Rng(4).uniform((6, 7)) * 10)
    assert out.min() == 0.0 and out.max() == 1.0
    with pytest.raises(ValidationError):
        log_spectrogram(np.array([[-1.0]]))


def test_resize_identity_constant_and_ramp():
    x = Rng(5).uniform((5, 7))
    assert np.array_equal(resize_bilinear_2d(x, 5, 7), x)
    assert np.allclose(resize_bilinear_2d(np.full((3, 4), 2.5), 9, 2), 2.5)
    yy, xx = np.mgrid[0:5, 0:6].astype(float)
    ramp = 0.7 * yy - 1.3 * xx + 2.0
    big = resize_bilinear_2d(ramp, 9, 11)
    gy, gx = np.mgrid[0:9, 0:11].astype(float)
    analytic = 0.7 * gy * (4 / 8) - 1.3 * gx * (5 / 10) + 2.0
    assert np.max(np.abs(big - analytic)) < 1e-9
    with pytest.raises(DimensionError):
        resize_bilinear_2d(np.zeros(3), 2, 2)


def test_audio_input_shape_and_range():
    cfg = SpectrogramConfig(output_side=32)
    assert not np.any(make_audio_input(AudioClip(np.zeros(1000), 8000), cfg))
    for n, rate in ((100, 8000), (16000 * 6, 16000), (30000, 44100)):
        out = make_audio_input(AudioClip(Rng(n).uniform((n,)) - 0.5, rate), cfg)
        assert out.shape == (1, 32, 32)
        assert out.min() >= 0.0 and out.max() <= 1.0


def test_audio_input_scale_invariant_on_pure_tone():
    cfg = SpectrogramConfig(output_side=24)
    t = np.arange(64000) / 16000
    tone = 0.2 * np.sin(2 * np.pi * 1000 * t)
    a = make_audio_input(AudioClip(tone, 16000), cfg)
    b = make_audio_input(AudioClip(2 * tone, 16000), cfg)
    # log1p is not scale invariant, so only the normalized pattern is compared
    assert np.argmax(a) == np.argmax(b)
    assert np.array_equal(np.argmax(a[0], axis=0), np.argmax(b[0], axis=0))
    assert np.corrcoef(a.ravel(), b.ravel())[0, 1] > 0.99
