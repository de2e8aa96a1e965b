"""Audio branch preprocessing: resampling, STFT, log spectrogram, resizing.

The DFT is an iterative radix-2 decimation-in-time FFT (bit-reversal
permutation followed by log2(N) butterfly stages), vectorized over all
leading axes so a whole clip's frames go through in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from adnet.errors import ConfigError, DimensionError, ValidationError
from adnet.tensor import DTYPE


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=DTYPE).reshape(-1)
        if self.sample_rate <= 0:
            raise ValidationError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.size == 0:
            raise ValidationError("audio clip has no samples")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


WINDOWS = ("hann", "rectangular")


@dataclass(frozen=True)
class SpectrogramConfig:
    window_size: int = 512
    hop: int = 256
    target_duration_s: float = 4.0
    target_sample_rate: int = 16000
    output_side: int = 112
    window: str = "hann"

    def __post_init__(self):
        if self.window not in WINDOWS:
            raise ConfigError(f"window must be one of {WINDOWS}, got {self.window!r}")
        if not 0 < self.hop <= self.window_size:
            raise ConfigError(f"need 0 < hop <= window_size, got {self.hop}, {self.window_size}")
        if self.target_duration_s <= 0 or self.target_sample_rate <= 0 or self.output_side < 1:
            raise ConfigError("target duration, rate and output side must be positive")

    @property
    def target_len(self) -> int:
        return int(round(self.target_duration_s * self.target_sample_rate))


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def fft(x: np.ndarray) -> np.ndarray:
    """Radix-2 FFT along the last axis; its length must be a power of two."""
    x = np.asarray(x)
    n = x.shape[-1]
    if not _is_pow2(n):
        raise ConfigError(f"FFT length must be a power of two, got {n}")
    bits = n.bit_length() - 1
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((np.arange(n) >> b) & 1) << (bits - 1 - b)
    a = x[..., rev].astype(np.complex128)
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        a = a.reshape(a.shape[:-1] + (n // size, size))
        even = a[..., :half].copy()
        odd = a[..., half:] * tw
        a[..., :half] = even + odd
        a[..., half:] = even - odd
        a = a.reshape(a.shape[:-2] + (n,))
        size *= 2
    return a


def ifft(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    return np.conj(fft(np.conj(x))) / x.shape[-1]


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def window_function(name: str, n: int) -> np.ndarray:
    if name == "hann":
        return hann(n)
    if name == "rectangular":
        return np.ones(n, dtype=DTYPE)
    raise ConfigError(f"unknown window {name!r}")


def resample_linear(clip: AudioClip, target_rate: float, target_len: int) -> AudioClip:
    """Linearly interpolate onto a ``target_rate`` grid, centered in ``target_len`` samples.

    The clip keeps its duration (pitch is preserved). A shorter result is
    zero-padded on both sides; a longer one keeps its central part.
    """
    if target_rate <= 0 or target_len <= 0:
        raise ValidationError("target_rate and target_len must be positive")
    src = clip.samples
    if clip.sample_rate == target_rate:
        y = src
    else:
        n_out = max(1, int(round(src.size * target_rate / clip.sample_rate)))
        t = np.arange(n_out) * (clip.sample_rate / target_rate)
        y = np.interp(t, np.arange(src.size), src, right=0.0)
    out = np.zeros(target_len, dtype=DTYPE)
    if y.size >= target_len:
        start = (y.size - target_len) // 2
        out[:] = y[start : start + target_len]
    else:
        start = (target_len - y.size) // 2
        out[start : start + y.size] = y
    return AudioClip(out, target_rate)


def frame_signal(x: np.ndarray, window_size: int, hop: int) -> np.ndarray:
    n_frames = (x.size - window_size) // hop + 1
    idx = np.arange(window_size)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def stft_magnitude(clip: AudioClip, cfg: SpectrogramConfig) -> np.ndarray:
    """Windowed STFT magnitude, ``(window_size/2 + 1) x frames``.

    A periodic Hann window spreads a DC input over bins 0 and 1 with
    magnitudes ``N/2`` and ``N/4`` times its level; only the rectangular
    window keeps it entirely in bin 0.
    """
    if not _is_pow2(cfg.window_size):
        raise ConfigError(f"window_size must be a power of two, got {cfg.window_size}")
    if clip.samples.size < cfg.window_size:
        raise ValidationError(
            f"clip has {clip.samples.size} samples, fewer than window_size {cfg.window_size}"
        )
    frames = frame_signal(clip.samples, cfg.window_size, cfg.hop) * window_function(cfg.window, cfg.window_size)
    spec = fft(frames)[:, : cfg.window_size // 2 + 1]
    return np.abs(spec).T.copy()


def log_spectrogram(mag: np.ndarray) -> np.ndarray:
    """``log(1 + mag)`` min-max scaled to [0, 1]; flat input maps to zeros."""
    if np.any(mag < 0):
        raise ValidationError("magnitude spectrogram must be non-negative")
    s = np.log1p(mag)
    lo, hi = s.min(), s.max()
    if hi <= lo:
        return np.zeros_like(s)
    return (s - lo) / (hi - lo)


def _interp_axis(x: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = x.shape[axis]
    if n_out == n_in:
        return x
    pos = np.zeros(n_out) if n_out == 1 else np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    i0 = np.floor(pos).astype(np.int64)
    i0 = np.clip(i0, 0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = pos - i0
    shape = [1] * x.ndim
    shape[axis] = n_out
    frac = frac.reshape(shape)
    lo = np.take(x, i0, axis=axis)
    return lo + frac * (np.take(x, i1, axis=axis) - lo)


def resize_bilinear(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resize over the last two axes.

    Output pixel ``(i, j)`` samples the input at
    ``(i * (H-1)/(outH-1), j * (W-1)/(outW-1))`` (position 0 when an output
    side is 1); separable linear interpolation between the four neighbours.
    """
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim < 2 or x.shape[-2] < 1 or x.shape[-1] < 1:
        raise DimensionError(f"resize needs at least a 2-D input, got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"output size must be positive, got {out_h}x{out_w}")
    y = _interp_axis(x, out_h, x.ndim - 2)
    return _interp_axis(y, out_w, x.ndim - 1)


def resize_bilinear_2d(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    if np.ndim(x) != 2:
        raise DimensionError(f"expected a 2-D tensor, got shape {np.shape(x)}")
    return resize_bilinear(x, out_h, out_w)


def make_audio_input(clip: AudioClip, cfg: SpectrogramConfig) -> np.ndarray:
    """Audio branch input tensor of shape ``1 x S x S`` with values in [0, 1]."""
    canon = resample_linear(clip, cfg.target_sample_rate, cfg.target_len)
    spec = log_spectrogram(stft_magnitude(canon, cfg))
    s = cfg.output_side
    return resize_bilinear_2d(spec, s, s).reshape(1, s, s)
