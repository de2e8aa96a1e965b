"""Shot storage, manifests, batching and the seeded synthetic corpus.

On-disk shot layout (one directory per shot)::

    meta.json          {"id", "label", "category", "frame_count", "fps", "sample_rate"}
    frame_00000.ppm    binary P6, maxval 255, one file per frame
    audio.wav          PCM16 little-endian mono

A manifest is a JSON-lines file, one ``{"path": ..., "split": ...}`` object per
line; relative paths resolve against the manifest's directory.
"""

from __future__ import annotations

import json
import logging
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from adnet.errors import ConfigError, FormatError, ValidationError
from adnet.signal import AudioClip, SpectrogramConfig, make_audio_input
from adnet.tensor import DTYPE, Rng, rng_normal
from adnet.vision import LUMA, Frame, VisualConfig, make_visual_input

log = logging.getLogger(__name__)

LABELS = ("regular", "commercial")
SPLITS = ("train", "test")
CATEGORIES = ("food", "drinks", "automobile", "finance")


@dataclass
class VideoShot:
    id: str
    frames: list[Frame]
    fps: float
    audio: AudioClip
    label: str | None  # None for unlabeled shots cut from a video
    category: str | None = None

    def __post_init__(self):
        if not self.frames:
            raise ValidationError(f"shot {self.id!r} has no frames")
        if self.label is not None and self.label not in LABELS:
            raise ValidationError(f"shot {self.id!r}: label must be one of {LABELS}, got {self.label!r}")
        if self.fps <= 0:
            raise ValidationError(f"shot {self.id!r}: fps must be positive")

    @property
    def is_commercial(self) -> bool:
        return self.label == "commercial"


# -- PPM / WAV ---------------------------------------------------------------


def write_ppm(path: Path, frame: Frame) -> None:
    header = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + frame.data.tobytes())


def read_ppm(path: Path) -> Frame:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read frame ({exc})") from exc
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PPM header")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace byte after maxval
    if tokens[0] != b"P6":
        raise FormatError(f"{path}: not a binary P6 PPM")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PPM header") from exc
    if maxval != 255 or w < 1 or h < 1:
        raise FormatError(f"{path}: unsupported PPM geometry {w}x{h} maxval {maxval}")
    body = raw[pos : pos + w * h * 3]
    if len(body) != w * h * 3:
        raise FormatError(f"{path}: truncated pixel data")
    return Frame(np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3))


def write_wav(path: Path, clip: AudioClip) -> None:
    pcm = np.round(np.clip(clip.samples, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(round(clip.sample_rate)))
        w.writeframes(pcm.tobytes())


def read_wav(path: Path) -> AudioClip:
    """PCM16 WAV to float samples in [-1, 1]; multi-channel input is averaged to mono."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as w:
            if w.getsampwidth() != 2:
                raise FormatError(f"{path}: only 16-bit PCM is supported")
            n_ch, rate, n = w.getnchannels(), w.getframerate(), w.getnframes()
            raw = w.readframes(n)
    except (OSError, EOFError, wave.Error) as exc:
        raise FormatError(f"{path}: cannot read WAV ({exc})") from exc
    pcm = np.frombuffer(raw, dtype="<i2").astype(DTYPE)
    if pcm.size == 0 or pcm.size % n_ch:
        raise FormatError(f"{path}: empty or truncated audio data")
    samples = pcm.reshape(-1, n_ch).mean(axis=1) / 32767.0
    return AudioClip(samples, rate)


# -- shots -------------------------------------------------------------------


def write_shot(shot: VideoShot, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "id": shot.id,
        "label": shot.label,
        "category": shot.category,
        "frame_count": len(shot.frames),
        "fps": shot.fps,
        "sample_rate": int(round(shot.audio.sample_rate)),
    }
    (d / "meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")
    for i, frame in enumerate(shot.frames):
        write_ppm(d / f"frame_{i:05d}.ppm", frame)
    write_wav(d / "audio.wav", shot.audio)
    return d


def read_shot(directory) -> VideoShot:
    d = Path(directory)
    meta_path = d / "meta.json"
    try:
        meta = json.loads(meta_path.read_text())
        n = int(meta["frame_count"])
        fields = (meta["id"], float(meta["fps"]), meta["label"], meta.get("category"))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{meta_path}: missing or malformed ({exc})") from exc
    on_disk = sorted(d.glob("frame_*.ppm"))
    if len(on_disk) != n:
        raise FormatError(f"{meta_path}: frame_count {n} but {len(on_disk)} frame files in {d}")
    frames = [read_ppm(d / f"frame_{i:05d}.ppm") for i in range(n)]
    wav = d / "audio.wav"
    if not wav.exists():
        raise FormatError(f"{wav}: missing audio")
    audio = read_wav(wav)
    shot_id, fps, label, category = fields
    try:
        return VideoShot(shot_id, frames, fps, audio, label, category)
    except ValidationError as exc:
        raise FormatError(f"{meta_path}: {exc}") from exc


# -- manifests ---------------------------------------------------------------


@dataclass
class Manifest:
    entries: list[tuple[str, str]]
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        paths = [p for p, _ in self.entries]
        if len(set(paths)) != len(paths):
            raise ValidationError("manifest paths must be unique")
        bad = [s for _, s in self.entries if s not in SPLITS]
        if bad:
            raise ValidationError(f"unknown split(s) in manifest: {sorted(set(bad))}")

    def paths(self, split: str) -> list[Path]:
        return [self.root / p for p, s in self.entries if s == split]


def write_manifest(manifest: Manifest, path) -> None:
    lines = [json.dumps({"path": p, "split": s}) for p, s in manifest.entries]
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_manifest(path) -> Manifest:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read manifest ({exc})") from exc
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            entries.append((str(obj["path"]), str(obj["split"])))
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"{path}:{lineno}: bad manifest line") from exc
    try:
        return Manifest(entries, path.parent)
    except ValidationError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# -- preprocessed tensors and batching -----------------------------------------


@dataclass
class ShotTensors:
    """Network-ready inputs for a set of shots; labels are 1 for commercial."""

    visual: np.ndarray  # N x 3K x S x S
    audio: np.ndarray  # N x 1 x S x S
    labels: np.ndarray  # N, int
    categories: np.ndarray  # N, int, -1 when absent
    ids: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def subset(self, idx) -> "ShotTensors":
        idx = np.asarray(idx, dtype=np.int64)
        return ShotTensors(
            self.visual[idx], self.audio[idx], self.labels[idx], self.categories[idx],
            [self.ids[i] for i in idx] if self.ids else [],
        )


@dataclass
class Dataset:
    train: ShotTensors
    test: ShotTensors


def preprocess_shots(
    shots: Sequence[VideoShot], visual_cfg: VisualConfig, spec_cfg: SpectrogramConfig
) -> ShotTensors:
    if spec_cfg.output_side != visual_cfg.side:
        raise ConfigError("spectrogram output_side must equal the visual side")
    n, s = len(shots), visual_cfg.side
    visual = np.empty((n, visual_cfg.channels, s, s), dtype=DTYPE)
    audio = np.empty((n, 1, s, s), dtype=DTYPE)
    for i, shot in enumerate(shots):
        visual[i] = make_visual_input(shot.frames, visual_cfg)
        audio[i] = make_audio_input(shot.audio, spec_cfg)
    labels = np.array([int(sh.is_commercial) for sh in shots], dtype=np.int64)
    cats = np.array(
        [CATEGORIES.index(sh.category) if sh.category in CATEGORIES else -1 for sh in shots],
        dtype=np.int64,
    )
    return ShotTensors(visual, audio, labels, cats, [sh.id for sh in shots])


def _read_or_fail(path: Path) -> VideoShot:
    try:
        return read_shot(path)
    except FormatError:
        raise
    except Exception as exc:  # noqa: BLE001 - any reader failure must name the shot
        raise FormatError(f"{path}: unreadable shot ({exc})") from exc


def load_split(
    manifest: Manifest, split: str, visual_cfg: VisualConfig, spec_cfg: SpectrogramConfig
) -> ShotTensors:
    paths = manifest.paths(split)
    if not paths:
        raise ValidationError(f"manifest has no {split!r} shots")
    return preprocess_shots([_read_or_fail(p) for p in paths], visual_cfg, spec_cfg)


def load_dataset(manifest: Manifest, visual_cfg: VisualConfig, spec_cfg: SpectrogramConfig) -> Dataset:
    return Dataset(
        load_split(manifest, "train", visual_cfg, spec_cfg),
        load_split(manifest, "test", visual_cfg, spec_cfg),
    )


def batch_indices(n: int, batch_size: int, rng: Rng) -> list[np.ndarray]:
    """Fisher-Yates order cut into batches; the final short batch is kept."""
    if n < 1:
        raise ValidationError("cannot batch an empty split")
    order = rng.shuffle_indices(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def load_batches(
    manifest: Manifest,
    split: str,
    batch_size: int,
    rng: Rng,
    visual_cfg: VisualConfig | None = None,
    spec_cfg: SpectrogramConfig | None = None,
) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Yield ``(visual, audio, labels)`` batches for one epoch, reading shots lazily."""
    visual_cfg = visual_cfg or VisualConfig()
    spec_cfg = spec_cfg or SpectrogramConfig(output_side=visual_cfg.side)
    paths = manifest.paths(split)
    if not paths:
        raise ValidationError(f"manifest has no {split!r} shots")
    for idx in batch_indices(len(paths), batch_size, rng):
        t = preprocess_shots([_read_or_fail(paths[i]) for i in idx], visual_cfg, spec_cfg)
        yield t.visual, t.audio, t.labels


# -- synthetic corpus --------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Seeded stand-in corpus.

    ``visual_informativeness`` and ``audio_informativeness`` blend each
    modality's class signature with class-agnostic content: 1 gives fully
    separable signatures, 0 makes that modality carry no label information.
    ``rect_luma_contrast`` bounds the luma step between a commercial's
    rectangle and its background; the two differ mainly in hue, which
    luma-only hand-crafted features cannot see.
    """

    n_shots: int = 200
    seed: int = 0
    visual_informativeness: float = 1.0
    audio_informativeness: float = 1.0
    frame_height: int = 48
    frame_width: int = 64
    fps: float = 8.0
    duration_s: tuple[float, float] = (1.0, 2.0)
    sample_rate: int = 16000
    commercial_fraction: float = 24 / 51
    test_fraction: float = 0.2
    tones_hz: tuple[float, float, float] = (500.0, 1000.0, 1500.0)
    am_hz: float = 8.0
    frame_noise: float = 0.02
    rect_luma_contrast: float = 0.06
    categories: bool = False

    def __post_init__(self):
        for name in ("visual_informativeness", "audio_informativeness"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.n_shots < 2:
            raise ConfigError("need at least 2 shots")
        if not 0.0 < self.commercial_fraction < 1.0 or not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("commercial_fraction and test_fraction must lie in (0, 1)")
        lo, hi = self.duration_s
        if not 0 < lo <= hi:
            raise ConfigError("bad duration range")


def _smooth_field(rng: Rng, h: int, w: int, n_waves: int = 3):
    """Zero-mean sum of integer-cycle cosines; returns a function of time."""
    ky = np.array([1 + rng.below(3) for _ in range(n_waves)])
    kx = np.array([1 + rng.below(3) for _ in range(n_waves)])
    phase = rng.uniform((n_waves,)) * 2 * np.pi
    drift = (rng.uniform((n_waves,)) - 0.5) * 2.0
    amp = 0.1 + 0.1 * rng.uniform((n_waves, 3))
    yy = np.arange(h)[:, None] / h
    xx = np.arange(w)[None, :] / w

    def at(t: float) -> np.ndarray:
        out = np.zeros((h, w, 3))
        for i in range(n_waves):
            wave_ = np.cos(2 * np.pi * (ky[i] * yy + kx[i] * xx) + phase[i] + drift[i] * t)
            out += wave_[:, :, None] * amp[i]
        return out / n_waves * 1.5

    return at


_COLOR_MARGIN = 0.1


def _luma_color(rng: Rng, luma: float, chroma: float, direction=None) -> np.ndarray:
    """RGB colour with exactly the given luma plus a chroma offset of zero luma."""
    if direction is None:
        direction = rng_normal(rng, (3,))
    d = direction - LUMA * (LUMA @ direction) / (LUMA @ LUMA)
    d = d / (np.linalg.norm(d) or 1.0)
    lo, hi = _COLOR_MARGIN, 1.0 - _COLOR_MARGIN  # keep frame grain away from clipping
    with np.errstate(divide="ignore"):
        room = np.where(d > 0, (hi - luma) / d, np.where(d < 0, (lo - luma) / d, np.inf))
    return luma + chroma * max(0.0, float(room.min())) * d


def _commercial_visual(rng: Rng, h: int, w: int, luma_contrast: float):
    bg_luma = 0.65 + 0.15 * rng.uniform()
    bg_dir = rng_normal(rng, (3,))
    bg = _luma_color(rng, bg_luma, 0.5 + 0.3 * rng.uniform(), bg_dir)
    fg_luma = bg_luma + luma_contrast * (2.0 * rng.uniform() - 1.0)
    fg = _luma_color(rng, fg_luma, 0.8 + 0.2 * rng.uniform(), -bg_dir + 0.5 * rng_normal(rng, (3,)))
    rh, rw = int(h * (0.3 + 0.2 * rng.uniform())), int(w * (0.3 + 0.2 * rng.uniform()))
    y0, x0 = rng.uniform() * (h - rh), rng.uniform() * (w - rw)
    speed = (0.5 + rng.uniform()) * max(h, w)  # px per second
    angle = rng.uniform() * 2 * np.pi
    vy, vx = speed * np.sin(angle), speed * np.cos(angle)

    def bounce(p, span):
        span = max(span, 1e-9)
        p = np.mod(p, 2 * span)
        return p if p <= span else 2 * span - p

    def at(t: float) -> np.ndarray:
        img = np.broadcast_to(bg, (h, w, 3)).copy()
        y = int(round(bounce(y0 + vy * t, h - rh)))
        x = int(round(bounce(x0 + vx * t, w - rw)))
        img[y : y + rh, x : x + rw] = fg
        return img

    return at


def _regular_visual(rng: Rng, h: int, w: int):
    base = 0.35 + 0.2 * rng.uniform() + 0.05 * (rng.uniform((3,)) - 0.5)
    angle = rng.uniform() * 2 * np.pi
    rate = 0.1 * (rng.uniform() - 0.5)
    yy = np.arange(h)[:, None] / h - 0.5
    xx = np.arange(w)[None, :] / w - 0.5
    ramp = np.cos(angle) * xx + np.sin(angle) * yy

    def at(t: float) -> np.ndarray:
        g = 0.15 * ramp + rate * t
        return base[None, None, :] + g[:, :, None]

    return at


def _tone_signature(rng: Rng, t: np.ndarray, tones, am_hz: float) -> np.ndarray:
    weights = (1.0, 0.6, 0.4)
    sig = sum(a * np.sin(2 * np.pi * f * t + 2 * np.pi * rng.uniform()) for a, f in zip(weights, tones))
    am = 1.0 + 0.5 * np.sin(2 * np.pi * am_hz * t + 2 * np.pi * rng.uniform())
    return sig * am + 0.02 * rng_normal(rng, t.shape)


def _lowpass_noise(rng: Rng, n: int, width: int = 16) -> np.ndarray:
    x = rng_normal(rng, (n + 2 * width,))
    kernel = np.ones(width) / width
    y = np.convolve(np.convolve(x, kernel, mode="same"), kernel, mode="same")
    return y[width : width + n]


def _unit_rms(x: np.ndarray) -> np.ndarray:
    rms = float(np.sqrt(np.mean(x * x)))
    return x / rms if rms > 0 else x


def synth_shot(cfg: SynthConfig, rng: Rng, shot_id: str, commercial: bool) -> VideoShot:
    h, w = cfg.frame_height, cfg.frame_width
    lo, hi = cfg.duration_s
    duration = lo + (hi - lo) * rng.uniform()
    n_frames = max(1, int(round(duration * cfg.fps)))
    v, a = cfg.visual_informativeness, cfg.audio_informativeness

    if commercial:
        signature = _commercial_visual(rng, h, w, cfg.rect_luma_contrast)
    else:
        signature = _regular_visual(rng, h, w)
    agnostic = _smooth_field(rng, h, w)
    category = CATEGORIES[rng.below(len(CATEGORIES))] if cfg.categories and commercial else None
    tint = np.zeros(3)
    if category is not None:
        tint[CATEGORIES.index(category) % 3] = 0.08 if CATEGORIES.index(category) < 3 else -0.08
    frames = []
    for i in range(n_frames):
        t = i / cfg.fps
        img = v * signature(t) + (1.0 - v) * (0.5 + agnostic(t)) + tint
        img = img + cfg.frame_noise * rng_normal(rng, (h, w, 3))
        frames.append(Frame(np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)))

    n = int(round(n_frames / cfg.fps * cfg.sample_rate))
    ts = np.arange(n) / cfg.sample_rate
    if commercial:
        sig = _tone_signature(rng, ts, cfg.tones_hz, cfg.am_hz)
    else:
        sig = _lowpass_noise(rng, n)
    noise = rng_normal(rng, (n,))
    mix = a * _unit_rms(sig) + (1.0 - a) * _unit_rms(noise)
    gain = 0.2 + 0.4 * rng.uniform()
    peak = float(np.max(np.abs(mix))) or 1.0
    samples = np.clip(gain * mix / peak, -1.0, 1.0)
    return VideoShot(
        shot_id, frames, cfg.fps, AudioClip(samples, cfg.sample_rate),
        "commercial" if commercial else "regular", category,
    )


def synth_labels(cfg: SynthConfig, rng: Rng) -> list[bool]:
    n_comm = int(round(cfg.n_shots * cfg.commercial_fraction))
    labels = [True] * n_comm + [False] * (cfg.n_shots - n_comm)
    return [labels[i] for i in rng.shuffle_indices(cfg.n_shots)]


def generate_synthetic(cfg: SynthConfig, out_dir) -> Manifest:
    """Write ``cfg.n_shots`` shots and ``manifest.jsonl`` under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    master = Rng(cfg.seed)
    labels = synth_labels(cfg, master.spawn())
    order = master.spawn().shuffle_indices(cfg.n_shots)
    n_test = max(1, int(round(cfg.n_shots * cfg.test_fraction)))
    split = np.empty(cfg.n_shots, dtype=object)
    split[order[:n_test]] = "test"
    split[order[n_test:]] = "train"
    entries = []
    for i in range(cfg.n_shots):
        shot_rng = master.spawn()
        shot = synth_shot(cfg, shot_rng, f"shot_{i:05d}", labels[i])
        rel = f"shots/{shot.id}"
        write_shot(shot, out / rel)
        entries.append((rel, str(split[i])))
    manifest = Manifest(entries, out)
    write_manifest(manifest, out / "manifest.jsonl")
    log.info("wrote %d synthetic shots to %s", cfg.n_shots, out)
    return manifest
