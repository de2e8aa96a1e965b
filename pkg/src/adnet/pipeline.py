"""Video-level flow: shot boundaries, per-shot classification, segment merging, metrics."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from adnet.data import VideoShot
from adnet.errors import ConfigError, ValidationError
from adnet.model import EpochRecord
from adnet.signal import AudioClip
from adnet.vision import Frame


@dataclass(frozen=True)
class ShotBoundaryConfig:
    bins_per_channel: int = 8
    threshold: float = 0.5
    min_shot_length: int = 12

    def __post_init__(self):
        if not 0.0 < self.threshold <= 2.0:
            raise ConfigError(f"cut threshold must lie in (0, 2], got {self.threshold}")
        if 256 % self.bins_per_channel or self.min_shot_length < 1:
            raise ConfigError("bins_per_channel must divide 256 and min_shot_length must be >= 1")


@dataclass(frozen=True)
class MergeConfig:
    threshold: float = 0.5
    bridge: float = 0.3


@dataclass
class Segment:
    start_frame: int
    end_frame: int
    label: str
    confidence: float
    shots: int = 1

    def to_json(self) -> dict:
        return {
            "start_frame": self.start_frame,
            "end_frame": self.end_frame,
            "label": self.label,
            "confidence": self.confidence,
        }


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float | None
    recall: float | None
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


# -- shot boundaries ---------------------------------------------------------


def color_histogram(frame: Frame, bins_per_channel: int = 8) -> np.ndarray:
    """Joint RGB histogram (``bins^3`` cells) normalized to sum 1."""
    q = frame.data.astype(np.int64) // (256 // bins_per_channel)
    idx = (q[..., 0] * bins_per_channel + q[..., 1]) * bins_per_channel + q[..., 2]
    hist = np.bincount(idx.ravel(), minlength=bins_per_channel**3).astype(np.float64)
    return hist / idx.size


def detect_shots(frames: Sequence[Frame], cfg: ShotBoundaryConfig = ShotBoundaryConfig()) -> list[tuple[int, int]]:
    """Hard-cut detection; returns inclusive ``(start, end)`` spans tiling the video."""
    if not frames:
        raise ValidationError("no frames to segment")
    hists = [color_histogram(f, cfg.bins_per_channel) for f in frames]
    starts = [0] + [
        i for i in range(1, len(frames)) if np.abs(hists[i] - hists[i - 1]).sum() > cfg.threshold
    ]
    spans = [(s, e - 1) for s, e in zip(starts, starts[1:] + [len(frames)])]
    merged: list[tuple[int, int]] = []
    for s, e in spans:
        if merged and e - s + 1 < cfg.min_shot_length:
            merged[-1] = (merged[-1][0], e)
        else:
            merged.append((s, e))
    if len(merged) > 1 and merged[0][1] - merged[0][0] + 1 < cfg.min_shot_length:
        merged[0:2] = [(merged[0][0], merged[1][1])]
    return merged


# -- classification and post-processing --------------------------------------


def slice_shot(
    frames: Sequence[Frame], audio: AudioClip, span: tuple[int, int], fps: float, shot_id: str = "shot"
) -> VideoShot:
    """Frames of ``span`` plus the proportional slice of the soundtrack."""
    start, end = span
    n_frames, n_samples = len(frames), audio.samples.size
    a0 = int(round(start / n_frames * n_samples))
    a1 = max(int(round((end + 1) / n_frames * n_samples)), a0 + 1)
    clip = AudioClip(audio.samples[a0 : min(a1, n_samples)] if a0 < n_samples else audio.samples[-1:], audio.sample_rate)
    return VideoShot(shot_id, list(frames[start : end + 1]), fps, clip, None)


def merge_segments(segments: Sequence[Segment], cfg: MergeConfig = MergeConfig()) -> list[Segment]:
    """Bridge lone regular shots between commercials, then fuse same-label neighbours.

    A regular segment made of a single shot whose neighbours are both
    commercial becomes commercial iff its confidence is at least
    ``cfg.bridge``. Confidence of a fused segment is the mean over its shots.
    Applying this to its own output changes nothing.
    """
    segs = list(segments)
    labels = [s.label for s in segs]
    for k in range(1, len(segs) - 1):
        s = segs[k]
        if (
            labels[k] == "regular" and s.shots == 1
            and labels[k - 1] == "commercial" and labels[k + 1] == "commercial"
            and s.confidence >= cfg.bridge
        ):
            labels[k] = "commercial"
    out: list[Segment] = []
    group: list[Segment] = []
    for s, label in zip(segs, labels):
        if group and label != group[0].label:
            out.append(_fuse(group))
            group = []
        group.append(s if s.label == label else Segment(s.start_frame, s.end_frame, label, s.confidence, s.shots))
    if group:
        out.append(_fuse(group))
    return out


def _fuse(group: list[Segment]) -> Segment:
    if len(group) == 1:
        return group[0]
    shots = sum(s.shots for s in group)
    conf = sum(s.confidence * s.shots for s in group) / shots
    return Segment(group[0].start_frame, group[-1].end_frame, group[0].label, conf, shots)


def shot_segments(spans: Sequence[tuple[int, int]], probs: Sequence[float], cfg: MergeConfig = MergeConfig()) -> list[Segment]:
    if len(spans) != len(probs):
        raise ValidationError("need one probability per shot")
    return [
        Segment(s, e, "commercial" if p >= cfg.threshold else "regular", float(p))
        for (s, e), p in zip(spans, probs)
    ]


def classify_and_merge(
    frames: Sequence[Frame],
    audio: AudioClip,
    shot_spans: Sequence[tuple[int, int]],
    model: Callable[[VideoShot], object],
    merge_cfg: MergeConfig = MergeConfig(),
    fps: float = 25.0,
) -> list[Segment]:
    """Classify every shot with ``model`` and post-process into segments.

    ``model`` maps a shot to a probability of being commercial, or to any
    object with a ``p_commercial`` attribute.
    """
    probs = []
    for k, span in enumerate(shot_spans):
        out = model(slice_shot(frames, audio, span, fps, f"shot_{k:05d}"))
        probs.append(float(getattr(out, "p_commercial", out)))
    return merge_segments(shot_segments(shot_spans, probs, merge_cfg), merge_cfg)


def write_segments(segments: Iterable[Segment], path) -> None:
    Path(path).write_text(json.dumps([s.to_json() for s in segments], indent=2) + "\n")


# -- metrics -----------------------------------------------------------------


def _positive(x) -> bool:
    if isinstance(x, str):
        if x not in ("commercial", "regular"):
            raise ValidationError(f"unknown label {x!r}")
        return x == "commercial"
    return bool(x)


def evaluate(predictions: Sequence[tuple[object, object]]) -> Metrics:
    """Confusion counts with commercial as the positive class; undefined rates are None."""
    if not predictions:
        raise ValidationError("cannot evaluate an empty prediction list")
    tp = fp = tn = fn = 0
    for pred, truth in predictions:
        p, t = _positive(pred), _positive(truth)
        if p and t:
            tp += 1
        elif p:
            fp += 1
        elif t:
            fn += 1
        else:
            tn += 1
    return Metrics(
        accuracy=(tp + tn) / len(predictions),
        precision=tp / (tp + fp) if tp + fp else None,
        recall=tp / (tp + fn) if tp + fn else None,
        tp=tp, fp=fp, tn=tn, fn=fn,
    )


# -- curves ------------------------------------------------------------------

CURVE_FIELDS = ("epoch", "lr", "train_loss", "train_acc", "test_acc")


def export_curves(curves, path) -> None:
    """CSV with one row per epoch; floats written with round-trip precision."""
    if not curves:
        raise ValidationError("no curve records to export")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_FIELDS)
        for rec in curves:
            w.writerow([rec.epoch] + [repr(float(getattr(rec, f))) for f in CURVE_FIELDS[1:]])


def read_curves(path) -> list[EpochRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        EpochRecord(int(r["epoch"]), *(float(r[f]) for f in CURVE_FIELDS[1:]))
        for r in rows
    ]
