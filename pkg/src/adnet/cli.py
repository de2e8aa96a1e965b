"""Command-line entry point.

Exit codes: 0 on success, 1 on validation or configuration errors (including
bad flags), 2 on I/O or file-format errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from adnet import model as M
from adnet.baselines import run_baseline
from adnet.data import SynthConfig, generate_synthetic, load_dataset, read_manifest, read_ppm, read_shot, read_wav
from adnet.errors import ValidationError
from adnet.gradcheck import TOLERANCE, run_gradcheck
from adnet.nn import SgdConfig
from adnet.pipeline import (
    MergeConfig, ShotBoundaryConfig, classify_and_merge, detect_shots, evaluate, export_curves, write_segments,
)
from adnet.signal import SpectrogramConfig
from adnet.vision import VisualConfig

log = logging.getLogger("adnet")

MODALITIES = ("av", "visual", "audio")


class UsageError(ValidationError):
    def __init__(self, message: str, usage: str):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self.format_usage())


def _seed_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for all randomness (default 0)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adnet", description="Two-stream audio-visual commercial detector.")
    parser.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for all randomness (default 0)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    seed = [_seed_parent()]

    p = sub.add_parser("gen-data", parents=seed, help="write a seeded synthetic corpus")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--shots", required=True, type=int)
    p.add_argument("--visual-informativeness", type=float, default=1.0)
    p.add_argument("--audio-informativeness", type=float, default=1.0)
    p.add_argument("--categories", action="store_true", help="tint commercials by ad category")

    p = sub.add_parser("train", parents=seed, help="train a model and write its learning curves")
    p.add_argument("--data", required=True, type=Path, help="manifest.jsonl")
    p.add_argument("--out", required=True, type=Path, help="model file to write")
    p.add_argument("--curves", required=True, type=Path, help="CSV to write")
    p.add_argument("--modality", choices=MODALITIES, default="av")
    p.add_argument("--epochs", type=int, default=SgdConfig.epochs)
    p.add_argument("--batch", type=int, default=SgdConfig.batch_size)
    p.add_argument("--side", type=int, default=VisualConfig.side)

    p = sub.add_parser("eval", parents=seed, help="score a model on a manifest's test split")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--modality", choices=MODALITIES, default="av")

    p = sub.add_parser("predict", parents=seed, help="classify one shot directory")
    p.add_argument("--shot", required=True, type=Path)
    p.add_argument("--model", required=True, type=Path)

    p = sub.add_parser("segment", parents=seed, help="find commercial segments in a frame sequence")
    p.add_argument("--frames", required=True, type=Path, help="directory of PPM frames, sorted by name")
    p.add_argument("--audio", required=True, type=Path, help="WAV soundtrack")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--fps", type=float, default=25.0)

    p = sub.add_parser("baseline", parents=seed, help="HOG or LBP features with a linear SVM")
    p.add_argument("--feature", required=True, choices=("hog", "lbp"))
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--side", type=int, default=VisualConfig.side)

    sub.add_parser("gradcheck", parents=seed, help="finite-difference check of every gradient")
    return parser


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _resolved(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        out[k] = str(v) if isinstance(v, Path) else v
    return out


def _load_model(path: Path):
    params = M.load_params(path)
    return params, M.config_from_params(params)


def cmd_gen_data(args) -> int:
    cfg = SynthConfig(
        n_shots=args.shots,
        seed=args.seed,
        visual_informativeness=args.visual_informativeness,
        audio_informativeness=args.audio_informativeness,
        categories=args.categories,
    )
    manifest = generate_synthetic(cfg, args.out)
    _emit({"manifest": str(args.out / "manifest.jsonl"), "train": len(manifest.paths("train")), "test": len(manifest.paths("test"))})
    return 0


def cmd_train(args) -> int:
    manifest = read_manifest(args.data)
    vcfg = VisualConfig(side=args.side)
    scfg = SpectrogramConfig(output_side=args.side)
    dataset = load_dataset(manifest, vcfg, scfg)
    tcfg = M.TrainConfig(SgdConfig(batch_size=args.batch, epochs=args.epochs), modality=args.modality, seed=args.seed)
    cfg = M.AdNetConfig(input_side=args.side, visual_channels=vcfg.channels)
    params, curves = M.train(dataset, tcfg, cfg)
    M.save_params(params, args.out)
    export_curves(curves, args.curves)
    last = curves[-1]
    _emit({"model": str(args.out), "curves": str(args.curves), "train_acc": last.train_acc, "test_acc": last.test_acc})
    return 0


def cmd_eval(args) -> int:
    params, cfg = _load_model(args.model)
    manifest = read_manifest(args.data)
    vcfg = VisualConfig(keyframes=cfg.visual_channels // 3, side=cfg.input_side)
    dataset = load_dataset(manifest, vcfg, SpectrogramConfig(output_side=cfg.input_side))
    probs = M.predict_proba(params, cfg, dataset.test, args.modality)
    m = evaluate(list(zip(probs >= 0.5, dataset.test.labels == 1)))
    _emit({"accuracy": m.accuracy, "precision": m.precision, "recall": m.recall,
           "tp": m.tp, "fp": m.fp, "tn": m.tn, "fn": m.fn})
    return 0


def cmd_predict(args) -> int:
    params, cfg = _load_model(args.model)
    shot = read_shot(args.shot)
    pred = M.predict_shot(params, cfg, shot)
    out = {"id": shot.id, "p_commercial": pred.p_commercial, "label": "commercial" if pred.is_commercial else "regular"}
    if pred.category_probs is not None:
        out["category"] = M.category_names()[int(np.argmax(pred.category_probs))]
    _emit(out)
    return 0


def cmd_segment(args) -> int:
    params, cfg = _load_model(args.model)
    paths = sorted(args.frames.glob("*.ppm"))
    if not paths:
        raise ValidationError(f"{args.frames}: no .ppm frames")
    frames = [read_ppm(p) for p in paths]
    audio = read_wav(args.audio)
    spans = detect_shots(frames, ShotBoundaryConfig())
    segments = classify_and_merge(
        frames, audio, spans, lambda shot: M.predict_shot(params, cfg, shot), MergeConfig(), args.fps
    )
    write_segments(segments, args.out)
    _emit({"shots": len(spans), "segments": len(segments), "out": str(args.out)})
    return 0


def cmd_baseline(args) -> int:
    manifest = read_manifest(args.data)
    res = run_baseline(manifest, args.feature, VisualConfig(side=args.side), seed=args.seed)
    _emit({"feature": res.kind, "train_acc": res.train_accuracy, "test_acc": res.test_accuracy})
    return 0


def cmd_gradcheck(args) -> int:
    rep = run_gradcheck(args.seed)
    worst = max(rep.errors, key=rep.errors.get)
    _emit({"max_relative_error": rep.max_error, "worst": worst, "checked": len(rep.errors),
           "skipped_coordinates": sum(rep.skipped.values())})
    return 0 if rep.passed(TOLERANCE) else 1


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "segment": cmd_segment,
    "baseline": cmd_baseline,
    "gradcheck": cmd_gradcheck,
}


def run(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if not hasattr(args, "seed"):
            args.seed = 0
        print("config: " + json.dumps(_resolved(args), sort_keys=True))
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(exc.usage)
        print(f"adnet: error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"adnet: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"adnet: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
