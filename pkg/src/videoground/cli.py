"""Command-line interface.

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 numerical abort during training.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from .datasets import load_frames_dir
from .errors import (
    ConfigurationError,
    DataError,
    NumericalError,
    VideoGroundError,
)
from . import harness
from .harness import (
    RunConfig,
    ablation_matrix,
    evaluate,
    infer,
    load_checkpoint,
    load_manifest,
    run_ablation,
    run_config_from_dict,
    run_config_to_dict,
    train,
    visualize_tube,
)
from .synthetic import generate_synthetic, vocabulary_words, write_synthetic


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors instead of argparse's 2
        raise _UsageError(f"{self.prog}: {message}")


def _load_config(args) -> RunConfig:
    data = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise _UsageError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise _UsageError(f"config file is not valid JSON: {exc}") from exc
    config = run_config_from_dict(data)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if getattr(args, "dataset", None) is not None:
        overrides["dataset"] = args.dataset
    if getattr(args, "split", None) is not None:
        overrides["split"] = args.split
    if getattr(args, "data_root", None) is not None:
        overrides["data_root"] = args.data_root
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    return dataclasses.replace(config, **overrides) if overrides else config


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON file mirroring RunConfig")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None, help="output directory override")


def build_parser() -> _Parser:
    parser = _Parser(prog="videoground", description="Spatio-temporal video grounding toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_train = sub.add_parser("train", help="train a model and write checkpoint + loss curves")
    _add_common(p_train)
    p_train.add_argument("--dataset", choices=harness.DATASET_KINDS, default=None)
    p_train.add_argument("--split", default=None)
    p_train.add_argument("--data-root", dest="data_root", default=None)
    p_train.add_argument("--epochs", type=int, default=None)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    _add_common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--dataset", choices=harness.DATASET_KINDS, default=None)
    p_eval.add_argument("--split", default=None)
    p_eval.add_argument("--data-root", dest="data_root", default=None)

    p_infer = sub.add_parser("infer", help="ground a caption in a frame directory")
    _add_common(p_infer)
    p_infer.add_argument("--checkpoint", required=True)
    p_infer.add_argument("--video", required=True, help="directory of frame images")
    p_infer.add_argument("--caption", required=True)
    p_infer.add_argument(
        "--dump-distributions", action="store_true", help="include tau_s/tau_e in the output JSON"
    )

    p_vis = sub.add_parser("visualize", help="draw tube boxes onto frames")
    _add_common(p_vis)
    p_vis.add_argument("--tube", required=True, help="tube JSON produced by infer")
    p_vis.add_argument("--video", required=True, help="directory of frame images")

    p_synth = sub.add_parser("synth", help="generate a synthetic moving-shapes dataset")
    _add_common(p_synth)
    p_synth.add_argument("--n-videos", type=int, default=None)
    p_synth.add_argument("--frames", type=int, default=None)
    p_synth.add_argument("--size", type=int, default=None, help="frame height=width in pixels")

    p_ablate = sub.add_parser("ablate", help="emit (and optionally run) the toggle ladder")
    _add_common(p_ablate)
    p_ablate.add_argument("--run", action="store_true", help="train+eval every ladder row")
    p_ablate.add_argument("--dataset", choices=harness.DATASET_KINDS, default=None)
    p_ablate.add_argument("--data-root", dest="data_root", default=None)
    p_ablate.add_argument("--epochs", type=int, default=None)
    return parser


def _cmd_train(args) -> int:
    config = _load_config(args)
    result = train(config)
    print(f"trained {config.resolved_epochs} epochs on {config.dataset}")
    print(f"final loss: {result.final_loss:.6f}")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"curves: {Path(config.out_dir) / 'loss_curve.png'}, {Path(config.out_dir) / 'losses.csv'}")
    return 0


def _cmd_eval(args) -> int:
    config = _load_config(args)
    loaded = load_checkpoint(args.checkpoint)
    eval_config = dataclasses.replace(
        config, model=loaded.config.model, out_dir=args.out or config.out_dir
    )
    manifest = load_manifest(eval_config)
    reports = evaluate(
        loaded.model, loaded.tokenizer, manifest, eval_config.model, out_dir=eval_config.out_dir
    )
    for name, report in reports.items():
        vline = " ".join(f"vIoU@{r}={v:.4f}" for r, v in sorted(report.viou_at.items()))
        extra = (
            f" pointing={report.pointing_accuracy:.4f}"
            if report.pointing_accuracy is not None
            else ""
        )
        print(
            f"[{name}] n={report.sample_count} m_tIoU={report.m_tiou:.4f} "
            f"m_vIoU={report.m_viou:.4f} {vline}{extra}"
        )
    print(f"report: {Path(eval_config.out_dir) / 'report.json'}")
    return 0


def _cmd_infer(args) -> int:
    loaded = load_checkpoint(args.checkpoint)
    clip = load_frames_dir(args.video)
    tube = infer(
        loaded.model,
        loaded.tokenizer,
        clip,
        args.caption,
        video_id=Path(args.video).name,
        include_distributions=args.dump_distributions,
    )
    text = json.dumps(tube, indent=2)
    if args.out:
        out_path = Path(args.out)
        if out_path.suffix != ".json":
            out_path.mkdir(parents=True, exist_ok=True)
            out_path = out_path / "tube.json"
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(text + "\n")
        print(f"tube: {out_path}")
    else:
        print(text)
    return 0


def _cmd_visualize(args) -> int:
    tube_path = Path(args.tube)
    if not tube_path.exists():
        raise DataError(f"tube file not found: {tube_path}")
    tube = json.loads(tube_path.read_text(encoding="utf-8"))
    clip = load_frames_dir(args.video)
    out_dir = Path(args.out or "overlays")
    written = visualize_tube(tube, clip, out_dir)
    print(f"wrote {len(written)} overlay frames to {out_dir}")
    return 0


def _cmd_synth(args) -> int:
    config = _load_config(args)
    spec = config.synthetic
    updates = {}
    if args.n_videos is not None:
        updates["n_videos"] = args.n_videos
    if args.frames is not None:
        updates["num_frames"] = args.frames
    if args.size is not None:
        updates["height"] = args.size
        updates["width"] = args.size
    if args.seed is not None:
        updates["seed"] = args.seed
    if updates:
        spec = dataclasses.replace(spec, **updates)
    manifest = generate_synthetic(spec)
    out_dir = Path(args.out or "synthetic_data")
    manifest_path = write_synthetic(manifest, out_dir, vocabulary_words(spec))
    print(f"generated {len(manifest)} videos")
    print(f"manifest: {manifest_path}")
    return 0


def _cmd_ablate(args) -> int:
    config = _load_config(args)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = ablation_matrix(config)
    for i, (label, row_config) in enumerate(rows):
        path = out_dir / f"row{i}.json"
        path.write_text(json.dumps(run_config_to_dict(row_config), indent=2, sort_keys=True) + "\n")
        print(f"{label}: {path}")
    if args.run:
        summary = run_ablation(config)
        csv_path = out_dir / "ablation.csv"
        with open(csv_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=list(summary[0].keys()))
            writer.writeheader()
            writer.writerows(summary)
        for row in summary:
            print(f"{row['row']}: m_tIoU={row['m_tIoU']:.4f} m_vIoU={row['m_vIoU']:.4f}")
        print(f"summary: {csv_path}")
    return 0


COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
    "visualize": _cmd_visualize,
    "synth": _cmd_synth,
    "ablate": _cmd_ablate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        batch = f" (batch {exc.batch_id})" if exc.batch_id else ""
        print(f"numerical abort: {exc}{batch}", file=sys.stderr)
        return 3
    except (DataError, VideoGroundError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
