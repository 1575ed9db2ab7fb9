"""Training loop, checkpointing, evaluation driver, inference, and the
ablation ladder. The CLI is a thin wrapper around this module.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .datasets import (
    DatasetManifest,
    ManifestEntry,
    load_canonical,
    load_clip,
    load_hcstvg,
    load_vidstg,
    load_youcook_interactions,
    sample_frames,
)
from .errors import ConfigurationError, DataError, NumericalError
from .heads import extract_interval, extract_tube
from .losses import total_loss
from .metrics import (
    EvalReport,
    aggregate,
    evaluate_sample,
    pointing_game,
)
from .model import GroundingModel, clips_to_batch, prompts_to_batch
from .plots import (
    render_tube_overlays,
    save_eval_figure,
    save_loss_curve,
    write_history_csv,
    write_samples_csv,
)
from .synthetic import SyntheticSpec, generate_synthetic, vocabulary_words
from .tokenizer import Tokenizer
from .types import (
    BoundingBox,
    GroundingAnnotation,
    ModelConfig,
    TextPrompt,
    VideoClip,
    box_center_to_corner,
)

DATA_ROOT_ENV = "VIDEOGROUND_DATA_ROOT"
CHECKPOINT_SCHEMA_VERSION = 1
TUBE_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1
GRAD_CLIP_NORM = 0.1

DATASET_KINDS = ("synthetic", "vidstg", "hcstvg", "youcook", "canonical")
# full-scale epoch defaults per dataset; synthetic/canonical are desk values
EPOCH_DEFAULTS = {"vidstg": 10, "hcstvg": 90, "synthetic": 60, "youcook": 1, "canonical": 10}


@dataclass(frozen=True)
class RunConfig:
    """Everything a training or evaluation run needs."""

    model: ModelConfig = ModelConfig()
    dataset: str = "synthetic"
    split: str = "train"
    data_root: str | None = None
    hcstvg_version: int = 1
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 8
    epochs: int | None = None
    seed: int = 0
    out_dir: str = "runs/run"
    log_every: int = 1
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)

    def __post_init__(self):
        if self.dataset not in DATASET_KINDS:
            raise ConfigurationError(f"unknown dataset {self.dataset!r}; known: {DATASET_KINDS}")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ConfigurationError("lr must be positive and weight_decay nonnegative")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be at least 1")
        if self.epochs is not None and self.epochs < 0:
            raise ConfigurationError("epochs must be nonnegative")

    @property
    def resolved_epochs(self) -> int:
        return self.epochs if self.epochs is not None else EPOCH_DEFAULTS[self.dataset]


def run_config_to_dict(config: RunConfig) -> dict:
    return dataclasses.asdict(config)


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


def run_config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    try:
        model = ModelConfig(**data.pop("model", {}))
        synth_raw = {k: _tupled(v) for k, v in data.pop("synthetic", {}).items()}
        synthetic = SyntheticSpec(**synth_raw)
        return RunConfig(model=model, synthetic=synthetic, **data)
    except TypeError as exc:
        raise ConfigurationError(f"bad config document: {exc}") from exc


def seed_everything(seed: int):
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def resolve_data_root(config: RunConfig) -> Path | None:
    root = config.data_root or os.environ.get(DATA_ROOT_ENV)
    return Path(root) if root else None


def load_manifest(config: RunConfig) -> DatasetManifest:
    root = resolve_data_root(config)
    strict = config.model.strict_interval
    if config.dataset == "synthetic":
        if root is not None and (root / "manifest.json").exists():
            return load_canonical(root / "manifest.json")
        return generate_synthetic(config.synthetic)
    if root is None:
        raise DataError(
            f"dataset {config.dataset!r} needs a data root (--config data_root or ${DATA_ROOT_ENV})"
        )
    if config.dataset == "vidstg":
        return load_vidstg(root, config.split, strict=strict)
    if config.dataset == "hcstvg":
        return load_hcstvg(root, config.hcstvg_version, config.split, strict=strict)
    if config.dataset == "youcook":
        return load_youcook_interactions(root, strict=strict)
    manifest_path = root if root.is_file() else root / "manifest.json"
    return load_canonical(manifest_path)


def build_tokenizer(manifest: DatasetManifest, root: Path | None, strict: bool = True) -> Tokenizer:
    if root is not None and (root / "vocab.txt").exists():
        return Tokenizer.load(root / "vocab.txt", strict=strict)
    return Tokenizer.from_corpus(
        [e.annotation.prompt for e in manifest.entries], strict=strict
    )


@dataclass(frozen=True)
class PreparedSample:
    entry: ManifestEntry
    clip: VideoClip
    annotation: GroundingAnnotation
    prompt: TextPrompt
    frame_indices: tuple[int, ...]


def prepare_samples(
    manifest: DatasetManifest, model_config: ModelConfig, tokenizer: Tokenizer
) -> tuple[list[PreparedSample], list[str]]:
    """Load pixels, subsample/resize, and tokenize; rejects are reported."""
    prepared, skipped = [], []
    for entry in manifest.entries:
        try:
            clip = load_clip(entry)
            sampled = sample_frames(
                clip, model_config.max_frames, entry.annotation, model_config.resolution
            )
            prompt = tokenizer.encode(entry.annotation.prompt)
        except DataError as exc:
            skipped.append(f"{entry.video_id}: {exc}")
            continue
        prepared.append(
            PreparedSample(
                entry=entry,
                clip=sampled.clip,
                annotation=sampled.annotation,
                prompt=prompt,
                frame_indices=sampled.frame_indices,
            )
        )
    return prepared, skipped


@dataclass
class TrainResult:
    checkpoint_path: Path
    history: list[dict]
    final_loss: float
    model: GroundingModel
    tokenizer: Tokenizer
    manifest: DatasetManifest


def save_checkpoint(
    path: str | Path,
    model: GroundingModel,
    optimizer: torch.optim.Optimizer | None,
    tokenizer: Tokenizer,
    config: RunConfig,
    epoch: int,
):
    payload = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "config": run_config_to_dict(config),
        "vocab": tokenizer.id_to_word[2:],
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "epoch": epoch,
        "rng": {
            "torch": torch.get_rng_state(),
            "numpy": np.random.get_state(),
            "python": random.getstate(),
        },
        "frozen_checksums": {
            k: v
            for k, v in model.group_checksums().items()
            if k in ("vision_backbone", "text_backbone")
        },
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


@dataclass
class LoadedCheckpoint:
    config: RunConfig
    model: GroundingModel
    tokenizer: Tokenizer
    epoch: int
    optimizer_state: dict | None
    rng: dict
    frozen_checksums: dict[str, str]


def load_checkpoint(path: str | Path) -> LoadedCheckpoint:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise DataError(f"unsupported checkpoint schema_version {payload.get('schema_version')}")
    config = run_config_from_dict(payload["config"])
    tokenizer = Tokenizer(payload["vocab"])
    model = GroundingModel(config.model, len(tokenizer))
    model.load_state_dict(payload["model_state"])
    model.apply_freeze()
    current = model.group_checksums()
    for group, digest in payload["frozen_checksums"].items():
        if current[group] != digest:
            raise DataError(f"frozen group {group!r} checksum mismatch in {path}")
    return LoadedCheckpoint(
        config=config,
        model=model,
        tokenizer=tokenizer,
        epoch=payload["epoch"],
        optimizer_state=payload["optimizer_state"],
        rng=payload["rng"],
        frozen_checksums=payload["frozen_checksums"],
    )


def restore_rng(rng: dict):
    torch.set_rng_state(rng["torch"])
    np.random.set_state(rng["numpy"])
    random.setstate(rng["python"])


def train(config: RunConfig, manifest: DatasetManifest | None = None) -> TrainResult:
    """Train from scratch; deterministic given config.seed.

    Writes losses.csv, loss_curve.png, and checkpoint.pt under out_dir.
    Aborts with NumericalError (naming the batch) on a non-finite loss.
    """
    seed_everything(config.seed)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if manifest is None:
        manifest = load_manifest(config)
    if not manifest.entries:
        raise DataError(f"dataset {config.dataset!r} produced no training samples")
    tokenizer = build_tokenizer(manifest, resolve_data_root(config))
    samples, skipped = prepare_samples(manifest, config.model, tokenizer)
    if not samples:
        raise DataError(f"no usable samples after preparation; skips: {skipped}")
    model = GroundingModel(config.model, len(tokenizer))
    model.apply_freeze()
    model.train()
    trainable = model.trainable_parameters()
    optimizer = torch.optim.AdamW(trainable, lr=config.lr, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    history: list[dict] = []
    step = 0
    checkpoint_path = out_dir / "checkpoint.pt"
    for epoch in range(config.resolved_epochs):
        perm = rng.permutation(len(samples))
        for b, start in enumerate(range(0, len(samples), config.batch_size)):
            batch = [samples[int(j)] for j in perm[start : start + config.batch_size]]
            frames, frame_mask = clips_to_batch([s.clip for s in batch])
            tokens, pad_mask = prompts_to_batch([s.prompt for s in batch])
            output = model(frames, tokens, frame_mask, pad_mask)
            report = total_loss(output, [s.annotation for s in batch], config.model)
            if not math.isfinite(report.total):
                batch_id = f"epoch{epoch}:batch{b}"
                dump = {
                    "batch_id": batch_id,
                    "video_ids": [s.entry.video_id for s in batch],
                    "step": step,
                    "loss": report.total,
                }
                (out_dir / "diverged_batch.json").write_text(json.dumps(dump, indent=2))
                raise NumericalError(f"non-finite loss {report.total}", batch_id=batch_id)
            optimizer.zero_grad()
            report.loss.backward()
            torch.nn.utils.clip_grad_norm_(trainable, GRAD_CLIP_NORM)
            optimizer.step()
            if step % config.log_every == 0:
                history.append(
                    {
                        "epoch": epoch,
                        "step": step,
                        "loss": report.total,
                        "l1": report.l1,
                        "giou": report.giou,
                        "kl_start": report.kl_start,
                        "kl_end": report.kl_end,
                        "confidence": report.confidence,
                    }
                )
            step += 1
        save_checkpoint(checkpoint_path, model, optimizer, tokenizer, config, epoch)
    if config.resolved_epochs == 0:
        save_checkpoint(checkpoint_path, model, optimizer, tokenizer, config, -1)
    write_history_csv(history, out_dir / "losses.csv")
    if history:
        save_loss_curve(history, out_dir / "loss_curve.png")
    final_loss = history[-1]["loss"] if history else float("nan")
    return TrainResult(
        checkpoint_path=checkpoint_path,
        history=history,
        final_loss=final_loss,
        model=model,
        tokenizer=tokenizer,
        manifest=manifest,
    )


def evaluate(
    model: GroundingModel,
    tokenizer: Tokenizer,
    manifest: DatasetManifest,
    model_config: ModelConfig,
    out_dir: str | Path | None = None,
) -> dict[str, EvalReport]:
    """Per-sample inference + metric aggregation.

    Returns reports keyed "all" plus one per sentence kind when the manifest
    mixes kinds. Single-frame ground truths additionally score the pointing
    game (predicted box at the annotated frame).
    """
    if not manifest.entries:
        raise DataError("cannot evaluate an empty manifest")
    samples, skipped = prepare_samples(manifest, model_config, tokenizer)
    if not samples:
        raise DataError(f"no evaluable samples; skips: {skipped}")
    results = []
    pointing: list[bool] = []
    for s in samples:
        preds, dists = model.predict_sample(s.clip, s.prompt)
        interval, score = extract_interval(dists, strict=model_config.strict_interval)
        tube = extract_tube(preds, interval, score)
        results.append(evaluate_sample(tube, s.annotation))
        if s.annotation.interval.n_frames == 1:
            t = s.annotation.interval.t_s
            q = int(np.argmax(preds.query_scores[t]))
            box = BoundingBox(*(float(c) for c in preds.boxes[t, q]))
            pointing.append(pointing_game(box, s.annotation.boxes[t]))
    reports = {"all": aggregate(results, pointing_hits=pointing or None)}
    kinds = {r.sentence_kind for r in results}
    if len(kinds) > 1:
        for kind in sorted(kinds):
            sub = [r for r in results if r.sentence_kind == kind]
            reports[kind] = aggregate(sub)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "dataset": manifest.kind,
            "split": manifest.split,
            "skipped": skipped,
            "reports": {name: r.to_dict() for name, r in reports.items()},
        }
        (out_dir / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        write_samples_csv(reports["all"], out_dir / "per_sample.csv")
        save_eval_figure(reports["all"], out_dir / "eval_metrics.png")
    return reports


def infer(
    model: GroundingModel,
    tokenizer: Tokenizer,
    clip: VideoClip,
    caption: str,
    video_id: str = "video",
    include_distributions: bool = False,
) -> dict:
    """Ground a caption in a clip; returns the canonical tube JSON document
    (1-based frame ids of the ORIGINAL clip, top-left pixel boxes)."""
    config = model.config
    sampled = sample_frames(clip, config.max_frames, None, config.resolution)
    prompt = tokenizer.encode(caption)
    preds, dists = model.predict_sample(sampled.clip, prompt)
    interval, score = extract_interval(dists, strict=config.strict_interval)
    tube = extract_tube(preds, interval, score)
    boxes = []
    for t in interval.frames():
        x, y, w, h = box_center_to_corner(tube.boxes[t], clip.width, clip.height)
        boxes.append(
            {
                "t": sampled.frame_indices[t] + 1,
                "x": round(x, 4),
                "y": round(y, 4),
                "w": round(w, 4),
                "h": round(h, 4),
            }
        )
    out = {
        "schema_version": TUBE_SCHEMA_VERSION,
        "video_id": video_id,
        "caption": caption,
        "t_s": sampled.frame_indices[interval.t_s] + 1,
        "t_e": sampled.frame_indices[interval.t_e] + 1,
        "score": score,
        "width": clip.width,
        "height": clip.height,
        "boxes": boxes,
    }
    if include_distributions:
        out["tau_s"] = [float(v) for v in dists.tau_s]
        out["tau_e"] = [float(v) for v in dists.tau_e]
        out["sampled_frames"] = [t + 1 for t in sampled.frame_indices]
    return out


def visualize_tube(tube: dict, clip: VideoClip, out_dir: str | Path) -> list[Path]:
    """Render one overlay PNG per tube frame from a tube JSON document."""
    if tube.get("schema_version") != TUBE_SCHEMA_VERSION:
        raise DataError(f"unsupported tube schema_version {tube.get('schema_version')}")
    pixel_boxes = {
        int(b["t"]) - 1: (float(b["x"]), float(b["y"]), float(b["w"]), float(b["h"]))
        for b in tube["boxes"]
    }
    return render_tube_overlays(clip, pixel_boxes, out_dir)


ABLATION_LADDER = (
    "frozen-baseline",
    "+decoder-temporal",
    "+encoder-temporal",
    "+decoder-spatial-finetune",
    "+encoder-spatial-finetune",
)


def ablation_matrix(base: RunConfig) -> list[tuple[str, RunConfig]]:
    """Cumulative toggle ladder: each row enables exactly one more group."""
    steps = [
        {},
        {"decoder_temporal": True},
        {"encoder_temporal": True},
        {"finetune_decoder_spatial": True},
        {"finetune_encoder_spatial": True},
    ]
    toggles = {
        "encoder_temporal": False,
        "decoder_temporal": False,
        "finetune_encoder_spatial": False,
        "finetune_decoder_spatial": False,
    }
    rows = []
    for i, (label, step) in enumerate(zip(ABLATION_LADDER, steps)):
        toggles.update(step)
        model = dataclasses.replace(base.model, **toggles)
        slug = label.strip("+").replace("-", "_")
        row_config = dataclasses.replace(
            base, model=model, out_dir=str(Path(base.out_dir) / f"row{i}_{slug}")
        )
        rows.append((label, row_config))
    return rows


def run_ablation(base: RunConfig) -> list[dict]:
    """Train and evaluate every ladder row; returns one summary dict per row."""
    summary = []
    for label, row_config in ablation_matrix(base):
        result = train(row_config)
        reports = evaluate(
            result.model, result.tokenizer, result.manifest, row_config.model,
            out_dir=row_config.out_dir,
        )
        report = reports["all"]
        summary.append(
            {
                "row": label,
                "m_tIoU": report.m_tiou,
                "m_vIoU": report.m_viou,
                **{f"vIoU@{r}": v for r, v in sorted(report.viou_at.items())},
                "final_loss": result.final_loss,
            }
        )
    return summary
