"""Figure and CSV rendering for training logs, evaluation reports, and
box-overlay visualizations."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from PIL import Image, ImageDraw

from .errors import DataError
from .metrics import EvalReport
from .types import VideoClip

HISTORY_FIELDS = ("epoch", "step", "loss", "l1", "giou", "kl_start", "kl_end", "confidence")


def write_history_csv(history: list[dict], path: str | Path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=HISTORY_FIELDS, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(history)


def save_loss_curve(history: list[dict], path: str | Path):
    steps = [row["step"] for row in history]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, [row["loss"] for row in history], label="total", linewidth=1.5)
    for key in ("l1", "giou", "kl_start", "kl_end", "confidence"):
        if history and key in history[0]:
            ax.plot(steps, [row[key] for row in history], label=key, alpha=0.6, linewidth=0.9)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title("training loss")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_samples_csv(report: EvalReport, path: str | Path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["video_id", "sentence_kind", "tIoU", "vIoU"])
        for s in report.samples:
            writer.writerow([s.video_id, s.sentence_kind, f"{s.t_iou:.6f}", f"{s.v_iou:.6f}"])


def save_eval_figure(report: EvalReport, path: str | Path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    labels = ["m_tIoU", "m_vIoU"] + [f"vIoU@{r}" for r in sorted(report.viou_at)]
    values = [report.m_tiou, report.m_viou] + [report.viou_at[r] for r in sorted(report.viou_at)]
    ax1.bar(labels, values, color="steelblue")
    ax1.set_ylim(0, 1)
    ax1.set_title(f"metrics over {report.sample_count} samples")
    ax1.tick_params(axis="x", rotation=30)
    vious = [s.v_iou for s in report.samples]
    ax2.hist(vious, bins=np.linspace(0, 1, 21), color="darkorange", edgecolor="black")
    ax2.set_xlabel("vIoU")
    ax2.set_ylabel("samples")
    ax2.set_title("per-sample vIoU")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_tube_overlays(
    clip: VideoClip,
    pixel_boxes: dict[int, tuple[float, float, float, float]],
    out_dir: str | Path,
    color: tuple[int, int, int] = (255, 32, 32),
) -> list[Path]:
    """Draw one rectangle per annotated frame; boxes are top-left pixel
    (x, y, w, h) on the clip's own pixel grid. Returns written paths."""
    if not pixel_boxes:
        raise DataError("no boxes to draw (empty interval)")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for t in sorted(pixel_boxes):
        if not 0 <= t < clip.num_frames:
            raise DataError(f"frame {t} outside clip of {clip.num_frames} frames")
        x, y, w, h = pixel_boxes[t]
        img = Image.fromarray((clip.frames[t] * 255.0 + 0.5).astype(np.uint8))
        draw = ImageDraw.Draw(img)
        x1, y1 = round(x), round(y)
        x2, y2 = round(x + w), round(y + h)
        x1 = max(0, min(x1, clip.width - 1))
        x2 = max(0, min(x2, clip.width - 1))
        y1 = max(0, min(y1, clip.height - 1))
        y2 = max(0, min(y2, clip.height - 1))
        draw.rectangle([x1, y1, x2, y2], outline=color, width=1)
        path = out_dir / f"frame_{t:04d}.png"
        img.save(path)
        written.append(path)
    return written
