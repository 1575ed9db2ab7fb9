"""Training objective: spatial L1 + GIoU over ground-truth interval frames,
temporal KL against Gaussian start/end heatmaps, and a per-query confidence
term. Auxiliary decoder layers receive the same losses with equal weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

from .errors import InvalidBoxError, InvalidIntervalError
from .heads import TemporalDistributions
from .model import LayerPredictions, ModelOutput
from .types import GroundingAnnotation, ModelConfig, TemporalInterval

KL_EPS = 1e-12  # floor inside log; softmax outputs can underflow to 0


@dataclass(frozen=True)
class GaussianHeatmaps:
    """Normalized start/end target distributions over T frames."""

    pi_s: np.ndarray
    pi_e: np.ndarray

    def __post_init__(self):
        for name, pi in (("pi_s", self.pi_s), ("pi_e", self.pi_e)):
            if pi.min() < 0 or abs(pi.sum() - 1.0) > 1e-8:
                raise InvalidIntervalError(f"{name} is not a normalized heatmap")


@dataclass(frozen=True)
class LossReport:
    """Scalar components of one loss evaluation (final decoder layer), the
    per-layer auxiliary breakdown, and the differentiable total.

    total = l1_weight*l1 + giou_weight*giou + kl_start + kl_end + confidence
            + the same combination for every auxiliary layer.
    """

    l1: float
    giou: float
    kl_start: float
    kl_end: float
    confidence: float
    aux: tuple[dict[str, float], ...]
    total: float
    loss: Tensor


def center_to_corners(boxes: Tensor) -> Tensor:
    cx, cy, w, h = boxes.unbind(-1)
    return torch.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], dim=-1)


def generalized_iou(pred: Tensor, gt: Tensor) -> Tensor:
    """Elementwise GIoU of aligned center-format boxes: (..., 4) -> (...)."""
    if (gt[..., 2] <= 0).any() or (gt[..., 3] <= 0).any():
        raise InvalidBoxError("ground-truth box with non-positive area")
    p, g = center_to_corners(pred), center_to_corners(gt)
    ix1 = torch.maximum(p[..., 0], g[..., 0])
    iy1 = torch.maximum(p[..., 1], g[..., 1])
    ix2 = torch.minimum(p[..., 2], g[..., 2])
    iy2 = torch.minimum(p[..., 3], g[..., 3])
    inter = (ix2 - ix1).clamp(min=0) * (iy2 - iy1).clamp(min=0)
    area_p = (p[..., 2] - p[..., 0]).clamp(min=0) * (p[..., 3] - p[..., 1]).clamp(min=0)
    area_g = (g[..., 2] - g[..., 0]) * (g[..., 3] - g[..., 1])
    union = area_p + area_g - inter
    iou = inter / union
    ex1 = torch.minimum(p[..., 0], g[..., 0])
    ey1 = torch.minimum(p[..., 1], g[..., 1])
    ex2 = torch.maximum(p[..., 2], g[..., 2])
    ey2 = torch.maximum(p[..., 3], g[..., 3])
    enclosing = (ex2 - ex1) * (ey2 - ey1)
    return iou - (enclosing - union) / enclosing


def l1_loss(pred: Tensor, gt: Tensor) -> Tensor:
    """Mean absolute difference over interval frames and the 4 coordinates."""
    if pred.numel() == 0:
        raise InvalidIntervalError("spatial loss over an empty interval")
    return (pred - gt).abs().mean()


def giou_loss(pred: Tensor, gt: Tensor) -> Tensor:
    """Mean over frames of 1 - GIoU; lies in [0, 2]."""
    if pred.numel() == 0:
        raise InvalidIntervalError("spatial loss over an empty interval")
    return (1.0 - generalized_iou(pred, gt)).mean()


def make_heatmaps(interval: TemporalInterval, num_frames: int, sigma: float) -> GaussianHeatmaps:
    """pi[t] proportional to exp(-(t - peak)^2 / (2 sigma^2)), normalized to sum 1."""
    if sigma <= 0:
        raise InvalidIntervalError(f"sigma must be positive, got {sigma}")
    interval.check_within(num_frames)
    t = np.arange(num_frames, dtype=np.float64)
    pi_s = np.exp(-((t - interval.t_s) ** 2) / (2 * sigma**2))
    pi_e = np.exp(-((t - interval.t_e) ** 2) / (2 * sigma**2))
    return GaussianHeatmaps(pi_s=pi_s / pi_s.sum(), pi_e=pi_e / pi_e.sum())


def kl_divergence(target: Tensor, pred: Tensor) -> Tensor:
    """KL(target || pred) with an epsilon floor inside the log."""
    return (torch.special.xlogy(target, target) - target * pred.clamp(min=KL_EPS).log()).sum()


def temporal_kl_loss(pred: TemporalDistributions, target: GaussianHeatmaps) -> tuple[float, float]:
    """Evaluation-side KL of one sample's predicted distributions."""
    tau_s = torch.from_numpy(np.asarray(pred.tau_s, dtype=np.float64))
    tau_e = torch.from_numpy(np.asarray(pred.tau_e, dtype=np.float64))
    pi_s = torch.from_numpy(np.asarray(target.pi_s, dtype=np.float64))
    pi_e = torch.from_numpy(np.asarray(target.pi_e, dtype=np.float64))
    return float(kl_divergence(pi_s, tau_s)), float(kl_divergence(pi_e, tau_e))


def _layer_terms(
    layer: LayerPredictions,
    annotations: list[GroundingAnnotation],
    num_frames: list[int],
    config: ModelConfig,
) -> dict[str, Tensor]:
    """Batch-mean loss components for one decoder layer's predictions."""
    device = layer.boxes.device
    dtype = layer.boxes.dtype
    terms = {k: layer.boxes.new_zeros(()) for k in ("l1", "giou", "kl_start", "kl_end", "confidence")}
    for i, ann in enumerate(annotations):
        t_total = num_frames[i]
        ann.interval.check_within(t_total)
        frames = list(ann.interval.frames())
        scores = layer.query_scores[i]  # (T, Q)
        supervised = scores.detach()[frames].argmax(dim=1)  # (F,)
        frame_idx = torch.tensor(frames, dtype=torch.long, device=device)
        pred_boxes = layer.boxes[i][frame_idx, supervised]  # (F, 4)
        gt_boxes = torch.tensor(
            np.stack([ann.boxes[t].as_array() for t in frames]), dtype=dtype, device=device
        )
        terms["l1"] = terms["l1"] + l1_loss(pred_boxes, gt_boxes)
        terms["giou"] = terms["giou"] + giou_loss(pred_boxes, gt_boxes)
        heat = make_heatmaps(ann.interval, t_total, config.heatmap_sigma)
        pi_s = torch.tensor(heat.pi_s, dtype=dtype, device=device)
        pi_e = torch.tensor(heat.pi_e, dtype=dtype, device=device)
        terms["kl_start"] = terms["kl_start"] + kl_divergence(pi_s, layer.tau_s[i, :t_total])
        terms["kl_end"] = terms["kl_end"] + kl_divergence(pi_e, layer.tau_e[i, :t_total])
        target = torch.zeros(t_total, scores.shape[1], dtype=dtype, device=device)
        target[frame_idx, supervised] = 1.0
        terms["confidence"] = terms["confidence"] + F.binary_cross_entropy(
            scores[:t_total].clamp(0.0, 1.0), target
        )
    return {k: v / len(annotations) for k, v in terms.items()}


def _combine(terms: dict[str, Tensor], config: ModelConfig) -> Tensor:
    return (
        config.l1_weight * terms["l1"]
        + config.giou_weight * terms["giou"]
        + terms["kl_start"]
        + terms["kl_end"]
        + terms["confidence"]
    )


def total_loss(
    output: ModelOutput, annotations: list[GroundingAnnotation], config: ModelConfig
) -> LossReport:
    """Combined objective over a batch; every non-final decoder layer
    contributes the same loss as an equally weighted auxiliary."""
    batch = output.final.boxes.shape[0]
    if len(annotations) != batch:
        raise InvalidIntervalError(f"{len(annotations)} annotations for batch of {batch}")
    num_frames = (~output.frame_mask).sum(dim=1).tolist()
    final_terms = _layer_terms(output.final, annotations, num_frames, config)
    loss = _combine(final_terms, config)
    aux = []
    for layer in output.layers[:-1]:
        layer_terms = _layer_terms(layer, annotations, num_frames, config)
        layer_total = _combine(layer_terms, config)
        loss = loss + layer_total
        aux.append({k: float(v.detach()) for k, v in layer_terms.items()} | {"total": float(layer_total.detach())})
    return LossReport(
        l1=float(final_terms["l1"].detach()),
        giou=float(final_terms["giou"].detach()),
        kl_start=float(final_terms["kl_start"].detach()),
        kl_end=float(final_terms["kl_end"].detach()),
        confidence=float(final_terms["confidence"].detach()),
        aux=tuple(aux),
        total=float(loss.detach()),
        loss=loss,
    )
