"""Evaluation metrics: temporal IoU, volumetric IoU, vIoU@R, pointing game."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .types import BoundingBox, GroundingAnnotation, SpatioTemporalTube, TemporalInterval

DEFAULT_THRESHOLDS = (0.3, 0.5)


@dataclass(frozen=True)
class SampleResult:
    """Per-sample evaluation record."""

    video_id: str
    sentence_kind: str
    t_iou: float
    v_iou: float


@dataclass(frozen=True)
class EvalReport:
    m_tiou: float
    m_viou: float
    viou_at: dict[float, float]
    sample_count: int
    pointing_accuracy: float | None = None
    samples: tuple[SampleResult, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        out = {
            "m_tIoU": self.m_tiou,
            "m_vIoU": self.m_viou,
            "vIoU_at": {str(k): v for k, v in self.viou_at.items()},
            "sample_count": self.sample_count,
        }
        if self.pointing_accuracy is not None:
            out["pointing_accuracy"] = self.pointing_accuracy
        return out


def temporal_iou(pred: TemporalInterval, gt: TemporalInterval) -> float:
    """Inclusive frame counting: |intersection| / |union|."""
    inter = min(pred.t_e, gt.t_e) - max(pred.t_s, gt.t_s) + 1
    if inter <= 0:
        return 0.0
    union = pred.n_frames + gt.n_frames - inter
    return inter / union


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area() + b.area() - inter
    return inter / union


def volumetric_iou(pred: SpatioTemporalTube, gt: GroundingAnnotation) -> float:
    """Mean per-frame IoU over the interval union; frames outside the
    intersection contribute zero."""
    p, g = pred.interval, gt.interval
    union = max(p.t_e, g.t_e) - min(p.t_s, g.t_s) + 1
    inter_lo, inter_hi = max(p.t_s, g.t_s), min(p.t_e, g.t_e)
    if inter_lo > inter_hi:
        return 0.0
    total = sum(box_iou(pred.boxes[t], gt.boxes[t]) for t in range(inter_lo, inter_hi + 1))
    return total / union


def pointing_game(pred: BoundingBox, gt: BoundingBox) -> bool:
    """Hit iff the predicted box center lies inside the gt box, boundaries inclusive."""
    x1, y1, x2, y2 = gt.corners()
    return x1 <= pred.cx <= x2 and y1 <= pred.cy <= y2


def evaluate_sample(
    pred: SpatioTemporalTube, gt: GroundingAnnotation
) -> SampleResult:
    return SampleResult(
        video_id=gt.video_id,
        sentence_kind=gt.sentence_kind,
        t_iou=temporal_iou(pred.interval, gt.interval),
        v_iou=volumetric_iou(pred, gt),
    )


def aggregate(
    samples: list[SampleResult],
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS,
    pointing_hits: list[bool] | None = None,
) -> EvalReport:
    """Means and vIoU@R fractions (vIoU strictly greater than R counts)."""
    if not samples:
        raise DataError("cannot aggregate an empty sample set")
    vious = np.array([s.v_iou for s in samples], dtype=np.float64)
    tious = np.array([s.t_iou for s in samples], dtype=np.float64)
    pointing = None
    if pointing_hits is not None:
        if not pointing_hits:
            raise DataError("cannot aggregate an empty pointing-game set")
        pointing = float(np.mean([1.0 if h else 0.0 for h in pointing_hits]))
    return EvalReport(
        m_tiou=float(tious.mean()),
        m_viou=float(vious.mean()),
        viou_at={r: float((vious > r).mean()) for r in thresholds},
        sample_count=len(samples),
        pointing_accuracy=pointing,
        samples=tuple(samples),
    )
