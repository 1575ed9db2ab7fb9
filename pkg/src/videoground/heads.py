"""Prediction heads and tube/interval extraction.

The torch modules map decoder content to per-frame boxes, per-query
confidences, and start/end distributions over frames. The extraction
functions are pure numpy and operate on one sample at a time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor, nn

from .errors import ConfigurationError, NoValidIntervalError
from .layers import Mlp, inverse_sigmoid
from .types import BoundingBox, ModelConfig, SpatioTemporalTube, TemporalInterval


@dataclass(frozen=True)
class TemporalDistributions:
    """Start/end probability vectors over the T frames of one sample."""

    tau_s: np.ndarray
    tau_e: np.ndarray

    def __post_init__(self):
        for name, tau in (("tau_s", self.tau_s), ("tau_e", self.tau_e)):
            if tau.ndim != 1 or tau.shape != self.tau_s.shape:
                raise ConfigurationError(f"{name} must be 1-d and match tau_s in length")
            if tau.min() < 0 or tau.max() > 1 or abs(tau.sum() - 1.0) > 1e-5:
                raise ConfigurationError(f"{name} is not a probability vector")


@dataclass(frozen=True)
class FramePredictions:
    """Per-frame candidate boxes (T, Q, 4) and confidences (T, Q) of one sample."""

    boxes: np.ndarray
    query_scores: np.ndarray

    def __post_init__(self):
        t, q, four = self.boxes.shape
        if four != 4 or self.query_scores.shape != (t, q):
            raise ConfigurationError("boxes must be (T, Q, 4) with matching (T, Q) scores")
        if self.boxes.min() < 0 or self.boxes.max() > 1:
            raise ConfigurationError("boxes must lie in [0, 1]^4")


class BoxHead(nn.Module):
    """DETR-style regression head: 3-layer MLP offsets added to anchors in
    inverse-sigmoid space, plus a linear confidence head with sigmoid."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.d_model
        self.box_mlp = Mlp(d, d, 4, num_layers=3)
        self.score_head = nn.Linear(d, 1)

    def forward(self, content: Tensor, anchors: Tensor) -> tuple[Tensor, Tensor]:
        """content (B, T, Q, D), anchors (B, T, Q, 4) -> boxes (B, T, Q, 4), scores (B, T, Q)."""
        boxes = (inverse_sigmoid(anchors) + self.box_mlp(content)).sigmoid()
        scores = self.score_head(content).squeeze(-1).sigmoid()
        return boxes, scores


class TemporalHead(nn.Module):
    """Frame-level start/end distributions from query content.

    Frame descriptor = mean over that frame's queries; a 3-layer MLP maps it
    to two logits; softmax runs across frames with padded frames masked out.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.d_model
        self.mlp = Mlp(d, d, 2, num_layers=3)

    def forward(self, content: Tensor, frame_mask: Tensor) -> tuple[Tensor, Tensor]:
        """content (B, T, Q, D), frame_mask (B, T) -> tau_s, tau_e each (B, T)."""
        logits = self.mlp(content.mean(dim=2))  # (B, T, 2)
        logits = logits.masked_fill(frame_mask[:, :, None], float("-inf"))
        return logits[..., 0].softmax(dim=1), logits[..., 1].softmax(dim=1)


def extract_interval(
    dist: TemporalDistributions, strict: bool = True
) -> tuple[TemporalInterval, float]:
    """Argmax of the joint start/end distribution over valid (s, e) pairs.

    Valid pairs satisfy s < e in strict mode, s <= e otherwise. Ties break to
    the smallest s, then the smallest e. Returns the interval and the product
    tau_s[s] * tau_e[e].
    """
    tau_s = np.asarray(dist.tau_s, dtype=np.float64)
    tau_e = np.asarray(dist.tau_e, dtype=np.float64)
    t = tau_s.shape[0]
    if strict and t < 2:
        raise NoValidIntervalError(f"no pair with s < e exists for T={t}")
    joint = np.outer(tau_s, tau_e)
    offset = 1 if strict else 0
    invalid = ~np.triu(np.ones((t, t), dtype=bool), k=offset)
    joint[invalid] = -1.0
    flat = int(np.argmax(joint))  # first occurrence: smallest s, then smallest e
    s, e = divmod(flat, t)
    return TemporalInterval(s, e, strict=strict), float(joint[s, e])


def extract_tube(
    frames: FramePredictions, interval: TemporalInterval, score: float
) -> SpatioTemporalTube:
    """Keep, for each frame of the interval, the highest-confidence query's box."""
    t = frames.boxes.shape[0]
    interval.check_within(t)
    boxes = {}
    for frame in interval.frames():
        q = int(np.argmax(frames.query_scores[frame]))
        boxes[frame] = BoundingBox(*(float(c) for c in frames.boxes[frame, q]))
    return SpatioTemporalTube(interval=interval, boxes=boxes, score=score)
