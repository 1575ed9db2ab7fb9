"""Core data model shared by every stage of the grounding pipeline.

Boxes are stored in normalized center format (cx, cy, w, h); pixel top-left
corner format exists only at I/O boundaries. Frame indices are 0-based
internally and 1-based only in serialized form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InvalidBoxError, InvalidIntervalError

SENTENCE_KINDS = ("declarative", "interrogative", "unknown")

#: Stride of the finest visual feature level; level l has stride BASE_STRIDE * 2**l.
BASE_STRIDE = 8


@dataclass(frozen=True)
class BoundingBox:
    """Normalized center-format box.

    Attributes:
        cx, cy: Box center in [0, 1] relative to the frame.
        w, h: Box size in (0, 1] relative to the frame.
    """

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise InvalidBoxError(f"box size must be positive, got w={self.w}, h={self.h}")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise InvalidBoxError(f"box center must lie in [0,1]^2, got ({self.cx}, {self.cy})")
        if self.w > 1.0 or self.h > 1.0:
            raise InvalidBoxError(f"box size must be <= 1, got w={self.w}, h={self.h}")

    def corners(self) -> tuple[float, float, float, float]:
        """Return normalized (x1, y1, x2, y2) corners, unclipped."""
        return (
            self.cx - self.w / 2,
            self.cy - self.h / 2,
            self.cx + self.w / 2,
            self.cy + self.h / 2,
        )

    def clip(self) -> "BoundingBox":
        """Clip the box to the frame. Idempotent."""
        x1, y1, x2, y2 = self.corners()
        x1, y1 = max(0.0, x1), max(0.0, y1)
        x2, y2 = min(1.0, x2), min(1.0, y2)
        return BoundingBox((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1)

    def area(self) -> float:
        return self.w * self.h

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)


def box_corner_to_center(
    x: float, y: float, w: float, h: float, image_width: int, image_height: int
) -> BoundingBox:
    """Convert a pixel top-left corner box to a normalized center box.

    The corner box is clipped to the image before normalizing, so the result
    always satisfies the BoundingBox invariants.
    """
    if w <= 0 or h <= 0:
        raise InvalidBoxError(f"corner box size must be positive, got w={w}, h={h}")
    x1, y1 = max(0.0, float(x)), max(0.0, float(y))
    x2, y2 = min(float(image_width), x + w), min(float(image_height), y + h)
    if x2 <= x1 or y2 <= y1:
        raise InvalidBoxError(f"box ({x}, {y}, {w}, {h}) does not intersect a {image_width}x{image_height} image")
    return BoundingBox(
        cx=(x1 + x2) / 2 / image_width,
        cy=(y1 + y2) / 2 / image_height,
        w=(x2 - x1) / image_width,
        h=(y2 - y1) / image_height,
    )


def box_center_to_corner(
    box: BoundingBox, image_width: int, image_height: int
) -> tuple[float, float, float, float]:
    """Convert a normalized center box back to pixel top-left (x, y, w, h), clipped to the image."""
    x1, y1, x2, y2 = box.corners()
    x1, y1 = max(0.0, x1 * image_width), max(0.0, y1 * image_height)
    x2, y2 = min(float(image_width), x2 * image_width), min(float(image_height), y2 * image_height)
    return x1, y1, x2 - x1, y2 - y1


@dataclass(frozen=True)
class TemporalInterval:
    """Inclusive frame interval [t_s, t_e], 0-based.

    Strict mode (the default) rejects single-frame intervals at construction;
    serialized form is 1-based.
    """

    t_s: int
    t_e: int
    strict: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if self.t_s < 0:
            raise InvalidIntervalError(f"start frame must be >= 0, got {self.t_s}")
        if self.strict and self.t_e <= self.t_s:
            raise InvalidIntervalError(f"strict interval requires t_s < t_e, got ({self.t_s}, {self.t_e})")
        if self.t_e < self.t_s:
            raise InvalidIntervalError(f"interval end before start: ({self.t_s}, {self.t_e})")

    @property
    def n_frames(self) -> int:
        return self.t_e - self.t_s + 1

    def frames(self) -> range:
        return range(self.t_s, self.t_e + 1)

    def check_within(self, total_frames: int) -> None:
        if self.t_e > total_frames - 1:
            raise InvalidIntervalError(
                f"interval ({self.t_s}, {self.t_e}) exceeds clip with {total_frames} frames"
            )

    def to_one_based(self) -> tuple[int, int]:
        """Return the (start, end) pair in the 1-based convention used on disk."""
        return self.t_s + 1, self.t_e + 1

    @classmethod
    def from_one_based(cls, t_s: int, t_e: int, strict: bool = True) -> "TemporalInterval":
        return cls(t_s - 1, t_e - 1, strict=strict)


@dataclass(frozen=True)
class VideoClip:
    """A stack of frames with pixel values in [0, 1].

    Attributes:
        frames: (T, H, W, 3) float array; the buffer is frozen at construction.
        frame_rate: Frames per second; metadata only.
    """

    frames: np.ndarray
    frame_rate: float = 1.0

    def __post_init__(self):
        f = self.frames
        if f.ndim != 4 or f.shape[3] != 3:
            raise ConfigurationError(f"frames must be (T, H, W, 3), got {f.shape}")
        t, h, w, _ = f.shape
        if t < 1 or h < 8 or w < 8:
            raise ConfigurationError(f"clip too small: T={t}, H={h}, W={w} (need T>=1, H,W>=8)")
        if f.size and (float(f.min()) < 0.0 or float(f.max()) > 1.0):
            raise ConfigurationError("pixel values must lie in [0, 1]")
        f.setflags(write=False)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


@dataclass(frozen=True)
class TextPrompt:
    """Raw text plus its token ids."""

    raw_text: str
    tokens: tuple[int, ...]

    def __post_init__(self):
        if len(self.tokens) < 1:
            raise ConfigurationError("prompt must contain at least one token")
        if any((not isinstance(t, int)) or t < 0 for t in self.tokens):
            raise ConfigurationError(f"token ids must be non-negative integers, got {self.tokens}")

    def __len__(self) -> int:
        return len(self.tokens)


def _check_box_coverage(boxes: dict[int, BoundingBox], interval: TemporalInterval, what: str) -> None:
    expected = set(interval.frames())
    got = set(boxes)
    if got != expected:
        missing, extra = sorted(expected - got), sorted(got - expected)
        raise InvalidIntervalError(
            f"{what} boxes must cover exactly the interval frames; missing={missing}, extra={extra}"
        )


@dataclass(frozen=True)
class GroundingAnnotation:
    """Ground truth for one (video, prompt) pair: an interval plus one box per frame in it."""

    video_id: str
    prompt: str
    interval: TemporalInterval
    boxes: dict[int, BoundingBox]
    sentence_kind: str = "unknown"

    def __post_init__(self):
        if self.sentence_kind not in SENTENCE_KINDS:
            raise ConfigurationError(f"sentence_kind must be one of {SENTENCE_KINDS}, got {self.sentence_kind!r}")
        _check_box_coverage(self.boxes, self.interval, "annotation")


@dataclass(frozen=True)
class SpatioTemporalTube:
    """A predicted tube: interval, one box per frame inside it, and a joint start-end score."""

    interval: TemporalInterval
    boxes: dict[int, BoundingBox]
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ConfigurationError(f"tube score must lie in [0, 1], got {self.score}")
        _check_box_coverage(self.boxes, self.interval, "tube")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyper-parameters and ablation toggles.

    Defaults are desk-scale; `full_scale()` gives the published-model regime
    (6 encoder/decoder layers, 128 sampled frames, shorter side 448).
    A zero-layer encoder is allowed and acts as the identity.
    """

    d_model: int = 64
    num_heads: int = 4
    num_encoder_layers: int = 2
    num_decoder_layers: int = 2
    num_query: int = 20
    num_levels: int = 3
    num_points: int = 4
    ffn_dim: int = 256
    dropout: float = 0.0
    max_text_len: int = 32
    max_frames: int = 32
    resolution: int = 64
    heatmap_sigma: float = 1.0
    l1_weight: float = 5.0
    giou_weight: float = 2.0
    strict_interval: bool = True
    encoder_temporal: bool = True
    decoder_temporal: bool = True
    finetune_encoder_spatial: bool = True
    finetune_decoder_spatial: bool = True
    temporal_pe: bool = True

    def __post_init__(self):
        counts = {
            "d_model": self.d_model,
            "num_heads": self.num_heads,
            "num_decoder_layers": self.num_decoder_layers,
            "num_query": self.num_query,
            "num_levels": self.num_levels,
            "num_points": self.num_points,
            "ffn_dim": self.ffn_dim,
            "max_text_len": self.max_text_len,
            "max_frames": self.max_frames,
            "resolution": self.resolution,
        }
        for name, value in counts.items():
            if value < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {value}")
        if self.num_encoder_layers < 0:
            raise ConfigurationError(f"num_encoder_layers must be >= 0, got {self.num_encoder_layers}")
        if self.d_model % self.num_heads != 0:
            raise ConfigurationError(f"d_model={self.d_model} must be divisible by num_heads={self.num_heads}")
        if self.d_model % 8 != 0:
            raise ConfigurationError(
                f"d_model={self.d_model} must be divisible by 8 "
                "(four per-coordinate sinusoid blocks, each with sin/cos pairs)"
            )
        if self.heatmap_sigma <= 0:
            raise ConfigurationError(f"heatmap_sigma must be positive, got {self.heatmap_sigma}")
        if self.l1_weight < 0 or self.giou_weight < 0:
            raise ConfigurationError("loss weights must be non-negative")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigurationError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.num_heads

    @property
    def level_strides(self) -> tuple[int, ...]:
        return tuple(BASE_STRIDE * 2**level for level in range(self.num_levels))

    @classmethod
    def full_scale(cls) -> "ModelConfig":
        """Published training regime; needs real pretrained backbones to be useful."""
        return cls(
            d_model=256,
            num_heads=8,
            num_encoder_layers=6,
            num_decoder_layers=6,
            num_levels=4,
            ffn_dim=1024,
            max_frames=128,
            resolution=448,
        )
