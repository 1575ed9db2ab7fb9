"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
import torch

from videoground.backbones import TextFeatures, VisualFeatureMap
from videoground.layers import make_level_start_index
from videoground.types import BoundingBox, GroundingAnnotation, ModelConfig, TemporalInterval

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def _deterministic_seed():
    torch.manual_seed(0)
    np.random.seed(0)


def tiny_config(**overrides) -> ModelConfig:
    """Small config for fast structural tests."""
    defaults = dict(
        d_model=16,
        num_heads=4,
        num_encoder_layers=1,
        num_decoder_layers=1,
        num_query=4,
        num_levels=2,
        num_points=2,
        ffn_dim=32,
        dropout=0.0,
        max_text_len=8,
        max_frames=8,
        resolution=32,
    )
    defaults.update(overrides)
    return ModelConfig(**defaults)


def make_feature_map(
    b: int,
    t: int,
    level_shapes=((4, 4), (2, 2)),
    d_model: int = 16,
    pad_frames: int = 0,
    dtype=torch.float32,
    seed: int = 0,
) -> VisualFeatureMap:
    """Random visual feature map; the last pad_frames frames are padding."""
    gen = torch.Generator().manual_seed(seed)
    shapes = tuple(tuple(s) for s in level_shapes)
    s = sum(h * w for h, w in shapes)
    features = torch.randn(b, t, s, d_model, generator=gen, dtype=dtype)
    frame_mask = torch.zeros(b, t, dtype=torch.bool)
    if pad_frames:
        frame_mask[:, t - pad_frames :] = True
    valid_mask = frame_mask[:, :, None].expand(b, t, s).contiguous()
    return VisualFeatureMap(
        features=features,
        level_shapes=shapes,
        level_start_index=tuple(make_level_start_index(list(shapes))),
        valid_mask=valid_mask,
        frame_mask=frame_mask,
    )


def make_text_features(
    b: int, length: int, d_model: int = 16, pad_tokens: int = 0, dtype=torch.float32, seed: int = 1
) -> TextFeatures:
    gen = torch.Generator().manual_seed(seed)
    features = torch.randn(b, length, d_model, generator=gen, dtype=dtype)
    pad_mask = torch.zeros(b, length, dtype=torch.bool)
    if pad_tokens:
        pad_mask[:, length - pad_tokens :] = True
    return TextFeatures(features=features, pad_mask=pad_mask)


def make_annotation(
    t_s: int = 1,
    t_e: int = 3,
    video_id: str = "vid",
    caption: str = "a test caption",
    drift: float = 0.01,
    strict: bool = True,
) -> GroundingAnnotation:
    interval = TemporalInterval(t_s, t_e, strict=strict)
    boxes = {
        t: BoundingBox(cx=0.4 + drift * (t - t_s), cy=0.5, w=0.2, h=0.3)
        for t in interval.frames()
    }
    return GroundingAnnotation(
        video_id=video_id,
        prompt=caption,
        interval=interval,
        boxes=boxes,
        sentence_kind="declarative",
    )
