"""Frozen feature extractors and the containers their outputs travel in.

Mask convention everywhere: boolean masks mark positions to IGNORE
(padding), i.e. True = masked out.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor, nn

from .errors import ConfigurationError, TokenizerError
from .layers import FeedForward, MultiHeadAttention, make_level_start_index
from .types import BASE_STRIDE, ModelConfig


@dataclass(frozen=True)
class VisualFeatureMap:
    """Flattened multi-scale per-frame features.

    features: (B, T, S, D) where S = sum over levels of h_l * w_l.
    level_shapes: (h_l, w_l) per level, finest first.
    level_start_index: offset of each level inside the flattened S axis.
    valid_mask: (B, T, S) True where the position must be ignored
        (covers padded frames).
    frame_mask: (B, T) True where the whole frame is temporal padding.
    """

    features: Tensor
    level_shapes: tuple[tuple[int, int], ...]
    level_start_index: tuple[int, ...]
    valid_mask: Tensor
    frame_mask: Tensor

    def __post_init__(self):
        b, t, s, _ = self.features.shape
        expected = sum(h * w for h, w in self.level_shapes)
        if s != expected:
            raise ConfigurationError(f"flattened size {s} != sum of level areas {expected}")
        if tuple(make_level_start_index(list(self.level_shapes))) != self.level_start_index:
            raise ConfigurationError("level_start_index inconsistent with level_shapes")
        if self.valid_mask.shape != (b, t, s) or self.valid_mask.dtype != torch.bool:
            raise ConfigurationError("valid_mask must be boolean of shape (B, T, S)")
        if self.frame_mask.shape != (b, t) or self.frame_mask.dtype != torch.bool:
            raise ConfigurationError("frame_mask must be boolean of shape (B, T)")

    @property
    def num_levels(self) -> int:
        return len(self.level_shapes)


@dataclass(frozen=True)
class TextFeatures:
    """Per-token text features (B, L, D) with pad_mask (B, L), True = padding."""

    features: Tensor
    pad_mask: Tensor

    def __post_init__(self):
        b, l, _ = self.features.shape
        if self.pad_mask.shape != (b, l) or self.pad_mask.dtype != torch.bool:
            raise ConfigurationError("pad_mask must be boolean of shape (B, L)")


def pyramid_shapes(height: int, width: int, num_levels: int) -> list[tuple[int, int]]:
    """Feature-map shapes produced by the strided conv stack (ceil division)."""
    coarsest = BASE_STRIDE * 2 ** (num_levels - 1)
    if min(height, width) < coarsest:
        raise ConfigurationError(
            f"input {height}x{width} smaller than coarsest stride {coarsest}"
        )
    shapes = []
    h, w = height, width
    for _ in range(3):  # stem: three stride-2 convs down to BASE_STRIDE
        h, w = (h + 1) // 2, (w + 1) // 2
    shapes.append((h, w))
    for _ in range(num_levels - 1):
        h, w = (h + 1) // 2, (w + 1) // 2
        shapes.append((h, w))
    return shapes


class VisionBackbone(nn.Module):
    """Small strided conv stack producing a per-frame feature pyramid.

    Runs on each frame independently; temporal mixing is left to the encoder.
    Trained from scratch is not the point here: the module is frozen at
    construction and acts as a fixed random projection of the pixels.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.d_model
        self.config = config
        self.stem = nn.Sequential(
            nn.Conv2d(3, d // 2, 3, stride=2, padding=1),
            nn.GELU(),
            nn.Conv2d(d // 2, d, 3, stride=2, padding=1),
            nn.GELU(),
            nn.Conv2d(d, d, 3, stride=2, padding=1),
        )
        self.downsample = nn.ModuleList(
            nn.Conv2d(d, d, 3, stride=2, padding=1) for _ in range(config.num_levels - 1)
        )
        self.level_proj = nn.ModuleList(nn.Linear(d, d) for _ in range(config.num_levels))
        self.level_norm = nn.ModuleList(nn.LayerNorm(d) for _ in range(config.num_levels))

    def forward(self, frames: Tensor, frame_mask: Tensor | None = None) -> VisualFeatureMap:
        """frames (B, T, 3, H, W) in [0, 1]; frame_mask (B, T) True = padded frame."""
        if frames.dim() != 5 or frames.shape[2] != 3:
            raise ConfigurationError(f"expected frames of shape (B, T, 3, H, W), got {tuple(frames.shape)}")
        b, t, _, height, width = frames.shape
        shapes = pyramid_shapes(height, width, self.config.num_levels)
        x = self.stem(frames.reshape(b * t, 3, height, width))
        levels = [x]
        for conv in self.downsample:
            levels.append(conv(levels[-1]))
        flats = []
        for lvl, feat in enumerate(levels):
            feat = feat.flatten(2).transpose(1, 2)  # (B*T, h*w, D)
            flats.append(self.level_norm[lvl](self.level_proj[lvl](feat)))
        features = torch.cat(flats, dim=1).view(b, t, -1, self.config.d_model)
        if frame_mask is None:
            frame_mask = torch.zeros(b, t, dtype=torch.bool, device=frames.device)
        valid_mask = frame_mask[:, :, None].expand(b, t, features.shape[2])
        return VisualFeatureMap(
            features=features,
            level_shapes=tuple(shapes),
            level_start_index=tuple(make_level_start_index(shapes)),
            valid_mask=valid_mask.contiguous(),
            frame_mask=frame_mask,
        )


class TextBackbone(nn.Module):
    """Embedding + learned positions + two pre-norm self-attention blocks.

    Frozen at construction; serves as a fixed contextual word encoder.
    """

    def __init__(self, vocab_size: int, config: ModelConfig):
        super().__init__()
        if vocab_size < 2:
            raise ConfigurationError("vocabulary must contain at least pad and unk")
        d = config.d_model
        self.config = config
        self.vocab_size = vocab_size
        self.embedding = nn.Embedding(vocab_size, d, padding_idx=0)
        self.pos_embedding = nn.Parameter(torch.empty(config.max_text_len, d))
        nn.init.normal_(self.pos_embedding, std=0.02)
        self.attn_norms = nn.ModuleList(nn.LayerNorm(d) for _ in range(2))
        self.attns = nn.ModuleList(MultiHeadAttention(d, config.num_heads) for _ in range(2))
        self.ffn_norms = nn.ModuleList(nn.LayerNorm(d) for _ in range(2))
        self.ffns = nn.ModuleList(FeedForward(d, config.ffn_dim) for _ in range(2))
        self.final_norm = nn.LayerNorm(d)

    def forward(self, tokens: Tensor, pad_mask: Tensor | None = None) -> TextFeatures:
        """tokens (B, L) int ids; pad_mask (B, L) True = padding (default: id 0)."""
        if tokens.dim() != 2:
            raise ConfigurationError(f"expected tokens of shape (B, L), got {tuple(tokens.shape)}")
        b, l = tokens.shape
        if l > self.config.max_text_len:
            raise ConfigurationError(f"text length {l} exceeds max_text_len {self.config.max_text_len}")
        if tokens.min() < 0 or tokens.max() >= self.vocab_size:
            raise TokenizerError(f"token ids outside [0, {self.vocab_size})")
        if pad_mask is None:
            pad_mask = tokens == 0
        x = self.embedding(tokens) + self.pos_embedding[:l]
        for norm_a, attn, norm_f, ffn in zip(self.attn_norms, self.attns, self.ffn_norms, self.ffns):
            h = norm_a(x)
            out, _ = attn(h, h, h, key_mask=pad_mask)
            x = x + out
            x = x + ffn(norm_f(x))
        return TextFeatures(features=self.final_norm(x), pad_mask=pad_mask)
