"""Cross-modal encoder: temporal + deformable-spatial attention over video
features, self-attention over text, and bidirectional visual-textual fusion.

All residual blocks are pre-norm. Masks: True = ignore.
"""

from __future__ import annotations

import dataclasses
import math

import torch
from torch import Tensor, nn

from .backbones import TextFeatures, VisualFeatureMap
from .errors import ConfigurationError
from .layers import (
    DeformableAttention,
    FeedForward,
    MultiHeadAttention,
    make_reference_points,
)
from .types import ModelConfig


class EncoderLayer(nn.Module):
    """One encoder layer.

    Visual path: temporal self-attention across frames at each spatial index
    (optional), then deformable attention within each frame across pyramid
    levels. Text path: masked self-attention. The two are then fused through
    a joint attention matrix used in both directions.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.d_model
        self.config = config
        self.temporal_enabled = config.encoder_temporal
        if self.temporal_enabled:
            self.norm_temporal = nn.LayerNorm(d)
            self.temporal_attn = MultiHeadAttention(d, config.num_heads, config.dropout)
        self.norm_spatial = nn.LayerNorm(d)
        self.spatial_attn = DeformableAttention(d, config.num_heads, config.num_levels, config.num_points)
        self.norm_text = nn.LayerNorm(d)
        self.text_attn = MultiHeadAttention(d, config.num_heads, config.dropout)
        # Fusion: one scalar score per (frame, position, token) pair.
        self.joint_scale = 1.0 / math.sqrt(config.head_dim)
        self.norm_fusion_vision = nn.LayerNorm(d)
        self.norm_fusion_text = nn.LayerNorm(d)
        self.proj_query_vision = nn.Linear(d, d)
        self.proj_query_text = nn.Linear(d, d)
        self.proj_text_value = nn.Linear(d, d)
        self.proj_vision_value = nn.Linear(d, d)
        self.ffn_vision = FeedForward(d, config.ffn_dim, config.dropout)
        self.ffn_text = FeedForward(d, config.ffn_dim, config.dropout)

    def temporal_attention(self, vision: Tensor, frame_mask: Tensor) -> Tensor:
        """Self-attention across T at each fixed spatial index. (B, T, S, D)."""
        b, t, s, d = vision.shape
        h = self.norm_temporal(vision)
        h = h.permute(0, 2, 1, 3).reshape(b * s, t, d)
        key_mask = frame_mask[:, None, :].expand(b, s, t).reshape(b * s, t)
        out, _ = self.temporal_attn(h, h, h, key_mask=key_mask)
        return out.view(b, s, t, d).permute(0, 2, 1, 3)

    def spatial_attention(
        self,
        vision: Tensor,
        reference_points: Tensor,
        level_shapes: list[tuple[int, int]],
        valid_mask: Tensor,
    ) -> Tensor:
        """Deformable attention within each frame. (B, T, S, D)."""
        b, t, s, d = vision.shape
        h = self.norm_spatial(vision).reshape(b * t, s, d)
        out = self.spatial_attn(
            h,
            h,
            reference_points,
            level_shapes,
            key_mask=valid_mask.reshape(b * t, s),
        )
        return out.view(b, t, s, d)

    def joint_attention(self, vision: Tensor, text: Tensor) -> Tensor:
        """Scaled dot-product scores: (B, T, S, D) x (B, L, D) -> (B, T, S, L)."""
        qv = self.proj_query_vision(vision)
        qp = self.proj_query_text(text)
        return torch.einsum("btsd,bld->btsl", qv, qp) * self.joint_scale

    def bidirectional_fusion(
        self,
        scores: Tensor,
        vision_pre: Tensor,
        text_pre: Tensor,
        vision_skip: Tensor,
        text_skip: Tensor,
        valid_mask: Tensor,
        pad_mask: Tensor,
    ) -> tuple[Tensor, Tensor]:
        """Apply the joint scores in both directions with residuals.

        vision_pre/text_pre are the normalized inputs that produced `scores`;
        vision_skip/text_skip carry the residual stream.
        """
        b, t, s, _ = vision_pre.shape
        # vision <- text: softmax over tokens
        attn_v = scores.masked_fill(pad_mask[:, None, None, :], float("-inf")).softmax(dim=-1)
        gathered_text = torch.einsum("btsl,bld->btsd", attn_v, self.proj_text_value(text_pre))
        vision_out = vision_skip + self.ffn_vision(gathered_text)
        # text <- vision: softmax over all (frame, position) pairs
        flat = scores.reshape(b, t * s, -1).transpose(1, 2)  # (B, L, T*S)
        flat = flat.masked_fill(valid_mask.reshape(b, 1, t * s), float("-inf")).softmax(dim=-1)
        gathered_vision = flat @ self.proj_vision_value(vision_pre).reshape(b, t * s, -1)
        text_out = text_skip + self.ffn_text(gathered_vision)
        return vision_out, text_out

    def forward(
        self,
        vision: Tensor,
        text: Tensor,
        reference_points: Tensor,
        level_shapes: list[tuple[int, int]],
        valid_mask: Tensor,
        frame_mask: Tensor,
        pad_mask: Tensor,
    ) -> tuple[Tensor, Tensor]:
        if self.temporal_enabled:
            vision = vision + self.temporal_attention(vision, frame_mask)
        vision = vision + self.spatial_attention(vision, reference_points, level_shapes, valid_mask)
        h = self.norm_text(text)
        text_attn_out, _ = self.text_attn(h, h, h, key_mask=pad_mask)
        text = text + text_attn_out
        vision_pre = self.norm_fusion_vision(vision)
        text_pre = self.norm_fusion_text(text)
        scores = self.joint_attention(vision_pre, text_pre)
        return self.bidirectional_fusion(
            scores, vision_pre, text_pre, vision, text, valid_mask, pad_mask
        )


class CrossModalEncoder(nn.Module):
    """Stack of encoder layers. Zero layers is a valid identity encoder."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.layers = nn.ModuleList(EncoderLayer(config) for _ in range(config.num_encoder_layers))

    def forward(
        self, vis_map: VisualFeatureMap, text: TextFeatures
    ) -> tuple[VisualFeatureMap, TextFeatures]:
        if vis_map.num_levels != self.config.num_levels:
            raise ConfigurationError(
                f"feature map has {vis_map.num_levels} levels, encoder expects {self.config.num_levels}"
            )
        vision = vis_map.features
        text_features = text.features
        level_shapes = list(vis_map.level_shapes)
        reference_points = make_reference_points(level_shapes, device=vision.device, dtype=vision.dtype)
        for layer in self.layers:
            vision, text_features = layer(
                vision,
                text_features,
                reference_points,
                level_shapes,
                vis_map.valid_mask,
                vis_map.frame_mask,
                text.pad_mask,
            )
        return (
            dataclasses.replace(vis_map, features=vision),
            dataclasses.replace(text, features=text_features),
        )
