"""Cross-modal decoder: query refinement with temporal/spatial self-attention,
per-frame visual cross-attention, textual cross-attention, and per-layer
anchor updates in inverse-sigmoid space.
"""

from __future__ import annotations

from dataclasses import dataclass

from torch import Tensor, nn

from .backbones import TextFeatures, VisualFeatureMap
from .errors import ConfigurationError
from .layers import FeedForward, Mlp, MultiHeadAttention, inverse_sigmoid
from .queries import AnchorPositionEncoder, QuerySet
from .types import ModelConfig


@dataclass(frozen=True)
class DecoderState:
    """Output of one decoder layer: refined content and updated anchors."""

    content: Tensor  # (B, T, Q, D)
    anchors: Tensor  # (B, T, Q, 4) in [0, 1]


class DecoderLayer(nn.Module):
    """One decoder layer (pre-norm residual blocks, in order):

    temporal self-attention (same query index across frames, optional) ->
    spatial self-attention (queries within a frame) ->
    visual cross-attention restricted to the same frame ->
    textual cross-attention over unmasked tokens -> FFN.

    The positional part of a query is added to queries/keys of the
    self-attentions and to the query of both cross-attentions.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.d_model
        self.config = config
        self.temporal_enabled = config.decoder_temporal
        if self.temporal_enabled:
            self.norm_temporal = nn.LayerNorm(d)
            self.temporal_attn = MultiHeadAttention(d, config.num_heads, config.dropout)
        self.norm_spatial = nn.LayerNorm(d)
        self.spatial_attn = MultiHeadAttention(d, config.num_heads, config.dropout)
        self.norm_cross_vision = nn.LayerNorm(d)
        self.cross_attn_vision = MultiHeadAttention(d, config.num_heads, config.dropout)
        self.norm_cross_text = nn.LayerNorm(d)
        self.cross_attn_text = MultiHeadAttention(d, config.num_heads, config.dropout)
        self.norm_ffn = nn.LayerNorm(d)
        self.ffn = FeedForward(d, config.ffn_dim, config.dropout)
        self.anchor_mlp = Mlp(d, d, 4, num_layers=3)

    def forward(
        self,
        content: Tensor,
        positional: Tensor,
        anchors: Tensor,
        vision: Tensor,
        text: Tensor,
        valid_mask: Tensor,
        frame_mask: Tensor,
        pad_mask: Tensor,
    ) -> DecoderState:
        b, t, q, d = content.shape
        s = vision.shape[2]
        if vision.shape[1] != t:
            raise ConfigurationError(f"queries have T={t} but features have T={vision.shape[1]}")
        x = content
        if self.temporal_enabled:
            h = self.norm_temporal(x) + positional
            h = h.permute(0, 2, 1, 3).reshape(b * q, t, d)
            v = self.norm_temporal(x).permute(0, 2, 1, 3).reshape(b * q, t, d)
            key_mask = frame_mask[:, None, :].expand(b, q, t).reshape(b * q, t)
            out, _ = self.temporal_attn(h, h, v, key_mask=key_mask)
            x = x + out.view(b, q, t, d).permute(0, 2, 1, 3)
        h = self.norm_spatial(x) + positional
        v = self.norm_spatial(x)
        out, _ = self.spatial_attn(
            h.reshape(b * t, q, d), h.reshape(b * t, q, d), v.reshape(b * t, q, d)
        )
        x = x + out.view(b, t, q, d)
        h = self.norm_cross_vision(x) + positional
        out, _ = self.cross_attn_vision(
            h.reshape(b * t, q, d),
            vision.reshape(b * t, s, d),
            vision.reshape(b * t, s, d),
            key_mask=valid_mask.reshape(b * t, s),
        )
        x = x + out.view(b, t, q, d)
        h = self.norm_cross_text(x) + positional
        out, _ = self.cross_attn_text(h.reshape(b, t * q, d), text, text, key_mask=pad_mask)
        x = x + out.view(b, t, q, d)
        x = x + self.ffn(self.norm_ffn(x))
        new_anchors = (inverse_sigmoid(anchors) + self.anchor_mlp(x)).sigmoid()
        return DecoderState(content=x, anchors=new_anchors)


class CrossModalDecoder(nn.Module):
    """N decoder layers; keeps every layer's output for auxiliary supervision.

    The positional encoding of the anchors is recomputed after each layer's
    anchor update through the shared AnchorPositionEncoder.
    """

    def __init__(self, config: ModelConfig, anchor_pos: AnchorPositionEncoder):
        super().__init__()
        if config.num_decoder_layers < 1:
            raise ConfigurationError("decoder needs at least one layer")
        self.config = config
        self.anchor_pos = anchor_pos
        self.layers = nn.ModuleList(DecoderLayer(config) for _ in range(config.num_decoder_layers))

    def forward(
        self, queries: QuerySet, vis_map: VisualFeatureMap, text: TextFeatures
    ) -> list[DecoderState]:
        content, anchors, positional = queries.content, queries.anchors, queries.positional
        states: list[DecoderState] = []
        for layer in self.layers:
            state = layer(
                content,
                positional,
                anchors,
                vis_map.features,
                text.features,
                vis_map.valid_mask,
                vis_map.frame_mask,
                text.pad_mask,
            )
            content, anchors = state.content, state.anchors
            positional = self.anchor_pos(anchors)
            states.append(state)
        return states
