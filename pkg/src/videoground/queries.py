"""Language-guided query selection and query positional encodings."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor, nn

from .backbones import TextFeatures, VisualFeatureMap
from .errors import ConfigurationError
from .layers import Mlp, inverse_sigmoid, make_reference_points
from .types import ModelConfig

# Normalized edge length of the anchor prior at the finest pyramid level;
# doubles per level so coarse positions start with larger boxes.
ANCHOR_PRIOR_SIZE = 0.05


@dataclass(frozen=True)
class QuerySet:
    """Per-frame decoder queries.

    content: (B, T, Q, D) content vectors.
    anchors: (B, T, Q, 4) normalized center-format boxes in [0, 1].
    positional: (B, T, Q, D) encoding of anchors (+ temporal encoding).
    selected_indices: (B, T, Q) positions into the flattened S axis.
    """

    content: Tensor
    anchors: Tensor
    positional: Tensor
    selected_indices: Tensor

    def __post_init__(self):
        if self.anchors.min() < 0 or self.anchors.max() > 1:
            raise ConfigurationError("anchors must lie in [0, 1]^4")


def temporal_positional_encoding(num_frames: int, d_model: int, device=None, dtype=None) -> Tensor:
    """PE[t, 2i] = sin(t / 10000^(2i/d)), PE[t, 2i+1] = cos(t / 10000^(2i/d))."""
    if d_model % 2 != 0:
        raise ConfigurationError(f"d_model={d_model} must be even for sinusoidal encoding")
    t = torch.arange(num_frames, device=device, dtype=dtype or torch.float32)[:, None]
    i2 = torch.arange(0, d_model, 2, device=device, dtype=dtype or torch.float32)
    angles = t / torch.pow(10000.0, i2 / d_model)
    pe = torch.empty(num_frames, d_model, device=device, dtype=dtype or torch.float32)
    pe[:, 0::2] = torch.sin(angles)
    pe[:, 1::2] = torch.cos(angles)
    return pe


def box_sinusoidal_embedding(boxes: Tensor, dims_per_coord: int) -> Tensor:
    """Per-coordinate sinusoid blocks, concatenated: (..., 4) -> (..., 4*dims_per_coord).

    Coordinate c occupies dims [c*dims_per_coord, (c+1)*dims_per_coord), so
    each box component feeds a disjoint slice before any projection.
    """
    if dims_per_coord % 2 != 0:
        raise ConfigurationError(f"dims_per_coord={dims_per_coord} must be even")
    device, dtype = boxes.device, boxes.dtype
    i2 = torch.arange(0, dims_per_coord, 2, device=device, dtype=dtype)
    div = torch.pow(torch.tensor(10000.0, device=device, dtype=dtype), i2 / dims_per_coord)
    # scale normalized coords so neighboring boxes get distinguishable phases
    angles = boxes[..., :, None] * (2 * torch.pi) / div  # (..., 4, dims/2)
    emb = torch.stack([torch.sin(angles), torch.cos(angles)], dim=-1)  # (..., 4, dims/2, 2)
    return emb.flatten(-3)


class AnchorPositionEncoder(nn.Module):
    """Positional part of a query: projected box sinusoids + temporal encoding."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.dims_per_coord = config.d_model // 4
        self.proj = nn.Linear(4 * self.dims_per_coord, config.d_model)

    def forward(self, anchors: Tensor) -> Tensor:
        """anchors (B, T, Q, 4) -> positional (B, T, Q, D)."""
        pos = self.proj(box_sinusoidal_embedding(anchors, self.dims_per_coord))
        if self.config.temporal_pe:
            t = anchors.shape[1]
            pe = temporal_positional_encoding(
                t, self.config.d_model, device=anchors.device, dtype=anchors.dtype
            )
            pos = pos + pe[None, :, None, :]
        return pos


def relevance_scores(vision: Tensor, text: Tensor, pad_mask: Tensor) -> Tensor:
    """Max over unmasked tokens of <visual feature, text feature>: (B, T, S)."""
    sims = torch.einsum("btsd,bld->btsl", vision, text)
    sims = sims.masked_fill(pad_mask[:, None, None, :], float("-inf"))
    return sims.max(dim=-1).values


def topk_stable(scores: Tensor, k: int) -> Tensor:
    """Indices of the k largest entries along the last dim; ties go to the
    lower index (stable sort), so selection is deterministic."""
    order = torch.argsort(-scores, dim=-1, stable=True)
    return order[..., :k]


class QuerySelector(nn.Module):
    """Pick the num_query most text-relevant positions per frame and build queries."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.content_embedding = nn.Parameter(torch.empty(config.num_query, config.d_model))
        nn.init.normal_(self.content_embedding, std=0.02)
        self.anchor_mlp = Mlp(config.d_model, config.d_model, 4, num_layers=3)
        self.anchor_pos = AnchorPositionEncoder(config)

    def anchor_priors(self, vis_map: VisualFeatureMap) -> Tensor:
        """Grid-center boxes for every flattened position: (S, 4)."""
        device, dtype = vis_map.features.device, vis_map.features.dtype
        centers = make_reference_points(list(vis_map.level_shapes), device=device, dtype=dtype)
        sizes = []
        for lvl, (h, w) in enumerate(vis_map.level_shapes):
            size = min(ANCHOR_PRIOR_SIZE * 2**lvl, 1.0)
            sizes.append(torch.full((h * w, 2), size, device=device, dtype=dtype))
        return torch.cat([centers, torch.cat(sizes, dim=0)], dim=-1)

    def forward(self, vis_map: VisualFeatureMap, text: TextFeatures) -> QuerySet:
        b, t, s, d = vis_map.features.shape
        q = self.config.num_query
        if q > s:
            raise ConfigurationError(f"num_query={q} exceeds number of visual positions S={s}")
        scores = relevance_scores(vis_map.features, text.features, text.pad_mask)
        scores = scores.masked_fill(vis_map.valid_mask, float("-inf"))
        indices = topk_stable(scores, q)  # (B, T, Q)
        gather_idx = indices[..., None].expand(b, t, q, d)
        selected = vis_map.features.gather(2, gather_idx)
        priors = self.anchor_priors(vis_map)[indices]  # (B, T, Q, 4)
        anchors = torch.sigmoid(inverse_sigmoid(priors) + self.anchor_mlp(selected))
        content = self.content_embedding[None, None].expand(b, t, q, d)
        return QuerySet(
            content=content,
            anchors=anchors,
            positional=self.anchor_pos(anchors),
            selected_indices=indices,
        )
