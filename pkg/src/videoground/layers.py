"""Shared neural building blocks: dense attention, deformable attention, FFNs."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import ConfigurationError


def inverse_sigmoid(x: Tensor, eps: float = 1e-5) -> Tensor:
    x = x.clamp(min=eps, max=1 - eps)
    return torch.log(x / (1 - x))


class MultiHeadAttention(nn.Module):
    """Standard scaled dot-product attention with named projections.

    Masks follow the package-wide convention: True = ignore.
    """

    def __init__(self, d_model: int, num_heads: int, dropout: float = 0.0):
        super().__init__()
        if d_model % num_heads != 0:
            raise ConfigurationError(f"d_model={d_model} not divisible by num_heads={num_heads}")
        self.d_model = d_model
        self.num_heads = num_heads
        self.head_dim = d_model // num_heads
        self.scale = self.head_dim**-0.5
        self.proj_q = nn.Linear(d_model, d_model)
        self.proj_k = nn.Linear(d_model, d_model)
        self.proj_v = nn.Linear(d_model, d_model)
        self.proj_out = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(
        self,
        query: Tensor,
        key: Tensor,
        value: Tensor,
        key_mask: Tensor | None = None,
        need_weights: bool = False,
    ) -> tuple[Tensor, Tensor | None]:
        """query (B, Lq, D), key/value (B, Lk, D), key_mask (B, Lk) -> (B, Lq, D)."""
        b, lq, _ = query.shape
        lk = key.shape[1]
        q = self.proj_q(query).view(b, lq, self.num_heads, self.head_dim).transpose(1, 2)
        k = self.proj_k(key).view(b, lk, self.num_heads, self.head_dim).transpose(1, 2)
        v = self.proj_v(value).view(b, lk, self.num_heads, self.head_dim).transpose(1, 2)
        scores = (q @ k.transpose(-1, -2)) * self.scale
        if key_mask is not None:
            scores = scores.masked_fill(key_mask[:, None, None, :], float("-inf"))
        attn = scores.softmax(dim=-1)
        if key_mask is not None:
            # Rows whose keys are all padding (fully masked frames) would be
            # NaN after softmax; zero them so padding cannot poison gradients.
            fully_masked = key_mask.all(dim=-1)
            if fully_masked.any():
                attn = attn.masked_fill(fully_masked[:, None, None, None], 0.0)
        out = (self.dropout(attn) @ v).transpose(1, 2).reshape(b, lq, self.d_model)
        out = self.proj_out(out)
        return out, (attn if need_weights else None)


class FeedForward(nn.Module):
    """Two-layer position-wise FFN (Linear -> GELU -> Linear)."""

    def __init__(self, d_model: int, ffn_dim: int, dropout: float = 0.0):
        super().__init__()
        self.fc1 = nn.Linear(d_model, ffn_dim)
        self.fc2 = nn.Linear(ffn_dim, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(self.dropout(F.gelu(self.fc1(x))))


class Mlp(nn.Module):
    """Prediction-head MLP with ReLU between layers (DETR style)."""

    def __init__(self, in_dim: int, hidden_dim: int, out_dim: int, num_layers: int = 3):
        super().__init__()
        dims = [in_dim] + [hidden_dim] * (num_layers - 1) + [out_dim]
        self.layers = nn.ModuleList(nn.Linear(a, b) for a, b in zip(dims[:-1], dims[1:]))

    def forward(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = F.relu(x)
        return x


def make_level_start_index(level_shapes: list[tuple[int, int]]) -> list[int]:
    starts, offset = [], 0
    for h, w in level_shapes:
        starts.append(offset)
        offset += h * w
    return starts


def make_reference_points(
    level_shapes: list[tuple[int, int]], device=None, dtype=None
) -> Tensor:
    """Normalized (x, y) cell centers for every position of a flattened pyramid: (S, 2)."""
    points = []
    for h, w in level_shapes:
        ys = (torch.arange(h, device=device, dtype=dtype) + 0.5) / h
        xs = (torch.arange(w, device=device, dtype=dtype) + 0.5) / w
        gy, gx = torch.meshgrid(ys, xs, indexing="ij")
        points.append(torch.stack([gx, gy], dim=-1).reshape(h * w, 2))
    return torch.cat(points, dim=0)


def deformable_sampling(
    values: Tensor,
    level_shapes: list[tuple[int, int]],
    locations: Tensor,
    weights: Tensor,
) -> Tensor:
    """Bilinear sampling core of deformable attention.

    values: (B, S, H, Dh) per-head values for the flattened pyramid.
    locations: (B, Lq, H, L, P, 2) normalized (x, y) in [0, 1]; points outside
        the map read zeros.
    weights: (B, Lq, H, L, P) sampling weights (softmax-normalized by the caller).
    Returns (B, Lq, H * Dh).
    """
    b, s, num_heads, head_dim = values.shape
    _, lq, _, num_levels, num_points, _ = locations.shape
    if s != sum(h * w for h, w in level_shapes):
        raise ConfigurationError(f"flattened size {s} inconsistent with level shapes {level_shapes}")
    out = values.new_zeros(b * num_heads, head_dim, lq)
    start = 0
    for lvl, (h, w) in enumerate(level_shapes):
        lv = values[:, start : start + h * w]  # (B, hw, H, Dh)
        start += h * w
        lv = lv.permute(0, 2, 3, 1).reshape(b * num_heads, head_dim, h, w)
        # grid_sample wants (x, y) in [-1, 1] with align_corners=False so that
        # u = (col + 0.5) / w lands exactly on the stored cell value.
        grid = locations[:, :, :, lvl] * 2 - 1  # (B, Lq, H, P, 2)
        grid = grid.permute(0, 2, 1, 3, 4).reshape(b * num_heads, lq, num_points, 2)
        sampled = F.grid_sample(lv, grid, mode="bilinear", padding_mode="zeros", align_corners=False)
        w_l = weights[:, :, :, lvl].permute(0, 2, 1, 3).reshape(b * num_heads, 1, lq, num_points)
        out = out + (sampled * w_l).sum(dim=-1)
    return out.view(b, num_heads, head_dim, lq).permute(0, 3, 1, 2).reshape(b, lq, num_heads * head_dim)


class DeformableAttention(nn.Module):
    """Multi-scale deformable attention within one frame's feature pyramid.

    Each query predicts, per head, `num_points` sampling offsets on every
    pyramid level around its reference point; offsets are expressed in cells
    of the target level.
    """

    def __init__(self, d_model: int, num_heads: int, num_levels: int, num_points: int):
        super().__init__()
        if d_model % num_heads != 0:
            raise ConfigurationError(f"d_model={d_model} not divisible by num_heads={num_heads}")
        self.d_model = d_model
        self.num_heads = num_heads
        self.num_levels = num_levels
        self.num_points = num_points
        self.head_dim = d_model // num_heads
        self.sampling_offsets = nn.Linear(d_model, num_heads * num_levels * num_points * 2)
        self.attention_weights = nn.Linear(d_model, num_heads * num_levels * num_points)
        self.value_proj = nn.Linear(d_model, d_model)
        self.output_proj = nn.Linear(d_model, d_model)
        self._init_parameters()

    def _init_parameters(self):
        nn.init.zeros_(self.sampling_offsets.weight)
        # Spread initial sampling points on a per-head star pattern so heads
        # start distinguishable; weights start uniform (zero logits).
        thetas = torch.arange(self.num_heads, dtype=torch.float32) * (2.0 * math.pi / self.num_heads)
        directions = torch.stack([thetas.cos(), thetas.sin()], dim=-1)
        directions = directions / directions.abs().max(dim=-1, keepdim=True).values
        bias = directions.view(self.num_heads, 1, 1, 2).repeat(1, self.num_levels, self.num_points, 1)
        for p in range(self.num_points):
            bias[:, :, p, :] *= p + 1
        with torch.no_grad():
            self.sampling_offsets.bias.copy_(bias.flatten())
        nn.init.zeros_(self.attention_weights.weight)
        nn.init.zeros_(self.attention_weights.bias)
        nn.init.xavier_uniform_(self.value_proj.weight)
        nn.init.zeros_(self.value_proj.bias)
        nn.init.xavier_uniform_(self.output_proj.weight)
        nn.init.zeros_(self.output_proj.bias)

    def reset_to_uniform_lookup(self):
        """Zero all offsets/weight logits: output becomes the plain average of
        reference-point lookups across levels and points (used by oracles)."""
        with torch.no_grad():
            self.sampling_offsets.weight.zero_()
            self.sampling_offsets.bias.zero_()
            self.attention_weights.weight.zero_()
            self.attention_weights.bias.zero_()

    def forward(
        self,
        query: Tensor,
        value: Tensor,
        reference_points: Tensor,
        level_shapes: list[tuple[int, int]],
        key_mask: Tensor | None = None,
    ) -> Tensor:
        """query (B, Lq, D), value (B, S, D), reference_points (B, Lq, 2) or (Lq, 2)."""
        b, lq, _ = query.shape
        s = value.shape[1]
        if len(level_shapes) != self.num_levels:
            raise ConfigurationError(
                f"got {len(level_shapes)} levels, attention configured for {self.num_levels}"
            )
        v = self.value_proj(value)
        if key_mask is not None:
            v = v.masked_fill(key_mask[..., None], 0.0)
        v = v.view(b, s, self.num_heads, self.head_dim)
        offsets = self.sampling_offsets(query).view(
            b, lq, self.num_heads, self.num_levels, self.num_points, 2
        )
        weights = (
            self.attention_weights(query)
            .view(b, lq, self.num_heads, self.num_levels * self.num_points)
            .softmax(dim=-1)
            .view(b, lq, self.num_heads, self.num_levels, self.num_points)
        )
        if reference_points.dim() == 2:
            reference_points = reference_points.unsqueeze(0).expand(b, -1, -1)
        normalizer = torch.tensor(
            [[w, h] for h, w in level_shapes], device=query.device, dtype=query.dtype
        )  # (L, 2) in (x, y) order
        locations = (
            reference_points[:, :, None, None, None, :]
            + offsets / normalizer[None, None, None, :, None, :]
        )
        out = deformable_sampling(v, level_shapes, locations, weights)
        return self.output_proj(out)
