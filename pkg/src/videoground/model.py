"""Full grounding model: frozen backbones, cross-modal encoder/decoder,
query selection, and prediction heads, plus batching helpers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor, nn

from .backbones import TextBackbone, TextFeatures, VisionBackbone, VisualFeatureMap
from .decoder import CrossModalDecoder
from .encoder import CrossModalEncoder
from .errors import ConfigurationError
from .heads import BoxHead, FramePredictions, TemporalDistributions, TemporalHead
from .queries import QuerySelector, QuerySet
from .types import ModelConfig, TextPrompt, VideoClip


@dataclass(frozen=True)
class LayerPredictions:
    """Head outputs for one decoder layer (batched)."""

    boxes: Tensor  # (B, T, Q, 4)
    query_scores: Tensor  # (B, T, Q)
    tau_s: Tensor  # (B, T)
    tau_e: Tensor  # (B, T)
    anchors: Tensor  # (B, T, Q, 4)


@dataclass(frozen=True)
class ModelOutput:
    layers: tuple[LayerPredictions, ...]
    query_set: QuerySet
    frame_mask: Tensor  # (B, T) True = padded frame

    @property
    def final(self) -> LayerPredictions:
        return self.layers[-1]


def clips_to_batch(
    clips: list[VideoClip], device=None, dtype=torch.float32
) -> tuple[Tensor, Tensor]:
    """Stack clips into (B, T, 3, H, W) + frame_mask (B, T), padding T with zeros.

    All clips must share height and width; only the frame count may differ.
    """
    if not clips:
        raise ConfigurationError("empty batch")
    h, w = clips[0].height, clips[0].width
    if any(c.height != h or c.width != w for c in clips):
        raise ConfigurationError("all clips in a batch must share height and width")
    t_max = max(c.num_frames for c in clips)
    frames = torch.zeros(len(clips), t_max, 3, h, w, dtype=dtype, device=device)
    frame_mask = torch.ones(len(clips), t_max, dtype=torch.bool, device=device)
    for i, clip in enumerate(clips):
        t = clip.num_frames
        frames[i, :t] = torch.from_numpy(clip.frames.copy()).permute(0, 3, 1, 2).to(dtype)
        frame_mask[i, :t] = False
    return frames, frame_mask


def prompts_to_batch(
    prompts: list[TextPrompt], device=None
) -> tuple[Tensor, Tensor]:
    """Stack token sequences into (B, L) + pad_mask (B, L), padding with id 0."""
    if not prompts:
        raise ConfigurationError("empty batch")
    l_max = max(len(p) for p in prompts)
    tokens = torch.zeros(len(prompts), l_max, dtype=torch.long, device=device)
    pad_mask = torch.ones(len(prompts), l_max, dtype=torch.bool, device=device)
    for i, prompt in enumerate(prompts):
        ids = torch.tensor(prompt.tokens, dtype=torch.long, device=device)
        tokens[i, : len(ids)] = ids
        pad_mask[i, : len(ids)] = False
    return tokens, pad_mask


class GroundingModel(nn.Module):
    """End-to-end spatio-temporal grounding network.

    Both backbones are frozen at construction; everything downstream is
    trainable subject to the config's finetune/temporal toggles (see
    parameter_groups).
    """

    def __init__(self, config: ModelConfig, vocab_size: int):
        super().__init__()
        self.config = config
        self.vision_backbone = VisionBackbone(config)
        self.text_backbone = TextBackbone(vocab_size, config)
        self.vision_backbone.requires_grad_(False)
        self.text_backbone.requires_grad_(False)
        self.encoder = CrossModalEncoder(config)
        self.query_selector = QuerySelector(config)
        self.decoder = CrossModalDecoder(config, self.query_selector.anchor_pos)
        self.box_head = BoxHead(config)
        self.temporal_head = TemporalHead(config)

    def encode_inputs(
        self,
        frames: Tensor,
        tokens: Tensor,
        frame_mask: Tensor | None = None,
        pad_mask: Tensor | None = None,
    ) -> tuple[VisualFeatureMap, TextFeatures]:
        vis_map = self.vision_backbone(frames, frame_mask)
        text = self.text_backbone(tokens, pad_mask)
        return self.encoder(vis_map, text)

    def forward(
        self,
        frames: Tensor,
        tokens: Tensor,
        frame_mask: Tensor | None = None,
        pad_mask: Tensor | None = None,
    ) -> ModelOutput:
        """frames (B, T, 3, H, W) in [0, 1]; tokens (B, L) ids; masks True = pad."""
        vis_map, text = self.encode_inputs(frames, tokens, frame_mask, pad_mask)
        queries = self.query_selector(vis_map, text)
        states = self.decoder(queries, vis_map, text)
        layers = []
        for state in states:
            boxes, scores = self.box_head(state.content, state.anchors)
            tau_s, tau_e = self.temporal_head(state.content, vis_map.frame_mask)
            layers.append(
                LayerPredictions(
                    boxes=boxes, query_scores=scores, tau_s=tau_s, tau_e=tau_e, anchors=state.anchors
                )
            )
        return ModelOutput(layers=tuple(layers), query_set=queries, frame_mask=vis_map.frame_mask)

    @torch.no_grad()
    def predict_sample(
        self, clip: VideoClip, prompt: TextPrompt
    ) -> tuple[FramePredictions, TemporalDistributions]:
        """Single-sample inference returning numpy-backed predictions."""
        was_training = self.training
        self.eval()
        try:
            device = next(self.parameters()).device
            frames, frame_mask = clips_to_batch([clip], device=device)
            tokens, pad_mask = prompts_to_batch([prompt], device=device)
            out = self.forward(frames, tokens, frame_mask, pad_mask).final
        finally:
            self.train(was_training)
        preds = FramePredictions(
            boxes=out.boxes[0].double().cpu().numpy(),
            query_scores=out.query_scores[0].double().cpu().numpy(),
        )
        tau_s = out.tau_s[0].double().cpu().numpy()
        tau_e = out.tau_e[0].double().cpu().numpy()
        dists = TemporalDistributions(tau_s=tau_s / tau_s.sum(), tau_e=tau_e / tau_e.sum())
        return preds, dists

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        """Named parameter groups for freezing/ablation bookkeeping.

        Groups partition all parameters: vision_backbone, text_backbone,
        encoder_temporal, encoder_spatial, decoder_temporal, decoder_spatial,
        query_selection, heads. Temporal groups exist only when the matching
        toggle is on.
        """
        groups: dict[str, list[nn.Parameter]] = {
            "vision_backbone": list(self.vision_backbone.parameters()),
            "text_backbone": list(self.text_backbone.parameters()),
            "encoder_temporal": [],
            "encoder_spatial": [],
            "decoder_temporal": [],
            "decoder_spatial": [],
            "query_selection": list(self.query_selector.parameters()),
            "heads": list(self.box_head.parameters()) + list(self.temporal_head.parameters()),
        }
        for layer in self.encoder.layers:
            for name, param in layer.named_parameters():
                key = "encoder_temporal" if name.partition(".")[0] in ("norm_temporal", "temporal_attn") else "encoder_spatial"
                groups[key].append(param)
        for layer in self.decoder.layers:
            for name, param in layer.named_parameters():
                key = "decoder_temporal" if name.partition(".")[0] in ("norm_temporal", "temporal_attn") else "decoder_spatial"
                groups[key].append(param)
        return groups

    def trainable_parameters(self) -> list[nn.Parameter]:
        """Parameters the optimizer should see given the config toggles."""
        groups = self.parameter_groups()
        trainable = ["encoder_temporal", "decoder_temporal", "query_selection", "heads"]
        if self.config.finetune_encoder_spatial:
            trainable.append("encoder_spatial")
        if self.config.finetune_decoder_spatial:
            trainable.append("decoder_spatial")
        params = []
        for key in trainable:
            params.extend(groups[key])
        return params

    def apply_freeze(self):
        """Set requires_grad to reflect the config toggles (backbones stay frozen)."""
        self.requires_grad_(False)
        for param in self.trainable_parameters():
            param.requires_grad_(True)

    def group_checksums(self) -> dict[str, str]:
        """SHA-256 digest per parameter group; frozen groups must not drift."""
        digests = {}
        for name, params in self.parameter_groups().items():
            h = hashlib.sha256()
            for p in params:
                h.update(p.detach().cpu().double().numpy().tobytes())
            digests[name] = h.hexdigest()
        return digests
