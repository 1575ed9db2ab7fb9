"""End-to-end model assembly: batching, forward pass, parameter bookkeeping."""

import dataclasses

import numpy as np
import pytest
import torch

from videoground.errors import ConfigurationError
from videoground.model import GroundingModel, clips_to_batch, prompts_to_batch
from videoground.types import TextPrompt, VideoClip

from conftest import tiny_config

VOCAB = 12


def _clip(t, h=32, w=32, seed=0):
    rng = np.random.default_rng(seed)
    return VideoClip(frames=rng.random((t, h, w, 3)).astype(np.float32))


def _prompt(length, seed=0):
    rng = np.random.default_rng(seed)
    return TextPrompt(raw_text="x " * length, tokens=tuple(int(v) for v in rng.integers(2, VOCAB, length)))


class TestBatching:
    def test_clips_pad_to_longest(self):
        a, b = _clip(3), _clip(5, seed=1)
        frames, mask = clips_to_batch([a, b])
        assert frames.shape == (2, 5, 3, 32, 32)
        assert mask.dtype == torch.bool
        assert mask.tolist() == [[False] * 3 + [True] * 2, [False] * 5]
        assert frames[0, 3:].abs().sum() == 0
        expected = torch.from_numpy(a.frames.copy()).permute(0, 3, 1, 2)
        torch.testing.assert_close(frames[0, :3], expected)

    def test_clips_must_share_resolution(self):
        with pytest.raises(ConfigurationError):
            clips_to_batch([_clip(2, h=32, w=32), _clip(2, h=32, w=16)])

    def test_empty_clip_batch_rejected(self):
        with pytest.raises(ConfigurationError):
            clips_to_batch([])

    def test_prompts_pad_with_zero(self):
        p1, p2 = _prompt(3), _prompt(5, seed=1)
        tokens, mask = prompts_to_batch([p1, p2])
        assert tokens.shape == (2, 5)
        assert tokens[0, 3:].tolist() == [0, 0]
        assert mask.tolist() == [[False] * 3 + [True] * 2, [False] * 5]
        assert tokens[1].tolist() == list(p2.tokens)

    def test_empty_prompt_batch_rejected(self):
        with pytest.raises(ConfigurationError):
            prompts_to_batch([])


class TestForward:
    def _inputs(self, b=2, t=4, l=5):
        frames, frame_mask = clips_to_batch([_clip(t, seed=i) for i in range(b)])
        tokens, pad_mask = prompts_to_batch([_prompt(l, seed=i) for i in range(b)])
        return frames, tokens, frame_mask, pad_mask

    def test_output_shapes_and_ranges(self):
        config = tiny_config(num_decoder_layers=2)
        model = GroundingModel(config, VOCAB)
        out = model(*self._inputs())
        assert len(out.layers) == 2
        assert out.final is out.layers[-1]
        for layer in out.layers:
            assert layer.boxes.shape == (2, 4, config.num_query, 4)
            assert layer.query_scores.shape == (2, 4, config.num_query)
            assert layer.tau_s.shape == (2, 4)
            assert layer.anchors.shape == (2, 4, config.num_query, 4)
            assert layer.boxes.min() >= 0 and layer.boxes.max() <= 1
            assert layer.query_scores.min() >= 0 and layer.query_scores.max() <= 1
            torch.testing.assert_close(layer.tau_s.sum(-1), torch.ones(2))
            torch.testing.assert_close(layer.tau_e.sum(-1), torch.ones(2))
        assert out.frame_mask.shape == (2, 4)

    def test_padded_frames_get_zero_temporal_mass(self):
        model = GroundingModel(tiny_config(), VOCAB)
        frames, frame_mask = clips_to_batch([_clip(3), _clip(5, seed=1)])
        tokens, pad_mask = prompts_to_batch([_prompt(4), _prompt(4, seed=1)])
        out = model(frames, tokens, frame_mask, pad_mask).final
        assert out.tau_s[0, 3:].abs().sum() == 0
        assert out.tau_e[0, 3:].abs().sum() == 0

    def test_predict_sample_returns_normalized_numpy(self):
        model = GroundingModel(tiny_config(), VOCAB)
        model.train()
        preds, dists = model.predict_sample(_clip(4), _prompt(5))
        assert model.training  # mode restored
        assert isinstance(preds.boxes, np.ndarray) and preds.boxes.dtype == np.float64
        assert preds.boxes.shape == (4, tiny_config().num_query, 4)
        assert preds.query_scores.shape == (4, tiny_config().num_query)
        np.testing.assert_allclose(dists.tau_s.sum(), 1.0, atol=1e-12)
        np.testing.assert_allclose(dists.tau_e.sum(), 1.0, atol=1e-12)

    def test_frame_permutation_equivariance_without_temporal_paths(self):
        config = tiny_config(
            encoder_temporal=False, decoder_temporal=False, temporal_pe=False
        )
        model = GroundingModel(config, VOCAB).eval()
        frames, tokens, frame_mask, pad_mask = self._inputs(b=1, t=5)
        perm = torch.tensor([3, 0, 4, 1, 2])
        with torch.no_grad():
            out = model(frames, tokens, frame_mask, pad_mask).final
            out_p = model(frames[:, perm], tokens, frame_mask[:, perm], pad_mask).final
        torch.testing.assert_close(out_p.boxes, out.boxes[:, perm], atol=1e-5, rtol=0)
        torch.testing.assert_close(
            out_p.query_scores, out.query_scores[:, perm], atol=1e-5, rtol=0
        )


class TestParameterBookkeeping:
    def test_groups_partition_all_parameters(self):
        model = GroundingModel(tiny_config(), VOCAB)
        groups = model.parameter_groups()
        seen = [id(p) for params in groups.values() for p in params]
        assert len(seen) == len(set(seen))  # pairwise disjoint
        assert set(seen) == {id(p) for p in model.parameters()}

    def test_temporal_groups_follow_toggles(self):
        on = GroundingModel(tiny_config(), VOCAB).parameter_groups()
        assert on["encoder_temporal"] and on["decoder_temporal"]
        off = GroundingModel(
            tiny_config(encoder_temporal=False, decoder_temporal=False), VOCAB
        ).parameter_groups()
        assert not off["encoder_temporal"] and not off["decoder_temporal"]

    def test_temporal_routing_matches_module_names(self):
        model = GroundingModel(tiny_config(), VOCAB)
        groups = model.parameter_groups()
        temporal_ids = {id(p) for p in groups["encoder_temporal"]}
        layer = model.encoder.layers[0]
        for name, param in layer.named_parameters():
            expect_temporal = name.split(".")[0] in ("norm_temporal", "temporal_attn")
            assert (id(param) in temporal_ids) == expect_temporal

    def test_trainable_respects_finetune_flags(self):
        model = GroundingModel(
            tiny_config(finetune_encoder_spatial=False, finetune_decoder_spatial=False), VOCAB
        )
        groups = model.parameter_groups()
        trainable = {id(p) for p in model.trainable_parameters()}
        expected = {
            id(p)
            for key in ("encoder_temporal", "decoder_temporal", "query_selection", "heads")
            for p in groups[key]
        }
        assert trainable == expected

    def test_trainable_includes_spatial_when_enabled(self):
        model = GroundingModel(tiny_config(), VOCAB)  # finetune flags default on
        groups = model.parameter_groups()
        trainable = {id(p) for p in model.trainable_parameters()}
        assert {id(p) for p in groups["encoder_spatial"]} <= trainable
        assert {id(p) for p in groups["decoder_spatial"]} <= trainable
        assert not ({id(p) for p in groups["vision_backbone"]} & trainable)
        assert not ({id(p) for p in groups["text_backbone"]} & trainable)

    def test_apply_freeze_sets_requires_grad(self):
        model = GroundingModel(tiny_config(), VOCAB)
        model.apply_freeze()
        trainable = {id(p) for p in model.trainable_parameters()}
        for p in model.parameters():
            assert p.requires_grad == (id(p) in trainable)

    def test_backbones_frozen_at_construction(self):
        model = GroundingModel(tiny_config(), VOCAB)
        assert all(not p.requires_grad for p in model.vision_backbone.parameters())
        assert all(not p.requires_grad for p in model.text_backbone.parameters())

    def test_group_checksums_detect_drift(self):
        model = GroundingModel(tiny_config(), VOCAB)
        before = model.group_checksums()
        assert before == model.group_checksums()  # deterministic
        with torch.no_grad():
            next(model.box_head.parameters()).add_(0.5)
        after = model.group_checksums()
        changed = [k for k in before if before[k] != after[k]]
        assert changed == ["heads"]


class TestConfigVariants:
    def test_zero_encoder_layers(self):
        model = GroundingModel(tiny_config(num_encoder_layers=0), VOCAB)
        frames, frame_mask = clips_to_batch([_clip(2)])
        tokens, pad_mask = prompts_to_batch([_prompt(3)])
        out = model(frames, tokens, frame_mask, pad_mask)
        assert out.final.boxes.shape[1] == 2

    def test_full_scale_config_instantiates(self):
        config = dataclasses.replace(
            tiny_config(), num_encoder_layers=1, num_decoder_layers=1
        )
        GroundingModel(config, VOCAB)
