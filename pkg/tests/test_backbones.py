"""Frozen feature extractors: conv pyramid and text encoder."""

import numpy as np
import pytest
import torch

from videoground.backbones import (
    TextBackbone,
    TextFeatures,
    VisionBackbone,
    VisualFeatureMap,
    pyramid_shapes,
)
from videoground.errors import ConfigurationError, TokenizerError
from videoground.layers import make_level_start_index

from conftest import tiny_config


class TestPyramidShapes:
    def test_64x64_three_levels(self):
        shapes = pyramid_shapes(64, 64, 3)
        assert shapes == [(8, 8), (4, 4), (2, 2)]
        assert sum(h * w for h, w in shapes) == 84

    def test_ceil_division_on_odd_sizes(self):
        assert pyramid_shapes(100, 60, 3) == [(13, 8), (7, 4), (4, 2)]

    def test_too_small_input_rejected(self):
        with pytest.raises(ConfigurationError):
            pyramid_shapes(16, 64, 3)  # coarsest stride is 32

    def test_single_level(self):
        assert pyramid_shapes(64, 64, 1) == [(8, 8)]


class TestVisualFeatureMap:
    def test_consistency_checks(self):
        features = torch.zeros(1, 2, 20, 8)
        shapes = ((4, 4), (2, 2))
        start = tuple(make_level_start_index(list(shapes)))
        good = VisualFeatureMap(
            features=features,
            level_shapes=shapes,
            level_start_index=start,
            valid_mask=torch.zeros(1, 2, 20, dtype=torch.bool),
            frame_mask=torch.zeros(1, 2, dtype=torch.bool),
        )
        assert good.num_levels == 2
        with pytest.raises(ConfigurationError):
            VisualFeatureMap(
                features=features,
                level_shapes=((4, 4),),  # S mismatch
                level_start_index=(0,),
                valid_mask=torch.zeros(1, 2, 20, dtype=torch.bool),
                frame_mask=torch.zeros(1, 2, dtype=torch.bool),
            )
        with pytest.raises(ConfigurationError):
            VisualFeatureMap(
                features=features,
                level_shapes=shapes,
                level_start_index=(0, 99),
                valid_mask=torch.zeros(1, 2, 20, dtype=torch.bool),
                frame_mask=torch.zeros(1, 2, dtype=torch.bool),
            )
        with pytest.raises(ConfigurationError):
            VisualFeatureMap(
                features=features,
                level_shapes=shapes,
                level_start_index=start,
                valid_mask=torch.zeros(1, 2, 20),  # not boolean
                frame_mask=torch.zeros(1, 2, dtype=torch.bool),
            )


class TestVisionBackbone:
    def test_output_shapes(self):
        config = tiny_config(num_levels=3, resolution=64)
        backbone = VisionBackbone(config)
        frames = torch.rand(2, 3, 3, 64, 64)
        out = backbone(frames)
        assert out.features.shape == (2, 3, 84, config.d_model)
        assert out.level_shapes == ((8, 8), (4, 4), (2, 2))
        assert out.level_start_index == (0, 64, 80)
        assert out.frame_mask.shape == (2, 3)
        assert not out.frame_mask.any()

    def test_frame_mask_propagates(self):
        config = tiny_config()
        backbone = VisionBackbone(config)
        frames = torch.rand(1, 4, 3, 32, 32)
        mask = torch.tensor([[False, False, True, True]])
        out = backbone(frames, mask)
        assert out.valid_mask[0, 2].all() and out.valid_mask[0, 3].all()
        assert not out.valid_mask[0, 0].any()

    def test_processes_frames_independently(self):
        # per-frame conv stack: permuting input frames permutes the features
        config = tiny_config()
        backbone = VisionBackbone(config).eval()
        frames = torch.rand(1, 4, 3, 32, 32)
        perm = torch.tensor([2, 0, 3, 1])
        with torch.no_grad():
            base = backbone(frames).features
            shuffled = backbone(frames[:, perm]).features
        np.testing.assert_allclose(
            shuffled.numpy(), base[:, perm].numpy(), atol=1e-6
        )

    def test_wrong_rank_rejected(self):
        config = tiny_config()
        backbone = VisionBackbone(config)
        with pytest.raises(ConfigurationError):
            backbone(torch.rand(2, 3, 32, 32))


class TestTextBackbone:
    def test_output_shapes_and_default_mask(self):
        config = tiny_config()
        backbone = TextBackbone(vocab_size=10, config=config)
        tokens = torch.tensor([[2, 3, 4, 0, 0]])
        out = backbone(tokens)
        assert isinstance(out, TextFeatures)
        assert out.features.shape == (1, 5, config.d_model)
        np.testing.assert_array_equal(
            out.pad_mask.numpy(), [[False, False, False, True, True]]
        )

    def test_tokens_differing_in_one_word_give_different_features(self):
        config = tiny_config()
        backbone = TextBackbone(vocab_size=10, config=config).eval()
        with torch.no_grad():
            a = backbone(torch.tensor([[2, 3, 4]])).features
            b = backbone(torch.tensor([[2, 5, 4]])).features
        assert not torch.allclose(a, b)

    def test_padding_does_not_change_real_token_features(self):
        config = tiny_config()
        backbone = TextBackbone(vocab_size=10, config=config).eval()
        with torch.no_grad():
            short = backbone(torch.tensor([[2, 3, 4]])).features
            padded = backbone(torch.tensor([[2, 3, 4, 0, 0]])).features
        np.testing.assert_allclose(padded[:, :3].numpy(), short.numpy(), atol=1e-6)

    def test_too_long_rejected(self):
        config = tiny_config(max_text_len=4)
        backbone = TextBackbone(vocab_size=10, config=config)
        with pytest.raises(ConfigurationError):
            backbone(torch.zeros(1, 5, dtype=torch.long))

    def test_out_of_range_ids_rejected(self):
        config = tiny_config()
        backbone = TextBackbone(vocab_size=10, config=config)
        with pytest.raises(TokenizerError):
            backbone(torch.tensor([[2, 11]]))

    def test_tiny_vocab_rejected(self):
        with pytest.raises(ConfigurationError):
            TextBackbone(vocab_size=1, config=tiny_config())
