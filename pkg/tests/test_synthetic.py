"""Synthetic moving-shapes corpus: geometry, determinism, round trips."""

import numpy as np
import pytest

from videoground.datasets import load_canonical, load_clip
from videoground.errors import ConfigurationError, DataError
from videoground.synthetic import (
    COLOR_RGB,
    SyntheticSpec,
    _shape_mask,
    generate_synthetic,
    make_caption,
    vocabulary_words,
    write_synthetic,
)


class TestSpecValidation:
    def test_defaults_are_valid(self):
        SyntheticSpec()

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"num_frames": 1},
            {"n_videos": 0},
            {"colors": ()},
            {"colors": ("ultraviolet",)},
            {"shapes": ("hexagon",)},
            {"motions": ("sideways",)},
            {"min_size": 3},
            {"min_size": 20, "max_size": 12},
            {"max_size": 40, "height": 64, "width": 64},
            {"target_pairs": (("red", "circle"), ("white", "circle"))},
        ],
    )
    def test_bad_spec_rejected(self, kwargs):
        with pytest.raises(ConfigurationError):
            SyntheticSpec(**kwargs)


class TestCaptionsAndVocabulary:
    def test_caption_templates(self):
        assert make_caption("red", "circle", "left") == "the red circle moves left"
        assert make_caption("blue", "square", "still") == "the blue square stays still"

    def test_vocabulary_covers_every_caption(self):
        spec = SyntheticSpec()
        vocab = set(vocabulary_words(spec))
        for color in spec.colors:
            for shape in spec.shapes:
                for motion in spec.motions:
                    assert set(make_caption(color, shape, motion).split()) <= vocab

    def test_vocabulary_sorted_unique(self):
        words = vocabulary_words(SyntheticSpec())
        assert words == sorted(set(words))


class TestShapeMasks:
    def test_square_extent(self):
        mask = _shape_mask("square", xc=16.0, yc=16.0, size=8.0, height=32, width=32)
        assert mask.sum() == 81  # 9x9 pixel block, boundary inclusive
        assert mask[12, 12] and mask[20, 20]
        assert not mask[11, 16] and not mask[16, 21]

    def test_circle_inscribed_in_square(self):
        circle = _shape_mask("circle", 16.0, 16.0, 8.0, 32, 32)
        square = _shape_mask("square", 16.0, 16.0, 8.0, 32, 32)
        assert circle.sum() == 49  # lattice points with dx^2 + dy^2 <= 16
        assert circle[16, 16] and circle[16, 20]
        assert not circle[20, 20]  # corner outside the disk
        assert not (circle & ~square).any()

    def test_triangle_points_up(self):
        mask = _shape_mask("triangle", 16.0, 16.0, 8.0, 32, 32)
        assert mask[12].sum() == 1 and mask[12, 16]  # apex row
        assert mask[20].sum() == 9  # base row spans the box
        assert mask[11].sum() == 0 and mask[21].sum() == 0

    def test_unknown_shape_rejected(self):
        with pytest.raises(ConfigurationError):
            _shape_mask("hexagon", 16.0, 16.0, 8.0, 32, 32)


class TestGeneration:
    def test_deterministic_per_seed(self):
        spec = SyntheticSpec(
            n_videos=4, num_frames=8, height=32, width=32, min_size=8, max_size=14, seed=7
        )
        a, b = generate_synthetic(spec), generate_synthetic(spec)
        for ea, eb in zip(a.entries, b.entries):
            assert ea.annotation == eb.annotation
            np.testing.assert_array_equal(ea.clip.frames, eb.clip.frames)

    def test_seed_changes_content(self):
        base = dict(n_videos=4, num_frames=8, height=32, width=32, min_size=8, max_size=14)
        a = generate_synthetic(SyntheticSpec(seed=0, **base))
        b = generate_synthetic(SyntheticSpec(seed=1, **base))
        assert any(
            not np.array_equal(ea.clip.frames, eb.clip.frames)
            for ea, eb in zip(a.entries, b.entries)
        )

    def test_manifest_structure(self):
        spec = SyntheticSpec(n_videos=6, num_frames=12, height=48, width=48, seed=3)
        manifest = generate_synthetic(spec)
        assert manifest.kind == "synthetic"
        assert len(manifest) == 6
        vocab = set(vocabulary_words(spec))
        for entry in manifest.entries:
            assert entry.clip.frames.shape == (12, 48, 48, 3)
            interval = entry.annotation.interval
            assert interval.strict
            assert 0 <= interval.t_s <= interval.t_e < 12
            assert interval.n_frames >= max(2, 12 // 3)
            assert set(entry.annotation.prompt.split()) <= vocab

    def test_target_pairs_cycle_in_order(self):
        pairs = (("red", "circle"), ("blue", "square"))
        spec = SyntheticSpec(
            n_videos=4,
            num_frames=8,
            height=32,
            width=32,
            min_size=8,
            max_size=14,
            target_pairs=pairs,
            seed=5,
        )
        manifest = generate_synthetic(spec)
        for i, entry in enumerate(manifest.entries):
            color, shape = pairs[i % 2]
            assert color in entry.annotation.prompt
            assert shape in entry.annotation.prompt

    def test_lone_actor_matches_annotation(self):
        # one (color, shape) pair leaves no legal distractor, so every pixel
        # belongs to the target and must respect window and box
        spec = SyntheticSpec(
            n_videos=3,
            num_frames=10,
            height=48,
            width=48,
            colors=("green",),
            shapes=("square",),
            seed=11,
        )
        for entry in generate_synthetic(spec).entries:
            frames = entry.clip.frames
            ann = entry.annotation
            expected = np.array(COLOR_RGB["green"], dtype=np.float32) / 255.0
            for t in range(spec.num_frames):
                colored = frames[t].any(axis=-1)
                if not ann.interval.t_s <= t <= ann.interval.t_e:
                    assert not colored.any()
                    continue
                assert colored.any()
                np.testing.assert_allclose(
                    frames[t][colored],
                    np.broadcast_to(expected, frames[t][colored].shape),
                    atol=1e-6,
                )
                ys, xs = np.nonzero(colored)
                box = ann.boxes[t]
                assert xs.min() / spec.width >= box.cx - box.w / 2 - 1e-9
                assert xs.max() / spec.width <= box.cx + box.w / 2 + 1e-9
                assert ys.min() / spec.height >= box.cy - box.h / 2 - 1e-9
                assert ys.max() / spec.height <= box.cy + box.h / 2 + 1e-9

    def test_constant_velocity_and_size(self):
        spec = SyntheticSpec(n_videos=5, num_frames=12, height=32, width=64, max_size=14, seed=2)
        for entry in generate_synthetic(spec).entries:
            ann = entry.annotation
            boxes = [ann.boxes[t] for t in ann.interval.frames()]
            # square actor footprint: equal pixel extent on both axes
            for box in boxes:
                assert box.w * spec.width == pytest.approx(box.h * spec.height, abs=1e-9)
                assert box.w == pytest.approx(boxes[0].w, abs=1e-12)
            dx = [b2.cx - b1.cx for b1, b2 in zip(boxes, boxes[1:])]
            dy = [b2.cy - b1.cy for b1, b2 in zip(boxes, boxes[1:])]
            for d in dx:
                assert d == pytest.approx(dx[0], abs=1e-9)
            for d in dy:
                assert d == pytest.approx(dy[0], abs=1e-9)

    def test_boxes_stay_inside_frame(self):
        spec = SyntheticSpec(n_videos=8, num_frames=16, seed=9)
        for entry in generate_synthetic(spec).entries:
            for t in entry.annotation.interval.frames():
                box = entry.annotation.boxes[t]
                assert box.cx - box.w / 2 >= 0.0
                assert box.cx + box.w / 2 <= 1.0
                assert box.cy - box.h / 2 >= 0.0
                assert box.cy + box.h / 2 <= 1.0


class TestWriteSynthetic:
    def test_round_trip(self, tmp_path):
        spec = SyntheticSpec(
            n_videos=2, num_frames=4, height=32, width=32, min_size=8, max_size=14, seed=1
        )
        manifest = generate_synthetic(spec)
        vocab = vocabulary_words(spec)
        path = write_synthetic(manifest, tmp_path / "data", vocab)
        assert path == tmp_path / "data" / "manifest.json"
        assert (tmp_path / "data" / "vocab.txt").read_text() == "\n".join(vocab) + "\n"
        for entry in manifest.entries:
            pngs = list((tmp_path / "data" / entry.video_id).glob("*.png"))
            assert len(pngs) == 4
        loaded = load_canonical(path)
        assert len(loaded) == 2
        for orig, back in zip(manifest.entries, loaded.entries):
            assert back.video_id == orig.video_id
            assert back.annotation.prompt == orig.annotation.prompt
            assert back.annotation.interval == orig.annotation.interval
            for t in orig.annotation.interval.frames():
                np.testing.assert_allclose(
                    back.annotation.boxes[t].as_array(),
                    orig.annotation.boxes[t].as_array(),
                    atol=1e-5,
                )
            # uint8-valued pixels survive the PNG round trip exactly
            np.testing.assert_array_equal(load_clip(back).frames, orig.clip.frames)

    def test_entry_without_clip_rejected(self, tmp_path):
        spec = SyntheticSpec(
            n_videos=1, num_frames=4, height=32, width=32, min_size=8, max_size=14
        )
        manifest = generate_synthetic(spec)
        path = write_synthetic(manifest, tmp_path / "d", vocabulary_words(spec))
        reloaded = load_canonical(path)  # disk-backed entries have no clip
        with pytest.raises(DataError):
            write_synthetic(reloaded, tmp_path / "d2", ["the"])
