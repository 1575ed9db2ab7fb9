"""Synthetic moving-shapes videos with analytically known grounding tubes.

Each video shows one target shape (color + shape named by the caption) that
appears only during a sub-interval and translates with constant velocity,
plus optional distractor shapes that never share the target's (color, shape)
pair, so every caption matches exactly one object.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .datasets import DatasetManifest, ManifestEntry, save_canonical
from .errors import ConfigurationError, DataError
from .types import BoundingBox, GroundingAnnotation, TemporalInterval, VideoClip

COLOR_RGB: dict[str, tuple[int, int, int]] = {
    "red": (220, 40, 40),
    "green": (40, 200, 60),
    "blue": (50, 80, 230),
    "yellow": (235, 220, 50),
    "magenta": (200, 60, 200),
    "cyan": (60, 200, 220),
    "white": (240, 240, 240),
    "orange": (240, 150, 40),
}
SHAPE_NAMES = ("circle", "square", "triangle")
MOTION_NAMES = ("left", "right", "up", "down", "still")


@dataclass(frozen=True)
class SyntheticSpec:
    n_videos: int = 16
    num_frames: int = 16
    height: int = 64
    width: int = 64
    colors: tuple[str, ...] = ("red", "green", "blue", "yellow")
    shapes: tuple[str, ...] = SHAPE_NAMES
    motions: tuple[str, ...] = MOTION_NAMES
    min_size: int = 12
    max_size: int = 20
    max_distractors: int = 2
    seed: int = 0
    # optional explicit (color, shape) target pairs, cycled across videos;
    # used for held-out-combination splits
    target_pairs: tuple[tuple[str, str], ...] | None = None

    def __post_init__(self):
        if self.num_frames < 2:
            raise ConfigurationError("strict intervals need at least 2 frames")
        if self.n_videos < 1:
            raise ConfigurationError("n_videos must be positive")
        if not self.colors or not self.shapes or not self.motions:
            raise ConfigurationError("color/shape/motion vocabularies must be nonempty")
        for c in self.colors:
            if c not in COLOR_RGB:
                raise ConfigurationError(f"unknown color {c!r}; known: {sorted(COLOR_RGB)}")
        for s in self.shapes:
            if s not in SHAPE_NAMES:
                raise ConfigurationError(f"unknown shape {s!r}; known: {SHAPE_NAMES}")
        for m in self.motions:
            if m not in MOTION_NAMES:
                raise ConfigurationError(f"unknown motion {m!r}; known: {MOTION_NAMES}")
        if not 4 <= self.min_size <= self.max_size:
            raise ConfigurationError("need 4 <= min_size <= max_size")
        if self.max_size > min(self.height, self.width) // 2:
            raise ConfigurationError("max_size too large for the frame")
        if self.target_pairs is not None:
            for color, shape in self.target_pairs:
                if color not in self.colors or shape not in self.shapes:
                    raise ConfigurationError(f"target pair ({color}, {shape}) outside vocabularies")


def make_caption(color: str, shape: str, motion: str) -> str:
    if motion == "still":
        return f"the {color} {shape} stays still"
    return f"the {color} {shape} moves {motion}"


def vocabulary_words(spec: SyntheticSpec) -> list[str]:
    words = {"the", "moves", "stays", "still"}
    words.update(spec.colors)
    words.update(spec.shapes)
    words.update(m for m in spec.motions if m != "still")
    return sorted(words)


def _shape_mask(shape: str, xc: float, yc: float, size: float, height: int, width: int) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    half = size / 2.0
    if shape == "circle":
        return (xs - xc) ** 2 + (ys - yc) ** 2 <= half**2
    if shape == "square":
        return (np.abs(xs - xc) <= half) & (np.abs(ys - yc) <= half)
    if shape == "triangle":  # upward-pointing, inscribed in the box
        inside_rows = (ys >= yc - half) & (ys <= yc + half)
        allowed_halfwidth = (ys - (yc - half)) / 2.0
        return inside_rows & (np.abs(xs - xc) <= allowed_halfwidth)
    raise ConfigurationError(f"unknown shape {shape!r}")


@dataclass(frozen=True)
class _Actor:
    shape: str
    color: str
    size: float
    window: TemporalInterval
    centers: dict[int, tuple[float, float]]  # frame -> (xc, yc)


def _plan_actor(
    rng: np.random.Generator,
    spec: SyntheticSpec,
    shape: str,
    color: str,
    motion: str,
    window: TemporalInterval,
) -> _Actor:
    size = float(rng.uniform(spec.min_size, spec.max_size))
    margin = size / 2.0 + 1.0
    span = window.n_frames - 1
    lo_x, hi_x = margin, spec.width - 1 - margin
    lo_y, hi_y = margin, spec.height - 1 - margin
    if motion == "still":
        vx = vy = 0.0
    else:
        speed = float(rng.uniform(0.8, 1.8))
        travel = hi_x - lo_x if motion in ("left", "right") else hi_y - lo_y
        speed = min(speed, travel / max(span, 1))
        vx = {"left": -speed, "right": speed}.get(motion, 0.0)
        vy = {"up": -speed, "down": speed}.get(motion, 0.0)
    drift_x, drift_y = vx * span, vy * span
    x0 = float(rng.uniform(lo_x - min(drift_x, 0.0), hi_x - max(drift_x, 0.0)))
    y0 = float(rng.uniform(lo_y - min(drift_y, 0.0), hi_y - max(drift_y, 0.0)))
    centers = {
        t: (x0 + vx * (t - window.t_s), y0 + vy * (t - window.t_s)) for t in window.frames()
    }
    return _Actor(shape=shape, color=color, size=size, window=window, centers=centers)


def _random_window(rng: np.random.Generator, num_frames: int, min_len: int) -> TemporalInterval:
    length = int(rng.integers(min_len, num_frames + 1))
    start = int(rng.integers(0, num_frames - length + 1))
    return TemporalInterval(start, start + length - 1, strict=True)


def generate_synthetic(spec: SyntheticSpec) -> DatasetManifest:
    """Deterministic per seed; clips are kept in memory on the manifest."""
    rng = np.random.default_rng(spec.seed)
    entries = []
    all_pairs = [(c, s) for c in spec.colors for s in spec.shapes]
    for i in range(spec.n_videos):
        if spec.target_pairs is not None:
            color, shape = spec.target_pairs[i % len(spec.target_pairs)]
        else:
            color, shape = all_pairs[int(rng.integers(len(all_pairs)))]
        motion = spec.motions[int(rng.integers(len(spec.motions)))]
        min_len = max(2, spec.num_frames // 3)
        target_window = _random_window(rng, spec.num_frames, min_len)
        target = _plan_actor(rng, spec, shape, color, motion, target_window)
        distractors = []
        other_pairs = [p for p in all_pairs if p != (color, shape)]
        n_distract = int(rng.integers(0, spec.max_distractors + 1)) if other_pairs else 0
        for _ in range(n_distract):
            d_color, d_shape = other_pairs[int(rng.integers(len(other_pairs)))]
            d_motion = spec.motions[int(rng.integers(len(spec.motions)))]
            d_window = _random_window(rng, spec.num_frames, 2)
            distractors.append(_plan_actor(rng, spec, d_shape, d_color, d_motion, d_window))
        frames = np.zeros((spec.num_frames, spec.height, spec.width, 3), dtype=np.uint8)
        for t in range(spec.num_frames):
            for actor in [*distractors, target]:  # target drawn last, never occluded
                if actor.window.t_s <= t <= actor.window.t_e:
                    xc, yc = actor.centers[t]
                    mask = _shape_mask(actor.shape, xc, yc, actor.size, spec.height, spec.width)
                    frames[t][mask] = COLOR_RGB[actor.color]
        boxes = {
            t: BoundingBox(
                cx=target.centers[t][0] / spec.width,
                cy=target.centers[t][1] / spec.height,
                w=target.size / spec.width,
                h=target.size / spec.height,
            )
            for t in target_window.frames()
        }
        video_id = f"synthetic_{i:04d}"
        annotation = GroundingAnnotation(
            video_id=video_id,
            prompt=make_caption(color, shape, motion),
            interval=target_window,
            boxes=boxes,
            sentence_kind="declarative",
        )
        clip = VideoClip(frames=frames.astype(np.float32) / 255.0)
        entries.append(
            ManifestEntry(
                video_id=video_id,
                width=spec.width,
                height=spec.height,
                num_frames=spec.num_frames,
                annotation=annotation,
                clip=clip,
            )
        )
    return DatasetManifest(kind="synthetic", split="train", entries=tuple(entries))


def write_synthetic(manifest: DatasetManifest, out_dir: str | Path, vocab: list[str]) -> Path:
    """Store clips as per-video PNG directories plus a canonical manifest JSON
    and a vocabulary file. Returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stored_entries = []
    for entry in manifest.entries:
        if entry.clip is None:
            raise DataError(f"{entry.video_id}: manifest entry has no in-memory clip")
        frames_dir = out_dir / entry.video_id
        frames_dir.mkdir(exist_ok=True)
        pixels = (entry.clip.frames * 255.0 + 0.5).astype(np.uint8)
        for t in range(entry.clip.num_frames):
            Image.fromarray(pixels[t]).save(frames_dir / f"frame_{t:04d}.png")
        stored_entries.append(
            ManifestEntry(
                video_id=entry.video_id,
                width=entry.width,
                height=entry.height,
                num_frames=entry.num_frames,
                annotation=entry.annotation,
                frames_dir=frames_dir,
            )
        )
    stored = DatasetManifest(
        kind=manifest.kind, split=manifest.split, entries=tuple(stored_entries)
    )
    manifest_path = out_dir / "manifest.json"
    save_canonical(stored, manifest_path)
    (out_dir / "vocab.txt").write_text("\n".join(vocab) + "\n", encoding="utf-8")
    return manifest_path
