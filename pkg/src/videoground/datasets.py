"""Dataset manifests, annotation-format adapters, canonical annotation JSON,
and frame sampling.

Three upstream annotation layouts are supported (see docs/data_formats.md for
the field-by-field description; the bundled test fixtures pin the exact
shapes). Everything converges on GroundingAnnotation (normalized center
boxes, 0-based frames); serialization back to JSON is 1-based with top-left
pixel boxes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError, InvalidBoxError, InvalidIntervalError
from .types import (
    SENTENCE_KINDS,
    BoundingBox,
    GroundingAnnotation,
    TemporalInterval,
    TextPrompt,
    VideoClip,
    box_center_to_corner,
    box_corner_to_center,
)

CANONICAL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ManifestEntry:
    """One evaluable sample: a video reference plus its annotation."""

    video_id: str
    width: int
    height: int
    num_frames: int
    annotation: GroundingAnnotation
    frames_dir: Path | None = None
    clip: VideoClip | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.num_frames < 1:
            raise DataError(f"{self.video_id}: non-positive video dimensions")
        self.annotation.interval.check_within(self.num_frames)


@dataclass(frozen=True)
class DatasetManifest:
    kind: str
    split: str
    entries: tuple[ManifestEntry, ...]
    skipped: tuple[str, ...] = ()

    @property
    def skip_count(self) -> int:
        return len(self.skipped)

    def __len__(self) -> int:
        return len(self.entries)


def _pixel_boxes_to_annotation(
    video_id: str,
    caption: str,
    kind: str,
    interval: TemporalInterval,
    pixel_boxes: dict[int, tuple[float, float, float, float]],
    width: int,
    height: int,
) -> GroundingAnnotation:
    boxes = {}
    for t in interval.frames():
        if t not in pixel_boxes:
            raise InvalidBoxError(f"missing box for frame {t}")
        x, y, w, h = pixel_boxes[t]
        boxes[t] = box_corner_to_center(x, y, w, h, width, height)
    return GroundingAnnotation(
        video_id=video_id, prompt=caption, interval=interval, boxes=boxes, sentence_kind=kind
    )


def _require(record: dict, field_name: str, where: str):
    if field_name not in record:
        raise DataError(f"{where}: missing field {field_name!r}")
    return record[field_name]


def load_vidstg(root: str | Path, split: str, strict: bool = True) -> DatasetManifest:
    """Relation-grounding layout: one JSON list per split, each record holding
    a temporal_gt window, a per-frame target trajectory, and caption/question
    sentences tagged declarative/interrogative."""
    path = Path(root) / f"{split}_annotations.json"
    if not path.exists():
        raise DataError(f"annotation file not found: {path}")
    records = json.loads(path.read_text(encoding="utf-8"))
    entries: list[ManifestEntry] = []
    skipped: list[str] = []
    for i, record in enumerate(records):
        where = f"record {i}"
        vid = str(_require(record, "vid", where))
        where = f"record {i} ({vid})"
        width = int(_require(record, "width", where))
        height = int(_require(record, "height", where))
        num_frames = int(_require(record, "frame_count", where))
        temporal = _require(record, "temporal_gt", where)
        begin = int(_require(temporal, "begin_fid", where))
        end = int(_require(temporal, "end_fid", where))
        trajectory = _require(record, "trajectory", where)
        sentences = [
            (str(_require(s, "description", where)), "declarative")
            for s in record.get("captions", [])
        ] + [
            (str(_require(s, "description", where)), "interrogative")
            for s in record.get("questions", [])
        ]
        if not sentences:
            skipped.append(f"{where}: no sentences")
            continue
        try:
            interval = TemporalInterval(begin, end, strict=strict)
            interval.check_within(num_frames)
            pixel_boxes = {}
            for fid_str, box in trajectory.items():
                pixel_boxes[int(fid_str)] = (
                    float(box["xmin"]),
                    float(box["ymin"]),
                    float(box["xmax"]) - float(box["xmin"]),
                    float(box["ymax"]) - float(box["ymin"]),
                )
            for caption, kind in sentences:
                annotation = _pixel_boxes_to_annotation(
                    vid, caption, kind, interval, pixel_boxes, width, height
                )
                entries.append(
                    ManifestEntry(
                        video_id=vid,
                        width=width,
                        height=height,
                        num_frames=num_frames,
                        annotation=annotation,
                        frames_dir=_frames_dir(root, vid),
                    )
                )
        except (InvalidIntervalError, InvalidBoxError, DataError, KeyError) as exc:
            skipped.append(f"{where}: {exc}")
    return DatasetManifest(kind="vidstg", split=split, entries=tuple(entries), skipped=tuple(skipped))


def load_hcstvg(root: str | Path, version: int, split: str, strict: bool = True) -> DatasetManifest:
    """Person-grounding layout: one JSON object mapping video name to a
    caption, a 1-based [st_frame, ed_frame] window, and one box per window
    frame. V1 ships train/test splits; V2 reports on a validation split."""
    valid_splits = {1: ("train", "test"), 2: ("train", "val")}
    if version not in valid_splits:
        raise DataError(f"unknown version {version}; expected 1 or 2")
    if split not in valid_splits[version]:
        raise DataError(
            f"V{version} has splits {valid_splits[version]}, not {split!r}"
        )
    path = Path(root) / f"V{version}" / f"{split}.json"
    if not path.exists():
        raise DataError(f"annotation file not found: {path}")
    records = json.loads(path.read_text(encoding="utf-8"))
    entries: list[ManifestEntry] = []
    skipped: list[str] = []
    for vid, record in records.items():
        where = f"record {vid}"
        caption = str(_require(record, "English", where))
        st = int(_require(record, "st_frame", where))
        ed = int(_require(record, "ed_frame", where))
        img_size = _require(record, "img_size", where)
        height, width = int(img_size[0]), int(img_size[1])
        num_frames = int(_require(record, "frame_count", where))
        bboxes = _require(record, "bbox", where)
        try:
            interval = TemporalInterval.from_one_based(st, ed, strict=strict)
            interval.check_within(num_frames)
            if len(bboxes) != interval.n_frames:
                raise DataError(
                    f"{len(bboxes)} boxes for a {interval.n_frames}-frame window"
                )
            pixel_boxes = {
                interval.t_s + k: tuple(float(v) for v in box) for k, box in enumerate(bboxes)
            }
            annotation = _pixel_boxes_to_annotation(
                vid, caption, "unknown", interval, pixel_boxes, width, height
            )
            entries.append(
                ManifestEntry(
                    video_id=vid,
                    width=width,
                    height=height,
                    num_frames=num_frames,
                    annotation=annotation,
                    frames_dir=_frames_dir(root, vid),
                )
            )
        except (InvalidIntervalError, InvalidBoxError, DataError) as exc:
            skipped.append(f"{where}: {exc}")
    return DatasetManifest(
        kind=f"hcstvg-v{version}", split=split, entries=tuple(entries), skipped=tuple(skipped)
    )


def load_youcook_interactions(root: str | Path, strict: bool = True) -> DatasetManifest:
    """Pointing-game layout: a JSON list of single-frame box annotations."""
    path = Path(root) / "youcook_interactions.json"
    if not path.exists():
        raise DataError(f"annotation file not found: {path}")
    records = json.loads(path.read_text(encoding="utf-8"))
    entries: list[ManifestEntry] = []
    skipped: list[str] = []
    for i, record in enumerate(records):
        where = f"record {i}"
        vid = str(_require(record, "video_id", where))
        where = f"record {i} ({vid})"
        frame = int(_require(record, "frame", where))
        sentence = str(_require(record, "sentence", where))
        box = _require(record, "box", where)
        width = int(_require(record, "width", where))
        height = int(_require(record, "height", where))
        num_frames = int(_require(record, "frame_count", where))
        try:
            # single annotated frame: a non-strict one-frame interval
            interval = TemporalInterval.from_one_based(frame, frame, strict=False)
            interval.check_within(num_frames)
            pixel_boxes = {interval.t_s: tuple(float(v) for v in box)}
            annotation = _pixel_boxes_to_annotation(
                vid, sentence, "unknown", interval, pixel_boxes, width, height
            )
            entries.append(
                ManifestEntry(
                    video_id=vid,
                    width=width,
                    height=height,
                    num_frames=num_frames,
                    annotation=annotation,
                    frames_dir=_frames_dir(root, vid),
                )
            )
        except (InvalidIntervalError, InvalidBoxError, DataError) as exc:
            skipped.append(f"{where}: {exc}")
    return DatasetManifest(
        kind="youcook-interactions", split="test", entries=tuple(entries), skipped=tuple(skipped)
    )


def _frames_dir(root: str | Path, vid: str) -> Path | None:
    candidate = Path(root) / "frames" / vid
    return candidate if candidate.is_dir() else None


def entry_to_canonical(entry: ManifestEntry) -> dict:
    ann = entry.annotation
    t_s, t_e = ann.interval.to_one_based()
    boxes = []
    for t in ann.interval.frames():
        x, y, w, h = box_center_to_corner(ann.boxes[t], entry.width, entry.height)
        boxes.append(
            {"t": t + 1, "x": round(x, 4), "y": round(y, 4), "w": round(w, 4), "h": round(h, 4)}
        )
    record = {
        "video_id": entry.video_id,
        "caption": ann.prompt,
        "sentence_kind": ann.sentence_kind,
        "t_s": t_s,
        "t_e": t_e,
        "width": entry.width,
        "height": entry.height,
        "num_frames": entry.num_frames,
        "boxes": boxes,
    }
    if entry.frames_dir is not None:
        record["frames"] = entry.frames_dir.name
    return record


def save_canonical(manifest: DatasetManifest, path: str | Path):
    """Write the internal canonical annotation JSON (1-based frames, top-left
    pixel boxes)."""
    payload = {
        "schema_version": CANONICAL_SCHEMA_VERSION,
        "dataset": manifest.kind,
        "split": manifest.split,
        "samples": [entry_to_canonical(e) for e in manifest.entries],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_canonical(path: str | Path, strict: bool | None = None) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise DataError(f"canonical manifest not found: {path}")
    payload = json.loads(path.read_text(encoding="utf-8"))
    version = _require(payload, "schema_version", str(path))
    if version != CANONICAL_SCHEMA_VERSION:
        raise DataError(f"unsupported schema_version {version}")
    entries = []
    for i, record in enumerate(_require(payload, "samples", str(path))):
        where = f"sample {i}"
        vid = str(_require(record, "video_id", where))
        kind = str(_require(record, "sentence_kind", where))
        if kind not in SENTENCE_KINDS:
            raise DataError(f"{where}: unknown sentence_kind {kind!r}")
        t_s, t_e = int(_require(record, "t_s", where)), int(_require(record, "t_e", where))
        record_strict = t_s != t_e if strict is None else strict
        interval = TemporalInterval.from_one_based(t_s, t_e, strict=record_strict)
        width = int(_require(record, "width", where))
        height = int(_require(record, "height", where))
        pixel_boxes = {
            int(b["t"]) - 1: (float(b["x"]), float(b["y"]), float(b["w"]), float(b["h"]))
            for b in _require(record, "boxes", where)
        }
        annotation = _pixel_boxes_to_annotation(
            vid, str(_require(record, "caption", where)), kind, interval, pixel_boxes, width, height
        )
        frames_dir = path.parent / record["frames"] if "frames" in record else None
        entries.append(
            ManifestEntry(
                video_id=vid,
                width=width,
                height=height,
                num_frames=int(_require(record, "num_frames", where)),
                annotation=annotation,
                frames_dir=frames_dir,
            )
        )
    return DatasetManifest(
        kind=str(payload.get("dataset", "canonical")),
        split=str(payload.get("split", "unknown")),
        entries=tuple(entries),
    )


def load_frames_dir(frames_dir: str | Path) -> VideoClip:
    """Read a directory of image files (sorted by name) into a VideoClip."""
    frames_dir = Path(frames_dir)
    files = sorted(
        p for p in frames_dir.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")
    )
    if not files:
        raise DataError(f"no image files in {frames_dir}")
    frames = np.stack(
        [np.asarray(Image.open(f).convert("RGB"), dtype=np.float32) / 255.0 for f in files]
    )
    return VideoClip(frames=frames)


def load_clip(entry: ManifestEntry) -> VideoClip:
    if entry.clip is not None:
        return entry.clip
    if entry.frames_dir is not None:
        return load_frames_dir(entry.frames_dir)
    raise DataError(f"{entry.video_id}: no pixel source (neither in-memory clip nor frames dir)")


@dataclass(frozen=True)
class SampledClip:
    """Result of temporal subsampling + resizing."""

    clip: VideoClip
    annotation: GroundingAnnotation | None
    frame_indices: tuple[int, ...]  # sampled index -> original frame index
    original_height: int
    original_width: int


def _resize_frames(frames: np.ndarray, resolution: int) -> np.ndarray:
    t, h, w, _ = frames.shape
    if min(h, w) == resolution:
        return frames
    scale = resolution / min(h, w)
    new_h, new_w = max(8, round(h * scale)), max(8, round(w * scale))
    out = np.empty((t, new_h, new_w, 3), dtype=np.float32)
    for i in range(t):
        img = Image.fromarray((frames[i] * 255.0 + 0.5).astype(np.uint8))
        out[i] = np.asarray(img.resize((new_w, new_h), Image.BILINEAR), dtype=np.float32) / 255.0
    return out


def sample_frames(
    clip: VideoClip,
    max_frames: int,
    annotation: GroundingAnnotation | None = None,
    resolution: int | None = None,
) -> SampledClip:
    """Uniform stride subsampling to at most max_frames, remapping the
    annotation to the sampled index space, plus optional shorter-side resize.

    Each sampled frame takes the box of its nearest annotated original frame;
    interval endpoints clamp inward. An annotation whose interval vanishes
    under the stride is rejected with a DataError.
    """
    if max_frames < 1:
        raise DataError(f"max_frames must be positive, got {max_frames}")
    t = clip.num_frames
    stride = math.ceil(t / max_frames)
    selected = tuple(range(0, t, stride))
    remapped = annotation
    if annotation is not None and stride > 1:
        interval = annotation.interval
        new_s = math.ceil(interval.t_s / stride)
        new_e = interval.t_e // stride
        if new_e < new_s or (interval.strict and new_e == new_s):
            raise DataError(
                f"{annotation.video_id}: interval {interval.t_s}-{interval.t_e} empty "
                f"after sampling with stride {stride}"
            )
        boxes = {}
        for p in range(new_s, new_e + 1):
            # nearest annotated original frame = clamp into the GT window
            src = min(max(selected[p], interval.t_s), interval.t_e)
            boxes[p] = annotation.boxes[src]
        remapped = replace(
            annotation,
            interval=TemporalInterval(new_s, new_e, strict=interval.strict),
            boxes=boxes,
        )
    frames = clip.frames[list(selected)] if stride > 1 else np.array(clip.frames)
    if resolution is not None:
        frames = _resize_frames(frames, resolution)
    return SampledClip(
        clip=VideoClip(frames=frames, frame_rate=clip.frame_rate / stride),
        annotation=remapped,
        frame_indices=selected,
        original_height=clip.height,
        original_width=clip.width,
    )
