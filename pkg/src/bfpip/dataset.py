"""Dataset ingest: the canonical JSON manifest and the JAAD XML adapter.

Frame indices are 0-based everywhere. The manifest is the only dataset
format the rest of the harness reads; :func:`adapt_jaad` converts the
JAAD per-video XML tree into it.
"""

from __future__ import annotations

import json
import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import (
    DuplicateInstanceId,
    MissingAnnotationField,
    MissingFile,
    NoEvaluableInstances,
    SchemaViolation,
    UnknownSplitVideo,
)

logger = logging.getLogger(__name__)

FPS = 30
TTE_FRAMES = 30
WINDOW_LENGTH = 16
MIN_EVENT_FRAME = TTE_FRAMES + WINDOW_LENGTH - 1  # 45

SPLITS = ("train", "val", "test")


class Label(str, Enum):
    CROSS = "cross"
    NOT_CROSS = "not_cross"

    def __str__(self) -> str:
        return self.value


class EgoSpeed(str, Enum):
    STOPPED = "stopped"
    DECELERATING = "decelerating"
    CONSTANT = "constant"
    ACCELERATING = "accelerating"
    MOVING_SLOW = "moving-slow"
    MOVING_FAST = "moving-fast"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def from_tag(cls, tag: str) -> "EgoSpeed":
        """Accept the canonical tags plus JAAD's underscore spelling."""
        norm = tag.strip().lower().replace("_", "-")
        aliases = {"maintaining": "constant", "constant-speed": "constant"}
        return cls(aliases.get(norm, norm))


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    @property
    def centroid(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def to_dict(self) -> dict[str, float]:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}


@dataclass(frozen=True)
class FrameAnnotation:
    frame_index: int
    bbox: BoundingBox | None = None
    ego_speed: EgoSpeed | None = None


@dataclass(frozen=True)
class PedestrianInstance:
    instance_id: str
    video_id: str
    frames: tuple[FrameAnnotation, ...]
    event_frame: int
    ground_truth: Label | None
    split: str
    frame_dims: tuple[int, int] | None = None

    def frame(self, index: int) -> FrameAnnotation | None:
        # frames are sorted and usually contiguous, so try direct offset first
        if self.frames:
            off = index - self.frames[0].frame_index
            if 0 <= off < len(self.frames) and self.frames[off].frame_index == index:
                return self.frames[off]
        for fa in self.frames:
            if fa.frame_index == index:
                return fa
        return None

    @property
    def evaluable(self) -> bool:
        return self.event_frame >= MIN_EVENT_FRAME


@dataclass(frozen=True)
class DatasetManifest:
    instances: tuple[PedestrianInstance, ...]
    fps: int = FPS
    source: str = ""

    def __len__(self) -> int:
        return len(self.instances)

    def by_id(self) -> dict[str, PedestrianInstance]:
        return {inst.instance_id: inst for inst in self.instances}


# -- canonical manifest ------------------------------------------------------


def _num(v: float) -> float | int:
    if isinstance(v, float) and v.is_integer():
        return int(v)
    return v


def manifest_to_dict(manifest: DatasetManifest) -> dict[str, Any]:
    instances = []
    for inst in manifest.instances:
        instances.append(
            {
                "instance_id": inst.instance_id,
                "video_id": inst.video_id,
                "split": inst.split,
                "event_frame": inst.event_frame,
                "ground_truth": None if inst.ground_truth is None else inst.ground_truth.value,
                "frame_dims": None if inst.frame_dims is None else list(inst.frame_dims),
                "frames": [
                    {
                        "frame_index": fa.frame_index,
                        "bbox": None
                        if fa.bbox is None
                        else {k: _num(v) for k, v in fa.bbox.to_dict().items()},
                        "ego_speed": None if fa.ego_speed is None else fa.ego_speed.value,
                    }
                    for fa in inst.frames
                ],
            }
        )
    return {"fps": manifest.fps, "source": manifest.source, "instances": instances}


def emit_manifest(manifest: DatasetManifest) -> str:
    return json.dumps(manifest_to_dict(manifest), indent=1, ensure_ascii=True) + "\n"


def write_manifest(manifest: DatasetManifest, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(emit_manifest(manifest), encoding="utf-8")
    tmp.replace(path)
    return path


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


class _Collector:
    def __init__(self) -> None:
        self.violations: list[tuple[str, str, str]] = []

    def add(self, field_name: str, reason: str, where: str = "") -> None:
        self.violations.append((field_name, reason, where))


def _parse_bbox(raw: Any, dims: tuple[int, int] | None, errs: _Collector, where: str) -> BoundingBox | None:
    if raw is None:
        return None
    if not isinstance(raw, Mapping):
        errs.add("bbox", "must be an object or null", where)
        return None
    ok = True
    for key in ("x", "y", "w", "h"):
        if key not in raw:
            errs.add(f"bbox.{key}", "is required", where)
            ok = False
        elif not _is_number(raw[key]):
            errs.add(f"bbox.{key}", "must be a finite number", where)
            ok = False
    extra = sorted(set(raw) - {"x", "y", "w", "h"})
    for key in extra:
        errs.add(f"bbox.{key}", "unknown field", where)
    if not ok:
        return None
    box = BoundingBox(raw["x"], raw["y"], raw["w"], raw["h"])
    if box.w <= 0:
        errs.add("bbox.w", "must be positive", where)
    if box.h <= 0:
        errs.add("bbox.h", "must be positive", where)
    if box.x < 0:
        errs.add("bbox.x", "must be non-negative", where)
    if box.y < 0:
        errs.add("bbox.y", "must be non-negative", where)
    if dims is not None:
        if box.x + box.w > dims[0]:
            errs.add("bbox.x", "x+w exceeds frame width", where)
        if box.y + box.h > dims[1]:
            errs.add("bbox.y", "y+h exceeds frame height", where)
    return box


_INSTANCE_KEYS = {"instance_id", "video_id", "split", "event_frame", "ground_truth", "frame_dims", "frames"}


def _parse_instance(raw: Any, pos: int, errs: _Collector) -> PedestrianInstance | None:
    where = f"instances[{pos}]"
    if not isinstance(raw, Mapping):
        errs.add("instance", "must be an object", where)
        return None
    start = len(errs.violations)
    for key in sorted(_INSTANCE_KEYS - {"ground_truth", "frame_dims"} - set(raw)):
        errs.add(key, "is required", where)
    for key in sorted(set(raw) - _INSTANCE_KEYS):
        errs.add(key, "unknown field", where)

    iid = raw.get("instance_id")
    if "instance_id" in raw and (not isinstance(iid, str) or not iid):
        errs.add("instance_id", "must be a non-empty string", where)
    elif isinstance(iid, str):
        where = f"instance {iid!r}"
    vid = raw.get("video_id")
    if "video_id" in raw and (not isinstance(vid, str) or not vid):
        errs.add("video_id", "must be a non-empty string", where)
    split = raw.get("split")
    if "split" in raw and split not in SPLITS:
        errs.add("split", f"must be one of {', '.join(SPLITS)}", where)
    event = raw.get("event_frame")
    if "event_frame" in raw:
        if not _is_int(event) or event < 0:
            errs.add("event_frame", "must be a non-negative integer", where)
        elif event < MIN_EVENT_FRAME:
            errs.add("event_frame", f"must be >= {MIN_EVENT_FRAME} so a full window exists", where)
    gt_raw = raw.get("ground_truth")
    gt: Label | None = None
    if gt_raw is not None:
        try:
            gt = Label(gt_raw)
        except ValueError:
            errs.add("ground_truth", "must be 'cross', 'not_cross' or null", where)
    elif split == "test":
        errs.add("ground_truth", "is required for test instances", where)

    dims: tuple[int, int] | None = None
    dims_raw = raw.get("frame_dims")
    if dims_raw is not None:
        if (
            isinstance(dims_raw, list)
            and len(dims_raw) == 2
            and all(_is_int(d) and d > 0 for d in dims_raw)
        ):
            dims = (dims_raw[0], dims_raw[1])
        else:
            errs.add("frame_dims", "must be [width, height] positive integers or null", where)

    frames: list[FrameAnnotation] = []
    frames_raw = raw.get("frames", [])
    if not isinstance(frames_raw, list):
        errs.add("frames", "must be an array", where)
        frames_raw = []
    prev = -1
    for j, fr in enumerate(frames_raw):
        fwhere = f"{where} frames[{j}]"
        if not isinstance(fr, Mapping):
            errs.add("frames", "entries must be objects", fwhere)
            continue
        for key in sorted(set(fr) - {"frame_index", "bbox", "ego_speed"}):
            errs.add(f"frames.{key}", "unknown field", fwhere)
        idx = fr.get("frame_index")
        if not _is_int(idx) or idx < 0:
            errs.add("frame_index", "must be a non-negative integer", fwhere)
            continue
        if idx <= prev:
            errs.add("frame_index", "frames must be unique and sorted ascending", fwhere)
        prev = max(prev, idx)
        box = _parse_bbox(fr.get("bbox"), dims, errs, fwhere)
        speed: EgoSpeed | None = None
        if fr.get("ego_speed") is not None:
            try:
                speed = EgoSpeed(fr["ego_speed"])
            except (ValueError, TypeError):
                errs.add("ego_speed", f"must be one of {', '.join(e.value for e in EgoSpeed)}", fwhere)
        frames.append(FrameAnnotation(idx, box, speed))

    if len(errs.violations) > start:
        return None
    return PedestrianInstance(
        instance_id=iid,
        video_id=vid,
        frames=tuple(frames),
        event_frame=event,
        ground_truth=gt,
        split=split,
        frame_dims=dims,
    )


def manifest_from_dict(doc: Any) -> DatasetManifest:
    errs = _Collector()
    if not isinstance(doc, Mapping):
        raise SchemaViolation([("manifest", "top level must be an object", "")])
    for key in sorted(set(doc) - {"fps", "source", "instances"}):
        errs.add(key, "unknown field")
    fps = doc.get("fps", FPS)
    if not _is_number(fps) or fps != FPS:
        errs.add("fps", f"must be {FPS}")
    source = doc.get("source", "")
    if not isinstance(source, str):
        errs.add("source", "must be a string")
    raw_instances = doc.get("instances")
    if not isinstance(raw_instances, list):
        errs.add("instances", "must be an array")
        raw_instances = []
    instances: list[PedestrianInstance] = []
    seen: set[str] = set()
    duplicate: str | None = None
    for pos, raw in enumerate(raw_instances):
        inst = _parse_instance(raw, pos, errs)
        if inst is None:
            continue
        if inst.instance_id in seen and duplicate is None:
            duplicate = inst.instance_id
        seen.add(inst.instance_id)
        instances.append(inst)
    if duplicate is not None:
        raise DuplicateInstanceId(duplicate)
    if errs.violations:
        raise SchemaViolation(errs.violations)
    return DatasetManifest(instances=tuple(instances), fps=int(fps), source=source)


def parse_manifest(path: str | Path) -> DatasetManifest:
    """Load and validate a canonical manifest.

    Every violated invariant is collected before raising, so one
    :class:`SchemaViolation` lists all problems in the file.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaViolation([("manifest", f"invalid JSON: {exc}", str(path))]) from None
    return manifest_from_dict(doc)


def filter_split(manifest: DatasetManifest, split: str) -> list[PedestrianInstance]:
    return sorted(
        (inst for inst in manifest.instances if inst.split == split),
        key=lambda inst: inst.instance_id,
    )


# -- JAAD adapter -------------------------------------------------------------


def load_split_spec(path: str | Path) -> dict[str, str]:
    """Map video id -> split.

    Accepts a JSON object ``{"train": [...], "val": [...], "test": [...]}`` or a
    directory holding ``train.txt``/``val.txt``/``test.txt`` with one id per line.
    """
    path = Path(path)
    listing: dict[str, list[str]] = {}
    if path.is_dir():
        for split in SPLITS:
            f = path / f"{split}.txt"
            if f.is_file():
                listing[split] = [ln.strip() for ln in f.read_text().splitlines() if ln.strip()]
    elif path.is_file():
        doc = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(doc, Mapping):
            raise SchemaViolation([("splits", "must be an object of split -> video ids", str(path))])
        for key, ids in doc.items():
            if key not in SPLITS:
                raise SchemaViolation([(key, "unknown split", str(path))])
            listing[key] = [str(v) for v in ids]
    else:
        raise MissingFile(path)
    assignment: dict[str, str] = {}
    for split in SPLITS:
        for vid in listing.get(split, []):
            if vid in assignment and assignment[vid] != split:
                raise SchemaViolation([("splits", f"video {vid} listed in two splits", str(path))])
            assignment[vid] = split
    return assignment


def _find_one(directory: Path, names: Iterable[str]) -> Path | None:
    for name in names:
        p = directory / name
        if p.is_file():
            return p
    return None


def _required_text(tree: ET.ElementTree, xpath: str, name: str, where: str) -> str:
    node = tree.find(xpath)
    if node is None or node.text is None:
        raise MissingAnnotationField(name, where)
    return node.text


def _box_attr(box: ET.Element, name: str) -> str | None:
    node = box.find(f"./attribute[@name='{name}']")
    return None if node is None else node.text


def _read_vehicle(path: Path | None, where: str) -> dict[int, EgoSpeed]:
    if path is None:
        raise MissingAnnotationField("ego_speed", where)
    tree = ET.parse(path)
    speeds: dict[int, EgoSpeed] = {}
    for node in tree.findall("./frame"):
        fid, action = node.get("id"), node.get("action")
        if fid is None or action is None:
            raise MissingAnnotationField("ego_speed", str(path))
        speeds[int(fid)] = EgoSpeed.from_tag(action)
    if not speeds:
        raise MissingAnnotationField("ego_speed", str(path))
    return speeds


def _read_crossing_points(path: Path | None) -> dict[str, int]:
    if path is None:
        return {}
    tree = ET.parse(path)
    points: dict[str, int] = {}
    for node in tree.findall("./pedestrian"):
        pid, cp = node.get("id"), node.get("crossing_point")
        if pid is not None and cp is not None:
            points[pid] = int(cp)
    return points


def _clip_box(xtl: float, ytl: float, xbr: float, ybr: float, dims: tuple[int, int]) -> BoundingBox | None:
    x0, y0 = max(0.0, xtl), max(0.0, ytl)
    x1, y1 = min(float(dims[0]), xbr), min(float(dims[1]), ybr)
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        return None
    return BoundingBox(_num(round(x0, 2)), _num(round(y0, 2)), _num(round(x1 - x0, 2)), _num(round(y1 - y0, 2)))


def _video_instances(root: Path, vid: str, split: str) -> list[PedestrianInstance]:
    ann_path = root / "annotations" / f"{vid}.xml"
    where = str(ann_path)
    tree = ET.parse(ann_path)
    num_frames = int(_required_text(tree, "./meta/task/size", "size", where))
    dims = (
        int(_required_text(tree, "./meta/task/original_size/width", "original_size.width", where)),
        int(_required_text(tree, "./meta/task/original_size/height", "original_size.height", where)),
    )
    speeds = _read_vehicle(
        _find_one(root / "annotations_vehicle", [f"{vid}_vehicle.xml", f"{vid}.xml"]), where
    )
    crossing_points = _read_crossing_points(
        _find_one(root / "annotations_attributes", [f"{vid}_attributes.xml", f"{vid}.xml"])
    )

    out: list[PedestrianInstance] = []
    for track in tree.findall("./track"):
        boxes = track.findall("./box")
        if not boxes:
            continue
        ped_id = _box_attr(boxes[0], "id")
        if ped_id is None:
            raise MissingAnnotationField("id", where)
        # the behavioral subset: label "pedestrian" (JAAD ids carry a 'b' suffix)
        if track.get("label") != "pedestrian" and not ped_id.endswith("b"):
            continue
        track_boxes: dict[int, BoundingBox | None] = {}
        crossing_frames: list[int] = []
        for b in boxes:
            try:
                f = int(b.get("frame"))
                coords = [float(b.get(k)) for k in ("xtl", "ytl", "xbr", "ybr")]
            except TypeError:
                raise MissingAnnotationField("box", f"{where} track {ped_id}") from None
            cross = _box_attr(b, "cross")
            if cross is None:
                raise MissingAnnotationField("cross", f"{where} track {ped_id}")
            if cross == "crossing":
                crossing_frames.append(f)
            track_boxes[f] = _clip_box(*coords, dims)
        first, last = min(track_boxes), max(track_boxes)
        if ped_id in crossing_points:
            event = crossing_points[ped_id]
        elif crossing_frames:
            event = min(crossing_frames)
        else:
            event = last
        instance_id = f"{vid}/{ped_id}"
        if event < MIN_EVENT_FRAME:
            logger.info("excluding %s: insufficient-history (event_frame=%d)", instance_id, event)
            continue
        label = Label.CROSS if any(f >= event for f in crossing_frames) else Label.NOT_CROSS
        lo = min(first, event - MIN_EVENT_FRAME)
        hi = min(event, num_frames - 1)
        frames = tuple(
            FrameAnnotation(f, track_boxes.get(f), speeds.get(f)) for f in range(lo, hi + 1)
        )
        out.append(
            PedestrianInstance(
                instance_id=instance_id,
                video_id=vid,
                frames=frames,
                event_frame=event,
                ground_truth=label,
                split=split,
                frame_dims=dims,
            )
        )
    return out


def adapt_jaad(annotation_dir: str | Path, split_spec: str | Path | Mapping[str, str]) -> DatasetManifest:
    """Convert a JAAD-style annotation tree to a validated manifest.

    Expects ``annotations/<vid>.xml`` and ``annotations_vehicle/<vid>_vehicle.xml``;
    ``annotations_attributes/<vid>_attributes.xml`` is optional and supplies
    ``crossing_point`` as the event frame when present.
    """
    root = Path(annotation_dir)
    if not (root / "annotations").is_dir():
        raise MissingFile(root / "annotations")
    assignment = dict(split_spec) if isinstance(split_spec, Mapping) else load_split_spec(split_spec)
    available = {p.stem for p in (root / "annotations").glob("*.xml")}
    for vid in sorted(assignment):
        if vid not in available:
            raise UnknownSplitVideo(vid)
    for vid in sorted(available - set(assignment)):
        logger.info("skipping %s: not assigned to any split", vid)

    instances: list[PedestrianInstance] = []
    for vid in sorted(assignment):
        instances.extend(_video_instances(root, vid, assignment[vid]))
    if not instances:
        raise NoEvaluableInstances(f"no evaluable pedestrian instances under {root}")
    manifest = DatasetManifest(tuple(instances), FPS, f"jaad:{root.name}")
    # round-trip through the validator so the adapter never emits a bad manifest
    return manifest_from_dict(json.loads(emit_manifest(manifest)))
