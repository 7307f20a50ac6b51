"""Synthetic data builders shared by the test modules."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from bfpip.backends.scripted import write_script
from bfpip.dataset import (
    BoundingBox,
    DatasetManifest,
    EgoSpeed,
    FrameAnnotation,
    Label,
    PedestrianInstance,
    write_manifest,
)

FRAME_W, FRAME_H = 160, 96


def make_frames(root: Path, video_id: str, indices: Iterable[int] = range(16), seed: int = 0) -> Path:
    frames_dir = Path(root) / video_id / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    base = rng.integers(0, 200, size=(FRAME_H, FRAME_W, 3), dtype=np.uint8)
    for i in indices:
        img = base.copy()
        img[:, :, 1] = np.uint8(i * 7 % 256)
        Image.fromarray(img, "RGB").save(frames_dir / f"{i:05d}.png")
    return frames_dir


def make_instance(
    instance_id: str,
    video_id: str = "vid_a",
    event_frame: int = 45,
    ground_truth: Label | str | None = Label.CROSS,
    split: str = "test",
    x_start: float = 10.0,
    x_end: float | None = None,
    speed: EgoSpeed | None = EgoSpeed.DECELERATING,
    dims: tuple[int, int] | None = (FRAME_W, FRAME_H),
    box_w: float = 12,
    box_h: float = 30,
) -> PedestrianInstance:
    """Frames cover exactly the observation window; x moves linearly."""
    end = event_frame - 30
    start = end - 15
    x_end = x_start if x_end is None else x_end
    frames = []
    for k, idx in enumerate(range(start, end + 1)):
        x = x_start + (x_end - x_start) * k / 15
        frames.append(FrameAnnotation(idx, BoundingBox(round(x, 2), 40, box_w, box_h), speed))
    gt = None if ground_truth is None else Label(ground_truth)
    return PedestrianInstance(instance_id, video_id, tuple(frames), event_frame, gt, split, dims)


def save_manifest(path: Path, instances: Sequence[PedestrianInstance], source: str = "synthetic") -> Path:
    return write_manifest(DatasetManifest(tuple(instances), 30, source), path)


def write_config(path: Path, **sections) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(sections, indent=1), encoding="utf-8")
    return path


def scripted_config(tmp: Path, manifest: Path, frames_root: Path, script: Path, **extra) -> Path:
    doc = {
        "dataset": {"manifest": str(manifest)},
        "media": {"frames_root": str(frames_root), "clips_dir": str(tmp / "clips"), "container": "zip"},
        "backend": {"kind": "scripted", "model_id": "scripted-replay", "script": str(script)},
        "cache_dir": str(tmp / "cache"),
        "runs_dir": str(tmp / "runs"),
        "max_concurrency": 4,
    }
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(doc.get(key), dict):
            doc[key] = {**doc[key], **value}
        else:
            doc[key] = value
    return write_config(tmp / "config.json", **doc)


def label_json(label: str) -> str:
    return json.dumps({"intention": label})


def echo_script(path: Path, instances: Sequence[PedestrianInstance], configs: Sequence[str], repeats: int = 5) -> Path:
    rows = [
        (inst.instance_id, cfg, r, label_json(inst.ground_truth.value))
        for inst in instances
        for cfg in configs
        for r in range(repeats)
    ]
    return write_script(path, rows)


def constant_script(path: Path, instances, configs, label: str = "cross", repeats: int = 5) -> Path:
    rows = [(i.instance_id, c, r, label_json(label)) for i in instances for c in configs for r in range(repeats)]
    return write_script(path, rows)


def _box_xml(frame, x, cross, pid):
    return (
        f'<box frame="{frame}" keyframe="1" occluded="0" outside="0" '
        f'xtl="{x}" ytl="300.5" xbr="{x + 50}" ybr="450.25">'
        f'<attribute name="id">{pid}</attribute>'
        f'<attribute name="old_id">pedestrian{pid}</attribute>'
        f'<attribute name="cross">{cross}</attribute>'
        f'<attribute name="occlusion">none</attribute></box>'
    )


def write_jaad_video(root: Path, vid: str, peds, n_frames=200, vehicle=True, crossing_points=None):
    """peds: (ped_id, first, last, crossing_from or None, label)."""
    (root / "annotations").mkdir(parents=True, exist_ok=True)
    tracks = []
    for pid, first, last, crossing_from, label in peds:
        boxes = "".join(
            _box_xml(f, 100 + f, "crossing" if crossing_from is not None and f >= crossing_from else "not-crossing", pid)
            for f in range(first, last + 1)
        )
        tracks.append(f'<track label="{label}">{boxes}</track>')
    (root / "annotations" / f"{vid}.xml").write_text(
        "<annotations><meta><task>"
        f"<size>{n_frames}</size><original_size><width>1920</width><height>1080</height></original_size>"
        "</task></meta>" + "".join(tracks) + "</annotations>"
    )
    if vehicle:
        (root / "annotations_vehicle").mkdir(exist_ok=True)
        actions = ["moving_slow", "decelerating", "stopped", "accelerating", "moving_fast"]
        frames = "".join(f'<frame id="{f}" action="{actions[f % 5]}"/>' for f in range(n_frames))
        (root / "annotations_vehicle" / f"{vid}_vehicle.xml").write_text(f"<vehicle>{frames}</vehicle>")
    if crossing_points:
        (root / "annotations_attributes").mkdir(exist_ok=True)
        peds_xml = "".join(f'<pedestrian id="{p}" old_id="x" crossing_point="{cp}"/>' for p, cp in crossing_points.items())
        (root / "annotations_attributes" / f"{vid}_attributes.xml").write_text(f"<ped_attributes>{peds_xml}</ped_attributes>")
