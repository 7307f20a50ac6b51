"""Observation windows and clip materialisation.

Rasters are held as ``uint8`` arrays of shape ``(height, width, 3)``.
Container video is never decoded in-process: decoding and encoding go
through an external media tool driven by command templates (see
:class:`MediaTool`). Frame directories follow ``<video_id>/frames/%05d.png``.
"""

from __future__ import annotations

import hashlib
import io
import os
import shlex
import subprocess
import tempfile
import threading
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from PIL import Image

from .dataset import FPS, TTE_FRAMES, WINDOW_LENGTH, BoundingBox, PedestrianInstance
from .errors import (
    BoxOutOfBounds,
    DecoderFailure,
    EncoderFailure,
    InsufficientHistory,
    MissingFile,
    MissingFrame,
)

FRAME_NAME = "{:05d}.png"

DEFAULT_DECODE_TEMPLATE = (
    "ffmpeg -nostdin -v error -i {input} -vf 'select=gte(n\\,{start_frame})' "
    "-fps_mode passthrough -frames:v {count} -start_number {start_frame} {output}/%05d.png"
)
DEFAULT_ENCODE_TEMPLATE = (
    "ffmpeg -nostdin -v error -y -framerate {fps} -start_number {start_frame} "
    "-i {input}/%05d.png -frames:v {count} -vf pad=ceil(iw/2)*2:ceil(ih/2)*2 "
    "-c:v libx264 -preset medium -crf 18 -pix_fmt yuv420p -threads 1 "
    "-map_metadata -1 -fflags +bitexact -flags:v +bitexact -f mp4 {output}"
)


@dataclass(frozen=True)
class ObservationWindow:
    start_frame: int
    end_frame: int
    tte_frames: int = TTE_FRAMES
    length: int = WINDOW_LENGTH

    @property
    def indices(self) -> range:
        return range(self.start_frame, self.end_frame + 1)

    @property
    def event_frame(self) -> int:
        return self.end_frame + self.tte_frames


def compute_window(event_frame: int, tte: int = TTE_FRAMES, length: int = WINDOW_LENGTH) -> ObservationWindow:
    if event_frame < tte + length - 1:
        raise InsufficientHistory(event_frame)
    end = event_frame - tte
    return ObservationWindow(end - length + 1, end, tte, length)


@dataclass(frozen=True, eq=False)
class FrameSet:
    frames: tuple[tuple[int, np.ndarray], ...]
    mode: str = "raw"  # raw | annotated

    @property
    def indices(self) -> list[int]:
        return [i for i, _ in self.frames]


@dataclass(frozen=True)
class OverlayStyle:
    color: tuple[int, int, int] = (255, 0, 0)
    width: int = 3


@dataclass(frozen=True)
class ClipBundle:
    media_ref: str
    mode: str  # annotated | unannotated
    content_digest: str
    mime_type: str
    fps: int = FPS

    def read_bytes(self) -> bytes:
        return Path(self.media_ref).read_bytes()


@dataclass(frozen=True)
class MediaTool:
    """External media tool contract.

    Templates are split shell-style and each token is formatted with the
    placeholders ``{input}``, ``{start_frame}``, ``{count}``, ``{fps}`` and
    ``{output}``. Exit code 0 is success; anything else is a failure carrying
    the captured output.
    """

    decode_template: str | None = DEFAULT_DECODE_TEMPLATE
    encode_template: str | None = DEFAULT_ENCODE_TEMPLATE
    timeout: float = 120.0

    def _run(self, template: str, failure: type, **values: object) -> None:
        argv = [tok.format(**values) for tok in shlex.split(template)]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=self.timeout)
        except FileNotFoundError:
            raise failure(f"tool not found: {argv[0]}") from None
        except subprocess.TimeoutExpired:
            raise failure(f"{argv[0]} timed out after {self.timeout}s") from None
        if proc.returncode != 0:
            diag = (proc.stderr or "") + (proc.stdout or "")
            raise failure(f"{argv[0]} exited {proc.returncode}: {diag.strip()}")

    def decode(self, video: Path, start_frame: int, count: int, out_dir: Path) -> None:
        if not self.decode_template:
            raise DecoderFailure("no decode template configured")
        self._run(
            self.decode_template, DecoderFailure,
            input=video, start_frame=start_frame, count=count, fps=FPS, output=out_dir,
        )

    def encode(self, frame_dir: Path, start_frame: int, count: int, fps: int, out_file: Path) -> None:
        if not self.encode_template:
            raise EncoderFailure("no encode template configured")
        self._run(
            self.encode_template, EncoderFailure,
            input=frame_dir, start_frame=start_frame, count=count, fps=fps, output=out_file,
        )


def _read_raster(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.array(img.convert("RGB"), dtype=np.uint8)


def _read_frame_dir(directory: Path, window: ObservationWindow) -> FrameSet:
    frames = []
    for idx in window.indices:
        p = directory / FRAME_NAME.format(idx)
        if not p.is_file():
            raise MissingFrame(idx)
        frames.append((idx, _read_raster(p)))
    return FrameSet(tuple(frames), "raw")


def extract_frames(video_source: str | Path, window: ObservationWindow, tool: MediaTool | None = None) -> FrameSet:
    """Return the window's 16 rasters in order.

    ``video_source`` is either a frame directory (``<video_id>`` or
    ``<video_id>/frames``) or a container file handed to the media tool.
    """
    src = Path(video_source)
    if src.is_dir():
        frames_dir = src / "frames" if (src / "frames").is_dir() else src
        return _read_frame_dir(frames_dir, window)
    if not src.is_file():
        raise MissingFile(src)
    tool = tool or MediaTool()
    with tempfile.TemporaryDirectory(prefix="bfpip-decode-") as tmp:
        tool.decode(src, window.start_frame, window.length, Path(tmp))
        return _read_frame_dir(Path(tmp), window)


def render_overlay(
    frame_set: FrameSet,
    boxes: Mapping[int, BoundingBox | None],
    style: OverlayStyle = OverlayStyle(),
) -> FrameSet:
    """Outline each box on its frame; the stroke lies inside the box edges."""
    if frame_set.mode != "raw":
        raise ValueError("render_overlay expects a raw FrameSet")
    out = []
    color = np.asarray(style.color, dtype=np.uint8)
    s = style.width
    for idx, raster in frame_set.frames:
        box = boxes.get(idx)
        if box is None:
            out.append((idx, raster))
            continue
        height, width = raster.shape[:2]
        if box.x < 0 or box.y < 0 or box.x + box.w > width or box.y + box.h > height:
            raise BoxOutOfBounds(idx)
        x0, y0 = int(round(box.x)), int(round(box.y))
        x1, y1 = int(round(box.x + box.w)), int(round(box.y + box.h))
        drawn = raster.copy()
        drawn[y0 : min(y0 + s, y1), x0:x1] = color
        drawn[max(y1 - s, y0) : y1, x0:x1] = color
        drawn[y0:y1, x0 : min(x0 + s, x1)] = color
        drawn[y0:y1, max(x1 - s, x0) : x1] = color
        out.append((idx, drawn))
    return FrameSet(tuple(out), "annotated")


def encode_png(raster: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(raster, "RGB").save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def _write_zip(frame_set: FrameSet, target: Path) -> None:
    with zipfile.ZipFile(target, "w", compression=zipfile.ZIP_STORED) as zf:
        for idx, raster in frame_set.frames:
            info = zipfile.ZipInfo(FRAME_NAME.format(idx), date_time=(1980, 1, 1, 0, 0, 0))
            info.external_attr = 0o644 << 16
            zf.writestr(info, encode_png(raster))


def package_clip(
    frame_set: FrameSet,
    out_path: str | Path,
    fps: int = FPS,
    tool: MediaTool | None = None,
    container: str = "mp4",
) -> ClipBundle:
    """Encode a frame set into one media file and publish it atomically.

    ``container="zip"`` selects the frame-sequence fallback, which needs no
    external tool and is byte-deterministic by construction.
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    mode = "annotated" if frame_set.mode == "annotated" else "unannotated"
    with tempfile.TemporaryDirectory(prefix=".bfpip-pack-", dir=out_path.parent) as tmp:
        tmp_dir = Path(tmp)
        staged = tmp_dir / out_path.name
        if container == "zip":
            _write_zip(frame_set, staged)
            mime = "application/zip"
        elif container == "mp4":
            frame_dir = tmp_dir / "frames"
            frame_dir.mkdir()
            for idx, raster in frame_set.frames:
                (frame_dir / FRAME_NAME.format(idx)).write_bytes(encode_png(raster))
            (tool or MediaTool()).encode(frame_dir, frame_set.frames[0][0], len(frame_set.frames), fps, staged)
            if not staged.is_file():
                raise EncoderFailure(f"encoder produced no output at {staged}")
            mime = "video/mp4"
        else:
            raise ValueError(f"unknown container {container!r}")
        digest = hashlib.sha256(staged.read_bytes()).hexdigest()
        os.replace(staged, out_path)
    return ClipBundle(str(out_path), mode, digest, mime, fps)


@dataclass
class ClipBuilder:
    """Resolves an instance's media source and builds one clip per (instance, mode).

    Built clips are memoised, so metadata-only configuration changes reuse them.
    """

    clips_dir: Path
    frames_root: Path | None = None
    videos_root: Path | None = None
    tool: MediaTool = field(default_factory=MediaTool)
    style: OverlayStyle = field(default_factory=OverlayStyle)
    container: str = "zip"
    _memo: dict[tuple[str, str], ClipBundle] = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)
    _key_locks: dict[tuple[str, str], threading.Lock] = field(default_factory=dict, init=False, repr=False)

    def source_for(self, video_id: str) -> Path:
        if self.frames_root is not None:
            d = Path(self.frames_root) / video_id
            if d.is_dir():
                return d
        if self.videos_root is not None:
            for p in sorted(Path(self.videos_root).glob(f"{video_id}.*")):
                return p
        raise MissingFile(f"media for video {video_id}")

    def clip_path(self, instance_id: str, mode: str) -> Path:
        safe = instance_id.replace("/", "__")
        ext = "zip" if self.container == "zip" else "mp4"
        return Path(self.clips_dir) / mode / f"{safe}.{ext}"

    def build(self, instance: PedestrianInstance, mode: str) -> ClipBundle:
        key = (instance.instance_id, mode)
        with self._lock:
            if key in self._memo:
                return self._memo[key]
            key_lock = self._key_locks.setdefault(key, threading.Lock())
        with key_lock:
            if key in self._memo:
                return self._memo[key]
            window = compute_window(instance.event_frame)
            frames = extract_frames(self.source_for(instance.video_id), window, self.tool)
            if mode == "annotated":
                boxes = {}
                for idx in window.indices:
                    fa = instance.frame(idx)
                    boxes[idx] = None if fa is None else fa.bbox
                frames = render_overlay(frames, boxes, self.style)
            elif mode != "unannotated":
                raise ValueError(f"unknown clip mode {mode!r}")
            bundle = package_clip(
                frames, self.clip_path(instance.instance_id, mode), FPS, self.tool, self.container
            )
            with self._lock:
                self._memo[key] = bundle
            return bundle
