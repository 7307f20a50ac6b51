"""Two-stage prompt rendering for the eight modality configurations.

Prompt parts are always assembled in the order stage 1, metadata block,
media, stage 2. Templates are plain text with ``{placeholder}`` substitution
and ``{{``/``}}`` for literal braces; no other logic.
"""

from __future__ import annotations

import hashlib
import json
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .clipper import ClipBundle, ObservationWindow, compute_window
from .dataset import FPS, TTE_FRAMES, WINDOW_LENGTH, EgoSpeed, PedestrianInstance
from .errors import MissingAnnotation, TemplateError, TemplateVariableUnbound

PROMPT_ORDER = ("stage1", "metadata", "media", "stage2")

CROSS_LITERAL = '{"intention": "cross"}'
NOT_CROSS_LITERAL = '{"intention": "not_cross"}'

PLACEHOLDERS = ("n_frames", "fps", "tte_seconds", "modality_inventory", "metadata_block", "labels")


@dataclass(frozen=True, order=True)
class ModalityConfig:
    video_mode: str  # "UV" | "AV"
    include_bb: bool = False
    include_speed: bool = False

    def __post_init__(self) -> None:
        if self.video_mode not in ("UV", "AV"):
            raise ValueError(f"video_mode must be UV or AV, got {self.video_mode!r}")

    @property
    def label(self) -> str:
        parts = [self.video_mode]
        if self.include_bb:
            parts.append("BB")
        if self.include_speed:
            parts.append("S")
        return "+".join(parts)

    @property
    def clip_mode(self) -> str:
        return "annotated" if self.video_mode == "AV" else "unannotated"

    @classmethod
    def parse(cls, label: str) -> "ModalityConfig":
        parts = [p.strip().upper() for p in label.split("+")]
        if not parts or parts[0] not in ("UV", "AV"):
            raise ValueError(f"modality label must start with UV or AV: {label!r}")
        rest = parts[1:]
        if len(set(rest)) != len(rest) or not set(rest) <= {"BB", "S"}:
            raise ValueError(f"unrecognised modality label {label!r}")
        return cls(parts[0], "BB" in rest, "S" in rest)

    def __str__(self) -> str:
        return self.label


# row order of the ablation table
ALL_CONFIGS: tuple[ModalityConfig, ...] = tuple(
    ModalityConfig(mode, bb, s)
    for mode in ("UV", "AV")
    for bb in (False, True)
    for s in (False, True)
)
CONFIG_LABELS = tuple(c.label for c in ALL_CONFIGS)


@dataclass(frozen=True)
class TemplateSet:
    stage1: str
    stage2: str

    @classmethod
    def load(cls, stage1_path: str | Path | None = None, stage2_path: str | Path | None = None) -> "TemplateSet":
        bundled = resources.files("bfpip") / "templates"

        def read(p: str | Path | None, name: str) -> str:
            if p is None:
                return (bundled / name).read_text(encoding="utf-8")
            return Path(p).read_text(encoding="utf-8")

        return cls(read(stage1_path, "stage1.txt"), read(stage2_path, "stage2.txt"))

    def digests(self) -> dict[str, str]:
        return {
            "stage1": hashlib.sha256(self.stage1.encode()).hexdigest(),
            "stage2": hashlib.sha256(self.stage2.encode()).hexdigest(),
        }


@dataclass(frozen=True)
class PromptPackage:
    instance_id: str
    config: ModalityConfig
    stage1_text: str
    stage2_text: str
    metadata_block: str
    media: ClipBundle
    prompt_digest: str

    def text_parts(self) -> tuple[list[str], list[str]]:
        """Text parts before and after the media part."""
        before = [self.stage1_text]
        if self.metadata_block:
            before.append(self.metadata_block)
        return before, [self.stage2_text]


def render_template(template: str, bindings: dict[str, str]) -> str:
    out = []
    for literal, name, spec, conv in string.Formatter().parse(template):
        out.append(literal)
        if name is None:
            continue
        if name not in bindings:
            raise TemplateVariableUnbound(name)
        if spec or conv:
            raise TemplateError(f"placeholder {{{name}}} may not carry a format spec or conversion")
        out.append(bindings[name])
    return "".join(out)


def _fmt(v: float) -> str:
    if isinstance(v, float) and v.is_integer():
        v = int(v)
    return str(v)


def serialize_metadata(instance: PedestrianInstance, window: ObservationWindow, config: ModalityConfig) -> str:
    """One line per window frame; empty when neither BB nor S is selected.

    Line grammar: ``frame <i>: bbox x=<x> y=<y> w=<w> h=<h>; ego-speed: <tag>``
    with either half omitted when its modality is off.
    """
    if not (config.include_bb or config.include_speed):
        return ""
    lines = []
    for idx in window.indices:
        fa = instance.frame(idx)
        parts = []
        if config.include_bb:
            if fa is None or fa.bbox is None:
                raise MissingAnnotation(idx, "bbox")
            b = fa.bbox
            parts.append(f"bbox x={_fmt(b.x)} y={_fmt(b.y)} w={_fmt(b.w)} h={_fmt(b.h)}")
        if config.include_speed:
            if fa is None or fa.ego_speed is None:
                raise MissingAnnotation(idx, "ego_speed")
            parts.append(f"ego-speed: {fa.ego_speed.value}")
        lines.append(f"frame {idx}: " + "; ".join(parts))
    return "\n".join(lines)


def modality_inventory(config: ModalityConfig, n_frames: int = WINDOW_LENGTH) -> str:
    lines = []
    if config.video_mode == "AV":
        lines.append(
            f"- video: the {n_frames}-frame clip, with the target pedestrian outlined by a red bounding box on each frame"
        )
    else:
        lines.append(f"- video: the {n_frames}-frame clip as recorded, without any overlays")
    if config.include_bb:
        lines.append(
            "- bounding boxes: per-frame target pedestrian box as pixel coordinates "
            "(x, y, width, height), given as lines 'frame <i>: bbox x=.. y=.. w=.. h=..'"
        )
    if config.include_speed:
        tags = ", ".join(e.value for e in EgoSpeed)
        lines.append(f"- ego-speed: per-frame motion state of the vehicle, one of {tags}")
    return "\n".join(lines)


def _bindings(config: ModalityConfig, metadata: str) -> dict[str, str]:
    tte_seconds = TTE_FRAMES / FPS
    return {
        "n_frames": str(WINDOW_LENGTH),
        "fps": str(FPS),
        "tte_seconds": _fmt(tte_seconds),
        "modality_inventory": modality_inventory(config),
        "metadata_block": metadata,
        "labels": f"{CROSS_LITERAL}\n{NOT_CROSS_LITERAL}",
    }


def prompt_digest(stage1: str, stage2: str, metadata: str, media_digest: str) -> str:
    payload = json.dumps([stage1, stage2, metadata, media_digest], ensure_ascii=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("ascii")).hexdigest()


def build_prompt(
    instance: PedestrianInstance,
    config: ModalityConfig,
    templates: TemplateSet,
    clip: ClipBundle,
) -> PromptPackage:
    if clip.mode != config.clip_mode:
        raise ValueError(f"{config.label} needs a {config.clip_mode} clip, got {clip.mode}")
    metadata = serialize_metadata(instance, compute_window(instance.event_frame), config)
    bindings = _bindings(config, metadata)
    stage1 = render_template(templates.stage1, bindings)
    stage2 = render_template(templates.stage2, bindings)
    if not stage1.strip() or not stage2.strip():
        raise TemplateError("rendered stage texts must be non-empty")
    if CROSS_LITERAL not in stage2 or NOT_CROSS_LITERAL not in stage2:
        raise TemplateError("stage 2 must state both legal output literals (use {labels})")
    return PromptPackage(
        instance_id=instance.instance_id,
        config=config,
        stage1_text=stage1,
        stage2_text=stage2,
        metadata_block=metadata,
        media=clip,
        prompt_digest=prompt_digest(stage1, stage2, metadata, clip.content_digest),
    )
