"""Harness configuration: one JSON document plus ``key=value`` overrides.

Relative paths resolve against the config file's directory. Unknown keys
are errors. Non-protocol temperature, seed or repeat counts are accepted but
recorded as deviations that every run manifest and report carries.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .backends import PredictorSpec, ResponseCache
from .clipper import DEFAULT_DECODE_TEMPLATE, DEFAULT_ENCODE_TEMPLATE, ClipBuilder, MediaTool, OverlayStyle
from .errors import InvalidValue, MissingFile, UnknownKey
from .promptkit import CONFIG_LABELS, ModalityConfig, TemplateSet
from .protocol import ProtocolConfig, Runner

logger = logging.getLogger(__name__)

DEFAULTS: dict[str, Any] = {
    "dataset": {"manifest": None, "split": "test"},
    "media": {
        "frames_root": None,
        "videos_root": None,
        "clips_dir": "clips",
        "container": "mp4",
        "decode_template": DEFAULT_DECODE_TEMPLATE,
        "encode_template": DEFAULT_ENCODE_TEMPLATE,
        "tool_timeout": 120.0,
        "overlay": {"color": [255, 0, 0], "width": 3},
    },
    "backend": {
        "kind": "remote",
        "model_id": "gemini-2.5-pro",
        "temperature": 0.0,
        "seed": 0,
        "endpoint": None,
        "timeout": 60.0,
        "script": None,
        "heuristic_threshold": 20.0,
        "max_attempts": 5,
        "backoff_base": 1.0,
        "allow_protocol_override": False,
        "offline": False,
    },
    "protocol": {"repeats": 5, "parse_mode": "strict", "tie_break": "not_cross"},
    "templates": {"stage1": None, "stage2": None},
    "cache_dir": "cache",
    "runs_dir": "runs",
    "max_concurrency": 4,
    "configs": list(CONFIG_LABELS),
}

# keys whose values are paths, resolved against the config directory
PATH_KEYS = (
    "dataset.manifest",
    "media.frames_root",
    "media.videos_root",
    "media.clips_dir",
    "backend.script",
    "templates.stage1",
    "templates.stage2",
    "cache_dir",
    "runs_dir",
)
# paths that must already exist when given
EXISTING_PATH_KEYS = ("dataset.manifest", "media.frames_root", "media.videos_root", "backend.script",
                      "templates.stage1", "templates.stage2")


def _merge(base: dict, update: dict, prefix: str = "") -> None:
    for key, value in update.items():
        dotted = f"{prefix}{key}"
        if key not in base:
            raise UnknownKey(dotted)
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise InvalidValue(dotted, "must be an object")
            _merge(base[key], value, dotted + ".")
        else:
            base[key] = value


def _get(doc: dict, dotted: str) -> Any:
    node: Any = doc
    for part in dotted.split("."):
        node = node[part]
    return node


def _set(doc: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = doc
    for i, part in enumerate(parts[:-1]):
        if part not in node or not isinstance(node[part], dict):
            raise UnknownKey(".".join(parts[: i + 1]))
        node = node[part]
    if parts[-1] not in node:
        raise UnknownKey(dotted)
    if isinstance(node[parts[-1]], dict):
        raise InvalidValue(dotted, "cannot override a whole section")
    node[parts[-1]] = value


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise InvalidValue(text, "override must look like key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    return key.strip(), value


@dataclass
class HarnessConfig:
    doc: dict
    base_dir: Path
    predictor: PredictorSpec
    protocol: ProtocolConfig
    configs: list[ModalityConfig]
    deviations: list[str] = field(default_factory=list)

    def path(self, dotted: str) -> Path | None:
        v = _get(self.doc, dotted)
        return None if v is None else Path(v)

    @property
    def manifest_path(self) -> Path:
        p = self.path("dataset.manifest")
        if p is None:
            raise InvalidValue("dataset.manifest", "required for this command")
        return p

    @property
    def split(self) -> str:
        return self.doc["dataset"]["split"]

    @property
    def max_concurrency(self) -> int:
        return self.doc["max_concurrency"]

    def media_tool(self) -> MediaTool:
        m = self.doc["media"]
        return MediaTool(m["decode_template"], m["encode_template"], float(m["tool_timeout"]))

    def overlay(self) -> OverlayStyle:
        o = self.doc["media"]["overlay"]
        return OverlayStyle(tuple(o["color"]), int(o["width"]))

    def clip_builder(self) -> ClipBuilder:
        return ClipBuilder(
            clips_dir=self.path("media.clips_dir"),
            frames_root=self.path("media.frames_root"),
            videos_root=self.path("media.videos_root"),
            tool=self.media_tool(),
            style=self.overlay(),
            container=self.doc["media"]["container"],
        )

    def templates(self) -> TemplateSet:
        return TemplateSet.load(self.path("templates.stage1"), self.path("templates.stage2"))

    def cache(self) -> ResponseCache:
        return ResponseCache(self.path("cache_dir"))

    def runner(self, predictor) -> Runner:
        return Runner(predictor, self.clip_builder(), self.templates(), self.protocol, self.max_concurrency)


def _validate_types(doc: dict) -> None:
    m = doc["media"]
    if m["container"] not in ("mp4", "zip"):
        raise InvalidValue("media.container", "must be mp4 or zip")
    color = m["overlay"]["color"]
    if not (isinstance(color, list) and len(color) == 3 and all(isinstance(c, int) and 0 <= c <= 255 for c in color)):
        raise InvalidValue("media.overlay.color", "must be [r, g, b] with 0-255 integers")
    if not isinstance(m["overlay"]["width"], int) or m["overlay"]["width"] < 1:
        raise InvalidValue("media.overlay.width", "must be a positive integer")
    if not isinstance(doc["max_concurrency"], int) or doc["max_concurrency"] < 1:
        raise InvalidValue("max_concurrency", "must be a positive integer")
    if not isinstance(doc["protocol"]["repeats"], int) or isinstance(doc["protocol"]["repeats"], bool):
        raise InvalidValue("protocol.repeats", "must be an integer")
    for key in ("temperature", "timeout", "heuristic_threshold", "backoff_base"):
        v = doc["backend"][key]
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise InvalidValue(f"backend.{key}", "must be a number")
    for key in ("seed", "max_attempts"):
        v = doc["backend"][key]
        if not isinstance(v, int) or isinstance(v, bool):
            raise InvalidValue(f"backend.{key}", "must be an integer")
    if doc["dataset"]["split"] not in ("train", "val", "test"):
        raise InvalidValue("dataset.split", "must be train, val or test")
    if not isinstance(doc["configs"], list) or not doc["configs"]:
        raise InvalidValue("configs", "must be a non-empty list of modality labels")


def build_config(raw: dict, base_dir: Path, overrides: Sequence[str] = ()) -> HarnessConfig:
    doc = copy.deepcopy(DEFAULTS)
    if not isinstance(raw, dict):
        raise InvalidValue("config", "top level must be an object")
    _merge(doc, raw)
    for text in overrides:
        key, value = parse_override(text)
        _set(doc, key, value)
    _validate_types(doc)

    for key in PATH_KEYS:
        v = _get(doc, key)
        if v is None:
            continue
        p = Path(v)
        if not p.is_absolute():
            p = (base_dir / p).resolve()
        _set(doc, key, str(p))
        if key in EXISTING_PATH_KEYS and not p.exists():
            raise MissingFile(p)

    try:
        configs = [ModalityConfig.parse(c) for c in doc["configs"]]
    except (ValueError, AttributeError) as exc:
        raise InvalidValue("configs", str(exc)) from None
    predictor = PredictorSpec(**doc["backend"])
    protocol = ProtocolConfig(**doc["protocol"])
    deviations = predictor.deviations + protocol.deviations
    for d in deviations:
        logger.warning("protocol deviation: %s", d)
    return HarnessConfig(doc, base_dir, predictor, protocol, configs, deviations)


def load_config(path: str | Path, overrides: Sequence[str] = ()) -> HarnessConfig:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise InvalidValue(str(path), f"invalid JSON: {exc}") from None
    return build_config(raw, path.resolve().parent, overrides)
