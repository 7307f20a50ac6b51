"""Per-instance inference protocol: R repeats, parsing, majority aggregation."""

from __future__ import annotations

import json
import logging
import os
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .backends import Predictor
from .clipper import ClipBuilder, compute_window
from .dataset import Label, PedestrianInstance
from .errors import BfpipError, InvalidValue, MalformedResponse, TieWithEvenVotes
from .promptkit import ALL_CONFIGS, ModalityConfig, TemplateSet, build_prompt

logger = logging.getLogger(__name__)

PARSE_MODES = ("strict", "salvage")
TIE_BREAKS = ("not_cross", "cross", "error")
PROTOCOL_REPEATS = 5

_TOKEN_RE = re.compile(r"\b(not_cross|cross)\b", re.IGNORECASE)
_FENCE_RE = re.compile(r"```(?:json)?[ \t]*\n?(.*?)\n?[ \t]*```", re.DOTALL | re.IGNORECASE)


@dataclass(frozen=True)
class ProtocolConfig:
    repeats: int = PROTOCOL_REPEATS
    parse_mode: str = "strict"
    tie_break: str = "not_cross"

    def __post_init__(self) -> None:
        if not isinstance(self.repeats, int) or self.repeats < 1:
            raise InvalidValue("protocol.repeats", "must be a positive integer")
        if self.repeats % 2 == 0:
            raise InvalidValue("protocol.repeats", "must be odd for majority aggregation")
        if self.parse_mode not in PARSE_MODES:
            raise InvalidValue("protocol.parse_mode", f"must be one of {', '.join(PARSE_MODES)}")
        if self.tie_break not in TIE_BREAKS:
            raise InvalidValue("protocol.tie_break", f"must be one of {', '.join(TIE_BREAKS)}")

    @property
    def deviations(self) -> list[str]:
        if self.repeats != PROTOCOL_REPEATS:
            return [f"repeats={self.repeats} (protocol: {PROTOCOL_REPEATS})"]
        return []


class Parsed(NamedTuple):
    label: Label
    salvaged: bool = False


def label_tokens(text: str) -> set[str]:
    return {m.lower() for m in _TOKEN_RE.findall(text)}


def _strict(raw: str) -> Label | None:
    body = raw.strip()
    fenced = _FENCE_RE.fullmatch(body)
    if fenced:
        body = fenced.group(1).strip()
    try:
        obj = json.loads(body)
    except ValueError:
        return None
    if not isinstance(obj, dict) or set(obj) != {"intention"}:
        return None
    value = obj["intention"]
    if value not in ("cross", "not_cross"):
        return None
    # escapes or stray text could smuggle the other literal in; require the
    # raw text to name exactly this label
    if label_tokens(raw) != {value}:
        return None
    return Label(value)


def parse_response(raw: str, mode: str = "strict") -> Parsed:
    label = _strict(raw)
    if label is not None:
        return Parsed(label, False)
    if mode == "salvage":
        found = label_tokens(raw)
        if len(found) == 1:
            return Parsed(Label(found.pop()), True)
    raise MalformedResponse(raw)


class Aggregate(NamedTuple):
    label: Label
    score: float
    unanimous: bool


def aggregate_repeats(labels: Sequence[Label], tie_break: str = "not_cross") -> Aggregate:
    """Majority vote; ``score`` is the fraction of votes for cross."""
    if not labels:
        raise ValueError("aggregate_repeats needs at least one parsed label")
    n_cross = sum(1 for lab in labels if lab == Label.CROSS)
    n = len(labels)
    score = n_cross / n
    if 2 * n_cross > n:
        label = Label.CROSS
    elif 2 * n_cross < n:
        label = Label.NOT_CROSS
    elif tie_break == "error":
        raise TieWithEvenVotes(f"{n_cross} cross vs {n - n_cross} not_cross")
    else:
        label = Label(tie_break)
    return Aggregate(label, score, n_cross in (0, n))


@dataclass(frozen=True)
class RepeatResult:
    text: str
    label: Label | None
    salvaged: bool
    latency_ms: float
    transport_status: str

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "label": None if self.label is None else self.label.value,
            "salvaged": self.salvaged,
            "latency_ms": self.latency_ms,
            "transport_status": self.transport_status,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RepeatResult":
        lab = d.get("label")
        return cls(d["text"], None if lab is None else Label(lab), bool(d["salvaged"]),
                   float(d["latency_ms"]), d["transport_status"])


@dataclass(frozen=True)
class PredictionRecord:
    instance_id: str
    video_id: str
    config: ModalityConfig
    repeats: tuple[RepeatResult, ...]
    aggregated: Label | None
    score: float | None
    unanimous: bool
    ground_truth: Label | None
    status: str = "ok"  # ok | evaluation_failed

    @property
    def failed(self) -> bool:
        return self.status != "ok"

    @property
    def parse_failures(self) -> int:
        return sum(1 for r in self.repeats if r.label is None)

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "video_id": self.video_id,
            "config": self.config.label,
            "repeats": [r.to_dict() for r in self.repeats],
            "aggregated": None if self.aggregated is None else self.aggregated.value,
            "score": self.score,
            "unanimous": self.unanimous,
            "ground_truth": None if self.ground_truth is None else self.ground_truth.value,
            "status": self.status,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=True)

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionRecord":
        agg, gt = d.get("aggregated"), d.get("ground_truth")
        return cls(
            instance_id=d["instance_id"],
            video_id=d.get("video_id", ""),
            config=ModalityConfig.parse(d["config"]),
            repeats=tuple(RepeatResult.from_dict(r) for r in d["repeats"]),
            aggregated=None if agg is None else Label(agg),
            score=d.get("score"),
            unanimous=bool(d.get("unanimous")),
            ground_truth=None if gt is None else Label(gt),
            status=d.get("status", "ok"),
        )


def record_sort_key(record: PredictionRecord) -> tuple[int, str]:
    order = ALL_CONFIGS.index(record.config) if record.config in ALL_CONFIGS else len(ALL_CONFIGS)
    return (order, record.instance_id)


def make_record(
    instance: PedestrianInstance,
    config: ModalityConfig,
    repeats: Sequence[RepeatResult],
    tie_break: str = "not_cross",
) -> PredictionRecord:
    parsed = [r.label for r in repeats if r.label is not None]
    if not parsed:
        logger.warning("evaluation failed for %s %s: no parseable repeat", instance.instance_id, config.label)
        return PredictionRecord(instance.instance_id, instance.video_id, config, tuple(repeats),
                                None, None, False, instance.ground_truth, "evaluation_failed")
    agg = aggregate_repeats(parsed, tie_break)
    return PredictionRecord(instance.instance_id, instance.video_id, config, tuple(repeats),
                            agg.label, agg.score, agg.unanimous, instance.ground_truth)


class RecordSink:
    """Append-only JSON-lines sink; :meth:`finalize` rewrites it sorted."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.partial = self.path.with_name(self.path.name + ".part")
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.partial.write_text("", encoding="utf-8")
        self._lock = threading.Lock()

    def append(self, record: PredictionRecord) -> None:
        line = record.to_json() + "\n"
        with self._lock, open(self.partial, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()

    def finalize(self, records: Iterable[PredictionRecord]) -> Path:
        write_records(self.path, records)
        self.partial.unlink(missing_ok=True)
        return self.path


def write_records(path: str | Path, records: Iterable[PredictionRecord]) -> Path:
    path = Path(path)
    ordered = sorted(records, key=record_sort_key)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("".join(r.to_json() + "\n" for r in ordered), encoding="utf-8")
    os.replace(tmp, path)
    return path


def read_records(path: str | Path) -> list[PredictionRecord]:
    path = Path(path)
    if not path.is_file():
        return []
    return [
        PredictionRecord.from_dict(json.loads(line))
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]


@dataclass
class Runner:
    """Drives window -> clip -> prompt -> R predictions -> record.

    Instances run concurrently up to ``max_concurrency``; the repeats of one
    instance run sequentially.
    """

    predictor: Predictor
    clips: ClipBuilder
    templates: TemplateSet = field(default_factory=TemplateSet.load)
    pcfg: ProtocolConfig = field(default_factory=ProtocolConfig)
    max_concurrency: int = 4

    def run_instance(self, instance: PedestrianInstance, config: ModalityConfig) -> PredictionRecord:
        try:
            compute_window(instance.event_frame)
            clip = self.clips.build(instance, config.clip_mode)
            prompt = build_prompt(instance, config, self.templates, clip)
            repeats = []
            for r in range(self.pcfg.repeats):
                resp = self.predictor.predict(prompt, r, instance)
                label, salvaged = None, False
                if resp.transport_status == "ok":
                    try:
                        label, salvaged = parse_response(resp.text, self.pcfg.parse_mode)
                    except MalformedResponse:
                        pass
                repeats.append(RepeatResult(resp.text, label, salvaged, resp.latency_ms, resp.transport_status))
            return make_record(instance, config, repeats, self.pcfg.tie_break)
        except BfpipError as exc:
            raise exc.with_context(instance_id=instance.instance_id, config=config.label)

    def run(
        self,
        instances: Sequence[PedestrianInstance],
        configs: Sequence[ModalityConfig],
        sink: RecordSink | None = None,
    ) -> list[PredictionRecord]:
        def task(pair: tuple[PedestrianInstance, ModalityConfig]) -> PredictionRecord:
            rec = self.run_instance(*pair)
            if sink is not None:
                sink.append(rec)
            return rec

        # config-major order keeps clips for one video mode hot in the memo
        pairs = [(inst, cfg) for cfg in configs for inst in instances]
        workers = max(1, self.max_concurrency)
        if workers == 1:
            records = [task(p) for p in pairs]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                records = list(pool.map(task, pairs))
        records.sort(key=record_sort_key)
        if sink is not None:
            sink.finalize(records)
        return records
