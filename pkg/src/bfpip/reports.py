"""Ablation driver and report rendering (markdown, csv, json).

Reports are a pure function of the evaluation result and the reference
rows: no timestamps, fixed row order, fixed float formatting.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .dataset import DatasetManifest, filter_split
from .errors import EmptyRecordSet, UnsupportedFormat
from .metrics import ConfusionMatrix, EvalMetrics, classification_metrics, display, evaluate, per_repeat_metrics
from .protocol import PredictionRecord, RecordSink, Runner
from .promptkit import ALL_CONFIGS, ModalityConfig
from .reference import INPUT_FLAGS, METRIC_NAMES, REFERENCE_ROWS, ReferenceRow

FORMATS = ("markdown", "csv", "json")
FORMAT_ALIASES = {"md": "markdown", "markdown": "markdown", "csv": "csv", "json": "json"}
CSV_HEADER = ["config", "acc", "auc", "f1", "precision", "recall", "n", "parse_failure_rate", "unanimity_rate"]
HEADLINE_CONFIG = ModalityConfig("AV", False, True)


@dataclass(frozen=True)
class EvaluationResult:
    run_id: str
    rows: dict[ModalityConfig, EvalMetrics]
    header: Mapping = field(default_factory=dict)
    confusions: dict[ModalityConfig, ConfusionMatrix] = field(default_factory=dict)
    per_repeat: dict[ModalityConfig, list] = field(default_factory=dict)

    @property
    def is_ablation(self) -> bool:
        return set(self.rows) == set(ALL_CONFIGS)

    def ordered(self) -> list[tuple[ModalityConfig, EvalMetrics]]:
        order = {c: i for i, c in enumerate(ALL_CONFIGS)}
        return sorted(self.rows.items(), key=lambda kv: order.get(kv[0], len(order)))


def _empty_row(records: Sequence[PredictionRecord]) -> EvalMetrics:
    return EvalMetrics(None, None, None, None, None, 0, 1.0 if records else 0.0, 0.0, len(records), 0)


def summarize(records: Sequence[PredictionRecord], run_id: str, header: Mapping | None = None) -> EvaluationResult:
    """Group records by configuration and compute one metrics row per group."""
    if not records:
        raise EmptyRecordSet("no prediction records")
    groups: dict[ModalityConfig, list[PredictionRecord]] = {}
    for rec in records:
        groups.setdefault(rec.config, []).append(rec)
    rows, confusions, repeats = {}, {}, {}
    for cfg, recs in groups.items():
        try:
            cm, _ = classification_metrics(recs)
            rows[cfg] = evaluate(recs)
            confusions[cfg] = cm
        except EmptyRecordSet:
            rows[cfg] = _empty_row(recs)
            confusions[cfg] = ConfusionMatrix()
        repeats[cfg] = per_repeat_metrics([r for r in recs if not r.failed])
    return EvaluationResult(run_id, rows, dict(header or {}), confusions, repeats)


def run_ablation(
    manifest: DatasetManifest,
    runner: Runner,
    run_id: str,
    split: str = "test",
    sink: RecordSink | None = None,
    header: Mapping | None = None,
) -> EvaluationResult:
    """Evaluate every split instance under all eight modality configurations."""
    instances = filter_split(manifest, split)
    if not instances:
        raise EmptyRecordSet(f"split {split!r} has no instances")
    records = runner.run(instances, ALL_CONFIGS, sink)
    result = summarize(records, run_id, header)
    assert result.is_ablation
    return result


# -- rendering ---------------------------------------------------------------


def _harness_flags(cfg: ModalityConfig) -> dict[str, bool]:
    return {"I": False, "B": cfg.video_mode == "AV" or cfg.include_bb, "P": False, "S": cfg.include_speed, "V": True}


def _md_table(header: list[str], rows: list[list[str]]) -> list[str]:
    out = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    out.extend("| " + " | ".join(r) + " |" for r in rows)
    return out


def _header_lines(result: EvaluationResult) -> list[str]:
    h = result.header
    lines = [f"- run: `{result.run_id}`"]
    if "backend" in h:
        b = h["backend"]
        lines.append(
            f"- backend: {b.get('kind')} / {b.get('model_id')} "
            f"(temperature {b.get('temperature')}, seed {b.get('seed')})"
        )
    if "protocol" in h:
        p = h["protocol"]
        lines.append(
            f"- protocol: {p.get('repeats')} repeats per instance, {p.get('parse_mode')} parsing, "
            f"majority vote, ties -> {p.get('tie_break')}"
        )
    if "prompt_order" in h:
        lines.append(f"- prompt part order: {', '.join(h['prompt_order'])}")
    deviations = list(h.get("deviations", []))
    lines.append("- protocol deviations: " + ("; ".join(deviations) if deviations else "none"))
    return lines


def render_markdown(result: EvaluationResult, reference: Sequence[ReferenceRow]) -> str:
    lines = ["# Pedestrian crossing-intention evaluation", ""]
    lines += _header_lines(result)
    counts = ", ".join(
        f"{cfg.label}: {m.n} instances / {m.n_videos} clips" + (f" ({m.n_failed} failed)" if m.n_failed else "")
        for cfg, m in result.ordered()
    )
    lines.append(f"- evaluated: {counts}")
    lines += [
        "",
        "AUC is computed from the fraction of repeats voting `cross` (a 6-point grid for 5 repeats); "
        "tied positive/negative pairs get half credit. Display values are rounded half-up to 2 decimals; "
        "report.csv and report.json keep full precision.",
        "",
        "## Input-modality results" if result.is_ablation else "## Results",
        "",
    ]
    rows = []
    for cfg, m in result.ordered():
        rows.append(
            [cfg.label, display(m.acc), display(m.auc), display(m.f1), display(m.precision), display(m.recall),
             str(m.n), display(m.parse_failure_rate), display(m.unanimity_rate)]
        )
    lines += _md_table(
        ["Input Modality", "ACC", "AUC", "F1", "P", "R", "N", "Parse fail", "Unanimous"], rows
    )

    lines += ["", "## Comparison with published results", ""]
    cmp_rows = []
    for ref in reference:
        cmp_rows.append(
            [ref.model, str(ref.year), ref.variant]
            + ["x" if ref.flag(f) else "--" for f in INPUT_FLAGS]
            + [ref.extra or "--"]
            + [getattr(ref, name) or "--" for name in METRIC_NAMES]
        )
    headline = HEADLINE_CONFIG if HEADLINE_CONFIG in result.rows else result.ordered()[0][0]
    m = result.rows[headline]
    flags = _harness_flags(headline)
    model_id = result.header.get("backend", {}).get("model_id", "harness")
    cmp_rows.append(
        [f"This run [{headline.label}]", "--", str(model_id)]
        + ["x" if flags[f] else "--" for f in INPUT_FLAGS]
        + ["Text"]
        + [display(getattr(m, name)) for name in METRIC_NAMES]
    )
    lines += _md_table(
        ["Model", "Year", "Variant", *INPUT_FLAGS, "Extra Info.", "ACC", "AUC", "F1", "P", "R"], cmp_rows
    )
    lines += [
        "",
        "Published rows are transcribed verbatim from the comparison table. The text accompanying that "
        "table quotes AUC 0.76 and recall 0.68 for BF-PIP; the table values are used here.",
        "",
    ]
    return "\n".join(lines)


def _csv_value(v: float | int | None) -> str:
    return "" if v is None else repr(v)


def render_csv(result: EvaluationResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for cfg, m in result.ordered():
        w.writerow([cfg.label] + [_csv_value(getattr(m, k)) for k in CSV_HEADER[1:]])
    return buf.getvalue()


def render_json(result: EvaluationResult, reference: Sequence[ReferenceRow]) -> str:
    rows = []
    for cfg, m in result.ordered():
        cm = result.confusions.get(cfg)
        rows.append(
            {
                "config": cfg.label,
                **m.to_dict(),
                "confusion": None if cm is None else {"tp": cm.tp, "fp": cm.fp, "fn": cm.fn, "tn": cm.tn},
                "per_repeat": result.per_repeat.get(cfg, []),
            }
        )
    doc = {
        "run_id": result.run_id,
        "header": result.header,
        "rows": rows,
        "reference": [
            {"model": r.model, "year": r.year, "variant": r.variant, "inputs": list(r.inputs), "extra": r.extra,
             **{k: getattr(r, k) for k in METRIC_NAMES}}
            for r in reference
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=True) + "\n"


def emit_report(
    result: EvaluationResult,
    reference: Sequence[ReferenceRow] = REFERENCE_ROWS,
    fmt: str = "markdown",
) -> bytes:
    kind = FORMAT_ALIASES.get(fmt)
    if kind is None:
        raise UnsupportedFormat(f"unsupported report format {fmt!r}")
    if kind == "markdown":
        text = render_markdown(result, reference)
    elif kind == "csv":
        text = render_csv(result)
    else:
        text = render_json(result, reference)
    return text.encode("utf-8")


REPORT_FILES = {"markdown": "report.md", "csv": "report.csv", "json": "report.json"}
