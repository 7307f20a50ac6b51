"""Published comparison rows for the JAAD-beh crossing benchmark.

Transcribed by hand from the published comparison table and shipped as
static data; nothing here is ever recomputed. Metric strings are kept
exactly as printed (2 decimals), ``None`` where the table prints ``--``.
A checksum test guards this file against accidental edits.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

INPUT_FLAGS = ("I", "B", "P", "S", "V")
METRIC_NAMES = ("acc", "auc", "f1", "precision", "recall")


@dataclass(frozen=True)
class ReferenceRow:
    model: str
    year: int
    variant: str
    inputs: tuple[str, ...]
    extra: str | None
    acc: str | None
    auc: str | None
    f1: str | None
    precision: str | None
    recall: str | None

    def flag(self, name: str) -> bool:
        return name in self.inputs


def _row(model, year, variant, inputs, extra, acc, auc, f1, p, r) -> ReferenceRow:
    return ReferenceRow(model, year, variant, tuple(inputs), extra, acc, auc, f1, p, r)


# model, year, variant, inputs, extra info, ACC, AUC, F1, P, R
REFERENCE_ROWS: tuple[ReferenceRow, ...] = (
    _row("MultiRNN", 2018, "GRU", "IBPS", None, "0.61", "0.50", "0.74", "0.64", "0.86"),
    _row("SFRNN", 2020, "GRU", "IBPS", None, "0.51", "0.45", "0.63", "0.61", "0.64"),
    _row("SingleRNN", 2020, "GRU", "IBPS", None, "0.58", "0.54", "0.67", "0.67", "0.68"),
    _row("PCPA", 2021, "RNN+Attention", "IBPS", None, "0.58", "0.50", "0.71", None, None),
    _row("IntFormer", 2022, "Transformer", "IBPS", None, "0.59", "0.54", "0.69", None, None),
    _row("ST CrossingPose", 2022, "Graph CNN", "IBP", None, "0.63", "0.56", "0.74", "0.66", "0.83"),
    _row("FFSTP", 2022, "GRU+Attention", "IBPS", None, "0.62", "0.54", "0.74", "0.65", "0.85"),
    _row("Pedestrian Graph+", 2022, "Graph CNN+Attention", "IBPS", None, "0.70", "0.70", "0.76", "0.77", "0.75"),
    _row("PIT-Block(a)", 2022, "Transformer", "IBPS", None, "0.70", "0.65", "0.81", "0.71", "0.93"),
    _row("GPT4V-PBP", 2023, "MLLM", "IB", "Text", "0.57", "0.61", "0.65", "0.82", "0.54"),
    _row("GPT4V-PBP Skip", 2023, "MLLM", "IB", "Text", "0.55", "0.59", "0.64", "0.81", "0.53"),
    _row("OmniPredict", 2024, "MLLM", "IBS", "Text", "0.67", "0.65", "0.65", "0.66", "0.65"),
    _row("BF-PIP", 2025, "MLLM", "BSV", "Text", "0.73", "0.77", "0.80", "0.96", "0.69"),
)


def reference_digest(rows: tuple[ReferenceRow, ...] = REFERENCE_ROWS) -> str:
    payload = json.dumps([asdict(r) for r in rows], sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
