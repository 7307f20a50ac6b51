"""Classification metrics over prediction records (positive class = cross).

Undefined metrics are ``None``, never 0. AUC uses the vote-fraction score,
which for R=5 lives on the grid {0, .2, .4, .6, .8, 1}; ties between a
positive and a negative earn half credit.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence

from .dataset import Label
from .errors import EmptyRecordSet, LengthMismatch
from .protocol import PredictionRecord


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class EvalMetrics:
    acc: float | None
    auc: float | None
    f1: float | None
    precision: float | None
    recall: float | None
    n: int
    parse_failure_rate: float
    unanimity_rate: float
    n_failed: int = 0
    n_videos: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _div(a: float, b: float) -> float | None:
    return None if b == 0 else a / b


def confusion(predicted: Sequence[Label], truths: Sequence[Label]) -> ConfusionMatrix:
    if len(predicted) != len(truths):
        raise LengthMismatch(f"{len(predicted)} predictions vs {len(truths)} truths")
    tp = fp = fn = tn = 0
    for p, t in zip(predicted, truths):
        if p == Label.CROSS:
            if t == Label.CROSS:
                tp += 1
            else:
                fp += 1
        elif t == Label.CROSS:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, fn, tn)


def rates(cm: ConfusionMatrix) -> dict[str, float | None]:
    precision = _div(cm.tp, cm.tp + cm.fp)
    recall = _div(cm.tp, cm.tp + cm.fn)
    if precision is None or recall is None:
        f1 = None
    else:
        f1 = _div(2 * precision * recall, precision + recall)
    return {"acc": _div(cm.tp + cm.tn, cm.total), "precision": precision, "recall": recall, "f1": f1}


def _scored(records: Sequence[PredictionRecord]) -> list[PredictionRecord]:
    out = [r for r in records if not r.failed]
    for r in out:
        if r.ground_truth is None:
            raise ValueError(f"record {r.instance_id} has no ground truth")
    return out


def stability_summary(records: Sequence[PredictionRecord]) -> tuple[float, float]:
    """Return ``(unanimity_rate, parse_failure_rate)`` over all records."""
    if not records:
        raise EmptyRecordSet("no prediction records")
    unanimous = sum(1 for r in records if r.unanimous)
    total_repeats = sum(len(r.repeats) for r in records)
    failures = sum(r.parse_failures for r in records)
    return unanimous / len(records), _div(failures, total_repeats) or 0.0


def classification_metrics(records: Sequence[PredictionRecord]) -> tuple[ConfusionMatrix, EvalMetrics]:
    if not records:
        raise EmptyRecordSet("no prediction records")
    scored = _scored(records)
    if not scored:
        raise EmptyRecordSet("every record failed evaluation")
    cm = confusion([r.aggregated for r in scored], [r.ground_truth for r in scored])
    unanimity, parse_rate = stability_summary(records)
    m = rates(cm)
    return cm, EvalMetrics(
        acc=m["acc"],
        auc=None,
        f1=m["f1"],
        precision=m["precision"],
        recall=m["recall"],
        n=cm.total,
        parse_failure_rate=parse_rate,
        unanimity_rate=unanimity,
        n_failed=len(records) - len(scored),
        n_videos=len({r.video_id for r in scored}),
    )


def auc_score(scores: Sequence[float], truths: Sequence[Label]) -> float | None:
    """Mann-Whitney AUC via average ranks; ``None`` when a class is absent."""
    if len(scores) != len(truths):
        raise LengthMismatch(f"{len(scores)} scores vs {len(truths)} truths")
    if not scores:
        raise EmptyRecordSet("auc_score needs at least one score")
    n_pos = sum(1 for t in truths if t == Label.CROSS)
    n_neg = len(truths) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    order = sorted(range(len(scores)), key=lambda i: scores[i])
    # doubled ranks keep tie averages integral: rank of a tie group spanning
    # sorted positions [i, j) is (i + 1 + j) / 2
    doubled_pos_rank_sum = 0
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and scores[order[j]] == scores[order[i]]:
            j += 1
        doubled_rank = i + 1 + j
        for k in range(i, j):
            if truths[order[k]] == Label.CROSS:
                doubled_pos_rank_sum += doubled_rank
        i = j
    doubled_u = doubled_pos_rank_sum - n_pos * (n_pos + 1)
    return doubled_u / (2 * n_pos * n_neg)


def evaluate(records: Sequence[PredictionRecord]) -> EvalMetrics:
    _, m = classification_metrics(records)
    scored = _scored(records)
    auc = auc_score([r.score for r in scored], [r.ground_truth for r in scored])
    return EvalMetrics(**{**m.to_dict(), "auc": auc})


def per_repeat_metrics(records: Sequence[PredictionRecord]) -> list[dict]:
    """Metrics of each repeat taken alone (its own label, 0/1 score for AUC)."""
    if not records:
        return []
    out = []
    n_rep = max(len(r.repeats) for r in records)
    for k in range(n_rep):
        pred, truth = [], []
        for r in records:
            if k < len(r.repeats) and r.repeats[k].label is not None and r.ground_truth is not None:
                pred.append(r.repeats[k].label)
                truth.append(r.ground_truth)
        if not pred:
            out.append({"repeat_index": k, "n": 0})
            continue
        cm = confusion(pred, truth)
        auc = auc_score([1.0 if p == Label.CROSS else 0.0 for p in pred], truth)
        out.append({"repeat_index": k, "n": cm.total, "auc": auc, **rates(cm)})
    return out


def display(value: float | None, places: int = 2) -> str:
    """Half-up rounding for tables; ``--`` marks an undefined metric."""
    if value is None:
        return "--"
    q = Decimal(1).scaleb(-places)
    return str(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))
