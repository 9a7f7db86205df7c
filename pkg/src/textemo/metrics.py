"""Prediction scoring: confusion matrix, per-class F1, and unweighted accuracy.

Unweighted accuracy (UA) defaults to macro-averaged recall over the four
target classes; plain micro accuracy is available behind ua_definition for
challenge definitions that want it. Truth labels outside the target set are
excluded from scoring but counted.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

logger = logging.getLogger(__name__)

EVAL_LABELS = ("neutral", "sad", "happy", "angry")

UA_MACRO_RECALL = "macro-recall"
UA_MICRO = "micro"


class EmptyInput(ValueError):
    """No scoreable pair left after exclusion."""


@dataclass
class EvalReport:
    """Scores over the 4 target classes.

    confusion rows are truth, columns prediction, both in EVAL_LABELS order.
    """

    confusion: list[list[int]]
    per_class_f1: dict[str, float]
    ua: float
    ua_definition: str
    n_scored: int
    n_excluded: int

    def to_dict(self) -> dict:
        return {
            "labels": list(EVAL_LABELS),
            "confusion": self.confusion,
            "per_class_f1": self.per_class_f1,
            "ua": self.ua,
            "ua_definition": self.ua_definition,
            "n_scored": self.n_scored,
            "n_excluded": self.n_excluded,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_table(self) -> str:
        header = "truth \\ pred" + "".join(f"{l:>9}" for l in EVAL_LABELS)
        lines = [header]
        for i, label in enumerate(EVAL_LABELS):
            lines.append(f"{label:<12}" + "".join(f"{n:>9}" for n in self.confusion[i]))
        lines.append("")
        lines.append("  ".join(f"F1({l})={self.per_class_f1[l]:.3f}" for l in EVAL_LABELS))
        lines.append(f"UA ({self.ua_definition}) = {self.ua:.3f}   scored={self.n_scored} excluded={self.n_excluded}")
        return "\n".join(lines)


def evaluate(
    pairs: list[tuple[str | None, str]],
    ua_definition: str = UA_MACRO_RECALL,
) -> EvalReport:
    """Score (truth, prediction) pairs.

    Pairs whose truth is missing or outside the 4-class set are excluded and
    counted. Predictions must already be normalized into the 4-class set.
    Raises EmptyInput when nothing survives exclusion.
    """
    if ua_definition not in (UA_MACRO_RECALL, UA_MICRO):
        raise ValueError(f"unknown ua_definition {ua_definition!r}")
    pos = {label: i for i, label in enumerate(EVAL_LABELS)}
    confusion = [[0] * len(EVAL_LABELS) for _ in EVAL_LABELS]
    n_excluded = 0
    for truth, prediction in pairs:
        if prediction not in pos:
            raise ValueError(f"prediction {prediction!r} outside the 4-class label set")
        truth_key = truth.strip().lower() if truth is not None else None
        if truth_key not in pos:
            n_excluded += 1
            continue
        confusion[pos[truth_key]][pos[prediction]] += 1
    n_scored = sum(sum(row) for row in confusion)
    if n_scored == 0:
        raise EmptyInput("no pair with a target-class truth label")

    per_class_f1: dict[str, float] = {}
    recalls: list[float] = []
    for i, label in enumerate(EVAL_LABELS):
        tp = confusion[i][i]
        truth_total = sum(confusion[i])
        pred_total = sum(row[i] for row in confusion)
        recall = tp / truth_total if truth_total else None
        precision = tp / pred_total if pred_total else 0.0
        if recall is None:
            logger.warning("class %r absent from truth; excluded from UA average", label)
        else:
            recalls.append(recall)
        if precision + (recall or 0.0) == 0.0:
            logger.warning("class %r: precision + recall is zero, F1 set to 0", label)
            per_class_f1[label] = 0.0
        else:
            r = recall or 0.0
            per_class_f1[label] = 2 * precision * r / (precision + r)

    if ua_definition == UA_MACRO_RECALL:
        ua = sum(recalls) / len(recalls)
    else:
        ua = sum(confusion[i][i] for i in range(len(EVAL_LABELS))) / n_scored

    return EvalReport(
        confusion=confusion,
        per_class_f1=per_class_f1,
        ua=ua,
        ua_definition=ua_definition,
        n_scored=n_scored,
        n_excluded=n_excluded,
    )


@dataclass
class ReportDelta:
    """Metric differences of report b relative to report a."""

    ua_delta: float
    f1_delta: dict[str, float]

    def format_line(self) -> str:
        per_class = "  ".join(f"{l}:{d:+.3f}" for l, d in self.f1_delta.items())
        return f"UA {self.ua_delta:+.3f}  F1 {per_class}"


def compare_reports(a: EvalReport, b: EvalReport) -> ReportDelta:
    """Per-class F1 and UA deltas (b minus a) for the experiment log."""
    return ReportDelta(
        ua_delta=b.ua - a.ua,
        f1_delta={l: b.per_class_f1[l] - a.per_class_f1[l] for l in EVAL_LABELS},
    )
