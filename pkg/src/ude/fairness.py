"""Fairness metrics for binary classifiers over a two-group population:
accuracy, equal-opportunity gaps per class, disparate impact and |1-DI|.
Counting stays in integers until the final divisions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .editing import apply_edit
from .models import LinearHead, head_forward

NUMERATOR_GROUP = 0  # group a=0 is the DI numerator; recorded in the report

CSV_HEADER = ["EO_n", "EO_p", "DI", "Acc"]  # DI column carries |1-DI|


class UndefinedMetric(ValueError):
    """A metric's denominator group is empty or has zero rate."""


@dataclass
class EvalRecord:
    predictions: np.ndarray
    labels: np.ndarray
    attrs: np.ndarray

    def __post_init__(self):
        arrs = []
        for name in ("predictions", "labels", "attrs"):
            a = np.asarray(getattr(self, name), dtype=np.int64)
            if a.ndim != 1 or np.any((a != 0) & (a != 1)):
                raise ValueError(f"{name} must be a binary vector")
            arrs.append(a)
            setattr(self, name, a)
        if not (len(arrs[0]) == len(arrs[1]) == len(arrs[2])):
            raise ValueError("predictions, labels, attrs must have equal length")


@dataclass
class FairnessReport:
    accuracy: float
    eo_neg: float
    eo_pos: float
    di: float
    one_minus_di_abs: float
    group_counts: dict
    numerator_group: int = NUMERATOR_GROUP

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def csv_row(self) -> list[str]:
        return [f"{v:.6f}" for v in
                (self.eo_neg, self.eo_pos, self.one_minus_di_abs, self.accuracy)]


def accuracy(rec: EvalRecord) -> float:
    return int(np.sum(rec.predictions == rec.labels)) / len(rec.labels)


def equal_opportunity(rec: EvalRecord, target_class: int) -> float:
    """|TPR_group0 - TPR_group1| for the given class."""
    rates = []
    for a in (0, 1):
        in_cell = (rec.attrs == a) & (rec.labels == target_class)
        total = int(np.sum(in_cell))
        if total == 0:
            raise UndefinedMetric(f"group {a} has no samples with label {target_class}")
        hits = int(np.sum(in_cell & (rec.predictions == target_class)))
        rates.append(hits / total)
    return abs(rates[0] - rates[1])


def disparate_impact(rec: EvalRecord) -> tuple[float, float]:
    """(DI, |1-DI|) with group 0's positive-prediction rate as numerator."""
    rates = []
    for a in (0, 1):
        in_group = rec.attrs == a
        total = int(np.sum(in_group))
        if total == 0:
            raise UndefinedMetric(f"group {a} is empty")
        rates.append(int(np.sum(in_group & (rec.predictions == 1))) / total)
    if rates[1] == 0:
        raise UndefinedMetric("denominator group has zero positive-prediction rate")
    di = rates[0] / rates[1]
    return di, abs(1.0 - di)


def build_report(rec: EvalRecord) -> FairnessReport:
    di, one_minus = disparate_impact(rec)
    counts = {f"a{a}": int(np.sum(rec.attrs == a)) for a in (0, 1)}
    return FairnessReport(accuracy=accuracy(rec),
                          eo_neg=equal_opportunity(rec, 0),
                          eo_pos=equal_opportunity(rec, 1),
                          di=di, one_minus_di_abs=one_minus,
                          group_counts=counts)


def evaluate(head: LinearHead, oracle, images: np.ndarray,
             disease_labels: np.ndarray, sa_labels: np.ndarray,
             eps: np.ndarray | None = None) -> FairnessReport:
    """Full report for a head on (optionally edited) images. Predictions are
    argmax over logits; equal logits predict class 0."""
    if disease_labels is None or sa_labels is None:
        raise ValueError("both label arrays required")
    x = images if eps is None else apply_edit(images, eps)
    logits = head_forward(head, oracle.embed(x))
    preds = np.argmax(logits, axis=1)  # np.argmax takes the first max: ties -> 0
    rec = EvalRecord(predictions=preds, labels=disease_labels, attrs=sa_labels)
    return build_report(rec)
