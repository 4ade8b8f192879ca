"""Confusion-matrix aggregation and the ten evaluation measures.

Classification unit is (contract, vulnerability type). Zero denominators
yield 0 rather than NaN everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .detectors import Finding, VulnType


@dataclass
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def finding_matches_label(finding: Finding, label) -> bool:
    """Types must match; a label that names a function must match it too."""
    if finding.vuln != label.type:
        return False
    if label.function is not None and label.function != finding.function:
        return False
    return True


def confuse(
    findings_by_contract: dict[str, list[Finding]],
    labels_by_contract: dict[str, list],
    match_policy=finding_matches_label,
) -> dict[VulnType, ConfusionMatrix]:
    """Per-type confusion matrices over the union of contracts seen in
    findings and labels. For a (contract, type) cell: a matched label is a
    TP, an unmatched label an FN, an unmatchable finding an FP, silence on
    an unlabeled contract a TN; a mismatching (finding, label) pair yields
    both the FP and the FN."""
    contracts = sorted(set(findings_by_contract) | set(labels_by_contract))
    out = {v: ConfusionMatrix() for v in VulnType}
    for vt in VulnType:
        cm = out[vt]
        for path in contracts:
            findings = [f for f in findings_by_contract.get(path, []) if f.vuln == vt]
            labels = [l for l in labels_by_contract.get(path, []) if l.type == vt]
            if not findings and not labels:
                cm.tn += 1
                continue
            matched_labels = [
                l for l in labels if any(match_policy(f, l) for f in findings)]
            matched_findings = [
                f for f in findings if any(match_policy(f, l) for l in labels)]
            if matched_labels:
                cm.tp += 1
            elif labels:
                cm.fn += 1
            if findings and not matched_findings:
                cm.fp += 1
    return out


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def accuracy(cm: ConfusionMatrix) -> float:
    return _ratio(cm.tp + cm.tn, cm.total)


def precision(cm: ConfusionMatrix) -> float:
    return _ratio(cm.tp, cm.tp + cm.fp)


def recall(cm: ConfusionMatrix) -> float:
    return _ratio(cm.tp, cm.tp + cm.fn)


def f1_score(cm: ConfusionMatrix) -> float:
    p, r = precision(cm), recall(cm)
    return _ratio(2 * p * r, p + r)


def tpr(cm: ConfusionMatrix) -> float:
    return _ratio(cm.tp, cm.tp + cm.fn)


def fpr(cm: ConfusionMatrix) -> float:
    return _ratio(cm.fp, cm.fp + cm.tn)


def fnr(cm: ConfusionMatrix) -> float:
    return _ratio(cm.fn, cm.tp + cm.fn)


def tnr(cm: ConfusionMatrix) -> float:
    return _ratio(cm.tn, cm.fp + cm.tn)


def mcc(cm: ConfusionMatrix) -> float:
    """Matthews correlation; 0 whenever a factor under the root vanishes."""
    factors = [cm.tp + cm.fp, cm.tp + cm.fn, cm.tn + cm.fp, cm.tn + cm.fn]
    if any(f == 0 for f in factors):
        return 0.0
    num = cm.tp * cm.tn - cm.fp * cm.fn
    return num / math.sqrt(math.prod(factors))


def fmi(cm: ConfusionMatrix) -> float:
    """Fowlkes-Mallows: geometric mean of precision and recall."""
    if cm.tp + cm.fp == 0 or cm.tp + cm.fn == 0:
        return 0.0
    return math.sqrt(precision(cm) * recall(cm))


def auc(scored: list[tuple[float, bool]], thresholds: list[float] | None = None) -> float:
    """Area under the (FPR, TPR) curve swept over decision thresholds.

    `scored` pairs a per-contract score with its ground-truth label. The
    default threshold set is the distinct scores, descending; (0,0) and
    (1,1) anchor the curve.
    """
    positives = sum(1 for _s, lab in scored if lab)
    negatives = len(scored) - positives
    if thresholds is None:
        thresholds = sorted({s for s, _l in scored}, reverse=True)
    points = {(0.0, 0.0), (1.0, 1.0)}
    for t in thresholds:
        tp = sum(1 for s, lab in scored if lab and s >= t)
        fp = sum(1 for s, lab in scored if not lab and s >= t)
        points.add((_ratio(fp, negatives), _ratio(tp, positives)))
    curve = sorted(points)
    area = 0.0
    for (x0, y0), (x1, y1) in zip(curve, curve[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


METRIC_NAMES = (
    "accuracy", "precision", "recall", "f1_score",
    "tpr", "fpr", "fnr", "tnr", "mcc", "fmi",
)

_FUNCS = {
    "accuracy": accuracy, "precision": precision, "recall": recall,
    "f1_score": f1_score, "tpr": tpr, "fpr": fpr, "fnr": fnr, "tnr": tnr,
    "mcc": mcc, "fmi": fmi,
}


def metrics_row(cm: ConfusionMatrix, scored: list[tuple[float, bool]] | None = None) -> dict:
    """All measures for one vulnerability type, Table-IX shaped."""
    row = {name: _FUNCS[name](cm) for name in METRIC_NAMES}
    row["auc"] = auc(scored) if scored else 0.0
    row["confusion"] = {"tp": cm.tp, "fp": cm.fp, "fn": cm.fn, "tn": cm.tn}
    return row
