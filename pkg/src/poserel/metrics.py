"""Evaluation metrics: per-class top-1 recall, per-class average precision,
mAP, overall accuracy, and the confusion matrix.

AP uses the all-points (non-interpolated) formulation: instances are sorted
by descending score with ties broken by original index, and AP is the mean
of precision-at-rank over the positive instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from poserel.errors import InvalidInputError, UndefinedMetricError


@dataclass
class EvalReport:
    """Per-class recall and AP (None where undefined), mAP, accuracy, confusion."""

    per_class_recall: list[Optional[float]]
    per_class_ap: list[Optional[float]]
    map: float
    overall_accuracy: float
    confusion: list[list[int]]
    num_instances: int

    def to_dict(self) -> dict:
        return {
            "per_class_recall": self.per_class_recall,
            "per_class_ap": self.per_class_ap,
            "map": self.map,
            "overall_accuracy": self.overall_accuracy,
            "confusion": self.confusion,
            "num_instances": self.num_instances,
        }


def argmax_lowest(values: Sequence[float]) -> int:
    """Index of the maximum value; ties resolve to the lowest index."""
    best = 0
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
    return best


def per_class_recall(predictions: Sequence[int], labels: Sequence[int],
                     num_classes: int) -> list[Optional[float]]:
    """Fraction of instances of each class predicted correctly.

    Classes with no labeled instances are reported as None (undefined).
    """
    if len(predictions) != len(labels):
        raise InvalidInputError(
            f"{len(predictions)} predictions vs {len(labels)} labels")
    support = [0] * num_classes
    correct = [0] * num_classes
    for pred, label in zip(predictions, labels):
        if not 0 <= label < num_classes or not 0 <= pred < num_classes:
            raise InvalidInputError("class index out of range")
        support[label] += 1
        if pred == label:
            correct[label] += 1
    return [correct[c] / support[c] if support[c] else None
            for c in range(num_classes)]


def average_precision(scores: Sequence[float], positives: Sequence[bool]) -> float:
    """All-points AP: mean of precision-at-rank over the positive instances.

    Sorts by descending score, ties broken by original index. Raises
    UndefinedMetricError when there are no positives.
    """
    if len(scores) != len(positives):
        raise InvalidInputError(
            f"{len(scores)} scores vs {len(positives)} positive flags")
    if not any(positives):
        raise UndefinedMetricError("AP undefined with zero positives")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    tp = 0
    precision_sum = 0.0
    for rank, idx in enumerate(order, start=1):
        if positives[idx]:
            tp += 1
            precision_sum += tp / rank
    return precision_sum / tp


def evaluate(prob_matrix: Sequence[Sequence[float]], labels: Sequence[int],
             num_classes: int) -> EvalReport:
    """Score a probability matrix (instances x classes) against labels.

    Argmax with lowest-index tie-break drives recall, accuracy, and the
    confusion matrix; column c scores AP for class c; mAP averages the APs
    of classes with at least one positive.
    """
    if len(prob_matrix) != len(labels):
        raise InvalidInputError(
            f"{len(prob_matrix)} probability rows vs {len(labels)} labels")
    if len(prob_matrix) == 0:
        raise InvalidInputError("cannot evaluate zero instances")
    for row in prob_matrix:
        if len(row) != num_classes:
            raise InvalidInputError(
                f"probability row of length {len(row)}, expected {num_classes}")

    predictions = [argmax_lowest(row) for row in prob_matrix]
    recalls = per_class_recall(predictions, labels, num_classes)

    confusion = [[0] * num_classes for _ in range(num_classes)]
    correct = 0
    for pred, label in zip(predictions, labels):
        confusion[label][pred] += 1
        if pred == label:
            correct += 1

    aps: list[Optional[float]] = []
    defined: list[float] = []
    for c in range(num_classes):
        flags = [label == c for label in labels]
        if any(flags):
            ap = average_precision([row[c] for row in prob_matrix], flags)
            aps.append(ap)
            defined.append(ap)
        else:
            aps.append(None)
    if not defined:
        raise UndefinedMetricError("no class has a positive instance")

    return EvalReport(
        per_class_recall=recalls,
        per_class_ap=aps,
        map=sum(defined) / len(defined),
        overall_accuracy=correct / len(labels),
        confusion=confusion,
        num_instances=len(labels),
    )
