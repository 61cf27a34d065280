"""Clustering accuracy under the best one-to-one label alignment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidParameterError


@dataclass(frozen=True)
class AccuracyReport:
    overall: float
    average: float
    alignment: dict
    confusion: np.ndarray
    true_ids: np.ndarray
    pred_ids: np.ndarray

    def per_class(self) -> np.ndarray:
        """Recall of each true class under the alignment."""
        sizes = self.confusion.sum(axis=1)
        hits = np.zeros(len(self.true_ids))
        for r, tid in enumerate(self.true_ids):
            for c, pid in enumerate(self.pred_ids):
                if self.alignment.get(int(pid)) == int(tid):
                    hits[r] = self.confusion[r, c]
        return hits / sizes


def confusion_matrix(predicted, truth):
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    true_ids, ti = np.unique(truth, return_inverse=True)
    pred_ids, pi = np.unique(predicted, return_inverse=True)
    C = np.zeros((true_ids.size, pred_ids.size), dtype=np.int64)
    np.add.at(C, (ti, pi), 1)
    return C, true_ids, pred_ids


def score(predicted, truth) -> AccuracyReport:
    """Overall and class-averaged accuracy after optimal label matching.

    When the numbers of predicted and true labels differ, the surplus labels
    stay unmatched and count as errors. Among alignments with the same overall
    accuracy the one with the best average accuracy is taken, so both numbers
    are independent of how the predicted labels are named.
    """
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise InvalidParameterError("predicted and truth must be 1-D arrays of equal length")
    if predicted.size == 0:
        raise InvalidParameterError("cannot score an empty labeling")
    C, true_ids, pred_ids = confusion_matrix(predicted, truth)
    sizes = C.sum(axis=1)
    # counts are integers and the recall term sums to at most K / (K + 1) < 1,
    # so it only breaks ties in the matched count
    gain = C + C / sizes[:, None] / (true_ids.size + 1)
    rows, cols = linear_sum_assignment(gain, maximize=True)
    matched = C[rows, cols].sum()
    recall = np.zeros(true_ids.size)
    recall[rows] = C[rows, cols] / sizes[rows]
    alignment = {int(pred_ids[c]): int(true_ids[r]) for r, c in zip(rows, cols)}
    return AccuracyReport(
        overall=float(matched / truth.size),
        average=float(recall.mean()),
        alignment=alignment,
        confusion=C,
        true_ids=true_ids,
        pred_ids=pred_ids,
    )
