"""ROC/AUC, confusion matrices and ARD relevance reports."""
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .exceptions import InputShapeError, UndefinedMetricError, UnsupportedModelError

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True, eq=False)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


@dataclass(frozen=True)
class ConfusionMatrix:
    """Cells named from the lender's point of view (positive = default)."""

    true_default: int
    false_non_default: int
    true_non_default: int
    false_default: int
    threshold: float = DEFAULT_THRESHOLD

    @property
    def total(self):
        return self.true_default + self.false_non_default + self.true_non_default + self.false_default

    def as_dict(self):
        return {
            "true_default": self.true_default,
            "false_non_default": self.false_non_default,
            "true_non_default": self.true_non_default,
            "false_default": self.false_default,
            "threshold": self.threshold,
        }


@dataclass(frozen=True)
class ArdRelevanceReport:
    """Relevance (mean prior variance ``1/alpha``) per input feature.

    ``features``/``relevance`` are sorted by decreasing relevance and
    ``rank`` is 1-based. ``other`` maps non-input classes to their values.
    """

    features: tuple
    relevance: tuple
    rank: tuple
    other: dict

    def as_dict(self):
        return {
            "ranking": [
                {"feature": f, "relevance": r, "rank": k}
                for f, r, k in zip(self.features, self.relevance, self.rank)
            ],
            "non_input_classes": self.other,
        }

    def rank_of(self, feature):
        return self.rank[self.features.index(feature)]


def _check_scores(scores, labels):
    scores = np.asarray(scores, dtype=float).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise InputShapeError(f"{scores.size} scores for {labels.size} labels")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0 or 1")
    return scores, labels.astype(bool)


def auc(scores, labels):
    """Probability that a random positive outscores a random negative (ties count 1/2).

    Computed from midranks (Mann-Whitney U) in O(n log n).
    """
    scores, pos = _check_scores(scores, labels)
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative label")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, labels):
    """ROC points from sweeping the threshold through every distinct score."""
    scores, pos = _check_scores(scores, labels)
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC needs at least one positive and one negative label")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    tp = np.cumsum(pos[order])
    fp = np.cumsum(~pos[order])
    # last index of each run of equal scores
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    thresholds = np.r_[np.inf, s[last]]
    area = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr, tpr, thresholds, area)


def confusion_matrix(scores, labels, threshold=DEFAULT_THRESHOLD):
    """Predict default iff ``score >= threshold`` and tabulate against ``labels``."""
    scores, pos = _check_scores(scores, labels)
    pred = scores >= threshold
    return ConfusionMatrix(
        true_default=int(np.sum(pred & pos)),
        false_non_default=int(np.sum(~pred & pos)),
        true_non_default=int(np.sum(~pred & ~pos)),
        false_default=int(np.sum(pred & ~pos)),
        threshold=float(threshold),
    )


def ard_relevance(source, grouping):
    """Rank input features by the posterior mean of ``1/alpha_c``.

    Parameters
    ----------
    source : SampleChain, LaplaceFit or array_like
        A chain (alpha averaged over kept samples as reciprocals), a Laplace
        fit (its converged alpha), or a raw ``(n_samples, n_classes)`` array.
    grouping : ArdGrouping

    Raises
    ------
    UnsupportedModelError
        If ``grouping`` has no per-input classes.
    """
    if not grouping.is_ard:
        raise UnsupportedModelError("relevance needs an ARD grouping with per-input classes")
    if hasattr(source, "hyper"):
        alphas = np.atleast_2d(source.hyper.alpha)
    elif hasattr(source, "alpha"):
        alphas = np.atleast_2d(source.alpha)
    else:
        alphas = np.atleast_2d(np.asarray(source, dtype=float))
    if alphas.shape[0] == 0 or alphas.shape[1] != grouping.n_classes:
        raise InputShapeError(
            f"alpha array {alphas.shape} does not match {grouping.n_classes} classes"
        )
    variance = np.mean(1.0 / alphas, axis=0)
    k = grouping.n_input_classes
    names = grouping.class_labels[:k]
    order = np.argsort(-variance[:k], kind="mergesort")
    other = {grouping.class_labels[c]: float(variance[c]) for c in range(k, grouping.n_classes)}
    return ArdRelevanceReport(
        features=tuple(names[i] for i in order),
        relevance=tuple(float(variance[i]) for i in order),
        rank=tuple(range(1, k + 1)),
        other=other,
    )
