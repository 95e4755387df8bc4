"""Monte Carlo predictive summaries shared by the HMC and Laplace engines."""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .exceptions import EmptyInputError
from .network import batch_forward_logits

# weight rows per einsum batch; bounds the (samples, rows, hidden) temporary
_CHUNK = 64


@dataclass(frozen=True)
class PredictiveSummary:
    """Predictive distribution of the default probability.

    ``mean`` and ``std`` are floats for a single input row and arrays for a
    batch; ``probabilities`` has one row per posterior draw.
    """

    mean: object
    std: object
    probabilities: np.ndarray

    def percentile(self, q):
        out = np.percentile(self.probabilities, q, axis=0)
        return float(out) if np.ndim(out) == 0 else out


def sample_probabilities(shape, weight_rows, X):
    """Probability matrix of shape (n_draws, n_rows)."""
    weight_rows = np.atleast_2d(np.asarray(weight_rows, dtype=float))
    if weight_rows.shape[0] == 0:
        raise EmptyInputError("no posterior draws to predict with")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    blocks = [
        expit(batch_forward_logits(shape, weight_rows[i:i + _CHUNK], X))
        for i in range(0, weight_rows.shape[0], _CHUNK)
    ]
    return np.vstack(blocks)


def summarize(shape, weight_rows, x):
    """Mean / population std of the per-draw probabilities at ``x``."""
    single = np.ndim(x) == 1
    probs = sample_probabilities(shape, weight_rows, x)
    mean, std = probs.mean(axis=0), probs.std(axis=0)
    if single:
        return PredictiveSummary(float(mean[0]), float(std[0]), probs[:, 0])
    return PredictiveSummary(mean, std, probs)
