"""Posterior energy of the Bayesian MLP with grouped (ARD) Gaussian priors.

The negative log posterior (up to a constant) is::

    M(w) = beta * E_D(w) + sum_c alpha_c * E_Wc(w)

with ``E_D`` the Bernoulli cross-entropy of the sigmoid outputs and
``E_Wc = 0.5 * sum_{i in c} w_i**2`` the weight energy of prior class ``c``.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .exceptions import EmptyInputError, InputShapeError
from .network import MlpParameters, NetworkShape, flatten

PROB_CLAMP = 1e-12
NON_INPUT_LABELS = ("hidden_biases", "output_weights", "output_bias")


@dataclass(frozen=True, eq=False)
class ArdGrouping:
    """Assignment of every flat parameter index to one prior class.

    Attributes
    ----------
    class_of : ndarray of int, shape (n_params,)
    class_labels : tuple of str
        One label per class.
    n_input_classes : int
        The first ``n_input_classes`` classes hold the fan-out weights of one
        input feature each. Zero for a non-ARD grouping.
    """

    class_of: np.ndarray
    class_labels: tuple
    n_input_classes: int = 0

    def __post_init__(self):
        class_of = np.asarray(self.class_of, dtype=np.intp).reshape(-1)
        labels = tuple(str(lbl) for lbl in self.class_labels)
        counts = np.bincount(class_of, minlength=len(labels))
        if class_of.size == 0 or class_of.min() < 0 or counts.size != len(labels):
            raise InputShapeError("class ids must be contiguous 0..n_classes-1")
        if np.any(counts == 0):
            raise InputShapeError(f"empty prior classes: {np.flatnonzero(counts == 0).tolist()}")
        if not 0 <= self.n_input_classes <= len(labels):
            raise InputShapeError("n_input_classes out of range")
        class_of.setflags(write=False)
        object.__setattr__(self, "class_of", class_of)
        object.__setattr__(self, "class_labels", labels)

    @property
    def n_classes(self):
        return len(self.class_labels)

    @property
    def n_params(self):
        return self.class_of.shape[0]

    @property
    def sizes(self):
        return np.bincount(self.class_of, minlength=self.n_classes)

    @property
    def is_ard(self):
        return self.n_input_classes > 0

    def members(self, c):
        return np.flatnonzero(self.class_of == c)

    def expand(self, per_class):
        """Broadcast a per-class vector to one value per parameter."""
        return np.asarray(per_class, dtype=float)[self.class_of]


@dataclass(frozen=True, eq=False)
class Hyperparameters:
    """Prior precisions ``alpha`` (one per class) and likelihood scale ``beta``."""

    alpha: np.ndarray
    beta: float = 1.0

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float).reshape(-1)
        if alpha.size == 0 or not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
            raise ValueError(f"alpha must be finite and positive, got {alpha}")
        if not (np.isfinite(self.beta) and self.beta >= 0):
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", float(self.beta))


@dataclass(frozen=True)
class EnergyBreakdown:
    e_data: float
    e_weight_per_class: np.ndarray
    total: float


def default_ard_grouping(shape, feature_names):
    """One class per input feature plus hidden-bias, output-weight and output-bias classes."""
    feature_names = list(feature_names)
    if len(feature_names) != shape.n_inputs:
        raise InputShapeError(
            f"{len(feature_names)} feature names given for {shape.n_inputs} inputs"
        )
    n_in, h = shape.n_inputs, shape.n_hidden
    class_of = np.concatenate(
        [
            np.repeat(np.arange(n_in), h),
            np.full(h, n_in),
            np.full(h, n_in + 1),
            [n_in + 2],
        ]
    )
    return ArdGrouping(class_of, tuple(feature_names) + NON_INPUT_LABELS, n_input_classes=n_in)


def single_class_grouping(shape, label="all_parameters"):
    """Degenerate grouping with every parameter in class 0 (no ARD)."""
    return ArdGrouping(np.zeros(shape.n_params, dtype=np.intp), (label,), n_input_classes=0)


def _flat(params):
    if isinstance(params, MlpParameters):
        return flatten(params)
    return np.asarray(params, dtype=float)


class BnnPosterior:
    """Vectorized energy, gradient and curvature of ``M(w)`` over a fixed dataset.

    Both inference engines talk to targets through the same duck-typed
    interface: ``energy(w, alpha)``, ``gradient(w, alpha)`` and
    ``gauss_newton(w, alpha)``, all on flat vectors.
    """

    def __init__(self, shape, X, t, grouping, beta=1.0):
        X = np.ascontiguousarray(X, dtype=float)
        t = np.asarray(t, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[0] == 0:
            raise EmptyInputError("posterior needs a non-empty 2-D feature matrix")
        if X.shape[1] != shape.n_inputs or t.shape[0] != X.shape[0]:
            raise InputShapeError(f"data {X.shape}/{t.shape} does not match {shape}")
        if not np.all((t == 0) | (t == 1)):
            raise ValueError("labels must be 0 or 1")
        if grouping.n_params != shape.n_params:
            raise InputShapeError("grouping does not match the network's parameter count")
        self.shape = shape
        self.X = X
        self.t = t
        self.grouping = grouping
        self.beta = float(beta)
        self._slices = shape.slices()

    @property
    def n_params(self):
        return self.shape.n_params

    def _unpack(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.shape.n_params,):
            raise InputShapeError(f"flat vector of length {self.shape.n_params} expected")
        s_w, s_z, s_v, s_b = self._slices
        W = w[s_w].reshape(self.shape.n_inputs, self.shape.n_hidden)
        return W, w[s_z], w[s_v], w[s_b][0]

    def _forward(self, w):
        W, z, v, b = self._unpack(w)
        h = np.tanh(self.X @ W + z)
        logit = h @ v + b
        return h, v, expit(logit)

    def probabilities(self, w):
        return self._forward(w)[2]

    def data_error(self, w):
        y = np.clip(self._forward(w)[2], PROB_CLAMP, 1.0 - PROB_CLAMP)
        t = self.t
        return float(-np.sum(t * np.log(y) + (1.0 - t) * np.log1p(-y)))

    def weight_error(self, w):
        w = np.asarray(w, dtype=float)
        return 0.5 * np.bincount(self.grouping.class_of, weights=w * w,
                                 minlength=self.grouping.n_classes)

    def breakdown(self, w, alpha):
        e_d = self.data_error(w)
        e_w = self.weight_error(w)
        return EnergyBreakdown(e_d, e_w, self.beta * e_d + float(np.dot(alpha, e_w)))

    def energy(self, w, alpha):
        return self.breakdown(w, alpha).total

    def gradient(self, w, alpha):
        w = np.asarray(w, dtype=float)
        h, v, y = self._forward(w)
        r = self.beta * (y - self.t)
        da = np.outer(r, v) * (1.0 - h * h)
        grad = np.concatenate([(self.X.T @ da).ravel(), da.sum(axis=0), h.T @ r, [r.sum()]])
        return grad + self.grouping.expand(alpha) * w

    def logit_jacobian(self, w):
        """Rows are d(logit_n)/dw in flat order, shape (n_rows, n_params)."""
        h, v, _ = self._forward(w)
        da = v * (1.0 - h * h)
        n = self.X.shape[0]
        dW = (self.X[:, :, None] * da[:, None, :]).reshape(n, -1)
        return np.hstack([dW, da, h, np.ones((n, 1))])

    def gauss_newton(self, w, alpha):
        """Outer-product curvature of the data term plus the exact prior diagonal."""
        J = self.logit_jacobian(w)
        y = self.probabilities(w)
        A = (J * (self.beta * y * (1.0 - y))[:, None]).T @ J
        A[np.diag_indices_from(A)] += self.grouping.expand(alpha)
        return A


def _posterior(params, data, grouping=None, beta=1.0):
    w = _flat(params)
    n_inputs = np.asarray(data.features).shape[1]
    shape = params.shape if isinstance(params, MlpParameters) else NetworkShape(
        n_inputs, (w.size - 1) // (n_inputs + 2)
    )
    if grouping is None:
        grouping = single_class_grouping(shape)
    return BnnPosterior(shape, data.features, data.labels, grouping, beta), w


def data_error(params, data):
    """Bernoulli cross-entropy ``E_D`` summed over ``data`` (clamped probabilities)."""
    posterior, w = _posterior(params, data)
    return posterior.data_error(w)


def weight_error_per_class(params, grouping):
    """``E_Wc = 0.5 * sum of squared parameters`` for each class ``c``."""
    w = _flat(params)
    if w.shape != (grouping.n_params,):
        raise InputShapeError(
            f"grouping covers {grouping.n_params} parameters, got {w.size}"
        )
    return 0.5 * np.bincount(grouping.class_of, weights=w * w, minlength=grouping.n_classes)


def neg_log_posterior(params, data, grouping, hyper):
    """Energy breakdown with ``total = beta*E_D + sum_c alpha_c*E_Wc``."""
    posterior, w = _posterior(params, data, grouping, hyper.beta)
    return posterior.breakdown(w, hyper.alpha)


def grad_neg_log_posterior(params, data, grouping, hyper):
    """Gradient of :func:`neg_log_posterior` in canonical flat order."""
    posterior, w = _posterior(params, data, grouping, hyper.beta)
    return posterior.gradient(w, hyper.alpha)
