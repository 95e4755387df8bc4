"""Single-hidden-layer MLP: parameters, flat view and forward pass.

Hidden units use ``tanh``; the single output is a logit passed through the
logistic sigmoid to give a probability of default.

The flat parameter vector has a fixed layout that persisted artifacts rely on::

    [ input_weights (row-major, one row of n_hidden per input feature) |
      hidden_biases (n_hidden) | output_weights (n_hidden) | output_bias ]
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .exceptions import InputShapeError

DEFAULT_HIDDEN = 5
DEFAULT_INIT_SCALE = 0.1
_P_LOW, _P_HIGH = np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class NetworkShape:
    """Layer sizes of an ``n_inputs -> n_hidden -> 1`` network."""

    n_inputs: int
    n_hidden: int = DEFAULT_HIDDEN

    def __post_init__(self):
        if int(self.n_inputs) < 1 or int(self.n_hidden) < 1:
            raise InputShapeError(
                f"n_inputs and n_hidden must be >= 1, got {self.n_inputs}, {self.n_hidden}"
            )
        object.__setattr__(self, "n_inputs", int(self.n_inputs))
        object.__setattr__(self, "n_hidden", int(self.n_hidden))

    @property
    def n_outputs(self):
        return 1

    @property
    def n_params(self):
        return self.n_inputs * self.n_hidden + 2 * self.n_hidden + 1

    def slices(self):
        """Return ``(input_weights, hidden_biases, output_weights, output_bias)`` slices."""
        nw = self.n_inputs * self.n_hidden
        h = self.n_hidden
        return (
            slice(0, nw),
            slice(nw, nw + h),
            slice(nw + h, nw + 2 * h),
            slice(nw + 2 * h, nw + 2 * h + 1),
        )


@dataclass(frozen=True, eq=False)
class MlpParameters:
    """Weights and biases of the network.

    Attributes
    ----------
    input_weights : ndarray, shape (n_inputs, n_hidden)
        ``input_weights[i, j]`` connects input ``i`` to hidden unit ``j``.
    hidden_biases : ndarray, shape (n_hidden,)
    output_weights : ndarray, shape (n_hidden,)
    output_bias : float
    """

    input_weights: np.ndarray
    hidden_biases: np.ndarray
    output_weights: np.ndarray
    output_bias: float

    def __post_init__(self):
        w = np.array(self.input_weights, dtype=float, ndmin=2)
        z = np.array(self.hidden_biases, dtype=float).reshape(-1)
        v = np.array(self.output_weights, dtype=float).reshape(-1)
        if w.ndim != 2 or z.shape[0] != w.shape[1] or v.shape[0] != w.shape[1]:
            raise InputShapeError(
                f"inconsistent parameter shapes: W{w.shape}, Z{z.shape}, v{v.shape}"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(z)) and np.all(np.isfinite(v))
                and np.isfinite(float(self.output_bias))):
            raise ValueError("parameters must be finite")
        for arr in (w, z, v):
            arr.setflags(write=False)
        object.__setattr__(self, "input_weights", w)
        object.__setattr__(self, "hidden_biases", z)
        object.__setattr__(self, "output_weights", v)
        object.__setattr__(self, "output_bias", float(self.output_bias))

    @property
    def shape(self):
        return NetworkShape(*self.input_weights.shape)


def _check_inputs(params, x):
    x = np.asarray(x, dtype=float)
    if x.ndim not in (1, 2) or x.shape[-1] != params.input_weights.shape[0]:
        raise InputShapeError(
            f"expected inputs with {params.input_weights.shape[0]} features, got shape {x.shape}"
        )
    return x


def hidden_activations(params, x):
    """tanh activations of the hidden layer for one row or a batch of rows."""
    x = _check_inputs(params, x)
    return np.tanh(params.hidden_biases + x @ params.input_weights)


def forward_logit(params, x):
    """Network output before the sigmoid link.

    ``x`` may be a single row (returns a float) or a 2-D batch (returns an
    array with one logit per row).
    """
    h = hidden_activations(params, x)
    out = params.output_bias + h @ params.output_weights
    return float(out) if np.ndim(out) == 0 else out


def forward_probability(params, x):
    """Predicted probability of the positive class, ``sigmoid(forward_logit)``.

    Saturated logits are kept strictly inside (0, 1) by clipping to the
    neighbouring representable doubles.
    """
    out = np.clip(expit(forward_logit(params, x)), _P_LOW, _P_HIGH)
    return float(out) if np.ndim(out) == 0 else out


def flatten(params):
    """Concatenate the parameters into the canonical flat vector."""
    return np.concatenate(
        [
            params.input_weights.ravel(),
            params.hidden_biases,
            params.output_weights,
            [params.output_bias],
        ]
    )


def unflatten(shape, v):
    """Inverse of :func:`flatten`."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != shape.n_params:
        raise InputShapeError(
            f"flat vector of length {shape.n_params} expected for {shape}, got shape {v.shape}"
        )
    s_w, s_z, s_v, s_b = shape.slices()
    return MlpParameters(
        input_weights=v[s_w].reshape(shape.n_inputs, shape.n_hidden),
        hidden_biases=v[s_z],
        output_weights=v[s_v],
        output_bias=v[s_b][0],
    )


def init_parameters(shape, seed, scale=DEFAULT_INIT_SCALE):
    """Draw every parameter i.i.d. from ``N(0, scale**2)``, reproducibly per seed."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    rng = np.random.default_rng(seed)
    return unflatten(shape, scale * rng.standard_normal(shape.n_params))


def batch_forward_logits(shape, weight_rows, X):
    """Logits for many flat weight vectors at once.

    Parameters
    ----------
    weight_rows : ndarray, shape (n_samples, n_params)
    X : ndarray, shape (n_rows, n_inputs)

    Returns
    -------
    ndarray, shape (n_samples, n_rows)
    """
    weight_rows = np.atleast_2d(np.asarray(weight_rows, dtype=float))
    X = np.asarray(X, dtype=float)
    if weight_rows.shape[1] != shape.n_params or X.ndim != 2 or X.shape[1] != shape.n_inputs:
        raise InputShapeError(
            f"weights {weight_rows.shape} / inputs {X.shape} do not match {shape}"
        )
    s_w, s_z, s_v, s_b = shape.slices()
    W = weight_rows[:, s_w].reshape(-1, shape.n_inputs, shape.n_hidden)
    # (S, N, H)
    H = np.tanh(np.einsum("nd,sdh->snh", X, W) + weight_rows[:, None, s_z])
    return np.einsum("snh,sh->sn", H, weight_rows[:, s_v]) + weight_rows[:, s_b]
