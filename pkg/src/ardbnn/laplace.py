"""Gaussian (Laplace) approximation with evidence re-estimation of ARD precisions.

The posterior is approximated by ``N(w_MP, A^-1)`` where ``w_MP`` minimises
``M(w)`` and ``A`` is its curvature there. Precisions are re-estimated with
the evidence-framework fixed point::

    gamma_c = n_c - alpha_c * sum_{i in c} (A^-1)_ii
    alpha_c = gamma_c / (2 * E_Wc(w_MP))

alternating with a fresh MAP search until the relative change in ``alpha``
drops below tolerance.

Targets expose ``energy(w, alpha)``, ``gradient(w, alpha)`` and
``gauss_newton(w, alpha)`` (see :class:`ardbnn.posterior.BnnPosterior`).
"""
import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .exceptions import InputShapeError, NumericalError
from .network import MlpParameters, flatten, init_parameters
from .posterior import BnnPosterior, Hyperparameters
from .predictive import summarize

logger = logging.getLogger(__name__)

ALPHA_MAX = 1e6
ALPHA_MIN = 1e-8
WEIGHT_ENERGY_FLOOR = 1e-12


@dataclass(frozen=True)
class EvidenceConfig:
    max_outer_loops: int = 100
    inner_optimizer_steps: int = 100
    learning_rate: float = 1e-3
    alpha_tolerance: float = 1e-3
    jitter: float = 1e-8
    grad_tolerance: float = 1e-9
    preconditioner: str = "gauss_newton"
    reestimate: str = "inputs"
    prune_threshold: float = 1e4

    def __post_init__(self):
        if self.max_outer_loops < 1 or self.inner_optimizer_steps < 1:
            raise ValueError("max_outer_loops and inner_optimizer_steps must be >= 1")
        if not (self.learning_rate > 0 and self.alpha_tolerance > 0):
            raise ValueError("learning_rate and alpha_tolerance must be positive")
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")
        if self.preconditioner not in ("gauss_newton", "none"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.reestimate not in ("inputs", "all"):
            raise ValueError(f"reestimate must be 'inputs' or 'all', got {self.reestimate!r}")


@dataclass(frozen=True, eq=False)
class MapResult:
    w: np.ndarray
    energy: float
    grad_norm: float
    n_steps: int
    trace: np.ndarray


@dataclass(frozen=True, eq=False)
class LaplaceFit:
    """Converged Gaussian approximation.

    Attributes
    ----------
    w_mp : ndarray
        Most probable weights.
    curvature : ndarray
        Positive definite precision matrix ``A`` (jitter already added).
    hyper : Hyperparameters
        Precisions used for ``w_mp`` and ``curvature``.
    gamma_per_class : ndarray
        Well-determined parameter counts from the last evidence update.
    """

    w_mp: np.ndarray
    curvature: np.ndarray
    hyper: Hyperparameters
    grad_norm_at_mp: float
    gamma_per_class: np.ndarray
    n_outer_loops: int = 0
    converged: bool = True


def map_estimate(target, w0, alpha, config):
    """Descent with Armijo backtracking on ``target.energy``.

    With ``config.preconditioner == "gauss_newton"`` the search direction is
    ``-A^-1 g`` for the target's Gauss-Newton curvature ``A`` and the trial
    step starts at 1 every iteration. With ``"none"`` the direction is the
    negative gradient, the trial step starts at ``config.learning_rate`` and
    doubles after each accepted step.

    Returns
    -------
    MapResult
        ``trace`` holds the best-so-far energy after every accepted step.
    """
    newton = config.preconditioner == "gauss_newton"
    w = np.array(w0, dtype=float)
    f = target.energy(w, alpha)
    if not np.isfinite(f):
        raise ValueError("energy is not finite at the initial point")
    g = target.gradient(w, alpha)
    step = 1.0 if newton else config.learning_rate
    trace = [f]
    k = 0
    for k in range(1, config.inner_optimizer_steps + 1):
        if np.linalg.norm(g) <= config.grad_tolerance:
            break
        if newton:
            L = cholesky_with_jitter(target.gauss_newton(w, alpha), rel_start=config.jitter)[0]
            d = -linalg.cho_solve((L, True), g)
            step = 1.0
        else:
            d = -g
        slope = float(np.dot(g, d))
        while True:
            w_new = w + step * d
            with np.errstate(over="ignore", invalid="ignore"):
                f_new = target.energy(w_new, alpha)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * step * slope:
                break
            step *= 0.5
            if step < 1e-30:
                break
        if step < 1e-30 or f_new >= f:
            break
        w, f = w_new, f_new
        g = target.gradient(w, alpha)
        trace.append(f)
        if not newton:
            step *= 2.0
    return MapResult(w, f, float(np.linalg.norm(g)), k, np.minimum.accumulate(trace))


def cholesky_with_jitter(A, rel_start=1e-8, rel_max=1e-2):
    """Lower Cholesky factor of ``A``, adding diagonal jitter if needed.

    Jitter starts at ``rel_start * mean(diag A)`` and grows tenfold up to
    ``rel_max * mean(diag A)``.

    Returns
    -------
    L, A_used, jitter
    """
    A = 0.5 * (A + A.T)
    try:
        return linalg.cholesky(A, lower=True), A, 0.0
    except linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(A)))
    if not scale > 0:
        scale = 1.0
    jitter = max(rel_start, 1e-16) * scale
    while jitter <= rel_max * scale * (1 + 1e-12):
        A_j = A + jitter * np.eye(A.shape[0])
        try:
            return linalg.cholesky(A_j, lower=True), A_j, jitter
        except linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError("curvature matrix is not positive definite even after jitter")


def curvature_at(target, w, alpha, mode="gauss_newton", jitter=1e-8, ensure_pd=True):
    """Curvature ``A`` of ``M`` at ``w``.

    ``mode="gauss_newton"`` uses the target's outer-product approximation;
    ``mode="exact"`` differentiates the gradient by central differences and
    is meant as a check. The result is symmetrised and, with ``ensure_pd``,
    jittered until a Cholesky factorization succeeds.
    """
    w = np.asarray(w, dtype=float)
    if mode == "gauss_newton":
        A = np.array(target.gauss_newton(w, alpha), dtype=float)
    elif mode == "exact":
        n = w.shape[0]
        A = np.empty((n, n))
        for i in range(n):
            h = 1e-5 * max(1.0, abs(w[i]))
            e = np.zeros(n)
            e[i] = h
            A[:, i] = (target.gradient(w + e, alpha) - target.gradient(w - e, alpha)) / (2 * h)
    else:
        raise ValueError(f"unknown curvature mode {mode!r}")
    A = 0.5 * (A + A.T)
    if ensure_pd:
        A = cholesky_with_jitter(A, rel_start=jitter)[1]
    return A


def evidence_update_alpha(w_mp, A, grouping, alpha, alpha_max=ALPHA_MAX):
    """One evidence fixed-point update of the per-class precisions.

    Returns
    -------
    alpha_new : ndarray
    gamma : ndarray
        Effective number of well-determined parameters per class, in ``[0, n_c]``.
    """
    w_mp = np.asarray(w_mp, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if A.shape != (w_mp.size, w_mp.size) or grouping.n_params != w_mp.size:
        raise InputShapeError("curvature, weights and grouping disagree in size")
    try:
        factor = linalg.cho_factor(A, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError("curvature is not positive definite") from exc
    cov_diag = np.diag(linalg.cho_solve(factor, np.eye(w_mp.size)))
    sizes = grouping.sizes
    trace_c = np.bincount(grouping.class_of, weights=cov_diag, minlength=grouping.n_classes)
    gamma = np.clip(sizes - alpha * trace_c, 0.0, sizes)
    e_w = 0.5 * np.bincount(grouping.class_of, weights=w_mp * w_mp,
                            minlength=grouping.n_classes)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha_new = np.where(e_w < WEIGHT_ENERGY_FLOOR, alpha_max, gamma / (2.0 * e_w))
    return np.clip(alpha_new, ALPHA_MIN, alpha_max), gamma


def evidence_fit(target, w0, grouping, alpha0, config):
    """Alternate MAP search, curvature and evidence updates until ``alpha`` settles.

    Only the per-input classes are re-estimated unless
    ``config.reestimate == "all"``; the output-layer precisions otherwise keep
    their initial values (re-estimating them lets the output weights grow
    without bound on saturated networks). Classes whose precision passes
    ``config.prune_threshold`` are pinned at :data:`ALPHA_MAX` and drop out
    of the convergence test.

    The returned fit is always evaluated at the final ``alpha``: after the
    loop one more MAP search and curvature evaluation are run with it.
    """
    alpha = np.array(alpha0, dtype=float)
    w = np.array(w0, dtype=float)
    gamma = np.zeros(grouping.n_classes)
    if config.reestimate == "all" or not grouping.is_ard:
        free = np.ones(grouping.n_classes, dtype=bool)
    else:
        free = np.arange(grouping.n_classes) < grouping.n_input_classes
    converged = False
    loops = 0
    for loops in range(1, config.max_outer_loops + 1):
        res = map_estimate(target, w, alpha, config)
        w = res.w
        A = curvature_at(target, w, alpha, jitter=config.jitter)
        alpha_new, gamma = evidence_update_alpha(w, A, grouping, alpha)
        alpha_new = np.where(free, alpha_new, alpha)
        alpha_new[alpha_new >= config.prune_threshold] = ALPHA_MAX
        active = alpha < ALPHA_MAX
        change = float(np.max(np.abs(alpha_new - alpha)[active] / alpha[active], initial=0.0))
        logger.info("evidence loop %d: energy=%.6g max rel alpha change=%.3g",
                    loops, res.energy, change)
        alpha = alpha_new
        if change < config.alpha_tolerance:
            converged = True
            break
    res = map_estimate(target, w, alpha, config)
    A = curvature_at(target, res.w, alpha, jitter=config.jitter)
    if not converged:
        warnings.warn(
            f"evidence updates did not converge in {config.max_outer_loops} loops",
            RuntimeWarning, stacklevel=2,
        )
    return LaplaceFit(res.w, A, Hyperparameters(alpha, getattr(target, "beta", 1.0)),
                      res.grad_norm, gamma, loops, converged)


def laplace_fit(data, shape, grouping, config, init=None, hyper=None, seed=0):
    """Fit the Gaussian approximation of the BNN posterior on ``data``."""
    if hyper is None:
        hyper = Hyperparameters(np.ones(grouping.n_classes))
    if init is None:
        init = init_parameters(shape, seed)
    w0 = flatten(init) if isinstance(init, MlpParameters) else np.asarray(init, dtype=float)
    target = BnnPosterior(shape, data.features, data.labels, grouping, hyper.beta)
    return evidence_fit(target, w0, grouping, hyper.alpha, config)


def sample_posterior_gaussian(fit, n, seed):
    """Draw ``n`` weight vectors from ``N(w_MP, A^-1)``; returns shape (n, n_params)."""
    try:
        L = linalg.cholesky(0.5 * (fit.curvature + fit.curvature.T), lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError("curvature is not positive definite") from exc
    z = np.random.default_rng(seed).standard_normal((fit.w_mp.size, n))
    return fit.w_mp + linalg.solve_triangular(L.T, z, lower=False).T


def predict_gaussian(fit, shape, x, n_mc=500, seed=0):
    """Monte Carlo predictive summary over the Gaussian posterior."""
    return summarize(shape, sample_posterior_gaussian(fit, n_mc, seed), x)
