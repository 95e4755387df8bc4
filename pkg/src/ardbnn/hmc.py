"""Hamiltonian Monte Carlo over MLP weights with Gibbs-resampled ARD precisions.

Each iteration draws a fresh momentum ``p ~ N(0, I)``, integrates Hamilton's
equations with the leapfrog scheme, and applies a Metropolis correction.
Every ``hyper_update_every`` iterations the prior precisions are redrawn from
their conjugate Gamma conditionals given the current weights.

Targets are given as two callables ``energy(w, alpha)`` and
``grad(w, alpha)``; :class:`ardbnn.posterior.BnnPosterior` provides both.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DivergenceError, EmptyInputError
from .posterior import BnnPosterior, Hyperparameters
from .predictive import summarize
from .network import flatten, MlpParameters

logger = logging.getLogger(__name__)

TARGET_ACCEPTANCE = (0.65, 0.85)
_MIN_BURN_IN_FACTOR = 1.05


@dataclass(frozen=True)
class HmcConfig:
    """Sampler settings. The mass matrix is always the identity.

    With ``tune_step_size`` on, ``step_size`` is only the starting point of a
    doubling/halving pre-run that targets :data:`TARGET_ACCEPTANCE`; the same
    batch rule (with a factor of sqrt(2)) keeps running through burn-in.

    Each trajectory uses ``step_size * U(1 - step_jitter, 1 + step_jitter)``;
    a fixed ``eps * n_leapfrog`` can resonate with the period of a
    near-Gaussian posterior and leave the chain almost stationary.
    """

    step_size: float = 0.01
    n_leapfrog: int = 50
    n_samples: int = 2000
    burn_in: int = 1000
    thinning: int = 1
    seed: int = 0
    hyper_update_every: int = 1
    gamma_shape_a0: float = 1.0
    gamma_rate_b0: float = 0.1
    tune_step_size: bool = True
    step_jitter: float = 0.2
    tune_batch: int = 20
    tune_max_rounds: int = 30

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.n_leapfrog < 1 or self.thinning < 1 or self.hyper_update_every < 1:
            raise ValueError("n_leapfrog, thinning and hyper_update_every must be >= 1")
        if self.n_samples < 0 or self.burn_in < 0:
            raise ValueError("n_samples and burn_in must be >= 0")
        if not (self.gamma_shape_a0 > 0 and self.gamma_rate_b0 > 0):
            raise ValueError("Gamma prior parameters must be positive")
        if not 0 <= self.step_jitter < 1:
            raise ValueError("step_jitter must lie in [0, 1)")


@dataclass(frozen=True, eq=False)
class PosteriorSample:
    weights: np.ndarray
    alpha: np.ndarray
    accepted: bool
    hamiltonian_delta: float


@dataclass
class ChainDiagnostics:
    n_proposed: int = 0
    n_accepted: int = 0
    n_divergent: int = 0
    mean_abs_hamiltonian_delta: float = 0.0
    step_size: float = float("nan")
    all_rejected: bool = False

    @property
    def acceptance_rate(self):
        return self.n_accepted / self.n_proposed if self.n_proposed else 0.0

    def as_dict(self):
        return {
            "acceptance_rate": self.acceptance_rate,
            "n_proposed": self.n_proposed,
            "n_accepted": self.n_accepted,
            "n_divergent": self.n_divergent,
            "mean_abs_hamiltonian_delta": self.mean_abs_hamiltonian_delta,
            "step_size": self.step_size,
            "all_rejected": self.all_rejected,
        }


@dataclass(eq=False)
class SampleChain:
    """Kept samples stacked into arrays.

    Attributes
    ----------
    weights : ndarray, shape (n_kept, n_params)
    alpha : ndarray, shape (n_kept, n_classes)
    """

    weights: np.ndarray
    alpha: np.ndarray
    accepted: np.ndarray
    hamiltonian_delta: np.ndarray
    diagnostics: ChainDiagnostics = field(default_factory=ChainDiagnostics)

    @classmethod
    def from_samples(cls, samples, diagnostics, n_params=0, n_classes=0):
        if not samples:
            return cls(np.empty((0, n_params)), np.empty((0, n_classes)),
                       np.empty(0, dtype=bool), np.empty(0), diagnostics)
        return cls(
            np.array([s.weights for s in samples]),
            np.array([s.alpha for s in samples]),
            np.array([s.accepted for s in samples]),
            np.array([s.hamiltonian_delta for s in samples]),
            diagnostics,
        )

    def __len__(self):
        return self.weights.shape[0]

    @property
    def samples(self):
        return [
            PosteriorSample(w, a, bool(acc), float(dh))
            for w, a, acc, dh in zip(self.weights, self.alpha, self.accepted,
                                     self.hamiltonian_delta)
        ]


def kinetic_energy(p):
    """``K(p) = p.p / 2`` for identity mass."""
    p = np.asarray(p, dtype=float)
    return 0.5 * float(np.dot(p, p))


def hamiltonian(w, p, energy):
    """``H(w, p) = M(w) + K(p)``; ``energy`` maps a flat vector to ``M(w)``."""
    return energy(w) + kinetic_energy(p)


def leapfrog(w, p, eps, n_steps, grad):
    """Integrate ``n_steps`` leapfrog steps of size ``eps``.

    Interior half-steps of the momentum are fused into full steps.

    Raises
    ------
    DivergenceError
        If the gradient becomes non-finite; ``step`` is the failing step index.
    """
    if not eps > 0 or n_steps < 1:
        raise ValueError("leapfrog needs eps > 0 and n_steps >= 1")
    w = np.array(w, dtype=float)
    p = np.array(p, dtype=float)
    g = grad(w)
    if not np.all(np.isfinite(g)):
        raise DivergenceError(0)
    p -= 0.5 * eps * g
    for step in range(n_steps):
        w += eps * p
        g = grad(w)
        if not np.all(np.isfinite(g)):
            raise DivergenceError(step)
        if step < n_steps - 1:
            p -= eps * g
    p -= 0.5 * eps * g
    return w, p


def metropolis_accept(h_current, h_proposed, rng):
    """Accept with probability ``min(1, exp(h_current - h_proposed))``.

    Non-finite proposals are rejected. No random number is consumed when the
    energy does not increase.
    """
    if not np.isfinite(h_proposed):
        return False
    delta = h_current - h_proposed
    if delta >= 0:
        return True
    return bool(rng.random() < math.exp(delta))


def gibbs_update_alpha(w, grouping, a0, b0, rng):
    """Draw ``alpha_c ~ Gamma(a0 + n_c/2, rate=b0 + E_Wc)`` for every class."""
    w = np.asarray(w, dtype=float)
    e_w = 0.5 * np.bincount(grouping.class_of, weights=w * w, minlength=grouping.n_classes)
    shape = a0 + 0.5 * grouping.sizes
    rate = b0 + e_w
    return rng.gamma(shape, 1.0 / rate)


class _Stepper:
    """One HMC transition plus bookkeeping; shared by tuning and sampling."""

    def __init__(self, energy, grad, n_leapfrog, rng, jitter=0.0):
        self.energy = energy
        self.grad = grad
        self.n_leapfrog = n_leapfrog
        self.rng = rng
        self.jitter = jitter

    def step(self, w, m_current, alpha, eps):
        if self.jitter:
            eps *= 1.0 + self.jitter * (2.0 * self.rng.random() - 1.0)
        p0 = self.rng.standard_normal(w.shape[0])
        h0 = m_current + kinetic_energy(p0)
        divergent = False
        try:
            w_new, p_new = leapfrog(w, p0, eps, self.n_leapfrog,
                                    lambda x: self.grad(x, alpha))
            with np.errstate(over="ignore", invalid="ignore"):
                m_new = self.energy(w_new, alpha)
            h1 = m_new + kinetic_energy(p_new)
        except DivergenceError:
            divergent = True
            h1 = math.inf
        if not np.isfinite(h1):
            divergent = True
        if metropolis_accept(h0, h1, self.rng):
            return w_new, m_new, True, h1 - h0, divergent
        return w, m_current, False, h1 - h0, divergent


def _adjust(eps, rate, factor):
    lo, hi = TARGET_ACCEPTANCE
    if rate < lo:
        return eps / factor, -1
    if rate > hi:
        return eps * factor, 1
    return eps, 0


def tune_step_size(energy, grad, w, alpha, config, rng, grouping=None, update_alpha=False):
    """Doubling/halving pre-run for the step size.

    Runs batches of ``config.tune_batch`` transitions. The step size is halved
    when the batch acceptance falls below :data:`TARGET_ACCEPTANCE` and
    doubled above it; the factor shrinks to its square root whenever the
    direction reverses. Stops at the first in-band batch.

    Returns
    -------
    eps, w, alpha
        The tuned step size and the chain state after the pre-run.
    """
    eps = config.step_size
    factor = 2.0
    last_direction = 0
    stepper = _Stepper(energy, grad, config.n_leapfrog, rng, config.step_jitter)
    m = energy(w, alpha)
    it = 0
    for _ in range(config.tune_max_rounds):
        accepted = 0
        for _ in range(config.tune_batch):
            w, m, acc, _, _ = stepper.step(w, m, alpha, eps)
            accepted += acc
            it += 1
            if update_alpha and it % config.hyper_update_every == 0:
                alpha = gibbs_update_alpha(w, grouping, config.gamma_shape_a0,
                                           config.gamma_rate_b0, rng)
                m = energy(w, alpha)
        rate = accepted / config.tune_batch
        logger.debug("tuning eps=%.3g acceptance=%.2f", eps, rate)
        new_eps, direction = _adjust(eps, rate, factor)
        if direction == 0:
            break
        if last_direction and direction != last_direction:
            factor = math.sqrt(factor)
            new_eps, _ = _adjust(eps, rate, factor)
        last_direction = direction
        eps = new_eps
    return eps, w, alpha


def sample_chain(energy, grad, w0, config, alpha0=None, grouping=None, update_alpha=False):
    """Run HMC on an arbitrary target.

    Parameters
    ----------
    energy, grad : callable
        ``energy(w, alpha) -> float`` and ``grad(w, alpha) -> ndarray``.
    w0 : array_like
        Starting point.
    config : HmcConfig
    alpha0 : array_like, optional
        Initial precisions passed through to the target.
    grouping : ArdGrouping, optional
        Required when ``update_alpha`` is true.
    update_alpha : bool
        Gibbs-resample ``alpha`` every ``config.hyper_update_every`` iterations.

    Returns
    -------
    samples : list of PosteriorSample
    diagnostics : ChainDiagnostics
    """
    if update_alpha and grouping is None:
        raise ValueError("alpha updates need a grouping")
    rng = np.random.default_rng(config.seed)
    w = np.array(w0, dtype=float)
    alpha = np.array(alpha0 if alpha0 is not None else [1.0], dtype=float)

    eps = config.step_size
    if config.tune_step_size:
        eps, w, alpha = tune_step_size(energy, grad, w, alpha, config, rng,
                                       grouping, update_alpha)
    stepper = _Stepper(energy, grad, config.n_leapfrog, rng, config.step_jitter)
    diag = ChainDiagnostics(step_size=eps)
    m = energy(w, alpha)
    abs_dh = 0.0
    samples = []
    batch_prob = 0.0
    factor, last_direction = math.sqrt(2.0), 0
    n_iter = config.burn_in + config.n_samples * config.thinning
    for it in range(1, n_iter + 1):
        w, m, acc, dh, divergent = stepper.step(w, m, alpha, eps)
        if config.tune_step_size and it <= config.burn_in:
            # keep adapting through burn-in on the mean acceptance probability
            # (less noisy than accept/reject counts); the factor shrinks on
            # every reversal and the step size is frozen after burn-in
            batch_prob += math.exp(min(0.0, -dh)) if np.isfinite(dh) else 0.0
            if it % config.tune_batch == 0:
                new_eps, direction = _adjust(eps, batch_prob / config.tune_batch, factor)
                if direction and last_direction and direction != last_direction:
                    factor = max(math.sqrt(factor), _MIN_BURN_IN_FACTOR)
                    new_eps = _adjust(eps, batch_prob / config.tune_batch, factor)[0]
                if direction:
                    last_direction = direction
                eps = new_eps
                batch_prob = 0.0
                diag.step_size = eps
        diag.n_proposed += 1
        diag.n_accepted += acc
        diag.n_divergent += divergent
        if np.isfinite(dh):
            abs_dh += abs(dh)
        if update_alpha and it % config.hyper_update_every == 0:
            alpha = gibbs_update_alpha(w, grouping, config.gamma_shape_a0,
                                       config.gamma_rate_b0, rng)
            m = energy(w, alpha)
        if it > config.burn_in and (it - config.burn_in) % config.thinning == 0:
            samples.append(PosteriorSample(w.copy(), alpha.copy(), acc, float(dh)))
        if it % 250 == 0:
            logger.info("iteration %d/%d: acceptance %.3f, step size %.3g",
                        it, n_iter, diag.acceptance_rate, eps)
    finite = diag.n_proposed - diag.n_divergent
    diag.mean_abs_hamiltonian_delta = abs_dh / finite if finite else float("nan")
    if diag.n_proposed and diag.n_accepted == 0:
        diag.all_rejected = True
        warnings.warn("HMC chain rejected every proposal; samples equal the initial state",
                      RuntimeWarning, stacklevel=2)
    return samples, diag


def run_chain(shape, grouping, data, config, init, hyper=None, update_alpha=None):
    """Sample the BNN posterior for ``data`` with HMC.

    ``update_alpha`` defaults to ``grouping.is_ard``: the non-ARD baseline
    keeps its single precision fixed.
    """
    if np.asarray(data.features).shape[0] == 0:
        raise EmptyInputError("cannot sample a posterior without data")
    if hyper is None:
        hyper = Hyperparameters(np.ones(grouping.n_classes))
    if update_alpha is None:
        update_alpha = grouping.is_ard
    target = BnnPosterior(shape, data.features, data.labels, grouping, hyper.beta)
    w0 = flatten(init) if isinstance(init, MlpParameters) else np.asarray(init, dtype=float)
    return sample_chain(target.energy, target.gradient, w0, config, hyper.alpha,
                        grouping, update_alpha)


def predict_mc(samples, shape, x):
    """Predictive mean/std of the default probability across posterior samples."""
    if isinstance(samples, SampleChain):
        weights = samples.weights
    else:
        weights = [s.weights if isinstance(s, PosteriorSample) else s for s in samples]
    if len(weights) == 0:
        raise EmptyInputError("predict_mc needs at least one sample")
    return summarize(shape, np.asarray(weights), x)


def effective_sample_size(trace):
    """ESS of a 1-D trace using Geyer's initial positive sequence."""
    x = np.asarray(trace, dtype=float)
    n = x.shape[0]
    if n < 4 or np.var(x) == 0:
        return float(n)
    x = x - x.mean()
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * np.var(x))
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(n / max(tau, 1e-12))
