"""scikit-learn compatible Bayesian MLP classifiers.

Two estimators share one interface: :class:`HMCClassifier` samples the
posterior with Hamiltonian Monte Carlo and :class:`LaplaceClassifier` fits a
Gaussian approximation with evidence re-estimation. Both produce a predictive
distribution per row (:meth:`predict_distribution`) on top of the usual
``predict_proba``/``predict``, and an ARD relevance ranking when ``ard=True``.

Inputs are expected to be already scaled; compose with
:class:`ardbnn.data.MinMaxScaler` in a :class:`sklearn.pipeline.Pipeline`.
"""
import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import InputShapeError, UnsupportedModelError
from .hmc import ChainDiagnostics, HmcConfig, SampleChain, run_chain
from .laplace import EvidenceConfig, LaplaceFit, laplace_fit, sample_posterior_gaussian
from .metrics import DEFAULT_THRESHOLD, ard_relevance
from .network import DEFAULT_HIDDEN, DEFAULT_INIT_SCALE, NetworkShape, init_parameters
from .posterior import Hyperparameters, default_ard_grouping, single_class_grouping
from .data import Dataset
from .predictive import summarize


class _BayesianMLPClassifier(ClassifierMixin, BaseEstimator):
    """Shared validation and prediction plumbing."""

    def _setup(self, X, y, feature_names):
        names = feature_names
        if names is None and hasattr(X, "columns"):
            names = [str(c) for c in X.columns]
        X, y = check_X_y(X, y, dtype=float)
        self.classes_ = unique_labels(y)
        if self.classes_.size != 2:
            raise ValueError(f"binary labels required, got classes {self.classes_.tolist()}")
        t = (y == self.classes_[1]).astype(np.int8)
        self.n_features_in_ = X.shape[1]
        if names is None:
            names = [f"x{i + 1}" for i in range(X.shape[1])]
        if len(names) != X.shape[1]:
            raise InputShapeError(f"{len(names)} feature names for {X.shape[1]} columns")
        self.feature_names_ = tuple(names)
        self.shape_ = NetworkShape(X.shape[1], self.n_hidden)
        self.grouping_ = (default_ard_grouping(self.shape_, self.feature_names_) if self.ard
                          else single_class_grouping(self.shape_))
        return Dataset(X, t, self.feature_names_)

    def _check_X(self, X):
        check_is_fitted(self, "shape_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise InputShapeError(
                f"model expects {self.n_features_in_} features, got {X.shape[1]}"
            )
        return X

    def posterior_weights(self):
        """Weight draws used for prediction, shape (n_draws, n_params)."""
        raise NotImplementedError

    def predict_distribution(self, X):
        """Per-row predictive mean, std and per-draw probabilities of the positive class."""
        X = self._check_X(X)
        return summarize(self.shape_, self.posterior_weights(), X)

    def predict_proba(self, X):
        p = self.predict_distribution(X).mean
        return np.column_stack([1.0 - p, p])

    def predict(self, X, threshold=DEFAULT_THRESHOLD):
        p = self.predict_proba(X)[:, 1]
        return self.classes_[(p >= threshold).astype(int)]

    def relevance_report(self):
        """ARD relevance ranking of the input features."""
        check_is_fitted(self, "shape_")
        if not self.ard:
            raise UnsupportedModelError("relevance needs a model fitted with ard=True")
        return ard_relevance(self._alpha_source(), self.grouping_)


def _one_chain(shape, grouping, data, config, init_scale, alpha_init, seed):
    init = init_parameters(shape, seed, init_scale)
    hyper = Hyperparameters(np.full(grouping.n_classes, alpha_init))
    return run_chain(shape, grouping, data, config, init, hyper)


class HMCClassifier(_BayesianMLPClassifier):
    """Bayesian MLP classifier sampled by Hamiltonian Monte Carlo.

    Parameters
    ----------
    n_hidden : int
        Hidden tanh units.
    ard : bool
        One prior class per input feature with Gibbs-resampled precisions.
        With ``ard=False`` all parameters share one fixed precision
        ``alpha_init``.
    step_size : float or None
        Leapfrog step. ``None`` tunes it (starting at 0.01) by a pre-run and
        through burn-in; a number fixes it.
    n_leapfrog, n_samples, burn_in, thinning : int
        Trajectory length and chain bookkeeping; ``n_samples`` counts kept
        samples per chain.
    hyper_update_every : int
        Iterations between Gibbs updates of the precisions (ARD only).
    gamma_a0, gamma_b0 : float
        Shape and rate of the Gamma hyperprior on each precision.
    alpha_init : float
        Initial (or, without ARD, fixed) prior precision.
    init_scale : float
        Standard deviation of the initial weights.
    n_chains : int
        Independent chains with seeds derived from ``random_state``; their
        kept samples are concatenated in chain order.
    n_jobs : int or None
        Parallel workers for multiple chains (joblib semantics).
    random_state : int
    """

    def __init__(self, n_hidden=DEFAULT_HIDDEN, ard=True, step_size=None, n_leapfrog=50,
                 n_samples=2000, burn_in=1000, thinning=1, hyper_update_every=1,
                 gamma_a0=1.0, gamma_b0=0.1, alpha_init=1.0, init_scale=DEFAULT_INIT_SCALE,
                 n_chains=1, n_jobs=None, random_state=0):
        self.n_hidden = n_hidden
        self.ard = ard
        self.step_size = step_size
        self.n_leapfrog = n_leapfrog
        self.n_samples = n_samples
        self.burn_in = burn_in
        self.thinning = thinning
        self.hyper_update_every = hyper_update_every
        self.gamma_a0 = gamma_a0
        self.gamma_b0 = gamma_b0
        self.alpha_init = alpha_init
        self.init_scale = init_scale
        self.n_chains = n_chains
        self.n_jobs = n_jobs
        self.random_state = random_state

    def _config(self, chain):
        return HmcConfig(
            step_size=0.01 if self.step_size is None else float(self.step_size),
            n_leapfrog=int(self.n_leapfrog),
            n_samples=int(self.n_samples),
            burn_in=int(self.burn_in),
            thinning=int(self.thinning),
            seed=(int(self.random_state), chain),
            hyper_update_every=int(self.hyper_update_every),
            gamma_shape_a0=float(self.gamma_a0),
            gamma_rate_b0=float(self.gamma_b0),
            tune_step_size=self.step_size is None,
        )

    def fit(self, X, y, feature_names=None):
        data = self._setup(X, y, feature_names)
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        jobs = (
            delayed(_one_chain)(self.shape_, self.grouping_, data, self._config(k),
                                self.init_scale, self.alpha_init, (int(self.random_state), k))
            for k in range(self.n_chains)
        )
        results = Parallel(n_jobs=self.n_jobs)(jobs)
        chains = [SampleChain.from_samples(s, d, self.shape_.n_params, self.grouping_.n_classes)
                  for s, d in results]
        self.diagnostics_ = [d for _, d in results]
        self.chain_ = SampleChain(
            np.vstack([c.weights for c in chains]),
            np.vstack([c.alpha for c in chains]),
            np.concatenate([c.accepted for c in chains]),
            np.concatenate([c.hamiltonian_delta for c in chains]),
            _merge_diagnostics(self.diagnostics_),
        )
        self.chain_id_ = np.concatenate([np.full(len(c), k) for k, c in enumerate(chains)])
        return self

    def posterior_weights(self):
        check_is_fitted(self, "chain_")
        return self.chain_.weights

    def _alpha_source(self):
        return self.chain_


def _merge_diagnostics(diags):
    merged = ChainDiagnostics(
        n_proposed=sum(d.n_proposed for d in diags),
        n_accepted=sum(d.n_accepted for d in diags),
        n_divergent=sum(d.n_divergent for d in diags),
        step_size=float(np.mean([d.step_size for d in diags])),
    )
    finite = merged.n_proposed - merged.n_divergent
    if finite:
        merged.mean_abs_hamiltonian_delta = sum(
            d.mean_abs_hamiltonian_delta * (d.n_proposed - d.n_divergent)
            for d in diags if d.n_proposed > d.n_divergent
        ) / finite
    merged.all_rejected = bool(merged.n_proposed) and merged.n_accepted == 0
    return merged


class LaplaceClassifier(_BayesianMLPClassifier):
    """Bayesian MLP classifier under a Gaussian (Laplace) posterior approximation.

    Parameters
    ----------
    n_hidden : int
    ard : bool
        Re-estimate one precision per input feature by evidence maximisation.
    max_outer_loops, inner_optimizer_steps : int
        Evidence updates and MAP descent steps per update.
    learning_rate : float
        Initial trial step for the unpreconditioned descent.
    alpha_tolerance : float
        Convergence threshold on the max relative precision change.
    jitter : float
        Relative diagonal jitter used when the curvature is not positive definite.
    n_mc : int
        Gaussian draws per prediction.
    alpha_init : float
    init_scale : float
    random_state : int
        Seeds both the initial weights and the predictive draws.
    """

    def __init__(self, n_hidden=DEFAULT_HIDDEN, ard=True, max_outer_loops=100,
                 inner_optimizer_steps=100, learning_rate=1e-3, alpha_tolerance=1e-3,
                 jitter=1e-8, n_mc=500, alpha_init=1.0, init_scale=DEFAULT_INIT_SCALE,
                 random_state=0):
        self.n_hidden = n_hidden
        self.ard = ard
        self.max_outer_loops = max_outer_loops
        self.inner_optimizer_steps = inner_optimizer_steps
        self.learning_rate = learning_rate
        self.alpha_tolerance = alpha_tolerance
        self.jitter = jitter
        self.n_mc = n_mc
        self.alpha_init = alpha_init
        self.init_scale = init_scale
        self.random_state = random_state

    def fit(self, X, y, feature_names=None):
        data = self._setup(X, y, feature_names)
        config = EvidenceConfig(
            max_outer_loops=int(self.max_outer_loops),
            inner_optimizer_steps=int(self.inner_optimizer_steps),
            learning_rate=float(self.learning_rate),
            alpha_tolerance=float(self.alpha_tolerance),
            jitter=float(self.jitter),
        )
        init = init_parameters(self.shape_, int(self.random_state), self.init_scale)
        hyper = Hyperparameters(np.full(self.grouping_.n_classes, self.alpha_init))
        self.fit_ = laplace_fit(data, self.shape_, self.grouping_, config, init, hyper)
        return self

    def posterior_weights(self):
        check_is_fitted(self, "fit_")
        return sample_posterior_gaussian(self.fit_, int(self.n_mc), int(self.random_state))

    def _alpha_source(self):
        return self.fit_


__all__ = ["HMCClassifier", "LaplaceClassifier", "LaplaceFit"]
