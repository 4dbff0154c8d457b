#!/usr/bin/env python3
"""mogp

Co-regionalized multi-output Gaussian-process regression over RSSI
measurements of m APs.

The covariance between output ``a`` at ``x`` and output ``b`` at ``x'`` is
``k_s(x, x') * B[a, b]`` with a squared-exponential spatial kernel ``k_s``
and ``B = A A^T + diag(kappa)``. Observations carry i.i.d. Gaussian noise of
variance ``noise_variance``.

Two solvers share one interface:

    * a Kronecker eigen-solver, used when every training location observed
      every AP exactly once, costing O(gamma^3 + m^3 + gamma^2 m);
    * a dense Cholesky solver over the observed (location, output) pairs,
      used whenever some APs were not heard at some locations.

Both return the same posterior, likelihood and likelihood gradient.
"""
import math, logging
from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np
import yaml
from scipy.linalg import cho_factor, cho_solve, solve_triangular, LinAlgError
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from mgprl.core import ScalarField
from mgprl.exceptions import (DegenerateDataError, FactorizationError, InvalidParameterError,
                              InvalidQueryError, UnknownAccessPointError)

log = logging.getLogger(__name__)

MODEL_FORMAT = "mgprl-model"
MODEL_VERSION = 1

JITTER_START = 1e-8
JITTER_MAX = 1e-4

_LOG_2PI = math.log(2.0 * math.pi)


class FieldModel(Protocol):
    """Anything that predicts per-AP RSSI mean and variance."""
    ap_ids: tuple

    def predict(self, queries, ap_id):
        ...


@dataclass(frozen=True)
class SeKernelParams:
    """Squared-exponential kernel parameters."""
    signal_variance: float = 1.0
    length_scale: float = 1.0

    def __post_init__(self):
        if not (self.signal_variance > 0 and self.length_scale > 0):
            raise InvalidParameterError("SE kernel parameters must be strictly positive")


@dataclass(frozen=True, eq=False)
class Coregionalization:
    """Cross-output covariance ``B = factor @ factor.T + diag(diag)``."""
    factor: np.ndarray
    diag: np.ndarray

    def __post_init__(self):
        factor = np.array(self.factor, dtype=float, ndmin=2)
        diag = np.array(self.diag, dtype=float, ndmin=1)
        if factor.shape[0] != diag.shape[0]:
            raise InvalidParameterError("factor has {0} rows for {1} outputs".format(factor.shape[0], diag.shape[0]))
        if np.any(diag < 0):
            raise InvalidParameterError("coregionalization diagonal must be nonnegative")
        factor.setflags(write=False)
        diag.setflags(write=False)
        object.__setattr__(self, "factor", factor)
        object.__setattr__(self, "diag", diag)

    @property
    def rank(self):
        return self.factor.shape[1]

    @property
    def outputs(self):
        return self.factor.shape[0]

    def matrix(self):
        """numpy.ndarray: the PSD matrix B."""
        return self.factor @ self.factor.T + np.diag(self.diag)

    def correlation(self, a, b):
        """float: correlation coefficient between outputs a and b implied by B."""
        mat = self.matrix()
        return float(mat[a, b] / math.sqrt(mat[a, a] * mat[b, b]))


@dataclass(frozen=True)
class FitOptions:
    """Optimizer settings for :func:`fit` and :func:`update`.

    ``scale_bound`` caps the output scale: every ``kappa_j`` and every squared
    entry of row ``j`` of ``A`` stays below ``scale_bound`` times the sample
    variance of output ``j`` (at least 1 dB^2). ``noise_variance_bounds[0]``
    is the noise floor in dB^2.
    """
    rank: int = 1
    restarts: int = 3
    max_iter: int = 200
    refit_every: int = 5
    optimize: bool = True
    seed: int = 0
    length_scale_bounds: tuple = (0.05, 100.0)
    noise_variance_bounds: tuple = (1e-2, 1e4)
    diag_bounds: tuple = (1e-8, 1e6)
    scale_bound: float = 4.0

    def __post_init__(self):
        if not 0 < self.noise_variance_bounds[0] < self.noise_variance_bounds[1]:
            raise InvalidParameterError("noise variance bounds must satisfy 0 < low < high")
        if not self.scale_bound > 0:
            raise InvalidParameterError("scale bound must be > 0")


@dataclass(frozen=True, eq=False)
class Hyperparameters:
    """A full hyperparameter set, used to seed or pin a fit."""
    kernel: SeKernelParams
    coreg: Coregionalization
    noise_variance: float


def kernel_eval(params, x, x_prime):
    """Squared-exponential kernel between two points.

    Args:
        params (:obj:`SeKernelParams`): kernel parameters.
        x: first point.
        x_prime: second point.

    Returns:
        float. ``signal_variance * exp(-|x - x'|^2 / (2 l^2))``.
    """
    diff = np.asarray(x, dtype=float) - np.asarray(x_prime, dtype=float)
    return float(params.signal_variance * math.exp(-0.5 * float(diff @ diff) / params.length_scale ** 2))


def _sq_dists(a, b):
    return cdist(a, b, "sqeuclidean")


def _se(sq, params):
    return params.signal_variance * np.exp(-0.5 * sq / params.length_scale ** 2)


def _cholesky_with_jitter(mat):
    """Cholesky factor, escalating diagonal jitter on failure.

    Returns:
        tuple. (cho_factor result, jitter that was added)

    Raises:
        FactorizationError: when even the largest jitter does not help.
    """
    try:
        return cho_factor(mat, lower=True), 0.0
    except LinAlgError:
        pass
    jitter = JITTER_START
    while jitter <= JITTER_MAX:
        try:
            factor = cho_factor(mat + jitter * np.eye(mat.shape[0]), lower=True)
            log.warning("Covariance needed jitter {0:g} to factorize".format(jitter))
            return factor, jitter
        except LinAlgError:
            jitter *= 10.0
    raise FactorizationError("covariance is not positive definite after jitter {0:g}".format(JITTER_MAX))


@dataclass(frozen=True, eq=False)
class _Observations:
    """Stacked observations: one row per (location, output) measurement."""
    inputs: np.ndarray
    outputs: np.ndarray
    values: np.ndarray
    m: int

    def layout(self):
        """Detects a complete grid of observations.

        Returns:
            tuple. (unique locations, gamma x m value matrix) when every
            location observed each output exactly once, else None.
        """
        locs, inverse = np.unique(self.inputs, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).ravel()
        gamma = locs.shape[0]
        if gamma * self.m != self.values.shape[0]:
            return None
        counts = np.zeros((gamma, self.m), dtype=int)
        np.add.at(counts, (inverse, self.outputs), 1)
        if not np.all(counts == 1):
            return None
        mat = np.empty((gamma, self.m))
        mat[inverse, self.outputs] = self.values
        return locs, mat


class _DenseSolver(object):
    """Cholesky solver over the observed (location, output) pairs."""
    kind = "dense"

    def __init__(self, obs, resid, kernel, bmat, noise_variance):
        self.obs = obs
        self.kernel = kernel
        self.bmat = bmat
        self.noise_variance = noise_variance
        self.sq = _sq_dists(obs.inputs, obs.inputs)
        self.ks = _se(self.sq, kernel)
        self.bobs = bmat[np.ix_(obs.outputs, obs.outputs)]
        cov = self.ks * self.bobs
        cov[np.diag_indices_from(cov)] += noise_variance
        self.factor, self.jitter = _cholesky_with_jitter(cov)
        self.resid = resid
        self.alpha = cho_solve(self.factor, resid)

    def log_likelihood(self):
        n = self.resid.shape[0]
        logdet = 2.0 * np.sum(np.log(np.diag(self.factor[0])))
        return float(-0.5 * self.resid @ self.alpha - 0.5 * logdet - 0.5 * n * _LOG_2PI)

    def gradient(self):
        """Log-likelihood derivatives: (d/d log l, d/dB as an m x m matrix, d/d log noise)."""
        kinv = cho_solve(self.factor, np.eye(self.resid.shape[0]))
        w = np.outer(self.alpha, self.alpha) - kinv
        l2 = self.kernel.length_scale ** 2
        g_len = 0.5 * np.sum(w * self.ks * (self.sq / l2) * self.bobs)
        onehot = np.zeros((self.resid.shape[0], self.obs.m))
        onehot[np.arange(self.resid.shape[0]), self.obs.outputs] = 1.0
        mgrad = 0.5 * onehot.T @ (w * self.ks) @ onehot
        g_noise = 0.5 * self.noise_variance * np.trace(w)
        return g_len, mgrad, g_noise

    def predict(self, queries, j):
        kq = _se(_sq_dists(queries, self.obs.inputs), self.kernel) * self.bmat[self.obs.outputs, j][None, :]
        mean = kq @ self.alpha
        v = solve_triangular(self.factor[0], kq.T, lower=True)
        var = self.kernel.signal_variance * self.bmat[j, j] - np.sum(v * v, axis=0)
        return mean, var


class _KroneckerSolver(object):
    """Eigen-solver for ``K_s (x) B + noise I`` on a complete observation grid."""
    kind = "kronecker"
    jitter = 0.0

    def __init__(self, locs, resid_mat, kernel, bmat, noise_variance):
        self.locs = locs
        self.kernel = kernel
        self.bmat = bmat
        self.noise_variance = noise_variance
        self.sq = _sq_dists(locs, locs)
        self.ks = _se(self.sq, kernel)
        lam_s, self.qs = np.linalg.eigh(self.ks)
        lam_b, self.qb = np.linalg.eigh(bmat)
        self.lam_s = np.clip(lam_s, 0.0, None)
        self.lam_b = np.clip(lam_b, 0.0, None)
        self.spectrum = np.outer(self.lam_s, self.lam_b) + noise_variance
        self.resid = resid_mat
        rotated = self.qs.T @ resid_mat @ self.qb
        self.alpha = self.qs @ (rotated / self.spectrum) @ self.qb.T

    def log_likelihood(self):
        n = self.resid.size
        return float(-0.5 * np.sum(self.resid * self.alpha) - 0.5 * np.sum(np.log(self.spectrum))
                     - 0.5 * n * _LOG_2PI)

    def gradient(self):
        l2 = self.kernel.length_scale ** 2
        dks = self.ks * (self.sq / l2)
        data_len = 0.5 * np.sum((dks @ self.alpha) * (self.alpha @ self.bmat))
        dks_diag = np.sum(self.qs * (dks @ self.qs), axis=0)
        trace_len = 0.5 * dks_diag @ (1.0 / self.spectrum) @ self.lam_b
        g_len = data_len - trace_len
        d = (self.lam_s @ (1.0 / self.spectrum))
        mgrad = 0.5 * (self.alpha.T @ self.ks @ self.alpha - self.qb @ np.diag(d) @ self.qb.T)
        g_noise = 0.5 * self.noise_variance * (np.sum(self.alpha ** 2) - np.sum(1.0 / self.spectrum))
        return g_len, mgrad, g_noise

    def predict(self, queries, j):
        kq = _se(_sq_dists(queries, self.locs), self.kernel)
        bcol = self.bmat[:, j]
        mean = kq @ (self.alpha @ bcol)
        proj = kq @ self.qs
        weights = (self.qb.T @ bcol) ** 2
        var = self.kernel.signal_variance * self.bmat[j, j] - (proj ** 2) @ ((1.0 / self.spectrum) @ weights)
        return mean, var


def _build_solver(obs, per_output_mean, kernel, coreg, noise_variance):
    bmat = coreg.matrix()
    resid = obs.values - per_output_mean[obs.outputs]
    grid = obs.layout()
    if grid is not None:
        locs, mat = grid
        return _KroneckerSolver(locs, mat - per_output_mean[None, :], kernel, bmat, noise_variance)
    return _DenseSolver(obs, resid, kernel, bmat, noise_variance)


@dataclass(frozen=True, eq=False)
class MogpModel:
    """A trained co-regionalized GP over the outputs ``ap_ids``.

    Models are immutable; :func:`update` returns a new model. The solver
    state is rebuilt whenever data or hyperparameters change.
    """
    ap_ids: tuple
    observations: _Observations = field(repr=False)
    kernel: SeKernelParams
    coreg: Coregionalization
    noise_variance: float
    per_output_mean: np.ndarray = field(repr=False)
    options: FitOptions = FitOptions()
    converged: bool = True
    update_count: int = 0
    solver: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.observations.values.shape[0] < 1:
            raise DegenerateDataError("a model needs at least one observation")
        if self.coreg.outputs != len(self.ap_ids):
            raise InvalidParameterError("coregionalization has {0} outputs for {1} APs".format(
                self.coreg.outputs, len(self.ap_ids)))
        if self.solver is None:
            object.__setattr__(self, "solver", _build_solver(
                self.observations, self.per_output_mean, self.kernel, self.coreg, self.noise_variance))

    @property
    def m(self):
        return len(self.ap_ids)

    @property
    def train_inputs(self):
        """numpy.ndarray: the distinct training locations."""
        return np.unique(self.observations.inputs, axis=0)

    @property
    def hyperparameters(self):
        return Hyperparameters(self.kernel, self.coreg, self.noise_variance)

    def output_index(self, ap_id):
        try:
            return self.ap_ids.index(ap_id)
        except ValueError:
            raise UnknownAccessPointError("AP {0} is not modeled".format(ap_id))

    def predict(self, queries, ap_id):
        return predict(self, queries, ap_id)


def with_hyperparameters(model, hp):
    """MogpModel: the same data conditioned on a different hyperparameter set."""
    return MogpModel(model.ap_ids, model.observations, hp.kernel, hp.coreg, hp.noise_variance,
                     model.per_output_mean, model.options, model.converged, model.update_count)


def _stack(samples_by_ap, ap_ids):
    inputs, outputs, values = [], [], []
    for j, ap_id in enumerate(ap_ids):
        for sample in samples_by_ap.get(ap_id, []):
            if sample.ap_id != ap_id:
                raise InvalidParameterError("sample for {0} filed under {1}".format(sample.ap_id, ap_id))
            inputs.append(sample.location)
            outputs.append(j)
            values.append(sample.value_dbm)
    inputs = np.asarray(inputs, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(inputs)):
        raise InvalidParameterError("sample locations must be finite")
    return _Observations(inputs, np.asarray(outputs, dtype=int), np.asarray(values, dtype=float), len(ap_ids))


def _output_means(obs):
    means = np.zeros(obs.m)
    for j in range(obs.m):
        sel = obs.values[obs.outputs == j]
        means[j] = sel.mean() if sel.size else 0.0
    return means


def _output_variances(obs):
    """Per-output sample variance of the values, at least 1 dB^2."""
    variances = np.ones(obs.m)
    for j in range(obs.m):
        sel = obs.values[obs.outputs == j]
        if sel.size > 1:
            variances[j] = max(float(np.var(sel)), 1.0)
    return variances


def _default_hyperparameters(obs, rank):
    spread = np.ptp(obs.inputs, axis=0) if obs.inputs.shape[0] > 1 else np.ones(2)
    extent = max(float(np.max(spread)), 1.0)
    variances = _output_variances(obs)
    factor = np.zeros((obs.m, rank))
    factor[:, 0] = np.sqrt(0.5 * variances)
    if rank > 1:
        factor[:, 1:] = 0.1 * np.sqrt(variances)[:, None]
    coreg = Coregionalization(factor, 0.5 * variances)
    noise = max(0.01 * float(np.mean(variances)), 1e-4)
    return Hyperparameters(SeKernelParams(1.0, 0.25 * extent), coreg, noise)


def pack_hyperparameters(hp):
    """Flattens hyperparameters to the optimizer space [log l, A, log kappa, log noise]."""
    return np.concatenate([
        [math.log(hp.kernel.length_scale)],
        hp.coreg.factor.ravel(),
        np.log(np.maximum(hp.coreg.diag, 1e-300)),
        [math.log(hp.noise_variance)],
    ])


def unpack_hyperparameters(theta, m, rank, signal_variance):
    """Inverse of :func:`pack_hyperparameters`."""
    length = math.exp(theta[0])
    factor = theta[1:1 + m * rank].reshape(m, rank)
    diag = np.exp(theta[1 + m * rank:1 + m * rank + m])
    noise = math.exp(theta[-1])
    return Hyperparameters(SeKernelParams(signal_variance, length), Coregionalization(factor, diag), noise)


def _bounds(obs, rank, opts):
    """L-BFGS-B box in the packed space, scaled to the spread of each output."""
    lo, hi = opts.length_scale_bounds
    dlo, dhi = opts.diag_bounds
    nlo, nhi = opts.noise_variance_bounds
    caps = opts.scale_bound * _output_variances(obs)
    factor = [(-math.sqrt(c), math.sqrt(c)) for c in caps for _ in range(rank)]
    diag = [(math.log(dlo), math.log(max(dlo, min(dhi, c)))) for c in caps]
    return [(math.log(lo), math.log(hi))] + factor + diag + [(math.log(nlo), math.log(nhi))]


def _objective_and_gradient(theta, obs, means, rank, signal_variance):
    """Negative log marginal likelihood and its gradient in the packed space."""
    hp = unpack_hyperparameters(theta, obs.m, rank, signal_variance)
    try:
        solver = _build_solver(obs, means, hp.kernel, hp.coreg, hp.noise_variance)
    except FactorizationError:
        return 1e25, np.zeros_like(theta)
    value = solver.log_likelihood()
    g_len, mgrad, g_noise = solver.gradient()
    grad = np.concatenate([
        [g_len],
        (2.0 * mgrad @ hp.coreg.factor).ravel(),
        np.diag(mgrad) * hp.coreg.diag,
        [g_noise],
    ])
    if not np.isfinite(value):
        return 1e25, np.zeros_like(theta)
    return -value, -grad


def log_marginal_likelihood_gradient(model):
    """Analytic gradient of the log marginal likelihood.

    Returns:
        numpy.ndarray. Derivatives w.r.t. ``[log l, A (row-major), log kappa, log noise]``.
    """
    theta = pack_hyperparameters(model.hyperparameters)
    _, grad = _objective_and_gradient(theta, model.observations, model.per_output_mean,
                                      model.coreg.rank, model.kernel.signal_variance)
    return -grad


def _restart_points(theta0, obs, rank, opts, rng):
    starts = [theta0]
    m = obs.m
    lo, hi = opts.length_scale_bounds
    for _ in range(max(0, opts.restarts)):
        theta = theta0.copy()
        theta[0] = rng.uniform(math.log(max(lo, 0.1)), math.log(min(hi, math.exp(theta0[0]) * 4.0)))
        theta[1:1 + m * rank] *= rng.uniform(0.5, 1.5, size=m * rank)
        theta[1 + m * rank:-1] += rng.normal(0.0, 1.0, size=m)
        theta[-1] += rng.normal(0.0, 1.0)
        starts.append(theta)
    return starts


def _optimize(obs, means, init, opts):
    """Best L-BFGS-B optimum over the restarts.

    When no restart converges, the best point gets one more run with twice the
    iteration budget before the result is reported as not converged.
    """
    rank = init.coreg.rank
    bounds = _bounds(obs, rank, opts)
    lower = np.array([b[0] for b in bounds])
    upper = np.array([b[1] for b in bounds])
    theta0 = np.clip(pack_hyperparameters(init), lower, upper)
    rng = np.random.default_rng(opts.seed)
    args = (obs, means, rank, init.kernel.signal_variance)
    best, best_value, converged = theta0, np.inf, False
    for k, start in enumerate(_restart_points(theta0, obs, rank, opts, rng)):
        result = minimize(_objective_and_gradient, np.clip(start, lower, upper), args=args,
                          jac=True, method="L-BFGS-B", bounds=bounds, options={"maxiter": opts.max_iter})
        log.debug("Restart {0}: -lml={1:.4f} success={2}".format(k, result.fun, result.success))
        if result.fun < best_value:
            best, best_value = result.x, result.fun
        converged = converged or bool(result.success)
    if not converged:
        result = minimize(_objective_and_gradient, best, args=args, jac=True, method="L-BFGS-B",
                          bounds=bounds, options={"maxiter": 2 * opts.max_iter})
        log.debug("Retry: -lml={0:.4f} success={1}".format(result.fun, result.success))
        if result.fun <= best_value:
            best, best_value = result.x, result.fun
        converged = bool(result.success)
    if not converged:
        log.warning("Hyperparameter optimization did not converge after {0} restarts; "
                    "keeping the best point found".format(opts.restarts))
    return unpack_hyperparameters(best, obs.m, rank, init.kernel.signal_variance), converged


def fit(samples, init=None, opts=None, ap_ids=None):
    """Trains a co-regionalized GP.

    Hyperparameters ``{l, A, kappa, noise}`` maximize the log marginal
    likelihood of the stacked observations with L-BFGS-B and analytic
    gradients, from ``init`` and ``opts.restarts`` perturbed starts. The SE
    signal variance keeps its initial value because B carries the output scale.

    When every output has at most one sample the data say nothing about the
    hyperparameters, so the initial values are kept and the model is
    prior-dominated.

    Args:
        samples (dict): lists of :obj:`RssiSample` keyed by AP id.
        init (:obj:`Hyperparameters`): optional starting point.
        opts (:obj:`FitOptions`): optimizer settings.
        ap_ids (list): output order. Defaults to the sorted keys of ``samples``.

    Returns:
        :obj:`MogpModel`. ``converged`` is False when no restart converged.

    Raises:
        InvalidParameterError: an AP has no samples.
        DegenerateDataError: all samples share one location.
    """
    opts = opts or FitOptions()
    ap_ids = tuple(ap_ids) if ap_ids is not None else tuple(sorted(samples))
    for ap_id in ap_ids:
        if not samples.get(ap_id):
            raise InvalidParameterError("no samples for AP {0}".format(ap_id))
    obs = _stack(samples, ap_ids)
    counts = np.bincount(obs.outputs, minlength=obs.m)
    distinct = np.unique(obs.inputs, axis=0).shape[0]
    if distinct == 1 and np.any(counts > 1):
        raise DegenerateDataError("all samples are co-located; the length scale is unidentifiable")
    means = _output_means(obs)
    init = init or _default_hyperparameters(obs, opts.rank)
    converged = True
    hp = init
    if opts.optimize and np.any(counts > 1):
        log.debug("Fitting MOGP: {0} observations, {1} outputs, rank {2}".format(
            obs.values.shape[0], obs.m, init.coreg.rank))
        hp, converged = _optimize(obs, means, init, opts)
    return MogpModel(ap_ids, obs, hp.kernel, hp.coreg, hp.noise_variance, means, opts, converged)


def log_marginal_likelihood(model):
    """Gaussian log density of the stacked, centered observations.

    Raises:
        FactorizationError: covariance not PSD even after jitter escalation.
    """
    return model.solver.log_likelihood()


def predict(model, queries, ap):
    """Posterior mean and variance of one output.

    Args:
        model (:obj:`MogpModel`): a trained model.
        queries: (n, 2) query locations.
        ap (str): AP id of the output to predict.

    Returns:
        tuple. (mean dBm array, variance dB^2 array), variance clipped at 0.

    Raises:
        InvalidQueryError: a query coordinate is not finite.
        UnknownAccessPointError: ``ap`` is not modeled.
    """
    pts = np.atleast_2d(np.asarray(queries, dtype=float))
    if pts.shape[1] != 2 or not np.all(np.isfinite(pts)):
        raise InvalidQueryError("queries must be finite (n, 2) coordinates")
    j = model.output_index(ap)
    mean, var = model.solver.predict(pts, j)
    return mean + model.per_output_mean[j], np.maximum(var, 0.0)


def predict_field(model, grid, ap):
    """Batched :func:`predict` over every cell center of a grid.

    Returns:
        tuple. (mean :obj:`ScalarField`, variance :obj:`ScalarField`)
    """
    mean, var = model.predict(grid.centers(), ap)
    return ScalarField(grid, mean), ScalarField(grid, var)


def update(model, new_samples):
    """Conditions a model on additional samples.

    The solver is always rebuilt. Hyperparameters are re-optimized on every
    ``refit_every``-th update (never when it is 0), from the current values
    and ``restarts`` perturbed starts drawn from the fit seed and the update
    count.

    Args:
        model (:obj:`MogpModel`): the current model.
        new_samples (list): :obj:`RssiSample` values for modeled APs.

    Returns:
        :obj:`MogpModel`. The same model when ``new_samples`` is empty.
    """
    if not new_samples:
        return model
    by_ap = {}
    for sample in new_samples:
        model.output_index(sample.ap_id)
        by_ap.setdefault(sample.ap_id, []).append(sample)
    extra = _stack(by_ap, model.ap_ids)
    obs = _Observations(
        np.vstack([model.observations.inputs, extra.inputs]),
        np.concatenate([model.observations.outputs, extra.outputs]),
        np.concatenate([model.observations.values, extra.values]),
        model.m,
    )
    means = _output_means(obs)
    count = model.update_count + 1
    hp, converged = model.hyperparameters, model.converged
    every = model.options.refit_every
    if model.options.optimize and every > 0 and count % every == 0:
        log.debug("Update {0}: re-optimizing hyperparameters".format(count))
        seed = [int(s) for s in np.atleast_1d(model.options.seed)] + [count]
        hp, converged = _optimize(obs, means, hp, replace(model.options, seed=seed))
    return MogpModel(model.ap_ids, obs, hp.kernel, hp.coreg, hp.noise_variance, means,
                     model.options, converged, count)


def dense_posterior(model, queries, ap):
    """Reference posterior from an explicitly assembled Kronecker covariance.

    Builds ``K_s (x) B`` over all locations and outputs, keeps the observed
    rows, and solves directly. Only meant for small oracle checks.

    Returns:
        tuple. (mean, variance, log marginal likelihood)
    """
    obs = model.observations
    locs, inverse = np.unique(obs.inputs, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    bmat = model.coreg.matrix()
    full = np.kron(_se(_sq_dists(locs, locs), model.kernel), bmat)
    rows = inverse * model.m + obs.outputs
    cov = full[np.ix_(rows, rows)] + model.noise_variance * np.eye(rows.size)
    resid = obs.values - model.per_output_mean[obs.outputs]
    j = model.output_index(ap)
    pts = np.atleast_2d(np.asarray(queries, dtype=float))
    kq = np.kron(_se(_sq_dists(pts, locs), model.kernel), bmat[j][None, :])[:, rows]
    mean = kq @ np.linalg.solve(cov, resid) + model.per_output_mean[j]
    var = model.kernel.signal_variance * bmat[j, j] - np.einsum("ij,ji->i", kq, np.linalg.solve(cov, kq.T))
    sign, logdet = np.linalg.slogdet(cov)
    lml = -0.5 * resid @ np.linalg.solve(cov, resid) - 0.5 * logdet - 0.5 * rows.size * _LOG_2PI
    return mean, var, float(lml)


def save_model(model, path):
    """Writes hyperparameters and training data to a versioned YAML file."""
    obs = model.observations
    doc = {
        "FORMAT": MODEL_FORMAT,
        "VERSION": MODEL_VERSION,
        "AP_IDS": list(model.ap_ids),
        "KERNEL": {"SIGNAL_VARIANCE": model.kernel.signal_variance, "LENGTH_SCALE": model.kernel.length_scale},
        "COREGIONALIZATION": {"FACTOR": model.coreg.factor.tolist(), "DIAG": model.coreg.diag.tolist()},
        "NOISE_VARIANCE": float(model.noise_variance),
        "UPDATE_COUNT": model.update_count,
        "OBSERVATIONS": [
            [float(x), float(y), model.ap_ids[int(j)], float(v)]
            for (x, y), j, v in zip(obs.inputs, obs.outputs, obs.values)
        ],
    }
    with open(path, "w") as f:
        yaml.safe_dump(doc, f, sort_keys=False)


def load_model(path, opts=None):
    """Reads a model written by :func:`save_model` without re-optimizing it."""
    with open(path) as f:
        doc = yaml.safe_load(f)
    if doc.get("FORMAT") != MODEL_FORMAT or doc.get("VERSION") != MODEL_VERSION:
        raise InvalidParameterError("{0} is not a version {1} model file".format(path, MODEL_VERSION))
    ap_ids = tuple(doc["AP_IDS"])
    index = {ap_id: j for j, ap_id in enumerate(ap_ids)}
    rows = doc["OBSERVATIONS"]
    obs = _Observations(
        np.array([[r[0], r[1]] for r in rows], dtype=float).reshape(-1, 2),
        np.array([index[r[2]] for r in rows], dtype=int),
        np.array([r[3] for r in rows], dtype=float),
        len(ap_ids),
    )
    kernel = SeKernelParams(doc["KERNEL"]["SIGNAL_VARIANCE"], doc["KERNEL"]["LENGTH_SCALE"])
    coreg = Coregionalization(doc["COREGIONALIZATION"]["FACTOR"], doc["COREGIONALIZATION"]["DIAG"])
    return MogpModel(ap_ids, obs, kernel, coreg, doc["NOISE_VARIANCE"], _output_means(obs),
                     opts or FitOptions(), True, int(doc.get("UPDATE_COUNT", 0)))
