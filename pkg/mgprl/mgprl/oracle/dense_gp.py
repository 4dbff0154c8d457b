#!/usr/bin/env python3
import logging

import numpy as np

from mgprl import mogp
from mgprl.rfsim import RssiSample
from mgprl.plugins import Oracle, OracleResult

log = logging.getLogger(__name__)

INSTANCES = 50
TOLERANCE = 1e-6
GRADIENT_RTOL = 1e-4
FD_STEP = 1e-5
FAULT_OFFSET = 1e-3


def random_instance(rng, complete=True):
    """A random small MOGP with pinned random hyperparameters.

    Args:
        rng (:obj:`numpy.random.Generator`): source of randomness.
        complete (bool): every location observes every output; otherwise a
            random subset of (location, output) pairs is dropped.

    Returns:
        :obj:`MogpModel`.
    """
    m = int(rng.integers(1, 5))
    gamma = int(rng.integers(2, 21))
    rank = int(rng.integers(1, m + 1))
    locs = rng.uniform(0.0, 8.0, size=(gamma, 2))
    ap_ids = ["ap{0}".format(j) for j in range(m)]
    samples = {ap: [] for ap in ap_ids}
    for x in locs:
        for j, ap in enumerate(ap_ids):
            if not complete and rng.random() < 0.3:
                continue
            samples[ap].append(RssiSample(x, ap, rng.normal(-50.0, 8.0)))
    for j, ap in enumerate(ap_ids):
        if not samples[ap]:
            samples[ap].append(RssiSample(locs[0], ap, rng.normal(-50.0, 8.0)))
    init = mogp.Hyperparameters(
        mogp.SeKernelParams(1.0, float(rng.uniform(0.5, 4.0))),
        mogp.Coregionalization(rng.normal(0.0, 3.0, size=(m, rank)), rng.uniform(0.5, 20.0, size=m)),
        float(rng.uniform(0.05, 2.0)),
    )
    return mogp.fit(samples, init=init, opts=mogp.FitOptions(rank=rank, optimize=False), ap_ids=ap_ids)


def finite_difference_gradient(model, step=FD_STEP):
    """Central differences of the log marginal likelihood in the packed space."""
    theta = mogp.pack_hyperparameters(model.hyperparameters)
    grad = np.zeros_like(theta)
    for k in range(theta.size):
        values = []
        for sign in (1.0, -1.0):
            shifted = theta.copy()
            shifted[k] += sign * step
            hp = mogp.unpack_hyperparameters(shifted, model.m, model.coreg.rank, model.kernel.signal_variance)
            values.append(mogp.log_marginal_likelihood(mogp.with_hyperparameters(model, hp)))
        grad[k] = (values[0] - values[1]) / (2.0 * step)
    return grad


class DenseGp(Oracle):
    """Checks the fast MOGP solvers against an explicit Kronecker covariance."""
    def __init__(self, config, plugin_manager):
        super().__init__(config, plugin_manager)
        self.__name__ = "Dense GP reference"
        self.__id__ = "dense_gp"
        self.__version__ = "0.1"

        self.instances = INSTANCES

    def run(self):
        rng = np.random.default_rng(20240)
        mean_err = var_err = lml_err = grad_err = 0.0
        for k in range(self.instances):
            model = random_instance(rng, complete=(k % 2 == 0))
            queries = rng.uniform(-1.0, 9.0, size=(7, 2))
            ap = model.ap_ids[int(rng.integers(model.m))]
            mean, var = mogp.predict(model, queries, ap)
            if self.faulted:
                mean = mean + FAULT_OFFSET
            ref_mean, ref_var, ref_lml = mogp.dense_posterior(model, queries, ap)
            mean_err = max(mean_err, float(np.max(np.abs(mean - ref_mean))))
            var_err = max(var_err, float(np.max(np.abs(var - np.maximum(ref_var, 0.0)))))
            lml_err = max(lml_err, abs(mogp.log_marginal_likelihood(model) - ref_lml))
            analytic = mogp.log_marginal_likelihood_gradient(model)
            numeric = finite_difference_gradient(model)
            rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
            grad_err = max(grad_err, float(np.max(rel)))
        log.debug("dense_gp: mean {0:.2e} var {1:.2e} lml {2:.2e} grad {3:.2e}".format(
            mean_err, var_err, lml_err, grad_err))
        return [
            OracleResult(self.__id__, "posterior_mean", mean_err <= TOLERANCE, "max abs error {0:.3e}".format(mean_err)),
            OracleResult(self.__id__, "posterior_variance", var_err <= TOLERANCE, "max abs error {0:.3e}".format(var_err)),
            OracleResult(self.__id__, "log_marginal_likelihood", lml_err <= TOLERANCE, "max abs error {0:.3e}".format(lml_err)),
            OracleResult(self.__id__, "likelihood_gradient", grad_err <= GRADIENT_RTOL, "max rel error {0:.3e}".format(grad_err)),
        ]
