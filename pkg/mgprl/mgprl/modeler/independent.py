#!/usr/bin/env python3
"""Independent single-output GP modeler.

The baseline without cross-AP covariance: each AP gets its own GP with its
own hyperparameters. Used for ablations and the fit-time scaling benchmark.
"""
import logging
from dataclasses import dataclass, field, replace

from mgprl import mogp
from mgprl.exceptions import UnknownAccessPointError
from mgprl.plugins import FieldModeler

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class IndependentModel:
    """One single-output model per AP, behind the joint-model interface."""
    ap_ids: tuple
    models: dict = field(repr=False)

    def model_for(self, ap_id):
        try:
            return self.models[ap_id]
        except KeyError:
            raise UnknownAccessPointError("AP {0} is not modeled".format(ap_id))

    def predict(self, queries, ap_id):
        return self.model_for(ap_id).predict(queries, ap_id)

    @property
    def converged(self):
        return all(m.converged for m in self.models.values())


def fit_independent(samples, opts=None, ap_ids=None):
    """Fits one single-output GP per AP.

    Args:
        samples (dict): lists of :obj:`RssiSample` keyed by AP id.
        opts (:obj:`FitOptions`): optimizer settings; the rank is forced to 1.
        ap_ids (list): APs to model, defaults to the sorted keys.

    Returns:
        :obj:`IndependentModel`.
    """
    opts = replace(opts or mogp.FitOptions(), rank=1)
    ap_ids = tuple(ap_ids) if ap_ids is not None else tuple(sorted(samples))
    models = {ap: mogp.fit({ap: samples.get(ap, [])}, opts=opts, ap_ids=[ap]) for ap in ap_ids}
    return IndependentModel(ap_ids, models)


def update_independent(model, new_samples):
    """IndependentModel: ``model`` with each AP's model updated on its own new samples."""
    by_ap = {}
    for sample in new_samples:
        model.model_for(sample.ap_id)
        by_ap.setdefault(sample.ap_id, []).append(sample)
    models = {ap: mogp.update(m, by_ap.get(ap, [])) for ap, m in model.models.items()}
    return IndependentModel(model.ap_ids, models)


class Independent(FieldModeler):
    """Per-AP single-output GP modeler."""
    def __init__(self, config, plugin_manager):
        super().__init__(config, plugin_manager)
        self.__name__ = "Independent GPs"
        self.__id__ = "independent"
        self.__version__ = "0.1"

        self.options = self.fit_options()

    def fit(self, samples, ap_ids=None, seed=0):
        return fit_independent(samples, replace(self.options, seed=seed), ap_ids)

    def update(self, model, samples):
        return update_independent(model, samples)

    def predict_field(self, model, grid, ap_id):
        return mogp.predict_field(model, grid, ap_id)
