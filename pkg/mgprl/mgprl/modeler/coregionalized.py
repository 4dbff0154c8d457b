#!/usr/bin/env python3
import logging
from dataclasses import replace

from mgprl import mogp
from mgprl.plugins import FieldModeler

log = logging.getLogger(__name__)


class Coregionalized(FieldModeler):
    """Co-regionalized multi-output GP modeler.

    One joint model over all APs a robot hears, sharing the spatial kernel
    and learning the cross-AP covariance.
    """
    def __init__(self, config, plugin_manager):
        """Initializes the co-regionalized modeler.

        Args:
            config (dict): The run configuration.
            plugin_manager (:obj:`MgprlPluginManager`): An instance of the MgprlPluginManager.
        """
        super().__init__(config, plugin_manager)
        self.__name__ = "Co-regionalized MOGP"
        self.__id__ = "coregionalized"
        self.__version__ = "0.1"

        self.options = self.fit_options()

    def fit(self, samples, ap_ids=None, seed=0):
        log.debug("Fitting joint model over {0} APs".format(len(ap_ids or samples)))
        return mogp.fit(samples, opts=replace(self.options, seed=seed), ap_ids=ap_ids)

    def update(self, model, samples):
        return mogp.update(model, samples)

    def predict_field(self, model, grid, ap_id):
        return mogp.predict_field(model, grid, ap_id)
