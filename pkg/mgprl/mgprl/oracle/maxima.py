#!/usr/bin/env python3
import math, logging

import numpy as np

from mgprl.core import GridSpec, ScalarField
from mgprl.aploc import HierarchyConfig, count_local_maxima, hierarchical_ap_position, local_uncertainty
from mgprl.plugins import Oracle, OracleResult

log = logging.getLogger(__name__)


class PeakModel(object):
    """A noiseless field model with a single concave peak at ``peak``."""
    def __init__(self, peak, ap_id="ap"):
        self.peak = np.asarray(peak, dtype=float)
        self.ap_ids = (ap_id,)

    def predict(self, queries, ap_id):
        pts = np.atleast_2d(np.asarray(queries, dtype=float))
        return -np.sum((pts - self.peak) ** 2, axis=1), np.zeros(len(pts))


def gaussian_bumps(grid, centers, sigma):
    """Field of equal-height Gaussian bumps over a grid."""
    pts = grid.centers()
    values = np.zeros(len(pts))
    for c in centers:
        values += np.exp(-np.sum((pts - np.asarray(c)) ** 2, axis=1) / (2.0 * sigma ** 2))
    return ScalarField(grid, values)


class Maxima(Oracle):
    """Checks maxima detection, hierarchical search and local uncertainty on known fields."""
    def __init__(self, config, plugin_manager):
        super().__init__(config, plugin_manager)
        self.__name__ = "Maxima detection"
        self.__id__ = "maxima"
        self.__version__ = "0.1"

    def run(self):
        cfg = HierarchyConfig()
        bias = 1 if self.faulted else 0
        grid = GridSpec((0.0, 0.0), 1.0, 24, 12)

        single = count_local_maxima(gaussian_bumps(grid, [(11.5, 6.5)], 4.0), cfg) + bias
        double = count_local_maxima(gaussian_bumps(grid, [(5.5, 5.5), (18.5, 5.5)], 4.0), cfg) + bias
        plateau = count_local_maxima(ScalarField(grid, np.full(grid.shape, -40.0)), cfg) + bias

        peak = (6.3, 4.1)
        search = HierarchyConfig(levels=4, coarsest_grid=GridSpec((0.0, 0.0), 1.0, 10, 8))
        found = hierarchical_ap_position(PeakModel(peak), "ap", search)
        finest = search.coarsest_grid.cell_size / search.refinement_factor ** (search.levels - 1)
        miss = math.hypot(found[0] - peak[0], found[1] - peak[1]) + bias * finest * 2

        variance = ScalarField(grid, np.full(grid.shape, 4.0))
        scaled = local_uncertainty(variance, (3, 3), 3, cfg) + bias
        log.debug("maxima: single {0}, double {1}, plateau {2}, miss {3:.3f}".format(single, double, plateau, miss))
        return [
            OracleResult(self.__id__, "single_peak", single == 1, "{0} maxima".format(single)),
            OracleResult(self.__id__, "two_peaks", double == 2, "{0} maxima".format(double)),
            OracleResult(self.__id__, "constant_plateau", plateau == 1, "{0} maxima".format(plateau)),
            OracleResult(self.__id__, "hierarchical_peak", miss <= finest * math.sqrt(2),
                         "miss {0:.4f} m, finest diagonal {1:.4f} m".format(miss, finest * math.sqrt(2))),
            OracleResult(self.__id__, "count_scaled_uncertainty", math.isclose(scaled, 6.0),
                         "U = {0:.4f}, expected 6".format(scaled)),
        ]
