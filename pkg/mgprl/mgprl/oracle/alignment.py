#!/usr/bin/env python3
import math, logging

import numpy as np

from mgprl.core import Transform2D, normalize_angle
from mgprl.aploc import ApEstimate, EstimateKind
from mgprl.rello import AlignmentConfig, RobotBeliefMsg, align_pair, weighted_rigid_align
from mgprl.exceptions import InsufficientOverlapError
from mgprl.plugins import Oracle, OracleResult

log = logging.getLogger(__name__)

TRIALS = 1000
TOLERANCE = 1e-9
FAULT_ROTATION = 1e-6


def belief(robot_id, positions):
    """A belief message holding one exact, full-weight estimate per AP."""
    return RobotBeliefMsg(robot_id, [ApEstimate(ap, p, 1.0, EstimateKind.HIERARCHICAL, 0.0)
                                     for ap, p in positions.items()])


class Alignment(Oracle):
    """Checks rigid registration and pairwise alignment on constructed transforms."""
    def __init__(self, config, plugin_manager):
        super().__init__(config, plugin_manager)
        self.__name__ = "Alignment recovery"
        self.__id__ = "alignment"
        self.__version__ = "0.1"

        self.trials = TRIALS

    def _recovery(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        reflected = False
        for _ in range(self.trials):
            n = int(rng.integers(3, 9))
            src = rng.uniform(-10.0, 10.0, size=(n, 2))
            weights = rng.uniform(0.1, 1.0, size=n)
            truth = Transform2D(rng.uniform(-math.pi, math.pi), rng.uniform(-10.0, 10.0, size=2))
            fit = weighted_rigid_align(src, truth.apply(src), weights)
            rotation = fit.transform.rotation + (FAULT_ROTATION if self.faulted else 0.0)
            worst = max(worst,
                        abs(normalize_angle(rotation - truth.rotation)),
                        float(np.max(np.abs(np.subtract(fit.transform.translation, truth.translation)))),
                        math.sqrt(fit.error))
            reflected = reflected or fit.transform.reflected
        return worst, reflected

    def _square_layout(self):
        square = {"a": (0.0, 0.0), "b": (4.0, 0.0), "c": (4.0, 4.0), "d": (0.0, 4.0)}
        truth = Transform2D(math.pi / 2, (5.0, 5.0))
        # b sees the world through the inverse transform, so truth maps b into a
        seen_by_b = {ap: tuple(np.linalg.solve(truth.linear(), np.subtract(p, truth.translation)))
                     for ap, p in square.items()}
        result = align_pair(belief("a", square), belief("b", seen_by_b), AlignmentConfig())
        rotation = result.transform.rotation + (FAULT_ROTATION if self.faulted else 0.0)
        return max(abs(normalize_angle(rotation - truth.rotation)),
                   float(np.max(np.abs(np.subtract(result.transform.translation, truth.translation)))))

    def _overlap(self):
        shared = {"a": (0.0, 0.0), "b": (3.0, 1.0)}
        try:
            align_pair(belief("a", shared), belief("b", shared), AlignmentConfig())
        except InsufficientOverlapError:
            return True
        return False

    def run(self):
        worst, reflected = self._recovery()
        square = self._square_layout()
        overlap = self._overlap()
        log.debug("alignment: recovery {0:.2e}, square {1:.2e}".format(worst, square))
        return [
            OracleResult(self.__id__, "rigid_recovery", worst <= TOLERANCE, "worst deviation {0:.3e}".format(worst)),
            OracleResult(self.__id__, "no_reflection", not reflected, "reflection returned" if reflected else ""),
            OracleResult(self.__id__, "square_layout", square <= 1e-6, "deviation {0:.3e}".format(square)),
            OracleResult(self.__id__, "insufficient_overlap", overlap, "" if overlap else "two shared APs were accepted"),
        ]
