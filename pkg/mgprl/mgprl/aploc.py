#!/usr/bin/env python3
"""aploc

Uncertainty-aware AP localization from predicted RSSI fields.

For each AP a robot runs coarse-to-fine argmax refinement over its predicted
mean field (the hierarchical estimate), detects further local maxima of the
coarsest field as candidate positions, and weighs every position by the
local predictive uncertainty around it.
"""
import math, enum, logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from mgprl.core import GridSpec
from mgprl.exceptions import InvalidParameterError, OutOfGridError

log = logging.getLogger(__name__)


class EstimateKind(str, enum.Enum):
    HIERARCHICAL = "hierarchical"
    LOCAL_MAXIMUM = "local_maximum"


class SearchRegion(str, enum.Enum):
    MAP = "map"
    EXPLORED = "explored"


@dataclass(frozen=True)
class HierarchyConfig:
    """Settings of the coarse-to-fine search and the maxima neighborhood.

    ``coarsest_grid`` is the level-1 region. When it is None, callers build it
    with :func:`coarsest_grid_around` using ``cell_size`` and ``margin``:
    around the visited locations alone when ``region`` is ``explored``, and
    also covering the outline of the robot's map when it is ``map``.
    """
    levels: int = 4
    coarsest_grid: GridSpec = None
    refinement_factor: int = 2
    neighborhood_radius: int = 1
    cell_size: float = 1.0
    margin: float = 1.0
    rssi_closeness: float = 6.0
    scale_by_count: bool = True
    region: SearchRegion = SearchRegion.MAP

    def __post_init__(self):
        if self.levels < 1:
            raise InvalidParameterError("hierarchy needs at least one level")
        if self.refinement_factor < 2:
            raise InvalidParameterError("refinement factor must be >= 2")
        if self.neighborhood_radius < 1:
            raise InvalidParameterError("neighborhood radius must be >= 1 cell")
        try:
            object.__setattr__(self, "region", SearchRegion(self.region))
        except ValueError:
            raise InvalidParameterError("search region must be one of {0}".format(
                ", ".join(r.value for r in SearchRegion)))


@dataclass(frozen=True)
class WeightingConfig:
    epsilon: float = 0.01
    alpha: float = 1.5

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise InvalidParameterError("epsilon must be in (0, 1]")
        if self.alpha < 1:
            raise InvalidParameterError("alpha must be >= 1")


@dataclass(frozen=True)
class ApEstimate:
    """A weighted AP position estimate in the estimating robot's frame."""
    ap_id: str
    position: tuple
    weight: float
    kind: EstimateKind
    local_uncertainty: float

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "kind", EstimateKind(self.kind))
        if not 0 < self.weight <= 1:
            raise InvalidParameterError("estimate weight must be in (0, 1], got {0}".format(self.weight))


@dataclass(frozen=True, eq=False)
class ApSurvey:
    """Everything one robot derived for one AP in one cycle."""
    ap_id: str
    estimates: tuple
    mean_field: object = field(repr=False)
    var_field: object = field(repr=False)
    maxima_count: int = 0

    @property
    def hierarchical(self):
        return next(e for e in self.estimates if e.kind == EstimateKind.HIERARCHICAL)


def coarsest_grid_around(points, cell_size, margin, cover=None):
    """Builds a level-1 grid covering ``points`` plus a margin on every side.

    Args:
        points: (n, 2) locations, e.g. a robot's sampled positions.
        cell_size (float): coarse cell size in meters.
        margin (float): padding in meters.
        cover: optional (k, 2) points the grid must also reach, without
            padding, e.g. the corners of the robot's map.

    Returns:
        :obj:`GridSpec`. At least 2x2 cells.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo = pts.min(axis=0) - margin
    hi = pts.max(axis=0) + margin
    if cover is not None and len(cover):
        extra = np.atleast_2d(np.asarray(cover, dtype=float))
        lo = np.minimum(lo, extra.min(axis=0))
        hi = np.maximum(hi, extra.max(axis=0))
    width = max(2, int(math.ceil((hi[0] - lo[0]) / cell_size)))
    height = max(2, int(math.ceil((hi[1] - lo[1]) / cell_size)))
    return GridSpec((lo[0], lo[1]), cell_size, width, height)


def _argmax_cell(values):
    # C-order argmax returns the lowest (i, j) among ties
    flat = int(np.argmax(values))
    return divmod(flat, values.shape[1])


def _refine(grid, i, j, factor, bounds):
    """Next level: the 3x3 block of cells around (i, j) at ``factor`` times the resolution."""
    cell = grid.cell_size / factor
    span = 3.0 * grid.cell_size
    cx, cy = grid.cell_center(i, j)
    x0, x1, y0, y1 = bounds
    ox = min(max(cx - 0.5 * span, x0), max(x0, x1 - span))
    oy = min(max(cy - 0.5 * span, y0), max(y0, y1 - span))
    return GridSpec((ox, oy), cell, 3 * factor, 3 * factor)


def hierarchical_ap_position(model, ap, cfg):
    """Coarse-to-fine argmax of the predicted mean RSSI.

    Each level predicts the mean on its region, picks the best cell (lowest
    (i, j) on ties), and the next level covers the 3x3 block around it at
    ``refinement_factor`` times the resolution, kept inside the level-1 region.

    Args:
        model: a fitted field model with ``predict(queries, ap_id)``.
        ap (str): AP id.
        cfg (:obj:`HierarchyConfig`): must carry ``coarsest_grid``.

    Returns:
        tuple. Center of the best cell at the finest level.
    """
    if cfg.coarsest_grid is None:
        raise InvalidParameterError("hierarchical search needs a coarsest grid")
    grid = cfg.coarsest_grid
    bounds = grid.extent
    best = None
    for level in range(1, cfg.levels + 1):
        mean, _ = model.predict(grid.centers(), ap)
        i, j = _argmax_cell(mean.reshape(grid.shape))
        best = grid.cell_center(i, j)
        log.debug("AP {0} level {1}: best cell ({2}, {3}) at {4}".format(ap, level, i, j, best))
        if level < cfg.levels:
            grid = _refine(grid, i, j, cfg.refinement_factor, bounds)
    return best


def _plateau_representatives(values, radius):
    peak = ndimage.maximum_filter(values, size=2 * radius + 1, mode="nearest")
    mask = values == peak
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    reps = []
    for k in range(1, count + 1):
        cells = np.argwhere(labels == k)
        centroid = cells.mean(axis=0)
        pick = cells[int(np.argmin(np.sum((cells - centroid) ** 2, axis=1)))]
        reps.append((int(pick[0]), int(pick[1])))
    return reps


def count_local_maxima(mean_field, cfg):
    """int: number of morphological maxima of a field, one per connected plateau."""
    return len(_plateau_representatives(mean_field.values, cfg.neighborhood_radius))


def detect_local_maxima(mean_field, cfg, rssi_closeness=None, hier=None):
    """Morphological maxima of a coarsest-level mean field.

    A cell is a maximum when it equals the maximum over its square
    ``(2r+1) x (2r+1)`` neighborhood. Connected equal-valued maxima (plateaus)
    are reported once, by the cell nearest the plateau centroid.

    Maxima are kept when their mean is within ``rssi_closeness`` dB of the
    reference, the hierarchical estimate's cell when ``hier`` is given and the
    field maximum otherwise. Maxima within one cell of ``hier`` are dropped,
    since the hierarchical estimate is tracked separately.

    Args:
        mean_field (:obj:`ScalarField`): the level-1 mean field.
        cfg (:obj:`HierarchyConfig`): gives the neighborhood radius.
        rssi_closeness (float): dB window, None to keep every maximum.
        hier (tuple): hierarchical estimate position, optional.

    Returns:
        list. Cell centers, strongest first.
    """
    values = mean_field.values
    grid = mean_field.grid
    reps = _plateau_representatives(values, cfg.neighborhood_radius)
    hier_cell = None
    reference = float(values.max())
    if hier is not None:
        try:
            hier_cell = grid.cell_index(hier)
            reference = float(values[hier_cell])
        except OutOfGridError:
            log.warning("Hierarchical estimate {0} lies outside the coarsest grid".format(hier))
    kept = []
    for i, j in reps:
        if hier_cell is not None and max(abs(i - hier_cell[0]), abs(j - hier_cell[1])) <= 1:
            continue
        if rssi_closeness is not None and abs(values[i, j] - reference) > rssi_closeness:
            continue
        kept.append((i, j))
    kept.sort(key=lambda c: (-values[c], c))
    return [grid.cell_center(i, j) for i, j in kept]


def _neighborhood(grid, cell, radius):
    i, j = cell
    return (slice(max(0, i - radius), min(grid.width, i + radius + 1)),
            slice(max(0, j - radius), min(grid.height, j + radius + 1)))


def local_uncertainty(var_field, c, L, cfg):
    """Average predictive standard deviation around a cell, scaled by the maxima count.

    ``U(c) = (L / |Omega(c)|) * sum over u in Omega(c) of sqrt(var(u))``, where
    Omega(c) is clipped at the grid border.

    Args:
        var_field (:obj:`ScalarField`): level-1 predictive variance.
        c (tuple): cell index (i, j).
        L (int): number of detected maxima.
        cfg (:obj:`HierarchyConfig`): gives the neighborhood radius.

    Returns:
        float. Uncertainty in dB.
    """
    grid = var_field.grid
    if not (0 <= c[0] < grid.width and 0 <= c[1] < grid.height):
        raise OutOfGridError("cell {0} outside {1}x{2} grid".format(c, grid.width, grid.height))
    block = var_field.values[_neighborhood(grid, c, cfg.neighborhood_radius)]
    return float(L * np.mean(np.sqrt(np.maximum(block, 0.0))))


def _weight(raw, eps):
    return min(1.0, max(eps, raw))


def weigh_candidates(hier, candidates, var_field, cfg, ap_id="", hierarchy=None, maxima_count=1):
    """Weighs the hierarchical estimate and the candidates by local uncertainty.

    Candidates get ``max(eps, 1 / (1 + U))`` and the hierarchical estimate
    ``max(eps, alpha / (1 + U))``; both are capped at 1.

    Args:
        hier (tuple): hierarchical position.
        candidates (list): candidate positions.
        var_field (:obj:`ScalarField`): level-1 predictive variance.
        cfg (:obj:`WeightingConfig`): epsilon and alpha.
        ap_id (str): AP the positions belong to.
        hierarchy (:obj:`HierarchyConfig`): neighborhood radius and count scaling.
        maxima_count (int): L, the number of detected maxima.

    Returns:
        list. :obj:`ApEstimate` values, hierarchical first.
    """
    hierarchy = hierarchy or HierarchyConfig()
    count = maxima_count if hierarchy.scale_by_count else 1
    grid = var_field.grid

    def uncertainty(point):
        return local_uncertainty(var_field, grid.cell_index(point), count, hierarchy)

    u_hier = uncertainty(hier)
    out = [ApEstimate(ap_id, hier, _weight(cfg.alpha / (1.0 + u_hier), cfg.epsilon),
                      EstimateKind.HIERARCHICAL, u_hier)]
    for point in candidates:
        u = uncertainty(point)
        out.append(ApEstimate(ap_id, point, _weight(1.0 / (1.0 + u), cfg.epsilon),
                              EstimateKind.LOCAL_MAXIMUM, u))
    return out


def estimate_ap(model, ap_id, hierarchy, weighting, predict_field=None):
    """Runs the whole per-AP pipeline on one model.

    Args:
        model: fitted field model.
        ap_id (str): the AP.
        hierarchy (:obj:`HierarchyConfig`): with ``coarsest_grid`` set.
        weighting (:obj:`WeightingConfig`): weight constants.
        predict_field (callable): ``(model, grid, ap_id) -> (mean, var)``;
            defaults to batching ``model.predict`` over the grid.

    Returns:
        :obj:`ApSurvey`.
    """
    grid = hierarchy.coarsest_grid
    if predict_field is None:
        from mgprl.mogp import predict_field
    mean_field, var_field = predict_field(model, grid, ap_id)
    hier = hierarchical_ap_position(model, ap_id, hierarchy)
    candidates = detect_local_maxima(mean_field, hierarchy, hierarchy.rssi_closeness, hier)
    # L counts the detected maxima: the hierarchical estimate and its candidates
    count = 1 + len(candidates)
    estimates = weigh_candidates(hier, candidates, var_field, weighting, ap_id, hierarchy, count)
    log.debug("AP {0}: hierarchical {1}, {2} candidates, {3} maxima".format(ap_id, hier, len(candidates), count))
    return ApSurvey(ap_id, tuple(estimates), mean_field, var_field, count)
