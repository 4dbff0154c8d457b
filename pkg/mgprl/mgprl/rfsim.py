#!/usr/bin/env python3
"""rfsim

Synthesizes ground-truth RSSI fields and noisy robot measurements.

The mean received power of an AP at ``x`` follows a log-distance path-loss
model with a frozen, spatially correlated shadowing field and an optional
per-query fading draw::

    R(x) = R_d0 - 10 * zeta * log10(max(d, d0) / d0) + F_large(x) + F_small

Worlds are read from versioned YAML files, see :func:`load_world`.
"""
import math, logging
from dataclasses import dataclass, field

import numpy as np
import yaml
from scipy.interpolate import RegularGridInterpolator

from mgprl.core import GridSpec, ScalarField
from mgprl.exceptions import ConfigError, InvalidParameterError, UnknownAccessPointError

log = logging.getLogger(__name__)

WORLD_FORMAT = "mgprl-world"
WORLD_VERSION = 1


@dataclass(frozen=True)
class PathLossParams:
    """Log-distance path-loss parameters of one AP."""
    ref_power_dbm: float = -20.0
    ref_distance: float = 1.0
    exponent: float = 3.0
    shadowing_sigma: float = 6.0
    shadowing_corr_length: float = 3.0
    fading_sigma: float = 1.0

    def __post_init__(self):
        if not self.ref_distance > 0:
            raise InvalidParameterError("ref_distance must be > 0")
        if not 2.0 <= self.exponent <= 4.0:
            raise InvalidParameterError("path-loss exponent must be in [2, 4], got {0}".format(self.exponent))
        if self.shadowing_sigma < 0 or self.fading_sigma < 0:
            raise InvalidParameterError("shadowing and fading sigmas must be >= 0")
        if not self.shadowing_corr_length > 0:
            raise InvalidParameterError("shadowing_corr_length must be > 0")


@dataclass(frozen=True, eq=False)
class ApGroundTruth:
    """A simulated AP with its frozen shadowing realization."""
    ap_id: str
    position: tuple
    params: PathLossParams
    shadowing_field: ScalarField = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        grid = self.shadowing_field.grid
        ox, oy = grid.origin
        xs = ox + (np.arange(grid.width) + 0.5) * grid.cell_size
        ys = oy + (np.arange(grid.height) + 0.5) * grid.cell_size
        interp = RegularGridInterpolator((xs, ys), self.shadowing_field.values, method="linear")
        object.__setattr__(self, "_interp", interp)
        object.__setattr__(self, "_bounds", (xs[0], xs[-1], ys[0], ys[-1]))

    def shadowing_at(self, points):
        """Bilinear interpolation of the shadowing field at (n, 2) points.

        Queries beyond the outermost cell centers take the edge value.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x0, x1, y0, y1 = self._bounds
        clipped = np.column_stack([np.clip(pts[:, 0], x0, x1), np.clip(pts[:, 1], y0, y1)])
        return self._interp(clipped)


@dataclass(frozen=True)
class RssiSample:
    """One RSSI measurement of one AP."""
    location: tuple
    ap_id: str
    value_dbm: float

    def __post_init__(self):
        object.__setattr__(self, "location", tuple(float(v) for v in self.location))
        if not math.isfinite(self.value_dbm):
            raise InvalidParameterError("RSSI value must be finite")
        object.__setattr__(self, "value_dbm", float(self.value_dbm))


def path_loss_mean(params, ap_position, points):
    """Deterministic log-distance part of the model at (n, 2) points.

    Distances below ``ref_distance`` are clamped to it.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dist = np.hypot(pts[:, 0] - ap_position[0], pts[:, 1] - ap_position[1])
    dist = np.maximum(dist, params.ref_distance)
    return params.ref_power_dbm - 10.0 * params.exponent * np.log10(dist / params.ref_distance)


def mean_rssi(ap, x, rng=None):
    """Mean received power of an AP at one location.

    Args:
        ap (:obj:`ApGroundTruth`): the AP.
        x (tuple): query location in meters.
        rng (:obj:`numpy.random.Generator`): optional stream. When given and the
            fading sigma is positive, an i.i.d. Gaussian fading term is added.

    Returns:
        float. RSSI in dBm.
    """
    value = path_loss_mean(ap.params, ap.position, [x])[0] + ap.shadowing_at([x])[0]
    if rng is not None and ap.params.fading_sigma > 0:
        value += rng.normal(0.0, ap.params.fading_sigma)
    return float(value)


def sample_measurement(ap, x, noise_sigma, rng):
    """Draws one noisy measurement.

    The value is the faded mean from :func:`mean_rssi` plus zero-mean Gaussian
    measurement noise of standard deviation ``noise_sigma``. Fading belongs to
    the AP, not to the noise level: it is drawn from ``rng`` whenever the AP's
    ``fading_sigma`` is positive (1 dB unless the world sets ``FADING_SIGMA``),
    so a zero ``noise_sigma`` still gives faded values. Worlds meant for
    noiseless runs set ``FADING_SIGMA: 0``, as the bundled ones do.

    Args:
        ap (:obj:`ApGroundTruth`): the AP to measure.
        x (tuple): measurement location in the world frame.
        noise_sigma (float): measurement noise level in dB.
        rng (:obj:`numpy.random.Generator`): the seeded stream to draw from.

    Returns:
        :obj:`RssiSample`.

    Raises:
        InvalidParameterError: if ``noise_sigma`` is negative.
    """
    if noise_sigma < 0:
        raise InvalidParameterError("noise sigma must be >= 0, got {0}".format(noise_sigma))
    value = mean_rssi(ap, x, rng)
    if noise_sigma > 0:
        value += rng.normal(0.0, noise_sigma)
    return RssiSample(tuple(x), ap.ap_id, value)


def realize_shadowing(grid, sigma, corr_length, rng):
    """Draws a zero-mean Gaussian field with squared-exponential correlation.

    The covariance over cell centers is factorized by eigendecomposition, with
    negative round-off eigenvalues clamped, so very long correlation lengths
    degrade gracefully to a spatially constant field.

    Args:
        grid (:obj:`GridSpec`): grid to realize the field on.
        sigma (float): per-cell standard deviation in dB.
        corr_length (float): correlation length scale in meters.
        rng (:obj:`numpy.random.Generator`): the seeded stream.

    Returns:
        :obj:`ScalarField`.
    """
    if sigma < 0:
        raise InvalidParameterError("shadowing sigma must be >= 0")
    n = grid.width * grid.height
    if sigma == 0:
        return ScalarField(grid, np.zeros(n))
    centers = grid.centers()
    diff = centers[:, None, :] - centers[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    cov = sigma ** 2 * np.exp(-0.5 * sq / corr_length ** 2)
    eigval, eigvec = np.linalg.eigh(cov)
    factor = eigvec * np.sqrt(np.clip(eigval, 0.0, None))
    values = factor @ rng.standard_normal(n)
    return ScalarField(grid, values)


@dataclass(frozen=True, eq=False)
class World:
    """Immutable simulated environment."""
    name: str
    grid: GridSpec
    aps: tuple
    seed: int = 0

    def __post_init__(self):
        ids = [ap.ap_id for ap in self.aps]
        if len(set(ids)) != len(ids):
            raise InvalidParameterError("AP ids must be unique within a world")

    @property
    def ap_ids(self):
        return [ap.ap_id for ap in self.aps]

    def ap(self, ap_id):
        for ap in self.aps:
            if ap.ap_id == ap_id:
                return ap
        raise UnknownAccessPointError("no AP {0} in world {1}".format(ap_id, self.name))

    def contains(self, point):
        x0, x1, y0, y1 = self.grid.extent
        return x0 <= point[0] <= x1 and y0 <= point[1] <= y1


def truth_mean(world, ap_id, points):
    """Noiseless mean RSSI (path loss plus shadowing, no fading) at (n, 2) points."""
    ap = world.ap(ap_id)
    return path_loss_mean(ap.params, ap.position, points) + ap.shadowing_at(points)


def _params_from(section, base, key_path):
    keys = {
        "REF_POWER_DBM": "ref_power_dbm",
        "REF_DISTANCE": "ref_distance",
        "EXPONENT": "exponent",
        "SHADOWING_SIGMA": "shadowing_sigma",
        "SHADOWING_CORR_LENGTH": "shadowing_corr_length",
        "FADING_SIGMA": "fading_sigma",
    }
    values = dict(base.__dict__) if base else {}
    for key, value in (section or {}).items():
        if key not in keys:
            raise ConfigError("{0}.{1}".format(key_path, key), "unknown path-loss parameter")
        try:
            values[keys[key]] = float(value)
        except (TypeError, ValueError):
            raise ConfigError("{0}.{1}".format(key_path, key), "expected a number, got {0!r}".format(value))
    try:
        return PathLossParams(**values)
    except InvalidParameterError as e:
        raise ConfigError(key_path, str(e))


def _number(mapping, key, key_path):
    if key not in mapping:
        raise ConfigError("{0}.{1}".format(key_path, key), "missing required key")
    try:
        return float(mapping[key])
    except (TypeError, ValueError):
        raise ConfigError("{0}.{1}".format(key_path, key), "expected a number, got {0!r}".format(mapping[key]))


def load_world(source, key_path="WORLD"):
    """Loads a world description.

    The schema (all keys uppercase)::

        FORMAT: mgprl-world
        VERSION: 1
        NAME: house
        SEED: 7
        BOUNDS: {ORIGIN: [0, 0], WIDTH: 10.0, HEIGHT: 7.0}
        CELL_SIZE: 0.5
        PATH_LOSS: {REF_POWER_DBM: -20, ..., FADING_SIGMA: 1.0}
        ACCESS_POINTS:
          - {ID: "00:11:22:33:44:01", X: 1.5, Y: 1.0, PATH_LOSS: {...}}

    Per-AP ``PATH_LOSS`` entries override the world-level parameters.

    Args:
        source: a path to a YAML file or an already loaded mapping.
        key_path (str): prefix used in error messages.

    Returns:
        :obj:`World`.

    Raises:
        ConfigError: naming the offending key path.
    """
    if isinstance(source, dict):
        data = source
    else:
        log.debug("Reading world file {0}".format(source))
        try:
            with open(source) as f:
                data = yaml.safe_load(f)
        except OSError as e:
            raise ConfigError(key_path, "cannot read world file: {0}".format(e))
    if not isinstance(data, dict):
        raise ConfigError(key_path, "world description must be a mapping")
    if data.get("FORMAT", WORLD_FORMAT) != WORLD_FORMAT:
        raise ConfigError(key_path + ".FORMAT", "expected {0!r}".format(WORLD_FORMAT))
    if int(data.get("VERSION", WORLD_VERSION)) != WORLD_VERSION:
        raise ConfigError(key_path + ".VERSION", "unsupported version {0}".format(data.get("VERSION")))

    bounds = data.get("BOUNDS")
    if not isinstance(bounds, dict):
        raise ConfigError(key_path + ".BOUNDS", "missing or not a mapping")
    origin = bounds.get("ORIGIN", [0.0, 0.0])
    width = _number(bounds, "WIDTH", key_path + ".BOUNDS")
    height = _number(bounds, "HEIGHT", key_path + ".BOUNDS")
    cell = float(data.get("CELL_SIZE", 0.5))
    try:
        grid = GridSpec(tuple(origin), cell, int(round(width / cell)), int(round(height / cell)))
    except InvalidParameterError as e:
        raise ConfigError(key_path + ".BOUNDS", str(e))

    base = _params_from(data.get("PATH_LOSS"), None, key_path + ".PATH_LOSS")
    seed = int(data.get("SEED", 0))
    entries = data.get("ACCESS_POINTS")
    if not isinstance(entries, list) or not entries:
        raise ConfigError(key_path + ".ACCESS_POINTS", "expected a non-empty list")

    streams = np.random.SeedSequence(seed).spawn(len(entries))
    aps = []
    seen = set()
    for idx, entry in enumerate(entries):
        entry_path = "{0}.ACCESS_POINTS[{1}]".format(key_path, idx)
        if not isinstance(entry, dict):
            raise ConfigError(entry_path, "expected a mapping with ID, X and Y")
        if "ID" not in entry:
            raise ConfigError(entry_path + ".ID", "missing required key")
        ap_id = str(entry["ID"])
        if ap_id in seen:
            raise ConfigError(entry_path + ".ID", "duplicate AP id {0}".format(ap_id))
        seen.add(ap_id)
        position = (_number(entry, "X", entry_path), _number(entry, "Y", entry_path))
        params = _params_from(entry.get("PATH_LOSS"), base, entry_path + ".PATH_LOSS")
        rng = np.random.default_rng(streams[idx])
        shadowing = realize_shadowing(grid, params.shadowing_sigma, params.shadowing_corr_length, rng)
        log.debug("Realized shadowing for AP {0} at {1}".format(ap_id, position))
        aps.append(ApGroundTruth(ap_id, position, params, shadowing))
    return World(str(data.get("NAME", "world")), grid, tuple(aps), seed)
