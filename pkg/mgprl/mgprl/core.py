#!/usr/bin/env python3
"""core

Shared planar geometry and field types used by every other submodule.

All of the types here are immutable value types. Angles are radians,
normalized to (-pi, pi] on construction, and lengths are meters.

This is a terminal submodule for the mgprl package, and so should
not import any additional mgprl submodules except the exceptions.
"""
import math, logging
from dataclasses import dataclass, field

import numpy as np

from mgprl.exceptions import InvalidParameterError, OutOfGridError

log = logging.getLogger(__name__)


def normalize_angle(angle):
    """Wraps an angle to (-pi, pi].

    Args:
        angle (float): angle in radians.

    Returns:
        float. The equivalent angle in (-pi, pi].
    """
    wrapped = math.remainder(float(angle), 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def _rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2D:
    """Planar robot pose."""
    x: float
    y: float
    yaw: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.yaw)):
            raise InvalidParameterError("pose coordinates must be finite")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @property
    def position(self):
        """tuple: The (x, y) position of the pose."""
        return (self.x, self.y)

    def as_transform(self):
        """Transform2D: The transform taking pose-frame points into the parent frame."""
        return Transform2D(self.yaw, (self.x, self.y))


@dataclass(frozen=True)
class Transform2D:
    """Planar rigid transform ``p -> R(rotation) @ p + translation``.

    When ``reflected`` is set the x-axis mirror ``(x, y) -> (x, -y)`` is applied
    before the rotation. Reflections only ever appear when an alignment is
    explicitly allowed to return one.
    """
    rotation: float = 0.0
    translation: tuple = (0.0, 0.0)
    reflected: bool = False

    def __post_init__(self):
        tx, ty = (float(v) for v in self.translation)
        if not (math.isfinite(self.rotation) and math.isfinite(tx) and math.isfinite(ty)):
            raise InvalidParameterError("transform parameters must be finite")
        object.__setattr__(self, "rotation", normalize_angle(self.rotation))
        object.__setattr__(self, "translation", (tx, ty))
        object.__setattr__(self, "reflected", bool(self.reflected))

    @classmethod
    def identity(cls):
        return cls()

    def linear(self):
        """numpy.ndarray: The 2x2 linear part, orthonormal by construction."""
        rot = _rotation(self.rotation)
        if self.reflected:
            return rot @ np.diag([1.0, -1.0])
        return rot

    def matrix(self):
        """numpy.ndarray: The 3x3 homogeneous matrix of the transform."""
        out = np.eye(3)
        out[:2, :2] = self.linear()
        out[:2, 2] = self.translation
        return out

    def apply(self, points):
        """Applies the transform to one point or an (n, 2) array of points."""
        return apply(self, points)


def apply(t, p):
    """Applies a transform to a point: rotate, then translate.

    Args:
        t (:obj:`Transform2D`): the transform.
        p: a single (x, y) point or an (n, 2) array of points.

    Returns:
        A tuple for a single point, an (n, 2) array otherwise.
    """
    pts = np.asarray(p, dtype=float)
    out = pts @ t.linear().T + np.asarray(t.translation)
    if pts.ndim == 1:
        return (float(out[0]), float(out[1]))
    return out


def compose(a, b):
    """Composes two transforms so that applying the result equals applying b then a.

    Args:
        a (:obj:`Transform2D`): outer transform.
        b (:obj:`Transform2D`): inner transform.

    Returns:
        :obj:`Transform2D`. ``a o b``.
    """
    sign = -1.0 if a.reflected else 1.0
    return Transform2D(
        a.rotation + sign * b.rotation,
        apply(a, b.translation),
        a.reflected != b.reflected,
    )


def inverse(t):
    """Transform2D: the inverse of ``t``."""
    rotation = t.rotation if t.reflected else -t.rotation
    linear_inv = t.linear().T
    translation = -(linear_inv @ np.asarray(t.translation))
    return Transform2D(rotation, translation, t.reflected)


@dataclass(frozen=True)
class GridSpec:
    """A regular grid of square cells.

    Cell ``(i, j)`` spans ``[origin_x + i*cell_size, origin_x + (i+1)*cell_size)``
    along x, and the same with ``j`` along y.
    """
    origin: tuple
    cell_size: float
    width: int
    height: int

    def __post_init__(self):
        ox, oy = (float(v) for v in self.origin)
        object.__setattr__(self, "origin", (ox, oy))
        if not self.cell_size > 0:
            raise InvalidParameterError("cell_size must be > 0, got {0}".format(self.cell_size))
        if int(self.width) < 2 or int(self.height) < 2:
            raise InvalidParameterError("grid must be at least 2x2, got {0}x{1}".format(self.width, self.height))
        object.__setattr__(self, "cell_size", float(self.cell_size))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def shape(self):
        return (self.width, self.height)

    @property
    def extent(self):
        """tuple: (x_min, x_max, y_min, y_max) of the grid in meters."""
        ox, oy = self.origin
        return (ox, ox + self.width * self.cell_size, oy, oy + self.height * self.cell_size)

    def cell_center(self, i, j):
        return grid_cell_center(self, i, j)

    def cell_index(self, point):
        """Finds the cell containing a metric point.

        Points exactly on the upper boundary belong to the last cell.

        Raises:
            OutOfGridError: the point lies outside the grid.
        """
        ox, oy = self.origin
        fi = (point[0] - ox) / self.cell_size
        fj = (point[1] - oy) / self.cell_size
        i, j = int(math.floor(fi)), int(math.floor(fj))
        if i == self.width and math.isclose(fi, self.width):
            i -= 1
        if j == self.height and math.isclose(fj, self.height):
            j -= 1
        if not (0 <= i < self.width and 0 <= j < self.height):
            raise OutOfGridError("point {0} is outside grid extent {1}".format(tuple(point), self.extent))
        return (i, j)

    def centers(self):
        """numpy.ndarray: (width*height, 2) cell centers in C order over (i, j)."""
        ox, oy = self.origin
        xs = ox + (np.arange(self.width) + 0.5) * self.cell_size
        ys = oy + (np.arange(self.height) + 0.5) * self.cell_size
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])


def grid_cell_center(g, i, j):
    """Returns the metric center of cell (i, j).

    Args:
        g (:obj:`GridSpec`): the grid.
        i (int): x index.
        j (int): y index.

    Raises:
        OutOfGridError: if either index is out of range.
    """
    if not (0 <= i < g.width and 0 <= j < g.height):
        raise OutOfGridError("cell ({0}, {1}) outside {2}x{3} grid".format(i, j, g.width, g.height))
    ox, oy = g.origin
    return (ox + (i + 0.5) * g.cell_size, oy + (j + 0.5) * g.cell_size)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real values over a grid, indexed ``values[i, j]``."""
    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.size != self.grid.width * self.grid.height:
            raise InvalidParameterError("field has {0} values for a {1}x{2} grid".format(
                values.size, self.grid.width, self.grid.height))
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise InvalidParameterError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def at(self, i, j):
        return float(self.values[i, j])

    def value_at(self, point):
        """float: Value of the cell containing a metric point."""
        return self.at(*self.grid.cell_index(point))
