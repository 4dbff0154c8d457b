#!/usr/bin/env python3
import math

import numpy as np
import pytest

from mgprl.core import (GridSpec, Pose2D, ScalarField, Transform2D, apply, compose, grid_cell_center,
                        inverse, normalize_angle)
from mgprl.exceptions import InvalidParameterError, OutOfGridError


def random_transform(rng, reflected=False):
    return Transform2D(rng.uniform(-math.pi, math.pi), rng.uniform(-10.0, 10.0, size=2), reflected)


def assert_same_transform(a, b, tol=1e-9):
    np.testing.assert_allclose(a.matrix(), b.matrix(), atol=tol)


class TestAngles:
    def test_minus_pi_maps_to_pi(self):
        assert normalize_angle(-math.pi) == math.pi

    def test_wraps_large_angles(self):
        assert normalize_angle(2.5 * math.pi) == pytest.approx(0.5 * math.pi)
        assert Pose2D(1.0, 2.0, -1.5 * math.pi).yaw == pytest.approx(0.5 * math.pi)

    def test_pose_rejects_non_finite(self):
        with pytest.raises(InvalidParameterError):
            Pose2D(float("nan"), 0.0)


class TestCompose:
    def test_identity(self):
        assert_same_transform(compose(Transform2D.identity(), Transform2D.identity()), Transform2D.identity())

    def test_inverse_gives_identity(self, rng):
        for reflected in (False, True):
            t = random_transform(rng, reflected)
            assert_same_transform(compose(t, inverse(t)), Transform2D.identity())
            assert_same_transform(compose(inverse(t), t), Transform2D.identity())

    def test_quarter_turns(self):
        quarter = Transform2D(math.pi / 2)
        np.testing.assert_allclose(apply(compose(quarter, quarter), (1.0, 0.0)), (-1.0, 0.0), atol=1e-9)

    def test_matches_sequential_application(self, rng):
        pts = rng.uniform(-5.0, 5.0, size=(20, 2))
        for _ in range(50):
            a, b = random_transform(rng, rng.random() < 0.3), random_transform(rng, rng.random() < 0.3)
            np.testing.assert_allclose(apply(compose(a, b), pts), apply(a, apply(b, pts)), atol=1e-9)

    def test_associative(self, rng):
        for _ in range(50):
            a, b, c = (random_transform(rng) for _ in range(3))
            assert_same_transform(compose(compose(a, b), c), compose(a, compose(b, c)))

    def test_linear_part_is_orthonormal(self, rng):
        linear = random_transform(rng).linear()
        np.testing.assert_allclose(linear @ linear.T, np.eye(2), atol=1e-12)


class TestApply:
    def test_identity(self):
        assert apply(Transform2D.identity(), (3.0, 4.0)) == pytest.approx((3.0, 4.0))

    def test_translation(self):
        assert apply(Transform2D(0.0, (1.0, 2.0)), (0.0, 0.0)) == pytest.approx((1.0, 2.0))

    def test_half_turn(self):
        np.testing.assert_allclose(apply(Transform2D(math.pi, (1.0, 0.0)), (1.0, 0.0)), (0.0, 0.0), atol=1e-12)

    def test_batch_shape(self):
        out = Transform2D(0.3, (1.0, -1.0)).apply(np.zeros((5, 2)))
        assert out.shape == (5, 2)


class TestGrid:
    @pytest.mark.parametrize("origin, cell, index, expected", [
        ((0.0, 0.0), 1.0, (0, 0), (0.5, 0.5)),
        ((0.0, 0.0), 0.5, (2, 0), (1.25, 0.25)),
        ((-5.0, -5.0), 1.0, (0, 0), (-4.5, -4.5)),
    ])
    def test_cell_center(self, origin, cell, index, expected):
        assert grid_cell_center(GridSpec(origin, cell, 10, 10), *index) == pytest.approx(expected)

    def test_out_of_range(self):
        with pytest.raises(OutOfGridError):
            grid_cell_center(GridSpec((0.0, 0.0), 1.0, 3, 3), 3, 0)

    def test_center_index_round_trip(self):
        grid = GridSpec((-2.0, 1.0), 0.5, 7, 4)
        for i in range(grid.width):
            for j in range(grid.height):
                assert grid.cell_index(grid.cell_center(i, j)) == (i, j)

    def test_upper_boundary_belongs_to_last_cell(self):
        grid = GridSpec((0.0, 0.0), 1.0, 4, 3)
        assert grid.cell_index((4.0, 3.0)) == (3, 2)
        with pytest.raises(OutOfGridError):
            grid.cell_index((4.5, 1.0))

    def test_centers_are_c_ordered(self):
        grid = GridSpec((0.0, 0.0), 1.0, 3, 2)
        centers = grid.centers()
        assert tuple(centers[1]) == grid.cell_center(0, 1)
        assert tuple(centers[2]) == grid.cell_center(1, 0)

    def test_rejects_degenerate_grids(self):
        with pytest.raises(InvalidParameterError):
            GridSpec((0.0, 0.0), 0.0, 4, 4)
        with pytest.raises(InvalidParameterError):
            GridSpec((0.0, 0.0), 1.0, 1, 4)


class TestScalarField:
    def test_values_indexed_by_cell(self):
        grid = GridSpec((0.0, 0.0), 1.0, 3, 2)
        field = ScalarField(grid, np.arange(6.0))
        assert field.at(1, 0) == 2.0
        assert field.value_at((2.5, 1.5)) == 5.0

    def test_values_are_read_only(self):
        field = ScalarField(GridSpec((0.0, 0.0), 1.0, 2, 2), np.zeros(4))
        with pytest.raises(ValueError):
            field.values[0, 0] = 1.0

    def test_rejects_bad_values(self):
        grid = GridSpec((0.0, 0.0), 1.0, 2, 2)
        with pytest.raises(InvalidParameterError):
            ScalarField(grid, np.zeros(5))
        with pytest.raises(InvalidParameterError):
            ScalarField(grid, [0.0, 1.0, float("inf"), 2.0])
