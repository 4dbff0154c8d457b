#!/usr/bin/env python3
import logging, math

import numpy as np
import pytest

from mgprl.aploc import ApEstimate, EstimateKind
from mgprl.core import Pose2D, Transform2D, inverse, normalize_angle
from mgprl.exceptions import (AlignmentRejectedError, InsufficientOverlapError, InvalidParameterError,
                              WireFormatError)
from mgprl.oracle.alignment import belief
from mgprl.rello import (AlignmentConfig, HullAlignment, RobotBeliefMsg, align_pair, convex_hull, decode_message,
                         encode_message, relative_position, symmetric_consistency, weighted_rigid_align)

LAYOUT = {"p": (0.0, 0.0), "q": (6.0, 0.0), "r": (6.0, 4.0), "s": (0.0, 5.0), "t": (3.0, 7.0)}
TRUTH = Transform2D(0.7, (2.0, -3.0))


def seen_from_b(positions, truth=TRUTH):
    """Positions as robot b reports them when ``truth`` maps b's frame into a's."""
    back = inverse(truth)
    return {ap: back.apply(p) for ap, p in positions.items()}


def assert_transform_close(found, expected, tol):
    assert abs(normalize_angle(found.rotation - expected.rotation)) <= tol
    np.testing.assert_allclose(found.translation, expected.translation, atol=tol)


def signed_area(hull):
    pts = np.asarray(hull)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


class TestConvexHull:
    def test_square_with_center(self):
        hull = convex_hull([(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)])
        assert set(hull) == {(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)}
        assert signed_area(hull) > 0

    def test_triangle(self):
        hull = convex_hull([(0, 0), (4, 1), (1, 3)])
        assert len(hull) == 3 and signed_area(hull) > 0

    def test_collinear(self):
        assert convex_hull([(k, 2 * k) for k in range(5)]) == [(0.0, 0.0), (4.0, 8.0)]

    def test_empty(self):
        with pytest.raises(InvalidParameterError):
            convex_hull([])


class TestWeightedRigidAlign:
    def test_identity(self, rng):
        src = rng.uniform(-5.0, 5.0, size=(6, 2))
        fit = weighted_rigid_align(src, src, rng.uniform(0.1, 1.0, size=6))
        assert_transform_close(fit.transform, Transform2D.identity(), 1e-12)
        assert fit.error == pytest.approx(0.0, abs=1e-20)

    def test_constructed_transform(self, rng):
        src = rng.uniform(-5.0, 5.0, size=(5, 2))
        truth = Transform2D(math.radians(37.0), (2.0, -1.0))
        fit = weighted_rigid_align(src, truth.apply(src), np.ones(5))
        assert_transform_close(fit.transform, truth, 1e-9)
        assert fit.error < 1e-12
        assert not fit.degenerate

    def test_low_weight_outlier(self):
        src = np.array([[0.0, 0.0], [4.0, 0.0], [1.0, 3.0]])
        truth = Transform2D(0.4, (1.0, 2.0))
        dst = truth.apply(src)
        dst[2] += (5.0, -4.0)
        fit = weighted_rigid_align(src, dst, [1.0, 1.0, 1e-4])
        assert_transform_close(fit.transform, truth, 1e-3)

    def test_weight_scale_invariance(self, rng):
        src = rng.uniform(-5.0, 5.0, size=(6, 2))
        dst = Transform2D(-1.1, (0.5, 0.5)).apply(src) + rng.normal(0.0, 0.2, size=(6, 2))
        w = rng.uniform(0.1, 1.0, size=6)
        a = weighted_rigid_align(src, dst, w)
        b = weighted_rigid_align(src, dst, 7.5 * w)
        assert_transform_close(a.transform, b.transform, 1e-9)

    def test_error_invariant_under_common_motion(self, rng):
        src = rng.uniform(-5.0, 5.0, size=(6, 2))
        dst = Transform2D(0.3, (1.0, 0.0)).apply(src) + rng.normal(0.0, 0.3, size=(6, 2))
        w = rng.uniform(0.1, 1.0, size=6)
        motion = Transform2D(2.2, (-4.0, 9.0))
        before = weighted_rigid_align(src, dst, w).error
        after = weighted_rigid_align(motion.apply(src), motion.apply(dst), w).error
        assert after == pytest.approx(before, abs=1e-9)

    def test_reflection_only_when_allowed(self, rng):
        src = rng.uniform(-5.0, 5.0, size=(5, 2))
        mirrored = Transform2D(0.5, (1.0, 1.0), reflected=True).apply(src)
        proper = weighted_rigid_align(src, mirrored, np.ones(5))
        assert not proper.transform.reflected
        assert np.linalg.det(proper.transform.linear()) == pytest.approx(1.0)
        assert proper.error > 1e-3
        improper = weighted_rigid_align(src, mirrored, np.ones(5), allow_reflection=True)
        assert improper.transform.reflected
        assert improper.error < 1e-12

    def test_single_point_is_translation_only(self):
        fit = weighted_rigid_align([(1.0, 1.0), (1.0, 1.0)], [(3.0, 0.0), (3.0, 0.0)], [1.0, 2.0])
        assert fit.degenerate
        assert fit.transform.rotation == 0.0
        assert fit.transform.translation == pytest.approx((2.0, -1.0))

    def test_bad_inputs(self):
        with pytest.raises(InvalidParameterError):
            weighted_rigid_align([(0.0, 0.0)], [(0.0, 0.0), (1.0, 1.0)], [1.0])
        with pytest.raises(InvalidParameterError):
            weighted_rigid_align([(0.0, 0.0), (1.0, 0.0)], [(0.0, 0.0), (1.0, 0.0)], [0.0, 0.0])


class TestAlignPair:
    def test_square_under_quarter_turn(self):
        square = {"a": (0.0, 0.0), "b": (4.0, 0.0), "c": (4.0, 4.0), "d": (0.0, 4.0)}
        truth = Transform2D(math.pi / 2, (5.0, 5.0))
        result = align_pair(belief("a", square), belief("b", seen_from_b(square, truth)), AlignmentConfig())
        assert result.accepted
        assert_transform_close(result.transform, truth, 1e-6)

    def test_partial_overlap(self):
        hidden = {ap: p for ap, p in LAYOUT.items() if ap != "t"}
        full = align_pair(belief("a", LAYOUT), belief("b", seen_from_b(LAYOUT)), AlignmentConfig())
        partial = align_pair(belief("a", LAYOUT), belief("b", seen_from_b(hidden)), AlignmentConfig())
        assert sorted(partial.correspondence) == ["p", "q", "r", "s"]
        assert_transform_close(partial.transform, TRUTH, 1e-6)
        assert_transform_close(partial.transform, full.transform, 1e-6)

    def test_two_shared_aps(self):
        two = {"p": LAYOUT["p"], "q": LAYOUT["q"]}
        with pytest.raises(InsufficientOverlapError):
            align_pair(belief("a", LAYOUT), belief("b", seen_from_b(two)), AlignmentConfig())

    def test_collinear_layout_is_flagged(self):
        line = {"p": (0.0, 0.0), "q": (2.0, 1.0), "r": (6.0, 3.0)}
        result = align_pair(belief("a", line), belief("b", seen_from_b(line)), AlignmentConfig())
        assert result.degenerate
        assert all(ea.position == pytest.approx(line[ap]) for ap, (ea, _) in result.correspondence.items())
        assert_transform_close(result.transform, TRUTH, 1e-6)

    def candidate_scenario(self):
        positions = dict(LAYOUT)
        estimates = [ApEstimate(ap, p, 1.0, EstimateKind.HIERARCHICAL, 0.0)
                     for ap, p in positions.items() if ap != "q"]
        estimates.append(ApEstimate("q", (6.0, 3.0), 1.0, EstimateKind.HIERARCHICAL, 0.2))
        estimates.append(ApEstimate("q", (6.0, 0.0), 0.6, EstimateKind.LOCAL_MAXIMUM, 0.7))
        return RobotBeliefMsg("a", estimates), belief("b", seen_from_b(positions))

    def test_candidate_corrects_bad_estimate(self):
        a, b = self.candidate_scenario()
        result = align_pair(a, b, AlignmentConfig())
        assert result.accepted and result.weighted_error < 0.05
        assert result.corrections == ["q"]
        rel = relative_position(result)
        assert math.hypot(rel[0] - 2.0, rel[1] + 3.0) < 0.3

    def test_without_candidates_the_gate_fails(self, caplog):
        a, b = self.candidate_scenario()
        with caplog.at_level(logging.WARNING, logger="mgprl.rello"):
            result = align_pair(a, b, AlignmentConfig(use_candidates=False))
        assert not result.accepted
        assert result.corrections == []
        assert "rejected" in caplog.text

    def test_greedy_search_finds_the_candidate(self):
        a, b = self.candidate_scenario()
        result = align_pair(a, b, AlignmentConfig(max_candidate_combinations=1))
        assert result.accepted
        assert result.corrections == ["q"]

    def test_exhaustive_counts_every_pairing(self):
        a, b = self.candidate_scenario()
        assert align_pair(a, b, AlignmentConfig()).evaluated == 2

    def test_threshold_is_strict(self):
        a, b = belief("a", LAYOUT), belief("b", seen_from_b(LAYOUT))
        exact = align_pair(a, b, AlignmentConfig())
        assert exact.accepted
        noisy = dict(LAYOUT, q=(6.5, 0.5))
        rejected = align_pair(belief("a", noisy), b, AlignmentConfig())
        assert not rejected.accepted
        assert rejected.weighted_error >= 0.05

    def test_low_weight_candidate_does_not_win_by_weight_alone(self):
        # equilateral layout with radial displacements of q: the best fit is a pure
        # translation, so the weighted error is w d^2 * 2 / (2 + w)
        side = 4.0
        tri = {"p": (0.0, 0.0), "r": (side, 0.0), "q": (side / 2, side * math.sqrt(3) / 2)}
        qx, qy = tri["q"]
        estimates = [ApEstimate(ap, tri[ap], 1.0, EstimateKind.HIERARCHICAL, 0.0) for ap in ("p", "r")]
        estimates.append(ApEstimate("q", (qx, qy + 0.3), 1.0, EstimateKind.HIERARCHICAL, 0.5))
        estimates.append(ApEstimate("q", (qx, qy + math.sqrt(0.5)), 0.1, EstimateKind.LOCAL_MAXIMUM, 9.0))
        a = RobotBeliefMsg("a", estimates)
        result = align_pair(a, belief("b", seen_from_b(tri)), AlignmentConfig(lambda_=0.1))
        # raw errors: 0.06 for the hierarchical pick, 0.0476 for the candidate;
        # per unit weight: 0.02 against 0.0227
        assert result.corrections == []
        assert result.accepted
        assert result.weighted_error == pytest.approx(0.09 * 2.0 / 3.0, rel=1e-6)

    def test_normalized_error(self):
        noisy = dict(LAYOUT, q=(6.1, 0.1))
        b = belief("b", seen_from_b(LAYOUT))
        summed = align_pair(belief("a", noisy), b, AlignmentConfig())
        per_ap = align_pair(belief("a", noisy), b, AlignmentConfig(normalize_by_count=True))
        assert per_ap.weighted_error == pytest.approx(summed.weighted_error / 5)


class TestRelativePosition:
    @pytest.mark.parametrize("transform, expected", [
        (Transform2D.identity(), (0.0, 0.0)),
        (Transform2D(0.0, (5.0, 5.0)), (5.0, 5.0)),
        (Transform2D(math.pi / 2, (1.0, 0.0)), (1.0, 0.0)),
    ])
    def test_origin_maps_to_translation(self, transform, expected):
        alignment = HullAlignment(("a", "b"), transform, 0.0, True, {})
        assert relative_position(alignment) == pytest.approx(expected)


class TestSymmetricConsistency:
    def test_exact_alignments(self):
        a, b = belief("a", LAYOUT), belief("b", seen_from_b(LAYOUT))
        ab, ba = align_pair(a, b, AlignmentConfig()), align_pair(b, a, AlignmentConfig())
        assert symmetric_consistency(ab, ba) == pytest.approx(0.0, abs=1e-9)

    def test_jittered_alignments(self, rng):
        deviations = []
        for _ in range(20):
            a = belief("a", {ap: tuple(np.add(p, rng.normal(0.0, 0.1, 2))) for ap, p in LAYOUT.items()})
            b = belief("b", {ap: tuple(np.add(p, rng.normal(0.0, 0.1, 2)))
                             for ap, p in seen_from_b(LAYOUT).items()})
            cfg = AlignmentConfig(lambda_=10.0)
            deviations.append(symmetric_consistency(align_pair(a, b, cfg), align_pair(b, a, cfg)))
        assert np.median(deviations) < 0.5

    def test_needs_accepted_alignments(self):
        a, b = belief("a", dict(LAYOUT, q=(9.0, 3.0))), belief("b", seen_from_b(LAYOUT))
        ab, ba = align_pair(a, b, AlignmentConfig()), align_pair(b, a, AlignmentConfig())
        with pytest.raises(AlignmentRejectedError):
            symmetric_consistency(ab, ba)

    def test_needs_reverse_pairs(self):
        a, b = belief("a", LAYOUT), belief("b", seen_from_b(LAYOUT))
        ab = align_pair(a, b, AlignmentConfig())
        with pytest.raises(InvalidParameterError):
            symmetric_consistency(ab, ab)


class TestWireFormat:
    def message(self):
        estimates = [ApEstimate("00:11:22:33:44:01", (1.25, -0.5), 1.0, EstimateKind.HIERARCHICAL, 0.8),
                     ApEstimate("00:11:22:33:44:01", (4.0, 2.0), 0.3, EstimateKind.LOCAL_MAXIMUM, 2.4),
                     ApEstimate("00:11:22:33:44:02", (0.0, 3.5), 0.7, EstimateKind.HIERARCHICAL, 1.1)]
        return RobotBeliefMsg("r1", estimates, Pose2D(2.0, 1.0, 0.25), 12)

    def test_stable_bytes(self):
        assert encode_message(self.message()) == encode_message(self.message())

    def test_decode(self):
        msg = decode_message(encode_message(self.message()))
        assert msg == self.message()

    def test_field_order(self):
        text = encode_message(self.message())
        keys = [line.split(":")[0] for line in text.splitlines() if not line.startswith((" ", "-"))]
        assert keys == ["format", "version", "robot_id", "timestamp", "pose", "estimates"]

    @pytest.mark.parametrize("text", [
        "format: other\nversion: 1\n",
        "format: mgprl-belief\nversion: 2\n",
        "format: mgprl-belief\nversion: 1\nrobot_id: r1\n",
        "[unclosed",
    ])
    def test_rejects_bad_records(self, text):
        with pytest.raises(WireFormatError):
            decode_message(text)

    def test_one_hierarchical_estimate_per_ap(self):
        twice = [ApEstimate("ap", (0.0, 0.0), 1.0, EstimateKind.HIERARCHICAL, 0.0),
                 ApEstimate("ap", (1.0, 0.0), 1.0, EstimateKind.HIERARCHICAL, 0.0)]
        with pytest.raises(InvalidParameterError):
            RobotBeliefMsg("r", twice)
