#!/usr/bin/env python3
"""rello

Relative localization of robot pairs from their AP beliefs.

Each robot broadcasts a :obj:`RobotBeliefMsg` holding its weighted AP
estimates in its own frame. Two messages are aligned by choosing one estimate
per shared AP on each side and solving a weighted rigid registration over the
identity-matched pairs. The pairing with the smallest weighted error wins, and
the alignment is accepted when that error is below the configured threshold.
"""
import math, logging, itertools
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import yaml

from mgprl.core import Pose2D, Transform2D, apply, compose
from mgprl.aploc import ApEstimate, EstimateKind
from mgprl.exceptions import (InvalidParameterError, InsufficientOverlapError,
                              AlignmentRejectedError, WireFormatError)

log = logging.getLogger(__name__)

WIRE_FORMAT = "mgprl-belief"
WIRE_VERSION = 1
MIN_SHARED_APS = 3
MAX_SWAP_SWEEPS = 20


@dataclass(frozen=True)
class AlignmentConfig:
    """Alignment settings.

    ``lambda_`` is the acceptance threshold on the weighted squared error in
    m^2. With ``normalize_by_count`` the error is divided by the number of
    shared APs before the comparison. ``use_candidates`` set to False restricts
    both sides to their hierarchical estimates.
    """
    lambda_: float = 0.05
    max_candidate_combinations: int = 512
    reflection_allowed: bool = False
    normalize_by_count: bool = False
    use_candidates: bool = True

    def __post_init__(self):
        if not self.lambda_ > 0:
            raise InvalidParameterError("alignment threshold must be > 0")
        if self.max_candidate_combinations < 1:
            raise InvalidParameterError("max_candidate_combinations must be >= 1")


@dataclass(frozen=True)
class RobotBeliefMsg:
    """What one robot tells the others about its AP estimates."""
    robot_id: str
    estimates: tuple
    self_position: Pose2D = Pose2D(0.0, 0.0, 0.0)
    timestamp: int = 0

    def __post_init__(self):
        object.__setattr__(self, "estimates", tuple(self.estimates))
        for ap_id, group in self.by_ap().items():
            kinds = [e.kind for e in group]
            if kinds.count(EstimateKind.HIERARCHICAL) != 1:
                raise InvalidParameterError(
                    "robot {0} reports {1} hierarchical estimates for AP {2}".format(
                        self.robot_id, kinds.count(EstimateKind.HIERARCHICAL), ap_id))

    @property
    def ap_ids(self):
        """list: reported AP ids, in order of first appearance."""
        return list(self.by_ap())

    def by_ap(self):
        """dict: AP id to its estimates, hierarchical estimate first."""
        out = {}
        for est in self.estimates:
            out.setdefault(est.ap_id, []).append(est)
        for group in out.values():
            group.sort(key=lambda e: e.kind != EstimateKind.HIERARCHICAL)
        return out


class RigidFit(NamedTuple):
    transform: Transform2D
    error: float
    degenerate: bool


@dataclass(frozen=True, eq=False)
class HullAlignment:
    """Result of aligning robot ``pair[1]``'s frame into robot ``pair[0]``'s frame.

    ``correspondence`` maps every shared AP id to the (a-side, b-side)
    estimates picked for it.
    """
    pair: tuple
    transform: Transform2D
    weighted_error: float
    accepted: bool
    correspondence: dict = field(repr=False)
    hull_a: list = field(default_factory=list, repr=False)
    hull_b: list = field(default_factory=list, repr=False)
    degenerate: bool = False
    evaluated: int = 0

    @property
    def corrections(self):
        """list: AP ids where an a-side candidate replaced the hierarchical estimate."""
        return [ap for ap, (ea, _) in self.correspondence.items()
                if ea.kind != EstimateKind.HIERARCHICAL]


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points):
    """Counterclockwise convex hull by the monotone chain method.

    Collinear points on hull edges are dropped, so a collinear input yields its
    two extreme points.

    Args:
        points: at least one (x, y) point.

    Returns:
        list. Hull vertices as tuples, counterclockwise, starting at the lowest x.
    """
    pts = sorted(set((float(p[0]), float(p[1])) for p in points))
    if not pts:
        raise InvalidParameterError("convex hull needs at least one point")
    if len(pts) <= 2:
        return pts
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def weighted_rigid_align(src, dst, weights, allow_reflection=False):
    """Weighted least-squares rigid registration with dst ~ T(src).

    Uses weighted centroids and the SVD of the weighted cross-covariance. The
    determinant of the rotation is forced to +1 unless reflections are allowed.
    When fewer than two distinct weighted points exist only the translation is
    solved and the result is flagged degenerate.

    Args:
        src: (n, 2) source points.
        dst: (n, 2) destination points, matched by row.
        weights: (n,) nonnegative weights with a positive sum.
        allow_reflection (bool): permit an improper solution.

    Returns:
        :obj:`RigidFit`. The transform, ``sum w * |dst - T(src)|^2`` and the degenerate flag.

    Raises:
        InvalidParameterError: on mismatched shapes or invalid weights.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    w = np.asarray(weights, dtype=float).ravel()
    if not (len(src) == len(dst) == len(w)) or len(w) == 0:
        raise InvalidParameterError("need matching, non-empty point sets and weights")
    if np.any(w < 0) or not w.sum() > 0:
        raise InvalidParameterError("weights must be nonnegative with a positive sum")
    wn = w / w.sum()
    c_src = wn @ src
    c_dst = wn @ dst

    if len(np.unique(src[w > 0], axis=0)) < 2:
        transform = Transform2D(0.0, c_dst - c_src)
        degenerate = True
    else:
        cov = (src - c_src).T @ ((dst - c_dst) * wn[:, None])
        u, _, vt = np.linalg.svd(cov)
        rot = vt.T @ u.T
        reflected = False
        if np.linalg.det(rot) < 0:
            if allow_reflection:
                reflected = True
            else:
                rot = vt.T @ np.diag([1.0, -1.0]) @ u.T
        proper = rot @ np.diag([1.0, -1.0]) if reflected else rot
        transform = Transform2D(math.atan2(proper[1, 0], proper[0, 0]), c_dst - rot @ c_src, reflected)
        degenerate = False

    resid = dst - apply(transform, src)
    error = float(np.sum(w * np.sum(resid ** 2, axis=1)))
    return RigidFit(transform, error, degenerate)


def _options(msg, ap_id, use_candidates):
    group = msg.by_ap()[ap_id]
    return group if use_candidates else group[:1]


def _evaluate(pairs, cfg):
    """Fits one pairing. Returns (fit, search score, gated error).

    The search score is the weighted error per unit of total weight, so a
    pairing cannot win by picking low-weight estimates alone.
    """
    src = [pb.position for pa, pb in pairs]
    dst = [pa.position for pa, pb in pairs]
    weights = [pa.weight * pb.weight for pa, pb in pairs]
    fit = weighted_rigid_align(src, dst, weights, cfg.reflection_allowed)
    error = fit.error / len(pairs) if cfg.normalize_by_count else fit.error
    return fit, fit.error / sum(weights), error


def _exhaustive(choices, cfg):
    best = None
    evaluated = 0
    for combo in itertools.product(*choices):
        fit, score, error = _evaluate(combo, cfg)
        evaluated += 1
        if best is None or score < best[1]:
            best = (fit, score, error, combo)
    return best, evaluated


def _greedy(choices, cfg):
    combo = [opts[0] for opts in choices]
    fit, score, error = _evaluate(combo, cfg)
    best = (fit, score, error, tuple(combo))
    evaluated = 1
    for _ in range(MAX_SWAP_SWEEPS):
        improved = False
        for k, opts in enumerate(choices):
            for option in opts:
                trial = list(best[3])
                if trial[k] is option:
                    continue
                trial[k] = option
                fit, score, error = _evaluate(trial, cfg)
                evaluated += 1
                if score < best[1]:
                    best = (fit, score, error, tuple(trial))
                    improved = True
        if not improved:
            break
    return best, evaluated


def align_pair(a, b, cfg):
    """Aligns robot b's frame into robot a's frame.

    For every shared AP both sides offer their hierarchical estimate and, when
    enabled, their candidates. Pairings are searched exhaustively when their
    count is within ``max_candidate_combinations``; otherwise the search starts
    from the all-hierarchical pairing and applies per-AP best swaps until no
    swap improves. Each pairing is fitted by :func:`weighted_rigid_align` with
    combined weights ``w_a * w_b`` and ranked by its weighted error divided by
    the total weight; the first pairing reaching the lowest score wins. The
    acceptance gate applies to the weighted error itself.

    Args:
        a (:obj:`RobotBeliefMsg`): the reference robot.
        b (:obj:`RobotBeliefMsg`): the robot whose frame is aligned.
        cfg (:obj:`AlignmentConfig`): search and acceptance settings.

    Returns:
        :obj:`HullAlignment`. Unaccepted alignments still carry the best transform.

    Raises:
        InsufficientOverlapError: fewer than three shared APs.
    """
    b_aps = set(b.ap_ids)
    shared = [ap for ap in a.ap_ids if ap in b_aps]
    if len(shared) < MIN_SHARED_APS:
        raise InsufficientOverlapError("robots {0} and {1} share {2} APs, need {3}".format(
            a.robot_id, b.robot_id, len(shared), MIN_SHARED_APS))

    choices = []
    total = 1
    for ap in shared:
        opts = list(itertools.product(_options(a, ap, cfg.use_candidates),
                                      _options(b, ap, cfg.use_candidates)))
        choices.append(opts)
        total *= len(opts)

    if total <= cfg.max_candidate_combinations:
        (fit, _, error, combo), evaluated = _exhaustive(choices, cfg)
    else:
        log.debug("{0} pairings exceed the limit, using greedy search".format(total))
        (fit, _, error, combo), evaluated = _greedy(choices, cfg)

    hull_a = convex_hull([pa.position for pa, _ in combo])
    hull_b = convex_hull([pb.position for _, pb in combo])
    accepted = error < cfg.lambda_
    degenerate = fit.degenerate or len(hull_a) <= 2 or len(hull_b) <= 2
    if not accepted:
        log.warning("Alignment {0}<-{1} rejected: error {2:.4f} >= {3}".format(
            a.robot_id, b.robot_id, error, cfg.lambda_))
    else:
        log.debug("Alignment {0}<-{1} accepted: error {2:.6f}, {3} pairings".format(
            a.robot_id, b.robot_id, error, evaluated))
    return HullAlignment(
        pair=(a.robot_id, b.robot_id),
        transform=fit.transform,
        weighted_error=float(error),
        accepted=accepted,
        correspondence={ap: pair for ap, pair in zip(shared, combo)},
        hull_a=hull_a,
        hull_b=hull_b,
        degenerate=degenerate,
        evaluated=evaluated,
    )


def relative_position(alignment):
    """tuple: position of the neighbor's frame origin in the reference frame."""
    return apply(alignment.transform, (0.0, 0.0))


def symmetric_consistency(aij, aji):
    """Deviation from identity of ``T_ij o T_ji``, as a translation norm in meters.

    Raises:
        AlignmentRejectedError: either alignment was not accepted.
        InvalidParameterError: the alignments are not of the same pair.
    """
    if not (aij.accepted and aji.accepted):
        raise AlignmentRejectedError("consistency needs two accepted alignments")
    if tuple(aij.pair) != tuple(reversed(aji.pair)):
        raise InvalidParameterError("alignments {0} and {1} are not reverses".format(aij.pair, aji.pair))
    loop = compose(aij.transform, aji.transform)
    return float(math.hypot(*loop.translation))


def encode_message(msg):
    """Serializes a belief message to its YAML wire form.

    Keys are emitted in a fixed order so identical messages give identical bytes.

    Returns:
        str. The YAML document.
    """
    record = {
        "format": WIRE_FORMAT,
        "version": WIRE_VERSION,
        "robot_id": str(msg.robot_id),
        "timestamp": int(msg.timestamp),
        "pose": {"x": float(msg.self_position.x),
                 "y": float(msg.self_position.y),
                 "yaw": float(msg.self_position.yaw)},
        "estimates": [{"ap_id": str(e.ap_id),
                       "kind": e.kind.value,
                       "x": float(e.position[0]),
                       "y": float(e.position[1]),
                       "weight": float(e.weight),
                       "uncertainty": float(e.local_uncertainty)} for e in msg.estimates],
    }
    return yaml.safe_dump(record, sort_keys=False, default_flow_style=False)


def decode_message(text):
    """Parses a YAML wire record back into a :obj:`RobotBeliefMsg`.

    Raises:
        WireFormatError: unreadable YAML, wrong format tag or version, or a malformed entry.
    """
    try:
        record = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise WireFormatError("unreadable belief message: {0}".format(e))
    if not isinstance(record, dict) or record.get("format") != WIRE_FORMAT:
        raise WireFormatError("not a {0} record".format(WIRE_FORMAT))
    if record.get("version") != WIRE_VERSION:
        raise WireFormatError("unsupported belief version {0}".format(record.get("version")))
    try:
        pose = record["pose"]
        estimates = [ApEstimate(e["ap_id"], (e["x"], e["y"]), e["weight"], e["kind"], e["uncertainty"])
                     for e in record["estimates"]]
        return RobotBeliefMsg(record["robot_id"], estimates,
                              Pose2D(pose["x"], pose["y"], pose["yaw"]), record["timestamp"])
    except (KeyError, TypeError, ValueError) as e:
        raise WireFormatError("malformed belief message: {0}".format(e))
