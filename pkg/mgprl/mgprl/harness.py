#!/usr/bin/env python3
"""harness

Multi-robot simulation episodes and their metrics.

An episode places n robots in a simulated world. Every cycle each robot walks
and samples every AP it hears, updates its field model, estimates AP
positions, broadcasts its belief and aligns with every neighbor. Robots work
in their own frame, the frame of their start pose; only the harness knows the
start poses and the true AP positions, and uses them for metrics alone.
"""
import os, csv, math, time, logging
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from mgprl import aploc, rello
from mgprl.core import Pose2D, apply, compose, inverse
from mgprl.rfsim import RssiSample, PathLossParams, load_world, path_loss_mean, sample_measurement, truth_mean
from mgprl.exceptions import ConfigError, InvalidParameterError, InsufficientOverlapError, MgprlError

log = logging.getLogger(__name__)

METRIC_COLUMNS = ["cycle", "robot", "samples", "ale_r", "ale_ap", "ale_ap_hier", "corrections",
                  "rmse", "uncertainty", "accept_rate", "consistency", "error"]
TIMING_COLUMNS = ["cycle", "robot", "fit_seconds", "predict_seconds"]
ALIGNMENT_COLUMNS = ["cycle", "robot_a", "robot_b", "accepted", "degenerate", "weighted_error",
                     "rotation", "tx", "ty", "evaluated", "corrections"]
SUMMARY_METRICS = ("ale_ap", "ale_ap_hier", "ale_r", "rmse", "uncertainty", "accept_rate")
BENCH_COLUMNS = ["gamma", "m", "joint_seconds", "independent_seconds", "ratio"]

WALL_MARGIN = 0.1
NAN = float("nan")


@dataclass(frozen=True)
class WalkConfig:
    step: float = 0.5
    max_turn_deg: float = 45.0

    def __post_init__(self):
        if not self.step > 0:
            raise InvalidParameterError("walk step must be > 0")
        if not 0 <= self.max_turn_deg <= 180:
            raise InvalidParameterError("max turn must be within [0, 180] degrees")


@dataclass(frozen=True, eq=False)
class EpisodeConfig:
    """Everything one episode needs. ``robots`` are world-frame start poses."""
    world: object
    robots: tuple
    initial_samples: int = 15
    samples_per_cycle: int = 5
    cycles: int = 20
    noise_level: float = 0.0
    dropout: float = 0.0
    hierarchy: aploc.HierarchyConfig = aploc.HierarchyConfig()
    weighting: aploc.WeightingConfig = aploc.WeightingConfig()
    alignment: rello.AlignmentConfig = rello.AlignmentConfig()
    walk: WalkConfig = WalkConfig()
    master_seed: int = 0
    field_every: int = 0
    consistency_warning: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "robots", tuple(self.robots))
        if len(self.robots) < 2:
            raise InvalidParameterError("an episode needs at least 2 robots")
        if len(self.world.aps) < 3:
            raise InvalidParameterError("an episode needs a world with at least 3 APs")
        if self.initial_samples < 2 or self.samples_per_cycle < 1 or self.cycles < 1:
            raise InvalidParameterError("sample and cycle counts must be positive (initial >= 2)")
        if self.noise_level < 0:
            raise InvalidParameterError("noise level must be >= 0")
        if not 0 <= self.dropout < 1:
            raise InvalidParameterError("dropout must be in [0, 1)")
        for k, pose in enumerate(self.robots):
            if not self.world.contains(pose.position):
                raise InvalidParameterError("robot {0} starts outside the world".format(k))

    @property
    def robot_ids(self):
        return ["r{0}".format(k) for k in range(len(self.robots))]

    @classmethod
    def from_config(cls, config):
        """Builds and validates an episode from a :obj:`mgprl.config.Config`.

        Raises:
            ConfigError: naming the offending key path.
        """
        world = load_world(world_source(config), key_path="WORLD")
        seed = config.number("SEED", integer=True)
        robots = _robots_from(config, world, seed)

        def build(section, factory, **kwargs):
            try:
                return factory(**kwargs)
            except InvalidParameterError as e:
                raise ConfigError(section, str(e))

        hierarchy = build("HIERARCHY", aploc.HierarchyConfig,
                          levels=config.number("HIERARCHY.LEVELS", integer=True),
                          refinement_factor=config.number("HIERARCHY.REFINEMENT_FACTOR", integer=True),
                          neighborhood_radius=config.number("HIERARCHY.NEIGHBORHOOD_RADIUS", integer=True),
                          cell_size=config.number("HIERARCHY.CELL_SIZE", minimum=1e-3),
                          margin=config.number("HIERARCHY.MARGIN", minimum=0),
                          rssi_closeness=config.number("HIERARCHY.RSSI_CLOSENESS", minimum=0),
                          scale_by_count=config.flag("HIERARCHY.SCALE_BY_COUNT"),
                          region=config.section("HIERARCHY").get("REGION"))
        weighting = build("WEIGHTING", aploc.WeightingConfig,
                          epsilon=config.number("WEIGHTING.EPSILON"),
                          alpha=config.number("WEIGHTING.ALPHA"))
        alignment = build("ALIGNMENT", rello.AlignmentConfig,
                          lambda_=config.number("ALIGNMENT.LAMBDA"),
                          max_candidate_combinations=config.number("ALIGNMENT.MAX_CANDIDATE_COMBINATIONS", integer=True),
                          reflection_allowed=config.flag("ALIGNMENT.REFLECTION_ALLOWED"),
                          normalize_by_count=config.flag("ALIGNMENT.NORMALIZE_BY_COUNT"),
                          use_candidates=config.flag("ALIGNMENT.USE_CANDIDATES"))
        walk = build("WALK", WalkConfig,
                     step=config.number("WALK.STEP"),
                     max_turn_deg=config.number("WALK.MAX_TURN_DEG"))
        return build("CONFIG", cls,
                     world=world,
                     robots=robots,
                     initial_samples=config.number("INITIAL_SAMPLES", integer=True, minimum=2),
                     samples_per_cycle=config.number("SAMPLES_PER_CYCLE", integer=True, minimum=1),
                     cycles=config.number("CYCLES", integer=True, minimum=1),
                     noise_level=config.number("NOISE_LEVEL", minimum=0),
                     dropout=config.number("DROPOUT", minimum=0, maximum=0.99),
                     hierarchy=hierarchy,
                     weighting=weighting,
                     alignment=alignment,
                     walk=walk,
                     master_seed=seed,
                     field_every=config.number("FIELD_EVERY", integer=True, minimum=0),
                     consistency_warning=config.number("CONSISTENCY_WARNING", minimum=0))


def world_source(config):
    """Resolves the ``WORLD`` key to a world mapping or an absolute file path.

    Relative paths are tried against the working directory, the config file's
    directory and the config root path, in that order.
    """
    source = config.get("WORLD")
    if isinstance(source, dict):
        return source
    if not isinstance(source, str) or not source:
        raise ConfigError("WORLD", "expected a world file path or a world mapping")
    candidates = [source]
    if not os.path.isabs(source):
        if config.get("CONFIG_PATH"):
            candidates.append(os.path.join(os.path.dirname(config["CONFIG_PATH"]), source))
        candidates.append(os.path.join(getattr(config, "root_path", os.getcwd()), source))
    for candidate in candidates:
        if os.path.isfile(candidate):
            return os.path.abspath(candidate)
    raise ConfigError("WORLD", "world file {0} not found".format(source))


def random_start_poses(world, n, seed):
    """Draws n seeded world-frame start poses inside the world."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    x0, x1, y0, y1 = world.grid.extent
    pad = min(0.5, 0.25 * (x1 - x0), 0.25 * (y1 - y0))
    return tuple(Pose2D(rng.uniform(x0 + pad, x1 - pad), rng.uniform(y0 + pad, y1 - pad),
                        rng.uniform(-math.pi, math.pi)) for _ in range(n))


def _robots_from(config, world, seed):
    robots = config.get("ROBOTS")
    if isinstance(robots, int) and not isinstance(robots, bool):
        if robots < 2:
            raise ConfigError("ROBOTS", "need at least 2 robots, got {0}".format(robots))
        return random_start_poses(world, robots, seed)
    if not isinstance(robots, list) or len(robots) < 2:
        raise ConfigError("ROBOTS", "expected a robot count or a list of at least 2 start poses")
    poses = []
    for k, entry in enumerate(robots):
        path = "ROBOTS[{0}]".format(k)
        if not isinstance(entry, dict):
            raise ConfigError(path, "expected a mapping with X, Y and YAW")
        try:
            pose = Pose2D(float(entry["X"]), float(entry["Y"]), float(entry.get("YAW", 0.0)))
        except KeyError as e:
            raise ConfigError("{0}.{1}".format(path, e.args[0]), "missing required key")
        except (TypeError, ValueError, InvalidParameterError) as e:
            raise ConfigError(path, "invalid pose: {0}".format(e))
        if not world.contains(pose.position):
            raise ConfigError(path, "start pose {0} is outside the world".format(pose.position))
        poses.append(pose)
    return tuple(poses)


@dataclass(eq=False)
class Robot:
    """Robot-side state. Everything here is in the robot's own frame."""
    robot_id: str
    rng: np.random.Generator = field(repr=False)
    pose: Pose2D = Pose2D(0.0, 0.0, 0.0)
    samples: dict = field(default_factory=dict, repr=False)
    model: object = field(default=None, repr=False)
    surveys: dict = field(default_factory=dict, repr=False)
    waypoints: list = field(default_factory=list, repr=False)

    def record(self, samples):
        for sample in samples:
            self.samples.setdefault(sample.ap_id, []).append(sample)

    @property
    def heard(self):
        """list: sorted ids of the APs with at least one sample."""
        return sorted(ap for ap, s in self.samples.items() if s)

    def belief(self, timestamp):
        estimates = [e for ap in sorted(self.surveys) for e in self.surveys[ap].estimates]
        return rello.RobotBeliefMsg(self.robot_id, estimates, self.pose, timestamp)


@dataclass(eq=False)
class _Simulated:
    """Harness-side companion of a robot: its start pose, true world pose and walk.

    The walk draws from its own stream, so the noise level and dropout never
    change the path a seed produces.
    """
    robot: Robot
    start: Pose2D
    world_pose: Pose2D
    index: int
    walk_rng: np.random.Generator = field(default=None, repr=False)

    def to_own(self, pose):
        t = compose(inverse(self.start.as_transform()), pose.as_transform())
        return Pose2D(t.translation[0], t.translation[1], t.rotation)


@dataclass(frozen=True)
class MetricsRecord:
    """One metrics row, for one robot after one cycle."""
    cycle: int
    robot: str
    samples: int
    ale_r: float = NAN
    ale_ap: float = NAN
    ale_ap_hier: float = NAN
    corrections: int = 0
    rmse: float = NAN
    uncertainty: float = NAN
    accept_rate: float = NAN
    consistency: float = NAN
    error: str = ""

    def row(self):
        return [format_value(getattr(self, c)) for c in METRIC_COLUMNS]


@dataclass(frozen=True)
class TimingRecord:
    cycle: int
    robot: str
    fit_seconds: float
    predict_seconds: float

    def row(self):
        return [format_value(getattr(self, c)) for c in TIMING_COLUMNS]


@dataclass(frozen=True, eq=False)
class FieldSnapshot:
    """Predicted B1 fields of one robot, all APs stacked in ``ap_ids`` order."""
    cycle: int
    robot: str
    start: Pose2D
    grid: object
    ap_ids: tuple
    mean: np.ndarray = field(repr=False)
    var: np.ndarray = field(repr=False)


@dataclass(eq=False)
class EpisodeResult:
    config: EpisodeConfig
    records: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    beliefs: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    alignments: list = field(default_factory=list)
    hulls: list = field(default_factory=list)


def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else "{0:.6f}".format(value)
    return str(value)


def _nanmean(values):
    vals = [v for v in values if v is not None and not math.isnan(v)]
    return float(np.mean(vals)) if vals else NAN


def compute_ale(estimates, truth):
    """Mean Euclidean distance between identity-matched estimates and truth.

    Raises:
        InvalidParameterError: empty or mismatched inputs.
    """
    est = np.asarray(estimates, dtype=float).reshape(-1, 2)
    ref = np.asarray(truth, dtype=float).reshape(-1, 2)
    if est.shape != ref.shape or est.shape[0] == 0:
        raise InvalidParameterError("ALE needs equally many estimates and truth points")
    return float(np.mean(np.hypot(*(est - ref).T)))


def compute_field_rmse(predicted, truth_fn):
    """Root-mean-square difference between a predicted field and ground truth.

    Args:
        predicted (:obj:`ScalarField`): predicted mean RSSI.
        truth_fn (callable): maps (n, 2) cell centers to noiseless truth; NaN
            entries (cells outside the world) are ignored.

    Returns:
        float. RMSE in dB, NaN when no cell has a truth value.
    """
    truth = np.asarray(truth_fn(predicted.grid.centers()), dtype=float)
    diff = predicted.values.ravel() - truth
    diff = diff[np.isfinite(diff)]
    if diff.size == 0:
        return NAN
    return float(np.sqrt(np.mean(diff ** 2)))


def _walk_step(pose, walk, extent, rng):
    """One random-walk step in the world frame, reflecting off the walls."""
    yaw = pose.yaw + math.radians(rng.uniform(-walk.max_turn_deg, walk.max_turn_deg))
    x = pose.x + walk.step * math.cos(yaw)
    y = pose.y + walk.step * math.sin(yaw)
    x0, x1, y0, y1 = extent
    if x < x0 or x > x1:
        x = 2 * (x0 if x < x0 else x1) - x
        yaw = math.pi - yaw
    if y < y0 or y > y1:
        y = 2 * (y0 if y < y0 else y1) - y
        yaw = -yaw
    return Pose2D(min(max(x, x0), x1), min(max(y, y0), y1), yaw)


def _collect(sim, count, cfg):
    """Samples at the current pose, then steps, ``count`` times. Returns own-frame samples."""
    robot = sim.robot
    x0, x1, y0, y1 = cfg.world.grid.extent
    extent = (x0 + WALL_MARGIN, x1 - WALL_MARGIN, y0 + WALL_MARGIN, y1 - WALL_MARGIN)
    new = []
    for _ in range(count):
        own = sim.to_own(sim.world_pose)
        robot.pose = own
        robot.waypoints.append(own.position)
        for ap in cfg.world.aps:
            if cfg.dropout > 0 and robot.rng.random() < cfg.dropout:
                continue
            measured = sample_measurement(ap, sim.world_pose.position, cfg.noise_level, robot.rng)
            new.append(RssiSample(own.position, ap.ap_id, measured.value_dbm))
        sim.world_pose = _walk_step(sim.world_pose, cfg.walk, extent, sim.walk_rng)
    robot.pose = sim.to_own(sim.world_pose)
    robot.record(new)
    return new


def _search_grid(sim, cfg):
    """Level-1 grid of a robot, in its own frame.

    In ``map`` mode it covers the robot's map, the world rectangle seen from
    the start pose, so it stays fixed over the episode. In ``explored`` mode it
    pads the visited locations by the margin.
    """
    h = cfg.hierarchy
    if h.region == aploc.SearchRegion.EXPLORED:
        return aploc.coarsest_grid_around(sim.robot.waypoints, h.cell_size, h.margin)
    x0, x1, y0, y1 = cfg.world.grid.extent
    corners = apply(inverse(sim.start.as_transform()), [(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    return aploc.coarsest_grid_around(corners, h.cell_size, 0.0)


def _model_step(sim, new, modeler, cfg, seed):
    robot = sim.robot
    heard = robot.heard
    if len(heard) == 0:
        raise InvalidParameterError("robot {0} has not heard any AP".format(robot.robot_id))
    started = time.perf_counter()
    if robot.model is None or tuple(robot.model.ap_ids) != tuple(heard):
        robot.model = modeler.fit(robot.samples, heard, seed=seed)
    else:
        robot.model = modeler.update(robot.model, new)
    fit_seconds = time.perf_counter() - started

    started = time.perf_counter()
    hierarchy = replace(cfg.hierarchy, coarsest_grid=_search_grid(sim, cfg))
    robot.surveys = {ap: aploc.estimate_ap(robot.model, ap, hierarchy, cfg.weighting, modeler.predict_field)
                     for ap in heard}
    return fit_seconds, time.perf_counter() - started


def _truth_in_frame(world, start, ap_id):
    frame = start.as_transform()

    def truth(points):
        world_pts = apply(frame, points)
        values = truth_mean(world, ap_id, world_pts)
        inside = np.array([world.contains(p) for p in world_pts])
        return np.where(inside, values, NAN)
    return truth


def _robot_metrics(cycle, sim, sims, aligned, best_known, cfg):
    """Ground-truth metrics of one robot after alignment."""
    robot = sim.robot
    world = cfg.world
    frame = sim.start.as_transform()

    hier = [(ap, s.hierarchical.position) for ap, s in robot.surveys.items()]
    ale_hier = compute_ale([apply(frame, p) for _, p in hier], [world.ap(ap).position for ap, _ in hier])

    mine = [a for (i, j), a in aligned.items() if i == robot.robot_id]
    accepted = [a for a in mine if a.accepted]
    best = min(accepted, key=lambda a: a.weighted_error) if accepted else None
    ale_ap, corrections = ale_hier, 0
    if best is not None:
        chosen = [(ap, best.correspondence[ap][0].position if ap in best.correspondence else pos)
                  for ap, pos in hier]
        ale_ap = compute_ale([apply(frame, p) for _, p in chosen], [world.ap(ap).position for ap, _ in chosen])
        corrections = len(best.corrections)

    own_inverse = inverse(frame)
    rel_errors = []
    for other in sims:
        if other is sim:
            continue
        alignment = best_known.get((robot.robot_id, other.robot.robot_id))
        if alignment is None:
            continue
        estimated = apply(alignment.transform, other.robot.pose.position)
        true = apply(own_inverse, other.world_pose.position)
        rel_errors.append(math.hypot(estimated[0] - true[0], estimated[1] - true[1]))

    rmse = _nanmean([compute_field_rmse(s.mean_field, _truth_in_frame(world, sim.start, ap))
                     for ap, s in robot.surveys.items()])
    uncertainty = _nanmean([float(np.mean(np.sqrt(s.var_field.values))) for s in robot.surveys.values()])

    consistency = []
    for a in accepted:
        back = aligned.get((a.pair[1], a.pair[0]))
        if back is not None and back.accepted:
            consistency.append(rello.symmetric_consistency(a, back))
    deviation = _nanmean(consistency)
    if not math.isnan(deviation) and deviation > cfg.consistency_warning:
        log.warning("Cycle {0}: robot {1} alignments disagree by {2:.3f} m".format(
            cycle, robot.robot_id, deviation))

    return MetricsRecord(
        cycle=cycle,
        robot=robot.robot_id,
        samples=len(robot.waypoints),
        ale_r=_nanmean(rel_errors),
        ale_ap=ale_ap,
        ale_ap_hier=ale_hier,
        corrections=corrections,
        rmse=rmse,
        uncertainty=uncertainty,
        accept_rate=len(accepted) / len(mine) if mine else NAN,
        consistency=deviation,
    )


def _snapshot(cycle, sim, modeler):
    robot = sim.robot
    surveys = [robot.surveys[ap] for ap in sorted(robot.surveys)]
    grid = surveys[0].mean_field.grid
    return FieldSnapshot(cycle, robot.robot_id, sim.start, grid, tuple(sorted(robot.surveys)),
                         np.stack([s.mean_field.values for s in surveys]),
                         np.stack([s.var_field.values for s in surveys]))


def _hull_record(cycle, alignment, start):
    b_hull = rello.convex_hull([pb.position for _, pb in alignment.correspondence.values()])
    return {
        "cycle": cycle,
        "robot_a": alignment.pair[0],
        "robot_b": alignment.pair[1],
        "accepted": bool(alignment.accepted),
        "start_a": [start.x, start.y, start.yaw],
        "hull_a": [list(p) for p in alignment.hull_a],
        "hull_b_aligned": [[float(v) for v in apply(alignment.transform, p)] for p in b_hull],
    }


def run_episode(cfg, modeler=None):
    """Runs a full episode.

    Cycle 1 collects ``initial_samples`` waypoints per robot and fits each
    model; every later cycle adds ``samples_per_cycle`` waypoints and updates
    it. Every robot then estimates its APs, broadcasts its belief through the
    wire format, and aligns with every neighbor. Module errors of one robot in
    one cycle are recorded in that robot's metrics row and the episode goes on.

    Args:
        cfg (:obj:`EpisodeConfig`): the episode.
        modeler: field modeler plugin, defaults to the co-regionalized one.

    Returns:
        :obj:`EpisodeResult`. One metrics row per (cycle, robot).
    """
    if modeler is None:
        from mgprl.config import Config
        from mgprl.modeler.coregionalized import Coregionalized
        modeler = Coregionalized(Config(), None)

    streams = np.random.SeedSequence(cfg.master_seed).spawn(len(cfg.robots) + 1)
    sims = []
    for k, (rid, start) in enumerate(zip(cfg.robot_ids, cfg.robots)):
        measure, walk = streams[k + 1].spawn(2)
        sims.append(_Simulated(Robot(rid, np.random.default_rng(measure)), start, start, k,
                               np.random.default_rng(walk)))
    result = EpisodeResult(cfg)
    last_accepted = {}
    log.info("Episode on {0}: {1} robots, {2} cycles, seed {3}".format(
        cfg.world.name, len(sims), cfg.cycles, cfg.master_seed))

    for cycle in range(1, cfg.cycles + 1):
        errors = {}
        messages = {}
        for sim in sims:
            rid = sim.robot.robot_id
            count = cfg.initial_samples if cycle == 1 else cfg.samples_per_cycle
            new = _collect(sim, count, cfg)
            try:
                fit_s, predict_s = _model_step(sim, new, modeler, cfg, [cfg.master_seed, sim.index])
            except MgprlError as e:
                log.warning("Cycle {0}: robot {1} failed: {2}".format(cycle, rid, e))
                errors[rid] = "{0}: {1}".format(type(e).__name__, e)
                result.timings.append(TimingRecord(cycle, rid, NAN, NAN))
                continue
            result.timings.append(TimingRecord(cycle, rid, fit_s, predict_s))
            text = rello.encode_message(sim.robot.belief(cycle))
            result.beliefs.append((cycle, rid, text))
            messages[rid] = rello.decode_message(text)

        aligned = {}
        for a in sims:
            for b in sims:
                ra, rb = a.robot.robot_id, b.robot.robot_id
                if a is b or ra not in messages or rb not in messages:
                    continue
                try:
                    alignment = rello.align_pair(messages[ra], messages[rb], cfg.alignment)
                except InsufficientOverlapError as e:
                    log.info("Cycle {0}: no alignment {1}<-{2}: {3}".format(cycle, ra, rb, e))
                    continue
                aligned[(ra, rb)] = alignment
                if alignment.accepted:
                    last_accepted[(ra, rb)] = alignment
                result.alignments.append((cycle, alignment))

        # latest accepted transform per pair, else this cycle's best attempt
        best_known = dict(aligned)
        best_known.update(last_accepted)
        snapshot = cycle == cfg.cycles or (cfg.field_every > 0 and cycle % cfg.field_every == 0)
        for sim in sims:
            rid = sim.robot.robot_id
            if rid in errors:
                result.records.append(MetricsRecord(cycle, rid, len(sim.robot.waypoints), error=errors[rid]))
                continue
            try:
                result.records.append(_robot_metrics(cycle, sim, sims, aligned, best_known, cfg))
            except MgprlError as e:
                log.warning("Cycle {0}: metrics for {1} failed: {2}".format(cycle, rid, e))
                result.records.append(MetricsRecord(cycle, rid, len(sim.robot.waypoints),
                                                    error="{0}: {1}".format(type(e).__name__, e)))
            if snapshot:
                result.fields.append(_snapshot(cycle, sim, modeler))
        if cycle == cfg.cycles:
            starts = {s.robot.robot_id: s.start for s in sims}
            result.hulls = [_hull_record(cycle, a, starts[a.pair[0]]) for a in aligned.values()]
        log.debug("Cycle {0} done: {1} alignments, {2} accepted".format(
            cycle, len(aligned), sum(a.accepted for a in aligned.values())))
    return result


def write_csv(path, columns, rows):
    """Writes rows (lists of strings) under a header."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def write_metrics_csv(records, path):
    write_csv(path, METRIC_COLUMNS, [r.row() for r in records])


def write_timings_csv(timings, path):
    write_csv(path, TIMING_COLUMNS, [t.row() for t in timings])


def read_metrics_csv(path):
    """list: metrics rows as dicts with numeric fields parsed."""
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    out = []
    for row in rows:
        parsed = {}
        for key, value in row.items():
            if key in ("robot", "error"):
                parsed[key] = value
            elif key in ("cycle", "samples", "corrections"):
                parsed[key] = int(value)
            else:
                parsed[key] = float(value)
        out.append(parsed)
    return out


def final_metrics(records):
    """dict: mean of each summary metric over the last cycle's successful rows."""
    if not records:
        return {m: NAN for m in SUMMARY_METRICS}
    last = max(r.cycle for r in records)
    rows = [r for r in records if r.cycle == last and not r.error]
    return {m: _nanmean([getattr(r, m) for r in rows]) for m in SUMMARY_METRICS}


def write_bundle(result, out_dir):
    """Writes the episode artifacts under ``out_dir``.

    Files: ``metrics.csv``, ``timings.csv``, ``alignments.csv``, ``hulls.yml``,
    ``summary.yml``, ``beliefs/cycle_NNN_<robot>.yml`` and
    ``fields/cycle_NNN_<robot>.npz``.
    """
    os.makedirs(os.path.join(out_dir, "beliefs"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "fields"), exist_ok=True)
    write_metrics_csv(result.records, os.path.join(out_dir, "metrics.csv"))
    write_timings_csv(result.timings, os.path.join(out_dir, "timings.csv"))
    write_csv(os.path.join(out_dir, "alignments.csv"), ALIGNMENT_COLUMNS, [
        [str(cycle), a.pair[0], a.pair[1], format_value(bool(a.accepted)), format_value(bool(a.degenerate)),
         format_value(a.weighted_error), format_value(a.transform.rotation), format_value(a.transform.translation[0]),
         format_value(a.transform.translation[1]), str(a.evaluated), str(len(a.corrections))]
        for cycle, a in result.alignments])
    for cycle, rid, text in result.beliefs:
        with open(os.path.join(out_dir, "beliefs", "cycle_{0:03d}_{1}.yml".format(cycle, rid)), "w") as f:
            f.write(text)
    for snap in result.fields:
        np.savez(os.path.join(out_dir, "fields", "cycle_{0:03d}_{1}.npz".format(snap.cycle, snap.robot)),
                 origin=np.asarray(snap.grid.origin), cell_size=snap.grid.cell_size,
                 start=np.asarray([snap.start.x, snap.start.y, snap.start.yaw]),
                 ap_ids=np.asarray(snap.ap_ids), mean=snap.mean, var=snap.var)
    with open(os.path.join(out_dir, "hulls.yml"), "w") as f:
        yaml.safe_dump(result.hulls, f, sort_keys=False)
    cfg = result.config
    summary = {
        "world": cfg.world.name,
        "seed": cfg.master_seed,
        "cycles": cfg.cycles,
        "robots": {rid: [p.x, p.y, p.yaw] for rid, p in zip(cfg.robot_ids, cfg.robots)},
        "access_points": {ap.ap_id: list(ap.position) for ap in cfg.world.aps},
        "final": final_metrics(result.records),
        "errors": sum(1 for r in result.records if r.error),
    }
    with open(os.path.join(out_dir, "summary.yml"), "w") as f:
        yaml.safe_dump(summary, f, sort_keys=False)
    log.info("Wrote bundle to {0}".format(out_dir))


def aggregate_runs(rows, axis="value"):
    """Aggregates per-run summaries into mean and std per axis value.

    Args:
        rows (list): dicts holding ``axis`` and the :data:`SUMMARY_METRICS`.
        axis (str): key to group by; groups keep first-seen order.

    Returns:
        list. One dict per axis value with ``runs`` and ``<metric>_mean`` / ``<metric>_std``.
    """
    groups = {}
    for row in rows:
        groups.setdefault(row[axis], []).append(row)
    out = []
    for value, group in groups.items():
        agg = {axis: value, "runs": len(group)}
        for metric in SUMMARY_METRICS:
            vals = np.array([r[metric] for r in group if not math.isnan(r[metric])], dtype=float)
            agg[metric + "_mean"] = float(vals.mean()) if vals.size else NAN
            agg[metric + "_std"] = float(vals.std()) if vals.size else NAN
        out.append(agg)
    return out


def benchmark_fit_scaling(gammas, m=8, seed=0, opts=None):
    """Times a joint m-output fit against m independent fits on the same data.

    Data come from a log-distance model around m random AP positions with
    1 dB noise; every location observes every AP.

    Returns:
        list. Dicts with the :data:`BENCH_COLUMNS` keys.
    """
    from mgprl import mogp
    from mgprl.modeler.independent import fit_independent

    opts = opts or mogp.FitOptions(restarts=0)
    rng = np.random.default_rng(seed)
    params = PathLossParams(shadowing_sigma=0.0, fading_sigma=0.0)
    rows = []
    for gamma in gammas:
        pts = rng.uniform(0.0, 10.0, size=(int(gamma), 2))
        aps = rng.uniform(0.0, 10.0, size=(m, 2))
        samples = {}
        for j, ap in enumerate(aps):
            ap_id = "ap{0}".format(j)
            values = path_loss_mean(params, ap, pts) + rng.normal(0.0, 1.0, size=len(pts))
            samples[ap_id] = [RssiSample(p, ap_id, v) for p, v in zip(pts, values)]
        started = time.perf_counter()
        mogp.fit(samples, opts=opts)
        joint = time.perf_counter() - started
        started = time.perf_counter()
        fit_independent(samples, opts)
        independent = time.perf_counter() - started
        log.debug("gamma={0}: joint {1:.3f}s, independent {2:.3f}s".format(gamma, joint, independent))
        rows.append({"gamma": int(gamma), "m": m, "joint_seconds": joint,
                     "independent_seconds": independent, "ratio": joint / independent})
    return rows
