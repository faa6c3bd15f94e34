"""
Monte-Carlo engine: user placement, seeded trials and parameter sweeps.

Every trial draws from its own generator derived from (master_seed, trial
index), so results do not depend on how trials are spread over workers.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import partial
from multiprocessing import Pool
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import norm
from tqdm import tqdm

from vcsel_rs.channel import MAX_SUM_POWER, build_branch_gains, select_branch
from vcsel_rs.errors import AggregationError, PrecodingError, ValidationError
from vcsel_rs.geometry import Room, SceneConfig, beam_footprints, default_scene
from vcsel_rs.optics import GAUSSIAN_BEAM, GainModel, NoiseModel
from vcsel_rs.precoding import PRINCIPAL_DIRECTION
from vcsel_rs.ratesplit import HRS, RS, SCHEMES, solve_and_rate
from vcsel_rs.util import trial_rng, trial_seed


logger = logging.getLogger(__name__)

UNIFORM_FLOOR = "uniform_floor"
CLUSTERED_GAUSSIAN = "clustered_gaussian"
BEAM_FOOTPRINT = "beam_footprint"
FOOTPRINT_CLUSTERS = "footprint_clusters"
PLACEMENT_MODELS = (UNIFORM_FLOOR, CLUSTERED_GAUSSIAN, BEAM_FOOTPRINT, FOOTPRINT_CLUSTERS)
# Placements drawn around beam-axis footprints
FOOTPRINT_PLACEMENTS = (BEAM_FOOTPRINT, FOOTPRINT_CLUSTERS)

MAX_RESAMPLE_ROUNDS = 1000
CI_LEVEL = 0.95


@dataclass(frozen=True)
class PlacementModel:
    variant: str = CLUSTERED_GAUSSIAN
    cluster_count: int = 5
    cluster_sigma_m: float = 0.5

    def __post_init__(self):
        if self.variant not in PLACEMENT_MODELS:
            raise ValidationError("unknown placement {!r}, expected one of {}".format(self.variant, PLACEMENT_MODELS))
        if self.cluster_count < 1:
            raise ValidationError("cluster_count must be at least 1")
        if self.cluster_sigma_m < 0:
            raise ValidationError("cluster_sigma_m must be nonnegative")


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _jitter_inside(room, centers, sigma, rng):
    # Gaussian draws around each center; draws that leave the room are redrawn
    points = centers + rng.normal(scale=sigma, size=centers.shape) if sigma > 0 else centers.copy()
    for _ in range(MAX_RESAMPLE_ROUNDS):
        outside = (
            (points[:, 0] < 0) | (points[:, 0] > room.length_m)
            | (points[:, 1] < 0) | (points[:, 1] > room.width_m)
        )
        if not outside.any():
            return points
        points[outside] = centers[outside] + rng.normal(scale=sigma, size=(int(outside.sum()), 2))
    raise ValidationError("could not place users inside the room; cluster_sigma_m is too large")


def place_users(room: Room, user_count, model: PlacementModel, seed, footprints=None):
    """
    Draw user positions on the receiver plane.

    seed is an int or a numpy Generator. The footprint placements need the
    candidate footprint points (M x 3). beam_footprint gives users distinct
    footprints in a seeded order and reuses them only once every footprint is
    taken. footprint_clusters picks cluster_count distinct footprints as
    hotspots and deals users to them round-robin, so user i joins hotspot
    i % cluster_count and a larger K keeps the placement of a smaller one.
    """
    if user_count < 0:
        raise ValidationError("user count must be nonnegative")
    rng = _as_rng(seed)
    if user_count == 0:
        return np.zeros((0, 3))

    if model.variant == UNIFORM_FLOOR:
        floor = np.column_stack([
            rng.uniform(0.0, room.length_m, size=user_count),
            rng.uniform(0.0, room.width_m, size=user_count)
        ])
    elif model.variant == CLUSTERED_GAUSSIAN:
        centers = np.column_stack([
            rng.uniform(0.0, room.length_m, size=model.cluster_count),
            rng.uniform(0.0, room.width_m, size=model.cluster_count)
        ])
        user_centers = centers[np.arange(user_count) % model.cluster_count]
        floor = _jitter_inside(room, user_centers, model.cluster_sigma_m, rng)
    else:
        if footprints is None or len(footprints) == 0:
            raise ValidationError("{} placement needs at least one footprint".format(model.variant))
        footprints = np.asarray(footprints, dtype=float)
        order = rng.permutation(len(footprints))
        if model.variant == FOOTPRINT_CLUSTERS:
            if model.cluster_count > len(footprints):
                raise ValidationError("{} hotspots requested but only {} footprints are visible".format(
                    model.cluster_count, len(footprints)))
            order = order[:model.cluster_count]
        user_centers = footprints[order[np.arange(user_count) % len(order)], :2]
        floor = _jitter_inside(room, user_centers, model.cluster_sigma_m, rng)

    return np.column_stack([floor, np.full(user_count, room.rx_plane_height_m)])


def visible_footprints(scene, model: GainModel):
    """Beam-axis footprints at which a receiver sees the footprint's own element."""
    points, elements = beam_footprints(scene)
    if len(points) == 0:
        return points
    gains = build_branch_gains(scene, points, model).gains
    own = gains[np.arange(len(points)), :, elements]
    return points[np.any(own > 0.0, axis=1)]


@dataclass(frozen=True)
class SchemeVariant:
    scheme: str
    groups: int = 0

    @property
    def label(self):
        return self.scheme if self.scheme == RS else "{}:G{}".format(self.scheme, self.groups)


@dataclass(frozen=True)
class ScenarioConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    gain_model: GainModel = field(default_factory=GainModel.gaussian)
    branch_policy: str = MAX_SUM_POWER
    noise: NoiseModel = field(default_factory=NoiseModel)
    placement: PlacementModel = field(default_factory=PlacementModel)
    users: int = 10
    schemes: Tuple[str, ...] = (RS, HRS)
    groups: Tuple[int, ...] = (5,)
    t: float = 0.8
    alpha: float = 0.8
    beta: float = 0.9
    total_power: float = 1.0
    exclude_unserved_from_common: bool = False
    ridge: float = 0.0
    common_strategy: str = PRINCIPAL_DIRECTION
    trials: int = 200
    master_seed: int = 0
    workers: int = 1
    keep_trials: bool = False

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(self.schemes))
        object.__setattr__(self, "groups", tuple(int(g) for g in self.groups))
        if self.trials < 1:
            raise ValidationError("trials must be at least 1")
        if self.users < 1:
            raise ValidationError("users must be at least 1")
        if self.workers < 1:
            raise ValidationError("workers must be at least 1")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown or not self.schemes:
            raise ValidationError("schemes must be a nonempty subset of {}".format(SCHEMES))
        if HRS in self.schemes:
            if not self.groups:
                raise ValidationError("HRS needs at least one group count")
            for g in self.groups:
                if not 1 <= g <= self.users:
                    raise ValidationError("group count {} must lie in [1, users={}]".format(g, self.users))

    @property
    def variants(self):
        variants = []
        if RS in self.schemes:
            variants.append(SchemeVariant(RS))
        if HRS in self.schemes:
            variants.extend(SchemeVariant(HRS, g) for g in self.groups)
        return variants


@dataclass(frozen=True)
class TrialOutcome:
    mean_user_rate_bps: float = 0.0
    sum_rate_bps: float = 0.0
    per_user_rate_bps: Tuple[float, ...] = ()
    regularized: bool = False
    failure: Optional[str] = None

    @property
    def failed(self):
        return self.failure is not None


@dataclass(frozen=True)
class TrialResult:
    trial: int
    seed: int
    outcomes: Dict[SchemeVariant, TrialOutcome]

    def to_record(self):
        return {
            "trial": self.trial,
            "seed": self.seed,
            "outcomes": {
                variant.label: {
                    "mean_user_rate_bps": o.mean_user_rate_bps,
                    "sum_rate_bps": o.sum_rate_bps,
                    "per_user_rate_bps": list(o.per_user_rate_bps),
                    "regularized": o.regularized,
                    "failure": o.failure,
                }
                for variant, o in self.outcomes.items()
            }
        }


@dataclass(frozen=True)
class Stats:
    mean: float
    std: float
    ci95_lo: float
    ci95_hi: float
    n: int
    failures: int = 0


def aggregate(values, failures=0) -> Stats:
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        raise AggregationError("no successful trials to aggregate ({} failed)".format(failures))
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if n > 1 else 0.0
    half_width = float(norm.ppf(0.5 + CI_LEVEL / 2)) * std / np.sqrt(n)
    return Stats(mean=mean, std=std, ci95_lo=mean - half_width, ci95_hi=mean + half_width, n=n, failures=failures)


def run_trial(config: ScenarioConfig, trial: int) -> TrialResult:
    rng = trial_rng(config.master_seed, trial)
    seed = trial_seed(config.master_seed, trial)
    scene = default_scene(config.scene)

    footprints = None
    if config.placement.variant in FOOTPRINT_PLACEMENTS:
        footprints = visible_footprints(scene, config.gain_model)
    users = place_users(scene.room, config.users, config.placement, rng, footprints)
    channel = select_branch(build_branch_gains(scene, users, config.gain_model), config.branch_policy)
    sigma2 = config.noise.user_variances(scene.adr.responsivity_a_per_w, channel.received_power_w)

    outcomes = {}
    for variant in config.variants:
        try:
            report, regularized = solve_and_rate(
                variant.scheme,
                channel.h,
                sigma2,
                config.total_power,
                t=config.t,
                alpha=config.alpha,
                beta=config.beta,
                groups=variant.groups or 1,
                positions=users,
                seed=seed,
                ridge=config.ridge,
                common_strategy=config.common_strategy,
                exclude_unserved_from_common=config.exclude_unserved_from_common,
                bandwidth_hz=config.noise.bandwidth_hz
            )
        except PrecodingError as e:
            logger.warning("Trial %d, %s failed: %s", trial, variant.label, e)
            outcomes[variant] = TrialOutcome(failure=str(e))
            continue
        outcomes[variant] = TrialOutcome(
            mean_user_rate_bps=report.mean_user_rate_bps,
            sum_rate_bps=report.sum_rate_bps,
            per_user_rate_bps=tuple(float(r) for r in report.per_user_rate_bps),
            regularized=regularized
        )
    return TrialResult(trial=trial, seed=seed, outcomes=outcomes)


def run_trials(config: ScenarioConfig, desc=None) -> List[TrialResult]:
    worker = partial(run_trial, config)
    indices = range(config.trials)
    results = []
    with tqdm(total=config.trials, desc=desc or "Trials", leave=False) as progress_bar:
        if config.workers == 1:
            for index in indices:
                results.append(worker(index))
                progress_bar.update()
        else:
            with Pool(config.workers) as pool:
                # imap keeps trial order
                for result in pool.imap(worker, indices):
                    results.append(result)
                    progress_bar.update()
    return results


@dataclass(frozen=True)
class VariantStats:
    variant: SchemeVariant
    user_rate: Stats
    sum_rate: Stats
    trials: int

    @property
    def failures(self):
        return self.user_rate.failures


def summarize(config: ScenarioConfig, trials: List[TrialResult]) -> Dict[SchemeVariant, VariantStats]:
    summary = {}
    for variant in config.variants:
        outcomes = [t.outcomes[variant] for t in trials]
        ok = [o for o in outcomes if not o.failed]
        failures = len(outcomes) - len(ok)
        if failures:
            logger.warning("%s: %d of %d trials failed", variant.label, failures, len(outcomes))
        summary[variant] = VariantStats(
            variant=variant,
            user_rate=aggregate([o.mean_user_rate_bps for o in ok], failures),
            sum_rate=aggregate([o.sum_rate_bps for o in ok], failures),
            trials=len(outcomes)
        )
    return summary


@dataclass(frozen=True)
class ScenarioResult:
    config: ScenarioConfig
    trials: List[TrialResult]
    stats: Dict[SchemeVariant, VariantStats]


def run_scenario(config: ScenarioConfig, desc=None) -> ScenarioResult:
    trials = run_trials(config, desc=desc)
    return ScenarioResult(config=config, trials=trials, stats=summarize(config, trials))


@dataclass(frozen=True)
class SweepPoint:
    param: float
    scheme: str
    groups: int
    mean_user_rate_bps: float
    std: float
    ci95_lo: float
    ci95_hi: float
    sum_rate_bps: float
    trials: int
    failures: int


@dataclass(frozen=True)
class SkippedPoint:
    param: float
    scheme: str
    groups: int
    reason: str


@dataclass
class SweepResult:
    parameter: str
    master_seed: int
    seeds: List[int]
    points: List[SweepPoint] = field(default_factory=list)
    skipped: List[SkippedPoint] = field(default_factory=list)
    raw_trials: Dict[float, List[TrialResult]] = field(default_factory=dict)

    def add(self, value, result: ScenarioResult, keep_trials=False):
        for variant, stats in result.stats.items():
            self.points.append(SweepPoint(
                param=value,
                scheme=variant.scheme,
                groups=variant.groups,
                mean_user_rate_bps=stats.user_rate.mean,
                std=stats.user_rate.std,
                ci95_lo=stats.user_rate.ci95_lo,
                ci95_hi=stats.user_rate.ci95_hi,
                sum_rate_bps=stats.sum_rate.mean,
                trials=stats.trials,
                failures=stats.failures
            ))
        if keep_trials:
            self.raw_trials[value] = result.trials

    def skip(self, value, variant: SchemeVariant, reason):
        logger.warning("Skipping %s at %s: %s", variant.label, value, reason)
        self.skipped.append(SkippedPoint(param=value, scheme=variant.scheme, groups=variant.groups, reason=reason))

    def curve(self, scheme, groups=0):
        points = [p for p in self.points if p.scheme == scheme and p.groups == groups]
        return [p.param for p in points], [p.mean_user_rate_bps for p in points]


def _check_ascending(name, values):
    values = list(values)
    if not values:
        raise ValidationError("{} must not be empty".format(name))
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValidationError("{} must be strictly ascending".format(name))
    return values


def _new_sweep(parameter, config):
    return SweepResult(
        parameter=parameter,
        master_seed=config.master_seed,
        seeds=[trial_seed(config.master_seed, i) for i in range(config.trials)]
    )


def _fit_groups(sweep, value, config, users):
    # HRS variants whose G exceeds the user count are skipped, never shrunk
    groups = []
    if HRS in config.schemes:
        for g in config.groups:
            if g > users:
                sweep.skip(value, SchemeVariant(HRS, g), "G={} exceeds K={}".format(g, users))
            else:
                groups.append(g)
    schemes = tuple(s for s in config.schemes if s != HRS or groups)
    return schemes, tuple(groups)


def sweep_users(config: ScenarioConfig, user_values) -> SweepResult:
    user_values = _check_ascending("user values", user_values)
    if user_values[0] < 1:
        raise ValidationError("user values must be positive")
    sweep = _new_sweep("users", config)
    for users in user_values:
        schemes, groups = _fit_groups(sweep, users, config, users)
        if not schemes:
            continue
        point_config = replace(config, users=users, schemes=schemes, groups=groups or config.groups[:1])
        sweep.add(users, run_scenario(point_config, desc="K={}".format(users)), config.keep_trials)
    return sweep


def sweep_waist(config: ScenarioConfig, w0_values_m) -> SweepResult:
    if config.gain_model.variant != GAUSSIAN_BEAM:
        raise ValidationError("beam waist sweeps need the gaussian gain model, got {!r}".format(
            config.gain_model.variant
        ))
    w0_values_m = _check_ascending("beam waist values", w0_values_m)
    if w0_values_m[0] <= 0:
        raise ValidationError("beam waist values must be positive")
    sweep = _new_sweep("beam_waist_m", config)
    for w0 in w0_values_m:
        point_config = replace(config, scene=replace(config.scene, beam_waist_m=w0))
        sweep.add(w0, run_scenario(point_config, desc="W0={:.0f}um".format(w0 * 1e6)), config.keep_trials)
    return sweep


def sweep_groups(config: ScenarioConfig, group_values) -> SweepResult:
    """HRS for each group count at fixed K, with RS as the reference row at every point."""
    group_values = _check_ascending("group values", group_values)
    if group_values[0] < 1:
        raise ValidationError("group values must be positive")
    sweep = _new_sweep("groups", config)
    for g in group_values:
        if g > config.users:
            sweep.skip(g, SchemeVariant(HRS, g), "G={} exceeds K={}".format(g, config.users))
            continue
        point_config = replace(config, schemes=(RS, HRS), groups=(g,))
        sweep.add(g, run_scenario(point_config, desc="G={}".format(g)), config.keep_trials)
    return sweep
