"""
Power splits, SINRs and achievable rates for rate splitting (RS) and
hierarchical rate splitting (HRS), plus balanced user grouping.

Rates are spectral efficiencies in bits/s/Hz; RateReport converts them to
bits/s with the modulation bandwidth. SINR denominators are assembled from
the interference components named in SINR_DENOMINATORS, and
decode_chain_check verifies those names against the SIC order.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from sklearn.cluster import kmeans_plusplus

from vcsel_rs.errors import ConsistencyError, InfeasibleError, RankError, ValidationError
from vcsel_rs.precoding import (
    PRINCIPAL_DIRECTION,
    fallback_ridge,
    hrs_precoders,
    rs_precoders
)


logger = logging.getLogger(__name__)

RS = "rs"
HRS = "hrs"
SCHEMES = (RS, HRS)

DEFAULT_BANDWIDTH_HZ = 5e9
MAX_GROUPING_ITERATIONS = 100

# Streams as seen from one user's receiver
COMMON = "common"
OUTER_COMMON = "outer_common"
INNER_COMMON_OWN = "inner_common:own"
INNER_COMMON_OTHER_GROUPS = "inner_common:other_groups"
PRIVATE_OWN = "private:own"
PRIVATE_OTHERS = "private:others"

RS_STREAMS = (COMMON, PRIVATE_OWN, PRIVATE_OTHERS)
HRS_STREAMS = (OUTER_COMMON, INNER_COMMON_OWN, INNER_COMMON_OTHER_GROUPS, PRIVATE_OWN, PRIVATE_OTHERS)

# Interference components summed into each SINR denominator (noise added on top)
SINR_DENOMINATORS = {
    RS: {
        COMMON: (PRIVATE_OWN, PRIVATE_OTHERS),
        PRIVATE_OWN: (PRIVATE_OTHERS,),
    },
    HRS: {
        OUTER_COMMON: (INNER_COMMON_OWN, INNER_COMMON_OTHER_GROUPS, PRIVATE_OWN, PRIVATE_OTHERS),
        INNER_COMMON_OWN: (INNER_COMMON_OTHER_GROUPS, PRIVATE_OWN, PRIVATE_OTHERS),
        PRIVATE_OWN: (INNER_COMMON_OTHER_GROUPS, PRIVATE_OTHERS),
    },
}

DECODE_ORDER = {
    RS: (COMMON, PRIVATE_OWN),
    HRS: (OUTER_COMMON, INNER_COMMON_OWN, PRIVATE_OWN),
}


def _check_fraction(name, value):
    if not 0 < value <= 1:
        raise ValidationError("{} must lie in (0, 1], got {}".format(name, value))


@dataclass(frozen=True)
class RsPowerSplit:
    total_p: float
    t: float
    user_count: int
    p_common: float
    p_private_each: float

    @classmethod
    def create(cls, total_p, t, user_count):
        if not total_p > 0:
            raise ValidationError("total power must be positive, got {}".format(total_p))
        _check_fraction("t", t)
        if user_count < 1:
            raise ValidationError("RS needs at least one user")
        return cls(
            total_p=total_p,
            t=t,
            user_count=user_count,
            p_common=total_p * (1.0 - t),
            p_private_each=total_p * t / user_count
        )

    @property
    def total(self):
        return self.p_common + self.user_count * self.p_private_each


@dataclass(frozen=True)
class HrsPowerSplit:
    total_p: float
    alpha: float
    beta: float
    group_count: int
    user_count: int
    p_outer_common: float
    p_inner_common_each: float
    p_private_each: float

    @classmethod
    def create(cls, total_p, alpha, beta, group_count, user_count):
        if not total_p > 0:
            raise ValidationError("total power must be positive, got {}".format(total_p))
        _check_fraction("alpha", alpha)
        _check_fraction("beta", beta)
        if not 1 <= group_count <= user_count:
            raise ValidationError("need 1 <= G <= K, got G={} K={}".format(group_count, user_count))
        return cls(
            total_p=total_p,
            alpha=alpha,
            beta=beta,
            group_count=group_count,
            user_count=user_count,
            p_outer_common=total_p * (1.0 - beta),
            p_inner_common_each=total_p * beta * (1.0 - alpha) / group_count,
            p_private_each=total_p * beta * alpha / user_count
        )

    @property
    def total(self):
        return (
            self.p_outer_common
            + self.group_count * self.p_inner_common_each
            + self.user_count * self.p_private_each
        )


@dataclass(frozen=True, eq=False)
class Grouping:
    assignments: np.ndarray
    group_count: int

    def __post_init__(self):
        assignments = np.asarray(self.assignments, dtype=int)
        object.__setattr__(self, "assignments", assignments)
        if self.group_count < 1:
            raise ValidationError("a grouping needs at least one group")
        if len(assignments) and (assignments.min() < 0 or assignments.max() >= self.group_count):
            raise ValidationError("group indices must lie in [0, {})".format(self.group_count))
        if np.any(self.sizes == 0):
            raise ValidationError("every group must contain at least one user")

    @property
    def sizes(self):
        return np.bincount(self.assignments, minlength=self.group_count)

    @property
    def user_count(self):
        return len(self.assignments)

    def members(self, g):
        return np.flatnonzero(self.assignments == g)

    @classmethod
    def single(cls, user_count):
        return cls(assignments=np.zeros(user_count, dtype=int), group_count=1)


def _relabel_by_first_user(assignments, group_count):
    _, first = np.unique(assignments, return_index=True)
    order = np.argsort(first)
    mapping = np.empty(group_count, dtype=int)
    mapping[order] = np.arange(group_count)
    return mapping[assignments]


def _capacity_slots(user_count, group_count):
    # K // G mandatory slots per group plus one optional slot per group when G does not divide K
    base, extra = divmod(user_count, group_count)
    mandatory = np.repeat(np.arange(group_count), base)
    optional = np.arange(group_count) if extra else np.zeros(0, dtype=int)
    return np.concatenate([mandatory, optional]), len(mandatory)


def group_users(positions, group_count, seed=0) -> Grouping:
    """
    Balanced minimum-distance grouping on floor coordinates.

    Centroids are seeded with k-means++ and refined by alternating a
    capacity-constrained assignment with centroid updates until the
    assignment stops changing. Every group holds K // G users plus at most
    one more; the K % G groups that take an extra user are picked by
    distance. Groups are numbered by the lowest user index they contain.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    user_count = len(positions)
    if not 1 <= group_count <= user_count:
        raise ValidationError("need 1 <= G <= K for grouping, got G={} K={}".format(group_count, user_count))
    if group_count == 1:
        return Grouping.single(user_count)

    floor = positions[:, :2]
    slots, mandatory_count = _capacity_slots(user_count, group_count)
    centroids, _ = kmeans_plusplus(floor, n_clusters=group_count, random_state=int(seed) % 2 ** 32)

    assignments = None
    for _ in range(MAX_GROUPING_ITERATIONS):
        cost = cdist(floor, centroids[slots], "sqeuclidean")
        # Filling an optional slot costs more than any distance total, so exactly K % G are used
        cost[:, mandatory_count:] += cost.max() * user_count + 1.0
        _, slot_of_user = linear_sum_assignment(cost)
        updated = slots[slot_of_user]
        if assignments is not None and np.array_equal(updated, assignments):
            break
        assignments = updated
        centroids = np.array([floor[assignments == g].mean(axis=0) for g in range(group_count)])
    else:
        logger.debug("Grouping did not settle after %d iterations", MAX_GROUPING_ITERATIONS)

    return Grouping(assignments=_relabel_by_first_user(assignments, group_count), group_count=group_count)


def _noise_vector(sigma2, user_count):
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (user_count,))
    if np.any(sigma2 <= 0):
        raise ValidationError("noise variance must be positive")
    return sigma2


def _own_and_others(received):
    # received[k, j]: power user k receives from the stream aimed at j
    own = np.diag(received).copy()
    others = np.where(np.eye(len(received), dtype=bool), 0.0, received).sum(axis=1)
    return own, others


def _sinr(numerator, components, tokens, sigma2):
    interference = np.zeros_like(numerator)
    for token in tokens:
        interference = interference + components[token]
    return numerator / (interference + sigma2)


@dataclass(frozen=True, eq=False)
class RsSinrs:
    common: np.ndarray
    private: np.ndarray
    denominators: Dict[str, Tuple[str, ...]] = field(default_factory=lambda: dict(SINR_DENOMINATORS[RS]))
    scheme: str = RS

    def as_dict(self):
        return {"common": self.common, "private": self.private}


@dataclass(frozen=True, eq=False)
class HrsSinrs:
    outer_common: np.ndarray
    inner_common: np.ndarray
    private: np.ndarray
    grouping: Grouping
    denominators: Dict[str, Tuple[str, ...]] = field(default_factory=lambda: dict(SINR_DENOMINATORS[HRS]))
    scheme: str = HRS

    def as_dict(self):
        return {"outer_common": self.outer_common, "inner_common": self.inner_common, "private": self.private}


def rs_sinrs(H, precoders, split: RsPowerSplit, sigma2) -> RsSinrs:
    H = np.asarray(H, dtype=float)
    k, n = H.shape
    if precoders.private.shape != (n, k) or precoders.common.shape != (n,):
        raise ValidationError("precoder dimensions do not match a {}x{} channel".format(k, n))
    if split.user_count != k:
        raise ValidationError("power split is for {} users, channel has {}".format(split.user_count, k))
    sigma2 = _noise_vector(sigma2, k)

    private_own, private_others = _own_and_others(split.p_private_each * (H @ precoders.private) ** 2)
    components = {PRIVATE_OWN: private_own, PRIVATE_OTHERS: private_others}
    table = SINR_DENOMINATORS[RS]
    common_signal = split.p_common * (H @ precoders.common) ** 2
    return RsSinrs(
        common=_sinr(common_signal, components, table[COMMON], sigma2),
        private=_sinr(private_own, components, table[PRIVATE_OWN], sigma2)
    )


def _stack_hrs_directions(precoders, grouping):
    n = precoders.outer_common.shape[0]
    private = np.zeros((n, grouping.user_count))
    inner_common = np.zeros((n, grouping.group_count))
    for g in range(grouping.group_count):
        basis = precoders.outer[g]
        private[:, grouping.members(g)] = basis @ precoders.inner[g]
        inner_common[:, g] = basis @ precoders.inner_common[g]
    return private, inner_common


def hrs_sinrs(H, precoders, split: HrsPowerSplit, grouping: Grouping, sigma2) -> HrsSinrs:
    H = np.asarray(H, dtype=float)
    k, n = H.shape
    if grouping.user_count != k or precoders.group_count != grouping.group_count:
        raise ValidationError("grouping and precoders do not match a {}-user channel".format(k))
    if split.user_count != k or split.group_count != grouping.group_count:
        raise ValidationError("power split does not match the grouping")
    sigma2 = _noise_vector(sigma2, k)

    private_directions, inner_directions = _stack_hrs_directions(precoders, grouping)
    private_own, private_others = _own_and_others(split.p_private_each * (H @ private_directions) ** 2)

    inner = split.p_inner_common_each * (H @ inner_directions) ** 2
    own_group = np.arange(grouping.group_count)[None, :] == grouping.assignments[:, None]
    inner_own = np.where(own_group, inner, 0.0).sum(axis=1)
    inner_other = np.where(own_group, 0.0, inner).sum(axis=1)

    components = {
        INNER_COMMON_OWN: inner_own,
        INNER_COMMON_OTHER_GROUPS: inner_other,
        PRIVATE_OWN: private_own,
        PRIVATE_OTHERS: private_others,
    }
    table = SINR_DENOMINATORS[HRS]
    outer_signal = split.p_outer_common * (H @ precoders.outer_common) ** 2
    return HrsSinrs(
        outer_common=_sinr(outer_signal, components, table[OUTER_COMMON], sigma2),
        inner_common=_sinr(inner_own, components, table[INNER_COMMON_OWN], sigma2),
        private=_sinr(private_own, components, table[PRIVATE_OWN], sigma2),
        grouping=grouping
    )


@dataclass(frozen=True, eq=False)
class RateReport:
    scheme: str
    per_user_private_se: np.ndarray
    per_user_shares_se: Dict[str, np.ndarray]
    stream_se: Dict[str, float]
    sinrs: Dict[str, np.ndarray]
    bandwidth_hz: float = DEFAULT_BANDWIDTH_HZ
    group_count: int = 0

    @property
    def user_count(self):
        return len(self.per_user_private_se)

    @property
    def per_user_common_share_se(self):
        shares = np.zeros(self.user_count)
        for share in self.per_user_shares_se.values():
            shares = shares + share
        return shares

    @property
    def per_user_se(self):
        return self.per_user_private_se + self.per_user_common_share_se

    @property
    def sum_se(self):
        return float(sum(self.stream_se.values()))

    @property
    def per_user_rate_bps(self):
        return self.bandwidth_hz * self.per_user_se

    @property
    def sum_rate_bps(self):
        return self.bandwidth_hz * self.sum_se

    @property
    def mean_user_rate_bps(self):
        return float(np.mean(self.per_user_rate_bps))


def _spectral_efficiency(sinr):
    return np.log2(1.0 + np.asarray(sinr, dtype=float))


def rs_rates(sinrs: RsSinrs, bandwidth_hz=DEFAULT_BANDWIDTH_HZ) -> RateReport:
    k = len(sinrs.private)
    if k == 0:
        raise ValidationError("RS rates need at least one user")
    common_se = float(_spectral_efficiency(np.min(sinrs.common)))
    private_se = _spectral_efficiency(sinrs.private)
    return RateReport(
        scheme=RS,
        per_user_private_se=private_se,
        per_user_shares_se={COMMON: np.full(k, common_se / k)},
        stream_se={COMMON: common_se, "private": float(np.sum(private_se))},
        sinrs=sinrs.as_dict(),
        bandwidth_hz=bandwidth_hz
    )


def hrs_rates(sinrs: HrsSinrs, grouping: Optional[Grouping] = None, bandwidth_hz=DEFAULT_BANDWIDTH_HZ) -> RateReport:
    grouping = grouping or sinrs.grouping
    k = len(sinrs.private)
    if k == 0 or grouping.user_count != k:
        raise ValidationError("grouping does not match the SINR vectors")
    outer_se = float(_spectral_efficiency(np.min(sinrs.outer_common)))
    inner_se = np.array([
        float(_spectral_efficiency(np.min(sinrs.inner_common[grouping.members(g)])))
        for g in range(grouping.group_count)
    ])
    private_se = _spectral_efficiency(sinrs.private)
    sizes = grouping.sizes
    return RateReport(
        scheme=HRS,
        per_user_private_se=private_se,
        per_user_shares_se={
            OUTER_COMMON: np.full(k, outer_se / k),
            "inner_common": inner_se[grouping.assignments] / sizes[grouping.assignments],
        },
        stream_se={OUTER_COMMON: outer_se, "inner_common": float(np.sum(inner_se)), "private": float(np.sum(private_se))},
        sinrs=sinrs.as_dict(),
        bandwidth_hz=bandwidth_hz,
        group_count=grouping.group_count
    )


@dataclass(frozen=True)
class DecodeStage:
    target: str
    noise: frozenset


@dataclass(frozen=True)
class DecodePlan:
    scheme: str
    stages: Tuple[DecodeStage, ...]


def decode_chain_check(sinrs, scheme=None) -> DecodePlan:
    """
    Return the SIC order for the scheme with the streams each stage treats as
    noise, and check it against the denominators the SINRs were built with.
    """
    scheme = scheme or sinrs.scheme
    if scheme not in SCHEMES:
        raise ValidationError("unknown scheme {!r}".format(scheme))
    remaining = set(RS_STREAMS if scheme == RS else HRS_STREAMS)
    stages = []
    for target in DECODE_ORDER[scheme]:
        noise = frozenset(remaining - {target})
        used = frozenset(sinrs.denominators.get(target, ()))
        if used != noise:
            raise ConsistencyError("stage {!r} treats {} as noise but its SINR uses {}".format(
                target, sorted(noise), sorted(used)
            ))
        stages.append(DecodeStage(target=target, noise=noise))
        remaining.discard(target)
    return DecodePlan(scheme=scheme, stages=tuple(stages))


@dataclass(frozen=True, eq=False)
class RsSolution:
    precoders: object
    split: RsPowerSplit
    sinrs: RsSinrs
    regularized: bool = False

    def rates(self, bandwidth_hz=DEFAULT_BANDWIDTH_HZ):
        return rs_rates(self.sinrs, bandwidth_hz)


@dataclass(frozen=True, eq=False)
class HrsSolution:
    precoders: object
    split: HrsPowerSplit
    grouping: Grouping
    sinrs: HrsSinrs
    regularized: bool = False

    def rates(self, bandwidth_hz=DEFAULT_BANDWIDTH_HZ):
        return hrs_rates(self.sinrs, self.grouping, bandwidth_hz)


def solve_rs(H, split: RsPowerSplit, sigma2, ridge=0.0, common_strategy=PRINCIPAL_DIRECTION) -> RsSolution:
    try:
        precoders = rs_precoders(H, ridge=ridge, common_strategy=common_strategy)
    except RankError as e:
        if ridge > 0:
            raise
        ridge = fallback_ridge(H)
        logger.warning("RS: dependent users %s, retrying zero-forcing with ridge %.3e", list(e.users), ridge)
        precoders = rs_precoders(H, ridge=ridge, common_strategy=common_strategy)
    return RsSolution(
        precoders=precoders,
        split=split,
        sinrs=rs_sinrs(H, precoders, split, sigma2),
        regularized=ridge > 0
    )


def solve_hrs(H, grouping: Grouping, split: HrsPowerSplit, sigma2, ridge=0.0,
              common_strategy=PRINCIPAL_DIRECTION) -> HrsSolution:
    try:
        precoders = hrs_precoders(H, grouping, ridge=ridge, common_strategy=common_strategy)
    except RankError as e:
        if ridge > 0:
            raise
        ridge = fallback_ridge(H)
        logger.warning("HRS: dependent users %s, retrying inner zero-forcing with ridge %.3e", list(e.users), ridge)
        precoders = hrs_precoders(H, grouping, ridge=ridge, common_strategy=common_strategy)
    return HrsSolution(
        precoders=precoders,
        split=split,
        grouping=grouping,
        sinrs=hrs_sinrs(H, precoders, split, grouping, sigma2),
        regularized=ridge > 0 or any(precoders.regularized)
    )


def _common_stream(scheme):
    return COMMON if scheme == RS else OUTER_COMMON


def zero_report(scheme, user_count, bandwidth_hz=DEFAULT_BANDWIDTH_HZ, group_count=0) -> RateReport:
    """Report for a trial in which no user sees any element."""
    if scheme not in SCHEMES:
        raise ValidationError("unknown scheme {!r}".format(scheme))
    zeros = np.zeros(user_count)
    if scheme == RS:
        streams, sinr_names = (COMMON, "private"), ("common", "private")
    else:
        streams, sinr_names = (OUTER_COMMON, "inner_common", "private"), ("outer_common", "inner_common", "private")
    return RateReport(
        scheme=scheme,
        per_user_private_se=zeros,
        per_user_shares_se={s: zeros for s in streams if s != "private"},
        stream_se={s: 0.0 for s in streams},
        sinrs={s: zeros for s in sinr_names},
        bandwidth_hz=bandwidth_hz,
        group_count=group_count
    )


def pad_unserved(report: RateReport, served, exclude_unserved_from_common=False) -> RateReport:
    """
    Expand a report computed over served users back to all users.

    Unserved users get zero rate and zero SINRs. Unless excluded, their zero
    common SINR enters the min, so the RS common (HRS outer common) rate
    drops to zero for everyone.
    """
    served = np.asarray(served, dtype=bool)
    if np.count_nonzero(served) != report.user_count:
        raise ValidationError("served mask selects {} users, report has {}".format(
            np.count_nonzero(served), report.user_count
        ))
    if served.all():
        return report

    def expand(values):
        full = np.zeros(len(served))
        full[served] = values
        return full

    shares = {name: expand(values) for name, values in report.per_user_shares_se.items()}
    stream_se = dict(report.stream_se)
    if not exclude_unserved_from_common:
        common = _common_stream(report.scheme)
        shares[common] = np.zeros(len(served))
        stream_se[common] = 0.0
    return RateReport(
        scheme=report.scheme,
        per_user_private_se=expand(report.per_user_private_se),
        per_user_shares_se=shares,
        stream_se=stream_se,
        sinrs={name: expand(values) for name, values in report.sinrs.items()},
        bandwidth_hz=report.bandwidth_hz,
        group_count=report.group_count
    )


def solve_and_rate(scheme, H, sigma2, total_p, t=0.8, alpha=0.8, beta=0.9, groups=1, positions=None,
                   seed=0, ridge=0.0, common_strategy=PRINCIPAL_DIRECTION,
                   exclude_unserved_from_common=False, bandwidth_hz=DEFAULT_BANDWIDTH_HZ):
    """
    Evaluate one scheme on a channel that may contain unserved (all-zero) users.

    Returns (RateReport over all users, regularized flag). HRS groups the
    served users by floor position.
    """
    H = np.asarray(H, dtype=float)
    served = np.any(H > 0.0, axis=1)
    served_count = int(np.count_nonzero(served))
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (len(H),))
    if served_count == 0:
        return zero_report(scheme, len(H), bandwidth_hz, groups if scheme == HRS else 0), False

    h = H[served]
    if scheme == RS:
        split = RsPowerSplit.create(total_p, t, served_count)
        solution = solve_rs(h, split, sigma2[served], ridge=ridge, common_strategy=common_strategy)
    elif scheme == HRS:
        if groups > served_count:
            raise InfeasibleError("{} served users cannot fill {} groups".format(served_count, groups))
        if positions is None:
            raise ValidationError("HRS needs user positions for grouping")
        grouping = group_users(np.asarray(positions)[served], groups, seed=seed)
        split = HrsPowerSplit.create(total_p, alpha, beta, groups, served_count)
        solution = solve_hrs(h, grouping, split, sigma2[served], ridge=ridge, common_strategy=common_strategy)
    else:
        raise ValidationError("unknown scheme {!r}, expected one of {}".format(scheme, SCHEMES))

    report = pad_unserved(solution.rates(bandwidth_hz), served, exclude_unserved_from_common)
    return report, solution.regularized
