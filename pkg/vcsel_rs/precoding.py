"""
Linear precoders for rate splitting (RS) and hierarchical rate splitting (HRS).

Channels are real K x N matrices (users x transmit elements). Every returned
direction has unit norm. The outer HRS precoder block-diagonalizes the
instantaneous channels of the other groups.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import linalg

from vcsel_rs.errors import InfeasibleError, RankError, ValidationError


logger = logging.getLogger(__name__)

PRINCIPAL_DIRECTION = "principal_direction"
EQUAL_GAIN_MRT = "equal_gain_mrt"
COMMON_STRATEGIES = (PRINCIPAL_DIRECTION, EQUAL_GAIN_MRT)

FALLBACK_RIDGE_SCALE = 1e-6
DEGENERACY_TOL = 1e-9
# Singular values below this fraction of the largest count as zero
RANK_RTOL = 1e-7


@dataclass(frozen=True, eq=False)
class RsPrecoders:
    private: np.ndarray  # N x K
    common: np.ndarray  # N
    ridge: float = 0.0


@dataclass(frozen=True, eq=False)
class HrsPrecoders:
    outer: Tuple[np.ndarray, ...]  # B_g, N x r_g
    inner: Tuple[np.ndarray, ...]  # W_g, r_g x K_g
    inner_common: Tuple[np.ndarray, ...]  # w_ic,g, r_g
    outer_common: np.ndarray  # w_oc, N
    regularized: Tuple[bool, ...] = ()
    ridge: float = 0.0

    @property
    def group_count(self):
        return len(self.outer)


@dataclass(frozen=True, eq=False)
class BlockDiagonalization:
    bases: Tuple[np.ndarray, ...]
    regularized: Tuple[bool, ...]


def _as_matrix(H):
    H = np.asarray(H, dtype=float)
    if H.ndim != 2:
        raise ValidationError("channel must be a K x N matrix")
    return H


def fallback_ridge(H):
    H = _as_matrix(H)
    return FALLBACK_RIDGE_SCALE * float(np.trace(H @ H.T)) / H.shape[0]


def numerical_rank(H):
    s = linalg.svdvals(_as_matrix(H))
    if len(s) == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > RANK_RTOL * s[0]))


def dependent_users(H):
    """Users whose channel lies, up to RANK_RTOL, in the span of the others (pivoted QR on H^T)."""
    H = _as_matrix(H)
    rank = numerical_rank(H)
    _, _, pivots = linalg.qr(H.T, mode="economic", pivoting=True)
    return sorted(int(p) for p in pivots[rank:])


def _normalize_columns(raw):
    norms = np.linalg.norm(raw, axis=0)
    if np.any(norms == 0.0):
        raise RankError(np.flatnonzero(norms == 0.0), "zero-forcing produced empty directions")
    return raw / norms[None, :]


def zf_precoder(H, ridge=0.0):
    H = _as_matrix(H)
    k, n = H.shape
    if k > n:
        raise InfeasibleError("zero-forcing needs K <= N, got K={} N={}".format(k, n))
    if ridge < 0:
        raise ValidationError("ridge must be nonnegative")
    if ridge == 0.0 and numerical_rank(H) < k:
        raise RankError(dependent_users(H))
    gram = H @ H.T + ridge * np.eye(k)
    # H^T (H H^T + ridge I)^-1, using the symmetry of the Gram matrix
    try:
        raw = linalg.solve(gram, H, assume_a="pos").T
    except np.linalg.LinAlgError:
        raise RankError(dependent_users(H), "Gram matrix is not numerically positive definite")
    return _normalize_columns(raw)


def _sign_normalize(H, w):
    total = float(np.sum(H @ w))
    if total < 0:
        return -w
    if total == 0.0:
        nonzero = np.flatnonzero(np.abs(w) > 0)
        if len(nonzero) and w[nonzero[0]] < 0:
            return -w
    return w


def common_precoder(H, strategy=PRINCIPAL_DIRECTION):
    H = _as_matrix(H)
    if not np.any(H):
        raise InfeasibleError("common precoder needs a nonzero channel")
    if strategy == EQUAL_GAIN_MRT:
        norms = np.linalg.norm(H, axis=1)
        active = norms > 0
        direction = np.sum(H[active] / norms[active, None], axis=0)
        if not np.any(direction):
            raise InfeasibleError("equal-gain combination of the user channels vanishes")
        return direction / np.linalg.norm(direction)
    if strategy != PRINCIPAL_DIRECTION:
        raise ValidationError("unknown common strategy {!r}, expected one of {}".format(strategy, COMMON_STRATEGIES))

    _, s, vt = linalg.svd(H, full_matrices=False)
    top = s >= s[0] * (1.0 - DEGENERACY_TOL)
    if np.count_nonzero(top) == 1:
        direction = vt[0]
    else:
        # Degenerate dominant subspace: project the aggregate channel onto it
        basis = vt[top]
        direction = basis.T @ (basis @ H.sum(axis=0))
        if np.linalg.norm(direction) <= DEGENERACY_TOL * np.linalg.norm(H):
            direction = basis[0]
        direction = direction / np.linalg.norm(direction)
    return _sign_normalize(H, direction)


def _group_rows(grouping, g):
    return np.flatnonzero(np.asarray(grouping.assignments) == g)


def block_diagonal_precoder(H, grouping) -> BlockDiagonalization:
    H = _as_matrix(H)
    n = H.shape[1]
    assignments = np.asarray(grouping.assignments)
    bases, regularized = [], []
    for g in range(grouping.group_count):
        own = H[assignments == g]
        others = H[assignments != g]
        width = own.shape[0] + 1
        if others.shape[0] == 0:
            null_basis = np.eye(n)
        else:
            null_basis = linalg.null_space(others, rcond=RANK_RTOL)

        if null_basis.shape[1] > 0:
            _, _, vt = linalg.svd(own @ null_basis, full_matrices=True)
            rank = min(null_basis.shape[1], width)
            bases.append(null_basis @ vt[:rank].T)
            regularized.append(False)
            continue

        logger.warning("Group %d: other groups span the whole transmit space, using regularized BD", g)
        gram = others @ others.T
        rho = FALLBACK_RIDGE_SCALE * float(np.trace(gram)) / others.shape[0]
        try:
            projector = np.eye(n) - others.T @ linalg.solve(gram + rho * np.eye(len(gram)), others, assume_a="pos")
        except np.linalg.LinAlgError:
            raise InfeasibleError("group {}: regularized block diagonalization failed".format(g))
        _, _, vt = linalg.svd(own @ projector, full_matrices=True)
        bases.append(vt[:min(n, width)].T)
        regularized.append(True)
    return BlockDiagonalization(bases=tuple(bases), regularized=tuple(regularized))


def hrs_precoders(H, grouping, ridge=0.0, common_strategy=PRINCIPAL_DIRECTION) -> HrsPrecoders:
    H = _as_matrix(H)
    bd = block_diagonal_precoder(H, grouping)
    inner, inner_common = [], []
    for g, basis in enumerate(bd.bases):
        effective = H[_group_rows(grouping, g)] @ basis
        inner.append(zf_precoder(effective, ridge=ridge))
        inner_common.append(common_precoder(effective, common_strategy))
    return HrsPrecoders(
        outer=bd.bases,
        inner=tuple(inner),
        inner_common=tuple(inner_common),
        outer_common=common_precoder(H, common_strategy),
        regularized=bd.regularized,
        ridge=ridge
    )


def rs_precoders(H, ridge=0.0, common_strategy=PRINCIPAL_DIRECTION) -> RsPrecoders:
    return RsPrecoders(
        private=zf_precoder(H, ridge=ridge),
        common=common_precoder(H, common_strategy),
        ridge=ridge
    )
