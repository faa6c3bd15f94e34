import numpy as np
import pytest

from vcsel_rs.errors import InfeasibleError, PrecodingError, RankError
from vcsel_rs.precoding import (
    EQUAL_GAIN_MRT,
    PRINCIPAL_DIRECTION,
    block_diagonal_precoder,
    common_precoder,
    fallback_ridge,
    hrs_precoders,
    numerical_rank,
    rs_precoders,
    zf_precoder
)
from vcsel_rs.ratesplit import Grouping


def _zf_leakage(H, W):
    gains = np.abs(H @ W)
    off = gains[~np.eye(len(H), dtype=bool)].reshape(len(H), -1)
    return (off.max(axis=1) if off.size else np.zeros(len(H))) / np.linalg.norm(H, axis=1)


def test_zf_trivial():
    assert zf_precoder(np.eye(2)) == pytest.approx(np.eye(2))
    assert zf_precoder(np.array([[2.0, 0.0], [0.0, 3.0]])) == pytest.approx(np.eye(2))


def test_zf_contract(rng):
    for _ in range(100):
        k = int(rng.integers(1, 21))
        H = rng.uniform(0.0, 1.0, size=(k, 40))
        W = zf_precoder(H)
        assert np.linalg.norm(W, axis=0) == pytest.approx(np.ones(k), abs=1e-10)
        assert np.all(_zf_leakage(H, W) <= 1e-9)
        assert np.all(np.diag(H @ W) > 0.0)


def test_zf_row_scaling(rng):
    H = rng.uniform(size=(4, 6))
    scaled = H * np.array([[0.5], [2.0], [3.0], [0.25]])
    assert zf_precoder(scaled) == pytest.approx(zf_precoder(H), abs=1e-9)


def test_zf_errors():
    with pytest.raises(InfeasibleError):
        zf_precoder(np.ones((3, 2)))
    H = np.array([[1.0, 2.0, 0.0], [1.0, 2.0, 0.0]])
    with pytest.raises(RankError) as e:
        zf_precoder(H)
    assert len(e.value.users) == 1
    W = zf_precoder(H, ridge=fallback_ridge(H))
    assert np.linalg.norm(W, axis=0) == pytest.approx([1.0, 1.0])


def test_zf_nearly_dependent_rows():
    # Rows this close make the Gram matrix singular in floating point
    H = np.array([[1.0, 0.5, 0.0], [1.0, 0.5, 1e-9]])
    assert numerical_rank(H) == 1
    with pytest.raises(RankError) as e:
        zf_precoder(H)
    assert len(e.value.users) == 1
    W = zf_precoder(H, ridge=fallback_ridge(H))
    assert np.all(np.isfinite(W))
    assert np.linalg.norm(W, axis=0) == pytest.approx([1.0, 1.0])


def test_numerical_rank():
    assert numerical_rank(np.zeros((2, 3))) == 0
    assert numerical_rank(np.eye(3)) == 3
    assert numerical_rank(np.diag([1.0, 1e-3, 1e-12])) == 2


def test_fallback_ridge():
    H = np.array([[1.0, 0.0], [0.0, 3.0]])
    assert fallback_ridge(H) == pytest.approx(1e-6 * 10.0 / 2)


@pytest.mark.parametrize("strategy", [PRINCIPAL_DIRECTION, EQUAL_GAIN_MRT])
def test_common_single_user(strategy):
    h = np.array([[3.0, 0.0, 4.0]])
    assert common_precoder(h, strategy) == pytest.approx([0.6, 0.0, 0.8])


@pytest.mark.parametrize("strategy", [PRINCIPAL_DIRECTION, EQUAL_GAIN_MRT])
def test_common_identical_rows(strategy):
    H = np.array([[1.0, 2.0, 2.0], [1.0, 2.0, 2.0]])
    assert common_precoder(H, strategy) == pytest.approx(np.array([1.0, 2.0, 2.0]) / 3.0)


def test_common_orthogonal_rows():
    H = np.array([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]])
    w = common_precoder(H)
    assert np.abs(H @ w) == pytest.approx(np.full(3, 2.0 / np.sqrt(3)))
    assert np.linalg.norm(w) == pytest.approx(1.0)


def test_common_sign_rule(rng):
    for _ in range(20):
        H = rng.uniform(size=(3, 5))
        w = common_precoder(H)
        assert np.sum(H @ w) >= 0.0
        assert np.linalg.norm(w) == pytest.approx(1.0)


def test_common_zero_channel():
    with pytest.raises(PrecodingError):
        common_precoder(np.zeros((2, 3)))


def test_bd_single_group(rng):
    H = rng.uniform(size=(4, 10))
    bd = block_diagonal_precoder(H, Grouping.single(4))
    (B,) = bd.bases
    assert B.shape == (10, 5)
    assert B.T @ B == pytest.approx(np.eye(5), abs=1e-10)
    # the basis holds the whole row space of H
    assert H @ B @ B.T == pytest.approx(H, abs=1e-10)
    assert bd.regularized == (False,)


def test_bd_leakage(rng):
    H = rng.uniform(size=(10, 40))
    grouping = Grouping(assignments=np.repeat(np.arange(5), 2), group_count=5)
    bd = block_diagonal_precoder(H, grouping)
    for g, B in enumerate(bd.bases):
        assert B.shape == (40, 3)
        assert B.T @ B == pytest.approx(np.eye(3), abs=1e-10)
        for l in range(5):
            if l != g:
                H_l = H[grouping.members(l)]
                assert np.linalg.norm(H_l @ B) <= 1e-9 * np.linalg.norm(H_l)


def test_bd_orthogonal_groups():
    H = np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ])
    grouping = Grouping(assignments=[0, 0, 1], group_count=2)
    bd = block_diagonal_precoder(H, grouping)
    assert np.linalg.norm(H[2:] @ bd.bases[0]) == pytest.approx(0.0, abs=1e-12)
    assert np.linalg.norm(H[:2] @ bd.bases[1]) == pytest.approx(0.0, abs=1e-12)


def test_bd_regularized_fallback():
    H = np.array([[1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    grouping = Grouping(assignments=[0, 1, 1], group_count=2)
    bd = block_diagonal_precoder(H, grouping)
    assert bd.regularized == (True, False)
    assert bd.bases[0].T @ bd.bases[0] == pytest.approx(np.eye(bd.bases[0].shape[1]), abs=1e-10)


def test_hrs_precoders(rng):
    H = rng.uniform(size=(6, 12))
    grouping = Grouping(assignments=[0, 0, 1, 1, 2, 2], group_count=3)
    precoders = hrs_precoders(H, grouping)
    assert precoders.group_count == 3
    assert np.linalg.norm(precoders.outer_common) == pytest.approx(1.0)
    for g in range(3):
        B = precoders.outer[g]
        W = precoders.inner[g]
        H_g = H[grouping.members(g)]
        assert np.linalg.norm(W, axis=0) == pytest.approx(np.ones(2))
        assert np.linalg.norm(precoders.inner_common[g]) == pytest.approx(1.0)
        assert np.all(_zf_leakage(H_g, B @ W) <= 1e-9)


def test_hrs_single_group_matches_rs(rng):
    H = rng.uniform(size=(4, 6))
    rs = rs_precoders(H)
    hrs = hrs_precoders(H, Grouping.single(4))
    B = hrs.outer[0]
    assert B @ hrs.inner[0] == pytest.approx(rs.private, abs=1e-10)
    assert B @ hrs.inner_common[0] == pytest.approx(rs.common, abs=1e-10)
