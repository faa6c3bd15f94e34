import numpy as np
import pytest

from vcsel_rs.channel import (
    MAX_MIN_GAIN,
    BranchGains,
    build_branch_gains,
    channel_to_frame,
    condition_report,
    select_branch
)
from vcsel_rs.errors import ValidationError
from vcsel_rs.geometry import SceneConfig, default_scene, los_geometry
from vcsel_rs.optics import GainModel, gaussian_gain, lambertian_gain


def _random_users(rng, count):
    return np.column_stack([rng.uniform(0.0, 5.0, count), rng.uniform(0.0, 5.0, count), np.full(count, 0.85)])


def _manual_gains(gains):
    gains = np.asarray(gains, dtype=float)
    return BranchGains(
        gains=gains,
        users=np.zeros((len(gains), 3)),
        model=GainModel.gaussian(),
        responsivity_a_per_w=0.4,
        element_power_w=np.full(gains.shape[-1], 2.5e-3)
    )


def test_branch_gains_shape(scene):
    gains = build_branch_gains(scene, [[1.0, 2.0, 0.85]], GainModel.gaussian())
    assert gains.shape == (1, 4, 40)
    assert np.all(gains.gains >= 0.0)


def test_vertical_element_is_outside_fov(scene):
    for model in (GainModel.gaussian(), GainModel.lambertian()):
        for unit, center in enumerate([(3.5, 3.5), (1.5, 3.5), (3.5, 1.5), (1.5, 1.5)]):
            gains = build_branch_gains(scene, [[center[0], center[1], 0.85]], model)
            assert np.all(gains.gains[0, :, unit * 10] == 0.0)


def test_user_outside_room(scene):
    with pytest.raises(ValidationError):
        build_branch_gains(scene, [[6.0, 1.0, 0.85]], GainModel.gaussian())
    with pytest.raises(ValidationError):
        build_branch_gains(scene, [[1.0, 1.0, 1.2]], GainModel.gaussian())


def test_select_branch_max_sum_power(scene, rng):
    gains = build_branch_gains(scene, _random_users(rng, 30), GainModel.lambertian())
    channel = select_branch(gains)
    scores = np.sum(gains.gains ** 2, axis=-1)
    for k, branch in enumerate(channel.selected_branch):
        assert np.all(scores[k, branch] >= scores[k])
        expected = 0.4 * gains.gains[k, branch] * scene.optical_powers_w
        assert channel.h[k] == pytest.approx(expected, rel=1e-15, abs=0.0)
    assert np.all(channel.h >= 0.0)


def test_select_branch_ties_and_unserved():
    gains = _manual_gains([
        [[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]],
        [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
        [[0.0, 0.0], [0.0, 0.0], [0.3, 0.0]],
    ])
    channel = select_branch(gains)
    assert channel.selected_branch.tolist() == [0, 0, 2]
    assert channel.unserved_users.tolist() == [1]
    assert channel.served.tolist() == [True, False, True]


def test_select_branch_max_min_gain():
    gains = _manual_gains([
        [[0.9, 0.01, 0.0], [0.2, 0.3, 0.0], [0.0, 0.0, 0.0]],
    ])
    assert select_branch(gains).selected_branch.tolist() == [0]
    assert select_branch(gains, MAX_MIN_GAIN).selected_branch.tolist() == [1]
    with pytest.raises(ValidationError):
        select_branch(gains, "max_snr")


def test_corner_user_faces_interior(scene):
    channel = select_branch(build_branch_gains(scene, [[0.5, 0.5, 0.85]], GainModel.lambertian()))
    assert channel.selected_branch[0] in (0, 1)
    assert np.any(channel.h[0] > 0.0)


def test_power_linearity(rng):
    users = _random_users(rng, 8)
    base = select_branch(build_branch_gains(default_scene(), users, GainModel.lambertian()))
    doubled_scene = default_scene(SceneConfig(optical_power_w=5e-3))
    doubled = select_branch(build_branch_gains(doubled_scene, users, GainModel.lambertian()))
    assert doubled.h == pytest.approx(2 * base.h, rel=1e-12, abs=0.0)


def test_permutation_equivariance(scene, rng):
    users = _random_users(rng, 12)
    order = rng.permutation(12)
    channel = select_branch(build_branch_gains(scene, users, GainModel.lambertian()))
    permuted = select_branch(build_branch_gains(scene, users[order], GainModel.lambertian()))
    assert np.allclose(permuted.h, channel.h[order], rtol=1e-14, atol=0.0)
    assert np.array_equal(permuted.selected_branch, channel.selected_branch[order])


@pytest.mark.parametrize("model", [GainModel.gaussian(), GainModel.lambertian()])
def test_brute_force_entries(scene, rng, model):
    users = np.vstack([_random_users(rng, 6), [[2.28, 1.5, 0.85], [3.2, 3.6, 0.85]]])
    channel = select_branch(build_branch_gains(scene, users, model))
    branches = scene.adr.branches
    for k, user in enumerate(users):
        branch = branches[channel.selected_branch[k]]
        for n, element in enumerate(scene.elements):
            geom = los_geometry(element, user, branch.normal)
            if model.variant == "gaussian":
                gain = gaussian_gain(geom, element.beam_waist_m, element.wavelength_m, branch.area_m2, branch.fov_deg)
            else:
                gain = lambertian_gain(geom, model.lambertian_order, branch.area_m2, branch.fov_deg)
            expected = 0.4 * element.optical_power_w * gain
            assert channel.h[k, n] == pytest.approx(expected, rel=1e-12, abs=1e-250)


def test_condition_report():
    orthogonal = condition_report(np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]) / np.array([[1.0], [2.0]]))
    assert orthogonal.rank == 2
    assert orthogonal.condition_number == pytest.approx(1.0)
    assert not orthogonal.rank_deficient

    duplicated = condition_report(np.array([[1.0, 2.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 1.0]]))
    assert duplicated.rank == 2
    assert duplicated.rank_deficient

    subset = condition_report(np.array([[1.0, 2.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 1.0]]), user_subset=[0, 2])
    assert subset.rank == 2
    with pytest.raises(ValidationError):
        condition_report(np.eye(2), user_subset=[])


def test_channel_frame(scene):
    channel = select_branch(build_branch_gains(scene, [[2.28, 1.5, 0.85], [1.0, 1.0, 0.85]], GainModel.gaussian()))
    frame = channel_to_frame(channel)
    assert list(frame.columns) == ["user", "branch"] + ["n{}".format(n) for n in range(40)]
    assert frame["user"].tolist() == [0, 1]
    assert frame["branch"].tolist() == channel.selected_branch.tolist()
