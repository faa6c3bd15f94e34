import numpy as np
import pytest

from vcsel_rs.errors import DegenerateGeometryError, ValidationError
from vcsel_rs.geometry import (
    AdrBranch,
    Room,
    SceneConfig,
    VcselElement,
    beam_footprints,
    branch_normal,
    default_scene,
    los_geometry
)


def _element(position=(2.5, 2.5, 3.0), boresight=(0.0, 0.0, -1.0)):
    return VcselElement(
        position=np.array(position),
        boresight=np.array(boresight),
        beam_waist_m=20e-6,
        wavelength_m=850e-9,
        optical_power_w=2.5e-3
    )


def test_branch_normal():
    assert branch_normal(0.0, 90.0) == pytest.approx([0.0, 0.0, 1.0], abs=1e-15)
    assert branch_normal(90.0, 60.0) == pytest.approx([0.0, 0.5, np.sqrt(3) / 2], abs=1e-15)
    assert branch_normal(180.0, 60.0) == pytest.approx([-0.5, 0.0, np.sqrt(3) / 2], abs=1e-15)
    with pytest.raises(ValidationError):
        branch_normal(360.0, 60.0)
    with pytest.raises(ValidationError):
        branch_normal(0.0, 0.0)


def test_los_geometry_below_transmitter():
    geom = los_geometry(_element(), [2.5, 2.5, 0.85], branch_normal(0.0, 60.0))
    assert geom.distance_m == pytest.approx(2.15)
    assert geom.radiance_angle_rad == pytest.approx(0.0, abs=1e-12)
    assert geom.off_axis_m == pytest.approx(0.0, abs=1e-12)
    # elevation 60 leaves the branch 30 degrees off vertical, outside a 25 degree FOV
    assert np.rad2deg(geom.incidence_angle_rad) == pytest.approx(30.0)


def test_los_geometry_off_axis():
    geom = los_geometry(_element(), [3.5, 2.5, 0.85], branch_normal(0.0, 90.0))
    expected = np.arctan2(1.0, 2.15)
    assert geom.distance_m == pytest.approx(np.hypot(1.0, 2.15))
    assert geom.radiance_angle_rad == pytest.approx(expected)
    assert geom.incidence_angle_rad == pytest.approx(expected)
    assert geom.off_axis_m == pytest.approx(1.0)


def test_los_geometry_degenerate():
    with pytest.raises(DegenerateGeometryError):
        los_geometry(_element(), [2.5, 2.5, 3.0], branch_normal(0.0, 60.0))
    with pytest.raises(DegenerateGeometryError):
        los_geometry(_element(), [1.0, 1.0, 3.2], branch_normal(0.0, 60.0))


def test_element_validation():
    with pytest.raises(ValidationError):
        _element(boresight=(0.0, 0.0, -2.0))
    with pytest.raises(ValidationError):
        _element(boresight=(0.0, 0.0, 1.0))
    with pytest.raises(ValidationError):
        AdrBranch(azimuth_deg=0.0, elevation_deg=60.0, fov_deg=0.0, area_m2=20e-6)


def test_room():
    room = Room()
    inside = room.contains([[0.0, 0.0, 0.85], [5.0, 5.0, 0.85], [2.0, 6.0, 0.85], [2.0, 2.0, 1.0]])
    assert inside.tolist() == [True, True, False, False]
    with pytest.raises(ValidationError):
        Room(height_m=0.5, rx_plane_height_m=0.85)


def test_default_scene(scene):
    assert scene.element_count == 40
    assert len(scene.units) == 4
    assert len(scene.adr.branches) == 4
    assert np.linalg.norm(scene.boresights, axis=1) == pytest.approx(np.ones(40))

    tilts = np.rad2deg(np.arccos(-scene.boresights[:, 2]))
    assert tilts[0] == pytest.approx(0.0, abs=1e-6)
    assert tilts[1:10] == pytest.approx(np.full(9, 20.0))
    assert scene.element_units.tolist() == [u for u in range(4) for _ in range(10)]


def test_default_scene_validation():
    with pytest.raises(ValidationError):
        default_scene(SceneConfig(vcsels_per_unit=0))
    with pytest.raises(ValidationError):
        default_scene(SceneConfig(branch_fovs_deg=(25.0, 25.0)))


def test_beam_footprints(scene):
    points, elements = beam_footprints(scene)
    assert len(points) == 40
    assert elements.tolist() == list(range(40))
    assert points[:, 2] == pytest.approx(np.full(40, 0.85))
    # vertical elements land straight below their unit
    assert points[0, :2] == pytest.approx([3.5, 3.5])
    offsets = np.linalg.norm(points[1:10, :2] - points[0, :2], axis=1)
    assert offsets == pytest.approx(np.full(9, 2.15 * np.tan(np.deg2rad(20.0))))
