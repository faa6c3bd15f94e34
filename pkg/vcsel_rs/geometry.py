"""
Room, ceiling transmitter array and angle-diversity receiver (ADR) geometry.

Coordinates are meters with the origin at a floor corner and z pointing up.
Branch elevation is measured from the horizontal plane, so 90 degrees is the
zenith and the default 60 degree branches lean 30 degrees off vertical.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from vcsel_rs.errors import DegenerateGeometryError, ValidationError


UNIT_NORM_TOL = 1e-12
UNIT_RADIUS_M = 0.05

DEFAULT_UNIT_CENTERS = (
    (3.5, 3.5, 3.0),
    (1.5, 3.5, 3.0),
    (3.5, 1.5, 3.0),
    (1.5, 1.5, 3.0),
)


@dataclass(frozen=True)
class Room:
    length_m: float = 5.0
    width_m: float = 5.0
    height_m: float = 3.0
    rx_plane_height_m: float = 0.85

    def __post_init__(self):
        for name in ("length_m", "width_m", "height_m", "rx_plane_height_m"):
            if not getattr(self, name) > 0:
                raise ValidationError("{} must be positive, got {}".format(name, getattr(self, name)))
        if not self.rx_plane_height_m < self.height_m:
            raise ValidationError("rx_plane_height_m must be below the ceiling")

    def contains(self, points, tol=1e-9):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        inside = (
            (points[:, 0] >= -tol) & (points[:, 0] <= self.length_m + tol)
            & (points[:, 1] >= -tol) & (points[:, 1] <= self.width_m + tol)
            & (np.abs(points[:, 2] - self.rx_plane_height_m) <= tol)
        )
        return inside


@dataclass(frozen=True, eq=False)
class VcselElement:
    position: np.ndarray
    boresight: np.ndarray
    beam_waist_m: float
    wavelength_m: float
    optical_power_w: float

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "boresight", np.asarray(self.boresight, dtype=float))
        if abs(np.linalg.norm(self.boresight) - 1.0) > UNIT_NORM_TOL:
            raise ValidationError("boresight must have unit norm")
        if self.boresight[2] > 0:
            raise ValidationError("ceiling elements emit into the lower hemisphere")
        for name in ("beam_waist_m", "wavelength_m", "optical_power_w"):
            if not getattr(self, name) > 0:
                raise ValidationError("{} must be positive".format(name))


@dataclass(frozen=True, eq=False)
class TransmitterUnit:
    center: np.ndarray
    elements: Tuple[VcselElement, ...]

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "elements", tuple(self.elements))
        if not self.elements:
            raise ValidationError("a transmitter unit needs at least one VCSEL")
        for element in self.elements:
            if np.linalg.norm(element.position - self.center) > UNIT_RADIUS_M:
                raise ValidationError("VCSEL elements must be co-located within 5 cm of the unit center")


@dataclass(frozen=True)
class AdrBranch:
    azimuth_deg: float
    elevation_deg: float
    fov_deg: float
    area_m2: float

    def __post_init__(self):
        _check_branch_angles(self.azimuth_deg, self.elevation_deg)
        if not 0 < self.fov_deg < 90:
            raise ValidationError("fov_deg must lie in (0, 90), got {}".format(self.fov_deg))
        if not self.area_m2 > 0:
            raise ValidationError("area_m2 must be positive")

    @property
    def normal(self):
        return branch_normal(self.azimuth_deg, self.elevation_deg)


@dataclass(frozen=True)
class Adr:
    branches: Tuple[AdrBranch, ...]
    responsivity_a_per_w: float = 0.4

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if not self.branches:
            raise ValidationError("an ADR needs at least one branch")
        if not self.responsivity_a_per_w > 0:
            raise ValidationError("responsivity must be positive")

    @property
    def normals(self):
        return np.array([b.normal for b in self.branches])

    @property
    def fovs_deg(self):
        return np.array([b.fov_deg for b in self.branches])

    @property
    def areas_m2(self):
        return np.array([b.area_m2 for b in self.branches])


@dataclass(frozen=True)
class LosGeometry:
    distance_m: float
    radiance_angle_rad: float
    incidence_angle_rad: float
    off_axis_m: float


@dataclass(frozen=True, eq=False)
class Scene:
    room: Room
    units: Tuple[TransmitterUnit, ...]
    adr: Adr

    @property
    def elements(self):
        return tuple(e for unit in self.units for e in unit.elements)

    @property
    def element_count(self):
        return sum(len(unit.elements) for unit in self.units)

    @property
    def element_positions(self):
        return np.array([e.position for e in self.elements])

    @property
    def boresights(self):
        return np.array([e.boresight for e in self.elements])

    @property
    def beam_waists_m(self):
        return np.array([e.beam_waist_m for e in self.elements])

    @property
    def wavelengths_m(self):
        return np.array([e.wavelength_m for e in self.elements])

    @property
    def optical_powers_w(self):
        return np.array([e.optical_power_w for e in self.elements])

    @property
    def element_units(self):
        return np.array([i for i, unit in enumerate(self.units) for _ in unit.elements])


@dataclass(frozen=True)
class SceneConfig:
    length_m: float = 5.0
    width_m: float = 5.0
    height_m: float = 3.0
    rx_plane_height_m: float = 0.85
    unit_centers: Tuple[Tuple[float, float, float], ...] = DEFAULT_UNIT_CENTERS
    vcsels_per_unit: int = 10
    tilt_deg: float = 20.0
    beam_waist_m: float = 5e-6
    wavelength_m: float = 850e-9
    optical_power_w: float = 2.5e-3
    branch_azimuths_deg: Tuple[float, ...] = (0.0, 90.0, 180.0, 270.0)
    branch_elevations_deg: Tuple[float, ...] = (60.0, 60.0, 60.0, 60.0)
    branch_fovs_deg: Tuple[float, ...] = (25.0, 25.0, 25.0, 25.0)
    detector_area_m2: float = 20e-6
    responsivity_a_per_w: float = 0.4


def _check_branch_angles(azimuth_deg, elevation_deg):
    if not 0 <= azimuth_deg < 360:
        raise ValidationError("azimuth_deg must lie in [0, 360), got {}".format(azimuth_deg))
    if not 0 < elevation_deg <= 90:
        raise ValidationError("elevation_deg must lie in (0, 90], got {}".format(elevation_deg))


def branch_normal(azimuth_deg, elevation_deg):
    _check_branch_angles(azimuth_deg, elevation_deg)
    az = np.deg2rad(azimuth_deg)
    el = np.deg2rad(elevation_deg)
    return np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])


def _angle_between(a, b):
    return float(np.arctan2(np.linalg.norm(np.cross(a, b)), np.dot(a, b)))


def los_geometry(element: VcselElement, rx_point, branch_normal) -> LosGeometry:
    rx_point = np.asarray(rx_point, dtype=float)
    ray = rx_point - element.position
    distance = float(np.linalg.norm(ray))
    if distance == 0.0:
        raise DegenerateGeometryError("receiver coincides with the transmitter")
    if not ray[2] < 0:
        raise DegenerateGeometryError("receiver must lie strictly below the transmitter")
    radiance = _angle_between(element.boresight, ray)
    incidence = _angle_between(np.asarray(branch_normal, dtype=float), -ray)
    return LosGeometry(
        distance_m=distance,
        radiance_angle_rad=radiance,
        incidence_angle_rad=incidence,
        off_axis_m=distance * np.sin(radiance)
    )


def los_geometry_batch(positions, boresights, users, normals):
    """
    Vectorized counterpart of los_geometry.

    Returns distance (K x N), cos and sin of the radiance angle (K x N) and
    cos of the incidence angle (K x B x N).
    """
    users = np.atleast_2d(np.asarray(users, dtype=float))
    rays = users[:, None, :] - positions[None, :, :]
    distance = np.linalg.norm(rays, axis=-1)
    if np.any(distance == 0.0):
        raise DegenerateGeometryError("a receiver coincides with a transmitter")
    if np.any(rays[..., 2] >= 0):
        raise DegenerateGeometryError("receivers must lie strictly below every transmitter")
    cos_phi = np.einsum("knd,nd->kn", rays, boresights) / distance
    sin_phi = np.linalg.norm(np.cross(rays, boresights[None, :, :]), axis=-1) / distance
    cos_psi = -np.einsum("knd,bd->kbn", rays, normals) / distance[:, None, :]
    return distance, np.clip(cos_phi, -1.0, 1.0), sin_phi, np.clip(cos_psi, -1.0, 1.0)


def unit_boresights(count, tilt_deg):
    # One element straight down, the rest tilted at evenly spaced azimuths
    boresights = [np.array([0.0, 0.0, -1.0])]
    tilt = np.deg2rad(tilt_deg)
    ring = count - 1
    for i in range(ring):
        az = 2.0 * np.pi * i / ring
        boresights.append(np.array([np.sin(tilt) * np.cos(az), np.sin(tilt) * np.sin(az), -np.cos(tilt)]))
    return boresights


def default_scene(config: Optional[SceneConfig] = None) -> Scene:
    config = config or SceneConfig()
    if config.vcsels_per_unit < 1:
        raise ValidationError("vcsels_per_unit must be at least 1")
    if not 0 <= config.tilt_deg < 90:
        raise ValidationError("tilt_deg must lie in [0, 90)")
    room = Room(
        length_m=config.length_m,
        width_m=config.width_m,
        height_m=config.height_m,
        rx_plane_height_m=config.rx_plane_height_m
    )
    units = []
    for center in config.unit_centers:
        center = np.asarray(center, dtype=float)
        elements = [
            VcselElement(
                position=center,
                boresight=boresight,
                beam_waist_m=config.beam_waist_m,
                wavelength_m=config.wavelength_m,
                optical_power_w=config.optical_power_w
            )
            for boresight in unit_boresights(config.vcsels_per_unit, config.tilt_deg)
        ]
        units.append(TransmitterUnit(center=center, elements=elements))

    sizes = {
        len(config.branch_azimuths_deg),
        len(config.branch_elevations_deg),
        len(config.branch_fovs_deg)
    }
    if len(sizes) != 1:
        raise ValidationError("ADR azimuth, elevation and FOV lists must have equal length")
    branches = [
        AdrBranch(azimuth_deg=az, elevation_deg=el, fov_deg=fov, area_m2=config.detector_area_m2)
        for az, el, fov in zip(config.branch_azimuths_deg, config.branch_elevations_deg, config.branch_fovs_deg)
    ]
    adr = Adr(branches=branches, responsivity_a_per_w=config.responsivity_a_per_w)
    return Scene(room=room, units=tuple(units), adr=adr)


def beam_footprints(scene: Scene):
    """Points where element beam axes cross the receiver plane inside the room."""
    points, indices = [], []
    rx_height = scene.room.rx_plane_height_m
    for idx, element in enumerate(scene.elements):
        if element.boresight[2] >= 0:
            continue
        t = (rx_height - element.position[2]) / element.boresight[2]
        point = element.position + t * element.boresight
        if scene.room.contains(point)[0]:
            points.append(point)
            indices.append(idx)
    return np.array(points).reshape(-1, 3), np.array(indices, dtype=int)
