"""
Per-link optical gains for the two VCSEL emission models and receiver noise.

Gains are dimensionless fractions of the emitted optical power collected by one
photodetector branch. Detector capture is approximated by the intensity at the
detector center times its area, which holds while the detector (~2.5 mm radius)
is much smaller than the beam footprint.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.constants import elementary_charge

from vcsel_rs.errors import ValidationError
from vcsel_rs.geometry import LosGeometry


GAUSSIAN_BEAM = "gaussian"
LAMBERTIAN = "lambertian"
GAIN_MODELS = (GAUSSIAN_BEAM, LAMBERTIAN)


def lambertian_order(semi_angle_deg):
    if not 0 < semi_angle_deg < 90:
        raise ValidationError("semi_angle_deg must lie in (0, 90), got {}".format(semi_angle_deg))
    return -np.log(2.0) / np.log(np.cos(np.deg2rad(semi_angle_deg)))


@dataclass(frozen=True)
class GainModel:
    variant: str = GAUSSIAN_BEAM
    lambertian_order: float = 1.0

    def __post_init__(self):
        if self.variant not in GAIN_MODELS:
            raise ValidationError("unknown gain model {!r}, expected one of {}".format(self.variant, GAIN_MODELS))
        if self.variant == LAMBERTIAN and not self.lambertian_order >= 1:
            raise ValidationError("lambertian_order must be >= 1")

    @classmethod
    def gaussian(cls):
        return cls(variant=GAUSSIAN_BEAM)

    @classmethod
    def lambertian(cls, semi_angle_deg=15.0):
        return cls(variant=LAMBERTIAN, lambertian_order=float(lambertian_order(semi_angle_deg)))


@dataclass(frozen=True)
class NoiseModel:
    current_nsd_a_per_rthz: float = 4.47e-12
    bandwidth_hz: float = 5e9
    shot_noise: bool = False
    variance_a2: float = field(init=False)

    def __post_init__(self):
        if not self.current_nsd_a_per_rthz > 0:
            raise ValidationError("current_nsd_a_per_rthz must be positive")
        if not self.bandwidth_hz > 0:
            raise ValidationError("bandwidth_hz must be positive")
        object.__setattr__(self, "variance_a2", noise_variance(self.current_nsd_a_per_rthz, self.bandwidth_hz))

    def user_variances(self, responsivity_a_per_w, received_power_w):
        """Per-user sigma^2; adds the shot term when enabled."""
        received_power_w = np.asarray(received_power_w, dtype=float)
        variances = np.full(received_power_w.shape, self.variance_a2)
        if self.shot_noise:
            variances = variances + shot_noise_variance(responsivity_a_per_w, received_power_w, self.bandwidth_hz)
        return variances


def noise_variance(nsd, bandwidth):
    return nsd ** 2 * bandwidth


def shot_noise_variance(responsivity_a_per_w, received_power_w, bandwidth_hz):
    return 2.0 * elementary_charge * responsivity_a_per_w * np.asarray(received_power_w) * bandwidth_hz


def gaussian_beam_radius(w0_m, wavelength_m, d_m):
    rayleigh_range = np.pi * np.asarray(w0_m) ** 2 / wavelength_m
    return w0_m * np.sqrt(1.0 + (np.asarray(d_m) / rayleigh_range) ** 2)


def _fov_gate(cos_psi, fov_deg):
    return cos_psi >= np.cos(np.deg2rad(fov_deg))


def lambertian_gain_batch(distance, cos_phi, cos_psi, order, area_m2, fov_deg):
    cos_phi = np.asarray(cos_phi, dtype=float)
    cos_psi = np.asarray(cos_psi, dtype=float)
    visible = _fov_gate(cos_psi, fov_deg) & (cos_phi > 0)
    gain = (order + 1.0) * area_m2 / (2.0 * np.pi * np.asarray(distance) ** 2) \
        * np.clip(cos_phi, 0.0, None) ** order * cos_psi
    return np.where(visible, gain, 0.0)


def gaussian_gain_batch(distance, off_axis, cos_psi, w0_m, wavelength_m, area_m2, fov_deg):
    distance = np.asarray(distance, dtype=float)
    off_axis = np.asarray(off_axis, dtype=float)
    cos_psi = np.asarray(cos_psi, dtype=float)
    radius = gaussian_beam_radius(w0_m, wavelength_m, distance)
    intensity = 2.0 / (np.pi * radius ** 2) * np.exp(-2.0 * off_axis ** 2 / radius ** 2)
    gain = np.minimum(intensity * area_m2 * cos_psi, 1.0)
    return np.where(_fov_gate(cos_psi, fov_deg), gain, 0.0)


def lambertian_gain(geom: LosGeometry, order, area_m2, fov_deg):
    if geom.radiance_angle_rad >= np.pi / 2:
        return 0.0
    return float(lambertian_gain_batch(
        geom.distance_m,
        np.cos(geom.radiance_angle_rad),
        np.cos(geom.incidence_angle_rad),
        order, area_m2, fov_deg
    ))


def gaussian_gain(geom: LosGeometry, w0_m, wavelength_m, area_m2, fov_deg):
    return float(gaussian_gain_batch(
        geom.distance_m,
        geom.off_axis_m,
        np.cos(geom.incidence_angle_rad),
        w0_m, wavelength_m, area_m2, fov_deg
    ))


def link_gains(model: GainModel, distance, cos_phi, sin_phi, cos_psi, waists_m, wavelengths_m, area_m2, fov_deg):
    if model.variant == LAMBERTIAN:
        return lambertian_gain_batch(distance, cos_phi, cos_psi, model.lambertian_order, area_m2, fov_deg)
    off_axis = np.asarray(distance) * np.asarray(sin_phi)
    return gaussian_gain_batch(distance, off_axis, cos_psi, waists_m, wavelengths_m, area_m2, fov_deg)
