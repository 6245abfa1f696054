"""Geometry of a uniform circular array (UCA) and a polar source position.

All quantities are SI (meters, radians). Element k (0-based internally)
sits at angular position psi_k = 2*pi*k/n_a on a circle of radius R in
the azimuth plane; a source is described by its distance d from the
array centre and its azimuth theta measured from the same reference
direction. The relative angle phi_k = theta - psi_k drives everything:
the element range follows the law of cosines,

    r_k = sqrt(d^2 + R^2 - 2 d R cos(phi_k)),

and the spherical-wavefront phase and per-element amplitude are built
from r_k. Everything here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299792458.0
"""Propagation speed used for range/delay conversion, m/s."""


@dataclass(frozen=True)
class UcaGeometry:
    """Uniform circular array: element count, radius and carrier wavelength."""

    n_a: int
    radius_m: float
    wavelength_m: float

    def __post_init__(self) -> None:
        if self.n_a < 1:
            raise ValueError(f"n_a must be >= 1, got {self.n_a}")
        if self.radius_m <= 0.0:
            raise ValueError(f"radius_m must be positive, got {self.radius_m}")
        if self.wavelength_m <= 0.0:
            raise ValueError(f"wavelength_m must be positive, got {self.wavelength_m}")


@dataclass(frozen=True)
class PolarPosition:
    """Source location: centre distance d_m (m) and azimuth theta_rad (rad).

    theta_rad is stored as given (unnormalized); anything that cares about
    periodicity must reduce modulo 2*pi itself.
    """

    d_m: float
    theta_rad: float

    def __post_init__(self) -> None:
        if self.d_m <= 0.0:
            raise ValueError(f"d_m must be positive, got {self.d_m}")


@dataclass(frozen=True)
class GeometrySensitivities:
    """Per-element ranges, range/angle derivatives of the ranges, and gains.

    ``alpha_d[k] = dr_k/dd`` (a direction cosine, dimensionless) and
    ``alpha_theta[k] = dr_k/dtheta`` (meters per radian); ``gains`` holds
    the free-space amplitudes lambda / (4 pi r_k).
    """

    ranges_m: np.ndarray
    alpha_d: np.ndarray
    alpha_theta: np.ndarray
    gains: np.ndarray

    @property
    def n_a(self) -> int:
        return self.ranges_m.size


def require_outside_array(geom: UcaGeometry, pos: PolarPosition) -> None:
    """Reject positions on or inside the array circle (model validity)."""
    if pos.d_m <= geom.radius_m:
        raise ValueError(
            f"position distance d={pos.d_m} m must exceed the array radius "
            f"R={geom.radius_m} m"
        )


def element_angles(geom: UcaGeometry) -> np.ndarray:
    """Angular positions psi_k = 2*pi*k/n_a, k = 0..n_a-1, in [0, 2*pi)."""
    return 2.0 * np.pi * np.arange(geom.n_a) / geom.n_a


def relative_angles(geom: UcaGeometry, pos: PolarPosition) -> np.ndarray:
    """phi_k = theta - psi_k for every element."""
    return pos.theta_rad - element_angles(geom)


def element_ranges(geom: UcaGeometry, pos: PolarPosition) -> np.ndarray:
    """Element-to-source distances r_k by the law of cosines.

    Every entry lies in [|d - R|, d + R].
    """
    phi = relative_angles(geom, pos)
    d, r = pos.d_m, geom.radius_m
    return np.sqrt(d * d + r * r - 2.0 * d * r * np.cos(phi))


def steering_vector(geom: UcaGeometry, pos: PolarPosition) -> np.ndarray:
    """Unit-norm UCA response: entries exp(j 2 pi (d - r_k)/lambda)/sqrt(n_a).

    The common phase exp(j 2 pi d / lambda) referenced to the array centre
    is kept so that a source at range r_k = d sees exactly unit phase.
    """
    ranges = element_ranges(geom, pos)
    phase = 2.0 * np.pi * (pos.d_m - ranges) / geom.wavelength_m
    return np.exp(1j * phase) / np.sqrt(geom.n_a)


def element_gains(ranges_m: np.ndarray, wavelength_m: float) -> np.ndarray:
    """Free-space amplitude gains lambda / (4 pi r_k).

    Raises ValueError for non-positive ranges (source on or inside an
    element, outside model validity).
    """
    ranges_m = np.asarray(ranges_m, dtype=float)
    if np.any(ranges_m <= 0.0):
        raise ValueError("element ranges must be strictly positive")
    return wavelength_m / (4.0 * np.pi * ranges_m)


def sensitivities(geom: UcaGeometry, pos: PolarPosition) -> GeometrySensitivities:
    """Ranges, their d/theta derivatives, and gains in one pass.

    alpha_d = (d - R cos phi)/r and alpha_theta = d R sin(phi)/r are the
    exact partial derivatives of the law-of-cosines range.
    """
    require_outside_array(geom, pos)
    phi = relative_angles(geom, pos)
    d, radius = pos.d_m, geom.radius_m
    ranges = np.sqrt(d * d + radius * radius - 2.0 * d * radius * np.cos(phi))
    alpha_d = (d - radius * np.cos(phi)) / ranges
    alpha_theta = d * radius * np.sin(phi) / ranges
    gains = element_gains(ranges, geom.wavelength_m)
    return GeometrySensitivities(ranges, alpha_d, alpha_theta, gains)


def rayleigh_distance(geom: UcaGeometry) -> float:
    """Near-field boundary 2 D^2 / lambda for the UCA aperture D = 2R."""
    diameter = 2.0 * geom.radius_m
    return 2.0 * diameter * diameter / geom.wavelength_m


def ula_rayleigh_distance(n_a: int, wavelength_m: float) -> float:
    """Near-field boundary of a half-wavelength-spaced ULA with n_a elements.

    Aperture D = (n_a - 1) * lambda / 2; returned value is 2 D^2 / lambda.
    """
    if n_a < 2:
        raise ValueError(f"a ULA needs at least 2 elements, got {n_a}")
    aperture = (n_a - 1) * wavelength_m / 2.0
    return 2.0 * aperture * aperture / wavelength_m
