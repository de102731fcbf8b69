"""Geometric optics of a dielectric microsphere resting on a sample surface.

A transparent microsphere immersed in index-matching oil acts as a thick
ball lens for emitters sitting just below the sample surface.  Because the
relative index of the sphere is below 2, the sphere forms an enlarged
*virtual* image beneath the surface, which a conventional confocal scan
reaches simply by focusing deeper.  This module provides the ray-optics
quantities of that imaging geometry: the aberrated focal length as a
function of ray height, the virtual image distance, and the magnification
both for an emitter and for an arbitrary scan plane.

Sign conventions: axial positions ``z`` are measured from the sample
surface, negative below it (a scan plane inside the sample has ``z < 0``).
The virtual image distance ``d_v`` is reported as a positive depth below
the sphere's contact point.  All lengths are in micrometres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "Microsphere",
    "ImagingSystem",
    "EmitterGeometry",
    "ImageMode",
    "RegimeError",
    "relative_index",
    "focal_length",
    "paraxial_focal_length",
    "virtual_image_distance",
    "magnification",
    "magnification_at_plane",
    "image_mode",
    "magnification_curve",
]


class RegimeError(ValueError):
    """Raised when parameters fall outside the virtual-image regime."""


@dataclass(frozen=True)
class Microsphere:
    """A dielectric microsphere used as a contact lens element.

    Attributes:
        radius_um: Sphere radius in micrometres.
        index: Refractive index of the sphere material.
    """

    radius_um: float = 10.0
    index: float = 2.1

    def __post_init__(self):
        if self.radius_um <= 0:
            raise ValueError(f"radius_um must be positive, got {self.radius_um}")
        if self.index <= 1.0:
            raise ValueError(f"sphere index must exceed 1, got {self.index}")


@dataclass(frozen=True)
class ImagingSystem:
    """Confocal collection parameters shared by all imaging modes.

    Attributes:
        oil_index: Index of the immersion medium surrounding the sphere.
        objective_na: Numerical aperture of the collection objective.
        excitation_wavelength_nm: Scanning laser wavelength.
        emission_wavelength_nm: Centre wavelength of the collected band.
    """

    oil_index: float = 1.518
    objective_na: float = 1.4
    excitation_wavelength_nm: float = 532.0
    emission_wavelength_nm: float = 700.0

    def __post_init__(self):
        if self.oil_index < 1.0:
            raise ValueError(f"oil_index must be >= 1, got {self.oil_index}")
        if not 0 < self.objective_na <= self.oil_index:
            raise ValueError(
                f"objective_na must lie in (0, {self.oil_index}], got {self.objective_na}"
            )
        for name in ("excitation_wavelength_nm", "emission_wavelength_nm"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class EmitterGeometry:
    """Position of an emitter relative to the sphere contact point.

    Attributes:
        depth_um: Depth of the emitter below the sample surface (>= 0).
        ray_height_um: Transverse height at which the reference ray
            crosses the sphere, used to evaluate the aberrated focal
            length.  Must stay below the sphere radius.
    """

    depth_um: float = 0.1
    ray_height_um: float = 1.0

    def __post_init__(self):
        if self.depth_um < 0:
            raise ValueError(f"depth_um must be >= 0, got {self.depth_um}")
        if self.ray_height_um <= 0:
            raise ValueError(f"ray_height_um must be positive, got {self.ray_height_um}")


class ImageMode(Enum):
    """Whether the sphere forms a virtual or a real image of the emitter."""

    VIRTUAL = "virtual"
    REAL = "real"


def relative_index(sphere_index: float, oil_index: float) -> float:
    """Index of the sphere relative to the surrounding medium.

    Args:
        sphere_index: Refractive index of the sphere.
        oil_index: Refractive index of the immersion medium.

    Returns:
        The ratio sphere_index / oil_index.
    """
    if oil_index < 1.0:
        raise ValueError(f"oil_index must be >= 1, got {oil_index}")
    if sphere_index <= oil_index:
        raise ValueError(
            "sphere must be optically denser than the medium "
            f"(got {sphere_index} <= {oil_index})"
        )
    return sphere_index / oil_index


def focal_length(ray_height_um: float, radius_um: float, n_rel: float) -> float:
    """Focal length of the sphere for a ray at a given height.

    A ray parallel to the axis at height ``x`` refracts twice and crosses
    the axis at ``f(x) = x / sin(2 asin(x/R) - 2 asin(x/(n_rel R)))``,
    measured from the sphere centre.  Spherical aberration makes this
    decrease with ray height.

    Args:
        ray_height_um: Transverse ray height ``x``; must satisfy 0 < x < R.
        radius_um: Sphere radius ``R``.
        n_rel: Sphere index relative to the surrounding medium; must be > 1.

    Returns:
        The focal distance from the sphere centre, in micrometres.
    """
    if radius_um <= 0:
        raise ValueError(f"radius_um must be positive, got {radius_um}")
    if n_rel <= 1.0:
        raise ValueError(f"relative index must exceed 1, got {n_rel}")
    if not 0 < ray_height_um < radius_um:
        raise ValueError(
            f"ray height must lie in (0, {radius_um}), got {ray_height_um}"
        )
    a = ray_height_um / radius_um
    bend = 2.0 * math.asin(a) - 2.0 * math.asin(a / n_rel)
    return ray_height_um / math.sin(bend)


def paraxial_focal_length(radius_um: float, n_rel: float) -> float:
    """Small-ray-height limit of :func:`focal_length`, n_rel R / (2 (n_rel - 1))."""
    if radius_um <= 0:
        raise ValueError(f"radius_um must be positive, got {radius_um}")
    if n_rel <= 1.0:
        raise ValueError(f"relative index must exceed 1, got {n_rel}")
    return n_rel * radius_um / (2.0 * (n_rel - 1.0))


def virtual_image_distance(
    sphere: Microsphere, system: ImagingSystem, geom: EmitterGeometry
) -> float:
    """Depth of the virtual image below the sphere contact point.

    For an emitter a distance ``delta`` below the contact point, the thick
    ball lens with focal length ``f`` forms its image at
    ``d_v = (R + delta) f / (f - R - delta) - R`` below the contact point.

    Args:
        sphere: Sphere geometry and material.
        system: Imaging system (provides the immersion index).
        geom: Emitter depth and reference ray height.

    Returns:
        Virtual image depth in micrometres (positive below the surface).

    Raises:
        RegimeError: If ``f <= R + delta``, i.e. the emitter sits outside
            the focal distance and a real image forms instead.
    """
    n_rel = relative_index(sphere.index, system.oil_index)
    r = sphere.radius_um
    f = focal_length(geom.ray_height_um, r, n_rel)
    obj = r + geom.depth_um
    if f <= obj:
        raise RegimeError(
            f"focal length {f:.3f} um does not exceed the object distance "
            f"{obj:.3f} um; the sphere forms a real image in this regime"
        )
    return obj * f / (f - obj) - r


def magnification(
    sphere: Microsphere, system: ImagingSystem, geom: EmitterGeometry
) -> float:
    """Transverse magnification of the emitter's virtual image.

    Equals ``(R + d_v) / (R + delta)`` with ``d_v`` from
    :func:`virtual_image_distance`; always > 1 in the virtual regime.
    """
    d_v = virtual_image_distance(sphere, system, geom)
    return (sphere.radius_um + d_v) / (sphere.radius_um + geom.depth_um)


def magnification_at_plane(
    z_um: float, sphere: Microsphere, geom: EmitterGeometry
) -> float:
    """Magnification referred to a confocal scan plane at axial position z.

    When the scan focus is placed at a plane ``z`` (negative below the
    surface), features imaged through the sphere appear scaled by
    ``M(z) = (R - z) / (R + delta)``.

    Args:
        z_um: Scan plane position; must be <= 0 (at or below the surface).
        sphere: Sphere geometry.
        geom: Emitter geometry (provides the depth offset ``delta``).

    Returns:
        The plane-referred magnification, dimensionless.
    """
    if z_um > 0:
        raise ValueError(f"scan plane must satisfy z <= 0, got {z_um}")
    return (sphere.radius_um - z_um) / (sphere.radius_um + geom.depth_um)


def image_mode(n_rel: float, depth_ratio: float = 0.0) -> ImageMode:
    """Classify whether the sphere produces a virtual or real image.

    The paraxial criterion is ``f0 > R + delta`` for a virtual image, which
    in reduced form reads ``n_rel / (2 (n_rel - 1)) > 1 + depth_ratio``.

    Args:
        n_rel: Relative index of the sphere; must be > 1.
        depth_ratio: Emitter depth over sphere radius, ``delta / R``.

    Returns:
        ImageMode.VIRTUAL or ImageMode.REAL.

    Raises:
        RegimeError: On the degenerate boundary where the paraxial focus
            falls exactly on the emitter.
    """
    if n_rel <= 1.0:
        raise ValueError(f"relative index must exceed 1, got {n_rel}")
    if depth_ratio < 0:
        raise ValueError(f"depth_ratio must be >= 0, got {depth_ratio}")
    lhs = n_rel / (2.0 * (n_rel - 1.0))
    rhs = 1.0 + depth_ratio
    if math.isclose(lhs, rhs, rel_tol=1e-12, abs_tol=0.0):
        raise RegimeError(
            f"image mode is indeterminate at the boundary n_rel={n_rel}, "
            f"depth_ratio={depth_ratio}"
        )
    return ImageMode.VIRTUAL if lhs > rhs else ImageMode.REAL


def magnification_curve(
    sphere: Microsphere,
    geom: EmitterGeometry,
    z_min_um: float,
    z_max_um: float,
    steps: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Tabulate the plane-referred magnification over a range of scan depths.

    Args:
        sphere: Sphere geometry.
        geom: Emitter geometry (depth offset).
        z_min_um: Deepest scan plane (most negative).
        z_max_um: Shallowest scan plane; must satisfy z_min < z_max <= 0.
        steps: Number of evenly spaced samples, at least 2.

    Returns:
        Tuple of arrays ``(z_um, m)`` with ``m`` strictly decreasing in z.
    """
    if steps < 2:
        raise ValueError(f"steps must be >= 2, got {steps}")
    if not z_min_um < z_max_um:
        raise ValueError(f"need z_min < z_max, got {z_min_um} >= {z_max_um}")
    if z_max_um > 0:
        raise ValueError(f"z_max must be <= 0, got {z_max_um}")
    z = np.linspace(z_min_um, z_max_um, steps)
    m = (sphere.radius_um - z) / (sphere.radius_um + geom.depth_um)
    return z, m
