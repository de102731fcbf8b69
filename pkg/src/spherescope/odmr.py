"""Magnetic-resonance spectra of diamond spin defects.

Builds normalized fluorescence-dip spectra for defects on the four
tetrahedral symmetry axes under a static magnetic field, fits
multi-Lorentzian dip models to them, and back-solves field directions
that reproduce a requested pair of splittings.

The Zeeman model is first order only: each defect's dip pair sits at
``D +- gamma * B * |cos(theta)|`` with theta the angle between field
and defect axis.  Transverse-field corrections are below 1 MHz at the
tens-of-gauss fields handled here and are deliberately ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .leastsq import (
    FitResult,
    levenberg_marquardt,
    lorentzian_dips_model,
    symmetric_dips_model,
)
from .peaks import PeakCollapseError
from .scan import DefectSite

__all__ = [
    "ZERO_FIELD_SPLITTING_MHZ",
    "GYROMAGNETIC_MHZ_PER_GAUSS",
    "DEFAULT_LINEWIDTH_MHZ",
    "CONVENTIONAL_CONTRAST",
    "THROUGH_SPHERE_CONTRAST",
    "GridCoverageError",
    "FlatSpectrumError",
    "OdmrModel",
    "MagneticField",
    "OdmrSpectrum",
    "OdmrFit",
    "nv_axes",
    "zeeman_splitting",
    "odmr_spectrum",
    "fit_odmr",
    "contrast",
    "field_for_splittings",
]

# Ground-state zero-field splitting and electron gyromagnetic ratio.
# The latter is textbook physics, not something the measurements here
# could determine.
ZERO_FIELD_SPLITTING_MHZ = 2870.0
GYROMAGNETIC_MHZ_PER_GAUSS = 2.8025

DEFAULT_LINEWIDTH_MHZ = 10.0

# Readout contrast is a phenomenological input per collection mode, not
# a derived quantity; collection through the sphere roughly doubles it.
CONVENTIONAL_CONTRAST = 0.15
THROUGH_SPHERE_CONTRAST = 0.25


class GridCoverageError(ValueError):
    """Frequency grid does not span every resonance."""


class FlatSpectrumError(ValueError):
    """Spectrum has no dip to measure."""


@dataclass(frozen=True)
class OdmrModel:
    """Lineshape parameters of a continuous-wave dip spectrum.

    Attributes:
        zero_field_splitting_mhz: Dip-pair center D.
        gyromagnetic_mhz_per_gauss: Splitting per gauss along the axis.
        linewidth_mhz: Lorentzian FWHM of each dip.
        contrast: Total fractional depth C of one defect's dip pair;
            each branch carries C/2.
    """

    zero_field_splitting_mhz: float = ZERO_FIELD_SPLITTING_MHZ
    gyromagnetic_mhz_per_gauss: float = GYROMAGNETIC_MHZ_PER_GAUSS
    linewidth_mhz: float = DEFAULT_LINEWIDTH_MHZ
    contrast: float = CONVENTIONAL_CONTRAST

    def __post_init__(self):
        if self.zero_field_splitting_mhz <= 0:
            raise ValueError(f"splitting must be positive, got {self.zero_field_splitting_mhz}")
        if self.gyromagnetic_mhz_per_gauss <= 0:
            raise ValueError(f"gyromagnetic ratio must be positive, got {self.gyromagnetic_mhz_per_gauss}")
        if self.linewidth_mhz <= 0:
            raise ValueError(f"linewidth must be positive, got {self.linewidth_mhz}")
        if not 0.0 < self.contrast < 1.0:
            raise ValueError(f"contrast must lie in (0, 1), got {self.contrast}")


@dataclass(frozen=True)
class MagneticField:
    magnitude_gauss: float
    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        object.__setattr__(self, "direction", d)
        if d.shape != (3,):
            raise ValueError(f"direction must be a 3-vector, got shape {d.shape}")
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ValueError("direction must be a unit vector")
        if self.magnitude_gauss < 0:
            raise ValueError(f"magnitude must be non-negative, got {self.magnitude_gauss}")

    @classmethod
    def along(cls, direction, magnitude_gauss: float) -> "MagneticField":
        """Build a field along an arbitrary (non-normalized) direction."""
        d = np.asarray(direction, dtype=float)
        n = np.linalg.norm(d)
        if n == 0:
            raise ValueError("direction must be non-zero")
        return cls(magnitude_gauss, d / n)


@dataclass
class OdmrSpectrum:
    """Normalized fluorescence versus microwave frequency."""

    frequencies_mhz: np.ndarray
    normalized_pl: np.ndarray
    defects: tuple[DefectSite, ...] = ()
    applied_field: MagneticField | None = None

    def __post_init__(self):
        f = np.asarray(self.frequencies_mhz, dtype=float)
        y = np.asarray(self.normalized_pl, dtype=float)
        if f.ndim != 1 or f.shape != y.shape:
            raise ValueError("frequency grid and values must be matching 1-D arrays")
        if f.size >= 2 and np.any(np.diff(f) <= 0):
            raise ValueError("frequency grid must be strictly increasing")
        if np.any(y <= 0) or np.any(y > 1.05):
            raise ValueError("normalized fluorescence must lie in (0, 1.05]")
        self.frequencies_mhz = f
        self.normalized_pl = y


def nv_axes() -> np.ndarray:
    """The four tetrahedral defect axes as unit rows of a (4, 3) array."""
    axes = np.array([
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ])
    return axes / np.sqrt(3.0)


def _resolve_axis(axis) -> np.ndarray:
    if isinstance(axis, (int, np.integer)):
        if not 0 <= axis < 4:
            raise ValueError(f"axis index must be 0..3, got {axis}")
        return nv_axes()[axis]
    a = np.asarray(axis, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"axis must be an index or 3-vector, got shape {a.shape}")
    n = np.linalg.norm(a)
    if n == 0:
        raise ValueError("axis vector must be non-zero")
    return a / n


def zeeman_splitting(field: MagneticField, axis,
                     gamma_mhz_per_gauss: float = GYROMAGNETIC_MHZ_PER_GAUSS) -> float:
    """Dip half-splitting for one defect axis; dips sit at D +- delta.

    Args:
        field: Applied static field.
        axis: Defect axis as an index into ``nv_axes`` or a 3-vector.

    Returns:
        delta = gamma * B * |cos(theta)| in MHz.
    """
    a = _resolve_axis(axis)
    projection = abs(float(np.dot(field.direction, a)))
    return gamma_mhz_per_gauss * field.magnitude_gauss * projection


def _lorentz_peak(f: np.ndarray, center: float, fwhm: float) -> np.ndarray:
    return 1.0 / (1.0 + (2.0 * (f - center) / fwhm) ** 2)


def odmr_spectrum(defects, model: OdmrModel, applied_field: MagneticField,
                  freq_grid_mhz) -> OdmrSpectrum:
    """Normalized dip spectrum of the given defects under one field.

    Each defect contributes a dip pair at D +- delta on its own axis,
    each branch C/2 deep; a merged measurement passes several defects,
    a spatially resolved one passes a single defect.  An empty defect
    list yields the flat unit spectrum.

    Raises:
        GridCoverageError: A resonance falls outside the grid.
    """
    f = np.asarray(freq_grid_mhz, dtype=float)
    defects = tuple(defects)
    d0 = model.zero_field_splitting_mhz
    pl = np.ones_like(f)
    resonances = []
    for site in defects:
        delta = zeeman_splitting(applied_field, site.nv_axis,
                                 model.gyromagnetic_mhz_per_gauss)
        resonances += [d0 - delta, d0 + delta]
        # Summing each branch pair before subtracting keeps the spectrum
        # bitwise even about the centre on mirror-symmetric grids; a
        # running per-branch subtraction loses that to rounding order.
        pair = (_lorentz_peak(f, d0 - delta, model.linewidth_mhz)
                + _lorentz_peak(f, d0 + delta, model.linewidth_mhz))
        pl -= 0.5 * model.contrast * pair
    if resonances and (min(resonances) < f[0] or max(resonances) > f[-1]):
        raise GridCoverageError(
            f"grid [{f[0]:.1f}, {f[-1]:.1f}] MHz does not span resonances "
            f"[{min(resonances):.1f}, {max(resonances):.1f}] MHz"
        )
    return OdmrSpectrum(f, pl, defects=defects, applied_field=applied_field)


@dataclass
class OdmrFit:
    """Fitted dip parameters, ordered by ascending center frequency.

    ``centre_mhz`` and ``deltas_mhz`` are populated only by the
    symmetric-pair fit, where pairs share a depth and width.
    """

    baseline: float
    centers_mhz: np.ndarray
    depths: np.ndarray
    widths_mhz: np.ndarray
    converged: bool
    fit: FitResult = field(repr=False, default=None)
    centre_mhz: float | None = None
    deltas_mhz: np.ndarray | None = None

    def pair_contrasts(self) -> np.ndarray:
        """Total fractional depth per symmetric pair, smallest delta first.

        Each pair's two branches share one fitted depth, so the pair
        total is twice the stored depth.
        """
        if self.deltas_mhz is None:
            raise ValueError("pair contrasts need a symmetric-pair fit")
        return 2.0 * self.depths[self.deltas_mhz.size:] / self.baseline


def _initial_dips(f: np.ndarray, y: np.ndarray, n_dips: int):
    """Greedy minima search: pick, estimate width, mask, repeat."""
    step = float(np.median(np.diff(f)))
    baseline = float(np.percentile(y, 90))
    work = y.copy()
    found = []
    for _ in range(n_dips):
        i = int(np.argmin(work))
        depth = baseline - float(y[i])
        half = baseline - 0.5 * depth
        j = i
        while j + 1 < y.size and y[j + 1] < half:
            j += 1
        k = i
        while k - 1 >= 0 and y[k - 1] < half:
            k -= 1
        width = max((j - k) * step, 2.0 * step)
        found.append((float(f[i]), max(depth, 1e-6), width))
        mask = np.abs(f - f[i]) < max(2.0 * width, 4.0 * step)
        work[mask] = baseline
    found.sort(key=lambda t: t[0])
    return baseline, found


def fit_odmr(spectrum: OdmrSpectrum, n_dips: int, symmetric: bool = False) -> OdmrFit:
    """Least-squares multi-Lorentzian dip fit.

    Args:
        spectrum: Spectrum to fit.
        n_dips: Number of dips, one of 1, 2 or 4.
        symmetric: Constrain dips to pairs mirrored about a common
            center with shared depth and width per pair.

    Raises:
        PeakCollapseError: Two fitted dips land within a quarter
            linewidth of each other, so the model order is too high.
    """
    if n_dips not in (1, 2, 4):
        raise ValueError(f"n_dips must be 1, 2 or 4, got {n_dips}")
    if symmetric and n_dips % 2:
        raise ValueError("symmetric fits need an even number of dips")
    f = spectrum.frequencies_mhz
    y = spectrum.normalized_pl
    baseline0, dips0 = _initial_dips(f, y, n_dips)

    if symmetric:
        n_pairs = n_dips // 2
        model = symmetric_dips_model(n_pairs)
        centre0 = float(np.mean([c for c, _, _ in dips0]))
        p0 = [baseline0, centre0]
        # Outermost minima pair first; the model does not care about
        # pair order, the result is re-sorted below.
        for k in range(n_pairs):
            lo_c, lo_d, lo_w = dips0[k]
            hi_c, hi_d, hi_w = dips0[n_dips - 1 - k]
            p0 += [0.5 * abs(hi_c - lo_c) or 1.0,
                   0.5 * (lo_d + hi_d),
                   0.5 * (lo_w + hi_w)]
        res = levenberg_marquardt(model, f, y, np.asarray(p0))
        baseline, centre = res.params[0], res.params[1]
        order = np.argsort(np.abs(res.params[2::3]))
        deltas = np.abs(res.params[2::3])[order]
        depths = res.params[3::3][order]
        widths = np.abs(res.params[4::3])[order]
        fit = OdmrFit(
            baseline=float(baseline),
            centers_mhz=np.concatenate([centre - deltas[::-1], centre + deltas]),
            depths=np.concatenate([depths[::-1], depths]),
            widths_mhz=np.concatenate([widths[::-1], widths]),
            converged=res.converged,
            fit=res,
            centre_mhz=float(centre),
            deltas_mhz=deltas,
        )
    else:
        model = lorentzian_dips_model(n_dips)
        p0 = [baseline0]
        for c, d, w in dips0:
            p0 += [c, d, w]
        res = levenberg_marquardt(model, f, y, np.asarray(p0))
        centers = res.params[1::3]
        order = np.argsort(centers)
        fit = OdmrFit(
            baseline=float(res.params[0]),
            centers_mhz=centers[order],
            depths=res.params[2::3][order],
            widths_mhz=np.abs(res.params[3::3][order]),
            converged=res.converged,
            fit=res,
        )

    if n_dips > 1:
        gaps = np.diff(fit.centers_mhz)
        mean_w = float(np.mean(fit.widths_mhz))
        if np.any(gaps < mean_w / 4.0):
            raise PeakCollapseError(
                f"fitted dips separated by {gaps.min():.2f} MHz, below a "
                f"quarter linewidth ({mean_w / 4.0:.2f} MHz); reduce n_dips"
            )
    return fit


def contrast(spectrum: OdmrSpectrum) -> float:
    """Fractional depth of the deepest point below the off-resonance level.

    Raises:
        FlatSpectrumError: No dip present.
    """
    y = spectrum.normalized_pl
    off = float(np.percentile(y, 90))
    deepest = float(np.min(y))
    if off - deepest <= 1e-12 * max(off, 1.0):
        raise FlatSpectrumError("spectrum is flat; no dip to measure")
    return (off - deepest) / off


def field_for_splittings(delta1_mhz: float, delta2_mhz: float,
                         magnitude_gauss: float,
                         axes: tuple[int, int] = (0, 1),
                         gamma_mhz_per_gauss: float = GYROMAGNETIC_MHZ_PER_GAUSS,
                         ) -> MagneticField:
    """Back-solve a field direction giving two requested splittings.

    Finds a unit direction whose projections on two defect axes produce
    delta1 and delta2 at the given magnitude.  The remaining degree of
    freedom goes into the component perpendicular to both axes, and the
    relative projection sign is chosen to make the direction exist: the
    tetrahedral axis geometry caps same-sign projection pairs well
    below what opposite signs allow.

    Raises:
        ValueError: No unit direction achieves the requested pair.
    """
    if magnitude_gauss <= 0:
        raise ValueError(f"magnitude must be positive, got {magnitude_gauss}")
    if axes[0] == axes[1]:
        raise ValueError("axes must differ")
    scale = gamma_mhz_per_gauss * magnitude_gauss
    c1, c2 = delta1_mhz / scale, delta2_mhz / scale
    if not (0 <= c1 <= 1 and 0 <= c2 <= 1):
        raise ValueError(
            f"splittings up to {scale:.1f} MHz reachable at {magnitude_gauss} G, "
            f"got {delta1_mhz} and {delta2_mhz} MHz"
        )
    a1, a2 = nv_axes()[axes[0]], nv_axes()[axes[1]]
    normal = np.cross(a1, a2)
    normal /= np.linalg.norm(normal)
    # Unit-norm condition in the (a1, a2) Gram metric (dot = -1/3):
    # |u_parallel|^2 = (9/8)(t1^2 + t2^2 + (2/3) t1 t2).
    for t1, t2 in ((-c1, c2), (c1, c2)):
        q = 9.0 / 8.0 * (t1 * t1 + t2 * t2 + 2.0 / 3.0 * t1 * t2)
        if q <= 1.0:
            alpha = 9.0 / 8.0 * (t1 + t2 / 3.0)
            beta = 9.0 / 8.0 * (t1 / 3.0 + t2)
            u = alpha * a1 + beta * a2 + np.sqrt(1.0 - q) * normal
            return MagneticField.along(u, magnitude_gauss)
    raise ValueError(
        f"no unit field direction yields splittings {delta1_mhz} and "
        f"{delta2_mhz} MHz on axes {axes} at {magnitude_gauss} G"
    )
