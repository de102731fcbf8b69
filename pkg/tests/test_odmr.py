"""Spin-resonance spectrum synthesis and fitting tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spherescope.odmr import (
    CONVENTIONAL_CONTRAST,
    GYROMAGNETIC_MHZ_PER_GAUSS,
    THROUGH_SPHERE_CONTRAST,
    ZERO_FIELD_SPLITTING_MHZ,
    FlatSpectrumError,
    GridCoverageError,
    MagneticField,
    OdmrModel,
    OdmrSpectrum,
    contrast,
    field_for_splittings,
    fit_odmr,
    nv_axes,
    odmr_spectrum,
    zeeman_splitting,
)
from spherescope.peaks import PeakCollapseError
from spherescope.scan import DefectSite

# Mirror-symmetric grid about the zero-field centre: quarter-MHz
# offsets are exact in binary, so evenness can be checked bitwise.
GRID = ZERO_FIELD_SPLITTING_MHZ + 0.25 * np.arange(-1000, 1001)


def site(axis: int) -> DefectSite:
    return DefectSite(position_um=(0.0, 0.0), nv_axis=axis)


@pytest.fixture(scope="module")
def two_site_field() -> MagneticField:
    return field_for_splittings(50.0, 118.0, magnitude_gauss=60.0)


class TestAxes:
    def test_tetrahedral_geometry(self):
        axes = nv_axes()
        assert axes.shape == (4, 3)
        assert np.allclose(np.linalg.norm(axes, axis=1), 1.0, atol=1e-15)
        gram = axes @ axes.T
        off_diagonal = gram[~np.eye(4, dtype=bool)]
        assert np.allclose(off_diagonal, -1.0 / 3.0, atol=1e-15)


class TestZeemanSplitting:
    def test_field_along_axis(self):
        fld = MagneticField.along([1.0, 1.0, 1.0], 20.0)
        assert zeeman_splitting(fld, 0) == pytest.approx(
            GYROMAGNETIC_MHZ_PER_GAUSS * 20.0, rel=1e-12)

    def test_perpendicular_field_gives_zero(self):
        # Dot-product FMA leaves a sub-femtohertz residue, not exact zero.
        fld = MagneticField.along([1.0, -1.0, 0.0], 20.0)
        assert zeeman_splitting(fld, 0) == pytest.approx(0.0, abs=1e-12)

    def test_axis_vector_equivalent_to_index(self):
        fld = MagneticField.along([0.3, -0.2, 0.9], 35.0)
        for i, a in enumerate(nv_axes()):
            assert zeeman_splitting(fld, a) == zeeman_splitting(fld, i)

    @settings(max_examples=40, deadline=None)
    @given(
        d=st.tuples(*[st.floats(-1.0, 1.0) for _ in range(3)]),
        b=st.floats(0.1, 100.0),
        k=st.floats(0.1, 10.0),
    )
    def test_linear_in_magnitude_and_even_in_sign(self, d, b, k):
        vec = np.asarray(d)
        if np.linalg.norm(vec) < 0.1:
            vec = vec + 1.0
        fld = MagneticField.along(vec, b)
        scaled = MagneticField.along(vec, k * b)
        flipped = MagneticField.along(-vec, b)
        for axis in range(4):
            base = zeeman_splitting(fld, axis)
            assert zeeman_splitting(scaled, axis) == pytest.approx(k * base, rel=1e-9)
            assert zeeman_splitting(flipped, axis) == base

    def test_validation(self):
        fld = MagneticField.along([0.0, 0.0, 1.0], 10.0)
        with pytest.raises(ValueError, match="axis index"):
            zeeman_splitting(fld, 4)
        with pytest.raises(ValueError, match="3-vector"):
            zeeman_splitting(fld, np.ones(4))
        with pytest.raises(ValueError, match="non-zero"):
            zeeman_splitting(fld, [0.0, 0.0, 0.0])
        with pytest.raises(ValueError, match="unit vector"):
            MagneticField(10.0, np.array([1.0, 1.0, 0.0]))
        with pytest.raises(ValueError, match="non-negative"):
            MagneticField(-1.0, np.array([0.0, 0.0, 1.0]))


class TestSpectrumSynthesis:
    def test_even_about_centre_on_symmetric_grid(self, two_site_field):
        for sites in ([site(0)], [site(0), site(1), site(2)]):
            spectrum = odmr_spectrum(sites, OdmrModel(), two_site_field, GRID)
            assert np.array_equal(spectrum.normalized_pl, spectrum.normalized_pl[::-1])

    def test_no_defects_means_flat_unit_spectrum(self, two_site_field):
        spectrum = odmr_spectrum([], OdmrModel(), two_site_field, GRID)
        assert np.array_equal(spectrum.normalized_pl, np.ones_like(GRID))
        with pytest.raises(FlatSpectrumError, match="flat"):
            contrast(spectrum)

    def test_resolved_dip_depth_is_half_contrast(self, two_site_field):
        spectrum = odmr_spectrum([site(0)], OdmrModel(), two_site_field, GRID)
        assert contrast(spectrum) == pytest.approx(CONVENTIONAL_CONTRAST / 2, rel=0.01)

    def test_merged_pair_doubles_depth_at_zero_field(self):
        # The off-resonance reference still carries ~4e-4 of Lorentzian
        # tail on a +-250 MHz grid, so the match is sub-percent, not exact.
        fld = MagneticField(0.0, np.array([0.0, 0.0, 1.0]))
        spectrum = odmr_spectrum([site(0)], OdmrModel(), fld, GRID)
        assert contrast(spectrum) == pytest.approx(CONVENTIONAL_CONTRAST, rel=1e-3)

    def test_grid_must_cover_resonances(self, two_site_field):
        narrow = ZERO_FIELD_SPLITTING_MHZ + 0.25 * np.arange(-200, 201)
        with pytest.raises(GridCoverageError, match="does not span"):
            odmr_spectrum([site(1)], OdmrModel(), two_site_field, narrow)

    def test_spectrum_validation(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            OdmrSpectrum(np.array([1.0, 1.0, 2.0, 3.0]), np.ones(4))
        with pytest.raises(ValueError, match="normalized fluorescence"):
            OdmrSpectrum(np.arange(4.0), np.array([1.0, 2.0, 1.0, 1.0]))
        with pytest.raises(ValueError, match="matching"):
            OdmrSpectrum(np.arange(4.0), np.ones(5))

    def test_model_validation(self):
        with pytest.raises(ValueError, match="contrast"):
            OdmrModel(contrast=1.5)
        with pytest.raises(ValueError, match="linewidth"):
            OdmrModel(linewidth_mhz=0.0)


class TestCrosstalk:
    """A spatially resolved spectrum must not leak dips from elsewhere."""

    def test_far_tail_amplitude_negligible(self, two_site_field):
        spectrum = odmr_spectrum([site(0)], OdmrModel(), two_site_field, GRID)
        f, y = spectrum.frequencies_mhz, spectrum.normalized_pl
        dip_depth = 1.0 - y.min()
        # Ten linewidths outside the outermost resonances of this site.
        for probe in (2720.0, 3020.0):
            leak = 1.0 - y[np.argmin(np.abs(f - probe))]
            assert leak < 1e-2 * dip_depth

    def test_no_dip_near_other_site_resonances(self, two_site_field):
        spectrum = odmr_spectrum([site(0)], OdmrModel(), two_site_field, GRID)
        f, y = spectrum.frequencies_mhz, spectrum.normalized_pl
        # The second site would resonate at 2870 -+ 118 MHz; within three
        # linewidths of those the lone-site spectrum is pure monotone tail.
        for other in (2752.0, 2988.0):
            window = np.abs(f - other) <= 30.0
            ys = y[window]
            interior_min = (ys[1:-1] < ys[:-2]) & (ys[1:-1] < ys[2:])
            assert not np.any(interior_min)


class TestFieldSolver:
    def test_requested_splittings_recovered(self, two_site_field):
        assert np.linalg.norm(two_site_field.direction) == pytest.approx(1.0, abs=1e-12)
        assert zeeman_splitting(two_site_field, 0) == pytest.approx(50.0, abs=1e-9)
        assert zeeman_splitting(two_site_field, 1) == pytest.approx(118.0, abs=1e-9)

    def test_axis_exchange_consistency(self):
        swapped = field_for_splittings(118.0, 50.0, 60.0, axes=(1, 0))
        assert zeeman_splitting(swapped, 0) == pytest.approx(50.0, abs=1e-9)
        assert zeeman_splitting(swapped, 1) == pytest.approx(118.0, abs=1e-9)

    def test_validation(self):
        with pytest.raises(ValueError, match="positive"):
            field_for_splittings(50.0, 118.0, 0.0)
        with pytest.raises(ValueError, match="differ"):
            field_for_splittings(50.0, 118.0, 60.0, axes=(2, 2))
        with pytest.raises(ValueError, match="reachable"):
            field_for_splittings(50.0, 118.0, 30.0)

    def test_geometrically_impossible_pair(self):
        # Both projections at the maximum would need the field parallel
        # to two different tetrahedral axes at once.
        top = GYROMAGNETIC_MHZ_PER_GAUSS * 30.0
        with pytest.raises(ValueError, match="no unit field direction"):
            field_for_splittings(top, top, 30.0)


class TestFitting:
    def test_symmetric_four_dip_round_trip(self, two_site_field):
        model = OdmrModel()
        spectrum = odmr_spectrum([site(0), site(1)], model, two_site_field, GRID)
        fit = fit_odmr(spectrum, n_dips=4, symmetric=True)
        assert fit.converged
        assert fit.centre_mhz == pytest.approx(ZERO_FIELD_SPLITTING_MHZ, abs=1e-6)
        assert fit.deltas_mhz == pytest.approx([50.0, 118.0], abs=1e-6)
        assert fit.widths_mhz == pytest.approx([10.0] * 4, abs=1e-4)
        assert fit.pair_contrasts() == pytest.approx([0.15, 0.15], abs=1e-6)

    def test_free_four_dip_round_trip(self, two_site_field):
        spectrum = odmr_spectrum([site(0), site(1)], OdmrModel(), two_site_field, GRID)
        fit = fit_odmr(spectrum, n_dips=4)
        assert fit.centers_mhz == pytest.approx(
            [2752.0, 2820.0, 2920.0, 2988.0], abs=1e-6)
        assert fit.depths == pytest.approx([0.075] * 4, abs=1e-6)
        with pytest.raises(ValueError, match="symmetric-pair"):
            fit.pair_contrasts()

    def test_through_sphere_contrast_round_trip(self, two_site_field):
        model = OdmrModel(contrast=THROUGH_SPHERE_CONTRAST)
        spectrum = odmr_spectrum([site(0), site(1)], model, two_site_field, GRID)
        fit = fit_odmr(spectrum, n_dips=4, symmetric=True)
        assert fit.pair_contrasts() == pytest.approx([0.25, 0.25], abs=1e-6)

    def test_single_pair_fit(self, two_site_field):
        spectrum = odmr_spectrum([site(0)], OdmrModel(), two_site_field, GRID)
        fit = fit_odmr(spectrum, n_dips=2, symmetric=True)
        assert fit.deltas_mhz == pytest.approx([50.0], abs=1e-6)

    def test_unresolvable_pair_collapses(self):
        # 1 MHz splitting against a 10 MHz linewidth: the two-dip model
        # is over-parameterized and must say so rather than report it.
        fld = MagneticField.along([1.0, 1.0, 1.0], 1.0 / GYROMAGNETIC_MHZ_PER_GAUSS)
        narrow = ZERO_FIELD_SPLITTING_MHZ + 0.25 * np.arange(-400, 401)
        spectrum = odmr_spectrum([site(0)], OdmrModel(), fld, narrow)
        with pytest.raises(PeakCollapseError, match="quarter linewidth"):
            fit_odmr(spectrum, n_dips=2)

    def test_dip_count_validation(self, two_site_field):
        spectrum = odmr_spectrum([site(0)], OdmrModel(), two_site_field, GRID)
        with pytest.raises(ValueError, match="n_dips"):
            fit_odmr(spectrum, n_dips=3)
        with pytest.raises(ValueError, match="even number"):
            fit_odmr(spectrum, n_dips=1, symmetric=True)
