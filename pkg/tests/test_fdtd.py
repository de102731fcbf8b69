"""Wave solver unit tests: small scenes only, heavy runs live in the
acceptance suite."""

import numpy as np
import pytest

from spherescope.fdtd import (
    CircleRegion,
    FdtdConfig,
    GridResolutionError,
    GridSizeError,
    LayerBelowRegion,
    NoFocusError,
    build_scene,
    compare_fields,
    extract_focus,
    run_fdtd,
    scene_from_regions,
)
from spherescope.grids import FieldGrid
from spherescope.optics import ImagingSystem, Microsphere

OIL = 1.518


@pytest.fixture(scope="module")
def empty_run():
    scene = scene_from_regions((-2.0, 2.0), (-2.0, 2.0), 0.03, OIL, [], 532.0)
    return run_fdtd(scene, FdtdConfig())


@pytest.fixture(scope="module")
def small_cylinder_run():
    scene = scene_from_regions(
        (-2.0, 2.0), (-2.5, 2.5), 0.025, OIL,
        [CircleRegion(0.0, 0.7, 0.5, 2.0)], 532.0,
    )
    return run_fdtd(scene, FdtdConfig())


class TestSceneValidation:
    def test_resolution_floor_enforced(self):
        # 60 nm cells cannot carry 532 nm light inside n = 2 material.
        with pytest.raises(GridResolutionError, match="resolution floor"):
            scene_from_regions(
                (-2.0, 2.0), (-2.0, 2.0), 0.060, OIL,
                [CircleRegion(0.0, 0.0, 0.5, 2.0)], 532.0,
            )

    def test_cell_budget_enforced(self):
        with pytest.raises(GridSizeError, match="budget"):
            scene_from_regions(
                (-150.0, 150.0), (-150.0, 150.0), 0.03, OIL, [], 532.0
            )

    def test_domain_minimum_size(self):
        with pytest.raises(ValueError, match="too small"):
            scene_from_regions((-0.05, 0.05), (-0.05, 0.05), 0.03, OIL, [], 532.0)

    def test_build_scene_marks_sphere_bottom(self):
        # Diamond substrate pushes the resolution floor to 27.5 nm.
        scene = build_scene(
            Microsphere(radius_um=2.0, index=2.0), ImagingSystem(),
            domain_um=(6.0, 8.0), dx_um=0.026, substrate_depth_um=2.0,
        )
        assert scene.sphere_bottom_um is not None
        assert scene.eps.max() == pytest.approx(2.42**2, rel=1e-6)
        assert scene.n_max == pytest.approx(2.42, rel=1e-9)

    def test_layered_background_column(self):
        scene = scene_from_regions(
            (-2.0, 2.0), (-2.0, 2.0), 0.026, OIL,
            [LayerBelowRegion(-0.5, 2.42)], 532.0,
        )
        col = scene.background_eps_column
        assert col.min() == pytest.approx(OIL**2, rel=1e-9)
        assert col.max() == pytest.approx(2.42**2, rel=1e-9)


class TestEmptyScene:
    def test_plane_wave_uniformity(self, empty_run):
        # PML reflections and the injection seam must stay below the
        # 1e-3 amplitude budget, i.e. ~2e-3 in intensity.
        inner = empty_run.values[16:-16, 16:-16]
        assert np.max(np.abs(inner - 1.0)) < 2e-3

    def test_fields_bounded(self, empty_run):
        assert np.isfinite(empty_run.values).all()
        assert empty_run.values.max() < 2.0


class TestCylinderScene:
    def test_forms_a_focus(self, small_cylinder_run):
        assert small_cylinder_run.values.max() > 2.0

    def test_determinism(self, small_cylinder_run):
        scene = scene_from_regions(
            (-2.0, 2.0), (-2.5, 2.5), 0.025, OIL,
            [CircleRegion(0.0, 0.7, 0.5, 2.0)], 532.0,
        )
        again = run_fdtd(scene, FdtdConfig())
        assert np.array_equal(small_cylinder_run.values, again.values)

    def test_energy_localised_below_cylinder(self, small_cylinder_run):
        v = small_cylinder_run.values
        j, i = np.unravel_index(np.argmax(v), v.shape)
        x = small_cylinder_run.x_um[i]
        y = small_cylinder_run.y_um[j]
        assert abs(x) < 0.3
        assert y < 0.7 - 0.5 + 0.3  # at or just below the shadow side


class TestFocusExtraction:
    def _blob_grid(self, fwhm_um=0.25, peak=25.0, x0=0.1, y0=-0.4):
        dx = 0.01
        x = np.arange(-1.0, 1.0, dx)
        y = np.arange(-1.5, 0.5, dx)
        xg, yg = np.meshgrid(x, y, indexing="xy")
        s = fwhm_um / (2.0 * np.sqrt(2.0 * np.log(2.0)))
        v = 1.0 + (peak - 1.0) * np.exp(
            -((xg - x0) ** 2 + (yg - y0) ** 2) / (2 * s * s)
        )
        return FieldGrid(v, dx, x0_um=-1.0, y0_um=-1.5, sphere_bottom_um=0.0)

    def test_synthetic_blob_measured_accurately(self):
        grid = self._blob_grid()
        m = extract_focus(grid)
        assert m.peak_x_um == pytest.approx(0.1, abs=2e-3)
        assert m.peak_y_um == pytest.approx(-0.4, abs=2e-3)
        # Half-maximum is taken from the absolute peak (baseline
        # included), so the 24-over-1 blob crosses at 24 exp(.) = 11.5:
        # width = 2 sigma sqrt(2 ln(24 / 11.5)).
        s_um = 0.25 / (2.0 * np.sqrt(2.0 * np.log(2.0)))
        expected_nm = 2e3 * s_um * np.sqrt(2.0 * np.log(24.0 / 11.5))
        assert m.waist_fwhm_nm == pytest.approx(expected_nm, rel=1e-3)
        assert m.peak_enhancement == pytest.approx(25.0, rel=0.01)

    def test_no_focus_in_flat_grid(self):
        v = np.ones((50, 50))
        grid = FieldGrid(v, 0.02, sphere_bottom_um=0.0)
        with pytest.raises(NoFocusError):
            extract_focus(grid)

    def test_rows_above_sphere_bottom_ignored(self):
        grid = self._blob_grid(y0=-0.4)
        # A brighter blob above the surface must not win the search.
        v = grid.values.copy()
        x = grid.x_um
        y = grid.y_um
        xg, yg = np.meshgrid(x, y, indexing="xy")
        v += 40.0 * np.exp(-((xg - 0.2) ** 2 + (yg - 0.3) ** 2) / (2 * 0.01))
        above = FieldGrid(v, grid.dx_um, x0_um=-1.0, y0_um=-1.5, sphere_bottom_um=0.0)
        m = extract_focus(above)
        assert m.peak_y_um == pytest.approx(-0.4, abs=2e-3)


class TestFieldComparison:
    def test_identical_fields_have_zero_error(self):
        a = np.random.default_rng(0).uniform(0.5, 2.0, (20, 20))
        assert compare_fields(a, a) == 0.0

    def test_known_offset(self):
        b = np.full((10, 10), 2.0)
        a = b + 0.1
        assert compare_fields(a, b) == pytest.approx(0.05, rel=1e-12)

    def test_mask_restricts_comparison(self):
        b = np.ones((10, 10))
        a = b.copy()
        a[0, 0] = 5.0
        mask = np.ones_like(b, dtype=bool)
        mask[0, 0] = False
        assert compare_fields(a, b, mask) == 0.0
        with pytest.raises(ValueError, match="mask"):
            compare_fields(a, b, np.zeros_like(b, dtype=bool))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            compare_fields(np.ones((3, 3)), np.ones((4, 4)))
