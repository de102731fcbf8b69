"""Ball-lens geometry: frozen numeric anchors and regime properties."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spherescope.optics import (
    EmitterGeometry,
    ImageMode,
    ImagingSystem,
    Microsphere,
    RegimeError,
    focal_length,
    image_mode,
    magnification,
    magnification_at_plane,
    magnification_curve,
    paraxial_focal_length,
    relative_index,
    virtual_image_distance,
)

# Hand-computed from the two-refraction ray trace; frozen before the
# implementation existed so the code cannot drift to meet them.
F_AT_1UM_NR13834 = 17.982831048606783
DV_DEFAULT = 13.040738331716703
M_DEFAULT = 2.2812612209620498

SPHERE = Microsphere(radius_um=10.0, index=2.1)
SYSTEM = ImagingSystem()
GEOM = EmitterGeometry(depth_um=0.1, ray_height_um=1.0)


class TestFrozenValues:
    def test_focal_length_worked_example(self):
        assert focal_length(1.0, 10.0, 1.3834) == pytest.approx(
            F_AT_1UM_NR13834, rel=1e-12
        )

    def test_virtual_image_depth_default_geometry(self):
        assert virtual_image_distance(SPHERE, SYSTEM, GEOM) == pytest.approx(
            DV_DEFAULT, rel=1e-12
        )

    def test_magnification_default_geometry(self):
        assert magnification(SPHERE, SYSTEM, GEOM) == pytest.approx(
            M_DEFAULT, rel=1e-12
        )

    def test_plane_magnification_endpoints(self):
        # (R - z) / (R + delta) at z = -9 and -15 um.
        assert magnification_at_plane(-9.0, SPHERE, GEOM) == pytest.approx(
            19.0 / 10.1, rel=1e-12
        )
        assert magnification_at_plane(-15.0, SPHERE, GEOM) == pytest.approx(
            25.0 / 10.1, rel=1e-12
        )

    def test_relative_index_glass_in_oil(self):
        assert relative_index(1.9, 1.518) == pytest.approx(
            1.251646903820817, rel=1e-15
        )

    def test_paraxial_focal_length_closed_form(self):
        assert paraxial_focal_length(10.0, 1.5) == pytest.approx(15.0, rel=1e-15)


class TestValidation:
    def test_ray_height_must_stay_inside_sphere(self):
        with pytest.raises(ValueError, match="ray height"):
            focal_length(10.0, 10.0, 1.4)
        with pytest.raises(ValueError, match="ray height"):
            focal_length(-0.5, 10.0, 1.4)

    def test_relative_index_rejects_rarer_sphere(self):
        with pytest.raises(ValueError, match="denser"):
            relative_index(1.4, 1.518)

    def test_real_image_regime_raises(self):
        # n_rel = 1.9/1.518 puts the paraxial focus short of a deep emitter.
        dense = Microsphere(radius_um=10.0, index=2.9)
        with pytest.raises(RegimeError, match="real image"):
            virtual_image_distance(
                dense, SYSTEM, EmitterGeometry(depth_um=3.0, ray_height_um=6.0)
            )

    def test_scan_plane_above_surface_rejected(self):
        with pytest.raises(ValueError, match="z <= 0"):
            magnification_at_plane(0.5, SPHERE, GEOM)

    def test_image_mode_boundary_is_an_error(self):
        # n_rel = 2 makes f0 = R exactly; delta = 0 hits the boundary.
        with pytest.raises(RegimeError, match="indeterminate"):
            image_mode(2.0, 0.0)

    def test_image_mode_classification(self):
        assert image_mode(1.3834, 0.01) is ImageMode.VIRTUAL
        assert image_mode(2.5, 0.0) is ImageMode.REAL


class TestParaxialProperty:
    def test_small_height_limit_on_grid(self):
        # 5x5 grid spanning the supported regime; relative error < 1e-6.
        for n_rel in np.linspace(1.1, 1.9, 5):
            for radius in np.linspace(5.0, 50.0, 5):
                f0 = paraxial_focal_length(radius, n_rel)
                f = focal_length(1e-6 * radius, radius, n_rel)
                assert abs(f - f0) / f0 < 1e-6, (n_rel, radius)

    @given(
        n_rel=st.floats(1.1, 1.9),
        radius=st.floats(5.0, 50.0),
    )
    @settings(max_examples=50)
    def test_small_height_limit_generic(self, n_rel, radius):
        f0 = paraxial_focal_length(radius, n_rel)
        f = focal_length(1e-6 * radius, radius, n_rel)
        assert abs(f - f0) / f0 < 1e-6


class TestAberrationMonotonicity:
    @given(n_rel=st.floats(1.01, 1.99))
    @settings(max_examples=40)
    def test_focal_length_decreases_with_ray_height(self, n_rel):
        radius = 10.0
        heights = np.linspace(0.01, 0.7, 400) * radius
        f = np.array([focal_length(h, radius, n_rel) for h in heights])
        assert np.all(np.diff(f) < 0.0)


class TestConsistency:
    @given(
        radius=st.floats(5.0, 30.0),
        depth=st.floats(0.0, 0.5),
        index=st.floats(1.7, 2.4),
        height=st.floats(0.1, 2.0),
    )
    @settings(max_examples=80)
    def test_plane_referred_matches_image_magnification(
        self, radius, depth, index, height
    ):
        sphere = Microsphere(radius_um=radius, index=index)
        geom = EmitterGeometry(depth_um=depth, ray_height_um=height)
        try:
            d_v = virtual_image_distance(sphere, SYSTEM, geom)
        except RegimeError:
            return
        m_img = magnification(sphere, SYSTEM, geom)
        m_plane = magnification_at_plane(-d_v, sphere, geom)
        assert abs(m_plane - m_img) <= 1e-12 * m_img

    def test_index_matched_limit(self):
        # n_rel -> 1+ makes the sphere optically vanish: M -> 1, d_v -> delta.
        eps = 1e-6
        oil = 1.518
        sphere = Microsphere(radius_um=10.0, index=oil * (1.0 + eps))
        geom = EmitterGeometry(depth_um=0.1, ray_height_um=1e-4)
        d_v = virtual_image_distance(sphere, SYSTEM, geom)
        m = magnification(sphere, SYSTEM, geom)
        assert d_v == pytest.approx(0.1, abs=1e-4)
        assert m == pytest.approx(1.0, abs=1e-5)

    @given(scale=st.floats(0.2, 8.0))
    @settings(max_examples=40)
    def test_scale_invariance(self, scale):
        base_sphere = Microsphere(radius_um=10.0, index=2.1)
        base_geom = EmitterGeometry(depth_um=0.1, ray_height_um=1.0)
        big_sphere = Microsphere(radius_um=10.0 * scale, index=2.1)
        big_geom = EmitterGeometry(depth_um=0.1 * scale, ray_height_um=1.0 * scale)

        f1 = focal_length(1.0, 10.0, 1.3834)
        f2 = focal_length(1.0 * scale, 10.0 * scale, 1.3834)
        assert f2 == pytest.approx(scale * f1, rel=1e-12)

        d1 = virtual_image_distance(base_sphere, SYSTEM, base_geom)
        d2 = virtual_image_distance(big_sphere, SYSTEM, big_geom)
        assert d2 == pytest.approx(scale * d1, rel=1e-10)

        m1 = magnification(base_sphere, SYSTEM, base_geom)
        m2 = magnification(big_sphere, SYSTEM, big_geom)
        assert m2 == pytest.approx(m1, rel=1e-10)


class TestMagnificationCurve:
    def test_matches_pointwise_formula(self):
        z, m = magnification_curve(SPHERE, GEOM, -16.0, -9.0, 71)
        for zi, mi in zip(z, m):
            assert mi == pytest.approx(
                magnification_at_plane(zi, SPHERE, GEOM), rel=1e-14
            )

    def test_strictly_decreasing_in_z(self):
        _, m = magnification_curve(SPHERE, GEOM, -16.0, -9.0, 71)
        assert np.all(np.diff(m) < 0.0)

    def test_argument_order_enforced(self):
        with pytest.raises(ValueError, match="z_min < z_max"):
            magnification_curve(SPHERE, GEOM, -9.0, -16.0, 10)
