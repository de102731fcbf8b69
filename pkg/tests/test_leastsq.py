"""Fit engine: Jacobian correctness, round-trips, descent guarantee."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spherescope.leastsq import (
    FitModel,
    SingularModelError,
    antibunching_model,
    gaussian_model,
    levenberg_marquardt,
    lm_fit,
    lorentzian_dips_model,
    poisson_sigma,
    symmetric_dips_model,
    two_gaussian_model,
)

# (model, x grid, parameter sampler) for every built-in model.  Samplers
# keep parameters in the physically sensible ranges each model is used in
# so finite differences stay well conditioned.
X_NM = np.linspace(-600.0, 600.0, 81)
X_TAU = np.linspace(-200.0, 200.0, 101)
X_MHZ = np.linspace(2600.0, 3140.0, 217)


# Each case: (model, x grid, parameter sampler, init jitter scale).  The
# jitter is an absolute per-parameter displacement for the round-trip
# initialisation; centre frequencies need jitter on the linewidth scale,
# not a fraction of their ~2900 MHz absolute value, or the start point
# leaves the convergence basin entirely.
def _cases():
    return [
        (
            gaussian_model,
            X_NM,
            lambda r: np.array(
                [r.uniform(10, 2e4), r.uniform(-200, 200), r.uniform(30, 300),
                 r.uniform(0, 500)]
            ),
            np.array([50.0, 10.0, 5.0, 5.0]),
        ),
        (
            two_gaussian_model(True),
            X_NM,
            lambda r: np.array(
                [r.uniform(10, 1e4), r.uniform(-250, -20), r.uniform(10, 1e4),
                 r.uniform(20, 250), r.uniform(30, 250), r.uniform(0, 500)]
            ),
            np.array([50.0, 8.0, 50.0, 8.0, 5.0, 5.0]),
        ),
        (
            two_gaussian_model(False),
            X_NM,
            lambda r: np.array(
                [r.uniform(10, 1e4), r.uniform(-250, -20), r.uniform(30, 250),
                 r.uniform(10, 1e4), r.uniform(20, 250), r.uniform(30, 250),
                 r.uniform(0, 500)]
            ),
            np.array([50.0, 8.0, 5.0, 50.0, 8.0, 5.0, 5.0]),
        ),
        (
            antibunching_model,
            X_TAU,
            lambda r: np.array(
                [r.uniform(0.0, 1.2), r.uniform(5, 80), r.uniform(0.5, 2.0)]
            ),
            np.array([0.05, 2.0, 0.05]),
        ),
        (
            lorentzian_dips_model(2),
            X_MHZ,
            lambda r: np.array(
                [r.uniform(0.9, 1.05),
                 r.uniform(2700, 2850), r.uniform(0.02, 0.2), r.uniform(6, 25),
                 r.uniform(2890, 3040), r.uniform(0.02, 0.2), r.uniform(6, 25)]
            ),
            np.array([0.01, 3.0, 0.005, 2.0, 3.0, 0.005, 2.0]),
        ),
        (
            symmetric_dips_model(2),
            X_MHZ,
            lambda r: np.array(
                [r.uniform(0.9, 1.05), r.uniform(2850, 2890),
                 r.uniform(20, 80), r.uniform(0.02, 0.2), r.uniform(6, 25),
                 r.uniform(90, 130), r.uniform(0.02, 0.2), r.uniform(6, 25)]
            ),
            np.array([0.01, 3.0, 3.0, 0.005, 2.0, 3.0, 0.005, 2.0]),
        ),
    ]


def _fd_jacobian(model, x, p):
    j = np.empty((x.size, p.size))
    for k in range(p.size):
        h = 1e-6 * max(1.0, abs(p[k]))
        pp, pm = p.copy(), p.copy()
        pp[k] += h
        pm[k] -= h
        j[:, k] = (model.func(x, pp) - model.func(x, pm)) / (2.0 * h)
    return j


@pytest.mark.parametrize(
    "model,x,sample,jitter", _cases(), ids=lambda c: getattr(c, "name", None)
)
def test_jacobian_matches_finite_differences(model, x, sample, jitter):
    rng = np.random.default_rng(42)
    for _ in range(100):
        p = sample(rng)
        ja = model.jac(x, p)
        jf = _fd_jacobian(model, x, p)
        err = np.abs(ja - jf) / np.maximum(1.0, np.abs(ja))
        assert err.max() < 1e-5, f"{model.name}: max jac error {err.max():.2e}"


@pytest.mark.parametrize(
    "model,x,sample,jitter", _cases(), ids=lambda c: getattr(c, "name", None)
)
def test_noiseless_round_trip(model, x, sample, jitter):
    rng = np.random.default_rng(7)
    for _ in range(10):
        p_true = sample(rng)
        y = model.func(x, p_true)
        p0 = p_true + jitter * rng.uniform(-1, 1, p_true.size)
        res = levenberg_marquardt(model, x, y, p0)
        err = np.abs(res.params - p_true) / np.maximum(1e-12, np.abs(p_true))
        assert err.max() < 1e-6, f"{model.name}: round-trip error {err.max():.2e}"


class TestDescentGuarantee:
    @given(seed=st.integers(0, 2**31 - 1), frac=st.floats(0.0, 0.45))
    @settings(max_examples=60, deadline=None)
    def test_final_residual_never_exceeds_initial(self, seed, frac):
        rng = np.random.default_rng(seed)
        p_true = np.array([1000.0, 10.0, 120.0, 50.0])
        y = gaussian_model.func(X_NM, p_true) + rng.normal(0, 30, X_NM.size)
        p0 = p_true * (1.0 + frac * rng.uniform(-1, 1, 4))

        def chi2(p):
            r = y - gaussian_model.func(X_NM, p)
            return float(r @ r)

        try:
            res = levenberg_marquardt(gaussian_model, X_NM, y, p0)
        except SingularModelError:
            return
        assert res.chi2 <= chi2(p0) + 1e-9


class TestValidation:
    def test_wrong_parameter_count(self):
        with pytest.raises(ValueError, match="expects 4 parameters"):
            levenberg_marquardt(gaussian_model, X_NM, X_NM, np.zeros(3))

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError, match="same length"):
            levenberg_marquardt(
                gaussian_model, X_NM, X_NM[:-1], np.array([1.0, 0, 50, 0])
            )

    def test_too_few_points(self):
        x = np.array([0.0, 1.0, 2.0])
        with pytest.raises(ValueError, match="more than 4 points"):
            levenberg_marquardt(gaussian_model, x, x, np.array([1.0, 0, 50, 0]))

    def test_nonpositive_sigma_rejected(self):
        y = gaussian_model.func(X_NM, np.array([100.0, 0, 50, 0]))
        sigma = np.ones_like(y)
        sigma[3] = 0.0
        with pytest.raises(ValueError, match="strictly positive"):
            levenberg_marquardt(
                gaussian_model, X_NM, y, np.array([90.0, 5, 55, 1]), sigma=sigma
            )

    def test_dip_model_factories_reject_zero_counts(self):
        with pytest.raises(ValueError):
            lorentzian_dips_model(0)
        with pytest.raises(ValueError):
            symmetric_dips_model(0)


class TestRegistry:
    def test_unknown_model_id(self):
        with pytest.raises(KeyError, match="unknown model"):
            lm_fit("sinc", X_NM, X_NM, np.zeros(2))

    def test_registered_id_round_trip(self):
        p_true = np.array([500.0, -20.0, 90.0, 10.0])
        y = gaussian_model.func(X_NM, p_true)
        res = lm_fit("gaussian", X_NM, y, p_true * 1.02)
        assert np.allclose(res.params, p_true, rtol=1e-8)

    def test_explicit_model_instance_accepted(self):
        model = FitModel(
            "line", 2,
            lambda x, p: p[0] * x + p[1],
            lambda x, p: np.stack([x, np.ones_like(x)], axis=1),
        )
        res = lm_fit(model, X_NM, 3.0 * X_NM + 2.0, np.array([1.0, 0.0]))
        assert np.allclose(res.params, [3.0, 2.0], atol=1e-9)


class TestFitResult:
    def test_parameter_errors_from_covariance(self):
        rng = np.random.default_rng(3)
        p_true = np.array([1000.0, 0.0, 100.0, 20.0])
        y = gaussian_model.func(X_NM, p_true) + rng.normal(0, 5, X_NM.size)
        res = levenberg_marquardt(gaussian_model, X_NM, y, p_true)
        errs = res.param_errors
        assert errs.shape == (4,)
        assert np.all(errs > 0)
        # Center of a bright peak is localized far better than its width.
        assert errs[1] < p_true[2]

    def test_poisson_sigma_floors_at_one(self):
        s = poisson_sigma(np.array([0.0, 1.0, 100.0]))
        assert s == pytest.approx([1.0, 1.0, 10.0])
