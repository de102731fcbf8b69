"""Damped least-squares fitting with analytic Jacobians.

Small Levenberg-Marquardt engine used by every fitting routine in the
package.  Models are plain (func, jac) pairs; the built-in ones cover
Gaussian peaks, antibunching dips and Lorentzian resonance spectra, all
with hand-derived Jacobians so the solver never falls back on finite
differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "FitModel",
    "FitResult",
    "SingularModelError",
    "levenberg_marquardt",
    "lm_fit",
    "poisson_sigma",
    "gaussian_model",
    "two_gaussian_model",
    "antibunching_model",
    "lorentzian_dips_model",
    "symmetric_dips_model",
    "MODEL_REGISTRY",
]


class SingularModelError(RuntimeError):
    """Normal equations stayed singular after damping escalation."""


@dataclass(frozen=True)
class FitModel:
    """A parametric model with its analytic Jacobian.

    ``func(x, p)`` returns the model values, ``jac(x, p)`` the matrix of
    partial derivatives with shape ``(len(x), len(p))``.
    """

    name: str
    n_params: int
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class FitResult:
    params: np.ndarray
    covariance: np.ndarray
    chi2: float
    n_iter: int
    converged: bool
    message: str = ""
    model_name: str = ""

    @property
    def param_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def poisson_sigma(counts: np.ndarray) -> np.ndarray:
    """Weighting for count data: sqrt(max(counts, 1))."""
    return np.sqrt(np.maximum(np.asarray(counts, dtype=float), 1.0))


def levenberg_marquardt(
    model: FitModel,
    x: np.ndarray,
    y: np.ndarray,
    p0: np.ndarray,
    sigma: np.ndarray | None = None,
    max_iter: int = 200,
    gtol: float = 1e-8,
    xtol: float = 1e-10,
) -> FitResult:
    """Minimise chi^2 = sum(((y - f(x, p)) / sigma)^2) over p.

    Classic Marquardt damping: the diagonal of the normal matrix is
    inflated by (1 + lam), lam shrinking on accepted steps and growing on
    rejected ones.  Convergence is declared when the scaled gradient norm
    drops below ``gtol`` or the step norm below ``xtol``; otherwise the
    best parameters seen are returned with ``converged=False``.

    Raises:
        SingularModelError: If the damped normal equations remain
            unsolvable with the damping at its ceiling.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.array(p0, dtype=float).copy()
    if p.size != model.n_params:
        raise ValueError(
            f"{model.name} expects {model.n_params} parameters, got {p.size}"
        )
    if x.size != y.size:
        raise ValueError("x and y must have the same length")
    if x.size <= model.n_params:
        raise ValueError(
            f"need more than {model.n_params} points to fit {model.name}, got {x.size}"
        )
    if sigma is None:
        w = np.ones_like(y)
    else:
        sigma = np.asarray(sigma, dtype=float)
        if np.any(sigma <= 0):
            raise ValueError("sigma must be strictly positive")
        w = 1.0 / sigma

    def chi2_at(params):
        # Trial steps may wander into overflow territory; non-finite
        # residuals are rejected by the step test, so stay quiet here.
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            r = (y - model.func(x, params)) * w
        return r, float(r @ r)

    r, chi2 = chi2_at(p)
    best_p, best_chi2 = p.copy(), chi2
    lam = 1e-3
    lam_max = 1e12
    n_iter = 0
    converged = False
    message = "iteration limit reached"

    for n_iter in range(1, max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            jw = model.jac(x, p) * w[:, None]
        g = jw.T @ r
        a = jw.T @ jw
        d = np.diag(a).copy()
        # Scaled gradient test: stationary within gtol relative to chi2.
        gscale = np.max(np.abs(g) * np.maximum(np.abs(p), 1.0))
        if gscale <= gtol * max(chi2, 1.0):
            converged, message = True, "gradient tolerance reached"
            break
        stepped = False
        while lam <= lam_max:
            a_damped = a + lam * np.diag(np.maximum(d, np.finfo(float).tiny))
            try:
                delta = np.linalg.solve(a_damped, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            if not np.all(np.isfinite(delta)):
                lam *= 10.0
                continue
            r_new, chi2_new = chi2_at(p + delta)
            if np.isfinite(chi2_new) and chi2_new <= chi2:
                p = p + delta
                r, chi2 = r_new, chi2_new
                lam = max(lam / 3.0, 1e-12)
                stepped = True
                break
            lam *= 10.0
        if not stepped:
            raise SingularModelError(
                f"fit of {model.name} stalled: damping exceeded {lam_max:.0e} "
                f"without finding a downhill step (chi2={chi2:.4g})"
            )
        if chi2 < best_chi2:
            best_p, best_chi2 = p.copy(), chi2
        if np.linalg.norm(delta) <= xtol * (np.linalg.norm(p) + xtol):
            converged, message = True, "step tolerance reached"
            break

    p, chi2 = best_p, best_chi2
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        jw = model.jac(x, p) * w[:, None]
    a = jw.T @ jw
    dof = max(x.size - model.n_params, 1)
    scale = chi2 / dof
    try:
        cov = np.linalg.inv(a) * scale
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(a) * scale
    return FitResult(
        params=p,
        covariance=cov,
        chi2=chi2,
        n_iter=n_iter,
        converged=converged,
        message=message,
        model_name=model.name,
    )


# ---------------------------------------------------------------------------
# Built-in models


def _gauss(x, p):
    amp, c, s, off = p
    return amp * np.exp(-((x - c) ** 2) / (2.0 * s * s)) + off


def _gauss_jac(x, p):
    amp, c, s, off = p
    u = x - c
    e = np.exp(-(u * u) / (2.0 * s * s))
    j = np.empty((x.size, 4))
    j[:, 0] = e
    j[:, 1] = amp * e * u / (s * s)
    j[:, 2] = amp * e * u * u / (s ** 3)
    j[:, 3] = 1.0
    return j


gaussian_model = FitModel("gaussian", 4, _gauss, _gauss_jac)


def _gauss2_shared(x, p):
    a1, c1, a2, c2, s, off = p
    return (
        a1 * np.exp(-((x - c1) ** 2) / (2.0 * s * s))
        + a2 * np.exp(-((x - c2) ** 2) / (2.0 * s * s))
        + off
    )


def _gauss2_shared_jac(x, p):
    a1, c1, a2, c2, s, off = p
    u1, u2 = x - c1, x - c2
    e1 = np.exp(-(u1 * u1) / (2.0 * s * s))
    e2 = np.exp(-(u2 * u2) / (2.0 * s * s))
    j = np.empty((x.size, 6))
    j[:, 0] = e1
    j[:, 1] = a1 * e1 * u1 / (s * s)
    j[:, 2] = e2
    j[:, 3] = a2 * e2 * u2 / (s * s)
    j[:, 4] = (a1 * e1 * u1 * u1 + a2 * e2 * u2 * u2) / (s ** 3)
    j[:, 5] = 1.0
    return j


def _gauss2_free(x, p):
    a1, c1, s1, a2, c2, s2, off = p
    return (
        a1 * np.exp(-((x - c1) ** 2) / (2.0 * s1 * s1))
        + a2 * np.exp(-((x - c2) ** 2) / (2.0 * s2 * s2))
        + off
    )


def _gauss2_free_jac(x, p):
    a1, c1, s1, a2, c2, s2, off = p
    u1, u2 = x - c1, x - c2
    e1 = np.exp(-(u1 * u1) / (2.0 * s1 * s1))
    e2 = np.exp(-(u2 * u2) / (2.0 * s2 * s2))
    j = np.empty((x.size, 7))
    j[:, 0] = e1
    j[:, 1] = a1 * e1 * u1 / (s1 * s1)
    j[:, 2] = a1 * e1 * u1 * u1 / (s1 ** 3)
    j[:, 3] = e2
    j[:, 4] = a2 * e2 * u2 / (s2 * s2)
    j[:, 5] = a2 * e2 * u2 * u2 / (s2 ** 3)
    j[:, 6] = 1.0
    return j


def two_gaussian_model(shared_width: bool = True) -> FitModel:
    """Sum of two Gaussians on a common offset."""
    if shared_width:
        return FitModel("two_gaussian_shared", 6, _gauss2_shared, _gauss2_shared_jac)
    return FitModel("two_gaussian", 7, _gauss2_free, _gauss2_free_jac)


def _antibunch(tau, p):
    g0, tc, scale = p
    return scale * (1.0 - (1.0 - g0) * np.exp(-np.abs(tau) / tc))


def _antibunch_jac(tau, p):
    g0, tc, scale = p
    at = np.abs(tau)
    e = np.exp(-at / tc)
    j = np.empty((tau.size, 3))
    j[:, 0] = scale * e
    j[:, 1] = -scale * (1.0 - g0) * e * at / (tc * tc)
    j[:, 2] = 1.0 - (1.0 - g0) * e
    return j


# Scale parameter absorbs residual normalisation error of the histogram
# (e.g. a blinking-induced plateau), so g0 is always tail-relative.
antibunching_model = FitModel("antibunching", 3, _antibunch, _antibunch_jac)


def _make_lorentz_dips(n_dips):
    def func(x, p):
        y = np.full_like(np.asarray(x, dtype=float), p[0])
        for k in range(n_dips):
            c, d, w = p[1 + 3 * k : 4 + 3 * k]
            q = (w / 2.0) ** 2
            y -= d * q / ((x - c) ** 2 + q)
        return y

    def jac(x, p):
        j = np.zeros((np.size(x), 1 + 3 * n_dips))
        j[:, 0] = 1.0
        for k in range(n_dips):
            c, d, w = p[1 + 3 * k : 4 + 3 * k]
            u = x - c
            q = (w / 2.0) ** 2
            den = u * u + q
            j[:, 1 + 3 * k] = -d * 2.0 * q * u / (den * den)
            j[:, 2 + 3 * k] = -q / den
            j[:, 3 + 3 * k] = -d * (u * u) / (den * den) * (w / 2.0)
        return j

    return func, jac


def lorentzian_dips_model(n_dips: int) -> FitModel:
    """Baseline minus ``n_dips`` independent Lorentzian dips.

    Parameters: (baseline, c_1, depth_1, width_1, ..., c_n, depth_n,
    width_n) with widths as FWHM.
    """
    if n_dips < 1:
        raise ValueError(f"n_dips must be >= 1, got {n_dips}")
    func, jac = _make_lorentz_dips(n_dips)
    return FitModel(f"lorentzian_dips_{n_dips}", 1 + 3 * n_dips, func, jac)


def _make_symmetric_dips(n_pairs):
    def func(x, p):
        y = np.full_like(np.asarray(x, dtype=float), p[0])
        c0 = p[1]
        for k in range(n_pairs):
            dlt, d, w = p[2 + 3 * k : 5 + 3 * k]
            q = (w / 2.0) ** 2
            for sg in (-1.0, 1.0):
                y -= d * q / ((x - (c0 + sg * dlt)) ** 2 + q)
        return y

    def jac(x, p):
        j = np.zeros((np.size(x), 2 + 3 * n_pairs))
        j[:, 0] = 1.0
        c0 = p[1]
        for k in range(n_pairs):
            dlt, d, w = p[2 + 3 * k : 5 + 3 * k]
            q = (w / 2.0) ** 2
            for sg in (-1.0, 1.0):
                u = x - (c0 + sg * dlt)
                den = u * u + q
                dc = -d * 2.0 * q * u / (den * den)
                j[:, 1] += dc
                j[:, 2 + 3 * k] += sg * dc
                j[:, 3 + 3 * k] += -q / den
                j[:, 4 + 3 * k] += -d * (u * u) / (den * den) * (w / 2.0)
        return j

    return func, jac


def symmetric_dips_model(n_pairs: int) -> FitModel:
    """Dip pairs placed symmetrically about a shared centre frequency.

    Parameters: (baseline, centre, delta_1, depth_1, width_1, ...), each
    pair contributing dips at centre +- delta with a common depth and
    width.
    """
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    func, jac = _make_symmetric_dips(n_pairs)
    return FitModel(f"symmetric_dips_{n_pairs}", 2 + 3 * n_pairs, func, jac)


MODEL_REGISTRY: dict[str, Callable[[], FitModel]] = {
    "gaussian": lambda: gaussian_model,
    "two_gaussian_shared": lambda: two_gaussian_model(True),
    "two_gaussian": lambda: two_gaussian_model(False),
    "antibunching": lambda: antibunching_model,
}


def lm_fit(
    model_id: str | FitModel,
    x: np.ndarray,
    y: np.ndarray,
    init_params: np.ndarray,
    sigma: np.ndarray | None = None,
    **kwargs,
) -> FitResult:
    """Fit a registered model (by id) or an explicit :class:`FitModel`."""
    if isinstance(model_id, FitModel):
        model = model_id
    else:
        try:
            model = MODEL_REGISTRY[model_id]()
        except KeyError:
            raise KeyError(
                f"unknown model {model_id!r}; registered: {sorted(MODEL_REGISTRY)}"
            ) from None
    return levenberg_marquardt(model, x, y, init_params, sigma=sigma, **kwargs)
