"""Continuous ranked probability score and weighted variants.

The CRPS of a forecast distribution F at an observation y is

    CRPS(F, y) = int (F(x) - 1{x >= y})^2 dx,

and the weighted form inserts a non-negative weight w(x) under the integral.
Closed forms are provided for the normal, two-component normal mixture,
exponential and generalized Pareto families; everything else goes through
adaptive quadrature. Batch entry points score a whole column of same-family
forecasts against paired observations in vectorized numpy, which is what the
simulation testbeds and the verification tooling run on.

The quantile-indicator weight w(x) = 1{x >= q} gets dedicated treatment: for
y >= q the weighted score equals CRPS(F, y) minus the constant
``crps_shift_constant(F, q)``, so above the threshold it is the plain CRPS
shifted by a forecast-dependent constant. That is the identity the tail
diagnostics in this package are built on.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .distributions import (
    Distribution,
    Exponential,
    Gamma,
    GeneralizedPareto,
    Normal,
    NormalMixture2,
    Spliced,
    UniformMixture,
)
from .errors import (
    DivergenceError,
    DomainError,
    InfiniteMeanError,
    ParameterError,
    UnsupportedFamilyError,
)

__all__ = [
    "WeightFunction",
    "UnitWeight",
    "QuantileIndicatorWeight",
    "TabulatedWeight",
    "UNIT",
    "crps_closed",
    "crps_closed_batch",
    "crps_quadrature",
    "wcrps_quantile",
    "wcrps_quantile_batch",
    "crps_shift_constant",
    "survival_sq_tail",
    "crps_ensemble",
]

_SQRT_PI = math.sqrt(math.pi)
_GP_EPS = 1e-8


# ---------------------------------------------------------------------------
# Weight functions
# ---------------------------------------------------------------------------


class WeightFunction(ABC):
    """Non-negative weight w(x) with antiderivative W(x) = int_-inf^x w."""

    @abstractmethod
    def w(self, x): ...

    @abstractmethod
    def antiderivative(self, x): ...

    def knots(self) -> np.ndarray:
        """Points where w has a kink or jump (quadrature split points)."""
        return np.empty(0)


class UnitWeight(WeightFunction):
    def w(self, x):
        return np.ones_like(np.asarray(x, dtype=float))

    def antiderivative(self, x):
        return np.asarray(x, dtype=float)

    def __repr__(self):
        return "UnitWeight()"


UNIT = UnitWeight()


@dataclass(frozen=True)
class QuantileIndicatorWeight(WeightFunction):
    """w(x) = 1{x >= q}: all weight on the region above the threshold q."""

    q: float

    def __post_init__(self):
        if not np.isfinite(self.q):
            raise ParameterError("quantile-indicator threshold must be finite")

    def w(self, x):
        return (np.asarray(x, dtype=float) >= self.q).astype(float)

    def antiderivative(self, x):
        return np.maximum(np.asarray(x, dtype=float) - self.q, 0.0)

    def knots(self):
        return np.array([self.q])


class TabulatedWeight(WeightFunction):
    """Piecewise-linear weight given on a grid; zero outside the grid."""

    def __init__(self, xs, ws):
        xs = np.asarray(xs, dtype=float)
        ws = np.asarray(ws, dtype=float)
        if xs.ndim != 1 or xs.size < 2 or xs.shape != ws.shape:
            raise ParameterError("tabulated weight needs matching 1-d grids, >= 2 points")
        if np.any(np.diff(xs) <= 0):
            raise ParameterError("tabulated weight grid must be strictly increasing")
        if np.any(ws < 0) or not np.all(np.isfinite(ws)):
            raise ParameterError("weight values must be finite and non-negative")
        self.xs = xs
        self.ws = ws
        # antiderivative at the grid points, trapezoid-exact for the linear pieces
        self._W = np.concatenate(
            [[0.0], np.cumsum(0.5 * (ws[1:] + ws[:-1]) * np.diff(xs))]
        )

    def w(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.xs[0]) & (x <= self.xs[-1])
        return np.where(inside, np.interp(x, self.xs, self.ws), 0.0)

    def antiderivative(self, x):
        # piecewise quadratic: the integral of each linear segment, constant
        # outside the grid (clamping supplies both flat extensions)
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, self.xs[0], self.xs[-1])
        i = np.clip(np.searchsorted(self.xs, xc, side="right") - 1, 0, self.xs.size - 2)
        x0, w0 = self.xs[i], self.ws[i]
        slope = (self.ws[i + 1] - w0) / (self.xs[i + 1] - x0)
        dt = xc - x0
        return self._W[i] + w0 * dt + 0.5 * slope * dt * dt

    def knots(self):
        return self.xs.copy()

    def __repr__(self):
        return f"TabulatedWeight({self.xs[0]}..{self.xs[-1]}, {self.xs.size} pts)"


# ---------------------------------------------------------------------------
# Closed forms (vectorized kernels on raw parameter arrays)
# ---------------------------------------------------------------------------


def _phi(z):
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _crps_normal_kernel(mu, sigma, y):
    z = (y - mu) / sigma
    return sigma * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * _phi(z) - 1.0 / _SQRT_PI)


def _A(m, v):
    """E|X - 0| for X ~ N(m, v); the building block of the mixture closed form."""
    s = np.sqrt(v)
    z = m / s
    return m * (2.0 * ndtr(z) - 1.0) + 2.0 * s * _phi(z)


def _crps_mixture2_kernel(w, m1, s1, m2, s2, y):
    w2 = 1.0 - w
    cross = (
        w * w * _A(0.0 * np.asarray(m1), 2.0 * s1 * s1)
        + w2 * w2 * _A(0.0 * np.asarray(m2), 2.0 * s2 * s2)
        + 2.0 * w * w2 * _A(m1 - m2, s1 * s1 + s2 * s2)
    )
    return w * _A(y - m1, s1 * s1) + w2 * _A(y - m2, s2 * s2) - 0.5 * cross


def _crps_exponential_kernel(rate, y):
    yc = np.maximum(y, 0.0)
    inside = yc + (2.0 / rate) * np.exp(-rate * yc) - 1.5 / rate
    # below the support the score grows linearly with the distance to 0
    return inside + np.maximum(-np.asarray(y, dtype=float), 0.0)


def _crps_gp_kernel(scale, shape, y):
    """CRPS for the generalized Pareto; requires shape < 1 (finite mean)."""
    scale = np.asarray(scale, dtype=float)
    shape = np.asarray(shape, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(shape >= 1.0):
        raise InfiniteMeanError("generalized Pareto CRPS requires shape < 1")
    # clamp y into the support, add |y - clamp| afterwards (exact extension)
    with np.errstate(divide="ignore", invalid="ignore"):
        hi = np.where(shape < -_GP_EPS, -scale / np.minimum(shape, -_GP_EPS), np.inf)
    yc = np.clip(y, 0.0, hi)
    exp_like = np.abs(shape) < _GP_EPS
    safe_shape = np.where(exp_like, 0.5, shape)
    base = np.maximum(1.0 + safe_shape * yc / scale, 0.0)
    with np.errstate(divide="ignore"):
        sbar = np.where(
            exp_like,
            np.exp(-yc / scale),
            np.exp(np.where(base > 0.0, -np.log(np.maximum(base, 1e-300)) / safe_shape, -np.inf)),
        )
    crps = (
        yc
        + 2.0 * sbar * (scale + shape * yc) / (1.0 - shape)
        - 2.0 * scale * (1.0 / (1.0 - shape) - 0.5 / (2.0 - shape))
    )
    return crps + np.abs(y - yc)


def crps_closed(dist: Distribution, y):
    """Closed-form CRPS; vectorized over ``y``.

    Supported families: normal, two-component normal mixture, exponential,
    generalized Pareto with shape < 1. Raises
    :class:`~crpstail.errors.UnsupportedFamilyError` otherwise and
    :class:`~crpstail.errors.InfiniteMeanError` for a Pareto shape >= 1.
    """
    y_arr = np.asarray(y, dtype=float)
    scalar = y_arr.ndim == 0
    if isinstance(dist, Normal):
        out = _crps_normal_kernel(dist.mean_, dist.std, y_arr)
    elif isinstance(dist, NormalMixture2):
        out = _crps_mixture2_kernel(
            dist.w, dist.mean1, dist.std1, dist.mean2, dist.std2, y_arr
        )
    elif isinstance(dist, Exponential):
        out = _crps_exponential_kernel(dist.rate, y_arr)
    elif isinstance(dist, GeneralizedPareto):
        out = _crps_gp_kernel(dist.scale, dist.shape, y_arr)
    else:
        raise UnsupportedFamilyError(
            f"no closed-form CRPS for family {dist.family!r}"
        )
    return float(out) if scalar else out


def crps_closed_batch(family: str, params: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Closed-form CRPS for a column of same-family forecasts.

    ``params`` has one row per record (see the record-batch layout); ``y``
    is the paired observation vector.
    """
    params = np.asarray(params, dtype=float)
    y = np.asarray(y, dtype=float)
    if family == "normal":
        return _crps_normal_kernel(params[:, 0], params[:, 1], y)
    if family == "normal_mixture2":
        return _crps_mixture2_kernel(
            params[:, 0], params[:, 1], params[:, 2], params[:, 3], params[:, 4], y
        )
    if family == "exponential":
        return _crps_exponential_kernel(params[:, 0], y)
    if family == "generalized_pareto":
        return _crps_gp_kernel(params[:, 0], params[:, 1], y)
    if family == "ensemble":
        return crps_ensemble(params, y)
    raise UnsupportedFamilyError(f"no closed-form CRPS for family {family!r}")


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


def _pdf_knots(dist: Distribution) -> list[float]:
    if isinstance(dist, UniformMixture):
        pts = []
        for _, a, b in dist.components:
            pts.extend([a, b])
        return pts
    if isinstance(dist, Spliced):
        return _pdf_knots(dist.base) + [dist.splice_point]
    return []


def _quad(f, a, b, points=None, tol=1e-12):
    if a >= b:
        return 0.0
    kw = {"epsabs": tol, "epsrel": tol, "limit": 400}
    if points:
        pts = sorted(p for p in points if a < p < b)
        if pts:
            kw["points"] = pts
    val, _ = integrate.quad(f, a, b, **kw)
    return val


def _quad_prob_space(dist, p_lo, p_hi, weight, kind, points_p=None):
    """int of c(p) * w(Q(p)) / pdf(Q(p)) dp with c = p^2 ('cdf') or (1-p)^2."""

    def integrand(p):
        x = dist.quantile(min(max(p, 1e-300), 1.0 - 1e-16))
        d = float(dist.pdf(x))
        if d <= 0.0:
            return 0.0
        c = p * p if kind == "cdf" else (1.0 - p) * (1.0 - p)
        return c * float(weight.w(x)) / d

    return _quad(integrand, p_lo, p_hi, points=points_p)


def crps_quadrature(dist: Distribution, y, weight: WeightFunction = UNIT) -> float:
    """Weighted CRPS by adaptive quadrature (absolute tolerance ~1e-10).

    Works for every family; bounded-support distributions integrate in x
    space, unbounded ones in probability space p = F(x), where the change of
    variables keeps heavy-tail integrands finite. A unit-weight request on a
    distribution without a finite mean raises
    :class:`~crpstail.errors.DivergenceError`.
    """
    y = float(y)
    if not np.isfinite(y):
        raise DomainError("observation must be finite")
    lo, hi = dist.support()
    if isinstance(weight, UnitWeight) and math.isinf(dist.mean()):
        raise DivergenceError(
            "unit-weight CRPS diverges: distribution has no finite mean"
        )

    extra = 0.0
    yc = y
    if y < lo:
        extra = float(weight.antiderivative(lo)) - float(weight.antiderivative(y))
        yc = lo
    elif y > hi:
        extra = float(weight.antiderivative(y)) - float(weight.antiderivative(hi))
        yc = hi

    knots = list(weight.knots()) + _pdf_knots(dist)
    if math.isfinite(lo) and math.isfinite(hi):
        left = _quad(
            lambda x: float(dist.cdf(x)) ** 2 * float(weight.w(x)), lo, yc, points=knots
        )
        right = _quad(
            lambda x: float(dist.survival(x)) ** 2 * float(weight.w(x)),
            yc,
            hi,
            points=knots,
        )
        return extra + left + right

    p_y = float(dist.cdf(yc))
    points_p = [float(dist.cdf(k)) for k in knots]
    left = _quad_prob_space(dist, 0.0, p_y, weight, "cdf", points_p)
    right = _quad_prob_space(dist, p_y, 1.0, weight, "survival", points_p)
    return extra + left + right


# ---------------------------------------------------------------------------
# Survival-squared tail integral and the quantile-weight decomposition
# ---------------------------------------------------------------------------


def _normal_tail_sq(s):
    """int_s^inf ndtr(-z)^2 dz in closed form."""
    sb = ndtr(-s)
    return -s * sb * sb + 2.0 * _phi(s) * sb - ndtr(-s * math.sqrt(2.0)) / _SQRT_PI


def survival_sq_tail(dist: Distribution, q: float) -> float:
    """int_q^inf survival(x)^2 dx.

    Closed form for generalized Pareto (shape < 2), exponential and normal;
    quadrature otherwise. Diverges (and raises) for Pareto shape >= 2.
    """
    q = float(q)
    lo, hi = dist.support()
    head = max(lo - q, 0.0)  # survival == 1 below the support
    qc = max(q, lo)
    if isinstance(dist, GeneralizedPareto):
        if dist.shape >= 2.0:
            raise DivergenceError("tail integral diverges for Pareto shape >= 2")
        sbar = float(dist.survival(qc))
        if sbar == 0.0:
            return head
        return head + dist.scale * sbar ** (2.0 - dist.shape) / (2.0 - dist.shape)
    if isinstance(dist, Exponential):
        return head + math.exp(-2.0 * dist.rate * qc) / (2.0 * dist.rate)
    if isinstance(dist, Normal):
        return head + dist.std * _normal_tail_sq((qc - dist.mean_) / dist.std)
    if math.isfinite(hi):
        return head + _quad(
            lambda x: float(dist.survival(x)) ** 2, qc, hi, points=_pdf_knots(dist)
        )
    # probability space: int_0^{sbar(q)} p^2 / pdf(Q(1-p)) dp
    sbar = float(dist.survival(qc))

    def integrand(p):
        x = dist.quantile(min(max(1.0 - p, 1e-300), 1.0 - 1e-16))
        d = float(dist.pdf(x))
        return 0.0 if d <= 0.0 else p * p / d

    return head + _quad(integrand, 0.0, sbar)


def _crps_diff(dist: Distribution, q: float, y: float) -> float:
    """CRPS(F, y) - CRPS(F, q) for y >= q, finite even for 1 <= shape < 2."""
    try:
        return float(crps_closed(dist, y)) - float(crps_closed(dist, q))
    except (UnsupportedFamilyError, InfiniteMeanError):
        pass
    return _quad(
        lambda x: float(dist.cdf(x)) ** 2 - float(dist.survival(x)) ** 2,
        q,
        y,
        points=_pdf_knots(dist),
    )


def wcrps_quantile(dist: Distribution, y, q: float):
    """CRPS weighted by the indicator w(x) = 1{x >= q}; vectorized over y.

    Equals ``survival_sq_tail(dist, q)`` when y < q, and adds
    ``CRPS(F, y) - CRPS(F, q)`` when y >= q, so it is continuous at y = q.
    Finite for any Pareto shape < 2.
    """
    tail = survival_sq_tail(dist, q)
    y_arr = np.asarray(y, dtype=float)
    scalar = y_arr.ndim == 0
    try:
        cq = crps_closed(dist, float(q))
        out = tail + np.where(y_arr >= q, crps_closed(dist, y_arr) - cq, 0.0)
    except (UnsupportedFamilyError, InfiniteMeanError):
        flat = np.atleast_1d(y_arr)
        out = np.full(flat.shape, tail)
        for i, yi in enumerate(flat):
            if yi >= q:
                out[i] += _crps_diff(dist, q, float(yi))
        out = out.reshape(y_arr.shape)
    return float(out) if scalar else out


def crps_shift_constant(dist: Distribution, q: float) -> float:
    """int_{-inf}^q F(x)^2 dx: the constant separating CRPS from its
    quantile-weighted form above the threshold (non-negative, non-decreasing
    in q, zero at the lower end of the support)."""
    q = float(q)
    lo, hi = dist.support()
    if q <= lo:
        return 0.0
    qc = min(q, hi)
    tail_extra = max(q - hi, 0.0)  # cdf == 1 above the support
    try:
        val = float(crps_closed(dist, qc)) - survival_sq_tail(dist, qc)
        return val + tail_extra
    except (UnsupportedFamilyError, InfiniteMeanError):
        pass
    if math.isfinite(lo):
        return tail_extra + _quad(
            lambda x: float(dist.cdf(x)) ** 2, lo, qc, points=_pdf_knots(dist)
        )
    p_q = float(dist.cdf(qc))

    def integrand(p):
        x = dist.quantile(min(max(p, 1e-300), 1.0 - 1e-16))
        d = float(dist.pdf(x))
        return 0.0 if d <= 0.0 else p * p / d

    return tail_extra + _quad(integrand, 0.0, p_q)


# ---------------------------------------------------------------------------
# Quantile-weight batch path
# ---------------------------------------------------------------------------


def _gp_tail_sq_kernel(scale, shape, q):
    """Vectorized int_q^inf survival^2 for generalized Pareto rows, q >= 0."""
    scale = np.asarray(scale, dtype=float)
    shape = np.asarray(shape, dtype=float)
    if np.any(shape >= 2.0):
        raise DivergenceError("tail integral diverges for Pareto shape >= 2")
    exp_like = np.abs(shape) < _GP_EPS
    safe = np.where(exp_like, 0.5, shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_sbar = np.where(
            exp_like,
            -q / scale,
            -np.log1p(np.maximum(safe * q / scale, -1.0 + 1e-15)) / safe,
        )
    return scale * np.exp((2.0 - shape) * log_sbar) / (2.0 - shape)


class _MixtureTailTable:
    """Tabulated s -> int_s^inf Fbar0(t)^2 dt for a zero-based normal mixture."""

    def __init__(self, w, s1, s2, delta, s_lo, s_hi, n=8193):
        pad = 1.0
        grid = np.linspace(s_lo - pad, s_hi + pad, n)
        fbar = w * ndtr(-grid / s1) + (1.0 - w) * ndtr(-(grid - delta) / s2)
        sq = fbar * fbar
        rem, _ = integrate.quad(
            lambda t: (w * ndtr(-t / s1) + (1.0 - w) * ndtr(-(t - delta) / s2)) ** 2,
            grid[-1],
            np.inf,
        )
        # cumulative from the right edge inward
        seg = 0.5 * (sq[1:] + sq[:-1]) * np.diff(grid)
        tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]]) + rem
        self.grid = grid
        self.tail = tail

    def __call__(self, s):
        return np.interp(s, self.grid, self.tail)


def wcrps_quantile_batch(family: str, params: np.ndarray, y: np.ndarray, q: float):
    """Quantile-indicator weighted CRPS for a same-family forecast column.

    Exact closed forms for exponential / Pareto / normal rows; the
    two-component normal mixture uses a dense tail table per unique
    (w, std1, std2, mean-offset) signature, accurate to ~1e-7 (fine for the
    Monte Carlo summaries this path exists for; use :func:`wcrps_quantile`
    for scalar full-precision values).
    """
    params = np.asarray(params, dtype=float)
    y = np.asarray(y, dtype=float)
    q = float(q)
    above = y >= q
    if family == "exponential":
        lam = params[:, 0]
        tail = np.exp(-2.0 * lam * max(q, 0.0)) / (2.0 * lam) + max(-q, 0.0)
        diff = _crps_exponential_kernel(lam, y) - _crps_exponential_kernel(lam, q)
        return tail + np.where(above, diff, 0.0)
    if family == "generalized_pareto":
        scale, shape = params[:, 0], params[:, 1]
        tail = _gp_tail_sq_kernel(scale, shape, max(q, 0.0)) + max(-q, 0.0)
        diff = _crps_gp_kernel(scale, shape, y) - _crps_gp_kernel(scale, shape, q)
        return tail + np.where(above, diff, 0.0)
    if family == "normal":
        mu, sd = params[:, 0], params[:, 1]
        tail = sd * _normal_tail_sq((q - mu) / sd)
        diff = _crps_normal_kernel(mu, sd, y) - _crps_normal_kernel(mu, sd, q)
        return tail + np.where(above, diff, 0.0)
    if family == "normal_mixture2":
        w, m1, s1, m2, s2 = (params[:, i] for i in range(5))
        delta = m2 - m1
        s = q - m1
        key = np.round(np.column_stack([w, s1, s2, delta]), 12)
        tail = np.empty(len(y))
        for row in np.unique(key, axis=0):
            sel = np.all(key == row, axis=1)
            table = _MixtureTailTable(
                row[0], row[1], row[2], row[3], float(np.min(s[sel])), float(np.max(s[sel]))
            )
            tail[sel] = table(s[sel])
        diff = _crps_mixture2_kernel(w, m1, s1, m2, s2, y) - _crps_mixture2_kernel(
            w, m1, s1, m2, s2, q
        )
        return tail + np.where(above, diff, 0.0)
    raise UnsupportedFamilyError(
        f"no quantile-weight batch path for family {family!r}"
    )


# ---------------------------------------------------------------------------
# Ensemble CRPS
# ---------------------------------------------------------------------------


def crps_ensemble(members, y):
    """Empirical-distribution CRPS from ensemble members.

    CRPS = mean|x_i - y| - 0.5 * mean|x_i - x_j|, computed O(m log m) via the
    sorted representation of the pairwise term. ``members`` may be a single
    vector (scalar y) or a (T, m) matrix paired with a length-T ``y``.
    """
    arr = np.asarray(members, dtype=float)
    if arr.ndim == 1:
        if arr.size == 0:
            raise ParameterError("ensemble must contain at least one member")
        yv = float(y)
        xs = np.sort(arr)
        m = xs.size
        term1 = np.abs(xs - yv).mean()
        k = np.arange(1, m + 1)
        term2 = np.sum((2 * k - m - 1) * xs) / (m * m)
        return float(term1 - term2)
    if arr.ndim != 2 or arr.shape[1] == 0:
        raise ParameterError("ensemble batch must be a (T, m) matrix")
    yv = np.asarray(y, dtype=float)
    xs = np.sort(arr, axis=1)
    m = arr.shape[1]
    term1 = np.abs(xs - yv[:, None]).mean(axis=1)
    k = np.arange(1, m + 1)
    term2 = xs @ (2 * k - m - 1) / (m * m)
    return term1 - term2
