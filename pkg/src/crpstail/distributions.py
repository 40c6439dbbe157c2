"""Forecast distribution families.

Every family exposes the same small surface: ``cdf``, ``pdf``, ``survival``,
``quantile``, ``sample``, ``mean``, ``mean_excess`` and ``support``. All
point-wise methods accept scalars or numpy arrays and return the matching
shape. Heavy-tail families compute ``survival`` natively (not as ``1 - cdf``)
so tail probabilities keep relative precision.

Families
--------
Normal(mean, std)
NormalMixture2(w, mean1, std1, mean2, std2)      two-component normal mixture
Exponential(rate)
Gamma(shape, rate)
GeneralizedPareto(scale, shape)                  shape >= 0 heavy tail, < 0 bounded
UniformMixture((w, a, b), ...)                   mixture of uniform components
Spliced(base, replacement, splice_point)         base below u, rescaled tail above
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import ClassVar, NamedTuple, Sequence

import numpy as np
from scipy import integrate
from scipy.optimize import brentq
from scipy.special import gammainc, gammaincinv, ndtr, ndtri

from .errors import (
    ConditioningError,
    DomainError,
    ParameterError,
    UnsupportedFamilyError,
)

__all__ = [
    "Distribution",
    "Normal",
    "NormalMixture2",
    "Exponential",
    "Gamma",
    "GeneralizedPareto",
    "UniformMixture",
    "Spliced",
    "DistEval",
    "evaluate",
    "from_family",
]

# Below this |shape| the generalized Pareto switches to its exponential limit form.
_GP_SHAPE_EPS = 1e-8


def _prepare(x):
    """Return (array, was_scalar) for a point-wise method argument."""
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _finish(arr, scalar):
    return float(arr) if scalar else arr


def _check_prob(p):
    arr, scalar = _prepare(p)
    if np.any((arr <= 0.0) | (arr >= 1.0)) or np.any(~np.isfinite(arr)):
        raise DomainError("probability level must lie strictly inside (0, 1)")
    return arr, scalar


def _as_generator(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


class Distribution(ABC):
    """Abstract base for all forecast distribution families."""

    family: ClassVar[str]

    # -- point-wise surface -------------------------------------------------

    @abstractmethod
    def cdf(self, x): ...

    @abstractmethod
    def pdf(self, x): ...

    def survival(self, x):
        x, scalar = _prepare(x)
        return _finish(1.0 - self.cdf(x), scalar)

    @abstractmethod
    def quantile(self, p): ...

    @abstractmethod
    def support(self) -> tuple[float, float]: ...

    @abstractmethod
    def mean(self) -> float: ...

    # -- derived ------------------------------------------------------------

    @property
    def params(self) -> list[float]:
        raise UnsupportedFamilyError(
            f"{self.family} does not have a flat parameter vector"
        )

    def sample(self, n: int, rng) -> np.ndarray:
        """Draw ``n`` values by inverse-cdf from caller-owned RNG state."""
        gen = _as_generator(rng)
        u = np.clip(gen.random(n), 1e-300, 1.0 - 1e-16)
        return np.asarray(self.quantile(u), dtype=float)

    def mean_excess(self, u: float) -> float:
        """E(X - u | X > u), by quadrature of the survival function.

        Families with a closed form (generalized Pareto, exponential)
        override this.
        """
        s_u = float(self.survival(u))
        if s_u <= 0.0:
            raise ConditioningError(f"survival({u}) = 0; conditional mean undefined")
        hi = self.support()[1]
        val, _ = integrate.quad(
            lambda x: float(self.survival(x)), u, hi, limit=200
        )
        return val / s_u


class DistEval(NamedTuple):
    cdf: float | np.ndarray
    pdf: float | np.ndarray
    survival: float | np.ndarray


def evaluate(dist: Distribution, x) -> DistEval:
    """Evaluate cdf, pdf and survival at ``x`` in one call."""
    return DistEval(dist.cdf(x), dist.pdf(x), dist.survival(x))


# ---------------------------------------------------------------------------
# Normal and two-component normal mixture
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Normal(Distribution):
    mean_: float
    std: float

    family: ClassVar[str] = "normal"

    def __post_init__(self):
        if not (self.std > 0.0 and np.isfinite(self.std) and np.isfinite(self.mean_)):
            raise ParameterError(f"normal requires finite mean and std > 0, got {self}")

    @property
    def params(self):
        return [self.mean_, self.std]

    def cdf(self, x):
        x, scalar = _prepare(x)
        return _finish(ndtr((x - self.mean_) / self.std), scalar)

    def survival(self, x):
        x, scalar = _prepare(x)
        return _finish(ndtr(-(x - self.mean_) / self.std), scalar)

    def pdf(self, x):
        x, scalar = _prepare(x)
        z = (x - self.mean_) / self.std
        return _finish(np.exp(-0.5 * z * z) / (self.std * math.sqrt(2.0 * math.pi)), scalar)

    def quantile(self, p):
        p, scalar = _check_prob(p)
        return _finish(self.mean_ + self.std * ndtri(p), scalar)

    def support(self):
        return (-math.inf, math.inf)

    def mean(self):
        return self.mean_


@dataclass(frozen=True)
class NormalMixture2(Distribution):
    """w * Normal(mean1, std1) + (1 - w) * Normal(mean2, std2)."""

    w: float
    mean1: float
    std1: float
    mean2: float
    std2: float

    family: ClassVar[str] = "normal_mixture2"

    def __post_init__(self):
        if not (0.0 <= self.w <= 1.0):
            raise ParameterError(f"mixture weight must lie in [0, 1], got {self.w}")
        if not (self.std1 > 0.0 and self.std2 > 0.0):
            raise ParameterError("mixture component stds must be positive")

    @property
    def params(self):
        return [self.w, self.mean1, self.std1, self.mean2, self.std2]

    def _components(self):
        return (
            (self.w, self.mean1, self.std1),
            (1.0 - self.w, self.mean2, self.std2),
        )

    def cdf(self, x):
        x, scalar = _prepare(x)
        out = sum(w * ndtr((x - m) / s) for w, m, s in self._components())
        return _finish(out, scalar)

    def survival(self, x):
        x, scalar = _prepare(x)
        out = sum(w * ndtr(-(x - m) / s) for w, m, s in self._components())
        return _finish(out, scalar)

    def pdf(self, x):
        x, scalar = _prepare(x)
        out = np.zeros_like(x, dtype=float)
        for w, m, s in self._components():
            z = (x - m) / s
            out = out + w * np.exp(-0.5 * z * z) / (s * math.sqrt(2.0 * math.pi))
        return _finish(out, scalar)

    def quantile(self, p):
        p, scalar = _check_prob(p)
        flat = np.atleast_1d(p)
        out = np.empty_like(flat)
        for i, pi in enumerate(flat):
            # component quantiles bracket the mixture quantile
            qs = [m + s * ndtri(pi) for _, m, s in self._components()]
            lo, hi = min(qs), max(qs)
            if hi - lo < 1e-14:
                out[i] = lo
            else:
                out[i] = brentq(
                    lambda x: self.cdf(x) - pi, lo, hi, xtol=1e-12, rtol=1e-14
                )
        out = out.reshape(np.shape(p))
        return _finish(out, scalar)

    def sample(self, n, rng):
        gen = _as_generator(rng)
        pick = gen.random(n)
        u = np.clip(gen.random(n), 1e-300, 1.0 - 1e-16)
        z = ndtri(u)
        first = pick < self.w
        out = np.where(
            first, self.mean1 + self.std1 * z, self.mean2 + self.std2 * z
        )
        return out

    def support(self):
        return (-math.inf, math.inf)

    def mean(self):
        return self.w * self.mean1 + (1.0 - self.w) * self.mean2


# ---------------------------------------------------------------------------
# Exponential / Gamma
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Exponential(Distribution):
    rate: float

    family: ClassVar[str] = "exponential"

    def __post_init__(self):
        if not (self.rate > 0.0 and np.isfinite(self.rate)):
            raise ParameterError(f"exponential rate must be positive, got {self.rate}")

    @property
    def params(self):
        return [self.rate]

    def cdf(self, x):
        x, scalar = _prepare(x)
        return _finish(np.where(x <= 0.0, 0.0, -np.expm1(-self.rate * np.maximum(x, 0.0))), scalar)

    def survival(self, x):
        x, scalar = _prepare(x)
        return _finish(np.where(x <= 0.0, 1.0, np.exp(-self.rate * np.maximum(x, 0.0))), scalar)

    def pdf(self, x):
        x, scalar = _prepare(x)
        return _finish(np.where(x < 0.0, 0.0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0))), scalar)

    def quantile(self, p):
        p, scalar = _check_prob(p)
        return _finish(-np.log1p(-p) / self.rate, scalar)

    def support(self):
        return (0.0, math.inf)

    def mean(self):
        return 1.0 / self.rate

    def mean_excess(self, u):
        # memoryless, so any finite threshold works — the survival may
        # underflow to 0.0 long before the conditional law degenerates
        if not np.isfinite(u):
            raise ConditioningError(f"conditional mean undefined at u = {u}")
        return 1.0 / self.rate


@dataclass(frozen=True)
class Gamma(Distribution):
    shape: float
    rate: float

    family: ClassVar[str] = "gamma"

    def __post_init__(self):
        if not (self.shape > 0.0 and self.rate > 0.0):
            raise ParameterError("gamma requires shape > 0 and rate > 0")

    @property
    def params(self):
        return [self.shape, self.rate]

    def cdf(self, x):
        x, scalar = _prepare(x)
        return _finish(gammainc(self.shape, self.rate * np.maximum(x, 0.0)), scalar)

    def pdf(self, x):
        x, scalar = _prepare(x)
        xp = np.maximum(x, 1e-300)
        logpdf = (
            self.shape * math.log(self.rate)
            + (self.shape - 1.0) * np.log(xp)
            - self.rate * xp
            - math.lgamma(self.shape)
        )
        return _finish(np.where(x < 0.0, 0.0, np.exp(logpdf)), scalar)

    def quantile(self, p):
        p, scalar = _check_prob(p)
        return _finish(gammaincinv(self.shape, p) / self.rate, scalar)

    def support(self):
        return (0.0, math.inf)

    def mean(self):
        return self.shape / self.rate


# ---------------------------------------------------------------------------
# Generalized Pareto
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneralizedPareto(Distribution):
    """Generalized Pareto on [0, inf) (shape >= 0) or [0, -scale/shape] (shape < 0).

    Survival (1 + shape*x/scale)^(-1/shape); the shape -> 0 limit is the
    exponential with mean ``scale`` and is taken automatically for
    |shape| < 1e-8.
    """

    scale: float
    shape: float

    family: ClassVar[str] = "generalized_pareto"

    def __post_init__(self):
        if not (self.scale > 0.0 and np.isfinite(self.scale) and np.isfinite(self.shape)):
            raise ParameterError(
                f"generalized Pareto requires scale > 0 and finite shape, got {self}"
            )

    @property
    def params(self):
        return [self.scale, self.shape]

    def _is_exp(self):
        return abs(self.shape) < _GP_SHAPE_EPS

    def _log_survival(self, x):
        """log of survival on x >= 0, -inf beyond a finite upper endpoint."""
        if self._is_exp():
            return -x / self.scale
        z = self.shape * x / self.scale
        if self.shape < 0.0:
            inside = z > -1.0
            out = np.full(np.shape(x), -np.inf)
            out = np.where(inside, -np.log1p(np.where(inside, z, 0.0)) / self.shape, out)
            return out
        return -np.log1p(z) / self.shape

    def survival(self, x):
        x, scalar = _prepare(x)
        xx = np.maximum(x, 0.0)
        s = np.exp(self._log_survival(xx))
        return _finish(np.where(x <= 0.0, 1.0, s), scalar)

    def cdf(self, x):
        x, scalar = _prepare(x)
        xx = np.maximum(x, 0.0)
        if self._is_exp():
            c = -np.expm1(-xx / self.scale)
        else:
            c = -np.expm1(self._log_survival(xx))
        return _finish(np.where(x <= 0.0, 0.0, c), scalar)

    def pdf(self, x):
        x, scalar = _prepare(x)
        xx = np.maximum(x, 0.0)
        if self._is_exp():
            d = np.exp(-xx / self.scale) / self.scale
        else:
            z = self.shape * xx / self.scale
            if self.shape < 0.0:
                inside = z > -1.0
                d = np.where(
                    inside,
                    np.exp(-(1.0 / self.shape + 1.0) * np.log1p(np.where(inside, z, 0.0)))
                    / self.scale,
                    0.0,
                )
            else:
                d = np.exp(-(1.0 / self.shape + 1.0) * np.log1p(z)) / self.scale
        return _finish(np.where(x < 0.0, 0.0, d), scalar)

    def quantile(self, p):
        p, scalar = _check_prob(p)
        if self._is_exp():
            out = -self.scale * np.log1p(-p)
        else:
            out = self.scale / self.shape * np.expm1(-self.shape * np.log1p(-p))
        return _finish(out, scalar)

    def support(self):
        if self.shape < -_GP_SHAPE_EPS:
            return (0.0, -self.scale / self.shape)
        return (0.0, math.inf)

    def mean(self):
        if self.shape >= 1.0:
            return math.inf
        return self.scale / (1.0 - self.shape)

    def mean_excess(self, u):
        """(scale + shape*u) / (1 - shape); requires shape < 1 and u in support."""
        if self.shape >= 1.0:
            return math.inf
        u = float(u)
        # guard on the support endpoint, not on the floating-point survival,
        # which underflows to 0.0 far inside an infinite support
        if not np.isfinite(u) or u >= self.support()[1]:
            raise ConditioningError(f"conditional mean undefined at u = {u}")
        uu = max(u, 0.0)
        return (self.scale + self.shape * uu) / (1.0 - self.shape)


# ---------------------------------------------------------------------------
# Uniform mixture
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformMixture(Distribution):
    """Mixture of uniform components given as (weight, low, high) triples."""

    components: tuple[tuple[float, float, float], ...]

    family: ClassVar[str] = "uniform_mixture"

    def __post_init__(self):
        comps = tuple(tuple(map(float, c)) for c in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ParameterError("uniform mixture needs at least one component")
        for w, a, b in comps:
            if not (w >= 0.0 and b > a):
                raise ParameterError(f"bad uniform component (w={w}, a={a}, b={b})")
        total = sum(w for w, _, _ in comps)
        if abs(total - 1.0) > 1e-9:
            raise ParameterError(f"component weights must sum to 1, got {total}")

    @property
    def params(self):
        return [v for comp in self.components for v in comp]

    def cdf(self, x):
        x, scalar = _prepare(x)
        out = np.zeros_like(x, dtype=float)
        for w, a, b in self.components:
            out = out + w * np.clip((x - a) / (b - a), 0.0, 1.0)
        return _finish(out, scalar)

    def pdf(self, x):
        x, scalar = _prepare(x)
        out = np.zeros_like(x, dtype=float)
        for w, a, b in self.components:
            out = out + np.where((x >= a) & (x < b), w / (b - a), 0.0)
        return _finish(out, scalar)

    def quantile(self, p):
        p, scalar = _check_prob(p)
        knots = np.unique(
            np.concatenate([[a, b] for _, a, b in self.components])
        )
        cdfk = np.asarray(self.cdf(knots))
        flat = np.atleast_1d(p).ravel()
        out = np.empty_like(flat)
        for i, pi in enumerate(flat):
            j = int(np.searchsorted(cdfk, pi, side="left"))
            if j == 0:
                out[i] = knots[0]
                continue
            x0, x1 = knots[j - 1], knots[j]
            c0, c1 = cdfk[j - 1], cdfk[j]
            out[i] = x0 if c1 == c0 else x0 + (pi - c0) * (x1 - x0) / (c1 - c0)
        out = out.reshape(np.shape(p))
        return _finish(out, scalar)

    def sample(self, n, rng):
        gen = _as_generator(rng)
        weights = np.array([w for w, _, _ in self.components])
        edges = np.cumsum(weights)
        pick = np.searchsorted(edges, gen.random(n), side="right")
        pick = np.minimum(pick, len(self.components) - 1)
        u = gen.random(n)
        a = np.array([c[1] for c in self.components])[pick]
        b = np.array([c[2] for c in self.components])[pick]
        return a + u * (b - a)

    def support(self):
        return (
            min(a for _, a, _ in self.components),
            max(b for _, _, b in self.components),
        )

    def mean(self):
        return sum(w * 0.5 * (a + b) for w, a, b in self.components)


# ---------------------------------------------------------------------------
# Spliced tail replacement
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Spliced(Distribution):
    """Base distribution below ``splice_point``, rescaled tail law above it.

    cdf(x) = F(x)                                     for x <= u
             1 - H_bar(x - u) * F_bar(u)              for x >  u

    where F is the base, H the replacement tail law (supported on [0, inf))
    and u the splice point. The construction keeps total mass 1 and is
    continuous at u by design; validity of a *stochastically dominated* tail
    replacement is checked by :func:`crpstail.tail_analysis.splice_tail`.
    """

    base: Distribution
    replacement: Distribution
    splice_point: float

    family: ClassVar[str] = "spliced"

    def __post_init__(self):
        if not np.isfinite(self.splice_point):
            raise ParameterError("splice point must be finite")
        if float(self.base.survival(self.splice_point)) <= 0.0:
            raise ParameterError("base distribution has no mass above the splice point")
        rlo, _ = self.replacement.support()
        if rlo < 0.0:
            raise ParameterError("replacement tail law must be supported on [0, inf)")

    def _tail_mass(self):
        return float(self.base.survival(self.splice_point))

    def cdf(self, x):
        x, scalar = _prepare(x)
        below = np.asarray(self.base.cdf(x), dtype=float)
        above = 1.0 - self._tail_mass() * np.asarray(
            self.replacement.survival(np.maximum(x - self.splice_point, 0.0)),
            dtype=float,
        )
        return _finish(np.where(x <= self.splice_point, below, above), scalar)

    def survival(self, x):
        x, scalar = _prepare(x)
        below = np.asarray(self.base.survival(x), dtype=float)
        above = self._tail_mass() * np.asarray(
            self.replacement.survival(np.maximum(x - self.splice_point, 0.0)),
            dtype=float,
        )
        return _finish(np.where(x <= self.splice_point, below, above), scalar)

    def pdf(self, x):
        x, scalar = _prepare(x)
        below = np.asarray(self.base.pdf(x), dtype=float)
        above = self._tail_mass() * np.asarray(
            self.replacement.pdf(np.maximum(x - self.splice_point, 0.0)), dtype=float
        )
        return _finish(np.where(x <= self.splice_point, below, above), scalar)

    def quantile(self, p):
        p, scalar = _check_prob(p)
        s_u = self._tail_mass()
        p_u = 1.0 - s_u
        flat = np.atleast_1d(p).ravel()
        out = np.empty_like(flat)
        lower = flat <= p_u
        if np.any(lower):
            out[lower] = np.atleast_1d(self.base.quantile(np.clip(flat[lower], 1e-300, p_u)))
        if np.any(~lower):
            inner = 1.0 - (1.0 - flat[~lower]) / s_u
            inner = np.clip(inner, 1e-300, 1.0 - 1e-16)
            out[~lower] = self.splice_point + np.atleast_1d(self.replacement.quantile(inner))
        out = out.reshape(np.shape(p))
        return _finish(out, scalar)

    def support(self):
        lo = self.base.support()[0]
        rhi = self.replacement.support()[1]
        hi = math.inf if math.isinf(rhi) else self.splice_point + rhi
        return (lo, hi)

    def mean(self):
        # E = E_F[X] + F_bar(u) * (E_H[X] - base mean excess at u)
        mu_h = self.replacement.mean()
        if math.isinf(mu_h):
            return math.inf
        return self.base.mean() + self._tail_mass() * (
            mu_h - self.base.mean_excess(self.splice_point)
        )

    def mean_excess(self, u):
        if u >= self.splice_point:
            return self.replacement.mean_excess(u - self.splice_point)
        return super().mean_excess(u)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

_FAMILIES = {
    "normal": (Normal, 2),
    "normal_mixture2": (NormalMixture2, 5),
    "exponential": (Exponential, 1),
    "gamma": (Gamma, 2),
    "generalized_pareto": (GeneralizedPareto, 2),
}


def from_family(family: str, params: Sequence[float]) -> Distribution:
    """Build a distribution from its family tag and flat parameter vector."""
    if family == "uniform_mixture":
        vals = list(map(float, params))
        if len(vals) % 3 != 0 or not vals:
            raise ParameterError(
                "uniform_mixture params must be (weight, low, high) triples"
            )
        comps = tuple(tuple(vals[i : i + 3]) for i in range(0, len(vals), 3))
        return UniformMixture(comps)
    if family not in _FAMILIES:
        raise UnsupportedFamilyError(f"unknown distribution family {family!r}")
    cls, nparams = _FAMILIES[family]
    vals = list(map(float, params))
    if len(vals) != nparams:
        raise ParameterError(
            f"{family} expects {nparams} parameters, got {len(vals)}"
        )
    return cls(*vals)
