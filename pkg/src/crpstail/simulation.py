"""Two synthetic testbeds with a hidden state and four forecaster archetypes.

Model "nn" (normal location uncertainty):
    hidden    Delta_t ~ N(0, 1)
    obs       Y_t | Delta_t ~ N(Delta_t, 1)
    ideal          N(Delta_t, 1)
    climatological N(0, sqrt(2))              (the exact marginal of Y)
    unfocused      0.5 N(Delta_t, 1) + 0.5 N(Delta_t + tau_t, 1), tau_t = +-2
    extremist      N(Delta_t + 5/2, 1)

Model "ge" (heavy-tail rate uncertainty):
    hidden    Delta_t ~ Gamma(4, 4)           (shape, rate)
    obs       Y_t | Delta_t ~ Exponential(rate Delta_t)
    ideal          Exponential(Delta_t)
    climatological generalized Pareto, scale 1, shape 1/4
                   (the exact marginal of Y: a Gamma-mixed exponential)
    unfocused      Exponential(Delta_t / tau_t),
                   tau_t = (2/3) U[1/2, 1] + (1/3) U[1, 2]  (independent uniforms)
    extremist      Exponential(Delta_t / 1.5)

Every record consumes exactly one Philox counter block (four uniforms:
hidden state, observation, two for the focus multiplier), so streams are
reproducible from (seed, t): simulating [0, T) and then any window [t0, t1)
with the same seed yields bit-identical records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox
from scipy.special import gammaincinv, ndtri

from .errors import DomainError, ParameterError
from .evt import threshold_grid
from .records import RecordBatch
from .scoring import wcrps_quantile_batch

__all__ = [
    "MODELS",
    "FORECASTERS",
    "simulate",
    "RankingCurve",
    "wcrps_ranking_curve",
]

MODELS = ("nn", "ge")
FORECASTERS = ("ideal", "climatological", "unfocused", "extremist")

_UNIFORMS_PER_RECORD = 4


def _uniforms(t: int, seed: int, t0: int) -> np.ndarray:
    """(t, 4) uniforms from the counter-indexed substream of ``seed``.

    Philox.advance moves one 4-word counter block per unit — exactly one
    record's worth of draws — so advancing by t0 lands on record t0.
    """
    gen = Generator(Philox(key=seed))
    if t0:
        gen.bit_generator.advance(t0)
    u = gen.random((t, _UNIFORMS_PER_RECORD))
    return np.clip(u, 1e-17, 1.0 - 1e-16)


def simulate(
    model: str, forecaster: str, t: int, seed: int = 0, t0: int = 0
) -> RecordBatch:
    """Simulate ``t`` records of a model/forecaster pair.

    The observation stream depends only on (model, seed, t0), never on the
    forecaster, so batches simulated with different forecasters but the same
    seed are score-comparable record by record.
    """
    if model not in MODELS:
        raise ParameterError(f"unknown model {model!r} (expected one of {MODELS})")
    if forecaster not in FORECASTERS:
        raise ParameterError(
            f"unknown forecaster {forecaster!r} (expected one of {FORECASTERS})"
        )
    if t <= 0:
        raise DomainError("record count must be positive")
    u = _uniforms(t, seed, t0)
    ts = np.arange(t0, t0 + t, dtype=np.int64)
    if model == "nn":
        return _simulate_nn(forecaster, ts, u)
    return _simulate_ge(forecaster, ts, u)


def _simulate_nn(forecaster, ts, u):
    delta = ndtri(u[:, 0])
    y = delta + ndtri(u[:, 1])
    n = ts.size
    if forecaster == "ideal":
        family, params = "normal", np.column_stack([delta, np.ones(n)])
    elif forecaster == "climatological":
        family = "normal"
        params = np.column_stack([np.zeros(n), np.full(n, math.sqrt(2.0))])
    elif forecaster == "unfocused":
        tau = np.where(u[:, 2] < 0.5, -2.0, 2.0)
        family = "normal_mixture2"
        params = np.column_stack(
            [np.full(n, 0.5), delta, np.ones(n), delta + tau, np.ones(n)]
        )
    else:  # extremist
        family, params = "normal", np.column_stack([delta + 2.5, np.ones(n)])
    return RecordBatch(
        t=ts, y=y, family=family, params=params, hidden=delta, model="nn"
    )


def _simulate_ge(forecaster, ts, u):
    delta = gammaincinv(4.0, u[:, 0]) / 4.0
    y = -np.log1p(-u[:, 1]) / delta
    n = ts.size
    if forecaster == "ideal":
        family, params = "exponential", delta[:, None].copy()
    elif forecaster == "climatological":
        family = "generalized_pareto"
        params = np.tile([1.0, 0.25], (n, 1))
    elif forecaster == "unfocused":
        tau = (2.0 / 3.0) * (0.5 + 0.5 * u[:, 2]) + (1.0 / 3.0) * (1.0 + u[:, 3])
        family, params = "exponential", (delta / tau)[:, None]
    else:  # extremist
        family, params = "exponential", (delta / 1.5)[:, None]
    return RecordBatch(
        t=ts, y=y, family=family, params=params, hidden=delta, model="ge"
    )


@dataclass(frozen=True)
class RankingCurve:
    """Mean quantile-weighted CRPS per forecaster along a threshold grid."""

    model: str
    orders: np.ndarray
    thresholds: np.ndarray
    means: dict[str, np.ndarray]

    def log1p_means(self) -> dict[str, np.ndarray]:
        return {k: np.log1p(v) for k, v in self.means.items()}

    def ranks(self) -> dict[str, np.ndarray]:
        """1 = lowest mean weighted score at that threshold."""
        names = list(self.means)
        stacked = np.vstack([self.means[k] for k in names])
        order = np.argsort(np.argsort(stacked, axis=0), axis=0) + 1
        return {k: order[i] for i, k in enumerate(names)}


def wcrps_ranking_curve(
    model: str,
    t: int,
    quantile_orders,
    seed: int = 0,
    forecasters=FORECASTERS,
) -> RankingCurve:
    """Simulate once per forecaster (shared observation stream) and average
    the quantile-indicator weighted CRPS at each threshold order."""
    orders = np.asarray(quantile_orders, dtype=float)
    batches = {name: simulate(model, name, t, seed) for name in forecasters}
    y = batches[next(iter(batches))].y
    thresholds = threshold_grid(y, orders)
    means = {name: np.empty(orders.size) for name in batches}
    for j, q in enumerate(thresholds):
        for name, batch in batches.items():
            vals = wcrps_quantile_batch(batch.family, batch.params, batch.y, float(q))
            means[name][j] = float(vals.mean())
    return RankingCurve(model=model, orders=orders, thresholds=thresholds, means=means)
