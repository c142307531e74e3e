"""Core membership, least core, efficiency bands and stochastic-core estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from . import coalitions
from .errors import DomainError, LPError
from .game import CostGame
from .lp import linprog

CORE_TOL = 1e-9


@dataclass(frozen=True)
class LeastCoreResult:
    epsilon: float
    witness: np.ndarray

    @property
    def balanced(self) -> bool:
        return self.epsilon <= CORE_TOL


@dataclass(frozen=True)
class EfficiencyBand:
    beta: float
    phi: float


def excesses(game: CostGame, x) -> np.ndarray:
    """``x(S) - c(S)`` for the proper coalitions, indexed by ``mask - 1``."""
    x = np.asarray(x, dtype=float)
    return (coalitions.membership(game.n)[:-1] @ x) - game.costs[:-1]


def max_excess(game: CostGame, x) -> float:
    return float(excesses(game, x).max())


def core_membership(game: CostGame, x, tol: float = CORE_TOL) -> bool:
    if tol < 0:
        raise DomainError("tolerance must be nonnegative")
    x = np.asarray(x, dtype=float)
    return bool(abs(x.sum() - game.grand) <= tol and max_excess(game, x) <= tol)


def least_core(game: CostGame) -> LeastCoreResult:
    """Solve ``min eps`` s.t. ``x(S) <= c(S) + eps`` (proper S), ``x(N) = c(N)``.

    Variables are ``(x_1..x_n, eps)``, all free.  The witness is re-checked
    against its own constraints after the solve.
    """
    n = game.n
    if n < 2:
        raise DomainError("the least core needs at least two players")
    A = coalitions.membership(n)[:-1]
    A_ub = np.hstack([A, -np.ones((len(A), 1))])
    A_eq = np.append(np.ones(n), 0.0)[None, :]
    c = np.zeros(n + 1)
    c[-1] = 1.0
    res = linprog(c, A_ub, game.costs[:-1], A_eq, [game.grand], free=np.ones(n + 1, bool))
    x, eps = res.x[:n], float(res.x[n])
    scale = max(1.0, float(np.abs(game.costs).max()))
    if abs(x.sum() - game.grand) > CORE_TOL * scale or max_excess(game, x) > eps + CORE_TOL * scale:
        raise LPError("least-core witness violates its constraints", {"witness": x.tolist(), "epsilon": eps, "game": game.to_dict()})
    return LeastCoreResult(eps, x)


def is_balanced(game: CostGame) -> bool:
    return least_core(game).epsilon <= CORE_TOL


def tightened(game: CostGame, eps: float) -> CostGame:
    """Shift every proper coalition's cost by ``eps``; the grand coalition is unchanged."""
    costs = game.costs.copy()
    costs[:-1] += eps
    return game.with_costs(costs, provenance=f"{game.provenance}+eps")


def phi_quantile(samples, center: float, beta: float) -> EfficiencyBand:
    """Empirical ``inf{phi : P[|Y - center| <= phi] >= beta}``.

    Uses the order statistic of ``|Y_m - center|`` at index ``ceil(beta M)``.
    """
    y = np.asarray(samples, dtype=float)
    if y.size == 0:
        raise DomainError("phi_quantile needs at least one sample")
    if not 0 <= beta <= 1:
        raise DomainError(f"beta must be in [0, 1], got {beta!r}")
    if beta == 0:
        return EfficiencyBand(0.0, 0.0)
    dev = np.sort(np.abs(y - center))
    k = min(max(math.ceil(beta * y.size), 1), y.size)
    return EfficiencyBand(float(beta), float(dev[k - 1]))


@dataclass(frozen=True)
class CoreProbability:
    estimate: float
    low: float
    high: float
    hits: int
    replications: int
    mean_grand_cost: float
    efficient: bool


def stochastic_core_probability(
    sampler: Callable[[np.random.Generator], CostGame],
    x,
    eps: float | Callable[[CostGame], float],
    band: EfficiencyBand,
    replications: int,
    rng: np.random.Generator,
) -> CoreProbability:
    """Monte Carlo estimate of ``P[x(S) <= c(S) + eps for all proper S; |x(N) - E c(N)| <= phi]``.

    ``eps`` may be a function of the drawn game.  ``E c(N)`` is estimated by the
    sample mean over the same draws, so the efficiency condition is a single
    0/1 factor.
    """
    if replications < 100:
        raise DomainError("stochastic core probability needs at least 100 replications")
    x = np.asarray(x, dtype=float)
    hits = 0
    grand = np.empty(replications)
    for r in range(replications):
        g = sampler(rng)
        e = eps(g) if callable(eps) else eps
        grand[r] = g.grand
        hits += bool(max_excess(g, x) <= e + CORE_TOL)
    mean_grand = float(grand.mean())
    efficient = abs(x.sum() - mean_grand) <= band.phi + CORE_TOL
    count = hits if efficient else 0
    low, high = proportion_confint(count, replications, alpha=0.05, method="wilson")
    return CoreProbability(count / replications, float(low), float(high), hits, replications, mean_grand, efficient)


def joint_least_core(cost_rows, n: int, center: float, phi: float) -> LeastCoreResult:
    """Smallest ``eps`` such that one ``x`` satisfies ``x(S) <= c_r(S) + eps`` for every row ``r``
    and every proper S, with ``|x(N) - center| <= phi``."""
    rows = np.atleast_2d(np.asarray(cost_rows, dtype=float))
    A = coalitions.membership(n)[:-1]
    k = len(A)
    A_ub = np.vstack(
        [np.hstack([A, -np.ones((k, 1))])] * len(rows)
        + [np.append(np.ones(n), 0.0)[None, :], np.append(-np.ones(n), 0.0)[None, :]]
    )
    b_ub = np.concatenate([r[:-1] for r in rows] + [[center + phi, -(center - phi)]])
    c = np.zeros(n + 1)
    c[-1] = 1.0
    res = linprog(c, A_ub, b_ub, free=np.ones(n + 1, bool))
    return LeastCoreResult(float(res.x[n]), res.x[:n])
