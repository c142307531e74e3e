"""Point solutions of TU cost games: least-square values and the Shapley value."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import coalitions
from .game import CostGame


@dataclass(frozen=True)
class WeightProfile:
    """Size-symmetric coalition weights ``alpha(s)`` for ``s = 1 .. n-1``."""

    n: int
    alpha: tuple[float, ...]

    def __post_init__(self):
        coalitions.check_players(self.n, minimum=2)
        alpha = tuple(float(a) for a in self.alpha)
        if len(alpha) != self.n - 1:
            raise ValueError(f"need {self.n - 1} size weights, got {len(alpha)}")
        if not all(a > 0 for a in alpha):
            raise ValueError("size weights must be positive")
        object.__setattr__(self, "alpha", alpha)

    @property
    def beta(self) -> float:
        return sum(a * math.comb(self.n - 2, s - 1) for s, a in enumerate(self.alpha, start=1))

    def coalition_weights(self) -> np.ndarray:
        """Weight of every coalition indexed by ``mask - 1``; the grand coalition gets 0."""
        a = np.array((0.0,) + self.alpha + (0.0,))
        return a[coalitions.sizes(self.n)]


def uniform_weights(n: int) -> WeightProfile:
    return WeightProfile(n, (1.0,) * (n - 1))


def shapley_weight_profile(n: int) -> WeightProfile:
    """Weights ``1 / C(n-2, s-1)`` under which the least-square value is the Shapley value."""
    return WeightProfile(n, tuple(1.0 / math.comb(n - 2, s - 1) for s in range(1, n)))


def ls_value(game: CostGame, weights: WeightProfile | None = None) -> np.ndarray:
    """Least-square value from its closed form.

    ``LS_i = c(N)/n + [sum_{S∋i} (n-s) a_S c(S) - sum_{S∌i} s a_S c(S)] / (n beta)``
    """
    n = game.n
    w = weights or uniform_weights(n)
    A = coalitions.membership(n)
    s = coalitions.sizes(n)
    wc = w.coalition_weights() * game.costs
    inside = A.T @ ((n - s) * wc)
    outside = (1.0 - A).T @ (s * wc)
    return game.grand / n + (inside - outside) / (n * w.beta)


def ls_projection_oracle(game: CostGame, weights: WeightProfile | None = None) -> np.ndarray:
    """Weighted least squares ``min sum_S a_S (c(S) - x(S))^2`` s.t. ``x(N) = c(N)``.

    Solved through its first-order (KKT) linear system; independent of ``ls_value``.
    """
    n = game.n
    w = weights or uniform_weights(n)
    A = coalitions.membership(n)
    alpha = w.coalition_weights()
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = A.T @ (alpha[:, None] * A)
    kkt[:n, n] = kkt[n, :n] = 1.0
    rhs = np.append(A.T @ (alpha * game.costs), game.grand)
    assert np.linalg.matrix_rank(kkt) == n + 1, "singular least-squares system"
    return np.linalg.solve(kkt, rhs)[:n]


def shapley_value(game: CostGame) -> np.ndarray:
    n = game.n
    fact = [math.factorial(k) for k in range(n + 1)]
    out = np.zeros(n)
    for mask in coalitions.masks(n):
        s = coalitions.size(mask)
        weight = fact[s - 1] * fact[n - s] / fact[n]
        for i in coalitions.members(mask):
            rest = mask & ~(1 << i)
            out[i] += weight * (game(mask) - (game(rest) if rest else 0.0))
    return out


def weighted_objective(game: CostGame, x, weights: WeightProfile | None = None) -> float:
    """``sum_{S proper} a_S (x(S) - c(S))^2``."""
    w = weights or uniform_weights(game.n)
    r = coalitions.membership(game.n) @ np.asarray(x, dtype=float) - game.costs
    return float(np.sum(w.coalition_weights() * r * r))
