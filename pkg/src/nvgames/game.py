"""Newsvendor cost games: expected (E), realization (R) and dynamic realization (DR).

All three share the frozen order quantities ``q_S`` of the expected game.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import coalitions
from .demand import DemandHistory, DemandModel, coalition_quantiles, coalition_sd, quantile_method, sample_stationary
from .errors import ConfigError, DomainError

DEGENERACY_TOL = 1e-12
MIN_ESTIMATOR_SAMPLES = 1_000


@dataclass(frozen=True)
class Estimator:
    """Monte Carlo settings for quantiles and expected costs."""

    samples: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if self.samples < MIN_ESTIMATOR_SAMPLES:
            raise ConfigError(f"estimator needs at least {MIN_ESTIMATOR_SAMPLES} samples, got {self.samples}")


@dataclass(frozen=True, eq=False)
class CostGame:
    """Characteristic function over the ``2**n - 1`` non-empty coalitions.

    ``costs[mask - 1]`` is the cost of coalition ``mask``.
    """

    n: int
    costs: np.ndarray
    p: float | None = None
    h: float | None = None
    quantities: np.ndarray | None = None
    provenance: str = "synthetic"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        coalitions.check_players(self.n)
        costs = np.array(self.costs, dtype=float)
        if costs.shape != ((1 << self.n) - 1,):
            raise DomainError(f"expected {(1 << self.n) - 1} coalition costs, got shape {costs.shape}")
        if not np.all(np.isfinite(costs)):
            raise DomainError("coalition costs must be finite")
        if np.any(costs < 0):
            raise DomainError("coalition costs must be nonnegative")
        costs.setflags(write=False)
        object.__setattr__(self, "costs", costs)
        if self.quantities is not None:
            q = np.array(self.quantities, dtype=float)
            q.setflags(write=False)
            object.__setattr__(self, "quantities", q)

    def __call__(self, mask: int) -> float:
        return float(self.costs[mask - 1])

    @property
    def grand(self) -> float:
        return float(self.costs[-1])

    def with_costs(self, costs, provenance: str | None = None) -> CostGame:
        return CostGame(self.n, costs, self.p, self.h, self.quantities, provenance or self.provenance, dict(self.metadata))

    def to_dict(self) -> dict:
        doc = {
            "n": self.n,
            "p": self.p,
            "h": self.h,
            "provenance": self.provenance,
            "costs": {str(m): float(self.costs[m - 1]) for m in coalitions.masks(self.n)},
            "order_quantities": None
            if self.quantities is None
            else {str(m): float(self.quantities[m - 1]) for m in coalitions.masks(self.n)},
            "metadata": self.metadata,
        }
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> CostGame:
        try:
            n = int(doc["n"])
            coalitions.check_players(n)
            costs = [float(doc["costs"][str(m)]) for m in coalitions.masks(n)]
            if len(doc["costs"]) != (1 << n) - 1:
                raise DomainError("every coalition mask must appear exactly once")
            oq = doc.get("order_quantities")
            q = None if oq is None else [float(oq[str(m)]) for m in coalitions.masks(n)]
            return cls(n, costs, doc.get("p"), doc.get("h"), q, doc.get("provenance", "synthetic"), doc.get("metadata") or {})
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed game document: {exc}") from exc


def from_values(n: int, values: dict, **kw) -> CostGame:
    """Build a game from ``{mask: cost}`` or ``{tuple_of_players: cost}``."""
    costs = np.zeros((1 << n) - 1)
    for key, val in values.items():
        mask = key if isinstance(key, int) else coalitions.mask_of(key)
        costs[mask - 1] = val
    return CostGame(n, costs, **kw)


def _check_costs(p: float, h: float) -> None:
    if not (p > 0 and h > 0):
        raise DomainError(f"penalty and holding costs must be positive, got p={p!r}, h={h!r}")


def critical_fractile(p: float, h: float) -> float:
    _check_costs(p, h)
    return p / (p + h)


def order_quantity(model: DemandModel, mask: int, p: float, h: float, estimator: Estimator = Estimator()) -> float:
    """Newsvendor order quantity for coalition ``mask``: the ``p/(p+h)`` quantile of pooled demand."""
    return float(order_quantities(model, p, h, estimator)[mask - 1])


def order_quantities(model: DemandModel, p: float, h: float, estimator: Estimator = Estimator()) -> np.ndarray:
    tau = critical_fractile(p, h)
    return coalition_quantiles(model, tau, estimator.samples, estimator.seed)


def realization_cost(x, q, p: float, h: float):
    """``max(p (x - q), h (q - x))``; vectorised over ``x`` and ``q``."""
    x = np.asarray(x, dtype=float)
    out = np.maximum(p * (x - q), h * (q - x))
    return float(out) if out.ndim == 0 else out


def _cost_stream_seed(estimator: Estimator) -> np.random.SeedSequence:
    # quantile panel uses the raw seed; cost panel an independent child stream
    return np.random.SeedSequence(estimator.seed, spawn_key=(1,))


def build_expected_game(model: DemandModel, p: float, h: float, estimator: Estimator = Estimator()) -> CostGame:
    """Expected game ``c_E(S) = E[max(p (x_S - q_S), h (q_S - x_S))]``.

    All-normal coalitions use ``(p + h) phi(z*) sigma_S``; everything else is a
    Monte Carlo mean over one shared demand panel (common random numbers), with
    the standard error of every estimate recorded in ``metadata``.
    """
    _check_costs(p, h)
    n = model.n
    q = order_quantities(model, p, h, estimator)
    zstar = stats.norm.ppf(critical_fractile(p, h))
    costs = np.empty_like(q)
    se = np.zeros_like(q)
    methods = []
    panel = None
    for mask in coalitions.masks(n):
        method = quantile_method(model, mask)
        methods.append(method)
        if method == "normal":
            costs[mask - 1] = (p + h) * stats.norm.pdf(zstar) * coalition_sd(model, mask)
        elif method == "deterministic":
            costs[mask - 1] = 0.0
        else:
            if panel is None:
                panel = sample_stationary(model, estimator.samples, np.random.default_rng(_cost_stream_seed(estimator)))
            g = realization_cost(panel[:, coalitions.members(mask)].sum(axis=1), q[mask - 1], p, h)
            costs[mask - 1] = g.mean()
            se[mask - 1] = g.std(ddof=1) / math.sqrt(len(g))
    meta = {
        "estimator": {"samples": estimator.samples, "seed": estimator.seed},
        "methods": {str(m): methods[m - 1] for m in coalitions.masks(n)},
        "standard_errors": {str(m): float(se[m - 1]) for m in coalitions.masks(n)},
        "demand": model.metadata(),
    }
    return CostGame(n, costs, p, h, q, "expected", meta)


def build_realization_game(sample, quantities, p: float, h: float) -> CostGame:
    """Realization game of one demand vector against frozen order quantities."""
    _check_costs(p, h)
    sample = np.asarray(sample, dtype=float)
    n = len(sample)
    pooled = coalitions.membership(n) @ sample
    return CostGame(n, realization_cost(pooled, quantities, p, h), p, h, quantities, "realization")


def build_dr_game(history: DemandHistory, quantities, p: float, h: float) -> CostGame:
    """Dynamic realization game at stage ``T``: costs evaluated at the running average demand."""
    _check_costs(p, h)
    if history.T < 1:
        raise DomainError("dynamic realization game needs at least one period")
    pooled = coalitions.membership(history.n) @ history.average
    costs = realization_cost(pooled, quantities, p, h)
    return CostGame(history.n, costs, p, h, quantities, "dynamic-realization", {"T": history.T})


@dataclass(frozen=True, eq=False)
class NormalizedGame:
    base: CostGame
    scale: float
    values: np.ndarray

    @property
    def n(self) -> int:
        return self.base.n


def normalize(game: CostGame, tol: float = DEGENERACY_TOL) -> NormalizedGame | None:
    """Divide by ``c(N)``; returns ``None`` when ``c(N) <= tol`` (nothing to share)."""
    scale = game.grand
    if scale <= tol:
        return None
    values = game.costs / scale
    values[-1] = 1.0
    values.setflags(write=False)
    return NormalizedGame(game, scale, values)
