"""Diagonal experiments: run an allocation process on each stage game of a converging sequence.

At stage ``T`` the process restarts from the empty history on the stage game
``c^T`` and runs ``L(T) = schedule * T`` steps; the resulting average
allocation is compared with the limit game's least-square value and core.
Stages are independent given the demand history, so only the stages listed
in the grid are evaluated.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from . import coalitions
from .core import CORE_TOL, core_membership, joint_least_core, least_core, max_excess, phi_quantile
from .demand import DemandHistory, DemandModel, TemporalState, sample_periods, sample_stationary
from .errors import ConfigError
from .game import CostGame, Estimator, build_expected_game, build_realization_game, normalize, order_quantities, realization_cost
from .processes import RULES, default_checkpoints, run
from .solutions import WeightProfile, ls_value, uniform_weights

log = logging.getLogger(__name__)

DR_MODES = ("demand-average", "cost-average")
EMPTY_CORE_TOL = 1e-6


def replication_rng(seed: int, replication: int) -> np.random.Generator:
    """Independent stream for one replication, derived from ``(seed, replication)``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replication,)))


def stage_grid(stages, T_max: int) -> list[int]:
    if T_max < 1:
        raise ConfigError("T_max must be >= 1")
    if stages == "all":
        return list(range(1, T_max + 1))
    if stages == "log":
        return default_checkpoints(T_max)
    if stages == "final":
        return [T_max]
    grid = sorted({int(t) for t in stages})
    if not grid or grid[0] < 1 or grid[-1] > T_max:
        raise ConfigError(f"stage grid must lie in [1, {T_max}]")
    return grid


class GameSequenceSource(Protocol):
    limit: CostGame

    def realize(self, rng: np.random.Generator) -> Callable[[int], CostGame]:
        """Return ``t -> c^t`` for one replication; ``t`` must be nondecreasing."""


@dataclass
class ConstantSource:
    limit: CostGame

    def realize(self, rng):
        return lambda t: self.limit


@dataclass
class PerturbedSource:
    """``c^t = c (1 + (-1)^(t+1) / t)``: a deterministic sequence converging to ``c``."""

    limit: CostGame

    def realize(self, rng):
        return lambda t: self.limit.with_costs(self.limit.costs * (1.0 + (-1) ** (t + 1) / t), "perturbed")


class DRStream:
    """Stage games of one replication, built from a growing demand history."""

    def __init__(self, model: DemandModel, quantities, p, h, rng, mode: str):
        self.model, self.quantities, self.p, self.h, self.rng, self.mode = model, quantities, p, h, rng, mode
        self.state = TemporalState()
        self.history = DemandHistory(model.n, keep_samples=False)
        self.cost_history = DemandHistory(len(quantities), keep_samples=False)

    def __call__(self, T: int) -> CostGame:
        if T < max(self.history.T, 1):
            raise ValueError(f"stage {T} precedes the current history length {self.history.T}")
        block = sample_periods(self.model, T - self.history.T, self.state, self.rng)
        self.history.extend_block(block)
        n = self.model.n
        if self.mode == "cost-average":
            self.cost_history.extend_block(realization_cost(block @ coalitions.membership(n).T, self.quantities, self.p, self.h))
            costs = np.maximum(self.cost_history.average, 0.0)
        else:
            pooled = coalitions.membership(n) @ self.history.average
            costs = realization_cost(pooled, self.quantities, self.p, self.h)
        return CostGame(n, costs, self.p, self.h, self.quantities, "dynamic-realization", {"T": T, "mode": self.mode})


@dataclass
class DRGameSource:
    """Dynamic realization games of a demand model.

    ``demand-average`` evaluates the newsvendor cost at the running average
    demand (the standard DR game); ``cost-average`` averages the realized
    per-period costs instead (non-standard, for comparison).
    """

    model: DemandModel
    quantities: np.ndarray
    p: float
    h: float
    limit: CostGame
    mode: str = "demand-average"

    def __post_init__(self):
        if self.mode not in DR_MODES:
            raise ConfigError(f"unknown DR mode {self.mode!r}")
        if len(self.quantities) != (1 << self.model.n) - 1 or self.limit.n != self.model.n:
            raise ConfigError("demand model and game dimensions disagree")

    def realize(self, rng):
        return DRStream(self.model, self.quantities, self.p, self.h, rng, self.mode)


@dataclass
class StageRow:
    replication: int
    T: int
    costs: np.ndarray
    allocation: np.ndarray
    dist_ls_inf: float
    max_excess: float
    eps_T: float
    phi_T: float
    degenerate: bool


@dataclass
class ExperimentTrace:
    n: int
    rows: list[StageRow] = field(default_factory=list)
    regimes: list[int | None] = field(default_factory=list)

    def columns(self) -> list[str]:
        return (
            ["replication", "T"]
            + [f"cost_{m}" for m in coalitions.masks(self.n)]
            + [f"alloc_{i + 1}" for i in range(self.n)]
            + ["dist_ls_inf", "max_excess_cE", "eps_T", "phi_T", "degenerate"]
        )

    def final_rows(self) -> list[StageRow]:
        last: dict[int, StageRow] = {}
        for row in self.rows:
            last[row.replication] = row
        return [last[r] for r in sorted(last)]

    def stage(self, T: int) -> list[StageRow]:
        return [r for r in self.rows if r.T == T]

    def write_csv(self, path) -> None:
        fmt = "{:.17g}".format
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns())
            for r in self.rows:
                w.writerow(
                    [r.replication, r.T]
                    + [fmt(c) for c in r.costs]
                    + [fmt(a) for a in r.allocation]
                    + [fmt(r.dist_ls_inf), fmt(r.max_excess), fmt(r.eps_T), fmt(r.phi_T), int(r.degenerate)]
                )


@dataclass(frozen=True)
class _Task:
    source: GameSequenceSource
    rule: str
    weights: WeightProfile
    grid: tuple[int, ...]
    schedule: int
    seed: int
    replication: int
    warm_start: bool
    ls_limit: np.ndarray


def _replicate(task: _Task) -> tuple[list[StageRow], int | None]:
    rng = replication_rng(task.seed, task.replication)
    stream = task.source.realize(rng)
    limit = task.source.limit
    rows = []
    state = None
    for T in task.grid:
        game = stream(T)
        target = task.schedule * T
        degenerate = normalize(game) is None
        if degenerate:
            alloc = np.zeros(game.n)
        elif task.warm_start:
            steps = target - (state.t if state is not None else 0)
            if steps >= 1:
                res = run(task.rule, game, steps, task.weights, trace=False, state=state)
                state, alloc = res.state, res.allocation
            else:
                alloc = state.average * game.grand
        else:
            alloc = run(task.rule, game, target, task.weights, trace=False).allocation
        rows.append(
            StageRow(
                task.replication,
                T,
                game.costs.copy(),
                alloc,
                float(np.abs(alloc - task.ls_limit).max()),
                max_excess(limit, alloc),
                float(np.abs(game.costs - limit.costs).max()),
                math.nan,
                bool(degenerate),
            )
        )
    regime = getattr(getattr(stream, "state", None), "regime", None)
    return rows, regime


def generic_diagonal(
    source: GameSequenceSource,
    rule: str,
    T_max: int,
    weights: WeightProfile | None = None,
    stages="log",
    schedule: int = 1,
    replications: int = 1,
    seed: int = 0,
    warm_start: bool = False,
    threads: int = 1,
) -> ExperimentTrace:
    """Diagonal sequence ``abar^R(c^T)(L(T))`` over the stage grid, for every replication.

    ``phi_T`` is the largest deviation of ``c^T(N)`` from its mean across the
    replications at stage ``T`` (the efficiency band at significance level 1).
    """
    if rule not in RULES:
        raise ConfigError(f"unknown rule {rule!r}")
    if schedule < 1:
        raise ConfigError("schedule multiplier must be >= 1")
    n = source.limit.n
    weights = weights or uniform_weights(n)
    grid = tuple(stage_grid(stages, T_max))
    if warm_start and stages != "all":
        log.info("warm start on a partial stage grid: intermediate steps use the latest recorded stage game")
    ls_limit = ls_value(source.limit, weights)
    tasks = [_Task(source, rule, weights, grid, schedule, seed, r, warm_start, ls_limit) for r in range(replications)]
    if threads > 1 and replications > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_replicate, tasks))
    else:
        results = [_replicate(t) for t in tasks]
    trace = ExperimentTrace(n)
    for rows, regime in results:
        trace.rows.extend(rows)
        trace.regimes.append(regime)
    for T in grid:
        at_T = trace.stage(T)
        grand = np.array([r.costs[-1] for r in at_T])
        phi = phi_quantile(grand, float(grand.mean()), 1.0).phi
        for r in at_T:
            r.phi_T = phi
    return trace


@dataclass
class DiagonalConfig:
    model: DemandModel
    p: float
    h: float
    T_max: int
    rule: str = "R1"
    replications: int = 1
    seed: int = 0
    schedule: int = 1
    weights: WeightProfile | None = None
    stages: str | Sequence[int] = "log"
    warm_start: bool = False
    dr_mode: str = "demand-average"
    estimator: Estimator = field(default_factory=Estimator)
    threads: int = 1

    def __post_init__(self):
        if self.T_max < 1:
            raise ConfigError("T_max must be >= 1")
        if self.rule not in RULES:
            raise ConfigError(f"unknown rule {self.rule!r}")
        if self.dr_mode not in DR_MODES:
            raise ConfigError(f"unknown DR mode {self.dr_mode!r}")
        if self.weights is not None and self.weights.n != self.model.n:
            raise ConfigError("weight profile and demand model dimensions disagree")


@dataclass
class DiagonalResult:
    trace: ExperimentTrace
    expected: CostGame
    ls_expected: np.ndarray

    def summary(self) -> dict:
        final = [r for r in self.trace.final_rows() if not r.degenerate]
        out = {
            "expected_costs": {str(m): float(self.expected(m)) for m in coalitions.masks(self.expected.n)},
            "ls_expected": self.ls_expected.tolist(),
            "replications": len(self.trace.final_rows()),
            "degenerate_final_stages": len(self.trace.final_rows()) - len(final),
        }
        if final:
            out["final"] = {
                "dist_ls_inf": [r.dist_ls_inf for r in final],
                "max_excess_cE": [r.max_excess for r in final],
                "eps_T": [r.eps_T for r in final],
                "efficiency_gap": [abs(float(r.allocation.sum()) - self.expected.grand) for r in final],
            }
        return out


def diagonal_experiment(cfg: DiagonalConfig, expected: CostGame | None = None) -> DiagonalResult:
    """Diagonal process on the dynamic realization games of ``cfg.model``.

    Order quantities are those of the expected game and stay frozen across stages.
    """
    if expected is None:
        expected = build_expected_game(cfg.model, cfg.p, cfg.h, cfg.estimator)
    if expected.n != cfg.model.n or expected.quantities is None:
        raise ConfigError("expected game does not match the demand model")
    weights = cfg.weights or uniform_weights(cfg.model.n)
    source = DRGameSource(cfg.model, expected.quantities, cfg.p, cfg.h, expected, cfg.dr_mode)
    trace = generic_diagonal(
        source, cfg.rule, cfg.T_max, weights, cfg.stages, cfg.schedule, cfg.replications, cfg.seed, cfg.warm_start, cfg.threads
    )
    return DiagonalResult(trace, expected, ls_value(expected, weights))


def ce_tolerance_pad(expected: CostGame) -> float:
    """Three standard errors of the largest Monte Carlo ``c_E`` estimate (0 for closed forms)."""
    se = expected.metadata.get("standard_errors", {})
    return 3.0 * max(se.values(), default=0.0)


def stationary_experiment(cfg: DiagonalConfig, eps: float | None = None, beta: float = 1.0, expected: CostGame | None = None) -> dict:
    """Terminal stage of ``cfg.replications`` independent stationary-demand replications.

    Reports the empirical law of the limit costs ``Y_S`` (terminal DR costs),
    per-regime clusters for regime mixtures, the comparison of ``E[Y_S]`` with
    ``c_E(S)`` and a core(Y) membership estimate.  Nothing here is asserted.
    """
    if not cfg.model.temporal.stationary:
        raise ConfigError("stationary experiment needs an ar1 or regime-mixture demand model")
    res = diagonal_experiment(
        DiagonalConfig(
            cfg.model, cfg.p, cfg.h, cfg.T_max, cfg.rule, cfg.replications, cfg.seed, cfg.schedule,
            cfg.weights, "final", False, cfg.dr_mode, cfg.estimator, cfg.threads,
        ),
        expected,
    )
    expected = res.expected
    n = cfg.model.n
    weights = cfg.weights or uniform_weights(n)
    final = res.trace.final_rows()
    Y = np.array([r.costs for r in final])
    X = np.array([r.allocation for r in final])
    R = len(final)
    mean = Y.mean(axis=0)
    sd = Y.std(axis=0, ddof=1) if R > 1 else np.zeros_like(mean)
    ce = expected.costs
    masks = list(coalitions.masks(n))
    summary: dict = {
        "temporal": cfg.model.metadata()["temporal"],
        "T_max": cfg.T_max,
        "replications": R,
        "rule": cfg.rule,
        "dr_mode": cfg.dr_mode,
        "coalitions": [
            {
                "mask": m,
                "c_E": float(ce[m - 1]),
                "mean_Y": float(mean[m - 1]),
                "sd_Y": float(sd[m - 1]),
                "se_mean_Y": float(sd[m - 1] / math.sqrt(R)),
                "spread_ratio": float(sd[m - 1] / ce[m - 1]) if ce[m - 1] > 0 else math.inf,
                "mean_Y_minus_c_E": float(mean[m - 1] - ce[m - 1]),
            }
            for m in masks
        ],
    }
    ls_terminal = np.array([ls_value(CostGame(n, y), weights) for y in Y])
    summary["least_square"] = {"mean_terminal": ls_terminal.mean(axis=0).tolist(), "of_c_E": res.ls_expected.tolist()}

    if cfg.model.temporal.kind == "regime-mixture":
        regimes = np.array(res.trace.regimes)
        clusters = []
        for k, reg in enumerate(cfg.model.temporal.regimes):
            sel = regimes == k
            cnt = int(sel.sum())
            entry = {"regime": k, "probability": reg.probability, "count": cnt, "coalitions": []}
            for m in masks:
                idx = coalitions.members(m)
                regime_mean = sum(cfg.model.marginals[i].mean for i in idx) + sum(reg.shifts[i] for i in idx)
                target = float(realization_cost(regime_mean, expected.quantities[m - 1], cfg.p, cfg.h))
                vals = Y[sel, m - 1]
                center = float(vals.mean()) if cnt else math.nan
                se = float(vals.std(ddof=1) / math.sqrt(cnt)) if cnt > 1 else math.inf
                entry["coalitions"].append({"mask": m, "center": center, "se": se, "g_at_regime_mean": target})
            clusters.append(entry)
        summary["regimes"] = clusters

    eps = 0.05 * expected.grand if eps is None else eps
    grand = Y[:, -1]
    band = phi_quantile(grand, float(grand.mean()), beta)
    inside = [
        max_excess(CostGame(n, y), x) <= eps + CORE_TOL and abs(x.sum() - grand.mean()) <= band.phi + CORE_TOL
        for x, y in zip(X, Y)
    ]
    joint = joint_least_core(Y, n, float(grand.mean()), phi_quantile(grand, float(grand.mean()), 1.0).phi)
    summary["core_Y"] = {
        "eps": eps,
        "beta": beta,
        "phi_Y": band.phi,
        "probability": float(np.mean(inside)),
        "joint_epsilon": joint.epsilon,
        "candidate_found": bool(joint.epsilon <= CORE_TOL),
        "candidate": joint.witness.tolist(),
    }
    return summary


def _collection_bounds(n: int) -> list[tuple[np.ndarray, float]]:
    """Balanced collections (as coalition weight vectors over proper masks) used as ε* lower bounds.

    Singleton partition, two-block partitions and the (n-1)-subset collection;
    for ``n <= 3`` these are all minimal balanced collections, so the bound is exact.
    """
    k = (1 << n) - 2
    full = coalitions.grand(n)
    out = []
    lam = np.zeros(k)
    for i in range(n):
        lam[(1 << i) - 1] = 1.0
    out.append(lam)
    for m in range(1, full):
        comp = full & ~m
        if m < comp:
            lam = np.zeros(k)
            lam[m - 1] = lam[comp - 1] = 1.0
            out.append(lam)
    if n >= 3:
        lam = np.zeros(k)
        for i in range(n):
            lam[(full & ~(1 << i)) - 1] = 1.0 / (n - 1)
        out.append(lam)
    uniq = {tuple(l): l for l in out}
    return [(l, float(l.sum())) for l in uniq.values()]


def epsilon_lower_bounds(costs: np.ndarray, n: int) -> np.ndarray:
    """Row-wise lower bound on the least-core value; exact for ``n <= 3``."""
    costs = np.atleast_2d(costs)
    bounds = [(costs[:, -1] - costs[:, :-1] @ lam) / tot for lam, tot in _collection_bounds(n)]
    return np.max(bounds, axis=0)


@dataclass
class EmptyCoreReport:
    found: bool
    attempts: int
    index: int | None
    game: CostGame | None
    epsilon: float | None
    witness: np.ndarray | None
    max_epsilon_seen: float
    evaluated: int
    witness_in_core: bool | None = None
    sample: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "found": self.found,
            "attempts": self.attempts,
            "index": self.index,
            "epsilon": self.epsilon,
            "witness": None if self.witness is None else self.witness.tolist(),
            "witness_in_core": self.witness_in_core,
            "max_epsilon_seen": self.max_epsilon_seen,
            "lp_evaluated": self.evaluated,
            "sample": None if self.sample is None else self.sample.tolist(),
            "game": None if self.game is None else self.game.to_dict(),
        }


def empty_core_search(
    model: DemandModel, p: float, h: float, attempts: int, seed: int = 0,
    quantities: np.ndarray | None = None, estimator: Estimator = Estimator(),
) -> EmptyCoreReport:
    """First single-period realization game whose least core value exceeds ``1e-6``."""
    if attempts < 1:
        raise ConfigError("attempts must be >= 1")
    n = model.n
    q = order_quantities(model, p, h, estimator) if quantities is None else np.asarray(quantities, float)
    draws = sample_stationary(model, attempts, np.random.default_rng(seed))
    costs = realization_cost(draws @ coalitions.membership(n).T, q, p, h)
    lower = epsilon_lower_bounds(costs, n)
    flagged = np.flatnonzero(lower > EMPTY_CORE_TOL)
    stop = int(flagged[0]) if flagged.size else attempts - 1
    exact = n <= 3
    candidates = flagged[:1] if exact else range(stop + 1)
    max_seen = float(lower.max())
    evaluated = 0
    for idx in candidates:
        game = build_realization_game(draws[idx], q, p, h)
        lc = least_core(game)
        evaluated += 1
        max_seen = max(max_seen, lc.epsilon)
        if lc.epsilon > EMPTY_CORE_TOL:
            return EmptyCoreReport(
                True, attempts, int(idx), game, lc.epsilon, lc.witness, max_seen, evaluated,
                core_membership(game, lc.witness), draws[idx],
            )
    return EmptyCoreReport(False, attempts, None, None, None, None, max_seen, evaluated)
