"""Repeated allocation processes R1 (least-square value) and R2 (core).

Each step hands the whole (normalized) budget to one player; the historical
average ``counts / t`` is the allocation that converges.

R1 picks the player with the largest ``sum_{S∋i} a_S (v(S) - abar(S))``,
the steepest-descent coordinate of ``sum_S a_S (abar(S) - v(S))^2``.
R2 weights over-charged coalitions by ``-min(zbar_S, 0)``, where
``zbar_S = v(S) - abar(S)`` is the average surplus, and picks the player
maximising ``sum_S w_S (v(S) - 1[i in S])``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import coalitions
from .core import least_core, max_excess, tightened, CORE_TOL
from .game import CostGame, NormalizedGame, normalize
from .solutions import WeightProfile, uniform_weights

log = logging.getLogger(__name__)

RULES = ("R1", "R2")
TIE_TOL = 1e-12


@dataclass
class ProcessState:
    rule: str
    t: int
    counts: np.ndarray
    zbar: np.ndarray | None = None
    violations: int = 0

    @classmethod
    def empty(cls, rule: str, n: int) -> ProcessState:
        if rule not in RULES:
            raise ValueError(f"unknown rule {rule!r}")
        k = (1 << n) - 2
        return cls(rule, 0, np.zeros(n, dtype=np.int64), np.zeros(k) if rule == "R2" else None)

    @property
    def average(self) -> np.ndarray:
        """Normalized historical allocation ``counts / t`` (zeros before the first step)."""
        return self.counts / self.t if self.t else np.zeros(len(self.counts))


@dataclass(frozen=True)
class SelectionReport:
    player: int
    indices: np.ndarray
    tie: bool


def _argmax(indices: np.ndarray) -> tuple[int, bool]:
    top = indices.max()
    hits = np.flatnonzero(indices >= top - TIE_TOL)
    return int(hits[0]), hits.size > 1


class _Kernel:
    """Precomputed matrices for one normalized game (proper coalitions only)."""

    def __init__(self, v: NormalizedGame, weights: WeightProfile | None):
        n = v.n
        self.A = coalitions.membership(n)[:-1]
        self.v = v.values[:-1]
        if weights is not None:
            alpha = weights.coalition_weights()[:-1]
            self.G = self.A.T @ (alpha[:, None] * self.A)
            self.b = self.A.T @ (alpha * self.v)

    def r1_indices(self, counts: np.ndarray, t: int) -> np.ndarray:
        if t == 0:
            return self.b.copy()
        return self.b - (self.G @ counts) / t

    def zbar(self, counts: np.ndarray, t: int) -> np.ndarray:
        if t == 0:
            return np.zeros_like(self.v)
        return self.v - (self.A @ counts) / t

    def r2_indices(self, zbar: np.ndarray) -> np.ndarray:
        w = np.maximum(-zbar, 0.0)
        return w @ self.v - self.A.T @ w


def _advance(state: ProcessState, kernel: _Kernel, player: int) -> None:
    state.counts[player] += 1
    state.t += 1
    if state.rule == "R2":
        state.zbar = kernel.zbar(state.counts, state.t)


def _select(state: ProcessState, kernel: _Kernel) -> SelectionReport:
    if state.rule == "R1":
        idx = kernel.r1_indices(state.counts, state.t)
    else:
        idx = kernel.r2_indices(kernel.zbar(state.counts, state.t))
    player, tie = _argmax(idx)
    if state.rule == "R2" and idx[player] < -CORE_TOL:
        state.violations += 1
        log.debug("R2 step %d: best weighted surplus %.3g < 0 (game may be unbalanced)", state.t, idx[player])
    return SelectionReport(player, idx, tie)


def _check(v: NormalizedGame | None) -> NormalizedGame:
    if v is None:
        raise ValueError("degenerate game (c(N) = 0): skip the allocation step")
    return v


def r1_step(state: ProcessState, v: NormalizedGame, weights: WeightProfile | None = None) -> tuple[ProcessState, SelectionReport]:
    """One R1 step on a copy of ``state``."""
    v = _check(v)
    kernel = _Kernel(v, weights or uniform_weights(v.n))
    new = ProcessState("R1", state.t, state.counts.copy())
    report = _select(new, kernel)
    _advance(new, kernel, report.player)
    return new, report


def r2_step(state: ProcessState, v: NormalizedGame) -> tuple[ProcessState, SelectionReport]:
    """One R2 step on a copy of ``state``."""
    v = _check(v)
    kernel = _Kernel(v, None)
    new = ProcessState("R2", state.t, state.counts.copy(), None, state.violations)
    report = _select(new, kernel)
    _advance(new, kernel, report.player)
    return new, report


def default_checkpoints(steps: int) -> list[int]:
    """Powers of two up to ``steps`` plus ``steps`` itself."""
    out = []
    k = 1
    while k < steps:
        out.append(k)
        k *= 2
    out.append(steps)
    return out


@dataclass
class TraceRow:
    t: int
    player: int
    allocation: np.ndarray
    max_excess: float
    objective: float


@dataclass
class ProcessResult:
    allocation: np.ndarray
    state: ProcessState | None
    trace: list[TraceRow] = field(default_factory=list)
    degenerate: bool = False


def _objective(kernel: _Kernel, alpha: np.ndarray, abar: np.ndarray) -> float:
    r = kernel.A @ abar - kernel.v
    return float(np.sum(alpha * r * r))


def run(
    rule: str,
    game: CostGame,
    steps: int,
    weights: WeightProfile | None = None,
    stride: int | None = None,
    trace: bool = True,
    state: ProcessState | None = None,
) -> ProcessResult:
    """Run ``steps`` steps of ``rule`` on ``game`` and return the average allocation in cost units.

    ``stride=None`` records the trace at powers of two and the last step;
    an integer records every ``stride`` steps.  Passing ``state`` continues an
    earlier process (warm start) instead of starting from the empty history.
    """
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    coalitions.check_players(game.n, minimum=2)
    n = game.n
    v = normalize(game)
    if v is None:
        return ProcessResult(np.zeros(n), state, [], degenerate=True)
    weights = weights or uniform_weights(n)
    kernel = _Kernel(v, weights if rule == "R1" else None)
    alpha = weights.coalition_weights()[:-1]
    st = ProcessState.empty(rule, n) if state is None else ProcessState(rule, state.t, state.counts.copy(), None, state.violations)
    if rule == "R2":
        st.zbar = kernel.zbar(st.counts, st.t)
    start = st.t
    end = start + steps
    marks = set(default_checkpoints(end) if stride is None else list(range(stride, end, stride)) + [end]) if trace else set()
    rows = []
    counts = st.counts
    violations = 0
    for t in range(start, end):
        if rule == "R1":
            idx = kernel.r1_indices(counts, t)
        else:
            idx = kernel.r2_indices(kernel.zbar(counts, t))
        player, _ = _argmax(idx)
        if rule == "R2" and idx[player] < -CORE_TOL:
            violations += 1
        counts[player] += 1
        if t + 1 in marks:
            abar = counts / (t + 1)
            x = abar * v.scale
            rows.append(TraceRow(t + 1, player, x, max_excess(game, x), _objective(kernel, alpha, abar)))
    st.t = end
    st.violations += violations
    if rule == "R2":
        st.zbar = kernel.zbar(counts, end)
        if violations:
            log.debug("R2 run: %d steps without a nonnegative weighted surplus", violations)
    return ProcessResult(counts / end * v.scale, st, rows)


def run_least_core_variant(game: CostGame, steps: int, lc=None, stride: int | None = None) -> ProcessResult:
    """R2 on the game tightened by its least-core value, whose core is the least core.

    Balanced games fall back to plain R2.
    """
    lc = lc or least_core(game)
    if lc.epsilon <= CORE_TOL:
        log.info("least-core variant called on a balanced game (eps*=%.3g); running plain R2", lc.epsilon)
        return run("R2", game, steps, stride=stride)
    res = run("R2", tightened(game, lc.epsilon), steps, stride=stride)
    for row in res.trace:
        row.max_excess = max_excess(game, row.allocation)
    return res
