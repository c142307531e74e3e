import itertools

import numpy as np
import pytest
import scipy.optimize
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nvgames import coalitions
from nvgames.acceptance import random_balanced_game
from nvgames.core import (
    EfficiencyBand,
    core_membership,
    excesses,
    is_balanced,
    joint_least_core,
    least_core,
    max_excess,
    phi_quantile,
    stochastic_core_probability,
    tightened,
)
from nvgames.demand import normal_model
from nvgames.errors import DomainError, LPError
from nvgames.game import CostGame, build_expected_game, from_values
from nvgames.lp import linprog

C = CostGame(2, [10.0, 10.0, 15.0])
EMPTY = from_values(3, {m: (3.0 if m == 7 else 1.0) for m in coalitions.masks(3)})


def vertex_least_core(game):
    """Least-core value by enumerating basic solutions of the LP (variables x, eps)."""
    n = game.n
    A = coalitions.membership(n)[:-1]
    rows = np.hstack([A, -np.ones((len(A), 1))])
    eq = np.append(np.ones(n), 0.0)
    best = np.inf
    for pick in itertools.combinations(range(len(rows)), n):
        M = np.vstack([rows[list(pick)], eq])
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        sol = np.linalg.solve(M, np.append(game.costs[list(pick)], game.grand))
        if np.all(rows @ sol <= game.costs[:-1] + 1e-9):
            best = min(best, sol[-1])
    return best


def scipy_least_core(game):
    n = game.n
    A = coalitions.membership(n)[:-1]
    res = scipy.optimize.linprog(
        np.append(np.zeros(n), 1.0),
        A_ub=np.hstack([A, -np.ones((len(A), 1))]),
        b_ub=game.costs[:-1],
        A_eq=np.append(np.ones(n), 0.0)[None, :],
        b_eq=[game.grand],
        bounds=[(None, None)] * (n + 1),
        method="highs",
    )
    return res.fun


def games(n_min=2, n_max=4):
    return st.integers(n_min, n_max).flatmap(
        lambda n: arrays(float, (1 << n) - 1, elements=st.floats(0, 100)).map(lambda c: CostGame(n, c))
    )


# --- excess and membership

def test_max_excess_examples():
    assert max_excess(C, [10, 5]) == 0
    assert max_excess(C, [7.5, 7.5]) == -2.5
    assert list(excesses(C, [10, 5])) == [0.0, -5.0]


def test_core_membership_examples():
    assert core_membership(C, [7.5, 7.5])
    assert not core_membership(C, [11, 4])
    assert not core_membership(C, [7, 7])
    with pytest.raises(DomainError):
        core_membership(C, [7.5, 7.5], tol=-1)


# --- least core

def test_least_core_examples():
    lc = least_core(C)
    assert lc.epsilon == pytest.approx(-2.5)
    assert lc.witness == pytest.approx([7.5, 7.5])
    lc = least_core(EMPTY)
    assert lc.epsilon == pytest.approx(1.0)
    assert lc.witness == pytest.approx([1, 1, 1])
    assert not lc.balanced


def test_additive_game_has_zero_least_core_value():
    a = np.array([2.0, 3.0, 5.0])
    lc = least_core(CostGame(3, coalitions.membership(3) @ a))
    assert lc.epsilon == pytest.approx(0.0, abs=1e-12)
    assert lc.witness == pytest.approx(a)


def test_is_balanced_examples():
    assert is_balanced(C)
    assert not is_balanced(EMPTY)


@given(games(2, 3))
def test_least_core_matches_vertex_enumeration(game):
    assert least_core(game).epsilon == pytest.approx(vertex_least_core(game), abs=1e-7)


@given(games(2, 5))
def test_least_core_matches_scipy(game):
    lc = least_core(game)
    assert lc.epsilon == pytest.approx(scipy_least_core(game), abs=1e-7)
    assert max_excess(game, lc.witness) <= lc.epsilon + 1e-7
    assert lc.witness.sum() == pytest.approx(game.grand, abs=1e-7)


@given(games(2, 4), st.floats(0, 50))
def test_raising_proper_costs_lowers_least_core_value(game, delta):
    costs = game.costs.copy()
    costs[:-1] += delta
    assert least_core(CostGame(game.n, costs)).epsilon <= least_core(game).epsilon + 1e-9


@given(games(3, 4), st.data())
def test_least_core_value_is_permutation_invariant(game, data):
    n = game.n
    perm = data.draw(st.permutations(range(n)))
    costs = np.empty_like(game.costs)
    for m in coalitions.masks(n):
        costs[coalitions.mask_of(perm[i] for i in coalitions.members(m)) - 1] = game(m)
    assert least_core(CostGame(n, costs)).epsilon == pytest.approx(least_core(game).epsilon, abs=1e-9)


def test_least_core_on_six_players_is_feasible():
    rng = np.random.default_rng(1)
    game = random_balanced_game(rng, 6)
    assert least_core(game).epsilon <= 1e-9


def test_normal_expected_games_are_balanced():
    rng = np.random.default_rng(2)
    for _ in range(10):
        n = int(rng.integers(2, 5))
        model = normal_model(rng.uniform(50, 150, n), rng.uniform(5, 30, n))
        assert is_balanced(build_expected_game(model, *rng.uniform(0.5, 5, 2)))


def test_single_player_has_no_least_core():
    with pytest.raises(DomainError):
        least_core(CostGame(1, [3.0]))


# --- LP solver

def test_lp_detects_infeasible_and_unbounded():
    with pytest.raises(LPError):
        linprog([1.0], A_ub=[[1.0]], b_ub=[-1.0])
    with pytest.raises(LPError):
        linprog([-1.0], A_ub=[[-1.0]], b_ub=[0.0])


def test_lp_handles_degenerate_redundant_equalities():
    res = linprog([1.0, 1.0], A_eq=[[1.0, 1.0], [2.0, 2.0]], b_eq=[1.0, 2.0])
    assert res.fun == pytest.approx(1.0)


@given(st.integers(0, 10_000))
def test_lp_matches_scipy_on_random_feasible_problems(seed):
    rng = np.random.default_rng(seed)
    m, k = 8, 4
    A = rng.normal(size=(m, k))
    x0 = rng.uniform(0, 1, k)
    b = A @ x0 + rng.uniform(0, 1, m)
    c = rng.uniform(0.1, 1, k)
    ours = linprog(c, A, b)
    ref = scipy.optimize.linprog(c, A_ub=A, b_ub=b, bounds=[(0, None)] * k, method="highs")
    assert ours.fun == pytest.approx(ref.fun, abs=1e-8)
    assert np.all(A @ ours.x <= b + 1e-8)


def test_tightened_leaves_grand_coalition_alone():
    t = tightened(C, 1.5)
    assert list(t.costs) == [11.5, 11.5, 15.0]


# --- efficiency band and stochastic core

def test_phi_quantile_edges():
    y = [1.0, 4.0, 2.0, 3.0]
    assert phi_quantile(y, 2.5, 0).phi == 0
    assert phi_quantile(y, 2.5, 1).phi == 1.5
    with pytest.raises(DomainError):
        phi_quantile([], 0, 0.5)
    with pytest.raises(DomainError):
        phi_quantile(y, 0, 1.5)


def test_phi_quantile_normal_oracle(rng):
    y = rng.normal(5.0, 2.0, 1_000_000)
    assert phi_quantile(y, 5.0, 0.95).phi == pytest.approx(1.96 * 2.0, abs=0.04)


def test_stochastic_core_probability_trivial_cases(rng):
    game = CostGame(2, [10.0, 10.0, 15.0])
    band = EfficiencyBand(1.0, 0.0)
    sure = stochastic_core_probability(lambda g: game, [7.5, 7.5], 0.0, band, 200, rng)
    assert sure.estimate == 1.0 and sure.low > 0.98
    never = stochastic_core_probability(lambda g: game, [10.0 + 1e6, 15.0 - 10.0 - 1e6], 0.0, band, 200, rng)
    assert never.estimate == 0.0
    with pytest.raises(DomainError):
        stochastic_core_probability(lambda g: game, [7.5, 7.5], 0.0, band, 10, rng)


def test_joint_least_core_covers_every_row():
    rows = np.array([[10.0, 10.0, 15.0], [8.0, 12.0, 16.0]])
    lc = joint_least_core(rows, 2, 15.5, 0.5)
    for r in rows:
        assert max_excess(CostGame(2, r), lc.witness) <= lc.epsilon + 1e-9
    assert abs(lc.witness.sum() - 15.5) <= 0.5 + 1e-9
    assert lc.epsilon == pytest.approx(-1.5)
