import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nvgames import coalitions
from nvgames.acceptance import permutation_shapley
from nvgames.game import CostGame, from_values
from nvgames.solutions import (
    WeightProfile,
    ls_projection_oracle,
    ls_value,
    shapley_value,
    shapley_weight_profile,
    uniform_weights,
    weighted_objective,
)


def game_strategy(n_min=2, n_max=5):
    return st.integers(n_min, n_max).flatmap(
        lambda n: arrays(float, (1 << n) - 1, elements=st.floats(0, 100)).map(lambda c: CostGame(n, c))
    )


def profile_strategy(n):
    return st.lists(st.floats(0.05, 10), min_size=n - 1, max_size=n - 1).map(lambda a: WeightProfile(n, tuple(a)))


SIX_SIX_ZERO = from_values(3, {0b011: 12.0, 0b111: 12.0})


def test_six_six_zero_game():
    assert ls_value(SIX_SIX_ZERO) == pytest.approx([6, 6, 0], abs=1e-12)
    assert ls_projection_oracle(SIX_SIX_ZERO) == pytest.approx([6, 6, 0], abs=1e-12)
    assert shapley_value(SIX_SIX_ZERO) == pytest.approx([6, 6, 0], abs=1e-12)
    assert permutation_shapley(SIX_SIX_ZERO) == pytest.approx([6, 6, 0], abs=1e-12)


@pytest.mark.parametrize("alpha", [(1.0,), (0.3,), (7.0,)])
def test_two_player_split_is_weight_free(alpha):
    game = CostGame(2, [10.0, 10.0, 15.0])
    assert ls_value(game, WeightProfile(2, alpha)) == pytest.approx([7.5, 7.5])
    assert shapley_value(game) == pytest.approx([7.5, 7.5])


def test_symmetric_game_is_split_equally():
    n = 4
    costs = np.array([[1.0, 1.7, 2.2, 2.5][coalitions.size(m) - 1] for m in coalitions.masks(n)])
    game = CostGame(n, costs)
    assert ls_value(game) == pytest.approx([2.5 / 4] * 4)
    assert ls_projection_oracle(game) == pytest.approx([2.5 / 4] * 4)


def test_additive_game_shapley_is_the_vector():
    a = np.array([1.0, 4.0, 2.5, 0.5])
    game = CostGame(4, coalitions.membership(4) @ a)
    assert shapley_value(game) == pytest.approx(a)
    assert ls_value(game) == pytest.approx(a)


def test_shapley_profile_values():
    assert shapley_weight_profile(3).alpha == (1.0, 1.0)
    assert shapley_weight_profile(5).alpha == (1.0, 1 / 3, 1 / 3, 1.0)
    assert uniform_weights(4).beta == 1 + 2 + 1
    assert shapley_weight_profile(4).beta == pytest.approx(3.0)


def test_invalid_profiles():
    with pytest.raises(ValueError):
        WeightProfile(3, (1.0,))
    with pytest.raises(ValueError):
        WeightProfile(3, (1.0, 0.0))
    with pytest.raises(ValueError):
        WeightProfile(1, ())


@given(game_strategy())
def test_closed_form_matches_projection(game):
    scale = max(1.0, float(np.abs(game.costs).max()))
    assert np.abs(ls_value(game) - ls_projection_oracle(game)).max() <= 1e-9 * scale


@given(st.integers(2, 5).flatmap(lambda n: st.tuples(
    arrays(float, (1 << n) - 1, elements=st.floats(0, 100)).map(lambda c: CostGame(n, c)), profile_strategy(n))))
def test_weighted_closed_form_matches_projection(pair):
    game, w = pair
    scale = max(1.0, float(np.abs(game.costs).max()))
    assert np.abs(ls_value(game, w) - ls_projection_oracle(game, w)).max() <= 1e-8 * scale


@given(game_strategy())
def test_least_square_value_is_efficient(game):
    assert ls_value(game).sum() == pytest.approx(game.grand, abs=1e-9 * max(1.0, game.grand))


@given(game_strategy(3, 4), st.integers(0, 10_000))
def test_least_square_value_minimises_the_objective(game, seed):
    x = ls_value(game)
    best = weighted_objective(game, x)
    d = np.random.default_rng(seed).standard_normal(game.n)
    d -= d.mean()
    for step in (1e-3, 0.1, 1.0):
        assert weighted_objective(game, x + step * d) >= best - 1e-9 * max(1.0, best)


@given(game_strategy(3, 4), st.data())
def test_permuting_players_permutes_the_value(game, data):
    n = game.n
    perm = data.draw(st.permutations(range(n)))
    costs = np.empty_like(game.costs)
    for m in coalitions.masks(n):
        costs[coalitions.mask_of(perm[i] for i in coalitions.members(m)) - 1] = game(m)
    moved = CostGame(n, costs)
    assert ls_value(moved)[list(perm)] == pytest.approx(ls_value(game), abs=1e-9)
    assert shapley_value(moved)[list(perm)] == pytest.approx(shapley_value(game), abs=1e-9)


@given(game_strategy(2, 4), st.floats(0.1, 10), st.lists(st.floats(0, 10), min_size=4, max_size=4))
def test_values_are_covariant_under_scaling_and_additive_shifts(game, a, shift):
    b = np.array(shift[: game.n])
    moved = CostGame(game.n, a * game.costs + coalitions.membership(game.n) @ b)
    assert ls_value(moved) == pytest.approx(a * ls_value(game) + b, abs=1e-8)
    assert shapley_value(moved) == pytest.approx(a * shapley_value(game) + b, abs=1e-8)


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_shapley_profile_reproduces_shapley(n):
    rng = np.random.default_rng(n)
    w = shapley_weight_profile(n)
    for _ in range(10):
        game = CostGame(n, rng.uniform(0, 10, (1 << n) - 1))
        oracle = permutation_shapley(game)
        assert np.abs(ls_value(game, w) - oracle).max() <= 1e-9
        assert np.abs(shapley_value(game) - oracle).max() <= 1e-9


def test_uniform_profile_differs_from_shapley_at_four_players():
    rng = np.random.default_rng(0)
    game = CostGame(4, rng.uniform(0, 10, 15))
    assert np.abs(ls_value(game) - shapley_value(game)).max() > 1e-3


def test_permutation_oracle_counts_all_orders():
    assert math.factorial(4) == len(list(itertools.permutations(range(4))))
