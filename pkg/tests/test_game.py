import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from nvgames import coalitions
from nvgames.demand import DemandHistory, DemandModel, MarginalSpec, normal_model, sample_stationary
from nvgames.errors import ConfigError, DomainError
from nvgames.game import (
    CostGame,
    Estimator,
    build_dr_game,
    build_expected_game,
    build_realization_game,
    critical_fractile,
    from_values,
    normalize,
    order_quantity,
    realization_cost,
)

from conftest import single


# --- order quantities

def test_critical_fractile():
    assert critical_fractile(3, 1) == 0.75
    with pytest.raises(DomainError):
        critical_fractile(0, 1)


def test_order_quantity_examples():
    assert order_quantity(single("normal", mean=100, sd=10), 1, 1, 1) == pytest.approx(100)
    assert order_quantity(single("normal", mean=100, sd=10), 1, 3, 1) == pytest.approx(106.7449, abs=1e-4)
    assert order_quantity(single("uniform", low=0, high=200), 1, 1, 3) == pytest.approx(50)


def test_order_quantity_minimises_simulated_cost(rng):
    # grid search over q of the Monte Carlo expected cost
    x = rng.normal(100, 10, 400_000)
    grid = np.linspace(100, 114, 141)
    cost = [realization_cost(x, q, 3, 1).mean() for q in grid]
    best = grid[int(np.argmin(cost))]
    assert abs(best - 106.7449) <= 0.3


def test_realization_cost_examples():
    assert realization_cost(100, 100, 3, 1) == 0
    assert realization_cost(110, 100, 3, 1) == 30
    assert realization_cost(90, 100, 3, 1) == 10


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(0.01, 10), st.floats(0.01, 10))
def test_realization_cost_is_nonnegative(x, q, p, h):
    assert realization_cost(x, q, p, h) >= 0


# --- expected games

def test_deterministic_demand_gives_zero_game():
    model = DemandModel((MarginalSpec("deterministic", {"value": 100}), MarginalSpec("deterministic", {"value": 50})))
    game = build_expected_game(model, 2, 1)
    assert np.all(game.costs == 0)
    assert list(game.quantities) == [100, 50, 150]


def test_uniform_expected_cost_is_mean_absolute_deviation():
    game = build_expected_game(single("uniform", low=0, high=200), 1, 1)
    se = game.metadata["standard_errors"]["1"]
    assert game.quantities[0] == pytest.approx(100)
    assert abs(game.costs[0] - 50) <= 3 * se
    assert game.metadata["methods"]["1"] == "marginal"


def test_two_store_normal_closed_form(two_store_normal):
    game = build_expected_game(two_store_normal, 1, 1)
    phi0 = 1 / math.sqrt(2 * math.pi)
    assert game.costs == pytest.approx([20 * phi0, 20 * phi0, 20 * phi0 * math.sqrt(2)], rel=1e-12)
    assert game.costs == pytest.approx([7.9788, 7.9788, 11.2838], abs=1e-4)


def test_two_store_normal_matches_monte_carlo(two_store_normal, rng):
    game = build_expected_game(two_store_normal, 1, 1)
    draws = sample_stationary(two_store_normal, 1_000_000, rng)
    g = realization_cost(draws @ coalitions.membership(2).T, game.quantities, 1, 1)
    z = (g.mean(axis=0) - game.costs) / (g.std(axis=0) / 1000)
    assert np.all(np.abs(z) <= 3)


def test_realization_average_reproduces_expected_game(rng):
    corr = np.array([[1, 0.3, 0.0], [0.3, 1, -0.2], [0.0, -0.2, 1]])
    model = normal_model([50.0, 60.0, 70.0], [5.0, 8.0, 3.0], corr)
    game = build_expected_game(model, 2, 3)
    draws = sample_stationary(model, 300_000, rng)
    costs = np.array([build_realization_game(d, game.quantities, 2, 3).costs for d in draws[:2000]])
    assert np.all(costs >= 0)
    full = realization_cost(draws @ coalitions.membership(3).T, game.quantities, 2, 3)
    assert np.array_equal(full[:2000], costs)
    z = (full.mean(axis=0) - game.costs) / (full.std(axis=0) / math.sqrt(len(full)))
    assert np.all(np.abs(z) <= 3.5)


def test_monte_carlo_game_is_deterministic_given_seed():
    model = DemandModel((MarginalSpec("lognormal", {"mu": 3, "sigma": 0.5}), MarginalSpec("uniform", {"low": 0, "high": 40})))
    est = Estimator(20_000, seed=4)
    a = build_expected_game(model, 2, 1, est)
    b = build_expected_game(model, 2, 1, est)
    assert a.to_json() == b.to_json()
    assert a.metadata["methods"]["3"] == "monte-carlo"
    assert all(v > 0 for v in a.metadata["standard_errors"].values())


def test_estimator_needs_enough_samples():
    with pytest.raises(ConfigError):
        Estimator(samples=10)


@given(st.lists(st.floats(1, 30), min_size=3, max_size=3), st.floats(-0.45, 0.9), st.floats(0.2, 5), st.floats(0.2, 5))
def test_normal_expected_games_are_subadditive(sds, r, p, h):
    corr = np.full((3, 3), r)
    np.fill_diagonal(corr, 1.0)
    game = build_expected_game(normal_model([100.0] * 3, sds, corr), p, h)
    for s in coalitions.masks(3):
        for t in coalitions.masks(3):
            if s & t == 0:
                assert game(s | t) <= game(s) + game(t) + 1e-9


# --- realization and dynamic realization games

def test_realization_game_example():
    game = build_realization_game([110.0, 95.0], [100.0, 100.0, 200.0], 1, 1)
    assert list(game.costs) == [10.0, 5.0, 5.0]
    assert game.provenance == "realization"


def test_realization_at_order_quantities_is_zero():
    assert np.all(build_realization_game([100.0, 50.0], [100.0, 50.0, 150.0], 4, 1).costs == 0)


def test_first_stage_dr_game_is_the_realization_game(rng):
    q = np.array([100.0, 100.0, 200.0])
    x = rng.normal(100, 10, 2)
    hist = DemandHistory(2).extend(x)
    assert np.array_equal(build_dr_game(hist, q, 1, 1).costs, build_realization_game(x, q, 1, 1).costs)


def test_dr_game_at_order_quantities_stays_zero():
    hist = DemandHistory(2)
    for _ in range(5):
        hist.extend([100.0, 50.0])
        assert np.all(build_dr_game(hist, [100.0, 50.0, 150.0], 2, 1).costs == 0)
    with pytest.raises(DomainError):
        build_dr_game(DemandHistory(2), [100.0, 50.0, 150.0], 2, 1)


def test_dr_game_uses_running_average():
    hist = DemandHistory(2).extend([120.0, 80.0]).extend([100.0, 100.0])
    game = build_dr_game(hist, [100.0, 100.0, 200.0], 3, 1)
    assert list(game.costs) == [30.0, 10.0, 0.0]
    assert game.metadata["T"] == 2


# --- containers

def test_normalization():
    v = normalize(CostGame(2, [10.0, 10.0, 15.0]))
    assert v.values == pytest.approx([2 / 3, 2 / 3, 1])
    assert v.values[-1] == 1.0
    assert normalize(CostGame(2, [0.0, 0.0, 0.0])) is None


@given(st.lists(st.floats(0, 1e4), min_size=7, max_size=7).filter(lambda c: c[-1] > 1e-9))
def test_normalized_grand_coalition_is_exactly_one(costs):
    assert normalize(CostGame(3, costs)).values[-1] == 1.0


def test_games_reject_bad_costs():
    with pytest.raises(DomainError):
        CostGame(2, [1.0, -1.0, 1.0])
    with pytest.raises(DomainError):
        CostGame(2, [1.0, 1.0])
    with pytest.raises(DomainError):
        CostGame(2, [1.0, float("nan"), 1.0])
    game = CostGame(2, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        game.costs[0] = 5


def test_from_values_accepts_masks_and_tuples():
    a = from_values(3, {0b011: 12.0, 0b111: 12.0})
    b = from_values(3, {(0, 1): 12.0, (0, 1, 2): 12.0})
    assert np.array_equal(a.costs, b.costs)
    assert a(3) == 12 and a(5) == 0


def test_json_round_trip_is_lossless(two_store_normal):
    game = build_expected_game(two_store_normal, 3, 1)
    doc = json.loads(game.to_json())
    assert set(doc["costs"]) == {"1", "2", "3"}
    again = CostGame.from_dict(doc)
    assert np.array_equal(again.costs, game.costs)
    assert np.array_equal(again.quantities, game.quantities)
    assert again.to_json() == game.to_json()
    assert doc["metadata"]["demand"]["violates_nonnegativity"] is True


@pytest.mark.parametrize(
    "doc",
    [
        {"costs": {"1": 1.0}},
        {"n": 2, "costs": {"1": 1.0, "2": 1.0}},
        {"n": 2, "costs": {"1": 1.0, "2": 1.0, "3": 1.0, "4": 2.0}},
        {"n": 2, "costs": {"1": "x", "2": 1.0, "3": 1.0}},
        {"n": 2, "costs": {"1": -1.0, "2": 1.0, "3": 1.0}},
    ],
)
def test_malformed_documents_are_rejected(doc):
    with pytest.raises(DomainError):
        CostGame.from_dict(doc)


def test_closed_form_matches_standard_normal_density():
    assert stats.norm.pdf(0) * 20 == pytest.approx(7.978845608, abs=1e-9)
