import math

import numpy as np
import pytest
from scipy import stats

from amsdigital.contracts import ContractSpec, payoff_indicator, payoff_indicators
from amsdigital.importance import (
    Family,
    ImportanceSpec,
    default_l_max,
    first_crossing,
    first_crossing_index,
    score_at,
    score_paths,
    trajectory_score,
)
from amsdigital.models import TimeGrid, Trajectory, simulate_batch
from amsdigital.rng import RngStream

CALL = ContractSpec("digital_call", 1.0, 4, strike=1.5)


def traj(prices):
    return Trajectory.from_prices(TimeGrid(1.0, len(prices) - 1), np.asarray(prices, float))


def test_family_contract_compatibility():
    multi = ContractSpec("multi_asset_dispersion", 1.0, 1, threshold=1.0, avg_level=1.4)
    with pytest.raises(ValueError):
        ImportanceSpec("path_based", multi)
    with pytest.raises(ValueError):
        ImportanceSpec("multi_asset_sum", CALL)
    with pytest.raises(ValueError):
        ImportanceSpec("bs_analytic", CALL, sigma=0.0)


def test_path_based_identity_and_put_sign():
    t = traj([1.0, 1.7, 1.2, 1.1, 1.0])
    assert score_at(ImportanceSpec("path_based", CALL), t, 1) == 1.7
    put = ContractSpec("digital_put", 1.0, 4, strike=0.8)
    assert score_at(ImportanceSpec("path_based", put), t, 1) == -1.7
    with pytest.raises(IndexError):
        score_at(ImportanceSpec("path_based", CALL), t, 5)


def test_put_score_orders_by_distance_to_exercise(bs):
    put = ContractSpec("digital_put", 1.0, 10, strike=0.8)
    spec = ImportanceSpec("path_based", put)
    b = simulate_batch(bs, TimeGrid(1.0, 10), 100, RngStream(4))
    s = score_paths(spec, b.prices)[:, -1]
    distance = np.maximum(b.prices[:, -1] - 0.8, 0.0)
    # lower spot = nearer exercise = higher score
    assert stats.spearmanr(s, -distance).statistic > 0.99


def test_bs_analytic_terminal_limit():
    spec = ImportanceSpec("bs_analytic", CALL, sigma=0.2, r=0.03)
    assert score_at(spec, traj([1, 1, 1, 1, 1.6]), 4) == 1.0
    assert score_at(spec, traj([1, 1, 1, 1, 1.4]), 4) == 0.0
    # approaching maturity from inside the money drives the score towards 1
    near = ContractSpec("digital_call", 1.0, 1000, strike=1.5)
    sp = ImportanceSpec("bs_analytic", near, sigma=0.2, r=0.03)
    p = np.full(1001, 1.6)
    assert score_paths(sp, p[None])[0, 999] > 0.999


def test_bs_analytic_matches_closed_form():
    from amsdigital.contracts import bs_digital_closed_form
    spec = ImportanceSpec("bs_analytic", CALL, sigma=0.2, r=0.03)
    t = traj([1.0, 1.1, 1.3, 1.2, 1.25])
    assert score_at(spec, t, 2) == pytest.approx(
        bs_digital_closed_form(1.3, 1.5, 0.03, 0.2, 0.5), rel=1e-12)


def test_running_statistic_scores():
    t = traj([1.0, 1.4, 1.2, 0.6, 1.0])
    up = ContractSpec("barrier_up_in_call", 1.0, 4, barrier=1.5)
    dn = ContractSpec("barrier_up_in_put", 1.0, 4, barrier=0.5)
    asian = ContractSpec("asian_digital_call", 1.0, 4, strike=1.2)
    np.testing.assert_allclose(score_paths(ImportanceSpec("path_based", up), t.prices[None])[0],
                               [1.0, 1.4, 1.4, 1.4, 1.4])
    np.testing.assert_allclose(score_paths(ImportanceSpec("path_based", dn), t.prices[None])[0],
                               [-1.0, -1.0, -1.0, -0.6, -0.6])
    np.testing.assert_allclose(
        score_paths(ImportanceSpec("path_based", asian), t.prices[None])[0],
        [1.0, 1.4, 1.3, 3.2 / 3, 1.05])


def test_multi_sum_score():
    c = ContractSpec("multi_asset_dispersion", 1.0, 1, threshold=1.0, avg_level=1.4)
    spec = ImportanceSpec("multi_asset_sum", c)
    p = np.array([[[1.0, 1.0, 1.0], [2.5, 0.9, 0.8]]])
    np.testing.assert_allclose(score_paths(spec, p)[0], [1.0, 1.7 + 4.2 / 3])


def test_trajectory_score_is_max(bs):
    spec = ImportanceSpec("bs_analytic", ContractSpec("digital_call", 1.0, 20, strike=1.3),
                          sigma=0.2, r=0.03)
    grid = TimeGrid(1.0, 20)
    b = simulate_batch(bs, grid, 1000, RngStream(3))
    for i in range(0, 1000, 50):
        t = b.trajectory(i, grid)
        brute = max(score_at(spec, t, j) for j in range(21))
        assert trajectory_score(spec, t) == brute
    assert trajectory_score(ImportanceSpec("path_based", CALL), traj([1.2] * 5)) == 1.2
    assert trajectory_score(ImportanceSpec("path_based", CALL),
                            traj([1.0, 1.1, 1.2, 1.3, 1.4])) == 1.4


def test_extension_below_max_keeps_score():
    spec = ImportanceSpec("path_based", ContractSpec("digital_call", 1.0, 3, strike=1.5))
    longer = ImportanceSpec("path_based", ContractSpec("digital_call", 1.0, 5, strike=1.5))
    a = traj([1.0, 1.4, 1.2, 1.1])
    b = traj([1.0, 1.4, 1.2, 1.1, 1.0, 1.3])
    assert trajectory_score(spec, a) == trajectory_score(longer, b)


def test_first_crossing():
    spec = ImportanceSpec("path_based", CALL)
    t = traj([1.0, 1.3, 1.2, 1.4, 1.1])
    assert first_crossing_index(spec, t, 0.9) == 0
    assert first_crossing_index(spec, t, 1.4) == 3
    assert first_crossing_index(spec, t, 1.25) == 1
    with pytest.raises(RuntimeError):
        first_crossing_index(spec, t, 1.5)


def test_first_crossing_linear_scan_and_monotone(gen):
    scores = gen.standard_normal((200, 15)).cumsum(axis=1)
    lo, hi = scores.min(axis=1), scores.max(axis=1)
    z = lo + (hi - lo) * gen.uniform(size=200)
    idx = first_crossing(scores, z)
    for j in range(200):
        scan = next(i for i in range(15) if scores[j, i] >= z[j])
        assert idx[j] == scan
    zs = np.linspace(scores[0].min(), scores[0].max(), 30)
    seq = [first_crossing(scores[:1], zz)[0] for zz in zs]
    assert all(a <= b for a, b in zip(seq, seq[1:]))
    strict = first_crossing(scores[:1], scores[0, 4], strict=False)[0]
    assert scores[0, strict] >= scores[0, 4]


def test_default_l_max():
    c22 = ContractSpec("digital_call", 1.0, 50, strike=2.2)
    assert default_l_max(ImportanceSpec("path_based", c22)) == 2.2
    assert default_l_max(ImportanceSpec("bs_analytic", c22)) == 0.5
    bar = ContractSpec("barrier_up_in_call", 1.0, 50, barrier=2.45)
    assert default_l_max(ImportanceSpec("bs_analytic", bar)) == 0.5
    assert default_l_max(ImportanceSpec("path_based", bar)) == 2.45
    put = ContractSpec("digital_put", 1.0, 50, strike=0.5)
    assert default_l_max(ImportanceSpec("path_based", put)) == -0.5
    multi = ContractSpec("multi_asset_dispersion", 1.0, 1, threshold=1.0, avg_level=1.4)
    assert default_l_max(ImportanceSpec("multi_asset_sum", multi)) == pytest.approx(2.4)


def test_for_model_volatility(bs, heston, multi):
    assert ImportanceSpec.for_model("bs_analytic", CALL, bs).sigma == 0.2
    assert ImportanceSpec.for_model("bs_analytic", CALL, heston).sigma == pytest.approx(0.2)
    assert ImportanceSpec.for_model("bs_analytic", CALL, heston, sigma=0.3).sigma == 0.3
    assert ImportanceSpec.for_model("path_based", CALL, bs).family is Family.PATH_BASED
