import math

import numpy as np
import pytest
from scipy import stats

from amsdigital.baselines import (
    McConfig,
    MlmcConfig,
    mlmc_level_sample,
    required_mc_samples,
    run_antithetic_mc,
    run_crude_mc,
    run_mlmc,
)
from amsdigital.contracts import ContractSpec, bs_digital_closed_form, payoff_indicators
from amsdigital.models import BsParams, TimeGrid, paths_from_draws

CALL12 = ContractSpec("digital_call", 1.0, 1, strike=1.2)
TRUTH12 = bs_digital_closed_form(1, 1.2, 0.03, 0.2, 1)


def test_certain_exercise(bs):
    c = ContractSpec("digital_call", 1.0, 4, strike=1e-9)
    r = run_crude_mc(McConfig(1000, bs, c))
    assert r.p_hat == 1.0 and r.price == pytest.approx(math.exp(-0.03))


def test_crude_matches_closed_form(bs):
    r = run_crude_mc(McConfig(1_000_000, bs, CALL12, seed=3))
    assert abs(r.price - TRUTH12) < 3 * r.std_error
    assert r.work == 1_000_000 and r.details["hits"] == round(r.p_hat * 1_000_000)


def test_crude_deterministic_and_work(bs, multi):
    cfg = McConfig(10_000, bs, ContractSpec("digital_call", 1.0, 7, strike=1.1), seed=2, run=4)
    assert run_crude_mc(cfg).p_hat == run_crude_mc(cfg).p_hat
    assert run_crude_mc(cfg).work == 70_000
    mc = ContractSpec("multi_asset_dispersion", 1.0, 3, threshold=1.0, avg_level=1.4)
    assert run_crude_mc(McConfig(1000, multi, mc)).work == 9000
    with pytest.raises(ValueError):
        McConfig(1000, bs, mc)
    with pytest.raises(ValueError):
        McConfig(0, bs, CALL12)


def test_crude_variance_across_replications(bs):
    n, R = 2000, 300
    est = np.array([run_crude_mc(McConfig(n, bs, CALL12, seed=7, run=t)).p_hat
                    for t in range(R)])
    p = TRUTH12 * math.exp(0.03)
    target = p * (1 - p) / n
    # (R-1) s^2 / sigma^2 is roughly chi-square with R-1 dof
    lo, hi = stats.chi2.ppf([0.001, 0.999], R - 1) / (R - 1)
    assert lo < est.var(ddof=1) / target < hi


def test_antithetic_zero_vol_equals_crude():
    p = BsParams(0.03, 0.0)
    c = ContractSpec("digital_call", 1.0, 3, strike=1.02)
    a = run_antithetic_mc(McConfig(1000, p, c))
    b = run_crude_mc(McConfig(1000, p, c))
    assert a.p_hat == b.p_hat == 1.0
    assert a.details["pair_variance"] == 0.0


def test_antithetic_unbiased_and_odd_rejected(bs):
    r = run_antithetic_mc(McConfig(1_000_000, bs, CALL12, seed=5))
    assert abs(r.price - TRUTH12) < 3 * r.std_error
    with pytest.raises(ValueError):
        run_antithetic_mc(McConfig(1001, bs, CALL12))


def test_antithetic_heston_runs(heston):
    c = ContractSpec("digital_call", 1.0, 10, strike=1.1)
    a = run_antithetic_mc(McConfig(200_000, heston, c, seed=1))
    b = run_crude_mc(McConfig(200_000, heston, c, seed=2))
    assert abs(a.p_hat - b.p_hat) < 3 * math.hypot(a.std_error, b.std_error)


def test_required_mc_samples():
    assert required_mc_samples(0.5, 1.0) == 1
    assert required_mc_samples(1e-4, 0.05) == math.ceil(0.9999 / (0.0025 * 1e-4))
    n = required_mc_samples(2.509e-10, 0.1)
    assert 3.9e11 < n < 4.1e11
    for bad in ((0.0, 0.1), (1.0, 0.1), (0.5, 0.0)):
        with pytest.raises(ValueError):
            required_mc_samples(*bad)


# --- MLMC -----------------------------------------------------------------

ASIAN = ContractSpec("asian_digital_call", 1.0, 8, strike=1.1)


def test_mlmc_config_validation():
    with pytest.raises(ValueError):
        MlmcConfig()
    with pytest.raises(ValueError):
        MlmcConfig(n_per_level=(10, 10), max_level=2)
    with pytest.raises(ValueError):
        MlmcConfig(refinement=1, rel_eps=0.1)
    assert MlmcConfig(m0=3, refinement=2, rel_eps=0.1).steps(2) == 12


def test_level_zero_is_crude_mc(bs):
    cfg = MlmcConfig(m0=4, max_level=0, n_per_level=(1000,))
    g1, g2 = np.random.default_rng(1), np.random.default_rng(1)
    y, w = mlmc_level_sample(cfg, 0, 1000, bs, ASIAN, g1)
    z = g2.standard_normal((1000, 4))
    c4 = ContractSpec("asian_digital_call", 1.0, 4, strike=1.1)
    ref = payoff_indicators(c4, paths_from_draws(bs, TimeGrid(1.0, 4), z).prices)
    assert np.array_equal(y, ref) and w == 4000
    r = run_mlmc(cfg, bs, ASIAN)
    assert r.work == 4000 and r.n_paths == 1000


def test_coupling_is_exact_for_terminal_gbm(bs):
    # coarse and fine terminal prices coincide, so level corrections vanish
    c = ContractSpec("digital_call", 1.0, 1, strike=1.1)
    cfg = MlmcConfig(m0=2, max_level=2, n_per_level=(10, 10, 10))
    y, w = mlmc_level_sample(cfg, 2, 5000, bs, c, np.random.default_rng(0))
    assert np.all(y == 0) and w == 5000 * 12


def test_coupling_reduces_variance(bs):
    kw = dict(m0=2, max_level=2, n_per_level=(20_000, 20_000, 20_000), seed=3)
    on = run_mlmc(MlmcConfig(coupled=True, **kw), bs, ASIAN)
    off = run_mlmc(MlmcConfig(coupled=False, **kw), bs, ASIAN)
    for l in (1, 2):
        assert on.details["levels"][l]["var"] < 0.5 * off.details["levels"][l]["var"]
    assert abs(on.p_hat - off.p_hat) < 3 * math.hypot(on.std_error, off.std_error)
    assert on.variance < off.variance


def test_mlmc_matches_fine_crude(bs):
    cfg = MlmcConfig(m0=2, max_level=2, rel_eps=0.01, seed=4)
    r = run_mlmc(cfg, bs, ASIAN)
    fine = ContractSpec("asian_digital_call", 1.0, 8, strike=1.1)
    ref = run_crude_mc(McConfig(1_000_000, bs, fine, seed=5))
    assert abs(r.p_hat - ref.p_hat) < 3 * math.hypot(r.std_error, ref.std_error)
    # the allocation targets the requested standard error
    assert r.std_error < 1.5 * 0.01 * r.p_hat
    assert r.work == sum(l["work"] for l in r.details["levels"])
    for l in r.details["levels"]:
        assert l["work"] == l["n"] * (l["steps"] + (l["steps"] // 2 if l["level"] else 0))


def test_zero_variance_levels_floor_at_pilot():
    p = BsParams(0.03, 0.0)
    r = run_mlmc(MlmcConfig(m0=2, max_level=2, rel_eps=0.1, pilot=50), p, ASIAN)
    assert [l["n"] for l in r.details["levels"]] == [50, 50, 50]


def test_mlmc_heston(heston):
    c = ContractSpec("digital_call", 1.0, 8, strike=1.1)
    r = run_mlmc(MlmcConfig(m0=2, max_level=2, n_per_level=(40_000, 20_000, 10_000)),
                 heston, c)
    ref = run_crude_mc(McConfig(400_000, heston, ContractSpec("digital_call", 1.0, 8,
                                                              strike=1.1), seed=8))
    assert abs(r.p_hat - ref.p_hat) < 3 * math.hypot(r.std_error, ref.std_error)
