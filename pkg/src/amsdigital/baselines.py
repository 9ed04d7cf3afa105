"""Reference estimators: crude Monte Carlo, antithetic variates, multilevel MC."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .contracts import ContractSpec, payoff_indicators, price_from_prob
from .models import (
    TimeGrid,
    draw_shape,
    n_assets,
    paths_from_draws,
)
from .rng import RngStream

__all__ = [
    "EstimateResult",
    "McConfig",
    "MlmcConfig",
    "run_crude_mc",
    "run_antithetic_mc",
    "run_mlmc",
    "mlmc_level_sample",
    "required_mc_samples",
]

# elements (paths x steps x assets) simulated per chunk
_CHUNK_ELEMS = 4_000_000


@dataclass
class EstimateResult:
    p_hat: float
    price: float
    work: int
    variance: float          # variance of the estimator itself
    n_paths: int
    details: dict = field(default_factory=dict)

    @property
    def std_error(self) -> float:
        return math.sqrt(max(self.variance, 0.0))


@dataclass(frozen=True)
class McConfig:
    n_paths: int
    model: object
    contract: ContractSpec
    seed: int = 0
    run: int = 0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if n_assets(self.model) != self.contract.n_assets:
            raise ValueError("model and contract disagree on the number of assets")


def _chunks(n, per_path, even=False):
    size = max(2, _CHUNK_ELEMS // max(per_path, 1))
    if even:
        size -= size % 2
    start = 0
    while start < n:
        stop = min(n, start + size)
        yield start, stop
        start = stop


def _indicator_chunks(cfg: McConfig, antithetic: bool):
    model, c = cfg.model, cfg.contract
    grid = TimeGrid(c.maturity, c.steps)
    stream = RngStream(cfg.seed, cfg.run)
    per_path = c.steps * n_assets(model)
    for i, (a, b) in enumerate(_chunks(cfg.n_paths, per_path, even=antithetic)):
        gen = stream.with_replica(i).generator()
        n = b - a
        if antithetic:
            half = gen.standard_normal(draw_shape(model, n // 2, grid.m))
            z = np.concatenate([half, -half])
        else:
            z = gen.standard_normal(draw_shape(model, n, grid.m))
        yield payoff_indicators(c, paths_from_draws(model, grid, z).prices)


def run_crude_mc(cfg: McConfig) -> EstimateResult:
    hits = 0
    for ind in _indicator_chunks(cfg, antithetic=False):
        hits += int(ind.sum())
    n = cfg.n_paths
    p = hits / n
    var = p * (1 - p) / (n - 1) if n > 1 else 0.0
    c = cfg.contract
    return EstimateResult(
        p_hat=p,
        price=price_from_prob(p, cfg.model.r, c.maturity),
        work=n * c.steps * n_assets(cfg.model),
        variance=var,
        n_paths=n,
        details={"hits": hits},
    )


def run_antithetic_mc(cfg: McConfig) -> EstimateResult:
    """Pairs ``(z, -z)``; for QE the variance uniform reflects to ``1 - u``."""
    n = cfg.n_paths
    if n % 2:
        raise ValueError("antithetic sampling needs an even number of paths")
    pair_sum = 0.0
    pair_sq = 0.0
    for ind in _indicator_chunks(cfg, antithetic=True):
        h = ind.size // 2
        pm = 0.5 * (ind[:h] + ind[h:])
        pair_sum += pm.sum()
        pair_sq += (pm * pm).sum()
    pairs = n // 2
    p = pair_sum / pairs
    pair_var = (pair_sq - pairs * p * p) / (pairs - 1) if pairs > 1 else 0.0
    pair_var = max(pair_var, 0.0)
    c = cfg.contract
    return EstimateResult(
        p_hat=p,
        price=price_from_prob(p, cfg.model.r, c.maturity),
        work=n * c.steps * n_assets(cfg.model),
        variance=pair_var / pairs,
        n_paths=n,
        details={"pair_variance": pair_var},
    )


def required_mc_samples(p, eps_rel) -> int:
    """Paths crude MC needs for relative standard error ``eps_rel``."""
    if not 0 < p < 1:
        raise ValueError("p must lie strictly between 0 and 1")
    if not eps_rel > 0:
        raise ValueError("eps_rel must be positive")
    return math.ceil((1 - p) / (eps_rel**2 * p))


# ---------------------------------------------------------------------------
# multilevel Monte Carlo


@dataclass(frozen=True)
class MlmcConfig:
    """Geometric hierarchy ``m_l = m0 * M**l`` for ``l = 0..max_level``.

    Give either a target standard error (``eps`` absolute or ``rel_eps``
    relative to the pilot estimate) or fixed ``n_per_level`` sample sizes.
    """

    m0: int = 4
    refinement: int = 2
    max_level: int = 3
    eps: Optional[float] = None
    rel_eps: Optional[float] = None
    n_per_level: Optional[tuple] = None
    pilot: int = 1000
    coupled: bool = True
    seed: int = 0
    run: int = 0

    def __post_init__(self):
        if self.m0 < 1 or self.refinement < 2 or self.max_level < 0:
            raise ValueError("need m0 >= 1, refinement >= 2, max_level >= 0")
        if self.pilot < 2:
            raise ValueError("pilot must be at least 2")
        if self.n_per_level is not None:
            if len(self.n_per_level) != self.max_level + 1:
                raise ValueError("one sample size per level")
        elif self.eps is None and self.rel_eps is None:
            raise ValueError("give eps, rel_eps or n_per_level")

    def steps(self, level: int) -> int:
        return self.m0 * self.refinement**level


def _coarsen(z, M):
    n, m = z.shape[:2]
    return z.reshape((n, m // M, M) + z.shape[2:]).sum(axis=2) / math.sqrt(M)


def mlmc_level_sample(cfg: MlmcConfig, level: int, n: int, model, contract, gen):
    """``n`` samples of the level correction ``P_l - P_{l-1}`` (``P_0`` at level 0).

    Coarse paths reuse the fine normals summed in blocks of ``M``, which is
    the exact Brownian coupling for log-normal dynamics; for Heston the
    same aggregation drives both the variance and price shocks, so the
    coupling is approximate.  Returns ``(y, steps_simulated)``.
    """
    T = contract.maturity
    mf = cfg.steps(level)
    fine_c = replace(contract, steps=mf)
    z = gen.standard_normal(draw_shape(model, n, mf))
    pf = payoff_indicators(fine_c, paths_from_draws(model, TimeGrid(T, mf), z).prices)
    d = n_assets(model)
    if level == 0:
        return pf.astype(float), n * mf * d
    mc = mf // cfg.refinement
    coarse_c = replace(contract, steps=mc)
    if cfg.coupled:
        zc = _coarsen(z, cfg.refinement)
    else:
        zc = gen.standard_normal(draw_shape(model, n, mc))
    pc = payoff_indicators(coarse_c, paths_from_draws(model, TimeGrid(T, mc), zc).prices)
    return pf.astype(float) - pc, n * (mf + mc) * d


class _LevelStats:
    def __init__(self):
        self.n = 0
        self.s1 = 0.0
        self.s2 = 0.0
        self.work = 0

    def add(self, y, work):
        self.n += y.size
        self.s1 += float(y.sum())
        self.s2 += float((y * y).sum())
        self.work += work

    @property
    def mean(self):
        return self.s1 / self.n

    @property
    def var(self):
        if self.n < 2:
            return 0.0
        return max((self.s2 - self.n * self.mean**2) / (self.n - 1), 0.0)


def _sample_level(cfg, level, n, model, contract, stream, stats, batch_no):
    per = cfg.steps(level) * 2 * n_assets(model)
    for j, (a, b) in enumerate(_chunks(n, per)):
        gen = stream.with_replica(level).with_branch(batch_no * 10_000 + j).generator()
        y, w = mlmc_level_sample(cfg, level, b - a, model, contract, gen)
        stats.add(y, w)


def run_mlmc(cfg: MlmcConfig, model, contract: ContractSpec) -> EstimateResult:
    """Telescoping estimator with per-level allocation ``N_l ~ sqrt(V_l / C_l)``."""
    if n_assets(model) != contract.n_assets:
        raise ValueError("model and contract disagree on the number of assets")
    stream = RngStream(cfg.seed, cfg.run)
    L = cfg.max_level
    stats = [_LevelStats() for _ in range(L + 1)]
    cost = np.array([cfg.steps(l) + (cfg.steps(l - 1) if l else 0) for l in range(L + 1)],
                    dtype=float)

    if cfg.n_per_level is not None:
        targets = [int(n) for n in cfg.n_per_level]
        for l in range(L + 1):
            _sample_level(cfg, l, targets[l], model, contract, stream, stats[l], 0)
    else:
        for l in range(L + 1):
            _sample_level(cfg, l, cfg.pilot, model, contract, stream, stats[l], 0)
        V = np.array([s.var for s in stats])
        if cfg.eps is not None:
            eps = cfg.eps
        else:
            est = sum(s.mean for s in stats)
            if est <= 0:
                est = max(stats[0].mean, 1.0 / (cfg.pilot + 1))
            eps = cfg.rel_eps * est
        root = np.sqrt(V * cost).sum()
        targets = []
        for l in range(L + 1):
            if V[l] <= 0:
                nl = cfg.pilot
            else:
                nl = math.ceil(eps**-2 * math.sqrt(V[l] / cost[l]) * root)
            targets.append(max(nl, cfg.pilot))
            extra = targets[l] - stats[l].n
            if extra > 0:
                _sample_level(cfg, l, extra, model, contract, stream, stats[l], 1)

    p = sum(s.mean for s in stats)
    var = sum(s.var / s.n for s in stats)
    return EstimateResult(
        p_hat=p,
        # the telescoped sum can leave [0, 1] by sampling noise
        price=math.exp(-model.r * contract.maturity) * p,
        work=sum(s.work for s in stats),
        variance=var,
        n_paths=sum(s.n for s in stats),
        details={
            "levels": [
                {"level": l, "steps": cfg.steps(l), "n": s.n, "mean": s.mean,
                 "var": s.var, "work": s.work}
                for l, s in enumerate(stats)
            ],
        },
    )
