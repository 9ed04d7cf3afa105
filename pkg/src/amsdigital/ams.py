"""Adaptive multilevel splitting for digital payoffs.

The population is a :class:`~amsdigital.models.PathBatch` of ``N`` paths
with cached trajectory scores.  Each iteration takes the ``K``-th smallest
score as the level ``Z``, kills low scorers, and refills their slots with
clones of paths above ``Z``: a clone copies its parent up to the parent's
first crossing of ``Z`` and is resimulated from there with fresh draws.
The weight shrinks by the surviving fraction each iteration, and the final
estimate is ``weight * mean(payoff indicators)``.

Ties at the level
-----------------
On a discrete grid several paths often share the exact same score (every
path that never rises above ``S_0``; clones that branch at the same index
and then fall).  Two rules are provided:

``kill_all`` (default)
    every path with score ``<= Z`` is killed, the weight is multiplied by
    ``(N - killed)/N`` and clones branch where the parent first goes
    strictly above ``Z``.  Without ties this is exactly the fixed-``K``
    algorithm; with ties it stays unbiased.
``fixed``
    exactly ``K`` paths are killed, drawn uniformly among those with score
    ``<= Z``, the weight is multiplied by ``(N - K)/N`` and clones branch at
    the first index with score ``>= Z``.  Biased when ties are frequent.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .contracts import ContractSpec, payoff_indicators, price_from_prob
from .importance import ImportanceSpec, default_l_max, score_paths
from .models import PathBatch, TimeGrid, Trajectory, WorkCounter, resume_batch, simulate_batch
from .rng import RngStream, as_generator

__all__ = [
    "AMSConfig",
    "AMSResult",
    "Extinction",
    "Particle",
    "Population",
    "Termination",
    "ams_estimate",
    "kill_and_clone",
    "run_ams",
    "select_level",
]

log = logging.getLogger(__name__)

TIE_RULES = ("kill_all", "fixed")
PARENT_RULES = ("above", "survivors")


class Termination(str, Enum):
    REACHED_L_MAX = "reached_l_max"
    DEGENERATE_SCORES = "degenerate_scores"
    EXTINCTION = "extinction"
    ITERATION_CAP = "iteration_cap"


class Extinction(RuntimeError):
    """No path lies strictly above the current level, so nothing can be cloned."""


@dataclass(frozen=True)
class AMSConfig:
    n_particles: int
    importance: ImportanceSpec
    discard_fraction: Optional[float] = 0.45
    n_discard: Optional[int] = None
    l_max: Optional[float] = None
    max_iterations: Optional[int] = None
    seed: int = 0
    run: int = 0
    tie_rule: str = "kill_all"
    parent_rule: str = "above"

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("need at least two particles")
        if self.n_discard is None:
            if self.discard_fraction is None or not 0 < self.discard_fraction < 1:
                raise ValueError("discard_fraction must lie in (0, 1)")
        k = self.K
        if not 1 <= k < self.n_particles:
            raise ValueError(f"K = {k} must satisfy 1 <= K < N")
        if self.l_max is not None and not math.isfinite(self.l_max):
            raise ValueError("l_max must be finite")
        if self.tie_rule not in TIE_RULES:
            raise ValueError(f"tie_rule must be one of {TIE_RULES}")
        if self.parent_rule not in PARENT_RULES:
            raise ValueError(f"parent_rule must be one of {PARENT_RULES}")

    @property
    def K(self) -> int:
        if self.n_discard is not None:
            return int(self.n_discard)
        return int(round(self.discard_fraction * self.n_particles))

    @property
    def level(self) -> float:
        return default_l_max(self.importance) if self.l_max is None else float(self.l_max)

    @property
    def iteration_cap(self) -> int:
        if self.max_iterations is not None:
            return int(self.max_iterations)
        # beyond this the weight falls under 1e-16
        frac = (self.n_particles - self.K) / self.n_particles
        return int(math.ceil(math.log(1e-16) / math.log(frac)))


@dataclass
class Particle:
    trajectory: Trajectory
    score: float
    replica: int


@dataclass
class AMSResult:
    p_hat: float
    price: float
    q_iterations: int
    final_weight: float
    work: int
    termination: Termination
    level_history: list
    kill_counts: list
    n_particles: int
    n_discard: int
    capped: bool = False

    @property
    def ties_seen(self) -> bool:
        """True if some iteration killed more than ``K`` paths."""
        return any(k != self.n_discard for k in self.kill_counts)


class Population:
    """``N`` paths plus their cached trajectory scores."""

    def __init__(self, model, grid: TimeGrid, importance: ImportanceSpec,
                 batch: PathBatch, counter: Optional[WorkCounter] = None):
        self.model = model
        self.grid = grid
        self.importance = importance
        self.batch = batch
        self.counter = counter if counter is not None else WorkCounter()
        self.scores = score_paths(importance, batch.prices).max(axis=1)

    @classmethod
    def simulate(cls, model, grid, importance, n, rng, counter=None):
        counter = counter if counter is not None else WorkCounter()
        batch = simulate_batch(model, grid, n, rng, counter)
        return cls(model, grid, importance, batch, counter)

    def __len__(self):
        return len(self.batch)

    def particles(self) -> list[Particle]:
        return [Particle(self.batch.trajectory(j, self.grid), float(self.scores[j]), j)
                for j in range(len(self))]

    def indicators(self, contract: ContractSpec) -> np.ndarray:
        return payoff_indicators(contract, self.batch.prices)


def select_level(scores, K: int) -> float:
    """The ``K``-th smallest score (1-indexed, duplicates counted)."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("no scores")
    if not 1 <= K <= scores.size:
        raise ValueError("K out of range")
    return float(np.partition(scores, K - 1)[K - 1])


def kill_and_clone(pop: Population, Z: float, K: int, rng,
                   tie_rule: str = "kill_all", parent_rule: str = "above") -> np.ndarray:
    """Replace low scorers by branched clones, in place.

    Returns the indices of the replaced slots.  Raises :class:`Extinction`
    when the eligible parent set is empty; the population is then untouched.
    """
    gen = as_generator(rng)
    S = pop.scores
    cand = np.flatnonzero(S <= Z)
    if tie_rule == "kill_all":
        killed = cand
    elif tie_rule == "fixed":
        if cand.size < K:
            raise ValueError("fewer than K paths at or below the level")
        killed = np.sort(gen.choice(cand, size=K, replace=False))
    else:
        raise ValueError(f"unknown tie rule {tie_rule!r}")
    alive = np.ones(len(S), dtype=bool)
    alive[killed] = False
    if parent_rule == "above":
        eligible = np.flatnonzero(alive & (S > Z))
    else:
        eligible = np.flatnonzero(alive)
    if eligible.size == 0:
        raise Extinction(f"no eligible parent above level {Z!r}")
    parents = eligible[gen.integers(eligible.size, size=killed.size)]
    pscores = score_paths(pop.importance, pop.batch.prices[parents])
    strict = tie_rule == "kill_all"
    hit = pscores > Z if strict else pscores >= Z
    branch = hit.argmax(axis=1)
    # a survivor-rule parent may never reach Z: clone it whole
    branch[~hit[np.arange(len(branch)), branch]] = pop.grid.m
    clones = resume_batch(pop.model, pop.grid, pop.batch.take(parents), branch, gen,
                          pop.counter)
    pop.batch.put(killed, clones)
    pop.scores[killed] = score_paths(pop.importance, clones.prices).max(axis=1)
    return killed


def ams_estimate(W: float, indicators) -> float:
    if not 0 < W <= 1:
        raise ValueError("weight must lie in (0, 1]")
    ind = np.asarray(indicators)
    if ind.size == 0:
        raise ValueError("no indicators")
    return float(W * ind.mean())


def run_ams(cfg: AMSConfig, model, contract: ContractSpec,
            stream: Optional[RngStream] = None) -> AMSResult:
    """One AMS run.  Deterministic given ``cfg.seed`` and ``cfg.run``."""
    if cfg.importance.contract != contract:
        raise ValueError("importance function was built for a different contract")
    grid = TimeGrid(contract.maturity, contract.steps)
    stream = stream if stream is not None else RngStream(cfg.seed, cfg.run)
    N, K = cfg.n_particles, cfg.K
    l_max = cfg.level
    cap = cfg.iteration_cap
    pop = Population.simulate(model, grid, cfg.importance, N, stream.with_branch(0))

    W = 1.0
    q = 0
    levels, kills = [], []
    termination = None
    while termination is None:
        Z = select_level(pop.scores, K)
        levels.append(Z)
        if Z >= l_max:
            termination = Termination.REACHED_L_MAX
            break
        if pop.scores.min() == pop.scores.max():
            termination = Termination.DEGENERATE_SCORES
            break
        if q >= cap:
            termination = Termination.ITERATION_CAP
            break
        try:
            killed = kill_and_clone(pop, Z, K, stream.with_branch(q + 1),
                                    cfg.tie_rule, cfg.parent_rule)
        except Extinction:
            termination = Termination.EXTINCTION
            break
        W *= (N - killed.size) / N
        kills.append(int(killed.size))
        q += 1

    capped = termination is Termination.ITERATION_CAP
    if capped:
        warnings.warn(f"AMS hit the iteration cap ({cap}); estimate is not converged",
                      RuntimeWarning, stacklevel=2)
    ind = pop.indicators(contract)
    low = ind.astype(bool) & (pop.scores < l_max)
    if low.any():
        warnings.warn("payoff paths scored below l_max: the importance function does "
                      "not dominate the exercise region", RuntimeWarning, stacklevel=2)
    p_hat = ams_estimate(W, ind)
    log.debug("AMS run %d: q=%d W=%.3e p=%.4e (%s)", cfg.run, q, W, p_hat, termination.value)
    return AMSResult(
        p_hat=p_hat,
        price=price_from_prob(p_hat, model.r, contract.maturity),
        q_iterations=q,
        final_weight=W,
        work=pop.counter.steps,
        termination=termination,
        level_history=levels,
        kill_counts=kills,
        n_particles=N,
        n_discard=K,
        capped=capped,
    )
