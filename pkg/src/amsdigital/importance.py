"""Importance (score) functions for the splitting engine.

Three families:

``path_based``
    the running statistic the payoff looks at (spot, running average,
    running extremum), sign-flipped for puts so that larger always means
    closer to exercise;
``bs_analytic``
    the Black-Scholes digital price with that running statistic as spot and
    the remaining maturity, whatever the simulated model;
``multi_asset_sum``
    ``max pairwise spread + cross-sectional mean`` for the dispersion digital.

A trajectory's score is the maximum of the per-index score over the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import ndtr

from .contracts import ContractKind, ContractSpec
from .models import BsParams, HestonParams, MultiGbmParams, Trajectory

__all__ = [
    "Family",
    "ImportanceSpec",
    "score_paths",
    "score_at",
    "trajectory_score",
    "first_crossing_index",
    "first_crossing",
    "default_l_max",
]


class Family(str, Enum):
    PATH_BASED = "path_based"
    BS_ANALYTIC = "bs_analytic"
    MULTI_ASSET_SUM = "multi_asset_sum"


@dataclass(frozen=True)
class ImportanceSpec:
    family: Family
    contract: ContractSpec
    sigma: float = 0.2
    r: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        multi = self.contract.kind is ContractKind.MULTI_ASSET_DISPERSION
        if multi != (self.family is Family.MULTI_ASSET_SUM):
            raise ValueError(
                f"{self.family.value} cannot score a {self.contract.kind.value} contract")
        if self.family is Family.BS_ANALYTIC and not self.sigma > 0:
            raise ValueError("bs_analytic needs a positive volatility input")

    @classmethod
    def for_model(cls, family, contract, model, sigma=None):
        """Pick the volatility input from the model.

        Heston uses the long-run volatility ``sqrt(theta)`` unless ``sigma``
        is given.
        """
        if sigma is None:
            if isinstance(model, BsParams):
                sigma = model.sigma
            elif isinstance(model, HestonParams):
                sigma = math.sqrt(model.theta)
            elif isinstance(model, MultiGbmParams):
                sigma = float(np.mean(model.sigma))
        return cls(family, contract, sigma=sigma, r=model.r)


def _running_stat(kind, prices):
    if kind in (ContractKind.DIGITAL_CALL, ContractKind.DIGITAL_PUT):
        return prices
    if kind.is_asian:
        n, m1 = prices.shape
        csum = np.cumsum(prices[:, 1:], axis=1)
        avg = np.empty_like(prices)
        avg[:, 0] = prices[:, 0]
        avg[:, 1:] = csum / np.arange(1, m1)
        return avg
    if kind is ContractKind.BARRIER_UP_IN_CALL:
        return np.maximum.accumulate(prices, axis=1)
    return np.minimum.accumulate(prices, axis=1)


def _bs_digital(spot, level, tau, sigma, r, put):
    """Digital price on arrays; at ``tau == 0`` it is the exercise indicator."""
    out = np.empty_like(spot)
    live = tau > 0
    if np.any(live):
        tl = tau[live]
        sl = spot[live]
        d2 = (np.log(sl / level) + (r - 0.5 * sigma**2) * tl) / (sigma * np.sqrt(tl))
        out[live] = np.exp(-r * tl) * ndtr(-d2 if put else d2)
    dead = ~live
    if np.any(dead):
        sd = spot[dead]
        hit = sd < level if put else sd > level
        # the Phi(0) limit at the money
        out[dead] = np.where(sd == level, 0.5, hit.astype(float))
    return out


def score_paths(spec: ImportanceSpec, prices: np.ndarray) -> np.ndarray:
    """Per-index scores, shape ``(n, m+1)``, for a stack of paths."""
    c = spec.contract
    prices = np.asarray(prices, dtype=float)
    if spec.family is Family.MULTI_ASSET_SUM:
        if prices.ndim != 3:
            raise ValueError("multi_asset_sum needs multi-asset paths")
        spread = prices.max(axis=2) - prices.min(axis=2)
        return spread + prices.mean(axis=2)
    if prices.ndim != 2:
        raise ValueError("single-asset score given multi-asset paths")
    stat = _running_stat(c.kind, prices)
    put = c.kind.is_put
    if spec.family is Family.PATH_BASED:
        return -stat if put else stat
    m = prices.shape[1] - 1
    tau = c.maturity * (1.0 - np.arange(m + 1) / m)
    tau[-1] = 0.0
    tau = np.broadcast_to(tau, stat.shape)
    return _bs_digital(stat, c.level, tau, spec.sigma, spec.r, put)


def score_at(spec: ImportanceSpec, traj: Trajectory, i: int) -> float:
    if not 0 <= i <= traj.grid.m:
        raise IndexError("grid index out of range")
    return float(_traj_scores(spec, traj)[i])


def _traj_scores(spec, traj):
    return score_paths(spec, np.asarray(traj.prices)[None])[0]


def trajectory_score(spec: ImportanceSpec, traj: Trajectory) -> float:
    return float(_traj_scores(spec, traj).max())


def first_crossing(scores: np.ndarray, z, strict: bool = False) -> np.ndarray:
    """Row-wise first index where ``scores >= z`` (``> z`` if ``strict``).

    Rows without a crossing raise: callers only ask for paths that reach
    the level.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim:
        z = z[:, None]
    hit = scores > z if strict else scores >= z
    idx = hit.argmax(axis=1)
    if not hit[np.arange(len(idx)), idx].all():
        raise RuntimeError("first-crossing requested for a path below the level")
    return idx


def first_crossing_index(spec: ImportanceSpec, traj: Trajectory, z) -> int:
    return int(first_crossing(_traj_scores(spec, traj)[None], z)[0])


def default_l_max(spec: ImportanceSpec, contract: ContractSpec | None = None) -> float:
    """The rare level implied by the contract.

    Path-based scores use the strike or barrier (negated for puts, matching
    the sign flip of the score), the analytic score uses 0.5 and the
    dispersion score uses ``L + K_avg``.
    """
    c = spec.contract if contract is None else contract
    if c is not spec.contract and c != spec.contract:
        ImportanceSpec(spec.family, c, spec.sigma, spec.r)   # compatibility check
    if spec.family is Family.MULTI_ASSET_SUM:
        return c.threshold + c.avg_level
    if spec.family is Family.BS_ANALYTIC:
        return 0.5
    return -c.level if c.kind.is_put else c.level
