"""Binary contracts: exercise indicators, closed-form prices, discounting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .models import Trajectory

__all__ = [
    "ContractKind",
    "ContractSpec",
    "payoff_indicator",
    "payoff_indicators",
    "bs_digital_closed_form",
    "price_from_prob",
]


class ContractKind(str, Enum):
    DIGITAL_CALL = "digital_call"
    DIGITAL_PUT = "digital_put"
    ASIAN_DIGITAL_CALL = "asian_digital_call"
    ASIAN_DIGITAL_PUT = "asian_digital_put"
    BARRIER_UP_IN_CALL = "barrier_up_in_call"
    BARRIER_UP_IN_PUT = "barrier_up_in_put"
    MULTI_ASSET_DISPERSION = "multi_asset_dispersion"

    @property
    def is_put(self) -> bool:
        return self in (ContractKind.DIGITAL_PUT, ContractKind.ASIAN_DIGITAL_PUT,
                        ContractKind.BARRIER_UP_IN_PUT)

    @property
    def is_barrier(self) -> bool:
        return self in (ContractKind.BARRIER_UP_IN_CALL, ContractKind.BARRIER_UP_IN_PUT)

    @property
    def is_asian(self) -> bool:
        return self in (ContractKind.ASIAN_DIGITAL_CALL, ContractKind.ASIAN_DIGITAL_PUT)


_STRIKE_KINDS = {ContractKind.DIGITAL_CALL, ContractKind.DIGITAL_PUT,
                 ContractKind.ASIAN_DIGITAL_CALL, ContractKind.ASIAN_DIGITAL_PUT}


@dataclass(frozen=True)
class ContractSpec:
    """A binary contract.

    Only the parameters relevant to ``kind`` may be set: ``strike`` for
    European and Asian digitals, ``barrier`` for the barrier kinds,
    ``threshold`` (dispersion level L) and ``avg_level`` (K_avg) for the
    three-asset dispersion digital.
    """

    kind: ContractKind
    maturity: float
    steps: int
    strike: Optional[float] = None
    barrier: Optional[float] = None
    threshold: Optional[float] = None
    avg_level: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ContractKind(self.kind))
        if not (math.isfinite(self.maturity) and self.maturity > 0):
            raise ValueError("maturity must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")
        if self.kind in _STRIKE_KINDS:
            needed = {"strike"}
        elif self.kind.is_barrier:
            needed = {"barrier"}
        else:
            needed = {"threshold", "avg_level"}
        for name in ("strike", "barrier", "threshold", "avg_level"):
            val = getattr(self, name)
            if name in needed:
                if val is None or not (math.isfinite(val) and val > 0):
                    raise ValueError(f"{self.kind.value} needs a positive {name}")
            elif val is not None:
                raise ValueError(f"{name} is not a parameter of {self.kind.value}")

    @property
    def level(self) -> float:
        """The price level of the exercise condition (strike or barrier)."""
        if self.kind.is_barrier:
            return self.barrier
        if self.kind is ContractKind.MULTI_ASSET_DISPERSION:
            raise ValueError("the dispersion digital has no single price level")
        return self.strike

    @property
    def n_assets(self) -> int:
        return 3 if self.kind is ContractKind.MULTI_ASSET_DISPERSION else 1


# Averages and spreads carry rounding error, so values within this relative
# distance of the threshold count as ties (ties pay zero).
TIE_RTOL = 1e-13


def _above(x, level):
    return x > level + TIE_RTOL * abs(level)


def _below(x, level):
    return x < level - TIE_RTOL * abs(level)


def payoff_indicators(c: ContractSpec, prices: np.ndarray) -> np.ndarray:
    """Exercise indicators (0/1 ints) for a stack of paths.

    ``prices`` has shape ``(n, m+1)``, or ``(n, m+1, 3)`` for the dispersion
    digital.  Every condition is a strict inequality, so ties pay zero.
    """
    prices = np.asarray(prices)
    if prices.shape[1] != c.steps + 1:
        raise ValueError("paths do not match the contract step count")
    k = c.kind
    if k is ContractKind.MULTI_ASSET_DISPERSION:
        if prices.ndim != 3 or prices.shape[2] != 3:
            raise ValueError("the dispersion digital needs three-asset paths")
        term = prices[:, -1, :]
        spread = term.max(axis=1) - term.min(axis=1)
        hit = _above(spread, c.threshold) & _above(term.mean(axis=1), c.avg_level)
        return hit.astype(np.int8)
    if prices.ndim != 2:
        raise ValueError("single-asset contract given multi-asset paths")
    if k is ContractKind.DIGITAL_CALL:
        hit = prices[:, -1] > c.strike
    elif k is ContractKind.DIGITAL_PUT:
        hit = prices[:, -1] < c.strike
    elif k is ContractKind.ASIAN_DIGITAL_CALL:
        hit = _above(prices[:, 1:].mean(axis=1), c.strike)
    elif k is ContractKind.ASIAN_DIGITAL_PUT:
        hit = _below(prices[:, 1:].mean(axis=1), c.strike)
    elif k is ContractKind.BARRIER_UP_IN_CALL:
        hit = prices.max(axis=1) > c.barrier
    else:
        hit = prices.min(axis=1) < c.barrier
    return hit.astype(np.int8)


def payoff_indicator(c: ContractSpec, traj: Trajectory) -> int:
    grid = traj.grid
    if grid.m != c.steps or not math.isclose(grid.maturity, c.maturity, rel_tol=1e-12):
        raise ValueError("trajectory grid does not match the contract")
    k = c.kind
    if k is ContractKind.MULTI_ASSET_DISPERSION:
        return int(payoff_indicators(c, traj.prices[None])[0])
    if traj.n_assets != 1:
        raise ValueError("single-asset contract given a multi-asset trajectory")
    m = grid.m
    if k is ContractKind.DIGITAL_CALL:
        hit = traj.prices[-1] > c.strike
    elif k is ContractKind.DIGITAL_PUT:
        hit = traj.prices[-1] < c.strike
    elif k is ContractKind.ASIAN_DIGITAL_CALL:
        hit = _above(traj.running_sum[m] / m, c.strike)
    elif k is ContractKind.ASIAN_DIGITAL_PUT:
        hit = _below(traj.running_sum[m] / m, c.strike)
    elif k is ContractKind.BARRIER_UP_IN_CALL:
        hit = traj.running_max[m] > c.barrier
    else:
        hit = traj.running_min[m] < c.barrier
    return int(hit)


def bs_digital_closed_form(s0, K, r, sigma, T, call_or_put="call") -> float:
    """Black-Scholes price of a cash-or-nothing digital paying 1."""
    if call_or_put not in ("call", "put"):
        raise ValueError("call_or_put must be 'call' or 'put'")
    if not all(math.isfinite(x) for x in (s0, K, r, sigma, T)):
        raise ValueError("inputs must be finite")
    if s0 <= 0 or K <= 0 or T < 0 or sigma < 0:
        raise ValueError("need s0, K > 0 and sigma, T >= 0")
    disc = math.exp(-r * T)
    vol = sigma * math.sqrt(T)
    if vol == 0:
        fwd = s0 * math.exp(r * T)
        itm = fwd > K if call_or_put == "call" else fwd < K
        return disc * float(itm)
    d2 = (math.log(s0 / K) + (r - 0.5 * sigma**2) * T) / vol
    return disc * float(ndtr(d2 if call_or_put == "call" else -d2))


def price_from_prob(p_hat, r, T) -> float:
    if not 0 <= p_hat <= 1:
        raise ValueError("probability must lie in [0, 1]")
    return math.exp(-r * T) * p_hat
