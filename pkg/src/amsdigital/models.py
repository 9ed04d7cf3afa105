"""Asset-price dynamics on a fixed time grid.

Three families are supported: Black-Scholes (exact log-normal step), Heston
(quadratic-exponential, full-truncation Euler, or Milstein variance update)
and correlated multi-asset geometric Brownian motion.

Single trajectories are :class:`Trajectory` objects.  The splitting engine and
the baselines work on :class:`PathBatch`, a stack of trajectories held as
2-D (or 3-D for several assets) arrays, so every stepper below accepts
numpy arrays as well as scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.special import ndtr

from .rng import as_generator

__all__ = [
    "BsParams",
    "HestonParams",
    "MultiGbmParams",
    "ModelSpec",
    "TimeGrid",
    "Trajectory",
    "PathBatch",
    "WorkCounter",
    "HESTON_SCHEMES",
    "QE_PSI_CRIT",
    "n_assets",
    "step_bs_exact",
    "cir_moments",
    "qe_step",
    "euler_step",
    "milstein_step",
    "step_heston_qe",
    "step_heston_euler",
    "step_heston_milstein",
    "draw_shape",
    "paths_from_draws",
    "simulate_batch",
    "resume_batch",
    "simulate_path",
    "resume_path",
    "simulate_multi_path",
]

HESTON_SCHEMES = ("qe", "euler", "milstein")
QE_PSI_CRIT = 1.5
# central weights for the integrated variance in the QE price update
_GAMMA1 = 0.5
_GAMMA2 = 0.5


def _finite(name, x):
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class BsParams:
    r: float
    sigma: float
    s0: float = 1.0

    def __post_init__(self):
        _finite("BsParams", (self.r, self.sigma, self.s0))
        # sigma = 0 is allowed as a deterministic limit
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.s0 <= 0:
            raise ValueError("s0 must be positive")


@dataclass(frozen=True)
class HestonParams:
    r: float
    kappa: float
    theta: float
    psi_vov: float
    rho: float
    v0: float
    s0: float = 1.0
    scheme: str = "qe"

    def __post_init__(self):
        _finite("HestonParams", (self.r, self.kappa, self.theta, self.psi_vov,
                                 self.rho, self.v0, self.s0))
        if self.kappa <= 0 or self.theta <= 0:
            raise ValueError("kappa and theta must be positive")
        if self.psi_vov < 0:
            raise ValueError("psi_vov must be non-negative")
        if self.v0 < 0:
            raise ValueError("v0 must be non-negative")
        if abs(self.rho) > 1:
            raise ValueError("rho must lie in [-1, 1]")
        if self.s0 <= 0:
            raise ValueError("s0 must be positive")
        if self.scheme not in HESTON_SCHEMES:
            raise ValueError(f"unknown Heston scheme {self.scheme!r}")
        if self.scheme == "qe" and self.psi_vov == 0:
            raise ValueError("the QE scheme needs psi_vov > 0")


@dataclass(frozen=True)
class MultiGbmParams:
    r: float
    sigma: tuple
    s0: tuple
    corr: tuple
    _factor: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        s0 = np.asarray(self.s0, dtype=float)
        corr = np.asarray(self.corr, dtype=float)
        d = sigma.size
        if sigma.ndim != 1 or s0.shape != (d,) or corr.shape != (d, d):
            raise ValueError("sigma, s0 and corr dimensions disagree")
        _finite("MultiGbmParams", np.concatenate([[self.r], sigma, s0, corr.ravel()]))
        if np.any(sigma <= 0) or np.any(s0 <= 0):
            raise ValueError("sigma and s0 must be positive")
        if not np.allclose(corr, corr.T, atol=1e-12):
            raise ValueError("corr must be symmetric")
        if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
            raise ValueError("corr must have unit diagonal")
        object.__setattr__(self, "sigma", tuple(sigma.tolist()))
        object.__setattr__(self, "s0", tuple(s0.tolist()))
        object.__setattr__(self, "corr", tuple(map(tuple, corr.tolist())))
        object.__setattr__(self, "_factor", _corr_factor(corr))

    @classmethod
    def equicorrelated(cls, r, sigma, s0, rho, d=3):
        corr = np.full((d, d), float(rho))
        np.fill_diagonal(corr, 1.0)
        return cls(r=r, sigma=(sigma,) * d, s0=(s0,) * d, corr=corr)

    @property
    def dim(self) -> int:
        return len(self.sigma)

    @property
    def factor(self) -> np.ndarray:
        """Lower-triangular-ish ``L`` with ``L @ L.T == corr``."""
        return self._factor


def _corr_factor(corr):
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        pass
    # singular but PSD matrices still factor through the eigendecomposition
    w, q = np.linalg.eigh(corr)
    if w.min() < -1e-10:
        raise ValueError("corr is not positive semidefinite")
    return q * np.sqrt(np.clip(w, 0.0, None))


ModelSpec = Union[BsParams, HestonParams, MultiGbmParams]


def n_assets(model) -> int:
    return model.dim if isinstance(model, MultiGbmParams) else 1


@dataclass(frozen=True)
class TimeGrid:
    maturity: float
    m: int

    def __post_init__(self):
        if not (math.isfinite(self.maturity) and self.maturity > 0):
            raise ValueError("maturity must be positive")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be a positive integer")

    @property
    def dt(self) -> float:
        return self.maturity / self.m

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.maturity, self.m + 1)


class WorkCounter:
    """Counts simulated single-asset state transitions."""

    def __init__(self, steps: int = 0):
        self.steps = int(steps)

    def add(self, n) -> None:
        self.steps += int(n)

    def __repr__(self):
        return f"WorkCounter({self.steps})"


@dataclass(frozen=True)
class Trajectory:
    """One simulated path with running statistics of the first asset.

    ``running_sum[i]`` is the sum of prices over indices ``1..i`` (the
    initial price is not part of the Asian average), so ``running_sum[0]``
    is zero.  ``running_max`` and ``running_min`` do include index 0.
    """

    grid: TimeGrid
    prices: np.ndarray
    variances: Optional[np.ndarray]
    running_sum: np.ndarray
    running_max: np.ndarray
    running_min: np.ndarray

    @classmethod
    def from_prices(cls, grid, prices, variances=None):
        prices = np.array(prices, dtype=float)
        if prices.shape[0] != grid.m + 1:
            raise ValueError("prices length must be m + 1")
        first = prices if prices.ndim == 1 else prices[:, 0]
        rsum = np.concatenate([[0.0], np.cumsum(first[1:])])
        if variances is not None:
            variances = np.array(variances, dtype=float)
        for a in (prices, variances, rsum):
            if a is not None:
                a.flags.writeable = False
        rmax = np.maximum.accumulate(first)
        rmin = np.minimum.accumulate(first)
        rmax.flags.writeable = False
        rmin.flags.writeable = False
        return cls(grid, prices, variances, rsum, rmax, rmin)

    @property
    def n_assets(self) -> int:
        return 1 if self.prices.ndim == 1 else self.prices.shape[1]

    @property
    def terminal(self):
        return self.prices[-1]


@dataclass
class PathBatch:
    """A stack of ``n`` paths: ``prices`` is ``(n, m+1)`` or ``(n, m+1, d)``."""

    prices: np.ndarray
    variances: Optional[np.ndarray] = None

    def __len__(self):
        return self.prices.shape[0]

    @property
    def m(self) -> int:
        return self.prices.shape[1] - 1

    def take(self, rows) -> "PathBatch":
        v = None if self.variances is None else self.variances[rows]
        return PathBatch(self.prices[rows], v)

    def put(self, rows, other: "PathBatch") -> None:
        self.prices[rows] = other.prices
        if self.variances is not None:
            self.variances[rows] = other.variances

    def trajectory(self, i: int, grid: TimeGrid) -> Trajectory:
        v = None if self.variances is None else self.variances[i]
        return Trajectory.from_prices(grid, self.prices[i], v)


# ---------------------------------------------------------------------------
# single-step kernels (vectorised)


def step_bs_exact(s, p: BsParams, dt, dw):
    """Exact log-normal step; ``dw`` is the Brownian increment over ``dt``."""
    s = np.asarray(s, dtype=float)
    dw = np.asarray(dw, dtype=float)
    _finite("inputs", s)
    _finite("dw", dw)
    _finite("dt", dt)
    if np.any(s <= 0) or dt <= 0:
        raise ValueError("need s > 0 and dt > 0")
    out = s * np.exp((p.r - 0.5 * p.sigma**2) * dt + p.sigma * dw)
    return float(out) if out.ndim == 0 else out


def cir_moments(v, p: HestonParams, dt):
    """Conditional mean and variance of ``V_{t+dt}`` given ``V_t = v``."""
    e = math.exp(-p.kappa * dt)
    mean = p.theta + (v - p.theta) * e
    var = (v * p.psi_vov**2 * e * (1 - e) / p.kappa
           + p.theta * p.psi_vov**2 * (1 - e) ** 2 / (2 * p.kappa))
    return mean, var


def _qe_variance(v, p, dt, zv):
    v, zv = np.broadcast_arrays(np.asarray(v, dtype=float), np.asarray(zv, dtype=float))
    shape = v.shape
    v, zv = v.ravel(), zv.ravel()
    mean, var = cir_moments(v, p, dt)
    psi = var / mean**2
    out = np.empty_like(v)
    quad = psi <= QE_PSI_CRIT
    if quad.any():
        ps, mq, z = psi[quad], mean[quad], zv[quad]
        b2 = 2 / ps - 1 + np.sqrt(2 / ps) * np.sqrt(2 / ps - 1)
        a = mq / (1 + b2)
        out[quad] = a * (np.sqrt(b2) + z) ** 2
    expo = ~quad
    if expo.any():
        ps, me, z = psi[expo], mean[expo], zv[expo]
        pz = (ps - 1) / (ps + 1)
        beta = (1 - pz) / me
        # U = Phi(z) and 1 - U = Phi(-z): a single normal drives both regimes
        hit = ndtr(z) > pz
        val = np.zeros_like(ps)
        val[hit] = np.log((1 - pz[hit]) / ndtr(-z[hit])) / beta[hit]
        out[expo] = val
    return out.reshape(shape)


def qe_step(s, v, p: HestonParams, dt, zv, eps):
    """Quadratic-exponential Heston step driven by explicit standard normals.

    ``zv`` drives the variance (its normal CDF supplies the uniform of the
    exponential regime), ``eps`` is the independent price shock.
    """
    v_new = _qe_variance(v, p, dt, zv)
    k = p.kappa * p.rho / p.psi_vov - 0.5
    k0 = -p.rho * p.kappa * p.theta * dt / p.psi_vov
    k1 = _GAMMA1 * dt * k - p.rho / p.psi_vov
    k2 = _GAMMA2 * dt * k + p.rho / p.psi_vov
    k3 = _GAMMA1 * dt * (1 - p.rho**2)
    k4 = _GAMMA2 * dt * (1 - p.rho**2)
    diff = np.sqrt(np.maximum(k3 * v + k4 * v_new, 0.0))
    s_new = s * np.exp(p.r * dt + k0 + k1 * v + k2 * v_new + diff * eps)
    return s_new, v_new


def euler_step(s, v, p: HestonParams, dt, zv, eps):
    """Full-truncation Euler for the variance, log-Euler for the price."""
    vp = np.maximum(v, 0.0)
    zs = p.rho * zv + math.sqrt(1 - p.rho**2) * eps
    sq = np.sqrt(vp * dt)
    v_new = np.maximum(v + p.kappa * (p.theta - vp) * dt + p.psi_vov * sq * zv, 0.0)
    s_new = s * np.exp((p.r - 0.5 * vp) * dt + sq * zs)
    return s_new, v_new


def milstein_step(s, v, p: HestonParams, dt, zv, eps):
    vp = np.maximum(v, 0.0)
    zs = p.rho * zv + math.sqrt(1 - p.rho**2) * eps
    sq = np.sqrt(vp * dt)
    v_new = (v + p.kappa * (p.theta - vp) * dt + p.psi_vov * sq * zv
             + 0.25 * p.psi_vov**2 * dt * (zv**2 - 1))
    v_new = np.maximum(v_new, 0.0)
    s_new = s * np.exp((p.r - 0.5 * vp) * dt + sq * zs)
    return s_new, v_new


_KERNELS = {"qe": qe_step, "euler": euler_step, "milstein": milstein_step}


def _checked_heston_step(kernel, s, v, p, dt, rng):
    _finite("inputs", (s, v, dt))
    if v < 0:
        raise ValueError("variance must be non-negative")
    if s <= 0 or dt <= 0:
        raise ValueError("need s > 0 and dt > 0")
    zv, eps = as_generator(rng).standard_normal(2)
    s_new, v_new = kernel(s, v, p, dt, zv, eps)
    return float(s_new), float(v_new)


def step_heston_qe(s, v, p: HestonParams, dt, rng):
    return _checked_heston_step(qe_step, s, v, p, dt, rng)


def step_heston_euler(s, v, p: HestonParams, dt, rng):
    return _checked_heston_step(euler_step, s, v, p, dt, rng)


def step_heston_milstein(s, v, p: HestonParams, dt, rng):
    return _checked_heston_step(milstein_step, s, v, p, dt, rng)


# ---------------------------------------------------------------------------
# batched path generation


def draw_shape(model, n: int, m: int) -> tuple:
    """Shape of the standard-normal array consumed by :func:`paths_from_draws`."""
    if isinstance(model, BsParams):
        return (n, m)
    if isinstance(model, HestonParams):
        return (n, m, 2)
    return (n, m, model.dim)


def _gbm_log_increments(model, dt, z):
    if isinstance(model, BsParams):
        return (model.r - 0.5 * model.sigma**2) * dt + model.sigma * math.sqrt(dt) * z
    sig = np.asarray(model.sigma)
    zc = z @ model.factor.T
    return (model.r - 0.5 * sig**2) * dt + sig * math.sqrt(dt) * zc


def paths_from_draws(model, grid: TimeGrid, z: np.ndarray) -> PathBatch:
    """Build fresh paths from an explicit array of standard normals.

    For Heston, ``z[..., 0]`` drives the variance and ``z[..., 1]`` the
    price.  For several assets the last axis is mapped through the
    correlation factor.  Negating ``z`` gives the antithetic twin.
    """
    n, m = z.shape[0], z.shape[1]
    if m != grid.m:
        raise ValueError("draws do not match the grid")
    dt = grid.dt
    if isinstance(model, HestonParams):
        kernel = _KERNELS[model.scheme]
        s = np.empty((n, m + 1))
        v = np.empty((n, m + 1))
        s[:, 0] = model.s0
        v[:, 0] = model.v0
        for t in range(m):
            s[:, t + 1], v[:, t + 1] = kernel(s[:, t], v[:, t], model, dt,
                                              z[:, t, 0], z[:, t, 1])
        return PathBatch(s, v)
    inc = _gbm_log_increments(model, dt, z)
    logs = np.empty((n, m + 1) + inc.shape[2:])
    logs[:, 0] = np.log(model.s0)
    np.cumsum(inc, axis=1, out=logs[:, 1:])
    logs[:, 1:] += logs[:, :1]
    return PathBatch(np.exp(logs))


def simulate_batch(model, grid: TimeGrid, n: int, rng,
                   counter: Optional[WorkCounter] = None,
                   antithetic: bool = False) -> PathBatch:
    """``n`` independent paths.  With ``antithetic`` row ``i + n/2`` reuses
    the negated draws of row ``i``."""
    gen = as_generator(rng)
    if antithetic:
        if n % 2:
            raise ValueError("antithetic sampling needs an even path count")
        half = gen.standard_normal(draw_shape(model, n // 2, grid.m))
        z = np.concatenate([half, -half])
    else:
        z = gen.standard_normal(draw_shape(model, n, grid.m))
    batch = paths_from_draws(model, grid, z)
    if counter is not None:
        counter.add(n * grid.m * n_assets(model))
    return batch


def resume_batch(model, grid: TimeGrid, base: PathBatch, from_idx, rng,
                 counter: Optional[WorkCounter] = None) -> PathBatch:
    """Copy each path up to ``from_idx[j]`` and regenerate the rest.

    Exactly ``sum(m - from_idx)`` state transitions are drawn; the prefix is
    copied bit-for-bit.
    """
    gen = as_generator(rng)
    from_idx = np.asarray(from_idx, dtype=np.intp)
    n, m = len(base), grid.m
    if from_idx.shape != (n,):
        raise ValueError("one restart index per path")
    if n and (from_idx.min() < 0 or from_idx.max() > m):
        raise IndexError("restart index outside the grid")
    if base.m != m:
        raise ValueError("batch does not match the grid")
    d = n_assets(model)
    if counter is not None:
        counter.add(int((m - from_idx).sum()) * d)
    if n == 0:
        return base.take(slice(0, 0))
    if isinstance(model, HestonParams):
        return _resume_heston(model, grid, base, from_idx, gen)

    cols = np.arange(1, m + 1)
    mask = cols[None, :] > from_idx[:, None]          # (n, m): step into col u is fresh
    z = np.zeros(draw_shape(model, n, m))
    k = int(mask.sum())
    z[mask] = gen.standard_normal((k,) + z.shape[2:]) if z.ndim == 3 else gen.standard_normal(k)
    inc = _gbm_log_increments(model, grid.dt, z)
    if inc.ndim == 3:
        inc = np.where(mask[:, :, None], inc, 0.0)
    else:
        inc = np.where(mask, inc, 0.0)
    cum = np.cumsum(inc, axis=1)
    anchor = base.prices[np.arange(n), from_idx]      # state at the branch point
    fresh = anchor[:, None] * np.exp(cum)
    prices = base.prices.copy()
    sel = mask if fresh.ndim == 2 else mask[:, :, None]
    prices[:, 1:] = np.where(sel, fresh, base.prices[:, 1:])
    return PathBatch(prices)


def _resume_heston(model, grid, base, from_idx, gen):
    kernel = _KERNELS[model.scheme]
    order = np.argsort(from_idx, kind="stable")
    tau = from_idx[order]
    s = base.prices[order].copy()
    v = base.variances[order].copy()
    m, dt = grid.m, grid.dt
    for t in range(int(tau[0]), m):
        cnt = int(np.searchsorted(tau, t, side="right"))
        z = gen.standard_normal((cnt, 2))
        s[:cnt, t + 1], v[:cnt, t + 1] = kernel(s[:cnt, t], v[:cnt, t], model, dt,
                                                z[:, 0], z[:, 1])
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    return PathBatch(s[inv], v[inv])


# ---------------------------------------------------------------------------
# single-trajectory interface


def simulate_path(model, grid: TimeGrid, rng,
                  counter: Optional[WorkCounter] = None) -> Trajectory:
    batch = simulate_batch(model, grid, 1, rng, counter)
    return batch.trajectory(0, grid)


def resume_path(base: Trajectory, from_index: int, model, rng,
                counter: Optional[WorkCounter] = None) -> Trajectory:
    """Keep ``base`` on ``[0, from_index]`` and resimulate the remainder."""
    grid = base.grid
    if not 0 <= from_index <= grid.m:
        raise IndexError("from_index outside the grid")
    if from_index == grid.m:
        return base
    prices = np.array(base.prices)[None]
    var = None if base.variances is None else np.array(base.variances)[None]
    out = resume_batch(model, grid, PathBatch(prices, var), [from_index], rng, counter)
    return out.trajectory(0, grid)


def simulate_multi_path(p: MultiGbmParams, grid: TimeGrid, rng,
                        counter: Optional[WorkCounter] = None) -> Trajectory:
    if not isinstance(p, MultiGbmParams):
        raise TypeError("simulate_multi_path needs MultiGbmParams")
    return simulate_path(p, grid, rng, counter)

