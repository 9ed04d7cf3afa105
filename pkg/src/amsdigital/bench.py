"""Experiment orchestration: replicated runs, sweeps and report files."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .ams import AMSConfig, run_ams
from .baselines import McConfig, MlmcConfig, run_antithetic_mc, run_crude_mc, run_mlmc
from .contracts import ContractSpec
from .importance import ImportanceSpec

__all__ = [
    "METHODS",
    "REPORT_COLUMNS",
    "ExperimentSpec",
    "ReportRow",
    "RunRecord",
    "relative_accuracy",
    "run_experiment",
    "sweep_k",
    "sweep_n",
    "emit_report",
    "format_report",
]

log = logging.getLogger(__name__)

METHODS = ("ams", "crude_mc", "antithetic_mc", "mlmc")
REPORT_COLUMNS = ("experiment", "method", "mean", "variance", "rel_accuracy",
                  "work", "iterations", "runs", "wall_ms")


def relative_accuracy(estimates: Sequence[float]) -> float:
    """Sample standard deviation (divisor ``R - 1``) over the sample mean."""
    x = np.asarray(estimates, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two estimates")
    mean = x.mean()
    if not mean > 0:
        warnings.warn("relative accuracy undefined for a non-positive mean", RuntimeWarning,
                      stacklevel=2)
        return math.nan
    return float(x.std(ddof=1) / mean)


@dataclass(frozen=True)
class ExperimentSpec:
    """One method on one (model, contract) pair, replicated over seeds and runs.

    ``method_config`` keys: ``n`` (particles or paths), ``k``, ``importance``,
    ``l_max``, ``tie_rule`` for AMS; ``n`` for the MC methods; ``m0``,
    ``refinement``, ``max_level``, ``rel_eps``/``eps``/``n_per_level``,
    ``pilot`` for MLMC.
    """

    experiment_id: str
    model: object
    contract: ContractSpec
    method: str
    method_config: dict = field(default_factory=dict)
    seeds: tuple = (1, 2, 3, 4, 5)
    runs_per_seed: int = 10

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("duplicate seeds would reuse random streams")
        if self.runs_per_seed < 1:
            raise ValueError("runs_per_seed must be positive")
        if self.n_runs < 2:
            raise ValueError("need at least two runs to estimate a variance")
        # build one config now so bad parameters fail before any simulation
        _method_runner(self, self.seeds[0], 0)

    @property
    def n_runs(self) -> int:
        return len(self.seeds) * self.runs_per_seed

    def stream_ids(self) -> list:
        return [(s, t) for s in self.seeds for t in range(self.runs_per_seed)]


@dataclass
class RunRecord:
    seed: int
    run: int
    estimate: float
    work: int
    iterations: Optional[int] = None
    error: Optional[str] = None
    extra: dict = field(default_factory=dict)


@dataclass
class ReportRow:
    experiment: str
    method: str
    mean: float
    variance: float
    rel_accuracy: float
    work: float
    iterations: Optional[float]
    runs: int
    wall_ms: float
    records: list = field(default_factory=list, repr=False)
    extra: dict = field(default_factory=dict)

    @property
    def total_work(self) -> int:
        return sum(r.work for r in self.records if r.error is None)

    @property
    def estimates(self) -> np.ndarray:
        return np.array([r.estimate for r in self.records if r.error is None])

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.runs) if self.runs else math.nan

    def as_dict(self, extra_columns=()) -> dict:
        d = {k: getattr(self, k) for k in REPORT_COLUMNS}
        for k in extra_columns:
            d[k] = self.extra.get(k)
        return d


def _method_runner(spec: ExperimentSpec, seed: int, run: int):
    cfg = dict(spec.method_config)
    model, contract = spec.model, spec.contract
    if spec.method == "ams":
        imp = ImportanceSpec.for_model(cfg.get("importance", "path_based"), contract, model,
                                       sigma=cfg.get("importance_sigma"))
        k = cfg.get("k", 0.45)
        ac = AMSConfig(
            n_particles=int(cfg.get("n", 50_000)),
            importance=imp,
            discard_fraction=None if cfg.get("n_discard") else float(k),
            n_discard=cfg.get("n_discard"),
            l_max=cfg.get("l_max"),
            max_iterations=cfg.get("max_iterations"),
            seed=seed,
            run=run,
            tie_rule=cfg.get("tie_rule", "kill_all"),
            parent_rule=cfg.get("parent_rule", "above"),
        )

        def go():
            res = run_ams(ac, model, contract)
            return RunRecord(seed, run, res.price, res.work, res.q_iterations,
                             extra={"p_hat": res.p_hat, "weight": res.final_weight,
                                    "kills": res.kill_counts, "levels": res.level_history,
                                    "termination": res.termination.value,
                                    "n_discard": res.n_discard})
        return go
    if spec.method in ("crude_mc", "antithetic_mc"):
        mc = McConfig(int(cfg.get("n", 1_000_000)), model, contract, seed=seed, run=run)
        fn = run_crude_mc if spec.method == "crude_mc" else run_antithetic_mc

        def go():
            res = fn(mc)
            return RunRecord(seed, run, res.price, res.work,
                             extra={"p_hat": res.p_hat, "variance": res.variance})
        return go
    keys = ("m0", "refinement", "max_level", "eps", "rel_eps", "n_per_level", "pilot",
            "coupled")
    ml = MlmcConfig(seed=seed, run=run, **{k: cfg[k] for k in keys if k in cfg})

    def go():
        res = run_mlmc(ml, model, contract)
        return RunRecord(seed, run, res.price, res.work,
                         extra={"p_hat": res.p_hat, "levels": res.details["levels"]})
    return go


def run_experiment(spec: ExperimentSpec) -> list:
    """Run every ``(seed, run)`` pair and aggregate into one report row.

    A failing run is recorded with its error and left out of the statistics.
    """
    t0 = time.perf_counter()
    records = []
    for seed, run in spec.stream_ids():
        try:
            rec = _method_runner(spec, seed, run)()
        except Exception as exc:  # keep the matrix going
            log.warning("%s seed=%d run=%d failed: %s", spec.experiment_id, seed, run, exc)
            rec = RunRecord(seed, run, math.nan, 0, error=f"{type(exc).__name__}: {exc}")
        records.append(rec)
    ok = [r for r in records if r.error is None]
    est = np.array([r.estimate for r in ok])
    R = len(ok)
    mean = float(est.mean()) if R else math.nan
    var = float(est.var(ddof=1)) if R > 1 else math.nan
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rel = relative_accuracy(est) if R > 1 else math.nan
    iters = None
    if spec.method == "ams" and R:
        iters = float(np.mean([r.iterations for r in ok]))
    row = ReportRow(
        experiment=spec.experiment_id,
        method=spec.method,
        mean=mean,
        variance=var,
        rel_accuracy=rel,
        work=sum(r.work for r in ok) / R if R else math.nan,
        iterations=iters,
        runs=R,
        wall_ms=(time.perf_counter() - t0) * 1e3,
        records=records,
    )
    if len(ok) < len(records):
        row.extra["failed_runs"] = len(records) - len(ok)
    return [row]


def sweep_k(base: ExperimentSpec, k_values) -> list:
    rows = []
    for k in k_values:
        cfg = dict(base.method_config, k=float(k))
        cfg.pop("n_discard", None)
        spec = replace(base, experiment_id=f"{base.experiment_id}/k={k:g}", method_config=cfg)
        row, = run_experiment(spec)
        row.extra["k"] = float(k)
        rows.append(row)
    return rows


def sweep_n(base: ExperimentSpec, n_values) -> list:
    """One row per population size, with the ``N log N (-log p)`` prefactor."""
    rows = []
    for n in n_values:
        cfg = dict(base.method_config, n=int(n))
        spec = replace(base, experiment_id=f"{base.experiment_id}/N={n}", method_config=cfg)
        row, = run_experiment(spec)
        p = float(np.mean([r.extra["p_hat"] for r in row.records if r.error is None]))
        row.extra["n"] = int(n)
        row.extra["prefactor"] = (row.work / (n * math.log(n) * -math.log(p))
                                  if 0 < p < 1 else math.nan)
        rows.append(row)
    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17e}"
    return str(v)


def _json_value(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if not math.isfinite(v) else float(f"{v:.17e}")
    if isinstance(v, np.integer):
        return int(v)
    return v


def format_report(rows, fmt: str = "csv", extra_columns=()) -> str:
    cols = list(REPORT_COLUMNS) + list(extra_columns)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            d = row.as_dict(extra_columns)
            w.writerow([_fmt(d[c]) for c in cols])
        return buf.getvalue()
    if fmt == "json":
        out = [{c: _json_value(row.as_dict(extra_columns)[c]) for c in cols} for row in rows]
        return json.dumps(out, indent=2) + "\n"
    raise ValueError("format must be 'csv' or 'json'")


def emit_report(rows, path, fmt: str = "csv", extra_columns=()) -> Path:
    """Write rows as CSV or JSON; raises ``OSError`` if the target is unwritable."""
    path = Path(path)
    text = format_report(rows, fmt, extra_columns)
    path.write_text(text)
    return path
