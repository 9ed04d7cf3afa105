"""Command-line entry point: ``amsdigital <subcommand> [options]``.

Experiments come from an optional INI file (``--spec``) whose sections are
``[experiment]``, ``[model]``, ``[contract]`` and ``[method]``; command-line
flags override file values.  Example::

    [experiment]
    id = heston-2.2
    seeds = 5
    runs = 10

    [model]
    kind = heston
    r = 0.03

    [contract]
    kind = digital-call
    strike = 2.2
    steps = 50

    [method]
    kind = ams
    n = 50000
    k = 0.45
    importance = path
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import sys

from .bench import ExperimentSpec, emit_report, format_report, run_experiment, sweep_k, sweep_n
from .baselines import required_mc_samples
from .contracts import ContractSpec, bs_digital_closed_form
from .models import BsParams, HestonParams, MultiGbmParams

log = logging.getLogger("amsdigital")

CONTRACTS = {
    "digital-call": "digital_call",
    "digital-put": "digital_put",
    "asian-call": "asian_digital_call",
    "asian-put": "asian_digital_put",
    "barrier-up-in-call": "barrier_up_in_call",
    "barrier-up-in-put": "barrier_up_in_put",
    "multi-dispersion": "multi_asset_dispersion",
}
METHODS = {"ams": "ams", "mc": "crude_mc", "mca": "antithetic_mc", "mlmc": "mlmc"}
IMPORTANCE = {"path": "path_based", "bs-analytic": "bs_analytic", "multi-sum": "multi_asset_sum"}

# default experiment values
BS_DEFAULTS = dict(r=0.03, sigma=0.2, s0=1.0)
HESTON_DEFAULTS = dict(r=0.03, kappa=2.0, theta=0.04, psi_vov=0.3, rho=-0.5, v0=0.04, s0=1.0)
MULTI_DEFAULTS = dict(r=0.03, sigma=0.2, s0=1.0, rho=0.2)


class UsageError(ValueError):
    pass


def _section(cp, name):
    return dict(cp[name]) if cp.has_section(name) else {}


def load_spec_file(path) -> dict:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise UsageError(f"cannot read spec file {path}")
    return {s: _section(cp, s) for s in ("experiment", "model", "contract", "method")}


def _merge(args) -> dict:
    conf = {"experiment": {}, "model": {}, "contract": {}, "method": {}}
    if args.spec:
        conf.update(load_spec_file(args.spec))
    over = {
        ("experiment", "id"): args.id,
        ("experiment", "seeds"): args.seeds,
        ("experiment", "runs"): args.runs,
        ("experiment", "seed"): args.seed,
        ("model", "kind"): args.model,
        ("model", "scheme"): args.scheme,
        ("contract", "kind"): args.contract,
        ("contract", "strike"): args.strike,
        ("contract", "barrier"): args.barrier,
        ("contract", "threshold"): args.threshold,
        ("contract", "avg_level"): args.avg_level,
        ("contract", "maturity"): args.maturity,
        ("contract", "steps"): args.steps,
        ("method", "kind"): args.method,
        ("method", "n"): args.n,
        ("method", "k"): args.k,
        ("method", "lmax"): args.lmax,
        ("method", "importance"): args.importance,
    }
    for (sec, key), val in over.items():
        if val is not None:
            conf[sec][key] = str(val)
    return conf


def build_model(m: dict):
    kind = m.get("kind", "bs")
    f = {k: float(v) for k, v in m.items() if k not in ("kind", "scheme")}
    if kind == "bs":
        return BsParams(**{**BS_DEFAULTS, **f})
    if kind == "heston":
        return HestonParams(**{**HESTON_DEFAULTS, **f}, scheme=m.get("scheme", "qe"))
    if kind == "multi-gbm":
        p = {**MULTI_DEFAULTS, **f}
        return MultiGbmParams.equicorrelated(p["r"], p["sigma"], p["s0"], p["rho"])
    raise UsageError(f"unknown model {kind!r}")


def build_contract(c: dict) -> ContractSpec:
    kind = c.get("kind", "digital-call")
    if kind not in CONTRACTS:
        raise UsageError(f"unknown contract {kind!r}")
    kw = {k: float(c[k]) for k in ("strike", "barrier", "threshold", "avg_level") if k in c}
    if kind == "multi-dispersion":
        kw.setdefault("threshold", 1.0)
        kw.setdefault("avg_level", 1.4)
    return ContractSpec(CONTRACTS[kind], float(c.get("maturity", 1.0)),
                        int(c.get("steps", 50)), **kw)


def build_spec(conf: dict) -> ExperimentSpec:
    e, mth = conf["experiment"], conf["method"]
    model = build_model(conf["model"])
    contract = build_contract(conf["contract"])
    method = mth.get("kind", "ams")
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}")
    cfg = {}
    if "n" in mth:
        cfg["n"] = int(float(mth["n"]))
    if "k" in mth:
        cfg["k"] = float(mth["k"])
    if "lmax" in mth:
        cfg["l_max"] = float(mth["lmax"])
    if "tie_rule" in mth:
        cfg["tie_rule"] = mth["tie_rule"]
    default_imp = "multi-sum" if contract.n_assets > 1 else "path"
    imp = mth.get("importance", default_imp)
    if imp not in IMPORTANCE:
        raise UsageError(f"unknown importance family {imp!r}")
    cfg["importance"] = IMPORTANCE[imp]
    for key in ("m0", "refinement", "max_level", "pilot"):
        if key in mth:
            cfg[key] = int(mth[key])
    for key in ("eps", "rel_eps"):
        if key in mth:
            cfg[key] = float(mth[key])
    if METHODS[method] == "mlmc" and "eps" not in cfg:
        cfg.setdefault("rel_eps", 0.1)
    base = int(e.get("seed", 1))
    seeds = tuple(range(base, base + int(e.get("seeds", 5))))
    return ExperimentSpec(
        experiment_id=e.get("id", f"{conf['model'].get('kind', 'bs')}-{contract.kind.value}"),
        model=model,
        contract=contract,
        method=METHODS[method],
        method_config=cfg,
        seeds=seeds,
        runs_per_seed=int(e.get("runs", 10)),
    )


def _write(rows, args, extra_columns=()):
    if args.out:
        emit_report(rows, args.out, args.format, extra_columns)
    else:
        sys.stdout.write(format_report(rows, args.format, extra_columns))


def cmd_price(args, conf):
    conf["experiment"].setdefault("seeds", "1")
    conf["experiment"].setdefault("runs", "2")
    spec = build_spec(conf)
    row, = run_experiment(spec)
    _write([row], args)


def cmd_bench(args, conf):
    _write(run_experiment(build_spec(conf)), args)


def cmd_sweep_k(args, conf):
    conf["method"]["kind"] = "ams"
    ks = [float(x) for x in args.k_values.split(",")]
    _write(sweep_k(build_spec(conf), ks), args, ("k",))


def cmd_sweep_n(args, conf):
    conf["method"]["kind"] = "ams"
    ns = [int(float(x)) for x in args.n_values.split(",")]
    _write(sweep_n(build_spec(conf), ns), args, ("n", "prefactor"))


def cmd_extreme(args, conf):
    """BS digital call at strike 3.5 by AMS, with the crude-MC budget it would need."""
    conf["model"] = {"kind": "bs", **{k: v for k, v in conf["model"].items() if k != "kind"}}
    conf["contract"].setdefault("kind", "digital-call")
    conf["contract"].setdefault("strike", "3.5")
    conf["method"].setdefault("kind", "ams")
    conf["method"].setdefault("n", "50000")
    conf["experiment"].setdefault("id", "extreme")
    spec = build_spec(conf)
    row, = run_experiment(spec)
    m, c = spec.model, spec.contract
    truth = bs_digital_closed_form(m.s0, c.strike, m.r, m.sigma, c.maturity)
    row.extra["closed_form"] = truth
    p = row.mean * math.exp(m.r * c.maturity)
    if 0 < p < 1:
        row.extra["mc_work_same_accuracy"] = (
            required_mc_samples(p, max(row.rel_accuracy, 1e-12)) * c.steps)
    _write([row], args, ("closed_form", "mc_work_same_accuracy"))


def cmd_multi_asset(args, conf):
    """AMS against crude and antithetic MC on the three-asset dispersion digital."""
    conf["model"] = {"kind": "multi-gbm",
                     **{k: v for k, v in conf["model"].items() if k != "kind"}}
    conf["contract"]["kind"] = "multi-dispersion"
    conf["experiment"].setdefault("id", "multi-asset")
    rows = []
    for method, n in (("ams", args.n or 20000), ("mc", args.mc_paths), ("mca", args.mc_paths)):
        sub = {s: dict(v) for s, v in conf.items()}
        sub["method"]["kind"] = method
        sub["method"]["n"] = str(n)
        rows.extend(run_experiment(build_spec(sub)))
    _write(rows, args)


COMMANDS = {
    "price": cmd_price,
    "bench": cmd_bench,
    "sweep-k": cmd_sweep_k,
    "sweep-n": cmd_sweep_n,
    "extreme": cmd_extreme,
    "multi-asset": cmd_multi_asset,
}


def _common(p):
    p.add_argument("--spec", help="INI experiment file")
    p.add_argument("--id")
    p.add_argument("--model", choices=("bs", "heston", "multi-gbm"))
    p.add_argument("--scheme", choices=("qe", "euler", "milstein"))
    p.add_argument("--contract", choices=tuple(CONTRACTS))
    p.add_argument("--method", choices=tuple(METHODS))
    p.add_argument("--n", type=int, help="particles (AMS) or paths (MC)")
    p.add_argument("--k", type=float, help="discard fraction")
    p.add_argument("--strike", type=float)
    p.add_argument("--barrier", type=float)
    p.add_argument("--threshold", type=float, help="dispersion threshold L")
    p.add_argument("--avg-level", type=float, help="dispersion average level K_avg")
    p.add_argument("--maturity", type=float)
    p.add_argument("--lmax", type=float)
    p.add_argument("--importance", choices=tuple(IMPORTANCE))
    p.add_argument("--runs", type=int, help="runs per seed")
    p.add_argument("--seeds", type=int, help="number of seeds")
    p.add_argument("--seed", type=int, help="first seed")
    p.add_argument("--steps", type=int)
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="amsdigital",
                                 description="Rare-event pricing of binary options.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=COMMANDS[name].__doc__)
        _common(p)
        if name == "sweep-k":
            p.add_argument("--k-values", default="0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45")
        if name == "sweep-n":
            p.add_argument("--n-values", default="5000,10000,20000,40000")
        if name == "multi-asset":
            p.add_argument("--mc-paths", type=int, default=1_000_000)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        conf = _merge(args)
        COMMANDS[args.command](args, conf)
    except (ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
