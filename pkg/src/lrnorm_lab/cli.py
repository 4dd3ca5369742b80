"""Command-line interface: ``lrnorm-lab <subcommand> [flags]``.

Every flag can also be supplied through ``--config <file>`` in a flat
key=value format (keys are the flag names with ``_`` for ``-``); explicit
flags win over the file.  The LRNORM_SEED environment variable, when set,
forces the seed for any subcommand and takes precedence over both.

Exit codes: 0 success, 1 parameter error, 2 numerical failure,
3 invariant-suite failures.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import (
    adapt,
    besov,
    estimators,
    gwn,
    harness,
    hermite,
    kernels,
    lowerbound,
    polyapprox,
)
from .errors import LrnormError, ParameterError
from .rng import seed_sequence

_REQUIRED = object()


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse exits with status 2 by default; bad flags are parameter
        # errors and belong on exit code 1
        raise ParameterError(message)


def _float_or_auto(text):
    return "auto" if text == "auto" else float(text)


def _int_list(text):
    try:
        return tuple(int(v) for v in str(text).split(",") if v != "")
    except ValueError:
        raise ParameterError(f"expected comma-separated integers, got {text!r}")


# (dest, flag, converter, default, help) per subcommand; None defaults mean
# "leave it to the library default"
_TABLES = {
    "approx": [
        ("r", "r", float, _REQUIRED, "norm exponent"),
        ("degree", "degree", int, _REQUIRED, "polynomial degree K"),
        ("emit", "emit", str, None, "write JSON here instead of stdout"),
    ],
    "hermite": [
        ("k", "k", int, _REQUIRED, "polynomial degree"),
        ("x", "x", float, _REQUIRED, "evaluation point"),
    ],
    "kernel": [
        ("order", "order", int, _REQUIRED, "reproduction order M"),
        ("emit", "emit", str, None, "write JSON here instead of stdout"),
    ],
    "simulate": [
        ("signal", "signal", str, _REQUIRED, "signal spec, e.g. const:1.3"),
        ("n", "n", int, _REQUIRED, "total observation budget"),
        ("sigma", "sigma", float, 1.0, "noise level"),
        ("splits", "splits", int, 1, "independent splits sharing the budget"),
        ("m", "m", int, 1000, "observation grid cells"),
        ("s", "s", float, 1.0, "smoothness for cusp/bump specs"),
        ("seed", "seed", int, 0, "base seed"),
        ("emit", "emit", str, None, "write CSV here instead of stdout"),
    ],
    "estimate": [
        ("r", "r", float, _REQUIRED, "norm exponent"),
        ("mode", "mode", str, "auto", "auto|r1|noneven|even (sanity check)"),
        ("signal", "signal", str, _REQUIRED, "signal spec"),
        ("n", "n", int, _REQUIRED, "per-split sample size"),
        ("h", "h", _float_or_auto, "auto", "bandwidth, or auto from --s"),
        ("s", "s", float, 1.0, "smoothness driving --h auto"),
        ("sigma", "sigma", float, 1.0, "noise level"),
        ("L", "L", float, 2.0, "norm bound / output clamp"),
        ("c1", "c1", float, None, "threshold constant override"),
        ("c2", "c2", float, None, "degree constant override"),
        ("eps", "eps", float, None, "variance-inflation exponent override"),
        ("seed", "seed", int, 0, "base seed"),
        ("reps", "reps", int, 1, "independent replications"),
        ("emit", "emit", str, None, "write JSON here instead of stdout"),
    ],
    "adapt": [
        ("r", "r", float, _REQUIRED, "norm exponent (non-even)"),
        ("smax", "smax", float, 2.0, "smoothness ceiling fixing h_max"),
        ("grid", "grid", str, "dyadic", "dyadic|harmonic candidate grid"),
        ("cstar", "cstar", _float_or_auto, "auto", "band constant, or auto-calibrate"),
        ("creps", "calibration-reps", int, 100, "pure-noise calibration reps"),
        ("signal", "signal", str, "const:0.0", "signal spec"),
        ("n", "n", int, _REQUIRED, "per-split sample size"),
        ("s", "s", float, 1.0, "smoothness for cusp/bump specs"),
        ("sigma", "sigma", float, 1.0, "noise level"),
        ("L", "L", float, 2.0, "norm bound / output clamp"),
        ("c1", "c1", float, None, "threshold constant override"),
        ("c2", "c2", float, None, "degree constant override"),
        ("eps", "eps", float, None, "variance-inflation exponent override"),
        ("seed", "seed", int, 0, "base seed"),
        ("emit", "emit", str, None, "write JSON here instead of stdout"),
    ],
    "rates": [
        ("r", "r", float, _REQUIRED, "norm exponent"),
        ("s", "s", float, 1.0, "signal smoothness"),
        ("signal", "signal", str, _REQUIRED, "signal spec (needs exact norms)"),
        ("n_grid", "n-grid", _int_list, _REQUIRED, "comma list of sample sizes"),
        ("reps", "reps", int, _REQUIRED, "replications per grid point"),
        ("sigma", "sigma", float, 1.0, "noise level"),
        ("L", "L", float, 2.0, "norm bound / output clamp"),
        ("c1", "c1", float, None, "threshold constant override"),
        ("c2", "c2", float, None, "degree constant override"),
        ("eps", "eps", float, None, "variance-inflation exponent override"),
        ("workers", "workers", int, 1, "process pool size across grid points"),
        ("seed", "seed", int, 0, "base seed"),
        ("out", "out", str, None, "directory for rates.csv / rates.json"),
    ],
    "lowerbound": [
        ("r", "r", float, _REQUIRED, "norm exponent (non-even)"),
        ("p", "p", float, _REQUIRED, "moment order, r <= p < inf"),
        ("lnN", "lnN", float, _REQUIRED, "log sample-size scale"),
        ("d", "d", float, 1.0, "moment-matching depth, K = ceil(d lnN)"),
        ("emit", "emit", str, None, "write JSON here instead of stdout"),
    ],
    "invariants": [
        ("seed", "seed", int, 0, "suite seed"),
        ("out", "out", str, None, "directory for invariants.json"),
    ],
}


def _build_parser():
    parser = _Parser(prog="lrnorm-lab", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, table in _TABLES.items():
        sp = subs.add_parser(name)
        sp.add_argument("--config", default=None, help="flat key=value option file")
        for dest, flag, conv, _default, help_ in table:
            sp.add_argument(f"--{flag}", dest=dest, type=conv, default=None, help=help_)
    return parser


def _resolve(args, table):
    """Merge CLI flags over config-file values over defaults; apply env seed."""
    cfgmap = {}
    if args.config:
        cfgmap = harness.read_config(args.config)
        known = {dest for dest, *_ in table}
        stray = sorted(set(cfgmap) - known)
        if stray:
            raise ParameterError(f"{args.config}: unknown key(s) {', '.join(stray)}")
    values = {}
    for dest, flag, conv, default, _help in table:
        v = getattr(args, dest)
        if v is None and dest in cfgmap:
            v = conv(cfgmap[dest])
        if v is None:
            v = default
        if v is _REQUIRED:
            raise ParameterError(f"missing required option --{flag}")
        values[dest] = v
    if "seed" in values and os.environ.get("LRNORM_SEED") is not None:
        raw = os.environ["LRNORM_SEED"]
        try:
            values["seed"] = int(raw)
        except ValueError:
            raise ParameterError(f"LRNORM_SEED must be an integer, got {raw!r}")
    return argparse.Namespace(**values)


# ---------------------------------------------------------------------------
# output plumbing
# ---------------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _emit_json(payload, path):
    payload = _jsonable(payload)
    if path:
        harness.write_json(path, payload)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))


def _emit_csv(path, header, rows):
    if path:
        harness.write_csv(path, header, rows)
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(repr(float(v)) for v in row))


def _estimator_kwargs(o):
    return {k: getattr(o, k) for k in ("c1", "c2", "eps") if getattr(o, k) is not None}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_approx(o):
    p = polyapprox.best_poly_approx(o.r, o.degree)
    _emit_json(
        {
            "r": p.r,
            "K": p.K,
            "coeffs": p.coeffs,
            "supError": p.supError,
            "alternationPoints": p.alternationPoints,
        },
        o.emit,
    )
    return 0


def _cmd_hermite(o):
    print(repr(float(hermite.hermite_eval(o.k, o.x))))
    return 0


def _cmd_kernel(o):
    kern = kernels.make_kernel(o.order)
    _emit_json(
        {
            "M": kern.M,
            "coefficients": kern.interior.coeffs,
            "l2Norm": kern.l2Norm,
            "reproductionResiduals": kernels.reproduction_residuals(kern),
        },
        o.emit,
    )
    return 0


def _cmd_simulate(o):
    signal = besov.parse_signal(o.signal, s=o.s)
    obs = gwn.simulate(signal, o.n, o.sigma, m=o.m, splits=o.splits,
                       seed=seed_sequence(o.seed))
    ts = (np.arange(o.m) + 0.5) / o.m
    if o.splits == 1:
        header = ("t", "dY")
    else:
        header = ("t",) + tuple(f"dY{k + 1}" for k in range(o.splits))
    rows = list(zip(ts, *(sp.increments for sp in obs)))
    _emit_csv(o.emit, header, rows)
    return 0


def _cmd_estimate(o):
    h = harness.rate_bandwidth(o.r, o.s, o.n) if o.h == "auto" else o.h
    cfg = estimators.make_config(o.r, o.sigma, o.L, h=h, n=o.n, **_estimator_kwargs(o))
    if o.mode != "auto" and o.mode != cfg.mode:
        raise ParameterError(f"--mode {o.mode} conflicts with r={o.r} (mode {cfg.mode})")
    signal = besov.parse_signal(o.signal, s=o.s)
    m = harness._obs_grid(h)
    seeds = [seed_sequence(o.seed, rep) for rep in range(o.reps)]
    values = harness._batch_estimates(signal, cfg, kernels.make_kernel(2), m, seeds)
    truth = signal.exactNorms.get(float(o.r))
    se = float(values.std(ddof=1) / math.sqrt(o.reps)) if o.reps > 1 else 0.0
    _emit_json(
        {
            "r": o.r,
            "mode": cfg.mode,
            "n": o.n,
            "h": h,
            "sigma": o.sigma,
            "L": o.L,
            "seed": o.seed,
            "reps": o.reps,
            "values": values,
            "mean": float(values.mean()),
            "se": se,
            "truth": truth,
        },
        o.emit,
    )
    return 0


def _cmd_adapt(o):
    cfg = estimators.make_config(o.r, o.sigma, o.L, h=0.5, n=o.n, adaptive=True,
                                 **_estimator_kwargs(o))
    grid = adapt.make_bandwidth_grid(o.n, sMax=o.smax, kind=o.grid)
    m = max(gwn.MIN_GRID, int(math.ceil(10.0 / grid.candidates[-1])))
    xfac = harness._adapt_xgrid(m)
    if o.cstar == "auto":
        cstar = float(adapt.calibrate_cstar(cfg, grid, reps=o.creps, seed=o.seed,
                                            m=m, xgrid_factory=xfac))
    else:
        cstar = float(o.cstar)
    grid = replace(grid, Cstar=cstar)
    signal = besov.parse_signal(o.signal, s=o.s)
    nsplits = harness._SPLITS[cfg.mode]
    obs = gwn.simulate(signal, nsplits * o.n, o.sigma, m=m, splits=nsplits,
                       seed=seed_sequence(o.seed, 0))
    details = {}
    adapt.adaptive_estimate(obs, cfg, grid, xgrid_factory=xfac, details=details)
    _emit_json(
        {
            "hhat": details["hhat"],
            "That": details["That"],
            "perCandidate": details["perCandidate"],
            "cstar": cstar,
        },
        o.emit,
    )
    return 0


def _cmd_rates(o):
    overrides = _estimator_kwargs(o) or None
    cfg = harness.ExperimentConfig(
        mode="rate",
        signalSpec=o.signal,
        r=o.r,
        s=o.s,
        sigma=o.sigma,
        L=o.L,
        nGrid=o.n_grid,
        reps=o.reps,
        seedBase=o.seed,
        outputPath=o.out or "",
        estimatorOverrides=overrides,
    )
    report = harness.run_rate_experiment(cfg, workers=o.workers)
    for row in report.rows:
        print(f"n={row.n} h={row.h:.6g} mean={row.meanEstimate:.6g} "
              f"rmse={row.rmse:.6g} se={row.seError:.3g}")
    lo, hi = report.slopeCI
    tag = " (degenerate fit)" if report.degenerateFit else ""
    print(f"slope={report.fittedSlope:.4f} ci=({lo:.4f}, {hi:.4f}) "
          f"theory={report.theoreticalSlope:.4f}{tag}")
    return 0


def _cmd_lowerbound(o):
    pair = lowerbound.build_prior_pair(o.r, o.p, o.lnN, o.d)
    _emit_json(
        {
            "r": o.r,
            "p": o.p,
            "lnN": pair.lnN,
            "d": o.d,
            "separation": pair.separation,
            "lpValue": pair.lpValue,
            "momentResiduals": pair.momentResiduals,
            "pMomentBounds": list(pair.pMomentBounds),
            "mu0": {"support": pair.mu0.support, "weights": pair.mu0.weights},
            "mu1": {"support": pair.mu1.support, "weights": pair.mu1.weights},
        },
        o.emit,
    )
    return 0


def _cmd_invariants(o):
    cfg = harness.ExperimentConfig(mode="invariants", seedBase=o.seed,
                                   outputPath=o.out or "")
    report = harness.run_invariant_suite(cfg)
    for check in report["checks"]:
        word = "PASS" if check["passed"] else "FAIL"
        print(f"{word} {check['name']}: {check['detail']}")
    print(f"{report['passCount']}/{len(report['checks'])} invariants passed")
    return 0 if report["allPassed"] else 3


_RUNNERS = {
    "approx": _cmd_approx,
    "hermite": _cmd_hermite,
    "kernel": _cmd_kernel,
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "adapt": _cmd_adapt,
    "rates": _cmd_rates,
    "lowerbound": _cmd_lowerbound,
    "invariants": _cmd_invariants,
}


def main(argv=None):
    try:
        args = _build_parser().parse_args(argv)
        opts = _resolve(args, _TABLES[args.command])
        return _RUNNERS[args.command](opts)
    except ParameterError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except LrnormError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
