"""Monte Carlo experiment orchestration and machine-readable reports.

Three experiment families share one config type:

* rate studies -- fixed-bandwidth risk of the norm estimators along an
  n-grid, with an OLS slope fit against the theoretical rate exponent;
* adaptation studies -- bandwidth-selected versus oracle fixed-bandwidth
  risk on shared seeds, reported as per-(s, n) ratios;
* the invariant suite -- a deterministic scorecard of named self-checks,
  one group per library module.

Outputs are CSV (one row per grid point, LF endings) and JSON.  Every
seed derives from ``seedBase``, so reports are byte-identical across
runs and across worker counts.

The built-in signal family ``bumps:auto:<seed>`` places sign-randomized
bumps at the scale the bandwidth schedule probes: cell width 1/h(n),
amplitude gain * lambda_h * sqrt(ln n).  The gain keeps the per-cell
signal inside the threshold transition zone, where the rate is actually
visible at desk scale -- much smaller and every cell is clamped to the
noise floor, much larger and the smooth plug-in regime hides the
log factor.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import adapt, besov, estimators, gwn, hermite, kernels, lowerbound, polyapprox
from .errors import LrnormError, ParameterError
from .rng import generator, seed_sequence

__all__ = [
    "ExperimentConfig",
    "RateRow",
    "RateReport",
    "AdaptRow",
    "AdaptReport",
    "fit_slope",
    "rate_bandwidth",
    "theoretical_slope",
    "run_rate_experiment",
    "run_adapt_experiment",
    "run_invariant_suite",
    "write_csv",
    "write_json",
    "read_config",
]

_MODES = ("rate", "adapt", "lowerbound", "invariants")
_OVERRIDE_KEYS = ("c1", "c2", "eps", "cstar", "gridKind")
_SPLITS = {"r1": 2, "noneven": 3, "even": 1}
_BUMP_GAIN = {"r1": 2.5, "noneven": 63.0, "even": 3.0}
# Adaptation studies need the plug-in regime: bump peaks must clear the
# smooth-branch threshold c1 * lambda(h) * sqrt(ln n) over the candidates
# near the oracle bandwidth, otherwise the value curve is all
# polynomial-branch drift and the selector has nothing to react to.
_ADAPT_GAIN = 180.0
_CHUNK = 32


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    signalSpec: str = "const:1.0"
    r: float = 1.0
    s: float = 1.0
    p: float = 2.0
    sigma: float = 1.0
    L: float = 2.0
    nGrid: tuple = ()
    reps: int = 1
    seedBase: int = 0
    outputPath: str = ""
    estimatorOverrides: dict | None = None

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ParameterError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.reps < 1:
            raise ParameterError(f"reps must be >= 1, got {self.reps}")
        grid = tuple(int(n) for n in self.nGrid)
        object.__setattr__(self, "nGrid", grid)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ParameterError("nGrid must be strictly increasing")
        if self.mode == "rate" and grid and grid[0] < 256:
            raise ParameterError(f"rate-study grid entries must be >= 256, got {grid[0]}")
        if self.estimatorOverrides:
            bad = set(self.estimatorOverrides) - set(_OVERRIDE_KEYS)
            if bad:
                raise ParameterError(
                    f"unknown estimator overrides {sorted(bad)}; allowed: {_OVERRIDE_KEYS}"
                )


@dataclass(frozen=True)
class RateRow:
    n: int
    h: float
    meanEstimate: float
    rmse: float
    seError: float


@dataclass(frozen=True)
class RateReport:
    rows: tuple
    fittedSlope: float
    slopeCI: tuple
    theoreticalSlope: float
    degenerateFit: bool = False


@dataclass(frozen=True)
class AdaptRow:
    s: float
    n: int
    adaptiveRisk: float
    oracleRisk: float
    ratio: float
    oracleH: float
    cstar: float
    pairedVar: float
    unpairedVar: float


@dataclass(frozen=True)
class AdaptReport:
    entries: tuple


# ---------------------------------------------------------------------------
# schedules and slope fitting
# ---------------------------------------------------------------------------

def rate_bandwidth(r, s, n):
    """Bandwidth schedule the risk bounds are stated at."""
    if s <= 0 or n < 3:
        raise ParameterError(f"need s > 0 and n >= 3, got s={s}, n={n}")
    if _even(r):
        return float(n) ** (-1.0 / (2.0 * s + 1.0 - 1.0 / r))
    return (n * math.log(n)) ** (-1.0 / (2.0 * s + 1.0))


def theoretical_slope(r, s):
    if _even(r):
        return -s / (2.0 * s + 1.0 - 1.0 / r)
    return -s / (2.0 * s + 1.0)


def _even(r):
    return float(r).is_integer() and int(r) % 2 == 0


# two-sided 97.5% Student-t quantiles for 1..30 residual dof; rate grids are
# short, so the normal 1.96 would undercover (~90% at 6 dof)
_T975 = (12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262,
         2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101,
         2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052,
         2.048, 2.045, 2.042)


def fit_slope(x, y):
    """OLS slope of y on x with a 95% confidence interval."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ParameterError("slope fit needs at least 3 matched points")
    dx = x - x.mean()
    sxx = dx @ dx
    if sxx <= 0:
        raise ParameterError("slope fit needs non-constant x values")
    slope = (dx @ y) / sxx
    resid = y - y.mean() - slope * dx
    dof = x.size - 2
    se = math.sqrt((resid @ resid) / dof / sxx)
    t = _T975[dof - 1] if dof <= len(_T975) else 1.96
    return float(slope), (float(slope - t * se), float(slope + t * se))


# ---------------------------------------------------------------------------
# shared estimation plumbing
# ---------------------------------------------------------------------------

def _overrides(cfg):
    return dict(cfg.estimatorOverrides or {})

def _estimator_config(cfg, h, n, adaptive=False):
    ov = _overrides(cfg)
    kwargs = {}
    if ov.get("c1") is not None:
        kwargs["c1"] = float(ov["c1"])
    if ov.get("c2") is not None:
        kwargs["c2"] = float(ov["c2"])
    if ov.get("eps") is not None:
        kwargs["eps"] = float(ov["eps"])
    return estimators.make_config(
        cfg.r, cfg.sigma, cfg.L, h, n, adaptive=adaptive, **kwargs
    )


def _resolve_signal(cfg, h, n, kernel, gain=None, sparse=False):
    """Build the test signal for one grid point; handles bumps:auto:<seed>.

    The auto family pins the bump height to gain * lambda_h * sqrt(ln n)
    with unit magnitudes (the seed only randomizes signs), so the exact
    norms scale like the threshold and carry no per-n pattern jitter.
    With sparse=True only two cells in five carry a bump; the peak (what
    the threshold test sees) is unchanged while the norm shrinks, which
    keeps the jump at the visibility cutoff inside the selection bands.
    """
    parts = cfg.signalSpec.split(":")
    if parts[0] == "bumps" and len(parts) == 3 and parts[1] == "auto":
        npts = max(2, round(1.0 / h))
        lam = kernels.lambda_h(cfg.sigma, n, h, kernel)
        if gain is None:
            gain = _BUMP_GAIN[estimators.make_config(cfg.r, cfg.sigma, cfg.L, h, n).mode]
        amp = gain * lam * math.sqrt(math.log(n))
        theta = generator(int(parts[2]), 3).choice(np.array([-1.0, 1.0]), size=npts)
        if sparse:
            theta[np.arange(npts) % 5 >= 2] = 0.0
        cell = 1.0 / npts
        lprime = amp / (math.sqrt(math.log(npts)) * cell**cfg.s)
        return besov.make_bump_array(theta, cell, cfg.s, lprime)
    return besov.parse_signal(cfg.signalSpec, s=cfg.s)


def _exact_norm(signal, r):
    try:
        return float(signal.exactNorms[float(r)])
    except KeyError:
        raise ParameterError(
            f"signal {signal.kind!r} has no exact L_{r} norm; rate studies need one"
        )


def _obs_grid(h):
    # >= 32 observation cells under each kernel window keeps the projection
    # quadrature error well below the Monte Carlo noise at desk scale
    return max(gwn.MIN_GRID, int(math.ceil(32.0 / h)))


def _batch_estimates(signal, est_cfg, kernel, m, seeds):
    """Estimate the norm once per seed; returns a (len(seeds),) array."""
    nsplits = _SPLITS[est_cfg.mode]
    xs = (np.arange(m) + 0.5) / m
    lam = kernels.noise_scale_profile(kernel, est_cfg.h, xs, est_cfg.n, est_cfg.sigma)
    poly = None
    if est_cfg.mode != "even":
        poly = estimators.poly_for_config(est_cfg)
    out = np.empty(len(seeds))
    for lo in range(0, len(seeds), _CHUNK):
        chunk = seeds[lo : lo + _CHUNK]
        incs = [np.empty((len(chunk), m)) for _ in range(nsplits)]
        for j, seed in enumerate(chunk):
            obs = gwn.simulate(
                signal, nsplits * est_cfg.n, est_cfg.sigma, m=m, splits=nsplits, seed=seed
            )
            for k in range(nsplits):
                incs[k][j] = obs[k].increments
        tildes = [
            gwn.integrate_kernel_batch(inc, kernel, est_cfg.h, xs, m) for inc in incs
        ]
        if est_cfg.mode == "r1":
            vals = estimators.estimate_l1_batch(tildes[0], tildes[1], lam, est_cfg, poly)
        elif est_cfg.mode == "noneven":
            vals = estimators.estimate_lr_noneven_batch(
                tildes[0], tildes[1], tildes[2], lam, est_cfg, poly
            )
        else:
            vals = estimators.estimate_lr_even_batch(tildes[0], lam, est_cfg)
        out[lo : lo + len(chunk)] = vals
    return out


def _label(err, label):
    err.args = (f"{label}: {err.args[0]}",) + err.args[1:]
    return err


def _rate_point(cfg, n, ni):
    """One grid point of a rate study; safe to run in a worker process."""
    kernel = kernels.make_kernel(2)
    h = rate_bandwidth(cfg.r, cfg.s, n)
    m = _obs_grid(h)
    est_cfg = _estimator_config(cfg, h, n)
    signal = _resolve_signal(cfg, h, n, kernel)
    truth = _exact_norm(signal, cfg.r)
    seeds = [seed_sequence(cfg.seedBase, 0, ni, rep) for rep in range(cfg.reps)]
    try:
        ests = _batch_estimates(signal, est_cfg, kernel, m, seeds)
    except LrnormError as e:
        raise _label(e, f"n={n} reps 0..{cfg.reps - 1}")
    err = ests - truth
    se = float(ests.std(ddof=1) / math.sqrt(cfg.reps)) if cfg.reps > 1 else 0.0
    return RateRow(
        n=int(n),
        h=float(h),
        meanEstimate=float(ests.mean()),
        rmse=float(np.sqrt(np.mean(err**2))),
        seError=se,
    )


# ---------------------------------------------------------------------------
# rate studies
# ---------------------------------------------------------------------------

def run_rate_experiment(cfg, workers=1):
    if cfg.mode != "rate":
        raise ParameterError(f"run_rate_experiment needs mode='rate', got {cfg.mode!r}")
    if len(cfg.nGrid) < 3:
        raise ParameterError("rate study needs at least 3 grid points for the slope fit")
    tasks = [(cfg, n, ni) for ni, n in enumerate(cfg.nGrid)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_rate_point_star, tasks))
    else:
        rows = [_rate_point(*t) for t in tasks]

    rmses = np.array([row.rmse for row in rows])
    degenerate = cfg.sigma == 0.0 or bool((rmses < 1e-12).any())
    if degenerate:
        slope, ci = float("nan"), (float("nan"), float("nan"))
    else:
        xs = np.array(
            [math.log(n) if _even(cfg.r) else math.log(n * math.log(n)) for n in cfg.nGrid]
        )
        slope, ci = fit_slope(xs, np.log(rmses))
    report = RateReport(
        rows=tuple(rows),
        fittedSlope=slope,
        slopeCI=ci,
        theoreticalSlope=theoretical_slope(cfg.r, cfg.s),
        degenerateFit=degenerate,
    )
    if cfg.outputPath:
        _emit_rate(cfg, report)
    return report


def _rate_point_star(args):
    return _rate_point(*args)


def _emit_rate(cfg, report):
    os.makedirs(cfg.outputPath, exist_ok=True)
    write_csv(
        os.path.join(cfg.outputPath, "rates.csv"),
        ("n", "h", "meanEstimate", "rmse", "seError"),
        [(r.n, r.h, r.meanEstimate, r.rmse, r.seError) for r in report.rows],
    )
    payload = {
        "config": _config_echo(cfg),
        "rows": [asdict(r) for r in report.rows],
        "fittedSlope": report.fittedSlope,
        "slopeCI": list(report.slopeCI),
        "theoreticalSlope": report.theoreticalSlope,
        "degenerateFit": report.degenerateFit,
        "xScale": "log n" if _even(cfg.r) else "log(n ln n)",
    }
    write_json(os.path.join(cfg.outputPath, "rates.json"), payload)


def _config_echo(cfg):
    echo = asdict(cfg)
    echo["nGrid"] = list(cfg.nGrid)
    return echo


# ---------------------------------------------------------------------------
# adaptation studies
# ---------------------------------------------------------------------------

def _adapt_xgrid(m):
    """Per-candidate x-grid: the kernel output varies at scale h, so ~40
    points per window suffice, and the (points x window) weight matrix
    stays small for wide candidates."""
    def factory(h):
        pts = min(m, int(math.ceil(40.0 / h)))
        return (np.arange(pts) + 0.5) / pts
    return factory


def run_adapt_experiment(cfg, sValues=None):
    """Adaptive vs oracle fixed-bandwidth risk on shared seeds.

    The oracle at each (s, n) fixes the candidate closest to the
    rate-optimal bandwidth for that s and is evaluated on the same
    simulated paths, so the ratio isolates the cost of not knowing s.
    With a single-candidate grid both procedures coincide and the ratio
    is exactly 1.
    """
    if cfg.mode != "adapt":
        raise ParameterError(f"run_adapt_experiment needs mode='adapt', got {cfg.mode!r}")
    svals = tuple(float(s) for s in (sValues if sValues is not None else (cfg.s,)))
    if not svals or any(s <= 0 for s in svals):
        raise ParameterError(f"smoothness values must be positive, got {svals}")
    ov = _overrides(cfg)
    kernel = kernels.make_kernel(2)
    entries = []
    for ni, n in enumerate(cfg.nGrid):
        acfg = _estimator_config(cfg, 0.5, n, adaptive=True)
        grid = adapt.make_bandwidth_grid(n, kind=ov.get("gridKind", "dyadic"))
        m = max(gwn.MIN_GRID, int(math.ceil(10.0 / grid.candidates[-1])))
        xfac = _adapt_xgrid(m)
        if ov.get("cstar") is not None:
            cstar = float(ov["cstar"])
        else:
            cstar = float(adapt.calibrate_cstar(acfg, grid, reps=max(100, cfg.reps // 2),
                                                seed=cfg.seedBase, m=m, xgrid_factory=xfac))
        nsplits = _SPLITS[acfg.mode]
        for si, s in enumerate(svals):
            hstar = rate_bandwidth(cfg.r, s, n)
            signal = _resolve_signal(replace(cfg, s=s), hstar, n, kernel,
                                     gain=_ADAPT_GAIN, sparse=True)
            truth = _exact_norm(signal, cfg.r)
            values = np.empty((cfg.reps, len(grid.candidates)))
            lams = None
            try:
                for lo in range(0, cfg.reps, _CHUNK):
                    hi = min(lo + _CHUNK, cfg.reps)
                    incs = [np.empty((hi - lo, m)) for _ in range(nsplits)]
                    for rep in range(lo, hi):
                        obs = gwn.simulate(signal, nsplits * n, cfg.sigma, m=m,
                                           splits=nsplits,
                                           seed=seed_sequence(cfg.seedBase, 1, ni, si, rep))
                        for k in range(nsplits):
                            incs[k][rep - lo] = obs[k].increments
                    values[lo:hi], lams = adapt.batch_candidate_values(
                        incs, acfg, grid, m, xgrid_factory=xfac)
            except LrnormError as e:
                raise _label(e, f"s={s} n={n}")
            picks = np.array(
                [adapt._select_index(values[j], lams, cstar, acfg.lnn)
                 for j in range(cfg.reps)]
            )
            adaptive = values[np.arange(cfg.reps), picks]
            cands = np.asarray(grid.candidates)
            near = int(np.argmin(np.abs(np.log(cands) - math.log(hstar))))
            oracle = values[:, near]
            arisk = float(np.sqrt(np.mean((adaptive - truth) ** 2)))
            orisk = float(np.sqrt(np.mean((oracle - truth) ** 2)))
            entries.append(AdaptRow(
                s=s,
                n=int(n),
                adaptiveRisk=arisk,
                oracleRisk=orisk,
                ratio=arisk / orisk,
                oracleH=float(cands[near]),
                cstar=cstar,
                pairedVar=float(np.var(adaptive - oracle)),
                unpairedVar=float(np.var(adaptive) + np.var(oracle)),
            ))
    report = AdaptReport(entries=tuple(entries))
    if cfg.outputPath:
        _emit_adapt(cfg, report)
    return report


def _emit_adapt(cfg, report):
    os.makedirs(cfg.outputPath, exist_ok=True)
    cols = ("s", "n", "adaptiveRisk", "oracleRisk", "ratio",
            "oracleH", "cstar", "pairedVar", "unpairedVar")
    write_csv(
        os.path.join(cfg.outputPath, "adapt.csv"),
        cols,
        [tuple(getattr(e, c) for c in cols) for e in report.entries],
    )
    write_json(
        os.path.join(cfg.outputPath, "adapt.json"),
        {"config": _config_echo(cfg), "entries": [asdict(e) for e in report.entries]},
    )


# ---------------------------------------------------------------------------
# invariant suite
#
# Each check calls through its module's public attributes (not captured
# references), so monkeypatching a module function makes exactly that
# module's checks fail -- the suite's fault-injection hook.
# ---------------------------------------------------------------------------

def _chk_poly_equioscillation(seed):
    p = polyapprox.best_poly_approx(1.5, 8)
    pts, errs = polyapprox.detect_equioscillation(p)
    spread = np.abs(errs).max() - np.abs(errs).min()
    ok = len(pts) >= p.K + 2 and spread < 1e-9
    return ok, f"{len(pts)} alternations, spread {spread:.3g}"


def _chk_poly_even_exact(seed):
    e = polyapprox.best_poly_approx(2.0, 2).supError
    return e <= 1e-12, f"supError {e:.3g}"


def _chk_poly_coeff_growth(seed):
    p = polyapprox.best_poly_approx(1.5, 12)
    peak = np.abs(p.coeffs).max()
    return peak <= 2.0**36, f"max coeff {peak:.3g} vs bound {2.0 ** 36:.3g}"


def _chk_poly_error_monotone(seed):
    e8 = polyapprox.best_poly_approx(1.0, 8).supError
    e16 = polyapprox.best_poly_approx(1.0, 16).supError
    return e16 < e8, f"supError K=8 {e8:.3g} -> K=16 {e16:.3g}"


def _chk_hermite_values(seed):
    x = np.linspace(-2.0, 2.0, 9)
    explicit = {2: x**2 - 1, 3: x**3 - 3 * x, 4: x**4 - 6 * x**2 + 3}
    worst = max(
        float(np.abs(hermite.hermite_eval(k, x) - v).max()) for k, v in explicit.items()
    )
    return worst < 1e-10, f"max |H_k - explicit| {worst:.3g}"


def _chk_hermite_unbiased_quadrature(seed):
    z, w = np.polynomial.hermite_e.hermegauss(48)
    w = w / w.sum()
    worst = 0.0
    for mu in (0.0, 0.7):
        for lam in (0.5, 1.0):
            for k in range(1, 7):
                mean = w @ hermite.moment_estimate(k, mu + lam * z, lam)
                worst = max(worst, abs(mean - mu**k))
    return worst < 1e-8, f"max quadrature bias {worst:.3g}"


def _chk_hermite_noiseless(seed):
    x = np.array([-1.5, 0.0, 2.0])
    diff = float(np.abs(hermite.moment_estimate(5, x, 0.0) - x**5).max())
    return diff == 0.0, f"lam=0 max diff {diff:.3g}"


def _chk_kernel_reproduction(seed):
    worst = max(
        float(kernels.reproduction_residuals(kernels.make_kernel(M)).max())
        for M in (1, 2, 3)
    )
    return worst <= 1e-8, f"max residual {worst:.3g}"


def _chk_kernel_interior_scale(seed):
    kern = kernels.make_kernel(2)
    prof = kernels.noise_scale_profile(kern, 0.1, np.array([0.5]), 1000.0, 1.0)
    ref = kernels.lambda_h(1.0, 1000.0, 0.1, kern)
    rel = abs(prof[0] - ref) / ref
    return rel < 1e-12, f"interior profile off by {rel:.3g}"


def _chk_kernel_boundary_inflation(seed):
    kern = kernels.make_kernel(2)
    prof = kernels.noise_scale_profile(kern, 0.1, np.array([0.0, 0.5]), 1000.0, 1.0)
    return prof[0] > prof[1], f"boundary/interior = {prof[0] / prof[1]:.3f}"


def _chk_gwn_determinism(seed):
    f = besov.parse_signal("poly:0.3,1")
    a = gwn.simulate(f, 500, 1.0, m=200, seed=seed_sequence(seed, 90))[0]
    b = gwn.simulate(f, 500, 1.0, m=200, seed=seed_sequence(seed, 90))[0]
    same = np.array_equal(a.increments, b.increments)
    return same, "identical increments" if same else "seed reuse diverged"


def _chk_gwn_noiseless_cells(seed):
    f = besov.parse_signal("const:0.8")
    obs = gwn.simulate(f, 500, 0.0, m=128)[0]
    diff = float(np.abs(obs.increments - 0.8 / 128).max())
    return diff < 1e-15, f"max cell error {diff:.3g}"


def _chk_gwn_split_scaling(seed):
    f = besov.parse_signal("const:0.0")
    m, n = 400, 250.0
    devs = []
    for splits in (1, 2):
        obs = gwn.simulate(f, n * splits, 1.0, m=m, splits=splits,
                           seed=seed_sequence(seed, 91, splits))
        devs.append(float(obs[0].increments.std() * math.sqrt(n * m)))
    ok = abs(devs[0] - 1.0) < 0.15 and abs(devs[1] - 1.0) < 0.15
    return ok, f"normalized split devs {devs[0]:.3f}, {devs[1]:.3f}"


def _chk_besov_difference_annihilates(seed):
    f = lambda t: 1.0 - 2.0 * np.asarray(t, dtype=float)
    d = besov.symmetric_difference(f, 0.05, 2, np.linspace(0.2, 0.8, 25))
    worst = float(np.abs(d).max())
    return worst < 1e-12, f"max 2nd difference of a line {worst:.3g}"


def _chk_besov_bump_norms(seed):
    sig = besov.make_bump_array(np.array([1.0, -1.0, 1.0, 1.0]), 0.25, 1.0, 1.0)
    t = (np.arange(120_000) + 0.5) / 120_000
    quad = float(np.mean(np.abs(sig(t)) ** 1.5) ** (1 / 1.5))
    rel = abs(quad - sig.exactNorms[1.5]) / sig.exactNorms[1.5]
    return rel < 1e-6, f"L_1.5 norm off by {rel:.3g}"


def _chk_besov_modulus_monotone(seed):
    cusp = besov.parse_signal("cusp:0.5")
    ws = [besov.modulus_of_smoothness(cusp, t, 1, np.inf) for t in (0.02, 0.08, 0.3)]
    ok = ws[0] <= ws[1] + 1e-15 and ws[1] <= ws[2] + 1e-15
    return ok, f"moduli {ws[0]:.4f} <= {ws[1]:.4f} <= {ws[2]:.4f}"


def _estimate_once(seed, sigma, spec="const:1.3", n=600.0, h=0.2):
    kern = kernels.make_kernel(2)
    cfg = estimators.make_config(1.0, sigma, 2.0, h, n)
    f = besov.parse_signal(spec)
    obs = gwn.simulate(f, 2 * n, sigma, m=300, splits=2, seed=seed)
    ctx = kernels.ProjectionContext(h=h, n=n, sigma=sigma, kernel=kern)
    return estimators.estimate_l1(obs, ctx, cfg, estimators.poly_for_config(cfg))


def _chk_estimator_noiseless_constant(seed):
    val = _estimate_once(seed_sequence(seed, 92), 0.0)
    return abs(val - 1.3) < 1e-9, f"sigma=0 estimate {val:.12f} vs 1.3"


def _chk_estimator_clamp_window(seed):
    val = _estimate_once(seed_sequence(seed, 93), 1.0, spec="const:0.0")
    return 0.0 <= val <= 2.0, f"zero-signal estimate {val:.4f} in [0, L]"


def _chk_estimator_even_noiseless(seed):
    kern = kernels.make_kernel(2)
    cfg = estimators.make_config(2.0, 0.0, 2.0, 0.2, 600.0)
    f = besov.parse_signal("const:0.9")
    obs = gwn.simulate(f, 600.0, 0.0, m=300)[0]
    ctx = kernels.ProjectionContext(h=0.2, n=600.0, sigma=0.0, kernel=kern)
    val = estimators.estimate_lr_even(obs, ctx, cfg)
    return abs(val - 0.9) < 1e-9, f"sigma=0 even estimate {val:.12f} vs 0.9"


def _chk_estimator_determinism(seed):
    a = _estimate_once(seed_sequence(seed, 94), 1.0)
    b = _estimate_once(seed_sequence(seed, 94), 1.0)
    return a == b, "identical estimates" if a == b else f"{a!r} != {b!r}"


def _chk_adapt_grid_shape(seed):
    g = adapt.make_bandwidth_grid(4096)
    c = np.array(g.candidates)
    ok = (
        c[0] <= g.hMax * (1 + 1e-12)
        and c[-1] >= g.hMin * (1 - 1e-12)
        and bool((np.diff(c) < 0).all())
    )
    return ok, f"{c.size} candidates in [{g.hMin:.2e}, {g.hMax:.2e}]"


def _chk_adapt_single_candidate(seed):
    cfg = estimators.make_config(1.0, 0.0, 2.0, 0.2, 600.0, adaptive=True)
    grid = adapt.BandwidthGrid((0.2,), "dyadic", 0.2, 0.2, Cstar=1.0)
    f = besov.parse_signal("const:1.1")
    obs = gwn.simulate(f, 2 * 600.0, 0.0, m=300, splits=2,
                       seed=seed_sequence(seed, 95))
    val = adapt.adaptive_estimate(obs, cfg, grid)
    return abs(val - 1.1) < 1e-9, f"single-candidate estimate {val:.12f} vs 1.1"


def _chk_adapt_band_selection(seed):
    first = adapt._select_index(np.array([1.0, 1.0, 0.5]), np.array([0.5, 1.0, 1.0]), 1.0, 1.0)
    fallback = adapt._select_index(np.array([1.0, 1.0, 3.0]), np.array([0.5, 1.0, 1.0]), 1.0, 1.0)
    ok = first == 0 and fallback == 2
    return ok, f"selected {first} (band) / {fallback} (fallback)"


def _chk_lp_span_zero(seed):
    prob = lowerbound.MomentLPProblem(q=1, K=2, intervalLo=0.01, intervalHi=1.0,
                                      gridSize=200, objectiveExponent=2.0)
    val = lowerbound.solve_moment_lp(prob)[2]
    return abs(val) < 1e-10, f"in-span LP value {val:.3g}"


def _chk_lp_reference_value(seed):
    prob = lowerbound.MomentLPProblem(q=1, K=3, intervalLo=0.01, intervalHi=1.0,
                                      gridSize=500, objectiveExponent=-0.5)
    val = lowerbound.solve_moment_lp(prob)[2]
    rel = abs(val - 3.41675621) / 3.41675621
    return rel < 1e-6, f"LP value {val:.8f} off reference by {rel:.3g}"


def _chk_tilt_exact_moment(seed):
    nu = lowerbound.DiscreteMeasure(np.array([0.2, 1.0]), np.array([0.5, 0.5]))
    out = lowerbound.tilt_measures(nu, 2, 6.0)
    rel = abs(out.moment(2) - 6.0**-4) / 6.0**-4
    return rel < 1e-10, f"tilted q-moment off by {rel:.3g}"


def _chk_symmetrize_odd_moments(seed):
    nu = lowerbound.DiscreteMeasure(np.array([0.0, 0.3, 0.9]), np.array([0.2, 0.5, 0.3]))
    mu = lowerbound.symmetrize_scale(nu, 6.0)
    worst = max(abs(mu.moment(l)) for l in (1, 3, 5))
    return worst < 1e-14, f"max odd moment {worst:.3g}"


def _chk_prior_pipeline(seed):
    pair = lowerbound.build_prior_pair(1.0, 2.0, 9.0, 1.0)
    mass = max(abs(pair.mu0.weights.sum() - 1.0), abs(pair.mu1.weights.sum() - 1.0))
    ok = pair.separation > 0 and pair.momentResiduals.max() <= 1e-8 and mass <= 1e-12
    return ok, (
        f"separation {pair.separation:.3g}, residuals {pair.momentResiduals.max():.3g}, "
        f"mass drift {mass:.3g}"
    )


def _chk_chi2_shape(seed):
    logs = [lowerbound.log_chi2_bound(1.0, d, 100) for d in (2.0, 4.0, 8.0)]
    tv = lowerbound.tv_bound(lowerbound.chi2_bound(1.0, 8.0, 100))
    ok = logs[0] > logs[1] > logs[2] and tv < 1.0
    return ok, f"log bounds {logs[0]:.1f} > {logs[1]:.1f} > {logs[2]:.1f}, TV {tv:.3f}"


_INVARIANT_CHECKS = (
    ("poly-equioscillation", "polyapprox", _chk_poly_equioscillation),
    ("poly-even-exact", "polyapprox", _chk_poly_even_exact),
    ("poly-coefficient-growth", "polyapprox", _chk_poly_coeff_growth),
    ("poly-error-monotone", "polyapprox", _chk_poly_error_monotone),
    ("hermite-explicit-values", "hermite", _chk_hermite_values),
    ("hermite-unbiased-quadrature", "hermite", _chk_hermite_unbiased_quadrature),
    ("hermite-noiseless-limit", "hermite", _chk_hermite_noiseless),
    ("kernel-polynomial-reproduction", "kernels", _chk_kernel_reproduction),
    ("kernel-interior-noise-scale", "kernels", _chk_kernel_interior_scale),
    ("kernel-boundary-inflation", "kernels", _chk_kernel_boundary_inflation),
    ("gwn-seed-determinism", "gwn", _chk_gwn_determinism),
    ("gwn-noiseless-cells", "gwn", _chk_gwn_noiseless_cells),
    ("gwn-split-noise-scaling", "gwn", _chk_gwn_split_scaling),
    ("besov-difference-annihilates-lines", "besov", _chk_besov_difference_annihilates),
    ("besov-bump-norms", "besov", _chk_besov_bump_norms),
    ("besov-modulus-monotone", "besov", _chk_besov_modulus_monotone),
    ("estimator-noiseless-constant", "estimators", _chk_estimator_noiseless_constant),
    ("estimator-clamp-window", "estimators", _chk_estimator_clamp_window),
    ("estimator-even-noiseless", "estimators", _chk_estimator_even_noiseless),
    ("estimator-seed-determinism", "estimators", _chk_estimator_determinism),
    ("adapt-grid-shape", "adapt", _chk_adapt_grid_shape),
    ("adapt-single-candidate", "adapt", _chk_adapt_single_candidate),
    ("adapt-band-selection", "adapt", _chk_adapt_band_selection),
    ("lowerbound-lp-span-zero", "lowerbound", _chk_lp_span_zero),
    ("lowerbound-lp-reference-value", "lowerbound", _chk_lp_reference_value),
    ("lowerbound-tilt-exact-moment", "lowerbound", _chk_tilt_exact_moment),
    ("lowerbound-symmetrize-odd-moments", "lowerbound", _chk_symmetrize_odd_moments),
    ("lowerbound-prior-pipeline", "lowerbound", _chk_prior_pipeline),
    ("lowerbound-chi2-shape", "lowerbound", _chk_chi2_shape),
)


def run_invariant_suite(cfg):
    """Run every named self-check; failures are report entries, not errors."""
    checks = []
    for name, module, fn in _INVARIANT_CHECKS:
        try:
            passed, detail = fn(cfg.seedBase)
        except Exception as e:  # noqa: BLE001 -- a crashed check is a failed check
            passed, detail = False, f"{type(e).__name__}: {e}"
        checks.append(
            {"name": name, "module": module, "passed": bool(passed), "detail": str(detail)}
        )
    report = {
        "seedBase": cfg.seedBase,
        "checks": checks,
        "passCount": sum(c["passed"] for c in checks),
        "failCount": sum(not c["passed"] for c in checks),
        "allPassed": all(c["passed"] for c in checks),
    }
    if cfg.outputPath:
        os.makedirs(cfg.outputPath, exist_ok=True)
        write_json(os.path.join(cfg.outputPath, "invariants.json"), report)
    return report


# ---------------------------------------------------------------------------
# emitters and config files
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    """Comma-separated with a header row, '.' decimals, LF endings."""
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_json(path, payload):
    """Stable JSON: sorted keys, LF endings, shortest-roundtrip floats."""
    with open(path, "w", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_config(path):
    """Parse a flat key=value config file into a string dict.

    Blank lines and '#' comments are skipped; later keys win.  Values
    stay strings -- the CLI layer owns type conversion so flags and file
    entries go through identical parsing.
    """
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out
