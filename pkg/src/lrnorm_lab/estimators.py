"""The three L_r-norm estimators: r = 1, non-even r > 1, and even r.

All three share the same skeleton: kernel estimates ~f_h(x) on a grid of x,
a pointwise estimate of |f_h(x)|^r that switches between a "smooth" branch
(|f_h| safely above the noise scale, where plug-in or a Taylor expansion
works) and a "polynomial" branch (|f_h| at noise scale, where the minimax
polynomial of |u|^r is evaluated unbiasedly through Hermite polynomials),
then integration over x and a final root/clamp.

The polynomial branch estimates M^r P(f_h / M) with M = 2 c1 lambda sqrt(ln n)
by replacing each power f_h^k with its unbiased Hermite estimate
lambda^k H_k(~f/lambda); the result is clamped at +/- lambda^r n^{2 eps}.

Sample splitting conventions: r=1 uses 2 independent splits (one to pick the
regime, one to estimate), non-even r>1 uses 3 (one for the regime, two for
the two-point Taylor correction), even r uses a single observation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .gwn import integrate_kernel_batch
from .kernels import noise_scale_profile
from .polyapprox import best_poly_approx

__all__ = [
    "EstimatorConfig",
    "make_config",
    "estimate_l1",
    "estimate_lr_noneven",
    "estimate_lr_even",
    "pointwise_debug",
    "estimate_l1_batch",
    "estimate_lr_noneven_batch",
    "estimate_lr_even_batch",
]


def _classify_mode(r):
    if r < 1:
        raise ParameterError(f"norm index r must be >= 1, got {r}")
    if r == 1:
        return "r1"
    if float(r).is_integer() and int(r) % 2 == 0:
        return "even"
    return "noneven"


@dataclass(frozen=True)
class EstimatorConfig:
    """Constants and derived quantities for one estimator instance.

    ``n`` is the effective (per-split) sample size; thresholds and the
    polynomial degree K = ceil(c2 ln n) are computed from it.  In adaptive
    mode the fixed-h constraint 7 c2 ln 2 < eps is replaced by the
    bandwidth-selection condition 4 r eps (2 s_max + 1) < 1.
    """

    r: float
    sigma: float
    L: float
    c1: float
    c2: float
    eps: float
    h: float
    n: float
    mode: str
    K: int
    R: int
    adaptive: bool = False
    sMax: float = 2.0

    @property
    def lnn(self):
        return math.log(self.n)

    def threshold(self, lam):
        """Regime threshold c1 * lambda_h * sqrt(ln n)."""
        return self.c1 * lam * math.sqrt(self.lnn)

    def clamp(self, lam):
        """Polynomial-branch clamp magnitude lambda_h^r * n^{2 eps}."""
        return lam**self.r * self.n ** (2.0 * self.eps)


def make_config(r, sigma, L, h, n, c1=None, c2=0.185, eps=None, adaptive=False, sMax=2.0):
    """Build and validate an EstimatorConfig.

    Defaults: c2 = 0.185 with eps = 0.95 satisfies 7 c2 ln 2 < eps < 1 for
    fixed-bandwidth use; c1 defaults to 8.5 for r = 1 (needs c1 > 8) and 4.5
    otherwise (needs c1^2 >= 16).  In adaptive mode eps defaults to
    0.8 / (4 r (2 sMax + 1)).
    """
    mode = _classify_mode(r)
    if c1 is None:
        c1 = 8.5 if mode == "r1" else 4.5
    if eps is None:
        eps = 0.8 / (4.0 * r * (2.0 * sMax + 1.0)) if adaptive else 0.95
    if sigma < 0:
        raise ParameterError(f"sigma must be nonnegative, got {sigma}")
    if L <= 0:
        raise ParameterError(f"norm radius L must be positive, got {L}")
    if not (0 < h <= 1):
        raise ParameterError(f"bandwidth h must be in (0, 1], got {h}")
    if n < 2:
        raise ParameterError(f"effective sample size must be >= 2, got {n}")
    lnn = math.log(n)
    if mode in ("r1", "noneven"):
        if c2 * lnn < 1.0:
            raise ParameterError(
                f"need c2 ln n >= 1: c2={c2}, n={n} gives {c2 * lnn:.3f}"
            )
        if 4.0 * c1 * c1 < c2:
            raise ParameterError(f"need 4 c1^2 >= c2: c1={c1}, c2={c2}")
        if not (0 < eps < 1):
            raise ParameterError(f"need 0 < eps < 1, got eps={eps}")
        if adaptive:
            if 4.0 * r * eps * (2.0 * sMax + 1.0) >= 1.0:
                raise ParameterError(
                    "adaptive mode needs 4 r eps (2 sMax + 1) < 1: "
                    f"r={r}, eps={eps}, sMax={sMax} gives "
                    f"{4.0 * r * eps * (2.0 * sMax + 1.0):.3f}"
                )
        elif 7.0 * c2 * math.log(2.0) >= eps:
            raise ParameterError(
                f"need 7 c2 ln 2 < eps: c2={c2} gives {7 * c2 * math.log(2):.3f} "
                f">= eps={eps}"
            )
    if mode == "r1" and not c1 > 8.0:
        raise ParameterError(f"r=1 mode needs c1 > 8, got c1={c1}")
    if mode == "noneven" and c1 * c1 < 16.0:
        raise ParameterError(f"non-even mode needs c1^2 >= 16, got c1={c1}")
    return EstimatorConfig(
        r=float(r), sigma=float(sigma), L=float(L), c1=float(c1), c2=float(c2),
        eps=float(eps), h=float(h), n=float(n), mode=mode,
        K=int(math.ceil(c2 * lnn)), R=int(math.floor(2.0 * r)),
        adaptive=bool(adaptive), sMax=float(sMax),
    )


def _check_ctx(ctx, cfg):
    if abs(ctx.h - cfg.h) > 1e-12 * max(1.0, cfg.h):
        raise ParameterError(f"context bandwidth {ctx.h} != config bandwidth {cfg.h}")
    if abs(ctx.n - cfg.n) > 1e-9 * max(1.0, cfg.n):
        raise ParameterError(f"context sample size {ctx.n} != config {cfg.n}")


def _check_poly(poly, cfg, want_r):
    if poly.r != want_r:
        raise ParameterError(f"polynomial is for r={poly.r}, estimator needs r={want_r}")
    if poly.K != cfg.K:
        raise ParameterError(f"polynomial degree {poly.K} != config K={cfg.K}")


def _hermite_series(a, x, lam):
    """sum_k a_k lambda^k H_k(x / lambda) by one pass of the scaled recurrence.

    ``lam`` may be a scalar or a per-column noise-scale vector; the rows of
    ``a`` may likewise be scalars or per-column coefficient vectors.
    """
    x = np.asarray(x, dtype=float)
    acc = a[0] * np.ones_like(x)
    if len(a) == 1:
        return acc
    lamsq = np.asarray(lam, dtype=float) ** 2
    prev = np.ones_like(x)
    cur = x.copy()
    acc += a[1] * cur
    for k in range(2, len(a)):
        prev, cur = cur, x * cur - ((k - 1) * lamsq) * prev
        if np.any(a[k] != 0.0):
            acc += a[k] * cur
    return acc


def _poly_branch(tilde, lam, cfg, poly):
    """Clamped unbiased estimate of M^r P(f_h / M), M = 2 c1 lam sqrt(ln n).

    Returns (values, clamped_mask).
    """
    M = 2.0 * cfg.threshold(lam)
    coeffs = np.asarray(poly.coeffs, dtype=float)
    if not np.all(M > 0):  # noiseless degenerate case: plug-in power
        vals = np.abs(np.asarray(tilde, dtype=float)) ** cfg.r
        return vals, np.zeros(vals.shape, dtype=bool)
    # rows: coefficient g_k M^{r-k}, per column when lam varies over x
    scaled = coeffs[:, None] * np.power.outer(np.atleast_1d(M), cfg.r - np.arange(coeffs.size)).T
    raw = _hermite_series(scaled, tilde, lam)
    bound = cfg.clamp(lam)
    clamped = np.abs(raw) > bound
    return np.clip(raw, -bound, bound), clamped


def _taylor_branch(u, v, lam, cfg):
    """S_lambda(u, v): Taylor estimate of f_h^r about u, Hermite-corrected.

    sum_{k<=R} binom(r,k) u^{r-k} sum_{j<=k} C(k,j) lam^j H_j(v/lam) (-u)^{k-j},
    gated by u >= (c1/4) lam sqrt(ln n).
    """
    gate = u >= 0.25 * cfg.threshold(lam)
    usafe = np.where(gate, u, 1.0)
    R = cfg.R
    # moments[j] = lam^j H_j(v / lam), j = 0..R
    moments = [np.ones_like(v), np.asarray(v, dtype=float)]
    lamsq = np.asarray(lam, dtype=float) ** 2
    for j in range(2, R + 1):
        moments.append(v * moments[-1] - ((j - 1) * lamsq) * moments[-2])
    out = np.zeros_like(u)
    coef_r = 1.0  # binom(r, k) running product
    with np.errstate(invalid="ignore", divide="ignore"):
        for k in range(R + 1):
            if k > 0:
                coef_r *= (cfg.r - k + 1) / k
            if coef_r == 0.0:
                break  # integer r: expansion terminates exactly
            inner = np.zeros_like(u)
            for j in range(k + 1):
                inner += math.comb(k, j) * moments[j] * (-usafe) ** (k - j)
            out += coef_r * usafe ** (cfg.r - k) * inner
    return np.where(gate, out, 0.0)


# ---------------------------------------------------------------------------
# batched cores: kernel-estimate matrices (R, X) -> estimates (R,)
# ---------------------------------------------------------------------------

def _integrate_x(pointwise):
    # uniform midpoint x-grids make the integral a plain mean
    return pointwise.mean(axis=-1)


def estimate_l1_batch(tilde1, tilde2, lam, cfg, poly, details=None):
    smooth = np.abs(tilde2) >= cfg.threshold(lam)
    pvals, clamped = _poly_branch(tilde1, lam, cfg, poly)
    pointwise = np.where(smooth, np.abs(tilde1), pvals)
    if details is not None:
        details["smoothFraction"] = float(np.mean(smooth))
        details["truncationFraction"] = float(np.mean(~smooth & clamped))
    integral = _integrate_x(pointwise)
    return np.minimum(cfg.L, np.maximum(0.0, integral))


def estimate_lr_noneven_batch(tilde1, tilde2, tilde3, lam, cfg, poly, details=None):
    thr = cfg.threshold(lam)
    pos = tilde3 > thr
    neg = tilde3 < -thr
    pvals, clamped = _poly_branch(tilde1, lam, cfg, poly)
    pointwise = np.where(
        pos,
        _taylor_branch(tilde1, tilde2, lam, cfg),
        np.where(neg, _taylor_branch(-tilde1, -tilde2, lam, cfg), pvals),
    )
    if details is not None:
        details["smoothFraction"] = float(np.mean(pos | neg))
        details["truncationFraction"] = float(np.mean(~(pos | neg) & clamped))
    integral = _integrate_x(pointwise)
    return np.minimum(cfg.L, np.maximum(0.0, integral) ** (1.0 / cfg.r))


def estimate_lr_even_batch(tilde, lam, cfg, details=None):
    r = int(cfg.r)
    coeffs = np.zeros(r + 1)
    coeffs[r] = 1.0
    pointwise = _hermite_series(coeffs, tilde, lam)
    if details is not None:
        details["smoothFraction"] = 1.0
        details["truncationFraction"] = 0.0
    integral = _integrate_x(pointwise)
    return np.maximum(0.0, integral) ** (1.0 / cfg.r)


# ---------------------------------------------------------------------------
# public single-shot estimators on Observation lists
# ---------------------------------------------------------------------------

def _default_xgrid(h, m):
    return (np.arange(m) + 0.5) / m


def _tilde_matrix(obs, ctx, xs):
    return integrate_kernel_batch(obs.increments, ctx.kernel, ctx.h, xs, obs.m)


def _noise_profile(ctx, xs):
    """Per-point noise scale; equals ctx.lambda_h away from the boundary."""
    return noise_scale_profile(ctx.kernel, ctx.h, xs, ctx.n, ctx.sigma)


def estimate_l1(splits, ctx, cfg, poly, xgrid=None, details=None):
    """L_1-norm estimate from two independent splits."""
    if cfg.mode != "r1":
        raise ParameterError(f"estimate_l1 needs an r=1 config, got mode={cfg.mode!r}")
    if len(splits) != 2:
        raise ParameterError(f"estimate_l1 needs exactly 2 splits, got {len(splits)}")
    _check_ctx(ctx, cfg)
    _check_poly(poly, cfg, 1.0)
    xs = _default_xgrid(ctx.h, splits[0].m) if xgrid is None else np.asarray(xgrid)
    t1 = _tilde_matrix(splits[0], ctx, xs)
    t2 = _tilde_matrix(splits[1], ctx, xs)
    return float(estimate_l1_batch(t1, t2, _noise_profile(ctx, xs), cfg, poly, details)[0])


def estimate_lr_noneven(splits, ctx, cfg, poly, xgrid=None, details=None):
    """L_r-norm estimate for non-even r > 1 from three independent splits."""
    if cfg.mode != "noneven":
        raise ParameterError(
            f"estimate_lr_noneven needs a non-even r > 1 config, got mode={cfg.mode!r}"
        )
    if len(splits) != 3:
        raise ParameterError(f"needs exactly 3 splits, got {len(splits)}")
    _check_ctx(ctx, cfg)
    _check_poly(poly, cfg, cfg.r)
    xs = _default_xgrid(ctx.h, splits[0].m) if xgrid is None else np.asarray(xgrid)
    t1 = _tilde_matrix(splits[0], ctx, xs)
    t2 = _tilde_matrix(splits[1], ctx, xs)
    t3 = _tilde_matrix(splits[2], ctx, xs)
    return float(
        estimate_lr_noneven_batch(t1, t2, t3, _noise_profile(ctx, xs), cfg, poly, details)[0]
    )


def estimate_lr_even(obs, ctx, cfg, xgrid=None, details=None):
    """L_r-norm estimate for even integer r from a single observation."""
    if cfg.mode != "even":
        raise ParameterError(
            f"estimate_lr_even needs an even integer r config, got mode={cfg.mode!r}"
        )
    if isinstance(obs, (list, tuple)):
        if len(obs) != 1:
            raise ParameterError(f"needs exactly 1 observation, got {len(obs)}")
        obs = obs[0]
    _check_ctx(ctx, cfg)
    xs = _default_xgrid(ctx.h, obs.m) if xgrid is None else np.asarray(xgrid)
    t1 = _tilde_matrix(obs, ctx, xs)
    return float(estimate_lr_even_batch(t1, _noise_profile(ctx, xs), cfg, details)[0])


def pointwise_debug(x, splits, ctx, cfg, poly=None):
    """Regime decision and pointwise value at one x, for inspection."""
    _check_ctx(ctx, cfg)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    lam = _noise_profile(ctx, xs)
    thr = cfg.threshold(lam)
    if cfg.mode == "r1":
        t1 = _tilde_matrix(splits[0], ctx, xs)
        t2 = _tilde_matrix(splits[1], ctx, xs)
        smooth = np.abs(t2) >= thr
        pvals, _ = _poly_branch(t1, lam, cfg, poly)
        value = np.where(smooth, np.abs(t1), pvals)
        regime = "smooth" if bool(smooth[0, 0]) else "poly"
    elif cfg.mode == "noneven":
        t1 = _tilde_matrix(splits[0], ctx, xs)
        t2 = _tilde_matrix(splits[1], ctx, xs)
        t3 = _tilde_matrix(splits[2], ctx, xs)
        pos, neg = t3 > thr, t3 < -thr
        pvals, _ = _poly_branch(t1, lam, cfg, poly)
        value = np.where(
            pos,
            _taylor_branch(t1, t2, lam, cfg),
            np.where(neg, _taylor_branch(-t1, -t2, lam, cfg), pvals),
        )
        regime = "smooth" if bool((pos | neg)[0, 0]) else "poly"
    elif cfg.mode == "even":
        obs = splits[0] if isinstance(splits, (list, tuple)) else splits
        t1 = _tilde_matrix(obs, ctx, xs)
        coeffs = np.zeros(int(cfg.r) + 1)
        coeffs[-1] = 1.0
        value = _hermite_series(coeffs, t1, lam)
        regime = "smooth"
    else:  # pragma: no cover
        raise ParameterError(f"unknown mode {cfg.mode!r}")
    return {"regime": regime, "value": float(value[0, 0]), "threshold": float(np.atleast_1d(thr)[0])}


def poly_for_config(cfg):
    """The minimax polynomial the config's polynomial branch expects."""
    return best_poly_approx(cfg.r, cfg.K)
