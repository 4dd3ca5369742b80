"""Two-prior lower-bound machinery: moment matching, tilting, chi-square.

The pipeline builds a pair of symmetric priors mu0, mu1 on
[-sqrt(lnN), sqrt(lnN)] whose moments agree up to degree K while their
r-th absolute moments stay separated:

1. solve_moment_lp  --  maximize int f d(nu1 - nu0) over probability
   measures on I = [1/lnN^2, 1] with matched moments t^l, l = -q+1..K;
   by duality the value is twice the best uniform approximation error
   of f by the rational span {t^{-q+1}, ..., t^K}.
2. tilt_measures    --  reweight by ((lnN)^2 x)^{-q} and park the
   leftover mass in an atom at zero; matched moments survive up to
   degree q+K and the q-th moment becomes exactly (lnN)^{-2q}.
3. symmetrize_scale --  map X to eps*sqrt(X lnN) with a random sign,
   which kills every odd moment and spreads the support.

The LP is solved by the in-house dense simplex.  Raw monomial moment
rows on I span many decades and wreck the pivoting, so the problem is
posed in tilted weights y_j = t_j^{1-q} w_j: the matched functionals
t^{1-q} T_i(affine(t)) then have plain Chebyshev rows in [-1, 1], the
mass rows read sum t^{q-1} y = 1, and the objective becomes t^{r/2-1},
all tame.  Reported residuals are still plain monomial ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._simplex import simplex_solve
from .errors import LrnormError, ParameterError

__all__ = [
    "DiscreteMeasure",
    "MomentLPProblem",
    "PriorPair",
    "solve_moment_lp",
    "tilt_measures",
    "symmetrize_scale",
    "build_prior_pair",
    "chi2_bound",
    "log_chi2_bound",
    "tv_bound",
]


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely supported probability measure."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        sup = np.asarray(self.support, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "weights", w)
        if sup.ndim != 1 or sup.shape != w.shape or sup.size == 0:
            raise ParameterError("support and weights must be matching nonempty vectors")
        if np.any(np.diff(sup) <= 0):
            raise ParameterError("support must be strictly increasing")
        if np.any(w < 0):
            raise ParameterError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError(f"weights must sum to 1, got {w.sum()!r}")

    def moment(self, l):
        """int t^l d(measure); negative l needs a zero-free support."""
        if l < 0 and np.any(self.support == 0.0):
            raise ParameterError("negative moment of a measure with an atom at zero")
        return float(self.weights @ self.support ** l)

    def abs_moment(self, p):
        return float(self.weights @ np.abs(self.support) ** p)


@dataclass(frozen=True)
class MomentLPProblem:
    """Moment-matching LP instance on [intervalLo, intervalHi].

    objectiveExponent is -q + r/2 in the prior construction, but any
    real exponent is a valid LP objective f(t) = t^exponent.
    """

    q: int
    K: int
    intervalLo: float
    intervalHi: float
    gridSize: int
    objectiveExponent: float

    def __post_init__(self):
        if self.q < 1 or self.K < 1:
            raise ParameterError(f"need q >= 1 and K >= 1, got q={self.q}, K={self.K}")
        if not 0.0 < self.intervalLo < self.intervalHi:
            raise ParameterError(
                f"need 0 < intervalLo < intervalHi, got [{self.intervalLo}, {self.intervalHi}]"
            )


@dataclass(frozen=True, eq=False)
class PriorPair:
    mu0: DiscreteMeasure
    mu1: DiscreteMeasure
    separation: float
    momentResiduals: np.ndarray
    pMomentBounds: tuple
    lnN: float
    lpValue: float = field(default=float("nan"))


def _chebyshev_lobatto(lo, hi, size):
    # extrema nodes, endpoints included, ascending
    u = np.cos(np.pi * np.arange(size) / (size - 1))
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * u[::-1]


def solve_moment_lp(prob):
    """Maximize int f dnu1 - int f dnu0 under matched moments t^l, l=-q+1..K.

    Returns (nu0, nu1, value); the value is nonnegative by symmetry of the
    feasible set and equals 2 E_{q-1,K}(f; I) up to grid discretization.
    """
    floor_ = 50 * (prob.K + prob.q)
    if prob.gridSize < floor_:
        raise ParameterError(
            f"gridSize {prob.gridSize} too coarse; need >= 50 (K+q) = {floor_}"
        )
    t = _chebyshev_lobatto(prob.intervalLo, prob.intervalHi, prob.gridSize)
    u = (2.0 * t - (prob.intervalLo + prob.intervalHi)) / (prob.intervalHi - prob.intervalLo)
    nbasis = prob.K + prob.q  # span{t^{-q+1..K}} = t^{1-q} * polynomials of degree < K+q
    cheb = np.polynomial.chebyshev.chebvander(u, nbasis - 1)
    mass = t ** (prob.q - 1.0)  # tilted variables y = t^{1-q} w carry this in the mass rows

    G = t.size
    rows = nbasis + 2
    A = np.zeros((rows, 2 * G))
    A[:nbasis, :G] = cheb.T
    A[:nbasis, G:] = -cheb.T
    A[nbasis, :G] = mass
    A[nbasis + 1, G:] = mass
    b = np.zeros(rows)
    b[nbasis:] = 1.0

    f = t ** (prob.objectiveExponent + prob.q - 1.0)
    fscale = np.abs(f).max()
    cost = np.concatenate([-f, f]) / fscale
    y, val = simplex_solve(cost, A, b)
    return (
        _measure_from(t, y[G:] * mass),
        _measure_from(t, y[:G] * mass),
        -val * fscale,
    )


def _measure_from(grid, w):
    keep = w > 0.0
    weights = w[keep]
    return DiscreteMeasure(support=grid[keep], weights=weights / weights.sum())


def tilt_measures(nu, q, lnN):
    """Reweight by ((lnN)^2 x)^{-q}, parking leftover mass at zero.

    The result has q-th moment exactly (lnN)^{-2q}, and moments matched
    between two inputs stay matched up to degree q + K.
    """
    if q < 1 or lnN <= 1.0:
        raise ParameterError(f"need q >= 1 and lnN > 1, got q={q}, lnN={lnN}")
    lo = lnN ** -2.0
    sup = nu.support
    if sup[0] < lo * (1.0 - 1e-9) or sup[-1] > 1.0 + 1e-12:
        raise ParameterError(
            f"tilt needs support in [1/lnN^2, 1] = [{lo:.3g}, 1], "
            f"got [{sup[0]:.3g}, {sup[-1]:.3g}]"
        )
    tilted = nu.weights * (lnN ** 2 * sup) ** (-float(q))
    atom = 1.0 - tilted.sum()
    if atom < -1e-12:
        raise ParameterError(f"negative mass {atom:.3g} for the atom at zero")
    if atom > 1e-13:
        support = np.concatenate([[0.0], sup])
        weights = np.concatenate([[atom], tilted])
    else:
        support, weights = sup, tilted
    return DiscreteMeasure(support=support, weights=weights / weights.sum())


def symmetrize_scale(nuTilde, lnN):
    """Law of eps*sqrt(X lnN), eps a fair sign independent of X ~ nuTilde."""
    if lnN <= 1.0:
        raise ParameterError(f"need lnN > 1, got {lnN}")
    sup = nuTilde.support
    if sup[0] < 0.0 or sup[-1] > 1.0 + 1e-12:
        raise ParameterError(
            f"symmetrization needs support in [0, 1], got [{sup[0]:.3g}, {sup[-1]:.3g}]"
        )
    pos = sup > 0.0
    root = np.sqrt(sup[pos] * lnN)
    half = 0.5 * nuTilde.weights[pos]
    support = np.concatenate([-root[::-1], sup[~pos], root])
    weights = np.concatenate([half[::-1], nuTilde.weights[~pos], half])
    return DiscreteMeasure(support=support, weights=weights)


def _stage(label, fn, *args):
    try:
        return fn(*args)
    except LrnormError as e:
        e.args = (f"{label}: {e.args[0]}",) + e.args[1:]
        raise


def build_prior_pair(r, p, lnN, d):
    """Full pipeline: LP priors, tilt, symmetrize, and the condition report."""
    if r < 1.0:
        raise ParameterError(f"need r >= 1, got {r}")
    if float(r).is_integer() and int(r) % 2 == 0:
        raise ParameterError(f"r must be non-even, got {r}")
    if not (r <= p < math.inf):
        raise ParameterError(f"need r <= p < inf, got p={p}")
    if lnN <= 1.0 or d <= 0.0:
        raise ParameterError(f"need lnN > 1 and d > 0, got lnN={lnN}, d={d}")
    q = math.ceil(p / 2.0)
    K = math.ceil(d * lnN)
    prob = MomentLPProblem(
        q=q,
        K=K,
        intervalLo=lnN ** -2.0,
        intervalHi=1.0,
        gridSize=50 * (K + q),
        objectiveExponent=0.5 * r - q,
    )
    nu0, nu1, value = _stage("moment LP", solve_moment_lp, prob)
    mu0 = _stage("symmetrize", symmetrize_scale,
                 _stage("tilt", tilt_measures, nu0, q, lnN), lnN)
    mu1 = _stage("symmetrize", symmetrize_scale,
                 _stage("tilt", tilt_measures, nu1, q, lnN), lnN)
    residuals = np.array(
        [abs(mu1.moment(l) - mu0.moment(l)) for l in range(K + 1)]
    )
    return PriorPair(
        mu0=mu0,
        mu1=mu1,
        separation=mu1.abs_moment(r) - mu0.abs_moment(r),
        momentResiduals=residuals,
        pMomentBounds=(mu0.abs_moment(p), mu1.abs_moment(p)),
        lnN=float(lnN),
        lpValue=value,
    )


def _chi2_log1p_sum(alpha, d, N):
    # N * ln(1 + e^t), t = ln of the per-coordinate chi-square term
    lnN = math.log(N)
    t = 1.5 * alpha ** 2 * lnN + d * lnN * (math.log(alpha / d) + 1.0)
    return N * np.logaddexp(0.0, t)


def _check_chi2_args(alpha, d, N):
    if alpha <= 0.0 or d <= 0.0:
        raise ParameterError(f"need alpha > 0 and d > 0, got alpha={alpha}, d={d}")
    if N < 2:
        raise ParameterError(f"need N >= 2, got {N}")


def chi2_bound(alpha, d, N):
    """(1 + e^{3 alpha^2 lnN / 2} (alpha e / d)^{d lnN})^N - 1.

    Exact in log space; returns inf when the (finite) value exceeds the
    double range -- use log_chi2_bound for comparisons in that regime.
    """
    _check_chi2_args(alpha, d, N)
    u = _chi2_log1p_sum(alpha, d, N)
    return math.inf if u > 709.0 else math.expm1(u)


def log_chi2_bound(alpha, d, N):
    """ln of chi2_bound, defined for every finite input."""
    _check_chi2_args(alpha, d, N)
    u = _chi2_log1p_sum(alpha, d, N)
    if u == 0.0:
        return -math.inf
    if u < 1e-8:
        return math.log(u)  # expm1(u) ~ u
    return u + math.log(-math.expm1(-u))


def tv_bound(chi2):
    """Total-variation bound 1 - exp(-chi2)/2 from the chi-square distance."""
    if chi2 < 0.0:
        raise ParameterError(f"chi-square distance cannot be negative, got {chi2}")
    return 1.0 - 0.5 * math.exp(-chi2)
