"""Probabilists' Hermite polynomials and unbiased Gaussian moment estimators.

H_k here uses the exp(-x^2/2) weight, so H_0 = 1, H_1 = x, H_2 = x^2 - 1, and

    H_{k+1}(x) = x H_k(x) - k H_{k-1}(x).

The point of this module is the estimator ``moment_estimate``: if
X ~ Normal(mu, lam^2) then E[lam^k H_k(X/lam)] = mu^k exactly, which is what
lets a plug-in polynomial of a noisy kernel projection be unbiased for the
same polynomial of the clean projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, SaturationError

MAX_DEGREE = 128

#: Default magnitude at which the recurrence is declared saturated.  Double
#: precision tops out near 1.8e308; stopping at 1e300 leaves headroom for the
#: caller to form products like lam^2 * G without overflowing to inf first.
OVERFLOW_GUARD = 1e300


@dataclass(frozen=True)
class HermiteContext:
    """Evaluation limits: degree cap and saturation threshold."""

    maxDegree: int = MAX_DEGREE
    overflowGuard: float = OVERFLOW_GUARD

    def __post_init__(self):
        if not (0 <= int(self.maxDegree) <= MAX_DEGREE):
            raise ParameterError(
                f"maxDegree must be in [0, {MAX_DEGREE}], got {self.maxDegree}"
            )
        if not (self.overflowGuard > 0):
            raise ParameterError("overflowGuard must be positive")


_DEFAULT_CTX = HermiteContext()


def _check_degree(k, ctx):
    if int(k) != k or k < 0:
        raise ParameterError(f"degree must be a nonnegative integer, got {k!r}")
    k = int(k)
    if k > ctx.maxDegree:
        raise ParameterError(f"degree {k} exceeds cap {ctx.maxDegree}")
    return k


def _scaled_recurrence(k, x, lamsq, ctx):
    """lam^k H_k(x/lam) via G_{j+1} = x G_j - j lam^2 G_{j-1}, G_0 = 1, G_1 = x.

    Multiplying the classical recurrence through by lam^{j+1} removes every
    division, so lam = 0 is handled exactly (G_k = x^k) rather than as a
    0 * inf special case.
    """
    x = np.asarray(x, dtype=float)
    if k == 0:
        return np.ones_like(x)
    prev = np.ones_like(x)
    cur = x.copy()
    guard = ctx.overflowGuard
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(1, k):
            nxt = x * cur - (j * lamsq) * prev
            # written so that NaN (e.g. inf - inf) also counts as saturated
            if not np.abs(nxt).max() <= guard:
                raise SaturationError(
                    f"Hermite recurrence exceeded {guard:g} at degree {j + 1}"
                )
            prev, cur = cur, nxt
    return cur


def hermite_eval(k, x, ctx=_DEFAULT_CTX):
    """H_k(x), probabilists' normalization.  Accepts scalar or array x."""
    k = _check_degree(k, ctx)
    out = _scaled_recurrence(k, x, 1.0, ctx)
    return float(out) if out.ndim == 0 else out


def moment_estimate(k, x, lam, ctx=_DEFAULT_CTX):
    """lam^k H_k(x/lam): unbiased for mu^k when x ~ Normal(mu, lam^2).

    lam = 0 returns x^k (the noiseless limit of the identity).
    """
    k = _check_degree(k, ctx)
    lam = float(lam)
    if lam < 0:
        raise ParameterError(f"lam must be nonnegative, got {lam}")
    out = _scaled_recurrence(k, x, lam * lam, ctx)
    return float(out) if out.ndim == 0 else out
