"""Best uniform polynomial approximation of |u|^r on [-1, 1].

The target is even, so the degree-K minimax problem is solved as a Remez
exchange for t^{r/2} on [0, 1] with a polynomial of degree floor(K/2) in
t = u^2.  The working basis is Chebyshev (T_k(2t-1), equivalently T_{2k}(u)),
which stays well conditioned at high degree; monomial coefficients are
recovered at the very end by an exact rational change of basis.

Degrees up to 128 are accepted.  Even integer r with K >= r short-circuits to
the exact monomial u^r.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numpy.polynomial import chebyshev as _cheb

from .errors import NumericalFailure, ParameterError

__all__ = ["PolyCoeffs", "best_poly_approx", "eval_poly", "detect_equioscillation"]

MAX_DEGREE = 128
_SPREAD_TOL = 1e-12
_MAX_ITER = 100


@dataclass(frozen=True)
class PolyCoeffs:
    """Minimax polynomial for |u|^r of degree <= K on [-1, 1].

    coeffs holds monomial coefficients g[0..K] (odd entries exactly zero);
    chebCoeffs the same polynomial in the Chebyshev basis, which is the
    representation used for evaluation on [-1, 1].  alternationPoints are the
    equioscillation abscissae in u-space, sorted increasing; empty for the
    exact even-r short circuit.
    """

    r: float
    K: int
    coeffs: np.ndarray
    chebCoeffs: np.ndarray
    supError: float
    alternationPoints: np.ndarray = field(default_factory=lambda: np.empty(0))


def _validate_rk(r, K):
    if not np.isfinite(r) or r <= 0:
        raise ParameterError(f"r must be a positive real, got {r!r}")
    if isinstance(K, bool) or not isinstance(K, (int, np.integer)):
        raise ParameterError(f"K must be an integer, got {K!r}")
    if K < 0 or K > MAX_DEGREE:
        raise ParameterError(f"degree cap exceeded: need 0 <= K <= {MAX_DEGREE}, got {K}")


def _is_even_integer(r):
    return abs(r - round(r)) < 1e-12 and round(r) % 2 == 0


def _cheb_int_rows(n):
    """Integer monomial coefficients of T_0..T_n (exact)."""
    rows = [[1], [0, 1]]
    for k in range(1, n):
        prev, cur = rows[k - 1], rows[k]
        nxt = [0] * (k + 2)
        for j, c in enumerate(cur):
            nxt[j + 1] += 2 * c
        for j, c in enumerate(prev):
            nxt[j] -= c
        rows.append(nxt)
    return rows[: n + 1]


def _exact_cheb2poly(cheb_coeffs):
    """Chebyshev -> monomial conversion, exactly rounded via rationals."""
    n = len(cheb_coeffs) - 1
    rows = _cheb_int_rows(n)
    out = [Fraction(0)] * (n + 1)
    for k, c in enumerate(cheb_coeffs):
        if c == 0.0:
            continue
        fc = Fraction(float(c))
        for j, t in enumerate(rows[k]):
            if t:
                out[j] += fc * t
    return np.array([float(v) for v in out])


def _phi(u, half_r):
    return np.power(u, half_r, where=u > 0, out=np.zeros_like(u)) if half_r < 1 else u**half_r


class _Remez:
    """Multi-point exchange for f(t) = t^a on [0, 1], degree m."""

    def __init__(self, a, m, ngrid=65537):
        self.a = a
        self.m = m
        # search grid clustered near 0 like the image of a uniform u-grid
        x = np.linspace(0.0, 1.0, ngrid)
        self.grid = x * x
        self.fgrid = self._f(self.grid)

    def _f(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = t[pos] ** self.a
        return out

    def _q(self, coeffs, t):
        return _cheb.chebval(2.0 * np.asarray(t) - 1.0, coeffs)

    def _err(self, coeffs, t):
        return self._f(t) - self._q(coeffs, t)

    def _solve(self, ref):
        m = self.m
        v = _cheb.chebvander(2.0 * ref - 1.0, m)
        signs = np.where(np.arange(m + 2) % 2 == 0, 1.0, -1.0)
        mat = np.hstack([v, signs[:, None]])
        sol = np.linalg.solve(mat, self._f(ref))
        return sol[:-1], sol[-1]

    def _refine(self, coeffs, t0, step):
        """Sharpen one extremum of |err| by two parabolic passes."""
        t = t0
        for h in (step, step / 64.0):
            lo = max(t - h, 0.0)
            hi = min(t + h, 1.0)
            tri = np.array([lo, t, hi])
            e = np.abs(self._err(coeffs, tri))
            denom = e[0] - 2.0 * e[1] + e[2]
            if denom < 0 and lo < t < hi:
                shift = 0.5 * (e[0] - e[2]) / denom * (hi - lo) / 2.0
                cand = min(max(t + shift, lo), hi)
            else:
                cand = tri[np.argmax(e)]
            t = cand
        return t, abs(float(self._err(coeffs, np.array([t]))[0]))

    def _extrema(self, coeffs):
        e = self.fgrid - self._q(coeffs, self.grid)
        s = np.abs(e)
        interior = np.flatnonzero((s[1:-1] >= s[:-2]) & (s[1:-1] >= s[2:])) + 1
        idx = np.unique(np.concatenate([[0], interior, [len(s) - 1]]))
        pts = []
        for i in idx:
            step = self.grid[min(i + 1, len(s) - 1)] - self.grid[max(i - 1, 0)]
            t, mag = self._refine(coeffs, self.grid[i], max(step, 1e-12))
            sign = np.sign(self._err(coeffs, np.array([t]))[0])
            if mag > 0:
                pts.append((t, sign, mag))
        pts.sort()
        # merge runs of equal sign, keeping the largest magnitude
        merged = []
        for t, sign, mag in pts:
            if merged and merged[-1][1] == sign:
                if mag > merged[-1][2]:
                    merged[-1] = (t, sign, mag)
            else:
                merged.append((t, sign, mag))
        return merged

    def run(self):
        m = self.m
        j = np.arange(m + 2, dtype=float)
        ref = np.cos((m + 1 - j) * np.pi / (2.0 * (m + 1))) ** 2
        ref[0] = 0.0
        ref[-1] = 1.0
        spread = np.inf
        coeffs = None
        for it in range(_MAX_ITER):
            coeffs, _ = self._solve(ref)
            merged = self._extrema(coeffs)
            if len(merged) < m + 2:
                raise NumericalFailure(
                    "Remez exchange lost alternation",
                    {"iterations": it, "extrema": len(merged), "needed": m + 2},
                )
            while len(merged) > m + 2:
                if merged[0][2] < merged[-1][2]:
                    merged.pop(0)
                else:
                    merged.pop()
            mags = np.array([p[2] for p in merged])
            ref = np.array([p[0] for p in merged])
            spread = (mags.max() - mags.min()) / mags.max()
            # the error is a difference of O(1) quantities, so its relative
            # evaluation noise is eps/E; don't demand a spread below that
            tol = max(_SPREAD_TOL, 8.0 * np.finfo(float).eps / mags.max())
            if spread < tol:
                coeffs, _ = self._solve(ref)
                return coeffs, ref, float(np.abs(self._err(coeffs, ref)).max())
        raise NumericalFailure(
            "Remez exchange did not reach the levelled-error tolerance",
            {"iterations": _MAX_ITER, "spread": float(spread), "reference": ref.tolist()},
        )


def best_poly_approx(r: float, K: int) -> PolyCoeffs:
    """Degree-K minimax approximation of |u|^r on [-1, 1]."""
    _validate_rk(r, K)
    r = float(r)
    if _is_even_integer(r) and K >= int(round(r)):
        mono = np.zeros(K + 1)
        mono[int(round(r))] = 1.0
        cheb = _cheb.poly2cheb(mono)
        cheb = np.pad(cheb, (0, K + 1 - len(cheb)))
        return PolyCoeffs(r=r, K=K, coeffs=mono, chebCoeffs=cheb, supError=0.0)

    m = K // 2
    solver = _Remez(r / 2.0, m)
    ucoeffs, ref, sup = solver.run()

    # T_k(2u^2 - 1) = T_{2k}(u): interleave with zeros for the u-basis
    cheb = np.zeros(K + 1)
    cheb[: 2 * m + 1 : 2] = ucoeffs
    mono = _exact_cheb2poly(cheb)

    # alternation points in u-space: mirror the t-reference through u = +-sqrt(t)
    pos = np.sqrt(ref[ref > 0])
    alt = np.concatenate([-pos[::-1], [0.0] if ref[0] == 0.0 else [], pos])
    return PolyCoeffs(
        r=r, K=K, coeffs=mono, chebCoeffs=cheb, supError=sup, alternationPoints=alt
    )


def eval_poly(p: PolyCoeffs, u):
    """Evaluate p at u: Clenshaw on [-1, 1], monomial Horner outside."""
    arr = np.asarray(u, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    inside = np.abs(arr) <= 1.0
    if inside.any():
        out[inside] = _cheb.chebval(arr[inside], p.chebCoeffs)
    if (~inside).any():
        out[~inside] = np.polynomial.polynomial.polyval(arr[~inside], p.coeffs)
    return float(out[0]) if scalar else out


def detect_equioscillation(p: PolyCoeffs, ngrid: int = 100_001):
    """Locate the near-extremal alternation set of |u|^r - p on a dense grid.

    Returns (points, errors) sorted by u, where consecutive errors alternate
    in sign and each magnitude is within a small relative band of the
    largest.  Grid extrema are sharpened by parabolic refinement so that the
    reported levelled-error spread reflects the polynomial, not the grid.
    """
    if p.supError == 0.0:
        return np.empty(0), np.empty(0)
    r = p.r

    def err(u):
        return np.abs(u) ** r - _cheb.chebval(u, p.chebCoeffs)

    u = np.linspace(-1.0, 1.0, ngrid)
    e = err(u)
    s = np.abs(e)
    interior = np.flatnonzero((s[1:-1] >= s[:-2]) & (s[1:-1] >= s[2:])) + 1
    idx = np.unique(np.concatenate([[0], interior, [ngrid - 1]]))
    step = u[1] - u[0]

    cands = []
    for i in idx:
        x = u[i]
        for h in (step, step / 64.0):
            lo, hi = max(x - h, -1.0), min(x + h, 1.0)
            tri = np.array([lo, x, hi])
            ee = np.abs(err(tri))
            denom = ee[0] - 2.0 * ee[1] + ee[2]
            if denom < 0 and lo < x < hi:
                x = min(max(x + 0.5 * (ee[0] - ee[2]) / denom * (hi - lo) / 2.0, lo), hi)
            else:
                x = tri[np.argmax(ee)]
        val = float(err(np.array([x]))[0])
        cands.append((x, val))

    cands.sort()
    emax = max(abs(v) for _, v in cands)
    keep = [(x, v) for x, v in cands if abs(v) >= emax * (1.0 - 1e-6)]
    merged = []
    for x, v in keep:
        if merged and np.sign(merged[-1][1]) == np.sign(v):
            if abs(v) > abs(merged[-1][1]):
                merged[-1] = (x, v)
        else:
            merged.append((x, v))
    pts = np.array([x for x, _ in merged])
    vals = np.array([v for _, v in merged])
    return pts, vals
