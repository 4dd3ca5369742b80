"""Polynomial-reproducing kernels, kernel projections, and the noise scale.

The order-M kernel on [-1/2, 1/2] is built by projecting the evaluation
functional at 0 onto polynomials of degree <= M:

    K_M(v) = sum_j phi_j(0) phi_j(v),

with {phi_j} the orthonormal (Legendre) polynomials on the support.  By
construction int K_M(v) p(v) dv = p(0) for every polynomial p of degree
<= M.  Near the endpoints of [0, 1] the same projection is redone on the
truncated support, which keeps exact reproduction all the way to the
boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre
from numpy.polynomial import polynomial as P

from .errors import ParameterError, ResolutionError

MAX_ORDER = 10

_HALF = 0.5
_KEY_DECIMALS = 9  # cache key rounding for truncated supports


@dataclass(frozen=True)
class KernelPoly:
    """A kernel on one support interval, in monomial form.

    ``anti`` is the antiderivative normalized to vanish at ``lo``; exact
    integrals of the kernel over sub-intervals are differences of it, which
    is what the white-noise integrator uses as cell weights.
    """

    lo: float
    hi: float
    coeffs: np.ndarray
    anti: np.ndarray
    l2: float

    def eval(self, v):
        v = np.asarray(v, dtype=float)
        inside = (v >= self.lo) & (v <= self.hi)
        return np.where(inside, P.polyval(v, self.coeffs), 0.0)

    def cdf(self, v):
        """int_{lo}^{v} K, clamped to the support (constant outside)."""
        v = np.clip(np.asarray(v, dtype=float), self.lo, self.hi)
        return P.polyval(v, self.anti)


def _build_kernel_poly(M, lo, hi):
    width = hi - lo
    if not width > 0:
        raise ParameterError(f"empty kernel support [{lo}, {hi}]")
    z0 = (-lo - hi) / width  # image of v = 0 under the affine map to [-1,1]
    legcoef = np.zeros(M + 1)
    l2 = 0.0
    for j in range(M + 1):
        pj0 = legendre.legval(z0, np.eye(M + 1)[j])
        legcoef[j] = (2 * j + 1) / width * pj0
        l2 += (2 * j + 1) / width * pj0 * pj0
    # expand P_j(z(v)) into monomials of v by composing with the affine map
    poly_z = np.polynomial.Polynomial(legendre.leg2poly(legcoef))
    affine = np.polynomial.Polynomial([(-lo - hi) / width, 2.0 / width])
    coeffs = poly_z(affine).coef
    anti = P.polyint(coeffs)
    anti[0] -= P.polyval(lo, anti)
    return KernelPoly(lo=lo, hi=hi, coeffs=coeffs, anti=anti, l2=float(np.sqrt(l2)))


class BoundaryKernelFamily:
    """One-sided kernels on truncated supports, cached by support."""

    def __init__(self, M):
        self.M = M
        self._cache = {}

    def variant(self, lo, hi):
        lo = max(lo, -_HALF)
        hi = min(hi, _HALF)
        key = (round(lo, _KEY_DECIMALS), round(hi, _KEY_DECIMALS))
        kp = self._cache.get(key)
        if kp is None:
            kp = _build_kernel_poly(self.M, lo, hi)
            self._cache[key] = kp
        return kp


@dataclass(frozen=True)
class Kernel:
    M: int
    interiorCoeffs: np.ndarray  # phi_j(0) in the orthonormal basis
    l2Norm: float
    boundaryVariants: BoundaryKernelFamily
    interior: KernelPoly

    def variant_for(self, x, h):
        """Kernel to use at evaluation point x with bandwidth h."""
        lo = max(-_HALF, (x - 1.0) / h)
        hi = min(_HALF, x / h)
        if lo <= -_HALF and hi >= _HALF:
            return self.interior
        return self.boundaryVariants.variant(lo, hi)


def make_kernel(M):
    """Order-M polynomial-reproducing kernel on [-1/2, 1/2]."""
    if int(M) != M or not (0 <= M <= MAX_ORDER):
        raise ParameterError(f"kernel order must be an integer in [0, {MAX_ORDER}], got {M!r}")
    M = int(M)
    # interior support has unit width, so phi_j(0) = sqrt(2j+1) P_j(0)
    coeffs0 = np.array(
        [np.sqrt(2 * j + 1) * legendre.legval(0.0, np.eye(M + 1)[j]) for j in range(M + 1)]
    )
    interior = _build_kernel_poly(M, -_HALF, _HALF)
    return Kernel(
        M=M,
        interiorCoeffs=coeffs0,
        l2Norm=float(np.sqrt(np.sum(coeffs0**2))),
        boundaryVariants=BoundaryKernelFamily(M),
        interior=interior,
    )


def lambda_h(sigma, n, h, kernel):
    """Noise scale sigma * ||K||_2 / sqrt(n h)."""
    if sigma < 0:
        raise ParameterError(f"sigma must be nonnegative, got {sigma}")
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if not (0 < h <= 1):
        raise ParameterError(f"h must be in (0, 1], got {h}")
    return sigma * kernel.l2Norm / np.sqrt(n * h)


@dataclass(frozen=True)
class ProjectionContext:
    """Bandwidth, effective sample size and noise level for one projection."""

    h: float
    n: float
    sigma: float
    kernel: Kernel
    lambda_h: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "lambda_h", lambda_h(self.sigma, self.n, self.h, self.kernel))


def noise_scale_profile(kernel, h, xs, n, sigma):
    """Pointwise noise scale sigma ||K_x||_2 / sqrt(n h) over evaluation points.

    Matches lambda_h at interior points; in the boundary zones the one-sided
    kernel's L2 norm applies (it is larger), which is what keeps the Hermite
    moment constructions unbiased there.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    out = np.empty(xs.shape)
    base = sigma / np.sqrt(n * h)
    interior = (xs >= h * _HALF) & (xs <= 1.0 - h * _HALF)
    out[interior] = base * kernel.l2Norm
    for i in np.nonzero(~interior)[0]:
        out[i] = base * kernel.variant_for(xs[i], h).l2
    return out


def reproduction_residuals(kernel):
    """|int K(v) v^j dv - delta_{j0}| for j = 0..M, interior kernel."""
    out = np.empty(kernel.M + 1)
    for j in range(kernel.M + 1):
        integrand = P.polyint(P.polymul(kernel.interior.coeffs, np.eye(j + 1)[j]))
        val = P.polyval(_HALF, integrand) - P.polyval(-_HALF, integrand)
        out[j] = abs(val - (1.0 if j == 0 else 0.0))
    return out


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------

def _check_resolution(m, h):
    if 1.0 / m > h / 10.0 + 1e-15:
        raise ResolutionError(
            f"grid spacing 1/{m} exceeds h/10 = {h / 10:.3g}; refine the grid"
        )


def _lagrange_stencil_values(fgrid, us, M):
    """Interpolate midpoint samples to arbitrary points with a degree-M stencil.

    Exact whenever the underlying function is a polynomial of degree <= M,
    which is what makes kernel reproduction exact up to rounding.
    """
    m = fgrid.shape[-1]
    deg = min(M, m - 1)
    # fractional index of each query point among midpoint samples
    pos = us * m - 0.5
    start = np.clip(np.round(pos).astype(int) - deg // 2, 0, m - 1 - deg)
    xi = pos - start  # local coordinate in [0, deg]-ish
    vals = np.zeros_like(us)
    for k in range(deg + 1):
        lk = np.ones_like(us)
        for j in range(deg + 1):
            if j != k:
                lk *= (xi - j) / (k - j)
        vals += fgrid[start + k] * lk
    return vals


def project(f, ctx, x):
    """Kernel projection f_h(x) = int f(u) (1/h) K((x-u)/h) du.

    ``f`` is the signal sampled at the m cell midpoints (i + 1/2)/m of a
    uniform grid on [0, 1] with 1/m <= h/10.  Each grid cell intersected
    with the kernel support is integrated with an (M+1)-point Gauss rule
    after locally interpolating ``f``; polynomial inputs of degree <= M are
    therefore reproduced exactly.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 1:
        raise ParameterError("signal must be a 1-d sample array")
    m = f.shape[0]
    h = ctx.h
    _check_resolution(m, h)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any((xs < 0) | (xs > 1)):
        raise ParameterError("evaluation points must lie in [0, 1]")

    M = ctx.kernel.M
    nodes, gl_w = np.polynomial.legendre.leggauss(M + 1)
    dt = 1.0 / m
    out = np.empty(xs.shape)
    for ix, xv in enumerate(xs):
        kp = ctx.kernel.variant_for(xv, h)
        # u-support of the scaled kernel, intersected with [0, 1]
        ulo, uhi = xv - h * kp.hi, xv - h * kp.lo
        c0, c1 = int(np.floor(ulo / dt)), int(np.ceil(uhi / dt))
        edges = np.clip(np.arange(c0, c1 + 1) * dt, ulo, uhi)
        a, b = edges[:-1], edges[1:]
        keep = b > a
        a, b = a[keep], b[keep]
        half = 0.5 * (b - a)
        # panel quadrature nodes, flattened (n_panels, M+1)
        uq = (0.5 * (a + b))[:, None] + half[:, None] * nodes[None, :]
        wq = half[:, None] * gl_w[None, :]
        fq = _lagrange_stencil_values(f, uq.ravel(), M).reshape(uq.shape)
        kq = P.polyval((xv - uq) / h, kp.coeffs) / h
        out[ix] = float(np.sum(fq * kq * wq))
    return out[0] if np.isscalar(x) or np.asarray(x).ndim == 0 else out


def cell_weight_profile(kernel, h, x, m):
    """Exact per-cell integrals of (1/h) K((x-u)/h) over the grid cells.

    Returns (start, w): w[j] = int over cell start+j of the scaled kernel.
    Only cells meeting the support are included.
    """
    kp = kernel.variant_for(x, h)
    dt = 1.0 / m
    ulo, uhi = x - h * kp.hi, x - h * kp.lo
    start = max(int(np.floor(ulo / dt)), 0)
    stop = min(int(np.ceil(uhi / dt)), m)
    edges = np.arange(start, stop + 1) * dt
    # v = (x-u)/h is decreasing in u; cdf differences give exact integrals
    v = (x - edges) / h
    cdf = kp.cdf(v)
    return start, cdf[:-1] - cdf[1:]


def cell_weight_matrix(kernel, h, xs, m):
    """Vectorized cell_weight_profile over many points with one fixed width.

    Returns (starts, W) with W[i] the weight window for xs[i], zero-padded
    to the common width.  Interior points share the interior kernel and are
    handled in one vectorized sweep; boundary points fall back to per-point
    construction.
    """
    xs = np.asarray(xs, dtype=float)
    dt = 1.0 / m
    width = min(int(np.ceil(h / dt)) + 2, m)
    starts = np.clip(np.floor((xs - h * _HALF) / dt).astype(int), 0, max(m - width, 0))
    W = np.zeros((xs.size, width))

    interior = (xs >= h * _HALF) & (xs <= 1.0 - h * _HALF)
    if np.any(interior):
        kp = kernel.interior
        edges = starts[interior, None] * dt + np.arange(width + 1)[None, :] * dt
        cdf = kp.cdf((xs[interior, None] - edges) / h)
        W[interior] = cdf[:, :-1] - cdf[:, 1:]
    for i in np.nonzero(~interior)[0]:
        s, w = cell_weight_profile(kernel, h, xs[i], m)
        off = s - starts[i]
        W[i, off : off + w.size] = w
    return starts, W
