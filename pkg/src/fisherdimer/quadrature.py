"""Integration over the unit torus |z| = |w| = 1.

Two routes are provided for every Fourier-type quantity:

* ``torus_integral``: product trapezoid rule on a half-shifted N x N grid with
  N doubling.  Spectrally accurate for analytic integrands, slow (O(1/N)) at
  criticality.
* the "residue" route: for fixed z the w-integral is done exactly from the two
  roots of w P(z, w), leaving a 1D integral in arg z that is evaluated with
  vectorized adaptive Gauss-Kronrod, split at z = -1 where the critical
  singularity sits.

Inverse Kasteleyn entries.  With K(z,w)_{ij} = sum_e K(v_i(0), v_j(e)) z^e1 w^e2,
the infinite-lattice inverse is G(v_i(0), v_j(m,n)) = [z^m w^n] K^{-1}(z,w)_{ij}.
``inverse_entry(params, InverseEntrySpec(i, j, m, n))`` returns the entry in the
notation K^{-1}(v_i, v_j(m,n)) used throughout the docs, which is

    K^{-1}(v_i, v_j(m,n)) := G(v_j(0), v_i(m,n)) = [z^m w^n] K^{-1}(z,w)_{ji}.

With it K^{-1}(v_3, v_4) = 1/(x(1+x)) at u_i and K^{-1}(v_3, v_3(n,-n)) > 0 at u_c.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .errors import CriticalSingularity, DomainError, NonConvergence, SingularNode
from .lattice import (ModelParams, build_kasteleyn, char_poly, critical_anisotropy,
                      laurent_in_w)

DEFAULT_TOL = 1e-10
CRITICAL_TOL = 1e-7
N_CAP = 2 ** 14

# --------------------------------------------------------------------------
# adaptive Gauss-Kronrod (7/15), vectorized over panels and integrand components

_XGK = np.array([0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                 0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                 0.207784955007898467600689403773245, 0.0])
_WGK = np.array([0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                 0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                 0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG = np.array([0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                0.381830050505118944950369775488975, 0.417959183673469387755102040816327])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WGAUSS = np.zeros(15)
_WGAUSS[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


def adaptive_quad(f, a, b, tol=1e-12, breakpoints=(), max_panels=200000, abs_floor=1e-300,
                  l1_floor=1e-3, with_noise=False):
    """Integrate f over [a, b] with globally adaptive GK15.

    f maps a 1D array of abscissae (k,) to values of shape (k,) or (k, m).
    Panels are bisected until the summed Kronrod-Gauss error estimate is below
    tol * max(|I|, l1_floor * int|f|, abs_floor) for every component, so
    components that cancel to nearly zero do not demand unbounded refinement.
    With with_noise=True, f returns (values, noise) where noise bounds the
    pointwise roundoff; panels whose error estimate is within that floor are
    retired instead of bisected.
    """
    edges = np.unique(np.concatenate([[a, b], [p for p in breakpoints if a < p < b]]))
    lo, hi = edges[:-1], edges[1:]
    done_val = 0.0
    done_err = 0.0
    done_l1 = 0.0
    total_panels = 0
    while True:
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        t = (mid[:, None] + half[:, None] * _NODES[None, :]).ravel()
        if with_noise:
            vals, noise = f(t)
            vals = np.asarray(vals)
            noise = np.asarray(noise).reshape((lo.size, 15) + vals.shape[1:])
        else:
            vals = np.asarray(f(t))
            noise = None
        vals = vals.reshape((lo.size, 15) + vals.shape[1:])
        wshape = (1, 15) + (1,) * (vals.ndim - 2)
        hs = half.reshape((-1,) + (1,) * (vals.ndim - 2))
        k = hs * np.sum(vals * _WK.reshape(wshape), axis=1)
        g = hs * np.sum(vals * _WGAUSS.reshape(wshape), axis=1)
        err = np.abs(k - g)
        l1 = hs * np.sum(np.abs(vals) * _WK.reshape(wshape), axis=1)
        total_panels += lo.size
        est = done_val + k.sum(axis=0)
        scale = np.maximum(np.maximum(np.abs(est), l1_floor * (done_l1 + l1.sum(axis=0))),
                           abs_floor)
        tot_err = done_err + err.sum(axis=0)
        if np.all(tot_err <= tol * scale):
            return est
        # retire panels whose error is negligible relative to the target
        share = 0.1 * tol * scale / lo.size
        roundoff = 50 * np.finfo(float).eps * l1
        if noise is not None:
            roundoff = roundoff + 10 * hs * np.sum(noise * _WK.reshape(wshape), axis=1)
        ok = (err <= share) | (err <= roundoff)
        good = ok if ok.ndim == 1 else np.all(ok, axis=1)
        done_val = done_val + k[good].sum(axis=0)
        done_err = done_err + err[good].sum(axis=0)
        done_l1 = done_l1 + l1[good].sum(axis=0)
        lo, hi = lo[~good], hi[~good]
        if lo.size == 0:
            return done_val
        if total_panels > max_panels or np.min(hi - lo) < 1e-15 * max(abs(a), abs(b), 1.0):
            raise NonConvergence(
                f"adaptive_quad: error {np.max(tot_err / scale):.3g} > tol {tol:.1g} "
                f"after {total_panels} panels")
        m2 = 0.5 * (lo + hi)
        lo, hi = np.concatenate([lo, m2]), np.concatenate([m2, hi])


# --------------------------------------------------------------------------
# product trapezoid on the torus

@dataclass(frozen=True)
class TorusGrid:
    N: int
    shift: float = 0.5

    def __post_init__(self):
        if self.N < 16 or self.N & (self.N - 1):
            raise DomainError("TorusGrid.N must be a power of two >= 16")

    def angles(self):
        return 2 * np.pi * (np.arange(self.N) + self.shift) / self.N

    def nodes(self):
        return np.exp(1j * self.angles())

    def refine(self) -> "TorusGrid":
        return TorusGrid(2 * self.N, self.shift)


def trapezoid_mean(integrand, grid: TorusGrid, block=256):
    """Mean of integrand(z, w) over the grid; row blocks bound memory."""
    zs = grid.nodes()
    ws = grid.nodes()
    parts = []
    for k in range(0, grid.N, block):
        z = zs[k:k + block, None]
        vals = np.asarray(integrand(z, ws[None, :]))
        parts.append(vals.reshape(vals.shape[:2] + (-1,)).sum(axis=(0, 1)))
    tot = np.sum(parts, axis=0) / grid.N ** 2
    return tot


def torus_integral(integrand, tol=DEFAULT_TOL, N0=16, N_cap=N_CAP, shift=0.5, atol=0.0,
                   return_grid=False):
    """(2 pi i)^-2 of integrand dz/z dw/w by trapezoid with N doubling.

    The integrand takes broadcastable (z, w) arrays and may return trailing
    components; convergence is judged on all of them.
    """
    grid = TorusGrid(N0, shift)
    prev = trapezoid_mean(integrand, grid)
    while True:
        if 2 * grid.N > N_cap:
            raise NonConvergence(f"torus_integral: N cap {N_cap} reached")
        grid = grid.refine()
        cur = trapezoid_mean(integrand, grid)
        diff = np.abs(cur - prev)
        if np.all(diff <= tol * np.abs(cur) + atol):
            out = cur if cur.size > 1 else complex(cur.ravel()[0])
            return (out, grid) if return_grid else out
        prev = cur


# --------------------------------------------------------------------------
# residue route

@functools.lru_cache(maxsize=256)
def adjugate_coefficients(params: ModelParams) -> np.ndarray:
    """C[i, j, p+1, q+1] with adj K(z,w)_{ij} = sum_{p,q in {-1,0,1}} C z^p w^q.

    Cofactors are evaluated on a 4x4 grid of torus points and Fourier analysed;
    the |p| = 2 or |q| = 2 components are checked to vanish.
    """
    M = 4
    ang = 2 * np.pi * (np.arange(M) + 0.37) / M
    z = np.exp(1j * ang)[:, None]
    w = np.exp(1j * ang)[None, :]
    K = build_kasteleyn(params, z, w)
    adj = np.empty((M, M, 6, 6), dtype=complex)
    idx = np.arange(6)
    for i in range(6):
        for j in range(6):
            minor = K[..., idx != j, :][..., :, idx != i]
            adj[..., i, j] = (-1) ** (i + j) * np.linalg.det(minor)
    # coefficient of z^p w^q: mean over grid of adj * z^-p w^-q
    C = np.zeros((6, 6, 3, 3), dtype=complex)
    for p in (-1, 0, 1):
        for q in (-1, 0, 1):
            wt = (z ** (-p) * w ** (-q))[..., None, None]
            C[:, :, p + 1, q + 1] = np.mean(adj * wt, axis=(0, 1))
    wt = (z ** (-2))[..., None, None]
    if np.max(np.abs(np.mean(adj * wt, axis=(0, 1)))) > 1e-10 * max(1.0, np.abs(C).max()):
        raise RuntimeError("adjugate has unexpected degree")
    C[np.abs(C) < 1e-15 * np.abs(C).max()] = 0.0
    return C


def w_roots(params: ModelParams, z, yp2=None):
    """Roots (alpha, beta) of w P(z,w) with |alpha| <= |beta|, and p_1(z).

    The discriminant p0^2 - 4 p1 p_{-1} is a quadratic in y = z + 1/z that
    vanishes at y = -2 on the critical line; it is expanded about y = -2 so the
    pinch at z = -1 keeps full relative accuracy.  yp2 = y + 2 may be passed
    exactly (4 sin^2(phi/2) for z = -exp(i phi)).
    """
    z = np.asarray(z, dtype=complex)
    a, b = params.a, params.b
    c1 = a * b * (1 - b * b)
    c2 = b * b * (1 - a * a)
    s0 = a * a + 2 * b * b + a * a * b ** 4
    if yp2 is None:
        yp2 = z + 1 / z + 2
    y = yp2 - 2
    f_m2 = (a - 2 * b - a * b * b) ** 2 * (s0 - 2 * c2)
    disc2 = f_m2 + yp2 * (c1 * c1 * (y - 2) + 2 * s0 * c1 - 4 * c1 * c2)
    disc = np.sqrt(disc2 + 0j)
    p0 = s0 + c1 * y
    p1 = c1 + c2 / z
    pm1 = c1 + c2 * z
    sgn = np.where(np.real(np.conj(p0) * disc) >= 0, 1.0, -1.0)
    q = -0.5 * (p0 + sgn * disc)
    r1 = q / p1
    r2 = pm1 / q
    swap = np.abs(r1) > np.abs(r2)
    alpha = np.where(swap, r2, r1)
    beta = np.where(swap, r1, r2)
    return alpha, beta, p1


def inv_p_coefficient(alpha, beta, p1, j):
    """[w^j] of 1/P(z, .) on |w| = 1 (vectorized over z, scalar integer j)."""
    D = p1 * (alpha - beta)
    if j >= 0:
        return beta ** (-j) / D
    return alpha ** (-j) / D


def symbol_w_coefficient(params: ModelParams, z, i, j, q, roots=None, noise=False):
    """[w^q] of K^{-1}(z, w)_{ij} for fixed z (labels 1-based).

    With noise=True also returns a roundoff scale: eps * sum of term
    magnitudes (cancellation near the critical pinch) times 2 + |q| (powers of
    the roots amplify their relative error).
    """
    C = adjugate_coefficients(params)
    alpha, beta, p1 = roots if roots is not None else w_roots(params, z)
    out = 0.0
    mag = 0.0
    for k in (-1, 0, 1):
        ck = C[i - 1, j - 1, :, k + 1]
        if not np.any(ck):
            continue
        A = ck[0] / z + ck[1] + ck[2] * z
        term = A * inv_p_coefficient(alpha, beta, p1, q - k)
        out = out + term
        mag = mag + np.abs(term)
    if noise:
        return out, np.finfo(float).eps * (2 + abs(q)) * mag
    return out


def _gk_fixed(f, a, b):
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    vals = np.asarray(f(mid + half * _NODES))
    return half * np.tensordot(_WK, vals, axes=(0, 0))


def _phi_integral(fz, tol, params: ModelParams):
    """(1/2pi) integral over z = -exp(i phi), phi in (-pi, pi), of a real-symmetric integrand.

    fz(z, yp2) receives z and the exact value yp2 = z + 1/z + 2 and returns
    (values, noise).  All Kasteleyn weights are real, so f(-phi) = conj f(phi)
    and the integral is (1/pi) int_0^pi Re f.  The integrand is bounded but may
    jump at phi = 0 (critical pinch); the core phi < phi0 gets one fixed GK15
    panel, the rest is graded geometrically toward 0 and refined adaptively.
    """
    def f(phi):
        vals, noise = fz(-np.exp(1j * phi), 4 * np.sin(0.5 * phi) ** 2)
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("nonfinite integrand on the z-circle")
        return np.real(vals), noise

    phi0 = min(1e-7, 1e-3 * params.x ** 2)
    pts = np.pi * 2.0 ** (-np.arange(1, 80))
    pts = pts[pts > phi0]
    core = _gk_fixed(lambda t: f(t)[0], 0.0, phi0)
    main = adaptive_quad(f, phi0, np.pi, tol=tol, breakpoints=pts, with_noise=True)
    return (core + main) / np.pi


def green_many(params: ModelParams, entries, tol=1e-10):
    """G(v_i(0), v_j(m,n)) for each (i, j, m, n) in entries, via the residue route."""
    entries = [tuple(int(v) for v in e) for e in entries]
    for i, j, _, _ in entries:
        if not (1 <= i <= 6 and 1 <= j <= 6):
            raise DomainError("vertex labels must be in 1..6")

    def fz(z, yp2):
        roots = w_roots(params, z, yp2)
        vals, noise = [], []
        for i, j, m, n in entries:
            v, e = symbol_w_coefficient(params, z, i, j, n, roots, noise=True)
            vals.append(v * z ** (-m))
            noise.append(e * (1 + abs(m)))
        return np.stack(vals, axis=-1), np.stack(noise, axis=-1)

    if not entries:
        return np.zeros(0, dtype=complex)
    return _phi_integral(fz, tol, params)


def green(params: ModelParams, i, j, m, n, tol=1e-10) -> complex:
    return complex(green_many(params, [(i, j, m, n)], tol)[0])


@dataclass(frozen=True)
class InverseEntrySpec:
    i: int
    j: int
    m: int = 0
    n: int = 0

    def __post_init__(self):
        if not (1 <= self.i <= 6 and 1 <= self.j <= 6):
            raise DomainError("vertex labels must be in 1..6")


def inverse_entries(params: ModelParams, specs, route="residue", tol=None):
    """Batch of K^{-1}(v_i, v_j(m,n)) values (see module docstring for convention)."""
    specs = list(specs)
    if route == "residue":
        return green_many(params, [(s.j, s.i, s.m, s.n) for s in specs],
                          tol=tol if tol is not None else 1e-10)
    if route == "torus":
        return inverse_entries_torus(params, specs, tol=tol if tol is not None else DEFAULT_TOL)
    raise DomainError(f"unknown route {route!r}")


def inverse_entry(params: ModelParams, spec: InverseEntrySpec, route="residue", tol=None) -> complex:
    return complex(inverse_entries(params, [spec], route, tol)[0])


class NodeCounter:
    def __init__(self):
        self.singular = 0


def inverse_entries_torus(params: ModelParams, specs, tol=DEFAULT_TOL, N_cap=N_CAP, counter=None):
    """Per-node 6x6 inversion of K(z,w) and trapezoid integration."""
    counter = counter if counter is not None else NodeCounter()
    ii = np.array([s.j - 1 for s in specs])
    jj = np.array([s.i - 1 for s in specs])
    mm = np.array([s.m for s in specs])
    nn = np.array([s.n for s in specs])

    def integrand(z, w):
        K = build_kasteleyn(params, z, w)
        P = np.abs(char_poly(params, z, w))
        bad = P < 1e-13 * (params.a ** 2 + params.b ** 2)
        if np.any(bad):
            counter.singular += int(bad.sum())
            K = np.where(bad[..., None, None], build_kasteleyn(params, z * np.exp(1e-7j), w), K)
        Ki = np.linalg.inv(K)
        vals = Ki[..., ii, jj] * z[..., None] ** (-mm) * w[..., None] ** (-nn)
        return vals

    return np.atleast_1d(torus_integral(integrand, tol=tol, N_cap=N_cap))


# --------------------------------------------------------------------------
# partition function and Fourier coefficients of 1/P

def log_partition_density(params: ModelParams, tol=DEFAULT_TOL, route="residue") -> float:
    """log Z per fundamental domain: half the torus mean of log P."""
    params.require_thermo()
    if _near_critical(params, 1e-12):
        raise CriticalSingularity("log P has a log singularity at u_c; use u != u_c")
    if route == "torus":
        def f(z, w):
            return np.log(np.real(char_poly(params, z, w)))
        return 0.5 * float(np.real(torus_integral(f, tol=tol)))
    if route != "residue":
        raise DomainError(f"unknown route {route!r}")

    # Jensen: the w-mean of log|p1 (w - alpha)(w - beta) / w| is log|p1 beta|,
    # since |alpha beta| = |p_{-1} / p1| = 1 on the z-circle
    def fz(z, yp2):
        _, beta, p1 = w_roots(params, z, yp2)
        v = np.log(np.abs(p1 * beta)) + 0j
        return v, np.finfo(float).eps * (1 + np.abs(v))
    return 0.5 * float(np.real(_phi_integral(fz, tol, params)))


def _near_critical(params, rtol):
    uc = critical_anisotropy(params.x)
    return abs(params.u - uc) <= rtol * uc


def fourier_coefficient(params: ModelParams, m: int, n: int, tol=DEFAULT_TOL, route="residue") -> float:
    """H(m,n) = (2 pi i)^-2 integral of z^m w^n / P dz/z dw/w."""
    if _near_critical(params, 1e-8):
        raise CriticalSingularity("1/P is not integrable at u_c")
    if route == "torus":
        val = torus_integral(lambda z, w: z ** m * w ** n / char_poly(params, z, w), tol=tol,
                             atol=1e-15)
    else:
        def fz(z, yp2):
            al, be, p1 = w_roots(params, z, yp2)
            v = z ** m * inv_p_coefficient(al, be, p1, -n)
            return v, np.finfo(float).eps * (2 + abs(m) + abs(n)) * np.abs(v)
        val = complex(_phi_integral(fz, tol, params))
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise RuntimeError(f"H({m},{n}) has imaginary part {val.imag:.3g}")
    return float(val.real)


def regularized_coefficient(params: ModelParams, m: int, n: int, tol=1e-10) -> float:
    """(2 pi i)^-2 integral of (z^m w^-n - (-1)^(m-n)) / P dz/z dw/w at u = u_c."""
    if not _near_critical(params, 1e-10):
        raise DomainError("regularized_coefficient is defined at u = u_c")
    sgn = (-1.0) ** (m - n)

    def fz(z, yp2):
        al, be, p1 = w_roots(params, z, yp2)
        D = p1 * (al - be)
        # [w^n] of w^-n/P is [w^n] h; numerator difference kept in one fraction
        if n >= 0:
            num = z ** m * be ** (-n) - sgn
        else:
            num = z ** m * al ** (-n) - sgn
        return num / D, np.finfo(float).eps * (2 + abs(m) + abs(n)) * (1 + np.abs(num)) / np.abs(D)

    return float(np.real(_phi_integral(fz, tol, params)))


def require_nonsingular(K):
    if np.linalg.cond(K) > 1e14:
        raise SingularNode("Kasteleyn matrix numerically singular")
