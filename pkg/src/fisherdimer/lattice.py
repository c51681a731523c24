"""Fisher-lattice fundamental domain, Kasteleyn matrix and phase constants.

Vertex labels are 1..6 as in the fundamental domain: {1,2,3} is the lower
triangle, {4,5,6} the upper one, (3,4) is the vertical a-edge and the two
b-edges leave the domain as v6(m,n) -> v1(m+1,n) and v5(m,n) -> v2(m,n+1).

Translation convention: domain (m,n) is the origin domain shifted by
(m+n, m-n) = (time, horizontal position) on the diagonal grid, so
domains (k,-k) share a row and neighbouring a-edges on a row differ by (1,-1).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError

GAMMA_ZERO_TOL = 1e-10


@dataclass(frozen=True)
class ModelParams:
    x: float
    u: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.u)):
            raise DomainError("x and u must be finite")
        if self.x <= 0 or self.u <= 0:
            raise DomainError(f"need x > 0 and u > 0, got x={self.x}, u={self.u}")

    @property
    def a(self) -> float:
        return self.x

    @property
    def b(self) -> float:
        return self.u * self.x

    def require_thermo(self):
        """Standing assumption for limit computations: 0 < x < 1, b < 1."""
        if not self.x < 1:
            raise DomainError(f"x must lie in (0,1), got {self.x}")
        if not self.b < 1:
            raise DomainError(f"b = u*x must be < 1, got {self.b}")
        return self

    def with_u(self, u: float) -> "ModelParams":
        return replace(self, u=u)

    @classmethod
    def at_gamma(cls, x: float, gamma: float) -> "ModelParams":
        return cls(x, gamma_anisotropy(x, gamma))


def _check_x(x):
    if not 0 < x <= 1:
        raise DomainError(f"x must lie in (0,1], got {x}")


def critical_anisotropy(x: float) -> float:
    _check_x(x)
    # (-1 + sqrt(1+x^2))/x^2 rewritten without cancellation
    return 1.0 / (1.0 + np.sqrt(1.0 + x * x))


def independent_anisotropy(x: float) -> float:
    _check_x(x)
    return 1.0 / (1.0 + np.sqrt(1.0 - x * x))


def gamma_anisotropy(x: float, g: float) -> float:
    """u_g = (1 - sqrt(1 - g x^2)) / (g x^2), with the removable g=0 limit 1/2."""
    _check_x(x)
    gx2 = g * x * x
    if gx2 >= 1:
        raise DomainError(f"need gamma*x^2 < 1, got {gx2}")
    if abs(g) < GAMMA_ZERO_TOL:
        return 0.5
    return 1.0 / (1.0 + np.sqrt(1.0 - gx2))


def gamma_of(params: ModelParams) -> float:
    """Inverse of gamma_anisotropy: g = (2u - 1)/(u^2 x^2)."""
    return (2 * params.u - 1) / (params.u ** 2 * params.x ** 2)


def dual_anisotropy(params: ModelParams, strict: bool = True) -> ModelParams:
    """Duality u -> 1/(u x^2); particle statistics are invariant.

    The image of u < 1/x always lies above 1/x; strict=False accepts such dual-side
    inputs so the map can be applied twice.
    """
    if strict and params.u >= 1 / params.x:
        raise DomainError("duality requires u < 1/x")
    return params.with_u(1.0 / (params.u * params.x ** 2))


# --------------------------------------------------------------------------
# Kasteleyn matrix and characteristic polynomial

_UPPER = ((0, 1, -1.0), (0, 2, 1.0), (1, 2, -1.0), (3, 4, 1.0), (3, 5, -1.0), (4, 5, 1.0))


def build_kasteleyn(params: ModelParams, z, w) -> np.ndarray:
    """K(z,w); broadcasts over array-valued z, w (trailing 6x6 axes)."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if np.any(z == 0) or np.any(w == 0):
        raise DomainError("z and w must be nonzero")
    a, b = params.a, params.b
    z, w = np.broadcast_arrays(z, w)
    K = np.zeros(z.shape + (6, 6), dtype=complex)
    for i, j, s in _UPPER:
        K[..., i, j] = s
        K[..., j, i] = -s
    K[..., 2, 3] = a
    K[..., 3, 2] = -a
    K[..., 0, 5] = b / z
    K[..., 5, 0] = -b * z
    K[..., 1, 4] = b / w
    K[..., 4, 1] = -b * w
    return K


def char_poly(params: ModelParams, z, w):
    """Closed form of det K(z,w)."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if np.any(z == 0) or np.any(w == 0):
        raise DomainError("z and w must be nonzero")
    a, b = params.a, params.b
    out = (a * a + 2 * b * b + a * a * b ** 4
           + a * b * (1 - b * b) * (z + 1 / z + w + 1 / w)
           + b * b * (1 - a * a) * (z / w + w / z))
    return out if out.ndim else complex(out)


def char_poly_db(params: ModelParams, z, w):
    """Partial derivative of P(z,w) in b at fixed a (hand-differentiated)."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    a, b = params.a, params.b
    return (4 * b + 4 * a * a * b ** 3
            + a * (1 - 3 * b * b) * (z + 1 / z + w + 1 / w)
            + 2 * b * (1 - a * a) * (z / w + w / z))


def laurent_in_w(params: ModelParams, z):
    """Coefficients (p_{-1}, p_0, p_1) of P(z, .) as a Laurent polynomial in w."""
    z = np.asarray(z, dtype=complex)
    a, b = params.a, params.b
    c1 = a * b * (1 - b * b)
    c2 = b * b * (1 - a * a)
    pm1 = c1 + c2 * z
    p0 = a * a + 2 * b * b + a * a * b ** 4 + c1 * (z + 1 / z)
    p1 = c1 + c2 / z
    return pm1, p0, p1


def critical_value(params: ModelParams) -> float:
    """P(-1,-1) = (a - 2b - a b^2)^2, zero exactly on the critical line."""
    a, b = params.a, params.b
    return (a - 2 * b - a * b * b) ** 2


# --------------------------------------------------------------------------
# Spectral roots of A^2(v)

class Regime(str, enum.Enum):
    BELOW_CRITICAL = "BelowCritical"
    CRITICAL = "Critical"
    INTERMEDIATE = "Intermediate"
    INDEPENDENT = "Independent"
    ABOVE_INDEPENDENT = "AboveIndependent"


@dataclass(frozen=True)
class RootProfile:
    r: complex
    s: complex
    regime: Regime
    roots: tuple


REGIME_RTOL = 1e-12


def regime_of(params: ModelParams) -> Regime:
    x, u = params.x, params.u
    uc, ui = critical_anisotropy(x), independent_anisotropy(x)
    if abs(u - uc) <= REGIME_RTOL * uc:
        return Regime.CRITICAL
    if u < uc:
        return Regime.BELOW_CRITICAL
    if abs(u - ui) <= REGIME_RTOL * ui:
        return Regime.INDEPENDENT
    if u < ui:
        return Regime.INTERMEDIATE
    return Regime.ABOVE_INDEPENDENT


def a_squared_coeffs(params: ModelParams) -> np.ndarray:
    """Ascending coefficients of the quartic A^2(v)."""
    x, u = params.x, params.u
    P = np.polynomial.polynomial
    k = u - u ** 3 * x * x
    t = [u * u * (1 - x * x), 1 + 2 * u * u + u ** 4 * x ** 4, u * u * (1 - x * x)]
    return P.polysub(P.polymul(t, t), 4 * P.polymul([k, k], [0, k, k]))


def spectral_roots(params: ModelParams) -> RootProfile:
    if not params.x < 1 or not params.u < 1 / params.x:
        raise DomainError("need 0 < x < 1 and 0 < u < 1/x")
    roots = np.roots(a_squared_coeffs(params)[::-1]).astype(complex)
    regime = regime_of(params)
    if regime is Regime.ABOVE_INDEPENDENT:
        small = roots[np.abs(roots) < 1]
        r = small[np.argmax(small.imag)]
        s = 1 / np.conj(r)
    else:
        rr = np.sort(roots.real)
        s = rr[-1]
        rest = rr[1:-1]  # the pair {r, 1/r}; 1/s = rr[0]
        if regime is Regime.CRITICAL:
            r = 1.0
        elif regime is Regime.BELOW_CRITICAL:
            r = rest.max()
        else:
            r = rest.min()
        r, s = complex(r), complex(s)
    return RootProfile(complex(r), complex(s), regime, tuple(roots))


# --------------------------------------------------------------------------
# individual lattice edges

# (i, j, translation of v_j) -> weight kind; the reverse orientation carries the opposite sign
_EDGES = {
    (1, 2, (0, 0)): "-1", (1, 3, (0, 0)): "1", (2, 3, (0, 0)): "-1",
    (4, 5, (0, 0)): "1", (4, 6, (0, 0)): "-1", (5, 6, (0, 0)): "1",
    (3, 4, (0, 0)): "a",
    (6, 1, (1, 0)): "-b", (5, 2, (0, 1)): "-b",
}


def kasteleyn_weight(params: ModelParams, i: int, j: int, shift=(0, 0)) -> float:
    """K(v_i(0), v_j(shift)); zero if the two vertices are not adjacent."""
    shift = (int(shift[0]), int(shift[1]))
    sign = 1.0
    kind = _EDGES.get((i, j, shift))
    if kind is None:
        kind = _EDGES.get((j, i, (-shift[0], -shift[1])))
        sign = -1.0
    if kind is None:
        return 0.0
    val = {"1": 1.0, "-1": -1.0, "a": params.a, "-b": -params.b}[kind]
    return sign * val
