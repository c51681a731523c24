"""Scaling-window kernels E1, E2, E3, e(gamma), the covariance C and correlation lengths.

Along the segment p in [e2, e1] the kernel integrals are written with
p = c - R cos(phi), c = (e1+e2)/2, R = (e1-e2)/2, which turns the square-root
endpoint singularities into smooth integrands on [0, pi]:

    E1(a) = (1/pi) int_0^pi 2 p exp(-a p) / sqrt((p+e1)(p+e2)) dphi
    E2(a) = (1/pi) int_0^pi (2 + 2g + p^2) exp(-a p) / (2 sqrt((p+e1)(p+e2))) dphi

and e(g) = E2(0).  For g > 1, R is imaginary and the conjugate halves of the
path cancel the imaginary part.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CoincidentPoints, DomainError, FitDegenerate, ImaginaryResidue
from .pfaffian import pfaffian
from .quadrature import adaptive_quad

KERNEL_TOL = 1e-12
IMAG_TOL = 1e-9
DEGENERATE_TOL = 1e-12


def _quad(f, a, b, tol=KERNEL_TOL):
    return adaptive_quad(f, a, b, tol=tol)


# --------------------------------------------------------------------------
# special functions

def bessel_I(n: int, z: float) -> float:
    """I_n(z) = (1/pi) int_0^pi exp(z cos t) cos(n t) dt for integer n."""
    if z < 0:
        raise DomainError("bessel_I needs z >= 0")
    n = int(n)
    val = _quad(lambda t: np.exp(z * np.cos(t)) * np.cos(n * t), 0.0, np.pi)
    return float(val / np.pi)


def _struve_pos(nu: int, z: float) -> float:
    # L_nu(z) = 2 (z/2)^nu / (sqrt(pi) Gamma(nu+1/2)) int_0^{pi/2} sinh(z cos t) sin^{2nu} t dt
    if z == 0:
        return 0.0
    integral = _quad(lambda t: np.sinh(z * np.cos(t)) * np.sin(t) ** (2 * nu), 0.0, np.pi / 2)
    return float(2 * (z / 2) ** nu / (math.sqrt(math.pi) * math.gamma(nu + 0.5)) * integral)


def struve_L(n: int, z: float) -> float:
    """Modified Struve L_n(z) for n in {-2, ..., 2}; negative orders by the three-term recurrence."""
    if z < 0:
        raise DomainError("struve_L needs z >= 0")
    n = int(n)
    if n >= 0:
        if n > 2:
            raise DomainError("struve_L implemented for orders -2..2")
        return _struve_pos(n, z)
    # L_{v-1} = L_{v+1} + (2v/z) L_v + (z/2)^v / (sqrt(pi) Gamma(v + 3/2))
    lm1 = _struve_pos(1, z) + 2 / math.pi
    if n == -1:
        return lm1
    if n == -2:
        if z == 0:
            raise DomainError("L_{-2} is singular at 0")
        return _struve_pos(0, z) - 2 * lm1 / z + 2 / (math.pi * z)
    raise DomainError("struve_L implemented for orders -2..2")


# --------------------------------------------------------------------------
# endpoints and kernels

@dataclass(frozen=True)
class Endpoints:
    e1: complex
    e2: complex


def endpoints(gamma: float) -> Endpoints:
    s = np.sqrt(complex(2 * (1 - gamma)))
    e1 = 2 + s
    e2 = (2 - s) if gamma > -1 else (-2 + s)
    if gamma == -1:
        e2 = 0j
    return Endpoints(complex(e1), complex(e2))


def is_degenerate(gamma: float) -> bool:
    """gamma = 1: the independent point, where C vanishes identically."""
    return abs(gamma - 1) <= DEGENERATE_TOL


def _kernel_integral(gamma: float, alpha: float, numerator) -> float:
    if alpha < 0:
        raise DomainError("alpha must be >= 0")
    ep = endpoints(gamma)
    c, R = (ep.e1 + ep.e2) / 2, (ep.e1 - ep.e2) / 2

    def f(phi):
        p = c - R * np.cos(phi)
        v = numerator(p) * np.exp(-alpha * p) / np.sqrt((p + ep.e1) * (p + ep.e2))
        return np.stack([v.real, v.imag], axis=-1)

    re, im = _quad(f, 0.0, np.pi) / np.pi
    if abs(im) >= IMAG_TOL * max(1.0, abs(re)):
        raise ImaginaryResidue(f"kernel integral has imaginary part {im:.3g}")
    return float(re)


def _e1_num(gamma):
    return lambda p: 2 * p


def _e2_num(gamma):
    return lambda p: (2 + 2 * gamma + p * p) / 2


def kernel_E1(gamma: float, alpha: float, route: str = "auto") -> float:
    """E1^gamma(alpha); route 'auto' uses the Bessel-Struve form at gamma = -1."""
    if route == "bessel" or (route == "auto" and gamma == -1):
        if gamma != -1:
            raise DomainError("the Bessel-Struve route exists only at gamma = -1")
        z = 4 * alpha
        return bessel_I(0, z) - struve_L(0, z)
    return _kernel_integral(gamma, alpha, _e1_num(gamma))


def kernel_E2(gamma: float, alpha: float, route: str = "auto") -> float:
    if route == "bessel" or (route == "auto" and gamma == -1):
        if gamma != -1:
            raise DomainError("the Bessel-Struve route exists only at gamma = -1")
        z = 4 * alpha
        return struve_L(-1, z) - bessel_I(1, z)
    return _kernel_integral(gamma, alpha, _e2_num(gamma))


def kernel_E3(alpha: float, route: str = "integral") -> float:
    """E3(alpha) = 2/(alpha pi) - 4 I_2(4 alpha) + 4 L_{-2}(4 alpha).

    The default route evaluates the equivalent bounded integral
    (4/pi) int_0^pi cos(2t) exp(-4 alpha sin t) dt, which avoids the
    cancellation between I_2 and L_{-2} at large alpha.
    """
    if alpha <= 0:
        raise DomainError("E3 needs alpha > 0")
    z = 4 * alpha
    if route == "bessel":
        return 2 / (alpha * math.pi) - 4 * bessel_I(2, z) + 4 * struve_L(-2, z)
    val = _quad(lambda t: np.cos(2 * t) * np.exp(-z * np.sin(t)), 0.0, np.pi)
    return float(4 * val / math.pi)


def edge_density_e(gamma: float) -> float:
    """e(gamma) = E2^gamma(0), the scaled particle density on a row."""
    if gamma == -1:
        return 2 / math.pi
    return _kernel_integral(gamma, 0.0, _e2_num(gamma))


def covariance_C(gamma: float, alpha: float) -> float:
    if is_degenerate(gamma):
        return 0.0
    e1, e2 = kernel_E1(gamma, alpha), kernel_E2(gamma, alpha)
    return (e1 - e2) * (e1 + e2)


# --------------------------------------------------------------------------
# correlation length

def correlation_length(gamma: float) -> float:
    if gamma == -1:
        return math.inf
    if is_degenerate(gamma):
        return 0.0
    if gamma > 1:
        return 0.25
    return 1 / (2 * endpoints(gamma).e2.real)


DEFAULT_FIT_WINDOW = (10.0, 30.0)


def correlation_length_fit(gamma: float, alpha_window=DEFAULT_FIT_WINDOW, npts: int = 41,
                           power_law: bool = True) -> float:
    """-1/slope of a least-squares fit of log|C(alpha)| over the window.

    With power_law=True a log(alpha) column absorbs the algebraic prefactor of
    the endpoint asymptotics (C ~ alpha^k exp(-alpha/xi)).
    """
    if is_degenerate(gamma):
        return 0.0
    lo, hi = alpha_window
    if not 0 < lo < hi:
        raise DomainError("fit window must satisfy 0 < lo < hi")
    alphas = np.linspace(lo, hi, npts)
    C = np.array([covariance_C(gamma, a) for a in alphas])
    if not np.all(np.isfinite(C)) or np.any(np.abs(C) < np.finfo(float).tiny):
        raise FitDegenerate("|C| underflows in the fit window")
    cols = [np.ones_like(alphas), alphas] + ([np.log(alphas)] if power_law else [])
    coef, *_ = np.linalg.lstsq(np.stack(cols, axis=1), np.log(np.abs(C)), rcond=None)
    slope = coef[1]
    if slope >= 0:
        return math.inf
    return float(-1 / slope)


# --------------------------------------------------------------------------
# m-point correlations

def m_point_correlation(gamma: float, points: Sequence[float]) -> float:
    """rho_m(y_1..y_m) = Pf of the 2m x 2m kernel matrix (points sorted first)."""
    y = np.sort(np.asarray(points, dtype=float))
    if y.size == 0:
        return 1.0
    if np.any(np.diff(y) <= 1e-12):
        raise CoincidentPoints("points must be distinct")
    m = y.size
    e = edge_density_e(gamma)
    M = np.zeros((2 * m, 2 * m))
    for i in range(m):
        M[2 * i, 2 * i + 1] = e
        for j in range(i + 1, m):
            d = y[j] - y[i]
            E1, E2 = kernel_E1(gamma, d), kernel_E2(gamma, d)
            # E2 sign fixed by the discrete m-particle probabilities
            M[2 * i:2 * i + 2, 2 * j:2 * j + 2] = [[-E1, E2], [-E2, E1]]
    M = M - M.T
    return float(pfaffian(M))


def poisson_intensity(u: float) -> float:
    """Intensity u^2 (1/sqrt(1-4u^2) - 1) of loops in the (x, x) window, u < 1/2."""
    if not 0 < u < 0.5:
        raise DomainError("poisson_intensity needs 0 < u < 1/2")
    return u * u * (1 / math.sqrt(1 - 4 * u * u) - 1)


# --------------------------------------------------------------------------
# tables

def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.12g}"


@dataclass
class KernelTable:
    gamma: float
    alphas: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    e_density: float
    C: np.ndarray
    degenerate: bool = field(default=False)

    @classmethod
    def build(cls, gamma: float, alphas: Sequence[float]) -> "KernelTable":
        alphas = np.asarray(alphas, dtype=float)
        if np.any(np.diff(alphas) <= 0) or np.any(alphas < 0):
            raise DomainError("alphas must be increasing and >= 0")
        E1 = np.array([kernel_E1(gamma, a) for a in alphas])
        E2 = np.array([kernel_E2(gamma, a) for a in alphas])
        deg = is_degenerate(gamma)
        C = np.zeros_like(E1) if deg else (E1 - E2) * (E1 + E2)
        return cls(gamma, alphas, E1, E2, edge_density_e(gamma), C, deg)

    HEADER = ("gamma", "alpha", "E1", "E2", "e", "C")

    def rows(self):
        for a, e1, e2, c in zip(self.alphas, self.E1, self.E2, self.C):
            yield [_fmt(self.gamma), _fmt(a), _fmt(e1), _fmt(e2), _fmt(self.e_density), _fmt(c)]

    def to_csv(self, fh=None, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(self.HEADER)
        w.writerows(self.rows())
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text
