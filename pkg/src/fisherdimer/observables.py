"""Expectations per fundamental domain: E[N_b], E[N_ac], E[N_X].

Two independent routes are kept for each quantity.  The quadrature route
integrates the torus formula (b/2) <d_b P / P> exactly in w (residues of the
Laurent quadratic P(z, .)) and adaptively in arg z; it is authoritative.  The
closed-form route evaluates the complete elliptic expressions with the
spectral roots of A^2(v).

Elliptic conventions (our own quadrature of the defining integrals):

    K(k)     = int_0^{pi/2} dt / sqrt(1 - k^2 sin^2 t)
    Pi(n, k) = int_0^{pi/2} dt / ((1 + n sin^2 t) sqrt(1 - k^2 sin^2 t))

Above u_c the first characteristic crosses the cut (-inf, -1) of Pi; the
continued value (pole pushed off the path, ``sheet=1``) differs from the
principal one by the residue term pi sqrt(n / ((1 + n)(n + k^2))).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import BranchFailure, DomainError, FisherDimerError, NonConvergence
from .lattice import (ModelParams, Regime, char_poly, char_poly_db, critical_anisotropy,
                      spectral_roots)
from .quadrature import (_phi_integral, adaptive_quad, green, inv_p_coefficient, torus_integral,
                         w_roots)

ELLIPTIC_TOL = 1e-13
QUAD_TOL = 1e-11
AGREE_TOL = 1e-6
IMAG_TOL = 1e-8


# --------------------------------------------------------------------------
# complete elliptic integrals

# graded toward t = pi/2, where 1 - k^2 sin^2 t nearly vanishes as k^2 -> 1
_THETA_BREAKS = np.pi / 2 - np.pi / 4 * 2.0 ** (-np.arange(0, 50))


def _theta_integral(g) -> complex:
    def f(t):
        v = g(t)
        return np.stack([v.real, v.imag], axis=-1)
    try:
        re, im = adaptive_quad(f, 0.0, np.pi / 2, tol=ELLIPTIC_TOL, breakpoints=_THETA_BREAKS)
    except FloatingPointError as exc:
        raise NonConvergence(str(exc)) from exc
    return complex(re, im)


def elliptic_K(k, kc2=None) -> complex:
    """Complete elliptic integral of the first kind, modulus k (principal sqrt).

    kc2 = 1 - k^2 may be passed exactly; the integrand is then evaluated as
    1 / sqrt(cos^2 t + kc2 sin^2 t), free of cancellation as k^2 -> 1.
    """
    kc2 = 1 - complex(k) ** 2 if kc2 is None else complex(kc2)
    if kc2.imag == 0 and kc2.real <= 0:
        raise DomainError("elliptic_K: k^2 >= 1 puts a branch point on the path")

    def g(t):
        c2, s2 = np.cos(t) ** 2, np.sin(t) ** 2
        return 1 / np.sqrt(c2 + kc2 * s2 + 0j)
    return _theta_integral(g)


def _pi_residue(n: complex, k2: complex) -> complex:
    return math.pi * np.sqrt(n / ((1 + n) * (n + k2)) + 0j)


def elliptic_Pi(n, k, sheet: int = 0, n1=None, kc2=None) -> complex:
    """Complete elliptic integral of the third kind in the 1 + n sin^2 convention.

    sheet = 1 continues Pi across the cut n in (-inf, -1) from below: the
    integration path passes on the other side of the pole at sin^2 t = -1/n.
    n1 = 1 + n and kc2 = 1 - k^2 may be passed exactly (see elliptic_K).
    """
    n = complex(n)
    n1 = 1 + n if n1 is None else complex(n1)
    kc2 = 1 - complex(k) ** 2 if kc2 is None else complex(kc2)
    if kc2.imag == 0 and kc2.real <= 0:
        raise DomainError("elliptic_Pi: k^2 >= 1 puts a branch point on the path")
    if n.imag == 0 and n1.real <= 0:
        raise DomainError("elliptic_Pi: pole on the integration path (n real <= -1)")

    def g(t):
        c2, s2 = np.cos(t) ** 2, np.sin(t) ** 2
        return 1 / ((c2 + n1 * s2) * np.sqrt(c2 + kc2 * s2 + 0j))
    val = _theta_integral(g)
    if sheet:
        val -= sheet * _pi_residue(n, 1 - kc2)
    return val


def _sheet(n: complex, regime: Regime) -> int:
    # Above u_i the first characteristic leaves 0 into the lower half plane and
    # re-enters the upper one through (-inf, -1); from then on it lives on the
    # continued sheet.  The second characteristic never reaches the cut.
    return 1 if (regime is Regime.ABOVE_INDEPENDENT and n.imag > 0) else 0


# --------------------------------------------------------------------------
# closed forms

def _coefficient_C(x, u, r, s):
    rs = r * s
    return (np.sqrt(rs + 0j) * (1 + u * u * x * x)
            / (math.pi * r * (rs - 1) * u * u * (-1 + x) * (1 + x) * (-1 + u * u * x * x)))


def _elliptic_combo(x, u, r, s, kcoef, picoef, pref, regime):
    rs1 = r * s - 1
    k = (r - s) / rs1
    n1, n2 = r * k, k / r
    # exact complements: 1 - k^2, 1 + n1, 1 + n2 all carry the factor r^2 - 1
    kc2 = (r * r - 1) * (s * s - 1) / rs1 ** 2
    p1, p2 = (r * r - 1) / rs1, s * (r * r - 1) / (r * rs1)
    pis = (elliptic_Pi(n1, k, _sheet(n1, regime), n1=p1, kc2=kc2)
           - elliptic_Pi(n2, k, n1=p2, kc2=kc2))
    return pref * (kcoef * elliptic_K(k, kc2) + picoef * pis)


def f_closed(x: float, u: float, r: complex, s: complex, regime: Regime = Regime.BELOW_CRITICAL) -> complex:
    """The elliptic function f(x, u, r) of the b-edge expectation (r != 1)."""
    C = _coefficient_C(x, u, r, s)
    kcoef = u * u * (-1 + x * x) + r * r * u * u * (-1 + x * x) + r * (1 + u ** 4 * x ** 4 - 2 * u * u * (1 + 2 * x * x))
    picoef = (-1 + r * r) * u * u * (-1 + x * x)
    return _elliptic_combo(x, u, r, s, kcoef, picoef, C, regime)


def g_closed(x: float, u: float, r: complex, s: complex, regime: Regime = Regime.BELOW_CRITICAL) -> complex:
    """The elliptic function g(x, u, r) of the vacant-a expectation (r != 1)."""
    D = _coefficient_C(x, u, r, s) * (-1 + u * u * x * x) / (1 + u * u * x * x)
    kcoef = u * u * (1 + x * x) + r * r * u * u * (1 + x * x) - r * (1 - 2 * u * u + u ** 4 * x ** 4)
    picoef = (-1 + r * r) * u * u * (1 + x * x)
    return _elliptic_combo(x, u, r, s, kcoef, picoef, D, regime)


def _log_term(x: float) -> float:
    # (1/(pi i)) log((x+i)/(x-i)) with the principal log, = 1 - 2 arctan(x)/pi
    return 1 - 2 * math.atan(x) / math.pi


def f_critical(x: float) -> float:
    """f(x, u_c, 1); the bracket is 1 - (1/(pi i)) log((x+i)/(x-i)) = 2 arctan(x)/pi."""
    q = math.sqrt(1 + x * x)
    pref = (-1 - x * x + q) * (-2 - x * x + 2 * q) / (-1 + q) ** 3
    return pref * (1 - _log_term(x))


def g_critical(x: float) -> float:
    return (1 + x * x) / (1 - x * x) * (1 - _log_term(x))


def _branch_root(params: ModelParams):
    """(rho, s, regime): rho is the root of the middle pair lying outside the unit circle."""
    prof = spectral_roots(params)
    if prof.regime is Regime.CRITICAL:
        return 1.0, prof.s, prof.regime
    rho = prof.r if prof.regime is Regime.BELOW_CRITICAL else 1 / prof.r
    return rho, prof.s, prof.regime


def _real(v: complex, what: str) -> float:
    v = complex(v)
    if not np.isfinite(v) or abs(v.imag) > IMAG_TOL * max(1.0, abs(v.real)):
        raise BranchFailure(f"{what}: closed form evaluated to {v!r}")
    return v.real


def b_edges_closed(params: ModelParams) -> float:
    x, u = params.x, params.u
    add = 2 * u * u * x * x / (-1 + u * u * x * x)
    rho, s, regime = _branch_root(params)
    if regime is Regime.CRITICAL:
        return f_critical(x) + add
    return _real(-f_closed(x, u, rho, s, regime), "E[N_b]") + add


def vacant_a_closed(params: ModelParams) -> float:
    x, u = params.x, params.u
    sub = x * x / (1 - x * x)
    rho, s, regime = _branch_root(params)
    if regime is Regime.CRITICAL:
        return g_critical(x) - sub
    return _real(-g_closed(x, u, rho, s, regime), "E[N_ac]") - sub


# --------------------------------------------------------------------------
# quadrature routes

def b_edges_quadrature(params: ModelParams, tol=QUAD_TOL, route: str = "residue") -> float:
    """(b/2) (2 pi i)^-2 int d_b P / P dz/z dw/w."""
    params.require_thermo()
    a, b = params.a, params.b
    if route == "torus":
        val = torus_integral(lambda z, w: char_poly_db(params, z, w) / char_poly(params, z, w),
                             tol=tol)
        return float(b / 2 * np.real(val))
    if route != "residue":
        raise DomainError(f"unknown route {route!r}")

    def fz(z, yp2):
        al, be, p1 = w_roots(params, z, yp2)
        # d_b P as a Laurent polynomial in w: q0 + q1 w + q_{-1} / w
        q0 = 4 * b + 4 * a * a * b ** 3 + a * (1 - 3 * b * b) * (z + 1 / z)
        q1 = a * (1 - 3 * b * b) + 2 * b * (1 - a * a) / z
        qm1 = a * (1 - 3 * b * b) + 2 * b * (1 - a * a) * z
        terms = (q0 * inv_p_coefficient(al, be, p1, 0), q1 * inv_p_coefficient(al, be, p1, -1),
                 qm1 * inv_p_coefficient(al, be, p1, 1))
        v = sum(terms)
        return v, 4 * np.finfo(float).eps * sum(np.abs(t) for t in terms)

    return float(b / 2 * np.real(_phi_integral(fz, tol, params)))


def vacant_a_quadrature(params: ModelParams, tol=QUAD_TOL) -> float:
    """1 - x K^{-1}(v3, v4): one minus the a-edge probability."""
    params.require_thermo()
    return 1 - params.a * float(np.real(green(params, 4, 3, 0, 0, tol)))


# --------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class ExpectationReport:
    value_quadrature: float
    value_closed_form: Optional[float]
    regime: Regime
    discrepancy: float
    note: str = ""

    @property
    def value(self) -> float:
        return self.value_quadrature

    def agrees(self, tol=AGREE_TOL) -> bool:
        return self.value_closed_form is not None and self.discrepancy <= tol


def _report(quad: float, closed_fn, params: ModelParams) -> ExpectationReport:
    regime = spectral_roots(params).regime
    try:
        closed = closed_fn(params)
    except (FisherDimerError, FloatingPointError, ZeroDivisionError) as exc:
        return ExpectationReport(quad, None, regime, math.nan, f"closed form failed: {exc}")
    return ExpectationReport(quad, closed, regime, abs(closed - quad))


def expected_b_edges(params: ModelParams, tol=QUAD_TOL, strict: bool = False) -> ExpectationReport:
    """E[N_b]; strict=True raises BranchFailure when the closed form fails."""
    rep = _report(b_edges_quadrature(params, tol), b_edges_closed, params)
    if strict and rep.value_closed_form is None:
        raise BranchFailure(rep.note)
    return rep


def expected_vacant_a(params: ModelParams, tol=QUAD_TOL, strict: bool = False) -> ExpectationReport:
    rep = _report(vacant_a_quadrature(params, tol), vacant_a_closed, params)
    if strict and rep.value_closed_form is None:
        raise BranchFailure(rep.note)
    return rep


def creations_from(nb: ExpectationReport, nac: ExpectationReport) -> ExpectationReport:
    quad = 0.5 * (nb.value_quadrature - nac.value_quadrature)
    if nb.value_closed_form is None or nac.value_closed_form is None:
        return ExpectationReport(quad, None, nb.regime, math.nan, nb.note or nac.note)
    closed = 0.5 * (nb.value_closed_form - nac.value_closed_form)
    return ExpectationReport(quad, closed, nb.regime, abs(closed - quad))


def expected_creations(params: ModelParams, tol=QUAD_TOL) -> ExpectationReport:
    """E[N_X] = (E[N_b] - E[N_ac]) / 2, each route separately."""
    return creations_from(expected_b_edges(params, tol), expected_vacant_a(params, tol))


# --------------------------------------------------------------------------
# limits and scans

def limiting_particle_density(u: float) -> float:
    """Zero-temperature density of particles per row site."""
    if not 0 < u <= 1:
        raise DomainError("need u in (0, 1]")
    if u <= 0.5:
        return 0.0
    return 2 - 2 / math.pi * math.acos(-1 / (2 * u))


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return f"{v:.12g}"


@dataclass
class ScanRow:
    x: float
    u: float
    regime: str
    E_Nb: float
    E_Nac: float
    E_NX: float
    Nb_closed: Optional[float]
    Nac_closed: Optional[float]
    discrepancy_max: float
    error: str = ""


@dataclass
class PhaseScan:
    rows: list = field(default_factory=list)

    HEADER = ("x", "u", "regime", "E_Nb", "E_Nac", "E_NX", "Nb_closed", "Nac_closed",
              "discrepancy_max")

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        for r in self.rows:
            w.writerow([_fmt(r.x), _fmt(r.u), r.regime, _fmt(r.E_Nb), _fmt(r.E_Nac), _fmt(r.E_NX),
                        _fmt(r.Nb_closed), _fmt(r.Nac_closed), _fmt(r.discrepancy_max)])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text

    @property
    def failures(self):
        return [r for r in self.rows if r.error]


def phase_scan(x_grid: Iterable[float], u_grid: Iterable[float], tol=QUAD_TOL) -> PhaseScan:
    """Rows in input order (x outer, u inner); a failing row is recorded and the scan continues."""
    out = PhaseScan()
    u_grid = list(u_grid)
    for x in x_grid:
        for u in u_grid:
            try:
                p = ModelParams(float(x), float(u))
                nb, nac = expected_b_edges(p, tol), expected_vacant_a(p, tol)
                nx = creations_from(nb, nac)
                disc = max(nb.discrepancy, nac.discrepancy)
                out.rows.append(ScanRow(p.x, p.u, nb.regime.value, nb.value, nac.value, nx.value,
                                        nb.value_closed_form, nac.value_closed_form, disc))
            except (FisherDimerError, ValueError, FloatingPointError) as exc:
                out.rows.append(ScanRow(float(x), float(u), "error", math.nan, math.nan, math.nan,
                                        None, None, math.nan, str(exc)))
    return out


def regime_crossings(scan: PhaseScan):
    """Consecutive rows at equal x whose regime labels differ."""
    pairs = []
    for a, b in zip(scan.rows, scan.rows[1:]):
        if a.x == b.x and a.regime != b.regime:
            pairs.append((a, b))
    return pairs
