"""Pfaffians and the local-statistics layer built on inverse Kasteleyn entries.

Edge probabilities use  P(e_1..e_m) = prod K(u_{2k-1}, u_{2k}) * Pf[G(u_q, u_p)]_{p,q}
with G(v_i(d), v_j(d')) = green(i, j, d' - d), the coefficient of the inverse symbol.
Particle sites on one row are integers k, meaning the a-edge (v3, v4) of domain (k, -k).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, NotAntisymmetric, OddDimension, OutOfRange
from .lattice import ModelParams, critical_anisotropy, kasteleyn_weight
from .quadrature import green_many

PROB_SLACK = 1e-9
ANTISYM_TOL = 1e-12


# --------------------------------------------------------------------------
# Pfaffian engine

def _check(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError("Pfaffian needs a square matrix")
    if A.shape[0] % 2:
        raise OddDimension(f"dimension {A.shape[0]} is odd")
    scale = max(np.abs(A).max(), 1.0) if A.size else 1.0
    if A.size and np.abs(A + A.T).max() > ANTISYM_TOL * scale:
        raise NotAntisymmetric("A + A^T is not zero")
    return A


def pfaffian(A) -> complex | float:
    """Pf(A) by skew-symmetric Gaussian elimination (Parlett-Reid) with pivoting.

    At step k the largest |A[j, k]|, j > k, is swapped into row/column k+1
    (lowest index on ties); the Schur complement update keeps antisymmetry.
    """
    A = _check(A)
    n = A.shape[0]
    dtype = np.result_type(A.dtype, np.float64)
    A = np.array(A, dtype=dtype)
    pf = dtype.type(1.0)
    for k in range(0, n - 1, 2):
        kp = k + 1 + int(np.argmax(np.abs(A[k + 1:, k])))
        if kp != k + 1:
            A[[k + 1, kp], :] = A[[kp, k + 1], :]
            A[:, [k + 1, kp]] = A[:, [kp, k + 1]]
            pf = -pf
        piv = A[k, k + 1]
        if piv == 0:
            return dtype.type(0.0)
        pf = pf * piv
        if k + 2 < n:
            tau = A[k, k + 2:] / piv
            col = A[k + 2:, k + 1]
            A[k + 2:, k + 2:] += np.outer(tau, col) - np.outer(col, tau)
    return pf


def pfaffian_recursive(A) -> complex | float:
    """Expansion along the first row; exponential cost, a test oracle for small dims."""
    A = _check(A)

    def rec(M):
        n = M.shape[0]
        if n == 0:
            return 1.0
        total = 0.0
        for j in range(1, n):
            if M[0, j] == 0:
                continue
            keep = [t for t in range(n) if t not in (0, j)]
            sign = 1.0 if j % 2 == 1 else -1.0
            total = total + sign * M[0, j] * rec(M[np.ix_(keep, keep)])
        return total

    return rec(A)


# --------------------------------------------------------------------------
# edge sets

@dataclass(frozen=True)
class Vertex:
    label: int
    m: int = 0
    n: int = 0

    @property
    def domain(self):
        return (self.m, self.n)


@dataclass(frozen=True)
class Edge:
    u: Vertex
    v: Vertex

    def weight(self, params: ModelParams) -> float:
        return kasteleyn_weight(params, self.u.label, self.v.label,
                                (self.v.m - self.u.m, self.v.n - self.u.n))


def a_edge(k: int) -> Edge:
    """Vertical a-edge (v3, v4) at row position k, i.e. domain (k, -k)."""
    return Edge(Vertex(3, k, -k), Vertex(4, k, -k))


def b_edge_up_right(m: int = 0, n: int = 0) -> Edge:
    return Edge(Vertex(6, m, n), Vertex(1, m + 1, n))


def b_edge_up_left(m: int = 0, n: int = 0) -> Edge:
    return Edge(Vertex(5, m, n), Vertex(2, m, n + 1))


def green_matrix(params: ModelParams, vertices: Sequence[Vertex], tol=1e-10) -> np.ndarray:
    """Antisymmetric M[p, q] = G(u_q, u_p) over the listed vertices."""
    k = len(vertices)
    need = {}
    for p in range(k):
        for q in range(p + 1, k):
            up, uq = vertices[p], vertices[q]
            key = (uq.label, up.label, up.m - uq.m, up.n - uq.n)
            need.setdefault(key, None)
    keys = list(need)
    vals = green_many(params, keys, tol=tol).real if keys else []
    table = dict(zip(keys, vals))
    M = np.zeros((k, k))
    for p in range(k):
        for q in range(p + 1, k):
            up, uq = vertices[p], vertices[q]
            M[p, q] = table[(uq.label, up.label, up.m - uq.m, up.n - uq.n)]
            M[q, p] = -M[p, q]
    return M


def _check_prob(p: float) -> float:
    if not -PROB_SLACK <= p <= 1 + PROB_SLACK:
        raise OutOfRange(f"probability {p:.6g} outside [0, 1]")
    return float(p)


def edge_set_probability(params: ModelParams, edges: Sequence[Edge], tol=1e-10) -> float:
    verts = [v for e in edges for v in (e.u, e.v)]
    if len(set(verts)) != len(verts):
        raise DomainError("edge endpoints must be distinct vertices")
    if not edges:
        return 1.0
    weight = 1.0
    for e in edges:
        w = e.weight(params)
        if w == 0:
            raise DomainError(f"{e} is not a lattice edge")
        weight *= w
    return _check_prob(weight * pfaffian(green_matrix(params, verts, tol)))


# --------------------------------------------------------------------------
# particles on a row (inclusion-exclusion over vacant a-edges)

def _site_matrix(params: ModelParams, sites: Sequence[int], tol=1e-10) -> np.ndarray:
    """K_n with diagonal blocks v = P(a-edge covered) and scaled inverse entries."""
    verts = [v for k in sites for v in (a_edge(k).u, a_edge(k).v)]
    return params.a * green_matrix(params, verts, tol)


def particle_probability(params: ModelParams, positions: Sequence[int], present: Sequence[bool],
                         tol=1e-10) -> float:
    """P(particle at positions[i] iff present[i]) for sites on one row."""
    positions = [int(k) for k in positions]
    present = [bool(p) for p in present]
    if len(positions) != len(present):
        raise DomainError("positions and present must have equal length")
    if len(set(positions)) != len(positions):
        raise DomainError("positions must be distinct")
    if not positions:
        return 1.0
    K = _site_matrix(params, positions, tol)
    for idx, here in enumerate(present):
        if here:
            K[2 * idx, 2 * idx + 1] -= 1.0
            K[2 * idx + 1, 2 * idx] += 1.0
    sign = -1.0 if sum(present) % 2 else 1.0
    return _check_prob(sign * pfaffian(K))


def _require_critical(params: ModelParams):
    uc = critical_anisotropy(params.x)
    if abs(params.u - uc) > 1e-12 * uc:
        raise DomainError(f"operation is defined at u = u_c = {uc!r}")


def pair_covariance(params: ModelParams, n: int, tol=1e-10) -> float:
    """P(X(0), X(n)) - P(X(0)) P(X(n)) at u = u_c; n = 0 gives the variance p(1-p)."""
    _require_critical(params)
    n = abs(int(n))
    p1 = particle_probability(params, [0], [True], tol)
    if n == 0:
        return p1 - p1 * p1
    return particle_probability(params, [0, n], [True, True], tol) - p1 * p1


@dataclass(frozen=True)
class StepProbs:
    together: float
    apart: float
    both_left: float
    both_right: float

    def total(self) -> float:
        return self.together + self.apart + self.both_left + self.both_right


def _move_edge(k: int, right: bool) -> Edge:
    # the lower-left vertex v4 of the upper triangle pairs with v5 (then v6 leaves
    # up-right) or with v6 (then v5 leaves up-left)
    return Edge(Vertex(4, k, -k), Vertex(5 if right else 6, k, -k))


def conditional_step_probs(params: ModelParams, n: int, tol=1e-10) -> StepProbs:
    """One-row step law of particles at 0 and n, given both are present, at u = u_c."""
    _require_critical(params)
    n = int(n)
    if n < 2:
        raise DomainError("need separation n >= 2")
    joint = particle_probability(params, [0, n], [True, True], tol)

    def move(r0, rn):
        return edge_set_probability(params, [_move_edge(0, r0), _move_edge(n, rn)], tol) / joint

    return StepProbs(together=move(True, False), apart=move(False, True),
                     both_left=move(False, False), both_right=move(True, True))
