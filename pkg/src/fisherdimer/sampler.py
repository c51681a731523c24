"""Monte Carlo for the particle picture: Glauber dynamics on spins, the noisy voter
construction at u = u_i, trace extraction, censuses and batch-means estimators.

Geometry.  Spins sit on the dodecagon faces, stored as s[t, k] on an L x L torus
(L even).  Face (t, k) has horizontal neighbours (t, k +- 1) across a-edges and
diagonal neighbours (t +- 1, k - 1 + p), (t +- 1, k + p), p = t mod 2, across
b-edges.  The a-edge (t, k) separates faces k and k+1 of row t; the face above
it is (t+1, k+p) and the face below it is (t-1, k+p).  An edge carries a dimer
iff the faces on its two sides agree, so the Gibbs weight of a spin field is
a^(# agreeing a-bonds) * b^(# agreeing b-bonds).

Randomness.  Every uniform is a pure function of (seed, sweep, site): the
splitmix64 finalizer applied to a mixed 64-bit counter, top 53 bits.  Traces are
therefore reproducible bit for bit regardless of how chains are scheduled.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numba
import numpy as np

from .errors import ChainTooShort, DomainError, InconsistentLocalState
from .lattice import ModelParams

# --------------------------------------------------------------------------
# counter-based RNG

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SWEEP_MUL = np.uint64(0xD1342543DE82EF95)
_INV53 = 1.0 / 9007199254740992.0


@numba.njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def _uniform(seed, stream, site):
    z = _mix64(seed + _GOLDEN)
    z = _mix64(z ^ (np.uint64(stream) * _SWEEP_MUL))
    z = _mix64(z + np.uint64(site) * _GOLDEN)
    return float(z >> np.uint64(11)) * _INV53


def counter_uniforms(seed: int, stream: int, sites) -> np.ndarray:
    """Uniforms in [0, 1) addressed by (seed, stream, site)."""
    sites = np.asarray(sites, dtype=np.uint64)
    out = np.empty(sites.shape)
    _fill_uniforms(np.uint64(seed), np.uint64(stream), sites.ravel(), out.ravel())
    return out


@numba.njit(cache=True)
def _fill_uniforms(seed, stream, sites, out):
    for i in range(sites.size):
        out[i] = _uniform(seed, stream, sites[i])


def _seed64(seed) -> np.uint64:
    return np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)


# --------------------------------------------------------------------------
# spins and Glauber dynamics

@dataclass(frozen=True)
class SpinField:
    L: int
    spins: np.ndarray
    rng_seed: int = 0
    sweep: int = 0

    def __post_init__(self):
        if self.L % 2 or self.L < 2:
            raise DomainError("torus side L must be even and >= 2")
        if self.spins.shape != (self.L, self.L):
            raise DomainError("spins must have shape (L, L)")


def ground_state(L: int) -> np.ndarray:
    """Rows uniform, alternating in t: every a-edge covered, no particles."""
    return np.where(np.arange(L)[:, None] % 2 == 0, 1, -1).astype(np.int8) * np.ones((1, L), np.int8)


def heat_bath_table(params: ModelParams) -> np.ndarray:
    """P(s = +1 | h_a, h_b), h_a / h_b = number of + among horizontal / diagonal neighbours."""
    if not params.b < 1 or not params.a < 1:
        raise DomainError("heat-bath weights need a < 1 and b < 1 (anti-ferromagnetic couplings)")
    la, lb = math.log(params.a), math.log(params.b)
    tab = np.empty((3, 5))
    for ha in range(3):
        for hb in range(5):
            d = la * (2 - 2 * ha) + lb * (4 - 2 * hb)  # log w(-) - log w(+)
            tab[ha, hb] = 1 / (1 + math.exp(d))
    return tab


@numba.njit(cache=True)
def _sweeps(s, table, seed, sweep0, nsweeps):
    L, W = s.shape
    for sw in range(nsweeps):
        stream = sweep0 + np.uint64(sw)
        for t in range(L):
            p = t % 2
            up, dn = (t + 1) % L, (t - 1) % L
            for k in range(W):
                ha = (s[t, (k - 1) % W] > 0) + (s[t, (k + 1) % W] > 0)
                kl, kr = (k - 1 + p) % W, (k + p) % W
                hb = (s[up, kl] > 0) + (s[up, kr] > 0) + (s[dn, kl] > 0) + (s[dn, kr] > 0)
                u = _uniform(seed, stream, np.uint64(t * W + k))
                s[t, k] = 1 if u < table[ha, hb] else -1


class GlauberChain:
    """Heat-bath single-site dynamics with typewriter sweeps (rows t, then sites k)."""

    def __init__(self, params: ModelParams, L: int, seed: int = 0, init: str = "ground"):
        params.require_thermo()
        if L % 2 or L < 2:
            raise DomainError("torus side L must be even and >= 2")
        self.params, self.L, self.seed = params, int(L), int(seed)
        self.table = heat_bath_table(params)
        if init == "ground":
            self.spins = ground_state(L)
        elif init == "random":
            u = counter_uniforms(self.seed, 2 ** 63, np.arange(L * L)).reshape(L, L)
            self.spins = np.where(u < 0.5, 1, -1).astype(np.int8)
        else:
            raise DomainError(f"unknown init {init!r}")
        self.sweep_index = 0

    def run(self, nsweeps: int) -> "GlauberChain":
        _sweeps(self.spins, self.table, _seed64(self.seed), np.uint64(self.sweep_index), int(nsweeps))
        self.sweep_index += int(nsweeps)
        return self

    def field(self) -> SpinField:
        return SpinField(self.L, self.spins.copy(), self.seed, self.sweep_index)


def glauber_ising(params: ModelParams, L: int, sweeps: int, burn_in: int = 0, seed: int = 0,
                  thin: int = 1, init: str = "ground") -> Iterator[SpinField]:
    """Yield the spin field after every `thin` sweeps past burn-in (sweeps counts all sweeps)."""
    if not sweeps > burn_in >= 0:
        raise DomainError("need sweeps > burn_in >= 0")
    chain = GlauberChain(params, L, seed, init).run(burn_in)
    done = burn_in
    while done < sweeps:
        step = min(thin, sweeps - done)
        chain.run(step)
        done += step
        yield chain.field()


# --------------------------------------------------------------------------
# dimers and particles

@dataclass(frozen=True)
class DimerConfig:
    """Edge occupancies per domain (t, k).

    a: the a-edge; b_left / b_right: the up-left / up-right b-edges leaving the
    upper triangle; upper / lower: for each triangle, which external edge is the
    only covered one (0 = a, 1 = left, 2 = right) or 3 when all three are
    covered; the internal edge then covers the remaining two vertices.
    """
    a: np.ndarray
    b_left: np.ndarray
    b_right: np.ndarray
    upper: np.ndarray
    lower: np.ndarray

    @property
    def shape(self):
        return self.a.shape


def _shift_cols(arr, shift_even, shift_odd):
    # out[t, k] = arr[t, k + shift(t)] with shift depending on the parity of t
    out = np.empty_like(arr)
    out[0::2] = np.roll(arr[0::2], -shift_even, axis=1)
    out[1::2] = np.roll(arr[1::2], -shift_odd, axis=1)
    return out


def _above(s):
    # face above a-edge (t, k): s[t+1, k + p]
    up = np.roll(s, -1, axis=0)
    return _shift_cols(up, 0, 1)


def _below(s):
    dn = np.roll(s, 1, axis=0)
    return _shift_cols(dn, 0, 1)


def _completion(ext: np.ndarray) -> np.ndarray:
    count = ext.sum(axis=0)
    if np.any((count != 1) & (count != 3)):
        raise InconsistentLocalState("a triangle has 0 or 2 covered external edges")
    return np.where(count == 3, 3, np.argmax(ext, axis=0)).astype(np.int8)


def spins_to_dimers(field: SpinField) -> DimerConfig:
    s = field.spins
    right = np.roll(s, -1, axis=1)
    top, bot = _above(s), _below(s)
    a = s == right
    bl, br = s == top, right == top
    dl, dr = s == bot, right == bot  # down b-edges of the lower triangle
    upper = _completion(np.stack([a, bl, br]))
    lower = _completion(np.stack([a, dl, dr]))
    return DimerConfig(a, bl, br, upper, lower)


def lower_b_edges(cfg: DimerConfig):
    """(down-left, down-right) b-edges of each lower triangle, read from row t-1."""
    bl_prev = np.roll(cfg.b_left, 1, axis=0)
    br_prev = np.roll(cfg.b_right, 1, axis=0)
    # down-left of (t, k) is the up-right edge of (t-1, k - p'), p' = (t-1) mod 2
    dl = _shift_cols(br_prev, -1, 0)
    dr = _shift_cols(bl_prev, 0, 1)
    return dl, dr


def matching_defects(cfg: DimerConfig) -> int:
    """Number of vertices not covered exactly once (0 for a perfect matching)."""
    dl, dr = lower_b_edges(cfg)
    bad = 0
    for ext, code in (((cfg.a, cfg.b_left, cfg.b_right), cfg.upper), ((cfg.a, dl, dr), cfg.lower)):
        for v in range(3):
            internal = (code != 3) & (code != v)  # vertex v lies on the internal edge
            cover = ext[v].astype(int) + internal.astype(int)
            bad += int(np.sum(cover != 1))
    return bad


@dataclass
class ParticleTrace:
    """occupancy[t, k]: particle at a-edge (t, k); b_left/b_right as in DimerConfig."""
    occupancy: np.ndarray
    b_left: np.ndarray
    b_right: np.ndarray
    creations: np.ndarray      # (n, 2) array of (t, k)
    annihilations: np.ndarray  # (n, 2) array of (t, k)
    periodic: bool = True

    @property
    def rows(self):
        return self.occupancy.shape[0]

    @property
    def width(self):
        return self.occupancy.shape[1]

    def parity_ok(self) -> bool:
        """Row particle counts change only by creations/annihilations; totals balance on a torus."""
        n = self.occupancy.sum(axis=1)
        if np.any(n % 2):
            return False
        cre = np.bincount(self.creations[:, 0], minlength=self.rows) if len(self.creations) else np.zeros(self.rows, int)
        ann = np.bincount(self.annihilations[:, 0], minlength=self.rows) if len(self.annihilations) else np.zeros(self.rows, int)
        last = self.rows if self.periodic else self.rows - 1
        for t in range(last):
            t1 = (t + 1) % self.rows
            if n[t1] != n[t] + 2 * cre[t] - 2 * ann[t1]:
                return False
        return not self.periodic or len(self.creations) == len(self.annihilations)


def dimers_to_particles(cfg: DimerConfig) -> ParticleTrace:
    return ParticleTrace(~cfg.a, cfg.b_left.copy(), cfg.b_right.copy(),
                         np.argwhere(cfg.upper == 3), np.argwhere(cfg.lower == 3))


def spins_to_particles(field: SpinField) -> ParticleTrace:
    return dimers_to_particles(spins_to_dimers(field))


def local_densities(field: SpinField) -> dict:
    """Per-domain densities of particles, b-edges (each orientation) and creations."""
    s = field.spins
    right = np.roll(s, -1, axis=1)
    top = _above(s)
    a = s == right
    bl, br = s == top, right == top
    return {"particle": float(np.mean(~a)), "b_left": float(np.mean(bl)),
            "b_right": float(np.mean(br)), "creation": float(np.mean(a & bl & br))}


def pair_correlations(occupancy: np.ndarray, separations: Sequence[int]) -> np.ndarray:
    """Same-row joint densities P(particle at k and at k + n), averaged over rows and sites."""
    occ = np.asarray(occupancy, dtype=bool)
    return np.array([float(np.mean(occ & np.roll(occ, -int(n), axis=1))) for n in separations])


# --------------------------------------------------------------------------
# noisy voter construction at u = u_i

def voter_flip_probability(x: float) -> float:
    """Probability that a b-edge pair is created above a covered a-edge."""
    return (1 - math.sqrt(1 - x * x)) / 2


def noisy_voter_sampler(x: float, L: int, rows: int, seed: int = 0):
    """Colour field c[t, k] and its ParticleTrace for the independent point u = u_i.

    Row 0: colour boundaries iid Bernoulli(x/(1+x)) (conditioned on an even
    count so the ring closes).  The face above a-edge (t, k) copies one of its
    two lower faces with probability 1/2 each when they differ; when they agree
    it keeps that colour except with probability q it flips, which is a
    creation.  Colours relate to spins by s[t, k] = (-1)^t c[t, k].
    """
    if not 0 < x < 1:
        raise DomainError("need 0 < x < 1")
    if L % 2 or L < 2 or rows < 1:
        raise DomainError("need even L >= 2 and rows >= 1")
    rho, q = x / (1 + x), voter_flip_probability(x)
    seed = int(seed)
    attempt = 0
    while True:
        walls = counter_uniforms(seed, 2 ** 62 + attempt, np.arange(L)) < rho
        if walls.sum() % 2 == 0:
            break
        attempt += 1
    c = np.empty((rows, L), dtype=np.int8)
    c[0] = np.where(np.cumsum(np.concatenate([[0], walls[:-1]])) % 2 == 0, 1, -1)
    for t in range(rows - 1):
        left, right = c[t], np.roll(c[t], -1)
        u = counter_uniforms(seed, t, np.arange(L))
        new = np.where(left == right, np.where(u < q, -left, left), np.where(u < 0.5, left, right))
        # the face above a-edge (t, k) is (t+1, k + p)
        c[t + 1] = np.roll(new, t % 2)
    stagger = np.where(np.arange(rows)[:, None] % 2 == 0, 1, -1).astype(np.int8)
    spins = c * stagger
    trace = _strip_trace(spins)
    return c, trace


def _strip_trace(s: np.ndarray) -> ParticleTrace:
    """ParticleTrace of a non-periodic strip of rows; the last row has no faces above."""
    rows = s.shape[0]
    right = np.roll(s, -1, axis=1)
    a = s == right
    bl = np.zeros_like(a)
    br = np.zeros_like(a)
    if rows > 1:
        top = np.empty_like(s[:-1])
        for t in range(rows - 1):
            top[t] = np.roll(s[t + 1], -(t % 2))
        bl[:-1], br[:-1] = s[:-1] == top, right[:-1] == top
    cre = np.argwhere(a[:-1] & bl[:-1] & br[:-1])
    ann = []
    for t in range(1, rows):
        bot = np.roll(s[t - 1], -(t % 2))
        ann.extend((t, k) for k in np.flatnonzero(a[t] & (s[t] == bot) & (right[t] == bot)))
    return ParticleTrace(~a, bl, br, cre, np.array(ann, dtype=int).reshape(-1, 2), periodic=False)


# --------------------------------------------------------------------------
# estimators

@dataclass(frozen=True)
class EstimatorReport:
    mean: float
    se: float
    ess: float
    n: int
    n_batches: int
    diagnostics: dict = field(default_factory=dict)

    def z(self, target: float, extra_se: float = 0.0) -> float:
        s = math.hypot(self.se, extra_se)
        return math.inf if s == 0 and self.mean != target else (0.0 if s == 0 else (self.mean - target) / s)


MIN_BATCHES = 20


def estimate(chain, observable: Optional[Callable] = None, burn_in: int = 0,
             n_batches: int = MIN_BATCHES) -> EstimatorReport:
    """Batch-means mean and standard error of observable over chain[burn_in:]."""
    if n_batches < MIN_BATCHES:
        raise DomainError(f"need at least {MIN_BATCHES} batches")
    items = list(chain)[burn_in:] if observable is not None else np.asarray(chain, dtype=float)[burn_in:]
    vals = np.array([observable(c) for c in items], dtype=float) if observable is not None else items
    n = vals.size
    if n < n_batches:
        raise ChainTooShort(f"{n} samples after burn-in; need >= {n_batches}")
    size = n // n_batches
    used = vals[: size * n_batches]
    means = used.reshape(n_batches, size).mean(axis=1)
    mean = float(used.mean())
    se = float(means.std(ddof=1) / math.sqrt(n_batches))
    var = float(used.var(ddof=1)) if n > 1 else 0.0
    ess = float(n) if se == 0 else min(float(n), var / se ** 2)
    half = n // 2
    diag = {"batch_size": size, "first_half": float(vals[:half].mean()),
            "second_half": float(vals[half:].mean()), "iid_se": math.sqrt(var / n)}
    return EstimatorReport(mean, se, ess, n, n_batches, diag)


def merge_reports(reports: Sequence[EstimatorReport]) -> EstimatorReport:
    """Inverse-variance-free pooling of independent chains (weights = sample counts)."""
    n = sum(r.n for r in reports)
    mean = sum(r.mean * r.n for r in reports) / n
    se = math.sqrt(sum((r.n / n) ** 2 * r.se ** 2 for r in reports))
    return EstimatorReport(mean, se, sum(r.ess for r in reports), n,
                           sum(r.n_batches for r in reports), {"chains": len(reports)})


@dataclass
class ChainSeries:
    """Per-sample local densities from one Glauber run."""
    params: ModelParams
    L: int
    seed: int
    burn_in: int
    series: dict

    def report(self, name: str) -> EstimatorReport:
        return estimate(self.series[name])


def run_densities(params: ModelParams, L: int, samples: int, burn_in: Optional[int] = None,
                  seed: int = 0, thin: int = 1, auto_burn_in: bool = True) -> ChainSeries:
    """Local densities after burn-in; burn-in defaults to 10 L and is doubled (up to
    three times) while the particle density's half-chain means differ by > 2 SE."""
    burn = 10 * L if burn_in is None else int(burn_in)
    chain = GlauberChain(params, L, seed).run(burn)
    names = ("particle", "b_left", "b_right", "creation")
    for attempt in range(4):
        series = {k: np.empty(samples) for k in names}
        for i in range(samples):
            chain.run(thin)
            d = local_densities(chain.field())
            for k in names:
                series[k][i] = d[k]
        rep = estimate(series["particle"])
        gap = abs(rep.diagnostics["first_half"] - rep.diagnostics["second_half"])
        if not auto_burn_in or gap <= 2 * max(rep.se, 1e-300) * math.sqrt(2) or attempt == 3:
            break
        chain.run(burn)
        burn *= 2
    return ChainSeries(params, L, seed, burn, series)


# --------------------------------------------------------------------------
# loops and creations

@dataclass(frozen=True)
class CensusRecord:
    kind: str          # "loop", "winding" or "creation"
    x0: float          # horizontal centre in site units
    t0: float          # vertical centre in rows
    bbox_w: float
    bbox_h: float
    lifetime: float


@dataclass
class Census:
    records: list
    rows: int
    width: int

    def of_kind(self, kind):
        return [r for r in self.records if r.kind == kind]

    @property
    def loops(self):
        return self.of_kind("loop")

    @property
    def winding(self):
        return self.of_kind("winding")

    @property
    def creations(self):
        return self.of_kind("creation")

    def size_histogram(self) -> dict:
        hist = {}
        for r in self.loops:
            hist[int(r.lifetime)] = hist.get(int(r.lifetime), 0) + 1
        return dict(sorted(hist.items()))

    def eps_creations(self, eps: float, x: float):
        """Creations whose shorter emitted path lives >= eps / x^2 rows."""
        need = eps / (x * x)
        return [r for r in self.creations if r.lifetime >= need]

    HEADER = ("kind", "x0", "t0", "bbox_w", "bbox_h", "lifetime")

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.HEADER) + "\n")
        for r in self.records:
            buf.write(f"{r.kind},{r.x0:.12g},{r.t0:.12g},{r.bbox_w:.12g},{r.bbox_h:.12g},{r.lifetime:.12g}\n")
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def _position(t, k):
    # horizontal a-edge coordinate in half-site units
    return 2 * k + (t % 2) + 1


def _step_targets(t, k, W):
    p = t % 2
    return (k - 1 + p) % W, (k + p) % W


class _OffsetUnionFind:
    """Union-find storing each node's unwrapped displacement to its root."""

    def __init__(self):
        self.parent, self.off = {}, {}

    def add(self, v):
        if v not in self.parent:
            self.parent[v], self.off[v] = v, (0, 0)

    def find(self, v):
        path = []
        while self.parent[v] != v:
            path.append(v)
            v = self.parent[v]
        root, acc = v, (0, 0)
        for node in reversed(path):
            o = self.off[node]
            acc = (acc[0] + o[0], acc[1] + o[1])
            self.parent[node], self.off[node] = root, acc
        return root

    def offset(self, v):
        self.find(v)
        return self.off[v]

    def union(self, u, v, d) -> bool:
        """Join with v = u + d; returns False if the link closes a non-contractible cycle."""
        ru, rv = self.find(u), self.find(v)
        ou, ov = self.off[u], self.off[v]
        if ru == rv:
            return ou[0] + d[0] == ov[0] and ou[1] + d[1] == ov[1]
        self.parent[rv] = ru
        self.off[rv] = (ou[0] + d[0] - ov[0], ou[1] + d[1] - ov[1])
        return True


def _path_lifetime(trace: ParticleTrace, t, k, cap):
    """Rows until the particle starting at a-edge (t, k) reaches an annihilation."""
    T, W = trace.rows, trace.width
    for steps in range(cap):
        tt = t % T
        if not trace.occupancy[tt, k]:
            return steps
        if not trace.periodic and t >= T - 1:
            return cap
        left, right = _step_targets(tt, k, W)
        k = left if trace.b_left[tt, k] else right
        t += 1
    return cap


def loop_census(trace: ParticleTrace, cap: Optional[int] = None) -> Census:
    """Connected components of trajectories (loops vs torus-winding) plus creation lifetimes.

    Nodes are a-edges; covered b-edges link an a-edge to the a-edge it leads to
    in the next row.  A component is a loop when it closes without wrapping.
    Creation lifetimes are the shorter of the two emitted paths' lengths in rows.
    """
    T, W = trace.rows, trace.width
    cap = T if cap is None else int(cap)
    uf = _OffsetUnionFind()
    wraps = set()
    last = T if trace.periodic else T - 1
    for t in range(last):
        for k in np.flatnonzero(trace.b_left[t] | trace.b_right[t]):
            uf.add((t, k))
            left, right = _step_targets(t, k, W)
            for covered, k2, dh in ((trace.b_left[t, k], left, -1), (trace.b_right[t, k], right, 1)):
                if not covered:
                    continue
                v = ((t + 1) % T, k2)
                uf.add(v)
                if not uf.union((t, k), v, (1, dh)):
                    wraps.add(uf.find((t, k)))
    comps = {}
    for v in list(uf.parent):
        comps.setdefault(uf.find(v), []).append(v)
    records = []
    for root, nodes in comps.items():
        if len(nodes) < 2:
            continue
        tr, hr = root[0], _position(*root)
        ts = np.array([tr + uf.off[v][0] for v in nodes], float)
        hs = np.array([hr + uf.off[v][1] for v in nodes], float)
        winding = uf.find(root) in wraps
        if not trace.periodic and (ts.min() <= 0 or ts.max() >= T - 1):
            winding = True  # touches the strip boundary: not a closed loop
        kind = "winding" if winding else "loop"
        x0 = (hs.mean() / 2) % W
        t0 = ts.mean() % T
        records.append(CensusRecord(kind, x0, t0, (hs.max() - hs.min()) / 2, ts.max() - ts.min(),
                                    ts.max() - ts.min()))
    for t, k in trace.creations:
        left, right = _step_targets(t, k, W)
        lt = _path_lifetime(trace, t + 1, left, cap)
        rt = _path_lifetime(trace, t + 1, right, cap)
        records.append(CensusRecord("creation", (_position(t, k) / 2) % W, float(t), 1.0, 1.0,
                                    float(min(lt, rt))))
    records.sort(key=lambda r: (r.kind, r.t0, r.x0))
    return Census(records, T, W)


def loop_series(u: float, kmax: int = 40):
    """Brute-force small-x loop weights per domain divided by x^2.

    Enumerates the separation walks of the two trajectories of a loop with k
    particle rows (each weighs u^(2k+2) x^2 relative to the ground state) and
    returns (sum of weights, sum of weights x lifetime), lifetime = k + 1 rows.
    """
    total, weighted = 0.0, 0.0
    ways = {1: 1}  # separation -> number of walk pairs after the first particle row
    for k in range(1, kmax + 1):
        w = ways.get(1, 0) * u ** (2 * k + 2)
        total += w
        weighted += w * (k + 1)
        nxt = {}
        for sep, n in ways.items():
            for d, mult in ((-1, 1), (0, 2), (1, 1)):
                if sep + d >= 1:
                    nxt[sep + d] = nxt.get(sep + d, 0) + n * mult
        ways = nxt
    return total, weighted


def dispersion_index(points, rows: float, width: float, cells: int = 4) -> tuple:
    """Pooled variance-to-mean ratio of counts over a cells x cells partition.

    points is a list of per-sample lists of (x0, t0); within each sample the
    squared deviations from the sample's cell mean are pooled, so the index has
    expectation 1 for Poisson patterns.  Returns (index, total count).
    """
    num, den, total = 0.0, 0.0, 0
    ncell = cells * cells
    for sample in points:
        counts = np.zeros(ncell)
        for x0, t0 in sample:
            i = min(int(x0 / width * cells), cells - 1)
            j = min(int(t0 / rows * cells), cells - 1)
            counts[j * cells + i] += 1
        n = counts.sum()
        if n == 0:
            continue
        m = n / ncell
        num += float(np.sum((counts - m) ** 2))
        den += (ncell - 1) * m
        total += int(n)
    return (num / den if den else math.nan), total


# --------------------------------------------------------------------------
# conditional steps of particle pairs

def pair_step_counts(trace: ParticleTrace, separations: Sequence[int], isolation: int = 0) -> dict:
    """Counts of the joint next-row moves of same-row particle pairs at the given separations.

    A pair (k, k+n) qualifies if no other particle lies within `isolation` sites
    outside the pair or strictly between them.  Keys: together / apart /
    both_left / both_right.
    """
    seps = set(int(n) for n in separations)
    out = {"together": 0, "apart": 0, "both_left": 0, "both_right": 0, "pairs": 0}
    T, W = trace.rows, trace.width
    last = T if trace.periodic else T - 1
    for t in range(last):
        ks = np.flatnonzero(trace.occupancy[t])
        if ks.size < 2:
            continue
        for i, k in enumerate(ks):
            j = (i + 1) % ks.size
            n = (ks[j] - k) % W
            if n not in seps:
                continue
            prev_gap = (k - ks[i - 1]) % W
            next_gap = (ks[(j + 1) % ks.size] - ks[j]) % W
            if prev_gap <= isolation or next_gap <= isolation:
                continue
            right0 = bool(trace.b_right[t, k])
            right1 = bool(trace.b_right[t, ks[j]])
            key = ("together" if right0 and not right1 else "apart" if right1 and not right0
                   else "both_right" if right0 else "both_left")
            out[key] += 1
            out["pairs"] += 1
    return out


# --------------------------------------------------------------------------
# trace dumps

def dump_trace(trace: ParticleTrace, header: dict) -> bytes:
    """JSON header line, then row-major bit-packed fields occupancy, b_left, b_right."""
    fields = {"occupancy": trace.occupancy, "b_left": trace.b_left, "b_right": trace.b_right}
    head = dict(header)
    head.update({"shape": list(trace.occupancy.shape), "fields": list(fields),
                 "periodic": trace.periodic,
                 "creations": trace.creations.tolist(), "annihilations": trace.annihilations.tolist()})
    blob = b"".join(np.packbits(np.ascontiguousarray(f, dtype=bool).ravel()).tobytes()
                    for f in fields.values())
    return json.dumps(head, sort_keys=True).encode() + b"\n" + blob


def load_trace(data: bytes):
    line, blob = data.split(b"\n", 1)
    head = json.loads(line)
    shape = tuple(head["shape"])
    n = shape[0] * shape[1]
    nbytes = (n + 7) // 8
    arrays = []
    for i, _ in enumerate(head["fields"]):
        bits = np.unpackbits(np.frombuffer(blob[i * nbytes:(i + 1) * nbytes], dtype=np.uint8))[:n]
        arrays.append(bits.astype(bool).reshape(shape))
    trace = ParticleTrace(arrays[0], arrays[1], arrays[2],
                          np.array(head["creations"], dtype=int).reshape(-1, 2),
                          np.array(head["annihilations"], dtype=int).reshape(-1, 2),
                          head["periodic"])
    return head, trace
