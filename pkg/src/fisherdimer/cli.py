"""Command-line driver: phase, expect, kernel, corrlen, simulate, voter, validate.

Precedence of settings: a JSON file given with --config overrides command-line
flags, which override the built-in defaults.  Exit codes: 0 success,
1 validation failure, 2 usage or configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import DomainError, FisherDimerError
from .kernels import KernelTable, correlation_length, correlation_length_fit, covariance_C
from .lattice import ModelParams, critical_anisotropy, independent_anisotropy
from .observables import phase_scan
from .sampler import (GlauberChain, dump_trace, estimate, local_densities, loop_census,
                      noisy_voter_sampler, spins_to_particles)
from .svg import line_plot, trace_plot
from .validation import exact_local, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

SUBCOMMANDS = ("phase", "expect", "kernel", "corrlen", "simulate", "voter", "validate")

FIGURES = {
    "uless": {"x": [0.1], "u": [0.4], "sweeps": 40000},
    "uc": {"x": [0.1], "u": ["u_c"], "sweeps": 40000},
    "ui": {"x": [0.1], "u": ["u_i"], "sweeps": 40000},
}


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    x: list = field(default_factory=list)
    u: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    L: int = 100
    sweeps: int = 2000
    rows: int = 2000
    seed: int = 0
    tol: Optional[float] = None
    out: str = "."
    svg: bool = False
    figure: Optional[str] = None
    quick: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        data = json.loads(text)
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)


DEFAULTS = {
    "phase": {"x": [0.1, 0.3, 0.5, 0.7, 0.9], "u": list(np.round(np.linspace(0.1, 1.0, 19), 6))},
    "expect": {"x": [0.1], "u": ["u_c"]},
    "kernel": {"gamma": [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0],
               "alpha": list(np.round(np.linspace(0.0, 3.0, 31), 6))},
    "corrlen": {"gamma": [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0]},
    "simulate": {"x": [0.1], "u": ["u_c"]},
    "voter": {"x": [0.1]},
    "validate": {},
}


# --------------------------------------------------------------------------
# parsing

def parse_grid(text: str) -> list:
    """'0.1,0.2', 'a:b:n' (n points, inclusive) or symbolic 'u_c' / 'u_i'."""
    items = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if part in ("u_c", "u_i"):
            items.append(part)
        elif ":" in part:
            try:
                a, b, n = part.split(":")
                items.extend(float(v) for v in np.linspace(float(a), float(b), int(n)))
            except ValueError as exc:
                raise ConfigError(f"bad range {part!r}; use start:stop:count") from exc
        else:
            try:
                items.append(float(part))
            except ValueError as exc:
                raise ConfigError(f"bad number {part!r}") from exc
    return items


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fisherdimer",
        description="Dimer model on the Fisher lattice. Settings: --config JSON > flags > defaults.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="subcommand", required=True)
    helps = {
        "phase": "E[N_b], E[N_ac], E[N_X] over an (x, u) grid plus the u_c, u_i curves",
        "expect": "expectations and one-site probabilities at given (x, u)",
        "kernel": "E1, E2, e and C over gamma and alpha grids",
        "corrlen": "closed-form and fitted correlation lengths",
        "simulate": "Glauber Monte Carlo: densities, trace dump, loop census",
        "voter": "noisy voter construction at u = u_i",
        "validate": "run the acceptance suite and emit a JSON report",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name], description=helps[name])
        p.add_argument("--config", help="JSON RunConfig; its keys override flags")
        p.add_argument("--x", help="x values: list '0.1,0.2' or range 'a:b:n' (default per subcommand)")
        p.add_argument("--u", help="u values, also 'u_c' / 'u_i' (default per subcommand)")
        p.add_argument("--gamma", help="gamma values (default per subcommand)")
        p.add_argument("--alpha", help="alpha grid for kernel (default 0:3:31)")
        p.add_argument("--L", type=int, help="torus side / ring width (default 100)")
        p.add_argument("--sweeps", type=int, help="Glauber sweeps incl. burn-in (default 2000)")
        p.add_argument("--rows", type=int, help="voter rows (default 2000)")
        p.add_argument("--seed", type=int, help="RNG seed (default 0)")
        p.add_argument("--tol", type=float,
                       help="quadrature tolerance; for validate a scale on every criterion threshold (default 1)")
        p.add_argument("--out", help="output directory (default .)")
        p.add_argument("--svg", action="store_true", default=None, help="also write SVG plots")
        p.add_argument("--figure", choices=sorted(FIGURES), help="simulation preset")
        p.add_argument("--quick", action="store_true", default=None, help="validate: sub-minute subset")
    return ap


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(subcommand=args.subcommand)
    for k, v in DEFAULTS[args.subcommand].items():
        setattr(cfg, k, list(v))
    if args.figure:
        cfg.figure = args.figure
        for k, v in FIGURES[args.figure].items():
            setattr(cfg, k, list(v) if isinstance(v, list) else v)
    for name in ("x", "u", "gamma", "alpha"):
        val = getattr(args, name)
        if val is not None:
            setattr(cfg, name, parse_grid(val))
    for name in ("L", "sweeps", "rows", "seed", "tol", "out", "svg", "quick"):
        val = getattr(args, name)
        if val is not None:
            setattr(cfg, name, val)
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if data.get("subcommand", cfg.subcommand) != cfg.subcommand:
            raise ConfigError("config subcommand does not match the command line")
        merged = asdict(cfg)
        merged.update(data)
        if merged.get("figure") and merged["figure"] not in FIGURES:
            raise ConfigError(f"unknown figure preset {merged['figure']!r}")
        cfg = RunConfig.from_json(json.dumps(merged))
    if cfg.L % 2 or cfg.L < 2:
        raise ConfigError("L must be even and >= 2")
    return cfg


def _u_value(x: float, u) -> float:
    if u == "u_c":
        return float(critical_anisotropy(x))
    if u == "u_i":
        return float(independent_anisotropy(x))
    return float(u)


def _f(v) -> str:
    if v is None:
        return "nan"
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "nan" if math.isnan(v) else f"{v:.12g}"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


class Output:
    def __init__(self, cfg: RunConfig):
        self.dir = Path(cfg.out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.written = []

    def text(self, name: str, content: str):
        (self.dir / name).write_text(content, newline="")
        self.written.append(name)

    def binary(self, name: str, content: bytes):
        (self.dir / name).write_bytes(content)
        self.written.append(name)


# --------------------------------------------------------------------------
# subcommands

def cmd_phase(cfg: RunConfig, out: Output) -> int:
    tol = cfg.tol if cfg.tol is not None else 1e-11
    xs = [float(x) for x in cfg.x]
    us = cfg.u
    if any(isinstance(u, str) for u in us):
        if len(xs) != 1:
            raise ConfigError("symbolic u values need a single x")
        us = [_u_value(xs[0], u) for u in us]
    if not all(0 < x < 1 for x in xs) or not all(float(u) > 0 for u in us):
        raise ConfigError("phase grid needs 0 < x < 1 and u > 0")
    scan = phase_scan(xs, us, tol=tol)
    text = scan.to_csv()
    if scan.failures:
        lines = text.splitlines()
        lines[0] += ",failure"
        for i, r in enumerate(scan.rows, start=1):
            lines[i] += "," + json.dumps(r.error)
        text = "\n".join(lines) + "\n"
    out.text("phase.csv", text)
    grid = np.linspace(0.02, 0.98, 49)
    curves = _csv(("x", "u_c", "u_i"), [[_f(x), _f(critical_anisotropy(x)), _f(independent_anisotropy(x))]
                                        for x in grid])
    out.text("phase_curves.csv", curves)
    sys.stdout.write(text)
    if cfg.svg:
        out.text("phase_curves.svg", line_plot(
            [("u_c(x)", grid, [critical_anisotropy(x) for x in grid]),
             ("u_i(x)", grid, [independent_anisotropy(x) for x in grid])],
            "critical and independent lines", "x", "u"))
        series = []
        for x in xs:
            rows = [r for r in scan.rows if r.x == x]
            series.append((f"x={x:g}", [r.u for r in rows], [r.E_Nb - r.E_Nac for r in rows]))
        out.text("phase_difference.svg", line_plot(series, "E[N_b] - E[N_ac] = 2 E[N_X]", "u", "difference"))
    return EXIT_NUMERIC if scan.failures else EXIT_OK


def cmd_expect(cfg: RunConfig, out: Output) -> int:
    tol = cfg.tol if cfg.tol is not None else 1e-11
    header = ("x", "u", "regime", "E_Nb", "E_Nac", "E_NX", "Nb_closed", "Nac_closed", "discrepancy_max",
              "particle", "b_edge", "creation")
    rows, failed = [], False
    for x in cfg.x:
        x = float(x)
        for u in cfg.u:
            uv = _u_value(x, u)
            scan = phase_scan([x], [uv], tol=tol)
            r = scan.rows[0]
            if r.error:
                failed = True
                rows.append([_f(x), _f(uv), "error"] + ["nan"] * 9)
                continue
            loc = exact_local(ModelParams(x, uv))
            rows.append([_f(r.x), _f(r.u), r.regime, _f(r.E_Nb), _f(r.E_Nac), _f(r.E_NX), _f(r.Nb_closed),
                         _f(r.Nac_closed), _f(r.discrepancy_max), _f(loc["particle"]), _f(loc["b_edge"]),
                         _f(loc["creation"])])
    text = _csv(header, rows)
    out.text("expect.csv", text)
    sys.stdout.write(text)
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_kernel(cfg: RunConfig, out: Output) -> int:
    parts = []
    for i, g in enumerate(cfg.gamma):
        parts.append(KernelTable.build(float(g), [float(a) for a in cfg.alpha]).to_csv(header=(i == 0)))
    text = "".join(parts)
    out.text("kernel.csv", text)
    sys.stdout.write(text)
    if cfg.svg:
        gs = np.linspace(-1.99, 1.99, 81)
        out.text("covariance.svg", line_plot([("C(0.2, gamma)", gs, [covariance_C(g, 0.2) for g in gs])],
                                             "pair covariance at alpha = 0.2", "gamma", "C", hline=0.0))
    return EXIT_OK


def cmd_corrlen(cfg: RunConfig, out: Output) -> int:
    rows = []
    for g in cfg.gamma:
        g = float(g)
        xi = correlation_length(g)
        try:
            fit = math.inf if g == -1 else correlation_length_fit(g)
        except FisherDimerError:
            fit = math.nan
        rows.append([_f(g), _f(xi), _f(fit)])
    text = _csv(("gamma", "xi_closed", "xi_fit"), rows)
    out.text("corrlen.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


def _single_point(cfg: RunConfig):
    if len(cfg.x) != 1 or len(cfg.u) != 1:
        raise ConfigError("simulate needs a single x and a single u")
    x = float(cfg.x[0])
    return ModelParams(x, _u_value(x, cfg.u[0]))


def cmd_simulate(cfg: RunConfig, out: Output) -> int:
    p = _single_point(cfg)
    burn = min(10 * cfg.L, cfg.sweeps // 2)
    samples = 40
    thin = max(1, (cfg.sweeps - burn) // samples)
    chain = GlauberChain(p, cfg.L, cfg.seed).run(burn)
    # heuristic stationarity check: discard and double the burn-in (at most three
    # times) while the half-chain particle means differ by more than 2 SE
    for attempt in range(4):
        series = {k: [] for k in ("particle", "b_left", "b_right", "creation")}
        winding_samples, census = 0, None
        for _ in range(samples):
            chain.run(thin)
            f = chain.field()
            for k, v in local_densities(f).items():
                series[k].append(v)
            census = loop_census(spins_to_particles(f))
            winding_samples += bool(census.winding)
        rep = estimate(np.array(series["particle"]))
        gap = abs(rep.diagnostics["first_half"] - rep.diagnostics["second_half"])
        if gap <= 2 * math.sqrt(2) * rep.se or attempt == 3:
            break
        chain.run(burn)
        burn *= 2
    trace = spins_to_particles(chain.field())
    head = {"L": cfg.L, "x": p.x, "u": p.u, "seed": cfg.seed, "sweep": chain.sweep_index, "burn_in": burn}
    out.binary("trace.bin", dump_trace(trace, head))
    out.text("census.csv", census.to_csv())
    exact = exact_local(p)
    rows = []
    for k in ("particle", "b_left", "b_right", "creation"):
        rep = estimate(np.array(series[k]))
        ex = exact["b_edge"] if k.startswith("b_") else exact[k]
        rows.append([k, _f(rep.mean), _f(rep.se), _f(ex), _f(rep.z(ex))])
    rows.append(["loop_only_fraction", _f(1 - winding_samples / samples), "nan", "nan", "nan"])
    text = _csv(("observable", "mc", "se", "exact", "z"), rows)
    out.text("simulate.csv", text)
    sys.stdout.write(text)
    if cfg.svg:
        out.text("trace.svg", trace_plot(trace, title=f"x={p.x:g} u={p.u:.6g} L={cfg.L}"))
    return EXIT_OK


def cmd_voter(cfg: RunConfig, out: Output) -> int:
    if len(cfg.x) != 1:
        raise ConfigError("voter needs a single x")
    x = float(cfg.x[0])
    burn = min(int(4 / (x * x)), cfg.rows // 2)
    colors, trace = noisy_voter_sampler(x, cfg.L, cfg.rows, cfg.seed)
    occ, bl = trace.occupancy[burn:-1], trace.b_left[burn:-1]
    block = max(1, occ.shape[0] // 20)
    nblk = occ.shape[0] // block
    def blocks(a):
        return np.array([a[i * block:(i + 1) * block].mean() for i in range(nblk)])
    rho = x / (1 + x)
    b_exact = 0.5 - math.sqrt(1 - x) / (2 * math.sqrt(1 + x))
    cre = np.zeros(trace.rows, dtype=float)
    for t, _ in trace.creations:
        cre[t] += 1
    cre = (cre / cfg.L)[burn:-1]
    rows = []
    for name, arr, ex in (("particle", occ.mean(axis=1), rho), ("b_left", bl.mean(axis=1), b_exact),
                          ("creation", cre, math.nan)):
        rep = estimate(blocks(arr))
        rows.append([name, _f(rep.mean), _f(rep.se), _f(ex), _f(rep.z(ex)) if math.isfinite(ex) else "nan"])
    head = {"L": cfg.L, "x": x, "u": float(independent_anisotropy(x)), "seed": cfg.seed, "rows": cfg.rows}
    out.binary("voter_trace.bin", dump_trace(trace, head))
    text = _csv(("observable", "mc", "se", "exact", "z"), rows)
    out.text("voter.csv", text)
    sys.stdout.write(text)
    if cfg.svg:
        out.text("voter_trace.svg", trace_plot(trace, title=f"noisy voter x={x:g} L={cfg.L}"))
    return EXIT_OK


def cmd_validate(cfg: RunConfig, out: Output) -> int:
    scale = 1.0 if cfg.tol is None else float(cfg.tol)
    results = run_suite(quick=cfg.quick, tol_scale=scale)
    report = {"quick": cfg.quick, "tol_scale": scale, "passed": all(r.passed for r in results),
              "criteria": [r.to_dict() for r in results]}
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    out.text("validate.json", text)
    sys.stdout.write(text)
    return EXIT_OK if report["passed"] else EXIT_FAIL


COMMANDS = {"phase": cmd_phase, "expect": cmd_expect, "kernel": cmd_kernel, "corrlen": cmd_corrlen,
            "simulate": cmd_simulate, "voter": cmd_voter, "validate": cmd_validate}


_VALUE_FLAGS = ("--x", "--u", "--gamma", "--alpha", "--tol", "--seed")


def _glue_negative(argv):
    # let "--gamma -1,1" through: argparse would read "-1,1" as an option
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1][:2].replace(".", "0")[:2] in \
                {f"-{d}" for d in "0123456789"}:
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _glue_negative(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = resolve_config(args)
        out = Output(cfg)
        return COMMANDS[cfg.subcommand](cfg, out)
    except (ConfigError, DomainError, TypeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (FisherDimerError, FloatingPointError, ArithmeticError) as exc:
        sys.stderr.write(f"numeric failure: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
