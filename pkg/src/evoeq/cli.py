"""Command line front end.

Every subcommand writes its data files and a ``certificate.json`` into
``--out`` and exits with 0 when all checks pass, 2 when a certificate or
check fails and 1 on usage errors.  Options may also come from a flat JSON
file given with ``--config``; explicit flags take precedence.

Data files
----------
``trajectory.csv``
    ``t, re_0, im_0, re_1, im_1, ...`` with a JSON header next to it (see
    :func:`evoeq.signal.save_csv`).
``spectrum.csv``
    ``omega, re_0, im_0, ...`` in ascending frequency order.
``errors.csv``
    One row per oscillation parameter ``n``.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .dae import (
    MatrixPair,
    consistent_subspace,
    dae_solve,
    example_pair,
    laplace_solution_check,
    load_pair,
    pair_index,
    rlc_pair,
    weierstrass_form,
    wong_sequence,
)
from .errors import EvoError, InvalidArgument
from .fourier import forward, save_spectrum_csv
from .homogenization import harmonic_mean, homogenized_matrix, oscillation_sweep
from .ode import solve_classical_ivp
from .presets import PRESETS, preset
from .signal import WeightedSignal, load_csv, make_grid, save_csv, weighted_norm
from .solver import solve, solve_ivp
from .spatial import SpaceGrid
from .stability import (
    counterexample_solution,
    decay_rate_bound,
    delay_heat_setup,
    dpl_setup,
    heat_setup,
    measure_decay,
)

__all__ = ["main", "run", "SCHEMA", "PAIRS"]

SCHEMA = "evoeq.certificate/1"

PAIRS = {
    "golden-2x2": example_pair,
    "paper-2x2": example_pair,
    "rlc": rlc_pair,
}

ODE_PROBLEMS = {
    # name: (f, x0, exact solution)
    "relax": (lambda t, x: 1.0 - x, 0.0, lambda t: 1.0 - np.exp(-t)),
    "growth": (lambda t, x: x, 1.0, lambda t: np.exp(t)),
    "riccati": (lambda t, x: -(x**2), 1.0, lambda t: 1.0 / (1.0 + t)),
}

_OVERRIDABLE = ("preset", "nu", "grid", "space", "tol", "seed", "ivp", "forcing", "pair", "u0",
                "problem", "n", "input", "t1")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _grid_arg(s: str):
    parts = s.split(",")
    if len(parts) != 3:
        raise UsageError(f"--grid expects t0,dt,n, got {s!r}")
    try:
        return make_grid(float(Fraction(parts[0])), float(Fraction(parts[1])), int(parts[2]))
    except (ValueError, ZeroDivisionError, EvoError) as exc:
        raise UsageError(f"invalid --grid {s!r}: {exc}") from exc


def _space_arg(s: str):
    parts = s.split(",")
    if len(parts) != 3:
        raise UsageError(f"--space expects a,b,m, got {s!r}")
    try:
        return SpaceGrid(float(Fraction(parts[0])), float(Fraction(parts[1])), int(parts[2]))
    except (ValueError, ZeroDivisionError, EvoError) as exc:
        raise UsageError(f"invalid --space {s!r}: {exc}") from exc


def _nu_arg(s):
    if s is None or s == "auto":
        return None
    try:
        v = float(s)
    except ValueError as exc:
        raise UsageError(f"--nu expects a number or 'auto', got {s!r}") from exc
    if not math.isfinite(v):
        raise UsageError("--nu must be finite")
    return v


def _vector_arg(s: str) -> np.ndarray:
    try:
        return np.array([complex(v) for v in s.split(",")])
    except ValueError as exc:
        raise UsageError(f"expected comma separated numbers, got {s!r}") from exc


def _int_list(s) -> list:
    if isinstance(s, (list, tuple)):
        return [int(v) for v in s]
    try:
        return [int(v) for v in str(s).split(",")]
    except ValueError as exc:
        raise UsageError(f"expected comma separated integers, got {s!r}") from exc


def _num(x):
    """JSON-safe number (complex as ``[re, im]``, non-finite as a string)."""
    if isinstance(x, complex) or isinstance(x, np.complexfloating):
        return [_num(float(x.real)), _num(float(x.imag))]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (str, type(None))):
        return obj
    return _num(obj)


class Report:
    """Collects checks and writes the certificate."""

    def __init__(self, subcommand: str, inputs: dict):
        self.subcommand = subcommand
        self.inputs = inputs
        self.values: dict = {}
        self.checks: list = []

    def check(self, name: str, value, threshold, passed: bool, hypothesis: str = ""):
        self.checks.append({"name": name, "value": value, "threshold": threshold,
                            "passed": bool(passed), "hypothesis": hypothesis})

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def write(self, out: Path, failure: str | None = None) -> None:
        doc = {
            "schema": SCHEMA,
            "version": __version__,
            "subcommand": self.subcommand,
            "inputs": self.inputs,
            "values": self.values,
            "checks": self.checks,
            "passed": self.passed and failure is None,
        }
        if failure is not None:
            doc["failure"] = failure
        text = json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
        (out / "certificate.json").write_text(text)


# ---------------------------------------------------------------- subcommands


def _cmd_solve(a, rep: Report, out: Path):
    if a.preset not in PRESETS:
        raise UsageError(f"unknown preset {a.preset!r}; choose from {', '.join(PRESETS)}")
    space = a.space or SpaceGrid(0.0, 1.0, 32)
    tpl = preset(a.preset, space)
    grid = a.grid or make_grid(0.0, 1.0 / 64, 2048)
    nu = a.nu if a.nu is not None else tpl.rate_for(grid)
    rep.values.update({"nu": nu, "dim": tpl.dim, "c": tpl.certificate.c})
    if a.ivp is not None:
        if a.ivp != "sin-mode":
            raise UsageError(f"unknown --ivp {a.ivp!r}; only 'sin-mode' is available")
        if tpl.M0 is None:
            raise UsageError(f"preset {a.preset!r} has no initial value form")
        first = next(iter(tpl.layout))
        L = space.b - space.a
        U0 = tpl.state(**{first: lambda x: np.sin(np.pi * (x - space.a) / L)})
        sol = solve_ivp(tpl.M0, tpl.M1, tpl.A, U0, nu, grid, name=a.preset)
        rep.values["attainment"] = sol.extras.get("attainment")
    else:
        if a.forcing not in (None, "pulse"):
            raise UsageError(f"unknown --forcing {a.forcing!r}; only 'pulse' is available")
        first = next(iter(tpl.layout))
        F = tpl.forcing(grid, nu, **{first: lambda t, x: ((t >= 0) & (t <= 1)) * np.sin(np.pi * x)})
        sol = solve(tpl.problem(F, nu))
        rep.check("norm_bound", sol.norm_ratio, 1.0 + 1e-6, sol.norm_bound_ok,
                  "solution operator norm at most 1/c")
    save_csv(sol.U, out / "trajectory.csv")
    rep.values["certificate"] = sol.certificate.to_dict()
    rep.values["condition"] = sol.condition
    tol = a.tol if a.tol is not None else 1e-8
    rep.check("residual", sol.residual, tol, sol.residual <= tol, "per-frequency system solved")
    rep.check("positivity", sol.certificate.c, 0.0, sol.certificate.c > 0,
              "Re zM(z) >= c > 0 on Re z >= nu0")


def _cmd_ode(a, rep: Report, out: Path):
    name = a.problem or "relax"
    if name not in ODE_PROBLEMS:
        raise UsageError(f"unknown ODE problem {name!r}; choose from {', '.join(ODE_PROBLEMS)}")
    f, x0, exact = ODE_PROBLEMS[name]
    t1 = a.t1 if a.t1 is not None else 1.0
    n = a.grid.n if a.grid is not None else 2048
    tol = a.tol if a.tol is not None else 1e-13
    res = solve_classical_ivp(f, 0.0, x0, t1, nu=a.nu, n=n, tol=tol, seed=a.seed)
    grid = make_grid(0.0, res.t[1] - res.t[0], res.t.size)
    save_csv(WeightedSignal(grid, 0.0, res.x), out / "trajectory.csv")
    err = float(np.max(np.abs(res.x[:, 0] - exact(res.t))))
    rep.values.update({"lipschitz": res.lipschitz, "nu": res.nu, "iterations": res.iterations,
                       "factor": res.factor, "delta": res.delta, "shrunk": res.shrunk,
                       "guaranteed_delta": res.guaranteed_delta})
    rep.check("contraction", res.factor, 1.0, res.factor < 1.0, "nu > L makes the fixed point map a contraction")
    rep.check("exact_error", err, 1e-5, err <= 1e-5, "classical solution of the initial value problem")


def _cmd_dae(a, rep: Report, out: Path):
    if a.input is not None:
        name = None
        p: MatrixPair = load_pair(a.input)
    else:
        name = a.pair or "golden-2x2"
        if name not in PAIRS:
            raise UsageError(f"unknown pair {name!r}; choose from {', '.join(PAIRS)}")
        p = PAIRS[name]()
    if a.u0 is not None:
        U0 = a.u0
    elif name not in ("golden-2x2", "paper-2x2"):
        # e_1 need not be consistent; start from a consistent direction instead
        B0 = consistent_subspace(p)
        U0 = B0[:, 0] if B0.shape[1] else np.zeros(p.n)
    else:
        U0 = np.eye(p.n)[0]
    if U0.size != p.n:
        raise UsageError(f"--u0 needs {p.n} entries")
    grid = a.grid or make_grid(0.0, 1.0 / 256, 4096)
    tol = a.tol if a.tol is not None else 1e-8
    wd = weierstrass_form(p, seed=a.seed)
    traj = dae_solve(p, U0, grid, atol=tol)
    save_csv(traj.to_signal(grid), out / "trajectory.csv")
    wong = wong_sequence(p)
    B = consistent_subspace(p, wd=wd)
    rep.values.update({"k": wd.k, "index": pair_index(p, seed=a.seed), "wong_dims": list(wong.dims),
                       "wong_stabilization": wong.stabilization, "consistent_basis": B,
                       "weierstrass_residuals": wd.residuals})
    worst = max(wd.residuals.values())
    rep.check("weierstrass_residuals", worst, 1e-9, worst < 1e-9, "quasi-Weierstrass form of a regular pair")
    rep.check("consistency", traj.consistency_residual, tol, traj.consistency_residual <= tol,
              "initial value in the consistent subspace")
    lap = laplace_solution_check(p, U0, traj, rho=1.0)
    rep.check("laplace_formula", lap, 1e-5, lap <= 1e-5, "resolvent formula for the transformed solution")
    if name in ("golden-2x2", "paper-2x2"):
        ref = np.zeros_like(traj.U)
        ref[:, 0] = U0[0] * np.exp(-grid.times)
        err = float(np.max(np.abs(traj.U - ref)))
        rep.check("exact_error", err, 1e-8, err <= 1e-8, "closed form (x e^{-t}, 0)")


def _cmd_homogenize(a, rep: Report, out: Path):
    problem = a.problem or "ode-sin-memory"
    if problem == "cell-1d":
        ns = _int_list(a.n) if a.n is not None else [1024]
        p = ns[0]
        rng = np.random.default_rng(a.seed)
        coeff = rng.uniform(0.5, 2.0, p)
        ahom = homogenized_matrix(coeff)[0, 0]
        hm = harmonic_mean(coeff)
        rep.values.update({"a_hom": ahom, "harmonic_mean": hm, "cells": p})
        rep.check("harmonic_mean", abs(ahom - hm), 1e-8, abs(ahom - hm) <= 1e-8,
                  "one-dimensional effective coefficient")
        return
    ns = _int_list(a.n) if a.n is not None else ([128] if problem == "ode-sin-memory" else [4, 8, 16, 32, 64])
    table = oscillation_sweep(problem, ns)
    table.to_csv(out / "errors.csv")
    rep.values.update({"columns": list(table.columns), "rows": [list(r) for r in table.rows], "meta": table.meta})
    if problem == "ode-sin-memory":
        for col in ("error_bessel", "error_series"):
            e = float(table.column(col)[-1])
            rep.check(col, e, 1e-3, e <= 1e-3, "weak limit given by the Bessel memory kernel")
    else:
        e = table.column("rel_error")
        dec = bool(np.all(np.diff(e) < 0))
        rep.check("decreasing", list(e), "strict", dec, "oscillating coefficients converge to a_hom")
        rep.check("final_error", float(e[-1]), 0.05, e[-1] < 0.05, "oscillating coefficients converge to a_hom")


def _cmd_stability(a, rep: Report, out: Path):
    name = a.preset or "heat"
    space = a.space or SpaceGrid(0.0, 1.0, 64)
    if name == "counterexample":
        U = counterexample_solution()
        fit = measure_decay(U, (2.0, 16.0))
        save_csv(U, out / "trajectory.csv")
        rep.values.update({"rate": fit.rate, "band": list(fit.band)})
        rep.check("no_decay", fit.rate, [-0.01, 0.01], -0.01 <= fit.rate <= 0.01,
                  "the integral of a compactly supported source does not decay")
        return
    builders = {"heat": heat_setup, "delay-heat": delay_heat_setup, "dpl": dpl_setup}
    if name not in builders:
        raise UsageError(f"stability supports {', '.join(builders)} and counterexample, got {name!r}")
    s = builders[name](space)
    rho0 = decay_rate_bound(s)
    rep.values.update({"rho0": rho0, "setup": s.to_dict()})
    rep.check("rho0_positive", rho0, 0.0, rho0 > 0, "parabolic decay criterion")
    if name == "heat":
        tpl = preset("heat", space)
        grid = a.grid or make_grid(0.0, 1.0 / 512, 4096)
        nu = a.nu if a.nu is not None else 4.0
        U0 = tpl.state(theta=lambda x: np.sin(np.pi * x))
        sol = solve_ivp(tpl.M0, tpl.M1, tpl.A, U0, nu, grid, attainment=False)
        th = sol.U.component(tpl.layout["theta"])
        fit = measure_decay(th, (0.1, 0.8))
        save_csv(th, out / "trajectory.csv")
        rep.values.update({"measured_rate": fit.rate, "band": list(fit.band)})
        rep.check("rate_vs_bound", fit.rate, rho0, fit.rate >= 0.95 * rho0,
                  "measured decay at least the guaranteed rate")


def _cmd_transform(a, rep: Report, out: Path):
    if a.input is None:
        raise UsageError("transform needs --input pointing to a signal CSV")
    f = load_csv(a.input)
    if a.nu is not None:
        f = f.with_nu(a.nu)
    s = forward(f)
    save_spectrum_csv(s, out / "spectrum.csv")
    gap = abs(s.norm() - weighted_norm(f))
    rel = gap / max(weighted_norm(f), 1e-300)
    rep.values.update({"nu": f.nu, "n": f.grid.n, "dim": f.dim})
    rep.check("plancherel", rel, 1e-12, rel <= 1e-12, "unitarity of the Fourier-Laplace transform")


_COMMANDS = {
    "solve": _cmd_solve,
    "ode": _cmd_ode,
    "dae": _cmd_dae,
    "homogenize": _cmd_homogenize,
    "stability": _cmd_stability,
    "transform": _cmd_transform,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evoeq", description="Spectral-in-time solvers for evolutionary equations.")
    parser.add_argument("--version", action="version", version=f"evoeq {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat JSON file with option values")
        p.add_argument("--out", default=".", help="output directory (created if missing)")
        p.add_argument("--preset")
        p.add_argument("--nu", help="weight rate or 'auto'")
        p.add_argument("--grid", help="t0,dt,n (dt may be a fraction such as 1/512)")
        p.add_argument("--space", help="a,b,m")
        p.add_argument("--tol", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--ivp")
        p.add_argument("--forcing")
        p.add_argument("--pair")
        p.add_argument("--u0")
        p.add_argument("--problem")
        p.add_argument("--n")
        p.add_argument("--input")
        p.add_argument("--t1", type=float)
    return parser


def _merge_config(a) -> None:
    if a.config is None:
        return
    try:
        cfg = json.loads(Path(a.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {a.config!r}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(cfg) - set(_OVERRIDABLE) - {"out"}
    if unknown:
        raise UsageError(f"unknown config keys {sorted(unknown)}")
    for k, v in cfg.items():
        if k == "out":
            if a.out == ".":
                a.out = v
            continue
        if getattr(a, k) is None:
            if k in ("grid", "space", "u0") and isinstance(v, list):
                v = ",".join(str(x) for x in v)
            elif k in ("nu", "preset", "ivp", "forcing", "pair", "problem", "input"):
                v = str(v)
            setattr(a, k, v)


def _normalise(a) -> None:
    a.grid = _grid_arg(a.grid) if isinstance(a.grid, str) else a.grid
    a.space = _space_arg(a.space) if isinstance(a.space, str) else a.space
    a.nu = _nu_arg(a.nu)
    a.u0 = _vector_arg(a.u0) if isinstance(a.u0, str) else a.u0
    a.seed = 0 if a.seed is None else int(a.seed)
    a.tol = None if a.tol is None else float(a.tol)
    a.t1 = None if a.t1 is None else float(a.t1)


def run(argv=None) -> int:
    """Run the CLI and return the exit code."""
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        _merge_config(a)
        _normalise(a)
    except UsageError as exc:
        print(f"evoeq: usage error: {exc}", file=sys.stderr)
        return 1
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = {k: getattr(a, k) for k in _OVERRIDABLE}
    for k in ("grid", "space"):
        if inputs[k] is not None:
            g = inputs[k]
            inputs[k] = [g.t0, g.dt, g.n] if k == "grid" else [g.a, g.b, g.m]
    rep = Report(a.subcommand, inputs)
    try:
        _COMMANDS[a.subcommand](a, rep, out)
    except UsageError as exc:
        print(f"evoeq: usage error: {exc}", file=sys.stderr)
        return 1
    except (InvalidArgument, FileNotFoundError) as exc:
        print(f"evoeq: invalid input: {exc}", file=sys.stderr)
        return 1
    except EvoError as exc:
        rep.write(out, failure=f"{type(exc).__name__}: {exc}")
        print(f"evoeq: certificate failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    rep.write(out)
    if not rep.passed:
        failed = ", ".join(f"{c['name']} ({c['hypothesis']})" for c in rep.checks if not c["passed"])
        print(f"evoeq: failed checks: {failed}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))
