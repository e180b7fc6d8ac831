"""Command-line front end.

Exit codes: 0 success, 1 verification failure, 2 usage or spec error,
3 Miura consistency gate, 4 numerical failure, 5 no formal solution.
``report.json`` is written to the output directory in every case.
"""
from __future__ import annotations

import argparse
import json
import math
import re
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import asymptotics as asy
from .characteristics import DomainEscape, GrowthError, InconsistentTrace, PaddingError
from .field import Grid, SampledField, write_field_csv
from .kdv import (NumericalFailure, WindowError, solution_from_spec, solve_numeric,
                  spectral_upsample)
from .miura import GateError, invert_miura_flow, miura_map, profile_from_spec
from .specparse import SpecSyntaxError
from .spectral import InvarianceViolation, WindowEdgeError, spectrum_invariance

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_GATE, EXIT_NUMERIC, EXIT_OBSTRUCTION = 0, 1, 2, 3, 4, 5

NUMERIC_ERRORS = (NumericalFailure, DomainEscape, PaddingError, GrowthError, InconsistentTrace,
                  OverflowError, WindowError, WindowEdgeError, InvarianceViolation,
                  FloatingPointError)
AUTO_EDGE = 1e-12


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------------ config

@dataclass
class RunConfig:
    """Validated settings of one command."""

    command: str
    out: Path
    options: dict = field(default_factory=dict)
    plot: bool = False

    def to_json(self):
        d = asdict(self)
        d["out"] = str(self.out)
        return d


def _read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment, dashes in keys become underscores."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, ns: argparse.Namespace, path) -> None:
    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    for key, value in _read_config(path).items():
        if key not in actions:
            raise UsageError(f"unknown config key {key!r}")
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} needs a boolean")
            setattr(ns, key, value.lower() in ("true", "1", "yes"))
            continue
        try:
            v = act.type(value) if act.type else value
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for config key {key!r}: {exc}") from None
        if act.choices and v not in act.choices:
            raise UsageError(f"config key {key!r} must be one of {list(act.choices)}")
        setattr(ns, key, v)


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _pair(text: str) -> tuple:
    v = _floats(text)
    if len(v) != 2 or not v[0] < v[1]:
        raise argparse.ArgumentTypeError(f"expected lo,hi with lo < hi, got {text!r}")
    return tuple(v)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="miuraflow", description="mKdV from KdV through the Miura map, "
                "with verification suites for the underlying identities.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp):
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--config", help="key=value file overriding flags")
        sp.add_argument("--plot", action="store_true", help="also write PNG figures")

    s = sub.add_parser("solve-mkdv", help="recover r(t, x) from r0 and a KdV solution q")
    s.add_argument("--r0", required=True, help="kink[:kappa=..,x0=..], const:c=.., zero, csv:file=..")
    s.add_argument("--q", required=True, help="KdV spec, e.g. boost:c=1(soliton:kappa=1,x0=0), or auto")
    s.add_argument("--xmin", type=float, default=-10.0)
    s.add_argument("--xmax", type=float, default=10.0)
    s.add_argument("--nx", type=int, default=2001)
    s.add_argument("--tmax", type=float, default=0.5)
    s.add_argument("--nt", type=int, default=501)
    s.add_argument("--lam", type=float, default=0.0, help="spectral parameter of the transport")
    s.add_argument("--gate-tol", type=float, default=1e-6)
    s.add_argument("--max-step", type=float, default=1e-3)
    common(s)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("--suite", required=True,
                   help="commutator, wronskian, spectrum, impedance, asymptotics, "
                        "characteristics or all")
    common(v)

    sp = sub.add_parser("spectrum", help="discrete spectrum of L(t) at several times")
    sp.add_argument("--q", required=True)
    sp.add_argument("--times", type=_floats, default=[0.0, 0.25, 0.5])
    sp.add_argument("--window", type=_pair, default=(-5.0, 0.0))
    sp.add_argument("--xmin", type=float, default=-30.0)
    sp.add_argument("--xmax", type=float, default=30.0)
    sp.add_argument("--nx", type=int, default=2000)
    sp.add_argument("--pair-tol", type=float, default=1e-6)
    sp.add_argument("--refine", type=int, choices=(1, 2, 4, 8), default=1,
                    help="resample each slice this many times finer")
    sp.add_argument("--richardson", action="store_true",
                    help="extrapolate eigenvalues from two resolutions")
    common(sp)

    a = sub.add_parser("asymptotics", help="formal evolution of the asymptotic symbol of log psi")
    a.add_argument("--r0-symbol", required=True, help="symbol JSON file")
    a.add_argument("--tmax", type=float, default=1.0)
    a.add_argument("--nt", type=int, default=100)
    a.add_argument("--o-class", action="store_true", help="admit beta = 1/2 (o-class data)")
    common(a)
    return p


# ----------------------------------------------------------------- output

def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    return str(o)


def _finite(o):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    return o


def write_json(path, obj) -> None:
    obj = json.loads(json.dumps(obj, default=_json_default))
    Path(path).write_text(json.dumps(_finite(obj), indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------- commands

def _auto_q(profile, grid: Grid) -> SampledField:
    """Numeric KdV started from ``B(r0)`` sampled on the output grid, returned on
    the doubled periodic box."""
    if grid.nx & (grid.nx - 1):
        raise UsageError(f"--q auto needs a power-of-two --nx, got {grid.nx}")
    r0 = profile.slice(grid.x)
    q0 = miura_map(r0)
    edge = max(abs(q0.values[0]), abs(q0.values[-1]))
    if not edge < AUTO_EDGE:
        raise UsageError(f"--q auto needs decaying B(r0); |B(r0)| = {edge:.3g} at the window edges")
    substeps = max(1, math.ceil(grid.dt / 5e-4))
    # the full periodic box leaves room for characteristics leaving the window
    return solve_numeric(q0, grid.t_max, grid.nt, substeps=substeps, full_box=True)


def cmd_solve_mkdv(cfg: RunConfig, o: dict) -> tuple:
    # validation phase: spec errors exit 2
    try:
        profile = profile_from_spec(o["r0"])
        grid = Grid(o["xmin"], o["xmax"], o["nx"], 0.0, o["tmax"], o["nt"])
        q = None if o["q"] == "auto" else solution_from_spec(o["q"])
    except (SpecSyntaxError, KeyError, ValueError, OSError) as exc:
        raise UsageError(str(exc)) from None
    if q is None:
        q = _auto_q(profile, grid)
    res = invert_miura_flow(profile, q, grid, gate_tol=o["gate_tol"], max_step=o["max_step"],
                            lam=o["lam"])
    write_field_csv(res.r, cfg.out / "r.csv")
    diag = dict(res.diagnostics)
    diag.update({"r0": str(o["r0"]), "q": str(o["q"]), "lam": o["lam"],
                 "grid": {"xmin": grid.x_min, "xmax": grid.x_max, "nx": grid.nx,
                          "tmax": grid.t_max, "nt": grid.nt}})
    write_json(cfg.out / "psi_diag.json", diag)
    files = ["r.csv", "psi_diag.json"]
    if cfg.plot:
        from .plotting import plot_field
        plot_field(res.r, cfg.out / "r.png", "r")
        plot_field(res.log_psi, cfg.out / "log_psi.png", "log psi")
        files += ["r.png", "log_psi.png"]
    return EXIT_OK, {"diagnostics": res.diagnostics, "files": files}


def cmd_verify(cfg: RunConfig, o: dict) -> tuple:
    from .suites import SUITES, run_suite
    name = o["suite"]
    if name != "all" and name not in SUITES:
        raise UsageError(f"unknown suite {name!r}; choose from "
                         f"{', '.join(sorted(SUITES))} or all")
    rep = run_suite(name)
    if cfg.plot:
        from .plotting import plot_checks
        plot_checks(rep, cfg.out / "checks.png")
    for c in rep["checks"]:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['suite']}/{c['name']}  "
              f"{c['value']} (limit {c['limit']})")
    code = EXIT_OK if rep["pass"] else EXIT_FAIL
    if rep["failed"]:
        print("failing checks: " + ", ".join(rep["failed"]), file=sys.stderr)
    return code, rep


def _numeric_levels(sol, times) -> dict:
    """Solve numeric KdV data to each requested time on the full periodic box."""
    q0 = sol.q0
    if q0.x.size & (q0.x.size - 1):
        raise UsageError(f"numeric q needs a power-of-two number of nodes, got {q0.x.size}")
    levels = {}
    for t in times:
        if t < 0:
            raise UsageError("numeric q is only available for t >= 0")
        if t == 0:
            f = solve_numeric(q0, 1e-12, 2, full_box=True)
            levels[t] = f.at(0)
        else:
            f = solve_numeric(q0, t, 2, substeps=max(1, math.ceil(t / 5e-4)), full_box=True)
            levels[t] = f.at(1)
    return levels


def cmd_spectrum(cfg: RunConfig, o: dict) -> tuple:
    times = o["times"]
    if not times:
        raise UsageError("--times needs at least one value")
    try:
        sol = solution_from_spec(o["q"])
        x = np.linspace(o["xmin"], o["xmax"], o["nx"])
    except (SpecSyntaxError, KeyError, ValueError, OSError) as exc:
        raise UsageError(str(exc)) from None
    if o["nx"] < 16 or not o["xmin"] < o["xmax"]:
        raise UsageError("need --nx >= 16 and --xmin < --xmax")
    if sol.closed_form:
        rep = spectrum_invariance(sol, times, o["window"], x=x, tol=o["pair_tol"],
                                  refine=o["refine"], richardson=o["richardson"])
    else:
        levels = _numeric_levels(sol, times)
        xs = levels[times[0]].x

        def sampled(t, xx):
            factor = (xx.size - 1) // (xs.size - 1)
            s = levels[t]
            return s.values if factor == 1 else spectral_upsample(s, factor).values

        rep = spectrum_invariance(sampled, times, o["window"], x=xs, tol=o["pair_tol"],
                                  refine=o["refine"], richardson=o["richardson"])
    d = rep.as_dict()
    out = {k: d[k] for k in ("times", "eigenvalues", "max_pair_dev", "multiplicities")}
    write_json(cfg.out / "spectrum.json", out)
    if cfg.plot:
        from .plotting import plot_spectrum
        plot_spectrum(out, cfg.out / "spectrum.png")
    return (EXIT_OK if rep.passed else EXIT_FAIL), d


def cmd_asymptotics(cfg: RunConfig, o: dict) -> tuple:
    try:
        r0 = asy.symbol_from_json(Path(o["r0_symbol"]).read_text())
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot read symbol: {exc}") from None
    if isinstance(r0, asy.StarSymbol):
        raise UsageError("r0 must be a plain symbol, not a star symbol")
    if o["nt"] < 2 or o["tmax"] <= 0:
        raise UsageError("need --tmax > 0 and --nt >= 2")
    gate = asy.beta_gate(r0, o_class=o["o_class"])
    if not gate.passed:
        return EXIT_OBSTRUCTION, {"gate": gate.as_dict(), "message": gate.message}
    if gate.beta >= asy.Fraction(1, 2):
        msg = ("beta = 1/2 passes the o-class gate, but the symbol carries a nonzero "
               "x^(1/2) term, so the formal recursion (which needs beta < 1/2) does not apply")
        return EXIT_OBSTRUCTION, {"gate": gate.as_dict(), "message": msg}
    t = np.linspace(0.0, o["tmax"], o["nt"])
    q = asy.kdv_symbol_flow(asy.miura_symbol(r0), t)
    p0 = asy.integrate_symbol(r0)
    try:
        p, sysm = asy.formal_evolution(p0, q, t, return_system=True)
    except asy.NoFormalSolution as exc:
        return EXIT_OBSTRUCTION, {"message": str(exc), "witness": str(exc.witness),
                                  "bound": str(exc.bound)}
    rows = []
    for k, (e, c) in enumerate(p.terms):
        vals = np.broadcast_to(np.asarray(c, float), t.shape)
        rows.append(np.column_stack([t, np.full(t.size, k), vals]))
    data = np.concatenate(rows) if rows else np.empty((0, 3))
    np.savetxt(cfg.out / "coefficients.csv", data, fmt=["%.17g", "%d", "%.17g"], delimiter=",",
               header="t,k,a_k", comments="")
    write_json(cfg.out / "symbol.json", asy.symbol_to_json(p))
    write_json(cfg.out / "q_symbol.json", asy.symbol_to_json(q))
    if cfg.plot:
        from .plotting import plot_trajectories
        plot_trajectories(t, {f"k={k} (x^{e})": np.broadcast_to(np.asarray(c, float), t.shape)
                              for k, (e, c) in enumerate(p.terms[:10])},
                          cfg.out / "coefficients.png", "coefficients of log psi")
    info = {"gate": gate.as_dict(), "lattice": [str(e) for e in sysm.lattice],
            "exponents": [str(e) for e in p.exponents],
            "strictly_lower_triangular": sysm.is_strictly_lower_triangular(),
            "files": ["coefficients.csv", "symbol.json", "q_symbol.json"]}
    return EXIT_OK, info


COMMANDS = {"solve-mkdv": cmd_solve_mkdv, "verify": cmd_verify, "spectrum": cmd_spectrum,
            "asymptotics": cmd_asymptotics}


def _out_from_argv(argv) -> Path:
    for i, a in enumerate(argv):
        if a == "--out" and i + 1 < len(argv):
            return Path(argv[i + 1])
        if a.startswith("--out="):
            return Path(a.split("=", 1)[1])
    return Path(".")


def _finish(out: Path, report: dict) -> int:
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "report.json", report)
    except OSError as exc:
        print(f"cannot write report.json: {exc}", file=sys.stderr)
    return report["exit_code"]


def _glue_negative_values(argv: list) -> list:
    """``--window -2,-0.5`` becomes ``--window=-2,-0.5``; argparse would read
    the value as an option otherwise."""
    out = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if (a.startswith("--") and "=" not in a and i + 1 < len(argv)
                and re.match(r"^-[\d.]", argv[i + 1])):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv: Optional[list] = None) -> int:
    argv = _glue_negative_values(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    report = {"argv": argv}
    try:
        ns = parser.parse_args(argv)
        sub = parser._subparsers._group_actions[0].choices[ns.command]
        if ns.config:
            _apply_config(sub, ns, ns.config)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        parser.print_usage(sys.stderr)
        report.update(exit_code=EXIT_USAGE, status="usage error", message=str(exc))
        return _finish(_out_from_argv(argv), report)
    except OSError as exc:
        report.update(exit_code=EXIT_USAGE, status="usage error", message=str(exc))
        print(str(exc), file=sys.stderr)
        return _finish(_out_from_argv(argv), report)

    opts = {k: v for k, v in vars(ns).items() if k not in ("command", "out", "config", "plot")}
    cfg = RunConfig(ns.command, Path(ns.out), opts, ns.plot)
    report.update(command=ns.command, config=cfg.to_json())
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
        code, info = COMMANDS[ns.command](cfg, opts)
        status = {EXIT_OK: "ok", EXIT_FAIL: "verification failed",
                  EXIT_OBSTRUCTION: "no formal solution"}[code]
        report.update(exit_code=code, status=status, result=info)
        if code == EXIT_OBSTRUCTION:
            report["message"] = info.get("message", "no formal solution")
            print(report["message"], file=sys.stderr)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        report.update(exit_code=EXIT_USAGE, status="usage error", message=str(exc))
    except GateError as exc:
        print(str(exc), file=sys.stderr)
        report.update(exit_code=EXIT_GATE, status="consistency gate failed", message=str(exc))
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        report.update(exit_code=EXIT_NUMERIC, status="numerical failure",
                      message=f"{type(exc).__name__}: {exc}")
    except asy.AsymptoticsError as exc:
        print(str(exc), file=sys.stderr)
        report.update(exit_code=EXIT_OBSTRUCTION, status="no formal solution", message=str(exc))
    except (ValueError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        report.update(exit_code=EXIT_NUMERIC, status="numerical failure",
                      message=f"{type(exc).__name__}: {exc}")
    return _finish(cfg.out, report)


if __name__ == "__main__":
    sys.exit(main())
