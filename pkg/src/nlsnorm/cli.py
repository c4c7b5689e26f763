"""Command-line driver: ``nlsnorm <command> [--config FILE] [flags]``.

Configuration files hold one ``section.key = value`` pair per line (``#``
comments allowed).  Lists are comma separated.  Flags override the file.
Every run writes ``result.json`` on success (plus ``series.csv`` where a
series exists) or ``diagnostic.json`` on failure into the output directory.

Exit codes: 0 success, 1 usage or configuration error, 2 a checked
inequality failed, 3 numerical or convergence failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import sys
import traceback
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CheckFailure, InvalidArgument, NlsNormError, NumericError

log = logging.getLogger("nlsnorm")

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_NUMERIC = 0, 1, 2, 3

COMMANDS = ("ground", "mpass", "fiber", "bubble", "path", "evolve", "sweep", "certify")

# key -> (type, default); None defaults mean "chosen automatically"
SCHEMA: dict[str, tuple[type, object]] = {
    "problem.N": (int, 4),
    "problem.mu": (float, 1.0),
    "problem.q": (float, 2.5),
    "problem.c": (float, 10.0),
    "grid.R_max": (float, None),
    "grid.M": (int, 4096),
    "grid.stretching": (str, "graded:3"),
    "solver.tol_E": (float, 1e-5),
    "solver.max_iters": (int, 20000),
    "solver.newton_iters": (int, 40),
    "solver.seed": (int, 0),
    "fiber.A": (float, None),
    "fiber.B": (float, None),
    "fiber.C": (float, None),
    "fiber.samples": (int, 1000),
    "bubble.eps": (list, [2.0 ** -k for k in range(4, 13)]),
    "bubble.tolerance": (float, 0.1),
    "path.mode": (str, "path"),
    "path.eps": (float, 0.02),
    "path.nodes": (int, 64),
    "path.battle_eps": (list, [2.0 ** -k for k in range(6, 27, 2)]),
    "dynamics.mode": (str, "ground"),
    "dynamics.T": (float, 10.0),
    "dynamics.dt": (float, 1e-2),
    "dynamics.output_every": (float, 0.1),
    "dynamics.absorb": (float, 0.0),
    "dynamics.delta": (float, 0.05),
    "dynamics.dilations": (list, [1.05, 1.1, 1.2]),
    "sweep.mode": (str, "c_to_zero"),
    "sweep.values": (list, [10.0, 5.0, 2.0, 1.0, 0.5, 0.25]),
    "certify.profile": (str, None),
    "output.dir": (str, "out"),
    "output.formats": (list, ["json", "csv"]),
}

FLAG_KEYS = {"N": "problem.N", "mu": "problem.mu", "q": "problem.q", "c": "problem.c",
             "Rmax": "grid.R_max", "M": "grid.M", "seed": "solver.seed", "out": "output.dir",
             "profile": "certify.profile"}


class UsageError(Exception):
    pass


# --- configuration -----------------------------------------------------------

def _coerce(key: str, raw):
    typ, _ = SCHEMA[key]
    try:
        if typ is list:
            if isinstance(raw, str):
                items = [s.strip() for s in raw.split(",") if s.strip()]
            else:
                items = list(raw)
            if key == "output.formats":
                return [str(s) for s in items]
            return [float(s) for s in items]
        if typ is int:
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        return typ(raw)
    except (TypeError, ValueError):
        raise UsageError(f"bad value for {key}: {raw!r}") from None


def read_config_file(path) -> dict:
    text = Path(path).read_text()
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                   inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[root]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from None
    return dict(cp["root"])


def resolve_config(file_values: dict, overrides: dict) -> dict:
    unknown = sorted(set(file_values) - set(SCHEMA))
    if unknown:
        raise UsageError(f"unknown configuration keys: {', '.join(unknown)}")
    cfg = {k: d for k, (_, d) in SCHEMA.items()}
    for src in (file_values, overrides):
        for k, v in src.items():
            if v is not None:
                cfg[k] = _coerce(k, v)
    bad = set(cfg["output.formats"]) - {"json", "csv"}
    if bad:
        raise UsageError(f"unknown output formats: {sorted(bad)}")
    return cfg


def problem_params(cfg: dict):
    from .energy import ProblemParams
    return ProblemParams(cfg["problem.N"], cfg["problem.mu"], cfg["problem.q"], cfg["problem.c"])


def solver_options(cfg: dict):
    from .solvers import SolverOptions
    return SolverOptions(tol_E=cfg["solver.tol_E"], max_iters=cfg["solver.max_iters"],
                         newton_iters=cfg["solver.newton_iters"], M=cfg["grid.M"])


def explicit_grid(cfg: dict, N: int):
    from .radial import make_grid
    if cfg["grid.R_max"] is None:
        return None
    return make_grid(cfg["grid.R_max"], cfg["grid.M"], N, cfg["grid.stretching"])


# --- serialization -----------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def format_number(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with floats at 17 significant digits; non-finite floats become null."""
    obj = _plain(obj) if _level == 0 else obj
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, float):
        return format_number(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(inner + dumps(v, indent, _level + 1) for v in obj) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_number(x) if isinstance(x, float) else x for x in row])


class Output:
    def __init__(self, cfg: dict, command: str):
        self.dir = Path(cfg["output.dir"])
        self.cfg, self.command = cfg, command
        self.dir.mkdir(parents=True, exist_ok=True)

    def _envelope(self, body: dict) -> dict:
        return {"command": self.command, "version": __version__, "config": self.cfg, **body}

    def result(self, record: dict) -> None:
        if "json" in self.cfg["output.formats"]:
            (self.dir / "result.json").write_text(dumps(self._envelope({"result": record})) + "\n")

    def series(self, header, rows) -> None:
        if "csv" in self.cfg["output.formats"]:
            write_csv(self.dir / "series.csv", header, rows)

    def diagnostic(self, code: int, exc: BaseException, extra=None) -> None:
        body = {"exit_code": code, "error": type(exc).__name__, "message": str(exc)}
        if extra is not None:
            body["details"] = extra
        (self.dir / "diagnostic.json").write_text(dumps(self._envelope(body)) + "\n")


def save_profile(path: Path, u, params) -> None:
    g = u.grid
    np.savez(path, nodes=g.nodes, values=u.values, R_max=g.R_max, M=g.M, N=g.dimension,
             stretching=g.stretching, strength=g.strength,
             params=np.array([params.N, params.mu, params.q, params.c]))


def load_profile(path):
    from .radial import RadialFunction, make_grid
    try:
        with np.load(path) as z:
            kind = str(z["stretching"])
            stretch = kind if kind == "uniform" else ("graded", float(z["strength"]))
            grid = make_grid(float(z["R_max"]), int(z["M"]), int(z["N"]), stretch)
            if not np.allclose(grid.nodes, z["nodes"], rtol=1e-14, atol=0):
                raise InvalidArgument("stored nodes do not match the rebuilt grid")
            return RadialFunction(grid, z["values"]), z["params"].tolist()
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read profile {path}: {exc}") from None


def profile_rows(u):
    return zip(u.grid.nodes.tolist(), u.values.tolist())


# --- commands ----------------------------------------------------------------

def cmd_ground(cfg, out: Output) -> int:
    from .solvers import solve_ground_state
    p = problem_params(cfg)
    res = solve_ground_state(p, grid=explicit_grid(cfg, p.N), options=solver_options(cfg))
    out.result(res.to_record())
    out.series(["r", "u"], profile_rows(res.profile))
    save_profile(out.dir / "profile.npz", res.profile, p)
    print(f"m(c) = {res.m_of_c:.12g}  lambda = {res.multiplier:.8g}  "
          f"{'VALID' if res.certificate.valid else 'INVALID'}")
    return EXIT_OK


def cmd_mpass(cfg, out: Output) -> int:
    from .solvers import solve_mountain_pass
    p = problem_params(cfg)
    res = solve_mountain_pass(p, grid=explicit_grid(cfg, p.N), options=solver_options(cfg))
    rec = res.to_record()
    out.result(rec)
    out.series(["r", "u"], profile_rows(res.profile))
    save_profile(out.dir / "profile.npz", res.profile, p)
    print(f"level = {res.level:.12g}  bound = {res.bound:.12g}  gap = {res.gap_to_bound:.6g}")
    if not (res.level > 0 and res.gap_to_bound > 0):
        raise CheckFailure(f"0 < level < m(c) + S^(N/2)/N fails: level {res.level:.10g}, "
                           f"bound {res.bound:.10g}")
    return EXIT_OK


def cmd_fiber(cfg, out: Output) -> int:
    from .fibermap import FiberCoeffs, critical_points, fiber_eval
    p = problem_params(cfg)
    given = [cfg[f"fiber.{k}"] for k in "ABC"]
    if all(v is not None for v in given):
        co = FiberCoeffs(*given)
        cp = critical_points(co, p)
        out.result({"coefficients": asdict(co), "critical_points": asdict(cp)})
        s = np.geomspace(cp.s_minus / 4, cp.s_plus * 2, 200)
        out.series(["s", "psi", "psi_prime"],
                   ([float(x), *fiber_eval(co, float(x), p)[:2]] for x in s))
        print(f"s- = {cp.s_minus:.10g}  s+ = {cp.s_plus:.10g}")
        return EXIT_OK
    if any(v is not None for v in given):
        raise UsageError("set all of fiber.A, fiber.B, fiber.C or none of them")
    # random structural check in the two-root regime
    rng = np.random.default_rng(cfg["solver.seed"])
    failures, rows = 0, []
    for _ in range(cfg["fiber.samples"]):
        co = random_two_root_coeffs(rng, p)
        cp = critical_points(co, p)
        beyond = fiber_eval(co, 2 * cp.s_plus, p).psi_prime
        ok = cp.second_deriv_at_minus > 0 > cp.second_deriv_at_plus and beyond < 0
        failures += not ok
        rows.append([co.A, co.B, co.C, cp.s_minus, cp.s_plus, int(ok)])
    out.result({"samples": len(rows), "failures": failures})
    out.series(["A", "B", "C", "s_minus", "s_plus", "ok"], rows)
    print(f"{len(rows)} samples, {failures} failures")
    if failures:
        raise CheckFailure(f"{failures} instances without the two-root structure")
    return EXIT_OK


def random_two_root_coeffs(rng, params):
    """Random (A, B, C) with A above the peak threshold of theta."""
    from .fibermap import FiberCoeffs, theta, theta_maximizer
    B, C = np.exp(rng.uniform(-3, 3, size=2))
    probe = FiberCoeffs(1.0, float(B), float(C))
    s_star = theta_maximizer(probe, params)
    need = 1.0 - theta(probe, s_star, params)  # theta is affine in A with slope 1
    A = need * math.exp(rng.uniform(0.01, 2.0))
    return FiberCoeffs(float(A), float(B), float(C))


def cmd_bubble(cfg, out: Output) -> int:
    from .bubble import asymptotic_exponents, bubble_norms
    p = problem_params(cfg)
    eps = sorted(cfg["bubble.eps"], reverse=True)
    fits = asymptotic_exponents(eps, p)
    out.result({name: asdict(f) for name, f in fits.items()})
    out.series(["eps", "grad_sq", "mass_sq", "lq_pow", "crit_pow", "grad_excess",
                "crit_deficit"], ([e, *bubble_norms(e, p)] for e in eps))
    tol = cfg["bubble.tolerance"]
    bad = [n for n, f in fits.items()
           if abs(f.exponent - f.expected) > tol or f.log_detected != f.expected_log]
    for n, f in fits.items():
        print(f"{n:13s} exponent {f.exponent:.4f} (expected {f.expected:g}"
              f"{', log' if f.expected_log else ''})  log detected: {f.log_detected}")
    if bad:
        raise CheckFailure(f"exponent table mismatch for {', '.join(bad)}")
    return EXIT_OK


def cmd_path(cfg, out: Output) -> int:
    from .pathlab import build_and_check_path, exponent_battle
    p = problem_params(cfg)
    opts = solver_options(cfg)
    if cfg["path.mode"] == "battle":
        try:
            rep = exponent_battle(p, cfg["path.battle_eps"], options=opts)
        except CheckFailure as exc:
            rep = getattr(exc, "report", None)
            if p.N == 3 and rep is not None:
                # no sign claim at N = 3: reported, not asserted
                out.result({**rep.to_record(), "note": "not-certified (N=3)"})
                out.series(["eps", "combination"], zip(rep.eps, rep.combination))
                print("combination not negative; not-certified (N=3)")
                return EXIT_OK
            raise
        out.result(rep.to_record())
        out.series(["eps", "combination"], zip(rep.eps, rep.combination))
        print(f"crossover eps = {rep.crossover:.6g}")
        return EXIT_OK
    if cfg["path.mode"] != "path":
        raise UsageError(f"path.mode must be 'path' or 'battle', got {cfg['path.mode']!r}")
    rep = build_and_check_path(p, cfg["path.eps"], options=opts, n_nodes=cfg["path.nodes"])
    out.result(rep.to_record())
    out.series(["t", "mass", "F_mu", "superadditive_bound"],
               zip(rep.t_nodes, rep.masses, rep.energies, rep.superadditive_bounds))
    print(f"max F = {rep.max_energy:.12g}  bound = {rep.bound:.12g}  gap = {rep.gap:.6g}"
          + (f"  {rep.note}" if rep.note else ""))
    if rep.certified and not rep.below_bound:
        raise CheckFailure(f"path maximum {rep.max_energy:.10g} not below {rep.bound:.10g}")
    return EXIT_OK


def cmd_evolve(cfg, out: Output) -> int:
    from .dynamics import (ComplexField, conservation_check, evolve, h1_distance_mod_phase,
                           h1_norm, instability_experiment)
    from .solvers import solve_ground_state, solve_mountain_pass
    p = problem_params(cfg)
    opts = solver_options(cfg)
    mode = cfg["dynamics.mode"]
    if mode == "ground":
        gs = solve_ground_state(p, options=opts)
        u = gs.profile
        st = evolve(ComplexField.from_real(u), cfg["dynamics.T"], cfg["dynamics.dt"], p,
                    output_every=cfg["dynamics.output_every"], absorb=cfg["dynamics.absorb"])
        rep = conservation_check(st)
        dist = h1_distance_mod_phase(st.final, u)
        thr = cfg["dynamics.delta"] * h1_norm(u)
        out.result({"trajectory": st.to_record(), "conservation": asdict(rep),
                    "final_h1_distance_mod_phase": dist, "threshold": thr,
                    "lambda": gs.multiplier})
        out.series(["t", "mass", "energy", "grad_sq", "sup_amp"],
                   zip(st.times, st.mass, st.energy, st.grad_norm_sq, st.sup_amplitude))
        print(f"mass drift {rep.mass_drift:.3e}  energy drift {rep.energy_drift:.3e}  "
              f"H1 distance {dist:.3e} (threshold {thr:.3e})")
        if st.blowup_detected or dist > thr:
            raise CheckFailure("ground-state evolution left the proximity tube")
        return EXIT_OK
    if mode == "instability":
        gs = solve_ground_state(p, options=opts)
        mp = solve_mountain_pass(p, ground=gs, options=opts)
        T = cfg["dynamics.T"]
        dt = min(cfg["dynamics.dt"], 1e-4)
        try:
            table = instability_experiment(p, mp.profile, cfg["dynamics.dilations"],
                                           T_max=T, dt=dt)
        except CheckFailure as exc:
            out.series(*_table_csv(exc.table))
            raise
        out.result(table.to_record())
        out.series(*_table_csv(table))
        for r in table.rows:
            when = "none" if r.blowup_time is None else f"{r.blowup_time:.4g}"
            print(f"t = {r.dilation:g}: blow-up at {when} ({r.trigger})")
        return EXIT_OK
    raise UsageError(f"dynamics.mode must be 'ground' or 'instability', got {mode!r}")


def _table_csv(table):
    header = ["dilation", "energy", "s_plus", "virial", "blowup_detected", "blowup_time"]
    rows = [[r.dilation, r.energy, r.s_plus, r.virial, int(r.blowup_detected),
             r.blowup_time if r.blowup_time is not None else math.nan] for r in table.rows]
    return header, rows


def cmd_sweep(cfg, out: Output) -> int:
    from .solvers import asymptotic_sweep, m_curve
    p = problem_params(cfg)
    opts = solver_options(cfg)
    mode = cfg["sweep.mode"]
    values = cfg["sweep.values"]
    if mode == "m_curve":
        pts = m_curve(p, sorted(values), opts)
        rows = [[x.c, x.m, x.lam, x.d, int(x.certificate.valid)] for x in pts]
        out.result({"points": [dict(zip(("c", "m", "lambda", "d", "valid"), r)) for r in rows]})
        out.series(["c", "m", "lambda", "d", "valid"], rows)
        return EXIT_OK
    res = asymptotic_sweep(mode, p, values, opts)
    out.result(res.to_record())
    out.series(["parameter", "grad_sq", "level", "mu_lq", "valid"],
               ([r.parameter, r.grad_sq, r.level, r.mu_lq, int(r.valid)] for r in res.rows))
    dg, dl = res.final_deviation()
    print(f"final deviation: grad {dg:.3%}  level {dl:.3%}")
    return EXIT_OK


def cmd_certify(cfg, out: Output) -> int:
    from .energy import ProblemParams, certify
    path = cfg["certify.profile"]
    if path is None:
        raise UsageError("certify needs --profile or certify.profile")
    u, stored = load_profile(path)
    p = problem_params(cfg)
    if p.N != int(stored[0]):
        raise UsageError(f"profile is for N={int(stored[0])}, config has N={p.N}")
    if all(cfg[f"problem.{k}"] == SCHEMA[f"problem.{k}"][1] for k in ("mu", "q", "c")):
        p = ProblemParams(int(stored[0]), *stored[1:])  # nothing overridden: use stored
    cert = certify(u, p, tol_E=cfg["solver.tol_E"])
    out.result({**cert.summary(), "failures": cert.failures()})
    print("VALID" if cert.valid else "INVALID: " + "; ".join(cert.failures()))
    if cert.valid:
        return EXIT_OK
    out.diagnostic(EXIT_CHECK, CheckFailure("certificate INVALID"),
                   {"failures": cert.failures()})
    return EXIT_CHECK


HANDLERS = {"ground": cmd_ground, "mpass": cmd_mpass, "fiber": cmd_fiber, "bubble": cmd_bubble,
            "path": cmd_path, "evolve": cmd_evolve, "sweep": cmd_sweep, "certify": cmd_certify}


# --- entry point -------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nlsnorm", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="file of 'section.key = value' lines")
    ap.add_argument("--N", type=int)
    ap.add_argument("--mu", type=float)
    ap.add_argument("--q", type=float)
    ap.add_argument("--c", type=float)
    ap.add_argument("--Rmax", type=float)
    ap.add_argument("--M", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    ap.add_argument("--profile", help="stored profile (.npz) for certify")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override any configuration key")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(argv=None) -> int:
    out = None
    cfg = None
    command = "usage"
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        file_values = read_config_file(args.config) if args.config else {}
        overrides = {key: getattr(args, flag) for flag, key in FLAG_KEYS.items()}
        for item in args.set:
            k, sep, v = item.partition("=")
            if not sep:
                raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
            file_values[k.strip()] = v.strip()
        cfg = resolve_config(file_values, overrides)
        problem_params(cfg)  # validate early
        out = Output(cfg, args.command)
        return HANDLERS[args.command](cfg, out)
    except (UsageError, InvalidArgument, OSError) as exc:
        code, err = EXIT_USAGE, exc
    except CheckFailure as exc:
        code, err = EXIT_CHECK, exc
    except (NumericError, NlsNormError, ArithmeticError, np.linalg.LinAlgError) as exc:
        code, err = EXIT_NUMERIC, exc
    print(f"error: {err}", file=sys.stderr)
    details = None
    for attr in ("report", "table"):
        obj = getattr(err, attr, None)
        if obj is not None and hasattr(obj, "to_record"):
            details = obj.to_record()
    if code == EXIT_NUMERIC:
        details = {"traceback": traceback.format_exception_only(type(err), err), **(details or {})}
    if out is None and cfg is None:
        # failure before the output directory is known: fall back to --out or cwd
        target = Path(_out_from_argv(argv) or ".")
        target.mkdir(parents=True, exist_ok=True)
        cfg_stub = {k: d for k, (_, d) in SCHEMA.items()}
        cfg_stub["output.dir"] = str(target)
        out = Output.__new__(Output)
        out.dir, out.cfg, out.command = target, cfg_stub, command
    elif out is None:
        out = Output(cfg, command)
    out.diagnostic(code, err, details)
    return code


def _out_from_argv(argv):
    argv = list(sys.argv[1:] if argv is None else argv)
    for i, a in enumerate(argv):
        if a == "--out" and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith("--out="):
            return a.split("=", 1)[1]
    return None


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
