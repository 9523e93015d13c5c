"""Command-line entry point: ``sps-radial {solve,shoot,scaling,asymptotics,verify-all}``.

Configuration is a flat ``key = value`` file (``#`` starts a comment).
Exit codes: 0 success, 1 solver failure (non-convergence, bracket or
integrator failure, or a failed acceptance criterion in ``verify-all``),
2 invalid configuration.  Every error also writes one JSON line to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .asymptotics import (
    alpha_mass,
    decay_fit,
    effective_w,
    envelope_check,
    potential_expansion_check,
    wkb_compensation,
)
from .energy import ModelParams
from .errors import ConfigError, InvalidParameterError, SPSError
from .groundstate import SolverConfig, minimize, scaling_law_check, unit_ground_state
from .hartree import hartree_potential
from .radial_core import RadialField, make_grid, write_fields_csv
from .shooting import bisect_q0, normalize_multiplier, self_consistent_solve

log = logging.getLogger("sps_radial")

COMMANDS = ("solve", "shoot", "scaling", "asymptotics", "verify-all")

DEFAULTS = {
    "mass": 1.0,
    "c_s": 1.0,
    "epsilon": 1,
    "r_max": 30.0,
    "n": 3000,
    "step": 1.0,
    "tol": 1e-8,
    "max_iter": 5000,
    "window_lo": None,  # r_max / 3
    "window_hi": None,  # 2 r_max / 3
    "damping": 1.0,
    "masses": (0.5, 1.0, 2.0),
    "scale_step": False,
}

# solves of the unit-multiplier state use at least this tolerance
UNIT_TOL = 1e-10


def _float(key, text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _int(key, text):
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None
    if value != int(value):
        raise ConfigError(f"{key}: expected an integer, got {text!r}")
    return int(value)


def _bool(key, text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _floats(key, text):
    parts = [t for t in text.replace(",", " ").split() if t]
    if not parts:
        raise ConfigError(f"{key}: expected a list of numbers")
    return tuple(_float(key, t) for t in parts)


PARSERS = {
    "mass": _float,
    "c_s": _float,
    "epsilon": _int,
    "r_max": _float,
    "n": _int,
    "step": _float,
    "tol": _float,
    "max_iter": _int,
    "window_lo": _float,
    "window_hi": _float,
    "damping": _float,
    "masses": _floats,
    "scale_step": _bool,
}


@dataclass(frozen=True)
class Options:
    """Parsed configuration: the solver config plus command options."""

    solver: SolverConfig
    window: tuple
    damping: float
    masses: tuple
    scale_step: bool
    raw: dict


def parse_config_text(text: str) -> Options:
    values = dict(DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = PARSERS[key](key, val)
    return _build(values)


def parse_config(path) -> Options:
    if path is None:
        return _build(dict(DEFAULTS))
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config_text(text)


def _build(v: dict) -> Options:
    try:
        params = ModelParams(C_S=v["c_s"], epsilon=v["epsilon"])
        grid = make_grid(v["r_max"], v["n"])
        solver = SolverConfig(
            M=v["mass"], params=params, grid=grid, step=v["step"], tol=v["tol"], max_iter=v["max_iter"]
        )
    except InvalidParameterError as exc:
        raise ConfigError(str(exc)) from None
    lo = v["window_lo"] if v["window_lo"] is not None else grid.r_max / 3.0
    hi = v["window_hi"] if v["window_hi"] is not None else 2.0 * grid.r_max / 3.0
    if not (0 < lo < hi <= grid.r_max):
        raise ConfigError(f"window must satisfy 0 < window_lo < window_hi <= r_max, got ({lo}, {hi})")
    if not (0 < v["damping"] <= 1):
        raise ConfigError(f"damping must lie in (0, 1], got {v['damping']}")
    if any(not (np.isfinite(m) and m > 0) for m in v["masses"]):
        raise ConfigError(f"masses must be positive, got {v['masses']}")
    return Options(solver, (lo, hi), v["damping"], tuple(v["masses"]), v["scale_step"], v)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _r17(x):
    if isinstance(x, float):
        return float(format(x, ".17g"))
    if isinstance(x, dict):
        return {k: _r17(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_r17(v) for v in x]
    return x


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_r17(obj), indent=2) + "\n")


def _unit(opts: Options):
    cfg = opts.solver
    return unit_ground_state(
        cfg.params, cfg.grid, tol=min(cfg.tol, UNIT_TOL), step=cfg.step, max_iter=cfg.max_iter
    )


def cmd_solve(opts: Options, out: Path) -> int:
    gs = minimize(opts.solver)
    gs.export(out, "ground_state")
    if gs.multiplier > 0:
        P = normalize_multiplier(gs.Q, gs.multiplier)
        write_fields_csv({"P": P, "V": hartree_potential(P).V}, out / "ground_state_unit.csv")
    else:
        log.warning("multiplier %.3g <= 0: the minimiser is confined by the grid, no unit-multiplier export",
                    gs.multiplier)
    print(f"I_M = {gs.I_M:.12g}  multiplier = {gs.multiplier:.12g}  residual = {gs.residual:.3e}  "
          f"iterations = {gs.iterations}")
    return 0


def cmd_shoot(opts: Options, out: Path) -> int:
    p = opts.solver.params
    unit = _unit(opts)
    P = unit.P
    V = hartree_potential(P).V
    q = P.value_at_origin()
    q0, res = bisect_q0(V, p, P.grid, (0.5 * q, 2.0 * q))
    res.export(out, "shooting")
    sol = self_consistent_solve(p, P.grid, opts.damping, P, V)
    write_fields_csv({"Q": sol.Q, "V": sol.V, "Q_minimizer": P}, out / "self_consistent.csv")
    diff = float(np.max(np.abs(sol.Q.values - P.values)))
    _write_json(out / "self_consistent.json", {
        "q0": sol.q0,
        "q0_frozen_potential": q0,
        "iterations": sol.iterations,
        "increments": list(sol.increments),
        "match_radius": sol.match_radius,
        "max_diff_to_minimizer": diff,
        "mass_of_unit_state": unit.ground.M,
    })
    print(f"q0* = {sol.q0:.12g}  outer iterations = {sol.iterations}  max |Q - P| = {diff:.3e}")
    return 0


def cmd_scaling(opts: Options, out: Path) -> int:
    rep = scaling_law_check(opts.masses, opts.solver, scale_step=opts.scale_step)
    _write_json(out / "scaling_report.json", rep.to_dict())
    for row in rep.rows:
        print(f"M = {row.M:<10.6g} I_M = {row.I_M:<22.15g} I_M/M^6 = {row.ratio:.15g}")
    print(f"max relative deviation {rep.max_deviation:.3e} (tolerance {rep.tolerance:g}): "
          f"{'ok' if rep.ok else 'NOT within tolerance'}")
    return 0


def cmd_asymptotics(opts: Options, out: Path) -> int:
    p = opts.solver.params
    P = _unit(opts).P
    V = hartree_potential(P).V
    alpha = alpha_mass(P)
    fit = decay_fit(P, p.epsilon, opts.window)
    fit.export(out / "decay_fit.json")
    expansion = potential_expansion_check(V, alpha)
    W = effective_w(P, V, p)
    wkb = wkb_compensation(P, W, opts.window[0])
    r = P.grid.nodes
    closed = np.where(P.values > 0, P.values * r ** fit.exponent * np.exp(r), 0.0)
    write_fields_csv(
        {"Q": P, "V": V, "W": W, "compensated": RadialField(P.grid, closed), "wkb": wkb},
        out / "asymptotics.csv",
    )
    _write_json(out / "asymptotics.json", {
        "decay_fit": fit.to_dict(),
        "potential_expansion": expansion.to_dict(),
        "envelope_ok": envelope_check(P),
    })
    print(f"alpha = {alpha:.12g}  drift = {fit.drift:.4g}  limit = {fit.limit_estimate:.8g}  "
          f"pass = {fit.passed}")
    return 0


def cmd_verify_all(opts: Options, out: Path, seed: int) -> int:
    from .verification import run_all

    results = run_all(seed)
    for res in results:
        print(res.line(), flush=True)
    report = [{k: v for k, v in res.to_dict().items() if k != "seconds"} for res in results]
    _write_json(out / "acceptance.json", {"seed": seed, "criteria": report})
    failed = [res.key for res in results if not res.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria pass"
          + (f"; failing: {', '.join(failed)}" if failed else ""))
    return 1 if failed else 0


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_path: Optional[str]
    output_dir: str
    seed: int = 0


def _diagnostic(kind: str, exc: BaseException, code: int) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc), "exit_code": code}) + "\n")


def run(manifest: RunManifest) -> int:
    if manifest.command not in COMMANDS:
        _diagnostic("ConfigError", ConfigError(f"unknown command {manifest.command!r}"), 2)
        return 2
    try:
        opts = parse_config(manifest.config_path)
        out = Path(manifest.output_dir)
        out.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        _diagnostic("ConfigError", exc, 2)
        return 2
    except OSError as exc:
        _diagnostic("ConfigError", ConfigError(f"output directory: {exc}"), 2)
        return 2
    try:
        if manifest.command == "solve":
            return cmd_solve(opts, out)
        if manifest.command == "shoot":
            return cmd_shoot(opts, out)
        if manifest.command == "scaling":
            return cmd_scaling(opts, out)
        if manifest.command == "asymptotics":
            return cmd_asymptotics(opts, out)
        return cmd_verify_all(opts, out, manifest.seed)
    except InvalidParameterError as exc:
        _diagnostic(type(exc).__name__, exc, 2)
        return 2
    except SPSError as exc:
        _diagnostic(type(exc).__name__, exc, 1)
        return 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sps-radial", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="flat key = value configuration file")
    ap.add_argument("--out", default=".", help="output directory (default: current directory)")
    ap.add_argument("--seed", type=int, default=0, help="seed for the randomised checks")
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return run(RunManifest(args.command, args.config, args.out, args.seed))


if __name__ == "__main__":
    sys.exit(main())
