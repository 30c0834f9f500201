"""Command-line front end.

Subcommands: evolve (physical flow), rescaled (confined flow), obstacle
(stationary profile), verify (acceptance suite), sweep (parameter study).
Configuration comes from an optional ``key = value`` file plus flags; flags
override the file, the subcommand pins the mode, and every violation is
collected before reporting so a bad config fails once with the full list.

Exit codes, fixed for scripting: 0 success, 1 criterion failure,
2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .evolution import NumericalAbort, SolverConfig, exponents, run
from .fracops import FREESPACE, FracParams, make_operator
from .grid import Grid
from .io import (
    build_datum,
    parse_datum,
    write_diagnostics,
    write_snapshot,
)
from .obstacle import C_of_mass, ObstacleProblem, mass_law, solve_obstacle

EXIT_OK = 0
EXIT_CRITERION = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

RUN_MODES = ("physical", "rescaled", "obstacle", "verify", "sweep")
SWEEPABLE = ("N", "L", "s", "end_time", "C", "cfl_safety")


@dataclass
class RunConfig:
    n: int = 1
    s: float = 0.25
    mode: str = "physical"
    L: float = 6.0
    N: int = 256
    end_time: float = 1.0
    datum: str = "box(0,2,1)"
    out: str = "out"
    C: float | None = None
    M: float | None = None
    cfl_safety: float = 0.4
    snapshot_stride: int = 1
    snapshot_every: int = 50
    quick: bool = False
    allow_supercritical: bool = False
    sweep_key: str | None = None
    sweep_values: str | None = None
    sweep_mode: str | None = None


_BOOL_KEYS = {"quick", "allow_supercritical"}
_INT_KEYS = {"n", "N", "snapshot_stride", "snapshot_every"}
_FLOAT_KEYS = {"s", "L", "end_time", "C", "M", "cfl_safety"}
_KNOWN_KEYS = {f.name for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    raw = raw.strip()
    if key in _BOOL_KEYS:
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"{key} expects a boolean, got {raw!r}")
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    return raw


def parse_config(path: str | None, overrides: dict) -> tuple:
    """Merge config file and flag overrides into a RunConfig.

    Returns (config, violations).  The config is still returned when
    violations exist so callers can report against it; never run it."""
    violations = []
    cfg = RunConfig()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            return cfg, [f"config file: {exc}"]
        for lineno, line in enumerate(text.splitlines(), 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            key, sep, value = body.partition("=")
            key = key.strip()
            if not sep:
                violations.append(f"{path}:{lineno}: expected key = value, got {line!r}")
                continue
            if key not in _KNOWN_KEYS:
                violations.append(f"{path}:{lineno}: unknown key {key!r}")
                continue
            try:
                setattr(cfg, key, _coerce(key, value))
            except ValueError as exc:
                violations.append(f"{path}:{lineno}: {exc}")
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in _KNOWN_KEYS:
            violations.append(f"flag: unknown key {key!r}")
            continue
        if isinstance(value, str):
            try:
                value = _coerce(key, value)
            except ValueError as exc:
                violations.append(f"flag --{key.replace('_', '-')}: {exc}")
                continue
        setattr(cfg, key, value)
    violations.extend(validate_config(cfg))
    return cfg, violations


def validate_config(cfg: RunConfig) -> list:
    """Every constraint violated by cfg, in field order; empty means runnable."""
    bad = []
    if cfg.n not in (1, 2):
        bad.append(f"n must be 1 or 2, got {cfg.n}")
    if not 0.0 < cfg.s < 1.0:
        bad.append(f"s must lie in (0, 1), got {cfg.s}")
    elif cfg.n == 1 and cfg.s >= 0.5 and not cfg.allow_supercritical:
        bad.append(
            f"s = {cfg.s} violates the s < 1/2 restriction in one dimension "
            "(kernel positivity); pass --allow-supercritical to bypass"
        )
    if cfg.mode not in RUN_MODES:
        bad.append(f"mode must be one of {RUN_MODES}, got {cfg.mode!r}")
    if cfg.L <= 0.0:
        bad.append(f"L must be positive, got {cfg.L}")
    if cfg.N < 8 or cfg.N % 2:
        bad.append(f"N must be even and >= 8, got {cfg.N}")
    if cfg.end_time <= 0.0:
        bad.append(f"end_time must be positive, got {cfg.end_time}")
    try:
        parse_datum(cfg.datum)
    except ValueError as exc:
        bad.append(str(exc))
    if not 0.0 < cfg.cfl_safety <= 1.0:
        bad.append(f"cfl_safety must lie in (0, 1], got {cfg.cfl_safety}")
    if cfg.snapshot_stride < 1:
        bad.append(f"snapshot_stride must be >= 1, got {cfg.snapshot_stride}")
    if cfg.snapshot_every < 1:
        bad.append(f"snapshot_every must be >= 1, got {cfg.snapshot_every}")
    if cfg.mode == "obstacle":
        if (cfg.C is None) == (cfg.M is None):
            bad.append("obstacle mode needs exactly one of C, M")
        if cfg.M is not None and cfg.M <= 0.0:
            bad.append(f"M must be positive, got {cfg.M}")
    if cfg.mode == "sweep":
        if cfg.sweep_key is None or cfg.sweep_values is None:
            bad.append("sweep mode needs sweep_key and sweep_values")
        else:
            if cfg.sweep_key not in SWEEPABLE:
                bad.append(f"sweep_key must be one of {SWEEPABLE}, got {cfg.sweep_key!r}")
            else:
                try:
                    values = _sweep_values(cfg)
                except ValueError as exc:
                    bad.append(str(exc))
                else:
                    if len(values) < 2:
                        bad.append("sweep_values needs at least 2 values")
            if cfg.sweep_mode not in ("physical", "rescaled", "obstacle"):
                bad.append(
                    f"sweep_mode must be physical, rescaled or obstacle, got {cfg.sweep_mode!r}"
                )
    return bad


def _sweep_values(cfg: RunConfig) -> list:
    out = []
    for part in cfg.sweep_values.split(","):
        part = part.strip()
        if not part:
            continue
        out.append(int(part) if cfg.sweep_key == "N" else float(part))
    if not out:
        raise ValueError(f"sweep_values {cfg.sweep_values!r} parse to nothing")
    return out


def _machine_line(kind: str, detail: str) -> None:
    # single greppable failure line, format pinned for scripting
    print(f"FRACPME-FAIL {kind}: {detail}")


def cmd_evolve(cfg: RunConfig, mode: str) -> int:
    grid = Grid(cfg.n, cfg.L, cfg.N)
    name, args = parse_datum(cfg.datum)
    try:
        u0 = build_datum(name, args, grid)
    except (ValueError, OSError) as exc:
        _machine_line("config", str(exc))
        return EXIT_CONFIG
    params = FracParams(s=cfg.s, dim=cfg.n,
                        allow_supercritical=cfg.allow_supercritical)
    op = make_operator(grid, params, FREESPACE)
    exp = exponents(cfg.n, cfg.s)
    solver = SolverConfig(
        cfl_safety=cfg.cfl_safety, end_time=cfg.end_time,
        snapshot_stride=cfg.snapshot_stride,
    )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        traj = run(u0, mode, solver, op, exp)
    except NumericalAbort as exc:
        _machine_line("numerical", str(exc))
        return EXIT_NUMERICAL
    write_diagnostics(out / "diagnostics.csv", traj.diagnostics)
    last = len(traj.times) - 1
    for k, (t, snap) in enumerate(zip(traj.times, traj.snapshots)):
        if k % cfg.snapshot_every == 0 or k == last:
            write_snapshot(out / f"snapshot_{k:06d}.txt", snap,
                           s=cfg.s, time=t, mode=mode)
    print(f"{mode} run: {traj.steps} steps, {len(traj.times)} records -> {out}")
    return EXIT_OK


def cmd_obstacle(cfg: RunConfig) -> int:
    grid = Grid(cfg.n, cfg.L, cfg.N)
    exp = exponents(cfg.n, cfg.s)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if cfg.M is not None:
            # calibrate the mass law on this grid, then route through it
            unit = solve_obstacle(ObstacleProblem(C=1.0, a=exp.a, s=cfg.s, grid=grid))
            level = C_of_mass(cfg.M, cfg.n, cfg.s, unit.mass)
        else:
            level = cfg.C
        sol = solve_obstacle(ObstacleProblem(C=level, a=exp.a, s=cfg.s, grid=grid))
    except ValueError as exc:
        _machine_line("config", str(exc))
        return EXIT_CONFIG
    except RuntimeError as exc:
        _machine_line("numerical", str(exc))
        return EXIT_NUMERICAL
    write_snapshot(out / "pressure.txt", sol.pressure, s=cfg.s, time=0.0,
                   mode="obstacle")
    write_snapshot(out / "density.txt", sol.density, s=cfg.s, time=0.0,
                   mode="obstacle")
    report = [
        f"C: {sol.problem.C:.17g}",
        f"a: {sol.problem.a:.17g}",
        f"s: {cfg.s:.17g}",
        f"mass: {sol.mass:.17g}",
        f"contact_radius: {sol.contact_radius:.17g}",
        f"parabola_radius: {sol.problem.parabola_radius:.17g}",
        f"sweeps: {sol.sweeps}",
    ]
    report.extend(f"residual_{k}: {v:.6e}" for k, v in sorted(sol.residuals.items()))
    (out / "report.txt").write_text("\n".join(report) + "\n")
    print(f"obstacle solve: C = {sol.problem.C:.6g}, R = {sol.contact_radius:.6g}, "
          f"mass = {sol.mass:.6g} -> {out}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    from .verify import run_suite  # deferred: pulls in the whole stack

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    all_pass = run_suite(quick=cfg.quick, out_dir=out)
    return EXIT_OK if all_pass else EXIT_CRITERION


def cmd_sweep(cfg: RunConfig) -> int:
    values = _sweep_values(cfg)
    threads = os.environ.get("FRACPME_THREADS")
    workers = max(1, int(threads)) if threads else min(4, len(values))
    jobs = []
    for value in values:
        sub = replace(cfg, mode=cfg.sweep_mode,
                      out=str(Path(cfg.out) / f"{cfg.sweep_key}={value:g}"),
                      sweep_key=None, sweep_values=None, sweep_mode=None)
        setattr(sub, cfg.sweep_key, value)
        problems = validate_config(sub)
        if problems:
            _machine_line("config", f"{cfg.sweep_key}={value:g}: " + "; ".join(problems))
            return EXIT_CONFIG
        jobs.append((value, sub))

    def one(job):
        value, sub = job
        if sub.mode == "obstacle":
            return cmd_obstacle(sub)
        return cmd_evolve(sub, sub.mode)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        codes = list(pool.map(one, jobs))
    worst = max(codes)
    if (cfg.sweep_mode == "obstacle" and cfg.sweep_key == "C"
            and worst == EXIT_OK and len(values) >= 4):
        exp = exponents(cfg.n, cfg.s)
        grid = Grid(cfg.n, cfg.L, cfg.N)
        sols = [solve_obstacle(ObstacleProblem(C=v, a=exp.a, s=cfg.s, grid=grid))
                for v in values]
        try:
            slope, coeff = mass_law(sols)
        except ValueError as exc:
            _machine_line("config", f"mass-law study skipped: {exc}")
        else:
            text = f"exponent: {slope:.17g}\ncoefficient: {coeff:.17g}\n"
            (Path(cfg.out) / "mass_law.txt").write_text(text)
            print(f"mass law over C sweep: exponent {slope:.6g}, "
                  f"coefficient {coeff:.6g}")
    return worst


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracpme",
        description="Nonlocal porous-medium flow: evolution, stationary "
                    "profiles, and the verification suite.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in (
        ("evolve", "advance the physical flow"),
        ("rescaled", "advance the confined self-similar flow"),
        ("obstacle", "solve the stationary profile at level C (or mass M)"),
        ("verify", "run the acceptance suite"),
        ("sweep", "repeat a run over a list of parameter values"),
    ):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--n", type=int, help="space dimension (1 or 2)")
        p.add_argument("--s", type=float, help="fractional order in (0, 1)")
        p.add_argument("--mode", help="override run mode (rarely needed)")
        p.add_argument("--L", type=float, help="half-width of the box")
        p.add_argument("--N", type=int, help="cells per axis (even, >= 8)")
        p.add_argument("--end-time", type=float, dest="end_time")
        p.add_argument("--datum", help="box(c,w,h) | parabola_cap(a,b) | "
                                       "gaussian_truncated(sigma) | from_file(path)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--C", type=float, help="obstacle level")
        p.add_argument("--M", type=float, help="target mass (obstacle mode)")
        p.add_argument("--cfl", type=float, dest="cfl_safety")
        p.add_argument("--snapshot-stride", type=int, dest="snapshot_stride")
        p.add_argument("--snapshot-every", type=int, dest="snapshot_every")
        p.add_argument("--quick", action="store_const", const=True)
        p.add_argument("--allow-supercritical", action="store_const", const=True,
                       dest="allow_supercritical")
        p.add_argument("--sweep-key", dest="sweep_key", choices=SWEEPABLE)
        p.add_argument("--sweep-values", dest="sweep_values",
                       help="comma-separated list")
        p.add_argument("--sweep-mode", dest="sweep_mode",
                       choices=("physical", "rescaled", "obstacle"))
    return parser


_COMMAND_MODE = {"evolve": "physical", "rescaled": "rescaled",
                 "obstacle": "obstacle", "verify": "verify", "sweep": "sweep"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config") and v is not None}
    command_mode = _COMMAND_MODE[args.command]
    explicit = overrides.pop("mode", None)
    overrides["mode"] = command_mode  # the subcommand pins the mode
    cfg, violations = parse_config(args.config, overrides)
    if explicit is not None and explicit != command_mode:
        violations.append(
            f"--mode {explicit} conflicts with subcommand {args.command}"
        )
    if violations:
        for v in violations:
            _machine_line("config", v)
        return EXIT_CONFIG
    if cfg.mode in ("physical", "rescaled"):
        return cmd_evolve(cfg, cfg.mode)
    if cfg.mode == "obstacle":
        return cmd_obstacle(cfg)
    if cfg.mode == "verify":
        return cmd_verify(cfg)
    return cmd_sweep(cfg)


if __name__ == "__main__":
    sys.exit(main())
