"""Command-line front end.

Subcommands::

    meanvort run --config FILE
    meanvort degenerate --config FILE [--compare DIR]
    meanvort check DIR
    meanvort sweep --config FILE --vary key=v1,v2,... [--vary ...] [--jobs N]

Exit status: 0 success, 2 configuration or usage error, 3 solver error,
4 failed check.  ``MEANVORT_OUT`` overrides ``outputs.dir``.
"""

from __future__ import annotations

import argparse
import itertools
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, ValidationError, dump_config, parse_config, parse_config_text
from .degenerate import DegenerateNumerics, DegenerateSetup, degenerate_kappa, degenerate_solution
from .diagnostics import CSV_HEADER, DiagnosticsRecorder, format_value, lp_norm, rows_to_csv
from .elliptic import EllipticOptions, reconstruct_velocity
from .errors import MeanvortError, RegimeMismatch
from .evolution import RunAborted, StepOptions, initial_state, run
from .fields import Grid2D, ModelParams, Regime, State, flat_pinning, make_pinning
from .presets import cosine_potential, preset_forcing, preset_initial, random_potential
from .snapshot import SnapshotError, read_snapshot, write_snapshot

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4

MASS_TOL = 1e-10
POSITIVITY_TOL = 1e-12
MARGIN_TOL = 1.05


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# scenario assembly


@dataclass
class Scenario:
    grid: Grid2D
    params: ModelParams
    pin: object
    psi: np.ndarray
    omega0: np.ndarray
    zeta0: np.ndarray
    step_opts: StepOptions
    elliptic_opts: EllipticOptions


def _load_field(cfg, key, grid, kind):
    path = cfg.resolve_path(cfg[key])
    try:
        g, _, data = read_snapshot(path)
    except (OSError, SnapshotError) as exc:
        raise ValidationError(key, f"cannot read snapshot: {exc}") from None
    expected = (grid.n, grid.n) if kind == "scalar" else (2, grid.n, grid.n)
    if g.n != grid.n or data.shape != expected:
        raise ValidationError(key, f"snapshot does not match a {kind} field on the n={grid.n} grid")
    return data


def build_scenario(cfg) -> Scenario:
    """Turn a validated configuration into solver inputs."""
    grid = Grid2D(cfg["grid.n"], cfg["grid.l"])
    params = ModelParams(cfg["params.alpha"], cfg["params.beta"], cfg["params.lambda"], cfg["params.regime"])
    preset = cfg["pinning.preset"]
    amp = cfg["pinning.amplitude"]
    try:
        if preset == "none":
            pin = flat_pinning(grid)
        elif preset == "cosine":
            pin = make_pinning(grid, cosine_potential(grid, amp))
        elif preset == "random":
            pin = make_pinning(grid, random_potential(grid, amp, seed=cfg["seed"]))
        else:
            pin = make_pinning(grid, _load_field(cfg, "pinning.path", grid, "scalar"))
    except (ValueError, OverflowError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError("pinning.amplitude", str(exc)) from None
    if cfg["forcing.preset"] == "file":
        psi = _load_field(cfg, "forcing.path", grid, "vector")
    else:
        psi = preset_forcing(grid, cfg["forcing.preset"], cfg["forcing.amplitude"], pin)
    center = (cfg["initial.center_x"] * grid.l, cfg["initial.center_y"] * grid.l)
    try:
        omega0, zeta0 = preset_initial(
            grid,
            cfg["initial.preset"],
            c=cfg["initial.c"],
            radius=cfg["initial.radius"],
            sigma=cfg["initial.sigma"],
            center=center,
            normalize=cfg["initial.normalize"],
            zeta_amplitude=cfg["initial.zeta_amplitude"],
        )
    except ValueError as exc:
        raise ValidationError("initial.preset", str(exc)) from None
    if not params.compressible:
        zeta0 = np.zeros_like(zeta0)
    step_opts = StepOptions(
        cfl=cfg["time.cfl"],
        dt_max=cfg["time.dt_max"],
        limiter=cfg["solver.limiter"],
        zeta_scheme=cfg["solver.zeta_scheme"],
    )
    max_iter = cfg["solver.max_iter"] or None
    elliptic_opts = EllipticOptions(tol=cfg["solver.tol"], max_iter=max_iter)
    return Scenario(grid, params, pin, psi, omega0, zeta0, step_opts, elliptic_opts)


# --------------------------------------------------------------------------
# output helpers


def _versions() -> str:
    return (
        f"meanvort {__version__}; numpy {np.__version__}; scipy {scipy.__version__}; "
        f"python {platform.python_version()}"
    )


def _write_manifest(out: Path, cfg, extra: dict) -> None:
    lines = ["# meanvort run manifest", f"versions = {_versions()}"]
    lines += [f"{k} = {v}" for k, v in extra.items()]
    lines.append("")
    lines.append("# configuration")
    lines.append(dump_config(cfg))
    (out / "manifest.txt").write_text("\n".join(lines))


def _snapshot_name(kind: str, index: int) -> str:
    return f"{kind}_{index:05d}.mvf"


def _write_plotdata(out: Path, rows) -> None:
    for name in CSV_HEADER[1:]:
        if name == "p":
            continue
        lines = [f"# t {name}"]
        lines += [f"{format_value(r.t)} {format_value(getattr(r, name))}" for r in rows]
        (out / f"plot_{name}.dat").write_text("\n".join(lines) + "\n")


def _prepare_output(cfg) -> Path:
    out = cfg.output_dir()
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ValidationError("outputs.dir", f"not writable: {exc}") from None
    return out


# --------------------------------------------------------------------------
# run


def cmd_run(cfg) -> int:
    sc = build_scenario(cfg)
    out = _prepare_output(cfg)
    (out / "config.txt").write_text(dump_config(cfg))
    write_snapshot(out / "h.mvf", sc.grid, 0.0, sc.pin.h)
    write_snapshot(out / "psi.mvf", sc.grid, 0.0, sc.psi)

    recorder = DiagnosticsRecorder(sc.pin, sc.psi, sc.params, sc.omega0, p=cfg["solver.lp"])
    rows = []
    csv_path = out / "diagnostics.csv"
    csv_file = open(csv_path, "w") if cfg["outputs.emit_csv"] else None
    if csv_file:
        csv_file.write(",".join(CSV_HEADER) + "\n")
    counter = itertools.count()

    def emit(new_rows):
        for r in new_rows:
            rows.append(r)
            if csv_file:
                csv_file.write(",".join(format_value(x) for x in r.values()) + "\n")
                csv_file.flush()

    def on_snapshot(state: State):
        k = next(counter)
        if cfg["outputs.emit_snapshots"]:
            write_snapshot(out / _snapshot_name("omega", k), sc.grid, state.t, state.omega)
            write_snapshot(out / _snapshot_name("v", k), sc.grid, state.t, state.v)
            if sc.params.compressible:
                write_snapshot(out / _snapshot_name("zeta", k), sc.grid, state.t, state.zeta)
        emit(recorder.add(state))

    start = time.perf_counter()
    status = "ok"
    code = EXIT_OK
    try:
        state0 = initial_state(sc.omega0, sc.zeta0, sc.pin, sc.params, sc.elliptic_opts)
        traj = run(
            state0, sc.pin, sc.psi, sc.params, cfg["time.T"], sc.step_opts, sc.elliptic_opts,
            snapshot_stride=cfg["time.snapshot_stride"], on_snapshot=on_snapshot,
        )
        steps = len(traj.diagnostics_rows) - 1
    except RunAborted as exc:
        status = f"aborted: {exc.cause}"
        code = EXIT_SOLVER
        steps = len(exc.trajectory.diagnostics_rows) - 1
        print(f"meanvort: solver error: {exc.cause}", file=sys.stderr)
    except MeanvortError as exc:
        status = f"aborted: {exc}"
        code = EXIT_SOLVER
        steps = 0
        print(f"meanvort: solver error: {exc}", file=sys.stderr)
    emit(recorder.finish())
    if csv_file:
        csv_file.close()
    if cfg["outputs.emit_plotdata"]:
        _write_plotdata(out, rows)
    _write_manifest(
        out,
        cfg,
        {
            "command": "run",
            "status": status,
            "steps": steps,
            "snapshots": len(rows),
            "wall_clock_seconds": f"{time.perf_counter() - start:.3f}",
        },
    )
    return code


# --------------------------------------------------------------------------
# degenerate


def _exact_kappa(f0: float, g0: float, t: float) -> float:
    """Factor for constant ``f = f0``, ``g = g0``."""
    c = f0 + g0
    if f0 == 0:
        return 1.0
    if g0 == 0:
        return 1.0 / (1.0 + f0 * t)
    if c == 0:
        return math.nan
    y = math.exp(g0 * t) * (1.0 + f0 / g0) - f0 / g0
    return 1.0 + (f0 / c) * (1.0 / y - 1.0)


def _load_run_snapshots(run_dir: Path, kind: str):
    out = {}
    for path in sorted(run_dir.glob(f"{kind}_*.mvf")):
        g, t, data = read_snapshot(path)
        out[t] = (g, data)
    return out


def cmd_degenerate(cfg, compare: Path | None = None) -> int:
    if cfg["params.regime"] != Regime.DEGENERATE_PARABOLIC.value:
        raise RegimeMismatch("the degenerate command needs params.regime = degenerate_parabolic")
    sc = build_scenario(cfg)
    out = _prepare_output(cfg)
    (out / "config.txt").write_text(dump_config(cfg))
    grid = sc.grid
    numerics = DegenerateNumerics(
        ds=cfg["degenerate.ds"] or None, interpolation=cfg["degenerate.interpolation"]
    )
    reference = None
    if compare is not None:
        if not compare.is_dir():
            raise UsageError(f"--compare: {compare} is not a directory")
        reference = _load_run_snapshots(compare, "v")
        if not reference:
            raise UsageError(f"--compare: no velocity snapshots in {compare}")

    start = time.perf_counter()
    scenario = cfg["degenerate.scenario"]
    header = "t,kappa_min,kappa_max,kappa_mean,kappa_exact,v_rel_l2_diff"
    lines = [header]
    if scenario == "constant_f":
        f0, g0 = cfg["degenerate.f0"], cfg["degenerate.g0"]
        setup = DegenerateSetup(
            grid, np.stack([-sc.psi[1], sc.psi[0]]), np.full((grid.n, grid.n), f0),
            np.full((grid.n, grid.n), g0), numerics.interpolation,
        )
        for k, t in enumerate(cfg["degenerate.times"]):
            kappa = degenerate_kappa(setup, t, numerics)
            write_snapshot(out / _snapshot_name("kappa", k), grid, t, kappa)
            lines.append(
                ",".join(
                    format_value(x)
                    for x in (t, kappa.min(), kappa.max(), kappa.mean(), _exact_kappa(f0, g0, t), math.nan)
                )
            )
    else:
        v0, _ = reconstruct_velocity(sc.omega0, np.zeros_like(sc.omega0), sc.pin, sc.elliptic_opts)
        bg = cfg["degenerate.background"]
        background = float(np.mean(sc.omega0)) if bg == "auto" else float(bg)
        exact = 1.0 if not np.any(sc.omega0) else math.nan
        for k, t in enumerate(cfg["degenerate.times"]):
            v, kappa = degenerate_solution(v0, sc.psi, grid, t, numerics, background)
            write_snapshot(out / _snapshot_name("v", k), grid, t, v)
            write_snapshot(out / _snapshot_name("kappa", k), grid, t, kappa)
            diff = math.nan
            if reference is not None:
                for t_ref, (g_ref, v_ref) in reference.items():
                    if abs(t_ref - t) <= 1e-9 * max(1.0, t) and g_ref.n == grid.n:
                        diff = float(np.linalg.norm(v - v_ref) / max(np.linalg.norm(v), 1e-300))
                        break
            lines.append(
                ",".join(format_value(x) for x in (t, kappa.min(), kappa.max(), kappa.mean(), exact, diff))
            )
    (out / "degenerate.csv").write_text("\n".join(lines) + "\n")
    _write_manifest(
        out,
        cfg,
        {
            "command": "degenerate",
            "status": "ok",
            "compare": str(compare) if compare else "",
            "wall_clock_seconds": f"{time.perf_counter() - start:.3f}",
        },
    )
    return EXIT_OK


# --------------------------------------------------------------------------
# check


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_run_dir(run_dir: Path) -> list[CheckResult]:
    """Recompute diagnostics from stored snapshots and evaluate the hard invariants."""
    if not run_dir.is_dir():
        raise UsageError(f"{run_dir} is not a directory")
    config_path = run_dir / "config.txt"
    if not config_path.is_file():
        raise UsageError(f"{run_dir} does not contain a run (config.txt missing)")
    cfg = parse_config_text(config_path.read_text(), base_dir=run_dir, check_paths=False)
    omegas = sorted(run_dir.glob("omega_*.mvf"))
    if not omegas:
        raise UsageError(f"{run_dir} contains no density snapshots")
    grid, _, h = read_snapshot(run_dir / "h.mvf")
    _, _, psi = read_snapshot(run_dir / "psi.mvf")
    pin = make_pinning(grid, h)
    params = ModelParams(cfg["params.alpha"], cfg["params.beta"], cfg["params.lambda"], cfg["params.regime"])

    states = []
    for path in omegas:
        idx = path.stem.split("_")[1]
        _, t, omega = read_snapshot(path)
        _, _, v = read_snapshot(run_dir / f"v_{idx}.mvf")
        zpath = run_dir / f"zeta_{idx}.mvf"
        zeta = read_snapshot(zpath)[2] if zpath.exists() else np.zeros_like(omega)
        states.append(State(t, omega, zeta, v))
    omega0 = states[0].omega
    recorder = DiagnosticsRecorder(pin, psi, params, omega0, p=cfg["solver.lp"])
    rows = []
    for s in states:
        rows.extend(recorder.add(s))
    rows.extend(recorder.finish())

    results = []
    m0 = rows[0].mass
    drift = max(abs(r.mass - m0) for r in rows) / abs(m0) if m0 else max(abs(r.mass) for r in rows)
    results.append(CheckResult("mass", drift <= MASS_TOL, f"max relative drift {drift:.3e}"))
    if cfg["solver.limiter"] != "none":
        low = min(float(np.min(s.omega)) for s in states)
        results.append(CheckResult("positivity", low >= -POSITIVITY_TOL, f"min omega {low:.3e}"))
    margins = [r.margin_r44_sharp for r in rows if r.t > 0 and not math.isnan(r.margin_r44_sharp)]
    if margins:
        worst = max(margins)
        results.append(CheckResult("decay_sharp", worst <= MARGIN_TOL, f"max margin {worst:.4f}"))
    univ = [r.margin_r44_univ for r in rows if r.t > 0 and not math.isnan(r.margin_r44_univ)]
    if univ:
        worst = max(univ)
        results.append(CheckResult("decay_universal", worst <= MARGIN_TOL, f"max margin {worst:.4f}"))
    (run_dir / "check.csv").write_text(rows_to_csv(rows))
    return results


def cmd_check(run_dir: Path) -> int:
    results = check_run_dir(run_dir)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


# --------------------------------------------------------------------------
# sweep


def _parse_vary(spec: str):
    if "=" not in spec:
        raise UsageError(f"--vary expects key=v1,v2,..., got {spec!r}")
    key, values = spec.split("=", 1)
    items = [v.strip() for v in values.split(",") if v.strip()]
    if not items:
        raise UsageError(f"--vary {key}: no values given")
    return key.strip(), items


def _sweep_child(args) -> int:
    text, base_dir, out_dir = args
    cfg = parse_config_text(text, base_dir=Path(base_dir))
    os.environ["MEANVORT_OUT"] = out_dir
    try:
        return cmd_run(cfg)
    finally:
        os.environ.pop("MEANVORT_OUT", None)


def cmd_sweep(config_path: Path, varies: list[str], jobs: int = 1) -> int:
    cfg = parse_config(config_path)
    axes = [_parse_vary(v) for v in varies]
    base_out = cfg.output_dir()
    base_text = dump_config(cfg)
    tasks = []
    for combo in itertools.product(*[[(k, v) for v in vals] for k, vals in axes]):
        text = base_text
        for key, value in combo:
            text = _override(text, key, value)
        # Validate every variant before launching anything.
        parse_config_text(text, base_dir=cfg.base_dir)
        name = "_".join(f"{k}={v}" for k, v in combo)
        tasks.append((text, str(cfg.base_dir), str(base_out / name)))
    if jobs <= 1:
        codes = [_sweep_child(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            codes = list(pool.map(_sweep_child, tasks))
    for (_, _, out), code in zip(tasks, codes):
        print(f"{out}: exit {code}")
    return max(codes) if codes else EXIT_OK


def _override(text: str, key: str, value: str) -> str:
    lines = text.splitlines()
    for i, line in enumerate(lines):
        if line.split("=", 1)[0].strip() == key:
            lines[i] = f"{key} = {value}"
            return "\n".join(lines) + "\n"
    raise ValidationError(key, "unknown key")


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meanvort", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="evolve a configured scenario")
    p_run.add_argument("--config", required=True, type=Path)
    p_deg = sub.add_parser("degenerate", help="explicit solver for the degenerate regime")
    p_deg.add_argument("--config", required=True, type=Path)
    p_deg.add_argument("--compare", type=Path, default=None, help="run directory to compare against")
    p_chk = sub.add_parser("check", help="recompute diagnostics of a run directory")
    p_chk.add_argument("dir", type=Path)
    p_swp = sub.add_parser("sweep", help="run a parameter sweep")
    p_swp.add_argument("--config", required=True, type=Path)
    p_swp.add_argument("--vary", required=True, action="append")
    p_swp.add_argument("--jobs", type=int, default=1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if args.command == "run":
            return cmd_run(parse_config(args.config))
        if args.command == "degenerate":
            return cmd_degenerate(parse_config(args.config), args.compare)
        if args.command == "check":
            return cmd_check(args.dir)
        return cmd_sweep(args.config, args.vary, args.jobs)
    except (ConfigError, UsageError, RegimeMismatch) as exc:
        print(f"meanvort: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MeanvortError, SnapshotError) as exc:
        print(f"meanvort: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
