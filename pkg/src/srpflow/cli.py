"""Command-line entry point: ``srpflow <run|mms-time|mms-space|cylinder|check> --config FILE``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, parse_config
from .mms import ManufacturedCase, check_forcing
from .rheology import check_monotonicity

log = logging.getLogger("srpflow")

COMMANDS = ("run", "mms-time", "mms-space", "cylinder", "check")


def provenance(cfg: RunConfig, variant: str, extra=()) -> list[str]:
    lines = [
        f"srpflow {__version__}",
        f"config_hash {cfg.config_hash()}",
        f"variant {variant}",
        f"mesh {cfg.mesh_identity()}",
        f"experiment {cfg.experiment}",
    ]
    if not cfg.deterministic:
        lines.append(f"created {time.strftime('%Y-%m-%dT%H:%M:%S')}")
    return lines + list(extra)


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    log.info("wrote %s", path)
    return path


def _case(cfg: RunConfig) -> ManufacturedCase:
    return ManufacturedCase(law=cfg.law(), rho=cfg.rho)


def _label(cfg: RunConfig) -> str:
    mode = {"explicit": "ex", "implicit": "im", "newton": "newton"}
    return f"{cfg.variant}_{mode[cfg.convection_strategy.split('_')[0]]}"


# -- commands ------------------------------------------------------------------------------


def cmd_check(cfg: RunConfig, out: Path) -> int:
    t0 = time.perf_counter()
    fc = check_forcing(_case(cfg), final_time=cfg.final_time)
    mono = check_monotonicity(cfg.law(), 10_000)
    ok = fc.passed and mono.passed
    lines = [
        f"forcing_vs_fd_oracle points={fc.points} max_rel_error={fc.max_rel_error:.3e} "
        f"{'PASS' if fc.passed else 'FAIL'}",
        f"monotonicity samples={mono.samples} min_value={mono.min_value:.3e} "
        f"{'PASS' if mono.passed else 'FAIL'}",
    ]
    if not cfg.deterministic:
        lines.append(f"elapsed {time.perf_counter() - t0:.2f}s")
    lines.append("preflight " + ("PASS" if ok else "FAIL"))
    text = "\n".join(lines) + "\n"
    print(text, end="")
    _write(out, "preflight.txt", text)
    return 0 if ok else 1


def cmd_mms_time(cfg: RunConfig, out: Path) -> int:
    from .mms import run_time_convergence

    t0 = time.perf_counter()
    label = _label(cfg)
    table = run_time_convergence(cfg.scheme_config(dt=max(cfg.dts)), cfg.dts, cfg.load_mesh(), _case(cfg),
                                 cfg.final_time, label)
    extra = [] if cfg.deterministic else [f"wall_time {time.perf_counter() - t0:.1f}s"]
    _write(out, f"mms_time_{label}.csv", table.to_csv(provenance(cfg, label, extra)))
    return 0


def cmd_mms_space(cfg: RunConfig, out: Path) -> int:
    from .mms import run_space_convergence

    label = _label(cfg)
    tmpl = cfg.scheme_config(dt=cfg.space_dt, final_time=cfg.space_dt * cfg.space_steps)
    runs = [(label, tmpl)] + ([("mixed", None)] if cfg.space_oracle else [])
    for name, t in runs:
        t0 = time.perf_counter()
        table = run_space_convergence(t, cfg.ns, cfg.space_dt, cfg.space_steps, _case(cfg), name)
        extra = [f"dt {cfg.space_dt!r}", f"steps {cfg.space_steps}"]
        if not cfg.deterministic:
            extra.append(f"wall_time {time.perf_counter() - t0:.1f}s")
        _write(out, f"mms_space_{name}.csv", table.to_csv(provenance(cfg, name, extra)))
    return 0


def cmd_run(cfg: RunConfig, out: Path) -> int:
    from .mms import ErrorAccumulator
    from .scheme import ProjectionScheme
    from .vtk import write_vtk

    case = _case(cfg)
    mesh = cfg.load_mesh()
    scfg = cfg.scheme_config()
    scheme = ProjectionScheme(case.problem(mesh), scfg)
    state = scheme.initial_state(lambda x, y: case.velocity(0.0, x, y), lambda x, y: case.pressure(0.0, x, y))
    acc = ErrorAccumulator(case, scfg.dt)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["step", "t", "vel_L2", "vel_H1", "pre_L2", "fixed_point_iterations"]
    if not cfg.deterministic:
        cols.append("wall_time")
    w.writerow(cols)
    for k in range(1, scfg.n_steps + 1):
        state, rep = scheme.advance(state)
        acc.add(state.t, state.u, state.p)
        e = acc.steps[-1]
        row = [k, repr(state.t), repr(e.vel_L2), repr(e.vel_H1), repr(e.pre_L2), rep.fixed_point_iterations]
        if not cfg.deterministic:
            row.append(f"{rep.wall_time:.3f}")
        w.writerow(row)
        if cfg.snapshot_period and k % cfg.snapshot_period == 0:
            out.mkdir(parents=True, exist_ok=True)
            write_vtk({"velocity": state.u, "pressure": state.p}, mesh, out / f"snapshot_{k:05d}.vtk",
                      f"t={state.t!r}")
    norms = acc.result()
    extra = [f"{k} {getattr(norms, k)!r}" for k in ("vel_l2L2", "vel_l2H1", "vel_linfLinf", "pre_l2L2", "pre_linfLinf")]
    head = "".join(f"# {line}\n" for line in provenance(cfg, _label(cfg), extra))
    _write(out, "run.csv", head + buf.getvalue())
    return 0


def cmd_cylinder(cfg: RunConfig, out: Path) -> int:
    from .bench import BenchConfig, bench_csv, bench_row, run_cylinder, select_drag_formula

    mesh = cfg.load_mesh()
    scfg = cfg.scheme_config()
    label = _label(cfg)
    reports = {}
    benches = {}
    for m in cfg.m_values:
        b = BenchConfig.carreau(m, cfg.cu, cfg.re, steady_tol=cfg.steady_tol, window=cfg.window,
                                max_time=cfg.max_time)
        log.info("cylinder case m=%g C_U=%g", m, cfg.cu)
        benches[m], reports[m] = b, run_cylinder(b, scfg, mesh)
    formula = select_drag_formula(reports[1.0]) if 1.0 in reports else "traction_x"
    rows = [bench_row(benches[m], reports[m], formula) for m in cfg.m_values]
    _write(out, f"cylinder_{label}.csv", bench_csv(rows, provenance(cfg, label, [f"drag_formula {formula}"])))
    detail = io.StringIO()
    w = csv.writer(detail, lineterminator="\n")
    w.writerow(["m", "solver", "cd_paper", "cd_traction_x", "L_center", "L_surface", "steps", "steady"])
    for m in cfg.m_values:
        for name, r in (("srp", reports[m]), ("ssmix", reports[m].reference)):
            lc = r.wake.center if r.wake else float("nan")
            w.writerow([repr(m), name, repr(r.cd_paper), repr(r.cd_traction), repr(lc), repr(r.wake_surface),
                        r.steps, r.steady])
    head = "".join(f"# {line}\n" for line in provenance(cfg, label))
    _write(out, f"cylinder_{label}_detail.csv", head + detail.getvalue())
    return 0


HANDLERS = {"run": cmd_run, "mms-time": cmd_mms_time, "mms-space": cmd_mms_space,
            "cylinder": cmd_cylinder, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="srpflow", description="Projection schemes for generalized Newtonian flow.")
    ap.add_argument("--version", action="version", version=f"srpflow {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}")
    for c in COMMANDS:
        p = sub.add_parser(c)
        p.add_argument("--config", required=True, help="flat key = value configuration file")
        p.add_argument("--output-dir", help="override output_dir from the config")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    path = Path(args.config)
    if not path.is_file():
        ap.print_usage(sys.stderr)
        print(f"srpflow: error: config file {args.config!r} not found", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(path)
        if args.command != "check":
            cfg = replace(cfg, experiment=args.command)
    except ConfigError as e:
        print(f"srpflow: config error in {path}: {e}", file=sys.stderr)
        return 2
    out = Path(args.output_dir or cfg.output_dir)
    try:
        return HANDLERS[args.command](cfg, out)
    except Exception as e:  # runtime failures map to exit code 1
        log.debug("failure", exc_info=True)
        print(f"srpflow: {args.command} failed: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
