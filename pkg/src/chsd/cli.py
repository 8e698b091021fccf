"""Command-line surface.

Exit codes: 0 success, 2 config/validation failure, 3 solver failure.
All outputs land in the configured output directory (CHSD_OUT overrides).
"""

import argparse
import os
import sys

from . import analysis, io_cli, mesh as mesh_mod, scheme
from .errors import ChsdError, DegenerateBox, MisalignedSplit, ParseError, ValidationError


def _build_parser():
    p = argparse.ArgumentParser(prog="chsd",
                                description="Cahn-Hilliard-Stokes-Darcy simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one configured run")
    run.add_argument("config")

    conv = sub.add_parser("converge", help="MMS refinement ladder")
    conv.add_argument("config")
    conv.add_argument("--ladder", choices=("temporal", "spatial"), default="temporal")
    conv.add_argument("--levels", type=int, default=4)

    audit = sub.add_parser("energy-audit", help="unforced energy-decay audit")
    audit.add_argument("config")
    audit.add_argument("--taus", default="1e-3,1e-2,1e-1",
                       help="comma-separated time steps")

    dump = sub.add_parser("mesh-dump", help="write the mesh as plain text")
    dump.add_argument("config")
    return p


def _outdir(config):
    d = io_cli.output_dir(config)
    os.makedirs(d, exist_ok=True)
    return d


def cmd_run(args):
    config = io_cli.load_config(args.config)
    out = _outdir(config)
    traj = scheme.run(config)
    io_cli.write_timeseries_csv(traj, os.path.join(out, "timeseries.csv"))
    if config.extra_diagnostics:
        io_cli.write_stability_csv(traj, os.path.join(out, "stability.csv"))
    if config.vtk_every:
        m = _mesh_of(config)
        for k, state in traj.states:
            io_cli.write_vtk(state, m, os.path.join(out, f"state_{k:06d}.vtk"))
    if traj.mms_errors is not None:
        for name, value in traj.mms_errors.items():
            print(f"{name} = {io_cli.fmt(value)}")
    if traj.failure:
        print(f"solver failure: {traj.failure}", file=sys.stderr)
        return 3
    return 0


def _mesh_of(config):
    m = mesh_mod.build_karst_mesh(config.nx, config.ny, config.split_y, config.bbox)
    for _ in range(config.refinements):
        m = mesh_mod.refine_uniform(m)
    return m


def cmd_converge(args):
    config = io_cli.load_config(args.config)
    out = _outdir(config)
    table = analysis.convergence_study(config, ladder=args.ladder, levels=args.levels)
    path = os.path.join(out, f"convergence_{args.ladder}.csv")
    io_cli.write_error_table_csv(table, path)
    for col, slope in table.slopes.items():
        print(f"slope[{col}] = {io_cli.fmt(slope)}")
    if any(row["status"] != "ok" for row in table.levels):
        print("one or more ladder levels failed", file=sys.stderr)
        return 3
    return 0


def cmd_energy_audit(args):
    config = io_cli.load_config(args.config)
    out = _outdir(config)
    taus = [float(t) for t in args.taus.split(",") if t]
    if not taus:
        raise ValidationError("taus", "need at least one time step")
    report_lines = []
    code = 0
    for tau in taus:
        cfg = config.replace(tau=tau, mms=False)
        traj = scheme.run(cfg)
        tag = io_cli.fmt(tau)
        io_cli.write_timeseries_csv(traj, os.path.join(out, f"timeseries_tau{tag}.csv"))
        if traj.failure:
            report_lines.append(f"tau={tag}: FAILED ({traj.failure})")
            code = 3
            continue
        e = [row["energy_total"] for row in traj.diagnostics]
        tol = 1e-12 * e[0] if e[0] > 0 else 1e-12
        upticks = sum(1 for a, b in zip(e, e[1:]) if b > a + tol)
        mass = [row["mass"] for row in traj.diagnostics]
        drift = max(abs(mv - mass[0]) for mv in mass)
        report_lines.append(
            f"tau={tag}: steps={traj.num_steps} upticks={upticks} "
            f"mass_drift={io_cli.fmt(drift)}")
    report = "\n".join(report_lines) + "\n"
    with open(os.path.join(out, "energy_audit.txt"), "w", encoding="utf-8") as fh:
        fh.write(report)
    print(report, end="")
    return code


def cmd_mesh_dump(args):
    config = io_cli.load_config(args.config)
    out = _outdir(config)
    with open(os.path.join(out, "mesh.txt"), "w", encoding="utf-8") as fh:
        fh.write(mesh_mod.dump_text(_mesh_of(config)))
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "converge": cmd_converge,
                "energy-audit": cmd_energy_audit, "mesh-dump": cmd_mesh_dump}
    try:
        return handlers[args.command](args)
    except (ParseError, ValidationError, MisalignedSplit, DegenerateBox,
            FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ChsdError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
