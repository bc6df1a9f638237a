"""Command line interface: scenario runs, convergence studies, tableau dump.

Subcommands::

    mechanochem run <config> [--seed N] [--out-dir DIR] [--snapshot-every N]
                             [--sweeps N] [--mjcontrol on|off]
    mechanochem verify <space|time> <levels> [--out-dir DIR]
    mechanochem tableau

``MECHANOCHEM_OUT_DIR`` overrides the output directory (and nothing else).
A numerical abort (time-step underflow) exits nonzero and names the cause.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import vtkio
from .errors import MechanochemError, StepSizeUnderflow
from .integrator import StepRecord, tableau
from .scenario import ScenarioConfig, load_config, write_effective


def _out_dir(args_dir, cfg_dir):
    return Path(os.environ.get("MECHANOCHEM_OUT_DIR") or args_dir or cfg_dir)


def tableau_print(stream=None):
    """Dump the Butcher data to 16 significant digits."""
    stream = stream or sys.stdout
    tab = tableau()
    def row(label, vals):
        stream.write(f"{label:8s}" + "  ".join(f"{v:.16g}" for v in vals) + "\n")
    stream.write(f"gamma   {tab.gamma:.16g}\n")
    row("c", tab.c)
    for i in range(3):
        row(f"a[{i}]", tab.a[i])
    row("b", tab.b)
    row("bhat", tab.bhat)
    row("b-err", tab.err_weights)
    stream.write(f"predictor p31={tab.p31:.16g} p32={tab.p32:.16g} "
                 f"p33={tab.p33:.16g}\n")


def _write_summary(path, system, state):
    def row(fh, side, name, arr):
        fh.write(f"{side},{name},{float(arr.min())!r},{float(arr.max())!r},"
                 f"{float(arr.mean())!r}\n")

    with open(path, "w") as fh:
        fh.write("side,field,min,max,mean\n")
        for side in ("D", "E"):
            V = system.meshes[side].n_vertices
            w = state.step.w[system.slices[side]]
            for i in range(system.m):
                row(fh, side, f"w{i + 1}", w[i * V:(i + 1) * V])
            if state.u[side].size:
                ux = state.u[side][0:2 * V:2]
                uy = state.u[side][1:2 * V:2]
                row(fh, side, "u_magnitude", np.hypot(ux, uy))
                row(fh, side, "pressure", state.p[side])


def run_scenario(cfg: ScenarioConfig, out_dir: Path):
    """Execute one configured run; returns (exit_code, final state)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    write_effective(cfg, out_dir / "effective_config.ini")
    system, coupler, w0 = cfg.build()
    state = coupler.initial_state(w0, 0.0, cfg.dt_init)

    snap_idx = 0
    if cfg.snapshot_every > 0:
        vtkio.write_snapshot(out_dir, system, state, snap_idx)

    def callback(st, info):
        nonlocal snap_idx
        if cfg.snapshot_every > 0 and st.n_accepted % cfg.snapshot_every == 0:
            snap_idx += 1
            vtkio.write_snapshot(out_dir, system, st, snap_idx)

    status = 0
    cause = None
    try:
        coupler.run(state, cfg.t_final, callback=callback)
    except MechanochemError as exc:
        # numerical aborts (step-size underflow, state/model violations that
        # escape the rejection machinery) still leave the logs behind
        status = 2
        cause = exc

    with open(out_dir / "steps.csv", "w") as fh:
        fh.write(StepRecord.CSV_HEADER + "\n")
        for rec in coupler.stepper.records:
            fh.write(rec.csv_row() + "\n")
    with open(out_dir / "interface_residuals.csv", "w") as fh:
        fh.write("t,species_jump,robin_mismatch\n")
        for t, jump, robin in state.interface_log:
            fh.write(f"{t!r},{jump!r},{robin!r}\n")
    if cfg.snapshot_every > 0:
        vtkio.write_snapshot(out_dir, system, state, snap_idx + 1)
    _write_summary(out_dir / "summary.csv", system, state)
    if cause is not None:
        print(f"run aborted: {cause}", file=sys.stderr)
    return status, state


def cmd_run(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.snapshot_every is not None:
        cfg.snapshot_every = args.snapshot_every
    if args.sweeps is not None:
        cfg.sweeps = args.sweeps
    if args.mjcontrol is not None:
        cfg.mjcontrol = args.mjcontrol == "on"
    out_dir = _out_dir(args.out_dir, cfg.out_dir)
    status, state = run_scenario(cfg, out_dir)
    print(f"finished at t={state.step.t:.6g} after {state.n_accepted} accepted "
          f"steps -> {out_dir}")
    return status


def cmd_verify(args):
    from .verification import convergence_study

    if args.levels < 3:
        raise MechanochemError("convergence studies need at least 3 levels")
    study = convergence_study(args.kind, args.levels)
    print(study.table())
    out_dir = _out_dir(args.out_dir, "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"convergence_{args.kind}.csv"
    study.to_csv(csv_path)
    print(f"rate table written to {csv_path}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="mechanochem",
        description="Two-layer mechanochemical simulator (mixed FEM + adaptive TR-BDF2)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario configuration")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out-dir")
    p_run.add_argument("--snapshot-every", type=int)
    p_run.add_argument("--sweeps", type=int)
    p_run.add_argument("--mjcontrol", choices=("on", "off"))
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="manufactured-solution convergence study")
    p_ver.add_argument("kind", choices=("space", "time"))
    p_ver.add_argument("levels", type=int)
    p_ver.add_argument("--out-dir")
    p_ver.set_defaults(func=cmd_verify)

    p_tab = sub.add_parser("tableau", help="print the TR-BDF2 Butcher data")
    p_tab.set_defaults(func=lambda args: (tableau_print(), 0)[1])

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MechanochemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
