"""Command-line interface: ``vns run|init|diagnose|probe-rmu|commutator-probe``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .cli_io import (
    ConfigError,
    SnapshotError,
    csv_text,
    parse_config,
    read_snapshot,
    state_from_snapshot,
    write_csv,
    write_snapshot,
)
from .diagnostics import DiagnosticsRecord, compute_record
from .elliptic_ops import ViscosityBounds

EXIT_BLOWUP = 2
EXIT_ERROR = 1


def _load(args):
    cfg = parse_config(args.config)
    if getattr(args, "print_config", False):
        sys.stdout.write(cfg.normalized())
        return cfg, True
    return cfg, False


def cmd_run(args) -> int:
    from .experiments import build_initial
    from .solver import BlowupError, run

    cfg, done = _load(args)
    if done:
        return 0
    out = Path(args.out or cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    state, scfg = build_initial(cfg)
    every = cfg["output.snapshot_every"]
    written = {"next": 0.0, "count": 0, "last": None}

    def on_sample(s, rec):
        if every is not None and s.t + 1e-12 >= written["next"]:
            path = write_snapshot(out / f"snapshot_{written['count']:05d}.vns", s)
            written["count"] += 1
            written["next"] += every
            written["last"] = path

    sha = cfg.sha256()
    try:
        traj = run(state, scfg, on_sample=on_sample)
    except BlowupError as exc:
        path = write_snapshot(out / "last_good.vns", exc.last_good)
        print(f"blow-up guard tripped at t = {exc.t:.6g}; last good sample: {path}", file=sys.stderr)
        return EXIT_BLOWUP
    write_csv(out / "diagnostics.csv", "diagnostics", DiagnosticsRecord.columns(),
              (r.values() for r in traj.diagnostics), sha)
    final = write_snapshot(out / "final.vns", traj.final)
    print(f"completed t = {traj.final.t:.6g} in {traj.steps} steps; wrote {out / 'diagnostics.csv'} and {final}")
    return 0


def cmd_init(args) -> int:
    from .experiments import build_initial

    cfg, done = _load(args)
    if done:
        return 0
    state, _ = build_initial(cfg)
    path = write_snapshot(args.output, state)
    print(f"wrote {path}")
    return 0


def cmd_diagnose(args) -> int:
    snap = read_snapshot(args.snapshot)
    state = state_from_snapshot(snap)
    bounds = ViscosityBounds.from_field(state.mu)
    rec = compute_record(state.t, state.omega, state.mu, state.tau_bar, state.dtau_mu,
                         args.epsilon, bounds, 0.0, state.theta)
    sys.stdout.write(csv_text("diagnose", DiagnosticsRecord.columns(), [rec.values()]))
    return 0


def _csv_command(args, rows_fn, columns, kind) -> int:
    cfg, done = _load(args)
    if done:
        return 0
    rows = rows_fn(cfg)
    text = csv_text(kind, columns, rows, cfg.sha256())
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_probe(args) -> int:
    from .experiments import PROBE_COLUMNS, probe_rows

    return _csv_command(args, probe_rows, PROBE_COLUMNS, "probe-rmu")


def cmd_commutator(args) -> int:
    from .experiments import COMMUTATOR_COLUMNS, commutator_rows

    return _csv_command(args, commutator_rows, COMMUTATOR_COLUMNS, "commutator-probe")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vns", description="Variable-viscosity Navier-Stokes toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a simulation")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default: output.dir)")
    p.add_argument("--print-config", action="store_true", help="print the normalized config and exit")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("init", help="write the initial data as a snapshot")
    p.add_argument("config")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--print-config", action="store_true")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("diagnose", help="one diagnostics row for a snapshot")
    p.add_argument("snapshot")
    p.add_argument("--epsilon", type=float, default=0.5)
    p.set_defaults(func=cmd_diagnose)

    for name, func, text in (("probe-rmu", cmd_probe, "L^p probe sweep of the inverse operator"),
                             ("commutator-probe", cmd_commutator, "Riesz commutator ensemble")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config")
        p.add_argument("-o", "--output", help="CSV path (default: stdout)")
        p.add_argument("--print-config", action="store_true")
        p.set_defaults(func=func)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SnapshotError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
