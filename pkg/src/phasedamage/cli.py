"""Command-line interface.

Exit codes: 0 success, 1 solver failure, 2 invalid input (configuration,
files, flags), 3 audit failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .exceptions import ConfigError, PhaseDamageError, SimulationError, SnapshotFormatError
from .io import (RunManifest, config_hash, output_dir, parse_config, read_diagnostics,
                 read_trajectory, write_snapshot, write_trajectory)
from .timeloop import epsilon_sweep, run_simulation
from .verify import audit_assumptions, audit_weak_solution

EXIT_OK, EXIT_SOLVER, EXIT_INVALID, EXIT_AUDIT = 0, 1, 2, 3


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _fail(code: int, msg: str) -> int:
    print(f"phasedamage: error: {msg}", file=sys.stderr)
    return code


def _parse_eps(text: str) -> List[float]:
    try:
        return [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid epsilon list {text!r}") from None


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------
def cmd_run(args) -> int:
    cfg = parse_config(args.config)
    out = output_dir(args.out, default=str(Path("runs") / Path(args.config).stem))
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config_hash(cfg), start_time=_now(), seed=cfg.seed)

    def progress(rec):
        if not args.quiet:
            print(f"step {rec.step:6d}  t={rec.time:.6g}  E={rec.total:.10g}  "
                  f"min z={rec.min_z:.6f}", file=sys.stderr)

    try:
        traj = run_simulation(cfg, out_dir=out, progress=progress)
    except SimulationError as exc:
        manifest.end_time, manifest.outcome = _now(), f"solver failure: {exc}"
        manifest.write(out / "manifest.json")
        return _fail(EXIT_SOLVER, f"{exc} (last good state written to {out / 'last_good.snap'})")
    write_trajectory(traj, out)
    flagged = traj.violations
    manifest.end_time = _now()
    manifest.outcome = "success" if not flagged else f"success ({len(flagged)} flagged steps)"
    manifest.extra = {"n_steps": cfg.n_steps, "final_energy": traj.records[-1].total}
    manifest.write(out / "manifest.json")
    for step, what in flagged:
        print(f"warning: step {step}: {what}", file=sys.stderr)
    print(f"wrote {len(traj.states) - 1} steps to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    out = output_dir(args.out, default=str(Path("runs") / f"{Path(args.config).stem}-sweep"))
    try:
        report = epsilon_sweep(cfg, args.eps, workers=args.workers)
    except SimulationError as exc:
        return _fail(EXIT_SOLVER, str(exc))
    out.mkdir(parents=True, exist_ok=True)
    rows = report.rows()
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        wr.writeheader()
        for r in rows:
            wr.writerow({k: repr(v) for k, v in r.items()})
    for e in report.entries:
        write_snapshot(e.final, out / f"final_eps_{e.epsilon:.0e}.snap", cfg.grid.build())
    print(f"{'epsilon':>10} {'max W1p':>12} {'max eps^1/4|grad u|_4':>22} {'max eps int|grad u|^4':>22}")
    for e in report.entries:
        print(f"{e.epsilon:10.1e} {e.max_w1p:12.6g} {e.max_quartic_norm:22.6g} "
              f"{e.max_quartic_energy:22.6g}")
    print(f"quartic term decreasing: {report.quartic_decreasing}; "
          f"W1p max/min ratio: {report.w1p_ratio:.4g}; "
          f"Cauchy differences decreasing: {report.cauchy_decreasing}")
    return EXIT_OK


def cmd_audit(args) -> int:
    traj = read_trajectory(args.trajectory)
    report = audit_weak_solution(traj)
    summary = report.summary()
    if args.json:
        print(json.dumps({"passed": report.passed, "summary": summary,
                          "violations": [vars(v) for v in report.violations]},
                         indent=2, default=float))
    else:
        for k, v in summary.items():
            print(f"{k:>24}: {v:.6g}" if isinstance(v, float) else f"{k:>24}: {v}")
        for note in report.notes:
            print(f"note: {note}")
        for v in report.violations[:args.max_report]:
            node = "" if v.node is None else f" node {v.node}"
            print(f"VIOLATION step {v.step}{node}: {v.kind} = {v.value:.6g}")
        extra = len(report.violations) - args.max_report
        if extra > 0:
            print(f"... and {extra} more")
    if not report.passed:
        print(f"phasedamage: audit failed: {', '.join(sorted(report.kinds()))}",
              file=sys.stderr)
        return EXIT_AUDIT
    print("audit passed")
    return EXIT_OK


def cmd_check_material(args) -> int:
    cfg = parse_config(args.config)
    report = audit_assumptions(cfg.mat, sample_count=args.samples, seed=args.seed)
    for line in report.lines():
        print(line)
    if not report.passed:
        failed = [r.name for r in report.results if not r.passed]
        print(f"phasedamage: material check failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


_CURVES = {
    "energy": ("total", "gradient_c", "gradient_z", "chemical", "elastic", "quartic_reg",
               "ledger_cumulative"),
    "minz": ("min_z", "max_dz"),
}


def cmd_plot(args) -> int:
    path = Path(args.diagnostics)
    if path.is_dir():
        path = path / "diagnostics.csv"
    try:
        records = read_diagnostics(path)
    except OSError as exc:
        return _fail(EXIT_INVALID, f"cannot read {path}: {exc.strerror}")
    except (KeyError, ValueError) as exc:
        return _fail(EXIT_INVALID, f"{path}: malformed diagnostics CSV ({exc})")
    if not records:
        return _fail(EXIT_INVALID, f"{path}: no diagnostics rows")
    out = Path(args.out) if args.out else path.parent
    out.mkdir(parents=True, exist_ok=True)
    n_comp = len(records[0].masses)
    curves = dict(_CURVES, mass=tuple(f"mass_{k + 1}" for k in range(n_comp)))
    written = []
    for name, cols in curves.items():
        target = out / f"{name}.dat"
        with open(target, "w", encoding="utf-8") as fh:
            fh.write("# step time " + " ".join(cols) + "\n")
            for r in records:
                row = r.as_row()
                fh.write(f"{r.step} {r.time!r} " + " ".join(repr(row[c]) for c in cols) + "\n")
        written.append(target)
    if args.png:
        try:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            return _fail(EXIT_INVALID, "--png needs matplotlib (pip install phasedamage[plot])")
        t = [r.time for r in records]
        for name, cols in curves.items():
            fig, ax = plt.subplots(figsize=(6, 4))
            for c in cols:
                ax.plot(t, [r.as_row()[c] for r in records], label=c)
            ax.set_xlabel("t")
            ax.legend(fontsize="small")
            fig.tight_layout()
            fig.savefig(out / f"{name}.png", dpi=120)
            plt.close(fig)
            written.append(out / f"{name}.png")
    for w in written:
        print(w)
    return EXIT_OK


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phasedamage", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver details")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    r = sub.add_parser("run", help="simulate and write trajectory plus diagnostics")
    r.add_argument("config", help="TOML configuration file")
    r.add_argument("--out", help="output directory (default: $PHASEDAMAGE_OUT or runs/<name>)")
    r.add_argument("-q", "--quiet", action="store_true", help="no per-step progress")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="repeat a run for decreasing epsilon")
    s.add_argument("config")
    s.add_argument("--eps", required=True, type=_parse_eps,
                   help="comma-separated decreasing list, e.g. 1e-2,1e-3,1e-4,1e-5")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("audit", help="recheck a stored trajectory")
    a.add_argument("trajectory", help="trajectory directory (or its trajectory.json)")
    a.add_argument("--json", action="store_true", help="machine-readable report")
    a.add_argument("--max-report", type=int, default=20, help="violations to list")
    a.set_defaults(func=cmd_audit)

    m = sub.add_parser("check-material", help="sample the constitutive assumptions")
    m.add_argument("config")
    m.add_argument("--samples", type=int, default=10_000)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_check_material)

    pl = sub.add_parser("plot", help="energy, mass and min-z curves from a diagnostics CSV")
    pl.add_argument("diagnostics", help="diagnostics.csv or a run directory")
    pl.add_argument("--out", help="output directory (default: next to the CSV)")
    pl.add_argument("--png", action="store_true", help="also render PNG images (matplotlib)")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints usage itself
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SnapshotFormatError) as exc:
        return _fail(EXIT_INVALID, str(exc))
    except (ValueError, OSError) as exc:
        return _fail(EXIT_INVALID, str(exc))
    except SimulationError as exc:
        return _fail(EXIT_SOLVER, str(exc))
    except PhaseDamageError as exc:
        return _fail(EXIT_SOLVER, str(exc))


if __name__ == "__main__":
    sys.exit(main())
