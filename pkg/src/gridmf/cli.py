"""Command-line interface: simulate, attack, detect, montecarlo, report."""

from __future__ import annotations

import argparse
import io
import sys
from pathlib import Path

import numpy as np

from . import attack as attack_mod
from . import report as report_mod
from .detection import Thresholds, detect, verdict_to_csv
from .estimation import MeasurementLayout, build_h
from .grid import GridParseError, GridValidationError, load_grid
from .montecarlo import TrialConfig, run_montecarlo
from .refine import DEFAULT_EPSILON, refine, refinement_to_csv
from .simulate import (
    NoiseModel,
    evolve_state,
    read_snapshots,
    synthesize_true_state,
    time_series,
    write_snapshots,
)


class UsageError(Exception):
    """Command-line usage problem; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def _span(text: str) -> tuple[float, float]:
    low, _, high = text.partition(":")
    return float(low), float(high or low)


def _int_span(text: str) -> tuple[int, int]:
    low, _, high = text.partition(":")
    return int(low), int(high or low)


def _criteria(text: str) -> tuple[str, ...]:
    return tuple(token.strip() for token in text.split(",") if token.strip())


def _build_parser() -> _Parser:
    parser = _Parser(prog="gridmf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_grid(p: _Parser) -> None:
        p.add_argument("--grid", default="default7", help="grid file path or 'default7'")

    sim = sub.add_parser("simulate", help="emit three noisy snapshots", parents=[])
    add_grid(sim)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--sigma", type=float, default=0.002)
    sim.add_argument("--variation", type=float, default=0.05)
    sim.add_argument("--drift", type=float, default=0.1)
    sim.add_argument("--out", default=None, help="snapshot file (default: stdout)")

    att = sub.add_parser("attack", help="apply a residual-invariant attack to the last snapshot")
    att.add_argument("snapshots", help="snapshot file from 'simulate'")
    add_grid(att)
    att.add_argument("--seed", type=int, default=0)
    att.add_argument("--targets", type=_int_span, default=(1, 3), metavar="LO:HI")
    att.add_argument("--magnitude", type=_span, default=(0.05, 0.5), metavar="LO:HI")
    att.add_argument(
        "--compromise-prob", type=float, default=None, metavar="P",
        help="apply only voltage rows plus current rows with probability P "
        "(default: apply the full attack vector)",
    )
    att.add_argument("--instance", default=None, help="replay a stored attack instead of sampling")
    att.add_argument("--instance-out", default=None, help="write the sampled attack for replay")
    att.add_argument("--out", default=None, help="attacked snapshot file (default: stdout)")

    det = sub.add_parser("detect", help="run the detection pipeline on stored snapshots")
    det.add_argument("snapshots", help="snapshot file")
    add_grid(det)
    det.add_argument("--mode", choices=("1d", "2d"), default="2d")
    det.add_argument("--threshold", type=float, default=0.05, help="voltage anomaly threshold")
    det.add_argument("--current-threshold", type=float, default=0.05)
    det.add_argument("--criteria", type=_criteria, default=("v",), metavar="v,dci,cci")
    det.add_argument("--refine", action="store_true")
    det.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    det.add_argument("--out", default=None, help="verdict file (default: stdout summary only)")

    mc = sub.add_parser("montecarlo", help="run the full Monte Carlo experiment")
    add_grid(mc)
    mc.add_argument("--trials", type=int, default=1000)
    mc.add_argument("--seed", type=int, default=0)
    mc.add_argument("--sigma", type=float, default=0.002)
    mc.add_argument("--variation", type=float, default=0.05)
    mc.add_argument("--drift", type=float, default=0.1)
    mc.add_argument("--targets", type=_int_span, default=(1, 3), metavar="LO:HI")
    mc.add_argument("--magnitude", type=_span, default=(0.05, 0.5), metavar="LO:HI")
    mc.add_argument("--compromise-prob", type=float, default=0.7)
    mc.add_argument("--injection-prob", type=float, default=0.0)
    mc.add_argument("--threshold", type=float, default=0.05)
    mc.add_argument("--current-threshold", type=float, default=0.05)
    mc.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    mc.add_argument("--mode", choices=("1d", "2d"), default="2d")
    mc.add_argument("--criteria", type=_criteria, default=("v",), metavar="v,dci,cci")
    mc.add_argument("--refine", action="store_true")
    mc.add_argument("--workers", type=int, default=1)
    mc.add_argument("--format", choices=("table", "csv"), default="table")
    mc.add_argument("--out", default=None, help="write the stats CSV here as well")
    mc.add_argument("--figures", default=None, metavar="DIR", help="render PNG charts into DIR")

    rep = sub.add_parser("report", help="reformat a stored stats CSV")
    rep.add_argument("stats", help="stats CSV from 'montecarlo --out'")
    rep.add_argument("--format", choices=("table", "csv"), default="table")
    rep.add_argument("--figures", default=None, metavar="DIR")
    return parser


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _cmd_simulate(args: argparse.Namespace) -> int:
    topology = load_grid(args.grid)
    rng = np.random.default_rng(np.random.SeedSequence((args.seed, 0)))
    base = synthesize_true_state(topology, args.variation, rng)
    states = (
        base,
        evolve_state(topology, base, args.variation, rng, args.drift),
        evolve_state(topology, base, args.variation, rng, args.drift),
    )
    snapshots = time_series(topology, states, NoiseModel(sigma=args.sigma), rng)
    buffer = io.StringIO()
    write_snapshots(snapshots, buffer)
    _write_text(args.out, buffer.getvalue())
    return 0


def _cmd_attack(args: argparse.Namespace) -> int:
    topology = load_grid(args.grid)
    layout = MeasurementLayout.for_topology(topology)
    H = build_h(topology, layout)
    snapshots = read_snapshots(Path(args.snapshots).open())
    if not snapshots:
        raise ValueError("snapshot file holds no snapshots")
    rng = np.random.default_rng(np.random.SeedSequence((args.seed, 1)))
    if args.instance:
        c = attack_mod.read_instance_c(Path(args.instance).open())
        instance = attack_mod.instance_from_c(H, topology, c)
    else:
        lo, hi = args.targets
        count = int(rng.integers(lo, hi + 1)) if hi >= lo >= 1 else 0
        chosen = rng.choice(topology.bus_ids, size=count, replace=False) if count else ()
        spec = attack_mod.AttackSpec(
            target_buses=tuple(int(b) for b in sorted(chosen)),
            magnitude_range=args.magnitude,
        )
        instance = attack_mod.make_attack(H, topology, spec, rng)
    target = snapshots[-1]
    if args.compromise_prob is None:
        attacked = attack_mod.apply_attack(target, instance, layout)
    else:
        applied = np.zeros_like(instance.a)
        for row in sorted(instance.touched):
            d = layout.descriptors[row]
            if d.kind == "V" or (d.kind == "I" and rng.uniform() < args.compromise_prob):
                applied[row] = instance.a[row]
        attacked = layout.snapshot_of(layout.vector_of(target) + applied, target.time_index)
    buffer = io.StringIO()
    write_snapshots([*snapshots[:-1], attacked], buffer)
    _write_text(args.out, buffer.getvalue())
    if args.instance_out:
        with Path(args.instance_out).open("w") as stream:
            attack_mod.write_instance(instance, stream)
    return 0


def _cmd_detect(args: argparse.Namespace) -> int:
    topology = load_grid(args.grid)
    snapshots = read_snapshots(Path(args.snapshots).open())
    if args.mode == "2d" and len(snapshots) != 3:
        raise ValueError(f"2d mode needs 3 snapshots, file holds {len(snapshots)}")
    thresholds = Thresholds(voltage=args.threshold, current=args.current_threshold)
    verdict = detect(topology, snapshots, thresholds, mode=args.mode, criteria=args.criteria)
    text = verdict_to_csv(verdict)
    suspects = sorted(verdict.suspects)
    if args.refine:
        result = refine(verdict, topology, max(snapshots, key=lambda s: s.time_index), args.epsilon)
        text += "\n" + refinement_to_csv(verdict, result)
        suspects = sorted(result.final_suspects)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"{len(suspects)} suspects" + (f": {suspects}" if suspects else ""))
    return 0


def _cmd_montecarlo(args: argparse.Namespace) -> int:
    config = TrialConfig(
        grid=args.grid,
        trials=args.trials,
        seed=args.seed,
        sigma=args.sigma,
        variation=args.variation,
        drift_scale=args.drift,
        targets_min=args.targets[0],
        targets_max=args.targets[1],
        magnitude_low=args.magnitude[0],
        magnitude_high=args.magnitude[1],
        current_compromise_prob=args.compromise_prob,
        injection_compromise_prob=args.injection_prob,
        voltage_threshold=args.threshold,
        current_threshold=args.current_threshold,
        epsilon=args.epsilon,
        mode=args.mode,
        criteria=args.criteria,
        refine=args.refine,
        workers=args.workers,
    )
    stats = run_montecarlo(config)
    sys.stdout.write(report_mod.render_report(stats, args.format))
    if args.out:
        Path(args.out).write_text(report_mod.render_csv(stats))
    if args.figures:
        meta, rows = report_mod.stats_rows(stats)
        report_mod.render_figures(meta, rows, args.figures)
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    meta, rows = report_mod.parse_stats_csv(Path(args.stats).read_text())
    if args.format == "table":
        sys.stdout.write(report_mod.rows_to_table(meta, rows))
    else:
        sys.stdout.write(report_mod.rows_to_csv(meta, rows))
    if args.figures:
        report_mod.render_figures(meta, rows, args.figures)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "attack": _cmd_attack,
    "detect": _cmd_detect,
    "montecarlo": _cmd_montecarlo,
    "report": _cmd_report,
}


def cli_main(argv: list[str] | None = None) -> int:
    """Run the CLI; returns 0 on success, 1 on usage errors, 2 on data errors."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except (GridParseError, GridValidationError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry_point() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    entry_point()
