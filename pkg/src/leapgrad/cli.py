"""Command-line entry point.

Subcommands: converge, oscillate, gradcheck, train, plot. Exit codes:
0 success, 1 argument/config error, 2 numerical failure, 3 gradient-check
assertion failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiments, figures
from .experiments import NumericalError
from .reports import SchemaError, detect_kind
from .tape import TapeBudgetError


class _ArgumentError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; route through our own codes
    def error(self, message):
        raise _ArgumentError(message)


def _add_common(sub):
    sub.add_argument("--config", type=Path, help="flat JSON config file")
    sub.add_argument("--out", type=Path, help="output directory")
    sub.add_argument("--seed", type=int, help="master seed override")
    sub.add_argument("--field", choices=("tanh", "linear"), help="field kind override")
    sub.add_argument("--levels", type=str, help="comma-separated layer counts")
    sub.add_argument("--refine", type=int, help="reference sub-steps per layer")
    sub.add_argument("--probe", choices=("ones", "e1"), help="probe vector for projections")


def _build_parser():
    parser = _Parser(prog="leapgrad", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("converge", help="gradient error across the level ladder"))
    _add_common(sub.add_parser("oscillate", help="per-layer gradient curves at each level"))
    _add_common(sub.add_parser("gradcheck", help="recursion vs tape vs finite differences"))

    train = sub.add_parser("train", help="gradient descent on the weight grid")
    _add_common(train)
    train.add_argument("--steps", type=int, default=50)
    train.add_argument("--stepsize", type=float, default=0.1)
    train.add_argument("--mode", choices=("vanilla", "modified"), default="vanilla")

    plot = sub.add_parser("plot", help="render a figure from an emitted CSV")
    plot.add_argument("csv", type=Path)
    plot.add_argument("--kind", choices=figures.KINDS, help="schema kind (default: read the CSV tag)")
    plot.add_argument("--output", type=Path, help="image path (default: CSV path with .png)")
    return parser


def _resolve_config(args) -> experiments.ExperimentConfig:
    if args.config is not None:
        cfg = experiments.load_config(args.config)
    elif args.field == "linear":
        cfg = experiments.linear_config()
    else:
        cfg = experiments.default_config()
    if args.field is not None and args.field != cfg.field:
        if args.config is not None:
            raise _ArgumentError(
                f"--field {args.field} conflicts with the config's field {cfg.field!r}; edit the config instead"
            )
        cfg = experiments.linear_config() if args.field == "linear" else experiments.default_config()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.levels is not None:
        try:
            cfg.levels = tuple(int(tok) for tok in args.levels.split(",") if tok.strip())
        except ValueError:
            raise _ArgumentError(f"--levels expects comma-separated integers, got {args.levels!r}") from None
    if args.refine is not None:
        cfg.refine = args.refine
    if args.probe is not None:
        cfg.probe = args.probe
    if args.out is not None:
        cfg.out = str(args.out)
    return cfg.validate()


def _cmd_converge(args) -> int:
    cfg = _resolve_config(args)
    record = experiments.run_convergence(cfg, out_dir=cfg.out)
    for lv in record.levels:
        print(f"L={lv.L:5d} h={lv.h:.6g} vanilla={lv.err_vanilla:.6g} "
              f"modified={lv.err_modified:.6g} euler={lv.err_euler:.6g}")
    for name, slope in record.slopes.items():
        print(f"slope[{name}] = {'n/a' if slope is None else f'{slope:.4f}'}")
    print(f"wrote {Path(cfg.out) / 'converge.csv'} (+ figure)")
    return 0


def _cmd_oscillate(args) -> int:
    cfg = _resolve_config(args)
    for L in cfg.levels:
        record = experiments.run_oscillation(cfg, L, out_dir=cfg.out)
        print(f"L={record.L:5d} alternation_fraction={record.alternation:.4f}")
    print(f"wrote per-level oscillate CSVs (+ figures) under {cfg.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    cfg = _resolve_config(args)
    failed = False
    for L in cfg.levels:
        report = experiments.run_gradcheck(cfg, L)
        status = "ok" if report.ok else "FAIL"
        print(f"L={report.L:5d} {status} recursion-vs-tape={report.recursion_vs_tape:.3e} "
              f"(tol {report.tol_tape:g}, worst cell {report.worst_tape}) "
              f"recursion-vs-fd={report.recursion_vs_fd:.3e} "
              f"(tol {report.tol_fd:g}, worst cell {report.worst_fd})")
        failed = failed or not report.ok
    return 3 if failed else 0


def _cmd_train(args) -> int:
    cfg = _resolve_config(args)
    record = experiments.run_train(cfg, args.steps, args.stepsize, mode=args.mode, out_dir=cfg.out)
    print(f"mode={record.mode} steps={len(record.losses) - 1} "
          f"loss {record.losses[0]:.6g} -> {record.losses[-1]:.6g}"
          + (" (diverged, stopped early)" if record.diverged else ""))
    print(f"wrote {Path(cfg.out) / f'train_{record.mode}.csv'} (+ figure)")
    return 0


def _cmd_plot(args) -> int:
    kind = args.kind or detect_kind(args.csv)
    out = figures.render(args.csv, kind, out_path=args.output)
    print(f"wrote {out}")
    return 0


_COMMANDS = {
    "converge": _cmd_converge,
    "oscillate": _cmd_oscillate,
    "gradcheck": _cmd_gradcheck,
    "train": _cmd_train,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, SchemaError, TapeBudgetError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
