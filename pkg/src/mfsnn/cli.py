"""
Command line front end.

    mfsnn run      --config PATH|NAME [--seed U64] [--out DIR] [--workers N]
    mfsnn sweep    --config PATH|NAME [--seed U64] [--out DIR] [--workers N]
    mfsnn validate --config PATH|NAME
    mfsnn plot     FILE... [--out DIR]

Exit status: 0 on success, 2 for invalid configs or unreadable data files,
3 when a simulation aborts.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import io as fio
from . import plots
from .config import load_config
from .errors import ConfigError, MfsnnError
from .experiments import OUT_ENV, bundled_config, resolve_output_dir, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3


def _config_path(value: str) -> Path:
    p = Path(value)
    if p.exists() or p.suffix in (".yaml", ".yml") and "/" in value:
        return p
    bundled = bundled_config(value)
    return bundled if bundled.exists() else p


def _u64(value: str) -> int:
    try:
        x = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {value!r}") from None
    if not 0 <= x < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return x


def _positive(value: str) -> int:
    try:
        x = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {value!r}") from None
    if x < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return x


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfsnn", description="Mixed-feedback spiking network experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    for name, help_ in (("run", "run an experiment config"), ("sweep", "run a bifurcation-sweep config")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="config file, or the name of a bundled config")
        s.add_argument("--seed", type=_u64, help="override simulation.seed")
        s.add_argument("--out", help=f"output directory (default: config output_dir, then ${OUT_ENV}/<name>)")
        s.add_argument("--workers", type=_positive, default=1, help="parallel simulations for sweeps")

    s = sub.add_parser("validate", help="check a config without running it")
    s.add_argument("--config", required=True)

    s = sub.add_parser("plot", help="render SVG figures from data files")
    s.add_argument("files", nargs="+", help="spikes / alignment / diagram / cluster CSV files")
    s.add_argument("--out", help="directory for the SVGs (default: next to each file)")
    return p


def _load(args):
    cfg = load_config(_config_path(args.config))
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _cmd_run(args, sweep_only: bool) -> int:
    cfg = _load(args)
    if sweep_only and cfg.kind != "bifurcation-sweep":
        print(f"error: {args.config}: 'sweep' needs a bifurcation-sweep config (got {cfg.kind})", file=sys.stderr)
        return EXIT_CONFIG
    out = resolve_output_dir(cfg, args.out)
    try:
        run_experiment(cfg, out, workers=args.workers)
    except MfsnnError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    load_config(_config_path(args.config))
    print("OK")
    return EXIT_OK


def _sniff(path: Path) -> str:
    """Kind of data file, from its first non-comment line."""
    opener = fio._open_text(path, "r")
    with opener as fh:
        for line in fh:
            if not line.startswith("#"):
                head = line.strip()
                break
        else:
            head = ""
    if head == "time_ms,neuron_index":
        return "spikes"
    if head == ",".join(fio.ALIGNMENT_HEADER):
        return "alignment"
    if head == ",".join(fio.DIAGRAM_HEADER):
        return "diagram"
    if head == "cluster,input,rate_hz":
        return "clusters"
    raise fio.FormatError(path, 1, f"unrecognized header {head!r}")


def _read_clusters(path: Path):
    inputs, rates = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 3:
                raise fio.FormatError(path, lineno, f"expected 3 fields, got {len(row)}")
            try:
                inputs.append(float(row[1]))
                rates.append(float(row[2]))
            except ValueError as exc:
                raise fio.FormatError(path, lineno, str(exc)) from None
    return inputs, rates


def _cmd_plot(args) -> int:
    for name in args.files:
        path = Path(name)
        if not path.exists():
            print(f"error: {path}: no such file", file=sys.stderr)
            return EXIT_CONFIG
        kind = _sniff(path)
        stem = path.name.split(".")[0]
        target = (Path(args.out) if args.out else path.parent) / f"{stem}.svg"
        target.parent.mkdir(parents=True, exist_ok=True)
        if kind == "spikes":
            plots.raster_plot(fio.read_spike_record(path), target)
        elif kind == "alignment":
            plots.alignment_plot(fio.read_alignment_csv(path), target)
        elif kind == "diagram":
            plots.bifurcation_plot(fio.read_diagram_csv(path), target)
        else:
            inputs, rates = _read_clusters(path)
            plots.rate_profile_plot(rates, target, input_profile=inputs)
        print(f"wrote {target}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args, sweep_only=False)
        if args.command == "sweep":
            return _cmd_run(args, sweep_only=True)
        if args.command == "validate":
            return _cmd_validate(args)
        return _cmd_plot(args)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    except fio.FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
