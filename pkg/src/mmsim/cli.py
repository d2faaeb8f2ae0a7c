"""Command line: run, sweep, trace, estimate."""
from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from pathlib import Path

from .addressing import AddressError
from .config import ConfigError, config_to_dict, parse_config, parse_sweep, with_overrides
from .metrics import MetricsError, state_count_estimate
from .scenario import csv_text, metadata, report_row, run_scenario, sweep, trace_csv
from .simcore import SimulationError
from .topology import TopologyError

EXIT_OK, EXIT_INVALID, EXIT_SIM = 0, 1, 2

log = logging.getLogger("mmsim")


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text()


@contextlib.contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _scenario(args):
    cfg = parse_config(_read(args.config))
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.scheme is not None:
        changes["scheme"] = args.scheme
    return with_overrides(cfg, **changes) if changes else cfg


def cmd_run(args) -> int:
    cfg = _scenario(args)
    res = run_scenario(cfg)
    row = report_row(0, cfg, res.report, cfg.topology.handover_pair)
    extra = {"drops_by_cause": res.report.drops_by_cause}
    with _output(args.out) as fh:
        fh.write(csv_text([row], metadata(cfg, extra)))
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = parse_sweep(_read(args.config))
    if args.seed is not None or args.scheme is not None:
        base = spec.base
        if args.seed is not None:
            base = with_overrides(base, seed=args.seed)
        if args.scheme is not None:
            spec.schemes = [args.scheme]
        spec.base = base
    rows = sweep(spec, jobs=args.jobs)
    meta = metadata(spec.base, {"axes": {"link_delays": spec.link_delays,
                                         "hop_pairs": [list(p) for p in spec.hop_pairs],
                                         "schemes": list(spec.schemes)}})
    with _output(args.out) as fh:
        fh.write(csv_text(rows, meta))
    return EXIT_OK


def cmd_trace(args) -> int:
    cfg = _scenario(args)
    res = run_scenario(cfg)
    with _output(args.out) as fh:
        trace_csv(res.trace, fh)
    return EXIT_OK


def cmd_estimate(args) -> int:
    value = state_count_estimate(args.x, args.y, args.l, args.mode)
    with _output(args.out) as fh:
        fh.write("mode,x,y,l,state_count\n")
        fh.write(f"{args.mode},{args.x},{args.y},{args.l:g},{value:g}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmsim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="JSON file ('-' for stdin)")
        sp.add_argument("--out", help="output CSV path (default stdout)")

    sp = sub.add_parser("run", help="run one scenario and print its metrics row")
    common(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--scheme", choices=["mnm", "cip", "hawaii"])
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run a sweep grid")
    common(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--scheme", choices=["mnm", "cip", "hawaii"], help="restrict to one scheme")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("trace", help="dump the mobile's receive trace")
    common(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--scheme", choices=["mnm", "cip", "hawaii"])
    sp.set_defaults(func=cmd_trace)

    sp = sub.add_parser("estimate", help="router state-count estimate")
    common(sp, config=False)
    sp.add_argument("--x", type=int, required=True, help="mobiles")
    sp.add_argument("--y", type=int, required=True, help="correspondents per mobile")
    sp.add_argument("--l", type=float, required=True, help="path length in hops")
    sp.add_argument("--mode", choices=["inter", "intra"], default="intra")
    sp.set_defaults(func=cmd_estimate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TopologyError, AddressError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SimulationError, MetricsError) as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
