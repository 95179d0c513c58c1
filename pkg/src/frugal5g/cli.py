"""Command-line entry point: ``frugal5g run|validate|trace-filter``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import Frugal5gError, SchemaError
from .sim import projections
from .sim.metrics import dumps
from .sim.runner import run
from .sim.scenario import bundled_names, read_scenario
from .sim.trace import KINDS, Trace


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="frugal5g", description="Frugal 5G access-network simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("scenario", help="scenario file or bundled name")
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    r.add_argument("--trace", type=Path, help="write the event trace here")
    r.add_argument("--metrics", type=Path, help="write metrics JSON here")

    v = sub.add_parser("validate", help="check a scenario file against the schema")
    v.add_argument("scenario")

    f = sub.add_parser("trace-filter", help="project a trace file")
    f.add_argument("trace", type=Path)
    f.add_argument("--node", help="node id (comma list allowed)")
    f.add_argument("--kind", help=f"record kind, one of {', '.join(KINDS)}; "
                                  "'mgmt' prints the attach call flow of --node")
    f.add_argument("--projection", choices=projections.PROJECTIONS,
                   help="print a named projection instead of raw records")

    sub.add_parser("list", help="list bundled scenarios")
    return p


def _first_ue(trace: Trace) -> str | None:
    for rec in trace:
        if rec.kind == "rrc" and rec.get("msg") == "ConnectionRequest":
            return rec.node
        if rec.kind == "mgmt" and rec.get("msg") == "ProbeRequest":
            return rec.get("src")
    return None


def _trace_filter(args) -> list[str]:
    trace = Trace.loads(args.trace.read_text())
    projection = args.projection
    if projection is None and args.kind == "mgmt":
        projection = "callflow"
    if projection == "northbound":
        return projections.northbound(trace)
    if projection is not None:
        ue = args.node or _first_ue(trace)
        if ue is None:
            raise Frugal5gError("no attaching UE found; pass --node")
        return getattr(projections, projection)(trace, ue)
    if args.kind is not None:
        unknown = set(args.kind.split(",")) - set(KINDS)
        if unknown:
            raise Frugal5gError(f"unknown record kind(s): {', '.join(sorted(unknown))}")
    return [r.line() for r in trace.select(node=args.node, kind=args.kind)]


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "list":
            print("\n".join(bundled_names()))
        elif args.command == "validate":
            sc = read_scenario(args.scenario)
            print(f"ok: {sc.name} ({len(sc.nodes)} nodes, {len(sc.links)} links, {len(sc.flows)} flows)")
        elif args.command == "run":
            sc = read_scenario(args.scenario)
            trace, report = run(sc, args.seed)
            if args.trace:
                args.trace.write_text(trace.dumps())
            text = dumps(report)
            if args.metrics:
                args.metrics.write_text(text)
            else:
                sys.stdout.write(text)
        else:
            lines = _trace_filter(args)
            sys.stdout.write("".join(l + "\n" for l in lines))
    except SchemaError as exc:
        print(f"frugal5g: invalid scenario: {exc}", file=sys.stderr)
        return 2
    except (Frugal5gError, OSError, ValueError) as exc:
        print(f"frugal5g: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
