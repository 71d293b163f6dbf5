"""Command-line entry point: generate, build, route, verify, render, stats."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..labelling import compute_portals
from ..sim import Mode, SimNetwork
from ..routing import route_in_network
from .instances import GenerationFailed, InstanceFile, InstanceFormatError, ShapeParams, generate_instance
from .pipeline import TRANSPORTS, Pipeline, build_pipeline
from .svg import LAYERS, render_svg
from .verify import sample_pairs, stretch_report, verify_chain

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _load(path: str) -> InstanceFile:
    try:
        return InstanceFile.from_json(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    except InstanceFormatError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _pipeline(args, trace: bool = False) -> Pipeline:
    udg = _load(args.inp).udg()
    if not udg.connected:
        raise UsageError("instance is disconnected")
    return build_pipeline(udg, mode=args.mode, transport=getattr(args, "transport", "direct"), trace=trace)


def build_document(p: Pipeline) -> dict:
    R = p.R
    return {
        "schema": 1,
        "mode": p.mode.value,
        "representatives": [[g[0], g[1], r, R.virtual_ids[g]] for g, r in sorted(R.rep.items())],
        "paths": [[list(a), list(b), list(path)] for (a, b), path in sorted(R.paths.items())],
        "labels": [
            [g[0], g[1], gl.own.l, gl.own.r, gl.portal.l, gl.portal.r] for g, gl in sorted(p.labels.items())
        ],
        "rounds": p.rounds,
        "budget_ok": p.budget_ok(),
    }


def cmd_generate(args) -> int:
    sp = ShapeParams(
        density=args.density, disk_radius=args.disk_radius, step=args.step,
        turn=args.turn, cavity=args.cavity, retries=args.retries,
    )
    try:
        inst = generate_instance(args.seed, args.n, sp)
    except GenerationFailed as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    _write(args.out, inst.to_json())
    return EXIT_OK


def cmd_build(args) -> int:
    p = _pipeline(args, trace=args.trace is not None)
    _write(args.out, json.dumps(build_document(p), sort_keys=True, indent=1) + "\n")
    if args.trace:
        Path(args.trace).write_text("\n".join(p.udg_net.trace_export()) + "\n")
    return EXIT_OK if p.budget_ok() else EXIT_VIOLATION


def cmd_route(args) -> int:
    p = _pipeline(args)
    for v in (args.src, args.dst):
        if v not in p.udg.pos:
            raise UsageError(f"unknown node id {v}")
    net = SimNetwork(p.udg.adj, mode=p.mode, track_knowledge=False, trace=args.trace is not None)
    path = route_in_network(net, p.nodes, args.src, p.label(args.dst))
    print(json.dumps({"src": args.src, "dst": args.dst, "hops": len(path) - 1, "path": path}))
    if args.trace:
        Path(args.trace).write_text("\n".join(net.trace_export()) + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    p = _pipeline(args)
    report = stretch_report(p, args.pairs, args.seed)
    doc = json.loads(report.to_json())
    bad = bool(report.violations)
    if args.chain:
        chain = verify_chain(p, sample_pairs(p, args.pairs, args.seed, non_adjacent=True))
        doc["chain"] = {
            "pairs": len(chain.entries),
            "polygon_checked": chain.polygon_checked,
            "violations": chain.violations,
        }
        bad = bad or not chain.ok
    _write(args.out, json.dumps(doc, sort_keys=True, indent=1) + "\n")
    print(
        f"pairs={len(report.pairs)} max_stretch={report.max_stretch:.4f} "
        f"max_hops_per_distance={report.max_distance_ratio:.4f} "
        f"violations={len(report.violations) + len(doc.get('chain', {}).get('violations', []))}",
        file=sys.stderr,
    )
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_render(args) -> int:
    layers = [l for l in args.layers.split(",") if l] if args.layers else []
    unknown = [l for l in layers if l not in LAYERS]
    if unknown:
        raise UsageError(f"unknown layers: {', '.join(unknown)}")
    path = None
    if "path" in layers:
        if args.src is None or args.dst is None:
            raise UsageError("the path layer needs --src and --dst")
        path = _pipeline(args).route(args.src, args.dst)
    udg = _load(args.inp).udg()
    _write(args.out, render_svg(udg, layers, path))
    return EXIT_OK


def cmd_stats(args) -> int:
    p = _pipeline(args)
    doc = {
        "nodes": p.udg.n,
        "edges": len(p.udg.edges),
        "active_cells": len(p.grid.nodes),
        "grid_edges": len(p.grid.edges),
        "portals": len(compute_portals(p.grid)),
        "representatives": len(set(p.R.rep.values())),
        "rounds": p.rounds,
        "budget_ok": p.budget_ok(),
    }
    print(json.dumps(doc, sort_keys=True, indent=1))
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybroute", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    def with_input(sp, build_flags=True):
        sp.add_argument("--in", dest="inp", required=True, help="instance JSON file")
        if build_flags:
            sp.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.CONGEST.value)
        return sp

    g = sub.add_parser("generate", help="sample a hole-free instance")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", default=None)
    d = ShapeParams()
    g.add_argument("--density", type=float, default=d.density)
    g.add_argument("--disk-radius", type=float, default=d.disk_radius)
    g.add_argument("--step", type=float, default=d.step)
    g.add_argument("--turn", type=float, default=d.turn)
    g.add_argument("--cavity", type=float, default=d.cavity)
    g.add_argument("--retries", type=int, default=d.retries)
    g.set_defaults(fn=cmd_generate)

    b = with_input(sub.add_parser("build", help="grid, representation and labels"))
    b.add_argument("--out", default=None)
    b.add_argument("--transport", choices=TRANSPORTS, default="direct")
    b.add_argument("--trace", default=None, help="write the UDG-level JSONL trace here")
    b.set_defaults(fn=cmd_build)

    r = with_input(sub.add_parser("route", help="route one packet"))
    r.add_argument("--src", type=int, required=True)
    r.add_argument("--dst", type=int, required=True)
    r.add_argument("--trace", default=None)
    r.set_defaults(fn=cmd_route)

    v = with_input(sub.add_parser("verify", help="stretch report and inequality chain"))
    v.add_argument("--pairs", type=int, default=100)
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--chain", action="store_true")
    v.add_argument("--out", default=None)
    v.set_defaults(fn=cmd_verify)

    rd = with_input(sub.add_parser("render", help="layered SVG drawing"))
    rd.add_argument("--out", required=True)
    rd.add_argument("--layers", default=",".join(LAYERS[:-1]))
    rd.add_argument("--src", type=int, default=None)
    rd.add_argument("--dst", type=int, default=None)
    rd.set_defaults(fn=cmd_render)

    s = with_input(sub.add_parser("stats", help="instance and pipeline statistics"))
    s.set_defaults(fn=cmd_stats)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
