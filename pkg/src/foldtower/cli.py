"""Command-line front end and experiment runner.

Subcommands map onto the library layers: `validate` builds a tower and runs
the construction-time checks, `audit` runs the sequence audits, `cones` and
`ergodicity` run the contraction pipeline, `fiber` and `trace-leaf` probe
the inverse limit, `fixtures` lists the named towers, and `report` runs a
whole experiment from an ExperimentConfig, writing a canonical JSON report
(timings kept out of the body so identical config+seed gives identical
bytes), CSV plot data, and rendered figures.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .graphs import GraphError, as_fraction, fraction_str
from .sequences import (
    SplitSequence,
    audit_expanding,
    audit_properness,
    audit_stabilization,
    audit_strong_properness,
    load_sequence,
    scan_full_mingling,
    scan_semi_normality,
    window_matrix,
)
from .solenoid import (
    FiberPartitionSystem,
    PointSpec,
    compute_fiber,
    is_generic_point,
    make_generic,
    scan_star_chains,
    trace_partial_leaf,
    vertex_turn,
)
from .cones import (
    certify_unique_ergodicity,
    contraction_trace,
    evaluate_transverse_measure,
    perron_weights,
)
from .fixtures import FIXTURES, UnknownFixture, load_fixture

ARTIFACT_VERSION = "0.1.0"

AUDITS = ("properness", "strong_properness", "stabilization", "mingling",
          "expanding", "semi_normality", "ergodicity")
TRACES = ("contraction", "fiber_growth", "census", "remainder")


class MissingTrace(GraphError):
    pass


def _jsonable(obj):
    """Deep-convert report payloads: fractions to "p/q", tuples/sets to
    lists, keys to strings."""
    if isinstance(obj, Fraction):
        return str(obj.numerator) if obj.denominator == 1 else fraction_str(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(x) for x in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted((_jsonable(x) for x in obj), key=repr)
    return obj


@dataclass(frozen=True)
class ExperimentConfig:
    fixture: Optional[str] = None
    input_path: Optional[str] = None
    audits: Tuple[str, ...] = AUDITS
    traces: Tuple[str, ...] = TRACES
    depth: int = 12
    tol: float = 1e-8
    seed: int = 0
    stability_window: int = 5
    recur_min: int = 3
    edge: Optional[str] = None
    pos: Optional[str] = None
    out_dir: Optional[str] = None

    def __post_init__(self):
        if (self.fixture is None) == (self.input_path is None):
            raise GraphError("exactly one of fixture/input must be given")
        if self.fixture is not None and self.fixture not in FIXTURES:
            raise UnknownFixture(
                f"unknown fixture {self.fixture!r}; "
                f"available: {sorted(FIXTURES)}")
        if self.depth < 0:
            raise GraphError("depth must be >= 0")
        bad = [a for a in self.audits if a not in AUDITS]
        if bad:
            raise GraphError(f"unknown audits {bad}; available: {list(AUDITS)}")
        bad = [t for t in self.traces if t not in TRACES]
        if bad:
            raise GraphError(f"unknown traces {bad}; available: {list(TRACES)}")

    def sequence(self) -> SplitSequence:
        if self.fixture is not None:
            return load_fixture(self.fixture, self.depth)
        seq = load_sequence(self.input_path)
        if seq.depth < self.depth and seq.generator is not None:
            seq = seq.generator.build(self.depth)
        return seq

    def to_dict(self) -> dict:
        # out_dir is where the report lands, not part of the experiment, so
        # it stays out of the echo and reports stay reproducible byte for
        # byte wherever they are written.
        return {"fixture": self.fixture, "input_path": self.input_path,
                "audits": list(self.audits), "traces": list(self.traces),
                "depth": self.depth, "tol": self.tol, "seed": self.seed,
                "stability_window": self.stability_window,
                "recur_min": self.recur_min, "edge": self.edge,
                "pos": self.pos}


@dataclass
class Report:
    config: dict
    audits: Dict[str, dict]
    certificate: Optional[dict]
    traces: Dict[str, dict]
    version: str
    timings: Dict[str, float] = field(default_factory=dict)

    def body(self) -> dict:
        return _jsonable({"version": self.version, "config": self.config,
                          "audits": self.audits,
                          "certificate": self.certificate,
                          "traces": self.traces})

    def body_json(self) -> str:
        return json.dumps(self.body(), sort_keys=True, indent=2) + "\n"


def _default_basepoint(seq: SplitSequence, depth: int) -> PointSpec:
    """Deterministic generic interior basepoint: prefers edge c when present
    (the spliced edge of the rank-2 fixtures), nudged until generic."""
    labels = sorted(seq.graph(0).natural_structure().labels)
    edge = "c" if "c" in labels else labels[0]
    length = seq.graph(0).natural_edge(edge).length
    q = PointSpec(level=0, edge=edge, pos=length / 3)
    if not is_generic_point(seq, q, depth):
        q = make_generic(seq, q, depth)
    return q


def _default_turn(seq: SplitSequence, depth: int):
    """Vertex turn at the most persistent singular vertex: the base of a
    spanning stable star chain when one exists, else the first natural
    vertex; germ pair = the two lowest darts there."""
    _, census = scan_star_chains(seq, depth)
    base = None
    for rec in census.candidates:
        if rec.spans_depth:
            base = rec.base.vertex
            break
    g = seq.graph(0)
    if base is None:
        base = sorted(g.natural_vertices(), key=repr)[0]
    d1, d2 = sorted(g.darts_at(base))[:2]
    return vertex_turn(0, base, d1, d2), PointSpec(level=0, vertex=base)


def _trace_contraction(seq: SplitSequence, cfg: ExperimentConfig) -> dict:
    steps = contraction_trace(seq, 0, cfg.depth)
    rows = [[s.depth, s.diameter, s.rank,
             "" if s.delta is None else fraction_str(Fraction(s.delta))]
            for s in steps]
    return {"columns": ["depth", "diameter", "rank", "delta"], "rows": rows}


def _trace_fiber_growth(seq: SplitSequence, cfg: ExperimentConfig) -> dict:
    if cfg.edge is not None:
        pos = as_fraction(cfg.pos if cfg.pos is not None else "1/3")
        q = PointSpec(level=0, edge=cfg.edge, pos=pos)
    else:
        q = _default_basepoint(seq, cfg.depth)
    tree = compute_fiber(seq, q, cfg.depth)
    rows = [[d, tree.leaf_count(d)] for d in range(tree.depth + 1)]
    return {"columns": ["depth", "leaf_count"], "rows": rows,
            "basepoint": q.to_dict()}


def _trace_census(seq: SplitSequence, cfg: ExperimentConfig) -> dict:
    _, census = scan_star_chains(seq, cfg.depth)
    rows = [list(r) for r in census.to_csv_rows()]
    return {"columns": ["chain", "depth", "prongs"], "rows": rows,
            "bound": census.bound}


def _trace_remainder(seq: SplitSequence, cfg: ExperimentConfig) -> dict:
    exp = audit_expanding(seq, cfg.depth)
    if exp.status.verdict == "Violated":
        return {"columns": ["depth", "value", "remainder_bound"], "rows": [],
                "note": "expanding audit violated; evaluation refused"}
    I, q = _default_turn(seq, cfg.depth)
    ws = perron_weights(seq, cfg.depth)
    rows = []
    for d in range(1, cfg.depth + 1):
        value, rem = evaluate_transverse_measure(seq, ws, I, q, d, cfg.tol)
        rows.append([d, fraction_str(Fraction(value)),
                     fraction_str(Fraction(rem))])
    return {"columns": ["depth", "value", "remainder_bound"], "rows": rows,
            "turn": I.to_dict()}


_TRACE_FNS = {"contraction": _trace_contraction,
              "fiber_growth": _trace_fiber_growth,
              "census": _trace_census,
              "remainder": _trace_remainder}


def run_experiment(cfg: ExperimentConfig) -> Report:
    """Build the tower, run the requested audits and traces, and (with an
    output directory) write report.json, timings.json, CSVs and figures."""
    timings: Dict[str, float] = {}
    t0 = time.perf_counter()
    seq = cfg.sequence()
    timings["build"] = time.perf_counter() - t0

    audit_fns = {
        "properness": lambda: audit_properness(seq, cfg.depth,
                                               cfg.stability_window),
        "strong_properness": lambda: audit_strong_properness(seq),
        "stabilization": lambda: audit_stabilization(seq, cfg.depth),
        "mingling": lambda: scan_full_mingling(seq, cfg.depth),
        "expanding": lambda: audit_expanding(seq, cfg.depth),
        "semi_normality": lambda: scan_semi_normality(seq, cfg.depth),
    }
    audits: Dict[str, dict] = {}
    certificate = None
    for name in cfg.audits:
        t0 = time.perf_counter()
        if name == "ergodicity":
            certificate = certify_unique_ergodicity(
                seq, cfg.depth, tol=cfg.tol,
                recur_min=cfg.recur_min).to_dict()
        else:
            audits[name] = audit_fns[name]().to_dict()
        timings[name] = time.perf_counter() - t0

    traces: Dict[str, dict] = {}
    for kind in cfg.traces:
        t0 = time.perf_counter()
        traces[kind] = _TRACE_FNS[kind](seq, cfg)
        timings[f"trace.{kind}"] = time.perf_counter() - t0

    report = Report(config=cfg.to_dict(), audits=audits,
                    certificate=certificate, traces=traces,
                    version=ARTIFACT_VERSION, timings=timings)
    if cfg.out_dir:
        _write_outputs(report, cfg.out_dir)
    return report


def _write_outputs(report: Report, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(report.body_json())
    with open(os.path.join(out_dir, "timings.json"), "w") as fh:
        json.dump(report.timings, fh, indent=2)
        fh.write("\n")
    for kind in report.traces:
        emit_plot_data(report, kind, os.path.join(out_dir, f"{kind}.csv"))
        _render_figure(report, kind, os.path.join(out_dir, f"{kind}.png"))


def emit_plot_data(report: Report, kind: str, out_path: str) -> str:
    """Write one trace of the report as a headered CSV with a stable column
    order; unknown or absent traces raise MissingTrace."""
    trace = report.traces.get(kind)
    if trace is None:
        raise MissingTrace(
            f"report has no {kind!r} trace; present: {sorted(report.traces)}")
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(trace["columns"])
        writer.writerows(trace["rows"])
    return out_path


def _render_figure(report: Report, kind: str, out_path: str) -> Optional[str]:
    trace = report.traces.get(kind)
    if trace is None:
        raise MissingTrace(f"report has no {kind!r} trace")
    if not trace["rows"]:
        return None
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    rows = trace["rows"]
    if kind == "contraction":
        depths = [r[0] for r in rows]
        diams = [max(float(r[1]), 1e-300) for r in rows]
        ax.semilogy(depths, diams, marker="o", ms=3)
        ax.set_ylabel("projective diameter")
    elif kind == "fiber_growth":
        ax.plot([r[0] for r in rows], [r[1] for r in rows], marker="o", ms=3)
        ax.set_ylabel("fiber leaves")
    elif kind == "census":
        ax.scatter([r[1] for r in rows], [r[2] for r in rows], s=12)
        ax.set_ylabel("prongs")
    else:
        rems = [max(float(Fraction(r[2])), 1e-300) for r in rows]
        ax.semilogy([r[0] for r in rows], rems, marker="o", ms=3)
        ax.set_ylabel("remainder bound")
    ax.set_xlabel("depth")
    ax.set_title(kind.replace("_", " "))
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


# -- argument plumbing --------------------------------------------------------------


def _parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--fixture", choices=sorted(FIXTURES), default=None,
                   help="named tower to build")
    p.add_argument("--input", dest="input_path", default=None,
                   help="load a saved sequence instead of a fixture")
    p.add_argument("--depth", type=int, default=12,
                   help="tower/audit depth (default 12)")
    p.add_argument("--tol", type=float, default=1e-8,
                   help="numeric tolerance (default 1e-8)")
    p.add_argument("--seed", type=int, default=0,
                   help="seed recorded in outputs (default 0)")
    p.add_argument("--out", dest="out_dir", default=None,
                   help="directory for reports/CSVs/figures")
    return p


def _sequence_from(args) -> SplitSequence:
    if (args.fixture is None) == (args.input_path is None):
        raise GraphError("exactly one of --fixture/--input is required")
    if args.fixture is not None:
        return load_fixture(args.fixture, args.depth)
    seq = load_sequence(args.input_path)
    if seq.depth < args.depth and seq.generator is not None:
        seq = seq.generator.build(args.depth)
    return seq


def _cmd_validate(args) -> int:
    seq = _sequence_from(args)
    counts = [len(seq.graph(j).natural_structure().labels)
              for j in range(0, -seq.depth - 1, -1)]
    print(f"valid: rank={seq.rank} depth={seq.depth} "
          f"natural-edge counts={counts}")
    return 0


def _cmd_audit(args) -> int:
    cfg = _config_from(args, audits=tuple(a for a in AUDITS
                                          if a != "ergodicity"), traces=())
    report = run_experiment(cfg)
    for name, audit in report.audits.items():
        status = audit["status"]
        extra = f" (depth {status['depth']})" if "depth" in status else ""
        print(f"{name}: {status['verdict']}{extra}")
    return 0


def _cmd_cones(args) -> int:
    seq = _sequence_from(args)
    steps = contraction_trace(seq, 0, args.depth)
    final = steps[-1]
    print(f"contraction: depth={final.depth} diameter={final.diameter:.3e} "
          f"rank={final.rank}")
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        path = os.path.join(args.out_dir, "contraction.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["depth", "diameter", "rank", "delta"])
            for s in steps:
                writer.writerow([s.depth, s.diameter, s.rank,
                                 "" if s.delta is None
                                 else fraction_str(Fraction(s.delta))])
        print(f"wrote {path}")
    return 0


def _certificate_text(cert: dict) -> str:
    lines = [f"status: {cert['status']}",
             f"interpretation: {cert['interpretation']}",
             f"lower_bound: {cert['lower_bound']}",
             f"dim_bounds: {cert['dim_bounds']}"]
    ev = cert["evidence"]
    if "semi_normality" in ev:
        sn = ev["semi_normality"]
        lines.append(f"recurring window: d={sn['d']} windows={sn['windows']}")
        lines.append(f"matrix: {sn['matrix']}")
        lines.append(f"delta: {ev['delta']}")
        lines.append(f"window diameters: {ev['window_diameters']}")
    lines.append(f"final diameter: {ev['final_diameter']}")
    lines.append(f"final rank: {ev['final_rank']}")
    lines.append(f"strong properness: {ev['strong_properness']['verdict']}")
    return "\n".join(lines) + "\n"


def _cmd_ergodicity(args) -> int:
    seq = _sequence_from(args)
    cert = certify_unique_ergodicity(seq, args.depth, tol=args.tol).to_dict()
    print(f"certificate: {cert['status']} "
          f"(lower bound {cert['lower_bound']}, "
          f"dim bounds {cert['dim_bounds']}, {cert['interpretation']})")
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        jpath = os.path.join(args.out_dir, "certificate.json")
        with open(jpath, "w") as fh:
            json.dump(_jsonable(cert), fh, sort_keys=True, indent=2)
            fh.write("\n")
        tpath = os.path.join(args.out_dir, "certificate.txt")
        with open(tpath, "w") as fh:
            fh.write(_certificate_text(cert))
        print(f"wrote {jpath} and {tpath}")
    return 0


def _cmd_fiber(args) -> int:
    seq = _sequence_from(args)
    if args.edge is not None:
        q = PointSpec(level=0, edge=args.edge,
                      pos=as_fraction(args.pos or "1/3"))
    else:
        q = _default_basepoint(seq, args.depth)
    tree = compute_fiber(seq, q, args.depth)
    FiberPartitionSystem(tree)          # raises if the nesting is broken
    counts = [tree.leaf_count(d) for d in range(tree.depth + 1)]
    print(f"fiber at {q.to_dict()}: leaves per depth {counts}")
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        path = os.path.join(args.out_dir, "fiber_growth.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["depth", "leaf_count"])
            for d, n in enumerate(counts):
                writer.writerow([d, n])
        print(f"wrote {path}")
    return 0


def _cmd_trace_leaf(args) -> int:
    seq = _sequence_from(args)
    if args.edge is None:
        raise GraphError("trace-leaf needs --edge (and usually --pos)")
    start = PointSpec(level=0, edge=args.edge,
                      pos=as_fraction(args.pos or "1/3"))
    rec = trace_partial_leaf(seq, start, args.steps, args.depth)
    verdict = "closed" if rec.closed else "injective so far"
    print(f"leaf trace from {args.edge}@{args.pos or '1/3'}: {verdict}, "
          f"{len(rec.hops) - 1} hops, level-0 length {rec.final_length}")
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        path = os.path.join(args.out_dir, "leaf_trace.json")
        with open(path, "w") as fh:
            json.dump(_jsonable(rec.to_dict()), fh, sort_keys=True, indent=2)
            fh.write("\n")
        print(f"wrote {path}")
    return 0


def _cmd_fixtures(args) -> int:
    for name in sorted(FIXTURES):
        gen = FIXTURES[name]()
        print(f"{name}: {json.dumps(gen.describe(), sort_keys=True)}")
    return 0


def _config_from(args, audits=None, traces=None) -> ExperimentConfig:
    return ExperimentConfig(
        fixture=args.fixture, input_path=args.input_path,
        audits=AUDITS if audits is None else audits,
        traces=TRACES if traces is None else traces,
        depth=args.depth, tol=args.tol, seed=args.seed,
        stability_window=getattr(args, "stability_window", 5),
        recur_min=getattr(args, "recur_min", 3),
        edge=getattr(args, "edge", None), pos=getattr(args, "pos", None),
        out_dir=args.out_dir)


def _cmd_report(args) -> int:
    audits = tuple(args.audits.split(",")) if args.audits not in ("all", "none") \
        else (AUDITS if args.audits == "all" else ())
    traces = tuple(args.traces.split(",")) if args.traces not in ("all", "none") \
        else (TRACES if args.traces == "all" else ())
    cfg = _config_from(args, audits=audits, traces=traces)
    report = run_experiment(cfg)
    cert = report.certificate
    print(f"report: {len(report.audits)} audits, "
          f"certificate={'none' if cert is None else cert['status']}, "
          f"traces={sorted(report.traces)}")
    if cfg.out_dir:
        print(f"wrote {os.path.join(cfg.out_dir, 'report.json')}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="foldtower",
        description="fold towers: construction, audits, solenoid probes, "
                    "and ergodicity certificates")
    sub = parser.add_subparsers(dest="command", required=True)
    parent = _parent()

    sub.add_parser("validate", parents=[parent]).set_defaults(fn=_cmd_validate)
    p_audit = sub.add_parser("audit", parents=[parent])
    p_audit.add_argument("--stability-window", dest="stability_window",
                         type=int, default=5)
    p_audit.set_defaults(fn=_cmd_audit)
    sub.add_parser("cones", parents=[parent]).set_defaults(fn=_cmd_cones)
    p_erg = sub.add_parser("ergodicity", parents=[parent])
    p_erg.add_argument("--recur-min", dest="recur_min", type=int, default=3)
    p_erg.set_defaults(fn=_cmd_ergodicity)
    p_fiber = sub.add_parser("fiber", parents=[parent])
    p_fiber.add_argument("--edge", default=None)
    p_fiber.add_argument("--pos", default=None, help='rational like "1/3"')
    p_fiber.set_defaults(fn=_cmd_fiber)
    p_leaf = sub.add_parser("trace-leaf", parents=[parent])
    p_leaf.add_argument("--edge", default=None)
    p_leaf.add_argument("--pos", default=None)
    p_leaf.add_argument("--steps", type=int, default=5)
    p_leaf.set_defaults(fn=_cmd_trace_leaf)
    sub.add_parser("fixtures", parents=[parent]).set_defaults(fn=_cmd_fixtures)
    p_rep = sub.add_parser("report", parents=[parent])
    p_rep.add_argument("--audits", default="all",
                       help='comma list, "all", or "none"')
    p_rep.add_argument("--traces", default="all",
                       help='comma list, "all", or "none"')
    p_rep.add_argument("--stability-window", dest="stability_window",
                       type=int, default=5)
    p_rep.add_argument("--recur-min", dest="recur_min", type=int, default=3)
    p_rep.add_argument("--edge", default=None)
    p_rep.add_argument("--pos", default=None)
    p_rep.set_defaults(fn=_cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except GraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
