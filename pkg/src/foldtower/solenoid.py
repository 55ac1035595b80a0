"""Finite-depth probes of a fold tower's inverse limit.

Points of the limit object are threads of compatible level points.  What is
computable at finite depth are shadows: the preimage tree of a basepoint
(realized preimage points plus the virtual crossing copies contributed by
edge images that miss the basepoint), the nested partitions such a tree
carries, chains of natural vertices with prong counts (singularity
candidates), homeomorphic lifts of turns, the edge-by-edge decomposition of a
turn transversal, and step-by-step tracing of a partial leaf.

The workhorse is the *run table* of a fold map: for every domain natural edge,
the maximal subpaths of its image inside a single codomain natural edge,
recorded with exact rational intervals on both sides.  Component counts of
runs reproduce the transition matrix; the intervals answer every pointwise
question (which crossings contain a basepoint, where a turn lifts, and so on).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

from .graphs import (
    CoreGraph,
    GraphError,
    GraphPoint,
    as_fraction,
    fraction_str,
    natural_position,
    point_on_natural_edge,
)
from .folds import FoldError, GraphMap
from .sequences import (
    LevelOutOfRange,
    SplitSequence,
    _chain_prong_trace,
    _natural_vertex_chains,
)


class InsufficientDepth(GraphError):
    """A lift or continuation is ambiguous with the levels available."""


# -- level-aware points and turns ------------------------------------------------


@dataclass(frozen=True)
class PointSpec:
    """A point of one level: either interior to a natural edge (position
    measured along the edge's canonical orientation) or a vertex."""

    level: int
    edge: Optional[str] = None
    pos: Optional[Fraction] = None
    vertex: object = None

    @property
    def is_vertex(self) -> bool:
        return self.vertex is not None

    def to_dict(self) -> dict:
        if self.is_vertex:
            return {"level": self.level, "vertex": self.vertex}
        return {"level": self.level, "edge": self.edge,
                "pos": fraction_str(self.pos)}

    @staticmethod
    def from_dict(d: dict) -> "PointSpec":
        if "vertex" in d:
            return PointSpec(level=d["level"], vertex=d["vertex"])
        return PointSpec(level=d["level"], edge=d["edge"],
                         pos=as_fraction(d["pos"]))


def resolve_point(seq: SplitSequence, p: PointSpec) -> GraphPoint:
    """Validate a PointSpec against its level and return the graph point."""
    g = seq.graph(p.level)
    if p.is_vertex:
        if p.vertex not in g.vertices:
            raise GraphError(f"no vertex {p.vertex!r} at level {p.level}")
        return GraphPoint(vertex=p.vertex)
    e = g.natural_edge(p.edge)
    if not (0 < p.pos < e.length):
        raise GraphError(
            f"position {p.pos} not interior to edge {p.edge!r} "
            f"of length {e.length}")
    return point_on_natural_edge(g, p.edge, p.pos)


def describe_point(seq: SplitSequence, level: int, gp: GraphPoint) -> PointSpec:
    """Inverse of resolve_point: name a graph point at a level."""
    g = seq.graph(level)
    if gp.is_vertex and g.is_natural_vertex(gp.vertex):
        return PointSpec(level=level, vertex=gp.vertex)
    loc = natural_position(g, gp)
    if loc is None:
        return PointSpec(level=level, vertex=gp.vertex)
    lab, off = loc
    return PointSpec(level=level, edge=lab, pos=off)


@dataclass(frozen=True)
class TurnSpec:
    """A turn of one level: an open interval inside a natural edge, or an
    unordered pair of distinct darts at a vertex.  `at` marks the anchor of
    interval turns produced by lifting through an interior point."""

    level: int
    kind: str                               # "edge" | "vertex"
    edge: Optional[str] = None
    lo: Optional[Fraction] = None
    hi: Optional[Fraction] = None
    at: Optional[Fraction] = None
    vertex: object = None
    darts: Optional[FrozenSet[int]] = None

    def to_dict(self) -> dict:
        if self.kind == "vertex":
            return {"level": self.level, "kind": "vertex",
                    "vertex": self.vertex, "darts": sorted(self.darts)}
        out = {"level": self.level, "kind": "edge", "edge": self.edge,
               "lo": fraction_str(self.lo), "hi": fraction_str(self.hi)}
        if self.at is not None:
            out["at"] = fraction_str(self.at)
        return out


def edge_turn(level: int, edge: str, lo, hi) -> TurnSpec:
    lo, hi = as_fraction(lo), as_fraction(hi)
    if not lo < hi:
        raise GraphError(f"empty turn interval ({lo}, {hi})")
    return TurnSpec(level=level, kind="edge", edge=edge, lo=lo, hi=hi)


def vertex_turn(level: int, vertex, dart1: int, dart2: int) -> TurnSpec:
    if dart1 == dart2:
        raise GraphError("a turn needs two distinct darts")
    return TurnSpec(level=level, kind="vertex", vertex=vertex,
                    darts=frozenset((dart1, dart2)))


def validate_turn(seq: SplitSequence, I: TurnSpec):
    g = seq.graph(I.level)
    if I.kind == "edge":
        try:
            e = g.natural_edge(I.edge)
        except KeyError:
            raise GraphError(f"no natural edge labelled {I.edge!r} "
                             f"at level {I.level}") from None
        if not (0 <= I.lo < I.hi <= e.length):
            raise GraphError(
                f"interval ({I.lo}, {I.hi}) not inside edge {I.edge!r} "
                f"of length {e.length}")
    elif I.kind == "vertex":
        ds = set(g.darts_at(I.vertex))
        if not (I.darts <= ds):
            raise GraphError(
                f"darts {sorted(I.darts)} are not based at {I.vertex!r}")
    else:
        raise GraphError(f"unknown turn kind {I.kind!r}")


# -- the run table of a fold map ---------------------------------------------------


@dataclass(frozen=True)
class EdgeRun:
    """One maximal subpath of a domain natural edge's image inside a single
    codomain natural edge.  dom interval along the domain edge's canonical
    orientation, cod interval along the codomain edge's; when `backwards` the
    dom low end maps to the cod high end."""

    domain_edge: str
    codomain_edge: str
    dom_lo: Fraction
    dom_hi: Fraction
    cod_lo: Fraction
    cod_hi: Fraction
    backwards: bool

    def covers(self, lo: Fraction, hi: Fraction) -> bool:
        return self.cod_lo <= lo and hi <= self.cod_hi

    def contains(self, t: Fraction) -> bool:
        return self.cod_lo < t < self.cod_hi

    def preimage_of(self, t: Fraction) -> Fraction:
        rel = (t - self.cod_lo) / (self.cod_hi - self.cod_lo)
        if self.backwards:
            rel = 1 - rel
        return self.dom_lo + rel * (self.dom_hi - self.dom_lo)

    def image_of(self, t: Fraction) -> Fraction:
        rel = (t - self.dom_lo) / (self.dom_hi - self.dom_lo)
        if self.backwards:
            rel = 1 - rel
        return self.cod_lo + rel * (self.cod_hi - self.cod_lo)


def edge_runs(f: GraphMap) -> Tuple[EdgeRun, ...]:
    """All runs of f, each domain natural edge walked once."""
    dom = f.domain.natural_structure()
    cod = f.codomain.natural_structure()
    if dom.degenerate or cod.degenerate:
        raise FoldError("run table undefined for degenerate (rank-1) levels")
    place: Dict[int, Tuple[str, Fraction, int]] = {}
    for e in cod.natural_edges:
        off = Fraction(0)
        for d in e.darts:
            L = f.codomain.dart_length(d)
            place[d] = (e.label, off, 1)
            place[d ^ 1] = (e.label, off + L, -1)
            off += L

    runs: List[EdgeRun] = []

    def flush(E_label, cur):
        a, b = cur["cod_a"], cur["cod_b"]
        runs.append(EdgeRun(
            domain_edge=E_label, codomain_edge=cur["lab"],
            dom_lo=cur["dom_lo"], dom_hi=cur["dom_hi"],
            cod_lo=min(a, b), cod_hi=max(a, b), backwards=cur["sgn"] < 0))

    for E in dom.natural_edges:
        dom_off = Fraction(0)
        cur = None
        for d in E.darts:
            Ld = f.domain.dart_length(d)
            ip = f.image_path(d)
            total = sum(f.codomain.dart_length(x) for x in ip)
            for x in ip:
                Lx = f.codomain.dart_length(x)
                lab, o, sgn = place[x]
                a, b = o, o + sgn * Lx
                share = Lx * Ld / total
                breaks = (cur is None
                          or cur["lab"] != lab
                          or cur["sgn"] != sgn
                          or cur["cod_b"] != a
                          or f.codomain.is_natural_vertex(f.codomain.origin(x)))
                if breaks:
                    if cur is not None:
                        flush(E.label, cur)
                    cur = {"dom_lo": dom_off, "dom_hi": dom_off + share,
                           "lab": lab, "cod_a": a, "cod_b": b, "sgn": sgn}
                else:
                    cur["dom_hi"] += share
                    cur["cod_b"] = b
                dom_off += share
        if cur is not None:
            flush(E.label, cur)
    return tuple(runs)


_RUN_CACHE: Dict[int, Tuple[EdgeRun, ...]] = {}


def _runs_into(f: GraphMap, cod_label: str) -> List[EdgeRun]:
    key = id(f)
    if key not in _RUN_CACHE:
        _RUN_CACHE[key] = edge_runs(f)
    out = [r for r in _RUN_CACHE[key] if r.codomain_edge == cod_label]
    out.sort(key=lambda r: (r.domain_edge, r.dom_lo))
    return out


def _runs_from(f: GraphMap, dom_label: str) -> List[EdgeRun]:
    key = id(f)
    if key not in _RUN_CACHE:
        _RUN_CACHE[key] = edge_runs(f)
    out = [r for r in _RUN_CACHE[key] if r.domain_edge == dom_label]
    out.sort(key=lambda r: r.dom_lo)
    return out


# -- fibers ------------------------------------------------------------------------


@dataclass(frozen=True)
class FiberNode:
    idx: int
    depth: int
    level: int
    parent: Optional[int]
    edge: Optional[str] = None
    pos: Optional[Fraction] = None          # None on an edge node = virtual
    vertex: object = None

    @property
    def realized(self) -> bool:
        return self.pos is not None or self.vertex is not None


class FiberTree:
    """Preimage tree of a basepoint.  Nodes at depth d live at level
    root.level - d; every crossing of the deeper level over a node's edge
    contributes a child, realized when the crossing actually covers the
    node's position."""

    def __init__(self, root: PointSpec, nodes: Sequence[FiberNode]):
        self.root = root
        self.nodes: Tuple[FiberNode, ...] = tuple(nodes)
        self._by_depth: Dict[int, List[FiberNode]] = {}
        for n in self.nodes:
            self._by_depth.setdefault(n.depth, []).append(n)

    @property
    def depth(self) -> int:
        return max(self._by_depth)

    def nodes_at(self, d: int) -> List[FiberNode]:
        return list(self._by_depth.get(d, []))

    def leaf_count(self, d: int) -> int:
        return len(self._by_depth.get(d, []))

    def realized_at(self, d: int) -> List[PointSpec]:
        out = []
        for n in self.nodes_at(d):
            if not n.realized:
                continue
            if n.vertex is not None:
                out.append(PointSpec(level=n.level, vertex=n.vertex))
            else:
                out.append(PointSpec(level=n.level, edge=n.edge, pos=n.pos))
        return out

    def children(self, idx: int) -> List[FiberNode]:
        return [n for n in self.nodes if n.parent == idx]

    def to_dict(self) -> dict:
        def node_dict(n: FiberNode) -> dict:
            if n.vertex is not None:
                loc = {"vertex": n.vertex}
            elif n.pos is not None:
                loc = {"edge": n.edge, "pos": fraction_str(n.pos)}
            else:
                loc = {"edge": n.edge, "virtual": True}
            kids = [node_dict(c) for c in self.children(n.idx)]
            out = {"level": n.level, **loc}
            if kids:
                out["children"] = kids
            return out

        return {"root": self.root.to_dict(),
                "counts": [self.leaf_count(d) for d in range(self.depth + 1)],
                "tree": node_dict(self.nodes[0])}


def compute_fiber(seq: SplitSequence, q: PointSpec, depth: int) -> FiberTree:
    """Preimage tree of q down `depth` levels."""
    seq._k(q.level)
    seq._k(q.level - depth)      # raises LevelOutOfRange when too deep
    resolve_point(seq, q)
    root = FiberNode(idx=0, depth=0, level=q.level, parent=None,
                     edge=q.edge, pos=q.pos, vertex=q.vertex)
    nodes: List[FiberNode] = [root]
    frontier = [root]
    for d in range(1, depth + 1):
        lv = q.level - d + 1                # nodes currently at this level
        f = seq.map_from(lv - 1)            # G_{lv-1} -> G_{lv}
        nxt: List[FiberNode] = []
        for node in frontier:
            if node.vertex is not None:
                for p in f.point_preimages(GraphPoint(vertex=node.vertex)):
                    spec = describe_point(seq, lv - 1, p)
                    child = FiberNode(idx=len(nodes), depth=d, level=lv - 1,
                                      parent=node.idx, edge=spec.edge,
                                      pos=spec.pos, vertex=spec.vertex)
                    nodes.append(child)
                    nxt.append(child)
                continue
            for run in _runs_into(f, node.edge):
                pos = None
                if node.pos is not None and run.contains(node.pos):
                    pos = run.preimage_of(node.pos)
                child = FiberNode(idx=len(nodes), depth=d, level=lv - 1,
                                  parent=node.idx, edge=run.domain_edge,
                                  pos=pos)
                nodes.append(child)
                nxt.append(child)
        frontier = nxt
    return FiberTree(PointSpec(level=q.level, edge=q.edge, pos=q.pos,
                               vertex=q.vertex), nodes)


class FiberPartitionSystem:
    """Nested partitions of a fiber tree's deepest node set: P_d groups the
    deepest nodes by their depth-d ancestor.  Construction validates the
    nesting axioms and that each refinement step splits into finitely many
    blocks that admit a binary breakdown."""

    def __init__(self, tree: FiberTree):
        self.tree = tree
        D = tree.depth
        parent = {n.idx: n.parent for n in tree.nodes}
        leaves = [n.idx for n in tree.nodes_at(D)]

        def ancestor(idx: int, d: int) -> int:
            steps = D - d
            for _ in range(steps):
                idx = parent[idx]
            return idx

        self.partitions: List[Tuple[Tuple[int, ...], ...]] = []
        for d in range(D + 1):
            blocks: Dict[int, List[int]] = {}
            for leaf in leaves:
                blocks.setdefault(ancestor(leaf, d), []).append(leaf)
            part = tuple(tuple(sorted(b)) for _, b in sorted(blocks.items()))
            self.partitions.append(part)
        self._validate()

    def _validate(self):
        all_leaves = set(self.partitions[0][0]) if self.partitions[0] else set()
        if len(self.partitions[0]) != 1:
            raise GraphError("depth-0 partition must be the whole fiber")
        for d, part in enumerate(self.partitions):
            seen: Set[int] = set()
            for block in part:
                if seen & set(block):
                    raise GraphError(f"partition {d} blocks overlap")
                seen |= set(block)
            if seen != all_leaves:
                raise GraphError(f"partition {d} does not cover the fiber")
        for d in range(len(self.partitions) - 1):
            coarse = {x: i for i, b in enumerate(self.partitions[d]) for x in b}
            for block in self.partitions[d + 1]:
                owners = {coarse[x] for x in block}
                if len(owners) != 1:
                    raise GraphError(
                        f"partition {d + 1} block straddles partition {d}")

    def binary_breakdown(self) -> List[Tuple[Tuple[int, ...], ...]]:
        """A chain of partitions from P_0 down to the finest level in which
        each step splits exactly one block into two."""
        chain = [self.partitions[0]]
        current = list(self.partitions[0])
        for d in range(len(self.partitions) - 1):
            fine = {x: b for b in self.partitions[d + 1] for x in b}
            for block in self.partitions[d]:
                subs = sorted({fine[x] for x in block})
                rest = block
                while len(subs) > 1:
                    head = subs.pop(0)
                    new_rest = tuple(sorted(x for s in subs for x in s))
                    i = current.index(rest)
                    current[i:i + 1] = [head, new_rest]
                    chain.append(tuple(current))
                    rest = new_rest
        return chain

    def to_dict(self) -> dict:
        return {"partitions": [[list(b) for b in part]
                               for part in self.partitions]}


def fiber_partition_system(tree: FiberTree) -> FiberPartitionSystem:
    return FiberPartitionSystem(tree)


# -- star chains and the singularity census ------------------------------------------


@dataclass(frozen=True)
class StarChainRecord:
    chain_id: int
    base: PointSpec                       # level-0 image of the chain
    chain: Tuple[PointSpec, ...]          # vertices at levels -1, -2, ...
    prong_counts: Tuple[int, ...]
    spans_depth: bool

    @property
    def stable_prongs(self) -> int:
        return self.prong_counts[-1]

    def to_dict(self) -> dict:
        return {"chain_id": self.chain_id, "base": self.base.to_dict(),
                "chain": [p.to_dict() for p in self.chain],
                "prong_counts": list(self.prong_counts),
                "spans_depth": self.spans_depth}


@dataclass(frozen=True)
class SingularityCensus:
    depth: int
    bound: int
    candidates: Tuple[StarChainRecord, ...]

    @property
    def size(self) -> int:
        return len(self.candidates)

    def to_csv_rows(self) -> List[Tuple[int, int, int]]:
        rows = []
        for rec in self.candidates:
            for d, m in enumerate(rec.prong_counts):
                rows.append((rec.chain_id, d + 1, m))
        return rows

    def to_dict(self) -> dict:
        return {"depth": self.depth, "bound": self.bound, "size": self.size,
                "candidates": [c.to_dict() for c in self.candidates]}


def scan_star_chains(seq: SplitSequence, depth: int
                     ) -> Tuple[List[StarChainRecord], SingularityCensus]:
    """Enumerate natural-vertex preimage chains with their prong counts and
    collect the >= 3-pronged spanning chains as singularity candidates.  The
    candidate count is hard-bounded by 2(n-1)."""
    depth = min(depth, seq.depth)
    if depth < 1:
        raise GraphError("star-chain scan needs depth >= 1")
    records: List[StarChainRecord] = []
    for cid, chain in enumerate(_natural_vertex_chains(seq, depth)):
        prongs = _chain_prong_trace(seq, chain)
        for a, b in zip(prongs, prongs[1:]):
            if b > a:
                raise GraphError(
                    f"prong count increased along chain {cid}: {prongs}")
        base = seq.maps[1].vertex_map[chain[0]]
        records.append(StarChainRecord(
            chain_id=cid,
            base=describe_point(seq, 0, GraphPoint(vertex=base)),
            chain=tuple(PointSpec(level=-(d + 1), vertex=x)
                        for d, x in enumerate(chain)),
            prong_counts=tuple(prongs),
            spans_depth=len(chain) >= depth))
    candidates = tuple(r for r in records
                       if r.spans_depth and r.stable_prongs >= 3)
    bound = 2 * (seq.rank - 1)
    if len(candidates) > bound:
        raise GraphError(
            f"{len(candidates)} singularity candidates exceed the bound {bound}")
    return records, SingularityCensus(depth=depth, bound=bound,
                                      candidates=candidates)


# -- turn lifts -----------------------------------------------------------------------


def _lift_edge_turn(f: GraphMap, turn: TurnSpec) -> List[TurnSpec]:
    """Lift an interval turn: anchored turns (through-points) lift along any
    run containing the anchor, honest intervals along runs covering them."""
    out = []
    for run in _runs_into(f, turn.edge):
        if turn.at is not None:
            if not run.contains(turn.at):
                continue
            L = f.domain.natural_edge(run.domain_edge).length
            out.append(TurnSpec(level=turn.level - 1, kind="edge",
                                edge=run.domain_edge, lo=Fraction(0), hi=L,
                                at=run.preimage_of(turn.at)))
            continue
        if not run.covers(turn.lo, turn.hi):
            continue
        a = run.preimage_of(turn.lo)
        b = run.preimage_of(turn.hi)
        lo, hi = (a, b) if a < b else (b, a)
        out.append(TurnSpec(level=turn.level - 1, kind="edge",
                            edge=run.domain_edge, lo=lo, hi=hi))
    return out


def _lift_vertex_turn(f: GraphMap, turn: TurnSpec
                      ) -> Tuple[List[TurnSpec], List[Tuple[str, Fraction]]]:
    """Lift a vertex turn through f.  Returns (vertex-turn lifts, interior
    through-point lifts as (natural edge label, offset))."""
    x = turn.vertex
    want = turn.darts
    vlifts: List[TurnSpec] = []
    for y in f.domain.vertices:
        if f.vertex_map[y] != x:
            continue
        ds = f.domain.darts_at(y)
        img = {e: f.image_path(e)[0] for e in ds}
        for i in range(len(ds)):
            for k in range(i + 1, len(ds)):
                if frozenset((img[ds[i]], img[ds[k]])) == want:
                    vlifts.append(TurnSpec(level=turn.level - 1, kind="vertex",
                                           vertex=y,
                                           darts=frozenset((ds[i], ds[k]))))
    through: List[Tuple[str, Fraction]] = []
    for c in f.domain.cells:
        d = 2 * c
        path = f.dart_map[d]
        L = f.domain.dart_length(d)
        total = sum(f.codomain.dart_length(e) for e in path)
        off = Fraction(0)
        for i in range(len(path) - 1):
            off += f.codomain.dart_length(path[i])
            w = f.codomain.origin(path[i + 1])
            if w != x:
                continue
            if frozenset((path[i] ^ 1, path[i + 1])) != want:
                continue
            t = off * L / total
            loc = natural_position(f.domain, GraphPoint(cell=c, pos=t))
            if loc is not None:
                through.append(loc)
    return vlifts, through


@dataclass(frozen=True)
class ShadowLevel:
    level: int
    pre_turns: Tuple[TurnSpec, ...]
    components: Tuple[Tuple[int, ...], ...]

    def to_dict(self) -> dict:
        return {"level": self.level,
                "pre_turns": [t.to_dict() for t in self.pre_turns],
                "components": [list(c) for c in self.components]}


def _group_components(turns: Sequence[TurnSpec]) -> Tuple[Tuple[int, ...], ...]:
    groups: Dict[object, List[int]] = {}
    for i, t in enumerate(turns):
        key = ("v", t.vertex) if t.kind == "vertex" else ("e", t.edge, t.lo,
                                                          t.hi, t.at, i)
        groups.setdefault(key, []).append(i)
    return tuple(tuple(g) for g in groups.values())


def pre_turn_shadows(seq: SplitSequence, I: TurnSpec, depth: int
                     ) -> List[ShadowLevel]:
    """Per level, all lifts of I mapped homeomorphically onto it, grouped into
    components of the shadow (lifts sharing a base vertex share a component)."""
    validate_turn(seq, I)
    seq._k(I.level - depth)
    out = [ShadowLevel(level=I.level, pre_turns=(I,),
                       components=_group_components([I]))]
    frontier: List[TurnSpec] = [I]
    for m in range(I.level, I.level - depth, -1):
        f = seq.map_from(m - 1)
        g_deep = seq.graph(m - 1)
        lifts: List[TurnSpec] = []
        for turn in frontier:
            if turn.kind == "edge":
                lifts.extend(_lift_edge_turn(f, turn))
            else:
                vlifts, through = _lift_vertex_turn(f, turn)
                lifts.extend(vlifts)
                for lab, off in through:
                    e = g_deep.natural_edge(lab)
                    lifts.append(TurnSpec(level=m - 1, kind="edge", edge=lab,
                                          lo=Fraction(0), hi=e.length, at=off))
        out.append(ShadowLevel(level=m - 1, pre_turns=tuple(lifts),
                               components=_group_components(lifts)))
        # only honest homeomorphic lifts keep lifting; full-interior interval
        # turns created by through-points continue as edge turns
        frontier = lifts
    return out


# -- turn-transversal decomposition ----------------------------------------------------


@dataclass(frozen=True)
class TurnDecomposition:
    turn: TurnSpec
    emitted: Tuple[Tuple[TurnSpec, str], ...]     # (pre-turn, weight edge id)
    unresolved: Tuple[TurnSpec, ...]              # vertex turns at the cutoff
    per_level_unresolved: Tuple[Tuple[int, int], ...]
    pseudo_singular_candidate: bool

    @property
    def remainder_count(self) -> int:
        return len(self.unresolved)

    def to_dict(self) -> dict:
        return {"turn": self.turn.to_dict(),
                "emitted": [{"pre_turn": t.to_dict(), "edge": e}
                            for t, e in self.emitted],
                "unresolved": [t.to_dict() for t in self.unresolved],
                "per_level_unresolved": [list(x)
                                         for x in self.per_level_unresolved],
                "pseudo_singular_candidate": self.pseudo_singular_candidate}


def decompose_turn_transversal(seq: SplitSequence, I: TurnSpec, q: PointSpec,
                               depth: int) -> TurnDecomposition:
    """Peel maximal edge pre-turns off the transversal of I over q, level by
    level: a lift interior to a natural edge is emitted with that edge's id;
    lifts at natural vertices recurse; whatever is still a vertex turn at the
    cutoff becomes the remainder."""
    validate_turn(seq, I)
    _check_basepoint(seq, I, q)
    if I.kind == "edge":
        return TurnDecomposition(turn=I, emitted=((I, I.edge),),
                                 unresolved=(), per_level_unresolved=(),
                                 pseudo_singular_candidate=False)
    seq._k(I.level - depth)
    emitted: List[Tuple[TurnSpec, str]] = []
    frontier: List[TurnSpec] = [I]
    per_level: List[Tuple[int, int]] = []
    for m in range(I.level, I.level - depth, -1):
        f = seq.map_from(m - 1)
        g_deep = seq.graph(m - 1)
        nxt: List[TurnSpec] = []
        for turn in frontier:
            vlifts, through = _lift_vertex_turn(f, turn)
            for lab, off in through:
                e = g_deep.natural_edge(lab)
                emitted.append((TurnSpec(level=m - 1, kind="edge", edge=lab,
                                         lo=Fraction(0), hi=e.length, at=off),
                                lab))
            for vt in vlifts:
                if g_deep.is_natural_vertex(vt.vertex):
                    nxt.append(vt)
                else:
                    loc = natural_position(g_deep, GraphPoint(vertex=vt.vertex))
                    lab, off = loc
                    e = g_deep.natural_edge(lab)
                    emitted.append((TurnSpec(level=m - 1, kind="edge",
                                             edge=lab, lo=Fraction(0),
                                             hi=e.length, at=off), lab))
        frontier = nxt
        per_level.append((m - 1, len(frontier)))
    return TurnDecomposition(
        turn=I, emitted=tuple(emitted), unresolved=tuple(frontier),
        per_level_unresolved=tuple(per_level),
        pseudo_singular_candidate=bool(frontier))


def _check_basepoint(seq: SplitSequence, I: TurnSpec, q: PointSpec):
    if q.level != I.level:
        raise GraphError(
            f"basepoint level {q.level} differs from turn level {I.level}")
    resolve_point(seq, q)
    if I.kind == "edge":
        if q.is_vertex or q.edge != I.edge or not (I.lo < q.pos < I.hi):
            raise GraphError("basepoint is not interior to the turn interval")
        return
    g = seq.graph(I.level)
    if q.is_vertex:
        if q.vertex != I.vertex:
            raise GraphError("vertex basepoint is not the turn vertex")
        return
    germ_edges = set()
    for d in I.darts:
        e = g.natural_edge_of_cell(d >> 1)
        if e is not None:
            germ_edges.add(e.label)
    if q.edge not in germ_edges:
        raise GraphError(
            f"basepoint edge {q.edge!r} is not adjacent to the turn")


# -- partial-leaf tracing ----------------------------------------------------------------


@dataclass(frozen=True)
class LeafTraceRecord:
    start: PointSpec
    steps_requested: int
    hops: Tuple[dict, ...]
    closed: bool
    witness: Optional[dict]

    @property
    def injective(self) -> bool:
        return not self.closed

    @property
    def final_length(self) -> Fraction:
        return self.hops[-1]["segment_length"]

    def to_dict(self) -> dict:
        return {"start": self.start.to_dict(),
                "steps_requested": self.steps_requested,
                "hops": [dict(h, segment_length=fraction_str(
                    h["segment_length"])) for h in self.hops],
                "closed": self.closed,
                "injective": self.injective,
                "witness": self.witness}


def trace_partial_leaf(seq: SplitSequence, start: PointSpec, steps: int,
                       depth: int) -> LeafTraceRecord:
    """Trace the partial leaf through `start`: one hop re-anchors the running
    point through one overlapping lift a level deeper, extending the traced
    segment to the new anchor edge's level-0 image path.  Fold maps are
    piecewise isometries, so that path's length (with multiplicity) equals
    the anchor edge's own length; the traced segment length is the running
    maximum, and a hop grows iff it strictly beats it.  Among the candidate
    lifts the shortest edge is taken first, so finite leaves are found when
    they exist.  If the trace is still stalled after the requested hops, the
    stall is chased down to the audited floor: a persistent single-crossing
    stall is a closed (finite-leaf) witness, while a branching stall cannot
    be certified either way and raises InsufficientDepth."""
    if start.level != 0:
        raise GraphError("leaf traces start at level 0")
    if start.is_vertex:
        raise GraphError("leaf traces start at a leaf-interior point")
    gp = resolve_point(seq, start)
    if gp.is_vertex:
        raise GraphError("start position coincides with a vertex")
    floor = -min(depth, seq.depth)
    if -steps < floor:
        raise InsufficientDepth(
            f"{steps} hops need levels below the audited floor {floor}")
    level, edge, pos = 0, start.edge, start.pos
    seg = seq.graphs[0].natural_edge(edge).length
    hops: List[dict] = [{"level": 0, "edge": edge,
                         "segment_length": seg, "grew": True}]

    def descend():
        """One level down through the lift with the shortest anchor edge.
        Returns (grew, single-crossing carry)."""
        nonlocal level, edge, pos, seg
        f = seq.map_from(level - 1)
        cands = []
        for run in _runs_into(f, edge):
            if not run.contains(pos):
                continue
            lab = run.domain_edge
            length = f.domain.natural_edge(lab).length
            single = len(_runs_from(f, lab)) == 1
            cands.append((length, lab, run.preimage_of(pos), single))
        if not cands:
            raise InsufficientDepth(
                f"anchor sits on a crossing boundary at level {level - 1}")
        length, lab, npos, single = min(
            cands, key=lambda t: (t[0], t[1], t[2]))
        level -= 1
        edge, pos = lab, npos
        grew = length > seg
        seg = max(seg, length)
        return grew, single

    closed = False
    witness = None
    stalled = False
    last_single = True
    for _ in range(steps):
        grew, last_single = descend()
        stalled = not grew
        hops.append({"level": level, "edge": edge,
                     "segment_length": seg, "grew": grew})
    if stalled:
        # chase the stall to the audited floor to certify (or refute) closure
        chain = [(level, edge)]
        homeo = last_single
        while level - 1 >= floor:
            grew, single = descend()
            if grew:
                break
            chain.append((level, edge))
            homeo = homeo and single
        else:
            if homeo:
                closed = True
                witness = {"chain": [[lvl, lab] for lvl, lab in chain],
                           "reason": "single-crossing carry with no growth "
                                     "down to the audited floor"}
            else:
                raise InsufficientDepth(
                    f"no growth by level {floor} and the stalled lifts are "
                    f"not a single-crossing carry")
    return LeafTraceRecord(start=start, steps_requested=steps,
                           hops=tuple(hops), closed=closed, witness=witness)


# -- genericity ---------------------------------------------------------------------------


def is_generic_point(seq: SplitSequence, q: PointSpec, depth: int) -> bool:
    """Generic = interior, never mapping onto a vertex at shallower levels,
    and off every deeper vertex's image at q's level."""
    if q.is_vertex:
        return False
    gp = resolve_point(seq, q)
    if gp.is_vertex:
        return False
    p = gp
    for m in range(q.level, 0):
        p = seq.maps[seq._k(m)].map_point(p)
        if p.is_vertex:
            return False
    lo = max(q.level - depth, -seq.depth)
    for i in range(q.level - 1, lo - 1, -1):
        for w in seq.graph(i).vertices:
            im = seq.point_image(GraphPoint(vertex=w), i, q.level)
            if im.key() == gp.key():
                return False
    return True


def make_generic(seq: SplitSequence, q: PointSpec, depth: int,
                 offset: Fraction = Fraction(1, 127),
                 tries: int = 64) -> PointSpec:
    """Perturb an edge position until it is generic to `depth`."""
    if q.is_vertex:
        raise GraphError("cannot perturb a vertex basepoint")
    length = seq.graph(q.level).natural_edge(q.edge).length
    for i in range(tries):
        pos = (q.pos + i * offset * length) % length
        if pos == 0:
            continue
        cand = PointSpec(level=q.level, edge=q.edge, pos=pos)
        if is_generic_point(seq, cand, depth):
            return cand
    raise GraphError(
        f"no generic position found near {q.edge!r}:{q.pos} in {tries} tries")
