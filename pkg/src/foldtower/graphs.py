"""Metric core graphs with a half-edge (dart) representation.

A graph is stored as a set of cells (metric edges with rational lengths); the
dart ids of cell ``c`` are ``2c`` (forward) and ``2c+1`` (backward), so dart
reversal is ``d ^ 1``.  Valence-2 vertices are ordinary points of the geometry
(subdivision points); the *natural* structure -- vertices of valence >= 3 and
maximal edge paths between them -- is derived, not stored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple


class GraphError(ValueError):
    pass


class DisconnectedGraph(GraphError):
    pass


class LowValenceVertex(GraphError):
    def __init__(self, vertex):
        self.vertex = vertex
        super().__init__(f"vertex {vertex!r} has valence < 2")


class NonPositiveLength(GraphError):
    def __init__(self, edge):
        self.edge = edge
        super().__init__(f"edge {edge!r} has non-positive length")


class NonComposablePath(GraphError):
    pass


def as_fraction(x) -> Fraction:
    """Accept Fraction, int, or 'p/q' string."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"not an exact rational: {x!r}")


def fraction_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)


@dataclass(frozen=True)
class Cell:
    """One metric edge of the cell structure."""

    u: object          # origin vertex of the forward dart
    v: object          # terminus vertex of the forward dart
    length: Fraction
    label: Optional[str] = None   # natural-edge label this cell belongs to


@dataclass(frozen=True)
class NaturalEdge:
    label: str
    darts: Tuple[int, ...]     # oriented cell-dart path from `start` to `end`
    start: object
    end: object
    length: Fraction


@dataclass(frozen=True)
class NaturalStructure:
    natural_vertices: Tuple[object, ...]
    natural_edges: Tuple[NaturalEdge, ...]
    edge_index: Dict[str, int]
    degenerate: bool            # rank-1 circle without natural vertices
    bounds_ok: bool             # V <= 2(n-1) and E <= 3(n-1)

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(e.label for e in self.natural_edges)


class CoreGraph:
    """Connected metric graph without valence-1 vertices.

    Immutable after construction.  `cells` maps cell id -> Cell; vertex ids are
    arbitrary hashables.
    """

    def __init__(self, cells: Dict[int, Cell], check: bool = True):
        self.cells: Dict[int, Cell] = dict(cells)
        self._adj: Dict[object, List[int]] = {}
        for c, cell in self.cells.items():
            if cell.length <= 0:
                raise NonPositiveLength(cell.label or c)
            self._adj.setdefault(cell.u, []).append(2 * c)
            self._adj.setdefault(cell.v, []).append(2 * c + 1)
        for v in self._adj:
            self._adj[v].sort()
        if check:
            self._validate()
        self._natural: Optional[NaturalStructure] = None

    # -- basic structure ---------------------------------------------------

    @property
    def vertices(self) -> Tuple[object, ...]:
        return tuple(self._adj.keys())

    @property
    def darts(self) -> Tuple[int, ...]:
        return tuple(d for c in self.cells for d in (2 * c, 2 * c + 1))

    def reversal(self, d: int) -> int:
        return d ^ 1

    def cell_of(self, d: int) -> int:
        return d >> 1

    def origin(self, d: int) -> object:
        cell = self.cells[d >> 1]
        return cell.u if d % 2 == 0 else cell.v

    def terminus(self, d: int) -> object:
        return self.origin(d ^ 1)

    def dart_length(self, d: int) -> Fraction:
        return self.cells[d >> 1].length

    def darts_at(self, v) -> Tuple[int, ...]:
        return tuple(self._adj.get(v, ()))

    def valence(self, v) -> int:
        return len(self._adj.get(v, ()))

    @property
    def rank(self) -> int:
        return len(self.cells) - len(self._adj) + 1

    def natural_vertices(self) -> Tuple[object, ...]:
        return tuple(v for v in self._adj if len(self._adj[v]) != 2)

    def is_natural_vertex(self, v) -> bool:
        return v in self._adj and len(self._adj[v]) != 2

    # -- validation --------------------------------------------------------

    def _validate(self):
        if not self.cells:
            raise GraphError("empty graph")
        for v, ds in self._adj.items():
            if len(ds) < 2:
                raise LowValenceVertex(v)
        seen = set()
        stack = [next(iter(self._adj))]
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            for d in self._adj[v]:
                w = self.terminus(d)
                if w not in seen:
                    stack.append(w)
        if len(seen) != len(self._adj):
            raise DisconnectedGraph(f"{len(self._adj) - len(seen)} unreachable vertices")

    # -- natural structure ---------------------------------------------------

    def natural_structure(self) -> NaturalStructure:
        if self._natural is not None:
            return self._natural
        naturals = set(self.natural_vertices())
        n = self.rank
        if not naturals:
            # rank-1 circle: every vertex has valence 2; no canonical natural edge
            self._natural = NaturalStructure((), (), {}, degenerate=True, bounds_ok=True)
            return self._natural

        def extend(d: int) -> List[int]:
            """Walk forward from dart d through valence-2 vertices."""
            path = [d]
            while True:
                w = self.terminus(path[-1])
                if w in naturals:
                    return path
                nxt = [e for e in self._adj[w] if e != (path[-1] ^ 1)]
                assert len(nxt) == 1, "valence-2 point with branching"
                path.append(nxt[0])

        paths: List[Tuple[int, ...]] = []
        used = set()
        for v in sorted(naturals, key=repr):
            for d in self._adj[v]:
                if d in used:
                    continue
                path = extend(d)
                rev = tuple(e ^ 1 for e in reversed(path))
                for e in path:
                    used.add(e)
                    used.add(e ^ 1)
                # canonical orientation: smaller leading dart id
                paths.append(tuple(path) if path[0] <= rev[0] else rev)
        paths.sort(key=lambda p: min(min(d, d ^ 1) for d in p))

        edges: List[NaturalEdge] = []
        fresh = 0
        seen_labels = set()
        for p in paths:
            labels = sorted({self.cells[d >> 1].label for d in p
                             if self.cells[d >> 1].label is not None})
            if len(labels) == 1:
                label = labels[0]
            elif not labels:
                label = None
            else:
                label = "+".join(labels)
            if label is None or label in seen_labels:
                while True:
                    cand = "s" if fresh == 0 else f"s{fresh + 1}"
                    fresh += 1
                    if cand not in seen_labels:
                        label = cand
                        break
            seen_labels.add(label)
            edges.append(NaturalEdge(
                label=label,
                darts=p,
                start=self.origin(p[0]),
                end=self.terminus(p[-1]),
                length=sum(self.dart_length(d) for d in p),
            ))
        V, E = len(naturals), len(edges)
        bounds_ok = V <= 2 * (n - 1) and E <= 3 * (n - 1)
        self._natural = NaturalStructure(
            natural_vertices=tuple(sorted(naturals, key=repr)),
            natural_edges=tuple(edges),
            edge_index={e.label: i for i, e in enumerate(edges)},
            degenerate=False,
            bounds_ok=bounds_ok,
        )
        return self._natural

    def natural_edge(self, label: str) -> NaturalEdge:
        ns = self.natural_structure()
        return ns.natural_edges[ns.edge_index[label]]

    def natural_edge_of_cell(self, c: int) -> Optional[NaturalEdge]:
        for e in self.natural_structure().natural_edges:
            if any(d >> 1 == c for d in e.darts):
                return e
        return None

    # -- serialization -------------------------------------------------------

    def to_spec(self) -> dict:
        verts = sorted(self._adj, key=repr)
        edges = []
        for c, cell in sorted(self.cells.items()):
            rec = {"id": cell.label if cell.label is not None else str(c),
                   "from": cell.u, "to": cell.v, "len": fraction_str(cell.length)}
            if cell.label is None:
                rec["label"] = None     # unlabeled splice material
            edges.append(rec)
        return {"vertices": list(verts), "edges": edges}

    def __repr__(self):
        return (f"CoreGraph(rank={self.rank}, vertices={len(self._adj)}, "
                f"cells={len(self.cells)})")


def build_core_graph(spec: dict) -> CoreGraph:
    """Build and validate a graph from {vertices:[id], edges:[{id,from,to,len}]}."""
    declared = set(spec.get("vertices", []))
    cells: Dict[int, Cell] = {}
    for i, e in enumerate(spec["edges"]):
        length = as_fraction(e["len"])
        if length <= 0:
            raise NonPositiveLength(e.get("id", i))
        if e["from"] not in declared or e["to"] not in declared:
            raise GraphError(f"edge {e.get('id', i)!r} uses undeclared vertex")
        if "label" in e:
            label = e["label"]          # explicit, possibly None
        elif "id" in e:
            label = str(e["id"])
        else:
            label = None
        cells[i] = Cell(u=e["from"], v=e["to"], length=length, label=label)
    g = CoreGraph(cells)
    missing = declared - set(g.vertices)
    if missing:
        # declared but isolated vertices
        raise LowValenceVertex(sorted(missing, key=repr)[0])
    return g


# -- edge paths --------------------------------------------------------------

def path_composable(g: CoreGraph, path: Sequence[int]) -> bool:
    return all(g.terminus(path[i]) == g.origin(path[i + 1]) for i in range(len(path) - 1))


def tighten_path(g: CoreGraph, path: Sequence[int]) -> Tuple[int, ...]:
    """Remove adjacent dart/reversal pairs until the path is reduced."""
    if not path_composable(g, path):
        raise NonComposablePath(f"path {list(path)} is not composable")
    out: List[int] = []
    for d in path:
        if out and out[-1] == (d ^ 1):
            out.pop()
        else:
            out.append(d)
    return tuple(out)


def path_is_reduced(path: Sequence[int]) -> bool:
    return all(path[i + 1] != (path[i] ^ 1) for i in range(len(path) - 1))


# -- points on a graph --------------------------------------------------------

@dataclass(frozen=True)
class GraphPoint:
    """A point: either a vertex, or an interior position of a cell.

    Interior positions are measured along the cell's forward dart, 0 < pos < length.
    """

    vertex: object = None
    cell: Optional[int] = None
    pos: Optional[Fraction] = None

    @property
    def is_vertex(self) -> bool:
        return self.vertex is not None

    def key(self):
        if self.is_vertex:
            return ("v", self.vertex)
        return ("c", self.cell, self.pos)


def point_on_dart(g: CoreGraph, d: int, t: Fraction) -> GraphPoint:
    """Point at distance t from origin(d) along dart d, normalized to a vertex
    when t hits an endpoint."""
    L = g.dart_length(d)
    if t < 0 or t > L:
        raise GraphError(f"position {t} outside dart of length {L}")
    if t == 0:
        return GraphPoint(vertex=g.origin(d))
    if t == L:
        return GraphPoint(vertex=g.terminus(d))
    c = d >> 1
    return GraphPoint(cell=c, pos=t if d % 2 == 0 else L - t)


def point_on_path(g: CoreGraph, path: Sequence[int], t: Fraction) -> GraphPoint:
    """Point at distance t along a dart path."""
    for d in path:
        L = g.dart_length(d)
        if t <= L:
            return point_on_dart(g, d, t)
        t -= L
    raise GraphError("position beyond path length")


def point_on_natural_edge(g: CoreGraph, label: str, t: Fraction) -> GraphPoint:
    return point_on_path(g, g.natural_edge(label).darts, t)


def natural_position(g: CoreGraph, p: GraphPoint) -> Optional[Tuple[str, Fraction]]:
    """(label, distance from natural start) for a point interior to a natural edge."""
    if p.is_vertex and g.is_natural_vertex(p.vertex):
        return None
    for e in g.natural_structure().natural_edges:
        offset = Fraction(0)
        for i, d in enumerate(e.darts):
            L = g.dart_length(d)
            if not p.is_vertex and (d >> 1) == p.cell:
                t = p.pos if d % 2 == 0 else L - p.pos
                return (e.label, offset + t)
            if p.is_vertex and i < len(e.darts) - 1 and g.terminus(d) == p.vertex:
                return (e.label, offset + L)
            offset += L
    return None
