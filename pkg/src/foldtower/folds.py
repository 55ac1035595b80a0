"""Fold moves on core graphs and the maps they induce.

A fold at a vertex v identifies initial segments of two natural edges leaving
v: l1(t) ~ l2(t) for t in (0, L].  The quotient map is encoded as a GraphMap
(vertex map plus dart -> dart-path), built so that every domain cell maps onto
a path of codomain cells at constant speed.

Transition matrices of single folds are honest component counts of
int(E_k) ∩ f⁻¹(int(E_i)); composite maps remember their fold factorization and
their matrix is the ordered product of the factors' matrices (the matrices
compose level by level, which is the object the measure pipeline consumes).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .graphs import (
    Cell,
    CoreGraph,
    GraphError,
    GraphPoint,
    LowValenceVertex,
    NaturalEdge,
    as_fraction,
    fraction_str,
    path_is_reduced,
    point_on_dart,
)


class FoldError(GraphError):
    pass


class InvalidExtent(FoldError):
    pass


class SelfDartFold(FoldError):
    pass


class RankDrop(FoldError):
    pass


FULL = "full"


@dataclass(frozen=True)
class FoldSpec:
    """A fold move: identify initial segments of the natural edges led by
    dart1 and dart2 at `vertex`, up to `extent` (a Fraction, or FULL)."""

    vertex: object
    dart1: int
    dart2: int
    extent: object = FULL   # FULL or a positive Fraction

    def is_full(self) -> bool:
        return self.extent == FULL

    def to_dict(self) -> dict:
        ext = FULL if self.is_full() else fraction_str(as_fraction(self.extent))
        return {"vertex": self.vertex, "dart1": self.dart1, "dart2": self.dart2,
                "extent": ext}

    @staticmethod
    def from_dict(d: dict) -> "FoldSpec":
        ext = d["extent"]
        return FoldSpec(d["vertex"], d["dart1"], d["dart2"],
                        FULL if ext == FULL else as_fraction(ext))


@dataclass(frozen=True)
class FoldReport:
    axioms_ok: bool
    strongly_proper: bool
    messages: Tuple[str, ...] = ()


@dataclass(frozen=True)
class TransitionMatrix:
    """Nonnegative integer matrix indexed by natural-edge labels.

    Rows = codomain natural edges, columns = domain natural edges, both in
    sorted label order; entry(i, k) counts components of
    int(E_k) ∩ f⁻¹(int(E_i)).
    """

    rows: Tuple[str, ...]
    cols: Tuple[str, ...]
    entries: Tuple[Tuple[int, ...], ...]

    def entry(self, row_label: str, col_label: str) -> int:
        return self.entries[self.rows.index(row_label)][self.cols.index(col_label)]

    def column_sum(self, col_label: str) -> int:
        k = self.cols.index(col_label)
        return sum(row[k] for row in self.entries)

    def row_sum(self, row_label: str) -> int:
        return sum(self.entries[self.rows.index(row_label)])

    @property
    def is_positive(self) -> bool:
        return all(x >= 1 for row in self.entries for x in row)

    def column(self, col_label: str) -> Tuple[int, ...]:
        k = self.cols.index(col_label)
        return tuple(row[k] for row in self.entries)

    def matmul(self, other: "TransitionMatrix") -> "TransitionMatrix":
        """self @ other, for self's domain matching other's codomain."""
        if self.cols != other.rows:
            raise FoldError(f"matrix shapes do not compose: {self.cols} vs {other.rows}")
        prod = tuple(
            tuple(sum(self.entries[i][m] * other.entries[m][k]
                      for m in range(len(self.cols)))
                  for k in range(len(other.cols)))
            for i in range(len(self.rows))
        )
        return TransitionMatrix(self.rows, other.cols, prod)

    def to_dict(self) -> dict:
        return {"rows": list(self.rows), "cols": list(self.cols),
                "entries": [list(r) for r in self.entries]}

    @staticmethod
    def identity(labels: Sequence[str]) -> "TransitionMatrix":
        labels = tuple(sorted(labels))
        return TransitionMatrix(
            labels, labels,
            tuple(tuple(1 if i == k else 0 for k in range(len(labels)))
                  for i in range(len(labels))))


def natural_path_from(g: CoreGraph, d: int) -> Tuple[int, ...]:
    """The maximal natural-edge path starting with dart d (walks through
    valence-2 points until a natural vertex)."""
    path = [d]
    while not g.is_natural_vertex(g.terminus(path[-1])):
        w = g.terminus(path[-1])
        nxt = [e for e in g.darts_at(w) if e != (path[-1] ^ 1)]
        if len(nxt) != 1:
            raise GraphError(f"point {w!r} is not a valence-2 point")
        path.append(nxt[0])
    return tuple(path)


class GraphMap:
    """A map between core graphs: vertex map + dart -> composable dart path.

    dart_map holds even darts only; odd darts map to reversed paths
    (reversal equivariance by construction).  Each cell maps onto its image
    path at constant speed.
    """

    def __init__(self, domain: CoreGraph, codomain: CoreGraph,
                 vertex_map: Dict[object, object],
                 dart_map: Dict[int, Tuple[int, ...]],
                 fold: Optional[FoldSpec] = None,
                 factors: Optional[Tuple["GraphMap", ...]] = None):
        self.domain = domain
        self.codomain = codomain
        self.vertex_map = dict(vertex_map)
        self.dart_map = {d: tuple(p) for d, p in dart_map.items()}
        self.fold = fold
        self.factors = factors if factors is not None else (self,)
        self._matrix: Optional[TransitionMatrix] = None

    # -- structure ----------------------------------------------------------

    def image_path(self, d: int) -> Tuple[int, ...]:
        if d % 2 == 0:
            return self.dart_map[d]
        return tuple(e ^ 1 for e in reversed(self.dart_map[d ^ 1]))

    def path_image(self, path: Sequence[int]) -> Tuple[int, ...]:
        out: List[int] = []
        for d in path:
            out.extend(self.image_path(d))
        return tuple(out)

    def validate(self) -> List[str]:
        """Continuity / composability problems, empty when the map is valid."""
        problems = []
        for v in self.domain.vertices:
            if v not in self.vertex_map:
                problems.append(f"vertex {v!r} has no image")
        for c in self.domain.cells:
            d = 2 * c
            if d not in self.dart_map:
                problems.append(f"dart {d} has no image path")
                continue
            p = self.dart_map[d]
            if not p:
                problems.append(f"dart {d} maps to an empty path")
                continue
            for i in range(len(p) - 1):
                if self.codomain.terminus(p[i]) != self.codomain.origin(p[i + 1]):
                    problems.append(f"image path of dart {d} breaks at step {i}")
            if self.codomain.origin(p[0]) != self.vertex_map.get(self.domain.origin(d)):
                problems.append(f"image path of dart {d} starts off its vertex image")
            if self.codomain.terminus(p[-1]) != self.vertex_map.get(self.domain.terminus(d)):
                problems.append(f"image path of dart {d} ends off its vertex image")
        return problems

    def is_isometric_on_cells(self) -> bool:
        return all(
            self.domain.dart_length(2 * c)
            == sum(self.codomain.dart_length(e) for e in self.dart_map[2 * c])
            for c in self.domain.cells)

    # -- pointwise ------------------------------------------------------------

    def map_point(self, p: GraphPoint) -> GraphPoint:
        if p.is_vertex:
            return GraphPoint(vertex=self.vertex_map[p.vertex])
        d = 2 * p.cell
        path = self.dart_map[d]
        L = self.domain.dart_length(d)
        total = sum(self.codomain.dart_length(e) for e in path)
        s = p.pos * total / L
        for e in path:
            le = self.codomain.dart_length(e)
            if s <= le:
                return point_on_dart(self.codomain, e, s)
            s -= le
        return point_on_dart(self.codomain, path[-1], self.codomain.dart_length(path[-1]))

    def point_preimages(self, q: GraphPoint) -> List[GraphPoint]:
        """All domain points mapping to q."""
        out: List[GraphPoint] = []
        if q.is_vertex:
            out.extend(GraphPoint(vertex=v) for v in self.domain.vertices
                       if self.vertex_map[v] == q.vertex)
        for c in self.domain.cells:
            d = 2 * c
            path = self.dart_map[d]
            L = self.domain.dart_length(d)
            total = sum(self.codomain.dart_length(e) for e in path)
            offset = Fraction(0)
            for e in path:
                le = self.codomain.dart_length(e)
                hit: Optional[Fraction] = None
                if not q.is_vertex and (e >> 1) == q.cell:
                    hit = q.pos if e % 2 == 0 else le - q.pos
                elif q.is_vertex and self.codomain.origin(e) == q.vertex and offset > 0:
                    hit = Fraction(0)
                if hit is not None:
                    t = (offset + hit) * L / total
                    if 0 < t < L:
                        out.append(GraphPoint(cell=c, pos=t))
                offset += le
        # dedupe (a vertex-interior hit can be seen from two path darts)
        seen = set()
        uniq = []
        for p in out:
            if p.key() not in seen:
                seen.add(p.key())
                uniq.append(p)
        return uniq

    def germ_image(self, d: int, t: Fraction) -> Tuple[int, Fraction]:
        """Image of the germ at distance t along dart d, pointing along d.

        Returns (dart, offset) in the codomain with the same convention.
        """
        cell_dart = d if d % 2 == 0 else d ^ 1
        path = self.image_path(d)
        L = self.domain.dart_length(d)
        total = sum(self.codomain.dart_length(e) for e in path)
        s = t * total / L
        for e in path:
            le = self.codomain.dart_length(e)
            if s < le:
                return (e, s)
            s -= le
        raise GraphError("germ at the far end of its dart has no forward image")

    def __repr__(self):
        kind = "fold" if self.fold is not None else f"composite[{len(self.factors)}]"
        return f"GraphMap({kind}: {self.domain!r} -> {self.codomain!r})"


def identity_map(g: CoreGraph) -> GraphMap:
    return GraphMap(g, g, {v: v for v in g.vertices},
                    {2 * c: (2 * c,) for c in g.cells})


def compose(f: GraphMap, g: GraphMap) -> GraphMap:
    """f ∘ g (g applied first).  Tightening-free concatenation of dart paths."""
    if g.codomain is not f.domain and g.codomain.cells != f.domain.cells:
        raise FoldError("maps do not compose: codomain/domain mismatch")
    vmap = {v: f.vertex_map[w] for v, w in g.vertex_map.items()}
    dmap = {d: f.path_image(p) for d, p in g.dart_map.items()}
    return GraphMap(g.domain, f.codomain, vmap, dmap,
                    factors=tuple(g.factors) + tuple(f.factors))


# -- fold construction ---------------------------------------------------------


class _Surgeon:
    """Cuts domain cells into pieces and assembles the fold codomain."""

    def __init__(self, g: CoreGraph):
        self.g = g
        self.cuts: Dict[int, List[Fraction]] = {c: [] for c in g.cells}
        self._next_cell = max(g.cells) + 1 if g.cells else 0
        self._next_vertex = 0
        self.pieces: Dict[int, List[Tuple[int, Fraction, object, object]]] = {}

    def request_cut(self, c: int, t: Fraction):
        if 0 < t < self.g.cells[c].length and t not in self.cuts[c]:
            self.cuts[c].append(t)

    def fresh_vertex(self):
        existing = set(self.g.vertices)
        while True:
            v = f"q{self._next_vertex}"
            self._next_vertex += 1
            if v not in existing:
                return v

    def build_pieces(self):
        for c, cell in self.g.cells.items():
            ts = sorted(self.cuts[c])
            bounds = [Fraction(0)] + ts + [cell.length]
            verts = [cell.u] + [self.fresh_vertex() for _ in ts] + [cell.v]
            plist = []
            for i in range(len(bounds) - 1):
                if len(bounds) == 2:
                    pid = c   # uncut cells keep their id (stable ordering)
                else:
                    pid = self._next_cell
                    self._next_cell += 1
                plist.append((pid, bounds[i + 1] - bounds[i], verts[i], verts[i + 1]))
            self.pieces[c] = plist

    def piece_darts_forward(self, c: int) -> List[int]:
        return [2 * p[0] for p in self.pieces[c]]

    def piece_darts_along(self, d: int) -> List[int]:
        if d % 2 == 0:
            return self.piece_darts_forward(d >> 1)
        return [e ^ 1 for e in reversed(self.piece_darts_forward(d >> 1))]

    def piece_length(self, piece_dart: int) -> Fraction:
        c = piece_dart >> 1
        for orig, plist in self.pieces.items():
            for pid, ln, u, v in plist:
                if pid == c:
                    return ln
        raise KeyError(piece_dart)

    def piece_ends(self, piece_dart: int) -> Tuple[object, object]:
        c = piece_dart >> 1
        for orig, plist in self.pieces.items():
            for pid, ln, u, v in plist:
                if pid == c:
                    return (u, v) if piece_dart % 2 == 0 else (v, u)
        raise KeyError(piece_dart)


def _chain(surgeon: _Surgeon, path: Sequence[int], L: Fraction) -> List[int]:
    """Piece darts covering [0, L] along the cut path."""
    out = []
    acc = Fraction(0)
    for d in path:
        for pd in surgeon.piece_darts_along(d):
            if acc >= L:
                return out
            out.append(pd)
            acc += surgeon.piece_length(pd)
    if acc < L:
        raise InvalidExtent(f"extent {L} exceeds path length {acc}")
    return out


def _boundary_positions(g: CoreGraph, path: Sequence[int], L: Fraction) -> List[Fraction]:
    """Distances from the path start of internal cell boundaries within (0, L)."""
    out = []
    acc = Fraction(0)
    for d in path:
        acc += g.dart_length(d)
        if acc < L:
            out.append(acc)
        else:
            break
    return out


def _cut_at(surgeon: _Surgeon, path: Sequence[int], t: Fraction):
    acc = Fraction(0)
    for d in path:
        L = surgeon.g.dart_length(d)
        if acc + L >= t:
            within = t - acc
            c = d >> 1
            surgeon.request_cut(c, within if d % 2 == 0 else L - within)
            return
        acc += L
    raise InvalidExtent(f"cut position {t} beyond path")


def apply_fold(g: CoreGraph, spec: FoldSpec) -> GraphMap:
    """Quotient by the fold and return the induced GraphMap."""
    v, d1, d2 = spec.vertex, spec.dart1, spec.dart2
    if d1 == d2:
        raise SelfDartFold(f"fold needs two distinct darts, got {d1} twice")
    if g.origin(d1) != v or g.origin(d2) != v:
        raise FoldError(f"darts {d1},{d2} do not share origin {v!r}")
    if g.valence(v) < 3:
        raise LowValenceVertex(v)

    X = natural_path_from(g, d1)
    Y = natural_path_from(g, d2)
    lenX = sum(g.dart_length(d) for d in X)
    lenY = sum(g.dart_length(d) for d in Y)
    if spec.is_full():
        L = min(lenX, lenY)
    else:
        L = as_fraction(spec.extent)
        if not (0 < L < lenX and L < lenY):
            raise InvalidExtent(
                f"partial extent {L} must lie strictly inside both edges "
                f"({lenX}, {lenY})")

    from .graphs import point_on_path
    px = point_on_path(g, X, L)
    py = point_on_path(g, Y, L)
    if px.key() == py.key():
        raise RankDrop(f"fold endpoints coincide at {px}")

    surgeon = _Surgeon(g)
    refinement = sorted(set(_boundary_positions(g, X, L))
                        | set(_boundary_positions(g, Y, L)))
    for t in refinement + [L]:
        _cut_at(surgeon, X, t)
        _cut_at(surgeon, Y, t)
    surgeon.build_pieces()

    chain_x = _chain(surgeon, X, L)
    chain_y = _chain(surgeon, Y, L)
    assert len(chain_x) == len(chain_y), "refined chains must align"
    assert all(surgeon.piece_length(a) == surgeon.piece_length(b)
               for a, b in zip(chain_x, chain_y)), "chain pieces must be isometric"

    # union-find over vertices of the cut graph
    parent: Dict[object, object] = {}

    def find(a):
        parent.setdefault(a, a)
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            # keep domain vertex ids when merging with fresh cut vertices
            if isinstance(ra, str) and ra.startswith("q") and ra not in g.vertices:
                ra, rb = rb, ra
            parent[rb] = ra

    for a, b in zip(chain_x, chain_y):
        ua, va_ = surgeon.piece_ends(a)
        ub, vb = surgeon.piece_ends(b)
        union(ua, ub)
        union(va_, vb)

    dropped = {pd >> 1 for pd in chain_y} - {pd >> 1 for pd in chain_x}
    pair: Dict[int, int] = {}
    for a, b in zip(chain_x, chain_y):
        if (b >> 1) in dropped:
            pair[b] = a
            pair[b ^ 1] = a ^ 1

    cells: Dict[int, Cell] = {}
    chain_cells = {pd >> 1 for pd in chain_x}
    for c, plist in surgeon.pieces.items():
        label = g.cells[c].label
        for pid, ln, u, w in plist:
            if pid in dropped:
                continue
            cells[pid] = Cell(u=find(u), v=find(w), length=ln,
                              label=None if pid in chain_cells else label)

    codomain = CoreGraph(cells)
    if codomain.rank != g.rank:
        raise RankDrop(f"rank changed {g.rank} -> {codomain.rank}")

    vertex_map = {w: find(w) for w in g.vertices}
    dart_map: Dict[int, Tuple[int, ...]] = {}
    for c in g.cells:
        dart_map[2 * c] = tuple(pair.get(pd, pd)
                                for pd in surgeon.piece_darts_forward(c))
    fmap = GraphMap(g, codomain, vertex_map, dart_map, fold=spec)
    problems = fmap.validate()
    assert not problems, f"fold produced an invalid map: {problems}"
    return fmap


def validate_fold(g: CoreGraph, spec: FoldSpec) -> FoldReport:
    """Check fold axioms without mutating anything; also report strong
    properness (folding vertex valence >= 4, so its image stays natural)."""
    msgs: List[str] = []
    ok = True
    try:
        if spec.dart1 == spec.dart2:
            raise SelfDartFold("dart1 == dart2")
        if g.origin(spec.dart1) != spec.vertex or g.origin(spec.dart2) != spec.vertex:
            raise FoldError("darts not based at the folding vertex")
        if g.valence(spec.vertex) < 3:
            raise LowValenceVertex(spec.vertex)
        apply_fold(g, spec)
    except GraphError as e:
        ok = False
        msgs.append(f"{type(e).__name__}: {e}")
    strongly = ok and g.valence(spec.vertex) >= 4
    if ok and not strongly:
        msgs.append("folding vertex has valence 3: its image is a valence-2 point")
    return FoldReport(axioms_ok=ok, strongly_proper=strongly, messages=tuple(msgs))


# -- backtracking and counting --------------------------------------------------


def check_no_backtracking(f: GraphMap) -> Tuple[bool, Optional[Tuple[int, int]]]:
    """True iff every natural-edge image path is reduced (equivalently, the map
    is locally injective off the domain's natural vertices).  On failure the
    witness is the offending adjacent dart pair."""
    for E in f.domain.natural_structure().natural_edges:
        path = f.path_image(E.darts)
        for i in range(len(path) - 1):
            if path[i + 1] == (path[i] ^ 1):
                return False, (path[i], path[i + 1])
    return True, None


def count_crossings(f: GraphMap) -> TransitionMatrix:
    """Component counting: walk each domain natural edge's image path and count
    maximal runs inside each codomain natural edge (runs continue through
    valence-2 junction points, and break at natural vertices)."""
    dom = f.domain.natural_structure()
    cod = f.codomain.natural_structure()
    if dom.degenerate or cod.degenerate:
        raise FoldError("transition matrix undefined for degenerate (rank-1) levels")
    cell_edge = {d >> 1: e.label for e in cod.natural_edges for d in e.darts}
    rows = tuple(sorted(cod.labels))
    cols = tuple(sorted(dom.labels))
    counts = {(r, c): 0 for r in rows for c in cols}
    for E in dom.natural_edges:
        path = f.path_image(E.darts)
        prev_label = None
        for i, d in enumerate(path):
            lab = cell_edge[d >> 1]
            breaks = (lab != prev_label
                      or f.codomain.is_natural_vertex(f.codomain.origin(d)))
            if i == 0 or breaks:
                counts[(lab, E.label)] += 1
            prev_label = lab
    entries = tuple(tuple(counts[(r, c)] for c in cols) for r in rows)
    return TransitionMatrix(rows, cols, entries)


def transition_matrix(f: GraphMap) -> TransitionMatrix:
    """Matrix of f.  Single folds (and hand-built maps) are counted directly;
    composites multiply their factors' matrices in composition order."""
    if f._matrix is not None:
        return f._matrix
    if len(f.factors) <= 1 or f.factors[0] is f:
        M = count_crossings(f)
    else:
        M = None
        for factor in f.factors:          # deepest (first applied) first
            Mf = transition_matrix(factor)
            M = Mf if M is None else Mf.matmul(M)
    f._matrix = M
    return M


def virtual_image_length(f: GraphMap, label: str) -> int:
    """Natural-edge length of the image of a domain edge, counted level by
    level (= the column sum of the transition matrix)."""
    return transition_matrix(f).column_sum(label)
