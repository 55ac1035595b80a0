"""Split sequences: towers of fold maps between rank-n core graphs.

A sequence of depth N holds graphs G_0 (shallowest) down to G_{-N} (deepest)
with fold maps f_j : G_j -> G_{j+1} for j = -1 .. -N.  Internally everything
is indexed by k = -j, so graphs[0] is G_0 and maps[k] is f_{-k}.

Towers are built fold-forward from a deep seed.  Validity of the whole tower
(no backtracking in any composition f^j_0) is checked with a taken-turn
ledger: a composition backtracks iff some fold identifies a turn already
traversed by a deeper edge image, so it suffices to propagate traversed turns
level by level instead of materializing exponentially long composite paths.

Audits over the (conceptually infinite) sequence return three-valued
statuses: Verified-to-depth, Violated-with-witness, or Inconclusive.  Only
periodic generators license exact certificates.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

from .graphs import (
    CoreGraph,
    GraphError,
    GraphPoint,
    as_fraction,
    build_core_graph,
    fraction_str,
    point_on_path,
)
from .folds import (
    FULL,
    FoldError,
    FoldSpec,
    GraphMap,
    TransitionMatrix,
    apply_fold,
    natural_path_from,
    transition_matrix,
    validate_fold,
)


class LevelOutOfRange(GraphError):
    pass


class GeneratorStuck(GraphError):
    pass


class BacktrackingCreated(GraphError):
    """A fold folded a turn already taken by a deeper edge image."""


# -- audit statuses ------------------------------------------------------------


@dataclass(frozen=True)
class Status:
    verdict: str                      # "Verified" | "Violated" | "Inconclusive"
    depth: Optional[int] = None
    witness: object = None

    @staticmethod
    def verified(depth: int) -> "Status":
        return Status("Verified", depth=depth)

    @staticmethod
    def violated(witness) -> "Status":
        return Status("Violated", witness=witness)

    @staticmethod
    def inconclusive(depth: int) -> "Status":
        return Status("Inconclusive", depth=depth)

    def to_dict(self) -> dict:
        out = {"verdict": self.verdict}
        if self.depth is not None:
            out["depth"] = self.depth
        if self.witness is not None:
            out["witness"] = self.witness
        return out


@dataclass(frozen=True)
class SequenceAudit:
    kind: str
    status: Status
    evidence: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "status": self.status.to_dict()}
        if self.evidence:
            out["evidence"] = self.evidence
        return out


@dataclass(frozen=True)
class WindowMatrix:
    i: int
    j: int
    matrix: TransitionMatrix

    @property
    def positive(self) -> bool:
        return self.matrix.is_positive

    def to_dict(self) -> dict:
        return {"i": self.i, "j": self.j, "positive": self.positive,
                "matrix": self.matrix.to_dict()}


# -- turns ---------------------------------------------------------------------

Turn = Tuple[object, FrozenSet[int]]     # (vertex id, {dart, dart} at it)


def _fold_turn(g: CoreGraph, spec: FoldSpec) -> Turn:
    return (spec.vertex, frozenset((spec.dart1, spec.dart2)))


def _straight_turns(g: CoreGraph) -> Set[Turn]:
    out = set()
    for v in g.vertices:
        ds = g.darts_at(v)
        if len(ds) == 2:
            out.add((v, frozenset(ds)))
    return out


def _internal_turns(f: GraphMap) -> Set[Turn]:
    """Turns traversed inside single-dart image paths."""
    out = set()
    for c in f.domain.cells:
        path = f.dart_map[2 * c]
        for i in range(len(path) - 1):
            w = f.codomain.origin(path[i + 1])
            out.add((w, frozenset((path[i] ^ 1, path[i + 1]))))
    return out


def _push_turns(f: GraphMap, turns: Set[Turn]) -> Set[Turn]:
    out = set()
    for v, pair in turns:
        g1, g2 = tuple(pair)
        i1 = f.image_path(g1)[0]
        i2 = f.image_path(g2)[0]
        if i1 == i2:
            continue      # the turn was folded; legality is checked separately
        out.add((f.vertex_map[v], frozenset((i1, i2))))
    return out


# -- the sequence --------------------------------------------------------------


class SplitSequence:
    """Immutable tower snapshot.  graphs[k] = G_{-k}; maps[k] = f_{-k} (k >= 1)."""

    def __init__(self, rank: int, graphs: Sequence[CoreGraph],
                 maps: Sequence[Optional[GraphMap]], generator=None,
                 allow_backtracking: bool = False, check: bool = True):
        self.rank = rank
        self.graphs: Tuple[CoreGraph, ...] = tuple(graphs)
        self.maps: Tuple[Optional[GraphMap], ...] = tuple(maps)
        self.generator = generator
        self.allow_backtracking = allow_backtracking
        self._windows: Dict[Tuple[int, int], WindowMatrix] = {}
        self._taken: Optional[List[Set[Turn]]] = None
        if check:
            self._validate()

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def from_climb(seed: CoreGraph, folds: Sequence[FoldSpec], generator=None,
                   allow_backtracking: bool = False) -> "SplitSequence":
        """Apply folds to the seed in order; the final quotient becomes G_0."""
        stages = [seed]
        fmaps = []
        for spec in folds:
            f = apply_fold(stages[-1], spec)
            fmaps.append(f)
            stages.append(f.codomain)
        graphs = list(reversed(stages))            # graphs[0] = G_0
        maps = [None] + list(reversed(fmaps))      # maps[k] = f_{-k}
        return SplitSequence(seed.rank, graphs, maps, generator=generator,
                             allow_backtracking=allow_backtracking)

    def _validate(self):
        if len(self.maps) != len(self.graphs):
            raise GraphError("graphs/maps length mismatch")
        for k, g in enumerate(self.graphs):
            if g.rank != self.rank:
                raise GraphError(f"level {-k} has rank {g.rank}, expected {self.rank}")
            ns = g.natural_structure()
            if not ns.degenerate and not ns.bounds_ok:
                raise GraphError(
                    f"level {-k} violates the natural-structure size bounds")
        for k in range(1, len(self.maps)):
            f = self.maps[k]
            if f.domain is not self.graphs[k] or f.codomain is not self.graphs[k - 1]:
                raise GraphError(f"map at level {-k} does not link its levels")
        if not self.allow_backtracking:
            self._check_backtracking()

    def _check_backtracking(self):
        """Every fold must fold a turn not taken by deeper edge images."""
        taken = self.taken_turns()
        for k in range(1, self.depth + 1):
            f = self.maps[k]
            if f.fold is None:
                continue
            t = _fold_turn(f.domain, f.fold)
            if t in taken[k]:
                raise BacktrackingCreated(
                    f"fold at level {-k} folds the taken turn {t!r}")

    # -- basic access -----------------------------------------------------------

    @property
    def depth(self) -> int:
        return len(self.graphs) - 1

    def _k(self, j: int) -> int:
        if not (-self.depth <= j <= 0):
            raise LevelOutOfRange(f"level {j} outside [-{self.depth}, 0]")
        return -j

    def graph(self, j: int) -> CoreGraph:
        return self.graphs[self._k(j)]

    def map_from(self, j: int) -> GraphMap:
        k = self._k(j)
        if k == 0:
            raise LevelOutOfRange("level 0 has no upward map")
        return self.maps[k]

    def taken_turns(self) -> List[Set[Turn]]:
        """taken[k] = turns of G_{-k} traversed by deeper edge images."""
        if self._taken is None:
            n = self.depth
            taken: List[Set[Turn]] = [set() for _ in range(n + 1)]
            for k in range(n, 0, -1):          # deepest first
                f = self.maps[k]
                carried = taken[k] | _straight_turns(self.graphs[k])
                taken[k - 1] = _push_turns(f, carried) | _internal_turns(f)
            self._taken = taken
        return self._taken

    def point_image(self, p: GraphPoint, i: int, j: int = 0) -> GraphPoint:
        """Image of a level-i point at level j >= i."""
        ki, kj = self._k(i), self._k(j)
        if ki < kj:
            raise LevelOutOfRange("point_image goes shallower only")
        for k in range(ki, kj, -1):
            p = self.maps[k].map_point(p)
        return p

    def point_preimages(self, q: GraphPoint, j: int, i: int) -> List[GraphPoint]:
        """All level-i preimages of a level-j point (i < j)."""
        ki, kj = self._k(i), self._k(j)
        pts = [q]
        for k in range(kj + 1, ki + 1):
            pts = [p for r in pts for p in self.maps[k].point_preimages(r)]
        return pts

    def to_dict(self) -> dict:
        levels = []
        for k in range(1, self.depth + 1):
            fold = self.maps[k].fold
            levels.append({
                "graph": self.graphs[k].to_spec(),
                "fold": _fold_to_file(self.graphs[k], fold) if fold else None,
            })
        gen = self.generator.describe() if self.generator is not None else None
        return {"rank": self.rank, "generator": gen, "levels": levels}

    def save(self, path: str):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    def __repr__(self):
        return f"SplitSequence(rank={self.rank}, depth={self.depth})"


def _fold_to_file(g: CoreGraph, spec: FoldSpec) -> dict:
    """Fold with darts re-indexed by the graph's stored edge-list position."""
    pos = {c: i for i, c in enumerate(sorted(g.cells))}
    out = spec.to_dict()
    out["dart1"] = 2 * pos[spec.dart1 >> 1] + (spec.dart1 & 1)
    out["dart2"] = 2 * pos[spec.dart2 >> 1] + (spec.dart2 & 1)
    return out


def _fold_from_file(g: CoreGraph, d: dict) -> FoldSpec:
    order = sorted(g.cells)
    spec = FoldSpec.from_dict(d)
    return FoldSpec(spec.vertex,
                    2 * order[spec.dart1 >> 1] + (spec.dart1 & 1),
                    2 * order[spec.dart2 >> 1] + (spec.dart2 & 1),
                    spec.extent)


def load_sequence(path_or_dict, generator=None,
                  allow_backtracking: bool = False) -> SplitSequence:
    """Rebuild a sequence from its file form by re-applying the stored folds
    to the deepest stored graph; stored shallower graphs are cross-checked
    against the recomputed tower at the natural-structure level."""
    if isinstance(path_or_dict, dict):
        data = path_or_dict
    else:
        with open(path_or_dict) as fh:
            data = json.load(fh)
    gen_desc = data.get("generator")
    if generator is None:
        generator = generator_from_descriptor(gen_desc)
    if not allow_backtracking and isinstance(gen_desc, dict):
        allow_backtracking = bool(gen_desc.get("allow_backtracking"))
    levels = data["levels"]
    if not levels:
        raise GraphError("sequence file has no levels")
    stages = [build_core_graph(levels[-1]["graph"])]
    fmaps: List[GraphMap] = []
    for entry in reversed(levels):
        g = stages[-1]
        f = apply_fold(g, _fold_from_file(g, entry["fold"]))
        fmaps.append(f)
        stages.append(f.codomain)
    graphs = list(reversed(stages))
    maps = [None] + list(reversed(fmaps))
    seq = SplitSequence(stages[0].rank, graphs, maps, generator=generator,
                        allow_backtracking=allow_backtracking)
    if seq.rank != data["rank"]:
        raise GraphError(f"stored rank {data['rank']} != computed {seq.rank}")
    for k in range(2, seq.depth + 1):       # levels[k-1] describes G_{-k}
        stored = build_core_graph(levels[k - 1]["graph"])
        got = {e.label: e.length for e in seq.graphs[k].natural_structure().natural_edges}
        want = {e.label: e.length for e in stored.natural_structure().natural_edges}
        if got != want:
            raise GraphError(f"stored level {-k} disagrees with recomputed tower")
    return seq


# -- generators ------------------------------------------------------------------


@dataclass(frozen=True)
class ScriptFold:
    """One periodic-script entry: fold the two named natural edges at the
    running split vertex.  extent: "full", an exact "p/q", or "2^-k"
    (extent 2^{-k} for the fold at level -k)."""

    pair: Tuple[str, str]
    extent: str = "1/2"

    def extent_at(self, k: int):
        if self.extent == FULL:
            return FULL
        if self.extent == "2^-k":
            return Fraction(1, 2 ** k)
        return as_fraction(self.extent)

    def to_dict(self) -> dict:
        return {"pair": list(self.pair), "extent": self.extent}


def _dart_toward(g: CoreGraph, label: str, w) -> int:
    e = g.natural_edge(label)
    if e.start == w:
        return e.darts[0]
    if e.end == w:
        return e.darts[-1] ^ 1
    raise GraphError(f"natural edge {label!r} does not meet vertex {w!r}")


class ScriptedPairGenerator:
    """Builds theta-style towers: a cycle of natural edges between two
    vertices, folded pairwise at the running split vertex.  script[0] is the
    shallowest fold f_{-1}; f_{-k} uses script[(k-1) mod p].  Seed lengths are
    solved backward from the fixed level-0 lengths, so the shallow part of the
    tower does not depend on the build depth."""

    def __init__(self, script: Sequence[ScriptFold],
                 top_lengths: Dict[str, Fraction],
                 periodic: bool, name: Optional[str] = None,
                 allow_backtracking: bool = False,
                 start_vertex: str = "u", other_vertex: str = "v"):
        self.script = tuple(script)
        self.top_lengths = {lab: as_fraction(x) for lab, x in top_lengths.items()}
        self.periodic = periodic
        self.name = name
        self.allow_backtracking = allow_backtracking
        self.start_vertex = start_vertex
        self.other_vertex = other_vertex

    @property
    def period(self) -> Optional[int]:
        return len(self.script) if self.periodic else None

    def seed_lengths(self, depth: int) -> Dict[str, Fraction]:
        lengths = dict(self.top_lengths)
        labels = set(lengths)
        for k in range(1, depth + 1):
            entry = self.script[(k - 1) % len(self.script)]
            x, y = entry.pair
            e = entry.extent_at(k)
            if e == FULL:
                raise GeneratorStuck("scripted pair towers need partial extents")
            (z,) = labels - {x, y}
            if lengths[z] <= e:
                raise GeneratorStuck(
                    f"unfolding at level {-k} would need edge {z!r} longer than {e}")
            lengths[x] += e
            lengths[y] += e
            lengths[z] -= e
        return lengths

    def _seed_graph(self, depth: int) -> CoreGraph:
        lengths = self.seed_lengths(depth)
        u, v = self.start_vertex, self.other_vertex
        return build_core_graph({
            "vertices": [u, v],
            "edges": [{"id": lab, "from": u, "to": v,
                       "len": fraction_str(lengths[lab])}
                      for lab in sorted(lengths)],
        })

    def build(self, depth: int) -> SplitSequence:
        seed = self._seed_graph(depth)
        stages = [seed]
        fmaps: List[GraphMap] = []
        w = self.start_vertex
        for k in range(depth, 0, -1):
            g = stages[-1]
            entry = self.script[(k - 1) % len(self.script)]
            x, y = entry.pair
            extent = entry.extent_at(k)
            spec = FoldSpec(w, _dart_toward(g, x, w), _dart_toward(g, y, w), extent)
            f = apply_fold(g, spec)
            fmaps.append(f)
            stages.append(f.codomain)
            xpath = natural_path_from(g, spec.dart1)
            w = f.map_point(point_on_path(g, xpath, extent)).vertex
        graphs = list(reversed(stages))
        maps = [None] + list(reversed(fmaps))
        return SplitSequence(seed.rank, graphs, maps, generator=self,
                             allow_backtracking=self.allow_backtracking)

    def describe(self) -> dict:
        out = {"kind": "periodic" if self.periodic else "scripted",
               "script": [s.to_dict() for s in self.script],
               "top_lengths": {lab: fraction_str(x)
                               for lab, x in sorted(self.top_lengths.items())}}
        if self.periodic:
            out["period"] = len(self.script)
        if self.allow_backtracking:
            out["allow_backtracking"] = True
        if self.name:
            out["name"] = self.name
        return out


def generator_from_descriptor(d) -> Optional["ScriptedPairGenerator"]:
    """Rebuild a generator from its stored descriptor.  Only scripted and
    periodic towers are pinned completely by their descriptor; a random
    policy's seed graph is not stored, so those stay detached."""
    if not isinstance(d, dict) or d.get("kind") not in ("periodic", "scripted"):
        return None
    script = [ScriptFold(tuple(s["pair"]), s["extent"]) for s in d["script"]]
    return ScriptedPairGenerator(
        script,
        top_lengths={lab: as_fraction(x) for lab, x in d["top_lengths"].items()},
        periodic=d["kind"] == "periodic", name=d.get("name"),
        allow_backtracking=bool(d.get("allow_backtracking")))


class RandomFoldPolicy:
    """Seeded random generator: proposes folds on the running quotient and
    rejects proposals that fail the fold axioms, change the rank, fold a
    taken turn, or (if required) are not strongly proper."""

    PARTIAL_RATIOS = (Fraction(1, 2), Fraction(1, 3), Fraction(2, 3), Fraction(1, 4))

    def __init__(self, seed_graph: CoreGraph, seed: int = 0,
                 strongly_proper: bool = False, retry_budget: int = 300,
                 name: Optional[str] = None):
        self.seed_graph = seed_graph
        self.seed = seed
        self.strongly_proper = strongly_proper
        self.retry_budget = retry_budget
        self.name = name
        self.periodic = False

    def build(self, depth: int) -> SplitSequence:
        rng = random.Random(self.seed)
        stages = [self.seed_graph]
        fmaps: List[GraphMap] = []
        taken: Set[Turn] = set()
        for _ in range(depth):
            g = stages[-1]
            min_val = 4 if self.strongly_proper else 3
            candidates = [v for v in g.vertices if g.valence(v) >= min_val]
            if not candidates:
                raise GeneratorStuck(
                    "no vertex of valence >= "
                    f"{min_val} at depth {len(fmaps)}")
            f = None
            for _ in range(self.retry_budget):
                v = rng.choice(sorted(candidates, key=repr))
                d1, d2 = rng.sample(sorted(g.darts_at(v)), 2)
                if (v, frozenset((d1, d2))) in taken:
                    continue
                if rng.random() < 0.5:
                    extent = FULL
                else:
                    lens = (sum(g.dart_length(d) for d in natural_path_from(g, d1)),
                            sum(g.dart_length(d) for d in natural_path_from(g, d2)))
                    extent = rng.choice(self.PARTIAL_RATIOS) * min(lens)
                    if extent >= min(lens):
                        continue
                try:
                    cand = apply_fold(g, FoldSpec(v, d1, d2, extent))
                except GraphError:
                    continue
                if self.strongly_proper and not any(
                        cand.codomain.valence(u) >= 4
                        for u in cand.codomain.vertices):
                    # dead end: no room for another strongly proper fold
                    continue
                f = cand
                break
            if f is None:
                raise GeneratorStuck(
                    f"retry budget exhausted at depth {len(fmaps)}")
            fmaps.append(f)
            stages.append(f.codomain)
            taken = _push_turns(f, taken | _straight_turns(g)) | _internal_turns(f)
        graphs = list(reversed(stages))
        maps = [None] + list(reversed(fmaps))
        return SplitSequence(self.seed_graph.rank, graphs, maps, generator=self)

    def describe(self) -> dict:
        return {"kind": "random", "seed": self.seed,
                "strongly_proper": self.strongly_proper,
                **({"name": self.name} if self.name else {})}


def extend_sequence(seq: SplitSequence, d: int) -> SplitSequence:
    """A deeper snapshot from the same generator (d >= 1)."""
    if d < 1:
        raise GraphError("extension count must be >= 1")
    if seq.generator is None:
        raise GeneratorStuck("sequence has no generator attached")
    return seq.generator.build(seq.depth + d)


# -- window matrices and mingling -------------------------------------------------


def window_matrix(seq: SplitSequence, i: int, j: int) -> WindowMatrix:
    """Matrix of f^i_j = f_{j-1} ∘ … ∘ f_i as the ordered product
    M(f_{j-1}) ··· M(f_i); (i, i) gives the identity."""
    ki, kj = seq._k(i), seq._k(j)
    if ki < kj:
        raise LevelOutOfRange(f"window needs i <= j, got ({i}, {j})")
    key = (i, j)
    if key not in seq._windows:
        if i == j:
            labels = seq.graph(i).natural_structure().labels
            M = TransitionMatrix.identity(labels)
        else:
            M = window_matrix(seq, i + 1, j).matrix.matmul(
                transition_matrix(seq.maps[ki]))
        seq._windows[key] = WindowMatrix(i, j, M)
    return seq._windows[key]


def mingling_number(seq: SplitSequence, k: int, label_k: str,
                    j: int, label_j: str) -> int:
    """How many times the image of E_k (level k) crosses E_j (level j > k)."""
    if k >= j:
        raise LevelOutOfRange(f"mingling needs k < j, got ({k}, {j})")
    return window_matrix(seq, k, j).matrix.entry(label_j, label_k)


# -- audits -----------------------------------------------------------------------


def audit_properness(seq: SplitSequence, depth: int,
                     stability_window: int = 5) -> SequenceAudit:
    """S_d = composite images in G_0 of all natural vertices down to -depth;
    Verified when |S_d| has been flat over the last stability_window levels."""
    depth = min(depth, seq.depth)
    pts: Dict[object, int] = {}
    trace: List[int] = []
    for k in range(1, depth + 1):
        for v in seq.graphs[k].natural_vertices():
            p = seq.point_image(GraphPoint(vertex=v), -k, 0)
            pts.setdefault(p.key(), k)
        trace.append(len(pts))
    evidence = {"trace": trace, "stability_window": stability_window,
                "points": sorted(repr(x) for x in pts)}
    if depth <= stability_window:
        return SequenceAudit("proper", Status.inconclusive(depth), evidence)
    tail = trace[-stability_window:]
    if all(t == tail[0] for t in tail):
        return SequenceAudit("proper", Status.verified(depth), evidence)
    return SequenceAudit("proper", Status.inconclusive(depth), evidence)


def audit_strong_properness(seq: SplitSequence) -> SequenceAudit:
    """Every fold's vertex must keep valence >= 4 so natural vertices map to
    natural vertices."""
    for k in range(1, seq.depth + 1):
        f = seq.maps[k]
        if f.fold is None:
            continue
        val = f.domain.valence(f.fold.vertex)
        if val < 4:
            witness = {"level": -k, "vertex": repr(f.fold.vertex), "valence": val}
            return SequenceAudit("strongly_proper", Status.violated(witness))
    return SequenceAudit("strongly_proper", Status.verified(seq.depth))


def _natural_vertex_chains(seq: SplitSequence, depth: int) -> List[List[object]]:
    """All maximal chains (x_{-1}, x_{-2}, …) of natural vertices with
    f(x_{-k-1}) = x_{-k}; returned as vertex-id lists, shallowest first."""
    chains: List[List[object]] = []

    def preimage_naturals(k: int, x) -> List[object]:
        f = seq.maps[k + 1]
        return [y for y in seq.graphs[k + 1].natural_vertices()
                if f.vertex_map[y] == x]

    def grow(chain: List[object], k: int):
        if k >= depth:
            chains.append(chain)
            return
        nxt = preimage_naturals(k, chain[-1])
        if not nxt:
            chains.append(chain)
            return
        for y in nxt:
            grow(chain + [y], k + 1)

    for x in seq.graphs[1].natural_vertices():
        grow([x], 1)
    return chains


def _chain_prong_trace(seq: SplitSequence, chain: List[object]) -> List[int]:
    """prongs[d] = number of germs at x_{-(d+1)} with distinct composite
    images at level -1 (non-increasing in d)."""
    out = []
    for d, x in enumerate(chain):
        k = d + 1
        germs = list(seq.graphs[k].darts_at(x))
        for lvl in range(k, 1, -1):
            f = seq.maps[lvl]
            germs = [f.image_path(g)[0] for g in germs]
        out.append(len(set(germs)))
    return out


def audit_stabilization(seq: SplitSequence, depth: int) -> SequenceAudit:
    """Finite-depth vertex/turn stabilization checks (V1, V2, T3, T4) over
    spanning natural-vertex chains, plus the least K whose tail passes."""
    depth = min(depth, seq.depth)
    if depth < 2:
        return SequenceAudit("stabilized", Status.inconclusive(depth),
                             {"reason": "need depth >= 2 for turn evidence"})

    def run_checks(offset: int, d: int):
        """Check the tail tower with top at level -offset, to depth d."""
        sub = _tail_view(seq, offset)
        chains = _natural_vertex_chains(sub, d)
        spanning = [c for c in chains if len(c) >= d]
        by_base: Dict[object, List[List[object]]] = {}
        records = []
        for c in spanning:
            base = sub.maps[1].vertex_map[c[0]]
            key = ("v", base)
            by_base.setdefault(key, []).append(c)
            records.append({"chain": [repr(x) for x in c],
                            "base": repr(base),
                            "prongs": _chain_prong_trace(sub, c)})
        # V1: at most one spanning chain per natural base point
        for key, cs in by_base.items():
            base = sub.maps[1].vertex_map[cs[0][0]]
            if sub.graphs[0].is_natural_vertex(base) and len(cs) > 1:
                return ("V1", {"base": repr(base),
                               "chains": [[repr(x) for x in c] for c in cs[:2]]}), records
        # V2: no spanning chain over a non-natural point
        for key, cs in by_base.items():
            base = sub.maps[1].vertex_map[cs[0][0]]
            if not sub.graphs[0].is_natural_vertex(base):
                return ("V2", {"base": repr(base),
                               "chain": [repr(x) for x in cs[0]]}), records
        # T3: no >= 3-pronged chain whose base supports only a turn
        for rec, c in zip(records, spanning):
            base = sub.maps[1].vertex_map[c[0]]
            if rec["prongs"][-1] >= 3 and not sub.graphs[0].is_natural_vertex(base):
                return ("T3", rec), records
        # T4: takenness of each singular candidate's turns is all-or-none
        taken = sub.taken_turns()
        for rec, c in zip(records, spanning):
            if rec["prongs"][-1] < 3:
                continue
            germs_by_level = {1: list(sub.graphs[1].darts_at(c[0]))}
            for d2 in range(1, len(c)):
                germs_by_level[d2 + 1] = list(sub.graphs[d2 + 1].darts_at(c[d2]))
            pair_status: Dict[Tuple[int, int], List[bool]] = {}
            for lvl, x in enumerate(c, start=1):
                ds = germs_by_level[lvl]
                for a in range(len(ds)):
                    for b in range(a + 1, len(ds)):
                        t = (x, frozenset((ds[a], ds[b])))
                        pair_status.setdefault((a, b), []).append(t in taken[lvl])
            for pair, flags in pair_status.items():
                if any(flags) and not all(flags):
                    return ("T4", {"chain": rec["chain"], "pair": list(pair),
                                   "taken_by_level": flags}), records
        return None, records

    violation, records = run_checks(0, depth)
    least_k = 0
    if violation is not None:
        # find the least K whose strictly deeper tail passes to its depth
        least_k = None
        for off in range(1, depth - 1):
            sub_violation, _ = run_checks(off, depth - off)
            if sub_violation is None:
                least_k = -off
                break
        crit, witness = violation
        return SequenceAudit(
            "stabilized", Status.violated({"criterion": crit, **witness}),
            {"chains": records, "least_K": least_k})
    return SequenceAudit("stabilized", Status.verified(depth),
                         {"chains": records, "least_K": least_k})


def _tail_view(seq: SplitSequence, offset: int) -> SplitSequence:
    """The sub-tower with top at level -offset (no revalidation)."""
    if offset == 0:
        return seq
    return SplitSequence(seq.rank, seq.graphs[offset:], (None,) + seq.maps[offset + 1:],
                         generator=None, allow_backtracking=True, check=False)


def scan_full_mingling(seq: SplitSequence, depth: int) -> SequenceAudit:
    """For each level j, the least window width making window_matrix(k, j)
    positive; Verified when every audited level has one."""
    depth = min(depth, seq.depth)
    if depth < 1:
        return SequenceAudit("fully_mingling", Status.inconclusive(0))
    windows: Dict[int, Optional[int]] = {}
    for j in range(0, -depth, -1):
        width = None
        for k in range(j - 1, -depth - 1, -1):
            if window_matrix(seq, k, j).positive:
                width = j - k
                break
        windows[j] = width
    widths = [w for w in windows.values() if w is not None]
    evidence = {"windows": {str(j): w for j, w in windows.items()},
                "certificate": ("fully mingling to the audited depth; minimal "
                                "if the pattern persists at all deeper levels")}
    if not widths:
        return SequenceAudit("fully_mingling", Status.inconclusive(depth), evidence)
    max_width = max(widths)
    for j, w in windows.items():
        # a level only counts against the audit if a window of the widest
        # successful width would have fit below it
        if w is None and -j + max_width <= depth:
            return SequenceAudit("fully_mingling", Status.inconclusive(depth),
                                 evidence)
    return SequenceAudit("fully_mingling", Status.verified(depth), evidence)


def _homeo_chain(seq: SplitSequence, depth: int) -> Optional[List[Tuple[int, str]]]:
    """A chain of edges (level, label), deepest first, each carried
    homeomorphically (single crossing, whole-column sum 1) onto the next."""
    for e0 in seq.graphs[0].natural_structure().labels:
        chain = [(0, e0)]
        target = e0
        for k in range(1, depth + 1):
            M = transition_matrix(seq.maps[k])
            found = None
            for src in M.cols:
                if M.column_sum(src) == 1 and M.entry(target, src) == 1:
                    found = src
                    break
            if found is None:
                chain = None
                break
            chain.append((-k, found))
            target = found
        if chain is not None:
            return list(reversed(chain))
    return None


def audit_expanding(seq: SplitSequence, depth: int) -> SequenceAudit:
    """An edge sequence carried homeomorphically through the whole audited
    range violates expansion; otherwise each level needs a window whose
    crossing columns all have sum >= 2."""
    depth = min(depth, seq.depth)
    if depth < 1:
        return SequenceAudit("expanding", Status.inconclusive(0))
    chain = _homeo_chain(seq, depth)
    if chain is not None:
        support = sorted({lab for _, lab in chain})
        return SequenceAudit(
            "expanding",
            Status.violated({"edge_sequence": [[lvl, lab] for lvl, lab in chain]}),
            {"stable_core_candidate": support})
    table: Dict[str, Optional[int]] = {}
    for j in range(0, -depth, -1):
        labels = seq.graph(j).natural_structure().labels
        for lab in labels:
            width = None
            for k in range(j - 1, -depth - 1, -1):
                M = window_matrix(seq, k, j).matrix
                crossing = [src for src in M.cols if M.entry(lab, src) > 0]
                if crossing and all(M.column_sum(src) >= 2 for src in crossing):
                    width = j - k
                    break
            table[f"{j}:{lab}"] = width
    widths = [w for w in table.values() if w is not None]
    evidence = {"witness_widths": table}
    if not widths:
        return SequenceAudit("expanding", Status.inconclusive(depth), evidence)
    max_width = max(widths)
    for key, w in table.items():
        j = int(key.split(":")[0])
        if w is None and -j + max_width <= depth:
            return SequenceAudit("expanding", Status.inconclusive(depth), evidence)
    return SequenceAudit("expanding", Status.verified(depth), evidence)


def scan_semi_normality(seq: SplitSequence, depth: int,
                        min_repeats: int = 3) -> SequenceAudit:
    """A single positive matrix recurring on >= min_repeats disjoint windows
    with a fixed endpoint edge count; exact for periodic generators."""
    depth = min(depth, seq.depth)
    periodic = _is_periodic(seq)
    period = seq.generator.period if periodic else None

    def dims(j: int) -> int:
        return len(seq.graph(j).natural_structure().labels)

    def grid(i: int, j: int):
        return window_matrix(seq, i, j).matrix.entries

    candidates: Dict[Tuple[int, tuple], List[Tuple[int, int]]] = {}
    widths = [period] if periodic else range(1, depth // max(min_repeats, 1) + 1)
    for w in widths:
        if w is None or w < 1:
            continue
        j = 0
        wins: List[Tuple[int, int]] = []
        while j - w >= -depth:
            wins.append((j - w, j))
            j -= w
        for (i, j2) in wins:
            if dims(i) != dims(j2):
                continue
            M = window_matrix(seq, i, j2)
            if not M.positive:
                continue
            key = (dims(i), M.matrix.entries)
            candidates.setdefault(key, []).append((i, j2))
    best = None
    for (d, entries), wins in sorted(candidates.items(),
                                     key=lambda kv: -len(kv[1])):
        if len(wins) >= min_repeats:
            best = (d, entries, wins[:min_repeats] if periodic else wins)
            break
    if best is None:
        return SequenceAudit("semi_normal", Status.inconclusive(depth),
                             {"note": "no recurring positive window found"})
    d, entries, wins = best
    labels = seq.graph(wins[0][1]).natural_structure().labels
    cert = {"d": d,
            "matrix": [list(r) for r in entries],
            "labels": sorted(labels),
            "windows": [list(wpair) for wpair in wins],
            "exact": bool(periodic)}
    if periodic:
        ok, msg = validate_periodicity(seq)
        cert["periodicity_check"] = msg
        if ok:
            return SequenceAudit("semi_normal", Status.verified(depth),
                                 {"certificate": cert})
        cert["exact"] = False
    cert["label"] = "Candidate"
    return SequenceAudit("semi_normal", Status.inconclusive(depth),
                         {"certificate": cert})


def _is_periodic(seq: SplitSequence) -> bool:
    return bool(seq.generator is not None and getattr(seq.generator, "periodic", False))


def validate_periodicity(seq: SplitSequence) -> Tuple[bool, str]:
    """Check that levels one period apart agree as labeled combinatorial
    structures: same natural-edge labels and identical per-fold matrices.
    (Metric data need not recur — the tower may grow by an additive pattern —
    but the matrix pattern must.)"""
    if not _is_periodic(seq):
        return False, "no periodic generator attached"
    p = seq.generator.period
    if seq.depth < 2 * p:
        return False, f"depth {seq.depth} too small to compare two periods"
    for k in range(0, seq.depth - p + 1):
        a = seq.graphs[k].natural_structure()
        b = seq.graphs[k + p].natural_structure()
        if sorted(a.labels) != sorted(b.labels):
            return False, f"labels differ between levels {-k} and {-k - p}"
    for k in range(1, seq.depth - p + 1):
        ma = transition_matrix(seq.maps[k])
        mb = transition_matrix(seq.maps[k + p])
        if (ma.rows, ma.cols, ma.entries) != (mb.rows, mb.cols, mb.entries):
            return False, f"fold matrices differ between levels {-k} and {-k - p}"
    return True, f"matrix pattern periodic with period {p}"
