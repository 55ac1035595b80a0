"""Named reference towers used across the test suite and the CLI.

THETA_CYCLE   rank-2 periodic tower cycling folds (a,b), (b,c), (c,a) at half
              extent.  Fully mingling and expanding, with an exact recurring
              positive window; composite images backtrack, so the builder is
              told to allow that.
REPEAT_AB     rank-2 tower repeating fold (a,b) with extent 2^-k.  The c edge
              is never folded, which kills expansion and leaves a nested core
              carrying a finite leaf: the standing negative example.
RANK3_SP      rank-3 tower of strongly proper folds (every fold vertex has
              valence >= 4), produced by a deterministic policy alternating
              full and half-extent partial folds on the theta-squared graph.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Set

from .graphs import CoreGraph, GraphError, build_core_graph
from .folds import FULL, FoldSpec, GraphMap, apply_fold, natural_path_from
from .sequences import (
    GeneratorStuck,
    ScriptFold,
    ScriptedPairGenerator,
    SplitSequence,
    Turn,
    _internal_turns,
    _push_turns,
    _straight_turns,
)


class UnknownFixture(GraphError):
    pass


def _gamma3() -> CoreGraph:
    """Two theta graphs sharing their vertex pair: rank 3, one valence-4
    vertex to keep strongly proper folds available."""
    return build_core_graph({
        "vertices": ["o", "p", "q"],
        "edges": [
            {"id": "e1", "from": "o", "to": "p", "len": 1},
            {"id": "e2", "from": "o", "to": "p", "len": 1},
            {"id": "e3", "from": "o", "to": "q", "len": 1},
            {"id": "e4", "from": "o", "to": "q", "len": 1},
            {"id": "e5", "from": "p", "to": "q", "len": 1},
        ],
    })


class AlternatingFoldPolicy:
    """Deterministic strongly proper generator.

    At every step it scans vertices of valence >= 4 in sorted order and dart
    pairs in sorted order, preferring a full fold on even steps and a
    half-extent partial fold on odd steps (falling back to the other kind
    before moving on), and accepts the first proposal that satisfies the
    fold axioms, avoids taken turns, and leaves some valence >= 4 vertex for
    the next step.
    """

    def __init__(self, seed_graph: CoreGraph, name: Optional[str] = None):
        self.seed_graph = seed_graph
        self.name = name
        self.periodic = False

    def _extents(self, g: CoreGraph, d1: int, d2: int, step: int):
        lens = (sum(g.dart_length(d) for d in natural_path_from(g, d1)),
                sum(g.dart_length(d) for d in natural_path_from(g, d2)))
        partial = min(lens) / 2
        return (FULL, partial) if step % 2 == 0 else (partial, FULL)

    def build(self, depth: int) -> SplitSequence:
        stages = [self.seed_graph]
        fmaps: List[GraphMap] = []
        taken: Set[Turn] = set()
        for step in range(depth):
            g = stages[-1]
            f = None
            for v in sorted((u for u in g.vertices if g.valence(u) >= 4),
                            key=repr):
                for d1, d2 in itertools.combinations(sorted(g.darts_at(v)), 2):
                    if (v, frozenset((d1, d2))) in taken:
                        continue
                    for extent in self._extents(g, d1, d2, step):
                        try:
                            cand = apply_fold(g, FoldSpec(v, d1, d2, extent))
                        except GraphError:
                            continue
                        if not any(cand.codomain.valence(u) >= 4
                                   for u in cand.codomain.vertices):
                            continue
                        f = cand
                        break
                    if f is not None:
                        break
                if f is not None:
                    break
            if f is None:
                raise GeneratorStuck(
                    f"no strongly proper fold available at depth {len(fmaps)}")
            fmaps.append(f)
            stages.append(f.codomain)
            taken = _push_turns(f, taken | _straight_turns(g)) | _internal_turns(f)
        graphs = list(reversed(stages))
        maps = [None] + list(reversed(fmaps))
        return SplitSequence(self.seed_graph.rank, graphs, maps, generator=self)

    def describe(self) -> dict:
        return {"kind": "alternating_strongly_proper",
                **({"name": self.name} if self.name else {})}


def theta_cycle_generator() -> ScriptedPairGenerator:
    return ScriptedPairGenerator(
        [ScriptFold(("a", "b"), "1/2"),
         ScriptFold(("b", "c"), "1/2"),
         ScriptFold(("c", "a"), "1/2")],
        top_lengths={"a": 1, "b": 1, "c": 1},
        periodic=True, name="THETA_CYCLE", allow_backtracking=True)


def repeat_ab_generator() -> ScriptedPairGenerator:
    return ScriptedPairGenerator(
        [ScriptFold(("a", "b"), "2^-k")],
        top_lengths={"a": 1, "b": 1, "c": 1},
        periodic=False, name="REPEAT_AB")


def rank3_sp_generator() -> AlternatingFoldPolicy:
    return AlternatingFoldPolicy(_gamma3(), name="RANK3_SP")


FIXTURES = {
    "THETA_CYCLE": theta_cycle_generator,
    "REPEAT_AB": repeat_ab_generator,
    "RANK3_SP": rank3_sp_generator,
}


def load_fixture(name: str, depth: int = 12) -> SplitSequence:
    """Build a named fixture to the requested depth, generator attached."""
    try:
        factory = FIXTURES[name]
    except KeyError:
        raise UnknownFixture(
            f"unknown fixture {name!r}; available: {sorted(FIXTURES)}")
    return factory().build(depth)
