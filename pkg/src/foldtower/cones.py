"""Weight data on fold towers and the projective-contraction pipeline.

A weight vector assigns a nonnegative mass to each natural edge of one level.
Pushing weights up one level multiplies by that fold's transition matrix, so
the weights consistent with the whole tower form a nested family of cones:
the depth-d approximation at level K is the nonnegative span of the columns
of the (K-d, K) window matrix.  Contraction of those cones in the projective
metric is what pins the invariant transversal measure down to a single ray,
and the certificates below grade how much of that argument finite data
supports: an exact recurring positive window, a numeric diameter below
tolerance, or only a surviving-rank lower bound.

All matrix and rank computations are exact over the rationals; floating
point enters only through projective distances and logarithms.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .graphs import GraphError, fraction_str
from .sequences import (
    LevelOutOfRange,
    SequenceAudit,
    SplitSequence,
    audit_expanding,
    audit_strong_properness,
    scan_semi_normality,
    window_matrix,
)
from .solenoid import PointSpec, TurnSpec, decompose_turn_transversal


class DimensionMismatch(GraphError):
    pass


class ZeroVector(GraphError):
    pass


class NonPositiveMatrix(GraphError):
    pass


class NonExpandingSequence(GraphError):
    pass


# -- weight vectors -----------------------------------------------------------------


@dataclass(frozen=True)
class WeightVector:
    """Nonnegative mass per natural edge of one level.

    Entries are exact rationals in the default mode; floats are accepted for
    numeric work and make the whole family numeric.
    """

    level: int
    entries: Mapping[str, object]

    def __post_init__(self):
        clean: Dict[str, object] = {}
        for lab, x in dict(self.entries).items():
            if isinstance(x, float):
                val: object = x
            else:
                val = Fraction(x)
            if val < 0:
                raise GraphError(f"negative weight for edge {lab!r}: {x}")
            clean[lab] = val
        object.__setattr__(self, "entries", clean)

    @property
    def exact(self) -> bool:
        return all(not isinstance(x, float) for x in self.entries.values())

    def vector(self, labels: Sequence[str]) -> Tuple[object, ...]:
        missing = [lab for lab in labels if lab not in self.entries]
        if missing:
            raise DimensionMismatch(
                f"weight vector at level {self.level} lacks edges {missing}")
        return tuple(self.entries[lab] for lab in labels)

    def to_dict(self) -> dict:
        return {"level": self.level,
                "entries": {lab: (x if isinstance(x, float)
                                  else fraction_str(Fraction(x)))
                            for lab, x in sorted(self.entries.items())}}


def _labels(seq: SplitSequence, j: int) -> Tuple[str, ...]:
    return tuple(sorted(seq.graph(j).natural_structure().labels))


def check_weight_equations(seq: SplitSequence,
                           ws: Sequence[WeightVector]) -> dict:
    """Verify w_{j+1} = T_j w_j for each consecutive pair of supplied levels.

    The vectors must cover a contiguous level range.  Residuals are exact in
    rational mode; `ok` means every residual is exactly zero.
    """
    if not ws:
        raise DimensionMismatch("no weight vectors supplied")
    ordered = sorted(ws, key=lambda w: w.level)
    levels = [w.level for w in ordered]
    if levels != list(range(levels[0], levels[-1] + 1)):
        raise DimensionMismatch(f"levels are not contiguous: {levels}")
    for w in ordered:
        seq._k(w.level)
    residuals: Dict[int, Dict[str, object]] = {}
    ok = True
    for lo, hi in zip(ordered, ordered[1:]):
        T = window_matrix(seq, lo.level, hi.level).matrix
        cols = tuple(sorted(T.cols))
        x = lo.vector(cols)
        res: Dict[str, object] = {}
        for row in sorted(T.rows):
            pushed = sum(T.entry(row, c) * x[i] for i, c in enumerate(cols))
            r = hi.vector((row,))[0] - pushed
            res[row] = r
            if r != 0:
                ok = False
        residuals[hi.level] = res
    mode = "exact" if all(w.exact for w in ordered) else "numeric"
    return {"ok": ok, "mode": mode, "residuals": residuals}


# -- exact linear algebra helpers ---------------------------------------------------
#
# Cones here live in dimension <= 3(n-1) with at most as many generators, so
# plain fraction Gaussian elimination and subset enumeration are cheap and
# keep the rank/extremality answers exact.


def _rank(vectors: Sequence[Sequence[object]]) -> int:
    rows = [[Fraction(x) for x in v] for v in vectors]
    rank = 0
    col = 0
    width = len(rows[0]) if rows else 0
    while rank < len(rows) and col < width:
        pivot = next((r for r in range(rank, len(rows)) if rows[r][col]), None)
        if pivot is None:
            col += 1
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        lead = rows[rank][col]
        for r in range(len(rows)):
            if r != rank and rows[r][col]:
                m = rows[r][col] / lead
                rows[r] = [a - m * b for a, b in zip(rows[r], rows[rank])]
        rank += 1
        col += 1
    return rank


def _solve_exact(cols: Sequence[Sequence[Fraction]],
                 target: Sequence[Fraction]) -> Optional[List[Fraction]]:
    """Solve sum_i x_i cols[i] = target exactly, if a solution exists."""
    n, k = len(target), len(cols)
    aug = [[Fraction(cols[j][i]) for j in range(k)] + [Fraction(target[i])]
           for i in range(n)]
    pivots: List[Tuple[int, int]] = []
    row = 0
    for col in range(k):
        pivot = next((r for r in range(row, n) if aug[r][col]), None)
        if pivot is None:
            continue
        aug[row], aug[pivot] = aug[pivot], aug[row]
        lead = aug[row][col]
        aug[row] = [a / lead for a in aug[row]]
        for r in range(n):
            if r != row and aug[r][col]:
                m = aug[r][col]
                aug[r] = [a - m * b for a, b in zip(aug[r], aug[row])]
        pivots.append((row, col))
        row += 1
    if any(aug[r][k] for r in range(row, n)):
        return None
    x = [Fraction(0)] * k
    for r, c in pivots:
        x[c] = aug[r][k]
    return x


def _nonneg_combination(target: Sequence[Fraction],
                        gens: Sequence[Sequence[Fraction]]) -> bool:
    """Exact feasibility of target = nonnegative combination of gens.

    By Caratheodory it is enough to look for solutions supported on linearly
    independent subsets, so subset enumeration is complete, not a heuristic.
    """
    if all(x == 0 for x in target):
        return True
    if not gens:
        return False
    r = _rank(gens)
    for size in range(1, r + 1):
        for subset in itertools.combinations(range(len(gens)), size):
            chosen = [gens[i] for i in subset]
            if _rank(chosen) < len(chosen):
                continue
            x = _solve_exact(chosen, target)
            if x is not None and all(c >= 0 for c in x):
                return True
    return False


# -- cone approximations ------------------------------------------------------------


@dataclass(frozen=True)
class ConeApprox:
    level: int
    depth: int
    labels: Tuple[str, ...]
    generators: Tuple[Tuple[Fraction, ...], ...]
    rank: int
    extremal: Tuple[Tuple[Fraction, ...], ...]

    def to_dict(self) -> dict:
        return {"level": self.level, "depth": self.depth,
                "labels": list(self.labels),
                "generators": [[fraction_str(Fraction(x)) for x in g]
                               for g in self.generators],
                "rank": self.rank,
                "extremal": [[fraction_str(Fraction(x)) for x in g]
                             for g in self.extremal]}


def _prune_extremal(gens: Sequence[Tuple[Fraction, ...]]
                    ) -> Tuple[Tuple[Fraction, ...], ...]:
    # drop projective duplicates first, then anything the others generate
    seen: Dict[Tuple[Fraction, ...], Tuple[Fraction, ...]] = {}
    for g in gens:
        total = sum(g)
        if total == 0:
            continue
        seen.setdefault(tuple(Fraction(x) / total for x in g), g)
    survivors = list(seen.values())
    i = 0
    while i < len(survivors):
        others = survivors[:i] + survivors[i + 1:]
        if others and _nonneg_combination(survivors[i], others):
            survivors.pop(i)
        else:
            i += 1
    return tuple(survivors)


def cone_approximation(seq: SplitSequence, K: int, depth: int) -> ConeApprox:
    """Depth-d cone at level K: the nonnegative span of the columns of the
    (K-d, K) window, with exact rank and extremal-ray reduction."""
    if depth < 0:
        raise LevelOutOfRange(f"cone depth must be >= 0, got {depth}")
    W = window_matrix(seq, K - depth, K).matrix
    rows = tuple(sorted(W.rows))
    gens = tuple(tuple(Fraction(W.entry(r, c)) for r in rows)
                 for c in sorted(W.cols))
    return ConeApprox(level=K, depth=depth, labels=rows, generators=gens,
                      rank=_rank(gens), extremal=_prune_extremal(gens))


# -- projective metric and delta-boundedness ----------------------------------------


def projective_distance(x: Sequence[object], y: Sequence[object]) -> float:
    """Euclidean distance between the unit rays through x and y."""
    xs = [float(a) for a in x]
    ys = [float(a) for a in y]
    nx = math.sqrt(sum(a * a for a in xs))
    ny = math.sqrt(sum(a * a for a in ys))
    if nx == 0 or ny == 0:
        raise ZeroVector("projective distance needs nonzero vectors")
    return math.sqrt(sum((a / nx - b / ny) ** 2 for a, b in zip(xs, ys)))


@dataclass(frozen=True)
class DeltaBound:
    matrix: Tuple[Tuple[object, ...], ...]
    delta: Optional[object]

    def to_dict(self) -> dict:
        return {"matrix": [list(r) for r in self.matrix],
                "delta": None if self.delta is None else (
                    self.delta if isinstance(self.delta, float)
                    else fraction_str(Fraction(self.delta)))}


def _matrix_rows(m) -> Tuple[Tuple[object, ...], ...]:
    if hasattr(m, "matrix"):
        m = m.matrix
    if hasattr(m, "entries"):
        m = m.entries
    return tuple(tuple(row) for row in m)


def delta_bound(m) -> DeltaBound:
    """Smallest delta with m_ij <= delta * m_ik and m_ij <= delta * m_kj,
    i.e. the worst max/min ratio along any row or column.  None when some
    entry is not strictly positive."""
    rows = _matrix_rows(m)
    if not rows or any(x <= 0 for row in rows for x in row):
        return DeltaBound(rows, None)
    exact = all(not isinstance(x, float) for row in rows for x in row)

    def ratio(vals):
        top, bot = max(vals), min(vals)
        return Fraction(top, bot) if exact else top / bot

    cols = tuple(zip(*rows))
    delta = max(max(ratio(r) for r in rows), max(ratio(c) for c in cols))
    return DeltaBound(rows, delta)


def hilbert_projective_distance(x: Sequence[object],
                                y: Sequence[object]) -> float:
    """ln(max_i x_i/y_i * max_j y_j/x_j) over the joint support; infinite
    when the supports differ, zero exactly for parallel vectors."""
    xs = [float(a) for a in x]
    ys = [float(a) for a in y]
    if all(a == 0 for a in xs) or all(b == 0 for b in ys):
        raise ZeroVector("Hilbert distance needs nonzero vectors")
    if any((a == 0) != (b == 0) for a, b in zip(xs, ys)):
        return math.inf
    ratios = [a / b for a, b in zip(xs, ys) if b != 0]
    return math.log(max(ratios) / min(ratios))


def veech_inequality_check(B, u: Sequence[object], v: Sequence[object],
                           tol: float = 1e-9):
    """Projective contraction bound for a positive delta-bounded matrix:

        d_H(Bu, Bv) <= (delta - 1)/(delta + 1) * d_H(u, v)

    in the Hilbert projective metric, the contraction factor being
    tanh(ln(delta)/2): a delta-bounded matrix maps the whole cone into a
    subcone of Hilbert diameter at most 2 ln(delta), and Birkhoff's theorem
    turns that diameter into the factor.  Returns (lhs, rhs, holds), with
    `holds` tested at relative tolerance.  For delta = 1 the matrix has all
    entries equal, both sides vanish, and equality holds exactly.
    """
    db = delta_bound(B)
    if db.delta is None:
        raise NonPositiveMatrix("the inequality needs a strictly positive matrix")
    delta = float(db.delta)
    factor = (delta - 1.0) / (delta + 1.0)
    D = hilbert_projective_distance(u, v)
    rows = db.matrix
    Bu = [sum(float(rows[i][k]) * float(u[k]) for k in range(len(u)))
          for i in range(len(rows))]
    Bv = [sum(float(rows[i][k]) * float(v[k]) for k in range(len(v)))
          for i in range(len(rows))]
    lhs = hilbert_projective_distance(Bu, Bv)
    rhs = 0.0 if factor == 0.0 else factor * D
    holds = (math.isinf(rhs)
             or lhs <= rhs + tol * max(1.0, abs(lhs), abs(rhs)))
    return lhs, rhs, holds


# -- contraction traces -------------------------------------------------------------


@dataclass(frozen=True)
class ContractionStep:
    depth: int
    diameter: float
    rank: int
    delta: Optional[object]

    def to_dict(self) -> dict:
        return {"depth": self.depth, "diameter": self.diameter,
                "rank": self.rank,
                "delta": None if self.delta is None else (
                    self.delta if isinstance(self.delta, float)
                    else fraction_str(Fraction(self.delta)))}


def contraction_trace(seq: SplitSequence, K: int,
                      max_depth: int) -> List[ContractionStep]:
    """Projective diameter, exact rank, and delta of the depth-d cone
    generators for d = 0 .. max_depth (clamped to the audited prefix)."""
    max_depth = min(max_depth, seq.depth + K)
    steps: List[ContractionStep] = []
    for d in range(max_depth + 1):
        ca = cone_approximation(seq, K, d)
        diam = 0.0
        for g, h in itertools.combinations(ca.generators, 2):
            if any(x != 0 for x in g) and any(x != 0 for x in h):
                diam = max(diam, projective_distance(g, h))
        steps.append(ContractionStep(
            depth=d, diameter=diam, rank=ca.rank,
            delta=delta_bound(window_matrix(seq, K - d, K)).delta))
    return steps


# -- certificates -------------------------------------------------------------------


@dataclass(frozen=True)
class ErgodicityCertificate:
    """Graded verdict on unique ergodicity of the transversal measure cone.

    `interpretation` records whether the strong-properness audit passed:
    with it the cones speak about the leaf dynamics, without it the same
    numbers are only statements about the matrix products.
    """

    status: str
    lower_bound: int
    dim_bounds: Tuple[int, int]
    interpretation: str
    evidence: dict

    def to_dict(self) -> dict:
        return {"status": self.status, "lower_bound": self.lower_bound,
                "dim_bounds": list(self.dim_bounds),
                "interpretation": self.interpretation,
                "evidence": self.evidence}


def smallest_recurring_dimension(seq: SplitSequence, depth: int,
                                 recur_min: int = 3) -> int:
    """Least natural-edge count appearing at >= recur_min audited levels.

    A finite stand-in for the least dimension recurring infinitely often;
    falls back to the overall minimum when the prefix is too short for any
    count to recur."""
    depth = min(depth, seq.depth)
    counts: Dict[int, int] = {}
    for j in range(0, -depth - 1, -1):
        d = len(_labels(seq, j))
        counts[d] = counts.get(d, 0) + 1
    recurring = [d for d, c in counts.items() if c >= recur_min]
    return min(recurring) if recurring else min(counts)


def certify_unique_ergodicity(seq: SplitSequence, depth: int,
                              tol: float = 1e-8,
                              recur_min: int = 3) -> ErgodicityCertificate:
    """Run the full pipeline at the given depth and grade the outcome.

    Branches, strongest first: an exact recurring positive window yields
    UniquelyErgodicExact (the contraction inequality applies verbatim to the
    recurring matrix, and the certified-window diameters must shrink while
    positive); a final diameter below tol yields UniquelyErgodicNumeric; as
    long as r independent generators survive every audited depth the result
    is a LowerBoundDim(r) evidence certificate; otherwise Inconclusive.
    """
    depth = min(depth, seq.depth)
    sp = audit_strong_properness(seq)
    interpretation = ("dynamics" if sp.status.verdict == "Verified"
                      else "matrix-level")
    trace = contraction_trace(seq, 0, depth)
    final = trace[-1]
    dims = (smallest_recurring_dimension(seq, depth, recur_min),
            3 * (seq.rank - 1))
    evidence: dict = {
        "strong_properness": sp.status.to_dict(),
        "final_diameter": final.diameter,
        "final_rank": final.rank,
        "trace_tail": [s.to_dict() for s in trace[-3:]],
    }
    semi = scan_semi_normality(seq, depth)
    cert = semi.evidence.get("certificate")
    if (semi.status.verdict == "Verified" and cert and cert.get("exact")):
        d = cert["d"]
        width = cert["windows"][0][1] - cert["windows"][0][0]
        db = delta_bound(cert["matrix"])
        window_diams = [trace[k].diameter
                        for k in range(0, depth + 1, width)]
        shrinking = all(
            b < a if a > 0 else b == 0
            for a, b in zip(window_diams, window_diams[1:]))
        evidence.update({
            "semi_normality": cert,
            "delta": db.delta if isinstance(db.delta, float)
            else int(db.delta) if Fraction(db.delta).denominator == 1
            else fraction_str(Fraction(db.delta)),
            "window_diameters": window_diams,
            "window_contraction_strict": shrinking,
        })
        if shrinking:
            return ErgodicityCertificate(
                status="UniquelyErgodicExact", lower_bound=final.rank,
                dim_bounds=dims, interpretation=interpretation,
                evidence=evidence)
    elif cert:
        evidence["semi_normality_candidate"] = cert
    if final.diameter < tol:
        evidence["tol"] = tol
        return ErgodicityCertificate(
            status="UniquelyErgodicNumeric", lower_bound=final.rank,
            dim_bounds=dims, interpretation=interpretation,
            evidence=evidence)
    if final.rank >= 1:
        ca = cone_approximation(seq, 0, depth)
        evidence["surviving_extremal"] = [
            [fraction_str(Fraction(x)) for x in g] for g in ca.extremal]
        return ErgodicityCertificate(
            status="LowerBoundDim", lower_bound=final.rank,
            dim_bounds=dims, interpretation=interpretation,
            evidence=evidence)
    return ErgodicityCertificate(
        status="Inconclusive", lower_bound=0, dim_bounds=dims,
        interpretation=interpretation, evidence=evidence)


# -- transverse-measure evaluation --------------------------------------------------


def perron_weights(seq: SplitSequence, depth: int) -> List[WeightVector]:
    """Exact weight family from pushing the all-ones assignment up from the
    audited floor, normalised to unit total at level 0.

    Forward propagation is power iteration, so at shallow levels the family
    approximates the dominant (Perron) direction of the recurring window;
    pushing a guess *down* instead would amplify every rounding of the
    dominant eigenvector, which is why the floor-seeded form is used.
    """
    depth = min(depth, seq.depth)
    floor = -depth
    w: Dict[int, Dict[str, Fraction]] = {
        floor: {lab: Fraction(1) for lab in _labels(seq, floor)}}
    for j in range(floor, 0):
        T = window_matrix(seq, j, j + 1).matrix
        w[j + 1] = {row: sum((Fraction(T.entry(row, c)) * w[j][c]
                              for c in T.cols), Fraction(0))
                    for row in T.rows}
    norm = sum(w[0].values())
    return [WeightVector(level=j,
                         entries={lab: x / norm for lab, x in w[j].items()})
            for j in range(floor, 1)]


def _weights_by_level(ws: Sequence[WeightVector]) -> Dict[int, WeightVector]:
    by = {}
    for wv in ws:
        if wv.level in by:
            raise DimensionMismatch(f"duplicate weight level {wv.level}")
        by[wv.level] = wv
    return by


def evaluate_transverse_measure(seq: SplitSequence, ws: Sequence[WeightVector],
                                I: TurnSpec, q: PointSpec, depth: int,
                                tol: float = 1e-8):
    """Truncated evaluation of the weight family's measure on the leaf
    segments crossing I at the component of q.

    value sums the weight of every maximal edge pre-turn peeled off by the
    transversal decomposition; remainder_bound sums, over the pre-turns
    still unresolved at the depth cutoff, the cheapest adjacent edge weight
    at that level.  The true measure lies in [value, value + remainder].
    Expanding towers make the remainder shrink; for a tower whose expanding
    audit is Violated the series says nothing, hence NonExpandingSequence.
    The audit runs at the tower's full depth: a shallow evaluation cutoff
    does not make an expanding tower non-expanding.
    """
    exp = audit_expanding(seq, seq.depth)
    if exp.status.verdict == "Violated":
        raise NonExpandingSequence(
            f"expanding audit violated: {exp.status.to_dict()}")
    by = _weights_by_level(ws)
    lo = max(I.level - depth, -seq.depth)
    missing = [j for j in range(lo, I.level + 1) if j not in by]
    if missing:
        raise DimensionMismatch(f"weight vectors missing for levels {missing}")
    used = [by[j] for j in range(lo, I.level + 1)]
    chk = check_weight_equations(seq, used)
    if chk["mode"] == "exact":
        if not chk["ok"]:
            raise GraphError("weight equations fail on the evaluation range")
    else:
        worst = max((abs(r) for res in chk["residuals"].values()
                     for r in res.values()), default=0.0)
        if worst > tol:
            raise GraphError(
                f"weight-equation residual {worst} exceeds tolerance {tol}")
    dec = decompose_turn_transversal(seq, I, q, depth)
    zero = Fraction(0)
    value = sum((by[t.level].entries[lab] for t, lab in dec.emitted), zero)
    remainder = zero
    for t in dec.unresolved:
        g = seq.graph(t.level)
        adjacent = {g.natural_edge_of_cell(d >> 1).label for d in t.darts}
        remainder += min(by[t.level].entries[lab] for lab in adjacent)
    return value, remainder
