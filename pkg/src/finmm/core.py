"""Exact data model for finite metric measure spaces.

Every numeric quantity in this package is a ``fractions.Fraction``.  Nothing
on the computation path touches floating point, so every inequality a routine
certifies is an exact statement about rationals, and every certificate can be
re-checked bit for bit.

The value types are immutable; all operations are pure functions.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Optional, Sequence, Union

Scalar = Fraction

ScalarLike = Union[Fraction, int, str, Sequence[int]]


class PreconditionError(ValueError):
    """A documented precondition of an operation was violated."""


class BudgetExceededError(RuntimeError):
    """A configured search or size budget was exhausted."""


def as_scalar(value: ScalarLike) -> Fraction:
    """Coerce an int, "p/q" string, (num, den) pair or Fraction to a Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise PreconditionError(f"not a rational scalar: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, (tuple, list)) and len(value) == 2:
        num, den = value
        return Fraction(int(num), int(den))
    raise PreconditionError(f"not a rational scalar: {value!r}")


ZERO = Fraction(0)
ONE = Fraction(1)


@dataclass(frozen=True)
class FiniteMetricSpace:
    """A finite labeled point set with an exact rational distance matrix."""

    labels: tuple
    dist: tuple

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        rows = tuple(tuple(as_scalar(v) for v in row) for row in self.dist)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dist", rows)

    @property
    def n(self) -> int:
        return len(self.labels)

    def d(self, i: int, j: int) -> Fraction:
        return self.dist[i][j]

    def points(self) -> range:
        return range(self.n)

    def metric_violations(self) -> list:
        """All violated metric axioms, as human-readable strings."""
        out = []
        n = self.n
        if n == 0:
            out.append("empty point set")
            return out
        if len(self.dist) != n or any(len(row) != n for row in self.dist):
            out.append("distance matrix shape does not match label count")
            return out
        d = self.dist
        for i in range(n):
            if d[i][i] != 0:
                out.append(f"nonzero self-distance at point {i}")
        for i in range(n):
            for j in range(i + 1, n):
                if d[i][j] != d[j][i]:
                    out.append(f"asymmetric distance between points {i} and {j}")
                if d[i][j] <= 0:
                    out.append(
                        f"zero distance between distinct points {i} and {j}"
                        if d[i][j] == 0
                        else f"negative distance between points {i} and {j}"
                    )
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    if d[i][j] > d[i][k] + d[k][j]:
                        out.append(
                            f"triangle inequality fails on ({i},{j},{k})")
        return out

    def require_metric(self) -> None:
        bad = self.metric_violations()
        if bad:
            raise PreconditionError("not a metric space: " + "; ".join(bad))


@dataclass(frozen=True)
class FiniteMMSpace:
    """A finite metric space together with a rational probability mass vector."""

    metric: FiniteMetricSpace
    mass: tuple

    def __post_init__(self):
        object.__setattr__(self, "mass", tuple(as_scalar(v) for v in self.mass))

    @property
    def n(self) -> int:
        return self.metric.n

    @property
    def labels(self) -> tuple:
        return self.metric.labels

    def d(self, i: int, j: int) -> Fraction:
        return self.metric.dist[i][j]

    def points(self) -> range:
        return range(self.n)

    def support(self) -> tuple:
        return tuple(i for i, m in enumerate(self.mass) if m > 0)


def mm_space(labels: Sequence[str], dist: Sequence[Sequence[ScalarLike]],
             mass: Sequence[ScalarLike]) -> FiniteMMSpace:
    return FiniteMMSpace(FiniteMetricSpace(tuple(labels), tuple(dist)), tuple(mass))


@dataclass(frozen=True)
class ValidationReport:
    """Violated invariants (empty iff valid) plus non-fatal flags."""

    violations: tuple
    flags: tuple

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(space: FiniteMMSpace) -> ValidationReport:
    """Report every violated invariant of a finite mm-space.

    Zero-mass points are legal but flagged, since several constructions
    require strictly positive mass on the points they touch.
    """
    violations = list(space.metric.metric_violations())
    flags = []
    if len(space.mass) != space.metric.n:
        violations.append("mass vector length does not match point count")
    else:
        for i, m in enumerate(space.mass):
            if m < 0:
                violations.append(f"negative mass at point {i}")
            elif m == 0:
                flags.append(f"zero mass at point {i}")
        if sum(space.mass, ZERO) != 1:
            violations.append("total mass is not exactly 1")
    return ValidationReport(tuple(violations), tuple(flags))


def require_valid(space: FiniteMMSpace) -> None:
    report = validate(space)
    if not report.ok:
        raise PreconditionError("invalid mm-space: " + "; ".join(report.violations))


def mass_of(space: FiniteMMSpace, indices: Iterable[int]) -> Fraction:
    return sum((space.mass[i] for i in set(indices)), ZERO)


def set_distance(space: FiniteMetricSpace, i: int, indices: Iterable[int]) -> Optional[Fraction]:
    """min_{j in A} d(i, j), or None for A = empty set."""
    best = None
    row = space.dist[i]
    for j in indices:
        if best is None or row[j] < best:
            best = row[j]
    return best


def open_ball_enlargement(space: FiniteMetricSpace, indices: Iterable[int],
                          eps: ScalarLike) -> tuple:
    """All points strictly within eps of the set: { i : d(i, A) < eps }.

    The inequality is strict; the enlargement of the empty set is empty.
    """
    eps = as_scalar(eps)
    if eps <= 0:
        raise PreconditionError("enlargement radius must be positive")
    index_set = set(indices)
    if not index_set:
        return ()
    out = []
    for i in space.points():
        row = space.dist[i]
        if any(row[j] < eps for j in index_set):
            out.append(i)
    return tuple(out)


def diameter(space: FiniteMetricSpace, indices: Optional[Iterable[int]] = None) -> Fraction:
    """Max pairwise distance within the set; empty sets and singletons give 0."""
    pts = list(space.points()) if indices is None else sorted(set(indices))
    if len(pts) <= 1:
        return ZERO
    d = space.dist
    return max(d[i][j] for i, j in combinations(pts, 2))


@dataclass(frozen=True)
class MapWitness:
    """A point-to-point map between spaces, with an optional domain.

    ``assignment`` is total on the source points.  ``domain`` (when present)
    is the subset of source indices on which distortion-style conditions are
    asserted; measure-transport conditions always use the whole source.
    Either endpoint may be a plain ``FiniteMetricSpace`` when no measure is
    involved.
    """

    source: object
    target: object
    assignment: tuple
    domain: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(i) for i in self.assignment))
        if self.domain is not None:
            object.__setattr__(self, "domain", tuple(sorted(set(int(i) for i in self.domain))))

    def __call__(self, i: int) -> int:
        return self.assignment[i]

    def domain_indices(self) -> tuple:
        if self.domain is None:
            return tuple(range(_n_points(self.source)))
        return self.domain

    def image(self) -> tuple:
        return tuple(sorted(set(self.assignment)))

    def check(self) -> None:
        ns, nt = _n_points(self.source), _n_points(self.target)
        if len(self.assignment) != ns:
            raise PreconditionError("assignment is not total on the source")
        if any(not (0 <= j < nt) for j in self.assignment):
            raise PreconditionError("assignment leaves the target index range")
        if self.domain is not None and any(not (0 <= i < ns) for i in self.domain):
            raise PreconditionError("domain leaves the source index range")


def _n_points(space) -> int:
    return space.n


def _metric_of(space) -> FiniteMetricSpace:
    return space.metric if isinstance(space, FiniteMMSpace) else space


def pushforward(f: MapWitness) -> tuple:
    """Transport the source mass through the map; the result sums to 1."""
    f.check()
    if not isinstance(f.source, FiniteMMSpace) or not isinstance(f.target, FiniteMMSpace):
        raise PreconditionError("pushforward needs metric measure spaces at both ends")
    out = [ZERO] * f.target.n
    for i, m in enumerate(f.source.mass):
        out[f.assignment[i]] += m
    return tuple(out)


def compose(f: MapWitness, g: MapWitness) -> MapWitness:
    """The composite witness g(f(.)); domains intersect accordingly."""
    if f.target is not g.source and f.target != g.source:
        raise PreconditionError("witnesses do not compose: middle spaces differ")
    assignment = tuple(g.assignment[j] for j in f.assignment)
    if f.domain is None and g.domain is None:
        domain = None
    else:
        g_dom = set(g.domain_indices())
        domain = tuple(i for i in f.domain_indices() if f.assignment[i] in g_dom)
    return MapWitness(f.source, g.target, assignment, domain)


def additive_defect(f: MapWitness, indices: Optional[Iterable[int]] = None) -> Fraction:
    """max over pairs in the domain of d_Y(f i, f j) - d_X(i, j), at least 0."""
    pts = list(f.domain_indices()) if indices is None else sorted(set(indices))
    ds, dt = _metric_of(f.source).dist, _metric_of(f.target).dist
    a = f.assignment
    worst = ZERO
    for i, j in combinations(pts, 2):
        gap = dt[a[i]][a[j]] - ds[i][j]
        if gap > worst:
            worst = gap
    return worst


def distortion(f: MapWitness, indices: Optional[Iterable[int]] = None) -> Fraction:
    """max over pairs in the domain of |d_X(i, j) - d_Y(f i, f j)|."""
    pts = list(f.domain_indices()) if indices is None else sorted(set(indices))
    ds, dt = _metric_of(f.source).dist, _metric_of(f.target).dist
    a = f.assignment
    worst = ZERO
    for i, j in combinations(pts, 2):
        gap = abs(dt[a[i]][a[j]] - ds[i][j])
        if gap > worst:
            worst = gap
    return worst


def mass_defect(f: MapWitness) -> Fraction:
    """1 - (source mass of the domain)."""
    if not isinstance(f.source, FiniteMMSpace):
        raise PreconditionError("mass defect needs a measured source")
    return ONE - mass_of(f.source, f.domain_indices())


@dataclass(frozen=True)
class PartitionFamily:
    """Disjoint nonempty index blocks of an mm-space.

    The union may be a proper subset of the points.  In a finite metric
    space every subset is clopen, so each block automatically has
    boundary of measure zero.
    """

    space: FiniteMMSpace
    blocks: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "blocks",
            tuple(tuple(sorted(set(int(i) for i in b))) for b in self.blocks))

    def __len__(self) -> int:
        return len(self.blocks)

    def union(self) -> tuple:
        out = set()
        for b in self.blocks:
            out.update(b)
        return tuple(sorted(out))

    def union_mass(self) -> Fraction:
        return mass_of(self.space, self.union())

    def block_mass(self, k: int) -> Fraction:
        return mass_of(self.space, self.blocks[k])

    def min_block_mass(self) -> Fraction:
        return min(self.block_mass(k) for k in range(len(self.blocks)))

    def block_of(self, point: int) -> Optional[int]:
        for k, b in enumerate(self.blocks):
            if point in b:
                return k
        return None

    def check(self) -> None:
        n = self.space.n
        if not self.blocks:
            raise PreconditionError("partition family has no blocks")
        seen = set()
        for k, b in enumerate(self.blocks):
            if not b:
                raise PreconditionError(f"block {k} is empty")
            for i in b:
                if not (0 <= i < n):
                    raise PreconditionError(f"block {k} leaves the index range")
                if i in seen:
                    raise PreconditionError(f"blocks are not disjoint at point {i}")
                seen.add(i)


def canonicalize(space: FiniteMMSpace) -> tuple:
    """Drop zero-mass points.  Returns (new space, kept source indices)."""
    kept = space.support()
    if len(kept) == space.n:
        return space, tuple(range(space.n))
    if not kept:
        raise PreconditionError("cannot canonicalize a space with no mass")
    labels = tuple(space.labels[i] for i in kept)
    dist = tuple(tuple(space.metric.dist[i][j] for j in kept) for i in kept)
    mass = tuple(space.mass[i] for i in kept)
    return FiniteMMSpace(FiniteMetricSpace(labels, dist), mass), kept


_MASS_LATTICE = 9
_DIST_LATTICE = 8


def generate_instance(n_points: int, diam_bound: ScalarLike, seed: int) -> FiniteMMSpace:
    """A random valid mm-space with n_points points and diameter <= diam_bound.

    Distances are drawn from a rational lattice and repaired into a metric by
    shortest-path closure (which only shrinks entries, so the diameter bound
    survives).  Masses are positive lattice rationals renormalized to total 1.
    Deterministic for a fixed seed.
    """
    diam_bound = as_scalar(diam_bound)
    if n_points < 1:
        raise PreconditionError("need at least one point")
    if diam_bound <= 0:
        raise PreconditionError("diameter bound must be positive")
    rng = random.Random(seed)
    labels = tuple(f"p{i}" for i in range(n_points))
    if n_points == 1:
        return FiniteMMSpace(FiniteMetricSpace(labels, ((ZERO,),)), (ONE,))
    d = [[ZERO] * n_points for _ in range(n_points)]
    for i in range(n_points):
        for j in range(i + 1, n_points):
            v = diam_bound * Fraction(rng.randint(1, _DIST_LATTICE), _DIST_LATTICE)
            d[i][j] = d[j][i] = v
    for k in range(n_points):
        for i in range(n_points):
            for j in range(n_points):
                via = d[i][k] + d[k][j]
                if via < d[i][j]:
                    d[i][j] = via
    weights = [rng.randint(1, _MASS_LATTICE) for _ in range(n_points)]
    total = sum(weights)
    mass = tuple(Fraction(w, total) for w in weights)
    space = FiniteMMSpace(FiniteMetricSpace(labels, tuple(tuple(r) for r in d)), mass)
    report = validate(space)
    assert report.ok, report.violations
    return space
