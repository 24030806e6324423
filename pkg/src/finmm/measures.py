"""Prohorov distance between mass vectors on a common finite metric space.

The decision "is the Prohorov distance at most eps" is solved by coupling
feasibility: route mass from mu to nu along pairs at distance < eps and ask
whether at most eps is left over.  By max-flow/min-cut duality the leftover
equals the worst subset deficiency max_A [mu(A) - nu(U_eps(A))], so a failed
flow yields a violating subset and a successful one yields a coupling witness.
The exact distance is recovered by scanning the finitely many rational
breakpoints at which feasibility can change (pairwise distance values, and
the flow deficiencies between them).

The max flow runs on Fractions end to end; the subset brute force kept in the
test suite is the independent oracle for all of this.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .core import (
    ONE,
    ZERO,
    FiniteMetricSpace,
    FiniteMMSpace,
    PartitionFamily,
    PreconditionError,
    Scalar,
    ScalarLike,
    _metric_of,
    as_scalar,
    diameter,
    mass_of,
    open_ball_enlargement,
)

# Any arc capacity above the total transportable mass (1) acts as infinite.
_UNBOUNDED = Fraction(2)


@dataclass(frozen=True)
class Coupling:
    """A joint mass matrix with prescribed row and column marginals."""

    matrix: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "matrix",
            tuple(tuple(as_scalar(v) for v in row) for row in self.matrix))

    def row_sums(self) -> tuple:
        return tuple(sum(row, ZERO) for row in self.matrix)

    def col_sums(self) -> tuple:
        cols = len(self.matrix[0]) if self.matrix else 0
        return tuple(sum((row[j] for row in self.matrix), ZERO) for j in range(cols))

    def check_marginals(self, mu: Sequence[Fraction], nu: Sequence[Fraction]) -> None:
        if any(v < 0 for row in self.matrix for v in row):
            raise PreconditionError("coupling has a negative entry")
        if self.row_sums() != tuple(mu):
            raise PreconditionError("coupling rows do not match the first marginal")
        if self.col_sums() != tuple(nu):
            raise PreconditionError("coupling columns do not match the second marginal")

    def mass_outside(self, space: FiniteMetricSpace, eps: Fraction) -> Fraction:
        """Total mass the coupling places on pairs at distance >= eps."""
        d = space.dist
        return sum(
            (self.matrix[i][j] for i in range(len(self.matrix))
             for j in range(len(self.matrix[i])) if d[i][j] >= eps),
            ZERO)


@dataclass(frozen=True)
class ProhorovDecision:
    """Outcome of one feasibility test, with a positive or negative witness."""

    feasible: bool
    eps: Fraction
    deficiency: Fraction
    coupling: Optional[Coupling]
    violating_set: Optional[tuple]


def _max_flow(supply: Sequence[Fraction], demand: Sequence[Fraction],
              arcs: Sequence[Sequence[bool]]):
    """Exact max flow in the bipartite transport network.

    Nodes are source, the supply side, the demand side, sink.  Returns the
    flow value, the flow matrix, and the supply nodes on the source side of
    the final residual cut.
    """
    n, m = len(supply), len(demand)
    src, snk = n + m, n + m + 1
    size = n + m + 2
    cap = [dict() for _ in range(size)]
    for i in range(n):
        cap[src][i] = supply[i]
        cap[i][src] = ZERO
    for j in range(m):
        cap[n + j][snk] = demand[j]
        cap[snk][n + j] = ZERO
    for i in range(n):
        row = arcs[i]
        for j in range(m):
            if row[j]:
                cap[i][n + j] = _UNBOUNDED
                cap[n + j][i] = ZERO
    value = ZERO
    while True:
        parent = {src: src}
        queue = [src]
        while queue and snk not in parent:
            u = queue.pop(0)
            for v in sorted(cap[u]):
                if v not in parent and cap[u][v] > 0:
                    parent[v] = u
                    queue.append(v)
        if snk not in parent:
            break
        bottleneck = None
        v = snk
        while v != src:
            u = parent[v]
            c = cap[u][v]
            if bottleneck is None or c < bottleneck:
                bottleneck = c
            v = u
        v = snk
        while v != src:
            u = parent[v]
            cap[u][v] -= bottleneck
            cap[v][u] += bottleneck
            v = u
        value += bottleneck
    reachable = {src}
    queue = [src]
    while queue:
        u = queue.pop(0)
        for v in sorted(cap[u]):
            if v not in reachable and cap[u][v] > 0:
                reachable.add(v)
                queue.append(v)
    flow = tuple(tuple(cap[n + j].get(i, ZERO) for j in range(m)) for i in range(n))
    cut_sources = tuple(i for i in range(n) if i in reachable)
    return value, flow, cut_sources


def _complete_coupling(flow, mu, nu) -> Coupling:
    """Extend a partial transport plan to a full coupling of mu and nu."""
    n, m = len(mu), len(nu)
    matrix = [list(flow[i]) for i in range(n)]
    row_left = [mu[i] - sum(flow[i], ZERO) for i in range(n)]
    col_left = [nu[j] - sum((flow[i][j] for i in range(n)), ZERO) for j in range(m)]
    j = 0
    for i in range(n):
        while row_left[i] > 0:
            while col_left[j] == 0:
                j += 1
            t = min(row_left[i], col_left[j])
            matrix[i][j] += t
            row_left[i] -= t
            col_left[j] -= t
    return Coupling(tuple(tuple(row) for row in matrix))


def _check_mass_vector(space: FiniteMetricSpace, v: Sequence[Fraction], name: str) -> tuple:
    vec = tuple(as_scalar(x) for x in v)
    if len(vec) != space.n:
        raise PreconditionError(f"{name} has mismatched dimension")
    if any(x < 0 for x in vec):
        raise PreconditionError(f"{name} has a negative entry")
    if sum(vec, ZERO) != 1:
        raise PreconditionError(f"{name} does not sum to 1")
    return vec


def prohorov_le(space, mu: Sequence[ScalarLike], nu: Sequence[ScalarLike],
                eps: ScalarLike) -> ProhorovDecision:
    """Decide whether mu(A) <= nu(U_eps(A)) + eps and its mirror hold for all A.

    On success the returned coupling places mass at most eps on pairs at
    distance >= eps; on failure the returned subset violates the first
    inequality (the mirror inequality fails symmetrically for probability
    masses).
    """
    metric = _metric_of(space)
    eps = as_scalar(eps)
    if eps <= 0:
        raise PreconditionError("threshold eps must be positive")
    mu = _check_mass_vector(metric, mu, "mu")
    nu = _check_mass_vector(metric, nu, "nu")
    d = metric.dist
    n = metric.n
    arcs = [[d[i][j] < eps for j in range(n)] for i in range(n)]
    value, flow, cut_sources = _max_flow(mu, nu, arcs)
    arcs_t = [[arcs[j][i] for j in range(n)] for i in range(n)]
    value_mirror, _, _ = _max_flow(nu, mu, arcs_t)
    assert value_mirror == value, "one-sided deficiencies disagree"
    deficiency = ONE - value
    if deficiency <= eps:
        coupling = _complete_coupling(flow, mu, nu)
        coupling.check_marginals(mu, nu)
        assert coupling.mass_outside(metric, eps) <= eps
        return ProhorovDecision(True, eps, deficiency, coupling, None)
    witness = cut_sources
    enlarged = set(open_ball_enlargement(metric, witness, eps)) if witness else set()
    gap = mass_of_vec(mu, witness) - mass_of_vec(nu, enlarged)
    assert gap == deficiency > eps
    return ProhorovDecision(False, eps, deficiency, None, witness)


def mass_of_vec(vec: Sequence[Fraction], indices) -> Fraction:
    return sum((vec[i] for i in set(indices)), ZERO)


def prohorov_distance(space, mu: Sequence[ScalarLike], nu: Sequence[ScalarLike]) -> Fraction:
    """The exact Prohorov distance between two mass vectors on one space.

    Feasibility is monotone in eps and can only change at a pairwise distance
    value or at a flow deficiency, so the infimum is the least over distance
    levels t of max(t, deficiency at level t), where level t admits transport
    along pairs at distance <= t.
    """
    metric = _metric_of(space)
    mu = _check_mass_vector(metric, mu, "mu")
    nu = _check_mass_vector(metric, nu, "nu")
    d = metric.dist
    n = metric.n
    levels = sorted({ZERO} | {d[i][j] for i in range(n) for j in range(i + 1, n)})
    best = None
    for k, t in enumerate(levels):
        if best is not None and t >= best:
            break
        arcs = [[d[i][j] <= t for j in range(n)] for i in range(n)]
        value, _, _ = _max_flow(mu, nu, arcs)
        deficiency = ONE - value
        nxt = levels[k + 1] if k + 1 < len(levels) else None
        if nxt is not None and deficiency >= nxt:
            continue
        candidate = max(t, deficiency)
        if best is None or candidate < best:
            best = candidate
    assert best is not None
    return best


@dataclass(frozen=True)
class PartitionBoundCertificate:
    """A certified Prohorov upper bound eps + eps' from a block partition."""

    bound: Fraction
    eps: Fraction
    eps_prime: Fraction
    total_block_discrepancy: Fraction
    escape_mass: Fraction
    decision: ProhorovDecision


def partition_prohorov_bound(family: PartitionFamily, nu: Sequence[ScalarLike],
                             eps: ScalarLike, eps_prime: ScalarLike,
                             ratio_form: bool = False) -> PartitionBoundCertificate:
    """Certify d_P(mu, nu) <= eps + eps' from a family of small disjoint blocks.

    Preconditions, each reported with the failing block when violated:
    every block has diameter <= eps; the mass escaping the union is <= eps;
    and the total block-mass discrepancy sum_A |mu(A) - nu(A)| is <= eps'.
    With ``ratio_form`` the discrepancy bound is instead derived from
    1 - eps' <= nu(A)/mu(A) <= 1 + eps' on every block (all of which must
    then carry positive mu-mass).
    """
    eps = as_scalar(eps)
    eps_prime = as_scalar(eps_prime)
    if eps <= 0 or eps_prime <= 0:
        raise PreconditionError("eps and eps' must be positive")
    family.check()
    space = family.space
    nu = _check_mass_vector(space.metric, nu, "nu")
    for k, block in enumerate(family.blocks):
        if diameter(space.metric, block) > eps:
            raise PreconditionError(f"block {k} has diameter above eps")
    escape = ONE - family.union_mass()
    if escape > eps:
        raise PreconditionError("mass escaping the block union exceeds eps")
    total = ZERO
    for k, block in enumerate(family.blocks):
        mu_a = family.block_mass(k)
        nu_a = mass_of_vec(nu, block)
        if ratio_form:
            if mu_a <= 0:
                raise PreconditionError(f"block {k} has no mass; ratio form needs mu(A) > 0")
            ratio = nu_a / mu_a
            if not (ONE - eps_prime <= ratio <= ONE + eps_prime):
                raise PreconditionError(f"block {k} violates the mass-ratio band")
        total += abs(mu_a - nu_a)
    if total > eps_prime:
        raise PreconditionError("total block-mass discrepancy exceeds eps'")
    bound = eps + eps_prime
    decision = prohorov_le(space.metric, space.mass, nu, bound)
    assert decision.feasible, "certified bound failed its feasibility check"
    return PartitionBoundCertificate(bound, eps, eps_prime, total, escape, decision)
