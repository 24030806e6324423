"""Almost-isomorphism certificates and Lipschitz-order decisions.

An eps-mm-isomorphism witness is scored by three exact statistics: the mass
missing from its domain, the worst metric distortion on the domain, and the
Prohorov distance between the transported mass and the target mass.  The
witness passes at eps iff all three are <= eps, and a passing witness at eps
certifies box distance <= 3 eps; conversely box distance < eps guarantees a
passing witness at 3 eps, which is what drives the refutation lower bound in
``box_bounds``.

Domination (exact and approximate) is decided by pruned backtracking over
target assignments.  All searches scan source and target indices in
increasing order, so reported witnesses are the lexicographically least
optima and results are independent of any execution interleaving.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Optional, Sequence

from .core import (
    ONE,
    ZERO,
    BudgetExceededError,
    FiniteMMSpace,
    MapWitness,
    PreconditionError,
    ScalarLike,
    additive_defect,
    as_scalar,
    distortion,
    mass_defect,
    mass_of,
    pushforward,
)
from .measures import prohorov_distance

DEFAULT_BUDGET = 2_000_000


@dataclass(frozen=True)
class MmIsoCertificate:
    """A witness with its exact breakdown; eps is the max of the three parts."""

    witness: MapWitness
    eps: Fraction
    mass_defect: Fraction
    distortion: Fraction
    prohorov: Fraction

    @property
    def breakdown(self) -> tuple:
        return (self.mass_defect, self.distortion, self.prohorov)

    @property
    def box_bound(self) -> Fraction:
        return 3 * self.eps


@dataclass(frozen=True)
class MmIsoVerification:
    passed: bool
    eps: Fraction
    certificate: Optional[MmIsoCertificate]
    violation: Optional[str]
    breakdown: tuple


@dataclass(frozen=True)
class DominationCertificate:
    """Witness for exact domination (eps = 0) or the eps relation.

    mode "exact": 1-Lipschitz with exact mass transport.
    mode "eps": the three-part relation holds with the stored domain.
    mode "eps_zero": same with the domain equal to the whole source.
    """

    witness: MapWitness
    mode: str
    eps: Fraction


@dataclass(frozen=True)
class SearchStats:
    nodes: int
    complete: bool


@dataclass(frozen=True)
class DominationResult:
    status: str  # "dominates" | "refuted" | "indeterminate"
    certificate: Optional[DominationCertificate]
    stats: SearchStats


@dataclass(frozen=True)
class MinMmIsoResult:
    eps_star: Fraction
    certificate: MmIsoCertificate
    optimal: bool
    stats: SearchStats


@dataclass(frozen=True)
class BoxBoundsResult:
    lower: Fraction
    upper: Fraction
    forward: MinMmIsoResult
    backward: MinMmIsoResult
    optimal: bool


def _require_mm_pair(f: MapWitness) -> None:
    if not isinstance(f.source, FiniteMMSpace) or not isinstance(f.target, FiniteMMSpace):
        raise PreconditionError("witness must run between metric measure spaces")
    f.check()


def _witness_breakdown(f: MapWitness) -> tuple:
    defect = mass_defect(f)
    dist = distortion(f)
    dp = prohorov_distance(f.target.metric, pushforward(f), f.target.mass)
    return defect, dist, dp


def verify_mm_iso(f: MapWitness, eps: ScalarLike) -> MmIsoVerification:
    """Check the three conditions of an eps-mm-isomorphism witness exactly.

    Reports the first violated condition, in the order: domain mass,
    distortion on the domain, Prohorov distance of the transported mass.
    """
    _require_mm_pair(f)
    eps = as_scalar(eps)
    defect, dist, dp = _witness_breakdown(f)
    breakdown = (defect, dist, dp)
    violation = None
    if defect > eps:
        violation = f"domain mass {1 - defect} is below 1 - eps"
    elif dist > eps:
        violation = f"distortion {dist} exceeds eps on the domain"
    elif dp > eps:
        violation = f"Prohorov distance {dp} of the transported mass exceeds eps"
    if violation is not None:
        return MmIsoVerification(False, eps, None, violation, breakdown)
    cert = MmIsoCertificate(f, max(breakdown), defect, dist, dp)
    return MmIsoVerification(True, eps, cert, None, breakdown)


def _domains_by_mass(space: FiniteMMSpace) -> list:
    """All index subsets, largest mass first, ties broken lexicographically."""
    n = space.n
    out = []
    for bits in range(1 << n):
        subset = tuple(i for i in range(n) if bits >> i & 1)
        out.append((mass_of(space, subset), subset))
    out.sort(key=lambda t: (-t[0], t[1]))
    return out


def _assignments(nx: int, ny: int):
    """All maps [nx] -> [ny] in lexicographic order."""
    current = [0] * nx
    while True:
        yield tuple(current)
        k = nx - 1
        while k >= 0 and current[k] == ny - 1:
            current[k] = 0
            k -= 1
        if k < 0:
            return
        current[k] += 1


def min_mm_iso(source: FiniteMMSpace, target: FiniteMMSpace,
               budget: int = DEFAULT_BUDGET) -> MinMmIsoResult:
    """The least eps over all assignments and domains at which a witness passes.

    A passing witness at eps* certifies box distance <= 3 eps*.  Domains are
    scanned in decreasing-mass order so the mass-defect statistic prunes the
    tail; Prohorov distances are memoized per transported-mass vector.  When
    the budget runs out the best witness found so far is returned, flagged
    non-optimal.
    """
    nx, ny = source.n, target.n
    domains = _domains_by_mass(source)
    dp_cache: dict = {}
    best: Optional[Fraction] = None
    best_cert: Optional[MmIsoCertificate] = None
    work = 0
    complete = True
    for assignment in _assignments(nx, ny):
        if work > budget:
            complete = False
            break
        f_full = MapWitness(source, target, assignment, None)
        pf = pushforward(f_full)
        dp = dp_cache.get(pf)
        if dp is None:
            dp = prohorov_distance(target.metric, pf, target.mass)
            dp_cache[pf] = dp
        work += 1
        if best is not None and dp >= best:
            continue
        for dom_mass, dom in domains:
            work += 1
            defect = ONE - dom_mass
            if best is not None and max(defect, dp) >= best:
                break
            dist = distortion(MapWitness(source, target, assignment, dom))
            value = max(defect, dist, dp)
            if best is None or value < best:
                best = value
                witness = MapWitness(source, target, assignment, dom)
                best_cert = MmIsoCertificate(witness, value, defect, dist, dp)
    assert best_cert is not None
    return MinMmIsoResult(best_cert.eps, best_cert, complete, SearchStats(work, complete))


def box_bounds(space_a: FiniteMMSpace, space_b: FiniteMMSpace,
               budget: int = DEFAULT_BUDGET) -> BoxBoundsResult:
    """An exact sandwich lower <= box(A, B) <= upper.

    upper is 3 times the smaller of the two directional minimal witness
    levels.  For every eps below a directional minimum no 3 eps-witness in
    that direction exists, which refutes box(A, B) < eps; the supremum of the
    refuted grid is the larger directional minimum divided by 3.  On budget
    exhaustion the lower bound degrades to 0 and the upper stays valid.
    """
    fwd = min_mm_iso(space_a, space_b, budget)
    bwd = min_mm_iso(space_b, space_a, budget)
    upper = 3 * min(fwd.eps_star, bwd.eps_star)
    optimal = fwd.optimal and bwd.optimal
    lower = max(fwd.eps_star, bwd.eps_star) / 3 if optimal else ZERO
    assert lower <= upper
    return BoxBoundsResult(lower, upper, fwd, bwd, optimal)


def dominates(big: FiniteMMSpace, small: FiniteMMSpace,
              budget: int = DEFAULT_BUDGET) -> DominationResult:
    """Decide exactly whether a 1-Lipschitz map big -> small transports the mass.

    Backtracking over target assignments with two pruning rules: a partial
    map that already stretches some pair is abandoned, and so is one whose
    remaining compatible source mass cannot fill some target's residual
    demand.  A fully pruned tree is an exhaustion proof of refutation.
    """
    nx, ny = big.n, small.n
    dx, dy = big.metric.dist, small.metric.dist
    mu, nu = big.mass, small.mass
    assignment = [0] * nx
    assigned_mass = [ZERO] * ny
    suffix_mass = [ZERO] * (nx + 1)
    for i in range(nx - 1, -1, -1):
        suffix_mass[i] = suffix_mass[i + 1] + mu[i]
    nodes = 0

    def feasible_residuals(depth: int) -> bool:
        for t in range(ny):
            residual = nu[t] - assigned_mass[t]
            if residual == 0:
                continue
            reachable = ZERO
            for k in range(depth, nx):
                if all(dy[t][assignment[j]] <= dx[k][j] for j in range(depth)):
                    reachable += mu[k]
                    if reachable >= residual:
                        break
            if reachable < residual:
                return False
        return True

    def search(depth: int):
        nonlocal nodes
        if depth == nx:
            return tuple(assignment)
        for t in range(ny):
            nodes += 1
            if nodes > budget:
                raise BudgetExceededError
            if assigned_mass[t] + mu[depth] > nu[t]:
                continue
            if any(dy[t][assignment[j]] > dx[depth][j] for j in range(depth)):
                continue
            assignment[depth] = t
            assigned_mass[t] += mu[depth]
            if feasible_residuals(depth + 1):
                found = search(depth + 1)
                if found is not None:
                    return found
            assigned_mass[t] -= mu[depth]
        return None

    try:
        found = search(0)
    except BudgetExceededError:
        return DominationResult("indeterminate", None, SearchStats(nodes, False))
    if found is None:
        return DominationResult("refuted", None, SearchStats(nodes, True))
    witness = MapWitness(big, small, found, None)
    assert additive_defect(witness) == 0 and pushforward(witness) == tuple(nu)
    cert = DominationCertificate(witness, "exact", ZERO)
    return DominationResult("dominates", cert, SearchStats(nodes, True))


@dataclass(frozen=True)
class EpsDominationCheck:
    passed: bool
    eps: Fraction
    mass_defect: Fraction
    defect: Fraction
    prohorov: Fraction
    violation: Optional[str]


def check_eps_domination(witness: MapWitness, eps: ScalarLike,
                         require_full_domain: bool = False) -> EpsDominationCheck:
    """Verify the three-part approximate-domination relation for one witness."""
    _require_mm_pair(witness)
    eps = as_scalar(eps)
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    if require_full_domain and witness.domain is not None \
            and len(witness.domain) != witness.source.n:
        return EpsDominationCheck(False, eps, ONE, ZERO, ZERO,
                                  "domain must be the whole source")
    md = mass_defect(witness)
    defect = additive_defect(witness)
    dp = prohorov_distance(witness.target.metric, pushforward(witness),
                           witness.target.mass)
    violation = None
    if md > eps:
        violation = "domain mass below 1 - eps"
    elif defect > eps:
        violation = "additive defect exceeds eps on the domain"
    elif dp > eps:
        violation = "Prohorov distance of the transported mass exceeds eps"
    return EpsDominationCheck(violation is None, eps, md, defect, dp, violation)


def eps_dominates(big: FiniteMMSpace, small: FiniteMMSpace, eps: ScalarLike,
                  require_full_domain: bool = False,
                  budget: int = DEFAULT_BUDGET,
                  witness: Optional[MapWitness] = None) -> DominationResult:
    """Decide the approximate-domination relation at level eps.

    With ``require_full_domain`` the exceptional set must be empty.  When a
    witness is supplied only that witness is verified (no search), which is
    how pipeline certificates are re-checked deterministically.
    """
    eps = as_scalar(eps)
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    mode = "eps_zero" if require_full_domain else "eps"
    if witness is not None:
        check = check_eps_domination(witness, eps, require_full_domain)
        if check.passed:
            cert = DominationCertificate(witness, mode, eps)
            return DominationResult("dominates", cert, SearchStats(0, True))
        return DominationResult("refuted", None, SearchStats(0, True))

    nx, ny = big.n, small.n
    dx, dy = big.metric.dist, small.metric.dist
    dp_cache: dict = {}
    domains = None if require_full_domain else _domains_by_mass(big)
    assignment = [0] * nx
    nodes = 0

    def leaf_domain(full: MapWitness):
        """Largest-mass domain meeting the defect bound, or None."""
        for dom_mass, dom in domains:
            if ONE - dom_mass > eps:
                return None
            if additive_defect(MapWitness(big, small, full.assignment, dom)) <= eps:
                return dom
        return None

    def search(depth: int):
        nonlocal nodes
        if depth == nx:
            full = MapWitness(big, small, tuple(assignment), None)
            pf = pushforward(full)
            dp = dp_cache.get(pf)
            if dp is None:
                dp = prohorov_distance(small.metric, pf, small.mass)
                dp_cache[pf] = dp
            if dp > eps:
                return None
            if require_full_domain:
                return full
            dom = leaf_domain(full)
            if dom is None:
                return None
            return MapWitness(big, small, tuple(assignment), dom)
        for t in range(ny):
            nodes += 1
            if nodes > budget:
                raise BudgetExceededError
            if require_full_domain and any(
                    dy[t][assignment[j]] > dx[depth][j] + eps for j in range(depth)):
                continue
            assignment[depth] = t
            found = search(depth + 1)
            if found is not None:
                return found
        return None

    try:
        found = search(0)
    except BudgetExceededError:
        return DominationResult("indeterminate", None, SearchStats(nodes, False))
    if found is None:
        return DominationResult("refuted", None, SearchStats(nodes, True))
    check = check_eps_domination(found, eps, require_full_domain)
    assert check.passed
    cert = DominationCertificate(found, mode, eps)
    return DominationResult("dominates", cert, SearchStats(nodes, True))
