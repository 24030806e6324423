"""Gromov-Hausdorff machinery on plain finite metric spaces.

Exact GH distances come from branch-and-bound over correspondences (half the
minimal distortion); cheap two-sided bounds come from minimal almost-isometry
searches, since an eps-isometry forces the distance strictly below 2 eps and
a distance below eps forces a 2 eps-isometry.  The order side mirrors the
measured theory: domination is a 1-Lipschitz surjection, its approximate
version trades an additive defect against a covering radius, and the refine
step sharpens a dominator scale by scale with certified 3 eps-isometric
projections back.

All searches scan indices in increasing order, so reported witnesses are
lexicographically least and runs are reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product as iter_product
from typing import Optional, Sequence

from .core import (
    ONE,
    ZERO,
    BudgetExceededError,
    FiniteMetricSpace,
    MapWitness,
    PreconditionError,
    ScalarLike,
    additive_defect,
    as_scalar,
    diameter,
    distortion,
)
from .boxorder import SearchStats

DEFAULT_BUDGET = 2_000_000
DEFAULT_POINT_CAP = 4096


@dataclass(frozen=True)
class Correspondence:
    """A relation between two point sets whose projections are both onto."""

    pairs: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "pairs",
            tuple(sorted(set((int(a), int(b)) for a, b in self.pairs))))

    def check(self, space_x: FiniteMetricSpace, space_y: FiniteMetricSpace) -> None:
        left = {a for a, _ in self.pairs}
        right = {b for _, b in self.pairs}
        if left != set(range(space_x.n)) or right != set(range(space_y.n)):
            raise PreconditionError("correspondence projections are not onto")

    def distortion(self, space_x: FiniteMetricSpace,
                   space_y: FiniteMetricSpace) -> Fraction:
        dx, dy = space_x.dist, space_y.dist
        worst = ZERO
        for idx, (a, b) in enumerate(self.pairs):
            for a2, b2 in self.pairs[idx:]:
                gap = abs(dx[a][a2] - dy[b][b2])
                if gap > worst:
                    worst = gap
        return worst


@dataclass(frozen=True)
class GhCertificate:
    """Either a correspondence (value = half its distortion, an upper bound
    on the GH distance) or an almost-isometry witness (value = its minimal
    level, putting the GH distance strictly below twice the value)."""

    kind: str                    # "correspondence" | "eps_isometry"
    payload: object
    value: Fraction


@dataclass(frozen=True)
class EpsIsometryReport:
    passed: bool
    eps: Fraction
    distortion: Fraction
    covering_radius: Fraction

    @property
    def min_eps(self) -> Fraction:
        return max(self.distortion, self.covering_radius)


def covering_radius(f: MapWitness) -> Fraction:
    """How far a target point can be from the image: max_y d(y, f(X))."""
    dy = _metric(f.target).dist
    image = sorted(set(f.assignment))
    return max(min(dy[y][i] for i in image) for y in range(_metric(f.target).n))


def _metric(space) -> FiniteMetricSpace:
    return space.metric if hasattr(space, "metric") else space


def verify_eps_isometry(f: MapWitness, eps: ScalarLike) -> EpsIsometryReport:
    """Exact distortion and covering-radius statistics, checked against eps."""
    f.check()
    eps = as_scalar(eps)
    dist = distortion(f, range(_metric(f.source).n))
    radius = covering_radius(f)
    return EpsIsometryReport(dist <= eps and radius <= eps, eps, dist, radius)


def _assignments(nx: int, ny: int):
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


@dataclass(frozen=True)
class MinEpsIsometryResult:
    eps_star: Fraction
    witness: MapWitness
    optimal: bool
    stats: SearchStats


def min_eps_isometry(space_x: FiniteMetricSpace, space_y: FiniteMetricSpace,
                     budget: int = DEFAULT_BUDGET) -> MinEpsIsometryResult:
    """The least eps at which some map is an eps-isometry, by pruned search."""
    nx, ny = space_x.n, space_y.n
    dx, dy = space_x.dist, space_y.dist
    best: Optional[Fraction] = None
    best_map: Optional[tuple] = None
    assignment = [0] * nx
    nodes = 0
    complete = True

    def search(depth: int, worst: Fraction):
        nonlocal nodes, best, best_map, complete
        if nodes > budget:
            complete = False
            return
        if depth == nx:
            witness = MapWitness(space_x, space_y, tuple(assignment), None)
            value = max(worst, covering_radius(witness))
            if best is None or value < best:
                best = value
                best_map = tuple(assignment)
            return
        for t in range(ny):
            nodes += 1
            stretch = worst
            ok = True
            for j in range(depth):
                gap = abs(dy[t][assignment[j]] - dx[depth][j])
                if gap > stretch:
                    stretch = gap
                if best is not None and stretch >= best:
                    ok = False
                    break
            if not ok:
                continue
            assignment[depth] = t
            search(depth + 1, stretch)

    search(0, ZERO)
    assert best_map is not None
    witness = MapWitness(space_x, space_y, best_map, None)
    return MinEpsIsometryResult(best, witness, complete, SearchStats(nodes, complete))


@dataclass(frozen=True)
class GhDistanceResult:
    lower: Fraction
    upper: Fraction
    exact: bool
    certificate: GhCertificate
    stats: SearchStats

    @property
    def value(self) -> Fraction:
        if not self.exact:
            raise PreconditionError("only an interval is available")
        return self.upper


def gh_distance(space_x: FiniteMetricSpace, space_y: FiniteMetricSpace,
                budget: int = DEFAULT_BUDGET,
                method: str = "exact") -> GhDistanceResult:
    """GH distance, exactly or as a certified interval.

    Exact mode: half the minimal distortion over correspondences.  Every
    minimal correspondence contains one of the form graph(g) union
    graph(h) transposed with g, h single-valued, so branch-and-bound runs
    over those, pruning a branch once its partial distortion cannot beat the
    best complete value; each open slot also contributes its best-case
    distortion against the committed pairs as a lower bound.  Bound mode
    sandwiches the value between almost-isometry levels in both directions.
    If the budget runs out, the best-found upper bound is returned as a
    flagged interval.
    """
    if method == "bound":
        fwd = min_eps_isometry(space_x, space_y, budget)
        bwd = min_eps_isometry(space_y, space_x, budget)
        optimal = fwd.optimal and bwd.optimal
        upper = 2 * min(fwd.eps_star, bwd.eps_star)
        lower = max(fwd.eps_star, bwd.eps_star) / 2 if optimal else ZERO
        pick = fwd if fwd.eps_star <= bwd.eps_star else bwd
        cert = GhCertificate("eps_isometry", pick.witness, pick.eps_star)
        return GhDistanceResult(lower, upper, False, cert,
                                SearchStats(fwd.stats.nodes + bwd.stats.nodes,
                                            optimal))
    if method != "exact":
        raise PreconditionError("method must be 'exact' or 'bound'")
    nx, ny = space_x.n, space_y.n
    dx, dy = space_x.dist, space_y.dist
    total = nx + ny
    pairs: list = [None] * total
    best: Optional[Fraction] = None
    best_pairs: Optional[tuple] = None
    nodes = 0
    complete = True

    def gap_against(depth: int, a: int, b: int) -> Fraction:
        worst = ZERO
        for j in range(depth):
            a2, b2 = pairs[j]
            gap = abs(dx[a][a2] - dy[b][b2])
            if gap > worst:
                worst = gap
        return worst

    def relaxation_bound(depth: int) -> Fraction:
        worst = ZERO
        for slot in range(depth, total):
            if slot < nx:
                options = (
                    gap_against(depth, slot, b) for b in range(ny))
            else:
                options = (
                    gap_against(depth, a, slot - nx) for a in range(nx))
            value = min(options)
            if value > worst:
                worst = value
        return worst

    def search(depth: int, worst: Fraction):
        nonlocal nodes, best, best_pairs, complete
        if nodes > budget:
            complete = False
            return
        if depth == total:
            if best is None or worst < best:
                best = worst
                best_pairs = tuple(pairs)
            return
        if best is not None and relaxation_bound(depth) >= best:
            return
        choices = range(ny) if depth < nx else range(nx)
        for t in choices:
            nodes += 1
            pair = (depth, t) if depth < nx else (t, depth - nx)
            stretch = max(worst, gap_against(depth, *pair))
            if best is not None and stretch >= best:
                continue
            pairs[depth] = pair
            search(depth + 1, stretch)

    search(0, ZERO)
    assert best_pairs is not None
    corr = Correspondence(best_pairs)
    corr.check(space_x, space_y)
    value = best / 2
    cert = GhCertificate("correspondence", corr, value)
    if not complete:
        return GhDistanceResult(ZERO, value, False, cert,
                                SearchStats(nodes, False))
    return GhDistanceResult(value, value, True, cert, SearchStats(nodes, True))


@dataclass(frozen=True)
class GhDominationResult:
    status: str                  # "dominates" | "refuted" | "indeterminate"
    witness: Optional[MapWitness]
    stats: SearchStats


def gh_dominates(space_x: FiniteMetricSpace, space_y: FiniteMetricSpace,
                 budget: int = DEFAULT_BUDGET) -> GhDominationResult:
    """Exact decision: is there a 1-Lipschitz surjection from X onto Y?

    Backtracking prunes partial maps that stretch a pair and partial maps
    that cannot reach every uncovered target with the points left.
    """
    nx, ny = space_x.n, space_y.n
    dx, dy = space_x.dist, space_y.dist
    assignment = [0] * nx
    hits = [0] * ny
    nodes = 0

    def search(depth: int, uncovered: int):
        nonlocal nodes
        if nx - depth < uncovered:
            return None
        if depth == nx:
            return tuple(assignment)
        for t in range(ny):
            nodes += 1
            if nodes > budget:
                raise BudgetExceededError
            if any(dy[t][assignment[j]] > dx[depth][j] for j in range(depth)):
                continue
            assignment[depth] = t
            hits[t] += 1
            found = search(depth + 1, uncovered - (1 if hits[t] == 1 else 0))
            if found is not None:
                return found
            hits[t] -= 1
        return None

    try:
        found = search(0, ny)
    except BudgetExceededError:
        return GhDominationResult("indeterminate", None, SearchStats(nodes, False))
    if found is None:
        return GhDominationResult("refuted", None, SearchStats(nodes, True))
    witness = MapWitness(space_x, space_y, found, None)
    assert additive_defect(witness) == 0 and set(found) == set(range(ny))
    return GhDominationResult("dominates", witness, SearchStats(nodes, True))


@dataclass(frozen=True)
class GhEpsDominationCheck:
    passed: bool
    eps: Fraction
    defect: Fraction
    covering_radius: Fraction
    violation: Optional[str]


def check_gh_eps_domination(witness: MapWitness, eps: ScalarLike) -> GhEpsDominationCheck:
    """Verify the two-part approximate relation: additive defect and covering."""
    witness.check()
    eps = as_scalar(eps)
    if eps < 0:
        raise PreconditionError("eps must be nonnegative")
    defect = additive_defect(witness, range(_metric(witness.source).n))
    radius = covering_radius(witness)
    violation = None
    if defect > eps:
        violation = "additive defect exceeds eps"
    elif radius > eps:
        violation = "covering radius exceeds eps"
    return GhEpsDominationCheck(violation is None, eps, defect, radius, violation)


def gh_eps_dominates(space_x: FiniteMetricSpace, space_y: FiniteMetricSpace,
                     eps: ScalarLike, budget: int = DEFAULT_BUDGET,
                     witness: Optional[MapWitness] = None) -> GhDominationResult:
    """Decide the approximate relation: some map with additive defect <= eps
    whose image is eps-dense in the target.  A supplied witness is verified
    instead of searching."""
    eps = as_scalar(eps)
    if eps < 0:
        raise PreconditionError("eps must be nonnegative")
    if witness is not None:
        check = check_gh_eps_domination(witness, eps)
        status = "dominates" if check.passed else "refuted"
        return GhDominationResult(status, witness if check.passed else None,
                                  SearchStats(0, True))
    nx, ny = space_x.n, space_y.n
    dx, dy = space_x.dist, space_y.dist
    assignment = [0] * nx
    nodes = 0

    def search(depth: int):
        nonlocal nodes
        if depth == nx:
            full = MapWitness(space_x, space_y, tuple(assignment), None)
            if covering_radius(full) <= eps:
                return full
            return None
        for t in range(ny):
            nodes += 1
            if nodes > budget:
                raise BudgetExceededError
            if any(dy[t][assignment[j]] > dx[depth][j] + eps for j in range(depth)):
                continue
            assignment[depth] = t
            found = search(depth + 1)
            if found is not None:
                return found
        return None

    try:
        found = search(0)
    except BudgetExceededError:
        return GhDominationResult("indeterminate", None, SearchStats(nodes, False))
    if found is None:
        return GhDominationResult("refuted", None, SearchStats(nodes, True))
    check = check_gh_eps_domination(found, eps)
    assert check.passed
    return GhDominationResult("dominates", found, SearchStats(nodes, True))


# ---------------------------------------------------------------------------
# Nets
# ---------------------------------------------------------------------------

def greedy_net(space: FiniteMetricSpace, eps: Fraction, strict_cover: bool) -> tuple:
    """A separated covering net chosen greedily in index order.

    With ``strict_cover`` a point joins whenever it is at distance >= eps
    from the net, so afterwards every point is strictly within eps of it;
    otherwise the threshold is > eps, giving pairwise separation above eps
    and covering radius at most eps.
    """
    net: list = []
    d = space.dist
    for p in space.points():
        dist_to_net = min((d[p][q] for q in net), default=None)
        if dist_to_net is None:
            net.append(p)
        elif strict_cover and dist_to_net >= eps:
            net.append(p)
        elif not strict_cover and dist_to_net > eps:
            net.append(p)
    return tuple(net)


# ---------------------------------------------------------------------------
# Refinement step and the iterated sequence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GhRefineMember:
    witness: MapWitness          # X -> Y, approximate domination at eps
    net: tuple                   # indices of Y forming a strict eps'-cover


@dataclass(frozen=True)
class GhRefineResult:
    space: FiniteMetricSpace
    maps: tuple                  # 1-Lipschitz MapWitness per member
    projection: MapWitness
    projection_report: EpsIsometryReport   # a 3 eps-isometry
    gh_bound: Fraction           # strict bound 6 eps on the GH step
    covering_radii: tuple        # per member, each strictly below eps'


def gh_refine(space_x: FiniteMetricSpace, members: Sequence[GhRefineMember],
              eps: ScalarLike, eps_prime: ScalarLike,
              point_cap: int = DEFAULT_POINT_CAP) -> GhRefineResult:
    """Sharpen an approximate dominator from level eps to level eps'.

    Each member needs a witness with additive defect <= eps and covering
    radius <= eps, and a net whose strict eps'-balls cover the member; eps'
    must be below eps.  Every dominator point grows a fiber holding one net
    point within eps of each member image; distances take the max of fiber
    coordinates and the base.  The fiber projection back is verified a
    3 eps-isometry (so the GH step is strictly below 6 eps) and each
    coordinate map is exactly 1-Lipschitz with covering radius strictly
    below eps'.
    """
    eps = as_scalar(eps)
    eps_prime = as_scalar(eps_prime)
    if eps <= 0 or eps_prime <= 0:
        raise PreconditionError("eps and eps' must be positive")
    if eps_prime >= eps:
        raise PreconditionError("eps' must be strictly below eps")
    if not members:
        raise PreconditionError("empty member family")
    nets = []
    for m, member in enumerate(members):
        f, net = member.witness, member.net
        if f.source is not space_x and f.source != space_x:
            raise PreconditionError(f"member {m}: map does not start at the dominator")
        f.check()
        space_y = _metric(f.target)
        check = check_gh_eps_domination(f, eps)
        if not check.passed:
            raise PreconditionError(f"member {m}: witness fails at eps ({check.violation})")
        net = tuple(sorted(set(net)))
        if not net or any(not (0 <= y < space_y.n) for y in net):
            raise PreconditionError(f"member {m}: net is empty or out of range")
        dy = space_y.dist
        if any(min(dy[y][q] for q in net) >= eps_prime for y in range(space_y.n)):
            raise PreconditionError(f"member {m}: net is not a strict eps'-cover")
        nets.append(net)

    choice_sets = []
    for x in range(space_x.n):
        per_member = []
        for m, member in enumerate(members):
            dy = _metric(member.witness.target).dist
            fx = member.witness.assignment[x]
            close = tuple(y for y in nets[m] if dy[fx][y] <= eps)
            assert close, "a strict cover always meets the eps-ball"
            per_member.append(close)
        choice_sets.append(per_member)

    points = []
    for x in range(space_x.n):
        for choice in iter_product(*choice_sets[x]):
            points.append((x, choice))
        if len(points) > point_cap:
            raise BudgetExceededError(f"refined space would exceed {point_cap} points")
    labels = tuple(
        f"{space_x.labels[x]}|" + ".".join(str(y) for y in choice)
        for x, choice in points)
    metrics = [_metric(member.witness.target) for member in members]
    dist = []
    for x, choice in points:
        row = []
        for x2, choice2 in points:
            best = space_x.d(x, x2)
            for m in range(len(members)):
                v = metrics[m].dist[choice[m]][choice2[m]]
                if v > best:
                    best = v
            row.append(best)
        dist.append(tuple(row))
    refined = FiniteMetricSpace(labels, tuple(dist))
    refined.require_metric()

    projection = MapWitness(refined, space_x, tuple(x for x, _ in points), None)
    report = verify_eps_isometry(projection, 3 * eps)
    assert report.passed, "fiber projection is not a 3 eps-isometry"

    maps = []
    radii = []
    for m in range(len(members)):
        assignment = tuple(choice[m] for _, choice in points)
        witness = MapWitness(refined, members[m].witness.target, assignment, None)
        assert additive_defect(witness, range(refined.n)) == 0
        radius = covering_radius(witness)
        assert radius < eps_prime, "coordinate map is not strictly eps'-dense"
        maps.append(witness)
        radii.append(radius)
    return GhRefineResult(refined, tuple(maps), projection, report,
                          6 * eps, tuple(radii))


@dataclass(frozen=True)
class GhStageCertificate:
    member_index: int
    claimed_eps: Fraction
    check: GhEpsDominationCheck


@dataclass(frozen=True)
class GhStage:
    index: int
    space: FiniteMetricSpace
    eps: Fraction
    maps: tuple
    certificates: tuple
    passthrough: bool


@dataclass(frozen=True)
class GhStep:
    index: int
    eps: Fraction
    gh_bound: Fraction           # strict 6 eps
    projection_report: Optional[EpsIsometryReport]


@dataclass(frozen=True)
class GhTrace:
    stages: tuple
    steps: tuple
    truncated: bool
    mode: str


def gh_dominator_sequence(family: Sequence[FiniteMetricSpace],
                          eps_seq: Sequence[ScalarLike], stages: int,
                          mode: str = "direct",
                          point_cap: int = DEFAULT_POINT_CAP,
                          budget: int = DEFAULT_BUDGET) -> GhTrace:
    """Iterate the refine step from a one-point start.

    Stage 0 is a single point, which approximately dominates every member at
    the largest member diameter.  Each step refines to the next scale with a
    certified GH bound strictly below 6 times the current scale.  A step
    whose target scale is not below the current one changes nothing and is
    recorded as a pass-through.  In transfer mode members are greedily
    matched to a representative strictly within the target scale in exact GH
    distance; matched members receive composed witnesses certified at 5
    times the target scale.
    """
    eps_seq = [as_scalar(e) for e in eps_seq]
    if stages < 1:
        raise PreconditionError("need at least one stage")
    if len(eps_seq) < stages:
        raise PreconditionError("scale sequence shorter than the requested stage count")
    if any(e <= 0 for e in eps_seq):
        raise PreconditionError("scales must be positive")
    if mode not in ("direct", "transfer"):
        raise PreconditionError("mode must be 'direct' or 'transfer'")
    if not family:
        raise PreconditionError("empty family")
    eps0 = max(diameter(member) for member in family)
    start = FiniteMetricSpace(("o",), ((ZERO,),))
    maps = [MapWitness(start, member, (0,) * 1, None) for member in family]
    certs = []
    for i, witness in enumerate(maps):
        check = check_gh_eps_domination(witness, eps0)
        assert check.passed
        certs.append(GhStageCertificate(i, eps0, check))
    stage_list = [GhStage(0, start, eps0, tuple(maps), tuple(certs), False)]
    step_list = []
    truncated = False
    current = start
    current_maps = list(maps)
    current_eps = eps0

    for k in range(stages):
        target = eps_seq[k]
        if target >= current_eps:
            stage_list.append(GhStage(k + 1, current, current_eps,
                                      tuple(current_maps),
                                      stage_list[-1].certificates, True))
            step_list.append(GhStep(k, current_eps, 6 * current_eps, None))
            continue
        reps = list(range(len(family)))
        attached = {}
        if mode == "transfer":
            reps = []
            for i, member in enumerate(family):
                matched = None
                for r in reps:
                    d = gh_distance(member, family[r], budget)
                    if d.exact and d.value < target:
                        matched = r
                        break
                if matched is None:
                    reps.append(i)
                else:
                    attached[i] = matched
        try:
            refined = gh_refine(
                current,
                [GhRefineMember(current_maps[r],
                                greedy_net(family[r], target, strict_cover=True))
                 for r in reps],
                current_eps, target, point_cap)
        except BudgetExceededError:
            truncated = True
            break
        new_maps: list = [None] * len(family)
        certs = []
        for j, r in enumerate(reps):
            new_maps[r] = refined.maps[j]
            check = check_gh_eps_domination(new_maps[r], target)
            assert check.passed
            certs.append((r, GhStageCertificate(r, target, check)))
        for i, r in attached.items():
            iso = min_eps_isometry(family[r], family[i], budget)
            assert iso.eps_star <= 2 * target, "matched member lost its isometry"
            composed = MapWitness(
                refined.space, family[i],
                tuple(iso.witness.assignment[y] for y in new_maps[r].assignment),
                None)
            claimed = 5 * target
            check = check_gh_eps_domination(composed, claimed)
            assert check.passed, check.violation
            new_maps[i] = composed
            certs.append((i, GhStageCertificate(i, claimed, check)))
        certs.sort(key=lambda t: t[0])
        step_list.append(GhStep(k, current_eps, 6 * current_eps,
                                refined.projection_report))
        current = refined.space
        current_maps = new_maps
        current_eps = target
        stage_list.append(GhStage(k + 1, current, target, tuple(current_maps),
                                  tuple(c for _, c in certs), False))
    return GhTrace(tuple(stage_list), tuple(step_list), truncated, mode)


# ---------------------------------------------------------------------------
# Net profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MemberNet:
    member_index: int
    net: tuple
    size: int
    covering_radius: Fraction
    separation_ok: bool
    diameter: Fraction


@dataclass(frozen=True)
class DerivedNet:
    member_index: int
    net: tuple
    size: int
    covering_radius: Fraction
    size_ok: bool                # at most the dominator net size
    diameter_ok: bool            # member diameter <= dominator diameter + 3 eps
    radius_within_2eps: bool     # the optimistic bound; informational
    radius_within_3eps: bool     # the bound the hypotheses actually force


@dataclass(frozen=True)
class NetProfileResult:
    eps: Fraction
    members: tuple               # MemberNet per member
    uniform_size: int
    dominator_net: Optional[tuple]
    derived: tuple               # DerivedNet per member, when derived

    @property
    def verified(self) -> bool:
        direct_ok = all(
            m.separation_ok and m.covering_radius <= self.eps for m in self.members)
        derived_ok = all(
            d.size_ok and d.diameter_ok and d.radius_within_3eps
            for d in self.derived)
        return direct_ok and derived_ok


def gh_net_profile(family: Sequence[FiniteMetricSpace], eps: ScalarLike,
                   dominator: Optional[FiniteMetricSpace] = None,
                   witnesses: Optional[Sequence[MapWitness]] = None) -> NetProfileResult:
    """Separated covering nets per member, plus nets pushed from a dominator.

    Direct nets are greedy, pairwise more than eps apart and eps-covering.
    When a dominator and approximate-domination witnesses at eps are given,
    its net is pushed through each witness; the image nets are no larger,
    member diameters stay within diameter + 3 eps of the dominator, and the
    image covering radius stays within 3 eps (the stricter 2 eps figure is
    reported for information; the additive defect can push it past 2 eps).
    """
    eps = as_scalar(eps)
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    if not family:
        raise PreconditionError("empty family")
    members = []
    for i, member in enumerate(family):
        net = greedy_net(member, eps, strict_cover=False)
        radius = max(
            min(member.dist[y][q] for q in net) for y in range(member.n))
        separated = all(
            member.dist[a][b] > eps
            for idx, a in enumerate(net) for b in net[idx + 1:])
        members.append(MemberNet(i, net, len(net), radius, separated,
                                 diameter(member)))
    derived = []
    dom_net = None
    if dominator is not None:
        if witnesses is None or len(witnesses) != len(family):
            raise PreconditionError("derived mode needs one witness per member")
        dom_net = greedy_net(dominator, eps, strict_cover=False)
        dom_diam = diameter(dominator)
        for i, witness in enumerate(witnesses):
            check = check_gh_eps_domination(witness, eps)
            if not check.passed:
                raise PreconditionError(f"witness {i} is invalid: {check.violation}")
            member = family[i]
            image_net = tuple(sorted({witness.assignment[x] for x in dom_net}))
            radius = max(
                min(member.dist[y][q] for q in image_net) for y in range(member.n))
            derived.append(DerivedNet(
                i, image_net, len(image_net), radius,
                size_ok=len(image_net) <= len(dom_net),
                diameter_ok=diameter(member) <= dom_diam + 3 * eps,
                radius_within_2eps=radius <= 2 * eps,
                radius_within_3eps=radius <= 3 * eps))
    result = NetProfileResult(eps, tuple(members), max(m.size for m in members),
                              dom_net, tuple(derived))
    assert result.verified
    return result
