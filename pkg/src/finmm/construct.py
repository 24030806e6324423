"""Dominator constructions on finite metric measure spaces.

The pipeline turns a finite family of spaces into a single space that
approximately dominates every member, with every quantitative conclusion
enforced as a checked postcondition:

* ``build_scheme``     - nested partitions into small-diameter blocks;
* ``product_dominator``- the anchored block product, exactly 1-Lipschitz onto
                         each member with exact per-block mass transport;
* ``transfer``         - re-targets a map through an almost-isomorphism into a
                         nearby space, block family and bijection included;
* ``refine``           - sharpens the block level of a dominator, with a
                         3 eps-isometric projection back (box step <= 9 eps);
* ``pad_extend``       - adds a corrective product layer that restores exact
                         per-block transport (box step <= 3 eps);
* ``dominator_sequence`` - iterates refine + pad so consecutive stages are
                         within 48 eps_n of each other in box distance;
* ``derive_covering`` / ``precompact_profile`` - uniform covering statistics
                         read off a dominator or a family.

Anchors are always the least-index point of a block (except where a
construction pins the anchor to a distinguished image point), so every output
is deterministic.
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
    FiniteMMSpace,
    MapWitness,
    PartitionFamily,
    PreconditionError,
    ScalarLike,
    additive_defect,
    as_scalar,
    diameter,
    mass_defect,
    mass_of,
    open_ball_enlargement,
    pushforward,
    validate,
)
from .boxorder import (
    DominationCertificate,
    EpsDominationCheck,
    MmIsoCertificate,
    check_eps_domination,
    min_mm_iso,
    verify_mm_iso,
)
from .measures import prohorov_distance

DEFAULT_POINT_CAP = 4096


class NeighborhoodCheckError(PreconditionError):
    """Transfer target failed a closeness check: it lies outside the
    neighborhood in which the block family can be carried over."""


def greedy_diameter_blocks(metric: FiniteMetricSpace, points: Sequence[int],
                           eps: Fraction, strict: bool) -> list:
    """Greedily pack points (in index order) into blocks of small diameter.

    Each point joins the first existing block it fits into, where fitting
    means diameter < eps (strict) or <= eps.  Every listed point is covered.
    """
    d = metric.dist
    blocks: list = []
    for p in points:
        placed = False
        for b in blocks:
            row = d[p]
            ok = all(row[q] < eps for q in b) if strict else all(row[q] <= eps for q in b)
            if ok:
                b.append(p)
                placed = True
                break
        if not placed:
            blocks.append([p])
    return [tuple(b) for b in blocks]


# ---------------------------------------------------------------------------
# Partition schemes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartitionScheme:
    """Nested block partitions of one space, one level per scale."""

    space: FiniteMMSpace
    levels: tuple            # PartitionFamily per level
    eps_levels: tuple        # Fraction per level


def scheme_violations(scheme: PartitionScheme) -> list:
    """All violated scheme invariants, as strings naming level and block."""
    out = []
    space = scheme.space
    for n, (family, eps) in enumerate(zip(scheme.levels, scheme.eps_levels), start=1):
        try:
            family.check()
        except PreconditionError as exc:
            out.append(f"level {n}: {exc}")
            continue
        for k, block in enumerate(family.blocks):
            if diameter(space.metric, block) >= eps:
                out.append(f"level {n} block {k}: diameter not below eps")
            if mass_of(space, block) <= 0:
                out.append(f"level {n} block {k}: no mass")
        if family.union_mass() <= 1 / (ONE + eps):
            out.append(f"level {n}: covered mass not above 1/(1+eps)")
    for n in range(len(scheme.levels) - 1):
        coarse, fine = scheme.levels[n], scheme.levels[n + 1]
        eps_next = scheme.eps_levels[n + 1]
        for k, block in enumerate(fine.blocks):
            bset = set(block)
            nested_or_apart = all(
                bset <= set(a) or not (bset & set(a)) for a in coarse.blocks)
            if not nested_or_apart:
                out.append(f"level {n + 2} block {k}: straddles a coarser block")
        escape = ONE - fine.union_mass()
        bound = eps_next / (ONE + eps_next) * coarse.min_block_mass()
        if escape >= bound:
            out.append(f"level {n + 2}: escaping mass not below the required bound")
    return out


def build_scheme(space: FiniteMMSpace, eps_seq: Sequence[ScalarLike],
                 depth: int) -> PartitionScheme:
    """Build a nested scheme by greedy packing and per-block splitting.

    Needs a fully supported space and a positive non-increasing scale
    sequence starting below 1.  Every level covers all points, so the
    escaping mass is 0 and the cover bound holds with room to spare.
    """
    eps_seq = [as_scalar(e) for e in eps_seq]
    if depth < 1:
        raise PreconditionError("depth must be at least 1")
    if len(eps_seq) < depth:
        raise PreconditionError("scale sequence shorter than the requested depth")
    if any(e <= 0 for e in eps_seq):
        raise PreconditionError("scales must be positive")
    if any(b > a for a, b in zip(eps_seq, eps_seq[1:])):
        raise PreconditionError("scale sequence must be non-increasing")
    if eps_seq[0] >= 1:
        raise PreconditionError("first scale must be below 1")
    if any(m <= 0 for m in space.mass):
        raise PreconditionError("space must have full support")
    levels = []
    blocks = greedy_diameter_blocks(space.metric, list(space.points()),
                                    eps_seq[0], strict=True)
    levels.append(PartitionFamily(space, tuple(blocks)))
    for level in range(1, depth):
        finer = []
        for block in levels[-1].blocks:
            finer.extend(greedy_diameter_blocks(space.metric, list(block),
                                                eps_seq[level], strict=True))
        levels.append(PartitionFamily(space, tuple(finer)))
    scheme = PartitionScheme(space, tuple(levels), tuple(eps_seq[:depth]))
    bad = scheme_violations(scheme)
    assert not bad, bad
    return scheme


def refine_partition_within(space: FiniteMMSpace, parent: PartitionFamily,
                            eps: Fraction) -> PartitionFamily:
    """Split each parent block at the new scale and cover leftover support.

    The result nests inside the parent family; support points outside the
    parent union get fresh blocks of their own, so nothing escapes.
    """
    blocks = []
    for block in parent.blocks:
        blocks.extend(greedy_diameter_blocks(space.metric, list(block), eps, strict=True))
    covered = set(parent.union())
    leftover = [p for p in space.support() if p not in covered]
    blocks.extend(greedy_diameter_blocks(space.metric, leftover, eps, strict=True))
    return PartitionFamily(space, tuple(blocks))


# ---------------------------------------------------------------------------
# Block product
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProductDominator:
    space: FiniteMMSpace
    maps: tuple              # MapWitness per factor
    block_tuples: tuple      # block-index tuple per product point


def product_dominator(partitions: Sequence[PartitionFamily],
                      point_cap: int = DEFAULT_POINT_CAP) -> ProductDominator:
    """The anchored product of block families, 1-Lipschitz onto each factor.

    Point set: tuples picking one block per factor.  Distance: max over
    factors of the anchor distance.  Mass: product of normalized block
    masses.  The factor maps send a tuple to its anchor and transport mass
    onto each block exactly proportionally to its share of the covered mass;
    both facts are verified exactly before returning.
    """
    if not partitions:
        raise PreconditionError("empty factor family")
    factors = []
    for m, family in enumerate(partitions):
        family.check()
        for k in range(len(family.blocks)):
            if family.block_mass(k) <= 0:
                raise PreconditionError(f"factor {m} block {k} has no mass")
        factors.append(family)
    size = 1
    for family in factors:
        size *= len(family.blocks)
        if size > point_cap:
            raise BudgetExceededError(f"product would exceed {point_cap} points")
    anchors = [tuple(min(b) for b in family.blocks) for family in factors]
    normalizers = [family.union_mass() for family in factors]
    tuples = list(iter_product(*[range(len(f.blocks)) for f in factors]))
    labels = tuple("x" + ".".join(str(b) for b in t) for t in tuples)
    dist = []
    for t in tuples:
        row = []
        for u in tuples:
            row.append(max(
                factors[m].space.d(anchors[m][t[m]], anchors[m][u[m]])
                for m in range(len(factors))))
        dist.append(tuple(row))
    mass = []
    for t in tuples:
        v = ONE
        for m in range(len(factors)):
            v *= factors[m].block_mass(t[m]) / normalizers[m]
        mass.append(v)
    space = FiniteMMSpace(FiniteMetricSpace(labels, tuple(dist)), tuple(mass))
    report = validate(space)
    assert report.ok, report.violations
    maps = []
    for m, family in enumerate(factors):
        assignment = tuple(anchors[m][t[m]] for t in tuples)
        witness = MapWitness(space, family.space, assignment, None)
        assert additive_defect(witness) == 0, "factor map is not 1-Lipschitz"
        pf = pushforward(witness)
        for k, block in enumerate(family.blocks):
            got = sum((pf[p] for p in block), ZERO)
            want = family.block_mass(k) / normalizers[m]
            assert got == want, f"factor {m} block {k}: transported mass is off"
        maps.append(witness)
    return ProductDominator(space, tuple(maps), tuple(tuples))


# ---------------------------------------------------------------------------
# Transfer through an almost-isomorphism
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransferResult:
    map_to_target: MapWitness     # X -> Z
    blocks_on_target: PartitionFamily
    block_bijection: tuple        # (target block index, source block index) pairs
    carrier: MapWitness           # Y -> Z, block-anchored
    distortion_bound: Fraction    # the verified strict bound 3 eps


def _carried_blocks(family: PartitionFamily, eps: Fraction, psi: MapWitness):
    """Pull the block family back through psi, restricted to its domain."""
    target_space: FiniteMMSpace = psi.source
    dom = set(psi.domain_indices())
    out = []
    for k, block in enumerate(family.blocks):
        bset = set(block)
        carried = tuple(sorted(z for z in dom if psi.assignment[z] in bset))
        if not carried:
            raise NeighborhoodCheckError(
                f"block {k} has empty preimage inside the witness domain")
        out.append(carried)
    carried_family = PartitionFamily(target_space, tuple(out))
    failures = []
    for k, carried in enumerate(carried_family.blocks):
        if diameter(target_space.metric, carried) >= eps:
            failures.append(f"carried block {k} has diameter not below eps")
        if mass_of(target_space, carried) <= 0:
            failures.append(f"carried block {k} has no mass")
        ratio = mass_of(family.space, family.blocks[k]) / mass_of(target_space, carried)
        if not (ONE - eps < ratio < ONE + eps):
            failures.append(f"carried block {k} violates the strict mass-ratio band")
    return carried_family, failures


def _carrier_map(family: PartitionFamily, carried: PartitionFamily,
                 psi: MapWitness) -> MapWitness:
    """The block-anchored map from the family's space into psi's source."""
    target_space: FiniteMMSpace = psi.source
    anchors = [min(b) for b in carried.blocks]
    union_z = set(carried.union())
    if family.union_mass() == 1:
        fallback = 0
    else:
        outside = [z for z in range(target_space.n) if z not in union_z]
        fallback = outside[0] if outside else 0
    assignment = []
    for y in range(family.space.n):
        k = family.block_of(y)
        assignment.append(anchors[k] if k is not None else fallback)
    return MapWitness(family.space, target_space, tuple(assignment), None)


def _check_neighborhood(family: PartitionFamily, eps: Fraction, psi: MapWitness):
    """Carried blocks plus anchored carrier, or NeighborhoodCheckError.

    Besides the block-level checks this bounds the carrier's distortion on
    block-union pairs strictly below 3 eps, which is every base-map-free
    condition a transfer needs.
    """
    carried, failures = _carried_blocks(family, eps, psi)
    carrier = _carrier_map(family, carried, psi)
    space_y: FiniteMMSpace = family.space
    space_z: FiniteMMSpace = psi.source
    dy, dz = space_y.metric.dist, space_z.metric.dist
    union_y = family.union()
    worst = ZERO
    for a, y in enumerate(union_y):
        for y2 in union_y[a + 1:]:
            gap = abs(dy[y][y2] - dz[carrier.assignment[y]][carrier.assignment[y2]])
            if gap > worst:
                worst = gap
    if worst >= 3 * eps:
        failures.append("carrier distorts some block-union pair by 3 eps or more")
    if failures:
        raise NeighborhoodCheckError("; ".join(failures))
    return carried, carrier, worst


def transfer(family: PartitionFamily, eps: ScalarLike, psi: MapWitness,
             base_map: MapWitness) -> TransferResult:
    """Carry a map into a space that is almost isomorphic to its target.

    ``family`` partitions Y into blocks of diameter < eps with positive mass;
    ``psi`` is an almost-isomorphism witness from the new space Z to Y (its
    domain plays the exceptional-set role); ``base_map`` lands inside the
    union of the blocks.  The result composes the anchored carrier Y -> Z
    with the base map and checks, exactly:

    1. carried blocks have diameter < eps, positive mass, and their
       mass-ratio against the original blocks lies strictly within 1 +- eps;
    2. the carried map distorts base-map distances by strictly less than
       3 eps on every pair;
    3. the carried map lands inside the carried union;
    4. per-block transported mass equals that of the base map, block by
       block along the natural bijection.

    Any failed check raises ``NeighborhoodCheckError``: the target is not
    close enough to the original space at this scale.
    """
    eps = as_scalar(eps)
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    family.check()
    space_y = family.space
    if psi.target is not space_y and psi.target != space_y:
        raise PreconditionError("witness must land in the partitioned space")
    if base_map.target is not space_y and base_map.target != space_y:
        raise PreconditionError("base map must land in the partitioned space")
    psi.check()
    base_map.check()
    union_y = set(family.union())
    for k, block in enumerate(family.blocks):
        if diameter(space_y.metric, block) >= eps:
            raise PreconditionError(f"block {k} has diameter not below eps")
        if mass_of(space_y, block) <= 0:
            raise PreconditionError(f"block {k} has no mass")
    if any(base_map.assignment[x] not in union_y for x in range(base_map.source.n)):
        raise PreconditionError("base map leaves the block union")

    carried, carrier, worst = _check_neighborhood(family, eps, psi)
    space_z: FiniteMMSpace = psi.source
    failures = []
    carried_union = set(carried.union())
    composed = MapWitness(base_map.source, space_z,
                          tuple(carrier.assignment[base_map.assignment[x]]
                                for x in range(base_map.source.n)), None)
    if any(composed.assignment[x] not in carried_union
           for x in range(composed.source.n)):
        failures.append("carried map leaves the carried union")
    pf_base = pushforward(base_map)
    pf_comp = pushforward(composed)
    bijection = []
    for k in range(len(family.blocks)):
        got = sum((pf_comp[z] for z in carried.blocks[k]), ZERO)
        want = sum((pf_base[y] for y in family.blocks[k]), ZERO)
        if got != want:
            failures.append(f"block {k}: transported mass changed under transfer")
        bijection.append((k, k))
    if failures:
        raise NeighborhoodCheckError("; ".join(failures))
    return TransferResult(composed, carried, tuple(bijection), carrier, worst)


# ---------------------------------------------------------------------------
# Refinement step
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RefineMember:
    witness: MapWitness          # X -> Y
    coarse: PartitionFamily      # blocks of Y at the current scale
    fine: PartitionFamily        # blocks of Y at the next scale


@dataclass(frozen=True)
class RefineResult:
    space: FiniteMMSpace         # the refined dominator
    maps: tuple                  # 1-Lipschitz MapWitness per member
    projection: MapWitness       # back onto the input dominator
    projection_certificate: MmIsoCertificate
    box_bound: Fraction          # 9 eps
    ratio_reports: tuple         # per member: ((block index, ratio), ...)


def refine(space_x: FiniteMMSpace, members: Sequence[RefineMember],
           eps: ScalarLike, eps_prime: ScalarLike,
           point_cap: int = DEFAULT_POINT_CAP) -> RefineResult:
    """Sharpen a dominator to the next block scale.

    Hypotheses, checked exactly and reported by number:

    1. each member map stretches distances by at most an additive eps;
    2. each member map lands inside its coarse block union;
    3. coarse blocks have diameter <= eps and receive exactly their
       normalized share of transported mass;
    4. the mass escaping the fine union is strictly below
       eps'/(1+eps') times the least coarse block mass;
    5. fine blocks have positive mass;
    6. every fine block lies inside a coarse block or misses them all.

    The output space fibers over the input: each input point carries the
    product of the fine blocks sitting inside its coarse blocks.  The member
    maps become exactly 1-Lipschitz; the fiber projection distorts distances
    by at most 3 eps with exact mass transport, so it certifies a box
    distance step of at most 9 eps.  The normalized transported fine-block
    mass ratio lies in [1, 1 + eps'), which is what the next pipeline stage
    consumes.
    """
    eps = as_scalar(eps)
    eps_prime = as_scalar(eps_prime)
    if eps <= 0 or eps_prime <= 0:
        raise PreconditionError("eps and eps' must be positive")
    if not members:
        raise PreconditionError("empty member family")
    fine_in_coarse = []
    for m, member in enumerate(members):
        f, coarse, fine = member.witness, member.coarse, member.fine
        space_y = coarse.space
        if fine.space is not space_y and fine.space != space_y:
            raise PreconditionError(f"member {m}: block families on different spaces")
        if f.source is not space_x and f.source != space_x:
            raise PreconditionError(f"member {m}: map does not start at the dominator")
        f.check()
        coarse.check()
        fine.check()
        if f.domain is not None and len(f.domain) != space_x.n:
            raise PreconditionError(f"member {m}: map must not have an exceptional set")
        if additive_defect(f) > eps:
            raise PreconditionError(f"member {m}: hypothesis (1) additive defect above eps")
        union = set(coarse.union())
        if any(f.assignment[x] not in union for x in range(space_x.n)):
            raise PreconditionError(f"member {m}: hypothesis (2) image leaves the block union")
        pf = pushforward(f)
        norm = coarse.union_mass()
        for k, block in enumerate(coarse.blocks):
            if diameter(space_y.metric, block) > eps:
                raise PreconditionError(
                    f"member {m}: hypothesis (3) block {k} diameter above eps")
            got = sum((pf[y] for y in block), ZERO)
            if got != coarse.block_mass(k) / norm:
                raise PreconditionError(
                    f"member {m}: hypothesis (3) block {k} mass transport not exact")
        escape = ONE - fine.union_mass()
        if escape >= eps_prime / (ONE + eps_prime) * coarse.min_block_mass():
            raise PreconditionError(f"member {m}: hypothesis (4) escaping mass too large")
        for k in range(len(fine.blocks)):
            if fine.block_mass(k) <= 0:
                raise PreconditionError(
                    f"member {m}: hypothesis (5) fine block {k} has no mass")
        nesting = []
        for k, block in enumerate(fine.blocks):
            bset = set(block)
            inside = None
            for a, coarse_block in enumerate(coarse.blocks):
                aset = set(coarse_block)
                if bset <= aset:
                    inside = a
                    break
                if bset & aset:
                    raise PreconditionError(
                        f"member {m}: hypothesis (6) fine block {k} straddles a coarse block")
            nesting.append(inside)
        per_coarse = []
        for a in range(len(coarse.blocks)):
            inside = tuple(k for k, host in enumerate(nesting) if host == a)
            per_coarse.append(inside)
        fine_in_coarse.append(per_coarse)

    # Fibered product construction.
    anchors = [tuple(min(b) for b in member.fine.blocks) for member in members]
    coarse_of_point = []
    for m, member in enumerate(members):
        lookup = {}
        for a, block in enumerate(member.coarse.blocks):
            for y in block:
                lookup[y] = a
        coarse_of_point.append(lookup)

    points = []       # (x, fine-block index per member)
    for x in range(space_x.n):
        choice_sets = []
        for m, member in enumerate(members):
            a = coarse_of_point[m][members[m].witness.assignment[x]]
            inside = fine_in_coarse[m][a]
            assert inside, "hypothesis (4) must have failed: no fine block in a coarse one"
            choice_sets.append(inside)
        fiber = list(iter_product(*choice_sets))
        points.extend((x, choice) for choice in fiber)
        if len(points) > point_cap:
            raise BudgetExceededError(f"refined space would exceed {point_cap} points")

    labels = tuple(
        f"{space_x.labels[x]}|" + ".".join(str(k) for k in choice)
        for x, choice in points)
    n_members = len(members)
    dist = []
    for x, choice in points:
        row = []
        for x2, choice2 in points:
            best = space_x.d(x, x2)
            for m in range(n_members):
                v = members[m].coarse.space.d(anchors[m][choice[m]],
                                              anchors[m][choice2[m]])
                if v > best:
                    best = v
            row.append(best)
        dist.append(tuple(row))
    fiber_norm = {}
    for x in range(space_x.n):
        v = ONE
        for m, member in enumerate(members):
            a = coarse_of_point[m][member.witness.assignment[x]]
            covered = sum((member.fine.block_mass(k)
                           for k in fine_in_coarse[m][a]), ZERO)
            v *= covered
        fiber_norm[x] = v
    mass = []
    for x, choice in points:
        v = space_x.mass[x]
        for m, member in enumerate(members):
            v *= members[m].fine.block_mass(choice[m])
        mass.append(v / fiber_norm[x] if fiber_norm[x] != 0 else ZERO)
    refined = FiniteMMSpace(FiniteMetricSpace(labels, tuple(dist)), tuple(mass))
    report = validate(refined)
    assert report.ok, report.violations

    projection = MapWitness(refined, space_x,
                            tuple(x for x, _ in points), None)
    assert pushforward(projection) == tuple(space_x.mass)
    for i, (x, _) in enumerate(points):
        for j, (x2, _) in enumerate(points):
            gap = dist[i][j] - space_x.d(x, x2)
            assert ZERO <= gap <= 3 * eps, "projection distortion left [0, 3 eps]"
    proj_check = verify_mm_iso(projection, 3 * eps)
    assert proj_check.passed, proj_check.violation

    maps = []
    ratio_reports = []
    for m, member in enumerate(members):
        assignment = tuple(anchors[m][choice[m]] for _, choice in points)
        witness = MapWitness(refined, member.coarse.space, assignment, None)
        assert additive_defect(witness) == 0, "refined member map is not 1-Lipschitz"
        image = set(assignment)
        in_union = set(member.coarse.union()) & set(member.fine.union())
        assert image <= in_union, "refined member map leaves the block unions"
        pf = pushforward(witness)
        norm = member.coarse.union_mass()
        ratios = []
        for k, block in enumerate(member.fine.blocks):
            host = None
            bset = set(block)
            for a, coarse_block in enumerate(member.coarse.blocks):
                if bset <= set(coarse_block):
                    host = a
                    break
            if host is None:
                continue
            got = sum((pf[y] for y in block), ZERO)
            ratio = norm * got / member.fine.block_mass(k)
            assert ONE <= ratio < ONE + eps_prime, \
                f"member {m} fine block {k}: transported-mass ratio left [1, 1+eps')"
            ratios.append((k, ratio))
        maps.append(witness)
        ratio_reports.append(tuple(ratios))
    cert = proj_check.certificate
    return RefineResult(refined, tuple(maps), projection, cert, 9 * eps,
                        tuple(ratio_reports))


# ---------------------------------------------------------------------------
# Padding step
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PadMember:
    witness: MapWitness          # X -> Y
    blocks: PartitionFamily      # blocks of Y


@dataclass(frozen=True)
class PadResult:
    space: FiniteMMSpace
    maps: tuple                  # MapWitness per member
    inclusion: MapWitness        # original dominator into the padded one
    inclusion_certificate: MmIsoCertificate
    box_bound: Fraction          # 3 eps
    anchor_masses: tuple         # per member: (Fraction per block)
    merged_base_point: bool


def pad_extend(space_x: FiniteMMSpace, members: Sequence[PadMember],
               eps: ScalarLike, eps_prime: ScalarLike,
               point_cap: int = DEFAULT_POINT_CAP) -> PadResult:
    """Append a corrective anchor product restoring exact block transport.

    Hypotheses, checked exactly:

    1. each member map lands inside its block union;
    2. each member map stretches distances by at most an additive eps';
    3. blocks have positive mass and receive at most (1+eps) times their
       own mass (so eps must be below 1).

    Each member gets an anchor per block (the block holding the image of the
    base point keeps that image as its anchor) weighted so that mixing the
    old map with a (1-eps, eps) split hits every block with exactly its
    normalized mass.  The old space embeds isometrically with transported
    mass within eps in Prohorov distance, certifying a box step of at most
    3 eps; the extended maps keep the additive eps' bound.  When the anchor
    layer collapses to one point at distance 0 from the base point the two
    are merged, which changes no measured quantity.
    """
    eps = as_scalar(eps)
    eps_prime = as_scalar(eps_prime)
    if not (0 < eps < 1):
        raise PreconditionError("eps must lie strictly between 0 and 1")
    if eps_prime <= 0:
        raise PreconditionError("eps' must be positive")
    if not members:
        raise PreconditionError("empty member family")
    base_point = 0
    anchor_sets = []
    anchor_masses = []
    for m, member in enumerate(members):
        g, blocks = member.witness, member.blocks
        space_y = blocks.space
        if g.source is not space_x and g.source != space_x:
            raise PreconditionError(f"member {m}: map does not start at the dominator")
        g.check()
        blocks.check()
        union = set(blocks.union())
        if any(g.assignment[x] not in union for x in range(space_x.n)):
            raise PreconditionError(f"member {m}: hypothesis (1) image leaves the block union")
        if additive_defect(g) > eps_prime:
            raise PreconditionError(f"member {m}: hypothesis (2) additive defect above eps'")
        pf = pushforward(g)
        norm = blocks.union_mass()
        base_block = blocks.block_of(g.assignment[base_point])
        anchors = []
        masses = []
        for k, block in enumerate(blocks.blocks):
            mass_k = blocks.block_mass(k)
            if mass_k <= 0:
                raise PreconditionError(f"member {m}: hypothesis (3) block {k} has no mass")
            transported = sum((pf[y] for y in block), ZERO)
            if transported > (ONE + eps) * mass_k:
                raise PreconditionError(
                    f"member {m}: hypothesis (3) block {k} is overloaded")
            anchors.append(g.assignment[base_point] if k == base_block else min(block))
            weight = (mass_k / norm - (ONE - eps) * transported) / eps
            assert weight >= eps * mass_k > 0, \
                "anchor weight fell below its guaranteed floor"
            masses.append(weight)
        assert sum(masses, ZERO) == 1
        anchor_sets.append(tuple(anchors))
        anchor_masses.append(tuple(masses))

    layer_tuples = list(iter_product(*[range(len(a)) for a in anchor_sets]))
    if space_x.n + len(layer_tuples) > point_cap:
        raise BudgetExceededError(f"padded space would exceed {point_cap} points")

    def layer_distance(t, u):
        return max(
            members[m].blocks.space.d(anchor_sets[m][t[m]], anchor_sets[m][u[m]])
            for m in range(len(members)))

    layer_diam = ZERO
    for i, t in enumerate(layer_tuples):
        for u in layer_tuples[i + 1:]:
            v = layer_distance(t, u)
            if v > layer_diam:
                layer_diam = v

    merge = layer_diam == 0 and len(layer_tuples) == 1
    nx = space_x.n
    if merge:
        labels = space_x.labels
        dist = tuple(tuple(row) for row in space_x.metric.dist)
        mass = tuple((ONE - eps) * space_x.mass[x] + (eps if x == base_point else ZERO)
                     for x in range(nx))
        layer_index = {layer_tuples[0]: base_point}
    else:
        labels = space_x.labels + tuple(
            "w" + ".".join(str(k) for k in t) for t in layer_tuples)
        rows = []
        for x in range(nx):
            row = list(space_x.metric.dist[x])
            row.extend(space_x.d(x, base_point) + layer_diam for _ in layer_tuples)
            rows.append(tuple(row))
        for t in layer_tuples:
            row = [space_x.d(x, base_point) + layer_diam for x in range(nx)]
            row.extend(layer_distance(t, u) for u in layer_tuples)
            rows.append(tuple(row))
        dist = tuple(rows)
        layer_mass = []
        for t in layer_tuples:
            v = eps
            for m in range(len(members)):
                v *= anchor_masses[m][t[m]]
            layer_mass.append(v)
        mass = tuple((ONE - eps) * mv for mv in space_x.mass) + tuple(layer_mass)
        layer_index = {t: nx + i for i, t in enumerate(layer_tuples)}
    padded = FiniteMMSpace(FiniteMetricSpace(labels, dist), mass)
    report = validate(padded)
    assert report.ok, report.violations

    inclusion = MapWitness(space_x, padded, tuple(range(nx)), None)
    incl_check = verify_mm_iso(inclusion, eps)
    assert incl_check.passed, incl_check.violation
    assert incl_check.certificate.distortion == 0, "inclusion must be isometric"

    maps = []
    for m, member in enumerate(members):
        g, blocks = member.witness, member.blocks
        assignment = list(g.assignment)
        if not merge:
            assignment.extend(anchor_sets[m][t[m]] for t in layer_tuples)
        witness = MapWitness(padded, blocks.space, tuple(assignment), None)
        assert additive_defect(witness) <= eps_prime, \
            f"member {m}: extended map exceeds the additive eps' bound"
        union = set(blocks.union())
        assert all(witness.assignment[i] in union for i in range(padded.n))
        pf = pushforward(witness)
        norm = blocks.union_mass()
        for k, block in enumerate(blocks.blocks):
            got = sum((pf[y] for y in block), ZERO)
            want = blocks.block_mass(k) / norm
            assert got == want, \
                f"member {m} block {k}: padded transport is not exactly normalized"
        maps.append(witness)
    return PadResult(padded, tuple(maps), inclusion, incl_check.certificate,
                     3 * eps, tuple(anchor_masses), merge)


# ---------------------------------------------------------------------------
# One-shot approximate dominator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MemberCertificate:
    """How one family member is dominated by the constructed space."""

    member_index: int
    via: str                     # "direct" | "representative" | "transfer"
    representative: Optional[int]
    certificate: DominationCertificate
    check: EpsDominationCheck


@dataclass(frozen=True)
class EpsDominatorResult:
    space: FiniteMMSpace
    eps: Fraction
    relation_eps: Fraction       # 5 eps, with empty exceptional set
    members: tuple               # MemberCertificate per family member
    representatives: tuple       # indices of members used as product factors


def _single_level_partition(space: FiniteMMSpace, eps: Fraction) -> PartitionFamily:
    blocks = greedy_diameter_blocks(space.metric, list(space.support()), eps,
                                    strict=True)
    family = PartitionFamily(space, tuple(blocks))
    assert family.union_mass() > 1 / (ONE + eps)
    return family


def eps_dominator(family: Sequence[FiniteMMSpace], eps: ScalarLike,
                  mode: str = "direct", point_cap: int = DEFAULT_POINT_CAP,
                  budget: int = 2_000_000) -> EpsDominatorResult:
    """One space that 5 eps-dominates every member, with no exceptional sets.

    Members are partitioned into blocks of diameter < eps covering their
    support.  In direct mode every member is a product factor.  In transfer
    mode members are greedily matched to earlier representatives through a
    searched almost-isomorphism and the factor map is carried over; a member
    that fits no representative becomes one itself, so the construction never
    fails outright.  Every certificate is re-verified through the
    approximate-domination checker before being returned.
    """
    eps = as_scalar(eps)
    if not (0 < eps < 1):
        raise PreconditionError("eps must lie strictly between 0 and 1")
    if not family:
        raise PreconditionError("empty family")
    if mode not in ("direct", "transfer"):
        raise PreconditionError("mode must be 'direct' or 'transfer'")
    partitions = [_single_level_partition(member, eps) for member in family]
    relation_eps = 5 * eps

    reps: list = []
    attached: dict = {}
    if mode == "direct":
        reps = list(range(len(family)))
    else:
        for i, member in enumerate(family):
            matched = None
            for r in reps:
                psi = min_mm_iso(member, family[r], budget).certificate.witness
                try:
                    _check_neighborhood(partitions[r], eps, psi)
                except NeighborhoodCheckError:
                    continue
                matched = (r, psi)
                break
            if matched is None:
                reps.append(i)
            else:
                attached[i] = matched

    product = product_dominator([partitions[r] for r in reps], point_cap)
    rep_maps = {r: product.maps[k] for k, r in enumerate(reps)}

    members_out = []
    for i, member in enumerate(family):
        if i in rep_maps:
            witness = rep_maps[i]
            via = "direct" if mode == "direct" else "representative"
            rep_of = None
        else:
            r, psi = attached[i]
            carried_over = transfer(partitions[r], eps, psi, rep_maps[r])
            witness = carried_over.map_to_target
            via = "transfer"
            rep_of = r
        check = check_eps_domination(witness, relation_eps, require_full_domain=True)
        assert check.passed, (i, check.violation)
        cert = DominationCertificate(witness, "eps_zero", relation_eps)
        members_out.append(MemberCertificate(i, via, rep_of, cert, check))
    return EpsDominatorResult(product.space, eps, relation_eps,
                              tuple(members_out), tuple(reps))


# ---------------------------------------------------------------------------
# Iterated dominator sequence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StageCertificate:
    member_index: int
    claimed_eps: Fraction        # 3 eps_n for direct members, 5 eps_n via transfer
    check: EpsDominationCheck
    certificate: DominationCertificate


@dataclass(frozen=True)
class Stage:
    index: int                   # 1-based stage number
    space: FiniteMMSpace
    eps: Fraction                # the stage scale eps_n
    maps: tuple                  # MapWitness per member
    certificates: tuple          # StageCertificate per member


@dataclass(frozen=True)
class Step:
    index: int                   # step from stage index to index + 1
    eps: Fraction                # eps_n
    box_bound: Fraction          # 48 eps_n
    refine_bound: Fraction       # 27 eps_n
    pad_bound: Fraction          # 21 eps_n
    refine_certificate: MmIsoCertificate
    pad_certificate: MmIsoCertificate


@dataclass(frozen=True)
class DominatorTrace:
    stages: tuple
    steps: tuple
    truncated: bool
    mode: str


def _stage_certificates(maps: Sequence[MapWitness], eps_bounds) -> tuple:
    out = []
    for i, witness in enumerate(maps):
        bound = eps_bounds[i]
        check = check_eps_domination(witness, bound, require_full_domain=True)
        assert check.passed, (i, check.violation)
        cert = DominationCertificate(witness, "eps_zero", bound)
        out.append(StageCertificate(i, bound, check, cert))
    return tuple(out)


def dominator_sequence(family: Sequence[FiniteMMSpace],
                       eps_seq: Sequence[ScalarLike], stages: int,
                       mode: str = "direct",
                       point_cap: int = DEFAULT_POINT_CAP,
                       budget: int = 2_000_000) -> DominatorTrace:
    """Iterate refine + pad to produce ever finer approximate dominators.

    Stage 1 is the block product at the first scale.  Each step first
    refines to the next scale (box step <= 27 eps_n via the fiber
    projection), then pads to restore exact block transport (box step
    <= 21 eps_n via the isometric inclusion), for a chained bound of
    48 eps_n per step.  Every stage carries one full-domain
    approximate-domination certificate per member, at 3 eps_n for members
    whose block transport is exact and 5 eps_n for members riding through a
    transfer (their transport is only ratio-exact at stage 1, and their
    carried cover can miss up to twice the scale in mass afterwards).

    In transfer mode only representatives go through the refine step; the
    refined maps are carried over to the other members, and everyone joins
    the pad step.  A member whose neighborhood check fails at some scale is
    promoted to a representative from that stage on, its later block levels
    nested inside the carried ones.

    If a constructed space would exceed the point cap the trace is returned
    truncated, with the flag set.
    """
    eps_seq = [as_scalar(e) for e in eps_seq]
    if stages < 1:
        raise PreconditionError("need at least one stage")
    if len(eps_seq) < stages:
        raise PreconditionError("scale sequence shorter than the requested stage count")
    if any(e <= 0 for e in eps_seq):
        raise PreconditionError("scales must be positive")
    if any(b > a for a, b in zip(eps_seq, eps_seq[1:])):
        raise PreconditionError("scale sequence must be non-increasing")
    if eps_seq[0] >= 1:
        raise PreconditionError("first scale must be below 1")
    if mode not in ("direct", "transfer"):
        raise PreconditionError("mode must be 'direct' or 'transfer'")
    if not family:
        raise PreconditionError("empty family")

    n_members = len(family)
    schemes: dict = {}           # own nested levels, for representatives
    psi_of: dict = {}            # member -> (representative, psi witness)
    via_of: dict = {}            # "direct" | "transfer", may flip on promotion
    if mode == "direct":
        for i, member in enumerate(family):
            schemes[i] = build_scheme(member, eps_seq[:stages], stages).levels
            via_of[i] = "direct"
    else:
        reps: list = []
        for i, member in enumerate(family):
            matched = None
            for r in reps:
                psi = min_mm_iso(member, family[r], budget).certificate.witness
                rep_level_1 = _single_level_partition(family[r], eps_seq[0])
                try:
                    _check_neighborhood(rep_level_1, eps_seq[0], psi)
                except NeighborhoodCheckError:
                    continue
                matched = (r, psi)
                break
            if matched is None:
                reps.append(i)
                via_of[i] = "direct"
                schemes[i] = build_scheme(member, eps_seq[:stages], stages).levels
            else:
                via_of[i] = "transfer"
                psi_of[i] = matched

    # Stage 1: block product over the representatives, transfer for the rest.
    stage_list = []
    step_list = []
    truncated = False
    rep_list = [i for i in range(n_members) if via_of[i] == "direct"]
    prod = product_dominator([schemes[i][0] for i in rep_list], point_cap)
    rep_maps = {r: prod.maps[j] for j, r in enumerate(rep_list)}
    maps: list = [None] * n_members
    current_levels: dict = {}
    for i in range(n_members):
        if via_of[i] == "direct":
            maps[i] = rep_maps[i]
            current_levels[i] = schemes[i][0]
        else:
            r, psi = psi_of[i]
            carried_over = transfer(schemes[r][0], eps_seq[0], psi, rep_maps[r])
            maps[i] = carried_over.map_to_target
            current_levels[i] = carried_over.blocks_on_target
    bounds = [3 * eps_seq[0] if via_of[i] == "direct" else 5 * eps_seq[0]
              for i in range(n_members)]
    stage_list.append(Stage(1, prod.space, eps_seq[0], tuple(maps),
                            _stage_certificates(maps, bounds)))

    current = prod.space
    current_maps = list(maps)

    for k in range(1, stages):
        eps_k = eps_seq[k - 1]
        eps_next = eps_seq[k]
        # Pick next-scale block families; members leaving their
        # representative's shrinking neighborhood get promoted.
        next_levels: dict = {}
        for i in range(n_members):
            if via_of[i] == "transfer":
                r, psi = psi_of[i]
                try:
                    _check_neighborhood(schemes[r][k], eps_next, psi)
                    continue   # stays transferred; its level is carried later
                except NeighborhoodCheckError:
                    via_of[i] = "direct"   # promoted from this stage on
            if i in schemes:
                next_levels[i] = schemes[i][k]
            else:
                next_levels[i] = refine_partition_within(
                    family[i], current_levels[i], eps_next)

        refine_members = [i for i in range(n_members) if via_of[i] == "direct"]
        try:
            refined = refine(
                current,
                [RefineMember(current_maps[i], current_levels[i], next_levels[i])
                 for i in refine_members],
                3 * eps_k, eps_next, point_cap)
            refined_maps = {i: refined.maps[j]
                            for j, i in enumerate(refine_members)}
            pad_members = []
            for i in range(n_members):
                if via_of[i] == "direct":
                    pad_members.append(PadMember(refined_maps[i], next_levels[i]))
                else:
                    r, psi = psi_of[i]
                    carried_over = transfer(schemes[r][k], eps_next, psi,
                                            refined_maps[r])
                    next_levels[i] = carried_over.blocks_on_target
                    pad_members.append(PadMember(carried_over.map_to_target,
                                                 carried_over.blocks_on_target))
            padded = pad_extend(refined.space, pad_members,
                                7 * eps_k, 3 * eps_next, point_cap)
        except BudgetExceededError:
            truncated = True
            break
        step_list.append(Step(k, eps_k, 48 * eps_k, refined.box_bound,
                              padded.box_bound, refined.projection_certificate,
                              padded.inclusion_certificate))
        current = padded.space
        current_maps = list(padded.maps)
        current_levels = next_levels
        bounds = [3 * eps_next if via_of[i] == "direct" else 5 * eps_next
                  for i in range(n_members)]
        stage_list.append(Stage(k + 1, current, eps_next, tuple(current_maps),
                                _stage_certificates(current_maps, bounds)))
    return DominatorTrace(tuple(stage_list), tuple(step_list), truncated, mode)


# ---------------------------------------------------------------------------
# Coverings and precompactness profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MemberCovering:
    member_index: int
    blocks: tuple                # index tuples in the member space
    count: int
    max_block_diameter: Fraction
    union_diameter: Fraction
    union_mass: Fraction
    count_ok: bool
    block_diameter_ok: bool      # every block diameter < 4 eps
    union_diameter_ok: bool      # union diameter < source union diameter + 3 eps
    mass_ok: bool                # union mass >= 1 - 3 eps

    @property
    def verified(self) -> bool:
        return (self.count_ok and self.block_diameter_ok
                and self.union_diameter_ok and self.mass_ok)


@dataclass(frozen=True)
class CoveringResult:
    eps: Fraction
    source_count: int
    source_union_diameter: Fraction
    members: tuple

    @property
    def verified(self) -> bool:
        return all(m.verified for m in self.members)


def derive_covering(blocks: PartitionFamily, witnesses: Sequence[MapWitness],
                    eps: ScalarLike) -> CoveringResult:
    """Push a small-diameter covering of a dominator down to each member.

    ``blocks`` covers the dominator up to mass eps with blocks of diameter
    <= eps; each witness must satisfy the approximate-domination conditions
    at eps.  Every member block is the strict eps-enlargement of the image
    of a dominator block cut to the witness domain; the verified statistics
    are the block count, block diameter < 4 eps, union diameter growth
    < 3 eps, and covered mass >= 1 - 3 eps.
    """
    eps = as_scalar(eps)
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    blocks.check()
    space_x = blocks.space
    for k, block in enumerate(blocks.blocks):
        if diameter(space_x.metric, block) > eps:
            raise PreconditionError(f"dominator block {k} has diameter above eps")
    if blocks.union_mass() < ONE - eps:
        raise PreconditionError("dominator covering misses more than eps of the mass")
    src_diam = diameter(space_x.metric, blocks.union())
    members = []
    for i, witness in enumerate(witnesses):
        if witness.source is not space_x and witness.source != space_x:
            raise PreconditionError(f"witness {i} does not start at the dominator")
        check = check_eps_domination(witness, eps)
        if not check.passed:
            raise PreconditionError(f"witness {i} is invalid: {check.violation}")
        space_y = witness.target
        domain = set(witness.domain_indices())
        derived = []
        seen = set()
        for block in blocks.blocks:
            image = {witness.assignment[x] for x in block if x in domain}
            if not image:
                continue
            enlarged = open_ball_enlargement(space_y.metric, image, eps)
            if enlarged and enlarged not in seen:
                seen.add(enlarged)
                derived.append(enlarged)
        union = sorted(set().union(*map(set, derived))) if derived else []
        max_diam = max((diameter(space_y.metric, b) for b in derived), default=ZERO)
        union_diam = diameter(space_y.metric, union)
        union_mass = mass_of(space_y, union)
        members.append(MemberCovering(
            i, tuple(derived), len(derived), max_diam, union_diam, union_mass,
            count_ok=len(derived) <= len(blocks.blocks),
            block_diameter_ok=max_diam < 4 * eps,
            union_diameter_ok=union_diam < src_diam + 3 * eps,
            mass_ok=union_mass >= ONE - 3 * eps))
    return CoveringResult(eps, len(blocks.blocks), src_diam, tuple(members))


@dataclass(frozen=True)
class MemberProfile:
    member_index: int
    blocks: tuple
    count: int
    max_block_diameter: Fraction
    union_diameter: Fraction
    union_mass: Fraction


@dataclass(frozen=True)
class ProfileResult:
    eps: Fraction
    delta: Fraction              # uniform bound on counts and union diameters
    members: tuple

    @property
    def verified(self) -> bool:
        return all(
            m.count <= self.delta
            and m.max_block_diameter <= self.eps
            and m.union_diameter <= self.delta
            and m.union_mass >= ONE - self.eps
            for m in self.members)


def precompact_profile(family: Sequence[FiniteMMSpace],
                       eps: ScalarLike) -> ProfileResult:
    """Uniform covering statistics across a family at one scale.

    Each member is covered by greedy blocks of diameter <= eps over its
    support (so only zero-mass points are dropped), and the returned delta
    bounds both every block count and every union diameter.
    """
    eps = as_scalar(eps)
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    if not family:
        raise PreconditionError("empty family")
    members = []
    delta = ZERO
    for i, member in enumerate(family):
        blocks = greedy_diameter_blocks(member.metric, list(member.support()),
                                        eps, strict=False)
        union = sorted(set().union(*map(set, blocks))) if blocks else []
        profile = MemberProfile(
            i, tuple(blocks), len(blocks),
            max((diameter(member.metric, b) for b in blocks), default=ZERO),
            diameter(member.metric, union), mass_of(member, union))
        delta = max(delta, Fraction(profile.count), profile.union_diameter)
        members.append(profile)
    result = ProfileResult(eps, delta, tuple(members))
    assert result.verified
    return result
