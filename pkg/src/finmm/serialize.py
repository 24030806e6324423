"""JSON round-trips for spaces, witnesses and certificates.

Two encodings are used at two boundaries.  Space files carry rationals as
[numerator, denominator] pairs; both directions are bit-exact because
Fractions are already in lowest terms.  CLI reports carry rationals as
"p/q" strings, which diff well; the parser accepts both spellings.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Optional

from .core import (
    FiniteMetricSpace,
    FiniteMMSpace,
    MapWitness,
    PartitionFamily,
    PreconditionError,
    as_scalar,
)


def scalar_to_pair(x: Fraction) -> list:
    return [x.numerator, x.denominator]


def scalar_to_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def parse_scalar(value) -> Fraction:
    if isinstance(value, str) or isinstance(value, int):
        return as_scalar(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return as_scalar(tuple(value))
    raise PreconditionError(f"cannot parse rational from {value!r}")


def metric_space_to_json(space: FiniteMetricSpace) -> dict:
    return {
        "labels": list(space.labels),
        "dist": [[scalar_to_pair(v) for v in row] for row in space.dist],
    }


def metric_space_from_json(doc: dict) -> FiniteMetricSpace:
    try:
        labels = tuple(doc["labels"])
        dist = tuple(tuple(parse_scalar(v) for v in row) for row in doc["dist"])
    except (KeyError, TypeError) as exc:
        raise PreconditionError(f"malformed metric space document: {exc}")
    return FiniteMetricSpace(labels, dist)


def mm_space_to_json(space: FiniteMMSpace) -> dict:
    doc = metric_space_to_json(space.metric)
    doc["mass"] = [scalar_to_pair(v) for v in space.mass]
    return doc


def mm_space_from_json(doc: dict) -> FiniteMMSpace:
    metric = metric_space_from_json(doc)
    try:
        mass = tuple(parse_scalar(v) for v in doc["mass"])
    except (KeyError, TypeError) as exc:
        raise PreconditionError(f"malformed mm-space document: {exc}")
    return FiniteMMSpace(metric, mass)


def any_space_from_json(doc: dict):
    """An mm-space when a mass vector is present, a metric space otherwise."""
    if "mass" in doc:
        return mm_space_from_json(doc)
    return metric_space_from_json(doc)


def witness_to_json(f: MapWitness) -> dict:
    return {
        "assignment": list(f.assignment),
        "domain": None if f.domain is None else list(f.domain),
    }


def witness_from_json(doc: dict, source, target) -> MapWitness:
    try:
        assignment = tuple(int(i) for i in doc["assignment"])
    except (KeyError, TypeError) as exc:
        raise PreconditionError(f"malformed witness document: {exc}")
    domain = doc.get("domain")
    if domain is not None:
        domain = tuple(int(i) for i in domain)
    witness = MapWitness(source, target, assignment, domain)
    witness.check()
    return witness


def blocks_from_json(doc, space: FiniteMMSpace) -> PartitionFamily:
    family = PartitionFamily(space, tuple(tuple(int(i) for i in b) for b in doc))
    family.check()
    return family


def blocks_to_json(family: PartitionFamily) -> list:
    return [list(b) for b in family.blocks]


def render(value):
    """Rewrite a report structure into plain JSON types, rationals as "p/q"."""
    if isinstance(value, Fraction):
        return scalar_to_str(value)
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, dict):
        return {str(k): render(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [render(v) for v in value]
    raise PreconditionError(f"cannot render {type(value).__name__} into a report")
