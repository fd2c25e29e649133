"""Candidate streamliner generation and the exact meaning of each streamliner.

A streamliner is a chain of rule applications: an optional higher-order
quantifier (possibly over a derived set such as ``range(curr)``) wrapped
around a first-order value rule, or a standalone function-level rule.
``streamliner_semantics`` turns a streamliner into solver-independent
primitives that ``models.compile`` encodes per recipe; ``satisfies``
evaluates the same primitives on a concrete assignment.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

from .bacp import BACP, BacpClass, BacpInstance, BacpSolution

__all__ = [
    "StreamlinerRule",
    "Streamliner",
    "StreamlinerSet",
    "CandidateConfig",
    "ValueCount",
    "RangeCount",
    "Monotone",
    "Extremal",
    "Constant",
    "generate_candidates",
    "streamliner_semantics",
    "satisfies",
    "conflicts",
    "value_set",
    "quantifier_bounds",
    "dump_candidates",
]

VALUE_RULES = ("odd", "even", "lowerHalf", "upperHalf")
FUNCTION_RULES = (
    "monotonicIncreasing",
    "monotonicDecreasing",
    "largestFirst",
    "largestLast",
    "smallestFirst",
    "smallestLast",
)
QUANTIFIERS = ("all", "most", "half", "approxHalf", "allBut")
SET_LIFTS = ("range", "defined")
SLICE_LIFTS = ("prefix", "postfix")
SOFT_RULES = frozenset({"most", "approxHalf", "allBut", "prefix", "postfix"})

# prefix/postfix softness meaning "half of the courses, rounded down"
HALF_COURSES = "C/2"

Softness = Union[int, str, None]


@dataclass(frozen=True)
class StreamlinerRule:
    name: str
    softness: Softness = None

    def __post_init__(self) -> None:
        if self.name not in VALUE_RULES + FUNCTION_RULES + QUANTIFIERS + SET_LIFTS + SLICE_LIFTS:
            raise ValueError(f"unknown streamliner rule {self.name!r}")
        if (self.softness is not None) != (self.name in SOFT_RULES):
            raise ValueError(f"rule {self.name!r}: softness must be given iff the rule is soft")
        if isinstance(self.softness, int) and self.softness < 1:
            raise ValueError("softness must be a positive integer")
        if isinstance(self.softness, str) and (self.softness != HALF_COURSES or self.name not in SLICE_LIFTS):
            raise ValueError(f"symbolic softness {self.softness!r} only allowed for prefix/postfix")

    @property
    def kind(self) -> str:
        return "first-order" if self.name in VALUE_RULES + FUNCTION_RULES else "higher-order"

    def render(self) -> str:
        return self.name if self.softness is None else f"{self.name}({self.softness})"

    def to_json(self) -> dict:
        doc = {"name": self.name, "kind": self.kind}
        if self.softness is not None:
            doc["softness"] = self.softness
        return doc


@dataclass(frozen=True)
class Streamliner:
    id: int
    chain: tuple[StreamlinerRule, ...]
    description: str = field(default="", compare=False)

    @property
    def key(self) -> str:
        return ".".join(r.render() for r in self.chain)

    @property
    def value_rule(self) -> str | None:
        last = self.chain[-1].name
        return last if last in VALUE_RULES else None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "key": self.key,
            "chain": [r.to_json() for r in self.chain],
            "description": self.description,
        }


@dataclass(frozen=True)
class StreamlinerSet:
    members: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        members = tuple(sorted(self.members))
        if len(set(members)) != len(members):
            raise ValueError("duplicate streamliner ids")
        object.__setattr__(self, "members", members)

    @classmethod
    def of(cls, ids: Iterable[int]) -> "StreamlinerSet":
        return cls(tuple(ids))

    @classmethod
    def parse(cls, key: str) -> "StreamlinerSet":
        if key in ("", "none"):
            return cls()
        return cls(tuple(int(x) for x in key.split("+")))

    @property
    def key(self) -> str:
        return "+".join(str(i) for i in self.members) or "none"

    def add(self, sid: int) -> "StreamlinerSet":
        return StreamlinerSet(self.members + (sid,))

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, sid: int) -> bool:
        return sid in self.members


@dataclass(frozen=True)
class CandidateConfig:
    most: tuple[int, ...] = (1, 2)
    approx_half: tuple[int, ...] = (1,)
    all_but: tuple[int, ...] = (1, 2)
    prefix: tuple[Softness, ...] = (HALF_COURSES,)
    postfix: tuple[Softness, ...] = (HALF_COURSES,)
    range_quantifiers: tuple[str, ...] = ("all", "half")
    prune_defined: bool = True


# --- semantic primitives -------------------------------------------------


@dataclass(frozen=True)
class ValueCount:
    """``lo <= |{c in courses : curr(c) in values}| <= hi``."""

    courses: tuple[int, ...]
    values: frozenset[int]
    lo: int
    hi: int


@dataclass(frozen=True)
class RangeCount:
    """Counting over the set of distinct periods used by ``curr``.

    With ``R = |range(curr)|`` and ``K = |range(curr) & values|`` the
    quantifier fixes K relative to R (all: K = R; half: K = floor(R/2); ...).
    """

    values: frozenset[int]
    quantifier: str
    softness: int | None = None


@dataclass(frozen=True)
class Monotone:
    increasing: bool


@dataclass(frozen=True)
class Extremal:
    """``curr(position) == max/min over all courses``."""

    largest: bool
    first: bool


@dataclass(frozen=True)
class Constant:
    value: bool


Primitive = Union[ValueCount, RangeCount, Monotone, Extremal, Constant]


def value_set(rule: str, n: int) -> frozenset[int]:
    """Values of ``int(1..n)`` admitted by a first-order value rule."""
    mid = (n + 1) // 2
    if rule == "odd":
        return frozenset(v for v in range(1, n + 1) if v % 2 == 1)
    if rule == "even":
        return frozenset(v for v in range(1, n + 1) if v % 2 == 0)
    if rule == "lowerHalf":
        return frozenset(range(1, mid + 1))
    if rule == "upperHalf":
        return frozenset(range(mid + 1, n + 1))
    raise ValueError(f"not a value rule: {rule!r}")


def quantifier_bounds(quantifier: str, softness: int | None, m: int) -> tuple[int, int]:
    """Admissible count range of satisfying members in a collection of size m."""
    half = m // 2
    if quantifier == "all":
        return m, m
    if quantifier == "half":
        return half, half
    if quantifier == "most":
        return max(0, m - softness), m
    if quantifier == "approxHalf":
        return max(0, half - softness), min(m, half + softness)
    if quantifier == "allBut":
        return m - softness, m - softness
    raise ValueError(f"not a quantifier: {quantifier!r}")


def _slice_length(softness: Softness, n_courses: int) -> int:
    if softness == HALF_COURSES:
        return n_courses // 2
    return min(int(softness), n_courses)


_VALUE_WORDS = {
    "odd": "odd",
    "even": "even",
    "lowerHalf": "lower-half",
    "upperHalf": "upper-half",
}

_FUNCTION_WORDS = {
    "monotonicIncreasing": "curr is monotonically increasing",
    "monotonicDecreasing": "curr is monotonically decreasing",
    "largestFirst": "the first course takes the largest period of curr",
    "largestLast": "the last course takes the largest period of curr",
    "smallestFirst": "the first course takes the smallest period of curr",
    "smallestLast": "the last course takes the smallest period of curr",
}


def _quantifier_phrase(q: StreamlinerRule, noun: str) -> str:
    if q.name == "all":
        return f"all of the {noun}"
    if q.name == "half":
        return f"half of the {noun}"
    if q.name == "most":
        return f"all but at most {q.softness} of the {noun}"
    if q.name == "approxHalf":
        return f"half (+/-{q.softness}) of the {noun}"
    return f"all but exactly {q.softness} of the {noun}"


def describe(chain: Sequence[StreamlinerRule]) -> str:
    head = chain[0]
    if len(chain) == 1:
        return _FUNCTION_WORDS[head.name]
    word = _VALUE_WORDS[chain[-1].name]
    if head.name in SLICE_LIFTS:
        k = "floor(C/2)" if head.softness == HALF_COURSES else str(head.softness)
        side = "first" if head.name == "prefix" else "last"
        return f"the {side} {k} courses map to {word} periods"
    if len(chain) == 3:
        lift = chain[1].name
        noun = "range values of curr" if lift == "range" else "defined values of curr"
        return f"{_quantifier_phrase(head, noun)} are {word}"
    return f"{_quantifier_phrase(head, 'courses')} map to {word} periods"


def generate_candidates(
    problem: BacpClass = BACP, config: CandidateConfig | None = None
) -> list[Streamliner]:
    """Deterministic candidate list for a total ``int -> int`` function.

    Order: function-level rules, course quantifiers, range quantifiers,
    prefix/postfix slices, then defined-set quantifiers (dropped when
    ``config.prune_defined``) so pruning never renumbers the others.
    """
    if not problem.total or len(problem.signature) != 2:
        raise ValueError("only total int -> int function decisions are supported")
    config = config or CandidateConfig()
    chains: list[tuple[StreamlinerRule, ...]] = []
    for name in FUNCTION_RULES:
        chains.append((StreamlinerRule(name),))
    quantifiers = [StreamlinerRule("all"), StreamlinerRule("half")]
    quantifiers += [StreamlinerRule("most", k) for k in config.most]
    quantifiers += [StreamlinerRule("approxHalf", k) for k in config.approx_half]
    quantifiers += [StreamlinerRule("allBut", k) for k in config.all_but]
    for q in quantifiers:
        for v in VALUE_RULES:
            chains.append((q, StreamlinerRule(v)))
    for qname in config.range_quantifiers:
        for v in VALUE_RULES:
            chains.append((StreamlinerRule(qname), StreamlinerRule("range"), StreamlinerRule(v)))
    for name, ks in (("prefix", config.prefix), ("postfix", config.postfix)):
        for k in ks:
            for v in VALUE_RULES:
                chains.append((StreamlinerRule(name, k), StreamlinerRule(v)))
    if not config.prune_defined:
        for qname in config.range_quantifiers:
            for v in VALUE_RULES:
                chains.append((StreamlinerRule(qname), StreamlinerRule("defined"), StreamlinerRule(v)))
    return [Streamliner(i, chain, describe(chain)) for i, chain in enumerate(chains)]


def streamliner_semantics(s: Streamliner, inst: BacpInstance) -> list[Primitive]:
    C, P = inst.n_courses, inst.n_periods
    head = s.chain[0]
    if len(s.chain) == 1:
        name = head.name
        if name == "monotonicIncreasing":
            return [Monotone(True)]
        if name == "monotonicDecreasing":
            return [Monotone(False)]
        return [Extremal(largest=name.startswith("largest"), first=name.endswith("First"))]
    values = value_set(s.chain[-1].name, P)
    if head.name in SLICE_LIFTS:
        k = _slice_length(head.softness, C)
        courses = tuple(range(1, k + 1)) if head.name == "prefix" else tuple(range(C - k + 1, C + 1))
        return [ValueCount(courses, values, len(courses), len(courses))]
    if len(s.chain) == 3:
        lift = s.chain[1].name
        if lift == "range":
            return [RangeCount(values, head.name, head.softness)]
        # defined(curr) is every course for a total function: the rule is a
        # constant over the course numbers themselves
        members = [c for c in range(1, C + 1) if c in value_set(s.chain[-1].name, C)]
        lo, hi = quantifier_bounds(head.name, head.softness, C)
        return [Constant(lo <= len(members) <= hi)]
    lo, hi = quantifier_bounds(head.name, head.softness, C)
    return [ValueCount(tuple(range(1, C + 1)), values, lo, hi)]


def _holds(prim: Primitive, assignment: Sequence[int]) -> bool:
    if isinstance(prim, ValueCount):
        n = sum(1 for c in prim.courses if assignment[c - 1] in prim.values)
        return prim.lo <= n <= prim.hi
    if isinstance(prim, RangeCount):
        used = set(assignment)
        lo, hi = quantifier_bounds(prim.quantifier, prim.softness, len(used))
        return lo <= len(used & prim.values) <= hi
    if isinstance(prim, Monotone):
        pairs = zip(assignment, assignment[1:])
        if prim.increasing:
            return all(a <= b for a, b in pairs)
        return all(a >= b for a, b in pairs)
    if isinstance(prim, Extremal):
        target = assignment[0] if prim.first else assignment[-1]
        return target == (max(assignment) if prim.largest else min(assignment))
    if isinstance(prim, Constant):
        return prim.value
    raise TypeError(prim)


def satisfies(s: Streamliner, inst: BacpInstance, sol: BacpSolution) -> bool:
    return all(_holds(p, sol.assignment) for p in streamliner_semantics(s, inst))


# --- static compatibility -------------------------------------------------

_COMPLEMENTS = {"odd": "even", "even": "odd", "lowerHalf": "upperHalf", "upperHalf": "lowerHalf"}


def _course_count_form(s: Streamliner):
    """(quantifier, softness, value rule) for streamliners counting over all courses."""
    if len(s.chain) == 2 and s.chain[0].name in QUANTIFIERS:
        return s.chain[0].name, s.chain[0].softness, s.chain[1].name
    if len(s.chain) == 3 and s.chain[1].name == "range" and s.chain[0].name == "all":
        # every used period satisfies V <=> every course maps into V
        return "all", None, s.chain[2].name
    return None


def conflicts(a: Streamliner, b: Streamliner, max_courses: int = 64) -> bool:
    """True if the pair is contradictory for every course count 2..max_courses.

    Only counting conflicts between rules over the whole course set with
    equal or complementary value rules are detected; everything else is
    treated as compatible.
    """
    fa, fb = _course_count_form(a), _course_count_form(b)
    if fa is None or fb is None:
        if (
            len(a.chain) == 2
            and len(b.chain) == 2
            and a.chain[0] == b.chain[0]
            and a.chain[0].name in SLICE_LIFTS
        ):
            return _COMPLEMENTS[a.chain[1].name] == b.chain[1].name
        return False
    qa, ka, va = fa
    qb, kb, vb = fb
    if va == vb:
        complement = False
    elif _COMPLEMENTS[va] == vb:
        complement = True
    else:
        return False
    for m in range(2, max_courses + 1):
        la, ha = quantifier_bounds(qa, ka, m)
        lb, hb = quantifier_bounds(qb, kb, m)
        if complement:
            lb, hb = m - hb, m - lb
        if max(la, lb, 0) <= min(ha, hb, m):
            return False
    return True


def dump_candidates(candidates: Sequence[Streamliner], path: str | Path) -> None:
    doc = {str(s.id): s.to_json() for s in candidates}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
