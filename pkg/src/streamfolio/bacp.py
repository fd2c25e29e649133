"""Balanced Academic Curriculum Problem: instances, solutions and validation.

The decision is a total function ``curr`` from courses ``1..n_courses`` to
periods ``1..n_periods`` subject to prerequisite ordering, per-period load
bounds and per-period course-count bounds.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

__all__ = [
    "BacpClass",
    "BACP",
    "BacpInstance",
    "BacpSolution",
    "InvalidSolution",
    "EnumerationTooLarge",
    "validate_solution",
    "enumerate_solutions",
    "load_instance",
    "save_instance",
]

# log(P**C) above this refuses brute-force enumeration (~ 2.2e7 assignments)
ENUMERATION_LOG_CAP = 17.0


class InvalidSolution(ValueError):
    """A solution references courses or periods outside the instance."""


class EnumerationTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class BacpClass:
    """The fixed abstract problem class: one total function Course -> Period."""

    decision: str = "curr"
    signature: tuple[str, str] = ("int(1..n_courses)", "int(1..n_periods)")
    total: bool = True
    constraint_families: tuple[str, ...] = ("prerequisite", "load_bounds", "cardinality_bounds")


BACP = BacpClass()


@dataclass(frozen=True)
class BacpInstance:
    n_courses: int
    n_periods: int
    load_per_period_lb: int
    load_per_period_ub: int
    courses_per_period_lb: int
    courses_per_period_ub: int
    prerequisite: tuple[tuple[int, int], ...]
    course_load: tuple[int, ...]
    seed: int | None = None
    id: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if self.n_courses < 1 or self.n_periods < 1:
            raise ValueError("n_courses and n_periods must be positive")
        if not 0 <= self.load_per_period_lb <= self.load_per_period_ub:
            raise ValueError("need 0 <= load_per_period_lb <= load_per_period_ub")
        if not 0 <= self.courses_per_period_lb <= self.courses_per_period_ub:
            raise ValueError("need 0 <= courses_per_period_lb <= courses_per_period_ub")
        if len(self.course_load) != self.n_courses:
            raise ValueError("course_load must define a load for every course")
        if any(load < 1 for load in self.course_load):
            raise ValueError("course loads must be positive")
        pairs = tuple(sorted({(int(a), int(b)) for a, b in self.prerequisite}))
        for a, b in pairs:
            if not (1 <= a <= self.n_courses and 1 <= b <= self.n_courses):
                raise ValueError(f"prerequisite ({a},{b}) references an unknown course")
            if a == b:
                raise ValueError(f"prerequisite ({a},{b}) is a self-loop")
        object.__setattr__(self, "prerequisite", pairs)
        object.__setattr__(self, "course_load", tuple(int(x) for x in self.course_load))
        if not self.id:
            object.__setattr__(self, "id", self.content_hash())

    @property
    def courses(self) -> range:
        return range(1, self.n_courses + 1)

    @property
    def periods(self) -> range:
        return range(1, self.n_periods + 1)

    def load(self, course: int) -> int:
        return self.course_load[course - 1]

    def canonical(self) -> dict:
        """Serialisable content without identifier or seed."""
        return {
            "n_courses": self.n_courses,
            "n_periods": self.n_periods,
            "load_per_period_lb": self.load_per_period_lb,
            "load_per_period_ub": self.load_per_period_ub,
            "courses_per_period_lb": self.courses_per_period_lb,
            "courses_per_period_ub": self.courses_per_period_ub,
            "prerequisite": [list(p) for p in self.prerequisite],
            "course_load": list(self.course_load),
        }

    def content_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return "bacp-" + hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_json(self) -> dict:
        doc = {"id": self.id, **self.canonical()}
        doc["seed"] = self.seed
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "BacpInstance":
        loads = doc["course_load"]
        if isinstance(loads, Mapping):
            loads = [loads[str(c)] if str(c) in loads else loads[c] for c in range(1, doc["n_courses"] + 1)]
        inst = cls(
            n_courses=int(doc["n_courses"]),
            n_periods=int(doc["n_periods"]),
            load_per_period_lb=int(doc["load_per_period_lb"]),
            load_per_period_ub=int(doc["load_per_period_ub"]),
            courses_per_period_lb=int(doc["courses_per_period_lb"]),
            courses_per_period_ub=int(doc["courses_per_period_ub"]),
            prerequisite=tuple(tuple(p) for p in doc.get("prerequisite", ())),
            course_load=tuple(loads),
            seed=doc.get("seed"),
        )
        if doc.get("id") and doc["id"] != inst.id:
            raise ValueError(f"instance id {doc['id']!r} does not match its content ({inst.id})")
        return inst


@dataclass(frozen=True)
class BacpSolution:
    """``assignment[c-1]`` is the period of course ``c``."""

    assignment: tuple[int, ...]

    def __getitem__(self, course: int) -> int:
        return self.assignment[course - 1]

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, int]) -> "BacpSolution":
        n = len(mapping)
        if sorted(mapping) != list(range(1, n + 1)):
            raise InvalidSolution("assignment must be total over 1..n_courses")
        return cls(tuple(mapping[c] for c in range(1, n + 1)))

    def as_dict(self) -> dict[int, int]:
        return {c: p for c, p in enumerate(self.assignment, start=1)}


def _check_range(inst: BacpInstance, sol: BacpSolution) -> None:
    if len(sol.assignment) != inst.n_courses:
        raise InvalidSolution(
            f"solution covers {len(sol.assignment)} courses, instance has {inst.n_courses}"
        )
    for c, p in enumerate(sol.assignment, start=1):
        if not 1 <= p <= inst.n_periods:
            raise InvalidSolution(f"course {c} assigned to period {p} outside 1..{inst.n_periods}")


def validate_solution(inst: BacpInstance, sol: BacpSolution) -> bool:
    """True iff ``sol`` satisfies every original (unstreamlined) constraint.

    Raises InvalidSolution when ``sol`` is not a total function into the
    instance's period range.
    """
    _check_range(inst, sol)
    return _feasible(inst, sol.assignment)


def _feasible(inst: BacpInstance, assignment: Sequence[int]) -> bool:
    for a, b in inst.prerequisite:
        if not assignment[a - 1] < assignment[b - 1]:
            return False
    loads = [0] * (inst.n_periods + 1)
    counts = [0] * (inst.n_periods + 1)
    for c, p in enumerate(assignment):
        loads[p] += inst.course_load[c]
        counts[p] += 1
    for p in inst.periods:
        if not inst.load_per_period_lb <= loads[p] <= inst.load_per_period_ub:
            return False
        if not inst.courses_per_period_lb <= counts[p] <= inst.courses_per_period_ub:
            return False
    return True


def _iter_assignments(inst: BacpInstance) -> Iterator[tuple[int, ...]]:
    return itertools.product(inst.periods, repeat=inst.n_courses)


def enumerate_solutions(
    inst: BacpInstance, limit: int | None = None, *, log_cap: float = ENUMERATION_LOG_CAP
) -> list[BacpSolution]:
    """Brute-force all solutions in lexicographic assignment order."""
    if inst.n_courses * math.log(inst.n_periods) > log_cap:
        raise EnumerationTooLarge(
            f"{inst.n_periods}^{inst.n_courses} assignments exceed the enumeration cap"
        )
    out = []
    for assignment in _iter_assignments(inst):
        if limit is not None and len(out) >= limit:
            break
        if _feasible(inst, assignment):
            out.append(BacpSolution(assignment))
    return out


def load_instance(path: str | Path) -> BacpInstance:
    with open(path, encoding="utf-8") as fh:
        return BacpInstance.from_json(json.load(fh))


def save_instance(inst: BacpInstance, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(inst.to_json(), fh, indent=1, sort_keys=True)
        fh.write("\n")
