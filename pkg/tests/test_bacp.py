import itertools
import json

import pytest

from streamfolio.bacp import (
    BacpInstance,
    BacpSolution,
    EnumerationTooLarge,
    InvalidSolution,
    enumerate_solutions,
    load_instance,
    save_instance,
    validate_solution,
)


def test_unique_solution_of_tiny(tiny):
    assert validate_solution(tiny, BacpSolution((1, 2)))
    # brute force over all four total functions
    valid = [a for a in itertools.product((1, 2), repeat=2) if validate_solution(tiny, BacpSolution(a))]
    assert valid == [(1, 2)]


def test_prerequisite_violation(tiny):
    assert not validate_solution(tiny, BacpSolution((2, 1)))


def test_vacuous_lower_bounds():
    inst = BacpInstance(3, 2, 0, 10, 0, 3, (), (2, 3, 4))
    for a in itertools.product((1, 2), repeat=3):
        assert validate_solution(inst, BacpSolution(a))


def test_out_of_range_is_rejected_not_false(tiny):
    with pytest.raises(InvalidSolution):
        validate_solution(tiny, BacpSolution((1, 3)))
    with pytest.raises(InvalidSolution):
        validate_solution(tiny, BacpSolution((1,)))


def test_enumerate_tiny(tiny):
    assert enumerate_solutions(tiny, limit=10) == [BacpSolution((1, 2))]


def test_enumerate_unsat_on_total_load():
    inst = BacpInstance(2, 2, 5, 9, 0, 2, (), (1, 1))
    assert enumerate_solutions(inst) == []


def test_enumerate_unconstrained_is_every_function():
    inst = BacpInstance(2, 2, 0, 100, 0, 100, (), (1, 1))
    sols = enumerate_solutions(inst)
    assert [s.assignment for s in sols] == [(1, 1), (1, 2), (2, 1), (2, 2)]


def test_enumerate_limit_and_guard():
    inst = BacpInstance(2, 2, 0, 100, 0, 100, (), (1, 1))
    assert len(enumerate_solutions(inst, limit=3)) == 3
    big = BacpInstance(30, 6, 0, 1000, 0, 30, (), (1,) * 30)
    with pytest.raises(EnumerationTooLarge):
        enumerate_solutions(big)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(load_per_period_lb=3, load_per_period_ub=2),
        dict(courses_per_period_lb=3, courses_per_period_ub=1),
        dict(prerequisite=((1, 1),)),
        dict(prerequisite=((1, 5),)),
        dict(course_load=(1,)),
    ],
)
def test_instance_invariants(kwargs):
    base = dict(
        n_courses=2,
        n_periods=2,
        load_per_period_lb=0,
        load_per_period_ub=3,
        courses_per_period_lb=0,
        courses_per_period_ub=2,
        prerequisite=(),
        course_load=(1, 1),
    )
    base.update(kwargs)
    with pytest.raises(ValueError):
        BacpInstance(**base)


def test_content_addressed_ids(tiny):
    again = BacpInstance(2, 2, 1, 1, 1, 1, ((1, 2),), (1, 1), seed=99)
    assert again.id == tiny.id
    other = BacpInstance(2, 2, 1, 1, 1, 2, ((1, 2),), (1, 1))
    assert other.id != tiny.id


def test_json_round_trip(tmp_path, tiny):
    path = tmp_path / "i.json"
    save_instance(tiny, path)
    doc = json.loads(path.read_text())
    for key in (
        "n_courses",
        "n_periods",
        "load_per_period_lb",
        "load_per_period_ub",
        "courses_per_period_lb",
        "courses_per_period_ub",
        "prerequisite",
        "course_load",
    ):
        assert key in doc
    assert load_instance(path) == tiny
    doc["id"] = "bacp-0000"
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        load_instance(path)
