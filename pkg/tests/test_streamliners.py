import itertools
import random

import pytest

from streamfolio.bacp import BacpInstance, BacpSolution, enumerate_solutions
from streamfolio.streamliners import (
    CandidateConfig,
    StreamlinerRule,
    StreamlinerSet,
    conflicts,
    generate_candidates,
    satisfies,
    streamliner_semantics,
    value_set,
)

from conftest import random_small_instance


def by_key(cands):
    return {s.key: s for s in cands}


def free_instance(C, P):
    return BacpInstance(C, P, 0, 1000, 0, C, (), (1,) * C)


def test_candidate_descriptions_cover_known_streamliners():
    descriptions = [s.description for s in generate_candidates()]
    assert "curr is monotonically increasing" in descriptions
    assert "half of the range values of curr are even" in descriptions
    assert "half of the courses map to even periods" in descriptions


def test_generation_is_deterministic():
    a = generate_candidates()
    b = generate_candidates()
    assert [(s.id, s.key) for s in a] == [(s.id, s.key) for s in b]
    assert [s.id for s in a] == list(range(len(a)))


def test_pruning_defined_keeps_ids_stable():
    pruned = generate_candidates()
    full = generate_candidates(config=CandidateConfig(prune_defined=False))
    assert len(full) > len(pruned)
    assert [s.key for s in full[: len(pruned)]] == [s.key for s in pruned]
    assert all(s.chain[1].name == "defined" for s in full[len(pruned):])


def test_softness_only_on_starred_rules():
    StreamlinerRule("most", 2)
    with pytest.raises(ValueError):
        StreamlinerRule("half", 1)
    with pytest.raises(ValueError):
        StreamlinerRule("approxHalf")
    for s in generate_candidates():
        for rule in s.chain:
            assert (rule.softness is not None) == (rule.name in {"most", "approxHalf", "allBut", "prefix", "postfix"})


def test_value_sets():
    assert value_set("even", 8) == {2, 4, 6, 8}
    assert value_set("odd", 5) == {1, 3, 5}
    assert value_set("lowerHalf", 7) == {1, 2, 3, 4}
    assert value_set("upperHalf", 7) == {5, 6, 7}
    assert value_set("lowerHalf", 8) | value_set("upperHalf", 8) == set(range(1, 9))


def test_half_even_over_four_courses_is_exactly_two():
    s = by_key(generate_candidates())["half.even"]
    (prim,) = streamliner_semantics(s, free_instance(4, 4))
    assert (prim.lo, prim.hi) == (2, 2)


@pytest.mark.parametrize(
    "key,assignment,expected",
    [
        ("monotonicIncreasing", (1, 1, 2), True),
        ("monotonicIncreasing", (2, 1), False),
        ("all.even", (2, 4), True),
        ("all.even", (2, 3), False),
        ("largestFirst", (3, 1, 3), True),
        ("smallestLast", (3, 2, 1), True),
        ("smallestLast", (1, 2, 3), False),
        # range {1,2,3} holds one even value, which is floor(3/2)
        ("half.range.even", (1, 2, 2, 3), True),
        ("half.range.even", (1, 3, 1, 3), False),
    ],
)
def test_satisfies_examples(key, assignment, expected):
    s = by_key(generate_candidates())[key]
    inst = free_instance(len(assignment), 4)
    assert satisfies(s, inst, BacpSolution(assignment)) is expected


def test_prefix_defaults_to_half_the_courses():
    s = by_key(generate_candidates())["prefix(C/2).even"]
    inst = free_instance(5, 4)
    assert satisfies(s, inst, BacpSolution((2, 4, 1, 1, 1)))
    assert not satisfies(s, inst, BacpSolution((2, 3, 1, 1, 1)))


def test_defined_rules_are_constant_over_course_numbers():
    cands = generate_candidates(config=CandidateConfig(prune_defined=False))
    half_even = by_key(cands)["half.defined.even"]
    all_even = by_key(cands)["all.defined.even"]
    inst = free_instance(3, 3)
    for a in itertools.product((1, 2, 3), repeat=3):
        assert satisfies(half_even, inst, BacpSolution(a))
        assert not satisfies(all_even, inst, BacpSolution(a))


def test_streamliners_only_restrict():
    rng = random.Random(3)
    cands = generate_candidates()
    for _ in range(30):
        inst = random_small_instance(rng)
        sols = enumerate_solutions(inst)
        for s in cands:
            kept = [x for x in sols if satisfies(s, inst, x)]
            assert set(x.assignment for x in kept) <= set(x.assignment for x in sols)


def test_streamliner_set_is_canonical():
    a = StreamlinerSet.of([5, 2, 9])
    assert a.members == (2, 5, 9)
    assert a.key == "2+5+9"
    assert StreamlinerSet.parse(a.key) == a
    assert StreamlinerSet().key == "none"
    with pytest.raises(ValueError):
        StreamlinerSet.of([1, 1])


def test_conflicts():
    c = by_key(generate_candidates())
    assert conflicts(c["all.even"], c["all.odd"])
    assert conflicts(c["all.lowerHalf"], c["all.range.upperHalf"])
    assert conflicts(c["all.even"], c["allBut(1).even"])
    assert conflicts(c["prefix(C/2).even"], c["prefix(C/2).odd"])
    assert not conflicts(c["all.even"], c["half.lowerHalf"])
    assert not conflicts(c["half.even"], c["approxHalf(1).odd"])
    assert not conflicts(c["monotonicIncreasing"], c["monotonicDecreasing"])


def test_conflicting_pairs_have_no_solutions_on_small_instances():
    cands = generate_candidates()
    pairs = [(a, b) for a, b in itertools.combinations(cands, 2) if conflicts(a, b)]
    assert pairs
    for C in range(2, 5):
        for P in range(1, 4):
            inst = free_instance(C, P)
            sols = enumerate_solutions(inst)
            for a, b in pairs:
                assert not any(satisfies(a, inst, x) and satisfies(b, inst, x) for x in sols)
