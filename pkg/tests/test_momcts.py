import itertools
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamfolio.kernel import Status
from streamfolio.models import default_candidates
from streamfolio.momcts import (
    ArchiveEntry,
    LatticeNode,
    Mcts,
    MctsConfig,
    ParetoArchive,
    Portfolio,
    RewardVector,
    dominates,
    multi_round,
    per_instance_reduce,
    reward_vector,
    uct_score,
)
from streamfolio.racing import RaceConfig
from streamfolio.streamliners import StreamlinerSet

from landscapes import BASE, designated_landscape, training_ids, two_niche_costs, vector_table

CANDS = default_candidates()


def entry(vec, key="k", recipe="compact", rnd=1):
    return ArchiveEntry(key, recipe, RewardVector(*vec), {}, {}, rnd)


def brute_front(vectors):
    return [v for v in vectors if not any(dominates(w, v) for w in vectors)]


def test_config_defaults():
    cfg = MctsConfig()
    assert cfg.uct_c == pytest.approx(math.sqrt(2))
    assert cfg.delta == 0.95
    assert cfg.rounds == 3
    assert cfg.max_level == 4
    with pytest.raises(ValueError):
        MctsConfig(delta=0)
    with pytest.raises(ValueError):
        MctsConfig(uct_c=0)


def test_uct_examples():
    assert uct_score(0.5, 1, 10, math.sqrt(2)) == pytest.approx(0.5 + math.sqrt(2) * math.sqrt(math.log(10)))
    assert uct_score(0.5, 1, 10, math.sqrt(2)) == pytest.approx(2.646, abs=1e-3)
    assert uct_score(0.0, 0, 10, 1.0) == math.inf


def test_dominance():
    assert dominates((0.9, 0.9), (0.8, 0.2))
    assert not dominates((0.5, 0.5), (0.5, 0.5))
    assert not dominates((0.8, 0.2), (0.2, 0.8))


def test_archive_examples():
    arch = ParetoArchive()
    assert arch.insert(entry((0.8, 0.2), "a"))
    assert arch.insert(entry((0.2, 0.8), "b"))
    assert arch.insert(entry((0.5, 0.5), "c"))
    assert not arch.insert(entry((0.1, 0.1), "d"))
    assert arch.insert(entry((0.9, 0.9), "e"))
    assert [e.ss_key for e in arch] == ["e"]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(-3, 6)), min_size=1, max_size=30))
def test_archive_equals_brute_force_front(raw):
    vecs = [(a / 6, r / 6) for a, r in raw]
    arch = ParetoArchive()
    for n, v in enumerate(vecs):
        arch.insert(entry(v, key=str(n)))
        assert arch.is_antichain()
    got = sorted((e.vector.as_tuple(), e.ss_key) for e in arch)
    front = sorted((v, str(n)) for n, v in enumerate(vecs) if not any(dominates(w, v) for w in vecs))
    assert got == front


def test_reward_vector_definitions():
    ref = {"a": 100, "b": 100}
    assert reward_vector({"a": "SAT", "b": "SAT"}, {"a": 50, "b": 50}, ref) == RewardVector(1.0, 0.5)
    assert reward_vector({"a": "UNSAT", "b": "UNSAT"}, {"a": 5, "b": 5}, ref) is None
    assert reward_vector({"a": "SAT", "b": "CAPPED"}, {"a": 80, "b": 200}, ref) == RewardVector(0.5, 0.2)
    # capped but known satisfiable through another recipe
    v = reward_vector({"a": "SAT", "b": "CAPPED"}, {"a": 80, "b": 200}, ref, known_sat={"b"})
    assert v == RewardVector(1.0, (0.2 - 1.0) / 2)
    # a combination slower than the reference keeps its negative reduction
    assert reward_vector({"a": "SAT"}, {"a": 50}, {"a": 40}).search_reduction == pytest.approx(-0.25)


def make_search(vector_of, seed=0, budget=50, cands=CANDS[:20], max_level=1, **kw):
    ids = training_ids()
    ev = vector_table(vector_of, ids)
    base = {i: BASE for i in ids}
    cfg = MctsConfig(budget=budget, rounds=1, max_level=max_level, seed=seed, **kw)
    return Mcts(cands, ids, base, base, ev, cfg, RaceConfig())


def test_root_children_and_conflicts():
    s = make_search(lambda ss: (0.5, 0.1))
    assert len(s.admissible(StreamlinerSet())) == 20
    keys = {c.key: c.id for c in CANDS}
    node = StreamlinerSet.of([keys["all.even"]])
    s.candidates = {c.id: c for c in CANDS}
    s.ids = sorted(s.candidates)
    assert keys["all.odd"] not in s.admissible(node)
    capped = make_search(lambda ss: (0.5, 0.1), max_combination_size=1)
    assert capped.admissible(StreamlinerSet.of([0])) == []


def test_unvisited_child_is_selected_and_ties_go_to_lower_id():
    s = make_search(lambda ss: (0.5, 0.1), cands=CANDS[:3])
    root = s.root
    s._init(root)
    root.untried = []
    for sid in (2, 0, 1):
        root.children.append(StreamlinerSet.of([sid]))
        s.node(StreamlinerSet.of([sid]))
    root.visits = 3
    for sid in (0, 1, 2):
        n = s.nodes[StreamlinerSet.of([sid])]
        n.visits, n.value = 1, 0.5
    s.nodes[StreamlinerSet.of([2])].visits = 0
    assert s.select()[-1].key == StreamlinerSet.of([2])
    s.nodes[StreamlinerSet.of([2])].visits = 1
    assert s.select()[-1].key == StreamlinerSet.of([0])


def test_transposition_shares_records():
    s = make_search(lambda ss: (0.5, 0.1), cands=CANDS[:3])
    a = s.node(StreamlinerSet.of([0]).add(1))
    b = s.node(StreamlinerSet.of([1]).add(0))
    assert a is b
    s.backpropagate([a], [entry((0.4, 0.4))])
    assert s.nodes[StreamlinerSet.of([0, 1])].visits == 1


def test_backpropagation_discounts():
    s = make_search(lambda ss: (0.5, 0.1), cands=CANDS[:3])
    n = LatticeNode(StreamlinerSet.of([0]))
    assert s.backpropagate([n], [entry((0.5, 0.5), "x")]) == 1
    assert s.backpropagate([n], [entry((0.1, 0.1), "y")]) == 0
    assert n.visits == 2
    assert n.value == pytest.approx(1 * 0.95 + 0)


def test_archive_matches_offered_vectors_in_a_run():
    s = make_search(lambda ss: (0.2 + 0.6 * random.Random(ss.key).random(), random.Random(ss.key + "r").random()),
                    budget=60)
    s.run()
    offered = [e.vector for e in s.offered]
    assert sorted(s.archive.vectors()) == sorted(set(brute_front(offered))) or sorted(
        s.archive.vectors()
    ) == sorted(brute_front(offered))
    assert s.archive.is_antichain()


def test_search_is_deterministic():
    def v(ss):
        r = random.Random(ss.key)
        return (r.random(), r.random())

    a = make_search(v, seed=3, budget=40)
    b = make_search(v, seed=3, budget=40)
    a.run()
    b.run()
    assert a.trace == b.trace
    assert {k: (n.visits, n.value) for k, n in a.nodes.items()} == {k: (n.visits, n.value) for k, n in b.nodes.items()}


def test_exhausted_lattice_stops_early():
    s = make_search(lambda ss: (0.5, 0.1), cands=CANDS[:3], budget=100)
    s.run()
    # 3 singletons + 3 pairs + 1 triple at most
    assert len(s.trace) <= 7
    assert s.root.exhausted


def test_designated_pair_found():
    hits = 0
    for seed in range(3):
        (x, y), vector_of = designated_landscape(CANDS[:20], seed)
        s = make_search(vector_of, seed=seed, budget=200)
        s.run()
        keys = {e.ss_key for e in s.archive}
        hits += StreamlinerSet.of([x, y]).key in keys
    assert hits >= 2


def test_rounds_complement_niches():
    (a, b), ids, base, ev = two_niche_costs(CANDS[:6])
    cfg1 = MctsConfig(budget=30, rounds=1, max_level=1, seed=1)
    cfg2 = MctsConfig(budget=30, rounds=2, max_level=1, seed=1)
    p1, _ = multi_round(CANDS[:6], ids, base, ev, cfg1, RaceConfig())
    p2, s2 = multi_round(CANDS[:6], ids, base, ev, cfg2, RaceConfig())
    assert {e.ss_key for e in p1.entries} == {str(a)}
    assert {e.ss_key for e in p2.entries} == {str(a), str(b)}
    # round 2 measures b against round-1 references on niche B
    vb = next(e for e in s2[1].archive if e.ss_key == str(b)).vector
    assert vb.applicability == 0.5
    assert vb.search_reduction == pytest.approx((500 - 400) / 500)
    for arch in p2.round_archives:
        assert not any(dominates(x.vector, y.vector) for x in arch for y in arch)


def test_empty_archive_falls_back_to_baseline():
    ids = training_ids(4)
    base = {i: BASE for i in ids}
    ev = vector_table(lambda ss: (0.0, 0.0), ids)
    port, _ = multi_round(CANDS[:2], ids, base, ev, MctsConfig(budget=0, rounds=1, max_level=1), RaceConfig())
    assert [(e.ss_key, e.recipe) for e in port.entries] == [("none", "compact")]


def test_per_instance_reduce():
    e1 = ArchiveEntry("1", "compact", RewardVector(1, 0.5), {"a": "SAT", "b": "SAT"}, {"a": 10, "b": 10})
    e2 = ArchiveEntry("2", "compact", RewardVector(1, 0.4), {"a": "SAT", "b": "SAT"}, {"a": 20, "b": 5})
    e3 = ArchiveEntry("3", "compact", RewardVector(0.5, 0.6), {"a": "SAT", "b": "UNSAT"}, {"a": 12, "b": 5})
    e4 = ArchiveEntry("4", "compact", RewardVector(1, 0.5), {"a": "SAT", "b": "SAT"}, {"a": 10, "b": 10})
    assert [e.ss_key for e in per_instance_reduce([e1, e2, e3, e4], ["a", "b"])] == ["1", "2"]


def test_portfolio_round_trip(tmp_path):
    (a, b), ids, base, ev = two_niche_costs(CANDS[:6])
    port, _ = multi_round(CANDS[:6], ids, base, ev, MctsConfig(budget=20, rounds=2, max_level=1), RaceConfig())
    path = tmp_path / "portfolio.json"
    port.dump(path)
    back = Portfolio.load(path)
    assert [(e.ss_key, e.recipe, e.costs) for e in back.entries] == [(e.ss_key, e.recipe, e.costs) for e in port.entries]
    assert [[(e.ss_key, e.recipe, e.vector) for e in a] for a in back.round_archives] == [
        [(e.ss_key, e.recipe, e.vector) for e in a] for a in port.round_archives]
    assert path.read_text() == (port.dump(tmp_path / "again.json") or (tmp_path / "again.json").read_text())
