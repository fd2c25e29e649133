"""Dominance-based multi-objective MCTS over the streamliner lattice.

Each lattice node is a streamliner set; its children add one compatible
candidate. A simulation races the node's set through the model levels and
offers every surviving recipe's reward vector to a Pareto archive. The raw
reward is 1 when the archive changed and is accumulated with exponential
discounting, since the archive keeps moving underneath older rewards.

Several rounds are run in the style of Hydra: each round measures search
reduction against the best per-instance cost the portfolio reached so far.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .kernel import Status
from .models import DEFAULT_RECIPE
from .racing import RaceConfig, RaceReport, derive_seed, run_levels
from .streamliners import Streamliner, StreamlinerSet, conflicts

__all__ = [
    "RewardVector",
    "dominates",
    "ArchiveEntry",
    "ParetoArchive",
    "LatticeNode",
    "MctsConfig",
    "Mcts",
    "uct_score",
    "reward_vector",
    "Portfolio",
    "multi_round",
    "per_instance_reduce",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class RewardVector:
    applicability: float
    search_reduction: float

    def as_tuple(self) -> tuple[float, float]:
        return (self.applicability, self.search_reduction)


def dominates(x: Sequence[float] | RewardVector, y: Sequence[float] | RewardVector) -> bool:
    """Pareto dominance for maximised objectives."""
    a = x.as_tuple() if isinstance(x, RewardVector) else tuple(x)
    b = y.as_tuple() if isinstance(y, RewardVector) else tuple(y)
    return all(p >= q for p, q in zip(a, b)) and any(p > q for p, q in zip(a, b))


@dataclass
class ArchiveEntry:
    ss_key: str
    recipe: str
    vector: RewardVector
    statuses: dict[str, str]
    costs: dict[str, int]
    round: int = 1

    @property
    def ident(self) -> tuple[str, str, int]:
        return (self.ss_key, self.recipe, self.round)

    def solved_cost(self, inst: str) -> float:
        return self.costs[inst] if self.statuses.get(inst) == Status.SAT.value else math.inf


class ParetoArchive:
    """Antichain of entries under Pareto dominance of their vectors."""

    def __init__(self) -> None:
        self.entries: list[ArchiveEntry] = []

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def insert(self, entry: ArchiveEntry) -> bool:
        """Offer an entry; True when it was kept (the archive changed)."""
        v = entry.vector
        for e in self.entries:
            if dominates(e.vector, v):
                return False
            if e.ident == entry.ident and e.vector == v:
                return False
        self.entries = [e for e in self.entries if not dominates(v, e.vector) and e.ident != entry.ident]
        self.entries.append(entry)
        return True

    def vectors(self) -> list[RewardVector]:
        return [e.vector for e in self.entries]

    def is_antichain(self) -> bool:
        return not any(dominates(a.vector, b.vector) for a in self.entries for b in self.entries if a is not b)


@dataclass
class LatticeNode:
    key: StreamlinerSet
    visits: int = 0
    value: float = 0.0
    children: list[StreamlinerSet] = field(default_factory=list)
    untried: list[int] | None = None
    exhausted: bool = False

    @property
    def expanded(self) -> bool:
        return self.untried is not None and not self.untried


@dataclass(frozen=True)
class MctsConfig:
    uct_c: float = math.sqrt(2)
    delta: float = 0.95
    budget: int = 100
    rounds: int = 3
    max_level: int = 4
    max_combination_size: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.uct_c <= 0:
            raise ValueError("uct constant must be positive")
        if not 0 < self.delta <= 1:
            raise ValueError("discount must lie in (0, 1]")
        if not 1 <= self.max_level <= 4:
            raise ValueError("max_level must be in 1..4")
        if self.rounds < 1 or self.budget < 0:
            raise ValueError("rounds must be >= 1 and budget >= 0")

    def to_json(self) -> dict:
        return {
            "uct_c": self.uct_c,
            "delta": self.delta,
            "budget": self.budget,
            "rounds": self.rounds,
            "max_level": self.max_level,
            "max_combination_size": self.max_combination_size,
            "seed": self.seed,
        }


def uct_score(value: float, visits: int, parent_visits: int, c: float) -> float:
    if visits == 0:
        return math.inf
    return value / visits + c * math.sqrt(math.log(parent_visits) / visits)


def reward_vector(
    statuses: Mapping[str, Status | str],
    costs: Mapping[str, int],
    reference: Mapping[str, int],
    known_sat: Iterable[str] = (),
) -> RewardVector | None:
    """Applicability and mean search reduction over the SAT instances.

    A capped run counts as SAT on instances where another recipe proved the
    set satisfiable, with the cap as its cost. With no SAT instance the
    reduction is undefined and there is no vector: such a combination solves
    nothing, and scoring it 0 would let it beat every entry slower than a
    later round's reference.
    """
    sat_elsewhere = set(known_sat)
    sat = [
        i
        for i in reference
        if Status(statuses.get(i, Status.CAPPED)) is Status.SAT
        or (Status(statuses.get(i, Status.CAPPED)) is Status.CAPPED and i in sat_elsewhere)
    ]
    if not sat:
        return None
    app = len(sat) / len(reference)
    red = sum((reference[i] - costs[i]) / reference[i] for i in sat) / len(sat)
    return RewardVector(app, red)


def _effective_statuses(statuses, known_sat) -> dict[str, str]:
    out = {}
    for i, s in statuses.items():
        s = Status(s)
        if s is Status.CAPPED and i in known_sat:
            out[i] = Status.SAT.value
        else:
            out[i] = s.value
    return out


class Mcts:
    """One round of search; the coordinator owns tree and archive."""

    def __init__(
        self,
        candidates: Sequence[Streamliner],
        training: Sequence[str],
        baseline: Mapping[str, int],
        reference: Mapping[str, int],
        evaluator,
        cfg: MctsConfig,
        race_cfg: RaceConfig,
        round_no: int = 1,
    ) -> None:
        self.candidates = {s.id: s for s in candidates}
        self.ids = sorted(self.candidates)
        self.training = list(training)
        self.baseline = dict(baseline)
        self.reference = dict(reference)
        self.evaluator = evaluator
        self.cfg = cfg
        self.race_cfg = race_cfg
        self.round = round_no
        self.rng = random.Random(derive_seed(cfg.seed, "search", round_no))
        self.nodes: dict[StreamlinerSet, LatticeNode] = {}
        self.simulated: set[StreamlinerSet] = set()
        self.archive = ParetoArchive()
        self.offered: list[ArchiveEntry] = []
        self.trace: list[dict] = []
        self.race_logs: list = []
        self.root = self.node(StreamlinerSet())

    # lattice ---------------------------------------------------------
    def node(self, key: StreamlinerSet) -> LatticeNode:
        n = self.nodes.get(key)
        if n is None:
            n = self.nodes[key] = LatticeNode(key)
        return n

    def admissible(self, key: StreamlinerSet) -> list[int]:
        cap = self.cfg.max_combination_size
        if cap is not None and len(key) >= cap:
            return []
        members = [self.candidates[m] for m in key]
        return [
            s
            for s in self.ids
            if s not in key.members and not any(conflicts(self.candidates[s], m) for m in members)
        ]

    def _init(self, n: LatticeNode) -> None:
        if n.untried is None:
            n.untried = self.admissible(n.key)

    def _added(self, parent: LatticeNode, child: StreamlinerSet) -> int:
        (extra,) = set(child.members) - set(parent.key.members)
        return extra

    def _refresh_exhausted(self, n: LatticeNode) -> bool:
        self._init(n)
        if not n.untried and all(self.nodes[c].exhausted for c in n.children):
            n.exhausted = True
        return n.exhausted

    def select(self) -> list[LatticeNode]:
        """Descend by UCT until a node with an untried admissible child."""
        path = [self.root]
        n = self.root
        while True:
            self._init(n)
            if n.untried:
                return path
            live = [self.nodes[c] for c in n.children if not self.nodes[c].exhausted]
            if not live:
                n.exhausted = True
                return path
            best = max(
                live,
                key=lambda ch: (
                    uct_score(ch.value, ch.visits, max(n.visits, 1), self.cfg.uct_c),
                    -self._added(n, ch.key),
                ),
            )
            path.append(best)
            n = best

    def expand(self, n: LatticeNode) -> LatticeNode | None:
        self._init(n)
        if not n.untried:
            n.exhausted = n.exhausted or not n.children
            return None
        pick = n.untried.pop(self.rng.randrange(len(n.untried)))
        child_key = n.key.add(pick)
        child = self.node(child_key)
        n.children.append(child_key)
        return child

    # evaluation --------------------------------------------------------
    def simulate(self, key: StreamlinerSet) -> list[ArchiveEntry]:
        reports: list[RaceReport] = run_levels(
            key.key, self.training, self.baseline, self.race_cfg, self.evaluator, self.cfg.max_level
        )
        self.race_logs.extend(reports)
        known_sat: set[str] = set()
        for rep in reports:
            known_sat |= rep.sat_instances
        final = reports[-1]
        out = []
        for recipe in final.survivors:
            res = final.results[recipe]
            vec = reward_vector(res.statuses, res.costs, self.reference, known_sat)
            if vec is None:
                continue
            out.append(
                ArchiveEntry(
                    key.key,
                    recipe,
                    vec,
                    _effective_statuses(res.statuses, known_sat),
                    dict(res.costs),
                    self.round,
                )
            )
        return out

    def backpropagate(self, path: Sequence[LatticeNode], entries: Sequence[ArchiveEntry]) -> int:
        changed = False
        for e in entries:
            self.offered.append(e)
            changed |= self.archive.insert(e)
        r = 1 if changed else 0
        for n in path:
            n.visits += 1
            n.value = n.value * self.cfg.delta + r
        return r

    def step(self, iteration: int) -> bool:
        path = self.select()
        leaf = self.expand(path[-1])
        if leaf is None:
            for n in reversed(path):
                self._refresh_exhausted(n)
            if self.root.exhausted:
                return False
            return True
        if leaf.key in self.simulated:
            # reached again through another parent: link only
            for n in reversed(path):
                self._refresh_exhausted(n)
            return True
        self.simulated.add(leaf.key)
        path.append(leaf)
        entries = self.simulate(leaf.key)
        r = self.backpropagate(path, entries)
        self._init(leaf)
        for n in reversed(path):
            self._refresh_exhausted(n)
        self.trace.append(
            {
                "round": self.round,
                "iteration": iteration,
                "set": leaf.key.key,
                "rewards": ";".join(
                    f"{e.recipe}:{e.vector.applicability:.6f}/{e.vector.search_reduction:.6f}" for e in entries
                ),
                "reward": r,
                "archive_size": len(self.archive),
            }
        )
        log.info("round %d sim %d: %s -> %d entries, archive %d", self.round, iteration, leaf.key.key,
                 len(entries), len(self.archive))
        return True

    def run(self) -> ParetoArchive:
        it = 0
        guard = 0
        while it < self.cfg.budget and not self.root.exhausted:
            before = len(self.trace)
            if not self.step(it + 1):
                break
            if len(self.trace) > before:
                it += 1
                guard = 0
            else:
                guard += 1
                if guard > 10 * (len(self.ids) + 1) ** 2:
                    break
        return self.archive


# portfolio -------------------------------------------------------------


def per_instance_reduce(entries: Sequence[ArchiveEntry], instances: Sequence[str]) -> list[ArchiveEntry]:
    """Drop entries another entry matches or beats on every instance.

    Effective cost is the cost on SAT instances and infinity elsewhere;
    among identical profiles the first entry is kept.
    """
    prof = [tuple(e.solved_cost(i) for i in instances) for e in entries]
    keep = []
    for a, pa in enumerate(prof):
        dominated = False
        for b, pb in enumerate(prof):
            if a == b:
                continue
            le = all(x <= y for x, y in zip(pb, pa))
            if le and (any(x < y for x, y in zip(pb, pa)) or b < a):
                dominated = True
                break
        if not dominated:
            keep.append(entries[a])
    return keep


@dataclass
class Portfolio:
    entries: list[ArchiveEntry]
    training: list[str]
    baseline: dict[str, int]
    round_archives: list[list[ArchiveEntry]]
    mode: str = "mm"
    candidates: dict[int, Streamliner] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        def chain(key: str) -> list[dict]:
            ss = StreamlinerSet.parse(key)
            return [self.candidates[m].to_json() for m in ss if m in self.candidates]

        def entry(e: ArchiveEntry) -> dict:
            return {
                "streamliner_set": e.ss_key,
                "streamliners": chain(e.ss_key),
                "recipe": e.recipe,
                "reward": {"applicability": e.vector.applicability, "search_reduction": e.vector.search_reduction},
                "round": e.round,
                "training": {i: {"status": e.statuses[i], "cost": e.costs[i]} for i in self.training},
            }

        return {
            "format": "streamfolio.portfolio/1",
            "mode": self.mode,
            "training_instances": list(self.training),
            "baseline": {i: self.baseline[i] for i in self.training},
            "entries": [entry(e) for e in self.entries],
            "round_archives": [
                [{"streamliner_set": e.ss_key, "recipe": e.recipe,
                  "reward": {"applicability": e.vector.applicability, "search_reduction": e.vector.search_reduction}}
                 for e in arch]
                for arch in self.round_archives
            ],
            "config": self.config,
        }

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Portfolio":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        entries = [
            ArchiveEntry(
                e["streamliner_set"],
                e["recipe"],
                RewardVector(e["reward"]["applicability"], e["reward"]["search_reduction"]),
                {i: v["status"] for i, v in e["training"].items()},
                {i: v["cost"] for i, v in e["training"].items()},
                e["round"],
            )
            for e in doc["entries"]
        ]
        archives = [
            [
                ArchiveEntry(a["streamliner_set"], a["recipe"],
                             RewardVector(a["reward"]["applicability"], a["reward"]["search_reduction"]),
                             {}, {}, n + 1)
                for a in arch
            ]
            for n, arch in enumerate(doc["round_archives"])
        ]
        return cls(
            entries,
            doc["training_instances"],
            doc["baseline"],
            archives,
            doc.get("mode", "mm"),
            {},
            doc.get("config", {}),
        )


def baseline_entry(training: Sequence[str], baseline: Mapping[str, int]) -> ArchiveEntry:
    return ArchiveEntry(
        StreamlinerSet().key,
        DEFAULT_RECIPE.name,
        RewardVector(1.0, 0.0),
        {i: Status.SAT.value for i in training},
        {i: baseline[i] for i in training},
        0,
    )


def multi_round(
    candidates: Sequence[Streamliner],
    training: Sequence[str],
    baseline: Mapping[str, int],
    evaluator,
    cfg: MctsConfig,
    race_cfg: RaceConfig,
    mode: str = "mm",
) -> tuple[Portfolio, list[Mcts]]:
    """Hydra-style rounds; returns the portfolio and each round's search."""
    training = list(training)
    combined: list[ArchiveEntry] = []
    searches: list[Mcts] = []
    reference = {i: baseline[i] for i in training}
    for t in range(1, cfg.rounds + 1):
        search = Mcts(candidates, training, baseline, reference, evaluator, cfg, race_cfg, t)
        search.run()
        searches.append(search)
        combined.extend(search.archive.entries)
        best = {}
        for i in training:
            costs = [e.solved_cost(i) for e in combined]
            best[i] = min([baseline[i], *costs])
        reference = {i: int(best[i]) if best[i] > 0 else 1 for i in training}
        log.info("round %d: archive %d, references updated", t, len(search.archive))
    entries = per_instance_reduce(combined, training) if combined else []
    if not entries:
        entries = [baseline_entry(training, baseline)]
    port = Portfolio(
        entries,
        training,
        {i: baseline[i] for i in training},
        [list(s.archive.entries) for s in searches],
        mode,
        {s.id: s for s in candidates},
        {"mcts": cfg.to_json(), "race": race_cfg.to_json()},
    )
    return port, searches


TRACE_COLUMNS = ("round", "iteration", "set", "rewards", "reward", "archive_size")


def write_trace(searches: Iterable[Mcts], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for s in searches:
            for row in s.trace:
                w.writerow([row[c] for c in TRACE_COLUMNS])
