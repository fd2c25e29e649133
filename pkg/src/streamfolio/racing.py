"""Multi-model racing of one streamliner set over a training set.

Three mechanisms bound the work spent on poor recipes:

* rho-capping stops a run once it is ``rho`` times slower than the best
  cost already seen on that instance,
* paired t-tests at ``t_first`` and every ``t_next`` instances eliminate
  recipes significantly worse than the current best,
* adaptive capping bounds a new recipe by the cumulative pace of the elites
  carried over from the previous level.

Costs are deterministic node counts, so every evaluation is cached and the
rho-capped outcome of a run can be derived from any run at a larger cap.
"""
from __future__ import annotations

import csv
import hashlib
import logging
import math
import random
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np
from scipy import stats

from .bacp import BacpInstance
from .kernel import SolveBudget, SolveOutcome, Status, solve
from .models import RECIPES, ModelRecipe, compile_model, default_candidates, portfolio
from .streamliners import Streamliner, StreamlinerSet

__all__ = [
    "RaceConfig",
    "RaceAborted",
    "Evaluator",
    "CachedEvaluator",
    "KernelEvaluator",
    "SyntheticEvaluator",
    "CallRecord",
    "RaceLogRow",
    "RaceResult",
    "RaceReport",
    "rho_cap",
    "paired_t",
    "ttest_eliminate",
    "adaptive_bound",
    "run_race",
    "run_levels",
    "derive_seed",
    "write_race_log",
    "write_call_log",
    "LOG_COLUMNS",
]

log = logging.getLogger(__name__)


def derive_seed(root: int, *names: object) -> int:
    """Named, order-sensitive seed derivation from a root seed."""
    text = "/".join([str(root), *map(str, names)])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


@dataclass(frozen=True)
class RaceConfig:
    rho: float = 2.0
    alpha: float = 0.05
    t_first: int = 10
    t_next: int = 5
    global_cap: SolveBudget = SolveBudget(10**6)
    shuffle_seed: int = 0
    # per-instance cap relative to the unstreamlined baseline; None disables it
    baseline_cap_factor: float | None = None
    # read rho-domination as removal from the race instead of a per-instance stop
    rho_terminates_race: bool = False
    # pre-run new recipes in one batch per instance; only pays off with parallel jobs
    speculative: bool = True

    def __post_init__(self) -> None:
        if self.rho < 1:
            raise ValueError("rho must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.t_first < 2 or self.t_next < 1:
            raise ValueError("t_first must be >= 2 and t_next >= 1")
        if self.baseline_cap_factor is not None and self.baseline_cap_factor <= 0:
            raise ValueError("baseline_cap_factor must be positive")

    def to_json(self) -> dict:
        return {
            "rho": self.rho,
            "alpha": self.alpha,
            "t_first": self.t_first,
            "t_next": self.t_next,
            "global_cap": self.global_cap.node_cap,
            "shuffle_seed": self.shuffle_seed,
            "baseline_cap_factor": self.baseline_cap_factor,
            "rho_terminates_race": self.rho_terminates_race,
            "speculative": self.speculative,
        }


class RaceAborted(RuntimeError):
    pass


# evaluators ------------------------------------------------------------


class Evaluator(Protocol):
    def evaluate(self, ss_key: str, recipe: str, instance_id: str, cap: int) -> SolveOutcome: ...

    def evaluate_many(self, requests: Sequence[tuple[str, str, str, int]]) -> list[SolveOutcome]: ...


@dataclass(frozen=True)
class CallRecord:
    """One evaluation request and its answer."""

    ss_key: str
    recipe: str
    instance_id: str
    cap: int
    status: Status
    cost: int


def _capped(cap: int) -> SolveOutcome:
    return SolveOutcome(Status.CAPPED, cap)


class CachedEvaluator:
    """Cap-monotone result cache shared by every evaluator.

    For each (set, recipe, instance) it keeps either the solved outcome or
    the largest cap that was hit. A solved run of cost c answers every cap
    (CAPPED below c), a capped run answers every smaller cap.
    """

    def __init__(self) -> None:
        self._solved: dict[tuple[str, str, str], SolveOutcome] = {}
        self._capped_at: dict[tuple[str, str, str], int] = {}
        # physical runs, and every answered request (cached or not)
        self.calls: list[CallRecord] = []
        self.requests: list[CallRecord] = []

    # subclasses implement the physical run
    def _run_batch(self, requests: Sequence[tuple[str, str, str, int]]) -> list[SolveOutcome]:
        raise NotImplementedError

    def lookup(self, ss_key: str, recipe: str, instance_id: str, cap: int) -> SolveOutcome | None:
        key = (ss_key, recipe, instance_id)
        done = self._solved.get(key)
        if done is not None:
            return done if done.cost <= cap else _capped(cap)
        if cap <= self._capped_at.get(key, 0):
            return _capped(cap)
        return None

    def _store(self, req: tuple[str, str, str, int], out: SolveOutcome) -> SolveOutcome:
        ss_key, recipe, inst, cap = req
        key = (ss_key, recipe, inst)
        self.calls.append(CallRecord(ss_key, recipe, inst, cap, out.status, out.cost))
        if out.status is Status.CAPPED:
            self._capped_at[key] = max(cap, self._capped_at.get(key, 0))
            return _capped(cap)
        self._solved[key] = out
        return out

    def prime(self, ss_key: str, recipe: str, instance_id: str, outcome: SolveOutcome, cap: int) -> None:
        """Record a run made elsewhere (for example during generation) without logging a call."""
        key = (ss_key, recipe, instance_id)
        if outcome.status is Status.CAPPED:
            self._capped_at[key] = max(cap, self._capped_at.get(key, 0))
        else:
            self._solved[key] = outcome

    def evaluate(self, ss_key: str, recipe: str, instance_id: str, cap: int) -> SolveOutcome:
        return self.evaluate_many([(ss_key, recipe, instance_id, cap)])[0]

    def evaluate_many(self, requests: Sequence[tuple[str, str, str, int]]) -> list[SolveOutcome]:
        results: list[SolveOutcome | None] = [self.lookup(*r) for r in requests]
        pending: dict[tuple[str, str, str], tuple[str, str, str, int]] = {}
        for r, got in zip(requests, results):
            if got is None:
                k = r[:3]
                if k not in pending or pending[k][3] < r[3]:
                    pending[k] = r
        if pending:
            batch = list(pending.values())
            try:
                outs = self._run_batch(batch)
            except Exception as exc:
                raise RaceAborted(f"evaluation failed on {batch[0][:3]}: {exc}") from exc
            for r, out in zip(batch, outs):
                self._store(r, out)
            results = [got if got is not None else self.lookup(*r) for r, got in zip(requests, results)]
        for r, out in zip(requests, results):
            self.requests.append(CallRecord(r[0], r[1], r[2], r[3], out.status, out.cost))
        return results  # type: ignore[return-value]

    @property
    def n_calls(self) -> int:
        return len(self.calls)


def _kernel_job(args: tuple) -> SolveOutcome:
    inst, ss_key, recipe, cap, candidates = args
    model = compile_model(inst, StreamlinerSet.parse(ss_key), RECIPES[recipe], candidates)
    out = solve(model.csp, SolveBudget(cap))
    if out.status is Status.CAPPED:
        return _capped(cap)
    # keep only deterministic fields
    return SolveOutcome(out.status, out.cost, out.solution, 0.0, out.max_depth)


class KernelEvaluator(CachedEvaluator):
    """Compile with the model factory and solve with the in-repo kernel."""

    def __init__(
        self,
        instances: Iterable[BacpInstance],
        candidates: Sequence[Streamliner] | None = None,
        jobs: int = 1,
    ) -> None:
        super().__init__()
        self.instances = {i.id: i for i in instances}
        self.candidates = tuple(candidates) if candidates is not None else default_candidates()
        self.jobs = max(1, int(jobs))
        self._pool: ProcessPoolExecutor | None = None

    def add_instances(self, instances: Iterable[BacpInstance]) -> None:
        for i in instances:
            self.instances[i.id] = i

    def _run_batch(self, requests):
        jobs = [(self.instances[i], ss, r, cap, self.candidates) for ss, r, i, cap in requests]
        if self.jobs == 1 or len(jobs) == 1:
            return [_kernel_job(j) for j in jobs]
        if self._pool is None:
            self._pool = ProcessPoolExecutor(max_workers=self.jobs)
        return list(self._pool.map(_kernel_job, jobs))

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


class SyntheticEvaluator(CachedEvaluator):
    """Cost tables for search-logic tests.

    ``table(ss_key, recipe, instance_id)`` returns the uncapped outcome as
    ``(status, cost)``; statuses are ``Status`` values or their names.
    """

    def __init__(self, table: Callable[[str, str, str], tuple[Status | str, int]]) -> None:
        super().__init__()
        self.table = table

    @classmethod
    def from_mapping(
        cls, costs: Mapping[tuple[str, str, str], tuple[Status | str, int]], default=(Status.UNSAT, 1)
    ) -> "SyntheticEvaluator":
        return cls(lambda s, r, i: costs.get((s, r, i), default))

    def _run_batch(self, requests):
        outs = []
        for ss, r, i, cap in requests:
            status, cost = self.table(ss, r, i)
            status = Status(status)
            if status is Status.CAPPED or cost > cap:
                outs.append(_capped(cap))
            else:
                outs.append(SolveOutcome(status, int(cost)))
        return outs


# racing arithmetic -----------------------------------------------------


def rho_cap(best: int | None, rho: float, global_cap: int) -> int:
    """Cap at which a run is rho-dominated on one instance."""
    if best is None:
        return global_cap
    if best < 0:
        raise ValueError("best cost must be nonnegative")
    return min(global_cap, int(math.floor(rho * best + 1e-9)))


def paired_t(worse: Sequence[float], best: Sequence[float]) -> tuple[float, float]:
    """One-sided paired t-test that ``worse`` costs more than ``best``.

    Returns ``(t, p)``. Constant differences give ``(inf, 0)`` when positive
    and ``(0, 1)`` otherwise.
    """
    d = np.asarray(worse, dtype=float) - np.asarray(best, dtype=float)
    n = len(d)
    if n < 2:
        raise ValueError("need at least two paired observations")
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        return (math.inf, 0.0) if mean > 0 else (0.0 if mean == 0 else -math.inf, 1.0)
    t = mean / (sd / math.sqrt(n))
    return t, float(stats.t.sf(t, n - 1))


def ttest_eliminate(
    costs: Mapping[str, Sequence[float]], alpha: float, order: Sequence[str] | None = None
) -> tuple[str, dict[str, tuple[float, float]], list[str]]:
    """Paired tests of every survivor against the best mean.

    Returns the best recipe, the per-recipe ``(t, p)`` and the eliminated
    recipes. Ties on the best mean go to the earliest entry of ``order``.
    """
    names = list(order) if order is not None else list(costs)
    lengths = {len(costs[m]) for m in names}
    if len(lengths) != 1:
        raise ValueError("survivors must be paired on the same instances")
    best = min(names, key=lambda m: (float(np.mean(costs[m])), names.index(m)))
    if len(names) < 2:
        return best, {}, []
    threshold = alpha / (len(names) - 1)
    tests = {m: paired_t(costs[m], costs[best]) for m in names if m != best}
    out = [m for m in names if m != best and tests[m][1] < threshold]
    return best, tests, out


def adaptive_bound(elite_means_next: Sequence[float], k: int, mean_k: float, global_cap: int) -> int:
    """Elite-pace bound on the model's run on instance ``k + 1``.

    ``elite_means_next`` holds each elite's mean over the first ``k + 1``
    instances and ``mean_k`` the model's own mean over the first ``k``.
    """
    if not elite_means_next:
        return global_cap
    b = statistics.median(elite_means_next) * (k + 1) - (mean_k * k if k else 0.0)
    return max(0, int(math.floor(b + 1e-9)))


# race bookkeeping -------------------------------------------------------

LOG_COLUMNS = (
    "streamlinerSetKey",
    "level",
    "recipe",
    "instanceId",
    "cap",
    "status",
    "cost",
    "eliminationReason",
    "instanceIndex",
    "rhoCap",
    "adaptiveBound",
)


@dataclass
class RaceLogRow:
    ss_key: str
    level: int
    recipe: str
    instance_id: str
    cap: int
    status: str
    cost: int
    reason: str = ""
    index: int = 0
    rho_cap: int | None = None
    adaptive_bound: int | None = None

    def as_row(self) -> list:
        return [
            self.ss_key,
            self.level,
            self.recipe,
            self.instance_id,
            self.cap,
            self.status,
            self.cost,
            self.reason,
            self.index,
            "" if self.rho_cap is None else self.rho_cap,
            "" if self.adaptive_bound is None else self.adaptive_bound,
        ]


@dataclass
class RaceResult:
    recipe: str
    level: int
    order: list[str] = field(default_factory=list)
    statuses: dict[str, Status] = field(default_factory=dict)
    costs: dict[str, int] = field(default_factory=dict)
    eliminated: str | None = None
    eliminated_at: int | None = None

    @property
    def complete(self) -> bool:
        return self.eliminated is None and len(self.costs) == len(self.order)

    def mean(self, k: int | None = None) -> float:
        ids = self.order[: k if k is not None else len(self.costs)]
        return float(np.mean([self.costs[i] for i in ids])) if ids else 0.0

    def cost_vector(self, k: int) -> list[int]:
        return [self.costs[i] for i in self.order[:k]]


@dataclass
class RaceReport:
    ss_key: str
    level: int
    order: list[str]
    results: dict[str, RaceResult]
    log: list[RaceLogRow]
    sat_instances: set[str]
    tests: list[dict] = field(default_factory=list)

    @property
    def survivors(self) -> list[str]:
        return [m for m, r in self.results.items() if r.complete]

    @property
    def portfolio_size(self) -> int:
        return len(self.results)


def _shuffled(ids: Iterable[str], seed: int, ss_key: str, level: int) -> list[str]:
    order = sorted(ids)
    random.Random(derive_seed(seed, "shuffle", ss_key, level)).shuffle(order)
    return order


def _instance_cap(cfg: RaceConfig, baseline: Mapping[str, int] | None, inst: str) -> int:
    cap = cfg.global_cap.node_cap
    if cfg.baseline_cap_factor is not None and baseline and inst in baseline:
        cap = min(cap, max(1, int(math.ceil(cfg.baseline_cap_factor * baseline[inst]))))
    return cap


def run_race(
    ss_key: str,
    level: int,
    training: Sequence[str],
    baseline: Mapping[str, int] | None,
    cfg: RaceConfig,
    evaluator: Evaluator,
    elites: Mapping[str, RaceResult] | None = None,
    excluded: Iterable[str] = (),
    recipes: Sequence[ModelRecipe] | None = None,
) -> RaceReport:
    """Race the level's portfolio of recipes on one streamliner set.

    ``elites`` are the complete survivors of the previous level. Recipes in
    ``excluded`` do not take part.
    """
    if not 1 <= level <= 4:
        raise ValueError("level must be in 1..4")
    models = [r.name for r in (recipes if recipes is not None else portfolio(2 ** (level - 1)))]
    gone = set(excluded)
    models = [m for m in models if m not in gone]
    elite_names = [m for m in models if elites and m in elites]
    order = _shuffled(training, cfg.shuffle_seed, ss_key, level)
    results = {m: RaceResult(m, level, order) for m in models}
    rows: list[RaceLogRow] = []
    report = RaceReport(ss_key, level, order, results, rows, set())
    alive = list(models)

    if len(models) == 1 and not elite_names:
        # a lone model has nothing to race against: one batch over every instance
        m = models[0]
        reqs = [(ss_key, m, i, _instance_cap(cfg, baseline, i)) for i in order]
        for k, (req, out) in enumerate(zip(reqs, evaluator.evaluate_many(reqs))):
            _record(report, m, req[2], k, req[3], out, None, None)
        return report

    for k, inst in enumerate(order):
        g = _instance_cap(cfg, baseline, inst)
        live_elites = [m for m in elite_names if m in alive]
        # elites first: they precede every new recipe in rank order
        best: int | None = None
        for m in live_elites:
            rc = rho_cap(best, cfg.rho, g)
            out = evaluator.evaluate(ss_key, m, inst, rc)
            best = _record(report, m, inst, k, rc, out, rc if best is not None else None, None, best)
        fresh = [m for m in alive if m not in live_elites]
        bounds: dict[str, int] = {}
        for m in fresh:
            if live_elites:
                means = [results[e].mean(k + 1) for e in live_elites]
                bounds[m] = adaptive_bound(means, k, results[m].mean(k), g)
            else:
                bounds[m] = g
        # speculative batch at the loosest cap the sequential pass can need
        if cfg.speculative:
            reqs = []
            for m in fresh:
                cap = min(g, bounds[m], rho_cap(best, cfg.rho, g))
                if cap >= 1:
                    reqs.append((ss_key, m, inst, cap))
            evaluator.evaluate_many(reqs)
        for m in fresh:
            rc = rho_cap(best, cfg.rho, g)
            bound = bounds[m]
            cap = min(g, rc, bound)
            if cap < 1:
                _eliminate(report, m, k, "adaptiveCap")
                rows.append(RaceLogRow(ss_key, level, m, inst, 0, Status.CAPPED.value, 0, "adaptiveCap", k,
                                       rc if best is not None else None, bound))
                alive.remove(m)
                continue
            out = evaluator.evaluate(ss_key, m, inst, cap)
            best = _record(report, m, inst, k, cap, out, rc if best is not None else None,
                           bound if live_elites else None, best)
            if out.status is Status.CAPPED and live_elites and bound <= min(g, rc):
                _eliminate(report, m, k, "adaptiveCap")
                rows[-1].reason = "adaptiveCap"
                alive.remove(m)
            elif out.status is Status.CAPPED and cfg.rho_terminates_race and best is not None and rc < g and cap == rc:
                _eliminate(report, m, k, "rhoCap")
                rows[-1].reason = "rhoCap"
                alive.remove(m)
        n_seen = k + 1
        if len(alive) > 1 and n_seen >= cfg.t_first and (n_seen - cfg.t_first) % cfg.t_next == 0:
            costs = {m: results[m].cost_vector(n_seen) for m in alive}
            top, tests, out = ttest_eliminate(costs, cfg.alpha, order=alive)
            report.tests.append(
                {"k": n_seen, "best": top, "threshold": cfg.alpha / (len(alive) - 1),
                 "tests": tests, "eliminated": list(out)}
            )
            for m in out:
                _eliminate(report, m, k, "tTest")
                for row in reversed(rows):
                    if row.recipe == m:
                        row.reason = "tTest"
                        break
                alive.remove(m)
    return report


def _record(report, m, inst, k, cap, out, rc, bound, best=None):
    res = report.results[m]
    res.statuses[inst] = out.status
    res.costs[inst] = out.cost
    if out.status is Status.SAT:
        report.sat_instances.add(inst)
    report.log.append(
        RaceLogRow(report.ss_key, report.level, m, inst, cap, out.status.value, out.cost, "", k, rc, bound)
    )
    if out.status is not Status.CAPPED:
        return out.cost if best is None else min(best, out.cost)
    return best


def _eliminate(report: RaceReport, m: str, k: int, reason: str) -> None:
    res = report.results[m]
    res.eliminated = reason
    res.eliminated_at = k


def run_levels(
    ss_key: str,
    training: Sequence[str],
    baseline: Mapping[str, int] | None,
    cfg: RaceConfig,
    evaluator: Evaluator,
    max_level: int = 4,
) -> list[RaceReport]:
    """Levels 1..max_level with elites carried forward.

    Each level races the full ranked prefix of size 2**(level-1); recipes
    eliminated earlier rejoin as newcomers and mostly replay cached runs.
    """
    reports: list[RaceReport] = []
    elites: dict[str, RaceResult] = {}
    for level in range(1, max_level + 1):
        rep = run_race(ss_key, level, training, baseline, cfg, evaluator, elites)
        reports.append(rep)
        elites = {m: rep.results[m] for m in rep.survivors}
        if not elites:
            break
    return reports


def write_race_log(rows: Iterable[RaceLogRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for r in rows:
            w.writerow(r.as_row())


def write_call_log(calls: Iterable[CallRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["streamlinerSetKey", "recipe", "instanceId", "cap", "status", "cost"])
        for c in calls:
            w.writerow([c.ss_key, c.recipe, c.instance_id, c.cap, c.status.value, c.cost])
