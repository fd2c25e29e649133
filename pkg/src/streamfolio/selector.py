"""Per-instance choice of a portfolio entry and the test-time protocol.

A failed streamlined run (refuted or out of budget) is followed by the
unstreamlined model, and the instance is charged for both.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .kernel import Status
from .models import DEFAULT_RECIPE
from .momcts import ArchiveEntry, Portfolio
from .racing import derive_seed
from .streamliners import StreamlinerSet

__all__ = [
    "SelectorModel",
    "TestOutcome",
    "entry_name",
    "train_selector",
    "select",
    "run_test_protocol",
    "run_vbs",
    "Summary",
    "report",
    "write_test_report",
    "write_summary",
    "file_hash",
    "PENALTY_FACTOR",
    "K_CHOICES",
]

PENALTY_FACTOR = 10
K_CHOICES = (1, 3, 5)
SCHEDULE_FRACTION = 0.1


def entry_name(e: ArchiveEntry | tuple[str, str]) -> str:
    ss, recipe = (e.ss_key, e.recipe) if isinstance(e, ArchiveEntry) else e
    return f"{ss}|{recipe}"


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class SelectorModel:
    entries: list[tuple[str, str]]
    training: list[str]
    Z: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    # imputed costs, one row per training instance, one column per entry
    imputed: np.ndarray
    k: int = 3
    pre_schedule: list[tuple[int, float]] = field(default_factory=list)
    penalty: float = 0.0
    portfolio_hash: str = ""
    cv: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if sum(f for _, f in self.pre_schedule) > 0.2 + 1e-12:
            raise ValueError("pre-schedule may use at most 20% of the budget")

    def normalise(self, features: Sequence[float]) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if x.shape != self.mean.shape:
            raise ValueError(f"expected {self.mean.shape[0]} features, got {x.shape}")
        live = self.scale > 0
        out = np.zeros_like(x)
        out[live] = (x[live] - self.mean[live]) / self.scale[live]
        return out

    def to_json(self) -> dict:
        return {
            "format": "streamfolio.selector/1",
            "portfolio_sha256": self.portfolio_hash,
            "entries": [list(e) for e in self.entries],
            "training_instances": self.training,
            "features": {"mean": self.mean.tolist(), "scale": self.scale.tolist(), "rows": self.Z.tolist()},
            "imputed_costs": [[None if math.isinf(v) else v for v in row] for row in self.imputed.tolist()],
            "k": self.k,
            "pre_schedule": [[entry_name(self.entries[i]), f] for i, f in self.pre_schedule],
            "penalty": self.penalty,
            "cross_validation": self.cv,
        }

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SelectorModel":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        entries = [tuple(e) for e in doc["entries"]]
        names = [entry_name(e) for e in entries]
        imputed = np.array(
            [[math.inf if v is None else v for v in row] for row in doc["imputed_costs"]], dtype=float
        ).reshape(len(doc["training_instances"]), len(entries))
        return cls(
            entries,
            doc["training_instances"],
            np.asarray(doc["features"]["rows"], dtype=float).reshape(len(doc["training_instances"]), -1),
            np.asarray(doc["features"]["mean"], dtype=float),
            np.asarray(doc["features"]["scale"], dtype=float),
            imputed,
            doc["k"],
            [(names.index(n), f) for n, f in doc["pre_schedule"]],
            doc["penalty"],
            doc["portfolio_sha256"],
            doc.get("cross_validation", {}),
        )


def _normalise(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    live = sd > 0
    Z = np.zeros_like(X)
    Z[:, live] = (X[:, live] - mean[live]) / sd[live]
    return Z, mean, np.where(live, sd, 0.0)


def _choose(Z: np.ndarray, imputed: np.ndarray, rows: Sequence[int], z: np.ndarray, k: int) -> int:
    d = np.linalg.norm(Z[list(rows)] - z, axis=1)
    near = sorted(range(len(rows)), key=lambda j: (d[j], rows[j]))[:k]
    total = imputed[[rows[j] for j in near]].sum(axis=0)
    best = int(np.argmin(total))  # first minimum = lowest portfolio rank
    return best


def _total_time(status: str, cost: int, baseline: int) -> float:
    return cost if status == Status.SAT.value else cost + baseline


def _cv_total(
    Z, imputed, statuses, costs, baseline, k, schedule, budget, seed
) -> float:
    n = len(Z)
    folds = min(10, n)
    idx = list(range(n))
    random.Random(derive_seed(seed, "selector", "folds")).shuffle(idx)
    total = 0.0
    for f in range(folds):
        test = idx[f::folds]
        train = sorted(set(idx) - set(test))
        for i in test:
            spent = 0.0
            done = False
            for e, frac in schedule:
                cap = max(1, int(frac * budget))
                st, c = statuses[i][e], costs[i][e]
                if st == Status.SAT.value and c <= cap:
                    spent += c
                    done = True
                    break
                spent += c if st == Status.UNSAT.value and c <= cap else cap
            if not done:
                e = _choose(Z, imputed, train, Z[i], k)
                spent += _total_time(statuses[i][e], costs[i][e], baseline[i])
            total += spent
    return total / n


def train_selector(
    portfolio: Portfolio,
    features: Mapping[str, Sequence[float]],
    training_cap: int,
    seed: int = 0,
    k_choices: Sequence[int] = K_CHOICES,
    use_schedule: bool = True,
    portfolio_hash: str = "",
) -> SelectorModel:
    """k-NN over z-normalised features with cross-validated k."""
    if not portfolio.entries:
        raise ValueError("empty portfolio")
    training = [i for i in portfolio.training if i in features]
    X = np.asarray([features[i] for i in training], dtype=float)
    Z, mean, scale = _normalise(X)
    entries = portfolio.entries
    penalty = float(training_cap * PENALTY_FACTOR)
    statuses = [[e.statuses[i] for e in entries] for i in training]
    costs = [[e.costs[i] for e in entries] for i in training]
    imputed = np.array(
        [[costs[r][c] if statuses[r][c] == Status.SAT.value else penalty for c in range(len(entries))]
         for r in range(len(training))],
        dtype=float,
    )
    never = [c for c in range(len(entries)) if all(statuses[r][c] != Status.SAT.value for r in range(len(training)))]
    imputed[:, never] = math.inf
    if len(never) == len(entries):
        imputed[:, :] = penalty
    base = [portfolio.baseline[i] for i in training]
    names = [(e.ss_key, e.recipe) for e in entries]
    if len(training) < 2:
        return SelectorModel(names, training, Z, mean, scale, imputed, 1, [], penalty, portfolio_hash)
    scores = {k: _cv_total(Z, imputed, statuses, costs, base, k, [], training_cap, seed) for k in k_choices}
    k = min(k_choices, key=lambda k: (scores[k], k))
    schedule: list[tuple[int, float]] = []
    cv = {"k_scores": {str(q): s for q, s in scores.items()}}
    if use_schedule and len(entries) > 1:
        app = [sum(statuses[r][c] == Status.SAT.value for r in range(len(training))) for c in range(len(entries))]
        pre = max(range(len(entries)), key=lambda c: (app[c], -c))
        trial = [(pre, SCHEDULE_FRACTION)]
        with_s = _cv_total(Z, imputed, statuses, costs, base, k, trial, training_cap, seed)
        cv["schedule_score"] = with_s
        if with_s < scores[k]:
            schedule = trial
    return SelectorModel(names, training, Z, mean, scale, imputed, k, schedule, penalty, portfolio_hash, cv)


def select(model: SelectorModel, features: Sequence[float]) -> int:
    """Index of the chosen entry."""
    z = model.normalise(features)
    return _choose(model.Z, model.imputed, list(range(len(model.training))), z, min(model.k, len(model.training)))


@dataclass
class TestOutcome:
    __test__ = False  # not a pytest class

    instance_id: str
    chosen: str
    streamlined_status: str
    streamlined_cost: int
    fallback_cost: int
    total_cost: int
    baseline_cost: int
    solved: bool
    steps: list[tuple[str, str, int, str, int]] = field(default_factory=list)


def _run_entry(evaluator, inst_id, entry, cap, steps):
    ss, recipe = entry
    out = evaluator.evaluate(ss, recipe, inst_id, cap)
    steps.append((ss, recipe, cap, out.status.value, out.cost))
    return out


def _finish(inst_id, chosen, status, streamlined, evaluator, fallback_budget, baseline, steps):
    if status == Status.SAT.value:
        return TestOutcome(inst_id, chosen, status, streamlined, 0, streamlined, baseline, True, steps)
    fb = _run_entry(evaluator, inst_id, (StreamlinerSet().key, DEFAULT_RECIPE.name), fallback_budget, steps)
    total = streamlined + fb.cost
    return TestOutcome(inst_id, chosen, status, streamlined, fb.cost, total, baseline, fb.status is not Status.CAPPED, steps)


def run_test_protocol(
    model: SelectorModel,
    inst_id: str,
    features: Sequence[float],
    budget: int,
    evaluator,
    fallback_budget: int,
    baseline_cost: int,
) -> TestOutcome:
    if budget <= 0:
        raise ValueError("budget must be positive")
    steps: list = []
    spent = 0
    tried: dict[int, str] = {}
    for e, frac in model.pre_schedule:
        cap = max(1, int(frac * budget))
        out = _run_entry(evaluator, inst_id, model.entries[e], cap, steps)
        spent += out.cost
        tried[e] = out.status.value
        if out.status is Status.SAT:
            return _finish(inst_id, entry_name(model.entries[e]), "SAT", spent, evaluator, fallback_budget,
                           baseline_cost, steps)
    choice = select(model, features)
    status = tried.get(choice, "")
    remaining = budget - spent
    if status != Status.UNSAT.value and remaining >= 1:
        out = _run_entry(evaluator, inst_id, model.entries[choice], remaining, steps)
        spent += out.cost
        status = out.status.value
    elif not status:
        status = Status.CAPPED.value
    return _finish(inst_id, entry_name(model.entries[choice]), status, spent, evaluator, fallback_budget,
                   baseline_cost, steps)


def run_vbs(
    entries: Sequence[tuple[str, str]],
    inst_id: str,
    budget: int,
    evaluator,
    fallback_budget: int,
    baseline_cost: int,
) -> TestOutcome:
    """Per-instance best entry under the same protocol, without a schedule."""
    best: TestOutcome | None = None
    for entry in entries:
        steps: list = []
        out = _run_entry(evaluator, inst_id, entry, budget, steps)
        o = _finish(inst_id, entry_name(entry), out.status.value, out.cost, evaluator, fallback_budget,
                    baseline_cost, steps)
        if best is None or (o.solved, -o.total_cost) > (best.solved, -best.total_cost):
            best = o
    assert best is not None
    return best


@dataclass(frozen=True)
class Summary:
    label: str
    kind: str
    n: int
    pct_imp: float
    pct_red: float
    speedup: float
    mean_baseline: float
    mean_total: float

    def as_row(self) -> list:
        return [self.label, self.kind, self.n, f"{self.pct_imp:.4f}", f"{self.pct_red:.4f}",
                f"{self.speedup:.6f}", f"{self.mean_baseline:.2f}", f"{self.mean_total:.2f}"]


def report(outcomes: Sequence[TestOutcome], label: str = "", kind: str = "selector") -> Summary:
    n = len(outcomes)
    if n == 0:
        return Summary(label, kind, 0, 0.0, 0.0, 0.0, 0.0, 0.0)
    improved = [o for o in outcomes if o.total_cost < o.baseline_cost]
    pct_imp = 100.0 * len(improved) / n
    pct_red = (
        100.0 * sum((o.baseline_cost - o.total_cost) / o.baseline_cost for o in improved) / len(improved)
        if improved
        else 0.0
    )
    mb = sum(o.baseline_cost for o in outcomes) / n
    mt = sum(o.total_cost for o in outcomes) / n
    return Summary(label, kind, n, pct_imp, pct_red, mb / mt if mt else math.inf, mb, mt)


REPORT_COLUMNS = ("label", "kind", "instanceId", "chosenEntry", "streamlinedStatus", "streamlinedCost",
                  "fallbackCost", "totalCost", "baselineCost", "solved")
SUMMARY_COLUMNS = ("label", "kind", "n", "pctImp", "pctRed", "speedup", "meanBaseline", "meanTotal")


def write_test_report(rows: Sequence[tuple[str, str, TestOutcome]], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for label, kind, o in rows:
            w.writerow([label, kind, o.instance_id, o.chosen, o.streamlined_status, o.streamlined_cost,
                        o.fallback_cost, o.total_cost, o.baseline_cost, int(o.solved)])


def write_summary(summaries: Sequence[Summary], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for s in summaries:
            w.writerow(s.as_row())


def write_plot_data(rows: Sequence[tuple[str, str, TestOutcome]], out_dir) -> list[Path]:
    """One whitespace-separated ``baseline total`` file per (label, kind)."""
    groups: dict[tuple[str, str], list[TestOutcome]] = {}
    for label, kind, o in rows:
        groups.setdefault((label, kind), []).append(o)
    paths = []
    for (label, kind), outs in sorted(groups.items()):
        p = Path(out_dir) / f"plot-{label}-{kind}.dat"
        with open(p, "w", encoding="utf-8") as fh:
            fh.write("# instance baseline total\n")
            for o in outs:
                fh.write(f"{o.instance_id} {o.baseline_cost} {o.total_cost}\n")
        paths.append(p)
    return paths
