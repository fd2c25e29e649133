"""Instance generation inside a node-cost window, features and clustering."""
from __future__ import annotations

import csv
import logging
import math
import random
from dataclasses import asdict, dataclass, field
from concurrent.futures import ProcessPoolExecutor
from typing import Iterable, Sequence

import numpy as np
from scipy.special import log_ndtr

from .bacp import BacpInstance
from .kernel import SolveBudget, Status, solve
from .models import DEFAULT_RECIPE, compile_model
from .racing import derive_seed
from .streamliners import StreamlinerSet

__all__ = [
    "GeneratorConfig",
    "GeneratedInstance",
    "draw_instance",
    "baseline_solve",
    "generate",
    "FEATURE_NAMES",
    "FeatureVector",
    "extract_features",
    "anderson_darling",
    "Clustering",
    "gmeans_cluster",
    "build_training_set",
    "write_features",
    "write_clusters",
]

log = logging.getLogger(__name__)

PROBE_NODES = 1000


@dataclass(frozen=True)
class GeneratorConfig:
    courses: tuple[int, int] = (24, 32)
    periods: tuple[int, int] = (6, 8)
    loads: tuple[int, int] = (1, 5)
    # widening of the load and cardinality bands around the hidden plan
    load_slack: tuple[int, int] = (0, 0)
    card_slack: tuple[int, int] = (0, 1)
    prereq_density: tuple[float, float] = (0.01, 0.04)
    window: tuple[int, int] = (10**3, 10**6)
    seed: int = 0
    target_count: int = 30
    runs: int = 3
    max_draws_per_instance: int = 200
    min_acceptance: float = 0.002

    def __post_init__(self) -> None:
        lo, hi = self.window
        if not 0 <= lo < hi:
            raise ValueError(f"invalid cost window {lo}..{hi}")
        for name in ("courses", "periods", "loads", "load_slack", "card_slack", "prereq_density"):
            a, b = getattr(self, name)
            if a > b:
                raise ValueError(f"empty range for {name}")
        if self.courses[0] < 1 or self.periods[0] < 1 or self.loads[0] < 1:
            raise ValueError("courses, periods and loads must be positive")
        if self.runs < 1 or self.target_count < 0:
            raise ValueError("runs must be >= 1 and target_count >= 0")

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def draw_instance(rng: random.Random, cfg: GeneratorConfig, seed: int) -> BacpInstance:
    """One random instance built around a hidden curriculum.

    Courses are dealt round-robin into hidden periods; prerequisites only
    point forward in that plan and the load and cardinality bands are drawn
    around the plan's own per-period totals, so the plan is a solution.
    """
    C = rng.randint(*cfg.courses)
    P = rng.randint(*cfg.periods)
    loads = tuple(rng.randint(*cfg.loads) for _ in range(C))
    order = list(range(1, C + 1))
    rng.shuffle(order)
    plan = {c: k % P + 1 for k, c in enumerate(order)}
    density = rng.uniform(*cfg.prereq_density)
    pre = [
        (a, b)
        for a in range(1, C + 1)
        for b in range(1, C + 1)
        if plan[a] < plan[b] and rng.random() < density
    ]
    per_load = [sum(loads[c - 1] for c in plan if plan[c] == p) for p in range(1, P + 1)]
    per_card = [sum(1 for c in plan if plan[c] == p) for p in range(1, P + 1)]
    ls = rng.randint(*cfg.load_slack)
    cs = rng.randint(*cfg.card_slack)
    lb = max(0, min(per_load) - ls)
    ub = max(per_load) + ls
    clb = max(0, min(per_card) - cs)
    cub = min(C, max(per_card) + cs)
    return BacpInstance(C, P, lb, ub, clb, cub, tuple(pre), loads, seed=seed)


def baseline_solve(inst: BacpInstance, cap: int):
    model = compile_model(inst, StreamlinerSet(), DEFAULT_RECIPE)
    return solve(model.csp, SolveBudget(cap))


@dataclass(frozen=True)
class GeneratedInstance:
    instance: BacpInstance
    baseline_cost: int
    run: int
    draw: int


def _draw_and_solve(args):
    cfg, run_seed, draw = args
    seed = derive_seed(run_seed, "draw", draw)
    inst = draw_instance(random.Random(seed), cfg, seed)
    out = baseline_solve(inst, cfg.window[1])
    return inst, out.status, out.cost


def generate(cfg: GeneratorConfig, jobs: int = 1) -> list[GeneratedInstance]:
    """Rejection sampling into the cost window, pooled over ``runs`` runs.

    The target count is split over the runs; draws are judged in index
    order so the pool does not depend on ``jobs``.
    """
    lo, hi = cfg.window
    pool: list[GeneratedInstance] = []
    seen: set[str] = set()
    share = [cfg.target_count // cfg.runs + (1 if r < cfg.target_count % cfg.runs else 0) for r in range(cfg.runs)]
    executor = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        for run, want in enumerate(share):
            run_seed = derive_seed(cfg.seed, "generator", "run", run)
            got = 0
            draw = 0
            max_draws = max(50, cfg.max_draws_per_instance * want)
            batch = max(1, jobs)
            while got < want and draw < max_draws:
                args = [(cfg, run_seed, d) for d in range(draw, min(draw + batch, max_draws))]
                results = list(executor.map(_draw_and_solve, args)) if executor else map(_draw_and_solve, args)
                for (inst, status, cost), (_, _, d) in zip(results, args):
                    draw = d + 1
                    log.debug("run %d draw %d: %s %d", run, d, status.value, cost)
                    if status is Status.SAT and lo <= cost <= hi and inst.id not in seen:
                        seen.add(inst.id)
                        pool.append(GeneratedInstance(inst, cost, run, d))
                        got += 1
                        if got == want:
                            break
            rate = got / max(draw, 1)
            if got < want:
                log.warning("run %d: accepted %d of %d after %d draws", run, got, want, draw)
            elif rate < cfg.min_acceptance:
                log.warning("run %d: acceptance rate %.4f below floor", run, rate)
    finally:
        if executor:
            executor.shutdown()
    return pool


# features ---------------------------------------------------------------

FEATURE_NAMES = (
    "n_courses",
    "n_periods",
    "courses_per_period",
    "prereq_density",
    "prereq_depth",
    "load_mean",
    "load_std",
    "load_min",
    "load_max",
    "load_slack",
    "card_slack",
    "probe_nodes",
    "probe_depth",
)


@dataclass(frozen=True)
class FeatureVector:
    instance_id: str
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(FEATURE_NAMES):
            raise ValueError("feature vector has the wrong dimension")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, self.values))


def _dag_depth(C: int, pre: Sequence[tuple[int, int]]) -> int:
    succ: dict[int, list[int]] = {c: [] for c in range(1, C + 1)}
    indeg = {c: 0 for c in range(1, C + 1)}
    for a, b in pre:
        succ[a].append(b)
        indeg[b] += 1
    depth = {c: 1 for c in range(1, C + 1)}
    ready = [c for c in range(1, C + 1) if indeg[c] == 0]
    seen = 0
    while ready:
        c = ready.pop()
        seen += 1
        for d in succ[c]:
            depth[d] = max(depth[d], depth[c] + 1)
            indeg[d] -= 1
            if indeg[d] == 0:
                ready.append(d)
    if seen != C:
        raise ValueError("prerequisites contain a cycle")
    return max(depth.values())


def extract_features(inst: BacpInstance) -> FeatureVector:
    C, P = inst.n_courses, inst.n_periods
    loads = np.asarray(inst.course_load, dtype=float)
    pairs = C * (C - 1) / 2
    lb, ub = inst.load_per_period_lb, inst.load_per_period_ub
    clb, cub = inst.courses_per_period_lb, inst.courses_per_period_ub
    probe = baseline_solve(inst, PROBE_NODES)
    values = (
        float(C),
        float(P),
        C / P,
        len(inst.prerequisite) / pairs if pairs else 0.0,
        float(_dag_depth(C, inst.prerequisite)),
        float(loads.mean()),
        float(loads.std()),
        float(loads.min()),
        float(loads.max()),
        (P * ub - loads.sum()) / (P * (ub - lb + 1)),
        (P * cub - C) / (P * (cub - clb + 1)),
        float(probe.cost),
        float(probe.max_depth),
    )
    return FeatureVector(inst.id, values)


def write_features(features: Iterable[FeatureVector], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("instanceId",) + FEATURE_NAMES)
        for f in features:
            w.writerow([f.instance_id, *(repr(float(v)) for v in f.values)])


def read_features(path) -> list[FeatureVector]:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header[1:]) != FEATURE_NAMES:
            raise ValueError("unexpected feature columns")
        return [FeatureVector(row[0], tuple(float(x) for x in row[1:])) for row in r]


# clustering -------------------------------------------------------------


def anderson_darling(x: Sequence[float]) -> tuple[float, float, float]:
    """Normality test with estimated mean and variance.

    Returns ``(A2, A2*, p)`` where ``A2*`` carries the small-sample
    adjustment and ``p`` is the usual piecewise approximation.
    """
    z = np.sort(np.asarray(x, dtype=float))
    n = len(z)
    if n < 2:
        raise ValueError("need at least two observations")
    sd = z.std(ddof=1)
    if sd == 0:
        return 0.0, 0.0, 1.0
    y = (z - z.mean()) / sd
    i = np.arange(1, n + 1)
    logcdf = log_ndtr(y)
    logsf = log_ndtr(-y)
    a2 = -n - float(np.sum((2 * i - 1) * (logcdf + logsf[::-1]))) / n
    a2s = a2 * (1 + 0.75 / n + 2.25 / n**2)
    if a2s >= 0.6:
        p = math.exp(1.2937 - 5.709 * a2s + 0.0186 * a2s**2)
    elif a2s >= 0.34:
        p = math.exp(0.9177 - 4.279 * a2s - 1.38 * a2s**2)
    elif a2s >= 0.2:
        p = 1 - math.exp(-8.318 + 42.796 * a2s - 59.938 * a2s**2)
    else:
        p = 1 - math.exp(-13.436 + 101.14 * a2s - 223.73 * a2s**2)
    return a2, a2s, min(1.0, max(0.0, p))


@dataclass
class Clustering:
    labels: list[int]
    centroids: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    splits: list[dict] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.centroids)


def _normalise(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    scale = np.where(sd > 0, sd, 1.0)
    Z = (X - mean) / scale
    Z[:, sd == 0] = 0.0
    return Z, mean, np.where(sd > 0, sd, 0.0)


def gmeans_cluster(
    X: Sequence[Sequence[float]], alpha: float = 1e-4, seed: int = 0, min_split: int = 8, max_k: int = 32
) -> Clustering:
    """G-means on z-normalised rows of ``X``."""
    from sklearn.cluster import KMeans

    X = np.asarray(X, dtype=float)
    if len(X) < 2:
        raise ValueError("need at least two feature vectors")
    Z, mean, scale = _normalise(X)
    todo = [np.arange(len(Z))]
    final: list[np.ndarray] = []
    splits = []
    while todo:
        idx = todo.pop(0)
        pts = Z[idx]
        if len(idx) < min_split or len(final) + len(todo) + 1 >= max_k or np.allclose(pts, pts[0]):
            final.append(idx)
            continue
        km = KMeans(n_clusters=2, n_init=10, random_state=derive_seed(seed, "gmeans", len(splits)) % 2**32)
        lab = km.fit_predict(pts)
        if len(set(lab)) < 2:
            final.append(idx)
            continue
        v = km.cluster_centers_[0] - km.cluster_centers_[1]
        proj = pts @ v / float(v @ v)
        a2, a2s, p = anderson_darling(proj)
        accept = p < alpha
        splits.append({"size": int(len(idx)), "A2*": a2s, "p": p, "split": accept})
        if accept:
            todo.append(idx[lab == 0])
            todo.append(idx[lab == 1])
        else:
            final.append(idx)
    final.sort(key=lambda a: int(a.min()))
    labels = [0] * len(Z)
    cents = []
    for c, idx in enumerate(final):
        for i in idx:
            labels[int(i)] = c
        cents.append(Z[idx].mean(axis=0))
    return Clustering(labels, np.asarray(cents), mean, scale, splits)


def build_training_set(
    ids: Sequence[str], Z: np.ndarray, clustering: Clustering, per_cluster: int = 5
) -> list[str]:
    """The ``per_cluster`` members nearest each centroid, ties by id."""
    chosen: list[str] = []
    for c in range(clustering.k):
        members = [i for i, lab in enumerate(clustering.labels) if lab == c]
        if len(members) < per_cluster:
            log.warning("cluster %d has only %d members", c, len(members))
        dist = [(float(np.linalg.norm(Z[i] - clustering.centroids[c])), ids[i]) for i in members]
        dist.sort()
        chosen.extend(name for _, name in dist[:per_cluster])
    return chosen


def normalised(X: Sequence[Sequence[float]], clustering: Clustering) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    scale = np.where(clustering.scale > 0, clustering.scale, 1.0)
    Z = (X - clustering.mean) / scale
    Z[:, clustering.scale == 0] = 0.0
    return Z


def write_clusters(ids: Sequence[str], clustering: Clustering, chosen: Iterable[str], path) -> None:
    picked = set(chosen)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["instanceId", "cluster", "training"])
        for name, lab in zip(ids, clustering.labels):
            w.writerow([name, lab, int(name in picked)])
