"""Command line entry point: ``gen-instances``, ``train`` and ``evaluate``.

Every output directory gets a ``manifest.json`` with the full configuration,
the derived seeds and sha256 hashes of inputs and outputs. ``--jobs`` only
changes how evaluation work is fanned out, never what is written.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .bacp import BacpInstance, load_instance, save_instance
from .instances import (
    GeneratorConfig,
    build_training_set,
    extract_features,
    generate,
    gmeans_cluster,
    normalised,
    read_features,
    write_clusters,
    write_features,
)
from .kernel import BACKEND, SolveBudget, SolveOutcome, Status
from .models import DEFAULT_RECIPE, default_candidates
from .momcts import MctsConfig, Portfolio, multi_round, write_trace
from .racing import LOG_COLUMNS, KernelEvaluator, RaceAborted, RaceConfig, derive_seed, write_call_log
from .selector import (
    SelectorModel,
    file_hash,
    report,
    run_test_protocol,
    run_vbs,
    train_selector,
    write_plot_data,
    write_summary,
    write_test_report,
)
from .streamliners import StreamlinerSet, dump_candidates

log = logging.getLogger("streamfolio")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3

BASELINE_COLUMNS = ("instanceId", "baselineStatus", "baselineCost", "cap", "run", "draw")


class InputError(Exception):
    """Bad or inconsistent input files (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# argument types ---------------------------------------------------------


def _number(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not value.is_integer():
            raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
        return int(value)


def _positive(text: str) -> int:
    value = _number(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return value


def _pair(conv):
    def parse(text: str):
        lo, sep, hi = text.partition("..")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected LO..HI, got {text!r}")
        try:
            a, b = conv(lo), conv(hi)
        except (ValueError, argparse.ArgumentTypeError):
            raise argparse.ArgumentTypeError(f"bad range {text!r}") from None
        if a > b:
            raise argparse.ArgumentTypeError(f"empty range {text!r}")
        return (a, b)

    return parse


def _window(text: str) -> tuple[int, int]:
    lo, hi = _pair(_number)(text)
    if lo < 0 or lo >= hi:
        raise argparse.ArgumentTypeError(f"window needs 0 <= lo < hi, got {text!r}")
    return lo, hi


# file helpers -----------------------------------------------------------


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dir_hash(root: Path, pattern: str = "**/*") -> str:
    h = hashlib.sha256()
    for p in sorted(q for q in root.glob(pattern) if q.is_file() and q.name != "manifest.json"):
        h.update(str(p.relative_to(root)).encode())
        h.update(_sha(p).encode())
    return h.hexdigest()


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise InputError(f"output directory {out} is not writable: {exc}") from exc
    return out


def write_manifest(out: Path, command: str, config: dict, seeds: dict, inputs: dict, outputs: Sequence[str],
                   jobs: int) -> None:
    doc = {
        "format": "streamfolio.manifest/1",
        "tool": {"name": "streamfolio", "version": __version__},
        "command": command,
        "config": config,
        "seeds": seeds,
        "inputs": inputs,
        "outputs": {name: _sha(out / name) for name in sorted(outputs)},
        # execution settings that do not influence any output
        "execution": {"jobs": jobs, "kernel_backend": BACKEND},
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _read_manifest(root: Path) -> dict:
    p = root / "manifest.json"
    if not p.exists():
        return {}
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{p}: {exc}") from exc


class Pool:
    """An instance directory written by ``gen-instances`` (or by hand)."""

    def __init__(self, root: Path) -> None:
        self.root = root
        idir = root / "instances"
        if not idir.is_dir():
            raise InputError(f"{root} has no instances/ directory")
        self.instances: dict[str, BacpInstance] = {}
        for p in sorted(idir.glob("*.json")):
            try:
                inst = load_instance(p)
            except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
                raise InputError(f"{p}: {exc}") from exc
            self.instances[inst.id] = inst
        if not self.instances:
            raise InputError(f"{idir} contains no instance files")
        self.manifest = _read_manifest(root)
        self.baselines: dict[str, tuple[str, int, int]] = {}
        bpath = root / "baselines.csv"
        if bpath.exists():
            with open(bpath, newline="", encoding="utf-8") as fh:
                for row in csv.DictReader(fh):
                    self.baselines[row["instanceId"]] = (row["baselineStatus"], int(row["baselineCost"]), int(row["cap"]))
        self.training: list[str] | None = None
        cpath = root / "clusters.csv"
        if cpath.exists():
            with open(cpath, newline="", encoding="utf-8") as fh:
                self.training = [r["instanceId"] for r in csv.DictReader(fh) if r["training"] == "1"]

    @property
    def ids(self) -> list[str]:
        return sorted(self.instances)

    @property
    def window(self) -> tuple[int, int] | None:
        w = self.manifest.get("config", {}).get("generator", {}).get("window")
        return tuple(w) if w else None

    def features(self) -> dict[str, tuple[float, ...]]:
        fpath = self.root / "features.csv"
        feats: dict[str, tuple[float, ...]] = {}
        if fpath.exists():
            try:
                feats = {f.instance_id: f.values for f in read_features(fpath)}
            except (ValueError, KeyError) as exc:
                raise InputError(f"{fpath}: {exc}") from exc
        for i in self.ids:
            if i not in feats:
                feats[i] = extract_features(self.instances[i]).values
        return feats

    def input_record(self) -> dict:
        return {"path": str(self.root), "sha256": _dir_hash(self.root)}


def _write_baselines(rows, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(BASELINE_COLUMNS)
        for row in rows:
            w.writerow(row)


def _baselines(pool: Pool, evaluator: KernelEvaluator, ids: Sequence[str], cap: int) -> dict[str, int]:
    """Baseline costs for ``ids``; solved here when the pool does not record them."""
    none = StreamlinerSet().key
    missing = [i for i in ids if i not in pool.baselines]
    for i in ids:
        if i in pool.baselines:
            status, cost, bcap = pool.baselines[i]
            evaluator.prime(none, DEFAULT_RECIPE.name, i, SolveOutcome(Status(status), cost), bcap)
    if missing:
        log.info("solving %d missing baselines", len(missing))
        outs = evaluator.evaluate_many([(none, DEFAULT_RECIPE.name, i, cap) for i in missing])
        for i, o in zip(missing, outs):
            pool.baselines[i] = (o.status.value, o.cost, cap)
    res = {}
    for i in ids:
        status, cost, _ = pool.baselines[i]
        if status == Status.UNSAT.value:
            raise InputError(f"instance {i} is unsatisfiable")
        res[i] = cost
    return res


# gen-instances ----------------------------------------------------------


def cmd_gen_instances(args) -> int:
    out = _out_dir(args.out)
    gcfg = GeneratorConfig(
        courses=args.courses,
        periods=args.periods,
        loads=args.loads,
        load_slack=args.load_slack,
        card_slack=args.card_slack,
        prereq_density=args.prereq_density,
        window=args.window,
        seed=args.seed,
        target_count=args.count,
        runs=args.runs,
        max_draws_per_instance=args.max_draws_per_instance,
    )
    pool = generate(gcfg, jobs=args.jobs)
    if len(pool) < args.count:
        log.warning("accepted %d of %d requested instances", len(pool), args.count)
    idir = out / "instances"
    idir.mkdir(exist_ok=True)
    for old in idir.glob("*.json"):
        old.unlink()
    for g in pool:
        save_instance(g.instance, idir / f"{g.instance.id}.json")
    _write_baselines(
        [(g.instance.id, Status.SAT.value, g.baseline_cost, gcfg.window[1], g.run, g.draw) for g in pool],
        out / "baselines.csv",
    )
    ids = [g.instance.id for g in pool]
    feats = [extract_features(g.instance) for g in pool]
    write_features(feats, out / "features.csv")
    cluster_seed = derive_seed(args.seed, "cluster")
    outputs = ["baselines.csv", "features.csv"] + [f"instances/{i}.json" for i in ids]
    if len(pool) >= 2:
        clustering = gmeans_cluster([f.values for f in feats], alpha=args.alpha, seed=cluster_seed)
        Z = normalised([f.values for f in feats], clustering)
        chosen = build_training_set(ids, Z, clustering, args.per_cluster)
        write_clusters(ids, clustering, chosen, out / "clusters.csv")
        outputs.append("clusters.csv")
        log.info("%d instances in %d clusters, %d selected for training", len(ids), clustering.k, len(chosen))
    config = {"generator": gcfg.to_json(), "clustering": {"alpha": args.alpha, "per_cluster": args.per_cluster}}
    seeds = {"root": args.seed, "cluster": cluster_seed,
             "generator_runs": [derive_seed(args.seed, "generator", "run", r) for r in range(args.runs)]}
    write_manifest(out, "gen-instances", config, seeds, {}, outputs, args.jobs)
    print(f"wrote {len(pool)} instances to {out}")
    return EXIT_OK


# train ------------------------------------------------------------------


def write_race_log(searches, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("round",) + LOG_COLUMNS)
        for s in searches:
            for rep in s.race_logs:
                for row in rep.log:
                    w.writerow([s.round, *row.as_row()])


def cmd_train(args) -> int:
    pool = Pool(Path(args.instances))
    out = _out_dir(args.out)
    if args.all_instances or pool.training is None:
        training = pool.ids
    else:
        training = sorted(pool.training)
    window = pool.window
    global_cap = args.global_cap or (window[1] if window else 10**6)
    candidates = default_candidates()
    if args.candidates:
        candidates = candidates[: args.candidates]
    evaluator = KernelEvaluator(pool.instances.values(), candidates, jobs=args.jobs)
    try:
        baseline = _baselines(pool, evaluator, training, global_cap)
        race_cfg = RaceConfig(
            rho=args.rho,
            alpha=args.alpha,
            t_first=args.t_first,
            t_next=args.t_next,
            global_cap=SolveBudget(global_cap),
            shuffle_seed=derive_seed(args.seed, "shuffle"),
            baseline_cap_factor=args.cap_factor,
            speculative=not args.no_speculation,
        )
        max_level = 1 if args.mode == "default" else args.max_level
        mcfg = MctsConfig(
            uct_c=args.uct_c,
            delta=args.delta,
            budget=args.budget,
            rounds=args.rounds,
            max_level=max_level,
            max_combination_size=args.max_combination_size,
            seed=derive_seed(args.seed, "search"),
        )
        port, searches = multi_round(candidates, training, baseline, evaluator, mcfg, race_cfg, args.mode)
    finally:
        evaluator.close()
    port.dump(out / "portfolio.json")
    dump_candidates(candidates, out / "streamliners.json")
    write_race_log(searches, out / "race-log.csv")
    write_trace(searches, out / "trace.csv")
    write_call_log(evaluator.calls, out / "calls.csv")
    outputs = ["portfolio.json", "streamliners.json", "race-log.csv", "trace.csv", "calls.csv"]
    feats = pool.features()
    selector_seed = derive_seed(args.seed, "selector")
    training_cap = max(
        min(global_cap, int(-(-args.cap_factor * baseline[i] // 1))) if args.cap_factor else global_cap
        for i in training
    )
    model = train_selector(port, feats, training_cap, seed=selector_seed, use_schedule=not args.no_pre_schedule,
                           portfolio_hash=file_hash(out / "portfolio.json"))
    model.dump(out / "selector.json")
    outputs.append("selector.json")
    config = {
        "mode": args.mode,
        "training_instances": training,
        "candidates": len(candidates),
        "mcts": mcfg.to_json(),
        "race": race_cfg.to_json(),
        "selector": {"training_cap": training_cap, "pre_schedule": not args.no_pre_schedule},
    }
    seeds = {"root": args.seed, "search": mcfg.seed, "shuffle": race_cfg.shuffle_seed, "selector": selector_seed}
    write_manifest(out, "train", config, seeds, {"instances": pool.input_record()}, outputs, args.jobs)
    print(f"portfolio with {len(port.entries)} entries after {sum(len(s.trace) for s in searches)} simulations, "
          f"{evaluator.n_calls} solver calls")
    return EXIT_OK


# evaluate ---------------------------------------------------------------


def cmd_evaluate(args) -> int:
    if not args.vbs_only and not args.selector:
        raise _usage("--selector is required unless --vbs-only is given")
    if args.selector and not args.vbs_only and len(args.selector) != len(args.portfolio):
        raise _usage("give one --selector per --portfolio")
    if args.label and len(args.label) != len(args.portfolio):
        raise _usage("give one --label per --portfolio")
    pool = Pool(Path(args.test))
    out = _out_dir(args.out)
    window = pool.window
    fallback_budget = args.fallback_budget or 10 * (window[1] if window else args.budget)

    portfolios: list[Portfolio] = []
    inputs: dict = {"test": pool.input_record()}
    for n, p in enumerate(args.portfolio):
        path = Path(p)
        try:
            portfolios.append(Portfolio.load(path))
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"{path}: {exc}") from exc
        inputs[f"portfolio[{n}]"] = {"path": p, "sha256": _sha(path)}
    selectors: list[SelectorModel | None] = [None] * len(portfolios)
    if not args.vbs_only:
        for n, (s, p) in enumerate(zip(args.selector, args.portfolio)):
            try:
                model = SelectorModel.load(s)
            except (OSError, ValueError, KeyError) as exc:
                raise InputError(f"{s}: {exc}") from exc
            if model.portfolio_hash != _sha(Path(p)):
                raise InputError(f"{s} was trained on a different portfolio than {p}")
            selectors[n] = model
            inputs[f"selector[{n}]"] = {"path": s, "sha256": _sha(Path(s))}

    labels = list(args.label or [])
    if not labels:
        for port in portfolios:
            base = port.mode
            labels.append(base if base not in labels else f"{base}{len(labels)}")
    ids = pool.ids
    feats = pool.features()
    evaluator = KernelEvaluator(pool.instances.values(), default_candidates(), jobs=args.jobs)
    rows = []
    try:
        baseline = _baselines(pool, evaluator, ids, fallback_budget)
        # one batch with every entry on every instance: the fan-out point for --jobs
        entries = []
        for port in portfolios:
            for e in port.entries:
                if (e.ss_key, e.recipe) not in entries:
                    entries.append((e.ss_key, e.recipe))
        evaluator.evaluate_many([(ss, r, i, args.budget) for i in ids for ss, r in entries])
        for label, port, model in zip(labels, portfolios, selectors):
            names = [(e.ss_key, e.recipe) for e in port.entries]
            for i in ids:
                if model is not None:
                    o = run_test_protocol(model, i, feats[i], args.budget, evaluator, fallback_budget, baseline[i])
                    rows.append((label, "selector", o))
                rows.append((label, "vbs", run_vbs(names, i, args.budget, evaluator, fallback_budget, baseline[i])))
    finally:
        evaluator.close()
    rows.sort(key=lambda r: (labels.index(r[0]), r[1] != "selector"))
    groups: dict[tuple[str, str], list] = {}
    for label, kind, o in rows:
        groups.setdefault((label, kind), []).append(o)
    summaries = [report(outs, label, kind) for (label, kind), outs in groups.items()]
    write_test_report(rows, out / "test-report.csv")
    write_summary(summaries, out / "summary.csv")
    plots = write_plot_data(rows, out)
    _write_protocol_log(rows, out / "protocol-log.csv")
    write_call_log(evaluator.calls, out / "calls.csv")
    outputs = ["test-report.csv", "summary.csv", "protocol-log.csv", "calls.csv"] + [p.name for p in plots]
    config = {"budget": args.budget, "fallback_budget": fallback_budget, "labels": labels, "vbs_only": args.vbs_only}
    write_manifest(out, "evaluate", config, {}, inputs, outputs, args.jobs)
    for s in summaries:
        print(f"{s.label:>10} {s.kind:<8} n={s.n} %imp={s.pct_imp:.1f} %red={s.pct_red:.1f} speedup={s.speedup:.3f}")
    return EXIT_OK


def _write_protocol_log(rows, path: Path) -> None:
    """Every solver request made for each test outcome, in order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "kind", "instanceId", "step", "streamlinerSetKey", "recipe", "cap", "status", "cost"])
        for label, kind, o in rows:
            for n, (ss, recipe, cap, status, cost) in enumerate(o.steps):
                w.writerow([label, kind, o.instance_id, n, ss, recipe, cap, status, cost])


# streamliners -----------------------------------------------------------


def cmd_streamliners(args) -> int:
    cands = default_candidates()
    if args.out:
        dump_candidates(cands, args.out)
    else:
        for s in cands:
            print(f"{s.id:3d}  {s.key:<32} {s.description}")
    return EXIT_OK


# parser -----------------------------------------------------------------


class _UsageError(Exception):
    pass


def _usage(msg: str) -> _UsageError:
    return _UsageError(msg)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="streamfolio", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"streamfolio {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-instances", help="generate a satisfiable instance pool inside a cost window")
    g.add_argument("--window", type=_window, default=(10**3, 10**6), metavar="LO..HI",
                   help="accepted baseline node costs (default 1000..1000000)")
    g.add_argument("--count", type=_number, default=30)
    g.add_argument("--runs", type=_positive, default=3)
    g.add_argument("--seed", type=_number, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--jobs", type=_positive, default=1)
    g.add_argument("--per-cluster", type=_positive, default=5)
    g.add_argument("--alpha", type=float, default=1e-4, help="G-means split significance")
    d = GeneratorConfig()
    g.add_argument("--courses", type=_pair(_number), default=d.courses, metavar="A..B")
    g.add_argument("--periods", type=_pair(_number), default=d.periods, metavar="A..B")
    g.add_argument("--loads", type=_pair(_number), default=d.loads, metavar="A..B")
    g.add_argument("--load-slack", type=_pair(_number), default=d.load_slack, metavar="A..B")
    g.add_argument("--card-slack", type=_pair(_number), default=d.card_slack, metavar="A..B")
    g.add_argument("--prereq-density", type=_pair(float), default=d.prereq_density, metavar="A..B")
    g.add_argument("--max-draws-per-instance", type=_positive, default=d.max_draws_per_instance)
    g.set_defaults(func=cmd_gen_instances)

    t = sub.add_parser("train", help="search a streamliner/model portfolio and train its selector")
    t.add_argument("--instances", required=True, help="pool directory from gen-instances")
    t.add_argument("--budget", type=_number, default=100, help="simulations per round")
    t.add_argument("--rounds", type=_positive, default=3)
    t.add_argument("--max-level", type=_positive, default=4)
    t.add_argument("--mode", choices=("mm", "default"), default="mm")
    t.add_argument("--seed", type=_number, default=0)
    t.add_argument("--out", required=True)
    t.add_argument("--jobs", type=_positive, default=1)
    t.add_argument("--candidates", type=_number, default=0, help="use the first N candidates (0 = all)")
    t.add_argument("--all-instances", action="store_true", help="ignore the per-cluster training selection")
    t.add_argument("--global-cap", type=_number, default=0, help="node cap per run (default: pool window hi)")
    t.add_argument("--cap-factor", type=float, default=None, help="also cap runs at this multiple of the baseline")
    t.add_argument("--rho", type=float, default=2.0)
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--t-first", type=_positive, default=10)
    t.add_argument("--t-next", type=_positive, default=5)
    t.add_argument("--uct-c", type=float, default=MctsConfig.uct_c)
    t.add_argument("--delta", type=float, default=0.95)
    t.add_argument("--max-combination-size", type=_positive, default=None)
    t.add_argument("--no-pre-schedule", action="store_true")
    t.add_argument("--no-speculation", action="store_true",
                   help="run newcomers one at a time at their final cap (saves work with one job)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="run the test protocol and write reports")
    e.add_argument("--portfolio", action="append", required=True)
    e.add_argument("--selector", action="append", default=[])
    e.add_argument("--label", action="append", default=[])
    e.add_argument("--test", required=True, help="test pool directory")
    e.add_argument("--budget", type=_positive, required=True, help="node budget per test instance")
    e.add_argument("--fallback-budget", type=_positive, default=0,
                   help="cap for the unstreamlined fallback (default 10x the test window hi)")
    e.add_argument("--out", required=True)
    e.add_argument("--vbs-only", action="store_true")
    e.add_argument("--jobs", type=_positive, default=1)
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("streamliners", help="list or dump the candidate streamliners")
    s.add_argument("--out", default=None, help="write streamliners.json here")
    s.set_defaults(func=cmd_streamliners)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"streamfolio: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, FileNotFoundError) as exc:
        print(f"streamfolio: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RaceAborted as exc:
        print(f"streamfolio: evaluation failed: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"streamfolio: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
