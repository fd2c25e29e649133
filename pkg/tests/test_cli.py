import csv
import json

import pytest

from streamfolio.cli import EXIT_INPUT, EXIT_OK, EXIT_USAGE, main
from streamfolio.momcts import Portfolio

SMALL_GEN = ["--courses", "12..16", "--periods", "4..5", "--load-slack", "0..0", "--prereq-density", "0.01..0.05"]


def gen(out, seed=3, count=6, window="15..100000", extra=()):
    return main(["gen-instances", "--window", window, "--count", str(count), "--seed", str(seed),
                 "--per-cluster", "10", "--out", str(out), *SMALL_GEN, *extra])


def train(pool, out, mode="mm", jobs=1, extra=()):
    return main(["train", "--instances", str(pool), "--budget", "4", "--rounds", "2", "--candidates", "8",
                 "--seed", "1", "--mode", mode, "--out", str(out), "--jobs", str(jobs), *extra])


@pytest.fixture(scope="module")
def pools(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert gen(root / "train") == EXIT_OK
    assert gen(root / "test", seed=4, count=3, window="200..200000") == EXIT_OK
    assert train(root / "train", root / "mm") == EXIT_OK
    assert train(root / "train", root / "def", mode="default") == EXIT_OK
    return root


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_gen_instances_layout_and_manifest(pools):
    train_dir = pools / "train"
    for name in ("baselines.csv", "features.csv", "clusters.csv", "manifest.json"):
        assert (train_dir / name).exists()
    man = json.loads((train_dir / "manifest.json").read_text())
    assert man["command"] == "gen-instances"
    assert man["config"]["generator"]["window"] == [15, 100000]
    assert set(man["seeds"]) >= {"root", "cluster", "generator_runs"}
    base = read_rows(train_dir / "baselines.csv")
    assert len(base) == len(list((train_dir / "instances").glob("*.json"))) == 6
    assert all(15 <= int(r["baselineCost"]) <= 100000 and r["baselineStatus"] == "SAT" for r in base)


def test_gen_instances_is_byte_identical(pools, tmp_path):
    assert gen(tmp_path / "again") == EXIT_OK
    for name in ("baselines.csv", "features.csv", "clusters.csv", "manifest.json"):
        assert (tmp_path / "again" / name).read_bytes() == (pools / "train" / name).read_bytes()


@pytest.mark.parametrize("window", ["5..1", "7..7", "abc", "1..x"])
def test_bad_window_is_a_usage_error(tmp_path, window, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen-instances", "--window", window, "--out", str(tmp_path)])
    assert exc.value.code == EXIT_USAGE


def test_missing_pool_is_an_input_error(tmp_path):
    assert main(["train", "--instances", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == EXIT_INPUT


def test_unwritable_output_is_an_input_error(pools, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert gen(blocker / "sub") == EXIT_INPUT


def test_default_mode_uses_the_rank_one_recipe(pools):
    port = Portfolio.load(pools / "def" / "portfolio.json")
    assert {e.recipe for e in port.entries} == {"compact"}
    levels = {r["level"] for r in read_rows(pools / "def" / "race-log.csv")}
    assert levels == {"1"}


def test_train_outputs(pools):
    out = pools / "mm"
    for name in ("portfolio.json", "selector.json", "streamliners.json", "race-log.csv", "trace.csv", "calls.csv"):
        assert (out / name).exists()
    man = json.loads((out / "manifest.json").read_text())
    assert set(man["seeds"]) == {"root", "search", "shuffle", "selector"}
    assert man["config"]["mode"] == "mm"
    sel = json.loads((out / "selector.json").read_text())
    assert sel["portfolio_sha256"] == man["outputs"]["portfolio.json"]


def test_missing_baselines_are_computed(pools, tmp_path):
    import shutil

    pool = tmp_path / "pool"
    shutil.copytree(pools / "train", pool)
    (pool / "baselines.csv").unlink()
    assert train(pool, tmp_path / "out") == EXIT_OK
    assert (tmp_path / "out" / "portfolio.json").read_bytes() == (pools / "mm" / "portfolio.json").read_bytes()


def evaluate(pools, out, *extra):
    return main(["evaluate", "--portfolio", str(pools / "def" / "portfolio.json"),
                 "--selector", str(pools / "def" / "selector.json"),
                 "--portfolio", str(pools / "mm" / "portfolio.json"),
                 "--selector", str(pools / "mm" / "selector.json"),
                 "--test", str(pools / "test"), "--out", str(out), *extra])


def test_evaluate_summary_shape(pools, tmp_path):
    assert evaluate(pools, tmp_path, "--budget", "100000") == EXIT_OK
    summary = read_rows(tmp_path / "summary.csv")
    assert [(r["label"], r["kind"]) for r in summary] == [
        ("default", "selector"), ("default", "vbs"), ("mm", "selector"), ("mm", "vbs")]
    report = read_rows(tmp_path / "test-report.csv")
    assert len(report) == 4 * 3
    for r in report:
        fallback = int(r["fallbackCost"])
        if r["streamlinedStatus"] == "SAT":
            assert int(r["totalCost"]) == int(r["streamlinedCost"]) and fallback == 0
        else:
            assert int(r["totalCost"]) == int(r["streamlinedCost"]) + fallback
    assert sorted(p.name for p in tmp_path.glob("plot-*.dat")) == [
        "plot-default-selector.dat", "plot-default-vbs.dat", "plot-mm-selector.dat", "plot-mm-vbs.dat"]


def test_budget_below_every_cost_gives_no_improvement(pools, tmp_path):
    assert evaluate(pools, tmp_path, "--budget", "1") == EXIT_OK
    for r in read_rows(tmp_path / "summary.csv"):
        assert float(r["pctImp"]) == 0.0
        assert float(r["speedup"]) <= 1.0


def test_vbs_only_without_selector(pools, tmp_path):
    code = main(["evaluate", "--portfolio", str(pools / "mm" / "portfolio.json"), "--vbs-only",
                 "--test", str(pools / "test"), "--budget", "100000", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert {r["kind"] for r in read_rows(tmp_path / "summary.csv")} == {"vbs"}


def test_missing_selector_is_a_usage_error(pools, tmp_path):
    code = main(["evaluate", "--portfolio", str(pools / "mm" / "portfolio.json"),
                 "--test", str(pools / "test"), "--budget", "10", "--out", str(tmp_path)])
    assert code == EXIT_USAGE


def test_selector_portfolio_mismatch_is_rejected(pools, tmp_path):
    code = main(["evaluate", "--portfolio", str(pools / "mm" / "portfolio.json"),
                 "--selector", str(pools / "def" / "selector.json"),
                 "--test", str(pools / "test"), "--budget", "10", "--out", str(tmp_path)])
    assert code == EXIT_INPUT


def test_jobs_do_not_change_outputs(pools, tmp_path):
    assert train(pools / "train", tmp_path / "mm2", jobs=2) == EXIT_OK
    for name in ("portfolio.json", "selector.json", "race-log.csv", "trace.csv", "calls.csv"):
        assert (tmp_path / "mm2" / name).read_bytes() == (pools / "mm" / name).read_bytes()
    assert evaluate(pools, tmp_path / "e1", "--budget", "100000") == EXIT_OK
    assert evaluate(pools, tmp_path / "e2", "--budget", "100000", "--jobs", "2") == EXIT_OK
    for name in ("test-report.csv", "summary.csv", "protocol-log.csv", "calls.csv"):
        assert (tmp_path / "e1" / name).read_bytes() == (tmp_path / "e2" / name).read_bytes()


def test_streamliners_dump(tmp_path, capsys):
    assert main(["streamliners", "--out", str(tmp_path / "s.json")]) == EXIT_OK
    doc = json.loads((tmp_path / "s.json").read_text())
    assert len(doc) == 50
    assert main(["streamliners"]) == EXIT_OK
    assert "half.range.even" in capsys.readouterr().out


def test_speculation_changes_only_the_physical_calls(pools, tmp_path):
    assert train(pools / "train", tmp_path / "seq", extra=("--no-speculation",)) == EXIT_OK
    for name in ("race-log.csv", "trace.csv"):
        assert (tmp_path / "seq" / name).read_bytes() == (pools / "mm" / name).read_bytes()
    a = json.loads((tmp_path / "seq" / "portfolio.json").read_text())
    b = json.loads((pools / "mm" / "portfolio.json").read_text())
    assert a["config"]["race"].pop("speculative") is False
    assert b["config"]["race"].pop("speculative") is True
    assert a == b
    seq = read_rows(tmp_path / "seq" / "calls.csv")
    batched = read_rows(pools / "mm" / "calls.csv")
    assert len(seq) <= len(batched)
    assert sum(int(r["cost"]) for r in seq) <= sum(int(r["cost"]) for r in batched)
