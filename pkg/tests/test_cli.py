import csv
import json

import numpy as np
import pytest

from coapool.cli import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, EXIT_USAGE, main


def run(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("gen-scenario", "--tasks", 24, "--agents", 3, "--seed", 4, "--deadline-min", 300,
               "--deadline-max", 4000, "--out-dir", d) == EXIT_OK
    assert run("allocate", "--scenario", d / "scenario.json", "--coas", 8, "--iterations", 15,
               "--population", 20, "--seed", 4, "--out-dir", d) == EXIT_OK
    return d


def test_gen_scenario_hundred_by_five(tmp_path):
    assert run("gen-scenario", "--tasks", 100, "--agents", 5, "--seed", 1, "--out-dir", tmp_path) == EXIT_OK
    data = json.loads((tmp_path / "scenario.json").read_text())
    assert len(data["tasks"]) == 100 and len(data["agents"]) == 5
    manifest = json.loads((tmp_path / "gen-scenario.manifest.json").read_text())
    assert manifest["command"] == "gen-scenario" and "seeds" in manifest


def test_gen_scenario_repeatable(tmp_path):
    for sub in ("a", "b"):
        assert run("gen-scenario", "--tasks", 30, "--agents", 2, "--seed", 9, "--out-dir", tmp_path / sub) == 0
    assert (tmp_path / "a/scenario.json").read_bytes() == (tmp_path / "b/scenario.json").read_bytes()


def test_usage_errors(tmp_path, workdir):
    assert run("gen-scenario", "--tasks", 0, "--agents", 2, "--out-dir", tmp_path) == EXIT_USAGE
    assert run("gen-scenario", "--tasks", 5, "--agents", 2, "--tmax", "soon", "--out-dir", tmp_path) == EXIT_USAGE
    assert run("allocate", "--scenario", workdir / "scenario.json", "--coas", 1, "--out-dir", tmp_path) == EXIT_USAGE
    assert run("perturb", "--scenario", workdir / "scenario.json", "--pool", workdir / "pool.json",
               "--mode", "removal", "--sweep", "5:1:1", "--out-dir", tmp_path) == EXIT_USAGE


def test_infeasible_and_bad_input(tmp_path):
    assert run("gen-scenario", "--tasks", 30, "--agents", 2, "--tmax", 10, "--out-dir", tmp_path) == EXIT_INFEASIBLE
    assert run("allocate", "--scenario", tmp_path / "missing.json", "--out-dir", tmp_path) == EXIT_INPUT
    (tmp_path / "broken.json").write_text("{}")
    assert run("allocate", "--scenario", tmp_path / "broken.json", "--out-dir", tmp_path) == EXIT_INPUT


def test_allocate_tmax_auto(tmp_path):
    assert run("gen-scenario", "--tasks", 100, "--agents", 4, "--tmax", 60, "--out-dir", tmp_path) == 0
    assert run("allocate", "--scenario", tmp_path / "scenario.json", "--coas", 20, "--tmax", "auto",
               "--iterations", 3, "--population", 6, "--out-dir", tmp_path) == 0
    pool = json.loads((tmp_path / "pool.json").read_text())
    assert pool["t_max"] == 35
    loads = [np.bincount(a, minlength=4).max() for a in pool["assignments"]]
    assert max(loads) <= 35
    rows = read_csv(tmp_path / "fitness_history.csv")
    assert rows[0] == ["generation", "best_fitness", "diversity_term", "compatibility_term"]
    assert len(rows) == 4
    assert float(rows[-1][1]) >= float(rows[1][1])


def test_evaluate_exact_against_exact(workdir, tmp_path):
    assert run("evaluate", "--scenario", workdir / "scenario.json", "--pool", workdir / "pool.json",
               "--policy", "exact", "--against", "exact", "--out-dir", tmp_path) == EXIT_OK
    report = read_csv(tmp_path / "report.csv")
    assert len(report) == 9
    assert sorted(int(r[report[0].index("rank")]) for r in report[1:]) == list(range(1, 9))
    mape_rows = read_csv(tmp_path / "mape.csv")
    header = mape_rows[0]
    assert all(float(r[header.index("mape_percent")]) == 0.0 for r in mape_rows[1:])


def test_evaluate_random_repeats(workdir, tmp_path):
    assert run("evaluate", "--scenario", workdir / "scenario.json", "--pool", workdir / "pool.json",
               "--policy", "random", "--repeats", 4, "--trajectories", "--out-dir", tmp_path) == 0
    header = read_csv(tmp_path / "report.csv")[0]
    assert "completed_mean" in header and "completed_std" in header
    assert len(list((tmp_path / "trajectories").glob("*.csv"))) == 8 * 3


def test_perturb_noise_zero_is_identity(workdir, tmp_path):
    assert run("perturb", "--scenario", workdir / "scenario.json", "--pool", workdir / "pool.json",
               "--mode", "noise", "--levels", 0, "--out-dir", tmp_path) == 0
    rows = read_csv(tmp_path / "transitions.csv")[1:]
    m = np.array([[float(v) for v in r[3:]] for r in rows])
    assert np.array_equal(m, np.eye(4))


def test_perturb_removal_sweep(workdir, tmp_path):
    assert run("perturb", "--scenario", workdir / "scenario.json", "--pool", workdir / "pool.json",
               "--mode", "removal", "--sweep", "0:10:1", "--out-dir", tmp_path) == 0
    rows = read_csv(tmp_path / "valid_counts.csv")
    assert rows[0] == ["removal_percent", "n_valid", "seed"]
    counts = [int(r[1]) for r in rows[1:]]
    assert len(counts) == 11
    assert all(b <= a for a, b in zip(counts, counts[1:]))


def test_report_command(workdir, tmp_path):
    assert run("report", "--scenario", workdir / "scenario.json", "--pool", workdir / "pool.json",
               "--out-dir", tmp_path) == 0
    rows = read_csv(tmp_path / "pool_summary.csv")
    assert len(rows) == 1 + 8 * 3
    assert {r[-1] for r in rows[1:]} <= {"0", "False"}
    dist = read_csv(tmp_path / "distances.csv")
    assert len(dist) >= 8


def test_pool_scenario_mismatch(workdir, tmp_path):
    assert run("gen-scenario", "--tasks", 10, "--agents", 3, "--out-dir", tmp_path) == 0
    assert run("evaluate", "--scenario", tmp_path / "scenario.json", "--pool", workdir / "pool.json",
               "--out-dir", tmp_path) == EXIT_INPUT
