"""Acceptance criteria; each check prints one PASS/FAIL line."""
import csv
import math
import time

import numpy as np
import pytest

from coapool import kernels
from coapool.allocation import GaConfig, assignment_matrix, diversity, random_population, run_ga
from coapool.cli import main
from coapool.coa import assemble_pool, rank_lexicographic
from coapool.robustness import count_valid, remove_edges, rerank_under_noise, valid_count_curve
from coapool.scenario import sample_scenario
from coapool.sequencing import SequencerSim, mape, reward, sequence_exact, sequence_greedy, sequence_random
from conftest import criterion, random_single_agent
from oracles import brute_force_mst, brute_force_sequence, permutation_counts


def single(sc):
    return SequencerSim(sc, 0, range(sc.n_task))


def test_c1_exact_matches_enumeration():
    rng = np.random.default_rng(101)
    cases = [random_single_agent(rng, 1 + i % 8, deadline_range=(100, 2000)) for i in range(200)]
    with criterion("C1 exact == brute force on 200 instances (<= 8 tasks), < 30 s") as note:
        spent = 0.0
        mismatches = 0
        for i, sc in enumerate(cases):
            start = time.perf_counter()
            traj = sequence_exact(single(sc))
            spent += time.perf_counter() - start
            args = (sc.travel_matrix(0), sc.completion_times(0), sc.deadlines)
            count, _ = brute_force_sequence(*args)
            if sc.n_task <= 6:
                assert permutation_counts(*args)[0] == count
            mismatches += traj.completed_count != count
        note["detail"] = f"mismatches={mismatches} exact_time={spent:.2f}s"
        assert mismatches == 0
        assert spent < 30.0


def test_c2_policy_dominance_and_mape():
    rng = np.random.default_rng(202)
    exact, greedy, rand_mean = [], [], []
    exact_again = []
    for i in range(20):
        n = int(rng.integers(12, 17))
        sc = sample_scenario(n, 1, seed=2000 + i)
        exact.append(sequence_exact(single(sc)).completed_count)
        exact_again.append(sequence_exact(single(sc)).completed_count)
        greedy.append(sequence_greedy(single(sc)).completed_count)
        rand_mean.append(np.mean([
            sequence_random(single(sc), np.random.default_rng([i, s])).completed_count for s in range(50)
        ]))
    with criterion("C2 exact >= greedy >= random mean, exact > random, MAPE(exact, exact) = 0") as note:
        m_ge = mape(greedy, exact)
        note["detail"] = (f"exact={np.mean(exact):.2f} greedy={np.mean(greedy):.2f} "
                          f"random={np.mean(rand_mean):.2f} MAPE(greedy vs exact)={m_ge:.2f}%")
        assert all(e >= g for e, g in zip(exact, greedy))
        assert np.mean(greedy) >= np.mean(rand_mean)
        assert np.sum(exact) > np.sum(rand_mean)
        assert mape(exact_again, exact) == 0.0


GA_SCENARIO = dict(n_task=20, n_ag=2, seed=0)


def _gain(result):
    init = result.history.initial_best_diversity
    return (result.diversity - init) / init


def test_c3_diversity_gain():
    sc = sample_scenario(**GA_SCENARIO)
    with criterion("C3a final diversity >= 1.05 x best initial diversity, < 5 min") as note:
        start = time.perf_counter()
        res = run_ga(sc, 5, GaConfig(iterations=500, seed=0))
        spent = time.perf_counter() - start
        note["detail"] = (f"initial={res.history.initial_best_diversity:g} final={res.diversity:g} "
                          f"gain={_gain(res):.1%} time={spent:.1f}s")
        assert res.diversity >= 1.05 * res.history.initial_best_diversity
        assert spent < 300.0


def test_c3_doubled_diversity_weight_increases_gain():
    sc = sample_scenario(**GA_SCENARIO)
    with criterion("C3b doubling diversity_weight strictly increases the gain") as note:
        base = run_ga(sc, 5, GaConfig(iterations=500, seed=0, diversity_weight=1.0))
        doubled = run_ga(sc, 5, GaConfig(iterations=500, seed=0, diversity_weight=2.0))
        note["detail"] = f"gain(w=1)={_gain(base):.1%} gain(w=2)={_gain(doubled):.1%}"
        assert _gain(doubled) > _gain(base)


def test_c4_constraints_after_repair():
    rng = np.random.default_rng(404)
    with criterion("C4 1000 repaired individuals: one owner per task, loads <= t_max") as note:
        violations = owners = 0
        checked = 0
        while checked < 1000:
            n_ag = int(rng.integers(2, 6))
            n_task = int(rng.integers(5, 60))
            t_max = int(rng.integers(-(-n_task // n_ag), n_task // 2 + 2))
            compat = rng.uniform(0.01, 1.0, size=(n_ag, n_task))
            pop = random_population(rng, 10, 4, n_task, n_ag)
            kernels.repair_population(pop, compat, t_max)
            for genome in pop.reshape(-1, n_task):
                m = assignment_matrix(genome, n_ag)
                owners += int(np.any(m.sum(axis=0) != 1))
                violations += int(np.any(m.sum(axis=1) > t_max))
                checked += 1
        note["detail"] = f"checked={checked} owner_violations={owners} load_violations={violations}"
        assert owners == 0 and violations == 0


def test_c5_diversity_equals_brute_force_mst():
    rng = np.random.default_rng(505)
    with criterion("C5 diversity == brute-force MST on 50 pools (n_coa <= 6), tol 1e-9") as note:
        worst = 0.0
        for _ in range(50):
            pool = rng.integers(0, int(rng.integers(2, 5)), size=(int(rng.integers(2, 7)), 15))
            ref = brute_force_mst(kernels.distance_matrix(pool.astype(np.intc)))
            worst = max(worst, abs(diversity(pool) - ref))
        note["detail"] = f"max_abs_err={worst:g}"
        assert worst <= 1e-9


def test_c6_reward_identity():
    with criterion("C6 reward(0)=0, reward(10)=1-e, strictly decreasing on 0..50") as note:
        err = abs(reward(10) - (1 - math.e))
        note["detail"] = f"|reward(10)-(1-e)|={err:.1e}"
        assert reward(0) == 0.0
        assert err <= 1e-12
        assert all(reward(k + 1) < reward(k) for k in range(50))


@pytest.fixture(scope="module")
def desk_pool():
    sc = sample_scenario(60, 3, seed=7)
    pool = run_ga(sc, 20, GaConfig(iterations=200, seed=7)).pool
    return sc, pool


def test_c7_perturbation_contracts(desk_pool):
    sc, pool = desk_pool
    with criterion("C7 noise identity at 0, rows sum to 1, removal curves non-increasing, "
                   "<= 1% removal leaves a valid COA") as note:
        _, results = rerank_under_noise(pool, sc, [0, 5, 10, 15, 20], "greedy", seed=3, repetitions=2)
        assert all(np.array_equal(m, np.eye(4)) for m in results[0].matrices)
        worst = max(float(np.abs(m.sum(axis=1) - 1).max()) for r in results for m in r.matrices)
        assert worst <= 1e-9

        coas = assemble_pool(pool, sc, "greedy")
        rows = valid_count_curve(coas, sc, range(0, 11), seeds=range(5))
        for s in range(5):
            counts = [n for _, n, seed in rows if seed == s]
            assert all(b <= a for a, b in zip(counts, counts[1:])), (s, counts)

        low = [count_valid(coas, remove_edges(sc, p, s)) for p in (0.25, 0.5, 1.0) for s in range(5)]
        note["detail"] = f"row_sum_err={worst:.1e} min_valid_at_<=1%={min(low)}/20"
        assert min(low) >= 1


def _cli_outputs(root, seed):
    def run(*argv):
        assert main([str(a) for a in argv] + ["--seed", str(seed), "--out-dir", str(root)]) == 0

    run("gen-scenario", "--tasks", 30, "--agents", 3, "--deadline-min", 300, "--deadline-max", 6000)
    scen, pool = root / "scenario.json", root / "pool.json"
    run("allocate", "--scenario", scen, "--coas", 8, "--iterations", 20, "--population", 20)
    run("evaluate", "--scenario", scen, "--pool", pool, "--policy", "random", "--against", "exact",
        "--repeats", 3, "--trajectories")
    run("perturb", "--scenario", scen, "--pool", pool, "--mode", "noise", "--repetitions", 2)
    run("perturb", "--scenario", scen, "--pool", pool, "--mode", "removal", "--seeds", 2)
    run("report", "--scenario", scen, "--pool", pool)
    files = sorted(p for p in root.rglob("*") if p.suffix in (".csv", ".json") and "manifest" not in p.name)
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in files}


def test_c8_cli_determinism(tmp_path):
    with criterion("C8 every CLI command re-run with the same seed gives identical outputs") as note:
        a = _cli_outputs(tmp_path / "a", 11)
        b = _cli_outputs(tmp_path / "b", 11)
        n_csv = sum(name.endswith(".csv") for name in a)
        note["detail"] = f"files={len(a)} csv={n_csv}"
        assert a.keys() == b.keys()
        assert [k for k in a if a[k] != b[k]] == []
        with open(tmp_path / "a" / "report.csv", newline="") as fh:
            assert len(list(csv.reader(fh))) == 9


def test_c9_elitism():
    runs = [
        (sample_scenario(20, 2, seed=1), 5, GaConfig(iterations=150, seed=1)),
        (sample_scenario(40, 4, seed=2), 6, GaConfig(iterations=100, population_size=30, mutation_prob=0.3, seed=2)),
        (sample_scenario(15, 3, seed=3), 3, GaConfig(iterations=100, population_size=8, elite_ratio=0.0, seed=3)),
        (sample_scenario(25, 2, seed=4), 4, GaConfig(iterations=100, diversity_weight=0.1, seed=4)),
    ]
    with criterion("C9 best fitness never decreases over generations") as note:
        drops = 0
        gens = 0
        for sc, n_coa, cfg in runs:
            h = run_ga(sc, n_coa, cfg).history.best_fitness
            gens += len(h)
            drops += sum(b < a for a, b in zip(h, h[1:]))
        note["detail"] = f"runs={len(runs)} generations={gens} decreases={drops} (every other GA run is also hooked)"
        assert drops == 0

