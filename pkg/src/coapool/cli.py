"""Command-line front end: gen-scenario, allocate, evaluate, perturb, report."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
import zlib
from pathlib import Path

import numpy as np

from . import __version__
from .allocation import (
    GaConfig,
    PoolError,
    check_pool_matches,
    compatibility_score,
    diversity,
    load_pool,
    pool_to_dict,
    run_ga,
)
from .kernels import distance_matrix
from .coa import assemble_pool, rank_lexicographic, write_report
from .robustness import (
    DEFAULT_NOISE_LEVELS,
    rerank_under_noise,
    valid_count_curve,
    write_transitions_csv,
    write_valid_counts_csv,
)
from .scenario import (
    DEFAULT_AREA,
    DEFAULT_C_MIN,
    DEFAULT_DEADLINE_RANGE,
    DEFAULT_VELOCITY,
    InfeasibleScenarioError,
    ScenarioError,
    ScenarioFormatError,
    auto_t_max,
    load_scenario,
    sample_deadlines,
    sample_scenario,
    save_scenario,
)
from .sequencing import DEFAULT_ORACLE_LIMIT, POLICIES, mape

log = logging.getLogger("coapool")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_INPUT = 4

MANIFEST_SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


def substream(seed: int, label: str) -> int:
    """Derive an independent 32-bit seed for a labelled component."""
    ss = np.random.SeedSequence([seed, zlib.crc32(label.encode())])
    return int(ss.generate_state(1)[0])


def _parse_tmax(value: str):
    if value == "auto":
        return "auto"
    try:
        v = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive integer or 'auto'")
    if v < 1:
        raise argparse.ArgumentTypeError("t_max must be >= 1")
    return v


def _parse_levels(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}")


def _parse_sweep(text: str) -> list[float]:
    """``start:stop:step`` with an inclusive stop."""
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected start:stop:step")
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError("sweep needs step > 0 and stop >= start")
    n = int(round((stop - start) / step))
    return [round(start + i * step, 10) for i in range(n + 1)]


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {v}")
    return v


def _common(sub_defaults: bool) -> argparse.ArgumentParser:
    # subcommand copies use SUPPRESS so a value given before the subcommand survives
    d = (lambda v: argparse.SUPPRESS) if sub_defaults else (lambda v: v)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=d(0), help="master seed (default 0)")
    p.add_argument("--out-dir", default=d("."), help="directory for outputs (default .)")
    p.add_argument("--threads", type=_positive_int, default=d(1), help="worker threads for sequencing")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coapool", description="Generate and analyse pools of diverse multi-agent courses of action.",
        parents=[_common(False)],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)
    common = _common(True)

    g = subs.add_parser("gen-scenario", parents=[common], help="sample a random scenario")
    g.add_argument("--tasks", type=_positive_int, required=True)
    g.add_argument("--agents", type=_positive_int, required=True)
    g.add_argument("--area", type=float, default=DEFAULT_AREA, help="side of the square area, meters")
    g.add_argument("--deadline-min", type=float, default=DEFAULT_DEADLINE_RANGE[0])
    g.add_argument("--deadline-max", type=float, default=DEFAULT_DEADLINE_RANGE[1])
    g.add_argument("--velocity", type=float, default=DEFAULT_VELOCITY)
    g.add_argument("--c-min", type=float, default=DEFAULT_C_MIN)
    g.add_argument("--tmax", type=_parse_tmax, default="auto")
    g.add_argument("--output", default="scenario.json")

    a = subs.add_parser("allocate", parents=[common], help="evolve a diverse pool of task assignments")
    a.add_argument("--scenario", required=True)
    a.add_argument("--coas", type=int, default=20)
    a.add_argument("--tmax", type=_parse_tmax, default=None, help="override the scenario's cap ('auto' or int)")
    a.add_argument("--iterations", type=_positive_int, default=5000)
    a.add_argument("--population", type=int, default=100)
    a.add_argument("--mutation", type=float, default=0.1)
    a.add_argument("--elite", type=float, default=0.01)
    a.add_argument("--crossover", type=float, default=0.5)
    a.add_argument("--parents", type=float, default=0.3)
    a.add_argument("--diversity-weight", type=float, default=1.0)
    a.add_argument("--compatibility-weight", type=float, default=1.0)
    a.add_argument("--output", default="pool.json")
    a.add_argument("--history", default="fitness_history.csv")

    e = subs.add_parser("evaluate", parents=[common], help="sequence, score and rank a pool")
    e.add_argument("--scenario", required=True)
    e.add_argument("--pool", required=True)
    e.add_argument("--policy", choices=POLICIES, default="greedy")
    e.add_argument("--against", choices=POLICIES, default=None, help="reference policy for MAPE")
    e.add_argument("--repeats", type=_positive_int, default=1, help="deadline re-samplings")
    e.add_argument("--deadline-min", type=float, default=DEFAULT_DEADLINE_RANGE[0])
    e.add_argument("--deadline-max", type=float, default=DEFAULT_DEADLINE_RANGE[1])
    e.add_argument("--oracle-limit", type=_positive_int, default=DEFAULT_ORACLE_LIMIT)
    e.add_argument("--trajectories", action="store_true", help="also export per-agent trajectory CSVs")
    e.add_argument("--output", default="report.csv")

    p = subs.add_parser("perturb", parents=[common], help="robustness under travel noise or edge removal")
    p.add_argument("--scenario", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--mode", choices=("noise", "removal"), required=True)
    p.add_argument("--policy", choices=POLICIES, default="greedy")
    p.add_argument("--levels", type=_parse_levels, default=list(DEFAULT_NOISE_LEVELS))
    p.add_argument("--repetitions", type=_positive_int, default=1, help="noise seeds per level")
    p.add_argument("--sweep", type=_parse_sweep, default=_parse_sweep("0:10:1"), help="removal percents")
    p.add_argument("--seeds", type=_positive_int, default=1, help="removal seeds")
    p.add_argument("--oracle-limit", type=_positive_int, default=DEFAULT_ORACLE_LIMIT)
    p.add_argument("--output", default=None)

    r = subs.add_parser("report", parents=[common], help="per-COA loads and pairwise distances of a pool")
    r.add_argument("--scenario", required=True)
    r.add_argument("--pool", required=True)
    r.add_argument("--output", default="pool_summary.csv")
    return parser


# ---------------------------------------------------------------------------


def _out(args, name: str) -> Path:
    path = Path(name)
    if not path.is_absolute():
        path = Path(args.out_dir) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def _config(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func",)}


def _manifest(args, seeds: dict, inputs: list, outputs: list, started: float) -> Path:
    path = _out(args, f"{args.command}.manifest.json")
    _write_json(path, {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "command": args.command,
        "config": _config(args),
        "seeds": seeds,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "tool_version": __version__,
        "wall_clock_seconds": time.perf_counter() - started,
    })
    return path


def cmd_gen_scenario(args, started):
    if args.deadline_min <= 0 or args.deadline_max < args.deadline_min:
        raise UsageError("need 0 < --deadline-min <= --deadline-max")
    seed = substream(args.seed, "scenario")
    t_max = None if args.tmax == "auto" else args.tmax
    try:
        scenario = sample_scenario(
            args.tasks, args.agents, area=args.area, deadline_range=(args.deadline_min, args.deadline_max),
            seed=seed, c_min=args.c_min, velocity=args.velocity, t_max=t_max,
        )
    except InfeasibleScenarioError:
        raise
    except ScenarioError as exc:
        raise UsageError(str(exc))
    out = _out(args, args.output)
    save_scenario(scenario, out)
    _manifest(args, {"master": args.seed, "scenario": seed}, [], [out], started)
    print(f"wrote {out}: {scenario.n_task} tasks, {scenario.n_ag} agents, t_max {scenario.t_max}")


def cmd_allocate(args, started):
    if args.coas < 2:
        raise UsageError("--coas must be >= 2: diversity is undefined for a single COA")
    scenario = load_scenario(args.scenario)
    if args.tmax == "auto":
        scenario = scenario.with_t_max(auto_t_max(scenario.n_task, scenario.n_ag))
    elif args.tmax is not None:
        scenario = scenario.with_t_max(args.tmax)
    seed = substream(args.seed, "ga")
    try:
        config = GaConfig(
            population_size=args.population, mutation_prob=args.mutation, elite_ratio=args.elite,
            crossover_prob=args.crossover, parent_ratio=args.parents, iterations=args.iterations,
            diversity_weight=args.diversity_weight, compatibility_weight=args.compatibility_weight, seed=seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    result = run_ga(scenario, args.coas, config)
    pool_path, hist_path = _out(args, args.output), _out(args, args.history)
    payload = pool_to_dict(result)
    payload["t_max"] = scenario.t_max
    _write_json(pool_path, payload)
    result.history.to_csv(hist_path)
    _manifest(args, {"master": args.seed, "ga": seed}, [args.scenario], [pool_path, hist_path], started)
    print(f"wrote {pool_path}: fitness {result.fitness:.3f} "
          f"(diversity {result.diversity:.1f}, compatibility {result.compatibility:.3f}), t_max {scenario.t_max}")


def _load_pair(args):
    scenario = load_scenario(args.scenario)
    pool = load_pool(args.pool)
    check_pool_matches(pool, scenario)
    return scenario, pool


def _warn_fallbacks(coas):
    n = sum(len(c.fallbacks) for c in coas)
    if n:
        total = sum(len(c.trajectories) for c in coas)
        print(f"warning: oracle limit exceeded in {n} of {total} agent runs; those used the greedy policy",
              file=sys.stderr)


def cmd_evaluate(args, started):
    scenario, pool = _load_pair(args)
    pseed = substream(args.seed, "policy")
    kw = dict(oracle_limit=args.oracle_limit, workers=args.threads)
    base = assemble_pool(pool, scenario, args.policy, pseed, **kw)
    _warn_fallbacks(base)
    ranked = rank_lexicographic(base)
    outputs = []

    # per-repeat counts: repeat 0 is the scenario as given unless deadlines are re-sampled
    runs = []
    seeds = {"master": args.seed, "policy": pseed}
    if args.repeats > 1:
        dseed = substream(args.seed, "deadlines")
        seeds["deadlines"] = dseed
        for r in range(args.repeats):
            rng = np.random.default_rng([dseed, r])
            sc = scenario.with_deadlines(
                sample_deadlines(scenario.n_task, (args.deadline_min, args.deadline_max), rng)
            )
            runs.append((r, sc, assemble_pool(pool, sc, args.policy, pseed, **kw)))
    else:
        runs.append((0, scenario, base))

    extra = {}
    counts = np.array([[c.total_completed for c in coas] for _, _, coas in runs])
    if args.repeats > 1:
        extra["completed_mean"] = [repr(float(v)) for v in counts.mean(axis=0)]
        extra["completed_std"] = [repr(float(v)) for v in counts.std(axis=0)]

    against_counts = None
    if args.against is not None:
        against_counts = np.array([
            [c.total_completed for c in assemble_pool(pool, sc, args.against, pseed, **kw)]
            for _, sc, _ in runs
        ])

    report = _out(args, args.output)
    write_report(ranked, report, extra)
    outputs.append(report)

    if args.repeats > 1 or against_counts is not None:
        rpath = _out(args, "repeats.csv")
        with open(rpath, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            header = ["repeat", "coa_id", "completed"] + (["against_completed"] if against_counts is not None else [])
            w.writerow(header)
            for ri, (r, _, coas) in enumerate(runs):
                for k, c in enumerate(coas):
                    row = [r, c.index, c.total_completed]
                    if against_counts is not None:
                        row.append(int(against_counts[ri, k]))
                    w.writerow(row)
        outputs.append(rpath)

    if against_counts is not None:
        mpath = _out(args, "mape.csv")
        with open(mpath, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["policy", "against", "repeat", "mape_percent", "skipped"])
            for ri, (r, _, _) in enumerate(runs):
                w.writerow([args.policy, args.against, r, repr(mape(counts[ri], against_counts[ri])),
                            int((against_counts[ri] == 0).sum())])
            overall = mape(counts.ravel(), against_counts.ravel())
            w.writerow([args.policy, args.against, "all", repr(overall), int((against_counts == 0).sum())])
        outputs.append(mpath)
        print(f"MAPE({args.policy} vs {args.against}) = {overall:.3f}%")

    if args.trajectories:
        tdir = _out(args, "trajectories")
        tdir.mkdir(exist_ok=True)
        deadlines = scenario.deadlines
        for c in base:
            for t in c.trajectories:
                path = tdir / f"coa{c.index:03d}_agent{t.agent_id}.csv"
                t.to_csv(path, deadlines)
                outputs.append(path)

    _manifest(args, seeds, [args.scenario, args.pool], outputs, started)
    best = ranked.order[0]
    print(f"wrote {report}: {pool.n_coa} COAs, best COA {best} completes "
          f"{base[best].total_completed}/{scenario.n_task} tasks")


def cmd_perturb(args, started):
    scenario, pool = _load_pair(args)
    pseed = substream(args.seed, "policy")
    rseed = substream(args.seed, "perturb")
    kw = dict(oracle_limit=args.oracle_limit, workers=args.threads)
    seeds = {"master": args.seed, "policy": pseed, "perturb": rseed}
    for lvl in args.levels if args.mode == "noise" else args.sweep:
        if not 0 <= lvl <= 100:
            raise UsageError(f"percent {lvl} outside [0, 100]")
    if args.mode == "noise":
        _, results = rerank_under_noise(
            pool, scenario, args.levels, args.policy, rseed, repetitions=args.repetitions, policy_seed=pseed, **kw
        )
        out = _out(args, args.output or "transitions.csv")
        write_transitions_csv(results, out)
        for res in results:
            print(f"lambda {res.level:g}%: diag {np.round(np.diag(res.mean), 3).tolist()}")
    else:
        coas = assemble_pool(pool, scenario, args.policy, pseed, **kw)
        _warn_fallbacks(coas)
        batch = [substream(rseed, f"removal/{i}") for i in range(args.seeds)]
        seeds["removal"] = batch
        rows = valid_count_curve(coas, scenario, args.sweep, batch)
        out = _out(args, args.output or "valid_counts.csv")
        write_valid_counts_csv(rows, out)
        print(f"wrote {out}: {len(rows)} rows")
    _manifest(args, seeds, [args.scenario, args.pool], [out], started)


def cmd_report(args, started):
    scenario, pool = _load_pair(args)
    compat = scenario.compat.values
    out = _out(args, args.output)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["coa_id", "agent", "n_tasks", "compatibility", "over_t_max"])
        for k in range(pool.n_coa):
            for j in range(scenario.n_ag):
                tasks = pool.tasks_of(k, j)
                w.writerow([k, j, len(tasks), repr(float(compat[j, tasks].sum())), int(len(tasks) > scenario.t_max)])
    dpath = _out(args, "distances.csv")
    dist = distance_matrix(pool.assignments)
    with open(dpath, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["coa_id"] + [f"coa{k}" for k in range(pool.n_coa)])
        for k in range(pool.n_coa):
            w.writerow([k] + [int(v) for v in dist[k]])
    div = diversity(pool)
    comp = compatibility_score(pool, compat)
    _manifest(args, {"master": args.seed}, [args.scenario, args.pool], [out, dpath], started)
    print(f"diversity {div:g}, compatibility {comp:.3f}, fitness {div + comp:.3f}")


COMMANDS = {
    "gen-scenario": cmd_gen_scenario,
    "allocate": cmd_allocate,
    "evaluate": cmd_evaluate,
    "perturb": cmd_perturb,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    try:
        COMMANDS[args.command](args, started)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"coapool {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleScenarioError as exc:
        print(f"coapool {args.command}: infeasible scenario: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ScenarioFormatError, ScenarioError, PoolError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"coapool {args.command}: bad input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
