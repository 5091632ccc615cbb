"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from coapool import kernels


def cases(rng):
    pop = rng.integers(0, 5, size=(100, 20, 100)).astype(np.intc)
    compat = rng.uniform(0.01, 1.0, size=(5, 100))
    yield "population_fitness P=100 K=20 N=100", lambda k: k.population_fitness(pop, compat, 1.0, 1.0)

    def fresh_repair(k):
        p = pop.copy()
        k.repair_population(p, compat, 22)

    yield "repair_population P=100 K=20 N=100", fresh_repair
    for n in (12, 14):
        xy = rng.uniform(0, 1000, size=(n + 1, 2))
        travel = np.hypot(*(xy[:, None, :] - xy[None, :, :]).transpose(2, 0, 1))
        comp = 10.0 / rng.uniform(0.01, 1.0, size=n)
        deadline = rng.uniform(500, 8000, size=n)
        yield f"exact_sequence k={n}", lambda k, t=travel, c=comp, d=deadline: k.exact_sequence(t, c, d, 0.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = {"python": kernels.get_backend("python")}
    try:
        backends["compiled"] = kernels.get_backend("compiled")
    except ImportError:
        print("compiled backend not built; timing the fallback only")
    print(f"{'kernel':40s}" + "".join(f"{name:>12s}" for name in backends) + "     speedup")
    for label, fn in cases(np.random.default_rng(0)):
        times = {name: min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
                 for name, mod in backends.items()}
        row = f"{label:40s}" + "".join(f"{t * 1e3:10.1f}ms" for t in times.values())
        if len(times) == 2:
            row += f"  {times['python'] / times['compiled']:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
