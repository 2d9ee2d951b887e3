#!/usr/bin/env python3
"""Benchmark: compiled kernel core vs pure-Python fallback.

Times the hot paths (single map evaluations, batch iteration, hybrid section
extraction, a small parameter sweep) on both backends and prints a table.

    python3 benchmarks/bench_backends.py [--quick]
"""
import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from beblab import _backend
from beblab._backend import build_pack, pure_engine
from beblab.system import SystemParams, line_g


def timeit(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(engine, scale):
    p = SystemParams()
    X0 = line_g(p, -0.001)
    out = {}

    n_single = 200 * scale
    def single():
        X = X0.copy()
        for _ in range(n_single):
            st, X, _ = engine.return_map(X)
            assert st == 0
    out[f"return_map x{n_single}"] = timeit(single)

    n_batch = 2000 * scale
    out[f"iterate_x x{n_batch}"] = timeit(lambda: engine.iterate_x(X0, 100, n_batch))

    n_sect = 300 * scale
    out[f"section_sequence x{n_sect}"] = timeit(
        lambda: engine.section_sequence(X0, 20, n_sect)
    )

    pnl = SystemParams(mu=0.8, nonlinear=True)
    Xn = line_g(pnl, -0.0008)
    eng_nl = type(engine)(build_pack(pnl))
    n_nl = 100 * scale
    out[f"nonlinear extraction x{n_nl}"] = timeit(
        lambda: eng_nl.section_sequence(Xn, 10, n_nl)
    )
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="smaller workloads")
    args = ap.parse_args()
    scale = 1 if args.quick else 5

    pack = build_pack(SystemParams())
    engines = [("pure", pure_engine(pack))]
    if _backend.compiled_available():
        engines.append(("compiled", _backend._core.Engine(pack)))
    else:
        print("compiled core not built; benchmarking the pure backend only")

    results = {name: bench(eng, scale) for name, eng in engines}
    keys = list(next(iter(results.values())))
    width = max(len(k) for k in keys)
    header = f"{'workload':<{width}}  " + "  ".join(f"{n:>12}" for n in results)
    if len(results) == 2:
        header += f"  {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for k in keys:
        row = f"{k:<{width}}  " + "  ".join(f"{results[n][k]*1e3:10.1f}ms" for n in results)
        if len(results) == 2:
            row += f"  {results['pure'][k]/results['compiled'][k]:8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
