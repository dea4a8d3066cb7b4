#!/usr/bin/env python3
"""Benchmark the compiled stepping kernel against the pure-Python engine.

Runs the load-switching scenario at a configurable horizon on every
available engine and reports wall time, steps/second and the speedup.
Also cross-checks that both engines produced identical event sequences
and matching end states.

    python benchmarks/bench_engines.py [--duration 0.5] [--repeat 3]
"""

import argparse
import time

import numpy as np

from etgrid.engine import available_engines
from etgrid.harness import default_config, run_scenario


def bench(engine: str, duration: float, repeat: int):
    config = default_config("custom", duration=duration, s1_close=0.1 * duration,
                            s1_open=0.6 * duration, engine=engine)
    best = np.inf
    traces = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        traces, metrics = run_scenario(config)
        best = min(best, time.perf_counter() - t0)
    return best, config.n_steps, traces


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--duration", type=float, default=0.5,
                        help="simulated horizon [s] (default 0.5)")
    parser.add_argument("--repeat", type=int, default=3,
                        help="timing repetitions, best-of (default 3)")
    args = parser.parse_args()

    engines = available_engines()
    print(f"engines available: {', '.join(engines)}")
    print(f"scenario: {args.duration} s at h = 10 us "
          f"({round(args.duration / 1e-5)} control steps, 54-state RK4)\n")

    results = {}
    for engine in engines:
        wall, n_steps, traces = bench(engine, args.duration, args.repeat)
        results[engine] = (wall, traces)
        print(f"{engine:>9}: {wall:8.3f} s  "
              f"({n_steps / wall / 1e3:8.1f} k steps/s)")

    if len(results) == 2:
        speedup = results["python"][0] / results["compiled"][0]
        print(f"\nspeedup compiled vs python: {speedup:.1f}x")
        tp, tc = results["python"][1], results["compiled"][1]
        events_equal = all(np.array_equal(a, b)
                           for a, b in zip(tp.event_times, tc.event_times))
        state_diff = np.abs(tp.y_final - tc.y_final).max()
        print(f"event sequences identical: {events_equal}; "
              f"max end-state difference: {state_diff:.3e}")


if __name__ == "__main__":
    main()
