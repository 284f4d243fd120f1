"""Compare the numba and pure-Python simulation kernels.

Usage::

    python benchmarks/bench_simulate.py [--scenario eight_agent] [--events 200000] [--repeat 3]

Both kernels consume the same pre-drawn uniforms, so besides timing the
script checks that the two event logs are bit-identical.
"""

import argparse
import time

import numpy as np

from peerchoice import kernels
from peerchoice.scenarios import load_scenario
from peerchoice.simulator import simulate


def run(model, horizon, kernel, seed):
    t0 = time.perf_counter()
    log = simulate(model, horizon, seed=seed, kernel=kernel)
    return log, time.perf_counter() - t0


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenario", default="eight_agent")
    p.add_argument("--events", type=int, default=200_000)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    model = load_scenario(args.scenario).model
    horizon = args.events / model.rates.sum()
    rows = []
    logs = {}
    backends = [("python", kernels.simulate_chunk_python)]
    if kernels.simulate_chunk_numba is not None:
        # first call compiles; keep it out of the timings
        simulate(model, 10.0 / model.rates.sum(), seed=args.seed, kernel=kernels.simulate_chunk_numba)
        backends.append(("numba", kernels.simulate_chunk_numba))
    for name, kern in backends:
        times = []
        for _ in range(args.repeat):
            log, dt = run(model, horizon, kern, args.seed)
            times.append(dt)
        logs[name] = log
        rows.append((name, len(log), min(times), len(log) / min(times)))

    print(f"scenario={args.scenario} horizon={horizon:.6g} repeat={args.repeat}")
    print(f"{'backend':<8} {'events':>9} {'best s':>9} {'events/s':>12}")
    for name, n, best, rate in rows:
        print(f"{name:<8} {n:>9d} {best:>9.3f} {rate:>12.0f}")
    if "numba" in logs:
        a, b = logs["python"], logs["numba"]
        same = all(np.array_equal(getattr(a, f), getattr(b, f))
                   for f in ("times", "agents", "before", "choices", "active"))
        speedup = rows[0][2] / rows[1][2]
        print(f"speedup {speedup:.1f}x, logs bit-identical: {same}")
        return 0 if same else 1
    print("numba unavailable; python kernel only")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
