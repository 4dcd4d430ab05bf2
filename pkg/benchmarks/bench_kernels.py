"""Time the compiled and pure-numpy kernel backends on training-sized inputs.

Usage: python benchmarks/bench_kernels.py [--horizon 64] [--demos 10] [--repeat 50]
"""

import argparse
import timeit

import numpy as np

from ads_ilfo import kernels


def _inputs(horizon, n, seed=0):
    rng = np.random.default_rng(seed)
    walk = np.cumsum(rng.normal(size=(n + 1, horizon, 10)) * 0.05, axis=1)
    agent, demos = walk[0], walk[1:]
    return [np.linalg.norm(agent[:, None] - d[None], axis=-1) for d in demos]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--horizon", type=int, default=64)
    parser.add_argument("--demos", type=int, default=10)
    parser.add_argument("--repeat", type=int, default=50)
    args = parser.parse_args(argv)

    costs = _inputs(args.horizon, args.demos)
    T = args.horizon
    cases = {
        "sinkhorn (one episode label)": lambda k: [k.sinkhorn_potentials(C, 0.01 * C.mean(), 500, 1e-6) for C in costs],
        "progress test (all prefixes)": lambda k: [k.prefix_alignment(C, n) for C in costs for n in range(1, T + 1)],
        "lis (length T)": lambda k: k.lis_length(np.argsort(costs[0][0])),
    }
    backends = kernels.backends()
    print(f"T = {T}, N = {args.demos}, best of {args.repeat}; active backend: {kernels.BACKEND}")
    print(f"{'kernel':<32}" + "".join(f"{name:>14}" for name in backends) + f"{'speedup':>10}")
    for label, fn in cases.items():
        times = {}
        for name, mod in backends.items():
            times[name] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        row = f"{label:<32}" + "".join(f"{times[n] * 1e3:>11.3f} ms" for n in backends)
        if "compiled" in times:
            row += f"{times['python'] / times['compiled']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
