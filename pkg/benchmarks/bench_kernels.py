"""Time the numpy and numba implementations of each kernel on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Prints the best-of-``repeat`` wall time per call and the speedup. Outputs are
also compared, so a run doubles as a bit-identity spot check.
"""

import argparse
import timeit

import numpy as np

from econospace import _kernels


def cases(scale, rng):
    n_agents = int(200_000 * scale)
    cells = rng.integers(0, 4096, n_agents)
    weights = rng.uniform(size=(n_agents, 8))
    yield "scatter_add", (cells, weights, 4096), f"{n_agents} rows x 8 -> 4096 cells"

    n = int(400 * scale) or 1
    f = rng.uniform(size=(64, n, 64))
    u = rng.normal(size=(64, n + 1, 64))
    u[:, [0, -1], :] = 0.0
    yield "upwind_divergence", (f, u, 0.01), f"64 x {n} x 64 block"

    steps = int(20_000 * scale) or 1
    x0, y0 = rng.normal(size=(2, 16))
    a, b = rng.uniform(0.5, 2, 16), -rng.uniform(0.5, 2, 16)
    yield "rk4_pairs", (x0, y0, a, b, 1e-3, steps), f"16 pairs x {steps} steps"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0)
    args = ap.parse_args()
    if _kernels.NUMBA is None:
        raise SystemExit("numba backend unavailable (is ECONOSPACE_DISABLE_NUMBA set?)")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18} {'size':<32} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8} identical")
    for name, call_args, size in cases(args.scale, rng):
        np_fn, nb_fn = _kernels.NUMPY[name], _kernels.NUMBA[name]
        same = all(np.array_equal(p, q) for p, q in zip(np.atleast_1d(np_fn(*call_args)),
                                                        np.atleast_1d(nb_fn(*call_args))))
        t_np = min(timeit.repeat(lambda: np_fn(*call_args), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: nb_fn(*call_args), number=1, repeat=args.repeat))
        print(f"{name:<18} {size:<32} {1e3 * t_np:>10.2f} {1e3 * t_nb:>10.2f} {t_np / t_nb:>8.1f} {same}")


if __name__ == "__main__":
    main()
