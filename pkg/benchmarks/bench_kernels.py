"""Compare the numba and pure-numpy trajectory kernels.

Both backends consume the same uniform stream, so after equal step counts
they must end in the same state; the script checks this before timing.

    python benchmarks/bench_kernels.py --nodes 100 500 2000 --steps 50000
"""

import argparse
import time

import numpy as np

from pbnsteady._accel import HAVE_NUMBA
from pbnsteady.model import GeneratorSpec, density, generate_random
from pbnsteady.sim import SimCursor


def rate(model, backend, steps, seed):
    cursor = SimCursor(model, seed, backend=backend)
    cursor.simulate(10)  # compile / warm caches
    t0 = time.perf_counter()
    cursor.simulate(steps)
    return steps / (time.perf_counter() - t0)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, nargs="+", default=[100, 500, 2000])
    ap.add_argument("--steps", type=int, default=50_000, help="steps timed on the numba backend")
    ap.add_argument("--numpy-steps", type=int, default=5_000)
    ap.add_argument("--max-funcs", type=int, default=2)
    ap.add_argument("--max-parents", type=int, default=5)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed (or disabled via PBNSTEADY_DISABLE_NUMBA)")

    print(f"{'nodes':>6} {'density':>8} {'numba steps/s':>14} {'numpy steps/s':>14} {'speedup':>8}")
    for n in args.nodes:
        model = generate_random(GeneratorSpec(n, 1, args.max_funcs, 1, min(args.max_parents, n),
                                              seed=args.seed, perturbation_p=0.001))
        a = SimCursor(model, args.seed, backend="numba")
        b = SimCursor(model, args.seed, backend="numpy")
        a.simulate(500)
        b.simulate(500)
        assert np.array_equal(a.state, b.state), "backends diverged"
        fast = rate(model, "numba", args.steps, args.seed)
        slow = rate(model, "numpy", args.numpy_steps, args.seed)
        print(f"{n:>6} {density(model):>8.2f} {fast:>14,.0f} {slow:>14,.0f} {fast / slow:>7.1f}x")


if __name__ == "__main__":
    main()
