"""Compare the numba and NumPy iteration kernels on the default problem size.

Usage: python benchmarks/bench_kernels.py [--T 20000] [--repeat 3]

Noise is drawn once up front so only the kernels are timed.  The numba
kernel is compiled (or loaded from cache) before timing starts.
"""
import argparse
import time

import numpy as np

from sclipnet import kernels
from sclipnet.algorithms import AlgoSpec, initial_state
from sclipnet.clipping import Schedule
from sclipnet.noise import NoiseModel, build_truncated_sampler
from sclipnet.problem import generate
from sclipnet.rng import NoiseSource, problem_stream
from sclipnet.topology import build_cycle_with_degree, metropolis_weights

SPECS = [
    AlgoSpec("sclip_ef_network", schedule=Schedule(1.0, 0.3, 0.5, 0.27386127875258304)),
    AlgoSpec("dsgd", a=0.3),
    AlgoSpec("network_gclip", a=1.0, lam=5.0),
    AlgoSpec("sclip_ef", schedule=Schedule(1.0, 0.3, 0.5, 0.27386127875258304)),
]


def time_kernel(backend, spec, problem, W, xi, repeat):
    advance = kernels.get_advance(backend)
    n, d = problem.n, problem.d
    best, out = np.inf, None
    for _ in range(repeat):
        st = initial_state(n, d)
        out = np.empty((xi.shape[0], len(kernels.METRICS)))
        t0 = time.perf_counter()
        advance(spec.code, spec.network, W, problem.A, problem.b, problem.x_star, problem.A_mean,
                st.X, st.M, st.X.mean(axis=0), 0, xi, *spec.kernel_args(), out)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    problem = generate(20, 10, problem_stream(0))
    W = metropolis_weights(build_cycle_with_degree(20, 4)).W
    xi = NoiseSource(build_truncated_sampler(NoiseModel()), 1, 0, 20, 10).window(0, args.T)
    # warm-up compile
    time_kernel("numba", SPECS[0], problem, W, xi[:10], 1)
    print(f"T={args.T}, n=20, d=10, best of {args.repeat}")
    print(f"{'algorithm':<20}{'numpy s':>10}{'numba s':>10}{'speedup':>9}{'max |diff|':>12}")
    for spec in SPECS:
        tn, on = time_kernel("numpy", spec, problem, W, xi, args.repeat)
        tb, ob = time_kernel("numba", spec, problem, W, xi, args.repeat)
        diff = np.max(np.abs(on - ob) / np.maximum(1.0, np.abs(on)))
        print(f"{spec.kind:<20}{tn:>10.3f}{tb:>10.3f}{tn / tb:>9.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
