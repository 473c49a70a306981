"""Benchmark the numba kernels against the pure-numpy fallback.

Runs each representation's batch kernel on identical pregenerated noise
through both backends, reports throughput in trajectory-steps per second,
and checks that the two paths agree.

    python3 benchmarks/bench_kernels.py --n 20000 --steps 200 --repeat 3
"""

import argparse
import time

import numpy as np

from opow.backend import get_kernels
from opow.integrators import DIVERGENCE_LIMIT, NOISE_FLOATS_PER_STEP
from opow.noise import optimal_sigma_params

MODEL = dict(kappa=1.0, gamma1=1.0, gamma2=1.0, eps=1.5 + 0j)
SIGMA = optimal_sigma_params(1.0, 0.33)


def make_inputs(rep, n, steps, seed=0):
    rng = np.random.default_rng(seed)
    width = NOISE_FLOATS_PER_STEP[rep]
    noise = rng.standard_normal((n, steps * width)) if width else np.empty((n, 0))
    za = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / 2
    zb = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / 2
    alpha = 1.0 + za
    beta = 1.0 + zb
    return alpha, np.conj(alpha), beta, np.conj(beta), noise


def run(kern, rep, inputs, steps, record_every):
    alpha, alpha_dag, beta, beta_dag, noise = (v.copy() for v in inputs)
    n = alpha.shape[0]
    n_rec = steps // record_every + 1
    obs = np.empty((n, n_rec, 3))
    rec = np.empty(n, dtype=np.int64)
    args = (alpha, alpha_dag, beta, beta_dag, noise, steps,
            MODEL["kappa"], MODEL["gamma1"], MODEL["gamma2"], MODEL["eps"])
    if rep == "positive_w":
        kern.integrate_positive_w(*args, SIGMA.q, SIGMA.q_dag, SIGMA.s, SIGMA.s_dag,
                                  SIGMA.p, SIGMA.p_dag, SIGMA.r, SIGMA.r_dag,
                                  0.01, record_every, DIVERGENCE_LIMIT, obs, rec)
    else:
        getattr(kern, f"integrate_{rep}")(*args, 0.01, record_every,
                                          DIVERGENCE_LIMIT, obs, rec)
    return alpha, obs, rec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=20000, help="trajectories per batch")
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--record-every", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    backends = {}
    for name in ("numba", "numpy"):
        try:
            backends[name] = get_kernels(name)
        except Exception as exc:  # numba may be unavailable
            print(f"backend {name}: unavailable ({exc})")
    reps = ("positive_w", "positive_p", "truncated_wigner", "classical")

    print(f"\n{args.n} trajectories x {args.steps} steps, best of {args.repeat}")
    print(f"{'representation':18s} " + "".join(f"{b:>14s}" for b in backends)
          + f"{'speedup':>10s}{'max|diff|':>12s}")
    for rep in reps:
        inputs = make_inputs(rep, args.n, args.steps)
        times = {}
        finals = {}
        for name, kern in backends.items():
            run(kern, rep, inputs, args.steps, args.record_every)  # warm JIT
            best = np.inf
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                alpha, obs, rec = run(kern, rep, inputs, args.steps, args.record_every)
                best = min(best, time.perf_counter() - t0)
            times[name] = best
            finals[name] = (alpha, obs)
        row = f"{rep:18s} "
        for name in backends:
            rate = args.n * args.steps / times[name]
            row += f"{rate / 1e6:>11.1f} M/s"
        if len(backends) == 2:
            a, b = finals["numba"], finals["numpy"]
            diff = max(np.abs(a[0] - b[0]).max(), np.abs(a[1] - b[1]).max())
            row += f"{times['numpy'] / times['numba']:>9.1f}x{diff:>12.2e}"
        print(row)


if __name__ == "__main__":
    main()
