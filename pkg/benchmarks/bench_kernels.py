"""Compare the compiled and NumPy stepping kernels.

    python benchmarks/bench_kernels.py --N 2 8 32 --trajectories 1024 --steps 2048

Times one kernel call on a fixed noise chunk (RNG excluded), then a full
``simulate_ensemble`` run per backend (RNG included), and checks that the
two backends agree.
"""

import argparse
import time
import timeit

import numpy as np

from langevin_gibbs.model import SystemSpec, chain_hamiltonian
from langevin_gibbs.sde import KERNELS, IntegratorConfig, simulate_ensemble


def kernel_time(name, spec, B, L, repeat):
    N = spec.N
    rng = np.random.default_rng(0)
    noise = rng.standard_normal((B, L))
    V = np.ascontiguousarray(spec.V)
    ckpt = np.array([L], dtype=np.dtype("l"))

    def run():
        Q = np.zeros((B, N))
        P = np.zeros((B, N))
        out = np.empty((1, B, 2 * N))
        KERNELS[name](V, spec.alpha, spec.sigma, spec.index, 1e-3, 0, Q, P, noise, 0, ckpt, out)
        return out

    best = min(timeit.repeat(run, number=1, repeat=repeat))
    return best, run()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--N", type=int, nargs="+", default=[2, 8, 32])
    ap.add_argument("--trajectories", type=int, default=1024)
    ap.add_argument("--steps", type=int, default=2048)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--ensemble-M", type=int, default=4096)
    args = ap.parse_args(argv)
    names = sorted(KERNELS)
    B, L = args.trajectories, args.steps

    print(f"kernel only: {B} trajectories x {L} steps, best of {args.repeat}")
    print(f"{'N':>4} " + " ".join(f"{n + ' [ns/step]':>18}" for n in names) + "   speedup   max |diff|")
    for N in args.N:
        spec = SystemSpec(chain_hamiltonian(N, 1.0, 1.0), 1.0, 1.0, 1)
        res = {n: kernel_time(n, spec, B, L, args.repeat) for n in names}
        per_step = {n: 1e9 * res[n][0] / (B * L) for n in names}
        line = f"{N:>4} " + " ".join(f"{per_step[n]:>18.1f}" for n in names)
        if len(names) == 2:
            diff = np.max(np.abs(res["cython"][1] - res["numpy"][1]))
            line += f"   {per_step['numpy'] / per_step['cython']:7.2f}x   {diff:.1e}"
        print(line)

    spec = SystemSpec(chain_hamiltonian(2, 1.0, 1.0), 1.0, 1.0, 1)
    cfg = IntegratorConfig(1e-3, L * 1e-3)
    print(f"\nfull ensemble (RNG included): N=2, M={args.ensemble_M}, {cfg.n_steps} steps")
    for n in names:
        t0 = time.perf_counter()
        stats = simulate_ensemble(spec, np.zeros(4), cfg, args.ensemble_M, 1, backend=n)
        print(f"  {n:>7}: {time.perf_counter() - t0:7.2f} s   mean energy {stats.energy_mean[-1]:.6f}")


if __name__ == "__main__":
    main()
