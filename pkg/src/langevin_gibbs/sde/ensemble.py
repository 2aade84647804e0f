"""Monte Carlo ensembles of the discretized system.

Each trajectory ``i`` draws its Brownian increments from its own Philox
stream keyed by ``(seed, i)``, so a trajectory's path does not depend on
block size, chunking or worker count.  Trajectories are integrated in fixed
blocks; per-block moments are merged with the pairwise update of Chan et al.
in a fixed binary tree, which makes the statistics bitwise reproducible for
a given backend.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .. import gauss
from ..model import PhaseVector, SystemSpec, as_phase, build_drift
from ..structure import RestrictedSystem
from ._backend import BACKEND, get_kernel

log = logging.getLogger(__name__)

ACCURACY_LIMIT = 0.1
SEED_BITS = 64


class NumericalInstability(RuntimeError):
    pass


class StepSizeError(NumericalInstability):
    """``dt`` is too coarse for the spectral radius of the drift."""


class IntegrationDiverged(NumericalInstability):
    def __init__(self, traj, step, time):
        self.traj, self.step, self.time = traj, step, time
        super().__init__(f"trajectory {traj} diverged at step {step} (t = {time:.6g})")


class Scheme(str, Enum):
    EULER_MARUYAMA = "euler-maruyama"
    SEMI_IMPLICIT = "semi-implicit"

    @property
    def code(self) -> int:
        return 0 if self is Scheme.EULER_MARUYAMA else 1


@dataclass(frozen=True)
class IntegratorConfig:
    """Step size, horizon and checkpoint times.

    Checkpoints are snapped to the nearest multiple of ``dt``; ``max_snap``
    records the largest shift.  Without explicit checkpoints only ``t_end``
    is recorded.
    """

    dt: float
    t_end: float
    checkpoints: tuple = ()
    scheme: Scheme = Scheme.EULER_MARUYAMA

    def __post_init__(self):
        if not self.dt > 0 or not self.t_end > 0:
            raise ValueError("dt and t_end must be positive")
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        cps = tuple(float(t) for t in self.checkpoints) or (float(self.t_end),)
        if any(b < a for a, b in zip(cps, cps[1:])):
            raise ValueError("checkpoints must be non-decreasing")
        if cps[0] < 0 or cps[-1] > self.t_end * (1 + 1e-12):
            raise ValueError("checkpoints must lie in [0, t_end]")
        object.__setattr__(self, "checkpoints", cps)

    @property
    def n_steps(self) -> int:
        return max(1, round(self.t_end / self.dt))

    @property
    def checkpoint_steps(self) -> np.ndarray:
        steps = np.array([round(t / self.dt) for t in self.checkpoints], dtype=np.dtype("l"))
        return np.minimum(steps, self.n_steps)

    @property
    def checkpoint_times(self) -> np.ndarray:
        return self.checkpoint_steps * self.dt

    @property
    def max_snap(self) -> float:
        return float(np.max(np.abs(self.checkpoint_times - np.array(self.checkpoints))))


def check_step_size(spec: SystemSpec, config: IntegratorConfig) -> float:
    """Enforce ``dt * rho(A) < 0.1`` and return ``dt * rho(A)``."""
    rho = float(np.max(np.abs(np.linalg.eigvals(build_drift(spec).A))))
    ratio = config.dt * rho
    if ratio >= ACCURACY_LIMIT:
        raise StepSizeError(
            f"dt * rho(A) = {ratio:.3g} exceeds {ACCURACY_LIMIT}; use dt < {ACCURACY_LIMIT / rho:.3g}")
    if spec.alpha > 0 and config.dt >= 2 * min(1.0, spec.alpha) / rho:
        log.warning("dt = %g is above the advised stability bound %g",
                    config.dt, 2 * min(1.0, spec.alpha) / rho)
    return ratio


def step(spec: SystemSpec, psi, dt: float, noise_increment: float,
         scheme: Scheme | str = Scheme.EULER_MARUYAMA) -> PhaseVector:
    """One step for a single trajectory; ``noise_increment`` is ``dW ~ N(0, dt)``.

    Reference implementation of what the block kernels do.
    """
    scheme = Scheme(scheme)
    x = as_phase(psi, spec.N)
    N, k = spec.N, spec.index
    q, p = x[:N].copy(), x[N:].copy()
    with np.errstate(over="ignore", invalid="ignore"):
        f = spec.V @ q
        f[k] += spec.alpha * p[k]
        if scheme is Scheme.EULER_MARUYAMA:
            q += dt * p
            p -= dt * f
            p[k] += spec.sigma * noise_increment
        else:
            p -= dt * f
            p[k] += spec.sigma * noise_increment
            q += dt * p
    out = np.concatenate([q, p])
    if not np.all(np.isfinite(out)):
        raise NumericalInstability("non-finite state after step")
    return PhaseVector.from_array(out)


def trajectory_stream(seed: int, traj: int) -> np.random.Generator:
    """Counter-based substream for one trajectory: Philox keyed by ``(traj, seed)``."""
    if not 0 <= seed < 2**SEED_BITS:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return np.random.Generator(np.random.Philox(key=(int(traj) << SEED_BITS) | int(seed)))


@dataclass
class _Moments:
    n: int
    mean: np.ndarray      # (K, D)
    m2: np.ndarray        # (K, D, D) centred cross products
    e_mean: np.ndarray    # (K,)
    e_m2: np.ndarray      # (K,)


def _block_moments(states: np.ndarray, V: np.ndarray) -> _Moments:
    N = V.shape[0]
    q, p = states[..., :N], states[..., N:]
    e = 0.5 * (np.einsum("kbi,ij,kbj->kb", q, V, q) + np.einsum("kbi,kbi->kb", p, p))
    mean = states.mean(axis=1)
    xc = states - mean[:, None, :]
    m2 = np.einsum("kbi,kbj->kij", xc, xc)
    e_mean = e.mean(axis=1)
    ec = e - e_mean[:, None]
    return _Moments(states.shape[1], mean, m2, e_mean, np.einsum("kb,kb->k", ec, ec))


def _merge(a: _Moments, b: _Moments) -> _Moments:
    n = a.n + b.n
    w = a.n * b.n / n
    delta = b.mean - a.mean
    de = b.e_mean - a.e_mean
    return _Moments(
        n,
        a.mean + delta * (b.n / n),
        a.m2 + b.m2 + w * np.einsum("ki,kj->kij", delta, delta),
        a.e_mean + de * (b.n / n),
        a.e_m2 + b.e_m2 + w * de * de,
    )


def _tree_merge(items: list) -> _Moments:
    while len(items) > 1:
        items = [_merge(items[i], items[i + 1]) if i + 1 < len(items) else items[i]
                 for i in range(0, len(items), 2)]
    return items[0]


@dataclass(frozen=True)
class EnsembleStats:
    """Sample moments of the ensemble at each checkpoint.

    ``covariance`` and ``energy_var`` use the unbiased ``M - 1`` divisor.
    ``samples`` holds the raw states, shape ``(K, M, 2N)``, only when
    requested.
    """

    times: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray
    energy_mean: np.ndarray
    energy_var: np.ndarray
    M: int
    seed: int
    psi0: np.ndarray
    dt: float
    scheme: Scheme
    backend: str
    max_snap: float
    samples: np.ndarray | None = field(default=None, repr=False)

    @property
    def energy_stderr(self) -> np.ndarray:
        return np.sqrt(self.energy_var / self.M)

    @property
    def mean_stderr(self) -> np.ndarray:
        return np.sqrt(np.einsum("kii->ki", self.covariance) / self.M)


def simulate_ensemble(spec: SystemSpec, psi0, config: IntegratorConfig, M: int, seed: int, *,
                      backend: str | None = None, block_size: int = 1024, chunk_steps: int = 2048,
                      workers: int = 1, keep_samples: bool = False,
                      check_dt: bool = True) -> EnsembleStats:
    """Integrate ``M`` independent trajectories from ``psi0`` and collect moments.

    Results depend only on ``(spec, psi0, config, M, seed, block_size)`` and
    the backend, not on ``workers`` or ``chunk_steps``.
    """
    if M < 2:
        raise ValueError("need at least two trajectories")
    if check_dt:
        check_step_size(spec, config)
    kernel = get_kernel(backend)
    backend = BACKEND if backend is None else backend
    x0 = as_phase(psi0, spec.N)
    N = spec.N
    V = np.ascontiguousarray(spec.V)
    ckpt = np.ascontiguousarray(config.checkpoint_steps)
    K, n_steps, dt = len(ckpt), config.n_steps, config.dt
    code = config.scheme.code

    def run_block(bounds):
        b0, b1 = bounds
        B = b1 - b0
        Q = np.tile(x0[:N], (B, 1))
        P = np.tile(x0[N:], (B, 1))
        out = np.empty((K, B, 2 * N))
        out[ckpt == 0] = x0
        gens = [trajectory_stream(seed, i) for i in range(b0, b1)]
        step0 = 0
        while step0 < n_steps:
            L = min(chunk_steps, n_steps - step0)
            noise = np.empty((B, L))
            for row, gen in zip(noise, gens):
                gen.standard_normal(out=row)
            status, traj, bad = kernel(V, spec.alpha, spec.sigma, spec.index, dt, code,
                                       Q, P, noise, step0, ckpt, out)
            if status:
                raise IntegrationDiverged(b0 + traj, bad, bad * dt)
            step0 += L
        return _block_moments(out, V), (out if keep_samples else None)

    bounds = [(b, min(b + block_size, M)) for b in range(0, M, block_size)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_block, bounds))
    else:
        results = [run_block(b) for b in bounds]
    mom = _tree_merge([r[0] for r in results])
    samples = np.concatenate([r[1] for r in results], axis=1) if keep_samples else None
    cov = mom.m2 / (M - 1)
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    return EnsembleStats(
        times=config.checkpoint_times,
        mean=mom.mean,
        covariance=cov,
        energy_mean=mom.e_mean,
        energy_var=mom.e_m2 / (M - 1),
        M=M,
        seed=seed,
        psi0=x0.copy(),
        dt=dt,
        scheme=config.scheme,
        backend=backend,
        max_snap=config.max_snap,
        samples=samples,
    )


def discrete_moments(spec: SystemSpec, psi0, config: IntegratorConfig) -> list[gauss.GaussianState]:
    """Exact mean and covariance of the discretized chain at each checkpoint.

    The one-step map is linear, ``x' = F x + b xi``, so moments follow the
    recursions ``m' = F m`` and ``C' = F C F^T + b b^T``.  This isolates the
    scheme's bias from sampling error.
    """
    N, k, dt = spec.N, spec.index, config.dt
    drift = build_drift(spec)
    A, g = drift.A, drift.g
    amp = spec.sigma * math.sqrt(dt)
    if config.scheme is Scheme.EULER_MARUYAMA:
        F = np.eye(2 * N) + dt * A
        b = amp * g
    else:
        D = np.zeros((N, N))
        D[k, k] = spec.alpha
        damp = np.eye(N) - dt * D
        F = np.block([[np.eye(N) - dt * dt * spec.V, dt * damp], [-dt * spec.V, damp]])
        b = amp * np.concatenate([dt * g[N:], g[N:]])
    bb = np.outer(b, b)
    m = as_phase(psi0, N).copy()
    C = np.zeros((2 * N, 2 * N))
    out = []
    steps = config.checkpoint_steps
    i = 0
    for s in range(config.n_steps + 1):
        while i < len(steps) and steps[i] == s:
            out.append(gauss.GaussianState(m.copy(), C.copy(), s * dt))
            i += 1
        if i == len(steps):
            break
        m = F @ m
        C = F @ C @ F.T + bb
    return out


@dataclass(frozen=True)
class ComparisonRow:
    t: float
    emp_mean_energy: float
    stderr: float
    exact_mean_energy: float
    z: float
    cov_frobenius_gap: float
    cov_relative_gap: float
    l0_mean_gap: float
    l0_variance: float


def empirical_vs_exact(stats: EnsembleStats, spec: SystemSpec,
                       restricted: RestrictedSystem) -> list[ComparisonRow]:
    """Compare ensemble moments with the exact Gaussian law at each checkpoint.

    The ``L_zero`` part of every trajectory evolves deterministically, so its
    sample variance is zero up to rounding and its sample mean differs from
    ``e^{tA} psi0`` only by the discretization error.
    """
    drift = build_drift(spec)
    P0 = np.eye(2 * spec.N) - restricted.basis @ restricted.basis.T
    rows = []
    for k, t in enumerate(stats.times):
        mean_exact = gauss.mean_at(spec, stats.psi0, t).to_array()
        if spec.alpha > 0:
            exact_e = gauss.mean_energy_at(spec, restricted, stats.psi0, t)
            C = gauss.covariance_full(spec, restricted, t)
        else:
            exact_e = gauss.energy_growth_alpha0(spec, t, stats.psi0)[2]
            C = gauss.covariance_vanloan(drift.A, drift.g, spec.sigma, t)
        S = stats.covariance[k]
        se = float(stats.energy_stderr[k])
        diff = float(stats.energy_mean[k]) - exact_e
        if se > 0:
            z = diff / se
        else:
            z = 0.0 if abs(diff) <= 1e-12 * max(1.0, abs(exact_e)) else math.copysign(math.inf, diff)
        gap = float(np.linalg.norm(S - C))
        cnorm = float(np.linalg.norm(C))
        rows.append(ComparisonRow(
            t=float(t),
            emp_mean_energy=float(stats.energy_mean[k]),
            stderr=se,
            exact_mean_energy=exact_e,
            z=z,
            cov_frobenius_gap=gap,
            cov_relative_gap=gap / cnorm if cnorm > 0 else (0.0 if gap == 0 else math.inf),
            l0_mean_gap=float(np.linalg.norm(P0 @ (stats.mean[k] - mean_exact))),
            l0_variance=float(np.trace(P0 @ S @ P0)),
        ))
    return rows


def sample_energies(spec: SystemSpec, states) -> np.ndarray:
    """Energy of each row of ``states``."""
    x = np.atleast_2d(np.asarray(states, dtype=float))
    N = spec.N
    q, p = x[:, :N], x[:, N:]
    return 0.5 * (np.einsum("bi,ij,bj->b", q, spec.V, q) + np.einsum("bi,bi->b", p, p))
