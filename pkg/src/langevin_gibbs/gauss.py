"""Exact Gaussian law of the linear system.

The process is Gaussian at every time.  Its mean follows the deterministic
flow ``e^{tA} psi(0)``.  On the thermalizing subspace its covariance is
``C(t) = sigma^2 (U - e^{tA'} U e^{tA'^T})``, where ``U`` solves
``A' U + U A'^T = -g' g'^T``.  With friction ``alpha > 0`` that solution is
``U = diag(V'^{-1}, E) / (2 alpha)``, so the stationary law is the Gibbs
measure at inverse temperature ``2 alpha / sigma^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import PhaseVector, SystemSpec, as_phase, build_drift, energy, energy_form
from .structure import RestrictedSystem, spectral_abscissa

HURWITZ_RTOL = 1e-10
DECAY_TIMES = 20.0


class NotHurwitz(ValueError):
    """The drift has spectrum touching or crossing the imaginary axis."""


class ExpmOverflow(OverflowError):
    pass


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    covariance: np.ndarray
    time: float


@dataclass(frozen=True)
class LyapunovSolution:
    U: np.ndarray

    def residual(self, A, g) -> float:
        """Frobenius norm of ``A U + U A^T + g g^T``."""
        A = np.asarray(A)
        g = np.asarray(g)
        return float(np.linalg.norm(A @ self.U + self.U @ A.T + np.outer(g, g)))


# Pade approximants for the matrix exponential, after Higham (2005).
_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1, 7: 9.504178996162932e-1,
          9: 2.097847961257068e0, 13: 5.371920351148152e0}
_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
         16380.0, 182.0, 1.0),
}


def _pade_low(X, m):
    b = _PADE[m]
    ident = np.eye(X.shape[0])
    X2 = X @ X
    powers = [ident, X2]
    for _ in range(2, (m + 1) // 2):
        powers.append(powers[-1] @ X2)
    u = sum(b[2 * j + 1] * powers[j] for j in range(len(powers)))
    v = sum(b[2 * j] * powers[j] for j in range(len(powers)))
    return X @ u, v


def _pade13(X):
    b = _PADE[13]
    ident = np.eye(X.shape[0])
    X2 = X @ X
    X4 = X2 @ X2
    X6 = X4 @ X2
    u = X @ (X6 @ (b[13] * X6 + b[11] * X4 + b[9] * X2)
             + b[7] * X6 + b[5] * X4 + b[3] * X2 + b[1] * ident)
    v = (X6 @ (b[12] * X6 + b[10] * X4 + b[8] * X2)
         + b[6] * X6 + b[4] * X4 + b[2] * X2 + b[0] * ident)
    return u, v


def expm(A, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``e^{tA}`` by Pade scaling and squaring.

    The Pade degree (3..13) and number of squarings follow from the 1-norm
    of ``tA``.  Raises :class:`ExpmOverflow` if the result is not finite.
    """
    X = float(t) * np.asarray(A, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError("expm needs a square matrix")
    if not np.all(np.isfinite(X)):
        raise ValueError("expm input has non-finite entries")
    norm = np.linalg.norm(X, 1)
    s = 0
    for m in (3, 5, 7, 9):
        if norm <= _THETA[m]:
            u, v = _pade_low(X, m)
            break
    else:
        if norm > _THETA[13]:
            s = int(np.ceil(np.log2(norm / _THETA[13])))
        u, v = _pade13(X / 2.0**s)
    with np.errstate(over="ignore", invalid="ignore"):
        R = np.linalg.solve(v - u, v + u)
        for _ in range(s):
            R = R @ R
    if not np.all(np.isfinite(R)):
        raise ExpmOverflow(f"e^(tA) overflowed (|tA|_1 = {norm:.3g})")
    return R


def check_hurwitz(A, rtol: float = HURWITZ_RTOL) -> float:
    """Return the spectral abscissa, raising :class:`NotHurwitz` if it is not
    below ``-rtol * |A|_F``."""
    A = np.asarray(A, dtype=float)
    a = spectral_abscissa(A)
    if a > -rtol * np.linalg.norm(A):
        raise NotHurwitz(f"spectral abscissa {a:.3e} is not strictly negative")
    return a


def solve_lyapunov_direct(A, g) -> LyapunovSolution:
    """Solve ``A U + U A^T = -g g^T`` by Kronecker vectorization.

    Dense, O(m^6) in the dimension m; meant for m up to a few dozen.
    """
    A = np.asarray(A, dtype=float)
    g = np.asarray(g, dtype=float).ravel()
    check_hurwitz(A)
    m = A.shape[0]
    ident = np.eye(m)
    # row-major vec: vec(A U) = (A kron I) vec U, vec(U A^T) = (I kron A) vec U
    K = np.kron(A, ident) + np.kron(ident, A)
    U = np.linalg.solve(K, -np.outer(g, g).ravel()).reshape(m, m)
    return LyapunovSolution(0.5 * (U + U.T))


def closed_form_U(V, alpha: float) -> LyapunovSolution:
    """``U = diag(V^{-1}, E) / (2 alpha)``.

    Pass the restricted coupling ``V'`` to get the solution on ``L_minus``.
    """
    if alpha <= 0:
        raise ValueError("closed-form U needs alpha > 0")
    V = np.asarray(getattr(V, "V", V), dtype=float)
    d = V.shape[0]
    U = np.zeros((2 * d, 2 * d))
    U[:d, :d] = scipy.linalg.cho_solve(scipy.linalg.cho_factor(V), np.eye(d))
    U[d:, d:] = np.eye(d)
    U /= 2.0 * alpha
    return LyapunovSolution(0.5 * (U + U.T))


def decay_time(restricted: RestrictedSystem) -> float:
    """``1 / |abscissa(A')|``: slowest relaxation time on ``L_minus``."""
    return -1.0 / check_hurwitz(restricted.Aprime)


def covariance_at(spec: SystemSpec, restricted: RestrictedSystem, t: float) -> GaussianState:
    """Law of the noise-driven part at time ``t`` in restricted coordinates."""
    if spec.alpha <= 0:
        raise NotHurwitz("covariance convergence needs alpha > 0")
    check_hurwitz(restricted.Aprime)
    U = closed_form_U(restricted.Vprime, spec.alpha).U
    E = expm(restricted.Aprime, t)
    C = spec.sigma**2 * (U - E @ U @ E.T)
    C = 0.5 * (C + C.T)
    return GaussianState(np.zeros(restricted.dim), C, float(t))


def covariance_full(spec: SystemSpec, restricted: RestrictedSystem, t: float) -> np.ndarray:
    """``C(t)`` lifted to the full phase space (zero on ``L_zero``)."""
    return restricted.embed_matrix(covariance_at(spec, restricted, t).covariance)


def covariance_vanloan(A, g, sigma: float, t: float) -> np.ndarray:
    """``sigma^2 int_0^t e^{sA} g g^T e^{sA^T} ds`` from one block exponential.

    Needs no Hurwitz assumption, so it also covers ``alpha = 0``.
    """
    A = np.asarray(A, dtype=float)
    g = np.asarray(g, dtype=float).ravel()
    m = A.shape[0]
    block = np.zeros((2 * m, 2 * m))
    block[:m, :m] = -A
    block[:m, m:] = sigma**2 * np.outer(g, g)
    block[m:, m:] = A.T
    E = expm(block, t)
    C = E[m:, m:].T @ E[:m, m:]
    return 0.5 * (C + C.T)


def normal_modes(restricted: RestrictedSystem, psi_prime) -> np.ndarray:
    """Map restricted coordinates to normal-mode coordinates ``(a, b)``.

    With ``V' = W diag(lam) W^T``, ``a = sqrt(lam) W^T q'`` and ``b = W^T p'``,
    so ``H' = (|a|^2 + |b|^2) / 2``.  Accepts one point or rows of points.
    """
    x = np.asarray(psi_prime, dtype=float)
    d = restricted.d
    lam, W = np.linalg.eigh(restricted.Vprime)
    a = (x[..., :d] @ W) * np.sqrt(lam)
    b = x[..., d:] @ W
    return np.concatenate([a, b], axis=-1)


def mean_at(spec: SystemSpec, psi0, t: float) -> PhaseVector:
    A = build_drift(spec).A
    return PhaseVector.from_array(expm(A, t) @ as_phase(psi0, spec.N))


def stationary_state(spec: SystemSpec, restricted: RestrictedSystem) -> GaussianState:
    """Zero-mean Gaussian with covariance ``sigma^2 U`` on ``L_minus``."""
    if spec.alpha <= 0:
        raise ValueError("no stationary law without friction (alpha = 0)")
    U = closed_form_U(restricted.Vprime, spec.alpha).U
    return GaussianState(np.zeros(restricted.dim), spec.sigma**2 * U, float("inf"))


def stationary_energy(spec: SystemSpec, restricted: RestrictedSystem) -> float:
    """Limit mean energy ``sigma^2 dim(L_minus) / (4 alpha)``."""
    if spec.alpha <= 0:
        raise ValueError("no stationary law without friction (alpha = 0)")
    return spec.sigma**2 * restricted.dim / (4.0 * spec.alpha)


def gibbs_log_density(spec: SystemSpec, restricted: RestrictedSystem, psi_prime) -> np.ndarray | float:
    """Log of ``exp(-2 alpha H'(psi') / sigma^2) / Z`` on ``L_minus``.

    ``Z`` is the Gaussian normalizer of covariance ``sigma^2 U'``.  Accepts a
    single point or an array of points (one per row).
    """
    if spec.alpha <= 0:
        raise ValueError("Gibbs density needs alpha > 0")
    x = np.asarray(psi_prime, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    d = restricted.d
    q, p = x[:, :d], x[:, d:]
    H = 0.5 * (np.einsum("ij,jk,ik->i", q, restricted.Vprime, q) + np.einsum("ij,ij->i", p, p))
    beta = 2.0 * spec.alpha / spec.sigma**2
    # log det(2 pi sigma^2 U') = 2d log(2 pi / beta) - log det V'
    chol = np.linalg.cholesky(restricted.Vprime)
    logdetV = 2.0 * np.sum(np.log(np.diag(chol)))
    logZ = 0.5 * (2 * d * np.log(2.0 * np.pi / beta) - logdetV)
    out = -beta * H - logZ
    return float(out[0]) if single else out


def mean_energy_at(spec: SystemSpec, restricted: RestrictedSystem, psi0, t: float) -> float:
    """``E H(psi(t))`` = energy of the mean + ``tr(Q' C'(t)) / 2``.

    The conservative and thermalizing parts are orthogonal in the energy
    form, so the deterministic term needs no splitting.
    """
    h = spec.hamiltonian
    mean = mean_at(spec, psi0, t)
    C = covariance_at(spec, restricted, t).covariance
    Qp = energy_form(restricted.hamiltonian)
    return energy(h, mean) + 0.5 * float(np.sum(Qp * C))


def energy_growth_alpha0(spec: SystemSpec, t: float, psi0=None) -> tuple[float, float, float]:
    """Exact ``(E T, E U, E H)`` at time ``t`` without friction.

    Uses the eigenbasis of ``V``: with weights ``c_k = (w_k . e_n)^2`` and
    frequencies ``omega_k``, ``E T = sigma^2/2 sum c_k (t/2 + sin(2 omega_k t)/(4 omega_k))``
    and ``E U`` the same with the sign flipped, so ``E H = sigma^2 t / 2``.
    A nonzero ``psi0`` adds its conserved energy split into kinetic and
    potential parts of the free flow.
    """
    if spec.alpha != 0:
        raise ValueError("energy growth formulas need alpha = 0")
    t = float(t)
    lam, W = np.linalg.eigh(spec.V)
    if lam[0] <= 0:
        raise ValueError("V is not positive definite")
    omega = np.sqrt(lam)
    c = W[spec.index, :] ** 2
    osc = np.sin(2.0 * omega * t) / (4.0 * omega)
    s2 = 0.5 * spec.sigma**2
    ET = s2 * float(c @ (t / 2.0 + osc))
    EU = s2 * float(c @ (t / 2.0 - osc))
    EH = s2 * t
    if psi0 is not None:
        free = mean_at(spec, psi0, t)
        h = spec.hamiltonian
        ET += h.kinetic(free)
        EU += h.potential(free)
        EH += energy(h, psi0)
    return ET, EU, EH
