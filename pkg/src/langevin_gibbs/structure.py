"""Invariant splitting of phase space into thermalizing and conservative parts.

The noise reaches exactly the Krylov space ``l_V = span{V^k e_n}``.  The
thermalizing subspace ``L_minus`` consists of phase points whose positions
and momenta both lie in ``l_V``; its orthogonal complement ``L_zero``
carries the modes that never feel the bath.  Both are invariant under the
drift matrix.  Membership is always decided algebraically from the Krylov
basis, never by running the flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import (
    DriftMatrix,
    Hamiltonian,
    PhaseVector,
    SystemSpec,
    as_phase,
    build_drift,
)

RANK_RTOL = 1e-9
DET_TOL = 1e-10


@dataclass(frozen=True)
class KrylovBasis:
    """Orthonormal basis ``v_1 = e_n, v_2, ..., v_d`` of ``l_V``.

    ``vectors`` holds the basis as columns.  ``residuals[k]`` is the norm of
    the new direction that produced ``v_{k+1}`` (``residuals[0] == 1`` for
    ``e_n``); ``discarded`` is the residual that ended the iteration, or
    ``None`` when the basis filled the whole space.
    """

    vectors: np.ndarray
    residuals: np.ndarray
    discarded: float | None
    rank_tol: float

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @property
    def min_retained_residual(self) -> float:
        return float(self.residuals.min())


def default_rank_tol(h: Hamiltonian) -> float:
    return RANK_RTOL * np.linalg.norm(h.V, 2)


def krylov_subspace(h: Hamiltonian, n: int, rank_tol: float | None = None) -> KrylovBasis:
    """Arnoldi-style orthonormal basis of ``span{V^k e_n}``.

    Each candidate ``V v_k`` is orthogonalized twice against the current
    basis; the iteration stops once the remaining norm drops below
    ``rank_tol`` (default ``1e-9 * |V|_2``).
    """
    N = h.N
    if not 1 <= n <= N:
        raise ValueError(f"n must be in [1, {N}], got {n}")
    if rank_tol is None:
        rank_tol = default_rank_tol(h)
    basis = np.zeros((N, N))
    basis[n - 1, 0] = 1.0
    residuals = [1.0]
    discarded = None
    d = 1
    while d < N:
        w = h.V @ basis[:, d - 1]
        for _ in range(2):
            w -= basis[:, :d] @ (basis[:, :d].T @ w)
        # keep later vectors exactly orthogonal to e_n
        w[n - 1] = 0.0
        r = float(np.linalg.norm(w))
        if r < rank_tol:
            discarded = r
            break
        basis[:, d] = w / r
        residuals.append(r)
        d += 1
    vectors = basis[:, :d].copy()
    vectors.setflags(write=False)
    return KrylovBasis(vectors, np.array(residuals), discarded, float(rank_tol))


def sigma_matrix(h: Hamiltonian, n: int) -> np.ndarray:
    """Matrix whose k-th column (k = 0..N-1) is ``V^k e_n``."""
    N = h.N
    S = np.empty((N, N))
    col = np.zeros(N)
    col[n - 1] = 1.0
    for k in range(N):
        S[:, k] = col
        col = h.V @ col
    return S


def sigma_det_ratio(h: Hamiltonian, n: int) -> float:
    """``|det Sigma(V)|`` divided by the product of its column norms.

    The ratio lies in ``[0, 1]`` (Hadamard) and does not blow up with N.
    """
    S = sigma_matrix(h, n)
    norms = np.linalg.norm(S, axis=0)
    if np.any(norms == 0):
        return 0.0
    sign, logdet = np.linalg.slogdet(S / norms)
    return 0.0 if sign == 0 else float(np.exp(logdet))


def hadamard_flagged(h: Hamiltonian, n: int, tol: float = DET_TOL) -> bool:
    """True when :func:`sigma_det_ratio` is below ``tol``.

    Reliable only for small N: the columns ``V^k e_n`` align quickly, so
    the ratio decays geometrically with N even when ``Sigma(V)`` is far
    from singular (the N = 8 chain has ``det = 1`` but ratio ~1e-17).
    """
    return sigma_det_ratio(h, n) < tol


def is_degenerate(h: Hamiltonian, n: int, rank_tol: float | None = None) -> bool:
    """True when ``det Sigma(V) = 0``, i.e. the Krylov space misses directions.

    Decided by the re-orthogonalized Krylov residuals, which equals
    ``dim L_zero > 0``.
    """
    return krylov_subspace(h, n, rank_tol).d < h.N


def sigma_rank(h: Hamiltonian, n: int, rank_tol: float | None = None) -> int:
    """Numerical rank of ``Sigma(V)`` from its singular values."""
    if rank_tol is None:
        rank_tol = default_rank_tol(h)
    s = np.linalg.svd(sigma_matrix(h, n), compute_uv=False)
    return int(np.sum(s > rank_tol))


@dataclass(frozen=True)
class SubspaceDecomposition:
    krylov: KrylovBasis
    basis_minus: np.ndarray
    basis_zero: np.ndarray
    projector_minus: np.ndarray
    projector_zero: np.ndarray

    @property
    def N(self) -> int:
        return self.basis_minus.shape[0] // 2

    @property
    def d(self) -> int:
        return self.krylov.d

    @property
    def dim_minus(self) -> int:
        return self.basis_minus.shape[1]

    @property
    def dim_zero(self) -> int:
        return self.basis_zero.shape[1]


def build_decomposition(h: Hamiltonian, n: int, rank_tol: float | None = None) -> SubspaceDecomposition:
    K = krylov_subspace(h, n, rank_tol)
    N, d = h.N, K.d
    P = np.zeros((2 * N, 2 * d))
    P[:N, :d] = K.vectors
    P[N:, d:] = K.vectors
    Qfull, _ = scipy.linalg.qr(P, mode="full")
    P0 = Qfull[:, 2 * d:].copy()
    proj_minus = P @ P.T
    proj_zero = np.eye(2 * N) - proj_minus
    for arr in (P, P0, proj_minus, proj_zero):
        arr.setflags(write=False)
    return SubspaceDecomposition(K, P, P0, proj_minus, proj_zero)


def decompose_state(psi, dec: SubspaceDecomposition) -> tuple[PhaseVector, PhaseVector]:
    """Split ``psi`` into its ``L_zero`` and ``L_minus`` components."""
    x = as_phase(psi, dec.N)
    minus = dec.projector_minus @ x
    zero = x - minus
    return PhaseVector.from_array(zero), PhaseVector.from_array(minus)


def spectral_abscissa(A) -> float:
    """Largest real part of the eigenvalues of ``A``."""
    return float(np.max(np.linalg.eigvals(A).real))


@dataclass(frozen=True)
class RestrictedSystem:
    """The dynamics on ``L_minus`` written in the coordinates ``psi' = P^T psi``.

    ``P`` stacks the basis ``(v_k, 0)`` followed by ``(0, v_k)``, so the
    restricted drift keeps the block form ``[[0, E], [-V', -D']]`` with
    ``D' = alpha * Delta_1``.
    """

    Vprime: np.ndarray
    Dprime: np.ndarray
    gprime: np.ndarray
    Aprime: np.ndarray
    basis: np.ndarray
    alpha: float
    sigma: float

    @property
    def d(self) -> int:
        return self.Vprime.shape[0]

    @property
    def dim(self) -> int:
        return 2 * self.d

    @property
    def hamiltonian(self) -> Hamiltonian:
        return Hamiltonian(self.Vprime)

    def coordinates(self, psi) -> np.ndarray:
        """``psi' = P^T psi`` (the component of ``psi`` in ``L_minus``)."""
        return self.basis.T @ np.asarray(psi, dtype=float)

    def embed(self, psi_prime) -> np.ndarray:
        return self.basis @ np.asarray(psi_prime, dtype=float)

    def energy(self, psi_prime) -> float:
        psi_prime = np.asarray(psi_prime, dtype=float)
        d = self.d
        q, p = psi_prime[:d], psi_prime[d:]
        return 0.5 * float(q @ self.Vprime @ q + p @ p)

    def embed_matrix(self, M) -> np.ndarray:
        """``P M P^T``: lift a restricted-coordinate matrix to phase space."""
        return self.basis @ M @ self.basis.T


def restrict_system(spec: SystemSpec, dec: SubspaceDecomposition) -> RestrictedSystem:
    K = dec.krylov.vectors
    d = K.shape[1]
    Vp = K.T @ spec.V @ K
    Vp = 0.5 * (Vp + Vp.T)
    Dp = np.zeros((d, d))
    Dp[0, 0] = spec.alpha
    gp = np.zeros(2 * d)
    gp[d] = 1.0
    Ap = np.zeros((2 * d, 2 * d))
    Ap[:d, d:] = np.eye(d)
    Ap[d:, :d] = -Vp
    Ap[d:, d:] = -Dp
    for arr in (Vp, Dp, gp, Ap):
        arr.setflags(write=False)
    return RestrictedSystem(Vp, Dp, gp, Ap, dec.basis_minus, spec.alpha, spec.sigma)


@dataclass(frozen=True)
class Analysis:
    """Bundle of everything derived from a :class:`SystemSpec`."""

    spec: SystemSpec
    drift: DriftMatrix
    decomposition: SubspaceDecomposition
    restricted: RestrictedSystem
    det_ratio: float

    @property
    def degenerate(self) -> bool:
        return self.decomposition.d < self.spec.N

    @property
    def abscissa(self) -> float:
        """Spectral abscissa of the restricted drift."""
        return spectral_abscissa(self.restricted.Aprime)

    def record(self) -> dict:
        K = self.decomposition.krylov
        return {
            "N": self.spec.N,
            "n": self.spec.n,
            "d": self.decomposition.d,
            "dim_L_minus": self.decomposition.dim_minus,
            "dim_L_zero": self.decomposition.dim_zero,
            "det_sigma_ratio": self.det_ratio,
            "det_sigma_degenerate": self.degenerate,
            "hadamard_below_cutoff": self.det_ratio < DET_TOL,
            "spectral_abscissa": self.abscissa,
            "min_retained_residual": K.min_retained_residual,
            "discarded_residual": K.discarded,
            "rank_tol": K.rank_tol,
        }


def analyze(spec: SystemSpec, rank_tol: float | None = None) -> Analysis:
    dec = build_decomposition(spec.hamiltonian, spec.n, rank_tol)
    return Analysis(
        spec=spec,
        drift=build_drift(spec),
        decomposition=dec,
        restricted=restrict_system(spec, dec),
        det_ratio=sigma_det_ratio(spec.hamiltonian, spec.n),
    )
