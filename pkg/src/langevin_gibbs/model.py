"""Problem instances for the thermostatted linear oscillator network.

A system is a network of ``N`` coupled oscillators with quadratic
Hamiltonian ``H(q, p) = |p|^2 / 2 + q^T V q / 2``.  Friction ``alpha`` and
white noise of amplitude ``sigma`` act on the momentum of a single
distinguished coordinate ``n``::

    dq = p dt
    dp = (-V q - alpha p_n e_n) dt + sigma e_n dW

The distinguished index is 1-based everywhere in the public API and is
converted to a 0-based offset through :attr:`SystemSpec.index`.  No physical
units are implied; ``V``, ``alpha`` and ``sigma`` are taken in one consistent
set of dimensionless units.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

SYMMETRY_TOL = 1e-10


class ModelError(ValueError):
    """Invalid system parameters or matrix input."""


class MatrixFormatError(ModelError):
    """A matrix file could not be parsed; ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


@dataclass(frozen=True)
class Hamiltonian:
    """Quadratic Hamiltonian defined by a symmetric positive definite ``V``.

    The input is symmetrized before use.  Asymmetry above ``SYMMETRY_TOL``
    relative to ``|V|`` or a failed Cholesky factorization raises
    :class:`ModelError`.
    """

    V: np.ndarray

    def __post_init__(self):
        V = np.array(self.V, dtype=float, copy=True)
        if V.ndim == 0:
            V = V.reshape(1, 1)
        if V.ndim != 2 or V.shape[0] != V.shape[1] or V.shape[0] == 0:
            raise ModelError(f"V must be a non-empty square matrix, got shape {V.shape}")
        if not np.all(np.isfinite(V)):
            raise ModelError("V has non-finite entries")
        scale = np.linalg.norm(V)
        if np.max(np.abs(V - V.T)) > SYMMETRY_TOL * scale:
            raise ModelError("V is not symmetric")
        V = 0.5 * (V + V.T)
        try:
            np.linalg.cholesky(V)
        except np.linalg.LinAlgError:
            raise ModelError("V is not positive definite") from None
        V.setflags(write=False)
        object.__setattr__(self, "V", V)

    @property
    def N(self) -> int:
        return self.V.shape[0]

    def kinetic(self, psi) -> float:
        psi = as_phase(psi, self.N)
        p = psi[self.N:]
        return 0.5 * float(p @ p)

    def potential(self, psi) -> float:
        psi = as_phase(psi, self.N)
        q = psi[:self.N]
        return 0.5 * float(q @ self.V @ q)


@dataclass(frozen=True)
class SystemSpec:
    hamiltonian: Hamiltonian
    alpha: float
    sigma: float
    n: int

    def __post_init__(self):
        if not isinstance(self.hamiltonian, Hamiltonian):
            object.__setattr__(self, "hamiltonian", Hamiltonian(self.hamiltonian))
        alpha, sigma = float(self.alpha), float(self.sigma)
        if not np.isfinite(alpha) or alpha < 0:
            raise ModelError(f"alpha must be >= 0, got {self.alpha}")
        if not np.isfinite(sigma) or sigma <= 0:
            raise ModelError(f"sigma must be > 0, got {self.sigma}")
        if int(self.n) != self.n or not 1 <= self.n <= self.N:
            raise ModelError(f"n must be an integer in [1, {self.N}], got {self.n}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "n", int(self.n))

    @property
    def N(self) -> int:
        return self.hamiltonian.N

    @property
    def V(self) -> np.ndarray:
        return self.hamiltonian.V

    @property
    def index(self) -> int:
        """0-based position of the distinguished coordinate."""
        return self.n - 1


@dataclass(frozen=True)
class PhaseVector:
    """A phase point ``psi = (q, p)``."""

    q: np.ndarray
    p: np.ndarray = field(default=None)

    def __post_init__(self):
        q = np.array(self.q, dtype=float).ravel()
        if self.p is None:
            if q.size % 2:
                raise ModelError("a stacked phase vector must have even length")
            q, p = q[: q.size // 2].copy(), q[q.size // 2:].copy()
        else:
            p = np.array(self.p, dtype=float).ravel()
        if q.shape != p.shape:
            raise ModelError(f"q and p differ in length: {q.size} vs {p.size}")
        q.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @classmethod
    def from_array(cls, psi) -> "PhaseVector":
        return cls(np.asarray(psi, dtype=float))

    @property
    def N(self) -> int:
        return self.q.size

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    def __array__(self, dtype=None, copy=None):
        out = self.to_array()
        return out if dtype is None else out.astype(dtype)

    def dot(self, other) -> float:
        """Euclidean scalar product ``sum q q' + p p'``."""
        return float(self.to_array() @ as_phase(other, self.N))


def as_phase(psi, N: int) -> np.ndarray:
    """Return ``psi`` as a flat length-``2N`` float array, checking size."""
    arr = np.asarray(psi, dtype=float).ravel()
    if arr.size != 2 * N:
        raise ModelError(f"phase vector has length {arr.size}, expected {2 * N}")
    return arr


@dataclass(frozen=True)
class DriftMatrix:
    A: np.ndarray
    g: np.ndarray

    @property
    def dim(self) -> int:
        return self.A.shape[0]


def build_drift(spec: SystemSpec) -> DriftMatrix:
    """Assemble ``A = [[0, E], [-V, -alpha Delta_n]]`` and ``g_n = (0, e_n)``."""
    N, k = spec.N, spec.index
    A = np.zeros((2 * N, 2 * N))
    A[:N, N:] = np.eye(N)
    A[N:, :N] = -spec.V
    A[N + k, N + k] = -spec.alpha
    g = np.zeros(2 * N)
    g[N + k] = 1.0
    A.setflags(write=False)
    g.setflags(write=False)
    return DriftMatrix(A, g)


def energy_form(h: Hamiltonian) -> np.ndarray:
    """``Q = diag(V, E)`` so that ``H(psi) = psi^T Q psi / 2``."""
    N = h.N
    Q = np.zeros((2 * N, 2 * N))
    Q[:N, :N] = h.V
    Q[N:, N:] = np.eye(N)
    return Q


def energy(h: Hamiltonian, psi) -> float:
    return h.kinetic(psi) + h.potential(psi)


def random_spd(N: int, seed: int, conditioning: float = 0.1) -> Hamiltonian:
    """Draw ``V = G G^T + conditioning * I`` with ``G`` standard Gaussian.

    Deterministic per ``seed``.  The shift bounds the smallest eigenvalue
    from below by ``conditioning``.
    """
    if N < 1:
        raise ModelError("N must be >= 1")
    if conditioning <= 0:
        raise ModelError("conditioning must be > 0")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((N, N))
    return Hamiltonian(G @ G.T + conditioning * np.eye(N))


def chain_hamiltonian(N: int, omega: float, coupling: float) -> Hamiltonian:
    """Nearest-neighbour chain: ``omega^2 + 2c`` on the diagonal, ``-c`` off it.

    For ``N == 1`` this is just ``[omega^2]``.
    """
    if N < 1:
        raise ModelError("N must be >= 1")
    if omega <= 0 or coupling < 0:
        raise ModelError("chain needs omega > 0 and coupling >= 0")
    if N == 1:
        return Hamiltonian([[omega**2]])
    V = (omega**2 + 2 * coupling) * np.eye(N)
    idx = np.arange(N - 1)
    V[idx, idx + 1] = V[idx + 1, idx] = -coupling
    return Hamiltonian(V)


def load_matrix(path) -> np.ndarray:
    """Read a matrix file: first line ``N``, then ``N`` rows of ``N`` numbers.

    Blank lines and ``#`` comments are skipped.  Errors name the offending line.
    """
    path = os.fspath(path)
    with open(path) as fh:
        lines = [(i + 1, ln.split("#", 1)[0].strip()) for i, ln in enumerate(fh)]
    lines = [(i, ln) for i, ln in lines if ln]
    if not lines:
        raise MatrixFormatError("empty matrix file", path=path)
    lineno, head = lines[0]
    try:
        N = int(head)
    except ValueError:
        raise MatrixFormatError(f"expected the dimension N, got {head!r}", lineno, path) from None
    if N < 1:
        raise MatrixFormatError(f"dimension must be positive, got {N}", lineno, path)
    rows = lines[1:]
    if len(rows) != N:
        at = rows[N][0] if len(rows) > N else (rows[-1][0] if rows else lineno)
        raise MatrixFormatError(f"expected {N} matrix rows, found {len(rows)}", at, path)
    V = np.empty((N, N))
    for r, (lineno, text) in enumerate(rows):
        fields = text.split()
        if len(fields) != N:
            raise MatrixFormatError(f"expected {N} entries, found {len(fields)}", lineno, path)
        try:
            V[r] = [float(x) for x in fields]
        except ValueError as exc:
            raise MatrixFormatError(str(exc), lineno, path) from None
    return V


def format_matrix(V) -> str:
    V = np.atleast_2d(np.asarray(V, dtype=float))
    rows = [" ".join(f"{x:.17g}" for x in row) for row in V]
    return "\n".join([str(V.shape[0]), *rows]) + "\n"


def save_matrix(path, V) -> None:
    with open(path, "w") as fh:
        fh.write(format_matrix(V))
