import numpy as np
import pytest
from scipy.stats import ortho_group

from langevin_gibbs.model import Hamiltonian, SystemSpec, chain_hamiltonian, random_spd


def block_diag(*blocks):
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    i = 0
    for b in blocks:
        k = b.shape[0]
        out[i:i + k, i:i + k] = b
        i += k
    return out


def structured_instances():
    """Couplings with a nontrivial conservative subspace: ``(h, n, d)`` with
    the Krylov dimension ``d`` worked out by hand."""
    W = ortho_group.rvs(4, random_state=5)
    return [
        (Hamiltonian(np.eye(3)), 1, 1),
        (Hamiltonian(np.diag([1.0, 2.0, 3.0])), 2, 1),
        (chain_hamiltonian(5, 1.0, 1.0), 3, 3),      # symmetric modes only
        (chain_hamiltonian(3, 1.0, 0.5), 2, 2),
        (Hamiltonian(block_diag(random_spd(2, 1).V, random_spd(2, 2).V)), 1, 2),
        (Hamiltonian(block_diag(random_spd(3, 3).V, np.array([[5.0]]))), 1, 3),
        (Hamiltonian(np.eye(4) + np.ones((4, 4))), 1, 2),
        (chain_hamiltonian(7, 0.7, 1.3), 4, 4),
        (Hamiltonian(W @ np.diag([1.0, 1.0, 2.0, 3.0]) @ W.T), 1, 3),  # repeated eigenvalue
        (Hamiltonian(np.diag([1.0, 2.0, 3.0, 4.0])), 1, 1),
    ]


def random_instances(count, sizes=(2, 4, 8), seed0=100):
    """``(h, n)`` pairs; generic, so ``dim L_zero = 0``."""
    out = []
    for i in range(count):
        N = sizes[i % len(sizes)]
        out.append((random_spd(N, seed0 + i), 1 + (i % N)))
    return out


@pytest.fixture
def pair_spec():
    return SystemSpec(Hamiltonian([[2.0, 1.0], [1.0, 2.0]]), alpha=1.0, sigma=1.0, n=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
