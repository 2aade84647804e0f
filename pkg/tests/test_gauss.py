import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
from conftest import random_instances, structured_instances
from oracles import ito_covariance_quadrature
from scipy.stats import multivariate_normal

from langevin_gibbs import gauss
from langevin_gibbs.model import Hamiltonian, SystemSpec, build_drift, energy, energy_form, random_spd
from langevin_gibbs.structure import analyze

# sigma^2 int_0^1 e^{uA} g g^T e^{uA^T} du for A = [[0, 1], [-1, -1]], g = (0, 1);
# 30-digit mpmath quadrature of the mpmath matrix exponential.
C1_SINGLE = np.array([[0.14008289018790910506, 0.14231496361957354402],
                      [0.14231496361957354402, 0.34972270502107502932]])


# -- expm -------------------------------------------------------------------

def test_expm_zero_time_is_identity():
    A = np.random.default_rng(0).standard_normal((5, 5))
    assert np.array_equal(gauss.expm(A, 0.0), np.eye(5))


@pytest.mark.parametrize("t", [0.1, 1.0, 2.5, 10.0, 100.0])
def test_expm_rotation(t):
    R = gauss.expm([[0.0, 1.0], [-1.0, 0.0]], t)
    expected = [[np.cos(t), np.sin(t)], [-np.sin(t), np.cos(t)]]
    np.testing.assert_allclose(R, expected, atol=1e-12 * max(1, t))


@pytest.mark.parametrize("scale", [1e-4, 0.05, 0.5, 2.0, 8.0, 40.0])
def test_expm_matches_scipy(scale):
    rng = np.random.default_rng(int(scale * 1000))
    for _ in range(5):
        A = scale * rng.standard_normal((6, 6))
        ref = scipy.linalg.expm(A)
        assert np.linalg.norm(gauss.expm(A) - ref) <= 1e-12 * np.linalg.norm(ref) * max(1, scale)


def test_expm_semigroup():
    rng = np.random.default_rng(7)
    for _ in range(10):
        A = rng.standard_normal((4, 4))
        s, t = rng.uniform(0, 2, size=2)
        lhs = gauss.expm(A, s) @ gauss.expm(A, t)
        np.testing.assert_allclose(lhs, gauss.expm(A, s + t), rtol=1e-9, atol=1e-9 * np.abs(lhs).max())


def test_expm_overflow_reported():
    with pytest.raises(gauss.ExpmOverflow):
        gauss.expm(np.array([[1.0]]), 1e4)


def test_exact_flow_conserves_energy_without_friction():
    h = random_spd(4, 3)
    spec = SystemSpec(h, alpha=0.0, sigma=1.0, n=2)
    psi = np.random.default_rng(1).standard_normal(8)
    for t in (0.3, 5.0, 50.0):
        assert energy(h, gauss.mean_at(spec, psi, t)) == pytest.approx(energy(h, psi), rel=1e-10)


# -- Lyapunov ---------------------------------------------------------------

def test_lyapunov_direct_single_oscillator():
    sol = gauss.solve_lyapunov_direct([[0.0, 1.0], [-1.0, -1.0]], [0.0, 1.0])
    np.testing.assert_allclose(sol.U, 0.5 * np.eye(2), atol=1e-14)


def test_lyapunov_direct_rejects_conservative():
    spec = SystemSpec(Hamiltonian([[2.0, 1.0], [1.0, 2.0]]), 0.0, 1.0, 1)
    d = build_drift(spec)
    with pytest.raises(gauss.NotHurwitz):
        gauss.solve_lyapunov_direct(d.A, d.g)


def test_lyapunov_direct_rejects_full_space_with_conservative_part():
    spec = SystemSpec(Hamiltonian(np.eye(2)), 1.0, 1.0, 1)
    d = build_drift(spec)
    with pytest.raises(gauss.NotHurwitz):
        gauss.solve_lyapunov_direct(d.A, d.g)


def test_closed_form_examples():
    np.testing.assert_allclose(gauss.closed_form_U(np.eye(2), 0.5).U, np.eye(4), atol=1e-15)
    V = np.array([[2.0, 1.0], [1.0, 2.0]])
    expected = np.zeros((4, 4))
    expected[:2, :2] = np.array([[2.0, -1.0], [-1.0, 2.0]]) / 3
    expected[2:, 2:] = np.eye(2)
    np.testing.assert_allclose(gauss.closed_form_U(V, 1.0).U, 0.5 * expected, atol=1e-15)
    with pytest.raises(ValueError):
        gauss.closed_form_U(V, 0.0)


@pytest.mark.parametrize("alpha", [0.1, 1.0, 10.0])
def test_lyapunov_routes_agree(alpha):
    cases = random_instances(12, sizes=(2, 5, 8, 16)) + [(h, n) for h, n, _ in structured_instances()]
    for h, n in cases:
        r = analyze(SystemSpec(h, alpha, 1.0, n)).restricted
        closed = gauss.closed_form_U(r.Vprime, alpha)
        direct = gauss.solve_lyapunov_direct(r.Aprime, r.gprime)
        scipy_U = scipy.linalg.solve_continuous_lyapunov(r.Aprime, -np.outer(r.gprime, r.gprime))
        scale = np.linalg.norm(r.Aprime) * np.linalg.norm(closed.U) + 1
        assert closed.residual(r.Aprime, r.gprime) <= 1e-9 * scale
        assert direct.residual(r.Aprime, r.gprime) <= 1e-9 * scale
        assert np.linalg.norm(closed.U - direct.U) <= 1e-8 * np.linalg.norm(closed.U)
        assert np.linalg.norm(closed.U - scipy_U) <= 1e-8 * np.linalg.norm(closed.U)
        assert np.linalg.eigvalsh(closed.U).min() > 0


# -- covariance ---------------------------------------------------------------

def single(alpha=1.0, sigma=1.0, omega2=1.0):
    spec = SystemSpec(Hamiltonian([[omega2]]), alpha, sigma, 1)
    return spec, analyze(spec).restricted


def test_covariance_zero_at_start():
    spec, r = single()
    assert np.array_equal(gauss.covariance_at(spec, r, 0.0).covariance, np.zeros((2, 2)))


def test_covariance_single_oscillator_frozen():
    spec, r = single()
    np.testing.assert_allclose(gauss.covariance_at(spec, r, 1.0).covariance, C1_SINGLE, rtol=1e-12)
    np.testing.assert_allclose(ito_covariance_quadrature(r.Aprime, r.gprime, 1.0, 1.0), C1_SINGLE, rtol=1e-9)


def test_covariance_matches_quadrature_structured():
    for h, n, _ in structured_instances()[:5]:
        spec = SystemSpec(h, 0.6, 1.3, n)
        r = analyze(spec).restricted
        for t in (0.1, 1.0, 5.0):
            C = gauss.covariance_at(spec, r, t).covariance
            ref = ito_covariance_quadrature(r.Aprime, r.gprime, spec.sigma, t)
            assert np.linalg.norm(C - ref) <= 1e-7 * np.linalg.norm(ref)


def test_covariance_vanloan_agrees():
    for h, n, _ in structured_instances()[:4]:
        spec = SystemSpec(h, 0.9, 0.7, n)
        an = analyze(spec)
        for t in (0.5, 4.0):
            C = gauss.covariance_full(spec, an.restricted, t)
            VL = gauss.covariance_vanloan(an.drift.A, an.drift.g, spec.sigma, t)
            assert np.linalg.norm(C - VL) <= 1e-9 * np.linalg.norm(C)


def test_covariance_converges_to_gibbs():
    spec = SystemSpec(Hamiltonian([[2.0, 1.0], [1.0, 2.0]]), 1.0, 1.0, 1)
    r = analyze(spec).restricted
    t = 20 * gauss.decay_time(r)
    limit = gauss.stationary_state(spec, r).covariance
    C = gauss.covariance_at(spec, r, t)
    assert np.linalg.norm(C.covariance - limit) <= 1e-8 * np.linalg.norm(limit)
    ev = np.linalg.eigvalsh(C.covariance)
    assert ev.min() >= -1e-10 * np.abs(ev).max()


def test_covariance_refuses_no_friction():
    spec = SystemSpec(Hamiltonian([[1.0]]), 0.0, 1.0, 1)
    r = analyze(SystemSpec(Hamiltonian([[1.0]]), 1.0, 1.0, 1)).restricted
    with pytest.raises(gauss.NotHurwitz):
        gauss.covariance_at(spec, r, 1.0)


# -- stationary law -----------------------------------------------------------

def test_stationary_single_oscillator():
    alpha, sigma, w2 = 0.3, 1.7, 4.0
    spec, r = single(alpha, sigma, w2)
    cov = gauss.stationary_state(spec, r).covariance
    np.testing.assert_allclose(cov, np.diag([sigma**2 / (2 * alpha * w2), sigma**2 / (2 * alpha)]), rtol=1e-14)


def test_stationary_is_gibbs_temperature():
    for h, n, _ in structured_instances():
        spec = SystemSpec(h, 0.4, 2.0, n)
        r = analyze(spec).restricted
        cov = gauss.stationary_state(spec, r).covariance
        Qp = energy_form(r.hamiltonian)
        np.testing.assert_allclose(cov, spec.sigma**2 / (2 * spec.alpha) * np.linalg.inv(Qp), rtol=1e-10)
        # equipartition: every normal mode carries the same variance
        w, W = np.linalg.eigh(Qp)
        Qh = W @ np.diag(np.sqrt(w)) @ W.T
        np.testing.assert_allclose(np.linalg.eigvalsh(Qh @ cov @ Qh), spec.sigma**2 / (2 * spec.alpha), rtol=1e-10)


def test_stationary_reduces_to_single_oscillator_when_two_dimensional():
    spec = SystemSpec(Hamiltonian(np.diag([3.0, 5.0, 7.0])), 0.5, 1.0, 2)
    r = analyze(spec).restricted
    assert r.dim == 2
    np.testing.assert_allclose(gauss.stationary_state(spec, r).covariance, np.diag([1 / 5, 1.0]), rtol=1e-14)


def test_gibbs_log_density_matches_gaussian():
    rng = np.random.default_rng(3)
    for h, n, _ in structured_instances()[:5]:
        spec = SystemSpec(h, 0.8, 1.5, n)
        r = analyze(spec).restricted
        cov = gauss.stationary_state(spec, r).covariance
        pts = rng.standard_normal((100, r.dim))
        ours = gauss.gibbs_log_density(spec, r, pts)
        ref = multivariate_normal(np.zeros(r.dim), cov).logpdf(pts)
        assert np.max(np.abs(ours - ref)) <= 1e-10
        origin = np.zeros(r.dim)
        peak = multivariate_normal(origin, cov).logpdf(origin)
        assert gauss.gibbs_log_density(spec, r, origin) == pytest.approx(peak, abs=1e-10)
        assert ours.max() <= peak


def test_gibbs_density_depends_on_energy_only():
    spec = SystemSpec(Hamiltonian([[2.0, 1.0], [1.0, 2.0]]), 1.0, 1.0, 1)
    r = analyze(spec).restricted
    x = np.array([0.3, -0.2, 0.5, 0.1])
    # rescale a different direction to the same energy
    y = np.array([0.0, 0.0, 1.0, -1.0])
    y *= np.sqrt(r.energy(x) / r.energy(y))
    assert gauss.gibbs_log_density(spec, r, x) == pytest.approx(gauss.gibbs_log_density(spec, r, y), abs=1e-12)


def test_gibbs_density_integrates_to_one_single_oscillator():
    spec, r = single(0.5, 1.0, 2.0)
    val, _ = scipy.integrate.dblquad(
        lambda p, q: np.exp(gauss.gibbs_log_density(spec, r, np.array([q, p]))), -12, 12, -12, 12)
    assert val == pytest.approx(1.0, abs=1e-8)


# -- mean and mean energy ------------------------------------------------------

def test_mean_of_origin_stays_zero():
    spec = SystemSpec(random_spd(3, 1), 1.0, 1.0, 1)
    assert np.array_equal(gauss.mean_at(spec, np.zeros(6), 4.0).to_array(), np.zeros(6))


def test_mean_in_conservative_subspace():
    h, n, _ = structured_instances()[2]
    spec = SystemSpec(h, 1.0, 1.0, n)
    an = analyze(spec)
    psi0 = an.decomposition.basis_zero @ np.arange(1.0, an.decomposition.dim_zero + 1)
    for t in (1.0, 10.0):
        m = gauss.mean_at(spec, psi0, t).to_array()
        assert np.linalg.norm(an.decomposition.projector_minus @ m) <= 1e-10 * np.linalg.norm(m)
        assert energy(h, m) == pytest.approx(energy(h, psi0), rel=1e-10)


def test_mean_in_thermalizing_subspace_decays():
    spec = SystemSpec(Hamiltonian([[2.0, 1.0], [1.0, 2.0]]), 1.0, 1.0, 1)
    tau = gauss.decay_time(analyze(spec).restricted)
    psi0 = np.array([1.0, -1.0, 0.5, 0.2])
    assert np.linalg.norm(gauss.mean_at(spec, psi0, 20 * tau).to_array()) < 1e-7


def test_mean_energy_limits():
    for h, n, _ in structured_instances()[:4]:
        spec = SystemSpec(h, 0.7, 1.2, n)
        r = analyze(spec).restricted
        assert gauss.mean_energy_at(spec, r, np.zeros(2 * h.N), 0.0) == 0.0
        t = 20 * gauss.decay_time(r)
        want = spec.sigma**2 / (4 * spec.alpha) * r.dim
        assert gauss.mean_energy_at(spec, r, np.zeros(2 * h.N), t) == pytest.approx(want, rel=1e-8)
    spec = SystemSpec(random_spd(3, 2), 2.0, 1.0, 1)
    r = analyze(spec).restricted
    t = 20 * gauss.decay_time(r)
    U = gauss.closed_form_U(r.Vprime, spec.alpha).U
    half_trace = spec.sigma**2 / 2 * np.trace(energy_form(r.hamiltonian) @ U)
    assert gauss.mean_energy_at(spec, r, np.zeros(6), t) == pytest.approx(half_trace, rel=1e-8)
    assert half_trace == pytest.approx(spec.sigma**2 / (4 * spec.alpha) * 6, rel=1e-12)


def test_mean_energy_includes_conserved_part():
    spec = SystemSpec(Hamiltonian(np.eye(2)), 1.0, 1.0, 1)
    r = analyze(spec).restricted
    psi0 = np.array([0.5, 1.0, 0.0, -0.5])
    assert gauss.mean_energy_at(spec, r, psi0, 0.0) == pytest.approx(energy(spec.hamiltonian, psi0))
    conserved = 0.5 * (1.0**2 + 0.5**2)
    t = 20 * gauss.decay_time(r)
    assert gauss.mean_energy_at(spec, r, psi0, t) == pytest.approx(conserved + 0.5, rel=1e-8)


# -- no friction --------------------------------------------------------------

def test_growth_identity_coupling():
    spec = SystemSpec(Hamiltonian(np.eye(2)), 0.0, 1.5, 1)
    for t in (0.0, 0.7, 3.0, 11.0):
        ET, EU, EH = gauss.energy_growth_alpha0(spec, t)
        s2 = spec.sigma**2 / 2
        assert ET == pytest.approx(s2 * (t / 2 + np.sin(2 * t) / 4), abs=1e-13)
        assert EU == pytest.approx(s2 * (t / 2 - np.sin(2 * t) / 4), abs=1e-13)
        assert EH == pytest.approx(spec.sigma**2 * t / 2, rel=1e-15)
    assert gauss.energy_growth_alpha0(spec, 0.0) == (0.0, 0.0, 0.0)


def test_growth_against_quadrature():
    h = random_spd(3, 8)
    spec = SystemSpec(h, 0.0, 0.8, 2)
    lam, W = np.linalg.eigh(h.V)
    root = W @ np.diag(np.sqrt(lam)) @ W.T
    e = np.eye(3)[1]

    def integrand(u, fn):
        M = fn(root * u)
        return e @ M @ M @ e

    for t in (0.5, 2.0, 6.0):
        ET, EU, EH = gauss.energy_growth_alpha0(spec, t)
        qt = scipy.integrate.quad(integrand, 0, t, args=(scipy.linalg.cosm,), epsabs=1e-13)[0]
        qu = scipy.integrate.quad(integrand, 0, t, args=(scipy.linalg.sinm,), epsabs=1e-13)[0]
        assert ET == pytest.approx(spec.sigma**2 / 2 * qt, rel=1e-9)
        assert EU == pytest.approx(spec.sigma**2 / 2 * qu, rel=1e-9)
        assert ET + EU == pytest.approx(EH, rel=1e-12)


def test_growth_properties():
    for seed in range(10):
        h = random_spd(4, seed)
        spec = SystemSpec(h, 0.0, 1.3, 1 + seed % 4)
        bound = spec.sigma**2 / (8 * np.sqrt(np.linalg.eigvalsh(h.V).min()))
        prev = None
        for t in np.linspace(0, 30, 13):
            ET, EU, EH = gauss.energy_growth_alpha0(spec, t)
            assert EH == pytest.approx(spec.sigma**2 * t / 2, rel=1e-10, abs=1e-300)
            assert abs(ET + EU - EH) <= 1e-12 * max(1, EH)
            assert abs(ET - spec.sigma**2 * t / 4) <= bound + 1e-12
            if prev is not None:
                assert EH - prev[1] == pytest.approx(spec.sigma**2 / 2 * (t - prev[0]), rel=1e-12)
            prev = (t, EH)


def test_growth_matches_exact_covariance_without_friction():
    h = random_spd(3, 4)
    spec = SystemSpec(h, 0.0, 1.0, 3)
    d = build_drift(spec)
    Q = energy_form(h)
    for t in (1.0, 4.0):
        C = gauss.covariance_vanloan(d.A, d.g, spec.sigma, t)
        assert 0.5 * np.sum(Q * C) == pytest.approx(gauss.energy_growth_alpha0(spec, t)[2], rel=1e-10)


def test_growth_with_initial_state_adds_conserved_energy():
    h = random_spd(2, 1)
    spec = SystemSpec(h, 0.0, 1.0, 1)
    psi0 = np.array([0.3, -0.4, 1.0, 0.0])
    ET, EU, EH = gauss.energy_growth_alpha0(spec, 5.0, psi0)
    assert EH == pytest.approx(2.5 + energy(h, psi0), rel=1e-14)
    assert ET + EU == pytest.approx(EH, rel=1e-10)


def test_growth_rejects_friction():
    with pytest.raises(ValueError):
        gauss.energy_growth_alpha0(SystemSpec(Hamiltonian([[1.0]]), 1.0, 1.0, 1), 1.0)


def test_seminorm_triangle_inequality():
    # sqrt(H) is a norm, so |sqrt H(a + b) - sqrt H(b)| <= sqrt H(a)
    rng = np.random.default_rng(9)
    h = random_spd(3, 6)
    for _ in range(200):
        a, b = rng.standard_normal(6), 10 * rng.standard_normal(6)
        lhs = abs(np.sqrt(energy(h, a + b)) - np.sqrt(energy(h, b)))
        assert lhs <= np.sqrt(energy(h, a)) * (1 + 1e-12)
