import numpy as np
import pytest
from scipy.integrate import dblquad

from conftest import gauss_legendre_phi
from homodyne.fock import eval_psi
from homodyne.forward import (
    NoiseParams, WignerGrid, characteristic, density_pdf, linear_pdf, loss_channel, noisy_pdf,
    radon_check, wigner,
)
from homodyne.states import coherent_state, fock_state, random_density, thermal_state


def integrate_joint(f, x_half=10.0, nx=801, n_phi=32):
    x = np.linspace(-x_half, x_half, nx)
    phi, wphi = gauss_legendre_phi(n_phi)
    X, PHI = np.meshgrid(x, phi, indexing="ij")
    return float(np.trapezoid(f(X, PHI) @ wphi, x))


def test_vacuum_density_closed_form():
    x = np.linspace(-4, 4, 17)
    for phi in (0.0, 1.3, 3.0):
        assert np.allclose(density_pdf(fock_state(0, 3), x, phi), np.exp(-x**2) / np.sqrt(np.pi) / np.pi,
                           rtol=1e-13)


def test_fock1_density_and_zero():
    x = np.linspace(-3, 3, 13)
    psi1 = eval_psi(1, x)[1]
    assert np.allclose(density_pdf(fock_state(1, 2), x, 0.4), psi1**2 / np.pi, atol=1e-15)
    assert density_pdf(fock_state(1, 2), 0.0, 2.0) == 0.0


def test_coherent_joint_normalization():
    rho = coherent_state(0.8, 16)
    assert integrate_joint(lambda X, P: density_pdf(rho, X, P)) == pytest.approx(1, abs=1e-6)


def test_phi_range_checked():
    with pytest.raises(ValueError):
        density_pdf(fock_state(0, 1), 0.0, np.pi)
    with pytest.raises(ValueError):
        density_pdf(fock_state(0, 1), 0.0, -0.1)


def test_density_nonnegative_for_constructor_states(rng):
    x = np.linspace(-9, 9, 301)
    phi = np.linspace(0, np.pi, 40, endpoint=False)
    X, P = np.meshgrid(x, phi)
    for rho in [fock_state(5, 8), coherent_state(1 + 1j, 20), thermal_state(1, 24), random_density(8, rng)]:
        assert density_pdf(rho, X, P).min() >= 0


def test_diagonal_state_is_phase_independent(rng):
    lam = rng.dirichlet(np.ones(5))
    x = np.linspace(-4, 4, 9)
    ref = (lam[:, None] * eval_psi(4, x) ** 2).sum(axis=0) / np.pi
    for phi in (0.0, 0.9, 2.5):
        assert np.allclose(density_pdf(np.diag(lam), x, phi), ref, atol=1e-15)


def test_noise_params_validation():
    for bad in (0.0, -0.2, 1.01):
        with pytest.raises(ValueError):
            NoiseParams(bad)
    with pytest.raises(ValueError):
        NoiseParams(0.5).require_invertible()
    NoiseParams(0.51).require_invertible()


def test_noisy_pdf_identity_at_unit_efficiency(rng):
    rho = random_density(4, rng)
    x = np.linspace(-3, 3, 7)
    assert np.array_equal(noisy_pdf(rho, 1.0, x, 0.7), density_pdf(rho, x, 0.7))


def test_noisy_vacuum_gaussian_variance():
    # the efficiency-eta multiplier exp(-(1-eta) r^2 / (8 eta)) on the rescaled
    # characteristic function leaves the vacuum variance at 1/2
    y = np.linspace(-6, 6, 2001)
    p = noisy_pdf(fock_state(0, 2), NoiseParams(0.8), y, 0.3) * np.pi
    assert np.trapezoid(p, y) == pytest.approx(1, abs=1e-10)
    assert np.trapezoid(y**2 * p, y) == pytest.approx(0.5, abs=1e-10)
    assert np.allclose(p, np.exp(-y**2) / np.sqrt(np.pi), atol=1e-12)


def test_noisy_joint_normalization():
    rho = coherent_state(0.6j, 12)
    assert integrate_joint(lambda X, P: noisy_pdf(rho, 0.7, X, P)) == pytest.approx(1, abs=1e-6)


@pytest.mark.parametrize("eta", [0.55, 0.8, 0.95])
def test_noisy_pdf_equals_loss_channel(rng, eta):
    rho = random_density(6, rng)
    y = np.linspace(-5, 5, 41)
    for phi in (0.2, 1.9):
        assert np.allclose(noisy_pdf(rho, eta, y, phi), density_pdf(loss_channel(rho, eta), y, phi), atol=1e-12)


def test_linear_pdf_matches_noisy_pdf_on_states(rng):
    rho = random_density(5, rng)
    y = np.linspace(-4, 4, 9)
    assert np.allclose(linear_pdf(rho.entries, y, 0.5, 0.75), noisy_pdf(rho, 0.75, y, 0.5), atol=1e-14)


@pytest.fixture(scope="module")
def grids():
    states = {"vacuum": fock_state(0, 3), "fock1": fock_state(1, 3), "fock2": fock_state(2, 3),
              "coherent": coherent_state(0.8, 16)}
    return states, {k: wigner(v) for k, v in states.items()}


def test_wigner_normalized_and_real(grids):
    _, W = grids
    for g in W.values():
        assert g.integral() == pytest.approx(1, abs=5e-3)
        assert g.imag_residue < 1e-9
        assert not g.warnings


def test_vacuum_wigner_origin_against_direct_quadrature(grids):
    states, W = grids
    rho = states["vacuum"]
    direct = dblquad(lambda v, u: characteristic(rho, u, v).real, -12, 12, -12, 12, epsabs=1e-12)[0]
    origin = W["vacuum"].values[120, 120]
    assert origin == pytest.approx(direct / (4 * np.pi**2), abs=1e-9)
    assert origin == pytest.approx(1 / np.pi, abs=1e-9)
    # radial symmetry
    g = W["vacuum"]
    assert np.allclose(g.values, g.values.T, atol=1e-12)


def test_fock1_wigner_negative_at_origin(grids):
    _, W = grids
    assert W["fock1"].values[120, 120] == pytest.approx(-1 / np.pi, abs=1e-9)


def test_wigner_boundary_warning():
    g = wigner(coherent_state(2.0, 24), q_range=(-2, 2), p_range=(-2, 2), nq=41, np_=41, n_freq=128)
    assert any("boundary" in w for w in g.warnings)


def test_wigner_csv_roundtrip(grids):
    _, W = grids
    g = W["fock2"]
    back = WignerGrid.from_csv(g.to_csv())
    assert np.array_equal(back.values, g.values)
    assert (back.q_min, back.q_max, back.p_min, back.p_max) == (g.q_min, g.q_max, g.p_min, g.p_max)


def test_radon_vacuum(grids):
    states, W = grids
    for x, phi in [(0.0, 0.0), (0.7, 1.1), (-1.5, 2.9), (2.2, 0.4)]:
        lhs, rhs = radon_check(states["vacuum"], W["vacuum"], x, phi)
        ref = np.exp(-x**2) / np.sqrt(np.pi)
        assert lhs == pytest.approx(ref, abs=1e-4)
        assert rhs == pytest.approx(ref, abs=1e-12)


def test_radon_fock2(grids):
    states, W = grids
    lhs, rhs = radon_check(states["fock2"], W["fock2"], 0.5, 1.0)
    assert lhs == pytest.approx(rhs, abs=1e-3)


def test_radon_parity(grids):
    states, W = grids
    a, _ = radon_check(states["fock2"], W["fock2"], 0.8, 0.6)
    b, _ = radon_check(states["fock2"], W["fock2"], -0.8, 0.6)
    assert a == pytest.approx(b, abs=1e-9)


def test_radon_line_outside_grid(grids):
    states, W = grids
    with pytest.raises(ValueError):
        radon_check(states["vacuum"], W["vacuum"], 6.5, 0.3)


def test_isometry(rng):
    for _ in range(3):
        a, b = random_density(6, rng), random_density(6, rng)
        wa, wb = wigner(a, nq=181, np_=181), wigner(b, nq=181, np_=181)
        lhs = np.sum((wa.values - wb.values) ** 2) * wa.cell_area
        rhs = np.sum(np.abs(a.entries - b.entries) ** 2) / (2 * np.pi)
        assert lhs == pytest.approx(rhs, rel=1e-2)
