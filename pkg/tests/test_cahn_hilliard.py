import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phasedamage.cahn_hilliard import (CHStepConfig, SimplexProjector, ch_step,
                                       chemical_potential, project_tangent, scheme_residual,
                                       tangent_basis)
from phasedamage.energy import ElasticLawW1, MaterialParams, default_eigenstrains, total_energy
from phasedamage.exceptions import NonConvergenceError
from phasedamage.mesh import Grid2D, State

from conftest import uniform_c


def decoupled(**kw):
    return MaterialParams(w1=ElasticLawW1(eigenstrains=default_eigenstrains(0.0)), **kw)


def perturbed(g, amp=0.01, seed=0):
    rng = np.random.default_rng(seed)
    c1 = 0.5 + amp * rng.uniform(-1, 1, g.node_count)
    return np.stack([c1, 1 - c1], axis=1)


def reduced_energy(g, c, u, z, mat):
    return total_energy(g, State(u, c, np.zeros_like(c), z), mat, 0.0).total


def diffusion_dissipation(g, w, tau, mat):
    return tau * float(np.sum(w * (g.stiffness_matrix @ w @ mat.mobility_matrix.T)))


class TestProjection:
    def test_unit_vector(self):
        assert np.allclose(project_tangent([1.0, 0.0]), [0.5, -0.5])

    def test_kernel(self):
        assert np.allclose(project_tangent(np.ones(4)), 0.0)

    def test_tangent_vectors_unchanged(self):
        v = np.array([0.3, -0.1, -0.2])
        assert np.allclose(project_tangent(v), v)

    @given(st.integers(2, 7))
    def test_basis_orthonormal_and_tangent(self, n):
        V = tangent_basis(n)
        assert np.allclose(V.T @ V, np.eye(n - 1), atol=1e-14)
        assert np.allclose(V.sum(axis=0), 0.0, atol=1e-14)
        P = SimplexProjector(n)
        assert np.allclose(V @ V.T, P.matrix, atol=1e-14)

    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=3))
    def test_projector_idempotent(self, v):
        P = SimplexProjector(3)
        assert np.allclose(P(P(v)), P(v), atol=1e-12)

    def test_single_component_rejected(self):
        with pytest.raises(ValueError):
            SimplexProjector(1)


def test_uniform_state_is_stationary(grid8):
    mat = decoupled()
    c = uniform_c(grid8, 0.3)
    u, z = np.zeros((grid8.node_count, 2)), np.ones(grid8.node_count)
    c_new, w_new = ch_step(grid8, c, u, z, mat, CHStepConfig(0.01))
    assert np.allclose(c_new, c, atol=1e-13)
    assert np.ptp(w_new, axis=0).max() <= 1e-12


@pytest.mark.parametrize("tau", [1e-3, 1e-2])
def test_dispersion_relation(tau):
    n, amp = 32, 1e-5
    g = Grid2D.rectangle(n, n)
    mat = decoupled()
    c1 = 0.5 + amp * np.cos(np.pi * g.nodes[:, 0])
    c = np.stack([c1, 1 - c1], axis=1)
    c_new, _ = ch_step(g, c, np.zeros((g.node_count, 2)), np.ones(g.node_count), mat,
                       CHStepConfig(tau))
    h = 1.0 / n
    # generalized eigenvalue of (stiffness, consistent mass) for the cos(pi x) grid mode
    lam = 6.0 / h ** 2 * (1 - np.cos(np.pi * h)) / (2 + np.cos(np.pi * h))
    m, theta, gg = mat.mobility, mat.wch.theta, mat.gamma * mat.gamma_c
    growth = (1 + tau * m * theta * lam / 2) / (1 + tau * m * gg * lam ** 2)
    mode = c1 - 0.5
    measured = (c_new[:, 0] - 0.5) @ mode / (mode @ mode)
    assert measured == pytest.approx(growth, rel=1e-6)
    assert np.allclose(c_new[:, 0] - 0.5, measured * mode, atol=1e-6 * amp)
    assert growth > 1


def test_stripe_grows_over_early_steps():
    g = Grid2D.rectangle(32, 32)
    mat = decoupled()
    c1 = 0.5 + 0.01 * np.cos(np.pi * g.nodes[:, 0])
    c = np.stack([c1, 1 - c1], axis=1)
    u, z = np.zeros((g.node_count, 2)), np.ones(g.node_count)
    norms = [g.l2_norm(c[:, 0] - 0.5)]
    for _ in range(5):
        c, _ = ch_step(g, c, u, z, mat, CHStepConfig(1e-3))
        norms.append(g.l2_norm(c[:, 0] - 0.5))
    assert np.all(np.diff(norms) > 0)


def test_mass_conserved_over_many_steps():
    g = Grid2D.rectangle(8, 8)
    mat = MaterialParams()
    c = perturbed(g, 0.05)
    u = np.stack([0.05 * g.nodes[:, 0], 0 * g.nodes[:, 0]], axis=1)
    z = np.linspace(0.3, 1.0, g.node_count)
    m0 = g.lumped_mass @ c
    w = None
    for _ in range(1000):
        c, w = ch_step(g, c, u, z, mat, CHStepConfig(0.01), w_guess=w)
    drift = np.abs(g.lumped_mass @ c - m0) / m0
    assert drift.max() <= 1e-9
    assert np.abs(c.sum(axis=1) - 1).max() <= 1e-12
    assert np.abs(w.sum(axis=1)).max() <= 1e-12


@pytest.mark.parametrize("coupling", ["implicit", "explicit"])
def test_step_solves_scheme(coupling):
    g = Grid2D.rectangle(12, 12)
    mat = MaterialParams(w1=ElasticLawW1(mu1=0.2, lam1=0.1,
                                         eigenstrains=default_eigenstrains(0.05)))
    c = perturbed(g, 0.05, seed=3)
    u = np.stack([0.1 * g.nodes[:, 0], 0.02 * g.nodes[:, 1]], axis=1)
    z = np.full(g.node_count, 0.7)
    cfg = CHStepConfig(0.01, elastic_coupling=coupling)
    c_new, w_new, info = ch_step(g, c, u, z, mat, cfg, return_info=True)
    r1, r2 = scheme_residual(g, c, c_new, w_new, u, z, mat, cfg)
    assert max(r1, r2) <= 1e-8
    assert info.iterations >= 1
    assert np.allclose(g.lumped_mass @ c_new, g.lumped_mass @ c, rtol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_energy_decreases_with_convex_split(seed):
    g = Grid2D.rectangle(16, 16)
    mat = decoupled()
    u, z = np.zeros((g.node_count, 2)), np.ones(g.node_count)
    c = perturbed(g, 0.05, seed)
    tau = 0.05  # large step: stability comes from the splitting, not from tau
    for _ in range(5):
        c_new, w = ch_step(g, c, u, z, mat, CHStepConfig(tau))
        E0, E1 = reduced_energy(g, c, u, z, mat), reduced_energy(g, c_new, u, z, mat)
        assert E1 + diffusion_dissipation(g, w, tau, mat) <= E0 + 1e-8 * (1 + abs(E0))
        c = c_new


def test_energy_decreases_with_implicit_elastic_coupling():
    g = Grid2D.rectangle(12, 12)
    mat = MaterialParams(w1=ElasticLawW1(eigenstrains=default_eigenstrains(0.05)))
    u = np.stack([0.05 * g.nodes[:, 0], 0 * g.nodes[:, 0]], axis=1)
    z = np.full(g.node_count, 0.8)
    c = perturbed(g, 0.05, 1)
    tau = 0.02
    for _ in range(5):
        c_new, w = ch_step(g, c, u, z, mat, CHStepConfig(tau))
        E0, E1 = reduced_energy(g, c, u, z, mat), reduced_energy(g, c_new, u, z, mat)
        assert E1 + diffusion_dissipation(g, w, tau, mat) <= E0 + 1e-8 * (1 + abs(E0))
        c = c_new


def test_three_components():
    E = np.zeros((3, 2, 2))
    E[0], E[2] = 0.02 * np.eye(2), -0.01 * np.eye(2)
    mat = MaterialParams(w1=ElasticLawW1(eigenstrains=E))
    g = Grid2D.rectangle(8, 8)
    rng = np.random.default_rng(0)
    c = np.array([0.4, 0.35, 0.25]) + 0.02 * (rng.uniform(-1, 1, (g.node_count, 3)))
    c -= c.mean(axis=1, keepdims=True) - np.array([0.4, 0.35, 0.25]).mean()
    c /= c.sum(axis=1, keepdims=True)
    u, z = np.zeros((g.node_count, 2)), np.ones(g.node_count)
    c_new, w_new = ch_step(g, c, u, z, mat, CHStepConfig(0.01))
    assert np.allclose(g.lumped_mass @ c_new, g.lumped_mass @ c, rtol=1e-12)
    assert np.allclose(c_new.sum(axis=1), 1.0, atol=1e-13)
    assert np.allclose(w_new.sum(axis=1), 0.0, atol=1e-12)


class TestChemicalPotential:
    def test_pure_phase_constant(self, grid8):
        mat = decoupled()
        w = chemical_potential(grid8, uniform_c(grid8, 1.0), np.zeros((grid8.node_count, 2)),
                               np.ones(grid8.node_count), mat)
        assert np.ptp(w, axis=0).max() <= 1e-12

    def test_sums_to_zero(self, grid8):
        mat = MaterialParams()
        w = chemical_potential(grid8, perturbed(grid8, 0.1), np.zeros((grid8.node_count, 2)),
                               np.ones(grid8.node_count), mat)
        assert np.abs(w.sum(axis=1)).max() <= 1e-12

    def test_riesz_representative_of_energy_derivative(self):
        g = Grid2D.rectangle(8, 8)
        mat = MaterialParams(w1=ElasticLawW1(mu1=0.2, eigenstrains=default_eigenstrains(0.05)))
        rng = np.random.default_rng(0)
        c = perturbed(g, 0.1)
        u = 0.05 * rng.normal(size=(g.node_count, 2))
        z = rng.uniform(0.2, 1.0, g.node_count)
        w = chemical_potential(g, c, u, z, mat)
        for _ in range(3):
            zeta = rng.normal(size=c.shape)
            d = project_tangent(zeta)
            h = 1e-5
            fd = (reduced_energy(g, c + h * d, u, z, mat)
                  - reduced_energy(g, c - h * d, u, z, mat)) / (2 * h)
            weak = float(np.sum(w * (g.mass_matrix @ zeta)))
            assert weak == pytest.approx(fd, rel=1e-6, abs=1e-12)


def test_off_simplex_rejected(grid8):
    c = uniform_c(grid8)
    c[0] = [0.5, 0.4]
    with pytest.raises(ValueError):
        ch_step(grid8, c, np.zeros((grid8.node_count, 2)), np.ones(grid8.node_count),
                MaterialParams(), CHStepConfig(0.01))


def test_newton_budget_reported(grid8):
    c = perturbed(grid8, 0.3)
    with pytest.raises(NonConvergenceError) as err:
        ch_step(grid8, c, np.zeros((grid8.node_count, 2)), np.ones(grid8.node_count),
                MaterialParams(), CHStepConfig(0.5, newton_tol=1e-14, max_iter=1))
    assert err.value.iterations == 1


@pytest.mark.parametrize("bad", [dict(tau=0.0), dict(tau=0.1, splitting="explicit"),
                                 dict(tau=0.1, elastic_coupling="none"),
                                 dict(tau=0.1, max_iter=0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        CHStepConfig(**bad)
