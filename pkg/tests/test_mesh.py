import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phasedamage.mesh import DIRICHLET_PRESETS, Grid2D, QuadratureRule, State

finite = st.floats(-5, 5, allow_nan=False)


def affine(grid, A, b):
    return grid.nodes @ np.asarray(A).T + np.asarray(b)


class TestGrid:
    def test_counts(self):
        g = Grid2D.rectangle(3, 2, lx=3.0, ly=1.0)
        assert g.node_count == 12
        assert g.element_count == 6
        assert g.area == pytest.approx(3.0)
        assert g.conn.shape == (6, 4)

    def test_rejects_too_coarse(self):
        with pytest.raises(ValueError):
            Grid2D.rectangle(1, 4)

    @pytest.mark.parametrize("preset", DIRICHLET_PRESETS)
    def test_dirichlet_presets_on_boundary(self, preset):
        g = Grid2D.rectangle(4, 3, dirichlet=preset)
        assert g.dirichlet_nodes.size > 0
        assert set(g.dirichlet_nodes) <= set(g.boundary_nodes)
        assert np.intersect1d(g.dirichlet_nodes, g.free_nodes).size == 0
        assert g.dirichlet_nodes.size + g.free_nodes.size == g.node_count

    def test_default_dirichlet_is_left_and_right(self):
        g = Grid2D.rectangle(4, 4)
        x = g.nodes[g.dirichlet_nodes, 0]
        assert np.all((x == 0.0) | (x == 1.0))
        assert g.dirichlet_nodes.size == 10

    def test_interior_dirichlet_rejected(self):
        g = Grid2D.rectangle(4, 4)
        with pytest.raises(ValueError):
            g.with_dirichlet(np.array([12]))


class TestStrainAndGradient:
    def test_stretch(self, grid8):
        e = grid8.strain(affine(grid8, [[1, 0], [0, 0]], [0, 0]))
        assert np.allclose(e, [[1, 0], [0, 0]], atol=1e-13)

    def test_shear(self, grid8):
        u = np.stack([grid8.nodes[:, 1], grid8.nodes[:, 0]], axis=1)
        assert np.allclose(grid8.strain(u), [[0, 1], [1, 0]], atol=1e-13)

    def test_zero(self, grid8):
        assert np.all(grid8.strain(np.zeros((grid8.node_count, 2))) == 0)

    def test_linear_scalar(self, grid8):
        g = grid8.gradient(3.0 * grid8.nodes[:, 0])
        assert np.allclose(g, [3.0, 0.0], atol=1e-13)

    def test_constant_scalar(self, grid8):
        assert np.allclose(grid8.gradient(np.full(grid8.node_count, 2.5)), 0.0, atol=1e-13)

    def test_bilinear_at_element_centre(self):
        g = Grid2D.rectangle(1 + 1, 2, lx=2.0, ly=2.0)
        s = g.nodes[:, 0] * g.nodes[:, 1]
        centre = QuadratureRule(np.array([[0.0, 0.0]]), np.array([4.0]))
        grad = g.gradient(s, centre)[:, 0]
        xc = g.quadrature_points(centre)[:, 0]
        assert np.allclose(grad, xc[:, ::-1], atol=1e-13)

    @given(st.lists(finite, min_size=6, max_size=6))
    def test_affine_reproduction(self, vals):
        g = Grid2D.rectangle(3, 4, lx=1.3, ly=0.7, origin=(0.2, -0.1))
        A = np.array(vals[:4]).reshape(2, 2)
        u = affine(g, A, vals[4:])
        assert np.allclose(g.gradient(u), A, atol=1e-12)
        assert np.allclose(g.strain(u), 0.5 * (A + A.T), atol=1e-12)


class TestIntegration:
    def test_area(self, grid8):
        assert grid8.integrate(np.ones((grid8.element_count, 4))) == pytest.approx(1.0, abs=1e-13)

    def test_constant(self):
        g = Grid2D.rectangle(5, 3, lx=2.0, ly=1.5)
        assert g.integrate(np.full((g.element_count, 4), 1.7)) == pytest.approx(1.7 * 3.0, abs=1e-13)

    def test_linear_density(self, grid8):
        xq = grid8.quadrature_points()[..., 0]
        assert grid8.integrate(xq) == pytest.approx(0.5, abs=1e-14)

    @given(st.integers(2, 7), st.integers(2, 7), st.floats(0.1, 3), st.floats(0.1, 3))
    def test_area_property(self, nx, ny, lx, ly):
        g = Grid2D.rectangle(nx, ny, lx, ly)
        assert g.integrate(np.ones((g.element_count, 4))) == pytest.approx(lx * ly, rel=1e-13)
        assert g.lumped_mass.sum() == pytest.approx(lx * ly, rel=1e-13)
        assert g.mass_matrix.sum() == pytest.approx(lx * ly, rel=1e-13)

    def test_stiffness_annihilates_constants(self, grid8):
        assert np.allclose(grid8.stiffness_matrix @ np.ones(grid8.node_count), 0, atol=1e-13)

    def test_stiffness_energy_of_linear(self, grid8):
        s = grid8.nodes[:, 0]
        assert s @ grid8.stiffness_matrix @ s == pytest.approx(1.0, rel=1e-13)


class TestDirichlet:
    def test_constant_vector(self, grid8):
        out = grid8.apply_dirichlet(np.zeros((grid8.node_count, 2)), (1.0, 0.0))
        d = grid8.dirichlet_nodes
        assert np.all(out[d] == [1.0, 0.0])
        assert np.all(out[grid8.free_nodes] == 0.0)

    def test_unchanged_if_already_equal(self, grid8):
        u = np.random.default_rng(0).normal(size=(grid8.node_count, 2))
        out = grid8.apply_dirichlet(u, u[grid8.dirichlet_nodes])
        assert np.array_equal(out, u)

    def test_linear_ramp(self, grid8):
        ramp = np.stack([0.01 * grid8.nodes[:, 0], 0 * grid8.nodes[:, 0]], axis=1)
        out = grid8.apply_dirichlet(np.zeros_like(ramp), ramp)
        d = grid8.dirichlet_nodes
        assert np.allclose(out[d, 0], 0.01 * grid8.nodes[d, 0])

    @given(st.integers(0, 2 ** 31 - 1))
    def test_idempotent(self, seed):
        g = Grid2D.rectangle(4, 3, dirichlet="boundary")
        rng = np.random.default_rng(seed)
        u = rng.normal(size=(g.node_count, 2))
        b = rng.normal(size=(g.dirichlet_nodes.size, 2))
        once = g.apply_dirichlet(u, b)
        assert np.array_equal(g.apply_dirichlet(once, b), once)


def test_dual_norm_ignores_dirichlet_rows(grid8):
    r = np.zeros((grid8.node_count, 2))
    r[grid8.dirichlet_nodes] = 5.0
    assert grid8.dual_norm(r, grid8.free_nodes) == 0.0


def test_state_copy_is_deep():
    s = State(np.zeros((4, 2)), np.full((4, 2), 0.5), np.zeros((4, 2)), np.ones(4), 0.0)
    t = s.copy()
    t.z[0] = 0.0
    assert s.z[0] == 1.0
    assert s.n_components == 2
