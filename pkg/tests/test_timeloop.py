import math

import numpy as np
import pytest

from phasedamage.energy import ElasticLawW1, MaterialParams, calibrated_w2, default_eigenstrains
from phasedamage.exceptions import ConfigError, SimulationError
from phasedamage.io import read_snapshot, write_diagnostics
from phasedamage.timeloop import (ORDERS, BoundaryProgram, ForceProgram, GridSpec, InitialData,
                                  Ramp, SimulationConfig, energy_ledger_check, epsilon_sweep,
                                  run_simulation)

STRETCH = ((0.3, 0.0), (0.0, 0.0))


def fixed_point_cfg(**kw):
    mat = MaterialParams(w1=ElasticLawW1(eigenstrains=default_eigenstrains(0.0)))
    kw.setdefault("T_final", 0.05)
    return SimulationConfig(grid=GridSpec(6, 6), mat=mat, tau=0.01, **kw)


def ramped_cfg(n=10, T=0.1, **kw):
    kw.setdefault("initial", InitialData(amplitude=0.01, z_defects=((0.5, 0.5, 0.2, 0.6),)))
    return SimulationConfig(
        grid=GridSpec(n, n), T_final=T, tau=0.01,
        boundary=BoundaryProgram(STRETCH, ramp=Ramp((0.0, T), (0.0, 1.0))), **kw)


def static_cfg(n=10, **kw):
    return SimulationConfig(
        grid=GridSpec(n, n), T_final=0.06, tau=0.01, boundary=BoundaryProgram(STRETCH),
        initial=InitialData(amplitude=0.01, z_defects=((0.5, 0.5, 0.2, 0.6),)), **kw)


class TestPrograms:
    def test_ramp_interpolates_and_clamps(self):
        r = Ramp((0.0, 1.0), (0.0, 2.0))
        assert r(0.5) == pytest.approx(1.0)
        assert r(3.0) == 2.0 and r(-1.0) == 0.0
        assert not r.is_constant and Ramp().is_constant

    def test_ramp_validation(self):
        with pytest.raises(ValueError):
            Ramp((0.0, 0.0), (1.0, 1.0))
        with pytest.raises(ValueError):
            Ramp((0.0, 1.0), (1.0,))

    def test_boundary_field(self):
        b = BoundaryProgram(((1.0, 0.0), (0.0, 2.0)), (0.1, 0.0), Ramp((0.0, 1.0), (0.0, 1.0)))
        x = np.array([[0.5, 0.25]])
        assert np.allclose(b.field(x, 0.5), 0.5 * np.array([[0.6, 0.5]]))
        assert not b.is_static
        assert BoundaryProgram().is_zero and BoundaryProgram().is_static

    def test_force_values(self):
        f = ForceProgram((1.0, -1.0), Ramp((0.0, 2.0), (1.0, 3.0)))
        assert np.allclose(f.values(1.0), [2.0, -2.0])

    def test_initial_data(self):
        g = GridSpec(6, 6).build()
        c, z = InitialData((0.4, 0.6), 0.05, "random", 0.9, ((0.0, 0.0, 0.3, 0.2),)).build(g, 1)
        assert np.allclose(c.sum(axis=1), 1.0)
        assert np.abs(c - [0.4, 0.6]).max() <= 0.1
        assert z.min() == 0.2 and z.max() == 0.9

    def test_grid_spec_union_of_presets(self):
        g = GridSpec(4, 4, dirichlet=("left", "bottom")).build()
        assert g.dirichlet_nodes.size == 9


class TestConfig:
    def test_steps(self):
        assert SimulationConfig(T_final=0.1, tau=0.01).n_steps == 10
        assert SimulationConfig(T_final=0.105, tau=0.01).n_steps == 11

    @pytest.mark.parametrize("change,message", [
        (dict(tau=0.0), "tau must be positive"),
        (dict(initial=InitialData(c_mean=(0.5, 0.4))), "simplex"),
        (dict(snapshot_stride=0), "snapshot_stride"),
        (dict(order="damage-first"), "order"),
        (dict(splitting="explicit"), "splitting"),
        (dict(initial=InitialData(z_value=1.5)), "damage"),
    ])
    def test_validation_messages(self, change, message):
        with pytest.raises(ConfigError, match=message):
            SimulationConfig(**change).validate()

    def test_degenerate_start_needs_regularization(self):
        cfg = SimulationConfig(mat=MaterialParams(epsilon=0.0), initial=InitialData(z_value=0.0))
        with pytest.raises(ConfigError, match="epsilon"):
            cfg.validate()


def test_fixed_point_run():
    traj = run_simulation(fixed_point_cfg())
    s0 = traj.states[0]
    for s in traj.states[1:]:
        assert np.allclose(s.u, s0.u, atol=1e-14)
        assert np.allclose(s.c, s0.c, atol=1e-14)
        assert np.array_equal(s.z, s0.z)
    rep = energy_ledger_check(traj)
    assert np.all(np.abs(rep.residuals) <= 1e-12)
    assert not traj.violations


@pytest.mark.parametrize("order", ORDERS)
def test_static_ledger_per_step(order):
    cfg = static_cfg(order=order)
    traj = run_simulation(cfg)
    rep = energy_ledger_check(traj)
    assert rep.static and rep.passed, rep.failing_steps
    E = np.array([r.total for r in traj.records])
    assert np.all(np.diff(E) <= rep.tolerance_step)
    assert not traj.violations


def test_ramped_ledger_cumulative():
    traj = run_simulation(ramped_cfg())
    rep = energy_ledger_check(traj)
    assert not rep.static and rep.passed
    assert np.any(np.array([r.boundary_work for r in traj.records[1:]]) > 0)


def test_force_work_enters_ledger():
    cfg = SimulationConfig(grid=GridSpec(8, 8, dirichlet="left"), T_final=0.05, tau=0.01,
                           force=ForceProgram((0.5, 0.0), Ramp((0.0, 0.05), (0.0, 1.0))))
    traj = run_simulation(cfg)
    assert energy_ledger_check(traj).passed
    assert any(r.force_work != 0 for r in traj.records[1:])


def test_weak_damaged_law_gives_monotone_damage():
    w1 = ElasticLawW1(eigenstrains=default_eigenstrains(0.01))
    mat = MaterialParams(w1=w1, w2=calibrated_w2(w1, scale=0.05))
    cfg = ramped_cfg(n=8, T=0.2, mat=mat)
    traj = run_simulation(cfg)
    min_z = np.array([s.z.min() for s in traj.states])
    assert np.all(np.diff(min_z) <= 0)
    # strict decrease once the load exceeds the single-node threshold
    assert min_z[-1] < min_z[len(min_z) // 2] < min_z[0]


def test_per_step_invariants():
    traj = run_simulation(ramped_cfg(n=8))
    g = traj.grid
    m0 = g.lumped_mass @ traj.states[0].c
    for s0, s1, r in zip(traj.states[:-1], traj.states[1:], traj.records[1:]):
        assert np.all(np.abs(g.lumped_mass @ s1.c - m0) <= 1e-10 * m0)
        assert np.all(s1.z >= 0) and np.all(s1.z <= s0.z) and np.all(s0.z <= 1)
        assert r.vi_residual >= -1e-8
        assert r.balance_residual <= 1e-8


def test_determinism(tmp_path):
    cfg = ramped_cfg(n=6)
    a, b = run_simulation(cfg), run_simulation(cfg)
    write_diagnostics(a.records, tmp_path / "a.csv", 2)
    write_diagnostics(b.records, tmp_path / "b.csv", 2)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    for sa, sb in zip(a.states, b.states):
        assert all(np.array_equal(getattr(sa, f), getattr(sb, f)) for f in "ucwz")


def test_seed_changes_initial_noise():
    a = run_simulation(fixed_point_cfg(initial=InitialData(amplitude=0.01), seed=1, T_final=0.01))
    b = run_simulation(fixed_point_cfg(initial=InitialData(amplitude=0.01), seed=2, T_final=0.01))
    assert not np.array_equal(a.states[0].c, b.states[0].c)


def test_solver_failure_reports_last_good_state(tmp_path):
    cfg = ramped_cfg(n=6, ch_newton_tol=1e-300, ch_max_iter=1)
    with pytest.raises(SimulationError) as err:
        run_simulation(cfg, out_dir=tmp_path)
    assert err.value.step == 1
    assert err.value.last_good.t == 0.0
    snap = read_snapshot(tmp_path / "last_good.snap")
    assert np.array_equal(snap.c, err.value.last_good.c)


class TestEpsilonSweep:
    def test_undamaged_quartic_term_linear_in_epsilon(self):
        # alpha above the driving force keeps z = 1, so u solves a fixed quadratic problem
        cfg = ramped_cfg(n=6, T=0.03, mat=MaterialParams(alpha=5.0),
                         initial=InitialData(amplitude=0.0))
        eps = [1e-2, 1e-3, 1e-4, 1e-5]
        rep = epsilon_sweep(cfg, eps)
        assert all(np.all(e.final.z == 1.0) for e in rep.entries)
        q = [e.max_quartic_energy for e in rep.entries]
        slope = np.polyfit(np.log(eps), np.log(q), 1)[0]
        assert slope == pytest.approx(1.0, abs=0.1)
        assert rep.quartic_decreasing and rep.cauchy_decreasing
        assert rep.w1p_ratio <= 1.01

    @pytest.mark.parametrize("eps", [[1e-2, 1e-3], [1e-2, 1e-3, 1e-3, 1e-5],
                                     [1e-2, 1e-3, 1e-4], [1e-2, -1e-3, -1e-6]])
    def test_rejects_bad_lists(self, eps):
        with pytest.raises(ValueError):
            epsilon_sweep(fixed_point_cfg(), eps)

    def test_parallel_matches_serial(self):
        cfg = fixed_point_cfg(T_final=0.02, boundary=BoundaryProgram(STRETCH))
        eps = [1e-2, 1e-3, 1e-5]
        a, b = epsilon_sweep(cfg, eps), epsilon_sweep(cfg, eps, workers=2)
        assert [e.max_quartic_energy for e in a.entries] == [e.max_quartic_energy
                                                             for e in b.entries]
        assert len(a.rows()) == 3 and math.isnan(a.rows()[-1]["l2_diff_next"])
