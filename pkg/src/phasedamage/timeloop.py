"""Staggered time stepping, per-step diagnostics and the epsilon sweep.

Each step of length ``tau`` runs three sub-solves:

1. ``u`` minimizes the elastic energy for ``(c^n, z^n)`` and the data at
   ``t^{n+1}`` (warm start ``u^n + b^{n+1} - b^n``);
2. ``z`` solves the damage obstacle problem with the new ``u``;
3. ``(c, w)`` take one Cahn-Hilliard step with the new ``u`` and ``z``.

``order="elasticity-ch-damage"`` swaps the last two.  Every sub-step
decreases its own incremental functional, so the discrete energy balance::

    G^{n+1} - G^n + D_z + D_w <= W_b + W_f

holds up to solver tolerances, where ``G = E_eps - int f . u``, ``D_z`` and
``D_w`` are the damage and diffusion dissipation, and ``W_b``, ``W_f`` the
work of the boundary and force programs.  The residual of this inequality is
recorded for every step.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Callable, List, Optional, Sequence

import numpy as np

from .cahn_hilliard import CHStepConfig, ch_step, chemical_potential, scheme_residual
from .damage import DamageProblem, DamageStepConfig, damage_step
from .elasticity import (ElasticSolveConfig, balance_residual, energy_derivative,
                         initial_displacement, load_values, solve_displacement)
from .energy import (EnergyBreakdown, MaterialParams, incremental_dissipation,
                     rate_dissipation, total_energy)
from .exceptions import ConfigError, PhaseDamageError, SimulationError
from .mesh import Grid2D, State

log = logging.getLogger(__name__)

ORDERS = ("elasticity-damage-ch", "elasticity-ch-damage")


# ----------------------------------------------------------------------
# loading programs and initial data
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Ramp:
    """Piecewise-linear scalar program ``t -> r(t)``, constant outside ``times``."""

    times: tuple = (0.0,)
    values: tuple = (1.0,)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size == 0 or t.size != len(self.values):
            raise ValueError("ramp times and values must be nonempty and of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("ramp times must be strictly increasing")
        object.__setattr__(self, "times", tuple(float(x) for x in self.times))
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    @property
    def is_constant(self) -> bool:
        return len(set(self.values)) == 1


@dataclass(frozen=True)
class BoundaryProgram:
    """Dirichlet data ``b(x, t) = r(t) (G x + offset)``, affine in space."""

    gradient: tuple = ((0.0, 0.0), (0.0, 0.0))
    offset: tuple = (0.0, 0.0)
    ramp: Ramp = field(default_factory=Ramp)

    def field(self, x: np.ndarray, t: float) -> np.ndarray:
        G = np.asarray(self.gradient, dtype=float)
        return self.ramp(t) * (x @ G.T + np.asarray(self.offset, dtype=float))

    @property
    def is_zero(self) -> bool:
        return not (np.any(np.asarray(self.gradient)) or np.any(np.asarray(self.offset)))

    @property
    def is_static(self) -> bool:
        return self.is_zero or self.ramp.is_constant


@dataclass(frozen=True)
class ForceProgram:
    """Spatially constant body force ``f(t) = r(t) * vector``."""

    vector: tuple = (0.0, 0.0)
    ramp: Ramp = field(default_factory=Ramp)

    def values(self, t: float) -> np.ndarray:
        return self.ramp(t) * np.asarray(self.vector, dtype=float)

    @property
    def is_zero(self) -> bool:
        return not np.any(np.asarray(self.vector))

    @property
    def is_static(self) -> bool:
        return self.is_zero or self.ramp.is_constant


@dataclass(frozen=True)
class InitialData:
    """Initial concentration and damage.

    ``c_mode="random"`` adds ``amplitude * P xi`` with ``xi`` uniform in
    ``[-1, 1]``; ``"cosine"`` adds ``amplitude * cos(pi x / lx)`` to the first
    component and subtracts it from the second.  ``z_defects`` lists
    ``(x, y, radius, value)`` disks in which ``z`` is lowered to ``value``.
    """

    c_mean: tuple = (0.5, 0.5)
    amplitude: float = 0.0
    c_mode: str = "random"
    z_value: float = 1.0
    z_defects: tuple = ()

    def build(self, grid: Grid2D, seed: int):
        nn = grid.node_count
        mean = np.asarray(self.c_mean, dtype=float)
        c = np.broadcast_to(mean, (nn, mean.size)).copy()
        if self.amplitude:
            if self.c_mode == "random":
                xi = np.random.default_rng(seed).uniform(-1.0, 1.0, size=c.shape)
                c += self.amplitude * (xi - xi.mean(axis=1, keepdims=True))
            elif self.c_mode == "cosine":
                x = grid.nodes[:, 0] - grid.origin[0]
                bump = self.amplitude * np.cos(np.pi * x / (grid.nx * grid.hx))
                c[:, 0] += bump
                c[:, 1] -= bump
            else:
                raise ConfigError(f"unknown initial c_mode {self.c_mode!r}")
        z = np.full(nn, float(self.z_value))
        xy = grid.nodes
        for x0, y0, r, val in self.z_defects:
            inside = np.hypot(xy[:, 0] - x0, xy[:, 1] - y0) <= r
            z[inside] = np.minimum(z[inside], val)
        return c, z


@dataclass(frozen=True)
class GridSpec:
    nx: int = 32
    ny: int = 32
    lx: float = 1.0
    ly: float = 1.0
    origin: tuple = (0.0, 0.0)
    dirichlet: object = "left_right"

    def build(self) -> Grid2D:
        d = self.dirichlet
        if isinstance(d, (list, tuple)) and d and isinstance(d[0], str):
            # union of presets
            g = Grid2D.rectangle(self.nx, self.ny, self.lx, self.ly, self.origin, d[0])
            nodes = np.unique(np.concatenate([g.with_dirichlet(name).dirichlet_nodes
                                              for name in d]))
            return g.with_dirichlet(nodes)
        return Grid2D.rectangle(self.nx, self.ny, self.lx, self.ly, self.origin, d)


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Tolerances:
    """Thresholds used by the per-step monitors and the audit."""

    mass: float = 1e-9
    z_bound: float = 1e-12
    irreversibility: float = 1e-12
    vi: float = 1e-8
    complementarity: float = 1e-10
    ch_residual: float = 1e-8
    ledger_static: float = 1e-8
    ledger_ramped: float = 1e-6


@dataclass(frozen=True)
class SimulationConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    mat: MaterialParams = field(default_factory=MaterialParams)
    T_final: float = 0.1
    tau: float = 0.01
    boundary: BoundaryProgram = field(default_factory=BoundaryProgram)
    force: ForceProgram = field(default_factory=ForceProgram)
    initial: InitialData = field(default_factory=InitialData)
    snapshot_stride: int = 1
    seed: int = 0
    elastic: ElasticSolveConfig = field(default_factory=ElasticSolveConfig)
    ch_newton_tol: float = 1e-10
    ch_max_iter: int = 50
    splitting: str = "convex"
    elastic_coupling: str = "implicit"
    damage_tol: float = 1e-12
    damage_max_iter: int = 100
    order: str = ORDERS[0]
    tolerances: Tolerances = field(default_factory=Tolerances)

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.T_final / self.tau - 1e-9))

    @property
    def epsilon(self) -> float:
        return self.mat.epsilon

    @property
    def is_static(self) -> bool:
        return self.boundary.is_static and self.force.is_static

    def with_(self, **changes) -> "SimulationConfig":
        from dataclasses import replace
        return replace(self, **changes)

    def ch_config(self) -> CHStepConfig:
        return CHStepConfig(self.tau, self.ch_newton_tol, self.ch_max_iter, self.splitting,
                            self.elastic_coupling)

    def damage_config(self) -> DamageStepConfig:
        return DamageStepConfig(self.tau, self.damage_tol, self.damage_max_iter)

    def validate(self) -> None:
        """Check every invariant; raise :class:`ConfigError` naming the first violation."""
        try:
            self.mat.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if not self.T_final >= self.tau:
            raise ConfigError("T_final must be at least tau")
        if self.snapshot_stride < 1:
            raise ConfigError("snapshot_stride must be >= 1")
        if self.order not in ORDERS:
            raise ConfigError(f"order must be one of {ORDERS}")
        if self.mat.epsilon == 0 and self.mat.damage_interp.phi(
                min(self.initial.z_value, *[d[3] for d in self.initial.z_defects] or [1.0])) <= 0:
            raise ConfigError("epsilon = 0 requires Phi(z0) > 0 everywhere")
        mean = np.asarray(self.initial.c_mean, dtype=float)
        if mean.size != self.mat.n_components:
            raise ConfigError(f"c_mean needs {self.mat.n_components} components")
        if abs(mean.sum() - 1.0) > 1e-12:
            raise ConfigError(f"initial concentration must lie on the simplex "
                              f"(components sum to {mean.sum():.12g}, expected 1)")
        if np.any(mean < 0):
            raise ConfigError("initial concentration must be nonnegative")
        zs = [self.initial.z_value] + [d[3] for d in self.initial.z_defects]
        if min(zs) < 0 or max(zs) > 1:
            raise ConfigError("initial damage must lie in [0, 1]")
        try:
            self.ch_config()
            self.damage_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


# ----------------------------------------------------------------------
# diagnostics
# ----------------------------------------------------------------------
@dataclass
class DiagnosticsRecord:
    """Audit quantities of one time level (step 0 is the initial state)."""

    step: int
    time: float
    gradient_c: float = 0.0
    gradient_z: float = 0.0
    chemical: float = 0.0
    elastic: float = 0.0
    quartic_reg: float = 0.0
    total: float = 0.0
    dissipation_increment: float = 0.0
    boundary_work: float = 0.0
    force_work: float = 0.0
    masses: tuple = ()
    min_z: float = 1.0
    max_z: float = 1.0
    max_dz: float = 0.0
    balance_residual: float = 0.0
    vi_residual: float = 0.0
    vi_min: float = 0.0
    complementarity: float = 0.0
    ch_residual: float = 0.0
    damage_dissipation: float = 0.0
    diffusion_dissipation: float = 0.0
    ledger_residual: float = 0.0
    ledger_cumulative: float = 0.0
    grad_u_p: float = 0.0
    quartic_norm: float = 0.0
    elastic_norm: float = 0.0
    u_w1p: float = 0.0
    iters_u: int = 0
    iters_z: int = 0
    iters_c: int = 0
    violations: str = ""

    @classmethod
    def columns(cls, n_components: int) -> List[str]:
        cols = []
        for f in fields(cls):
            if f.name == "masses":
                cols += [f"mass_{k + 1}" for k in range(n_components)]
            else:
                cols.append(f.name)
        return cols

    def as_row(self) -> dict:
        row = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "masses":
                row.update({f"mass_{k + 1}": float(m) for k, m in enumerate(v)})
            else:
                row[f.name] = v
        return row

    @classmethod
    def from_row(cls, row: dict) -> "DiagnosticsRecord":
        kw, masses = {}, []
        ints = {"step", "iters_u", "iters_z", "iters_c"}
        for f in fields(cls):
            if f.name == "masses":
                k = 1
                while f"mass_{k}" in row:
                    masses.append(float(row[f"mass_{k}"]))
                    k += 1
                kw["masses"] = tuple(masses)
            elif f.name == "violations":
                kw[f.name] = row.get(f.name, "") or ""
            elif f.name in row:
                kw[f.name] = int(row[f.name]) if f.name in ints else float(row[f.name])
        return cls(**kw)


@dataclass
class Trajectory:
    """States at every time level plus one diagnostics record per level."""

    cfg: SimulationConfig
    grid: Grid2D
    states: List[State] = field(default_factory=list)
    records: List[DiagnosticsRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.states)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def final(self) -> State:
        return self.states[-1]

    @property
    def violations(self) -> List[tuple]:
        return [(r.step, r.violations) for r in self.records if r.violations]


def monitored_norms(grid: Grid2D, u, z, mat: MaterialParams, epsilon: float) -> dict:
    """Norms bounded uniformly in ``epsilon`` by the a-priori estimates."""
    p = mat.w2.p
    H = grid.gradient(u)
    g2 = np.sum(H ** 2, axis=(-1, -2))
    uq = grid.interpolate(u)
    grad_p = grid.integrate(g2 ** (0.5 * p))
    quartic = epsilon * grid.integrate(g2 ** 2)
    e = grid.strain(u)
    ph = grid.interpolate(mat.damage_interp.phi(z))
    el = grid.integrate(ph * np.sum(e ** 2, axis=(-1, -2)))
    u_p = grid.integrate(np.sum(uq ** 2, axis=-1) ** (0.5 * p))
    return dict(grad_u_p=grad_p, quartic_norm=quartic ** 0.25, elastic_norm=math.sqrt(el),
                u_w1p=(u_p + grad_p) ** (1.0 / p))


def _potential(grid: Grid2D, state: State, f, mat: MaterialParams, eps: float):
    E = total_energy(grid, state, mat, eps)
    load = grid.assemble_load(load_values(grid, f))
    return E, E.total - float(np.sum(load * state.u))


@dataclass
class StepLedger:
    potential_old: float
    potential_new: float
    damage_dissipation: float
    diffusion_dissipation: float
    boundary_work: float
    force_work: float

    @property
    def residual(self) -> float:
        return (self.potential_new - self.potential_old + self.damage_dissipation
                + self.diffusion_dissipation - self.boundary_work - self.force_work)


def step_ledger(grid: Grid2D, cfg: SimulationConfig, s0: State, s1: State) -> StepLedger:
    """Terms of the discrete energy balance between two consecutive states.

    The boundary work is the midpoint-rule value of
    ``int_0^1 dE(u^n + s db)[db] ds`` with ``db = b^{n+1} - b^n`` extended
    affinely to the whole grid; the force work collects the change of
    ``-int f . u`` caused by the new force and by the boundary increment.
    """
    mat, eps, tau = cfg.mat, cfg.epsilon, cfg.tau
    f0, f1 = cfg.force.values(s0.t), cfg.force.values(s1.t)
    _, G0 = _potential(grid, s0, f0, mat, eps)
    _, G1 = _potential(grid, s1, f1, mat, eps)
    db = cfg.boundary.field(grid.nodes, s1.t) - cfg.boundary.field(grid.nodes, s0.t)
    bw = 0.0
    if np.any(db):
        bw = energy_derivative(grid, s0.u + 0.5 * db, s0.c, s0.z, eps, mat, db)
    l0 = grid.assemble_load(load_values(grid, f0))
    l1 = grid.assemble_load(load_values(grid, f1))
    fw = -float(np.sum((l1 - l0) * s0.u)) - float(np.sum(l1 * db))
    dz = rate_dissipation(grid, s1.z, s0.z, tau, mat.alpha, mat.beta)
    w = s1.w
    dw = tau * float(np.sum(w * (grid.stiffness_matrix @ w @ mat.mobility_matrix)))
    return StepLedger(G0, G1, dz, dw, bw, fw)


def ledger_tolerance(cfg: SimulationConfig, E0: float, n_steps: int = 1) -> float:
    """Allowed ledger residual: per step when static, summed over ``n_steps`` when ramped.

    Ramped runs are also held to the per-step share (``n_steps = 1``) so that
    a single energy jump cannot hide behind earlier dissipation.
    """
    tol = cfg.tolerances
    if cfg.is_static:
        return tol.ledger_static * (1.0 + abs(E0))
    return tol.ledger_ramped * (1.0 + abs(E0)) * max(n_steps, 1)


def _stage_fields(cfg: SimulationConfig, s0: State, s1: State):
    """``c`` seen by the damage step and ``z`` seen by the Cahn-Hilliard step."""
    if cfg.order == ORDERS[0]:
        return s0.c, s1.z
    return s1.c, s0.z


def step_diagnostics(grid: Grid2D, cfg: SimulationConfig, s0: State, s1: State,
                     step: int, masses0: np.ndarray, E0: float, cumulative: float,
                     iters=(0, 0, 0)) -> DiagnosticsRecord:
    """Residuals and monitors for the step ``s0 -> s1``."""
    mat, eps, tol = cfg.mat, cfg.epsilon, cfg.tolerances
    c_dmg, z_ch = _stage_fields(cfg, s0, s1)
    f1 = cfg.force.values(s1.t)
    violations = []

    dz = s1.z - s0.z
    max_dz = float(np.max(dz))
    masses = grid.lumped_mass @ s1.c
    drift = np.max(np.abs(masses - masses0) / np.maximum(np.abs(masses0), 1e-12 * grid.area))
    if drift > tol.mass:
        violations.append("mass")
    if np.min(s1.z) < -tol.z_bound or np.max(s1.z) > 1.0 + tol.z_bound:
        violations.append("bounds")
    if max_dz > tol.irreversibility:
        violations.append("irreversibility")

    bal = balance_residual(grid, s1.u, s0.c, s0.z, f1, eps, mat)
    bal_tol = cfg.elastic.newton_tol * (1.0 + grid.dual_norm(
        grid.assemble_load(load_values(grid, f1)), grid.free_nodes))
    if bal > 1.01 * bal_tol:
        violations.append("balance")

    prob = DamageProblem(grid, s0.z, s1.u, c_dmg, cfg.tau, mat)
    g = prob.gradient(s1.z)
    vi_all = -float(np.sum(g))
    vi_min = float(np.min(-g))
    comp = float(np.max(np.abs(prob.kkt_residual(s1.z, g))))
    if vi_all < -tol.vi or vi_min < -tol.vi:
        violations.append("vi")
    if comp > tol.complementarity:
        violations.append("complementarity")

    ch = max(scheme_residual(grid, s0.c, s1.c, s1.w, s1.u, z_ch, mat, cfg.ch_config()))
    if ch > tol.ch_residual:
        violations.append("ch")

    E = total_energy(grid, s1, mat, eps) if "bounds" not in violations else None
    led = step_ledger(grid, cfg, s0, s1) if E is not None else None
    rho = led.residual if led else float("nan")
    cumulative += rho
    if led is None:
        violations.append("energy")
    elif rho > ledger_tolerance(cfg, E0) or (
            not cfg.is_static and cumulative > ledger_tolerance(cfg, E0, step)):
        violations.append("energy")

    norms = monitored_norms(grid, s1.u, s1.z, mat, eps)
    Ed = E.as_dict() if E is not None else {k: float("nan") for k in EnergyBreakdown.FIELDS}
    try:
        Ed["dissipation_increment"] = incremental_dissipation(
            grid, s1.z, s0.z, cfg.tau, mat.alpha, mat.beta, tol=np.inf)
    except PhaseDamageError:
        Ed["dissipation_increment"] = float("nan")
    if led:
        Ed["boundary_work"], Ed["force_work"] = led.boundary_work, led.force_work
    return DiagnosticsRecord(
        step=step, time=s1.t, **Ed, masses=tuple(masses), min_z=float(np.min(s1.z)),
        max_z=float(np.max(s1.z)), max_dz=max_dz, balance_residual=bal, vi_residual=vi_all,
        vi_min=vi_min, complementarity=comp, ch_residual=ch,
        damage_dissipation=led.damage_dissipation if led else float("nan"),
        diffusion_dissipation=led.diffusion_dissipation if led else float("nan"),
        ledger_residual=rho, ledger_cumulative=cumulative, **norms,
        iters_u=iters[0], iters_z=iters[1], iters_c=iters[2],
        violations=";".join(violations))


def initial_diagnostics(grid: Grid2D, cfg: SimulationConfig, s0: State) -> DiagnosticsRecord:
    mat, eps = cfg.mat, cfg.epsilon
    E = total_energy(grid, s0, mat, eps)
    f0 = cfg.force.values(s0.t)
    bal = balance_residual(grid, s0.u, s0.c, s0.z, f0, eps, mat)
    norms = monitored_norms(grid, s0.u, s0.z, mat, eps)
    return DiagnosticsRecord(step=0, time=s0.t, **E.as_dict(),
                             masses=tuple(grid.lumped_mass @ s0.c),
                             min_z=float(np.min(s0.z)), max_z=float(np.max(s0.z)),
                             balance_residual=bal, **norms)


# ----------------------------------------------------------------------
# drivers
# ----------------------------------------------------------------------
def initial_state(grid: Grid2D, cfg: SimulationConfig) -> State:
    c0, z0 = cfg.initial.build(grid, cfg.seed)
    if np.max(np.abs(c0.sum(axis=1) - 1.0)) > 1e-12 or np.min(c0) < -1e-12:
        raise ConfigError("initial concentration leaves the simplex")
    b0 = cfg.boundary.field(grid.nodes, 0.0)
    f0 = cfg.force.values(0.0)
    u0 = initial_displacement(grid, c0, z0, f0, b0, cfg.epsilon, cfg.mat, cfg.elastic)
    w0 = chemical_potential(grid, c0, u0, z0, cfg.mat)
    return State(u0, c0, w0, z0, 0.0)


def run_simulation(cfg: SimulationConfig, out_dir=None,
                   progress: Optional[Callable[[DiagnosticsRecord], None]] = None,
                   grid: Optional[Grid2D] = None) -> Trajectory:
    """Integrate the regularized system from ``t = 0`` to ``T_final``.

    Monitors never stop the run; their findings are stored in the
    ``violations`` field of each record.

    Raises
    ------
    SimulationError
        When a sub-solver fails; carries the step index and the last good
        state, which is also written to ``out_dir`` when one is given.
    """
    cfg.validate()
    grid = grid or cfg.grid.build()
    mat, eps = cfg.mat, cfg.epsilon
    ch_cfg, dmg_cfg = cfg.ch_config(), cfg.damage_config()
    s = initial_state(grid, cfg)
    traj = Trajectory(cfg, grid, [s], [initial_diagnostics(grid, cfg, s)])
    masses0 = grid.lumped_mass @ s.c
    E0 = traj.records[0].total
    cumulative = 0.0
    for n in range(cfg.n_steps):
        t1 = (n + 1) * cfg.tau
        b0 = cfg.boundary.field(grid.nodes, s.t)
        b1 = cfg.boundary.field(grid.nodes, t1)
        f1 = cfg.force.values(t1)
        try:
            u1, ui = solve_displacement(grid, s.c, s.z, f1, b1, eps, mat, cfg.elastic,
                                        u0=s.u + (b1 - b0), return_info=True)
            if cfg.order == ORDERS[0]:
                z1, zi = damage_step(grid, s.z, u1, s.c, mat, dmg_cfg, return_info=True)
                c1, w1, ci = ch_step(grid, s.c, u1, z1, mat, ch_cfg, w_guess=s.w,
                                     return_info=True)
            else:
                c1, w1, ci = ch_step(grid, s.c, u1, s.z, mat, ch_cfg, w_guess=s.w,
                                     return_info=True)
                z1, zi = damage_step(grid, s.z, u1, c1, mat, dmg_cfg, return_info=True)
        except PhaseDamageError as exc:
            if out_dir is not None:
                from .io import write_snapshot
                from pathlib import Path
                Path(out_dir).mkdir(parents=True, exist_ok=True)
                write_snapshot(s, Path(out_dir) / "last_good.snap", grid)
            raise SimulationError(f"step {n + 1} failed: {exc}", step=n + 1, last_good=s,
                                  cause=exc) from exc
        s1 = State(u1, c1, w1, z1, t1)
        rec = step_diagnostics(grid, cfg, s, s1, n + 1, masses0, E0, cumulative,
                               (ui.iterations, zi.iterations, ci.iterations))
        cumulative = rec.ledger_cumulative
        if rec.violations:
            log.warning("step %d: monitor violations: %s", n + 1, rec.violations)
        traj.states.append(s1)
        traj.records.append(rec)
        if progress is not None:
            progress(rec)
        s = s1
    return traj


# ----------------------------------------------------------------------
# energy ledger and epsilon sweep
# ----------------------------------------------------------------------
@dataclass
class LedgerReport:
    residuals: np.ndarray
    cumulative: np.ndarray
    tolerance_step: float
    tolerance_cumulative: np.ndarray
    static: bool

    @property
    def passed(self) -> bool:
        if not np.all(np.isfinite(self.residuals)):
            return False
        if self.static:
            return bool(np.all(self.residuals <= self.tolerance_step))
        return bool(np.all(self.cumulative <= self.tolerance_cumulative))

    @property
    def failing_steps(self) -> List[int]:
        if self.static:
            bad = ~(self.residuals <= self.tolerance_step)
        else:
            bad = ~(self.cumulative <= self.tolerance_cumulative)
        return [int(i) + 1 for i in np.flatnonzero(bad)]


def energy_ledger_check(traj: Trajectory, cfg: Optional[SimulationConfig] = None) -> LedgerReport:
    """Recompute the discrete energy balance of every step from the stored states."""
    cfg = cfg or traj.cfg
    grid = traj.grid
    res = []
    for s0, s1 in zip(traj.states[:-1], traj.states[1:]):
        try:
            res.append(step_ledger(grid, cfg, s0, s1).residual)
        except PhaseDamageError:
            res.append(float("nan"))
    res = np.array(res)
    E0 = total_energy(grid, traj.states[0], cfg.mat, cfg.epsilon).total
    tol = cfg.tolerances
    steps = np.arange(1, res.size + 1)
    return LedgerReport(res, np.cumsum(res), tol.ledger_static * (1.0 + abs(E0)),
                        tol.ledger_ramped * (1.0 + abs(E0)) * steps, cfg.is_static)


@dataclass
class SweepEntry:
    epsilon: float
    max_w1p: float
    max_quartic_norm: float
    max_quartic_energy: float
    final: State
    trajectory: Optional[Trajectory] = None


@dataclass
class SweepReport:
    entries: List[SweepEntry]
    l2_differences: List[float]

    @property
    def quartic_decreasing(self) -> bool:
        q = [e.max_quartic_energy for e in self.entries]
        return all(b < a for a, b in zip(q, q[1:]))

    @property
    def w1p_ratio(self) -> float:
        v = [e.max_w1p for e in self.entries]
        return max(v) / min(v) if min(v) > 0 else (1.0 if max(v) == 0 else float("inf"))

    @property
    def cauchy_decreasing(self) -> bool:
        d = self.l2_differences
        return all(b < a for a, b in zip(d, d[1:]))

    def rows(self) -> List[dict]:
        out = []
        for i, e in enumerate(self.entries):
            out.append(dict(epsilon=e.epsilon, max_w1p=e.max_w1p,
                            max_quartic_norm=e.max_quartic_norm,
                            max_quartic_energy=e.max_quartic_energy,
                            l2_diff_next=self.l2_differences[i]
                            if i < len(self.l2_differences) else float("nan")))
        return out


def _sweep_member(cfg: SimulationConfig):
    traj = run_simulation(cfg)
    recs = traj.records
    return SweepEntry(cfg.epsilon, max(r.u_w1p for r in recs),
                      max(r.quartic_norm for r in recs),
                      max(r.quartic_norm ** 4 for r in recs), traj.final, None)


def epsilon_sweep(cfg: SimulationConfig, eps_list: Sequence[float], workers: int = 1,
                  keep_trajectories: bool = False) -> SweepReport:
    """Run the same problem for decreasing ``epsilon`` and collect uniform bounds.

    Parameters
    ----------
    eps_list : sequence of float
        At least three positive, strictly decreasing values spanning at least
        three decades.
    workers : int
        Number of processes; members are independent.
    """
    eps = [float(e) for e in eps_list]
    if len(eps) < 3:
        raise ValueError("epsilon sweep needs at least three values")
    if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilon values must be positive and strictly decreasing")
    if eps[0] / eps[-1] < 1e3 * (1 - 1e-12):
        raise ValueError("epsilon values must span at least three decades")
    cfgs = [cfg.with_(mat=cfg.mat.with_(epsilon=e)) for e in eps]
    if keep_trajectories:
        entries = []
        for c in cfgs:
            traj = run_simulation(c)
            recs = traj.records
            entries.append(SweepEntry(c.epsilon, max(r.u_w1p for r in recs),
                                      max(r.quartic_norm for r in recs),
                                      max(r.quartic_norm ** 4 for r in recs), traj.final, traj))
    elif workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_sweep_member, cfgs))
    else:
        entries = [_sweep_member(c) for c in cfgs]
    grid = cfg.grid.build()
    diffs = [math.sqrt(sum(grid.l2_norm(getattr(a.final, f) - getattr(b.final, f)) ** 2
                           for f in ("u", "c", "z")))
             for a, b in zip(entries, entries[1:])]
    return SweepReport(entries, diffs)
