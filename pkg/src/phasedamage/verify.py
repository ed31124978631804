"""Numerical audits of the constitutive assumptions and of computed trajectories.

Everything here is a pure reader: the audits take material data or stored
states and recompute residuals from scratch, so they apply equally to
trajectories loaded from disk.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional

import numpy as np

from .cahn_hilliard import chemical_potential, scheme_residual
from .damage import DamageProblem
from .elasticity import balance_residual, load_values
from .energy import MaterialParams, total_energy
from .exceptions import PhaseDamageError
from .mesh import Grid2D, State
from .timeloop import (SimulationConfig, Tolerances, Trajectory, _stage_fields,
                       ledger_tolerance, step_ledger)


# ----------------------------------------------------------------------
# sampling helpers
# ----------------------------------------------------------------------
def sample_simplex(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    return rng.dirichlet(np.ones(n), size=count)


def sample_strains(rng: np.random.Generator, count: int, radius: float = 10.0,
                   symmetric: bool = True) -> np.ndarray:
    """Random strains with Frobenius norm uniform in ``[0, radius]``."""
    A = rng.normal(size=(count, 2, 2))
    if symmetric:
        A = 0.5 * (A + np.swapaxes(A, 1, 2))
    A /= np.linalg.norm(A, axis=(1, 2))[:, None, None]
    return A * rng.uniform(0.0, radius, size=count)[:, None, None]


def _norm(a, axes):
    return np.sqrt(np.sum(a * a, axis=axes))


# ----------------------------------------------------------------------
# assumption audit
# ----------------------------------------------------------------------
@dataclass
class AssumptionResult:
    name: str
    passed: bool
    constant: float = float("nan")
    detail: str = ""


@dataclass
class AssumptionReport:
    results: List[AssumptionResult]
    seed: int
    sample_count: int

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name: str) -> AssumptionResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def lines(self) -> List[str]:
        return [f"{'PASS' if r.passed else 'FAIL'} {r.name:<18} C={r.constant:.6g}  {r.detail}"
                for r in self.results]


def audit_assumptions(mat: MaterialParams, sample_count: int = 10_000,
                      seed: int = 0) -> AssumptionReport:
    """Check structural and growth assumptions on random samples.

    Growth bounds are reported with the smallest constant that fits the
    sample.  Inequalities that must hold with a fixed sign (convexity,
    monotonicity, ``W2 <= W1``, nonnegativity) fail when a sample violates
    them.
    """
    # invalid materials produce NaN samples, which count as failures below
    with np.errstate(invalid="ignore", divide="ignore"):
        return _audit_assumptions(mat, sample_count, seed)


def _audit_assumptions(mat: MaterialParams, sample_count: int, seed: int) -> AssumptionReport:
    rng = np.random.default_rng(seed)
    n = mat.n_components
    w1, w2, p = mat.w1, mat.w2, mat.w2.p
    c = sample_simplex(rng, sample_count, n)
    e = sample_strains(rng, sample_count)
    e_b = sample_strains(rng, sample_count)
    cn = _norm(c, -1)
    en = _norm(e, (-2, -1))
    out: List[AssumptionResult] = []

    def add(name, passed, const=float("nan"), detail=""):
        out.append(AssumptionResult(name, bool(passed), float(const), detail))

    # structural: interpolation, mobility, gradient tensor
    phi = mat.damage_interp
    zz = np.linspace(0.0, 1.0, 1001)
    ok = (abs(phi.phi(0.0)) < 1e-14 and abs(phi.dphi(0.0)) < 1e-14
          and abs(phi.phi(1.0) - 1.0) < 1e-14 and np.all(phi.dphi(zz) >= 0)
          and np.all((phi.phi(zz) >= 0) & (phi.phi(zz) <= 1)))
    add("Phi", ok, detail="Phi(0)=Phi'(0)=0, Phi(1)=1, Phi'>=0")
    M = mat.mobility_matrix
    ev = np.linalg.eigvalsh(mat.projector @ M @ mat.projector)
    ok = (np.allclose(M, M.T) and np.allclose(M.sum(axis=1), 0.0)
          and np.sort(ev)[1:].min() > 0)
    add("mobility", ok, np.sort(ev)[1:].min(), "symmetric, zero row sums, PD on tangent space")
    add("Gamma", mat.gamma_c > 0 and mat.gamma > 0, mat.gamma * mat.gamma_c, "SPD")

    # dependence on the symmetric part only
    ens = sample_strains(rng, sample_count, symmetric=False)
    et = np.swapaxes(ens, -1, -2)
    d1 = np.max(np.abs(w1.density(ens, c) - w1.density(et, c)))
    d2 = np.max(np.abs(w2.density(ens, c) - w2.density(et, c)))
    add("w1_symmetry", d1 <= 1e-12 * (1 + np.max(np.abs(w1.density(ens, c)))), d1, "W1(e)=W1(e^T)")
    add("w2_symmetry", d2 <= 1e-12 * (1 + np.max(np.abs(w2.density(ens, c)))), d2, "W2(e)=W2(e^T)")

    # quadratic growth of W1
    W1 = w1.density(e, c)
    add("w1_growth", np.all(np.isfinite(W1)), np.max(np.abs(W1) / (en ** 2 + cn ** 2 + 1)),
        "|W1| <= C(|e|^2+|c|^2+1)")
    # uniform convexity of W1 in e
    de = e - e_b
    mono = _ddot(w1.stress(e, c) - w1.stress(e_b, c), de)
    ratio = mono / np.maximum(_norm(de, (-2, -1)) ** 2, 1e-300)
    add("w1_convexity", ratio.min() > 0, ratio.min(), "(S1(e1)-S1(e2)):(e1-e2) >= C|e1-e2|^2")
    # linear growth of the stress
    S1 = w1.stress(e, c)
    add("w1_stress_growth", np.all(np.isfinite(S1)), np.max(_norm(S1, (-2, -1)) / (en + cn + 1)),
        "|W1,e| <= C(|e|+|c|+1)")
    # growth of the c-derivative
    D1 = w1.dc(e, c)
    add("w1_c_growth", np.all(np.isfinite(D1)), np.max(_norm(D1, -1) / (en ** 2 + cn ** 2 + 1)),
        "|W1,c| <= C(|e|^2+|c|^2+1)")
    # one-homogeneity of h_c(e) = S1(e, c) - S1(0, c)
    lam = rng.uniform(0.0, 5.0, size=sample_count)[:, None, None]
    h = w1.stress(e, c) - w1.stress(np.zeros_like(e), c)
    hl = w1.stress(lam * e, c) - w1.stress(np.zeros_like(e), c)
    err = np.max(np.abs(hl - lam * h) / (1 + np.abs(lam * h)))
    add("w1_homogeneity", err <= 1e-12, err, "h_c(lam e) = lam h_c(e)")

    # W2 <= W1, probed also close to the stress-free strain
    near = w1.eigenstrain(c) + sample_strains(rng, sample_count, 1.0) * np.exp(
        rng.uniform(np.log(1e-6), 0.0, size=sample_count))[:, None, None]
    gap = np.concatenate([w1.density(e, c) - w2.density(e, c),
                          w1.density(near, c) - w2.density(near, c)])
    add("w2_below_w1", gap.min() >= -1e-12, gap.min(), "min(W1 - W2) over samples")
    # wel_dz >= 0 follows from W2 <= W1 and Phi' >= 0
    z = rng.uniform(0.0, 1.0, size=sample_count)
    wdz = mat.wel_dz(e, c, z)
    add("wel_z_sign", wdz.min() >= -1e-12, wdz.min(), "Phi'(z)(W1-W2) >= 0")
    # p-growth of W2
    W2 = w2.density(e, c)
    add("w2_growth", np.all(np.isfinite(W2)), np.max(np.abs(W2) / (en ** p + cn ** p + 1)),
        "|W2| <= C(|e|^p+|c|^p+1)")
    # monotonicity of the damaged stress; the p-power constant is reported
    mono2 = _ddot(w2.stress(e, c) - w2.stress(e_b, c), de)
    fit = mono2 / np.maximum(_norm(de, (-2, -1)) ** p, 1e-300)
    add("w2_monotone", mono2.min() >= -1e-12 * (1 + np.abs(mono2).max()), fit.min(),
        "(S2(e1)-S2(e2)):(e1-e2) >= 0; C = min ratio to |e1-e2|^p")
    # growth of W2 derivatives
    S2 = w2.stress(e, c)
    add("w2_stress_growth", np.all(np.isfinite(S2)),
        np.max(_norm(S2, (-2, -1)) / (en ** (p - 1) + cn ** (p - 1) + 1)),
        "|W2,e| <= C(|e|^(p-1)+|c|^(p-1)+1)")
    D2 = w2.dc(e, c)
    add("w2_c_growth", np.all(np.isfinite(D2)), np.max(_norm(D2, -1) / (en ** p + cn ** p + 1)),
        "|W2,c| <= C(|e|^p+|c|^p+1)")
    # chemical energy
    cw = np.concatenate([c, rng.uniform(-2.0, 2.0, size=(sample_count, n))])
    Wch = mat.wch.density(cw)
    add("wch_lower_bound", Wch.min() >= 0.0, Wch.min(), "W_ch >= -C with C = 0")
    Dch = mat.wch.dc(cw)
    cwn = _norm(cw, -1)
    add("wch_growth", np.all(np.isfinite(Dch)), np.max(_norm(Dch, -1) / (cwn ** 3 + 1)),
        "|W_ch,c| <= C(|c|^3+1)")
    # coercivity of W2: W2 >= C1 |e|^p - C2 (|c|^(s p') + 1)
    pp = p / (p - 1.0)
    C2 = max(w2.offset, 0.0) + 1.0
    big = en > 1.0
    C1 = np.min((W2[big] + C2 * (cn[big] ** (mat.s * pp) + 1)) / en[big] ** p)
    add("w2_coercive", C1 > 0, C1, f"W2 >= C1|e|^p - C2(|c|^(s p')+1) with C2={C2:.3g}")
    return AssumptionReport(out, seed, sample_count)


def _ddot(a, b):
    return np.sum(a * b, axis=(-2, -1))


# ----------------------------------------------------------------------
# finite-difference oracle
# ----------------------------------------------------------------------
@dataclass
class FDReport:
    density_id: str
    max_rel_error: float
    sample_count: int

    def passed(self, tol: float) -> bool:
        return self.max_rel_error <= tol


def _sym_basis():
    B = np.zeros((3, 2, 2))
    B[0, 0, 0] = 1.0
    B[1, 1, 1] = 1.0
    B[2, 0, 1] = B[2, 1, 0] = 0.5
    return B


def _fd_tensor(fun, e, h):
    """Central-difference derivative of ``fun`` in ``e`` as a symmetric tensor."""
    out = np.zeros_like(e)
    for i, j in ((0, 0), (1, 1), (0, 1)):
        E = np.zeros((2, 2))
        E[i, j] = E[j, i] = 1.0
        d = (fun(e + h * E) - fun(e - h * E)) / (2 * h)
        if i == j:
            out[..., i, i] = d
        else:
            out[..., 0, 1] = out[..., 1, 0] = 0.5 * d
    return out


def _fd_vector(fun, c, h):
    out = np.zeros_like(c)
    for k in range(c.shape[-1]):
        E = np.zeros(c.shape[-1])
        E[k] = 1.0
        out[..., k] = (fun(c + h * E) - fun(c - h * E)) / (2 * h)
    return out


def _rel_error(a, b, axes):
    num = _norm(a - b, axes)
    den = np.maximum(_norm(a, axes), 1e-3)
    return float(np.max(num / den))


def _chem_potential_fd(mat: MaterialParams, rng, count: int, h: float) -> float:
    grid = Grid2D.rectangle(6, 6)
    nn = grid.node_count
    worst = 0.0
    for _ in range(count):
        c1 = 0.5 + 0.3 * rng.uniform(-1, 1, nn)
        c = np.stack([c1, 1.0 - c1] + [np.zeros(nn)] * (mat.n_components - 2), axis=1)
        u = 0.05 * rng.normal(size=(nn, 2))
        z = rng.uniform(0.2, 1.0, nn)
        w = chemical_potential(grid, c, u, z, mat)
        zeta = rng.normal(size=c.shape)
        lhs = float(np.sum(zeta * (grid.mass_matrix @ w)))
        d = zeta - zeta.mean(axis=1, keepdims=True)
        E = lambda cc: total_energy(grid, State(u, cc, w, z), mat, 0.0).total
        fd = (E(c + h * d) - E(c - h * d)) / (2 * h)
        worst = max(worst, abs(lhs - fd) / max(abs(fd), 1e-3))
    return worst


def fd_test_material() -> MaterialParams:
    """Material with every coupling switched on, so each derivative path is exercised."""
    from .energy import ElasticLawW1, default_eigenstrains
    w1 = ElasticLawW1(mu0=1.0, mu1=0.2, lam0=1.5, lam1=-0.3,
                      eigenstrains=default_eigenstrains(0.1))
    return MaterialParams(w1=w1)


def fd_gradient_check(density_id: str, sample_count: int = 100, seed: int = 0,
                      mat: Optional[MaterialParams] = None, h: float = 1e-5) -> FDReport:
    """Compare an analytic derivative with central differences.

    Registered ids: ``w1_stress``, ``w1_dc``, ``w2_stress``, ``w2_dc``,
    ``wel_stress``, ``wel_dc``, ``wel_dz``, ``wch_dc``, ``chemical_potential``.
    Without ``mat`` the check uses :func:`fd_test_material`.  The error of each sample is ``|a - fd| / max(|a|, 1e-3)``; strains are
    drawn with ``|e - e_hat| >= 0.1`` so the ridge of ``W2`` is avoided.
    """
    mat = mat or fd_test_material()
    rng = np.random.default_rng(seed)
    n = mat.n_components
    c = sample_simplex(rng, sample_count, n)
    off = sample_strains(rng, sample_count, 1.0)
    scale = np.linalg.norm(off, axis=(1, 2))
    off *= (np.maximum(scale, 0.1) / np.maximum(scale, 1e-300))[:, None, None]
    z = rng.uniform(0.0, 1.0, sample_count)
    w1, w2 = mat.w1, mat.w2
    if density_id.startswith("w2"):
        e = w2.eigenstrain(c) + off
    else:
        e = w1.eigenstrain(c) + off
    checks: Dict[str, Callable[[], float]] = {
        "w1_stress": lambda: _rel_error(w1.stress(e, c),
                                        _fd_tensor(lambda x: w1.density(x, c), e, h), (-2, -1)),
        "w1_dc": lambda: _rel_error(w1.dc(e, c),
                                    _fd_vector(lambda x: w1.density(e, x), c, h), -1),
        "w2_stress": lambda: _rel_error(w2.stress(e, c),
                                        _fd_tensor(lambda x: w2.density(x, c), e, h), (-2, -1)),
        "w2_dc": lambda: _rel_error(w2.dc(e, c),
                                    _fd_vector(lambda x: w2.density(e, x), c, h), -1),
        "wel_stress": lambda: _rel_error(
            mat.wel_stress(e, c, z), _fd_tensor(lambda x: mat.wel_density(x, c, z), e, h),
            (-2, -1)),
        "wel_dc": lambda: _rel_error(
            mat.wel_dc(e, c, z), _fd_vector(lambda x: mat.wel_density(e, x, z), c, h), -1),
        "wel_dz": lambda: _rel_error(
            mat.wel_dz(e, c, z)[:, None],
            ((mat.wel_density(e, c, z + h) - mat.wel_density(e, c, z - h)) / (2 * h))[:, None],
            -1),
        "wch_dc": lambda: _rel_error(mat.wch.dc(c), _fd_vector(mat.wch.density, c, h), -1),
        "chemical_potential": lambda: _chem_potential_fd(mat, rng, min(sample_count, 10), h),
    }
    if density_id not in checks:
        raise KeyError(f"unknown density id {density_id!r}; choose from {sorted(checks)}")
    return FDReport(density_id, checks[density_id](), sample_count)


FD_IDS = ("w1_stress", "w1_dc", "w2_stress", "w2_dc", "wel_stress", "wel_dc", "wel_dz",
          "wch_dc", "chemical_potential")


# ----------------------------------------------------------------------
# trajectory audit
# ----------------------------------------------------------------------
@dataclass
class Violation:
    step: int
    kind: str
    value: float
    node: Optional[int] = None

    def __str__(self):
        where = f" node {self.node}" if self.node is not None else ""
        return f"step {self.step}: {self.kind}{where} ({self.value:.3e})"


@dataclass
class WeakSolutionReport:
    """Per-step residuals of the discrete weak formulation."""

    steps: np.ndarray
    mass_drift: np.ndarray
    simplex: np.ndarray
    min_z: np.ndarray
    max_dz: np.ndarray
    balance: np.ndarray
    vi_all: np.ndarray
    vi_min: np.ndarray
    complementarity: np.ndarray
    ch_diffusion: np.ndarray
    ch_potential: np.ndarray
    ledger: np.ndarray
    ledger_cumulative: np.ndarray
    violations: List[Violation] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def kinds(self) -> set:
        return {v.kind for v in self.violations}

    def summary(self) -> Dict[str, float]:
        def mx(a):
            a = np.asarray(a, dtype=float)
            return float(np.nanmax(a)) if a.size else 0.0
        return {
            "max_mass_drift": mx(self.mass_drift), "max_simplex_error": mx(self.simplex),
            "min_z": float(np.min(self.min_z)) if self.min_z.size else 1.0,
            "max_dz": mx(self.max_dz), "max_balance": mx(self.balance),
            "min_vi": float(np.min(self.vi_min)) if self.vi_min.size else 0.0,
            "max_complementarity": mx(self.complementarity),
            "max_ch_residual": max(mx(self.ch_diffusion), mx(self.ch_potential)),
            "max_ledger": mx(self.ledger),
            "max_ledger_cumulative": mx(self.ledger_cumulative),
            "violations": len(self.violations),
        }


def audit_weak_solution(traj: Trajectory, cfg: Optional[SimulationConfig] = None,
                        tol: Optional[Tolerances] = None) -> WeakSolutionReport:
    """Recompute the residuals of every step of a trajectory.

    Checks mass conservation, the simplex constraint, ``0 <= z <= 1``,
    irreversibility, the balance of forces, the damage variational
    inequality for ``zeta = -1`` and for every negative nodal hat function,
    complementarity, both Cahn-Hilliard equations and the energy balance.
    Steps whose time increment differs from ``tau`` (sparse snapshots) only
    get the pointwise checks.
    """
    cfg = cfg or traj.cfg
    tol = tol or cfg.tolerances
    grid = traj.grid
    mat, eps, tau = cfg.mat, cfg.epsilon, cfg.tau
    states = traj.states
    viol: List[Violation] = []
    notes: List[str] = []
    m = grid.lumped_mass
    masses0 = m @ states[0].c
    nan = float("nan")
    cols = {k: [] for k in ("mass", "simplex", "minz", "dz", "bal", "via", "vim", "comp",
                            "chd", "chp", "led")}
    try:
        E0 = total_energy(grid, states[0], mat, eps).total
    except PhaseDamageError:
        E0 = nan
        viol.append(Violation(0, "bounds", float(np.min(states[0].z))))
    cumulative = 0.0
    cum = []
    sparse = False
    ch_cfg = cfg.ch_config()
    for k, (s0, s1) in enumerate(zip(states[:-1], states[1:]), start=1):
        # pointwise checks
        masses = m @ s1.c
        drift = float(np.max(np.abs(masses - masses0)
                             / np.maximum(np.abs(masses0), 1e-12 * grid.area)))
        cols["mass"].append(drift)
        if drift > tol.mass:
            viol.append(Violation(k, "mass", drift))
        simp = float(np.max(np.abs(s1.c.sum(axis=1) - 1.0)))
        cols["simplex"].append(simp)
        if simp > 1e-10:
            viol.append(Violation(k, "simplex", simp, int(np.argmax(np.abs(s1.c.sum(1) - 1)))))
        cols["minz"].append(float(np.min(s1.z)))
        if np.min(s1.z) < -tol.z_bound or np.max(s1.z) > 1.0 + tol.z_bound:
            bad = int(np.argmin(s1.z)) if np.min(s1.z) < -tol.z_bound else int(np.argmax(s1.z))
            viol.append(Violation(k, "bounds", float(s1.z[bad]), bad))
        dz = s1.z - s0.z
        cols["dz"].append(float(np.max(dz)))
        for node in np.flatnonzero(dz > tol.irreversibility):
            viol.append(Violation(k, "irreversibility", float(dz[node]), int(node)))

        if not np.isclose(s1.t - s0.t, tau, rtol=1e-9, atol=1e-14):
            sparse = True
            for key in ("bal", "via", "vim", "comp", "chd", "chp", "led"):
                cols[key].append(nan)
            cum.append(nan)
            continue

        # balance of forces
        f1 = cfg.force.values(s1.t)
        bal = balance_residual(grid, s1.u, s0.c, s0.z, f1, eps, mat)
        bal_tol = cfg.elastic.newton_tol * (1.0 + grid.dual_norm(
            grid.assemble_load(load_values(grid, f1)), grid.free_nodes))
        cols["bal"].append(bal)
        if bal > 1.01 * bal_tol:
            viol.append(Violation(k, "balance", bal))
        # damage variational inequality and complementarity
        c_dmg, z_ch = _stage_fields(cfg, s0, s1)
        prob = DamageProblem(grid, s0.z, s1.u, c_dmg, tau, mat)
        g = prob.gradient(s1.z)
        vi_nodes = -g
        cols["via"].append(float(np.sum(vi_nodes)))
        cols["vim"].append(float(np.min(vi_nodes)))
        if np.sum(vi_nodes) < -tol.vi:
            viol.append(Violation(k, "vi", float(np.sum(vi_nodes))))
        for node in np.flatnonzero(vi_nodes < -tol.vi):
            viol.append(Violation(k, "vi", float(vi_nodes[node]), int(node)))
        lo_hi = np.clip(s1.z, 0.0, np.maximum(s0.z, 0.0))
        comp = float(np.max(np.abs(prob.kkt_residual(lo_hi, prob.gradient(lo_hi)))))
        cols["comp"].append(comp)
        if comp > tol.complementarity:
            viol.append(Violation(k, "complementarity", comp))
        # Cahn-Hilliard equations
        rd, rp = scheme_residual(grid, s0.c, s1.c, s1.w, s1.u, z_ch, mat, ch_cfg)
        cols["chd"].append(rd)
        cols["chp"].append(rp)
        if max(rd, rp) > tol.ch_residual:
            viol.append(Violation(k, "ch", max(rd, rp)))
        # energy balance
        try:
            rho = step_ledger(grid, cfg, s0, s1).residual
        except PhaseDamageError:
            rho = nan
        cols["led"].append(rho)
        cumulative += rho
        cum.append(cumulative)
        if not np.isfinite(rho):
            viol.append(Violation(k, "energy", rho))
        elif rho > ledger_tolerance(cfg, E0):
            viol.append(Violation(k, "energy", rho))
        elif not cfg.is_static and cumulative > ledger_tolerance(cfg, E0, k):
            viol.append(Violation(k, "energy", cumulative))
    if sparse:
        notes.append("snapshots are not consecutive steps; step residuals skipped there")
    arr = {k: np.asarray(v, dtype=float) for k, v in cols.items()}
    return WeakSolutionReport(
        np.arange(1, len(states)), arr["mass"], arr["simplex"], arr["minz"], arr["dz"],
        arr["bal"], arr["via"], arr["vim"], arr["comp"], arr["chd"], arr["chp"], arr["led"],
        np.asarray(cum, dtype=float), viol, notes)


# ----------------------------------------------------------------------
# fault injection
# ----------------------------------------------------------------------
FAULT_KINDS = ("irreversibility", "mass", "energy")


def inject_fault(traj: Trajectory, kind: str, step: Optional[int] = None,
                 node: Optional[int] = None, size: Optional[float] = None) -> Trajectory:
    """Copy of ``traj`` with one deliberate defect, for testing the audit.

    ``irreversibility``
        raise ``z`` at one node of state ``step`` (default: the node that
        lost most damage variable in that step) back above its previous value;
    ``mass``
        shift ``size`` (default ``1e-6``) from component 2 to component 1
        everywhere from state ``step`` on;
    ``energy``
        add a smooth interior bump to ``u`` in state ``step`` raising the
        energy by roughly ``size * (1 + |E0|)`` (default ``size = 1e-2``).

    ``step`` defaults to the middle of the trajectory.
    """
    if kind not in FAULT_KINDS:
        raise ValueError(f"fault kind must be one of {FAULT_KINDS}")
    n = len(traj.states)
    if n < 2:
        raise ValueError("need at least two states")
    k = max(1, n // 2) if step is None else int(step)
    if not 1 <= k < n:
        raise ValueError(f"step must lie in [1, {n - 1}]")
    states = [s.copy() for s in traj.states]
    grid = traj.grid
    if kind == "irreversibility":
        z0, z1 = states[k - 1].z, states[k].z
        i = int(np.argmin(z1 - z0)) if node is None else int(node)
        bump = 0.05 if size is None else size
        z1[i] = min(1.0, z0[i] + bump)
        if z1[i] <= z0[i]:
            raise ValueError(f"node {i} is undamaged; cannot raise z above 1")
    elif kind == "mass":
        d = 1e-6 if size is None else size
        for s in states[k:]:
            s.c[:, 0] += d
            s.c[:, 1] -= d
    else:
        cfg = traj.cfg
        E0 = total_energy(grid, states[0], cfg.mat, cfg.epsilon).total
        target = (1e-2 if size is None else size) * (1.0 + abs(E0))
        x = grid.nodes - grid.origin
        L = np.array([grid.nx * grid.hx, grid.ny * grid.hy])
        shape = np.prod(np.sin(np.pi * x / L), axis=1)
        shape[grid.dirichlet_nodes] = 0.0
        s = states[k]
        base = total_energy(grid, s, cfg.mat, cfg.epsilon).total
        amp = 1e-3
        while True:  # grow the bump until the energy rises by the target amount
            trial = s.copy()
            trial.u[:, 0] += amp * shape
            gain = total_energy(grid, trial, cfg.mat, cfg.epsilon).total - base
            if gain >= target or amp > 1e3:
                break
            amp *= 2.0
        states[k] = trial
    return Trajectory(traj.cfg, grid, states, list(traj.records))
