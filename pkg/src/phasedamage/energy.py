"""Energy densities, their derivatives, and the discrete free energy.

Strains are full ``(..., 2, 2)`` arrays (symmetric in practice) and
concentrations are ``(..., N)`` arrays; every density broadcasts over the
leading axes.

The elastic energy interpolates a stiff quadratic law ``W1`` (undamaged) and
a soft ``p``-growth law ``W2`` (damaged)::

    W_el(e, c, z) = Phi(z) * W1(e, c) + (1 - Phi(z)) * W2(e, c)

On the grid the degradation ``Phi`` is evaluated at nodes and interpolated
bilinearly to quadrature points.  With this choice the derivative of the
discrete energy with respect to the nodal damage ``z_i`` is
``Phi'(z_i) * int (W1 - W2) phi_i``, which vanishes at completely damaged
nodes exactly as ``Phi'(0) = 0`` does in the continuum.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .exceptions import ConstraintViolationError, IrreversibilityError
from .mesh import Grid2D, State

_I2 = np.eye(2)
# symmetrized fourth-order identity and I (x) I on 2x2 tensors
_ISYM = 0.5 * (np.einsum("ik,jl->ijkl", _I2, _I2) + np.einsum("il,jk->ijkl", _I2, _I2))
_IXI = np.einsum("ij,kl->ijkl", _I2, _I2)


def _ddot(a, b):
    return np.sum(a * b, axis=(-1, -2))


def _trace(e):
    return e[..., 0, 0] + e[..., 1, 1]


def simplex_vertices(n: int) -> np.ndarray:
    return np.eye(n)


# ----------------------------------------------------------------------
# damage interpolation
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class DamageInterpolation:
    """``Phi(z)``: ``quadratic`` (z^2, default) or ``smoothstep`` (3z^2 - 2z^3).

    Both satisfy ``Phi(0) = Phi'(0) = 0`` and ``Phi(1) = 1``.  Only the
    quadratic form makes the incremental damage problem convex.
    """

    kind: str = "quadratic"

    def __post_init__(self):
        if self.kind not in ("quadratic", "smoothstep"):
            raise ValueError(f"unknown damage interpolation {self.kind!r}")

    def phi(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "quadratic":
            return z * z
        return z * z * (3.0 - 2.0 * z)

    def dphi(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "quadratic":
            return 2.0 * z
        return 6.0 * z * (1.0 - z)

    def d2phi(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "quadratic":
            return np.full_like(z, 2.0)
        return 6.0 - 12.0 * z


# ----------------------------------------------------------------------
# isotropic quadratic form with concentration-dependent moduli
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class _IsotropicQuadratic:
    """``q(e, c) = mu(c)|d|^2 + lam(c)/2 tr(d)^2`` with ``d = e - sum_k c_k E_k``.

    ``mu(c) = mu0 + mu1 (c_1 - c_2)`` and likewise for ``lam``; this equals
    ``1/2 d : C(c) d`` for the isotropic stiffness ``C(c)``.
    """

    mu0: float = 1.0
    mu1: float = 0.0
    lam0: float = 1.0
    lam1: float = 0.0
    eigenstrains: np.ndarray = field(default_factory=lambda: np.zeros((2, 2, 2)))

    def __post_init__(self):
        E = np.asarray(self.eigenstrains, dtype=float)
        if E.ndim != 3 or E.shape[1:] != (2, 2):
            raise ValueError("eigenstrains must have shape (N, 2, 2)")
        if not np.allclose(E, np.swapaxes(E, 1, 2)):
            raise ValueError("eigenstrains must be symmetric")
        object.__setattr__(self, "eigenstrains", E)

    @property
    def n_components(self) -> int:
        return self.eigenstrains.shape[0]

    def _coef_grad(self, coef):
        g = np.zeros(self.n_components)
        g[0], g[1] = coef, -coef
        return g

    def mu(self, c):
        c = np.asarray(c, dtype=float)
        return self.mu0 + self.mu1 * (c[..., 0] - c[..., 1])

    def lam(self, c):
        c = np.asarray(c, dtype=float)
        return self.lam0 + self.lam1 * (c[..., 0] - c[..., 1])

    def eigenstrain(self, c):
        c = np.asarray(c, dtype=float)
        E = self.eigenstrains
        return (c @ E.reshape(E.shape[0], 4)).reshape(c.shape[:-1] + (2, 2))

    def _d(self, e, c):
        return np.asarray(e, dtype=float) - self.eigenstrain(c)

    def q(self, e, c):
        d = self._d(e, c)
        return self.mu(c) * _ddot(d, d) + 0.5 * self.lam(c) * _trace(d) ** 2

    def q_e(self, e, c):
        d = self._d(e, c)
        mu, lam = self.mu(c), self.lam(c)
        return 2.0 * mu[..., None, None] * d + (lam * _trace(d))[..., None, None] * _I2

    def q_c(self, e, c):
        d = self._d(e, c)
        S = self.q_e(e, c)
        gmu, glam = self._coef_grad(self.mu1), self._coef_grad(self.lam1)
        dd = _ddot(d, d)[..., None]
        tr2 = (_trace(d) ** 2)[..., None]
        E = self.eigenstrains
        SE = S.reshape(S.shape[:-2] + (4,)) @ E.reshape(E.shape[0], 4).T
        return gmu * dd + 0.5 * glam * tr2 - SE

    def q_ee(self, c):
        """Tangent ``d q_e / d e`` restricted to symmetric increments, ``(..., 2,2,2,2)``."""
        mu, lam = self.mu(c), self.lam(c)
        return (2.0 * mu[..., None, None, None, None] * _ISYM
                + lam[..., None, None, None, None] * _IXI)

    def q_cc(self, e, c):
        d = self._d(e, c)
        E = self.eigenstrains
        mu, lam = self.mu(c), self.lam(c)
        gmu, glam = self._coef_grad(self.mu1), self._coef_grad(self.lam1)
        dE = np.einsum("...ij,kij->...k", d, E)
        trd = _trace(d)[..., None]
        trE = _trace(E)
        EE = np.einsum("kij,lij->kl", E, E)
        out = (-2.0 * gmu[:, None] * dE[..., None, :] - 2.0 * gmu[None, :] * dE[..., :, None]
               + 2.0 * mu[..., None, None] * EE
               - (glam[:, None] * trE[None, :] + glam[None, :] * trE[:, None]) * trd[..., None]
               + lam[..., None, None] * np.outer(trE, trE))
        return out


@dataclass(frozen=True)
class ElasticLawW1(_IsotropicQuadratic):
    """Undamaged law ``W1(e, c) = 1/2 (e - e*(c)) : C(c) (e - e*(c))``.

    ``C(c)`` is isotropic with Lame moduli ``mu(c)``, ``lam(c)`` affine in
    ``c_1 - c_2``; ``e*(c) = sum_k c_k E_k`` is a Vegard-type eigenstrain.
    """

    def check(self, mu_min: float = 1e-12, kappa_min: float = 1e-12) -> None:
        V = simplex_vertices(self.n_components)
        if np.any(self.mu(V) < mu_min):
            raise ValueError("W1: mu(c) must be positive on the simplex")
        if np.any(2 * self.mu(V) + 2 * self.lam(V) < kappa_min):
            raise ValueError("W1: 2 mu(c) + 2 lam(c) must be positive on the simplex")

    def density(self, e, c):
        return self.q(e, c)

    def stress(self, e, c):
        return self.q_e(e, c)

    def dc(self, e, c):
        return self.q_c(e, c)

    def tangent(self, e, c):
        return self.q_ee(c)

    def dcc(self, e, c):
        return self.q_cc(e, c)


@dataclass(frozen=True)
class ElasticLawW2(_IsotropicQuadratic):
    """Damaged law ``W2(e, c) = s2 * (q(e, c) + q0)^(p/2) - offset``.

    ``q`` is an isotropic quadratic form of ``e - e_hat(c)`` (the "hat"
    moduli and eigenstrain).  The small ridge ``q0`` keeps the second
    derivative bounded at ``e = e_hat``.
    """

    p: float = 1.5
    scale: float = 0.5
    ridge: float = 1e-8
    offset: float = 0.0

    def check(self) -> None:
        if not 1.0 < self.p < 2.0:
            raise ValueError("W2: exponent p must satisfy 1 < p < 2")
        if not 0.0 < self.scale:
            raise ValueError("W2: scale must be positive")
        if self.ridge < 0 or self.offset < 0:
            raise ValueError("W2: ridge and offset must be nonnegative")

    @property
    def a(self) -> float:
        return 0.5 * self.p

    def density(self, e, c):
        return self.scale * (self.q(e, c) + self.ridge) ** self.a - self.offset

    def _g(self, e, c):
        return self.q(e, c) + self.ridge

    def stress(self, e, c):
        g = self._g(e, c)
        return (self.scale * self.a * g ** (self.a - 1.0))[..., None, None] * self.q_e(e, c)

    def dc(self, e, c):
        g = self._g(e, c)
        return (self.scale * self.a * g ** (self.a - 1.0))[..., None] * self.q_c(e, c)

    def tangent(self, e, c):
        g = self._g(e, c)
        S = self.q_e(e, c)
        f1 = self.scale * self.a * g ** (self.a - 1.0)
        f2 = self.scale * self.a * (self.a - 1.0) * g ** (self.a - 2.0)
        return (f1[..., None, None, None, None] * self.q_ee(c)
                + f2[..., None, None, None, None] * np.einsum("...ij,...kl->...ijkl", S, S))

    def dcc(self, e, c):
        g = self._g(e, c)
        qc = self.q_c(e, c)
        f1 = self.scale * self.a * g ** (self.a - 1.0)
        f2 = self.scale * self.a * (self.a - 1.0) * g ** (self.a - 2.0)
        return (f1[..., None, None] * self.q_cc(e, c)
                + f2[..., None, None] * np.einsum("...k,...l->...kl", qc, qc))


def minimal_w2_offset(p: float, scale: float, ridge: float) -> float:
    """Smallest offset giving ``W2 <= W1`` pointwise when ``W2`` reuses ``W1``'s form.

    With identical quadratic forms, ``W1 = q`` and
    ``W2 = s (q + q0)^(p/2) - C``.  The map ``q -> s (q + q0)^(p/2) - q`` is
    concave with maximum ``(2/p - 1) g* + q0`` at ``g* = (s p / 2)^(2/(2-p))``
    (provided ``g* >= q0``); any offset at least that large enforces the
    inequality for every strain.
    """
    a = 0.5 * p
    gstar = (scale * a) ** (1.0 / (1.0 - a))
    if gstar >= ridge:
        return (1.0 / a - 1.0) * gstar + ridge
    return scale * ridge ** a  # maximum attained at q = 0


def calibrated_w2(w1: ElasticLawW1, p: float = 1.5, scale: float = 0.5,
                  ridge: float = 1e-8) -> ElasticLawW2:
    """Damaged law sharing ``w1``'s moduli and eigenstrain, offset chosen so ``W2 <= W1``."""
    return ElasticLawW2(mu0=w1.mu0, mu1=w1.mu1, lam0=w1.lam0, lam1=w1.lam1,
                        eigenstrains=w1.eigenstrains, p=p, scale=scale, ridge=ridge,
                        offset=minimal_w2_offset(p, scale, ridge))


# ----------------------------------------------------------------------
# chemical energy
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ChemicalEnergy:
    """Double-well ``W_ch(c) = theta * (c_1 c_2)^2``.

    For two components the convex-concave split used by the time stepper is
    written in ``psi = c_1 - c_2``: on the simplex ``(c_1 c_2)^2 =
    (1 - psi^2)^2 / 16``, so ``W_ch = theta (psi^4 + 1)/16 - theta psi^2/8``.
    Both parts agree with ``W_ch`` up to the normal direction, which the
    tangent projection removes.
    """

    theta: float = 1.0

    def density(self, c):
        c = np.asarray(c, dtype=float)
        return self.theta * (c[..., 0] * c[..., 1]) ** 2

    def dc(self, c):
        c = np.asarray(c, dtype=float)
        out = np.zeros_like(c)
        c1, c2 = c[..., 0], c[..., 1]
        out[..., 0] = 2.0 * self.theta * c1 * c2 * c2
        out[..., 1] = 2.0 * self.theta * c1 * c1 * c2
        return out

    def dcc(self, c):
        c = np.asarray(c, dtype=float)
        n = c.shape[-1]
        out = np.zeros(c.shape + (n,))
        c1, c2 = c[..., 0], c[..., 1]
        out[..., 0, 0] = 2.0 * self.theta * c2 * c2
        out[..., 1, 1] = 2.0 * self.theta * c1 * c1
        out[..., 0, 1] = out[..., 1, 0] = 4.0 * self.theta * c1 * c2
        return out

    def _psi_dir(self, n):
        v = np.zeros(n)
        v[0], v[1] = 1.0, -1.0
        return v

    def convex_dc(self, c):
        c = np.asarray(c, dtype=float)
        psi = c[..., 0] - c[..., 1]
        return (0.25 * self.theta * psi ** 3)[..., None] * self._psi_dir(c.shape[-1])

    def convex_dcc(self, c):
        c = np.asarray(c, dtype=float)
        psi = c[..., 0] - c[..., 1]
        v = self._psi_dir(c.shape[-1])
        return (0.75 * self.theta * psi ** 2)[..., None, None] * np.outer(v, v)

    def concave_dc(self, c):
        c = np.asarray(c, dtype=float)
        psi = c[..., 0] - c[..., 1]
        return (0.25 * self.theta * psi)[..., None] * self._psi_dir(c.shape[-1])


# ----------------------------------------------------------------------
# material bundle
# ----------------------------------------------------------------------
def default_eigenstrains(misfit: float = 0.0, n: int = 2) -> np.ndarray:
    E = np.zeros((n, 2, 2))
    E[0] = misfit * _I2
    E[1] = -misfit * _I2
    return E


@dataclass(frozen=True)
class MaterialParams:
    """All constitutive data of the coupled model.

    ``mobility`` and ``gamma_c`` are the scalar factors of
    ``M = mobility * (I - 11^T / N)`` and ``Gamma = gamma_c * Id``.
    ``gamma`` and ``delta`` weight the two gradient energies.  ``s`` is the
    growth exponent of ``W2`` in ``c``; it only enters the assumption audit.
    """

    w1: ElasticLawW1 = field(default_factory=lambda: ElasticLawW1(
        eigenstrains=default_eigenstrains(0.01)))
    w2: Optional[ElasticLawW2] = None
    wch: ChemicalEnergy = field(default_factory=ChemicalEnergy)
    damage_interp: DamageInterpolation = field(default_factory=DamageInterpolation)
    mobility: float = 1.0
    gamma_c: float = 1e-3
    alpha: float = 0.05
    beta: float = 1.0
    epsilon: float = 1e-4
    gamma: float = 1.0
    delta: float = 1.0
    s: float = 1.0

    def __post_init__(self):
        if self.w2 is None:
            object.__setattr__(self, "w2", calibrated_w2(self.w1))

    @property
    def n_components(self) -> int:
        return self.w1.n_components

    def with_(self, **changes) -> "MaterialParams":
        return replace(self, **changes)

    def validate(self) -> None:
        self.w1.check()
        self.w2.check()
        if self.w2.n_components != self.n_components:
            raise ValueError("W1 and W2 must have the same number of components")
        if self.n_components < 2:
            raise ValueError("at least two components are required")
        if not self.mobility > 0:
            raise ValueError("mobility must be positive")
        if not self.gamma_c > 0:
            raise ValueError("gamma_c must be positive")
        if not (self.gamma > 0 and self.delta > 0):
            raise ValueError("gamma and delta must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if not self.wch.theta > 0:
            raise ValueError("theta must be positive")

    @property
    def mobility_matrix(self) -> np.ndarray:
        n = self.n_components
        return self.mobility * (np.eye(n) - np.ones((n, n)) / n)

    @property
    def projector(self) -> np.ndarray:
        n = self.n_components
        return np.eye(n) - np.ones((n, n)) / n

    # pointwise elastic densities ------------------------------------------
    def wel_density(self, e, c, z):
        ph = self.damage_interp.phi(z)
        return ph * self.w1.density(e, c) + (1.0 - ph) * self.w2.density(e, c)

    def wel_stress(self, e, c, z):
        ph = np.asarray(self.damage_interp.phi(z))[..., None, None]
        return ph * self.w1.stress(e, c) + (1.0 - ph) * self.w2.stress(e, c)

    def wel_dc(self, e, c, z):
        ph = np.asarray(self.damage_interp.phi(z))[..., None]
        return ph * self.w1.dc(e, c) + (1.0 - ph) * self.w2.dc(e, c)

    def wel_dz(self, e, c, z):
        return self.damage_interp.dphi(z) * (self.w1.density(e, c) - self.w2.density(e, c))


# ----------------------------------------------------------------------
# integrated energies
# ----------------------------------------------------------------------
@dataclass
class EnergyBreakdown:
    """Terms of the regularized free energy plus per-step bookkeeping."""

    gradient_c: float = 0.0
    gradient_z: float = 0.0
    chemical: float = 0.0
    elastic: float = 0.0
    quartic_reg: float = 0.0
    total: float = 0.0
    dissipation_increment: float = 0.0
    boundary_work: float = 0.0
    force_work: float = 0.0

    FIELDS = ("gradient_c", "gradient_z", "chemical", "elastic", "quartic_reg", "total",
              "dissipation_increment", "boundary_work", "force_work")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.FIELDS}


Z_TOL = 1e-10


def check_damage_bounds(z: np.ndarray, tol: float = Z_TOL) -> None:
    zmin, zmax = float(np.min(z)), float(np.max(z))
    if zmin < -tol or zmax > 1.0 + tol:
        raise ConstraintViolationError(
            f"damage field outside [0, 1]: min={zmin:.3e}, max={zmax:.3e}")


def elastic_fields(grid: Grid2D, u, c, z, mat: MaterialParams):
    """Strain, concentration, nodal degradation, ``W1`` and ``W2`` at quadrature points."""
    e = grid.strain(u)
    cq = grid.interpolate(c)
    phq = grid.interpolate(mat.damage_interp.phi(z))
    return e, cq, phq, mat.w1.density(e, cq), mat.w2.density(e, cq)


def total_energy(grid: Grid2D, state: State, mat: MaterialParams,
                 epsilon: Optional[float] = None) -> EnergyBreakdown:
    """Regularized free energy ``E_eps(u, c, z)`` by 2x2 Gauss quadrature.

    Raises
    ------
    ConstraintViolationError
        If ``z`` leaves ``[0, 1]`` by more than ``1e-10`` (the indicator term
        of the energy is then infinite).
    """
    eps = mat.epsilon if epsilon is None else epsilon
    check_damage_bounds(state.z)
    gc = grid.gradient(state.c)
    gz = grid.gradient(state.z)
    e, cq, phq, W1, W2 = elastic_fields(grid, state.u, state.c, state.z, mat)
    grad_c = 0.5 * mat.gamma * mat.gamma_c * grid.integrate(np.sum(gc ** 2, axis=(-1, -2)))
    grad_z = 0.5 * mat.delta * grid.integrate(np.sum(gz ** 2, axis=-1))
    chem = grid.integrate(mat.wch.density(cq))
    elastic = grid.integrate(W2 + phq * (W1 - W2))
    quartic = 0.0
    if eps > 0:
        H = grid.gradient(state.u)
        quartic = 0.25 * eps * grid.integrate(np.sum(H ** 2, axis=(-1, -2)) ** 2)
    total = grad_c + grad_z + chem + elastic + quartic
    return EnergyBreakdown(grad_c, grad_z, chem, elastic, quartic, total)


def incremental_dissipation(grid: Grid2D, z_new, z_old, tau: float, alpha: float,
                            beta: float, tol: float = 1e-12) -> float:
    """Dissipation over one step, ``int -alpha dz + beta/(2 tau) dz^2`` (lumped mass).

    Raises
    ------
    IrreversibilityError
        If ``z_new > z_old + tol`` at some node.
    """
    dz = np.asarray(z_new) - np.asarray(z_old)
    if np.any(dz > tol):
        i = int(np.argmax(dz))
        raise IrreversibilityError(f"damage healed at node {i}: dz={dz[i]:.3e}")
    m = grid.lumped_mass
    return float(np.sum(m * (-alpha * dz + 0.5 * beta / tau * dz ** 2)))


def rate_dissipation(grid: Grid2D, z_new, z_old, tau: float, alpha: float,
                     beta: float) -> float:
    """Step counterpart of ``int <dR(z'), z'> dt``: ``int -alpha dz + beta/tau dz^2``."""
    dz = np.asarray(z_new) - np.asarray(z_old)
    m = grid.lumped_mass
    return float(np.sum(m * (-alpha * dz + beta / tau * dz ** 2)))
