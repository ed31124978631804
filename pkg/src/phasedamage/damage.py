"""Implicit damage step as a box-constrained minimization.

One step of the rate-dependent damage flow rule is the obstacle problem::

    z_new = argmin { F(z) : 0 <= z <= z_old nodally }
    F(z)  = delta/2 int |grad z|^2 + int W_el(e(u), c, z)
            - alpha int z + beta/(2 tau) int (z - z_old)^2

The upper bound encodes irreversibility, the lower bound the indicator of
``[0, inf)``.  ``W_el`` uses the nodal degradation ``Phi(z_i)`` and the two
dissipation terms use the lumped mass, so the nodal gradient of ``F`` is::

    g_i = (K z)_i + Phi'(z_i) D_i - alpha m_i + beta m_i (z_i - z_old_i) / tau

with ``D_i = int (W1 - W2) phi_i >= 0``.  For ``Phi(z) = z^2`` the Hessian is
an M-matrix and the primal-dual active set iteration below terminates after
finitely many steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ._linalg import solve as linsolve
from .energy import MaterialParams, check_damage_bounds, elastic_fields
from .exceptions import NonConvergenceError
from .mesh import Grid2D


@dataclass(frozen=True)
class DamageStepConfig:
    tau: float
    active_set_tol: float = 1e-12
    max_iter: int = 100

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.active_set_tol > 0 or self.max_iter < 1:
            raise ValueError("invalid active-set tolerances")


@dataclass
class DamageStepInfo:
    iterations: int
    kkt_residual: float
    n_lower: int
    n_upper: int


def driving_force(grid: Grid2D, u, c, mat: MaterialParams) -> np.ndarray:
    """Nodal elastic driving force ``D_i = int (W1 - W2) phi_i``."""
    e, cq, _, W1, W2 = elastic_fields(grid, u, c, np.ones(grid.node_count), mat)
    return grid.assemble_load(W1 - W2)


class DamageProblem:
    """The incremental functional ``F`` for fixed ``(u, c, z_old)``."""

    def __init__(self, grid: Grid2D, z_old, u, c, tau: float, mat: MaterialParams):
        self.grid = grid
        self.mat = mat
        self.tau = float(tau)
        self.z_old = np.asarray(z_old, dtype=float)
        self.D = driving_force(grid, u, c, mat)
        self.K = mat.delta * grid.stiffness_matrix
        self.m = grid.lumped_mass
        e, cq, _, _, W2 = elastic_fields(grid, u, c, np.ones(grid.node_count), mat)
        self._w2_integral = grid.integrate(W2)

    def value(self, z) -> float:
        mat, m = self.mat, self.m
        dz = z - self.z_old
        return float(0.5 * z @ (self.K @ z) + self._w2_integral
                     + np.sum(mat.damage_interp.phi(z) * self.D)
                     - mat.alpha * np.sum(m * z)
                     + 0.5 * mat.beta / self.tau * np.sum(m * dz * dz))

    def gradient(self, z) -> np.ndarray:
        mat, m = self.mat, self.m
        return (self.K @ z + mat.damage_interp.dphi(z) * self.D - mat.alpha * m
                + mat.beta / self.tau * m * (z - self.z_old))

    def hessian(self, z) -> sp.csr_matrix:
        mat = self.mat
        diag = mat.damage_interp.d2phi(z) * self.D + mat.beta / self.tau * self.m
        return (self.K + sp.diags(diag)).tocsr()

    def kkt_residual(self, z, g=None) -> np.ndarray:
        """Nodal ``z - clip(z - g/h, 0, z_old)`` with ``h`` the Hessian diagonal."""
        g = self.gradient(z) if g is None else g
        h = self.hessian(z).diagonal()
        return z - np.clip(z - g / h, 0.0, self.z_old)


def damage_step(grid: Grid2D, z_old, u, c, mat: MaterialParams, cfg: DamageStepConfig,
                return_info: bool = False):
    """Solve the incremental damage problem by a primal-dual active set iteration.

    Returns
    -------
    z_new : ndarray
        Satisfies ``0 <= z_new <= z_old`` exactly.

    Raises
    ------
    NonConvergenceError
        If the active sets cycle or the iteration budget runs out.
    """
    z_old = np.asarray(z_old, dtype=float)
    check_damage_bounds(z_old)
    prob = DamageProblem(grid, z_old, u, c, cfg.tau, mat)
    lo, hi = np.zeros_like(z_old), z_old
    pinned = hi <= lo
    z = z_old.copy()
    seen = {}
    prev_sig = None
    for it in range(cfg.max_iter + 1):
        g = prob.gradient(z)
        H = prob.hessian(z)
        h = H.diagonal()
        res = z - np.clip(z - g / h, lo, hi)
        kkt = float(np.max(np.abs(res))) if res.size else 0.0
        y = z - g / h
        A_lo = (y <= lo) & ~pinned
        A_hi = (y >= hi) | pinned
        if kkt <= cfg.active_set_tol:
            break
        if it == cfg.max_iter:
            raise NonConvergenceError(
                f"damage active set did not converge in {it} iterations (kkt {kkt:.3e})",
                residual=kkt, iterations=it)
        sig = np.packbits(A_lo).tobytes() + np.packbits(A_hi).tobytes()
        if sig in seen and sig != prev_sig:
            raise NonConvergenceError(
                f"damage active set cycles (iteration {it}, kkt {kkt:.3e})",
                residual=kkt, iterations=it)
        seen[sig] = it
        prev_sig = sig
        z_next = z.copy()
        z_next[A_lo] = lo[A_lo]
        z_next[A_hi] = hi[A_hi]
        inactive = np.flatnonzero(~(A_lo | A_hi))
        if inactive.size:
            active = np.flatnonzero(A_lo | A_hi)
            dA = z_next[active] - z[active]
            rhs = -g[inactive] - H[inactive][:, active] @ dA
            z_next[inactive] = z[inactive] + linsolve(H[inactive][:, inactive], rhs,
                                                      symmetric=True)
        z = z_next
    z = np.clip(z, lo, hi)
    if return_info:
        return z, DamageStepInfo(it, kkt, int(np.sum(z <= 0.0)), int(np.sum(z >= hi)))
    return z


def vi_residual(grid: Grid2D, z_new, z_old, u, c, tau: float, mat: MaterialParams,
                zeta) -> float:
    """``int grad z . grad zeta + (W_el,z - alpha + beta (z_new - z_old)/tau) zeta``.

    ``zeta`` must be nonpositive.  Nonnegative values for every admissible
    ``zeta`` are the discrete damage variational inequality.
    """
    zeta = np.broadcast_to(np.asarray(zeta, dtype=float), np.shape(z_new))
    if np.any(zeta > 0):
        raise ValueError("test function zeta must be nonpositive")
    prob = DamageProblem(grid, z_old, u, c, tau, mat)
    return float(zeta @ prob.gradient(np.asarray(z_new, dtype=float)))


def vi_nodal_values(grid: Grid2D, z_new, z_old, u, c, tau: float,
                    mat: MaterialParams) -> np.ndarray:
    """``vi_residual`` for every ``zeta = -phi_i`` at once (equals ``-g_i``)."""
    prob = DamageProblem(grid, z_old, u, c, tau, mat)
    return -prob.gradient(np.asarray(z_new, dtype=float))


def complementarity_residual(grid: Grid2D, z_new, z_old, u, c, tau: float,
                             mat: MaterialParams) -> float:
    """Max-norm of the projected KKT residual of the obstacle problem."""
    prob = DamageProblem(grid, z_old, u, c, tau, mat)
    return float(np.max(np.abs(prob.kkt_residual(np.asarray(z_new, dtype=float)))))
