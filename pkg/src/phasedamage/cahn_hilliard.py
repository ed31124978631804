"""One implicit Euler step of the multicomponent Cahn-Hilliard system.

The mixed form with consistent mass matrices reads, for every nodal test
function and component::

    int (c_new - c_old)/tau . zeta + int M grad w_new : grad zeta = 0
    int w_new . zeta = int P Gamma grad c_new : grad zeta + int P F(c_new) . zeta

with ``F = W_ch,c + W_el,c``.  Unknowns are written in an orthonormal basis
``V`` of the tangent space of the simplex: ``c_new = c_old + V a`` and
``w_new = V omega``.  Component sums and component masses are then preserved
by construction, and the solve involves ``N - 1`` instead of ``N`` fields.

For two components the chemical density is split into a convex part taken
implicitly and a concave part taken explicitly, which makes the step
unconditionally energy stable.  The elastic contribution is convex in ``c``
for concentration-independent moduli and is by default taken implicitly as
well; ``elastic_coupling="explicit"`` freezes it at ``c_old``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ._linalg import solve as linsolve
from .energy import MaterialParams
from .exceptions import MassDriftError, NonConvergenceError
from .mesh import Grid2D

SPLITTINGS = ("convex", "implicit")
COUPLINGS = ("implicit", "explicit")


def tangent_basis(n: int) -> np.ndarray:
    """Orthonormal (Helmert) basis of ``{v : sum(v) = 0}``, shape ``(n, n-1)``."""
    V = np.zeros((n, n - 1))
    for j in range(1, n):
        V[:j, j - 1] = 1.0 / np.sqrt(j * (j + 1))
        V[j, j - 1] = -j / np.sqrt(j * (j + 1))
    return V


@dataclass(frozen=True)
class SimplexProjector:
    """Orthogonal projection ``P = I - 11^T/N`` onto the simplex tangent space."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("at least two components are required")

    @cached_property
    def matrix(self) -> np.ndarray:
        return np.eye(self.n) - np.full((self.n, self.n), 1.0 / self.n)

    @cached_property
    def basis(self) -> np.ndarray:
        return tangent_basis(self.n)

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        return v - v.mean(axis=-1, keepdims=True)


def project_tangent(v) -> np.ndarray:
    """``P v`` along the last axis."""
    v = np.asarray(v, dtype=float)
    return v - v.mean(axis=-1, keepdims=True)


@dataclass(frozen=True)
class CHStepConfig:
    tau: float
    newton_tol: float = 1e-10
    max_iter: int = 50
    splitting: str = "convex"
    elastic_coupling: str = "implicit"
    mass_tol: float = 1e-10

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.newton_tol > 0 or self.max_iter < 1:
            raise ValueError("invalid Newton tolerances")
        if self.splitting not in SPLITTINGS:
            raise ValueError(f"splitting must be one of {SPLITTINGS}")
        if self.elastic_coupling not in COUPLINGS:
            raise ValueError(f"elastic_coupling must be one of {COUPLINGS}")


@dataclass
class CHStepInfo:
    iterations: int
    residual: float


def _elastic_c_terms(mat: MaterialParams, e, cq, phq, hessian: bool):
    ph = phq[..., None]
    g = ph * mat.w1.dc(e, cq) + (1.0 - ph) * mat.w2.dc(e, cq)
    if not hessian:
        return g, None
    H = ph[..., None] * mat.w1.dcc(e, cq) + (1.0 - ph)[..., None] * mat.w2.dcc(e, cq)
    return g, H


class _CHOperator:
    """Quadrature-level nonlinear terms of the step for fixed ``(u, z, c_old)``."""

    def __init__(self, grid: Grid2D, c_old, u, z, mat: MaterialParams,
                 splitting: str, coupling: str):
        n = mat.n_components
        if splitting == "convex" and n != 2:
            splitting = "implicit"
        self.grid, self.mat = grid, mat
        self.splitting, self.coupling = splitting, coupling
        self.e = grid.strain(u)
        self.phq = grid.interpolate(mat.damage_interp.phi(z))
        self.cq_old = grid.interpolate(c_old)
        self.explicit = np.zeros_like(self.cq_old)
        if splitting == "convex":
            self.explicit -= mat.wch.concave_dc(self.cq_old)
        if coupling == "explicit":
            self.explicit += _elastic_c_terms(mat, self.e, self.cq_old, self.phq, False)[0]

    def terms(self, c, hessian: bool = True):
        """Derivative ``F`` at quadrature points and (optionally) its Jacobian."""
        mat = self.mat
        cq = self.grid.interpolate(c)
        if self.splitting == "convex":
            g = mat.wch.convex_dc(cq)
            H = mat.wch.convex_dcc(cq) if hessian else None
        else:
            g = mat.wch.dc(cq)
            H = mat.wch.dcc(cq) if hessian else None
        g = g + self.explicit
        if self.coupling == "implicit":
            ge, He = _elastic_c_terms(mat, self.e, cq, self.phq, hessian)
            g = g + ge
            if hessian:
                H = H + He
        return g, H


def _block(grid: Grid2D, weights: np.ndarray) -> sp.csr_matrix:
    """Block matrix of weighted masses for ``weights`` of shape ``(ne, nq, r, r)``."""
    r = weights.shape[-1]
    return sp.bmat([[grid.weighted_mass(weights[..., k, l]) for l in range(r)]
                    for k in range(r)], format="csr")


def _stack(a: np.ndarray) -> np.ndarray:
    return a.T.ravel()


def _unstack(x: np.ndarray, nn: int) -> np.ndarray:
    return x.reshape(-1, nn).T


def ch_step(grid: Grid2D, c_old, u, z, mat: MaterialParams, cfg: CHStepConfig,
            w_guess: Optional[np.ndarray] = None, return_info: bool = False):
    """Advance the concentration by one implicit step.

    Parameters
    ----------
    c_old : ndarray, shape (nn, N)
        Nodal concentrations with component sums equal to one.
    u, z : ndarray
        Displacement and damage seen by the elastic coupling term.
    w_guess : ndarray, optional
        Initial guess for the chemical potential (previous step).

    Returns
    -------
    c_new, w_new : ndarray, shape (nn, N)

    Raises
    ------
    NonConvergenceError
        Newton budget exhausted.
    MassDriftError
        Component masses changed by more than ``cfg.mass_tol`` (relative).
    """
    c_old = np.asarray(c_old, dtype=float)
    nn, n = c_old.shape
    sums = c_old.sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > 1e-10:
        raise ValueError("c_old must satisfy sum_k c_k = 1 at every node")
    V = tangent_basis(n)
    r = n - 1
    op = _CHOperator(grid, c_old, u, z, mat, cfg.splitting, cfg.elastic_coupling)
    Ms, K = grid.mass_matrix, grid.stiffness_matrix
    Ir = sp.identity(r, format="csr")
    Mred = V.T @ mat.mobility_matrix @ V
    gg = mat.gamma * mat.gamma_c
    A11 = sp.kron(Ir, Ms, format="csr") / cfg.tau
    A12 = sp.kron(sp.csr_matrix(Mred), K, format="csr")
    A22 = sp.kron(Ir, Ms, format="csr")
    KK = gg * sp.kron(Ir, K, format="csr")

    a_old = _stack(c_old @ V)
    da = np.zeros(r * nn)
    omega = np.zeros(r * nn) if w_guess is None else _stack(np.asarray(w_guess) @ V)

    def residual(da, omega, hessian):
        c = c_old + _unstack(da, nn) @ V.T
        g, H = op.terms(c, hessian)
        F = _stack(grid.assemble_load(g) @ V)
        R1 = A11 @ da + A12 @ omega
        R2 = A22 @ omega - KK @ (a_old + da) - F
        Hr = None if H is None else np.einsum("ka,...kl,lb->...ab", V, H, V)
        return R1, R2, Hr

    def norm(R1, R2):
        return max(grid.dual_norm(cfg.tau * _unstack(R1, nn)), grid.dual_norm(_unstack(R2, nn)))

    R1, R2, Hr = residual(da, omega, True)
    res = norm(R1, R2)
    it = 0
    while res > cfg.newton_tol:
        if it >= cfg.max_iter:
            raise NonConvergenceError(
                f"Cahn-Hilliard Newton did not converge in {it} iterations "
                f"(residual {res:.3e})", residual=res, iterations=it)
        # rows (R2, tau R1) give a symmetric saddle-point Jacobian
        J = sp.bmat([[-KK - _block(grid, Hr), A22], [A22, cfg.tau * A12]], format="csc")
        dx = linsolve(J, -np.concatenate([R2, cfg.tau * R1]), symmetric=True)
        da, omega = da + dx[:r * nn], omega + dx[r * nn:]
        R1, R2, Hr = residual(da, omega, True)
        res_new = norm(R1, R2)
        it += 1
        if res_new >= res and res_new < 1e3 * cfg.newton_tol:
            res = res_new
            break  # round-off floor reached
        res = res_new
    if res > 1e3 * cfg.newton_tol:
        raise NonConvergenceError(f"Cahn-Hilliard Newton stalled at residual {res:.3e}",
                                  residual=res, iterations=it)

    c_new = c_old + _unstack(da, nn) @ V.T
    w_new = _unstack(omega, nn) @ V.T
    m_old = grid.lumped_mass @ c_old
    m_new = grid.lumped_mass @ c_new
    drift = np.abs(m_new - m_old) / np.maximum(np.abs(m_old), 1e-12 * grid.area)
    if np.any(drift > cfg.mass_tol):
        raise MassDriftError(f"component mass drift {drift.max():.3e} in Cahn-Hilliard step")
    if return_info:
        return c_new, w_new, CHStepInfo(it, res)
    return c_new, w_new


def scheme_residual(grid: Grid2D, c_old, c_new, w_new, u, z, mat: MaterialParams,
                    cfg: CHStepConfig):
    """Dual norms of the two discrete equations for a given step, in full components.

    Returns ``(r_diffusion, r_potential)``; the first is scaled by ``tau`` so
    both have the units of the unknowns.
    """
    c_old, c_new, w_new = (np.asarray(a, dtype=float) for a in (c_old, c_new, w_new))
    op = _CHOperator(grid, c_old, u, z, mat, cfg.splitting, cfg.elastic_coupling)
    Ms, K = grid.mass_matrix, grid.stiffness_matrix
    P = mat.projector
    R1 = Ms @ (c_new - c_old) + cfg.tau * (K @ w_new @ mat.mobility_matrix.T)
    g, _ = op.terms(c_new, hessian=False)
    R2 = (Ms @ w_new - mat.gamma * mat.gamma_c * (K @ c_new) @ P.T
          - grid.assemble_load(g) @ P.T)
    return grid.dual_norm(R1), grid.dual_norm(R2)


def chemical_potential(grid: Grid2D, c, u, z, mat: MaterialParams) -> np.ndarray:
    """Discrete ``w = P(-div(Gamma grad c) + W_ch,c + W_el,c)`` for given fields.

    ``w`` is the mass-matrix Riesz representative of the derivative of the
    reduced energy with respect to ``c`` along tangent directions.
    """
    c = np.asarray(c, dtype=float)
    e = grid.strain(u)
    cq = grid.interpolate(c)
    phq = grid.interpolate(mat.damage_interp.phi(z))
    g = mat.wch.dc(cq) + _elastic_c_terms(mat, e, cq, phq, False)[0]
    rhs = mat.gamma * mat.gamma_c * (grid.stiffness_matrix @ c) + grid.assemble_load(g)
    w = linsolve(grid.mass_matrix, rhs, symmetric=True)
    return w @ mat.projector.T
