"""Quasi-static balance of forces.

For fixed concentration ``c`` and damage ``z`` the displacement minimizes::

    J(u) = int W_el(e(u), c, z) + eps/4 |grad u|^4 dx - int f . u dx

over fields with ``u = b`` on the Dirichlet nodes.  ``J`` is strictly convex,
so Newton's method with Armijo backtracking on ``J`` converges to the unique
minimizer and never increases the energy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from ._linalg import solve as linsolve
from .energy import MaterialParams, check_damage_bounds
from .exceptions import NonConvergenceError, SingularSystemError
from .mesh import Grid2D

ForceLike = Union[None, np.ndarray, Callable]


@dataclass(frozen=True)
class ElasticSolveConfig:
    newton_tol: float = 1e-9
    max_newton_iters: int = 50
    armijo: float = 1e-4
    backtrack: float = 0.5
    min_step: float = 2.0 ** -30

    def __post_init__(self):
        if not (self.newton_tol > 0 and self.armijo > 0 and 0 < self.backtrack < 1
                and self.min_step > 0):
            raise ValueError("elastic solver tolerances must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")


@dataclass
class ElasticSolveInfo:
    iterations: int
    residual: float
    tolerance: float
    energy_initial: float
    energy_final: float
    energy_history: list


def load_values(grid: Grid2D, f: ForceLike) -> np.ndarray:
    """Force density at quadrature points, ``(ne, nq, 2)``.

    ``f`` may be ``None`` (zero), a nodal ``(nn, 2)`` array, a constant
    2-vector, or a callable ``f(x, y) -> (fx, fy)`` evaluated at quadrature
    points.
    """
    shape = (grid.element_count, grid.rule.size, 2)
    if f is None:
        return np.zeros(shape)
    if callable(f):
        xq = grid.quadrature_points()
        fx, fy = f(xq[..., 0], xq[..., 1])
        return np.stack([np.broadcast_to(fx, shape[:2]), np.broadcast_to(fy, shape[:2])],
                        axis=-1).astype(float)
    arr = np.asarray(f, dtype=float)
    if arr.shape == (2,):
        return np.broadcast_to(arr, shape).copy()
    if arr.shape == (grid.node_count, 2):
        return grid.interpolate(arr)
    raise ValueError(f"cannot interpret force of shape {arr.shape}")


class ElasticProblem:
    """Discrete energy ``J``, its gradient and Hessian for fixed ``(c, z, f)``."""

    def __init__(self, grid: Grid2D, c, z, f: ForceLike, epsilon: float,
                 mat: MaterialParams):
        self.grid = grid
        self.mat = mat
        self.eps = float(epsilon)
        self.cq = grid.interpolate(c)
        self.phq = grid.interpolate(mat.damage_interp.phi(z))
        self.fq = load_values(grid, f)
        self.load = grid.assemble_load(self.fq)
        self._edofs = grid.vector_dofs
        self._rows = np.repeat(self._edofs, 8, axis=1).ravel()
        self._cols = np.tile(self._edofs, (1, 8)).ravel()
        nq = grid.rule.size
        B = np.zeros((nq, 2, 2, 4, 2))
        for i in range(2):
            B[:, i, :, :, i] = np.swapaxes(grid.dN, 1, 2)
        self._B = B.reshape(nq, 4, 8)
        self._Bw = (self._B * grid.qweights[:, None, None]).reshape(-1, 8).T

    # densities -----------------------------------------------------------
    def _parts(self, u):
        H = self.grid.gradient(u)
        e = 0.5 * (H + np.swapaxes(H, -1, -2))
        return H, e

    def energy_density(self, u):
        H, e = self._parts(u)
        mat, cq, ph = self.mat, self.cq, self.phq
        W = ph * mat.w1.density(e, cq) + (1 - ph) * mat.w2.density(e, cq)
        if self.eps > 0:
            W = W + 0.25 * self.eps * np.sum(H ** 2, axis=(-1, -2)) ** 2
        return W

    def energy(self, u) -> float:
        return self.grid.integrate(self.energy_density(u)) - float(np.sum(self.load * u))

    def stress(self, u):
        """First Piola-type derivative ``dW/d(grad u)`` at quadrature points."""
        H, e = self._parts(u)
        mat, cq = self.mat, self.cq
        ph = self.phq[..., None, None]
        P = ph * mat.w1.stress(e, cq) + (1 - ph) * mat.w2.stress(e, cq)
        if self.eps > 0:
            P = P + self.eps * np.sum(H ** 2, axis=(-1, -2))[..., None, None] * H
        return P

    def gradient(self, u) -> np.ndarray:
        """Nodal residual ``dJ/du``, shape ``(nn, 2)``."""
        return self.grid.assemble_flux(self.stress(u)) - self.load

    def tangent(self, u):
        H, e = self._parts(u)
        mat, cq = self.mat, self.cq
        ph = self.phq[..., None, None, None, None]
        A = ph * mat.w1.tangent(e, cq) + (1 - ph) * mat.w2.tangent(e, cq)
        if self.eps > 0:
            h2 = np.sum(H ** 2, axis=(-1, -2))[..., None, None, None, None]
            I = np.eye(2)
            A = A + self.eps * (h2 * np.einsum("ik,jl->ijkl", I, I)
                                + 2.0 * np.einsum("...ij,...kl->...ijkl", H, H))
        return A

    def hessian(self, u) -> sp.csr_matrix:
        g = self.grid
        A = self.tangent(u).reshape(g.element_count, g.rule.size, 4, 4)
        # K_e = sum_q w_q B_q^T A_eq B_q with (B_q u)_(ij) = sum_a u_(a,i) dN[q,a,j]
        T = np.matmul(A, self._B[None])
        loc = np.matmul(self._Bw, T.reshape(g.element_count, -1, 8))
        n = 2 * g.node_count
        return sp.csr_matrix((loc.ravel(), (self._rows, self._cols)), shape=(n, n))


def _dirichlet_values(grid: Grid2D, b) -> np.ndarray:
    if b is None:
        return np.zeros((grid.dirichlet_nodes.size, 2))
    arr = np.asarray(b, dtype=float)
    if arr.shape == (2,):
        return np.broadcast_to(arr, (grid.dirichlet_nodes.size, 2)).copy()
    if arr.shape == (grid.node_count, 2):
        return arr[grid.dirichlet_nodes]
    return arr


def _free_dofs(grid: Grid2D) -> np.ndarray:
    return (2 * grid.free_nodes[:, None] + np.arange(2)).ravel()


def _residual_norm(grid: Grid2D, r: np.ndarray) -> float:
    return grid.dual_norm(r, grid.free_nodes)


def solve_displacement(grid: Grid2D, c, z, f: ForceLike, b, epsilon: float,
                       mat: MaterialParams, cfg: Optional[ElasticSolveConfig] = None,
                       u0: Optional[np.ndarray] = None, return_info: bool = False):
    """Minimize the elastic energy for fixed ``(c, z)``.

    Parameters
    ----------
    c, z : ndarray
        Nodal concentration ``(nn, N)`` and damage ``(nn,)``.
    f : force (see :func:`load_values`)
    b : ndarray
        Dirichlet data: one row per Dirichlet node, a full nodal field, or a
        constant 2-vector.
    epsilon : float
        Weight of the quartic regularization.  ``0`` is only accepted when
        ``Phi(z) > 0`` everywhere.
    u0 : ndarray, optional
        Initial guess (warm start); its Dirichlet rows are overwritten.

    Returns
    -------
    u : ndarray, shape (nn, 2)
        (and an :class:`ElasticSolveInfo` when ``return_info`` is set)
    """
    cfg = cfg or ElasticSolveConfig()
    check_damage_bounds(z)
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if epsilon == 0 and float(np.min(mat.damage_interp.phi(z))) <= 0:
        raise ValueError("epsilon = 0 requires Phi(z) > 0 on the whole grid")

    prob = ElasticProblem(grid, c, z, f, epsilon, mat)
    bD = _dirichlet_values(grid, b)
    u = np.zeros((grid.node_count, 2)) if u0 is None else np.array(u0, dtype=float)
    u = grid.apply_dirichlet(u, bD)
    free = _free_dofs(grid)
    tol = cfg.newton_tol * (1.0 + _residual_norm(grid, prob.load))

    J = prob.energy(u)
    history = [J]
    r = prob.gradient(u)
    res = _residual_norm(grid, r)
    it = 0
    while res > tol:
        if it >= cfg.max_newton_iters:
            raise NonConvergenceError(
                f"elasticity Newton did not converge in {it} iterations "
                f"(residual {res:.3e} > {tol:.3e})", residual=res, iterations=it)
        K = prob.hessian(u)[free][:, free]
        rf = r.ravel()[free]
        step = -linsolve(K, rf, symmetric=True)
        slope = float(rf @ step)
        if not np.all(np.isfinite(step)) or slope >= 0:
            raise SingularSystemError("elastic tangent is not positive definite")
        du = np.zeros(2 * grid.node_count)
        du[free] = step
        du = du.reshape(-1, 2)
        s = 1.0
        roundoff = 64 * np.finfo(float).eps * (1.0 + abs(J))
        while True:
            u_try = u + s * du
            J_try = prob.energy(u_try)
            if J_try <= J + cfg.armijo * s * slope or (
                    J_try <= J + roundoff and -s * slope < roundoff):
                break
            s *= cfg.backtrack
            if s < cfg.min_step:
                raise NonConvergenceError(
                    f"line search failed at Newton iteration {it} (residual {res:.3e})",
                    residual=res, iterations=it)
        u, J = u_try, min(J_try, J)
        history.append(J_try)
        r = prob.gradient(u)
        res = _residual_norm(grid, r)
        it += 1

    if return_info:
        return u, ElasticSolveInfo(it, res, tol, history[0], history[-1], history)
    return u


def initial_displacement(grid: Grid2D, c0, z0, f0: ForceLike, b0, epsilon: float,
                         mat: MaterialParams, cfg: Optional[ElasticSolveConfig] = None,
                         return_info: bool = False):
    """Minimizer of ``E_eps(., c0, z0) - int f0 . u`` with trace ``b0``, started from zero."""
    return solve_displacement(grid, c0, z0, f0, b0, epsilon, mat, cfg, u0=None,
                              return_info=return_info)


def balance_residual(grid: Grid2D, u, c, z, f: ForceLike, epsilon: float,
                     mat: MaterialParams) -> float:
    """Dual norm of the weak balance-of-forces residual over test fields vanishing on ``D``."""
    prob = ElasticProblem(grid, c, z, f, epsilon, mat)
    return _residual_norm(grid, prob.gradient(u))


def energy_derivative(grid: Grid2D, u, c, z, epsilon: float, mat: MaterialParams,
                      direction: np.ndarray) -> float:
    """Directional derivative ``dE_eps(u)[direction]`` of the stored energy (no force term)."""
    prob = ElasticProblem(grid, c, z, None, epsilon, mat)
    return float(np.sum(prob.gradient(u) * direction))
