"""Uniform rectangular grids with bilinear (Q1) elements.

Nodal arrays are plain numpy arrays whose first axis runs over grid nodes:
scalar fields have shape ``(nn,)``, vector fields ``(nn, 2)`` and
N-component fields ``(nn, N)``.  Quantities evaluated at quadrature points
have leading shape ``(ne, nq)``.

Node ``(i, j)`` (``0 <= i <= nx``, ``0 <= j <= ny``) has index
``j * (nx + 1) + i``; element ``(i, j)`` has index ``j * nx + i`` and corners
ordered counter-clockwise starting at the lower left.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Sequence, Union

import numpy as np
import scipy.sparse as sp

# corner signs of the reference square [-1, 1]^2, counter-clockwise
_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])

DIRICHLET_PRESETS = ("left", "right", "bottom", "top", "left_right", "boundary",
                     "left_bottom")


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss rule on the reference square ``[-1, 1]^2``."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if abs(self.weights.sum() - 4.0) > 1e-13:
            raise ValueError("quadrature weights must sum to the reference area 4")

    @classmethod
    def gauss(cls, order: int = 2) -> "QuadratureRule":
        x, w = np.polynomial.legendre.leggauss(order)
        px, py = np.meshgrid(x, x, indexing="xy")
        wx, wy = np.meshgrid(w, w, indexing="xy")
        pts = np.column_stack([px.ravel(), py.ravel()])
        return cls(points=pts, weights=(wx * wy).ravel())

    @property
    def size(self) -> int:
        return len(self.weights)


def _shape_functions(rule: QuadratureRule):
    xi, eta = rule.points[:, 0], rule.points[:, 1]
    sx, sy = _CORNERS[:, 0], _CORNERS[:, 1]
    N = 0.25 * (1 + np.outer(xi, sx)) * (1 + np.outer(eta, sy))
    dxi = 0.25 * sx[None, :] * (1 + np.outer(eta, sy))
    deta = 0.25 * sy[None, :] * (1 + np.outer(xi, sx))
    return N, np.stack([dxi, deta], axis=-1)


class Grid2D:
    """Uniform ``nx`` x ``ny`` grid of bilinear elements.

    Parameters
    ----------
    nx, ny : int
        Element counts (at least 2 each).
    hx, hy : float
        Element sizes.
    origin : sequence of float
        Coordinates of the lower-left corner.
    dirichlet : str, callable or array of int
        Dirichlet node set ``D``.  A preset name (see ``DIRICHLET_PRESETS``),
        a predicate ``f(x, y) -> bool`` evaluated on boundary nodes, or
        explicit node indices.
    """

    def __init__(self, nx: int, ny: int, hx: float, hy: float,
                 origin: Sequence[float] = (0.0, 0.0),
                 dirichlet: Union[str, Callable, Sequence[int]] = "left_right"):
        if nx < 2 or ny < 2:
            raise ValueError("nx and ny must be >= 2")
        if not (hx > 0 and hy > 0):
            raise ValueError("hx and hy must be positive")
        self.nx, self.ny = int(nx), int(ny)
        self.hx, self.hy = float(hx), float(hy)
        self.origin = np.asarray(origin, dtype=float)
        self.rule = QuadratureRule.gauss(2)
        self.dirichlet_nodes = self._resolve_dirichlet(dirichlet)
        if self.dirichlet_nodes.size == 0:
            raise ValueError("Dirichlet node set must be nonempty")
        if not np.all(np.isin(self.dirichlet_nodes, self.boundary_nodes)):
            raise ValueError("Dirichlet nodes must lie on the boundary")

    @classmethod
    def rectangle(cls, nx: int, ny: int, lx: float = 1.0, ly: float = 1.0,
                  origin=(0.0, 0.0), dirichlet="left_right") -> "Grid2D":
        return cls(nx, ny, lx / nx, ly / ny, origin=origin, dirichlet=dirichlet)

    def __repr__(self):
        return (f"Grid2D(nx={self.nx}, ny={self.ny}, hx={self.hx:g}, hy={self.hy:g}, "
                f"|D|={self.dirichlet_nodes.size})")

    # ------------------------------------------------------------------
    # topology
    # ------------------------------------------------------------------
    @property
    def node_count(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def element_count(self) -> int:
        return self.nx * self.ny

    @property
    def area(self) -> float:
        return self.nx * self.hx * self.ny * self.hy

    @cached_property
    def nodes(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.nx + 1), np.arange(self.ny + 1), indexing="xy")
        xy = np.column_stack([i.ravel() * self.hx, j.ravel() * self.hy])
        return xy + self.origin

    @cached_property
    def conn(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="xy")
        ll = (j * (self.nx + 1) + i).ravel()
        return np.column_stack([ll, ll + 1, ll + self.nx + 2, ll + self.nx + 1])

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        ij = np.indices((self.ny + 1, self.nx + 1))
        j, i = ij[0].ravel(), ij[1].ravel()
        mask = (i == 0) | (i == self.nx) | (j == 0) | (j == self.ny)
        return np.flatnonzero(mask)

    def _edge_mask(self, name: str) -> np.ndarray:
        x, y = self.nodes[:, 0], self.nodes[:, 1]
        x0, y0 = self.origin
        x1, y1 = x0 + self.nx * self.hx, y0 + self.ny * self.hy
        tol = 1e-9 * max(self.hx, self.hy)
        edges = {
            "left": np.abs(x - x0) < tol,
            "right": np.abs(x - x1) < tol,
            "bottom": np.abs(y - y0) < tol,
            "top": np.abs(y - y1) < tol,
        }
        if name in edges:
            return edges[name]
        if name == "left_right":
            return edges["left"] | edges["right"]
        if name == "left_bottom":
            return edges["left"] | edges["bottom"]
        if name == "boundary":
            return edges["left"] | edges["right"] | edges["bottom"] | edges["top"]
        raise ValueError(f"unknown Dirichlet preset {name!r}; choose from {DIRICHLET_PRESETS}")

    def _resolve_dirichlet(self, spec) -> np.ndarray:
        if isinstance(spec, str):
            return np.flatnonzero(self._edge_mask(spec))
        if callable(spec):
            b = self.boundary_nodes
            xy = self.nodes[b]
            keep = np.array([bool(spec(x, y)) for x, y in xy], dtype=bool)
            return b[keep]
        return np.unique(np.asarray(spec, dtype=int))

    @cached_property
    def free_nodes(self) -> np.ndarray:
        mask = np.ones(self.node_count, dtype=bool)
        mask[self.dirichlet_nodes] = False
        return np.flatnonzero(mask)

    def with_dirichlet(self, dirichlet) -> "Grid2D":
        return Grid2D(self.nx, self.ny, self.hx, self.hy, self.origin, dirichlet)

    # ------------------------------------------------------------------
    # reference element data
    # ------------------------------------------------------------------
    def shape(self, rule: QuadratureRule | None = None):
        """Shape values ``(nq, 4)``, physical derivatives ``(nq, 4, 2)`` and weights ``(nq,)``."""
        rule = rule or self.rule
        N, dref = _shape_functions(rule)
        dN = dref * np.array([2.0 / self.hx, 2.0 / self.hy])
        w = rule.weights * (self.hx * self.hy / 4.0)
        return N, dN, w

    @cached_property
    def _default_shape(self):
        return self.shape(self.rule)

    @property
    def N(self) -> np.ndarray:
        return self._default_shape[0]

    @property
    def dN(self) -> np.ndarray:
        return self._default_shape[1]

    @property
    def qweights(self) -> np.ndarray:
        return self._default_shape[2]

    def quadrature_points(self, rule: QuadratureRule | None = None) -> np.ndarray:
        """Physical coordinates of quadrature points, shape ``(ne, nq, 2)``."""
        N = self.shape(rule)[0]
        return np.einsum("qa,ead->eqd", N, self.nodes[self.conn])

    # ------------------------------------------------------------------
    # field evaluation
    # ------------------------------------------------------------------
    def interpolate(self, field: np.ndarray, rule: QuadratureRule | None = None) -> np.ndarray:
        """Values of the bilinear interpolant at quadrature points, ``(ne, nq, ...)``."""
        N = self.N if rule is None else self.shape(rule)[0]
        return np.tensordot(N, field[self.conn], axes=([1], [1])).swapaxes(0, 1)

    def gradient(self, field: np.ndarray, rule: QuadratureRule | None = None) -> np.ndarray:
        """Gradient of the interpolant at quadrature points.

        A scalar field gives ``(ne, nq, 2)``; a field with trailing shape
        ``(m,)`` gives ``(ne, nq, m, 2)`` (row ``k`` is the gradient of
        component ``k``).
        """
        dN = self.dN if rule is None else self.shape(rule)[1]
        nq = dN.shape[0]
        D = np.swapaxes(dN, 1, 2).reshape(nq * 2, 4)
        vals = field[self.conn]
        if field.ndim == 1:
            return (vals @ D.T).reshape(-1, nq, 2)
        out = np.matmul(D, vals.reshape(vals.shape[0], 4, -1))
        return np.swapaxes(out.reshape((vals.shape[0], nq, 2) + field.shape[1:]), 2, -1)

    def strain(self, u: np.ndarray, rule: QuadratureRule | None = None) -> np.ndarray:
        """Symmetrized gradient of a displacement field, ``(ne, nq, 2, 2)``."""
        H = self.gradient(u, rule)
        return 0.5 * (H + np.swapaxes(H, -1, -2))

    def integrate(self, density: np.ndarray, rule: QuadratureRule | None = None) -> float:
        """Quadrature sum of a ``(ne, nq)`` density."""
        w = self.qweights if rule is None else self.shape(rule)[2]
        return float(np.einsum("eq,q->", density, w))

    # ------------------------------------------------------------------
    # assembly
    # ------------------------------------------------------------------
    def _scatter(self, loc: np.ndarray) -> np.ndarray:
        """Sum element contributions ``(ne, 4, ...)`` into nodal values."""
        idx = self.conn.ravel()
        flat = loc.reshape(idx.size, -1)
        out = np.stack([np.bincount(idx, flat[:, k], minlength=self.node_count)
                        for k in range(flat.shape[1])], axis=-1)
        return out.reshape((self.node_count,) + loc.shape[2:])

    def assemble_load(self, values: np.ndarray) -> np.ndarray:
        """Vector ``int v * phi_i`` for ``values`` of shape ``(ne, nq[, m])``."""
        ne, nq = values.shape[:2]
        Nw = (self.N * self.qweights[:, None]).T
        loc = np.matmul(Nw, values.reshape(ne, nq, -1))
        return self._scatter(loc.reshape((ne, 4) + values.shape[2:]))

    def assemble_flux(self, flux: np.ndarray) -> np.ndarray:
        """Vector ``int F : grad phi_i`` for flux ``(ne, nq[, m], 2)``."""
        ne, nq = flux.shape[:2]
        Dw = (self.dN * self.qweights[:, None, None]).transpose(1, 0, 2).reshape(4, nq * 2)
        F = np.moveaxis(flux, -1, 2).reshape(ne, nq * 2, -1)
        loc = np.matmul(Dw, F)
        return self._scatter(loc.reshape((ne, 4) + flux.shape[2:-1]))

    def _scalar_matrix(self, local: np.ndarray) -> sp.csr_matrix:
        rows = np.repeat(self.conn, 4, axis=1)
        cols = np.tile(self.conn, (1, 4))
        nn = self.node_count
        return sp.csr_matrix((local.reshape(local.shape[0], -1).ravel(),
                              (rows.ravel(), cols.ravel())), shape=(nn, nn))

    def weighted_mass(self, weight: np.ndarray) -> sp.csr_matrix:
        """Matrix ``int weight * phi_i * phi_j`` for ``weight`` of shape ``(ne, nq)``."""
        loc = np.einsum("qa,qb,q,eq->eab", self.N, self.N, self.qweights, weight)
        return self._scalar_matrix(loc)

    @cached_property
    def mass_matrix(self) -> sp.csr_matrix:
        return self.weighted_mass(np.ones((self.element_count, self.rule.size)))

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        return np.asarray(self.mass_matrix.sum(axis=1)).ravel()

    @cached_property
    def stiffness_matrix(self) -> sp.csr_matrix:
        """Scalar Laplacian ``int grad phi_i . grad phi_j``."""
        loc = np.einsum("qad,qbd,q->ab", self.dN, self.dN, self.qweights)
        return self._scalar_matrix(np.broadcast_to(loc, (self.element_count, 4, 4)))

    @cached_property
    def vector_dofs(self) -> np.ndarray:
        """Element dof indices ``(ne, 8)`` for interleaved vector fields (``2*node + comp``)."""
        return (2 * self.conn[:, :, None] + np.arange(2)).reshape(self.element_count, 8)

    # ------------------------------------------------------------------
    # norms and boundary data
    # ------------------------------------------------------------------
    def l2_norm(self, field: np.ndarray) -> float:
        vals = self.interpolate(field)
        sq = vals ** 2
        if sq.ndim > 2:
            sq = sq.reshape(sq.shape[0], sq.shape[1], -1).sum(axis=-1)
        return float(np.sqrt(self.integrate(sq)))

    def dual_norm(self, residual: np.ndarray, nodes: np.ndarray | None = None) -> float:
        """Lumped-mass scaled Euclidean norm ``sqrt(sum r_i^2 / m_i)`` of a nodal residual."""
        m = self.lumped_mass
        r = residual if residual.ndim > 1 else residual[:, None]
        if nodes is not None:
            r, m = r[nodes], m[nodes]
        return float(np.sqrt(np.sum(r ** 2 / m[:, None])))

    def apply_dirichlet(self, field: np.ndarray, b_values) -> np.ndarray:
        """Return a copy of ``field`` with Dirichlet nodes set to ``b_values``.

        ``b_values`` is an array with one row per Dirichlet node, a full nodal
        field (rows at ``D`` are used), a single value shared by all Dirichlet
        nodes, or a mapping ``node -> value``.
        """
        out = np.array(field, dtype=float, copy=True)
        D = self.dirichlet_nodes
        if isinstance(b_values, Mapping):
            missing = [int(n) for n in D if int(n) not in b_values]
            if missing:
                raise ValueError(f"missing Dirichlet values for nodes {missing[:5]}")
            out[D] = np.array([b_values[int(n)] for n in D], dtype=float)
            return out
        b = np.asarray(b_values, dtype=float)
        if b.ndim == out.ndim - 1 and b.shape == out.shape[1:]:
            b = np.broadcast_to(b, (D.size,) + b.shape)
        if b.shape[0] == self.node_count and D.size != self.node_count:
            b = b[D]
        if b.shape[0] != D.size or np.any(~np.isfinite(b)):
            raise ValueError(f"expected {D.size} finite Dirichlet values, got shape {b.shape}")
        out[D] = b.reshape(out[D].shape)
        return out


@dataclass
class State:
    """The quadruple ``(u, c, w, z)`` at one time level.

    ``u`` has shape ``(nn, 2)``, ``c`` and ``w`` ``(nn, N)``, ``z`` ``(nn,)``.
    """

    u: np.ndarray
    c: np.ndarray
    w: np.ndarray
    z: np.ndarray
    t: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def copy(self) -> "State":
        return State(self.u.copy(), self.c.copy(), self.w.copy(), self.z.copy(), self.t,
                     dict(self.meta))

    @property
    def n_components(self) -> int:
        return self.c.shape[1]
