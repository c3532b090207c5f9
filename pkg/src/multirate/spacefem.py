"""Structured two-subdomain meshes and continuous tensor-product Lagrange spaces.

Cells are axis-aligned boxes of one size per subdomain, so every element
matrix is computed once on the reference cell and scattered with index
arrays. Vector spaces number degrees of freedom component-major:
``dof = component * n_nodes + node``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import MeshMismatch, MeshSizeError, SingularMatrix
from .linalg import DirectSolver, SparseMatrix, assemble_coo

TAGS = ("dirichlet", "inflow", "outflow", "interface")

# side name -> (axis, position on the reference cell)
_SIDES = {
    1: {"left": (0, 0.0), "right": (0, 1.0)},
    2: {"left": (0, 0.0), "right": (0, 1.0), "bottom": (1, 0.0), "top": (1, 1.0)},
}


def gauss_01(n: int):
    """Gauss-Legendre rule with ``n`` points on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def lagrange_1d(r: int, x) -> Tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the equispaced Lagrange basis on ``[0, 1]``.

    Returns arrays of shape ``(len(x), r + 1)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    nodes = np.linspace(0.0, 1.0, r + 1)
    vals = np.ones((x.size, r + 1))
    ders = np.zeros((x.size, r + 1))
    for i in range(r + 1):
        others = [k for k in range(r + 1) if k != i]
        denom = np.prod([nodes[i] - nodes[k] for k in others])
        vals[:, i] = np.prod([x - nodes[k] for k in others], axis=0) / denom if others else 1.0
        for skip in others:
            rest = [k for k in others if k != skip]
            term = np.prod([x - nodes[k] for k in rest], axis=0) if rest else np.ones_like(x)
            ders[:, i] += term / denom
    return vals, ders


def tensor_basis(r: int, points: np.ndarray):
    """Tensor-product basis at reference points ``(npts, dim)``.

    Local node ``(a, b)`` has index ``a + (r + 1) * b``. Returns values
    ``(npts, nloc)`` and reference gradients ``(npts, nloc, dim)``.
    """
    points = np.atleast_2d(points)
    dim = points.shape[1]
    v0, d0 = lagrange_1d(r, points[:, 0])
    if dim == 1:
        return v0, d0[:, :, None]
    v1, d1 = lagrange_1d(r, points[:, 1])
    vals = (v0[:, None, :] * v1[:, :, None]).reshape(len(points), -1)
    gx = (d0[:, None, :] * v1[:, :, None]).reshape(len(points), -1)
    gy = (v0[:, None, :] * d1[:, :, None]).reshape(len(points), -1)
    return vals, np.stack([gx, gy], axis=-1)


def cell_rule(dim: int, n: int):
    x, w = gauss_01(n)
    if dim == 1:
        return x[:, None], w
    X, Y = np.meshgrid(x, x, indexing="xy")
    W = np.outer(w, w)
    return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()


class SubdomainMesh:
    """Uniform axis-aligned box mesh with per-facet boundary tags.

    ``side_tags`` maps each side name to a tag or a sequence of tags, one
    per boundary facet along that side (ordered by increasing coordinate).
    """

    def __init__(self, lower, upper, shape, side_tags: Dict[str, object]):
        self.lower = np.array(lower, dtype=float).reshape(-1)
        self.upper = np.array(upper, dtype=float).reshape(-1)
        self.shape = tuple(int(s) for s in np.atleast_1d(shape))
        self.dim = len(self.shape)
        if self.dim not in (1, 2) or self.lower.size != self.dim or self.upper.size != self.dim:
            raise ValueError("only 1D intervals and 2D rectangles are supported")
        if min(self.shape) < 1 or np.any(self.upper <= self.lower):
            raise ValueError("cell counts and extents must be positive")
        self.cell_size = (self.upper - self.lower) / np.array(self.shape)
        self.facet_tags = {}
        for side in _SIDES[self.dim]:
            n = self.n_side_facets(side)
            tags = side_tags.get(side, "dirichlet")
            tags = [tags] * n if isinstance(tags, str) else list(tags)
            if len(tags) != n or any(t not in TAGS for t in tags):
                raise ValueError(f"bad tags for side {side!r}: {tags}")
            self.facet_tags[side] = tuple(tags)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def h(self) -> float:
        return float(self.cell_size.max())

    @property
    def cell_measure(self) -> float:
        return float(np.prod(self.cell_size))

    def n_side_facets(self, side: str) -> int:
        if self.dim == 1:
            return 1
        axis, _ = _SIDES[2][side]
        return self.shape[1 - axis]

    def cell_index(self, *idx) -> int:
        if self.dim == 1:
            return int(idx[0])
        return int(idx[0] + self.shape[0] * idx[1])

    def cell_origins(self) -> np.ndarray:
        if self.dim == 1:
            return (self.lower[0] + self.cell_size[0] * np.arange(self.shape[0]))[:, None]
        cx, cy = np.meshgrid(np.arange(self.shape[0]), np.arange(self.shape[1]), indexing="xy")
        return np.column_stack([self.lower[0] + self.cell_size[0] * cx.ravel(),
                                self.lower[1] + self.cell_size[1] * cy.ravel()])

    def side_cells(self, side: str) -> np.ndarray:
        """Cells adjacent to ``side``, ordered along it."""
        if self.dim == 1:
            return np.array([0 if side == "left" else self.shape[0] - 1])
        nx, ny = self.shape
        if side == "left":
            return np.arange(ny) * nx
        if side == "right":
            return np.arange(ny) * nx + nx - 1
        if side == "bottom":
            return np.arange(nx)
        return (ny - 1) * nx + np.arange(nx)

    def facet_length(self, side: str) -> float:
        if self.dim == 1:
            return 1.0
        axis, _ = _SIDES[2][side]
        return float(self.cell_size[1 - axis])

    def outward_normal(self, side: str) -> np.ndarray:
        axis, pos = _SIDES[self.dim][side]
        n = np.zeros(self.dim)
        n[axis] = 1.0 if pos == 1.0 else -1.0
        return n

    def facet_midpoints(self, side: str) -> np.ndarray:
        axis, pos = _SIDES[self.dim][side]
        cells = self.side_cells(side)
        mid = np.full(self.dim, 0.5)
        mid[axis] = pos
        return self.cell_origins()[cells] + mid * self.cell_size

    def boundary_facets(self):
        """``(side, facet index, tag)`` for every boundary facet."""
        return [(s, i, t) for s, tags in self.facet_tags.items() for i, t in enumerate(tags)]

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist(),
                "shape": list(self.shape),
                "tags": {s: list(t) for s, t in self.facet_tags.items()}}


@dataclass(frozen=True)
class InterfacePairing:
    """Matched facets on the interface: facet ``i`` of side ``side1`` of
    subdomain 1 touches facet ``i`` of ``side2`` of subdomain 2."""

    side1: str
    side2: str
    facets1: np.ndarray
    facets2: np.ndarray

    @property
    def n_pairs(self) -> int:
        return int(self.facets1.size)


class CoupledMesh:
    def __init__(self, mesh1: SubdomainMesh, mesh2: SubdomainMesh, pairing: InterfacePairing):
        self.meshes = (mesh1, mesh2)
        self.pairing = pairing
        if mesh1.dim != mesh2.dim:
            raise MeshMismatch("subdomains have different dimensions")
        m1 = mesh1.facet_midpoints(pairing.side1)[pairing.facets1]
        m2 = mesh2.facet_midpoints(pairing.side2)[pairing.facets2]
        if not np.allclose(m1, m2, rtol=0.0, atol=1e-12):
            raise MeshMismatch("interface facets do not match")
        if abs(mesh1.facet_length(pairing.side1) - mesh2.facet_length(pairing.side2)) > 1e-12:
            raise MeshMismatch("interface facet lengths differ")
        if np.any(self.normals[0] + self.normals[1] != 0.0):
            raise MeshMismatch("interface normals are not opposite")
        for j, (mesh, side, facets) in enumerate(
                [(mesh1, pairing.side1, pairing.facets1), (mesh2, pairing.side2, pairing.facets2)]):
            tags = mesh.facet_tags[side]
            if any(tags[f] != "interface" for f in facets):
                raise MeshMismatch(f"subdomain {j + 1}: paired facet not tagged 'interface'")

    @property
    def dim(self) -> int:
        return self.meshes[0].dim

    @property
    def normals(self):
        return (self.meshes[0].outward_normal(self.pairing.side1),
                self.meshes[1].outward_normal(self.pairing.side2))

    @property
    def h_sub(self):
        return tuple(m.h for m in self.meshes)

    @property
    def h(self) -> float:
        return max(self.h_sub)

    @property
    def facet_length(self) -> float:
        return self.meshes[0].facet_length(self.pairing.side1)

    def to_dict(self) -> dict:
        return {"subdomains": [m.to_dict() for m in self.meshes],
                "interface": {"side1": self.pairing.side1, "side2": self.pairing.side2,
                              "facets1": self.pairing.facets1.tolist(),
                              "facets2": self.pairing.facets2.tolist()}}

    def export(self) -> dict:
        """Nodes, cells and tags of both subdomains for visualization."""
        out = []
        for mesh in self.meshes:
            space = FESpace(mesh, 1)
            out.append({"nodes": space.node_coords.tolist(),
                        "cells": space.cell_nodes.tolist(),
                        "tags": {s: list(t) for s, t in mesh.facet_tags.items()}})
        return {"subdomains": out}


def build_coupled_mesh_1d(split: float, h: float, domain=(0.0, 1.0)) -> CoupledMesh:
    a, b = float(domain[0]), float(domain[1])
    if not a < split < b:
        raise MeshSizeError(f"split {split} must lie strictly inside ({a}, {b})")
    counts = []
    for length in (split - a, b - split):
        n = length / h
        if abs(n - round(n)) > 1e-9 * max(n, 1.0) or round(n) < 1:
            raise MeshSizeError(f"h={h} does not divide subinterval length {length}")
        counts.append(int(round(n)))
    m1 = SubdomainMesh([a], [split], [counts[0]], {"left": "dirichlet", "right": "interface"})
    m2 = SubdomainMesh([split], [b], [counts[1]], {"left": "interface", "right": "dirichlet"})
    pairing = InterfacePairing("right", "left", np.array([0]), np.array([0]))
    return CoupledMesh(m1, m2, pairing)


def build_two_pipe_mesh(m: int) -> CoupledMesh:
    """Upper pipe ``(0,4)x(0,1)`` over lower pipe ``(1,3)x(-1,0)``, cells ``1/m``."""
    if m < 2:
        raise MeshSizeError("two-pipe mesh needs m >= 2")
    centers = (np.arange(4 * m) + 0.5) / m
    bottom = ["interface" if 1.0 < x < 3.0 else "dirichlet" for x in centers]
    upper = SubdomainMesh([0.0, 0.0], [4.0, 1.0], [4 * m, m],
                          {"left": "inflow", "right": "outflow", "top": "dirichlet",
                           "bottom": bottom})
    lower = SubdomainMesh([1.0, -1.0], [3.0, 0.0], [2 * m, m],
                          {"left": "inflow", "right": "outflow", "bottom": "dirichlet",
                           "top": "interface"})
    pairing = InterfacePairing("bottom", "top", np.arange(m, 3 * m), np.arange(2 * m))
    return CoupledMesh(upper, lower, pairing)


class FESpace:
    """Continuous Lagrange space of order ``r`` with ``ncomp`` components.

    Degrees of freedom on facets whose tag is in ``constrained_tags`` are
    constrained (Dirichlet); they stay in the numbering.
    """

    def __init__(self, mesh: SubdomainMesh, order: int, ncomp: int = 1,
                 constrained_tags: Sequence[str] = ()):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.mesh = mesh
        self.order = int(order)
        self.ncomp = int(ncomp)
        self.constrained_tags = tuple(constrained_tags)
        self.grid = tuple(self.order * s + 1 for s in mesh.shape)
        self.n_nodes = int(np.prod(self.grid))
        self.ndofs = self.ncomp * self.n_nodes

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def n_local(self) -> int:
        return (self.order + 1) ** self.dim

    @cached_property
    def node_coords(self) -> np.ndarray:
        axes = [np.linspace(lo, hi, g) for lo, hi, g in zip(self.mesh.lower, self.mesh.upper, self.grid)]
        if self.dim == 1:
            return axes[0][:, None]
        X, Y = np.meshgrid(axes[0], axes[1], indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def cell_nodes(self) -> np.ndarray:
        r = self.order
        if self.dim == 1:
            base = r * np.arange(self.mesh.shape[0])
            return base[:, None] + np.arange(r + 1)[None, :]
        nx, ny = self.mesh.shape
        gx = self.grid[0]
        cx, cy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
        base = (r * cx.ravel() + gx * r * cy.ravel())
        a, b = np.meshgrid(np.arange(r + 1), np.arange(r + 1), indexing="xy")
        local = a.ravel() + gx * b.ravel()
        return base[:, None] + local[None, :]

    @cached_property
    def cell_dofs(self) -> np.ndarray:
        return np.concatenate([self.cell_nodes + c * self.n_nodes for c in range(self.ncomp)], axis=1)

    def side_nodes(self, side: str, facets=None) -> np.ndarray:
        """Global nodes on the closure of the given facets of ``side``."""
        mesh, r = self.mesh, self.order
        axis, pos = _SIDES[self.dim][side]
        if self.dim == 1:
            return np.array([0 if pos == 0.0 else self.grid[0] - 1])
        n_f = mesh.n_side_facets(side)
        facets = np.arange(n_f) if facets is None else np.atleast_1d(facets)
        along = np.unique(np.concatenate([r * f + np.arange(r + 1) for f in facets]))
        fixed = 0 if pos == 0.0 else self.grid[axis] - 1
        gx = self.grid[0]
        if axis == 0:
            return fixed + gx * along
        return along + gx * fixed

    def tagged_nodes(self, tags) -> np.ndarray:
        tags = (tags,) if isinstance(tags, str) else tuple(tags)
        out = [np.zeros(0, dtype=np.int64)]
        for side, ftags in self.mesh.facet_tags.items():
            facets = [i for i, t in enumerate(ftags) if t in tags]
            if facets:
                out.append(self.side_nodes(side, facets))
        return np.unique(np.concatenate(out)).astype(np.int64)

    def nodes_to_dofs(self, nodes) -> np.ndarray:
        nodes = np.asarray(nodes, dtype=np.int64)
        return np.concatenate([nodes + c * self.n_nodes for c in range(self.ncomp)])

    @cached_property
    def constrained_dofs(self) -> np.ndarray:
        return np.sort(self.nodes_to_dofs(self.tagged_nodes(self.constrained_tags)))

    @cached_property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.ndofs, dtype=bool)
        mask[self.constrained_dofs] = False
        return np.flatnonzero(mask)

    def quadrature(self, n_points: Optional[int] = None):
        """Reference points, physical weights and scalar basis data of a cell."""
        n = self.order + 1 if n_points is None else n_points
        pts, w = cell_rule(self.dim, n)
        vals, grads = tensor_basis(self.order, pts)
        grads = grads / self.mesh.cell_size
        return pts, w * self.mesh.cell_measure, vals, grads

    def quadrature_points(self, n_points: Optional[int] = None) -> np.ndarray:
        """Physical quadrature points ``(n_cells, nq, dim)``."""
        pts, _, _, _ = self.quadrature(n_points)
        return self.mesh.cell_origins()[:, None, :] + pts[None, :, :] * self.mesh.cell_size

    def interpolate(self, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Nodal interpolant coefficients of ``fn(X) -> (n,)`` or ``(n, ncomp)``."""
        vals = np.asarray(fn(self.node_coords), dtype=float)
        if self.ncomp == 1:
            return vals.reshape(self.n_nodes)
        return vals.reshape(self.n_nodes, self.ncomp).T.ravel()


@dataclass(frozen=True)
class FEFunction:
    space: FESpace
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.space.ndofs,):
            raise ValueError(f"coefficient length {c.shape} != {self.space.ndofs}")
        object.__setattr__(self, "coeffs", c)

    def values_at_quadrature(self, n_points=None):
        """Values ``(n_cells, nq, ncomp)`` and gradients ``(n_cells, nq, ncomp, dim)``."""
        return evaluate(self.space, self.coeffs, n_points)


def evaluate(space: FESpace, coeffs, n_points=None):
    _, _, vals, grads = space.quadrature(n_points)
    nl = space.n_local
    loc = np.asarray(coeffs)[space.cell_dofs].reshape(-1, space.ncomp, nl)
    v = np.einsum("ecl,ql->eqc", loc, vals)
    g = np.einsum("ecl,qld->eqcd", loc, grads)
    return v, g


# ---------------------------------------------------------------- assembly

def _scatter(space_r: FESpace, space_c: FESpace, local: np.ndarray,
             cells_r=None, cells_c=None) -> SparseMatrix:
    dr = space_r.cell_dofs if cells_r is None else space_r.cell_dofs[cells_r]
    dc = space_c.cell_dofs if cells_c is None else space_c.cell_dofs[cells_c]
    rows = np.broadcast_to(dr[:, :, None], (dr.shape[0], dr.shape[1], dc.shape[1]))
    cols = np.broadcast_to(dc[:, None, :], rows.shape)
    vals = np.broadcast_to(local[None], rows.shape)
    return assemble_coo(space_r.ndofs, space_c.ndofs, rows, cols, vals)


def _vector_basis(vals: np.ndarray, grads: np.ndarray, ncomp: int):
    """Expand scalar basis data to ``ncomp`` components.

    Returns values ``(nq, ncomp*nl, ncomp)`` and gradients
    ``(nq, ncomp*nl, ncomp, dim)`` in component-major local order.
    """
    nq, nl = vals.shape
    dim = grads.shape[-1]
    V = np.zeros((nq, ncomp, nl, ncomp))
    G = np.zeros((nq, ncomp, nl, ncomp, dim))
    for c in range(ncomp):
        V[:, c, :, c] = vals
        G[:, c, :, c, :] = grads
    return V.reshape(nq, ncomp * nl, ncomp), G.reshape(nq, ncomp * nl, ncomp, dim)


def _sym(G: np.ndarray) -> np.ndarray:
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def mass_matrix(space: FESpace) -> SparseMatrix:
    _, w, vals, grads = space.quadrature()
    V, _ = _vector_basis(vals, grads, space.ncomp)
    local = np.einsum("q,qic,qjc->ij", w, V, V)
    return _scatter(space, space, local)


def stiffness_matrix(space: FESpace) -> SparseMatrix:
    """``(grad u, grad v)`` summed over components."""
    _, w, vals, grads = space.quadrature()
    _, G = _vector_basis(vals, grads, space.ncomp)
    local = np.einsum("q,qicd,qjcd->ij", w, G, G)
    return _scatter(space, space, local)


def strain_matrix(space: FESpace) -> SparseMatrix:
    """``(eps(u), grad v)`` with the symmetric gradient ``eps``."""
    _, w, vals, grads = space.quadrature()
    _, G = _vector_basis(vals, grads, space.ncomp)
    local = np.einsum("q,qicd,qjcd->ij", w, G, _sym(G))
    return _scatter(space, space, local)


def divergence_matrix(pspace: FESpace, vspace: FESpace) -> SparseMatrix:
    """``D[i, j] = (psi_i, div phi_j)`` for pressure test and velocity trial."""
    if pspace.mesh is not vspace.mesh:
        raise MeshMismatch("pressure and velocity spaces live on different meshes")
    n = max(pspace.order, vspace.order) + 1
    _, w, pv, _ = pspace.quadrature(n)
    _, _, vv, vg = vspace.quadrature(n)
    _, G = _vector_basis(vv, vg, vspace.ncomp)
    div = np.einsum("qjcc->qj", G)
    local = np.einsum("q,qi,qj->ij", w, pv, div)
    return _scatter(pspace, vspace, local)


def load_vector(space: FESpace, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """``(f, v)`` for ``fn(X) -> (n,)`` or ``(n, ncomp)`` at points ``X``."""
    _, w, vals, grads = space.quadrature(space.order + 2)
    X = space.quadrature_points(space.order + 2)
    ne, nq, dim = X.shape
    f = np.asarray(fn(X.reshape(-1, dim)), dtype=float).reshape(ne, nq, space.ncomp)
    V, _ = _vector_basis(vals, grads, space.ncomp)
    local = np.einsum("q,eqc,qic->ei", w, f, V)
    out = np.zeros(space.ndofs)
    np.add.at(out, space.cell_dofs.ravel(), local.ravel())
    return out


class InterfaceTrace:
    """Facet quadrature data of one side of the interface.

    ``values`` ``(nq, nloc, ncomp)`` and ``grads`` ``(nq, nloc, ncomp, dim)``
    hold the vector basis of a touching cell at the facet points;
    ``weights`` include the facet length.
    """

    def __init__(self, cmesh: CoupledMesh, j: int, space: FESpace, n_points: int):
        mesh = cmesh.meshes[j - 1]
        if space.mesh is not mesh:
            raise MeshMismatch(f"space does not live on subdomain {j}")
        side = cmesh.pairing.side1 if j == 1 else cmesh.pairing.side2
        facets = cmesh.pairing.facets1 if j == 1 else cmesh.pairing.facets2
        self.space = space
        self.cells = mesh.side_cells(side)[facets]
        self.normal = mesh.outward_normal(side)
        axis, pos = _SIDES[mesh.dim][side]
        if mesh.dim == 1:
            pts = np.array([[pos]])
            w = np.array([1.0])
        else:
            s, w = gauss_01(n_points)
            pts = np.zeros((n_points, 2))
            pts[:, axis] = pos
            pts[:, 1 - axis] = s
            w = w * mesh.facet_length(side)
        vals, grads = tensor_basis(space.order, pts)
        self.values, self.grads = _vector_basis(vals, grads / mesh.cell_size, space.ncomp)
        self.weights = w
        self.points = mesh.cell_origins()[self.cells][:, None, :] + pts[None] * mesh.cell_size

    @property
    def dofs(self) -> np.ndarray:
        return self.space.cell_dofs[self.cells]

    def evaluate(self, coeffs) -> np.ndarray:
        """Traces of an FE function at the facet points: ``(n_pairs, nq, ncomp)``."""
        return np.einsum("pi,qic->pqc", np.asarray(coeffs)[self.dofs], self.values)

    def normal_derivative(self) -> np.ndarray:
        """``grad(phi) . n`` per component: ``(nq, nloc, ncomp)``."""
        return np.einsum("qicd,d->qic", self.grads, self.normal)

    def strain_normal(self) -> np.ndarray:
        """``eps(phi) n``: ``(nq, nloc, ncomp)``."""
        return np.einsum("qicd,d->qic", _sym(self.grads), self.normal)


def interface_matrix(test: InterfaceTrace, trial: InterfaceTrace,
                     test_data: np.ndarray, trial_data: np.ndarray) -> SparseMatrix:
    """``sum_q w_q test_data[q, i, :] . trial_data[q, j, :]`` scattered over pairs.

    Data arrays are vector valued per local basis function, shaped
    ``(nq, nloc, ncomp)``; their component counts must agree.
    """
    local = np.einsum("q,qic,qjc->ij", test.weights, test_data, trial_data)
    return _scatter(test.space, trial.space, local, test.cells, trial.cells)


# ----------------------------------------------------- projections & norms

def _merged_numbering(cmesh: CoupledMesh, s1: FESpace, s2: FESpace):
    """Global numbering of the space continuous across the interface."""
    tr1 = s1.side_nodes(cmesh.pairing.side1, cmesh.pairing.facets1)
    tr2 = s2.side_nodes(cmesh.pairing.side2, cmesh.pairing.facets2)
    x1, x2 = s1.node_coords[tr1], s2.node_coords[tr2]
    match = {}
    for a, p in zip(tr2, x2):
        d = np.abs(x1 - p).max(axis=1)
        k = int(np.argmin(d))
        if d[k] > 1e-12:
            raise MeshMismatch("interface nodes do not coincide")
        match[int(a)] = int(tr1[k])
    node_map2 = np.empty(s2.n_nodes, dtype=np.int64)
    nxt = s1.n_nodes
    for a in range(s2.n_nodes):
        if a in match:
            node_map2[a] = match[a]
        else:
            node_map2[a] = nxt
            nxt += 1
    n_glob_nodes = nxt
    ncomp = s1.ncomp
    map1 = np.concatenate([np.arange(s1.n_nodes) + c * n_glob_nodes for c in range(ncomp)])
    map2 = np.concatenate([node_map2 + c * n_glob_nodes for c in range(ncomp)])
    return map1, map2, ncomp * n_glob_nodes


def _embed(A: SparseMatrix, rmap, cmap, shape) -> SparseMatrix:
    M = A.to_scipy().tocoo()
    return assemble_coo(shape[0], shape[1], rmap[M.row], cmap[M.col], M.data)


def ritz_projection(u_exact: Tuple[Callable, Callable], grad_exact: Tuple[Callable, Callable],
                    cmesh: CoupledMesh, order: int, ncomp: int = 1,
                    dirichlet_tags=("dirichlet",)) -> Tuple[FEFunction, FEFunction]:
    """Elliptic projection onto the space continuous across the interface.

    ``u_exact[j]`` / ``grad_exact[j]`` evaluate the exact field and its
    gradient on subdomain ``j`` at points ``(n, dim)``; gradients are
    ``(n, dim)`` (scalar) or ``(n, ncomp, dim)``. Interface dofs are shared,
    so both traces coincide exactly.
    """
    spaces = [FESpace(m, order, ncomp, dirichlet_tags) for m in cmesh.meshes]
    map1, map2, n = _merged_numbering(cmesh, *spaces)
    K = None
    rhs = np.zeros(n)
    constrained = {}
    for s, mp, g, u in zip(spaces, (map1, map2), grad_exact, u_exact):
        Kj = _embed(stiffness_matrix(s), mp, mp, (n, n)).to_scipy()
        K = Kj if K is None else K + Kj
        _, w, vals, grads = s.quadrature(order + 2)
        X = s.quadrature_points(order + 2)
        ne, nq, dim = X.shape
        G = np.asarray(g(X.reshape(-1, dim)), dtype=float).reshape(ne, nq, s.ncomp, dim)
        _, Gb = _vector_basis(vals, grads, s.ncomp)
        local = np.einsum("q,eqcd,qicd->ei", w, G, Gb)
        np.add.at(rhs, mp[s.cell_dofs].ravel(), local.ravel())
        cd = s.constrained_dofs
        if cd.size:
            vals_c = s.interpolate(u)[cd]
            for d, v in zip(mp[cd], vals_c):
                constrained[int(d)] = float(v)
    if not constrained:
        raise SingularMatrix("Ritz projection needs at least one Dirichlet constraint")
    cdofs = np.array(sorted(constrained))
    cvals = np.array([constrained[d] for d in cdofs])
    free = np.setdiff1d(np.arange(n), cdofs)
    x = np.zeros(n)
    x[cdofs] = cvals
    K = K.tocsr()
    b = rhs[free] - K[free][:, cdofs] @ cvals
    x[free] = DirectSolver(K[free][:, free]).solve(b)
    return FEFunction(spaces[0], x[map1]), FEFunction(spaces[1], x[map2])


def stokes_ritz_projection(u_exact, grad_exact, cmesh: CoupledMesh, order: int,
                           dirichlet_tags=("dirichlet", "inflow")):
    """Divergence-constrained elliptic projection of a velocity field.

    Solves the saddle system with a Lagrange multiplier in the continuous
    order ``r - 1`` space; only the velocity pair is returned.
    """
    dim = cmesh.dim
    vsp = [FESpace(m, order, dim, dirichlet_tags) for m in cmesh.meshes]
    psp = [FESpace(m, order - 1, 1) for m in cmesh.meshes]
    vm1, vm2, nv = _merged_numbering(cmesh, *vsp)
    pm1, pm2, nq_ = _merged_numbering(cmesh, *psp)
    K = None
    D = None
    rhs = np.zeros(nv)
    constrained = {}
    for s, ps, mp, pmp, g, u in zip(vsp, psp, (vm1, vm2), (pm1, pm2), grad_exact, u_exact):
        Kj = _embed(stiffness_matrix(s), mp, mp, (nv, nv)).to_scipy()
        Dj = _embed(divergence_matrix(ps, s), pmp, mp, (nq_, nv)).to_scipy()
        K = Kj if K is None else K + Kj
        D = Dj if D is None else D + Dj
        _, w, vals, grads = s.quadrature(order + 2)
        X = s.quadrature_points(order + 2)
        ne, nqp, _ = X.shape
        G = np.asarray(g(X.reshape(-1, dim)), dtype=float).reshape(ne, nqp, dim, dim)
        _, Gb = _vector_basis(vals, grads, dim)
        local = np.einsum("q,eqcd,qicd->ei", w, G, Gb)
        np.add.at(rhs, mp[s.cell_dofs].ravel(), local.ravel())
        cd = s.constrained_dofs
        vals_c = s.interpolate(u)[cd]
        for d, v in zip(mp[cd], vals_c):
            constrained[int(d)] = float(v)
    import scipy.sparse as sp
    A = sp.bmat([[K, -D.T], [D, None]], format="csr")
    n = nv + nq_
    b = np.concatenate([rhs, np.zeros(nq_)])
    cdofs = np.array(sorted(constrained))
    cvals = np.array([constrained[d] for d in cdofs])
    free = np.setdiff1d(np.arange(n), cdofs)
    x = np.zeros(n)
    x[cdofs] = cvals
    bf = b[free] - A[free][:, cdofs] @ cvals
    x[free] = DirectSolver(A[free][:, free]).solve(bf)
    xv = x[:nv]
    return FEFunction(vsp[0], xv[vm1]), FEFunction(vsp[1], xv[vm2])


def l2_projection(p_exact: Callable[[np.ndarray], np.ndarray], space: FESpace) -> FEFunction:
    """``(P p, psi) = (p, psi)`` for every ``psi`` in ``space``."""
    M = mass_matrix(space)
    return FEFunction(space, DirectSolver(M).solve(load_vector(space, p_exact)))


def jump_matrix(cmesh: CoupledMesh, s1: FESpace, s2: FESpace) -> SparseMatrix:
    """Gram matrix of ``u2 - u1`` on the interface for stacked ``(u1, u2)``."""
    import scipy.sparse as sp
    n_pts = max(s1.order, s2.order) + 1
    t1 = InterfaceTrace(cmesh, 1, s1, n_pts)
    t2 = InterfaceTrace(cmesh, 2, s2, n_pts)
    Y11 = interface_matrix(t1, t1, t1.values, t1.values).to_scipy()
    Y12 = interface_matrix(t1, t2, t1.values, t2.values).to_scipy()
    Y22 = interface_matrix(t2, t2, t2.values, t2.values).to_scipy()
    return SparseMatrix(sp.bmat([[Y11, -Y12], [-Y12.T, Y22]]))


NORM_KINDS = ("l2_domain", "h1_seminorm", "interface_l2_jump", "triple")


def norms(u, kind: str, cmesh: Optional[CoupledMesh] = None, nu=(1.0, 1.0),
          gamma: float = 0.0, h: Optional[float] = None) -> float:
    """Norm of an FE function or of a pair ``(u1, u2)`` on a coupled mesh.

    ``triple`` is ``(sum_j nu_j^2 |grad u_j|^2 + gamma/h |u2 - u1|_Gamma^2)^(1/2)``.
    """
    if kind not in NORM_KINDS:
        raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")
    pair = isinstance(u, (tuple, list))
    parts = list(u) if pair else [u]
    if kind == "l2_domain":
        return float(np.sqrt(sum(p.coeffs @ (mass_matrix(p.space) @ p.coeffs) for p in parts)))
    if kind == "h1_seminorm":
        return float(np.sqrt(sum(p.coeffs @ (stiffness_matrix(p.space) @ p.coeffs) for p in parts)))
    if not pair or cmesh is None:
        raise ValueError(f"{kind!r} needs a pair of functions and the coupled mesh")
    J = jump_matrix(cmesh, parts[0].space, parts[1].space)
    stacked = np.concatenate([parts[0].coeffs, parts[1].coeffs])
    jump_sq = float(stacked @ (J @ stacked))
    if kind == "interface_l2_jump":
        return float(np.sqrt(max(jump_sq, 0.0)))
    h = cmesh.h if h is None else h
    grad_sq = sum(n ** 2 * (p.coeffs @ (stiffness_matrix(p.space) @ p.coeffs))
                  for n, p in zip(nu, parts))
    return float(np.sqrt(grad_sq + gamma / h * max(jump_sq, 0.0)))


def error_sq_exact(space: FESpace, coeffs, exact: Callable, grad_exact: Callable,
                   n_points: Optional[int] = None):
    """Squared ``L2`` and ``H1``-seminorm errors against an exact field.

    Quadrature uses ``order + 2`` points per direction unless given.
    """
    n = space.order + 2 if n_points is None else n_points
    _, w, _, _ = space.quadrature(n)
    v, g = evaluate(space, coeffs, n)
    X = space.quadrature_points(n)
    ne, nq, dim = X.shape
    ue = np.asarray(exact(X.reshape(-1, dim)), dtype=float).reshape(ne, nq, space.ncomp)
    ge = np.asarray(grad_exact(X.reshape(-1, dim)), dtype=float).reshape(ne, nq, space.ncomp, dim)
    l2 = float(np.einsum("q,eqc->", w, (v - ue) ** 2))
    h1 = float(np.einsum("q,eqcd->", w, (g - ge) ** 2))
    return l2, h1
