"""Monolithic multirate macro-step systems for two coupled linear evolutions.

Each subproblem ``j`` is given by spatial operators ``M_j`` (mass; zero in
algebraic rows such as pressure), ``A_j`` (everything acting on its own
state, interface self-terms included) and a coupling ``C_jl`` acting on the
opposite state. On a macro step with micro counts ``(N_1, N_2)`` the rows of
micro step ``m`` of subproblem ``j`` read

    (M_j / k_j + A_j) u_jm - (M_j / k_j) u_j(m-1)
        + C_jl sum_q W_j[m, q] u_lq = F_j(t_jm)

with ``W_j`` the averaging weights of the opposite micro partition. The
system of all micro unknowns is solved at once; Dirichlet dofs are
eliminated and the factorization is cached per step pattern.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .linalg import Block, BlockSystem, DirectSolver, SparseMatrix, symmetric_part_cholesky_ok
from .timegrid import MultirateMesh, PiecewiseConstantTimeFn, transfer_weights

log = logging.getLogger(__name__)


@dataclass
class SubproblemOperators:
    """Spatial data of one subproblem.

    ``fields`` splits the state vector into named consecutive pieces.
    ``load(t)`` returns the full right-hand side vector and
    ``dirichlet(t)`` the values at ``constrained`` dofs; either may be
    ``None`` for zero data.
    """

    mass: sp.csr_matrix
    operator: sp.csr_matrix
    constrained: np.ndarray
    fields: Tuple[Tuple[str, int], ...]
    load: Optional[Callable[[float], np.ndarray]] = None
    dirichlet: Optional[Callable[[float], np.ndarray]] = None

    @property
    def size(self) -> int:
        return self.mass.shape[0]


@dataclass
class CoupledOperators:
    sub: Tuple[SubproblemOperators, SubproblemOperators]
    coupling: Tuple[sp.csr_matrix, sp.csr_matrix]  # C_12 (n1 x n2), C_21 (n2 x n1)


@dataclass
class _Factored:
    free: np.ndarray
    fixed: np.ndarray
    A_ff: DirectSolver
    A_fc: sp.csr_matrix


class MacroStepper:
    """Builds and solves macro-step systems, caching one LU per pattern.

    The cache key is the macro step length (rounded) and ``(N_1, N_2)``.
    With ``check_coercivity`` every assembled matrix, rows scaled by their
    micro step length, is tested for a positive definite symmetric part in
    the unknowns of ``coercive_fields`` (all free unknowns when ``None``).
    """

    def __init__(self, ops: CoupledOperators, check_coercivity: bool = False,
                 coercive_fields: Optional[Sequence[str]] = None):
        self.ops = ops
        self.check_coercivity = check_coercivity
        self.coercive_fields = coercive_fields
        self._cache: Dict[tuple, _Factored] = {}
        self.coercivity_checks: List[bool] = []

    # -- structure
    def _key(self, mesh: MultirateMesh, n: int) -> tuple:
        k = float(mesh.macro_steps[n])
        return (round(k, 13), mesh.counts(1)[n], mesh.counts(2)[n])

    def blocks(self, mesh: MultirateMesh, n: int) -> List[Block]:
        out = []
        for j, sub in ((1, self.ops.sub[0]), (2, self.ops.sub[1])):
            for m in range(1, mesh.counts(j)[n] + 1):
                out += [Block(j, m, name, size) for name, size in sub.fields]
        return out

    def matrix(self, mesh: MultirateMesh, n: int) -> sp.csr_matrix:
        """Macro-step matrix before Dirichlet elimination."""
        counts = (mesh.counts(1)[n], mesh.counts(2)[n])
        K = float(mesh.macro_steps[n])
        diag = []
        for j in (0, 1):
            sub, N = self.ops.sub[j], counts[j]
            k = K / N
            M = sub.mass / k
            shift = sp.eye(N, k=-1, format="csr")
            D = sp.kron(sp.eye(N), M + sub.operator) - sp.kron(shift, M)
            diag.append(D)
        W12 = sp.csr_matrix(transfer_weights(mesh, n, 1, 2))
        W21 = sp.csr_matrix(transfer_weights(mesh, n, 2, 1))
        off12 = sp.kron(W12, self.ops.coupling[0])
        off21 = sp.kron(W21, self.ops.coupling[1])
        return sp.bmat([[diag[0], off12], [off21, diag[1]]], format="csr")

    def _fixed_indices(self, mesh, n) -> np.ndarray:
        idx = []
        base = 0
        for j in (0, 1):
            sub = self.ops.sub[j]
            for _ in range(mesh.counts(j + 1)[n]):
                idx.append(base + sub.constrained)
                base += sub.size
        return np.concatenate(idx).astype(np.int64) if idx else np.zeros(0, dtype=np.int64)

    def _factored(self, mesh, n) -> _Factored:
        key = self._key(mesh, n)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        A = self.matrix(mesh, n)
        size = A.shape[0]
        fixed = self._fixed_indices(mesh, n)
        mask = np.ones(size, dtype=bool)
        mask[fixed] = False
        free = np.flatnonzero(mask)
        A_rows = A[free]
        A_ff = A_rows[:, free].tocsr()
        if self.check_coercivity:
            self.coercivity_checks.append(self._coercive(mesh, n, A_rows[:, free], free))
        fac = _Factored(free, fixed, DirectSolver(A_ff), A_rows[:, fixed].tocsr())
        self._cache[key] = fac
        log.debug("factored macro pattern %s: %d unknowns", key, free.size)
        return fac

    def row_weights(self, mesh: MultirateMesh, n: int) -> np.ndarray:
        """Micro step length of every row: the time weight of the space-time form."""
        K = float(mesh.macro_steps[n])
        w = [np.full(mesh.counts(j + 1)[n] * self.ops.sub[j].size, K / mesh.counts(j + 1)[n])
             for j in (0, 1)]
        return np.concatenate(w)

    def _coercive(self, mesh, n, A_ff, free) -> bool:
        # rows of a fine micro step count with its own length, so the
        # positivity argument applies to the k-weighted matrix
        A_ff = sp.diags(self.row_weights(mesh, n)[free]) @ A_ff
        if self.coercive_fields is None:
            return symmetric_part_cholesky_ok(A_ff)
        keep = np.zeros(self._offsets_total(mesh, n), dtype=bool)
        start = 0
        for b in self.blocks(mesh, n):
            if b.field in self.coercive_fields:
                keep[start:start + b.size] = True
            start += b.size
        sel = np.flatnonzero(keep[free])
        return symmetric_part_cholesky_ok(A_ff[sel][:, sel])

    def _offsets_total(self, mesh, n) -> int:
        return sum(mesh.counts(j + 1)[n] * self.ops.sub[j].size for j in (0, 1))

    # -- right-hand side
    def rhs(self, mesh: MultirateMesh, n: int, prev: Tuple[np.ndarray, np.ndarray]) -> np.ndarray:
        """Full right-hand side; constrained entries hold the Dirichlet values."""
        K = float(mesh.macro_steps[n])
        parts = []
        for j in (0, 1):
            sub = self.ops.sub[j]
            nodes = mesh.micro_nodes_in(j + 1, n)
            N = nodes.size - 1
            k = K / N
            for m in range(1, N + 1):
                t = float(nodes[m])
                b = np.zeros(sub.size) if sub.load is None else np.array(sub.load(t), dtype=float)
                if m == 1:
                    b = b + sub.mass @ prev[j] / k
                if sub.constrained.size:
                    b[sub.constrained] = 0.0 if sub.dirichlet is None else sub.dirichlet(t)
                parts.append(b)
        return np.concatenate(parts)

    def block_system(self, mesh: MultirateMesh, n: int,
                     prev: Tuple[np.ndarray, np.ndarray]) -> BlockSystem:
        """Macro-step system with Dirichlet rows replaced by identity rows."""
        A = self.matrix(mesh, n).tolil()
        fixed = self._fixed_indices(mesh, n)
        for i in fixed:
            A.rows[i] = [int(i)]
            A.data[i] = [1.0]
        return BlockSystem(self.blocks(mesh, n), SparseMatrix(A.tocsr()), self.rhs(mesh, n, prev))

    def solve_step(self, mesh: MultirateMesh, n: int, prev):
        """Micro-step states of both subproblems on macro step ``n``.

        Returns two arrays of shape ``(N_j, size_j)``.
        """
        fac = self._factored(mesh, n)
        b = self.rhs(mesh, n, prev)
        x = np.empty_like(b)
        xc = b[fac.fixed]
        x[fac.fixed] = xc
        x[fac.free] = fac.A_ff.solve(b[fac.free] - fac.A_fc @ xc)
        n1 = mesh.counts(1)[n] * self.ops.sub[0].size
        return (x[:n1].reshape(-1, self.ops.sub[0].size),
                x[n1:].reshape(-1, self.ops.sub[1].size))

    def march(self, mesh: MultirateMesh, initial: Tuple[np.ndarray, np.ndarray]):
        """Time-march all macro steps; returns two PiecewiseConstantTimeFn."""
        prev = tuple(np.asarray(v, dtype=float) for v in initial)
        out = ([], [])
        for n in range(mesh.n_macro):
            U1, U2 = self.solve_step(mesh, n, prev)
            out[0].append(U1)
            out[1].append(U2)
            prev = (U1[-1], U2[-1])
        return (PiecewiseConstantTimeFn(mesh, 1, np.vstack(out[0]), initial[0]),
                PiecewiseConstantTimeFn(mesh, 2, np.vstack(out[1]), initial[1]))


@dataclass(frozen=True)
class TransientTrajectory:
    """Piecewise-constant-in-time coefficient vectors of both subproblems.

    ``fields[j]`` lists ``(name, space)`` pairs splitting the payload of
    subproblem ``j + 1`` in order.
    """

    parts: Tuple[PiecewiseConstantTimeFn, PiecewiseConstantTimeFn]
    fields: Tuple[tuple, tuple]

    def __post_init__(self):
        for part, flds in zip(self.parts, self.fields):
            size = sum(space.ndofs for _, space in flds)
            if part.payload_shape != (size,):
                raise ValueError(f"payload shape {part.payload_shape} != ({size},)")

    @property
    def mesh(self) -> MultirateMesh:
        return self.parts[0].mesh

    @property
    def payload_count(self) -> int:
        return sum(len(p.values) for p in self.parts)

    def space(self, j: int, name: str):
        return dict(self.fields[j - 1])[name]

    def _slice(self, j: int, name: str) -> slice:
        start = 0
        for fname, space in self.fields[j - 1]:
            if fname == name:
                return slice(start, start + space.ndofs)
            start += space.ndofs
        raise KeyError(name)

    def field(self, j: int, name: str) -> PiecewiseConstantTimeFn:
        """Time function of one field of subproblem ``j``."""
        part = self.parts[j - 1]
        sl = self._slice(j, name)
        return PiecewiseConstantTimeFn(part.mesh, j, part.values[:, sl], part.initial[sl])

    def final(self, j: int, name: str) -> np.ndarray:
        return self.parts[j - 1].final[self._slice(j, name)]
