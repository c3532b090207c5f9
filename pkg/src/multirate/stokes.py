"""Nitsche-coupled time-dependent Stokes flow with multirate implicit Euler.

Taylor-Hood pairs (velocity order ``r``, pressure ``r - 1``) on each
subdomain. Velocity interface terms mirror the heat coupling with the
viscous traction ``2 nu eps(u) n`` as flux. The pressure part of the
traction enters the momentum rows as ``+1/2 <p_j, n_j . phi_j>`` and
``-1/2 <I p_l, n_l . phi_j>``; the continuity rows carry the negative
transpose, so the pressure coupling is skew and drops out of the energy.
Outflow boundaries are left natural (do-nothing), which fixes the
pressure level.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .heat import _check_horizon, nitsche_blocks
from .linalg import BlockSystem
from .macrostep import CoupledOperators, MacroStepper, SubproblemOperators, TransientTrajectory
from .spacefem import (CoupledMesh, FEFunction, FESpace, InterfaceTrace, build_two_pipe_mesh,
                       divergence_matrix, interface_matrix, load_vector, mass_matrix,
                       strain_matrix)
from .timegrid import MultirateMesh

VectorFn = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class StokesProblem:
    """Two Stokes flows coupled across an interface.

    ``inflow[j](X, t)`` returns velocities ``(n, 2)`` prescribed on facets
    tagged ``inflow``; facets tagged ``dirichlet`` are no-slip and
    ``outflow`` facets are natural. ``gamma=None`` selects
    ``10 * 2 * max(nu) * r**2``.
    """

    nu: Tuple[float, float] = (1.0, 56.0)
    forces: Tuple[Optional[VectorFn], Optional[VectorFn]] = (None, None)
    inflow: Tuple[Optional[VectorFn], Optional[VectorFn]] = (None, None)
    gamma: Optional[float] = None
    order: int = 2
    horizon: float = 1.0

    def __post_init__(self):
        if min(self.nu) <= 0:
            raise ConfigError(f"viscosities must be positive, got {self.nu}")
        if self.order < 2:
            raise ConfigError("Taylor-Hood pairs need velocity order >= 2")
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigError(f"Nitsche parameter must be positive, got {self.gamma}")

    @property
    def gamma_value(self) -> float:
        if self.gamma is not None:
            return self.gamma
        return 10.0 * 2.0 * max(self.nu) * self.order ** 2


@dataclass(frozen=True)
class StokesState:
    velocity: Tuple[FEFunction, FEFunction]
    pressure: Tuple[FEFunction, FEFunction]


def _normal_dot(trace: InterfaceTrace, normal) -> np.ndarray:
    return np.einsum("qic,c->qi", trace.values, normal)[:, :, None]


class StokesDiscretization:
    """Spaces, operators and cached macro-step solver of a Stokes problem."""

    def __init__(self, problem: StokesProblem, cmesh: CoupledMesh,
                 check_coercivity: bool = False):
        if cmesh.dim != 2:
            raise ConfigError("Stokes flow needs a 2D coupled mesh")
        r = problem.order
        self.problem, self.cmesh = problem, cmesh
        self.vspaces = tuple(FESpace(m, r, 2, ("dirichlet", "inflow")) for m in cmesh.meshes)
        self.pspaces = tuple(FESpace(m, r - 1, 1) for m in cmesh.meshes)
        nq = r + 1
        vt = [InterfaceTrace(cmesh, j + 1, s, nq) for j, s in enumerate(self.vspaces)]
        pt = [InterfaceTrace(cmesh, j + 1, s, nq) for j, s in enumerate(self.pspaces)]
        fluxes = [2.0 * nu * t.strain_normal() for nu, t in zip(problem.nu, vt)]
        B11, B12, B21, B22 = nitsche_blocks(cmesh, vt, fluxes, problem.gamma_value)
        # Pn[a, b]: velocity test of a, pressure trial of b, normal of b
        Pn = {(a, b): interface_matrix(vt[a], pt[b], _normal_dot(vt[a], pt[b].normal),
                                       pt[b].values).to_scipy()
              for a in (0, 1) for b in (0, 1)}
        subs = []
        for j, Bjj in ((0, B11), (1, B22)):
            V, Q = self.vspaces[j], self.pspaces[j]
            K = 2.0 * problem.nu[j] * strain_matrix(V).to_scipy() + Bjj
            D = divergence_matrix(Q, V).to_scipy()
            A = sp.bmat([[K, -D.T + 0.5 * Pn[j, j]],
                         [D - 0.5 * Pn[j, j].T, None]], format="csr")
            M = sp.bmat([[mass_matrix(V).to_scipy(), None],
                         [None, sp.csr_matrix((Q.ndofs, Q.ndofs))]], format="csr")
            subs.append(SubproblemOperators(
                mass=M, operator=A, constrained=V.constrained_dofs,
                fields=(("u", V.ndofs), ("p", Q.ndofs)),
                load=self._load(j), dirichlet=self._dirichlet(j)))
        C12 = sp.bmat([[B12, -0.5 * Pn[0, 1]], [0.5 * Pn[1, 0].T, None]], format="csr")
        C21 = sp.bmat([[B21, -0.5 * Pn[1, 0]], [0.5 * Pn[0, 1].T, None]], format="csr")
        self.operators = CoupledOperators(tuple(subs), (C12, C21))
        self.stepper = MacroStepper(self.operators, check_coercivity=check_coercivity,
                                    coercive_fields=("u",))

    def _load(self, j):
        f = self.problem.forces[j]
        if f is None:
            return None
        V, Q = self.vspaces[j], self.pspaces[j]
        return lambda t: np.concatenate([load_vector(V, lambda X: f(X, t)), np.zeros(Q.ndofs)])

    def _dirichlet(self, j):
        g = self.problem.inflow[j]
        V = self.vspaces[j]
        if g is None:
            return None
        nodes = V.tagged_nodes("inflow")
        X = V.node_coords[nodes]
        pos = {int(d): i for i, d in enumerate(V.constrained_dofs)}
        # inflow nodes shared with no-slip facets stay at zero
        wall = set(V.tagged_nodes("dirichlet").tolist())
        keep = np.array([int(a) not in wall for a in nodes], dtype=bool)
        idx = np.concatenate([[pos[int(a) + c * V.n_nodes] for a in nodes] for c in (0, 1)])

        def values(t):
            out = np.zeros(V.constrained_dofs.size)
            vel = np.asarray(g(X, t), dtype=float).reshape(-1, 2)
            vel = vel * keep[:, None]
            out[idx] = np.concatenate([vel[:, 0], vel[:, 1]])
            return out

        return values

    def initial_state(self):
        return tuple(np.zeros(V.ndofs + Q.ndofs) for V, Q in zip(self.vspaces, self.pspaces))

    def fields(self):
        return tuple((("u", V), ("p", Q)) for V, Q in zip(self.vspaces, self.pspaces))

    def solve(self, tmesh: MultirateMesh) -> TransientTrajectory:
        _check_horizon(tmesh, self.problem.horizon)
        parts = self.stepper.march(tmesh, self.initial_state())
        return TransientTrajectory(parts, self.fields())

    def state(self, traj: TransientTrajectory, t: float) -> StokesState:
        vel, pre = [], []
        for j in (1, 2):
            x = traj.parts[j - 1](t)
            V, Q = self.vspaces[j - 1], self.pspaces[j - 1]
            vel.append(FEFunction(V, x[:V.ndofs]))
            pre.append(FEFunction(Q, x[V.ndofs:]))
        return StokesState(tuple(vel), tuple(pre))


def assemble_stokes_macro_step(problem: StokesProblem, cmesh: CoupledMesh,
                               tmesh: MultirateMesh, n: int, prev=None) -> BlockSystem:
    disc = StokesDiscretization(problem, cmesh)
    if prev is None:
        prev = disc.initial_state()
    return disc.stepper.block_system(tmesh, n, prev)


def solve_stokes_transient(problem: StokesProblem, cmesh: CoupledMesh,
                           tmesh: MultirateMesh, check_coercivity: bool = False) -> TransientTrajectory:
    return StokesDiscretization(problem, cmesh, check_coercivity).solve(tmesh)


def two_pipe_inflow(j: int) -> VectorFn:
    """Parabolic inflow ``sin(pi t) y (1 - y)`` (upper) or ``sin(pi t) y (1 + y)`` (lower)."""
    def upper(X, t):
        y = X[:, 1]
        return np.column_stack([np.sin(np.pi * t) * y * (1.0 - y), np.zeros_like(y)])

    def lower(X, t):
        y = X[:, 1]
        return np.column_stack([np.sin(np.pi * t) * y * (1.0 + y), np.zeros_like(y)])

    return upper if j == 1 else lower


def two_pipe_benchmark(m: int = 8, nu=(1.0, 56.0), gamma: Optional[float] = None,
                       order: int = 2):
    """Water (upper pipe) over oil (lower pipe), driven by the inflows only.

    Returns the problem and its coupled mesh with cells of size ``1/m``.
    """
    problem = StokesProblem(nu=tuple(nu), inflow=(two_pipe_inflow(1), two_pipe_inflow(2)),
                            gamma=gamma, order=order)
    return problem, build_two_pipe_mesh(m)
