"""Nitsche-coupled heat equations with multirate implicit Euler.

The unknown is scalar; a vector-valued heat problem decouples into
independent scalar copies, so nothing is lost.

Interface terms use the nonsymmetric Nitsche variant: with ``G_j`` the
flux ``nu_j d/dn_j`` and ``[u] = u_1 - u_2``, subproblem ``j`` is tested
with

    -1/2 <G_j u_j - G_l I u_l, phi_j> + 1/2 <G_j phi_j, u_j - I u_l>
        + gamma/h <u_j - I u_l, phi_j>

where ``I`` averages the opposite state onto the own micro partition. The
consistency and symmetry terms cancel in the symmetric part, which is
then positive for any ``gamma > 0``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .linalg import BlockSystem
from .macrostep import CoupledOperators, MacroStepper, SubproblemOperators, TransientTrajectory
from .spacefem import (CoupledMesh, FESpace, InterfaceTrace, interface_matrix, load_vector,
                       mass_matrix, stiffness_matrix)
from .timegrid import MultirateMesh

SpaceTimeFn = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class HeatProblem:
    """Two heat equations coupled across an interface.

    ``sources[j]`` and ``dirichlet[j]`` are ``f(X, t)`` with ``X`` of shape
    ``(n, dim)``; ``None`` means zero. ``gamma=None`` selects the default
    ``10 * max(nu) * r**2``.
    """

    nu: Tuple[float, float] = (1.0, 1.0)
    sources: Tuple[Optional[SpaceTimeFn], Optional[SpaceTimeFn]] = (None, None)
    dirichlet: Tuple[Optional[SpaceTimeFn], Optional[SpaceTimeFn]] = (None, None)
    initial: Tuple[Optional[Callable], Optional[Callable]] = (None, None)
    gamma: Optional[float] = None
    horizon: float = 1.0

    def __post_init__(self):
        if min(self.nu) <= 0:
            raise ConfigError(f"diffusivities must be positive, got {self.nu}")
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigError(f"Nitsche parameter must be positive, got {self.gamma}")

    def gamma_for(self, order: int) -> float:
        return self.gamma if self.gamma is not None else 10.0 * max(self.nu) * order ** 2


def nitsche_blocks(cmesh: CoupledMesh, traces, fluxes, gamma: float):
    """Interface blocks ``(B11, B12, B21, B22)`` from traces and fluxes.

    ``traces[j]`` is an :class:`InterfaceTrace` and ``fluxes[j]`` the flux
    of its basis, ``(nq, nloc, ncomp)``. Block ``Bab`` acts on the state
    of ``b`` tested with functions of ``a``.
    """
    g = gamma / cmesh.h
    X = {}
    Y = {}
    for a in (0, 1):
        for b in (0, 1):
            X[a, b] = interface_matrix(traces[a], traces[b], traces[a].values, fluxes[b]).to_scipy()
            Y[a, b] = interface_matrix(traces[a], traces[b], traces[a].values,
                                       traces[b].values).to_scipy()
    B11 = -0.5 * X[0, 0] + 0.5 * X[0, 0].T + g * Y[0, 0]
    B12 = 0.5 * X[0, 1] - 0.5 * X[1, 0].T - g * Y[0, 1]
    B21 = 0.5 * X[1, 0] - 0.5 * X[0, 1].T - g * Y[1, 0]
    B22 = -0.5 * X[1, 1] + 0.5 * X[1, 1].T + g * Y[1, 1]
    return [sp.csr_matrix(B) for B in (B11, B12, B21, B22)]


class HeatDiscretization:
    """Spaces, operators and the cached macro-step solver of a heat problem."""

    def __init__(self, problem: HeatProblem, cmesh: CoupledMesh, order: int,
                 check_coercivity: bool = False):
        self.problem, self.cmesh, self.order = problem, cmesh, order
        self.spaces = tuple(FESpace(m, order, 1, ("dirichlet",)) for m in cmesh.meshes)
        self.gamma = problem.gamma_for(order)
        traces = [InterfaceTrace(cmesh, j + 1, s, order + 1) for j, s in enumerate(self.spaces)]
        fluxes = [nu * t.normal_derivative() for nu, t in zip(problem.nu, traces)]
        B11, B12, B21, B22 = nitsche_blocks(cmesh, traces, fluxes, self.gamma)
        subs = []
        for j, (space, Bjj) in enumerate(zip(self.spaces, (B11, B22))):
            A = problem.nu[j] * stiffness_matrix(space).to_scipy() + Bjj
            subs.append(SubproblemOperators(
                mass=mass_matrix(space).to_scipy(), operator=A.tocsr(),
                constrained=space.constrained_dofs, fields=(("u", space.ndofs),),
                load=self._load(j), dirichlet=self._dirichlet(j)))
        self.operators = CoupledOperators(tuple(subs), (B12, B21))
        self.stepper = MacroStepper(self.operators, check_coercivity=check_coercivity)

    def _load(self, j):
        f = self.problem.sources[j]
        if f is None:
            return None
        space = self.spaces[j]
        return lambda t: load_vector(space, lambda X: f(X, t))

    def _dirichlet(self, j):
        g = self.problem.dirichlet[j]
        if g is None:
            return None
        space = self.spaces[j]
        X = space.node_coords[space.constrained_dofs]
        return lambda t: np.asarray(g(X, t), dtype=float).reshape(-1)

    def initial_state(self):
        out = []
        for space, u0 in zip(self.spaces, self.problem.initial):
            out.append(np.zeros(space.ndofs) if u0 is None else space.interpolate(u0))
        return tuple(out)

    def solve(self, tmesh: MultirateMesh) -> TransientTrajectory:
        _check_horizon(tmesh, self.problem.horizon)
        parts = self.stepper.march(tmesh, self.initial_state())
        return TransientTrajectory(parts, tuple((("u", s),) for s in self.spaces))


def _check_horizon(tmesh, horizon):
    from .errors import MeshMismatch
    if not np.isclose(tmesh.horizon, horizon, rtol=1e-14, atol=0.0):
        raise MeshMismatch(f"time mesh horizon {tmesh.horizon} != problem horizon {horizon}")


def assemble_heat_macro_step(problem: HeatProblem, cmesh: CoupledMesh, order: int,
                             tmesh: MultirateMesh, n: int, prev=None) -> BlockSystem:
    """Block system of macro step ``n`` given the end state ``prev`` of step ``n - 1``."""
    disc = HeatDiscretization(problem, cmesh, order)
    if prev is None:
        prev = disc.initial_state()
    return disc.stepper.block_system(tmesh, n, prev)


def solve_heat_transient(problem: HeatProblem, cmesh: CoupledMesh, order: int,
                         tmesh: MultirateMesh, check_coercivity: bool = False) -> TransientTrajectory:
    return HeatDiscretization(problem, cmesh, order, check_coercivity).solve(tmesh)


@dataclass(frozen=True)
class ManufacturedSolution:
    """Exact field per subdomain: ``value[j](X, t)`` and ``grad[j](X, t)``."""

    value: tuple
    grad: tuple

    def at(self, j: int, t: float):
        """Space-only handles of subdomain ``j`` at time ``t``."""
        return (lambda X: self.value[j - 1](X, t)), (lambda X: self.grad[j - 1](X, t))


def manufactured_heat_1d(nu1: float = 1.0, nu2: float = 1.0, fast_frequency: Optional[float] = None,
                         fast_amplitude: float = 1.0):
    """Piecewise cubic solution on ``(0, 1/2) | (1/2, 1)`` times ``sin(pi t)``.

    Both value and flux match at ``x = 1/2``. With ``fast_frequency`` the
    first subdomain gets an extra ``A sin(w t) x (1/2 - x)^2``, which has
    zero value and slope at the interface, so the coupling conditions hold.
    """
    if nu1 <= 0 or nu2 <= 0:
        raise ConfigError("diffusivities must be positive")
    c1 = -(nu2 + 5.0 * nu1) / (4.0 * (nu1 + nu2))
    c2 = -c1 - 1.5
    pi = np.pi
    w = fast_frequency
    A = fast_amplitude if w is not None else 0.0

    def g(t):
        return np.sin(pi * t)

    def dg(t):
        return pi * np.cos(pi * t)

    def fast(t):
        return (np.sin(w * t), w * np.cos(w * t)) if w is not None else (0.0, 0.0)

    def u1(X, t):
        x = X[:, 0]
        return g(t) * nu2 * x * (c1 + x ** 2) + A * fast(t)[0] * x * (0.5 - x) ** 2

    def du1(X, t):
        x = X[:, 0]
        d = g(t) * nu2 * (c1 + 3 * x ** 2) + A * fast(t)[0] * (0.5 - x) * (0.5 - 3 * x)
        return d[:, None]

    def u2(X, t):
        y = 1.0 - X[:, 0]
        return g(t) * nu1 * y * (c2 + y ** 2)

    def du2(X, t):
        y = 1.0 - X[:, 0]
        return (-g(t) * nu1 * (c2 + 3 * y ** 2))[:, None]

    def f1(X, t):
        x = X[:, 0]
        s, ds = fast(t)
        slow = dg(t) * nu2 * x * (c1 + x ** 2) - nu1 * 6.0 * nu2 * x * g(t)
        # w'' for w = x (1/2 - x)^2 is 6x - 2
        return slow + A * (ds * x * (0.5 - x) ** 2 - nu1 * s * (6.0 * x - 2.0))

    def f2(X, t):
        y = 1.0 - X[:, 0]
        return dg(t) * nu1 * y * (c2 + y ** 2) - nu2 * 6.0 * nu1 * y * g(t)

    problem = HeatProblem(nu=(nu1, nu2), sources=(f1, f2))
    return problem, ManufacturedSolution((u1, u2), (du1, du2))


def fast_slow_heat_1d(frequency: float = 40.0, nu=(1.0, 1.0), amplitude: float = 20.0,
                      slow_amplitude: Optional[float] = None):
    """Fast mode ``A sin(w t) x (1/2 - x)^2`` in the first subdomain and a
    slow mode ``A sin(pi t) (x - 1/2)^2 (1 - x)`` in the second.

    Value and flux vanish at ``x = 1/2``, so only discretization errors
    cross the interface.
    """
    nu1, nu2 = nu
    w, A, pi = frequency, amplitude, np.pi
    B = amplitude if slow_amplitude is None else slow_amplitude

    def u1(X, t):
        x = X[:, 0]
        return A * np.sin(w * t) * x * (0.5 - x) ** 2

    def du1(X, t):
        x = X[:, 0]
        return (A * np.sin(w * t) * (0.5 - x) * (0.5 - 3 * x))[:, None]

    def u2(X, t):
        s = X[:, 0] - 0.5
        return B * np.sin(pi * t) * s ** 2 * (0.5 - s)

    def du2(X, t):
        s = X[:, 0] - 0.5
        return (B * np.sin(pi * t) * (s - 3 * s ** 2))[:, None]

    def f1(X, t):
        x = X[:, 0]
        return A * (w * np.cos(w * t) * x * (0.5 - x) ** 2 - nu1 * np.sin(w * t) * (6 * x - 2))

    def f2(X, t):
        s = X[:, 0] - 0.5
        return B * (pi * np.cos(pi * t) * s ** 2 * (0.5 - s) - nu2 * np.sin(pi * t) * (1 - 6 * s))

    problem = HeatProblem(nu=(nu1, nu2), sources=(f1, f2))
    return problem, ManufacturedSolution((u1, u2), (du1, du2))
