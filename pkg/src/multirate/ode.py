"""Multirate implicit Euler for two coupled ODE systems.

Each subproblem marches on its own micro partition; the opposite state
enters through the averaging transfer, so on every macro step the micro
values of both sides form one implicit system. It is solved by a damped
Picard iteration over all micro unknowns of the macro step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import IterationDiverged, MeshMismatch, MissingExact
from .timegrid import MultirateMesh, PiecewiseConstantTimeFn, transfer_weights

log = logging.getLogger(__name__)

RHS = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CoupledODEProblem:
    """``u1' = f1(t, u1, u2)``, ``u2' = f2(t, u1, u2)`` on ``[0, horizon]``."""

    f1: RHS
    f2: RHS
    horizon: float = 1.0
    dims: tuple = (1, 1)
    u0: Optional[tuple] = None
    exact: Optional[Callable[[float], tuple]] = None

    def initial_state(self):
        if self.u0 is None:
            return np.zeros(self.dims[0]), np.zeros(self.dims[1])
        a, b = self.u0
        return (np.asarray(a, dtype=float).reshape(self.dims[0]),
                np.asarray(b, dtype=float).reshape(self.dims[1]))


@dataclass(frozen=True)
class MultirateODESolution:
    u1: PiecewiseConstantTimeFn
    u2: PiecewiseConstantTimeFn
    iterations: tuple = field(default=())
    residuals: tuple = field(default=())


def _picard_macro_step(problem, t1, k1, t2, k2, w12, w21, start1, start2,
                       tol, max_iter, damping, n):
    U1 = np.tile(start1, (t1.size, 1))
    U2 = np.tile(start2, (t2.size, 1))
    res = np.inf
    # values need up to `window` sweeps to propagate through the micro steps
    window = t1.size + t2.size
    history = []
    for it in range(1, max_iter + 1):
        A1 = w12 @ U2
        A2 = w21 @ U1
        prev1 = np.vstack([start1[None], U1[:-1]])
        prev2 = np.vstack([start2[None], U2[:-1]])
        G1 = np.array([prev1[m] + k1[m] * np.asarray(problem.f1(t1[m], U1[m], A1[m]), dtype=float)
                       for m in range(t1.size)]).reshape(U1.shape)
        G2 = np.array([prev2[m] + k2[m] * np.asarray(problem.f2(t2[m], A2[m], U2[m]), dtype=float)
                       for m in range(t2.size)]).reshape(U2.shape)
        res = max(np.abs(G1 - U1).max(initial=0.0), np.abs(G2 - U2).max(initial=0.0))
        if not np.isfinite(res):
            break
        if res <= tol:
            return U1, U2, it, res
        history.append(res)
        if len(history) > window and res >= history[-1 - window]:
            # not contracting (k L >= 1 for the undamped map): damp harder
            damping *= 0.5
            history = []
        U1 = U1 + damping * (G1 - U1)
        U2 = U2 + damping * (G2 - U2)
    raise IterationDiverged(
        f"Picard iteration on macro step {n} did not converge: residual {res:.3e}",
        residual=res)


def solve_multirate(problem: CoupledODEProblem, mesh: MultirateMesh,
                    tol: float = 1e-12, max_iter: int = 1000,
                    damping: float = 1.0) -> MultirateODESolution:
    if not np.isclose(mesh.horizon, problem.horizon, rtol=1e-14, atol=0.0):
        raise MeshMismatch(
            f"mesh horizon {mesh.horizon} != problem horizon {problem.horizon}")
    s1, s2 = problem.initial_state()
    out1, out2, iters, resids = [], [], [], []
    for n in range(mesh.n_macro):
        nodes1 = mesh.micro_nodes_in(1, n)
        nodes2 = mesh.micro_nodes_in(2, n)
        U1, U2, it, res = _picard_macro_step(
            problem, nodes1[1:], np.diff(nodes1), nodes2[1:], np.diff(nodes2),
            transfer_weights(mesh, n, 1, 2), transfer_weights(mesh, n, 2, 1),
            s1, s2, tol, max_iter, damping, n)
        out1.append(U1)
        out2.append(U2)
        iters.append(it)
        resids.append(res)
        s1, s2 = U1[-1], U2[-1]
    u0 = problem.initial_state()
    return MultirateODESolution(
        PiecewiseConstantTimeFn(mesh, 1, np.vstack(out1), u0[0]),
        PiecewiseConstantTimeFn(mesh, 2, np.vstack(out2), u0[1]),
        tuple(iters), tuple(resids))


def final_time_error(sol: MultirateODESolution, problem: CoupledODEProblem):
    """Euclidean errors ``(|u1^k(T) - u1(T)|, |u2^k(T) - u2(T)|)``."""
    if problem.exact is None:
        raise MissingExact("problem has no exact solution")
    ex1, ex2 = problem.exact(sol.u1.mesh.horizon)
    e1 = float(np.linalg.norm(sol.u1.final - np.asarray(ex1, dtype=float)))
    e2 = float(np.linalg.norm(sol.u2.final - np.asarray(ex2, dtype=float)))
    return e1, e2


ODE_COLUMNS = ("level", "k1", "k2", "k", "e1", "e2", "rate_e1", "rate_e2")


def ode_convergence_study(problem: CoupledODEProblem,
                          schedule: Sequence[MultirateMesh], tol: float = 1e-12):
    from .study import RateTable

    if not schedule:
        raise ValueError("mesh schedule is empty")
    records = []
    for level, mesh in enumerate(schedule):
        sol = solve_multirate(problem, mesh, tol=tol)
        e1, e2 = final_time_error(sol, problem)
        k1, k2 = mesh.max_step(1), mesh.max_step(2)
        records.append({"level": level, "k1": k1, "k2": k2, "k": max(k1, k2),
                        "e1": e1, "e2": e2})
        log.info("ode level %d: k1=%.4g k2=%.4g e1=%.4e e2=%.4e", level, k1, k2, e1, e2)
    return RateTable(records, rate_of={"rate_e1": "e1", "rate_e2": "e2"},
                     columns=ODE_COLUMNS)


def linear_test_problem() -> CoupledODEProblem:
    """Exchange problem ``u1' = u2 - u1``, ``u2' = u1 - u2``, ``u(0) = (1, 0)``."""

    def exact(t):
        d = np.exp(-2.0 * t)
        return np.array([0.5 * (1 + d)]), np.array([0.5 * (1 - d)])

    return CoupledODEProblem(
        f1=lambda t, u1, u2: u2 - u1,
        f2=lambda t, u1, u2: u1 - u2,
        horizon=1.0, u0=(np.array([1.0]), np.array([0.0])), exact=exact)


def fast_slow_problem(frequency: float = 20.0, coupling: float = 0.05,
                      decay: float = 1.0) -> CoupledODEProblem:
    """Manufactured pair with a fast first and a slow second component.

    Exact solution ``u1 = sin(frequency t)``, ``u2 = sin(t)``; the coupling
    terms vanish on the exact solution.
    """
    w, c, lam = frequency, coupling, decay

    def f1(t, u1, u2):
        return w * np.cos(w * t) - lam * (u1 - np.sin(w * t)) + c * (u2 - np.sin(t))

    def f2(t, u1, u2):
        return np.cos(t) - lam * (u2 - np.sin(t)) + c * (u1 - np.sin(w * t))

    def exact(t):
        return np.array([np.sin(w * t)]), np.array([np.sin(t)])

    return CoupledODEProblem(f1=f1, f2=f2, horizon=1.0, exact=exact)
