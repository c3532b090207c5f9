"""Two-rate hierarchical time meshes and the dG(0) time operators.

A :class:`MultirateMesh` is a macro partition ``0 = t^0 < ... < t^N = T``
where each macro step ``I^n = (t^{n-1}, t^n]`` is split uniformly into
``N_1^n`` micro steps for subproblem 1 and ``N_2^n`` for subproblem 2, with
at most one of the two counts larger than one.

Macro indices are zero based throughout: ``n = 0`` is the first step.
Subproblems are addressed as ``1`` and ``2``; the string ``"macro"`` names
the coarse partition made of the macro steps themselves.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import CannotPromote, ConstraintViolation, InvalidMesh, MeshMismatch

MACRO = "macro"
Partition = Union[int, str]


def _other(j: int) -> int:
    if j not in (1, 2):
        raise ValueError(f"subproblem must be 1 or 2, got {j!r}")
    return 3 - j


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class MultirateMesh:
    """Validated macro partition with per-subproblem uniform micro counts.

    Instances are immutable; all derived quantities are computed on demand
    from ``macro_nodes`` and ``micro_counts``.
    """

    __slots__ = ("macro_nodes", "micro_counts")

    def __init__(self, macro_nodes, micro_counts):
        nodes = np.array(macro_nodes, dtype=float).reshape(-1)
        counts = np.array(micro_counts, dtype=np.int64)
        if nodes.size < 2:
            raise InvalidMesh("need at least two macro nodes")
        if not np.all(np.isfinite(nodes)):
            raise InvalidMesh("macro nodes must be finite")
        if nodes[0] != 0.0:
            raise InvalidMesh(f"first macro node must be 0, got {nodes[0]!r}")
        if np.any(np.diff(nodes) <= 0):
            raise InvalidMesh("macro nodes must be strictly increasing")
        counts = counts.reshape(-1, 2) if counts.size else counts.reshape(0, 2)
        if counts.shape[0] != nodes.size - 1:
            raise InvalidMesh(
                f"{nodes.size - 1} macro steps but {counts.shape[0]} count pairs")
        if np.any(counts < 1):
            raise InvalidMesh("micro counts must be >= 1")
        both = np.flatnonzero(counts.min(axis=1) > 1)
        if both.size:
            n = int(both[0])
            raise ConstraintViolation(
                f"macro step {n} refines both subproblems: counts {tuple(counts[n])}")
        object.__setattr__(self, "macro_nodes", _readonly(nodes))
        object.__setattr__(self, "micro_counts", _readonly(counts))

    def __setattr__(self, name, value):
        raise AttributeError("MultirateMesh is immutable")

    def __eq__(self, other):
        if not isinstance(other, MultirateMesh):
            return NotImplemented
        return (np.array_equal(self.macro_nodes, other.macro_nodes)
                and np.array_equal(self.micro_counts, other.micro_counts))

    def __hash__(self):
        return hash((self.macro_nodes.tobytes(), self.micro_counts.tobytes()))

    def __repr__(self):
        return (f"MultirateMesh(n_macro={self.n_macro}, T={self.horizon!r}, "
                f"n_micro=({self.n_micro(1)}, {self.n_micro(2)}))")

    @property
    def n_macro(self) -> int:
        return self.macro_nodes.size - 1

    @property
    def horizon(self) -> float:
        return float(self.macro_nodes[-1])

    @property
    def macro_steps(self) -> np.ndarray:
        return np.diff(self.macro_nodes)

    def counts(self, which: Partition) -> np.ndarray:
        """Micro counts per macro step for ``which`` (1, 2 or ``"macro"``)."""
        if which == MACRO:
            return np.ones(self.n_macro, dtype=np.int64)
        if which not in (1, 2):
            raise ValueError(f"unknown partition {which!r}; expected 1, 2 or 'macro'")
        return self.micro_counts[:, which - 1]

    def n_micro(self, which: Partition) -> int:
        return int(self.counts(which).sum())

    def offsets(self, which: Partition) -> np.ndarray:
        """Index of the first micro interval of each macro step (length N+1)."""
        return np.concatenate([[0], np.cumsum(self.counts(which))])

    def nodes(self, which: Partition) -> np.ndarray:
        """All micro nodes of a partition, ``t = 0`` included."""
        out = [self.macro_nodes[:1]]
        for n, c in enumerate(self.counts(which)):
            t0, t1 = self.macro_nodes[n], self.macro_nodes[n + 1]
            inner = t0 + (t1 - t0) * (np.arange(1, c) / c)
            out.append(inner)
            out.append([t1])
        return np.concatenate(out)

    def steps(self, which: Partition) -> np.ndarray:
        return np.diff(self.nodes(which))

    def max_step(self, which: Partition) -> float:
        return float(self.steps(which).max())

    def macro_of(self, which: Partition) -> np.ndarray:
        """Macro index owning each micro interval."""
        return np.repeat(np.arange(self.n_macro), self.counts(which))

    def micro_nodes_in(self, which: Partition, n: int) -> np.ndarray:
        """Nodes ``t_j^{n,0..N_j^n}`` of macro step ``n``."""
        c = int(self.counts(which)[n])
        t0, t1 = self.macro_nodes[n], self.macro_nodes[n + 1]
        inner = t0 + (t1 - t0) * (np.arange(1, c) / c)
        return np.concatenate([[t0], inner, [t1]])

    def to_dict(self) -> dict:
        return {"macro_nodes": [float(t) for t in self.macro_nodes],
                "micro_counts": [[int(a), int(b)] for a, b in self.micro_counts]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "MultirateMesh":
        try:
            return cls(data["macro_nodes"], data["micro_counts"])
        except KeyError as exc:
            raise InvalidMesh(f"missing key {exc.args[0]!r}") from None

    @classmethod
    def from_json(cls, text: str) -> "MultirateMesh":
        return cls.from_dict(json.loads(text))


def build_mesh(macro_nodes: Sequence[float],
               micro_counts: Sequence[Sequence[int]]) -> MultirateMesh:
    return MultirateMesh(macro_nodes, micro_counts)


def uniform_mesh(n_steps: int, horizon: float = 1.0) -> MultirateMesh:
    """Single-rate mesh with ``n_steps`` equal macro steps."""
    if n_steps < 1:
        raise InvalidMesh("n_steps must be >= 1")
    nodes = horizon * (np.arange(n_steps + 1) / n_steps)
    return MultirateMesh(nodes, np.ones((n_steps, 2), dtype=np.int64))


def refine_micro(mesh: MultirateMesh, j: int, n: int) -> MultirateMesh:
    """Bisect the micro steps of subproblem ``j`` on macro step ``n``.

    When the opposite subproblem is already refined on that step, the macro
    step itself is split at its midpoint instead, which keeps ``min = 1``.
    """
    jh = _other(j)
    if not 0 <= n < mesh.n_macro:
        raise IndexError(f"macro index {n} out of range [0, {mesh.n_macro})")
    counts = mesh.micro_counts.copy()
    nj, njh = int(counts[n, j - 1]), int(counts[n, jh - 1])
    if njh == 1:
        counts[n, j - 1] = 2 * nj
        return MultirateMesh(mesh.macro_nodes, counts)
    if njh % 2:
        raise CannotPromote(
            f"subproblem {jh} has odd count {njh} on macro step {n}")
    t0, t1 = mesh.macro_nodes[n], mesh.macro_nodes[n + 1]
    mid = t0 + (t1 - t0) * 0.5
    nodes = np.concatenate([mesh.macro_nodes[:n + 1], [mid], mesh.macro_nodes[n + 1:]])
    pair = np.empty(2, dtype=np.int64)
    pair[j - 1] = 1
    pair[jh - 1] = njh // 2
    counts = np.concatenate([counts[:n], [pair, pair], counts[n + 1:]])
    return MultirateMesh(nodes, counts)


def refine_subproblem(mesh: MultirateMesh, j: int) -> MultirateMesh:
    """Apply :func:`refine_micro` for ``j`` on every macro step."""
    for n in reversed(range(mesh.n_macro)):
        mesh = refine_micro(mesh, j, n)
    return mesh


def refine_uniform(mesh: MultirateMesh) -> MultirateMesh:
    """Split every macro step in half, keeping the micro counts per step."""
    mids = 0.5 * (mesh.macro_nodes[:-1] + mesh.macro_nodes[1:])
    nodes = np.empty(2 * mesh.n_macro + 1)
    nodes[0::2] = mesh.macro_nodes
    nodes[1::2] = mids
    return MultirateMesh(nodes, np.repeat(mesh.micro_counts, 2, axis=0))


@dataclass(frozen=True, eq=False)
class PiecewiseConstantTimeFn:
    """A dG(0) function in time on one partition of a multirate mesh.

    ``values[i]`` is the payload on the i-th micro interval (left-open,
    right-closed); ``initial`` is the payload at ``t = 0``.
    """

    mesh: MultirateMesh
    subproblem: Partition
    values: np.ndarray
    initial: np.ndarray = field(default=None)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        n_int = self.mesh.n_micro(self.subproblem)
        if vals.ndim == 0 or vals.shape[0] != n_int:
            raise MeshMismatch(
                f"expected {n_int} interval values, got shape {vals.shape}")
        init = (np.zeros(vals.shape[1:]) if self.initial is None
                else np.array(self.initial, dtype=float))
        if init.shape != vals.shape[1:]:
            raise MeshMismatch(
                f"initial payload shape {init.shape} != {vals.shape[1:]}")
        object.__setattr__(self, "values", _readonly(vals))
        object.__setattr__(self, "initial", _readonly(init))

    @property
    def nodes(self) -> np.ndarray:
        return self.mesh.nodes(self.subproblem)

    @property
    def payload_shape(self) -> tuple:
        return self.values.shape[1:]

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def __call__(self, t: float) -> np.ndarray:
        if t == 0.0:
            return self.initial
        nodes = self.nodes
        if t < 0.0 or t > nodes[-1]:
            raise ValueError(f"t={t!r} outside [0, {nodes[-1]!r}]")
        i = int(np.searchsorted(nodes, t, side="left")) - 1
        return self.values[max(i, 0)]

    def integral(self) -> np.ndarray:
        """Exact time integral over ``[0, T]``."""
        steps = self.mesh.steps(self.subproblem)
        return np.tensordot(steps, self.values, axes=(0, 0))


def transfer_weights(mesh: MultirateMesh, n: int, target: Partition,
                     source: Partition) -> np.ndarray:
    """Overlap-averaging matrix ``W`` of macro step ``n``.

    ``W[a, b]`` is the fraction of target micro interval ``a`` covered by
    source micro interval ``b``; rows sum to one. Overlaps are computed in
    integer units of ``1/lcm`` so that full coverage is exactly ``1.0``.
    """
    nt = int(mesh.counts(target)[n])
    ns = int(mesh.counts(source)[n])
    units = math.lcm(nt, ns)
    lt, ls = units // nt, units // ns
    w = np.zeros((nt, ns))
    for a in range(nt):
        lo, hi = a * lt, (a + 1) * lt
        for b in range(lo // ls, (hi - 1) // ls + 1):
            overlap = min(hi, (b + 1) * ls) - max(lo, b * ls)
            w[a, b] = overlap / lt
    return w


def _transfer(g: PiecewiseConstantTimeFn, target: Partition) -> PiecewiseConstantTimeFn:
    mesh = g.mesh
    if g.subproblem == target:
        return g
    out = np.empty((mesh.n_micro(target),) + g.payload_shape)
    ot, os_ = mesh.offsets(target), mesh.offsets(g.subproblem)
    for n in range(mesh.n_macro):
        w = transfer_weights(mesh, n, target, g.subproblem)
        src = g.values[os_[n]:os_[n + 1]]
        for a in range(w.shape[0]):
            nz = np.flatnonzero(w[a])
            if all(np.array_equal(src[nz[0]], src[b]) for b in nz[1:]):
                # keeps functions already in the target space bit-identical
                out[ot[n] + a] = src[nz[0]]
                continue
            acc = w[a, nz[0]] * src[nz[0]]
            for b in nz[1:]:
                acc = acc + w[a, b] * src[b]
            out[ot[n] + a] = acc
    return PiecewiseConstantTimeFn(mesh, target, out, g.initial)


def transfer_average(g: PiecewiseConstantTimeFn, mesh: MultirateMesh,
                     j: int) -> PiecewiseConstantTimeFn:
    """Average ``g`` (living on the opposite subproblem) onto subproblem ``j``."""
    if g.mesh != mesh:
        raise MeshMismatch("function lives on a different time mesh")
    _other(j)
    return _transfer(g, j)


def endpoint_projection(f: Callable[[float], object], mesh: MultirateMesh,
                        j: Partition) -> PiecewiseConstantTimeFn:
    """Right-endpoint evaluation onto partition ``j`` (implicit Euler)."""
    nodes = mesh.nodes(j)
    vals = np.array([np.asarray(f(t), dtype=float) for t in nodes[1:]])
    return PiecewiseConstantTimeFn(mesh, j, vals, np.asarray(f(nodes[0]), dtype=float))


def macro_average(f, mesh: MultirateMesh, quad_points: int = 5) -> PiecewiseConstantTimeFn:
    """Mean value of ``f`` over every macro step.

    Piecewise-constant inputs are averaged exactly; callables use a Gauss
    rule with ``quad_points`` nodes per macro step.
    """
    if isinstance(f, PiecewiseConstantTimeFn):
        if f.mesh != mesh:
            raise MeshMismatch("function lives on a different time mesh")
        return _transfer(f, MACRO)
    x, w = np.polynomial.legendre.leggauss(quad_points)
    vals = []
    for n in range(mesh.n_macro):
        t0, t1 = mesh.macro_nodes[n], mesh.macro_nodes[n + 1]
        ts = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * x
        samples = np.array([np.asarray(f(t), dtype=float) for t in ts])
        vals.append(0.5 * np.tensordot(w, samples, axes=(0, 0)))
    return PiecewiseConstantTimeFn(mesh, MACRO, np.array(vals), np.asarray(f(0.0), dtype=float))


def discrete_time_derivative(u: PiecewiseConstantTimeFn) -> PiecewiseConstantTimeFn:
    """Backward difference quotient on each micro interval of ``u``."""
    prev = np.concatenate([u.initial[None], u.values[:-1]])
    steps = u.mesh.steps(u.subproblem).reshape((-1,) + (1,) * len(u.payload_shape))
    return PiecewiseConstantTimeFn(u.mesh, u.subproblem, (u.values - prev) / steps,
                                   np.zeros(u.payload_shape))


def common_refinement(*node_sets: np.ndarray):
    """Merge partitions of ``[0, T]``.

    Returns the merged nodes and, for every input, the index of the input
    interval containing each merged interval.
    """
    merged = np.unique(np.concatenate(node_sets))
    scale = max(abs(merged[-1]), 1.0)
    keep = np.concatenate([[True], np.diff(merged) > 1e-13 * scale])
    merged = merged[keep]
    mids = 0.5 * (merged[:-1] + merged[1:])
    owners = [np.searchsorted(nodes, mids, side="left") - 1 for nodes in node_sets]
    return merged, owners
