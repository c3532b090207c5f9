"""Error measurement, refinement schedules and rate tables."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, MeshMismatch
from .heat import HeatDiscretization, HeatProblem, manufactured_heat_1d
from .macrostep import TransientTrajectory
from .ode import fast_slow_problem, final_time_error, linear_test_problem, solve_multirate
from .spacefem import (InterfaceTrace, build_coupled_mesh_1d, error_sq_exact, mass_matrix,
                       stiffness_matrix)
from .stokes import StokesDiscretization, StokesProblem, two_pipe_benchmark
from .timegrid import (MultirateMesh, common_refinement, refine_subproblem, refine_uniform,
                       uniform_mesh)

log = logging.getLogger(__name__)

# Rates that cannot be formed (zero or negative errors) are stored as +inf
# and written as the string "inf"; the first level has no rate (None, "").
UNDEFINED_RATE = math.inf


def observed_rates(table) -> list:
    """``log2(E_i / E_{i+1})`` between consecutive levels.

    ``table`` holds either plain error values or ``(n_steps, E)`` pairs.
    """
    errs = [float(e[1]) if isinstance(e, (tuple, list)) else float(e) for e in table]
    if len(errs) < 2:
        raise ValueError("need at least two levels")
    out = []
    for a, b in zip(errs[:-1], errs[1:]):
        if a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b):
            out.append(math.log2(a / b))
        else:
            out.append(UNDEFINED_RATE)
    return out


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _parse(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        return float(text)


class RateTable:
    """Ordered error records plus observed rates between levels.

    ``rate_of`` maps each rate column to the quantity it is computed from;
    the rate stored on level ``i`` compares level ``i - 1`` with level ``i``.
    """

    def __init__(self, records: Sequence[Mapping], rate_of: Mapping[str, str],
                 columns: Optional[Sequence[str]] = None):
        self.rate_of = dict(rate_of)
        recs = [dict(r) for r in sorted(records, key=lambda r: r["level"])]
        for rcol, qcol in self.rate_of.items():
            if any(r.get(qcol) is None for r in recs):
                for r in recs:
                    r[rcol] = None
                continue
            if len(recs) >= 2:
                rates = observed_rates([r[qcol] for r in recs])
            else:
                rates = []
            recs[0][rcol] = None
            for r, rate in zip(recs[1:], rates):
                r[rcol] = rate
        self.records = recs
        if columns is None:
            columns = list(recs[0].keys()) if recs else []
        self.columns = tuple(columns)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> list:
        return [r.get(name) for r in self.records]

    def rates(self, rate_column: str) -> list:
        """Rates between consecutive levels (length ``len(self) - 1``)."""
        return self.column(rate_column)[1:]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.records:
            w.writerow([_fmt(r.get(c)) for c in self.columns])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @staticmethod
    def parse_csv(text: str) -> list:
        rows = list(csv.reader(io.StringIO(text)))
        head = rows[0]
        return [{k: _parse(v) for k, v in zip(head, row)} for row in rows[1:]]


STUDY_COLUMNS = ("level", "n_steps_1", "n_steps_2", "h", "velocity_sq_total",
                 "velocity_sq_sub1", "velocity_sq_sub2", "pressure_sq_total",
                 "pressure_sq_sub1", "pressure_sq_sub2", "rate_velocity", "rate_pressure")
STUDY_RATES = {"rate_velocity": "velocity_sq_total", "rate_pressure": "pressure_sq_total"}


@dataclass(frozen=True)
class ErrorRecord:
    """Squared error quantities of one refinement level.

    ``velocity_sq_total`` is the final-time ``L2`` error plus the time
    integral of the triple norm; it equals
    ``final_sq + velocity_sq_sub1 + velocity_sq_sub2 + penalty_sq``.
    Pressure entries are ``None`` when the problem has no pressure.
    """

    level: int
    n_steps_1: int
    n_steps_2: int
    k1: float
    k2: float
    h: float
    velocity_sq_total: float
    velocity_sq_sub1: float
    velocity_sq_sub2: float
    final_sq: float
    penalty_sq: float
    pressure_sq_total: Optional[float] = None
    pressure_sq_sub1: Optional[float] = None
    pressure_sq_sub2: Optional[float] = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{f.name}={v} must be finite and nonnegative")

    def as_row(self) -> dict:
        return asdict(self)


class _SideError:
    """Error data of one subproblem on the intervals of a common refinement."""

    def __init__(self, traj, truth, cmesh, j):
        self.j = j
        self.V = traj.space(j, "u")
        self.u = traj.field(j, "u")
        names = [n for n, _ in traj.fields[j - 1]]
        self.P = traj.space(j, "p") if "p" in names else None
        self.p = traj.field(j, "p") if self.P is not None else None
        self.trace = InterfaceTrace(cmesh, j, self.V, self.V.order + 1)
        self.truth = truth

    def _traces(self, E):
        return np.einsum("tpi,qic->tpqc", E[:, self.trace.dofs], self.trace.values)

    def against_reference(self, own, own_ref):
        """Errors ``u_h - u_ref`` on each common interval (both piecewise constant)."""
        ref = self.truth
        ref_space = ref.space(self.j, "u")
        if (ref_space.ndofs != self.V.ndofs
                or ref_space.mesh.to_dict() != self.V.mesh.to_dict()):
            raise MeshMismatch(f"subproblem {self.j}: reference lives on another spatial mesh")
        E = self.u.values[own] - ref.field(self.j, "u").values[own_ref]
        K = stiffness_matrix(self.V).to_scipy()
        grad = np.einsum("ti,it->t", E, K @ E.T)
        e_end = self.u.final - ref.final(self.j, "u")
        l2_end = float(e_end @ (mass_matrix(self.V) @ e_end))
        p_sq = None
        if self.P is not None:
            eta = self.p.values[own] - ref.field(self.j, "p").values[own_ref]
            MP = mass_matrix(self.P).to_scipy()
            p_sq = np.einsum("ti,it->t", eta, MP @ eta.T)
        return grad, p_sq, self._traces(E), l2_end

    def against_exact(self, own):
        """Errors ``u_h - u(t_m)`` with ``t_m`` the right end of the own micro interval."""
        nodes = self.u.nodes
        n_int = nodes.size - 1
        grad = np.empty(n_int)
        traces = []
        l2 = 0.0
        pts = self.trace.points
        for i in range(n_int):
            value, gradient = self.truth.at(self.j, float(nodes[i + 1]))
            uh = self.u.values[i]
            l2, grad[i] = error_sq_exact(self.V, uh, value, gradient)
            ex = np.asarray(value(pts.reshape(-1, pts.shape[-1])), dtype=float)
            traces.append(self.trace.evaluate(uh) - ex.reshape(pts.shape[0], pts.shape[1], -1))
        return grad[own], None, np.array(traces)[own], l2


def error_norms(traj: TransientTrajectory, truth, cmesh, nu, gamma: float,
                level: int = 0) -> ErrorRecord:
    """Squared errors of ``traj`` against a reference trajectory or an exact solution.

    Against a reference trajectory the error is the difference of the two
    piecewise-constant functions; time integrals run over the common
    refinement of the micro partitions and the reference partition, which
    is exact. Against an exact solution the discrete value on a micro
    interval is compared with the solution at the interval's right end.
    Final-time terms compare values at the horizon.
    """
    mesh = traj.mesh
    sets = [mesh.nodes(1), mesh.nodes(2)]
    is_ref = isinstance(truth, TransientTrajectory)
    if is_ref:
        if not np.isclose(truth.mesh.horizon, mesh.horizon, rtol=1e-14, atol=0.0):
            raise MeshMismatch("reference covers a different time interval")
        sets += [truth.mesh.nodes(1), truth.mesh.nodes(2)]
    merged, owners = common_refinement(*sets)
    lengths = np.diff(merged)
    sides = [_SideError(traj, truth, cmesh, j) for j in (1, 2)]
    results = [s.against_reference(owners[j], owners[2 + j]) if is_ref
               else s.against_exact(owners[j]) for j, s in enumerate(sides)]
    sub = [float(nu[j] ** 2 * lengths @ results[j][0]) for j in (0, 1)]
    final = float(results[0][3] + results[1][3])
    jump = results[1][2] - results[0][2]
    w = sides[0].trace.weights
    penalty = gamma / cmesh.h * float(lengths @ np.einsum("q,tpqc->t", w, jump ** 2))
    rec = dict(level=level, n_steps_1=mesh.n_micro(1), n_steps_2=mesh.n_micro(2),
               k1=mesh.max_step(1), k2=mesh.max_step(2), h=cmesh.h,
               velocity_sq_total=final + sub[0] + sub[1] + penalty,
               velocity_sq_sub1=sub[0], velocity_sq_sub2=sub[1],
               final_sq=final, penalty_sq=penalty)
    if results[0][1] is not None:
        pres = [float(lengths @ results[j][1]) for j in (0, 1)]
        rec.update(pressure_sq_total=pres[0] + pres[1], pressure_sq_sub1=pres[0],
                   pressure_sq_sub2=pres[1])
    return ErrorRecord(**rec)


def reference_solution(problem, cmesh, n_ref: int = 1024, order: Optional[int] = None,
                       discretization=None) -> TransientTrajectory:
    """Single-rate uniform solve with ``n_ref`` steps on the same spatial mesh."""
    if n_ref < 1 or n_ref & (n_ref - 1):
        raise ValueError(f"n_ref must be a power of two, got {n_ref}")
    disc = discretization if discretization is not None else _discretize(problem, cmesh, order)
    return disc.solve(uniform_mesh(n_ref, problem.horizon))


def _discretize(problem, cmesh, order=None):
    if isinstance(problem, StokesProblem):
        return StokesDiscretization(problem, cmesh)
    if isinstance(problem, HeatProblem):
        if order is None:
            raise ValueError("heat problems need a polynomial order")
        return HeatDiscretization(problem, cmesh, order)
    raise TypeError(f"unsupported problem type {type(problem).__name__}")


SCHEDULES = ("uniform", "refine_sub1_only", "refine_sub2_only")


def mesh_schedule(schedule: str, levels: int, initial_steps: int = 4,
                  horizon: float = 1.0, start: Optional[MultirateMesh] = None) -> list:
    """Time meshes of a refinement schedule, starting from a uniform mesh."""
    if schedule not in SCHEDULES:
        raise ConfigError(f"unknown schedule {schedule!r}; expected one of {SCHEDULES}")
    if levels < 1:
        raise ConfigError("levels must be >= 1")
    mesh = start if start is not None else uniform_mesh(initial_steps, horizon)
    out = [mesh]
    for _ in range(levels - 1):
        if schedule == "uniform":
            if start is None:
                mesh = uniform_mesh(mesh.n_macro * 2, horizon)
            else:
                mesh = refine_uniform(mesh)
        else:
            mesh = refine_subproblem(mesh, 1 if schedule == "refine_sub1_only" else 2)
        out.append(mesh)
    return out


def run_study(kind: str, schedule: str, config=None, progress=None):
    """Run a refinement study and return its :class:`RateTable`.

    ``config`` is a :class:`~multirate.config.StudyConfig` (defaults for
    ``kind`` and ``schedule`` when omitted). If ``config.output`` is set,
    ``study.csv`` and ``study.gp`` are written there.
    """
    from .config import StudyConfig

    if config is None:
        config = StudyConfig(kind=kind, schedule=schedule, levels=5)
    if kind != config.kind or schedule != config.schedule:
        config = config.replace(kind=kind, schedule=schedule)
    start = MultirateMesh.from_dict(config.time_mesh) if config.time_mesh else None
    meshes = mesh_schedule(schedule, config.levels, config.initial_steps, config.horizon, start)
    records = []
    if kind == "ode":
        problem = fast_slow_problem() if config.ode_problem == "fast_slow" else linear_test_problem()
        problem = replace(problem, horizon=config.horizon) if problem.horizon != config.horizon else problem
        for level, mesh in enumerate(meshes):
            sol = solve_multirate(problem, mesh)
            e1, e2 = final_time_error(sol, problem)
            records.append(dict(level=level, n_steps_1=mesh.n_micro(1), n_steps_2=mesh.n_micro(2),
                                h=None, velocity_sq_total=e1 ** 2 + e2 ** 2,
                                velocity_sq_sub1=e1 ** 2, velocity_sq_sub2=e2 ** 2,
                                pressure_sq_total=None, pressure_sq_sub1=None,
                                pressure_sq_sub2=None))
            _report(progress, records[-1])
    elif kind == "heat":
        problem, exact = manufactured_heat_1d(config.nu1, config.nu2)
        problem = replace(problem, gamma=config.gamma, horizon=config.horizon)
        cmesh = build_coupled_mesh_1d(0.5, 1.0 / config.space_m)
        disc = HeatDiscretization(problem, cmesh, config.order_r)
        for level, mesh in enumerate(meshes):
            rec = error_norms(disc.solve(mesh), exact, cmesh, problem.nu, disc.gamma, level)
            records.append(_row(rec))
            _report(progress, records[-1])
    elif kind == "stokes":
        problem, cmesh = two_pipe_benchmark(config.space_m, (config.nu1, config.nu2),
                                            config.gamma, config.order_r)
        problem = replace(problem, horizon=config.horizon)
        disc = StokesDiscretization(problem, cmesh)
        ref = reference_solution(problem, cmesh, config.n_ref, discretization=disc)
        for level, mesh in enumerate(meshes):
            rec = error_norms(disc.solve(mesh), ref, cmesh, problem.nu, problem.gamma_value, level)
            records.append(_row(rec))
            _report(progress, records[-1])
    else:
        raise ConfigError(f"unknown study kind {kind!r}")
    table = RateTable(records, STUDY_RATES, STUDY_COLUMNS)
    if config.output:
        write_study(table, config.output)
    return table


def _row(rec: ErrorRecord) -> dict:
    return {c: getattr(rec, c) for c in STUDY_COLUMNS if hasattr(rec, c)}


def _report(progress, row):
    if progress is not None:
        progress(row)
    log.info("level %d: n=(%d, %d) velocity_sq=%.6e pressure_sq=%s", row["level"],
             row["n_steps_1"], row["n_steps_2"], row["velocity_sq_total"],
             row["pressure_sq_total"])


GNUPLOT_TEMPLATE = """set datafile separator ','
set logscale xy
set key top right
set xlabel 'micro steps (subproblem 1)'
set ylabel 'squared error'
set terminal pngcairo size 900,600
set output '{stem}.png'
plot '{csv}' skip 1 using 2:5 with linespoints title 'velocity total', \\
     '' skip 1 using 2:6 with linespoints title 'velocity sub1', \\
     '' skip 1 using 2:7 with linespoints title 'velocity sub2'{pressure}
"""


def write_study(table: RateTable, directory, stem: str = "study") -> Path:
    """Write ``<stem>.csv`` and a companion gnuplot script into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{stem}.csv"
    table.to_csv(csv_path)
    has_p = any(v is not None for v in table.column("pressure_sq_total"))
    pressure = (", \\\n     '' skip 1 using 2:8 with linespoints title 'pressure total'"
                if has_p else "")
    (out / f"{stem}.gp").write_text(GNUPLOT_TEMPLATE.format(stem=stem, csv=csv_path.name,
                                                            pressure=pressure))
    return csv_path


def heat_space_study(order: int, cells: Sequence[int], n_steps: int, nu=(1.0, 1.0),
                     gamma: Optional[float] = None) -> RateTable:
    """Manufactured heat errors under spatial refinement at a fixed time mesh.

    ``cells[i]`` is the number of cells per unit length on level ``i``.
    """
    problem, exact = manufactured_heat_1d(*nu)
    problem = replace(problem, gamma=gamma)
    mesh = uniform_mesh(n_steps, problem.horizon)
    records = []
    for level, m in enumerate(cells):
        cmesh = build_coupled_mesh_1d(0.5, 1.0 / m)
        disc = HeatDiscretization(problem, cmesh, order)
        rec = error_norms(disc.solve(mesh), exact, cmesh, problem.nu, disc.gamma, level)
        records.append(_row(rec))
    return RateTable(records, STUDY_RATES, STUDY_COLUMNS)
