"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict (printed at the end of the session
and to stdout) before asserting, so a failing criterion still reports the
measured numbers.
"""
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings

from multirate.config import StudyConfig
from multirate.heat import HeatDiscretization, manufactured_heat_1d
from multirate.ode import (fast_slow_problem, final_time_error, linear_test_problem,
                           solve_multirate)
from multirate.spacefem import build_coupled_mesh_1d
from multirate.stokes import StokesDiscretization, two_pipe_benchmark
from multirate.study import (error_norms, heat_space_study, mesh_schedule, observed_rates,
                             reference_solution, run_study)
from multirate.timegrid import build_mesh, refine_subproblem, refine_uniform, uniform_mesh

import oracles
from conftest import mesh_and_payload
from test_projection_identities import check_average_zero, check_idempotence, check_telescoping

VERDICTS = {}


def verdict(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}"
    VERDICTS[n] = line
    print(line)
    return ok


def fmt(values):
    return "[" + ", ".join(f"{v:.4g}" for v in values) + "]"


def mean_rate(values):
    return math.log2(values[0] / values[-1]) / (len(values) - 1)


# ----------------------------------------------------------------- 1

def test_criterion_1_projection_identities():
    start = time.perf_counter()
    count = [0]

    @settings(max_examples=200, deadline=None, derandomize=True, database=None)
    @given(mesh_and_payload())
    def run(case):
        count[0] += 1
        check_average_zero(*case)
        check_idempotence(*case)
        check_telescoping(*case)

    failure = None
    try:
        run()
    except AssertionError as exc:  # hypothesis re-raises the minimal failing case
        failure = exc
    elapsed = time.perf_counter() - start
    ok = failure is None and count[0] >= 200 and elapsed < 5.0
    verdict(1, ok, f"{count[0]} random meshes, average-zero/idempotence/telescoping "
                   f"{'hold' if failure is None else 'violated'}, {elapsed:.2f}s (< 5s)")
    assert ok, failure


# ----------------------------------------------------------------- 2

def test_criterion_2_ode_order_and_localization():
    start = time.perf_counter()
    p = linear_test_problem()
    mesh = uniform_mesh(8)
    errs = []
    for _ in range(5):
        errs.append(sum(final_time_error(solve_multirate(p, mesh), p)))
        mesh = refine_uniform(mesh)
    rates = observed_rates(errs)
    order_ok = all(abs(r - 1.0) <= 0.15 for r in rates)

    q = fast_slow_problem()
    mesh = uniform_mesh(8)
    e1, e2 = [], []
    for _ in range(4):
        a, b = final_time_error(solve_multirate(q, mesh), q)
        e1.append(a)
        e2.append(b)
        mesh = refine_subproblem(mesh, 1)
    reduction = e1[0] / e1[-1]
    slow_change = max(e2) / min(e2)
    elapsed = time.perf_counter() - start
    ok = order_ok and reduction >= 6.0 and slow_change < 2.0 and elapsed < 10.0
    verdict(2, ok, f"linear rates {fmt(rates)} (1.0 +- 0.15); fast error reduced {reduction:.1f}x "
                   f"(>= 6), slow error changed {slow_change:.2f}x (< 2); {elapsed:.1f}s")
    assert ok


# ----------------------------------------------------------------- 3

def test_criterion_3_heat_rates_and_coercivity():
    start = time.perf_counter()
    problem, exact = manufactured_heat_1d()
    cm = build_coupled_mesh_1d(0.5, 1 / 128)
    disc = HeatDiscretization(problem, cm, 1, check_coercivity=True)
    k_err = [error_norms(disc.solve(m), exact, cm, problem.nu, disc.gamma).velocity_sq_total
             for m in mesh_schedule("uniform", 4, 4)]
    k_rates = observed_rates(k_err)
    k_ok = all(abs(r - 2.0) <= 0.3 for r in k_rates)

    h_ok = True
    h_info = []
    for r, cells, n_steps in ((1, (4, 8, 16, 32), 256), (2, (2, 4, 8, 16), 1024)):
        table = heat_space_study(r, cells, n_steps)
        rates = table.rates("rate_velocity")
        h_ok &= all(abs(x - 2 * r) <= 0.4 for x in rates)
        h_info.append(f"r={r} {fmt(rates)}")

    # coercivity on single-rate and multirate macro steps, both orders
    checks = list(disc.stepper.coercivity_checks)
    for r in (1, 2):
        d = HeatDiscretization(problem, build_coupled_mesh_1d(0.5, 1 / 32), r,
                               check_coercivity=True)
        d.solve(build_mesh([0, 0.25, 0.5, 0.75, 1.0], [(1, 1), (4, 1), (1, 8), (2, 1)]))
        checks += d.stepper.coercivity_checks
    coercive = bool(checks) and all(checks)
    elapsed = time.perf_counter() - start
    ok = k_ok and h_ok and coercive and elapsed < 60.0
    verdict(3, ok, f"k-halving rates {fmt(k_rates)} (2.0 +- 0.3); h-halving {'; '.join(h_info)} "
                   f"(2r +- 0.4); coercive on {sum(checks)}/{len(checks)} macro patterns; "
                   f"{elapsed:.1f}s")
    assert ok


# ----------------------------------------------------------------- 4

def test_criterion_4_single_rate_oracles():
    start = time.perf_counter()
    worst = 0.0
    for nu, r, n_cells in (((1.0, 1.0), 1, 16), ((1.0, 4.0), 2, 8)):
        problem, _ = manufactured_heat_1d(*nu)
        cm = build_coupled_mesh_1d(0.5, 0.5 / n_cells)
        traj = HeatDiscretization(problem, cm, r).solve(uniform_mesh(12))
        x1, U1, x2, U2 = oracles.heat_1d(nu, problem.sources, n_cells, r, problem.gamma_for(r), 12)
        for j, (x, U) in enumerate([(x1, U1), (x2, U2)]):
            px = traj.space(j + 1, "u").node_coords[:, 0]
            perm = np.array([int(np.argmin(np.abs(x - v))) for v in px])
            worst = max(worst, np.abs(traj.parts[j].values - U[:, perm]).max())
    problem, cm = two_pipe_benchmark(2)
    d = StokesDiscretization(problem, cm)
    traj = d.solve(uniform_mesh(6))
    ref = oracles.stokes_two_pipe(problem.nu, 2, problem.gamma_value, 6)
    for j, (vx, px, U) in enumerate(ref):
        key = lambda X: [tuple(np.round(p, 9)) for p in X]
        wv = {k: i for i, k in enumerate(key(vx))}
        wp = {k: i for i, k in enumerate(key(px))}
        pv = np.array([wv[k] for k in key(d.vspaces[j].node_coords)])
        pp = np.array([wp[k] for k in key(d.pspaces[j].node_coords)])
        cols = np.concatenate([pv, pv + len(vx), 2 * len(vx) + pp])
        worst = max(worst, np.abs(traj.parts[j].values - U[:, cols]).max())
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 60.0
    verdict(4, ok, f"max deviation from independent oracles {worst:.2e} (<= 1e-9); {elapsed:.1f}s")
    assert ok


# ----------------------------------------------------------- 5 to 7

@pytest.fixture(scope="module")
def pipe():
    start = time.perf_counter()
    problem, cm = two_pipe_benchmark(8)
    disc = StokesDiscretization(problem, cm)
    ref = reference_solution(problem, cm, 1024, discretization=disc)
    return dict(problem=problem, cm=cm, disc=disc, ref=ref, setup=time.perf_counter() - start)


def pipe_study(pipe, schedule):
    p = pipe["problem"]
    return [error_norms(pipe["disc"].solve(m), pipe["ref"], pipe["cm"], p.nu, p.gamma_value, i)
            for i, m in enumerate(mesh_schedule(schedule, 5, 4))]


@pytest.fixture(scope="module")
def uniform_records(pipe):
    start = time.perf_counter()
    recs = pipe_study(pipe, "uniform")
    return recs, time.perf_counter() - start + pipe["setup"]


def test_criterion_5_stokes_uniform(uniform_records):
    recs, elapsed = uniform_records
    v = [r.velocity_sq_total for r in recs]
    p = [r.pressure_sq_total for r in recs]
    rv, rp = observed_rates(v), observed_rates(p)
    ok = (all(abs(x - 2.0) <= 0.25 for x in rv) and all(abs(x - 2.0) <= 0.3 for x in rp)
          and elapsed < 900)
    verdict(5, ok, f"velocity {fmt(v)} rates {fmt(rv)} (2.0 +- 0.25); pressure {fmt(p)} "
                   f"rates {fmt(rp)} (2.0 +- 0.3); {elapsed:.1f}s")
    assert ok


def test_criterion_6_decoupling(pipe, uniform_records):
    start = time.perf_counter()
    water = pipe_study(pipe, "refine_sub1_only")
    oil = pipe_study(pipe, "refine_sub2_only")
    uni = uniform_records[0]
    total_w = [r.velocity_sq_total for r in water]
    change = max(abs(b / a - 1.0) for a, b in zip(total_w[:-1], total_w[1:]))
    grad_w = [r.velocity_sq_sub1 for r in water]
    rate_w = mean_rate(grad_w)
    total_o = [r.velocity_sq_total for r in oil]
    rate_o = mean_rate(total_o)
    p_asym, p_uni = water[-1].pressure_sq_sub1, uni[-1].pressure_sq_sub1
    elapsed = time.perf_counter() - start + pipe["setup"]
    parts = {
        "water total change < 1%/level": change < 0.01,
        "water gradient rate 2.0 +- 0.3": abs(rate_w - 2.0) <= 0.3,
        "oil total rate 2.0 +- 0.25": abs(rate_o - 2.0) <= 0.25,
        "water pressure asym >= 2x uniform": p_asym >= 2.0 * p_uni,
        "runtime < 20 min": elapsed < 1200,
    }
    ok = all(parts.values())
    failed = [k for k, v in parts.items() if not v]
    verdict(6, ok, f"water total {fmt(total_w)} (max change {100 * change:.2f}%); water gradient "
                   f"{fmt(grad_w)} mean rate {rate_w:.2f}; oil total {fmt(total_o)} mean rate "
                   f"{rate_o:.2f}; water pressure at 64 steps {p_asym:.4g} vs uniform "
                   f"{p_uni:.4g}; {elapsed:.1f}s" + (f"; failing: {', '.join(failed)}"
                                                     if failed else ""))
    assert ok, failed


def test_criterion_7_determinism(tmp_path):
    cfg = StudyConfig(kind="stokes", schedule="uniform", levels=5, space_m=8, n_ref=1024)
    first = run_study("stokes", "uniform", cfg.replace(output=str(tmp_path / "a")))
    second = run_study("stokes", "uniform", cfg.replace(output=str(tmp_path / "b")))
    a = (tmp_path / "a" / "study.csv").read_bytes()
    b = (tmp_path / "b" / "study.csv").read_bytes()
    ok = a == b and len(first) == len(second) == 5
    verdict(7, ok, f"two runs of the uniform two-pipe study: CSV {len(a)} bytes, "
                   f"{'byte-identical' if a == b else 'DIFFERENT'}")
    assert ok
