"""Per-subdomain errors when only one pipe is refined, over a range of penalties.

Shows where the error sits when the other pipe keeps its coarse steps.
"""
import argparse

from multirate.stokes import StokesDiscretization, two_pipe_benchmark
from multirate.study import error_norms, mesh_schedule, reference_solution


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--schedule", default="refine_sub2_only")
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--m", type=int, default=8)
    ap.add_argument("--n-ref", type=int, default=256)
    ap.add_argument("--gammas", type=float, nargs="+", default=[100.0, 4480.0, 1e5])
    args = ap.parse_args()
    print("gamma,level,n_steps_1,n_steps_2,sub1,sub2,penalty,total")
    for g in args.gammas:
        problem, cm = two_pipe_benchmark(args.m, gamma=g)
        disc = StokesDiscretization(problem, cm)
        ref = reference_solution(problem, cm, args.n_ref, discretization=disc)
        for i, mesh in enumerate(mesh_schedule(args.schedule, args.levels, 4)):
            r = error_norms(disc.solve(mesh), ref, cm, problem.nu, g, i)
            print(f"{g:g},{i},{r.n_steps_1},{r.n_steps_2},{r.velocity_sq_sub1:.4e},"
                  f"{r.velocity_sq_sub2:.4e},{r.penalty_sq:.4e},{r.velocity_sq_total:.4e}")


if __name__ == "__main__":
    main()
