"""Multirate implicit Euler on the coupled ODE pairs: order and localization."""
import argparse

from multirate.ode import fast_slow_problem, linear_test_problem, ode_convergence_study
from multirate.study import mesh_schedule


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problem", choices=("linear", "fast_slow"), default="linear")
    ap.add_argument("--schedule", default="uniform",
                    choices=("uniform", "refine_sub1_only", "refine_sub2_only"))
    ap.add_argument("--levels", type=int, default=5)
    ap.add_argument("--initial-steps", type=int, default=8)
    args = ap.parse_args()
    problem = fast_slow_problem() if args.problem == "fast_slow" else linear_test_problem()
    table = ode_convergence_study(problem, mesh_schedule(args.schedule, args.levels,
                                                         args.initial_steps))
    print(table.to_csv(), end="")


if __name__ == "__main__":
    main()
