"""Manufactured heat studies: time refinement, space refinement and localization."""
import argparse

from multirate.config import StudyConfig
from multirate.heat import HeatDiscretization, fast_slow_heat_1d
from multirate.spacefem import build_coupled_mesh_1d
from multirate.study import error_norms, heat_space_study, mesh_schedule, run_study


def localization(levels):
    problem, exact = fast_slow_heat_1d(40.0, nu=(0.01, 0.01), amplitude=5.0, slow_amplitude=20.0)
    cm = build_coupled_mesh_1d(0.5, 1 / 32)
    disc = HeatDiscretization(problem, cm, 2)
    print("level,n_steps_1,n_steps_2,err_sub1,err_sub2")
    for i, m in enumerate(mesh_schedule("refine_sub1_only", levels, 16)):
        r = error_norms(disc.solve(m), exact, cm, problem.nu, disc.gamma, i)
        print(f"{i},{r.n_steps_1},{r.n_steps_2},{r.velocity_sq_sub1:.6e},{r.velocity_sq_sub2:.6e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("mode", choices=("time", "space", "localization"))
    ap.add_argument("--schedule", default="uniform")
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--order", type=int, default=1)
    ap.add_argument("--space-m", type=int, default=128)
    ap.add_argument("--n-steps", type=int, default=256, help="time steps of the space study")
    ap.add_argument("--out", default=None, help="directory for study.csv and study.gp")
    args = ap.parse_args()
    if args.mode == "time":
        cfg = StudyConfig(kind="heat", schedule=args.schedule, levels=args.levels,
                          order_r=args.order, space_m=args.space_m, output=args.out)
        print(run_study("heat", args.schedule, cfg).to_csv(), end="")
    elif args.mode == "space":
        cells = [2 ** (i + 2) for i in range(args.levels)]
        print(heat_space_study(args.order, cells, args.n_steps).to_csv(), end="")
    else:
        localization(args.levels)


if __name__ == "__main__":
    main()
