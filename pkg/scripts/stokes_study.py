"""Two-pipe Stokes study against a fine-step reference."""
import argparse
import logging

from multirate.config import StudyConfig
from multirate.study import run_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--schedule", default="uniform",
                    choices=("uniform", "refine_sub1_only", "refine_sub2_only"))
    ap.add_argument("--levels", type=int, default=5)
    ap.add_argument("--m", type=int, default=8, help="cells per unit length")
    ap.add_argument("--n-ref", type=int, default=1024)
    ap.add_argument("--gamma", type=float, default=None)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    cfg = StudyConfig(kind="stokes", schedule=args.schedule, levels=args.levels,
                      space_m=args.m, n_ref=args.n_ref, gamma=args.gamma, output=args.out)
    print(run_study("stokes", args.schedule, cfg).to_csv(), end="")


if __name__ == "__main__":
    main()
