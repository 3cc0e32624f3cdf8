"""Data at Gamma* = 7, policies trained with Gamma in {2, 7, 20, 100}: efficient vs DR."""

from _common import parse, run

from robust_policy import experiments as ex

if __name__ == "__main__":
    args = parse(__doc__, "results/misspecification")
    run(ex.misspecification_grid(seeds=range(args.seeds), output=args.out), args.workers)
