"""Mean true regret vs uniform for Gamma* = Gamma in {1, 5, 7, 10}: efficient vs DR."""

from _common import parse, run

from robust_policy import experiments as ex

if __name__ == "__main__":
    args = parse(__doc__, "results/confounding")
    run(ex.confounding_grid(seeds=range(args.seeds), output=args.out), args.workers)
