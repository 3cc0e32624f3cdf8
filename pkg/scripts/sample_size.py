"""Efficient vs plug-in training at n in {500, 2000, 8000}, Gamma* = Gamma = 7."""

from _common import parse, run

from robust_policy import experiments as ex

if __name__ == "__main__":
    args = parse(__doc__, "results/sample_size")
    run(ex.sample_size_grid(seeds=range(args.seeds), output=args.out), args.workers)
