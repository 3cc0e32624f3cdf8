"""Command-line front end: ``robust-policy <command> [flags]``.

Commands: simulate, train, evaluate, sweep, calibrate, certify.

Every command accepts ``--config FILE`` with ``key = value`` lines (``#``
starts a comment). Keys are flag names with or without the leading dashes;
flags given on the command line win over the file, the file wins over
defaults.

Exit codes: 0 success, 2 argument error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import dgp, experiments
from .bounds import ESTIMATORS, BoundReport, NotExplainedError, calibrate_gamma, regret_bound, value_estimate
from .core import DataError, LearnerConfig, NumericalError, RunConfig, load_csv, save_csv, split
from .learn import no_harm_check, prepare, train
from .nuisance import FitError, SensitivitySpec, assemble, fit_propensity
from .policy import Policy, UniformPolicy, load_policy, save_policy

EXIT_OK, EXIT_ARGS, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class ArgumentError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part[1:]:  # inclusive range such as 0-9
            lo, hi = part[0] + part[1:].split("-", 1)[0], part[1:].split("-", 1)[1]
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return tuple(out)


def _words(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


# ---------------------------------------------------------------------------
# parser

def _add_run_flags(p: argparse.ArgumentParser, *, training: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rho", type=float, default=0.5, help="nuisance-fold fraction")
    p.add_argument("--gamma", type=float, default=1.0, help="sensitivity parameter")
    p.add_argument("--learner", choices=("linear", "spline", "mlp"), default="mlp")
    p.add_argument("--learner-hidden", type=_ints, default=(64, 64, 32))
    p.add_argument("--learner-lr", type=float, default=1e-3)
    p.add_argument("--learner-epochs", type=int, default=300)
    p.add_argument("--learner-batch-size", type=int, default=64)
    p.add_argument("--eps-clip", type=float, default=0.01)
    p.add_argument("--d-a", type=int, default=2, help="number of treatments in the CSV")
    p.add_argument("--quantile-term", choices=("orthogonal", "flipped"), default="orthogonal",
                   help="sign of the efficient estimator's quantile correction")
    if training:
        p.add_argument("--lr", type=float, default=1e-3)
        p.add_argument("--iterations", type=int, default=300)
        p.add_argument("--policy", choices=("linear", "mlp", "spline"), default="linear")
        p.add_argument("--policy-hidden", type=_ints, default=(64, 64, 32))
        p.add_argument("--policy-knots", type=int, default=8, help="knots per covariate (spline policy)")
        p.add_argument("--optimizer", choices=("gd", "adam"), default="gd")
        p.add_argument("--restarts", type=int, default=1, help="keep the best of this many starts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-policy",
                                     description="Confounding-robust policy learning under the MSM.")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value file; flags override it")
        return p

    p = command("simulate", "draw a synthetic confounded dataset")
    p.add_argument("--gamma-star", type=float, required=True)
    p.add_argument("--n", type=int, default=8000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--hidden-out", help="also write u,y0,y1 for every row")

    p = command("train", "learn a policy against an estimated bound")
    p.add_argument("--data", required=True)
    p.add_argument("--estimator", choices=ESTIMATORS, default="efficient")
    p.add_argument("--objective", choices=("value", "regret"), default="value")
    p.add_argument("--baseline", default="uniform", help="policy file or 'uniform' (regret mode)")
    _add_run_flags(p)
    p.add_argument("--out", required=True, help="policy file")
    p.add_argument("--trace", help="trace CSV (default: <out>.trace.csv)")
    p.add_argument("--fit-report", help="write the nuisance fit report here")

    p = command("evaluate", "estimate the value or regret bound of a policy")
    p.add_argument("--data", required=True)
    p.add_argument("--policy-file", default="uniform", help="policy file or 'uniform'")
    p.add_argument("--estimator", choices=ESTIMATORS, default="efficient")
    p.add_argument("--objective", choices=("value", "regret"), default="value")
    p.add_argument("--side", choices=("upper", "lower"), default="upper")
    p.add_argument("--baseline", default="uniform")
    p.add_argument("--ground-truth", type=_bool, nargs="?", const=True, default=False,
                   help="append true_value,true_regret from the synthetic benchmark")
    _add_run_flags(p, training=False)
    p.add_argument("--out", help="CSV path (default: stdout)")

    p = command("sweep", "run a synthetic study grid")
    p.add_argument("--design", choices=("confounding", "misspecification", "sample_size", "custom"),
                   default="custom")
    p.add_argument("--name", default=None)
    p.add_argument("--gamma-star", type=_floats, default=None)
    p.add_argument("--gamma", type=_floats, default=None, help="omit to use gamma = gamma_star")
    p.add_argument("--n", type=_ints, default=None)
    p.add_argument("--seeds", type=_ints, default=None, help="e.g. 0-9 or 0,3,5")
    p.add_argument("--estimators", type=_words, default=None)
    p.add_argument("--objective", choices=("value", "regret"), default="value")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--lr", type=float, default=experiments.STUDY_RUN.lr)
    p.add_argument("--iterations", type=int, default=experiments.STUDY_RUN.iterations)
    p.add_argument("--policy", choices=("linear", "mlp", "spline"), default=experiments.STUDY_RUN.policy)
    p.add_argument("--policy-hidden", type=_ints, default=experiments.STUDY_RUN.policy_hidden)
    p.add_argument("--policy-knots", type=int, default=experiments.STUDY_RUN.policy_knots)
    p.add_argument("--optimizer", choices=("gd", "adam"), default=experiments.STUDY_RUN.optimizer)
    p.add_argument("--restarts", type=int, default=experiments.STUDY_RUN.restarts)
    p.add_argument("--out", required=True, help="output directory")

    p = command("calibrate", "smallest gamma whose interval contains zero")
    p.add_argument("--data", required=True)
    p.add_argument("--policy-file", default="uniform")
    p.add_argument("--baseline", default=None, help="policy file or 'uniform'; omit for the value")
    p.add_argument("--estimator", choices=ESTIMATORS, default="efficient")
    p.add_argument("--gamma-max", type=float, default=100.0)
    p.add_argument("--tol", type=float, default=1e-3)
    _add_run_flags(p, training=False)
    p.add_argument("--out", help="interval trace CSV")

    p = command("certify", "regret bound with its high-probability slack")
    p.add_argument("--data", required=True)
    p.add_argument("--policy-file", required=True)
    p.add_argument("--baseline", default="uniform")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--c-y", type=float, default=None, help="outcome bound (default max |y|)")
    p.add_argument("--r-n", type=float, default=None, help="complexity term (default n^-1/2)")
    _add_run_flags(p, training=False)
    p.add_argument("--out", help="key=value report path (default: stdout)")
    return parser


# ---------------------------------------------------------------------------
# config files

def read_config(path: str | Path) -> dict[str, str]:
    out = {}
    for k, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ArgumentError(f"{path}:{k}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    # the config file can supply required flags, so read it before the full parse
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    early, _ = pre.parse_known_args(argv)
    subs = parser._subparsers._group_actions[0].choices  # noqa: SLF001
    if early.config and early.command in subs:
        try:
            values = read_config(early.config)
        except OSError as exc:
            raise ArgumentError(f"cannot read config: {exc}") from exc
        sub = subs[early.command]
        known = {a.dest for a in sub._actions}  # noqa: SLF001
        unknown = sorted(set(values) - known - {"config"})
        if unknown:
            raise ArgumentError(f"unknown config keys: {', '.join(unknown)}")
        # string defaults go through each action's type converter
        sub.set_defaults(**values)
        for action in sub._actions:  # noqa: SLF001
            if action.dest in values:
                action.required = False
    args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------------------
# helpers

def _learner(args) -> LearnerConfig:
    return LearnerConfig(family=args.learner, hidden=tuple(args.learner_hidden), lr=args.learner_lr,
                         epochs=args.learner_epochs, batch_size=args.learner_batch_size)


def _run_config(args, **extra) -> RunConfig:
    kw = dict(seed=args.seed, rho=args.rho, gamma=args.gamma, learner=_learner(args), eps_clip=args.eps_clip)
    for name in ("lr", "iterations", "policy", "policy_knots", "optimizer", "restarts", "objective"):
        if hasattr(args, name):
            kw[name] = getattr(args, name)
    if hasattr(args, "policy_hidden"):
        kw["policy_hidden"] = tuple(args.policy_hidden)
    kw.update(extra)
    return RunConfig(**kw)


def _load_data(args):
    path = Path(args.data)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    return load_csv(path, args.d_a)


def _load_policy(spec: str | None, d_a: int) -> Policy | None:
    if spec is None:
        return None
    if spec == "uniform":
        return UniformPolicy(d_a)
    path = Path(spec)
    if not path.exists():
        raise DataError(f"policy file not found: {path}")
    try:
        return load_policy(path)
    except (ValueError, IndexError) as exc:
        raise DataError(f"malformed policy file {path}: {exc}") from exc


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = [",".join(header)] + [",".join(r) for r in rows]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(args) -> int:
    spec = dgp.SyntheticSpec(args.gamma_star, args.n, args.seed)
    data, hidden = dgp.generate(spec)
    save_csv(data, args.out)
    if args.hidden_out:
        with open(args.hidden_out, "w", encoding="utf-8") as fh:
            fh.write("u,y0,y1\n")
            for u, y0, y1 in zip(hidden.u, hidden.y0, hidden.y1):
                fh.write(f"{int(u)},{float(y0)!r},{float(y1)!r}\n")
    return EXIT_OK


def cmd_train(args) -> int:
    data = _load_data(args)
    cfg = _run_config(args, output=args.out)
    baseline = _load_policy(args.baseline, data.d_a)
    prep = prepare(cfg, data)
    policy, trace = train(cfg, data, estimator=args.estimator, baseline=baseline, prepared=prep,
                          quantile_term=args.quantile_term)
    save_policy(policy, args.out)
    trace.to_csv(args.trace or f"{args.out}.trace.csv")
    if args.fit_report:
        Path(args.fit_report).write_text(prep.nuisances.report.to_text(), encoding="utf-8")
    return EXIT_OK


def evaluate_rows(args) -> tuple[tuple[str, ...], list[list[str]]]:
    data = _load_data(args)
    policy = _load_policy(args.policy_file, data.d_a)
    cfg = _run_config(args)
    prep = prepare(cfg, data)
    header = ("estimator",) + BoundReport.CSV_HEADER
    if args.objective == "regret":
        baseline = _load_policy(args.baseline, data.d_a)
        report = regret_bound(args.estimator, prep.values, prep.spec, policy, baseline, prep.eval_fold,
                              args.quantile_term)
    else:
        baseline = None
        report = value_estimate(args.estimator, prep.values, prep.spec, policy, prep.eval_fold, args.side,
                                args.quantile_term)
    row = [args.estimator] + report.csv_row()
    if args.ground_truth:
        if data.d_x != 1 or data.d_a != 2:
            raise DataError("ground truth is only defined for the one-covariate synthetic benchmark")
        header += ("true_value", "true_regret")
        ref = baseline or UniformPolicy(2)
        row += [repr(dgp.true_value(policy)), repr(dgp.true_regret(policy, ref))]
    return header, [row]


def cmd_evaluate(args) -> int:
    header, rows = evaluate_rows(args)
    _emit(_csv_text(header, rows), args.out)
    return EXIT_OK


def sweep_grid(args) -> experiments.ExperimentGrid:
    run = replace(experiments.STUDY_RUN, lr=args.lr, iterations=args.iterations, policy=args.policy,
                  policy_hidden=tuple(args.policy_hidden), policy_knots=args.policy_knots,
                  optimizer=args.optimizer, restarts=args.restarts)
    presets = {"confounding": experiments.confounding_grid,
               "misspecification": experiments.misspecification_grid,
               "sample_size": experiments.sample_size_grid}
    if args.design in presets:
        grid = presets[args.design](output=args.out, run=run)
    else:
        if args.gamma_star is None:
            raise ArgumentError("custom sweeps need --gamma-star")
        grid = experiments.ExperimentGrid(args.name or "custom", args.gamma_star, output=args.out, run=run)
    changes = {}
    for flag, field_name in (("gamma_star", "gamma_stars"), ("gamma", "gammas"), ("n", "ns"),
                             ("seeds", "seeds"), ("estimators", "estimators")):
        value = getattr(args, flag)
        if value is not None:
            changes[field_name] = value
    if args.name:
        changes["name"] = args.name
    changes["objective"] = args.objective
    return replace(grid, **changes)


def cmd_sweep(args) -> int:
    rows = experiments.sweep(sweep_grid(args), args.workers)
    failed = sum(1 for r in rows if r.error)
    if failed:
        print(f"{failed} of {len(rows)} runs failed; see {Path(args.out) / 'errors.txt'}", file=sys.stderr)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    data = _load_data(args)
    cfg = _run_config(args)
    fold1, fold2 = split(data, cfg.rho, cfg.seed)
    policy = _load_policy(args.policy_file, data.d_a)
    baseline = _load_policy(args.baseline, data.d_a)
    propensity, _ = fit_propensity(fold1, cfg.learner, cfg.seed, cfg.eps_clip)

    def builder(g: float):
        return assemble(fold1, SensitivitySpec(g), cfg.learner, cfg.seed, cfg.eps_clip,
                        propensity=propensity, capo=False).evaluate(fold2.x)

    try:
        cal = calibrate_gamma(builder, fold2, policy, baseline, args.gamma_max, args.tol, args.estimator,
                              args.quantile_term)
    except NotExplainedError as exc:
        print(f"note: {exc}", file=sys.stderr)
        print("inf")
        return EXIT_OK
    if args.out:
        rows = sorted(cal.trace)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(",".join(cal.CSV_HEADER) + "\n")
            for g, lo, up in rows:
                fh.write(f"{g!r},{lo!r},{up!r},{up - lo!r}\n")
    print(repr(cal.gamma))
    return EXIT_OK


def cmd_certify(args) -> int:
    data = _load_data(args)
    cfg = _run_config(args)
    policy = _load_policy(args.policy_file, data.d_a)
    baseline = _load_policy(args.baseline, data.d_a)
    res = no_harm_check(policy, baseline, data, SensitivitySpec(cfg.gamma), cfg, C_y=args.c_y,
                        delta=args.delta, R_n=args.r_n, quantile_term=args.quantile_term)
    c = res.certificate
    lines = [f"estimate={res.report.estimate!r}", f"se={res.report.se!r}", f"slack={c.slack!r}",
             f"bound={c.bound!r}", f"C_y={c.C_y!r}", f"C_v={c.C_v!r}", f"delta={c.delta!r}",
             f"n={c.n}", f"R_n={c.R_n!r}", f"raw_improvement={str(res.raw_improvement).lower()}",
             f"certified_improvement={str(res.certified_improvement).lower()}"]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "evaluate": cmd_evaluate, "sweep": cmd_sweep,
            "calibrate": cmd_calibrate, "certify": cmd_certify}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_ARGS if exc.code else EXIT_OK
    except (ArgumentError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    try:
        return COMMANDS[args.command](args)
    except (DataError, FitError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ArgumentError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
