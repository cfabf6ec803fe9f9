"""Command-line interface: coeffs, derivative, indices, emulate, experiment.

Exit codes: 0 success, 2 parameter error, 3 domain/A2 error, 4 singularity.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings

import numpy as np

from . import emulator as emu
from .derivatives import estimate_from_runs, export_design, import_design, read_outputs
from .derivatives import build_design, estimate_cross_partial
from .distributions import RandomStream
from .errors import CrossDerivError, ParameterError
from .harness import REFERENCE_BUDGETS, ExperimentPlan, gap_curve, mse_curve, run_plan
from .perturb import default_config
from .schemes import SCHEME_KINDS, scheme_coefficients, verify_constraints
from .testbed import get_function


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ParameterError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ParameterError(f"expected comma-separated integers, got {text!r}") from None


def _writer(path):
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def _close(fh):
    if fh is not sys.stdout:
        fh.close()


def _scheme_args(p: argparse.ArgumentParser, order_flag: bool = True):
    if order_flag:
        p.add_argument("--order", type=int, required=True, help="derivative order |u|")
    p.add_argument("--scheme", choices=SCHEME_KINDS, help="default: rate_optimal, or custom with --exponents")
    p.add_argument("--rstar", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--Lprime", type=int)
    p.add_argument("--eps", type=float, help="eps_op for the intermediate scheme")
    p.add_argument("--exponents", help="custom scheme exponents, comma-separated")
    p.add_argument("--nodes", help="comma-separated nodes (default: the standard node set)")


def _perturb_args(p: argparse.ArgumentParser):
    p.add_argument("--law", choices=("uniform", "gaussian"), default="uniform")
    p.add_argument("--gamma", type=float, default=1.5)
    p.add_argument("--ch", type=float, default=1.0, dest="c_h")
    p.add_argument("--xi", type=float)
    p.add_argument("--sigma", type=float)


def _coeffs_from(args, order: int):
    kind = args.scheme or ("custom" if args.exponents else "rate_optimal")
    if args.exponents and kind != "custom":
        raise ParameterError("--exponents applies only to --scheme custom")
    return scheme_coefficients(
        kind,
        order,
        rstar=args.rstar,
        L=args.L,
        Lprime=args.Lprime,
        eps_op=args.eps,
        nodes=_floats(args.nodes) if args.nodes else None,
        exponents=_ints(args.exponents) if args.exponents else None,
    )


def cmd_coeffs(args) -> int:
    c = _coeffs_from(args, args.order)
    rep = verify_constraints(c, c.scheme)
    fh, w = _writer(args.out)
    w.writerow(["section", "index", "value"])
    for i, (b, x) in enumerate(zip(c.nodes, c.coefficients), start=1):
        w.writerow(["node", i, repr(b)])
        w.writerow(["coefficient", i, repr(x)])
    for r, e in zip(rep.exponents, rep.residuals):
        w.writerow(["residual", r, repr(e)])
    w.writerow(["gamma", c.order + 1, repr(c.gamma(c.order + 1))])
    w.writerow(["condition", "", repr(c.condition)])
    _close(fh)
    return 0


def cmd_derivative(args) -> int:
    stream = RandomStream(args.seed, args.sampler)
    if args.design:
        # re-import an exported design and combine it with external outputs
        if not args.outputs:
            raise ParameterError("--design needs --outputs")
        design, u = import_design(args.design)
        est = estimate_from_runs(design, read_outputs(args.outputs, design.N * design.L), u)
    else:
        if not (args.function and args.point and args.subset):
            raise ParameterError("derivative needs --function, --point and --subset")
        tf = get_function(args.function)
        x = np.array(_floats(args.point))
        u = tuple(k - 1 for k in _ints(args.subset))
        c = _coeffs_from(args, len(u))
        cfg = default_config(
            tf.d, len(u), c, args.N, "dimension_free_uniform" if args.law == "uniform" else "gaussian_sqrt_d",
            gamma=args.gamma, c_h=args.c_h, xi=args.xi, sigma=args.sigma,
        )
        if args.export_design:
            design = build_design(x, u, c, cfg, args.N, stream, model=tf.model)
            export_design(design, args.export_design, u)
            print(f"wrote {design.N * design.L} design rows to {args.export_design}", file=sys.stderr)
            return 0
        est = estimate_cross_partial(tf.model, x, u, c, cfg, args.N, stream, shrink_h=args.shrink_h,
                                     threads=args.threads)
    fh, w = _writer(args.out)
    w.writerow(["subset", "value", "std_error", "N", "L", "scheme", "runs_used"])
    w.writerow([":".join(str(k + 1) for k in est.subset), repr(est.value), repr(est.std_error),
                est.N, est.L, est.scheme, est.runs_used])
    _close(fh)
    return 0


def _plan_from(args, budgets, replicates) -> ExperimentPlan:
    return ExperimentPlan(
        args.function, args.estimator, args.L, tuple(budgets), replicates, args.seed, args.out,
        args.sampler, args.law, args.gamma, args.c_h, args.budget_unit, args.n0, args.threads,
    )


def cmd_indices(args) -> int:
    plan = _plan_from(args, [args.budget], args.replicates)
    result = run_plan(plan)
    if args.out is None:
        _, w = _writer(None)
        w.writerow(result.rows[0].keys())
        for row in result.rows:
            w.writerow(row.values())
    return 0


def cmd_experiment(args) -> int:
    budgets = _ints(args.budgets) if args.budgets else list(REFERENCE_BUDGETS)
    result = run_plan(_plan_from(args, budgets, args.replicates))
    if args.out is None:
        _, w = _writer(None)
        rows = mse_curve(result) + gap_curve(result)
        w.writerow(rows[0].keys())
        for row in rows:
            w.writerow(row.values())
    return 0


def cmd_emulate(args) -> int:
    tf = get_function(args.function)
    cfg = emu.EmulatorConfig.from_budget(
        tf.dist, args.budget, args.s, L=args.L, preset=args.preset, N_inner=args.N_inner,
        stream=RandomStream(args.seed, args.sampler), gamma=args.gamma, c_h=args.c_h,
        allow_large_s=args.allow_large_s,
    )
    em = emu.build(tf.model, cfg, threads=args.threads)
    if args.save:
        em.save(args.save)
    if args.eval_points:
        P = np.loadtxt(args.eval_points, delimiter=",", ndmin=2)
    else:
        P = em.points  # scatter data at the build points
    pred = em.predict_batch(P)
    truth = tf.model(P)
    fh, w = _writer(args.out)
    w.writerow(["point"] + [f"x_{k + 1}" for k in range(tf.d)] + ["predicted", "true"])
    for i, (p, yh, y) in enumerate(zip(P, pred, truth)):
        w.writerow([i] + [repr(float(v)) for v in p] + [repr(float(yh)), repr(float(y))])
    _close(fh)
    if len(pred) > 1:
        r = float(np.corrcoef(pred, truth)[0, 1])
        print(json.dumps({"runs_used": em.runs_used, "N_outer": em.N_outer, "correlation": r}), file=sys.stderr)
    return 0


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies must not overwrite values given before the subcommand
    def default(v):
        return argparse.SUPPRESS if suppress else v

    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=default(0))
    p.add_argument("--threads", type=int, default=default(1))
    p.add_argument("--deterministic", action="store_true", default=default(False),
                   help="single-threaded, sequential reductions (bit-reproducible)")
    p.add_argument("--sampler", choices=("pseudo", "sobol"), default=default("pseudo"))
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossderiv", parents=[_global_flags(False)],
        description="Randomized cross-partial derivative estimation and derivative-based sensitivity analysis",
    )
    common = _global_flags(True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coeffs", parents=[common], help="solve stencil coefficients")
    _scheme_args(p)
    p.add_argument("--out")
    p.set_defaults(run=cmd_coeffs)

    p = sub.add_parser("derivative", parents=[common], help="estimate one cross-partial derivative")
    p.add_argument("--function")
    p.add_argument("--point", help="comma-separated point")
    p.add_argument("--subset", help="comma-separated 1-based coordinates")
    p.add_argument("--N", type=int, default=1000)
    _scheme_args(p, order_flag=False)
    _perturb_args(p)
    p.add_argument("--shrink-h", action="store_true", help="halve h until the design fits the model domain")
    p.add_argument("--export-design", help="write the design CSV (plus JSON sidecar) and stop")
    p.add_argument("--design", help="previously exported design CSV")
    p.add_argument("--outputs", help="CSV of row,y model outputs for --design")
    p.add_argument("--out")
    p.set_defaults(run=cmd_derivative)

    for name, fn, helptext in (("indices", cmd_indices, "main indices and upper bounds"),
                               ("experiment", cmd_experiment, "replicated budget sweep")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--function", required=True)
        p.add_argument("--estimator", choices=("direct", "plugin"), default="plugin")
        p.add_argument("--L", type=int, default=1)
        if name == "indices":
            p.add_argument("--budget", type=int, required=True)
            p.add_argument("--replicates", type=int, default=1)
        else:
            p.add_argument("--budgets", help="comma-separated run budgets (default: the reference grid)")
            p.add_argument("--replicates", type=int, default=30)
        p.add_argument("--budget-unit", choices=("runs", "points"), default="runs")
        p.add_argument("--n0", type=int, help="plug-in runs per gradient (default 2d)")
        _perturb_args(p)
        p.add_argument("--out")
        p.set_defaults(run=fn)

    p = sub.add_parser("emulate", parents=[common], help="build and evaluate a Db-ANOVA emulator")
    p.add_argument("--function", required=True)
    p.add_argument("--s", type=int, default=1)
    p.add_argument("--budget", type=int, default=300)
    p.add_argument("--L", type=int)
    p.add_argument("--N-inner", type=int, default=1, dest="N_inner")
    p.add_argument("--preset", choices=("default", "five_node"), default="default")
    p.add_argument("--allow-large-s", action="store_true")
    p.add_argument("--gamma", type=float, default=1.5)
    p.add_argument("--ch", type=float, default=1.0, dest="c_h")
    p.add_argument("--eval-points", help="CSV of points (no header); default: the build points")
    p.add_argument("--save", help="write the emulator state file")
    p.add_argument("--out")
    p.set_defaults(run=cmd_emulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.deterministic:
        args.threads = 1
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.run(args)
    except CrossDerivError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
