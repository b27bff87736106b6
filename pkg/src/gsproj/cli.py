"""Command-line front end.

Subcommands: ``project``, ``wproject``, ``nmf``, ``synth`` and ``train``.
Results go to the files named by --output/--report; stdout only carries a
human-readable summary. Exit status is 0 on success, 2 for usage or
configuration errors and 1 when the computation itself fails.

The environment variable SPARSEPROJ_SEED, when set, overrides --seed.
"""

import argparse
import os
import sys
import time

import numpy as np

from . import data_io
from .data_io import Report, load_matrix, radial_weights, save_matrix, write_report
from .exceptions import ConfigurationError, ConvergenceError, DomainError, ParseError
from .gsp import ProjectionConfig, ProjectionResult, g_eval, group_constants
from .gsp import project_group, project_group_relative
from .nmf import VARIANTS, NmfProblem, NmfResult, run_nmf
from .sparsity import VectorGroup
from .training import (
    Network,
    ProjectionSchedule,
    TrainConfig,
    TrainResult,
    train_with_projection,
)
from .wgsp import WeightGroup, gw_eval, project_group_weighted, weighted_constants

__all__ = ["main", "dispatch", "build_parser", "print_summary"]

SEED_ENV = "SPARSEPROJ_SEED"


class UsageError(Exception):
    """Bad command-line values detected after parsing."""


def _probability(text):
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in [0, 1], got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _radial(text):
    """Parse ``HxW:SIGMA``."""
    try:
        size, sigma = text.split(":")
        h, w = size.lower().split("x")
        h, w, sigma = int(h), int(w), float(sigma)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW:SIGMA, got {text!r}") from None
    if h < 1 or w < 1 or not sigma > 0:
        raise argparse.ArgumentTypeError(f"expected positive sizes and sigma, got {text!r}")
    return h, w, sigma


def _add_projection_flags(p, axis_default):
    p.add_argument("--input", required=True, help="CSV matrix")
    p.add_argument("--s", type=_probability, required=True, help="target average sparsity in [0, 1]")
    p.add_argument("--eps", type=_positive_float, default=1e-4, help="accuracy (default 1e-4)")
    p.add_argument("--r-l", type=float, default=0.9, help="bisection safeguard ratio in [1/2, 1) (default 0.9)")
    p.add_argument("--max-iters", type=_positive_int, default=100)
    p.add_argument("--axis", choices=("rows", "cols"), default=axis_default,
                   help=f"project the rows or the columns of the matrix (default {axis_default})")
    p.add_argument("--output", help="CSV file for the projected matrix")
    p.add_argument("--report", help="JSON report file")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help=f"random seed (overridden by ${SEED_ENV})")
    p.add_argument("--timing", action="store_true", help="record wall time in the report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gsproj",
        description="Grouped sparse projections, sparse NMF and projected training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="grouped sparse projection of the rows/columns of a matrix")
    _add_projection_flags(p, "rows")
    p.add_argument("--relative", action="store_true",
                   help="minimise relative errors (each vector scaled to unit norm first)")
    _add_common(p)

    p = sub.add_parser("wproject", help="weighted grouped sparse projection")
    _add_projection_flags(p, "rows")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--weights", help="CSV weights: one vector shared by all, or one per projected vector")
    src.add_argument("--radial", type=_radial, metavar="HxW:SIGMA",
                     help="radial image weights exp(dist/SIGMA) on an HxW image, column-major")
    _add_common(p)

    p = sub.add_parser("nmf", help="run an NMF variant")
    p.add_argument("--input", required=True, help="nonnegative CSV matrix Y")
    p.add_argument("--rank", type=_positive_int, required=True)
    p.add_argument("--variant", choices=VARIANTS, default="psnmf")
    p.add_argument("--s", type=_probability, help="target sparsity of the columns of X (sparse variants)")
    p.add_argument("--eps", type=_positive_float, default=1e-4)
    p.add_argument("--iters", type=_positive_int, default=500, help="outer iterations (default 500)")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--weights", help="CSV weight map for wsnmf (length m, or m x rank)")
    src.add_argument("--radial", type=_radial, metavar="HxW:SIGMA", help="radial weight map for wsnmf")
    p.add_argument("--output-x", help="CSV file for X")
    p.add_argument("--output-h", help="CSV file for H")
    p.add_argument("--report")
    _add_common(p)

    p = sub.add_parser("synth", help="generate an exact synthetic NMF instance")
    p.add_argument("--m", type=_positive_int, default=100)
    p.add_argument("--n", type=_positive_int, default=100)
    p.add_argument("--rank", type=_positive_int, default=10)
    p.add_argument("--output", help="CSV file for Y")
    p.add_argument("--output-x", help="CSV file for the true X")
    p.add_argument("--output-h", help="CSV file for the true H")
    p.add_argument("--report")
    _add_common(p)

    p = sub.add_parser("train", help="train a dense network with projected weights")
    p.add_argument("--data", required=True,
                   help="CSV, one sample per row; for classification the last column is the label")
    p.add_argument("--arch", required=True, help="comma-separated layer sizes, e.g. 784,128,64,12,3")
    p.add_argument("--task", choices=("classify", "autoencode"), default="classify",
                   help="autoencode mirrors --arch into a decoder and fits the inputs")
    p.add_argument("--s", type=_probability, help="target sparsity; omit to train without projection")
    p.add_argument("--period", type=_positive_int, default=15, help="steps between projections (default 15)")
    p.add_argument("--layer", type=int, default=0, help="index of the projected layer (default 0)")
    p.add_argument("--grouping", choices=("rows", "cols"), default="rows")
    p.add_argument("--epochs", type=_positive_int, default=10)
    p.add_argument("--batch-size", type=_positive_int, default=32)
    p.add_argument("--lr", type=_positive_float, default=0.001)
    p.add_argument("--optimizer", choices=("sgd", "adam"), default="adam")
    p.add_argument("--eps", type=_positive_float, default=1e-4)
    p.add_argument("--report")
    _add_common(p)
    return parser


def _seed(args) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return args.seed


def _projection_config(args) -> ProjectionConfig:
    try:
        return ProjectionConfig(s=args.s, eps=args.eps, r_l=args.r_l, max_iters=args.max_iters)
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def _projection_traces(res: ProjectionResult, value_at):
    """Average sparsity at every solver iterate and its distance to the target."""
    if res.feasible_at_zero:
        return [], []
    r = len(res.projected)
    sp = [res.target - value_at(mu) / r for _, _, mu in res.history]
    return [abs(v - res.target) for v in sp], sp


def _projection_details(res: ProjectionResult, axis, shape):
    return {
        "axis": axis,
        "shape": list(shape),
        "achieved_sparsity": res.achieved_sparsity,
        "mu_star": res.mu_star,
        "iterations": res.iterations,
        "discontinuous": res.discontinuous,
        "feasible_at_zero": res.feasible_at_zero,
        "bracket": list(res.bracket),
        "sparsity_band": list(res.sparsity_band) if res.sparsity_band is not None else None,
    }


def _run_project(args, weighted):
    cfg = _projection_config(args)
    M = load_matrix(args.input)
    g = VectorGroup.from_matrix(M, args.axis)
    if weighted:
        wg = _weights_for_group(args, g)
        res = project_group_weighted(g, wg, cfg)
        consts = weighted_constants(wg, cfg.s)
        value_at = lambda mu: gw_eval(g, wg, consts, mu)[0]  # noqa: E731
        variant = "wgsp"
    else:
        if args.relative:
            g = VectorGroup(tuple(v / np.linalg.norm(v) for v in g))
            res = project_group_relative(VectorGroup.from_matrix(M, args.axis), cfg)
        else:
            res = project_group(g, cfg)
        consts = group_constants(g, cfg.s)
        value_at = lambda mu: g_eval(g, consts, mu)[0]  # noqa: E731
        variant = "gsp-relative" if args.relative else "gsp"
    if args.output:
        save_matrix(res.projected_matrix(args.axis), args.output)
    err, sp = _projection_traces(res, value_at)
    report = Report(variant=variant, seed=None, s=cfg.s, epsilon=cfg.eps,
                    error_trace=err, sparsity_trace=sp,
                    details=_projection_details(res, args.axis, M.shape))
    return res, report


def _weights_for_group(args, g: VectorGroup) -> WeightGroup:
    n = int(g.lengths[0])
    if args.radial is not None:
        h, w, sigma = args.radial
        if h * w != n:
            raise ConfigurationError(f"radial map has {h * w} pixels but vectors have length {n}")
        return WeightGroup.for_group(radial_weights(h, w, sigma), g)
    if args.weights is None:
        raise ConfigurationError("weighted projection needs --weights or --radial")
    W = load_matrix(args.weights)
    if W.shape[0] == 1 or W.shape[1] == 1:
        return WeightGroup.for_group(W.ravel(), g)
    if args.axis == "cols":
        W = W.T
    if W.shape[0] != g.r:
        raise ConfigurationError(f"weights give {W.shape[0]} vectors, the input has {g.r}")
    return WeightGroup.for_group(W, g)


def _run_nmf(args):
    Y = load_matrix(args.input)
    weights = None
    if args.radial is not None:
        h, w, sigma = args.radial
        weights = radial_weights(h, w, sigma)
    elif args.weights is not None:
        W = load_matrix(args.weights)
        weights = W.ravel() if 1 in W.shape else W
    seed = _seed(args)
    prob = NmfProblem(Y=Y, rank=args.rank, variant=args.variant, s=args.s, weights=weights,
                      outer_iters=args.iters, seed=seed, eps=args.eps)
    res = run_nmf(prob)
    if args.output_x:
        save_matrix(res.X, args.output_x)
    if args.output_h:
        save_matrix(res.H, args.output_h)
    report = Report(variant=args.variant, seed=seed, s=args.s, epsilon=args.eps,
                    error_trace=res.error_trace.tolist(), sparsity_trace=res.sparsity_trace.tolist(),
                    details={"rank": args.rank, "shape": list(Y.shape), "best_error": res.best_error,
                             "final_error": float(res.error_trace[-1]),
                             "final_sparsity": float(res.sparsity_trace[-1])})
    return res, report


def _run_synth(args):
    if args.rank > min(args.m, args.n):
        raise ConfigurationError(f"rank {args.rank} exceeds min(m, n) = {min(args.m, args.n)}")
    seed = _seed(args)
    inst = data_io.gen_synthetic_nmf(args.m, args.n, args.rank, seed)
    if args.output:
        save_matrix(inst.Y, args.output)
    if args.output_x:
        save_matrix(inst.X_true, args.output_x)
    if args.output_h:
        save_matrix(inst.H_true, args.output_h)
    report = Report(variant="synth", seed=seed,
                    details={"m": args.m, "n": args.n, "rank": args.rank,
                             "true_sparsity": inst.sparsity})
    return inst, report


def _parse_arch(text):
    try:
        sizes = [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--arch must be comma-separated integers, got {text!r}") from None
    if len(sizes) < 2 or min(sizes) < 1:
        raise UsageError(f"--arch needs at least two positive sizes, got {text!r}")
    return sizes


def _run_train(args):
    sizes = _parse_arch(args.arch)
    data = load_matrix(args.data)
    if args.task == "classify":
        X, labels = data[:, :-1], data[:, -1]
        if not np.all(labels == np.round(labels)) or labels.min() < 0:
            raise ConfigurationError("labels in the last column must be nonnegative integers")
        y = labels.astype(np.int64)
        if y.max() >= sizes[-1]:
            raise ConfigurationError(f"label {y.max()} needs at least {y.max() + 1} outputs")
        loss = "ce"
    else:
        X = data
        y = data
        sizes = sizes + sizes[-2::-1]
        loss = "mse"
    if X.shape[1] != sizes[0]:
        raise ConfigurationError(f"data has {X.shape[1]} features, --arch expects {sizes[0]}")
    seed = _seed(args)
    sched = None
    if args.s is not None:
        if not 0 <= args.layer < len(sizes) - 1:
            raise ConfigurationError(f"--layer {args.layer} out of range for {len(sizes) - 1} layers")
        sched = ProjectionSchedule(args.s, layer=args.layer, grouping=args.grouping,
                                   period=args.period, eps=args.eps)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                      optimizer=args.optimizer, loss=loss, projection=sched, seed=seed)
    net = Network.init(sizes, seed=seed)
    res = train_with_projection(net, X, y, cfg)
    report = Report(variant=f"train-{args.task}", seed=seed, s=args.s, epsilon=args.eps,
                    error_trace=res.loss_trace, sparsity_trace=res.sparsity_trace,
                    details={"arch": sizes, "accuracy_trace": res.accuracy_trace,
                             "projections": len(res.projection_events),
                             "layer": args.layer, "grouping": args.grouping})
    return res, report


def print_summary(result, out=None) -> str:
    """Write a short human-readable summary of a result and return it."""
    lines = []
    if isinstance(result, ProjectionResult):
        if result.feasible_at_zero:
            lines.append("input already satisfies target")
            lines.append(f"average sparsity {result.achieved_sparsity:.6f} >= {result.target:g}")
        else:
            lines.append(f"achieved sparsity {result.achieved_sparsity:.6f} (target {result.target:g})")
            lines.append(f"mu* = {result.mu_star:.6g} after {result.iterations} iterations")
            if result.discontinuous:
                lo, hi = result.sparsity_band
                lines.append(f"discontinuous: sparsity between {lo:.4f} and {hi:.4f} is not attainable")
    elif isinstance(result, NmfResult):
        lines.append(f"{result.variant}: best relative error {result.best_error:.6g}")
        lines.append(f"final relative error {result.error_trace[-1]:.6g}, "
                     f"final sparsity {result.sparsity_trace[-1]:.4f}")
    elif isinstance(result, TrainResult):
        lines.append(f"final loss {result.loss_trace[-1]:.6g}")
        if result.accuracy_trace[-1] is not None:
            lines.append(f"final accuracy {result.accuracy_trace[-1]:.4f}")
        lines.append(f"layer sparsity {result.sparsity_trace[-1]:.4f}, "
                     f"{len(result.projection_events)} projections")
    elif isinstance(result, data_io.SyntheticNmfInstance):
        lines.append(f"synthetic Y {result.Y.shape[0]}x{result.Y.shape[1]}, rank {result.X_true.shape[1]}")
        lines.append(f"average column sparsity of X {result.sparsity:.4f}")
    else:
        lines.append(str(result))
    text = "\n".join(lines)
    print(text, file=out if out is not None else sys.stdout)
    return text


_RUNNERS = {
    "project": lambda a: _run_project(a, weighted=False),
    "wproject": lambda a: _run_project(a, weighted=True),
    "nmf": _run_nmf,
    "synth": _run_synth,
    "train": _run_train,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    report_path = getattr(args, "report", None)
    start = time.perf_counter()
    try:
        result, report = _RUNNERS[args.command](args)
    except (UsageError, ConfigurationError) as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, ParseError, ConvergenceError, OSError, ValueError) as exc:
        print(f"{parser.prog} {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        if report_path:
            # projections are deterministic and record no seed, as on success
            seed = None
            if args.command not in ("project", "wproject"):
                try:
                    seed = _seed(args)
                except UsageError:
                    pass
            failed = Report(variant=args.command, seed=seed,
                            s=getattr(args, "s", None), epsilon=getattr(args, "eps", None),
                            error=f"{type(exc).__name__}: {exc}")
            try:
                write_report(failed, report_path)
            except OSError:
                pass
        return 1
    if args.timing:
        report.wall_ms = round(1000.0 * (time.perf_counter() - start), 3)
    if report_path:
        try:
            write_report(report, report_path)
        except OSError as exc:
            print(f"{parser.prog}: cannot write report: {exc}", file=sys.stderr)
            return 1
    print_summary(result)
    return 0


def main(argv=None):
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()
