"""Command line for generating, solving, and evaluating completion instances.

Exit codes: 0 success, 1 usage or input-format error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .cases import CASES
from .harness import (
    SyntheticSpec,
    generate_instance,
    ground_truth_point,
    read_point,
    split,
    write_point,
)
from .problem import CompletionInstance, mse
from .solvers import SgdConfig, SolverConfig, conjugate_gradient, gradient_descent, sgd
from .tensors import MultilinearRank, SparseFormatError, SparseTensor3

__all__ = ["cli_main", "main"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_triple(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError("expected three comma-separated integers, got %r" % text)
    return tuple(int(p) for p in parts)


def _float_list(text):
    return tuple(float(p) for p in text.split(","))


def _build_parser():
    parser = _Parser(prog="tuckercomp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="synthesize an instance and its ground truth")
    gen.add_argument("--dims", required=True, type=_int_triple)
    gen.add_argument("--rank", required=True, type=_int_triple)
    gen.add_argument("--os", dest="os_ratio", required=True, type=float)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--core", choices=("gaussian", "diag_decay"), default="gaussian")
    gen.add_argument("--cn", type=float, default=None, help="condition number for diag_decay")
    gen.add_argument("--noise-eps", type=float, default=0.0)
    gen.add_argument("--test-size", type=int, default=None)
    gen.add_argument("-o", "--out", required=True)

    comp = sub.add_parser("complete", help="solve a completion instance from files")
    comp.add_argument("--train", required=True)
    comp.add_argument("--test", default=None)
    comp.add_argument("--validation", default=None)
    comp.add_argument("--rank", required=True, type=_int_triple)
    comp.add_argument("--solver", choices=("cg", "gd"), default="cg")
    comp.add_argument("--metric", choices=("preconditioned", "euclidean"), default="preconditioned")
    comp.add_argument("--beta-rule", choices=("HS+", "PR+"), default="HS+")
    comp.add_argument("--max-iters", type=int, default=250)
    comp.add_argument("--tol", type=float, default=1e-12)
    comp.add_argument("--seed", type=int, default=0)
    comp.add_argument("--validation-early-stop", action="store_true")
    comp.add_argument("-o", "--out", required=True)

    sg = sub.add_parser("sgd", help="stream frontal slices with stochastic gradient descent")
    sg.add_argument("--train", required=True)
    sg.add_argument("--test", default=None)
    sg.add_argument("--rank", required=True, type=_int_triple)
    sg.add_argument("--gamma0", type=float, default=None)
    sg.add_argument("--gamma0-candidates", type=_float_list, default=(8.0, 9.0, 10.0, 11.0, 12.0))
    sg.add_argument("--decay", type=float, default=1e-7, help="schedule reduction factor lambda")
    sg.add_argument("--epochs", type=int, default=100)
    sg.add_argument("--pretrain-fraction", type=float, default=0.1)
    sg.add_argument("--seed", type=int, default=0)
    sg.add_argument("-o", "--out", required=True)

    ev = sub.add_parser("evaluate", help="mean squared error of stored factors on a data file")
    ev.add_argument("--factors", required=True, help="directory holding u1.txt u2.txt u3.txt core.txt")
    ev.add_argument("--data", required=True)

    case = sub.add_parser("case", help="run a named desk-scale reproduction")
    case.add_argument("name", choices=sorted(CASES.keys()))
    case.add_argument("--seed", type=int, default=0)
    case.add_argument("--runs", type=int, default=None)
    case.add_argument("-o", "--out", default=None)

    spl = sub.add_parser("split", help="partition a data file into train/validation/test")
    spl.add_argument("--data", required=True)
    spl.add_argument("--fractions", type=_float_list, default=(0.8, 0.1, 0.1))
    spl.add_argument("--seed", type=int, default=0)
    spl.add_argument("-o", "--out", required=True)

    return parser


def _load_instance(args):
    train = SparseTensor3.read_text(args.train)
    test = SparseTensor3.read_text(args.test) if getattr(args, "test", None) else None
    val = SparseTensor3.read_text(args.validation) if getattr(args, "validation", None) else None
    return CompletionInstance(
        train.dims, MultilinearRank(*args.rank), train, test=test, validation=val
    )


def _cmd_generate(args):
    spec = SyntheticSpec(
        dims=args.dims,
        rank=args.rank,
        os_ratio=args.os_ratio,
        core_kind=args.core,
        cn=args.cn,
        noise_eps=args.noise_eps,
        seed=args.seed,
        test_size=args.test_size,
    )
    inst = generate_instance(spec)
    os.makedirs(args.out, exist_ok=True)
    inst.train.write_text(os.path.join(args.out, "train.txt"))
    if inst.test is not None:
        inst.test.write_text(os.path.join(args.out, "test.txt"))
    write_point(args.out, ground_truth_point(spec), prefix="truth_")
    print(
        "wrote instance to %s (train nnz %d, test nnz %d)"
        % (args.out, inst.train.nnz, 0 if inst.test is None else inst.test.nnz)
    )
    return 0


def _cmd_complete(args):
    inst = _load_instance(args)
    cfg = SolverConfig(
        max_iters=args.max_iters,
        train_mse_tol=args.tol,
        cg_beta_rule=args.beta_rule,
        metric_mode=args.metric,
        seed=args.seed,
        validation_early_stop=args.validation_early_stop,
    )
    solve = conjugate_gradient if args.solver == "cg" else gradient_descent
    x, trace = solve(inst, cfg)
    os.makedirs(args.out, exist_ok=True)
    trace.write_csv(os.path.join(args.out, "trace.csv"))
    write_point(args.out, x)
    last = trace.records[-1]
    print(
        "%s stopped after %d iterations (%s): train %.6e%s"
        % (
            args.solver,
            last.iter,
            trace.reason,
            last.train_mse,
            "" if last.test_mse is None else ", test %.6e" % last.test_mse,
        )
    )
    return 2 if trace.reason in ("linesearch failure", "diverged") else 0


def _cmd_sgd(args):
    inst = _load_instance(args)
    cfg = SolverConfig(
        seed=args.seed,
        sgd=SgdConfig(
            gamma0_candidates=args.gamma0_candidates,
            decay=args.decay,
            epochs=args.epochs,
            pretrain_fraction=args.pretrain_fraction,
            gamma0=args.gamma0,
        ),
    )
    x, trace = sgd(inst, cfg)
    os.makedirs(args.out, exist_ok=True)
    trace.write_csv(os.path.join(args.out, "trace.csv"))
    write_point(args.out, x)
    last = trace.records[-1]
    print(
        "sgd stopped after %d epochs (%s): train %.6e%s"
        % (last.iter, trace.reason, last.train_mse,
           "" if last.test_mse is None else ", test %.6e" % last.test_mse)
    )
    return 2 if trace.reason == "diverged" else 0


def _cmd_evaluate(args):
    point = read_point(args.factors)
    data = SparseTensor3.read_text(args.data)
    print("mse %.17g" % mse(point, data))
    return 0


def _cmd_case(args):
    fn = CASES[args.name]
    kwargs = {"seed": args.seed, "out_dir": args.out}
    if args.runs is not None:
        kwargs["runs"] = args.runs
    report = fn(**kwargs)
    report.print()
    return 0 if report.passed else 2


def _cmd_split(args):
    data = SparseTensor3.read_text(args.data)
    if len(args.fractions) != 3:
        raise UsageError("--fractions needs three values")
    # rank is irrelevant for writing the partition files; use (1,1,1)
    inst = split(data, (1, 1, 1), args.fractions, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    inst.train.write_text(os.path.join(args.out, "train.txt"))
    if inst.validation is not None:
        inst.validation.write_text(os.path.join(args.out, "validation.txt"))
    if inst.test is not None:
        inst.test.write_text(os.path.join(args.out, "test.txt"))
    print(
        "split %d entries into %d/%d/%d"
        % (
            data.nnz,
            inst.train.nnz,
            0 if inst.validation is None else inst.validation.nnz,
            0 if inst.test is None else inst.test.nnz,
        )
    )
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "complete": _cmd_complete,
    "sgd": _cmd_sgd,
    "evaluate": _cmd_evaluate,
    "case": _cmd_case,
    "split": _cmd_split,
}


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print("usage error: %s" % exc, file=sys.stderr)
        return 1
    except SparseFormatError as exc:
        print("input error: %s" % exc, file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print("solver error: %s" % exc, file=sys.stderr)
        return 2


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
