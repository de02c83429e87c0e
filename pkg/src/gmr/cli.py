"""``gmr`` command line.

Exit codes: 0 success, 2 input error, 3 dimension mismatch, 4 invalid
argument, 5 non-convergence (only with ``--strict``).
"""
from __future__ import annotations

import argparse
import os
import sys

from .core import DimensionMismatchError, GaussianMixture, MixtureError, dumps17, load_mixture, save_mixture
from .descent import DescentConfig
from .dissim import Measure, QuadratureConfig, QuadratureError, ise, kld_gaussians, kld_gm_numeric, nise
from .greedy import KLD_BARYCENTER, MergeMethod, TargetError, runnalls_reduce, williams_reduce
from .merge import bsga
from .refine import refine
from .repro import CASE_IDS, UnknownCaseError, run_case

EXIT_OK, EXIT_INPUT, EXIT_DIM, EXIT_ARG, EXIT_NOCONV = 0, 2, 3, 4, 5
DEFAULT_SEED = 42


class _ArgError(Exception):
    pass


class _NotConverged(Exception):
    pass


def _seed(explicit):
    if explicit is not None:
        return explicit
    env = os.environ.get("GMR_SEED")
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise _ArgError(f"GMR_SEED must be an integer, got {env!r}") from None


def _quad(args) -> QuadratureConfig:
    kw = {"seed": _seed(getattr(args, "seed", None))}
    if getattr(args, "abs_tol", None) is not None:
        kw["abs_tol"] = args.abs_tol
    if getattr(args, "mc_samples", None) is not None:
        kw["mc_samples"] = args.mc_samples
    try:
        return QuadratureConfig(**kw)
    except ValueError as exc:
        raise _ArgError(str(exc)) from None


def _emit(obj) -> None:
    sys.stdout.write(dumps17(obj) + "\n")


def cmd_dissim(args) -> int:
    f, g = load_mixture(args.f), load_mixture(args.g)
    if f.d != g.d:
        raise DimensionMismatchError(f"{args.f} is {f.d}-d but {args.g} is {g.d}-d")
    measure = Measure.parse(args.measure)
    out = {"measure": measure.value}
    if measure is Measure.ISE:
        out["value"] = ise(f, g)
    elif measure is Measure.NISE:
        out["value"] = nise(f, g)
    elif args.closed_form:
        if f.n != 1 or g.n != 1:
            raise _ArgError("--closed-form KLD needs two single-Gaussian files")
        out["value"] = kld_gaussians(f.component(0), g.component(0))
        out["method"] = "closed-form"
    else:
        est = kld_gm_numeric(f, g, _quad(args))
        out.update(value=est.value, error=est.error, method=est.method)
    _emit(out)
    return EXIT_OK


PIPELINES = ("williams", "williams-ise", "runnalls")


def cmd_reduce(args) -> int:
    f = load_mixture(args.file)
    if not 1 <= args.target < f.n:
        raise TargetError(f"target must lie in [1, {f.n}), got {args.target}")
    if args.pipeline == "runnalls":
        g, trace = runnalls_reduce(f, args.target, _quad(args))
    else:
        method = KLD_BARYCENTER if args.pipeline == "williams" else MergeMethod.bsga("ise")
        g, trace = williams_reduce(f, args.target, method)
    if args.out:
        save_mixture(g, args.out)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(dumps17(trace.to_dict()) + "\n")
    out = {
        "pipeline": args.pipeline,
        "size": g.n,
        "steps": trace.render(f.n),
        "ise": ise(f, g),
        "nise": nise(f, g),
    }
    if args.kld:
        out["kld"] = kld_gm_numeric(f, g, _quad(args)).value
    _emit(out)
    return EXIT_OK


def _descent_cfg(args) -> DescentConfig:
    kw = {}
    if getattr(args, "max_iters", None) is not None:
        kw["max_iters"] = args.max_iters
    if getattr(args, "grad_tol", None) is not None:
        kw["grad_tol"] = args.grad_tol
    try:
        return DescentConfig(**kw)
    except ValueError as exc:
        raise _ArgError(str(exc)) from None


def cmd_bsga(args) -> int:
    f = load_mixture(args.file)
    init = None
    if args.init not in (None, "kld"):
        start = load_mixture(args.init)
        if start.d != f.d:
            raise DimensionMismatchError("initial Gaussian has a different dimension")
        if start.n != 1:
            raise _ArgError("--init file must hold a single Gaussian")
        init = start.component(0)
    res = bsga(f, args.measure, _descent_cfg(args), init=init, multistart=args.multistart, quad=_quad(args))
    _emit({
        "measure": Measure.parse(args.measure).value,
        "mean": res.gaussian.mean.tolist(),
        "cov": res.gaussian.cov.tolist(),
        "objective": res.objective,
        "iterations": res.iterations,
        "converged": res.converged,
    })
    if args.out:
        save_mixture(GaussianMixture.single(res.gaussian), args.out)
    if args.strict and not res.converged:
        raise _NotConverged("BSGA descent did not converge")
    return EXIT_OK


def cmd_refine(args) -> int:
    f, start = load_mixture(args.file), load_mixture(args.start)
    if f.d != start.d:
        raise DimensionMismatchError(f"{args.file} is {f.d}-d but {args.start} is {start.d}-d")
    if Measure.parse(args.measure) is Measure.KLD:
        raise _ArgError("refinement supports ise and nise only")
    res = refine(f, start, args.measure, _descent_cfg(args))
    if args.out:
        save_mixture(res.mixture, args.out)
    _emit({
        "measure": Measure.parse(args.measure).value,
        "initial_cost": res.initial_cost,
        "final_cost": res.final_cost,
        "iterations": res.iterations,
        "converged": res.converged,
        "size": res.mixture.n,
    })
    if args.strict and not res.converged:
        raise _NotConverged("refinement did not converge")
    return EXIT_OK


def cmd_repro(args) -> int:
    manifest = run_case(args.case, args.outdir, _quad(args))
    _emit({"case": manifest["case"], "files": manifest["files"]})
    return EXIT_OK


def _add_quad_flags(p):
    p.add_argument("--abs-tol", type=float, default=None, help="quadrature absolute tolerance")
    p.add_argument("--mc-samples", type=int, default=None, help="Monte Carlo draws for d >= 2")
    p.add_argument("--seed", type=int, default=None, help="Monte Carlo seed (default GMR_SEED or 42)")


def _add_descent_flags(p):
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--grad-tol", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmr", description="Gaussian mixture reduction toolkit")
    parser.add_argument("--strict", action="store_true", help="exit 5 when a descent does not converge")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dissim", help="dissimilarity between two mixture files")
    p.add_argument("f")
    p.add_argument("g")
    p.add_argument("--measure", choices=[m.value for m in Measure], default="ise")
    p.add_argument("--closed-form", action="store_true", help="closed-form KLD between single Gaussians")
    _add_quad_flags(p)
    p.set_defaults(func=cmd_dissim)

    p = sub.add_parser("reduce", help="greedy reduction of a mixture file")
    p.add_argument("file")
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--pipeline", choices=PIPELINES, default="williams")
    p.add_argument("--out")
    p.add_argument("--trace")
    p.add_argument("--kld", action="store_true", help="also report the numeric KLD")
    _add_quad_flags(p)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("bsga", help="best single Gaussian approximation of a mixture file")
    p.add_argument("file")
    p.add_argument("--measure", choices=[m.value for m in Measure], default="ise")
    p.add_argument("--multistart", action="store_true")
    p.add_argument("--init", default=None, help="'kld' (default) or a file with one Gaussian")
    p.add_argument("--out")
    _add_descent_flags(p)
    _add_quad_flags(p)
    p.set_defaults(func=cmd_bsga)

    p = sub.add_parser("refine", help="descent refinement of a reduced mixture")
    p.add_argument("file")
    p.add_argument("start")
    p.add_argument("--measure", choices=["ise", "nise"], default="ise")
    p.add_argument("--out")
    _add_descent_flags(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("repro", help=f"write the data for one case ({', '.join(CASE_IDS)})")
    p.add_argument("case")
    p.add_argument("--outdir", required=True)
    _add_quad_flags(p)
    p.set_defaults(func=cmd_repro)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DimensionMismatchError as exc:
        print(f"gmr: dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_DIM
    except MixtureError as exc:
        print(f"gmr: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (TargetError, UnknownCaseError, _ArgError) as exc:
        print(f"gmr: {exc}", file=sys.stderr)
        return EXIT_ARG
    except (_NotConverged, QuadratureError) as exc:
        print(f"gmr: {exc}", file=sys.stderr)
        return EXIT_NOCONV


if __name__ == "__main__":
    sys.exit(main())
