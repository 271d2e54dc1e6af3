"""
Command line front end.

``nisd detect|decompose|dalpha|wold|gamma --spec FILE --out FILE`` reads a
problem file (see :mod:`nisd.problem`), runs one pipeline and writes a JSON
report. Exit codes: 0 success, 1 malformed input, 2 inconclusive at the
budget, 3 no admissible parameters, 4 numerical failure.
"""
import argparse
import json
import logging
import math
import os
import sys
import time

import pandas as pd
import torch

from . import __version__
from .blaschke import BlaschkeProduct, wold_decompose
from .dirichlet import (
    Norm1Params,
    choose_params,
    empirical_lower_bound,
    lower_bound_gamma2,
    norm1,
    norm2,
    norm_alpha,
)
from .errors import BudgetError, NisdError, ShapeError, SpecError
from .nearinv import dalpha_decompose, detect, reconstruct, transfer_decompose
from .object.vector import CoeffFn, HardySpec
from .problem import SCHEMA_VERSION, ProblemSpec, build_problem, encode_complex, encode_tensor

logger = logging.getLogger(__name__)

COMMANDS = ("detect", "decompose", "dalpha", "wold", "gamma")


def jsonable(x):
    """Tensors and complex numbers as nested ``[re, im]`` lists."""
    if isinstance(x, torch.Tensor):
        if x.is_complex():
            return encode_tensor(x)
        return x.tolist()
    if isinstance(x, complex):
        return encode_complex(x)
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def coefficient_frame(table, prefix):
    """One row per power, a ``re``/``im`` column pair per component."""
    columns = {}
    for j in range(table.size(1)):
        columns["%s%d_re" % (prefix, j)] = table[:, j].real.tolist()
        columns["%s%d_im" % (prefix, j)] = table[:, j].imag.tolist()
    frame = pd.DataFrame(columns)
    frame.index.name = "k"
    return frame


def write_csv(directory, name, frame):
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, name + ".csv")
    frame.to_csv(path)
    logger.debug("wrote %s", path)


def _report_fields(report):
    return {
        "r": report.r,
        "p": report.p,
        "contained_in_TH": report.contained_in_TH,
        "residuals": report.residuals,
        "norm_slack": report.norm_slack,
        "minimality": report.minimality,
        "G0": report.G0.data,
        "F1": report.F1.data,
    }


def _detect(problem):
    spec = problem.spec
    return detect(
        problem.M,
        problem.shift,
        spec.rank_tol,
        leak_tol=spec.tolerances["leak"],
        check_tol=spec.tolerances["check"],
    )


def _operator_blaschke(problem):
    if problem.blaschke is not None:
        return problem.blaschke
    if problem.spec.operator["kind"] == "shift":
        return BlaschkeProduct([0j])
    raise SpecError("this command needs a shift or Blaschke operator")


def cmd_detect(problem, args):
    spec = problem.spec
    if spec.space["kind"] == "dalpha":
        result = dalpha_decompose(
            problem.generators,
            problem.blaschke,
            spec.space["alpha"],
            F=problem.defect,
            tol=spec.rank_tol,
        )
        report = result.report
        multiplicity = result.shift.multiplicity
    else:
        report = _detect(problem)
        multiplicity = problem.shift.multiplicity
    out = _report_fields(report)
    out["multiplicity"] = multiplicity
    out["acceptance"] = {
        "near_invariant": report.residuals["near_invariance"] <= spec.tolerances["check"]
    }
    if args.replay_budget:
        budget = 2 * spec.budget
        replay = cmd_detect(build_problem(spec.with_overrides(budget=budget)), _no_replay(args))
        out["replay"] = {
            "budget": budget,
            "r": replay["r"],
            "p": replay["p"],
            "stable": (replay["r"], replay["p"]) == (report.r, report.p),
        }
    return out


def _no_replay(args):
    ns = argparse.Namespace(**vars(args))
    ns.replay_budget = False
    return ns


def cmd_decompose(problem, args):
    spec = problem.spec
    if spec.space["kind"] == "dalpha":
        raise SpecError("use the dalpha command for D_alpha problems")
    tol = spec.rank_tol
    F = problem.F if problem.F is not None else _detect(problem).F1
    result = transfer_decompose(problem.M, F, problem.shift, tol=tol, functions=problem.generators)
    functions = []
    round_trips = []
    for i, pair in enumerate(result.pairs):
        f = problem.generators[:, i]
        norm_sq = torch.linalg.vector_norm(f).item() ** 2
        entry = {
            "c": pair.c,
            "b": pair.b,
            "norm_sq": norm_sq,
            "isometry_defect": pair.isometry_defect,
            "bessel_slack": norm_sq - (pair.c.abs() ** 2).sum().item() - (pair.b.abs() ** 2).sum().item(),
            "round_trip_error": None,
        }
        if result.U is not None:
            try:
                rebuilt = reconstruct(pair, result.G0, result.F1, problem.shift, result.U)
                entry["round_trip_error"] = torch.linalg.vector_norm(rebuilt - f).item()
                round_trips.append(entry["round_trip_error"] <= 1e-9 * max(1.0, math.sqrt(norm_sq)))
            except BudgetError as e:
                logger.warning("round trip of function %d skipped: %s", i, e)
        functions.append(entry)
        if args.csv:
            if pair.c.numel():
                write_csv(args.csv, "c_%d" % i, coefficient_frame(pair.c, "c"))
            if pair.b.numel():
                write_csv(args.csv, "b_%d" % i, coefficient_frame(pair.b, "b"))
    return {
        "case": result.case,
        "r": result.G0.dim,
        "p": result.F1.dim,
        "G0": result.G0.data,
        "F1": result.F1.data,
        "K": result.K.data,
        "dim_K": result.K.dim,
        "invariance_residual": result.invariance_residual,
        "steps": result.steps,
        "remainder": result.remainder,
        "functions": functions,
        "acceptance": {
            "isometry": all(p.isometry_defect <= 1e-10 * max(1.0, e["norm_sq"]) for p, e in zip(result.pairs, functions)),
            "invariance": result.invariance_residual <= 1e-10,
            "round_trip": all(round_trips) if round_trips else None,
        },
    }


def cmd_dalpha(problem, args):
    spec = problem.spec
    if spec.space["kind"] != "dalpha":
        raise SpecError("the dalpha command needs a 'dalpha' space")
    alpha = spec.space["alpha"]
    result = dalpha_decompose(
        problem.generators,
        problem.blaschke,
        alpha,
        F=problem.defect,
        tol=spec.rank_tol,
    )
    terms = []
    for i, term in enumerate(result.terms):
        pointwise = term.factorization.pointwise
        terms.append(
            {
                "c": term.c,
                "b": term.b,
                "norm_f": term.norm_f,
                "norm_q": term.norm_q,
                "norm_h": term.norm_h,
                "bound": term.bound_check,
                "pointwise_max_error": max((e for _, e, _ in pointwise), default=None),
                "series_budget": term.factorization.series_budget,
            }
        )
        if args.csv:
            if term.c.numel():
                write_csv(args.csv, "c_%d" % i, coefficient_frame(term.c, "c"))
            if term.b.numel():
                write_csv(args.csv, "b_%d" % i, coefficient_frame(term.b, "b"))
    out = {
        "alpha": alpha,
        "gamma": result.gamma,
        "s": result.s,
        "layers": result.layers,
        "r": result.report.r,
        "p": result.report.p,
        "residuals": result.report.residuals,
        "terms": terms,
        "ts_invariance": result.ts_invariance,
        "certificate": None,
        "acceptance": {"norm_inequality": all(t.bound_check["holds"] for t in result.terms)},
    }
    if result.certificate is not None:
        cert = result.certificate.to_dict()
        cert["replayed_ratio"] = result.certificate.replay()
        out["certificate"] = cert
        out["acceptance"]["certificate"] = cert["ratio"] < 1 - cert["eta"]
    return out


def cmd_wold(problem, args):
    spec = problem.spec
    B = _operator_blaschke(problem)
    fspec = problem.function_spec
    if fspec.m != 1:
        raise ShapeError("Wold layers are computed for scalar functions")
    alpha = spec.space.get("alpha") if spec.space["kind"] == "dalpha" else None
    params = None
    if alpha is not None and alpha < 0:
        G = choose_params(B, alpha)[0]
        params = Norm1Params(G, alpha, B)
    functions = []
    for i in range(problem.generators.size(1)):
        f = CoeffFn(HardySpec(1, fspec.degree), problem.generators[:, i].view(-1, 1))
        wold = wold_decompose(f, B)
        norms = [h.norm() for h in wold.layers]
        entry = {
            "norm": f.norm(),
            "layer_norms": norms,
            "residual": wold.residual,
            "remainder": wold.remainder,
        }
        if alpha is not None:
            entry["norm_alpha"] = norm_alpha(f, alpha)
            if params is not None:
                entry["norm1"] = norm1(f, params).value
            else:
                entry["norm2"] = norm2(f, alpha, B).value
        functions.append(entry)
        if args.csv:
            frame = pd.DataFrame({"norm": norms})
            frame.index.name = "n"
            write_csv(args.csv, "wold_%d" % i, frame)
    return {
        "blaschke": {"zeros": [encode_complex(z) for z in B.zeros], "phase": encode_complex(B.phase)},
        "functions": functions,
        "acceptance": {
            "round_trip": all(e["residual"] <= 1e-10 * max(1.0, e["norm"]) for e in functions)
        },
    }


def cmd_gamma(problem, args):
    spec = problem.spec
    B = _operator_blaschke(problem)
    alpha = spec.space.get("alpha", 0.0) if spec.space["kind"] == "dalpha" else 0.0
    generator = torch.Generator().manual_seed(spec.seed)
    out = {"alpha": alpha, "gamma2": lower_bound_gamma2(), "certificate": None}
    if alpha < 0:
        G, s, g1, cert = choose_params(B, alpha)
        emp = empirical_lower_bound(
            B, alpha, trials=args.trials, params=Norm1Params(G, alpha, B), generator=generator
        )
        cert_dict = cert.to_dict()
        cert_dict["replayed_ratio"] = cert.replay()
        out.update(
            {
                "gamma1": g1,
                "empirical_gamma1": emp,
                "certificate": cert_dict,
                "acceptance": {
                    "gamma1_bound": emp >= g1 - 1e-8,
                    "certificate": cert.ratio < 1 - cert.eta,
                },
            }
        )
    else:
        emp = empirical_lower_bound(B, alpha, trials=args.trials, generator=generator)
        out.update(
            {
                "empirical_gamma2": emp,
                "acceptance": {"gamma2_bound": emp >= lower_bound_gamma2() - 1e-10},
            }
        )
    return out


HANDLERS = {
    "detect": cmd_detect,
    "decompose": cmd_decompose,
    "dalpha": cmd_dalpha,
    "wold": cmd_wold,
    "gamma": cmd_gamma,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", required=True, help="problem file (JSON)")
    common.add_argument("--out", required=True, help="report file (JSON)")
    common.add_argument("--budget", type=int, default=None, help="override the space budget")
    common.add_argument("--tol", type=float, default=None, help="override the relative rank tolerance")
    common.add_argument("--seed", type=int, default=None, help="override the seed")
    common.add_argument("--no-timings", action="store_true", help="leave timings out of the report")
    common.add_argument("--csv", default=None, metavar="DIR", help="write coefficient tables as CSV")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="nisd", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version="nisd " + __version__)
    sub = parser.add_subparsers(dest="command", required=True)
    detect_cmd = sub.add_parser("detect", parents=[common], help="wandering and defect spaces")
    detect_cmd.add_argument(
        "--replay-budget",
        action="store_true",
        help="rerun at twice the budget and compare (r, p)",
    )
    sub.add_parser("decompose", parents=[common], help="transfer to (K0, K1) and the space K")
    sub.add_parser("dalpha", parents=[common], help="decomposition in D_alpha")
    sub.add_parser("wold", parents=[common], help="Wold layers of each generator")
    gamma_cmd = sub.add_parser("gamma", parents=[common], help="lower bounds of T_B")
    gamma_cmd.add_argument("--trials", type=int, default=20)
    return parser


def _write(path, report):
    with open(path, "w") as f:
        json.dump(jsonable(report), f, sort_keys=True, indent=2)
        f.write("\n")


def run(args):
    """Runs one command and returns ``(report, exit_code)``."""
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "versions": {"nisd": __version__, "torch": torch.__version__},
    }
    start = time.perf_counter()
    try:
        spec = ProblemSpec.load(args.spec).with_overrides(args.budget, args.tol, args.seed)
        report["problem"] = spec.to_dict()
        report["seed"] = spec.seed
        torch.manual_seed(spec.seed)
        problem = build_problem(spec)
        report.update(HANDLERS[args.command](problem, args))
        report["status"] = "ok"
        code = 0
    except NisdError as e:
        logger.error("%s: %s", type(e).__name__, e)
        report["status"] = "error"
        report["error"] = {"type": type(e).__name__, "message": str(e)}
        code = e.exit_code
    if not args.no_timings:
        report["timings"] = {"total_seconds": time.perf_counter() - start}
    return report, code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    report, code = run(args)
    _write(args.out, report)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
