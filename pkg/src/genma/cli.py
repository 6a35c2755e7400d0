"""Command line entry point: ``genma <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 solver or path failure, 3 invalid
problem.  Errors are also reported as one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import fieldio
from .continuity import SolverConfig, continuity_run, seeded_continuity_run
from .core import NormalizationConstants, normalization_constants, residual, validation_report
from .errors import AdmissibilityError, InvalidProblem, NewtonFailure, PathFailure
from .torus import ScalarField

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_INVALID = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _grid_arg(text):
    parts = [p for p in text.replace("x", ",").split(",") if p]
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}")
    return vals[0] if len(vals) == 1 else vals


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="problem JSON file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--grid", type=_grid_arg,
                        help="N (resolution of z^1) or a comma list of sizes per coordinate")
    common.add_argument("--tol", type=float, help="Newton tolerance on the sup residual")
    common.add_argument("--tmax", type=float, help="stop the path at this t (default 1)")
    common.add_argument("--quiet", action="store_true", help="print nothing on success")

    p = _Parser(prog="genma", description="Generalised Monge-Ampere solver on flat tori")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, helptext in [
        ("solve", "run the continuity path on a problem file"),
        ("validate", "check problem invariants without solving"),
        ("chern", "build the alpha_p of a Chern character problem"),
        ("slag", "compute the phase and hypotheses of a 3-fold problem"),
    ]:
        s = sub.add_parser(name, parents=[common], help=helptext)
        if name in ("chern", "slag"):
            s.add_argument("--solve", action="store_true", help="also run the continuity path")
    ex = sub.add_parser("example", parents=[common], help="tan(theta_k) table for the tensor-power example")
    ex.add_argument("--k", type=int, default=20, help="largest k in the table (from 2)")
    ex.add_argument("--eps", type=float, default=1e-3)
    ex.add_argument("--intersections", type=float, nargs=4, metavar=("I30", "I21", "I12", "I03"),
                    default=(1.0, 1.0, 1.0, 1.0))
    sub.add_parser("selftest", parents=[common], help="run quick property checks")
    return p


def _emit_error(kind: str, message: str, **extra) -> None:
    payload = {"error": kind, "message": message}
    payload.update({k: v for k, v in extra.items() if v is not None})
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")


def _solver_config(cfg: dict, args) -> SolverConfig:
    opts = dict(cfg.get("solver", {}))
    known = {f.name for f in fields(SolverConfig)}
    unknown = set(opts) - known
    if unknown:
        raise InvalidProblem(f"unknown solver options {sorted(unknown)}", check="schema")
    sc = SolverConfig(**opts)
    if args.tol is not None:
        sc = replace(sc, newton_tol=args.tol)
    return sc


def _tmax(cfg: dict, args) -> float:
    t = args.tmax if args.tmax is not None else float(cfg.get("tmax", 1.0))
    if not 0.0 <= t <= 1.0:
        raise UsageError(f"--tmax must lie in [0, 1], got {t}")
    return t


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args) -> dict:
    if not args.config:
        raise UsageError("--config is required")
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file {path} does not exist")
    return fieldio.load_config(path)


def _say(args, obj) -> None:
    if not args.quiet:
        sys.stdout.write(fieldio.dumps(obj))


def _solve_seeded(problem, scfg, out, summary: dict) -> dict:
    phi, trace, svals = seeded_continuity_run(problem, scfg)
    if out is not None:
        with open(out / "trace.csv", "w") as fh:
            trace.write_csv(fh)
        fieldio.write_field(out / "phi.gmaf", phi)
    norm = NormalizationConstants(c=1.0, volume=1.0, top_mass=1.0, mixed=(0.0,) * problem.n)
    summary.update({
        "path": "seeded",
        "steps": len(trace),
        "seed_steps": len(svals),
        "final_residual": residual(problem, phi, 1.0, norm).sup(),
        "sup_phi": phi.sup(),
    })
    summary["_phi"] = phi
    return summary


def _solve(problem, cfg, args, out, summary: dict) -> dict:
    scfg = _solver_config(cfg, args)
    tmax = _tmax(cfg, args)
    if problem.allow_zero_top and problem.mixed_integrals()[-1] <= 0:
        if tmax != 1.0:
            raise UsageError("the seeded path only runs to t = 1")
        return _solve_seeded(problem, scfg, out, summary)
    norm = normalization_constants(problem)
    try:
        phi, trace = continuity_run(problem, scfg, tmax=tmax)
    except PathFailure as exc:
        if out is not None and exc.trace is not None:
            with open(out / "trace.csv", "w") as fh:
                exc.trace.write_csv(fh)
        raise
    if out is not None:
        with open(out / "trace.csv", "w") as fh:
            trace.write_csv(fh)
        fieldio.write_field(out / "phi.gmaf", phi)
    last = trace.rows[-1]
    rate_t, rate = trace.newton_rate()
    summary.update({
        "tmax": tmax,
        "c": norm.c,
        "b_t": norm.b(tmax),
        "top_weight": norm.top_weight(tmax),
        "steps": len(trace),
        "final_residual": last.residual_sup,
        "newton_iterations": last.newton_iterations,
        "convergence_ratio": rate,
        "convergence_ratio_t": rate_t,
        "sup_phi": last.sup_phi,
        "min_ellipticity_slack": float(np.min(trace.column("ellipticity_slack"))),
        "stagnated": any(r.stagnated for r in trace),
    })
    summary["_phi"] = phi
    return summary


def _finish(args, out, summary: dict) -> None:
    summary.pop("_phi", None)
    if out is not None:
        fieldio.write_json(out / "summary.json", summary)
    _say(args, summary)


def cmd_solve(args) -> int:
    cfg = _load(args)
    kind = fieldio.problem_kind(cfg)
    if kind != "gma":
        return {"chern": cmd_chern, "slag": cmd_slag}[kind](args, solve=True, cfg=cfg)
    problem = fieldio.problem_from_config(cfg, args.grid)
    out = _out_dir(args)
    summary = {"command": "solve", "kind": kind, "n": problem.n, "sizes": list(problem.grid.sizes)}
    _solve(problem, cfg, args, out, summary)
    _finish(args, out, summary)
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args)
    kind = fieldio.problem_kind(cfg)
    extra = {}
    if kind == "chern":
        from .chern_weil import build_alphas, chern_problem, hypothesis_report
        data = fieldio.chern_from_config(cfg, args.grid)
        alphas = build_alphas(data)
        extra["hypotheses"] = hypothesis_report(alphas).as_dict()
        problem = chern_problem(data, fieldio.witness_from_config(cfg.get("witness")), validate=False, alphas=alphas)
    elif kind == "slag":
        from .slag import build_slag_problem
        data = fieldio.slag_from_config(cfg, args.grid)
        extra["phase"] = data.report()
        problem = build_slag_problem(data, validate=False)
    else:
        problem = fieldio.problem_from_config(cfg, args.grid, validate=False)
    report = validation_report(problem)
    report.update(extra)
    out = _out_dir(args)
    if out is not None:
        fieldio.write_json(out / "report.json", report)
    _say(args, report)
    if not report["valid"]:
        _emit_error("invalid_problem", report["message"], check=report["check"])
        return EXIT_INVALID
    return EXIT_OK


def cmd_chern(args, solve=None, cfg=None) -> int:
    from .chern_weil import build_alphas, chern_problem, chern_residual_direct, hypothesis_report

    cfg = cfg if cfg is not None else _load(args)
    if "chern" not in cfg:
        raise InvalidProblem("config has no 'chern' block", check="schema")
    data = fieldio.chern_from_config(cfg, args.grid)
    alphas = build_alphas(data)
    hyp = hypothesis_report(alphas)
    out = _out_dir(args)
    if out is not None:
        for p, a in enumerate(alphas, start=1):
            fieldio.write_field(out / f"alpha_{p}.gmaf", a)
        if hyp.psi is not None:
            fieldio.write_field(out / "psi.gmaf", ScalarField(data.grid, hyp.psi))
    summary = {"command": "chern", "n": data.n, "sizes": list(data.grid.sizes), "hypotheses": hyp.as_dict()}
    if solve or getattr(args, "solve", False):
        problem = chern_problem(data, fieldio.witness_from_config(cfg.get("witness")), alphas=alphas)
        _solve(problem, cfg, args, out, summary)
        summary["chern_residual"] = chern_residual_direct(data, summary["_phi"]).sup()
    _finish(args, out, summary)
    return EXIT_OK


def cmd_slag(args, solve=None, cfg=None) -> int:
    from .slag import build_slag_problem

    cfg = cfg if cfg is not None else _load(args)
    if "slag" not in cfg:
        raise InvalidProblem("config has no 'slag' block", check="schema")
    data = fieldio.slag_from_config(cfg, args.grid)
    problem = build_slag_problem(data)
    out = _out_dir(args)
    summary = {"command": "slag", "n": 3, "sizes": list(problem.grid.sizes), "phase": data.report(),
               "witness": {"delta": problem.witness.delta, "k0": problem.witness.k0}}
    if solve or getattr(args, "solve", False):
        _solve(problem, cfg, args, out, summary)
    _finish(args, out, summary)
    return EXIT_OK


def cmd_example(args) -> int:
    from .slag import example_table

    if args.k < 2:
        raise UsageError("--k must be at least 2")
    if not args.eps > 0:
        raise UsageError("--eps must be positive")
    rows = example_table(range(2, args.k + 1), args.eps, tuple(args.intersections))
    lines = ["k,tan_theta,tan_theta_over_k"] + [f"{k},{v:.17g},{v / k:.17g}" for k, v in rows]
    text = "\n".join(lines) + "\n"
    out = _out_dir(args)
    if out is not None:
        (out / "example.csv").write_text(text)
    if not args.quiet:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_all

    results = run_all()
    if not args.quiet:
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_SOLVER


COMMANDS = {
    "solve": cmd_solve, "validate": cmd_validate, "chern": cmd_chern,
    "slag": cmd_slag, "example": cmd_example, "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        _emit_error("usage", str(exc))
        return EXIT_USAGE
    except InvalidProblem as exc:
        _emit_error("invalid_problem", str(exc), check=exc.check)
        return EXIT_INVALID
    except PathFailure as exc:
        last = exc.trace.rows[-1].t if exc.trace is not None and len(exc.trace) else None
        _emit_error("path_failure", str(exc), collapsed=exc.collapsed, last_t=last)
        return EXIT_SOLVER
    except (NewtonFailure, AdmissibilityError) as exc:
        _emit_error("solver_failure", str(exc))
        return EXIT_SOLVER
    except ValueError as exc:
        # malformed values that slipped past argparse (grid sizes, options)
        _emit_error("usage", str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
