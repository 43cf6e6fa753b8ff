"""Command-line front end.

Every command reads two distribution files (JSON documents
``{"x_size": int, "y_size": int, "p": [[...], ...]}``) and writes one table
as CSV (default) or JSON. Empty CSV cells mean "not applicable" or a
probability of exactly zero (for log columns).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Callable, Iterable, Optional

import numpy as np

from . import __version__
from .asymptotics import (
    fixed_lambda_curve,
    fixed_lambda_range,
    np_threshold_for_eps,
    optimal_exponent_curve,
    second_order_beta_approx,
    second_order_stats,
)
from .distributions import DEFAULT_MAX_TYPES, load_distribution, marginals, to_natural
from .errors import ConvergenceError, DomainError, ResourceCapError, ValidationError, ZeroRateError
from .exact import ExactEvaluator, monte_carlo_tradeoff
from .geometry import DEFAULT_TOL, project_onto_marginals
from .lambda_solver import LambdaSolver, alignment_residual, parallel_residual
from .schemes import ORACLE_MAX_N, SchemeSpec, oracle_tradeoff

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_RESOURCE = 4

DEFAULT_STEPS = 21

COLUMNS = {
    "project": ["quantity", "x", "y", "value"],
    "tradeoff": [
        "scheme",
        "method",
        "n",
        "lambda",
        "tau_or_r",
        "alpha",
        "beta",
        "log_alpha",
        "log_beta",
        "half_width_alpha",
        "half_width_beta",
    ],
    "exponents": ["curve", "lambda", "tau", "exponent1", "exponent2", "theta_p", "theta_q", "parallel_residual"],
    "solve-lambda": [
        "lambda",
        "a",
        "b",
        "type1_exponent",
        "type2_exponent",
        "residual",
        "alignment_residual",
        "parallel_residual",
        "theta_p",
        "theta_q",
        "p_lambda",
        "q_lambda",
        "llr",
    ],
    "second-order": ["n", "eps", "e", "v", "t3", "threshold", "beta_exponent_approx"],
}

EPILOG = """\
output columns (CSV header; JSON rows use the same keys):
  project       quantity,x,y,value
                quantities: e_pq, e_qp, e, v, t3 (scalars) and the tables
                p_star, q_star, j (one row per cell x,y)
  tradeoff      scheme,method,n,lambda,tau_or_r,alpha,beta,log_alpha,log_beta,
                half_width_alpha,half_width_beta
                scheme is np_like, hk or oracle; method is exact or
                monte_carlo; half widths are 95% normal intervals (MC only)
  exponents     curve,lambda,tau,exponent1,exponent2,theta_p,theta_q,
                parallel_residual
                curve is optimal, fixed_upper, fixed_lower or trajectory;
                trajectory rows give the row/column natural coordinates of
                P^lambda and Q^lambda (';'-separated) and the residual of
                their parallel-displacement condition
  solve-lambda  lambda,a,b,type1_exponent,type2_exponent,residual,
                alignment_residual,parallel_residual,theta_p,theta_q,
                p_lambda,q_lambda,llr
                theta_* are the row/column natural coordinates, tables are
                row-major; vector cells are ';'-separated
  second-order  n,eps,e,v,t3,threshold,beta_exponent_approx

exit codes: 0 ok, 2 invalid input, 3 numerical failure, 4 resource cap
"""


class InputError(Exception):
    pass


def parse_grid(text: str, name: str) -> np.ndarray:
    """``a:b:steps`` -> ``steps`` evenly spaced points from ``a`` to ``b``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise InputError(f"{name} must look like a:b:steps, got {text!r}")
    try:
        a, b, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise InputError(f"{name}: {exc}") from None
    if steps < 1 or not (math.isfinite(a) and math.isfinite(b)):
        raise InputError(f"{name} needs finite bounds and steps >= 1")
    return np.array([a]) if steps == 1 else np.linspace(a, b, steps)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return repr(v) if math.isfinite(v) else ""


def _vec(a) -> str:
    return ";".join(repr(float(x)) for x in np.ravel(a))


def _finite(v):
    if v is None or isinstance(v, str):
        return v
    v = float(v)
    return v if math.isfinite(v) else None


def _log(p: float) -> Optional[float]:
    return math.log(p) if p > 0 else None


def render(command: str, rows: list[dict], fmt: str, config: dict) -> str:
    cols = COLUMNS[command]
    if fmt == "json":
        doc = {
            "metadata": {"tool": "zerorate", "version": __version__, "command": command, "config": config},
            "columns": cols,
            "rows": [{c: _finite(r.get(c)) for c in cols} for r in rows],
        }
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in cols])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _pair(args):
    P = load_distribution(args.p)
    Q = load_distribution(args.q)
    if P.shape != Q.shape:
        raise InputError(f"P is {P.shape[0]}x{P.shape[1]} but Q is {Q.shape[0]}x{Q.shape[1]}")
    return P, Q


def _need_n(args) -> int:
    if args.n is None:
        raise InputError("--n is required for this command")
    if args.n < 1:
        raise InputError("--n must be >= 1")
    return args.n


def _table_rows(name: str, table) -> list[dict]:
    t = np.asarray(table)
    return [{"quantity": name, "x": i, "y": j, "value": t[i, j]} for i in range(t.shape[0]) for j in range(t.shape[1])]


def cmd_project(args) -> list[dict]:
    P, Q = _pair(args)
    fwd = project_onto_marginals(Q, *marginals(P), tol=args.tol)
    bwd = project_onto_marginals(P, *marginals(Q), tol=args.tol)
    stats = second_order_stats(P, Q, tol=min(args.tol, 1e-14))
    rows = [
        {"quantity": "e_pq", "value": fwd.value},
        {"quantity": "e_qp", "value": bwd.value},
        {"quantity": "e", "value": stats.e},
        {"quantity": "v", "value": stats.v},
        {"quantity": "t3", "value": stats.t3},
    ]
    rows += _table_rows("p_star", fwd.projection.p)
    rows += _table_rows("q_star", bwd.projection.p)
    rows += _table_rows("j", stats.density)
    return rows


def _lambda_grid(args, solver: LambdaSolver) -> np.ndarray:
    if args.lambda_grid:
        return parse_grid(args.lambda_grid, "--lambda-grid")
    return np.linspace(solver.lower, solver.upper, DEFAULT_STEPS)


def _r_grid(args, solver: LambdaSolver) -> np.ndarray:
    if args.r_grid:
        grid = parse_grid(args.r_grid, "--r-grid")
    else:
        # HK trades off over (0, E(Q||P)]; beyond it the type-II exponent is zero
        top = -solver.lower
        grid = np.linspace(top / DEFAULT_STEPS, top, DEFAULT_STEPS - 1)
    if np.any(grid <= 0):
        raise InputError("--r-grid values must be positive")
    return grid


def _point_row(pt, method: str, lam=None) -> dict:
    return {
        "scheme": pt.scheme,
        "method": method,
        "n": pt.n,
        "lambda": lam,
        "tau_or_r": pt.params.get("r", pt.params.get("tau")),
        "alpha": pt.alpha,
        "beta": pt.beta,
        "log_alpha": pt.log_alpha,
        "log_beta": pt.log_beta,
    }


def cmd_tradeoff(args) -> list[dict]:
    P, Q = _pair(args)
    n = _need_n(args)
    solver = LambdaSolver(P, Q, ipf_tol=min(args.tol, 1e-14))
    lams, rs = _lambda_grid(args, solver), _r_grid(args, solver)
    schemes = [SchemeSpec.np_like(lam=float(l)) for l in lams] + [SchemeSpec.hk(float(r)) for r in rs]
    rows = []
    if args.monte_carlo:
        if args.trials < 1:
            raise InputError("--trials must be >= 1")
        for s in schemes:
            est = monte_carlo_tradeoff(s, P, Q, n, args.trials, args.seed, solver)
            rows.append(
                {
                    "scheme": s.kind,
                    "method": "monte_carlo",
                    "n": n,
                    "lambda": s.lam,
                    "tau_or_r": s.param,
                    "alpha": est.alpha_hat,
                    "beta": est.beta_hat,
                    "log_alpha": _log(est.alpha_hat),
                    "log_beta": _log(est.beta_hat),
                    "half_width_alpha": est.half_width_alpha,
                    "half_width_beta": est.half_width_beta,
                }
            )
    else:
        ev = ExactEvaluator(P, Q, n, max_types=args.max_types, solver=solver)
        for s in schemes:
            rows.append(_point_row(ev.evaluate(s), "exact", s.lam))
    if args.oracle:
        for pt in oracle_tradeoff(P, Q, n, max_n=args.oracle_max_n):
            rows.append(_point_row(pt, "exact"))
    return rows


def cmd_exponents(args) -> list[dict]:
    P, Q = _pair(args)
    solver = LambdaSolver(P, Q, ipf_tol=min(args.tol, 1e-14))
    lams = _lambda_grid(args, solver)
    rows = [
        {"curve": "optimal", "lambda": p.lam, "tau": p.tau, "exponent1": p.type1_exponent, "exponent2": p.type2_exponent}
        for p in optimal_exponent_curve(P, Q, lams, solver)
    ]
    steps = len(lams)
    for which in ("upper", "lower"):
        lo, hi = fixed_lambda_range(P, Q, which, solver)
        taus = np.array([hi if which == "upper" else lo]) if steps == 1 else np.linspace(lo, hi, steps)
        for p in fixed_lambda_curve(P, Q, which, taus, solver):
            rows.append(
                {"curve": f"fixed_{which}", "lambda": p.lam, "tau": p.tau, "exponent1": p.type1_exponent, "exponent2": p.type2_exponent}
            )
    for lam in lams:
        sol = solver.solve(float(lam))
        rows.append(
            {
                "curve": "trajectory",
                "lambda": sol.lam,
                "tau": sol.lam,
                "theta_p": _vec(_row_col_theta(sol.p_lambda)),
                "theta_q": _vec(_row_col_theta(sol.q_lambda)),
                "parallel_residual": parallel_residual(sol, P, Q),
            }
        )
    return rows


def _row_col_theta(d) -> np.ndarray:
    c = to_natural(d)
    return np.concatenate([c.theta_x, c.theta_y])


def cmd_solve_lambda(args) -> list[dict]:
    P, Q = _pair(args)
    solver = LambdaSolver(P, Q, tol=min(args.tol, 1e-11), ipf_tol=min(args.tol, 1e-14))
    rows = []
    for lam in _lambda_grid(args, solver):
        sol = solver.solve(float(lam))
        rows.append(
            {
                "lambda": sol.lam,
                "a": sol.a,
                "b": sol.b,
                "type1_exponent": sol.type1_exponent,
                "type2_exponent": sol.type2_exponent,
                "residual": sol.residual,
                "alignment_residual": alignment_residual(sol, P, Q),
                "parallel_residual": parallel_residual(sol, P, Q),
                "theta_p": _vec(_row_col_theta(sol.p_lambda)),
                "theta_q": _vec(_row_col_theta(sol.q_lambda)),
                "p_lambda": _vec(sol.p_lambda.p),
                "q_lambda": _vec(sol.q_lambda.p),
                "llr": _vec(sol.llr.table),
            }
        )
    return rows


def cmd_second_order(args) -> list[dict]:
    P, Q = _pair(args)
    n = _need_n(args)
    if not 0.0 < args.eps < 1.0:
        raise InputError("--eps must lie in (0, 1)")
    stats = second_order_stats(P, Q, tol=min(args.tol, 1e-14))
    return [
        {
            "n": n,
            "eps": args.eps,
            "e": stats.e,
            "v": stats.v,
            "t3": stats.t3,
            "threshold": np_threshold_for_eps(P, Q, n, args.eps, stats),
            "beta_exponent_approx": second_order_beta_approx(P, Q, n, args.eps, stats),
        }
    ]


COMMANDS: dict[str, Callable] = {
    "project": cmd_project,
    "tradeoff": cmd_tradeoff,
    "exponents": cmd_exponents,
    "solve-lambda": cmd_solve_lambda,
    "second-order": cmd_second_order,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="zerorate",
        description="Neyman-Pearson-like testing under zero-rate multiterminal compression.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=list(COMMANDS))
    ap.add_argument("--p", required=True, metavar="FILE", help="distribution under H0")
    ap.add_argument("--q", required=True, metavar="FILE", help="distribution under H1")
    ap.add_argument("--n", type=int, help="blocklength")
    ap.add_argument(
        "--lambda-grid",
        metavar="A:B:STEPS",
        help="default: the full lambda interval, 21 points; write --lambda-grid=-a:b:k for negative a",
    )
    ap.add_argument("--r-grid", metavar="A:B:STEPS", help="default: 20 points in (0, E(Q||P)]")
    ap.add_argument("--eps", type=float, default=0.1, help="type-I error target (second-order)")
    ap.add_argument("--trials", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--oracle", action="store_true", help="append the most powerful symmetric envelope")
    ap.add_argument("--oracle-max-n", type=int, default=ORACLE_MAX_N, help=argparse.SUPPRESS)
    ap.add_argument("--monte-carlo", action="store_true", help="estimate errors by simulation")
    ap.add_argument("--out", metavar="FILE", help="output path (default: stdout)")
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ap.add_argument("--max-types", type=int, default=DEFAULT_MAX_TYPES)
    ap.add_argument("--tol", type=float, default=DEFAULT_TOL, help="projection tolerance")
    return ap


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "out"}


def main(argv: Optional[Iterable[str]] = None) -> int:
    args = build_parser().parse_args(None if argv is None else list(argv))
    try:
        if args.seed < 0 or args.seed >= 2**64:
            raise InputError("--seed must be a 64-bit unsigned value")
        if not args.tol > 0:
            raise InputError("--tol must be positive")
        rows = COMMANDS[args.command](args)
        text = render(args.command, rows, args.format, _config(args))
    except (InputError, ValidationError, DomainError, OSError) as exc:
        print(f"zerorate: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ResourceCapError as exc:
        print(f"zerorate: error: {exc}; rerun with --monte-carlo", file=sys.stderr)
        return EXIT_RESOURCE
    except (ConvergenceError, ZeroRateError, ArithmeticError) as exc:
        print(f"zerorate: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
