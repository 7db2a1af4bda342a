"""Command-line driver.

Exit codes: 0 success, 1 a checker found a violation (or an instance is
infeasible), 2 malformed input.  Reports go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import ergodic as erg
from . import io as lio
from .duality import dual_value
from .lp import InfeasibleError
from .regularize import c_epsilon_curve, default_ladder, regularize
from .space import ValidationError
from .stochastic import domination_sup, occupation_lp, relative_value_iteration
from .transfer import UnsupportedRepresentation

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _load(path):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"no such file: {path}")
    try:
        return lio.load_json(p)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def _number(c) -> dict:
    out = {"c": lio.encode_number(c)}
    if isinstance(c, Fraction):
        out["c_exact"] = str(c)
    return out


def _eps_list(text: str | None) -> list:
    if text is None:
        return default_ladder()
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise InputError(f"--eps expects numbers, got {text!r}") from exc
    if not vals or any(v <= 0 for v in vals):
        raise InputError("--eps values must be positive")
    return vals


# ---------------------------------------------------------------------------
# verbs; each returns (report dict, exit code, optional matrix for --csv)
# ---------------------------------------------------------------------------

def cmd_eval(args):
    T = lio.transfer_from_json(_load(args.transfer))
    mu = lio.measure_from_json(_load(args.mu), T.source)
    nu = lio.measure_from_json(_load(args.nu), T.target)
    rep = dual_value(T, mu, nu)
    value = np.inf if rep.unbounded else rep.value
    out = {"value": lio.encode_number(value), "method": rep.method, "gap": rep.gap,
           "iterations": rep.iterations}
    if T.cost is not None:
        out["primal"] = lio.encode_number(T(mu, nu))
    return out, EXIT_OK, None


def cmd_mane(args):
    T = lio.transfer_from_json(_load(args.transfer))
    method = args.method or "karp"
    if method == "iterate":
        est = erg.mane_iterative(T, n=args.iterations)
        out = {"c": lio.encode_number(est.value), "bound": est.bound, "n": est.n,
               "diverged": est.diverged}
    else:
        c = erg.mane_min_mean_cycle(T) if method == "karp" else erg.mane_diag_lp(T)
        out = _number(c)
        out["exact"] = isinstance(c, Fraction)
    out["method"] = method
    return out, EXIT_OK, None


def _cost_c(T, method):
    if T.cost is None:
        return erg.mane_iterative(T, n=1000).value
    return erg.mane_diag_lp(T) if method == "lp" else erg.mane_min_mean_cycle(T)


def cmd_weak_kam(args):
    T = lio.transfer_from_json(_load(args.transfer))
    c = _cost_c(T, args.method)
    wk = erg.weak_kam_solve(T, c)
    out = {**_number(c), "u": lio.encode_vector(wk.u), "residual": wk.residual,
           "iterations": wk.iterations, "exact": wk.exact, "pinned": 0,
           "method": "window-limsup+monotone"}
    status = EXIT_OK if wk.residual <= args.tol else EXIT_VIOLATION
    return out, status, None


def cmd_peierls(args):
    T = lio.transfer_from_json(_load(args.transfer))
    c = _cost_c(T, args.method)
    pe = erg.peierls_barrier(T, c)
    out = {**_number(c), "c_inf": lio.encode_matrix(pe.table), "critical": pe.critical,
           "aubry": erg.aubry_set(pe), "exact": pe.exact, "scale": pe.scale,
           "ambiguous": pe.ambiguous, "method": "kleene-star", "tolerance": erg.CRITICAL_TOL}
    return out, EXIT_OK, pe.table


def cmd_mather(args):
    T = lio.transfer_from_json(_load(args.transfer))
    pi = erg.mather_measure(T)
    c = erg.mane_min_mean_cycle(T)
    out = {**_number(c), "plan": lio.encode_matrix(pi.weights),
           "support": [list(s) for s in pi.support()], "cost": pi.cost(T.cost),
           "method": "critical-cycle"}
    return out, EXIT_OK, pi.weights


def cmd_schrodinger(args):
    obj = _load(args.transfer)
    if "kernel" not in obj:
        raise InputError("schrodinger needs a transfer with a 'kernel'")
    P = lio.decode_array(obj["kernel"])
    m, checks = erg.schrodinger_effective(P, tol=min(args.tol, 1e-12) if args.tol else 1e-12)
    out = {"m": lio.encode_vector(m), **checks, "method": "kernel-powers"}
    return out, EXIT_OK, None


def cmd_stochastic(args):
    ch = lio.chain_from_json(_load(args.chain))
    rvi = relative_value_iteration(ch)
    occ = occupation_lp(ch)
    sup = domination_sup(ch, rvi.u)
    out = {"c_rvi": rvi.c, "c_lp": occ.c, "u": lio.encode_vector(rvi.u),
           "residual": rvi.residual, "iterations": rvi.iterations,
           "policy": [ch.controls[k] for k in rvi.policy],
           "occupation": lio.encode_matrix(occ.m), "invariance_residual": occ.invariance_residual,
           "domination_sup": sup, "method": "rvi+occupation-lp", "tol": args.tol}
    ok = abs(rvi.c - occ.c) <= max(args.tol, 1e-7)
    return out, EXIT_OK if ok else EXIT_VIOLATION, occ.m


def cmd_regularize(args):
    T = lio.transfer_from_json(_load(args.transfer))
    ladder = _eps_list(args.eps)
    curve = c_epsilon_curve(T, ladder)
    ladder = sorted(ladder, reverse=True)
    out = {"eps": ladder, "c_eps": [lio.encode_number(v) for v in curve],
           **_number(erg.mane_min_mean_cycle(T.cost)), "method": "S_eps o T o S_eps"}
    finest = regularize(T, ladder[-1])
    return out, EXIT_OK, finest.cost


def cmd_inequality(args):
    from .inequalities import maurey_dual_check, primal_inequality_scan

    spec = lio.inequality_from_json(_load(args.spec))
    d = maurey_dual_check(spec, tol=args.tol)
    p = primal_inequality_scan(spec, tol=args.tol)
    out = {"name": spec.name, "dual": d.to_json(), "primal": p.to_json(),
           "implication_holds": (not d.passes) or p.passes}
    return out, EXIT_OK if (d.passes and p.passes) else EXIT_VIOLATION, None


def cmd_selftest(args):
    from .acceptance import run_all

    results = run_all(echo=lambda line: print(line, file=sys.stderr))
    out = {"criteria": [{"number": r.number, "name": r.name, "passed": r.passed,
                         "detail": r.detail, "seconds": round(r.seconds, 3)} for r in results],
           "all_passed": all(r.passed for r in results)}
    return out, EXIT_OK if out["all_passed"] else EXIT_VIOLATION, None


VERBS = {
    "eval": cmd_eval, "mane": cmd_mane, "weak-kam": cmd_weak_kam, "peierls": cmd_peierls,
    "mather": cmd_mather, "schrodinger": cmd_schrodinger, "stochastic": cmd_stochastic,
    "regularize": cmd_regularize, "inequality": cmd_inequality, "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lintransfer",
                                     description="Linear transfers on finite spaces")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--format", choices=("json", "text"), default="json")
        p.add_argument("--tol", type=float, default=1e-9)
        p.add_argument("--method", choices=("karp", "lp", "iterate"))
        p.add_argument("--eps")
        p.add_argument("--csv", help="write the report's matrix to this CSV file")
        if verb in ("eval", "mane", "weak-kam", "peierls", "mather", "schrodinger", "regularize"):
            p.add_argument("--transfer", required=True)
        if verb == "eval":
            p.add_argument("--mu", required=True)
            p.add_argument("--nu", required=True)
        if verb == "mane":
            p.add_argument("--iterations", type=int, default=1000)
        if verb == "stochastic":
            p.add_argument("--chain", required=True)
        if verb == "inequality":
            p.add_argument("--spec", required=True)
    return parser


def _text(report: dict) -> str:
    lines = []
    for k, v in report.items():
        lines.append(f"{k}: {json.dumps(v) if isinstance(v, (list, dict)) else v}")
    return "\n".join(lines)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    t0 = time.perf_counter()
    try:
        report, status, matrix = VERBS[args.verb](args)
    except (InputError, ValidationError, KeyError, TypeError, ValueError,
            UnsupportedRepresentation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    report["seconds"] = round(time.perf_counter() - t0, 6)
    if args.csv and matrix is not None:
        Path(args.csv).write_text(lio.matrix_to_csv(matrix))
    print(_text(report) if args.format == "text" else lio.dumps(report))
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
