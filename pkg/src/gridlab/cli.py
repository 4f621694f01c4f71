"""Command-line interface: ``gridlab <command> [options]``.

Every run writes one JSON report (stdout or ``--out``) that embeds the full
configuration, seed, arithmetic mode and version, so a report can be
reproduced from its own contents.

Exit codes: 0 all audits pass, 2 some hypothesis unmet (and nothing failed),
1 an audit failed, 3 usage or input error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction

import numpy as np

from .core import (
    FAIL,
    PASS,
    UNMET,
    CylinderIntersection,
    DensityFunction,
    Grid2,
    Grid3Indicator,
    GridlabError,
    __version__,
    as_array,
    format_grid,
    frac,
    jsonable,
    parse_grid,
    worker_count,
)

EXIT_OK, EXIT_FAIL, EXIT_UNMET, EXIT_USAGE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _number(text: str):
    """Parse '3', '1/8' or '0.25' into an int or Fraction."""
    try:
        v = frac(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text}") from exc
    return int(v) if v.denominator == 1 else v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--exact", action="store_true", help="exact rational arithmetic")
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    common.add_argument("--config", help="JSON file whose keys provide option defaults")

    parser = _Parser(prog="gridlab", description="Grid norms, spread matrices, slice covers and NOF experiments.",
                     parents=[common])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("norms", parents=[common], help="vector, flat, grid and operator norms")
    p.add_argument("--input", required=True)
    p.add_argument("--norm", choices=["lp", "flat", "grid", "op", "flatop", "sandwich", "matrix-sandwich"],
                   default="grid")
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--p", type=_number, default=2)
    p.add_argument("--l", type=_number, default=2)
    p.add_argument("--k", type=_number, default=2)
    p.add_argument("--r", type=_number, default=2)
    p.add_argument("--d", type=_number, default=1)
    p.add_argument("--eps", type=_number, default=Fraction(1, 10))

    p = sub.add_parser("spread", parents=[common], help="spreadness, density increment and product audits")
    p.add_argument("--input", required=True)
    p.add_argument("--input2", help="second matrix for decouple / product")
    p.add_argument("--audit", choices=["spread", "increment", "gridbound", "shift", "decouple", "product"],
                   default="spread")
    p.add_argument("--t", type=_number, default=2)
    p.add_argument("--eps", type=_number, default=Fraction(1, 10))
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--p", type=int, default=40)
    p.add_argument("--d", type=_number, default=1)
    p.add_argument("--floor", type=_number, default=0)

    p = sub.add_parser("cover", parents=[common], help="slice covers, dual packings and certificates")
    p.add_argument("--input", required=True, help="grid3 file, or JSON with fxy/gxz/hyz faces")
    p.add_argument("--mode", choices=["fractional", "dual", "round", "removal", "certify"], default="fractional")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--floor-exp", type=int, default=None, help="slice density floor 2^-floor_exp")
    p.add_argument("--t", type=int, default=2)
    p.add_argument("--fail-prob", type=_number, default=Fraction(1, 10))

    p = sub.add_parser("evasive", parents=[common], help="the set D and its evasiveness")
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--audit", choices=["build", "measure", "ci"], default="build")
    p.add_argument("--input", help="grid3 file with F for --audit ci")
    p.add_argument("--t", type=int, default=2)
    p.add_argument("--grid-out", help="also write D in grid3 format here")

    p = sub.add_parser("nof", parents=[common], help="protocol, cover numbers and CI search")
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--r", type=int, default=10)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--mode", choices=["protocol", "cover", "maxci", "report"], default="report")
    p.add_argument("--instance", type=int, nargs=3, default=[0, 0, 0], metavar=("X", "Y", "Z"))
    p.add_argument("--restarts", type=int, default=20)

    p = sub.add_parser("audit-all", parents=[common], help="run every audit on random instances")
    p.add_argument("--scale", choices=["micro", "small"], default="micro")
    p.add_argument("--csv", help="write the pass matrix as CSV here")
    p.add_argument("--inject-fault", choices=["none", "decoupling"], default="none")
    return parser


# ---------------------------------------------------------------------------
# input helpers

def _read_text(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc


def _load(path: str, exact: bool):
    text = _read_text(path)
    if text.lstrip().startswith("{"):
        try:
            faces = json.loads(text)
            return CylinderIntersection(np.array(faces["fxy"]), np.array(faces["gxz"]), np.array(faces["hyz"]))
        except (KeyError, ValueError) as exc:
            raise UsageError(f"{path}: bad face file ({exc})") from exc
    obj = parse_grid(text, exact=True if exact else None)
    return obj


def _matrix(path: str, exact: bool) -> np.ndarray:
    obj = _load(path, exact)
    if not isinstance(obj, Grid2):
        raise UsageError(f"{path}: expected a grid2 matrix")
    return as_array(obj.data, True if exact else None)


def _grid3(path: str, exact: bool) -> np.ndarray:
    obj = _load(path, exact)
    if isinstance(obj, CylinderIntersection):
        return obj.to_grid3().bits
    if isinstance(obj, Grid3Indicator):
        return obj.bits
    raise UsageError(f"{path}: expected a grid3 indicator or CI faces")


def _status_of(reports) -> str:
    statuses = [r.status for r in reports]
    if FAIL in statuses:
        return FAIL
    if UNMET in statuses:
        return UNMET
    return PASS


# ---------------------------------------------------------------------------
# commands

def cmd_norms(a) -> tuple[dict, str]:
    from . import norms

    M = _matrix(a.input, a.exact)
    if a.norm == "lp":
        v = M.reshape(-1)
        return {"value": norms.lp_norm(v, a.p), "power": norms.lp_power(v, a.p)}, PASS
    if a.norm == "flat":
        value, wit = norms.flat_p_norm(M.reshape(-1), a.p)
        return {"value": value, "witness": wit}, PASS
    if a.norm == "grid":
        power = norms.grid_norm_power(M, a.l, a.k)
        value = float(power) ** (1 / (int(a.l) * int(a.k))) if power > 0 else 0.0
        return {"value": value, "power": power, "l": a.l, "k": a.k}, PASS
    if a.norm == "op":
        res = norms.operator_norm(M, a.l, a.r, restarts=a.restarts, seed=a.seed)
        return {"value": res.value, "witness": res.witness, "diagnostics": {
            "converged": res.converged, "iterations": res.iterations, "restarts": res.restarts}}, PASS
    if a.norm == "flatop":
        value, wit = norms.flat_operator_norm(M, a.l, a.r, seed=a.seed)
        return {"value": value, "witness": wit}, PASS
    if a.norm == "matrix-sandwich":
        rep = norms.matrix_sandwich_audit(M, a.l, a.r, a.d, a.eps, restarts=a.restarts, seed=a.seed)
    else:
        rep = norms.flat_sandwich_audit(M.reshape(-1), a.p, a.k, a.eps)
    return {"audit": rep}, rep.status


def cmd_spread(a) -> tuple[dict, str]:
    from . import spread

    M = _matrix(a.input, a.exact)
    if a.audit == "spread":
        ok, wit = spread.is_spread(M, spread.SpreadParams(a.t, a.eps))
        return {"spread": ok, "witness": wit}, PASS
    if a.audit == "increment":
        (rows, cols), trace = spread.density_increment(M, spread.SpreadParams(a.t, a.eps), a.floor)
        return {"rows": rows, "cols": cols, "trace": trace}, PASS
    if a.audit == "gridbound":
        rep = spread.grid_bound_audit(M, a.k, a.d, a.eps)
    elif a.audit == "shift":
        rep = spread.matrix_shift_audit(M, a.k, a.eps, a.p)
    else:
        if not a.input2:
            raise UsageError(f"--audit {a.audit} needs --input2")
        G = _matrix(a.input2, a.exact)
        if a.audit == "decouple":
            rep = spread.decoupling_audit(M, G, a.k)
        else:
            rep = spread.product_theorem_audit(M, G, int(a.d), a.eps)
    return {"audit": rep}, rep.status


def cmd_cover(a) -> tuple[dict, str]:
    from . import cover

    F = _grid3(a.input, a.exact)
    floor_exp = a.floor_exp if a.floor_exp is not None else cover.DEFAULT_FLOOR_CONST * a.d
    floor = Fraction(1, 2 ** floor_exp)
    if a.mode == "fractional":
        return {"cover": cover.solve_fractional_cover(F, floor, exact=a.exact)}, PASS
    if a.mode == "dual":
        fc = cover.solve_fractional_cover(F, floor, exact=a.exact)
        dp = cover.solve_dual_packing(F, floor, cover=fc)
        return {"primal": fc.value, "dual": dp}, PASS
    if a.mode == "round":
        fc = cover.solve_fractional_cover(F, floor, exact=a.exact)
        ic = cover.round_cover(fc, F, a.fail_prob, seed=a.seed)
        return {"fractional_value": fc.value, "cover": ic}, PASS if ic.valid else FAIL
    if a.mode == "removal":
        ic, rep = cover.removal_lemma(F, a.d, fail_prob=a.fail_prob, seed=a.seed, exact=a.exact)
        status = PASS if ic.valid else FAIL
        if not rep.hypothesis_met and status == PASS:
            status = UNMET
        return {"removal": rep}, status
    p = DensityFunction.uniform_on(Grid3Indicator(F), exact=True)
    ci = CylinderIntersection.from_points(Grid3Indicator(F))
    if not np.array_equal(ci.to_grid3().bits, F):
        raise UsageError("certify needs F to be a cylinder intersection")
    cert = cover.largeness_certificate(p, ci, a.t, a.d)
    return {"certificate": cert, "audit": cert.report}, cert.report.status


def cmd_evasive(a) -> tuple[dict, str]:
    from . import evasive

    D = evasive.build_D(a.q, a.k)
    out: dict = {"q": a.q, "k": a.k, "N": a.q ** a.k, "count": D.count(), "density": D.density()}
    if a.grid_out:
        try:
            with open(a.grid_out, "w") as fh:
                fh.write(format_grid(D))
        except OSError as exc:
            raise UsageError(f"cannot write {a.grid_out}: {exc.strerror}") from exc
    if a.audit == "build":
        if not a.grid_out:
            out["grid"] = format_grid(D)
        return out, PASS
    if a.audit == "measure":
        out["evasiveness"] = evasive.evasiveness_audit(D, a.d)
        return out, PASS
    if not a.input:
        raise UsageError("--audit ci needs --input")
    rep = evasive.pseudorandom_ci_audit(D, _grid3(a.input, True), a.t, seed=a.seed)
    out["audit"] = rep
    return out, rep.status


def cmd_nof(a) -> tuple[dict, str]:
    from . import evasive, nof

    if a.mode == "protocol":
        tr = nof.randomized_protocol(a.q, a.k, tuple(a.instance), a.r, seed=a.seed)
        rate, hits = nof.acceptance_rate(a.q, a.k, tuple(a.instance), a.r, a.trials, a.seed)
        member = bool(evasive.build_D(a.q, a.k).bits[tuple(a.instance)])
        return {"transcript": tr, "member": member, "acceptance_rate": rate, "accepts": hits,
                "trials": a.trials}, PASS
    D = evasive.build_D(a.q, a.k)
    if a.mode == "cover":
        return {"cover_number": nof.cover_number_exact(D, seed=a.seed)}, PASS
    if a.mode == "maxci":
        ci, size, history = nof.max_monochromatic_ci(D, a.restarts, a.seed)
        return {"size": size, "history": history,
                "faces": {"fxy": ci.fxy.astype(int), "gxz": ci.gxz.astype(int), "hyz": ci.hyz.astype(int)}}, PASS
    return {"report": nof.separation_report(a.q, a.k, a.r, a.seed, a.trials)}, PASS


def cmd_audit_all(a) -> tuple[dict, str]:
    from .audits import run_suite

    fault = None if a.inject_fault == "none" else a.inject_fault
    rows = run_suite(a.scale, a.seed, fault)
    if a.csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["statement", "audit", "instances", "pass", "fail", "unmet", "status"])
        for r in rows:
            w.writerow([r.statement, r.audit, r.instances, r.passed, r.failed, r.unmet, r.status])
        try:
            with open(a.csv, "w") as fh:
                fh.write(buf.getvalue())
        except OSError as exc:
            raise UsageError(f"cannot write {a.csv}: {exc.strerror}") from exc
    failing = [r.audit for r in rows if r.status == FAIL]
    status = _status_of(rows)
    return {"matrix": [r.to_dict() for r in rows], "failing": failing}, status


COMMANDS = {
    "norms": cmd_norms,
    "spread": cmd_spread,
    "cover": cmd_cover,
    "evasive": cmd_evasive,
    "nof": cmd_nof,
    "audit-all": cmd_audit_all,
}


def _parse(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = json.loads(_read_text(args.config))
        except ValueError as exc:
            raise UsageError(f"{args.config}: invalid JSON ({exc})") from exc
        if not isinstance(cfg, dict):
            raise UsageError(f"{args.config}: expected a JSON object")
        # config supplies defaults; explicit flags still win
        defaults = {k.replace("-", "_"): v for k, v in cfg.items()}
        parser.set_defaults(**defaults)
        for action in parser._subparsers._group_actions:
            for name, sp in action.choices.items():
                sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        args = _parse(argv)
        result, status = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"gridlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GridlabError as exc:
        print(f"gridlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    config = {k: v for k, v in sorted(vars(args).items())}
    report = {
        "version": __version__,
        "command": args.command,
        "config": config,
        "seed": args.seed,
        "mode": "exact" if args.exact else "float",
        "threads": worker_count(),
        "status": status,
        "result": result,
    }
    text = json.dumps(jsonable(report), sort_keys=True, indent=2) + "\n"
    if args.out:
        try:
            with open(args.out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"gridlab: error: cannot write {args.out}: {exc.strerror}", file=sys.stderr)
            return EXIT_USAGE
    else:
        stdout.write(text)
    if status == FAIL:
        if args.command == "audit-all":
            print("gridlab: failing audits: " + ", ".join(result["failing"]), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_UNMET if status == UNMET else EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
