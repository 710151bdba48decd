"""Command-line front end.

Exit codes:
  0  success (proved, or certificate accepted)
  1  infeasible: refuted, divergence, or approximant family too weak
  2  usage error
  3  I/O error
  4  parse error (problem file, sample table or certificate)
  5  certificate rejected
  6  budget exhausted before a verdict
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from gmpy2 import mpq

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_PARSE = 4
EXIT_REJECT = 5
EXIT_BUDGET = 6


class _Exit(Exception):
    def __init__(self, code: int, status: str, message: str, **extra):
        super().__init__(message)
        self.code, self.status, self.message, self.extra = code, status, message, extra


def _fmt(v) -> str:
    if isinstance(v, type(mpq(0))):
        s = str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
        return s if v.denominator == 1 else f"{s}  (~{float(v):.6g})"
    return str(v)


def _jsonable(v):
    if isinstance(v, type(mpq(0))):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    return str(v)


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise _Exit(EXIT_IO, "io-error", f"cannot read {path}: {e.strerror or e}") from None


def _write(path: str, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as e:
        raise _Exit(EXIT_IO, "io-error", f"cannot write {path}: {e.strerror or e}") from None


def _load_problem(path: str):
    from .core.parser import ParseError, parse_problem
    from .core.problem import ProblemError
    raw = _read(path)
    try:
        return parse_problem(raw.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise _Exit(EXIT_PARSE, "parse-error", f"{path}: not UTF-8 ({e})") from None
    except (ParseError, ProblemError) as e:
        raise _Exit(EXIT_PARSE, "parse-error", f"{path}: {e}") from None


def _options(args):
    from .invariant_engine import Options
    for name in ("budget_nodes", "max_k", "max_n", "threads", "max_r_doublings"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            raise _Exit(EXIT_USAGE, "usage-error", f"--{name.replace('_', '-')} must be positive")
    return Options(budget_nodes=args.budget_nodes, max_k=args.max_k, max_n=args.max_n,
                   r_doublings=args.max_r_doublings, threads=args.threads)


def _infeasible(r) -> _Exit:
    code = EXIT_BUDGET if r.binding == "budget" else EXIT_INFEASIBLE
    return _Exit(code, "infeasible", r.reason, binding=r.binding)


def _emit_outputs(result, args, default_out: str, out) -> None:
    from .certificate import emit, export_external
    data = emit(result)
    path = args.out or default_out
    _write(path, data)
    print(f"certificate: {path} ({len(data)} bytes)", file=out)
    if args.emit_external:
        from .certificate.export import UnsupportedCertificate
        try:
            text = export_external(result.certificate)
        except UnsupportedCertificate as e:
            raise _Exit(EXIT_USAGE, "usage-error", str(e)) from None
        _write(args.emit_external, text.encode())
        print(f"external: {args.emit_external}", file=out)


def _print_summary(summary: dict, out) -> None:
    for k, v in summary.items():
        print(f"{k}: {_fmt(v)}", file=out)


def cmd_prove(args, out) -> int:
    from .core.results import Infeasible
    from .provers import prove_problem
    prob = _load_problem(args.problem)
    if prob.goal is None:
        raise _Exit(EXIT_USAGE, "usage-error", f"{args.problem}: no goal line")
    result = prove_problem(prob, _options(args))
    if isinstance(result, Infeasible):
        raise _infeasible(result)
    _print_summary(result.summary() if callable(result.summary) else result.summary, out)
    _emit_outputs(result, args, str(Path(args.problem).with_suffix(".cert")), out)
    return EXIT_OK


def cmd_step_exist(args, out) -> int:
    from .core.problem import Goal, Problem
    from .provers import step_existence
    prob = _load_problem(args.problem)
    g = prob.goal if prob.goal is not None and prob.goal.kind == "step-exist" else Goal("step-exist")
    alpha = mpq(args.alpha) if args.alpha else g.alpha
    N = args.N if args.N is not None else g.steps
    radius = mpq(args.radius) if args.radius else g.radius
    eps = mpq(args.eps) if args.eps else g.eps
    goal = Goal("step-exist", alpha=alpha, steps=N, radius=radius, eps=eps)
    problem = Problem(prob.ivp, goal, prob.phi, prob.horizon_given)
    try:
        r = step_existence(prob.ivp.f, prob.ivp.init.box, alpha, N, radius=radius, eps=eps,
                           budget=args.budget_nodes, problem=problem)
    except ValueError as e:
        raise _Exit(EXIT_USAGE, "usage-error", str(e)) from None
    _print_summary(r.summary, out)
    _emit_outputs(r, args, str(Path(args.problem).with_suffix(".cert")), out)
    return EXIT_OK


def cmd_check(args, out) -> int:
    from .certificate import CertificateParseError, check, parse
    raw = _read(args.certificate)
    try:
        cert = parse(raw)
    except CertificateParseError as e:
        raise _Exit(EXIT_PARSE, "parse-error", f"{args.certificate}: {e}") from None
    problem = _load_problem(args.problem) if args.problem else None
    res = check(cert, problem)
    if not res:
        raise _Exit(EXIT_REJECT, "rejected", res.describe(), path=list(res.path), node=res.node)
    print(f"accepted: {res.kind} certificate, {res.nodes} nodes checked", file=out)
    return EXIT_OK


def _print_phi(ivp, phi, out) -> None:
    from .core.poly import format_poly
    for v, p in zip(ivp.vars, phi):
        print(f"phi {v} = {format_poly(p)}", file=out)


def _defect_summary(phi, ivp, budget, out) -> None:
    from .approximant import defect_bounds
    if ivp.T == ivp.t0 and ivp.init.box.is_point():
        return
    rep = defect_bounds(phi, ivp, budget)
    print(f"# defect bound delta: {_fmt(rep.delta)}", file=out)
    print(f"# initial mismatch e0: {_fmt(rep.e0)}", file=out)


def cmd_picard(args, out) -> int:
    from .approximant import picard_iterate
    prob = _load_problem(args.problem)
    if args.k < 0:
        raise _Exit(EXIT_USAGE, "usage-error", "k must be nonnegative")
    phi = picard_iterate(prob.ivp, args.k, t_degree=args.t_degree)
    text_out = _capture(lambda o: (_print_phi(prob.ivp, phi.phi, o),
                                   _defect_summary(phi, prob.ivp, args.budget_nodes, o)))
    _finish_text(text_out, args, out)
    return EXIT_OK


def cmd_fit(args, out) -> int:
    from .approximant import RankDeficient, fit_from_samples, read_samples
    prob = _load_problem(args.problem)
    raw = _read(args.samples)
    try:
        samples = read_samples(raw.decode("utf-8"), prob.ivp.dim)
    except (ValueError, UnicodeDecodeError) as e:
        raise _Exit(EXIT_PARSE, "parse-error", f"{args.samples}: {e}") from None
    try:
        phi = fit_from_samples(samples, prob.ivp, args.degree)
    except RankDeficient as e:
        raise _Exit(EXIT_INFEASIBLE, "infeasible", str(e), binding="rank-deficient") from None
    except ValueError as e:
        raise _Exit(EXIT_PARSE, "parse-error", f"{args.samples}: {e}") from None
    text_out = _capture(lambda o: (_print_phi(prob.ivp, phi.phi, o),
                                   _defect_summary(phi, prob.ivp, args.budget_nodes, o)))
    _finish_text(text_out, args, out)
    return EXIT_OK


def cmd_exp_check(args, out) -> int:
    from .exp_bounds import exp_condition_report
    try:
        c, K, dt, M = (mpq(x) for x in (args.c, args.K, args.dt, args.M))
    except ValueError as e:
        raise _Exit(EXIT_USAGE, "usage-error", f"bad rational: {e}") from None
    rep = exp_condition_report(c, K, dt, M)
    print(rep.describe(), file=out)
    if not rep.holds:
        raise _Exit(EXIT_INFEASIBLE, "infeasible", "c*e^(K*dt) < M fails", binding="exp-bound",
                    lower=f"{float(rep.lower):.9g}")
    return EXIT_OK


def _capture(fn) -> str:
    import io
    buf = io.StringIO()
    fn(buf)
    return buf.getvalue()


def _finish_text(text: str, args, out) -> None:
    if args.out:
        _write(args.out, text.encode())
        print(f"approximant: {args.out}", file=out)
    else:
        out.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ivpcert", description="Certified error bounds and reachability proofs for polynomial IVPs.",
        epilog=__doc__.split("\n", 2)[2], formatter_class=argparse.RawDescriptionHelpFormatter)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output path")
    common.add_argument("--budget-nodes", type=int, default=200_000,
                        help="node limit for each oracle call")
    common.add_argument("--max-k", type=int, default=32, help="largest approximant index tried")
    common.add_argument("--max-n", type=int, default=12, help="largest n for pads 2^-n")
    common.add_argument("--max-r-doublings", type=int, default=16,
                        help="radius doublings tried by the existence prover")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads (results do not depend on it)")
    common.add_argument("--emit-external", metavar="PATH",
                        help="also write a KeYmaera X style archive (error-bound and safety)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prove", parents=[common], help="prove the goal of a problem file")
    s.add_argument("problem")
    s.set_defaults(fn=cmd_prove)

    s = sub.add_parser("check", parents=[common], help="check a certificate")
    s.add_argument("certificate")
    s.add_argument("--problem", help="also require the certificate to be about this problem")
    s.set_defaults(fn=cmd_check)

    s = sub.add_parser("picard", parents=[common], help="print the k-th Picard iterate")
    s.add_argument("problem")
    s.add_argument("k", type=int)
    s.add_argument("--t-degree", type=int, help="truncate iterates to this degree in t")
    s.set_defaults(fn=cmd_picard)

    s = sub.add_parser("fit", parents=[common], help="fit an approximant to a sample table")
    s.add_argument("problem")
    s.add_argument("samples")
    s.add_argument("--degree", type=int, default=3)
    s.set_defaults(fn=cmd_fit)

    s = sub.add_parser("step-exist", parents=[common], help="chained existence steps")
    s.add_argument("problem")
    s.add_argument("--alpha")
    s.add_argument("--N", type=int)
    s.add_argument("--radius")
    s.add_argument("--eps")
    s.set_defaults(fn=cmd_step_exist)

    s = sub.add_parser("exp-check", help="decide c*e^(K*dt) < M")
    for name in ("c", "K", "dt", "M"):
        s.add_argument(name)
    s.set_defaults(fn=cmd_exp_check)
    return p


def main(argv: Optional[list] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return args.fn(args, out)
    except _Exit as e:
        diag = {"status": e.status, "exit": e.code, "message": e.message, **_jsonable(e.extra)}
        print(json.dumps(diag, ensure_ascii=False), file=err)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
