"""Best-effort export to a KeYmaera X style archive (.kyx).

Only error-bound and safety certificates are exported.  The output states
the ODE with a clock and the exponential ghost, the box-modality goal, and
the invariant, theta_n and epsilon as annotations.  It is not validated
here.
"""

from __future__ import annotations

from ..core.parser import format_formula, parse_problem
from ..core.poly import format_poly
from ..core.rational import to_str
from . import encode as enc
from .model import Certificate, RuleApp

EXPORTABLE = ("error-bound", "safety")


class UnsupportedCertificate(ValueError):
    """The certificate kind has no external rendering."""


def _first(root: RuleApp, rule: str, **match) -> RuleApp:
    for _, n in root.walk():
        if isinstance(n, RuleApp) and n.rule == rule and all(
                n.bindings.get(k) == v for k, v in match.items()):
            return n
    raise UnsupportedCertificate(f"certificate has no {rule} node")


def _theta_text(K: str, dt: str, n: int) -> str:
    """theta_n(s) = sum_{i<=n} (K s)^i / i! + slack s^n, written out."""
    from gmpy2 import mpq
    Kq, dtq = enc.dec_q(K), enc.dec_q(dt)
    if n <= 0 or dtq == 0:
        return "1"
    coeffs, term = [], mpq(1)
    for i in range(n + 1):
        if i:
            term = term * Kq / i
        coeffs.append(term)
    fact = mpq(1)
    for i in range(2, n + 1):
        fact *= i
    coeffs[n] += Kq ** (n + 1) * dtq / (n - Kq * dtq) / fact
    return " + ".join(f"{to_str(c)}*s^{i}" if i else to_str(c) for i, c in enumerate(coeffs))


def _ident(name: str) -> str:
    return name.replace("'", "_")


def export_external(cert: Certificate) -> str:
    """Plain-text archive entry for an error-bound or safety certificate."""
    kind = cert.kind
    if kind not in EXPORTABLE:
        raise UnsupportedCertificate(f"no external export for {kind!r} certificates")
    prob = parse_problem(cert.header["problem"])
    ivp = prob.ivp
    err = _first(cert.root, "dW", role="error-bound")
    lda = _first(err, "LDA")
    dinv = _first(lda, "dInv")
    ghost = _first(lda, "DGi", role="ghost")
    b = lda.bindings
    phi = enc.dec_polyvec(b["phi"])
    target = b["target"]
    eps_text = b["epsilon"]

    xs = [_ident(v) for v in ivp.vars]
    x0s = [_ident(v) for v in ivp.x0_vars]
    decls = xs + x0s + ["t", "g"]
    init = []
    for v, (lo, hi) in zip(x0s, ivp.init.box):
        init.append(f"{v} = {to_str(lo)}" if lo == hi else f"{to_str(lo)} <= {v} & {v} <= {to_str(hi)}")
    for c in ivp.init.constraints:
        p = c.poly.rename(dict(zip(ivp.vars, ivp.x0_vars)))
        init.append(f"{format_poly(p)} {'>=' if c.rel == '>=' else '='} 0")
    region = " & ".join(init)
    psi = dinv.bindings["psi"].replace(f"C({', '.join(ivp.x0_vars)})", f"({region})")
    init += [f"{x} = {x0}" for x, x0 in zip(xs, x0s)]
    init += [f"t = {to_str(ivp.t0)}", f"g = {b['c']}"]
    ode = [f"{x}' = {format_poly(p)}" for x, p in zip(xs, ivp.f)]
    ode += ["t' = 1", f"g' = {b['K']}*g"]
    dist = " + ".join(f"({x} - ({format_poly(p)}))^2" for x, p in zip(xs, phi))
    if kind == "error-bound":
        post = f"{dist} < ({target})^2"
    else:
        post = format_formula(prob.goal.region.full_formula()).replace(" and ", " & ").replace(" or ", " | ")
    lines = [
        f'ArchiveEntry "{kind}"',
        "",
        "ProgramVariables",
        *[f"  Real {v};" for v in decls],
        "End.",
        "",
        "Problem",
        "  " + " &\n  ".join(init),
        "  ->",
        f"  [{{{', '.join(ode)} & t <= {to_str(ivp.T)}}}@invariant(",
        f"      ({psi})",
        "    )]",
        f"  ({post})",
        "End.",
        "",
        "/* annotations",
        f"   epsilon(g, t) = {eps_text}",
        f"   psi: {psi}",
        f"   constants: h = {b['h']}, c = {b['c']}, K = {b['K']}, M = {b['M']}, k = {b['k']}",
        f"   ghost bound: g <= theta_n(t - {to_str(ivp.t0)}) <= M with n = {ghost.bindings['n']},",
        f"   theta_n(s) = {b['c']} * ({_theta_text(b['K'], ghost.bindings['dt'], ghost.bindings['n'])})",
        f"   final bound: h*(1 + {to_str(ivp.T - ivp.t0)})*M - h = {b['eps_final']} < {target}",
        "*/",
        "",
        "End.",
    ]
    return "\n".join(lines) + "\n"
