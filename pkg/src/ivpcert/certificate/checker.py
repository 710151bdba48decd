"""Independent certificate checker.

Shares with the provers only the core types, interval evaluation and the
Sturm-sequence recomputation.  Nothing is searched: every leaf is checked
by walking its stored subdivision tree, and every rule node by exact
rational arithmetic on its bindings.  Nodes are visited in pre-order and
the first failure is reported.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

from gmpy2 import mpq

from ..arith_oracle.interval import anchor_for, interval_eval, upper_enclosure
from ..arith_oracle.sturm import SturmWitness, check_sturm
from ..core.box import Box
from ..core.poly import Poly, PolyVec, norm_squared
from ..core.problem import And, Atom, CompactIVP, Constraint, Or
from . import encode as enc
from .model import CERT_KINDS, FORMAT, ArithObligation, Certificate, RuleApp

MAX_LEAF_NODES = 5_000_000


@dataclass(frozen=True)
class Accept:
    kind: str
    nodes: int

    def __bool__(self) -> bool:
        return True


@dataclass(frozen=True)
class Reject:
    path: tuple  # child indices from the root
    node: str  # rule name or obligation kind
    label: str
    reason: str

    def __bool__(self) -> bool:
        return False

    def describe(self) -> str:
        where = "root" if not self.path else "root/" + "/".join(map(str, self.path))
        lab = f" [{self.label}]" if self.label else ""
        return f"rejected at {where} ({self.node}{lab}): {self.reason}"


class _Fail(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def _need(cond, reason: str):
    if not cond:
        raise _Fail(reason)


# leaves ---------------------------------------------------------------------

def _tree_leaves(tree, box: Box, budget: int):
    """Yield (leaf json, box); raises on malformed splits."""
    stack = [(tree, box)]
    count = 0
    while stack:
        node, b = stack.pop()
        count += 1
        _need(count <= budget, "witness tree too large")
        _need(isinstance(node, list) and node, "malformed witness node")
        if node[0] == "S":
            _need(len(node) == 5, "malformed split node")
            axis, mid = node[1], enc.dec_q(node[2])
            _need(isinstance(axis, int) and not isinstance(axis, bool) and 0 <= axis < b.dim,
                  f"split axis {axis!r} out of range")
            lo, hi = b[axis]
            _need(lo < mid < hi, f"split point {mid} not inside ({lo}, {hi})")
            left, right = b.split(axis, mid)
            stack.append((node[4], right))
            stack.append((node[3], left))
        else:
            yield node, b


def _excluded(c: Constraint, b: Box, mode: str, bits: int) -> bool:
    lo, hi = interval_eval(c.poly, b, mode, bits)
    if c.rel == ">=":
        return hi < 0
    return hi < 0 or lo > 0


def _excl_ok(node, b, domain, mode, bits):
    _need(len(node) == 2 and isinstance(node[1], int) and not isinstance(node[1], bool)
          and 0 <= node[1] < len(domain), "bad exclusion index")
    _need(_excluded(domain[node[1]], b, mode, bits),
          f"constraint {node[1]} is not excluded on {b!r}")


def check_poly_bound(payload: dict) -> None:
    """poly <= bound (strict: <) on box and domain, by the stored subdivision."""
    p = enc.dec_poly(payload["poly"])
    box = enc.dec_box(payload["box"])
    bound = enc.dec_q(payload["bound"])
    strict = payload["strict"]
    _need(isinstance(strict, bool), "strict flag must be boolean")
    domain = [enc.dec_constraint(c) for c in payload["domain"]]
    mode, bits = payload["mode"], payload["bits"]
    _need(box.dim == len(p.vars), "box dimension differs from the polynomial")
    anchor = anchor_for(box)
    for node, b in _tree_leaves(payload["tree"], box, MAX_LEAF_NODES):
        if node[0] == "X":
            _excl_ok(node, b, domain, mode, bits)
        elif node[0] == "L":
            _need(len(node) == 3, "malformed leaf")
            stored = enc.dec_q(node[2])
            hi = upper_enclosure(p, b, mode, bits, stored, anchor=anchor)
            _need(hi <= stored, f"enclosure {hi} on {b!r} exceeds the stored {stored}")
            _need(stored < bound if strict else stored <= bound,
                  f"leaf bound {stored} does not satisfy the claimed bound {bound}")
        else:
            raise _Fail(f"unexpected node {node[0]!r} in a bound tree")


_TRUE, _FALSE, _UNKNOWN = 1, 0, -1


def _formula_on_box(f, b: Box, mode: str, bits: int) -> int:
    if isinstance(f, Atom):
        lo, hi = interval_eval(f.poly, b, mode, bits)
        return _TRUE if lo > 0 else (_FALSE if hi <= 0 else _UNKNOWN)
    vals = [_formula_on_box(x, b, mode, bits) for x in f.items]
    if isinstance(f, And):
        return _TRUE if all(v == _TRUE for v in vals) else (_FALSE if _FALSE in vals else _UNKNOWN)
    return _TRUE if _TRUE in vals else (_FALSE if all(v == _FALSE for v in vals) else _UNKNOWN)


def _inside_tree(tree, box: Box, formula, mode, bits):
    for node, b in _tree_leaves(tree, box, MAX_LEAF_NODES):
        _need(node == ["I"], f"unexpected node {node[0]!r} in a containment tree")
        _need(_formula_on_box(formula, b, mode, bits) == _TRUE,
              f"region formula not certified on {b!r}")


def check_region_payload(payload: dict) -> None:
    if "region" in payload:
        w = payload["region"]
        _inside_tree(w["tree"], enc.dec_box(w["box"]), enc.dec_formula(w["formula"]),
                     w["mode"], w["bits"])
        return
    _need("image" in payload, "region obligation needs a region or image payload")
    w = payload["image"]
    phi = enc.dec_polyvec(w["map"])
    box = enc.dec_box(w["box"])
    _need(box.dim == len(phi.vars), "image domain box has the wrong dimension")
    domain = [enc.dec_constraint(c) for c in w["domain"]]
    pad = enc.dec_q(w["pad"])
    _need(pad >= 0, "negative pad")
    formula = enc.dec_formula(w["formula"])
    mode, bits = w["mode"], w["bits"]
    anchor = anchor_for(box)
    for node, b in _tree_leaves(w["tree"], box, MAX_LEAF_NODES):
        if node[0] == "X":
            _excl_ok(node, b, domain, mode, bits)
        elif node[0] == "M":
            _need(len(node) == 3, "malformed image leaf")
            stored = enc.dec_box(node[1])
            _need(stored.dim == len(phi), "image box has the wrong dimension")
            img = Box([interval_eval(c, b, mode, bits, anchor) for c in phi])
            _need(stored.contains_box(img), f"stored image does not contain the enclosure on {b!r}")
            _inside_tree(node[2], stored.inflate(pad), formula, mode, bits)
        else:
            raise _Fail(f"unexpected node {node[0]!r} in an image tree")


def check_sturm_payload(payload: dict) -> None:
    w = SturmWitness(
        tuple(enc.dec_q(c) for c in payload["coeffs"]), enc.dec_q(payload["a"]),
        enc.dec_q(payload["b"]), payload["mult_a"], payload["mult_b"],
        tuple(tuple(enc.dec_q(c) for c in p) for p in payload["chain"]),
        tuple(payload["signs_a"]), tuple(payload["signs_b"]),
        enc.dec_q(payload["value_a"]), enc.dec_q(payload["value_b"]))
    err = check_sturm(w, w.coeffs)
    _need(err is None, err or "")


def check_identity_payload(payload: dict) -> None:
    claim = payload.get("claim")
    if claim == "anchored":
        phi = enc.dec_polyvec(payload["phi"])
        t0 = enc.dec_q(payload["t0"])
        vs = phi.vars
        _need(vs and vs[-1] == "t" and len(vs) == len(phi) + 1, "approximant variables malformed")
        for i, p in enumerate(phi):
            _need(p.substitute_value("t", t0) == Poly.var(vs[i], vs),
                  f"component {i} is not the identity at t0")
        return
    raise _Fail(f"unknown identity claim {claim!r}")


def check_leaf(leaf: ArithObligation) -> None:
    try:
        if leaf.kind in ("poly_upper", "poly_lower"):
            check_poly_bound(leaf.payload)
        elif leaf.kind == "region_containment":
            check_region_payload(leaf.payload)
        elif leaf.kind == "sturm_nonneg":
            check_sturm_payload(leaf.payload)
        elif leaf.kind == "exact_identity":
            check_identity_payload(leaf.payload)
        else:
            raise _Fail(f"unknown obligation kind {leaf.kind!r}")
    except _Fail:
        raise
    except (KeyError, TypeError, ValueError, IndexError, ZeroDivisionError) as e:
        raise _Fail(f"malformed payload: {type(e).__name__}: {e}") from None


# structural rules -------------------------------------------------------------

class _Ctx:
    """Per-certificate facts that structural checks compare against."""

    def __init__(self, ivp: CompactIVP, goal, kind: str):
        self.ivp = ivp
        self.goal = goal
        self.kind = kind
        self.expect: dict = {}  # id(node) -> dict of expected bindings set by a parent


def _bq(node: RuleApp, key: str) -> mpq:
    _need(key in node.bindings, f"missing binding {key!r}")
    return enc.dec_q(node.bindings[key])


def _kids(node: RuleApp, rules: tuple) -> tuple:
    _need(len(node.children) == len(rules),
          f"expected {len(rules)} children ({', '.join(rules)}), found {len(node.children)}")
    for c, r in zip(node.children, rules):
        if r == "*leaf":
            _need(isinstance(c, ArithObligation), "expected an arithmetic leaf")
        else:
            _need(isinstance(c, RuleApp) and c.rule == r, f"expected a {r} child")
    return node.children


def _leaf_claim(leaf, kind, poly: Poly, box: Box, bound, domain=()):
    """Leaf must state exactly: poly <= bound over box and domain."""
    _need(isinstance(leaf, ArithObligation) and leaf.kind == kind, f"expected a {kind} leaf")
    pl = leaf.payload
    _need(enc.dec_poly(pl["poly"]) == poly, f"{kind} leaf bounds the wrong polynomial")
    _need(enc.dec_box(pl["box"]) == box, f"{kind} leaf covers the wrong box")
    _need(enc.dec_q(pl["bound"]) == bound, f"{kind} leaf bound differs from the binding")
    dom = tuple(enc.dec_constraint(c) for c in pl["domain"])
    _need(dom == tuple(domain), f"{kind} leaf has the wrong domain constraints")


def _err_dw(node, ctx, target):
    _need(node.bindings.get("role") == "error-bound", "expected an error-bound dW node")
    _need(_bq(node, "target") == target, "error target differs from the goal")
    eps = _bq(node, "eps_final")
    _need(eps < target, "final bound is not below the target")
    (dc,) = _kids(node, ("dC",))
    enc_node, lda = _kids(dc, ("Enc", "LDA"))
    B = enc.dec_box(dc.bindings["B"])
    _need(enc.dec_box(enc_node.bindings["B"]) == B, "dC domain differs from the enclosure")
    ctx.expect[id(lda)] = {"target": target, "eps_final": eps, "K": _bq(enc_node, "K"),
                           "margin": _bq(enc_node, "margin")}
    ctx.expect[id(enc_node)] = {"phi": enc.dec_polyvec(lda.bindings["phi"])}


def _enc(node, ctx):
    ivp = ctx.ivp
    exp = ctx.expect.get(id(node))
    _need(exp is not None, "enclosure node outside an error-bound subtree")
    phi = exp["phi"]
    hull = enc.dec_box(node.bindings["hull"])
    margin = _bq(node, "margin")
    B = enc.dec_box(node.bindings["B"])
    K = _bq(node, "K")
    _need(margin > 0, "margin must be positive")
    _need(B == hull.inflate(margin), "B is not the hull inflated by the margin")
    _need(hull.dim == ivp.dim, "hull has the wrong dimension")
    _need(enc.dec_polyvec(node.bindings["field"]) == ivp.f, "vector field differs from the problem")
    entries = node.bindings["jacobian_bounds"]
    total = mpq(0)
    seen = set()
    for i, j, m in entries:
        m = enc.dec_q(m)
        _need(m >= 0, "negative Jacobian bound")
        seen.add((i, j))
        total += m * m
    _need(K > 0 and K * K >= total, "K is below the Frobenius bound of the Jacobian entries")
    need = [(i, j) for i, fi in enumerate(ivp.f) for j, v in enumerate(ivp.vars)
            if not fi.diff(v).is_zero()]
    _need(set(need) <= seen, "a nonzero Jacobian entry has no bound")
    kids = node.children
    _need(len(kids) == 2 * ivp.dim + 2 * len(entries), "wrong number of enclosure leaves")
    box, dom = ivp.domain_box(), ivp.domain_constraints()
    for i, p in enumerate(phi):
        p = p.with_vars(ivp.phi_vars)
        _leaf_claim(kids[2 * i], "poly_upper", p, box, hull[i][1], dom)
        _leaf_claim(kids[2 * i + 1], "poly_lower", -p, box, -hull[i][0], dom)
    base = 2 * ivp.dim
    for e, (i, j, m) in enumerate(entries):
        J = ivp.f[i].diff(ivp.vars[j])
        _leaf_claim(kids[base + 2 * e], "poly_upper", J, B, enc.dec_q(m))
        _leaf_claim(kids[base + 2 * e + 1], "poly_lower", -J, B, enc.dec_q(m))


def _lda(node, ctx):
    ivp = ctx.ivp
    exp = ctx.expect.get(id(node))
    _need(exp is not None, "LDA node outside an error-bound subtree")
    g = {k: _bq(node, k) for k in ("h", "c", "K", "M", "E", "rho", "delta", "e0", "t0", "T",
                                   "eps_final", "target")}
    _need(g["t0"] == ivp.t0 and g["T"] == ivp.T, "horizon differs from the problem")
    _need(g["target"] == exp["target"] and g["eps_final"] == exp["eps_final"],
          "LDA bindings differ from the enclosing dW node")
    _need(g["K"] == exp["K"], "LDA uses a K other than the certified Lipschitz bound")
    phi = enc.dec_polyvec(node.bindings["phi"])
    _need(len(phi) == ivp.dim and phi.vars == ivp.phi_vars, "approximant has the wrong shape")
    h, c, K, M, E = g["h"], g["c"], g["K"], g["M"], g["E"]
    _need(h > 0, "h must be positive")
    _need(c >= 1, "c must be at least 1")
    _need(g["delta"] >= 0 and g["e0"] >= 0, "negative defect bounds")
    rho = g["e0"] * E + g["delta"] / K * (E - 1)
    _need(g["rho"] == rho, "rho differs from e0 E + (delta / K)(E - 1)")
    _need(rho < exp["margin"], "error pad does not fit inside the enclosure margin")
    _need(rho <= h, "rho exceeds h")
    _need(g["delta"] + K * rho <= h, "delta + K rho exceeds h")
    _need(g["e0"] <= h * (c - 1), "initial mismatch exceeds h (c - 1)")
    dt = ivp.T - ivp.t0
    _need(g["eps_final"] == h * (1 + dt) * M - h, "final bound differs from h (1 + T - t0) M - h")
    growth, ghost, dinv = _kids(node, ("DGi", "DGi", "dInv"))
    ctx.expect[id(growth)] = {"role": "growth", "c": mpq(1), "K": K, "dt": dt, "bound": E}
    ctx.expect[id(ghost)] = {"role": "ghost", "c": c, "K": K, "dt": dt, "bound": M}
    ctx.expect[id(dinv)] = {"phi": phi, "delta": g["delta"], "e0": g["e0"]}


def _theta_darboux(K: mpq, dt: mpq, n: int):
    """(theta_n coefficients, coefficients of theta' - K theta)."""
    M = K ** (n + 1) * dt / (n - K * dt)
    th, term = [], mpq(1)
    for i in range(n + 1):
        if i:
            term = term * K / i
        th.append(term)
    fact = mpq(1)
    for i in range(2, n + 1):
        fact *= i
    th[n] += M / fact
    dar = [-K * x for x in th]
    for i in range(1, n + 1):
        dar[i - 1] += i * th[i]
    while dar and dar[-1] == 0:
        dar.pop()
    return th, dar


def _dgi(node, ctx):
    exp = ctx.expect.get(id(node))
    _need(exp is not None, "DGi node without an enclosing LDA node")
    _need(node.bindings.get("role") == exp["role"], f"expected the {exp['role']} exponential bound")
    for k in ("c", "K", "dt", "bound"):
        _need(_bq(node, k) == exp[k], f"exponential bound binding {k} differs from the LDA node")
    n = node.bindings.get("n")
    _need(isinstance(n, int) and not isinstance(n, bool), "degree n must be an integer")
    c, K, dt, bound = exp["c"], exp["K"], exp["dt"], exp["bound"]
    if dt == 0:
        _need(c <= bound and not node.children, "zero horizon needs no exponential witness")
        return
    _need(K > 0 and n > K * dt, "theta_n needs n > K dt")
    (leaf,) = _kids(node, ("*leaf",))
    _need(leaf.kind == "sturm_nonneg", "expected a Sturm leaf")
    th, dar = _theta_darboux(K, dt, n)
    pl = leaf.payload
    _need([enc.dec_q(x) for x in pl["coeffs"]] == dar, "Sturm leaf is not the Darboux polynomial")
    _need(enc.dec_q(pl["a"]) == 0 and enc.dec_q(pl["b"]) == dt, "Darboux interval is not [0, dt]")
    val = mpq(0)
    for x in reversed(th):
        val = val * dt + x
    _need(c * val <= bound, f"c theta_n(dt) = {c * val} exceeds the bound {bound}")


def _dinv(node, ctx):
    ivp = ctx.ivp
    exp = ctx.expect.get(id(node))
    _need(exp is not None, "dInv node without an enclosing LDA node")
    phi = exp["phi"]
    _need(_bq(node, "delta") == exp["delta"] and _bq(node, "e0") == exp["e0"],
          "dInv bounds differ from the LDA node")
    ms = [enc.dec_q(x) for x in node.bindings["defect_bounds"]]
    _need(len(ms) == ivp.dim and all(m >= 0 for m in ms), "bad defect bounds")
    _need(exp["delta"] ** 2 >= sum(m * m for m in ms), "delta is below the norm of the defect bounds")
    pv = ivp.phi_vars
    mapping = dict(zip(ivp.vars, phi))
    box, dom = ivp.domain_box(), ivp.domain_constraints()
    kids = node.children
    for i, (p, fi) in enumerate(zip(phi, ivp.f)):
        d = p.diff("t") - fi.compose(mapping, pv)
        _need(2 * i + 1 < len(kids), "missing defect leaves")
        _leaf_claim(kids[2 * i], "poly_upper", d, box, ms[i], dom)
        _leaf_claim(kids[2 * i + 1], "poly_lower", -d, box, ms[i], dom)
    rest = kids[2 * ivp.dim:]
    if len(rest) == 1 and isinstance(rest[0], ArithObligation) and rest[0].kind == "exact_identity":
        pl = rest[0].payload
        _need(pl.get("claim") == "anchored", "expected the anchoring identity")
        _need(enc.dec_polyvec(pl["phi"]) == phi and enc.dec_q(pl["t0"]) == ivp.t0,
              "anchoring identity is about another approximant")
        return
    es = [enc.dec_q(x) for x in node.bindings["mismatch_bounds"]]
    _need(len(es) == ivp.dim and len(rest) == 2 * ivp.dim, "missing initial mismatch leaves")
    _need(exp["e0"] ** 2 >= sum(e * e for e in es), "e0 is below the norm of the mismatch bounds")
    for i, p in enumerate(phi):
        m = p.substitute_value("t", ivp.t0) - Poly.var(ivp.x0_vars[i], pv)
        _leaf_claim(rest[2 * i], "poly_upper", m, box, es[i], dom)
        _leaf_claim(rest[2 * i + 1], "poly_lower", -m, box, es[i], dom)


def _image_claim(leaf, phi: PolyVec, box: Box, pad, formula, domain):
    _need(isinstance(leaf, ArithObligation) and leaf.kind == "region_containment"
          and "image" in leaf.payload, "expected an image containment leaf")
    w = leaf.payload["image"]
    _need(enc.dec_polyvec(w["map"]) == phi, "containment leaf uses another approximant")
    _need(enc.dec_box(w["box"]) == box, "containment leaf covers the wrong domain")
    _need(enc.dec_q(w["pad"]) == pad, "containment pad differs from the error bound")
    _need(enc.dec_formula(w["formula"]) == formula, "containment formula differs from the goal")
    _need(tuple(enc.dec_constraint(c) for c in w["domain"]) == tuple(domain),
          "containment leaf has the wrong domain constraints")


def _safety(node, ctx, region, ivp):
    """V node: bounded safety of `region` for ivp."""
    _need(node.bindings.get("property") == "safety", "expected a safety node")
    (k,) = _kids(node, ("K",))
    pad = _bq(k, "pad")
    _need(pad > 0, "pad must be positive")
    err, contain = _kids(k, ("dW", "dW"))
    _err_dw(err, ctx, pad)
    _need(contain.bindings.get("role") == "containment", "expected the containment dW node")
    (leaf,) = _kids(contain, ("*leaf",))
    phi = enc.dec_polyvec(err.children[0].children[1].bindings["phi"])
    _image_claim(leaf, phi, ivp.domain_box(), pad, region.full_formula(), ivp.domain_constraints())


def _existence(node, ctx, ivp):
    """StepDual-> node: the flow stays in a ball of radius R, hence exists on [t0, T]."""
    from ..core.problem import ball_region
    R = _bq(node, "R")
    _need(R > 0, "radius must be positive")
    _need(_bq(node, "T") == ivp.T, "existence horizon differs from the problem")
    (v,) = _kids(node, ("V",))
    _safety(v, ctx, ball_region(ivp.vars, R), ivp)


def _liveness(node, ctx, region, ivp):
    ex, kd = _kids(node, ("StepDual→", "K⟨·⟩"))
    _existence(ex, ctx, ivp)
    pad = _bq(kd, "pad")
    _need(pad > 0, "pad must be positive")
    err, bdg = _kids(kd, ("dW", "BDG⟨·⟩"))
    _err_dw(err, ctx, pad)
    phi = enc.dec_polyvec(err.children[0].children[1].bindings["phi"])
    init = ivp.init
    dom_x0 = [Constraint(c.poly.rename(dict(zip(ivp.vars, ivp.x0_vars))), c.rel)
              for c in init.nontrivial_constraints()]
    dom_full = ivp.domain_constraints()
    formula = region.full_formula()
    kids = bdg.children
    used = set()
    x0box = Box(list(init.box))
    mode, bits = bdg.bindings["mode"], bdg.bindings["bits"]
    for leafnode, b in _tree_leaves(bdg.bindings["cells"], x0box, MAX_LEAF_NODES):
        if leafnode[0] == "X":
            _excl_ok(leafnode, b, dom_x0, mode, bits)
            continue
        _need(leafnode[0] == "W" and len(leafnode) == 3, "malformed witness-time leaf")
        idx, t = leafnode[1], enc.dec_q(leafnode[2])
        _need(isinstance(idx, int) and 0 <= idx < len(kids) and idx not in used,
              "witness-time leaf points at a missing or reused child")
        used.add(idx)
        _need(ivp.t0 <= t <= ivp.T, "witness time outside the horizon")
        _image_claim(kids[idx], phi, b.product(Box([(t, t)])), pad, formula, dom_full)
    _need(len(used) == len(kids), "unused containment leaves")


def _step_chain(node, ctx, f: PolyVec, init_box: Box, duration=None):
    """StepExt node: abutting StepEx steps from t = 0, each inside an inflated box."""
    kids = node.children
    _need(kids and all(isinstance(c, RuleApp) and c.rule == "StepEx" for c in kids),
          "StepExt needs StepEx children")
    t = mpq(0)
    box = init_box
    nf = norm_squared(list(f))
    for i, st in enumerate(kids):
        t0, t1 = _bq(st, "t_start"), _bq(st, "t_end")
        R, M = _bq(st, "R"), _bq(st, "M")
        _need(t0 == t, f"step {i} starts at {t0}, not at the previous end {t}")
        _need(R > 0 and M > 0, f"step {i} needs positive R and M")
        _need(t1 - t0 > 0 and (t1 - t0) * M <= R, f"step {i} is longer than R/M")
        nb = box.inflate(R)
        _need(enc.dec_box(st.bindings["box"]) == nb, f"step {i} box is not the previous box inflated by R")
        (leaf,) = _kids(st, ("*leaf",))
        _leaf_claim(leaf, "poly_upper", nf, nb, M * M)
        t, box = t1, nb
    _need(_bq(node, "t_end") == t and _bq(node, "t_start") == 0, "StepExt span differs from its steps")
    if duration is not None:
        _need(t == duration, "duration differs from the sum of the steps")


def _structure(cert: Certificate, ctx: _Ctx):
    root = cert.root
    goal = ctx.goal
    ivp = ctx.ivp
    if ctx.kind == "error-bound":
        _need(root.rule == "dW", "error-bound certificates start with dW")
        _need(goal is not None and goal.kind == "error-bound", "problem goal is not an error bound")
        _err_dw(root, ctx, goal.epsilon)
    elif ctx.kind == "safety":
        _need(root.rule == "V", "safety certificates start with V")
        _need(goal is not None and goal.kind == "safety", "problem goal is not safety")
        _safety(root, ctx, goal.region, ivp)
    elif ctx.kind == "liveness":
        _need(root.rule == "⟨&⟩", "liveness certificates start with ⟨&⟩")
        _need(goal is not None and goal.kind == "liveness", "problem goal is not liveness")
        _liveness(root, ctx, goal.region, ivp)
    elif ctx.kind == "existence":
        _need(root.rule == "StepDual→", "existence certificates start with StepDual→")
        _existence(root, ctx, ivp)
    elif ctx.kind == "step-existence":
        _need(root.rule == "StepExt", "step-existence certificates start with StepExt")
        _step_chain(root, ctx, ivp.f, ivp.init.box, _bq(root, "duration"))


def _rule_local(node: RuleApp, ctx: _Ctx):
    if node.rule == "Enc":
        _enc(node, ctx)
    elif node.rule == "LDA":
        _lda(node, ctx)
    elif node.rule == "DGi":
        _dgi(node, ctx)
    elif node.rule == "dInv":
        _dinv(node, ctx)


def _problem_from_header(header: dict):
    from ..core.parser import parse_problem
    _need(header.get("format") == FORMAT, "unknown certificate format")
    _need(header.get("kind") in CERT_KINDS, f"unknown certificate kind {header.get('kind')!r}")
    text = header.get("problem")
    _need(isinstance(text, str), "header lacks the problem text")
    _need(hashlib.sha256(text.encode()).hexdigest() == header.get("problem_sha256"),
          "problem hash mismatch")
    return parse_problem(text)


def check(cert: Certificate, problem=None) -> Accept | Reject:
    """Accept, or Reject naming the first failing node in pre-order."""
    try:
        prob = _problem_from_header(cert.header)
    except _Fail as e:
        return Reject((), "header", "", e.reason)
    except ValueError as e:
        return Reject((), "header", "", f"problem text does not parse: {e}")
    if problem is not None:
        from ..core.parser import format_problem
        if format_problem(problem) != cert.header["problem"]:
            return Reject((), "header", "", "certificate is about a different problem")
    kind = cert.header["kind"]
    if kind == "existence" and prob.goal is not None and prob.goal.kind == "exists-until":
        prob_ivp = prob.ivp.with_horizon(prob.goal.until)
    else:
        prob_ivp = prob.ivp
    ctx = _Ctx(prob_ivp, prob.goal, kind)
    try:
        _structure(cert, ctx)
    except _Fail as e:
        return Reject((), cert.root.rule, "", f"structure: {e.reason}")
    except (KeyError, TypeError, ValueError, IndexError, AttributeError) as e:
        return Reject((), cert.root.rule, "", f"structure: malformed bindings ({type(e).__name__}: {e})")
    count = 0
    for path, node in cert.root.walk():
        count += 1
        try:
            if isinstance(node, RuleApp):
                _rule_local(node, ctx)
            else:
                check_leaf(node)
        except _Fail as e:
            label = node.label if isinstance(node, ArithObligation) else ""
            name = node.kind if isinstance(node, ArithObligation) else node.rule
            return Reject(path, name, label, e.reason)
        except (KeyError, TypeError, ValueError, IndexError, AttributeError) as e:
            name = node.kind if isinstance(node, ArithObligation) else node.rule
            return Reject(path, name, "", f"malformed node ({type(e).__name__}: {e})")
    return Accept(kind, count)
