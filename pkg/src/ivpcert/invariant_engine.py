"""Certified error bounds for polynomial approximants of a compact IVP.

Pipeline for one approximant Phi:

1. certified defect delta and initial mismatch e0 (``approximant``);
2. an enclosure box B around the image of Phi with a Lipschitz bound K of f
   on B, validated a posteriori: the error pad
   rho = e0 E + (delta / K)(E - 1),  E >= e^{K (T - t0)},
   must stay below the margin separating the hull of Phi from the faces of B;
3. constants h >= max(rho, delta + K rho), c >= 1 with h (c - 1) >= e0 and
   M >= c e^{K (T - t0)} (a Taylor bound with Darboux certificate);
4. the final bound h (1 + T - t0) M - h, which must lie below the target.

The invariant has the shape
  t >= t0 and g >= 1 and C(x0) and ||x - Phi(x0, t)||^2 <= eps(g, t)^2
with eps(g, t) = h (1 + t - t0) g - h and exponential ghost g' = K g.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Union

from gmpy2 import mpq

from .approximant import (ApproximantFamily, ApproximantPoly, DefectReport, FixedFamily,
                          defect_bounds)
from .arith_oracle import certified_max, lipschitz_bound
from .arith_oracle.bnb import DEFAULT_BUDGET, SubdivisionWitness
from .arith_oracle.region import LipschitzBound
from .certificate import encode as enc
from .certificate.model import CITATIONS, FORMAT, Certificate, RuleApp
from .core.box import Box
from .core.poly import Poly, format_poly
from .core.problem import CompactIVP, Goal, Problem
from .core.rational import q, round_down, round_up
from .core.results import Infeasible
from .exp_bounds import ExpUpperProof, exp_rational_proof, exp_upper

MAX_GROWTH = 64  # K (T - t0) beyond this makes e^{K dt} useless as a pad factor
GROWTH_TOL = mpq(1, 1 << 20)


@dataclass(frozen=True)
class Options:
    budget_nodes: int = DEFAULT_BUDGET
    max_k: int = 32
    max_n: int = 12
    margin: Optional[mpq] = None
    max_doublings: int = 8
    r_doublings: int = 16
    threads: int = 1
    max_defect_terms: int = 20_000  # size cap on one defect component; larger k are skipped


# enclosure ------------------------------------------------------------------

@dataclass(frozen=True)
class EnclosureBox:
    B: Box
    K: mpq
    margin: mpq
    hull: Box
    rho: mpq
    E: mpq
    lipschitz: LipschitzBound
    hull_witnesses: tuple  # (upper witness of Phi_i, upper witness of -Phi_i) per component
    growth: ExpUpperProof

    @property
    def consistency(self) -> list:
        out = []
        for a, b in self.hull_witnesses:
            out.extend([a, b])
        for e in self.lipschitz.entries:
            out.extend([e[3], e[4]])
        return out


def default_margin(ivp: CompactIVP) -> mpq:
    d = ivp.init.box.diameter_inf()
    return d / 8 if d > 0 else mpq(1, 8)


def gronwall_pad(e0, delta, K, E) -> mpq:
    """Error bound rho = e0 E + (delta / K)(E - 1) at the end of the horizon."""
    e0, delta, K, E = q(e0), q(delta), q(K), q(E)
    return e0 * E + delta / K * (E - 1)


def phi_hull(phi: ApproximantPoly, ivp: CompactIVP, budget: int = DEFAULT_BUDGET):
    """Certified box containing Phi(init, [t0, T]) with per-component witnesses."""
    box = ivp.domain_box()
    dom = ivp.domain_constraints()
    ivs, ws = [], []
    for p in phi.phi:
        up = certified_max(p, box, mpq(1, 1 << 20), rel_tol=mpq(1, 1 << 12), domain=dom,
                           budget=budget)
        dn = certified_max(-p, box, mpq(1, 1 << 20), rel_tol=mpq(1, 1 << 12), domain=dom,
                           budget=budget)
        hi = round_up(up.upper, 32)
        lo = -round_up(dn.upper, 32)
        ivs.append((lo, hi))
        ws.append((_rebound(up.witness, hi), _rebound(dn.witness, -lo)))
    return Box(ivs), tuple(ws)


def _rebound(w: SubdivisionWitness, bound) -> SubdivisionWitness:
    return SubdivisionWitness(w.poly, w.root_box, q(bound), False, w.tree, w.domain, w.mode, w.bits)


def find_enclosure(ivp: CompactIVP, phi: ApproximantPoly, margin=None, *,
                   report: Optional[DefectReport] = None, budget: int = DEFAULT_BUDGET,
                   max_doublings: int = 8) -> Union[EnclosureBox, Infeasible]:
    """First self-consistent enclosure along the margin-doubling schedule."""
    margin = q(margin) if margin is not None else default_margin(ivp)
    if margin <= 0:
        raise ValueError("margin must be positive")
    if report is None:
        report = defect_bounds(phi, ivp, budget)
    hull, hull_w = phi_hull(phi, ivp, budget)
    dt = ivp.T - ivp.t0
    history = []
    for _ in range(max_doublings + 1):
        B = hull.inflate(margin)
        lip = lipschitz_bound(ivp.f, B, budget=budget)
        K = lip.K
        if K * dt > MAX_GROWTH:
            history.append({"margin": margin, "K": K, "rho": None})
            margin *= 2
            continue
        growth = _growth(K, dt)
        E = growth.target
        rho = gronwall_pad(report.e0, report.delta, K, E)
        history.append({"margin": margin, "K": K, "rho": rho})
        if rho < margin:
            return EnclosureBox(B, K, margin, hull, rho, E, lip, hull_w, growth)
        margin *= 2
    last = history[-1]
    return Infeasible(
        "enclosure-divergence: the error pad outgrew every tried margin "
        f"(last margin {float(last['margin']):.4g}, K {float(last['K']):.4g}, pad "
        f"{'beyond range' if last['rho'] is None else format(float(last['rho']), '.4g')}); "
        "the flow may blow up before the end of the horizon or the approximant is too crude",
        "enclosure-divergence",
        {"hull": hull, "history": history, "delta": report.delta, "e0": report.e0},
    )


def _growth(K, dt) -> ExpUpperProof:
    if dt == 0:
        return ExpUpperProof(mpq(1), q(K), mpq(0), mpq(1), 0, None, mpq(1))
    return exp_rational_proof(K, dt, GROWTH_TOL)


# constants ------------------------------------------------------------------

@dataclass(frozen=True)
class Constants:
    h: mpq
    c: mpq
    M: mpq
    k: int
    ghost: ExpUpperProof
    eps_final: mpq


def ghost_bound(c, K, dt) -> Union[ExpUpperProof, Infeasible]:
    """M >= c e^{K dt} through exp_upper, aiming just above the true value."""
    c, K, dt = q(c), q(K), q(dt)
    if dt == 0:
        return ExpUpperProof(c, K, dt, c, 0, None, c)
    E = exp_rational_proof(K, dt, mpq(1, 1 << 24)).target
    target = round_up(c * E * (1 + mpq(1, 1 << 16)), 32)
    return exp_upper(c, K, dt, target)


def choose_constants(ivp: CompactIVP, report: DefectReport, enc_box: EnclosureBox,
                     epsilon_target, k: int = 0) -> Union[Constants, Infeasible]:
    """Smallest dyadic h meeting the pad conditions, default c, certified M."""
    target = q(epsilon_target)
    if target <= 0:
        raise ValueError("epsilon_target must be positive")
    K, rho, delta, e0 = enc_box.K, enc_box.rho, report.delta, report.e0
    need = max(rho, delta + K * rho)
    dt = ivp.T - ivp.t0
    if need == 0:
        # exact approximant: any positive h works; keep the final bound tiny
        h = round_down(target / (4 * (1 + dt) * 2 ** 12), 64)
    else:
        h = _dyadic_up(need)
    floor_c = mpq(1, 1024)
    c = 1 + floor_c if e0 == 0 else 1 + max(2 * e0 / h, floor_c)
    c = round_up(c, 40)
    ghost = ghost_bound(c, K, dt)
    if isinstance(ghost, Infeasible):
        return Infeasible(f"exponential ghost bound failed: {ghost.reason}", "exp-bound",
                          ghost.diagnostics)
    M = ghost.target
    eps_final = h * (1 + dt) * M - h
    if not eps_final < target:
        return Infeasible(
            f"final bound {float(eps_final):.4g} is not below the target {float(target):.4g} "
            f"(h={float(h):.4g}, M={float(M):.4g}, delta={float(delta):.4g})",
            "epsilon", {"eps_final": eps_final, "h": h, "M": M, "delta": delta, "k": k})
    return Constants(h, c, M, k, ghost, eps_final)


def _dyadic_up(x: mpq) -> mpq:
    """Round up to 24 significant bits."""
    e = x.numerator.bit_length() - x.denominator.bit_length()
    return round_up(x, max(24 - e, 0))


# invariant ------------------------------------------------------------------

@dataclass(frozen=True)
class InvariantSpec:
    h: mpq
    c: mpq
    K: mpq
    t0: mpq
    T: mpq
    phi: ApproximantPoly
    enclosure: Optional[EnclosureBox] = None

    def epsilon(self, g, t) -> mpq:
        return self.h * (1 + q(t) - self.t0) * q(g) - self.h

    def epsilon_poly(self) -> Poly:
        """eps(g, t) as a polynomial over (g, t)."""
        g = Poly.var("g", ("g", "t"))
        t = Poly.var("t", ("g", "t"))
        return (g * (t + (1 - self.t0)) - 1).scale(self.h)

    def epsilon_text(self) -> str:
        one = 1 - self.t0
        inner = "(1 + t)" if self.t0 == 0 else f"({enc.enc_q(one)} + t)"
        return f"{enc.enc_q(self.h)}*({inner}*g - 1)"

    def psi_text(self, ivp: CompactIVP) -> str:
        diffs = " + ".join(f"({v} - ({format_poly(p)}))^2" for v, p in zip(ivp.vars, self.phi.phi))
        return (f"t >= {enc.enc_q(self.t0)} & g >= 1 & C({', '.join(ivp.x0_vars)}) & "
                f"{diffs} <= ({self.epsilon_text()})^2")


def build_invariant(h, c, K, ivp: CompactIVP, phi: ApproximantPoly,
                    enclosure: Optional[EnclosureBox] = None) -> InvariantSpec:
    return InvariantSpec(q(h), q(c), q(K), ivp.t0, ivp.T, phi, enclosure)


# pipeline -------------------------------------------------------------------

@dataclass
class Attempt:
    """Everything that does not depend on the target for one family member."""

    k: int
    phi: ApproximantPoly
    report: DefectReport
    enclosure: Union[EnclosureBox, Infeasible]


def _attempt(ivp: CompactIVP, family: ApproximantFamily, k: int, opts: Options) -> Attempt:
    cache = family.__dict__.setdefault("_attempts", {})
    key = (k, ivp.t0, ivp.T, opts.margin, opts.budget_nodes)
    if key not in cache:
        phi = family(k)
        report = defect_bounds(phi, ivp, opts.budget_nodes)
        encl = find_enclosure(ivp, phi, opts.margin, report=report, budget=opts.budget_nodes,
                              max_doublings=opts.max_doublings)
        cache[key] = Attempt(k, phi, report, encl)
    return cache[key]


@dataclass(frozen=True)
class Selection:
    attempt: Attempt
    constants: Constants


def select_constants(ivp: CompactIVP, family: ApproximantFamily, epsilon_target,
                     opts: Options = Options()) -> Union[Selection, Infeasible]:
    """Search k along 0, 1, 2, 4, ... then bisect back to the smallest success."""
    target = q(epsilon_target)
    if target <= 0:
        raise ValueError("epsilon_target must be positive")
    failures = {}

    def trial(k):
        a = _attempt(ivp, family, k, opts)
        if isinstance(a.enclosure, Infeasible):
            failures[k] = a.enclosure
            return None
        r = choose_constants(ivp, a.report, a.enclosure, target, k)
        if isinstance(r, Infeasible):
            failures[k] = r
            return None
        return Selection(a, r)

    sched = family.schedule(opts.max_k)
    if isinstance(family, FixedFamily):
        sched = [0]
    elif sched and sched[0] != 0:
        sched = [0] + sched
    fits = [k for k in range(max(sched) + 1) if family.size_estimate(k) <= opts.max_defect_terms]
    sched = [k for k in sched if k in fits]
    if fits and (not sched or sched[-1] < fits[-1]):
        sched.append(fits[-1])
    if not sched:
        return Infeasible(f"every k exceeds the defect size cap {opts.max_defect_terms}", "budget",
                          {"max_defect_terms": opts.max_defect_terms})
    prev, found = None, None
    for k in sched:
        s = trial(k)
        if s is not None:
            found = s
            break
        prev = k
    if found is None:
        return _summarize_failures(failures, target)
    lo, hi = prev, found.attempt.k
    if lo is not None:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            s = trial(mid)
            if s is not None:
                hi, found = mid, s
            else:
                lo = mid
    return found


def _summarize_failures(failures: dict, target) -> Infeasible:
    kinds = {f.binding for f in failures.values()}
    last_k = max(failures) if failures else None
    last = failures.get(last_k)
    if kinds == {"enclosure-divergence"}:
        return Infeasible(last.reason, "enclosure-divergence",
                          {"tried_k": sorted(failures), **last.diagnostics})
    msg = (f"approximant family too weak for target {float(target):.4g} up to k={last_k}: "
           f"{last.reason}")
    return Infeasible(msg, "approximant-weak" if "epsilon" in kinds or "exp-bound" in kinds
                      else last.binding, {"tried_k": sorted(failures), **last.diagnostics})


@dataclass(frozen=True)
class ErrorBoundResult:
    epsilon_target: mpq
    k: int
    invariant: InvariantSpec
    exp_proof: ExpUpperProof
    certificate: Certificate
    report: DefectReport
    M: mpq
    eps_final: mpq
    tree: RuleApp

    def summary(self) -> dict:
        inv = self.invariant
        return {"kind": "error-bound", "k": self.k, "h": inv.h, "c": inv.c, "K": inv.K,
                "M": self.M, "delta": self.report.delta, "e0": self.report.e0,
                "bound": self.eps_final, "target": self.epsilon_target,
                "epsilon": inv.epsilon_text()}


def prove_error_bound(ivp: CompactIVP, family: ApproximantFamily, epsilon_target,
                      opts: Options = Options(), *, problem: Optional[Problem] = None
                      ) -> Union[ErrorBoundResult, Infeasible]:
    """Certified sup ||phi - Phi_k|| < epsilon_target over init x [t0, T]."""
    target = q(epsilon_target)
    sel = select_constants(ivp, family, target, opts)
    if isinstance(sel, Infeasible):
        return sel
    a, cst = sel.attempt, sel.constants
    inv = build_invariant(cst.h, cst.c, a.enclosure.K, ivp, a.phi, a.enclosure)
    tree = error_bound_tree(ivp, a, cst, inv, target)
    if problem is None:
        problem = Problem(ivp, Goal("error-bound", epsilon=target),
                          a.phi.phi if isinstance(family, FixedFamily) else None)
    cert = make_certificate("error-bound", problem, tree)
    return ErrorBoundResult(target, a.k, inv, cst.ghost, cert, a.report, cst.M, cst.eps_final, tree)


# certificate assembly -----------------------------------------------------------

def problem_text(problem: Problem) -> str:
    from .core.parser import format_problem
    return format_problem(problem)


def make_certificate(kind: str, problem: Problem, root: RuleApp, extra: Optional[dict] = None
                     ) -> Certificate:
    from .core.parser import format_goal
    text = problem_text(problem)
    header = {
        "format": FORMAT,
        "kind": kind,
        "problem": text,
        "problem_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "goal": format_goal(problem.goal) if problem.goal is not None else "",
        "justification": list(CITATIONS[kind]),
    }
    if extra:
        header.update(extra)
    return Certificate(header, root)


def exp_node(role: str, proof: ExpUpperProof) -> RuleApp:
    """DGi node: the ghost g' = K g, g(0) = c stays below the bound on [0, dt]."""
    b = {"role": role, "c": enc.enc_q(proof.c), "K": enc.enc_q(proof.K), "dt": enc.enc_q(proof.dt),
         "n": proof.n, "bound": enc.enc_q(proof.target)}
    kids = ()
    if proof.theta is not None:
        kids = (enc.sturm_leaf(proof.theta.darboux, "theta' - K theta >= 0 on [0, dt]"),)
    return RuleApp("DGi", b, kids)


def enclosure_node(ivp: CompactIVP, e: EnclosureBox) -> RuleApp:
    kids = []
    for i, (wu, wd) in enumerate(e.hull_witnesses):
        kids.append(enc.upper_leaf(wu, f"Phi_{i} <= hull upper"))
        kids.append(enc.lower_leaf(wd, f"Phi_{i} >= hull lower"))
    for (i, j, m, wu, wd) in e.lipschitz.entries:
        kids.append(enc.upper_leaf(wu, f"df{i}/dx{j} <= m"))
        kids.append(enc.lower_leaf(wd, f"df{i}/dx{j} >= -m"))
    b = {
        "hull": enc.enc_box(e.hull), "margin": enc.enc_q(e.margin), "B": enc.enc_box(e.B),
        "K": enc.enc_q(e.K),
        "jacobian_bounds": [[i, j, enc.enc_q(m)] for (i, j, m, _, _) in e.lipschitz.entries],
        "field": enc.enc_polyvec(ivp.f),
    }
    return RuleApp("Enc", b, tuple(kids))


def error_bound_tree(ivp: CompactIVP, a: Attempt, cst: Constants, inv: InvariantSpec,
                     target) -> RuleApp:
    e, r = a.enclosure, a.report
    dinv_kids = []
    for i, cb in enumerate(r.defect):
        dinv_kids.append(enc.upper_leaf(cb.upper, f"defect_{i} <= m"))
        dinv_kids.append(enc.lower_leaf(cb.lower, f"defect_{i} >= -m"))
    if a.phi.anchored:
        dinv_kids.append(enc.identity_leaf(
            "anchored", {"t0": enc.enc_q(ivp.t0), "phi": enc.enc_polyvec(a.phi.phi)},
            "Phi(x0, t0) = x0"))
    else:
        for i, cb in enumerate(r.mismatch):
            dinv_kids.append(enc.upper_leaf(cb.upper, f"mismatch_{i} <= m"))
            dinv_kids.append(enc.lower_leaf(cb.lower, f"mismatch_{i} >= -m"))
    dinv = RuleApp("dInv", {
        "psi": inv.psi_text(ivp),
        "epsilon": inv.epsilon_text(),
        "defect_bounds": [enc.enc_q(cb.bound) for cb in r.defect],
        "mismatch_bounds": [enc.enc_q(cb.bound) for cb in r.mismatch],
        "delta": enc.enc_q(r.delta), "e0": enc.enc_q(r.e0),
    }, tuple(dinv_kids))
    lda = RuleApp("LDA", {
        "phi": enc.enc_polyvec(a.phi.phi), "k": a.k, "h": enc.enc_q(cst.h), "c": enc.enc_q(cst.c),
        "K": enc.enc_q(e.K), "M": enc.enc_q(cst.M), "E": enc.enc_q(e.E), "rho": enc.enc_q(e.rho),
        "delta": enc.enc_q(r.delta), "e0": enc.enc_q(r.e0), "t0": enc.enc_q(ivp.t0),
        "T": enc.enc_q(ivp.T), "eps_final": enc.enc_q(cst.eps_final), "target": enc.enc_q(target),
        "epsilon": inv.epsilon_text(),
    }, (exp_node("growth", e.growth), exp_node("ghost", cst.ghost), dinv))
    dc = RuleApp("dC", {"B": enc.enc_box(e.B)}, (enclosure_node(ivp, e), lda))
    return RuleApp("dW", {"role": "error-bound", "target": enc.enc_q(target),
                          "eps_final": enc.enc_q(cst.eps_final)}, (dc,))
