"""Property provers built on certified error bounds.

Bounded safety, liveness and existence all reduce to one pattern: find an
approximant Phi with certified error pad 2^-n, then show the pad-inflated
image of Phi lands where it should.  Step existence is separate: it chains
Picard-Lindelöf steps of duration R/M through growing boxes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from gmpy2 import mpq

from .approximant import (ApproximantFamily, FixedFamily, PicardFamily, auto_x0_degree,
                          make_approximant)
from .arith_oracle import certified_max, prove_image_in_region
from .arith_oracle.bnb import Leaf, SubdivisionWitness, constraint_excluded
from .arith_oracle.interval import DEFAULT_BITS, anchor_for, float_value, interval_eval
from .arith_oracle.region import (FALSE, TRUE, ImageWitness, formula_on_box)
from .certificate import encode as enc
from .certificate.model import Certificate, RuleApp
from .core.box import Box
from .core.parser import format_region
from .core.poly import PolyVec, norm_squared
from .core.problem import (CompactIVP, Constraint, Goal, InitRegion, OpenRegion, Problem,
                           ProblemError, ball_region)
from .core.rational import floor, q, round_up, sqrt_up
from .core.results import Infeasible
from .invariant_engine import ErrorBoundResult, Options, make_certificate, prove_error_bound

MIN_SPEED = mpq(1, 1024)  # floor on per-step field bounds M_i
TIME_GRID_DEPTH = 6  # liveness witness times come from the grid 2^-6 (T - t0)
MAX_CELL_DEPTH = 24


@dataclass(frozen=True)
class SafetyGoal:
    """Flow from every initial state stays in a bounded open region on [t0, T]."""

    ivp: CompactIVP
    region: OpenRegion

    def __post_init__(self):
        if self.region.bounded_box() is None:
            raise ProblemError("safety region must be bounded")
        if self.region.vars != self.ivp.vars:
            raise ProblemError("region is over the wrong variables")


@dataclass(frozen=True)
class LivenessGoal:
    """Flow from every initial state meets an open region at some t in [t0, T]."""

    ivp: CompactIVP
    region: OpenRegion

    def __post_init__(self):
        if self.region.vars != self.ivp.vars:
            raise ProblemError("region is over the wrong variables")


@dataclass(frozen=True)
class ProofResult:
    kind: str
    certificate: Certificate
    summary: dict
    error_bound: Optional[ErrorBoundResult] = None


def default_family(ivp: CompactIVP, phi: Optional[PolyVec] = None) -> ApproximantFamily:
    if phi is not None:
        return FixedFamily(make_approximant(phi, ivp))
    return PicardFamily(ivp, x0_degree=auto_x0_degree(ivp))


def _problem_for(ivp: CompactIVP, goal: Goal, problem: Optional[Problem]) -> Problem:
    return problem if problem is not None else Problem(ivp, goal)


# safety ---------------------------------------------------------------------

def _sample_points(ivp: CompactIVP) -> list:
    """Corners and centre of init box x {t0, mid, T} that satisfy the init constraints."""
    box = ivp.domain_box()
    pts = [box.midpoint()]
    axes = [(lo, hi) if lo != hi else (lo,) for lo, hi in box]
    stack = [[]]
    for ax in axes:
        stack = [p + [v] for p in stack for v in ax]
    pts.extend(stack)
    dom = ivp.domain_constraints()
    return [p for p in pts if all(c.holds(p) for c in dom)]


def _point_verdict(phi: PolyVec, pt, pad, formula) -> int:
    """Truth of the region formula on the pad-ball around Phi(pt)."""
    img = Box.point(phi.evaluate(pt)).inflate(pad)
    return formula_on_box(formula, img)


@dataclass(frozen=True)
class _SafetyHit:
    n: int
    pad: mpq
    error: ErrorBoundResult
    witness: ImageWitness


def _safety_search(ivp: CompactIVP, region: OpenRegion, family: ApproximantFamily,
                   opts: Options) -> Union[_SafetyHit, Infeasible]:
    formula = region.full_formula()
    samples = _sample_points(ivp)
    last = None
    for n in range(1, opts.max_n + 1):
        pad = mpq(1, 1 << n)
        err = prove_error_bound(ivp, family, pad, opts)
        if isinstance(err, Infeasible):
            if err.binding == "enclosure-divergence" or last is None:
                return err
            return Infeasible(f"no error bound at 2^-{n}: {err.reason}; {last.reason}",
                              err.binding, {"n": n, **err.diagnostics})
        phi = err.invariant.phi.phi
        verdicts = [_point_verdict(phi, p, pad, formula) for p in samples]
        if FALSE in verdicts:
            p = samples[verdicts.index(FALSE)]
            return Infeasible(
                f"refuted: the flow from {[float(x) for x in p[:-1]]} is outside the region "
                f"at t={float(p[-1]):.6g} (error at most 2^-{n})", "refuted",
                {"point": tuple(p), "n": n})
        if any(v != TRUE for v in verdicts):
            last = Infeasible(f"pad 2^-{n} too coarse at a sample point", "budget", {"n": n})
            continue
        w = prove_image_in_region(phi, ivp.domain_box(), ivp.domain_constraints(), pad, region,
                                  budget=opts.budget_nodes)
        if isinstance(w, ImageWitness):
            return _SafetyHit(n, pad, err, w)
        if w.reason == "outside" and w.point is not None:
            if _point_verdict(phi, list(w.point), pad, formula) == FALSE:
                p = w.point
                return Infeasible(
                    f"refuted: the flow from {[float(x) for x in p[:-1]]} is outside the "
                    f"region at t={float(p[-1]):.6g}", "refuted", {"point": p, "n": n})
        last = Infeasible(f"containment at pad 2^-{n} not certified ({w.reason})", "budget",
                          {"n": n, "nodes": w.nodes})
    return last or Infeasible("no pad tried", "budget")


def _safety_tree(hit: _SafetyHit, region: OpenRegion) -> RuleApp:
    contain = RuleApp("dW", {"role": "containment", "pad": enc.enc_q(hit.pad)},
                      (enc.region_leaf(hit.witness, "Phi(cell) + pad inside region"),))
    k = RuleApp("K", {"n": hit.n, "pad": enc.enc_q(hit.pad)}, (hit.error.tree, contain))
    return RuleApp("V", {"property": "safety", "region": format_region(region)}, (k,))


def _safety_summary(hit: _SafetyHit) -> dict:
    s = hit.error.summary()
    s.update({"n": hit.n, "pad": hit.pad, "cells": _count(hit.witness.tree)})
    return s


def _count(tree) -> int:
    from .arith_oracle.bnb import count_nodes
    return count_nodes(tree)


def prove_bounded_safety(goal: SafetyGoal, opts: Options = Options(), *,
                         family: Optional[ApproximantFamily] = None,
                         problem: Optional[Problem] = None) -> Union[ProofResult, Infeasible]:
    """Certify that every flow from init stays inside the region on [t0, T]."""
    ivp = goal.ivp
    family = family or default_family(ivp, problem.phi if problem else None)
    hit = _safety_search(ivp, goal.region, family, opts)
    if isinstance(hit, Infeasible):
        return hit
    tree = _safety_tree(hit, goal.region)
    prob = _problem_for(ivp, Goal("safety", region=goal.region), problem)
    s = _safety_summary(hit)
    s["kind"] = "safety"
    return ProofResult("safety", make_certificate("safety", prob, tree), s, hit.error)


# existence --------------------------------------------------------------------

def circumradius(box: Box) -> mpq:
    """Rational upper bound on the largest Euclidean norm of a point of box."""
    s = sum((max(abs(lo), abs(hi)) ** 2 for lo, hi in box), mpq(0))
    return sqrt_up(s, 32)


def _existence_search(ivp: CompactIVP, family: ApproximantFamily, opts: Options):
    r = circumradius(ivp.init.box)
    R = round_up(2 * r, 8) if r > 0 else mpq(1)
    last = None
    for _ in range(opts.r_doublings + 1):
        hit = _safety_search(ivp, ball_region(ivp.vars, R), family, opts)
        if not isinstance(hit, Infeasible):
            return R, hit
        if hit.binding in ("enclosure-divergence", "approximant-weak"):
            return None, hit
        last = hit
        R *= 2
    return None, Infeasible(f"no radius up to {float(R / 2):.4g} certified: {last.reason}",
                            "budget", {"R": R / 2})


def _existence_tree(ivp: CompactIVP, R, hit: _SafetyHit) -> RuleApp:
    region = ball_region(ivp.vars, R)
    return RuleApp("StepDual→", {"R": enc.enc_q(R), "T": enc.enc_q(ivp.T)},
                   (_safety_tree(hit, region),))


def prove_existence(ivp: CompactIVP, opts: Options = Options(), *,
                    family: Optional[ApproximantFamily] = None,
                    problem: Optional[Problem] = None) -> Union[ProofResult, Infeasible]:
    """Certify that the solution exists on [t0, T] by trapping it in a ball."""
    family = family or default_family(ivp, problem.phi if problem else None)
    R, hit = _existence_search(ivp, family, opts)
    if R is None:
        return hit
    tree = _existence_tree(ivp, R, hit)
    prob = _problem_for(ivp, Goal("exists-until", until=ivp.T), problem)
    s = _safety_summary(hit)
    s.update({"kind": "existence", "R": R, "T": ivp.T})
    return ProofResult("existence", make_certificate("existence", prob, tree), s, hit.error)


# liveness ---------------------------------------------------------------------

def _float_margin(f, vals) -> float:
    from .core.problem import Atom, And
    if isinstance(f, Atom):
        return float_value(f.poly, vals)
    ms = [_float_margin(x, vals) for x in f.items]
    return min(ms) if isinstance(f, And) else max(ms)


class _Cover:
    """Bisection of the init box with one witness time per cell."""

    def __init__(self, ivp: CompactIVP, phi: PolyVec, pad, region: OpenRegion, budget: int,
                 depth: int = TIME_GRID_DEPTH):
        self.ivp, self.phi, self.pad, self.region = ivp, phi, q(pad), region
        self.formula = region.full_formula()
        self.budget = budget
        self.nodes = 0
        self.dt = ivp.T - ivp.t0
        n = 1 << depth
        self.times = [ivp.t0 + self.dt * mpq(m, n) for m in range(n + 1)] if self.dt > 0 else [ivp.t0]
        self.dom_x0 = [Constraint(c.poly.rename(dict(zip(ivp.vars, ivp.x0_vars))), c.rel)
                       for c in ivp.init.nontrivial_constraints()]
        self.dom_full = ivp.domain_constraints()
        self.leaves: list = []

    def candidates(self, cell: Box) -> list:
        mid = [float(x) for x in cell.midpoint()]
        scored = []
        for t in self.times:
            vals = [float_value(p, mid + [float(t)]) for p in self.phi]
            m = _float_margin(self.formula, vals)
            if m > 0:
                scored.append((-m, t))
        scored.sort()
        return [t for _, t in scored[:3]]

    def cover(self, cell: Box, depth: int = 0):
        """JSON cell tree, or None when the budget runs out."""
        self.nodes += 1
        if self.nodes > self.budget:
            return None
        excl = next((i for i, c in enumerate(self.dom_x0)
                     if constraint_excluded(c, cell, "best", DEFAULT_BITS)), None)
        if excl is not None:
            return ["X", excl]
        for t in self.candidates(cell):
            w = prove_image_in_region(self.phi, cell.product(Box([(t, t)])), self.dom_full,
                                      self.pad, self.region, budget=64)
            self.nodes += 1
            if isinstance(w, ImageWitness):
                self.leaves.append(w)
                return ["W", len(self.leaves) - 1, enc.enc_q(t)]
        if depth >= MAX_CELL_DEPTH or cell.is_point():
            return None
        axis = cell.widest_axis()
        lo, hi = cell[axis]
        mid = (lo + hi) / 2
        left, right = cell.split(axis, mid)
        lt = self.cover(left, depth + 1)
        if lt is None:
            return None
        rt = self.cover(right, depth + 1)
        if rt is None:
            return None
        return ["S", axis, enc.enc_q(mid), lt, rt]


def prove_liveness(goal: LivenessGoal, opts: Options = Options(), *,
                   family: Optional[ApproximantFamily] = None,
                   problem: Optional[Problem] = None) -> Union[ProofResult, Infeasible]:
    """Certify that every flow from init enters the open region within [t0, T]."""
    ivp = goal.ivp
    family = family or default_family(ivp, problem.phi if problem else None)
    R, ex = _existence_search(ivp, family, opts)
    if R is None:
        return Infeasible(f"flow existence not certified: {ex.reason}", ex.binding, ex.diagnostics)
    last = None
    for n in range(1, opts.max_n + 1):
        pad = mpq(1, 1 << n)
        err = prove_error_bound(ivp, family, pad, opts)
        if isinstance(err, Infeasible):
            return err if last is None else Infeasible(
                f"no error bound at 2^-{n}: {err.reason}; {last.reason}", err.binding, err.diagnostics)
        cov = _Cover(ivp, err.invariant.phi.phi, pad, goal.region, opts.budget_nodes)
        cells = cov.cover(Box(list(ivp.init.box)))
        if cells is None:
            last = Infeasible(f"no witness times found at pad 2^-{n}", "budget", {"n": n})
            continue
        bdg = RuleApp("BDG⟨·⟩", {"cells": cells, "mode": "best", "bits": DEFAULT_BITS},
                      tuple(enc.region_leaf(w, "Phi(cell, t) + pad inside region")
                            for w in cov.leaves))
        kd = RuleApp("K⟨·⟩", {"n": n, "pad": enc.enc_q(pad)}, (err.tree, bdg))
        root = RuleApp("⟨&⟩", {"region": format_region(goal.region)},
                       (_existence_tree(ivp, R, ex), kd))
        prob = _problem_for(ivp, Goal("liveness", region=goal.region), problem)
        s = err.summary()
        s.update({"kind": "liveness", "n": n, "pad": pad, "cells": len(cov.leaves), "R": R})
        return ProofResult("liveness", make_certificate("liveness", prob, root), s, err)
    return last


# step existence -----------------------------------------------------------------

@dataclass(frozen=True)
class StepRecord:
    t_start: mpq
    t_end: mpq
    R: mpq
    M: mpq
    box: Box  # the box the step stays in
    witness: SubdivisionWitness  # ||f||^2 <= M^2 on box

    @property
    def dt(self) -> mpq:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class StepSchedule:
    alpha: Optional[mpq]
    N: int
    steps: tuple = field(repr=False)

    @property
    def duration(self) -> mpq:
        return self.steps[-1].t_end if self.steps else mpq(0)


@dataclass(frozen=True)
class StepExistenceResult:
    duration: mpq
    schedule: StepSchedule
    certificate: Certificate
    summary: dict


def eps_schedule(eps) -> tuple:
    """(alpha, N) for accuracy parameter eps: alpha = eps/10, N = ceil(1000/eps)."""
    eps = q(eps)
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    return eps / 10, int(math.ceil(1000 / eps))


def _field_bound(nf, box: Box, budget: int):
    """Dyadic M >= sqrt(max ||f||^2) on box, with the witness for ||f||^2 <= M^2.

    The root enclosure is used directly when it is within 2^-8 of the best
    corner or centre sample; bisecting wide boxes to high relative accuracy
    would make the witness grow with the box.
    """
    lo, hi = interval_eval(nf, box, "best", DEFAULT_BITS, anchor_for(box))
    corners = [list(pt) for pt in itertools.product(*box)]
    best = max(float_value(nf, p) for p in corners + [box.midpoint()])
    if float(hi) <= best * (1 + 2.0 ** -8):
        tree, top = Leaf(lo, hi), hi
    else:
        cm = certified_max(nf, box, mpq(1, 1 << 30), rel_tol=mpq(1, 1 << 8), budget=budget)
        tree, top = cm.witness.tree, cm.upper
    M = max(round_up(sqrt_up(max(top, mpq(0)), 48), 24), MIN_SPEED)
    return M, SubdivisionWitness(nf, box, M * M, False, tree, (), "best", DEFAULT_BITS)


def step_existence(f: PolyVec, init_box: Box, alpha=None, N: Optional[int] = None, *,
                   radius=None, eps=None, budget: int = 20_000,
                   problem: Optional[Problem] = None) -> StepExistenceResult:
    """Lower bound on how long solutions from init_box exist, by chained steps.

    Step i inflates the previous box by R, bounds ||f|| <= M on the result
    and advances time by R/M (rounded down).  R is alpha times the largest
    coordinate magnitude of init_box unless radius is given; eps selects
    alpha and N together.  With nothing given, eps = 1/10.
    """
    if eps is not None or (alpha is None and radius is None):
        a, n = eps_schedule(eps if eps is not None else mpq(1, 10))
        alpha = a if alpha is None and radius is None else alpha
        N = n if N is None else N
    if N is None or N < 1:
        raise ValueError("step count N must be a positive integer")
    if radius is not None:
        R = q(radius)
        alpha = None
    else:
        alpha = q(alpha)
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        scale = max((max(abs(lo), abs(hi)) for lo, hi in init_box), default=mpq(0))
        if scale == 0:
            raise ValueError("initial box is the origin; give an explicit radius")
        R = alpha * scale
    if R <= 0:
        raise ValueError("radius must be positive")
    nf = norm_squared(list(f))
    steps = []
    t, box = mpq(0), init_box
    for _ in range(N):
        box = box.inflate(R)
        M, w = _field_bound(nf, box, budget)
        dt = mpq(floor(R / M * (1 << 48)), 1 << 48)  # dyadic keeps the running sum short
        if dt <= 0:
            raise ArithmeticError("step duration underflow")
        steps.append(StepRecord(t, t + dt, R, M, box, w))
        t += dt
    sched = StepSchedule(alpha, N, tuple(steps))
    kids = tuple(
        RuleApp("StepEx", {"t_start": enc.enc_q(s.t_start), "t_end": enc.enc_q(s.t_end),
                           "R": enc.enc_q(s.R), "M": enc.enc_q(s.M), "box": enc.enc_box(s.box)},
                (enc.upper_leaf(s.witness, "||f||^2 <= M^2"),))
        for s in steps)
    root = RuleApp("StepExt", {"t_start": "0", "t_end": enc.enc_q(t), "duration": enc.enc_q(t),
                               "N": N, "alpha": enc.enc_q(alpha) if alpha is not None else None},
                   kids)
    if problem is None:
        vs = f.vars
        ivp = CompactIVP(vs, f, InitRegion(vs, init_box), mpq(0), mpq(0))
        problem = Problem(ivp, Goal("step-exist", alpha=alpha, steps=N,
                                    radius=R if alpha is None else None), None, False)
    cert = make_certificate("step-existence", problem, root)
    return StepExistenceResult(t, sched, cert, {"kind": "step-existence", "duration": t, "N": N,
                                                "alpha": alpha, "R": R})


# dispatch -------------------------------------------------------------------------

def prove_problem(problem: Problem, opts: Options = Options()):
    """Run the prover matching the problem's goal."""
    goal, ivp = problem.goal, problem.ivp
    if goal is None:
        raise ProblemError("problem has no goal")
    family = default_family(ivp, problem.phi)
    if goal.kind == "error-bound":
        return prove_error_bound(ivp, family, goal.epsilon, opts, problem=problem)
    if goal.kind == "safety":
        return prove_bounded_safety(SafetyGoal(ivp, goal.region), opts, family=family,
                                    problem=problem)
    if goal.kind == "liveness":
        return prove_liveness(LivenessGoal(ivp, goal.region), opts, family=family, problem=problem)
    if goal.kind == "exists-until":
        target = ivp.with_horizon(goal.until)
        return prove_existence(target, opts, family=default_family(target, problem.phi),
                               problem=problem)
    return step_existence(ivp.f, ivp.init.box, goal.alpha, goal.steps, radius=goal.radius,
                          eps=goal.eps, budget=opts.budget_nodes, problem=problem)
