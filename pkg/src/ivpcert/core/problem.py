"""Problem-level types: initial regions, open regions, compact IVPs and goals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

from gmpy2 import mpq

from .box import Box
from .poly import Poly, PolyVec
from .rational import q


class ProblemError(ValueError):
    """Malformed or semantically invalid problem."""


# initial regions ---------------------------------------------------------

INIT_RELATIONS = (">=", "=")


@dataclass(frozen=True)
class Constraint:
    """``poly >= 0`` or ``poly = 0``."""

    poly: Poly
    rel: str

    def __post_init__(self):
        if self.rel not in INIT_RELATIONS:
            raise ProblemError(f"bad init relation {self.rel!r}")

    def holds(self, point) -> bool:
        v = self.poly.evaluate(point)
        return v >= 0 if self.rel == ">=" else v == 0


@dataclass(frozen=True)
class InitRegion:
    """Bounding box intersected with closed polynomial constraints."""

    vars: tuple
    box: Box
    constraints: tuple = ()

    def __post_init__(self):
        if self.box.dim != len(self.vars):
            raise ProblemError("init box dimension does not match the variables")
        for c in self.constraints:
            if c.poly.vars != self.vars:
                raise ProblemError("init constraint over the wrong variables")

    def contains(self, point) -> bool:
        return self.box.contains_point(point) and all(c.holds(point) for c in self.constraints)

    def nontrivial_constraints(self) -> tuple:
        """Constraints not already implied by the bounding box alone."""
        out = []
        for c in self.constraints:
            lin = _single_var_linear(c.poly)
            if lin is not None:
                i, a, b = lin
                lo, hi = self.box[i]
                if c.rel == "=" and lo == hi == -b / a:
                    continue
                if c.rel == ">=":
                    bound = -b / a
                    if (a > 0 and lo >= bound) or (a < 0 and hi <= bound):
                        continue
            out.append(c)
        return tuple(out)


def _single_var_linear(p: Poly):
    """(index, a, b) when p = a*x_i + b with a != 0, else None."""
    if p.degree() != 1:
        return None
    n = len(p.vars)
    idx = None
    a = b = mpq(0)
    for e, c in p.terms.items():
        s = sum(e)
        if s == 0:
            b = c
        else:
            i = e.index(1)
            if idx is not None and idx != i:
                return None
            idx, a = i, c
    if idx is None:
        return None
    return idx, a, b


def infer_box(variables: Sequence[str], constraints: Sequence[Constraint],
              explicit: dict | None = None) -> Box:
    """Bounding box from explicit intervals plus linear bound propagation.

    Raises ProblemError when some variable stays unbounded.
    """
    n = len(variables)
    lo: list = [None] * n
    hi: list = [None] * n
    for name, (a, b) in (explicit or {}).items():
        i = variables.index(name)
        lo[i] = a if lo[i] is None else max(lo[i], a)
        hi[i] = b if hi[i] is None else min(hi[i], b)

    linear = []
    for c in constraints:
        if c.poly.degree() > 1:
            continue
        coeffs = [mpq(0)] * n
        const = c.poly.constant_term()
        for e, k in c.poly.terms.items():
            if sum(e):
                coeffs[e.index(1)] = k
        linear.append((coeffs, const, c.rel))

    def tighten_upper(i, v):
        if hi[i] is None or v < hi[i]:
            hi[i] = v
            return True
        return False

    def tighten_lower(i, v):
        if lo[i] is None or v > lo[i]:
            lo[i] = v
            return True
        return False

    # sum a_j x_j + b >= 0  ==>  a_i x_i >= -b - sum_{j!=i} max(a_j x_j)
    for _ in range(4 * n + 4):
        changed = False
        for coeffs, const, rel in linear:
            forms = [(coeffs, const)] if rel == ">=" else [(coeffs, const), ([-a for a in coeffs], -const)]
            for cs, b in forms:
                for i, ai in enumerate(cs):
                    if ai == 0:
                        continue
                    rest = mpq(0)
                    ok = True
                    for j, aj in enumerate(cs):
                        if j == i or aj == 0:
                            continue
                        bound = hi[j] if aj > 0 else lo[j]
                        if bound is None:
                            ok = False
                            break
                        rest += aj * bound
                    if not ok:
                        continue
                    rhs = (-b - rest) / ai
                    if ai > 0:
                        changed |= tighten_lower(i, rhs)
                    else:
                        changed |= tighten_upper(i, rhs)
        if not changed:
            break
    for i, v in enumerate(variables):
        if lo[i] is None or hi[i] is None:
            raise ProblemError(f"initial region is unbounded in {v!r}; add '{v} in [a, b]'")
        if lo[i] > hi[i]:
            raise ProblemError(f"initial region is empty (bounds on {v!r} cross)")
    return Box(list(zip(lo, hi)))


# open regions ------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    """Strict inequality ``poly > 0``."""

    poly: Poly


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


Formula = Union[Atom, And, Or]


def formula_atoms(f: Formula) -> list:
    if isinstance(f, Atom):
        return [f]
    out = []
    for it in f.items:
        out.extend(formula_atoms(it))
    return out


def formula_holds(f: Formula, point) -> bool:
    if isinstance(f, Atom):
        return f.poly.evaluate(point) > 0
    if isinstance(f, And):
        return all(formula_holds(i, point) for i in f.items)
    return any(formula_holds(i, point) for i in f.items)


def formula_margin(f: Formula, point_values) -> float:
    """Float robustness score: positive iff the point satisfies the formula."""
    if isinstance(f, Atom):
        return float(f.poly.evaluate(point_values))
    vals = [formula_margin(i, point_values) for i in f.items]
    return min(vals) if isinstance(f, And) else max(vals)


@dataclass(frozen=True)
class OpenRegion:
    """Positive boolean combination of strict polynomial inequalities."""

    vars: tuple
    formula: Formula
    box: Optional[Box] = None

    def atoms(self) -> list:
        return formula_atoms(self.formula)

    def contains(self, point) -> bool:
        if self.box is not None and not all(lo < x < hi for (lo, hi), x in zip(self.box, point)):
            return False
        return formula_holds(self.formula, point)

    def box_atoms(self) -> list:
        """Strict atoms lo < x_i < hi for the declared box (empty when absent)."""
        if self.box is None:
            return []
        out = []
        for i, (lo, hi) in enumerate(self.box):
            x = Poly.var(self.vars[i], self.vars)
            out.append(Atom(x - lo))
            out.append(Atom(hi - x))
        return out

    def full_formula(self) -> Formula:
        """The formula conjoined with the interior of the declared box."""
        extra = self.box_atoms()
        if not extra:
            return self.formula
        items = list(self.formula.items) if isinstance(self.formula, And) else [self.formula]
        return And(tuple(items + extra))

    def bounded_box(self) -> Optional[Box]:
        """Declared box, or one implied by top-level single-variable atoms."""
        if self.box is not None:
            return self.box
        conj = self.formula.items if isinstance(self.formula, And) else (self.formula,)
        cons = [Constraint(a.poly, ">=") for a in conj if isinstance(a, Atom) and a.poly.degree() <= 1]
        try:
            return infer_box(self.vars, cons)
        except ProblemError:
            return None


def ball_region(variables: Sequence[str], radius) -> OpenRegion:
    """Open ball ||x||^2 < R^2 with its circumscribing box declared."""
    variables = tuple(variables)
    r = q(radius)
    p = Poly.const(r * r, variables)
    for v in variables:
        x = Poly.var(v, variables)
        p = p - x * x
    return OpenRegion(variables, Atom(p), Box([(-r, r)] * len(variables)))


# problems ----------------------------------------------------------------

@dataclass(frozen=True)
class CompactIVP:
    """x' = f(x), x(t0) in init, over [t0, T]."""

    vars: tuple
    f: PolyVec
    init: InitRegion
    t0: mpq
    T: mpq

    def __post_init__(self):
        if self.t0 > self.T:
            raise ProblemError("horizon start exceeds its end")
        if len(self.f) != len(self.vars) or self.f.vars != self.vars:
            raise ProblemError("vector field dimension does not match the state variables")
        if self.init.vars != self.vars:
            raise ProblemError("init region over the wrong variables")

    @property
    def dim(self) -> int:
        return len(self.vars)

    @property
    def x0_vars(self) -> tuple:
        return tuple(f"{v}0" for v in self.vars)

    @property
    def phi_vars(self) -> tuple:
        return self.x0_vars + ("t",)

    def domain_box(self) -> Box:
        """init box x [t0, T] in approximant coordinates."""
        return self.init.box.product(Box([(self.t0, self.T)]))

    def with_horizon(self, T) -> "CompactIVP":
        return CompactIVP(self.vars, self.f, self.init, self.t0, q(T))

    def domain_constraints(self) -> tuple:
        """Init constraints rewritten over (x0..., t)."""
        out = []
        for c in self.init.nontrivial_constraints():
            p = c.poly.rename(dict(zip(self.vars, self.x0_vars))).with_vars(self.phi_vars)
            out.append(Constraint(p, c.rel))
        return tuple(out)


@dataclass(frozen=True)
class Goal:
    kind: str  # error-bound | safety | liveness | exists-until | step-exist
    epsilon: Optional[mpq] = None
    region: Optional[OpenRegion] = None
    until: Optional[mpq] = None
    alpha: Optional[mpq] = None
    steps: Optional[int] = None
    radius: Optional[mpq] = None
    eps: Optional[mpq] = None


GOAL_KINDS = ("error-bound", "safety", "liveness", "exists-until", "step-exist")


@dataclass(frozen=True)
class Problem:
    ivp: CompactIVP
    goal: Optional[Goal] = None
    phi: Optional[PolyVec] = None
    horizon_given: bool = True
