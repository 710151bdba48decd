"""Polynomial expressions and the problem-file format.

A problem file is a list of statements separated by ``;`` or newlines::

    var u, v
    u' = -v - 1.5*u^2 - 0.5*u^3 - 0.5
    v' = 3*u - v
    init u >= 0.9, v >= 0.9, u + v <= 2
    horizon [0, 0.02]
    goal error-bound 0.005
    phi u = u0 + t*(...)          # optional fixed approximant

``#`` starts a comment.  Literals are integers, decimals (``1.5``, ``1e-3``)
or quotients ``p/q``; all are read as exact rationals.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

from gmpy2 import mpq

from .box import Box
from .poly import Poly, PolyVec, format_poly
from .problem import (And, Atom, CompactIVP, Constraint, Goal, GOAL_KINDS, InitRegion,
                      OpenRegion, Or, Problem, ProblemError, infer_box)
from .rational import to_str


class ParseError(ProblemError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.line, self.col, self.msg = line, col, msg
        where = f"line {line}, col {col}: " if line else ""
        super().__init__(where + msg)


@dataclass(frozen=True)
class Tok:
    kind: str  # num | id | op | nl | eof
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\*\*|<=|>=|==|&&|\|\||[-+*/^()\[\],;=<>&|'≤≥∧∨])
""", re.VERBOSE)

_OP_ALIASES = {"≤": "<=", "≥": ">=", "∧": "and", "∨": "or", "&&": "and", "&": "and",
               "||": "or", "|": "or", "==": "="}
_CONTINUES = {"+", "-", "*", "/", "^", "**", ",", "and", "or", "<", ">", "<=", ">=", "=", "("}


def tokenize(text: str) -> list[Tok]:
    toks: list[Tok] = []
    line, line_start, pos, depth = 1, 0, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        s = m.group()
        col = pos - line_start + 1
        pos = m.end()
        if kind == "nl":
            if depth == 0 and not (toks and toks[-1].kind == "op" and toks[-1].text in _CONTINUES):
                toks.append(Tok("nl", "\n", line, col))
            line += 1
            line_start = pos
            continue
        if kind in ("ws", "comment"):
            continue
        if kind == "op":
            s = _OP_ALIASES.get(s, s)
            if s in ("(", "["):
                depth += 1
            elif s in (")", "]"):
                depth = max(0, depth - 1)
        elif kind == "id" and s in ("and", "or"):
            kind = "op"
        toks.append(Tok(kind, s, line, col))
    toks.append(Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Stream:
    def __init__(self, toks: Sequence[Tok]):
        self.toks = list(toks)
        if not self.toks or self.toks[-1].kind != "eof":
            last = self.toks[-1] if self.toks else Tok("eof", "", 0, 0)
            self.toks.append(Tok("eof", "", last.line, last.col + len(last.text)))
        self.i = 0

    def peek(self, k: int = 0) -> Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> Tok:
        t = self.peek()
        self.i += 1
        return t

    def at(self, text: str) -> bool:
        t = self.peek()
        return t.kind in ("op", "id") and t.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Tok:
        t = self.peek()
        if not self.at(text):
            raise ParseError(f"expected {text!r}, found {t.text or 'end of statement'!r}", t.line, t.col)
        return self.next()

    def done(self) -> bool:
        return self.peek().kind == "eof"

    def error(self, msg: str) -> ParseError:
        t = self.peek()
        return ParseError(msg, t.line, t.col)


# expressions -------------------------------------------------------------

class _ExprParser:
    def __init__(self, stream: _Stream, variables: Sequence[str]):
        self.s = stream
        self.vars = tuple(variables)

    def expr(self) -> Poly:
        acc = self.term()
        while self.s.at("+") or self.s.at("-"):
            op = self.s.next().text
            rhs = self.term()
            acc = acc + rhs if op == "+" else acc - rhs
        return acc

    def term(self) -> Poly:
        acc = self.unary()
        while self.s.at("*") or self.s.at("/"):
            t = self.s.next()
            rhs = self.unary()
            if t.text == "*":
                acc = acc * rhs
            else:
                if not rhs.is_constant():
                    raise ParseError("division by a non-constant is not polynomial", t.line, t.col)
                if rhs.is_zero():
                    raise ParseError("division by zero", t.line, t.col)
                acc = acc / rhs.constant_term()
        return acc

    def unary(self) -> Poly:
        if self.s.accept("-"):
            return -self.unary()
        if self.s.accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> Poly:
        base = self.atom()
        if self.s.at("^") or self.s.at("**"):
            t = self.s.next()
            neg = self.s.accept("-")
            e = self.s.next()
            if e.kind != "num" or not re.fullmatch(r"\d+", e.text) or neg:
                raise ParseError("exponent must be a nonnegative integer literal", e.line, e.col)
            base = base ** int(e.text)
        return base

    def atom(self) -> Poly:
        t = self.s.peek()
        if t.kind == "num":
            self.s.next()
            return Poly.const(mpq(t.text), self.vars)
        if t.kind == "id":
            self.s.next()
            if self.s.peek().kind == "op" and self.s.peek().text == "'":
                p = self.s.peek()
                raise ParseError(f"primed variable {t.text}' may only appear on the left of an ODE",
                                 p.line, p.col)
            if t.text not in self.vars:
                allowed = ", ".join(self.vars) or "none"
                raise ParseError(f"unknown identifier {t.text!r} (allowed: {allowed})", t.line, t.col)
            return Poly.var(t.text, self.vars)
        if self.s.accept("("):
            e = self.expr()
            self.s.expect(")")
            return e
        raise ParseError(f"expected an expression, found {t.text or 'end of statement'!r}", t.line, t.col)


def parse_poly(text: str, variables: Sequence[str]) -> Poly:
    """Parse a single polynomial expression over the given variables."""
    s = _Stream([t for t in tokenize(text) if t.kind != "nl"])
    p = _ExprParser(s, variables).expr()
    if not s.done():
        raise s.error(f"unexpected {s.peek().text!r}")
    return p


def parse_rational(text: str):
    return _constant(parse_poly(text, ()), None)


def _constant(p: Poly, tok: Optional[Tok]):
    if not p.is_constant():
        raise ParseError("expected a constant", tok.line if tok else 0, tok.col if tok else 0)
    return p.constant_term()


# statements --------------------------------------------------------------

_COMPARE = ("<=", ">=", "=", "<", ">")


def _split_statements(toks: list[Tok]) -> list[list[Tok]]:
    out, cur = [], []
    for t in toks:
        if t.kind == "eof" or t.kind == "nl" or (t.kind == "op" and t.text == ";"):
            if cur:
                out.append(cur)
            cur = []
        else:
            cur.append(t)
    return out


def _comparison_chain(ep: _ExprParser) -> list[tuple[Poly, str, Poly]]:
    s = ep.s
    first = ep.expr()
    rels = []
    lhs = first
    while s.peek().kind == "op" and s.peek().text in _COMPARE:
        op = s.next().text
        rhs = ep.expr()
        rels.append((lhs, op, rhs))
        lhs = rhs
    if not rels:
        raise s.error("expected a comparison")
    return rels


def _interval(ep: _ExprParser) -> tuple:
    s = ep.s
    open_tok = s.expect("[")
    const = _ExprParser(s, ())
    a = _constant(const.expr(), open_tok)
    s.expect(",")
    b = _constant(const.expr(), open_tok)
    s.expect("]")
    if a > b:
        raise ParseError("empty interval", open_tok.line, open_tok.col)
    return a, b


def _box_items(ep: _ExprParser, explicit: dict, constraints: list, *, stop=()) -> None:
    """Parse `x in [a,b]` items and closed comparisons separated by `,`/`and`."""
    s = ep.s
    while True:
        t = s.peek()
        if t.kind == "id" and s.peek(1).kind == "id" and s.peek(1).text == "in":
            if t.text not in ep.vars:
                raise ParseError(f"unknown variable {t.text!r}", t.line, t.col)
            s.next()
            s.next()
            a, b = _interval(ep)
            if t.text in explicit:
                lo, hi = explicit[t.text]
                a, b = max(a, lo), min(b, hi)
                if a > b:
                    raise ParseError(f"initial region is empty in {t.text!r}", t.line, t.col)
            explicit[t.text] = (a, b)
        else:
            for lhs, op, rhs in _comparison_chain(ep):
                if op in ("<=", "<"):
                    constraints.append(Constraint(rhs - lhs, ">="))
                elif op in (">=", ">"):
                    constraints.append(Constraint(lhs - rhs, ">="))
                else:
                    constraints.append(Constraint(lhs - rhs, "="))
        if s.at(",") or s.at("and"):
            s.next()
            continue
        if s.done() or any(s.at(w) for w in stop):
            return
        raise s.error(f"unexpected {s.peek().text!r} in region")


class _FormulaParser:
    """Positive boolean combinations of strict comparisons."""

    def __init__(self, ep: _ExprParser, stop=("within",)):
        self.ep = ep
        self.s = ep.s
        self.stop = stop

    def disj(self):
        items = [self.conj()]
        while self.s.accept("or"):
            items.append(self.conj())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def conj(self):
        items = [self.atom()]
        while self.s.at("and") or self.s.at(","):
            self.s.next()
            items.append(self.atom())
        flat = []
        for it in items:
            flat.extend(it.items if isinstance(it, And) else [it])
        return flat[0] if len(flat) == 1 else And(tuple(flat))

    def atom(self):
        if self.s.at("("):
            save = self.s.i
            self.s.next()
            try:
                f = self.disj()
                self.s.expect(")")
                nxt = self.s.peek()
                if not (nxt.kind == "op" and nxt.text in _COMPARE + ("+", "-", "*", "/", "^", "**")):
                    return f
            except ParseError:
                pass
            self.s.i = save
        atoms = []
        for lhs, op, rhs in _comparison_chain(self.ep):
            if op in ("<", "<="):
                atoms.append(Atom(rhs - lhs))
            elif op in (">", ">="):
                atoms.append(Atom(lhs - rhs))
            else:
                raise self.s.error("equalities do not describe open regions")
        return atoms[0] if len(atoms) == 1 else And(tuple(atoms))


def _check_names(variables: Sequence[str], tok: Tok) -> None:
    seen = set()
    for v in variables:
        if v == "t":
            raise ParseError("'t' is reserved for time", tok.line, tok.col)
        if v in seen:
            raise ParseError(f"duplicate variable {v!r}", tok.line, tok.col)
        seen.add(v)
    for v in variables:
        if f"{v}0" in seen:
            raise ParseError(f"variable {v}0 clashes with the initial value of {v}", tok.line, tok.col)


def parse_region(text: str, variables: Sequence[str]) -> OpenRegion:
    s = _Stream([t for t in tokenize(text) if t.kind != "nl"])
    return _region(_ExprParser(s, variables), allow_within=True)


def _region(ep: _ExprParser, allow_within: bool) -> OpenRegion:
    s = ep.s
    formula = _FormulaParser(ep).disj()
    box = None
    if allow_within and s.accept("within"):
        explicit: dict = {}
        cons: list = []
        _box_items(ep, explicit, cons)
        box = infer_box(ep.vars, cons, explicit)
    if not s.done():
        raise s.error(f"unexpected {s.peek().text!r} after region")
    return OpenRegion(tuple(ep.vars), formula, box)


def _goal(stmt: list[Tok], variables: tuple) -> Goal:
    s = _Stream(stmt[1:])
    head = s.peek()
    parts = []
    while True:
        t = s.next()
        if t.kind != "id":
            raise ParseError("expected a goal kind", t.line, t.col)
        parts.append(t.text)
        # hyphenated kinds are written without spaces; "liveness -x > 0" is a goal and a region
        dash, nxt = s.peek(), s.peek(1)
        if (s.at("-") and nxt.kind == "id" and dash.line == t.line == nxt.line
                and dash.col == t.col + len(t.text) and nxt.col == dash.col + 1
                and any(k.startswith("-".join(parts + [nxt.text])) for k in GOAL_KINDS)):
            s.next()
            continue
        break
    kind = "-".join(parts)
    if kind not in GOAL_KINDS:
        raise ParseError(f"unknown goal {kind!r} (expected one of {', '.join(GOAL_KINDS)})",
                         head.line, head.col)
    ep = _ExprParser(s, variables)
    if kind in ("error-bound", "exists-until"):
        v = _constant(_ExprParser(s, ()).expr(), head)
        if not s.done():
            raise s.error(f"unexpected {s.peek().text!r}")
        if v <= 0 and kind == "error-bound":
            raise ParseError("error bound must be positive", head.line, head.col)
        return Goal(kind, epsilon=v) if kind == "error-bound" else Goal(kind, until=v)
    if kind in ("safety", "liveness"):
        region = _region(ep, allow_within=(kind == "safety"))
        if kind == "safety" and region.bounded_box() is None:
            raise ParseError("safety region must be bounded; add 'within x in [a, b], ...'",
                             head.line, head.col)
        return Goal(kind, region=region)
    # step-exist
    opts: dict = {}
    if s.accept("auto"):
        pass
    while not s.done():
        key = s.next()
        if key.kind != "id" or key.text not in ("alpha", "N", "radius", "eps"):
            raise ParseError("expected alpha=, N=, radius= or eps=", key.line, key.col)
        s.expect("=")
        val = _constant(_ExprParser(s, ()).expr(), key)
        if key.text == "N":
            if val.denominator != 1 or val < 1:
                raise ParseError("N must be a positive integer", key.line, key.col)
            val = int(val)
        elif val <= 0:
            raise ParseError(f"{key.text} must be positive", key.line, key.col)
        opts[key.text] = val
        s.accept(",")
    return Goal(kind, alpha=opts.get("alpha"), steps=opts.get("N"),
                radius=opts.get("radius"), eps=opts.get("eps"))


def parse_problem(text: str) -> Problem:
    """Parse a problem file into a Problem (IVP, goal, optional approximant)."""
    stmts = _split_statements(tokenize(text))
    declared: Optional[tuple] = None
    decl_tok = None
    odes: list = []
    inits: list = []
    horizon = None
    goal_stmt = None
    phis: list = []
    for st in stmts:
        head = st[0]
        if head.kind == "id" and head.text == "var":
            if declared is not None:
                raise ParseError("duplicate var statement", head.line, head.col)
            names = []
            s = _Stream(st[1:])
            while not s.done():
                t = s.next()
                if t.kind != "id":
                    raise ParseError("expected a variable name", t.line, t.col)
                names.append(t.text)
                if not s.done():
                    s.expect(",")
            if not names:
                raise ParseError("empty var statement", head.line, head.col)
            declared, decl_tok = tuple(names), head
        elif head.kind == "id" and head.text == "ode":
            odes.append(st[1:])
        elif head.kind == "id" and len(st) > 1 and st[1].text == "'":
            odes.append(st)
        elif head.kind == "id" and head.text == "init":
            inits.append(st)
        elif head.kind == "id" and head.text == "horizon":
            if horizon is not None:
                raise ParseError("duplicate horizon", head.line, head.col)
            horizon = st
        elif head.kind == "id" and head.text == "goal":
            if goal_stmt is not None:
                raise ParseError("duplicate goal", head.line, head.col)
            goal_stmt = st
        elif head.kind == "id" and head.text == "phi":
            phis.append(st)
        else:
            raise ParseError(f"unknown statement starting with {head.text!r}", head.line, head.col)

    if not odes:
        raise ParseError("no ODE given")
    lhs_names = []
    for st in odes:
        if len(st) < 3 or st[0].kind != "id" or st[1].text != "'" or st[2].text != "=":
            t = st[0]
            raise ParseError("expected `<name>' = <expression>`", t.line, t.col)
        lhs_names.append(st[0].text)
    variables = declared if declared is not None else tuple(lhs_names)
    _check_names(variables, decl_tok or odes[0][0])
    rhs = {}
    for st in odes:
        name = st[0].text
        if name not in variables:
            raise ParseError(f"ODE for undeclared variable {name!r}", st[0].line, st[0].col)
        if name in rhs:
            raise ParseError(f"two ODEs for {name!r}", st[0].line, st[0].col)
        for k in range(3, len(st)):
            if st[k].text == "'":
                prev = st[k - 1]
                raise ParseError(f"primed variable {prev.text}' may only appear on the left of an ODE",
                                 st[k].line, st[k].col)
        s = _Stream(st[3:])
        rhs[name] = _ExprParser(s, variables).expr()
        if not s.done():
            raise s.error(f"unexpected {s.peek().text!r}")
    missing = [v for v in variables if v not in rhs]
    if missing:
        raise ParseError(f"no ODE for {', '.join(missing)}")
    f = PolyVec([rhs[v] for v in variables])

    if not inits:
        raise ParseError("no init statement")
    explicit: dict = {}
    constraints: list = []
    for st in inits:
        s = _Stream(st[1:])
        _box_items(_ExprParser(s, variables), explicit, constraints)
    box = infer_box(variables, constraints, explicit)
    init = InitRegion(variables, box, tuple(constraints))
    from ..arith_oracle import region_nonempty
    if region_nonempty(init) is False:
        raise ParseError("initial region is empty", inits[0][0].line, inits[0][0].col)

    goal = _goal(goal_stmt, variables) if goal_stmt is not None else None
    horizon_given = horizon is not None
    if horizon is not None:
        s = _Stream(horizon[1:])
        t0, T = _interval(_ExprParser(s, ()))
        if not s.done():
            raise s.error(f"unexpected {s.peek().text!r}")
    elif goal is not None and goal.kind == "exists-until":
        t0, T = mpq(0), goal.until
    elif goal is not None and goal.kind == "step-exist":
        t0, T = mpq(0), mpq(0)
    else:
        raise ParseError("no horizon given")
    if goal is not None and goal.kind == "exists-until" and goal.until < t0:
        raise ParseError("exists-until time precedes the horizon start")
    ivp = CompactIVP(variables, f, init, t0, T)

    phi = None
    if phis:
        pvars = ivp.phi_vars
        comps = {}
        for st in phis:
            if len(st) < 3 or st[1].kind != "id" or st[2].text != "=":
                raise ParseError("expected `phi <name> = <expression>`", st[0].line, st[0].col)
            name = st[1].text
            if name not in variables or name in comps:
                raise ParseError(f"bad approximant component {name!r}", st[1].line, st[1].col)
            s = _Stream(st[3:])
            comps[name] = _ExprParser(s, pvars).expr()
            if not s.done():
                raise s.error(f"unexpected {s.peek().text!r}")
        if set(comps) != set(variables):
            raise ParseError("approximant must give every component")
        phi = PolyVec([comps[v] for v in variables])
    return Problem(ivp, goal, phi, horizon_given)


# serialization -----------------------------------------------------------

def format_formula(f) -> str:
    if isinstance(f, Atom):
        return f"{format_poly(f.poly)} > 0"
    sep = " and " if isinstance(f, And) else " or "
    parts = []
    for it in f.items:
        s = format_formula(it)
        if not isinstance(it, Atom):
            s = f"({s})"
        parts.append(s)
    return sep.join(parts)


def format_box_items(variables, box: Box) -> str:
    return ", ".join(f"{v} in [{to_str(lo)}, {to_str(hi)}]" for v, (lo, hi) in zip(variables, box))


def format_region(region: OpenRegion) -> str:
    s = format_formula(region.formula)
    if region.box is not None:
        s += " within " + format_box_items(region.vars, region.box)
    return s


def format_goal(goal: Goal) -> str:
    if goal.kind == "error-bound":
        return f"error-bound {to_str(goal.epsilon)}"
    if goal.kind == "exists-until":
        return f"exists-until {to_str(goal.until)}"
    if goal.kind in ("safety", "liveness"):
        return f"{goal.kind} {format_region(goal.region)}"
    opts = []
    if goal.alpha is not None:
        opts.append(f"alpha={to_str(goal.alpha)}")
    if goal.steps is not None:
        opts.append(f"N={goal.steps}")
    if goal.radius is not None:
        opts.append(f"radius={to_str(goal.radius)}")
    if goal.eps is not None:
        opts.append(f"eps={to_str(goal.eps)}")
    return "step-exist " + (" ".join(opts) if opts else "auto")


def format_problem(problem: Problem) -> str:
    """Canonical text; parse_problem(format_problem(p)) reproduces p."""
    ivp = problem.ivp
    lines = [f"var {', '.join(ivp.vars)}"]
    for v, p in zip(ivp.vars, ivp.f):
        lines.append(f"ode {v}' = {format_poly(p)}")
    items = format_box_items(ivp.vars, ivp.init.box)
    for c in ivp.init.constraints:
        items += f", {format_poly(c.poly)} {'>=' if c.rel == '>=' else '='} 0"
    lines.append(f"init {items}")
    if problem.horizon_given:
        lines.append(f"horizon [{to_str(ivp.t0)}, {to_str(ivp.T)}]")
    if problem.goal is not None:
        lines.append(f"goal {format_goal(problem.goal)}")
    if problem.phi is not None:
        for v, p in zip(ivp.vars, problem.phi):
            lines.append(f"phi {v} = {format_poly(p)}")
    return "\n".join(lines) + "\n"
