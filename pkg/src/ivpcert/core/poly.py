"""Sparse multivariate polynomials with exact rational coefficients."""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from gmpy2 import mpq, mpz

from .rational import nearest, q

Exps = tuple
_SCALARS = (int, mpz, Fraction, type(mpq(0)))


class VariableMismatch(ValueError):
    """Raised when two polynomials live over different variable lists."""


def _scalar(x):
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    return mpq(x)


def _order_key(item):
    exps = item[0]
    return (-sum(exps), tuple(-e for e in exps))


class Poly:
    """Immutable polynomial over an ordered variable tuple.

    ``terms`` maps exponent tuples to nonzero mpq coefficients.
    """

    __slots__ = ("vars", "terms", "_hash", "_cache")

    def __init__(self, variables: Iterable[str], terms: Mapping[Exps, object] | None = None):
        self.vars = tuple(variables)
        if len(set(self.vars)) != len(self.vars):
            raise ValueError(f"duplicate variable names in {self.vars}")
        n = len(self.vars)
        clean = {}
        for exps, c in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != n:
                raise VariableMismatch(f"exponent vector {exps} does not match {self.vars}")
            if any(e < 0 for e in exps):
                raise ValueError("negative exponent")
            c = _scalar(c)
            if c != 0:
                clean[exps] = clean.get(exps, mpq(0)) + c
                if clean[exps] == 0:
                    del clean[exps]
        self.terms = clean
        self._hash = None
        self._cache = {}

    @classmethod
    def _raw(cls, variables: tuple, terms: dict) -> "Poly":
        p = object.__new__(cls)
        p.vars = variables
        p.terms = terms
        p._hash = None
        p._cache = {}
        return p

    # construction ---------------------------------------------------------

    @classmethod
    def zero(cls, variables) -> "Poly":
        return cls._raw(tuple(variables), {})

    @classmethod
    def const(cls, c, variables) -> "Poly":
        variables = tuple(variables)
        c = _scalar(c)
        return cls._raw(variables, {(0,) * len(variables): c} if c != 0 else {})

    @classmethod
    def var(cls, name: str, variables) -> "Poly":
        variables = tuple(variables)
        if name not in variables:
            raise VariableMismatch(f"{name!r} not among {variables}")
        exps = tuple(1 if v == name else 0 for v in variables)
        return cls._raw(variables, {exps: mpq(1)})

    # inspection -----------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(not any(e) for e in self.terms)

    def constant_term(self) -> mpq:
        return self.terms.get((0,) * len(self.vars), mpq(0))

    def degree(self, name: str | None = None) -> int:
        if not self.terms:
            return -1
        if name is None:
            return max(sum(e) for e in self.terms)
        i = self._index(name)
        return max(e[i] for e in self.terms)

    def _index(self, name: str) -> int:
        try:
            return self.vars.index(name)
        except ValueError:
            raise VariableMismatch(f"{name!r} not among {self.vars}") from None

    def sorted_terms(self) -> list:
        """Terms in graded-lexicographic order, highest first."""
        return sorted(self.terms.items(), key=_order_key)

    def __len__(self) -> int:
        return len(self.terms)

    # arithmetic -----------------------------------------------------------

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            if other.vars != self.vars:
                raise VariableMismatch(f"{self.vars} vs {other.vars}")
            return other
        if isinstance(other, _SCALARS):
            return Poly.const(other, self.vars)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self.terms)
        for e, c in other.terms.items():
            s = out.get(e)
            if s is None:
                out[e] = c
            else:
                s = s + c
                if s == 0:
                    del out[e]
                else:
                    out[e] = s
        return Poly._raw(self.vars, out)

    __radd__ = __add__

    def __neg__(self):
        return Poly._raw(self.vars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def scale(self, c) -> "Poly":
        c = _scalar(c)
        if c == 0:
            return Poly.zero(self.vars)
        return Poly._raw(self.vars, {e: k * c for e, k in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, _SCALARS):
            return self.scale(other)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self.mul(other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, _SCALARS):
            return self.scale(1 / _scalar(other))
        if isinstance(other, Poly) and other.is_constant() and not other.is_zero():
            return self.scale(1 / other.constant_term())
        raise TypeError("polynomials can only be divided by nonzero constants")

    def mul(self, other: "Poly", keep: Callable[[Exps], bool] | None = None) -> "Poly":
        """Product, optionally dropping every monomial rejected by ``keep``."""
        if other.vars != self.vars:
            raise VariableMismatch(f"{self.vars} vs {other.vars}")
        out: dict = {}
        get = out.get
        b_items = list(other.terms.items())
        for ea, ca in self.terms.items():
            for eb, cb in b_items:
                e = tuple(x + y for x, y in zip(ea, eb))
                if keep is not None and not keep(e):
                    continue
                out[e] = get(e, 0) + ca * cb
        return Poly._raw(self.vars, {e: c for e, c in out.items() if c != 0})

    def __pow__(self, k: int):
        return self.power(k)

    def power(self, k: int, keep: Callable[[Exps], bool] | None = None) -> "Poly":
        if k < 0:
            raise ValueError("negative power")
        result = Poly.const(1, self.vars)
        base = self
        while k:
            if k & 1:
                result = result.mul(base, keep)
            k >>= 1
            if k:
                base = base.mul(base, keep)
        return result

    def truncate(self, keep: Callable[[Exps], bool]) -> "Poly":
        return Poly._raw(self.vars, {e: c for e, c in self.terms.items() if keep(e)})

    # calculus -------------------------------------------------------------

    def diff(self, name: str) -> "Poly":
        key = ("d", name)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        i = self._index(name)
        out = {}
        for e, c in self.terms.items():
            if e[i]:
                ne = e[:i] + (e[i] - 1,) + e[i + 1:]
                out[ne] = c * e[i]
        res = Poly._raw(self.vars, out)
        self._cache[key] = res
        return res

    def antiderivative(self, name: str) -> "Poly":
        i = self._index(name)
        out = {}
        for e, c in self.terms.items():
            ne = e[:i] + (e[i] + 1,) + e[i + 1:]
            out[ne] = c / (e[i] + 1)
        return Poly._raw(self.vars, out)

    def integrate(self, name: str, lower=0) -> "Poly":
        """Antiderivative in ``name`` vanishing at ``name = lower``."""
        prim = self.antiderivative(name)
        lower = _scalar(lower)
        if lower == 0:
            return prim
        return prim - prim.substitute_value(name, lower)

    # substitution and evaluation ------------------------------------------

    def substitute_value(self, name: str, value) -> "Poly":
        """Fix one variable to a rational; the variable stays in the context."""
        i = self._index(name)
        value = _scalar(value)
        out: dict = {}
        for e, c in self.terms.items():
            ne = e[:i] + (0,) + e[i + 1:]
            out[ne] = out.get(ne, 0) + c * value ** e[i]
        return Poly._raw(self.vars, {e: c for e, c in out.items() if c != 0})

    def compose(self, mapping: Mapping[str, "Poly"], new_vars: Sequence[str] | None = None,
                keep: Callable[[Exps], bool] | None = None) -> "Poly":
        """Substitute polynomials for variables.

        Every variable of ``self`` must either be a key of ``mapping`` or a
        name in the target context; all images share one variable list.
        """
        if new_vars is None:
            images = [m for m in mapping.values()]
            if not images:
                return self
            new_vars = images[0].vars
        new_vars = tuple(new_vars)
        subs = []
        for v in self.vars:
            if v in mapping:
                img = mapping[v]
                if img.vars != new_vars:
                    raise VariableMismatch(f"image of {v} lives over {img.vars}, expected {new_vars}")
                subs.append(img)
            elif v in new_vars:
                subs.append(Poly.var(v, new_vars))
            else:
                raise VariableMismatch(f"no image for variable {v!r}")
        powers: list[dict] = [{0: Poly.const(1, new_vars)} for _ in subs]

        def pw(i, k):
            table = powers[i]
            if k not in table:
                j = max(x for x in table if x < k)
                acc = table[j]
                for m in range(j + 1, k + 1):
                    acc = acc.mul(subs[i], keep)
                    table[m] = acc
            return table[k]

        result = Poly.zero(new_vars)
        acc: dict = {}
        for e, c in self.terms.items():
            term = Poly.const(c, new_vars)
            for i, k in enumerate(e):
                if k:
                    term = term.mul(pw(i, k), keep)
            for te, tc in term.terms.items():
                acc[te] = acc.get(te, 0) + tc
        result = Poly._raw(new_vars, {e: c for e, c in acc.items() if c != 0})
        return result

    def with_vars(self, new_vars: Sequence[str]) -> "Poly":
        """Re-express over a context that contains every variable in use."""
        new_vars = tuple(new_vars)
        if new_vars == self.vars:
            return self
        used = [i for i, v in enumerate(self.vars) if any(e[i] for e in self.terms)]
        for i in used:
            if self.vars[i] not in new_vars:
                raise VariableMismatch(f"variable {self.vars[i]!r} missing from {new_vars}")
        pos = {v: i for i, v in enumerate(self.vars)}
        out = {}
        for e, c in self.terms.items():
            ne = tuple(e[pos[v]] if v in pos else 0 for v in new_vars)
            out[ne] = c
        return Poly._raw(new_vars, out)

    def translate(self, offsets: Sequence) -> "Poly":
        """p(x + a) for the offset vector a, one variable at a time (Taylor shift)."""
        if len(offsets) != len(self.vars):
            raise VariableMismatch(f"{len(offsets)} offsets for {len(self.vars)} variables")
        terms = dict(self.terms)
        for i, a in enumerate(offsets):
            a = _scalar(a)
            if a == 0:
                continue
            top = max((e[i] for e in terms), default=0)
            apow = [mpq(1)]
            for _ in range(top):
                apow.append(apow[-1] * a)
            out: dict = {}
            get = out.get
            for e, c in terms.items():
                k = e[i]
                if k == 0:
                    out[e] = get(e, 0) + c
                    continue
                head, tail = e[:i], e[i + 1:]
                binom = 1
                for j in range(k, -1, -1):
                    # coefficient of x_i^j in (x_i + a)^k is C(k, j) a^(k - j)
                    ne = head + (j,) + tail
                    out[ne] = get(ne, 0) + c * binom * apow[k - j]
                    binom = binom * j // (k - j + 1)
            terms = {e: c for e, c in out.items() if c != 0}
        return Poly._raw(self.vars, terms)

    def rename(self, mapping: Mapping[str, str]) -> "Poly":
        return Poly._raw(tuple(mapping.get(v, v) for v in self.vars), dict(self.terms))

    def __call__(self, *point):
        return self.evaluate(point)

    def evaluate(self, point: Sequence) -> mpq:
        if len(point) != len(self.vars):
            raise VariableMismatch(f"point of dimension {len(point)} for {len(self.vars)} variables")
        pt = [_scalar(x) for x in point]
        cache: list[dict] = [{} for _ in pt]
        total = mpq(0)
        for e, c in self.terms.items():
            val = c
            for i, k in enumerate(e):
                if k:
                    pk = cache[i].get(k)
                    if pk is None:
                        pk = pt[i] ** k
                        cache[i][k] = pk
                    val = val * pk
            total += val
        return total

    def map_coeffs(self, fn: Callable[[Exps, mpq], mpq]) -> "Poly":
        out = {}
        for e, c in self.terms.items():
            nc = _scalar(fn(e, c))
            if nc != 0:
                out[e] = nc
        return Poly._raw(self.vars, out)

    def round_coeffs(self, denom_bits: int, protect: Callable[[Exps], bool] | None = None) -> "Poly":
        return self.map_coeffs(
            lambda e, c: c if (protect is not None and protect(e)) else nearest(c, denom_bits)
        )

    def univariate_coeffs(self) -> list:
        """Dense coefficient list [c0, c1, ...] of a one-variable polynomial."""
        if len(self.vars) != 1:
            used = [v for i, v in enumerate(self.vars) if any(e[i] for e in self.terms)]
            if len(used) > 1:
                raise VariableMismatch("polynomial is not univariate")
            i = self.vars.index(used[0]) if used else 0
        else:
            i = 0
        d = max((e[i] for e in self.terms), default=0)
        out = [mpq(0)] * (d + 1)
        for e, c in self.terms.items():
            out[e[i]] += c
        return out

    @classmethod
    def from_univariate(cls, coeffs: Sequence, name: str) -> "Poly":
        return cls._raw((name,), {(i,): _scalar(c) for i, c in enumerate(coeffs) if c != 0})

    # identity -------------------------------------------------------------

    def __eq__(self, other):
        if isinstance(other, Poly):
            return self.vars == other.vars and self.terms == other.terms
        if isinstance(other, _SCALARS):
            return self.is_constant() and self.constant_term() == _scalar(other)
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.vars, frozenset(self.terms.items())))
        return self._hash

    def __str__(self):
        return format_poly(self)

    def __repr__(self):
        return f"Poly({list(self.vars)!r}, {format_poly(self)!r})"


def format_monomial(variables, exps) -> str:
    parts = []
    for v, k in zip(variables, exps):
        if k == 1:
            parts.append(v)
        elif k > 1:
            parts.append(f"{v}^{k}")
    return "*".join(parts)


def format_poly(p: Poly) -> str:
    """Canonical text: graded-lex order, coefficients as p/q."""
    if not p.terms:
        return "0"
    pieces = []
    for i, (e, c) in enumerate(p.sorted_terms()):
        neg = c < 0
        a = -c if neg else c
        mono = format_monomial(p.vars, e)
        if mono:
            body = mono if a == 1 else f"{a}*{mono}"
        else:
            body = str(a)
        if i == 0:
            pieces.append(f"-{body}" if neg else body)
        else:
            pieces.append(f" - {body}" if neg else f" + {body}")
    return "".join(pieces)


class PolyVec:
    """Nonempty list of polynomials over one shared variable list."""

    __slots__ = ("components",)

    def __init__(self, components: Sequence[Poly]):
        comps = tuple(components)
        if not comps:
            raise ValueError("PolyVec must be nonempty")
        v = comps[0].vars
        for c in comps:
            if c.vars != v:
                raise VariableMismatch("PolyVec components must share variables")
        self.components = comps

    @property
    def vars(self) -> tuple:
        return self.components[0].vars

    def __len__(self):
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __eq__(self, other):
        return isinstance(other, PolyVec) and self.components == other.components

    def __hash__(self):
        return hash(self.components)

    def evaluate(self, point) -> list:
        return [c.evaluate(point) for c in self.components]

    def map(self, fn: Callable[[Poly], Poly]) -> "PolyVec":
        return PolyVec([fn(c) for c in self.components])

    def __repr__(self):
        return f"PolyVec({[str(c) for c in self.components]!r})"


def norm_squared(components: Sequence[Poly]) -> Poly:
    acc = Poly.zero(components[0].vars)
    for c in components:
        acc = acc + c * c
    return acc


def poly_arith(a: Poly, b: Poly | None, op: str, *, var: str | None = None, t0=0) -> Poly:
    """Dispatch for the elementary polynomial operations.

    ``compose`` substitutes ``b`` for variable ``var`` of ``a``;
    ``time_integral`` integrates ``a`` in ``var`` from ``t0``.
    """
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    if op == "compose":
        if var is None:
            raise ValueError("compose needs the variable to substitute")
        others = [v for v in a.vars if v != var]
        target = tuple(b.vars) + tuple(v for v in others if v not in b.vars)
        img = b.with_vars(target)
        return a.compose({var: img}, target).with_vars(
            tuple(v for v in target if v in b.vars or v in others))
    if op == "partial_derivative":
        return a.diff(var)
    if op == "time_integral":
        return a.integrate(var, q(t0))
    raise ValueError(f"unknown operation {op!r}")
