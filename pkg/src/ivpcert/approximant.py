"""Polynomial flow approximants Phi(x0, t) and their certified defects.

The defect of an approximant is the exact polynomial dPhi/dt - f(Phi); its
sup-norm bound delta, together with the initial mismatch e0, drives the
Gronwall-type error estimate assembled in ``invariant_engine``.
"""

from __future__ import annotations

import csv
import io
from math import comb
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from gmpy2 import mpq

from .arith_oracle import certified_max
from .arith_oracle.bnb import DEFAULT_BUDGET, SubdivisionWitness
from .core.poly import Poly, PolyVec
from .core.problem import CompactIVP
from .core.rational import nearest, q, round_up, sqrt_up


class CoefficientOverflow(ArithmeticError):
    """Coefficients outgrew the configured bit budget; try round_coeffs."""


class RankDeficient(ValueError):
    """The sample grid cannot determine the requested fit."""


@dataclass(frozen=True)
class ApproximantPoly:
    phi: PolyVec  # over (x0_1, ..., x0_n, t)
    ivp_dim: int
    anchored: bool
    label: str = ""

    @property
    def vars(self) -> tuple:
        return self.phi.vars

    def at_start(self, t0) -> PolyVec:
        return self.phi.map(lambda p: p.substitute_value("t", t0))


def is_anchored(phi: PolyVec, ivp: CompactIVP) -> bool:
    """Phi(x0, t0) == x0 identically."""
    for i, p in enumerate(phi):
        if p.substitute_value("t", ivp.t0) != Poly.var(ivp.x0_vars[i], ivp.phi_vars):
            return False
    return True


def make_approximant(phi: PolyVec, ivp: CompactIVP, label: str = "") -> ApproximantPoly:
    if phi.vars != ivp.phi_vars:
        phi = phi.map(lambda p: p.with_vars(ivp.phi_vars))
    if len(phi) != ivp.dim:
        raise ValueError("approximant dimension does not match the IVP")
    return ApproximantPoly(phi, ivp.dim, is_anchored(phi, ivp), label)


def _x0_vec(ivp: CompactIVP) -> list:
    return [Poly.var(v, ivp.phi_vars) for v in ivp.x0_vars]



def _coeff_bits(p: Poly) -> int:
    return max((max(c.numerator.bit_length(), c.denominator.bit_length()) for c in p.terms.values()),
               default=0)


def picard_iterate(ivp: CompactIVP, k: int, t_degree: Optional[int] = None,
                   max_bits: Optional[int] = None) -> ApproximantPoly:
    """k-th Picard iterate Phi_{j+1} = x0 + int_{t0}^t f(Phi_j) ds.

    With ``t_degree`` the iterates are truncated to that degree in t after
    each step (anchoring is unaffected: only t-dependent terms are dropped).
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    pv = ivp.phi_vars
    ti = len(pv) - 1
    x0 = _x0_vec(ivp)
    keep = None
    if t_degree is not None:
        cap = t_degree
        keep = lambda e: e[ti] < cap  # noqa: E731  (integration adds one)
    phi = list(x0)
    for _ in range(k):
        mapping = dict(zip(ivp.vars, phi))
        new = []
        for i, fi in enumerate(ivp.f):
            g = fi.compose(mapping, pv, keep)
            new.append(x0[i] + g.integrate("t", ivp.t0))
        phi = new
        if max_bits is not None and any(_coeff_bits(p) > max_bits for p in phi):
            raise CoefficientOverflow(f"Picard coefficients exceed {max_bits} bits; use round_coeffs")
    return ApproximantPoly(PolyVec(phi), ivp.dim, True, f"picard k={k}")


def taylor_approximant(ivp: CompactIVP, k: int, *, x0_degree: Optional[int] = None,
                       denom_bits: Optional[int] = None, center: Optional[Sequence] = None
                       ) -> ApproximantPoly:
    """Degree-k time-Taylor polynomial of the flow, coefficients polynomial in x0.

    Equals ``picard_iterate(ivp, k, t_degree=k)`` when no x0 truncation or
    rounding is requested.  Coefficient polynomials are built in shifted
    variables y = x0 - center, optionally truncated to total degree
    ``x0_degree`` in y and rounded to ``denom_bits``; the identity part is
    never touched, so the result stays anchored.
    """
    n = ivp.dim
    c = [q(v) for v in (center if center is not None else ivp.init.box.midpoint())]
    if x0_degree is None and center is None:
        # re-expanding around a nonzero center inflates coefficients through
        # cancellation, which only pays off when truncating in x0
        c = [mpq(0)] * n
    ys = tuple(f"_y{i}" for i in range(n))
    yvars = ys
    # f(y + c) as a polynomial in the state shifted to the center
    shift = {v: Poly.var(ys[i], yvars) + c[i] for i, v in enumerate(ivp.vars)}
    fshift = [fi.compose(shift, yvars) for fi in ivp.f]

    def trunc(p: Poly) -> Poly:
        if x0_degree is not None:
            p = p.truncate(lambda e: sum(e) <= x0_degree)
        if denom_bits is not None:
            p = p.round_coeffs(denom_bits)
        return p

    # series X(s) = sum_j a_j s^j with a_0 = y (deviation from center)
    a = [[Poly.var(ys[i], yvars) for i in range(n)]]
    # powers of each component series, memoised by exponent and order
    for j in range(k):
        # coefficient of s^j in f(c + X(s)) - f(c) evaluated at the shifted state
        coeff = [_series_coeff(fs, a, j, yvars) for fs in fshift]
        a.append([trunc(cf / (j + 1)) for cf in coeff])
    # assemble Phi(x0, t) = c + sum_j a_j(x0 - c) (t - t0)^j
    pv = ivp.phi_vars
    back = {ys[i]: Poly.var(ivp.x0_vars[i], pv) - c[i] for i in range(n)}
    s = Poly.var("t", pv) - ivp.t0
    comps = []
    for i in range(n):
        acc = Poly.var(ivp.x0_vars[i], pv)
        spow = Poly.const(1, pv)
        for j in range(1, k + 1):
            spow = spow * s
            if a[j][i].is_zero():
                continue
            acc = acc + a[j][i].compose(back, pv) * spow
        comps.append(acc)
    return ApproximantPoly(PolyVec(comps), n, True, f"taylor k={k}")


def _series_coeff(fs: Poly, a: list, j: int, yvars: tuple) -> Poly:
    """Coefficient of s^j in fs(X(s)) where X = sum_m a_m s^m (a_0 = y)."""
    # evaluate monomials of fs by truncated Cauchy products
    total = Poly.zero(yvars)
    cache: dict = {}

    def comp_power(i: int, e: int) -> list:
        """Series coefficients 0..j of X_i^e."""
        key = (i, e)
        if key in cache:
            return cache[key]
        if e == 0:
            out = [Poly.const(1, yvars)] + [Poly.zero(yvars)] * j
        elif e == 1:
            out = [a[m][i] for m in range(min(j, len(a) - 1) + 1)]
            out += [Poly.zero(yvars)] * (j + 1 - len(out))
        else:
            half = comp_power(i, e // 2)
            other = comp_power(i, e - e // 2)
            out = _cauchy(half, other, j, yvars)
        cache[key] = out
        return out

    for e, coef in fs.terms.items():
        ser = None
        for i, k in enumerate(e):
            if not k:
                continue
            pw = comp_power(i, k)
            ser = pw if ser is None else _cauchy(ser, pw, j, yvars)
        if ser is None:
            if j == 0:
                total = total + coef
            continue
        total = total + ser[j].scale(coef)
    return total


def _cauchy(u: list, v: list, j: int, yvars: tuple) -> list:
    out = []
    for m in range(j + 1):
        acc = Poly.zero(yvars)
        for r in range(m + 1):
            if u[r].is_zero() or v[m - r].is_zero():
                continue
            acc = acc + u[r] * v[m - r]
        out.append(acc)
    return out


def round_coeffs(phi: ApproximantPoly, denom_bits: int, t0=0) -> ApproximantPoly:
    """Round coefficients to denominators 2^denom_bits (nearest, ties to even).

    Terms constant in t at the anchoring identity (x0_i in component i) are
    protected; for t0 = 0 every other t-free term is rounded as well only if
    the approximant was not anchored, so anchoring survives.
    """
    if denom_bits < 1:
        raise ValueError("denom_bits must be at least 1")
    pv = phi.phi.vars
    ti = len(pv) - 1
    t0 = q(t0)
    out = []
    for i, p in enumerate(phi.phi):
        if t0 == 0:
            def protect(e, i=i):
                return phi.anchored and e[ti] == 0
            out.append(p.round_coeffs(denom_bits, protect))
        else:
            # round in powers of (t - t0) so the value at t0 is untouched
            s = Poly.var("t", pv) + t0
            shifted = p.compose({"t": s}, pv)
            shifted = shifted.round_coeffs(denom_bits, lambda e: phi.anchored and e[ti] == 0)
            out.append(shifted.compose({"t": Poly.var("t", pv) - t0}, pv))
    return ApproximantPoly(PolyVec(out), phi.ivp_dim, phi.anchored, phi.label + f" rounded/{denom_bits}")


# families ---------------------------------------------------------------

class ApproximantFamily:
    """Indexed family k -> Phi_k."""

    label = "family"
    max_k = 64

    def __call__(self, k: int) -> ApproximantPoly:
        raise NotImplementedError

    def schedule(self, max_k: Optional[int] = None) -> list:
        """Search order: 1, 2, 4, ... up to max_k (bisection happens in the caller)."""
        top = self.max_k if max_k is None else min(max_k, self.max_k)
        ks, k = [], 1
        while k < top:
            ks.append(k)
            k *= 2
        ks.append(top)
        return ks

    def size_estimate(self, k: int) -> int:
        """Upper bound on the monomial count of one defect component of Phi_k."""
        return 0


def _field_degree(ivp: CompactIVP) -> int:
    return max(p.degree() for p in ivp.f)


def auto_x0_degree(ivp: CompactIVP) -> Callable[[int], int]:
    """x0-degree cap growing with k; a point init region needs no x0 terms at all."""
    if all(lo == hi for lo, hi in ivp.init.box):
        return lambda k: 0
    return lambda k: k // 2 + 2


class PicardFamily(ApproximantFamily):
    """Truncated Picard iterates (equivalently, time-Taylor polynomials).

    ``x0_degree`` is None (exact), an int, or a function of k.  Any cap
    keeps Phi_k anchored; the truncation error shows up in the defect.
    """

    label = "picard"

    def __init__(self, ivp: CompactIVP, *, x0_degree=None,
                 denom_bits: Optional[int] = None, max_k: int = 32):
        self.ivp = ivp
        self.x0_degree = x0_degree
        self.denom_bits = denom_bits
        self.max_k = max_k
        self._cache: dict = {}

    def x0_cap(self, k: int) -> Optional[int]:
        d = self.x0_degree(k) if callable(self.x0_degree) else self.x0_degree
        exact = 1 + k * max(_field_degree(self.ivp) - 1, 0)
        return None if d is None or d >= exact else d

    def __call__(self, k: int) -> ApproximantPoly:
        if k not in self._cache:
            self._cache[k] = taylor_approximant(self.ivp, k, x0_degree=self.x0_cap(k),
                                                denom_bits=self.denom_bits)
        return self._cache[k]

    def size_estimate(self, k: int) -> int:
        deg = max(_field_degree(self.ivp), 1)
        cap = self.x0_cap(k)
        dx = 1 + k * (deg - 1) if cap is None else cap
        return (deg * k + 1) * comb(self.ivp.dim + deg * dx, self.ivp.dim)

    def describe(self) -> dict:
        d = {"family": "picard"}
        if self.x0_degree is not None:
            d["x0_degree"] = "auto" if callable(self.x0_degree) else self.x0_degree
        if self.denom_bits is not None:
            d["denom_bits"] = self.denom_bits
        return d


class FixedFamily(ApproximantFamily):
    """A single user-supplied approximant."""

    label = "fixed"
    max_k = 0

    def __init__(self, phi: ApproximantPoly):
        self.phi = phi

    def __call__(self, k: int) -> ApproximantPoly:
        return self.phi

    def schedule(self, max_k=None) -> list:
        return [0]

    def describe(self) -> dict:
        return {"family": "fixed"}


# defects ----------------------------------------------------------------

def defect_poly(phi: ApproximantPoly, ivp: CompactIVP) -> PolyVec:
    """dPhi/dt - f(Phi), exactly."""
    pv = phi.phi.vars
    mapping = dict(zip(ivp.vars, phi.phi))
    return PolyVec([p.diff("t") - fi.compose(mapping, pv) for p, fi in zip(phi.phi, ivp.f)])


def initial_mismatch(phi: ApproximantPoly, ivp: CompactIVP) -> PolyVec:
    """Phi(x0, t0) - x0 over the x0 variables (plus an unused t)."""
    pv = phi.phi.vars
    return PolyVec([p.substitute_value("t", ivp.t0) - Poly.var(ivp.x0_vars[i], pv)
                    for i, p in enumerate(phi.phi)])


@dataclass(frozen=True)
class ComponentBound:
    """|p| <= bound on the domain, via witnesses for p <= bound and -p <= bound."""

    poly: Poly
    bound: mpq
    upper: SubdivisionWitness
    lower: SubdivisionWitness


@dataclass(frozen=True)
class DefectReport:
    delta: mpq
    e0: mpq
    defect: tuple  # ComponentBound per component
    mismatch: tuple  # ComponentBound per component (empty when anchored)
    within_tol: bool = True

    @property
    def witnesses(self) -> list:
        out = []
        for cb in self.defect + self.mismatch:
            out.extend([cb.upper, cb.lower])
        return out


def bound_abs(p: Poly, box, domain=(), *, rel_tol=mpq(1, 16), abs_tol=None,
              budget: int = DEFAULT_BUDGET, bits: int = 32) -> tuple[ComponentBound, bool]:
    """Certified bound on |p| over box intersected with the domain constraints.

    The side with the larger sampled magnitude is bounded first; its value
    then sets the absolute tolerance for the other side, so a one-signed p
    does not force refinement towards a zero maximum.
    """
    from .arith_oracle.interval import float_value
    abs_tol = q(abs_tol) if abs_tol is not None else mpq(1, 1 << 40)
    grid = [box.midpoint()] + [list(c) for c in _corners(box)]
    vals = [float_value(p, g) for g in grid]
    first_pos = max(vals) >= -min(vals)
    a, b = (p, -p) if first_pos else (-p, p)
    ra = certified_max(a, box, abs_tol, rel_tol=rel_tol, domain=domain, budget=budget)
    tol_b = max(abs_tol, abs(ra.upper) * q(rel_tol))
    rb = certified_max(b, box, tol_b, rel_tol=rel_tol, domain=domain, budget=budget)
    up, dn = (ra, rb) if first_pos else (rb, ra)
    m = max(up.upper, dn.upper, mpq(0))
    m = _round_up_rel(m, bits)
    wu = SubdivisionWitness(p, box, m, False, up.witness.tree, tuple(domain), up.witness.mode,
                            up.witness.bits)
    wd = SubdivisionWitness(-p, box, m, False, dn.witness.tree, tuple(domain), dn.witness.mode,
                            dn.witness.bits)
    return ComponentBound(p, m, wu, wd), up.within_tol and dn.within_tol


def _corners(box):
    import itertools
    if box.dim > 6:
        return []
    return itertools.product(*box.intervals)


def _round_up_rel(m: mpq, bits: int) -> mpq:
    """Round a positive rational up to ~bits significant binary digits."""
    if m <= 0:
        return mpq(0)
    e = m.numerator.bit_length() - m.denominator.bit_length()
    shift = bits - e
    if shift <= 0:
        return round_up(m, 0) if m.denominator != 1 else m
    return round_up(m, shift)


def defect_bounds(phi: ApproximantPoly, ivp: CompactIVP, budget: int = DEFAULT_BUDGET, *,
                  rel_tol=mpq(1, 16), abs_tol=None) -> DefectReport:
    """Certified delta >= sup ||dPhi/dt - f(Phi)|| and e0 >= sup ||Phi(x0,t0) - x0||.

    Each component is bounded separately (two one-sided witnesses); delta is
    a rational upper bound on the Euclidean norm of the component bounds.
    """
    box = ivp.domain_box()
    dom = ivp.domain_constraints()
    comps, ok = [], True
    for d in defect_poly(phi, ivp):
        cb, w = bound_abs(d, box, dom, rel_tol=rel_tol, abs_tol=abs_tol, budget=budget)
        comps.append(cb)
        ok &= w
    delta = sqrt_up(sum((cb.bound ** 2 for cb in comps), mpq(0)), 64)
    delta = _round_up_rel(delta, 32)
    mism = []
    e0 = mpq(0)
    if not phi.anchored:
        for e in initial_mismatch(phi, ivp):
            cb, w = bound_abs(e, box, dom, rel_tol=rel_tol, abs_tol=abs_tol, budget=budget)
            mism.append(cb)
            ok &= w
        e0 = _round_up_rel(sqrt_up(sum((cb.bound ** 2 for cb in mism), mpq(0)), 64), 32)
    return DefectReport(delta, e0, tuple(comps), tuple(mism), ok)


# sample tables ------------------------------------------------------------

def read_samples(text: str, dim: int) -> list[tuple]:
    """Rows (x0 tuple, t, x tuple) from a `x0_1..x0_n,t,x_1..x_n` table."""
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError("empty sample table")
    header = [h.strip() for h in rows[0]]
    expected = [f"x0_{i + 1}" for i in range(dim)] + ["t"] + [f"x_{i + 1}" for i in range(dim)]
    if header != expected:
        raise ValueError(f"sample header must be {','.join(expected)}")
    out = []
    for ln, r in enumerate(rows[1:], start=2):
        if len(r) != 2 * dim + 1:
            raise ValueError(f"row {ln}: expected {2 * dim + 1} fields")
        vals = [q(c.strip()) for c in r]
        out.append((tuple(vals[:dim]), vals[dim], tuple(vals[dim + 1:])))
    return out


def _solve_exact(A: list, b: list) -> list:
    """Gauss-Jordan over Q; raises RankDeficient on a singular system."""
    n = len(A)
    M = [list(row) + [rhs] for row, rhs in zip(A, b)]
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        if piv is None:
            raise RankDeficient("design matrix is rank deficient")
        M[col], M[piv] = M[piv], M[col]
        pv = M[col][col]
        M[col] = [x / pv for x in M[col]]
        for r in range(n):
            if r != col and M[r][col] != 0:
                fac = M[r][col]
                M[r] = [x - fac * y for x, y in zip(M[r], M[col])]
    return [M[r][n] for r in range(n)]


def fit_from_samples(samples: Sequence[tuple], ivp: CompactIVP, degree: int) -> ApproximantPoly:
    """Least-squares fit of the derivative data f(x) by q(x0, t), then
    Phi = x0 + int_{t0}^t q.  Exact normal equations over Q."""
    if degree < 1:
        raise ValueError("degree must be at least 1")
    if not samples:
        raise RankDeficient("no samples")
    n = ivp.dim
    pts = [tuple(x0) + (t,) for x0, t, _ in samples]
    # the samples must form a full Cartesian grid
    axes = [sorted(set(p[i] for p in pts)) for i in range(n + 1)]
    size = 1
    for ax in axes:
        size *= len(ax)
    if size != len(set(pts)) or len(set(pts)) != len(pts):
        raise ValueError("samples do not form a grid over init box x [t0, T]")
    caps = [min(degree, len(ax) - 1) for ax in axes[:n]] + [degree]
    monos = []

    def gen(prefix, i):
        if i == n + 1:
            if sum(prefix) <= degree:
                monos.append(tuple(prefix))
            return
        for e in range(caps[i] + 1):
            gen(prefix + [e], i + 1)

    gen([], 0)
    rows = []
    for p in pts:
        row = []
        for m in monos:
            v = mpq(1)
            for x, e in zip(p, m):
                if e:
                    v *= x ** e
            row.append(v)
        rows.append(row)
    if len(rows) < len(monos):
        raise RankDeficient(f"{len(rows)} samples cannot determine {len(monos)} coefficients")
    AtA = [[sum((r[i] * r[j] for r in rows), mpq(0)) for j in range(len(monos))]
           for i in range(len(monos))]
    pv = ivp.phi_vars
    comps = []
    for i in range(n):
        ys = [ivp.f[i].evaluate(x) for _, _, x in samples]
        Atb = [sum((r[j] * y for r, y in zip(rows, ys)), mpq(0)) for j in range(len(monos))]
        coef = _solve_exact(AtA, Atb)
        qpoly = Poly(pv, {m: c for m, c in zip(monos, coef)})
        comps.append(Poly.var(ivp.x0_vars[i], pv) + qpoly.integrate("t", ivp.t0))
    return ApproximantPoly(PolyVec(comps), n, True, f"fit degree={degree}")
