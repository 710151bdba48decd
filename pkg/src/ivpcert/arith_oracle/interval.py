"""Interval evaluation of polynomials over boxes.

Two engines produce sound enclosures with rational endpoints:

* ``float`` (default): IEEE-754 double intervals, every operation rounded
  outward with ``math.nextafter``.  Endpoints are doubles, i.e. dyadic
  rationals with capped denominators, and the computation is deterministic,
  so a checker re-running it obtains identical enclosures.
* ``exact``: mpq endpoints; a term's endpoints are rounded outward to
  multiples of ``2**-bits`` only when their denominators outgrow the budget.

Each engine offers plain term-wise evaluation ("naive"), the mean-value
form around the box midpoint, and their intersection ("best").

An optional anchor translates the polynomial before evaluation, so that a
search over a small box far from the origin evaluates p(a + y) for y near
zero instead of summing large monomials that cancel.  Subdivision searches
use ``anchor_for(root box)``, which a checker recomputes from the witness.
"""

from __future__ import annotations

import math
from math import inf, nextafter

import numpy as np

from gmpy2 import mpq, mpz

from ..core.box import Box
from ..core.poly import Poly

DEFAULT_BITS = 128
MODES = ("best", "naive", "mean-value", "exact-best", "exact-naive", "exact-mean-value")


# exact engine ------------------------------------------------------------

def _down(x: mpq, bits: int) -> mpq:
    d = x.denominator
    if d.bit_length() <= bits + 1:
        return x
    s = mpz(1) << bits
    return mpq((x.numerator * s) // d, s)


def _up(x: mpq, bits: int) -> mpq:
    d = x.denominator
    if d.bit_length() <= bits + 1:
        return x
    s = mpz(1) << bits
    return mpq(-((-x.numerator * s) // d), s)


def imul(a, b):
    p = (a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
    return min(p), max(p)


def ipow(a, k: int):
    if k == 0:
        return mpq(1), mpq(1)
    lo, hi = a
    if k % 2 == 1 or lo >= 0:
        return lo ** k, hi ** k
    if hi <= 0:
        return hi ** k, lo ** k
    return mpq(0), max(-lo, hi) ** k


def _ivs(box):
    return box.intervals if isinstance(box, Box) else tuple(box)


def exact_naive(p: Poly, box, bits: int = DEFAULT_BITS):
    ivs = _ivs(box)
    if len(ivs) != len(p.vars):
        raise ValueError("box dimension does not match the polynomial")
    powers = [dict() for _ in ivs]
    lo_sum = mpq(0)
    hi_sum = mpq(0)
    for e, c in p.terms.items():
        tlo = thi = c
        first = True
        for i, k in enumerate(e):
            if not k:
                continue
            pw = powers[i].get(k)
            if pw is None:
                pw = ipow(ivs[i], k)
                powers[i][k] = pw
            if first:
                tlo, thi = (c * pw[0], c * pw[1]) if c >= 0 else (c * pw[1], c * pw[0])
                first = False
            else:
                tlo, thi = imul((tlo, thi), pw)
        lo_sum += _down(tlo, bits)
        hi_sum += _up(thi, bits)
    return _down(lo_sum, bits), _up(hi_sum, bits)


def exact_mean_value(p: Poly, box, bits: int = DEFAULT_BITS):
    ivs = _ivs(box)
    mid = [(lo + hi) / 2 for lo, hi in ivs]
    v = p.evaluate(mid)
    lo, hi = _down(v, bits), _up(v, bits)
    for i, var in enumerate(p.vars):
        g = p.diff(var)
        r = (ivs[i][1] - ivs[i][0]) / 2
        if g.is_zero() or r == 0:
            continue
        glo, ghi = exact_naive(g, ivs, bits)
        m = _up(max(-glo, ghi) * r, bits)
        lo -= m
        hi += m
    return lo, hi


# float engine ------------------------------------------------------------

_MAX = 1.7976931348623157e308

def f_down(x) -> float:
    """Largest double <= x."""
    x = mpq(x)
    try:
        f = float(x)
    except OverflowError:
        return -inf if x < 0 else _MAX
    if math.isinf(f):
        return f if f < 0 else _MAX
    if mpq(f) > x:
        f = nextafter(f, -inf)
    return f


def f_up(x) -> float:
    """Smallest double >= x."""
    x = mpq(x)
    try:
        f = float(x)
    except OverflowError:
        return inf if x > 0 else -_MAX
    if math.isinf(f):
        return f if f > 0 else -_MAX
    if mpq(f) < x:
        f = nextafter(f, inf)
    return f


def _fmul(alo, ahi, blo, bhi):
    p1, p2, p3, p4 = alo * blo, alo * bhi, ahi * blo, ahi * bhi
    lo = min(p1, p2, p3, p4)
    hi = max(p1, p2, p3, p4)
    if lo != lo or hi != hi:  # nan from 0 * inf
        return -inf, inf
    return nextafter(lo, -inf), nextafter(hi, inf)


def _pow_mag(a: float, k: int, up: bool) -> float:
    """a**k for a >= 0 rounded in the requested direction."""
    r = 1.0
    d = inf if up else -inf
    for _ in range(k):
        r = nextafter(r * a, d)
        if not up and r < 0:
            r = 0.0
    return r


def _fpow(lo: float, hi: float, k: int):
    if lo >= 0:
        return _pow_mag(lo, k, False), _pow_mag(hi, k, True)
    if hi <= 0:
        if k % 2 == 0:
            return _pow_mag(-hi, k, False), _pow_mag(-lo, k, True)
        return -_pow_mag(-lo, k, True), -_pow_mag(-hi, k, False)
    if k % 2 == 0:
        return 0.0, _pow_mag(max(-lo, hi), k, True)
    return -_pow_mag(-lo, k, True), _pow_mag(hi, k, True)


class _Compiled:
    """Term table of a polynomial as numpy arrays of outward-rounded doubles."""

    __slots__ = ("E", "clo", "chi", "const", "maxdeg")

    def __init__(self, p: Poly):
        rows, lo, hi = [], [], []
        clo = chi = 0.0
        for e, c in p.terms.items():
            if not any(e):
                clo, chi = f_down(c), f_up(c)
                continue
            rows.append(e)
            lo.append(f_down(c))
            hi.append(f_up(c))
        n = len(p.vars)
        self.E = np.array(rows, dtype=np.int64).reshape(len(rows), n)
        self.clo = np.array(lo, dtype=np.float64)
        self.chi = np.array(hi, dtype=np.float64)
        self.const = (clo, chi)
        self.maxdeg = [int(self.E[:, i].max()) if len(rows) else 0 for i in range(n)]


def _compiled(p: Poly) -> _Compiled:
    c = p._cache.get("fcomp")
    if c is None:
        c = _Compiled(p)
        p._cache["fcomp"] = c
    return c


def _float_box(ivs):
    return [(f_down(lo), f_up(hi)) for lo, hi in ivs]


def _power_table(lo: float, hi: float, d: int):
    """Arrays L[k], H[k] enclosing [lo, hi]**k for k = 0..d."""
    L = [1.0] * (d + 1)
    H = [1.0] * (d + 1)
    if d == 0:
        return np.array(L), np.array(H)
    a, b = abs(lo), abs(hi)
    mag_hi = max(a, b)
    mag_lo = 0.0 if lo <= 0 <= hi else min(a, b)
    up = dn = 1.0
    for k in range(1, d + 1):
        up = nextafter(up * mag_hi, inf)
        dn = max(nextafter(dn * mag_lo, -inf), 0.0)
        if lo >= 0:
            L[k], H[k] = dn, up
        elif hi <= 0:
            L[k], H[k] = (dn, up) if k % 2 == 0 else (-up, -dn)
        elif k % 2 == 0:
            L[k], H[k] = 0.0, up
        else:
            # odd power over a box straddling zero
            L[k] = -_pow_mag(a, k, True)
            H[k] = _pow_mag(b, k, True)
    return np.array(L), np.array(H)


def float_naive_f(p: Poly, fbox) -> tuple:
    """Naive enclosure over a box already given as double intervals."""
    comp = _compiled(p)
    clo, chi = comp.const
    if not len(comp.clo):
        return clo, chi
    tlo, thi = comp.clo, comp.chi
    with np.errstate(invalid="ignore", over="ignore"):
        for i, (lo, hi) in enumerate(fbox):
            d = comp.maxdeg[i]
            if d == 0:
                continue
            L, H = _power_table(lo, hi, d)
            col = comp.E[:, i]
            flo, fhi = L[col], H[col]
            p1, p2, p3, p4 = tlo * flo, tlo * fhi, thi * flo, thi * fhi
            mn = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4))
            mx = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4))
            # factors equal to exactly 1 (exponent 0) leave the term unchanged
            exact = col == 0
            tlo = np.where(exact, tlo, np.nextafter(mn, -inf))
            thi = np.where(exact, thi, np.nextafter(mx, inf))
        if np.isnan(tlo).any() or np.isnan(thi).any():
            return -inf, inf
    slo = nextafter(math.fsum(tlo.tolist()), -inf)
    shi = nextafter(math.fsum(thi.tolist()), inf)
    # fsum is correctly rounded; one more step outward covers the constant
    slo = nextafter(slo + clo, -inf)
    shi = nextafter(shi + chi, inf)
    return slo, shi


def float_mean_value_f(p: Poly, fbox, mid_box) -> tuple:
    """p(mid) + sum_i G_i [-r_i, r_i] with double arithmetic rounded outward.

    ``mid_box`` holds degenerate double intervals around the exact midpoint
    (the midpoint itself rounded outward), ``fbox`` the full box.
    """
    lo, hi = float_naive_f(p, mid_box)
    for i, var in enumerate(p.vars):
        g = p.diff(var)
        if g.is_zero():
            continue
        # radius: any r >= max(hi_i - m_i, m_i - lo_i) works
        r = max(nextafter(fbox[i][1] - mid_box[i][0], inf), nextafter(mid_box[i][1] - fbox[i][0], inf))
        if r <= 0:
            continue
        glo, ghi = float_naive_f(g, fbox)
        m = nextafter(max(-glo, ghi) * r, inf)
        lo = nextafter(lo - m, -inf)
        hi = nextafter(hi + m, inf)
    return lo, hi


def _mid_box(ivs):
    out = []
    for lo, hi in ivs:
        m = (lo + hi) / 2
        out.append((f_down(m), f_up(m)))
    return out


def _to_q(lo: float, hi: float):
    return mpq(lo) if lo != -inf else mpq(-(1 << 1100)), mpq(hi) if hi != inf else mpq(1 << 1100)


ANCHOR_BITS = 10  # anchors are multiples of 2^-10


def anchor_for(box) -> tuple:
    """Evaluation origin for a search over box.

    A coordinate moves to a dyadic point near the middle of its range only
    when the range is narrow next to its distance from zero (width at most
    |midpoint|).  Ranges containing zero stay put, since monomials are exact
    at the origin where bounds are often attained; wide ranges stay put
    because far from the anchor the translated terms cancel in rounding.
    """
    scale = 1 << ANCHOR_BITS
    out = []
    for lo, hi in _ivs(box):
        lo, hi = mpq(lo), mpq(hi)
        m = (lo + hi) / 2
        if lo <= 0 <= hi or hi - lo > abs(m):
            out.append(mpq(0))
            continue
        out.append(mpq(int(m.numerator * scale // m.denominator), scale))
    return tuple(out)


def translated(p: Poly, anchor) -> Poly:
    """p(anchor + y) as a polynomial in y, cached on p."""
    key = ("translate", tuple(anchor))
    hit = p._cache.get(key)
    if hit is None:
        hit = p.translate(anchor)
        p._cache[key] = hit
    return hit


def interval_eval(p: Poly, box, mode: str = "best", bits: int = DEFAULT_BITS, anchor=None):
    """Sound enclosure [lo, hi] of {p(x) : x in box} with rational endpoints.

    With an anchor a, the enclosure is that of p(a + y) over box - a.
    """
    if p.is_constant():
        c = p.constant_term()
        return c, c
    ivs = _ivs(box)
    if anchor is not None and any(anchor):
        if len(anchor) != len(ivs):
            raise ValueError("anchor dimension does not match the box")
        p = translated(p, anchor)
        ivs = [(mpq(lo) - a, mpq(hi) - a) for (lo, hi), a in zip(ivs, anchor)]
        if p.is_constant():
            c = p.constant_term()
            return c, c
    if len(ivs) != len(p.vars):
        raise ValueError("box dimension does not match the polynomial")
    if mode.startswith("exact"):
        sub = mode[6:]
        if sub == "naive":
            return exact_naive(p, ivs, bits)
        if sub == "mean-value":
            return exact_mean_value(p, ivs, bits)
        if sub != "best":
            raise ValueError(f"unknown evaluation mode {mode!r}")
        a = exact_naive(p, ivs, bits)
        b = exact_mean_value(p, ivs, bits)
        return max(a[0], b[0]), min(a[1], b[1])
    fbox = _float_box(ivs)
    if mode == "naive":
        return _to_q(*float_naive_f(p, fbox))
    mb = _mid_box(ivs)
    if mode == "mean-value":
        return _to_q(*float_mean_value_f(p, fbox, mb))
    if mode != "best":
        raise ValueError(f"unknown evaluation mode {mode!r}")
    a = float_naive_f(p, fbox)
    b = float_mean_value_f(p, fbox, mb)
    return _to_q(max(a[0], b[0]), min(a[1], b[1]))


def upper_enclosure(p: Poly, box, mode: str = "best", bits: int = DEFAULT_BITS, target=None,
                    slack=None, anchor=None):
    """Upper end of the enclosure, retried in exact arithmetic when it misses target.

    Outward-rounded doubles cannot certify a bound the polynomial attains,
    so in "best" mode a float enclosure that exceeds target (by at most
    slack, when given) is recomputed over the rationals.
    """
    hi = interval_eval(p, box, mode, bits, anchor)[1]
    if mode == "best" and target is not None and hi > target and (slack is None or hi - target <= slack):
        hi = min(hi, interval_eval(p, box, "exact-best", bits, anchor)[1])
    return hi


def float_value(p: Poly, point) -> float:
    """Approximate p(point) in double precision (no rounding guarantees)."""
    comp = _compiled(p)
    c = 0.5 * (comp.const[0] + comp.const[1])
    if not len(comp.clo):
        return c
    x = np.array([float(v) for v in point], dtype=np.float64)
    with np.errstate(all="ignore"):
        mon = np.prod(x[None, :] ** comp.E, axis=1)
        return float(np.dot(0.5 * (comp.clo + comp.chi), mon) + c)
