"""Exact sign decisions for univariate polynomials via Sturm sequences.

Polynomials are dense coefficient lists ``[c0, c1, ...]`` of mpq.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

from gmpy2 import mpq

from ..core.poly import Poly
from ..core.rational import q


def trim(a: Sequence) -> list:
    a = [mpq(x) for x in a]
    while a and a[-1] == 0:
        a.pop()
    return a


def peval(a: Sequence, x) -> mpq:
    acc = mpq(0)
    for c in reversed(a):
        acc = acc * x + c
    return acc


def pderiv(a: Sequence) -> list:
    return trim([i * a[i] for i in range(1, len(a))])


def pdivmod(a: Sequence, b: Sequence) -> tuple[list, list]:
    a, b = trim(a), trim(b)
    if not b:
        raise ZeroDivisionError("polynomial division by zero")
    out = [mpq(0)] * max(len(a) - len(b) + 1, 0)
    r = list(a)
    lead = b[-1]
    while len(r) >= len(b) and r:
        k = len(r) - len(b)
        c = r[-1] / lead
        out[k] = c
        for i, bc in enumerate(b):
            r[i + k] -= c * bc
        r = trim(r)
    return trim(out), r


def pmonic(a: Sequence) -> list:
    a = trim(a)
    return [c / a[-1] for c in a] if a else a


def pgcd(a: Sequence, b: Sequence) -> list:
    a, b = trim(a), trim(b)
    while b:
        a, b = b, pdivmod(a, b)[1]
    return pmonic(a)


def pmul(a: Sequence, b: Sequence) -> list:
    if not a or not b:
        return []
    out = [mpq(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return trim(out)


def _primitive(a: Sequence) -> list:
    """Scale to a positive multiple with coprime integer coefficients.

    Sign variations are unaffected by positive scaling, and this keeps the
    chain's coefficients small.
    """
    a = trim(a)
    if not a:
        return a
    import math
    from gmpy2 import mpz
    den = mpz(1)
    for c in a:
        den = den * c.denominator // math.gcd(int(den), int(c.denominator))
    ints = [c * den for c in a]
    g = mpz(0)
    for c in ints:
        g = math.gcd(int(g), int(c.numerator))
    return [c / g for c in ints] if g else ints


def sturm_chain(p: Sequence) -> list[list]:
    """p, p', then negated remainders (each made primitive), down to a constant."""
    p = _primitive(p)
    if not p:
        return []
    chain = [p]
    d = _primitive(pderiv(p))
    if not d:
        return chain
    chain.append(d)
    while True:
        r = pdivmod(chain[-2], chain[-1])[1]
        if not r:
            break
        chain.append(_primitive([-c for c in r]))
    return chain


def sign(x) -> int:
    return (x > 0) - (x < 0)


def sign_sequence(chain, x) -> list[int]:
    return [sign(peval(c, x)) for c in chain]


def variations(signs: Sequence[int]) -> int:
    nz = [s for s in signs if s != 0]
    return sum(1 for a, b in zip(nz, nz[1:]) if a != b)


def count_roots(p: Sequence, a, b, chain=None) -> int:
    """Distinct real roots of p in (a, b]; requires p(a) != 0 for exactness at a."""
    chain = chain if chain is not None else sturm_chain(p)
    return variations(sign_sequence(chain, a)) - variations(sign_sequence(chain, b))


def squarefree_factors(p: Sequence) -> list[list]:
    """Yun's algorithm: monic [q1, q2, ...] with p = lc * prod q_i^i."""
    p = pmonic(p)
    if len(p) <= 1:
        return []
    out = []
    d = pderiv(p)
    a = pgcd(p, d)
    b = pdivmod(p, a)[0]
    c = pdivmod(d, a)[0]
    dd = trim([x - y for x, y in _pad(c, pderiv(b))])
    while len(b) > 1:
        a = pgcd(b, dd)
        out.append(a)
        b = pdivmod(b, a)[0]
        c = pdivmod(dd, a)[0]
        dd = trim([x - y for x, y in _pad(c, pderiv(b))])
    while out and len(out[-1]) <= 1:
        out.pop()
    return out


def _pad(a, b):
    n = max(len(a), len(b))
    return list(zip(list(a) + [mpq(0)] * (n - len(a)), list(b) + [mpq(0)] * (n - len(b))))


def odd_part(p: Sequence) -> list:
    """Product of the squarefree factors of odd multiplicity (sign-changing roots)."""
    acc = [mpq(1)]
    for i, f in enumerate(squarefree_factors(p), start=1):
        if i % 2 == 1:
            acc = pmul(acc, f)
    return acc


def strip_root(p: Sequence, r) -> tuple[list, int]:
    """Divide out (t - r) as often as it divides p."""
    p = trim(p)
    m = 0
    while p and peval(p, r) == 0:
        p = pdivmod(p, [-mpq(r), mpq(1)])[0]
        m += 1
    return p, m


@dataclass(frozen=True)
class SturmWitness:
    """p >= 0 on [a, b], recorded as

    p = (t-a)^ma (t-b)^mb r with r(a), r(b) != 0 and the sign-changing part
    of r free of roots on (a, b), so r keeps its sign at a.
    """

    coeffs: tuple
    a: mpq
    b: mpq
    mult_a: int
    mult_b: int
    chain: tuple
    signs_a: tuple
    signs_b: tuple
    value_a: mpq
    value_b: mpq


@dataclass(frozen=True)
class SturmRefutation:
    point: mpq
    value: mpq


def _reduced(coeffs, a, b):
    r, ma = strip_root(coeffs, a)
    if a != b:
        r, mb = strip_root(r, b)
    else:
        mb = 0
    return r, ma, mb


def sturm_nonneg(p: Union[Poly, Sequence], a, b) -> Union[SturmWitness, SturmRefutation]:
    """Exact decision of p >= 0 on [a, b]."""
    a, b = q(a), q(b)
    if a > b:
        raise ValueError("empty interval")
    coeffs = trim(p.univariate_coeffs() if isinstance(p, Poly) else p)
    for x in (a, b):
        v = peval(coeffs, x)
        if v < 0:
            return SturmRefutation(x, v)
    if not coeffs or a == b:
        return SturmWitness(tuple(coeffs), a, b, 0, 0, (), (), (), mpq(0), mpq(0))
    r, ma, mb = _reduced(coeffs, a, b)
    o = odd_part(r)
    chain = sturm_chain(o)
    sa, sb = sign_sequence(chain, a), sign_sequence(chain, b)
    n_roots = variations(sa) - variations(sb)
    ra, rb = peval(r, a), peval(r, b)
    # on (a, b): sign p = sign r * (-1)^mb
    s = sign(ra) * (-1) ** mb
    if n_roots == 0 and s > 0:
        return SturmWitness(tuple(coeffs), a, b, ma, mb, tuple(tuple(c) for c in chain),
                            tuple(sa), tuple(sb), ra, rb)
    return _refute(coeffs, o, chain, a, b)


def _refute(coeffs, o, chain, a, b) -> SturmRefutation:
    # isolate sign-changing roots; p < 0 somewhere between them
    pts = {a + (b - a) * mpq(i, 64) for i in range(1, 64)}
    stack = [(a, b)]
    while stack and len(pts) < 4096:
        lo, hi = stack.pop()
        n = count_roots(o, lo, hi, chain)
        if n == 0:
            continue
        mid = (lo + hi) / 2
        pts.add(mid)
        pts.add((lo + mid) / 2)
        pts.add((mid + hi) / 2)
        if hi - lo > (b - a) / (1 << 40):
            stack.append((lo, mid))
            stack.append((mid, hi))
    best = None
    for x in sorted(pts):
        v = peval(coeffs, x)
        if best is None or v < best[1]:
            best = (x, v)
    if best[1] >= 0:
        raise AssertionError("Sturm count found a sign change but no negative sample")
    return SturmRefutation(*best)


def check_sturm(w: SturmWitness, coeffs: Sequence) -> Optional[str]:
    """Recompute everything a SturmWitness claims; None when it holds."""
    coeffs = trim(coeffs)
    if tuple(coeffs) != tuple(w.coeffs):
        return "polynomial differs from the witness"
    a, b = w.a, w.b
    if a > b:
        return "empty interval"
    for x in (a, b):
        if peval(coeffs, x) < 0:
            return f"negative at endpoint {x}"
    if not coeffs or a == b:
        return None
    r, ma, mb = _reduced(coeffs, a, b)
    if (ma, mb) != (w.mult_a, w.mult_b):
        return "endpoint multiplicities differ"
    chain = sturm_chain(odd_part(r))
    if tuple(tuple(c) for c in chain) != tuple(w.chain):
        return "stored chain is not the Sturm sequence"
    sa, sb = sign_sequence(chain, a), sign_sequence(chain, b)
    if tuple(sa) != tuple(w.signs_a) or tuple(sb) != tuple(w.signs_b):
        return "sign sequences differ"
    if variations(sa) - variations(sb) != 0:
        return "sign-changing root inside the interval"
    ra = peval(r, a)
    if ra != w.value_a or peval(r, b) != w.value_b:
        return "endpoint values differ"
    if sign(ra) * (-1) ** mb <= 0:
        return "wrong sign on the open interval"
    return None
