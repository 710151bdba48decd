"""JSON forms of the values stored in certificates, and their inverses."""

from __future__ import annotations

from gmpy2 import mpq

from ..arith_oracle.bnb import SubdivisionWitness, node_to_json
from ..arith_oracle.region import ImageWitness, RegionWitness
from ..arith_oracle.sturm import SturmWitness
from ..core.box import Box
from ..core.poly import Poly, PolyVec
from ..core.problem import And, Atom, Constraint, Or
from ..core.rational import q, to_str


def enc_q(x) -> str:
    return to_str(q(x))


def dec_q(s) -> mpq:
    if isinstance(s, bool) or not isinstance(s, (str, int)):
        raise ValueError(f"expected a rational, got {s!r}")
    return q(s)


def enc_poly(p: Poly) -> dict:
    return {"vars": list(p.vars), "terms": [[list(e), to_str(c)] for e, c in p.sorted_terms()]}


def dec_poly(d) -> Poly:
    if not isinstance(d, dict) or set(d) != {"vars", "terms"}:
        raise ValueError("malformed polynomial")
    vs = tuple(d["vars"])
    terms = {}
    for e, c in d["terms"]:
        e = tuple(e)
        if len(e) != len(vs) or any(not isinstance(k, int) or isinstance(k, bool) or k < 0 for k in e):
            raise ValueError("malformed monomial exponent")
        if e in terms:
            raise ValueError("duplicate monomial")
        terms[e] = dec_q(c)
    return Poly(vs, terms)


def enc_polyvec(v) -> list:
    return [enc_poly(p) for p in v]


def dec_polyvec(d) -> PolyVec:
    return PolyVec([dec_poly(x) for x in d])


def enc_box(b: Box) -> list:
    return [[to_str(lo), to_str(hi)] for lo, hi in b]


def dec_box(d) -> Box:
    return Box([(dec_q(lo), dec_q(hi)) for lo, hi in d])


def enc_constraint(c: Constraint) -> list:
    return [enc_poly(c.poly), c.rel]


def dec_constraint(d) -> Constraint:
    return Constraint(dec_poly(d[0]), d[1])


def enc_formula(f) -> list:
    if isinstance(f, Atom):
        return ["atom", enc_poly(f.poly)]
    tag = "and" if isinstance(f, And) else "or"
    return [tag, [enc_formula(x) for x in f.items]]


def dec_formula(d):
    tag = d[0]
    if tag == "atom":
        return Atom(dec_poly(d[1]))
    if tag in ("and", "or"):
        items = tuple(dec_formula(x) for x in d[1])
        return And(items) if tag == "and" else Or(items)
    raise ValueError(f"unknown formula tag {tag!r}")


# witnesses ----------------------------------------------------------------

def enc_subdivision(w: SubdivisionWitness) -> dict:
    return {
        "poly": enc_poly(w.poly), "box": enc_box(w.root_box), "bound": enc_q(w.bound),
        "strict": bool(w.strict), "domain": [enc_constraint(c) for c in w.domain],
        "mode": w.mode, "bits": w.bits, "tree": node_to_json(w.tree),
    }


def enc_sturm(w: SturmWitness) -> dict:
    return {
        "coeffs": [enc_q(c) for c in w.coeffs], "a": enc_q(w.a), "b": enc_q(w.b),
        "mult_a": w.mult_a, "mult_b": w.mult_b,
        "chain": [[enc_q(c) for c in p] for p in w.chain],
        "signs_a": list(w.signs_a), "signs_b": list(w.signs_b),
        "value_a": enc_q(w.value_a), "value_b": enc_q(w.value_b),
    }


def enc_region(w: RegionWitness) -> dict:
    return {"box": enc_box(w.box), "formula": enc_formula(w.formula), "mode": w.mode,
            "bits": w.bits, "tree": node_to_json(w.tree)}


def enc_image(w: ImageWitness) -> dict:
    return {"map": enc_polyvec(w.phi), "box": enc_box(w.domain_box),
            "domain": [enc_constraint(c) for c in w.domain], "pad": enc_q(w.pad),
            "formula": enc_formula(w.formula), "mode": w.mode, "bits": w.bits,
            "tree": node_to_json(w.tree)}


# leaf constructors ----------------------------------------------------------

def upper_leaf(w: SubdivisionWitness, label: str = ""):
    """poly <= bound (or < bound) over the witness box and domain."""
    from .model import ArithObligation
    return ArithObligation("poly_upper", enc_subdivision(w), label)


def lower_leaf(w: SubdivisionWitness, label: str = ""):
    """poly >= -bound, stored as the subdivision proof of -poly <= bound.

    The payload keeps the witness polynomial (the negation); the checker
    reads the claim as  -(payload poly) >= -(payload bound).
    """
    from .model import ArithObligation
    return ArithObligation("poly_lower", enc_subdivision(w), label)


def sturm_leaf(w: SturmWitness, label: str = ""):
    from .model import ArithObligation
    return ArithObligation("sturm_nonneg", enc_sturm(w), label)


def region_leaf(w, label: str = ""):
    from .model import ArithObligation
    if isinstance(w, ImageWitness):
        return ArithObligation("region_containment", {"image": enc_image(w)}, label)
    return ArithObligation("region_containment", {"region": enc_region(w)}, label)


def identity_leaf(claim: str, data: dict, label: str = ""):
    from .model import ArithObligation
    return ArithObligation("exact_identity", {"claim": claim, **data}, label)
