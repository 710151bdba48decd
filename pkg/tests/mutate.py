"""Single-field certificate mutations that provably falsify one leaf.

Each mutation edits the JSON form of a certificate and returns a short
description, or None when the chosen leaf admits no falsifying edit.  A
mutation only counts when an exact evaluation at some grid point shows the
edited claim to be false; that grid point is the counterexample.
"""

from __future__ import annotations

import itertools
import json
import random

from gmpy2 import mpq

from ivpcert.certificate import emit, parse
from ivpcert.certificate.encode import (dec_box, dec_constraint, dec_formula, dec_poly, dec_polyvec,
                                        dec_q, enc_q)
from ivpcert.core import Box
from ivpcert.core.problem import formula_holds


def to_doc(cert) -> dict:
    return json.loads(emit(cert))


def from_doc(doc):
    return parse(json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False))


def obligations(doc) -> list:
    """(path, node) for every leaf obligation, in pre-order."""
    out, stack = [], [((), doc["root"])]
    while stack:
        path, n = stack.pop()
        if "obligation" in n:
            out.append((path, n))
            continue
        for i in reversed(range(len(n["children"]))):
            stack.append((path + (i,), n["children"][i]))
    return out


def grid_points(box: Box, domain=(), per_axis: int = 3) -> list:
    axes = []
    for lo, hi in box:
        axes.append([lo] if lo == hi else [lo + (hi - lo) * mpq(i, per_axis - 1) for i in range(per_axis)])
    pts = [list(p) for p in itertools.product(*axes)] + [box.midpoint()]
    return [p for p in pts if all(c.holds(p) for c in domain)]


def _tree_leaves(tree, box):
    out, stack = [], [(tree, box)]
    while stack:
        node, b = stack.pop()
        if node[0] == "S":
            left, right = b.split(node[1], dec_q(node[2]))
            stack += [(node[4], right), (node[3], left)]
        else:
            out.append((node, b))
    return out


# poly_upper / poly_lower: payload claims poly <= bound -------------------------

def _bound_grid(p):
    poly = dec_poly(p["poly"])
    box = dec_box(p["box"])
    dom = [dec_constraint(c) for c in p["domain"]]
    pts = grid_points(box, dom)
    return poly, box, dom, pts


def lower_bound(p, rng):
    poly, _, _, pts = _bound_grid(p)
    if not pts:
        return None
    g = max(poly.evaluate(x) for x in pts)
    new = g - mpq(rng.randint(1, 1000), 1000) * max(abs(g), mpq(1, 1 << 20))
    p["bound"] = enc_q(new)
    return f"bound lowered below grid value {float(g):.6g}"


def lower_leaf(p, rng):
    poly, box, dom, _ = _bound_grid(p)
    cands = []
    for node, b in _tree_leaves(p["tree"], box):
        if node[0] == "L":
            pts = grid_points(b, dom)
            if pts:
                cands.append((node, max(poly.evaluate(x) for x in pts)))
    if not cands:
        return None
    node, g = rng.choice(cands)
    node[2] = enc_q(g - mpq(rng.randint(1, 1000), 1000) * max(abs(g), mpq(1, 1 << 20)))
    return f"leaf enclosure tightened below grid value {float(g):.6g}"


def shift_poly(p, rng):
    poly, _, _, pts = _bound_grid(p)
    if not pts:
        return None
    g = max(poly.evaluate(x) for x in pts)
    bound = dec_q(p["bound"])
    shift = bound - g + mpq(rng.randint(1, 1000), 1000) * max(abs(bound), mpq(1, 1 << 10))
    terms = p["poly"]["terms"]
    zero = [0] * len(p["poly"]["vars"])
    for t in terms:
        if t[0] == zero:
            t[1] = enc_q(dec_q(t[1]) + shift)
            break
    else:
        terms.append([zero, enc_q(shift)])
    assert max((poly + shift).evaluate(x) for x in pts) > bound
    return "constant coefficient raised above the bound"


# sturm_nonneg: payload claims the coefficient list is >= 0 on [a, b] ---------------

def sturm_negative(p, rng):
    coeffs = [dec_q(c) for c in p["coeffs"]]
    a, b = dec_q(p["a"]), dec_q(p["b"])
    grid = [a + (b - a) * mpq(i, 16) for i in range(17)]
    m = min(sum(c * x ** j for j, c in enumerate(coeffs)) for x in grid)
    drop = m + mpq(rng.randint(1, 1000), 1000) * max(abs(m), mpq(1, 1 << 20))
    coeffs = coeffs or [mpq(0)]
    coeffs[0] -= drop
    p["coeffs"] = [enc_q(c) for c in coeffs]
    assert min(sum(c * x ** j for j, c in enumerate(coeffs)) for x in grid) < 0
    return "constant coefficient lowered until negative on the grid"


# region_containment: payload claims map(cell) + pad lies in the region ----------------

def _image(p):
    w = p["image"]
    phi = dec_polyvec(w["map"])
    box = dec_box(w["box"])
    dom = [dec_constraint(c) for c in w["domain"]]
    return w, phi, box, dom, dec_formula(w["formula"])


def _escapes(formula, point, pad, rng):
    """A point within pad (sup norm) of `point` outside the region, if any."""
    dims = list(range(len(point)))
    rng.shuffle(dims)
    for i in dims:
        for s in (1, -1):
            q_ = list(point)
            q_[i] += s * pad
            if not formula_holds(formula, q_):
                return q_
    return None


def grow_pad(p, rng):
    if "image" not in p:
        return None
    w, phi, box, dom, formula = _image(p)
    pts = grid_points(box, dom)
    if not pts:
        return None
    x = rng.choice(pts)
    img = phi.evaluate(x)
    pad = mpq(1, 8)
    while _escapes(formula, img, pad, rng) is None:
        pad *= 2
        if pad > 1 << 40:
            return None
    w["pad"] = enc_q(pad)
    return f"pad raised to {pad}"


def shift_map(p, rng):
    if "image" not in p:
        return None
    w, phi, box, dom, formula = _image(p)
    pts = grid_points(box, dom)
    if not pts:
        return None
    i = rng.randrange(len(phi))
    x = rng.choice(pts)
    img = phi.evaluate(x)
    step = mpq(1, 8)
    while True:
        for s in (step, -step):
            moved = list(img)
            moved[i] += s
            if not formula_holds(formula, moved):
                terms = w["map"][i]["terms"]
                zero = [0] * len(w["map"][i]["vars"])
                for t in terms:
                    if t[0] == zero:
                        t[1] = enc_q(dec_q(t[1]) + s)
                        break
                else:
                    terms.append([zero, enc_q(s)])
                return f"component {i} shifted by {s}"
        step *= 2
        if step > 1 << 40:
            return None


def shrink_image(p, rng):
    if "image" not in p:
        return None
    w, phi, box, dom, _ = _image(p)
    cands = [(n, b) for n, b in _tree_leaves(w["tree"], box) if n[0] == "M"]
    cands = [(n, b, grid_points(b, dom)) for n, b in cands]
    cands = [c for c in cands if c[2]]
    if not cands:
        return None
    node, b, pts = rng.choice(cands)
    i = rng.randrange(len(phi))
    vals = [phi[i].evaluate(x) for x in pts]
    stored = node[1]
    lo, hi = dec_q(stored[i][0]), dec_q(stored[i][1])
    if rng.random() < 0.5:
        top = max(vals)
        stored[i][1] = enc_q(top - mpq(rng.randint(1, 1000), 1000) * max(top - lo, mpq(1, 1 << 20)))
        if dec_q(stored[i][1]) < lo:
            stored[i][0] = stored[i][1]
    else:
        bot = min(vals)
        stored[i][0] = enc_q(bot + mpq(rng.randint(1, 1000), 1000) * max(hi - bot, mpq(1, 1 << 20)))
        if dec_q(stored[i][0]) > hi:
            stored[i][1] = stored[i][0]
    return f"stored image of component {i} shrunk past a grid value"


# exact_identity: anchoring claim -------------------------------------------------

def unanchor(p, rng):
    if p.get("claim") != "anchored":
        return None
    i = rng.randrange(len(p["phi"]))
    comp = p["phi"][i]
    zero = [0] * len(comp["vars"])
    s = mpq(rng.randint(1, 1000), 1 << 20)
    for t in comp["terms"]:
        if t[0] == zero:
            t[1] = enc_q(dec_q(t[1]) + s)
            break
    else:
        comp["terms"].append([zero, enc_q(s)])
    return f"component {i} moved off the identity by {s}"


MUTATIONS = {
    "poly_upper": (lower_bound, lower_leaf, shift_poly),
    "poly_lower": (lower_bound, lower_leaf, shift_poly),
    "sturm_nonneg": (sturm_negative,),
    "region_containment": (grow_pad, shift_map, shrink_image),
    "exact_identity": (unanchor,),
}


def random_mutation(cert, rng: random.Random):
    """(mutated certificate, leaf path, description), or None if no edit applied."""
    doc = to_doc(cert)
    leaves = obligations(doc)
    path, leaf = rng.choice(leaves)
    fns = MUTATIONS[leaf["obligation"]]
    fn = rng.choice(fns)
    what = fn(leaf["payload"], rng)
    if what is None:
        return None
    return from_doc(doc), path, f"{leaf['obligation']} at {path}: {what}"
