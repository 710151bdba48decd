"""Region containment, image containment, Lipschitz bounds and init-region checks."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from gmpy2 import mpq

from ..core.box import Box
from ..core.poly import Poly, PolyVec
from ..core.problem import And, Atom, Constraint, InitRegion, OpenRegion, Or
from ..core.rational import q, round_up, sqrt_up
from .bnb import (DEFAULT_BUDGET, Excl, Image, Inside, Leaf, Node, Split, SubdivisionWitness,
                  Unknown, certified_max, constraint_excluded)
from .interval import DEFAULT_BITS, anchor_for, interval_eval

TRUE, FALSE, UNKNOWN = 1, 0, -1


def formula_on_box(f, box, mode: str = "best", bits: int = DEFAULT_BITS) -> int:
    """Three-valued truth of a positive strict formula over every point of box."""
    if isinstance(f, Atom):
        lo, hi = interval_eval(f.poly, box, mode, bits)
        if lo > 0:
            return TRUE
        if hi <= 0:
            return FALSE
        return UNKNOWN
    vals = []
    for it in f.items:
        v = formula_on_box(it, box, mode, bits)
        if isinstance(f, And) and v == FALSE:
            return FALSE
        if isinstance(f, Or) and v == TRUE:
            return TRUE
        vals.append(v)
    if isinstance(f, And):
        return TRUE if all(v == TRUE for v in vals) else UNKNOWN
    return FALSE if all(v == FALSE for v in vals) else UNKNOWN


@dataclass(frozen=True)
class RegionWitness:
    """Subdivision of ``box`` whose every leaf lies inside the region formula."""

    box: Box
    formula: object
    tree: Node
    mode: str = "best"
    bits: int = DEFAULT_BITS


@dataclass(frozen=True)
class Outside:
    """Some sub-box lies entirely outside the region."""

    box: Box


def _contain(box: Box, formula, budget: int, mode: str, bits: int):
    """(tree, status, nodes) with status 'ok', 'outside' or 'budget'."""
    nodes = 0
    root: dict = {"box": box}
    stack = [root]
    while stack:
        cell = stack.pop()
        nodes += 1
        v = formula_on_box(formula, cell["box"], mode, bits)
        if v == TRUE:
            cell["node"] = Inside()
            continue
        if v == FALSE or _point_outside(formula, cell["box"]):
            return None, ("outside", cell["box"]), nodes
        if nodes >= budget or cell["box"].is_point():
            return None, ("budget", cell["box"]), nodes
        b = cell["box"]
        axis = b.widest_axis()
        lo, hi = b[axis]
        mid = (lo + hi) / 2
        l, r = b.split(axis, mid)
        cell["split"] = (axis, mid)
        cell["kids"] = ({"box": l}, {"box": r})
        stack.append(cell["kids"][1])
        stack.append(cell["kids"][0])
    return _freeze_dicts(root), ("ok", None), nodes


def _point_outside(formula, box: Box) -> bool:
    """Exact check of the midpoint and (in low dimension) the corners."""
    from ..core.problem import formula_holds
    pts = [box.midpoint()]
    if box.dim <= 6:
        pts.extend(list(c) for c in itertools.product(*box.intervals))
    return any(not formula_holds(formula, p) for p in pts)


def _freeze_dicts(root) -> Node:
    out = {}
    stack = [(root, False)]
    while stack:
        c, done = stack.pop()
        if "kids" not in c:
            out[id(c)] = c["node"]
        elif done:
            axis, mid = c["split"]
            out[id(c)] = Split(axis, mid, out.pop(id(c["kids"][0])), out.pop(id(c["kids"][1])))
        else:
            stack.append((c, True))
            stack.append((c["kids"][1], False))
            stack.append((c["kids"][0], False))
    return out[id(root)]


def region_membership(box_enclosure: Box, pad, region: OpenRegion, budget: int = 4096, *,
                      mode: str = "best", bits: int = DEFAULT_BITS):
    """Prove box_enclosure inflated by pad lies inside the open region.

    Returns a RegionWitness, Outside (a sub-box provably outside), or Unknown.
    """
    pad = q(pad)
    if pad < 0:
        raise ValueError("pad must be nonnegative")
    box = box_enclosure.inflate(pad)
    formula = region.full_formula()
    tree, (status, where), nodes = _contain(box, formula, budget, mode, bits)
    if status == "ok":
        return RegionWitness(box, formula, tree, mode, bits)
    if status == "outside":
        return Outside(where)
    return Unknown("node budget exhausted", None, nodes)


def check_region(w: RegionWitness, max_nodes: Optional[int] = None) -> Optional[str]:
    return _check_inside_tree(w.tree, w.box, w.formula, w.mode, w.bits, max_nodes)


def _check_inside_tree(tree, box, formula, mode, bits, max_nodes=None) -> Optional[str]:
    count = 0
    stack = [(tree, box)]
    while stack:
        node, b = stack.pop()
        count += 1
        if max_nodes is not None and count > max_nodes:
            return "witness too large"
        if isinstance(node, Split):
            err = _split_ok(node, b)
            if err:
                return err
            l, r = b.split(node.axis, node.mid)
            stack.append((node.right, r))
            stack.append((node.left, l))
        elif isinstance(node, Inside):
            if formula_on_box(formula, b, mode, bits) != TRUE:
                return f"region formula not certified on {b!r}"
        else:
            return f"unexpected node {type(node).__name__} in a containment tree"
    return None


def _split_ok(node: Split, b: Box) -> Optional[str]:
    if not (0 <= node.axis < b.dim):
        return f"split axis {node.axis} out of range"
    lo, hi = b[node.axis]
    if not (lo < node.mid < hi):
        return f"split point {node.mid} outside ({lo}, {hi})"
    return None


# image containment -------------------------------------------------------

@dataclass(frozen=True)
class ImageWitness:
    """For every cell of the (x0, t) domain: interval image of phi, inflated
    by pad, lies in the region.  Cells may instead be excluded by domain
    constraints."""

    phi: PolyVec
    domain_box: Box
    domain: tuple
    pad: mpq
    formula: object
    tree: Node
    mode: str = "best"
    bits: int = DEFAULT_BITS


@dataclass(frozen=True)
class ImageFailure:
    reason: str  # 'outside' | 'budget'
    point: Optional[tuple] = None
    nodes: int = 0


def image_box(phi: PolyVec, cell: Box, mode: str = "best", bits: int = DEFAULT_BITS,
              anchor=None) -> Box:
    return Box([interval_eval(c, cell, mode, bits, anchor) for c in phi])


def prove_image_in_region(phi: PolyVec, domain_box: Box, domain: Sequence[Constraint], pad,
                          region: OpenRegion, budget: int = 20_000, *, inner_budget: int = 32,
                          mode: str = "best", bits: int = DEFAULT_BITS):
    """Certify phi(cell) + pad inside region for every cell of domain_box."""
    pad = q(pad)
    formula = region.full_formula()
    domain = tuple(domain)
    nodes = 0
    anchor = anchor_for(domain_box)
    root: dict = {"box": domain_box}
    stack = [root]
    while stack:
        cell = stack.pop()
        nodes += 1
        b = cell["box"]
        excl = next((i for i, c in enumerate(domain) if constraint_excluded(c, b, mode, bits)), None)
        if excl is not None:
            cell["node"] = Excl(excl)
            continue
        img = image_box(phi, b, mode, bits, anchor)
        tree, (status, _), used = _contain(img.inflate(pad), formula, inner_budget, mode, bits)
        nodes += used - 1
        if status == "ok":
            cell["node"] = Image(img, tree)
            continue
        mid = b.midpoint()
        if all(c.holds(mid[: len(mid)]) for c in domain):
            if not region.contains(phi.evaluate(mid)):
                return ImageFailure("outside", tuple(mid), nodes)
        if nodes >= budget or b.is_point():
            return ImageFailure("budget", tuple(mid), nodes)
        axis = b.widest_axis()
        lo, hi = b[axis]
        m = (lo + hi) / 2
        l, r = b.split(axis, m)
        cell["split"] = (axis, m)
        cell["kids"] = ({"box": l}, {"box": r})
        stack.append(cell["kids"][1])
        stack.append(cell["kids"][0])
    return ImageWitness(phi, domain_box, domain, pad, formula, _freeze_dicts(root), mode, bits)


def check_image(w: ImageWitness, max_nodes: Optional[int] = None) -> Optional[str]:
    count = 0
    anchor = anchor_for(w.domain_box)
    stack = [(w.tree, w.domain_box)]
    while stack:
        node, b = stack.pop()
        count += 1
        if max_nodes is not None and count > max_nodes:
            return "witness too large"
        if isinstance(node, Split):
            err = _split_ok(node, b)
            if err:
                return err
            l, r = b.split(node.axis, node.mid)
            stack.append((node.right, r))
            stack.append((node.left, l))
        elif isinstance(node, Excl):
            if not (0 <= node.index < len(w.domain)):
                return f"exclusion index {node.index} out of range"
            if not constraint_excluded(w.domain[node.index], b, w.mode, w.bits):
                return f"constraint {node.index} is not excluded on {b!r}"
        elif isinstance(node, Image):
            if node.box.dim != len(w.phi):
                return "image box has the wrong dimension"
            img = image_box(w.phi, b, w.mode, w.bits, anchor)
            if not node.box.contains_box(img):
                return f"stored image {node.box!r} does not contain the enclosure of the cell {b!r}"
            err = _check_inside_tree(node.sub, node.box.inflate(w.pad), w.formula, w.mode, w.bits)
            if err:
                return err
        else:
            return f"unexpected node {type(node).__name__} in an image tree"
    return None


# Lipschitz bounds --------------------------------------------------------

@dataclass(frozen=True)
class LipschitzBound:
    """K >= sqrt(sum_ij m_ij^2) where |df_i/dx_j| <= m_ij on the box."""

    K: mpq
    entries: tuple  # (i, j, m_ij, witness of J_ij <= m_ij, witness of -J_ij <= m_ij)
    floored: bool


MIN_LIPSCHITZ = mpq(1, 1024)


def lipschitz_bound(f: PolyVec, box: Box, *, rel_tol=mpq(1, 64), floor=MIN_LIPSCHITZ,
                    budget: int = 20_000, mode: str = "best") -> LipschitzBound:
    """Sound Frobenius-norm bound on the Jacobian of f over box."""
    entries = []
    total = mpq(0)
    for i, fi in enumerate(f):
        for j, v in enumerate(f.vars):
            J = fi.diff(v)
            if J.is_zero():
                continue
            up = certified_max(J, box, rel_tol=rel_tol, tol=mpq(1, 1 << 20), budget=budget, mode=mode)
            dn = certified_max(-J, box, rel_tol=rel_tol, tol=mpq(1, 1 << 20), budget=budget, mode=mode)
            m = max(up.upper, dn.upper, mpq(0))
            m = round_up(m, 32)
            entries.append((i, j, m,
                            SubdivisionWitness(J, box, m, False, up.witness.tree, (), mode, up.witness.bits),
                            SubdivisionWitness(-J, box, m, False, dn.witness.tree, (), mode, dn.witness.bits)))
            total += m * m
    K = sqrt_up(total, 20)
    floored = False
    if K < floor:
        K, floored = q(floor), True
    return LipschitzBound(K, tuple(entries), floored)


# init regions ------------------------------------------------------------

def region_nonempty(init: InitRegion, samples_per_axis: int = 5, budget: int = 4096) -> Optional[bool]:
    """True when a rational point of the region is found, False when interval
    exclusion proves it empty, None when undecided."""
    if not init.constraints:
        return True
    box = init.box
    axes = []
    for lo, hi in box:
        if lo == hi:
            axes.append([lo])
        else:
            axes.append([lo + (hi - lo) * mpq(i, samples_per_axis - 1) for i in range(samples_per_axis)])
    count = 0
    for pt in itertools.product(*axes):
        if init.contains(pt):
            return True
        count += 1
        if count > 20_000:
            break
    cons = init.constraints
    stack = [box]
    nodes = 0
    while stack:
        b = stack.pop()
        nodes += 1
        if any(constraint_excluded(c, b, "best", DEFAULT_BITS) for c in cons):
            continue
        mid = b.midpoint()
        if init.contains(mid):
            return True
        if nodes >= budget or b.is_point():
            return None
        l, r = b.split(b.widest_axis())
        stack.extend((r, l))
    return False
