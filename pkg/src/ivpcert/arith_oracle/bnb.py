"""Branch-and-bound bounds on polynomials over boxes, with subdivision witnesses.

A witness is a bisection tree over a root box.  Each leaf either carries
the interval enclosure of the polynomial on its box or names a domain
constraint that interval evaluation proves infeasible there.  Re-checking
a witness needs only interval evaluation; no search.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from gmpy2 import mpq

from ..core.box import Box
from ..core.poly import Poly
from ..core.problem import Constraint
from ..core.rational import q, to_str
from .interval import DEFAULT_BITS, anchor_for, float_value, interval_eval, upper_enclosure

DEFAULT_BUDGET = 200_000


@dataclass(frozen=True)
class Leaf:
    lo: mpq
    hi: mpq


@dataclass(frozen=True)
class Excl:
    """Leaf whose box misses domain constraint ``index``."""

    index: int


@dataclass(frozen=True)
class Split:
    axis: int
    mid: mpq
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Inside:
    """Leaf whose box satisfies a region formula by interval evaluation."""


@dataclass(frozen=True)
class Image:
    """Leaf carrying the interval image of a map on its cell plus a sub-witness."""

    box: Box
    sub: "Node"


Node = Union[Leaf, Excl, Split, Inside, Image]


def node_to_json(n: Node):
    # iterative to survive deep trees
    if isinstance(n, Leaf):
        return ["L", to_str(n.lo), to_str(n.hi)]
    if isinstance(n, Excl):
        return ["X", n.index]
    if isinstance(n, Inside):
        return ["I"]
    if isinstance(n, Image):
        return ["M", n.box.to_json(), node_to_json(n.sub)]
    return ["S", n.axis, to_str(n.mid), node_to_json(n.left), node_to_json(n.right)]


def node_from_json(data) -> Node:
    tag = data[0]
    if tag == "L":
        return Leaf(q(data[1]), q(data[2]))
    if tag == "X":
        if not isinstance(data[1], int):
            raise ValueError("exclusion index must be an integer")
        return Excl(data[1])
    if tag == "I":
        return Inside()
    if tag == "M":
        return Image(Box.from_json(data[1]), node_from_json(data[2]))
    if tag == "S":
        if not isinstance(data[1], int):
            raise ValueError("split axis must be an integer")
        return Split(data[1], q(data[2]), node_from_json(data[3]), node_from_json(data[4]))
    raise ValueError(f"unknown witness node {tag!r}")


def count_nodes(n: Node) -> int:
    if isinstance(n, Split):
        return 1 + count_nodes(n.left) + count_nodes(n.right)
    if isinstance(n, Image):
        return 1 + count_nodes(n.sub)
    return 1


def leaves(n: Node, box: Box):
    """Yield (leaf node, leaf box) pairs."""
    stack = [(n, box)]
    while stack:
        node, b = stack.pop()
        if isinstance(node, Split):
            left, right = b.split(node.axis, node.mid)
            stack.append((node.right, right))
            stack.append((node.left, left))
        else:
            yield node, b


@dataclass(frozen=True)
class SubdivisionWitness:
    """Proof that p <= bound (or < bound) on root_box intersected with the domain."""

    poly: Poly
    root_box: Box
    bound: mpq
    strict: bool
    tree: Node
    domain: tuple = ()
    mode: str = "best"
    bits: int = DEFAULT_BITS

    def size(self) -> int:
        return count_nodes(self.tree)


@dataclass(frozen=True)
class Unknown:
    reason: str
    best_upper: Optional[mpq] = None
    nodes: int = 0


@dataclass(frozen=True)
class Refuted:
    """A point of the domain where the claimed bound fails."""

    point: tuple
    value: mpq


def constraint_excluded(c: Constraint, box, mode: str, bits: int) -> bool:
    lo, hi = interval_eval(c.poly, box, mode, bits)
    if c.rel == ">=":
        return hi < 0
    return hi < 0 or lo > 0


def _feasible(point, domain: Sequence[Constraint]) -> bool:
    return all(c.holds(point) for c in domain)


class _Cell:
    __slots__ = ("box", "lo", "hi", "excl", "axis", "mid", "kids")

    def __init__(self, box):
        self.box = box
        self.lo = self.hi = None
        self.excl = None
        self.axis = None
        self.mid = None
        self.kids = None


def _freeze(root: _Cell) -> Node:
    # post-order without recursion
    out: dict = {}
    stack = [(root, False)]
    while stack:
        c, done = stack.pop()
        if c.kids is None:
            out[id(c)] = Excl(c.excl) if c.excl is not None else Leaf(c.lo, c.hi)
        elif done:
            out[id(c)] = Split(c.axis, c.mid, out.pop(id(c.kids[0])), out.pop(id(c.kids[1])))
        else:
            stack.append((c, True))
            stack.append((c.kids[1], False))
            stack.append((c.kids[0], False))
    return out[id(root)]


_NEAR = mpq(1, 1 << 30)  # float misses this close to the bound are retried exactly


def _search(p: Poly, box: Box, domain: Sequence[Constraint], *, bound=None, strict=False,
            tol=None, rel_tol=None, budget: int = DEFAULT_BUDGET, mode: str = "best",
            bits: int = DEFAULT_BITS, min_width=None):
    """Best-first refinement of the largest upper enclosure.

    Stops when every open cell satisfies the bound, when a feasible sample
    refutes it, when the gap to the best feasible sample is within tol, or
    when the node budget runs out.  Returns (status, root cell, upper,
    best feasible value, best point, nodes).
    """
    domain = tuple(domain)
    anchor = anchor_for(box)
    counter = itertools.count()
    root = _Cell(box)
    heap: list = []
    best_val, best_pt = None, None
    nodes = 0

    def ok(hi):
        if bound is None:
            return False
        return hi < bound if strict else hi <= bound

    def sample(b: Box):
        # cheap double-precision screening; exact values only for candidates
        nonlocal best_val, best_pt
        pt = b.midpoint()
        v = float_value(p, pt)
        if best_val is not None and v <= best_val:
            return
        if not _feasible(pt, domain):
            return
        v = p.evaluate(pt)
        if best_val is None or v > best_val:
            best_val, best_pt = v, tuple(pt)

    def visit(cell: _Cell):
        nonlocal nodes
        nodes += 1
        for i, c in enumerate(domain):
            if constraint_excluded(c, cell.box, mode, bits):
                cell.excl = i
                return
        cell.lo, cell.hi = interval_eval(p, cell.box, mode, bits, anchor)
        if bound is not None and not ok(cell.hi):
            hi = upper_enclosure(p, cell.box, mode, bits, bound, (abs(bound) + 1) * _NEAR, anchor)
            if ok(hi):
                cell.hi = hi
        sample(cell.box)
        if not ok(cell.hi):
            heapq.heappush(heap, (-cell.hi, next(counter), cell))

    visit(root)
    for corner_bits in range(1 << min(len(box), 4)):
        pt = [hi if (corner_bits >> i) & 1 else lo for i, (lo, hi) in enumerate(box)]
        if _feasible(pt, domain):
            v = p.evaluate(pt)
            if best_val is None or v > best_val:
                best_val, best_pt = v, tuple(pt)

    while heap:
        top_hi = -heap[0][0]
        if bound is not None and best_val is not None and (best_val >= bound if strict else best_val > bound):
            return "refuted", root, top_hi, best_val, best_pt, nodes
        if (tol is not None or rel_tol is not None) and best_val is not None:
            gap = top_hi - best_val
            if (tol is not None and gap <= tol) or (rel_tol is not None and gap <= rel_tol * abs(best_val)):
                return "tol", root, top_hi, best_val, best_pt, nodes
        if nodes >= budget:
            return "budget", root, top_hi, best_val, best_pt, nodes
        _, _, cell = heapq.heappop(heap)
        if cell.box.is_point() or (min_width is not None and cell.box.diameter_inf() < min_width):
            # cannot refine further; keep it as a leaf
            return "stuck", root, top_hi, best_val, best_pt, nodes
        axis = cell.box.widest_axis()
        lo, hi = cell.box[axis]
        mid = (lo + hi) / 2
        cell.axis, cell.mid = axis, mid
        l, r = cell.box.split(axis, mid)
        cell.kids = (_Cell(l), _Cell(r))
        visit(cell.kids[0])
        visit(cell.kids[1])
    top = _max_hi(root)
    if bound is not None and best_val is not None and (best_val >= bound if strict else best_val > bound):
        return "refuted", root, top, best_val, best_pt, nodes
    return "done", root, top, best_val, best_pt, nodes


def _max_hi(root: _Cell):
    m = None
    stack = [root]
    while stack:
        c = stack.pop()
        if c.kids is not None:
            stack.extend(c.kids)
        elif c.excl is None:
            m = c.hi if m is None or c.hi > m else m
    return m


def prove_upper(p: Poly, box: Box, bound, budget: int = DEFAULT_BUDGET, *,
                domain: Sequence[Constraint] = (), strict: bool = False, mode: str = "best",
                bits: int = DEFAULT_BITS):
    """Witness that max p <= bound (strict: < bound) over box and domain.

    Returns a SubdivisionWitness, a Refuted point, or Unknown.
    """
    bound = q(bound)
    status, root, top, best_val, best_pt, nodes = _search(
        p, box, domain, bound=bound, strict=strict, budget=budget, mode=mode, bits=bits)
    if status == "done":
        return SubdivisionWitness(p, box, bound, strict, _freeze(root), tuple(domain), mode, bits)
    if status == "refuted":
        return Refuted(best_pt, best_val)
    return Unknown(f"node budget {budget} exhausted" if status == "budget" else "cannot refine",
                   top, nodes)


def prove_lower(p: Poly, box: Box, bound, budget: int = DEFAULT_BUDGET, **kw):
    """Witness that min p >= bound (strict: > bound), via -p <= -bound."""
    return prove_upper(-p, box, -q(bound), budget, **kw)


@dataclass(frozen=True)
class CertifiedMax:
    upper: mpq
    witness: SubdivisionWitness
    lower: Optional[mpq]
    within_tol: bool
    point: Optional[tuple] = None


def certified_max(p: Poly, box: Box, tol=None, *, rel_tol=None, domain: Sequence[Constraint] = (),
                  budget: int = DEFAULT_BUDGET, mode: str = "best", bits: int = DEFAULT_BITS,
                  round_bits: Optional[int] = 64) -> CertifiedMax:
    """Upper bound U on max p with a witness; U - max <= tol when within_tol.

    With an empty feasible set the upper bound is that of the exclusion tree
    (any value is sound); we report the smallest leaf bound or 0.
    """
    tol = q(tol) if tol is not None else None
    rel = q(rel_tol) if rel_tol is not None else None
    status, root, top, best_val, best_pt, nodes = _search(
        p, box, domain, tol=tol, rel_tol=rel, budget=budget, mode=mode, bits=bits)
    tree = _freeze(root)
    if top is None:
        top = mpq(0)
    upper = top
    if round_bits is not None:
        from ..core.rational import round_up
        upper = round_up(upper, round_bits)
    w = SubdivisionWitness(p, box, upper, False, tree, tuple(domain), mode, bits)
    return CertifiedMax(upper, w, best_val, status in ("tol", "done"), best_pt)


def approx_max(p: Poly, box: Box, tol, **kw) -> mpq:
    """Upper bound m with true max <= m <= true max + tol (budget permitting)."""
    return certified_max(p, box, tol, **kw).upper


def check_subdivision(w: SubdivisionWitness, max_nodes: Optional[int] = None) -> Optional[str]:
    """Re-verify a witness by interval evaluation; None on success, else a reason."""
    count = 0
    anchor = anchor_for(w.root_box)
    for node, b in _walk_checked(w.tree, w.root_box):
        count += 1
        if max_nodes is not None and count > max_nodes:
            return "witness too large"
        if isinstance(node, str):
            return node
        if isinstance(node, Excl):
            if not (0 <= node.index < len(w.domain)):
                return f"exclusion index {node.index} out of range"
            if not constraint_excluded(w.domain[node.index], b, w.mode, w.bits):
                return f"constraint {node.index} is not excluded on {b!r}"
            continue
        hi = upper_enclosure(w.poly, b, w.mode, w.bits, node.hi, anchor=anchor)
        if hi > node.hi:
            return f"enclosure on {b!r} is {hi}, above the stored {node.hi}"
        if w.strict and not node.hi < w.bound:
            return f"leaf bound {node.hi} is not below {w.bound}"
        if not w.strict and not node.hi <= w.bound:
            return f"leaf bound {node.hi} exceeds {w.bound}"
    return None


def _walk_checked(tree: Node, box: Box):
    stack = [(tree, box)]
    while stack:
        node, b = stack.pop()
        if isinstance(node, Split):
            if not (0 <= node.axis < b.dim):
                yield f"split axis {node.axis} out of range", b
                return
            lo, hi = b[node.axis]
            if not (lo < node.mid < hi):
                yield f"split point {node.mid} outside ({lo}, {hi})", b
                return
            left, right = b.split(node.axis, node.mid)
            stack.append((node.right, right))
            stack.append((node.left, left))
        else:
            yield node, b
