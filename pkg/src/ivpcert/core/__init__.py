"""Exact rationals, polynomials, boxes, problem types and the problem-file parser."""

from .box import Box
from .poly import Poly, PolyVec, VariableMismatch, format_poly, norm_squared, poly_arith
from .problem import (And, Atom, CompactIVP, Constraint, Goal, InitRegion, OpenRegion, Or,
                      Problem, ProblemError, ball_region, infer_box)
from .rational import Q, q, sqrt_up, to_str
from .results import Infeasible


def poly_eval(p: Poly, point):
    """Exact value of p at a rational point."""
    return p.evaluate(point)


def parse_problem(text: str) -> Problem:
    from .parser import parse_problem as _parse
    return _parse(text)


__all__ = [
    "And", "Atom", "Box", "CompactIVP", "Constraint", "Goal", "Infeasible", "InitRegion", "OpenRegion", "Or",
    "Poly", "PolyVec", "Problem", "ProblemError", "Q", "VariableMismatch", "ball_region",
    "format_poly", "infer_box", "norm_squared", "parse_problem", "poly_arith", "poly_eval", "q",
    "sqrt_up", "to_str",
]
