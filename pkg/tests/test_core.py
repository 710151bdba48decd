from fractions import Fraction

import pytest
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from ivpcert.core import Box, Poly, PolyVec, VariableMismatch, parse_problem, poly_arith, poly_eval, q
from ivpcert.core.parser import ParseError, format_problem, parse_poly
from ivpcert.core.problem import ProblemError, ball_region
from ivpcert.core.rational import round_down, round_up, sqrt_up, to_str

X = ("x",)
UV = ("u", "v")


def P(text, vs=X):
    return parse_poly(text, vs)


big_q = st.fractions(max_denominator=10 ** 30).map(lambda f: mpq(f.numerator, f.denominator))
small_q = st.fractions(min_value=-4, max_value=4, max_denominator=16).map(
    lambda f: mpq(f.numerator, f.denominator))


@st.composite
def polys(draw, vs=("x", "y"), max_terms=5, max_deg=3):
    terms = {}
    for _ in range(draw(st.integers(0, max_terms))):
        e = tuple(draw(st.integers(0, max_deg)) for _ in vs)
        terms[e] = draw(small_q)
    return Poly(vs, terms)


class TestRational:
    def test_decimal_is_exact(self):
        assert q("3.8125") == mpq(61, 16)
        assert q("0.1") == mpq(1, 10)
        assert q("1e-3") == mpq(1, 1000)

    def test_floats_refused(self):
        with pytest.raises(TypeError):
            q(0.5)

    def test_fraction_and_text(self):
        assert q(Fraction(3, 9)) == mpq(1, 3)
        assert to_str(mpq(6, 4)) == "3/2"
        assert to_str(mpq(4, 2)) == "2"

    def test_dyadic_rounding_brackets(self):
        x = mpq(1, 17)
        lo, hi = round_down(x, 4), round_up(x, 4)
        assert lo == 0 and hi == mpq(1, 16)
        # denominators that already fit are kept
        assert round_down(mpq(1, 3), 4) == mpq(1, 3)

    def test_sqrt_up_is_upper(self):
        r = sqrt_up(mpq(2), 20)
        assert r * r >= 2 and r - mpq(1, 1 << 19) < 1.4143

    @given(big_q, big_q)
    def test_add_then_subtract(self, a, b):
        assert (a + b) - b == a


class TestPolyArith:
    def test_time_integral(self):
        p = P("1 + t", ("t",))
        assert poly_arith(p, None, "time_integral", var="t", t0=0) == P("t + t^2/2", ("t",))

    def test_time_integral_vanishes_at_start(self):
        p = P("3*t^2 + x", ("x", "t"))
        r = poly_arith(p, None, "time_integral", var="t", t0=mpq(1, 2))
        assert r.evaluate([mpq(7), mpq(1, 2)]) == 0

    def test_partial_derivative(self):
        p = P("u*v + u^3", UV)
        assert poly_arith(p, None, "partial_derivative", var="u") == P("v + 3*u^2", UV)

    def test_compose(self):
        f = P("x^2 + 1")
        g = P("1 + t", ("t",))
        r = poly_arith(f, g, "compose", var="x")
        assert r == P("t^2 + 2*t + 2", ("t",))
        for t in [mpq(-2), mpq(0), mpq(1, 3), mpq(5, 2), mpq(7)]:
            assert r.evaluate([t]) == (1 + t) ** 2 + 1

    def test_context_mismatch(self):
        with pytest.raises(VariableMismatch):
            _ = P("x") + P("u", UV)

    def test_unknown_op(self):
        with pytest.raises(ValueError):
            poly_arith(P("x"), P("x"), "divide")


class TestPolyEval:
    def test_square(self):
        assert poly_eval(P("x^2"), [mpq(3, 2)]) == mpq(9, 4)

    def test_moore_greitzer_field(self):
        f1 = P("-v - 1.5*u^2 - 0.5*u^3 - 0.5", UV)
        assert poly_eval(f1, [mpq(1), mpq(1)]) == mpq(-7, 2)

    def test_zero(self):
        assert poly_eval(Poly.zero(UV), [mpq(5), mpq(-3, 7)]) == 0

    def test_dimension_mismatch(self):
        with pytest.raises(VariableMismatch):
            poly_eval(P("x"), [mpq(1), mpq(2)])


class TestPolyLaws:
    pts = st.tuples(small_q, small_q)

    @settings(max_examples=60, deadline=None)
    @given(polys(), polys(), polys(), pts)
    def test_ring_laws(self, a, b, c, pt):
        def ev(p):
            return p.evaluate(list(pt))
        assert a + b == b + a and a * b == b * a
        assert ev((a + b) + c) == ev(a + (b + c))
        assert ev((a * b) * c) == ev(a * (b * c))
        assert ev(a * (b + c)) == ev(a * b) + ev(a * c)

    @settings(max_examples=60, deadline=None)
    @given(polys(), pts, pts)
    def test_translate(self, a, offset, pt):
        moved = a.translate(list(offset))
        assert moved.evaluate(list(pt)) == a.evaluate([x + y for x, y in zip(pt, offset)])

    @settings(max_examples=60, deadline=None)
    @given(polys(vs=("x", "t")))
    def test_integrate_then_differentiate(self, p):
        r = poly_arith(p, None, "time_integral", var="t", t0=0)
        assert poly_arith(r, None, "partial_derivative", var="t") == p


class TestBox:
    def test_split_partitions(self):
        b = Box([(mpq(0), mpq(2)), (mpq(-1), mpq(1))])
        left, right = b.split(b.widest_axis())
        assert left.highs()[0] == right.lows()[0] == 1
        assert b.contains_box(left) and b.contains_box(right)

    def test_widest_axis_tie_prefers_lowest(self):
        assert Box([(mpq(0), mpq(1)), (mpq(0), mpq(1))]).widest_axis() == 0

    def test_inflate_and_json(self):
        b = Box([(mpq(0), mpq(1))]).inflate(mpq(1, 2))
        assert b.lows() == [mpq(-1, 2)] and b.highs() == [mpq(3, 2)]
        assert Box.from_json(b.to_json()) == b


class TestParseProblem:
    def test_exponential(self):
        p = parse_problem("var x\nx' = x\ninit x = 1\nhorizon [0, 5]\n")
        ivp = p.ivp
        assert ivp.vars == ("x",) and ivp.f[0] == P("x")
        assert ivp.init.box.is_point() and ivp.init.box.lows() == [1]
        assert (ivp.t0, ivp.T) == (0, 5)

    def test_semicolon_form(self):
        p = parse_problem("var x; x' = x; init x = 1; horizon [0, 5]")
        assert p.ivp.T == 5

    def test_decimal_bound_constraint(self, mg_problem):
        c = mg_problem.ivp.init.constraints[0]
        assert c.poly == P("u - 9/10", UV) and c.rel == ">="

    def test_decimal_coefficient(self, mg_problem):
        assert mpq(-61, 16) in mg_problem.phi[0].terms.values() or any(
            c == mpq(61, 16) or c == mpq(-61, 16) for c in mg_problem.phi[0].terms.values())

    def test_primed_rhs_rejected(self):
        with pytest.raises(ParseError) as err:
            parse_problem("var x, y, z\nx' = y*z'\ny' = 0\nz' = 0\ninit x = 0, y = 0, z = 0\nhorizon [0, 1]")
        assert "line 2" in str(err.value)

    def test_empty_init_rejected(self):
        with pytest.raises(ProblemError):
            parse_problem("var x\nx' = x\ninit x >= 1, x <= 0\nhorizon [0, 1]")

    def test_non_polynomial_rejected(self):
        with pytest.raises(ParseError):
            parse_problem("var x\nx' = 1/x\ninit x = 1\nhorizon [0, 1]")

    def test_goals(self):
        base = "var x\nx' = x\ninit x = 1\nhorizon [0, 1]\n"
        assert parse_problem(base + "goal error-bound 1/100").goal.epsilon == mpq(1, 100)
        assert parse_problem(base + "goal safety -1 < x < 3").goal.region.bounded_box() is not None
        assert parse_problem(base + "goal liveness x > 2").goal.kind == "liveness"
        assert parse_problem(base + "goal exists-until 1/2").goal.until == mpq(1, 2)
        g = parse_problem(base + "goal step-exist alpha=1/100 N=10").goal
        assert (g.alpha, g.steps) == (mpq(1, 100), 10)

    def test_goal_region_with_leading_minus(self):
        base = "var x\nx' = -1\ninit x = 1\nhorizon [0, 1]\n"
        p = parse_problem(base + "goal liveness x < 1/2")
        text = format_problem(p)
        assert "goal liveness -x" in text
        assert parse_problem(text).goal == p.goal
        with pytest.raises(ParseError):
            parse_problem(base + "goal error - bound 1")

    def test_round_trip_fixpoint(self, problems_dir):
        for path in sorted(problems_dir.glob("*.ivp")):
            once = format_problem(parse_problem(path.read_text()))
            assert format_problem(parse_problem(once)) == once, path.name


class TestRegions:
    def test_ball_region(self):
        r = ball_region(("x", "y"), mpq(2))
        assert r.contains([mpq(1), mpq(1)]) and not r.contains([mpq(2), mpq(0)])
        assert r.bounded_box() == Box([(mpq(-2), mpq(2))] * 2)


class TestPolyVec:
    def test_shared_vars_required(self):
        with pytest.raises(VariableMismatch):
            PolyVec([P("x"), P("u", UV)])
