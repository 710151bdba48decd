import math

import numpy as np
import pytest
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from ivpcert.approximant import (PicardFamily, RankDeficient, auto_x0_degree, defect_bounds, defect_poly,
                                 fit_from_samples, is_anchored, make_approximant, picard_iterate,
                                 read_samples, round_coeffs, taylor_approximant)
from ivpcert.arith_oracle.interval import float_value
from ivpcert.core import PolyVec, parse_problem
from ivpcert.core.parser import parse_poly


def ivp(text):
    return parse_problem(text).ivp


EXP5 = ivp("var x\nx' = x\ninit x = 1\nhorizon [0, 5]")
EXP1 = ivp("var x\nx' = x\ninit x in [1/2, 1]\nhorizon [0, 1]")
CLOCK = ivp("var x\nx' = 1\ninit x in [0, 1]\nhorizon [0, 1]")


def phi_of(ivp_, *texts):
    return PolyVec([parse_poly(t, ivp_.phi_vars) for t in texts])


class TestPicard:
    def test_exponential_k3(self):
        a = picard_iterate(EXP5, 3)
        assert a.anchored
        assert a.phi[0] == parse_poly("x0*(1 + t + t^2/2 + t^3/6)", EXP5.phi_vars)

    def test_base_case(self, mg_problem):
        a = picard_iterate(mg_problem.ivp, 0)
        assert a.phi == phi_of(mg_problem.ivp, "u0", "v0")

    def test_moore_greitzer_first_coefficient(self, mg_problem):
        m = mg_problem.ivp
        a = picard_iterate(m, 3, t_degree=3)
        c1 = a.phi[0].diff("t").substitute_value("t", 0)
        assert c1 == parse_poly("-u0^3/2 - 3*u0^2/2 - v0 - 1/2", m.phi_vars)
        assert max(e[-1] for e in a.phi[0].terms) == 3

    def test_taylor_matches_truncated_picard(self, mg_problem):
        m = mg_problem.ivp
        assert taylor_approximant(m, 3).phi == picard_iterate(m, 3, t_degree=3).phi

    def test_negative_k(self):
        with pytest.raises(ValueError):
            picard_iterate(EXP5, -1)


class TestRounding:
    def test_third_to_sixteenths(self):
        a = make_approximant(phi_of(EXP1, "x0 + t/3"), EXP1)
        r = round_coeffs(a, 4)
        assert r.phi[0] == parse_poly("x0 + 5*t/16", EXP1.phi_vars)
        assert r.anchored

    def test_integers_untouched(self):
        a = make_approximant(phi_of(EXP1, "x0 + 3*t - 7*t^2*x0"), EXP1)
        assert round_coeffs(a, 1).phi == a.phi

    def test_rounded_moore_greitzer_defect(self, mg_problem):
        m = mg_problem.ivp
        a = make_approximant(mg_problem.phi, m)
        r = round_coeffs(a, 12)
        d0, d1 = defect_bounds(a, m).delta, defect_bounds(r, m).delta
        assert r.anchored and d1 < mpq(1, 250)
        assert abs(d1 - d0) < mpq(1, 1000)


class TestFit:
    def samples_exp(self):
        rows = ["x0_1,t,x_1"]
        for i in range(9):
            t = mpq(i, 8)
            rows.append(f"1,{t},{math.exp(float(t)):.15f}")
        return read_samples("\n".join(rows), 1)

    def test_exponential_grid(self):
        e = ivp("var x\nx' = x\ninit x = 1\nhorizon [0, 1]")
        a = fit_from_samples(self.samples_exp(), e, 4)
        assert a.anchored
        for i in range(9):
            t = i / 8
            assert abs(float_value(a.phi[0], [1.0, t]) - math.exp(t)) < 1e-2

    def test_constant_field(self):
        z = ivp("var x\nx' = 0\ninit x in [0, 1]\nhorizon [0, 1]")
        rows = ["x0_1,t,x_1"] + [f"{a},{b},{a}" for a in ("0", "1/2", "1") for b in ("0", "1/2", "1")]
        a = fit_from_samples(read_samples("\n".join(rows), 1), z, 2)
        assert a.phi[0] == parse_poly("x0", z.phi_vars)

    def test_single_sample(self):
        with pytest.raises(RankDeficient):
            fit_from_samples(read_samples("x0_1,t,x_1\n1,0,1", 1), EXP5, 2)

    def test_header_checked(self):
        with pytest.raises(ValueError):
            read_samples("x,t,y\n1,0,1", 1)

    def test_non_grid_rejected(self):
        with pytest.raises(ValueError):
            fit_from_samples(read_samples("x0_1,t,x_1\n1,0,1\n1,1/2,1\n2,0,2", 1), EXP5, 1)

    @settings(max_examples=15, deadline=None)
    @given(st.fractions(min_value=-3, max_value=3, max_denominator=8))
    def test_reproduces_constant_velocity_flow(self, c):
        c = mpq(c.numerator, c.denominator)
        z = ivp(f"var x\nx' = {c}\ninit x in [0, 1]\nhorizon [0, 1]")
        rows = ["x0_1,t,x_1"]
        for a in (mpq(0), mpq(1, 2), mpq(1)):
            for t in (mpq(0), mpq(1, 3), mpq(2, 3), mpq(1)):
                rows.append(f"{a},{t},{a + c * t}")
        fit = fit_from_samples(read_samples("\n".join(rows), 1), z, 2)
        assert fit.phi[0] == parse_poly(f"x0 + ({c})*t", z.phi_vars)


class TestDefect:
    def test_picard_28_on_exponential(self):
        d = defect_bounds(picard_iterate(EXP5, 28), EXP5).delta
        # the defect is -x0 t^28/28!, largest at t = 5
        exact = mpq(5 ** 28, math.factorial(28))
        assert exact <= d <= exact * mpq(17, 16)
        assert d <= mpq(1, 10 ** 6)
        assert float(d) <= math.exp(5) * 5 ** 28 / math.factorial(28)

    def test_exact_solution_has_zero_defect(self):
        a = make_approximant(phi_of(CLOCK, "x0 + t"), CLOCK)
        assert defect_bounds(a, CLOCK).delta == 0

    def test_constant_approximant(self):
        assert defect_bounds(picard_iterate(EXP5, 0), EXP5).delta >= 1

    def test_unanchored_initial_error(self):
        a = make_approximant(phi_of(CLOCK, "x0 + 1/8 + t"), CLOCK)
        r = defect_bounds(a, CLOCK)
        assert not a.anchored and mpq(1, 8) <= r.e0 <= mpq(1, 8) * mpq(17, 16)

    def test_monotone_in_k(self):
        ds = [defect_bounds(picard_iterate(EXP1, k), EXP1).delta for k in range(1, 21)]
        assert all(b <= a for a, b in zip(ds, ds[1:]))

    def test_dominates_grid(self, mg_problem):
        m = mg_problem.ivp
        a = make_approximant(mg_problem.phi, m)
        rep = defect_bounds(a, m)
        d = defect_poly(a, m)
        worst = 0.0
        for u in np.linspace(0.9, 1.1, 11):
            for v in np.linspace(0.9, 1.1, 11):
                if u + v > 2:
                    continue
                for t in np.linspace(0, 0.02, 11):
                    worst = max(worst, math.hypot(*(float_value(c, [u, v, t]) for c in d)))
        assert float(rep.delta) >= worst


class TestAnchoring:
    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 4))
    def test_picard_iterates_anchored(self, k):
        e = ivp("var x, y\nx' = y^2 - x\ny' = x*y + 1/2\ninit x in [0, 1], y in [-1, 1]\nhorizon [1/4, 1]")
        a = picard_iterate(e, k)
        assert a.anchored and is_anchored(a.phi, e)
        assert a.at_start(e.t0) == PolyVec([parse_poly(v, e.phi_vars) for v in e.x0_vars])

    def test_family_schedule_doubles(self):
        assert PicardFamily(EXP5).schedule(16) == [1, 2, 4, 8, 16]
        assert PicardFamily(EXP5).schedule(20) == [1, 2, 4, 8, 16, 20]


CUBIC = ivp("var x, y\nx' = -y^2/2 + x^2*y/4\ny' = x*y/2 - x^3/2\ninit x in [1/2, 17/32], y in [1/2, 17/32]\n"
            "horizon [0, 1/2]")


class TestFamilySizing:
    def test_point_init_drops_x0_terms(self):
        fam = PicardFamily(EXP5, x0_degree=auto_x0_degree(EXP5))
        assert fam.x0_cap(10) == 0
        a = fam(10)
        assert a.anchored
        exact = taylor_approximant(EXP5, 10)
        for t in (0, 1, 5):
            assert a.phi[0].evaluate([1, t]) == exact.phi[0].evaluate([1, t])

    def test_cap_grows_with_k(self):
        fam = PicardFamily(CUBIC, x0_degree=auto_x0_degree(CUBIC))
        caps = [fam.x0_cap(k) for k in (2, 4, 8, 16)]
        assert caps == sorted(caps) and caps[-1] >= 8

    @pytest.mark.parametrize("k", [1, 2, 4])
    def test_size_estimate_bounds_defect(self, k):
        for fam in (PicardFamily(CUBIC), PicardFamily(CUBIC, x0_degree=auto_x0_degree(CUBIC))):
            est = fam.size_estimate(k)
            assert all(len(d) <= est for d in defect_poly(fam(k), CUBIC))

    def test_truncated_defect_still_small(self):
        fam = PicardFamily(CUBIC, x0_degree=auto_x0_degree(CUBIC))
        rep = defect_bounds(fam(6), CUBIC, 4000)
        assert rep.e0 == 0 and rep.delta < mpq(1, 1000)
