import numpy as np
import pytest
from gmpy2 import mpq

from ivpcert.approximant import FixedFamily, PicardFamily, make_approximant, picard_iterate
from ivpcert.certificate import Accept, check
from ivpcert.core import Box, Infeasible, PolyVec, parse_problem
from ivpcert.core.parser import parse_poly
from ivpcert.exp_bounds import exp_upper
from ivpcert.invariant_engine import (ErrorBoundResult, Options, build_invariant, find_enclosure,
                                      gronwall_pad, prove_error_bound, select_constants)

from refint import compile_field, eval_vec, flow, init_samples


def ivp(text):
    return parse_problem(text).ivp


def reference_gap(ivp_, phi, n_init=100, n_times=100):
    """Largest ||reference flow - Phi|| over sampled inits and times, and the sample counts."""
    field = compile_field(ivp_.f)
    times = np.linspace(float(ivp_.t0), float(ivp_.T), n_times)
    inits = init_samples(ivp_, n_init)
    worst = 0.0
    for x0 in inits:
        xs = flow(field, x0, times, float(ivp_.t0))
        for t, x in zip(times, xs):
            worst = max(worst, float(np.linalg.norm(x - eval_vec(phi, list(x0) + [t]))))
    return worst, len(inits), len(times)


def check_constants(res: ErrorBoundResult, ivp_):
    """The four constant-selection constraints, recomputed from the result."""
    inv, rep, enc = res.invariant, res.report, res.invariant.enclosure
    dt = ivp_.T - ivp_.t0
    rho = gronwall_pad(rep.e0, rep.delta, enc.K, enc.E)
    assert rho <= inv.h and rep.delta + enc.K * rho <= inv.h
    assert inv.c * 1 <= res.M and res.exp_proof.value <= res.M
    assert inv.h * (1 + dt) * res.M - inv.h == res.eps_final < res.epsilon_target
    assert inv.epsilon(inv.c, ivp_.t0) >= rep.e0


class TestFindEnclosure:
    def test_constant_field(self):
        z = ivp("var x\nx' = 0\ninit x in [0, 1]\nhorizon [0, 1]")
        e = find_enclosure(z, picard_iterate(z, 0), mpq(1, 4))
        (lo, hi), = e.B
        # the hull is rounded outward by float evaluation, then to 32 bits
        assert mpq(-1, 4) - mpq(1, 1 << 30) <= lo <= mpq(-1, 4)
        assert mpq(5, 4) <= hi <= mpq(5, 4) + mpq(1, 1 << 30)
        assert e.rho == 0

    def test_exponential(self):
        x = ivp("var x\nx' = x\ninit x = 1\nhorizon [0, 5]")
        e = find_enclosure(x, picard_iterate(x, 28), 1)
        lo, hi = e.B[0]
        assert lo >= -1 and mpq(148) < hi <= 151

    def test_moore_greitzer(self, mg_problem):
        m = mg_problem.ivp
        e = find_enclosure(m, make_approximant(mg_problem.phi, m), mpq(1, 8))
        paper = Box([(mpq(781, 1000), mpq(1109, 1000)), (mpq(891, 1000), mpq(1199, 1000))])
        assert paper.inflate(mpq(1, 8)).contains_box(e.B)
        assert e.rho < e.margin

    def test_blowup_diverges(self):
        b = ivp("var x\nx' = x^2\ninit x = 1\nhorizon [0, 2]")
        r = find_enclosure(b, picard_iterate(b, 8))
        assert isinstance(r, Infeasible) and r.binding == "enclosure-divergence"

    def test_margin_positive(self):
        z = ivp("var x\nx' = 0\ninit x = 0\nhorizon [0, 1]")
        with pytest.raises(ValueError):
            find_enclosure(z, picard_iterate(z, 0), 0)


class TestSelectConstants:
    def test_exponential(self, exp_result, exp_problem):
        assert exp_result.k <= 30
        assert mpq(1, 10 ** 8) < exp_result.invariant.h < mpq(1, 10 ** 5)
        assert exp_result.eps_final <= mpq(1, 1000)
        check_constants(exp_result, exp_problem.ivp)

    def test_exact_approximant(self):
        z = ivp("var x\nx' = 0\ninit x in [0, 1]\nhorizon [0, 1]")
        fam = FixedFamily(make_approximant(PolyVec([parse_poly("x0", z.phi_vars)]), z))
        sel = select_constants(z, fam, mpq(1, 10 ** 9))
        assert sel.constants.k == 0
        assert sel.constants.M >= sel.constants.c

    def test_moore_greitzer(self, mg_result, mg_problem):
        assert mg_result.invariant.h <= mpq(4, 1000)
        check_constants(mg_result, mg_problem.ivp)
        # the published (c, M) = (1.1, 1.2) fails the exponential side condition
        assert isinstance(exp_upper(mpq(11, 10), 8, mpq(1, 50), mpq(6, 5)), Infeasible)

    def test_defect_size_cap(self, exp_problem):
        x = exp_problem.ivp
        sel = select_constants(x, PicardFamily(x), mpq(1, 1000), Options(max_defect_terms=0))
        assert isinstance(sel, Infeasible) and sel.binding == "budget"

    def test_bad_target(self, exp_problem):
        with pytest.raises(ValueError):
            select_constants(exp_problem.ivp, PicardFamily(exp_problem.ivp), 0)


class TestInvariant:
    def test_epsilon_at_start(self):
        x = ivp("var x\nx' = x\ninit x = 1\nhorizon [1/2, 5]")
        inv = build_invariant(mpq(1, 100), mpq(3, 2), 1, x, picard_iterate(x, 2))
        assert inv.epsilon(inv.c, x.t0) == mpq(1, 100) * mpq(1, 2)
        assert inv.epsilon(1, x.t0) == 0

    def test_epsilon_monotone_symbolically(self):
        x = ivp("var x\nx' = x\ninit x = 1\nhorizon [0, 5]")
        inv = build_invariant(mpq(3, 1000), mpq(9, 8), 1, x, picard_iterate(x, 2))
        e = inv.epsilon_poly()
        assert e.diff("t") == parse_poly("3/1000*g", ("g", "t"))
        assert e.diff("g") == parse_poly("3/1000*(1 + t)", ("g", "t"))

    def test_moore_greitzer_text(self, mg_problem):
        m = mg_problem.ivp
        inv = build_invariant(mpq(4, 1000), mpq(11, 10), 8, m, make_approximant(mg_problem.phi, m))
        assert inv.epsilon_text() == "1/250*((1 + t)*g - 1)"
        assert "C(u0, v0)" in inv.psi_text(m)


class TestProveErrorBound:
    def test_certificates_check(self, exp_result, mg_result):
        for r in (exp_result, mg_result):
            assert isinstance(check(r.certificate), Accept)

    def test_exponential_against_reference(self, exp_result, exp_problem):
        gap, _, n_t = reference_gap(exp_problem.ivp, exp_result.invariant.phi.phi)
        assert n_t >= 100 and gap <= float(exp_result.epsilon_target)

    def test_interval_init_against_reference(self):
        x = ivp("var x\nx' = x\ninit x in [1/2, 1]\nhorizon [0, 1]")
        r = prove_error_bound(x, PicardFamily(x), mpq(1, 1000))
        gap, n_init, n_t = reference_gap(x, r.invariant.phi.phi)
        assert n_init >= 100 and n_t >= 100
        assert gap <= 1e-3

    def test_moore_greitzer_against_reference(self, mg_result, mg_problem):
        gap, n_init, n_t = reference_gap(mg_problem.ivp, mg_problem.phi, n_init=230)
        assert n_init >= 100 and n_t >= 100
        assert gap <= 1 / 200

    def test_verbatim_moore_greitzer_is_not_an_approximant(self, problems_dir):
        # the published v component has its t and t^2 coefficients exchanged;
        # against the reference flow its error exceeds the claimed 1/200
        p = parse_problem((problems_dir / "moore_greitzer.ivp").read_text())
        gap, _, _ = reference_gap(p.ivp, p.phi, n_init=20, n_times=21)
        assert gap > 1 / 200
        r = prove_error_bound(p.ivp, FixedFamily(make_approximant(p.phi, p.ivp)), mpq(1, 200))
        assert isinstance(r, Infeasible)

    def test_monotone_in_target(self):
        x = ivp("var x\nx' = x\ninit x = 1\nhorizon [0, 2]")
        ks = [prove_error_bound(x, PicardFamily(x), mpq(1, 10 ** j)).k for j in (6, 4, 2, 1)]
        assert all(b <= a for a, b in zip(ks, ks[1:]))

    def test_blowup(self, problems_dir):
        b = ivp("var x\nx' = x^2\ninit x = 1\nhorizon [0, 2]")
        r = prove_error_bound(b, PicardFamily(b), mpq(1, 100), Options(max_k=8))
        assert isinstance(r, Infeasible) and r.binding == "enclosure-divergence"
