"""Acceptance suite: one test group per acceptance criterion.

Every criterion records a PASS or FAIL line; the lines are printed in the
terminal summary (see conftest.py) whether or not the run is verbose.
"""

import io
import json
import math
import random
import time
from contextlib import contextmanager
from fractions import Fraction

import pytest
from gmpy2 import mpq

from ivpcert.arith_oracle.bnb import Refuted, SubdivisionWitness, prove_upper
from ivpcert.arith_oracle.sturm import check_sturm
from ivpcert.certificate import Accept, Reject, check, emit, parse
from ivpcert.cli import EXIT_INFEASIBLE, EXIT_OK, main
from ivpcert.core import Box, Infeasible, Poly, parse_problem
from ivpcert.exp_bounds import (ExpUpperProof, PreconditionError, build_theta, darboux_coeffs,
                                exp_condition_report, exp_upper, theta_coeffs)
from ivpcert.provers import ProofResult, prove_existence, prove_problem, step_existence

from corpus import confirmed, make_corpus
from mutate import random_mutation

TITLES = {
    1: "exponential worked example (k <= 30, bound <= 1e-3, checks, <= 60 s)",
    2: "Moore-Greitzer reproduction with the published degree-3 approximant",
    3: "exponential bounds (e^5 < 300, not < 148, Darboux witnesses for n in 6..40)",
    4: "step existence for x' = x^2 + 1 (0.6 <= duration <= pi/4, never past blow-up)",
    5: "soundness sweep over randomized IVPs (0 unsound, >= 80% of robust-true proved)",
    6: "certificate integrity (100 falsifying mutations per kind rejected, round trips)",
    7: "oracle never accepts a false bound (10^4 randomized prove_upper instances)",
    8: "blow-up detection (x' = x^2, exists-until 2 -> enclosure-divergence)",
}
OUTCOMES: dict = {}
NOTES: dict = {}


def note(n: int, text: str) -> None:
    NOTES.setdefault(n, []).append(text)


@contextmanager
def criterion(n: int, part: str):
    """Record the outcome of one part of criterion n, re-raising failures."""
    try:
        yield
    except BaseException as e:
        OUTCOMES.setdefault(n, []).append((part, False, str(e).splitlines()[0][:160] if str(e) else type(e).__name__))
        raise
    OUTCOMES.setdefault(n, []).append((part, True, ""))


def report_lines() -> list:
    lines = []
    for n, title in TITLES.items():
        parts = OUTCOMES.get(n)
        if not parts:
            lines.append(f"criterion {n}: NOT RUN  {title}")
            continue
        ok = all(p[1] for p in parts)
        lines.append(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}")
        for part, good, why in parts:
            if not good:
                lines.append(f"    failed part '{part}': {why}")
        lines.extend(f"    {t}" for t in NOTES.get(n, ()))
    return lines


def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


def summary_of(text: str) -> dict:
    return dict(line.split(": ", 1) for line in text.splitlines() if ": " in line)


def approx(value: str) -> float:
    return float(Fraction(value.split()[0]))


def exp_series(x: Fraction, terms: int = 200) -> tuple:
    """Bracket e^x for x >= 0 by a truncated series plus a geometric tail."""
    s, t = Fraction(0), Fraction(1)
    for i in range(terms):
        s += t
        t = t * x / (i + 1)
    tail = t / (1 - x / (terms + 1))
    return s, s + tail


# 1 ----------------------------------------------------------------------------

class TestCriterion1Exponential:
    def test_prove_and_check(self, tmp_path, problems_dir):
        with criterion(1, "prove and check through the CLI"):
            cert = tmp_path / "exp.cert"
            start = time.perf_counter()
            code, out, err = run_cli("prove", problems_dir / "exponential.ivp", "--out", cert)
            elapsed = time.perf_counter() - start
            assert code == EXIT_OK, err
            s = summary_of(out)
            assert int(s["k"]) <= 30, s["k"]
            assert approx(s["bound"]) <= 1e-3, s["bound"]
            code, out, err = run_cli("check", cert)
            assert code == EXIT_OK and out.startswith("accepted"), err
            assert elapsed <= 60, f"prove took {elapsed:.1f} s"
            note(1, f"k = {s['k']}, bound ~ {approx(s['bound']):.3g}, prove {elapsed:.2f} s")


# 2 ----------------------------------------------------------------------------

class TestCriterion2MooreGreitzer:
    def test_published_approximant_verbatim(self, tmp_path, problems_dir):
        # The published v component cannot meet the 1/200 target (its t and t^2
        # coefficients are exchanged), so no sound prover can succeed here.
        with criterion(2, "verbatim approximant proves error-bound 5e-3 with h <= 4e-3 scale"):
            cert = tmp_path / "mg.cert"
            start = time.perf_counter()
            code, out, err = run_cli("prove", problems_dir / "moore_greitzer.ivp", "--out", cert)
            elapsed = time.perf_counter() - start
            assert code == EXIT_OK, json.loads(err.strip().splitlines()[-1])["message"]
            s = summary_of(out)
            assert approx(s["h"]) <= 8e-3, s["h"]
            assert run_cli("check", cert)[0] == EXIT_OK
            assert elapsed <= 300

    def test_published_constants_reported(self):
        with criterion(2, "(c, M) = (1.1, 1.2) reported as failing the exponential side condition"):
            lo, _ = exp_series(Fraction(4, 25))
            assert Fraction(11, 10) * lo > Fraction(6, 5)
            code, _, err = run_cli("exp-check", "1.1", "8", "1/50", "1.2")
            assert code == EXIT_INFEASIBLE
            d = json.loads(err.strip().splitlines()[-1])
            assert abs(float(d["lower"]) - 1.2909) < 1e-4
            note(2, f"1.1 * e^0.16 >= {float(d['lower']):.5f} > 1.2 (published constants rejected)")
            rep = exp_condition_report(mpq(11, 10), 8, mpq(1, 50), mpq(6, 5))
            assert not rep.holds

    def test_corrected_approximant(self, tmp_path, problems_dir):
        with criterion(2, "corrected approximant proves the same goal"):
            cert = tmp_path / "mgc.cert"
            start = time.perf_counter()
            code, out, err = run_cli("prove", problems_dir / "moore_greitzer_corrected.ivp", "--out", cert)
            elapsed = time.perf_counter() - start
            assert code == EXIT_OK, err
            s = summary_of(out)
            assert approx(s["h"]) <= 4e-3 and approx(s["bound"]) < 5e-3
            assert run_cli("check", cert)[0] == EXIT_OK
            note(2, f"corrected approximant: h ~ {approx(s['h']):.3g}, bound ~ {approx(s['bound']):.3g}")
            assert elapsed <= 300


# 3 ----------------------------------------------------------------------------

class TestCriterion3ExpBounds:
    def test_e5_below_300(self):
        with criterion(3, "exp_upper(1, 1, 5, 300) succeeds"):
            r = exp_upper(1, 1, 5, 300)
            assert isinstance(r, ExpUpperProof) and r.value <= 300

    def test_e5_not_below_148(self):
        with criterion(3, "exp_upper(1, 1, 5, 148) is infeasible"):
            lo, _ = exp_series(Fraction(5))
            assert lo > 148
            assert isinstance(exp_upper(1, 1, 5, 148), Infeasible)

    def test_darboux_witnesses(self):
        with criterion(3, "n in 6..40 give Sturm-verified witnesses, n <= 5 rejected"):
            for n in range(6, 41):
                th = build_theta(1, 5, n)
                coeffs, _ = theta_coeffs(1, 5, n)
                assert check_sturm(th.darboux, darboux_coeffs(coeffs, 1)) is None, n
            for n in range(0, 6):
                with pytest.raises(PreconditionError):
                    build_theta(1, 5, n)


# 4 ----------------------------------------------------------------------------

class TestCriterion4StepExistence:
    def test_tangent_from_one(self, problems_dir):
        with criterion(4, "x0 = 1, eps = 1/10"):
            p = parse_problem((problems_dir / "tangent_steps.ivp").read_text())
            r = prove_problem(p)
            assert isinstance(check(r.certificate), Accept)
            assert mpq(6, 10) <= r.duration <= mpq(7854, 10000), float(r.duration)
            note(4, f"duration from x0 = 1: {float(r.duration):.6f}")
            assert float(r.duration) < math.pi / 4

    def test_never_past_blowup(self, problems_dir):
        with criterion(4, "20 rational x0 in [1/2, 4] stay below pi/2 - arctan(x0)"):
            f = parse_problem((problems_dir / "tangent_steps.ivp").read_text()).ivp.f
            for i in range(20):
                x0 = mpq(1, 2) + mpq(7, 2) * mpq(i, 19)
                r = step_existence(f, Box([(x0, x0)]), eps=mpq(1, 10))
                blow = math.pi / 2 - math.atan(float(x0))
                assert float(r.duration) <= blow, (x0, float(r.duration), blow)


# 5 ----------------------------------------------------------------------------

CORPUS_SEED, CORPUS_SIZE = 7, 30


class TestCriterion5Sweep:
    def test_sweep(self):
        with criterion(5, "randomized corpus"):
            corpus = make_corpus(CORPUS_SEED, CORPUS_SIZE)
            assert len(corpus) >= 25
            robust_true = [c for c in corpus if c.truth and c.robust]
            assert len(robust_true) >= 10
            unsound, proved_robust = [], 0
            for inst in corpus:
                r = prove_problem(parse_problem(inst.text))
                if isinstance(r, ProofResult):
                    assert isinstance(check(r.certificate), Accept), inst.name
                    if not inst.truth or not confirmed(inst):
                        unsound.append(inst.name)
                    elif inst.robust:
                        proved_robust += 1
            assert not unsound, f"unsound accepts: {unsound}"
            rate = proved_robust / len(robust_true)
            note(5, f"{len(corpus)} instances, {proved_robust}/{len(robust_true)} robust-true proved, "
                    f"{len(unsound)} unsound accepts")
            assert rate >= 0.8, f"{proved_robust}/{len(robust_true)} robust-true instances proved"


# 6 ----------------------------------------------------------------------------

TRIALS = 100


@pytest.fixture(scope="module")
def kinds(exp_result, mg_safety, clock_liveness, exp_existence, short_steps):
    return {"error-bound": exp_result.certificate, "safety": mg_safety.certificate,
            "liveness": clock_liveness.certificate, "existence": exp_existence.certificate,
            "step-existence": short_steps.certificate}


KINDS = ("error-bound", "safety", "liveness", "existence", "step-existence")


class TestCriterion6Integrity:
    @pytest.mark.parametrize("kind", KINDS)
    def test_mutations_rejected(self, kinds, kind):
        with criterion(6, f"{TRIALS} mutations of a {kind} certificate"):
            rng = random.Random(f"mutate-{kind}")
            cert = kinds[kind]
            applied, accepted = 0, []
            for _ in range(20 * TRIALS):
                if applied == TRIALS:
                    break
                m = random_mutation(cert, rng)
                if m is None:
                    continue
                bad, _, what = m
                applied += 1
                if not isinstance(check(bad), Reject):
                    accepted.append(what)
            assert applied == TRIALS, f"only {applied} mutations applied"
            assert not accepted, accepted[:3]

    @pytest.mark.parametrize("kind", KINDS)
    def test_round_trip(self, kinds, kind):
        with criterion(6, f"{kind} prove-check-emit-parse-check round trip"):
            cert = kinds[kind]
            assert isinstance(check(cert), Accept)
            data = emit(cert)
            again = parse(data)
            assert isinstance(check(again), Accept)
            assert emit(again) == data

    def test_cli_round_trip(self, tmp_path, problems_dir):
        with criterion(6, "CLI files round-trip byte-identically"):
            for name in ("exponential.ivp", "moore_greitzer_corrected.ivp", "blowup.ivp"):
                cert = tmp_path / (name + ".cert")
                code, _, _ = run_cli("prove", problems_dir / name, "--out", cert)
                if code != EXIT_OK:
                    assert name == "blowup.ivp"
                    continue
                data = cert.read_bytes()
                assert run_cli("check", cert)[0] == EXIT_OK
                assert emit(parse(data)) == data


# 7 ----------------------------------------------------------------------------

INSTANCES = 10_000


def random_poly(rng: random.Random, names) -> Poly:
    terms = {}
    for _ in range(rng.randint(1, 6)):
        e = tuple(rng.randint(0, 4 if len(names) == 1 else 3) for _ in names)
        terms[e] = mpq(rng.randint(-9, 9), rng.choice([1, 2, 4, 8]))
    return Poly(names, terms)


def random_box(rng: random.Random, dim: int) -> Box:
    ivs = []
    for _ in range(dim):
        lo = mpq(rng.randint(-16, 16), 8)
        ivs.append((lo, lo + mpq(rng.randint(1, 16), 8)))
    return Box(ivs)


class TestCriterion7NeverAcceptFalse:
    def test_random_bounds(self):
        with criterion(7, f"{INSTANCES} instances"):
            rng = random.Random(20261016)
            accepted, refuted = [], 0
            for i in range(INSTANCES):
                names = ("x",) if rng.random() < 0.5 else ("x", "y")
                p = random_poly(rng, names)
                box = random_box(rng, len(names))
                axes = [[lo + (hi - lo) * mpq(j, 8) for j in range(9)] for lo, hi in box]
                pts = [[a] for a in axes[0]] if len(axes) == 1 else [[a, b] for a in axes[0] for b in axes[1]]
                top = max(p.evaluate(x) for x in pts)
                bound = top - mpq(rng.randint(1, 1000), 1000) * max(abs(top), mpq(1, 64))
                r = prove_upper(p, box, bound, budget=300)
                if isinstance(r, SubdivisionWitness):
                    accepted.append((str(p), box, bound))
                elif isinstance(r, Refuted):
                    assert r.value > bound and p.evaluate(list(r.point)) == r.value
                    refuted += 1
            assert not accepted, accepted[:3]
            assert refuted >= INSTANCES // 2
            note(7, f"0 accepts, {refuted} refuted with a point, {INSTANCES - refuted} undecided")


# 8 ----------------------------------------------------------------------------

class TestCriterion8Blowup:
    def test_cli(self, problems_dir, tmp_path):
        with criterion(8, "CLI reports enclosure-divergence"):
            code, _, err = run_cli("prove", problems_dir / "blowup.ivp", "--out", tmp_path / "b.cert")
            d = json.loads(err.strip().splitlines()[-1])
            assert code == EXIT_INFEASIBLE and d["binding"] == "enclosure-divergence"

    def test_prover(self):
        with criterion(8, "prove_existence returns Infeasible"):
            p = parse_problem("var x\nx' = x^2\ninit x = 1\ngoal exists-until 2\n")
            r = prove_existence(p.ivp.with_horizon(p.goal.until), problem=p)
            assert isinstance(r, Infeasible) and r.binding == "enclosure-divergence"
            # below the closed-form blow-up time 1 the same prover succeeds
            early = prove_existence(p.ivp.with_horizon(mpq(1, 4)))
            assert isinstance(early, ProofResult)
