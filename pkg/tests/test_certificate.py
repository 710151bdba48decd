import json
import random

import pytest
from gmpy2 import mpq

from ivpcert.certificate import (Accept, Certificate, CertificateError, CertificateParseError, Reject,
                                 RuleApp, UnsupportedCertificate, check, emit, export_external, parse)
from ivpcert.certificate.encode import dec_q, enc_q
from ivpcert.invariant_engine import Options
from ivpcert.provers import prove_problem

from mutate import from_doc, obligations, random_mutation, to_doc


@pytest.fixture(scope="module")
def all_certs(exp_result, mg_result, mg_safety, clock_liveness, exp_existence, short_steps):
    return {"error-bound": exp_result.certificate, "mg": mg_result.certificate,
            "safety": mg_safety.certificate, "liveness": clock_liveness.certificate,
            "existence": exp_existence.certificate, "step-existence": short_steps.certificate}


class TestEmit:
    def test_twice_identical(self, mg_result):
        assert emit(mg_result) == emit(mg_result.certificate)

    def test_round_trip_fixpoint(self, all_certs):
        for name, c in all_certs.items():
            b = emit(c)
            assert emit(parse(b)) == b, name

    def test_reproving_is_deterministic(self, mg_problem, mg_result):
        again = prove_problem(mg_problem, Options(threads=4))
        assert emit(again) == emit(mg_result)

    def test_rule_names(self, mg_result):
        rules = parse(emit(mg_result)).root.rules()
        assert {"dC", "LDA", "DGi", "dW", "Enc", "dInv"} <= rules

    def test_no_floats(self, all_certs):
        def walk(x):
            if isinstance(x, float):
                raise AssertionError(f"float {x} in certificate")
            if isinstance(x, dict):
                for v in x.values():
                    walk(v)
            if isinstance(x, list):
                for v in x:
                    walk(v)
        for c in all_certs.values():
            walk(json.loads(emit(c)))

    def test_nothing_to_emit(self):
        with pytest.raises(TypeError):
            emit(object())


class TestParse:
    def test_truncated(self, exp_result):
        b = emit(exp_result)
        with pytest.raises(CertificateParseError):
            parse(b[: len(b) // 2])

    def test_not_utf8(self):
        with pytest.raises(CertificateParseError):
            parse(b"\xff\xfe")

    def test_unknown_rule(self, exp_result):
        doc = to_doc(exp_result.certificate)
        doc["root"]["rule"] = "cut"
        with pytest.raises(CertificateError):
            from_doc(doc)

    def test_unknown_obligation(self, exp_result):
        doc = to_doc(exp_result.certificate)
        _, leaf = obligations(doc)[0]
        leaf["obligation"] = "trust_me"
        with pytest.raises(CertificateError):
            from_doc(doc)

    def test_vocabulary_enforced(self):
        with pytest.raises(CertificateError):
            RuleApp("magic")


class TestCheck:
    def test_pipeline_certificates_accept(self, all_certs):
        for name, c in all_certs.items():
            r = check(c)
            assert isinstance(r, Accept), (name, r)
            assert isinstance(check(parse(emit(c))), Accept)

    def test_tightened_leaf_rejected_there(self, mg_result):
        doc = to_doc(mg_result.certificate)
        path, leaf = next((p, n) for p, n in obligations(doc)
                          if n["obligation"] == "poly_upper" and n["payload"]["tree"][0] == "S")
        tree = leaf["payload"]["tree"]
        while tree[0] == "S":
            tree = tree[3]
        tree[2] = enc_q(dec_q(tree[1]) - 1)
        r = check(from_doc(doc))
        assert isinstance(r, Reject) and r.path == path
        assert "exceeds the stored" in r.reason

    def test_step_gap_rejected(self, short_steps):
        doc = to_doc(short_steps.certificate)
        kids = doc["root"]["children"]
        kids[1]["bindings"]["t_start"] = enc_q(dec_q(kids[0]["bindings"]["t_end"]) + mpq(1, 4))
        r = check(from_doc(doc))
        assert isinstance(r, Reject) and r.reason.startswith("structure")
        assert "not at the previous end" in r.reason

    def test_step_duration_inflated(self, short_steps):
        doc = to_doc(short_steps.certificate)
        doc["root"]["bindings"]["duration"] = enc_q(dec_q(doc["root"]["bindings"]["duration"]) * 2)
        assert isinstance(check(from_doc(doc)), Reject)

    def test_problem_tamper(self, exp_result):
        doc = to_doc(exp_result.certificate)
        doc["header"]["problem"] = doc["header"]["problem"].replace("horizon [0, 5]", "horizon [0, 6]")
        r = check(from_doc(doc))
        assert isinstance(r, Reject) and r.node == "header"

    def test_final_bound_tamper(self, exp_result):
        doc = to_doc(exp_result.certificate)
        doc["root"]["bindings"]["target"] = "1/10000"
        assert isinstance(check(from_doc(doc)), Reject)

    def test_wrong_problem(self, exp_result, mg_problem):
        assert isinstance(check(exp_result.certificate, mg_problem), Reject)

    def test_sampled_mutations_rejected(self, all_certs):
        rng = random.Random(11)
        for name, c in all_certs.items():
            done = 0
            while done < 8:
                m = random_mutation(c, rng)
                if m is None:
                    continue
                done += 1
                assert isinstance(check(m[0]), Reject), (name, m[2])

    def test_reject_describe(self, mg_result):
        doc = to_doc(mg_result.certificate)
        doc["root"]["bindings"]["eps_final"] = "0"
        r = check(from_doc(doc))
        assert not r and r.describe().startswith("rejected at")


class TestExport:
    def test_exponential(self, exp_result):
        text = export_external(exp_result.certificate)
        assert "x' = x" in text and "t' = 1" in text and "g' = 1*g" in text
        assert "[{" in text and "@invariant(" in text
        assert "(x - (" in text and "< (1/1000)^2" in text
        assert "theta_n(s)" in text

    def test_moore_greitzer_epsilon(self, mg_result):
        text = export_external(mg_result.certificate)
        h = enc_q(mg_result.invariant.h)
        assert f"epsilon(g, t) = {h}*((1 + t)*g - 1)" in text
        assert "u0 + v0 <= 2" in text or "-u0 - v0 + 2 >= 0" in text

    def test_safety(self, mg_safety):
        text = export_external(mg_safety.certificate)
        assert "u - 781/1000 > 0" in text

    def test_step_existence_unsupported(self, short_steps):
        with pytest.raises(UnsupportedCertificate):
            export_external(short_steps.certificate)
