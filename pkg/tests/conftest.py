import sys
from pathlib import Path

import pytest
from gmpy2 import mpq

from ivpcert.core import parse_problem
from ivpcert.core.box import Box
from ivpcert.invariant_engine import Options
from ivpcert.provers import (LivenessGoal, SafetyGoal, prove_bounded_safety, prove_existence,
                             prove_liveness, prove_problem, step_existence)

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"


def load(name: str):
    return parse_problem((PROBLEMS / name).read_text())


@pytest.fixture(scope="session")
def problems_dir():
    return PROBLEMS


@pytest.fixture(scope="session")
def exp_problem():
    return load("exponential.ivp")


@pytest.fixture(scope="session")
def exp_result(exp_problem):
    return prove_problem(exp_problem)


@pytest.fixture(scope="session")
def mg_problem():
    return load("moore_greitzer_corrected.ivp")


@pytest.fixture(scope="session")
def mg_result(mg_problem):
    return prove_problem(mg_problem)


MG_SAFETY = """
var u, v
u' = -v - 1.5*u^2 - 0.5*u^3 - 0.5
v' = 3*u - v
init u >= 0.9, v >= 0.9, u + v <= 2
horizon [0, 1/50]
goal safety 0.781 < u < 1.109 and 0.891 < v < 1.199 and u + v < 2.25
"""


@pytest.fixture(scope="session")
def mg_safety_problem():
    return parse_problem(MG_SAFETY)


@pytest.fixture(scope="session")
def mg_safety(mg_safety_problem):
    p = mg_safety_problem
    return prove_bounded_safety(SafetyGoal(p.ivp, p.goal.region), problem=p)


@pytest.fixture(scope="session")
def clock_liveness():
    p = parse_problem("var x\nx' = 1\ninit x = 0\nhorizon [0, 1]\ngoal liveness x > 1/2\n")
    return prove_liveness(LivenessGoal(p.ivp, p.goal.region), problem=p)


@pytest.fixture(scope="session")
def exp_existence():
    p = parse_problem("var x\nx' = x\ninit x = 1\nhorizon [0, 5]\ngoal exists-until 5\n")
    return prove_existence(p.ivp, problem=p)


@pytest.fixture(scope="session")
def short_steps():
    """A 40-step chain for x' = x^2 + 1 from x = 1; small enough to mutate repeatedly."""
    p = load("tangent_steps.ivp")
    return step_existence(p.ivp.f, Box([(mpq(1), mpq(1))]), alpha=mpq(1, 100), N=40)


@pytest.fixture(scope="session")
def fast_opts():
    return Options(budget_nodes=20_000, max_k=16, max_n=8)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, when that suite ran."""
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.OUTCOMES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in mod.report_lines():
        terminalreporter.write_line(line)
