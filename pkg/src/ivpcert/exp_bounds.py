"""Certified upper bounds on e^{Kt} by Taylor polynomials with a Darboux margin.

theta_n(t) = sum_{i<=n} (Kt)^i / i! + M t^n / n!  with  M = K^{n+1} T / (n - KT)

satisfies theta_n' - K theta_n >= 0 on [0, T] whenever n > KT, and
theta_n(0) = 1, so theta_n(t) >= e^{Kt} there.  The Darboux inequality is
decided exactly by a Sturm sequence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from gmpy2 import mpq

from .arith_oracle.sturm import SturmRefutation, SturmWitness, sturm_nonneg
from .core.poly import Poly
from .core.rational import q, round_up
from .core.results import Infeasible


class PreconditionError(ValueError):
    """The requested degree does not exceed K*T."""


@dataclass(frozen=True)
class TaylorUpperBound:
    K: mpq
    T: mpq
    n: int
    theta: Poly  # univariate in t
    slack_coeff: mpq
    darboux: SturmWitness

    def value(self, t) -> mpq:
        return self.theta.evaluate([q(t)])


def theta_coeffs(K, T, n: int) -> tuple[list, mpq]:
    """Dense coefficients of theta_n and the slack coefficient M."""
    K, T = q(K), q(T)
    if n <= K * T:
        raise PreconditionError(f"degree n={n} must exceed K*T={K * T}")
    M = K ** (n + 1) * T / (n - K * T)
    coeffs = []
    term = mpq(1)
    for i in range(n + 1):
        if i:
            term = term * K / i
        coeffs.append(term)
    fact = mpq(1)
    for i in range(2, n + 1):
        fact *= i
    coeffs[n] += M / fact
    return coeffs, M


def darboux_coeffs(coeffs: list, K) -> list:
    """theta' - K theta as a dense list."""
    K = q(K)
    out = [-K * c for c in coeffs]
    for i in range(1, len(coeffs)):
        out[i - 1] += i * coeffs[i]
    return out


def build_theta(K, T, n: int) -> TaylorUpperBound:
    """theta_n on [0, T] with its Sturm-certified Darboux inequality."""
    K, T = q(K), q(T)
    if K <= 0 or T <= 0:
        raise PreconditionError("K and T must be positive")
    coeffs, M = theta_coeffs(K, T, n)
    w = sturm_nonneg(darboux_coeffs(coeffs, K), mpq(0), T)
    if isinstance(w, SturmRefutation):
        raise AssertionError(f"Darboux inequality fails at t={w.point} for K={K}, T={T}, n={n}")
    return TaylorUpperBound(K, T, n, Poly.from_univariate(coeffs, "t"), M, w)


def theta_at(K, T, n: int, t) -> mpq:
    """theta_n(t) without building the Sturm witness."""
    K, T, t = q(K), q(T), q(t)
    coeffs, _ = theta_coeffs(K, T, n)
    acc = mpq(0)
    for c in reversed(coeffs):
        acc = acc * t + c
    return acc


def exp_lower(x, terms: int) -> mpq:
    """Partial sum of the exponential series; a lower bound on e^x for x >= 0."""
    x = q(x)
    acc, term = mpq(1), mpq(1)
    for i in range(1, terms + 1):
        term = term * x / i
        acc += term
    return acc


@dataclass(frozen=True)
class ExpUpperProof:
    """c * e^{K dt} <= c * theta_n(dt) = value <= target."""

    c: mpq
    K: mpq
    dt: mpq
    target: mpq
    n: int
    theta: TaylorUpperBound
    value: mpq


DEFAULT_MAX_N = 4096


def exp_upper(c, K, dt, M_target, *, max_n: int = DEFAULT_MAX_N) -> Union[ExpUpperProof, Infeasible]:
    """Prove c * e^{K dt} <= M_target through some theta_n, or show it false.

    theta_n has nonnegative coefficients, so its maximum on [0, dt] is
    theta_n(dt).
    """
    c, K, dt, target = q(c), q(K), q(dt), q(M_target)
    if c < 1:
        raise PreconditionError("c must be at least 1")
    if K <= 0 or dt <= 0:
        raise PreconditionError("K and dt must be positive")
    x = K * dt
    n0 = int(x) + 1
    for n in range(n0, max_n + 1):
        lo = c * exp_lower(x, n)
        if lo > target:
            return Infeasible(f"c*e^(K*dt) >= {lo} exceeds {target}", "exp-bound",
                              {"lower_bound": lo, "target": target, "terms": n})
        v = c * theta_at(K, dt, n, dt)
        if v <= target:
            th = build_theta(K, dt, n)
            return ExpUpperProof(c, K, dt, target, n, th, v)
    return Infeasible(f"no theta_n with n <= {max_n} separates c*e^(K*dt) from {target}", "budget",
                      {"max_n": max_n, "target": target})


def exp_rational_bound(K, dt, tol) -> mpq:
    """E with e^{K dt} <= E <= e^{K dt} (1 + tol)."""
    return exp_rational_proof(K, dt, tol).value


def exp_rational_proof(K, dt, tol, *, max_n: int = DEFAULT_MAX_N) -> ExpUpperProof:
    """As exp_rational_bound, returning the theta_n proof object (c = 1)."""
    K, dt, tol = q(K), q(dt), q(tol)
    if tol <= 0:
        raise PreconditionError("tol must be positive")
    if K < 0 or dt < 0:
        raise PreconditionError("K and dt must be nonnegative")
    if K * dt == 0:
        return ExpUpperProof(mpq(1), K, dt, mpq(1), 0, None, mpq(1))
    x = K * dt
    for n in range(int(x) + 1, max_n + 1):
        v = theta_at(K, dt, n, dt)
        lo = exp_lower(x, n)
        if v <= lo * (1 + tol / 2):
            # a dyadic upper rounding keeps the certificate small
            bits = 8
            while round_up(v, bits) > lo * (1 + tol):
                bits += 8
            E = round_up(v, bits)
            return ExpUpperProof(mpq(1), K, dt, E, n, build_theta(K, dt, n), v)
    raise ArithmeticError(f"theta_n did not converge by n={max_n}")


@dataclass(frozen=True)
class ExpConditionReport:
    """Outcome of testing c * e^{K dt} < M against series bounds."""

    c: mpq
    K: mpq
    dt: mpq
    M: mpq
    holds: bool
    lower: mpq  # c times a partial sum of the series
    upper: mpq  # c times a theta_n value

    def describe(self) -> str:
        rel = "<" if self.holds else ">"
        return (f"c*e^(K*dt) with c={self.c}, K={self.K}, dt={self.dt}: "
                f"{float(self.lower):.6g} <= value <= {float(self.upper):.6g}, so value {rel} M={self.M}")


def exp_condition_report(c, K, dt, M, tol=mpq(1, 10 ** 9)) -> ExpConditionReport:
    """Decide c * e^{K dt} < M (the bounded-exponential side condition)."""
    c, K, dt, M = q(c), q(K), q(dt), q(M)
    p = exp_rational_proof(K, dt, tol)
    lower = c * exp_lower(K * dt, max(p.n, 1) + 40)
    upper = c * p.value
    if upper < M:
        holds = True
    elif lower >= M:
        holds = False
    else:
        raise ArithmeticError("tolerance too coarse to decide the exponential condition")
    return ExpConditionReport(c, K, dt, M, holds, lower, upper)
