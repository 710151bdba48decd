"""Certified error bounds and reachability proofs for polynomial initial value problems."""

__version__ = "0.1.0"
