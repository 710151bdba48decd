"""Certificate data model.

A certificate is a header plus a tree of rule applications.  Rule names
come from a fixed vocabulary; every leaf is an arithmetic obligation that
carries its own witness.  All payloads are stored in their JSON form
(rationals as "p/q" strings, polynomials as sorted term lists), so a
certificate built by a prover and one parsed from disk are the same value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

VOCABULARY = (
    "dInv", "dC", "dW", "DGi", "DG", "Enc", "K", "V", "LDA",
    "StepDual→", "StepDual←", "StepEx", "StepExt", "IVT",
    "BDG⟨·⟩", "DR⟨·⟩", "K⟨·⟩", "⟨&⟩",
)

OBLIGATION_KINDS = ("poly_upper", "poly_lower", "region_containment", "sturm_nonneg",
                    "exact_identity")

CERT_KINDS = ("error-bound", "safety", "liveness", "existence", "step-existence")

FORMAT = "ivpcert-certificate/1"


class CertificateError(ValueError):
    """Malformed certificate structure."""


@dataclass(frozen=True)
class ArithObligation:
    kind: str
    payload: dict
    label: str = ""

    def __post_init__(self):
        if self.kind not in OBLIGATION_KINDS:
            raise CertificateError(f"unknown obligation kind {self.kind!r}")


@dataclass(frozen=True)
class RuleApp:
    rule: str
    bindings: dict = field(default_factory=dict)
    children: tuple = ()

    def __post_init__(self):
        if self.rule not in VOCABULARY:
            raise CertificateError(f"rule {self.rule!r} is not in the vocabulary")

    def walk(self):
        """Pre-order (path, node) pairs; paths index children from the root."""
        stack = [((), self)]
        while stack:
            path, node = stack.pop()
            yield path, node
            if isinstance(node, RuleApp):
                for i in reversed(range(len(node.children))):
                    stack.append((path + (i,), node.children[i]))

    def rules(self) -> set:
        return {n.rule for _, n in self.walk() if isinstance(n, RuleApp)}

    def leaves(self) -> list:
        return [n for _, n in self.walk() if isinstance(n, ArithObligation)]


Node = Union[RuleApp, ArithObligation]


@dataclass(frozen=True)
class Certificate:
    header: dict
    root: RuleApp

    @property
    def kind(self) -> str:
        return self.header.get("kind", "")


CITATIONS = {
    "error-bound": [
        "continuous dependence of flows on initial data with an exponential ghost g' = Kg "
        "(Gronwall-type differential invariant over a bounded enclosure)",
        "Taylor upper bounds on the exponential with a Darboux inequality",
        "completeness of differential invariants for real-arithmetic invariants",
    ],
    "safety": [
        "bounded open safety from a certified approximant whose padded image lies in the region",
    ],
    "liveness": [
        "open liveness from per-region witness times on a certified approximant",
        "existence of the flow on the horizon",
    ],
    "existence": [
        "existence on a compact horizon by duality with bounded ball safety",
    ],
    "step-existence": [
        "Picard-Lindelof step existence: duration R/M inside a radius-R ball",
        "concatenation of abutting existence steps",
    ],
}
