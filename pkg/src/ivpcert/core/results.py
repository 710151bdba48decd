"""Negative outcomes shared by the provers."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Infeasible:
    """A search ended without a proof.

    ``binding`` names the constraint that could not be met (for example
    ``"exp-bound"``, ``"enclosure-divergence"``, ``"budget"``) and
    ``diagnostics`` carries plain values for reporting.
    """

    reason: str
    binding: str = "budget"
    diagnostics: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return False
