"""Billing meter over workflow traces.

Money is decimal so charges are exact: 1000 transitions at 0.000025 USD is
exactly 0.025 USD. Duration billing assumes one GB-slot per function (memory
tiers are out of scope) and bills exact milliseconds by default; vendors that
round up can be modeled with rounding_ms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal

from .engines.base import WorkflowResult

_GB = Decimal(1024 ** 3)
_MS_PER_S = Decimal(1000)


@dataclass
class PricingModel:
    per_transition_usd: Decimal = Decimal("0.000025")
    per_gb_second_usd: Decimal = Decimal("0.0000166667")
    storage_per_gb_month_usd: Decimal = Decimal("0.021")
    rounding_ms: int = 1  # bill in blocks of this many ms (1 = exact)


@dataclass
class BillingReport:
    transitions: int
    billed_ms: int
    history_stored_bytes: int
    transition_charge_usd: Decimal
    duration_charge_usd: Decimal
    storage_charge_usd: Decimal
    per_invocation_usd: dict[str, Decimal] = field(default_factory=dict)

    @property
    def total_usd(self) -> Decimal:
        return self.transition_charge_usd + self.duration_charge_usd + self.storage_charge_usd

    def to_dict(self) -> dict:
        return {
            "transitions": self.transitions,
            "billed_ms": self.billed_ms,
            "history_stored_bytes": self.history_stored_bytes,
            "transition_charge_usd": str(self.transition_charge_usd),
            "duration_charge_usd": str(self.duration_charge_usd),
            "storage_charge_usd": str(self.storage_charge_usd),
            "total_usd": str(self.total_usd),
        }


def compute_billing(result: WorkflowResult, pricing: PricingModel | None = None) -> BillingReport:
    """Meter one workflow result: transitions, billed duration, history storage."""
    pricing = pricing or PricingModel()
    transition_charge = pricing.per_transition_usd * result.transitions

    per_invocation: dict[str, Decimal] = {}
    billed_ms = 0
    duration_charge = Decimal(0)
    for record in result.trace:
        ms = record.billed_ms
        if pricing.rounding_ms > 1 and ms:
            blocks = -(-ms // pricing.rounding_ms)  # ceil
            ms = blocks * pricing.rounding_ms
        billed_ms += ms
        charge = pricing.per_gb_second_usd * Decimal(ms) / _MS_PER_S
        per_invocation[record.id] = charge
        duration_charge += charge

    stored = sum(ev.stored_bytes for ev in result.all_history_events())
    storage_charge = pricing.storage_per_gb_month_usd * Decimal(stored) / _GB

    return BillingReport(
        transitions=result.transitions,
        billed_ms=billed_ms,
        history_stored_bytes=stored,
        transition_charge_usd=transition_charge,
        duration_charge_usd=duration_charge,
        storage_charge_usd=storage_charge,
        per_invocation_usd=per_invocation,
    )
