"""Operation and normalization-event counters."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

KINDS = (
    "muls",
    "adds",
    "macs",
    "syncs_exact",
    "syncs_lossy",
    "normalizations",
    "true_triggers",
    "reconstructions",
    "interval_evals",
    "coeff_charges",
)


@dataclass
class Counters:
    """Per-run tallies. ``record`` bumps a field in place; ``merge`` builds a new value.

    ``true_triggers`` counts normalization events whose reconstructed
    magnitude really was at or above the threshold (the rest fired only
    because the tracked bound overshoots after cancellation).
    ``coeff_charges`` counts uses of a non-dyadic constant whose
    representation error is charged to the error budget.
    """

    muls: int = 0
    adds: int = 0
    macs: int = 0
    syncs_exact: int = 0
    syncs_lossy: int = 0
    normalizations: int = 0
    true_triggers: int = 0
    reconstructions: int = 0
    interval_evals: int = 0
    coeff_charges: int = 0

    def record(self, kind: str, n: int = 1) -> "Counters":
        if kind not in KINDS:
            raise KeyError(kind)
        if n < 0:
            raise ValueError("counters are monotone")
        setattr(self, kind, getattr(self, kind) + n)
        return self

    def merge(self, other: "Counters") -> "Counters":
        return Counters(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    def total_ops(self) -> int:
        # a MAC is a multiply plus an add
        return self.muls + self.adds + 2 * self.macs

    def as_dict(self) -> dict:
        return asdict(self)


def record(counters: Counters | None, kind: str, n: int = 1) -> Counters | None:
    if counters is not None:
        counters.record(kind, n)
    return counters


def amortization_report(c: Counters) -> dict:
    ops = c.total_ops()
    return {
        "ops": ops,
        "normalizations": c.normalizations,
        "no_events": c.normalizations == 0,
        "ops_per_normalization": ops / max(1, c.normalizations),
        "true_triggers": c.true_triggers,
        "ops_per_true_trigger": ops / max(1, c.true_triggers),
        "lossy_syncs": c.syncs_lossy,
        "reconstructions_per_op": c.reconstructions / max(1, ops),
    }
