"""Energy cost constants and switched-capacitor toggle accounting."""

from __future__ import annotations

from dataclasses import dataclass

# Reference point for calibration: one 5-bit SAR conversion from the reset
# pattern on a 32-column array costs 31 column toggles, 5 comparator
# firings and 5 reference merges.
CALIBRATION_ENERGY = 74.23
_CAL_TOGGLES, _CAL_FIRINGS, _CAL_MERGES = 31, 5, 5


@dataclass(frozen=True)
class CostParams:
    """Per-event energies (arbitrary units) and the comparison-cycle time.

    Defaults are calibrated so that a 5-bit conversion totals
    `CALIBRATION_ENERGY`; the split between the three terms is a choice,
    not a measured result.
    """

    e_precharge: float = 1.0
    e_compare: float = 5.0
    e_merge: float = (CALIBRATION_ENERGY - _CAL_TOGGLES * 1.0 - _CAL_FIRINGS * 5.0) / _CAL_MERGES
    cycle_time: float = 1e-7

    def __post_init__(self):
        for name in ("e_precharge", "e_compare", "e_merge", "cycle_time"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def energy(self, toggles: float = 0, firings: float = 0, merges: float = 0) -> float:
        return toggles * self.e_precharge + firings * self.e_compare + merges * self.e_merge


DEFAULT_COST = CostParams()
ZERO_COST = CostParams(0.0, 0.0, 0.0, 0.0)


def pattern_toggles(p_old: int, p_new: int) -> int:
    """Columns whose rail changes between two canonical precharge patterns.

    Canonical patterns hold the lowest-index columns high, so the patterns
    differ in exactly |p_new - p_old| columns.
    """
    return abs(p_new - p_old)
