"""Charge-domain behavioral model of an 8T compute-in-SRAM array.

Voltages are normalized to VDD and capacitances to the unit column
capacitance C_u. Column lines discharge when stored bit AND input bit are
both 1; merging all column lines onto the sum line yields the
multiply-average (MAV) voltage. The same column lines, precharged to a
pattern of rails and merged, act as a capacitive DAC.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

MIN_MULTIPLIER = 0.01


class Role(enum.Enum):
    COMPUTE = "compute"
    DIGITIZE = "digitize"


@dataclass(frozen=True)
class ArrayGeometry:
    rows: int = 16
    cols: int = 32

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"array geometry must be positive, got {self.rows}x{self.cols}")
        if self.cols & (self.cols - 1):
            raise ValueError(f"cols must be a power of two, got {self.cols}")

    def check_bits(self, bits: int) -> None:
        if bits < 1 or 2**bits > self.cols:
            raise ValueError(f"{bits}-bit digitization needs 2^bits <= cols ({self.cols})")


@dataclass(frozen=True)
class CapVector:
    """Per-column capacitance multipliers plus a lumped parasitic."""

    multipliers: np.ndarray
    parasitic: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.multipliers, dtype=float)
        if m.ndim != 1 or m.size == 0:
            raise ValueError("multipliers must be a non-empty vector")
        if np.any(m <= 0):
            raise ValueError("capacitance multipliers must be positive")
        if self.parasitic < 0:
            raise ValueError("parasitic capacitance must be nonnegative")
        m.setflags(write=False)
        object.__setattr__(self, "multipliers", m)

    @classmethod
    def ideal(cls, cols: int, parasitic: float = 0.0) -> CapVector:
        return cls(np.ones(cols), parasitic)

    @property
    def cols(self) -> int:
        return self.multipliers.size

    @property
    def total(self) -> float:
        """Total capacitance seen by the merged sum line."""
        return float(np.sum(self.multipliers)) + self.parasitic


@dataclass(frozen=True)
class NonidealityParams:
    """Nonideality knobs; comparator terms are in units of VDD."""

    cap_mismatch_sigma: float = 0.0
    parasitic_frac: float = 0.0
    comparator_offset: float = 0.0
    comparator_noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("cap_mismatch_sigma", "parasitic_frac", "comparator_noise_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def is_ideal(self) -> bool:
        return (
            self.cap_mismatch_sigma == 0
            and self.parasitic_frac == 0
            and self.comparator_offset == 0
            and self.comparator_noise_sigma == 0
        )


@dataclass
class CimArrayState:
    geometry: ArrayGeometry
    weights: np.ndarray
    caps: CapVector
    role: Role = Role.COMPUTE
    name: str = field(default="", compare=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.uint8)
        shape = (self.geometry.rows, self.geometry.cols)
        if self.weights.shape != shape:
            raise ValueError(f"weights shape {self.weights.shape} != geometry {shape}")
        if np.any(self.weights > 1):
            raise ValueError("weights must be bits")
        if self.caps.cols != self.geometry.cols:
            raise ValueError("cap vector length does not match geometry")

    @classmethod
    def blank(cls, geometry: ArrayGeometry, caps: CapVector | None = None,
              role: Role = Role.DIGITIZE, name: str = "") -> CimArrayState:
        caps = caps if caps is not None else CapVector.ideal(geometry.cols)
        return cls(geometry, np.zeros((geometry.rows, geometry.cols), np.uint8), caps, role, name)


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Independent, reproducible generator for a (seed, stream...) key."""
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))


def column_products(array: CimArrayState, row_index: int, input_bits) -> np.ndarray:
    """Discharge flags of the selected row: stored bit AND input bit."""
    x = np.asarray(input_bits)
    if x.shape != (array.geometry.cols,):
        raise ValueError(f"input must have shape ({array.geometry.cols},), got {x.shape}")
    if not 0 <= row_index < array.geometry.rows:
        raise IndexError(f"row {row_index} out of range for {array.geometry.rows} rows")
    return (array.weights[row_index] & (x != 0)).astype(np.uint8)


def charge_share_mav(flags, caps: CapVector) -> float:
    """Sum-line voltage after merging precharged and discharged column lines."""
    f = np.asarray(flags)
    if f.shape != (caps.cols,):
        raise ValueError(f"flags must have shape ({caps.cols},), got {f.shape}")
    held = float(np.sum(caps.multipliers[f == 0]))
    return held / caps.total


def mav_voltage(x: float, caps: CapVector | None = None) -> float:
    """Sum-line voltage for a discharged fraction `x` of the columns.

    Continuous counterpart of `charge_share_mav`: with ideal caps and
    x = k/N it returns the same value.
    """
    if caps is None:
        return 1.0 - x
    s = float(np.sum(caps.multipliers))
    return ((1.0 - x) * s) / (s + caps.parasitic)


def dac_reference(p: int, caps: CapVector) -> float:
    """Reference voltage with the `p` lowest-index columns precharged to VDD."""
    if not 0 <= p <= caps.cols:
        raise ValueError(f"precharge count {p} outside [0, {caps.cols}]")
    return float(np.sum(caps.multipliers[:p])) / caps.total


def dac_reference_table(caps: CapVector) -> np.ndarray:
    """`dac_reference(p)` for every p in 0..N."""
    return np.array([dac_reference(p, caps) for p in range(caps.cols + 1)])


def compare(v: float, ref: float, params: NonidealityParams | None = None,
            draw: float = 0.0) -> int:
    """Clocked comparator: 1 iff v - ref + offset + noise >= 0.

    `draw` is a standard-normal sample scaled by the noise sigma.
    """
    offset = noise = 0.0
    if params is not None:
        offset = params.comparator_offset
        noise = params.comparator_noise_sigma * draw
    return int(v - ref + offset + noise >= 0)


def draw_mismatch(geometry: ArrayGeometry, params: NonidealityParams,
                  stream: int = 0) -> CapVector:
    # multipliers scale the same standard normals, so sigma sweeps share draws
    z = rng_for(params.seed, 0xCA9, stream).standard_normal(geometry.cols)
    m = np.maximum(1.0 + params.cap_mismatch_sigma * z, MIN_MULTIPLIER)
    return CapVector(m, params.parasitic_frac * geometry.cols)
