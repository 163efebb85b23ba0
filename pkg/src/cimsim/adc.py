"""SAR, Flash, hybrid Flash+SAR and tree-driven digitization controllers.

Polarity: controllers digitize x = the discharged fraction of the compute
array (x = 1 - V_MAV for an ideal array), so the code grows with the
product-sum count and k = 0 maps to code 0. Testing "code >= T" means
comparing the DAC reference generated with p = N - T*N/2^b precharged
columns against V_MAV; the comparator inputs are swapped relative to the
analog engine's ``compare(v, ref)`` so that an offset d shifts the
staircase to ``ideal_code(x + d)``.

Scalar functions return full per-firing traces. `AdcChain.convert*` is the
vectorized path used by ramps and inference.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from cimsim.analog import (
    ArrayGeometry,
    CapVector,
    CimArrayState,
    NonidealityParams,
    Role,
    compare,
    dac_reference,
    dac_reference_table,
    draw_mismatch,
    mav_voltage,
    rng_for,
)
from cimsim.energy import DEFAULT_COST, CostParams, pattern_toggles
from cimsim.search_tree import Node, SearchTree, TreeStructureError, balanced_tree

IDEAL = NonidealityParams()
NOISE_STREAM = 0x5EED


class Mode(enum.Enum):
    SAR = "sar"
    FLASH = "flash"
    HYBRID = "hybrid"
    TREE = "tree"


class ConfigError(ValueError):
    pass


class BubbleError(ValueError):
    """Flash thermometer word is not a monotone run of ones."""


@dataclass(frozen=True)
class AdcConfig:
    bits: int = 5
    mode: Mode = Mode.SAR
    flash_bits: int = 2
    bubble_repair: bool = False

    def validate(self, geometry: ArrayGeometry | None = None) -> None:
        if self.bits < 1:
            raise ConfigError("bits must be >= 1")
        if geometry is not None and 2**self.bits > geometry.cols:
            raise ConfigError(f"2^{self.bits} codes exceed {geometry.cols} columns")
        if self.mode is Mode.HYBRID and not 1 <= self.flash_bits < self.bits:
            raise ConfigError(f"hybrid needs 1 <= flash_bits < bits, got m={self.flash_bits}, b={self.bits}")

    @property
    def flash_width(self) -> int:
        """MSBs resolved in the flash cycle (all of them in FLASH mode)."""
        if self.mode is Mode.FLASH:
            return self.bits
        return self.flash_bits if self.mode is Mode.HYBRID else 0

    def cycles(self) -> int:
        """Comparison cycles per conversion (TREE: worst case, b)."""
        if self.mode is Mode.FLASH:
            return 1
        if self.mode is Mode.HYBRID:
            return 1 + self.bits - self.flash_bits
        return self.bits


@dataclass(frozen=True)
class TraceRecord:
    cycle: int
    p: int  # precharge count of the reference pattern
    threshold: int  # code threshold being tested
    bit: int
    mode: str
    array: str = ""
    toggles: int = 0


@dataclass
class DigitizationResult:
    code: int
    bits_msb_first: tuple[int, ...]
    comparisons: int
    cycles: int
    trace: list[TraceRecord] = field(default_factory=list)
    energy: float = 0.0
    toggles: int = 0
    merges: int = 0


def code_from_trace(trace, n_codes: int) -> int:
    """Replay interval narrowing over the recorded decisions."""
    lo, hi = 0, n_codes
    for r in trace:
        if r.bit:
            lo = max(lo, r.threshold)
        else:
            hi = min(hi, r.threshold)
    return lo


def to_bits(code: int, width: int) -> tuple[int, ...]:
    return tuple((code >> (width - 1 - i)) & 1 for i in range(width))


def precharge_count(threshold: int, bits: int, cols: int) -> int:
    return cols - threshold * (cols >> bits)


def thermometer_to_binary(flags, repair: bool = False) -> int:
    """Count of leading ones; `repair` falls back to counting all ones."""
    f = [int(v) for v in flags]
    if not repair and any(a < b for a, b in zip(f, f[1:])):
        raise BubbleError(f"non-monotone thermometer word {tuple(f)}")
    return sum(f)


@dataclass
class FlashBank:
    """Reference arrays held at p_j = j*N/2^m, one comparator per reference."""

    refs: list[tuple[CimArrayState, int]]
    offsets: tuple[float, ...] | None = None

    def __post_init__(self):
        ps = [p for _, p in self.refs]
        if any(a >= b for a, b in zip(ps, ps[1:])):
            raise ConfigError("flash reference precharge counts must be strictly increasing")
        if self.offsets is not None and len(self.offsets) != len(self.refs):
            raise ConfigError("need one comparator offset per reference")

    @property
    def size(self) -> int:
        return len(self.refs)

    def offset(self, j: int, nonideal: NonidealityParams) -> float:
        return nonideal.comparator_offset if self.offsets is None else self.offsets[j]


def make_flash_bank(geometry: ArrayGeometry, m: int,
                    nonideal: NonidealityParams = IDEAL, stream: int = 1) -> FlashBank:
    """2^m - 1 reference arrays, each with its own mismatch draw."""
    if 2**m > geometry.cols:
        raise ConfigError(f"{m} flash bits exceed {geometry.cols} columns")
    refs = []
    for j in range(1, 2**m):
        caps = draw_mismatch(geometry, nonideal, stream=stream * 1000 + j)
        arr = CimArrayState.blank(geometry, caps, Role.DIGITIZE, name=f"F{j}")
        refs.append((arr, j * geometry.cols // 2**m))
    return FlashBank(refs)


class _Run:
    """Per-conversion bookkeeping shared by the scalar controllers."""

    def __init__(self, v_mav, nonideal, rng, cost):
        self.v = v_mav
        self.nonideal = nonideal or IDEAL
        self.rng = rng
        if self.rng is None and self.nonideal.comparator_noise_sigma > 0:
            self.rng = rng_for(self.nonideal.seed, NOISE_STREAM)
        self.cost = cost
        self.trace: list[TraceRecord] = []
        self.state: dict[str, int] = {}  # array label -> current pattern

    def fire(self, caps: CapVector, label: str, p: int, threshold: int,
             cycle: int, mode: str, offset: float | None = None) -> int:
        ref = dac_reference(p, caps)
        draw = self.rng.standard_normal() if self.nonideal.comparator_noise_sigma > 0 else 0.0
        params = self.nonideal
        if offset is not None and offset != params.comparator_offset:
            params = NonidealityParams(comparator_offset=offset,
                                       comparator_noise_sigma=params.comparator_noise_sigma)
        bit = compare(ref, self.v, params, draw)
        toggles = pattern_toggles(self.state.get(label, 0), p)
        self.state[label] = p
        self.trace.append(TraceRecord(cycle, p, threshold, bit, mode, label, toggles))
        return bit

    def sar(self, caps, label, lo, hi, bits, cols, cycle0, mode="sar") -> int:
        cycle = cycle0
        while hi - lo > 1:
            t = (lo + hi) // 2
            if self.fire(caps, label, precharge_count(t, bits, cols), t, cycle, mode):
                lo = t
            else:
                hi = t
            cycle += 1
        return lo

    def flash(self, bank: FlashBank, m: int, bits: int, cols: int, cycle: int,
              repair: bool) -> int:
        if bank.size != 2**m - 1:
            raise ConfigError(f"flash bank has {bank.size} references, {m} bits need {2**m - 1}")
        flags = []
        for i in range(1, 2**m):
            j = 2**m - i - 1  # bank index holding threshold i
            arr, p = bank.refs[j]
            t = i << (bits - m)
            if p != precharge_count(t, bits, cols):
                raise ConfigError(f"bank reference {j} holds p={p}, expected {precharge_count(t, bits, cols)}")
            flags.append(self.fire(arr.caps, arr.name or f"F{j + 1}", p, t, cycle, "flash",
                                   bank.offset(j, self.nonideal)))
        return thermometer_to_binary(flags, repair)

    def result(self, code: int, width: int) -> DigitizationResult:
        toggles = sum(r.toggles for r in self.trace)
        merges = sum(1 for r in self.trace if r.toggles > 0)
        firings = len(self.trace)
        cycles = len({r.cycle for r in self.trace})
        return DigitizationResult(code, to_bits(code, width), firings, cycles, self.trace,
                                  self.cost.energy(toggles, firings, merges), toggles, merges)


def _sample(x, source, v_mav):
    return mav_voltage(x, source) if v_mav is None else v_mav


def sar_digitize(x: float, dac_array: CimArrayState, cfg: AdcConfig,
                 nonideal: NonidealityParams | None = None, *,
                 source: CapVector | None = None, v_mav: float | None = None,
                 rng: np.random.Generator | None = None,
                 cost: CostParams = DEFAULT_COST) -> DigitizationResult:
    if cfg.mode is not Mode.SAR:
        raise ConfigError(f"sar_digitize called with mode {cfg.mode.value}")
    cfg.validate(dac_array.geometry)
    run = _Run(_sample(x, source, v_mav), nonideal, rng, cost)
    cols = dac_array.geometry.cols
    code = run.sar(dac_array.caps, dac_array.name or "DAC", 0, 2**cfg.bits, cfg.bits, cols, 0)
    return run.result(code, cfg.bits)


def flash_digitize(x: float, bank: FlashBank, m: int,
                   nonideal: NonidealityParams | None = None, *,
                   source: CapVector | None = None, v_mav: float | None = None,
                   rng: np.random.Generator | None = None, repair: bool = False,
                   cost: CostParams = DEFAULT_COST) -> DigitizationResult:
    """Resolve `m` MSBs in one comparison cycle."""
    if bank.size == 0:
        raise ConfigError("empty flash bank")
    cols = bank.refs[0][0].geometry.cols
    run = _Run(_sample(x, source, v_mav), nonideal, rng, cost)
    code = run.flash(bank, m, m, cols, 0, repair)
    return run.result(code, m)


def hybrid_digitize(x: float, bank: FlashBank, sar_array: CimArrayState, cfg: AdcConfig,
                    nonideal: NonidealityParams | None = None, *,
                    source: CapVector | None = None, v_mav: float | None = None,
                    rng: np.random.Generator | None = None,
                    cost: CostParams = DEFAULT_COST) -> DigitizationResult:
    if cfg.mode is not Mode.HYBRID:
        raise ConfigError(f"hybrid_digitize called with mode {cfg.mode.value}")
    cfg.validate(sar_array.geometry)
    b, m = cfg.bits, cfg.flash_bits
    cols = sar_array.geometry.cols
    run = _Run(_sample(x, source, v_mav), nonideal, rng, cost)
    window = run.flash(bank, m, b, cols, 0, cfg.bubble_repair)
    lo = window << (b - m)
    code = run.sar(sar_array.caps, sar_array.name or "DAC", lo, lo + 2 ** (b - m), b, cols, 1)
    return run.result(code, b)


def tree_digitize(x: float, tree: SearchTree, dac_array: CimArrayState,
                  nonideal: NonidealityParams | None = None, *,
                  source: CapVector | None = None, v_mav: float | None = None,
                  rng: np.random.Generator | None = None,
                  cost: CostParams = DEFAULT_COST) -> DigitizationResult:
    """Asymmetric search: one comparison per tree level on the reached path."""
    if not isinstance(tree, SearchTree):
        raise TreeStructureError("tree_digitize needs a SearchTree")
    ArrayGeometry.check_bits(dac_array.geometry, tree.bits)
    cols = dac_array.geometry.cols
    run = _Run(_sample(x, source, v_mav), nonideal, rng, cost)
    label = dac_array.name or "DAC"
    node, cycle = tree.root, 0
    while isinstance(node, Node):
        t = node.threshold
        bit = run.fire(dac_array.caps, label, precharge_count(t, tree.bits, cols), t, cycle, "tree")
        node = node.right if bit else node.left
        cycle += 1
    return run.result(int(node), tree.bits)


@dataclass
class BatchResult:
    codes: np.ndarray
    comparisons: np.ndarray
    toggles: np.ndarray
    merges: np.ndarray
    cycles: np.ndarray

    def energy(self, cost: CostParams) -> np.ndarray:
        return cost.energy(self.toggles, self.comparisons, self.merges)


@dataclass
class AdcChain:
    """A configured converter: DAC array, optional flash bank and tree."""

    cfg: AdcConfig
    dac: CimArrayState
    nonideal: NonidealityParams = IDEAL
    bank: FlashBank | None = None
    tree: SearchTree | None = None
    source: CapVector | None = None
    cost: CostParams = DEFAULT_COST

    def __post_init__(self):
        self.cfg.validate(self.dac.geometry)
        if self.cfg.flash_width and self.bank is None:
            raise ConfigError(f"{self.cfg.mode.value} mode needs a flash bank")
        if self.cfg.mode is Mode.TREE:
            if self.tree is None:
                self.tree = balanced_tree(self.cfg.bits)
            if self.tree.bits != self.cfg.bits:
                raise TreeStructureError("tree precision does not match config bits")
        self._table = dac_reference_table(self.dac.caps)
        self._bank_tables = ([dac_reference_table(a.caps) for a, _ in self.bank.refs]
                             if self.bank is not None else [])

    @classmethod
    def build(cls, cfg: AdcConfig, geometry: ArrayGeometry = ArrayGeometry(),
              nonideal: NonidealityParams = IDEAL, tree: SearchTree | None = None,
              source: CapVector | None = None, stream: int = 0,
              cost: CostParams = DEFAULT_COST) -> AdcChain:
        cfg.validate(geometry)
        dac = CimArrayState.blank(geometry, draw_mismatch(geometry, nonideal, stream=stream * 1000),
                                  Role.DIGITIZE, name="DAC")
        bank = None
        if cfg.flash_width:
            bank = make_flash_bank(geometry, cfg.flash_width, nonideal, stream=stream + 1)
        return cls(cfg, dac, nonideal, bank, tree, source, cost)

    @property
    def n_codes(self) -> int:
        return 2**self.cfg.bits

    def _rng(self, rng):
        if rng is None and self.nonideal.comparator_noise_sigma > 0:
            return rng_for(self.nonideal.seed, NOISE_STREAM)
        return rng

    def digitize(self, x: float = 0.0, rng=None, v_mav: float | None = None) -> DigitizationResult:
        kw = dict(source=self.source, v_mav=v_mav, rng=self._rng(rng), cost=self.cost)
        mode = self.cfg.mode
        if mode is Mode.SAR:
            return sar_digitize(x, self.dac, self.cfg, self.nonideal, **kw)
        if mode is Mode.FLASH:
            return flash_digitize(x, self.bank, self.cfg.bits, self.nonideal,
                                  repair=self.cfg.bubble_repair, **kw)
        if mode is Mode.HYBRID:
            return hybrid_digitize(x, self.bank, self.dac, self.cfg, self.nonideal, **kw)
        return tree_digitize(x, self.tree, self.dac, self.nonideal, **kw)

    def convert(self, x, rng=None) -> BatchResult:
        x = np.asarray(x, dtype=float)
        if self.source is None:
            v = 1.0 - x
        else:
            s = float(np.sum(self.source.multipliers))
            v = ((1.0 - x) * s) / (s + self.source.parasitic)
        return self.convert_mav(v, rng)

    def convert_mav(self, v_mav, rng=None) -> BatchResult:
        v = np.asarray(v_mav, dtype=float).ravel()
        rng = self._rng(rng)
        n = v.size
        b, cols = self.cfg.bits, self.dac.geometry.cols
        step = cols >> b
        offset = self.nonideal.comparator_offset
        sigma = self.nonideal.comparator_noise_sigma

        def decide(ref, offset=offset):
            d = ref - v + offset
            if sigma > 0:
                d = d + sigma * rng.standard_normal(n)
            return d >= 0

        comparisons = np.zeros(n, np.int64)
        toggles = np.zeros(n, np.int64)
        merges = np.zeros(n, np.int64)
        cycles = np.zeros(n, np.int64)
        lo = np.zeros(n, np.int64)
        hi = np.full(n, 2**b, np.int64)

        m = self.cfg.flash_width
        if m:
            flags = np.empty((n, 2**m - 1), dtype=bool)
            for i in range(1, 2**m):
                j = 2**m - i - 1
                p = self.bank.refs[j][1]
                flags[:, i - 1] = decide(self._bank_tables[j][p], self.bank.offset(j, self.nonideal))
                toggles += p
                merges += 1
            if not self.cfg.bubble_repair and np.any(flags[:, 1:] > flags[:, :-1]):
                bad = flags[np.argmax(np.any(flags[:, 1:] > flags[:, :-1], axis=1))]
                raise BubbleError(f"non-monotone thermometer word {tuple(bad.astype(int))}")
            window = flags.sum(axis=1)
            lo = window << (b - m)
            hi = lo + 2 ** (b - m)
            comparisons += 2**m - 1
            cycles += 1

        if self.cfg.mode is Mode.TREE:
            codes = self._walk_tree(decide, comparisons, toggles, merges, cycles, cols, step)
        else:
            prev = np.zeros(n, np.int64)
            for _ in range(b - m):
                t = (lo + hi) // 2
                p = cols - t * step
                bit = decide(self._table[p])
                lo = np.where(bit, t, lo)
                hi = np.where(bit, hi, t)
                toggles += np.abs(p - prev)
                merges += p != prev
                prev = p
            comparisons += b - m
            cycles += b - m
            codes = lo
        return BatchResult(codes, comparisons, toggles, merges, cycles)

    def _walk_tree(self, decide, comparisons, toggles, merges, cycles, cols, step):
        root, thr, left, right = self.tree.arrays()
        n = comparisons.size
        node = np.full(n, root, np.int64)
        codes = np.zeros(n, np.int64)
        prev = np.zeros(n, np.int64)
        active = np.ones(n, bool)
        while active.any():
            # finished lanes keep re-testing their last node; results are masked out
            p = cols - thr[node] * step
            bit = decide(self._table[p])
            child = np.where(bit, right[node], left[node])
            toggles[active] += np.abs(p - prev)[active]
            merges[active] += (p != prev)[active]
            prev = np.where(active, p, prev)
            comparisons[active] += 1
            cycles[active] += 1
            done = active & (child < 0)
            codes[done] = -1 - child[done]
            node = np.where(active & (child >= 0), child, node)
            active &= ~done
        return codes
