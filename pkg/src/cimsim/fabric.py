"""Cycle-accurate scheduling of coupled CiM arrays.

Three fabrics are supported:

* PAIR_SAR: arrays pair up; one computes while the other acts as the SAR
  DAC for it, and the roles swap on the next sample.
* ONE_TO_MANY_FLASH: compute arrays share a bank of 2^m - 1 reference
  arrays that resolve all bits in one comparison cycle.
* HYBRID: the shared bank resolves the m MSBs; each compute array then
  finishes the remaining bits in SAR mode with its own partner array.

A compute array holds its MAV on the sum line until the sample is fully
digitized, so it cannot start the next product meanwhile. The shared bank
serves one compute array per cycle. Unless pipelining is enabled, a bank
array does not start a SAR tail while some compute array is waiting for a
flash cycle.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field

from cimsim.adc import AdcConfig, ConfigError, Mode
from cimsim.energy import DEFAULT_COST, CostParams, pattern_toggles
from cimsim.search_tree import SearchTree, balanced_tree


class Topology(enum.Enum):
    PAIR_SAR = "pair_sar"
    ONE_TO_MANY_FLASH = "one_to_many_flash"
    HYBRID = "hybrid"


class TopologyError(ValueError):
    pass


class Action(enum.Enum):
    COMPUTE = "COMPUTE"
    REF_GEN = "REF_GEN"
    COMPARE = "COMPARE"
    IDLE = "IDLE"


@dataclass(frozen=True)
class CouplingPlan:
    mode: Topology
    n_arrays: int
    flash_bits: int
    # compute units: a pair (alternating roles) or a single compute array
    units: tuple[tuple[int, ...], ...]
    bank: tuple[int, ...] = ()
    partners: tuple[int, ...] = ()
    pipelining: bool = False

    def label(self, array: int) -> str:
        return f"A{array + 1}"

    def edges(self) -> list[tuple[str, int, int]]:
        """Static couplings as (phase, compute array, reference array)."""
        out = []
        for u, unit in enumerate(self.units):
            if self.mode is Topology.PAIR_SAR:
                a, b = unit
                out += [("sar", a, b), ("sar", b, a)]
                continue
            out += [("flash", unit[0], r) for r in self.bank]
            if self.partners:
                out.append(("sar", unit[0], self.partners[u]))
        return out

    def roles(self) -> dict[int, str]:
        roles = {a: "unused" for a in range(self.n_arrays)}
        for unit in self.units:
            for a in unit:
                roles[a] = "compute" if len(unit) == 1 else "compute/digitize"
        for r in self.partners:
            roles[r] = "digitize"
        for r in self.bank:
            roles[r] = "flash-reference" if r not in self.partners else "flash-reference/digitize"
        return roles


def build_topology(n_arrays: int, mode: Topology | str, m: int = 2,
                   n_compute: int | None = None, pipelining: bool = False) -> CouplingPlan:
    mode = Topology(mode)
    if mode is Topology.PAIR_SAR:
        if n_arrays < 2 or n_arrays % 2:
            raise TopologyError(f"PAIR_SAR needs an even number of arrays >= 2, got {n_arrays}")
        units = tuple((a, a + 1) for a in range(0, n_arrays, 2))
        return CouplingPlan(mode, n_arrays, 0, units, pipelining=pipelining)

    if m < 1:
        raise TopologyError("flash fan-out needs m >= 1")
    bank_size = 2**m - 1
    hybrid = mode is Topology.HYBRID

    def refs_needed(k):
        return max(k, bank_size) if hybrid else bank_size

    if n_compute is None:
        n_compute = 0
        while n_compute + 1 + refs_needed(n_compute + 1) <= n_arrays:
            n_compute += 1
    if n_compute < 1 or n_compute + refs_needed(n_compute) > n_arrays:
        raise TopologyError(
            f"{mode.value} with m={m} and {max(n_compute, 1)} compute arrays needs "
            f"{max(n_compute, 1) + refs_needed(max(n_compute, 1))} arrays, got {n_arrays}")
    units = tuple((a,) for a in range(n_compute))
    refs = tuple(range(n_compute, n_compute + refs_needed(n_compute)))
    partners = refs[:n_compute] if hybrid else ()
    return CouplingPlan(mode, n_arrays, m, units, refs[:bank_size], partners, pipelining)


@dataclass(frozen=True)
class TraceRow:
    cycle: int
    array: int
    action: Action
    sample: int | None = None
    toggles: int = 0
    firings: int = 0
    merges: int = 0
    phase: str = ""
    energy: float = 0.0


@dataclass(frozen=True)
class EnergyBreakdown:
    reference: float
    comparison: float
    merge: float

    @property
    def total(self) -> float:
        return self.reference + self.comparison + self.merge


def tally_energy(rows, cost: CostParams = DEFAULT_COST) -> EnergyBreakdown:
    """Reference toggles, comparator firings and merges priced by `cost`."""
    toggles = sum(r.toggles for r in rows)
    firings = sum(r.firings for r in rows)
    merges = sum(r.merges for r in rows)
    return EnergyBreakdown(toggles * cost.e_precharge, firings * cost.e_compare,
                           merges * cost.e_merge)


@dataclass
class ScheduleReport:
    plan: CouplingPlan
    total_cycles: int
    rows: list[TraceRow]
    busy: dict[int, int]
    idle: dict[int, int]
    samples_in: int
    samples_digitized: int
    energy: EnergyBreakdown
    per_array_energy: dict[int, float]
    edges: list[tuple[int, int, int]] = field(default_factory=list)
    latencies: list[int] = field(default_factory=list)
    cycle_time: float = 0.0

    @property
    def throughput(self) -> float:
        """Digitized samples per cycle."""
        return self.samples_digitized / self.total_cycles if self.total_cycles else 0.0

    def phase_energy(self, phase: str, cost: CostParams = DEFAULT_COST) -> EnergyBreakdown:
        return tally_energy([r for r in self.rows if r.phase == phase], cost)

    def compute_duty(self, array: int) -> float:
        n = sum(1 for r in self.rows if r.array == array and r.action is Action.COMPUTE)
        return n / self.total_cycles if self.total_cycles else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cycle", "array_id", "action", "sample_id", "energy"])
        for r in self.rows:
            w.writerow([r.cycle, self.plan.label(r.array), r.action.value,
                        "" if r.sample is None else r.sample, format(r.energy, ".12g")])
        return buf.getvalue()


@dataclass
class _Sample:
    sid: int
    unit: int
    compute: int
    partner: int
    steps: list[int]  # SAR-phase precharge counts, in order
    phase: str = "compute"
    ready: int = 0  # first cycle the next phase may run
    step: int = 0


def _sar_steps(code: int, lo: int, hi: int, bits: int, cols: int) -> list[int]:
    step, out = cols >> bits, []
    while hi - lo > 1:
        t = (lo + hi) // 2
        out.append(cols - t * step)
        if code >= t:
            lo = t
        else:
            hi = t
    return out


def simulate_schedule(plan: CouplingPlan, workload, cfg: AdcConfig,
                      cost: CostParams = DEFAULT_COST, codes=None,
                      tree: SearchTree | None = None, cols: int = 32) -> ScheduleReport:
    """Run the fabric cycle by cycle.

    `workload` is the sample count per compute unit (an int applies to every
    unit). `codes` optionally gives each unit's output codes, which fix the
    data-dependent SAR reference patterns; missing codes default to 0.
    """
    b = cfg.bits
    if 2**b > cols:
        raise ConfigError(f"2^{b} codes exceed {cols} columns")
    if plan.mode is Topology.PAIR_SAR:
        if cfg.mode not in (Mode.SAR, Mode.TREE):
            raise ConfigError(f"PAIR_SAR fabric cannot run {cfg.mode.value} conversions")
        if cfg.mode is Mode.TREE:
            tree = tree or balanced_tree(b)
            if tree.bits != b:
                raise ConfigError("tree precision does not match config bits")
        m = 0
    elif plan.mode is Topology.ONE_TO_MANY_FLASH:
        if cfg.mode is not Mode.FLASH or cfg.bits != plan.flash_bits:
            raise ConfigError("flash fabric needs FLASH mode with bits == fan-out m")
        m = b
    else:
        cfg.validate()
        if cfg.mode is not Mode.HYBRID or cfg.flash_bits != plan.flash_bits:
            raise ConfigError("hybrid fabric needs HYBRID mode with matching flash_bits")
        m = cfg.flash_bits

    n_units = len(plan.units)
    counts = [workload] * n_units if isinstance(workload, int) else list(workload)
    if len(counts) != n_units or any(c < 0 for c in counts):
        raise ConfigError(f"workload must give a nonnegative count for each of {n_units} units")

    queues: list[list[_Sample]] = []
    sid = 0
    for u, unit in enumerate(plan.units):
        q = []
        unit_codes = list(codes[u]) if codes is not None else []
        for s in range(counts[u]):
            code = unit_codes[s] if s < len(unit_codes) else 0
            if not 0 <= code < 2**b:
                raise ConfigError(f"code {code} outside {b}-bit range")
            if plan.mode is Topology.PAIR_SAR:
                comp, partner = unit[s % 2], unit[(s + 1) % 2]
            else:
                comp = unit[0]
                partner = plan.partners[u] if plan.partners else -1
            if cfg.mode is Mode.TREE:
                steps = [cols - t * (cols >> b) for t in tree.path(code)]
            else:
                lo = (code >> (b - m)) << (b - m)
                steps = _sar_steps(code, lo, lo + 2 ** (b - m), b, cols)
            q.append(_Sample(sid, u, comp, partner, steps))
            sid += 1
        queues.append(q)
    samples_in = sid

    pattern = {a: 0 for a in range(plan.n_arrays)}
    owner: dict[int, int] = {}  # array -> sample id holding it
    rows: list[TraceRow] = []
    edges: list[tuple[int, int, int]] = []
    latencies: list[int] = []
    started: dict[int, int] = {}
    heads = [0] * n_units
    done = 0
    cycle = 0

    def emit(c, a, action, s=None, toggles=0, firings=0, merges=0, phase=""):
        e = cost.energy(toggles, firings, merges)
        rows.append(TraceRow(c, a, action, s, toggles, firings, merges, phase, e))

    def ref_gen(c, a, p, s, phase):
        t = pattern_toggles(pattern[a], p)
        pattern[a] = p
        emit(c, a, Action.REF_GEN, s, toggles=t, merges=int(t > 0), phase=phase)

    def finish(smp, c):
        nonlocal done
        owner.pop(smp.compute, None)
        if smp.partner >= 0 and owner.get(smp.partner) == smp.sid:
            owner.pop(smp.partner)
            pattern[smp.partner] = 0
        smp.phase = "done"
        latencies.append(c - started[smp.sid] + 1)
        heads[smp.unit] += 1
        done += 1

    while done < samples_in:
        cycle += 1
        acted: dict[int, bool] = {}
        current = [queues[u][heads[u]] if heads[u] < len(queues[u]) else None
                   for u in range(n_units)]

        # running SAR tails
        for smp in current:
            if smp is None or smp.phase != "sar" or smp.step == 0 or smp.ready > cycle:
                continue
            p = smp.steps[smp.step]
            ref_gen(cycle, smp.partner, p, smp.sid, "sar")
            emit(cycle, smp.compute, Action.COMPARE, smp.sid, firings=1, phase="sar")
            edges.append((cycle, smp.compute, smp.partner))
            acted[smp.partner] = acted[smp.compute] = True
            smp.step += 1
            if smp.step == len(smp.steps):
                finish(smp, cycle)

        # one flash cycle on the shared bank
        flash_waiting = [s for s in current if s is not None and s.phase == "flash"
                         and s.ready <= cycle]
        if flash_waiting and not any(r in owner or r in acted for r in plan.bank):
            smp = flash_waiting.pop(0)
            for j, r in enumerate(plan.bank):
                ref_gen(cycle, r, (j + 1) * cols // 2**m, smp.sid, "flash")
                edges.append((cycle, smp.compute, r))
                acted[r] = True
            emit(cycle, smp.compute, Action.COMPARE, smp.sid, firings=len(plan.bank), phase="flash")
            acted[smp.compute] = True
            if smp.steps:
                smp.phase, smp.ready = "sar", cycle + 1
            else:
                finish(smp, cycle)

        # start SAR tails
        for smp in current:
            if smp is None or smp.phase != "sar" or smp.step or smp.ready > cycle:
                continue
            a = smp.partner
            if a in acted or (a in owner and owner[a] != smp.sid):
                continue
            if a in plan.bank and flash_waiting and not plan.pipelining:
                continue
            owner[a] = smp.sid
            ref_gen(cycle, a, smp.steps[0], smp.sid, "sar")
            emit(cycle, smp.compute, Action.COMPARE, smp.sid, firings=1, phase="sar")
            edges.append((cycle, smp.compute, a))
            acted[a] = acted[smp.compute] = True
            smp.step = 1
            if smp.step == len(smp.steps):
                finish(smp, cycle)

        # new products
        for smp in current:
            if smp is None or smp.phase != "compute" or smp.compute in acted:
                continue
            if smp.compute in owner or (smp.partner >= 0 and smp.partner in owner
                                        and plan.mode is Topology.PAIR_SAR):
                continue
            owner[smp.compute] = smp.sid
            if plan.mode is Topology.PAIR_SAR:
                owner[smp.partner] = smp.sid
            started[smp.sid] = cycle
            emit(cycle, smp.compute, Action.COMPUTE, smp.sid, merges=1, phase="compute")
            acted[smp.compute] = True
            smp.phase = "flash" if m else "sar"
            smp.ready = cycle + 1

        for a in range(plan.n_arrays):
            if a not in acted:
                emit(cycle, a, Action.IDLE)

    rows.sort(key=lambda r: (r.cycle, r.array))
    busy = {a: 0 for a in range(plan.n_arrays)}
    per_array = {a: 0.0 for a in range(plan.n_arrays)}
    for r in rows:
        if r.action is not Action.IDLE:
            busy[r.array] += 1
        per_array[r.array] += r.energy
    idle = {a: cycle - busy[a] for a in busy}
    return ScheduleReport(plan, cycle, rows, busy, idle, samples_in, done,
                          tally_energy(rows, cost), per_array, edges, latencies, cost.cycle_time)


def sar_prefix_reference_energy(m: int, cols: int = 32, cost: CostParams = DEFAULT_COST) -> float:
    """Reference energy of resolving m MSBs by SAR from the reset pattern."""
    return sum(cols >> (c + 1) for c in range(m)) * cost.e_precharge


@dataclass(frozen=True)
class LatencyRow:
    mode: str
    bits: int
    cycles: int
    comparators: int


def latency_vs_precision(mode: Mode | str, bits_range=range(1, 9), flash_bits: int = 2) -> list[LatencyRow]:
    """Comparison cycles per conversion and comparator count per precision."""
    mode = Mode(mode)
    out = []
    for b in bits_range:
        if not 1 <= b <= 8:
            raise ConfigError("precision must lie in 1..8")
        if mode is Mode.FLASH:
            cfg = AdcConfig(b, mode)
            comparators = 2**b - 1
        elif mode is Mode.HYBRID:
            cfg = AdcConfig(b, mode, flash_bits)
            cfg.validate()
            comparators = 2**flash_bits - 1
        else:
            cfg = AdcConfig(b, mode)
            comparators = 1
        out.append(LatencyRow(mode.value, b, cfg.cycles(), comparators))
    return out
