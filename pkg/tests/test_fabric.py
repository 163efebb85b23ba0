import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cimsim.adc import AdcConfig, ConfigError, Mode
from cimsim.energy import ZERO_COST, CostParams
from cimsim.fabric import (
    Action,
    Topology,
    TopologyError,
    build_topology,
    latency_vs_precision,
    sar_prefix_reference_energy,
    simulate_schedule,
    tally_energy,
)

SAR5 = AdcConfig(5, Mode.SAR)
HYB = AdcConfig(5, Mode.HYBRID, 2)


def test_pair_topology():
    plan = build_topology(2, "pair_sar")
    assert plan.units == ((0, 1),)
    assert set(plan.edges()) == {("sar", 0, 1), ("sar", 1, 0)}
    with pytest.raises(TopologyError):
        build_topology(1, Topology.PAIR_SAR)


def test_hybrid_topology_four_arrays():
    plan = build_topology(4, Topology.HYBRID, m=2)
    labels = {plan.label(a): role for a, role in plan.roles().items()}
    assert labels["A1"] == "compute"
    assert [plan.label(r) for r in plan.bank] == ["A2", "A3", "A4"]
    assert [plan.label(r) for r in plan.partners] == ["A2"]
    assert ("sar", 0, 1) in plan.edges()


def test_hybrid_topology_too_small():
    with pytest.raises(TopologyError):
        build_topology(3, Topology.HYBRID, m=2)


def test_pair_single_sample_six_cycles():
    rep = simulate_schedule(build_topology(2, "pair_sar"), 1, SAR5)
    assert rep.total_cycles == 6
    assert rep.samples_digitized == 1
    comp = [r for r in rep.rows if r.action is Action.COMPUTE]
    assert [(r.cycle, r.array) for r in comp] == [(1, 0)]
    # A2 digitizes for cycles 2..6
    assert [r.cycle for r in rep.rows if r.array == 1 and r.action is Action.REF_GEN] == [2, 3, 4, 5, 6]


def test_pair_swaps_roles():
    rep = simulate_schedule(build_topology(2, "pair_sar"), 2, SAR5)
    computes = [(r.array, r.sample) for r in rep.rows if r.action is Action.COMPUTE]
    assert computes == [(0, 0), (1, 1)]


def test_hybrid_four_compute_arrays():
    plan = build_topology(8, Topology.HYBRID, m=2)
    assert len(plan.units) == 4
    rep = simulate_schedule(plan, 1, HYB)
    assert rep.total_cycles == 8
    flash_cycles = sorted(r.cycle for r in rep.rows if r.action is Action.COMPARE and r.phase == "flash")
    assert flash_cycles == [2, 3, 4, 5]


def test_zero_samples():
    rep = simulate_schedule(build_topology(2, "pair_sar"), 0, SAR5)
    assert rep.total_cycles == 0
    assert sum(rep.busy.values()) == 0
    assert rep.energy.total == 0


def test_firing_count_per_conversion():
    rep = simulate_schedule(build_topology(2, "pair_sar"), 1, SAR5)
    assert sum(r.firings for r in rep.rows) == 5


def test_shared_bank_saves_reference_energy():
    rep = simulate_schedule(build_topology(8, Topology.HYBRID, m=2), 1, HYB)
    shared = rep.phase_energy("flash").reference
    assert shared == 48
    assert shared < 4 * sar_prefix_reference_energy(2)


@given(st.floats(1e-6, 1e3))
def test_shared_bank_saving_any_precharge_cost(e):
    cost = CostParams(e_precharge=e)
    rep = simulate_schedule(build_topology(8, Topology.HYBRID, m=2), 1, HYB, cost)
    assert rep.phase_energy("flash", cost).reference < 4 * sar_prefix_reference_energy(2, cost=cost)


def test_zero_cost_total():
    rep = simulate_schedule(build_topology(4, Topology.HYBRID, m=2), 3, HYB, ZERO_COST)
    assert rep.energy.total == 0


@pytest.mark.parametrize("plan,cfg,samples", [
    (build_topology(2, "pair_sar"), SAR5, 3),
    (build_topology(4, "hybrid"), HYB, 2),
    (build_topology(8, "hybrid"), HYB, 3),
    (build_topology(4, "one_to_many_flash", m=2), AdcConfig(2, Mode.FLASH), 2),
    (build_topology(6, "pair_sar"), AdcConfig(5, Mode.TREE), 2),
])
def test_conservation_and_determinism(plan, cfg, samples):
    a = simulate_schedule(plan, samples, cfg)
    b = simulate_schedule(plan, samples, cfg)
    assert a.to_csv() == b.to_csv()
    assert a.samples_digitized == a.samples_in == samples * len(plan.units)
    assert a.energy.total == pytest.approx(sum(a.per_array_energy.values()))
    assert a.energy.total == pytest.approx(sum(r.energy for r in a.rows))
    assert a.energy == tally_energy(a.rows)
    # every array accounted for in every cycle, at most one action each
    for c in range(1, a.total_cycles + 1):
        arrays = [r.array for r in a.rows if r.cycle == c]
        assert sorted(arrays) == sorted(set(arrays)) == list(range(plan.n_arrays))
    for arr in range(plan.n_arrays):
        assert a.busy[arr] + a.idle[arr] == a.total_cycles


@given(st.lists(st.integers(0, 31), min_size=1, max_size=4))
def test_pair_cycles_data_independent(codes):
    plan = build_topology(2, "pair_sar")
    rep = simulate_schedule(plan, len(codes), SAR5, codes=[codes])
    assert rep.total_cycles == 6 * len(codes)


def test_pipelining_never_slower():
    for n, samples in [(4, 3), (8, 2)]:
        plan = build_topology(n, "hybrid")
        piped = build_topology(n, "hybrid", pipelining=True)
        assert (simulate_schedule(piped, samples, HYB).total_cycles
                <= simulate_schedule(plan, samples, HYB).total_cycles)


def test_csv_header():
    csv = simulate_schedule(build_topology(2, "pair_sar"), 1, SAR5).to_csv()
    assert csv.splitlines()[0] == "cycle,array_id,action,sample_id,energy"
    assert csv.splitlines()[1].startswith("1,A1,COMPUTE,0,")


def test_mode_mismatch_rejected():
    with pytest.raises(ConfigError):
        simulate_schedule(build_topology(2, "pair_sar"), 1, HYB)
    with pytest.raises(ConfigError):
        simulate_schedule(build_topology(4, "hybrid"), 1, AdcConfig(5, Mode.HYBRID, 1))


@pytest.mark.parametrize("b", range(3, 9))
def test_latency_table(b):
    (sar,) = latency_vs_precision("sar", [b])
    (flash,) = latency_vs_precision("flash", [b])
    (hyb,) = latency_vs_precision("hybrid", [b], 2)
    assert sar.cycles == b
    assert (flash.cycles, flash.comparators) == (1, 2**b - 1)
    assert hyb.cycles == 1 + b - 2
    assert np.all(np.diff([r.cycles for r in latency_vs_precision("sar", range(1, 9))]) == 1)
