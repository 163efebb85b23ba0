import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cimsim.adc import (
    AdcChain,
    AdcConfig,
    BubbleError,
    ConfigError,
    FlashBank,
    Mode,
    code_from_trace,
    flash_digitize,
    hybrid_digitize,
    make_flash_bank,
    sar_digitize,
    thermometer_to_binary,
    tree_digitize,
)
from cimsim.analog import ArrayGeometry, CapVector, CimArrayState, NonidealityParams
from cimsim.energy import CALIBRATION_ENERGY
from cimsim.search_tree import (
    MavDistribution,
    balanced_tree,
    build_optimal_tree,
    mav_distribution_binomial,
)

G = ArrayGeometry()
DAC = CimArrayState.blank(G)
BANK2 = make_flash_bank(G, 2)
SAR5 = AdcConfig(5, Mode.SAR)
HYB = AdcConfig(5, Mode.HYBRID, 2)
xs = st.floats(0.0, 1.0, exclude_max=True)


def floor_code(x, bits=5):
    return min(int(np.floor(x * 2**bits)), 2**bits - 1)


def test_sar_examples():
    r = sar_digitize(0.40, DAC, SAR5)
    assert (r.code, r.bits_msb_first, r.comparisons, r.cycles) == (12, (0, 1, 1, 0, 0), 5, 5)
    assert [t.p for t in r.trace] == [16, 24, 20, 18, 19]
    assert r.energy == pytest.approx(CALIBRATION_ENERGY)
    assert sar_digitize(0.0, DAC, SAR5).code == 0
    assert sar_digitize(0.999, DAC, SAR5).code == 31


def test_flash_examples():
    r = flash_digitize(0.6, BANK2, 2)
    assert [t.bit for t in sorted(r.trace, key=lambda t: t.threshold)] == [1, 1, 0]
    assert (r.bits_msb_first, r.cycles, r.comparisons) == ((1, 0), 1, 3)
    assert flash_digitize(0.1, BANK2, 2).bits_msb_first == (0, 0)
    assert flash_digitize(0.8, BANK2, 2).bits_msb_first == (1, 1)


def test_hybrid_examples():
    r = hybrid_digitize(0.40, BANK2, DAC, HYB)
    assert r.code == 12 and r.cycles == 4
    flash = [t.bit for t in r.trace if t.mode == "flash"]
    assert thermometer_to_binary(sorted(flash, reverse=True)) == 1  # "01"
    assert [t.bit for t in r.trace if t.mode == "sar"] == [1, 0, 0]
    z = hybrid_digitize(0.0, BANK2, DAC, HYB)
    assert (z.code, z.cycles) == (0, 4)


def test_hybrid_equals_sar_on_grid():
    for i in range(64):
        x = i / 64
        assert hybrid_digitize(x, BANK2, DAC, HYB).code == sar_digitize(x, DAC, SAR5).code


def test_tree_examples():
    r = tree_digitize(0.40, balanced_tree(5), DAC)
    assert (r.code, r.comparisons) == (12, 5)
    p = np.zeros(32)
    p[0] = 1
    point = build_optimal_tree(MavDistribution(p))
    r = tree_digitize(0.01, point, DAC)
    assert (r.code, r.comparisons) == (0, 1)
    skewed = build_optimal_tree(mav_distribution_binomial(32, 0.25, 5))
    for tree in (balanced_tree(5), point, skewed):
        assert tree_digitize(0.999, tree, DAC).code == 31


def test_thermometer():
    assert thermometer_to_binary((1, 1, 0)) == 2
    assert thermometer_to_binary((0, 0, 0)) == 0
    with pytest.raises(BubbleError):
        thermometer_to_binary((1, 0, 1))
    assert thermometer_to_binary((1, 0, 1), repair=True) == 2


@given(st.lists(st.integers(0, 1), min_size=1, max_size=15))
def test_thermometer_monotone_words(flags):
    ones = sum(flags)
    word = [1] * ones + [0] * (len(flags) - ones)
    assert thermometer_to_binary(word) == ones


def test_flash_bubble_from_offsets():
    # an offset on the middle comparator makes threshold 2 fire while threshold 1 does not
    bank = FlashBank(BANK2.refs, offsets=(0.0, 0.45, 0.0))
    with pytest.raises(BubbleError):
        flash_digitize(0.1, bank, 2)
    assert flash_digitize(0.1, bank, 2, repair=True).code == 1


def test_config_errors():
    with pytest.raises(ConfigError):
        AdcConfig(6).validate(G)
    with pytest.raises(ConfigError):
        AdcConfig(5, Mode.HYBRID, 5).validate(G)
    with pytest.raises(ConfigError):
        AdcChain(AdcConfig(5, Mode.FLASH), DAC)
    with pytest.raises(ConfigError):
        sar_digitize(0.4, DAC, HYB)


@pytest.mark.parametrize("cfg", [SAR5, HYB, AdcConfig(5, Mode.HYBRID, 1), AdcConfig(5, Mode.HYBRID, 3),
                                 AdcConfig(5, Mode.FLASH), AdcConfig(5, Mode.TREE)])
def test_ideal_modes_equal_floor(cfg, grid):
    chain = AdcChain.build(cfg, G)
    want = [floor_code(x) for x in grid]
    assert chain.convert(grid).codes.tolist() == want
    assert [chain.digitize(x).code for x in grid] == want


@pytest.mark.parametrize("cfg", [SAR5, HYB, AdcConfig(5, Mode.FLASH), AdcConfig(5, Mode.TREE)])
def test_scalar_and_batch_agree(cfg, grid):
    tree = build_optimal_tree(mav_distribution_binomial(32, 0.25, 5)) if cfg.mode is Mode.TREE else None
    ni = NonidealityParams(cap_mismatch_sigma=0.03, parasitic_frac=0.1, comparator_offset=0.004, seed=9)
    chain = AdcChain.build(cfg, G, ni, tree=tree)
    batch = chain.convert(grid)
    scalar = [chain.digitize(x) for x in grid]
    assert batch.codes.tolist() == [r.code for r in scalar]
    assert batch.comparisons.tolist() == [r.comparisons for r in scalar]
    assert batch.cycles.tolist() == [r.cycles for r in scalar]
    np.testing.assert_allclose(batch.energy(chain.cost), [r.energy for r in scalar])


@given(xs)
def test_trace_replays_to_code(x):
    for res in (sar_digitize(x, DAC, SAR5), hybrid_digitize(x, BANK2, DAC, HYB),
                tree_digitize(x, build_optimal_tree(mav_distribution_binomial(32, 0.25, 5)), DAC)):
        assert code_from_trace(res.trace, 32) == res.code
        assert res.comparisons == len(res.trace)


@given(xs, st.floats(0.0, 0.4), st.floats(-0.01, 0.01))
def test_code_monotone_in_x(x, dx, offset):
    chain = AdcChain.build(SAR5, G, NonidealityParams(comparator_offset=offset))
    a, b = chain.convert([x, min(x + dx, 0.999)]).codes
    assert a <= b


@given(xs, st.integers(1, 3))
def test_offset_shifts_input(x, k):
    # positive offset delta acts like digitizing x + delta
    delta = k / 32
    shifted = AdcChain.build(SAR5, G, NonidealityParams(comparator_offset=delta))
    assert shifted.convert([x]).codes[0] == floor_code(min(x + delta, 0.999))


@pytest.mark.parametrize("frac", [0.05, 0.1, 0.2])
def test_parasitic_common_mode(frac, grid):
    ni = NonidealityParams(parasitic_frac=frac)
    source = CapVector.ideal(32, frac * 32)
    for cfg in (SAR5, HYB, AdcConfig(5, Mode.FLASH)):
        chain = AdcChain.build(cfg, G, ni, source=source)
        assert chain.convert(grid).codes.tolist() == [floor_code(x) for x in grid]


def test_noise_reproducible():
    ni = NonidealityParams(comparator_noise_sigma=0.01, seed=4)
    a = AdcChain.build(SAR5, G, ni).convert(np.linspace(0, 0.99, 50)).codes
    b = AdcChain.build(SAR5, G, ni).convert(np.linspace(0, 0.99, 50)).codes
    assert np.array_equal(a, b)


@pytest.mark.parametrize("bits", range(1, 6))
def test_cycle_counts(bits):
    assert AdcConfig(bits, Mode.SAR).cycles() == bits
    assert AdcConfig(bits, Mode.FLASH).cycles() == 1
    if bits > 1:
        assert AdcConfig(bits, Mode.HYBRID, 1).cycles() == bits
