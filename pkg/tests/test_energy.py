import pytest
from hypothesis import given
from hypothesis import strategies as st

from cimsim.energy import CALIBRATION_ENERGY, DEFAULT_COST, ZERO_COST, CostParams, pattern_toggles


def test_calibration_point():
    # 5-bit SAR at x=0.4: patterns 16,24,20,18,19 from reset -> 16+8+4+2+1 toggles
    assert DEFAULT_COST.energy(toggles=31, firings=5, merges=5) == pytest.approx(CALIBRATION_ENERGY)


def test_zero_cost():
    assert ZERO_COST.energy(100, 100, 100) == 0


@given(st.integers(0, 32), st.integers(0, 32))
def test_toggles_symmetric(a, b):
    assert pattern_toggles(a, b) == pattern_toggles(b, a) == abs(a - b)


@given(st.integers(0, 100), st.integers(0, 100), st.integers(0, 100))
def test_energy_linear(t, f, m):
    c = CostParams(2.0, 3.0, 5.0)
    assert c.energy(t, f, m) == pytest.approx(2 * t + 3 * f + 5 * m)


def test_negative_costs_rejected():
    with pytest.raises(ValueError):
        CostParams(e_precharge=-1)
