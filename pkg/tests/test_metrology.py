import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cimsim.adc import AdcChain, AdcConfig, Mode
from cimsim.analog import ArrayGeometry, NonidealityParams
from cimsim.metrology import Staircase, dnl_inl, monte_carlo_linearity, ramp_test, trial_seed

G = ArrayGeometry()
SAR5 = AdcConfig(5, Mode.SAR)


def synthetic(widths, ppc=16):
    """Staircase whose code c occupies widths[c] * ppc consecutive samples."""
    codes = np.repeat(np.arange(len(widths)), (np.array(widths) * ppc).astype(int))
    x = np.arange(codes.size) / codes.size
    return Staircase(x, codes, int(np.log2(len(widths))))


def test_ideal_ramp():
    stair = ramp_test(AdcChain.build(SAR5, G))
    assert stair.codes.size == 32 * 64
    assert np.array_equal(stair.codes, np.floor(stair.x * 32).astype(int))
    rep = dnl_inl(stair)
    assert rep.max_abs_dnl == 0 and rep.max_abs_inl == 0 and rep.missing_codes == ()


def test_offset_shifts_staircase():
    ideal = ramp_test(AdcChain.build(SAR5, G)).codes
    shifted = ramp_test(AdcChain.build(SAR5, G, NonidealityParams(comparator_offset=1 / 32))).codes
    assert np.array_equal(shifted[:-64], np.minimum(ideal[64:], 31))
    assert dnl_inl(Staircase(np.arange(shifted.size) / shifted.size, shifted, 5)).missing_codes == (0,)


def test_noise_stays_near_envelope():
    lsb = 1 / 32
    chain = AdcChain.build(SAR5, G, NonidealityParams(comparator_noise_sigma=0.25 * lsb, seed=0))
    stair = ramp_test(chain)
    ideal = np.floor(stair.x * 32)
    assert np.max(np.abs(stair.codes - ideal)) <= 1


def test_doubled_code_width():
    n = 32
    widths = [1] * n
    widths[10] = 2
    rep = dnl_inl(synthetic(widths))
    # endpoint reference spreads the extra LSB over the n-2 inner codes
    assert rep.dnl[10] == pytest.approx(2 * (n - 2) / (n - 1) - 1)
    others = np.delete(rep.dnl[1:n - 1], 9)
    np.testing.assert_allclose(others, (n - 2) / (n - 1) - 1)
    assert rep.inl[n - 1] == pytest.approx(0, abs=1e-12)


def test_missing_code():
    widths = [1] * 32
    widths[5], widths[6] = 0, 2
    rep = dnl_inl(synthetic(widths))
    assert rep.missing_codes == (5,)
    assert rep.dnl[5] == -1


@settings(max_examples=30)
@given(st.integers(0, 2**32), st.floats(0.0, 0.05))
def test_linearity_invariants(seed, sigma):
    ni = NonidealityParams(cap_mismatch_sigma=sigma, seed=seed)
    stair = ramp_test(AdcChain.build(SAR5, G, ni), points_per_code=16)
    assert np.all(np.diff(stair.codes) >= 0)  # monotone without noise
    rep = dnl_inl(stair)
    assert np.all(rep.dnl >= -1)
    assert rep.dnl[0] == 0
    np.testing.assert_allclose(rep.inl, np.cumsum(rep.dnl))
    assert rep.inl[-1] == pytest.approx(0, abs=1e-9)


def test_csv_headers():
    stair = ramp_test(AdcChain.build(SAR5, G), points_per_code=8)
    assert stair.to_csv().splitlines()[0] == "x,code"
    assert dnl_inl(stair).to_csv().splitlines()[:2] == ["code,dnl,inl", "0,0.0,0.0"]


def test_points_per_code_floor():
    with pytest.raises(ValueError):
        ramp_test(AdcChain.build(SAR5, G), points_per_code=4)


def test_monte_carlo_rows():
    rows = monte_carlo_linearity([0.0, 0.01, 0.02, 0.04], 12, SAR5, G, points_per_code=16)
    assert all(rows[0][k] == 0 for k in rows[0] if k.startswith(("dnl_q", "inl_q")))
    for key in ("dnl_q0.5", "dnl_q1", "inl_q0.5", "inl_q1"):
        vals = [r[key] for r in rows]
        assert vals == sorted(vals)


def test_monte_carlo_single_trial_matches_direct():
    base = NonidealityParams(seed=77)
    (row,) = monte_carlo_linearity([0.02], 1, SAR5, G, base, points_per_code=16)
    ni = NonidealityParams(cap_mismatch_sigma=0.02, seed=trial_seed(77, 0))
    rep = dnl_inl(ramp_test(AdcChain.build(SAR5, G, ni), 16))
    assert row["dnl_q1"] == rep.max_abs_dnl and row["inl_q0.5"] == rep.max_abs_inl


def test_monte_carlo_deterministic():
    a = monte_carlo_linearity([0.01], 5, SAR5, G, NonidealityParams(seed=3), points_per_code=16)
    b = monte_carlo_linearity([0.01], 5, SAR5, G, NonidealityParams(seed=3), points_per_code=16)
    assert a == b
