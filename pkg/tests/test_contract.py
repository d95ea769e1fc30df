import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from parinvest.contract import (ContractKind, ContractParams, f_slope, payoff_equity,
                                payoff_policyholder)

KINDS = [ContractKind.DEFAULTABLE, ContractKind.FULLY_PROTECTED]


@pytest.fixture
def c89():
    # alpha = 0.8, delta = 0.9, L_T = 50 e^{0.2}
    return ContractParams.build(l0=50, e0=50, alpha=0.8, delta=0.9, g=0.02, horizon=10.0)


def test_derived_quantities(c89):
    assert_allclose(c89.guarantee, 50 * math.exp(0.2), rtol=1e-15)
    assert_allclose(c89.bonus_threshold, c89.guarantee / 0.8, rtol=1e-15)
    assert_allclose(c89.gap, c89.bonus_threshold - c89.guarantee, rtol=1e-15)
    assert_allclose(c89.tilde_delta, 0.72, rtol=1e-15)
    assert c89.x0 == 100.0


def test_guarantee_override():
    c = ContractParams.build(50, 50, 0.5, 0.3, 0.02, 10.0, guarantee=70.0)
    assert c.guarantee == 70.0


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2, 1.3])
def test_alpha_rejected(alpha):
    with pytest.raises(ValueError):
        ContractParams.build(50, 50, alpha, 0.5, 0.02, 10.0)


def test_delta_one_rejected():
    with pytest.raises(ValueError):
        ContractParams.build(50, 50, 0.5, 1.0, 0.02, 10.0)


class TestSlopePayoff:
    def test_at_bonus_threshold(self, c89):
        assert_allclose(f_slope(c89, c89.bonus_threshold), c89.gap, rtol=1e-12)

    def test_no_bonus_sharing(self):
        c = ContractParams.build(50, 50, 0.5, 0.0, 0.02, 10.0)
        xs = np.linspace(0, 300, 7)
        assert_allclose(f_slope(c, xs), xs - c.guarantee, rtol=1e-14)

    def test_worked_example(self, c89):
        # (1 - 0.72) * 100 - 0.1 * 50 e^{0.2}, equal to the equity payoff above Ltilde
        expected = 0.28 * 100.0 - 0.1 * c89.guarantee
        assert_allclose(f_slope(c89, 100.0), expected, rtol=1e-13)
        assert_allclose(payoff_equity(c89, ContractKind.DEFAULTABLE, 100.0), expected,
                        rtol=1e-13)


class TestEquityPayoff:
    @pytest.mark.parametrize("kind", KINDS)
    def test_zero_at_guarantee(self, c89, kind):
        assert payoff_equity(c89, kind, c89.guarantee) == pytest.approx(0.0, abs=1e-12)

    def test_boundary_at_zero(self, c89):
        assert payoff_equity(c89, ContractKind.DEFAULTABLE, 0.0) == 0.0
        assert_allclose(payoff_equity(c89, ContractKind.FULLY_PROTECTED, 0.0),
                        -c89.guarantee)

    @pytest.mark.parametrize("kind", KINDS)
    def test_above_threshold_is_slope(self, c89, kind):
        xs = np.linspace(c89.bonus_threshold, 5 * c89.bonus_threshold, 11)
        assert_allclose(payoff_equity(c89, kind, xs), f_slope(c89, xs), rtol=1e-12)

    @pytest.mark.parametrize("kind", KINDS)
    def test_continuous_and_nondecreasing(self, c89, kind):
        xs = np.linspace(0, 400, 40_001)
        v = payoff_equity(c89, kind, xs)
        assert np.all(np.diff(v) >= -1e-10)
        assert np.max(np.abs(np.diff(v))) < 2e-2  # no jumps on a fine grid

    def test_slopes(self, c89):
        L, Lt = c89.guarantee, c89.bonus_threshold
        for kind in KINDS:
            mid = np.linspace(L * 1.001, Lt * 0.999, 9)
            dv = np.gradient(payoff_equity(c89, kind, mid), mid)
            assert_allclose(dv, 1.0, rtol=1e-6)
            hi = np.linspace(Lt * 1.001, 3 * Lt, 9)
            dv = np.gradient(payoff_equity(c89, kind, hi), hi)
            assert_allclose(dv, 1.0 - c89.tilde_delta, rtol=1e-6)

    def test_sign_bounds(self, c89):
        xs = np.linspace(0, 500, 2001)
        assert np.all(payoff_equity(c89, ContractKind.DEFAULTABLE, xs) >= 0.0)
        assert np.all(payoff_equity(c89, ContractKind.FULLY_PROTECTED, xs)
                      >= -c89.guarantee)

    def test_negative_wealth_rejected(self, c89):
        with pytest.raises(ValueError):
            payoff_equity(c89, ContractKind.DEFAULTABLE, -1.0)


class TestPolicyholderPayoff:
    def test_zero_wealth_defaultable(self, c89):
        assert payoff_policyholder(c89, ContractKind.DEFAULTABLE, 0.0) == 0.0

    @pytest.mark.parametrize("kind", KINDS)
    def test_death_pays_guarantee(self, c89, kind):
        xs = np.array([0.0, 10.0, c89.guarantee, 250.0])
        assert_allclose(payoff_policyholder(c89, kind, xs, dead=True), c89.guarantee)

    @pytest.mark.parametrize("kind", KINDS)
    def test_double_threshold_plug_in(self, c89, kind):
        x = 2.0 * c89.bonus_threshold
        expected = c89.guarantee + c89.delta * c89.guarantee
        assert_allclose(payoff_policyholder(c89, kind, x), expected, rtol=1e-12)

    @given(x=st.floats(0.0, 1e6), alpha=st.floats(0.05, 0.95), delta=st.floats(0.0, 0.95))
    @settings(max_examples=120, deadline=None)
    def test_accounting_identity(self, x, alpha, delta):
        c = ContractParams.build(50, 50, alpha, delta, 0.02, 10.0)
        for kind in KINDS:
            total = payoff_equity(c, kind, x) + payoff_policyholder(c, kind, x)
            assert total == pytest.approx(x, rel=1e-12, abs=1e-9)
