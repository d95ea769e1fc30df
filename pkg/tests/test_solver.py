import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from parinvest.concavify import CaseClass
from parinvest.contract import ContractKind, ContractParams
from parinvest.market import (DegenerateLawError, MarketParams, partial_power_expectation,
                              quantile_upper, state_price_law)
from parinvest.preferences import PreferenceSpec, u_prime
from parinvest.solver import (SEG_FLOOR, SEG_GUAR_INV, SEG_INV_EPS, SEG_PLATEAU, SEG_ZERO,
                              Constraint, InfeasibleBudgetError, Segment, WealthProfile,
                              budget_cost, build_profile, default_probability, lambda2,
                              pointwise_argmax, solve)

MKT = MarketParams(0.05, 0.03, 0.3, 10.0)


@pytest.fixture(scope="module")
def law():
    return state_price_law(MKT, 10.0)


@pytest.fixture
def contract():
    return ContractParams.build(50, 50, 0.4, 0.6, 0.02, 10.0)


def prefs(gamma=0.5, eta=1.01, eps=0.0, kind=ContractKind.DEFAULTABLE):
    return PreferenceSpec(gamma, eta, eps, kind)


class TestBudgetCost:
    def test_constant_profile_prices_like_a_bond(self, law):
        prof = WealthProfile((), (Segment(SEG_PLATEAU, 0.0, 0.0, 37.0),), lam=1.0)
        assert_allclose(budget_cost(prof, law), 37.0 * math.exp(-0.3), rtol=1e-12)

    def test_power_profile_lognormal_moment(self, law):
        lam = 0.17
        prof = WealthProfile((), (Segment(SEG_GUAR_INV, lam**-2, -2.0, 0.0),), lam=lam)
        expected = lam**-2 * partial_power_expectation(law, -1.0, 0.0, np.inf)
        assert_allclose(budget_cost(prof, law), expected, rtol=1e-12)

    @pytest.mark.parametrize("eps", [0.0, 0.5, 1.0])
    def test_dual_path_agreement(self, law, contract, eps):
        sol = solve(MKT, contract, prefs(eps=eps), Constraint.none())
        closed = budget_cost(sol.profile, law)
        quadr = budget_cost(sol.profile, law, method="quadrature", tol=1e-11 * 100)
        assert_allclose(quadr, closed, rtol=1e-9)

    def test_degenerate_law_rejected(self, contract):
        lawd = state_price_law(MarketParams(0.03, 0.03, 0.3, 10.0), 10.0)
        prof = WealthProfile((), (Segment(SEG_PLATEAU, 0.0, 0.0, 1.0),), lam=1.0)
        with pytest.raises(DegenerateLawError):
            budget_cost(prof, lawd)


class TestBudgetMap:
    def test_psi_strictly_decreasing_over_six_decades(self, law, contract):
        pf = prefs(eps=0.1)
        lams = np.geomspace(1e-4, 1e2, 25)
        vals = [budget_cost(build_profile(pf, contract, Constraint.none(), lam).profile,
                            law) for lam in lams]
        assert np.all(np.diff(vals) < 0)
        assert vals[0] > 1e5 and vals[-1] < 1e-2

    def test_var_budget_map_decreasing(self, law, contract):
        pf = prefs()
        con = Constraint.var(0.025)
        lams = np.geomspace(1e-3, 1e1, 21)
        vals = [budget_cost(build_profile(pf, contract, con, lam, law).profile, law)
                for lam in lams]
        assert np.all(np.diff(vals) < 0)


class TestSolveBasics:
    @pytest.mark.parametrize("kind", [ContractKind.DEFAULTABLE,
                                      ContractKind.FULLY_PROTECTED])
    @pytest.mark.parametrize("ckind", ["none", "var", "pi"])
    def test_budget_residual(self, contract, kind, ckind):
        con = {"none": Constraint.none(), "var": Constraint.var(0.025),
               "pi": Constraint.pi(0.2 * contract.guarantee)}[ckind]
        sol = solve(MKT, contract, prefs(kind=kind), con)
        assert sol.budget_residual <= 1e-6

    def test_profile_nonincreasing_everywhere(self, contract):
        for eps in (0.0, 0.1, 1.0):
            sol = solve(MKT, contract, prefs(eps=eps), Constraint.var(0.025))
            grid = np.geomspace(1e-3, 1e3, 4001)
            w = sol.profile(grid)
            assert np.all(np.diff(w) <= 1e-9)
            assert np.all(w >= 0.0)

    def test_tie_break_takes_left_segment(self, contract):
        sol = solve(MKT, contract, prefs(), Constraint.none())
        b = sol.profile.breakpoints[-1]
        assert sol.profile(b) > 0.0  # larger wealth, not the zero branch
        assert sol.profile(b * (1 + 1e-12)) == 0.0

    def test_no_plateau_without_bonus(self):
        c = ContractParams.build(50, 50, 0.4, 0.0, 0.02, 10.0)
        sol = solve(MKT, c, prefs(), Constraint.none())
        kinds = [s.kind for s in sol.profile.segments]
        assert SEG_PLATEAU not in kinds
        assert kinds == [SEG_GUAR_INV, SEG_ZERO]  # call-payoff form

    def test_degenerate_market_rejected(self, contract):
        with pytest.raises(DegenerateLawError):
            solve(MarketParams(0.03, 0.03, 0.3, 10.0), contract, prefs(),
                  Constraint.none())


class TestCertainDeathCollapse:
    def test_profiles_coincide(self, contract):
        grid = np.geomspace(1e-2, 50, 2001)
        sols = [solve(MKT, contract, prefs(eps=1.0, kind=k), Constraint.none())
                for k in (ContractKind.DEFAULTABLE, ContractKind.FULLY_PROTECTED)]
        diff = np.max(np.abs(sols[0].profile(grid) - sols[1].profile(grid)))
        assert diff <= 1e-10 * contract.x0
        for sol in sols:
            assert [s.kind for s in sol.profile.segments] == [SEG_GUAR_INV, SEG_ZERO]
            assert len(sol.profile.breakpoints) == 1


class TestVaR:
    def test_binding_zero_region_starts_at_quantile(self, law, contract):
        beta = 0.025
        unc = solve(MKT, contract, prefs(), Constraint.none())
        assert unc.default_prob > beta  # constraint genuinely binds here
        sol = solve(MKT, contract, prefs(), Constraint.var(beta))
        assert sol.binding
        assert sol.lam2 > 0.0
        xi_bar = quantile_upper(law, beta)
        assert_allclose(sol.profile.breakpoints[-1], xi_bar, rtol=1e-12)
        assert abs(sol.default_prob - beta) <= 1e-12

    def test_nonbinding_equals_unconstrained(self, contract):
        beta = 0.5
        unc = solve(MKT, contract, prefs(), Constraint.none())
        sol = solve(MKT, contract, prefs(), Constraint.var(beta))
        assert not sol.binding
        assert sol.lam2 == 0.0
        grid = np.geomspace(1e-2, 30, 1001)
        assert_allclose(sol.profile(grid), unc.profile(grid), rtol=1e-7)

    def test_lambda2_grows_as_beta_shrinks(self, law, contract):
        sols = [solve(MKT, contract, prefs(), Constraint.var(b))
                for b in (0.025, 0.01, 0.002)]
        l2 = [s.lam2 for s in sols]
        assert l2[0] < l2[1] < l2[2]

    def test_lambda2_zero_when_quantile_beyond_drop(self, law, contract):
        pf = prefs()
        from parinvest.solver import classification_for
        split = classification_for(pf, contract, Constraint.none())
        lam = 0.13
        xi_drop = split.y_one / lam
        assert lambda2(pf, contract, split, lam, xi_drop * 0.9) == 0.0
        assert lambda2(pf, contract, split, lam, xi_drop * 1.1) > 0.0

    def test_dominance_in_bad_states(self, contract):
        unc = solve(MKT, contract, prefs(), Constraint.none())
        var = solve(MKT, contract, prefs(), Constraint.var(0.025))
        grid = np.geomspace(0.05, 30, 3001)
        wu, wv = unc.profile(grid), var.profile(grid)
        ok = wv >= wu - 1e-12
        worst = np.where(~ok)[0]
        assert worst.size == 0 or worst.max() < len(grid) - 1
        xi_star = grid[worst.max() + 1] if worst.size else grid[0]
        assert xi_star <= unc.profile.breakpoints[-1] * (1 + 1e-9)

    def test_infeasible_budget_raises(self):
        c = ContractParams.build(l0=5000.0, e0=1.0, alpha=0.4, delta=0.6, g=0.02,
                                 horizon=10.0)
        with pytest.raises(InfeasibleBudgetError):
            solve(MKT, c, prefs(), Constraint.var(1e-6))


class TestPortfolioInsurance:
    def test_floor_is_attained(self, contract):
        floor = 0.2 * contract.guarantee
        sol = solve(MKT, contract, prefs(), Constraint.pi(floor))
        grid = np.geomspace(1e-3, 1e3, 2001)
        w = sol.profile(grid)
        assert w.min() == pytest.approx(floor, rel=1e-12)
        assert sol.profile.segments[-1].kind == SEG_FLOOR

    def test_zero_floor_matches_unconstrained(self, contract):
        sol0 = solve(MKT, contract, prefs(), Constraint.pi(0.0))
        unc = solve(MKT, contract, prefs(), Constraint.none())
        grid = np.geomspace(1e-2, 30, 801)
        assert_allclose(sol0.profile(grid), unc.profile(grid), rtol=1e-8)

    def test_floor_between_guarantee_and_threshold(self, contract):
        floor = 1.5 * contract.guarantee
        sol = solve(MKT, contract, prefs(eps=0.1), Constraint.pi(floor))
        kinds = [s.kind for s in sol.profile.segments]
        assert kinds == [SEG_INV_EPS, SEG_PLATEAU, SEG_GUAR_INV, SEG_FLOOR]
        assert sol.default_prob == 0.0
        # profile is continuous at the drop to the floor
        b = sol.profile.breakpoints[-1]
        assert_allclose(sol.profile(b), floor, rtol=1e-9)

    def test_floor_at_guarantee_has_no_floor_segment(self, contract):
        sol = solve(MKT, contract, prefs(), Constraint.pi(contract.guarantee))
        kinds = [s.kind for s in sol.profile.segments]
        assert SEG_FLOOR not in kinds and SEG_ZERO not in kinds

    def test_floor_above_bonus_threshold(self, contract):
        floor = 1.1 * contract.bonus_threshold
        sol = solve(MKT, contract, prefs(eps=0.3), Constraint.pi(floor))
        kinds = [s.kind for s in sol.profile.segments]
        assert kinds == [SEG_INV_EPS, SEG_FLOOR]
        grid = np.geomspace(1e-3, 1e3, 1001)
        assert sol.profile(grid).min() == pytest.approx(floor, rel=1e-12)

    def test_infeasible_floor_raises(self, contract):
        floor = contract.x0 * math.exp(0.03 * 10.0) * 1.05
        with pytest.raises(InfeasibleBudgetError):
            solve(MKT, contract, prefs(), Constraint.pi(floor))


class TestNoLossRegionBranch:
    @pytest.mark.parametrize("gamma", [1.0, 2.0])
    def test_no_zero_region(self, contract, gamma):
        sol = solve(MKT, contract, prefs(gamma=gamma), Constraint.none())
        kinds = [s.kind for s in sol.profile.segments]
        assert SEG_ZERO not in kinds
        assert sol.case is None
        assert sol.default_prob == 0.0
        grid = np.geomspace(1e-4, 1e6, 2001)
        assert np.all(sol.profile(grid) > contract.guarantee)

    def test_var_never_binds(self, contract):
        sol = solve(MKT, contract, prefs(gamma=2.0), Constraint.var(0.01))
        assert not sol.binding and sol.lam2 == 0.0

    def test_low_floor_not_binding(self, contract):
        sol_pi = solve(MKT, contract, prefs(gamma=2.0),
                       Constraint.pi(0.2 * contract.guarantee))
        sol = solve(MKT, contract, prefs(gamma=2.0), Constraint.none())
        grid = np.geomspace(1e-2, 1e2, 801)
        assert_allclose(sol_pi.profile(grid), sol.profile(grid), rtol=1e-8)

    def test_infeasible_when_guarantee_unaffordable(self):
        c = ContractParams.build(l0=200.0, e0=1.0, alpha=0.4, delta=0.6, g=0.02,
                                 horizon=10.0)
        # L_T e^{-rT} = 200 e^{0.2} e^{-0.3} > 201
        with pytest.raises(InfeasibleBudgetError):
            solve(MKT, c, prefs(gamma=2.0), Constraint.none())


class TestDefaultProbability:
    def test_four_region_formula(self, law, contract):
        sol = solve(MKT, contract, prefs(), Constraint.none())
        from parinvest.market import norm_cdf
        b = sol.profile.breakpoints[-1]
        expected = 1.0 - norm_cdf((math.log(b) - law.log_mean) / law.log_sd)
        assert_allclose(sol.default_prob, expected, rtol=1e-14)

    def test_pi_above_guarantee_never_defaults(self, law, contract):
        sol = solve(MKT, contract, prefs(), Constraint.pi(contract.guarantee * 1.2))
        assert default_probability(sol, law) == 0.0


class TestPointwiseArgmax:
    def test_inada_limits(self, law, contract):
        pf = prefs(eps=0.1)
        lam = 0.1
        assert pointwise_argmax(pf, contract, lam, 1e-8) > 1e10
        assert pointwise_argmax(pf, contract, lam, 1e6) == 0.0

    def test_var_needs_law(self, contract):
        with pytest.raises(ValueError):
            build_profile(prefs(), contract, Constraint.var(0.025), 0.1, law=None)

    def test_invalid_lambda(self, contract):
        with pytest.raises(ValueError):
            pointwise_argmax(prefs(), contract, 0.0, 1.0)
