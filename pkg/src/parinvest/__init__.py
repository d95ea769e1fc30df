"""Optimal investment for the equity holder of a participating life-insurance
contract: closed-form terminal wealth under no regulation, a Value-at-Risk
constraint, or a portfolio-insurance floor; strategy recovery; and
independent brute-force / Monte-Carlo verification."""

from .concavify import CaseClass, CaseSplit, Thresholds, classify, tangency_point, upsilon
from .contract import ContractKind, ContractParams, f_slope, payoff_equity, payoff_policyholder
from .dynamics import PathStats, simulate_paths, strategy_at, wealth_at
from .market import (DegenerateLawError, MarketParams, StatePriceLaw, norm_cdf, norm_ppf,
                     partial_power_expectation, quantile_upper, sample_xi, state_price_law)
from .preferences import (PreferenceSpec, delta_eps, derived_utility, h_map, inv_marginal,
                          inv_marginal_eps, loss_bound, u, u_eps, u_eps_prime, u_prime)
from .solver import (Constraint, InfeasibleBudgetError, NumericalError, Segment, Solution,
                     WealthProfile, budget_cost, build_profile, default_probability, lambda2,
                     pointwise_argmax, solve)
from .verify import (MCEstimate, OracleReport, brute_force_argmax, competitor_suite,
                     lagrangian, mc_expected_utility, oracle_gap)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
