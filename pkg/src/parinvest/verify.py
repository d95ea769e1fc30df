"""Independent oracles: grid argmax, Monte-Carlo expectations, competitor payoffs.

Nothing here reuses the solver's case analysis.  The brute-force maximizer
scans a dense wealth grid plus the exact candidate set, the Monte-Carlo
estimator prices and scores arbitrary payoff maps with antithetic sampling,
and the competitor suite checks that the solved profile beats a family of
feasible alternatives financed by the same initial capital.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contract import ContractParams
from .market import StatePriceLaw, partial_power_expectation, quantile_upper, sample_xi
from .preferences import (PreferenceSpec, derived_utility, h_map, inv_marginal,
                          inv_marginal_eps, u_eps_prime, u_prime)
from .solver import (SEG_ZERO, Constraint, Segment, Solution, WealthProfile, budget_cost,
                     default_probability)

GRID_POINTS = 20_001


@dataclass(frozen=True)
class MCEstimate:
    utility: float
    utility_se: float
    budget: float
    budget_se: float


@dataclass(frozen=True)
class CompetitorResult:
    name: str
    utility: float
    se: float
    margin_se: float  # (solution - competitor) in units of the paired se


@dataclass(frozen=True)
class OracleReport:
    max_lagrangian_gap: float
    budget_mc: float
    budget_mc_se: float
    utility_mc: float
    utility_mc_se: float
    competitors: tuple
    dominance_xi_star: float | None
    failures: tuple


def lagrangian(prefs: PreferenceSpec, c: ContractParams, lam: float, xi: float, x,
               lam2: float = 0.0):
    """Psi(x) = U_tilde(x) - lam xi x - lam2 1{x < L_T}, vectorized in x."""
    xv = np.asarray(x, dtype=float)
    val = derived_utility(prefs, c, xv) - lam * xi * xv
    if lam2 != 0.0:
        val = val - lam2 * (xv < c.guarantee)
    return val


def brute_force_argmax(prefs: PreferenceSpec, c: ContractParams, lam: float, xi: float,
                       lam2: float = 0.0, floor: float = 0.0) -> float:
    """Grid maximizer of the pointwise Lagrangian, independent of the case tables.

    The grid is logarithmic on (0, 10 h(lam xi 1e-3)] with 20,001 points; the
    exact candidates {floor, L_T, Ltilde, L_T + I, I_eps} are appended so the
    interior optima are hit exactly.  Raises if the argmax lands on the top
    grid point (the Inada bound would then be wrong).
    """
    y = lam * xi
    hi = 10.0 * h_map(prefs, c, min(y * 1e-3, (1.0 - c.tilde_delta) * u_prime(prefs, c.gap)))
    grid = np.geomspace(hi * 1e-12, hi, GRID_POINTS)
    cand = [floor, c.guarantee, c.bonus_threshold, c.guarantee + inv_marginal(prefs, y)]
    y_tilde = u_eps_prime(prefs, c, c.bonus_threshold)
    if y <= y_tilde:
        cand.append(inv_marginal_eps(prefs, c, y))
    xs = np.concatenate([grid, np.asarray(cand, dtype=float)])
    xs = xs[xs >= floor]
    vals = lagrangian(prefs, c, lam, xi, xs, lam2)
    best = int(np.argmax(vals))
    if best == GRID_POINTS - 1:
        raise RuntimeError("brute-force argmax hit the top grid point; bound too small")
    return float(xs[best])


def mc_expected_utility(payoff, law: StatePriceLaw, prefs: PreferenceSpec,
                        c: ContractParams, n: int, seed: int) -> MCEstimate:
    """Antithetic MC of E[U_tilde(X(xi))] and E[xi X(xi)] with pairwise standard errors.

    ``payoff`` is a Solution or any vectorized map xi -> wealth.
    """
    if n < 10_000:
        raise ValueError("use at least 1e4 samples for stable standard errors")
    fn = payoff.profile if isinstance(payoff, Solution) else payoff
    xi = sample_xi(law, n, seed=seed, antithetic=True)
    w = fn(xi)
    util = derived_utility(prefs, c, w)
    cost = xi * w
    return MCEstimate(utility=float(np.mean(util)), utility_se=_pair_se(util),
                      budget=float(np.mean(cost)), budget_se=_pair_se(cost))


def _pair_se(values: np.ndarray) -> float:
    # antithetic draws come in consecutive pairs; average them before the CLT
    k = len(values) // 2
    pairs = values[: 2 * k].reshape(k, 2).mean(axis=1)
    return float(np.std(pairs, ddof=1) / np.sqrt(k))


def _power_profile(law: StatePriceLaw, prefs: PreferenceSpec, budget: float,
                   base: float = 0.0):
    """Payoff base + m xi^{-1/gamma} costing exactly ``budget``."""
    moment = partial_power_expectation(law, 1.0 - 1.0 / prefs.gamma, 0.0, np.inf)
    m = (budget - base * partial_power_expectation(law, 1.0, 0.0, np.inf)) / moment
    if m <= 0.0:
        raise ValueError("competitor cannot be financed")
    return lambda xi: base + m * np.asarray(xi, dtype=float) ** (-1.0 / prefs.gamma)


def _scaled_profile(profile: WealthProfile, shift: float, law: StatePriceLaw,
                    x0: float):
    """Breakpoints shifted by ``shift`` (the payoff becomes X(xi / shift)),
    then wealth rescaled so the competitor costs exactly x0."""
    segs = tuple(
        Segment(s.kind, s.coef * shift ** (-s.power), s.power, s.offset, s.closed_form)
        if s.closed_form else s
        for s in profile.segments)
    inv = None
    if profile.inv_eps is not None:
        inv = lambda y, _f=profile.inv_eps: _f(np.asarray(y) / shift)
    moved = WealthProfile(breakpoints=tuple(b * shift for b in profile.breakpoints),
                          segments=segs, lam=profile.lam, inv_eps=inv)
    cost = budget_cost(moved, law)
    c = x0 / cost
    return lambda xi: c * moved(xi)


def _projected_var(unconstrained: Solution, law: StatePriceLaw, xi_bar: float, x0: float):
    """Unregulated optimum made VaR-feasible: the guarantee is held on
    {xi <= xi_bar} and the excess X_unc - L_T 1{xi <= xi_drop} is scaled to
    the remaining budget.

    X_unc >= L_T up to its own drop point and zero after, so the excess cost
    is X0 - L_T E[xi 1{xi <= xi_drop}] exactly; behind the drop the payoff is
    the bare guarantee up to xi_bar.
    """
    base = unconstrained.profile
    L = unconstrained.contract.guarantee
    bounds = [0.0, *base.breakpoints, np.inf]
    xi_drop = min((bounds[k] for k, s in enumerate(base.segments) if s.kind == SEG_ZERO),
                  default=np.inf)
    xi_drop = min(xi_drop, xi_bar)
    guaranteed_cost = L * partial_power_expectation(law, 1.0, 0.0, xi_bar)
    excess_cost = x0 - L * partial_power_expectation(law, 1.0, 0.0, xi_drop)
    scale = (x0 - guaranteed_cost) / excess_cost

    def payoff(xi):
        xiv = np.asarray(xi, dtype=float)
        excess = base(xiv) - L * (xiv <= xi_drop)
        return L * (xiv <= xi_bar) + scale * excess

    return payoff


def competitor_suite(solution: Solution, market, n: int = 200_000,
                     seed: int = 20_240_601) -> OracleReport:
    """Paired-MC comparison of the solution against >= 5 feasible competitors.

    Every competitor costs exactly X0 by closed-form scaling; for VaR runs
    competitors violating the default-probability cap are excluded.  Failure
    messages name the offending gate.
    """
    from .market import state_price_law
    from .solver import solve

    prefs, c = solution.prefs, solution.contract
    law = state_price_law(market, market.horizon)
    x0 = c.x0
    constraint = solution.constraint
    xi = sample_xi(law, n, seed=seed, antithetic=True)
    w_sol = solution.profile(xi)
    u_sol = derived_utility(prefs, c, w_sol)
    est = mc_expected_utility(solution, law, prefs, c, n, seed)

    competitors: dict[str, object] = {}
    competitors["bond_only"] = lambda x: np.full_like(np.asarray(x, dtype=float),
                                                      x0 / law.mean())
    competitors["merton"] = _power_profile(law, prefs, x0)
    competitors["guarantee_plus_power"] = _power_profile(law, prefs, x0,
                                                         base=0.5 * c.guarantee)
    competitors["perturbed_up_5pct"] = _scaled_profile(solution.profile, 1.05, law, x0)
    competitors["perturbed_down_5pct"] = _scaled_profile(solution.profile, 0.95, law, x0)
    if constraint.kind == "var" and prefs.concavifiable:
        xi_bar = quantile_upper(law, constraint.beta)
        unconstrained = solve(market, c, prefs, Constraint.none())
        competitors["projected_unconstrained"] = _projected_var(unconstrained, law,
                                                                xi_bar, x0)
    elif constraint.kind == "pi" and constraint.floor > 0.0:
        competitors["floor_plus_power"] = _power_profile(law, prefs, x0,
                                                         base=constraint.floor)

    failures: list[str] = []
    results: list[CompetitorResult] = []
    for name, fn in competitors.items():
        w = fn(xi)
        if np.any(w < -1e-9):
            failures.append(f"competitor_negative_wealth:{name}")
            continue
        if constraint.kind == "var":
            viol = float(np.mean(w < c.guarantee))
            if viol > constraint.beta + 3.0 * np.sqrt(constraint.beta / n):
                continue  # infeasible under the VaR cap: excluded
        if constraint.kind == "pi" and np.any(w < constraint.floor - 1e-9):
            continue
        u_comp = derived_utility(prefs, c, w)
        if not np.all(np.isfinite(u_comp)):
            # -inf utility (gamma >= 1 below the guarantee): beaten outright
            results.append(CompetitorResult(name=name, utility=-np.inf, se=0.0,
                                            margin_se=np.inf))
            continue
        diff = u_sol - u_comp
        se = _pair_se(diff)
        margin = float(np.mean(diff))
        margin_se = margin / se if se > 0.0 else (np.inf if margin >= 0.0 else -np.inf)
        results.append(CompetitorResult(name=name, utility=float(np.mean(u_comp)),
                                        se=_pair_se(u_comp), margin_se=margin_se))
        if margin < -3.0 * se:
            failures.append(f"competitor_beats_solution:{name}")

    if len(results) < 4:
        failures.append("too_few_feasible_competitors")
    if abs(est.budget - x0) > 4.0 * max(est.budget_se, 1e-12):
        failures.append("mc_budget_mismatch")

    return OracleReport(max_lagrangian_gap=np.nan, budget_mc=est.budget,
                        budget_mc_se=est.budget_se, utility_mc=est.utility,
                        utility_mc_se=est.utility_se, competitors=tuple(results),
                        dominance_xi_star=None, failures=tuple(failures))


def oracle_gap(prefs: PreferenceSpec, c: ContractParams, lam: float, xi: float,
               closed_value: float, lam2: float = 0.0, floor: float = 0.0) -> float:
    """Relative shortfall of the closed-form maximizer vs the brute-force grid."""
    x_grid = brute_force_argmax(prefs, c, lam, xi, lam2, floor)
    v_grid = float(lagrangian(prefs, c, lam, xi, x_grid, lam2))
    v_closed = closed_value
    scale = max(1.0, abs(v_grid))
    return (v_grid - v_closed) / scale
