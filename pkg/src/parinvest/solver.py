"""Pointwise Lagrangian maximization and optimal terminal-wealth profiles.

The static problem sup E[U_tilde(X)] s.t. E[xi X] <= X0 is solved pointwise:
for each state the maximizer of Psi(X) = U_tilde(X) - lambda xi X (minus a
VaR penalty lambda_2 1{X < L_T}, or restricted to X >= l under portfolio
insurance) is one of the local optima

    I_eps(lambda xi)  on  [Ltilde, inf),
    Ltilde            at the bonus threshold,
    L_T + I(lambda xi) on [L_T, Ltilde],
    the boundary (0 or the floor l),

and the comparisons between them reduce to the three decreasing functions

    Delta_a(y) = U_eps(I_eps(y)) - y I_eps(y) + q
    Delta_b(y) = U(Lhat) - y Ltilde + q
    Delta_c(y) = U(I(y)) - y (I(y) + L_T) + q,       y = lambda xi,

whose zeros are the drop thresholds.  The resulting terminal wealth is a
non-increasing step/power profile in xi, represented here as segments
between breakpoints.  Every closed-form segment is affine in a power of xi,
X(xi) = coef * xi^(-1/gamma) + offset, so budget and conditional moments
reduce to lognormal partial moments; only the mortality mixture I_eps with
eps in (0, 1) needs quadrature.

The multiplier solves E[xi X(lambda, xi)] = X0 by bracketed bisection
(the budget map is strictly decreasing and continuous in lambda).  Under a
VaR constraint the penalty lambda_2 is an explicit function of lambda, so no
outer fixed-point loop is needed.  When the unregulated wealth would already
default with probability <= beta the constraint is reported non-binding and
the unregulated profile is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .concavify import CaseClass, CaseSplit, classify
from .contract import ContractParams
from .market import (DegenerateLawError, MarketParams, StatePriceLaw, norm_cdf,
                     partial_power_expectation, quantile_upper, state_price_law)
from .preferences import (PreferenceSpec, inv_marginal, inv_marginal_eps, loss_bound, u,
                          u_eps, u_eps_prime, u_prime)
from .quadrature import gauss_legendre_adaptive


class InfeasibleBudgetError(ValueError):
    """Initial capital cannot finance the constraint (VaR hedge or floor)."""


class NumericalError(RuntimeError):
    """Root finding or quadrature failed to reach its tolerance."""


@dataclass(frozen=True)
class Constraint:
    """Regulatory regime: none, VaR(beta) on P(X < L_T), or a.s. floor X >= l."""

    kind: str
    beta: float | None = None
    floor: float | None = None

    def __post_init__(self):
        if self.kind not in ("none", "var", "pi"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "var" and not (self.beta is not None and 0.0 < self.beta < 1.0):
            raise ValueError("VaR constraint needs beta in (0, 1)")
        if self.kind == "pi" and not (self.floor is not None and self.floor >= 0.0):
            raise ValueError("PI constraint needs a non-negative floor")

    @classmethod
    def none(cls) -> "Constraint":
        return cls(kind="none")

    @classmethod
    def var(cls, beta: float) -> "Constraint":
        return cls(kind="var", beta=float(beta))

    @classmethod
    def pi(cls, floor: float) -> "Constraint":
        return cls(kind="pi", floor=float(floor))


# segment kinds, in the order wealth levels usually appear
SEG_INV_EPS = "inv_marginal_eps"
SEG_PLATEAU = "plateau"
SEG_GUAR_INV = "guarantee_plus_inv"
SEG_FLOOR = "floor"
SEG_ZERO = "zero"


@dataclass(frozen=True)
class Segment:
    """One piece of the terminal-wealth map; closed form means coef*xi^power + offset."""

    kind: str
    coef: float = 0.0
    power: float = 0.0
    offset: float = 0.0
    closed_form: bool = True

    def same_evaluator(self, other: "Segment") -> bool:
        if self.closed_form != other.closed_form:
            return False
        if not self.closed_form:
            return self.kind == other.kind
        return (self.coef == other.coef and self.power == other.power
                and self.offset == other.offset)


@dataclass(frozen=True)
class WealthProfile:
    """Piecewise map xi -> X(lambda, xi): segments[k] rules (b_{k-1}, b_k].

    A point exactly on a breakpoint takes the left (larger-wealth) segment,
    which fixes the measure-zero tie deterministically.
    """

    breakpoints: tuple
    segments: tuple
    lam: float
    inv_eps: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if len(self.segments) != len(self.breakpoints) + 1:
            raise ValueError("need exactly one more segment than breakpoints")
        if any(b2 < b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be non-decreasing")
        if any(not s.closed_form for s in self.segments) and self.inv_eps is None:
            raise ValueError("profiles with mixture segments need an inverter")

    def segment_index(self, xi):
        return np.searchsorted(np.asarray(self.breakpoints), np.asarray(xi, dtype=float),
                               side="left")

    def __call__(self, xi):
        xiv = np.atleast_1d(np.asarray(xi, dtype=float))
        if np.any(xiv <= 0.0):
            raise ValueError("state price must be positive")
        idx = np.searchsorted(np.asarray(self.breakpoints), xiv, side="left")
        out = np.empty_like(xiv)
        for k, seg in enumerate(self.segments):
            mask = idx == k
            if not mask.any():
                continue
            if seg.closed_form:
                if seg.coef == 0.0:
                    out[mask] = seg.offset
                else:
                    out[mask] = seg.coef * xiv[mask] ** seg.power + seg.offset
            else:
                out[mask] = self.inv_eps(self.lam * xiv[mask])
        return float(out[0]) if np.isscalar(xi) else out.reshape(np.shape(xi))

    def segment_labels(self, xi):
        idx = np.atleast_1d(self.segment_index(xi))
        return [self.segments[k].kind for k in idx]


@dataclass(frozen=True)
class Solution:
    """Solved profile with multipliers, case label and budget diagnostics."""

    profile: WealthProfile
    lam: float
    lam2: float
    case: CaseClass | None
    binding: bool
    constraint: Constraint
    budget_residual: float
    default_prob: float
    contract: ContractParams
    prefs: PreferenceSpec


@dataclass(frozen=True)
class BuiltProfile:
    profile: WealthProfile
    lam2: float
    case: CaseClass | None
    binding: bool


def _inv_eps_callable(prefs: PreferenceSpec, c: ContractParams):
    # clamp to the admissible range so zero-weight quadrature nodes outside a
    # segment's window cannot trip the domain check
    y_max = u_eps_prime(prefs, c, c.bonus_threshold)
    return lambda y: inv_marginal_eps(prefs, c, np.minimum(y, y_max))


def _seg_inv_eps(prefs: PreferenceSpec, c: ContractParams, lam: float) -> Segment:
    g = prefs.gamma
    if prefs.epsilon == 1.0:
        return Segment(SEG_GUAR_INV, coef=lam ** (-1.0 / g), power=-1.0 / g, offset=c.guarantee)
    if prefs.epsilon == 0.0:
        one_dt = 1.0 - c.tilde_delta
        coef = one_dt ** (1.0 / g - 1.0) * lam ** (-1.0 / g)
        offset = (1.0 - c.delta) * c.guarantee / one_dt
        return Segment(SEG_INV_EPS, coef=coef, power=-1.0 / g, offset=offset)
    # power is kept as metadata for quadrature windows even without a closed form
    return Segment(SEG_INV_EPS, power=-1.0 / g, closed_form=False)


def _seg_guar_inv(prefs: PreferenceSpec, c: ContractParams, lam: float) -> Segment:
    g = prefs.gamma
    return Segment(SEG_GUAR_INV, coef=lam ** (-1.0 / g), power=-1.0 / g, offset=c.guarantee)


def _seg_const(kind: str, value: float) -> Segment:
    return Segment(kind, coef=0.0, power=0.0, offset=float(value))


def _assemble(prefs, c, lam, y_breaks, tokens) -> WealthProfile:
    """Materialize segment tokens, drop empty intervals, merge equal evaluators."""
    segs = []
    for tok in tokens:
        if tok == "inv_eps":
            segs.append(_seg_inv_eps(prefs, c, lam))
        elif tok == "plateau":
            segs.append(_seg_const(SEG_PLATEAU, c.bonus_threshold))
        elif tok == "guar_inv":
            segs.append(_seg_guar_inv(prefs, c, lam))
        elif tok == "zero":
            segs.append(_seg_const(SEG_ZERO, 0.0))
        elif isinstance(tok, tuple) and tok[0] == "floor":
            if tok[1] == 0.0:
                segs.append(_seg_const(SEG_ZERO, 0.0))
            else:
                segs.append(_seg_const(SEG_FLOOR, tok[1]))
        else:
            raise ValueError(f"unknown segment token {tok!r}")
    breaks = [y / lam for y in y_breaks]

    # drop segments whose xi-interval is empty
    bounds = [0.0, *breaks, math.inf]
    keep = [k for k in range(len(segs)) if bounds[k] < bounds[k + 1]]
    kept_segs = [segs[k] for k in keep]
    kept_breaks = [bounds[k + 1] for k in keep[:-1]]

    # merge adjacent identical evaluators (e.g. I_eps == L_T + I at eps = 1)
    merged_b: list[float] = []
    merged_s = [kept_segs[0]]
    for bk, sk in zip(kept_breaks, kept_segs[1:]):
        if sk.same_evaluator(merged_s[-1]):
            if sk.kind == SEG_GUAR_INV:
                merged_s[-1] = sk
            continue
        merged_b.append(bk)
        merged_s.append(sk)
    needs_inv = any(not s.closed_form for s in merged_s)
    return WealthProfile(breakpoints=tuple(merged_b), segments=tuple(merged_s), lam=lam,
                         inv_eps=_inv_eps_callable(prefs, c) if needs_inv else None)


def _delta_b(prefs, c, q, y):
    """Q2(Ltilde) - Q1max in the scaled variable y = lambda xi."""
    return u(prefs, c.gap) - y * c.bonus_threshold + q


def _delta_c(prefs, c, q, y):
    iv = inv_marginal(prefs, y)
    return u(prefs, iv) - y * (iv + c.guarantee) + q


def _delta_a(prefs, c, q, y):
    x = inv_marginal_eps(prefs, c, y)
    return u_eps(prefs, c, x) - y * x + q


def lambda2(prefs: PreferenceSpec, c: ContractParams, split: CaseSplit, lam: float,
            xi_bar: float) -> float:
    """VaR penalty multiplier; zero exactly when the unregulated solution complies.

    The case dispatch compares y_bar = lambda xi_bar with the scaled drop
    thresholds and returns the negated Delta at xi_bar for the local
    comparison that rules there.
    """
    y_bar = lam * xi_bar
    q = split.q
    if split.case is CaseClass.FOUR_REGION:
        val = -_delta_c(prefs, c, q, y_bar) if split.y_one < y_bar else 0.0
    elif split.case is CaseClass.THREE_REGION:
        if y_bar >= split.y_hat:
            val = -_delta_c(prefs, c, q, y_bar)
        elif y_bar > split.y_u:
            val = -_delta_b(prefs, c, q, y_bar)
        else:
            val = 0.0
    else:
        if y_bar >= split.y_hat:
            val = -_delta_c(prefs, c, q, y_bar)
        elif y_bar >= split.y_tilde:
            val = -_delta_b(prefs, c, q, y_bar)
        elif y_bar > split.y_eps:
            val = -_delta_a(prefs, c, q, y_bar)
        else:
            val = 0.0
    return max(0.0, float(val))


def _tokens_unconstrained(split: CaseSplit, tail):
    if split.case is CaseClass.FOUR_REGION:
        return [split.y_tilde, split.y_hat, split.y_one], ["inv_eps", "plateau", "guar_inv", tail]
    if split.case is CaseClass.THREE_REGION:
        return [split.y_tilde, split.y_u], ["inv_eps", "plateau", tail]
    return [split.y_eps], ["inv_eps", tail]


def _build_var(prefs, c, split, lam, xi_bar):
    y_bar = lam * xi_bar
    lam2 = lambda2(prefs, c, split, lam, xi_bar)
    if split.case is CaseClass.FOUR_REGION:
        binding = split.y_one < y_bar
        y_breaks = [split.y_tilde, split.y_hat, max(split.y_one, y_bar)]
        tokens = ["inv_eps", "plateau", "guar_inv", "zero"]
    elif split.case is CaseClass.THREE_REGION:
        binding = split.y_u < y_bar
        if y_bar >= split.y_hat:
            y_breaks = [split.y_tilde, split.y_hat, y_bar]
            tokens = ["inv_eps", "plateau", "guar_inv", "zero"]
        else:
            y_breaks = [split.y_tilde, max(split.y_u, y_bar)]
            tokens = ["inv_eps", "plateau", "zero"]
    else:
        binding = split.y_eps < y_bar
        if y_bar >= split.y_hat:
            y_breaks = [split.y_tilde, split.y_hat, y_bar]
            tokens = ["inv_eps", "plateau", "guar_inv", "zero"]
        elif y_bar >= split.y_tilde:
            y_breaks = [split.y_tilde, y_bar]
            tokens = ["inv_eps", "plateau", "zero"]
        else:
            y_breaks = [max(split.y_eps, y_bar)]
            tokens = ["inv_eps", "zero"]
    return y_breaks, tokens, lam2, binding


def _effective_pi_bound(prefs: PreferenceSpec, c: ContractParams, floor: float) -> float:
    """Loss bound anchored at the floor: the worst reachable loss is L_T - l.

    The tangency line starts at (l, value at the floor); with the floor in
    place the equity holder's worst loss utility is eps_j * eta * U(L_T - l),
    not eps_j * eta * U(L_T), which matters for fully protected contracts.
    """
    if floor == 0.0:
        return loss_bound(prefs, c)
    return prefs.loss_weight * prefs.eta * u(prefs, c.guarantee - floor)


def _build_no_loss_region(prefs, c, lam, floor=0.0):
    """gamma >= 1: U(0+) = -inf keeps the wealth above L_T, no sure-loss region."""
    y_tilde = u_eps_prime(prefs, c, c.bonus_threshold)
    y_hat = u_prime(prefs, c.gap)
    if floor > c.guarantee:
        if floor >= c.bonus_threshold:
            return [u_eps_prime(prefs, c, max(floor, c.bonus_threshold))], ["inv_eps", ("floor", floor)]
        return [y_tilde, y_hat, u_prime(prefs, floor - c.guarantee)], \
            ["inv_eps", "plateau", "guar_inv", ("floor", floor)]
    return [y_tilde, y_hat], ["inv_eps", "plateau", "guar_inv"]


def build_profile(prefs: PreferenceSpec, c: ContractParams, constraint: Constraint,
                  lam: float, law: StatePriceLaw | None = None,
                  split: CaseSplit | None = None) -> BuiltProfile:
    """Pointwise-optimal terminal wealth for a fixed multiplier lambda.

    ``split`` (the lambda-free classification) can be passed in to avoid
    recomputing tangency points inside budget iterations.  VaR constraints
    need ``law`` to locate xi_bar.
    """
    if lam <= 0.0 or not np.isfinite(lam):
        raise ValueError(f"lambda must be positive and finite, got {lam}")
    lam2, binding = 0.0, False

    if not prefs.concavifiable:
        floor = constraint.floor if constraint.kind == "pi" else 0.0
        y_breaks, tokens = _build_no_loss_region(prefs, c, lam, floor)
        case = None
    elif constraint.kind == "pi" and constraint.floor >= c.guarantee * (1.0 - 1e-12):
        floor = constraint.floor
        case = None
        if floor >= c.bonus_threshold:
            y_breaks = [u_eps_prime(prefs, c, floor)]
            tokens = ["inv_eps", ("floor", floor)]
        else:
            y_tilde = u_eps_prime(prefs, c, c.bonus_threshold)
            y_hat = u_prime(prefs, c.gap)
            if floor <= c.guarantee:
                y_breaks, tokens = [y_tilde, y_hat], ["inv_eps", "plateau", "guar_inv"]
            else:
                y_breaks = [y_tilde, y_hat, u_prime(prefs, floor - c.guarantee)]
                tokens = ["inv_eps", "plateau", "guar_inv", ("floor", floor)]
    else:
        floor = constraint.floor if constraint.kind == "pi" else 0.0
        if split is None:
            q = _effective_pi_bound(prefs, c, floor) if constraint.kind == "pi" \
                else loss_bound(prefs, c)
            split = classify(prefs, c, q, floor)
        case = split.case
        if constraint.kind == "var":
            if law is None:
                raise ValueError("VaR profiles need the state-price law for xi_bar")
            xi_bar = quantile_upper(law, constraint.beta)
            y_breaks, tokens, lam2, binding = _build_var(prefs, c, split, lam, xi_bar)
        else:
            y_breaks, tokens = _tokens_unconstrained(split, ("floor", floor))

    profile = _assemble(prefs, c, lam, y_breaks, tokens)
    return BuiltProfile(profile=profile, lam2=lam2, case=case, binding=binding)


def classification_for(prefs: PreferenceSpec, c: ContractParams,
                       constraint: Constraint) -> CaseSplit | None:
    """The lambda-free case split used by ``solve`` for a given regime."""
    if not prefs.concavifiable:
        return None
    if constraint.kind == "pi":
        if constraint.floor >= c.guarantee * (1.0 - 1e-12):
            return None
        return classify(prefs, c, _effective_pi_bound(prefs, c, constraint.floor),
                        constraint.floor)
    return classify(prefs, c, loss_bound(prefs, c), 0.0)


def budget_cost(profile: WealthProfile, law: StatePriceLaw, method: str = "closed",
                tol: float | None = None) -> float:
    """E[xi_T X(lambda, xi_T)] from closed-form lognormal partial moments.

    method="quadrature" integrates every segment numerically in the
    standard-normal coordinate instead (dual-path check).
    """
    if law.degenerate:
        raise DegenerateLawError("budget integrals need a non-atomic state-price density")
    m, s = law.log_mean, law.log_sd
    bounds = [0.0, *profile.breakpoints, math.inf]
    scale = max(1.0, *(abs(s_.offset) for s_ in profile.segments))
    if tol is None:
        tol = 1e-12 * scale
    total = 0.0
    for k, seg in enumerate(profile.segments):
        lo, hi = bounds[k], bounds[k + 1]
        if lo >= hi:
            continue
        if seg.closed_form and method == "closed":
            if seg.coef != 0.0:
                total += seg.coef * partial_power_expectation(law, 1.0 + seg.power, lo, hi)
            if seg.offset != 0.0:
                total += seg.offset * partial_power_expectation(law, 1.0, lo, hi)
        else:
            z_lo = -math.inf if lo == 0.0 else (math.log(lo) - m) / s
            z_hi = math.inf if hi == math.inf else (math.log(hi) - m) / s
            p = seg.power
            z_cut_lo = min(s, (1.0 + p) * s) - 13.0
            z_cut_hi = max(s, (1.0 + p) * s) + 13.0
            a = max(z_lo, z_cut_lo)
            b = min(z_hi, z_cut_hi)
            if a >= b:
                continue
            if seg.closed_form:
                f = lambda z: _phi(z) * np.exp(m + s * z) * (
                    seg.coef * np.exp(seg.power * (m + s * z)) + seg.offset)
            else:
                f = lambda z: _phi(z) * np.exp(m + s * z) * profile.inv_eps(
                    profile.lam * np.exp(m + s * z))
            total += gauss_legendre_adaptive(f, a, b, tol)
    return total


def _phi(z):
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def default_probability(solution_or_profile, law: StatePriceLaw,
                        guarantee: float | None = None) -> float:
    """P(X < L_T) from the first breakpoint where the profile falls below the guarantee."""
    if isinstance(solution_or_profile, Solution):
        profile = solution_or_profile.profile
        guarantee = solution_or_profile.contract.guarantee
    else:
        profile = solution_or_profile
        if guarantee is None:
            raise ValueError("default_probability needs the guarantee level for a bare profile")
    bounds = [0.0, *profile.breakpoints, math.inf]
    for k, seg in enumerate(profile.segments):
        below = (seg.kind == SEG_ZERO) or (seg.kind in (SEG_FLOOR, SEG_PLATEAU)
                                           and seg.offset < guarantee)
        if below and bounds[k] < bounds[k + 1]:
            b = bounds[k]
            if b == 0.0:
                return 1.0
            return float(1.0 - norm_cdf((math.log(b) - law.log_mean) / law.log_sd))
    return 0.0


def _feasibility_bound(prefs, c, constraint, law) -> float:
    """The infimum of budgets psi(lambda) as lambda -> infinity."""
    disc = math.exp(law.log_mean + 0.5 * law.log_sd**2)  # = e^{-rT}
    if not prefs.concavifiable:
        base = c.guarantee * disc
        if constraint.kind == "pi":
            return max(base, constraint.floor * disc)
        return base
    if constraint.kind == "var":
        xi_bar = quantile_upper(law, constraint.beta)
        return c.guarantee * partial_power_expectation(law, 1.0, 0.0, xi_bar)
    if constraint.kind == "pi":
        return constraint.floor * disc
    return 0.0


def solve(market: MarketParams, c: ContractParams, prefs: PreferenceSpec,
          constraint: Constraint = Constraint(kind="none")) -> Solution:
    """Classify the case, then solve E[xi X(lambda, xi)] = X0 for the multiplier.

    The budget map is strictly decreasing and continuous, so the multiplier
    is found by geometric bracketing (factor 4) around U'(X0 e^{rT}) followed
    by bisection to |psi - X0| / X0 <= 1e-9.
    """
    law = state_price_law(market, market.horizon)
    if law.degenerate:
        raise DegenerateLawError("zero market price of risk makes the state price atomic")
    x0 = c.x0
    bound = _feasibility_bound(prefs, c, constraint, law)
    if x0 <= bound * (1.0 + 1e-12):
        raise InfeasibleBudgetError(
            f"initial capital {x0} cannot exceed the constraint cost {bound}")

    split = classification_for(prefs, c, constraint)
    quad_tol = 1e-10 * x0

    def psi(lam: float) -> float:
        built = build_profile(prefs, c, constraint, lam, law, split)
        return budget_cost(built.profile, law, tol=quad_tol)

    lam0 = u_prime(prefs, x0 * math.exp(market.r * market.horizon))
    lam_lo = lam_hi = lam0
    for _ in range(90):
        if psi(lam_lo) >= x0:
            break
        lam_lo /= 4.0
    else:
        raise NumericalError("could not bracket the budget multiplier from below")
    for _ in range(90):
        if psi(lam_hi) <= x0:
            break
        lam_hi *= 4.0
    else:
        raise NumericalError("could not bracket the budget multiplier from above")

    lam = 0.5 * (lam_lo + lam_hi)
    residual = math.inf
    for _ in range(200):
        lam = math.sqrt(lam_lo * lam_hi)
        value = psi(lam)
        residual = (value - x0) / x0
        if abs(residual) <= 1e-9:
            break
        if value > x0:
            lam_lo = lam
        else:
            lam_hi = lam
    if abs(residual) > 1e-6:
        raise NumericalError(f"budget iteration stalled at relative residual {residual}")

    built = build_profile(prefs, c, constraint, lam, law, split)
    return Solution(profile=built.profile, lam=lam, lam2=built.lam2, case=built.case,
                    binding=built.binding, constraint=constraint,
                    budget_residual=abs(residual),
                    default_prob=default_probability(built.profile, law, c.guarantee),
                    contract=c, prefs=prefs)


def pointwise_argmax(prefs: PreferenceSpec, c: ContractParams, lam: float, xi,
                     constraint: Constraint = Constraint(kind="none"),
                     law: StatePriceLaw | None = None,
                     split: CaseSplit | None = None):
    """Global maximizer of the pointwise Lagrangian at (lambda, xi).

    Ties at breakpoints (a null set) resolve to the larger wealth.
    """
    built = build_profile(prefs, c, constraint, lam, law, split)
    return built.profile(xi)
