"""Utility machinery for the equity holder.

Core utility is CRRA, U(x) = x^{1-gamma}/(1-gamma) (ln x at gamma = 1), with
inverse marginal I(y) = y^{-1/gamma}.  Losses enter through the S-shaped
extension U_S(v) = U(v) for v >= 0 and -eta U(-v) for v < 0, which needs
U >= 0 on gains and therefore gamma in (0, 1); for gamma >= 1 the origin has
U(0+) = -infty and the solver switches to the branch without a sure-loss
region, so the loss side is never touched.

Above the bonus threshold Ltilde the equity holder's utility mixes the two
survival scenarios with death probability eps:

    U_eps(x)  = (1-eps) U(f(x)) + eps U(x - L_T)
    U_eps'(x) = (1-eps)(1-dtilde) U'(f(x)) + eps U'(x - L_T)

U_eps' is continuous, strictly decreasing on [Ltilde, inf) and drops by the
factor deps = (1-dtilde)(1-eps) + eps < 1 at Ltilde relative to the left
limit U'(Lhat), which is what breaks plain concave-utility arguments.  Its
inverse I_eps is computed by safeguarded bisection on the tight bracket

    L_T + I(y/deps)  <=  I_eps(y)  <=  [I(y/deps) + (1-delta) L_T] / (1-dtilde),

both ends exact at eps = 1 and eps = 0 respectively (the upper bound is the
closed-form map h used throughout).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contract import ContractKind, ContractParams, f_slope


@dataclass(frozen=True)
class PreferenceSpec:
    """CRRA exponent, loss-aversion multiplier, death probability, contract kind."""

    gamma: float
    eta: float
    epsilon: float
    kind: ContractKind

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.eta < 1.0:
            raise ValueError(f"loss aversion eta must be >= 1, got {self.eta}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.gamma >= 1.0 and self.kind is ContractKind.FULLY_PROTECTED:
            # eta * U convention for losses needs U >= 0, i.e. gamma < 1
            raise ValueError("fully protected contracts require gamma in (0, 1)")
        if self.gamma >= 1.0 and self.epsilon >= 1.0:
            raise ValueError("epsilon = 1 requires gamma in (0, 1)")

    @property
    def concavifiable(self) -> bool:
        """True when U(0) is finite and the sure-loss region can be optimal."""
        return self.gamma < 1.0

    @property
    def loss_weight(self) -> float:
        """eps_j: weight of the loss utility below the guarantee (1 for np, eps for p)."""
        return 1.0 if self.kind is ContractKind.FULLY_PROTECTED else self.epsilon


def u(spec: PreferenceSpec, x):
    xv = np.asarray(x, dtype=float)
    if np.any(xv <= 0.0):
        raise ValueError("u needs positive wealth")
    g = spec.gamma
    out = np.log(xv) if g == 1.0 else xv ** (1.0 - g) / (1.0 - g)
    return float(out) if np.isscalar(x) else out


def u_prime(spec: PreferenceSpec, x):
    xv = np.asarray(x, dtype=float)
    if np.any(xv <= 0.0):
        raise ValueError("u_prime needs positive wealth")
    out = xv ** (-spec.gamma)
    return float(out) if np.isscalar(x) else out


def u_second(spec: PreferenceSpec, x):
    xv = np.asarray(x, dtype=float)
    out = -spec.gamma * xv ** (-spec.gamma - 1.0)
    return float(out) if np.isscalar(x) else out


def inv_marginal(spec: PreferenceSpec, y):
    """I(y) = y^{-1/gamma}, the inverse of U'."""
    yv = np.asarray(y, dtype=float)
    if np.any(yv <= 0.0):
        raise ValueError("inv_marginal needs a positive marginal utility")
    out = yv ** (-1.0 / spec.gamma)
    return float(out) if np.isscalar(y) else out


def delta_eps(spec: PreferenceSpec, c: ContractParams) -> float:
    """Mortality-mixed slope factor (1 - dtilde)(1 - eps) + eps in [1 - dtilde, 1]."""
    return (1.0 - c.tilde_delta) * (1.0 - spec.epsilon) + spec.epsilon


def u_eps(spec: PreferenceSpec, c: ContractParams, x):
    """U_eps(x) = (1-eps) U(f(x)) + eps U(x - L_T) on x >= Ltilde."""
    xv = np.asarray(x, dtype=float)
    if np.any(xv < c.bonus_threshold * (1.0 - 1e-12)):
        raise ValueError("u_eps is defined on x >= bonus threshold")
    xv = np.maximum(xv, c.bonus_threshold)
    e = spec.epsilon
    out = (1.0 - e) * u(spec, f_slope(c, xv)) + e * u(spec, xv - c.guarantee)
    return float(out) if np.isscalar(x) else out


def u_eps_prime(spec: PreferenceSpec, c: ContractParams, x):
    xv = np.asarray(x, dtype=float)
    if np.any(xv < c.bonus_threshold * (1.0 - 1e-12)):
        raise ValueError("u_eps_prime is defined on x >= bonus threshold")
    xv = np.maximum(xv, c.bonus_threshold)
    e = spec.epsilon
    out = (1.0 - e) * (1.0 - c.tilde_delta) * u_prime(spec, f_slope(c, xv)) \
        + e * u_prime(spec, xv - c.guarantee)
    return float(out) if np.isscalar(x) else out


def u_eps_second(spec: PreferenceSpec, c: ContractParams, x):
    xv = np.asarray(x, dtype=float)
    e = spec.epsilon
    out = (1.0 - e) * (1.0 - c.tilde_delta) ** 2 * u_second(spec, f_slope(c, xv)) \
        + e * u_second(spec, xv - c.guarantee)
    return float(out) if np.isscalar(x) else out


def h_map(spec: PreferenceSpec, c: ContractParams, y):
    """h(y) = [I(y/(1-dtilde)) + (1-delta) L_T] / (1-dtilde), the eps = 0 inverse.

    Decreasing from (0, (1-dtilde) U'(Lhat)] onto [Ltilde, inf).
    """
    yv = np.asarray(y, dtype=float)
    one_dt = 1.0 - c.tilde_delta
    y_max = one_dt * u_prime(spec, c.gap)
    if np.any(yv <= 0.0) or np.any(yv > y_max * (1.0 + 1e-12)):
        raise ValueError(f"h_map needs y in (0, {y_max}]")
    out = (inv_marginal(spec, yv / one_dt) + (1.0 - c.delta) * c.guarantee) / one_dt
    return float(out) if np.isscalar(y) else out


def inv_marginal_eps(spec: PreferenceSpec, c: ContractParams, y):
    """I_eps(y) solving U_eps'(I_eps(y)) = y for 0 < y <= U_eps'(Ltilde).

    eps = 0 and eps = 1 collapse to the closed forms h(y) and L_T + I(y);
    in between the root is bisected on the bracket from the module docstring
    and polished by Newton steps to |U_eps'(x) - y| / y <= 1e-10.
    """
    e = spec.epsilon
    if e == 0.0:
        return h_map(spec, c, y)
    yv = np.asarray(y, dtype=float)
    y_max = delta_eps(spec, c) * u_prime(spec, c.gap)
    if np.any(yv <= 0.0) or np.any(yv > y_max * (1.0 + 1e-9)):
        raise ValueError(f"inv_marginal_eps needs y in (0, {y_max}]")
    yv = np.minimum(yv, y_max)
    if e == 1.0:
        out = c.guarantee + inv_marginal(spec, yv)
        return float(out) if np.isscalar(y) else out

    deps = delta_eps(spec, c)
    base = inv_marginal(spec, yv / deps)
    lo = np.maximum(c.guarantee + base, c.bonus_threshold)
    hi = np.maximum((base + (1.0 - c.delta) * c.guarantee) / (1.0 - c.tilde_delta), lo)
    for _ in range(70):
        mid = np.sqrt(lo * hi)
        too_low = u_eps_prime(spec, c, mid) > yv  # marginal too high -> x too small
        lo = np.where(too_low, mid, lo)
        hi = np.where(too_low, hi, mid)
    x = 0.5 * (lo + hi)
    for _ in range(2):
        step = (u_eps_prime(spec, c, x) - yv) / u_eps_second(spec, c, x)
        x = np.clip(x - step, c.bonus_threshold, None)
    return float(x) if np.isscalar(y) else x


def loss_bound(spec: PreferenceSpec, c: ContractParams) -> float:
    """Upper bound of losses q_j = eps_j * eta * U(L_T) (zero weight for p without mortality)."""
    if not spec.concavifiable:
        raise ValueError("loss bound is only defined for gamma in (0, 1)")
    return spec.loss_weight * spec.eta * u(spec, c.guarantee)


def s_utility(spec: PreferenceSpec, v):
    """S-shaped utility U(v) on gains, -eta U(-v) on losses; -inf losses for gamma >= 1."""
    vv = np.atleast_1d(np.asarray(v, dtype=float))
    out = np.empty_like(vv)
    gains = vv > 0.0
    losses = vv < 0.0
    out[gains] = u(spec, vv[gains])
    if spec.gamma < 1.0:
        out[~gains] = 0.0
        out[losses] = -spec.eta * u(spec, -vv[losses])
    else:
        out[~gains] = -np.inf
    return float(out[0]) if np.isscalar(v) else out.reshape(np.shape(v))


def derived_utility(spec: PreferenceSpec, c: ContractParams, x):
    """The equity holder's utility of pooled wealth: (1-eps) U_S(V_E(x)) + eps U_S(x - L_T)."""
    xv = np.asarray(x, dtype=float)
    from .contract import payoff_equity  # local import keeps module load order simple

    e = spec.epsilon
    alive = s_utility(spec, payoff_equity(c, spec.kind, xv))
    if e == 0.0:
        out = alive
    else:
        dead = s_utility(spec, xv - c.guarantee)
        out = (1.0 - e) * alive + e * dead
    return float(out) if np.isscalar(x) else out
