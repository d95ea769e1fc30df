"""Participating-contract parameters and payoff algebra.

At maturity the pooled wealth x is split between the policyholder (premium
l0, participation rate alpha, guarantee L_T, bonus rate delta) and the
equity holder.  With the bonus threshold Ltilde = L_T / alpha, the achieved
bonus rate dtilde = alpha * delta and the slope payoff

    f(x) = (1 - dtilde) x - (1 - delta) L_T,

the equity holder receives [x - L_T]^+ - delta [alpha x - L_T]^+ under a
defaultable contract, and x - L_T (x <= Ltilde) or f(x) (x > Ltilde) under
full protection, where the payoff may go negative.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class ContractKind(enum.Enum):
    DEFAULTABLE = "defaultable"
    FULLY_PROTECTED = "fully_protected"


@dataclass(frozen=True)
class ContractParams:
    """Premiums, participation and bonus structure, with derived thresholds.

    ``guarantee`` defaults to l0 * exp(g * horizon) and may be overridden by
    an explicit amount (it only has to be positive).
    """

    l0: float
    e0: float
    alpha: float
    delta: float
    g: float
    horizon: float
    guarantee: float

    def __post_init__(self):
        if self.l0 <= 0.0 or self.e0 <= 0.0:
            raise ValueError("l0 and e0 must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie strictly in (0, 1), got {self.alpha}")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if self.guarantee <= 0.0:
            raise ValueError("guarantee must be positive")

    @classmethod
    def build(cls, l0, e0, alpha, delta, g, horizon, guarantee=None) -> "ContractParams":
        if guarantee is None:
            guarantee = l0 * math.exp(g * horizon)
        return cls(l0=float(l0), e0=float(e0), alpha=float(alpha), delta=float(delta),
                   g=float(g), horizon=float(horizon), guarantee=float(guarantee))

    @property
    def x0(self) -> float:
        return self.l0 + self.e0

    @property
    def bonus_threshold(self) -> float:
        """Ltilde = L_T / alpha, where the bonus participation kicks in."""
        return self.guarantee / self.alpha

    @property
    def gap(self) -> float:
        """Lhat = Ltilde - L_T."""
        return self.bonus_threshold - self.guarantee

    @property
    def tilde_delta(self) -> float:
        """Achieved bonus rate alpha * delta."""
        return self.alpha * self.delta


def f_slope(c: ContractParams, x):
    """Equity payoff above the bonus threshold: (1 - dtilde) x - (1 - delta) L_T."""
    return (1.0 - c.tilde_delta) * np.asarray(x, dtype=float) - (1.0 - c.delta) * c.guarantee


def payoff_equity(c: ContractParams, kind: ContractKind, x):
    """Residual value to the equity holder at pooled terminal wealth x >= 0."""
    xv = np.asarray(x, dtype=float)
    if np.any(xv < 0.0):
        raise ValueError("terminal wealth must be non-negative")
    if kind is ContractKind.DEFAULTABLE:
        out = np.maximum(xv - c.guarantee, 0.0) - c.delta * np.maximum(c.alpha * xv - c.guarantee, 0.0)
    else:
        out = np.where(xv <= c.bonus_threshold, xv - c.guarantee, f_slope(c, xv))
    return float(out) if np.isscalar(x) else out


def payoff_policyholder(c: ContractParams, kind: ContractKind, x, dead: bool = False):
    """Policyholder payoff; a premature death pays the plain guarantee L_T."""
    xv = np.asarray(x, dtype=float)
    if np.any(xv < 0.0):
        raise ValueError("terminal wealth must be non-negative")
    if dead:
        out = np.full_like(xv, c.guarantee)
    else:
        out = xv - payoff_equity(c, kind, xv)
    return float(out) if np.isscalar(x) else out
