"""Tangency points and case classification for the non-concave objective.

The derived utility is concave on each of [floor, L_T], [L_T, Ltilde] and
[Ltilde, inf) but not globally, so the optimal terminal wealth depends on
where the concave hull touches the utility graph.  With loss bound q >= 0
and an almost-sure floor l < L_T the relevant function is

    Upsilon^{w,q}_l(x) = U_w(x) - U_w'(x) (x - l) + q,

where w = eps selects the mixed branch U_eps on x >= Ltilde and w = 1 the
plain branch U(x - L_T) on x > L_T.  Upsilon is strictly increasing on its
branch domain (derivative -(x - l) U'' > 0), so its sign at the bonus
threshold Ltilde splits the solution into three cases:

    four-region   Upsilon^{1,q}_l(Ltilde) > 0        tangency in (L_T, Ltilde)
    three-region  Upsilon^{eps} >= 0 >= Upsilon^{1}   hull linear up to Ltilde
    two-region    Upsilon^{eps,q}_l(Ltilde) < 0       tangency above Ltilde

Tangency points are the roots Upsilon = 0, i.e. the wealth where the line
from (l, -q) touches the utility curve; both roots are bracketed and solved
by Brent's method.  Boundary equalities are classified as three-region.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .contract import ContractParams
from .preferences import PreferenceSpec, delta_eps, u, u_eps, u_eps_prime, u_prime


class CaseClass(enum.Enum):
    FOUR_REGION = "four_region"
    THREE_REGION = "three_region"
    TWO_REGION = "two_region"


@dataclass(frozen=True)
class Thresholds:
    """Breakpoint levels in xi for a given multiplier lambda (all scale as 1/lambda)."""

    xi_tilde_l: float
    xi_hat_l: float
    xi_u: float | None = None
    xi_hat_one: float | None = None
    xi_hat_eps: float | None = None


def upsilon(spec: PreferenceSpec, c: ContractParams, x, eps_weight: float, q: float,
            l: float = 0.0):
    """Upsilon^{w,q}_l(x) for w = eps_weight; w = 1 uses the plain branch on x > L_T."""
    if q < 0.0:
        raise ValueError("loss bound q must be non-negative")
    xv = np.asarray(x, dtype=float)
    if eps_weight == 1.0:
        if np.any(xv <= c.guarantee):
            raise ValueError("the plain branch needs x > guarantee")
        z = xv - c.guarantee
        out = u(spec, z) - u_prime(spec, z) * (xv - l) + q
    else:
        if abs(eps_weight - spec.epsilon) > 1e-15:
            raise ValueError("eps_weight must be 1 or the spec's epsilon")
        out = u_eps(spec, c, xv) - u_eps_prime(spec, c, xv) * (xv - l) + q
    return float(out) if np.isscalar(x) else out


def upsilon_at_threshold(spec: PreferenceSpec, c: ContractParams, q: float, l: float = 0.0):
    """(Upsilon^{1,q}_l(Ltilde), Upsilon^{eps,q}_l(Ltilde)) in closed form."""
    mu_hat = u_prime(spec, c.gap)
    base = u(spec, c.gap) + q
    span = c.bonus_threshold - l
    ups_one = base - mu_hat * span
    ups_eps = base - delta_eps(spec, c) * mu_hat * span
    return ups_one, ups_eps


def tangency_point(spec: PreferenceSpec, c: ContractParams, branch: str, q: float,
                   l: float = 0.0) -> float:
    """Root y_hat of Upsilon^{w,q}_l = 0 on its branch domain.

    branch "one" needs Upsilon^{1,q}_l(Ltilde) > 0 and returns a root in
    (L_T, Ltilde); branch "eps" needs Upsilon^{eps,q}_l(Ltilde) < 0 and
    returns a root above Ltilde (the bracket is expanded geometrically).
    """
    if q < 0.0:
        raise ValueError("loss bound q must be non-negative")
    if not 0.0 <= l < c.guarantee:
        raise ValueError("tangency floor must satisfy 0 <= l < guarantee")
    ups_one, ups_eps = upsilon_at_threshold(spec, c, q, l)
    L, Lt = c.guarantee, c.bonus_threshold
    if branch == "one":
        if ups_one <= 0.0:
            raise ValueError("branch 'one' requires Upsilon^{1,q}_l(Ltilde) > 0")
        f = lambda x: upsilon(spec, c, x, 1.0, q, l)
        a = L + 1e-13 * (Lt - L)
        root = brentq(f, a, Lt, xtol=1e-300, rtol=8.9e-16, maxiter=200)
    elif branch == "eps":
        if ups_eps >= 0.0:
            raise ValueError("branch 'eps' requires Upsilon^{eps,q}_l(Ltilde) < 0")
        f = lambda x: upsilon(spec, c, x, spec.epsilon, q, l)
        a, b = Lt, 2.0 * Lt
        for _ in range(64):
            if f(b) > 0.0:
                break
            a, b = b, 2.0 * b
        else:
            raise ValueError("no sign change found for the eps-branch tangency")
        root = brentq(f, a, b, xtol=1e-300, rtol=8.9e-16, maxiter=200)
    else:
        raise ValueError(f"branch must be 'one' or 'eps', got {branch!r}")
    return float(root)


@dataclass(frozen=True)
class CaseSplit:
    """Classification plus lambda-free threshold levels y* = lambda * xi*.

    Dividing each y by a multiplier lambda gives the xi-breakpoints, which is
    the 1/lambda scaling property of all thresholds.
    """

    case: CaseClass
    q: float
    floor: float
    y_tilde: float            # U_eps'(Ltilde)
    y_hat: float              # U'(Lhat)
    y_u: float | None         # (U(Lhat) + q) / (Ltilde - l), three-region drop
    y_one: float | None       # U'(y_hat_one - L_T), four-region drop
    y_eps: float | None       # U_eps'(y_hat_eps), two-region drop
    tangency_one: float | None
    tangency_eps: float | None

    def thresholds(self, lam: float) -> Thresholds:
        if lam <= 0.0:
            raise ValueError("lambda must be positive")
        opt = lambda y: None if y is None else y / lam
        return Thresholds(
            xi_tilde_l=self.y_tilde / lam,
            xi_hat_l=self.y_hat / lam,
            xi_u=opt(self.y_u),
            xi_hat_one=opt(self.y_one),
            xi_hat_eps=opt(self.y_eps),
        )


def classify(spec: PreferenceSpec, c: ContractParams, q: float, l: float = 0.0) -> CaseSplit:
    """Case label and scaled thresholds; boundary equalities land in three-region."""
    if not spec.concavifiable:
        raise ValueError("classification needs gamma in (0, 1); gamma >= 1 has no sure-loss region")
    if not 0.0 <= l < c.guarantee:
        raise ValueError("classification floor must satisfy 0 <= l < guarantee")
    ups_one, ups_eps = upsilon_at_threshold(spec, c, q, l)
    y_tilde = u_eps_prime(spec, c, c.bonus_threshold)
    y_hat = u_prime(spec, c.gap)
    y_u = y_one = y_eps = t_one = t_eps = None
    if ups_one > 0.0:
        case = CaseClass.FOUR_REGION
        t_one = tangency_point(spec, c, "one", q, l)
        y_one = u_prime(spec, t_one - c.guarantee)
    elif ups_eps < 0.0:
        case = CaseClass.TWO_REGION
        t_eps = tangency_point(spec, c, "eps", q, l)
        y_eps = u_eps_prime(spec, c, t_eps)
    else:
        case = CaseClass.THREE_REGION
        y_u = (u(spec, c.gap) + q) / (c.bonus_threshold - l)
    return CaseSplit(case=case, q=q, floor=l, y_tilde=float(y_tilde), y_hat=float(y_hat),
                     y_u=y_u, y_one=y_one, y_eps=y_eps,
                     tangency_one=t_one, tangency_eps=t_eps)
