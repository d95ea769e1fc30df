"""Constant-coefficient Black-Scholes market and the lognormal pricing-kernel law.

The traded assets are dS = mu S dt + sigma S dW and dB = r B dt, so the
unique state-price density solves d(xi_t) = -xi_t (r dt + theta dW_t) with
market price of risk theta = (mu - r) / sigma.  In closed form

    ln xi_t ~ Normal(m, s^2),   m = -(r + theta^2/2) t,   s = theta sqrt(t),

and everything the rest of the library needs from the market reduces to
partial power moments

    E[xi^a 1{lo <= xi < hi}] = exp(a m + a^2 s^2 / 2)
                               * [Phi((ln hi - m - a s^2)/s) - Phi((ln lo - m - a s^2)/s)].

``norm_cdf`` / ``norm_ppf`` below wrap scipy.special.ndtr / ndtri (Cephes
rational approximations, absolute error well below 1e-12) and are the single
source of the normal CDF and quantile for the whole package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri


class DegenerateLawError(ValueError):
    """Raised when an operation needs a non-atomic state-price density but theta = 0."""


def norm_cdf(x):
    """Standard normal CDF Phi (sole source of Phi for the package)."""
    return ndtr(x)


def norm_ppf(p):
    """Standard normal quantile Phi^{-1} (sole source for the package)."""
    return ndtri(p)


@dataclass(frozen=True)
class MarketParams:
    """Constant market coefficients: drift, risk-free rate, volatility, horizon (years)."""

    mu: float
    r: float
    sigma: float
    horizon: float

    def __post_init__(self):
        if not np.isfinite([self.mu, self.r, self.sigma, self.horizon]).all():
            raise ValueError("market parameters must be finite")
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.horizon <= 0.0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.r < 0.0:
            raise ValueError(f"risk-free rate must be non-negative, got {self.r}")

    @property
    def theta(self) -> float:
        """Market price of risk (mu - r) / sigma."""
        return (self.mu - self.r) / self.sigma


@dataclass(frozen=True)
class StatePriceLaw:
    """Law of the state-price density xi_t: ln xi_t ~ Normal(log_mean, log_sd^2).

    theta = 0 collapses the law to the point mass at exp(-r t); such a law is
    flagged ``degenerate`` and rejected by quantile / sampling operations.
    """

    theta: float
    log_mean: float
    log_sd: float
    t: float

    @property
    def degenerate(self) -> bool:
        return self.log_sd == 0.0

    def mean(self) -> float:
        """E[xi_t] = exp(m + s^2/2) = exp(-r t)."""
        return float(np.exp(self.log_mean + 0.5 * self.log_sd**2))


def state_price_law(params: MarketParams, t: float) -> StatePriceLaw:
    """Lognormal law of xi_t at time t in (0, horizon]."""
    if not 0.0 < t <= params.horizon:
        raise ValueError(f"t must lie in (0, {params.horizon}], got {t}")
    theta = params.theta
    log_mean = -(params.r + 0.5 * theta**2) * t
    log_sd = abs(theta) * np.sqrt(t)
    return StatePriceLaw(theta=theta, log_mean=float(log_mean), log_sd=float(log_sd), t=t)


def conditional_law(params: MarketParams, t: float, horizon: float | None = None) -> StatePriceLaw:
    """Law of the ratio xi_T / xi_t over the remaining window (t, T].

    By independent increments the ratio is lognormal with the same constant
    coefficients over tau = T - t, independent of F_t.
    """
    T = params.horizon if horizon is None else horizon
    if not 0.0 <= t < T:
        raise ValueError(f"t must lie in [0, {T}), got {t}")
    return state_price_law(params, T - t)


def quantile_upper(law: StatePriceLaw, beta: float) -> float:
    """The level xi_bar with P(xi_t > xi_bar) = beta, i.e. exp(m + s z_{1-beta})."""
    if law.degenerate:
        raise DegenerateLawError("quantile_upper needs a non-atomic state-price density")
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    return float(np.exp(law.log_mean + law.log_sd * norm_ppf(1.0 - beta)))


def partial_power_expectation(law: StatePriceLaw, a: float, lo, hi):
    """E[xi_t^a 1{lo <= xi_t < hi}] by the lognormal partial-moment formula.

    Conventions ln 0 = -inf and ln inf = +inf; accepts array lo / hi.
    """
    if np.isnan(a):
        raise ValueError("power a must not be NaN")
    lo_arr = np.asarray(lo, dtype=float)
    hi_arr = np.asarray(hi, dtype=float)
    if np.any(np.isnan(lo_arr)) or np.any(np.isnan(hi_arr)):
        raise ValueError("interval bounds must not be NaN")
    if np.any(lo_arr < 0.0):
        raise ValueError("lower bound must be non-negative")
    if np.any(lo_arr > hi_arr):
        raise ValueError("need lo <= hi")
    m, s = law.log_mean, law.log_sd
    if law.degenerate:
        point = np.exp(m)
        inside = (lo_arr <= point) & (point < hi_arr)
        out = np.where(inside, point**a, 0.0)
        return float(out) if np.isscalar(lo) and np.isscalar(hi) else out
    with np.errstate(divide="ignore"):
        d_hi = (np.log(hi_arr) - m - a * s**2) / s
        d_lo = (np.log(lo_arr) - m - a * s**2) / s
    out = np.exp(a * m + 0.5 * a**2 * s**2) * (norm_cdf(d_hi) - norm_cdf(d_lo))
    return float(out) if np.isscalar(lo) and np.isscalar(hi) else out


def sample_xi(law: StatePriceLaw, n: int, seed: int, antithetic: bool = False) -> np.ndarray:
    """Deterministic lognormal sample of size n; antithetic pairs exp(m +- s z).

    Output depends only on (n, seed, antithetic), never on scheduling.
    """
    if law.degenerate:
        raise DegenerateLawError("sample_xi needs a non-atomic state-price density")
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    if antithetic:
        z = rng.standard_normal((n + 1) // 2)
        pairs = np.stack([z, -z], axis=1).reshape(-1)[:n]
        return np.exp(law.log_mean + law.log_sd * pairs)
    z = rng.standard_normal(n)
    return np.exp(law.log_mean + law.log_sd * z)
