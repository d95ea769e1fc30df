"""Run configuration: four parameter blocks plus run controls, JSON in, strict keys.

Defaults reproduce the base numerical study: mu=0.05, r=0.03, sigma=0.3,
T=10, X0=100 split 50/50, alpha=0.4, delta=0.6, g=0.02 (so L_T = 50 e^{0.2}),
gamma=0.5, eta=1.01, beta=0.025 and floor 0.2 L_T when the respective
constraint is selected.  Unknown keys anywhere are errors.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .contract import ContractKind, ContractParams
from .market import MarketParams
from .preferences import PreferenceSpec
from .solver import Constraint


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


@dataclass
class MarketBlock:
    mu: float = 0.05
    r: float = 0.03
    sigma: float = 0.3
    horizon: float = 10.0


@dataclass
class ContractBlock:
    l0: float = 50.0
    e0: float = 50.0
    alpha: float = 0.4
    delta: float = 0.6
    g: float = 0.02
    guarantee: float | None = None  # explicit override of l0 e^{gT}


@dataclass
class PreferenceBlock:
    gamma: float = 0.5
    eta: float = 1.01
    epsilon: float = 0.0
    kind: str = "defaultable"  # or "fully_protected"


@dataclass
class ConstraintBlock:
    type: str = "none"  # none | var | pi
    beta: float = 0.025
    floor: float | None = None  # defaults to 0.2 L_T when type == "pi"


@dataclass
class RunBlock:
    seed: int = 20_240_901
    mc_paths: int = 200_000
    profile_grid: int = 2001
    curve_grid: int = 201
    sim_paths: int = 10_000
    sim_steps: int = 2_500
    oracle_pairs: int = 400
    out_dir: str = "out"


@dataclass
class RunConfig:
    market: MarketBlock = field(default_factory=MarketBlock)
    contract: ContractBlock = field(default_factory=ContractBlock)
    preference: PreferenceBlock = field(default_factory=PreferenceBlock)
    constraint: ConstraintBlock = field(default_factory=ConstraintBlock)
    run: RunBlock = field(default_factory=RunBlock)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration root must be a JSON object")
        blocks = {f.name: f.type for f in fields(cls)}
        unknown = set(data) - set(blocks)
        if unknown:
            raise ConfigError(f"unknown configuration block(s): {sorted(unknown)}")
        kwargs = {}
        for f in fields(cls):
            block_cls = type(getattr(cls(), f.name))
            payload = data.get(f.name, {})
            if not isinstance(payload, dict):
                raise ConfigError(f"block {f.name!r} must be an object")
            allowed = {bf.name for bf in fields(block_cls)}
            bad = set(payload) - allowed
            if bad:
                raise ConfigError(f"unknown key(s) in {f.name!r}: {sorted(bad)}")
            kwargs[f.name] = block_cls(**payload)
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str) -> "RunConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def build(self):
        """Domain objects (market, contract, prefs, constraint) with validation."""
        try:
            market = MarketParams(mu=self.market.mu, r=self.market.r,
                                  sigma=self.market.sigma, horizon=self.market.horizon)
            contract = ContractParams.build(
                l0=self.contract.l0, e0=self.contract.e0, alpha=self.contract.alpha,
                delta=self.contract.delta, g=self.contract.g,
                horizon=self.market.horizon, guarantee=self.contract.guarantee)
            kind_map = {"defaultable": ContractKind.DEFAULTABLE,
                        "fully_protected": ContractKind.FULLY_PROTECTED}
            if self.preference.kind not in kind_map:
                raise ConfigError(f"unknown contract kind {self.preference.kind!r}")
            prefs = PreferenceSpec(gamma=self.preference.gamma, eta=self.preference.eta,
                                   epsilon=self.preference.epsilon,
                                   kind=kind_map[self.preference.kind])
            if self.constraint.type == "none":
                constraint = Constraint.none()
            elif self.constraint.type == "var":
                constraint = Constraint.var(self.constraint.beta)
            elif self.constraint.type == "pi":
                floor = self.constraint.floor
                if floor is None:
                    floor = 0.2 * contract.guarantee
                constraint = Constraint.pi(floor)
            else:
                raise ConfigError(f"unknown constraint type {self.constraint.type!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return market, contract, prefs, constraint
