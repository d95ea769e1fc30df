"""Command-line front end: solve / curve / simulate / verify with CSV output.

Exit codes: 0 ok, 2 configuration error, 3 infeasible budget, 4 numerical
failure, 5 oracle gate failure.  All randomness is seeded from the config or
--seed; nothing reads the wall clock.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys

import numpy as np

from .concavify import CaseClass
from .config import ConfigError, RunConfig
from .dynamics import simulate_paths, strategy_at, wealth_at
from .market import DegenerateLawError, norm_ppf, state_price_law
from .quadrature import QuadratureError
from .solver import (InfeasibleBudgetError, NumericalError, Segment, Solution,
                     WealthProfile, budget_cost, classification_for,
                     default_probability, solve)
from .verify import competitor_suite, lagrangian, oracle_gap


def _fmt(x: float) -> str:
    return f"{x:.17e}"


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def solution_to_dict(solution: Solution, config: RunConfig) -> dict:
    return {
        "config": config.to_dict(),
        "lambda": solution.lam,
        "lambda2": solution.lam2,
        "case": solution.case.value if solution.case is not None else None,
        "binding": solution.binding,
        "breakpoints": list(solution.profile.breakpoints),
        "segments": [dataclasses.asdict(s) for s in solution.profile.segments],
        "budget_residual": solution.budget_residual,
        "default_prob": solution.default_prob,
    }


def solution_from_dict(payload: dict) -> tuple[Solution, RunConfig]:
    config = RunConfig.from_dict(payload["config"])
    market, contract, prefs, constraint = config.build()
    segments = tuple(Segment(**s) for s in payload["segments"])
    needs_inv = any(not s.closed_form for s in segments)
    inv = None
    if needs_inv:
        from .solver import _inv_eps_callable
        inv = _inv_eps_callable(prefs, contract)
    profile = WealthProfile(breakpoints=tuple(payload["breakpoints"]), segments=segments,
                            lam=payload["lambda"], inv_eps=inv)
    case = CaseClass(payload["case"]) if payload["case"] else None
    solution = Solution(profile=profile, lam=payload["lambda"], lam2=payload["lambda2"],
                        case=case, binding=payload["binding"], constraint=constraint,
                        budget_residual=payload["budget_residual"],
                        default_prob=payload["default_prob"], contract=contract,
                        prefs=prefs)
    return solution, config


def _xi_grid(law, n: int, q_lo: float = 1e-4, q_hi: float = 0.9999) -> np.ndarray:
    lo = math.exp(law.log_mean + law.log_sd * norm_ppf(q_lo))
    hi = math.exp(law.log_mean + law.log_sd * norm_ppf(q_hi))
    return np.geomspace(lo, hi, n)


def cmd_solve(config: RunConfig, out_dir: str) -> int:
    market, contract, prefs, constraint = config.build()
    solution = solve(market, contract, prefs, constraint)
    law = state_price_law(market, market.horizon)
    grid = _xi_grid(law, config.run.profile_grid)
    wealth = solution.profile(grid)
    labels = solution.profile.segment_labels(grid)
    _write_csv(os.path.join(out_dir, "profile.csv"),
               ["xi", "terminal_wealth", "segment_label"],
               [(float(x), float(w), lab) for x, w, lab in zip(grid, wealth, labels)])
    with open(os.path.join(out_dir, "solution.json"), "w") as fh:
        json.dump(solution_to_dict(solution, config), fh, indent=2)

    bps = ", ".join(f"{b:.6g}" for b in solution.profile.breakpoints)
    print(f"lambda          {solution.lam:.12g}")
    print(f"lambda2         {solution.lam2:.12g}")
    print(f"case            {solution.case.value if solution.case else 'no_loss_region'}")
    print(f"binding         {solution.binding}")
    print(f"breakpoints     {bps}")
    split = classification_for(prefs, contract, constraint)
    if split is not None:
        thr = split.thresholds(solution.lam)
        named = {"xi_tilde_l": thr.xi_tilde_l, "xi_hat_l": thr.xi_hat_l, "xi_u": thr.xi_u,
                 "xi_hat_one": thr.xi_hat_one, "xi_hat_eps": thr.xi_hat_eps}
        shown = ", ".join(f"{k}={v:.6g}" for k, v in named.items() if v is not None)
        print(f"thresholds      {shown}")
    print(f"default_prob    {solution.default_prob:.12g}")
    print(f"budget_residual {solution.budget_residual:.3e}")
    return 0


def cmd_curve(config: RunConfig, out_dir: str, t: float, sweeps: dict) -> int:
    market, _, _, _ = config.build()
    if not 0.0 <= t < market.horizon:
        raise ConfigError(f"--t must lie in [0, horizon), got {t}")

    sweep_items = [(k, vs) for k, vs in sweeps.items() if vs]
    if len(sweep_items) > 1:
        raise ConfigError("sweep one parameter at a time")

    def run_one(cfg: RunConfig, label: str | None):
        market, contract, prefs, constraint = cfg.build()
        solution = solve(market, contract, prefs, constraint)
        if t == 0.0:
            xs = np.array([1.0])
        else:
            xs = _xi_grid(state_price_law(market, t), cfg.run.curve_grid)
        wealth = wealth_at(solution, market, t, xs)
        risky = strategy_at(solution, market, t, xs)
        return [(label, float(x), float(w), float(p)) if label is not None
                else (float(x), float(w), float(p))
                for x, w, p in zip(xs, wealth, risky)]

    rows: list = []
    if not sweep_items:
        rows = run_one(config, None)
        header = ["xi_t", "wealth", "risky_amount"]
    else:
        name, values = sweep_items[0]
        header = ["series", "xi_t", "wealth", "risky_amount"]
        for v in values:
            cfg = RunConfig.from_dict(config.to_dict())
            if name == "alpha":
                cfg.contract.alpha = v
            elif name == "delta":
                cfg.contract.delta = v
            elif name == "eta":
                cfg.preference.eta = v
            elif name == "epsilon":
                cfg.preference.epsilon = v
            rows.extend(run_one(cfg, f"{name}={v:g}"))
    _write_csv(os.path.join(out_dir, "curve.csv"), header, rows)
    print(f"curve.csv written with {len(rows)} rows (t = {t:g})")
    return 0


def cmd_simulate(config: RunConfig, out_dir: str) -> int:
    market, contract, prefs, constraint = config.build()
    solution = solve(market, contract, prefs, constraint)
    stats = simulate_paths(solution, market, config.run.sim_paths, config.run.sim_steps,
                           config.run.seed)
    _write_csv(os.path.join(out_dir, "paths.csv"),
               ["xi_T", "terminal_model", "terminal_replicated"],
               zip(stats.terminal_xi, stats.terminal_model, stats.terminal_replicated))
    print(f"paths              {stats.n_paths} x {stats.n_steps} steps, seed {stats.seed}")
    print(f"replication_rmse   {stats.replication_rmse:.6f} (of X0)")
    print(f"replication_max    {stats.replication_max:.6f} (of X0)")
    print(f"default_frequency  {stats.default_frequency:.6f}")
    print(f"equity payoff      {stats.equity_mean:.4f} +- {stats.equity_std:.4f}")
    print(f"policyholder       {stats.policyholder_mean:.4f} +- {stats.policyholder_std:.4f}")
    return 0


def _tampered(solution: Solution, law, pct: float) -> Solution:
    """Test hook: shift breakpoints by pct percent, rescale wealth to the budget."""
    if any(not s.closed_form for s in solution.profile.segments):
        raise ConfigError("tampering supports closed-form profiles only (epsilon 0 or 1)")
    shift = 1.0 + pct / 100.0
    segs = tuple(Segment(s.kind, s.coef * shift ** (-s.power), s.power, s.offset,
                         s.closed_form) for s in solution.profile.segments)
    moved = WealthProfile(breakpoints=tuple(b * shift for b in solution.profile.breakpoints),
                          segments=segs, lam=solution.profile.lam)
    scale = solution.contract.x0 / budget_cost(moved, law)
    segs = tuple(Segment(s.kind, s.coef * scale, s.power, s.offset * scale, s.closed_form)
                 for s in moved.segments)
    profile = WealthProfile(breakpoints=moved.breakpoints, segments=segs,
                            lam=solution.profile.lam)
    return dataclasses.replace(solution, profile=profile,
                               default_prob=default_probability(profile, law,
                                                                solution.contract.guarantee))


def cmd_verify(config: RunConfig, out_dir: str, tamper_pct: float | None) -> int:
    market, contract, prefs, constraint = config.build()
    solution = solve(market, contract, prefs, constraint)
    law = state_price_law(market, market.horizon)
    if tamper_pct is not None:
        solution = _tampered(solution, law, tamper_pct)

    gates: list[tuple[str, float, float, bool]] = []  # name, value, threshold, ok

    # gate 1: closed-form pointwise argmax vs brute-force grid
    rng = np.random.default_rng(config.run.seed)
    from .solver import build_profile, classification_for
    split = classification_for(prefs, contract, constraint)
    worst = 0.0
    floor = constraint.floor if constraint.kind == "pi" else 0.0
    for _ in range(config.run.oracle_pairs):
        lam = 10.0 ** rng.uniform(-3.5, 0.5)
        xi = 10.0 ** rng.uniform(-1.5, 1.5)
        built = build_profile(prefs, contract, constraint, lam, law, split)
        v_closed = float(lagrangian(prefs, contract, lam, xi, built.profile(xi),
                                    built.lam2))
        worst = max(worst, oracle_gap(prefs, contract, lam, xi, v_closed, built.lam2,
                                      floor))
    gates.append(("pointwise_oracle_gap", worst, 1e-8, worst <= 1e-8))

    # gate 2: MC budget consistency and competitor dominance
    report = competitor_suite(solution, market, n=config.run.mc_paths,
                              seed=config.run.seed)
    budget_dev = abs(report.budget_mc - contract.x0) / max(report.budget_mc_se, 1e-12)
    gates.append(("mc_budget_within_4se", budget_dev, 4.0, budget_dev <= 4.0))
    beaten = [f for f in report.failures if f.startswith("competitor_beats")]
    gates.append(("competitors_beaten", float(len(beaten)), 0.0, not beaten))
    other = [f for f in report.failures if not f.startswith("competitor_beats")]
    gates.append(("competitor_suite_clean", float(len(other)), 0.0, not other))

    # gate 3: VaR compliance
    if constraint.kind == "var":
        p = default_probability(solution.profile, law, contract.guarantee)
        gates.append(("var_compliance", p, constraint.beta + 1e-12,
                      p <= constraint.beta + 1e-12))

    _write_csv(os.path.join(out_dir, "verify.csv"),
               ["gate", "value", "threshold", "passed"],
               [(g, v, thr, str(ok)) for g, v, thr, ok in gates])
    failed = [g for g, _, _, ok in gates if not ok]
    for g, v, thr, ok in gates:
        print(f"{'PASS' if ok else 'FAIL'} {g:28s} value={v:.6g} threshold={thr:.6g}")
    for r in report.competitors:
        print(f"     competitor {r.name:28s} utility={r.utility:.6f} margin/se={r.margin_se:.1f}")
    if failed:
        print(f"oracle gate failure: {', '.join(failed)}")
        return 5
    return 0


def _parse_list(text: str | None) -> list[float]:
    if not text:
        return []
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad sweep list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parinvest",
        description="Optimal terminal wealth and strategy for participating contracts")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "curve", "simulate", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON configuration file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        if name == "curve":
            p.add_argument("--t", type=float, default=8.0, help="evaluation time (years)")
            p.add_argument("--alpha-list", default=None)
            p.add_argument("--delta-list", default=None)
            p.add_argument("--eta-list", default=None)
            p.add_argument("--epsilon-list", default=None)
        if name == "verify":
            p.add_argument("--tamper-breakpoint-pct", type=float, default=None,
                           help=argparse.SUPPRESS)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig.from_json(args.config) if args.config else RunConfig()
        if args.seed is not None:
            config.run.seed = args.seed
        out_dir = args.out or config.run.out_dir
        os.makedirs(out_dir, exist_ok=True)
        if args.command == "solve":
            return cmd_solve(config, out_dir)
        if args.command == "curve":
            sweeps = {"alpha": _parse_list(args.alpha_list),
                      "delta": _parse_list(args.delta_list),
                      "eta": _parse_list(args.eta_list),
                      "epsilon": _parse_list(args.epsilon_list)}
            return cmd_curve(config, out_dir, args.t, sweeps)
        if args.command == "simulate":
            return cmd_simulate(config, out_dir)
        if args.command == "verify":
            return cmd_verify(config, out_dir, args.tamper_breakpoint_pct)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleBudgetError as exc:
        print(f"infeasible budget: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, QuadratureError, DegenerateLawError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
