"""Batch front end.

One JSON config drives every experiment:

    {
      "experiment": {"name": "optimal-cost"},
      "model":      {"kind": "zero"},
      "params":     {"rho": 2.0, "T": 1.0, "x": 1.0, "s0": 0.0},
      "grid":       {"n_steps": 512},
      "mc":         {"n_paths": 10000, "seed": 7, "sigma_m": 0.2}
    }

Experiments: simulate | optimal-cost | oracle-compare | lemma1 | perturb |
exploit | cost-risk | figure1.  Each run writes CSV artifacts plus a
manifest.json holding the fully resolved config; re-running the manifest
reproduces the CSVs byte for byte.

Exit codes: 0 ok, 2 config error, 3 model/strategy mismatch, 4 acceptance
failure.  ``--suite NAME`` runs the acceptance verdicts instead of an
experiment.  Threads come from --threads or IMPACTLAB_THREADS.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import acceptance
from .drift import (
    CompensatedPoissonDrift,
    DriftModel,
    JumpDrift,
    LinearDrift,
    PredatorDrift,
    TabulatedDrift,
    TruncatedBrownianDrift,
    ZeroDrift,
    is_absolutely_continuous,
    is_deterministic,
    model_id,
    sample_path,
)
from .errors import ConfigError, ImpactLabError, ModelStrategyMismatchError
from .market import ModelParams, TimeGrid
from .montecarlo import (
    cost_convergence_study,
    cost_risk_comparison,
    default_directions,
    estimate_expected_cost,
    exploit_run,
    perturbation_test,
)
from .oracles import DriftChain, dp_oracle, expected_cost_closed_form, qp_oracle
from .strategies import (
    almgren_chriss_schedule,
    optimal_strategy,
    ow_strategy,
    strategy_rows,
)

EXPERIMENTS = (
    "simulate",
    "optimal-cost",
    "oracle-compare",
    "lemma1",
    "perturb",
    "exploit",
    "cost-risk",
    "figure1",
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISMATCH = 3
EXIT_ACCEPTANCE = 4


def _require(block: dict, key: str, ctx: str) -> Any:
    if key not in block:
        raise ConfigError(f"missing {ctx}.{key}")
    return block[key]


def parse_model(block: dict) -> DriftModel:
    kind = _require(block, "kind", "model")
    try:
        if kind == "zero":
            return ZeroDrift()
        if kind == "linear":
            return LinearDrift(float(_require(block, "slope", "model")))
        if kind == "tabulated":
            return TabulatedDrift(
                np.asarray(_require(block, "times", "model"), dtype=float),
                np.asarray(_require(block, "values", "model"), dtype=float),
                bool(block.get("derivative_semimartingale", True)),
            )
        if kind == "compensated-poisson":
            return CompensatedPoissonDrift(float(_require(block, "intensity", "model")))
        if kind == "truncated-brownian":
            cap = block.get("cap")
            return TruncatedBrownianDrift(
                float(_require(block, "scale", "model")),
                float(cap) if cap is not None else None,
            )
        if kind == "jump":
            return JumpDrift(
                float(_require(block, "time", "model")),
                float(_require(block, "size", "model")),
            )
        if kind == "predator":
            return PredatorDrift(
                float(_require(block, "seller_shares", "model")),
                float(_require(block, "seller_horizon", "model")),
            )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad model block: {exc}") from exc
    raise ConfigError(f"unknown model kind {kind!r}")


def parse_params(block: dict) -> ModelParams:
    try:
        return ModelParams(
            rho=float(_require(block, "rho", "params")),
            T=float(_require(block, "T", "params")),
            x=float(_require(block, "x", "params")),
            s0=float(block.get("s0", 0.0)),
            position_cap=(
                float(block["position_cap"]) if block.get("position_cap") is not None else None
            ),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad params block: {exc}") from exc


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config root must be a JSON object")
    for key in ("experiment", "model", "params", "grid", "mc"):
        if key not in config or not isinstance(config[key], dict):
            raise ConfigError(f"config needs a {key!r} object block")
    name = _require(config["experiment"], "name", "experiment")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {EXPERIMENTS}")
    _require(config["grid"], "n_steps", "grid")
    _require(config["mc"], "n_paths", "mc")
    _require(config["mc"], "seed", "mc")
    return config


def _write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


REPORT_HEADER = [
    "experiment",
    "model",
    "strategy",
    "n_steps",
    "n_paths",
    "seed",
    "mean",
    "standard_error",
    "price_leg",
    "impact_leg",
    "qv_leg",
]


def _strategy_builder(name: str, model: DriftModel) -> Callable:
    if name == "ow":
        return lambda path, p: ow_strategy(p, path.grid)
    if name == "optimal":
        return lambda path, p: optimal_strategy(model, path, p)
    if name == "linear":
        return lambda path, p: almgren_chriss_schedule(
            np.zeros_like(path.grid.times), p, path.grid, include_drift=False
        )
    raise ConfigError(f"unknown strategy {name!r}; choose ow | optimal | linear")


def run_experiment(config: dict, out_dir: Path, threads: int) -> None:
    """Execute the configured experiment, writing CSVs and a manifest."""
    name = config["experiment"]["name"]
    model = parse_model(config["model"])
    params = parse_params(config["params"])
    grid = TimeGrid.uniform(int(config["grid"]["n_steps"]), params.T)
    mc = config["mc"]
    n_paths = int(mc["n_paths"])
    seed = int(mc["seed"])
    sigma_m = float(mc.get("sigma_m", 0.2))
    exp = config["experiment"]

    out_dir.mkdir(parents=True, exist_ok=True)

    if name == "simulate":
        strategy_name = exp.get("strategy", "ow")
        builder = _strategy_builder(strategy_name, model)
        report = estimate_expected_cost(
            builder, model, params, grid, n_paths, seed, sigma_m=sigma_m,
            augment_jumps=bool(exp.get("augment_jumps", False)), n_threads=threads,
        )
        _write_csv(
            out_dir / "report.csv",
            REPORT_HEADER,
            [(
                name, model_id(model), strategy_name, grid.n_steps, n_paths, seed,
                report.mean, report.standard_error, report.breakdown.price_leg,
                report.breakdown.impact_leg, report.breakdown.qv_leg,
            )],
        )
        path = sample_path(model, grid, params, seed, path_index=0, sigma_m=sigma_m)
        _write_csv(
            out_dir / "trajectory.csv",
            ["time", "position", "impact", "jump"],
            strategy_rows(builder(path, params), params),
        )

    elif name == "optimal-cost":
        value = expected_cost_closed_form(model, params)
        _write_csv(
            out_dir / "cost.csv",
            ["model", "value", "standard_error", "method"],
            [(model_id(model), value.value,
              value.standard_error if value.standard_error is not None else "",
              value.method)],
        )

    elif name == "oracle-compare":
        n_list = [int(n) for n in exp.get("n_list", [4, 16, 64, 256])]
        reference = expected_cost_closed_form(model, params).value
        rows = []
        for n in n_list:
            sub = TimeGrid.uniform(n, params.T)
            if is_deterministic(model):
                ac, _ = is_absolutely_continuous(model, params)
                if not ac:
                    raise ModelStrategyMismatchError(
                        "oracle comparison needs an absolutely continuous drift"
                    )
                path = sample_path(model, sub, params, seed, sigma_m=0.0)
                value = qp_oracle(path.a, sub, params).value
                rows.append((n, model_id(model), "qp", value, reference, value - reference))
                chain = DriftChain.from_deterministic_drift(path.a, sub)
            elif isinstance(model, CompensatedPoissonDrift):
                chain = DriftChain.poisson_two_point(model.intensity, sub)
            else:
                raise ModelStrategyMismatchError(
                    f"no lattice oracle for {model_id(model)}"
                )
            value = dp_oracle(chain, params).value
            rows.append((n, model_id(model), "dp", value, reference, value - reference))
        _write_csv(
            out_dir / "oracles.csv",
            ["n_steps", "model", "oracle", "value", "reference", "gap"],
            rows,
        )

    elif name == "lemma1":
        n_list = [int(n) for n in exp.get("n_list", [8, 32, 128, 512])]
        ref_steps = int(exp.get("ref_steps", 4096))
        builder = _strategy_builder(exp.get("strategy", "ow"), model)
        rows = cost_convergence_study(
            builder, model, params, n_list, ref_steps, n_paths, seed,
            sigma_m=sigma_m, n_threads=threads,
        )
        _write_csv(
            out_dir / "convergence.csv",
            ["n_steps", "mean_abs_gap"],
            [(r.n_steps, r.mean_gap) for r in rows],
        )

    elif name == "perturb":
        builder = _strategy_builder(exp.get("strategy", "optimal"), model)
        eps_list = [float(e) for e in exp.get("eps", [0.0, 0.2])]
        rows = perturbation_test(
            builder, default_directions(params.T), eps_list, model, params,
            grid, n_paths, seed, sigma_m=sigma_m,
            augment_jumps=bool(exp.get("augment_jumps", True)), n_threads=threads,
        )
        _write_csv(
            out_dir / "perturbations.csv",
            ["direction", "eps", "mean_diff", "standard_error"],
            [(r.direction, r.eps, r.mean_diff, r.standard_error) for r in rows],
        )

    elif name == "exploit":
        k_values = [float(k) for k in exp.get("k_values", [1.0, 2.0, 4.0, 8.0])]
        rows = exploit_run(
            model, k_values, params, grid, n_paths, seed, sigma_m=sigma_m,
            n_threads=threads,
        )
        _write_csv(
            out_dir / "exploit.csv",
            ["k_scale", "mean_cost", "standard_error", "n_paths"],
            [(r.k_scale, r.mean_cost, r.standard_error, r.n_paths) for r in rows],
        )

    elif name == "cost-risk":
        rows = cost_risk_comparison(
            sigma=float(exp.get("sigma", 0.3)),
            lambda_risk=float(exp.get("lambda_risk", 0.5)),
            params=params, grid=grid, n_paths=n_paths, seed=seed,
            eta_ac=float(exp.get("eta_ac", 1.0)), n_threads=threads,
        )
        _write_csv(
            out_dir / "cost_risk.csv",
            ["strategy", "mean", "standard_error", "gap_to_optimal", "gap_standard_error"],
            [(r.strategy_id, r.mean, r.standard_error, r.mean_gap_to_best,
              r.gap_standard_error) for r in rows],
        )

    elif name == "figure1":
        if not isinstance(model, CompensatedPoissonDrift):
            raise ModelStrategyMismatchError(
                "the jump-trajectory figure needs a compensated-poisson model"
            )
        path = sample_path(model, grid, params, seed, path_index=0,
                           sigma_m=sigma_m, augment_jumps=True)
        strategy = optimal_strategy(model, path, params)
        _write_csv(
            out_dir / "trajectory.csv",
            ["time", "position", "impact", "jump"],
            strategy_rows(strategy, params),
        )

    else:  # pragma: no cover - guarded by load_config
        raise ConfigError(f"unknown experiment {name!r}")

    manifest = dict(config)
    manifest["mc"] = {**mc, "seed": seed}
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_verdict(suite: str, config: dict | None) -> int:
    overrides: dict = {}
    if config:
        overrides.update(config.get("overrides", {}))
        if "model" in config and isinstance(config["model"], dict):
            overrides["model"] = parse_model(config["model"])
    try:
        results = acceptance.run_suite(suite, overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    failed = False
    for result in results:
        print(result.line())
        if result.skipped is None and not result.passed:
            failed = True
    return EXIT_ACCEPTANCE if failed else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="impactlab",
        description="config-driven experiments for transient-impact optimal execution",
    )
    parser.add_argument("--config", metavar="PATH", help="experiment config JSON")
    parser.add_argument("--seed", type=int, metavar="U64", help="overrides config seed")
    parser.add_argument("--out", metavar="DIR", default="impactlab-out",
                        help="artifact directory (default: impactlab-out)")
    parser.add_argument("--threads", type=int, metavar="N", default=None,
                        help="worker threads (fallback: IMPACTLAB_THREADS)")
    parser.add_argument("--suite", metavar="NAME", choices=sorted(acceptance.SUITES),
                        help="run an acceptance suite instead of an experiment")
    args = parser.parse_args(argv)

    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("IMPACTLAB_THREADS", "1"))

    try:
        config = load_config(args.config) if args.config else None
        if args.suite:
            return run_verdict(args.suite, config)
        if config is None:
            parser.error("--config is required unless --suite is given")
        if args.seed is not None:
            config["mc"]["seed"] = args.seed
        run_experiment(config, Path(args.out), threads)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelStrategyMismatchError as exc:
        print(f"model/strategy mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except ImpactLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
