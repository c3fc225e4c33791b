"""Monte Carlo estimation engine.

Paths are indexed; every estimator stores per-path values into a preallocated
array and reduces with numpy afterwards, so results are bitwise reproducible
for a given seed regardless of how many worker threads filled the array.
Common random numbers come for free: competing strategies are evaluated
inside the same path loop.

Also hosts the exploit construction for drifts with a genuine jump: an
elementary signal of height K / jump_size over a short window before the
jump pairs to exactly K against dA while keeping int alpha^2 dt <= 1, and
the induced tracking strategy extracts expected profit growing linearly in K
at slope 1 / (2 rho).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .drift import (
    DriftModel,
    SamplePath,
    drift_jump,
    is_absolutely_continuous,
    model_id,
    sample_path,
)
from .drift import rng_stream
from .errors import AdmissibilityError, ModelStrategyMismatchError
from .market import (
    ModelParams,
    SEMIMARTINGALE,
    CostBreakdown,
    Strategy,
    TimeGrid,
    cost_discrete,
    cost_risk,
    cost_semimartingale,
)
from .strategies import (
    DriftSignal,
    almgren_chriss_schedule,
    cost_risk_strategy,
    ow_strategy,
    risk_adjusted_drift,
    signal_window,
    signal_zero,
    tracking_strategy,
)

StrategyBuilder = Callable[[SamplePath, ModelParams], Strategy]
Direction = Callable[[np.ndarray], np.ndarray]

DEFAULT_SIGMA_M = 0.2


@dataclass(frozen=True)
class EstimateReport:
    """Sample mean of per-path liquidation costs with its standard error and
    the mean cost legs."""

    mean: float
    standard_error: float
    n_paths: int
    seed: int
    breakdown: CostBreakdown

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return f"{self.mean:.6g} +- {self.standard_error:.2g} ({self.n_paths} paths)"


@dataclass(frozen=True)
class DiffReport:
    """Paired (common-random-numbers) difference of two cost estimates."""

    mean: float
    standard_error: float
    n_paths: int


def _run_indexed(n_paths: int, work: Callable[[int], None], n_threads: int) -> None:
    if n_threads <= 1 or n_paths < 2 * n_threads:
        for i in range(n_paths):
            work(i)
        return
    chunks = np.array_split(np.arange(n_paths), n_threads)

    def run_chunk(idx: np.ndarray) -> None:
        for i in idx:
            work(int(i))

    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        list(pool.map(run_chunk, chunks))


def _se(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(values.size))


def estimate_costs_matrix(
    builders: Sequence[StrategyBuilder],
    model: DriftModel,
    params: ModelParams,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    sigma_m: float = DEFAULT_SIGMA_M,
    augment_jumps: bool = False,
    n_threads: int = 1,
) -> np.ndarray:
    """Cost legs for several strategy builders on identical paths.

    Returns an array of shape (n_paths, n_builders, 3) with the price,
    impact, and quadratic-variation legs; totals are the leg sums.  A builder
    producing an inadmissible strategy aborts with the offending path seed.
    """
    if n_paths < 1:
        raise ValueError("need at least one path")
    out = np.empty((n_paths, len(builders), 3))

    def work(i: int) -> None:
        path = sample_path(
            model, grid, params, seed, path_index=i, sigma_m=sigma_m,
            augment_jumps=augment_jumps,
        )
        for j, builder in enumerate(builders):
            try:
                strategy = builder(path, params)
                legs = cost_semimartingale(strategy, path.s0, params)
            except AdmissibilityError as exc:
                raise AdmissibilityError(
                    f"builder {j} inadmissible on path (seed={seed}, index={i}): {exc}"
                ) from exc
            out[i, j, 0] = legs.price_leg
            out[i, j, 1] = legs.impact_leg
            out[i, j, 2] = legs.qv_leg

    _run_indexed(n_paths, work, n_threads)
    return out


def _report(legs: np.ndarray, seed: int) -> EstimateReport:
    totals = legs.sum(axis=1)
    means = legs.mean(axis=0)
    return EstimateReport(
        mean=float(totals.mean()),
        standard_error=_se(totals),
        n_paths=totals.size,
        seed=seed,
        breakdown=CostBreakdown(float(means[0]), float(means[1]), float(means[2])),
    )


def estimate_expected_cost(
    builder: StrategyBuilder,
    model: DriftModel,
    params: ModelParams,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    sigma_m: float = DEFAULT_SIGMA_M,
    augment_jumps: bool = False,
    n_threads: int = 1,
) -> EstimateReport:
    """Unbiased sample mean of per-path liquidation costs of the strategy the
    builder constructs on each path."""
    if n_paths < 2:
        raise ValueError("need at least two paths for a standard error")
    legs = estimate_costs_matrix(
        [builder], model, params, grid, n_paths, seed, sigma_m, augment_jumps, n_threads
    )
    return _report(legs[:, 0, :], seed)


def estimate_paired(
    builder_a: StrategyBuilder,
    builder_b: StrategyBuilder,
    model: DriftModel,
    params: ModelParams,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    sigma_m: float = DEFAULT_SIGMA_M,
    augment_jumps: bool = False,
    n_threads: int = 1,
) -> tuple[EstimateReport, EstimateReport, DiffReport]:
    """Two builders on identical paths; the difference report is for
    cost(a) - cost(b)."""
    legs = estimate_costs_matrix(
        [builder_a, builder_b], model, params, grid, n_paths, seed, sigma_m,
        augment_jumps, n_threads,
    )
    diff = legs[:, 0, :].sum(axis=1) - legs[:, 1, :].sum(axis=1)
    return (
        _report(legs[:, 0, :], seed),
        _report(legs[:, 1, :], seed),
        DiffReport(float(diff.mean()), _se(diff), n_paths),
    )


@dataclass(frozen=True)
class ConvergenceRow:
    n_steps: int
    mean_gap: float


def cost_convergence_study(
    builder: StrategyBuilder,
    model: DriftModel,
    params: ModelParams,
    n_list: Sequence[int],
    ref_steps: int,
    n_paths: int,
    seed: int,
    sigma_m: float = DEFAULT_SIGMA_M,
    n_threads: int = 1,
) -> list[ConvergenceRow]:
    """Mean absolute gap between coarse-grid discrete costs and the
    fine-grid cost of the same strategy path.

    The strategy is built once per path on the reference grid; each coarse
    cost reads the strategy and price at the coarse nodes only.  Grids must
    nest (every N divides ref_steps) so coarse nodes are reference nodes.
    """
    n_list = list(n_list)
    for n in n_list:
        if ref_steps % n != 0 or n >= ref_steps:
            raise ValueError("reference grid must strictly refine every coarse grid")
    ref_grid = TimeGrid.uniform(ref_steps, params.T)
    sub_grids = {n: TimeGrid(ref_grid.times[:: ref_steps // n]) for n in n_list}
    gaps = np.empty((n_paths, len(n_list)))

    def work(i: int) -> None:
        path = sample_path(model, ref_grid, params, seed, path_index=i, sigma_m=sigma_m)
        strategy = builder(path, params)
        ref_cost = cost_semimartingale(strategy, path.s0, params).total
        for j, n in enumerate(n_list):
            stride = ref_steps // n
            values = strategy.values[::stride]
            xi = np.empty(n + 1)
            xi[0] = values[0] - strategy.x_pre
            xi[1:] = np.diff(values)
            coarse = cost_discrete(xi, path.s0[::stride], sub_grids[n], params)
            gaps[i, j] = abs(coarse - ref_cost)

    _run_indexed(n_paths, work, n_threads)
    return [ConvergenceRow(n, float(gaps[:, j].mean())) for j, n in enumerate(n_list)]


@dataclass(frozen=True)
class PerturbationRow:
    direction: int
    eps: float
    mean_diff: float
    standard_error: float


def _bump(a: float, b: float) -> Direction:
    def h(t: np.ndarray) -> np.ndarray:
        s = np.clip((t - a) / (b - a), 0.0, 1.0)
        return np.sin(np.pi * s) ** 2

    return h


def default_directions(T: float) -> list[Direction]:
    """Eight bounded perturbation directions vanishing at the horizon:
    staggered bumps plus a block-and-ramp, a swing, and a parabola."""
    return [
        _bump(0.05 * T, 0.35 * T),
        _bump(0.2 * T, 0.5 * T),
        _bump(0.35 * T, 0.65 * T),
        _bump(0.5 * T, 0.8 * T),
        _bump(0.65 * T, 0.95 * T),
        lambda t: 1.0 - t / T,
        lambda t: np.sin(2.0 * np.pi * t / T) * (1.0 - t / T),
        lambda t: 4.0 * (t / T) * (1.0 - t / T),
    ]


def perturbation_test(
    base_builder: StrategyBuilder,
    directions: Sequence[Direction],
    eps_list: Sequence[float],
    model: DriftModel,
    params: ModelParams,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    sigma_m: float = DEFAULT_SIGMA_M,
    augment_jumps: bool = False,
    n_threads: int = 1,
) -> list[PerturbationRow]:
    """Paired cost differences E[C(X + eps h)] - E[C(X)] for bounded
    perturbation directions h (as functions of the node times) vanishing at
    the start and the horizon.  Common random numbers throughout, so eps = 0
    rows are exactly zero."""
    labels = [(d, float(e)) for d in range(len(directions)) for e in eps_list]
    diffs = np.empty((n_paths, len(labels)))

    def work(i: int) -> None:
        path = sample_path(
            model, grid, params, seed, path_index=i, sigma_m=sigma_m,
            augment_jumps=augment_jumps,
        )
        base = base_builder(path, params)
        base_cost = cost_semimartingale(base, path.s0, params).total
        t = base.grid.times
        for col, (d_idx, eps) in enumerate(labels):
            h = np.asarray(directions[d_idx](t), dtype=float)
            if h.shape != t.shape:
                raise ValueError("direction must evaluate to one value per node")
            if h[-1] != 0.0:
                raise ValueError("directions must vanish at the horizon")
            bumped = Strategy(
                grid=base.grid,
                x_pre=base.x_pre,
                values=base.values + eps * h,
                kind=SEMIMARTINGALE,
                jump_initial=base.jump_initial + eps * h[0],
                jump_terminal=base.jump_terminal - (eps * h[-2] if h.size > 1 else 0.0),
            )
            bumped.check_cap(params)
            diffs[i, col] = cost_semimartingale(bumped, path.s0, params).total - base_cost

    _run_indexed(n_paths, work, n_threads)
    return [
        PerturbationRow(d_idx, eps, float(diffs[:, col].mean()), _se(diffs[:, col]))
        for col, (d_idx, eps) in enumerate(labels)
    ]


def sample_gbm_price(
    params: ModelParams,
    grid: TimeGrid,
    sigma: float,
    seed: int,
    path_index: int = 0,
) -> np.ndarray:
    """Risk-neutral geometric Brownian price
    S0_t = s0 exp(sigma W_t - sigma^2 t / 2): the reference martingale for
    the cost-risk criterion."""
    t = grid.times
    rng = rng_stream(seed, path_index, 0)
    if t.size == 1:
        return np.array([params.s0])
    dw = rng.standard_normal(t.size - 1) * np.sqrt(np.diff(t))
    w = np.concatenate([[0.0], np.cumsum(dw)])
    return params.s0 * np.exp(sigma * w - 0.5 * sigma**2 * t)


@dataclass(frozen=True)
class CostRiskRow:
    strategy_id: str
    mean: float
    standard_error: float
    mean_gap_to_best: float
    gap_standard_error: float


def cost_risk_comparison(
    sigma: float,
    lambda_risk: float,
    params: ModelParams,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    eta_ac: float = 1.0,
    n_threads: int = 1,
) -> list[CostRiskRow]:
    """Common-random-numbers comparison of the cost-risk functional for the
    risk-optimal strategy, the block-rate-block schedule, and the
    quadratic-model baseline fed the risk-transformed drift, under a
    geometric Brownian price."""
    names = ["cost-risk-optimal", "ow", "almgren-chriss"]
    values = np.empty((n_paths, 3))

    def work(i: int) -> None:
        s0_values = sample_gbm_price(params, grid, sigma, seed, path_index=i)
        zeros = np.zeros_like(s0_values)
        optimal = cost_risk_strategy(s0_values, lambda_risk, params, grid)
        baseline = ow_strategy(params, grid)
        a_tilde, _ = risk_adjusted_drift(s0_values, zeros, lambda_risk, params, grid)
        ac = almgren_chriss_schedule(a_tilde, params, grid, eta_ac=eta_ac)
        for j, strat in enumerate((optimal, baseline, ac)):
            values[i, j] = cost_risk(strat, s0_values, params, lambda_risk)

    _run_indexed(n_paths, work, n_threads)
    rows = []
    for j, name in enumerate(names):
        gap = values[:, j] - values[:, 0]
        rows.append(
            CostRiskRow(
                strategy_id=name,
                mean=float(values[:, j].mean()),
                standard_error=_se(values[:, j]),
                mean_gap_to_best=float(gap.mean()),
                gap_standard_error=_se(gap),
            )
        )
    return rows


@dataclass(frozen=True)
class ExploitSpec:
    """Elementary exploit signal against a drift jump at ``jump_time`` of
    size ``jump_size``: alpha = height on [jump_time - window, jump_time).

    height = k_scale / jump_size pairs int alpha dA to exactly k_scale;
    window <= (jump_size / k_scale)^2 keeps int alpha^2 dt <= 1.
    """

    model: DriftModel
    k_scale: float
    jump_time: float
    jump_size: float
    window: float

    @property
    def height(self) -> float:
        return self.k_scale / self.jump_size

    @property
    def alpha_square_integral(self) -> float:
        return self.height**2 * self.window

    @property
    def jump_pairing(self) -> float:
        return self.height * self.jump_size


def build_exploit_spec(
    model: DriftModel,
    k_scale: float,
    params: ModelParams,
    grid: TimeGrid,
) -> ExploitSpec:
    """Size the exploit window: no longer than (jump_size / k)^2 (the
    square-integral budget), four base grid cells (resolvability), or the
    time to the jump."""
    ac, _ = is_absolutely_continuous(model, params)
    if ac:
        raise ModelStrategyMismatchError(
            f"{model_id(model)} is absolutely continuous: expected costs are "
            "bounded below and no exploit exists"
        )
    if k_scale < 0:
        raise ValueError("exploit scale must be nonnegative")
    tau, size = drift_jump(model, params)
    base_dt = float(np.min(np.diff(grid.times)))
    if k_scale == 0:
        window = min(4.0 * base_dt, tau)
    else:
        window = min((size / k_scale) ** 2, 4.0 * base_dt, tau)
    return ExploitSpec(model, float(k_scale), float(tau), float(size), float(window))


def exploit_strategy(
    spec: ExploitSpec, params: ModelParams, grid: TimeGrid
) -> tuple[Strategy, DriftSignal, TimeGrid]:
    """Tracking strategy of the exploit signal on the grid refined so the
    window holds at least four nodes.  Returns (strategy, signal, grid)."""
    start = spec.jump_time - spec.window
    inner = start + spec.window * np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    work_grid = grid.refined_with(inner[inner <= grid.horizon])
    if spec.k_scale == 0:
        signal = signal_zero(work_grid)
    else:
        signal = signal_window(spec.height, start, spec.jump_time, work_grid, params)
    strategy = tracking_strategy(signal, params)
    _assert_tracking_bound(strategy, signal, params)
    return strategy, signal, work_grid


def _assert_tracking_bound(
    strategy: Strategy, signal: DriftSignal, params: ModelParams
) -> None:
    # sup_t |X - alpha/(2 rho)| admits an a-priori bound in terms of the
    # square-integral budget M of alpha; a violation flags a discretization
    # bug in the construction.
    rho, T = params.rho, params.T
    m_budget = max(1.0, float(np.trapezoid(signal.alpha**2, strategy.grid.times)))
    root = np.sqrt(m_budget * T)
    bound = (
        abs(params.x)
        + 1.5 * (1.0 + rho * T) * root
        + rho * T * ((1.0 + rho * T) * root + 0.5 * root)
    )
    gap = np.max(np.abs(strategy.values - signal.alpha / (2.0 * rho)))
    if gap > bound * (1.0 + 1e-9):
        raise AssertionError(
            f"tracking gap {gap:g} exceeds its a-priori bound {bound:g}"
        )


@dataclass(frozen=True)
class ExploitRow:
    k_scale: float
    mean_cost: float
    standard_error: float
    n_paths: int


def exploit_run(
    model: DriftModel,
    k_values: Sequence[float],
    params: ModelParams,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    sigma_m: float = DEFAULT_SIGMA_M,
    n_threads: int = 1,
) -> list[ExploitRow]:
    """Expected cost of the exploit strategy per scale K against a drift
    with a genuine jump.  The construction is deterministic (the target
    drift is), so only the price noise varies across paths; means decrease
    in K with asymptotic slope -1/(2 rho)."""
    rows = []
    for k in k_values:
        spec = build_exploit_spec(model, k, params, grid)
        strategy, _, work_grid = exploit_strategy(spec, params, grid)
        if spec.k_scale > 0:
            if spec.alpha_square_integral > 1.0 + 1e-12:
                raise AssertionError("exploit signal exceeds its square-integral budget")
            if abs(spec.jump_pairing - spec.k_scale) > 1e-9 * max(1.0, spec.k_scale):
                raise AssertionError("exploit signal does not pair to K against the jump")
        report = estimate_expected_cost(
            lambda path, p, s=strategy: s,
            model,
            params,
            work_grid,
            n_paths,
            seed,
            sigma_m=sigma_m,
            n_threads=n_threads,
        )
        rows.append(ExploitRow(float(k), report.mean, report.standard_error, n_paths))
    return rows
