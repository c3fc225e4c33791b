"""Closed-form liquidation strategies.

Everything here is built from one primitive: given a square-integrable target
signal alpha (the drift-derivative surrogate), there is a unique admissible
strategy that keeps

    phi(t) X_t + (1 - phi(t)) E_t + phi(t) Y_t / 2 - alpha_t / (2 rho) = 0

at all interior times, where phi is the horizon weight and (Z, Y) are the
conditional processes built from alpha.  ``tracking_strategy`` evaluates that
construction pathwise; the drift-optimal strategy is the special case
alpha = A', the block-rate-block schedule is alpha = 0, and the cost-risk
optimum is alpha = A' of a risk-transformed drift.

The running integral int phi dZ is never discretized against dZ directly: for
martingale derivatives it has the exact pathwise form -((T-t) A'_t - T A'_0
+ A_t) / 2, for deterministic signals it vanishes, and the generic fallback
uses integration by parts (phi Z boundary terms minus a Riemann integral of
Z phi'), which only needs node values of Z.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .drift import (
    DriftModel,
    JumpDrift,
    PredatorDrift,
    SamplePath,
    TruncatedBrownianDrift,
    derivative_is_semimartingale,
    has_martingale_derivative,
    is_absolutely_continuous,
    is_deterministic,
    model_id,
)
from .errors import (
    NoOptimalStrategyError,
    NonAbsolutelyContinuousDriftError,
    UnsupportedDriftError,
)
from .market import (
    BV,
    SEMIMARTINGALE,
    ModelParams,
    Strategy,
    TimeGrid,
    horizon_weight,
    impact_path,
)


@dataclass(frozen=True)
class DriftSignal:
    """Target signal alpha with its running integrals and conditional
    processes, sampled on a grid.

    Fields: ``alpha``; ``a_alpha`` = int alpha ds; ``ia_alpha`` = the second
    running integral; ``z``/``y`` the conditional processes built from alpha;
    ``phi_dz`` = int_(0,t] phi dZ and ``int_phi_dz`` its running integral.
    ``finite_variation`` tags signals whose induced strategy stays of bounded
    variation (deterministic or piecewise-linear-with-jumps paths).
    """

    grid: TimeGrid
    alpha: np.ndarray
    a_alpha: np.ndarray
    ia_alpha: np.ndarray
    z: np.ndarray
    y: np.ndarray
    phi_dz: np.ndarray
    int_phi_dz: np.ndarray
    finite_variation: bool = True

    def __post_init__(self) -> None:
        n = self.grid.times.shape
        for name in ("alpha", "a_alpha", "ia_alpha", "z", "y", "phi_dz", "int_phi_dz"):
            if getattr(self, name).shape != n:
                raise ValueError(f"signal field {name} does not match the grid")


def _deterministic_zy(
    a_alpha: np.ndarray, ia_alpha: np.ndarray, times: np.ndarray, params: ModelParams
) -> tuple[np.ndarray, np.ndarray]:
    z0 = -(a_alpha[-1] + params.rho * ia_alpha[-1])
    z = np.full_like(a_alpha, z0)
    y = z + params.rho * ia_alpha + (1.0 + params.rho * (params.T - times)) * a_alpha
    return z, y


def signal_zero(grid: TimeGrid) -> DriftSignal:
    zeros = np.zeros_like(grid.times)
    return DriftSignal(grid, zeros, zeros, zeros, zeros, zeros, zeros, zeros)


def signal_constant(level: float, grid: TimeGrid, params: ModelParams) -> DriftSignal:
    t = grid.times
    a_alpha = level * t
    ia_alpha = 0.5 * level * t**2
    z, y = _deterministic_zy(a_alpha, ia_alpha, t, params)
    zeros = np.zeros_like(t)
    return DriftSignal(grid, np.full_like(t, level), a_alpha, ia_alpha, z, y, zeros, zeros)


def signal_window(
    height: float, start: float, stop: float, grid: TimeGrid, params: ModelParams
) -> DriftSignal:
    """Elementary signal: alpha = height on [start, stop), zero elsewhere.
    Integrals are exact; start and stop must be grid nodes so the induced
    strategy jumps are representable."""
    t = grid.times
    if not (0.0 <= start < stop <= grid.horizon):
        raise ValueError("window must satisfy 0 <= start < stop <= T")
    for edge in (start, stop):
        if not np.any(np.isclose(t, edge, rtol=0.0, atol=1e-12)):
            raise ValueError("window edges must sit on grid nodes")
    alpha = np.where((t >= start) & (t < stop), height, 0.0)
    run = np.clip(t - start, 0.0, stop - start)
    a_alpha = height * run
    ia_alpha = height * (0.5 * run**2 + (stop - start) * np.clip(t - stop, 0.0, None))
    z, y = _deterministic_zy(a_alpha, ia_alpha, t, params)
    zeros = np.zeros_like(t)
    return DriftSignal(grid, alpha, a_alpha, ia_alpha, z, y, zeros, zeros)


def phi_dz_by_parts(z: np.ndarray, grid: TimeGrid, params: ModelParams) -> np.ndarray:
    """Generic discretization of int_(0,t] phi dZ via integration by parts:
    phi(t) Z_t - phi(0) Z_0 - int_0^t Z phi' ds with phi' = rho phi^2."""
    t = grid.times
    phi = horizon_weight(t, params)
    integrand = z * params.rho * phi**2
    riemann = cumulative_trapezoid(integrand, t, initial=0.0) if t.size > 1 else np.zeros(1)
    return phi * z - phi[0] * z[0] - riemann


def signal_from_path(model: DriftModel, path: SamplePath, params: ModelParams) -> DriftSignal:
    """Signal alpha = A' read off a sampled path, with exact running
    integrals taken from the path itself."""
    if path.a_prime is None:
        raise UnsupportedDriftError(
            f"{model_id(model)} has no drift derivative to track"
        )
    t = path.grid.times
    if has_martingale_derivative(model):
        a0 = path.a_prime[0]
        u = params.T - t
        phi_dz = -0.5 * (u * path.a_prime - params.T * a0 + path.a)
        int_phi_dz = -0.5 * (u * path.a - params.T * a0 * t + 2.0 * path.int_a)
        fv = not isinstance(model, TruncatedBrownianDrift)
    elif is_deterministic(model):
        phi_dz = np.zeros_like(t)
        int_phi_dz = np.zeros_like(t)
        fv = True
    else:
        raise UnsupportedDriftError(
            f"no closed form for int phi dZ under {model_id(model)}"
        )
    return DriftSignal(
        grid=path.grid,
        alpha=path.a_prime,
        a_alpha=path.a,
        ia_alpha=path.int_a,
        z=path.z,
        y=path.y,
        phi_dz=phi_dz,
        int_phi_dz=int_phi_dz,
        finite_variation=fv,
    )


def signal_scaled(signal: DriftSignal, factor: float) -> DriftSignal:
    """Signals are linear in alpha, so scaling is field-wise."""
    return replace(
        signal,
        alpha=factor * signal.alpha,
        a_alpha=factor * signal.a_alpha,
        ia_alpha=factor * signal.ia_alpha,
        z=factor * signal.z,
        y=factor * signal.y,
        phi_dz=factor * signal.phi_dz,
        int_phi_dz=factor * signal.int_phi_dz,
    )


def _jump_mask(times: np.ndarray, jump_times: np.ndarray | None) -> np.ndarray:
    mask = np.zeros(times.shape, dtype=bool)
    mask[0] = True
    mask[-1] = True
    if jump_times is not None and len(jump_times) > 0:
        jt = np.asarray(jump_times, dtype=float)
        for idx in (np.searchsorted(times, jt), np.searchsorted(times, jt) - 1):
            idx = np.clip(idx, 0, times.size - 1)
            ok = np.isclose(times[idx], jt, rtol=0.0, atol=1e-12)
            mask[idx[ok]] = True
    return mask


def ow_strategy(params: ModelParams, grid: TimeGrid) -> Strategy:
    """Block-rate-block schedule optimal under a martingale price: initial
    block -x / (2 + rho T), constant rate, equal terminal block.  A zero
    horizon degenerates to a single block."""
    t = grid.times
    x, rho, T = params.x, params.rho, params.T
    if T == 0.0 or grid.n_steps == 0:
        return Strategy(
            grid=TimeGrid(np.array([0.0])),
            x_pre=x,
            values=np.array([0.0]),
            kind=BV,
            jump_initial=-x,
            jump_terminal=-x,
            jump_mask=np.array([True]),
        )
    q = 2.0 + rho * T
    values = x * (1.0 + rho * (T - t)) / q
    values[-1] = 0.0
    block = -x / q
    return Strategy(
        grid=grid,
        x_pre=x,
        values=values,
        kind=BV,
        jump_initial=block,
        jump_terminal=block,
        jump_mask=_jump_mask(t, None),
    )


def tracking_strategy(
    signal: DriftSignal,
    params: ModelParams,
    jump_times: np.ndarray | None = None,
) -> Strategy:
    """The unique admissible strategy satisfying the interior tracking
    relation for the given signal.

    Trajectory on [0, T): with u = T - t and q = 2 + rho T,

        X_t = (x (1 + rho u) - (1 + rho t) Y_0 / 2) / q
              - F_t / 2 + alpha_t / (2 rho)
              - rho (int_0^t F ds + int_0^t int alpha) / 2,

    where F = int phi dZ.  The initial block is alpha_0 / (2 rho)
    - (x + Y_0 / 2) / q and the terminal block clears the left limit at T.
    """
    grid = signal.grid
    t = grid.times
    x, rho, T = params.x, params.rho, params.T
    if T == 0.0 or grid.n_steps == 0:
        raise ValueError("tracking construction needs a positive horizon")
    q = 2.0 + rho * T
    u = T - t
    y0 = signal.y[0]
    formula = (
        (x * (1.0 + rho * u) - 0.5 * (1.0 + rho * t) * y0) / q
        - 0.5 * signal.phi_dz
        + signal.alpha / (2.0 * rho)
        - rho * (0.5 * signal.int_phi_dz + 0.5 * signal.ia_alpha)
    )
    values = formula.copy()
    values[-1] = 0.0
    jump_initial = signal.alpha[0] / (2.0 * rho) - (x + 0.5 * y0) / q
    jump_terminal = -formula[-1]
    strategy = Strategy(
        grid=grid,
        x_pre=x,
        values=values,
        kind=BV if signal.finite_variation else SEMIMARTINGALE,
        jump_initial=jump_initial,
        jump_terminal=jump_terminal,
        jump_mask=_jump_mask(t, jump_times),
    )
    strategy.check_cap(params)
    return strategy


def terminal_jump_formula(signal: DriftSignal, params: ModelParams) -> float:
    """Terminal block predicted directly from the signal (independent of the
    assembled trajectory): -(x + Y_0/2)/q - F_{T-}/2 - (int alpha)/2
    + Y_{T-}/2 - alpha_{T-}/(2 rho)."""
    q = 2.0 + params.rho * params.T
    return (
        -(params.x + 0.5 * signal.y[0]) / q
        - 0.5 * signal.phi_dz[-1]
        - 0.5 * signal.a_alpha[-1]
        + 0.5 * signal.y[-1]
        - signal.alpha[-1] / (2.0 * params.rho)
    )


def optimal_strategy(model: DriftModel, path: SamplePath, params: ModelParams) -> Strategy:
    """Expected-cost-optimal strategy for an absolutely continuous drift with
    a bounded semimartingale derivative: the tracking strategy for
    alpha = A'.

    Non-absolutely-continuous drifts are rejected (expected costs are
    unbounded below; see the exploit tooling).  Catalogue entries whose
    derivative is not a semimartingale get a "no optimal strategy" error.
    """
    ac, _ = is_absolutely_continuous(model, params)
    if not ac:
        raise NonAbsolutelyContinuousDriftError(
            f"{model_id(model)} jumps before the horizon: expected costs are "
            "unbounded below and no optimal strategy exists"
        )
    if isinstance(model, (JumpDrift, PredatorDrift)):
        raise UnsupportedDriftError(
            f"{model_id(model)} jumps exactly at the horizon; the optimal "
            "pre-positioning for a terminal drift jump is outside the catalogue"
        )
    if not derivative_is_semimartingale(model):
        raise NoOptimalStrategyError(
            f"{model_id(model)} has a non-semimartingale derivative: the "
            "expected-cost infimum is finite but not attained"
        )
    signal = signal_from_path(model, path, params)
    return tracking_strategy(signal, params, jump_times=path.jump_times)


def pathwise_optimal_strategy(
    a: np.ndarray,
    a_prime: np.ndarray,
    params: ModelParams,
    grid: TimeGrid,
    jump_times: np.ndarray | None = None,
) -> Strategy:
    """Optimal strategy for a martingale drift derivative, evaluated directly
    from (A, A') with no distributional input:

        X_t = x (1 + rho u) / (2 + rho T) + (2 + rho u) A'_t / (4 rho)
              + (1 + rho u) A_t / 4,   u = T - t.
    """
    t = grid.times
    x, rho, T = params.x, params.rho, params.T
    q = 2.0 + rho * T
    u = T - t
    formula = (
        x * (1.0 + rho * u) / q
        + (2.0 + rho * u) * np.asarray(a_prime, dtype=float) / (4.0 * rho)
        + (1.0 + rho * u) * np.asarray(a, dtype=float) / 4.0
    )
    values = formula.copy()
    values[-1] = 0.0
    strategy = Strategy(
        grid=grid,
        x_pre=x,
        values=values,
        kind=BV,
        jump_initial=float(values[0] - x),
        jump_terminal=float(-formula[-1]),
        jump_mask=_jump_mask(t, jump_times),
    )
    strategy.check_cap(params)
    return strategy


def risk_adjusted_drift(
    s0_values: np.ndarray,
    a_values: np.ndarray,
    lambda_risk: float,
    params: ModelParams,
    grid: TimeGrid,
) -> tuple[np.ndarray, np.ndarray]:
    """Drift and price transformation reducing the cost-risk criterion to a
    plain expected-cost problem:

        A~ = rho / (rho + lambda) (A - lambda int_0^t S0 ds)
        S~0 = rho / (rho + lambda) (S0 - lambda int_0^t S0 ds)

    Returns (a_tilde, s0_tilde) sampled on the grid.
    """
    s0_values = np.asarray(s0_values, dtype=float)
    a_values = np.asarray(a_values, dtype=float)
    t = grid.times
    running = cumulative_trapezoid(s0_values, t, initial=0.0) if t.size > 1 else np.zeros(1)
    scale = params.rho / (params.rho + lambda_risk)
    return scale * (a_values - lambda_risk * running), scale * (s0_values - lambda_risk * running)


def cost_risk_strategy(
    s0_values: np.ndarray,
    lambda_risk: float,
    params: ModelParams,
    grid: TimeGrid,
) -> Strategy:
    """Minimizer of expected cost plus lambda times the running position
    value, for a martingale S0.

    This is the martingale-derivative optimal strategy applied to the
    risk-transformed drift, which collapses to the pathwise formula

        X_t = x (1 + rho u) / (2 + rho T)
              - (rho lambda / (rho + lambda)) (
                    (2 + rho u) S0_t / (4 rho)
                    + (1 + rho u) int_0^t S0 ds / 4 ),

    with u = T - t.  lambda must carry the sign of the position; lambda = 0
    returns the block-rate-block schedule unchanged.
    """
    if lambda_risk == 0.0:
        return ow_strategy(params, grid)
    if lambda_risk * params.x <= 0.0:
        raise ValueError("risk aversion lambda must have the sign of the position x")
    s0_values = np.asarray(s0_values, dtype=float)
    t = grid.times
    x, rho, T = params.x, params.rho, params.T
    q = 2.0 + rho * T
    u = T - t
    running = cumulative_trapezoid(s0_values, t, initial=0.0) if t.size > 1 else np.zeros(1)
    coef = rho * lambda_risk / (rho + lambda_risk)
    formula = x * (1.0 + rho * u) / q - coef * (
        (2.0 + rho * u) * s0_values / (4.0 * rho) + (1.0 + rho * u) * running / 4.0
    )
    values = formula.copy()
    values[-1] = 0.0
    strategy = Strategy(
        grid=grid,
        x_pre=x,
        values=values,
        kind=SEMIMARTINGALE,
        jump_initial=float(values[0] - x),
        jump_terminal=float(-formula[-1]),
        jump_mask=_jump_mask(t, None),
    )
    strategy.check_cap(params)
    return strategy


def almgren_chriss_schedule(
    a_values: np.ndarray,
    params: ModelParams,
    grid: TimeGrid,
    eta_ac: float = 1.0,
    include_drift: bool = True,
) -> Strategy:
    """Comparison baseline: the optimal schedule of the quadratic-cost model
    with temporary impact eta_ac, specialized to a martingale drift
    derivative, where the drift enters in integrated form:

        X_t = ((T - t) / T) (x - T A_t / (4 eta_ac)).

    Continuous (no blocks); its own cost functional is the quadratic one, so
    it serves only as a baseline under the transient-impact costs.
    """
    if params.T == 0.0 or grid.n_steps == 0:
        raise ValueError("the quadratic-model baseline needs a positive horizon")
    if not eta_ac > 0:
        raise ValueError("eta_ac must be positive")
    t = grid.times
    a_values = np.asarray(a_values, dtype=float)
    frac = (params.T - t) / params.T
    if include_drift:
        values = frac * (params.x - params.T * a_values / (4.0 * eta_ac))
    else:
        values = frac * params.x
    values[-1] = 0.0
    strategy = Strategy(
        grid=grid,
        x_pre=params.x,
        values=values,
        kind=SEMIMARTINGALE if include_drift else BV,
        jump_initial=float(values[0] - params.x),
        jump_terminal=0.0,
        jump_mask=None,
    )
    strategy.check_cap(params)
    return strategy


def tracking_residual(
    strategy: Strategy, signal: DriftSignal, params: ModelParams
) -> np.ndarray:
    """Residual of the interior tracking relation at the grid nodes (last
    node excluded), using the impact recursion of the sampled strategy.
    Should vanish as the grid refines."""
    t = strategy.grid.times[:-1]
    phi = horizon_weight(t, params)
    e = impact_path(strategy, params).e[:-1]
    return (
        phi * strategy.values[:-1]
        + (1.0 - phi) * e
        + 0.5 * phi * signal.y[:-1]
        - signal.alpha[:-1] / (2.0 * params.rho)
    )


def strategy_rows(strategy: Strategy, params: ModelParams) -> list[tuple[float, float, float, int]]:
    """(time, X, E, jump indicator) rows for CSV export."""
    imp = impact_path(strategy, params)
    mask = strategy.jump_mask
    if mask is None:
        mask = np.zeros(strategy.grid.times.shape, dtype=bool)
    return [
        (float(t), float(xv), float(ev), int(j))
        for t, xv, ev, j in zip(strategy.grid.times, strategy.values, imp.e, mask)
    ]
