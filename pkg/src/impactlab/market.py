"""Market-impact primitives: time grids, position strategies, the volume-impact
process, the affected price, and the liquidation cost functionals.

The model: an unaffected price S0 is shifted by the running volume impact
E_t = sum of past trades discounted at the resilience rate rho.  Trading a
position path X (right-continuous, X(0-) = x, X(T) = 0) costs

    C(X) = int S0_{t-} dX + [S0, X]_T + int E_{t-} dX + (1/2) [X]_T,

which for block trades reduces to "walk the book" costs with half-squared-jump
terms.  On a grid, every functional here agrees exactly with the discrete-time
cost of the induced sequence of block trades, so grid refinement is the only
approximation anywhere in this module.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import AdmissibilityError, ConstraintViolationError

BV = "bounded-variation"
SEMIMARTINGALE = "semimartingale"

#: absolute tolerance for algebraic identities (sum-to-target checks etc.)
ALGEBRAIC_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Market and impact parameters.

    Parameters
    ----------
    rho : float
        Resilience rate of price impact, per unit time.  Must be positive.
    T : float
        Liquidation horizon.  ``T == 0`` means a single forced block trade.
    x : float
        Initial position X(0-) to liquidate (signed; negative = buy program).
    s0 : float
        Initial unaffected price S0(0).
    eta : float
        Impact magnitude.  Fixed to 1; the general case rescales onto this one.
    position_cap : float, optional
        Hard bound on |X_t| for admissibility.  Defaults to 1e6 * max(|x|, 1).
    """

    rho: float
    T: float
    x: float
    s0: float = 0.0
    eta: float = 1.0
    position_cap: float | None = None

    def __post_init__(self) -> None:
        if not self.rho > 0.0:
            raise ValueError(f"resilience rate rho must be positive, got {self.rho}")
        if self.T < 0.0:
            raise ValueError(f"horizon T must be nonnegative, got {self.T}")
        if self.eta != 1.0:
            raise ValueError("impact magnitude eta is fixed to 1 in this model")
        if self.position_cap is not None and not self.position_cap > 0.0:
            raise ValueError("position_cap must be positive when given")

    @property
    def cap(self) -> float:
        """Effective admissibility bound on |X_t|."""
        if self.position_cap is not None:
            return self.position_cap
        return 1e6 * max(abs(self.x), 1.0)


@dataclass(frozen=True)
class TimeGrid:
    """Ordered trading times t_0 = 0 < t_1 < ... < t_N = T."""

    times: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        if t.ndim != 1 or t.size < 1:
            raise ValueError("grid needs at least one time point")
        if t[0] != 0.0:
            raise ValueError("grid must start at 0")
        if t.size > 1 and not np.all(np.diff(t) > 0.0):
            raise ValueError("grid times must be strictly increasing")

    @classmethod
    def uniform(cls, n_steps: int, T: float) -> "TimeGrid":
        if n_steps < 0:
            raise ValueError("n_steps must be nonnegative")
        if T == 0.0 or n_steps == 0:
            if T != 0.0:
                raise ValueError("n_steps = 0 requires T = 0")
            return cls(np.array([0.0]))
        return cls(np.linspace(0.0, T, n_steps + 1))

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def refined_with(self, extra: Iterable[float]) -> "TimeGrid":
        """Grid augmented with additional node times inside [0, T]."""
        extra = np.asarray(list(extra), dtype=float)
        if extra.size == 0:
            return self
        if extra.min() < 0.0 or extra.max() > self.horizon:
            raise ValueError("extra nodes must lie inside [0, T]")
        merged = np.union1d(self.times, extra)
        return TimeGrid(merged)


def horizon_weight(t, params: ModelParams):
    """Weight 1 / (2 + rho (T - t)) splitting position against impact.

    Increases from 1 / (2 + rho T) at t = 0 to 1/2 at the horizon.  Accepts
    scalars or arrays; values outside [0, T] are a domain error.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > params.T):
        raise ValueError("time outside the trading interval [0, T]")
    out = 1.0 / (2.0 + params.rho * (params.T - t))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Strategy:
    """A position path sampled on a grid.

    ``values[k]`` is X at grid node k (right-continuous convention: node
    values are post-trade).  ``x_pre`` is the pre-trading position X(0-), so
    the initial block is ``values[0] - x_pre``.  ``jump_terminal`` stores the
    terminal block exactly when the constructor knows it analytically;
    otherwise it is the last grid increment.
    """

    grid: TimeGrid
    x_pre: float
    values: np.ndarray
    kind: str = BV
    jump_initial: float = 0.0
    jump_terminal: float = 0.0
    jump_mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != self.grid.times.shape:
            raise AdmissibilityError("strategy values do not match the grid")
        if not np.all(np.isfinite(v)):
            raise AdmissibilityError("strategy values must be finite")
        if v[-1] != 0.0:
            raise AdmissibilityError(
                f"liquidation constraint violated: X(T) = {v[-1]!r}, expected 0"
            )
        if self.kind not in (BV, SEMIMARTINGALE):
            raise AdmissibilityError(f"unknown strategy kind {self.kind!r}")

    def check_cap(self, params: ModelParams) -> None:
        worst = max(abs(self.x_pre), float(np.max(np.abs(self.values))))
        if worst > params.cap:
            raise AdmissibilityError(
                f"position {worst:g} exceeds the admissibility cap {params.cap:g}"
            )


def strategy_from_values(
    grid: TimeGrid,
    x_pre: float,
    values: np.ndarray,
    kind: str = BV,
    jump_terminal: float | None = None,
    jump_mask: np.ndarray | None = None,
) -> Strategy:
    """Build a Strategy, deriving the initial jump and defaulting the terminal
    one to the last grid increment."""
    values = np.asarray(values, dtype=float)
    j0 = float(values[0] - x_pre)
    if jump_terminal is None:
        jump_terminal = float(values[-1] - values[-2]) if values.size > 1 else j0
    return Strategy(grid, float(x_pre), values, kind, j0, float(jump_terminal), jump_mask)


def trade_sizes(strategy: Strategy) -> np.ndarray:
    """Block trades xi_k induced on the grid: xi_0 = X_0 - X(0-), then the
    increments of the node values.  Sums to -x_pre by the liquidation
    constraint."""
    v = strategy.values
    xi = np.empty_like(v)
    xi[0] = v[0] - strategy.x_pre
    if v.size > 1:
        xi[1:] = np.diff(v)
    return xi


@dataclass(frozen=True)
class ImpactPath:
    """Volume impact along a strategy.

    ``e[k]`` is E at node k (post-trade) and ``e_pre[k]`` the left limit
    E_{t_k-}; the convention E(0-) = 0 makes ``e_pre[0] = 0``.
    """

    e: np.ndarray
    e_pre: np.ndarray


def _impact_from_trades(xi: np.ndarray, times: np.ndarray, rho: float) -> ImpactPath:
    # E_k = sum_i exp(-rho (t_k - t_i)) xi_i, evaluated through a cumulative
    # sum in the decayed gauge exp(rho (t - T)) so no term overflows.
    w = np.exp(rho * (times - times[-1]))
    c = np.cumsum(w * xi)
    e = c / w
    e_pre = e - xi
    return ImpactPath(e=e, e_pre=e_pre)


def impact_path(strategy: Strategy, params: ModelParams) -> ImpactPath:
    """Impact E along the strategy.  Satisfies the nodewise recursion
    E_k = exp(-rho dt_k) E_{k-1} + xi_k exactly (up to roundoff)."""
    xi = trade_sizes(strategy)
    return _impact_from_trades(xi, strategy.grid.times, params.rho)


def price_path(s0_values: np.ndarray, impact: ImpactPath) -> np.ndarray:
    """Affected price S^X = S0 + E_{t-} nodewise (trades eat the book after
    any simultaneous S0 jump, hence the left limit)."""
    s0_values = np.asarray(s0_values, dtype=float)
    if s0_values.shape != impact.e_pre.shape:
        raise ValueError("price samples and impact are on different grids")
    return s0_values + impact.e_pre


@dataclass(frozen=True)
class CostBreakdown:
    """The three legs of the liquidation cost.

    price_leg   : int S0_{t-} dX + [S0, X]_T  (collapses to sum_k S0_k xi_k)
    impact_leg  : int E_{t-} dX
    qv_leg      : (1/2) [X]_T
    """

    price_leg: float
    impact_leg: float
    qv_leg: float

    @property
    def total(self) -> float:
        return self.price_leg + self.impact_leg + self.qv_leg


def _legs(xi: np.ndarray, s0_values: np.ndarray, times: np.ndarray, rho: float) -> CostBreakdown:
    imp = _impact_from_trades(xi, times, rho)
    price = float(np.dot(s0_values, xi))
    impact = float(np.dot(imp.e_pre, xi))
    qv = 0.5 * float(np.dot(xi, xi))
    return CostBreakdown(price, impact, qv)


def cost_discrete(
    xi: np.ndarray, s0_values: np.ndarray, grid: TimeGrid, params: ModelParams
) -> float:
    """Cost of the discrete trade sequence xi_0 ... xi_N executed at the grid
    nodes against sampled S0:

        sum_k ( S0_k xi_k + sum_{i<k} exp(-rho (t_k - t_i)) xi_i xi_k + xi_k^2 / 2 ).

    Equivalently (S0 terms aside) half the quadratic form of the decay matrix
    G_ij = exp(-rho |t_i - t_j|).  Trades must liquidate: sum xi = -x.
    """
    xi = np.asarray(xi, dtype=float)
    s0_values = np.asarray(s0_values, dtype=float)
    if xi.shape != grid.times.shape or s0_values.shape != grid.times.shape:
        raise ValueError("trades and price samples must align with the grid")
    total = float(np.sum(xi))
    if abs(total + params.x) > ALGEBRAIC_TOL * max(1.0, abs(params.x)):
        raise ConstraintViolationError(
            f"trades sum to {total:.15g}, expected {-params.x:.15g}"
        )
    return _legs(xi, s0_values, grid.times, params.rho).total


def cost_semimartingale(
    strategy: Strategy, s0_values: np.ndarray, params: ModelParams
) -> CostBreakdown:
    """Liquidation cost of a sampled strategy.

    Discretizes each leg with left-point sums (the initial jump included) and
    increment products for the covariations; on the grid this coincides
    exactly with ``cost_discrete`` of the induced block trades, and with
    ``cost_bv`` for pure-jump strategies.
    """
    s0_values = np.asarray(s0_values, dtype=float)
    if s0_values.shape != strategy.grid.times.shape:
        raise ValueError("price samples must align with the strategy grid")
    strategy.check_cap(params)
    xi = trade_sizes(strategy)
    return _legs(xi, s0_values, strategy.grid.times, params.rho)


def cost_bv(strategy: Strategy, s0_values: np.ndarray, params: ModelParams) -> CostBreakdown:
    """Cost of a bounded-variation strategy: block trades priced after any
    simultaneous S0 jump plus the exponential-decay double sum.  Semimartingale
    strategies must go through ``cost_semimartingale`` instead."""
    if strategy.kind != BV:
        raise ValueError(
            "strategy is tagged semimartingale; use cost_semimartingale"
        )
    return cost_semimartingale(strategy, s0_values, params)


def cost_running(
    strategy: Strategy, s0_values: np.ndarray, params: ModelParams
) -> np.ndarray:
    """Cumulative cost through each node: entry k is the cost of all trading
    on [0, t_k].  The last entry equals the total cost."""
    s0_values = np.asarray(s0_values, dtype=float)
    xi = trade_sizes(strategy)
    imp = impact_path(strategy, params)
    per_node = s0_values * xi + imp.e_pre * xi + 0.5 * xi * xi
    return np.cumsum(per_node)


def cost_risk(
    strategy: Strategy,
    s0_values: np.ndarray,
    params: ModelParams,
    lambda_risk: float,
) -> float:
    """Cost-risk functional: liquidation cost plus ``lambda_risk`` times the
    running position value int S^X_t X_t dt (trapezoid in time)."""
    s0_values = np.asarray(s0_values, dtype=float)
    base = cost_semimartingale(strategy, s0_values, params).total
    affected = price_path(s0_values, impact_path(strategy, params))
    running = float(np.trapezoid(affected * strategy.values, strategy.grid.times))
    return base + lambda_risk * running


def decay_matrix(grid: TimeGrid, params: ModelParams) -> np.ndarray:
    """Positive-definite kernel G_ij = exp(-rho |t_i - t_j|) of the impact
    costs; assembled directly from time differences (no cumulative rounding)."""
    t = grid.times
    return np.exp(-params.rho * np.abs(t[:, None] - t[None, :]))
