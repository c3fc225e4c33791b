"""Drift models for the unaffected price and their conditional processes.

The unaffected price decomposes as S0_t = s0 + M_t + A_t with M a square
integrable martingale (Brownian with volatility ``sigma_m`` here) and A an
adapted drift with A_0 = 0.  Each catalogue model below either has an
absolutely continuous A with derivative A' (the well-posed case) or carries a
genuine jump before the horizon (the exploitable case).

Two auxiliary processes drive every closed-form strategy and cost:

    Z_t = -E[ A_T + rho * int_0^T A ds | F_t ]          (a martingale)
    Y_t = Z_t + rho * int_0^t A ds + (1 + rho (T - t)) A_t

Z is known in closed form for every catalogue model: it is constant for
deterministic drifts, and for martingale A' it equals
-( (1 + rho u) A + (2 + rho u) u A' / 2 + rho int A ) with u = T - t.
Models outside these two families are rejected rather than approximated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import UnsupportedDriftError
from .market import ModelParams, TimeGrid

DEFAULT_SIGMA_M = 0.2

# component ids for independent RNG streams
_STREAM_MARTINGALE = 0
_STREAM_DRIFT = 1


@dataclass(frozen=True)
class ZeroDrift:
    """No drift: S0 is a martingale."""


@dataclass(frozen=True)
class LinearDrift:
    """Deterministic A_t = slope * t; the derivative is the constant slope
    (hence trivially a bounded martingale)."""

    slope: float


@dataclass(frozen=True)
class TabulatedDrift:
    """Deterministic A' given by linear interpolation of a table.

    ``derivative_semimartingale=False`` marks a table that samples a path too
    rough to be a semimartingale; the optimal-strategy constructor then
    reports that no optimum is attained.
    """

    knot_times: np.ndarray
    knot_values: np.ndarray
    derivative_semimartingale: bool = True

    def __post_init__(self) -> None:
        t = np.asarray(self.knot_times, dtype=float)
        v = np.asarray(self.knot_values, dtype=float)
        object.__setattr__(self, "knot_times", t)
        object.__setattr__(self, "knot_values", v)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("drift table needs matching 1-d knot arrays")
        if not np.all(np.diff(t) > 0):
            raise ValueError("drift table knots must be increasing")


@dataclass(frozen=True)
class CompensatedPoissonDrift:
    """A'_t = N_t - intensity * t for a Poisson process N: a martingale whose
    paths jump by +1 at event times."""

    intensity: float

    def __post_init__(self) -> None:
        if not self.intensity > 0:
            raise ValueError("Poisson intensity must be positive")


@dataclass(frozen=True)
class TruncatedBrownianDrift:
    """A' is a Brownian motion with volatility ``scale`` stopped (and clipped)
    the first time |A'| reaches ``cap``: a bounded continuous martingale.
    ``cap=None`` defaults to 5 * scale * sqrt(T) at sampling time."""

    scale: float
    cap: float | None = None

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ValueError("Brownian derivative scale must be positive")
        if self.cap is not None and not self.cap > 0:
            raise ValueError("cap must be positive when given")


@dataclass(frozen=True)
class JumpDrift:
    """Deterministic drift with one genuine discontinuity: A jumps by
    ``jump_size`` at ``jump_time``.  Not absolutely continuous when the jump
    happens before the horizon."""

    jump_time: float
    jump_size: float

    def __post_init__(self) -> None:
        if not self.jump_time > 0:
            raise ValueError("jump time must be positive")
        if self.jump_size == 0:
            raise ValueError("jump size must be nonzero")


@dataclass(frozen=True)
class PredatorDrift:
    """Drift perceived by a predator trading against a seller who unwinds
    ``seller_shares`` over [0, seller_horizon] with the block-rate-block
    schedule.  A equals the seller's volume impact recentred to A_0 = 0; it is
    flat, jumps by -seller_shares / (2 + rho * seller_horizon) at the seller's
    terminal block, then relaxes exponentially."""

    seller_shares: float
    seller_horizon: float

    def __post_init__(self) -> None:
        if not self.seller_horizon > 0:
            raise ValueError("seller horizon must be positive")
        if self.seller_shares == 0:
            raise ValueError("seller position must be nonzero")


DriftModel = Union[
    ZeroDrift,
    LinearDrift,
    TabulatedDrift,
    CompensatedPoissonDrift,
    TruncatedBrownianDrift,
    JumpDrift,
    PredatorDrift,
]


def model_id(model: DriftModel) -> str:
    """Compact identifier used in CSV reports."""
    if isinstance(model, ZeroDrift):
        return "zero"
    if isinstance(model, LinearDrift):
        return f"linear(slope={model.slope:g})"
    if isinstance(model, TabulatedDrift):
        return f"tabulated(n={model.knot_times.size})"
    if isinstance(model, CompensatedPoissonDrift):
        return f"compensated-poisson(intensity={model.intensity:g})"
    if isinstance(model, TruncatedBrownianDrift):
        return f"truncated-brownian(scale={model.scale:g})"
    if isinstance(model, JumpDrift):
        return f"jump(time={model.jump_time:g},size={model.jump_size:g})"
    if isinstance(model, PredatorDrift):
        return f"predator(shares={model.seller_shares:g},horizon={model.seller_horizon:g})"
    raise TypeError(f"unknown drift model {model!r}")


def is_deterministic(model: DriftModel) -> bool:
    return isinstance(model, (ZeroDrift, LinearDrift, TabulatedDrift, JumpDrift, PredatorDrift))


def has_martingale_derivative(model: DriftModel) -> bool:
    """Whether A' exists and is a martingale (constants count)."""
    return isinstance(model, (ZeroDrift, LinearDrift, CompensatedPoissonDrift, TruncatedBrownianDrift))


def derivative_is_semimartingale(model: DriftModel) -> bool:
    if isinstance(model, TabulatedDrift):
        return model.derivative_semimartingale
    return True


def is_absolutely_continuous(model: DriftModel, params: ModelParams) -> tuple[bool, bool | None]:
    """(absolutely continuous on [0, T), derivative square-integrable).

    The second flag is None when the first is False.  A jump landing exactly
    at the horizon does not break absolute continuity on [0, T).
    """
    if isinstance(model, JumpDrift):
        ac = model.jump_time >= params.T
        return (ac, True if ac else None)
    if isinstance(model, PredatorDrift):
        ac = model.seller_horizon >= params.T
        return (ac, True if ac else None)
    return (True, True)


def drift_jump(model: DriftModel, params: ModelParams) -> tuple[float, float]:
    """(time, size) of the drift discontinuity of a non-AC model."""
    if isinstance(model, JumpDrift):
        return model.jump_time, model.jump_size
    if isinstance(model, PredatorDrift):
        size = -model.seller_shares / (2.0 + params.rho * model.seller_horizon)
        return model.seller_horizon, size
    raise ValueError(f"{model_id(model)} has no drift discontinuity")


def rng_stream(seed: int, path_index: int, component: int) -> np.random.Generator:
    """Independent, reproducible generator for (seed, path, component)."""
    return np.random.default_rng([seed, path_index, component])


@dataclass(frozen=True)
class SeedInfo:
    seed: int
    path_index: int


@dataclass(frozen=True)
class SamplePath:
    """One joint realization of (M, A, A', int A, Z, Y) on a grid.

    ``a_prime`` is None for models whose drift has a genuine jump.  ``int_a``
    holds int_0^t A ds computed exactly for piecewise-polynomial drifts and by
    trapezoid otherwise.  ``jump_times`` lists drift jump epochs when the
    model has any.  ``s0`` is the sampled unaffected price s0 + M + A.
    """

    grid: TimeGrid
    m: np.ndarray
    a: np.ndarray
    a_prime: np.ndarray | None
    int_a: np.ndarray
    z: np.ndarray
    y: np.ndarray
    s0: np.ndarray
    seed: SeedInfo
    sigma_m: float
    jump_times: np.ndarray | None = None

    def __post_init__(self) -> None:
        if abs(self.y[-1]) >= 1e-9:
            raise AssertionError(
                f"terminal drift-pressure value should vanish, got {self.y[-1]:.3e}"
            )


def auxiliary_drift_processes(
    model: DriftModel,
    times: np.ndarray,
    a: np.ndarray,
    a_prime: np.ndarray | None,
    int_a: np.ndarray,
    params: ModelParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form (Z, Y) at the grid nodes.

    Deterministic drifts make Z the constant -(A_T + rho * int_0^T A ds);
    martingale derivatives use the pathwise formula quoted in the module
    docstring.  Anything else raises rather than silently approximating the
    conditional expectation.
    """
    u = params.T - times
    if has_martingale_derivative(model):
        if a_prime is None:
            raise UnsupportedDriftError("martingale route needs derivative samples")
        z = -((1.0 + params.rho * u) * a + 0.5 * (2.0 + params.rho * u) * u * a_prime
              + params.rho * int_a)
        y = -0.5 * (2.0 + params.rho * u) * u * a_prime
        return z, y
    if is_deterministic(model):
        z0 = -(a[-1] + params.rho * int_a[-1])
        z = np.full_like(a, z0)
        y = z + params.rho * int_a + (1.0 + params.rho * u) * a
        return z, y
    raise UnsupportedDriftError(
        f"no conditional-expectation formula for {model_id(model)}"
    )


def _cumtrapz(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    if times.size == 1:
        return np.zeros(1)
    return cumulative_trapezoid(values, times, initial=0.0)


def _poisson_drift(
    events: np.ndarray, times: np.ndarray, lam: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact (A', A, int A) for a compensated Poisson derivative with the
    given event times."""
    prefix1 = np.concatenate([[0.0], np.cumsum(events)])
    prefix2 = np.concatenate([[0.0], np.cumsum(events**2)])
    cnt = np.searchsorted(events, times, side="right")
    a_prime = cnt - lam * times
    a = (cnt * times - prefix1[cnt]) - 0.5 * lam * times**2
    int_a = 0.5 * (cnt * times**2 - 2.0 * times * prefix1[cnt] + prefix2[cnt]) - lam * times**3 / 6.0
    return a_prime, a, int_a


def _predator_impact(model: PredatorDrift, times: np.ndarray, params: ModelParams) -> np.ndarray:
    """Volume impact of the seller's schedule at the given times."""
    e0 = -model.seller_shares / (2.0 + params.rho * model.seller_horizon)
    after = times >= model.seller_horizon
    e = np.full_like(times, e0)
    e[after] = 2.0 * e0 * np.exp(-params.rho * (times[after] - model.seller_horizon))
    return e


def seller_impact(model: PredatorDrift, grid: TimeGrid, params: ModelParams) -> np.ndarray:
    """Expose the raw seller impact path for cross-checks against the core
    impact recursion."""
    return _predator_impact(model, grid.times, params)


def _drift_components(
    model: DriftModel,
    times: np.ndarray,
    params: ModelParams,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray | None, np.ndarray, np.ndarray | None]:
    """(a, a_prime, int_a, jump_times) at the given node times."""
    if isinstance(model, ZeroDrift):
        zeros = np.zeros_like(times)
        return zeros, zeros.copy(), zeros.copy(), None

    if isinstance(model, LinearDrift):
        b = model.slope
        return b * times, np.full_like(times, b), 0.5 * b * times**2, None

    if isinstance(model, TabulatedDrift):
        a_prime = np.interp(times, model.knot_times, model.knot_values)
        a = _cumtrapz(a_prime, times)
        int_a = _cumtrapz(a, times)
        return a, a_prime, int_a, None

    if isinstance(model, CompensatedPoissonDrift):
        horizon = times[-1]
        n_events = rng.poisson(model.intensity * horizon)
        events = np.sort(rng.uniform(0.0, horizon, size=n_events))
        a_prime, a, int_a = _poisson_drift(events, times, model.intensity)
        return a, a_prime, int_a, events

    if isinstance(model, TruncatedBrownianDrift):
        cap = model.cap if model.cap is not None else 5.0 * model.scale * np.sqrt(max(times[-1], 0.0))
        dt = np.diff(times)
        w = np.concatenate([[0.0], np.cumsum(rng.standard_normal(dt.size) * np.sqrt(dt))])
        a_prime = model.scale * w
        hit = np.abs(a_prime) >= cap
        if np.any(hit):
            k = int(np.argmax(hit))
            a_prime = a_prime.copy()
            a_prime[k:] = np.sign(a_prime[k]) * cap
        a = _cumtrapz(a_prime, times)
        int_a = _cumtrapz(a, times)
        return a, a_prime, int_a, None

    if isinstance(model, JumpDrift):
        a = np.where(times >= model.jump_time, model.jump_size, 0.0)
        int_a = model.jump_size * np.clip(times - model.jump_time, 0.0, None)
        jumps = np.array([model.jump_time]) if model.jump_time <= times[-1] else None
        return a, None, int_a, jumps

    if isinstance(model, PredatorDrift):
        e = _predator_impact(model, times, params)
        e0 = -model.seller_shares / (2.0 + params.rho * model.seller_horizon)
        a = e - e0
        after = times >= model.seller_horizon
        tau = times[after] - model.seller_horizon
        int_a = np.zeros_like(times)
        int_a[after] = 2.0 * e0 * (1.0 - np.exp(-params.rho * tau)) / params.rho - e0 * tau
        jumps = np.array([model.seller_horizon]) if model.seller_horizon <= times[-1] else None
        return a, None, int_a, jumps

    raise TypeError(f"unknown drift model {model!r}")


def sample_path(
    model: DriftModel,
    grid: TimeGrid,
    params: ModelParams,
    seed: int,
    path_index: int = 0,
    sigma_m: float = DEFAULT_SIGMA_M,
    augment_jumps: bool = False,
) -> SamplePath:
    """Draw one joint path of (M, A, A', Z, Y) on the grid.

    The martingale and drift components use independent streams derived from
    (seed, path_index), so identical arguments reproduce paths bitwise.  With
    ``augment_jumps`` the returned path lives on the grid refined with the
    model's jump epochs, so drift jumps sit exactly on nodes.
    """
    if sigma_m < 0:
        raise ValueError("sigma_m must be nonnegative")
    drift_rng = rng_stream(seed, path_index, _STREAM_DRIFT)

    times = grid.times
    if augment_jumps:
        if isinstance(model, CompensatedPoissonDrift):
            n_events = drift_rng.poisson(model.intensity * grid.horizon)
            events = np.sort(drift_rng.uniform(0.0, grid.horizon, size=n_events))
            work_grid = grid.refined_with(events[(events > 0) & (events < grid.horizon)])
            a_prime, a, int_a = _poisson_drift(events, work_grid.times, model.intensity)
            path_grid, jumps = work_grid, events
        elif isinstance(model, (JumpDrift, PredatorDrift)):
            tau = model.jump_time if isinstance(model, JumpDrift) else model.seller_horizon
            work_grid = grid.refined_with([tau]) if tau < grid.horizon else grid
            a, a_prime, int_a, jumps = _drift_components(model, work_grid.times, params, drift_rng)
            path_grid = work_grid
        else:
            a, a_prime, int_a, jumps = _drift_components(model, times, params, drift_rng)
            path_grid = grid
    else:
        a, a_prime, int_a, jumps = _drift_components(model, times, params, drift_rng)
        path_grid = grid

    mart_rng = rng_stream(seed, path_index, _STREAM_MARTINGALE)
    t = path_grid.times
    if sigma_m > 0 and t.size > 1:
        dw = mart_rng.standard_normal(t.size - 1) * np.sqrt(np.diff(t))
        m = sigma_m * np.concatenate([[0.0], np.cumsum(dw)])
    else:
        m = np.zeros_like(t)

    z, y = auxiliary_drift_processes(model, t, a, a_prime, int_a, params)
    s0 = params.s0 + m + a
    return SamplePath(
        grid=path_grid,
        m=m,
        a=a,
        a_prime=a_prime,
        int_a=int_a,
        z=z,
        y=y,
        s0=s0,
        seed=SeedInfo(seed=seed, path_index=path_index),
        sigma_m=sigma_m,
        jump_times=jumps,
    )
