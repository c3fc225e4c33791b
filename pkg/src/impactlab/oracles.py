"""Independent ground truth for the strategy constructions.

Four routes that never touch the closed-form strategies:

* ``expected_cost_closed_form`` evaluates the optimal expected cost
  -x S0 + x^2/(2 + rho T) + x Y_0/(2 + rho T)
  - (rho/4) E int (Y_s/(2 + rho (T-s)) - A'_s/rho)^2 ds
  by exact quadrature where second moments are known, with a Monte Carlo
  fallback (and reported standard error) otherwise.  Non-absolutely
  continuous drifts return -inf (the unbounded branch).
* ``expected_cost_decomposition`` evaluates, per path, the verification
  identity splitting E[C(X)] into closed terms, a drift coupling, and a
  nonnegative tracking penalty; its Monte Carlo mean must match the cost.
* ``qp_oracle`` minimizes the discrete cost for deterministic drifts as an
  equality-constrained quadratic program through its KKT system.
* ``dp_oracle`` runs exact backward induction over a finite-state chain of
  drift increments: the stage value stays quadratic in (position, impact),
  so each step is a scalar quadratic minimization done in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad
from scipy.linalg import cho_factor, cho_solve

from .drift import (
    CompensatedPoissonDrift,
    DriftModel,
    LinearDrift,
    SamplePath,
    TabulatedDrift,
    TruncatedBrownianDrift,
    ZeroDrift,
    is_absolutely_continuous,
    is_deterministic,
    model_id,
    sample_path,
)
from .errors import UnsupportedDriftError
from .market import (
    ModelParams,
    Strategy,
    TimeGrid,
    cost_running,
    decay_matrix,
    horizon_weight,
    impact_path,
    trade_sizes,
)
from .strategies import DriftSignal


@dataclass(frozen=True)
class CostValue:
    """A reference cost with provenance: ``standard_error`` is None for exact
    quadrature and the Monte Carlo error otherwise."""

    value: float
    standard_error: float | None
    method: str


def _integral_term_deterministic(
    y_of_s: Callable[[float], float], a_prime_of_s: Callable[[float], float], params: ModelParams
) -> float:
    rho, T = params.rho, params.T

    def integrand(s: float) -> float:
        return (y_of_s(s) / (2.0 + rho * (T - s)) - a_prime_of_s(s) / rho) ** 2

    val, _ = quad(integrand, 0.0, T, limit=200)
    return 0.25 * rho * val


def expected_cost_closed_form(
    model: DriftModel,
    params: ModelParams,
    n_mc_paths: int = 4000,
    n_mc_steps: int = 512,
    seed: int = 20240,
) -> CostValue:
    """Optimal expected liquidation cost for an absolutely continuous drift.

    Deterministic and compensated-Poisson drifts use exact quadrature of the
    known integrand; the truncated-Brownian derivative falls back to Monte
    Carlo with a reported standard error.  Drifts with a jump before the
    horizon return -inf: expected costs are unbounded below.
    """
    rho, T, x = params.rho, params.T, params.x
    q = 2.0 + rho * T
    base = -x * params.s0 + x * x / q

    ac, _ = is_absolutely_continuous(model, params)
    if not ac:
        return CostValue(float("-inf"), None, "unbounded")

    if isinstance(model, ZeroDrift):
        return CostValue(base, None, "exact")

    if isinstance(model, LinearDrift):
        b = model.slope
        y0 = -0.5 * q * T * b
        integral = 0.25 * rho * b * b * quad(
            lambda s: ((T - s) / 2.0 + 1.0 / rho) ** 2, 0.0, T
        )[0]
        return CostValue(base + x * y0 / q - integral, None, "quadrature")

    if isinstance(model, CompensatedPoissonDrift):
        lam = model.intensity
        # E[(A'_s)^2] = lam s and Y_s = -(2 + rho (T-s)) (T-s) A'_s / 2
        integral = 0.25 * rho * lam * quad(
            lambda s: s * ((T - s) / 2.0 + 1.0 / rho) ** 2, 0.0, T
        )[0]
        return CostValue(base - integral, None, "quadrature")

    if isinstance(model, TabulatedDrift):
        grid = TimeGrid.uniform(4096, T)
        path = sample_path(model, grid, params, seed=0, sigma_m=0.0)
        integrand = (
            path.y / (2.0 + rho * (T - grid.times)) - path.a_prime / rho
        ) ** 2
        integral = 0.25 * rho * float(np.trapezoid(integrand, grid.times))
        return CostValue(base + x * path.y[0] / q - integral, None, "quadrature")

    if isinstance(model, TruncatedBrownianDrift):
        grid = TimeGrid.uniform(n_mc_steps, T)
        u = T - grid.times
        weight = (u / 2.0 + 1.0 / rho) ** 2
        samples = np.empty(n_mc_paths)
        for i in range(n_mc_paths):
            path = sample_path(model, grid, params, seed=seed, path_index=i, sigma_m=0.0)
            samples[i] = np.trapezoid(path.a_prime**2 * weight, grid.times)
        mean = 0.25 * rho * float(np.mean(samples))
        se = 0.25 * rho * float(np.std(samples, ddof=1) / np.sqrt(n_mc_paths))
        return CostValue(base - mean, se, "monte-carlo")

    raise UnsupportedDriftError(f"no cost formula for {model_id(model)}")


def _time_integral(f: np.ndarray, t: np.ndarray) -> float:
    """Integral over [0, T) of a node-sampled integrand: trapezoid up to the
    last interior node, left-point rectangle on the final cell.  Avoids
    weighting the post-liquidation terminal state, which is not the left
    limit the integrand should see at T."""
    if t.size < 2:
        return 0.0
    core = float(np.trapezoid(f[:-1], t[:-1])) if t.size > 2 else 0.0
    return core + float(f[-2]) * float(t[-1] - t[-2])


def expected_cost_decomposition(
    strategy: Strategy,
    signal: DriftSignal,
    path: SamplePath,
    params: ModelParams,
) -> tuple[float, float]:
    """Per-path value of the verification identity right-hand side and its
    tracking penalty.

    rhs = -x S0 + phi(0) x^2 + phi(0) x Z_0
          - rho int (phi Y / 2 - alpha / (2 rho))^2 dt
          + int X alpha dt - int X_{t-} dA
          + penalty,
    penalty = rho int (phi X + (1 - phi) E + phi Y / 2 - alpha / (2 rho))^2 dt.

    Averaged over paths with the matching costs, rhs reproduces E[C(X)].
    """
    t = strategy.grid.times
    if signal.grid.times.shape != t.shape or path.grid.times.shape != t.shape:
        raise ValueError("strategy, signal, and path must share one grid")
    rho, x = params.rho, params.x
    phi = horizon_weight(t, params)
    xv = strategy.values
    e = impact_path(strategy, params).e

    closed = -x * params.s0 + phi[0] * x * x + phi[0] * x * signal.z[0]
    quad_term = rho * _time_integral(
        (0.5 * phi * signal.y - signal.alpha / (2.0 * rho)) ** 2, t
    )
    coupling = _time_integral(xv * signal.alpha, t)
    # left-point sum of int_(0,T] X_{t-} dA (A has no initial jump)
    x_left = np.concatenate([[x], xv[:-1]])
    coupling -= float(np.dot(x_left[1:], np.diff(path.a)))

    relation = phi * xv + (1.0 - phi) * e + 0.5 * phi * signal.y - signal.alpha / (2.0 * rho)
    penalty = rho * _time_integral(relation**2, t)
    rhs = float(closed - quad_term + coupling + penalty)
    return rhs, penalty


@dataclass(frozen=True)
class QPResult:
    trades: np.ndarray
    value: float


def qp_oracle(a_values: np.ndarray, grid: TimeGrid, params: ModelParams) -> QPResult:
    """Minimize the expected discrete cost over trade vectors on the grid for
    a deterministic drift (the martingale component is mean-free):

        min_xi  sum A_k xi_k + xi' G xi / 2   s.t.  sum xi = -x,

    with G_ij = exp(-rho |t_i - t_j|), solved through the KKT system with a
    Cholesky factorization of G.  The returned value includes the -x S0 cash
    term so it is comparable with the cost functionals.
    """
    a_values = np.asarray(a_values, dtype=float)
    t = grid.times
    if a_values.shape != t.shape:
        raise ValueError("drift samples must align with the grid")
    g = decay_matrix(grid, params)
    factor = cho_factor(g)
    ones = np.ones_like(t)
    ga = cho_solve(factor, a_values)
    g1 = cho_solve(factor, ones)
    denom = float(ones @ g1)
    if not denom > 0:
        raise AssertionError("KKT system singular: duplicate grid nodes?")
    nu = (params.x - float(ones @ ga)) / denom
    xi = -(ga + nu * g1)
    value = float(a_values @ xi + 0.5 * xi @ g @ xi) - params.s0 * params.x
    return QPResult(trades=xi, value=value)


@dataclass(frozen=True)
class DriftChain:
    """Finite-state chain of drift increments on a grid.

    Per step k (cells k = 0 .. N-1) every state has the same branch count m:
    ``branch_next[k]`` maps state -> next-state index, ``branch_prob[k]`` the
    transition probabilities, and ``branch_da[k]`` the drift increment over
    cell k revealed with the transition.  ``n_states[k]`` states exist at
    node k, with a single root state at node 0.
    """

    grid: TimeGrid
    n_states: list[int]
    branch_next: list[np.ndarray]
    branch_prob: list[np.ndarray]
    branch_da: list[np.ndarray]

    @classmethod
    def deterministic(cls, delta_a: np.ndarray, grid: TimeGrid) -> "DriftChain":
        """Single-state chain with the given per-cell drift increments."""
        delta_a = np.asarray(delta_a, dtype=float)
        n = grid.n_steps
        if delta_a.shape != (n,):
            raise ValueError("need one drift increment per grid cell")
        return cls(
            grid=grid,
            n_states=[1] * (n + 1),
            branch_next=[np.zeros((1, 1), dtype=int) for _ in range(n)],
            branch_prob=[np.ones((1, 1)) for _ in range(n)],
            branch_da=[np.full((1, 1), delta_a[k]) for k in range(n)],
        )

    @classmethod
    def from_deterministic_drift(cls, a_values: np.ndarray, grid: TimeGrid) -> "DriftChain":
        return cls.deterministic(np.diff(np.asarray(a_values, dtype=float)), grid)

    @classmethod
    def binomial_derivative(cls, variance_rate: float, grid: TimeGrid) -> "DriftChain":
        """Recombining random walk A' with Var(A'_t) = variance_rate * t.

        State j at node k carries A' = (2 j - k) h with h = sqrt(rate * dt);
        drift increments use the trapezoid of A' across the cell, keeping the
        chain a martingale in A'.
        """
        t = grid.times
        n = grid.n_steps
        dts = np.diff(t)
        if n == 0:
            raise ValueError("binomial chain needs at least one cell")
        if not np.allclose(dts, dts[0]):
            raise ValueError("binomial chain needs a uniform grid")
        dt = float(dts[0])
        h = np.sqrt(variance_rate * dt)
        nxt, prob, da = [], [], []
        for k in range(n):
            j = np.arange(k + 1)
            ap_here = (2 * j - k) * h
            ap_dn = (2 * j - (k + 1)) * h
            ap_up = (2 * (j + 1) - (k + 1)) * h
            nxt.append(np.stack([j, j + 1], axis=1))
            prob.append(np.full((k + 1, 2), 0.5))
            da.append(0.5 * dt * np.stack([ap_here + ap_dn, ap_here + ap_up], axis=1))
        return cls(grid, [k + 1 for k in range(n + 1)], nxt, prob, da)

    @classmethod
    def poisson_two_point(cls, intensity: float, grid: TimeGrid) -> "DriftChain":
        """Two-point approximation of compensated-Poisson increments: one
        jump per cell with probability intensity * dt.  State j at node k
        counts jumps so far, so A' = j - intensity * t_k."""
        t = grid.times
        n = grid.n_steps
        dts = np.diff(t)
        if np.any(intensity * dts >= 1.0):
            raise ValueError("intensity * dt must stay below 1 for the two-point chain")
        nxt, prob, da = [], [], []
        for k in range(n):
            dt = float(dts[k])
            p = intensity * dt
            j = np.arange(k + 1, dtype=float)
            ap_here = j - intensity * t[k]
            ap_stay = j - intensity * t[k + 1]
            ap_jump = (j + 1) - intensity * t[k + 1]
            idx = np.arange(k + 1)
            nxt.append(np.stack([idx, idx + 1], axis=1))
            prob.append(np.tile([1.0 - p, p], (k + 1, 1)))
            da.append(0.5 * dt * np.stack([ap_here + ap_stay, ap_here + ap_jump], axis=1))
        return cls(grid, [k + 1 for k in range(n + 1)], nxt, prob, da)


@dataclass(frozen=True)
class QuadraticPolicy:
    """Backward-induction output: per (node, state) coefficients of
    V(p, e) = a p^2 + b p e + c e^2 + d p + f e + g for the remaining cost
    before trading, plus the linear feedback for the optimal trade."""

    grid: TimeGrid
    coeffs: list[np.ndarray]  # per node: (n_states, 6)
    feedback: list[np.ndarray]  # per node k < N: (n_states, 3) -> xi = u p + v e + w

    def trade(self, k: int, state: int, position: float, impact_pre: float) -> float:
        u, v, w = self.feedback[k][state]
        return float(u * position + v * impact_pre + w)


@dataclass(frozen=True)
class DPResult:
    value: float
    policy: QuadraticPolicy


def dp_oracle(chain: DriftChain, params: ModelParams) -> DPResult:
    """Exact optimal expected discrete cost over the chain.

    State between nodes is (position before trade, impact left limit); the
    stage cost of a trade xi at node k is (S0 + e) xi + xi^2 / 2 with the
    price drift folded in through - sum_k dA_k p_k (summation by parts), so
    the value function stays quadratic and every minimization is scalar.
    The terminal node forces liquidation.
    """
    grid = chain.grid
    t = grid.times
    n = grid.n_steps
    rho = params.rho
    # terminal: forced block xi = -p costs -e p + p^2 / 2
    coeffs: list[np.ndarray] = [None] * (n + 1)  # type: ignore[list-item]
    feedback: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    term = np.zeros((chain.n_states[n], 6))
    term[:, 0] = 0.5
    term[:, 1] = -1.0
    coeffs[n] = term

    for k in range(n - 1, -1, -1):
        gamma = float(np.exp(-rho * (t[k + 1] - t[k])))
        nxt = chain.branch_next[k]
        prob = chain.branch_prob[k]
        da = chain.branch_da[k]
        nk = chain.n_states[k]
        c_next = coeffs[k + 1]
        # probability-weighted next coefficients and drift increment
        abar = np.einsum("sm,sm->s", prob, c_next[nxt, 0])
        bbar = np.einsum("sm,sm->s", prob, c_next[nxt, 1])
        cbar = np.einsum("sm,sm->s", prob, c_next[nxt, 2])
        dbar = np.einsum("sm,sm->s", prob, c_next[nxt, 3])
        fbar = np.einsum("sm,sm->s", prob, c_next[nxt, 4])
        gbar = np.einsum("sm,sm->s", prob, c_next[nxt, 5])
        mu = np.einsum("sm,sm->s", prob, da)

        q2 = 0.5 + abar + bbar * gamma + cbar * gamma**2
        if np.any(q2 <= 0):
            raise AssertionError("stage quadratic lost positive definiteness")
        u = 2.0 * abar + bbar * gamma
        v = 1.0 + bbar * gamma + 2.0 * cbar * gamma**2
        w = (dbar - mu) + fbar * gamma

        here = np.empty((nk, 6))
        here[:, 0] = abar - u**2 / (4.0 * q2)
        here[:, 1] = bbar * gamma - u * v / (2.0 * q2)
        here[:, 2] = cbar * gamma**2 - v**2 / (4.0 * q2)
        here[:, 3] = (dbar - mu) - u * w / (2.0 * q2)
        here[:, 4] = fbar * gamma - v * w / (2.0 * q2)
        here[:, 5] = gbar - w**2 / (4.0 * q2)
        coeffs[k] = here
        feedback[k] = np.stack([-u / (2.0 * q2), -v / (2.0 * q2), -w / (2.0 * q2)], axis=1)

    x = params.x
    root = coeffs[0][0]
    value = float(root[0] * x * x + root[3] * x + root[5]) - params.s0 * x
    return DPResult(value=value, policy=QuadraticPolicy(grid, coeffs, feedback))


def remaining_cost_value(
    t: float, x_shares: float, e_impact: float, y_value: float, params: ModelParams
) -> float:
    """Quadratic value of optimally liquidating ``x_shares`` from time t on,
    given current impact and drift pressure:

        -e^2 / 2 + phi(t) (x - e)^2 + phi(t) (x - e) y.
    """
    phi = horizon_weight(t, params)
    gap = x_shares - e_impact
    return -0.5 * e_impact**2 + phi * gap * gap + phi * gap * y_value


def verification_values(
    strategy: Strategy, signal: DriftSignal, path: SamplePath, params: ModelParams
) -> np.ndarray:
    """Per-node samples of running cost + remaining-cost value + the
    compensating time integral.  Along an optimal strategy its mean is flat
    in time; any tracking error tilts it upward."""
    t = strategy.grid.times
    running = cost_running(strategy, path.s0, params)
    e = impact_path(strategy, params).e
    values = np.array(
        [
            remaining_cost_value(tk, xk, ek, yk, params)
            for tk, xk, ek, yk in zip(t, strategy.values, e, signal.y)
        ]
    )
    compensator = params.rho * cumulative_trapezoid(
        (0.5 * horizon_weight(t, params) * signal.y - signal.alpha / (2.0 * params.rho)) ** 2,
        t,
        initial=0.0,
    )
    return running + values + compensator
