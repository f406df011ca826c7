"""Shared domain types: SDE models, uniform grids, trajectories, error tables.

All state arrays are float64. Model callables are vectorized over leading
axes: ``drift`` maps ``(..., d) -> (..., d)``, ``diffusion`` maps
``(..., d) -> (..., d, m)``, and Lyapunov callables map ``(..., d)`` to
``(...)`` / ``(..., d)`` / ``(..., d, d)`` for value / gradient / Hessian.
Every type here is immutable after construction and safe to share across
workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [0, T] with N subintervals, nodes t_k = k*T/N."""

    T: float
    N: int

    def __post_init__(self):
        if not (self.T > 0):
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if self.N < 1:
            raise ValueError(f"subdivision count N must be >= 1, got {self.N}")

    @property
    def h(self) -> float:
        """Step size T/N."""
        return self.T / self.N


def grid_point(grid: GridSpec, k: int) -> float:
    """Return the grid node t_k = k*T/N.

    Raises IndexError unless 0 <= k <= N.
    """
    if not 0 <= k <= grid.N:
        raise IndexError(f"grid index {k} out of range [0, {grid.N}]")
    return k * grid.T / grid.N


def floor_index(grid: GridSpec, t: float) -> int:
    """Index of the left-open grid floor of t.

    Uses the half-open convention: the floor of t > 0 is the largest grid
    node strictly below t, so a t sitting exactly on node k (k >= 1) maps to
    index k-1, while the floor of 0 is 0.  Raises ValueError for t outside
    [0, T].
    """
    if not 0 <= t <= grid.T:
        raise ValueError(f"time {t} outside [0, {grid.T}]")
    if t == 0:
        return 0
    s = t * grid.N / grid.T
    k = math.floor(s)
    if s == k:
        k -= 1
    return min(max(k, 0), grid.N - 1)


@dataclass(frozen=True)
class LyapunovSpec:
    """Lyapunov data attached to a model: U, its derivatives, and constants.

    ``q0`` and ``q1`` may be ``math.inf``; when all of p, q0, q1 are finite
    they must satisfy the Hoelder triple 1/p + 1/q0 + 1/q1 = 1/r.  ``c`` is
    the growth/monotonicity constant (must satisfy c >= T**(1/32) for the
    horizon it is used with), ``rho`` the generator-inequality rate, ``p``
    the polynomial growth degree, ``r`` the error-norm exponent.
    """

    U: Callable[[np.ndarray], np.ndarray]
    grad_U: Callable[[np.ndarray], np.ndarray]
    hess_U: Callable[[np.ndarray], np.ndarray]
    U_bar: Callable[[np.ndarray], np.ndarray]
    rho: float
    c: float
    p: int
    q0: float
    q1: float
    r: float

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if self.p < 1:
            raise ValueError("p must be a positive integer")
        if self.r < 2:
            raise ValueError("r must be >= 2")
        if not (self.q0 > 0 and self.q1 > 0):
            raise ValueError("q0, q1 must lie in (0, inf]")

    def holder_defect(self) -> float:
        """1/p + 1/q0 + 1/q1 - 1/r, with 1/inf = 0."""
        inv = lambda q: 0.0 if math.isinf(q) else 1.0 / q
        return 1.0 / self.p + inv(self.q0) + inv(self.q1) - 1.0 / self.r


@dataclass(frozen=True)
class SdeModel:
    """An SDE dX = mu(X) dt + sigma(X) dW with optional closed-form solution.

    ``exact_solution(x0, t, W_t)`` returns the strong solution driven by the
    same Brownian path, when a closed form exists.  Callables must return
    finite values inside the model's admissible region.
    """

    name: str
    d: int
    m: int
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    exact_solution: Optional[Callable] = None
    lyapunov: Optional[LyapunovSpec] = None

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise ValueError("state and noise dimensions must be positive")


@dataclass(frozen=True)
class SchemeRun:
    """One simulated path on a uniform grid.

    ``states`` has shape (N+1, d).  ``tau_index`` is the first grid index
    whose state norm exceeds the stopping threshold (N if none), so the
    stopping time is tau_index*T/N.  ``frozen`` records whether the stopping
    indicator ever switched off; ``overflow`` flags paths that left the
    float64 range (possible for the untamed Euler scheme only).
    """

    grid: GridSpec
    states: np.ndarray
    tau_index: int
    frozen: bool
    overflow: bool = False

    def __post_init__(self):
        if self.states.shape != (self.grid.N + 1, len(self.states[0])):
            raise ValueError("states must have shape (N+1, d)")
        if not 0 <= self.tau_index <= self.grid.N:
            raise ValueError("tau_index out of range")


@dataclass(frozen=True)
class ErrorRow:
    """One resolution of a strong-error study."""

    N: int
    M: int
    sup_error: float
    std_error: float
    seed: int
    per_gridpoint_errors: Optional[np.ndarray] = None
    overflow_fraction: float = 0.0


@dataclass(frozen=True)
class ErrorTable:
    """Per-N strong-error estimates for one (scheme, model) pair.

    ``sup_error`` of each row is the max over grid indices k of the Monte
    Carlo estimate of the L^r norm of X_{t_k} - Y^N_{t_k} (sup of norms, not
    norm of sup).
    """

    scheme: str
    model: str
    r: float
    rows: tuple[ErrorRow, ...] = field(default_factory=tuple)
    T: float = 1.0


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of log(error) against log(step size)."""

    slope: float
    intercept: float
    residual: float
    points: tuple[tuple[float, float], ...]
