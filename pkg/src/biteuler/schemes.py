"""One-step maps and path drivers for the three Euler-type schemes.

Schemes:

- ``EULER_MARUYAMA``: the classical explicit scheme, no taming, no stopping.
  Divergence is an expected, measured outcome, so paths that leave the
  float64 range are frozen at their last finite state and flagged rather
  than raising.
- ``DRIFT_TAMED``: the drift term mu is replaced by mu / (1 + ||mu||*T/N);
  the noise term is untouched.
- ``STOPPED_BIT``: Brownian increments pass through the quartic-exponential
  taming map with per-step scale h = T/N, and the whole update is gated by
  the indicator ||Y_k|| <= exp(sqrt(|log(N/T)|)).  Once the norm exceeds the
  threshold the path is constant (frozen) for the rest of the horizon.

All steppers are pure and vectorized over a leading batch axis; the batched
driver ``run_paths`` and the single-path ``run_path`` perform bit-identical
arithmetic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .brownian import BrownianGrid, coarsen_increments
from .core import GridSpec, SchemeRun, SdeModel
from .taming import TamingParams, stopping_threshold, tame, tame_identity

__all__ = [
    "SchemeKind",
    "OVERFLOW_CAP",
    "step_em",
    "step_drift_tamed",
    "step_bit",
    "run_path",
    "run_paths",
    "BatchRuns",
    "interpolate",
]

# States whose components pass this magnitude count as diverged; estimators
# saturate flagged contributions at this value instead of propagating inf.
OVERFLOW_CAP = 1e300


class SchemeKind(enum.Enum):
    EULER_MARUYAMA = "em"
    DRIFT_TAMED = "drift-tamed"
    STOPPED_BIT = "bit"


def _noise_term(model: SdeModel, y: np.ndarray, dw: np.ndarray) -> np.ndarray:
    return np.einsum("...dm,...m->...d", model.diffusion(y), dw)


def _euler_update(model: SdeModel, y: np.ndarray, dt: float, dw: np.ndarray) -> np.ndarray:
    """mu(y)*dt + sigma(y) @ dw, the shared Euler-type update term."""
    return model.drift(y) * dt + _noise_term(model, y, dw)


def _norm(y: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("...d,...d->...", y, y))


def step_em(model: SdeModel, grid: GridSpec, y: np.ndarray, dW: np.ndarray) -> np.ndarray:
    """Classical Euler-Maruyama step: y + mu(y)*h + sigma(y)@dW."""
    with np.errstate(all="ignore"):
        return y + _euler_update(model, y, grid.h, dW)


def step_drift_tamed(model: SdeModel, grid: GridSpec, y: np.ndarray, dW: np.ndarray) -> np.ndarray:
    """Drift-tamed step: the drift is scaled by 1/(1 + ||mu(y)||*h).

    The tamed drift contribution per step has norm < 1 by construction.
    """
    h = grid.h
    with np.errstate(all="ignore"):
        mu = model.drift(y)
        tamed = mu / (1.0 + _norm(mu)[..., None] * h)
        return y + (tamed * h + _noise_term(model, y, dW))


def step_bit(model: SdeModel, grid: GridSpec, y: np.ndarray, dW: np.ndarray,
             threshold: Optional[float] = None) -> np.ndarray:
    """Stopped Brownian-increment tamed step.

    If ||y|| exceeds the stopping threshold the state is returned unchanged;
    otherwise the Euler update is applied with the tamed increment.  Raises
    on non-finite drift/diffusion values at live states (model misuse
    outside its admissible region).
    """
    if threshold is None:
        threshold = stopping_threshold(grid.N, grid.T)
    params = TamingParams(h=grid.h, m=model.m)
    y = np.asarray(y, dtype=float)
    upd = _euler_update(model, y, grid.h, tame(params, dW))
    alive = _norm(y) <= threshold
    if not np.isfinite(upd[alive]).all():
        raise FloatingPointError(
            "non-finite drift/diffusion inside the stopping region")
    return np.where(alive[..., None], y + upd, y)


@dataclass(frozen=True)
class BatchRuns:
    """Vectorized ensemble of scheme runs sharing one grid.

    ``states`` has shape (B, N+1, d); ``tau_index`` (B,) holds the first
    grid index whose state norm exceeds the stopping threshold (N if none);
    ``frozen`` marks paths whose stopping indicator switched off;
    ``overflow`` marks paths that left the float64 range.
    """

    grid: GridSpec
    states: np.ndarray
    tau_index: np.ndarray
    frozen: np.ndarray
    overflow: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]

    def path(self, j: int) -> SchemeRun:
        return SchemeRun(grid=self.grid, states=self.states[j],
                         tau_index=int(self.tau_index[j]),
                         frozen=bool(self.frozen[j]),
                         overflow=bool(self.overflow[j]))


def run_paths(kind: SchemeKind, model: SdeModel, grid: GridSpec, x0,
              dW: np.ndarray, *, threshold: Optional[float] = None,
              taming: Optional[Callable] = None) -> BatchRuns:
    """Drive a batch of paths through the scheme recursion.

    ``dW`` has shape (B, N, m) and holds the per-step Brownian increments on
    the scheme's own grid.  ``threshold`` and ``taming`` override the
    stopped scheme's defaults (used e.g. to realize the classical scheme
    through the tamed code path via the identity map and an infinite
    threshold).

    tau_index is recorded against the stopping threshold for every scheme;
    only STOPPED_BIT freezes at it.  Euler-Maruyama and drift-tamed paths
    that produce non-finite states or pass magnitude 1e300 are frozen at
    their last finite state and flagged in ``overflow``.
    """
    B, n_steps, m = dW.shape
    if n_steps != grid.N or m != model.m:
        raise ValueError("increment array shape does not match grid/model")
    T, N = grid.T, grid.N
    h = grid.h
    if threshold is None:
        threshold = stopping_threshold(N, T)
    y = np.ascontiguousarray(np.broadcast_to(np.asarray(x0, dtype=float), (B, model.d)))
    states = np.empty((B, N + 1, model.d))
    states[:, 0] = y
    tau = np.full(B, N, dtype=np.int64)
    overflow = np.zeros(B, dtype=bool)

    if kind is SchemeKind.STOPPED_BIT:
        pi = taming if taming is not None else tame
        params = TamingParams(h=h, m=model.m)
        for k in range(N):
            nrm = _norm(y)
            exceeded = nrm > threshold
            tau = np.where((tau == N) & exceeded, k, tau)
            upd = _euler_update(model, y, h, pi(params, dW[:, k]))
            alive = ~exceeded
            if not np.isfinite(upd[alive]).all():
                raise FloatingPointError(
                    "non-finite drift/diffusion inside the stopping region")
            y = np.where(exceeded[:, None], y, y + upd)
            states[:, k + 1] = y
        frozen = tau < N
        return BatchRuns(grid=grid, states=states, tau_index=tau,
                         frozen=frozen, overflow=overflow)

    drift_tamed = kind is SchemeKind.DRIFT_TAMED
    with np.errstate(all="ignore"):
        for k in range(N):
            nrm = _norm(y)
            tau = np.where((tau == N) & (nrm > threshold), k, tau)
            if drift_tamed:
                mu = model.drift(y)
                tamed = mu / (1.0 + _norm(mu)[..., None] * h)
                upd = tamed * h + _noise_term(model, y, dW[:, k])
            else:
                upd = _euler_update(model, y, h, dW[:, k])
            cand = y + upd
            finite = np.isfinite(cand).all(axis=-1)
            inrange = finite & (np.abs(cand).max(axis=-1) <= OVERFLOW_CAP)
            blown = ~inrange & ~overflow
            keep = overflow | blown
            y = np.where(keep[:, None], y, cand)
            overflow = overflow | blown
            states[:, k + 1] = y
    return BatchRuns(grid=grid, states=states, tau_index=tau,
                     frozen=np.zeros(B, dtype=bool), overflow=overflow)


def run_path(kind: SchemeKind, model: SdeModel, grid: GridSpec, x0,
             path: BrownianGrid) -> SchemeRun:
    """Run one path of the scheme, driven by a coarsening of ``path``.

    grid.N must divide path.N_fine so the scheme's increments are exact
    block sums of the fine ones (reference and approximation share one
    Brownian path).
    """
    if path.N_fine % grid.N != 0:
        raise ValueError(f"grid N={grid.N} does not divide N_fine={path.N_fine}")
    if path.m != model.m:
        raise ValueError("path and model noise dimensions differ")
    dw = coarsen_increments(path.increments[None, :, :], grid.N)
    runs = run_paths(kind, model, grid, x0, dw)
    return runs.path(0)


def interpolate(kind: SchemeKind, model: SdeModel, grid: GridSpec,
                run: SchemeRun, k: int, s: float, bridge: np.ndarray) -> np.ndarray:
    """Continuous-time interpolant value Y_{t_k + s}.

    ``bridge`` must be W_{t_k+s} - W_{t_k}.  For the stopped tamed scheme
    the update is gated by the same indicator as the stepper, so frozen
    steps interpolate to the frozen state; for the other schemes the
    increment enters untamed (and the drift-tamed scheme keeps its tamed
    drift).  At s = T/N with the full step increment the value equals
    states[k+1] exactly.
    """
    h = grid.h
    if not 0 <= s <= h:
        raise ValueError(f"offset {s} outside [0, {h}]")
    if not 0 <= k < grid.N:
        raise IndexError(f"step index {k} out of range")
    y = run.states[k]
    if kind is SchemeKind.STOPPED_BIT:
        if _norm(y) > stopping_threshold(grid.N, grid.T):
            return y.copy()
        params = TamingParams(h=h, m=model.m)
        return y + _euler_update(model, y, s, tame(params, bridge))
    if kind is SchemeKind.DRIFT_TAMED:
        mu = model.drift(y)
        tamed = mu / (1.0 + _norm(mu)[..., None] * h)
        return y + (tamed * s + _noise_term(model, y, bridge))
    return y + _euler_update(model, y, s, bridge)
