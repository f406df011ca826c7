"""Experiment engine: strong-rate measurement, divergence contrast, moment
flatness sweeps.

All experiments are deterministic functions of their config (seed
included): per-path randomness is keyed by (seed, path_index), paths are
processed in fixed batches, and reductions run in fixed batch order, so the
thread count never changes any numeric output.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .brownian import coarsen_increments, generate_block
from .core import ErrorRow, ErrorTable, GridSpec, LyapunovSpec, RateFit, SdeModel
from .diagnostics import (AnalysisConstants, MomentEstimate, N0Report,
                          exp_moment_estimate, fit_growth_constant,
                          moment_bound, n0_for)
from .models import catalog
from .schemes import OVERFLOW_CAP, SchemeKind, run_paths

__all__ = [
    "ConvergenceConfig",
    "strong_error",
    "fit_rate",
    "divergence_comparison",
    "DivergenceReport",
    "DivergenceRow",
    "moment_sweep",
    "MomentSweepReport",
    "MomentRow",
]

_N_STAT_BATCHES = 10  # batch-means stderr uses this many fixed path blocks
_CHUNK = 1000         # paths simulated per vectorized chunk


def _resolve_threads(threads: int) -> int:
    return os.cpu_count() or 1 if threads == 0 else max(threads, 1)


def _batch_map(fn: Callable[[int], object], n_batches: int, threads: int) -> list:
    threads = _resolve_threads(threads)
    if threads <= 1:
        return [fn(b) for b in range(n_batches)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_batches)))


def _batch_bounds(M: int, n_batches: int) -> list[tuple[int, int]]:
    edges = [round(b * M / n_batches) for b in range(n_batches + 1)]
    return [(edges[b], edges[b + 1]) for b in range(n_batches)]


@dataclass(frozen=True)
class ConvergenceConfig:
    """Strong-error study configuration.

    ``reference`` is "exact" (closed form, coupled through the same
    Brownian path) or "fine" (the ``ref_scheme`` run on the N_ref grid);
    for a fine reference N_ref must be a multiple of every N and at least
    8 times the largest.  ``Ns`` should be powers of two when a rate fit is
    intended.  ``x0`` of None uses the catalog default.
    """

    model: str
    scheme: SchemeKind
    Ns: tuple[int, ...]
    M: int
    seed: int
    N_ref: int = 0
    r: float = 2.0
    reference: str = "exact"
    ref_scheme: Optional[SchemeKind] = None
    x0: Optional[tuple[float, ...]] = None
    T: float = 1.0
    threads: int = 1

    def __post_init__(self):
        if not self.Ns:
            raise ValueError("Ns must be nonempty")
        if any(n < 1 for n in self.Ns):
            raise ValueError("all Ns must be >= 1")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.r <= 0:
            raise ValueError("r must be positive")
        if self.reference not in ("exact", "fine"):
            raise ValueError("reference must be 'exact' or 'fine'")
        if self.reference == "fine":
            # the reference resolution itself may appear in Ns (its error is
            # exactly zero); every other N needs the 8x separation
            below = [n for n in self.Ns if n != self.N_ref]
            if below and self.N_ref < 8 * max(below):
                raise ValueError("N_ref must be >= 8 * max(Ns)")
            if any(self.N_ref % n for n in self.Ns):
                raise ValueError("N_ref must be a multiple of every N")


def strong_error(config: ConvergenceConfig) -> ErrorTable:
    """Coupled strong-error table: per N, the max over grid indices of the
    Monte Carlo L^r distance between the scheme and its reference.

    Reference and approximation consume coarsenings of one fine Brownian
    path per path index, so their difference measures discretization error
    only.  stderr is by batch means over 10 fixed path blocks.  Paths
    flagged as overflowed contribute their capped distance and are counted
    in overflow_fraction (never silently dropped).
    """
    entry = catalog()[config.model]
    model = entry.model
    x0 = np.asarray(config.x0 if config.x0 is not None else entry.default_x0,
                    dtype=float)
    if config.reference == "exact" and model.exact_solution is None:
        raise ValueError(f"model {config.model!r} has no closed-form solution")
    T = config.T
    Ns = tuple(config.Ns)
    n_fine = config.N_ref if config.reference == "fine" else max(Ns)
    ref_kind = config.ref_scheme or config.scheme
    bounds = _batch_bounds(config.M, _N_STAT_BATCHES)
    r = config.r

    def one_batch(b: int):
        lo, hi = bounds[b]
        sums = {N: np.zeros(N + 1) for N in Ns}
        over = {N: 0 for N in Ns}
        count = 0
        for c_lo in range(lo, hi, _CHUNK):
            c_hi = min(c_lo + _CHUNK, hi)
            B = c_hi - c_lo
            count += B
            fine = generate_block(T, n_fine, model.m, config.seed, c_lo, B)
            if config.reference == "exact":
                w_nodes = np.concatenate(
                    [np.zeros((B, 1, model.m)), np.cumsum(fine, axis=1)], axis=1)
                t_nodes = np.arange(n_fine + 1) * (T / n_fine)
                ref_states = model.exact_solution(x0, t_nodes, w_nodes)
            else:
                ref_states = run_paths(ref_kind, model, GridSpec(T, n_fine),
                                       x0, fine).states
            for N in Ns:
                dw = coarsen_increments(fine, N)
                runs = run_paths(config.scheme, model, GridSpec(T, N), x0, dw)
                stride = n_fine // N
                diff = runs.states - ref_states[:, ::stride]
                with np.errstate(over="ignore", invalid="ignore"):
                    dist_r = np.einsum("bkd,bkd->bk", diff, diff) ** (r / 2.0)
                dist_r = np.minimum(np.nan_to_num(dist_r, nan=OVERFLOW_CAP,
                                                  posinf=OVERFLOW_CAP), OVERFLOW_CAP)
                sums[N] += dist_r.sum(axis=0)
                over[N] += int(runs.overflow.sum())
        return sums, over, count

    results = _batch_map(one_batch, _N_STAT_BATCHES, config.threads)

    rows = []
    for N in Ns:
        pooled = np.zeros(N + 1)
        batch_sups = []
        n_over = 0
        for sums, over, count in results:
            pooled += sums[N]
            batch_sups.append(float(np.max((sums[N] / count) ** (1.0 / r))))
            n_over += over[N]
        per_k = (pooled / config.M) ** (1.0 / r)
        sup = float(np.max(per_k))
        std = float(np.std(batch_sups, ddof=1) / math.sqrt(len(batch_sups)))
        rows.append(ErrorRow(N=N, M=config.M, sup_error=sup, std_error=std,
                             seed=config.seed, per_gridpoint_errors=per_k,
                             overflow_fraction=n_over / config.M))
    return ErrorTable(scheme=config.scheme.value, model=config.model,
                      r=r, rows=tuple(rows), T=T)


def fit_rate(table: ErrorTable) -> RateFit:
    """Least-squares slope of log(error) against log(step size T/N).

    Rows with zero error are excluded with a warning; at least three usable
    rows are required.  A slope near +0.5 indicates strong rate one-half.
    """
    pts = []
    for row in table.rows:
        if row.sup_error > 0 and math.isfinite(row.sup_error):
            pts.append((math.log(table.T / row.N), math.log(row.sup_error)))
        else:
            warnings.warn(f"excluding N={row.N} with non-positive or "
                          f"non-finite error {row.sup_error}")
    if len(pts) < 3:
        raise ValueError("rate fit needs at least 3 rows with positive errors")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sum((y - (slope * x + intercept)) ** 2))
    return RateFit(slope=float(slope), intercept=float(intercept),
                   residual=resid, points=tuple(pts))


@dataclass(frozen=True)
class DivergenceRow:
    scheme: str
    N: int
    overflow_fraction: float
    explode_fraction: float  # overflowed or pathwise max magnitude > 1e10
    second_moment_capped: float


@dataclass(frozen=True)
class DivergenceReport:
    model: str
    M: int
    seed: int
    x0: tuple[float, ...]
    rows: tuple[DivergenceRow, ...]

    def row(self, scheme: SchemeKind, N: int) -> DivergenceRow:
        for r in self.rows:
            if r.scheme == scheme.value and r.N == N:
                return r
        raise KeyError((scheme, N))


_EXPLODE_MAGNITUDE = 1e10


def divergence_comparison(model: SdeModel, Ns: tuple[int, ...], M: int,
                          x0, seed: int, T: float = 1.0,
                          threads: int = 1) -> DivergenceReport:
    """Contrast the untamed Euler scheme against the stopped tamed one on a
    superlinear-drift model.

    Per N and scheme: the fraction of paths flagged as overflowed, the
    fraction exploded (flagged or exceeding magnitude 1e10 at any grid
    point), and the final-state second moment with each path's contribution
    capped at 1e300 (diverged paths are retained and reported, never
    dropped).
    """
    x0 = np.asarray(x0, dtype=float)
    kinds = (SchemeKind.EULER_MARUYAMA, SchemeKind.STOPPED_BIT)
    bounds = _batch_bounds(M, _N_STAT_BATCHES)

    def one_batch(b: int):
        lo, hi = bounds[b]
        acc = {}
        for c_lo in range(lo, hi, _CHUNK):
            c_hi = min(c_lo + _CHUNK, hi)
            B = c_hi - c_lo
            for N in Ns:
                dw = generate_block(T, N, model.m, seed, c_lo, B)
                for kind in kinds:
                    runs = run_paths(kind, model, GridSpec(T, N), x0, dw)
                    with np.errstate(over="ignore", invalid="ignore"):
                        mags = np.abs(runs.states).max(axis=(1, 2))
                        m2 = np.einsum("bd,bd->b", runs.states[:, -1],
                                       runs.states[:, -1])
                    m2 = np.where(runs.overflow, OVERFLOW_CAP,
                                  np.minimum(np.nan_to_num(m2, nan=OVERFLOW_CAP,
                                                           posinf=OVERFLOW_CAP),
                                             OVERFLOW_CAP))
                    exploded = runs.overflow | (mags > _EXPLODE_MAGNITUDE)
                    key = (kind.value, N)
                    o, e, s, n = acc.get(key, (0, 0, 0.0, 0))
                    acc[key] = (o + int(runs.overflow.sum()),
                                e + int(exploded.sum()),
                                s + float(m2.sum()), n + B)
        return acc

    results = _batch_map(one_batch, _N_STAT_BATCHES, threads)
    rows = []
    for N in Ns:
        for kind in kinds:
            o = e = n = 0
            s = 0.0
            for acc in results:
                oo, ee, ss, nn = acc[(kind.value, N)]
                o, e, s, n = o + oo, e + ee, s + ss, n + nn
            rows.append(DivergenceRow(scheme=kind.value, N=N,
                                      overflow_fraction=o / n,
                                      explode_fraction=e / n,
                                      second_moment_capped=s / n))
    return DivergenceReport(model=model.name, M=M, seed=seed,
                            x0=tuple(float(v) for v in x0), rows=tuple(rows))


@dataclass(frozen=True)
class MomentRow:
    N: int
    eu_estimate: float
    eu_stderr: float
    exp_estimate: float
    exp_stderr: float
    exp_saturated_fraction: float
    bound: float


@dataclass(frozen=True)
class MomentSweepReport:
    """Per-N Lyapunov moments at the horizon, with flatness diagnostics.

    ``flat`` asserts max/min of E[U(Y_T)] across N stays within
    1 + 5 * (combined relative stderr); ``bound_ok`` asserts each estimate
    sits below its Gronwall bound (plus 3 stderr) whenever N >= N0.
    """

    model: str
    M: int
    seed: int
    rows: tuple[MomentRow, ...]
    ratio: float
    ratio_tolerance: float
    n0: N0Report
    consts_c: float
    consts_p: int

    @property
    def flat(self) -> bool:
        return self.ratio <= self.ratio_tolerance

    @property
    def bound_ok(self) -> bool:
        return all(r.eu_estimate <= r.bound + 3.0 * r.eu_stderr
                   for r in self.rows if r.N >= self.n0.N0)


def moment_sweep(model: SdeModel, spec: LyapunovSpec, Ns: tuple[int, ...],
                 M: int, seed: int, x0, T: float = 1.0, p_growth: int = 3,
                 threads: int = 1) -> MomentSweepReport:
    """Monte Carlo E[U(Y^N_T)] and the exponential-moment functional at
    t = T for each N, against the Gronwall moment bound.

    The growth constant c is fitted once from the model (sampled, seeded);
    the bound applies from the reported N0 onward and is typically vacuous
    (infinite) at desk-scale N, which is reported as-is.
    """
    x0 = np.asarray(x0, dtype=float)
    c_growth = fit_growth_constant(model, spec, p_growth, T=T)
    bounds = _batch_bounds(M, _N_STAT_BATCHES)
    eu0 = float(spec.U(x0))

    def one_n(N: int) -> MomentRow:
        def one_batch(b: int):
            lo, hi = bounds[b]
            out = np.empty(hi - lo)
            for c_lo in range(lo, hi, _CHUNK):
                c_hi = min(c_lo + _CHUNK, hi)
                dw = generate_block(T, N, model.m, seed, c_lo, c_hi - c_lo)
                runs = run_paths(SchemeKind.STOPPED_BIT, model, GridSpec(T, N),
                                 x0, dw)
                u = np.minimum(spec.U(runs.states[:, -1]), OVERFLOW_CAP)
                out[c_lo - lo:c_hi - lo] = u
            return out
        parts = _batch_map(one_batch, _N_STAT_BATCHES, threads)
        u_vals = np.concatenate(parts)
        eu = float(np.mean(u_vals))
        eu_se = float(np.std(u_vals, ddof=1) / math.sqrt(M))
        expm = exp_moment_estimate(SchemeKind.STOPPED_BIT, model, spec,
                                   GridSpec(T, N), M, T, seed, x0)
        consts = AnalysisConstants(c=c_growth, p=p_growth, T=T, m=model.m,
                                   rho=spec.rho, N=N)
        return MomentRow(N=N, eu_estimate=eu, eu_stderr=eu_se,
                         exp_estimate=expm.estimate, exp_stderr=expm.stderr,
                         exp_saturated_fraction=expm.saturated_fraction,
                         bound=moment_bound(consts, T, eu0))

    rows = tuple(one_n(N) for N in Ns)
    eus = [r.eu_estimate for r in rows]
    hi = max(range(len(rows)), key=lambda i: eus[i])
    lo = min(range(len(rows)), key=lambda i: eus[i])
    ratio = eus[hi] / eus[lo] if eus[lo] > 0 else math.inf
    rel = math.sqrt((rows[hi].eu_stderr / rows[hi].eu_estimate) ** 2
                    + (rows[lo].eu_stderr / rows[lo].eu_estimate) ** 2) \
        if eus[lo] > 0 else math.inf
    consts0 = AnalysisConstants(c=c_growth, p=p_growth, T=T, m=model.m,
                                rho=spec.rho, N=max(Ns))
    return MomentSweepReport(model=model.name, M=M, seed=seed, rows=rows,
                             ratio=ratio, ratio_tolerance=1.0 + 5.0 * rel,
                             n0=n0_for(consts0), consts_c=c_growth,
                             consts_p=p_growth)
