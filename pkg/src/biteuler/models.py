"""Model zoo: drift/diffusion callables, closed forms, Lyapunov data.

Lyapunov constants for the shipped entries were fixed numerically (see
demos/tune_lyapunov_constants.py, which re-derives and prints them); the
chosen values are committed below and verified by the sampled condition
checker in the test suite.  Constructing a model with non-default
parameters re-runs the same tuning at construction time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import LyapunovSpec, SdeModel

__all__ = [
    "model_gbm",
    "model_ginzburg_landau",
    "model_vdp",
    "tune_ginzburg_landau_spec",
    "tune_vdp_spec",
    "check_conditions",
    "default_sampler",
    "ConditionReport",
    "ConditionStats",
    "ModelCatalogEntry",
    "catalog",
]


# ---------------------------------------------------------------------------
# models


def model_gbm(a: float, b: float) -> SdeModel:
    """Geometric Brownian motion dX = a X dt + b X dW (d = m = 1).

    Globally Lipschitz validation case with the closed form
    X_t = x0 * exp((a - b**2/2) t + b W_t).  Ships without Lyapunov data:
    under any quadratic U the squared-gradient generator term grows like
    x**4, so no finite rho satisfies the generator inequality.
    """

    def drift(x):
        return a * x

    def diffusion(x):
        x = np.asarray(x, dtype=float)
        return b * x[..., :, None]

    def exact(x0, t, w):
        x0 = np.asarray(x0, dtype=float)
        t = np.asarray(t, dtype=float)
        w = np.asarray(w, dtype=float)
        return x0 * np.exp((a - 0.5 * b * b) * t[..., None] + b * w)

    return SdeModel(name="gbm", d=1, m=1, drift=drift, diffusion=diffusion,
                    exact_solution=exact)


def _gl_lyapunov(alpha: float, beta: float, sigma0: float,
                 eps: float, rho: float, c: float) -> LyapunovSpec:
    # U(x) = eps*(||x||^2 + 1).  The +1 makes U(0) > 0, which is what lets
    # the Ito correction eps*sigma0^2 at the origin sit below rho*U(0).
    def U(x):
        x = np.asarray(x, dtype=float)
        return eps * (np.sum(x * x, axis=-1) + 1.0)

    def grad_U(x):
        return 2.0 * eps * np.asarray(x, dtype=float)

    def hess_U(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (1, 1))
        out[..., 0, 0] = 2.0 * eps
        return out

    def U_bar(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1])

    return LyapunovSpec(U=U, grad_U=grad_U, hess_U=hess_U, U_bar=U_bar,
                        rho=rho, c=c, p=4, q0=4.0, q1=math.inf, r=2.0)


def tune_ginzburg_landau_spec(alpha: float, beta: float, sigma0: float,
                              T: float = 1.0) -> tuple[float, float, float]:
    """Pick (eps, rho, c) for the cubic-drift model so the sampled checker
    passes with margin.

    eps keeps the x**2 v**2-free quartic term dominant; rho is 1.15 times
    the exact supremum of the generator quotient (a 1-d scan in u = x**2);
    c covers the one-sided Lipschitz constant alpha, the coercivity guard
    4*eps*c**2 >= 1, and the constraint c >= T**(1/32).
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    eps = 0.25 if sigma0 == 0 else min(0.25, beta / (2.0 * sigma0**2))
    u_hi = max(10.0, 10.0 * (alpha + sigma0**2 + 1.0) / beta)
    u = np.linspace(0.0, u_hi, 200001)
    lhs = 2.0 * alpha * u - 2.0 * beta * u**2 + sigma0**2 + 2.0 * eps * sigma0**2 * u
    rho = 1.15 * max(float(np.max(lhs / (1.0 + u))), 0.0)
    c = 1.15 * max(1.0, alpha, T ** (1.0 / 32.0), 1.0 / (2.0 * math.sqrt(eps)))
    return eps, rho, c


# Committed constants for the default parameterization (alpha=beta=sigma0=1,
# T=1), reproduced by demos/tune_lyapunov_constants.py.
_GL_DEFAULT = (1.0, 1.0, 1.0)
_GL_DEFAULT_CONSTANTS = (0.25, 1.5, 1.5)  # eps, rho, c


def model_ginzburg_landau(alpha: float = 1.0, beta: float = 1.0,
                          sigma0: float = 1.0) -> SdeModel:
    """Cubic-drift testbed dX = (alpha X - beta X**3) dt + sigma0 dW.

    One-dimensional superlinear-drift model with additive noise; the drift
    is one-sided Lipschitz (<x-y, mu(x)-mu(y)> <= alpha |x-y|**2).  Ships
    with U(x) = eps*(x**2 + 1), U_bar = 0 and checker-verified constants.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")

    def drift(x):
        return alpha * x - beta * x**3

    def diffusion(x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[:-1] + (1, 1))
        out[..., 0, 0] = sigma0
        return out

    if (alpha, beta, sigma0) == _GL_DEFAULT:
        eps, rho, c = _GL_DEFAULT_CONSTANTS
    else:
        eps, rho, c = tune_ginzburg_landau_spec(alpha, beta, sigma0)
    return SdeModel(name="ginzburg-landau", d=1, m=1, drift=drift,
                    diffusion=diffusion,
                    lyapunov=_gl_lyapunov(alpha, beta, sigma0, eps, rho, c))


def _vdp_lyapunov(eps: float, u0: float, rho: float, c: float,
                  b: float = 1.0) -> LyapunovSpec:
    # U(x, v) = eps*(b x^4/2 + v^2 + u0): the energy-style pairing cancels
    # the conservative part of the drift, leaving damping plus bounded terms.
    def U(z):
        z = np.asarray(z, dtype=float)
        x, v = z[..., 0], z[..., 1]
        return eps * (0.5 * b * x**4 + v**2 + u0)

    def grad_U(z):
        z = np.asarray(z, dtype=float)
        x, v = z[..., 0], z[..., 1]
        return eps * np.stack([2.0 * b * x**3, 2.0 * v], axis=-1)

    def hess_U(z):
        z = np.asarray(z, dtype=float)
        x = z[..., 0]
        out = np.zeros(z.shape[:-1] + (2, 2))
        out[..., 0, 0] = 6.0 * eps * b * x**2
        out[..., 1, 1] = 2.0 * eps
        return out

    def U_bar(z):
        z = np.asarray(z, dtype=float)
        return np.zeros(z.shape[:-1])

    return LyapunovSpec(U=U, grad_U=grad_U, hess_U=hess_U, U_bar=U_bar,
                        rho=rho, c=c, p=4, q0=4.0, q1=math.inf, r=2.0)


def tune_vdp_spec(a: float, b: float, c_damp: float, sigma0: float,
                  T: float = 1.0, radius: float = 10.0,
                  grid_points: int = 401) -> tuple[float, float, float, float]:
    """Pick (eps, u0, rho, c) for the oscillator.

    rho covers the closed-form supremum of the generator quotient.  c must
    dominate the local-monotonicity quotient minus its Lyapunov slack over
    all pairs in the admissible ball; since the quotient for a pair is a
    segment average of directional derivatives, its supremum is bounded by
    the pointwise worst case lambda_max(sym Dmu) + coef*||Dsigma||^2, which
    is scanned on a dense grid (this also covers the near-coincident pairs
    the checker probes), with 15% headroom.
    """
    if c_damp <= 0:
        raise ValueError("c_damp must be positive for dissipation")
    if b <= 0:
        raise ValueError("b must be positive")
    eps = 0.5 if sigma0 == 0 else min(0.5, 0.5 * c_damp / sigma0**2)
    u0 = 0.5
    rho = 1.15 * max(2.0 * a, sigma0**2 / math.sqrt(2.0 * b * u0), 0.1)

    g = np.linspace(-radius, radius, grid_points)
    X, V = np.meshgrid(g, g, indexing="ij")
    inside = X**2 + V**2 <= radius**2
    # sym(Dmu) = [[0, j12], [j12, j22]] with j12 = (1 - 3b x^2 - 2 c_damp x v)/2
    j12 = 0.5 * (1.0 - 3.0 * b * X**2 - 2.0 * c_damp * X * V)
    j22 = a - c_damp * X**2
    lam = 0.5 * (j22 + np.sqrt(j22**2 + 4.0 * j12**2))
    coef = 3.0  # (p-1)(1+1/c)/2 with p = 4 and any c >= 1
    quot = lam + coef * sigma0**2
    slack = (eps * (0.5 * b * X**4 + V**2 + u0)) / (4.0 * T * math.exp(rho * T))
    need = float(np.max(np.where(inside, quot - slack, -np.inf)))
    c = 1.15 * max(need, 1.0, T ** (1.0 / 32.0))
    return eps, u0, rho, c


def _vdp_model_raw(a: float, b: float, c_damp: float, sigma0: float):
    def drift(z):
        z = np.asarray(z, dtype=float)
        x, v = z[..., 0], z[..., 1]
        return np.stack([v, a * v - b * x**3 - c_damp * x**2 * v], axis=-1)

    def diffusion(z):
        z = np.asarray(z, dtype=float)
        out = np.zeros(z.shape[:-1] + (2, 1))
        out[..., 1, 0] = sigma0 * z[..., 0]
        return out

    return SdeModel(name="vdp", d=2, m=1, drift=drift, diffusion=diffusion)


_VDP_DEFAULT = (1.0, 1.0, 1.0, 0.5)
_VDP_DEFAULT_CONSTANTS = (0.5, 0.5, 2.3, 103.54939027496211)  # eps, u0, rho, c


def model_vdp(a: float = 1.0, b: float = 1.0, c_damp: float = 1.0,
              sigma0: float = 0.5) -> SdeModel:
    """Stochastic Duffing-van der Pol oscillator, state (x, v), m = 1.

    drift(x, v) = (v, a v - b x**3 - c_damp x**2 v) and
    diffusion(x, v) = (0, sigma0 x); the committed constants are for b = 1,
    matching the canonical cubic restoring force.
    """
    if sigma0 < 0:
        raise ValueError("sigma0 must be nonnegative")
    raw = _vdp_model_raw(a, b, c_damp, sigma0)
    if (a, b, c_damp, sigma0) == _VDP_DEFAULT:
        eps, u0, rho, c = _VDP_DEFAULT_CONSTANTS
    else:
        eps, u0, rho, c = tune_vdp_spec(a, b, c_damp, sigma0)
    return SdeModel(name="vdp", d=2, m=1, drift=raw.drift,
                    diffusion=raw.diffusion,
                    lyapunov=_vdp_lyapunov(eps, u0, rho, c, b=b))


# ---------------------------------------------------------------------------
# sampled condition checker


def default_sampler(radius: float = 10.0) -> Callable:
    """Point sampler over a centered ball: half uniform in the ball, half
    Gaussian with scale radius/3 (clipped to the ball)."""

    def sample(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
        n_unif = n // 2
        dirs = rng.standard_normal((n_unif, d))
        dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-300)
        radii = radius * rng.random(n_unif) ** (1.0 / d)
        unif = dirs * radii[:, None]
        gauss = rng.standard_normal((n - n_unif, d)) * (radius / 3.0)
        nrm = np.linalg.norm(gauss, axis=1, keepdims=True)
        gauss = np.where(nrm > radius, gauss * (radius / nrm), gauss)
        return np.concatenate([unif, gauss], axis=0)

    return sample


@dataclass(frozen=True)
class ConditionStats:
    """Sampled result for one condition: LHS - RHS <= 0 means pass."""

    name: str
    n_checked: int
    n_violations: int
    worst_margin: float  # max over samples of LHS - RHS (negative = slack)

    @property
    def passed(self) -> bool:
        return self.n_violations == 0


@dataclass(frozen=True)
class ConditionReport:
    generator: ConditionStats
    monotonicity: ConditionStats
    coercivity: ConditionStats

    @property
    def total_violations(self) -> int:
        return (self.generator.n_violations + self.monotonicity.n_violations
                + self.coercivity.n_violations)

    @property
    def passed(self) -> bool:
        return self.total_violations == 0


def _generator_lhs(model: SdeModel, spec: LyapunovSpec, x: np.ndarray) -> np.ndarray:
    mu = model.drift(x)
    sig = model.diffusion(x)
    grad = spec.grad_U(x)
    hess = spec.hess_U(x)
    term_drift = np.einsum("...d,...d->...", grad, mu)
    term_hess = 0.5 * np.einsum("...dm,...de,...em->...", sig, hess, sig)
    sig_grad = np.einsum("...dm,...d->...m", sig, grad)
    term_grad = 0.5 * np.einsum("...m,...m->...", sig_grad, sig_grad)
    return term_drift + term_hess + term_grad + spec.U_bar(x)


def _monotonicity_parts(model: SdeModel, spec: LyapunovSpec, T: float,
                        x: np.ndarray, y: np.ndarray):
    """Quotient of the local-monotonicity condition and its Lyapunov slack.

    Degenerate pairs x == y are dropped by the caller via the mask of
    nonzero distances; here distances are assumed positive.
    """
    dz = x - y
    dist2 = np.einsum("...d,...d->...", dz, dz)
    dmu = model.drift(x) - model.drift(y)
    dsig = model.diffusion(x) - model.diffusion(y)
    coef = (spec.p - 1.0) * (1.0 + 1.0 / spec.c) / 2.0
    num = (np.einsum("...d,...d->...", dz, dmu)
           + coef * np.einsum("...dm,...dm->...", dsig, dsig))
    quot = num / dist2
    slack = np.zeros_like(quot)
    scale = 2.0 * math.exp(spec.rho * T)
    if not math.isinf(spec.q0):
        slack = slack + (np.abs(spec.U(x)) + np.abs(spec.U(y))) / (spec.q0 * T * scale)
    if not math.isinf(spec.q1):
        slack = slack + (np.abs(spec.U_bar(x)) + np.abs(spec.U_bar(y))) / (spec.q1 * scale)
    return quot, slack


def check_conditions(model: SdeModel, spec: LyapunovSpec, T: float,
                     sampler: Callable, n_points: int,
                     seed: int = 0) -> ConditionReport:
    """Sampled check of the three Lyapunov-side conditions.

    At each sampled point x: the generator inequality
    <grad U, mu> + (1/2)<sigma, Hess U sigma>_F + (1/2)||sigma^T grad U||^2
    + U_bar <= rho U; at each sampled pair (x, y), x != y: the
    local-monotonicity quotient against c plus its Lyapunov slack; and the
    coercivity (1/c)||x||**(1/c) <= 1 + |U(x)|.  Pairs include
    near-coincident ones (||x - y|| = 1e-3) where cancellation in the
    quotient is worst.  Returns per-condition violation counts and worst
    margins.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    d = model.d
    pts = sampler(rng, n_points, d)

    gen_margin = _generator_lhs(model, spec, pts) - spec.rho * spec.U(pts)
    gen = ConditionStats("generator", n_points, int(np.sum(gen_margin > 0)),
                         float(np.max(gen_margin)))

    n_pairs = n_points // 2
    x = sampler(rng, n_pairs, d)
    y = sampler(rng, n_pairs, d)
    dirs = rng.standard_normal((n_pairs, d))
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-300)
    x_near = sampler(rng, n_pairs, d)
    y_near = x_near + 1e-3 * dirs
    xs = np.concatenate([x, x_near], axis=0)
    ys = np.concatenate([y, y_near], axis=0)
    keep = np.einsum("...d,...d->...", xs - ys, xs - ys) > 0
    xs, ys = xs[keep], ys[keep]
    quot, slack = _monotonicity_parts(model, spec, T, xs, ys)
    mono_margin = quot - (spec.c + slack)
    mono = ConditionStats("local-monotonicity", int(keep.sum()),
                          int(np.sum(mono_margin > 0)), float(np.max(mono_margin)))

    nrm = np.linalg.norm(pts, axis=-1)
    coer_margin = (1.0 / spec.c) * nrm ** (1.0 / spec.c) - 1.0 - np.abs(spec.U(pts))
    coer = ConditionStats("coercivity", n_points, int(np.sum(coer_margin > 0)),
                          float(np.max(coer_margin)))

    return ConditionReport(generator=gen, monotonicity=mono, coercivity=coer)


# ---------------------------------------------------------------------------
# catalog


@dataclass(frozen=True)
class ModelCatalogEntry:
    model: SdeModel
    admissible_region: str
    in_region: Callable[[np.ndarray], np.ndarray]
    default_x0: np.ndarray
    notes: str


def catalog() -> dict[str, ModelCatalogEntry]:
    """The shipped model zoo, keyed by CLI model id."""
    ball10 = lambda x: np.linalg.norm(np.asarray(x, dtype=float), axis=-1) <= 10.0
    everywhere = lambda x: np.ones(np.asarray(x).shape[:-1], dtype=bool)
    return {
        "gbm": ModelCatalogEntry(
            model=model_gbm(0.05, 0.2),
            admissible_region="all of R",
            in_region=everywhere,
            default_x0=np.array([1.0]),
            notes=("closed-form solution available; no Lyapunov data (the "
                   "squared-gradient generator term is quartic under any "
                   "quadratic U, so the generator inequality fails at "
                   "infinity for every rho)"),
        ),
        "ginzburg-landau": ModelCatalogEntry(
            model=model_ginzburg_landau(),
            admissible_region="ball of radius 10 (checker sampling region)",
            in_region=ball10,
            default_x0=np.array([1.0]),
            notes=("cubic one-sided Lipschitz drift, additive noise; "
                   "Lyapunov constants tuned numerically, committed in "
                   "models.py"),
        ),
        "vdp": ModelCatalogEntry(
            model=model_vdp(),
            admissible_region="ball of radius 10 (checker sampling region)",
            in_region=ball10,
            default_x0=np.array([1.0, 0.0]),
            notes=("Duffing-van der Pol oscillator with state-proportional "
                   "noise on the velocity; energy-style Lyapunov function"),
        ),
    }
