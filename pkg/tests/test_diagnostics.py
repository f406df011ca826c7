import math

import numpy as np
import pytest
from scipy.integrate import quad

from biteuler.brownian import generate_path
from biteuler.core import GridSpec, LyapunovSpec
from biteuler.diagnostics import (AnalysisConstants, epsilon_n,
                                  exp_moment_estimate, exp_moment_supremum,
                                  fit_growth_constant, growth_preflight,
                                  moment_bound, n0_for, regularity_check,
                                  regularity_sweep, stopping_probability)
from biteuler.models import catalog, model_ginzburg_landau
from biteuler.schemes import SchemeKind, run_path
from biteuler.taming import stopping_threshold

# mpmath reference values (40 digits) for the closed-form evaluations
EPS_N16 = 1278500396.9800874
EPS_N1024 = 727151.02472121126
EPS_N2_40 = 563.38828617157606
MOMENT_BOUND_1024 = 12.631171738589982

UNIT = AnalysisConstants(c=1.0, p=1, T=1.0, m=1, rho=0.0, N=16)


def test_epsilon_n_frozen_values():
    assert epsilon_n(UNIT.at(16)) == pytest.approx(EPS_N16, rel=1e-12)
    assert epsilon_n(UNIT.at(1024)) == pytest.approx(EPS_N1024, rel=1e-12)
    assert epsilon_n(UNIT.at(2**40)) == pytest.approx(EPS_N2_40, rel=1e-12)


def test_epsilon_n_decreasing_and_vanishing():
    vals = [epsilon_n(UNIT.at(2**k)) for k in range(4, 41)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-2 * max(vals)


def test_epsilon_n_ratio_test():
    # eps(4N)/eps(N) < 1 across the sweep
    for k in range(4, 39):
        assert epsilon_n(UNIT.at(2 ** (k + 2))) < epsilon_n(UNIT.at(2**k))


def test_epsilon_n_asymptotic_slope_negative():
    ks = np.arange(20, 41)
    logs = np.array([math.log(epsilon_n(UNIT.at(2**int(k)))) for k in ks])
    slope = np.polyfit(ks * math.log(2.0), logs, 1)[0]
    # several competing power terms are still active at these N; the fitted
    # slope just has to be decisively negative
    assert slope < -0.05


def test_epsilon_n_overflow_reports_inf():
    big_c = AnalysisConstants(c=50.0, p=4, T=1.0, m=1, rho=0.0, N=2)
    assert epsilon_n(big_c) == math.inf


def test_moment_bound_at_zero_time():
    assert moment_bound(UNIT.at(1024), 0.0, 3.5) == pytest.approx(3.5)


def test_moment_bound_frozen_value_and_quadrature():
    consts = UNIT.at(1024)
    val = moment_bound(consts, 1.0, 1.0)
    assert val == pytest.approx(MOMENT_BOUND_1024, rel=1e-12)
    # quadrature oracle: EU0 e^{Ct} + int_0^t Cbar e^{C(t-s)} ds
    tn = 1.0 / 1024
    C = 2 * tn ** (15 / 16) + 32 * tn ** (13 / 32)
    Cbar = tn ** (13 / 32) * (32 + 0.5 * 4**4 * tn)
    integral, err = quad(lambda s: Cbar * math.exp(C * (1.0 - s)), 0.0, 1.0,
                         epsabs=1e-13, epsrel=1e-13)
    oracle = math.exp(C) + integral
    assert val == pytest.approx(oracle, rel=1e-10)


def test_moment_bound_gronwall_skeleton():
    # with the step terms sent to zero the bound collapses to EU0*e^{rho t}
    consts = AnalysisConstants(c=1.0, p=1, T=1.0, m=1, rho=0.7, N=2**60)
    val = moment_bound(consts, 1.0, 2.0)
    assert val == pytest.approx(2.0 * math.exp(0.7), rel=1e-3)


def test_moment_bound_small_c_limit_linear():
    # C -> 0: bound -> EU0 + Cbar*t, checked against tiny-C evaluation
    consts = AnalysisConstants(c=1.0, p=1, T=1.0, m=1, rho=0.0, N=2**200)
    v = moment_bound(consts, 1.0, 1.0)
    assert v == pytest.approx(1.0, rel=1e-8)


def test_moment_bound_overflow_is_inf():
    consts = AnalysisConstants(c=2.5, p=3, T=1.0, m=1, rho=1.5, N=16)
    assert moment_bound(consts, 1.0, 1.0) == math.inf


def test_growth_preflight_gl():
    gl = model_ginzburg_landau()
    consts = AnalysisConstants(c=2.5, p=3, T=1.0, m=1, rho=1.5, N=1024)
    report = growth_preflight(gl, gl.lyapunov, consts)
    assert report.admissible
    tight = AnalysisConstants(c=1.01, p=3, T=1.0, m=1, rho=1.5, N=1024)
    assert not growth_preflight(gl, gl.lyapunov, tight).admissible


def test_fit_growth_constant_is_minimal_with_headroom():
    gl = model_ginzburg_landau()
    c_fit = fit_growth_constant(gl, gl.lyapunov, p=3)
    consts = AnalysisConstants(c=c_fit, p=3, T=1.0, m=1, rho=1.5, N=1024)
    assert growth_preflight(gl, gl.lyapunov, consts).admissible
    assert c_fit < 3.0  # cubic drift over the radius-10 ball needs c ~ 1.4


def test_n0_inequalities_hold_from_n0_on():
    consts = AnalysisConstants(c=2.5, p=3, T=1.0, m=1, rho=0.0, N=16)
    rep = n0_for(consts)
    assert rep.log10_N0 > 10  # far beyond desk scale for honest constants

    def ok(n):
        u = math.log(n / consts.T)
        first = math.sqrt(u) <= math.log(consts.c) + u / (32 * consts.p)
        second = (consts.c**consts.p * math.exp(-u * 7 / 32)
                  * (consts.T**0.75 + 1.0)) <= math.exp(u / (32 * consts.p))
        return first and second

    if math.isfinite(rep.N0):
        assert ok(rep.N0 * 1.01)
        assert not ok(rep.N0 * 0.5)
    # gap-free regime: log c >= 8p makes the threshold inequality global
    big = AnalysisConstants(c=math.exp(25.0), p=3, T=1.0, m=1, rho=0.0, N=16)
    rep_big = n0_for(big)
    assert rep_big.threshold_fit_all_N
    assert math.isfinite(rep_big.N0)


def test_regularity_single_run_passes():
    gl = model_ginzburg_landau()
    grid = GridSpec(T=1.0, N=64)
    path = generate_path(1.0, 64 * 5, 1, seed=4, path_index=0)
    run = run_path(SchemeKind.STOPPED_BIT, gl, grid, [1.0], path)
    consts = AnalysisConstants(c=2.5, p=3, T=1.0, m=1, rho=1.5, N=64)
    rep = regularity_check(run, gl, consts, path, samples_per_step=4)
    assert rep.constants_admissible
    assert rep.all_passed
    assert rep.max_lhs < rep.bound


def test_regularity_sweep_full_pass():
    gl = model_ginzburg_landau()
    consts = AnalysisConstants(c=2.5, p=3, T=1.0, m=1, rho=1.5, N=1024)
    rep = regularity_sweep(gl, consts, GridSpec(1.0, 1024), [1.0], M=1000,
                           samples_per_step=4, seed=10)
    assert rep.n_samples == 1000 * 1024 * 4
    assert rep.all_passed
    assert rep.constants_admissible


def test_regularity_frozen_path_contributes_zero():
    gl = model_ginzburg_landau()
    grid = GridSpec(T=1.0, N=16)
    path = generate_path(1.0, 80, 1, seed=5, path_index=0)
    run = run_path(SchemeKind.STOPPED_BIT, gl, grid, [50.0], path)
    assert run.tau_index == 0
    consts = AnalysisConstants(c=2.5, p=3, T=1.0, m=1, rho=1.5, N=16)
    rep = regularity_check(run, gl, consts, path, samples_per_step=4)
    assert rep.max_lhs == 0.0


def _flat_spec():
    return LyapunovSpec(
        U=lambda x: np.zeros(np.asarray(x).shape[:-1]),
        grad_U=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        hess_U=lambda x: np.zeros(np.asarray(x).shape[:-1] + (1, 1)),
        U_bar=lambda x: np.zeros(np.asarray(x).shape[:-1]),
        rho=0.0, c=4.0, p=4, q0=4.0, q1=math.inf, r=2.0)


def test_exp_moment_trivial_u_is_exactly_one():
    gl = model_ginzburg_landau()
    est = exp_moment_estimate(SchemeKind.STOPPED_BIT, gl, _flat_spec(),
                              GridSpec(1.0, 32), 500, 1.0, seed=0, x0=[1.0])
    assert est.estimate == 1.0
    assert est.stderr == 0.0


def test_exp_moment_at_time_zero():
    gl = model_ginzburg_landau()
    spec = gl.lyapunov
    est = exp_moment_estimate(SchemeKind.STOPPED_BIT, gl, spec,
                              GridSpec(1.0, 32), 200, 0.0, seed=0, x0=[1.0])
    assert est.estimate == pytest.approx(math.exp(float(spec.U(np.array([1.0])))))
    assert est.stderr < 1e-15  # identical per-path values up to summation fuzz


def test_exp_moment_rejects_off_grid_time():
    gl = model_ginzburg_landau()
    with pytest.raises(ValueError):
        exp_moment_estimate(SchemeKind.STOPPED_BIT, gl, gl.lyapunov,
                            GridSpec(1.0, 32), 100, 0.33, seed=0, x0=[1.0])


def test_exp_moment_flat_across_n_and_below_rate_bound():
    gl = model_ginzburg_landau()
    spec = gl.lyapunov
    u0 = float(spec.U(np.array([1.0])))
    ests = []
    for N in (16, 64, 256):
        est = exp_moment_estimate(SchemeKind.STOPPED_BIT, gl, spec,
                                  GridSpec(1.0, N), 4000, 1.0, seed=3, x0=[1.0])
        ests.append(est)
        consts = AnalysisConstants(c=2.5, p=3, T=1.0, m=1, rho=spec.rho, N=N)
        eps = epsilon_n(consts)
        if math.isfinite(eps):
            assert est.estimate <= math.exp(u0) * math.exp(eps * 1.0)
    vals = [e.estimate for e in ests]
    rel = max(e.stderr / e.estimate for e in ests)
    assert max(vals) / min(vals) <= 1.0 + 6.0 * rel


def test_stopping_probability_certain_when_started_outside():
    gl = model_ginzburg_landau()
    grid = GridSpec(1.0, 16)
    x0 = [stopping_threshold(16, 1.0) + 1.0]
    rep = stopping_probability(gl, grid, 200, seed=0, x0=x0)
    assert rep.estimate == 1.0


def test_stopping_probability_zero_for_still_model():
    from biteuler.core import SdeModel

    still = SdeModel(
        name="still", d=1, m=1,
        drift=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        diffusion=lambda x: np.zeros(np.asarray(x).shape[:-1] + (1, 1)))
    rep = stopping_probability(still, GridSpec(1.0, 16), 200, seed=0, x0=[0.5])
    assert rep.estimate == 0.0


def test_stopping_probability_bound_reported_with_spec():
    gl = model_ginzburg_landau()
    rep = stopping_probability(gl, GridSpec(1.0, 32), 400, seed=1, x0=[1.0],
                               spec=gl.lyapunov, bound_paths=200)
    assert rep.bound is not None and rep.C1 is not None
    assert rep.C1 >= 1.0
    assert rep.bound >= 0.0


def test_exp_moment_supremum_monotone_pieces():
    gl = model_ginzburg_landau()
    sup = exp_moment_supremum(SchemeKind.STOPPED_BIT, gl, gl.lyapunov,
                              GridSpec(1.0, 16), 300, seed=2, x0=[1.0])
    one_point = exp_moment_estimate(SchemeKind.STOPPED_BIT, gl, gl.lyapunov,
                                    GridSpec(1.0, 16), 300, 0.0, seed=2,
                                    x0=[1.0])
    assert sup >= one_point.estimate - 1e-12
