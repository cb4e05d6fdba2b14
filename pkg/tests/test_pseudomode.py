"""Gauge function, cutoff selection, norms, residual ratios, decay fits."""

import math

import numpy as np
import pytest

from cmag_wkb.cseries import BiSeries, UniSeries
from cmag_wkb.fieldmodel import compute_Q, oscillating_field, polynomial_field, user_polynomial_field
from cmag_wkb.pseudomode import (
    CutoffSpec,
    PhaseNotPositiveError,
    Pseudomode,
    QuadratureResolutionError,
    ResidualReport,
    amplitude_sum_bound,
    assemble,
    canonical_field,
    compute_theta,
    fit_decay,
    make_pseudomode,
    norm_L2,
    rep_quadratic_fit,
    residual_series_exact,
    select_cutoff,
    smooth_step,
    smooth_step_prime,
)
from cmag_wkb.wkb import WKBSolution, solve_wkb

X0 = (np.pi / 3, -np.pi / 2)

WORK_R = {(6, 0): 0.05, (4, 2): 0.15, (2, 4): 0.15, (0, 6): 0.05}


def workhorse(cap=24):
    return polynomial_field(8.0, 0.3 + 1j, 1.0, R_coeffs=WORK_R, cap=cap)


@pytest.fixture(scope="module")
def work_setup():
    field = workhorse()
    rep = compute_Q(field)
    sol = solve_wkb(field, N=3)
    pm = make_pseudomode(field, sol, report=rep, N_rule="fixed", N=1)
    return field, rep, sol, pm


# ----------------------------------------------------------------------------
# cutoff profile
# ----------------------------------------------------------------------------

def test_smooth_step_endpoints_and_monotonicity():
    t = np.linspace(-0.5, 1.5, 101)
    v = smooth_step(t)
    assert np.all(v[t <= 0] == 1.0)
    assert np.all(v[t >= 1] == 0.0)
    assert np.all(np.diff(v) <= 1e-12)


def test_smooth_step_prime_matches_fd():
    t = np.linspace(0.05, 0.95, 19)
    d = 1e-6
    fd = (smooth_step(t + d) - smooth_step(t - d)) / (2 * d)
    assert np.max(np.abs(fd - smooth_step_prime(t))) < 1e-7


def test_cutoff_plateau_and_support():
    cut = CutoffSpec(r_in=0.5, r_out=1.0, delta=1.0, M1=0.2, M2=1.0)
    assert cut.chi(0.3) == 1.0 and cut.chi(0.0) == 1.0
    assert cut.chi(1.1) == 0.0
    assert cut.chi_prime(0.2) == 0.0 and cut.chi_prime(1.2) == 0.0
    assert cut.chi_prime(0.75) < 0.0


# ----------------------------------------------------------------------------
# gauge function
# ----------------------------------------------------------------------------

def test_theta_zero_in_canonical_gauge(work_setup):
    field, rep, sol, pm = work_setup
    canon = canonical_field(field, sol)
    pts = np.array([[0.1, 0.0], [0.0, -0.2], [0.15, 0.1]])
    th = compute_theta(canon, sol, pts)
    assert np.max(np.abs(th)) < 1e-10


def test_theta_gradient_reproduces_gauge_difference(work_setup):
    field, rep, sol, pm = work_setup
    ev = pm.theta_evaluator()
    y = np.array([0.21, -0.13])
    d = 1e-5
    g1 = (ev(y[0] + d, y[1]) - ev(y[0] - d, y[1])) / (2 * d)
    g2 = (ev(y[0], y[1] + d) - ev(y[0], y[1] - d)) / (2 * d)
    m1, m2 = ev.M(y[0], y[1])
    a1, a2 = field.A(sol.base_point[0] + y[0], sol.base_point[1] + y[1])
    assert abs(g1 - (m1 - a1)) < 1e-6
    assert abs(g2 - (m2 - a2)) < 1e-6


def test_theta_second_derivative_identity_oscillating():
    # Im d1^2 theta(0) = -d1 Im A1(x0) (= 0 for the oscillating field)
    field = oscillating_field(X0, cap=20)
    sol = solve_wkb(field, N=1)
    from cmag_wkb.pseudomode import _ThetaEvaluator

    ev = _ThetaEvaluator(field, sol)
    d = 1e-4
    d11 = (ev(d, 0.0) - 2 * ev(0.0, 0.0) + ev(-d, 0.0)) / d**2
    assert abs(d11.imag - 0.0) < 1e-6
    # and the mixed one equals Im B(x0)/2 - d1 Im A2(x0) = -1/2
    d12 = (ev(d, d) - ev(d, -d) - ev(-d, d) + ev(-d, -d)) / (4 * d**2)
    assert abs(d12.imag - (-0.5)) < 1e-5


# ----------------------------------------------------------------------------
# cutoff selection and the phase/Q-form tie
# ----------------------------------------------------------------------------

def test_select_cutoff_positive_definite_case(work_setup):
    field, rep, sol, pm = work_setup
    cut = pm.cutoff
    assert cut.M1 > 0 and cut.M2 >= cut.M1
    assert cut.r_in == pytest.approx(cut.delta / 2)
    lam_min = float(np.linalg.eigvalsh(
        np.array([[rep.Q1, -rep.Q2], [-rep.Q2, rep.Q3]]))[0])
    assert cut.M1 == pytest.approx(0.5 * lam_min)


def test_rep_quadratic_matches_gamma_report(work_setup):
    field, rep, sol, pm = work_setup
    c11, c12, c22 = rep_quadratic_fit(pm)
    assert abs(c11 - rep.Q1) < 1e-8
    assert abs(c12 - (-2 * rep.Q2)) < 1e-8
    assert abs(c22 - rep.Q3) < 1e-8


def test_oscillating_phase_not_positive_is_diagnosed():
    # the printed Q2 formula and the constructed phase disagree at this point;
    # the fitted Re P quadratic is indefinite and the assembly must refuse
    field = oscillating_field(X0, cap=24)
    rep = compute_Q(field)
    assert rep.in_gamma  # the printed formulas admit the point...
    sol = solve_wkb(field, N=1)
    with pytest.raises(PhaseNotPositiveError) as exc:
        select_cutoff(field, sol, report=rep)
    msg = str(exc.value)
    assert "Q2" in msg and "does not exist" in msg


def test_delta_override_allows_diagnostics():
    field = oscillating_field(X0, cap=24)
    sol = solve_wkb(field, N=1)
    cut = select_cutoff(field, sol, report=compute_Q(field), delta_override=0.08)
    assert cut.r_out == pytest.approx(0.08)


# ----------------------------------------------------------------------------
# assembly and norms
# ----------------------------------------------------------------------------

def test_pseudomode_normalized_at_base_point(work_setup):
    field, rep, sol, pm = work_setup
    u = assemble(pm, 0.05)
    val = complex(u(np.array([sol.base_point[0]]), np.array([sol.base_point[1]]))[0])
    assert abs(val - 1.0) < 1e-12  # chi=1, P(x0)=0, a0(x0)=1, a_j(x0)=0


def test_pseudomode_vanishes_outside_support(work_setup):
    field, rep, sol, pm = work_setup
    u = assemble(pm, 0.05)
    r = pm.cutoff.r_out
    xs = np.array([sol.base_point[0] + 1.01 * r, sol.base_point[0] - 2 * r])
    ys = np.array([sol.base_point[1], sol.base_point[1] + 1.5 * r])
    assert np.all(u(xs, ys) == 0.0)


def test_amplitude_sum_linear_bound(work_setup):
    field, rep, sol, pm = work_setup
    c1 = amplitude_sum_bound(pm, h=0.05)
    assert np.isfinite(c1) and c1 > 0


def test_norm_gaussian_closed_form():
    # ||e^{-M|x|^2/h}||^2 = pi h / (2M) up to the (tiny) truncation outside
    M, h = 1.5, 0.02

    def u(x1, x2):
        return np.exp(-M * (x1**2 + x2**2) / h)

    res = norm_L2(u, h, r_out=1.0)
    exact = math.sqrt(math.pi * h / (2 * M))
    assert abs(res.value - exact) < 1e-8 * exact


def test_norm_zero_function():
    res = norm_L2(lambda x1, x2: np.zeros_like(x1), 0.05, r_out=1.0)
    assert res.value == 0.0


def test_norm_refuses_unresolved_scale():
    h = 3e-3  # Gaussian width ~0.05, far below what 16 nodes resolve

    def u(x1, x2):
        return np.exp(-(x1**2 + x2**2) / h)

    with pytest.raises(QuadratureResolutionError):
        norm_L2(u, h, r_out=1.0, n=16)


# ----------------------------------------------------------------------------
# residual reports
# ----------------------------------------------------------------------------

def test_residual_report_fields(work_setup):
    field, rep, sol, pm = work_setup
    r = residual_series_exact(pm, 0.05)
    assert r.evaluator == "series_exact"
    assert r.u_norm > 0 and r.ratio == pytest.approx(r.residual_norm / r.u_norm)
    assert r.N_used == 1
    assert r.quadrature_points > 0 and np.isfinite(r.tail_estimate)


def test_interior_residual_zero_when_top_amplitude_vanishes():
    # constant field: a_1 == 0, so the interior term vanishes identically and
    # only cutoff-commutator terms remain (exponentially small in 1/h)
    from cmag_wkb.cseries import UniSeries
    from cmag_wkb.wkb import (_Workspace, divided_data, first_transport,
                              poisson_series, transport_step)

    cap = 18
    B = BiSeries.constant(2.0, cap)
    w = UniSeries.zeros(cap)
    phi = poisson_series(B)
    V, F = divided_data(phi, B, w)
    mu, J, A0, a0 = first_transport(B, phi, w, V, F)
    ws = _Workspace(B, phi, UniSeries.zeros(cap), w, V, F, mu, J, A0, a0, cap - 1)
    transport_step(ws, 0)
    sol = WKBSolution(
        phi=phi, w_curve=w, f=UniSeries.zeros(cap), S=phi, V=V, F=F, J=J, A0=A0,
        amplitudes=tuple(ws.amplitudes), mu=mu, N=1, trusted_radii=(2.0, 2.0),
        trusted_degrees=tuple(ws.trusted), base_point=(0.0, 0.0),
        residual_maxima=ws.residual_maxima,
    )
    field = user_polynomial_field({(0, 1): -1.0}, {(1, 0): 1.0}, cap=cap)  # A = M, B = 2
    cut = CutoffSpec(r_in=0.5, r_out=1.0, delta=1.0, M1=0.5, M2=0.51)
    pm = Pseudomode(field=field, sol=sol, cutoff=cut, N_rule="fixed", N_fixed=1)
    r1 = residual_series_exact(pm, 0.05)
    assert r1.interior_norm == 0.0
    assert r1.ratio == pytest.approx(r1.cutoff_norm / r1.u_norm)
    # exponential smallness: log(ratio) * h stays below -(1-eps) M1 r_in^2
    r2 = residual_series_exact(pm, 0.025)
    for r in (r1, r2):
        assert math.log(r.ratio) * r.h < -0.5 * cut.M1 * cut.r_in**2
    assert r2.ratio < r1.ratio**1.5  # decays faster than any power


def test_cutoff_locality_on_positive_case(work_setup):
    field, rep, sol, pm = work_setup
    r = residual_series_exact(pm, 0.02)
    assert r.cutoff_norm / r.u_norm < math.exp(-0.5 * pm.cutoff.M1 * pm.cutoff.r_in**2 / 0.02)


def test_gauge_ratio_invariance(work_setup):
    # running in the canonical gauge A := M changes the ratio by < 2%
    field, rep, sol, pm = work_setup
    h = 0.03
    r_orig = residual_series_exact(pm, h)
    canon = canonical_field(field, sol)
    pm2 = Pseudomode(field=canon, sol=sol, cutoff=pm.cutoff, N_rule="fixed", N_fixed=1)
    r_canon = residual_series_exact(pm2, h)
    assert abs(r_canon.ratio - r_orig.ratio) < 0.02 * r_orig.ratio


def test_fd_evaluator_agrees_with_series():
    # use the spec-scale polynomial field: its h=0.05 ratio sits well above
    # the n=384 discretization floor of the grid operator
    from cmag_wkb.pseudomode import residual_finite_difference

    field = polynomial_field(1.0, 1j, 1.0, cap=24)
    rep = compute_Q(field)
    sol = solve_wkb(field, N=1)
    pm = make_pseudomode(field, sol, report=rep, N_rule="fixed", N=1)
    h = 0.05
    r_series = residual_series_exact(pm, h)
    r_fd = residual_finite_difference(pm, h, n=384)
    assert r_fd.evaluator == "finite_difference"
    assert abs(r_fd.ratio - r_series.ratio) < 0.1 * r_series.ratio


def test_adaptive_rule_and_budget_clip(work_setup, caplog):
    field, rep, sol, pm = work_setup
    pma = Pseudomode(field=field, sol=sol, cutoff=pm.cutoff,
                     N_rule="adaptive", m_growth=1.0)
    # (e m h)^(-1/7) at h = 1e-9 is ~ 16, far beyond the computed budget
    import logging

    with caplog.at_level(logging.WARNING):
        n = pma.N_used(1e-9)
    assert n == sol.N
    assert any("clipping" in rec.message for rec in caplog.records)
    assert pma.N_used(0.05) >= 1


def test_positive_norm_enforced():
    with pytest.raises(ValueError):
        ResidualReport(h=0.1, N_used=1, u_norm=0.0, residual_norm=1.0, ratio=1.0,
                       evaluator="series_exact", quadrature_points=1, tail_estimate=0.0)


# ----------------------------------------------------------------------------
# decay fits
# ----------------------------------------------------------------------------

def _fake_reports(hs, ratios):
    return [
        ResidualReport(h=float(h), N_used=1, u_norm=1.0, residual_norm=float(r),
                       ratio=float(r), evaluator="series_exact",
                       quadrature_points=1, tail_estimate=0.0)
        for h, r in zip(hs, ratios)
    ]


def test_fit_decay_exact_power():
    hs = np.geomspace(0.1, 0.003, 8)
    fit = fit_decay(_fake_reports(hs, hs**3), model="power")
    assert fit.slope == pytest.approx(3.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)


def test_fit_decay_exact_stretched():
    hs = np.geomspace(0.1, 0.003, 8)
    fit = fit_decay(_fake_reports(hs, np.exp(-2.0 * hs ** (-1 / 7))), model="stretched")
    assert fit.C == pytest.approx(2.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)


def test_fit_decay_refuses_thin_data():
    hs = np.geomspace(0.1, 0.05, 3)
    with pytest.raises(ValueError):
        fit_decay(_fake_reports(hs, hs**2))
    hs = np.geomspace(0.1, 0.05, 5)  # five points but under a decade
    with pytest.raises(ValueError):
        fit_decay(_fake_reports(hs, hs**2))


def test_rep_cubic_remainder_finite_when_phase_matches(work_setup):
    from cmag_wkb.pseudomode import rep_cubic_remainder

    field, rep, sol, pm = work_setup
    K = rep_cubic_remainder(pm, report=rep)
    assert np.isfinite(K) and K < 50.0
