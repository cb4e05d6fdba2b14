"""Cutoff pseudomodes in the original gauge, norms, and residual ratios.

The phase is P = S + i*theta, where S comes from the series construction and
theta is the gauge function with grad theta = M - A, M = (-d2 phi, d1 phi)
the canonical potential of the Poisson solution.  theta is evaluated by
Gauss-Legendre quadrature along radial segments from the base point; the
constant theta(x0) is normalized to 0 (it cancels in every ratio).

The pseudomode is u_h = chi * exp(-P/h) * sum_j h^j a_j with a plateau
cutoff chi.  Its residual splits into the interior term
chi * exp(-P/h) * h^(N+2) * (-Lap a_N) and commutator terms supported on
supp(grad chi); the h-linear commutator coefficient is assembled in the
gauge-invariant combination grad S + i M (the potential A cancels exactly
against grad theta, which matters numerically when |A(x0)| is large).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .cseries import real_gradient_series
from .fieldmodel import FieldSpec, GammaReport, compute_Q
from .wkb import WKBSolution

log = logging.getLogger(__name__)


class PhaseNotPositiveError(RuntimeError):
    """Re P fails the quadratic lower bound on every candidate disc."""


class QuadratureResolutionError(RuntimeError):
    """The Gaussian scale sqrt(h) is not resolved by the allowed grid."""


class GaugeConsistencyError(RuntimeError):
    """M - A is not numerically curl-free: Taylor data does not match A."""


# ----------------------------------------------------------------------------
# smooth plateau cutoff
# ----------------------------------------------------------------------------

def _sigma(t):
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        return np.where(t > 0.0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)


def smooth_step(t):
    """1 for t <= 0, 0 for t >= 1, C-infinity in between."""
    t = np.asarray(t, dtype=float)
    lo, hi = _sigma(t), _sigma(1.0 - t)
    with np.errstate(invalid="ignore"):
        out = np.where(t <= 0.0, 1.0, np.where(t >= 1.0, 0.0, hi / (hi + lo)))
    return out


def smooth_step_prime(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    ts = np.where(inside, t, 0.5)
    lo, hi = _sigma(ts), _sigma(1.0 - ts)
    g = 1.0 / ts**2 + 1.0 / (1.0 - ts) ** 2
    out = -lo * hi * g / (hi + lo) ** 2
    return np.where(inside, out, 0.0)


def smooth_step_second(t, step=1e-6):
    return (smooth_step_prime(t + step) - smooth_step_prime(t - step)) / (2.0 * step)


@dataclass(frozen=True)
class CutoffSpec:
    """Plateau cutoff chi(x) = step((|x| - r_in)/(r_out - r_in)) plus the
    verified quadratic bounds M1 |x|^2 <= Re P <= M2 |x|^2 on D(0, r_out)."""

    r_in: float
    r_out: float
    delta: float
    M1: float
    M2: float

    def __post_init__(self):
        if not (0 < self.r_in < self.r_out <= self.delta * (1 + 1e-12)):
            raise ValueError("need 0 < r_in < r_out <= delta")
        if not self.M1 > 0:
            raise ValueError("M1 must be positive")

    def chi(self, r):
        return smooth_step((np.asarray(r) - self.r_in) / (self.r_out - self.r_in))

    def chi_prime(self, r):
        w = self.r_out - self.r_in
        return smooth_step_prime((np.asarray(r) - self.r_in) / w) / w

    def chi_lap(self, r):
        """Radial Laplacian chi'' + chi'/r."""
        w = self.r_out - self.r_in
        t = (np.asarray(r) - self.r_in) / w
        second = smooth_step_second(t) / w**2
        with np.errstate(divide="ignore", invalid="ignore"):
            first_over_r = np.where(r > 0, smooth_step_prime(t) / (w * np.maximum(r, 1e-300)), 0.0)
        return second + first_over_r


# ----------------------------------------------------------------------------
# gauge function theta
# ----------------------------------------------------------------------------

class _ThetaEvaluator:
    """theta(x) = int_0^1 (M - A)(x0 + t y) . y dt on arrays of points.

    Node count adapts once, on a spot-check ring, not per call: the
    integrand is analytic, so a fixed Gauss rule is exact to roundoff once
    the count clears the field's scale.
    """

    def __init__(self, field, sol, n_nodes=24, check_radius=None):
        self.field = field
        self.sol = sol
        dzphi = sol.phi.differentiate("z")
        dwphi = sol.phi.differentiate("w")
        self._d1phi = dzphi + dwphi
        self._d2phi = 1j * (dzphi - dwphi)
        self.n_nodes = n_nodes
        self._calibrated = False
        self._check_radius = check_radius or 0.5 * min(sol.trusted_radii)

    def M(self, y1, y2):
        """Canonical potential at local coordinates y."""
        d1 = self._d1phi.realify(y1, y2)
        d2 = self._d2phi.realify(y1, y2)
        return -d2, d1

    def _quad(self, y1, y2, n):
        tg, twt = np.polynomial.legendre.leggauss(n)
        tt = 0.5 * (tg + 1.0)
        tw = 0.5 * twt
        x0 = self.sol.base_point
        acc = np.zeros(np.broadcast(y1, y2).shape, dtype=complex)
        for t, wgt in zip(tt, tw):
            m1, m2 = self.M(t * y1, t * y2)
            a1, a2 = self.field.A(x0[0] + t * y1, x0[1] + t * y2)
            acc = acc + wgt * ((m1 - a1) * y1 + (m2 - a2) * y2)
        return acc

    def _calibrate(self):
        ang = np.linspace(0.0, 2 * np.pi, 8, endpoint=False)
        r = self._check_radius
        y1, y2 = r * np.cos(ang), r * np.sin(ang)
        for _ in range(3):
            v = self._quad(y1, y2, self.n_nodes)
            v2 = self._quad(y1, y2, 2 * self.n_nodes)
            err = float(np.max(np.abs(v - v2)))
            if err <= 1e-10 * max(1.0, float(np.max(np.abs(v2)))):
                break
            self.n_nodes *= 2
        self._calibrated = True

    def __call__(self, y1, y2):
        if not self._calibrated:
            self._calibrate()
        y1 = np.asarray(y1, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        return self._quad(y1, y2, self.n_nodes)

    def check_curl_free(self, radius, tol=1e-6, n_samples=8, step=1e-5):
        """Central-difference curl of M - A at sample points inside the disc."""
        x0 = self.sol.base_point
        ang = np.linspace(0.0, 2 * np.pi, n_samples, endpoint=False)
        worst = 0.0
        for r in (0.3 * radius, 0.7 * radius):
            y1, y2 = r * np.cos(ang), r * np.sin(ang)

            def G2(u1, u2):
                m1, m2 = self.M(u1, u2)
                a1, a2 = self.field.A(x0[0] + u1, x0[1] + u2)
                return m1 - a1, m2 - a2

            _, g2p = G2(y1 + step, y2)
            _, g2m = G2(y1 - step, y2)
            g1p, _ = G2(y1, y2 + step)
            g1m, _ = G2(y1, y2 - step)
            curl = (g2p - g2m - g1p + g1m) / (2 * step)
            worst = max(worst, float(np.max(np.abs(curl))))
        if worst > tol:
            raise GaugeConsistencyError(
                f"curl(M - A) = {worst:.3e} > {tol:.1e}: the field's Taylor data "
                f"does not match its potential A"
            )
        return worst


def compute_theta(field, sol, points):
    """Gauge values theta(x) at an array of global points, theta(x0) = 0."""
    ev = _ThetaEvaluator(field, sol)
    pts = np.asarray(points, dtype=float)
    y1 = pts[..., 0] - sol.base_point[0]
    y2 = pts[..., 1] - sol.base_point[1]
    ev.check_curl_free(max(float(np.max(np.hypot(y1, y2))), 1e-6))
    return ev(y1, y2)


# ----------------------------------------------------------------------------
# cutoff selection
# ----------------------------------------------------------------------------

def select_cutoff(field, sol, report=None, delta_override=None, n_angles=64):
    """Pick delta as the largest radius <= min(analytic_radius/2, trusted
    radius) with sampled Re P >= M1 |x|^2, M1 = lambda_min(Q)/2.

    Raises PhaseNotPositiveError with the fitted Re P quadratic when no disc
    works (this is exactly the situation where the printed Q2 formula and the
    constructed phase disagree; both readings are included for diagnosis).
    """
    if report is None:
        report = compute_Q(field)
    Qmat = np.array([[report.Q1, -report.Q2], [-report.Q2, report.Q3]])
    lam_min = float(np.linalg.eigvalsh(Qmat)[0])
    M1 = 0.5 * lam_min
    theta_ev = _ThetaEvaluator(field, sol)

    def reP(y1, y2):
        return sol.S.realify(y1, y2).real - theta_ev(y1, y2).imag

    ang = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    ca, sa = np.cos(ang), np.sin(ang)
    d_max = min(0.5 * field.analytic_radius, 0.95 * min(sol.trusted_radii))

    if delta_override is not None:
        delta = float(delta_override)
        samples = [reP(r * ca, r * sa) / r**2 for r in np.linspace(delta / 8, delta, 8)]
        m_lo = float(np.min(samples))
        m_hi = float(np.max(samples))
        if m_lo <= 0:
            log.warning("delta override %.3g: Re P not positive on samples (min ratio %.3g)",
                        delta, m_lo)
        return CutoffSpec(r_in=delta / 2, r_out=delta, delta=delta,
                          M1=max(m_lo, 1e-12) if m_lo > 0 else max(0.5 * lam_min, 1e-12),
                          M2=max(m_hi, 1e-12))

    if lam_min > 0:
        for delta in np.geomspace(d_max, d_max / 64.0, 24):
            radii = np.linspace(delta / 8, delta, 8)
            vals = [reP(r * ca, r * sa) / r**2 for r in radii]
            if all(np.min(v) >= M1 for v in vals):
                M2 = float(max(np.max(v) for v in vals))
                return CutoffSpec(r_in=delta / 2, r_out=delta, delta=delta, M1=M1, M2=M2)

    # diagnose: fit the actual quadratic of Re P on a small circle
    r0 = min(d_max / 8, 0.05)
    vals = reP(r0 * ca, r0 * sa)
    rows = np.stack([(r0 * ca) ** 2, (r0 * ca) * (r0 * sa), (r0 * sa) ** 2], axis=1)
    coef, *_ = np.linalg.lstsq(rows, vals, rcond=None)
    fitted = np.array([[coef[0], coef[1] / 2], [coef[1] / 2, coef[2]]])
    eigs = np.linalg.eigvalsh(fitted)
    q2_printed = report.Q2
    q2_from_fit = -coef[1] / 2.0
    raise PhaseNotPositiveError(
        f"no disc with Re P >= {M1:.4g}|x|^2: fitted Re P quadratic "
        f"(c11, c12, c22) = ({coef[0]:.6g}, {coef[1]:.6g}, {coef[2]:.6g}), "
        f"eigenvalues {eigs[0]:.4g}, {eigs[1]:.4g}; Q2 printed formula gives "
        f"{q2_printed:.6g}, the constructed phase corresponds to Q2 = {q2_from_fit:.6g}. "
        f"A decaying pseudomode does not exist at this base point."
    )


# ----------------------------------------------------------------------------
# pseudomode
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Pseudomode:
    field: FieldSpec
    sol: WKBSolution
    cutoff: CutoffSpec
    N_rule: str = "fixed"          # "fixed" | "adaptive"
    N_fixed: int = 1
    m_growth: Optional[float] = None

    def __post_init__(self):
        if self.N_rule not in ("fixed", "adaptive"):
            raise ValueError("N_rule must be 'fixed' or 'adaptive'")
        if self.N_rule == "adaptive" and not self.m_growth:
            raise ValueError("adaptive N rule needs m_growth from fit_growth")

    def N_used(self, h):
        if self.N_rule == "fixed":
            n = self.N_fixed
        else:
            n = int(math.floor((math.e * self.m_growth * h) ** (-1.0 / 7.0)))
        if n > self.sol.N:
            log.warning("N(h)=%d exceeds the computed budget N=%d; clipping", n, self.sol.N)
            n = self.sol.N
        return max(n, 0)

    def theta_evaluator(self):
        return _ThetaEvaluator(self.field, self.sol)


def make_pseudomode(field, sol, report=None, N_rule="fixed", N=1, m_growth=None,
                    delta_override=None):
    cutoff = select_cutoff(field, sol, report=report, delta_override=delta_override)
    theta_ev = _ThetaEvaluator(field, sol)
    theta_ev.check_curl_free(cutoff.r_out)
    return Pseudomode(field=field, sol=sol, cutoff=cutoff, N_rule=N_rule,
                      N_fixed=N, m_growth=m_growth)


def assemble(pm, h):
    """Evaluable u_h(x1, x2) (global coordinates); zero outside D(x0, r_out)."""
    if not h > 0:
        raise ValueError("h must be positive")
    N = pm.N_used(h)
    sol, cut = pm.sol, pm.cutoff
    theta_ev = pm.theta_evaluator()

    def u(x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        y1 = x1 - sol.base_point[0]
        y2 = x2 - sol.base_point[1]
        r = np.hypot(y1, y2)
        inside = r < cut.r_out
        out = np.zeros(np.broadcast(y1, y2).shape, dtype=complex)
        if not np.any(inside):
            return out
        i1, i2 = y1[inside], y2[inside]
        P = sol.S.realify(i1, i2) + 1j * theta_ev(i1, i2)
        amp = np.zeros_like(P)
        for j in range(N + 1):
            amp = amp + h**j * sol.amplitudes[j].realify(i1, i2)
        out[inside] = cut.chi(r[inside]) * np.exp(-P / h) * amp
        return out

    return u


# ----------------------------------------------------------------------------
# quadrature
# ----------------------------------------------------------------------------

def _gl_grid(r_out, n):
    xg, wg = np.polynomial.legendre.leggauss(n)
    x = r_out * xg
    w = r_out * wg
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    return X1, X2, W


def quadrature_points(h, r_out, n_min=64, factor=8.0):
    return max(n_min, int(math.ceil(factor * r_out / math.sqrt(h))))


@dataclass(frozen=True)
class NormResult:
    value: float
    error_estimate: float
    points: int


def norm_L2(u, h, r_out, n=None, rtol=0.01):
    """Tensor Gauss-Legendre L2 norm over the cutoff square, with a
    two-resolution error estimate; refuses when sqrt(h) is unresolved."""
    n = n or quadrature_points(h, r_out)
    X1, X2, W = _gl_grid(r_out, n)
    v1 = float(np.sum(np.abs(u(X1, X2)) ** 2 * W))
    X1, X2, W = _gl_grid(r_out, 2 * n)
    v2 = float(np.sum(np.abs(u(X1, X2)) ** 2 * W))
    err = abs(v2 - v1)
    if v2 <= 0.0:
        return NormResult(0.0, err, 2 * n)
    if err > rtol * v2:
        raise QuadratureResolutionError(
            f"norm quadrature unresolved at n={n}: |I_2n - I_n| = {err:.3e} "
            f"exceeds {rtol:.0%} of {v2:.3e}; retry with n >= {4 * n}"
        )
    return NormResult(math.sqrt(v2), err, 2 * n)


# ----------------------------------------------------------------------------
# residual evaluation (series-exact route)
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ResidualReport:
    h: float
    N_used: int
    u_norm: float
    residual_norm: float
    ratio: float
    evaluator: str
    quadrature_points: int
    tail_estimate: float
    interior_norm: float = 0.0
    cutoff_norm: float = 0.0

    def __post_init__(self):
        if not self.u_norm > 0:
            raise ValueError("pseudomode norm must be positive")


class _ResidualField:
    """Pointwise residual of (L_{h,A} - h mu) u_h from series data.

    residual = e^{-P/h} [ chi h^{N+2} (-Lap a_N)
                          - 2 h^2 grad(chi) . sum h^j grad(a_j)
                          + (-h^2 Lap(chi) + 2h (grad S + i M) . grad(chi)) sum h^j a_j ]
    """

    def __init__(self, pm, h):
        self.pm = pm
        self.h = h
        self.N = pm.N_used(h)
        sol = pm.sol
        self.theta_ev = pm.theta_evaluator()
        self.lap_aN = 4.0 * sol.amplitudes[self.N].differentiate("z").differentiate("w")
        self.grads = [real_gradient_series(sol.amplitudes[j]) for j in range(self.N + 1)]
        self.dS1, self.dS2 = real_gradient_series(sol.S)

    def components(self, y1, y2, u_only=False):
        pm, h, N = self.pm, self.h, self.N
        sol, cut = pm.sol, pm.cutoff
        r = np.hypot(y1, y2)
        P = sol.S.realify(y1, y2) + 1j * self.theta_ev(y1, y2)
        E = np.exp(-P / h)
        chi = cut.chi(r)
        amp = np.zeros_like(P)
        for j in range(N + 1):
            amp = amp + h**j * sol.amplitudes[j].realify(y1, y2)
        u = chi * E * amp
        if u_only:
            return u, None, None
        dchi = cut.chi_prime(r)
        lapchi = cut.chi_lap(r)
        with np.errstate(invalid="ignore", divide="ignore"):
            n1 = np.where(r > 0, y1 / np.maximum(r, 1e-300), 0.0)
            n2 = np.where(r > 0, y2 / np.maximum(r, 1e-300), 0.0)
        ring = dchi != 0.0
        damp1 = np.zeros_like(P)
        damp2 = np.zeros_like(P)
        for j in range(N + 1):
            g1, g2 = self.grads[j]
            damp1[ring] += h**j * g1.realify(y1[ring], y2[ring])
            damp2[ring] += h**j * g2.realify(y1[ring], y2[ring])
        interior = chi * E * h ** (N + 2) * (-self.lap_aN.realify(y1, y2))
        lin1 = np.zeros_like(P)
        lin2 = np.zeros_like(P)
        m1, m2 = self.theta_ev.M(y1[ring], y2[ring])
        lin1[ring] = self.dS1.realify(y1[ring], y2[ring]) + 1j * m1
        lin2[ring] = self.dS2.realify(y1[ring], y2[ring]) + 1j * m2
        cutoff_term = E * (
            -2.0 * h**2 * dchi * (n1 * damp1 + n2 * damp2)
            + (-(h**2) * lapchi + 2.0 * h * (lin1 * dchi * n1 + lin2 * dchi * n2)) * amp
        )
        return u, interior, cutoff_term


def residual_series_exact(pm, h, n=None, rtol=0.01):
    """ResidualReport for one h via the series-exact route.

    The residual field is evaluated on the doubled grid only; the coarse
    grid serves the Richardson consistency estimate of the u-norm (the
    residual integrand has the same Gaussian scale).
    """
    if not h > 0:
        raise ValueError("h must be positive")
    cut = pm.cutoff
    rf = _ResidualField(pm, h)
    n = n or quadrature_points(h, cut.r_out)

    def norms_at(m, full):
        X1, X2, W = _gl_grid(cut.r_out, m)
        mask = np.hypot(X1, X2) < cut.r_out
        y1, y2, w = X1[mask], X2[mask], W[mask]
        if not full:
            u, _, _ = rf.components(y1, y2, u_only=True)
            return (float(np.sum(np.abs(u) ** 2 * w)),)
        u, interior, cutoff_term = rf.components(y1, y2)
        return (
            float(np.sum(np.abs(u) ** 2 * w)),
            float(np.sum(np.abs(interior + cutoff_term) ** 2 * w)),
            float(np.sum(np.abs(interior) ** 2 * w)),
            float(np.sum(np.abs(cutoff_term) ** 2 * w)),
        )

    (un1,) = norms_at(n, full=False)
    un2, rn2, in2, cn2 = norms_at(2 * n, full=True)
    if abs(un2 - un1) > rtol * un2:
        raise QuadratureResolutionError(
            f"residual quadrature unresolved at n={n}: retry with n >= {4 * n}"
        )
    tail = series_tail_bound(pm.sol, cut.r_out)
    return ResidualReport(
        h=h, N_used=rf.N, u_norm=math.sqrt(un2), residual_norm=math.sqrt(rn2),
        ratio=math.sqrt(rn2 / un2), evaluator="series_exact",
        quadrature_points=(2 * n) ** 2, tail_estimate=float(tail),
        interior_norm=math.sqrt(in2), cutoff_norm=math.sqrt(cn2),
    )


def series_tail_bound(sol, r):
    """Crude truncation-tail estimate at radius r: last-diagonal magnitude of
    the phase series scaled by the trusted-radius geometric factor."""
    cap = sol.S.cap
    a = np.arange(cap + 1)
    diag = float(np.abs(sol.S.coeffs[a, cap - a]).sum()) * r**cap
    rho = r / max(min(sol.trusted_radii), 1e-300)
    return diag * rho / (1.0 - rho) if rho < 1.0 else float("inf")


def residual_finite_difference(pm, h, n=512, L=None):
    """Cross-check ResidualReport from the independent grid operator."""
    from . import numop

    if L is None:
        L = 2.0 * pm.cutoff.r_out
    grid = numop.Grid2D(L=L, n=n)
    X1, X2 = grid.meshgrid(center=pm.sol.base_point)
    u = assemble(pm, h)(X1, X2)
    gf = numop.GridFunction(values=u, grid=grid)
    Lu = numop.apply_L(pm.field, h, gf, center=pm.sol.base_point)
    res = Lu.values - h * pm.sol.mu * u
    w = grid.spacing**2
    un = math.sqrt(float(np.sum(np.abs(u) ** 2)) * w)
    rn = math.sqrt(float(np.sum(np.abs(res) ** 2)) * w)
    tail = series_tail_bound(pm.sol, pm.cutoff.r_out)
    return ResidualReport(
        h=h, N_used=pm.N_used(h), u_norm=un, residual_norm=rn, ratio=rn / un,
        evaluator="finite_difference", quadrature_points=n * n,
        tail_estimate=float(tail),
    )


# ----------------------------------------------------------------------------
# decay-model fits
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    model: str
    slope: float        # power: d log(ratio)/d log(h); stretched: -C
    constant: float     # fitted intercept
    r_squared: float

    @property
    def C(self):
        return -self.slope


def fit_decay(reports, model="power"):
    """Least-squares fit of log(ratio) against log h (power) or h^(-1/7)
    (stretched).  Needs >= 4 reports spanning at least a decade of h."""
    hs = np.array([r.h for r in reports], dtype=float)
    ratios = np.array([r.ratio for r in reports], dtype=float)
    if len(hs) < 4:
        raise ValueError("need at least 4 reports for a decay fit")
    if hs.max() / hs.min() < 10.0:
        raise ValueError("reports must span at least one decade of h")
    if np.any(ratios <= 0):
        raise ValueError("ratios must be positive for a log fit")
    y = np.log(ratios)
    if model == "power":
        x = np.log(hs)
    elif model == "stretched":
        x = hs ** (-1.0 / 7.0)
    else:
        raise ValueError("model must be 'power' or 'stretched'")
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(model=model, slope=float(coef[0]), constant=float(coef[1]),
                    r_squared=r2)


# ----------------------------------------------------------------------------
# gauge helpers and diagnostics
# ----------------------------------------------------------------------------

def canonical_field(field, sol):
    """The same field in the canonical gauge A := M (so theta == 0)."""
    ev = _ThetaEvaluator(field, sol)
    x0 = sol.base_point

    def A(x1, x2):
        return ev.M(np.asarray(x1) - x0[0], np.asarray(x2) - x0[1])

    return replace(field, name=field.name + "_canonical", A=A, A_jac=None, divA=None)


def amplitude_sum_bound(pm, h, n_samples=64):
    """Fitted C1 with sum_{j>=1} h^j |a_j(x)| <= C1 |x| near the base point."""
    cut, sol = pm.cutoff, pm.sol
    rng = np.random.default_rng(7)
    r = cut.r_out * np.sqrt(rng.uniform(0.001, 1.0, n_samples))
    ang = rng.uniform(0, 2 * np.pi, n_samples)
    y1, y2 = r * np.cos(ang), r * np.sin(ang)
    total = np.zeros(n_samples)
    for j in range(1, pm.N_used(h) + 1):
        total = total + h**j * np.abs(sol.amplitudes[j].realify(y1, y2))
    return float(np.max(total / r))


def rep_quadratic_fit(pm, radius=None, n_angles=64):
    """Fitted quadratic (c11, c12, c22) of Re P on a small circle."""
    sol = pm.sol
    theta_ev = pm.theta_evaluator()
    r = radius or min(0.05, pm.cutoff.r_out / 8)
    ang = np.linspace(0, 2 * np.pi, n_angles, endpoint=False)
    y1, y2 = r * np.cos(ang), r * np.sin(ang)
    vals = sol.S.realify(y1, y2).real - theta_ev(y1, y2).imag
    rows = np.stack([y1**2, y1 * y2, y2**2], axis=1)
    coef, *_ = np.linalg.lstsq(rows, vals, rcond=None)
    return tuple(float(c) for c in coef)


def rep_cubic_remainder(pm, report=None, n_samples=128):
    """Fitted K with |Re P(x) - Q(x - x0)| <= K |x - x0|^3 on samples.

    Q is the admissibility quadratic form from the field report; finite K is
    the O(|x|^3) agreement diagnostic (it blows up exactly when the report's
    cross-coefficient and the assembled phase disagree).
    """
    if report is None:
        report = compute_Q(pm.field)
    sol, cut = pm.sol, pm.cutoff
    theta_ev = pm.theta_evaluator()
    rng = np.random.default_rng(11)
    r = cut.r_out * np.cbrt(rng.uniform(1e-3, 1.0, n_samples))
    ang = rng.uniform(0, 2 * np.pi, n_samples)
    y1, y2 = r * np.cos(ang), r * np.sin(ang)
    reP = sol.S.realify(y1, y2).real - theta_ev(y1, y2).imag
    Q = report.Q1 * y1**2 - 2 * report.Q2 * y1 * y2 + report.Q3 * y2**2
    return float(np.max(np.abs(reP - Q) / r**3))
