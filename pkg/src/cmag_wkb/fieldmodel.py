"""Complex magnetic potentials, admissibility data, and hypothesis checkers.

A field is a complex vector potential A : R^2 -> C^2 together with Taylor
data of the scalar field B = curl A = d1 A2 - d2 A1, complexified at a base
point.  The admissibility report carries the coefficients

    Q1 = 1/4 Re[B (1 + dzB/dzbarB)] + 1/2 d1 Im A1
    Q2 = 1/4 Im[B dzB/dzbarB]       + 1/4 (d1 Im A2 + d2 Im A1)
    Q3 = 1/4 Re[B (1 - dzB/dzbarB)] + 1/2 d2 Im A2

evaluated at the base point.  Caveat: the cross-term realized by the
assembled phase corresponds to the opposite sign of Q2's potential-derivative
part, so the (Q1, Q2, Q3) form being positive definite does not by itself
guarantee positivity of Re P when d1 Im A2 + d2 Im A1 is nonzero at the base
point; the cutoff selection in the pseudomode stage verifies Re P directly
and reports both readings on failure.

Builtins:

* ``oscillating``    A = (-sin(x1) x2 + i cos(x2), i cos(x2)), B = sin x1 + i sin x2
* ``polynomial``     B = a + b x1 + c x2 + R(x), A = (0, ∫_0^{x1} B(s, x2) ds)
* ``miller_simon``   A = c (-x2, x1) / (1+|x|)^alpha
* ``exponential``    A = i c e^{|x|^2} (-x2, x1)

plus user fields given by polynomial coefficient tables for A1, A2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .cseries import BiSeries, complexify_real_taylor

GAMMA_TOL = 1e-9  # tau_Gamma: "=0"/"!=0" tolerance on evaluated quantities


class FieldConsistencyError(ValueError):
    """curl A at the base point disagrees with the Taylor data."""


# ----------------------------------------------------------------------------
# small real-coefficient polynomial helper (dict of {(m, n): complex coeff})
# ----------------------------------------------------------------------------

def poly_eval(p, x1, x2):
    out = 0.0 + 0.0j
    for (m, n), c in p.items():
        out = out + c * x1**m * x2**n
    return out


def poly_partial(p, var):
    out = {}
    for (m, n), c in p.items():
        if var == 1 and m > 0:
            out[(m - 1, n)] = out.get((m - 1, n), 0.0) + m * c
        elif var == 2 and n > 0:
            out[(m, n - 1)] = out.get((m, n - 1), 0.0) + n * c
    return out


def poly_shift(p, x0):
    """Coefficients of p(x0 + y) in y."""
    out = {}
    for (m, n), c in p.items():
        for i in range(m + 1):
            for j in range(n + 1):
                k = (i, j)
                out[k] = out.get(k, 0.0) + (
                    c * math.comb(m, i) * math.comb(n, j) * x0[0] ** (m - i) * x0[1] ** (n - j)
                )
    return out


def poly_curl(a1, a2):
    d1a2 = poly_partial(a2, 1)
    d2a1 = poly_partial(a1, 2)
    out = dict(d1a2)
    for k, c in d2a1.items():
        out[k] = out.get(k, 0.0) - c
    return out


def _poly_to_array(p, cap):
    arr = np.zeros((cap + 1, cap + 1), dtype=complex)
    for (m, n), c in p.items():
        if m + n <= cap:
            arr[m, n] = c
    return arr


# ----------------------------------------------------------------------------
# field specification
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldSpec:
    """A potential with evaluable first partials plus complexified Taylor data.

    ``A`` maps (x1, x2) arrays to a pair (A1, A2); ``A_jac`` returns the four
    partials (d1A1, d2A1, d1A2, d2A2) and falls back to central differences
    when a closed form is not available.  ``B_taylor`` is the complexified
    series of curl A at ``base_point``.
    """

    name: str
    params: dict
    A: Callable
    B: Callable
    B_taylor: BiSeries
    base_point: tuple
    analytic_radius: float
    A_jac: Optional[Callable] = None
    divA: Optional[Callable] = None

    def __post_init__(self):
        if not self.analytic_radius > 0:
            raise ValueError("analytic_radius must be positive")
        b_num = curl_fd(self.A, self.base_point)
        b0 = self.B_taylor.coeffs[0, 0]
        if abs(b_num - b0) > 1e-6 * max(1.0, abs(b0)):
            raise FieldConsistencyError(
                f"curl A at base point = {b_num}, Taylor constant term = {b0}"
            )

    def jac(self, x1, x2, step=1e-6):
        if self.A_jac is not None:
            return self.A_jac(x1, x2)
        a1p, a2p = self.A(x1 + step, x2)
        a1m, a2m = self.A(x1 - step, x2)
        b1p, b2p = self.A(x1, x2 + step)
        b1m, b2m = self.A(x1, x2 - step)
        return (
            (a1p - a1m) / (2 * step),
            (b1p - b1m) / (2 * step),
            (a2p - a2m) / (2 * step),
            (b2p - b2m) / (2 * step),
        )

    def div_A(self, x1, x2):
        if self.divA is not None:
            return self.divA(x1, x2)
        d1a1, d2a1, d1a2, d2a2 = self.jac(x1, x2)
        return d1a1 + d2a2


def curl_fd(A, x, step=1e-5):
    x1, x2 = x
    _, a2p = A(x1 + step, x2)
    _, a2m = A(x1 - step, x2)
    a1p, _ = A(x1, x2 + step)
    a1m, _ = A(x1, x2 - step)
    return (a2p - a2m) / (2 * step) - (a1p - a1m) / (2 * step)


def numeric_taylor(Bfunc, base, cap, step):
    """Least-squares Taylor extraction for user fields without closed forms."""
    K = 2 * (cap + 2)
    t = np.linspace(-1.0, 1.0, K) * step * (cap + 2)
    X1, X2 = np.meshgrid(base[0] + t, base[1] + t, indexing="ij")
    vals = Bfunc(X1, X2).ravel()
    cols, expo = [], []
    for m in range(cap + 1):
        for n in range(cap + 1 - m):
            cols.append(((X1 - base[0]) ** m * (X2 - base[1]) ** n).ravel())
            expo.append((m, n))
    M = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(M, vals, rcond=None)
    out = np.zeros((cap + 1, cap + 1), dtype=complex)
    for (m, n), c in zip(expo, coef):
        out[m, n] = c
    return out


# ----------------------------------------------------------------------------
# builtins
# ----------------------------------------------------------------------------

def _trig_taylor(x0, cap, kind):
    """Taylor coefficients of sin/cos at x0: derivative cycle over k."""
    shift = 0.0 if kind == "sin" else np.pi / 2
    return np.array(
        [np.sin(shift + x0 + k * np.pi / 2) / math.factorial(k) for k in range(cap + 1)]
    )


def oscillating_field(base_point, cap=24):
    """B = sin x1 + i sin x2 with A = (-sin(x1) x2 + i cos x2, i cos x2)."""
    x0 = (float(base_point[0]), float(base_point[1]))

    def A(x1, x2):
        return (-np.sin(x1) * x2 + 1j * np.cos(x2), 1j * np.cos(x2) * np.ones_like(np.asarray(x1, dtype=float)))

    def A_jac(x1, x2):
        z = np.zeros_like(np.asarray(x1, dtype=float))
        return (-np.cos(x1) * x2, -np.sin(x1) - 1j * np.sin(x2), z + 0j, -1j * np.sin(x2))

    def B(x1, x2):
        return np.sin(x1) + 1j * np.sin(x2)

    breal = np.zeros((cap + 1, cap + 1), dtype=complex)
    s1 = _trig_taylor(x0[0], cap, "sin")
    s2 = _trig_taylor(x0[1], cap, "sin")
    breal[:, 0] += s1
    breal[0, :] += 1j * s2
    bt = complexify_real_taylor(breal, cap)
    return FieldSpec(
        name="oscillating", params={}, A=A, B=B, B_taylor=bt, base_point=x0,
        analytic_radius=1.0, A_jac=A_jac,
        divA=lambda x1, x2: -np.cos(x1) * x2 - 1j * np.sin(x2),
    )


DEFAULT_R_COEFFS = {(6, 0): 1.0, (4, 2): 3.0, (2, 4): 3.0, (0, 6): 1.0}  # (x1^2+x2^2)^3


def polynomial_field(a, b, c, R_coeffs=None, base_point=(0.0, 0.0), cap=24):
    """B = a + b x1 + c x2 + R(x) with the gauge A = (0, ∫_0^{x1} B(s, x2) ds).

    R must be a real-coefficient polynomial (dict {(m, n): coeff}).
    """
    if R_coeffs is None:
        R_coeffs = dict(DEFAULT_R_COEFFS)
    Bp = {(0, 0): complex(a), (1, 0): complex(b), (0, 1): complex(c)}
    for (m, n), v in R_coeffs.items():
        if abs(complex(v).imag) > 0:
            raise ValueError("R must be real-valued")
        Bp[(m, n)] = Bp.get((m, n), 0.0) + complex(v)
    # A2 = \int_0^{x1} B(s, x2) ds, term-wise
    A2p = {(m + 1, n): v / (m + 1) for (m, n), v in Bp.items()}
    return _field_from_polys(
        "polynomial",
        {"a": complex(a), "b": complex(b), "c": complex(c), "R": dict(R_coeffs)},
        {}, A2p, base_point, cap, analytic_radius=2.0,
    )


def user_polynomial_field(A1_coeffs, A2_coeffs, base_point=(0.0, 0.0), cap=24,
                          analytic_radius=2.0, name="user_polynomial"):
    return _field_from_polys(
        name, {"A1": dict(A1_coeffs), "A2": dict(A2_coeffs)},
        dict(A1_coeffs), dict(A2_coeffs), base_point, cap, analytic_radius,
    )


def _field_from_polys(name, params, A1p, A2p, base_point, cap, analytic_radius):
    x0 = (float(base_point[0]), float(base_point[1]))
    Bp = poly_curl(A1p, A2p)
    d1A1, d2A1 = poly_partial(A1p, 1), poly_partial(A1p, 2)
    d1A2, d2A2 = poly_partial(A2p, 1), poly_partial(A2p, 2)

    def A(x1, x2):
        one = np.ones_like(np.asarray(x1, dtype=float))
        return (poly_eval(A1p, x1, x2) * one, poly_eval(A2p, x1, x2) * one)

    def A_jac(x1, x2):
        one = np.ones_like(np.asarray(x1, dtype=float))
        return (
            poly_eval(d1A1, x1, x2) * one, poly_eval(d2A1, x1, x2) * one,
            poly_eval(d1A2, x1, x2) * one, poly_eval(d2A2, x1, x2) * one,
        )

    def B(x1, x2):
        return poly_eval(Bp, x1, x2) * np.ones_like(np.asarray(x1, dtype=float))

    breal = _poly_to_array(poly_shift(Bp, x0), cap)
    bt = complexify_real_taylor(breal, cap)
    return FieldSpec(
        name=name, params=params, A=A, B=B, B_taylor=bt, base_point=x0,
        analytic_radius=analytic_radius, A_jac=A_jac,
        divA=lambda x1, x2: poly_eval(d1A1, x1, x2) + poly_eval(d2A2, x1, x2),
    )


def miller_simon_field(c, alpha, base_point=(1.0, 0.5), cap=3):
    """A = c (-x2, x1) / (1+|x|)^alpha; bounded field, bounded potential."""
    c = complex(c)
    alpha = float(alpha)
    x0 = (float(base_point[0]), float(base_point[1]))

    def A(x1, x2):
        r = np.hypot(x1, x2)
        f = c / (1.0 + r) ** alpha
        return (-f * x2, f * x1)

    def B(x1, x2):
        r = np.hypot(x1, x2)
        return c * (2.0 / (1.0 + r) ** alpha - alpha * r / (1.0 + r) ** (alpha + 1))

    if math.hypot(*x0) < 1e-9:
        raise ValueError("miller_simon base point must avoid the origin (|x| kink)")
    radius = 0.5 * min(1.0, math.hypot(*x0))
    breal = numeric_taylor(B, x0, cap, 1e-2 * radius)
    bt = complexify_real_taylor(breal, cap)
    return FieldSpec(
        name="miller_simon", params={"c": c, "alpha": alpha}, A=A, B=B,
        B_taylor=bt, base_point=x0, analytic_radius=radius,
    )


def exponential_field(c, base_point=(0.0, 0.0), cap=24):
    """A = i c e^{|x|^2} (-x2, x1); Im B = 2c(1+|x|^2)e^{|x|^2}."""
    c = float(c)
    x0 = (float(base_point[0]), float(base_point[1]))

    def A(x1, x2):
        e = np.exp(x1**2 + x2**2)
        return (-1j * c * e * x2, 1j * c * e * x1)

    def B(x1, x2):
        r2 = x1**2 + x2**2
        return 2j * c * (1.0 + r2) * np.exp(r2)

    def A_jac(x1, x2):
        e = np.exp(x1**2 + x2**2)
        return (
            -2j * c * e * x1 * x2, -1j * c * e * (1 + 2 * x2**2),
            1j * c * e * (1 + 2 * x1**2), 2j * c * e * x1 * x2,
        )

    if x0 == (0.0, 0.0):
        # B~ = 2ic (1 + zw) e^{zw}: assemble exactly
        bt = BiSeries.zeros(cap)
        ew = BiSeries.from_terms([(1, 1, 1.0)], cap)
        bt = (BiSeries.constant(1.0, cap) + ew) * ew.exp() * (2j * c)
    else:
        breal = numeric_taylor(B, x0, min(cap, 4), 1e-3)
        bt = complexify_real_taylor(breal, min(cap, 4))
    return FieldSpec(
        name="exponential", params={"c": c}, A=A, B=B, B_taylor=bt,
        base_point=x0, analytic_radius=1.0, A_jac=A_jac,
        divA=lambda x1, x2: np.zeros_like(np.asarray(x1, dtype=float)) + 0j,
    )


BUILTIN_FIELDS = {
    "oscillating": oscillating_field,
    "polynomial": polynomial_field,
    "miller_simon": miller_simon_field,
    "exponential": exponential_field,
}


def make_field(name, params=None, base_point=(0.0, 0.0), cap=24):
    params = dict(params or {})
    if name == "oscillating":
        return oscillating_field(base_point, cap=cap)
    if name == "polynomial":
        return polynomial_field(
            params.get("a", 1.0), params.get("b", 1j), params.get("c", 1.0),
            params.get("R"), base_point=base_point, cap=cap,
        )
    if name == "miller_simon":
        return miller_simon_field(params.get("c", 1 + 1j), params.get("alpha", 1.0),
                                  base_point=base_point if base_point != (0.0, 0.0) else (1.0, 0.5))
    if name == "exponential":
        return exponential_field(params.get("c", 0.4), base_point=base_point, cap=cap)
    if name == "user_polynomial":
        return user_polynomial_field(
            _records_to_poly(params["A1"]), _records_to_poly(params["A2"]),
            base_point=base_point, cap=cap,
        )
    raise ValueError(f"unknown field {name!r}; builtins: {sorted(BUILTIN_FIELDS)}")


def _records_to_poly(records):
    """[[m, n, re, im], ...] -> {(m, n): complex}."""
    if isinstance(records, dict):
        return {tuple(map(int, k.split(","))) if isinstance(k, str) else k: complex(v)
                for k, v in records.items()}
    return {(int(m), int(n)): complex(re, im) for m, n, re, im in records}


# ----------------------------------------------------------------------------
# admissibility data
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class GammaReport:
    Q1: float
    Q2: float
    Q3: float
    det2: float
    imA_norm: float
    B0: complex
    dzbarB: complex
    in_gamma: bool
    failed_conditions: tuple


def wirtinger_at(field):
    """(d_z B, d_zbar B) at the base point, read off the complexified series."""
    if field.B_taylor.cap < 1:
        raise ValueError("B_taylor must carry at least degree 1")
    return complex(field.B_taylor.coeffs[1, 0]), complex(field.B_taylor.coeffs[0, 1])


def compute_Q(field, tol=GAMMA_TOL):
    """Admissibility coefficients and membership verdict at the base point.

    Q1 = 1/4 Re[B (1 + dzB/dzbarB)] + 1/2 d1 Im A1
    Q2 = 1/4 Im[B dzB/dzbarB]       + 1/4 (d1 Im A2 + d2 Im A1)
    Q3 = 1/4 Re[B (1 - dzB/dzbarB)] + 1/2 d2 Im A2
    """
    x1, x2 = field.base_point
    B0 = complex(field.B_taylor.coeffs[0, 0])
    dzB, dzbarB = wirtinger_at(field)
    a1, a2 = field.A(np.float64(x1), np.float64(x2))
    imA_norm = float(np.hypot(complex(a1).imag, complex(a2).imag))
    d1a1, d2a1, d1a2, d2a2 = field.jac(np.float64(x1), np.float64(x2))

    failed = []
    if imA_norm > tol:
        failed.append("im_A_nonzero")
    if abs(B0) <= tol:
        failed.append("B_zero")
    if abs(dzbarB) <= tol:
        failed.append("dzbar_B_zero")
        rho = 0.0 + 0.0j
    else:
        rho = dzB / dzbarB
    Q1 = 0.25 * (B0 * (1.0 + rho)).real + 0.5 * complex(d1a1).imag
    Q2 = 0.25 * (B0 * rho).imag + 0.25 * (complex(d1a2).imag + complex(d2a1).imag)
    Q3 = 0.25 * (B0 * (1.0 - rho)).real + 0.5 * complex(d2a2).imag
    det2 = Q1 * Q3 - Q2 * Q2
    if not Q1 > tol:
        failed.append("Q1_nonpositive")
    if not det2 > tol:
        failed.append("det_nonpositive")
    return GammaReport(
        Q1=Q1, Q2=Q2, Q3=Q3, det2=det2, imA_norm=imA_norm, B0=B0,
        dzbarB=dzbarB, in_gamma=not failed, failed_conditions=tuple(failed),
    )


def gamma_scan(make_field_at, region, n, tol=GAMMA_TOL):
    """Per-gridpoint membership raster.

    ``make_field_at(x1, x2)`` must return a FieldSpec based at that point
    (a degree-2 Taylor is enough).  Returns (X1, X2, reports) with reports a
    2-D object array of GammaReport.
    """
    x1min, x1max, x2min, x2max = region
    xs = np.linspace(x1min, x1max, n)
    ys = np.linspace(x2min, x2max, n)
    reports = np.empty((n, n), dtype=object)
    for i, u in enumerate(xs):
        for j, v in enumerate(ys):
            reports[i, j] = compute_Q(make_field_at(u, v), tol=tol)
    return xs, ys, reports


# ----------------------------------------------------------------------------
# pointwise conditions (C1)/(C2) and compactness trends (H1)-(H3)
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionCheckConfig:
    epsilon: float
    C_const: float
    sample_region: tuple  # (x1min, x1max, x2min, x2max)
    sample_density: int = 64
    h: float = 1.0

    def validate(self, which):
        hi = 1.0 if which == "C1" else 0.5
        if not 0.0 < self.epsilon < hi:
            raise ValueError(f"epsilon for {which} must lie in (0, {hi})")


@dataclass(frozen=True)
class CheckVerdict:
    which: str
    sign: str
    passed: bool
    min_slack: float
    location: tuple


def check_C(field, cfg, which="C1", sign="+"):
    """Sampled check of |Im A|^2 <= ±eps * h * (Re|Im) B + C on a grid.

    A sampling check only; a passing verdict is not a certificate.
    """
    cfg.validate(which)
    x1min, x1max, x2min, x2max = cfg.sample_region
    xs = np.linspace(x1min, x1max, cfg.sample_density)
    ys = np.linspace(x2min, x2max, cfg.sample_density)
    X1, X2 = np.meshgrid(xs, ys, indexing="ij")
    a1, a2 = field.A(X1, X2)
    lhs = np.imag(a1) ** 2 + np.imag(a2) ** 2
    b = field.B(X1, X2)
    part = np.real(b) if which == "C1" else np.imag(b)
    s = 1.0 if sign == "+" else -1.0
    slack = s * cfg.epsilon * cfg.h * part + cfg.C_const - lhs
    k = np.unravel_index(np.argmin(slack), slack.shape)
    worst = float(slack[k])
    return CheckVerdict(
        which=which, sign=sign, passed=bool(worst >= -1e-12 * max(1.0, float(np.max(lhs)))),
        min_slack=worst, location=(float(X1[k]), float(X2[k])),
    )


@dataclass(frozen=True)
class HTrendReport:
    hypothesis: str
    values: tuple  # min over the circle, per radius
    diverging: bool
    growth_exponent: float
    sign: str = ""  # H1 only: detected sign of Re B at large radii


def check_H(field, radii, n_angles=64):
    """Heuristic divergence trends for the three compactness hypotheses.

    For each radius the relevant quantity (|Re B|, |Im B|, |Im A|) is
    minimised over ``n_angles`` directions; divergence is reported when the
    last three minima increase strictly by at least 5% each.
    """
    radii = np.asarray(sorted(radii), dtype=float)
    ang = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    ca, sa = np.cos(ang), np.sin(ang)
    mins = {"H1": [], "H2": [], "H3": []}
    maxs = {"H1": [], "H2": [], "H3": []}
    sign_votes = []
    for r in radii:
        x1, x2 = r * ca, r * sa
        b = field.B(x1, x2)
        a1, a2 = field.A(x1, x2)
        for hyp, q in (("H1", np.abs(np.real(b))), ("H2", np.abs(np.imag(b))),
                       ("H3", np.hypot(np.imag(a1), np.imag(a2)))):
            mins[hyp].append(float(np.min(q)))
            maxs[hyp].append(float(np.max(q)))
        rb = np.real(b)
        sign_votes.append("+" if np.all(rb > 0) else ("-" if np.all(rb < 0) else "mixed"))

    out = {}
    for hyp, vals in mins.items():
        v = np.array(vals)
        tail = v[-3:]
        # the min must both trend up and be genuinely nonzero on the circle
        # (a field vanishing on a ray keeps the min at float-noise level)
        significant = tail[-1] > 1e-8 * max(maxs[hyp][-1], 1e-300)
        diverging = bool(np.all(tail[1:] >= 1.05 * tail[:-1]) and tail[-1] > 0
                         and significant)
        pos = v > 0
        if np.count_nonzero(pos) >= 2:
            slope = np.polyfit(np.log(radii[pos]), np.log(v[pos]), 1)[0]
        else:
            slope = float("-inf")
        out[hyp] = HTrendReport(
            hypothesis=hyp, values=tuple(vals), diverging=diverging,
            growth_exponent=float(slope), sign=sign_votes[-1] if hyp == "H1" else "",
        )
    return out


# ----------------------------------------------------------------------------
# principal symbol and Poisson bracket
# ----------------------------------------------------------------------------

def weyl_bracket(field, x, xi, step=1e-4):
    """Principal symbol p(x, xi) and the canonical bracket {Re p, Im p}.

    p = |xi - Re A|^2 - |Im A|^2 - 2i <xi - Re A, Im A>; x-partials of the
    two real symbols are taken by central differences, xi-partials exactly.
    Bracket convention: {f, g} = grad_xi f . grad_x g - grad_x f . grad_xi g.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)

    def symbol(xp):
        a1, a2 = field.A(xp[0], xp[1])
        re = np.array([complex(a1).real, complex(a2).real])
        im = np.array([complex(a1).imag, complex(a2).imag])
        v = xi - re
        return v @ v - im @ im - 2j * (v @ im), v, im

    p, v, im = symbol(x)
    grad_xi_re = 2.0 * v
    grad_xi_im = -2.0 * im
    grad_x_re = np.zeros(2)
    grad_x_im = np.zeros(2)
    for k in range(2):
        e = np.zeros(2)
        e[k] = step
        pp, _, _ = symbol(x + e)
        pm, _, _ = symbol(x - e)
        grad_x_re[k] = (pp.real - pm.real) / (2 * step)
        grad_x_im[k] = (pp.imag - pm.imag) / (2 * step)
    bracket = float(grad_xi_re @ grad_x_im - grad_x_re @ grad_xi_im)
    return complex(p), bracket
