"""Truncated power series in one and two complex variables.

Everything downstream (phase construction, transport recursion, pseudomode
evaluation) runs on two small immutable containers:

* ``UniSeries`` -- a polynomial c0 + c1*z + ... + cD*z**D,
* ``BiSeries``  -- a polynomial in (z, w) truncated at total degree D,

with complex binary64 coefficients.  Truncation at total degree D is the
quotient by the ideal of monomials of degree > D, so ring identities
(associativity, distributivity, exp/reciprocal defining relations) hold
coefficient-wise up to floating-point roundoff.  Differentiation is the one
operation that loses information: the cap stays D but coefficients of degree
D become untrustworthy (the dropped degree-(D+1) tail would have fed them).
Callers that chain derivatives must track their own trusted degree; the
solver in :mod:`cmag_wkb.wkb` does exactly that.

Storage is dense: a (D+1) x (D+1) complex array with the a+b > D corner kept
identically zero.  At the default cap D = 24 that is at most 325 active
monomials, far cheaper than a sparse map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numpy.polynomial import polynomial as _npoly

DEFAULT_CAP = 24

#: relative tolerance for the exact-division remainder check
DIV_RTOL = 1e-10


class SeriesStructureError(ValueError):
    """Operands disagree on cap or expansion center."""


class SeriesDivisionError(ZeroDivisionError):
    """Reciprocal of a series whose constant term vanishes."""


class CurveDivisionError(ValueError):
    """exact_divide_by_curve applied to a series not vanishing on the curve."""


def _mask(cap):
    a = np.arange(cap + 1)
    return (a[:, None] + a[None, :]) <= cap


def _trunc_inplace(c, cap):
    c[~_mask(cap)] = 0.0
    return c


# ----------------------------------------------------------------------------
# univariate series
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class UniSeries:
    """Coefficients c[k] of z**k, 0 <= k <= cap; length is always cap+1."""

    coeffs: np.ndarray
    cap: int

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.cap + 1,):
            raise SeriesStructureError(
                f"UniSeries needs cap+1={self.cap + 1} coefficients, got {c.shape}"
            )
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # -- constructors ---------------------------------------------------
    @staticmethod
    def zeros(cap):
        return UniSeries(np.zeros(cap + 1, dtype=complex), cap)

    @staticmethod
    def constant(value, cap):
        c = np.zeros(cap + 1, dtype=complex)
        c[0] = value
        return UniSeries(c, cap)

    @staticmethod
    def variable(cap):
        c = np.zeros(cap + 1, dtype=complex)
        c[1] = 1.0
        return UniSeries(c, cap)

    # -- ring operations -------------------------------------------------
    def _check(self, other):
        if self.cap != other.cap:
            raise SeriesStructureError(
                f"cap mismatch: {self.cap} vs {other.cap}"
            )

    def __add__(self, other):
        if np.isscalar(other):
            c = self.coeffs.copy()
            c[0] += other
            return UniSeries(c, self.cap)
        self._check(other)
        return UniSeries(self.coeffs + other.coeffs, self.cap)

    __radd__ = __add__

    def __neg__(self):
        return UniSeries(-self.coeffs, self.cap)

    def __sub__(self, other):
        return self + (-other if not np.isscalar(other) else -other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            return UniSeries(self.coeffs * other, self.cap)
        self._check(other)
        return UniSeries(
            np.convolve(self.coeffs, other.coeffs)[: self.cap + 1], self.cap
        )

    __rmul__ = __mul__

    def differentiate(self):
        c = np.zeros(self.cap + 1, dtype=complex)
        c[:-1] = self.coeffs[1:] * np.arange(1, self.cap + 1)
        return UniSeries(c, self.cap)

    def antiderivative(self):
        """Term-wise integral vanishing at 0; the top coefficient is dropped."""
        c = np.zeros(self.cap + 1, dtype=complex)
        c[1:] = self.coeffs[:-1] / np.arange(1, self.cap + 1)
        out = UniSeries(c, self.cap)
        object.__setattr__(out, "truncation_dropped", bool(self.coeffs[-1] != 0))
        return out

    def exp(self):
        c0 = self.coeffs[0]
        n = self.coeffs.copy()
        n[0] = 0.0
        out = np.zeros(self.cap + 1, dtype=complex)
        out[0] = 1.0
        term = out.copy()
        for k in range(1, self.cap + 1):
            term = np.convolve(term, n)[: self.cap + 1] / k
            out += term
        return UniSeries(np.exp(c0) * out, self.cap)

    def reciprocal(self, name="series"):
        c0 = self.coeffs[0]
        if abs(c0) == 0.0:
            raise SeriesDivisionError(f"reciprocal of {name}: constant term is 0")
        n = self.coeffs / c0
        n[0] = 0.0
        out = np.zeros(self.cap + 1, dtype=complex)
        out[0] = 1.0
        term = out.copy()
        for _ in range(self.cap):
            term = np.convolve(term, -n)[: self.cap + 1]
            out += term
        return UniSeries(out / c0, self.cap)

    def __call__(self, z):
        return _npoly.polyval(z, self.coeffs)

    def as_biseries(self, center=(0.0, 0.0)):
        """Embed as a w-independent BiSeries (same cap)."""
        c = np.zeros((self.cap + 1, self.cap + 1), dtype=complex)
        c[:, 0] = self.coeffs
        return BiSeries(c, self.cap, center)

    def max_abs(self):
        return float(np.max(np.abs(self.coeffs)))


# ----------------------------------------------------------------------------
# bivariate series
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class BiSeries:
    """Dense triangular coefficients c[a, b] of z**a w**b with a+b <= cap."""

    coeffs: np.ndarray
    cap: int
    center: tuple = (0.0 + 0.0j, 0.0 + 0.0j)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.cap + 1, self.cap + 1):
            raise SeriesStructureError(
                f"BiSeries cap {self.cap} needs shape {(self.cap + 1,) * 2}, got {c.shape}"
            )
        c = _trunc_inplace(c.copy(), self.cap)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "center", (complex(self.center[0]), complex(self.center[1])))

    # -- constructors ---------------------------------------------------
    @staticmethod
    def zeros(cap, center=(0.0, 0.0)):
        return BiSeries(np.zeros((cap + 1, cap + 1), dtype=complex), cap, center)

    @staticmethod
    def constant(value, cap, center=(0.0, 0.0)):
        c = np.zeros((cap + 1, cap + 1), dtype=complex)
        c[0, 0] = value
        return BiSeries(c, cap, center)

    @staticmethod
    def from_terms(terms, cap, center=(0.0, 0.0)):
        """terms: iterable of (a, b, coefficient)."""
        c = np.zeros((cap + 1, cap + 1), dtype=complex)
        for a, b, v in terms:
            if a + b > cap:
                raise SeriesStructureError(f"term z^{a} w^{b} exceeds cap {cap}")
            c[a, b] = v
        return BiSeries(c, cap, center)

    # -- structure ------------------------------------------------------
    def _check(self, other):
        if self.cap != other.cap:
            raise SeriesStructureError(f"cap mismatch: {self.cap} vs {other.cap}")
        if self.center != other.center:
            raise SeriesStructureError(
                f"center mismatch: {self.center} vs {other.center}"
            )

    def __getitem__(self, ab):
        return self.coeffs[ab]

    def max_abs(self):
        return float(np.max(np.abs(self.coeffs)))

    # -- ring operations -------------------------------------------------
    def __add__(self, other):
        if np.isscalar(other):
            c = self.coeffs.copy()
            c[0, 0] += other
            return BiSeries(c, self.cap, self.center)
        self._check(other)
        return BiSeries(self.coeffs + other.coeffs, self.cap, self.center)

    __radd__ = __add__

    def __neg__(self):
        return BiSeries(-self.coeffs, self.cap, self.center)

    def __sub__(self, other):
        if np.isscalar(other):
            return self + (-other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            return BiSeries(self.coeffs * other, self.cap, self.center)
        self._check(other)
        D = self.cap
        out = np.zeros((D + 1, D + 1), dtype=complex)
        x, y = self.coeffs, other.coeffs
        nz = np.argwhere(x != 0)
        for a, b in nz:
            out[a:, b:] += x[a, b] * y[: D + 1 - a, : D + 1 - b]
        return BiSeries(_trunc_inplace(out, D), D, self.center)

    __rmul__ = __mul__

    def differentiate(self, var):
        """Formal partial; the (now untrustworthy) degree-cap row is reported zero."""
        D = self.cap
        c = np.zeros((D + 1, D + 1), dtype=complex)
        if var == "z":
            c[:-1, :] = self.coeffs[1:, :] * np.arange(1, D + 1)[:, None]
        elif var == "w":
            c[:, :-1] = self.coeffs[:, 1:] * np.arange(1, D + 1)[None, :]
        else:
            raise ValueError(f"var must be 'z' or 'w', got {var!r}")
        return BiSeries(_trunc_inplace(c, D), D, self.center)

    def antiderivative(self, var):
        """Term-wise integral vanishing at the center; top-degree input terms drop."""
        D = self.cap
        c = np.zeros((D + 1, D + 1), dtype=complex)
        if var == "z":
            c[1:, :] = self.coeffs[:-1, :] / np.arange(1, D + 1)[:, None]
            dropped = np.any(self.coeffs[_top_diag(D)] != 0)
        elif var == "w":
            c[:, 1:] = self.coeffs[:, :-1] / np.arange(1, D + 1)[None, :]
            dropped = np.any(self.coeffs[_top_diag(D)] != 0)
        else:
            raise ValueError(f"var must be 'z' or 'w', got {var!r}")
        out = BiSeries(_trunc_inplace(c, D), D, self.center)
        object.__setattr__(out, "truncation_dropped", bool(dropped))
        return out

    def exp(self):
        c0 = self.coeffs[0, 0]
        n = BiSeries(self.coeffs - c0 * _e00(self.cap), self.cap, self.center)
        out = BiSeries.constant(1.0, self.cap, self.center)
        term = out
        for k in range(1, self.cap + 1):
            term = term * n * (1.0 / k)
            out = out + term
        return np.exp(c0) * out

    def reciprocal(self, name="series"):
        c0 = self.coeffs[0, 0]
        if abs(c0) == 0.0:
            raise SeriesDivisionError(f"reciprocal of {name}: constant term is 0")
        n = BiSeries((self.coeffs / c0) - _e00(self.cap), self.cap, self.center)
        out = BiSeries.constant(1.0, self.cap, self.center)
        term = out
        for _ in range(self.cap):
            term = term * (-1.0 * n)
            out = out + term
        return out * (1.0 / c0)

    # -- evaluation -------------------------------------------------------
    def evaluate(self, z, w):
        """Horner-scheme value at (z, w); accepts arrays (local coordinates)."""
        return _npoly.polyval2d(np.asarray(z, dtype=complex), np.asarray(w, dtype=complex), self.coeffs)

    def evaluate_with_tail(self, z, w):
        """Value plus a crude tail bound from the last retained diagonal.

        The bound is sum_{a+b=cap} |c_ab| |z|^a |w|^b * rho/(1-rho) with
        rho = max(|z|, |w|); it is only meaningful for rho < 1 and is left
        to the caller to judge.
        """
        val = self.evaluate(z, w)
        az, aw = np.abs(z), np.abs(w)
        rho = np.maximum(az, aw)
        D = self.cap
        diag = 0.0
        for a in range(D + 1):
            c = self.coeffs[a, D - a]
            if c != 0:
                diag = diag + np.abs(c) * az**a * aw ** (D - a)
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = np.where(rho < 1.0, diag * rho / np.maximum(1.0 - rho, 1e-300), np.inf)
        return val, tail

    def realify(self, x1, x2):
        """Value on the real slice w = conj(z), z = x1 + i x2 (local coords)."""
        z = np.asarray(x1, dtype=float) + 1j * np.asarray(x2, dtype=float)
        return self.evaluate(z, np.conj(z))

    # -- serialization ----------------------------------------------------
    def to_records(self):
        """Structured-text form: bit-exact hex floats, sorted exponents."""
        recs = []
        for a in range(self.cap + 1):
            for b in range(self.cap + 1 - a):
                v = self.coeffs[a, b]
                if v != 0:
                    recs.append([int(a), int(b), float(v.real).hex(), float(v.imag).hex()])
        return {
            "cap": int(self.cap),
            "center": [
                [float(self.center[0].real).hex(), float(self.center[0].imag).hex()],
                [float(self.center[1].real).hex(), float(self.center[1].imag).hex()],
            ],
            "coeffs": recs,
        }

    @staticmethod
    def from_records(d):
        cap = int(d["cap"])
        (cr, ci), (dr, di) = d["center"]
        center = (
            complex(float.fromhex(cr), float.fromhex(ci)),
            complex(float.fromhex(dr), float.fromhex(di)),
        )
        c = np.zeros((cap + 1, cap + 1), dtype=complex)
        for a, b, re, im in d["coeffs"]:
            c[int(a), int(b)] = complex(float.fromhex(re), float.fromhex(im))
        return BiSeries(c, cap, center)


def _e00(cap):
    e = np.zeros((cap + 1, cap + 1), dtype=complex)
    e[0, 0] = 1.0
    return e


def _top_diag(cap):
    a = np.arange(cap + 1)
    return (a[:, None] + a[None, :]) == cap


# ----------------------------------------------------------------------------
# named operations (module-level API mirroring the series toolkit)
# ----------------------------------------------------------------------------

def algebra(op, a, b):
    """add | sub | mul | scale on series (scale: b is a scalar)."""
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "scale":
        return a * b
    raise ValueError(f"unknown op {op!r}")


def differentiate(a, var):
    return a.differentiate(var)


def antiderivative(a, var="z"):
    if isinstance(a, UniSeries):
        return a.antiderivative()
    return a.antiderivative(var)


def exp_series(a):
    return a.exp()


def reciprocal(a, name="series"):
    return a.reciprocal(name)


def compose_w(a, w_of_z):
    """Restrict to the curve: z ↦ a(z, w(z)).

    ``w_of_z`` must vanish at the center (w(0) = 0) so the composition keeps
    the expansion point.  Horner in w with truncated univariate products.
    """
    if a.cap != w_of_z.cap:
        raise SeriesStructureError(f"cap mismatch: {a.cap} vs {w_of_z.cap}")
    if w_of_z.coeffs[0] != 0:
        raise ValueError("compose_w: w(0) != 0 breaks the expansion center")
    D = a.cap
    res = np.zeros(D + 1, dtype=complex)
    wc = w_of_z.coeffs
    for b in range(D, -1, -1):
        res = np.convolve(res, wc)[: D + 1]
        res += a.coeffs[:, b]
    return UniSeries(res, D)


def degree_scale(series_list, floor=1e-30):
    """Cumulative per-degree magnitude of a family of series.

    Entry k is the largest coefficient magnitude of total degree <= k over
    all inputs; identity checks compare residual coefficients of degree k
    against rtol times this scale, which tracks the factor-of-|w-coeff|^k
    growth of roundoff along curves with small convergence radius.
    """
    caps = {s.cap for s in series_list}
    if len(caps) != 1:
        raise SeriesStructureError("degree_scale: mixed caps")
    cap = caps.pop()
    out = np.full(cap + 1, floor)
    a = np.arange(cap + 1)
    for s in series_list:
        if isinstance(s, UniSeries):
            out = np.maximum(out, np.abs(s.coeffs))
        else:
            deg = a[:, None] + a[None, :]
            mags = np.abs(s.coeffs)
            for k in range(cap + 1):
                m = float(np.max(np.where(deg == k, mags, 0.0)))
                out[k] = max(out[k], m)
    return np.maximum.accumulate(out)


def abs_compose_w(a, w_of_z):
    """Per-degree magnitude bound for compose_w: |a| composed with |w|."""
    absa = BiSeries(np.abs(a.coeffs), a.cap, a.center)
    absw = UniSeries(np.abs(w_of_z.coeffs), w_of_z.cap)
    return compose_w(absa, absw)


def exact_divide_by_curve(num, w_of_z, rtol=DIV_RTOL):
    """Factor (w - w(z)) out of a series vanishing on the curve w = w(z).

    Synthetic division in w.  The remainder (the restriction of ``num`` to
    the curve) must vanish: its degree-k coefficient is compared against
    rtol times the degree-k magnitude of the quantities entering the
    recursion (numerator and |w|*|q| products), so genuine low-degree
    non-vanishing is caught while high-degree roundoff along a small-radius
    curve is tolerated.
    """
    if num.cap != w_of_z.cap:
        raise SeriesStructureError(f"cap mismatch: {num.cap} vs {w_of_z.cap}")
    D = num.cap
    wc = w_of_z.coeffs
    awc = np.abs(wc)
    q = np.zeros((D + 1, D + 1), dtype=complex)
    mag = np.zeros(D + 1)  # per-degree magnitude flowing through the recursion
    qb = np.zeros(D + 1, dtype=complex)
    ab = np.zeros(D + 1)
    for b in range(D - 1, -1, -1):
        qb = num.coeffs[:, b + 1] + np.convolve(wc, qb)[: D + 1]
        ab = np.abs(num.coeffs[:, b + 1]) + np.convolve(awc, ab)[: D + 1]
        q[:, b] = qb
        mag = np.maximum(mag, ab)
    rem = np.abs(num.coeffs[:, 0] + np.convolve(wc, q[:, 0])[: D + 1])
    scale = np.maximum.accumulate(
        np.maximum(mag, np.maximum(np.abs(num.coeffs[:, 0]), num.max_abs() * 1e-6))
    )
    bad = rem > rtol * np.maximum(scale, 1e-300)
    if np.any(bad):
        k = int(np.argmax(rem / np.maximum(scale, 1e-300)))
        raise CurveDivisionError(
            f"series does not vanish on the curve: remainder {rem[k]:.3e} at "
            f"z-degree {k} exceeds {rtol:.1e} x scale {scale[k]:.3e}"
        )
    return BiSeries(_trunc_inplace(q, D), D, num.center)


def evaluate(a, z, w):
    return a.evaluate_with_tail(z, w)


def realify(a, x):
    return a.realify(x[0], x[1])


def implicit_w(Btilde, rtol=1e-11):
    """The unique curve w(z), w(0)=0, with B̃(z, w(z)) constant up to cap.

    Degree-by-degree Newton correction: the coefficient of z^n in the
    restriction depends on w_n only through ∂_w B̃(0,0) * w_n, so one sweep
    over n = 1..cap zeroes the restriction exactly (up to roundoff).
    """
    dwB0 = Btilde.coeffs[0, 1]
    if abs(dwB0) == 0.0:
        raise SeriesDivisionError(
            "not in the admissible set: the w-derivative of the field series "
            "vanishes at the base point"
        )
    D = Btilde.cap
    wz = UniSeries.zeros(D)
    for n in range(1, D + 1):
        r = compose_w(Btilde, wz).coeffs.copy()
        r[0] -= Btilde.coeffs[0, 0]
        c = wz.coeffs.copy()
        c[n] -= r[n] / dwB0
        wz = UniSeries(c, D)
    resid = np.abs(compose_w(Btilde, wz).coeffs - Btilde.coeffs[0, 0] * np.eye(1, D + 1)[0])
    scale = np.maximum.accumulate(np.maximum(abs_compose_w(Btilde, wz).coeffs.real,
                                             Btilde.max_abs() * 1e-6))
    if np.any(resid > rtol * np.maximum(scale, 1e-300)):
        k = int(np.argmax(resid / np.maximum(scale, 1e-300)))
        raise CurveDivisionError(
            f"implicit curve solve did not converge: residual {resid[k]:.3e} "
            f"at degree {k} (scale {scale[k]:.3e})"
        )
    return wz


# ----------------------------------------------------------------------------
# curve integrals and divided differences (segment integrals as antiderivatives)
# ----------------------------------------------------------------------------

def curve_integral_w(g, w_of_z):
    """∫ over the segment [w(z), w] of g(z, u) du, as a BiSeries.

    Holomorphic integrand, so the segment integral is the w-antiderivative
    evaluated between the limits; no quadrature enters the symbolic core.
    """
    G = g.antiderivative("w")
    return G - compose_w(G, w_of_z).as_biseries(G.center)


def t_average(g, w_of_z):
    """∫_0^1 g(z, w(z) + t(w - w(z))) dt as a BiSeries.

    Computed exactly via the divided-difference identity
    ∫_0^1 g(...) dt = [G(z,w) - G(z,w(z))] / (w - w(z)),  G = ∫ g dw.
    """
    return exact_divide_by_curve(curve_integral_w(g, w_of_z), w_of_z)


def complexify_real_taylor(breal, cap, center=(0.0, 0.0)):
    """Turn real-Taylor data b[m, n] (coefficients of y1^m y2^n) into the
    series of the complexified function a((z+w)/2, (z-w)/(2i))."""
    breal = np.asarray(breal, dtype=complex)
    y1 = BiSeries.from_terms([(1, 0, 0.5), (0, 1, 0.5)], cap, center)
    y2 = BiSeries.from_terms([(1, 0, 1 / 2j), (0, 1, -1 / 2j)], cap, center)
    y1p = [BiSeries.constant(1.0, cap, center)]
    y2p = [BiSeries.constant(1.0, cap, center)]
    for _ in range(cap):
        y1p.append(y1p[-1] * y1)
        y2p.append(y2p[-1] * y2)
    out = BiSeries.zeros(cap, center)
    m_max = min(breal.shape[0] - 1, cap)
    for m in range(m_max + 1):
        for n in range(min(breal.shape[1] - 1, cap - m) + 1):
            if breal[m, n] != 0:
                out = out + breal[m, n] * (y1p[m] * y2p[n])
    return out


def real_gradient_series(a):
    """Complexified partials (∂_{x1} a)~, (∂_{x2} a)~ of a realified series."""
    az, aw = a.differentiate("z"), a.differentiate("w")
    return az + aw, 1j * (az - aw)
