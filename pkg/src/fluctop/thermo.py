"""Closed-form stationary thermodynamics of the quadratic-rate zero-range model.

With jump rate g(k) = k^2 the single-site stationary weights are
P(k) proportional to phi^k / (k!)^2, so the partition function is the
modified Bessel function I0 of 2*sqrt(phi) and the mean occupation is

    rho(phi) = sqrt(phi) * I1(2 sqrt(phi)) / I0(2 sqrt(phi)).

Everything downstream is written in terms of m = phi / 2: the coarse mobility
m(rho) inverts the relation above, the thermodynamic force is
-log(2 m(rho)), and the macroscopic equation is rho_t = (m(rho))_xx with
diffusivity D = dm/drho.  The identity E[g(k)] = phi pins the noise amplitude
used by the fluctuation estimator.

The Bessel pair is implemented here directly: an ascending power series below
``BESSEL_SWITCHOVER`` (all terms positive, no cancellation) and the standard
large-argument asymptotic expansion above it.  ``bessel_i1_over_i0`` works on
the scaled forms so the ratio never overflows.  Every function accepts scalars
or arrays.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import DomainError

# The series needs ~60 terms at the switchover; the asymptotic tail there is
# already below 1e-16 relative by ~18 terms.  Branch agreement is a tested
# property of this module.
BESSEL_SWITCHOVER = 30.0

_SERIES_MAX_TERMS = 200
_ASYM_MAX_TERMS = 40


def _as_array(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return arr


def _i0_i1_series(x):
    """Ascending series for (I0, I1); valid for any x >= 0, used below the
    switchover where term counts stay small."""
    q = x * x * 0.25
    t0 = np.ones_like(x)
    s0 = np.ones_like(x)
    t1 = np.ones_like(x)
    s1 = np.ones_like(x)
    for k in range(1, _SERIES_MAX_TERMS + 1):
        t0 = t0 * q / (k * k)
        s0 = s0 + t0
        t1 = t1 * q / (k * (k + 1))
        s1 = s1 + t1
        if np.all(t0 <= 1e-18 * s0):
            break
    return s0, 0.5 * x * s1


def _i0_i1_asymptotic_scaled(x):
    """Large-argument expansions of e^{-x} I0(x) and e^{-x} I1(x)."""
    s0 = np.ones_like(x)
    t0 = np.ones_like(x)
    s1 = np.ones_like(x)
    t1 = np.ones_like(x)
    for k in range(_ASYM_MAX_TERMS):
        two_k1 = 2 * k + 1
        # term ratio for I_nu: -(4 nu^2 - (2k+1)^2) / (8 x (k+1))
        t0 = t0 * (two_k1 * two_k1) / (8.0 * (k + 1) * x)
        t1 = t1 * (4.0 - two_k1 * two_k1) / (-8.0 * (k + 1) * x)
        s0 = s0 + t0
        s1 = s1 + t1
        if np.all(np.abs(t0) <= 1e-18 * s0):
            break
    pref = 1.0 / np.sqrt(2.0 * np.pi * x)
    return pref * s0, pref * s1


def _bessel_pair(x):
    """(I0, I1) on a 1-d array with the series/asymptotic branch split.
    Overflows to inf beyond x ~ 709 like exp itself; use the ratio entry
    point there."""
    if np.any(x < 0):
        raise DomainError("bessel argument must be non-negative")
    i0 = np.empty_like(x)
    i1 = np.empty_like(x)
    low = x <= BESSEL_SWITCHOVER
    if np.any(low):
        a, b = _i0_i1_series(x[low])
        i0[low] = a
        i1[low] = b
    if not np.all(low):
        hi = ~low
        a, b = _i0_i1_asymptotic_scaled(x[hi])
        scale = np.exp(x[hi])
        i0[hi] = a * scale
        i1[hi] = b * scale
    return i0, i1


def _shaped(flat, x):
    return flat.reshape(np.shape(x)) if np.ndim(x) else float(flat[0])


def bessel_i0(x):
    arr = np.atleast_1d(_as_array(x, "bessel argument")).ravel()
    i0, _ = _bessel_pair(arr)
    return _shaped(i0, x)


def bessel_i1(x):
    arr = np.atleast_1d(_as_array(x, "bessel argument")).ravel()
    _, i1 = _bessel_pair(arr)
    return _shaped(i1, x)


def bessel_i1_over_i0(x):
    """I1(x)/I0(x) computed on scaled forms; safe for arbitrarily large x."""
    arr = np.atleast_1d(_as_array(x, "bessel argument")).ravel()
    if np.any(arr < 0):
        raise DomainError("bessel argument must be non-negative")
    out = np.empty_like(arr)
    low = arr <= BESSEL_SWITCHOVER
    if np.any(low):
        a, b = _i0_i1_series(arr[low])
        out[low] = b / a
    if not np.all(low):
        hi = ~low
        a, b = _i0_i1_asymptotic_scaled(arr[hi])
        out[hi] = b / a
    return _shaped(out, x)


# ---------------------------------------------------------------------------
# density <-> mobility
# ---------------------------------------------------------------------------

def density_from_m(m):
    """Mean occupation at mobility m (fugacity phi = 2 m)."""
    arr = _as_array(m, "m")
    if np.any(arr < 0):
        raise DomainError("m must be non-negative")
    w = np.sqrt(2.0 * arr)
    out = w * bessel_i1_over_i0(2.0 * w)
    return out if np.ndim(m) else float(out)


_INVERT_TOL = 1e-10  # |rho(m_hat) - rho| guaranteed at most this


def m_from_density(rho, initial=None):
    """Invert density_from_m by bracketed bisection plus secant polish.

    rho(m) is strictly increasing with rho <= sqrt(2 m), so m = rho^2/2 and
    m = (rho+1)^2 always bracket the root.  ``initial`` (e.g. last step's
    value) short-circuits straight to the polish when it already brackets
    tightly; the full solve is the fallback.  Deterministic throughout.
    """
    arr = _as_array(rho, "rho")
    if np.any(arr <= 0):
        raise DomainError("density must be positive")
    shape = arr.shape
    arr = np.atleast_1d(arr)

    if initial is not None:
        guess = np.atleast_1d(np.asarray(initial, dtype=float))
        if guess.shape == arr.shape and np.all(guess > 0):
            m = _secant_polish(arr, guess.copy(), guess * (1.0 + 1e-7))
            if np.all(np.abs(density_from_m(m) - arr) <= _INVERT_TOL * np.maximum(1.0, arr)):
                out = m.reshape(shape)
                return out if np.ndim(rho) else float(out)

    lo = 0.5 * arr * arr
    hi = (arr + 1.0) ** 2
    # the analytic bracket cannot fail, but guard against it drifting
    for _ in range(60):
        bad = density_from_m(hi) <= arr
        if not np.any(bad):
            break
        hi[bad] *= 2.0
    for _ in range(26):
        mid = 0.5 * (lo + hi)
        below = density_from_m(mid) < arr
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    m = _secant_polish(arr, lo.copy(), hi.copy())
    resid = np.abs(density_from_m(m) - arr)
    bad = resid > _INVERT_TOL * np.maximum(1.0, arr)
    if np.any(bad):  # fall back to exhaustive bisection on stragglers
        lo_b = 0.5 * arr[bad] * arr[bad]
        hi_b = (arr[bad] + 1.0) ** 2
        for _ in range(90):
            mid = 0.5 * (lo_b + hi_b)
            below = density_from_m(mid) < arr[bad]
            lo_b = np.where(below, mid, lo_b)
            hi_b = np.where(below, hi_b, mid)
        m[bad] = 0.5 * (lo_b + hi_b)
    out = m.reshape(shape)
    return out if np.ndim(rho) else float(out)


def _secant_polish(rho, a, b):
    fa = density_from_m(a) - rho
    fb = density_from_m(b) - rho
    for _ in range(6):
        df = fb - fa
        step = np.where(df != 0.0, fb * (b - a) / np.where(df != 0.0, df, 1.0), 0.0)
        c = b - step
        c = np.maximum(c, 1e-300)  # keep iterates in the domain
        a, fa = b, fb
        b = c
        fb = density_from_m(b) - rho
    return b


def fugacity_from_density(rho):
    """phi = 2 m(rho); the stationary E[g(k)] at density rho."""
    return 2.0 * m_from_density(rho)


def thermodynamic_force(rho):
    """Variational derivative of the entropy: -log(2 m(rho))."""
    return -np.log(2.0 * m_from_density(rho))


def diffusivity(rho):
    """D = dm/drho by centered differences with one Richardson step.

    The derivative is smooth, so fourth-order extrapolation at a relative
    step of 1e-3 leaves truncation and roundoff both far below 1e-8 relative.
    """
    arr = _as_array(rho, "rho")
    if np.any(arr <= 0):
        raise DomainError("density must be positive")
    h = 1e-3 * arr
    d_h = (m_from_density(arr + h) - m_from_density(arr - h)) / (2.0 * h)
    d_h2 = (m_from_density(arr + 0.5 * h) - m_from_density(arr - 0.5 * h)) / h
    out = (4.0 * d_h2 - d_h) / 3.0
    return out if np.ndim(rho) else float(out)


# ---------------------------------------------------------------------------
# stationary occupation sampling
# ---------------------------------------------------------------------------

OCCUPATION_TAIL = 1e-14


def occupation_pmf(phi, tail=OCCUPATION_TAIL):
    """Stationary occupation probabilities at fugacity phi, truncated once the
    remaining mass is below ``tail`` (then renormalized)."""
    phi = float(phi)
    if not np.isfinite(phi) or phi < 0:
        raise DomainError(f"fugacity must be non-negative, got {phi}")
    if phi == 0.0:
        return np.array([1.0])
    terms = [1.0]
    t = 1.0
    k = 0
    while k < 600:
        k += 1
        t *= phi / (k * k)
        terms.append(t)
        # past the mode the tail is dominated by a geometric series with
        # ratio phi/(k+1)^2 < 1
        r = phi / ((k + 1) * (k + 1))
        if r < 1.0 and t * r / (1.0 - r) < tail * 1e-3 * sum(terms):
            break
    pmf = np.array(terms)
    return pmf / pmf.sum()


def occupation_cdf_matrix(phis, tail=OCCUPATION_TAIL):
    """Row-wise occupation CDFs for an array of per-site fugacities.

    Returns a (len(phis), K) float array whose rows end exactly at 1.0,
    ready for the compiled inverse-CDF sampler.
    """
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    if np.any(phis < 0) or not np.all(np.isfinite(phis)):
        raise DomainError("fugacities must be non-negative and finite")
    cols = [np.ones_like(phis)]
    t = np.ones_like(phis)
    total = np.ones_like(phis)
    k = 0
    while k < 600:
        k += 1
        t = t * phis / (k * k)
        total = total + t
        cols.append(t)
        kk = (k + 1) * (k + 1)
        r = phis / kk
        with np.errstate(over="ignore"):
            tail_est = np.where(r < 1.0, t * r / np.maximum(1.0 - r, 1e-300),
                                np.inf)
        if np.all(tail_est < tail * 1e-3 * total):
            break
    pmf = np.stack(cols, axis=1)
    cdf = np.cumsum(pmf, axis=1)
    cdf /= cdf[:, -1:]
    cdf[:, -1] = 1.0
    return cdf


def sample_occupation(phi, stream, size=None):
    """Draw stationary occupation numbers at fugacity phi."""
    n = 1 if size is None else int(size)
    cdf = occupation_cdf_matrix(np.full(n, float(phi)))
    occ = np.empty(n, dtype=np.int64)
    _kernels.sample_occupations(cdf, stream.state, occ)
    return int(occ[0]) if size is None else occ


# ---------------------------------------------------------------------------
# analytic operator entries (the quadrature oracle)
# ---------------------------------------------------------------------------

_GL_NODES = {}


def _gl_rule(order):
    if order not in _GL_NODES:
        x, w = np.polynomial.legendre.leggauss(order)
        _GL_NODES[order] = (x, w)
    return _GL_NODES[order]


def _gl_apply(f, lo, hi, order):
    x, w = _gl_rule(order)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return half * float(np.dot(w, f(mid + half * x)))


def _adaptive_gl(f, lo, hi, tol, depth=0):
    coarse = _gl_apply(f, lo, hi, 16)
    fine = _gl_apply(f, lo, hi, 32)
    if abs(fine - coarse) <= tol * max(1.0, abs(fine)) or depth >= 24:
        return fine
    mid = 0.5 * (lo + hi)
    half_tol = 0.5 * tol
    return (_adaptive_gl(f, lo, mid, half_tol, depth + 1)
            + _adaptive_gl(f, mid, hi, half_tol, depth + 1))


def analytic_operator_entry(profile, a, b, basis, tol=1e-12):
    """Exact weak-form entry: integral of m(rho(x)) gamma_a' gamma_b' dx.

    Hat derivatives are piecewise constant, so the entry reduces to cell
    integrals of m along the frozen profile, evaluated by adaptive
    Gauss-Legendre quadrature.  Entries with non-adjacent indices vanish
    identically and are returned as exact 0.0.
    """
    n = basis.n_basis
    delta = basis.delta
    sep = (a - b) % n
    if sep not in (0, 1, n - 1):
        return 0.0
    x_a = basis.node_position(a)

    def integrand(x):
        return m_from_density(profile(x))

    def cell(lo, hi):
        if profile.min_unclipped(lo, hi) <= 0.0:
            raise DomainError(
                f"profile dips to zero or below on [{lo:.4f}, {hi:.4f}]")
        return _adaptive_gl(integrand, lo, hi, tol)

    inv = 1.0 / (delta * delta)
    if sep == 0:
        return inv * (cell(x_a - delta, x_a) + cell(x_a, x_a + delta))
    if sep == 1:  # a = b + 1: shared cell is [x_b, x_a] = [x_a - delta, x_a]
        return -inv * cell(x_a - delta, x_a)
    return -inv * cell(x_a, x_a + delta)  # a = b - 1


def analytic_operator_triple(profile, b, basis, tol=1e-12):
    """Column b of the exact operator as (sub, diag, super).

    sub is the entry below the main diagonal, K[b+1, b]; super the one
    above, K[b-1, b].  The operator is symmetric, so the same triple also
    describes row b.
    """
    return (
        analytic_operator_entry(profile, b + 1, b, basis, tol),
        analytic_operator_entry(profile, b, b, basis, tol),
        analytic_operator_entry(profile, b - 1, b, basis, tol),
    )


class ThermoModel:
    """Bundle of the closed-form pieces; the object other modules accept."""

    density_from_m = staticmethod(density_from_m)
    m_from_density = staticmethod(m_from_density)
    fugacity_from_density = staticmethod(fugacity_from_density)
    thermodynamic_force = staticmethod(thermodynamic_force)
    diffusivity = staticmethod(diffusivity)
    occupation_pmf = staticmethod(occupation_pmf)
    occupation_cdf_matrix = staticmethod(occupation_cdf_matrix)
    sample_occupation = staticmethod(sample_occupation)
    analytic_operator_entry = staticmethod(analytic_operator_entry)
    analytic_operator_triple = staticmethod(analytic_operator_triple)
