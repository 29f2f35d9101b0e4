"""Closed-form support-error rates for designs with orthogonal columns.

Each variant prunes a coordinate exactly when its effective measurement
falls inside a band of half-width ``psi``; the false-positive and
false-negative probabilities then follow from Gaussian tail integrals. The
error function is implemented in-house because these formulas are the
module's core contract.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .errors import DomainError, UndefinedRateWarning

_SQRT_PI = math.sqrt(math.pi)
_ERF_SERIES_CUT = 2.0
# trapezoid step for the erfc exponential sum; quadrature error ~ exp(-pi^2/h^2)
_ERFC_H = 0.5
_ERFC_TERMS = 14


def _erf_series(x):
    """erf via the non-alternating scaled Maclaurin series (|x| <= ~3)."""
    x = np.asarray(x, dtype=float)
    acc = np.zeros_like(x)
    term = np.ones_like(x)
    xsq = x * x
    for n in range(120):
        acc += term
        term = term * 2.0 * xsq / (2.0 * n + 3.0)
        if np.all(term <= 1e-18 * np.maximum(acc, 1e-300)):
            break
    return (2.0 / _SQRT_PI) * x * np.exp(-xsq) * acc


def _erfc_expsum(x):
    """erfc for x > 0 via a trapezoid sum of the Gaussian integral."""
    x = np.asarray(x, dtype=float)
    h = _ERFC_H
    xsq = x * x
    total = 1.0 / xsq
    for k in range(1, _ERFC_TERMS + 1):
        kh2 = (k * h) ** 2
        total = total + 2.0 * np.exp(-kh2) / (kh2 + xsq)
    out = (h * x / math.pi) * np.exp(-xsq) * total
    arg = 2.0 * math.pi * x / h
    small = arg < 700.0
    if np.any(small):
        correction = np.zeros_like(x)
        correction[small] = 2.0 / (1.0 - np.exp(arg[small]))
        out = out + correction
    return out


def erf(x):
    """Gauss error function, accurate to better than 1e-13 on [-6, 6]."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    ax = np.abs(x)
    small = ax <= _ERF_SERIES_CUT
    if small.any():
        out[small] = _erf_series(x[small])
    large = ~small
    if large.any():
        out[large] = np.sign(x[large]) * (1.0 - _erfc_expsum(ax[large]))
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class RateQuery:
    """One rate evaluation: true coefficient, column scale, noise, method."""

    xi_true: float
    rho: float
    sigma: float
    method: str
    param: float

    def __post_init__(self):
        if not self.rho > 0:
            raise DomainError("rho must be positive")
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")


def phi(xi, rho, sigma):
    """The strictly increasing fixed-point map from coefficient to band edge.

    ``phi(xi) = xi/2 + sign(xi) * sqrt(xi^2 + 4 sigma^2 / rho) / 2``; at zero
    the right-hand limit ``sigma * sqrt(1/rho)`` is returned so thresholds
    degrade gracefully as they vanish.
    """
    xi = np.asarray(xi, dtype=float)
    a = sigma**2 / rho
    sign = np.where(xi == 0, 1.0, np.sign(xi))
    out = xi / 2.0 + sign * np.sqrt(xi * xi + 4.0 * a) / 2.0
    return float(out) if out.ndim == 0 else out


def phi_inverse(v, rho, sigma):
    """Inverse of :func:`phi` outside the dead band ``|v| <= sigma/sqrt(rho)``."""
    v = np.asarray(v, dtype=float)
    a = sigma**2 / rho
    if np.any(np.abs(v) <= math.sqrt(a)):
        raise DomainError("value inside the dead band has no preimage")
    out = v - a / v
    return float(out) if out.ndim == 0 else out


def h_l(xi, sigma_xi_ii):
    """Marginal posterior density at zero for a coefficient."""
    xi = np.asarray(xi, dtype=float)
    var = np.asarray(sigma_xi_ii, dtype=float)
    out = np.exp(-0.5 * xi * xi / var) / np.sqrt(2.0 * np.pi * var)
    return float(out) if out.ndim == 0 else out


def _posterior_precision_orthogonal(xi_abs, rho, sigma):
    """Fixed-point marginal posterior precision as a function of ``|xi|``."""
    a = sigma**2 / rho
    return (np.sqrt(1.0 + 4.0 * a / xi_abs**2) + 1.0) / (2.0 * a)


def h_l_tilde(xi_abs, rho, sigma):
    """Density-at-zero criterion on the orthogonal fixed-point manifold.

    Strictly decreasing in ``|xi|``; diverges as the coefficient vanishes.
    """
    xi_abs = np.asarray(xi_abs, dtype=float)
    out = np.full_like(xi_abs, np.inf, dtype=float)
    pos = xi_abs > 0
    prec = _posterior_precision_orthogonal(xi_abs[pos], rho, sigma)
    out[pos] = np.sqrt(prec / (2.0 * np.pi)) * np.exp(-0.5 * xi_abs[pos] ** 2 * prec)
    return float(out) if out.ndim == 0 else out


def h_l_tilde_inverse(tau, rho, sigma, max_iter=200):
    """Invert :func:`h_l_tilde` by bisection on the coefficient magnitude."""
    if not tau > 0:
        raise DomainError("tau must be positive and inside the criterion range")
    scale = sigma / math.sqrt(rho)
    lo, hi = 1e-12 * scale, 1e12 * scale
    f_lo = h_l_tilde(lo, rho, sigma)
    f_hi = h_l_tilde(hi, rho, sigma)
    if not (f_hi < tau < f_lo):
        raise DomainError("tau outside the attainable criterion range")
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)  # bisect on the log scale
        if h_l_tilde(mid, rho, sigma) > tau:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return math.sqrt(lo * hi)


def h_map_tilde(xi_abs, rho, sigma):
    """Diagonal MAP criterion on the orthogonal fixed-point manifold."""
    xi_abs = np.asarray(xi_abs, dtype=float)
    a = sigma**2 / rho
    out = xi_abs**2 * (np.sqrt(1.0 + 4.0 * a / xi_abs**2) + 1.0) / (4.0 * a)
    return float(out) if out.ndim == 0 else out


def h_map_inverse(tau, rho, sigma):
    """Closed-form inverse of :func:`h_map_tilde` for ``tau >= 0``."""
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    return 2.0 * math.sqrt((sigma**2 / rho) * tau**2 / (1.0 + 2.0 * tau))


def psi(method, param, rho, sigma):
    """Effective pruning half-width for one method at one parameter value."""
    if method in ("ard", "ardvi"):
        alpha = 1.0 if method == "ard" else float(param)
        if alpha < 1:
            raise DomainError("alpha must be at least 1")
        return sigma * math.sqrt(alpha / rho)
    if method == "ardr":
        lam = float(param)
        if lam < 0:
            raise DomainError("lam must be nonnegative")
        return math.sqrt(sigma**2 / rho + lam * sigma**4 / rho**2)
    if method == "m_stsbl":
        tau = float(param)
        if tau < 0:
            raise DomainError("tau must be nonnegative")
        return float(phi(tau, rho, sigma))
    if method == "l_stsbl":
        return float(phi(h_l_tilde_inverse(float(param), rho, sigma), rho, sigma))
    if method == "map_stsbl":
        tau = float(param)
        if tau < 0:
            raise DomainError("tau must be nonnegative")
        return sigma * math.sqrt((2.0 * tau + 1.0) / rho)
    raise DomainError(f"unknown method {method!r}")


def fp_rate(query):
    """Probability that a truly zero coefficient survives as nonzero."""
    width = psi(query.method, query.param, query.rho, query.sigma)
    z = width * math.sqrt(query.rho) / (query.sigma * math.sqrt(2.0))
    return 1.0 - float(erf(z))


def fn_rate(query):
    """Probability that a truly nonzero coefficient is pruned.

    By convention the rate is reported as zero (with a warning) when the
    true coefficient is exactly zero, where the event is undefined.
    """
    if query.xi_true == 0:
        warnings.warn(
            "false-negative rate undefined for a zero coefficient; returning 0",
            UndefinedRateWarning,
        )
        return 0.0
    width = psi(query.method, query.param, query.rho, query.sigma)
    denom = query.sigma * math.sqrt(2.0 / query.rho)
    hi = float(erf((query.xi_true + width) / denom))
    lo = float(erf((query.xi_true - width) / denom))
    return 0.5 * (hi - lo)


def fp_fn_curve(method, param_grid, xi_true, rho, sigma):
    """Trace the (FP, FN) curve over a parameter grid."""
    out = np.empty((len(param_grid), 2))
    for i, param in enumerate(param_grid):
        q = RateQuery(xi_true=xi_true, rho=rho, sigma=sigma, method=method, param=param)
        out[i, 0] = fp_rate(q)
        out[i, 1] = fn_rate(q)
    return out


def criteria_relation(xi, sigma_xi_ii):
    """Both sides of the identity linking the density and MAP criteria.

    Returns ``(lhs, rhs)`` with ``lhs`` the posterior density at zero and
    ``rhs`` the exponentiated negative MAP statistic over the Gaussian
    normalizer; the two agree identically.
    """
    var = np.asarray(sigma_xi_ii, dtype=float)
    lhs = h_l(xi, sigma_xi_ii)
    h_map = 0.5 * np.asarray(xi, dtype=float) ** 2 / var
    rhs = np.exp(-h_map) / np.sqrt(2.0 * np.pi * var)
    return lhs, rhs


def large_rho_scaling(method, rho_grid, param, sigma):
    """Least-squares log-log slope of the band half-width against rho."""
    rho_grid = np.asarray(rho_grid, dtype=float)
    widths = np.array([psi(method, param, r, sigma) for r in rho_grid])
    slope = np.polyfit(np.log(rho_grid), np.log(widths), 1)[0]
    return float(slope)


def count_confidence_band(probs, n_trials, level=0.99):
    """Confidence band for the mean count of independent per-coordinate events.

    The per-trial count is a sum of independent Bernoulli variables with the
    given probabilities. For comfortably large totals a normal band on the
    trial mean is used; for small totals the band falls back to Poisson
    quantiles of the summed count, which dominate the Bernoulli sum.
    """
    probs = np.asarray(probs, dtype=float)
    mean = float(np.sum(probs))
    var = float(np.sum(probs * (1.0 - probs)))
    if var * n_trials >= 25.0:
        z = scipy.stats.norm.ppf(0.5 + level / 2.0)
        half = z * math.sqrt(var / n_trials)
        return mean - half, mean + half
    total = mean * n_trials
    lo = scipy.stats.poisson.ppf((1.0 - level) / 2.0, total) / n_trials
    hi = scipy.stats.poisson.ppf(0.5 + level / 2.0, total) / n_trials
    return float(lo), float(hi)
