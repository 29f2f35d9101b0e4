"""Evidence maximization for automatic relevance determination.

The fit loop alternates a gradient of the marginal log-determinant, a
weighted-l1 least-squares solve, and a closed-form scale update, optionally
re-estimating the noise variance between iterations. An inflation factor
``alpha`` multiplies the working noise variance; ``alpha = 1`` is plain ARD
and larger values strengthen the implicit concave regularizer.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ClampedCurvatureWarning, NonFiniteError
from .linops import (
    GAMMA_FLOOR,
    RegressionProblem,
    _as_readonly,
    _cholesky_jittered,
    posterior_moments,
    solve_weighted_lasso,
)

SIGMA2_FLOOR = 1e-12


@dataclass(frozen=True)
class FitOptions:
    """Knobs shared by all fit loops.

    ``tol`` is relative on the scale vector: the loop stops once
    ``||gamma_new - gamma||_inf <= tol * (1 + ||gamma||_inf)``.
    """

    max_iter: int = 200
    tol: float = 1e-6
    relearn_noise: bool = False
    gamma_init: np.ndarray | None = None
    solver: str = "lars"


@dataclass(frozen=True)
class ArdFit:
    """Converged state of an ARD-style fit.

    ``sigma2`` is the final uninflated noise variance. ``loss_trace`` holds
    the algorithm's working objective (log-determinant plus quadratic form,
    evaluated at the working, possibly inflated, variance) once at the
    initial scales and once per iteration.
    """

    gamma: np.ndarray
    mu_xi: np.ndarray
    sigma_xi_diag: np.ndarray
    sigma_xi_full: np.ndarray | None
    c: np.ndarray
    eta: np.ndarray
    sigma2: float
    loss_trace: np.ndarray
    iterations: int
    converged: bool

    @property
    def support(self):
        return np.flatnonzero(self.gamma > 0)


def default_gamma_init(problem):
    """Data-scaled starting scales, floored away from the all-zero point."""
    rho = problem.rho
    init = np.zeros(problem.d)
    ok = rho > 0
    init[ok] = (problem.theta_t_y[ok] / rho[ok]) ** 2
    return np.clip(init, 1e-6, None)


def _validate_gamma(problem, gamma):
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (problem.d,):
        raise ValueError("gamma must have one entry per column")
    if not np.isfinite(gamma).all():
        raise NonFiniteError("gamma contains non-finite entries")
    if (gamma < 0).any():
        raise ValueError("gamma must be nonnegative")
    return gamma


def compute_c(problem, gamma, alpha=1.0):
    """Diagonal of ``theta^T (alpha sigma^2 I + theta Gamma theta^T)^{-1} theta``.

    Uses the d x d (Woodbury) form when there are more rows than columns and
    the direct m x m form otherwise.
    """
    gamma = _validate_gamma(problem, gamma)
    if alpha < 1:
        raise ValueError("alpha must be at least 1")
    s2 = alpha * problem.sigma2
    support = np.flatnonzero(gamma > 0)
    if problem.m > problem.d:
        if len(support) == 0:
            c = problem.rho / s2
        else:
            root = np.sqrt(gamma[support])
            v = root[:, None] * problem.gram[support, :]
            inner = s2 * np.eye(len(support)) + root[:, None] * (
                problem.gram[np.ix_(support, support)] * root[None, :]
            )
            chol = _cholesky_jittered(inner)
            z = scipy.linalg.solve_triangular(chol, v, lower=True)
            c = (problem.rho - np.einsum("ij,ij->j", z, z)) / s2
    else:
        theta = problem.theta
        if len(support) == 0:
            cov_y = s2 * np.eye(problem.m)
        else:
            scaled = theta[:, support] * np.sqrt(gamma[support])[None, :]
            cov_y = s2 * np.eye(problem.m) + scaled @ scaled.T
        chol = _cholesky_jittered(cov_y)
        z = scipy.linalg.solve_triangular(chol, theta, lower=True)
        c = np.einsum("ij,ij->j", z, z)
    return np.maximum(c, 1e-300)


def negative_log_evidence(problem, gamma):
    """``log|Sigma_y| + y^T Sigma_y^{-1} y`` up to dropped additive constants."""
    gamma = _validate_gamma(problem, gamma)
    s2 = problem.sigma2
    support = np.flatnonzero(gamma > 0)
    m = problem.m
    if len(support) == 0:
        return float(m * np.log(s2) + problem.y @ problem.y / s2)
    if m > problem.d:
        root = np.sqrt(gamma[support])
        inner = s2 * np.eye(len(support)) + root[:, None] * (
            problem.gram[np.ix_(support, support)] * root[None, :]
        )
        chol = _cholesky_jittered(inner)
        logdet = (m - len(support)) * np.log(s2) + 2.0 * np.sum(np.log(np.diag(chol)))
        w = root * problem.theta_t_y[support]
        z = scipy.linalg.solve_triangular(chol, w, lower=True)
        quad = (problem.y @ problem.y - z @ z) / s2
    else:
        scaled = problem.theta[:, support] * np.sqrt(gamma[support])[None, :]
        cov_y = s2 * np.eye(m) + scaled @ scaled.T
        chol = _cholesky_jittered(cov_y)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        z = scipy.linalg.solve_triangular(chol, problem.y, lower=True)
        quad = float(z @ z)
    return float(logdet + quad)


def verify_loss_identity(problem, gamma):
    """Both sides of the quadratic-form identity behind the fit objective.

    Returns ``(lhs, rhs)`` where the left side is the quadratic form
    ``y^T Sigma_y^{-1} y`` and the right side is the penalized residual
    minimum attained at the posterior mean.
    """
    gamma = _validate_gamma(problem, gamma)
    s2 = problem.sigma2
    support = np.flatnonzero(gamma > 0)
    if len(support) == 0:
        lhs = float(problem.y @ problem.y / s2)
        return lhs, lhs
    scaled = problem.theta[:, support] * np.sqrt(gamma[support])[None, :]
    cov_y = s2 * np.eye(problem.m) + scaled @ scaled.T
    chol = _cholesky_jittered(cov_y)
    z = scipy.linalg.solve_triangular(chol, problem.y, lower=True)
    lhs = float(z @ z)
    mu, _ = posterior_moments(problem, gamma)
    resid = problem.y - problem.theta @ mu
    rhs = float(resid @ resid / s2 + np.sum(mu[support] ** 2 / gamma[support]))
    return lhs, rhs


def relearn_noise(problem, gamma, mu_xi, sigma_xi_diag):
    """Effective-degrees-of-freedom noise update, floored away from zero.

    A zero residual (exactly interpolated data) returns the floor rather
    than raising.
    """
    resid = problem.y - problem.theta @ mu_xi
    rss = float(resid @ resid)
    support = np.flatnonzero(gamma > 0)
    dof = float(np.sum(1.0 - sigma_xi_diag[support] / gamma[support]))
    denom = problem.m - dof
    if denom <= 0:
        denom = 1.0
    return max(rss / denom, SIGMA2_FLOOR)


def _fit_core(problem, options, alpha=1.0, c_extra=None, loss_extra=None):
    """Shared fit loop; hooks let a hierarchical prior modify the gradient.

    ``c_extra(gamma)`` is added to the log-determinant gradient and
    ``loss_extra(gamma)`` to the recorded objective.
    """
    options = options or FitOptions()
    if alpha < 1:
        raise ValueError("alpha must be at least 1")
    gamma = (
        default_gamma_init(problem)
        if options.gamma_init is None
        else _validate_gamma(problem, np.array(options.gamma_init, dtype=float))
    )
    sigma2 = problem.sigma2

    def working_loss(g, s2_now):
        base = negative_log_evidence(problem.with_sigma2(alpha * s2_now), g)
        return base + (loss_extra(g) if loss_extra is not None else 0.0)

    def modified_c(current, g):
        c = compute_c(current, g, alpha)
        if c_extra is not None:
            c = c + c_extra(g)
            if (c <= 0).any():
                warnings.warn(
                    "prior subgradient drove curvature nonpositive; clamped",
                    ClampedCurvatureWarning,
                )
                c = np.maximum(c, 1e-12)
        return c

    losses = [working_loss(gamma, sigma2)]
    converged = False
    iterations = 0
    for _ in range(options.max_iter):
        iterations += 1
        current = problem.with_sigma2(sigma2)
        c = modified_c(current, gamma)
        eta = 2.0 * alpha * sigma2 * np.sqrt(c)
        sol = solve_weighted_lasso(current, eta, method=options.solver)
        gamma_new = np.abs(sol.xi) / np.sqrt(c)
        gamma_new[gamma_new < GAMMA_FLOOR] = 0.0
        if options.relearn_noise:
            inflated = problem.with_sigma2(alpha * sigma2)
            mu, sig = posterior_moments(inflated, gamma_new)
            sigma2 = relearn_noise(inflated, gamma_new, mu, np.diag(sig))
        losses.append(working_loss(gamma_new, sigma2))
        if not np.isfinite(losses[-1]):
            raise NonFiniteError("fit objective became non-finite")
        gap = float(np.max(np.abs(gamma_new - gamma))) if problem.d else 0.0
        done = gap <= options.tol * (1.0 + float(np.max(np.abs(gamma), initial=0.0)))
        gamma = gamma_new
        if done:
            converged = True
            break

    working = problem.with_sigma2(alpha * sigma2)
    c = modified_c(problem.with_sigma2(sigma2), gamma)
    eta = 2.0 * alpha * sigma2 * np.sqrt(c)
    mu, sigma_full = posterior_moments(working, gamma)
    return ArdFit(
        gamma=_as_readonly(gamma),
        mu_xi=_as_readonly(mu),
        sigma_xi_diag=_as_readonly(np.diag(sigma_full)),
        sigma_xi_full=_as_readonly(sigma_full),
        c=_as_readonly(c),
        eta=_as_readonly(eta),
        sigma2=float(sigma2),
        loss_trace=_as_readonly(np.array(losses)),
        iterations=iterations,
        converged=converged,
    )


def fit_ard(problem, options=None):
    """Fit plain ARD: iterate gradient, weighted lasso, and scale updates.

    Parameters
    ----------
    problem : RegressionProblem
    options : FitOptions, optional
        ``relearn_noise`` re-estimates the noise variance after each scale
        update; ``gamma_init`` overrides the data-scaled default.

    Returns
    -------
    ArdFit
        ``converged`` is False when the iteration cap was reached, in which
        case the best iterate is still returned.
    """
    return _fit_core(problem, options, alpha=1.0)
