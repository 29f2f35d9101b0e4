"""Sparsity-enhancing variants built on the ARD core.

Two regularization-based methods (variance inflation, hierarchical prior on
the scales) find the sparse model as the fixed point of a single iterative
run. Three thresholding methods (by coefficient magnitude, by posterior
density at zero, by a diagonal MAP criterion) alternate a full ARD fit with
a pruning pass and recurse on the surviving columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .ard import ArdFit, FitOptions, _fit_core, compute_c, fit_ard
from .linops import _as_readonly

_METHODS = ("ard", "ardvi", "ardr", "m_stsbl", "l_stsbl", "map_stsbl")


@dataclass(frozen=True)
class SparsifierSpec:
    """Which variant to run and the parameter it consumes.

    Only the parameters relevant to ``method`` are consulted: ``alpha`` for
    variance inflation, ``lam``/``eta_width`` for the hierarchical prior,
    ``tau`` for the thresholding methods.
    """

    method: str
    alpha: float = 1.0
    lam: float = 0.0
    eta_width: float = math.inf
    tau: float = 0.0

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "ardvi" and self.alpha < 1:
            raise ValueError("alpha must be at least 1")
        if self.method == "ardr":
            if self.lam < 0:
                raise ValueError("lam must be nonnegative")
            if not self.eta_width > 0:
                raise ValueError("eta_width must be positive")
        if self.method.endswith("stsbl") and self.tau < 0:
            raise ValueError("tau must be nonnegative")

    @property
    def param(self):
        """The scalar swept for this method (None for plain ARD)."""
        if self.method == "ard":
            return None
        if self.method == "ardvi":
            return self.alpha
        if self.method == "ardr":
            return self.lam
        return self.tau


@dataclass(frozen=True)
class SparseFit:
    """A sparsified fit plus the pruning history that produced it.

    ``pruned_history`` lists ``(depth, indices)`` pairs in original column
    numbering; the support of ``base.gamma`` is disjoint from their union.
    """

    base: ArdFit
    pruned_history: tuple
    recursion_depth: int
    spec: SparsifierSpec

    @property
    def support(self):
        return self.base.support


def _as_sparse(fit, spec, history=(), depth=0):
    return SparseFit(
        base=fit, pruned_history=tuple(history), recursion_depth=depth, spec=spec
    )


def fit_ardvi(problem, alpha, options=None):
    """ARD with the working noise variance inflated by ``alpha`` >= 1.

    ``alpha = 1`` runs the identical computation to :func:`fit_ard`. When the
    noise is re-learned, the inflation multiplies the re-learned value at
    every iteration.
    """
    fit = _fit_core(problem, options, alpha=float(alpha))
    return _as_sparse(fit, SparsifierSpec("ardvi", alpha=float(alpha)))


def _g_value(gamma, lam, eta_width):
    return lam * np.minimum(gamma, eta_width)


def _g_slope(gamma, lam, eta_width):
    # left derivative at the kink, zero beyond it
    return np.where(gamma <= eta_width, lam, 0.0)


def fit_ardr(problem, lam, eta_width=math.inf, f=None, options=None, base_fit=None):
    """ARD with a sparsity-promoting prior on the scales.

    The concave prior term ``g(gamma_i) = lam * min(gamma_i, eta_width)``
    adds its subgradient to the log-determinant gradient; with a constant
    convex part ``f`` the scale update keeps the plain-ARD closed form. The
    run starts from a plain ARD fixed point (``base_fit`` short-circuits
    that initial fit).
    """
    if f is not None:
        raise ValueError("only a constant convex part f is supported")
    lam = float(lam)
    eta_width = float(eta_width)
    spec = SparsifierSpec("ardr", lam=lam, eta_width=eta_width)
    options = options or FitOptions()
    base = base_fit if base_fit is not None else fit_ard(problem, options)
    base = base.base if isinstance(base, SparseFit) else base

    def c_extra(gamma):
        return _g_slope(gamma, lam, eta_width)

    def loss_extra(gamma):
        return float(np.sum(_g_value(gamma, lam, eta_width)))

    restart = replace(options, gamma_init=base.gamma)
    fit = _fit_core(
        problem.with_sigma2(base.sigma2),
        restart,
        alpha=1.0,
        c_extra=c_extra,
        loss_extra=loss_extra,
    )
    return _as_sparse(fit, spec)


def _embed_fit(fit, kept, problem, alpha=1.0):
    """Express a fit on a column subset in full-width coordinates."""
    d = problem.d
    kept = np.asarray(kept, dtype=int)
    gamma = np.zeros(d)
    gamma[kept] = fit.gamma
    mu = np.zeros(d)
    mu[kept] = fit.mu_xi
    sigma_full = np.zeros((d, d))
    sigma_full[np.ix_(kept, kept)] = fit.sigma_xi_full
    current = problem.with_sigma2(fit.sigma2)
    c = compute_c(current, gamma, alpha)
    eta = 2.0 * alpha * fit.sigma2 * np.sqrt(c)
    return ArdFit(
        gamma=_as_readonly(gamma),
        mu_xi=_as_readonly(mu),
        sigma_xi_diag=_as_readonly(np.diag(sigma_full)),
        sigma_xi_full=_as_readonly(sigma_full),
        c=_as_readonly(c),
        eta=_as_readonly(eta),
        sigma2=fit.sigma2,
        loss_trace=fit.loss_trace,
        iterations=fit.iterations,
        converged=fit.converged,
    )


def _empty_fit(problem):
    d = problem.d
    zeros = np.zeros(d)
    c = compute_c(problem, zeros)
    return ArdFit(
        gamma=_as_readonly(zeros),
        mu_xi=_as_readonly(zeros.copy()),
        sigma_xi_diag=_as_readonly(zeros.copy()),
        sigma_xi_full=_as_readonly(np.zeros((d, d))),
        c=_as_readonly(c),
        eta=_as_readonly(2.0 * problem.sigma2 * np.sqrt(c)),
        sigma2=problem.sigma2,
        loss_trace=_as_readonly(np.array([])),
        iterations=0,
        converged=True,
    )


def _prune_mask_magnitude(fit, tau):
    return np.abs(fit.mu_xi) < tau


def _prune_mask_likelihood(fit, tau):
    mask = np.zeros(len(fit.gamma), dtype=bool)
    zero = fit.gamma == 0
    mask[zero] = True  # deterministic zeros have infinite density at zero
    live = ~zero
    var = fit.sigma_xi_diag[live]
    dens = np.exp(-0.5 * fit.mu_xi[live] ** 2 / var) / np.sqrt(2.0 * np.pi * var)
    mask[live] = dens > tau
    return mask


def _prune_mask_map(fit, tau):
    mask = np.zeros(len(fit.gamma), dtype=bool)
    live = fit.gamma > 0
    stat = 0.5 * fit.mu_xi[live] ** 2 / fit.sigma_xi_diag[live]
    mask[live] = stat < tau
    zero_stat = 0.0  # deterministic zeros carry a zero MAP statistic
    mask[~live] = zero_stat < tau
    return mask


def _threshold_fit(problem, tau, options, spec, prune_mask, base_fit=None):
    options = options or FitOptions()
    d = problem.d
    kept = np.arange(d)
    history = []
    depth = 0
    current = problem
    base = base_fit.base if isinstance(base_fit, SparseFit) else base_fit
    fit = base if base is not None else fit_ard(current, options)
    while True:
        mask = prune_mask(fit, tau)
        if not mask.any():
            break
        history.append((depth, _as_readonly(kept[mask], dtype=int)))
        kept = kept[~mask]
        depth += 1
        if len(kept) == 0:
            return _as_sparse(_empty_fit(problem), spec, history, depth)
        current = problem.restrict(kept)
        fit = fit_ard(current, options)
    if len(kept) == d:
        return _as_sparse(fit, spec, history, depth)
    return _as_sparse(_embed_fit(fit, kept, problem), spec, history, depth)


def fit_m_stsbl(problem, tau, options=None, base_fit=None):
    """Sequential thresholding on coefficient magnitude.

    After each ARD fit, coordinates with ``|mean| < tau`` are pruned and the
    variant recurses on the surviving columns until nothing is pruned. An
    empty support is a valid outcome.
    """
    spec = SparsifierSpec("m_stsbl", tau=float(tau))
    return _threshold_fit(
        problem, float(tau), options, spec, _prune_mask_magnitude, base_fit
    )


def fit_l_stsbl(problem, tau, options=None, base_fit=None):
    """Sequential thresholding on the posterior density at zero.

    Coordinates whose marginal posterior density evaluated at zero exceeds
    ``tau`` are pruned; deterministic zeros count as infinitely dense.
    """
    spec = SparsifierSpec("l_stsbl", tau=float(tau))
    return _threshold_fit(
        problem, float(tau), options, spec, _prune_mask_likelihood, base_fit
    )


def fit_map_stsbl(problem, tau, options=None, base_fit=None):
    """Sequential thresholding on the diagonal MAP statistic.

    Coordinates with ``mean^2 / (2 var) < tau`` (strict) are pruned; the
    cross-coordinate coupling of the posterior precision is ignored by
    design, which decouples the pruning decisions.
    """
    spec = SparsifierSpec("map_stsbl", tau=float(tau))
    return _threshold_fit(problem, float(tau), options, spec, _prune_mask_map, base_fit)


def fit(problem, spec, options=None, base_fit=None):
    """Dispatch a fit by :class:`SparsifierSpec`."""
    if spec.method == "ard":
        base = base_fit.base if isinstance(base_fit, SparseFit) else base_fit
        out = base if base is not None else fit_ard(problem, options)
        return _as_sparse(out, spec)
    if spec.method == "ardvi":
        return fit_ardvi(problem, spec.alpha, options)
    if spec.method == "ardr":
        return fit_ardr(
            problem, spec.lam, spec.eta_width, options=options, base_fit=base_fit
        )
    if spec.method == "m_stsbl":
        return fit_m_stsbl(problem, spec.tau, options, base_fit)
    if spec.method == "l_stsbl":
        return fit_l_stsbl(problem, spec.tau, options, base_fit)
    if spec.method == "map_stsbl":
        return fit_map_stsbl(problem, spec.tau, options, base_fit)
    raise ValueError(f"unknown method {spec.method!r}")


def verify_pruning_band(problem, lam, options=None, fit=None):
    """Check the converse pruning band for the linear hierarchical prior.

    On a design with orthogonal columns, every coordinate whose effective
    measurement ``theta_i^T y / rho_i`` lies inside the band
    ``sqrt(sigma^2 / rho_i + lam * sigma^4 / rho_i^2)`` must be exactly zero
    at the converged fixed point. Returns True iff no counterexample exists.
    """
    if fit is None:
        fit = fit_ardr(problem, lam, eta_width=math.inf, options=options)
    gamma = fit.base.gamma if isinstance(fit, SparseFit) else fit.gamma
    rho = problem.rho
    beta_hat = problem.theta_t_y / rho
    band = np.sqrt(problem.sigma2 / rho + lam * problem.sigma2**2 / rho**2)
    inside = np.abs(beta_hat) <= band
    return bool(np.all(gamma[inside] == 0.0))
