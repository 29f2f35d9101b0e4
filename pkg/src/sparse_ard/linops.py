"""Dense linear-algebra kernels and weighted-l1 least-squares solvers.

Everything here is a pure function of its inputs. ``RegressionProblem``
freezes its arrays at construction, so values can be shared freely across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateWeightError,
    MaxIterationsError,
    NonFiniteError,
    SingularSystemError,
)

# Scale parameters below this are snapped to exact zero so support sets are
# well defined.
GAMMA_FLOOR = 1e-12

# Jitter escalation schedule for nearly singular symmetric solves, relative
# to the mean diagonal magnitude.
_JITTERS = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


def _as_readonly(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RegressionProblem:
    """A linear regression instance: design matrix, targets, noise variance.

    Parameters
    ----------
    theta : ndarray of shape (m, d)
        Design matrix.
    y : ndarray of shape (m,)
        Observed targets.
    sigma2 : float
        Noise variance, strictly positive.
    rho : ndarray of shape (d,), optional
        Squared column norms of ``theta``. Recomputed when omitted.
    """

    theta: np.ndarray
    y: np.ndarray
    sigma2: float
    rho: np.ndarray = None

    def __post_init__(self):
        theta = _as_readonly(self.theta)
        y = _as_readonly(self.y)
        if theta.ndim != 2:
            raise ValueError("theta must be a 2-d array")
        if y.ndim != 1 or y.shape[0] != theta.shape[0]:
            raise ValueError("y must be a vector with one entry per row of theta")
        if theta.shape[0] < 1 or theta.shape[1] < 1:
            raise ValueError("theta must have at least one row and one column")
        if not (np.isfinite(theta).all() and np.isfinite(y).all()):
            raise NonFiniteError("theta or y contains non-finite entries")
        if not np.isfinite(self.sigma2) or self.sigma2 <= 0:
            raise ValueError("sigma2 must be a positive finite scalar")
        rho = self.rho
        if rho is None:
            rho = np.einsum("ij,ij->j", theta, theta)
        rho = _as_readonly(rho)
        if rho.shape != (theta.shape[1],):
            raise ValueError("rho must have one entry per column of theta")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "rho", rho)

    @property
    def m(self):
        return self.theta.shape[0]

    @property
    def d(self):
        return self.theta.shape[1]

    @property
    def gram(self):
        """Cached Gram matrix theta^T theta."""
        cached = self.__dict__.get("_gram")
        if cached is None:
            cached = _as_readonly(self.theta.T @ self.theta)
            object.__setattr__(self, "_gram", cached)
        return cached

    @property
    def theta_t_y(self):
        """Cached theta^T y."""
        cached = self.__dict__.get("_tty")
        if cached is None:
            cached = _as_readonly(self.theta.T @ self.y)
            object.__setattr__(self, "_tty", cached)
        return cached

    def with_sigma2(self, sigma2):
        """Same data with a different noise variance; caches carry over."""
        other = RegressionProblem(self.theta, self.y, sigma2, rho=self.rho)
        for key in ("_gram", "_tty"):
            if key in self.__dict__:
                object.__setattr__(other, key, self.__dict__[key])
        return other

    def restrict(self, columns):
        """Sub-problem on a subset of columns; caches slice along."""
        columns = np.asarray(columns, dtype=int)
        other = RegressionProblem(
            self.theta[:, columns], self.y, self.sigma2, rho=self.rho[columns]
        )
        if "_gram" in self.__dict__:
            sub = _as_readonly(self.__dict__["_gram"][np.ix_(columns, columns)])
            object.__setattr__(other, "_gram", sub)
        if "_tty" in self.__dict__:
            object.__setattr__(other, "_tty", _as_readonly(self.__dict__["_tty"][columns]))
        return other


@dataclass(frozen=True)
class WeightedLassoSolution:
    """Minimizer of ||y - theta xi||^2 + sum_i eta_i |xi_i|."""

    xi: np.ndarray
    objective: float
    active_set: np.ndarray
    iterations: int


@dataclass(frozen=True)
class RescaledLasso:
    """Unit-weight reformulation of a weighted lasso.

    ``design`` carries the penalized columns divided by their weights; the
    solution ``zeta`` of the unit-weight problem maps back through
    :meth:`recover`. Coordinates with zero weight are listed separately and
    are handled unpenalized by the caller.
    """

    design: np.ndarray
    penalized: np.ndarray
    unpenalized: np.ndarray
    weights: np.ndarray

    def recover(self, zeta, d=None):
        zeta = np.asarray(zeta, dtype=float)
        d = len(self.weights) if d is None else d
        xi = np.zeros(d)
        xi[self.penalized] = zeta / self.weights[self.penalized]
        return xi


def _cholesky_jittered(a):
    """Cholesky factor of a symmetric matrix, escalating diagonal jitter."""
    a = np.asarray(a, dtype=float)
    scale = np.mean(np.abs(np.diag(a)))
    if scale == 0 or not np.isfinite(scale):
        scale = 1.0
    eye = np.eye(a.shape[0])
    for jitter in _JITTERS:
        try:
            return np.linalg.cholesky(a + (jitter * scale) * eye)
        except np.linalg.LinAlgError:
            continue
    raise SingularSystemError(
        "matrix stayed non positive definite after jitter escalation"
    )


def solve_spd_jittered(a, b):
    """Solve a x = b for symmetric positive (semi)definite a with jitter."""
    chol = _cholesky_jittered(a)
    z = scipy.linalg.solve_triangular(chol, b, lower=True)
    return scipy.linalg.solve_triangular(chol.T, z, lower=False)


def inv_spd_jittered(a):
    return solve_spd_jittered(a, np.eye(a.shape[0]))


def _validate_eta(problem, eta):
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (problem.d,):
        raise ValueError("eta must have one entry per column")
    if not np.isfinite(eta).all():
        raise NonFiniteError("eta contains non-finite entries")
    if (eta < 0).any():
        raise ValueError("eta must be nonnegative")
    return eta


def _objective(problem, xi, eta):
    resid = problem.y - problem.theta @ xi
    return float(resid @ resid + eta @ np.abs(xi))


def _kkt_satisfied(gram, tty, xi, eta, active):
    """KKT residual check for the weighted lasso at ``xi``."""
    grad = 2.0 * (gram @ xi - tty)
    tol = 1e-8 * max(1.0, float(np.max(np.abs(tty))))
    mask = np.zeros(len(xi), dtype=bool)
    mask[active] = True
    ok_active = np.all(np.abs(grad[mask] + eta[mask] * np.sign(xi[mask])) <= tol)
    ok_inactive = np.all(np.abs(grad[~mask]) <= eta[~mask] + max(1e-8, tol))
    return bool(ok_active and ok_inactive)


def _lars_weighted(gram, tty, eta, max_steps):
    """Homotopy (LARS with the lasso modification) for positive weights.

    Follows the piecewise-linear solution path of
    ``||y - theta xi||^2 + t * sum eta_i |xi_i|`` from the all-zero solution
    at large ``t`` down to ``t = 1``.
    """
    d = len(tty)
    u0 = 2.0 * tty
    t0 = float(np.max(np.abs(u0) / eta))
    if not np.isfinite(t0) or t0 <= 1.0:
        return np.zeros(d), 0
    active: list[int] = []
    signs: list[float] = []
    j0 = int(np.argmax(np.abs(u0) / eta))
    active.append(j0)
    signs.append(float(np.sign(u0[j0])))
    t_cur = t0
    for step in range(max_steps):
        idx = np.array(active, dtype=int)
        s = np.array(signs)
        waa = gram[np.ix_(idx, idx)]
        try:
            chol = _cholesky_jittered(waa)
            xi_hat = scipy.linalg.cho_solve((chol, True), tty[idx])
            direction = scipy.linalg.cho_solve((chol, True), eta[idx] * s / 2.0)
        except SingularSystemError:
            xi_hat = np.linalg.lstsq(waa, tty[idx], rcond=None)[0]
            direction = np.linalg.lstsq(waa, eta[idx] * s / 2.0, rcond=None)[0]
        # xi_A(t) = xi_hat - t * direction; inactive correlations are affine
        # in t: u_j(t) = a_j + t * g_j.
        a_vec = 2.0 * (tty - gram[:, idx] @ xi_hat)
        g_vec = 2.0 * (gram[:, idx] @ direction)
        guard = t_cur * (1.0 - 1e-12)

        best_t = 1.0
        best_event = None  # ("join", j, sign) or ("drop", position)
        inactive = np.ones(d, dtype=bool)
        inactive[idx] = False
        for j in np.flatnonzero(inactive):
            for sgn in (1.0, -1.0):
                denom = sgn * eta[j] - g_vec[j]
                if denom == 0.0:
                    continue
                t_ev = a_vec[j] / denom
                if best_t < t_ev < guard:
                    best_t = t_ev
                    best_event = ("join", j, sgn)
        for pos in range(len(idx)):
            if direction[pos] == 0.0:
                continue
            t_ev = xi_hat[pos] / direction[pos]
            if best_t < t_ev < guard:
                best_t = t_ev
                best_event = ("drop", pos)

        if best_event is None:
            xi = np.zeros(d)
            xi[idx] = xi_hat - direction
            # zero out sign-inconsistent round-off and re-polish on the
            # surviving support
            xi[idx[np.sign(xi[idx]) != s]] = 0.0
            live = np.flatnonzero(xi)
            if len(live) and len(live) < len(idx):
                waa = gram[np.ix_(live, live)]
                rhs = tty[live] - eta[live] * np.sign(xi[live]) / 2.0
                xi[live] = np.linalg.lstsq(waa, rhs, rcond=None)[0]
            return xi, step + 1
        if best_event[0] == "join":
            _, j, sgn = best_event
            active.append(int(j))
            signs.append(sgn)
        else:
            pos = best_event[1]
            del active[pos]
            del signs[pos]
            if not active:
                # unreachable in exact arithmetic (the origin satisfies the
                # stationarity conditions only above the entry scale); restart
                # defensively and let the step cap catch any cycling
                j0 = int(np.argmax(np.abs(u0) / eta))
                active.append(j0)
                signs.append(float(np.sign(u0[j0])))
        t_cur = best_t
    raise MaxIterationsError("weighted LARS exceeded its step cap")


def _coordinate_descent_weighted(gram, tty, eta, max_sweeps, tol=1e-13):
    d = len(tty)
    xi = np.zeros(d)
    q = tty.copy()  # q = theta^T y - W xi
    diag = np.diag(gram).copy()
    usable = diag > 0
    scale = max(1.0, float(np.max(np.abs(tty))))
    for sweep in range(max_sweeps):
        delta = 0.0
        for i in range(d):
            if not usable[i]:
                continue
            z = q[i] + diag[i] * xi[i]
            new = np.sign(z) * max(abs(z) - eta[i] / 2.0, 0.0) / diag[i]
            step = new - xi[i]
            if step != 0.0:
                q -= gram[:, i] * step
                xi[i] = new
                delta = max(delta, abs(step))
        if delta <= tol * scale:
            return xi, sweep + 1
    raise MaxIterationsError("coordinate descent exceeded its sweep cap")


def _solve_positive_weights(problem, eta, method, gram=None, tty=None):
    gram = problem.gram if gram is None else gram
    tty = problem.theta_t_y if tty is None else tty
    if method == "lars":
        xi, iters = _lars_weighted(gram, tty, eta, max_steps=10 * problem.d + 10)
    elif method == "coordinate_descent":
        xi, iters = _coordinate_descent_weighted(gram, tty, eta, max_sweeps=10_000)
    else:
        raise ValueError(f"unknown lasso method {method!r}")
    return xi, iters


def solve_weighted_lasso(problem, eta, method="lars"):
    """Global minimizer of ``||y - theta xi||^2 + sum_i eta_i |xi_i|``.

    Coordinates with ``eta_i = 0`` are unpenalized: they are projected out,
    the remaining coordinates are solved against the projected data, and the
    unpenalized block is recovered by least squares.

    Parameters
    ----------
    problem : RegressionProblem
    eta : ndarray of shape (d,)
        Nonnegative per-coordinate penalty weights.
    method : {"lars", "coordinate_descent"}
        LARS follows the exact solution path and is the default;
        coordinate descent is retained as an independent cross-check.
    """
    eta = _validate_eta(problem, eta)
    zero_w = np.flatnonzero(eta == 0)
    if len(zero_w) == 0:
        xi, iters = _solve_positive_weights(problem, eta, method)
    else:
        pen = np.flatnonzero(eta > 0)
        theta_u = problem.theta[:, zero_w]
        basis = scipy.linalg.orth(theta_u) if theta_u.size else np.zeros((problem.m, 0))
        y_proj = problem.y - basis @ (basis.T @ problem.y)
        xi = np.zeros(problem.d)
        iters = 0
        if len(pen):
            theta_p = problem.theta[:, pen]
            theta_p = theta_p - basis @ (basis.T @ theta_p)
            gram = theta_p.T @ theta_p
            tty = theta_p.T @ y_proj
            sub = RegressionProblem(theta_p, y_proj, problem.sigma2)
            xi_p, iters = _solve_positive_weights(sub, eta[pen], method, gram, tty)
            xi[pen] = xi_p
        resid = problem.y - problem.theta[:, pen] @ xi[pen] if len(pen) else problem.y
        xi[zero_w] = np.linalg.lstsq(theta_u, resid, rcond=None)[0]
    active = np.flatnonzero(xi)
    if not _kkt_satisfied(problem.gram, problem.theta_t_y, xi, eta, active):
        raise MaxIterationsError("lasso terminated without meeting the KKT tolerance")
    return WeightedLassoSolution(
        xi=_as_readonly(xi),
        objective=_objective(problem, xi, eta),
        active_set=_as_readonly(active, dtype=int),
        iterations=int(iters),
    )


def rescale_to_standard_lasso(problem, eta):
    """Reformulate the weighted lasso as a unit-weight lasso.

    Dividing penalized columns by their weights turns
    ``||y - theta xi||^2 + sum eta_i |xi_i|`` into
    ``||y - design zeta||^2 + ||zeta||_1`` with ``xi = zeta / eta`` on the
    penalized block.
    """
    eta = _validate_eta(problem, eta)
    penalized = np.flatnonzero(eta > 0)
    unpenalized = np.flatnonzero(eta == 0)
    if len(penalized) == 0:
        raise DegenerateWeightError("no coordinate has a positive weight to rescale")
    design = problem.theta[:, penalized] / eta[penalized]
    return RescaledLasso(
        design=_as_readonly(design),
        penalized=_as_readonly(penalized, dtype=int),
        unpenalized=_as_readonly(unpenalized, dtype=int),
        weights=_as_readonly(eta),
    )


def posterior_moments(problem, gamma):
    """Posterior mean and covariance of the coefficients given scales gamma.

    Coordinates with ``gamma_i = 0`` are deterministically zero: their row
    and column of the covariance and their mean entry are zero rather than
    obtained through an inverse.

    Returns
    -------
    (mu_xi, sigma_xi) : ndarray (d,), ndarray (d, d)
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (problem.d,):
        raise ValueError("gamma must have one entry per column")
    if not np.isfinite(gamma).all():
        raise NonFiniteError("gamma contains non-finite entries")
    if (gamma < 0).any():
        raise ValueError("gamma must be nonnegative")
    mu = np.zeros(problem.d)
    sigma = np.zeros((problem.d, problem.d))
    support = np.flatnonzero(gamma > 0)
    if len(support):
        a = problem.gram[np.ix_(support, support)] / problem.sigma2
        a = a + np.diag(1.0 / gamma[support])
        block = inv_spd_jittered(a)
        block = (block + block.T) / 2.0
        sigma[np.ix_(support, support)] = block
        mu[support] = block @ problem.theta_t_y[support] / problem.sigma2
    return mu, sigma
