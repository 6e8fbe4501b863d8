"""Nonlinear least-squares engine and power-law regression.

The Levenberg-Marquardt core here is deliberately small: damped
Gauss-Newton on an optionally log-transformed parameter vector, numeric
central-difference Jacobians by default, covariance from the Gauss-Newton
normal matrix at the solution scaled by the residual variance.

Damping schedule: each iteration first attempts the undamped Gauss-Newton
step (lambda = 0); on rejection the damping escalates to 1e-3 and then
multiplies by 10 per rejection, and divides by 10 after an accepted damped
step. The lambda = 0 fast path makes exactly-solvable problems (linear
models, polished starts) terminate in one or two exact steps instead of
creeping in by factors of the damping constant. Accepted steps never
increase the weighted residual norm.
"""

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConvergenceFailure, NumericalBreakdown

_EPS = float(np.finfo(np.float64).eps)
_DEFAULT_FD_STEP = _EPS ** (1.0 / 3.0)

_LAMBDA_INIT = 1e-3
_LAMBDA_MAX = 1e12

__all__ = [
    "FitProblem",
    "FitResult",
    "PowerLawFit",
    "levenberg_marquardt",
    "numeric_jacobian",
    "powerlaw_fit",
    "golden_section_maximize",
]


@dataclass(frozen=True)
class FitProblem:
    """Weighted least-squares problem specification.

    residual
        Maps a parameter vector to a residual vector (length >= number of
        parameters); the optimizer minimizes the weighted sum of squares.
    x0
        Initial parameter values.
    transforms
        Per-parameter tag, ``"identity"`` or ``"log"``; log-positive
        parameters are iterated in log space and therefore stay > 0.
    weights
        Optional positive multipliers applied to the residual vector
        (pass 1/sigma for standard errors on a per-point noise model).
    scales
        Typical magnitudes of identity-transformed parameters; used for
        finite-difference steps and the relative step-size stop criterion.
    jacobian
        Optional analytic Jacobian d(residual)/d(params) in the original
        parameter space; numeric central differences otherwise.
    """

    residual: Callable[[np.ndarray], np.ndarray]
    x0: Sequence[float]
    transforms: Sequence[str] | None = None
    weights: Sequence[float] | None = None
    scales: Sequence[float] | None = None
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    max_iter: int = 200
    gtol: float = 1e-10
    xtol: float = 1e-12
    fd_rel_step: float = _DEFAULT_FD_STEP

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=np.float64)
        if x0.ndim != 1 or x0.size == 0:
            raise ValueError("x0 must be a non-empty 1-D vector")
        if not np.all(np.isfinite(x0)):
            raise ValueError("x0 must be finite")
        tf = self._transforms()
        for tag, v in zip(tf, x0):
            if tag == "log" and not v > 0:
                raise ValueError("log-transformed parameters need positive x0")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if np.any(w <= 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be positive and finite")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def _transforms(self):
        n = len(np.asarray(self.x0))
        if self.transforms is None:
            return ("identity",) * n
        tf = tuple(self.transforms)
        if len(tf) != n:
            raise ValueError("transforms length must match x0")
        for tag in tf:
            if tag not in ("identity", "log"):
                raise ValueError(f"unknown transform {tag!r}")
        return tf


@dataclass
class FitResult:
    """Parameter estimates with uncertainties and convergence metadata."""

    estimates: np.ndarray
    stderr: np.ndarray
    covariance: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    param_names: tuple[str, ...] | None = None
    singular_values: np.ndarray | None = None
    residual_norm_history: list[float] = field(default_factory=list)
    message: str = ""

    def param(self, name):
        """(value, stderr) for a named parameter."""
        if self.param_names is None:
            raise KeyError("fit carries no parameter names")
        i = self.param_names.index(name)
        return float(self.estimates[i]), float(self.stderr[i])


@dataclass(frozen=True)
class PowerLawFit:
    """Result of a log-log linear regression y = amplitude * x**exponent."""

    amplitude: float
    exponent: float
    exponent_stderr: float
    r_squared: float
    amplitude_stderr: float = 0.0

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")


def numeric_jacobian(fn, params, rel_step=None, abs_floor=None):
    """Central-difference Jacobian of ``fn`` at ``params``.

    Per-parameter step h_i = max(rel_step*|p_i|, abs_floor_i); ``abs_floor``
    may be a scalar or a vector and defaults to ``rel_step``. Raises
    NumericalBreakdown if any probed evaluation is non-finite.
    """
    p = np.asarray(params, dtype=np.float64)
    rel = _DEFAULT_FD_STEP if rel_step is None else float(rel_step)
    if not rel > 0:
        raise ValueError("rel_step must be positive")
    floor = np.broadcast_to(
        np.asarray(rel if abs_floor is None else abs_floor, dtype=np.float64), p.shape
    )
    cols = []
    for i in range(p.size):
        h = max(rel * abs(p[i]), floor[i])
        forward = p.copy()
        forward[i] += h
        backward = p.copy()
        backward[i] -= h
        rf = np.asarray(fn(forward), dtype=np.float64)
        rb = np.asarray(fn(backward), dtype=np.float64)
        if not (np.all(np.isfinite(rf)) and np.all(np.isfinite(rb))):
            raise NumericalBreakdown(
                f"non-finite residual while differentiating parameter {i}"
            )
        cols.append((rf - rb) / (2.0 * h))
    return np.column_stack(cols)


def _theta_from_p(p, transforms):
    theta = np.array(p, dtype=np.float64)
    for i, tag in enumerate(transforms):
        if tag == "log":
            theta[i] = np.log(theta[i])
    return theta


def _p_from_theta(theta, transforms):
    p = np.array(theta, dtype=np.float64)
    for i, tag in enumerate(transforms):
        if tag == "log":
            p[i] = np.exp(p[i])
    return p


def levenberg_marquardt(problem: FitProblem) -> FitResult:
    """Minimize the weighted residual sum of squares of ``problem``.

    Raises ConvergenceFailure when the iteration limit is reached without
    meeting the gradient or step tolerance (the exception carries the best
    result so far) and NumericalBreakdown on non-finite residuals at the
    start or a normal matrix that stays singular at every damping level.
    """
    transforms = problem._transforms()
    weights = None if problem.weights is None else np.asarray(problem.weights, dtype=np.float64)
    theta = _theta_from_p(np.asarray(problem.x0, dtype=np.float64), transforms)
    npar = theta.size

    def eval_weighted(th):
        r = np.asarray(problem.residual(_p_from_theta(th, transforms)), dtype=np.float64)
        if weights is not None:
            r = r * weights
        return r

    def jac_weighted(th):
        if problem.jacobian is not None:
            p = _p_from_theta(th, transforms)
            J = np.asarray(problem.jacobian(p), dtype=np.float64)
            if not np.all(np.isfinite(J)):
                raise NumericalBreakdown("non-finite analytic Jacobian")
            # chain rule onto theta: dp/dtheta = p for log parameters
            dpdt = np.array([p[i] if transforms[i] == "log" else 1.0 for i in range(npar)])
            J = J * dpdt[np.newaxis, :]
            if weights is not None:
                J = J * weights[:, np.newaxis]
            return J
        scales = (
            np.ones(npar)
            if problem.scales is None
            else np.asarray(problem.scales, dtype=np.float64)
        )
        theta_scales = np.array(
            [1.0 if transforms[i] == "log" else scales[i] for i in range(npar)]
        )
        return numeric_jacobian(
            eval_weighted, th, problem.fd_rel_step, problem.fd_rel_step * theta_scales
        )

    r = eval_weighted(theta)
    if r.ndim != 1:
        r = r.ravel()
    if not np.all(np.isfinite(r)):
        raise NumericalBreakdown("residual is non-finite at the initial parameters")
    m = r.size
    if m < npar:
        raise ValueError(f"residual dimension {m} below parameter dimension {npar}")
    cost = float(r @ r)
    history = [np.sqrt(cost)]

    lam = 0.0
    n_accepted = 0
    converged = False
    message = ""
    step_scales = None
    if problem.scales is not None:
        s = np.asarray(problem.scales, dtype=np.float64)
        step_scales = np.array([1.0 if transforms[i] == "log" else s[i] for i in range(npar)])
    else:
        step_scales = np.ones(npar)

    for _ in range(problem.max_iter):
        J = jac_weighted(theta)
        g = J.T @ r
        if np.max(np.abs(g)) < problem.gtol:
            converged = True
            message = "gradient tolerance reached"
            break

        jtj = J.T @ J
        diag = np.diag(jtj).copy()
        dmax = diag.max()
        if not dmax > 0:
            raise NumericalBreakdown("Jacobian vanished away from a stationary point")
        diag = np.maximum(diag, 1e-14 * dmax)

        accepted = False
        last_finite_step = None
        lam_try = lam
        while True:
            a = jtj if lam_try == 0.0 else jtj + lam_try * np.diag(diag)
            try:
                step = np.linalg.solve(a, -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                last_finite_step = step
                theta_new = theta + step
                r_new = eval_weighted(theta_new)
                if np.all(np.isfinite(r_new)):
                    cost_new = float(r_new @ r_new)
                    if cost_new <= cost:
                        accepted = True
                        break
            lam_try = _LAMBDA_INIT if lam_try == 0.0 else lam_try * 10.0
            if lam_try > _LAMBDA_MAX:
                break

        if not accepted:
            if last_finite_step is None:
                raise NumericalBreakdown(
                    "normal matrix singular or residual non-finite at every "
                    f"damping level (residual norm {np.sqrt(cost):.6g})"
                )
            stall = np.max(np.abs(last_finite_step) / np.maximum(np.abs(theta), step_scales))
            if stall < 1e-8:
                # descent blocked only by floating-point rounding
                converged = True
                message = "progress limited by floating-point precision"
                break
            raise ConvergenceFailure(
                f"no descent direction accepted (residual norm {np.sqrt(cost):.6g})",
                result=_finalize(
                    problem, transforms, theta, r, cost, m, npar,
                    n_accepted, False, history, "stalled",
                ),
            )

        rel_step = np.max(np.abs(step) / np.maximum(np.abs(theta), step_scales))
        theta = theta_new
        r = r_new
        cost = cost_new
        n_accepted += 1
        history.append(np.sqrt(cost))
        lam = lam_try / 10.0
        if lam < 1e-12:
            lam = 0.0
        if rel_step < problem.xtol:
            converged = True
            message = "step tolerance reached"
            break

    result = _finalize(problem, transforms, theta, r, cost, m, npar, n_accepted, converged, history, message)
    if not converged:
        raise ConvergenceFailure(
            f"no convergence within {problem.max_iter} iterations "
            f"(residual norm {result.residual_norm:.6g})",
            result=result,
        )
    return result


def _finalize(problem, transforms, theta, r, cost, m, npar, iterations, converged, history, message):
    def eval_weighted(th):
        rr = np.asarray(problem.residual(_p_from_theta(th, transforms)), dtype=np.float64)
        if problem.weights is not None:
            rr = rr * np.asarray(problem.weights, dtype=np.float64)
        return rr

    scales = (
        np.ones(npar) if problem.scales is None else np.asarray(problem.scales, dtype=np.float64)
    )
    theta_scales = np.array([1.0 if transforms[i] == "log" else scales[i] for i in range(npar)])
    try:
        J = numeric_jacobian(eval_weighted, theta, problem.fd_rel_step, problem.fd_rel_step * theta_scales)
        _, sv, vt = np.linalg.svd(J, full_matrices=False)
    except (NumericalBreakdown, np.linalg.LinAlgError):
        sv = np.full(npar, np.nan)
        vt = np.eye(npar)
    dof = max(m - npar, 1)
    s2 = cost / dof
    cutoff = max(m, npar) * _EPS * (sv.max() if np.all(np.isfinite(sv)) else 1.0)
    inv_s2 = 1.0 / np.maximum(sv, cutoff) ** 2 if np.all(np.isfinite(sv)) else np.zeros(npar)
    cov_theta = (vt.T * (s2 * inv_s2)) @ vt
    p = _p_from_theta(theta, transforms)
    dpdt = np.array([p[i] if transforms[i] == "log" else 1.0 for i in range(npar)])
    cov = cov_theta * np.outer(dpdt, dpdt)
    cov = 0.5 * (cov + cov.T)
    stderr = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return FitResult(
        estimates=p,
        stderr=stderr,
        covariance=cov,
        residual_norm=float(np.sqrt(cost)),
        iterations=iterations,
        converged=converged,
        singular_values=sv,
        residual_norm_history=history,
        message=message,
    )


def powerlaw_fit(x, y, y_err=None, fixed_exponent=None) -> PowerLawFit:
    """Weighted linear least squares of ln(y) on ln(x).

    ``y_err`` (1-sigma, same units as y) enters through standard error
    propagation sigma_lny = y_err/y. ``fixed_exponent`` pins the slope and
    fits the amplitude alone. Data are sorted canonically first, so the
    result does not depend on input ordering. The exponent standard error
    is scaled by the reduced chi-square of the regression.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if x.size < 3:
        raise ValueError("power-law fit needs at least 3 points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law data must be strictly positive")
    if y_err is not None:
        y_err = np.asarray(y_err, dtype=np.float64)
        if y_err.shape != y.shape:
            raise ValueError("y_err must match y")
        if np.any(y_err <= 0):
            raise ValueError("y_err must be positive")

    order = np.lexsort((y, x))
    x = x[order]
    y = y[order]
    w = np.ones_like(x) if y_err is None else (y / y_err[order]) ** 2

    lx = np.log(x)
    ly = np.log(y)
    wsum = np.sum(w)
    xbar = np.sum(w * lx) / wsum
    ybar = np.sum(w * ly) / wsum
    dx = lx - xbar
    sxx = np.sum(w * dx * dx)

    if fixed_exponent is None:
        if sxx <= 0:
            raise ValueError("x values are all equal; exponent is undefined")
        slope = float(np.sum(w * dx * (ly - ybar)) / sxx)
        dof = x.size - 2
    else:
        slope = float(fixed_exponent)
        dof = x.size - 1
    intercept = ybar - slope * xbar

    resid = ly - (intercept + slope * lx)
    chi2 = float(np.sum(w * resid * resid))
    s2 = chi2 / dof
    sst = float(np.sum(w * (ly - ybar) ** 2))
    r2 = 1.0 if sst <= 0 else 1.0 - chi2 / sst

    if fixed_exponent is None:
        slope_err = float(np.sqrt(s2 / sxx))
        intercept_var = s2 * (1.0 / wsum + xbar * xbar / sxx)
    else:
        slope_err = 0.0
        intercept_var = s2 / wsum
    amplitude = float(np.exp(intercept))
    return PowerLawFit(
        amplitude=amplitude,
        exponent=slope,
        exponent_stderr=slope_err,
        r_squared=float(r2),
        amplitude_stderr=amplitude * float(np.sqrt(intercept_var)),
    )


def golden_section_maximize(fn, lo, hi, rel_tol=1e-12, max_iter=300):
    """Locate the maximizer of a unimodal ``fn`` on [lo, hi]."""
    if not hi > lo:
        raise ValueError("need hi > lo")
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if (b - a) <= rel_tol * max(abs(a), abs(b)):
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    xm = 0.5 * (a + b)
    return xm, fn(xm)
