"""Damped Gauss-Newton (Levenberg-Marquardt) least squares with box bounds.

Minimises ``sum(w * (y - f(x, p))**2)``. Damping follows Marquardt's diagonal
scaling and is divided by ``DAMPING_DOWN`` after an accepted step and
multiplied by ``DAMPING_UP`` after a rejected one. The default starting
damping is 0, i.e. a plain Gauss-Newton step is tried first; the first
rejection switches to ``FALLBACK_DAMPING``. Bounds are enforced by
projecting every trial point onto the box; a parameter sitting on a bound
with the gradient pointing outward is held there for the step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

DAMPING_UP = 10.0
DAMPING_DOWN = 10.0
MAX_DAMPING = 1e16
FALLBACK_DAMPING = 1e-3
SINGULAR_CONDITION = 1e14
# parameters this close (relative) to a bound are treated as sitting on it
BOUND_RTOL = 1e-12


@dataclass
class FitProblem:
    """Observations, a model ``f(x, params)`` and the parameter box.

    ``jacobian(x, params)`` returns ``df/dparams`` with shape
    ``(len(x), len(params))``; without it central differences are used.
    """

    x: np.ndarray
    y: np.ndarray
    model: Callable[[np.ndarray, np.ndarray], np.ndarray]
    initial: np.ndarray
    weights: np.ndarray | None = None
    jacobian: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    fixed: np.ndarray | None = None
    names: Sequence[str] | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.initial = np.array(self.initial, dtype=float)
        n_p = self.initial.size
        self.weights = (np.ones_like(self.y) if self.weights is None
                        else np.asarray(self.weights, dtype=float))
        self.lower = np.full(n_p, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n_p, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        self.fixed = np.zeros(n_p, bool) if self.fixed is None else np.asarray(self.fixed, dtype=bool)
        if self.names is None:
            self.names = tuple(f"p{i}" for i in range(n_p))
        if self.weights.shape != self.y.shape:
            raise ValueError("weights and observations differ in shape")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite and non-negative")
        if not (self.lower.shape == self.upper.shape == self.fixed.shape == (n_p,)) or len(self.names) != n_p:
            raise ValueError("bounds, fixed mask and names must match the parameter count")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound above upper bound")
        if np.any(self.initial < self.lower) or np.any(self.initial > self.upper):
            raise ValueError("initial parameters lie outside the bounds")
        n_free = int((~self.fixed).sum())
        if int((self.weights > 0).sum()) < n_free:
            raise ValueError(
                f"{int((self.weights > 0).sum())} weighted observations for {n_free} free parameters")


@dataclass
class FitResult:
    parameters: np.ndarray
    covariance: np.ndarray
    reduced_chi2: float
    n_iterations: int
    converged: bool
    residuals: np.ndarray
    names: tuple[str, ...]
    chi2: float = math.nan
    gradient_norm: float = math.nan
    condition_number: float = math.nan
    singular: bool = False
    message: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))

    def value(self, name: str) -> float:
        return float(self.parameters[self.names.index(name)])

    def error(self, name: str) -> float:
        return float(self.errors[self.names.index(name)])

    def as_dict(self) -> dict[str, tuple[float, float]]:
        return {n: (float(v), float(e)) for n, v, e in zip(self.names, self.parameters, self.errors)}


def numerical_jacobian(model, x, params, rel_step: float = 6e-6) -> np.ndarray:
    """Central-difference Jacobian of ``model(x, params)``."""
    params = np.asarray(params, dtype=float)
    cols = []
    for i in range(params.size):
        h = rel_step * max(abs(params[i]), 1.0)
        up, dn = params.copy(), params.copy()
        up[i] += h
        dn[i] -= h
        cols.append((model(x, up) - model(x, dn)) / (2 * h))
    return np.stack(cols, axis=-1)


def _bound_tol(bound):
    return BOUND_RTOL * np.maximum(1.0, np.abs(np.where(np.isfinite(bound), bound, 0.0)))


def _active(g, theta, lower, upper):
    """Parameters pinned at a bound by a gradient pointing out of the box."""
    at_lo = (theta - lower <= _bound_tol(lower)) & (g > 0)
    at_hi = (upper - theta <= _bound_tol(upper)) & (g < 0)
    return at_lo | at_hi


def _projected(g, theta, lower, upper):
    g = g.copy()
    g[_active(g, theta, lower, upper)] = 0.0
    return g


def _snap(theta, lower, upper):
    theta = np.clip(theta, lower, upper)
    theta = np.where(theta - lower <= _bound_tol(lower), lower, theta)
    return np.where(upper - theta <= _bound_tol(upper), upper, theta)


def transform_covariance(cov, T):
    """``T @ cov @ T.T`` keeping infinite variances infinite.

    An output inherits infinite variance from any input it depends on.
    """
    cov = np.asarray(cov, dtype=float)
    T = np.asarray(T, dtype=float)
    loose = np.isinf(np.diag(cov))
    out = T @ np.where(np.isinf(cov), 0.0, cov) @ T.T
    hit = np.any(T[:, loose] != 0, axis=1)
    out[hit, hit] = math.inf
    return out


def _identified_inverse(A):
    """Inverse of ``A`` on its well-conditioned eigenspace.

    Returns the covariance and a mask of parameters with a visible component
    along a dropped (near-null) direction; their variance is unbounded.
    """
    w, V = np.linalg.eigh(A)
    top = w.max(initial=0.0)
    keep = w > top / SINGULAR_CONDITION if top > 0 else np.zeros(w.size, bool)
    cov = (V[:, keep] / w[keep]) @ V[:, keep].T
    loose = np.any(np.abs(V[:, ~keep]) > 1e-6, axis=1)
    return cov, loose


def lm_minimize(problem: FitProblem, max_iter: int = 200, gradient_tol: float = 1e-8,
                step_tol: float = 1e-9, initial_damping: float = 0.0,
                absolute_weights: bool = False) -> FitResult:
    """Levenberg-Marquardt fit of ``problem``.

    Stops as converged once the scaled projected gradient
    ``max_i |g_i| / (||J_i|| * ||sqrt(w) y||)`` is at most ``gradient_tol`` and
    the last accepted step changed the parameters by at most ``step_tol``
    (relative), or the residual vanished. Otherwise the best point found is
    returned with ``converged=False``.

    The covariance is the inverse Gauss-Newton normal matrix scaled by the
    reduced chi-square, unless ``absolute_weights`` says the weights are true
    inverse variances, in which case it is left unscaled. If the normal
    matrix is singular, parameters the data cannot pin down get infinite
    variance and ``singular`` is set.
    """
    pr = problem
    free = ~pr.fixed
    lo, hi = pr.lower[free], pr.upper[free]
    sw = np.sqrt(pr.weights)
    y_norm = float(np.linalg.norm(sw * pr.y)) or 1.0
    jac_fn = pr.jacobian or (lambda x, p: numerical_jacobian(pr.model, x, p))

    full = pr.initial.copy()

    def with_free(v):
        out = full.copy()
        out[free] = v
        return out

    def residual(v):
        return sw * (pr.model(pr.x, with_free(v)) - pr.y)

    def jacobian(v):
        return sw[:, None] * np.asarray(jac_fn(pr.x, with_free(v)))[:, free]

    theta = _snap(full[free].copy(), lo, hi)
    r = residual(theta)
    if not np.all(np.isfinite(r)):
        raise ValueError("model is not finite at the initial parameters")
    cost = float(r @ r)
    J = jacobian(theta)
    lam = float(initial_damping)
    last_step = math.inf
    it = 0
    converged = False
    message = "maximum iterations reached"

    def scaled_gradient(J, r, theta):
        g = _projected(J.T @ r, theta, lo, hi)
        cn = np.linalg.norm(J, axis=0)
        cn[cn == 0] = 1.0
        return g, float(np.max(np.abs(g) / cn) / y_norm) if g.size else 0.0

    while True:
        g, gnorm = scaled_gradient(J, r, theta)
        if gnorm <= gradient_tol and (it == 0 or last_step <= step_tol or cost == 0.0):
            converged = True
            message = "converged"
            break
        if it >= max_iter:
            break
        inactive = ~_active(J.T @ r, theta, lo, hi)
        Jf = J[:, inactive]
        A = Jf.T @ Jf
        d = np.diag(A).copy()
        d[d == 0] = 1.0
        accepted = False
        while lam <= MAX_DAMPING:
            step = np.zeros_like(theta)
            try:
                step[inactive] = np.linalg.solve(A + lam * np.diag(d), -g[inactive])
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                trial = _snap(theta + step, lo, hi)
                try:
                    with np.errstate(all="ignore"):
                        r_new = residual(trial)
                except (OverflowError, ZeroDivisionError):
                    r_new = np.array([math.inf])
                cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else math.inf
                if cost_new < cost or (cost_new == cost and np.array_equal(trial, theta)):
                    accepted = True
                    break
            lam = lam * DAMPING_UP if lam > 0 else FALLBACK_DAMPING
        if not accepted:
            message = "damping exhausted without decrease"
            converged = gnorm <= gradient_tol
            break
        last_step = float(np.linalg.norm(trial - theta) / (np.linalg.norm(theta) + step_tol))
        theta, r, cost = trial, r_new, cost_new
        J = jacobian(theta)
        lam /= DAMPING_DOWN
        it += 1

    params = with_free(theta)
    A = J.T @ J
    n_obs = int((pr.weights > 0).sum())
    dof = n_obs - int(free.sum())
    red = cost / dof if dof > 0 else math.nan
    cond = float(np.linalg.cond(A)) if A.size else 1.0
    singular = not math.isfinite(cond) or cond > SINGULAR_CONDITION
    loose = np.zeros(A.shape[0], bool)
    if singular:
        message += f"; normal matrix is singular (condition number {cond:.3g})"
        log.warning("singular normal matrix, condition number %.3g", cond)
        cov_free, loose = _identified_inverse(A)
    else:
        cov_free = np.linalg.inv(A)
    scale = 1.0 if absolute_weights or not math.isfinite(red) else red
    cov_free = 0.5 * (cov_free + cov_free.T) * scale
    cov_free[loose, loose] = math.inf
    cov = np.zeros((params.size, params.size))
    cov[np.ix_(free, free)] = cov_free
    _, gnorm = scaled_gradient(J, r, theta)
    return FitResult(params, cov, red, it, converged, -r, tuple(pr.names), chi2=cost,
                     gradient_norm=gnorm, condition_number=cond, singular=singular, message=message)
