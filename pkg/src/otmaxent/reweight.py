"""Maximum-entropy reweighting toward a parametric target.

Two solvers over the probability simplex for atoms s and target family f:

* ``solve_dual``   maximizes  H(w) - lam * W2^2(f, sum_i w_i delta_{s_i})
* ``solve_primal`` maximizes  H(w)  subject to  W2^2 <= epsilon

The primal is solved by bisecting the dual penalty: W2^2 of the dual solution
decreases in lam, so the smallest lam meeting the budget carries the highest
entropy. ``MaxEntropyReweighter`` wraps both behind a fit interface.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from ._solver import EGResult, SolverConfig, exp_grad_max
from .exceptions import InfeasibilityError
from .transport import (
    QuadratureConfig,
    _grad_sorted_boundary,
    _w2sq_continuous,
)
from .validation import as_float_vector, check_simplex

_LAMBDA_MAX = 1e8


def entropy(weights):
    """Shannon entropy -sum w_i log w_i with the 0 log 0 = 0 convention."""
    w = check_simplex(weights)
    positive = w > 0
    value = -float(np.sum(w[positive] * np.log(w[positive])))
    return max(value, 0.0)


class _DualObjective:
    """Value and gradient of H(w) - lam * W2^2 for fixed atoms and target."""

    def __init__(self, atoms, target, lam, quad):
        self.order = np.argsort(atoms, kind="stable")
        self.sorted_atoms = atoms[self.order]
        self.target = target
        self.lam = lam
        self.quad = quad

    def cum_weights(self, w):
        cum = np.cumsum(w[self.order])
        cum[-1] = 1.0
        return np.minimum(cum, 1.0)

    def w2sq(self, w):
        return _w2sq_continuous(self.sorted_atoms, self.cum_weights(w), self.target, self.quad)

    def __call__(self, w):
        cum = self.cum_weights(w)
        w2 = _w2sq_continuous(self.sorted_atoms, cum, self.target, self.quad)
        log_w = np.log(w)
        h = -float(np.sum(w * log_w))
        grad = -(1.0 + log_w)
        if self.lam > 0.0:
            g_sorted = _grad_sorted_boundary(self.sorted_atoms, cum, self.target.quantile)
            g_w2 = np.empty_like(g_sorted)
            g_w2[self.order] = g_sorted
            grad = grad - self.lam * g_w2
        return h - self.lam * w2, grad


def _solve_dual_full(atoms, target, lam, config=None, quad=None, w0=None):
    atoms = as_float_vector(atoms, "atoms")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    config = config or SolverConfig()
    quad = quad or QuadratureConfig()
    if atoms.size == 1:
        return EGResult(weights=np.ones(1), value=0.0, n_iter=0, converged=True), None
    objective = _DualObjective(atoms, target, lam, quad)
    start = np.full(atoms.size, 1.0 / atoms.size) if w0 is None else w0
    result = exp_grad_max(objective, start, config)
    return result, objective


def solve_dual(atoms, target, lam, config=None, quad=None, w0=None):
    """Penalized maximum-entropy weights for the given departure penalty.

    Parameters
    ----------
    atoms : array-like
        Sample atoms on the real line.
    target : Normal or SkewNormal
    lam : float
        Nonnegative penalty on the squared transport distance; 0 returns the
        uniform weights.
    config : SolverConfig, optional
    quad : QuadratureConfig, optional
    w0 : ndarray, optional
        Warm start (defaults to uniform).

    Returns
    -------
    ndarray
        Strictly interior simplex weights.
    """
    result, _ = _solve_dual_full(atoms, target, lam, config, quad, w0)
    return result.weights


def solve_primal(atoms, target, epsilon, config=None, quad=None, full_output=False):
    """Maximum-entropy weights subject to a squared transport budget.

    If the uniform weights already satisfy the budget the constraint is
    inactive and uniform is returned. Otherwise the dual penalty is grown
    geometrically until feasible and then bisected; the smallest feasible
    penalty (largest entropy) wins. Raises ``InfeasibilityError`` when the
    budget is below what any simplex point can reach.
    """
    atoms = as_float_vector(atoms, "atoms")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    config = config or SolverConfig()
    quad = quad or QuadratureConfig()

    m = atoms.size
    uniform = np.full(m, 1.0 / m)
    objective = _DualObjective(atoms, target, 0.0, quad)
    w2_uniform = objective.w2sq(uniform)
    tol = 1e-6 * max(epsilon, 1.0)

    if w2_uniform <= epsilon:
        result = (uniform, 0.0, w2_uniform)
        return result if full_output else uniform

    best = None  # (lam, weights, w2) with the smallest feasible lam seen
    smallest_w2 = w2_uniform
    lam_lo = 0.0
    lam = 1.0
    w_prev = uniform
    while True:
        w = solve_dual(atoms, target, lam, config, quad, w0=w_prev)
        w2 = objective.w2sq(w)
        w_prev = w
        smallest_w2 = min(smallest_w2, w2)
        if w2 <= epsilon:
            best = (lam, w, w2)
            break
        lam_lo = lam
        if lam >= _LAMBDA_MAX:
            raise InfeasibilityError(
                "transport budget epsilon is unreachable; smallest squared "
                f"distance attained was {smallest_w2:.6g}",
                attained=smallest_w2,
            )
        lam = min(lam * 10.0, _LAMBDA_MAX)

    lam_hi = best[0]
    if abs(best[2] - epsilon) > tol:
        for _ in range(200):
            if lam_hi - lam_lo < 1e-10:
                break
            mid = 0.5 * (lam_lo + lam_hi)
            w = solve_dual(atoms, target, mid, config, quad, w0=w_prev)
            w2 = objective.w2sq(w)
            w_prev = w
            smallest_w2 = min(smallest_w2, w2)
            if w2 <= epsilon:
                lam_hi = mid
                best = (mid, w, w2)
            else:
                lam_lo = mid
            if abs(w2 - epsilon) <= tol:
                if w2 > epsilon:
                    best = (mid, w, w2)
                break

    lam_star, weights, w2 = best
    if full_output:
        return weights, lam_star, w2
    return weights


class MaxEntropyReweighter(BaseEstimator):
    """Maximum-entropy sample reweighting toward a parametric target.

    Parameters
    ----------
    target : Normal or SkewNormal
        Guiding distribution for the weight-adjusted empirical measure.
    lam : float, default 1.0
        Transport penalty for the penalized problem; ignored when
        ``epsilon`` is given.
    epsilon : float, optional
        Squared transport budget. When set, the constrained problem is
        solved and ``lambda_`` records the penalty found by bisection.
    max_iter, tol, step0, backtrack : solver configuration.
    n_nodes, tail_clip : quadrature configuration.

    Attributes
    ----------
    weights_ : ndarray of shape (n_atoms,)
    entropy_ : float
    w2sq_ : float
    lambda_ : float
    """

    def __init__(
        self,
        target=None,
        lam=1.0,
        epsilon=None,
        max_iter=5000,
        tol=1e-9,
        step0=1.0,
        backtrack=0.5,
        n_nodes=2048,
        tail_clip=1e-6,
    ):
        self.target = target
        self.lam = lam
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.tol = tol
        self.step0 = step0
        self.backtrack = backtrack
        self.n_nodes = n_nodes
        self.tail_clip = tail_clip

    def _config(self):
        return SolverConfig(
            max_iter=self.max_iter,
            tol=self.tol,
            step0=self.step0,
            backtrack=self.backtrack,
        )

    def _quad(self):
        return QuadratureConfig(n_nodes=self.n_nodes, tail_clip=self.tail_clip)

    def fit(self, X, y=None):
        if self.target is None:
            raise ValueError("a target family is required")
        atoms = as_float_vector(X, "X")
        config, quad = self._config(), self._quad()
        objective = _DualObjective(atoms, self.target, 0.0, quad)
        if self.epsilon is not None:
            weights, lam, w2 = solve_primal(
                atoms, self.target, self.epsilon, config, quad, full_output=True
            )
        else:
            weights = solve_dual(atoms, self.target, self.lam, config, quad)
            lam = float(self.lam)
            w2 = objective.w2sq(weights)
        self.weights_ = weights
        self.lambda_ = lam
        self.w2sq_ = w2
        self.entropy_ = entropy(weights)
        self.n_atoms_ = atoms.size
        return self
