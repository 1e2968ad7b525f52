"""Exponentiated-gradient ascent on the probability simplex.

Mirror ascent with the entropy mirror map: the multiplicative update
w <- w * exp(eta * g) / Z keeps iterates strictly interior, which the
transport weight-gradient requires. A backtracking line search on the exact
objective makes every accepted step a strict improvement, so the objective
trace is monotone by construction.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .exceptions import ConvergenceError


def _logsumexp(v):
    m = v.max()
    return m + np.log(np.sum(np.exp(v - m)))

# log-weights are floored here after each update so exp() never underflows to 0
_LOG_FLOOR = -690.0
_MIN_STEP = 1e-18
# cap on the log-weight movement per accepted step: a single unbounded step
# with a steep transport gradient would collapse the iterate onto a vertex,
# where multiplicative updates lose all ability to regrow tiny weights
_MAX_LOG_STEP = 2.0


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    """Shared solver knobs: iteration cap, stop tolerance, line-search steps."""

    max_iter: int = 5000
    tol: float = 1e-9
    step0: float = 1.0
    backtrack: float = 0.5

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.tol <= 0 or self.step0 <= 0:
            raise ValueError("tol and step0 must be positive")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtrack factor must lie in (0, 1)")


@dataclasses.dataclass
class EGResult:
    weights: np.ndarray
    value: float
    n_iter: int
    converged: bool
    history: list | None = None


def exp_grad_max(value_and_grad, w0, config=None, record_history=False):
    """Maximize a concave-ish objective over the simplex by mirror ascent.

    Parameters
    ----------
    value_and_grad : callable
        Maps a strictly positive weight vector to ``(value, gradient)``.
    w0 : ndarray
        Starting point on the simplex (taken to the interior via a log floor).
    config : SolverConfig, optional
    record_history : bool
        Keep the accepted objective values (useful for monotonicity checks).
    """
    config = config or SolverConfig()
    log_w = np.log(np.maximum(np.asarray(w0, dtype=float), 1e-300))
    log_w = np.maximum(log_w - _logsumexp(log_w), _LOG_FLOOR)
    w = np.exp(log_w)

    f, g = value_and_grad(w)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise ConvergenceError(
            "objective or gradient not finite at the starting point",
            diagnostics={"iteration": 0, "value": f},
        )
    history = [f] if record_history else None

    eta = config.step0
    converged = False
    n_iter = 0
    for n_iter in range(1, config.max_iter + 1):
        g_span = float(np.max(g) - np.min(g))
        eta = min(eta * 2.0, _MAX_LOG_STEP / max(g_span, 1e-12), 1e12)
        accepted = False
        while eta >= _MIN_STEP:
            log_trial = log_w + eta * g
            log_trial = np.maximum(log_trial - _logsumexp(log_trial), _LOG_FLOOR)
            w_trial = np.exp(log_trial)
            f_trial, g_trial = value_and_grad(w_trial)
            if np.isfinite(f_trial) and np.all(np.isfinite(g_trial)) and f_trial > f:
                accepted = True
                break
            eta *= config.backtrack
        if not accepted:
            converged = True
            break
        delta = f_trial - f
        log_w, w, f, g = log_trial, w_trial, f_trial, g_trial
        if record_history:
            history.append(f)
        if delta < config.tol:
            converged = True
            break

    weights = np.exp(log_w)
    weights /= weights.sum()
    return EGResult(weights=weights, value=f, n_iter=n_iter, converged=converged, history=history)
