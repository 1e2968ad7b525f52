"""Survey inference: pseudo-MLE, tilted empirical likelihood, and the
bootstrapped distribution-constrained estimator.

The pipeline, for a sample x with survey weights pi (scaled to sum to n):

1. ``pmle_fit`` maximizes the weighted normal log likelihood
   sum_i pi_i log f_theta(x_i) and reports the sandwich covariance
   H^{-1} V H^{-1} / n with H and V the weighted Hessian and score outer
   product.
2. ``wfpbb_resample`` rebuilds pseudo-populations of size N with the weighted
   Polya urn and draws equal-probability pseudo-samples from them, absorbing
   the survey weights into the resampling.
3. ``etel`` profiles the maximum-entropy weights under moment conditions;
   ``bdcm_loglik`` adds a squared-Wasserstein ball around the posited family,
   and ``bdcm_fit`` maximizes it per pseudo-sample and combines replicates.
"""

from __future__ import annotations

import dataclasses
from typing import Callable

import numpy as np
from scipy import optimize, special

from ._solver import SolverConfig, exp_grad_max
from .distributions import Normal
from .exceptions import FitError
from .transport import (
    QuadratureConfig,
    _grad_sorted_boundary,
    _w2sq_continuous,
)
from .utils import philox_stream
from .validation import as_float_vector

_Z95 = 1.96


@dataclasses.dataclass(frozen=True)
class SurveySample:
    """Observations with survey weights scaled so that they sum to n."""

    x: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        pi = as_float_vector(self.pi, "pi")
        if x.shape[0] != pi.size:
            raise ValueError("x and pi must have matching first dimension")
        if np.any(pi <= 0):
            raise ValueError("survey weights must be strictly positive")
        if abs(pi.sum() - pi.size) > 1e-9:
            raise ValueError("survey weights must be scaled to sum to n")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "pi", pi)

    @property
    def n(self):
        return self.pi.size


@dataclasses.dataclass(frozen=True)
class SimulationConfig:
    """Probit-selection design: bivariate normal population, size-n sample."""

    population_size: int = 100_000
    sample_size: int = 500
    mean_x: float = 0.0
    mean_z: float = 10.0
    var_x: float = 4.0
    var_z: float = 16.0
    rho: float = 0.5
    beta0: float = 0.1
    beta1: float = -1.8
    propensity_floor: float = 0.06
    n_replicates: int = 100
    n_bootstrap: int = 50
    seed: int = 0

    def __post_init__(self):
        if not self.population_size >= self.sample_size >= 2:
            raise ValueError("population_size >= sample_size >= 2 required")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        if self.var_x <= 0 or self.var_z <= 0:
            raise ValueError("variances must be positive")
        if not 0.0 <= self.propensity_floor < 1.0:
            raise ValueError("propensity_floor must lie in [0, 1)")
        if self.n_bootstrap < 1 or self.n_replicates < 1:
            raise ValueError("replicate counts must be positive")


def simulate_population(config, rng=None):
    """Draw a finite population and a probit-selected survey sample.

    Inclusion is proportional to pi* = Phi(beta0 + beta1 * z), with z the
    standardized selection variable and pi* floored at
    ``config.propensity_floor`` so the inverse-probability weights have
    finite variance. Selection is rejection sampling without replacement;
    selected units get weights proportional to 1/pi*, rescaled to sum to
    the sample size. The selection variable is not returned.
    """
    if rng is None:
        rng = philox_stream(config.seed, 0)
    n_pop, n = config.population_size, config.sample_size
    u_z = rng.standard_normal(n_pop)
    u_x = rng.standard_normal(n_pop)
    sd_x, sd_z = np.sqrt(config.var_x), np.sqrt(config.var_z)
    x = config.mean_x + sd_x * (config.rho * u_z + np.sqrt(1.0 - config.rho**2) * u_x)
    p_star = np.maximum(
        special.ndtr(config.beta0 + config.beta1 * u_z), config.propensity_floor
    )

    chosen = np.zeros(0, dtype=np.int64)
    taken = np.zeros(n_pop, dtype=bool)
    while chosen.size < n:
        cand = rng.integers(0, n_pop, size=4 * n)
        accept = rng.random(cand.size) < p_star[cand]
        cand = cand[accept]
        cand = cand[~taken[cand]]
        # first occurrence wins, preserving draw order
        _, first = np.unique(cand, return_index=True)
        cand = cand[np.sort(first)]
        room = n - chosen.size
        cand = cand[:room]
        taken[cand] = True
        chosen = np.concatenate((chosen, cand))

    inv = 1.0 / p_star[chosen]
    pi = n * inv / inv.sum()
    return x, SurveySample(x=x[chosen], pi=pi)


# ---------------------------------------------------------------------------
# pseudo maximum likelihood for the normal model


@dataclasses.dataclass(frozen=True)
class PmleFit:
    """Point estimate, information pieces and 95% intervals for (mu, sigma2)."""

    theta: np.ndarray
    h_matrix: np.ndarray
    v_matrix: np.ndarray
    covariance: np.ndarray
    conf_int: np.ndarray
    method: str


def _normal_information(x, pi, mu, s2):
    # H is the weighted average Hessian; V is the variance of the weighted
    # score, so the weight enters it squared.
    n = x.size
    r = x - mu
    score = np.column_stack((r / s2, -0.5 / s2 + 0.5 * r * r / s2**2))
    hess_mu = np.full(n, -1.0 / s2)
    hess_cross = -r / s2**2
    hess_s2 = 0.5 / s2**2 - r * r / s2**3
    h = np.empty((2, 2))
    h[0, 0] = np.sum(pi * hess_mu) / n
    h[0, 1] = h[1, 0] = np.sum(pi * hess_cross) / n
    h[1, 1] = np.sum(pi * hess_s2) / n
    v = ((pi**2)[:, None] * score).T @ score / n
    return h, v


def pmle_fit(sample):
    """Survey-weighted normal fit with sandwich variance.

    The stationary point is closed form: mu = sum pi x / n and
    sigma2 = sum pi (x - mu)^2 / n. Intervals are theta +/- 1.96 times the
    sandwich standard error.
    """
    x = as_float_vector(sample.x, "x")
    pi = sample.pi
    n = x.size
    mu = float(np.sum(pi * x) / n)
    s2 = float(np.sum(pi * (x - mu) ** 2) / n)
    if s2 <= 0 or not np.isfinite(s2):
        raise FitError("degenerate weighted variance; cannot fit the normal model")
    h, v = _normal_information(x, pi, mu, s2)
    try:
        h_inv = np.linalg.inv(h)
    except np.linalg.LinAlgError as err:
        raise FitError("singular weighted Hessian") from err
    cov = h_inv @ v @ h_inv / n
    cov = 0.5 * (cov + cov.T)
    theta = np.array([mu, s2])
    se = np.sqrt(np.diag(cov))
    conf = np.column_stack((theta - _Z95 * se, theta + _Z95 * se))
    return PmleFit(theta, h, v, cov, conf, method="pmle")


def mle_fit(x):
    """Unweighted normal fit with observed-information intervals."""
    x = as_float_vector(x, "x")
    n = x.size
    mu = float(np.mean(x))
    s2 = float(np.mean((x - mu) ** 2))
    if s2 <= 0 or not np.isfinite(s2):
        raise FitError("degenerate sample variance; cannot fit the normal model")
    pi = np.ones(n)
    h, v = _normal_information(x, pi, mu, s2)
    try:
        cov = np.linalg.inv(-h) / n
    except np.linalg.LinAlgError as err:
        raise FitError("singular observed information") from err
    cov = 0.5 * (cov + cov.T)
    theta = np.array([mu, s2])
    se = np.sqrt(np.diag(cov))
    conf = np.column_stack((theta - _Z95 * se, theta + _Z95 * se))
    return PmleFit(theta, h, v, cov, conf, method="mle")


# ---------------------------------------------------------------------------
# estimating functions


@dataclasses.dataclass(frozen=True)
class EstimatingFunction:
    """Vector moment function g(x, theta) with its dimensions and a tag."""

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    n_conditions: int
    n_params: int
    tag: str

    def __call__(self, x, theta):
        values = np.asarray(self.fn(x, np.asarray(theta, dtype=float)), dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if not np.all(np.isfinite(values)):
            raise ValueError(f"estimating function {self.tag!r} returned non-finite values")
        return values


def mean_deviation(n_params=1):
    """g(x, theta) = x - theta[0]; identifies the mean coordinate."""

    def fn(x, theta):
        return np.asarray(x, dtype=float) - theta[0]

    return EstimatingFunction(fn=fn, n_conditions=1, n_params=n_params, tag="mean-deviation")


def logistic_score(n_features):
    """Logistic-regression score; rows of x are (features..., response)."""

    def fn(x, theta):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        features, y = x[:, :-1], x[:, -1]
        design = np.column_stack((np.ones(x.shape[0]), features))
        prob = special.expit(design @ theta)
        return design * (y - prob)[:, None]

    p = n_features + 1
    return EstimatingFunction(fn=fn, n_conditions=p, n_params=p, tag="logistic-score")


# ---------------------------------------------------------------------------
# exponentially tilted empirical likelihood


@dataclasses.dataclass
class EtelResult:
    weights: np.ndarray | None
    loglik: float
    tilt: np.ndarray | None
    n_iter: int
    converged: bool
    history: list | None = None


def etel(theta, x, pi, estimating, record_history=False, eta0=None):
    """Tilted empirical likelihood at theta.

    Solves the strictly convex inner problem
    min_eta (1/n) sum_i exp(pi_i eta' g_i) by damped Newton; the optimal
    weights are w_i = exp(pi_i eta' g_i) / sum_j exp(pi_j eta' g_j). When the
    origin is outside the convex hull of the g_i the inner iterates diverge
    (norm above 1e6, or the objective underflows toward its infimum 0) and
    the log likelihood is -inf. ``eta0`` warm-starts the Newton iteration.
    """
    g = estimating(x, theta)
    pi = np.asarray(pi, dtype=float)
    if np.isscalar(pi) or pi.ndim == 0:
        pi = np.full(g.shape[0], float(pi))
    n, r = g.shape
    a = pi[:, None] * g
    if r == 1 and (a.min() > 0.0 or a.max() < 0.0):
        return EtelResult(None, -np.inf, None, 0, False, [1.0] if record_history else None)

    eta = np.zeros(r) if eta0 is None else np.asarray(eta0, dtype=float).copy()
    with np.errstate(over="ignore"):
        f = float(np.mean(np.exp(a @ eta)))
    if not np.isfinite(f):
        eta, f = np.zeros(r), 1.0
    history = [f] if record_history else None
    converged = False
    n_iter = 0
    for n_iter in range(1, 201):
        u = a @ eta
        e = np.exp(u)
        grad = (e @ a) / n
        moment_norm = np.linalg.norm(grad) / max(f, 1e-300)
        if moment_norm <= 1e-9:
            converged = True
            break
        hess = (a * e[:, None]).T @ a / n
        try:
            direction = -np.linalg.solve(hess + 1e-14 * np.eye(r), grad)
        except np.linalg.LinAlgError:
            direction = -grad
        g_dot_d = grad @ direction

        def line_value(step):
            with np.errstate(over="ignore"):
                return float(np.mean(np.exp(a @ (eta + step * direction))))

        step = 1.0
        accepted = False
        while step > 1e-16:
            f_new = line_value(step)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * step * g_dot_d:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True
            break
        # expand while the ray keeps descending fast: under convex-hull
        # failure the objective decreases forever, so this drives eta to the
        # divergence threshold quickly; near an interior optimum the descent
        # is slow and the expansion never triggers
        while step < 1e7 and f_new < 0.7 * f:
            f_next = line_value(2.0 * step)
            if not np.isfinite(f_next) or f_next >= f_new:
                break
            step *= 2.0
            f_new = f_next
        eta_new = eta + step * direction
        eta, f = eta_new, f_new
        if record_history:
            history.append(f)
        # f has infimum 0 exactly when the origin leaves the convex hull; the
        # underflow guard catches rays along which exp() dies before the norm
        # threshold is reachable in double precision
        if np.linalg.norm(eta) > 1e6 or f < 1e-280:
            return EtelResult(None, -np.inf, None, n_iter, False, history)

    u = a @ eta
    u_max = u.max()
    log_w = u - (u_max + np.log(np.sum(np.exp(u - u_max))))
    loglik = float(np.sum(log_w))
    return EtelResult(np.exp(log_w), loglik, eta, n_iter, converged, history)


# ---------------------------------------------------------------------------
# weighted finite-population Bayesian bootstrap


def wfpbb_resample(sample, population_size, n_replicates, seed):
    """Pseudo-samples of size n from weighted-Polya pseudo-populations.

    The urn adds population_size - n units, selecting atom i with probability
    proportional to (pi_i - 1) + l_i (N - n)/n (weights rescaled to sum to N),
    which is exactly a Dirichlet-multinomial draw with concentration
    n (pi_i - 1) / (N - n); each pseudo-sample is then n equal-probability
    picks from the completed pseudo-population. Deterministic given the seed.
    """
    n = sample.n
    big_n = int(population_size)
    m = int(n_replicates)
    if big_n < n:
        raise ValueError("population_size must be at least the sample size")
    if m < 1:
        raise ValueError("n_replicates must be positive")
    x = sample.x
    out = np.empty((m, n), dtype=float) if x.ndim == 1 else None
    rows = []
    if big_n > n:
        pi_pop = sample.pi * (big_n / n)
        alpha = (pi_pop - 1.0) * n / (big_n - n)
        if np.any(alpha <= 0):
            raise ValueError(
                "weighted Polya urn requires every rescaled weight pi * N / n to exceed 1"
            )
    for k in range(m):
        rng = philox_stream(seed, 1, k)
        if big_n > n:
            p = rng.dirichlet(alpha)
            added = rng.multinomial(big_n - n, p)
            freq = 1.0 + added
        else:
            freq = np.ones(n)
        counts = rng.multinomial(n, freq / big_n)
        idx = np.repeat(np.arange(n), counts)
        if out is not None:
            out[k] = x[idx]
        else:
            rows.append(x[idx])
    return out if out is not None else rows


# ---------------------------------------------------------------------------
# distribution-constrained likelihood


def _penalized_entropy_weights(g, sorted_info, target, epsilon, config, quad, w_start):
    """Max entropy under moment + transport constraints via escalating penalties."""
    order, sorted_pos = sorted_info
    n = g.shape[0]
    tol_eps = 1e-6 * max(epsilon, 1.0)
    kappa, lam = 1.0, 1.0
    w = w_start
    for _ in range(40):

        def value_and_grad(w):
            log_w = np.log(w)
            h = -float(np.sum(w * log_w))
            mom = g.T @ w
            cum = np.cumsum(w[order])
            cum[-1] = 1.0
            w2 = _w2sq_continuous(sorted_pos, cum, target, quad)
            excess = max(0.0, w2 - epsilon)
            value = h - kappa * float(mom @ mom) - lam * excess**2
            grad = -(1.0 + log_w) - 2.0 * kappa * (g @ mom)
            if excess > 0.0:
                g_sorted = _grad_sorted_boundary(sorted_pos, cum, target.quantile)
                g_w2 = np.empty_like(g_sorted)
                g_w2[order] = g_sorted
                grad -= 2.0 * lam * excess * g_w2
            return value, grad

        result = exp_grad_max(value_and_grad, w, config)
        w = result.weights
        mom_norm = float(np.linalg.norm(g.T @ w))
        cum = np.cumsum(w[order])
        cum[-1] = 1.0
        w2 = _w2sq_continuous(sorted_pos, cum, target, quad)
        mom_ok = mom_norm <= 1e-6
        w2_ok = w2 <= epsilon + tol_eps
        if mom_ok and w2_ok:
            return w
        if kappa >= 1e10 and lam >= 1e10:
            return None
        if not mom_ok:
            kappa = min(kappa * 2.0, 1e10)
        if not w2_ok:
            lam = min(lam * 2.0, 1e10)
    return None


def bdcm_loglik(theta, pseudo_x, estimating, family_fn, epsilon, quad=None, config=None, warm=None):
    """Log likelihood of the moment + transport constrained entropy weights.

    Maximizes H(w) subject to sum_i w_i g(x_i, theta) = 0 and
    W2^2(sum w_i delta_{x_i}, f_theta) <= epsilon. The unconstrained-in-W2
    solution (plain tilted likelihood) is computed first; if it already
    satisfies the transport budget it is optimal and returned directly,
    otherwise quadratic penalties on both constraints are escalated until
    feasible or declared infeasible (-inf). Invalid theta (e.g. nonpositive
    variance) also yields -inf so that direct search can roam freely.
    ``warm`` is an optional mutable dict reused across calls on the same
    pseudo-sample to warm-start the inner solvers.
    """
    quad = quad or QuadratureConfig()
    config = config or SolverConfig(max_iter=80, tol=1e-9)
    x = np.asarray(pseudo_x, dtype=float)
    try:
        family = family_fn(theta)
    except (ValueError, FloatingPointError):
        return -np.inf

    warm = warm if warm is not None else {}
    base = etel(theta, x, 1.0, estimating, eta0=warm.get("eta"))
    if not np.isfinite(base.loglik):
        return -np.inf
    warm["eta"] = base.tilt

    order = warm.get("order")
    if order is None:
        order = np.argsort(x, kind="stable")
        warm["order"] = order
        warm["sorted"] = x[order]
    sorted_pos = warm["sorted"]
    cum = np.cumsum(base.weights[order])
    cum[-1] = 1.0
    w2 = _w2sq_continuous(sorted_pos, cum, family, quad)
    if w2 <= epsilon * (1.0 + 1e-9):
        return base.loglik

    g = estimating(x, theta)
    w = _penalized_entropy_weights(
        g, (order, sorted_pos), family, epsilon, config, quad, base.weights
    )
    if w is None:
        return -np.inf
    return float(np.sum(np.log(np.maximum(w, 1e-300))))


@dataclasses.dataclass
class BdcmFit:
    theta: np.ndarray
    covariance: np.ndarray
    conf_int: np.ndarray
    replicate_estimates: np.ndarray
    n_failed: int


def bdcm_fit(
    sample,
    estimating=None,
    family_fn=None,
    n_replicates=50,
    population_size=None,
    seed=0,
    epsilon=None,
    quad=None,
    config=None,
    pseudo_samples=None,
):
    """Distribution-constrained fit over bootstrap pseudo-samples.

    Per pseudo-sample the likelihood is maximized by Nelder-Mead started at
    that pseudo-sample's own equal-weight fit; the transport budget defaults
    to the squared distance between the uniform pseudo-empirical and the
    family at the survey-weighted fit, which makes the constrained and the
    weighted fits comparable. Replicates are combined by their mean, with
    covariance inflated by (1 + 1/M).
    """
    estimating = estimating or mean_deviation(n_params=2)
    family_fn = family_fn or (lambda th: Normal(th[0], th[1]))
    quad = quad or QuadratureConfig()
    if pseudo_samples is None:
        if population_size is None:
            raise ValueError("population_size is required to rebuild pseudo-populations")
        pseudo_samples = wfpbb_resample(sample, population_size, n_replicates, seed)
    m = len(pseudo_samples)
    if m < 1:
        raise ValueError("at least one pseudo-sample is required")

    anchor = pmle_fit(sample)
    estimates = []
    withins = []
    n_failed = 0
    for k in range(m):
        x_star = np.asarray(pseudo_samples[k], dtype=float)
        order = np.argsort(x_star, kind="stable")
        cum = np.arange(1, x_star.size + 1) / x_star.size
        if epsilon is None:
            eps_k = _w2sq_continuous(x_star[order], cum, family_fn(anchor.theta), quad)
        else:
            eps_k = float(epsilon)
        x0 = np.array([np.mean(x_star), np.var(x_star)])
        warm = {}

        def negative(theta):
            return -bdcm_loglik(theta, x_star, estimating, family_fn, eps_k, quad, warm=warm)

        res = optimize.minimize(
            negative,
            x0,
            method="Nelder-Mead",
            options={"xatol": 1e-6, "fatol": 1e-9, "maxiter": 200, "maxfev": 300},
        )
        if not np.all(np.isfinite(res.x)) or not np.isfinite(res.fun):
            n_failed += 1
            continue
        estimates.append(res.x)
        withins.append(mle_fit(x_star).covariance)

    if n_failed > m / 2:
        raise FitError(f"{n_failed} of {m} replicate optimizations failed")
    estimates = np.asarray(estimates)
    theta = estimates.mean(axis=0)
    if estimates.shape[0] > 1:
        between = np.cov(estimates.T, ddof=1)
    else:
        between = np.zeros((estimates.shape[1], estimates.shape[1]))
    # Rubin-style combination: within-replicate covariance plus the inflated
    # between-replicate covariance
    within = np.mean(withins, axis=0)
    cov = within + between * (1.0 + 1.0 / estimates.shape[0])
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    conf = np.column_stack((theta - _Z95 * se, theta + _Z95 * se))
    return BdcmFit(theta, cov, conf, estimates, n_failed)
