"""Numeric fitting routines shared by the flow and spatial analyses.

All routines are pure: the same inputs give bit-identical FitResults.
"""
import math
from typing import Sequence, Tuple

import numpy as np
from scipy import optimize, special
from scipy import stats as sstats
from scipy.optimize import brentq

from errors import ConvergenceError, DataError
from models.fits import FitResult

MIN_LOGNORMAL_SAMPLES = 30
MIN_REGRESSION_POINTS = 3
NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 200
BISECTION_STEPS = 50
# beyond this the truncated log-normal is indistinguishable from a power law
MAX_TRUNCATION_Z = 30.0


def _mills(alpha: float) -> Tuple[float, float]:
    """Inverse Mills ratio phi/(1-Phi) at alpha and its derivative."""
    if alpha == -math.inf:
        return 0.0, 0.0
    lam = math.exp(sstats.norm.logpdf(alpha) - sstats.norm.logsf(alpha))
    return lam, lam * (lam - alpha)


class _TruncatedLogNormal:
    """Log-likelihood of log-samples y under N(mu, sigma) left-truncated at t."""

    def __init__(self, y: np.ndarray, t: float):
        self.y = y
        self.t = t
        self.n = y.size

    def loglik(self, mu: float, tau: float) -> float:
        s = math.exp(tau)
        z = (self.y - mu) / s
        tail = 0.0 if self.t == -math.inf else sstats.norm.logsf((self.t - mu) / s)
        return float(np.sum(sstats.norm.logpdf(z)) - self.n * tau - self.n * tail)

    def derivatives(self, mu: float, tau: float):
        s = math.exp(tau)
        z = (self.y - mu) / s
        alpha = (self.t - mu) / s
        lam, dlam = _mills(alpha)
        n = self.n
        sz, sz2 = float(np.sum(z)), float(np.sum(z * z))
        a_term = 0.0 if alpha == -math.inf else alpha
        grad = np.array([(sz - n * lam) / s, sz2 - n - n * lam * a_term])
        h_mm = (n * dlam - n) / (s * s)
        h_mt = (-2.0 * sz + n * lam + n * dlam * a_term) / s
        h_tt = -2.0 * sz2 + n * a_term * (dlam * a_term + lam)
        return grad, np.array([[h_mm, h_mt], [h_mt, h_tt]])

    def profile_mu(self, tau: float) -> float:
        """mu maximising the likelihood at fixed sigma = exp(tau)."""
        s = math.exp(tau)

        def score(mu):
            lam, _ = _mills((self.t - mu) / s)
            return float(np.sum(self.y - mu)) / s - self.n * lam

        center, width = float(np.mean(self.y)), 10.0 * s
        lo, hi = center - width, center + width
        for _ in range(60):
            if score(lo) > 0 > score(hi):
                break
            lo, hi = lo - width, hi + width
            width *= 2
        return brentq(score, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)


def fit_truncated_lognormal(
    samples: Sequence[float],
    truncation_point: float = 1.0,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> FitResult:
    """MLE of a log-normal left-truncated at ``truncation_point``.

    Damped Newton on (mu, ln sigma); if it does not reach ``tol`` within
    ``max_iter`` steps, bisection on the profile likelihood takes over.
    ``truncation_point <= 0`` means no truncation.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < MIN_LOGNORMAL_SAMPLES:
        raise DataError(f"truncated log-normal fit needs {MIN_LOGNORMAL_SAMPLES} samples, got {x.size}")
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise DataError("samples must be finite and positive")
    if truncation_point > 0 and np.any(x < truncation_point):
        raise DataError(f"samples below the truncation point {truncation_point}")
    y = np.log(x)
    if float(np.ptp(y)) == 0.0:
        raise DataError("all samples are equal; variance is zero")

    t = math.log(truncation_point) if truncation_point > 0 else -math.inf
    model = _TruncatedLogNormal(y, t)
    theta = np.array([float(np.mean(y)), math.log(float(np.std(y)))])
    ll = model.loglik(*theta)
    step = 0.0
    grad, hess = model.derivatives(*theta)
    iterations = 0
    while np.max(np.abs(grad)) >= tol and iterations < max_iter:
        iterations += 1
        if np.all(np.linalg.eigvalsh(hess) < 0):
            direction = np.linalg.solve(hess, -grad)
        else:
            # not concave here: plain ascent scaled to the data size
            direction = grad / model.n
        step = 1.0
        while True:
            candidate = theta + step * direction
            ll_new = model.loglik(*candidate)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            step /= 2.0
            if step < 1e-12:
                break
        if step < 1e-12:
            break
        theta, ll = candidate, ll_new
        grad, hess = model.derivatives(*theta)

    method = "newton"
    if np.max(np.abs(grad)) >= tol:
        method = "profile-bisection"
        theta, grad = _profile_bisection(model, float(np.std(y)))
        ll = model.loglik(*theta)
        if np.max(np.abs(grad)) >= math.sqrt(tol):
            raise ConvergenceError(
                f"truncated log-normal fit did not converge; final gradient norm {np.max(np.abs(grad)):.3e}"
            )

    mu, sigma = float(theta[0]), math.exp(float(theta[1]))
    return FitResult(
        kind="truncated_lognormal",
        params={"mu": mu, "sigma": sigma, "sigma2": sigma * sigma, "truncation_point": float(truncation_point)},
        goodness=ll,
        goodness_kind="loglik",
        n_points=int(x.size),
        converged=True,
        diagnostics={
            "gradient_norm": float(np.max(np.abs(grad))),
            "iterations": float(iterations),
            "last_step": float(step),
            "method_newton": 1.0 if method == "newton" else 0.0,
        },
    )


def _profile_bisection(model: _TruncatedLogNormal, sd: float):
    def tau_score(tau):
        mu = model.profile_mu(tau)
        grad, _ = model.derivatives(mu, tau)
        return grad[1], mu

    lo, hi = math.log(sd) - 7.0, math.log(sd) + 7.0
    g_lo, _ = tau_score(lo)
    g_hi, _ = tau_score(hi)
    if not g_lo > 0 > g_hi:
        raise ConvergenceError("profile likelihood has no interior maximum in sigma")
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        g_mid, _ = tau_score(mid)
        if g_mid > 0:
            lo = mid
        else:
            hi = mid
    tau = 0.5 * (lo + hi)
    mu = model.profile_mu(tau)
    grad, _ = model.derivatives(mu, tau)
    return np.array([mu, tau]), grad


def _log_interval_mass(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """log(Phi(b) - Phi(a)) for a < b, read off the tail that keeps precision."""
    upper = a > 0
    hi = np.where(upper, special.log_ndtr(-a), special.log_ndtr(b))
    lo = np.where(upper, special.log_ndtr(-b), special.log_ndtr(a))
    return hi + np.log1p(-np.exp(lo - hi))


class _BinnedLogNormal:
    """Integer counts k read as floor(X), X log-normal left-truncated at t."""

    def __init__(self, counts: np.ndarray, t: float):
        values, weights = np.unique(counts, return_counts=True)
        self.lo = np.log(values)
        self.hi = np.log(values + 1.0)
        self.w = weights.astype(float)
        self.n = float(weights.sum())
        self.t = t

    def loglik(self, mu: float, tau: float) -> float:
        s = math.exp(tau)
        mass = _log_interval_mass((self.lo - mu) / s, (self.hi - mu) / s)
        return float(self.w @ mass - self.n * special.log_ndtr((mu - self.t) / s))

    def objective(self, theta: np.ndarray):
        """Negative mean log-likelihood and its gradient in (mu, ln sigma)."""
        mu, tau = float(theta[0]), float(theta[1])
        s = math.exp(tau)
        a, b, alpha = (self.lo - mu) / s, (self.hi - mu) / s, (self.t - mu) / s
        mass = _log_interval_mass(a, b)
        pa = np.exp(sstats.norm.logpdf(a) - mass)
        pb = np.exp(sstats.norm.logpdf(b) - mass)
        lam, _ = _mills(alpha)
        d_mu = float(self.w @ (pa - pb)) / s - self.n * lam / s
        d_tau = float(self.w @ (a * pa - b * pb)) - self.n * lam * alpha
        ll = float(self.w @ mass) - self.n * special.log_ndtr(-alpha)
        return -ll / self.n, -np.array([d_mu, d_tau]) / self.n


def fit_binned_lognormal(
    counts: Sequence[int],
    truncation_point: float = 1.0,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> FitResult:
    """MLE of a truncated log-normal seen through integer counts.

    A count k stands for every value in [k, k+1), so cell counts of a few
    photos are not mistaken for exact draws. Quasi-Newton on (mu, ln sigma).
    """
    k = np.asarray(counts)
    if k.size < MIN_LOGNORMAL_SAMPLES:
        raise DataError(f"binned log-normal fit needs {MIN_LOGNORMAL_SAMPLES} counts, got {k.size}")
    if truncation_point <= 0:
        raise DataError("binned log-normal fit needs a positive truncation point")
    if not np.all(np.isfinite(k)) or np.any(k != np.floor(k)) or np.any(k < truncation_point):
        raise DataError(f"counts must be integers of at least {truncation_point}")
    if float(np.ptp(k)) == 0.0:
        raise DataError("all counts are equal; variance is zero")

    t = math.log(truncation_point)
    model = _BinnedLogNormal(k.astype(float), t)
    start = np.log(k + 0.5)
    res = optimize.minimize(
        model.objective,
        np.array([float(np.mean(start)), math.log(float(np.std(start)))]),
        jac=True,
        method="BFGS",
        options={"gtol": tol, "maxiter": max_iter},
    )
    _, grad = model.objective(res.x)
    gradient_norm = float(np.max(np.abs(grad)))
    mu, sigma = float(res.x[0]), math.exp(float(res.x[1]))
    if not np.all(np.isfinite(res.x)) or gradient_norm >= math.sqrt(tol):
        raise ConvergenceError(
            f"binned log-normal fit did not converge ({res.message}); final gradient norm {gradient_norm:.3e}"
        )
    if (t - mu) / sigma > MAX_TRUNCATION_Z:
        # the likelihood keeps rising towards a pure power-law tail
        raise ConvergenceError(
            f"binned log-normal fit has no interior maximum; truncation sits {(t - mu) / sigma:.1f} sigma above mu"
        )
    return FitResult(
        kind="binned_lognormal",
        params={"mu": mu, "sigma": sigma, "sigma2": sigma * sigma, "truncation_point": float(truncation_point)},
        goodness=model.loglik(mu, float(res.x[1])),
        goodness_kind="loglik",
        n_points=int(k.size),
        converged=True,
        diagnostics={"gradient_norm": gradient_norm, "iterations": float(res.nit)},
    )


def truncated_lognormal_cdf(x, mu: float, sigma: float, truncation_point: float = 1.0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    base = sstats.norm.cdf(math.log(truncation_point), mu, sigma) if truncation_point > 0 else 0.0
    return (sstats.norm.cdf(np.log(x), mu, sigma) - base) / (1.0 - base)


def _ols(xs: np.ndarray, ys: np.ndarray, what: str):
    if xs.size != ys.size:
        raise DataError(f"{what}: x and y lengths differ")
    if xs.size < MIN_REGRESSION_POINTS:
        raise DataError(f"{what} needs at least {MIN_REGRESSION_POINTS} points, got {xs.size}")
    if float(np.ptp(xs)) == 0.0:
        raise DataError(f"{what}: x values have zero variance")
    return sstats.linregress(xs, ys)


def fit_power_law(xs: Sequence[float], ys: Sequence[float]) -> FitResult:
    """y = c * x^-q by least squares on log-log scale."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if np.any(y <= 0) or np.any(x <= 0):
        raise DataError("power-law fit needs positive x and y")
    res = _ols(np.log(x), np.log(y), "power-law fit")
    return FitResult(
        kind="power_law",
        params={"q": -float(res.slope), "c": math.exp(float(res.intercept))},
        goodness=float(res.rvalue) ** 2,
        goodness_kind="r2",
        n_points=int(x.size),
        diagnostics={"slope_stderr": float(res.stderr)},
    )


def fit_exponential(xs: Sequence[float], ys: Sequence[float]) -> FitResult:
    """y = A * exp(-beta * x) by least squares of ln y on x."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if np.any(y <= 0):
        raise DataError("exponential fit needs positive y")
    res = _ols(x, np.log(y), "exponential fit")
    return FitResult(
        kind="exponential",
        params={"A": math.exp(float(res.intercept)), "beta": -float(res.slope)},
        goodness=float(res.rvalue) ** 2,
        goodness_kind="r2",
        n_points=int(x.size),
        diagnostics={"slope_stderr": float(res.stderr)},
    )


def linear_regression_r2(xs: Sequence[float], ys: Sequence[float]) -> FitResult:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    res = _ols(x, y, "linear regression")
    return FitResult(
        kind="linear",
        params={"slope": float(res.slope), "intercept": float(res.intercept)},
        goodness=float(res.rvalue) ** 2,
        goodness_kind="r2",
        n_points=int(x.size),
    )
