"""Maximum-likelihood fits for queue sizes, gaps, and activity counts.

Gamma and Weibull shapes are solved by scalar root-finding on their profile
equations (absolute tolerance 1e-10, at most 200 iterations); log-normal is
closed form on logs; power laws are OLS on log-log pairs. Model choice is
by AIC with ties going to the fewer-parameter family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln, polygamma

from .errors import DegenerateSample, NoConvergence

_TOL = 1e-10
_MAX_ITER = 200


@dataclass(frozen=True)
class GammaFit:
    shape: float
    scale: float
    loglik: float
    n: int


@dataclass(frozen=True)
class WeibullFit:
    k: float
    lam: float
    loglik: float
    n: int


@dataclass(frozen=True)
class LogNormalFit:
    mu: float
    sigma: float
    loglik: float
    n: int


@dataclass(frozen=True)
class ExponentialFit:
    rate: float
    loglik: float
    n: int


@dataclass(frozen=True)
class PowerLawFit:
    """y ~ c * x**(-alpha), fitted by least squares in log-log space."""

    alpha: float
    c: float
    r2: float
    n: int
    support: tuple[float, float]


@dataclass(frozen=True)
class ModelSelection:
    winner: str
    aic: dict[str, float]
    fits: dict[str, object]
    margin: float


def _clean_positive(samples, min_n: int, what: str) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < min_n:
        raise DegenerateSample(f"{what}: need >= {min_n} samples, have {x.size}")
    if not np.all(np.isfinite(x)):
        raise DegenerateSample(f"{what}: non-finite samples")
    if np.any(x <= 0):
        raise DegenerateSample(f"{what}: samples must be positive")
    return x


def gamma_loglik(x: np.ndarray, shape: float, scale: float) -> float:
    n = x.size
    return float(
        (shape - 1.0) * np.sum(np.log(x))
        - np.sum(x) / scale
        - n * (shape * math.log(scale) + gammaln(shape))
    )


def fit_gamma_mle(samples) -> GammaFit:
    """Gamma MLE. Shape solves log(shape) - digamma(shape) = log(mean) - mean(log);
    scale is mean/shape."""
    x = _clean_positive(samples, 2, "gamma fit")
    mean = float(np.mean(x))
    meanlog = float(np.mean(np.log(x)))
    s = math.log(mean) - meanlog
    # log(mean) > mean(log) for any non-constant positive sample; float
    # rounding can leave a constant sample at s ~ 1e-16 instead of exactly 0
    if s < 1e-12:
        raise DegenerateSample("gamma fit: zero-variance sample")
    # standard closed-form starting point, then Newton on f(k)=log k - psi(k) - s
    k = (3.0 - s + math.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    for _ in range(_MAX_ITER):
        f = math.log(k) - float(digamma(k)) - s
        fp = 1.0 / k - float(polygamma(1, k))
        step = f / fp
        k_new = k - step
        if not math.isfinite(k_new):
            raise NoConvergence("gamma shape iteration diverged")
        if k_new <= 0:
            k_new = k / 2.0
        if abs(k_new - k) < _TOL:
            k = k_new
            break
        k = k_new
    else:
        raise NoConvergence(f"gamma shape did not converge within {_MAX_ITER} iterations")
    scale = mean / k
    return GammaFit(shape=k, scale=scale, loglik=gamma_loglik(x, k, scale), n=x.size)


def weibull_loglik(x: np.ndarray, k: float, lam: float) -> float:
    n = x.size
    return float(
        n * (math.log(k) - k * math.log(lam))
        + (k - 1.0) * np.sum(np.log(x))
        - np.sum((x / lam) ** k)
    )


def fit_weibull_mle(samples) -> WeibullFit:
    """Weibull MLE via Newton on the profile shape equation; scale closed form."""
    x = _clean_positive(samples, 2, "weibull fit")
    if float(np.min(x)) == float(np.max(x)):
        raise DegenerateSample("weibull fit: zero-variance sample")
    # normalize by the mean so x**k stays in range for large k
    mu = float(np.mean(x))
    z = x / mu
    lnz = np.log(z)
    mean_lnz = float(np.mean(lnz))
    k = 1.0
    for _ in range(_MAX_ITER):
        with np.errstate(over="ignore", invalid="ignore"):
            zk = z**k
            szk = float(np.sum(zk))
            szk_l = float(np.sum(zk * lnz))
            szk_l2 = float(np.sum(zk * lnz * lnz))
        f = szk_l / szk - 1.0 / k - mean_lnz
        fp = (szk_l2 * szk - szk_l * szk_l) / (szk * szk) + 1.0 / (k * k)
        step = f / fp
        k_new = k - step
        if not math.isfinite(k_new):
            raise NoConvergence("weibull shape iteration diverged")
        if k_new <= 0:
            k_new = k / 2.0
        if abs(k_new - k) < _TOL:
            k = k_new
            break
        k = k_new
    else:
        raise NoConvergence(f"weibull shape did not converge within {_MAX_ITER} iterations")
    lam = mu * float(np.mean(z**k)) ** (1.0 / k)
    return WeibullFit(k=k, lam=lam, loglik=weibull_loglik(x, k, lam), n=x.size)


def fit_lognormal(samples) -> LogNormalFit:
    """Closed-form MLE on logs (sigma uses the 1/n denominator)."""
    x = _clean_positive(samples, 2, "lognormal fit")
    lx = np.log(x)
    mu = float(np.mean(lx))
    sigma = float(np.std(lx))
    if sigma == 0.0:
        raise DegenerateSample("lognormal fit: zero-variance sample")
    n = x.size
    loglik = float(
        -np.sum(lx) - 0.5 * n * math.log(2.0 * math.pi * sigma * sigma)
        - np.sum((lx - mu) ** 2) / (2.0 * sigma * sigma)
    )
    return LogNormalFit(mu=mu, sigma=sigma, loglik=loglik, n=n)


def fit_exponential(samples) -> ExponentialFit:
    x = _clean_positive(samples, 2, "exponential fit")
    mean = float(np.mean(x))
    rate = 1.0 / mean
    loglik = float(x.size * math.log(rate) - rate * np.sum(x))
    return ExponentialFit(rate=rate, loglik=loglik, n=x.size)


def fit_powerlaw_loglog(x_values, y_values) -> PowerLawFit:
    """OLS of log y on log x. alpha is minus the slope, c = exp(intercept).

    Both inputs must be positive; the support is [min x, max x] as given.
    """
    x = np.asarray(x_values, dtype=np.float64).ravel()
    y = np.asarray(y_values, dtype=np.float64).ravel()
    if x.size != y.size:
        raise DegenerateSample("power-law fit: x and y lengths differ")
    if x.size < 3:
        raise DegenerateSample(f"power-law fit: need >= 3 points, have {x.size}")
    if np.any(x <= 0) or np.any(y <= 0) or not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DegenerateSample("power-law fit: inputs must be positive and finite")
    lx = np.log(x)
    ly = np.log(y)
    vx = lx - lx.mean()
    denom = float(np.dot(vx, vx))
    if denom == 0.0:
        raise DegenerateSample("power-law fit: x values are all equal")
    slope = float(np.dot(vx, ly - ly.mean())) / denom
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (intercept + slope * lx)
    sst = float(np.dot(ly - ly.mean(), ly - ly.mean()))
    r2 = 1.0 if sst == 0.0 else 1.0 - float(np.dot(resid, resid)) / sst
    return PowerLawFit(
        alpha=-slope,
        c=math.exp(intercept),
        r2=r2,
        n=x.size,
        support=(float(np.min(x)), float(np.max(x))),
    )


_FAMILIES = ("gamma", "lognormal", "weibull", "exponential")
_N_PARAMS = {"gamma": 2, "lognormal": 2, "weibull": 2, "exponential": 1}
_FITTERS = {
    "gamma": fit_gamma_mle,
    "lognormal": fit_lognormal,
    "weibull": fit_weibull_mle,
    "exponential": fit_exponential,
}


def rank_families(aic: dict[str, float]) -> list[str]:
    """Order families by AIC; exact ties resolve to fewer parameters, then name."""
    return sorted(aic, key=lambda f: (aic[f], _N_PARAMS[f], f))


def select_model(samples, families: tuple[str, ...] = ("gamma", "lognormal")) -> ModelSelection:
    """Fit each family and pick the lowest AIC; ties go to fewer parameters.

    Families that fail to fit are skipped; at least one must succeed.
    """
    unknown = [f for f in families if f not in _FAMILIES]
    if unknown:
        raise DegenerateSample(f"unknown families: {unknown}")
    aic: dict[str, float] = {}
    fits: dict[str, object] = {}
    for fam in families:
        try:
            fit = _FITTERS[fam](samples)
        except (DegenerateSample, NoConvergence):
            continue
        fits[fam] = fit
        aic[fam] = 2.0 * _N_PARAMS[fam] - 2.0 * fit.loglik
    if not aic:
        raise DegenerateSample("no candidate family produced a fit")
    ranked = rank_families(aic)
    winner = ranked[0]
    margin = aic[ranked[1]] - aic[winner] if len(ranked) > 1 else math.inf
    return ModelSelection(winner=winner, aic=aic, fits=fits, margin=margin)
