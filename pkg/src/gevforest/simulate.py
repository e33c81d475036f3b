"""Synthetic data generators and exact conditional-quantile oracles.

Responses are scaled Student-t draws whose scale and degrees of freedom
depend on the covariates; covariates are uniform on [-1, 1]^p.  Test grids
come from the Halton low-discrepancy sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .data import Dataset

__all__ = [
    "ScenarioSpec",
    "scenario",
    "sample_scenario",
    "halton_points",
    "true_quantile_y",
    "true_block_max_quantile",
]

_BIVARIATE_RHO = 0.75

# First 100 primes: Halton bases for up to 100 dimensions.
_PRIMES = (
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67,
    71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149,
    151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227,
    229, 233, 239, 241, 251, 257, 263, 269, 271, 277, 281, 283, 293, 307,
    311, 313, 317, 331, 337, 347, 349, 353, 359, 367, 373, 379, 383, 389,
    397, 401, 409, 419, 421, 431, 433, 439, 443, 449, 457, 461, 463, 467,
    479, 487, 491, 499, 503, 509, 521, 523, 541,
)


def _binormal_density(u, v, rho=_BIVARIATE_RHO):
    det = 1.0 - rho * rho
    return np.exp(-(u * u - 2.0 * rho * u * v + v * v) / (2.0 * det)) / (
        2.0 * math.pi * math.sqrt(det)
    )


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation scenario: response scale and tail-thickness fields."""

    id: int
    p: int

    def gamma(self, x):
        """Response scale at the given covariate row(s)."""
        x = np.asarray(x, dtype=float)
        x1 = x[..., 0]
        x2 = x[..., 1]
        if self.id == 1:
            out = 1.0 + (x1 > 0).astype(float)
        elif self.id == 2:
            out = 2.0 + 1.0 / (1.0 + np.exp(x1 * x1 + x2))
        else:
            out = 1.0 + 2.0 * math.pi * _binormal_density(2.0 * x1, 2.0 * x2)
        return float(out) if out.ndim == 0 else out

    def nu(self, x):
        """Student-t degrees of freedom at the given covariate row(s)."""
        x = np.asarray(x, dtype=float)
        x1 = x[..., 0]
        if self.id in (1, 2):
            x2 = x[..., 1]
            x3 = x[..., 2]
            out = 4.0 - (x1 * x1 - 2.0 * x2 * x2 + x3 * x3)
        else:
            out = 3.0 + 7.0 / (1.0 + np.exp(4.0 * x1 + 1.2))
        return float(out) if out.ndim == 0 else out


def scenario(scenario_id: int, p: int) -> ScenarioSpec:
    """Look up a simulation scenario; needs at least three covariates."""
    if scenario_id not in (1, 2, 3):
        raise ValueError(f"unknown scenario id {scenario_id}")
    if p < 3:
        raise ValueError("scenarios need p >= 3")
    return ScenarioSpec(id=int(scenario_id), p=int(p))


def sample_scenario(spec: ScenarioSpec, n: int, seed) -> Dataset:
    """Draw ``n`` i.i.d. rows: covariates uniform on [-1, 1]^p, response a
    scaled Student-t variate.

    The t draw uses the normal-over-root-chi-square ratio, so non-integer
    degrees of freedom are exact.  Deterministic in ``seed``.
    """
    n = int(n)
    if n < 1:
        raise ValueError("sample size must be positive")
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, spec.p))
    nu = spec.nu(X)
    t = rng.standard_normal(n) / np.sqrt(rng.chisquare(nu) / nu)
    names = tuple(f"x{j + 1}" for j in range(spec.p))
    return Dataset(features=X, response=spec.gamma(X) * t, feature_names=names)


def halton_points(count: int, p: int, skip: int = 0) -> np.ndarray:
    """First ``count`` Halton points (after ``skip``) mapped to (-1, 1)^p.

    Dimension j uses the (j+1)-th prime as its radical-inverse base.
    """
    count = int(count)
    skip = int(skip)
    if count < 0 or skip < 0:
        raise ValueError("count and skip must be non-negative")
    if p < 1 or p > len(_PRIMES):
        raise ValueError(f"p must lie in [1, {len(_PRIMES)}]")
    index = np.arange(skip + 1, skip + count + 1, dtype=np.int64)
    out = np.empty((count, p))
    for j in range(p):
        base = _PRIMES[j]
        i = index.copy()
        radical = np.zeros(count)
        denom = 1.0
        while np.any(i > 0):
            denom *= base
            radical += (i % base) / denom
            i //= base
        out[:, j] = 2.0 * radical - 1.0
    return out


def _t_cdf(t: float, df: float) -> float:
    """Student-t distribution function via the regularized incomplete beta."""
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    tail = 0.5 * float(betainc(df / 2.0, 0.5, x))
    return 1.0 - tail if t > 0 else tail


def _t_quantile(tau: float, df: float) -> float:
    """Inverse t distribution function by bracketed bisection to 1e-10."""
    if tau == 0.5:
        return 0.0
    if tau < 0.5:
        return -_t_quantile(1.0 - tau, df)
    hi = 1.0
    for _ in range(400):
        if _t_cdf(hi, df) >= tau:
            break
        hi *= 2.0
    else:
        raise ValueError("failed to bracket the t quantile")
    lo = 0.0
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if _t_cdf(mid, df) < tau:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def true_quantile_y(spec: ScenarioSpec, x, tau: float) -> float:
    """Exact conditional quantile of the raw response at covariate ``x``."""
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie strictly inside (0, 1)")
    x = np.asarray(x, dtype=float)
    return float(spec.gamma(x)) * _t_quantile(tau, float(spec.nu(x)))


def true_block_max_quantile(spec: ScenarioSpec, x, tau: float, m: int) -> float:
    """Exact ``tau``-quantile of the maximum of ``m`` i.i.d. response copies
    at covariate ``x`` (the covariate held fixed within the block): the
    distribution of the max is the m-th power of the response distribution,
    so its quantile is the tau^(1/m)-quantile of a single draw."""
    m = int(m)
    if m < 1:
        raise ValueError("block size must be a positive integer")
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie strictly inside (0, 1)")
    return true_quantile_y(spec, x, tau ** (1.0 / m))
