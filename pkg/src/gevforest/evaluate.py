"""Error metrics, exceedance calibration, probability-integral-transform
goodness-of-fit statistics, and the block-size sensitivity sweep."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, BlockMaxSample, make_blocks
from .forest import ForestParams
from .gev import gev_cdf, gev_quantile
from .pipeline import gev_erf_fit

__all__ = [
    "MetricReport",
    "GofReport",
    "ise",
    "mise",
    "mae_medae",
    "metric_report",
    "wang_metric",
    "pit",
    "gof_tests",
    "block_size_sweep",
]


@dataclass(frozen=True)
class MetricReport:
    """Squared- and absolute-error summaries over a test grid."""

    ise: float
    mae: float
    medae: float
    errors: np.ndarray  # per-point pred - truth


@dataclass(frozen=True)
class GofReport:
    """Uniformity test statistics; smaller means a better fit."""

    ks_stat: float
    ad_stat: float
    cvm_stat: float
    n: int


def _paired(pred, truth):
    p = np.asarray(pred, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.shape != t.shape or p.ndim != 1 or p.size < 1:
        raise ValueError("pred and truth must be equally long non-empty vectors")
    return p, t


def ise(pred, truth) -> float:
    """Mean squared deviation over the test points."""
    p, t = _paired(pred, truth)
    return float(np.mean((p - t) ** 2))


def mise(values) -> float:
    """Average of squared-error summaries across replications."""
    v = np.asarray(values, dtype=float)
    if v.size < 1:
        raise ValueError("need at least one value")
    return float(v.mean())


def mae_medae(pred, truth) -> tuple[float, float]:
    """Mean and median absolute error."""
    p, t = _paired(pred, truth)
    abs_err = np.abs(p - t)
    return float(abs_err.mean()), float(np.median(abs_err))


def metric_report(pred, truth) -> MetricReport:
    p, t = _paired(pred, truth)
    mae, medae = mae_medae(p, t)
    return MetricReport(ise=ise(p, t), mae=mae, medae=medae, errors=p - t)


def wang_metric(pred_quantiles, observed, tau: float) -> float:
    """Standardized gap between the observed count strictly below the
    predicted quantiles and its nominal expectation n*tau."""
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie strictly inside (0, 1)")
    q, y = _paired(pred_quantiles, observed)
    n = y.size
    below = float(np.count_nonzero(y < q))
    return (below - n * tau) / math.sqrt(n * tau * (1.0 - tau))


def pit(model, test_blocks: BlockMaxSample) -> np.ndarray:
    """Probability integral transform of held-out block maxima under the
    model's local parameter predictions; uniform when the model is right."""
    if test_blocks.n_features != model.blocks.n_features:
        raise ValueError("model and test blocks disagree on covariate dimension")
    if hasattr(model, "predict_params_batch"):
        params = model.predict_params_batch(test_blocks.features)
    else:
        params = [model.predict_params(x) for x in test_blocks.features]
    return np.array(
        [gev_cdf(par, z) for par, z in zip(params, test_blocks.maxima)]
    )


def gof_tests(u) -> GofReport:
    """Kolmogorov-Smirnov, Anderson-Darling and Cramer-von Mises statistics
    against the uniform law on [0, 1].

    Values are clamped to [1e-12, 1 - 1e-12] before logs; anything outside
    [0, 1] by more than 1e-9 is rejected.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.size < 1:
        raise ValueError("need a non-empty vector of PIT values")
    if np.any(u < -1e-9) or np.any(u > 1.0 + 1e-9):
        raise ValueError("PIT values must lie in [0, 1]")
    n = u.size
    us = np.sort(np.clip(u, 1e-12, 1.0 - 1e-12))
    i = np.arange(1, n + 1)
    ks = float(np.max(np.maximum(i / n - us, us - (i - 1) / n)))
    cvm = float(1.0 / (12.0 * n) + np.sum((us - (2.0 * i - 1.0) / (2.0 * n)) ** 2))
    ad = float(
        -n - np.sum((2.0 * i - 1.0) * (np.log(us) + np.log(1.0 - us[::-1]))) / n
    )
    return GofReport(ks_stat=ks, ad_stat=ad, cvm_stat=cvm, n=n)


def block_size_sweep(
    train: Dataset,
    m_grid,
    forest_params: ForestParams,
    penalty: float,
    test_points,
    tau_levels,
    truth,
    holdout: Dataset,
    max_gof_blocks: int | None = None,
) -> list[dict]:
    """Refit the pipeline across a grid of block sizes.

    For each block size: quantile-error summaries on the test grid against
    ``truth(test_points, tau, m)``, plus uniformity statistics of the PIT of
    held-out block maxima.  Returns one row per (m, tau), sorted.
    """
    m_values = sorted({int(m) for m in m_grid})
    if not m_values:
        raise ValueError("block-size grid must be non-empty")
    taus = [float(t) for t in tau_levels]
    if not taus:
        raise ValueError("need at least one quantile level")
    test_points = np.asarray(test_points, dtype=float)

    rows = []
    for m in m_values:
        model = gev_erf_fit(train, m, forest_params, penalty)
        for tau in taus:
            model._check_tau(tau)
        params = model.predict_params_batch(test_points)
        test_blocks = make_blocks(holdout, m)
        if max_gof_blocks is not None and test_blocks.n_blocks > max_gof_blocks:
            test_blocks = test_blocks.subset(np.arange(max_gof_blocks))
        gof = gof_tests(pit(model, test_blocks))
        for tau in sorted(taus):
            pred = np.array([gev_quantile(par, tau) for par in params])
            target = np.asarray(truth(test_points, tau, m), dtype=float)
            rows.append(
                {
                    "m": m,
                    "tau": tau,
                    "log_mise": math.log(ise(pred, target)),
                    "ks_stat": gof.ks_stat,
                    "ad_stat": gof.ad_stat,
                    "cvm_stat": gof.cvm_stat,
                    "gof_n": gof.n,
                }
            )
    return rows
