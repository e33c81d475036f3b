"""End-to-end model: block maxima, a similarity forest over them, and
locally weighted penalized GEV fits, plus cross-validation of the penalty
and node size."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .data import BlockMaxSample, Dataset, make_blocks
from .forest import (
    ForestModel,
    ForestParams,
    fit_forest,
    forest_from_dict,
    forest_to_dict,
    similarity_weights,
    similarity_weights_matrix,
)
from .gev import (
    FitReport,
    GevParams,
    fit_unconditional,
    fit_weighted_mle,
    gev_nll_term,
    gev_quantile,
)

__all__ = [
    "MODEL_FORMAT",
    "DEFAULT_INTERMEDIATE_ORDER",
    "CV_INF_SENTINEL",
    "GevErfModel",
    "CvCell",
    "CvResult",
    "gev_erf_fit",
    "gev_erf_fit_blocks",
    "cross_validate",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

MODEL_FORMAT = "gevforest-model-v1"

# Quantile level above which the fitted tail model is trusted; below it the
# extreme-value extrapolation has no business being used.
DEFAULT_INTERMEDIATE_ORDER = 0.8

# Held-out likelihood terms off the fitted support enter the CV score as this
# finite stand-in so grid cells stay comparable.
CV_INF_SENTINEL = 1e10


@dataclass
class GevErfModel:
    """Fitted pipeline: similarity forest + block maxima + penalty setup.

    ``baseline`` is the uniform-weight fit; its shape estimate anchors the
    penalty and its parameters start every local optimisation.
    """

    forest: ForestModel
    blocks: BlockMaxSample
    penalty: float
    baseline: GevParams
    intermediate_order: float = DEFAULT_INTERMEDIATE_ORDER

    @property
    def shape_anchor(self) -> float:
        return self.baseline.xi

    def predict_params(self, x) -> GevParams:
        """Local GEV parameters at one covariate vector."""
        x = np.asarray(x, dtype=float)
        w = similarity_weights(self.forest, x)
        try:
            report = fit_weighted_mle(
                w,
                self.blocks.maxima,
                penalty=self.penalty,
                shape_anchor=self.shape_anchor,
                init=self.baseline,
            )
        except ValueError as err:
            raise ValueError(f"prediction failed at query {x.tolist()}: {err}") from err
        return report.params

    def predict_params_batch(self, X) -> list[GevParams]:
        X = np.asarray(X, dtype=float)
        W = similarity_weights_matrix(self.forest, X)
        out = []
        for i in range(X.shape[0]):
            try:
                report = fit_weighted_mle(
                    W[i],
                    self.blocks.maxima,
                    penalty=self.penalty,
                    shape_anchor=self.shape_anchor,
                    init=self.baseline,
                )
            except ValueError as err:
                raise ValueError(
                    f"prediction failed at query {X[i].tolist()}: {err}"
                ) from err
            out.append(report.params)
        return out

    def _check_tau(self, tau: float) -> float:
        tau = float(tau)
        if tau <= self.intermediate_order:
            raise ValueError(
                f"tau={tau} is below the intermediate order "
                f"{self.intermediate_order}; the tail model only extrapolates above it"
            )
        if tau >= 1.0:
            raise ValueError("tau must be below 1")
        return tau

    def predict_quantile(self, x, tau: float) -> float:
        """Extreme conditional quantile at one covariate vector."""
        tau = self._check_tau(tau)
        return gev_quantile(self.predict_params(x), tau)

    def predict_quantiles_batch(self, X, taus) -> np.ndarray:
        """Quantile matrix: one row per query, one column per level."""
        taus = [self._check_tau(t) for t in taus]
        params = self.predict_params_batch(X)
        return np.array([[gev_quantile(par, t) for t in taus] for par in params])


def gev_erf_fit_blocks(
    blocks: BlockMaxSample, forest_params: ForestParams, penalty: float
) -> GevErfModel:
    """Fit the pipeline on an existing block-max sample."""
    penalty = float(penalty)
    if penalty < 0:
        raise ValueError("penalty must be non-negative")
    forest = fit_forest(blocks, replace(forest_params, split_mode="quantile"))
    baseline = fit_unconditional(blocks.maxima)
    return GevErfModel(
        forest=forest,
        blocks=blocks,
        penalty=penalty,
        baseline=baseline.params,
    )


def gev_erf_fit(
    ds: Dataset, m: int, forest_params: ForestParams, penalty: float
) -> GevErfModel:
    """Divide the sample into blocks of size ``m`` and fit the pipeline."""
    return gev_erf_fit_blocks(make_blocks(ds, m), forest_params, penalty)


class CvCell(NamedTuple):
    penalty: float
    min_node_size: int
    cv_error: float
    fold_errors: tuple[float, ...]


@dataclass(frozen=True)
class CvResult:
    """Cross-validation grid: sorted rows plus the winning cell.

    Ties on the error break toward the smaller penalty, then the smaller
    node size.
    """

    table: tuple[CvCell, ...]
    best: CvCell


def _fold_bounds(n: int, folds: int) -> list[tuple[int, int]]:
    base, extra = divmod(n, folds)
    bounds = []
    start = 0
    for j in range(folds):
        size = base + (1 if j < extra else 0)
        bounds.append((start, start + size))
        start += size
    return bounds


def cross_validate(
    ds: Dataset,
    m: int,
    base_params: ForestParams,
    penalty_grid,
    node_size_grid,
    folds: int,
) -> CvResult:
    """Score every (penalty, node size) pair by held-out weighted-fit
    deviance over contiguous folds of the block-max sample."""
    folds = int(folds)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    penalties = sorted({float(p) for p in penalty_grid})
    node_sizes = sorted({int(s) for s in node_size_grid})
    if not penalties or not node_sizes:
        raise ValueError("grids must be non-empty")
    if any(p < 0 for p in penalties):
        raise ValueError("penalties must be non-negative")

    blocks = make_blocks(ds, m)
    bounds = _fold_bounds(blocks.n_blocks, folds)
    if min(b - a for a, b in bounds) < 3:
        raise ValueError("every fold needs at least 3 blocks")

    all_idx = np.arange(blocks.n_blocks)
    fold_sums = {
        (pen, mns): np.zeros(folds) for pen in penalties for mns in node_sizes
    }
    for mns in node_sizes:
        params = replace(base_params, min_node_size=mns, split_mode="quantile")
        for j, (a, b) in enumerate(bounds):
            test_idx = all_idx[a:b]
            train_idx = np.concatenate([all_idx[:a], all_idx[b:]])
            train = blocks.subset(train_idx)
            test = blocks.subset(test_idx)
            forest = fit_forest(train, params)
            baseline = fit_unconditional(train.maxima)
            weights = similarity_weights_matrix(forest, test.features)
            for pen in penalties:
                total = 0.0
                for i in range(test.n_blocks):
                    theta = fit_weighted_mle(
                        weights[i],
                        train.maxima,
                        penalty=pen,
                        shape_anchor=baseline.params.xi,
                        init=baseline.params,
                    ).params
                    term = gev_nll_term(theta, test.maxima[i])
                    total += term if np.isfinite(term) else CV_INF_SENTINEL
                fold_sums[(pen, mns)][j] = total

    table = []
    for pen in penalties:
        for mns in node_sizes:
            sums = fold_sums[(pen, mns)]
            table.append(
                CvCell(pen, mns, float(sums.mean()), tuple(float(v) for v in sums))
            )
    best = min(table, key=lambda c: (c.cv_error, c.penalty, c.min_node_size))
    return CvResult(table=tuple(table), best=best)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def model_to_dict(model: GevErfModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "penalty": model.penalty,
        "intermediate_order": model.intermediate_order,
        "baseline": [model.baseline.mu, model.baseline.sigma, model.baseline.xi],
        "blocks": {
            "features": model.blocks.features.tolist(),
            "maxima": model.blocks.maxima.tolist(),
            "block_size": model.blocks.block_size,
            "source_rows": model.blocks.source_rows.tolist(),
            "feature_names": list(model.blocks.feature_names),
        },
        "forest": forest_to_dict(model.forest),
    }


def model_from_dict(doc: dict) -> GevErfModel:
    tag = doc.get("format")
    if tag != MODEL_FORMAT:
        raise ValueError(f"unknown model format tag {tag!r}")
    blocks = BlockMaxSample(
        features=np.array(doc["blocks"]["features"]),
        maxima=np.array(doc["blocks"]["maxima"]),
        block_size=int(doc["blocks"]["block_size"]),
        source_rows=np.array(doc["blocks"]["source_rows"], dtype=np.int64),
        feature_names=tuple(doc["blocks"]["feature_names"]),
    )
    mu, sigma, xi = doc["baseline"]
    return GevErfModel(
        forest=forest_from_dict(doc["forest"]),
        blocks=blocks,
        penalty=float(doc["penalty"]),
        baseline=GevParams(mu=mu, sigma=sigma, xi=xi),
        intermediate_order=float(doc["intermediate_order"]),
    )


def save_model(model: GevErfModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> GevErfModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
