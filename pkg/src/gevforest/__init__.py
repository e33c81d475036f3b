"""Extreme conditional quantile regression: a generalized extreme value
distribution is fit to covariate-dependent block maxima, localized by
similarity weights from a generalized random forest."""

from .data import (
    BlockMaxSample,
    Dataset,
    build_weather_features,
    make_blocks,
    read_csv,
    write_csv,
)
from .evaluate import (
    GofReport,
    MetricReport,
    block_size_sweep,
    gof_tests,
    ise,
    mae_medae,
    metric_report,
    mise,
    pit,
    wang_metric,
)
from .forest import (
    ForestModel,
    ForestParams,
    fit_forest,
    load_forest,
    save_forest,
    similarity_weights,
    similarity_weights_matrix,
    weighted_empirical_quantile,
)
from .gev import (
    FitReport,
    GevParams,
    fit_unconditional,
    fit_weighted_mle,
    gev_cdf,
    gev_nll_term,
    gev_quantile,
    penalized_weighted_nll,
    penalized_weighted_nll_grad,
    weighted_nll,
)
from .pipeline import (
    CvCell,
    CvResult,
    GevErfModel,
    cross_validate,
    gev_erf_fit,
    gev_erf_fit_blocks,
    load_model,
    save_model,
)
from .simulate import (
    ScenarioSpec,
    halton_points,
    sample_scenario,
    scenario,
    true_block_max_quantile,
    true_quantile_y,
)

__version__ = "0.1.0"
