"""Availability/propensity decomposition of survey interaction rates.

Thin python surface over the C++ core: the generative survey model,
estimators, the binned negative-binomial availability model, raking,
weighted least squares, smoothing splines, and KDE modal regression.
"""

from _availprop import (  # noqa: F401
    BinnedFit,
    DensityGrid,
    GridBounds,
    ModalCurve,
    NegBinomial,
    SplineFit,
    WlsFit,
    availability_rate,
    call_statistic,
    count_pmf,
    duration,
    effective_propensity,
    fit_binned_nb,
    fit_spline,
    interaction_rate,
    joint_probability,
    kde_density_at,
    lambda_variance_weight,
    mle_success_rate,
    modal_regression,
    national_average_propensity,
    normalized_heatmap,
    rake,
    sample_size_weights,
    scaled_collapse,
    significance_stars,
    silverman_factor_2d,
    weighted_kde_grid,
    weighted_zscore,
    wls_fit,
)

__all__ = [
    "BinnedFit",
    "DensityGrid",
    "GridBounds",
    "ModalCurve",
    "NegBinomial",
    "SplineFit",
    "WlsFit",
    "availability_rate",
    "call_statistic",
    "count_pmf",
    "duration",
    "effective_propensity",
    "fit_binned_nb",
    "fit_spline",
    "interaction_rate",
    "joint_probability",
    "kde_density_at",
    "lambda_variance_weight",
    "mle_success_rate",
    "modal_regression",
    "national_average_propensity",
    "normalized_heatmap",
    "rake",
    "sample_size_weights",
    "scaled_collapse",
    "significance_stars",
    "silverman_factor_2d",
    "weighted_kde_grid",
    "weighted_zscore",
    "wls_fit",
]

__version__ = "0.1.0"
