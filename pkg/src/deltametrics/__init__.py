"""Trustworthy point estimates and confidence intervals for online metrics.

All estimators run on mergeable summary statistics, so every analysis is
one distributed pass over raw data plus closed-form (or 1-D numeric)
post-processing:

- :mod:`~deltametrics.ratio`: percent-change intervals (delta method with
  optional bias correction, Fieller, Edgeworth).
- :mod:`~deltametrics.cluster`: variance of an average metric under
  cluster randomization.
- :mod:`~deltametrics.quantiles`: outer confidence intervals for quantile
  metrics on clustered data, plus a cluster bootstrap.
- :mod:`~deltametrics.crossover`: within-subject effects with arbitrary
  missing-data patterns via indicator augmentation and GLS.
- :mod:`~deltametrics.lmm`: the random-intercept mixed model used as a
  comparison baseline.
- :mod:`~deltametrics.simulate`: seeded generators and Monte-Carlo
  drivers that reproduce the reference coverage tables.
"""

from .cluster import (
    ClusterEstimate,
    ClusterSummary,
    delta_variance,
    difference_of_means,
    donner_variance,
    naive_variance,
    summarize,
)
from .crossover import (
    AugmentedPanel,
    CrossoverFit,
    DecompositionReport,
    GroupMetricVector,
    augment,
    decompose_complete_incomplete,
    fit_crossover,
    fit_crossover_delta,
    fit_crossover_lmm,
    metric_cov,
)
from .errors import (
    DegenerateDataError,
    DeltaMetricsError,
    FiellerDegenerateError,
    InputDomainError,
    InsufficientDataError,
)
from .lmm import LmmFit, fit_random_intercept, weighted_cluster_mean
from .moments import PairedMoments, PairedStats, QuadMoments, UniMoments
from .quantiles import (
    QuantileEstimate,
    bootstrap_ci,
    outer_ci_post,
    outer_ci_pre,
    select_ranks,
)
from .ratio import ConfidenceInterval, RatioInput, delta_ci, edgeworth_ci, fieller_ci

__version__ = "0.1.0"
