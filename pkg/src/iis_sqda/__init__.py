"""Innovated interaction screening and sparse quadratic discriminant analysis."""

from .datamodel import (
    AugmentedIndexMap,
    LabeledDataset,
    ReducedIndexSet,
    augment,
    augmented_design,
    load_csv,
    reduced_augment,
    save_csv,
)
from .precision import (
    CovarianceSummary,
    PrecisionEstimate,
    acceptability_report,
    class_covariances,
    estimate_precision,
    graphical_lasso,
    select_penalty_cv,
)
from .screening import (
    ScreeningResult,
    default_threshold,
    innovated_transform,
    population_interaction_set,
    screen,
    stepwise_screen,
    variance_statistic,
)
from .selection import (
    ElasticNetConfig,
    QuadraticClassifier,
    cv_tune,
    fit_elastic_net_logistic,
    refit_unpenalized,
)
from .classifiers import (
    BayesRule,
    GaussianScenario,
    bayes_rule,
    classify,
    dsda_baseline,
    iis_sqda,
    lda_plugin,
    misclassification_rate,
    oracle_classifier,
    plr_baseline,
    qda_plugin,
)
from .simbench import (
    PerformanceReport,
    make_scenario,
    run_replications,
    sample,
    score_selection,
)

__version__ = "0.1.0"
