"""Bayesian design of geostatistical sampling schemes for bivariate outcomes.

The library models a continuous and a count response observed across space
with two generalised linear spatial models joined by a Clayton copula, and
selects sampling locations by minimising entropy-based expected losses for
parameter estimation, spatial prediction, or both at once.

Layers, bottom up:

* :mod:`geodesign.spatial` - locations, designs, Matérn covariances and
  Gaussian random-field simulation;
* :mod:`geodesign.copula`, :mod:`geodesign.model` - the Clayton copula and
  the bivariate mixed-outcome model built on it;
* :mod:`geodesign.inference` - Monte Carlo marginal likelihood, Laplace
  posterior approximation, posterior and predictive sampling;
* :mod:`geodesign.losses` - the design losses and the expected-loss
  estimator;
* :mod:`geodesign.optimize` - coordinate-exchange design search;
* :mod:`geodesign.evaluation` - efficiency, distribution, approximation
  and fixed-design studies;
* :mod:`geodesign.config`, :mod:`geodesign.cli` - run configuration and
  the command line front end.
"""

__version__ = "0.1.0"

from .copula import (
    alpha_from_kendall_tau,
    clayton_cdf,
    clayton_du1,
    conditional_u2_quantile,
    kendall_tau_from_alpha,
)
from .exceptions import (
    ConditioningError,
    ConfigError,
    EvaluationError,
    FitFailureError,
    GeodesignError,
    IngestionError,
    ParameterDomainError,
    SearchError,
    SimulationDomainError,
    UndefinedEfficiencyError,
)
from .inference import (
    GaussianApprox,
    PredictiveSamples,
    PriorSpec,
    laplace_fit,
    make_log_posterior,
    mc_loglikelihood,
    sample_posterior,
    sample_posterior_predictive,
)
from .losses import (
    DesignProblem,
    LossReport,
    LossSpec,
    expected_loss,
    loss_dual,
    loss_estimation,
    loss_prediction_mvn,
    loss_prediction_nested,
    loss_prediction_variance,
    make_evaluator,
    prediction_variance_by_response,
    prior_prediction_entropy,
)
from .model import (
    BivariateObservation,
    GlsmSpec,
    ParameterVector,
    conditional_loglikelihood,
    mixed_joint_density,
    simulate_bivariate,
)
from .optimize import (
    DesignSpace,
    SearchTrace,
    coordinate_exchange_continuous,
    coordinate_exchange_discrete,
)
from .spatial import (
    CovarianceMatrix,
    Design,
    Location,
    MaternParams,
    PredictionSet,
    build_covariance,
    matern_correlation,
    sample_gaussian_field,
)
