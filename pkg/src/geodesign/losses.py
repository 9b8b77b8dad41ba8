"""Design loss functions and their Monte Carlo expected-loss estimator.

Five losses score a dataset simulated at a candidate design:

``estimation``
    The negated Kullback-Leibler divergence from the Gaussian posterior to
    the Gaussian prior; always <= 0, zero only when no information was
    gained.
``prediction_mvn``
    A moment-matched entropy: per prediction location, the exact entropy of
    the bivariate Normal fitted to posterior-predictive outcome samples,
    summed over locations.  O(N) in the predictive sample budget.
``prediction_nested``
    The triple Monte Carlo estimator of the conditional predictive entropy:
    parameter draws from the posterior, predictive outcome draws for each,
    and an inner field-marginalised density average, all combined in
    log-sum-exp arithmetic.  O(N^3) in the sample budgets.
``dual``
    The sum of estimation and prediction_mvn, scoring both goals at once.
``prediction_variance``
    A comparator: the posterior-predictive variance of the linear-predictor
    fields, averaged over prediction locations and over both responses.

The expected loss of a design averages one of these over prior-predictive
datasets: draw parameters and fields from the prior, simulate outcomes at
the design, refit the posterior, score.  Per-draw seeds are derived from
the root seed alone, so two designs evaluated under the same root seed
share common random numbers, and extending the number of draws preserves
the values of the existing ones.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConditioningError, EvaluationError, GeodesignError, ParameterDomainError
from .inference import (
    GaussianApprox,
    PredictiveSamples,
    PriorSpec,
    _batched_field_chols,
    _natural_columns,
    laplace_fit,
    sample_posterior,
    sample_posterior_predictive,
)
from .model import GlsmSpec, ParameterVector, design_matrices, draw_outcomes, log_mixed_density, simulate_bivariate
from .records import format_record, parse_float, parse_int, parse_record
from .rng import substream
from .spatial import Design, PredictionSet, _pairwise_distances, build_covariance, sample_gaussian_field

log = logging.getLogger(__name__)

_LOG_2PI_E = 1.0 + math.log(2.0 * math.pi)

LOSS_KINDS = ("estimation", "prediction_nested", "prediction_mvn", "dual", "prediction_variance")

# Substream labels inside one expected-loss draw.
_STREAM_DATA, _STREAM_FIT, _STREAM_PRED, _STREAM_NESTED = 0, 1, 2, 3


@dataclass(frozen=True)
class DesignProblem:
    """Everything an expected-loss evaluation needs besides the design."""

    model: GlsmSpec
    prior: PriorSpec
    prediction_set: PredictionSet


@dataclass(frozen=True)
class LossSpec:
    """Which loss to evaluate and with what sample budgets.

    ``K`` is the parameter-draw budget of the nested estimator, ``B`` the
    field-draw budget (likelihood and nested inner average), ``R`` the
    predictive-draw budget.  ``fit_restarts`` and ``fit_max_evals`` bound
    the inner posterior mode searches.
    """

    kind: str
    K: int = 30
    B: int = 200
    R: int = 500
    fit_restarts: int = 3
    fit_max_evals: int = 4000

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ParameterDomainError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if min(self.K, self.B, self.R) < 1:
            raise ParameterDomainError("all sample budgets must be at least 1")


@dataclass
class LossReport:
    """Evaluated expected loss of one design."""

    design_id: str
    kind: str
    K: int
    expected_loss: float
    per_draw_losses: list[float]
    failure_count: int = 0
    wall_time: float | None = None
    components: dict[str, list[float]] = field(default_factory=dict)

    def to_record(self, include_wall_time: bool = True) -> str:
        fields = {
            "design_id": self.design_id,
            "kind": self.kind,
            "K": self.K,
            "expected_loss": float(self.expected_loss),
            "failure_count": self.failure_count,
            "wall_time": self.wall_time if include_wall_time else None,
        }
        return format_record(fields)

    @classmethod
    def from_record(cls, line: str) -> "LossReport":
        f = parse_record(line)
        return cls(
            design_id=f["design_id"],
            kind=f["kind"],
            K=parse_int(f["K"]),
            expected_loss=parse_float(f["expected_loss"]),
            per_draw_losses=[],
            failure_count=parse_int(f["failure_count"]),
            wall_time=parse_float(f["wall_time"]),
        )


def loss_estimation(prior: PriorSpec | GaussianApprox, posterior: GaussianApprox) -> float:
    """Negated Gaussian Kullback-Leibler divergence posterior -> prior.

    -1/2 [ tr(P0^-1 P) + (m - m0)' P0^-1 (m - m0) - k + log(det P0 / det P) ]
    for prior (m0, P0) and posterior (m, P) of dimension k.  Always <= 0,
    with equality only when the two Gaussians coincide.
    """
    if prior.dim != posterior.dim:
        raise ParameterDomainError("prior and posterior dimensions differ")
    k = prior.dim
    l0 = prior.chol
    delta = posterior.mean - prior.mean
    w = np.linalg.solve(l0, delta)
    half = np.linalg.solve(l0, posterior.chol)
    trace = float(np.sum(half * half))
    logdet0 = 2.0 * float(np.sum(np.log(np.diag(l0))))
    logdet1 = 2.0 * float(np.sum(np.log(np.diag(posterior.chol))))
    return -0.5 * (trace + float(w @ w) - k + logdet0 - logdet1)


def bivariate_normal_entropy(cov: np.ndarray) -> float:
    """Exact entropy of a bivariate Normal: log(2 pi e) + 1/2 log det(cov)."""
    cov = np.asarray(cov, dtype=float)
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    if det <= 0:
        raise ParameterDomainError("covariance must be positive definite")
    return _LOG_2PI_E + 0.5 * math.log(det)


def _location_covariances(z1: np.ndarray, z2: np.ndarray):
    """Per-location 2x2 sample covariance entries of paired outcome draws."""
    r = z1.shape[0]
    if r < 2:
        raise ParameterDomainError("need at least two samples per location")
    c1 = z1 - z1.mean(axis=0)
    c2 = z2 - z2.mean(axis=0)
    s11 = np.sum(c1 * c1, axis=0) / (r - 1)
    s22 = np.sum(c2 * c2, axis=0) / (r - 1)
    s12 = np.sum(c1 * c2, axis=0) / (r - 1)
    return s11, s22, s12


def loss_prediction_mvn(samples: PredictiveSamples, diagnostics: dict | None = None) -> float:
    """Moment-matched predictive entropy, summed over prediction locations.

    Per location the 2x2 sample covariance of the (z1, z2) draws is plugged
    into the exact bivariate Normal entropy.  A singular sample covariance
    (zero variance in a coordinate) gets a ridge of 1e-8 times its trace and
    the event is flagged through ``diagnostics``.
    """
    if samples.count < 10:
        raise ParameterDomainError("predictive entropy needs at least 10 samples per location")
    z2 = samples.z2.astype(float)
    s11, s22, s12 = _location_covariances(samples.z1, z2)
    det = s11 * s22 - s12 * s12
    bad = det <= 0
    if np.any(bad):
        ridge = 1e-8 * (s11 + s22)
        ridge = np.where(ridge > 0, ridge, 1e-12)
        s11 = np.where(bad, s11 + ridge, s11)
        s22 = np.where(bad, s22 + ridge, s22)
        det = s11 * s22 - s12 * s12
        log.warning("singular predictive covariance at %d location(s); ridge added", int(bad.sum()))
        if diagnostics is not None:
            diagnostics["ridged_locations"] = int(bad.sum())
    return float(np.sum(_LOG_2PI_E + 0.5 * np.log(det)))


def loss_dual(prior: PriorSpec | GaussianApprox, posterior: GaussianApprox, samples: PredictiveSamples) -> float:
    """Dual-purpose loss: the exact sum of the two component losses."""
    return loss_prediction_mvn(samples) + loss_estimation(prior, posterior)


def loss_prediction_variance(samples: PredictiveSamples) -> float:
    """Average posterior-predictive variance of the linear-predictor fields.

    Averages over prediction locations and over the two responses; use
    :func:`prediction_variance_by_response` for the per-response breakdown.
    """
    v1, v2 = prediction_variance_by_response(samples)
    return 0.5 * (v1 + v2)


def prediction_variance_by_response(samples: PredictiveSamples) -> tuple[float, float]:
    """Location-averaged predictive variance of each linear-predictor field."""
    return (
        float(np.mean(np.var(samples.mu1, axis=0, ddof=1))),
        float(np.mean(np.var(samples.mu2, axis=0, ddof=1))),
    )


def loss_prediction_nested(
    model: GlsmSpec,
    posterior: GaussianApprox,
    prediction_set: PredictionSet,
    K: int,
    R: int,
    B: int,
    rng: np.random.Generator,
    r_chunk: int = 64,
) -> float:
    """Triple-loop Monte Carlo estimator of the conditional predictive entropy.

    For each of ``K`` posterior parameter draws: simulate ``R`` predictive
    outcome vectors (fresh fields per draw), then score each outcome
    against the mixed copula density marginalised over ``B`` fresh field
    draws under that same parameter.  The marginalisation runs per
    prediction location with the per-location entropies summed, mirroring
    the location-additive structure of the moment-matched loss this
    estimator is the accuracy reference for.  Everything runs in
    log-sum-exp arithmetic; the R dimension is chunked to bound memory.
    """
    if min(K, R, B) < 1:
        raise ParameterDomainError("all sample budgets must be at least 1")
    thetas = sample_posterior(posterior, K, rng)
    x1, x2 = design_matrices(prediction_set.points, model)
    dist = _pairwise_distances(prediction_set.coordinates())
    t_count = prediction_set.T
    log_b = math.log(B)
    total = 0.0
    for k in range(K):
        row = thetas[k : k + 1]
        nat = _natural_columns(row)
        sigma1 = float(nat["sigma1"][0])
        alpha = float(nat["alpha"][0])
        chol1 = _batched_field_chols(dist, nat["sill1"], nat["range1"], nat["nu1"])[0]
        chol2 = _batched_field_chols(dist, nat["sill2"], nat["range2"], nat["nu2"])[0]
        mean1 = (nat["beta1"] @ x1.T)[0]
        mean2 = (nat["beta2"] @ x2.T)[0]

        # Predictive outcome draws, one fresh field pair per draw.
        sz1 = rng.standard_normal((R, t_count)) @ chol1.T
        sz2 = rng.standard_normal((R, t_count)) @ chol2.T
        with np.errstate(over="ignore"):
            rate_z = np.exp(mean2[None, :] + sz2)
        if np.any(~(rate_z <= 1e15)):
            raise ConditioningError("predictive rate overflow inside nested entropy estimator")
        z1, z2 = draw_outcomes(mean1[None, :] + sz1, rate_z, sigma1, alpha, rng)

        # Field draws for the inner marginalisation.
        sb1 = rng.standard_normal((B, t_count)) @ chol1.T
        sb2 = rng.standard_normal((B, t_count)) @ chol2.T
        mu1_b = mean1[None, :] + sb1
        with np.errstate(over="ignore"):
            rate_b = np.exp(mean2[None, :] + sb2)

        inner_sum = 0.0
        for lo in range(0, R, r_chunk):
            hi = min(lo + r_chunk, R)
            dens = log_mixed_density(
                z1[None, lo:hi, :],
                z2[None, lo:hi, :].astype(float),
                mu1_b[:, None, :],
                sigma1,
                rate_b[:, None, :],
                alpha,
            )
            shift = dens.max(axis=0)
            inner = shift + np.log(np.exp(dens - shift[None, :, :]).sum(axis=0)) - log_b
            inner_sum += float(np.sum(inner))
        total += inner_sum / R
    return -total / K


def prior_prediction_entropy(problem: DesignProblem, R: int, seed: int) -> float:
    """Moment-matched predictive entropy under the prior alone.

    Design independent; evaluation reports subtract it from prediction
    losses so the reported values measure the change due to the data.
    """
    samples = sample_posterior_predictive(
        problem.prior.as_gaussian(), problem.model, problem.prediction_set, R, substream(seed, _STREAM_PRED)
    )
    return loss_prediction_mvn(samples)


def canonical_design(design: Design) -> Design:
    """The design with its points in canonical (sorted) order.

    Losses are exchangeable in the point order, but the common random
    numbers pair field innovations with point positions; sorting makes the
    expected loss a function of the location set alone, so one subset gets
    one value no matter how a search ordered it.
    """
    return Design(tuple(sorted(design.points, key=lambda p: (p.x, p.y, p.covariates))))


def _draw_dataset(design: Design, problem: DesignProblem, rng: np.random.Generator):
    """One prior-predictive dataset at the design: theta, fields, outcomes."""
    theta = ParameterVector.from_array(problem.prior.sample(rng))
    cov1 = build_covariance(design, theta.matern1)
    cov2 = build_covariance(design, theta.matern2)
    s1 = sample_gaussian_field(cov1, rng)
    s2 = sample_gaussian_field(cov2, rng)
    data = simulate_bivariate(design, theta, s1, s2, problem.model.n_rep, rng, model=problem.model)
    return theta, data


def _evaluate_draw(design: Design, problem: DesignProblem, spec: LossSpec, root_seed: int, k: int):
    """Loss value (and components) of draw k; raises GeodesignError on failure."""
    _, data = _draw_dataset(design, problem, substream(root_seed, _STREAM_DATA, k))
    posterior = laplace_fit(
        data,
        design,
        problem.model,
        problem.prior,
        B=spec.B,
        rng=substream(root_seed, _STREAM_FIT, k),
        restarts=spec.fit_restarts,
        max_evals=spec.fit_max_evals,
    )
    components = {}
    if spec.kind == "estimation":
        value = loss_estimation(problem.prior, posterior)
    elif spec.kind == "prediction_nested":
        value = loss_prediction_nested(
            problem.model,
            posterior,
            problem.prediction_set,
            spec.K,
            spec.R,
            spec.B,
            substream(root_seed, _STREAM_NESTED, k),
        )
    else:
        samples = sample_posterior_predictive(
            posterior, problem.model, problem.prediction_set, spec.R, substream(root_seed, _STREAM_PRED, k)
        )
        if spec.kind == "prediction_mvn":
            value = loss_prediction_mvn(samples)
        elif spec.kind == "prediction_variance":
            value = loss_prediction_variance(samples)
        else:  # dual
            est = loss_estimation(problem.prior, posterior)
            pred = loss_prediction_mvn(samples)
            value = pred + est
            components = {"estimation": est, "prediction": pred}
    return value, components


def expected_loss(
    design: Design,
    problem: DesignProblem,
    loss_spec: LossSpec,
    K: int,
    root_seed: int,
    design_id: str = "design",
) -> LossReport:
    """Monte Carlo expected loss of ``design`` over ``K`` dataset draws.

    Each draw simulates a prior-predictive dataset at the design, refits the
    Gaussian posterior and evaluates the requested loss; the report carries
    the per-draw values and their mean.  Draws whose inner fit fails are
    skipped and counted; more than 20% failures aborts the evaluation.
    Deterministic given (design, root_seed, budgets).
    """
    if K < 1:
        raise ParameterDomainError("K must be at least 1")
    design = canonical_design(design)
    start = time.perf_counter()
    values: list[float] = []
    components: dict[str, list[float]] = {}
    failures = 0
    for k in range(K):
        try:
            value, comps = _evaluate_draw(design, problem, loss_spec, root_seed, k)
        except (GeodesignError, np.linalg.LinAlgError) as exc:
            failures += 1
            log.debug("draw %d failed: %s", k, exc)
            continue
        values.append(float(value))
        for name, v in comps.items():
            components.setdefault(name, []).append(float(v))
    if failures > 0.2 * K:
        raise EvaluationError(f"{failures} of {K} draws failed while evaluating {design_id!r}")
    return LossReport(
        design_id=design_id,
        kind=loss_spec.kind,
        K=K,
        expected_loss=float(np.mean(values)),
        per_draw_losses=values,
        failure_count=failures,
        wall_time=time.perf_counter() - start,
        components=components,
    )


def make_evaluator(problem: DesignProblem, loss_spec: LossSpec, K: int, root_seed: int):
    """Expected-loss closure for the design search.

    All candidate designs are scored under the same root seed, so the
    comparisons inside a search run on common random numbers.
    """

    def evaluate(design: Design) -> float:
        return expected_loss(design, problem, loss_spec, K, root_seed).expected_loss

    return evaluate
