"""Bivariate copula-linked generalised linear spatial model.

The model observes, at each design location, a continuous outcome y1 and a
count outcome y2.  Marginally

    y1 | s1 ~ Normal(mu1, sigma1^2),   mu1 = X' beta1 + s1   (identity link)
    y2 | s2 ~ Poisson(exp(mu2)),       mu2 = X' beta2 + s2   (log link)

with s1, s2 zero-mean Matérn Gaussian random effects, and the two margins
are tied together by a Clayton copula.  Because y2 is discrete, the joint
density of one observation is the Normal density times a difference of
conditional copula CDFs,

    f(y1, y2) = f1(y1) * (dC/du1(u1, u2) - dC/du1(u1, u2-)),

where u1 is the Normal CDF of y1, u2 the Poisson CDF at y2 and u2- the
Poisson CDF at y2 - 1 (zero when y2 = 0).

The transformed parameter vector stacks, in order: beta1 (3), beta2 (3),
log sigma1, log(sill1/range1), log range1, log nu1, log(sill2/range2),
log range2, log nu2 and logit(tau); 14 entries in total.  All copula
kernels receive alpha = 2 * exp(logit_tau), the exact image of the
tau = alpha/(alpha + 2) map.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, log_ndtr, ndtri, pdtr
from scipy.stats import poisson

from .copula import _du1_from_logs, _log_t, conditional_u2_quantile
from .exceptions import ParameterDomainError, SimulationDomainError
from .spatial import Design, Location, MaternParams

log = logging.getLogger(__name__)

THETA_DIM = 14
PARAM_NAMES = (
    "beta10",
    "beta11",
    "beta12",
    "beta20",
    "beta21",
    "beta22",
    "log_sigma1",
    "log_sill_ratio1",
    "log_range1",
    "log_smooth1",
    "log_sill_ratio2",
    "log_range2",
    "log_smooth2",
    "logit_tau",
)

# Densities are floored here instead of returning exact zero so that
# log-likelihoods stay finite for the mode search.
DENSITY_FLOOR = 1e-300
_LOG_FLOOR = math.log(DENSITY_FLOOR)
_LOG_2PI = math.log(2.0 * math.pi)

# Guard on the Poisson rate when simulating outcomes.
RATE_GUARD = 1e15


@dataclass(frozen=True)
class ParameterVector:
    """The full transformed parameter set of the bivariate model."""

    beta1: tuple[float, float, float]
    beta2: tuple[float, float, float]
    log_sigma1: float
    log_sill_ratio1: float
    log_range1: float
    log_smooth1: float
    log_sill_ratio2: float
    log_range2: float
    log_smooth2: float
    logit_tau: float

    def __post_init__(self):
        object.__setattr__(self, "beta1", tuple(float(b) for b in self.beta1))
        object.__setattr__(self, "beta2", tuple(float(b) for b in self.beta2))
        if len(self.beta1) != 3 or len(self.beta2) != 3:
            raise ParameterDomainError("beta1 and beta2 must each hold 3 coefficients")
        if not np.all(np.isfinite(self.to_array())):
            raise ParameterDomainError("parameter vector entries must be finite")

    def to_array(self) -> np.ndarray:
        return np.array(
            self.beta1
            + self.beta2
            + (
                self.log_sigma1,
                self.log_sill_ratio1,
                self.log_range1,
                self.log_smooth1,
                self.log_sill_ratio2,
                self.log_range2,
                self.log_smooth2,
                self.logit_tau,
            ),
            dtype=float,
        )

    @classmethod
    def from_array(cls, arr) -> "ParameterVector":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (THETA_DIM,):
            raise ParameterDomainError(f"expected a vector of length {THETA_DIM}, got shape {arr.shape}")
        return cls(tuple(arr[0:3]), tuple(arr[3:6]), *arr[6:])

    # Natural-scale quantities, recovered by the exact inverse transforms.
    @property
    def sigma1(self) -> float:
        return math.exp(self.log_sigma1)

    @property
    def tau(self) -> float:
        return 1.0 / (1.0 + math.exp(-self.logit_tau))

    @property
    def alpha(self) -> float:
        # tau/(1-tau) = exp(logit_tau), hence alpha = 2 exp(logit_tau).
        return 2.0 * math.exp(self.logit_tau)

    @property
    def matern1(self) -> MaternParams:
        return MaternParams(
            partial_sill=math.exp(self.log_sill_ratio1 + self.log_range1),
            range=math.exp(self.log_range1),
            smoothness=math.exp(self.log_smooth1),
        )

    @property
    def matern2(self) -> MaternParams:
        return MaternParams(
            partial_sill=math.exp(self.log_sill_ratio2 + self.log_range2),
            range=math.exp(self.log_range2),
            smoothness=math.exp(self.log_smooth2),
        )


@dataclass(frozen=True)
class BivariateObservation:
    """One (continuous, count) outcome pair tied to a design location."""

    y1: float
    y2: int
    location_index: int

    def __post_init__(self):
        if not math.isfinite(self.y1):
            raise ParameterDomainError("y1 must be finite")
        if self.y2 < 0 or int(self.y2) != self.y2:
            raise ParameterDomainError("y2 must be a nonnegative integer")
        if self.location_index < 0:
            raise ParameterDomainError("location_index must be nonnegative")
        object.__setattr__(self, "y2", int(self.y2))


@dataclass(frozen=True)
class GlsmSpec:
    """Structural description of the two marginal regressions.

    ``covariate_map1`` and ``covariate_map2`` name the two covariate columns
    entering each linear predictor (the intercept is implicit), and
    ``n_rep`` is the number of replicate observations per location.
    """

    covariate_map1: tuple[int, int] = (0, 1)
    covariate_map2: tuple[int, int] = (0, 1)
    link1: str = "identity"
    link2: str = "log"
    n_rep: int = 1

    def __post_init__(self):
        if self.link1 != "identity" or self.link2 != "log":
            raise ParameterDomainError("supported links are identity (margin 1) and log (margin 2)")
        for name in ("covariate_map1", "covariate_map2"):
            m = tuple(int(i) for i in getattr(self, name))
            object.__setattr__(self, name, m)
            if len(m) != 2 or any(i < 0 for i in m):
                raise ParameterDomainError(f"{name} must name two covariate columns")
        if self.n_rep < 1:
            raise ParameterDomainError("n_rep must be at least 1")


def design_matrices(points: tuple[Location, ...], model: GlsmSpec) -> tuple[np.ndarray, np.ndarray]:
    """(n, 3) regression matrices for the two margins, intercept first."""
    ncov = len(points[0].covariates)
    for m in (model.covariate_map1, model.covariate_map2):
        if max(m) >= ncov:
            raise ParameterDomainError(
                f"covariate map {m} references column {max(m)} but locations carry {ncov} covariates"
            )
    cov = np.array([p.covariates for p in points], dtype=float)
    ones = np.ones((len(points), 1))
    x1 = np.hstack([ones, cov[:, model.covariate_map1]])
    x2 = np.hstack([ones, cov[:, model.covariate_map2]])
    return x1, x2


def pack_observations(data, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Split observations into (index, y1, y2, -gammaln(y2 + 1)) arrays."""
    idx = np.array([obs.location_index for obs in data], dtype=int)
    if idx.size and idx.max() >= n:
        raise ParameterDomainError("observation location_index exceeds the design size")
    y1 = np.array([obs.y1 for obs in data], dtype=float)
    y2 = np.array([obs.y2 for obs in data], dtype=float)
    return idx, y1, y2, -gammaln(y2 + 1.0)


def poisson_cdf(k, rate):
    """Poisson CDF through the regularised upper incomplete gamma function."""
    return pdtr(k, rate)


def _log_mixed_density_core(y1, y2, log_pmf_coef, mu1, sigma1, log_rate, rate, alpha):
    """Floored log joint density; one Poisson CDF call per point.

    ``log_pmf_coef`` is ``-gammaln(y2 + 1)``, precomputable because the
    counts are fixed data.  The left CDF limit is recovered through the
    exact relation ``F(y2 - 1) = F(y2) - pmf(y2)``.

    When the pmf is negligible against the CDF the two conditional-CDF
    values agree to within rounding and their difference is pure noise; the
    midpoint form ``pmf * c(u1, u2 - pmf/2)`` of the same integral takes
    over there, with relative error of order pmf.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        z = (y1 - mu1) / sigma1
        log_f1 = -0.5 * z * z - np.log(sigma1) - 0.5 * _LOG_2PI
        log_u1 = log_ndtr(z)
        u2 = pdtr(y2, rate)
        log_pmf = y2 * log_rate - rate + log_pmf_coef
        pmf = np.exp(log_pmf)
        diff = _du1_from_logs(log_u1, u2, alpha) - _du1_from_logs(log_u1, u2 - pmf, alpha)
        direct = np.log(np.maximum(diff, 0.0))
        u2_mid = u2 - 0.5 * pmf
        log_copula_dens = (
            np.log1p(alpha)
            + (-alpha - 1.0) * (log_u1 + np.log(u2_mid))
            + (-1.0 / alpha - 2.0) * _log_t(log_u1, np.log(u2_mid), alpha)
        )
        narrow = pmf < 1e-8 * u2
        out = log_f1 + np.where(narrow, log_pmf + log_copula_dens, direct)
    out = np.asarray(out)
    floored = ~(out >= _LOG_FLOOR)  # catches -inf and nan
    if floored.any():
        log.debug("mixed density tail underflow floored at %d point(s)", int(floored.sum()))
        out = np.where(floored, _LOG_FLOOR, out)
    return out


def log_mixed_density(y1, y2, mu1, sigma1, rate, alpha):
    """Elementwise log joint density of (y1, y2); broadcasts all arguments.

    Returns values floored at log(1e-300); the number of floored entries is
    reported at debug level as tail-underflow events.
    """
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    rate = np.asarray(rate, dtype=float)
    with np.errstate(divide="ignore"):
        log_rate = np.log(rate)
    return _log_mixed_density_core(y1, y2, -gammaln(y2 + 1.0), mu1, sigma1, log_rate, rate, alpha)


def mixed_joint_density(y1: float, y2: int, mu1: float, sigma1: float, rate: float, alpha: float) -> float:
    """Joint density of one mixed observation.

    ``f1(y1) * (dC/du1(u1, u2) - dC/du1(u1, u2-))`` with u1 the Normal CDF of
    y1 and u2, u2- the Poisson CDF at y2 and y2 - 1.  Never returns exact
    zero; underflow is floored at 1e-300.
    """
    for name, v in (("sigma1", sigma1), ("rate", rate), ("alpha", alpha)):
        if not (np.isfinite(v) and v > 0):
            raise ParameterDomainError(f"{name} must be positive, got {v!r}")
    if y2 < 0 or int(y2) != y2:
        raise ParameterDomainError("y2 must be a nonnegative integer")
    return float(np.exp(log_mixed_density(float(y1), float(y2), mu1, sigma1, rate, alpha)))


@dataclass(frozen=True)
class NaturalParams:
    """Natural-scale view of a parameter vector, precomputed once per theta."""

    beta1: np.ndarray
    beta2: np.ndarray
    sigma1: float
    matern1: MaternParams
    matern2: MaternParams
    alpha: float

    @classmethod
    def from_theta(cls, theta: ParameterVector) -> "NaturalParams":
        return cls(
            beta1=np.asarray(theta.beta1, dtype=float),
            beta2=np.asarray(theta.beta2, dtype=float),
            sigma1=theta.sigma1,
            matern1=theta.matern1,
            matern2=theta.matern2,
            alpha=theta.alpha,
        )

    @classmethod
    def from_theta_array(cls, arr: np.ndarray) -> "NaturalParams":
        """Hot-path constructor; math.exp raises OverflowError out of range."""
        sigma1 = math.exp(arr[6])
        alpha = 2.0 * math.exp(arr[13])
        if sigma1 <= 0.0 or alpha <= 0.0:  # exp underflow
            raise ParameterDomainError("sigma1 and alpha must stay positive")
        return cls(
            beta1=arr[0:3],
            beta2=arr[3:6],
            sigma1=sigma1,
            matern1=MaternParams(math.exp(arr[7] + arr[8]), math.exp(arr[8]), math.exp(arr[9])),
            matern2=MaternParams(math.exp(arr[10] + arr[11]), math.exp(arr[11]), math.exp(arr[12])),
            alpha=alpha,
        )


def loglik_given_fields(y1, y2, log_pmf_coef, idx, x1, x2, nat: NaturalParams, s1, s2):
    """Log conditional likelihood for each row of field draws.

    ``s1`` and ``s2`` are (B, n) field values; returns a (B,) vector of
    sums of log joint densities over the observations.
    """
    with np.errstate(over="ignore", under="ignore"):
        mu1 = (x1 @ nat.beta1)[None, :] + s1
        mu2 = (x2 @ nat.beta2)[None, :] + s2
        rate = np.exp(mu2)
    terms = _log_mixed_density_core(
        y1[None, :],
        y2[None, :],
        log_pmf_coef[None, :],
        mu1[:, idx],
        nat.sigma1,
        mu2[:, idx],
        rate[:, idx],
        nat.alpha,
    )
    return terms.sum(axis=1)


def conditional_loglikelihood(data, design: Design, model: GlsmSpec, theta: ParameterVector, s1, s2) -> float:
    """Log likelihood of ``data`` given the two field realisations.

    The empty-data product is 1, so the empty log likelihood is 0.
    """
    if len(data) == 0:
        return 0.0
    idx, y1, y2, gln = pack_observations(data, design.n)
    x1, x2 = design_matrices(design.points, model)
    nat = NaturalParams.from_theta(theta)
    s1 = np.asarray(s1, dtype=float).reshape(1, design.n)
    s2 = np.asarray(s2, dtype=float).reshape(1, design.n)
    return float(loglik_given_fields(y1, y2, gln, idx, x1, x2, nat, s1, s2)[0])


def _clip_open_unit(u):
    return np.clip(u, 1e-16, 1.0 - 1e-16)


def draw_outcomes(mu1, rate, sigma1, alpha, rng: np.random.Generator):
    """Draw (y1, y2) pairs with exact margins and Clayton dependence.

    ``mu1`` and ``rate`` are broadcast-compatible arrays; ``sigma1`` and
    ``alpha`` may be scalars or arrays broadcasting with them.  y1 comes from
    the Normal inverse CDF at a uniform u1; u2 is the Clayton conditional
    quantile given u1 and y2 the Poisson inverse CDF of u2.
    """
    mu1 = np.asarray(mu1, dtype=float)
    u1 = _clip_open_unit(rng.random(mu1.shape))
    v = _clip_open_unit(rng.random(mu1.shape))
    y1 = mu1 + sigma1 * ndtri(u1)
    u2 = conditional_u2_quantile(u1, v, alpha) if np.ndim(alpha) == 0 else _vector_alpha_quantile(u1, v, alpha)
    y2 = poisson.ppf(np.clip(u2, 0.0, 1.0 - 1e-16), rate)
    y2 = np.maximum(y2, 0.0).astype(int)
    return y1, y2


def _vector_alpha_quantile(u1, v, alpha):
    """Clayton conditional quantile with a per-row alpha array."""
    alpha = np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore"):
        log_w = np.log(np.expm1(-(alpha / (1.0 + alpha)) * np.log(v)))
        log_a = -alpha * np.log(u1)
    return np.exp(-np.logaddexp(log_a + log_w, 0.0) / alpha)


def simulate_bivariate(
    design: Design,
    theta: ParameterVector,
    s1,
    s2,
    n_rep: int,
    rng: np.random.Generator,
    model: GlsmSpec | None = None,
) -> list[BivariateObservation]:
    """Simulate ``n_rep`` bivariate outcomes at every design location.

    ``s1`` and ``s2`` are the field values at the design points.  Raises a
    simulation-domain error naming the first location whose Poisson rate
    exceeds the overflow guard.
    """
    model = model if model is not None else GlsmSpec()
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    if s1.shape != (design.n,) or s2.shape != (design.n,):
        raise ParameterDomainError("field draws must have one value per design point")
    x1, x2 = design_matrices(design.points, model)
    nat = NaturalParams.from_theta(theta)
    mu1 = x1 @ nat.beta1 + s1
    with np.errstate(over="ignore"):
        rate = np.exp(x2 @ nat.beta2 + s2)
    bad = np.nonzero(~(rate <= RATE_GUARD))[0]
    if bad.size:
        i = int(bad[0])
        raise SimulationDomainError(
            f"Poisson rate overflow at location {i} ({design.points[i].x:g}, {design.points[i].y:g})"
        )
    y1, y2 = draw_outcomes(
        np.repeat(mu1[:, None], n_rep, axis=1), np.repeat(rate[:, None], n_rep, axis=1), nat.sigma1, nat.alpha, rng
    )
    out = []
    for i in range(design.n):
        for j in range(n_rep):
            out.append(BivariateObservation(y1=float(y1[i, j]), y2=int(y2[i, j]), location_index=i))
    return out
