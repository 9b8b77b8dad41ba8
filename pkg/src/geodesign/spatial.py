"""Locations, designs and Matérn Gaussian random fields.

The covariance model used throughout the package is the two-parameter
Matérn family

    Cov(h) = partial_sill * rho(h; range, smoothness)

    rho(h; g, nu) = (h/g)^nu * K_nu(h/g) / (2^(nu - 1) * Gamma(nu)),

where ``K_nu`` is the modified Bessel function of the second kind and ``h``
is the Euclidean distance between two locations.  ``rho`` is continuous at
the origin with rho(0) = 1.  The half-integer orders that dominate the
default priors reduce to closed forms,

    nu = 1/2 : exp(-h/g)
    nu = 3/2 : (1 + h/g) * exp(-h/g),

and are short-circuited so the hot simulation paths stay off the Bessel
routine.

All types here are immutable after construction and all operations are pure
given an explicit generator, so they are safe to call from many threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import kv

from .exceptions import ConditioningError, ParameterDomainError

# Jitter policy: start at JITTER_START * partial_sill, escalate tenfold up to
# JITTER_CAP * partial_sill before giving up.
JITTER_START = 1e-8
JITTER_CAP = 1e-4


@dataclass(frozen=True)
class Location:
    """A point in the study region with its attached covariate values."""

    x: float
    y: float
    covariates: tuple[float, ...] = ()

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ParameterDomainError("location coordinates must be finite")
        if any(not math.isfinite(c) for c in self.covariates):
            raise ParameterDomainError("location covariates must be finite")
        object.__setattr__(self, "covariates", tuple(float(c) for c in self.covariates))


@dataclass(frozen=True)
class Design:
    """An ordered collection of sampling locations."""

    points: tuple[Location, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if len(self.points) < 1:
            raise ParameterDomainError("a design needs at least one location")
        dims = {len(p.covariates) for p in self.points}
        if len(dims) > 1:
            raise ParameterDomainError("all design points must carry the same covariate dimension")

    @property
    def n(self) -> int:
        return len(self.points)

    def coordinates(self) -> np.ndarray:
        """(n, 2) array of point coordinates."""
        return np.array([(p.x, p.y) for p in self.points], dtype=float)


@dataclass(frozen=True)
class PredictionSet:
    """The fixed locations at which predictive uncertainty is scored."""

    points: tuple[Location, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if len(self.points) < 1:
            raise ParameterDomainError("a prediction set needs at least one location")

    @property
    def T(self) -> int:
        return len(self.points)

    def coordinates(self) -> np.ndarray:
        return np.array([(p.x, p.y) for p in self.points], dtype=float)


@dataclass(frozen=True)
class MaternParams:
    """Partial sill, range and smoothness of one Matérn field."""

    partial_sill: float
    range: float
    smoothness: float

    def __post_init__(self):
        for name in ("partial_sill", "range", "smoothness"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ParameterDomainError(f"{name} must be a positive finite real, got {v!r}")


class CovarianceMatrix:
    """A factorised Matérn covariance matrix.

    Attributes
    ----------
    entries : ndarray, shape (n, n)
        The symmetric positive-definite matrix, read-only.
    jitter_applied : float
        Diagonal jitter that was added to make the factorisation succeed.
    chol : ndarray, shape (n, n)
        Lower Cholesky factor of ``entries``.
    """

    __slots__ = ("entries", "jitter_applied", "chol")

    def __init__(self, entries: np.ndarray, jitter_applied: float, chol: np.ndarray):
        entries = np.asarray(entries, dtype=float)
        entries.flags.writeable = False
        self.entries = entries
        self.jitter_applied = float(jitter_applied)
        self.chol = chol

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def _matern_core(x: np.ndarray, smoothness: float) -> np.ndarray:
    """rho as a function of the scaled distance x = h / range."""
    if smoothness == 0.5:
        return np.exp(-x)
    if smoothness == 1.5:
        return (1.0 + x) * np.exp(-x)
    coef = 1.0 / (2.0 ** (smoothness - 1.0) * gamma_fn(smoothness))
    with np.errstate(invalid="ignore", over="ignore"):
        rho = coef * x**smoothness * kv(smoothness, x)
    # kv underflows to 0 far in the tail; kv(nu, 0) is inf and the 0*inf
    # at the origin is resolved by the continuity limit rho(0) = 1.
    rho = np.where(np.isfinite(rho), rho, 0.0)
    return np.where(x == 0.0, 1.0, np.clip(rho, 0.0, 1.0))


def matern_correlation(h, range: float, smoothness: float):
    """Matérn correlation rho(h; range, smoothness).

    Parameters
    ----------
    h : float or ndarray
        Nonnegative distance(s).
    range : float
        Distance scale of the correlation decay (> 0).
    smoothness : float
        Smoothness order nu (> 0).

    Returns
    -------
    float or ndarray
        Correlation value(s) in (0, 1]; exactly 1 at h = 0, the continuous
        limit of the family.
    """
    for name, v in (("range", range), ("smoothness", smoothness)):
        if not (np.isfinite(v) and v > 0):
            raise ParameterDomainError(f"{name} must be a positive finite real, got {v!r}")
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr < 0) or not np.all(np.isfinite(h_arr)):
        raise ParameterDomainError("distances must be finite and nonnegative")
    rho = _matern_core(h_arr / range, smoothness)
    if np.ndim(h) == 0:
        return float(rho)
    return rho


def _pairwise_distances(coords: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def covariance_from_distances(dist: np.ndarray, params: MaternParams, jitter: float | None = None) -> CovarianceMatrix:
    """Build and factorise ``partial_sill * rho(dist) + jitter * I``.

    ``jitter=None`` selects the default policy: start at
    ``JITTER_START * partial_sill`` and escalate tenfold on factorisation
    failure up to ``JITTER_CAP * partial_sill``.  An explicit jitter is tried
    as given and only escalated if the factorisation fails.
    """
    if jitter is not None and (jitter < 0 or not np.isfinite(jitter)):
        raise ParameterDomainError(f"jitter must be nonnegative and finite, got {jitter!r}")
    base = params.partial_sill * _matern_core(dist / params.range, params.smoothness)
    cap = JITTER_CAP * params.partial_sill
    j = JITTER_START * params.partial_sill if jitter is None else float(jitter)
    n = base.shape[0]
    eye = np.eye(n)
    while True:
        mat = base + j * eye
        try:
            chol = np.linalg.cholesky(mat)
            return CovarianceMatrix(mat, j, chol)
        except np.linalg.LinAlgError:
            nxt = JITTER_START * params.partial_sill if j == 0.0 else 10.0 * j
            if nxt > cap * (1.0 + 1e-12):
                off = dist[~np.eye(n, dtype=bool)]
                min_dist = float(off.min()) if off.size else 0.0
                raise ConditioningError(
                    f"covariance factorisation failed after jitter escalation to {j:g}; "
                    f"minimum pairwise distance is {min_dist:g}",
                    min_distance=min_dist,
                ) from None
            j = nxt


def build_covariance(design: Design, params: MaternParams, jitter: float | None = None) -> CovarianceMatrix:
    """Matérn covariance matrix over the points of ``design``.

    Entry (i, j) is ``partial_sill * rho(||d_i - d_j||)`` plus ``jitter`` on
    the diagonal; the returned matrix has passed a Cholesky factorisation.
    """
    dist = _pairwise_distances(design.coordinates())
    return covariance_from_distances(dist, params, jitter)


def sample_gaussian_field(cov: CovarianceMatrix, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw zero-mean Gaussian field values with covariance ``cov``.

    One draw of length n when ``size`` is None, else a ``(size, n)`` array.
    Draws are the Cholesky factor applied to i.i.d. standard normals, so a
    fixed seed gives bit-identical output.
    """
    if size is None:
        z = rng.standard_normal(cov.n)
        return cov.chol @ z
    z = rng.standard_normal((size, cov.n))
    return z @ cov.chol.T
