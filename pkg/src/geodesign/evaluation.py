"""Post-search design studies.

Tools for judging designs once a search has produced them: design
efficiencies (ratio of summed expected losses against a reference design),
distributions of the expected loss over independent re-evaluations, the
accuracy-versus-cost comparison of the two predictive-entropy estimators,
and the fixed-design comparison against classical layouts (equally spaced
triangular, boundary, near-prediction maximin).

Prediction losses are reported after subtracting the design-independent
predictive entropy under the prior, so reported values measure the change
due to sampling; this happens only at reporting time, never inside a
search.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterDomainError, UndefinedEfficiencyError
from .inference import laplace_fit, sample_posterior_predictive
from .losses import (
    DesignProblem,
    LossSpec,
    _draw_dataset,
    canonical_design,
    expected_loss,
    loss_prediction_mvn,
    loss_prediction_nested,
    prior_prediction_entropy,
)
from .model import PARAM_NAMES
from .records import format_record
from .rng import derive_seed, substream
from .spatial import Design, PredictionSet

log = logging.getLogger(__name__)

OBJECTIVES = ("E", "P")

# Seed-derivation labels for the studies.
_KEY_REPLICATE, _KEY_INDEPENDENT, _KEY_PRIOR_TERM, _KEY_STUDY = 101, 102, 103, 104


@dataclass(frozen=True)
class EfficiencyReport:
    """Percentage efficiency of a design against a reference design."""

    design_id: str
    reference_design_id: str
    objective: str
    efficiency_percent: float
    reps: int

    def to_record(self) -> str:
        return format_record(
            {
                "design_id": self.design_id,
                "reference_design_id": self.reference_design_id,
                "objective": self.objective,
                "efficiency_percent": float(self.efficiency_percent),
                "reps": self.reps,
            }
        )


@dataclass(frozen=True)
class LossDistribution:
    """Replicated expected-loss values of one design under one objective."""

    design_id: str
    objective: str
    values: tuple[float, ...]

    def to_records(self) -> list[str]:
        return [
            format_record(
                {"design_id": self.design_id, "replicate": r, "objective": self.objective, "value": float(v)}
            )
            for r, v in enumerate(self.values)
        ]


def _objective_spec(objective: str, K: int, B: int, R: int) -> LossSpec:
    if objective == "E":
        return LossSpec(kind="estimation", K=K, B=B, R=R)
    if objective == "P":
        return LossSpec(kind="prediction_mvn", K=K, B=B, R=R)
    raise ParameterDomainError(f"objective must be one of {OBJECTIVES}, got {objective!r}")


def efficiency_from_values(values: np.ndarray, reference_values: np.ndarray) -> float:
    """The efficiency formula on raw replicate values: 100 * sum / sum."""
    num = float(np.sum(values))
    den = float(np.sum(reference_values))
    if den == 0.0:
        raise UndefinedEfficiencyError("reference loss sum is zero")
    return 100.0 * num / den


def efficiency(
    design: Design,
    reference: Design,
    objective: str,
    reps: int,
    root_seed: int,
    problem: DesignProblem,
    K: int = 100,
    B: int = 200,
    R: int = 500,
    design_id: str = "design",
    reference_id: str = "reference",
) -> EfficiencyReport:
    """Efficiency of ``design`` against ``reference`` under one objective.

    Runs ``reps`` expected-loss evaluations per design with paired seeds
    (replicate r of both designs shares one derived seed) and reports
    100 times the ratio of the summed values.  For the prediction objective
    the shared prior predictive entropy is subtracted from every value
    first.
    """
    if reps < 1:
        raise ParameterDomainError("reps must be at least 1")
    spec = _objective_spec(objective, K, B, R)
    shift = prior_prediction_entropy(problem, R, derive_seed(root_seed, _KEY_PRIOR_TERM)) if objective == "P" else 0.0
    vals, ref_vals = [], []
    for r in range(reps):
        seed = derive_seed(root_seed, _KEY_REPLICATE, r)
        vals.append(expected_loss(design, problem, spec, K, seed, design_id).expected_loss - shift)
        ref_vals.append(expected_loss(reference, problem, spec, K, seed, reference_id).expected_loss - shift)
    pct = efficiency_from_values(np.asarray(vals), np.asarray(ref_vals))
    return EfficiencyReport(design_id, reference_id, objective, pct, reps)


def loss_distribution(
    design: Design,
    objective: str,
    reps: int,
    root_seed: int,
    problem: DesignProblem,
    K: int = 100,
    B: int = 200,
    R: int = 500,
    design_id: str = "design",
) -> LossDistribution:
    """``reps`` fully independent expected-loss replicates of one design."""
    if reps < 1:
        raise ParameterDomainError("reps must be at least 1")
    spec = _objective_spec(objective, K, B, R)
    shift = prior_prediction_entropy(problem, R, derive_seed(root_seed, _KEY_PRIOR_TERM)) if objective == "P" else 0.0
    values = []
    for r in range(reps):
        seed = derive_seed(root_seed, _KEY_INDEPENDENT, r)
        values.append(expected_loss(design, problem, spec, K, seed, design_id).expected_loss - shift)
    return LossDistribution(design_id, objective, tuple(values))


def dual_objective_values(
    designs: dict[str, Design],
    problem: DesignProblem,
    reps: int,
    root_seed: int,
    K: int = 20,
    B: int = 200,
    R: int = 500,
) -> dict[str, dict[str, np.ndarray]]:
    """Replicated estimation and prediction values from dual evaluations.

    One dual-loss evaluation per (design, replicate) yields both the
    estimation and the (prior-entropy-shifted) prediction value, exactly as
    separate single-objective runs under the same paired seeds would, at
    half the cost.  Returns ``{name: {"E": values, "P": values}}``.
    """
    spec = LossSpec(kind="dual", K=K, B=B, R=R)
    shift = prior_prediction_entropy(problem, R, derive_seed(root_seed, _KEY_PRIOR_TERM))
    out: dict[str, dict[str, list[float]]] = {name: {"E": [], "P": []} for name in designs}
    for r in range(reps):
        seed = derive_seed(root_seed, _KEY_REPLICATE, r)
        for name, design in designs.items():
            report = expected_loss(design, problem, spec, K, seed, name)
            out[name]["E"].append(float(np.mean(report.components["estimation"])))
            out[name]["P"].append(float(np.mean(report.components["prediction"])) - shift)
    return {name: {obj: np.asarray(vals) for obj, vals in per.items()} for name, per in out.items()}


@dataclass
class ApproximationStudy:
    """Paired nested/moment-matched predictive losses over random designs."""

    rows: list[dict] = field(default_factory=list)
    pearson: float = float("nan")

    @property
    def mean_wall_nested(self) -> float:
        return float(np.mean([r["wall_time_nested"] for r in self.rows]))

    @property
    def mean_wall_mvn(self) -> float:
        return float(np.mean([r["wall_time_mvn"] for r in self.rows]))

    def to_records(self, include_wall_time: bool = True) -> list[str]:
        lines = []
        for row in self.rows:
            fields = {
                "design_id": row["design_id"],
                "loss_nested": float(row["loss_nested"]),
                "loss_mvn": float(row["loss_mvn"]),
            }
            if include_wall_time:
                fields["wall_time_nested"] = float(row["wall_time_nested"])
                fields["wall_time_mvn"] = float(row["wall_time_mvn"])
            lines.append(format_record(fields))
        return lines


def _design_stream_key(design: Design) -> int:
    """A stable 32-bit key derived from the design's coordinates."""
    import zlib

    payload = ";".join(f"{p.x!r},{p.y!r}" for p in design.points)
    return zlib.crc32(payload.encode())


def _random_design(space, n: int, rng) -> Design:
    if space.mode == "discrete":
        idx = rng.choice(len(space.candidates), size=n, replace=space.allow_replicates)
        return Design(tuple(space.candidates[int(i)] for i in idx))
    (xlo, xhi), (ylo, yhi) = space.bounds
    xs = rng.uniform(xlo, xhi, size=n)
    ys = rng.uniform(ylo, yhi, size=n)
    return Design(tuple(space.location_at(x, y) for x, y in zip(xs, ys)))


def approximation_study(
    problem: DesignProblem,
    space,
    design_count: int,
    n: int,
    root_seed: int,
    K: int = 10,
    B: int = 100,
    R: int = 200,
    fit_B: int = 200,
) -> ApproximationStudy:
    """Compare the two predictive-entropy estimators on random designs.

    Every design gets one dataset draw and one posterior fit, then both the
    nested and the moment-matched loss from that posterior, with wall
    times.  Dataset streams derive from the design's own coordinates, so
    identical designs produce identical values while distinct designs carry
    independent datasets.  The Pearson correlation of the paired losses
    summarises agreement.
    """
    if design_count < 2:
        raise ParameterDomainError("an approximation study needs at least two designs")
    design_rng = substream(root_seed, _KEY_STUDY)
    designs = [_random_design(space, n, design_rng) for _ in range(design_count)]
    study = ApproximationStudy()
    for j, design in enumerate(designs):
        design = canonical_design(design)
        key = derive_seed(root_seed, _design_stream_key(design))
        _, data = _draw_dataset(design, problem, substream(key, 0, 0))
        posterior = laplace_fit(data, design, problem.model, problem.prior, B=fit_B, rng=substream(key, 1, 0))
        t0 = time.perf_counter()
        nested = loss_prediction_nested(
            problem.model, posterior, problem.prediction_set, K, R, B, substream(key, 3, 0)
        )
        t1 = time.perf_counter()
        samples = sample_posterior_predictive(
            posterior, problem.model, problem.prediction_set, R, substream(key, 2, 0)
        )
        mvn = loss_prediction_mvn(samples)
        t2 = time.perf_counter()
        study.rows.append(
            {
                "design_id": f"random_{j:03d}",
                "loss_nested": nested,
                "loss_mvn": mvn,
                "wall_time_nested": t1 - t0,
                "wall_time_mvn": t2 - t1,
            }
        )
    nested_vals = np.array([r["loss_nested"] for r in study.rows])
    mvn_vals = np.array([r["loss_mvn"] for r in study.rows])
    with np.errstate(invalid="ignore", divide="ignore"):
        study.pearson = float(np.corrcoef(nested_vals, mvn_vals)[0, 1])
    return study


# ---------------------------------------------------------------------------
# Classical comparator designs
# ---------------------------------------------------------------------------


def triangular_design(space, n: int) -> Design:
    """Equally spaced triangular-lattice design inside the unit rectangle.

    Points fill a triangular lattice row by row and the lattice is scaled
    uniformly to fit the bounds, so every point's nearest-neighbour distance
    is the same.
    """
    (xlo, xhi), (ylo, yhi) = space.bounds
    cols = max(2, math.ceil(math.sqrt(n)))
    pts = []
    row = 0
    while len(pts) < n:
        offset = 0.5 * (row % 2)
        for c in range(cols):
            pts.append((c + offset, row * math.sqrt(3.0) / 2.0))
            if len(pts) == n:
                break
        row += 1
    pts = np.asarray(pts)
    pts -= pts.min(axis=0)
    width = max(pts[:, 0].max(), 1e-12)
    height = max(pts[:, 1].max(), 1e-12)
    scale = min((xhi - xlo) / width, (yhi - ylo) / height)
    pts = pts * scale
    pts[:, 0] += xlo + ((xhi - xlo) - pts[:, 0].max()) / 2.0
    pts[:, 1] += ylo + ((yhi - ylo) - pts[:, 1].max()) / 2.0
    return Design(tuple(space.location_at(x, y) for x, y in pts))


def boundary_design(space, n: int) -> Design:
    """``n`` points equally spaced along the rectangle boundary."""
    (xlo, xhi), (ylo, yhi) = space.bounds
    w, h = xhi - xlo, yhi - ylo
    perimeter = 2.0 * (w + h)
    pts = []
    for i in range(n):
        t = perimeter * i / n
        if t < w:
            pts.append((xlo + t, ylo))
        elif t < w + h:
            pts.append((xhi, ylo + (t - w)))
        elif t < 2 * w + h:
            pts.append((xhi - (t - w - h), yhi))
        else:
            pts.append((xlo, yhi - (t - 2 * w - h)))
    return Design(tuple(space.location_at(x, y) for x, y in pts))


def close_pred_design(space, prediction_set: PredictionSet, n: int) -> Design:
    """Greedy maximin design over the prediction locations.

    The first point is the prediction location closest to the grid
    centroid; each further point is the prediction location maximising the
    minimum distance to the points already placed (lowest index on ties).
    """
    coords = prediction_set.coordinates()
    if n > len(coords):
        raise ParameterDomainError("cannot place more points than prediction locations")
    centroid = coords.mean(axis=0)
    first = int(np.argmin(np.sum((coords - centroid) ** 2, axis=1)))
    chosen = [first]
    while len(chosen) < n:
        d = np.full(len(coords), np.inf)
        for i in range(len(coords)):
            if i in chosen:
                d[i] = -np.inf
                continue
            d[i] = min(np.hypot(*(coords[i] - coords[j])) for j in chosen)
        chosen.append(int(np.argmax(d)))
    return Design(tuple(space.location_at(*coords[i]) for i in chosen))


@dataclass
class FixedDesignStudy:
    """Prior/posterior variance comparison across a set of fixed designs.

    ``predictive_rows`` holds one entry per (design, location, response)
    with the prior and reps-averaged posterior predictive outcome variance;
    ``parameter_rows`` one entry per (design, parameter) with prior and
    averaged posterior variance.
    """

    predictive_rows: list[dict] = field(default_factory=list)
    parameter_rows: list[dict] = field(default_factory=list)

    def predictive_records(self) -> list[str]:
        return [
            format_record(
                {
                    "design_id": r["design_id"],
                    "location": r["location"],
                    "response": r["response"],
                    "prior_var": float(r["prior_var"]),
                    "post_var": float(r["post_var"]),
                }
            )
            for r in self.predictive_rows
        ]

    def parameter_records(self) -> list[str]:
        return [
            format_record(
                {
                    "design_id": r["design_id"],
                    "parameter": r["parameter"],
                    "prior_var": float(r["prior_var"]),
                    "post_var": float(r["post_var"]),
                }
            )
            for r in self.parameter_rows
        ]

    def mean_predictive_variance(self, design_id: str, response: int) -> float:
        vals = [
            r["post_var"] for r in self.predictive_rows if r["design_id"] == design_id and r["response"] == response
        ]
        return float(np.mean(vals))


def fixed_design_study(
    designs: dict[str, Design],
    problem: DesignProblem,
    reps: int,
    root_seed: int,
    B: int = 200,
    R: int = 500,
    fit_restarts: int = 3,
    fit_max_evals: int = 4000,
    prior_R: int = 20000,
) -> FixedDesignStudy:
    """Prior/posterior predictive- and parameter-variance study.

    For each design: ``reps`` simulated datasets, one posterior per
    dataset, posterior predictive outcome variances per prediction location
    and response plus per-parameter posterior variances, all averaged over
    the replicates.  The prior counterparts are computed once and shared;
    the count response's variance is heavy tailed, so the prior reference
    gets its own large sample budget.
    """
    pred_rng = substream(root_seed, _KEY_PRIOR_TERM)
    prior_samples = sample_posterior_predictive(
        problem.prior.as_gaussian(), problem.model, problem.prediction_set, prior_R, pred_rng
    )
    prior_var = {
        1: np.var(prior_samples.z1, axis=0, ddof=1),
        2: np.var(prior_samples.z2.astype(float), axis=0, ddof=1),
    }
    prior_param_var = np.diag(problem.prior.covariance)

    study = FixedDesignStudy()
    for name, design in designs.items():
        design = canonical_design(design)
        post_var = {1: np.zeros(problem.prediction_set.T), 2: np.zeros(problem.prediction_set.T)}
        param_var = np.zeros(len(PARAM_NAMES))
        used = 0
        for r in range(reps):
            seed = derive_seed(root_seed, _KEY_REPLICATE, r)
            try:
                _, data = _draw_dataset(design, problem, substream(seed, 0, 0))
                posterior = laplace_fit(
                    data,
                    design,
                    problem.model,
                    problem.prior,
                    B=B,
                    rng=substream(seed, 1, 0),
                    restarts=fit_restarts,
                    max_evals=fit_max_evals,
                )
                samples = sample_posterior_predictive(
                    posterior, problem.model, problem.prediction_set, R, substream(seed, 2, 0)
                )
            except Exception as exc:  # noqa: BLE001 - skip-and-count, as in expected_loss
                log.debug("fixed-design replicate %d failed for %s: %s", r, name, exc)
                continue
            post_var[1] += np.var(samples.z1, axis=0, ddof=1)
            post_var[2] += np.var(samples.z2.astype(float), axis=0, ddof=1)
            param_var += np.diag(posterior.covariance)
            used += 1
        if used == 0:
            raise UndefinedEfficiencyError(f"no replicate succeeded for design {name!r}")
        for response in (1, 2):
            avg = post_var[response] / used
            for t in range(problem.prediction_set.T):
                study.predictive_rows.append(
                    {
                        "design_id": name,
                        "location": t,
                        "response": response,
                        "prior_var": float(prior_var[response][t]),
                        "post_var": float(avg[t]),
                    }
                )
        for p, pname in enumerate(PARAM_NAMES):
            study.parameter_rows.append(
                {
                    "design_id": name,
                    "parameter": pname,
                    "prior_var": float(prior_param_var[p]),
                    "post_var": float(param_var[p] / used),
                }
            )
    return study
