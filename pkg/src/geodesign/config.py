"""Problem configuration: named scenario presets and the run-file grammar.

A run is described by one human-editable text file.  The grammar is
line-based: full-line ``#`` comments, top-level ``key = value`` pairs for
``seed`` and ``scenario``, and ``[block]`` headers opening the ``model``,
``prior``, ``space``, ``prediction`` and ``budgets`` blocks whose entries
are again ``key = value`` with whitespace-separated value tokens.  Every
default that fires while parsing is echoed so the run log records the full
effective configuration.

The named scenarios (weak, moderate, strong) expand to the unit-square
simulation benchmark: Gaussian priors on the transformed parameters with
the correlation-range prior mean at 0.2, 0.5 or 0.8, a continuous
unit-square design space whose covariates are the coordinates themselves,
and a 5 x 5 prediction grid with 0.25 spacing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError
from .inference import PriorSpec
from .losses import DesignProblem
from .model import PARAM_NAMES, GlsmSpec
from .optimize import DesignSpace
from .spatial import Location, PredictionSet
from .stations import (
    AffineMap,
    StationRecord,
    bundled_stations_path,
    ingest_stations,
    station_locations,
    station_prediction_set,
    unit_box_map,
)

SCENARIOS = {"weak": 0.2, "moderate": 0.5, "strong": 0.8}


def scenario_prior(a: float) -> PriorSpec:
    """Independent Gaussian priors on the transformed scale for range level ``a``."""
    means = {
        "beta10": 5.0,
        "beta11": -2.8,
        "beta12": 8.0,
        "beta20": 3.8,
        "beta21": -0.5,
        "beta22": -0.7,
        "log_sigma1": math.log(1.2),
        "log_sill_ratio1": math.log(0.7 / a),
        "log_range1": math.log(a),
        "log_smooth1": math.log(1.5),
        "log_sill_ratio2": math.log(0.6 / a),
        "log_range2": math.log(a),
        "log_smooth2": math.log(0.25),
        "logit_tau": 0.85,
    }
    variances = {
        "beta10": 4.0,
        "beta11": 4.0,
        "beta12": 4.0,
        "beta20": 0.125,
        "beta21": 0.125,
        "beta22": 0.125,
        "log_sigma1": 0.25,
        "log_sill_ratio1": 0.25,
        "log_range1": 0.25,
        "log_smooth1": 0.25,
        "log_sill_ratio2": 0.125,
        "log_range2": 0.125,
        "log_smooth2": 0.25,
        "logit_tau": 0.25,
    }
    return PriorSpec.from_means_and_variances(
        [means[p] for p in PARAM_NAMES], [variances[p] for p in PARAM_NAMES]
    )


def unit_grid_prediction_set(step: float = 0.25) -> PredictionSet:
    """Regular unit-square prediction grid with the given spacing."""
    ticks = np.arange(0.0, 1.0 + 1e-12, step)
    points = tuple(Location(x=float(x), y=float(y), covariates=(float(x), float(y))) for y in ticks for x in ticks)
    return PredictionSet(points)


def example_problem(scenario: str) -> tuple[DesignProblem, DesignSpace]:
    """The unit-square benchmark problem for a named scenario."""
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of {sorted(SCENARIOS)}")
    prior = scenario_prior(SCENARIOS[scenario])
    model = GlsmSpec(covariate_map1=(0, 1), covariate_map2=(0, 1), n_rep=1)
    problem = DesignProblem(model=model, prior=prior, prediction_set=unit_grid_prediction_set())
    space = DesignSpace.continuous(((0.0, 1.0), (0.0, 1.0)), allow_replicates=True)
    return problem, space


@dataclass(frozen=True)
class Budgets:
    """Sample and search budgets; any field may be overridden per run."""

    K: int = 30  # outer Monte Carlo draws during optimisation
    K_eval: int = 100  # outer draws during evaluation studies
    B: int = 200  # field draws (likelihood, nested inner average)
    R: int = 500  # predictive draws
    reps: int = 100  # evaluation replicates
    restarts: int = 4  # search restarts
    grid_levels: int = 3  # refinement levels of the continuous search
    sweep_cap: int = 20
    fit_restarts: int = 3
    fit_max_evals: int = 4000

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            if getattr(self, name) < 1:
                raise ConfigError(f"budget {name} must be at least 1")


@dataclass
class ProblemConfig:
    """A fully validated run configuration."""

    problem: DesignProblem
    space: DesignSpace
    budgets: Budgets
    seed: int
    scenario: str | None
    stations: list[StationRecord] | None = None
    affine: AffineMap | None = None
    echoes: list[str] = field(default_factory=list)
    source_text: str = ""


# ---------------------------------------------------------------------------
# Grammar
# ---------------------------------------------------------------------------

_TOP_KEYS = {"seed", "scenario"}
_BLOCKS = {"model", "prior", "space", "prediction", "budgets"}
_PRIOR_KEYS = set(PARAM_NAMES) | {"covariance_file"}
_MODEL_KEYS = {"covariates1", "covariates2", "n_rep"}
_SPACE_KEYS = {"mode", "bounds", "allow_replicates", "path"}
_PREDICTION_KEYS = {"grid_step"}
_BUDGET_KEYS = set(Budgets.__dataclass_fields__)


def _parse_lines(text: str) -> dict[str | None, dict[str, tuple[str, int]]]:
    blocks: dict[str | None, dict[str, tuple[str, int]]] = {None: {}}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _BLOCKS:
                raise ConfigError(f"line {lineno}: unknown block [{name}]")
            current = name
            blocks.setdefault(name, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in blocks.setdefault(current, {}):
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        blocks[current][key] = (value, lineno)
    return blocks


def _want_int(entry: tuple[str, int], name: str) -> int:
    value, lineno = entry
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"line {lineno}: field {name!r} must be an integer, got {value!r}") from None


def _want_float(entry: tuple[str, int], name: str) -> float:
    value, lineno = entry
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"line {lineno}: field {name!r} must be a number, got {value!r}") from None


def _want_floats(entry: tuple[str, int], name: str, count: int | None = None) -> list[float]:
    value, lineno = entry
    try:
        out = [float(tok) for tok in value.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"line {lineno}: field {name!r} must hold numbers, got {value!r}") from None
    if count is not None and len(out) != count:
        raise ConfigError(f"line {lineno}: field {name!r} needs {count} numbers, got {len(out)}")
    return out


def _want_bool(entry: tuple[str, int], name: str) -> bool:
    value, lineno = entry
    low = value.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"line {lineno}: field {name!r} must be boolean, got {value!r}")


def _check_keys(block: dict, allowed: set[str], block_name: str):
    for key, (_, lineno) in block.items():
        if key not in allowed:
            raise ConfigError(f"line {lineno}: unknown field {key!r} in [{block_name}]")


def parse_config(path: str) -> ProblemConfig:
    """Parse and validate a run configuration file.

    Missing or contradictory fields raise a config error naming the field
    and line; every default that fires is echoed into ``echoes``.
    """
    try:
        with open(path) as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration file {path!r}: {exc}") from None
    return parse_config_text(text)


def parse_config_text(text: str) -> ProblemConfig:
    blocks = _parse_lines(text)
    echoes: list[str] = []
    top = blocks.get(None, {})
    for key, (_, lineno) in top.items():
        if key not in _TOP_KEYS:
            raise ConfigError(f"line {lineno}: unknown top-level field {key!r}")

    seed = _want_int(top["seed"], "seed") if "seed" in top else 0
    if "seed" not in top:
        echoes.append("seed = 0 (default)")
    scenario = top["scenario"][0] if "scenario" in top else None
    if scenario is not None and scenario not in SCENARIOS:
        raise ConfigError(f"line {top['scenario'][1]}: unknown scenario {scenario!r}")

    space_block = blocks.get("space", {})
    _check_keys(space_block, _SPACE_KEYS, "space")
    mode = space_block.get("mode", ("continuous" if scenario else "stations", 0))[0]
    if mode not in ("continuous", "stations"):
        raise ConfigError(f"space mode must be 'continuous' or 'stations', got {mode!r}")
    if "mode" not in space_block:
        echoes.append(f"space.mode = {mode} (default)")

    budgets_block = blocks.get("budgets", {})
    _check_keys(budgets_block, _BUDGET_KEYS, "budgets")
    budget_values = {}
    for name in Budgets.__dataclass_fields__:
        if name in budgets_block:
            budget_values[name] = _want_int(budgets_block[name], name)
        else:
            budget_values[name] = getattr(Budgets(), name)
            echoes.append(f"budgets.{name} = {budget_values[name]} (default)")
    budgets = Budgets(**budget_values)

    model_block = blocks.get("model", {})
    _check_keys(model_block, _MODEL_KEYS, "model")
    prior_block = blocks.get("prior", {})
    _check_keys(prior_block, _PRIOR_KEYS, "prior")
    prediction_block = blocks.get("prediction", {})
    _check_keys(prediction_block, _PREDICTION_KEYS, "prediction")

    stations = None
    affine = None
    if mode == "stations":
        path_entry = space_block.get("path")
        station_path = path_entry[0] if path_entry else bundled_stations_path()
        if path_entry is None:
            echoes.append("space.path = bundled synthetic network (default)")
        if station_path == "bundled":
            station_path = bundled_stations_path()
        stations = ingest_stations(station_path)
        if not stations:
            raise ConfigError("station file contains no stations")
        affine = unit_box_map(stations)
        candidates = station_locations(stations, affine)
        allow_rep = _want_bool(space_block["allow_replicates"], "allow_replicates") if "allow_replicates" in space_block else False
        space = DesignSpace.discrete(tuple(candidates), allow_replicates=allow_rep)
        prediction_set = station_prediction_set(stations, affine)
        default_map1, default_map2 = (0, 1), (0, 2)
        covariate_dim = 3
    else:
        bounds = (
            tuple(_want_floats(space_block["bounds"], "bounds", 4))
            if "bounds" in space_block
            else (0.0, 0.0, 1.0, 1.0)
        )
        if "bounds" not in space_block:
            echoes.append("space.bounds = 0 0 1 1 (default)")
        allow_rep = _want_bool(space_block["allow_replicates"], "allow_replicates") if "allow_replicates" in space_block else True
        space = DesignSpace.continuous(((bounds[0], bounds[2]), (bounds[1], bounds[3])), allow_replicates=allow_rep)
        step = _want_float(prediction_block["grid_step"], "grid_step") if "grid_step" in prediction_block else 0.25
        if "grid_step" not in prediction_block:
            echoes.append("prediction.grid_step = 0.25 (default)")
        prediction_set = unit_grid_prediction_set(step)
        default_map1, default_map2 = (0, 1), (0, 1)
        covariate_dim = 2

    n_rep = _want_int(model_block["n_rep"], "n_rep") if "n_rep" in model_block else 1
    map1 = (
        tuple(int(v) for v in _want_floats(model_block["covariates1"], "covariates1", 2))
        if "covariates1" in model_block
        else default_map1
    )
    map2 = (
        tuple(int(v) for v in _want_floats(model_block["covariates2"], "covariates2", 2))
        if "covariates2" in model_block
        else default_map2
    )
    for name, m in (("covariates1", map1), ("covariates2", map2)):
        if max(m) >= covariate_dim:
            raise ConfigError(f"field {name!r} references covariate column {max(m)} but the space provides {covariate_dim}")
    model = GlsmSpec(covariate_map1=map1, covariate_map2=map2, n_rep=n_rep)

    if scenario is not None:
        prior = scenario_prior(SCENARIOS[scenario])
        echoes.append(f"prior = scenario preset {scenario!r} (a = {SCENARIOS[scenario]})")
    else:
        prior = None
    prior = _apply_prior_block(prior, prior_block, echoes)
    if prior is None:
        raise ConfigError("no prior given: provide a scenario or a complete [prior] block")

    problem = DesignProblem(model=model, prior=prior, prediction_set=prediction_set)
    return ProblemConfig(
        problem=problem,
        space=space,
        budgets=budgets,
        seed=seed,
        scenario=scenario,
        stations=stations,
        affine=affine,
        echoes=echoes,
        source_text=text,
    )


def _apply_prior_block(prior: PriorSpec | None, block: dict, echoes: list[str]) -> PriorSpec | None:
    """Override (or build from scratch) the prior from per-parameter entries."""
    entries = {k: v for k, v in block.items() if k != "covariance_file"}
    if not entries and "covariance_file" not in block:
        return prior
    if prior is None:
        missing = [p for p in PARAM_NAMES if p not in entries]
        if missing:
            raise ConfigError(f"[prior] block is incomplete; missing {', '.join(missing)}")
        means = np.zeros(len(PARAM_NAMES))
        variances = np.ones(len(PARAM_NAMES))
    else:
        means = prior.mean.copy()
        variances = np.diag(prior.covariance).copy()
    for name, entry in entries.items():
        mean, var = _want_floats(entry, name, 2)
        if var <= 0:
            raise ConfigError(f"line {entry[1]}: prior variance of {name!r} must be positive")
        idx = PARAM_NAMES.index(name)
        means[idx] = mean
        variances[idx] = var
    if "covariance_file" in block:
        path, lineno = block["covariance_file"]
        try:
            cov = np.loadtxt(path)
        except OSError as exc:
            raise ConfigError(f"line {lineno}: cannot read covariance file: {exc}") from None
        if cov.shape != (len(PARAM_NAMES), len(PARAM_NAMES)):
            raise ConfigError(f"line {lineno}: covariance file must hold a {len(PARAM_NAMES)}x{len(PARAM_NAMES)} matrix")
        return PriorSpec(means, cov)
    return PriorSpec.from_means_and_variances(means, variances)
