import numpy as np
import pytest

from geodesign import Design, Location, PredictionSet
from geodesign.config import example_problem, scenario_prior
from geodesign.inference import PriorSpec
from geodesign.losses import DesignProblem
from geodesign.model import PARAM_NAMES
from geodesign.rng import substream


def unit_location(x, y):
    return Location(x=float(x), y=float(y), covariates=(float(x), float(y)))


def random_unit_design(n, seed):
    rng = substream(seed, 77)
    xs = rng.uniform(0.0, 1.0, size=n)
    ys = rng.uniform(0.0, 1.0, size=n)
    return Design(tuple(unit_location(x, y) for x, y in zip(xs, ys)))


def pinned_prior(free: dict, pin_var: float = 1e-6) -> PriorSpec:
    """Table-style prior with every parameter pinned except those in ``free``.

    ``free`` maps parameter names to (mean, variance).  Pinned parameters
    keep the moderate-scenario mean with a tiny variance, except where a
    mean is supplied as a ``(mean,)`` single.
    """
    base = scenario_prior(0.5)
    means = base.mean.copy()
    variances = np.full(len(PARAM_NAMES), pin_var)
    for name, spec in free.items():
        idx = PARAM_NAMES.index(name)
        if len(spec) == 1:
            means[idx] = spec[0]
        else:
            means[idx] = spec[0]
            variances[idx] = spec[1]
    return PriorSpec.from_means_and_variances(means, variances)


@pytest.fixture(scope="session")
def moderate_problem():
    problem, _ = example_problem("moderate")
    return problem


@pytest.fixture(scope="session")
def moderate_space():
    _, space = example_problem("moderate")
    return space


@pytest.fixture(scope="session")
def small_problem(moderate_problem):
    """Moderate-scenario model with a small prediction set for fast tests."""
    points = tuple(unit_location(x, y) for x, y in [(0.1, 0.1), (0.9, 0.2), (0.4, 0.8), (0.8, 0.9)])
    return DesignProblem(
        model=moderate_problem.model,
        prior=moderate_problem.prior,
        prediction_set=PredictionSet(points),
    )


# ---------------------------------------------------------------------------
# Shared study fixtures for the acceptance and pattern tests.  Search budgets
# are deliberately small (the acceptance criteria pin only the evaluation
# budgets); evaluation budgets follow the criteria.
# ---------------------------------------------------------------------------

SEARCH_BUDGET = dict(K=3, B=30, R=120, fit_restarts=1, fit_max_evals=1000)
EVAL_BUDGET = dict(K=20, B=60, R=300)
STUDY_SEED = 20260808

_SEARCH_KINDS = {"E": "estimation", "P": "prediction_mvn", "D": "dual"}


def _search_design(scenario, n, objective, seed):
    import time

    from geodesign.losses import LossSpec, make_evaluator
    from geodesign.optimize import coordinate_exchange_continuous

    problem, space = example_problem(scenario)
    spec = LossSpec(kind=_SEARCH_KINDS[objective], **SEARCH_BUDGET)
    evaluator = make_evaluator(problem, spec, SEARCH_BUDGET["K"], seed)
    t0 = time.perf_counter()
    design, trace = coordinate_exchange_continuous(
        space, n, evaluator, grid_levels=1, restarts=1, root_seed=seed, sweep_cap=3
    )
    print(
        f"\n[search] {scenario} n={n} objective={objective}: "
        f"{trace.total_evaluations} evaluations in {time.perf_counter() - t0:.0f}s",
        flush=True,
    )
    return design


@pytest.fixture(scope="session")
def example1_moderate_n10_designs():
    return {obj: _search_design("moderate", 10, obj, STUDY_SEED) for obj in ("E", "D", "P")}


@pytest.fixture(scope="session")
def example1_moderate_n10_values(example1_moderate_n10_designs, moderate_problem):
    from geodesign.evaluation import dual_objective_values

    return dual_objective_values(
        example1_moderate_n10_designs,
        moderate_problem,
        reps=20,
        root_seed=STUDY_SEED + 1,
        **EVAL_BUDGET,
    )


@pytest.fixture(scope="session")
def moderate_n5_prediction_design():
    return _search_design("moderate", 5, "P", STUDY_SEED + 2)


@pytest.fixture(scope="session")
def weak_n5_designs():
    return {obj: _search_design("weak", 5, obj, STUDY_SEED + 3) for obj in ("E", "P")}
