"""Coordinate-exchange search for expected-loss-minimising designs.

Two search modes are provided.  Over a discrete candidate set, each design
point in turn is exchanged against every candidate and the best strict
improvement is accepted.  Over a continuous rectangle, each scalar
coordinate in turn is line-searched on a 21-point grid; after a sweep makes
no change the grid span is halved around the incumbent and the search
repeats at the finer resolution.

Candidate evaluations for one coordinate are batched and the acceptance
decision is made afterwards in candidate order, so results do not depend on
evaluation scheduling.  Evaluations are cached by design, which makes
re-visited designs free within a search, and ties keep the incumbent so a
sweep always terminates.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import GeodesignError, ParameterDomainError, SearchError
from .records import format_record
from .rng import substream
from .spatial import Design, Location

log = logging.getLogger(__name__)

GRID_POINTS = 21
SWEEP_CAP = 20

# Optional worker override for candidate batches; sequential by default.
THREADS_ENV = "GEODESIGN_THREADS"


@dataclass(frozen=True)
class DesignSpace:
    """Where design points may be placed.

    Discrete spaces carry an explicit candidate list; continuous spaces a
    rectangle plus a covariate field mapping coordinates to the covariate
    vector of a point placed there.
    """

    candidates: tuple[Location, ...] | None = None
    bounds: tuple[tuple[float, float], tuple[float, float]] | None = None
    covariate_fn: object | None = None
    allow_replicates: bool = False

    def __post_init__(self):
        if (self.candidates is None) == (self.bounds is None):
            raise ParameterDomainError("a design space is either discrete or continuous")
        if self.candidates is not None:
            cands = tuple(self.candidates)
            object.__setattr__(self, "candidates", cands)
            if not cands:
                raise ParameterDomainError("candidate list must be nonempty")
            seen = {(p.x, p.y) for p in cands}
            if len(seen) != len(cands):
                raise ParameterDomainError("candidate locations must be unique")
        else:
            (xlo, xhi), (ylo, yhi) = self.bounds
            if not (xhi > xlo and yhi > ylo):
                raise ParameterDomainError("continuous bounds must be non-degenerate")

    @property
    def mode(self) -> str:
        return "discrete" if self.candidates is not None else "continuous"

    @staticmethod
    def discrete(candidates, allow_replicates: bool = False) -> "DesignSpace":
        return DesignSpace(candidates=tuple(candidates), allow_replicates=allow_replicates)

    @staticmethod
    def continuous(bounds, covariate_fn=None, allow_replicates: bool = True) -> "DesignSpace":
        return DesignSpace(
            candidates=None,
            bounds=((float(bounds[0][0]), float(bounds[0][1])), (float(bounds[1][0]), float(bounds[1][1]))),
            covariate_fn=covariate_fn if covariate_fn is not None else _coordinate_covariates,
            allow_replicates=allow_replicates,
        )

    def location_at(self, x: float, y: float) -> Location:
        if self.mode != "continuous":
            raise ParameterDomainError("location_at is only defined for continuous spaces")
        return Location(x=float(x), y=float(y), covariates=tuple(self.covariate_fn(x, y)))

    def contains(self, design: Design) -> bool:
        if self.mode == "discrete":
            cand = {(p.x, p.y) for p in self.candidates}
            return all((p.x, p.y) in cand for p in design.points)
        (xlo, xhi), (ylo, yhi) = self.bounds
        return all(xlo <= p.x <= xhi and ylo <= p.y <= yhi for p in design.points)


def _coordinate_covariates(x: float, y: float) -> tuple[float, float]:
    return (x, y)


@dataclass
class SearchTrace:
    """Accepted steps of one search: (design, loss, changed coordinate)."""

    iterations: list[tuple[Design, float, int | None]] = field(default_factory=list)
    converged: bool = False
    total_evaluations: int = 0

    def record(self, design: Design, loss: float, changed: int | None):
        self.iterations.append((design, loss, changed))

    def to_records(self) -> list[str]:
        lines = []
        for step, (design, loss, changed) in enumerate(self.iterations):
            points = ";".join(f"{p.x!r},{p.y!r}" for p in design.points)
            lines.append(
                format_record(
                    {
                        "step": step,
                        "expected_loss": float(loss),
                        "changed_coordinate": changed,
                        "points": points,
                    }
                )
            )
        lines.append(
            format_record(
                {
                    "converged": self.converged,
                    "total_evaluations": self.total_evaluations,
                }
            )
        )
        return lines


class _CachingEvaluator:
    """Wraps the user evaluator with a design-keyed cache and failure capture."""

    def __init__(self, evaluator):
        self._evaluator = evaluator
        self._cache: dict[tuple, float | None] = {}
        self.evaluations = 0

    @staticmethod
    def key(design: Design) -> tuple:
        return tuple((p.x, p.y) for p in design.points)

    def __call__(self, design: Design) -> float | None:
        key = self.key(design)
        if key in self._cache:
            return self._cache[key]
        try:
            value = float(self._evaluator(design))
        except GeodesignError as exc:
            log.warning("candidate evaluation failed, skipping: %s", exc)
            value = None
        else:
            self.evaluations += 1
        self._cache[key] = value
        return value

    def batch(self, designs: list[Design]) -> list[float | None]:
        pending = [d for d in designs if self.key(d) not in self._cache]
        workers = int(os.environ.get(THREADS_ENV, "1") or "1")
        if workers > 1 and len(pending) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(self, pending))
        return [self(d) for d in designs]


def _best_improvement(values: list[float | None], current: float) -> int | None:
    """Index of the strictest improvement; ties keep the incumbent."""
    best_i = None
    best_v = current
    for i, v in enumerate(values):
        if v is not None and v < best_v:
            best_i, best_v = i, v
    return best_i


def coordinate_exchange_discrete(
    space: DesignSpace,
    n: int,
    evaluator,
    restarts: int = 4,
    root_seed: int = 0,
    sweep_cap: int = SWEEP_CAP,
) -> tuple[Design, SearchTrace]:
    """Coordinate exchange over a discrete candidate set.

    From a random start, every design point in turn is exchanged against
    every candidate and the best strict improvement accepted; sweeps repeat
    until one passes unchanged or the cap is hit.  The best design over all
    restarts is returned together with the search trace.
    """
    if space.mode != "discrete":
        raise ParameterDomainError("coordinate_exchange_discrete needs a discrete space")
    cands = space.candidates
    if not space.allow_replicates and n > len(cands):
        raise ParameterDomainError(f"cannot place {n} distinct points among {len(cands)} candidates")
    ev = _CachingEvaluator(evaluator)
    trace = SearchTrace()
    best_design, best_loss = None, np.inf
    for restart in range(restarts):
        rng = substream(root_seed, 9, restart)
        current = _random_discrete_start(space, n, rng, ev)
        if current is None:
            continue
        cur_design, cur_loss = current
        trace.record(cur_design, cur_loss, None)
        converged = False
        for _ in range(sweep_cap):
            changed = False
            for i in range(n):
                swaps = []
                for cand in cands:
                    pts = list(cur_design.points)
                    if not space.allow_replicates:
                        others = {(p.x, p.y) for j, p in enumerate(pts) if j != i}
                        if (cand.x, cand.y) in others:
                            continue
                    pts[i] = cand
                    swaps.append(Design(tuple(pts)))
                values = ev.batch(swaps)
                pick = _best_improvement(values, cur_loss)
                if pick is not None:
                    cur_design, cur_loss = swaps[pick], values[pick]
                    trace.record(cur_design, cur_loss, i)
                    changed = True
            if not changed:
                converged = True
                break
        trace.converged = trace.converged or converged
        if cur_loss < best_loss:
            best_design, best_loss = cur_design, cur_loss
    trace.total_evaluations = ev.evaluations
    if best_design is None:
        raise SearchError("no starting design could be evaluated")
    return best_design, trace


def _random_discrete_start(space: DesignSpace, n: int, rng, ev, attempts: int = 10):
    cands = space.candidates
    for _ in range(attempts):
        idx = rng.choice(len(cands), size=n, replace=space.allow_replicates)
        design = Design(tuple(cands[int(i)] for i in idx))
        loss = ev(design)
        if loss is not None:
            return design, loss
    return None


def coordinate_exchange_continuous(
    space: DesignSpace,
    n: int,
    evaluator,
    grid_levels: int = 3,
    restarts: int = 4,
    root_seed: int = 0,
    sweep_cap: int = SWEEP_CAP,
    grid_points: int = GRID_POINTS,
) -> tuple[Design, SearchTrace]:
    """Grid-refined coordinate exchange over a rectangular region.

    Each scalar coordinate (x then y of every point) is line-searched over a
    ``grid_points`` grid spanning the bounds; once a sweep makes no change
    the grid span is halved around the incumbent and the sweeps repeat, for
    ``grid_levels`` resolutions in total.
    """
    if space.mode != "continuous":
        raise ParameterDomainError("coordinate_exchange_continuous needs a continuous space")
    (xlo, xhi), (ylo, yhi) = space.bounds
    spans = (xhi - xlo, yhi - ylo)
    final_spacing = min(spans) / (grid_points - 1) / 2 ** (grid_levels - 1)
    ev = _CachingEvaluator(evaluator)
    trace = SearchTrace()
    best_design, best_loss = None, np.inf
    for restart in range(restarts):
        rng = substream(root_seed, 9, restart)
        current = _random_continuous_start(space, n, rng, ev, final_spacing)
        if current is None:
            continue
        coords, cur_loss = current
        trace.record(_design_from_coords(space, coords), cur_loss, None)
        for level in range(grid_levels):
            scale = 2.0**level
            for _ in range(sweep_cap):
                changed = False
                for slot in range(2 * n):
                    i, axis = divmod(slot, 2)
                    lo, hi = (xlo, xhi) if axis == 0 else (ylo, yhi)
                    span = spans[axis] / scale
                    centre = coords[i][axis]
                    glo = max(lo, centre - span / 2.0)
                    ghi = min(hi, centre + span / 2.0)
                    grid = np.linspace(glo, ghi, grid_points)
                    moves, designs = [], []
                    for value in grid:
                        trial = [list(p) for p in coords]
                        trial[i][axis] = float(value)
                        if not space.allow_replicates and _min_separation(trial) <= final_spacing:
                            continue
                        moves.append(trial)
                        designs.append(_design_from_coords(space, trial))
                    values = ev.batch(designs)
                    pick = _best_improvement(values, cur_loss)
                    if pick is not None:
                        coords = [tuple(p) for p in moves[pick]]
                        cur_loss = values[pick]
                        trace.record(designs[pick], cur_loss, slot)
                        changed = True
                if not changed:
                    break
        trace.converged = True
        if cur_loss < best_loss:
            best_design, best_loss = _design_from_coords(space, coords), cur_loss
    trace.total_evaluations = ev.evaluations
    if best_design is None:
        raise SearchError("no starting design could be evaluated")
    return best_design, trace


def _min_separation(coords) -> float:
    pts = np.asarray(coords, dtype=float)
    if len(pts) < 2:
        return np.inf
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.sqrt((diff**2).sum(-1))
    return float(d[~np.eye(len(pts), dtype=bool)].min())


def _design_from_coords(space: DesignSpace, coords) -> Design:
    return Design(tuple(space.location_at(x, y) for x, y in coords))


def _random_continuous_start(space: DesignSpace, n: int, rng, ev, min_sep: float, attempts: int = 20):
    (xlo, xhi), (ylo, yhi) = space.bounds
    for _ in range(attempts):
        xs = rng.uniform(xlo, xhi, size=n)
        ys = rng.uniform(ylo, yhi, size=n)
        coords = list(zip(xs.tolist(), ys.tolist()))
        if not space.allow_replicates and _min_separation(coords) <= min_sep:
            continue
        loss = ev(_design_from_coords(space, coords))
        if loss is not None:
            return coords, loss
    return None
