import itertools

import numpy as np
import pytest

from geodesign import (
    Design,
    GeodesignError,
    Location,
    ParameterDomainError,
    coordinate_exchange_continuous,
    coordinate_exchange_discrete,
)
from geodesign.optimize import DesignSpace


def grid_candidates():
    # distinct pairwise-distance structure so the toy loss has a unique optimum
    pts = [(0.0, 0.0), (1.0, 0.05), (0.1, 0.95), (0.85, 0.9), (0.45, 0.5), (0.25, 0.75)]
    return tuple(Location(x, y, (x, y)) for x, y in pts)


def spread_loss(design):
    pts = design.coordinates()
    n = len(pts)
    return -sum(float(np.hypot(*(pts[i] - pts[j]))) for i in range(n) for j in range(i + 1, n))


class TestDesignSpace:
    def test_requires_one_mode(self):
        with pytest.raises(ParameterDomainError):
            DesignSpace(candidates=None, bounds=None)

    def test_duplicate_candidates_rejected(self):
        loc = Location(0.1, 0.1)
        with pytest.raises(ParameterDomainError):
            DesignSpace.discrete((loc, Location(0.1, 0.1)))

    def test_degenerate_bounds_rejected(self):
        with pytest.raises(ParameterDomainError):
            DesignSpace.continuous(((0.0, 0.0), (0.0, 1.0)))

    def test_default_covariates_are_coordinates(self):
        space = DesignSpace.continuous(((0.0, 1.0), (0.0, 1.0)))
        loc = space.location_at(0.3, 0.8)
        assert loc.covariates == (0.3, 0.8)

    def test_contains(self):
        space = DesignSpace.continuous(((0.0, 1.0), (0.0, 1.0)))
        inside = Design((space.location_at(0.5, 0.5),))
        outside = Design((Location(1.5, 0.5, (1.5, 0.5)),))
        assert space.contains(inside)
        assert not space.contains(outside)


class TestDiscreteExchange:
    def test_single_candidate(self):
        space = DesignSpace.discrete((Location(0.2, 0.2, (0.2, 0.2)),), allow_replicates=True)
        calls = []

        def ev(design):
            calls.append(design)
            return 1.0

        best, trace = coordinate_exchange_discrete(space, 1, ev, restarts=1, root_seed=0)
        assert best.points[0].x == 0.2
        # the initial design and the single (cached) swap
        assert trace.total_evaluations == 1

    def test_matches_exhaustive_enumeration(self):
        space = DesignSpace.discrete(grid_candidates())
        best, trace = coordinate_exchange_discrete(space, 3, spread_loss, restarts=4, root_seed=3)
        exhaustive_best = min(
            (spread_loss(Design(c)) for c in itertools.combinations(space.candidates, 3)),
        )
        assert spread_loss(best) == pytest.approx(exhaustive_best, abs=1e-12)
        assert trace.converged

    def test_monotone_accepted_steps(self):
        space = DesignSpace.discrete(grid_candidates())
        _, trace = coordinate_exchange_discrete(space, 3, spread_loss, restarts=2, root_seed=9)
        losses = [loss for _, loss, changed in trace.iterations if changed is not None]
        starts = [i for i, (_, _, changed) in enumerate(trace.iterations) if changed is None]
        for a, b in zip(starts, starts[1:] + [len(trace.iterations)]):
            segment = [trace.iterations[i][1] for i in range(a, b)]
            assert all(x >= y - 1e-15 for x, y in zip(segment, segment[1:]))

    def test_deterministic(self):
        space = DesignSpace.discrete(grid_candidates())
        a, _ = coordinate_exchange_discrete(space, 3, spread_loss, restarts=3, root_seed=21)
        b, _ = coordinate_exchange_discrete(space, 3, spread_loss, restarts=3, root_seed=21)
        assert [(p.x, p.y) for p in a.points] == [(p.x, p.y) for p in b.points]

    def test_no_replicates_by_default(self):
        space = DesignSpace.discrete(grid_candidates())
        best, _ = coordinate_exchange_discrete(space, 4, spread_loss, restarts=2, root_seed=4)
        coords = [(p.x, p.y) for p in best.points]
        assert len(set(coords)) == 4

    def test_replicates_forbidden_when_oversized(self):
        space = DesignSpace.discrete(grid_candidates())
        with pytest.raises(ParameterDomainError):
            coordinate_exchange_discrete(space, 7, spread_loss)

    def test_failing_candidates_skipped(self):
        space = DesignSpace.discrete(grid_candidates())
        banned = (0.45, 0.5)

        def ev(design):
            if any((p.x, p.y) == banned for p in design.points):
                raise GeodesignError("synthetic evaluator failure")
            return spread_loss(design)

        best, _ = coordinate_exchange_discrete(space, 3, ev, restarts=3, root_seed=5)
        assert banned not in {(p.x, p.y) for p in best.points}


class TestContinuousExchange:
    def test_quadratic_bowl(self):
        space = DesignSpace.continuous(((0.0, 1.0), (0.0, 1.0)))

        def bowl(design):
            return float(np.sum((design.coordinates() - 0.5) ** 2))

        best, trace = coordinate_exchange_continuous(space, 2, bowl, grid_levels=3, restarts=2, root_seed=5)
        spacing = 1.0 / 20 / 2**2
        assert np.abs(best.coordinates() - 0.5).max() <= spacing + 1e-12
        assert trace.converged

    def test_single_point_target_recovery(self):
        space = DesignSpace.continuous(((0.0, 1.0), (0.0, 1.0)))
        target = np.array([0.3, 0.7])

        def dist(design):
            return float(np.hypot(*(design.coordinates()[0] - target)))

        best, _ = coordinate_exchange_continuous(space, 1, dist, grid_levels=3, restarts=2, root_seed=6)
        spacing = 1.0 / 20 / 2**2
        assert dist(best) <= np.hypot(spacing, spacing)

    def test_deterministic(self):
        space = DesignSpace.continuous(((0.0, 1.0), (0.0, 1.0)))

        def bowl(design):
            return float(np.sum((design.coordinates() - 0.3) ** 2))

        a, _ = coordinate_exchange_continuous(space, 2, bowl, grid_levels=2, restarts=2, root_seed=8)
        b, _ = coordinate_exchange_continuous(space, 2, bowl, grid_levels=2, restarts=2, root_seed=8)
        assert np.array_equal(a.coordinates(), b.coordinates())

    def test_separation_enforced_without_replicates(self):
        space = DesignSpace.continuous(((0.0, 1.0), (0.0, 1.0)), allow_replicates=False)

        def clump(design):
            pts = design.coordinates()
            return float(np.sum((pts - 0.5) ** 2))  # wants every point at the centre

        best, _ = coordinate_exchange_continuous(space, 3, clump, grid_levels=2, restarts=1, root_seed=9)
        pts = best.coordinates()
        dists = [np.hypot(*(pts[i] - pts[j])) for i in range(3) for j in range(i + 1, 3)]
        final_spacing = 1.0 / 20 / 2
        assert min(dists) > final_spacing

    def test_trace_serialises(self):
        space = DesignSpace.continuous(((0.0, 1.0), (0.0, 1.0)))

        def bowl(design):
            return float(np.sum((design.coordinates() - 0.5) ** 2))

        _, trace = coordinate_exchange_continuous(space, 1, bowl, grid_levels=1, restarts=1, root_seed=10)
        lines = trace.to_records()
        assert any("expected_loss=" in line for line in lines)
        assert "total_evaluations=" in lines[-1]
