"""Search the unit square for an estimation-efficient design.

A deliberately tiny run of the grid-refined coordinate exchange: three
points, one restart, coarse budgets.  Prints the accepted steps so the
descent is visible.
"""

from geodesign import LossSpec, coordinate_exchange_continuous, make_evaluator
from geodesign.config import example_problem

problem, space = example_problem("moderate")
spec = LossSpec(kind="estimation", K=2, B=30, R=60, fit_restarts=1, fit_max_evals=1200)
evaluator = make_evaluator(problem, spec, K=2, root_seed=5)

best, trace = coordinate_exchange_continuous(space, 3, evaluator, grid_levels=1, restarts=1, root_seed=5, sweep_cap=2)

print("accepted steps (coordinate index, loss):")
for design, loss, changed in trace.iterations:
    label = "start" if changed is None else f"coord {changed}"
    print(f"  {label:<8} loss {loss:9.4f}  points " + " ".join(f"({p.x:.2f},{p.y:.2f})" for p in design.points))
print(f"\n{trace.total_evaluations} expected-loss evaluations, converged: {trace.converged}")
print("best design:", " ".join(f"({p.x:.2f},{p.y:.2f})" for p in best.points))
