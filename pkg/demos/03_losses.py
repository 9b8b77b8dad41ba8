"""Score one design under every loss.

Runs the expected-loss estimator for the estimation, moment-matched
prediction, dual and prediction-variance losses on the same design with
common random numbers, plus one nested-entropy evaluation, and prints the
values side by side.
"""

import numpy as np

from geodesign import Design, LossSpec, expected_loss
from geodesign.config import example_problem
from geodesign.losses import prior_prediction_entropy
from geodesign.rng import substream

problem, space = example_problem("moderate")
rng = substream(42, 0)
design = Design(tuple(space.location_at(x, y) for x, y in rng.uniform(0, 1, (5, 2))))

print("expected losses of one random 5-point design (K = 8 dataset draws):")
for kind in ("estimation", "prediction_mvn", "dual", "prediction_variance"):
    spec = LossSpec(kind=kind, K=8, B=40, R=150, fit_restarts=1, fit_max_evals=1500)
    report = expected_loss(design, problem, spec, K=8, root_seed=123, design_id="demo")
    print(f"  {kind:<20} {report.expected_loss:10.3f}   (failures {report.failure_count}, {report.wall_time:.1f}s)")

spec = LossSpec(kind="prediction_nested", K=10, B=60, R=100, fit_restarts=1, fit_max_evals=1500)
report = expected_loss(design, problem, spec, K=2, root_seed=123, design_id="demo")
print(f"  {'prediction_nested':<20} {report.expected_loss:10.3f}   (2 outer draws; the expensive estimator)")

shift = prior_prediction_entropy(problem, 400, 77)
print(f"\nprior predictive entropy (subtracted from prediction losses in reports): {shift:.3f}")
