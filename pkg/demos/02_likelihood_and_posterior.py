"""Fit the Laplace posterior to one simulated dataset.

Simulates outcomes at a 10-point design from a prior draw, evaluates the
Monte Carlo marginal likelihood, runs the Laplace fit and reports how far
the posterior moved from the prior for each parameter.
"""

import numpy as np

from geodesign import Design, ParameterVector, laplace_fit, mc_loglikelihood, simulate_bivariate
from geodesign.config import example_problem
from geodesign.model import PARAM_NAMES
from geodesign.rng import substream
from geodesign.spatial import build_covariance, sample_gaussian_field

problem, space = example_problem("moderate")
rng = substream(7, 0)

design = Design(tuple(space.location_at(x, y) for x, y in rng.uniform(0, 1, (10, 2))))
theta_true = ParameterVector.from_array(problem.prior.sample(rng))
s1 = sample_gaussian_field(build_covariance(design, theta_true.matern1), rng)
s2 = sample_gaussian_field(build_covariance(design, theta_true.matern2), rng)
data = simulate_bivariate(design, theta_true, s1, s2, 1, rng)
print("simulated outcomes:")
for obs in data[:5]:
    print(f"  location {obs.location_index}: y1={obs.y1:6.2f}  y2={obs.y2}")
print("  ...")

ll = mc_loglikelihood(data, design, problem.model, theta_true, B=200, rng=substream(7, 1))
print(f"\nMonte Carlo log likelihood at the generating parameters: {ll:.2f}")

posterior = laplace_fit(data, design, problem.model, problem.prior, B=100, rng=substream(7, 2), restarts=1)
prior_sd = np.sqrt(np.diag(problem.prior.covariance))
post_sd = np.sqrt(np.diag(posterior.covariance))
print("\nparameter         true    prior mean -> posterior mean   sd shrinkage")
for i, name in enumerate(PARAM_NAMES):
    print(
        f"{name:<16} {theta_true.to_array()[i]:7.2f}  {problem.prior.mean[i]:7.2f} -> {posterior.mean[i]:7.2f}"
        f"          x{post_sd[i] / prior_sd[i]:.2f}"
    )
