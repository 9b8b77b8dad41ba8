import math

import numpy as np
import pytest
from scipy.stats import kstest, norm

from geodesign import (
    BivariateObservation,
    Design,
    GaussianApprox,
    GlsmSpec,
    ParameterVector,
    PredictionSet,
    conditional_loglikelihood,
    laplace_fit,
    make_log_posterior,
    mc_loglikelihood,
    sample_posterior,
    sample_posterior_predictive,
)
from geodesign.config import scenario_prior
from geodesign.model import PARAM_NAMES, log_mixed_density, simulate_bivariate
from geodesign.rng import substream
from geodesign.spatial import build_covariance, sample_gaussian_field

from conftest import pinned_prior, random_unit_design, unit_location

MODEL = GlsmSpec()


def _theta_degenerate(**overrides):
    base = dict(
        beta1=(5.0, 0.0, 0.0),
        beta2=(math.log(45.0), 0.0, 0.0),
        log_sigma1=math.log(1.2),
        log_sill_ratio1=-60.0,
        log_range1=math.log(0.4),
        log_smooth1=math.log(1.5),
        log_sill_ratio2=-60.0,
        log_range2=math.log(0.4),
        log_smooth2=math.log(0.25),
        logit_tau=0.2,
    )
    base.update(overrides)
    return ParameterVector(**base)


def _theta_quadrature():
    # moderate field spread and a small count rate keep the integrand wide
    # against the quadrature node spacing, so the oracle itself is converged
    # (64 vs 128 nodes agree to ~2e-10 here)
    return ParameterVector(
        beta1=(5.0, 0.0, 0.0),
        beta2=(math.log(5.0), 0.0, 0.0),
        log_sigma1=math.log(1.2),
        log_sill_ratio1=math.log(0.09 / 0.4),
        log_range1=math.log(0.4),
        log_smooth1=math.log(1.5),
        log_sill_ratio2=math.log(0.09 / 0.4),
        log_range2=math.log(0.4),
        log_smooth2=math.log(0.25),
        logit_tau=0.3,
    )


class TestMcLoglikelihood:
    def test_degenerate_sills_equal_conditional_at_zero(self):
        theta = _theta_degenerate()
        design = random_unit_design(4, 11)
        data = [BivariateObservation(5.2, 40, 0), BivariateObservation(4.1, 52, 2)]
        for B in (1, 7, 50):
            mc = mc_loglikelihood(data, design, MODEL, theta, B, substream(1, B))
            cond = conditional_loglikelihood(data, design, MODEL, theta, np.zeros(4), np.zeros(4))
            assert mc == pytest.approx(cond, abs=1e-10)

    def test_same_seed_bit_identical(self):
        prior = scenario_prior(0.5)
        theta = ParameterVector.from_array(prior.sample(substream(2, 0)))
        design = random_unit_design(3, 12)
        data = [BivariateObservation(6.0, 30, 1)]
        a = mc_loglikelihood(data, design, MODEL, theta, 500, substream(3, 0))
        b = mc_loglikelihood(data, design, MODEL, theta, 500, substream(3, 0))
        assert a == b

    def test_matches_gauss_hermite_quadrature(self):
        theta = _theta_quadrature()
        design = Design((unit_location(0.3, 0.4),))
        rng = substream(123, 0)
        s1 = sample_gaussian_field(build_covariance(design, theta.matern1), rng)
        s2 = sample_gaussian_field(build_covariance(design, theta.matern2), rng)
        data = simulate_bivariate(design, theta, s1, s2, 1, rng)

        mc = mc_loglikelihood(data, design, MODEL, theta, 10**6, substream(5, 1))

        nodes, weights = np.polynomial.hermite.hermgauss(64)
        sd1 = math.sqrt(theta.matern1.partial_sill * (1 + 1e-8))
        sd2 = math.sqrt(theta.matern2.partial_sill * (1 + 1e-8))
        mu1 = theta.beta1[0] + math.sqrt(2) * sd1 * nodes
        mu2 = theta.beta2[0] + math.sqrt(2) * sd2 * nodes
        dens = np.exp(
            log_mixed_density(
                data[0].y1, float(data[0].y2), mu1[:, None], theta.sigma1, np.exp(mu2)[None, :], theta.alpha
            )
        )
        quad = float((weights[:, None] * weights[None, :] * dens).sum() / math.pi)
        assert abs(math.exp(mc - math.log(quad)) - 1.0) < 0.005

    def test_variance_shrinks_as_one_over_b(self):
        prior = scenario_prior(0.5)
        theta = ParameterVector.from_array(prior.sample(substream(6, 0)))
        design = random_unit_design(3, 13)
        rng = substream(6, 1)
        s1 = sample_gaussian_field(build_covariance(design, theta.matern1), rng)
        s2 = sample_gaussian_field(build_covariance(design, theta.matern2), rng)
        data = simulate_bivariate(design, theta, s1, s2, 1, rng)
        budgets = [100, 1000, 10000]
        variances = []
        for B in budgets:
            vals = [mc_loglikelihood(data, design, MODEL, theta, B, substream(7, r, B)) for r in range(50)]
            variances.append(np.var(vals, ddof=1))
        slope = np.polyfit(np.log(budgets), np.log(variances), 1)[0]
        assert -1.2 < slope < -0.8


class TestLaplaceFit:
    def test_empty_data_returns_prior(self):
        prior = scenario_prior(0.5)
        post = laplace_fit([], random_unit_design(3, 14), MODEL, prior, B=10, rng=substream(8, 0))
        assert np.array_equal(post.mean, prior.mean)
        assert np.array_equal(post.covariance, prior.covariance)

    def test_conjugate_normal_case(self):
        # Margin-one intercept free, everything else pinned, fields and the
        # copula switched off: the posterior for the intercept is the exact
        # Normal-Normal update.
        m0, v0 = 5.0, 4.0
        sigma = 1.2
        prior = pinned_prior(
            {
                "beta10": (m0, v0),
                "log_sill_ratio1": (-30.0,),
                "log_sill_ratio2": (-30.0,),
                "logit_tau": (-20.0,),
            }
        )
        design = Design(tuple(unit_location(x, 0.3) for x in np.linspace(0.1, 0.9, 6)))
        y1 = np.array([5.8, 4.2, 6.7, 5.1, 3.9, 5.5])
        rng = substream(9, 0)
        data = [BivariateObservation(float(v), int(rng.poisson(45.0)), i) for i, v in enumerate(y1)]
        # cancel the covariate terms so mu1 is the intercept alone
        prior2 = pinned_prior(
            {
                "beta10": (m0, v0),
                "beta11": (0.0,),
                "beta12": (0.0,),
                "beta21": (0.0,),
                "beta22": (0.0,),
                "log_sill_ratio1": (-30.0,),
                "log_sill_ratio2": (-30.0,),
                "logit_tau": (-20.0,),
            }
        )
        post = laplace_fit(data, design, MODEL, prior2, B=30, rng=substream(9, 1), restarts=1)
        v_post = 1.0 / (1.0 / v0 + len(y1) / sigma**2)
        m_post = v_post * (m0 / v0 + y1.sum() / sigma**2)
        assert post.mean[0] == pytest.approx(m_post, abs=1e-4)
        assert post.covariance[0, 0] == pytest.approx(v_post, abs=1e-4)

    def test_two_parameter_grid_oracle(self):
        prior = pinned_prior(
            {
                "beta10": (5.0, 0.04),
                "beta20": (3.8, 0.0125),
                "log_sill_ratio1": (-30.0,),
                "log_sill_ratio2": (-30.0,),
                "logit_tau": (-20.0,),
            }
        )
        theta_true = ParameterVector.from_array(prior.mean)
        design = random_unit_design(8, 15)
        rng = substream(10, 0)
        data = simulate_bivariate(design, theta_true, np.zeros(8), np.zeros(8), 2, rng, model=MODEL)
        post = laplace_fit(data, design, MODEL, prior, B=30, rng=substream(10, 1), restarts=1)

        logpost = make_log_posterior(data, design, MODEL, prior, 30, substream(10, 1))
        b10 = np.linspace(5.0 - 4 * 0.2, 5.0 + 4 * 0.2, 200)
        b20 = np.linspace(3.8 - 4 * math.sqrt(0.0125), 3.8 + 4 * math.sqrt(0.0125), 200)
        rows = np.repeat(prior.mean[None, :], 200 * 200, axis=0)
        grid = np.stack(np.meshgrid(b10, b20, indexing="ij"), axis=-1).reshape(-1, 2)
        rows[:, 0] = grid[:, 0]
        rows[:, 3] = grid[:, 1]
        values = np.concatenate([logpost.batch(rows[i : i + 2000]) for i in range(0, len(rows), 2000)])
        best = grid[int(np.argmax(values))]
        assert abs(post.mean[0] - best[0]) < 1e-2
        assert abs(post.mean[3] - best[1]) < 1e-2

    def test_covariance_is_spd_and_fit_deterministic(self, moderate_problem):
        design = random_unit_design(5, 16)
        prior = moderate_problem.prior
        theta = ParameterVector.from_array(prior.sample(substream(11, 0)))
        rng = substream(11, 1)
        s1 = sample_gaussian_field(build_covariance(design, theta.matern1), rng)
        s2 = sample_gaussian_field(build_covariance(design, theta.matern2), rng)
        data = simulate_bivariate(design, theta, s1, s2, 1, rng)
        a = laplace_fit(data, design, MODEL, prior, B=40, rng=substream(11, 2), restarts=1)
        b = laplace_fit(data, design, MODEL, prior, B=40, rng=substream(11, 2), restarts=1)
        np.linalg.cholesky(a.covariance)
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.covariance, b.covariance)

    @pytest.mark.slow
    def test_consistency_smoke(self):
        # More replicates per location shrink the sup-norm error of the
        # posterior mean.  The regime keeps the random fields degenerate
        # (the field-marginalising Monte Carlo likelihood is then exact for
        # any B) and frees exactly the parameters replication informs:
        # with sizable fields the prior-field importance average degrades
        # as replicates accumulate and no consistency statement holds at a
        # fixed field-draw budget.
        base_means = {
            "beta10": 5.0,
            "beta11": -2.8,
            "beta12": 8.0,
            "beta20": 3.8,
            "beta21": -0.5,
            "beta22": -0.7,
            "log_sigma1": math.log(1.2),
            "log_sill_ratio1": -60.0,
            "log_range1": math.log(0.5),
            "log_smooth1": math.log(1.5),
            "log_sill_ratio2": -60.0,
            "log_range2": math.log(0.5),
            "log_smooth2": math.log(0.25),
            "logit_tau": 0.85,
        }
        free_vars = {
            "beta10": 4.0,
            "beta11": 4.0,
            "beta12": 4.0,
            "beta20": 0.125,
            "beta21": 0.125,
            "beta22": 0.125,
            "log_sigma1": 0.25,
            "logit_tau": 0.25,
        }
        from geodesign.inference import PriorSpec
        from geodesign.model import PARAM_NAMES

        prior = PriorSpec.from_means_and_variances(
            [base_means[p] for p in PARAM_NAMES], [free_vars.get(p, 1e-4) for p in PARAM_NAMES]
        )
        design = random_unit_design(15, 17)
        wins = 0
        for seed in range(10):
            theta = ParameterVector.from_array(prior.sample(substream(20, seed)))
            full = simulate_bivariate(design, theta, np.zeros(15), np.zeros(15), 20, substream(21, seed))
            errors = {}
            for n_rep in (5, 20):
                data = [o for k, o in enumerate(full) if k % 20 < n_rep]
                post = laplace_fit(data, design, MODEL, prior, B=20, rng=substream(22, seed, n_rep), restarts=1)
                errors[n_rep] = np.abs(post.mean - theta.to_array()).max()
            wins += errors[20] < errors[5]
        assert wins >= 8


class TestPosteriorSampling:
    def test_degenerate_covariance_limit(self):
        prior = scenario_prior(0.5)
        approx = GaussianApprox(prior.mean, prior.covariance * 1e-12)
        draws = sample_posterior(approx, 200, substream(12, 0))
        assert np.abs(draws - prior.mean).max() < 1e-5

    def test_identity_covariance_moments(self):
        approx = GaussianApprox(np.zeros(14), np.eye(14))
        draws = sample_posterior(approx, 100_000, substream(13, 0))
        emp = np.cov(draws.T)
        assert np.linalg.norm(emp - np.eye(14)) / np.linalg.norm(np.eye(14)) < 0.05

    def test_prior_sample_sd_matches_table(self):
        prior = scenario_prior(0.5)
        draws = sample_posterior(prior.as_gaussian(), 100_000, substream(14, 0))
        sd = draws.std(axis=0, ddof=1)
        expected = np.sqrt(np.diag(prior.covariance))
        assert np.all(np.abs(sd / expected - 1.0) < 0.03)


class TestPosteriorPredictive:
    def _degenerate_approx(self):
        theta = _theta_degenerate(logit_tau=-20.0)
        return GaussianApprox(theta.to_array(), np.eye(14) * 1e-14)

    def test_sample_count_exact(self):
        pred = PredictionSet((unit_location(0.2, 0.2), unit_location(0.8, 0.8)))
        samples = sample_posterior_predictive(self._degenerate_approx(), MODEL, pred, 137, substream(15, 0))
        assert samples.count == 137
        assert samples.T == 2

    def test_normal_margin_ks(self):
        pred = PredictionSet((unit_location(0.2, 0.2),))
        samples = sample_posterior_predictive(self._degenerate_approx(), MODEL, pred, 8000, substream(16, 0))
        stat = kstest(samples.z1[:, 0], cdf=lambda v: norm.cdf(v, 5.0, 1.2))
        assert stat.pvalue > 1e-3

    def test_count_margin_mean(self):
        pred = PredictionSet((unit_location(0.5, 0.5),))
        samples = sample_posterior_predictive(self._degenerate_approx(), MODEL, pred, 10_000, substream(17, 0))
        assert abs(samples.z2[:, 0].mean() - 45.0) < 1.5
