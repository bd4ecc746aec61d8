#include "fuselvm/bound.hpp"
#include "fuselvm/inference.hpp"
#include "fuselvm/linalg.hpp"
#include "fuselvm/simulate.hpp"

#include "checks.hpp"
#include "fixtures.hpp"
#include "instances.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace fuselvm;
using namespace fuselvm::testing;

TEST(EStep, EmptyObservationReturnsPrior) {
    std::mt19937_64 gen(1);
    const ConditionParams p = random_condition(gen, 3, {4, 2});
    const std::vector<Eigen::VectorXd> counts{Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(2)};
    const std::vector<double> totals{0.0, 0.0};
    const ConditionCache cache = ConditionCache::build(p, 1e-8);
    const SamplePosterior q = e_step_sample(p, cache, counts, totals, SamplePosterior{}, FitOptions{});
    EXPECT_EQ(q.mean, p.mu);
    EXPECT_EQ(q.cov, p.sigma);
}

TEST(EStep, ShapeMismatch) {
    std::mt19937_64 gen(2);
    ModelParams mp;
    mp.latent_dim = 2;
    mp.conditions.push_back(random_condition(gen, 2, {3}));
    const std::vector<Eigen::VectorXd> counts{Eigen::VectorXd::Ones(4)};
    EXPECT_THROW(e_step_sample(mp, 0, counts, SamplePosterior{}, FitOptions{}), std::invalid_argument);
}

TEST(EStep, PosteriorShrinksPrior) {
    std::mt19937_64 gen(3);
    for (int t = 0; t < 30; ++t) {
        const ConditionParams p = random_condition(gen, 4, {6, 3});
        const ConditionData data = random_condition_data(gen, {6, 3}, 3, 30);
        for (const auto& q : run_estep(p, data, FitOptions{})) {
            EXPECT_GT(min_eigenvalue(q.cov), 0.0);
            EXPECT_GE(min_eigenvalue(p.sigma - q.cov), -1e-10);
        }
    }
}

TEST(EStep, ExpansionPointIsFixedPoint) {
    std::mt19937_64 gen(4);
    const ConditionParams p = random_condition(gen, 3, {5, 4}, 0.5);
    const ConditionData data = random_condition_data(gen, {5, 4}, 5, 20);
    for (const auto& q : run_estep(p, data, tight_inner())) {
        for (std::size_t l = 0; l < 2; ++l) EXPECT_LT((q.expansion[l] - p.theta[l] * q.mean).cwiseAbs().maxCoeff(), 1e-10);
    }
}

// The mean/covariance updates are the exact Gaussian moments of the
// quadratic surrogate; compare against assembling its normal equations densely.
TEST(EStep, CompletingTheSquareMatchesDenseSolve) {
    std::mt19937_64 gen(5);
    for (int t = 0; t < 50; ++t) EXPECT_LT(completing_the_square_error(gen, t), 1e-8) << "instance " << t;
}

// With weak per-sample information the fixed curvature is close to the true
// one and the variational moments should track the exact posterior.
TEST(EStep, MatchesQuadraturePosteriorWithWeakLikelihood) {
    std::mt19937_64 gen(6);
    for (int t = 0; t < 50; ++t) {
        const QuadratureComparison c = compare_with_quadrature(gen, 0.2, true);
        EXPECT_LT(c.mean_error, 0.10) << "instance " << t;
        EXPECT_LT(c.variance_error, 0.10) << "instance " << t;
    }
}

// The fixed curvature dominates the softmax Hessian, so the variational
// variance sits below the exact posterior variance.
TEST(EStep, VarianceBiasIsDownward) {
    std::mt19937_64 gen(7);
    for (double sd : {0.2, 0.5, 1.0}) {
        for (int t = 0; t < 50; ++t) EXPECT_TRUE(compare_with_quadrature(gen, sd, false).variance_below) << sd;
    }
}

TEST(Elbo, BelowQuadratureEvidence) {
    std::mt19937_64 gen(7);
    for (int t = 0; t < 30; ++t) {
        const ConditionParams p = random_condition(gen, 1, {3});
        const Eigen::VectorXd x = random_counts(gen, 3, 8);
        const ConditionData data = make_condition_data({{x}});
        const auto posts = run_estep(p, data, tight_inner());
        const double bound = condition_elbo(p, posts, data) + log_multinomial_coefficient(x);
        const QuadratureMoments ref =
            quadrature_posterior(p.mu(0), p.sigma(0, 0), {Eigen::VectorXd(p.theta[0].col(0))}, {x});
        EXPECT_LE(bound, ref.log_evidence + 1e-9);
    }
}

TEST(Elbo, ZeroDataAtPriorIsZero) {
    std::mt19937_64 gen(8);
    const ConditionParams p = random_condition(gen, 3, {4});
    const ConditionData data = make_condition_data({{Eigen::VectorXd::Zero(4)}, {Eigen::VectorXd::Zero(4)}});
    const auto posts = run_estep(p, data, FitOptions{});
    EXPECT_NEAR(condition_elbo(p, posts, data), 0.0, 1e-12);
}

TEST(Elbo, RotationInvariance) {
    std::mt19937_64 gen(9);
    for (int t = 0; t < 20; ++t) EXPECT_LE(rotation_change(gen, t), 1e-8) << "trial " << t;
}

TEST(MStep, IdenticalPosteriors) {
    std::mt19937_64 gen(10);
    const ConditionParams p = random_condition(gen, 3, {4});
    const ConditionData data = random_condition_data(gen, {4}, 5, 10);
    SamplePosterior q;
    q.mean = random_normal(gen, 3, 1.0);
    q.cov = p.sigma * 0.3;
    q.expansion = {p.theta[0] * q.mean};
    const std::vector<SamplePosterior> posts(5, q);
    const ConditionParams out = m_step(posts, data);
    EXPECT_LT((out.mu - q.mean).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((out.sigma - q.cov).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MStep, SingleReplicate) {
    std::mt19937_64 gen(11);
    const ConditionParams p = random_condition(gen, 2, {3});
    const ConditionData data = random_condition_data(gen, {3}, 1, 10);
    const auto posts = run_estep(p, data, FitOptions{});
    const ConditionParams out = m_step(posts, data);
    EXPECT_LT((out.sigma - posts[0].cov).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MStep, AllZeroSpeciesIsAnError) {
    std::mt19937_64 gen(12);
    const ConditionParams p = random_condition(gen, 2, {3, 2});
    std::vector<std::vector<Eigen::VectorXd>> counts;
    for (int i = 0; i < 3; ++i) counts.push_back({random_counts(gen, 3, 5), Eigen::VectorXd::Zero(2)});
    const ConditionData data = make_condition_data(counts);
    const auto posts = run_estep(p, data, FitOptions{});
    EXPECT_THROW(m_step(posts, data), NumericalError);
}

// Central differences of the bounded ELBO with posteriors held fixed.
TEST(MStep, Stationarity) {
    std::mt19937_64 gen(13);
    for (int t = 0; t < 10; ++t) {
        const std::vector<Eigen::Index> dims{4, 3};
        const ConditionParams start = random_condition(gen, 2, dims, 0.5);
        const ConditionData data = random_condition_data(gen, dims, 8, 15);
        const auto posts = run_estep(start, data, FitOptions{});
        const ConditionParams p = m_step(posts, data);
        const double h = 1e-5;
        const auto value = [&](const ConditionParams& q) { return condition_elbo(q, posts, data); };
        for (std::size_t l = 0; l < p.theta.size(); ++l) {
            for (Eigen::Index i = 0; i < p.theta[l].size(); ++i) {
                ConditionParams up = p, down = p;
                up.theta[l].data()[i] += h;
                down.theta[l].data()[i] -= h;
                EXPECT_LE(std::fabs((value(up) - value(down)) / (2 * h)), 1e-4) << "theta[" << l << "] entry " << i;
            }
        }
        for (Eigen::Index i = 0; i < p.mu.size(); ++i) {
            ConditionParams up = p, down = p;
            up.mu(i) += h;
            down.mu(i) -= h;
            EXPECT_LE(std::fabs((value(up) - value(down)) / (2 * h)), 1e-4) << "mu entry " << i;
        }
        for (Eigen::Index i = 0; i < p.sigma.rows(); ++i) {
            for (Eigen::Index j = 0; j <= i; ++j) {
                ConditionParams up = p, down = p;
                up.sigma(i, j) += h;
                down.sigma(i, j) -= h;
                if (i != j) {
                    up.sigma(j, i) += h;
                    down.sigma(j, i) -= h;
                }
                EXPECT_LE(std::fabs((value(up) - value(down)) / (2 * h)), 1e-4) << "sigma entry " << i << "," << j;
            }
        }
    }
}

TEST(Fit, MonotoneAndConvergesOnCommunityPreset) {
    SimConfig cfg = SimConfig::community_defaults();
    cfg.replicates = 60;
    cfg.seed = 3;
    const SimResult sim = simulate_community(cfg);
    FitOptions opts;
    opts.seed = 3;
    const FittedModel m = fit(sim.dataset, 5, opts);
    EXPECT_TRUE(m.report.converged);
    EXPECT_LE(m.report.iterations, 500);
    const auto& tr = m.report.elbo_trace;
    for (std::size_t t = 1; t < tr.size(); ++t) EXPECT_GE(tr[t], tr[t - 1] - 1e-8 * std::fabs(tr[t - 1])) << "iteration " << t;
    EXPECT_NEAR(tr.back(), elbo(m.params, m.posterior, sim.dataset), 1e-9 * std::fabs(tr.back()));
}

TEST(Fit, MonotoneWithoutShiftStep) {
    const CountDataset ds = fuselvm::testing::random_dataset({6, 4}, {30, 20}, 21, 40);
    FitOptions opts;
    opts.shift_step = false;
    opts.max_outer_iters = 100;
    const FittedModel m = fit(ds, 2, opts);
    const auto& tr = m.report.elbo_trace;
    for (std::size_t t = 1; t < tr.size(); ++t) EXPECT_GE(tr[t], tr[t - 1] - 1e-8 * std::fabs(tr[t - 1]));
}

TEST(Fit, Deterministic) {
    const CountDataset ds = fuselvm::testing::random_dataset({5, 3}, {25}, 22, 30);
    FitOptions opts;
    opts.seed = 9;
    opts.max_outer_iters = 40;
    const FittedModel a = fit(ds, 2, opts);
    const FittedModel b = fit(ds, 2, opts);
    EXPECT_EQ(a.report.elbo_trace, b.report.elbo_trace);
    EXPECT_EQ(a.params.conditions[0].theta[0], b.params.conditions[0].theta[0]);
}

TEST(Fit, RejectsBadArguments) {
    const CountDataset ds = fuselvm::testing::random_dataset({3}, {5}, 23);
    EXPECT_THROW(fit(ds, 0), std::invalid_argument);
    FitOptions bad;
    bad.rel_tol = 0.0;
    EXPECT_THROW(fit(ds, 1, bad), std::invalid_argument);
}

TEST(Fit, WarnsOnOversizedLatentDimension) {
    const CountDataset ds = fuselvm::testing::random_dataset({3}, {4}, 24, 10);
    FitOptions opts;
    opts.max_outer_iters = 3;
    const FittedModel m = fit(ds, 4, opts);
    EXPECT_GE(m.report.warnings.size(), 2u);
}

TEST(Embeddings, ShapeAndPriorRows) {
    CountDataset ds = fuselvm::testing::random_dataset({4, 3}, {10}, 25, 20);
    ds.counts[0][0].row(4).setZero();
    ds.counts[0][1].row(4).setZero();
    FitOptions opts;
    opts.max_outer_iters = 20;
    const FittedModel m = fit(ds, 3, opts);
    const Eigen::MatrixXd e = get_embeddings(m, 0);
    EXPECT_EQ(e.rows(), 10);
    EXPECT_EQ(e.cols(), 3);
    // A zero-count replicate keeps the prior mean of the parameters its E-step saw.
    EXPECT_THROW(get_embeddings(m, 1), std::out_of_range);

    const PosteriorState again = infer_posteriors(m.params, ds, opts);
    EXPECT_EQ(again.samples[0][4].mean, m.params.conditions[0].mu);
}

TEST(CenterShift, PreservesSoftmaxOfLinearPredictor) {
    std::mt19937_64 gen(26);
    ConditionParams p = random_condition(gen, 3, {5, 2});
    const ConditionParams before = p;
    std::vector<SamplePosterior> posts(1);
    posts[0].expansion = {random_normal(gen, 5, 1.0), random_normal(gen, 2, 1.0)};
    const auto phi = posts[0].expansion;
    center_shift(p, posts);
    for (int t = 0; t < 10; ++t) {
        const Eigen::VectorXd z = random_normal(gen, 3, 1.0);
        for (std::size_t l = 0; l < 2; ++l) {
            EXPECT_LT((softmax(p.theta[l] * z) - softmax(before.theta[l] * z)).cwiseAbs().maxCoeff(), 1e-12);
            EXPECT_LT((softmax(posts[0].expansion[l]) - softmax(phi[l])).cwiseAbs().maxCoeff(), 1e-12);
            EXPECT_NEAR(p.theta[l].colwise().sum().cwiseAbs().maxCoeff(), 0.0, 1e-12);
        }
    }
}
