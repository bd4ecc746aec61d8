#pragma once

#include "fuselvm/data.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace fuselvm {

/// Prior and loadings of one condition: z ~ N(mu, sigma), eta_l = theta[l] * z.
struct ConditionParams {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    std::vector<Eigen::MatrixXd> theta;  // [l], d_l x d_z
};

struct ModelParams {
    Eigen::Index latent_dim = 0;
    std::vector<ConditionParams> conditions;  // [k]

    std::size_t num_conditions() const noexcept { return conditions.size(); }
};

/// Gaussian variational posterior of one replicate plus the per-species
/// expansion points of the LSE bound.
struct SamplePosterior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    std::vector<Eigen::VectorXd> expansion;  // [l], length d_l
};

struct PosteriorState {
    std::vector<std::vector<SamplePosterior>> samples;  // [k][i]
};

enum class Backend { serial, openmp };

struct FitOptions {
    int max_outer_iters = 500;
    double rel_tol = 1e-6;
    int max_inner_iters = 50;
    double inner_tol = 1e-6;
    double jitter = 1e-8;
    std::uint64_t seed = 0;
    /// Scale of the initial loadings: entries ~ N(0, (init_scale / sqrt(d_z))^2).
    double init_scale = 0.1;
    /// After each M-step, try removing the per-species mean row of theta (and
    /// the mean of each expansion point); kept only when the bounded ELBO rises.
    bool shift_step = true;
    Backend backend = Backend::openmp;
    /// 0 uses the OpenMP default (or FUSELVM_THREADS when set).
    int threads = 0;

    void validate() const;
};

struct FitReport {
    std::vector<double> elbo_trace;
    std::vector<double> condition_elbo;  // final per-condition values
    int iterations = 0;
    bool converged = false;
    double wall_time = 0.0;
    std::uint64_t seed = 0;
    Eigen::Index latent_dim = 0;
    std::vector<std::string> warnings;
};

struct FittedModel {
    ModelParams params;
    PosteriorState posterior;
    FitReport report;
    FitOptions options;
    std::uint64_t data_fingerprint = 0;
    std::vector<Eigen::Index> dims;
    std::vector<std::string> condition_labels;
    std::vector<std::string> species_labels;
    std::vector<std::vector<std::string>> feature_labels;
};

/// Dense double-precision view of one condition, laid out per replicate.
struct ConditionData {
    std::vector<std::vector<Eigen::VectorXd>> counts;  // [i][l]
    std::vector<std::vector<double>> totals;            // [i][l]

    Eigen::Index replicates() const noexcept { return static_cast<Eigen::Index>(counts.size()); }
    static ConditionData from_dataset(const CountDataset& ds, std::size_t k);
};

/// Quantities of a condition's parameters reused by every replicate in an E-step.
struct ConditionCache {
    Eigen::MatrixXd sigma_inv;
    Eigen::VectorXd sigma_inv_mu;
    double sigma_log_det = 0.0;
    std::vector<Eigen::MatrixXd> gram;  // [l], theta^T A theta

    static ConditionCache build(const ConditionParams& p, double jitter);
};

/// (m, S) for a fixed set of expansion points; a single pass of the
/// covariance and mean updates with no expansion-point iteration.
SamplePosterior posterior_given_expansion(const ConditionParams& params, std::span<const Eigen::VectorXd> counts,
                                          std::span<const Eigen::VectorXd> expansion, double jitter = 1e-8);

/// Full E-step for one replicate: alternates the covariance/mean updates with
/// expansion point <- theta * m until the expansion points move less than
/// opts.inner_tol (sup norm) or opts.max_inner_iters is reached. The
/// incoming expansion points are the warm start.
SamplePosterior e_step_sample(const ModelParams& params, std::size_t k, std::span<const Eigen::VectorXd> counts,
                              const SamplePosterior& state, const FitOptions& opts);

SamplePosterior e_step_sample(const ConditionParams& params, const ConditionCache& cache,
                              std::span<const Eigen::VectorXd> counts, std::span<const double> totals,
                              const SamplePosterior& state, const FitOptions& opts);

/// Closed-form maximizer of the bounded ELBO over (theta, mu, sigma) for one
/// condition, holding posteriors and expansion points fixed.
ConditionParams m_step(std::span<const SamplePosterior> posteriors, const ConditionData& data, double jitter = 1e-8);

/// Subtracts the column means of every theta[l] and the mean of every
/// expansion point. The multinomial likelihood is invariant to this shift;
/// the bounded ELBO is not.
void center_shift(ConditionParams& params, std::span<SamplePosterior> posteriors);

/// Bounded ELBO of one replicate (multinomial normalizer omitted).
double sample_elbo(const ConditionParams& params, const ConditionCache& cache, std::span<const Eigen::VectorXd> counts,
                   std::span<const double> totals, const SamplePosterior& q);

double condition_elbo(const ConditionParams& params, std::span<const SamplePosterior> posteriors,
                      const ConditionData& data, double jitter = 1e-8);

double elbo(const ModelParams& params, const PosteriorState& posteriors, const CountDataset& data);

/// Initial parameters: mu = 0, sigma = I, theta entries i.i.d. Gaussian.
ModelParams initial_params(const CountDataset& data, Eigen::Index latent_dim, const FitOptions& opts);

/// Posteriors at the prior with expansion points theta * mu.
PosteriorState initial_posteriors(const ModelParams& params, const CountDataset& data);

FittedModel fit(const CountDataset& data, Eigen::Index latent_dim, const FitOptions& opts = {});

/// Posterior means of condition k, one row per replicate.
Eigen::MatrixXd get_embeddings(const FittedModel& model, std::size_t k);

/// Runs E-steps against fixed parameters until the posteriors settle; used to
/// embed data under an already fitted model.
PosteriorState infer_posteriors(const ModelParams& params, const CountDataset& data, const FitOptions& opts);

}  // namespace fuselvm
