#pragma once

#include "fuselvm/inference.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fuselvm {

enum class Scope { intra, inter };

Scope parse_scope(const std::string& name);

/// Gaussian marginal of the transformed counts A^{-1}(b + x) implied by the
/// fitted model: mean theta * mu, covariance A^{-1} + theta * sigma * theta^T
/// (block-diagonal A^{-1} and stacked loadings for the inter-species scope).
struct MarginalGaussian {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
    Scope scope = Scope::intra;
    std::size_t condition = 0;
    std::optional<std::size_t> species;
};

Eigen::VectorXd transform_sample(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& b);

MarginalGaussian intra_covariance(const ModelParams& params, std::size_t k, std::size_t l);
MarginalGaussian inter_covariance(const ModelParams& params, std::size_t k);

/// Low-rank part theta_tilde * sigma * theta_tilde^T over all species of condition k.
Eigen::MatrixXd latent_covariance(const ModelParams& params, std::size_t k);

/// diag(C)^{-1/2} C diag(C)^{-1/2}, clamped to [-1, 1] with an exact unit diagonal.
Eigen::MatrixXd to_correlation(const Eigen::Ref<const Eigen::MatrixXd>& c);

struct CorrelationNetwork {
    std::vector<std::string> labels;
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> adjacency;
    std::vector<int> degree;
    double threshold = 0.95;
    bool signed_edges = false;

    std::size_t num_edges() const;
};

/// Edge (i, j), i != j, when |corr_ij| >= tau (corr_ij >= tau when signed_edges).
CorrelationNetwork threshold_network(const Eigen::Ref<const Eigen::MatrixXd>& corr, double tau,
                                     std::vector<std::string> labels, bool signed_edges = false);

struct DegreeDifference {
    std::vector<std::string> labels;  // sorted by descending difference
    std::vector<int> difference;      // degree_b - degree_a
    std::vector<int> degree_a;
    std::vector<int> degree_b;
    int increased = 0;
    int decreased = 0;
    int unchanged = 0;
};

DegreeDifference degree_difference(const CorrelationNetwork& a, const CorrelationNetwork& b);

/// softmax(theta_kl * mu_k)
Eigen::VectorXd composition_distribution(const ModelParams& params, std::size_t k, std::size_t l);

/// sqrt(1 - sum_d sqrt(p_d q_d)), clamped to [0, 1].
double hellinger(const Eigen::Ref<const Eigen::VectorXd>& p, const Eigen::Ref<const Eigen::VectorXd>& q);

}  // namespace fuselvm
