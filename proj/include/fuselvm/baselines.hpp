#pragma once

#include "fuselvm/data.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace fuselvm {

enum class CovMethod { empirical, ledoit_wolf, proposed };

CovMethod parse_cov_method(const std::string& name);
std::string cov_method_name(CovMethod m);

struct CovEstimate {
    CovMethod method = CovMethod::empirical;
    Eigen::MatrixXd covariance;
    std::optional<Eigen::MatrixXd> precision;
    std::optional<double> shrinkage;  // Ledoit-Wolf only
    double precision_jitter = 0.0;
};

struct Standardized {
    Eigen::MatrixXd data;
    std::vector<Eigen::Index> constant_columns;  // centered only, not scaled
};

/// Column z-scoring: subtract the mean, divide by the population standard
/// deviation. Zero-variance columns are centered and flagged.
Standardized standardize(const Eigen::Ref<const Eigen::MatrixXd>& x);

/// Sample covariance, 1/n normalization unless unbiased is set (1/(n-1)).
CovEstimate empirical_cov(const Eigen::Ref<const Eigen::MatrixXd>& x, bool unbiased = false);

/// Ledoit-Wolf (2004) shrinkage toward mu*I with mu = tr(S)/p:
///   delta = ||S - mu I||_F^2 / p
///   beta  = min(delta, (1/n^2) sum_k ||x_k x_k^T - S||_F^2 / p)
///   shrinkage = beta / delta
/// on column-centered data with S the 1/n sample covariance.
CovEstimate ledoit_wolf(const Eigen::Ref<const Eigen::MatrixXd>& x);

/// sqrt(mean((a - b)^2)) over all entries.
double rmse_matrix(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b);

/// (c + jitter * I)^{-1}; jitter keeps singular truths and estimates comparable.
Eigen::MatrixXd stabilized_inverse(const Eigen::Ref<const Eigen::MatrixXd>& c, double jitter);

void attach_precision(CovEstimate& est, double jitter);

/// Replicates of condition k as rows, all species' features side by side.
Eigen::MatrixXd stacked_counts(const CountDataset& ds, std::size_t k);

}  // namespace fuselvm
