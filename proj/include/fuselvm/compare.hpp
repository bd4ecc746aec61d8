#pragma once

#include "fuselvm/baselines.hpp"
#include "fuselvm/inference.hpp"
#include "fuselvm/simulate.hpp"

#include <optional>
#include <vector>

namespace fuselvm {

struct MethodScore {
    CovMethod method = CovMethod::empirical;
    double covariance_rmse = 0.0;
    double precision_rmse = 0.0;
    std::optional<double> shrinkage;
};

struct Comparison {
    std::vector<MethodScore> scores;   // in the order requested
    std::optional<FittedModel> model;  // the proposed fit, when requested
};

/// Scores each method's estimate of the ground-truth covariance of condition k.
/// Baselines see the column-standardized stacked counts; the proposed method
/// contributes theta_tilde * sigma * theta_tilde^T from a rank-`rank` fit.
/// Precision RMSE compares (C + jitter I)^{-1} for estimate and truth alike.
Comparison compare_methods(const SimResult& sim, std::size_t k, const std::vector<CovMethod>& methods,
                           Eigen::Index rank, const FitOptions& opts, double precision_jitter);

}  // namespace fuselvm
