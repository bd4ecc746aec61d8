#pragma once

#include "fuselvm/inference.hpp"

#include <optional>
#include <string>
#include <vector>

namespace fuselvm {

/// Free parameters of one condition: loadings sum_l d_l * d_z, prior mean d_z,
/// symmetric prior covariance d_z (d_z + 1) / 2.
double degrees_of_freedom(const std::vector<Eigen::Index>& dims, Eigen::Index latent_dim);

/// sum_k [ELBO_k - 0.5 * dof * log(I_k)], with the bounded ELBO standing in
/// for the log likelihood. Per-condition ELBOs are recomputed from the model's
/// parameters and posteriors.
double bic_score(const FittedModel& model, const CountDataset& data);

struct RankFit {
    Eigen::Index rank = 0;
    bool ok = false;
    std::string error;
    double elbo = 0.0;
    double dof = 0.0;
    double penalized_score = 0.0;
    bool converged = false;
    int iterations = 0;
    double wall_time = 0.0;
    std::uint64_t seed = 0;
    std::optional<FittedModel> model;
};

struct RankSweepResult {
    std::vector<RankFit> fits;
    Eigen::Index selected = 0;

    const RankFit& selected_fit() const;
};

/// Fits every candidate rank (seed opts.seed + rank) and selects the largest
/// penalized score; scores within 1e-12 of each other resolve to the smaller
/// rank. Failing ranks are recorded and skipped; throws only when all fail.
RankSweepResult select_rank(const CountDataset& data, const std::vector<Eigen::Index>& ranks, const FitOptions& opts,
                            bool keep_models = false);

/// Argmax with the tie rule above, over ranks whose fit succeeded.
Eigen::Index pick_rank(const std::vector<RankFit>& fits);

/// Parses "lo:hi", "lo:hi:step" or "a,b,c".
std::vector<Eigen::Index> parse_rank_spec(const std::string& spec);

}  // namespace fuselvm
