#pragma once

#include "fuselvm/data.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fuselvm {

enum class Preset { classes, community, sweep };

Preset parse_preset(const std::string& name);
std::string preset_name(Preset p);

struct SimConfig {
    Preset preset = Preset::community;
    Eigen::Index latent_dim = 5;
    std::vector<Eigen::Index> dims{20, 10};
    /// Replicates per condition; for the classes preset, per class.
    Eigen::Index replicates = 200;
    std::vector<Eigen::VectorXd> class_means;
    std::vector<double> class_variances;
    double poisson_rate = 1000.0;
    /// When set, every row has exactly this many counts instead of a Poisson total.
    std::optional<std::int64_t> fixed_total;
    /// Loadings are N(0, 1) * theta_scale / sqrt(latent_dim).
    double theta_scale = 1.0;
    std::uint64_t seed = 0;

    static SimConfig classes_defaults();
    static SimConfig community_defaults();
    static SimConfig sweep_defaults();

    void validate() const;
};

struct GroundTruth {
    std::vector<Eigen::MatrixXd> latent;              // [k], I_k x d_z
    std::vector<std::vector<Eigen::MatrixXd>> theta;  // [k][l], d_l x d_z
    std::vector<Eigen::MatrixXd> covariance;          // [k], stacked theta * theta^T
    std::vector<int> class_labels;                    // classes preset: label per replicate, conditions in order
    double poisson_rate = 0.0;
};

struct SimResult {
    CountDataset dataset;
    GroundTruth truth;
};

/// Three (by default) Gaussian latent classes, each its own condition with
/// its own loadings; fixed row totals.
SimResult simulate_classes(const SimConfig& cfg);

/// One condition; a shared latent z ~ N(0, I) per replicate drives every
/// species; row totals ~ Poisson(rate).
SimResult simulate_community(const SimConfig& cfg);

/// One community-style dataset per (rate, dim) grid point, single species of
/// width dim. Loadings and latents depend only on (seed, dim), so datasets
/// at different rates share them.
std::vector<SimResult> simulate_sweep(const SimConfig& cfg, const std::vector<double>& rates,
                                      const std::vector<Eigen::Index>& dims);

/// Ground truth as JSON (loadings, true covariance, labels).
std::string truth_to_json(const GroundTruth& truth, const CountDataset& ds);

}  // namespace fuselvm
