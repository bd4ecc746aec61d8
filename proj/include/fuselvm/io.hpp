#pragma once

#include "fuselvm/inference.hpp"
#include "fuselvm/predictive.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

namespace fuselvm::io {

/// Model document: latent_dim, per-condition mu, row-major sigma, per-species
/// row-major theta, ELBO trace, fit options and the dataset fingerprint.
/// Posteriors and timing are not stored, so identical fits give identical bytes.
std::string model_to_json(const FittedModel& model);
FittedModel model_from_json(const std::string& text);

void save_model(const std::filesystem::path& path, const FittedModel& model);
FittedModel load_model(const std::filesystem::path& path);

/// First line of every CSV: "# fuselvm <version> seed=<seed> flags=<hash>".
std::string metadata_line(std::uint64_t seed, const std::string& flags);

/// Matrix as CSV with a header row of labels.
void write_matrix_csv(const std::filesystem::path& path, const Eigen::Ref<const Eigen::MatrixXd>& m,
                      const std::vector<std::string>& labels, const std::string& metadata);

void write_edge_list(const std::filesystem::path& path, const CorrelationNetwork& net,
                     const Eigen::Ref<const Eigen::MatrixXd>& corr, const std::string& metadata);

void write_degrees(const std::filesystem::path& path, const CorrelationNetwork& net, const std::string& metadata);

void write_degree_difference(const std::filesystem::path& path, const DegreeDifference& diff,
                             const std::string& metadata);

std::string format_double(double v);

}  // namespace fuselvm::io
