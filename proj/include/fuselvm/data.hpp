#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace fuselvm {

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Rows are replicates, columns are features.
using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Count data indexed by (condition k, species l, replicate i).
///
/// counts[k][l] is an I_k x d_l matrix of nonnegative integers. Every species
/// block of a condition has the same number of replicate rows, and species l
/// has the same feature dimension d_l in every condition.
struct CountDataset {
    std::vector<std::string> condition_labels;
    std::vector<std::string> species_labels;
    std::vector<std::vector<std::string>> feature_labels;  // [l][d]
    std::vector<std::vector<CountMatrix>> counts;          // [k][l]

    std::size_t num_conditions() const noexcept { return counts.size(); }
    std::size_t num_species() const noexcept { return feature_labels.size(); }
    Eigen::Index dim(std::size_t l) const { return static_cast<Eigen::Index>(feature_labels.at(l).size()); }
    std::vector<Eigen::Index> dims() const;
    Eigen::Index total_dim() const;
    Eigen::Index replicates(std::size_t k) const;
    std::vector<Eigen::Index> replicate_counts() const;

    /// N_{kl,i}
    std::int64_t row_total(std::size_t k, std::size_t l, Eigen::Index i) const;

    /// Throws DataError describing the first violated invariant.
    void validate() const;
};

/// Feature-to-group assignment per species. Features without an entry fall
/// into the sentinel group.
struct GroupMap {
    std::vector<std::map<std::string, std::string>> assignment;  // [l]: feature -> group
    std::string sentinel = "UNASSIGNED";

    const std::string& group_of(std::size_t species, const std::string& feature) const;
};

struct FilterResult {
    CountDataset dataset;
    std::vector<std::vector<std::string>> removed;  // [l]
};

struct AggregateOptions {
    bool shared_only = false;
    // Drop the sentinel group from the output. Off by default so totals are conserved.
    bool drop_sentinel = false;
};

CountDataset load_dataset(const std::filesystem::path& manifest_path);

/// Reads one count CSV: header row of feature labels, integer body.
CountMatrix read_count_csv(const std::filesystem::path& path, std::vector<std::string>& labels);

/// Writes counts in the same layout read_count_csv accepts.
void write_count_csv(const std::filesystem::path& path, const CountMatrix& counts,
                     const std::vector<std::string>& labels);

/// Writes manifest.json plus one CSV per (condition, species) into dir.
void write_dataset(const std::filesystem::path& dir, const CountDataset& ds);

FilterResult filter_zero_features(const CountDataset& ds);

CountDataset aggregate_by_groups(const CountDataset& ds, const GroupMap& gm, const AggregateOptions& opts = {});

/// Reads a two-column CSV (feature,group) per species.
GroupMap load_group_map(const std::vector<std::filesystem::path>& per_species_csv);

/// Per-species share of the total counts of condition k.
std::vector<double> relative_abundance(const CountDataset& ds, std::size_t k);

/// (after - before) / before, elementwise.
std::vector<double> relative_change(const std::vector<double>& before, const std::vector<double>& after);

/// FNV-1a hash over dimensions and labels; used to tie a fitted model to its data.
std::uint64_t dataset_fingerprint(const CountDataset& ds);

/// Dataset with the given conditions merged into one condition by stacking replicates.
CountDataset pool_conditions(const CountDataset& ds, const std::string& label = "pooled");

}  // namespace fuselvm
