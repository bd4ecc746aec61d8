#pragma once

#include "fuselvm/data.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace fuselvm::testing {

/// Unique scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("fuselvm_test_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

/// Dataset with the given block shapes filled from a seeded generator.
inline CountDataset random_dataset(const std::vector<Eigen::Index>& dims, const std::vector<Eigen::Index>& replicates,
                                   std::uint64_t seed, int max_count = 20) {
    std::mt19937_64 gen(seed);
    std::uniform_int_distribution<int> draw(0, max_count);
    CountDataset ds;
    for (std::size_t l = 0; l < dims.size(); ++l) {
        ds.species_labels.push_back("sp" + std::to_string(l));
        std::vector<std::string> labels;
        for (Eigen::Index d = 0; d < dims[l]; ++d) labels.push_back("s" + std::to_string(l) + "_f" + std::to_string(d));
        ds.feature_labels.push_back(labels);
    }
    for (std::size_t k = 0; k < replicates.size(); ++k) {
        ds.condition_labels.push_back("c" + std::to_string(k));
        std::vector<CountMatrix> blocks;
        for (auto d : dims) {
            CountMatrix m(replicates[k], d);
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = draw(gen);
            blocks.push_back(m);
        }
        ds.counts.push_back(blocks);
    }
    return ds;
}

}  // namespace fuselvm::testing
