#include "fuselvm/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace fuselvm {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::vector<Eigen::Index> CountDataset::dims() const {
    std::vector<Eigen::Index> out;
    out.reserve(num_species());
    for (std::size_t l = 0; l < num_species(); ++l) out.push_back(dim(l));
    return out;
}

Eigen::Index CountDataset::total_dim() const {
    Eigen::Index total = 0;
    for (std::size_t l = 0; l < num_species(); ++l) total += dim(l);
    return total;
}

Eigen::Index CountDataset::replicates(std::size_t k) const {
    const auto& blocks = counts.at(k);
    return blocks.empty() ? 0 : blocks.front().rows();
}

std::vector<Eigen::Index> CountDataset::replicate_counts() const {
    std::vector<Eigen::Index> out;
    for (std::size_t k = 0; k < num_conditions(); ++k) out.push_back(replicates(k));
    return out;
}

std::int64_t CountDataset::row_total(std::size_t k, std::size_t l, Eigen::Index i) const {
    return counts.at(k).at(l).row(i).sum();
}

void CountDataset::validate() const {
    const std::size_t n_species = num_species();
    if (n_species == 0) throw DataError("dataset has no species");
    if (counts.empty()) throw DataError("dataset has no conditions");
    if (condition_labels.size() != counts.size()) throw DataError("condition label count mismatch");
    if (species_labels.size() != n_species) throw DataError("species label count mismatch");
    for (std::size_t l = 0; l < n_species; ++l) {
        if (feature_labels[l].empty()) throw DataError("species '" + species_labels[l] + "' has no features");
    }
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (counts[k].size() != n_species) {
            throw DataError("condition '" + condition_labels[k] + "' does not list every species");
        }
        const Eigen::Index rows = counts[k].front().rows();
        for (std::size_t l = 0; l < n_species; ++l) {
            const auto& m = counts[k][l];
            if (m.rows() != rows) {
                throw DataError("inconsistent replicate counts in condition '" + condition_labels[k] + "'");
            }
            if (m.cols() != dim(l)) {
                throw DataError("ragged row: species '" + species_labels[l] + "' width mismatch");
            }
            if (m.size() > 0 && m.minCoeff() < 0) throw DataError("negative count");
        }
    }
}

const std::string& GroupMap::group_of(std::size_t species, const std::string& feature) const {
    if (species >= assignment.size()) return sentinel;
    const auto& m = assignment[species];
    const auto it = m.find(feature);
    return it == m.end() ? sentinel : it->second;
}

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::int64_t parse_count(const std::string& s, const fs::path& path, std::size_t line_no) {
    const auto where = [&] { return " (" + path.string() + ":" + std::to_string(line_no) + ")"; };
    if (s.empty()) throw DataError("non-integer entry ''" + where());
    std::int64_t value = 0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        throw DataError("non-integer entry '" + s + "'" + where());
    }
    if (value < 0) throw DataError("negative count" + where());
    return value;
}

std::string csv_escape_label(const std::string& s) {
    if (s.find(',') != std::string::npos) {
        throw DataError("feature label contains a comma: '" + s + "'");
    }
    return s;
}

}  // namespace

CountMatrix read_count_csv(const fs::path& path, std::vector<std::string>& labels) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open count file: " + path.string());

    std::string line;
    std::size_t line_no = 0;
    labels.clear();
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) break;
    }
    labels = split_csv_line(line);
    if (labels.empty() || (labels.size() == 1 && labels.front().empty())) {
        throw DataError("missing header row: " + path.string());
    }
    const std::size_t width = labels.size();

    std::vector<std::int64_t> values;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != width) {
            throw DataError("ragged row at " + path.string() + ":" + std::to_string(line_no));
        }
        for (const auto& f : fields) values.push_back(parse_count(f, path, line_no));
        ++rows;
    }
    if (rows == 0) throw DataError("no replicate rows: " + path.string());

    CountMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(width));
    std::copy(values.begin(), values.end(), m.data());
    return m;
}

void write_count_csv(const fs::path& path, const CountMatrix& counts, const std::vector<std::string>& labels) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write count file: " + path.string());
    for (std::size_t d = 0; d < labels.size(); ++d) {
        out << (d ? "," : "") << csv_escape_label(labels[d]);
    }
    out << '\n';
    for (Eigen::Index i = 0; i < counts.rows(); ++i) {
        for (Eigen::Index d = 0; d < counts.cols(); ++d) {
            out << (d ? "," : "") << counts(i, d);
        }
        out << '\n';
    }
}

CountDataset load_dataset(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw DataError("cannot open manifest: " + manifest_path.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    const fs::path base = manifest_path.parent_path();

    if (!manifest.contains("conditions") || !manifest["conditions"].is_array() || manifest["conditions"].empty()) {
        throw DataError("manifest lists no conditions: " + manifest_path.string());
    }

    CountDataset ds;
    bool first = true;
    for (const auto& cond : manifest["conditions"]) {
        ds.condition_labels.push_back(cond.value("label", "condition" + std::to_string(ds.counts.size())));
        if (!cond.contains("species") || !cond["species"].is_array() || cond["species"].empty()) {
            throw DataError("condition '" + ds.condition_labels.back() + "' lists no species");
        }
        std::vector<CountMatrix> blocks;
        std::size_t l = 0;
        for (const auto& sp : cond["species"]) {
            const std::string label = sp.value("label", "species" + std::to_string(l));
            if (!sp.contains("counts_csv")) throw DataError("species '" + label + "' has no counts_csv");
            fs::path csv = sp["counts_csv"].get<std::string>();
            if (csv.is_relative()) csv = base / csv;
            std::vector<std::string> labels;
            CountMatrix m = read_count_csv(csv, labels);
            if (first) {
                ds.species_labels.push_back(label);
                ds.feature_labels.push_back(labels);
            } else {
                if (l >= ds.species_labels.size() || ds.species_labels[l] != label) {
                    throw DataError("species list differs between conditions at '" + label + "'");
                }
                if (ds.feature_labels[l] != labels) {
                    throw DataError("feature labels of species '" + label + "' differ between conditions");
                }
            }
            blocks.push_back(std::move(m));
            ++l;
        }
        if (!first && l != ds.species_labels.size()) {
            throw DataError("condition '" + ds.condition_labels.back() + "' has a different species count");
        }
        ds.counts.push_back(std::move(blocks));
        first = false;
    }
    ds.validate();
    return ds;
}

void write_dataset(const fs::path& dir, const CountDataset& ds) {
    fs::create_directories(dir);
    json manifest;
    manifest["conditions"] = json::array();
    for (std::size_t k = 0; k < ds.num_conditions(); ++k) {
        json cond;
        cond["label"] = ds.condition_labels[k];
        cond["species"] = json::array();
        for (std::size_t l = 0; l < ds.num_species(); ++l) {
            const std::string file = "counts_k" + std::to_string(k) + "_l" + std::to_string(l) + ".csv";
            write_count_csv(dir / file, ds.counts[k][l], ds.feature_labels[l]);
            cond["species"].push_back({{"label", ds.species_labels[l]}, {"counts_csv", file}});
        }
        manifest["conditions"].push_back(cond);
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw DataError("cannot write manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
}

FilterResult filter_zero_features(const CountDataset& ds) {
    FilterResult result;
    result.dataset.condition_labels = ds.condition_labels;
    result.dataset.species_labels = ds.species_labels;
    result.dataset.counts.resize(ds.num_conditions());
    result.removed.resize(ds.num_species());

    for (std::size_t l = 0; l < ds.num_species(); ++l) {
        std::vector<Eigen::Index> keep;
        for (Eigen::Index d = 0; d < ds.dim(l); ++d) {
            bool any = false;
            for (std::size_t k = 0; k < ds.num_conditions() && !any; ++k) {
                any = (ds.counts[k][l].col(d).array() != 0).any();
            }
            if (any) {
                keep.push_back(d);
            } else {
                result.removed[l].push_back(ds.feature_labels[l][static_cast<std::size_t>(d)]);
            }
        }
        if (keep.empty()) throw DataError("species emptied by filtering: '" + ds.species_labels[l] + "'");

        std::vector<std::string> labels;
        for (auto d : keep) labels.push_back(ds.feature_labels[l][static_cast<std::size_t>(d)]);
        result.dataset.feature_labels.push_back(std::move(labels));
        for (std::size_t k = 0; k < ds.num_conditions(); ++k) {
            const auto& src = ds.counts[k][l];
            CountMatrix m(src.rows(), static_cast<Eigen::Index>(keep.size()));
            for (std::size_t j = 0; j < keep.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = src.col(keep[j]);
            result.dataset.counts[k].push_back(std::move(m));
        }
    }
    return result;
}

CountDataset aggregate_by_groups(const CountDataset& ds, const GroupMap& gm, const AggregateOptions& opts) {
    const std::size_t n_species = ds.num_species();

    // Groups in first-seen order per species.
    std::vector<std::vector<std::string>> groups(n_species);
    std::vector<std::vector<std::size_t>> column_group(n_species);
    for (std::size_t l = 0; l < n_species; ++l) {
        std::map<std::string, std::size_t> index;
        for (const auto& feature : ds.feature_labels[l]) {
            const std::string& g = gm.group_of(l, feature);
            auto [it, inserted] = index.emplace(g, groups[l].size());
            if (inserted) groups[l].push_back(g);
            column_group[l].push_back(it->second);
        }
    }

    std::set<std::string> shared;
    if (opts.shared_only) {
        shared.insert(groups[0].begin(), groups[0].end());
        for (std::size_t l = 1; l < n_species; ++l) {
            std::set<std::string> here(groups[l].begin(), groups[l].end());
            std::set<std::string> next;
            std::set_intersection(shared.begin(), shared.end(), here.begin(), here.end(),
                                  std::inserter(next, next.begin()));
            shared = std::move(next);
        }
        if (opts.drop_sentinel) shared.erase(gm.sentinel);
        if (shared.empty()) throw DataError("no groups are shared by every species");
    }

    CountDataset out;
    out.condition_labels = ds.condition_labels;
    out.species_labels = ds.species_labels;
    out.counts.resize(ds.num_conditions());
    for (std::size_t l = 0; l < n_species; ++l) {
        // Output columns: shared groups in sorted order, otherwise first-seen order.
        std::vector<std::string> kept;
        if (opts.shared_only) {
            kept.assign(shared.begin(), shared.end());
        } else {
            for (const auto& g : groups[l]) {
                if (!(opts.drop_sentinel && g == gm.sentinel)) kept.push_back(g);
            }
        }
        if (kept.empty()) throw DataError("species emptied by aggregation: '" + ds.species_labels[l] + "'");
        std::map<std::string, Eigen::Index> out_col;
        for (std::size_t j = 0; j < kept.size(); ++j) out_col[kept[j]] = static_cast<Eigen::Index>(j);

        for (std::size_t k = 0; k < ds.num_conditions(); ++k) {
            const auto& src = ds.counts[k][l];
            CountMatrix m = CountMatrix::Zero(src.rows(), static_cast<Eigen::Index>(kept.size()));
            for (Eigen::Index d = 0; d < src.cols(); ++d) {
                const auto it = out_col.find(groups[l][column_group[l][static_cast<std::size_t>(d)]]);
                if (it != out_col.end()) m.col(it->second) += src.col(d);
            }
            out.counts[k].push_back(std::move(m));
        }
        out.feature_labels.push_back(std::move(kept));
    }
    return out;
}

GroupMap load_group_map(const std::vector<fs::path>& per_species_csv) {
    GroupMap gm;
    for (const auto& path : per_species_csv) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open group map: " + path.string());
        std::map<std::string, std::string> m;
        std::string line;
        bool header = true;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            const auto fields = split_csv_line(line);
            if (fields.size() != 2) throw DataError("group map rows need two fields: " + path.string());
            if (header) {
                header = false;
                if (fields[0] == "feature") continue;
            }
            m[fields[0]] = fields[1];
        }
        gm.assignment.push_back(std::move(m));
    }
    return gm;
}

std::vector<double> relative_abundance(const CountDataset& ds, std::size_t k) {
    if (k >= ds.num_conditions()) throw DataError("unknown condition index " + std::to_string(k));
    std::vector<double> totals;
    double grand = 0.0;
    for (const auto& block : ds.counts[k]) {
        const double t = static_cast<double>(block.sum());
        totals.push_back(t);
        grand += t;
    }
    if (grand <= 0.0) throw DataError("all-zero condition '" + ds.condition_labels[k] + "'");
    for (auto& t : totals) t /= grand;
    return totals;
}

std::vector<double> relative_change(const std::vector<double>& before, const std::vector<double>& after) {
    if (before.size() != after.size()) throw std::invalid_argument("relative_change: length mismatch");
    std::vector<double> out(before.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
        if (before[i] == 0.0) throw std::invalid_argument("relative_change: zero baseline");
        out[i] = (after[i] - before[i]) / before[i];
    }
    return out;
}

std::uint64_t dataset_fingerprint(const CountDataset& ds) {
    std::uint64_t h = 1469598103934665603ULL;
    const auto mix = [&h](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        h ^= 0xff;
        h *= 1099511628211ULL;
    };
    for (const auto& c : ds.condition_labels) mix(c);
    for (std::size_t l = 0; l < ds.num_species(); ++l) {
        mix(ds.species_labels[l]);
        mix(std::to_string(ds.dim(l)));
        for (const auto& f : ds.feature_labels[l]) mix(f);
    }
    for (auto i : ds.replicate_counts()) mix(std::to_string(i));
    return h;
}

CountDataset pool_conditions(const CountDataset& ds, const std::string& label) {
    CountDataset out;
    out.condition_labels = {label};
    out.species_labels = ds.species_labels;
    out.feature_labels = ds.feature_labels;
    out.counts.resize(1);
    Eigen::Index total_rows = 0;
    for (std::size_t k = 0; k < ds.num_conditions(); ++k) total_rows += ds.replicates(k);
    for (std::size_t l = 0; l < ds.num_species(); ++l) {
        CountMatrix m(total_rows, ds.dim(l));
        Eigen::Index row = 0;
        for (std::size_t k = 0; k < ds.num_conditions(); ++k) {
            const auto& src = ds.counts[k][l];
            m.middleRows(row, src.rows()) = src;
            row += src.rows();
        }
        out.counts[0].push_back(std::move(m));
    }
    return out;
}

}  // namespace fuselvm
