#include "fuselvm/io.hpp"

#include "fuselvm/version.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fuselvm::io {

using json = nlohmann::json;

namespace {

json row_major(const Eigen::MatrixXd& m) {
    json values = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
    }
    return values;
}

Eigen::MatrixXd from_row_major(const json& values, Eigen::Index rows, Eigen::Index cols) {
    if (!values.is_array() || static_cast<Eigen::Index>(values.size()) != rows * cols) {
        throw std::runtime_error("model document: matrix size mismatch");
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values.at(static_cast<std::size_t>(r * cols + c)).get<double>();
    }
    return m;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string model_to_json(const FittedModel& model) {
    json j;
    j["format"] = "fuselvm-model";
    j["version"] = 1;
    j["latent_dim"] = model.params.latent_dim;
    j["dof_convention"] = "loadings+mean+symmetric_covariance";
    j["conditions"] = json::array();
    for (std::size_t k = 0; k < model.params.conditions.size(); ++k) {
        const auto& c = model.params.conditions[k];
        json cj;
        cj["label"] = k < model.condition_labels.size() ? model.condition_labels[k] : "condition" + std::to_string(k);
        cj["mu"] = json::array();
        for (Eigen::Index i = 0; i < c.mu.size(); ++i) cj["mu"].push_back(c.mu(i));
        cj["sigma"] = row_major(c.sigma);
        cj["theta"] = json::array();
        for (std::size_t l = 0; l < c.theta.size(); ++l) {
            json t;
            t["species"] = l < model.species_labels.size() ? model.species_labels[l] : "species" + std::to_string(l);
            t["rows"] = c.theta[l].rows();
            t["cols"] = c.theta[l].cols();
            t["values"] = row_major(c.theta[l]);
            cj["theta"].push_back(t);
        }
        if (k < model.report.condition_elbo.size()) cj["elbo"] = model.report.condition_elbo[k];
        j["conditions"].push_back(cj);
    }
    j["elbo_trace"] = model.report.elbo_trace;
    j["iterations"] = model.report.iterations;
    j["converged"] = model.report.converged;
    j["warnings"] = model.report.warnings;
    const auto& o = model.options;
    j["options"] = {{"max_outer_iters", o.max_outer_iters}, {"rel_tol", o.rel_tol},
                    {"max_inner_iters", o.max_inner_iters}, {"inner_tol", o.inner_tol},
                    {"jitter", o.jitter},                   {"seed", o.seed},
                    {"init_scale", o.init_scale},           {"shift_step", o.shift_step}};
    j["dataset"] = {{"fingerprint", hex64(model.data_fingerprint)},
                    {"dims", model.dims},
                    {"condition_labels", model.condition_labels},
                    {"species_labels", model.species_labels},
                    {"feature_labels", model.feature_labels}};
    return j.dump(1);
}

FittedModel model_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed model document: ") + e.what());
    }
    if (j.value("format", "") != "fuselvm-model") throw std::runtime_error("not a fuselvm model document");
    FittedModel m;
    try {
        m.params.latent_dim = j.at("latent_dim").get<Eigen::Index>();
        const auto dz = m.params.latent_dim;
        for (const auto& cj : j.at("conditions")) {
            ConditionParams c;
            const auto& mu = cj.at("mu");
            c.mu.resize(dz);
            if (static_cast<Eigen::Index>(mu.size()) != dz) throw std::runtime_error("model document: mu length");
            for (Eigen::Index i = 0; i < dz; ++i) c.mu(i) = mu.at(static_cast<std::size_t>(i)).get<double>();
            c.sigma = from_row_major(cj.at("sigma"), dz, dz);
            for (const auto& t : cj.at("theta")) {
                c.theta.push_back(from_row_major(t.at("values"), t.at("rows").get<Eigen::Index>(),
                                                 t.at("cols").get<Eigen::Index>()));
            }
            m.condition_labels.push_back(cj.value("label", ""));
            m.report.condition_elbo.push_back(cj.value("elbo", 0.0));
            m.params.conditions.push_back(std::move(c));
        }
        m.report.elbo_trace = j.value("elbo_trace", std::vector<double>{});
        m.report.iterations = j.value("iterations", 0);
        m.report.converged = j.value("converged", false);
        m.report.latent_dim = m.params.latent_dim;
        if (j.contains("options")) {
            const auto& o = j["options"];
            m.options.max_outer_iters = o.value("max_outer_iters", m.options.max_outer_iters);
            m.options.rel_tol = o.value("rel_tol", m.options.rel_tol);
            m.options.max_inner_iters = o.value("max_inner_iters", m.options.max_inner_iters);
            m.options.inner_tol = o.value("inner_tol", m.options.inner_tol);
            m.options.jitter = o.value("jitter", m.options.jitter);
            m.options.seed = o.value("seed", m.options.seed);
            m.options.init_scale = o.value("init_scale", m.options.init_scale);
            m.options.shift_step = o.value("shift_step", m.options.shift_step);
            m.report.seed = m.options.seed;
        }
        const auto& ds = j.at("dataset");
        m.data_fingerprint = std::stoull(ds.at("fingerprint").get<std::string>(), nullptr, 16);
        m.dims = ds.at("dims").get<std::vector<Eigen::Index>>();
        m.species_labels = ds.at("species_labels").get<std::vector<std::string>>();
        m.feature_labels = ds.at("feature_labels").get<std::vector<std::vector<std::string>>>();
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed model document: ") + e.what());
    }
    return m;
}

void save_model(const std::filesystem::path& path, const FittedModel& model) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model: " + path.string());
    out << model_to_json(model) << '\n';
}

FittedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

std::string metadata_line(std::uint64_t seed, const std::string& flags) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : flags) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return "# fuselvm " + std::string(kVersion) + " seed=" + std::to_string(seed) + " flags=" + hex64(h);
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::Ref<const Eigen::MatrixXd>& m,
                      const std::vector<std::string>& labels, const std::string& metadata) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    if (!metadata.empty()) out << metadata << '\n';
    for (std::size_t c = 0; c < labels.size(); ++c) out << (c ? "," : "") << labels[c];
    out << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
        out << '\n';
    }
}

void write_edge_list(const std::filesystem::path& path, const CorrelationNetwork& net,
                     const Eigen::Ref<const Eigen::MatrixXd>& corr, const std::string& metadata) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    if (!metadata.empty()) out << metadata << '\n';
    out << "vertex_a,vertex_b,correlation\n";
    const auto n = net.adjacency.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (net.adjacency(i, j)) {
                out << net.labels[static_cast<std::size_t>(i)] << ',' << net.labels[static_cast<std::size_t>(j)]
                    << ',' << format_double(corr(i, j)) << '\n';
            }
        }
    }
}

void write_degrees(const std::filesystem::path& path, const CorrelationNetwork& net, const std::string& metadata) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    if (!metadata.empty()) out << metadata << '\n';
    out << "vertex,degree\n";
    for (std::size_t v = 0; v < net.labels.size(); ++v) out << net.labels[v] << ',' << net.degree[v] << '\n';
}

void write_degree_difference(const std::filesystem::path& path, const DegreeDifference& diff,
                             const std::string& metadata) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    if (!metadata.empty()) out << metadata << '\n';
    out << "# increased=" << diff.increased << " decreased=" << diff.decreased << " unchanged=" << diff.unchanged
        << '\n';
    out << "vertex,degree_difference,degree_a,degree_b\n";
    for (std::size_t v = 0; v < diff.labels.size(); ++v) {
        out << diff.labels[v] << ',' << diff.difference[v] << ',' << diff.degree_a[v] << ',' << diff.degree_b[v]
            << '\n';
    }
}

}  // namespace fuselvm::io
