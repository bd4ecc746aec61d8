#include "fuselvm/simulate.hpp"

#include "fuselvm/bound.hpp"
#include "fuselvm/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>

namespace fuselvm {

namespace {

// Stream tags; each random component draws from its own Philox stream.
constexpr std::uint64_t kThetaTag = 1;
constexpr std::uint64_t kLatentTag = 2;
constexpr std::uint64_t kTotalsTag = 3;
constexpr std::uint64_t kCountsTag = 4;

Eigen::MatrixXd draw_theta(std::uint64_t seed, std::uint64_t tag, Eigen::Index rows, Eigen::Index dz, double scale) {
    Philox4x32 rng(seed, derive_stream(kThetaTag, tag));
    Eigen::MatrixXd theta(rows, dz);
    const double s = scale / std::sqrt(static_cast<double>(dz));
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < dz; ++c) theta(r, c) = s * rng.normal();
    }
    return theta;
}

std::vector<std::string> feature_names(std::size_t l, Eigen::Index dim) {
    std::vector<std::string> out;
    for (Eigen::Index d = 0; d < dim; ++d) out.push_back("s" + std::to_string(l) + "_f" + std::to_string(d));
    return out;
}

// Draws counts for one (condition, species) block given latents.
CountMatrix draw_counts(std::uint64_t seed, std::uint64_t tag, const Eigen::MatrixXd& latent,
                        const Eigen::MatrixXd& theta, const SimConfig& cfg, double rate) {
    Philox4x32 totals_rng(seed, derive_stream(kTotalsTag, tag));
    Philox4x32 counts_rng(seed, derive_stream(kCountsTag, tag));
    CountMatrix m(latent.rows(), theta.rows());
    std::vector<double> probs(static_cast<std::size_t>(theta.rows()));
    std::vector<std::int64_t> row(probs.size());
    for (Eigen::Index i = 0; i < latent.rows(); ++i) {
        const Eigen::VectorXd p = softmax(theta * latent.row(i).transpose());
        for (std::size_t d = 0; d < probs.size(); ++d) probs[d] = p(static_cast<Eigen::Index>(d));
        const std::int64_t total = cfg.fixed_total ? *cfg.fixed_total : totals_rng.poisson(rate);
        counts_rng.multinomial(total, probs, row);
        for (std::size_t d = 0; d < row.size(); ++d) m(i, static_cast<Eigen::Index>(d)) = row[d];
    }
    return m;
}

Eigen::MatrixXd stacked_covariance(const std::vector<Eigen::MatrixXd>& thetas) {
    Eigen::Index rows = 0;
    for (const auto& t : thetas) rows += t.rows();
    Eigen::MatrixXd stacked(rows, thetas.front().cols());
    Eigen::Index r = 0;
    for (const auto& t : thetas) {
        stacked.middleRows(r, t.rows()) = t;
        r += t.rows();
    }
    return stacked * stacked.transpose();
}

}  // namespace

Preset parse_preset(const std::string& name) {
    if (name == "classes") return Preset::classes;
    if (name == "community") return Preset::community;
    if (name == "sweep") return Preset::sweep;
    throw std::invalid_argument("unknown preset '" + name + "'");
}

std::string preset_name(Preset p) {
    switch (p) {
        case Preset::classes: return "classes";
        case Preset::community: return "community";
        case Preset::sweep: return "sweep";
    }
    return "unknown";
}

SimConfig SimConfig::classes_defaults() {
    SimConfig c;
    c.preset = Preset::classes;
    c.latent_dim = 2;
    c.dims = {25};
    c.replicates = 200;
    c.class_means = {Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(1.5, 1.5), Eigen::Vector2d(-1.0, -1.0)};
    c.class_variances = {0.5, 0.5, 0.1};
    c.fixed_total = 100;
    return c;
}

SimConfig SimConfig::community_defaults() {
    SimConfig c;
    c.preset = Preset::community;
    c.latent_dim = 5;
    c.dims = {20, 10};
    c.replicates = 200;
    c.poisson_rate = 1000.0;
    return c;
}

SimConfig SimConfig::sweep_defaults() {
    SimConfig c = community_defaults();
    c.preset = Preset::sweep;
    c.dims = {128};
    return c;
}

void SimConfig::validate() const {
    if (latent_dim < 1) throw std::invalid_argument("simulation latent dimension must be >= 1");
    if (dims.empty()) throw std::invalid_argument("simulation needs at least one species");
    for (auto d : dims) {
        if (d < 1) throw std::invalid_argument("invalid dims: every species needs >= 1 feature");
    }
    if (replicates < 1) throw std::invalid_argument("simulation needs >= 1 replicate");
    if (!(poisson_rate >= 0.0) || !std::isfinite(poisson_rate)) throw std::invalid_argument("invalid Poisson rate");
    if (fixed_total && *fixed_total < 0) throw std::invalid_argument("fixed total must be >= 0");
    if (!(theta_scale >= 0.0)) throw std::invalid_argument("theta scale must be >= 0");
    if (preset == Preset::classes) {
        if (class_means.empty() || class_means.size() != class_variances.size()) {
            throw std::invalid_argument("invalid class parameter lists: means and variances must pair up");
        }
        for (const auto& m : class_means) {
            if (m.size() != latent_dim) throw std::invalid_argument("invalid class parameter lists: mean dimension");
        }
        for (double v : class_variances) {
            if (!(v >= 0.0)) throw std::invalid_argument("invalid class parameter lists: negative variance");
        }
    }
}

SimResult simulate_classes(const SimConfig& cfg) {
    if (cfg.preset != Preset::classes) throw std::invalid_argument("simulate_classes needs the classes preset");
    cfg.validate();
    SimResult out;
    auto& ds = out.dataset;
    for (std::size_t l = 0; l < cfg.dims.size(); ++l) {
        ds.species_labels.push_back("species" + std::to_string(l));
        ds.feature_labels.push_back(feature_names(l, cfg.dims[l]));
    }
    for (std::size_t c = 0; c < cfg.class_means.size(); ++c) {
        ds.condition_labels.push_back("class" + std::to_string(c));
        Philox4x32 rng(cfg.seed, derive_stream(kLatentTag, c));
        const double sd = std::sqrt(cfg.class_variances[c]);
        Eigen::MatrixXd z(cfg.replicates, cfg.latent_dim);
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = cfg.class_means[c](j) + sd * rng.normal();
        }
        std::vector<Eigen::MatrixXd> thetas;
        std::vector<CountMatrix> blocks;
        for (std::size_t l = 0; l < cfg.dims.size(); ++l) {
            const std::uint64_t tag = (c << 16) | l;
            thetas.push_back(draw_theta(cfg.seed, tag, cfg.dims[l], cfg.latent_dim, cfg.theta_scale));
            blocks.push_back(draw_counts(cfg.seed, tag, z, thetas.back(), cfg, cfg.poisson_rate));
        }
        out.truth.covariance.push_back(stacked_covariance(thetas));
        out.truth.theta.push_back(std::move(thetas));
        out.truth.latent.push_back(std::move(z));
        out.truth.class_labels.insert(out.truth.class_labels.end(), static_cast<std::size_t>(cfg.replicates),
                                      static_cast<int>(c));
        ds.counts.push_back(std::move(blocks));
    }
    out.truth.poisson_rate = cfg.poisson_rate;
    ds.validate();
    return out;
}

SimResult simulate_community(const SimConfig& cfg) {
    cfg.validate();
    SimResult out;
    auto& ds = out.dataset;
    ds.condition_labels = {"condition0"};
    Philox4x32 rng(cfg.seed, derive_stream(kLatentTag, cfg.latent_dim));
    Eigen::MatrixXd z(cfg.replicates, cfg.latent_dim);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = rng.normal();
    }
    std::vector<Eigen::MatrixXd> thetas;
    std::vector<CountMatrix> blocks;
    for (std::size_t l = 0; l < cfg.dims.size(); ++l) {
        ds.species_labels.push_back("species" + std::to_string(l));
        ds.feature_labels.push_back(feature_names(l, cfg.dims[l]));
        const auto dim = static_cast<std::uint64_t>(cfg.dims[l]);
        const std::uint64_t theta_tag = (l << 32) | dim;
        thetas.push_back(draw_theta(cfg.seed, theta_tag, cfg.dims[l], cfg.latent_dim, cfg.theta_scale));
        // Count streams also depend on the rate so sweeps do not reuse multinomial draws.
        const std::uint64_t count_tag = derive_stream(theta_tag, static_cast<std::uint64_t>(cfg.poisson_rate * 1024.0));
        blocks.push_back(draw_counts(cfg.seed, count_tag, z, thetas.back(), cfg, cfg.poisson_rate));
    }
    out.truth.covariance.push_back(stacked_covariance(thetas));
    out.truth.theta.push_back(std::move(thetas));
    out.truth.latent.push_back(std::move(z));
    out.truth.poisson_rate = cfg.poisson_rate;
    ds.counts.push_back(std::move(blocks));
    ds.validate();
    return out;
}

std::vector<SimResult> simulate_sweep(const SimConfig& cfg, const std::vector<double>& rates,
                                      const std::vector<Eigen::Index>& dims) {
    if (rates.empty() || dims.empty()) throw std::invalid_argument("simulate_sweep: empty grids");
    std::vector<SimResult> out;
    for (auto dim : dims) {
        for (double rate : rates) {
            SimConfig point = cfg;
            point.preset = Preset::sweep;
            point.dims = {dim};
            point.poisson_rate = rate;
            point.fixed_total.reset();
            out.push_back(simulate_community(point));
        }
    }
    return out;
}

std::string truth_to_json(const GroundTruth& truth, const CountDataset& ds) {
    using nlohmann::json;
    const auto matrix = [](const Eigen::MatrixXd& m) {
        json rows = json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            rows.push_back(row);
        }
        return rows;
    };
    json j;
    j["poisson_rate"] = truth.poisson_rate;
    j["conditions"] = json::array();
    for (std::size_t k = 0; k < truth.theta.size(); ++k) {
        json c;
        c["label"] = ds.condition_labels.at(k);
        c["theta"] = json::array();
        for (const auto& t : truth.theta[k]) c["theta"].push_back(matrix(t));
        c["covariance"] = matrix(truth.covariance[k]);
        c["latent"] = matrix(truth.latent[k]);
        j["conditions"].push_back(c);
    }
    j["species_labels"] = ds.species_labels;
    j["feature_labels"] = ds.feature_labels;
    if (!truth.class_labels.empty()) j["class_labels"] = truth.class_labels;
    return j.dump(1);
}

}  // namespace fuselvm
