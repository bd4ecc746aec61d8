#include "fuselvm/baselines.hpp"
#include "fuselvm/compare.hpp"
#include "fuselvm/data.hpp"
#include "fuselvm/inference.hpp"
#include "fuselvm/io.hpp"
#include "fuselvm/predictive.hpp"
#include "fuselvm/selection.hpp"
#include "fuselvm/simulate.hpp"
#include "fuselvm/version.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace fuselvm;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNotConverged = 2;

struct Common {
    fs::path out = ".";
    std::uint64_t seed = 0;
    double tol = 1e-6;
    int max_iters = 500;
    double init_scale = 0.1;
    bool no_shift_step = false;
    std::string backend = "openmp";
    std::string flags;  // the full command line, hashed into every metadata line

    FitOptions fit_options() const {
        FitOptions o;
        o.seed = seed;
        o.rel_tol = tol;
        o.max_outer_iters = max_iters;
        o.init_scale = init_scale;
        o.shift_step = !no_shift_step;
        if (backend == "serial") {
            o.backend = Backend::serial;
        } else if (backend == "openmp") {
            o.backend = Backend::openmp;
        } else {
            throw std::invalid_argument("unknown backend '" + backend + "' (expected serial or openmp)");
        }
        o.validate();
        return o;
    }

    std::string metadata() const { return io::metadata_line(seed, flags); }

    void prepare_out() const {
        std::error_code ec;
        fs::create_directories(out, ec);
        if (ec || !fs::is_directory(out)) throw std::runtime_error("cannot create output directory " + out.string());
    }
};

void add_common(CLI::App* app, Common& c, bool fitting) {
    app->add_option("--out", c.out, "Output directory")->capture_default_str();
    app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    if (!fitting) return;
    app->add_option("--tol", c.tol, "Relative ELBO tolerance for convergence")->capture_default_str()->check(
        CLI::PositiveNumber);
    app->add_option("--max-iters", c.max_iters, "Maximum EM iterations")->capture_default_str()->check(
        CLI::PositiveNumber);
    app->add_option("--init-scale", c.init_scale, "Initial loading scale (entries ~ N(0, (s/sqrt(d_z))^2))")
        ->capture_default_str();
    app->add_flag("--no-shift-step", c.no_shift_step, "Disable the softmax-shift centering step");
    app->add_option("--backend", c.backend, "E-step backend: serial or openmp")->capture_default_str();
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

void write_text_file(const fs::path& p, const std::string& text) {
    auto out = open_out(p);
    out << text;
}

CountDataset load_input(const fs::path& manifest, bool pool, bool drop_zero) {
    CountDataset ds = load_dataset(manifest);
    if (drop_zero) ds = filter_zero_features(ds).dataset;
    if (pool) ds = pool_conditions(ds);
    return ds;
}

std::vector<std::string> latent_labels(Eigen::Index dz) {
    std::vector<std::string> out;
    for (Eigen::Index j = 0; j < dz; ++j) out.push_back("z" + std::to_string(j));
    return out;
}

void write_embeddings(const Common& c, const FittedModel& m) {
    for (std::size_t k = 0; k < m.params.conditions.size(); ++k) {
        io::write_matrix_csv(c.out / ("embeddings_k" + std::to_string(k) + ".csv"), get_embeddings(m, k),
                             latent_labels(m.params.latent_dim), c.metadata());
    }
}

std::string report_json(const FittedModel& m) {
    json j;
    j["version"] = kVersion;
    j["latent_dim"] = m.params.latent_dim;
    j["iterations"] = m.report.iterations;
    j["converged"] = m.report.converged;
    j["final_elbo"] = m.report.elbo_trace.empty() ? 0.0 : m.report.elbo_trace.back();
    j["condition_elbo"] = m.report.condition_elbo;
    j["wall_time_seconds"] = m.report.wall_time;
    j["seed"] = m.report.seed;
    j["warnings"] = m.report.warnings;
    return j.dump(1) + "\n";
}

// ---- fit ----------------------------------------------------------------

struct FitArgs {
    Common c;
    fs::path data;
    Eigen::Index rank = 0;
    fs::path rank_file;
    bool pool = false;
    bool drop_zero = false;
};

Eigen::Index read_rank_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("no --rank given and cannot read selected rank file " + p.string());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        return parse_rank_spec(line).front();
    }
    throw std::runtime_error("selected rank file is empty: " + p.string());
}

int cmd_fit(const FitArgs& a) {
    const FitOptions opts = a.c.fit_options();
    const CountDataset ds = load_input(a.data, a.pool, a.drop_zero);
    Eigen::Index rank = a.rank;
    if (rank == 0) rank = read_rank_file(a.rank_file.empty() ? a.c.out / "selected_rank.txt" : a.rank_file);
    a.c.prepare_out();
    const FittedModel m = fit(ds, rank, opts);
    io::save_model(a.c.out / "model.json", m);
    write_text_file(a.c.out / "report.json", report_json(m));
    {
        auto out = open_out(a.c.out / "elbo.csv");
        out << a.c.metadata() << "\niteration,elbo\n";
        for (std::size_t t = 0; t < m.report.elbo_trace.size(); ++t) {
            out << t << ',' << io::format_double(m.report.elbo_trace[t]) << '\n';
        }
    }
    write_embeddings(a.c, m);
    for (const auto& w : m.report.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "rank " << rank << ": " << m.report.iterations << " iterations, ELBO "
              << io::format_double(m.report.elbo_trace.back()) << (m.report.converged ? ", converged" : ", NOT converged")
              << '\n';
    return m.report.converged ? kExitOk : kExitNotConverged;
}

// ---- select -------------------------------------------------------------

struct SelectArgs {
    Common c;
    fs::path data;
    std::string ranks;
    bool pool = false;
    bool drop_zero = false;
};

int cmd_select(const SelectArgs& a) {
    const FitOptions opts = a.c.fit_options();
    const auto ranks = parse_rank_spec(a.ranks);
    const CountDataset ds = load_input(a.data, a.pool, a.drop_zero);
    a.c.prepare_out();
    const RankSweepResult r = select_rank(ds, ranks, opts);
    {
        auto out = open_out(a.c.out / "sweep.csv");
        out << a.c.metadata() << '\n';
        out << "# dof=sum_l(d_l*d_z)+d_z+d_z*(d_z+1)/2 score=sum_k(elbo_k-0.5*dof*log(I_k))\n";
        out << "rank,elbo,dof,penalized_score,converged,iterations,wall_time\n";
        for (const auto& f : r.fits) {
            if (!f.ok) {
                out << f.rank << ",nan," << io::format_double(f.dof) << ",nan,0,0,0\n";
                std::cerr << "rank " << f.rank << " failed: " << f.error << '\n';
                continue;
            }
            out << f.rank << ',' << io::format_double(f.elbo) << ',' << io::format_double(f.dof) << ','
                << io::format_double(f.penalized_score) << ',' << (f.converged ? 1 : 0) << ',' << f.iterations << ','
                << io::format_double(f.wall_time) << '\n';
        }
    }
    write_text_file(a.c.out / "selected_rank.txt", a.c.metadata() + "\n" + std::to_string(r.selected) + "\n");
    std::cout << "selected rank " << r.selected << '\n';
    return kExitOk;
}

// ---- simulate -----------------------------------------------------------

struct SimulateArgs {
    Common c;
    std::string preset = "community";
    std::vector<double> rates;
    std::vector<Eigen::Index> dims;
    Eigen::Index latent_dim = 0;
    Eigen::Index replicates = 0;
    double rate = -1.0;
    double theta_scale = 1.0;
    std::int64_t total = -1;
};

SimConfig build_config(const std::string& preset, const SimulateArgs& a) {
    SimConfig cfg;
    switch (parse_preset(preset)) {
        case Preset::classes: cfg = SimConfig::classes_defaults(); break;
        case Preset::community: cfg = SimConfig::community_defaults(); break;
        case Preset::sweep: cfg = SimConfig::sweep_defaults(); break;
    }
    cfg.seed = a.c.seed;
    cfg.theta_scale = a.theta_scale;
    if (a.latent_dim > 0) cfg.latent_dim = a.latent_dim;
    if (a.replicates > 0) cfg.replicates = a.replicates;
    if (a.rate >= 0.0) cfg.poisson_rate = a.rate;
    if (a.total >= 0) cfg.fixed_total = a.total;
    if (!a.dims.empty() && cfg.preset != Preset::sweep) cfg.dims = a.dims;
    return cfg;
}

void write_simulation(const fs::path& dir, const SimResult& r, const SimConfig& cfg, const Common& c) {
    write_dataset(dir, r.dataset);
    write_text_file(dir / "truth.json", truth_to_json(r.truth, r.dataset) + "\n");
    json meta;
    meta["metadata"] = c.metadata();
    meta["preset"] = preset_name(cfg.preset);
    meta["seed"] = cfg.seed;
    meta["latent_dim"] = cfg.latent_dim;
    meta["dims"] = r.dataset.dims();
    meta["replicates"] = cfg.replicates;
    meta["theta_scale"] = cfg.theta_scale;
    if (cfg.fixed_total) {
        meta["fixed_total"] = *cfg.fixed_total;
    } else {
        meta["poisson_rate"] = r.truth.poisson_rate;
    }
    write_text_file(dir / "simulation.json", meta.dump(1) + "\n");
}

int cmd_simulate(const SimulateArgs& a) {
    const SimConfig cfg = build_config(a.preset, a);
    a.c.prepare_out();
    if (cfg.preset == Preset::sweep) {
        const auto rates = a.rates.empty() ? std::vector<double>{10.0, 100.0, 1000.0} : a.rates;
        const auto dims = a.dims.empty() ? cfg.dims : a.dims;
        const auto results = simulate_sweep(cfg, rates, dims);
        std::size_t i = 0;
        for (auto dim : dims) {
            for (double rate : rates) {
                std::ostringstream name;
                name << "rate" << rate << "_dim" << dim;
                SimConfig point = cfg;
                point.dims = {dim};
                point.poisson_rate = rate;
                point.fixed_total.reset();
                write_simulation(a.c.out / name.str(), results[i++], point, a.c);
                std::cout << "wrote " << (a.c.out / name.str()).string() << '\n';
            }
        }
        return kExitOk;
    }
    const SimResult r = cfg.preset == Preset::classes ? simulate_classes(cfg) : simulate_community(cfg);
    write_simulation(a.c.out, r, cfg, a.c);
    std::cout << "wrote " << (a.c.out / "manifest.json").string() << '\n';
    return kExitOk;
}

// ---- covnet -------------------------------------------------------------

struct CovnetArgs {
    Common c;
    std::vector<fs::path> models;
    double threshold = 0.95;
    std::string scope = "intra";
    bool signed_edges = false;
    std::size_t condition = 0;
    std::string species;
};

struct NetworkOutput {
    Eigen::MatrixXd corr;
    CorrelationNetwork net;
};

NetworkOutput build_network(const FittedModel& m, const CovnetArgs& a) {
    const Scope scope = parse_scope(a.scope);
    NetworkOutput out;
    std::vector<std::string> labels;
    if (scope == Scope::intra) {
        std::size_t l = 0;
        if (!a.species.empty()) {
            const auto it = std::find(m.species_labels.begin(), m.species_labels.end(), a.species);
            if (it == m.species_labels.end()) throw std::invalid_argument("unknown species '" + a.species + "'");
            l = static_cast<std::size_t>(it - m.species_labels.begin());
        }
        out.corr = to_correlation(intra_covariance(m.params, a.condition, l).covariance);
        labels = m.feature_labels.at(l);
    } else {
        out.corr = to_correlation(inter_covariance(m.params, a.condition).covariance);
        for (std::size_t l = 0; l < m.feature_labels.size(); ++l) {
            for (const auto& f : m.feature_labels[l]) labels.push_back(m.species_labels[l] + ":" + f);
        }
    }
    out.net = threshold_network(out.corr, a.threshold, labels, a.signed_edges);
    return out;
}

int cmd_covnet(const CovnetArgs& a) {
    if (a.models.empty() || a.models.size() > 2) throw std::invalid_argument("covnet takes one or two --model files");
    std::vector<NetworkOutput> nets;
    for (const auto& p : a.models) nets.push_back(build_network(io::load_model(p), a));
    a.c.prepare_out();
    const auto md = a.c.metadata();
    for (std::size_t i = 0; i < nets.size(); ++i) {
        const std::string suffix = nets.size() == 1 ? "" : (i == 0 ? "_a" : "_b");
        io::write_matrix_csv(a.c.out / ("correlation" + suffix + ".csv"), nets[i].corr, nets[i].net.labels, md);
        io::write_edge_list(a.c.out / ("edges" + suffix + ".csv"), nets[i].net, nets[i].corr, md);
        io::write_degrees(a.c.out / ("degrees" + suffix + ".csv"), nets[i].net, md);
        std::cout << a.models[i].string() << ": " << nets[i].net.labels.size() << " vertices, "
                  << nets[i].net.num_edges() << " edges at threshold " << a.threshold << '\n';
    }
    if (nets.size() == 2) {
        const DegreeDifference d = degree_difference(nets[0].net, nets[1].net);
        io::write_degree_difference(a.c.out / "degree_diff.csv", d, md);
        std::cout << "degree difference: " << d.increased << " increased, " << d.decreased << " decreased, "
                  << d.unchanged << " unchanged\n";
    }
    return kExitOk;
}

// ---- compare ------------------------------------------------------------

struct CompareArgs {
    Common c;
    std::string preset = "community";
    int seeds = 10;
    std::string methods = "empirical,ledoit_wolf,proposed";
    Eigen::Index rank = 0;
    double precision_jitter = 0.1;
    double rate = -1.0;
};

std::vector<CovMethod> parse_methods(const std::string& spec) {
    std::vector<CovMethod> out;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(parse_cov_method(part));
    if (out.empty()) throw std::invalid_argument("empty --methods list");
    return out;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
}

int cmd_compare(const CompareArgs& a) {
    const FitOptions opts = a.c.fit_options();
    const auto methods = parse_methods(a.methods);
    const Preset preset = parse_preset(a.preset);
    if (preset == Preset::classes) throw std::invalid_argument("compare supports the community and sweep presets");
    if (a.seeds < 1) throw std::invalid_argument("--seeds must be >= 1");
    a.c.prepare_out();

    std::vector<std::vector<double>> cov(methods.size()), prec(methods.size());
    auto seeds_out = open_out(a.c.out / "compare_seeds.csv");
    seeds_out << a.c.metadata() << "\nmethod,seed,covariance_rmse,precision_rmse\n";
    for (int s = 0; s < a.seeds; ++s) {
        SimConfig cfg = preset == Preset::sweep ? SimConfig::sweep_defaults() : SimConfig::community_defaults();
        cfg.seed = a.c.seed + static_cast<std::uint64_t>(s);
        if (a.rate >= 0.0) cfg.poisson_rate = a.rate;
        const SimResult sim = simulate_community(cfg);
        FitOptions o = opts;
        o.seed = cfg.seed;
        const Comparison cmp = compare_methods(sim, 0, methods, a.rank > 0 ? a.rank : cfg.latent_dim, o,
                                               a.precision_jitter);
        for (std::size_t i = 0; i < methods.size(); ++i) {
            cov[i].push_back(cmp.scores[i].covariance_rmse);
            prec[i].push_back(cmp.scores[i].precision_rmse);
            seeds_out << cov_method_name(methods[i]) << ',' << cfg.seed << ','
                      << io::format_double(cmp.scores[i].covariance_rmse) << ','
                      << io::format_double(cmp.scores[i].precision_rmse) << '\n';
        }
    }

    auto out = open_out(a.c.out / "compare.csv");
    out << a.c.metadata() << "\n# precision_jitter=" << io::format_double(a.precision_jitter) << '\n';
    out << "method,covariance_rmse_mean,covariance_rmse_std,precision_rmse_mean,precision_rmse_std,"
           "covariance_rmse_per_seed,precision_rmse_per_seed\n";
    const auto joined = [](const std::vector<double>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + io::format_double(v[i]);
        return s;
    };
    for (std::size_t i = 0; i < methods.size(); ++i) {
        const auto [cm, cs] = mean_std(cov[i]);
        const auto [pm, ps] = mean_std(prec[i]);
        out << cov_method_name(methods[i]) << ',' << io::format_double(cm) << ',' << io::format_double(cs) << ','
            << io::format_double(pm) << ',' << io::format_double(ps) << ',' << joined(cov[i]) << ','
            << joined(prec[i]) << '\n';
        std::cout << cov_method_name(methods[i]) << ": covariance RMSE " << cm << " +- " << cs << ", precision RMSE "
                  << pm << " +- " << ps << '\n';
    }
    return kExitOk;
}

// ---- embed --------------------------------------------------------------

struct EmbedArgs {
    Common c;
    fs::path model;
    fs::path data;
    bool pool = false;
};

int cmd_embed(const EmbedArgs& a) {
    FittedModel m = io::load_model(a.model);
    const CountDataset ds = load_input(a.data, a.pool, false);
    if (ds.dims() != m.dims) throw std::invalid_argument("data dimensions do not match the model's");
    if (ds.num_conditions() != m.params.conditions.size()) {
        throw std::invalid_argument("data has a different number of conditions than the model");
    }
    FitOptions opts = m.options;
    opts.seed = a.c.seed;
    m.posterior = infer_posteriors(m.params, ds, opts);
    a.c.prepare_out();
    write_embeddings(a.c, m);
    std::cout << "wrote embeddings for " << ds.num_conditions() << " condition(s)\n";
    return kExitOk;
}

std::string joined_args(int argc, char** argv) {
    std::string s;
    for (int i = 1; i < argc; ++i) s += (i > 1 ? " " : "") + std::string(argv[i]);
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multinomial latent variable model for multi-species count data"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    const std::string flags = joined_args(argc, argv);
    int code = kExitOk;

    FitArgs fa;
    auto* fit_cmd = app.add_subcommand("fit", "Fit the model at a given latent rank");
    add_common(fit_cmd, fa.c, true);
    fit_cmd->add_option("--data", fa.data, "Dataset manifest")->required();
    fit_cmd->add_option("--rank", fa.rank, "Latent dimension (default: read selected_rank.txt)")->check(
        CLI::PositiveNumber);
    fit_cmd->add_option("--rank-file", fa.rank_file, "File holding the selected rank");
    fit_cmd->add_flag("--pool", fa.pool, "Stack all conditions into one before fitting");
    fit_cmd->add_flag("--drop-zero", fa.drop_zero, "Remove features that are zero in every replicate");

    SelectArgs sa;
    auto* select_cmd = app.add_subcommand("select", "Pick the latent rank by the penalized ELBO");
    add_common(select_cmd, sa.c, true);
    select_cmd->add_option("--data", sa.data, "Dataset manifest")->required();
    select_cmd->add_option("--ranks", sa.ranks, "Candidate ranks: lo:hi, lo:hi:step or a,b,c")->required();
    select_cmd->add_flag("--pool", sa.pool, "Stack all conditions into one before fitting");
    select_cmd->add_flag("--drop-zero", sa.drop_zero, "Remove features that are zero in every replicate");

    SimulateArgs ma;
    auto* sim_cmd = app.add_subcommand("simulate", "Generate synthetic data with ground truth");
    add_common(sim_cmd, ma.c, false);
    sim_cmd->add_option("--preset", ma.preset, "classes, community or sweep")->capture_default_str();
    sim_cmd->add_option("--rates", ma.rates, "Poisson rates (sweep preset)")->delimiter(',');
    sim_cmd->add_option("--dims", ma.dims, "Species dimensions (sweep: grid of widths)")->delimiter(',');
    sim_cmd->add_option("--latent-dim", ma.latent_dim, "Latent dimension")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--replicates", ma.replicates, "Replicates per condition")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--rate", ma.rate, "Poisson rate for row totals")->check(CLI::NonNegativeNumber);
    sim_cmd->add_option("--total", ma.total, "Fixed row total instead of Poisson")->check(CLI::NonNegativeNumber);
    sim_cmd->add_option("--theta-scale", ma.theta_scale, "Loading scale multiplier")->capture_default_str();

    CovnetArgs na;
    auto* net_cmd = app.add_subcommand("covnet", "Correlation networks from fitted models");
    add_common(net_cmd, na.c, false);
    net_cmd->add_option("--model", na.models, "Model JSON (give two for a degree comparison)")->required();
    net_cmd->add_option("--threshold", na.threshold, "Correlation threshold")->capture_default_str();
    net_cmd->add_option("--scope", na.scope, "intra (one species) or inter (all species)")->capture_default_str();
    net_cmd->add_flag("--signed", na.signed_edges, "Only positive correlations form edges");
    net_cmd->add_option("--condition", na.condition, "Condition index")->capture_default_str();
    net_cmd->add_option("--species", na.species, "Species label for the intra scope (default: first)");

    CompareArgs ca;
    auto* cmp_cmd = app.add_subcommand("compare", "Covariance recovery against the baselines on simulated data");
    add_common(cmp_cmd, ca.c, true);
    cmp_cmd->add_option("--preset", ca.preset, "community or sweep")->capture_default_str();
    cmp_cmd->add_option("--seeds", ca.seeds, "Number of realizations")->capture_default_str();
    cmp_cmd->add_option("--methods", ca.methods, "Comma-separated methods")->capture_default_str();
    cmp_cmd->add_option("--rank", ca.rank, "Latent dimension of the proposed fit (default: true rank)");
    cmp_cmd->add_option("--precision-jitter", ca.precision_jitter, "Ridge added before inverting")
        ->capture_default_str();
    cmp_cmd->add_option("--rate", ca.rate, "Poisson rate for row totals")->check(CLI::NonNegativeNumber);

    EmbedArgs ea;
    auto* emb_cmd = app.add_subcommand("embed", "Posterior means of new data under a fitted model");
    add_common(emb_cmd, ea.c, false);
    emb_cmd->add_option("--model", ea.model, "Model JSON")->required();
    emb_cmd->add_option("--data", ea.data, "Dataset manifest")->required();
    emb_cmd->add_flag("--pool", ea.pool, "Stack all conditions into one");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitError;
    }

    try {
        for (Common* c : {&fa.c, &sa.c, &ma.c, &na.c, &ca.c, &ea.c}) c->flags = flags;
        if (*fit_cmd) code = cmd_fit(fa);
        if (*select_cmd) code = cmd_select(sa);
        if (*sim_cmd) code = cmd_simulate(ma);
        if (*net_cmd) code = cmd_covnet(na);
        if (*cmp_cmd) code = cmd_compare(ca);
        if (*emb_cmd) code = cmd_embed(ea);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return code;
}
