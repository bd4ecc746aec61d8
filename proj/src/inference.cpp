#include "fuselvm/inference.hpp"

#include "fuselvm/bound.hpp"
#include "fuselvm/kernels.hpp"
#include "fuselvm/linalg.hpp"
#include "fuselvm/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace fuselvm {

void FitOptions::validate() const {
    if (max_outer_iters < 1) throw std::invalid_argument("max_outer_iters must be >= 1");
    if (max_inner_iters < 1) throw std::invalid_argument("max_inner_iters must be >= 1");
    if (!(rel_tol > 0.0)) throw std::invalid_argument("rel_tol must be positive");
    if (!(inner_tol > 0.0)) throw std::invalid_argument("inner_tol must be positive");
    if (!(jitter > 0.0)) throw std::invalid_argument("jitter must be positive");
    if (!(init_scale > 0.0)) throw std::invalid_argument("init_scale must be positive");
    if (threads < 0) throw std::invalid_argument("threads must be >= 0");
}

ConditionData ConditionData::from_dataset(const CountDataset& ds, std::size_t k) {
    if (k >= ds.num_conditions()) throw std::out_of_range("unknown condition index " + std::to_string(k));
    ConditionData out;
    const auto n = static_cast<std::size_t>(ds.replicates(k));
    const std::size_t n_species = ds.num_species();
    out.counts.resize(n);
    out.totals.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.counts[i].reserve(n_species);
        out.totals[i].reserve(n_species);
        for (std::size_t l = 0; l < n_species; ++l) {
            const auto row = ds.counts[k][l].row(static_cast<Eigen::Index>(i));
            Eigen::VectorXd x = row.transpose().cast<double>();
            out.totals[i].push_back(x.sum());
            out.counts[i].push_back(std::move(x));
        }
    }
    return out;
}

ConditionCache ConditionCache::build(const ConditionParams& p, double jitter) {
    ConditionCache c;
    const SpdFactor f = factor_spd(p.sigma, jitter, "prior covariance");
    c.sigma_inv = f.inverse();
    c.sigma_inv_mu = c.sigma_inv * p.mu;
    c.sigma_log_det = f.log_det;
    c.gram.reserve(p.theta.size());
    for (const auto& theta : p.theta) c.gram.push_back(HessianBound(theta.rows()).sandwich(theta));
    return c;
}

namespace {

void check_shapes(const ConditionParams& params, std::span<const Eigen::VectorXd> counts) {
    if (counts.size() != params.theta.size()) {
        throw std::invalid_argument("shape mismatch: species count differs from loadings");
    }
    for (std::size_t l = 0; l < counts.size(); ++l) {
        if (counts[l].size() != params.theta[l].rows()) {
            throw std::invalid_argument("shape mismatch: count vector length differs from loading rows");
        }
    }
}

// b = A phi - softmax(phi), written into out.
void bound_linear(const Eigen::VectorXd& phi, Eigen::VectorXd& out) {
    const double top = phi.maxCoeff();
    out = (phi.array() - top).exp().matrix();
    out /= out.sum();
    const double shift = phi.sum() / static_cast<double>(phi.size() + 1);
    out = 0.5 * (phi.array() - shift).matrix() - out;
}

Eigen::VectorXd expansion_or_prior(const SamplePosterior& state, std::size_t l, const ConditionParams& params) {
    if (l < state.expansion.size() && state.expansion[l].size() == params.theta[l].rows()) {
        return state.expansion[l];
    }
    return params.theta[l] * params.mu;
}

}  // namespace

SamplePosterior e_step_sample(const ConditionParams& params, const ConditionCache& cache,
                              std::span<const Eigen::VectorXd> counts, std::span<const double> totals,
                              const SamplePosterior& state, const FitOptions& opts) {
    check_shapes(params, counts);
    const std::size_t n_species = counts.size();
    const Eigen::Index dz = params.mu.size();

    SamplePosterior out;
    out.expansion.resize(n_species);

    const bool empty = std::all_of(totals.begin(), totals.end(), [](double t) { return t == 0.0; });
    if (empty) {
        // No data terms: the posterior is the prior.
        out.mean = params.mu;
        out.cov = params.sigma;
        for (std::size_t l = 0; l < n_species; ++l) out.expansion[l] = params.theta[l] * params.mu;
        return out;
    }

    Eigen::MatrixXd precision = cache.sigma_inv;
    Eigen::VectorXd rhs_fixed = cache.sigma_inv_mu;
    for (std::size_t l = 0; l < n_species; ++l) {
        if (totals[l] == 0.0) continue;
        precision.noalias() += totals[l] * cache.gram[l];
        rhs_fixed.noalias() += params.theta[l].transpose() * counts[l];
    }
    const SpdFactor factor = factor_spd(precision, opts.jitter, "posterior precision");
    out.cov = factor.inverse();

    for (std::size_t l = 0; l < n_species; ++l) out.expansion[l] = expansion_or_prior(state, l, params);

    Eigen::VectorXd rhs(dz);
    Eigen::VectorXd b;
    Eigen::VectorXd next;
    for (int iter = 0; iter < opts.max_inner_iters; ++iter) {
        rhs = rhs_fixed;
        for (std::size_t l = 0; l < n_species; ++l) {
            if (totals[l] == 0.0) continue;
            bound_linear(out.expansion[l], b);
            rhs.noalias() += totals[l] * (params.theta[l].transpose() * b);
        }
        out.mean = factor.llt.solve(rhs);

        double delta = 0.0;
        for (std::size_t l = 0; l < n_species; ++l) {
            next.noalias() = params.theta[l] * out.mean;
            delta = std::max(delta, (next - out.expansion[l]).lpNorm<Eigen::Infinity>());
            out.expansion[l].swap(next);
        }
        if (!out.mean.allFinite()) throw NumericalError("non-finite posterior mean");
        if (delta < opts.inner_tol) break;
    }
    return out;
}

SamplePosterior e_step_sample(const ModelParams& params, std::size_t k, std::span<const Eigen::VectorXd> counts,
                              const SamplePosterior& state, const FitOptions& opts) {
    if (k >= params.conditions.size()) throw std::out_of_range("unknown condition index " + std::to_string(k));
    const auto& cp = params.conditions[k];
    const ConditionCache cache = ConditionCache::build(cp, opts.jitter);
    std::vector<double> totals;
    for (const auto& x : counts) totals.push_back(x.sum());
    return e_step_sample(cp, cache, counts, totals, state, opts);
}

SamplePosterior posterior_given_expansion(const ConditionParams& params, std::span<const Eigen::VectorXd> counts,
                                          std::span<const Eigen::VectorXd> expansion, double jitter) {
    check_shapes(params, counts);
    if (expansion.size() != counts.size()) throw std::invalid_argument("shape mismatch: expansion points");
    const ConditionCache cache = ConditionCache::build(params, jitter);
    Eigen::MatrixXd precision = cache.sigma_inv;
    Eigen::VectorXd rhs = cache.sigma_inv_mu;
    Eigen::VectorXd b;
    for (std::size_t l = 0; l < counts.size(); ++l) {
        const double n = counts[l].sum();
        precision.noalias() += n * cache.gram[l];
        bound_linear(expansion[l], b);
        rhs.noalias() += params.theta[l].transpose() * (counts[l] + n * b);
    }
    const SpdFactor factor = factor_spd(precision, jitter, "posterior precision");
    SamplePosterior out;
    out.cov = factor.inverse();
    out.mean = factor.llt.solve(rhs);
    out.expansion.assign(expansion.begin(), expansion.end());
    return out;
}

ConditionParams m_step(std::span<const SamplePosterior> posteriors, const ConditionData& data, double jitter) {
    const auto n = posteriors.size();
    if (n == 0 || n != static_cast<std::size_t>(data.replicates())) {
        throw std::invalid_argument("m_step: posteriors must cover every replicate");
    }
    const Eigen::Index dz = posteriors.front().mean.size();
    const std::size_t n_species = data.counts.front().size();
    const double inv_n = 1.0 / static_cast<double>(n);

    ConditionParams out;
    out.theta.reserve(n_species);
    Eigen::VectorXd b;
    for (std::size_t l = 0; l < n_species; ++l) {
        const Eigen::Index dim = data.counts.front()[l].size();
        Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(dim, dz);
        Eigen::MatrixXd second = Eigen::MatrixXd::Zero(dz, dz);
        for (std::size_t i = 0; i < n; ++i) {
            const double total = data.totals[i][l];
            if (total == 0.0) continue;
            const auto& q = posteriors[i];
            bound_linear(q.expansion[l], b);
            cross.noalias() += (data.counts[i][l] + total * b) * q.mean.transpose();
            second.noalias() += total * (q.mean * q.mean.transpose() + q.cov);
        }
        if (second.trace() == 0.0) {
            throw NumericalError("m_step: species " + std::to_string(l) + " has no counts; loadings are undetermined");
        }
        const SpdFactor f = factor_spd(second, jitter, "loading normal equations");
        const Eigen::MatrixXd scaled = HessianBound(dim).apply_inverse_columns(cross);
        out.theta.push_back(f.llt.solve(scaled.transpose()).transpose());
    }

    out.mu = Eigen::VectorXd::Zero(dz);
    for (const auto& q : posteriors) out.mu += q.mean;
    out.mu *= inv_n;

    out.sigma = Eigen::MatrixXd::Zero(dz, dz);
    for (const auto& q : posteriors) {
        const Eigen::VectorXd d = q.mean - out.mu;
        out.sigma.noalias() += d * d.transpose();
        out.sigma += q.cov;
    }
    out.sigma *= inv_n;
    out.sigma = symmetrized(out.sigma);
    const SpdFactor check = factor_spd(out.sigma, jitter, "prior covariance update");
    if (check.jitter_used > 0.0) out.sigma.diagonal().array() += check.jitter_used;
    return out;
}

double sample_elbo(const ConditionParams& params, const ConditionCache& cache, std::span<const Eigen::VectorXd> counts,
                   std::span<const double> totals, const SamplePosterior& q) {
    const auto dz = static_cast<double>(q.mean.size());
    // Factor with zero jitter: a non-SPD posterior covariance is an error here.
    const SpdFactor fs = factor_spd(q.cov, 0.0, "posterior covariance");
    const Eigen::VectorXd diff = q.mean - params.mu;
    const double trace_term = cache.sigma_inv.cwiseProduct(q.cov).sum();
    const double mahal = diff.dot(cache.sigma_inv * diff);
    // E_q[log p(z)] + entropy(q) == -KL(q || p)
    double value = -0.5 * (trace_term + mahal + cache.sigma_log_det - fs.log_det - dz);

    for (std::size_t l = 0; l < counts.size(); ++l) {
        const double total = totals[l];
        const Eigen::VectorXd eta = params.theta[l] * q.mean;
        value += counts[l].dot(eta);
        if (total == 0.0) continue;
        const BoundCoefficients bc = bound_coefficients(q.expansion[l]);
        const auto& g = cache.gram[l];
        const double quad = q.mean.dot(g * q.mean) + g.cwiseProduct(q.cov).sum();
        value -= total * (0.5 * quad - bc.b.dot(eta) + bc.c);
    }
    return value;
}

double condition_elbo(const ConditionParams& params, std::span<const SamplePosterior> posteriors,
                      const ConditionData& data, double jitter) {
    const ConditionCache cache = ConditionCache::build(params, jitter);
    const auto terms = kernels::elbo_terms_serial(params, cache, data, posteriors);
    return kernels::pairwise_sum(terms);
}

double elbo(const ModelParams& params, const PosteriorState& posteriors, const CountDataset& data) {
    if (params.conditions.size() != data.num_conditions() || posteriors.samples.size() != data.num_conditions()) {
        throw std::invalid_argument("elbo: condition count mismatch");
    }
    double total = 0.0;
    for (std::size_t k = 0; k < data.num_conditions(); ++k) {
        const ConditionData cd = ConditionData::from_dataset(data, k);
        if (posteriors.samples[k].size() != cd.counts.size()) throw std::invalid_argument("elbo: replicate mismatch");
        total += condition_elbo(params.conditions[k], posteriors.samples[k], cd);
    }
    return total;
}

ModelParams initial_params(const CountDataset& data, Eigen::Index latent_dim, const FitOptions& opts) {
    if (latent_dim < 1) throw std::invalid_argument("latent dimension must be >= 1");
    ModelParams p;
    p.latent_dim = latent_dim;
    Philox4x32 rng(opts.seed, derive_stream(0x494e4954 /* "INIT" */));
    const double scale = opts.init_scale / std::sqrt(static_cast<double>(latent_dim));
    for (std::size_t k = 0; k < data.num_conditions(); ++k) {
        ConditionParams c;
        c.mu = Eigen::VectorXd::Zero(latent_dim);
        c.sigma = Eigen::MatrixXd::Identity(latent_dim, latent_dim);
        for (std::size_t l = 0; l < data.num_species(); ++l) {
            Eigen::MatrixXd theta(data.dim(l), latent_dim);
            for (Eigen::Index r = 0; r < theta.rows(); ++r) {
                for (Eigen::Index col = 0; col < latent_dim; ++col) theta(r, col) = scale * rng.normal();
            }
            c.theta.push_back(std::move(theta));
        }
        p.conditions.push_back(std::move(c));
    }
    return p;
}

PosteriorState initial_posteriors(const ModelParams& params, const CountDataset& data) {
    PosteriorState s;
    s.samples.resize(data.num_conditions());
    for (std::size_t k = 0; k < data.num_conditions(); ++k) {
        const auto& c = params.conditions.at(k);
        SamplePosterior prior;
        prior.mean = c.mu;
        prior.cov = c.sigma;
        for (const auto& theta : c.theta) prior.expansion.push_back(theta * c.mu);
        s.samples[k].assign(static_cast<std::size_t>(data.replicates(k)), prior);
    }
    return s;
}

void center_shift(ConditionParams& params, std::span<SamplePosterior> posteriors) {
    for (auto& t : params.theta) t.rowwise() -= t.colwise().mean();
    for (auto& q : posteriors) {
        for (auto& phi : q.expansion) phi.array() -= phi.mean();
    }
}

FittedModel fit(const CountDataset& data, Eigen::Index latent_dim, const FitOptions& opts) {
    opts.validate();
    if (latent_dim < 1) throw std::invalid_argument("latent dimension must be >= 1");
    data.validate();
    const auto start = std::chrono::steady_clock::now();

    FittedModel model;
    model.options = opts;
    model.report.seed = opts.seed;
    model.report.latent_dim = latent_dim;

    const Eigen::Index effective = data.total_dim() - static_cast<Eigen::Index>(data.num_species());
    if (latent_dim > effective) {
        model.report.warnings.push_back("latent dimension exceeds the identifiable observation dimension");
    }
    for (std::size_t k = 0; k < data.num_conditions(); ++k) {
        if (latent_dim >= data.replicates(k)) {
            model.report.warnings.push_back("latent dimension >= replicate count of condition '" +
                                            data.condition_labels[k] + "'");
        }
    }

    model.params = initial_params(data, latent_dim, opts);
    model.posterior = initial_posteriors(model.params, data);

    std::vector<ConditionData> views;
    for (std::size_t k = 0; k < data.num_conditions(); ++k) views.push_back(ConditionData::from_dataset(data, k));
    const int threads = kernels::resolve_threads(opts);

    auto& report = model.report;
    report.condition_elbo.assign(data.num_conditions(), 0.0);
    for (int iter = 1; iter <= opts.max_outer_iters; ++iter) {
        for (std::size_t k = 0; k < data.num_conditions(); ++k) {
            auto& params = model.params.conditions[k];
            auto& posts = model.posterior.samples[k];
            const ConditionCache cache = ConditionCache::build(params, opts.jitter);
            kernels::estep(params, cache, views[k], posts, opts);
            params = m_step(posts, views[k], opts.jitter);

            const ConditionCache updated = ConditionCache::build(params, opts.jitter);
            const auto terms = opts.backend == Backend::openmp
                                   ? kernels::elbo_terms_openmp(params, updated, views[k], posts, threads)
                                   : kernels::elbo_terms_serial(params, updated, views[k], posts);
            report.condition_elbo[k] = kernels::pairwise_sum(terms);

            if (opts.shift_step) {
                ConditionParams trial = params;
                std::vector<SamplePosterior> trial_posts = posts;
                center_shift(trial, trial_posts);
                const ConditionCache trial_cache = ConditionCache::build(trial, opts.jitter);
                const auto trial_terms =
                    opts.backend == Backend::openmp
                        ? kernels::elbo_terms_openmp(trial, trial_cache, views[k], trial_posts, threads)
                        : kernels::elbo_terms_serial(trial, trial_cache, views[k], trial_posts);
                const double value = kernels::pairwise_sum(trial_terms);
                if (value > report.condition_elbo[k]) {
                    params = std::move(trial);
                    posts = std::move(trial_posts);
                    report.condition_elbo[k] = value;
                }
            }
        }
        double total = 0.0;
        for (double v : report.condition_elbo) total += v;
        if (!std::isfinite(total)) throw NumericalError("non-finite ELBO at iteration " + std::to_string(iter));

        report.elbo_trace.push_back(total);
        report.iterations = iter;
        if (report.elbo_trace.size() >= 2) {
            const double prev = report.elbo_trace[report.elbo_trace.size() - 2];
            if (std::fabs(total - prev) <= opts.rel_tol * std::fabs(prev)) {
                report.converged = true;
                break;
            }
        }
    }

    report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    model.data_fingerprint = dataset_fingerprint(data);
    model.dims = data.dims();
    model.condition_labels = data.condition_labels;
    model.species_labels = data.species_labels;
    model.feature_labels = data.feature_labels;
    return model;
}

Eigen::MatrixXd get_embeddings(const FittedModel& model, std::size_t k) {
    if (k >= model.posterior.samples.size()) throw std::out_of_range("unknown condition index " + std::to_string(k));
    const auto& posts = model.posterior.samples[k];
    Eigen::MatrixXd out(static_cast<Eigen::Index>(posts.size()), model.params.latent_dim);
    for (std::size_t i = 0; i < posts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = posts[i].mean.transpose();
    return out;
}

PosteriorState infer_posteriors(const ModelParams& params, const CountDataset& data, const FitOptions& opts) {
    opts.validate();
    if (params.conditions.size() != data.num_conditions()) {
        throw std::invalid_argument("infer_posteriors: condition count mismatch");
    }
    PosteriorState state = initial_posteriors(params, data);
    for (std::size_t k = 0; k < data.num_conditions(); ++k) {
        const ConditionData view = ConditionData::from_dataset(data, k);
        const auto& cp = params.conditions[k];
        const ConditionCache cache = ConditionCache::build(cp, opts.jitter);
        auto& posts = state.samples[k];
        for (int pass = 0; pass < opts.max_outer_iters; ++pass) {
            std::vector<Eigen::VectorXd> before;
            for (const auto& q : posts) before.push_back(q.mean);
            kernels::estep(cp, cache, view, posts, opts);
            double moved = 0.0;
            for (std::size_t i = 0; i < posts.size(); ++i) {
                moved = std::max(moved, (posts[i].mean - before[i]).lpNorm<Eigen::Infinity>());
            }
            if (moved < opts.inner_tol) break;
        }
    }
    return state;
}

}  // namespace fuselvm
