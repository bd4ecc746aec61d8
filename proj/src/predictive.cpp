#include "fuselvm/predictive.hpp"

#include "fuselvm/bound.hpp"
#include "fuselvm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fuselvm {

Scope parse_scope(const std::string& name) {
    if (name == "intra") return Scope::intra;
    if (name == "inter") return Scope::inter;
    throw std::invalid_argument("unknown scope '" + name + "' (expected intra or inter)");
}

Eigen::VectorXd transform_sample(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& b) {
    if (x.size() != b.size()) throw std::invalid_argument("transform_sample: length mismatch");
    return HessianBound(x.size()).apply_inverse(b + x);
}

namespace {

const ConditionParams& condition_at(const ModelParams& params, std::size_t k) {
    if (k >= params.conditions.size()) throw std::out_of_range("unknown condition index " + std::to_string(k));
    return params.conditions[k];
}

}  // namespace

MarginalGaussian intra_covariance(const ModelParams& params, std::size_t k, std::size_t l) {
    const auto& c = condition_at(params, k);
    if (l >= c.theta.size()) throw std::out_of_range("unknown species index " + std::to_string(l));
    const auto& theta = c.theta[l];
    MarginalGaussian out;
    out.scope = Scope::intra;
    out.condition = k;
    out.species = l;
    out.mean = theta * c.mu;
    out.covariance = symmetrized(theta * c.sigma * theta.transpose());
    out.covariance += HessianBound(theta.rows()).dense_inverse();
    return out;
}

Eigen::MatrixXd latent_covariance(const ModelParams& params, std::size_t k) {
    const auto& c = condition_at(params, k);
    Eigen::Index rows = 0;
    for (const auto& t : c.theta) rows += t.rows();
    Eigen::MatrixXd stacked(rows, params.latent_dim);
    Eigen::Index r = 0;
    for (const auto& t : c.theta) {
        stacked.middleRows(r, t.rows()) = t;
        r += t.rows();
    }
    return symmetrized(stacked * c.sigma * stacked.transpose());
}

MarginalGaussian inter_covariance(const ModelParams& params, std::size_t k) {
    const auto& c = condition_at(params, k);
    MarginalGaussian out;
    out.scope = Scope::inter;
    out.condition = k;
    out.covariance = latent_covariance(params, k);
    out.mean.resize(out.covariance.rows());
    Eigen::Index r = 0;
    for (const auto& t : c.theta) {
        out.mean.segment(r, t.rows()) = t * c.mu;
        out.covariance.block(r, r, t.rows(), t.rows()) += HessianBound(t.rows()).dense_inverse();
        r += t.rows();
    }
    return out;
}

Eigen::MatrixXd to_correlation(const Eigen::Ref<const Eigen::MatrixXd>& c) {
    if (c.rows() != c.cols()) throw std::invalid_argument("to_correlation: matrix is not square");
    const Eigen::VectorXd d = c.diagonal();
    if (!((d.array() > 0.0).all())) throw std::invalid_argument("to_correlation: nonpositive diagonal entry");
    const Eigen::VectorXd inv_sd = d.array().rsqrt().matrix();
    Eigen::MatrixXd corr = symmetrized(inv_sd.asDiagonal() * c * inv_sd.asDiagonal());
    corr = corr.cwiseMax(-1.0).cwiseMin(1.0);
    corr.diagonal().setOnes();
    return corr;
}

std::size_t CorrelationNetwork::num_edges() const {
    return static_cast<std::size_t>(std::accumulate(degree.begin(), degree.end(), 0)) / 2;
}

CorrelationNetwork threshold_network(const Eigen::Ref<const Eigen::MatrixXd>& corr, double tau,
                                     std::vector<std::string> labels, bool signed_edges) {
    const Eigen::Index n = corr.rows();
    if (corr.cols() != n) throw std::invalid_argument("threshold_network: malformed correlation matrix (not square)");
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("threshold_network: threshold must lie in (0, 1]");
    if (!corr.allFinite()) throw std::invalid_argument("threshold_network: malformed correlation matrix (non-finite)");
    if ((corr - corr.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
        throw std::invalid_argument("threshold_network: malformed correlation matrix (asymmetric)");
    }
    if ((corr.diagonal().array() - 1.0).abs().maxCoeff() > 1e-8) {
        throw std::invalid_argument("threshold_network: malformed correlation matrix (diagonal not 1)");
    }
    if (labels.empty()) {
        for (Eigen::Index i = 0; i < n; ++i) labels.push_back(std::to_string(i));
    }
    if (static_cast<Eigen::Index>(labels.size()) != n) throw std::invalid_argument("threshold_network: label count");

    CorrelationNetwork net;
    net.labels = std::move(labels);
    net.threshold = tau;
    net.signed_edges = signed_edges;
    net.adjacency = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, n);
    net.degree.assign(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = signed_edges ? corr(i, j) : std::fabs(corr(i, j));
            if (v >= tau) {
                net.adjacency(i, j) = net.adjacency(j, i) = 1;
                ++net.degree[static_cast<std::size_t>(i)];
                ++net.degree[static_cast<std::size_t>(j)];
            }
        }
    }
    return net;
}

DegreeDifference degree_difference(const CorrelationNetwork& a, const CorrelationNetwork& b) {
    if (a.labels != b.labels) throw std::invalid_argument("degree_difference: vertex label mismatch");
    const std::size_t n = a.labels.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const auto diff = [&](std::size_t v) { return b.degree[v] - a.degree[v]; };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return diff(x) > diff(y); });

    DegreeDifference out;
    for (auto v : order) {
        const int d = diff(v);
        out.labels.push_back(a.labels[v]);
        out.difference.push_back(d);
        out.degree_a.push_back(a.degree[v]);
        out.degree_b.push_back(b.degree[v]);
        if (d > 0) {
            ++out.increased;
        } else if (d < 0) {
            ++out.decreased;
        } else {
            ++out.unchanged;
        }
    }
    return out;
}

Eigen::VectorXd composition_distribution(const ModelParams& params, std::size_t k, std::size_t l) {
    const auto& c = condition_at(params, k);
    if (l >= c.theta.size()) throw std::out_of_range("unknown species index " + std::to_string(l));
    return softmax(c.theta[l] * c.mu);
}

double hellinger(const Eigen::Ref<const Eigen::VectorXd>& p, const Eigen::Ref<const Eigen::VectorXd>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("hellinger: length mismatch");
    if ((p.array() < 0.0).any() || (q.array() < 0.0).any()) throw std::invalid_argument("hellinger: negative entry");
    if (std::fabs(p.sum() - 1.0) > 1e-8 || std::fabs(q.sum() - 1.0) > 1e-8) {
        throw std::invalid_argument("hellinger: inputs must sum to 1");
    }
    const double bc = (p.array() * q.array()).sqrt().sum();
    return std::sqrt(std::clamp(1.0 - bc, 0.0, 1.0));
}

}  // namespace fuselvm
