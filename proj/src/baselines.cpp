#include "fuselvm/baselines.hpp"

#include "fuselvm/linalg.hpp"

#include <cmath>
#include <stdexcept>

namespace fuselvm {

CovMethod parse_cov_method(const std::string& name) {
    if (name == "empirical") return CovMethod::empirical;
    if (name == "ledoit_wolf") return CovMethod::ledoit_wolf;
    if (name == "proposed") return CovMethod::proposed;
    throw std::invalid_argument("unknown covariance method '" + name + "'");
}

std::string cov_method_name(CovMethod m) {
    switch (m) {
        case CovMethod::empirical: return "empirical";
        case CovMethod::ledoit_wolf: return "ledoit_wolf";
        case CovMethod::proposed: return "proposed";
    }
    return "unknown";
}

namespace {

void require_rows(const Eigen::Ref<const Eigen::MatrixXd>& x, const char* what) {
    if (x.rows() < 2) throw std::invalid_argument(std::string(what) + ": need at least 2 samples");
    if (x.cols() < 1) throw std::invalid_argument(std::string(what) + ": need at least 1 feature");
}

Eigen::MatrixXd centered(const Eigen::Ref<const Eigen::MatrixXd>& x) {
    return x.rowwise() - x.colwise().mean();
}

}  // namespace

Standardized standardize(const Eigen::Ref<const Eigen::MatrixXd>& x) {
    require_rows(x, "standardize");
    Standardized out;
    out.data = centered(x);
    const double n = static_cast<double>(x.rows());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double sd = std::sqrt(out.data.col(j).squaredNorm() / n);
        if (sd > 0.0) {
            out.data.col(j) /= sd;
        } else {
            out.data.col(j).setZero();
            out.constant_columns.push_back(j);
        }
    }
    return out;
}

CovEstimate empirical_cov(const Eigen::Ref<const Eigen::MatrixXd>& x, bool unbiased) {
    require_rows(x, "empirical_cov");
    const Eigen::MatrixXd xc = centered(x);
    const double denom = static_cast<double>(unbiased ? x.rows() - 1 : x.rows());
    CovEstimate est;
    est.method = CovMethod::empirical;
    est.covariance = symmetrized((xc.transpose() * xc) / denom);
    return est;
}

CovEstimate ledoit_wolf(const Eigen::Ref<const Eigen::MatrixXd>& x) {
    require_rows(x, "ledoit_wolf");
    const Eigen::MatrixXd xc = centered(x);
    const double n = static_cast<double>(x.rows());
    const double p = static_cast<double>(x.cols());
    const Eigen::MatrixXd s = symmetrized((xc.transpose() * xc) / n);

    const double mu = s.trace() / p;
    const double s_norm2 = s.squaredNorm();
    // ||S - mu I||^2 = ||S||^2 - 2 mu tr(S) + p mu^2
    const double delta = (s_norm2 - 2.0 * mu * s.trace() + p * mu * mu) / p;
    // sum_k ||x_k x_k^T - S||^2 = sum_k ||x_k||^4 - n ||S||^2
    const double fourth = xc.rowwise().squaredNorm().array().square().sum();
    double beta = (fourth - n * s_norm2) / (n * n * p);
    beta = std::min(std::max(beta, 0.0), delta);
    const double shrinkage = delta > 0.0 ? beta / delta : 0.0;

    CovEstimate est;
    est.method = CovMethod::ledoit_wolf;
    est.shrinkage = shrinkage;
    est.covariance = (1.0 - shrinkage) * s;
    est.covariance.diagonal().array() += shrinkage * mu;
    return est;
}

double rmse_matrix(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("rmse_matrix: shape mismatch");
    if (a.size() == 0) throw std::invalid_argument("rmse_matrix: empty matrices");
    return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

Eigen::MatrixXd stabilized_inverse(const Eigen::Ref<const Eigen::MatrixXd>& c, double jitter) {
    Eigen::MatrixXd m = symmetrized(c);
    m.diagonal().array() += jitter;
    return spd_inverse(m, jitter, "stabilized inverse");
}

void attach_precision(CovEstimate& est, double jitter) {
    est.precision = stabilized_inverse(est.covariance, jitter);
    est.precision_jitter = jitter;
}

Eigen::MatrixXd stacked_counts(const CountDataset& ds, std::size_t k) {
    if (k >= ds.num_conditions()) throw std::out_of_range("unknown condition index " + std::to_string(k));
    Eigen::MatrixXd out(ds.replicates(k), ds.total_dim());
    Eigen::Index col = 0;
    for (std::size_t l = 0; l < ds.num_species(); ++l) {
        out.middleCols(col, ds.dim(l)) = ds.counts[k][l].cast<double>();
        col += ds.dim(l);
    }
    return out;
}

}  // namespace fuselvm
