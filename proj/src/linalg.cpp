#include "fuselvm/linalg.hpp"

#include <cmath>

namespace fuselvm {

namespace {
constexpr int kJitterRetries = 3;
}

Eigen::MatrixXd SpdFactor::inverse() const {
    const auto n = llt.matrixLLT().rows();
    Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    return symmetrized(inv);
}

SpdFactor factor_spd(const Eigen::Ref<const Eigen::MatrixXd>& m, double jitter, const char* what) {
    if (m.rows() != m.cols()) {
        throw std::invalid_argument(std::string(what) + ": matrix is not square");
    }
    if (!m.allFinite()) {
        throw NumericalError(std::string(what) + ": non-finite matrix entries");
    }
    SpdFactor f;
    Eigen::MatrixXd work = symmetrized(m);
    double added = 0.0;
    double step = jitter;
    for (int attempt = 0; attempt <= kJitterRetries; ++attempt) {
        f.llt.compute(work);
        if (f.llt.info() == Eigen::Success) {
            const auto diag = f.llt.matrixLLT().diagonal();
            if ((diag.array() > 0.0).all()) {
                f.log_det = 2.0 * diag.array().log().sum();
                f.jitter_used = added;
                return f;
            }
        }
        if (attempt == kJitterRetries) break;
        work.diagonal().array() += step;
        added += step;
        step *= 10.0;
    }
    throw NumericalError(std::string(what) + ": matrix not positive definite after jitter retries");
}

Eigen::MatrixXd spd_inverse(const Eigen::Ref<const Eigen::MatrixXd>& m, double jitter, const char* what) {
    return factor_spd(m, jitter, what).inverse();
}

double min_eigenvalue(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrized(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

}  // namespace fuselvm
