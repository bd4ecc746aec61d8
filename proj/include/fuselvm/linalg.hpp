#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace fuselvm {

/// Raised when a factorization fails after all jitter retries, or a quantity
/// that must stay finite does not.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Cholesky factor of a symmetric matrix together with its log-determinant.
/// On failure jitter*I is added and the factorization retried, escalating the
/// jitter 10x per attempt (up to three retries).
struct SpdFactor {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double log_det = 0.0;
    double jitter_used = 0.0;

    Eigen::MatrixXd inverse() const;
};

SpdFactor factor_spd(const Eigen::Ref<const Eigen::MatrixXd>& m, double jitter, const char* what);

/// Inverse of an SPD matrix through factor_spd; the result is symmetrized.
Eigen::MatrixXd spd_inverse(const Eigen::Ref<const Eigen::MatrixXd>& m, double jitter, const char* what);

inline Eigen::MatrixXd symmetrized(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    return 0.5 * (m + m.transpose());
}

double min_eigenvalue(const Eigen::Ref<const Eigen::MatrixXd>& m);

}  // namespace fuselvm
