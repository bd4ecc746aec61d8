#pragma once

#include <Eigen/Dense>

namespace fuselvm {

/// Numerically stable softmax over all entries. Throws on non-finite input.
Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& eta);

/// log(sum(exp(eta))) with max subtraction. Throws on non-finite input.
double lse(const Eigen::Ref<const Eigen::VectorXd>& eta);

/// Fixed-curvature matrix of the quadratic LSE bound,
///
///   A = 0.5 * (I - 11^T / (D + 1)),   A^{-1} = 2 * (I + 11^T).
///
/// A is never stored densely; every routine exploits the scale-plus-rank-one
/// structure and costs O(D) per vector.
class HessianBound {
public:
    explicit HessianBound(Eigen::Index dim);

    Eigen::Index dim() const noexcept { return dim_; }

    Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& v) const;
    Eigen::VectorXd apply_inverse(const Eigen::Ref<const Eigen::VectorXd>& v) const;

    /// v^T A v
    double quadratic_form(const Eigen::Ref<const Eigen::VectorXd>& v) const;

    /// Theta^T A Theta for a (D x q) matrix, via 0.5 * (Theta^T Theta - s s^T / (D+1))
    /// with s = Theta^T 1.
    Eigen::MatrixXd sandwich(const Eigen::Ref<const Eigen::MatrixXd>& theta) const;

    /// A^{-1} applied to every column of M.
    Eigen::MatrixXd apply_inverse_columns(const Eigen::Ref<const Eigen::MatrixXd>& m) const;

    Eigen::MatrixXd dense() const;
    Eigen::MatrixXd dense_inverse() const;

private:
    Eigen::Index dim_;
    double rank_one_;  // 1 / (D + 1)
};

/// Linear and constant coefficients of the bound at expansion point phi:
///   b = A phi - softmax(phi)
///   c = 0.5 phi^T A phi - softmax(phi)^T phi + lse(phi)
struct BoundCoefficients {
    Eigen::VectorXd phi;
    Eigen::VectorXd b;
    double c = 0.0;

    Eigen::Index dim() const noexcept { return phi.size(); }
};

BoundCoefficients bound_coefficients(const Eigen::Ref<const Eigen::VectorXd>& phi);

/// 0.5 eta^T A eta - b^T eta + c, an upper bound on lse(eta) that is tight at eta == phi.
double lse_quadratic_upper(const Eigen::Ref<const Eigen::VectorXd>& eta,
                           const Eigen::Ref<const Eigen::VectorXd>& phi);

double lse_quadratic_upper(const Eigen::Ref<const Eigen::VectorXd>& eta,
                           const BoundCoefficients& coeffs);

}  // namespace fuselvm
