#include "fuselvm/bound.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fuselvm {

namespace {

void require_finite(const Eigen::Ref<const Eigen::VectorXd>& v, const char* what) {
    if (v.size() == 0) {
        throw std::invalid_argument(std::string(what) + ": empty input");
    }
    if (!v.allFinite()) {
        throw std::invalid_argument(std::string(what) + ": non-finite input");
    }
}

}  // namespace

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& eta) {
    require_finite(eta, "softmax");
    const double top = eta.maxCoeff();
    Eigen::VectorXd p = (eta.array() - top).exp().matrix();
    p /= p.sum();
    return p;
}

double lse(const Eigen::Ref<const Eigen::VectorXd>& eta) {
    require_finite(eta, "lse");
    const double top = eta.maxCoeff();
    return top + std::log((eta.array() - top).exp().sum());
}

HessianBound::HessianBound(Eigen::Index dim) : dim_(dim), rank_one_(0.0) {
    if (dim < 1) {
        throw std::invalid_argument("HessianBound: dimension must be >= 1");
    }
    rank_one_ = 1.0 / static_cast<double>(dim + 1);
}

Eigen::VectorXd HessianBound::apply(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    if (v.size() != dim_) throw std::invalid_argument("HessianBound::apply: length mismatch");
    return 0.5 * (v.array() - rank_one_ * v.sum()).matrix();
}

Eigen::VectorXd HessianBound::apply_inverse(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    if (v.size() != dim_) throw std::invalid_argument("HessianBound::apply_inverse: length mismatch");
    return 2.0 * (v.array() + v.sum()).matrix();
}

double HessianBound::quadratic_form(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    if (v.size() != dim_) throw std::invalid_argument("HessianBound::quadratic_form: length mismatch");
    const double s = v.sum();
    return 0.5 * (v.squaredNorm() - rank_one_ * s * s);
}

Eigen::MatrixXd HessianBound::sandwich(const Eigen::Ref<const Eigen::MatrixXd>& theta) const {
    if (theta.rows() != dim_) throw std::invalid_argument("HessianBound::sandwich: row mismatch");
    const Eigen::VectorXd s = theta.colwise().sum().transpose();
    Eigen::MatrixXd g(theta.cols(), theta.cols());
    g.noalias() = theta.transpose() * theta;
    g.noalias() -= rank_one_ * s * s.transpose();
    g *= 0.5;
    return g;
}

Eigen::MatrixXd HessianBound::apply_inverse_columns(const Eigen::Ref<const Eigen::MatrixXd>& m) const {
    if (m.rows() != dim_) throw std::invalid_argument("HessianBound::apply_inverse_columns: row mismatch");
    const Eigen::RowVectorXd sums = m.colwise().sum();
    return 2.0 * (m.rowwise() + sums);
}

Eigen::MatrixXd HessianBound::dense() const {
    return 0.5 * (Eigen::MatrixXd::Identity(dim_, dim_).array() - rank_one_).matrix();
}

Eigen::MatrixXd HessianBound::dense_inverse() const {
    return 2.0 * (Eigen::MatrixXd::Identity(dim_, dim_).array() + 1.0).matrix();
}

BoundCoefficients bound_coefficients(const Eigen::Ref<const Eigen::VectorXd>& phi) {
    require_finite(phi, "bound_coefficients");
    const HessianBound a(phi.size());
    const double top = phi.maxCoeff();
    Eigen::VectorXd p = (phi.array() - top).exp().matrix();
    const double z = p.sum();
    p /= z;

    BoundCoefficients out;
    out.phi = phi;
    out.b = a.apply(phi) - p;
    out.c = 0.5 * a.quadratic_form(phi) - p.dot(phi) + top + std::log(z);
    return out;
}

double lse_quadratic_upper(const Eigen::Ref<const Eigen::VectorXd>& eta, const BoundCoefficients& coeffs) {
    if (eta.size() != coeffs.dim()) {
        throw std::invalid_argument("lse_quadratic_upper: length mismatch");
    }
    const HessianBound a(eta.size());
    return 0.5 * a.quadratic_form(eta) - coeffs.b.dot(eta) + coeffs.c;
}

double lse_quadratic_upper(const Eigen::Ref<const Eigen::VectorXd>& eta,
                           const Eigen::Ref<const Eigen::VectorXd>& phi) {
    if (eta.size() != phi.size()) {
        throw std::invalid_argument("lse_quadratic_upper: length mismatch");
    }
    return lse_quadratic_upper(eta, bound_coefficients(phi));
}

}  // namespace fuselvm
