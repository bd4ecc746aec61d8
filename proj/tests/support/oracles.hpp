#pragma once

#include <Eigen/Dense>

#include <vector>

namespace fuselvm::testing {

/// 0.5 * (I - 11^T / (D + 1)) assembled entry by entry.
Eigen::MatrixXd dense_bound_matrix(Eigen::Index d);

/// Direct log-sum-exp without max subtraction, for moderate inputs.
double naive_lse(const Eigen::VectorXd& eta);

/// log(N! / prod x_d!)
double log_multinomial_coefficient(const Eigen::VectorXd& x);

/// Moments of p(z | x) for a scalar latent z ~ N(mu, var) and
/// x_l ~ Mult(N_l, softmax(theta_l * z)), by trapezoidal quadrature on a
/// fine grid spanning the bulk of the posterior.
struct QuadratureMoments {
    double mean = 0.0;
    double variance = 0.0;
    double log_evidence = 0.0;  // includes multinomial coefficients
};

QuadratureMoments quadrature_posterior(double mu, double var, const std::vector<Eigen::VectorXd>& theta,
                                       const std::vector<Eigen::VectorXd>& counts, int points = 20001);

/// Posterior (m, S) for fixed expansion points by assembling the full
/// normal equations with dense A matrices and solving with full-pivot LU.
struct DenseGaussian {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

DenseGaussian dense_normal_equations(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                                     const std::vector<Eigen::MatrixXd>& theta,
                                     const std::vector<Eigen::VectorXd>& counts,
                                     const std::vector<Eigen::VectorXd>& expansion);

}  // namespace fuselvm::testing
