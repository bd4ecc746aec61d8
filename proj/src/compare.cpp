#include "fuselvm/compare.hpp"

#include "fuselvm/predictive.hpp"

#include <stdexcept>

namespace fuselvm {

Comparison compare_methods(const SimResult& sim, std::size_t k, const std::vector<CovMethod>& methods,
                           Eigen::Index rank, const FitOptions& opts, double precision_jitter) {
    if (k >= sim.truth.covariance.size()) throw std::out_of_range("unknown condition index " + std::to_string(k));
    if (!(precision_jitter > 0.0)) throw std::invalid_argument("precision jitter must be > 0");
    const Eigen::MatrixXd& truth = sim.truth.covariance[k];
    const Eigen::MatrixXd truth_precision = stabilized_inverse(truth, precision_jitter);

    Comparison out;
    std::optional<Standardized> standardized;
    for (auto method : methods) {
        CovEstimate est;
        if (method == CovMethod::proposed) {
            if (!out.model) {
                CountDataset single;
                single.condition_labels = {sim.dataset.condition_labels.at(k)};
                single.species_labels = sim.dataset.species_labels;
                single.feature_labels = sim.dataset.feature_labels;
                single.counts = {sim.dataset.counts.at(k)};
                out.model = fit(single, rank, opts);
            }
            est.method = CovMethod::proposed;
            est.covariance = latent_covariance(out.model->params, 0);
        } else {
            if (!standardized) standardized = standardize(stacked_counts(sim.dataset, k));
            est = method == CovMethod::empirical ? empirical_cov(standardized->data) : ledoit_wolf(standardized->data);
        }
        attach_precision(est, precision_jitter);
        MethodScore s;
        s.method = method;
        s.covariance_rmse = rmse_matrix(est.covariance, truth);
        s.precision_rmse = rmse_matrix(*est.precision, truth_precision);
        s.shrinkage = est.shrinkage;
        out.scores.push_back(s);
    }
    return out;
}

}  // namespace fuselvm
