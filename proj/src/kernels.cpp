#include "fuselvm/kernels.hpp"

#include <omp.h>

#include <cstdlib>
#include <exception>
#include <string>

namespace fuselvm::kernels {

int resolve_threads(const FitOptions& opts) {
    if (opts.threads > 0) return opts.threads;
    if (const char* env = std::getenv("FUSELVM_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (const std::exception&) {
        }
    }
    return omp_get_max_threads();
}

double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 8) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

void estep_serial(const ConditionParams& params, const ConditionCache& cache, const ConditionData& data,
                  std::vector<SamplePosterior>& posteriors, const FitOptions& opts) {
    const auto n = static_cast<std::size_t>(data.replicates());
    for (std::size_t i = 0; i < n; ++i) {
        posteriors[i] = e_step_sample(params, cache, data.counts[i], data.totals[i], posteriors[i], opts);
    }
}

void estep_openmp(const ConditionParams& params, const ConditionCache& cache, const ConditionData& data,
                  std::vector<SamplePosterior>& posteriors, const FitOptions& opts) {
    const auto n = static_cast<std::int64_t>(data.replicates());
    const int threads = resolve_threads(opts);
    std::exception_ptr failure;
#pragma omp parallel for schedule(static) num_threads(threads)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            const auto s = static_cast<std::size_t>(i);
            posteriors[s] = e_step_sample(params, cache, data.counts[s], data.totals[s], posteriors[s], opts);
        } catch (...) {
#pragma omp critical(fuselvm_estep_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
}

std::vector<double> elbo_terms_serial(const ConditionParams& params, const ConditionCache& cache,
                                      const ConditionData& data, std::span<const SamplePosterior> posteriors) {
    std::vector<double> terms(posteriors.size());
    for (std::size_t i = 0; i < posteriors.size(); ++i) {
        terms[i] = sample_elbo(params, cache, data.counts[i], data.totals[i], posteriors[i]);
    }
    return terms;
}

std::vector<double> elbo_terms_openmp(const ConditionParams& params, const ConditionCache& cache,
                                      const ConditionData& data, std::span<const SamplePosterior> posteriors,
                                      int threads) {
    std::vector<double> terms(posteriors.size());
    const auto n = static_cast<std::int64_t>(posteriors.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(static) num_threads(threads)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            const auto s = static_cast<std::size_t>(i);
            terms[s] = sample_elbo(params, cache, data.counts[s], data.totals[s], posteriors[s]);
        } catch (...) {
#pragma omp critical(fuselvm_elbo_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return terms;
}

}  // namespace fuselvm::kernels
