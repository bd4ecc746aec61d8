#pragma once

#include "fuselvm/inference.hpp"

#include <span>
#include <vector>

namespace fuselvm::kernels {

// Batched per-replicate work of one EM iteration. Each replicate is
// independent given read-only parameters, so the OpenMP variants split the
// replicate loop across threads. Every per-replicate result is written to its
// own slot and reductions happen serially in replicate order afterwards,
// which keeps the two backends bitwise identical.

void estep_serial(const ConditionParams& params, const ConditionCache& cache, const ConditionData& data,
                  std::vector<SamplePosterior>& posteriors, const FitOptions& opts);

void estep_openmp(const ConditionParams& params, const ConditionCache& cache, const ConditionData& data,
                  std::vector<SamplePosterior>& posteriors, const FitOptions& opts);

inline void estep(const ConditionParams& params, const ConditionCache& cache, const ConditionData& data,
                  std::vector<SamplePosterior>& posteriors, const FitOptions& opts) {
    if (opts.backend == Backend::openmp) {
        estep_openmp(params, cache, data, posteriors, opts);
    } else {
        estep_serial(params, cache, data, posteriors, opts);
    }
}

/// Per-replicate ELBO contributions.
std::vector<double> elbo_terms_serial(const ConditionParams& params, const ConditionCache& cache,
                                      const ConditionData& data, std::span<const SamplePosterior> posteriors);

std::vector<double> elbo_terms_openmp(const ConditionParams& params, const ConditionCache& cache,
                                      const ConditionData& data, std::span<const SamplePosterior> posteriors,
                                      int threads);

/// Thread count from opts.threads, then FUSELVM_THREADS, then the OpenMP default.
int resolve_threads(const FitOptions& opts);

/// Sum in a fixed pairwise order.
double pairwise_sum(std::span<const double> values);

}  // namespace fuselvm::kernels
