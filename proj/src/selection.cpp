#include "fuselvm/selection.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fuselvm {

double degrees_of_freedom(const std::vector<Eigen::Index>& dims, Eigen::Index latent_dim) {
    const auto dz = static_cast<double>(latent_dim);
    double loadings = 0.0;
    for (auto d : dims) loadings += static_cast<double>(d) * dz;
    return loadings + dz + dz * (dz + 1.0) / 2.0;
}

double bic_score(const FittedModel& model, const CountDataset& data) {
    if (model.data_fingerprint != dataset_fingerprint(data)) {
        throw std::invalid_argument("bic_score: model was not fitted to this dataset");
    }
    if (model.posterior.samples.size() != data.num_conditions()) {
        throw std::invalid_argument("bic_score: model carries no posteriors for this dataset");
    }
    const double dof = degrees_of_freedom(data.dims(), model.params.latent_dim);
    double score = 0.0;
    for (std::size_t k = 0; k < data.num_conditions(); ++k) {
        const ConditionData view = ConditionData::from_dataset(data, k);
        const double elbo_k = condition_elbo(model.params.conditions[k], model.posterior.samples[k], view,
                                             model.options.jitter);
        score += elbo_k - 0.5 * dof * std::log(static_cast<double>(data.replicates(k)));
    }
    return score;
}

const RankFit& RankSweepResult::selected_fit() const {
    for (const auto& f : fits) {
        if (f.ok && f.rank == selected) return f;
    }
    throw std::logic_error("selected rank missing from sweep");
}

Eigen::Index pick_rank(const std::vector<RankFit>& fits) {
    const RankFit* best = nullptr;
    for (const auto& f : fits) {
        if (!f.ok) continue;
        if (best == nullptr) {
            best = &f;
            continue;
        }
        const double gap = f.penalized_score - best->penalized_score;
        if (gap > 1e-12 || (std::fabs(gap) <= 1e-12 && f.rank < best->rank)) best = &f;
    }
    if (best == nullptr) throw std::runtime_error("every rank in the sweep failed to fit");
    return best->rank;
}

RankSweepResult select_rank(const CountDataset& data, const std::vector<Eigen::Index>& ranks, const FitOptions& opts,
                            bool keep_models) {
    if (ranks.empty()) throw std::invalid_argument("select_rank: no candidate ranks");
    for (auto r : ranks) {
        if (r < 1) throw std::invalid_argument("select_rank: ranks must be >= 1");
    }
    RankSweepResult result;
    for (auto r : ranks) {
        RankFit rf;
        rf.rank = r;
        rf.dof = degrees_of_freedom(data.dims(), r);
        FitOptions o = opts;
        o.seed = opts.seed + static_cast<std::uint64_t>(r);
        rf.seed = o.seed;
        try {
            FittedModel m = fit(data, r, o);
            rf.ok = true;
            rf.converged = m.report.converged;
            rf.iterations = m.report.iterations;
            rf.wall_time = m.report.wall_time;
            rf.elbo = m.report.elbo_trace.back();
            rf.penalized_score = 0.0;
            for (std::size_t k = 0; k < data.num_conditions(); ++k) {
                rf.penalized_score += m.report.condition_elbo[k] -
                                      0.5 * rf.dof * std::log(static_cast<double>(data.replicates(k)));
            }
            if (keep_models) rf.model = std::move(m);
        } catch (const std::exception& e) {
            rf.ok = false;
            rf.error = e.what();
        }
        result.fits.push_back(std::move(rf));
    }
    result.selected = pick_rank(result.fits);
    return result;
}

std::vector<Eigen::Index> parse_rank_spec(const std::string& spec) {
    std::vector<Eigen::Index> out;
    const auto to_int = [&](const std::string& s) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return static_cast<Eigen::Index>(v);
        } catch (const std::exception&) {
            throw std::invalid_argument("malformed rank specification '" + spec + "'");
        }
    };
    if (spec.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(spec);
        std::string part;
        while (std::getline(ss, part, ':')) parts.push_back(part);
        if (parts.size() < 2 || parts.size() > 3) throw std::invalid_argument("malformed rank specification '" + spec + "'");
        const auto lo = to_int(parts[0]);
        const auto hi = to_int(parts[1]);
        const auto step = parts.size() == 3 ? to_int(parts[2]) : 1;
        if (step < 1 || lo > hi) throw std::invalid_argument("malformed rank specification '" + spec + "'");
        for (auto r = lo; r <= hi; r += step) out.push_back(r);
    } else {
        std::stringstream ss(spec);
        std::string part;
        while (std::getline(ss, part, ',')) out.push_back(to_int(part));
    }
    if (out.empty()) throw std::invalid_argument("empty rank specification");
    for (auto r : out) {
        if (r < 1) throw std::invalid_argument("ranks must be >= 1");
    }
    return out;
}

}  // namespace fuselvm
