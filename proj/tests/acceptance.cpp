// Acceptance run: one PASS/FAIL line per criterion with the tolerances pinned
// below. Always exits 0 so the report itself is the artifact; the unit tests
// are the gate.

#include "fuselvm/baselines.hpp"
#include "fuselvm/bound.hpp"
#include "fuselvm/compare.hpp"
#include "fuselvm/inference.hpp"
#include "fuselvm/kernels.hpp"
#include "fuselvm/linalg.hpp"
#include "fuselvm/predictive.hpp"
#include "fuselvm/selection.hpp"
#include "fuselvm/simulate.hpp"

#include "checks.hpp"
#include "clustering.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

using namespace fuselvm;
using namespace fuselvm::testing;

namespace {

// Criterion 1
constexpr int kC1Seeds = 10;
constexpr double kC1MaxProposedRmse = 0.15;
constexpr double kC1BudgetSeconds = 600.0;
constexpr double kPrecisionJitter = 0.1;
// Criterion 2
constexpr int kC2Seeds = 10;
constexpr Eigen::Index kC2MinRank = 2;
constexpr Eigen::Index kC2MaxRank = 12;
constexpr double kC2RankSlack = 1.0;
constexpr double kC2OverfitGuard = 0.05;
constexpr double kC2BudgetSeconds = 900.0;
// Criterion 3
constexpr int kC3Seeds = 20;
constexpr Eigen::Index kC3Dim = 128;
constexpr double kC3MinRelativeGain = 0.20;
// Criterion 4
constexpr int kC4Seeds = 5;
constexpr double kC4MinMedianAri = 0.8;
// Criterion 5
constexpr int kC5Trials = 5;
constexpr double kC5MaxGrowth = 1.6;
// Criterion 6
constexpr int kC6Pairs = 10000;
constexpr double kC6Slack = -1e-10;
constexpr double kC6Tightness = 1e-10;
// Criterion 7
constexpr double kC7RelativeDrop = 1e-8;
// Criterion 8
constexpr int kC8Instances = 50;
constexpr double kC8MomentTolerance = 0.10;
constexpr double kC8SquareTolerance = 1e-8;
// Criterion 9
constexpr int kC9Instances = 10;
constexpr double kC9MaxGradient = 1e-4;
// Criterion 10
constexpr int kC10Trials = 20;
constexpr double kC10Tolerance = 1e-8;
// Criterion 11
constexpr double kC11CorrelationSlack = 1e-10;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void report(int id, const char* name, bool pass, const std::string& detail) {
    std::printf("%s %2d %-24s %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
    std::fflush(stdout);
}

void note(const std::string& text) {
    std::printf("     # %s\n", text.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Monotonicity and positive-definiteness audit over every fit in suites 1 to 4.
struct Audit {
    int fits = 0;
    int nonmonotone_fits = 0;
    double worst_drop = 0.0;  // largest relative ELBO decrease seen
    long matrices = 0;
    long non_spd = 0;
    double min_eigen = std::numeric_limits<double>::infinity();
    long correlations = 0;
    long bad_correlations = 0;

    void spd(const Eigen::MatrixXd& m) {
        const double e = min_eigenvalue(m);
        ++matrices;
        min_eigen = std::min(min_eigen, e);
        if (!(e > 0.0)) ++non_spd;
    }

    void correlation(const Eigen::MatrixXd& c) {
        ++correlations;
        const bool unit = (c.diagonal().array() - 1.0).abs().maxCoeff() <= kC11CorrelationSlack;
        const bool bounded = c.cwiseAbs().maxCoeff() <= 1.0 + kC11CorrelationSlack;
        if (!unit || !bounded) ++bad_correlations;
    }

    void fit(const FittedModel& m) {
        ++fits;
        const auto& tr = m.report.elbo_trace;
        bool ok = true;
        for (std::size_t t = 1; t < tr.size(); ++t) {
            const double drop = (tr[t - 1] - tr[t]) / std::fabs(tr[t - 1]);
            worst_drop = std::max(worst_drop, drop);
            if (drop > kC7RelativeDrop) ok = false;
        }
        if (!ok) ++nonmonotone_fits;
        for (std::size_t k = 0; k < m.params.conditions.size(); ++k) {
            spd(m.params.conditions[k].sigma);
            if (k < m.posterior.samples.size()) {
                for (const auto& q : m.posterior.samples[k]) spd(q.cov);
            }
            for (std::size_t l = 0; l < m.params.conditions[k].theta.size(); ++l) {
                const Eigen::MatrixXd c = intra_covariance(m.params, k, l).covariance;
                spd(c);
                correlation(to_correlation(c));
            }
            const Eigen::MatrixXd c = inter_covariance(m.params, k).covariance;
            spd(c);
            correlation(to_correlation(c));
        }
    }
};

// Covariance restricted to the identifiable subspace: each species block is
// projected onto zero-sum vectors, which removes the softmax shift direction.
Eigen::MatrixXd shift_free(const Eigen::MatrixXd& c, const std::vector<Eigen::Index>& dims) {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(c.rows(), c.cols());
    Eigen::Index r = 0;
    for (auto d : dims) {
        p.block(r, r, d, d) = Eigen::MatrixXd::Identity(d, d) - Eigen::MatrixXd::Constant(d, d, 1.0 / static_cast<double>(d));
        r += d;
    }
    return p * c * p;
}

void criterion1(Audit& audit) {
    const auto t0 = Clock::now();
    const std::vector<CovMethod> methods{CovMethod::empirical, CovMethod::ledoit_wolf, CovMethod::proposed};
    std::vector<double> emp, lw, prop, prop_shift_free;
    for (int s = 0; s < kC1Seeds; ++s) {
        SimConfig cfg = SimConfig::community_defaults();
        cfg.seed = static_cast<std::uint64_t>(s);
        const SimResult sim = simulate_community(cfg);
        FitOptions o;
        o.seed = cfg.seed;
        const Comparison c = compare_methods(sim, 0, methods, cfg.latent_dim, o, kPrecisionJitter);
        emp.push_back(c.scores[0].covariance_rmse);
        lw.push_back(c.scores[1].covariance_rmse);
        prop.push_back(c.scores[2].covariance_rmse);
        const auto dims = sim.dataset.dims();
        prop_shift_free.push_back(rmse_matrix(shift_free(latent_covariance(c.model->params, 0), dims),
                                              shift_free(sim.truth.covariance[0], dims)));
        audit.fit(*c.model);
    }
    const double elapsed = seconds_since(t0);
    const double mp = mean_of(prop), me = mean_of(emp), ml = mean_of(lw);
    const bool pass = mp <= kC1MaxProposedRmse && mp < me && mp < ml && ml <= me && elapsed < kC1BudgetSeconds;
    report(1, "covariance-comparison", pass,
           fmt("mean RMSE proposed=%.4f (<= %.2f) empirical=%.4f ledoit_wolf=%.4f; proposed<both=%s lw<=emp=%s; "
               "%.1fs (< %.0fs)",
               mp, kC1MaxProposedRmse, me, ml, (mp < me && mp < ml) ? "yes" : "no", ml <= me ? "yes" : "no", elapsed,
               kC1BudgetSeconds));
    int lw_worse = 0;
    for (int s = 0; s < kC1Seeds; ++s) lw_worse += lw[static_cast<std::size_t>(s)] > emp[static_cast<std::size_t>(s)];
    note(fmt("ledoit_wolf above empirical on %d of %d seeds", lw_worse, kC1Seeds));
    note(fmt("proposed RMSE with the softmax shift direction projected out of both matrices: %.4f",
             mean_of(prop_shift_free)));
}

void criterion2(Audit& audit) {
    const auto t0 = Clock::now();
    std::vector<Eigen::Index> ranks;
    for (auto r = kC2MinRank; r <= kC2MaxRank; ++r) ranks.push_back(r);
    bool ranks_ok = true;
    double worst_guard = -std::numeric_limits<double>::infinity();
    std::string detail;
    for (Eigen::Index truth : {4, 8, 12}) {
        std::vector<double> selected;
        for (int s = 0; s < kC2Seeds; ++s) {
            SimConfig cfg = SimConfig::community_defaults();
            cfg.latent_dim = truth;
            cfg.seed = static_cast<std::uint64_t>(100 * truth + s);
            const SimResult sim = simulate_community(cfg);
            FitOptions o;
            o.seed = static_cast<std::uint64_t>(1000 * s);
            const RankSweepResult r = select_rank(sim.dataset, ranks, o, true);
            selected.push_back(static_cast<double>(r.selected));
            const Eigen::MatrixXd& tc = sim.truth.covariance[0];
            const double rmse_selected = rmse_matrix(latent_covariance(r.selected_fit().model->params, 0), tc);
            for (const auto& f : r.fits) {
                if (!f.ok) continue;
                audit.fit(*f.model);
                if (f.rank == kC2MaxRank) {
                    worst_guard = std::max(worst_guard, rmse_selected - rmse_matrix(latent_covariance(f.model->params, 0), tc));
                }
            }
        }
        const double med = median_of(selected);
        ranks_ok = ranks_ok && std::fabs(med - static_cast<double>(truth)) <= kC2RankSlack;
        std::string picks;
        for (double v : selected) picks += (picks.empty() ? "" : ",") + std::to_string(static_cast<int>(v));
        detail += fmt("true %d: median %.1f [%s]; ", static_cast<int>(truth), med, picks.c_str());
    }
    const double elapsed = seconds_since(t0);
    const bool pass = ranks_ok && worst_guard <= kC2OverfitGuard && elapsed < kC2BudgetSeconds;
    report(2, "rank-recovery", pass,
           fmt("%smax-rank RMSE advantage over selected <= %.4f (<= %.2f); %.1fs (< %.0fs)", detail.c_str(),
               worst_guard, kC2OverfitGuard, elapsed, kC2BudgetSeconds));
}

void criterion3(Audit& audit) {
    const std::vector<double> rates{10.0, 100.0, 1000.0};
    std::vector<std::vector<double>> rmse(rates.size());
    for (int s = 0; s < kC3Seeds; ++s) {
        SimConfig cfg = SimConfig::sweep_defaults();
        cfg.seed = static_cast<std::uint64_t>(s);
        const auto grid = simulate_sweep(cfg, rates, {kC3Dim});
        for (std::size_t i = 0; i < grid.size(); ++i) {
            FitOptions o;
            o.seed = cfg.seed;
            const FittedModel m = fit(grid[i].dataset, cfg.latent_dim, o);
            audit.fit(m);
            rmse[i].push_back(rmse_matrix(latent_covariance(m.params, 0), grid[i].truth.covariance[0]));
        }
    }
    const double a = mean_of(rmse[0]), b = mean_of(rmse[1]), c = mean_of(rmse[2]);
    const double gain = (a - c) / a;
    const bool pass = a >= b && b >= c && gain >= kC3MinRelativeGain;
    report(3, "counts-sweep", pass,
           fmt("mean RMSE rate10=%.4f rate100=%.4f rate1000=%.4f; non-increasing=%s; gain %.1f%% (>= %.0f%%)", a, b, c,
               (a >= b && b >= c) ? "yes" : "no", 100.0 * gain, 100.0 * kC3MinRelativeGain));
}

void criterion4(Audit& audit) {
    std::vector<double> ari;
    for (int s = 0; s < kC4Seeds; ++s) {
        SimConfig cfg = SimConfig::classes_defaults();
        cfg.seed = static_cast<std::uint64_t>(s);
        const SimResult sim = simulate_classes(cfg);
        FitOptions o;
        o.seed = cfg.seed;
        const FittedModel m = fit(pool_conditions(sim.dataset), cfg.latent_dim, o);
        audit.fit(m);
        const auto labels = kmeans(get_embeddings(m, 0), 3, cfg.seed);
        ari.push_back(adjusted_rand_index(labels, sim.truth.class_labels));
    }
    std::string values;
    for (double v : ari) values += fmt("%s%.3f", values.empty() ? "" : ",", v);
    const double med = median_of(ari);
    report(4, "embedding-structure", med >= kC4MinMedianAri,
           fmt("median ARI %.3f (>= %.2f) over [%s], classes pooled into one condition", med, kC4MinMedianAri,
               values.c_str()));
}

struct EmState {
    ConditionParams params;
    std::vector<SamplePosterior> posts;
    ConditionData data;
};

void em_iteration(EmState& st, const FitOptions& o) {
    const ConditionCache cache = ConditionCache::build(st.params, o.jitter);
    kernels::estep(st.params, cache, st.data, st.posts, o);
    st.params = m_step(st.posts, st.data, o.jitter);
    const ConditionCache after = ConditionCache::build(st.params, o.jitter);
    const auto terms = kernels::elbo_terms_serial(st.params, after, st.data, st.posts);
    volatile double sink = kernels::pairwise_sum(terms);
    (void)sink;
}

double iteration_time(Eigen::Index replicates, Eigen::Index dim) {
    SimConfig cfg = SimConfig::community_defaults();
    cfg.dims = {dim};
    cfg.replicates = replicates;
    cfg.seed = 5;
    const SimResult sim = simulate_community(cfg);
    FitOptions o;
    const ModelParams mp = initial_params(sim.dataset, cfg.latent_dim, o);
    EmState warm{mp.conditions[0], initial_posteriors(mp, sim.dataset).samples[0],
                 ConditionData::from_dataset(sim.dataset, 0)};
    for (int t = 0; t < 5; ++t) em_iteration(warm, o);
    std::vector<double> times;
    for (int t = 0; t < kC5Trials; ++t) {
        EmState st = warm;
        const auto t0 = Clock::now();
        em_iteration(st, o);
        times.push_back(seconds_since(t0));
    }
    return median_of(times);
}

void criterion5() {
    const double base = iteration_time(200, 64);
    const double more_samples = iteration_time(400, 64);
    const double more_features = iteration_time(200, 128);
    const double gi = more_samples / base, gd = more_features / base;
    report(5, "iteration-scaling", gi <= kC5MaxGrowth && gd <= kC5MaxGrowth,
           fmt("one EM iteration: base %.2fms; I 200->400 x%.2f; d 64->128 x%.2f (each <= %.1f), d_z=5, median of %d",
               1e3 * base, gi, gd, kC5MaxGrowth, kC5Trials));
}

void criterion6() {
    std::mt19937_64 gen(606);
    double worst_slack = std::numeric_limits<double>::infinity();
    double worst_tight = 0.0;
    const std::vector<Eigen::Index> dims{2, 5, 20, 200};
    for (int i = 0; i < kC6Pairs; ++i) {
        const Eigen::Index d = dims[static_cast<std::size_t>(i) % dims.size()];
        const double scale = 0.5 + 2.5 * static_cast<double>(i % 7) / 6.0;
        const Eigen::VectorXd eta = random_normal(gen, d, scale);
        const Eigen::VectorXd phi = random_normal(gen, d, scale);
        worst_slack = std::min(worst_slack, lse_quadratic_upper(eta, phi) - lse(eta));
        worst_tight = std::max(worst_tight, std::fabs(lse_quadratic_upper(phi, phi) - lse(phi)));
    }
    report(6, "bound-validity", worst_slack >= kC6Slack && worst_tight <= kC6Tightness,
           fmt("%d pairs over D in {2,5,20,200}: min slack %.3e (>= %.0e), max gap at eta=phi %.3e (<= %.0e)", kC6Pairs,
               worst_slack, kC6Slack, worst_tight, kC6Tightness));
}

void criterion7(const Audit& audit) {
    report(7, "elbo-monotone", audit.nonmonotone_fits == 0,
           fmt("%d fits from criteria 1-4, %d with a relative drop > %.0e; largest relative drop %.3e", audit.fits,
               audit.nonmonotone_fits, kC7RelativeDrop, audit.worst_drop));
}

void criterion8() {
    std::mt19937_64 gen(808);
    int failures = 0;
    double worst_mean = 0.0, worst_var = 0.0;
    for (int t = 0; t < kC8Instances; ++t) {
        const QuadratureComparison c = compare_with_quadrature(gen, 1.0, false);
        worst_mean = std::max(worst_mean, c.mean_error);
        worst_var = std::max(worst_var, c.variance_error);
        if (c.mean_error > kC8MomentTolerance || c.variance_error > kC8MomentTolerance) ++failures;
    }
    double worst_square = 0.0;
    for (int t = 0; t < kC8Instances; ++t) worst_square = std::max(worst_square, completing_the_square_error(gen, t));
    report(8, "posterior-oracle", failures == 0 && worst_square <= kC8SquareTolerance,
           fmt("quadrature: %d of %d instances outside %.0f%% (worst mean %.3f, variance %.3f); completing the square "
               "max error %.2e (<= %.0e)",
               failures, kC8Instances, 100.0 * kC8MomentTolerance, worst_mean, worst_var, worst_square,
               kC8SquareTolerance));
    std::mt19937_64 weak(809);
    int weak_failures = 0;
    for (int t = 0; t < kC8Instances; ++t) {
        const QuadratureComparison c = compare_with_quadrature(weak, 0.2, true);
        if (c.mean_error > kC8MomentTolerance || c.variance_error > kC8MomentTolerance) ++weak_failures;
    }
    note(fmt("weak-likelihood instances (loading sd 0.2, zero-sum loadings): %d of %d outside %.0f%%", weak_failures,
             kC8Instances, 100.0 * kC8MomentTolerance));
}

void criterion9() {
    std::mt19937_64 gen(909);
    double worst = 0.0;
    for (int t = 0; t < kC9Instances; ++t) worst = std::max(worst, mstep_max_theta_gradient(gen));
    report(9, "mstep-stationarity", worst <= kC9MaxGradient,
           fmt("max |dELBO/dtheta| after the update %.3e over %d instances (<= %.0e)", worst, kC9Instances,
               kC9MaxGradient));
}

void criterion10() {
    std::mt19937_64 gen(1010);
    double worst = 0.0;
    for (int t = 0; t < kC10Trials; ++t) worst = std::max(worst, rotation_change(gen, t));
    report(10, "rotation-invariance", worst <= kC10Tolerance,
           fmt("max relative ELBO change %.3e over %d trials (<= %.0e)", worst, kC10Trials, kC10Tolerance));
}

void criterion11(const Audit& audit) {
    report(11, "spd-suite", audit.non_spd == 0 && audit.bad_correlations == 0,
           fmt("%ld matrices (sigma, posterior covariances, intra and inter covariances), %ld not SPD, min eigenvalue "
               "%.3e; %ld correlation matrices, %ld malformed",
               audit.matrices, audit.non_spd, audit.min_eigen, audit.correlations, audit.bad_correlations));
}

}  // namespace

int main() {
    const auto t0 = Clock::now();
    Audit audit;
    criterion1(audit);
    criterion2(audit);
    criterion3(audit);
    criterion4(audit);
    criterion5();
    criterion6();
    criterion7(audit);
    criterion8();
    criterion9();
    criterion10();
    criterion11(audit);
    std::printf("acceptance run finished in %.1fs\n", seconds_since(t0));
    return 0;
}
