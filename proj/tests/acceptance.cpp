// Acceptance suite: one PASS/FAIL line per criterion. Runs the desk-scale
// experiments, so expect tens of minutes on one core.

#include "infobench/harness.hpp"
#include "infobench/info.hpp"
#include "infobench/regression.hpp"
#include "oracle.hpp"

#include <fmt/format.h>

#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

using namespace infobench;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and runtime limits [s].
constexpr double kOracleTol = 1e-12;
constexpr double kTeTol = 0.01;
constexpr double kNullPassRate = 0.90;
constexpr double kUnderestimationTol = 0.10;
constexpr double kMassTol = 1e-9;
constexpr double kGradTol = 1e-5;
constexpr double kNormTol = 1e-12;
constexpr double kLimit1 = 1.0;
constexpr double kLimit2 = 60.0;
constexpr double kLimit3 = 30 * 60.0;
constexpr double kLimit5 = 20 * 60.0;
constexpr double kLimit6 = 15 * 60.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

const fs::path kOut = fs::temp_directory_path() / "infobench_acceptance";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome estimator_oracle() {
    std::mt19937_64 rng(101);
    double worst = 0.0;
    int tables = 0;
    for (int states = 2; states <= 4; ++states) {
        for (int trial = 0; trial < 100; ++trial, ++tables) {
            auto cols = oracle::enumerated_sample(rng, 3, states, 5);
            const auto &x = cols[0], &y = cols[1], &z = cols[2];
            worst = std::max({worst, std::abs(info::entropy(x, states) - oracle::entropy(x)),
                              std::abs(info::mutual_information(x, states, y, states) - oracle::mutual_information(x, y)),
                              std::abs(info::conditional_mi(x, states, y, states, z, states) -
                                       oracle::conditional_mi(x, y, z)),
                              std::abs(info::transfer_entropy(x, states, y, states, 1) -
                                       oracle::transfer_entropy(x, y, 1))});
        }
    }
    return {worst <= kOracleTol, fmt::format("{} tables, max |error| {:.2e}", tables, worst)};
}

Outcome analytic_te() {
    std::mt19937_64 rng(202);
    std::bernoulli_distribution coin(0.5);
    const std::size_t n = 50000;
    std::vector<int> x(n), y(n, 0);
    for (auto& v : x) v = coin(rng);
    for (std::size_t t = 0; t + 1 < n; ++t) y[t + 1] = x[t];
    const double te = info::transfer_entropy(x, 2, y, 2, 1);
    const bool copy_ok = std::abs(te - std::log(2.0)) <= kTeTol;

    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto spec = info::DiscretizationSpec::triple();
    int below = 0;
    const int trials = 50;
    for (int k = 0; k < trials; ++k) {
        Vector s = Vector::NullaryExpr(2000, [&]() { return u(rng); });
        Vector t = Vector::NullaryExpr(2000, [&]() { return u(rng); });
        const auto null = info::te_shuffle_null(s, t, 1, spec, 100, derive_seed(303, static_cast<std::uint64_t>(k)));
        below += info::transfer_entropy(s, t, 1, spec).value < info::percentile(null, 95.0);
    }
    const double rate = static_cast<double>(below) / trials;
    return {copy_ok && rate >= kNullPassRate,
            fmt::format("TE(copy) = {:.5f} vs ln2 = {:.5f}; independent below null in {}/{}", te, std::log(2.0), below,
                        trials)};
}

Outcome dpi_bound(const harness::ExperimentBResult& b) {
    // bound direction at every point; relative underestimation averaged over the sweep
    bool bound = true;
    double mean_rel = 0.0;
    int above = 0;
    std::string d;
    for (const auto& p : b.sweep) {
        const double rel = p.relative_underestimation();
        bound = bound && p.mean_est <= p.mean_true;
        mean_rel += rel / static_cast<double>(b.sweep.size());
        above += rel > kUnderestimationTol;
        d += fmt::format("[s_u={} eps={:.4f} eps_hat={:.4f} rel={:.3f}] ", p.sigma_u, p.mean_true, p.mean_est, rel);
    }
    d += fmt::format("mean rel {:.3f}; {} of {} points above {}", mean_rel, above, b.sweep.size(), kUnderestimationTol);
    return {bound && mean_rel <= kUnderestimationTol, d};
}

Outcome convergence(const harness::ExperimentBResult& b) {
    const auto& last = b.convergence.points.back();
    const bool ok = last.train_rows >= 5000 && last.relative_gap < regression::kConvergenceTolerance;
    return {ok, fmt::format("fraction {} with {} rows: I_in {:.4f}, I_out {:.4f}, gap {:.4f}", last.fraction,
                            last.train_rows, last.i_in_sample, last.i_out_sample, last.relative_gap)};
}

Outcome inconsistency(const harness::ExperimentAResult& a, const harness::ExperimentConfig& cfg) {
    std::string d;
    for (const auto& c : a.table.cells) {
        d += fmt::format("[{},{}: P(abc)={:.3f}] ", c.sigma_u, c.sigma_y, c.posterior.mean[0]);
    }
    const double norm = a.table.normalization_error();
    const bool ok = a.table.ranking_flip() && norm <= kNormTol && a.table.cells.size() == 9 &&
                    cfg.integer("a.bootstrap") == 10;
    return {ok, d + fmt::format("normalization error {:.1e}", norm)};
}

Outcome pattern_c(const harness::ExperimentCResult& c) {
    const double id_e = c.mse_of("evaluation", "identified"), as_e = c.mse_of("evaluation", "assimilated");
    const double as_c = c.mse_of("calibration", "assimilated"), pr_c = c.mse_of("calibration", "prior");
    const int rank = c.edge_rank("u^p", "x_s");
    const bool ok = id_e < as_e && as_c < pr_c && rank >= 1 && rank <= 2;
    return {ok, fmt::format("eval mse identified {:.4f} < assimilated {:.4f}; cal mse assimilated {:.4f} < prior {:.4f}; "
                            "u^p->x_s rank {}",
                            id_e, as_e, as_c, pr_c, rank)};
}

Outcome conservation() {
    std::mt19937_64 rng(707);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::exponential_distribution<double> rain(1.0 / 9.0);
    double worst = 0.0;
    const int steps = 1000000;
    for (int i = 0; i < steps; ++i) {
        const double p = u(rng) < 0.3 ? rain(rng) : 0.0;
        if (i % 2 == 0) {
            dynamics::HymodParams h;
            h.c_max = 1.0 + 999.0 * u(rng);
            h.b_exp = 10.0 * u(rng);
            h.alpha = u(rng);
            h.k_quick = u(rng);
            h.k_slow = u(rng);
            h.n_quick = 1 + static_cast<int>(u(rng) * 3);
            h.n_slow = 1 + static_cast<int>(u(rng) * 3);
            dynamics::ModelState s;
            s.soil_store = u(rng) * h.max_soil_storage();
            s.tank_stores = Vector::NullaryExpr(h.n_quick + h.n_slow, [&]() { return 50.0 * u(rng); });
            const double pet = 6.0 * u(rng);
            const auto r = dynamics::step_hymod(s, h, p, pet);
            worst = std::max(worst, std::abs(p - r.evaporation - r.streamflow - (r.state.total() - s.total())));
        } else {
            dynamics::NashParams nash{{u(rng), u(rng), u(rng)}};
            dynamics::ModelState s;
            s.tank_stores = Vector::NullaryExpr(3, [&]() { return 50.0 * u(rng); });
            const auto r = dynamics::step_nash(s, nash, p);
            worst = std::max(worst, std::abs(p - r.streamflow - (r.state.total() - s.total())));
        }
    }
    // superposition of two forcings through one cascade
    double sup = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        dynamics::NashParams nash{{u(rng), u(rng), u(rng)}};
        dynamics::Forcing f1{Vector(500), Vector::Zero(500)}, f2{Vector(500), Vector::Zero(500)};
        for (Eigen::Index t = 0; t < 500; ++t) {
            f1.precip[t] = u(rng) < 0.3 ? rain(rng) : 0.0;
            f2.precip[t] = u(rng) < 0.3 ? rain(rng) : 0.0;
        }
        const Vector q = dynamics::simulate_streamflow(nash, {f1.precip + f2.precip, f1.pet});
        sup = std::max(sup, (q - dynamics::simulate_streamflow(nash, f1) - dynamics::simulate_streamflow(nash, f2))
                                .cwiseAbs()
                                .maxCoeff());
    }
    return {worst < kMassTol && sup < kMassTol,
            fmt::format("{} steps, max |residual| {:.2e}; superposition max |error| {:.2e}", steps, worst, sup)};
}

Outcome gradient_check() {
    std::mt19937_64 rng(808);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<int> dim(1, 6);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index rows = 5 + dim(rng) * 3, inputs = dim(rng), hidden = dim(rng);
        const Matrix x = Matrix::NullaryExpr(rows, inputs, [&]() { return g(rng); });
        const Vector y = Vector::NullaryExpr(rows, [&]() { return g(rng); });
        const auto net = regression::Network::random(inputs, hidden, derive_seed(808, static_cast<std::uint64_t>(trial)));
        const double l2 = 0.05 * (trial % 4);
        Vector grad;
        regression::loss_and_gradient(net, x, y, l2, &grad);
        const Vector theta = net.flatten();
        for (Eigen::Index k = 0; k < theta.size(); ++k) {
            const double h = 1e-6;
            Vector tp = theta, tm = theta;
            tp[k] += h;
            tm[k] -= h;
            const double fd =
                (regression::loss_and_gradient(regression::Network::unflatten(tp, inputs, hidden), x, y, l2, nullptr) -
                 regression::loss_and_gradient(regression::Network::unflatten(tm, inputs, hidden), x, y, l2, nullptr)) /
                (2 * h);
            // relative error, floored so parameters with near-zero gradient are judged absolutely
            worst = std::max(worst, std::abs(fd - grad[k]) / std::max({std::abs(fd), std::abs(grad[k]), 1e-3}));
        }
    }
    return {worst <= kGradTol, fmt::format("20 instances, max relative error {:.2e}", worst)};
}

template <typename Run>
Outcome reproducible(const std::string& name, Run run, const std::vector<fs::path>& first) {
    const auto second = run(kOut / (name + "_repeat"), 2u);
    bool same = first.size() == second.size() && !first.empty();
    for (std::size_t i = 0; same && i < first.size(); ++i) same = slurp(first[i]) == slurp(second[i]);
    return {same, fmt::format("{}: {} files, workers 1 vs 2", name, first.size())};
}

void report(int id, const std::string& title, const Outcome& o, double secs, double limit, int& failures) {
    const bool ok = o.pass && secs <= limit;
    if (!ok) ++failures;
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << " " << title << ": " << o.detail
              << fmt::format(" ({:.1f}s", secs) << (limit > 0 && limit < 1e30 ? fmt::format(", limit {:.0f}s)", limit) : ")")
              << std::endl;
}

} // namespace

int main() {
    fs::create_directories(kOut);
    int failures = 0;
    constexpr double kNoLimit = 1e300;
    const auto cfg = harness::ExperimentConfig::defaults(harness::Scale::desk);

    auto t0 = std::chrono::steady_clock::now();
    auto o1 = estimator_oracle();
    report(1, "estimator oracle equivalence", o1, seconds_since(t0), kLimit1, failures);

    t0 = std::chrono::steady_clock::now();
    auto o2 = analytic_te();
    report(2, "analytic transfer entropy", o2, seconds_since(t0), kLimit2, failures);

    t0 = std::chrono::steady_clock::now();
    const auto b = harness::run_experiment_b(cfg, kOut / "b", 1);
    const double tb = seconds_since(t0);
    report(3, "missing information bound", dpi_bound(b), tb, kLimit3, failures);
    report(4, "convergence protocol", convergence(b), 0.0, kNoLimit, failures);

    t0 = std::chrono::steady_clock::now();
    const auto a = harness::run_experiment_a(cfg, kOut / "a", 1);
    report(5, "bayesian inconsistency", inconsistency(a, cfg), seconds_since(t0), kLimit5, failures);

    t0 = std::chrono::steady_clock::now();
    const auto c = harness::run_experiment_c(cfg, kOut / "c", 1);
    report(6, "assimilation and identification pattern", pattern_c(c), seconds_since(t0), kLimit6, failures);

    t0 = std::chrono::steady_clock::now();
    report(7, "dynamics conservation", conservation(), seconds_since(t0), kNoLimit, failures);

    t0 = std::chrono::steady_clock::now();
    report(8, "gradient check", gradient_check(), seconds_since(t0), kNoLimit, failures);

    t0 = std::chrono::steady_clock::now();
    Outcome o9{true, ""};
    for (const auto& r : {
             reproducible("a", [&](const fs::path& d, unsigned w) { return harness::run_experiment_a(cfg, d, w).files; },
                          a.files),
             reproducible("b", [&](const fs::path& d, unsigned w) { return harness::run_experiment_b(cfg, d, w).files; },
                          b.files),
             reproducible("c", [&](const fs::path& d, unsigned w) { return harness::run_experiment_c(cfg, d, w).files; },
                          c.files),
         }) {
        o9.pass = o9.pass && r.pass;
        o9.detail += r.detail + (r.pass ? " identical; " : " DIFFER; ");
    }
    report(9, "byte-identical reruns", o9, seconds_since(t0), kNoLimit, failures);

    std::cout << (failures == 0 ? "all criteria passed" : fmt::format("{} criteria failed", failures)) << std::endl;
    return failures == 0 ? 0 : 1;
}
