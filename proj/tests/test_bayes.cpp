#include <doctest.h>

#include "infobench/bayes.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace infobench;
using namespace infobench::bayes;
using dynamics::ModelKind;

TEST_CASE("parameter sampling") {
    SUBCASE("nash triplets in the unit cube") {
        auto d = sample_parameters(ModelKind::nash, 500, 1);
        CHECK(d.sets.size() == 500);
        CHECK(d.proposals == 500);
        for (const auto& p : d.sets) {
            for (double k : std::get<dynamics::NashParams>(p).k) CHECK((k >= 0.0 && k <= 1.0));
        }
    }
    SUBCASE("fixed seed reproduces") {
        auto a = sample_parameters(ModelKind::abc, 50, 9);
        auto b = sample_parameters(ModelKind::abc, 50, 9);
        for (std::size_t i = 0; i < 50; ++i) {
            CHECK(std::get<dynamics::AbcParams>(a.sets[i]).a == std::get<dynamics::AbcParams>(b.sets[i]).a);
        }
    }
    SUBCASE("abc rejection accepts half the unit square") {
        auto d = sample_parameters(ModelKind::abc, 20000, 3);
        const double rate = 20000.0 / static_cast<double>(d.proposals);
        // binomial standard error at p = 0.5 over ~40000 proposals is 0.0025
        CHECK(rate == doctest::Approx(0.5).epsilon(0.03));
        for (const auto& p : d.sets) {
            const auto& q = std::get<dynamics::AbcParams>(p);
            CHECK(q.a + q.b <= 1.0);
        }
    }
    SUBCASE("hymod draws validate") {
        for (const auto& p : sample_parameters(ModelKind::hymod, 100, 4).sets) CHECK_NOTHROW(dynamics::validate(p));
    }
}

TEST_CASE("forcing perturbation") {
    std::mt19937_64 rng(2);
    std::exponential_distribution<double> e(1.0 / 9.0);
    dynamics::Forcing f{Vector::NullaryExpr(60, [&]() { return e(rng); }), Vector::Constant(60, 3.0)};
    f.precip[5] = 0.0;

    SUBCASE("vanishing sigma leaves the record unchanged") {
        for (const auto& c : perturb_forcing(f, {1e-12, 5}, 1)) {
            CHECK((c.precip - f.precip).cwiseAbs().maxCoeff() < 1e-9);
            CHECK(c.pet == f.pet);
        }
    }
    SUBCASE("copy means stay within the CLT bound on wet days") {
        const double s = 0.5;
        auto copies = perturb_forcing(f, {s, 500}, 7);
        Vector mean = Vector::Zero(60);
        for (const auto& c : copies) mean += c.precip;
        mean /= 500.0;
        for (Eigen::Index t = 0; t < 60; ++t) {
            if (f.precip[t] > 5 * s) CHECK(std::abs(mean[t] - f.precip[t]) < 3 * s / std::sqrt(500.0));
        }
        // clipping a dry day: mean of max(0, N(0, s^2)) is s / sqrt(2 pi)
        const double half_normal = s / std::sqrt(2.0 * std::numbers::pi);
        CHECK(mean[5] > 0.0);
        CHECK(std::abs(mean[5] - half_normal) < 3 * s / std::sqrt(500.0));
    }
    SUBCASE("nonpositive sigma rejected") {
        CHECK_THROWS_AS(perturb_forcing(f, {0.0, 5}, 1), ValidationError);
    }
}

TEST_CASE("gaussian log likelihood") {
    const double c = std::log(std::sqrt(2.0 * std::numbers::pi));
    SUBCASE("zero residuals") {
        Vector v = Vector::LinSpaced(10, 0, 1);
        CHECK(log_likelihood(v, v, {0.3}) == doctest::Approx(10 * -(std::log(0.3) + c)));
    }
    SUBCASE("unit standardized residual") {
        Vector o(1), s(1);
        o << 1.2;
        s << 1.0;
        CHECK(log_likelihood(o, s, {0.2}) == doctest::Approx(-(std::log(0.2) + c) - 0.5));
    }
    SUBCASE("doubling sigma costs N ln 2") {
        Vector v = Vector::Ones(25);
        CHECK(log_likelihood(v, v, {0.1}) - log_likelihood(v, v, {0.2}) == doctest::Approx(25 * std::log(2.0)));
    }
    SUBCASE("length mismatch") {
        CHECK_THROWS_AS(log_likelihood(Vector::Ones(3), Vector::Ones(4), {1.0}), ValidationError);
    }
}

TEST_CASE("model posterior") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    const Eigen::Index days = 500;
    Vector obs = Vector::NullaryExpr(days, [&]() { return std::abs(g(rng)) * 3; });
    Matrix sims = Matrix::NullaryExpr(20, days, [&]() { return std::abs(g(rng)) * 3; });

    SUBCASE("bootstrap columns sum to the record length") {
        Matrix counts = bootstrap_counts(days, 10, 1);
        for (Eigen::Index b = 0; b < 10; ++b) CHECK(counts.col(b).sum() == static_cast<double>(days));
        CHECK(counts == bootstrap_counts(days, 10, 1));
    }
    SUBCASE("weighted residuals match the likelihood") {
        Matrix counts = Matrix::Ones(days, 1);
        const double r = weighted_squared_residuals(obs, sims.row(0).transpose(), counts)[0];
        const double sy = 0.7;
        const double ll = -static_cast<double>(days) * std::log(sy * std::sqrt(2.0 * std::numbers::pi)) -
                          r / (2 * sy * sy);
        CHECK(ll == doctest::Approx(log_likelihood(obs, sims.row(0).transpose(), {sy})));
    }
    SUBCASE("identical simulation sets split evenly") {
        auto post = model_posterior({sims, sims}, obs, {0.5}, 10, 3);
        CHECK(post.mean[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(post.std[0] == doctest::Approx(0.0));
    }
    SUBCASE("exact simulation wins at small sigma without underflow") {
        Matrix exact = sims;
        exact.row(7) = obs.transpose();
        auto post = model_posterior({exact, sims}, obs, {0.01}, 10, 4);
        CHECK_FALSE(post.degenerate);
        CHECK(post.mean[0] == doctest::Approx(1.0));
        CHECK(post.replicate_probability.allFinite());
        // likelihood-ratio oracle at a moderate sigma where it is representable
        auto mild = model_posterior({exact.topRows(8), sims.topRows(8)}, obs, {20.0}, 1, 4);
        const Matrix counts = bootstrap_counts(days, 1, 4);
        double a = 0.0, b = 0.0;
        for (Eigen::Index k = 0; k < 8; ++k) {
            a += std::exp(-weighted_squared_residuals(obs, exact.row(k).transpose(), counts)[0] / 800.0);
            b += std::exp(-weighted_squared_residuals(obs, sims.row(k).transpose(), counts)[0] / 800.0);
        }
        CHECK(mild.mean[0] == doctest::Approx(a / (a + b)).epsilon(1e-10));
    }
    SUBCASE("probabilities normalize per replicate") {
        ModelProbabilityTable table;
        table.models = {ModelKind::abc, ModelKind::nash};
        for (double sy : {0.01, 0.1, 0.5}) {
            table.cells.push_back({0.1, sy, model_posterior({sims.topRows(10), sims.bottomRows(10)}, obs, {sy}, 10, 8)});
        }
        CHECK(table.normalization_error() < 1e-12);
    }
    SUBCASE("ranking flip detection") {
        ModelProbabilityTable table;
        table.models = {ModelKind::abc, ModelKind::nash};
        CellPosterior a, b;
        a.mean = Vector(2);
        a.mean << 0.9, 0.1;
        b.mean = Vector(2);
        b.mean << 0.2, 0.8;
        table.cells = {{0.1, 0.1, a}, {0.1, 0.5, a}};
        CHECK_FALSE(table.ranking_flip());
        table.cells.push_back({0.5, 0.5, b});
        CHECK(table.ranking_flip());
    }
}
