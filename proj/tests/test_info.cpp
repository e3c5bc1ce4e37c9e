#include <doctest.h>

#include "infobench/info.hpp"
#include "oracle.hpp"

#include <numeric>
#include <random>

using namespace infobench;
using namespace infobench::info;

namespace {

Vector to_vector(const std::vector<int>& v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
    return out;
}

Vector uniform(std::mt19937_64& rng, Eigen::Index n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

std::vector<int> coin(std::mt19937_64& rng, std::size_t n) {
    std::bernoulli_distribution b(0.5);
    std::vector<int> v(n);
    for (auto& x : v) x = b(rng) ? 1 : 0;
    return v;
}

} // namespace

TEST_CASE("discretize") {
    SUBCASE("fixed width midpoint split") {
        Vector v(4);
        v << 1, 2, 3, 4;
        auto d = discretize(v, {BinScheme::fixed_width, 2});
        CHECK(d.index == std::vector<int>{0, 0, 1, 1});
        CHECK(d.bins == 2);
    }
    SUBCASE("constant series collapses with a warning") {
        auto d = discretize(Vector::Constant(10, 3.0), {BinScheme::quantile, 4});
        CHECK(d.degenerate);
        CHECK(d.bins == 1);
        CHECK_FALSE(d.warnings.empty());
        CHECK(std::all_of(d.index.begin(), d.index.end(), [](int i) { return i == 0; }));
    }
    SUBCASE("quantile bins have near-equal occupancy") {
        std::mt19937_64 rng(3);
        auto d = discretize(uniform(rng, 1000), {BinScheme::quantile, 10});
        std::vector<int> occ(10, 0);
        for (int i : d.index) ++occ[static_cast<std::size_t>(i)];
        for (int c : occ) CHECK(std::abs(c - 100) <= 1);
    }
    SUBCASE("edges strictly increasing and ties kept together") {
        Vector v(12);
        v << 0, 0, 0, 0, 0, 0, 0, 1, 1, 2, 3, 3;
        auto d = discretize(v, {BinScheme::quantile, 4});
        for (std::size_t i = 1; i < d.edges.size(); ++i) CHECK(d.edges[i] > d.edges[i - 1]);
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            for (Eigen::Index j = 0; j < v.size(); ++j) {
                if (v[i] == v[j]) CHECK(d.index[static_cast<std::size_t>(i)] == d.index[static_cast<std::size_t>(j)]);
            }
        }
        // last bin is right-closed: the maximum lands in the top bin
        CHECK(d.index.back() == d.bins - 1);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(discretize(Vector::Zero(5), {BinScheme::quantile, 1}), ValidationError);
        CHECK_THROWS_AS(discretize(Vector::Zero(3), {BinScheme::quantile, 4}), ValidationError);
        Vector bad = Vector::Zero(5);
        bad[2] = std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(discretize(bad, {BinScheme::quantile, 2}), ValidationError);
    }
}

TEST_CASE("joint histogram") {
    std::vector<int> a{0, 1, 1, 2}, b{1, 1, 0, 0};
    const std::span<const int> cols[] = {a, b};
    auto h = JointHistogram::count(cols, {3, 2});
    CHECK(h.total() == 4);
    const int c[] = {1, 1};
    CHECK(h.at(c) == 1);
    auto m = h.marginal({0});
    CHECK(m.dims() == 1);
    CHECK(m.total() == 4);
    const int c1[] = {1};
    CHECK(m.at(c1) == 2);
    CHECK_THROWS_AS(JointHistogram({2, 2, 2, 2}), ValidationError);
    CHECK_THROWS_AS(entropy(JointHistogram({3})), ValidationError);
}

TEST_CASE("entropy") {
    CHECK(entropy(std::vector<int>{0, 1, 2, 3}, 4) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    CHECK(entropy(std::vector<int>{2, 2, 2}, 4) == 0.0);
    const double expected = -(0.25 * std::log(0.25) + 0.75 * std::log(0.75));
    CHECK(entropy(std::vector<int>{0, 1, 1, 1}, 2) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(expected == doctest::Approx(0.5623).epsilon(1e-4));
}

TEST_CASE("mutual information") {
    std::mt19937_64 rng(5);
    SUBCASE("self information equals ln B on quantile bins") {
        Vector x = uniform(rng, 1000);
        auto mi = mutual_information(x, x, {BinScheme::quantile, 8});
        CHECK(mi.value == doctest::Approx(std::log(8.0)).epsilon(1e-12));
        CHECK(mi.samples == 1000);
    }
    SUBCASE("four-point joint table") {
        Vector x(4), y(4);
        x << 0, 0, 1, 1;
        y << 0, 0, 1, 1;
        CHECK(mutual_information(x, y, {BinScheme::quantile, 2}).value == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    }
    SUBCASE("symmetric") {
        Vector x = uniform(rng, 500);
        Vector y = x.array().square() + 0.1 * uniform(rng, 500).array();
        CHECK(mutual_information(x, y).value == doctest::Approx(mutual_information(y, x).value).epsilon(1e-14));
    }
    SUBCASE("independent streams sit inside the shuffle null") {
        Vector x = uniform(rng, 5000), y = uniform(rng, 5000);
        const DiscretizationSpec spec{BinScheme::quantile, 10};
        auto null = mi_shuffle_null(x, y, spec, 100, 17);
        CHECK(mutual_information(x, y, spec).value <= percentile(null, 99.0));
    }
    SUBCASE("length mismatch") {
        CHECK_THROWS_AS(mutual_information(Vector::Zero(30), Vector::Zero(29)), ValidationError);
    }
}

TEST_CASE("conditional mutual information") {
    SUBCASE("both driven deterministically by z") {
        std::vector<int> z{0, 1, 2, 3, 0, 1, 2, 3}, x, y;
        for (int v : z) {
            x.push_back(v % 2);
            y.push_back(v / 2);
        }
        CHECK(conditional_mi(x, 2, y, 2, z, 4) == doctest::Approx(0.0).epsilon(1e-14));
    }
    SUBCASE("xor on enumerated table gives ln 2") {
        std::vector<int> x{0, 0, 1, 1}, z{0, 1, 0, 1}, y;
        for (std::size_t i = 0; i < x.size(); ++i) y.push_back(x[i] ^ z[i]);
        CHECK(conditional_mi(x, 2, y, 2, z, 2) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
        // the pairwise dependence is zero: xor hides x from y
        CHECK(mutual_information(x, 2, y, 2) == doctest::Approx(0.0));
    }
    SUBCASE("constant conditioning reduces to mutual information") {
        std::mt19937_64 rng(9);
        Vector x = uniform(rng, 400);
        Vector y = x + 0.3 * uniform(rng, 400);
        Vector z = Vector::Constant(400, 1.5);
        const DiscretizationSpec spec{BinScheme::quantile, 8};
        auto cmi = conditional_mi(x, y, z, spec);
        CHECK(std::abs(cmi.value - mutual_information(x, y, spec).value) < 1e-12);
        CHECK_FALSE(cmi.warnings.empty());
    }
}

TEST_CASE("transfer entropy") {
    std::mt19937_64 rng(21);
    SUBCASE("copied binary source gives ln 2") {
        auto x = coin(rng, 20000);
        std::vector<int> y(x.size(), 0);
        for (std::size_t t = 0; t + 1 < x.size(); ++t) y[t + 1] = x[t];
        y[0] = 1;
        const double te = transfer_entropy(x, 2, y, 2, 1);
        CHECK(te == doctest::Approx(std::log(2.0)).epsilon(0.01));
        CHECK(te == doctest::Approx(oracle::transfer_entropy(x, y, 1)).epsilon(1e-12));
    }
    SUBCASE("self transfer is screened by conditioning") {
        Vector y = uniform(rng, 500);
        CHECK(transfer_entropy(y, y, 1, {BinScheme::quantile, 2}).value == doctest::Approx(0.0).epsilon(1e-14));
    }
    SUBCASE("white noise stays within its null") {
        Vector s = uniform(rng, 3000), t = uniform(rng, 3000);
        const auto spec = DiscretizationSpec::triple();
        auto null = te_shuffle_null(s, t, 1, spec, 100, 3);
        CHECK(transfer_entropy(s, t, 1, spec).value <= percentile(null, 99.5));
    }
    SUBCASE("lag longer than the record") {
        CHECK_THROWS_AS(transfer_entropy(Vector::Zero(20), Vector::Zero(20), 20, {BinScheme::fixed_width, 2}),
                        ValidationError);
    }
}

TEST_CASE("f statistic") {
    std::mt19937_64 rng(4);
    SUBCASE("shannon transform reproduces mutual information") {
        for (int trial = 0; trial < 5; ++trial) {
            Vector x = uniform(rng, 800);
            Vector y = (3.0 * x).array().sin() + 0.5 * uniform(rng, 800).array();
            auto f = f_statistic(x, y, shannon_transform());
            CHECK(std::abs(f.value - mutual_information(x, y).value) < 1e-12);
        }
    }
    SUBCASE("identity ratio integrates to one") {
        Vector x = uniform(rng, 2000), y = uniform(rng, 2000);
        CHECK(f_statistic(x, y, identity_transform()).value == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("self-paired series, squared ratio") {
        // p = (0.75, 0.25): sum p(x)p(y) r^2 over diagonal = 0.5625 (4/3)^2 + 0.0625 * 16 = 2
        std::vector<int> x{0, 0, 0, 1};
        Transform sq{"square", [](double u) { return u * u; }};
        CHECK(f_statistic(x, 2, x, 2, sq) == doctest::Approx(2.0).epsilon(1e-14));
    }
    SUBCASE("non-finite transform rejected") {
        std::vector<int> x{0, 0, 1, 1}, y{0, 1, 0, 1};
        Transform bad{"log", [](double u) { return -std::log(u - 1.0); }};
        CHECK_THROWS_AS(f_statistic(x, 2, y, 2, bad), ValidationError);
    }
}

TEST_CASE("linear metrics") {
    Vector obs(3);
    obs << 0, 1, 2;
    auto same = linear_metrics(obs, obs);
    CHECK(same.mse == 0.0);
    CHECK(*same.pearson_r == doctest::Approx(1.0));
    CHECK(same.mean_bias == 0.0);

    auto offset = linear_metrics(obs, obs.array() + 2.0);
    CHECK(offset.mse == doctest::Approx(4.0));
    CHECK(*offset.pearson_r == doctest::Approx(1.0));
    CHECK(offset.mean_bias == doctest::Approx(2.0));

    Vector rev(3);
    rev << 2, 1, 0;
    auto flipped = linear_metrics(obs, rev);
    CHECK(*flipped.pearson_r == doctest::Approx(-1.0));
    CHECK(flipped.mse == doctest::Approx(8.0 / 3.0));

    CHECK_FALSE(linear_metrics(obs, Vector::Constant(3, 1.0)).pearson_r.has_value());
    CHECK_THROWS_AS(linear_metrics(obs.head(1), obs.head(1)), ValidationError);
}

TEST_CASE("property: exact-table oracle") {
    std::mt19937_64 rng(1234);
    for (int trial = 0; trial < 200; ++trial) {
        const int states = 2 + trial % 3;
        auto cols = oracle::enumerated_sample(rng, 3, states, 4);
        const auto& x = cols[0];
        const auto& y = cols[1];
        const auto& z = cols[2];
        CHECK(std::abs(entropy(x, states) - oracle::entropy(x)) < 1e-12);
        CHECK(std::abs(mutual_information(x, states, y, states) - oracle::mutual_information(x, y)) < 1e-12);
        CHECK(std::abs(conditional_mi(x, states, y, states, z, states) - oracle::conditional_mi(x, y, z)) < 1e-12);
        CHECK(std::abs(transfer_entropy(x, states, y, states, 1) - oracle::transfer_entropy(x, y, 1)) < 1e-12);
    }
}

TEST_CASE("property: chain consistency and non-negativity") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        auto cols = oracle::enumerated_sample(rng, 2, 4, 6);
        const auto& x = cols[0];
        const auto& y = cols[1];
        const std::span<const int> both[] = {x, y};
        auto joint = JointHistogram::count(both, {4, 4});
        const double hx = entropy(joint.marginal({0}));
        const double hy = entropy(joint.marginal({1}));
        const double hxy = entropy(joint);
        const double h_x_given_y = hxy - hy;
        const double mi = mutual_information(x, 4, y, 4);
        CHECK(std::abs((hx + hy - hxy) - mi) < 1e-12);
        CHECK(std::abs((hx - h_x_given_y) - mi) < 1e-12);
        CHECK(mi >= 0.0);
        CHECK(conditional_mi(x, 4, y, 4, x, 4) >= 0.0);
    }
}

TEST_CASE("property: data processing inequality on deterministic chains") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n01;
    const DiscretizationSpec spec{BinScheme::quantile, 10};
    for (int trial = 0; trial < 10; ++trial) {
        Vector x(10000);
        for (auto& v : x) v = n01(rng);
        Vector g = x.array().tanh() + 0.2 * x.array().square();
        Vector hg = (3.0 * g).array().round() / 3.0; // coarsening loses information
        const auto null = mi_shuffle_null(x, hg, spec, 50, static_cast<std::uint64_t>(trial));
        const double bias = percentile(null, 95.0);
        CHECK(mutual_information(x, hg, spec).value <= mutual_information(x, g, spec).value + bias);
    }
}

TEST_CASE("property: shuffle null calibration") {
    std::mt19937_64 rng(99);
    const DiscretizationSpec spec{BinScheme::quantile, 10};
    int below = 0;
    const int trials = 20;
    for (int trial = 0; trial < trials; ++trial) {
        Vector x = uniform(rng, 10000), y = uniform(rng, 10000);
        auto null = mi_shuffle_null(x, y, spec, 100, 1000 + static_cast<std::uint64_t>(trial));
        if (mutual_information(x, y, spec).value < percentile(null, 95.0)) ++below;
    }
    CHECK(below >= trials * 9 / 10);
}

TEST_CASE("shuffle nulls are independent of worker count") {
    std::mt19937_64 rng(1);
    Vector x = uniform(rng, 2000), y = uniform(rng, 2000);
    CHECK(mi_shuffle_null(x, y, {}, 16, 5, 1) == mi_shuffle_null(x, y, {}, 16, 5, 4));
    CHECK(te_shuffle_null(x, y, 1, DiscretizationSpec::triple(), 16, 5, 1) ==
          te_shuffle_null(x, y, 1, DiscretizationSpec::triple(), 16, 5, 3));
}

TEST_CASE("percentile") {
    CHECK(percentile({1, 2, 3, 4, 5}, 50) == 3.0);
    CHECK(percentile({1, 2}, 95) == doctest::Approx(1.95));
    CHECK_THROWS_AS(percentile({}, 50), ValidationError);
}

TEST_CASE("real-valued estimators agree with the oracle on integer data") {
    // fixed-width bins with one bin per state reproduce the states exactly
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        auto cols = oracle::enumerated_sample(rng, 3, 4, 3);
        // make sure every state occurs so min/max span the full range
        for (auto& c : cols) {
            for (int s = 0; s < 4; ++s) c.push_back(s);
        }
        const DiscretizationSpec spec{BinScheme::fixed_width, 4};
        const Vector x = to_vector(cols[0]), y = to_vector(cols[1]), z = to_vector(cols[2]);
        CHECK(std::abs(mutual_information(x, y, spec).value - oracle::mutual_information(cols[0], cols[1])) < 1e-12);
        CHECK(std::abs(conditional_mi(x, y, z, spec).value - oracle::conditional_mi(cols[0], cols[1], cols[2])) < 1e-12);
    }
}
