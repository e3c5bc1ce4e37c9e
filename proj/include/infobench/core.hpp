#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

namespace infobench {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexVector = Eigen::VectorXi;

/// Bad input: a violated precondition, malformed file or out-of-range
/// parameter. The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A failure while computing (diverged training, degenerate posterior...).
class ComputationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Uniformly sampled scalar sequence with units and a time-step label.
struct TimeSeries {
    Vector values;
    std::string units;
    std::string step = "1d";

    TimeSeries() = default;
    explicit TimeSeries(Vector v, std::string u = "", std::string s = "1d")
        : values(std::move(v)), units(std::move(u)), step(std::move(s)) {}

    Eigen::Index size() const { return values.size(); }
    double operator[](Eigen::Index i) const { return values[i]; }
    double& operator[](Eigen::Index i) { return values[i]; }
};

/// splitmix64 finalizer. Used to derive independent child seeds from a
/// parent seed so results never depend on task scheduling.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
    return mix_seed(mix_seed(parent) ^ (index * 0xd1b54a32d192ed03ULL + 1));
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Tasks must only
/// write to their own output slot; ordering of execution is unspecified.
/// workers <= 1 runs inline.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

/// Worker count used when callers pass 0.
unsigned default_workers();

} // namespace infobench
