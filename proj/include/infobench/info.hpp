#pragma once

// Plug-in (histogram) estimators of entropy, mutual information,
// conditional mutual information and transfer entropy, in nats.

#include "infobench/core.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace infobench::info {

enum class BinScheme { quantile, fixed_width };

std::string to_string(BinScheme scheme);
BinScheme bin_scheme_from_string(const std::string& name);

struct DiscretizationSpec {
    BinScheme scheme = BinScheme::quantile;
    int bins = 20;

    /// Default for one- and two-variable statistics.
    static DiscretizationSpec pairwise() { return {BinScheme::quantile, 20}; }
    /// Default for three-variable statistics (transfer entropy).
    static DiscretizationSpec triple() { return {BinScheme::quantile, 11}; }
};

/// A series mapped onto bin indices [0, bins). Bins are left-closed and the
/// last bin is right-closed. `edges` holds bins + 1 strictly increasing
/// boundaries (or a single value when the series is constant).
struct Discretized {
    std::vector<int> index;
    int bins = 1;
    std::vector<double> edges;
    bool degenerate = false;
    std::vector<std::string> warnings;
};

Discretized discretize(const Eigen::Ref<const Vector>& series, const DiscretizationSpec& spec);

/// Joint frequency table over one to three discrete variables.
class JointHistogram {
public:
    explicit JointHistogram(std::vector<int> shape);

    /// Counts the aligned tuples (a[i], b[i], ...). All inputs must share
    /// one length and fit the given shape.
    static JointHistogram count(std::span<const std::span<const int>> columns, std::vector<int> shape);

    void add(std::span<const int> cell, std::int64_t n = 1);

    int dims() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    std::int64_t total() const { return total_; }
    std::span<const std::int64_t> counts() const { return counts_; }
    std::int64_t at(std::span<const int> cell) const;

    /// Sums out every dimension not listed in `keep` (order preserved).
    JointHistogram marginal(std::vector<int> keep) const;

private:
    std::size_t offset(std::span<const int> cell) const;

    std::vector<int> shape_;
    std::vector<std::int64_t> counts_;
    std::int64_t total_ = 0;
};

struct InfoValue {
    double value = 0.0;
    DiscretizationSpec spec;
    std::size_t samples = 0;
    std::vector<std::string> warnings;
};

/// -sum p ln p over occupied cells. Throws ValidationError when empty.
double entropy(const JointHistogram& hist);

// Estimators on already-discretized (integer state) data. Each state
// vector must hold values in [0, states).
double entropy(std::span<const int> x, int states);
double mutual_information(std::span<const int> x, int x_states, std::span<const int> y, int y_states);
double conditional_mi(std::span<const int> x, int x_states, std::span<const int> y, int y_states,
                      std::span<const int> z, int z_states);
/// I(target[t+lag]; source[t] | target[t]).
double transfer_entropy(std::span<const int> source, int source_states, std::span<const int> target,
                        int target_states, int lag);

// Estimators on real-valued series; each variable is discretized
// separately with `spec`.
InfoValue entropy(const Eigen::Ref<const Vector>& x, const DiscretizationSpec& spec = DiscretizationSpec::pairwise());
InfoValue mutual_information(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
                             const DiscretizationSpec& spec = DiscretizationSpec::pairwise());
InfoValue conditional_mi(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
                         const Eigen::Ref<const Vector>& z,
                         const DiscretizationSpec& spec = DiscretizationSpec::triple());
InfoValue transfer_entropy(const Eigen::Ref<const Vector>& source, const Eigen::Ref<const Vector>& target, int lag,
                           const DiscretizationSpec& spec = DiscretizationSpec::triple());

/// Convex integrand applied to the ratio p(x|y) / p(x).
struct Transform {
    std::string name;
    std::function<double(double)> fn;
};

/// u ln u (with 0 ln 0 = 0). Its expectation under p(x)p(y) is the mutual
/// information.
Transform shannon_transform();
Transform identity_transform();

/// sum over cells with p(x)p(y) > 0 of p(x) p(y) f(p(x|y) / p(x)), from the
/// same discretization mutual_information uses.
InfoValue f_statistic(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y, const Transform& f,
                      const DiscretizationSpec& spec = DiscretizationSpec::pairwise());
double f_statistic(std::span<const int> x, int x_states, std::span<const int> y, int y_states, const Transform& f);

struct LinearMetrics {
    double mse = 0.0;
    std::optional<double> pearson_r; // empty when either series has zero variance
    double mean_bias = 0.0;          // mean(pred - obs)
};

LinearMetrics linear_metrics(const Eigen::Ref<const Vector>& obs, const Eigen::Ref<const Vector>& pred);

/// Permutation null for I(x; y): y is shuffled `replicates` times, each
/// replicate with its own derived seed. Output order is replicate order.
std::vector<double> mi_shuffle_null(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
                                    const DiscretizationSpec& spec, int replicates, std::uint64_t seed,
                                    unsigned workers = 1);

/// Permutation null for transfer entropy: the source is shuffled, the
/// target left intact.
std::vector<double> te_shuffle_null(const Eigen::Ref<const Vector>& source, const Eigen::Ref<const Vector>& target,
                                    int lag, const DiscretizationSpec& spec, int replicates, std::uint64_t seed,
                                    unsigned workers = 1);

/// Linear-interpolated percentile, q in [0, 100].
double percentile(std::vector<double> values, double q);

} // namespace infobench::info
