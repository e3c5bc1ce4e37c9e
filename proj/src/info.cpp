#include "infobench/info.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace infobench::info {

namespace {

void check_states(std::span<const int> x, int states, const char* name) {
    if (states < 1) throw ValidationError(std::string(name) + ": state count must be >= 1");
    for (int v : x) {
        if (v < 0 || v >= states) {
            throw ValidationError(std::string(name) + ": state index out of range");
        }
    }
}

void check_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        std::ostringstream os;
        os << what << ": length mismatch (" << a << " vs " << b << ")";
        throw ValidationError(os.str());
    }
}

// sum over cells of n ln n, the only data-dependent part of a plug-in entropy.
double n_log_n(std::span<const std::int64_t> counts) {
    double acc = 0.0;
    for (auto c : counts) {
        if (c > 0) {
            const double v = static_cast<double>(c);
            acc += v * std::log(v);
        }
    }
    return acc;
}

double clamp_nonnegative(double v) { return v < 0.0 ? 0.0 : v; }

std::vector<int> shifted(std::span<const int> v, std::size_t begin, std::size_t count) {
    return {v.begin() + static_cast<std::ptrdiff_t>(begin), v.begin() + static_cast<std::ptrdiff_t>(begin + count)};
}

InfoValue make_value(double v, const DiscretizationSpec& spec, std::size_t n,
                     std::initializer_list<const Discretized*> parts) {
    InfoValue out{v, spec, n, {}};
    for (const auto* d : parts) {
        out.warnings.insert(out.warnings.end(), d->warnings.begin(), d->warnings.end());
    }
    return out;
}

} // namespace

std::string to_string(BinScheme scheme) {
    return scheme == BinScheme::quantile ? "quantile" : "fixed_width";
}

BinScheme bin_scheme_from_string(const std::string& name) {
    if (name == "quantile") return BinScheme::quantile;
    if (name == "fixed_width") return BinScheme::fixed_width;
    throw ValidationError("unknown bin scheme '" + name + "'");
}

Discretized discretize(const Eigen::Ref<const Vector>& series, const DiscretizationSpec& spec) {
    if (spec.bins < 2) throw ValidationError("discretize: bins must be >= 2");
    const auto n = static_cast<std::size_t>(series.size());
    if (n == 0) throw ValidationError("discretize: empty series");
    if (n < static_cast<std::size_t>(spec.bins)) {
        throw ValidationError("discretize: series shorter than the bin count");
    }
    if (!series.allFinite()) throw ValidationError("discretize: series contains non-finite values");

    Discretized out;
    out.index.assign(n, 0);
    const double lo = series.minCoeff();
    const double hi = series.maxCoeff();
    if (!(hi > lo)) {
        out.bins = 1;
        out.edges = {lo};
        out.degenerate = true;
        out.warnings.emplace_back("discretize: constant series collapsed to a single bin");
        return out;
    }

    std::vector<double> interior;
    if (spec.scheme == BinScheme::quantile) {
        std::vector<double> sorted(series.data(), series.data() + n);
        std::sort(sorted.begin(), sorted.end());
        for (int i = 1; i < spec.bins; ++i) {
            const double e = sorted[static_cast<std::size_t>(i) * n / static_cast<std::size_t>(spec.bins)];
            if (e > lo && (interior.empty() || e > interior.back())) interior.push_back(e);
        }
        if (static_cast<int>(interior.size()) + 1 < spec.bins) {
            out.degenerate = true;
            out.warnings.emplace_back("discretize: tied quantiles merged into fewer bins");
        }
        for (std::size_t i = 0; i < n; ++i) {
            out.index[i] = static_cast<int>(std::upper_bound(interior.begin(), interior.end(), series[static_cast<Eigen::Index>(i)]) -
                                            interior.begin());
        }
    } else {
        const double width = (hi - lo) / spec.bins;
        for (int i = 1; i < spec.bins; ++i) interior.push_back(lo + width * i);
        for (std::size_t i = 0; i < n; ++i) {
            const double pos = std::floor((series[static_cast<Eigen::Index>(i)] - lo) / width);
            out.index[i] = std::clamp(static_cast<int>(pos), 0, spec.bins - 1);
        }
    }
    out.bins = static_cast<int>(interior.size()) + 1;
    out.edges.reserve(interior.size() + 2);
    out.edges.push_back(lo);
    out.edges.insert(out.edges.end(), interior.begin(), interior.end());
    out.edges.push_back(hi);
    return out;
}

// JointHistogram ------------------------------------------------------------

JointHistogram::JointHistogram(std::vector<int> shape) : shape_(std::move(shape)) {
    if (shape_.empty() || shape_.size() > 3) throw ValidationError("histogram: 1 to 3 dimensions supported");
    std::size_t cells = 1;
    for (int s : shape_) {
        if (s < 1) throw ValidationError("histogram: every dimension needs at least one bin");
        cells *= static_cast<std::size_t>(s);
    }
    counts_.assign(cells, 0);
}

std::size_t JointHistogram::offset(std::span<const int> cell) const {
    if (cell.size() != shape_.size()) throw ValidationError("histogram: cell rank mismatch");
    std::size_t off = 0;
    for (std::size_t d = 0; d < shape_.size(); ++d) {
        if (cell[d] < 0 || cell[d] >= shape_[d]) throw ValidationError("histogram: cell index out of range");
        off = off * static_cast<std::size_t>(shape_[d]) + static_cast<std::size_t>(cell[d]);
    }
    return off;
}

void JointHistogram::add(std::span<const int> cell, std::int64_t n) {
    counts_[offset(cell)] += n;
    total_ += n;
}

std::int64_t JointHistogram::at(std::span<const int> cell) const { return counts_[offset(cell)]; }

JointHistogram JointHistogram::count(std::span<const std::span<const int>> columns, std::vector<int> shape) {
    JointHistogram h(std::move(shape));
    if (columns.size() != h.shape_.size()) throw ValidationError("histogram: column count does not match shape");
    const std::size_t n = columns.front().size();
    for (std::size_t d = 0; d < columns.size(); ++d) {
        check_same_length(columns[d].size(), n, "histogram");
        check_states(columns[d], h.shape_[d], "histogram");
    }
    // Row-major strides; the hot loop skips per-cell validation.
    std::vector<std::size_t> stride(columns.size(), 1);
    for (std::size_t d = columns.size() - 1; d > 0; --d) {
        stride[d - 1] = stride[d] * static_cast<std::size_t>(h.shape_[d]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t off = 0;
        for (std::size_t d = 0; d < columns.size(); ++d) off += stride[d] * static_cast<std::size_t>(columns[d][i]);
        ++h.counts_[off];
    }
    h.total_ = static_cast<std::int64_t>(n);
    return h;
}

JointHistogram JointHistogram::marginal(std::vector<int> keep) const {
    std::vector<int> shape;
    for (int d : keep) {
        if (d < 0 || d >= dims()) throw ValidationError("histogram: marginal dimension out of range");
        shape.push_back(shape_[static_cast<std::size_t>(d)]);
    }
    JointHistogram out(shape);
    std::vector<int> cell(shape_.size(), 0);
    std::vector<int> sub(keep.size(), 0);
    for (std::size_t off = 0; off < counts_.size(); ++off) {
        // decode row-major offset
        std::size_t rem = off;
        for (std::size_t d = shape_.size(); d-- > 0;) {
            cell[d] = static_cast<int>(rem % static_cast<std::size_t>(shape_[d]));
            rem /= static_cast<std::size_t>(shape_[d]);
        }
        if (counts_[off] == 0) continue;
        for (std::size_t k = 0; k < keep.size(); ++k) sub[k] = cell[static_cast<std::size_t>(keep[k])];
        out.add(sub, counts_[off]);
    }
    return out;
}

// Discrete estimators -------------------------------------------------------

double entropy(const JointHistogram& hist) {
    if (hist.total() <= 0) throw ValidationError("entropy: empty histogram");
    const double n = static_cast<double>(hist.total());
    return clamp_nonnegative(std::log(n) - n_log_n(hist.counts()) / n);
}

double entropy(std::span<const int> x, int states) {
    const std::span<const int> cols[] = {x};
    return entropy(JointHistogram::count(cols, {states}));
}

double mutual_information(std::span<const int> x, int x_states, std::span<const int> y, int y_states) {
    check_same_length(x.size(), y.size(), "mutual_information");
    const std::span<const int> cols[] = {x, y};
    const auto joint = JointHistogram::count(cols, {x_states, y_states});
    const double v = entropy(joint.marginal({0})) + entropy(joint.marginal({1})) - entropy(joint);
    return clamp_nonnegative(v);
}

double conditional_mi(std::span<const int> x, int x_states, std::span<const int> y, int y_states,
                      std::span<const int> z, int z_states) {
    check_same_length(x.size(), y.size(), "conditional_mi");
    check_same_length(x.size(), z.size(), "conditional_mi");
    const std::span<const int> cols[] = {x, y, z};
    const auto joint = JointHistogram::count(cols, {x_states, y_states, z_states});
    const double v = entropy(joint.marginal({0, 2})) + entropy(joint.marginal({1, 2})) - entropy(joint) -
                     entropy(joint.marginal({2}));
    return clamp_nonnegative(v);
}

double transfer_entropy(std::span<const int> source, int source_states, std::span<const int> target,
                        int target_states, int lag) {
    check_same_length(source.size(), target.size(), "transfer_entropy");
    if (lag < 1) throw ValidationError("transfer_entropy: lag must be >= 1");
    if (target.size() <= static_cast<std::size_t>(lag)) {
        throw ValidationError("transfer_entropy: series shorter than the lag");
    }
    const std::size_t m = target.size() - static_cast<std::size_t>(lag);
    const auto future = shifted(target, static_cast<std::size_t>(lag), m);
    const auto now_src = shifted(source, 0, m);
    const auto now_tgt = shifted(target, 0, m);
    return conditional_mi(future, target_states, now_src, source_states, now_tgt, target_states);
}

double f_statistic(std::span<const int> x, int x_states, std::span<const int> y, int y_states, const Transform& f) {
    check_same_length(x.size(), y.size(), "f_statistic");
    const std::span<const int> cols[] = {x, y};
    const auto joint = JointHistogram::count(cols, {x_states, y_states});
    const auto mx = joint.marginal({0});
    const auto my = joint.marginal({1});
    const double n = static_cast<double>(joint.total());
    if (n <= 0) throw ValidationError("f_statistic: empty sample");
    double acc = 0.0;
    for (int i = 0; i < x_states; ++i) {
        const int ci[] = {i};
        const double nx = static_cast<double>(mx.at(ci));
        if (nx == 0) continue;
        for (int j = 0; j < y_states; ++j) {
            const int cj[] = {j};
            const double ny = static_cast<double>(my.at(cj));
            if (ny == 0) continue;
            const int cij[] = {i, j};
            const double nxy = static_cast<double>(joint.at(cij));
            const double ratio = nxy * n / (nx * ny);
            const double fv = f.fn(ratio);
            if (!std::isfinite(fv)) {
                std::ostringstream os;
                os << "f_statistic: transform '" << f.name << "' is not finite at ratio " << ratio;
                throw ValidationError(os.str());
            }
            acc += (nx / n) * (ny / n) * fv;
        }
    }
    return acc;
}

Transform shannon_transform() {
    return {"shannon", [](double u) { return u > 0.0 ? u * std::log(u) : 0.0; }};
}

Transform identity_transform() {
    return {"identity", [](double u) { return u; }};
}

// Real-valued wrappers ------------------------------------------------------

InfoValue entropy(const Eigen::Ref<const Vector>& x, const DiscretizationSpec& spec) {
    const auto dx = discretize(x, spec);
    return make_value(entropy(dx.index, dx.bins), spec, dx.index.size(), {&dx});
}

InfoValue mutual_information(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
                             const DiscretizationSpec& spec) {
    check_same_length(static_cast<std::size_t>(x.size()), static_cast<std::size_t>(y.size()), "mutual_information");
    const auto dx = discretize(x, spec);
    const auto dy = discretize(y, spec);
    auto out = make_value(mutual_information(dx.index, dx.bins, dy.index, dy.bins), spec, dx.index.size(), {&dx, &dy});
    if (x.size() < static_cast<Eigen::Index>(spec.bins) * spec.bins) {
        out.warnings.emplace_back("mutual_information: fewer samples than joint cells; estimate is biased upward");
    }
    return out;
}

InfoValue conditional_mi(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
                         const Eigen::Ref<const Vector>& z, const DiscretizationSpec& spec) {
    check_same_length(static_cast<std::size_t>(x.size()), static_cast<std::size_t>(y.size()), "conditional_mi");
    check_same_length(static_cast<std::size_t>(x.size()), static_cast<std::size_t>(z.size()), "conditional_mi");
    const auto dx = discretize(x, spec);
    const auto dy = discretize(y, spec);
    const auto dz = discretize(z, spec);
    return make_value(conditional_mi(dx.index, dx.bins, dy.index, dy.bins, dz.index, dz.bins), spec, dx.index.size(),
                      {&dx, &dy, &dz});
}

InfoValue transfer_entropy(const Eigen::Ref<const Vector>& source, const Eigen::Ref<const Vector>& target, int lag,
                           const DiscretizationSpec& spec) {
    check_same_length(static_cast<std::size_t>(source.size()), static_cast<std::size_t>(target.size()),
                      "transfer_entropy");
    if (lag < 1) throw ValidationError("transfer_entropy: lag must be >= 1");
    if (target.size() <= lag) throw ValidationError("transfer_entropy: series shorter than the lag");
    const auto ds = discretize(source, spec);
    const auto dt = discretize(target, spec);
    return make_value(transfer_entropy(ds.index, ds.bins, dt.index, dt.bins, lag), spec,
                      dt.index.size() - static_cast<std::size_t>(lag), {&ds, &dt});
}

InfoValue f_statistic(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y, const Transform& f,
                      const DiscretizationSpec& spec) {
    check_same_length(static_cast<std::size_t>(x.size()), static_cast<std::size_t>(y.size()), "f_statistic");
    const auto dx = discretize(x, spec);
    const auto dy = discretize(y, spec);
    return make_value(f_statistic(dx.index, dx.bins, dy.index, dy.bins, f), spec, dx.index.size(), {&dx, &dy});
}

LinearMetrics linear_metrics(const Eigen::Ref<const Vector>& obs, const Eigen::Ref<const Vector>& pred) {
    check_same_length(static_cast<std::size_t>(obs.size()), static_cast<std::size_t>(pred.size()), "linear_metrics");
    if (obs.size() < 2) throw ValidationError("linear_metrics: need at least two values");
    const Vector diff = pred - obs;
    LinearMetrics m;
    m.mse = diff.squaredNorm() / static_cast<double>(diff.size());
    m.mean_bias = diff.mean();
    const Vector co = obs.array() - obs.mean();
    const Vector cp = pred.array() - pred.mean();
    const double so = co.squaredNorm();
    const double sp = cp.squaredNorm();
    if (so > 0.0 && sp > 0.0) {
        m.pearson_r = std::clamp(co.dot(cp) / std::sqrt(so * sp), -1.0, 1.0);
    }
    return m;
}

// Permutation nulls ---------------------------------------------------------

std::vector<double> mi_shuffle_null(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
                                    const DiscretizationSpec& spec, int replicates, std::uint64_t seed,
                                    unsigned workers) {
    check_same_length(static_cast<std::size_t>(x.size()), static_cast<std::size_t>(y.size()), "mi_shuffle_null");
    const auto dx = discretize(x, spec);
    const auto dy = discretize(y, spec);
    std::vector<double> out(static_cast<std::size_t>(std::max(replicates, 0)));
    parallel_for(out.size(), workers, [&](std::size_t r) {
        std::mt19937_64 rng(derive_seed(seed, r));
        auto perm = dy.index;
        std::shuffle(perm.begin(), perm.end(), rng);
        out[r] = mutual_information(dx.index, dx.bins, perm, dy.bins);
    });
    return out;
}

std::vector<double> te_shuffle_null(const Eigen::Ref<const Vector>& source, const Eigen::Ref<const Vector>& target,
                                    int lag, const DiscretizationSpec& spec, int replicates, std::uint64_t seed,
                                    unsigned workers) {
    check_same_length(static_cast<std::size_t>(source.size()), static_cast<std::size_t>(target.size()),
                      "te_shuffle_null");
    const auto ds = discretize(source, spec);
    const auto dt = discretize(target, spec);
    std::vector<double> out(static_cast<std::size_t>(std::max(replicates, 0)));
    parallel_for(out.size(), workers, [&](std::size_t r) {
        std::mt19937_64 rng(derive_seed(seed, r));
        auto perm = ds.index;
        std::shuffle(perm.begin(), perm.end(), rng);
        out[r] = transfer_entropy(perm, ds.bins, dt.index, dt.bins, lag);
    });
    return out;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw ValidationError("percentile: no values");
    if (q < 0.0 || q > 100.0) throw ValidationError("percentile: q must be in [0, 100]");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

} // namespace infobench::info
