#include "infobench/regression.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace infobench::regression {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ValidationError(what);
}

// Limited-memory BFGS with Armijo backtracking. `evaluate` returns the
// objective and fills the gradient; `after_step` is called with the new
// iterate and returns false to stop.
template <typename Objective, typename Observer>
void minimize_lbfgs(Vector& theta, Objective&& evaluate, Observer&& after_step, int max_iterations,
                    int memory = 10) {
    Vector grad(theta.size());
    double f = evaluate(theta, grad);
    std::deque<Vector> s_hist, y_hist;
    std::deque<double> rho_hist;
    Vector next_grad(theta.size());
    bool first = true;

    for (int it = 0; it < max_iterations; ++it) {
        // two-loop recursion
        Vector q = grad;
        std::vector<double> alpha(s_hist.size());
        for (std::size_t i = s_hist.size(); i-- > 0;) {
            alpha[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha[i] * y_hist[i];
        }
        if (!s_hist.empty()) {
            q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        }
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alpha[i] - beta) * s_hist[i];
        }
        Vector direction = -q;
        double slope = grad.dot(direction);
        if (!(slope < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            direction = -grad;
            slope = -grad.squaredNorm();
        }
        if (slope == 0.0) return;

        double step = first ? std::min(1.0, 1.0 / std::sqrt(grad.squaredNorm())) : 1.0;
        Vector candidate;
        double f_new = 0.0;
        bool accepted = false;
        for (int tries = 0; tries < 40; ++tries) {
            candidate = theta + step * direction;
            f_new = evaluate(candidate, next_grad);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (s_hist.empty()) return;
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            continue;
        }
        first = false;
        Vector s = candidate - theta;
        Vector y = next_grad - grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        const double previous = f;
        theta = std::move(candidate);
        grad = next_grad;
        f = f_new;
        if (!after_step(theta, f)) return;
        if (std::abs(previous - f) <= 1e-14 * std::max(1.0, std::abs(f))) return;
    }
}

double mse(const Network& net, const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Vector>& y) {
    return (net.predict(x) - y).squaredNorm() / static_cast<double>(y.size());
}

Vector column_std(const Matrix& x, const Vector& mean) {
    Vector s(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double var = (x.col(j).array() - mean[j]).square().mean();
        s[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
}

std::string diverged_message(int member, int iteration, double loss) {
    std::ostringstream os;
    os << "train_regressor: loss diverged (network " << member << ", iteration " << iteration << ", loss " << loss
       << ")";
    return os.str();
}

// Normalized ranks, ties sharing their lowest rank.
Vector ranks(const Eigen::Ref<const Vector>& v) {
    const auto n = v.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    Vector r(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto i = order[static_cast<std::size_t>(k)];
        if (k > 0 && v[i] == v[order[static_cast<std::size_t>(k - 1)]]) {
            r[i] = r[order[static_cast<std::size_t>(k - 1)]];
        } else {
            r[i] = static_cast<double>(k) / static_cast<double>(n);
        }
    }
    return r;
}

} // namespace

// Lag embedding ---------------------------------------------------------------

LagEmbedding build_lag_matrix(const Eigen::Ref<const Vector>& precip, const Eigen::Ref<const Vector>& target, int lag) {
    return build_lag_matrix(precip, target, lag, Vector(), 0);
}

LagEmbedding build_lag_matrix(const Eigen::Ref<const Vector>& precip, const Eigen::Ref<const Vector>& target, int lag,
                              const Eigen::Ref<const Vector>& auxiliary, int auxiliary_stride) {
    require(lag >= 1, "build_lag_matrix: lag must be >= 1");
    require(precip.size() == target.size(), "build_lag_matrix: precip and target lengths differ");
    require(precip.size() > lag, "build_lag_matrix: record must be longer than the lag");
    const bool with_aux = auxiliary.size() > 0;
    if (with_aux) {
        require(auxiliary.size() == precip.size(), "build_lag_matrix: auxiliary length differs");
        require(auxiliary_stride >= 1, "build_lag_matrix: auxiliary stride must be >= 1");
    }
    const int aux_cols = with_aux ? (lag - 1) / auxiliary_stride + 1 : 0;
    const Eigen::Index n = precip.size();
    const Eigen::Index rows = n - lag + 1;

    LagEmbedding e;
    e.lag = lag;
    e.first_time = lag - 1;
    e.features.resize(rows, lag + aux_cols);
    e.targets = target.tail(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        e.features.row(r).head(lag) = precip.segment(r, lag).transpose();
        const Eigen::Index t = r + lag - 1;
        for (int a = 0; a < aux_cols; ++a) e.features(r, lag + a) = auxiliary[t - a * auxiliary_stride];
    }
    return e;
}

Split split_prefix(const LagEmbedding& embedding, Eigen::Index train_rows) {
    require(train_rows >= 1 && train_rows < embedding.rows(), "split: training rows out of range");
    Split s;
    s.train_rows = train_rows;
    s.eval_begin = train_rows + embedding.lag - 1;
    require(s.eval_begin < embedding.rows(), "split: no evaluation rows left after the gap");
    s.eval_rows = embedding.rows() - s.eval_begin;
    return s;
}

Split split_fraction(const LagEmbedding& embedding, double train_fraction) {
    require(train_fraction > 0.0 && train_fraction < 1.0, "split: fraction must be in (0, 1)");
    const auto rows = static_cast<Eigen::Index>(std::floor(train_fraction * static_cast<double>(embedding.rows())));
    return split_prefix(embedding, std::max<Eigen::Index>(rows, 1));
}

// Network -----------------------------------------------------------------------

void RegressorConfig::validate() const {
    require(hidden >= 1, "regressor: hidden units must be >= 1");
    require(max_epochs >= 1, "regressor: max_epochs must be >= 1");
    require(validation_fraction > 0.0 && validation_fraction < 1.0, "regressor: validation fraction must be in (0, 1)");
    require(learning_rate > 0.0, "regressor: learning rate must be > 0");
    require(momentum >= 0.0 && momentum < 1.0, "regressor: momentum must be in [0, 1)");
    require(patience >= 1, "regressor: patience must be >= 1");
    require(l2 >= 0.0, "regressor: l2 must be >= 0");
    require(ensemble >= 1, "regressor: ensemble must be >= 1");
    require(log_offset > 0.0, "regressor: log offset must be > 0");
}

Vector Network::flatten() const {
    Vector theta(parameter_count());
    Eigen::Index k = 0;
    theta.segment(k, w1.size()) = Eigen::Map<const Vector>(w1.data(), w1.size());
    k += w1.size();
    theta.segment(k, b1.size()) = b1;
    k += b1.size();
    theta.segment(k, w2.size()) = w2;
    k += w2.size();
    theta[k] = b2;
    return theta;
}

Network Network::unflatten(const Eigen::Ref<const Vector>& theta, Eigen::Index inputs, Eigen::Index hidden) {
    Network net;
    require(theta.size() == hidden * inputs + 2 * hidden + 1, "network: parameter vector has the wrong size");
    Eigen::Index k = 0;
    net.w1 = Eigen::Map<const Matrix>(theta.data() + k, hidden, inputs);
    k += hidden * inputs;
    net.b1 = theta.segment(k, hidden);
    k += hidden;
    net.w2 = theta.segment(k, hidden);
    k += hidden;
    net.b2 = theta[k];
    return net;
}

Network Network::random(Eigen::Index inputs, Eigen::Index hidden, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Network net;
    const double bound1 = std::sqrt(6.0 / static_cast<double>(inputs + hidden));
    const double bound2 = std::sqrt(6.0 / static_cast<double>(hidden + 1));
    std::uniform_real_distribution<double> u1(-bound1, bound1), u2(-bound2, bound2);
    net.w1 = Matrix::NullaryExpr(hidden, inputs, [&]() { return u1(rng); });
    net.b1 = Vector::NullaryExpr(hidden, [&]() { return u1(rng); });
    net.w2 = Vector::NullaryExpr(hidden, [&]() { return u2(rng); });
    net.b2 = u2(rng);
    return net;
}

Vector Network::predict(const Eigen::Ref<const Matrix>& x) const {
    const Matrix activation = ((w1 * x.transpose()).colwise() + b1).array().tanh();
    return (activation.transpose() * w2).array() + b2;
}

double loss_and_gradient(const Network& net, const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Vector>& y,
                         double l2, Vector* gradient) {
    const auto n = static_cast<double>(x.rows());
    const Matrix activation = ((net.w1 * x.transpose()).colwise() + net.b1).array().tanh();
    const Vector residual = ((activation.transpose() * net.w2).array() + net.b2).matrix() - y;
    const double penalty = 0.5 * l2 / n * (net.w1.squaredNorm() + net.w2.squaredNorm());
    const double loss = 0.5 * residual.squaredNorm() / n + penalty;
    if (gradient == nullptr) return loss;

    const Vector r = residual / n;
    const Matrix delta = (net.w2 * r.transpose()).cwiseProduct((1.0 - activation.array().square()).matrix());
    Network g;
    g.w1 = delta * x + (l2 / n) * net.w1;
    g.b1 = delta.rowwise().sum();
    g.w2 = activation * r + (l2 / n) * net.w2;
    g.b2 = r.sum();
    *gradient = g.flatten();
    return loss;
}

// Training ------------------------------------------------------------------------

namespace {

TrainingTrace fit_network(Network& net, const Matrix& x_fit, const Vector& y_fit, const Matrix& x_val,
                          const Vector& y_val, const RegressorConfig& config, int member) {
    TrainingTrace trace;
    const auto inputs = net.inputs();
    const auto hidden = net.hidden();
    Vector best = net.flatten();
    trace.best_validation_loss = mse(net, x_val, y_val);
    int iteration = 0;

    auto observe = [&](const Vector& theta, double loss) {
        ++iteration;
        if (!std::isfinite(loss)) throw ComputationError(diverged_message(member, iteration, loss));
        const double v = mse(Network::unflatten(theta, inputs, hidden), x_val, y_val);
        trace.validation_loss.push_back(v);
        if (v < trace.best_validation_loss) {
            trace.best_validation_loss = v;
            trace.best_iteration = iteration;
            best = theta;
        }
        if (iteration - trace.best_iteration >= config.patience) {
            trace.stopped_early = true;
            return false;
        }
        return true;
    };

    Vector theta = net.flatten();
    if (config.optimizer == Optimizer::lbfgs) {
        auto evaluate = [&](const Vector& th, Vector& grad) {
            return loss_and_gradient(Network::unflatten(th, inputs, hidden), x_fit, y_fit, config.l2, &grad);
        };
        minimize_lbfgs(theta, evaluate, observe, config.max_epochs);
    } else {
        Vector velocity = Vector::Zero(theta.size());
        Vector grad(theta.size());
        double rate = config.learning_rate;
        int since_backoff = 0;
        for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
            loss_and_gradient(Network::unflatten(theta, inputs, hidden), x_fit, y_fit, config.l2, &grad);
            velocity = config.momentum * velocity - rate * grad;
            theta += velocity;
            const double loss = loss_and_gradient(Network::unflatten(theta, inputs, hidden), x_fit, y_fit, config.l2,
                                                  nullptr);
            const int before = trace.best_iteration;
            if (!observe(theta, loss)) break;
            // geometric backoff after a validation stall
            if (trace.best_iteration != before) {
                since_backoff = 0;
            } else if (++since_backoff >= std::max(1, config.patience / 4)) {
                rate *= 0.5;
                velocity.setZero();
                since_backoff = 0;
            }
        }
    }
    trace.iterations = iteration;
    net = Network::unflatten(best, inputs, hidden);
    return trace;
}

} // namespace

Regressor train_regressor(const Eigen::Ref<const Matrix>& features, const Eigen::Ref<const Vector>& targets,
                          const RegressorConfig& config) {
    config.validate();
    require(features.rows() == targets.size(), "train_regressor: feature and target row counts differ");
    require(features.allFinite() && targets.allFinite(), "train_regressor: non-finite training data");
    const Eigen::Index rows = features.rows();
    const auto val_rows = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::floor(config.validation_fraction * static_cast<double>(rows))));
    const Eigen::Index fit_rows = rows - val_rows;
    require(fit_rows >= config.hidden + 2, "train_regressor: need at least hidden + 2 training rows");

    Regressor reg;
    reg.transform_ = config.target_transform;
    reg.log_offset_ = config.log_offset;
    Vector y = targets;
    if (config.target_transform == TargetTransform::log) {
        require((targets.array() > -config.log_offset).all(), "train_regressor: targets too small for log transform");
        y = (targets.array() + config.log_offset).log();
    }

    const Matrix x_fit_raw = features.topRows(fit_rows);
    reg.x_mean_ = x_fit_raw.colwise().mean().transpose();
    reg.x_scale_ = column_std(x_fit_raw, reg.x_mean_);
    reg.y_mean_ = y.head(fit_rows).mean();
    const double y_var = (y.head(fit_rows).array() - reg.y_mean_).square().mean();
    reg.y_scale_ = y_var > 0.0 ? std::sqrt(y_var) : 1.0;

    auto standardize = [&](const Matrix& x) {
        return Matrix(((x.rowwise() - reg.x_mean_.transpose()).array().rowwise() / reg.x_scale_.transpose().array()));
    };
    const Matrix x_fit = standardize(x_fit_raw);
    const Matrix x_val = standardize(features.bottomRows(val_rows));
    const Vector y_fit = (y.head(fit_rows).array() - reg.y_mean_) / reg.y_scale_;
    const Vector y_val = (y.tail(val_rows).array() - reg.y_mean_) / reg.y_scale_;

    for (int m = 0; m < config.ensemble; ++m) {
        Network net = Network::random(features.cols(), config.hidden, derive_seed(config.seed, static_cast<std::uint64_t>(m)));
        reg.traces_.push_back(fit_network(net, x_fit, y_fit, x_val, y_val, config, m));
        reg.networks_.push_back(std::move(net));
    }
    return reg;
}

Regressor train_regressor(const LagEmbedding& embedding, const RegressorConfig& config) {
    return train_regressor(embedding.features, embedding.targets, config);
}

Vector Regressor::predict(const Eigen::Ref<const Matrix>& features) const {
    require(!networks_.empty(), "regressor: not trained");
    require(features.cols() == x_mean_.size(), "regressor: feature width differs from training");
    const Matrix x = (features.rowwise() - x_mean_.transpose()).array().rowwise() / x_scale_.transpose().array();
    Vector z = Vector::Zero(features.rows());
    for (const auto& net : networks_) z += net.predict(x);
    z /= static_cast<double>(networks_.size());
    Vector y = z.array() * y_scale_ + y_mean_;
    if (transform_ == TargetTransform::log) y = y.array().exp() - log_offset_;
    return y;
}

// Benchmark statistics ------------------------------------------------------------

ConvergenceReport convergence_protocol(const LagEmbedding& embedding, const RegressorConfig& config,
                                       const std::vector<double>& fractions, const info::DiscretizationSpec& spec,
                                       int null_replicates, unsigned workers) {
    require(!fractions.empty(), "convergence_protocol: no fractions");
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        require(fractions[i] > 0.0 && fractions[i] < 1.0, "convergence_protocol: fractions must be in (0, 1)");
        require(i == 0 || fractions[i] > fractions[i - 1], "convergence_protocol: fractions must be ascending");
    }
    ConvergenceReport report;
    report.points.resize(fractions.size());
    std::vector<Vector> last_eval(2);

    parallel_for(fractions.size(), workers, [&](std::size_t i) {
        const double f = fractions[i];
        const Split split = split_fraction(embedding, f);
        Regressor reg;
        try {
            reg = train_regressor(embedding.features.topRows(split.train_rows),
                                  embedding.targets.head(split.train_rows), config);
        } catch (const ComputationError& e) {
            std::ostringstream os;
            os << e.what() << " [training fraction " << f << "]";
            throw ComputationError(os.str());
        }
        const Vector in_pred = reg.predict(embedding.features.topRows(split.train_rows));
        const Vector out_pred = reg.predict(embedding.features.middleRows(split.eval_begin, split.eval_rows));
        const Vector out_obs = embedding.targets.segment(split.eval_begin, split.eval_rows);
        auto& p = report.points[i];
        p.fraction = f;
        p.train_rows = split.train_rows;
        p.i_in_sample = info::mutual_information(embedding.targets.head(split.train_rows), in_pred, spec).value;
        p.i_out_sample = info::mutual_information(out_obs, out_pred, spec).value;
        p.relative_gap = p.i_out_sample > 0.0 ? std::abs(p.i_in_sample - p.i_out_sample) / p.i_out_sample
                                              : std::numeric_limits<double>::infinity();
        if (i + 1 == fractions.size()) {
            last_eval[0] = out_obs;
            last_eval[1] = out_pred;
        }
    });

    const auto null = info::mi_shuffle_null(last_eval[0], last_eval[1], spec, null_replicates,
                                            derive_seed(config.seed, 0xC0FFEE));
    report.noise_floor = info::percentile(null, 95.0);
    auto meets = [&](const ConvergencePoint& p) {
        return p.relative_gap < kConvergenceTolerance ||
               std::max(p.i_in_sample, p.i_out_sample) <= report.noise_floor;
    };
    for (const auto& p : report.points) {
        if (meets(p)) {
            report.convergence_fraction = p.fraction;
            break;
        }
    }
    report.converged = meets(report.points.back());
    return report;
}

MissingInfoReport missing_information(const Eigen::Ref<const Vector>& obs, const Eigen::Ref<const Vector>& model_pred,
                                      const Eigen::Ref<const Vector>& regression_pred,
                                      const info::DiscretizationSpec& spec, int null_replicates, std::uint64_t seed) {
    require(obs.size() == model_pred.size() && obs.size() == regression_pred.size(),
            "missing_information: length mismatch");
    MissingInfoReport rep;
    rep.i_data = info::mutual_information(obs, regression_pred, spec);
    rep.i_model = info::mutual_information(obs, model_pred, spec);
    rep.eps_hat = rep.i_data.value - rep.i_model.value;
    rep.samples = static_cast<std::size_t>(obs.size());

    // Paired permutation null: under "the model carries as much information
    // as the regression" the two (rank-transformed) predictions are
    // exchangeable day by day.
    if (null_replicates > 0) {
        const Vector rm = ranks(model_pred);
        const Vector rr = ranks(regression_pred);
        std::vector<double> diffs(static_cast<std::size_t>(null_replicates));
        for (int r = 0; r < null_replicates; ++r) {
            std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
            std::bernoulli_distribution flip(0.5);
            Vector a = rr, b = rm;
            for (Eigen::Index t = 0; t < a.size(); ++t) {
                if (flip(rng)) std::swap(a[t], b[t]);
            }
            diffs[static_cast<std::size_t>(r)] =
                info::mutual_information(obs, a, spec).value - info::mutual_information(obs, b, spec).value;
        }
        rep.threshold = info::percentile(diffs, 95.0);
    }
    rep.reject = rep.eps_hat > rep.threshold;
    return rep;
}

double conditional_entropy(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b,
                           const info::DiscretizationSpec& spec) {
    require(a.size() == b.size(), "conditional_entropy: length mismatch");
    const auto da = info::discretize(a, spec);
    const auto db = info::discretize(b, spec);
    const std::span<const int> cols[] = {da.index, db.index};
    const auto joint = info::JointHistogram::count(cols, {da.bins, db.bins});
    return std::max(0.0, info::entropy(joint) - info::entropy(joint.marginal({1})));
}

TrueInformation true_missing_information(const Eigen::Ref<const Vector>& obs,
                                         const Eigen::Ref<const Vector>& truth_on_perturbed,
                                         const Eigen::Ref<const Vector>& model_pred,
                                         const info::DiscretizationSpec& spec) {
    require(obs.size() == truth_on_perturbed.size() && obs.size() == model_pred.size(),
            "true_missing_information: length mismatch");
    TrueInformation t;
    t.h_given_data = conditional_entropy(obs, truth_on_perturbed, spec);
    t.h_given_model = conditional_entropy(obs, model_pred, spec);
    t.i_data = info::mutual_information(obs, truth_on_perturbed, spec).value;
    t.i_model = info::mutual_information(obs, model_pred, spec).value;
    t.epsilon = t.h_given_model - t.h_given_data;
    return t;
}

} // namespace infobench::regression
