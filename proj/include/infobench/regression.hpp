#pragma once

// Theory-free benchmark: a single-hidden-layer network regresses lagged
// forcing onto streamflow, and the information its out-of-sample
// predictions carry about the observations bounds what the forcing data
// hold. Comparing that with the information in a hypothesis model's
// predictions gives the missing-information statistic.

#include "infobench/core.hpp"
#include "infobench/info.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace infobench::regression {

/// Row i holds the forcing window ending at time i + lag - 1 and the
/// target at that time.
struct LagEmbedding {
    int lag = 90;
    Matrix features; // rows x (lag + auxiliary columns)
    Vector targets;
    Eigen::Index first_time = 0; // time index of row 0

    Eigen::Index rows() const { return features.rows(); }
    Eigen::Index time_of(Eigen::Index row) const { return first_time + row; }
};

/// Lagged-precipitation design matrix: exactly N - lag + 1 rows, row for
/// time t holds precip[t - lag + 1 .. t] (oldest first) and target[t].
LagEmbedding build_lag_matrix(const Eigen::Ref<const Vector>& precip, const Eigen::Ref<const Vector>& target, int lag);

/// Same, with samples of a second forcing (e.g. potential evaporation)
/// appended: auxiliary[t], auxiliary[t - stride], ... while still inside
/// the window.
LagEmbedding build_lag_matrix(const Eigen::Ref<const Vector>& precip, const Eigen::Ref<const Vector>& target, int lag,
                              const Eigen::Ref<const Vector>& auxiliary, int auxiliary_stride);

/// Time-respecting split. Training rows are a prefix; evaluation rows
/// start lag - 1 rows after the prefix so no evaluation window overlaps
/// forcing seen in training.
struct Split {
    Eigen::Index train_rows = 0;
    Eigen::Index eval_begin = 0;
    Eigen::Index eval_rows = 0;
};

Split split_prefix(const LagEmbedding& embedding, Eigen::Index train_rows);
Split split_fraction(const LagEmbedding& embedding, double train_fraction);

enum class Optimizer { lbfgs, momentum };
enum class TargetTransform { none, log };

struct RegressorConfig {
    int hidden = 20;
    int max_epochs = 3000;
    double learning_rate = 0.05; // momentum optimizer only
    double momentum = 0.9;       // momentum optimizer only
    int patience = 60;           // iterations without validation improvement
    double validation_fraction = 0.1;
    double l2 = 1e-3;
    int ensemble = 1;            // independently initialized networks, averaged
    Optimizer optimizer = Optimizer::lbfgs;
    TargetTransform target_transform = TargetTransform::none;
    double log_offset = 0.01;    // log(y + offset) when target_transform == log
    std::uint64_t seed = 1;

    void validate() const;
};

/// y = w2 . tanh(W1 x + b1) + b2 on standardized inputs and targets.
struct Network {
    Matrix w1; // hidden x inputs
    Vector b1;
    Vector w2;
    double b2 = 0.0;

    Eigen::Index inputs() const { return w1.cols(); }
    Eigen::Index hidden() const { return w1.rows(); }
    Eigen::Index parameter_count() const { return w1.size() + b1.size() + w2.size() + 1; }

    Vector flatten() const;
    static Network unflatten(const Eigen::Ref<const Vector>& theta, Eigen::Index inputs, Eigen::Index hidden);

    /// Glorot-uniform initialization.
    static Network random(Eigen::Index inputs, Eigen::Index hidden, std::uint64_t seed);

    Vector predict(const Eigen::Ref<const Matrix>& x) const;
};

/// 0.5 mean squared error + 0.5 l2 |weights|^2 / rows, and its gradient
/// with respect to the flattened parameters.
double loss_and_gradient(const Network& net, const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Vector>& y,
                         double l2, Vector* gradient);

struct TrainingTrace {
    int iterations = 0;
    int best_iteration = 0;
    double best_validation_loss = 0.0;
    std::vector<double> validation_loss; // per iteration
    bool stopped_early = false;
};

/// Fitted regressor: standardization plus one or more networks.
class Regressor {
public:
    Vector predict(const Eigen::Ref<const Matrix>& features) const;

    const std::vector<Network>& networks() const { return networks_; }
    const std::vector<TrainingTrace>& traces() const { return traces_; }

private:
    friend Regressor train_regressor(const Eigen::Ref<const Matrix>&, const Eigen::Ref<const Vector>&,
                                     const RegressorConfig&);
    Vector x_mean_, x_scale_;
    double y_mean_ = 0.0, y_scale_ = 1.0;
    TargetTransform transform_ = TargetTransform::none;
    double log_offset_ = 0.0;
    std::vector<Network> networks_;
    std::vector<TrainingTrace> traces_;
};

/// Trains on the given rows. The last validation_fraction of them (in time
/// order) is held out for early stopping; the weights with the lowest
/// validation loss are kept. Throws ComputationError if the loss diverges.
Regressor train_regressor(const Eigen::Ref<const Matrix>& features, const Eigen::Ref<const Vector>& targets,
                          const RegressorConfig& config);
Regressor train_regressor(const LagEmbedding& embedding, const RegressorConfig& config);

struct ConvergencePoint {
    double fraction = 0.0;
    Eigen::Index train_rows = 0;
    double i_in_sample = 0.0;
    double i_out_sample = 0.0;
    double relative_gap = 0.0;
};

struct ConvergenceReport {
    std::vector<ConvergencePoint> points;
    double noise_floor = 0.0; // 95th percentile of the out-of-sample shuffle null
    bool converged = false;
    std::optional<double> convergence_fraction; // first fraction meeting the criterion
};

/// Relative gap threshold between in- and out-of-sample information.
inline constexpr double kConvergenceTolerance = 0.05;

/// Trains on growing prefixes and compares in- and out-of-sample
/// I(z_y; r(z_u)). A point meets the criterion when the relative gap is
/// below 5%, or when the absolute gap is inside the shuffle-null noise
/// floor (both statistics indistinguishable from zero information).
ConvergenceReport convergence_protocol(const LagEmbedding& embedding, const RegressorConfig& config,
                                       const std::vector<double>& fractions,
                                       const info::DiscretizationSpec& spec = info::DiscretizationSpec::pairwise(),
                                       int null_replicates = 100, unsigned workers = 1);

struct MissingInfoReport {
    info::InfoValue i_data;  // I(z_y; r(z_u))
    info::InfoValue i_model; // I(z_y; model prediction)
    double eps_hat = 0.0;    // i_data - i_model
    double threshold = 0.0;  // 95th percentile of the paired permutation null
    bool reject = false;     // eps_hat > threshold: model improvable from the data
    std::size_t samples = 0;
};

/// All three series must already be restricted to evaluation rows.
MissingInfoReport missing_information(const Eigen::Ref<const Vector>& obs, const Eigen::Ref<const Vector>& model_pred,
                                      const Eigen::Ref<const Vector>& regression_pred,
                                      const info::DiscretizationSpec& spec = info::DiscretizationSpec::pairwise(),
                                      int null_replicates = 100, std::uint64_t seed = 1);

/// Information statistics from runs of the known true system.
struct TrueInformation {
    double h_given_data = 0.0;  // H(z_y | z_u), via the truth run on the perturbed forcing
    double h_given_model = 0.0; // H(z_y | model prediction)
    double i_data = 0.0;
    double i_model = 0.0;
    double epsilon = 0.0;       // h_given_model - h_given_data
};

TrueInformation true_missing_information(const Eigen::Ref<const Vector>& obs,
                                         const Eigen::Ref<const Vector>& truth_on_perturbed,
                                         const Eigen::Ref<const Vector>& model_pred,
                                         const info::DiscretizationSpec& spec = info::DiscretizationSpec::pairwise());

/// H(a | b) from a shared two-variable histogram.
double conditional_entropy(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b,
                           const info::DiscretizationSpec& spec = info::DiscretizationSpec::pairwise());

} // namespace infobench::regression
