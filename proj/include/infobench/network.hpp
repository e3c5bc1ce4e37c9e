#pragma once

// HyMod as a directed network of phenomenological variables: ensembles of
// node trajectories, particle-filter assimilation of streamflow, system
// identification by conditional-expectation tables, and per-edge transfer
// entropy before and after assimilation.

#include "infobench/core.hpp"
#include "infobench/dynamics.hpp"
#include "infobench/info.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace infobench::network {

enum class NodeRole { forcing, state, output };

struct Node {
    std::string name;
    NodeRole role = NodeRole::state;
};

struct Edge {
    int source = 0;
    int target = 0;
};

/// Edges describe information flow during one integration step. A forcing
/// source enters the step it drives; a state source contributes its value
/// from the start of the step.
struct NetworkSpec {
    std::vector<Node> nodes;
    std::vector<Edge> edges;

    int size() const { return static_cast<int>(nodes.size()); }
    int index_of(const std::string& name) const; // -1 when absent
    bool has_edge(const std::string& source, const std::string& target) const;
    std::vector<int> parents(int node) const;
    std::string edge_name(const Edge& e) const;
    /// Throws ValidationError on dangling endpoints, self loops or a cycle.
    void validate() const;
};

/// Nodes u^p, u^e, x_s, x^q_1..n_quick, x^s_1..n_slow, y^q in that order.
NetworkSpec build_hymod_network(int n_quick = 3, int n_slow = 1);

/// Node values of a HyMod step: the forcing that drove it, the end-of-step
/// state and the streamflow.
Vector node_values(const dynamics::ModelState& state, double p, double pet, double streamflow);
dynamics::ModelState state_from_nodes(const Eigen::Ref<const Vector>& values, int n_quick, int n_slow);

/// values[t] is members x nodes at step t. weights[t] are the normalized
/// importance weights after step t. ancestors[t][j] is the row of
/// values[t - 1] member j was propagated from (ancestors[0] is the
/// identity).
struct TrajectoryEnsemble {
    NetworkSpec network;
    std::vector<Matrix> values;
    std::vector<Vector> weights;
    std::vector<std::vector<int>> ancestors;
    std::vector<std::string> events;

    Eigen::Index steps() const { return static_cast<Eigen::Index>(values.size()); }
    Eigen::Index members() const { return values.empty() ? 0 : values.front().rows(); }
    /// Weighted ensemble mean of one node per step.
    Vector mean(int node) const;
    /// Weighted mean of every node at one step.
    Vector mean_at(Eigen::Index step) const;
};

struct EnsembleConfig {
    int members = 200;
    double param_jitter = 0.05; // relative half-width of uniform multiplicative jitter
    double state_jitter = 0.05; // same, on the initial stores
    std::uint64_t seed = 1;

    void validate() const;
};

/// Member j runs HyMod with jittered parameters and initial state; no
/// weighting, every node recorded every step.
TrajectoryEnsemble record_trajectories(const dynamics::HymodParams& params, const dynamics::Forcing& forcing,
                                       const dynamics::ModelState& initial, const EnsembleConfig& config);

/// Parameters and initial state of member j, as drawn by
/// record_trajectories and assimilate.
dynamics::HymodParams member_parameters(const dynamics::HymodParams& params, const EnsembleConfig& config, int j);
dynamics::ModelState member_initial_state(const dynamics::HymodParams& params, const dynamics::ModelState& initial,
                                          const EnsembleConfig& config, int j);

struct AssimilationConfig {
    int members = 200;
    double sigma_obs = 1.0;        // mm
    double resample_trigger = 0.5; // resample when ESS < trigger * members
    double process_noise = 0.05;   // relative std of multiplicative lognormal noise on every store per step
    double param_jitter = 0.05;
    double state_jitter = 0.05;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Systematic resampling from normalized weights with offset u in [0, 1).
std::vector<int> systematic_resample(const Eigen::Ref<const Vector>& weights, double u);

/// Sequential importance resampling of streamflow observations.
TrajectoryEnsemble assimilate(const dynamics::HymodParams& params, const dynamics::Forcing& forcing,
                              const dynamics::ModelState& initial, const Eigen::Ref<const Vector>& obs,
                              const AssimilationConfig& config);

/// Weighted draws of (values at t - lag, values at t) along particle
/// lineages. Each step contributes `members` draws, selected by the weights
/// at t + smoothing_lag (fixed-lag smoothing, clipped at the record end) and
/// traced back through the ancestry.
struct TransitionSample {
    Matrix before;
    Matrix after;
    std::vector<Eigen::Index> step; // t of each row
};

TransitionSample transition_pairs(const TrajectoryEnsemble& ensemble, int lag, int smoothing_lag, std::uint64_t seed);

/// Binned conditional expectation E[y | x] over up to three inputs, with
/// quantile bins per input and multilinear interpolation between bin
/// centres (held constant beyond the outer centres). Cells without samples
/// take the fallback value.
class ConditionalTable {
public:
    static ConditionalTable fit(const Eigen::Ref<const Matrix>& inputs, const Eigen::Ref<const Vector>& target,
                                int bins, double fallback = 0.0);

    double operator()(const Eigen::Ref<const Vector>& x) const;

    int dims() const { return static_cast<int>(centres_.size()); }
    int cells() const { return static_cast<int>(values_.size()); }
    int empty_cells() const { return empty_; }

private:
    std::vector<std::vector<double>> centres_; // per input, per bin
    std::vector<double> values_;
    std::vector<int> strides_;
    int empty_ = 0;
};

struct IdentifyConfig {
    int bins = 8;
    int smoothing_lag = 5;
    std::uint64_t seed = 1;
};

/// HyMod network whose per-node maps are the prior step plus a correction
/// table E[node - prior map | node inputs] fitted on posterior transitions.
/// A node's inputs are its own start-of-step value (states only), its
/// forcing parents at the step and its state parents at the start of the
/// step.
struct IdentifiedModel {
    dynamics::HymodParams prior;
    NetworkSpec network;
    std::vector<int> corrected_nodes;
    std::vector<std::vector<int>> inputs; // per corrected node
    std::vector<ConditionalTable> tables;

    int fallback_cells() const;
    int total_cells() const;
    /// One identified step; returns the new node values. `base` replaces
    /// the prior parameters in the underlying HyMod step.
    Vector step(const Eigen::Ref<const Vector>& previous_nodes, double p, double pet) const;
    Vector step(const Eigen::Ref<const Vector>& previous_nodes, double p, double pet,
                const dynamics::HymodParams& base) const;
};

IdentifiedModel identify_system(const TrajectoryEnsemble& posterior, const dynamics::HymodParams& prior,
                                const IdentifyConfig& config = {});

/// Forward run of the identified model from `initial` over the first
/// `horizon` days of `forcing`.
Vector predict_with_identified(const IdentifiedModel& model, const dynamics::Forcing& forcing,
                               const dynamics::ModelState& initial, Eigen::Index horizon);

/// Ensemble of identified-model runs with the same member parameter and
/// initial-state jitter as record_trajectories.
TrajectoryEnsemble record_identified(const IdentifiedModel& model, const dynamics::Forcing& forcing,
                                     const dynamics::ModelState& initial, const EnsembleConfig& config);

struct EdgeInfo {
    std::string source;
    std::string target;
    double te = 0.0;
};

/// TE along every edge, pooling ensemble members: I(target_t; source_s |
/// target_{t-lag}) with s = t - lag for state sources and s = t - lag + 1
/// for forcing sources.
std::vector<EdgeInfo> edge_transfer_entropy(const TrajectoryEnsemble& ensemble, int lag,
                                            const info::DiscretizationSpec& spec = info::DiscretizationSpec::triple(),
                                            int smoothing_lag = 5, std::uint64_t seed = 1, unsigned workers = 1);

struct EdgeDifference {
    std::string source;
    std::string target;
    double te_prior = 0.0;
    double te_posterior = 0.0;
    double abs_diff = 0.0;
};

/// Per-edge |posterior - prior|, sorted by descending difference.
std::vector<EdgeDifference> te_difference_report(const std::vector<EdgeInfo>& prior,
                                                 const std::vector<EdgeInfo>& posterior);

} // namespace infobench::network
