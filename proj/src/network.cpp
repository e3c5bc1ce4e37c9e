#include "infobench/network.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>
#include <random>

namespace infobench::network {

using dynamics::Forcing;
using dynamics::HymodParams;
using dynamics::ModelState;

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ValidationError(what);
}

constexpr int kPrecip = 0;
constexpr int kPet = 1;
constexpr int kSoil = 2;

HymodParams jitter(const HymodParams& p, double width, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(1.0 - width, 1.0 + width);
    HymodParams q = p;
    q.c_max = p.c_max * u(rng);
    q.b_exp = std::min(10.0, p.b_exp * u(rng));
    q.alpha = std::min(1.0, p.alpha * u(rng));
    q.k_quick = std::min(1.0, p.k_quick * u(rng));
    q.k_slow = std::min(1.0, p.k_slow * u(rng));
    return q;
}

ModelState jitter(const ModelState& s, double width, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(1.0 - width, 1.0 + width);
    ModelState out = s;
    out.soil_store *= u(rng);
    for (Eigen::Index i = 0; i < out.tank_stores.size(); ++i) out.tank_stores[i] *= u(rng);
    return out;
}

std::vector<int> identity(Eigen::Index n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    std::iota(v.begin(), v.end(), 0);
    return v;
}

// Member setup shared by the prior ensemble and the filter so both start
// from the same parameter and state draws.
void init_members(const HymodParams& params, const ModelState& initial, int members, double param_jitter,
                  double state_jitter, std::uint64_t seed, std::vector<HymodParams>& ps, std::vector<ModelState>& ss) {
    ps.resize(static_cast<std::size_t>(members));
    ss.resize(static_cast<std::size_t>(members));
    for (int j = 0; j < members; ++j) {
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
        ps[static_cast<std::size_t>(j)] = jitter(params, param_jitter, rng);
        ss[static_cast<std::size_t>(j)] = jitter(initial, state_jitter, rng);
    }
}

void check_initial(const HymodParams& params, const ModelState& initial) {
    params.validate();
    require(initial.tank_stores.size() == params.n_quick + params.n_slow,
            "network: initial state does not match the tank counts");
}

} // namespace

// Network structure ---------------------------------------------------------------

int NetworkSpec::index_of(const std::string& name) const {
    for (int i = 0; i < size(); ++i) {
        if (nodes[static_cast<std::size_t>(i)].name == name) return i;
    }
    return -1;
}

bool NetworkSpec::has_edge(const std::string& source, const std::string& target) const {
    const int s = index_of(source), t = index_of(target);
    return std::any_of(edges.begin(), edges.end(), [&](const Edge& e) { return e.source == s && e.target == t; });
}

std::vector<int> NetworkSpec::parents(int node) const {
    std::vector<int> out;
    for (const auto& e : edges) {
        if (e.target == node) out.push_back(e.source);
    }
    return out;
}

std::string NetworkSpec::edge_name(const Edge& e) const {
    return nodes[static_cast<std::size_t>(e.source)].name + "->" + nodes[static_cast<std::size_t>(e.target)].name;
}

void NetworkSpec::validate() const {
    std::vector<int> indegree(nodes.size(), 0);
    for (const auto& e : edges) {
        require(e.source >= 0 && e.source < size() && e.target >= 0 && e.target < size(),
                "network: edge endpoint does not exist");
        require(e.source != e.target, "network: self loop on " + nodes[static_cast<std::size_t>(e.source)].name);
        ++indegree[static_cast<std::size_t>(e.target)];
    }
    std::queue<int> ready;
    for (int i = 0; i < size(); ++i) {
        if (indegree[static_cast<std::size_t>(i)] == 0) ready.push(i);
    }
    int seen = 0;
    while (!ready.empty()) {
        const int n = ready.front();
        ready.pop();
        ++seen;
        for (const auto& e : edges) {
            if (e.source == n && --indegree[static_cast<std::size_t>(e.target)] == 0) ready.push(e.target);
        }
    }
    require(seen == size(), "network: edges form a cycle within one step");
}

NetworkSpec build_hymod_network(int n_quick, int n_slow) {
    require(n_quick >= 1 && n_slow >= 1, "network: need at least one quick and one slow tank");
    NetworkSpec net;
    net.nodes.push_back({"u^p", NodeRole::forcing});
    net.nodes.push_back({"u^e", NodeRole::forcing});
    net.nodes.push_back({"x_s", NodeRole::state});
    for (int i = 1; i <= n_quick; ++i) net.nodes.push_back({"x^q_" + std::to_string(i), NodeRole::state});
    for (int i = 1; i <= n_slow; ++i) net.nodes.push_back({"x^s_" + std::to_string(i), NodeRole::state});
    net.nodes.push_back({"y^q", NodeRole::output});

    const int q0 = 3, s0 = 3 + n_quick, y = net.size() - 1;
    net.edges.push_back({kPrecip, kSoil});
    net.edges.push_back({kPet, kSoil});
    net.edges.push_back({kSoil, q0});
    net.edges.push_back({kSoil, s0});
    for (int i = 0; i + 1 < n_quick; ++i) net.edges.push_back({q0 + i, q0 + i + 1});
    for (int i = 0; i + 1 < n_slow; ++i) net.edges.push_back({s0 + i, s0 + i + 1});
    net.edges.push_back({q0 + n_quick - 1, y});
    net.edges.push_back({s0 + n_slow - 1, y});
    net.validate();
    return net;
}

Vector node_values(const ModelState& state, double p, double pet, double streamflow) {
    const Eigen::Index tanks = state.tank_stores.size();
    Vector v(4 + tanks);
    v[kPrecip] = p;
    v[kPet] = pet;
    v[kSoil] = state.soil_store;
    v.segment(3, tanks) = state.tank_stores;
    v[3 + tanks] = streamflow;
    return v;
}

ModelState state_from_nodes(const Eigen::Ref<const Vector>& values, int n_quick, int n_slow) {
    require(values.size() == 4 + n_quick + n_slow, "network: node vector does not match the tank counts");
    ModelState s;
    s.soil_store = values[kSoil];
    s.tank_stores = values.segment(3, n_quick + n_slow);
    return s;
}

// Ensembles ------------------------------------------------------------------------

Vector TrajectoryEnsemble::mean(int node) const {
    Vector m(steps());
    for (Eigen::Index t = 0; t < steps(); ++t) {
        m[t] = weights[static_cast<std::size_t>(t)].dot(values[static_cast<std::size_t>(t)].col(node));
    }
    return m;
}

Vector TrajectoryEnsemble::mean_at(Eigen::Index step) const {
    const auto t = static_cast<std::size_t>(step);
    return values[t].transpose() * weights[t];
}

void EnsembleConfig::validate() const {
    require(members >= 1, "ensemble: members must be >= 1");
    require(param_jitter >= 0.0 && param_jitter < 1.0, "ensemble: parameter jitter must be in [0, 1)");
    require(state_jitter >= 0.0 && state_jitter < 1.0, "ensemble: state jitter must be in [0, 1)");
}

TrajectoryEnsemble record_trajectories(const HymodParams& params, const Forcing& forcing, const ModelState& initial,
                                       const EnsembleConfig& config) {
    config.validate();
    forcing.validate();
    check_initial(params, initial);
    std::vector<HymodParams> ps;
    std::vector<ModelState> ss;
    init_members(params, initial, config.members, config.param_jitter, config.state_jitter, config.seed, ps, ss);

    TrajectoryEnsemble ens;
    ens.network = build_hymod_network(params.n_quick, params.n_slow);
    const Eigen::Index n = forcing.size();
    const Vector uniform = Vector::Constant(config.members, 1.0 / config.members);
    ens.values.assign(static_cast<std::size_t>(n), Matrix(config.members, ens.network.size()));
    ens.weights.assign(static_cast<std::size_t>(n), uniform);
    ens.ancestors.assign(static_cast<std::size_t>(n), identity(config.members));
    for (int j = 0; j < config.members; ++j) {
        ModelState s = ss[static_cast<std::size_t>(j)];
        for (Eigen::Index t = 0; t < n; ++t) {
            auto r = dynamics::step_hymod(s, ps[static_cast<std::size_t>(j)], forcing.precip[t], forcing.pet[t]);
            s = r.state;
            ens.values[static_cast<std::size_t>(t)].row(j) =
                node_values(s, forcing.precip[t], forcing.pet[t], r.streamflow).transpose();
        }
    }
    return ens;
}

HymodParams member_parameters(const HymodParams& params, const EnsembleConfig& config, int j) {
    std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(j)));
    return jitter(params, config.param_jitter, rng);
}

ModelState member_initial_state(const HymodParams& params, const ModelState& initial, const EnsembleConfig& config,
                                int j) {
    std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(j)));
    jitter(params, config.param_jitter, rng);
    return jitter(initial, config.state_jitter, rng);
}

void AssimilationConfig::validate() const {
    require(members >= 10, "assimilation: members must be >= 10");
    require(sigma_obs > 0.0, "assimilation: sigma_obs must be > 0");
    require(resample_trigger >= 0.0 && resample_trigger <= 1.0, "assimilation: resample trigger must be in [0, 1]");
    require(process_noise >= 0.0, "assimilation: process noise must be >= 0");
    require(param_jitter >= 0.0 && param_jitter < 1.0, "assimilation: parameter jitter must be in [0, 1)");
    require(state_jitter >= 0.0 && state_jitter < 1.0, "assimilation: state jitter must be in [0, 1)");
}

std::vector<int> systematic_resample(const Eigen::Ref<const Vector>& weights, double u) {
    require(u >= 0.0 && u < 1.0, "systematic_resample: offset must be in [0, 1)");
    const Eigen::Index m = weights.size();
    std::vector<int> out(static_cast<std::size_t>(m));
    double cumulative = weights[0];
    Eigen::Index j = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double pos = (u + static_cast<double>(i)) / static_cast<double>(m);
        while (pos >= cumulative && j + 1 < m) cumulative += weights[++j];
        out[static_cast<std::size_t>(i)] = static_cast<int>(j);
    }
    return out;
}

TrajectoryEnsemble assimilate(const HymodParams& params, const Forcing& forcing, const ModelState& initial,
                              const Eigen::Ref<const Vector>& obs, const AssimilationConfig& config) {
    config.validate();
    forcing.validate();
    check_initial(params, initial);
    require(obs.size() == forcing.size(), "assimilate: observations and forcing differ in length");
    const int m = config.members;
    std::vector<HymodParams> ps, next_ps(static_cast<std::size_t>(m));
    std::vector<ModelState> ss, next_ss(static_cast<std::size_t>(m));
    init_members(params, initial, m, config.param_jitter, config.state_jitter, config.seed, ps, ss);

    TrajectoryEnsemble ens;
    ens.network = build_hymod_network(params.n_quick, params.n_slow);
    const Eigen::Index n = forcing.size();
    ens.values.reserve(static_cast<std::size_t>(n));
    ens.weights.reserve(static_cast<std::size_t>(n));
    ens.ancestors.reserve(static_cast<std::size_t>(n));

    const double sig = config.process_noise;
    std::vector<int> parents = identity(m);
    Vector carried = Vector::Zero(m); // log weights carried into the step
    for (Eigen::Index t = 0; t < n; ++t) {
        const std::uint64_t step_seed = derive_seed(config.seed ^ 0x5eedf17e5ULL, static_cast<std::uint64_t>(t));
        Matrix values(m, ens.network.size());
        Vector logw(m);
        for (int j = 0; j < m; ++j) {
            const auto parent = static_cast<std::size_t>(parents[static_cast<std::size_t>(j)]);
            const auto& p = ps[parent];
            auto r = dynamics::step_hymod(ss[parent], p, forcing.precip[t], forcing.pet[t]);
            if (sig > 0.0) {
                std::mt19937_64 rng(derive_seed(step_seed, static_cast<std::uint64_t>(j)));
                std::normal_distribution<double> z(0.0, 1.0);
                r.state.soil_store =
                    std::min(r.state.soil_store * std::exp(sig * z(rng) - 0.5 * sig * sig), p.max_soil_storage());
                for (Eigen::Index i = 0; i < r.state.tank_stores.size(); ++i) {
                    r.state.tank_stores[i] *= std::exp(sig * z(rng) - 0.5 * sig * sig);
                }
            }
            next_ps[static_cast<std::size_t>(j)] = p;
            next_ss[static_cast<std::size_t>(j)] = r.state;
            values.row(j) = node_values(r.state, forcing.precip[t], forcing.pet[t], r.streamflow).transpose();
            double ll = 0.0;
            if (std::isfinite(obs[t])) {
                const double z = (obs[t] - r.streamflow) / config.sigma_obs;
                ll = -0.5 * z * z;
            }
            logw[j] = carried[static_cast<Eigen::Index>(parent)] + ll;
        }
        const double top = logw.maxCoeff();
        Vector w;
        if (!std::isfinite(top)) {
            w = Vector::Constant(m, 1.0 / m);
            ens.events.push_back("step " + std::to_string(t) + ": weights underflowed, reset to uniform");
        } else {
            w = (logw.array() - top).exp();
            w /= w.sum();
        }
        ens.values.push_back(std::move(values));
        ens.weights.push_back(w);
        ens.ancestors.push_back(parents);
        std::swap(ps, next_ps);
        std::swap(ss, next_ss);

        const double ess = 1.0 / w.squaredNorm();
        if (ess < config.resample_trigger * m) {
            std::mt19937_64 rng(derive_seed(step_seed, 0xffffffffULL));
            parents = systematic_resample(w, std::uniform_real_distribution<double>(0.0, 1.0)(rng));
            carried.setZero();
        } else {
            parents = identity(m);
            carried = w.array().log();
        }
    }
    return ens;
}

TransitionSample transition_pairs(const TrajectoryEnsemble& ens, int lag, int smoothing_lag, std::uint64_t seed) {
    require(lag >= 1, "transition_pairs: lag must be >= 1");
    require(smoothing_lag >= 0, "transition_pairs: smoothing lag must be >= 0");
    const Eigen::Index n = ens.steps();
    require(n > lag, "transition_pairs: record shorter than the lag");
    const Eigen::Index m = ens.members();
    const Eigen::Index rows = (n - lag) * m;
    TransitionSample out;
    out.before.resize(rows, ens.network.size());
    out.after.resize(rows, ens.network.size());
    out.step.resize(static_cast<std::size_t>(rows));
    Eigen::Index r = 0;
    for (Eigen::Index t = lag; t < n; ++t) {
        const Eigen::Index tau = std::min(n - 1, t + smoothing_lag);
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        auto idx = systematic_resample(ens.weights[static_cast<std::size_t>(tau)],
                                       std::uniform_real_distribution<double>(0.0, 1.0)(rng));
        for (Eigen::Index k = tau; k > t; --k) {
            for (auto& i : idx) i = ens.ancestors[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
        }
        std::vector<int> back = idx;
        for (Eigen::Index k = t; k > t - lag; --k) {
            for (auto& i : back) i = ens.ancestors[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
        }
        for (Eigen::Index j = 0; j < m; ++j, ++r) {
            out.after.row(r) = ens.values[static_cast<std::size_t>(t)].row(idx[static_cast<std::size_t>(j)]);
            out.before.row(r) = ens.values[static_cast<std::size_t>(t - lag)].row(back[static_cast<std::size_t>(j)]);
            out.step[static_cast<std::size_t>(r)] = t;
        }
    }
    return out;
}

// Conditional tables ------------------------------------------------------------------

ConditionalTable ConditionalTable::fit(const Eigen::Ref<const Matrix>& inputs, const Eigen::Ref<const Vector>& target,
                                       int bins, double fallback) {
    require(inputs.rows() == target.size(), "conditional table: inputs and target differ in length");
    require(inputs.cols() >= 1 && inputs.cols() <= 3, "conditional table: one to three inputs");
    require(bins >= 2, "conditional table: bins must be >= 2");
    ConditionalTable table;
    const auto dims = static_cast<std::size_t>(inputs.cols());
    std::vector<info::Discretized> cols;
    int cells = 1;
    table.strides_.resize(dims);
    for (std::size_t d = 0; d < dims; ++d) {
        cols.push_back(info::discretize(inputs.col(static_cast<Eigen::Index>(d)), {info::BinScheme::quantile, bins}));
        const int b = cols.back().bins;
        std::vector<double> sum(static_cast<std::size_t>(b), 0.0);
        std::vector<int> count(static_cast<std::size_t>(b), 0);
        for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
            const auto k = static_cast<std::size_t>(cols.back().index[static_cast<std::size_t>(i)]);
            sum[k] += inputs(i, static_cast<Eigen::Index>(d));
            ++count[k];
        }
        std::vector<double> centres(static_cast<std::size_t>(b));
        for (std::size_t k = 0; k < centres.size(); ++k) centres[k] = sum[k] / std::max(count[k], 1);
        table.centres_.push_back(std::move(centres));
        table.strides_[d] = cells;
        cells *= b;
    }
    std::vector<double> sum(static_cast<std::size_t>(cells), 0.0);
    std::vector<int> count(static_cast<std::size_t>(cells), 0);
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
        int cell = 0;
        for (std::size_t d = 0; d < dims; ++d) cell += cols[d].index[static_cast<std::size_t>(i)] * table.strides_[d];
        sum[static_cast<std::size_t>(cell)] += target[i];
        ++count[static_cast<std::size_t>(cell)];
    }
    table.values_.resize(static_cast<std::size_t>(cells));
    for (std::size_t c = 0; c < table.values_.size(); ++c) {
        if (count[c] > 0) {
            table.values_[c] = sum[c] / count[c];
        } else {
            table.values_[c] = fallback;
            ++table.empty_;
        }
    }
    return table;
}

double ConditionalTable::operator()(const Eigen::Ref<const Vector>& x) const {
    require(x.size() == dims(), "conditional table: wrong input width");
    int lo[3] = {0, 0, 0};
    double frac[3] = {0, 0, 0};
    for (int d = 0; d < dims(); ++d) {
        const auto& c = centres_[static_cast<std::size_t>(d)];
        const double v = x[d];
        if (c.size() == 1 || v <= c.front()) {
            lo[d] = 0;
        } else if (v >= c.back()) {
            lo[d] = static_cast<int>(c.size()) - 1;
        } else {
            const int i = static_cast<int>(std::upper_bound(c.begin(), c.end(), v) - c.begin()) - 1;
            lo[d] = i;
            frac[d] = (v - c[static_cast<std::size_t>(i)]) / (c[static_cast<std::size_t>(i) + 1] - c[static_cast<std::size_t>(i)]);
        }
    }
    double acc = 0.0;
    for (int corner = 0; corner < (1 << dims()); ++corner) {
        double w = 1.0;
        int cell = 0;
        for (int d = 0; d < dims(); ++d) {
            const bool up = (corner >> d) & 1;
            if (up && frac[d] == 0.0) {
                w = 0.0;
                break;
            }
            w *= up ? frac[d] : 1.0 - frac[d];
            cell += (lo[d] + (up ? 1 : 0)) * strides_[static_cast<std::size_t>(d)];
        }
        if (w > 0.0) acc += w * values_[static_cast<std::size_t>(cell)];
    }
    return acc;
}

// System identification -------------------------------------------------------------

namespace {

// Forcing inputs take the value driving the step, everything else the
// start-of-step value.
Vector step_context(const Eigen::Ref<const Vector>& previous, double p, double pet) {
    Vector ctx = previous;
    ctx[kPrecip] = p;
    ctx[kPet] = pet;
    return ctx;
}

Vector prior_nodes(const HymodParams& prior, const Eigen::Ref<const Vector>& previous, double p, double pet) {
    const auto s = state_from_nodes(previous, prior.n_quick, prior.n_slow);
    const auto r = dynamics::step_hymod(s, prior, p, pet);
    return node_values(r.state, p, pet, r.streamflow);
}

Vector gather(const Eigen::Ref<const Vector>& ctx, const std::vector<int>& idx) {
    Vector v(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) v[static_cast<Eigen::Index>(i)] = ctx[idx[i]];
    return v;
}

} // namespace

int IdentifiedModel::fallback_cells() const {
    int n = 0;
    for (const auto& t : tables) n += t.empty_cells();
    return n;
}

int IdentifiedModel::total_cells() const {
    int n = 0;
    for (const auto& t : tables) n += t.cells();
    return n;
}

Vector IdentifiedModel::step(const Eigen::Ref<const Vector>& previous, double p, double pet) const {
    return step(previous, p, pet, prior);
}

Vector IdentifiedModel::step(const Eigen::Ref<const Vector>& previous, double p, double pet,
                             const HymodParams& base) const {
    Vector next = prior_nodes(base, previous, p, pet);
    const Vector ctx = step_context(previous, p, pet);
    for (std::size_t k = 0; k < corrected_nodes.size(); ++k) {
        const int node = corrected_nodes[k];
        next[node] = std::max(0.0, next[node] + tables[k](gather(ctx, inputs[k])));
    }
    next[kSoil] = std::min(next[kSoil], base.max_soil_storage());
    return next;
}

IdentifiedModel identify_system(const TrajectoryEnsemble& posterior, const HymodParams& prior,
                                const IdentifyConfig& config) {
    prior.validate();
    require(posterior.network.size() == 4 + prior.n_quick + prior.n_slow,
            "identify_system: ensemble network does not match the prior model");
    const auto pairs = transition_pairs(posterior, 1, config.smoothing_lag, config.seed);

    IdentifiedModel model;
    model.prior = prior;
    model.network = posterior.network;
    const Eigen::Index rows = pairs.before.rows();
    Matrix context(rows, model.network.size());
    Matrix residual(rows, model.network.size());
    for (Eigen::Index i = 0; i < rows; ++i) {
        const double p = pairs.after(i, kPrecip), pet = pairs.after(i, kPet);
        context.row(i) = step_context(pairs.before.row(i).transpose(), p, pet).transpose();
        residual.row(i) = pairs.after.row(i) - prior_nodes(prior, pairs.before.row(i).transpose(), p, pet).transpose();
    }
    for (int node = 0; node < model.network.size(); ++node) {
        const auto role = model.network.nodes[static_cast<std::size_t>(node)].role;
        if (role == NodeRole::forcing) continue;
        std::vector<int> in;
        if (role == NodeRole::state) in.push_back(node);
        for (int p : model.network.parents(node)) in.push_back(p);
        Matrix x(rows, static_cast<Eigen::Index>(in.size()));
        for (std::size_t c = 0; c < in.size(); ++c) x.col(static_cast<Eigen::Index>(c)) = context.col(in[c]);
        model.corrected_nodes.push_back(node);
        model.inputs.push_back(in);
        model.tables.push_back(ConditionalTable::fit(x, residual.col(node), config.bins, 0.0));
    }
    return model;
}

Vector predict_with_identified(const IdentifiedModel& model, const Forcing& forcing, const ModelState& initial,
                               Eigen::Index horizon) {
    forcing.validate();
    require(horizon >= 0 && horizon <= forcing.size(), "predict_with_identified: horizon exceeds the forcing");
    Vector nodes = node_values(initial, 0.0, 0.0, 0.0);
    require(nodes.size() == model.network.size(), "predict_with_identified: initial state does not match the model");
    Vector q(horizon);
    for (Eigen::Index t = 0; t < horizon; ++t) {
        nodes = model.step(nodes, forcing.precip[t], forcing.pet[t]);
        q[t] = nodes[nodes.size() - 1];
    }
    return q;
}

TrajectoryEnsemble record_identified(const IdentifiedModel& model, const Forcing& forcing, const ModelState& initial,
                                     const EnsembleConfig& config) {
    config.validate();
    forcing.validate();
    check_initial(model.prior, initial);
    std::vector<HymodParams> ps;
    std::vector<ModelState> ss;
    init_members(model.prior, initial, config.members, config.param_jitter, config.state_jitter, config.seed, ps, ss);

    TrajectoryEnsemble ens;
    ens.network = model.network;
    const Eigen::Index n = forcing.size();
    ens.values.assign(static_cast<std::size_t>(n), Matrix(config.members, ens.network.size()));
    ens.weights.assign(static_cast<std::size_t>(n), Vector::Constant(config.members, 1.0 / config.members));
    ens.ancestors.assign(static_cast<std::size_t>(n), identity(config.members));
    for (int j = 0; j < config.members; ++j) {
        Vector nodes = node_values(ss[static_cast<std::size_t>(j)], 0.0, 0.0, 0.0);
        for (Eigen::Index t = 0; t < n; ++t) {
            nodes = model.step(nodes, forcing.precip[t], forcing.pet[t], ps[static_cast<std::size_t>(j)]);
            ens.values[static_cast<std::size_t>(t)].row(j) = nodes.transpose();
        }
    }
    return ens;
}

// Information flow ---------------------------------------------------------------------

std::vector<EdgeInfo> edge_transfer_entropy(const TrajectoryEnsemble& ens, int lag, const info::DiscretizationSpec& spec,
                                            int smoothing_lag, std::uint64_t seed, unsigned workers) {
    require(lag >= 1 && lag < ens.steps(), "edge_transfer_entropy: lag too large for the record");
    const auto pairs = transition_pairs(ens, lag, smoothing_lag, seed);
    const auto& net = ens.network;
    std::vector<EdgeInfo> out(net.edges.size());
    parallel_for(net.edges.size(), workers, [&](std::size_t e) {
        const auto& edge = net.edges[e];
        Vector source;
        if (net.nodes[static_cast<std::size_t>(edge.source)].role == NodeRole::forcing) {
            // forcing is shared by all members; take the value driving step t - lag + 1
            source.resize(pairs.before.rows());
            for (Eigen::Index i = 0; i < source.size(); ++i) {
                const auto t = pairs.step[static_cast<std::size_t>(i)] - lag + 1;
                source[i] = ens.values[static_cast<std::size_t>(t)](0, edge.source);
            }
        } else {
            source = pairs.before.col(edge.source);
        }
        out[e].source = net.nodes[static_cast<std::size_t>(edge.source)].name;
        out[e].target = net.nodes[static_cast<std::size_t>(edge.target)].name;
        out[e].te = info::conditional_mi(pairs.after.col(edge.target), source, pairs.before.col(edge.target), spec).value;
    });
    return out;
}

std::vector<EdgeDifference> te_difference_report(const std::vector<EdgeInfo>& prior,
                                                 const std::vector<EdgeInfo>& posterior) {
    require(prior.size() == posterior.size(), "te_difference_report: edge sets differ");
    std::vector<EdgeDifference> out;
    for (std::size_t i = 0; i < prior.size(); ++i) {
        require(prior[i].source == posterior[i].source && prior[i].target == posterior[i].target,
                "te_difference_report: edge sets differ");
        out.push_back({prior[i].source, prior[i].target, prior[i].te, posterior[i].te,
                       std::abs(posterior[i].te - prior[i].te)});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.abs_diff > b.abs_diff; });
    return out;
}

} // namespace infobench::network
