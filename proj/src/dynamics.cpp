#include "infobench/dynamics.hpp"

#include <sstream>

namespace infobench::dynamics {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ValidationError(what);
}

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

} // namespace

std::string to_string(ModelKind kind) {
    switch (kind) {
    case ModelKind::hymod: return "hymod";
    case ModelKind::nash: return "nash";
    case ModelKind::abc: return "abc";
    }
    return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "hymod") return ModelKind::hymod;
    if (name == "nash") return ModelKind::nash;
    if (name == "abc") return ModelKind::abc;
    throw ValidationError("unknown model kind '" + name + "'");
}

void Forcing::validate() const {
    require(precip.size() == pet.size(), "forcing: precip and pet lengths differ");
    require(precip.size() >= 1, "forcing: empty record");
    for (Eigen::Index i = 0; i < precip.size(); ++i) {
        if (!(precip[i] >= 0.0) || !std::isfinite(precip[i]) || !(pet[i] >= 0.0) || !std::isfinite(pet[i])) {
            std::ostringstream os;
            os << "forcing: invalid value on day " << i << " (precip " << precip[i] << ", pet " << pet[i] << ")";
            throw ValidationError(os.str());
        }
    }
}

Forcing Forcing::slice(Eigen::Index begin, Eigen::Index count) const {
    require(begin >= 0 && count >= 0 && begin + count <= size(), "forcing: slice out of range");
    return {precip.segment(begin, count), pet.segment(begin, count)};
}

void HymodParams::validate() const {
    require(c_max > 0.0 && c_max <= 1000.0, "hymod: c_max must be in (0, 1000]");
    require(b_exp >= 0.0 && b_exp <= 10.0, "hymod: b_exp must be in [0, 10]");
    require(in_unit(alpha), "hymod: alpha must be in [0, 1]");
    require(in_unit(k_quick), "hymod: k_quick must be in [0, 1]");
    require(in_unit(k_slow), "hymod: k_slow must be in [0, 1]");
    require(n_quick >= 1 && n_slow >= 1, "hymod: tank counts must be >= 1");
}

void NashParams::validate() const {
    for (double v : k) require(in_unit(v), "nash: outflow ratios must be in [0, 1]");
}

void AbcParams::validate() const {
    require(in_unit(a) && in_unit(b) && in_unit(c), "abc: a, b, c must be in [0, 1]");
    require(a + b <= 1.0, "abc: a + b must not exceed 1");
}

ModelKind kind_of(const ModelParams& params) {
    return static_cast<ModelKind>(params.index());
}

void validate(const ModelParams& params) {
    std::visit([](const auto& p) { p.validate(); }, params);
}

ModelState initial_state(const ModelParams& params) {
    ModelState s;
    std::visit(
        [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, HymodParams>) {
                s.tank_stores = Vector::Zero(p.n_quick + p.n_slow);
            } else if constexpr (std::is_same_v<P, NashParams>) {
                s.tank_stores = Vector::Zero(3);
            } else {
                s.tank_stores = Vector::Zero(1);
            }
        },
        params);
    return s;
}

StepResult<double> step(const ModelState& state, const ModelParams& params, double p, double pet) {
    return std::visit(
        [&](const auto& prm) -> StepResult<double> {
            using P = std::decay_t<decltype(prm)>;
            if constexpr (std::is_same_v<P, HymodParams>) {
                return step_hymod(state, prm, p, pet);
            } else if constexpr (std::is_same_v<P, NashParams>) {
                return step_nash(state, prm, p);
            } else {
                return step_abc(state, prm, p);
            }
        },
        params);
}

SimulationResult simulate(const ModelParams& params, const Forcing& forcing, const ModelState& initial,
                          Eigen::Index warmup) {
    validate(params);
    forcing.validate();
    const Eigen::Index n = forcing.size();
    require(warmup >= 0 && warmup < n, "simulate: warmup must be in [0, N)");
    const ModelState expected = initial_state(params);
    require(initial.tank_stores.size() == expected.tank_stores.size(), "simulate: initial state has wrong tank count");

    SimulationResult out;
    out.streamflow = TimeSeries(Vector::Zero(n), "mm/day");
    out.states.reserve(static_cast<std::size_t>(n));
    out.evaporation = Vector::Zero(n);
    out.effective_rainfall = Vector::Zero(n);
    out.mass_residual = Vector::Zero(n);
    out.warmup = warmup;

    ModelState state = initial;
    for (Eigen::Index t = 0; t < n; ++t) {
        const double before = state.total();
        auto r = step(state, params, forcing.precip[t], forcing.pet[t]);
        state = std::move(r.state);
        out.streamflow[t] = r.streamflow;
        out.evaporation[t] = r.evaporation;
        out.effective_rainfall[t] = r.effective_rainfall;
        out.mass_residual[t] = forcing.precip[t] - r.evaporation - r.loss - r.streamflow - (state.total() - before);
        out.states.push_back(state);
    }
    return out;
}

SimulationResult simulate(const ModelParams& params, const Forcing& forcing, Eigen::Index warmup) {
    return simulate(params, forcing, initial_state(params), warmup);
}

Vector simulate_streamflow(const ModelParams& params, const Forcing& forcing) {
    validate(params);
    forcing.validate();
    const Eigen::Index n = forcing.size();
    Vector q(n);
    ModelState state = initial_state(params);
    for (Eigen::Index t = 0; t < n; ++t) {
        auto r = step(state, params, forcing.precip[t], forcing.pet[t]);
        state = std::move(r.state);
        q[t] = r.streamflow;
    }
    return q;
}

} // namespace infobench::dynamics
