#pragma once

// Daily conceptual rainfall-runoff models: HyMod, a three-bucket Nash
// cascade and the abc model. The single-step kernels are templated on the
// scalar type; everything else works in double.

#include "infobench/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <variant>
#include <vector>

namespace infobench::dynamics {

enum class ModelKind { hymod, nash, abc };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// Daily precipitation and potential evaporation [mm/day].
struct Forcing {
    Vector precip;
    Vector pet;

    Eigen::Index size() const { return precip.size(); }
    /// Throws ValidationError on unequal lengths, N == 0, NaN or negatives.
    void validate() const;
    /// Copy of days [begin, begin + count).
    Forcing slice(Eigen::Index begin, Eigen::Index count) const;
};

struct HymodParams {
    double c_max = 80.0;  // mm
    double b_exp = 0.5;
    double alpha = 0.7;   // quick-flow fraction of effective rainfall
    double k_quick = 0.8; // 1/day
    double k_slow = 0.3;  // 1/day
    int n_quick = 3;
    int n_slow = 3;

    void validate() const;
    /// Largest soil storage the Pareto store can hold, c_max / (b_exp + 1).
    double max_soil_storage() const { return c_max / (b_exp + 1.0); }
};

struct NashParams {
    std::array<double, 3> k{0.5, 0.5, 0.5};
    void validate() const;
};

struct AbcParams {
    double a = 0.5;
    double b = 0.2;
    double c = 0.1;
    void validate() const;
};

using ModelParams = std::variant<HymodParams, NashParams, AbcParams>;

ModelKind kind_of(const ModelParams& params);
void validate(const ModelParams& params);

template <typename Scalar>
using StoreVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Markov state. tank_stores holds the quick tanks then the slow tanks for
/// HyMod, the three cascade buckets for Nash and the single store for abc.
template <typename Scalar>
struct ModelStateT {
    Scalar soil_store{0};
    StoreVector<Scalar> tank_stores;

    Scalar total() const { return soil_store + tank_stores.sum(); }
};

using ModelState = ModelStateT<double>;

template <typename Scalar>
struct StepResult {
    ModelStateT<Scalar> state;
    Scalar streamflow{0};
    Scalar evaporation{0};        // HyMod actual evaporation
    Scalar loss{0};               // abc loss term b * p
    Scalar effective_rainfall{0}; // HyMod storage excess
};

/// All-zero state with the right number of tanks for `params`.
ModelState initial_state(const ModelParams& params);

/// Explicit linear-reservoir cascade: outflows k * S from start-of-step
/// storage, inflow enters the first tank, returns the last tank's outflow.
template <typename Derived, typename Scalar>
Scalar route_cascade(Eigen::MatrixBase<Derived> const& tanks_, Scalar k, Scalar inflow) {
    auto& tanks = const_cast<Eigen::MatrixBase<Derived>&>(tanks_);
    const Eigen::Index n = tanks.size();
    Scalar carried = inflow;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Scalar out = k * tanks(i);
        tanks(i) = tanks(i) - out + carried;
        carried = out;
    }
    return carried;
}

template <typename Scalar>
StepResult<Scalar> step_abc(const ModelStateT<Scalar>& state, const AbcParams& params, Scalar p) {
    StepResult<Scalar> r;
    r.state = state;
    const Scalar store = state.tank_stores(0);
    const Scalar drained = Scalar(params.c) * store;
    r.streamflow = Scalar(1.0 - params.a - params.b) * p + drained;
    r.loss = Scalar(params.b) * p;
    r.state.tank_stores(0) = store + Scalar(params.a) * p - drained;
    return r;
}

template <typename Scalar>
StepResult<Scalar> step_nash(const ModelStateT<Scalar>& state, const NashParams& params, Scalar inflow) {
    StepResult<Scalar> r;
    r.state = state;
    Scalar carried = inflow;
    for (Eigen::Index i = 0; i < 3; ++i) {
        const Scalar out = Scalar(params.k[static_cast<std::size_t>(i)]) * state.tank_stores(i);
        r.state.tank_stores(i) = state.tank_stores(i) - out + carried;
        carried = out;
    }
    r.streamflow = carried;
    return r;
}

/// Storage excess of the Pareto soil store for precipitation p.
/// Returns {effective rainfall, new soil store}; the two always sum to
/// soil + p.
template <typename Scalar>
std::pair<Scalar, Scalar> pareto_excess(Scalar soil, const HymodParams& params, Scalar p) {
    using std::min;
    using std::max;
    using std::pow;
    const Scalar c_max(params.c_max);
    const Scalar expo(params.b_exp + 1.0);
    const Scalar s_max = c_max / expo;
    const Scalar fill = min(max(soil / s_max, Scalar(0)), Scalar(1));
    const Scalar critical = c_max * (Scalar(1) - pow(Scalar(1) - fill, Scalar(1) / expo));
    const Scalar raised = min(critical + p, c_max);
    Scalar next = s_max * (Scalar(1) - pow(Scalar(1) - raised / c_max, expo));
    Scalar excess = p - (next - soil);
    if (excess < Scalar(0)) excess = Scalar(0);
    next = soil + p - excess;
    return {excess, next};
}

template <typename Scalar>
StepResult<Scalar> step_hymod(const ModelStateT<Scalar>& state, const HymodParams& params, Scalar p, Scalar pet) {
    using std::min;
    StepResult<Scalar> r;
    r.state = state;
    auto [excess, soil] = pareto_excess(state.soil_store, params, p);
    const Scalar s_max(params.max_soil_storage());
    const Scalar evap = min(pet * soil / s_max, soil);
    r.state.soil_store = soil - evap;
    r.evaporation = evap;
    r.effective_rainfall = excess;

    const Scalar quick_in = Scalar(params.alpha) * excess;
    const Scalar slow_in = excess - quick_in;
    auto quick = r.state.tank_stores.head(params.n_quick);
    auto slow = r.state.tank_stores.tail(params.n_slow);
    const Scalar quick_out = route_cascade(quick, Scalar(params.k_quick), quick_in);
    const Scalar slow_out = route_cascade(slow, Scalar(params.k_slow), slow_in);
    r.streamflow = quick_out + slow_out;
    return r;
}

/// One step of any model. For Nash the inflow is `p`; pet is ignored by
/// Nash and abc.
StepResult<double> step(const ModelState& state, const ModelParams& params, double p, double pet);

struct SimulationResult {
    TimeSeries streamflow;
    std::vector<ModelState> states; // end-of-step state per day
    Vector evaporation;
    Vector effective_rainfall;
    Vector mass_residual;           // inflow - outflow - losses - d(storage), per step
    Eigen::Index warmup = 0;        // leading steps to exclude downstream

    /// Streamflow after the warm-up period.
    Vector observed() const { return streamflow.values.tail(streamflow.size() - warmup); }
};

/// Deterministic forward run over the whole forcing record.
SimulationResult simulate(const ModelParams& params, const Forcing& forcing, const ModelState& initial,
                          Eigen::Index warmup = 0);
SimulationResult simulate(const ModelParams& params, const Forcing& forcing, Eigen::Index warmup = 0);

/// Streamflow only, skipping the per-step state record. Same numbers as
/// simulate().streamflow.
Vector simulate_streamflow(const ModelParams& params, const Forcing& forcing);

} // namespace infobench::dynamics
