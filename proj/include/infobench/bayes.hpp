#pragma once

// Bayesian model probabilities for competing model structures, marginalized
// over parameter x forcing-perturbation combinations, with bootstrapped
// observation days.

#include "infobench/core.hpp"
#include "infobench/dynamics.hpp"

#include <cstdint>
#include <vector>

namespace infobench::bayes {

struct PerturbationSpec {
    double sigma_u = 0.1; // mm, iid Gaussian on daily precipitation
    int n_series = 500;

    void validate() const;
};

struct LikelihoodSpec {
    double sigma_y = 0.1; // mm, iid Gaussian on streamflow

    void validate() const;
};

struct ParameterDraws {
    std::vector<dynamics::ModelParams> sets;
    std::size_t proposals = 0; // uniform proposals drawn, including rejected ones
};

/// Uniform draws: Nash ratios in [0,1]^3; abc (a, b, c) in [0,1]^3 subject
/// to a + b <= 1 by rejection; HyMod over c_max [1,1000], b_exp [0,10],
/// ratios [0,1], three slow tanks.
ParameterDraws sample_parameters(dynamics::ModelKind kind, int n, std::uint64_t seed);

/// n_series perturbed copies; copy i draws noise from derive_seed(seed, i).
/// Negative precipitation is clipped to 0, PET is left untouched.
std::vector<dynamics::Forcing> perturb_forcing(const dynamics::Forcing& forcing, const PerturbationSpec& spec,
                                               std::uint64_t seed);

/// sum_t log N(obs_t; sim_t, sigma_y^2).
double log_likelihood(const Eigen::Ref<const Vector>& obs, const Eigen::Ref<const Vector>& sim,
                      const LikelihoodSpec& spec);

/// Day multiplicities of bootstrap resamples: replicate b draws T days with
/// replacement, so each column sums to T.
Matrix bootstrap_counts(Eigen::Index days, int replicates, std::uint64_t seed);

/// Bootstrap-weighted squared residuals: row = simulation, column =
/// replicate. Everything the Gaussian likelihood needs for any sigma_y.
Vector weighted_squared_residuals(const Eigen::Ref<const Vector>& obs, const Eigen::Ref<const Vector>& sim,
                                  const Matrix& counts);

struct CellPosterior {
    Matrix replicate_probability; // replicate x model
    Vector mean;                  // per model
    Vector std;                   // per model, sample standard deviation over replicates
    bool degenerate = false;      // every likelihood was -inf in some replicate
};

/// P(model) per replicate with a uniform prior over models and over each
/// model's simulations, via log-mean-exp. `residuals[m]` holds
/// weighted_squared_residuals rows for model m; `days` is the
/// observation-period length.
CellPosterior model_posterior(const std::vector<Matrix>& residuals, Eigen::Index days, const LikelihoodSpec& spec);

/// Convenience form taking raw simulations (rows = runs, columns = days).
CellPosterior model_posterior(const std::vector<Matrix>& simulations, const Eigen::Ref<const Vector>& obs,
                              const LikelihoodSpec& spec, int bootstrap, std::uint64_t seed);

struct ModelProbabilityCell {
    double sigma_u = 0.0;
    double sigma_y = 0.0;
    CellPosterior posterior;
};

struct ModelProbabilityTable {
    std::vector<dynamics::ModelKind> models;
    std::vector<ModelProbabilityCell> cells;

    /// Largest |sum of probabilities - 1| over cells and replicates.
    double normalization_error() const;
    /// Some cell favours each model (mean probability > 0.5).
    bool ranking_flip() const;
};

} // namespace infobench::bayes
