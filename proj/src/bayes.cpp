#include "infobench/bayes.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace infobench::bayes {

using dynamics::Forcing;
using dynamics::ModelKind;

void PerturbationSpec::validate() const {
    if (!(sigma_u > 0.0) || !std::isfinite(sigma_u)) throw ValidationError("perturbation: sigma_u must be > 0");
    if (n_series < 1) throw ValidationError("perturbation: n_series must be >= 1");
}

void LikelihoodSpec::validate() const {
    if (!(sigma_y > 0.0) || !std::isfinite(sigma_y)) throw ValidationError("likelihood: sigma_y must be > 0");
}

ParameterDraws sample_parameters(ModelKind kind, int n, std::uint64_t seed) {
    if (n < 1) throw ValidationError("sample_parameters: n must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ParameterDraws out;
    out.sets.reserve(static_cast<std::size_t>(n));
    while (out.sets.size() < static_cast<std::size_t>(n)) {
        ++out.proposals;
        switch (kind) {
        case ModelKind::nash: {
            dynamics::NashParams p;
            for (auto& k : p.k) k = u(rng);
            out.sets.emplace_back(p);
            break;
        }
        case ModelKind::abc: {
            dynamics::AbcParams p{u(rng), u(rng), u(rng)};
            if (p.a + p.b <= 1.0) out.sets.emplace_back(p);
            break;
        }
        case ModelKind::hymod: {
            dynamics::HymodParams p;
            p.c_max = 1.0 + 999.0 * u(rng);
            p.b_exp = 10.0 * u(rng);
            p.alpha = u(rng);
            p.k_quick = u(rng);
            p.k_slow = u(rng);
            p.n_quick = 3;
            p.n_slow = 3;
            out.sets.emplace_back(p);
            break;
        }
        }
    }
    return out;
}

std::vector<Forcing> perturb_forcing(const Forcing& forcing, const PerturbationSpec& spec, std::uint64_t seed) {
    spec.validate();
    forcing.validate();
    std::vector<Forcing> out(static_cast<std::size_t>(spec.n_series));
    for (int i = 0; i < spec.n_series; ++i) {
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        std::normal_distribution<double> noise(0.0, spec.sigma_u);
        Forcing f{forcing.precip, forcing.pet};
        for (Eigen::Index t = 0; t < f.size(); ++t) f.precip[t] = std::max(0.0, f.precip[t] + noise(rng));
        out[static_cast<std::size_t>(i)] = std::move(f);
    }
    return out;
}

double log_likelihood(const Eigen::Ref<const Vector>& obs, const Eigen::Ref<const Vector>& sim,
                      const LikelihoodSpec& spec) {
    spec.validate();
    if (obs.size() != sim.size()) throw ValidationError("log_likelihood: length mismatch");
    const double n = static_cast<double>(obs.size());
    const double norm = std::log(spec.sigma_y * std::sqrt(2.0 * std::numbers::pi));
    return -n * norm - (obs - sim).squaredNorm() / (2.0 * spec.sigma_y * spec.sigma_y);
}

Matrix bootstrap_counts(Eigen::Index days, int replicates, std::uint64_t seed) {
    if (days < 1 || replicates < 1) throw ValidationError("bootstrap: need days >= 1 and replicates >= 1");
    Matrix counts = Matrix::Zero(days, replicates);
    for (int b = 0; b < replicates; ++b) {
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
        std::uniform_int_distribution<Eigen::Index> day(0, days - 1);
        for (Eigen::Index i = 0; i < days; ++i) counts(day(rng), b) += 1.0;
    }
    return counts;
}

Vector weighted_squared_residuals(const Eigen::Ref<const Vector>& obs, const Eigen::Ref<const Vector>& sim,
                                  const Matrix& counts) {
    if (obs.size() != sim.size() || obs.size() != counts.rows()) {
        throw ValidationError("weighted_squared_residuals: length mismatch");
    }
    return counts.transpose() * (obs - sim).array().square().matrix();
}

namespace {

double log_mean_exp(const Eigen::Ref<const Vector>& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().mean());
}

} // namespace

CellPosterior model_posterior(const std::vector<Matrix>& residuals, Eigen::Index days, const LikelihoodSpec& spec) {
    spec.validate();
    if (residuals.size() < 2) throw ValidationError("model_posterior: need at least two models");
    const Eigen::Index reps = residuals.front().cols();
    for (const auto& r : residuals) {
        if (r.cols() != reps || r.rows() < 1) throw ValidationError("model_posterior: inconsistent residual tables");
    }
    const auto models = static_cast<Eigen::Index>(residuals.size());
    const double norm = static_cast<double>(days) * std::log(spec.sigma_y * std::sqrt(2.0 * std::numbers::pi));
    const double scale = 1.0 / (2.0 * spec.sigma_y * spec.sigma_y);

    CellPosterior post;
    post.replicate_probability.resize(reps, models);
    for (Eigen::Index b = 0; b < reps; ++b) {
        Vector evidence(models);
        for (Eigen::Index m = 0; m < models; ++m) {
            const Vector ll = -norm - scale * residuals[static_cast<std::size_t>(m)].col(b).array();
            evidence[m] = log_mean_exp(ll);
        }
        const double top = evidence.maxCoeff();
        if (!std::isfinite(top)) {
            post.degenerate = true;
            post.replicate_probability.row(b).setConstant(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const Vector w = (evidence.array() - top).exp();
        post.replicate_probability.row(b) = (w / w.sum()).transpose();
    }
    post.mean = post.replicate_probability.colwise().mean().transpose();
    post.std.resize(models);
    for (Eigen::Index m = 0; m < models; ++m) {
        const auto col = post.replicate_probability.col(m).array();
        post.std[m] = reps > 1 ? std::sqrt((col - post.mean[m]).square().sum() / static_cast<double>(reps - 1)) : 0.0;
    }
    return post;
}

CellPosterior model_posterior(const std::vector<Matrix>& simulations, const Eigen::Ref<const Vector>& obs,
                              const LikelihoodSpec& spec, int bootstrap, std::uint64_t seed) {
    const Matrix counts = bootstrap_counts(obs.size(), bootstrap, seed);
    std::vector<Matrix> residuals;
    for (const auto& sims : simulations) {
        if (sims.cols() != obs.size()) throw ValidationError("model_posterior: simulation length differs from obs");
        Matrix r(sims.rows(), bootstrap);
        for (Eigen::Index k = 0; k < sims.rows(); ++k) {
            r.row(k) = weighted_squared_residuals(obs, sims.row(k).transpose(), counts).transpose();
        }
        residuals.push_back(std::move(r));
    }
    return model_posterior(residuals, obs.size(), spec);
}

double ModelProbabilityTable::normalization_error() const {
    double worst = 0.0;
    for (const auto& c : cells) {
        const auto& p = c.posterior.replicate_probability;
        for (Eigen::Index b = 0; b < p.rows(); ++b) worst = std::max(worst, std::abs(p.row(b).sum() - 1.0));
    }
    return worst;
}

bool ModelProbabilityTable::ranking_flip() const {
    if (models.size() < 2) return false;
    std::vector<bool> favoured(models.size(), false);
    for (const auto& c : cells) {
        for (std::size_t m = 0; m < models.size(); ++m) {
            if (c.posterior.mean[static_cast<Eigen::Index>(m)] > 0.5) favoured[m] = true;
        }
    }
    return std::count(favoured.begin(), favoured.end(), true) >= 2;
}

} // namespace infobench::bayes
