#pragma once

// Configuration, synthetic forcing, CSV I/O and the three experiment
// runners.

#include "infobench/bayes.hpp"
#include "infobench/core.hpp"
#include "infobench/dynamics.hpp"
#include "infobench/network.hpp"
#include "infobench/regression.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace infobench::harness {

inline constexpr const char* kVersion = "0.1.0";

enum class Scale { desk, full };

std::string to_string(Scale scale);
Scale scale_from_string(const std::string& name);

struct ConfigKey {
    std::string key;
    std::string desk;
    std::string full;
    std::string doc;
};

/// Every recognised key with its defaults at both scales.
const std::vector<ConfigKey>& config_keys();

/// Flat key=value configuration. Construction order: scale defaults, then
/// the file, then explicit overrides; unknown keys are rejected.
class ExperimentConfig {
public:
    static ExperimentConfig defaults(Scale scale = Scale::desk);
    /// `scale` wins over a scale= line in the file.
    static ExperimentConfig build(std::optional<Scale> scale, const std::optional<std::filesystem::path>& file,
                                  const std::vector<std::pair<std::string, std::string>>& overrides);

    void set(const std::string& key, const std::string& value);
    void apply_file(const std::filesystem::path& path);

    Scale scale() const { return scale_; }
    const std::string& text(const std::string& key) const;
    double number(const std::string& key) const;
    int integer(const std::string& key) const;
    std::uint64_t seed() const;
    std::vector<double> numbers(const std::string& key) const;
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    Scale scale_ = Scale::desk;
    std::map<std::string, std::string> values_;
};

/// Written when a run starts (status=running) and rewritten when it ends.
struct RunManifest {
    std::string experiment;
    std::string status = "running";
    std::map<std::string, std::string> config;
    std::vector<std::pair<std::string, double>> timings; // stage, seconds
    std::vector<std::string> outputs;
    std::vector<std::string> notes;

    void write(const std::filesystem::path& path) const;
};

/// Wet days with probability 0.3 and exponential amounts of mean 9 mm;
/// PET = 3.5 + 2.5 sin(2 pi t / 365).
dynamics::Forcing generate_synthetic_forcing(std::uint64_t seed, Eigen::Index n_days);

/// Schema `day,precip_mm,pet_mm`. Errors name the offending line.
dynamics::Forcing load_forcing_csv(const std::filesystem::path& path);
void write_forcing_csv(const std::filesystem::path& path, const dynamics::Forcing& forcing);

/// Shortest decimal form that reads back to the same double.
std::string format_number(double v);

/// Synthetic forcing from the config seed, or the CSV named by the
/// `forcing` key; at least `days` long, truncated to `days`.
dynamics::Forcing experiment_forcing(const ExperimentConfig& config, std::uint64_t stage_seed, Eigen::Index days);

struct ExperimentAResult {
    bayes::ModelProbabilityTable table;
    std::vector<std::filesystem::path> files;
};

struct SweepPoint {
    double sigma_u = 0.0;
    std::vector<double> eps_true;
    std::vector<double> eps_hat;
    std::vector<bool> reject;
    double i_truth = 0.0;      // I(z_y; truth run on the perturbed forcing)
    double i_regression = 0.0; // I(z_y; r(z_u))
    double h_given_data = 0.0;
    double mean_true = 0.0;
    double mean_est = 0.0;
    double std_est = 0.0;
    /// (mean_true - mean_est) / mean_true
    double relative_underestimation() const;
};

struct ExperimentBResult {
    regression::ConvergenceReport convergence;
    std::vector<SweepPoint> sweep;
    std::vector<std::filesystem::path> files;
};

struct MseRow {
    std::string period;
    std::string variant;
    double mse = 0.0;
};

struct ExperimentCResult {
    std::vector<MseRow> mse;
    std::vector<network::EdgeDifference> edges;
    int fallback_cells = 0;
    int total_cells = 0;
    std::vector<std::filesystem::path> files;

    double mse_of(const std::string& period, const std::string& variant) const;
    /// 1-based rank of an edge in the difference report, 0 if absent.
    int edge_rank(const std::string& source, const std::string& target) const;
};

ExperimentAResult run_experiment_a(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                   unsigned workers = 1);
ExperimentBResult run_experiment_b(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                   unsigned workers = 1);
ExperimentCResult run_experiment_c(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                   unsigned workers = 1);

/// Forward run of the model named by sim.model over the configured forcing;
/// writes simulation.csv.
std::filesystem::path run_simulation(const ExperimentConfig& config, const std::filesystem::path& out_dir);

} // namespace infobench::harness
