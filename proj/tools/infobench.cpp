#include "infobench/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace hb = infobench::harness;

namespace {

struct Common {
    std::string config;
    std::string scale;
    std::string out = "results";
    std::string forcing;
    std::optional<std::uint64_t> seed;
    unsigned workers = 1;
    std::vector<std::string> set;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "key=value config file")->check(CLI::ExistingFile);
    cmd->add_option("--scale", c.scale, "desk or full")->check(CLI::IsMember({"desk", "full"}));
    cmd->add_option("--seed", c.seed, "root seed");
    cmd->add_option("--out", c.out, "output directory")->capture_default_str();
    cmd->add_option("--forcing", c.forcing, "forcing CSV (day,precip_mm,pet_mm)")->check(CLI::ExistingFile);
    cmd->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--set", c.set, "override a config key, key=value (repeatable)");
}

hb::ExperimentConfig make_config(const Common& c) {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& kv : c.set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw infobench::ValidationError("--set expects key=value, got '" + kv + "'");
        overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed) overrides.emplace_back("seed", std::to_string(*c.seed));
    if (!c.forcing.empty()) overrides.emplace_back("forcing", c.forcing);
    std::optional<hb::Scale> scale;
    if (!c.scale.empty()) scale = hb::scale_from_string(c.scale);
    std::optional<std::filesystem::path> file;
    if (!c.config.empty()) file = c.config;
    return hb::ExperimentConfig::build(scale, file, overrides);
}

void print_files(const std::vector<std::filesystem::path>& files) {
    for (const auto& f : files) std::cout << f.string() << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Information-theoretic model evaluation benchmarks"};
    app.require_subcommand(1);
    app.set_version_flag("--version", hb::kVersion);

    Common common;
    auto* sim = app.add_subcommand("simulate", "forward run of one model (sim.* keys)");
    auto* exp_a = app.add_subcommand("experiment-a", "model probabilities under measurement assumptions");
    auto* exp_b = app.add_subcommand("experiment-b", "missing information sweep and convergence protocol");
    auto* exp_c = app.add_subcommand("experiment-c", "assimilation, identification and edge transfer entropy");
    for (auto* cmd : {sim, exp_a, exp_b, exp_c}) add_common(cmd, common);

    auto* info = app.add_subcommand("info", "list config keys with desk and full defaults");

    CLI11_PARSE(app, argc, argv);

    try {
        if (info->parsed()) {
            std::cout << "infobench " << hb::kVersion << '\n';
            for (const auto& k : hb::config_keys()) {
                std::cout << k.key << " = " << k.desk;
                if (k.full != k.desk) std::cout << "  (full: " << k.full << ")";
                std::cout << "\n    " << k.doc << '\n';
            }
            return 0;
        }
        const auto config = make_config(common);
        if (sim->parsed()) {
            std::cout << hb::run_simulation(config, common.out).string() << '\n';
        } else if (exp_a->parsed()) {
            const auto r = hb::run_experiment_a(config, common.out, common.workers);
            print_files(r.files);
            std::cout << "ranking flip: " << (r.table.ranking_flip() ? "yes" : "no") << '\n';
        } else if (exp_b->parsed()) {
            const auto r = hb::run_experiment_b(config, common.out, common.workers);
            print_files(r.files);
            std::cout << "converged: " << (r.convergence.converged ? "yes" : "no") << '\n';
        } else if (exp_c->parsed()) {
            const auto r = hb::run_experiment_c(config, common.out, common.workers);
            print_files(r.files);
        }
    } catch (const infobench::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
