// wolb_cli: batch front end for the release planner.
//
//   wolb_cli plan --config run.json --output out
//   wolb_cli simulate-pde --preset fig6 --threads 4
//   wolb_cli validate [--reduced]
//
// Every run writes into <output>/<name>/. Exit codes: 0 ok, 1 config error,
// 2 solver failure, 3 validation failure.
#include <algorithm>
#include <atomic>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "wolb/errors.hpp"
#include "wolb/experiments.hpp"

namespace {

constexpr int kOk = 0, kConfig = 1, kSolver = 2;

struct Outcome {
    int code = kOk;
    std::string message;
};

Outcome run_one(const wolb::ExperimentConfig& cfg, const std::filesystem::path& root) {
    const auto dir = root / cfg.name;
    try {
        const auto r = wolb::run_experiment(cfg, dir);
        std::string msg = cfg.name + ": " + dir.string() + " (" + std::to_string(r.files.size()) + " files)";
        if (r.exit_code != 0) msg += ", validation failed";
        return {r.exit_code, msg};
    } catch (const wolb::ConfigError& e) {
        return {kConfig, cfg.name + ": config error: " + e.what()};
    } catch (const wolb::InvalidParams& e) {
        return {kConfig, cfg.name + ": invalid parameters: " + e.what()};
    } catch (const std::exception& e) {
        return {kSolver, cfg.name + ": solver failure: " + e.what()};
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal single-release profiles for Wolbachia replacement"};
    app.require_subcommand(1);

    std::string config_path, preset_name, output = "output";
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool reduced = false;
    std::vector<std::string> criteria;

    const char* modes[] = {"plan", "simulate-pde", "limit-sweep", "two-species", "hypothesis-sweep", "validate"};
    for (const char* m : modes) {
        auto* sub = app.add_subcommand(m);
        auto* cfg = sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--preset", preset_name, "figure preset")
            ->check(CLI::IsMember(wolb::preset_names()))
            ->excludes(cfg);
        sub->add_option("--output", output, "output root directory")->capture_default_str();
        sub->add_option("--seed", seed, "RNG seed override");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        if (std::string(m) == "validate") {
            sub->add_flag("--reduced", reduced, "skip resolution-bound criteria");
            sub->add_option("--criteria", criteria, "criterion ids to run");
        }
    }
    CLI11_PARSE(app, argc, argv);
    const std::string mode = app.get_subcommands().front()->get_name();

    std::vector<wolb::ExperimentConfig> runs;
    try {
        if (!preset_name.empty()) {
            runs = wolb::preset(preset_name);
            for (const auto& r : runs) {
                if (r.mode != wolb::parse_mode(mode)) {
                    throw wolb::ConfigError("preset " + preset_name + " runs '" + wolb::to_string(r.mode) +
                                            "', not '" + mode + "'");
                }
            }
        } else if (!config_path.empty()) {
            runs.push_back(wolb::load_config(config_path, mode));
        } else if (mode == "validate") {
            wolb::ExperimentConfig c;
            c.name = "validate";
            c.mode = wolb::Mode::validate;
            runs.push_back(c);
        } else {
            throw wolb::ConfigError(mode + " needs --config or --preset");
        }
        for (auto& r : runs) {
            if (seed) r.seed = *seed;
            if (threads) r.threads = *threads;
            if (reduced) r.validate.reduced_resolution = true;
            if (!criteria.empty()) r.validate.criteria = criteria;
        }
        if (reduced || !criteria.empty()) {
            // Re-parse so criterion ids are checked like a config file.
            for (auto& r : runs) r = wolb::config_from_json(wolb::config_to_json(r));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfig;
    }

    // Independent runs share nothing but the output root, so a preset fans
    // out over the worker budget with one thread per run.
    std::vector<Outcome> outcomes(runs.size());
    const int workers = std::min<int>(threads.value_or(1), static_cast<int>(runs.size()));
    if (workers > 1) {
        for (auto& r : runs) r.threads = 1;
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i; (i = next++) < runs.size();) outcomes[i] = run_one(runs[i], output);
            });
        }
        for (auto& t : pool) t.join();
    } else {
        for (std::size_t i = 0; i < runs.size(); ++i) outcomes[i] = run_one(runs[i], output);
    }

    int code = kOk;
    for (const auto& o : outcomes) {
        (o.code == kOk ? std::cout : std::cerr) << o.message << '\n';
        // Config errors outrank solver failures, which outrank failed checks.
        if (o.code != kOk && (code == kOk || o.code < code)) code = o.code;
    }
    return code;
}
