#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "wolb/diffusion.hpp"
#include "wolb/planner.hpp"
#include "wolb/reference.hpp"
#include "wolb/spatial.hpp"

namespace wolb {

enum class Mode { plan, simulate_pde, limit_sweep, two_species, hypothesis_sweep, validate };
const char* to_string(Mode m);
/// Accepts the CLI spelling (simulate-pde) and the underscore form.
Mode parse_mode(const std::string& name);

struct LandscapeSpec {
    KKind kind = KKind::sinusoidal;
    double K0 = 100.0;
    /// cell_index,K file, used when kind is table.
    std::string table_csv;
};

struct GridSpec {
    int dim = 1;
    /// Cells per axis; 0 picks 200 in 1D and 64 in 2D.
    int cells = 0;
    double length_x = 1.0;
    double length_y = 1.0;

    int resolved_cells() const { return cells > 0 ? cells : (dim == 2 ? 64 : 200); }
    Grid build() const;
};

struct PdeSpec {
    PdeConfig solver = [] {
        PdeConfig c;
        c.dt = 1e-2;
        return c;
    }();
    /// simulate-pde: re-optimize the release under diffusion, starting from the
    /// diffusion-free plan. Otherwise that plan is only simulated.
    bool optimize = true;
    std::vector<double> D_list;
    std::vector<double> snapshot_times;
    PdeOptions options;
};

struct ReductionSpec {
    std::vector<double> epsilons{4e-3, 2e-3, 1e-3};
    ReleaseMode release = ReleaseMode::pulse;
    double pulse_duration = 0.05;
    int snapshots = 10;
};

struct SweepSpec {
    std::vector<double> s_h{0.5, 0.67, 0.83, 1.0};
    std::vector<double> b2_0{0.6, 0.73, 0.87, 1.0};
    int samples_per_cell = 200;
    /// A draw holds when the hypothesis holds at every horizon listed.
    std::vector<double> T_list{1.0, 5.0, 25.0};
    int n_grid = 200;
};

struct ValidateSpec {
    bool reduced_resolution = false;
    /// Empty runs every criterion.
    std::vector<std::string> criteria;
};

struct ExperimentConfig {
    std::string name = "run";
    Mode mode = Mode::plan;
    BioParams params = BioParams::table1();
    Budget budget;
    LandscapeSpec landscape;
    GridSpec grid;
    bool reverse_ties = false;
    PdeSpec pde;
    ReductionSpec reduction;
    SweepSpec sweep;
    ValidateSpec validate;
    std::uint64_t seed = 1;
    int threads = 1;
};

/// Strict parse: unknown keys, wrong types and missing mode-specific blocks
/// raise ConfigError. `mode_override` replaces (or must agree with) "mode".
ExperimentConfig config_from_json(const nlohmann::json& j, const std::string& mode_override = "");
ExperimentConfig load_config(const std::string& path, const std::string& mode_override = "");
/// Fully resolved form; parsing it back yields the same configuration.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

std::vector<std::string> preset_names();
/// Every run of a figure preset. Unknown names raise ConfigError.
std::vector<ExperimentConfig> preset(const std::string& name);

/// Counter-based uniform in [0,1): a pure function of its four keys.
double keyed_uniform(std::uint64_t seed, std::uint64_t cell, std::uint64_t sample,
                     std::uint64_t stream);

struct SweepSample {
    double s_h = 0.0;
    double b2_0 = 0.0;
    int sample = 0;
    double d1 = 0.0;
    double d2 = 0.0;
    double theta = 0.0;
    bool holds = false;
};

struct SweepCell {
    double s_h = 0.0;
    double b2_0 = 0.0;
    int accepted = 0;
    int rejected = 0;
    int failed = 0;
};

struct HypothesisSweep {
    /// Accepted draws only, ordered by cell then sample.
    std::vector<SweepSample> samples;
    std::vector<SweepCell> cells;
};

/// Draws (d1, d2) uniformly with d1 <= d2 <= b2_0 (b1_0 = 1) for every
/// (s_h, b2_0) cell and discards draws whose theta leaves (0,1).
HypothesisSweep hypothesis_sweep(const SweepSpec& spec, std::uint64_t seed, int threads = 1);

struct RunResult {
    int exit_code = 0;
    nlohmann::json summary;
    std::vector<std::string> files;
};

/// Runs one configuration into `out_dir` (created if needed): manifest.json,
/// summary.json and the mode's CSV files.
RunResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace wolb
