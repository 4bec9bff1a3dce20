#include "wolb/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <Eigen/Core>
#include <boost/version.hpp>

#include "wolb/acceptance.hpp"
#include "wolb/plan_io.hpp"

namespace wolb {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

// Typed, strict access to one JSON object. Every key read is recorded so that
// finish() can reject the ones nobody asked for.
class Block {
public:
    Block(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    double number(const std::string& key, double def) {
        if (!has(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_number()) throw ConfigError(where(key) + " must be a number");
        return v.get<double>();
    }

    int integer(const std::string& key, int def) {
        if (!has(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_number_integer()) throw ConfigError(where(key) + " must be an integer");
        return v.get<int>();
    }

    std::uint64_t unsigned_integer(const std::string& key, std::uint64_t def) {
        if (!has(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_number_unsigned()) throw ConfigError(where(key) + " must be a nonnegative integer");
        return v.get<std::uint64_t>();
    }

    bool flag(const std::string& key, bool def) {
        if (!has(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_boolean()) throw ConfigError(where(key) + " must be true or false");
        return v.get<bool>();
    }

    std::string text(const std::string& key, const std::string& def) {
        if (!has(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_string()) throw ConfigError(where(key) + " must be a string");
        return v.get<std::string>();
    }

    std::vector<double> numbers(const std::string& key, std::vector<double> def) {
        if (!has(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_array()) throw ConfigError(where(key) + " must be an array of numbers");
        std::vector<double> out;
        for (const json& x : v) {
            if (!x.is_number()) throw ConfigError(where(key) + " must be an array of numbers");
            out.push_back(x.get<double>());
        }
        return out;
    }

    std::vector<std::string> texts(const std::string& key) {
        if (!has(key)) return {};
        const json& v = j_.at(key);
        if (!v.is_array()) throw ConfigError(where(key) + " must be an array of strings");
        std::vector<std::string> out;
        for (const json& x : v) {
            if (!x.is_string()) throw ConfigError(where(key) + " must be an array of strings");
            out.push_back(x.get<std::string>());
        }
        return out;
    }

    Block child(const std::string& key) {
        seen_.insert(key);
        return Block(j_.at(key), where(key));
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) throw ConfigError("unknown key " + where(item.key()));
        }
    }

private:
    std::string where(const std::string& key) const { return path_ + "." + key; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

std::string lower_dash(std::string s) {
    std::replace(s.begin(), s.end(), '_', '-');
    return s;
}

ReleaseMode parse_release(const std::string& s) {
    if (s == "pulse") return ReleaseMode::pulse;
    if (s == "jump") return ReleaseMode::jump;
    throw ConfigError("unknown release '" + s + "' (pulse|jump)");
}

const char* to_string(ReleaseMode m) { return m == ReleaseMode::pulse ? "pulse" : "jump"; }

PsiVariant parse_psi(const std::string& s) {
    if (s == "printed") return PsiVariant::printed;
    if (s == "restored_b1") return PsiVariant::restored_b1;
    throw ConfigError("unknown psi variant '" + s + "' (printed|restored_b1)");
}

const char* to_string(PsiVariant v) { return v == PsiVariant::printed ? "printed" : "restored_b1"; }

CarryingCapacity make_K(const ExperimentConfig& c, const Grid& g) {
    if (c.landscape.kind == KKind::table) return load_K_csv(c.landscape.table_csv, g);
    return eval_K(c.landscape.kind, c.landscape.K0, g);
}

bool needs_landscape(Mode m) {
    return m == Mode::plan || m == Mode::simulate_pde || m == Mode::limit_sweep ||
           m == Mode::two_species;
}

// Value checks that need the whole configuration; any library error becomes
// a configuration error here so that the CLI can tell the two apart.
void check_values(const ExperimentConfig& c) {
    try {
        c.params.validate();
        if (c.threads < 1) throw ConfigError("threads must be >= 1");
        if (needs_landscape(c.mode)) {
            c.budget.validate();
            if (!(c.landscape.K0 > 0.0)) throw ConfigError("landscape.K0_mosquitoes_per_area must be > 0");
            if (c.landscape.kind == KKind::table && c.landscape.table_csv.empty()) {
                throw ConfigError("landscape.table_csv is required for kind table");
            }
            const Grid g = c.grid.build();
            make_K(c, g);
            if (c.mode == Mode::simulate_pde || c.mode == Mode::limit_sweep) {
                c.pde.solver.validate(g);
                for (double D : c.pde.D_list) {
                    PdeConfig p = c.pde.solver;
                    p.D = D;
                    p.validate(g);
                }
                if (c.pde.options.max_iter < 0) throw ConfigError("pde.max_iterations must be >= 0");
            }
            if (c.mode == Mode::limit_sweep && c.pde.D_list.empty()) {
                throw ConfigError("limit-sweep needs a nonempty pde.D_list_area_per_day");
            }
            for (double t : c.pde.snapshot_times) {
                if (!(t >= 0.0 && t <= c.budget.T)) throw ConfigError("pde snapshot outside [0, T_days]");
            }
        }
        if (c.mode == Mode::two_species) {
            if (c.reduction.epsilons.empty()) throw ConfigError("reduction.epsilons is empty");
            for (double e : c.reduction.epsilons) {
                ReductionConfig r{e, c.reduction.release, c.reduction.pulse_duration};
                r.validate();
            }
            if (c.reduction.snapshots < 1) throw ConfigError("reduction.snapshots must be >= 1");
        }
        if (c.mode == Mode::hypothesis_sweep) {
            const SweepSpec& s = c.sweep;
            if (s.samples_per_cell < 100) throw ConfigError("sweep.samples_per_cell must be >= 100");
            if (s.n_grid < 100) throw ConfigError("sweep.n_grid must be >= 100");
            if (s.s_h.empty() || s.b2_0.empty() || s.T_list.empty()) {
                throw ConfigError("sweep lists must be nonempty");
            }
            for (double v : s.s_h) {
                if (!(v > 0.0 && v <= 1.0)) throw ConfigError("sweep.s_h_values must lie in (0,1]");
            }
            for (double v : s.b2_0) {
                if (!(v > 0.0 && v <= 1.0)) throw ConfigError("sweep.b2_0_values_per_day must lie in (0,1]");
            }
            for (double T : s.T_list) {
                if (!(T > 0.0 && std::isfinite(T))) throw ConfigError("sweep.T_days_list must be positive");
            }
        }
        if (c.mode == Mode::validate) {
            std::set<std::string> known;
            for (const auto& info : acceptance_criteria()) known.insert(info.id);
            for (const auto& id : c.validate.criteria) {
                if (!known.count(id)) throw ConfigError("unknown acceptance criterion '" + id + "'");
            }
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i; (i = next++) < n;) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::vector<std::string> coordinate_header(const Grid& g) {
    return g.dim == 2 ? std::vector<std::string>{"x", "y"} : std::vector<std::string>{"x"};
}

std::vector<double> coordinates(const Grid& g, std::size_t c) {
    return g.dim == 2 ? std::vector<double>{g.x[c], g.y[c]} : std::vector<double>{g.x[c]};
}

class Artifacts {
public:
    explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}

    void text(const std::string& name, const std::string& body) {
        write_text_file((dir_ / name).string(), body);
        files_.push_back(name);
    }

    void csv(const std::string& name, const std::vector<std::string>& header,
             const std::vector<std::vector<double>>& rows) {
        std::ostringstream os;
        write_csv(os, header, rows);
        text(name, os.str());
    }

    const std::vector<std::string>& files() const { return files_; }

private:
    fs::path dir_;
    std::vector<std::string> files_;
};

json kkt_json(const KktSummary& k) {
    return {{"saturated", k.saturated},
            {"zero", k.zero},
            {"interior", k.interior},
            {"second_order", k.second_order},
            {"budget_rel", k.budget_rel},
            {"max_first_order", k.max_first_order()},
            {"ok", k.ok()}};
}

std::vector<double> release_to_p0(std::span<const double> u0, const CarryingCapacity& K,
                                  const BioParams& params) {
    const double g_max = G_antideriv(1.0 - 1e-9, params);
    std::vector<double> p0(u0.size());
    for (std::size_t c = 0; c < u0.size(); ++c) {
        p0[c] = G_inverse(std::min(u0[c] / K.samples[c], g_max), params);
    }
    return p0;
}

void run_plan(const ExperimentConfig& cfg, Artifacts& out, json& summary) {
    const Grid grid = cfg.grid.build();
    const CarryingCapacity K = make_K(cfg, grid);
    PlannerOptions po;
    po.reverse_ties = cfg.reverse_ties;
    const Plan plan = solve(K, grid, cfg.budget, cfg.params, po);
    std::ostringstream os;
    write_plan_csv(os, plan, K, grid, cfg.params);
    out.text("plan.csv", os.str());
    out.text("plan.json", plan_to_json(plan, K, grid).dump(2) + "\n");
    summary["cost"] = plan.cost;
    summary["lambda_star"] = plan.lambda_star;
    summary["regime"] = to_string(plan.regime);
    summary["budget_used"] = plan.budget_used;
    summary["kkt"] = kkt_json(plan.kkt);
    summary["notes"] = plan.notes;
}

void run_simulate_pde(const ExperimentConfig& cfg, Artifacts& out, json& summary) {
    const Grid grid = cfg.grid.build();
    const CarryingCapacity K = make_K(cfg, grid);
    PlannerOptions po;
    po.reverse_ties = cfg.reverse_ties;
    const Plan ref = solve(K, grid, cfg.budget, cfg.params, po);
    std::ostringstream os;
    write_plan_csv(os, ref, K, grid, cfg.params);
    out.text("reference_plan.csv", os.str());

    const PdeSolver solver(K, grid, cfg.budget.T, cfg.pde.solver, cfg.params);
    std::vector<double> u0 = ref.u0;
    const double ref_cost = solver.cost_of_release(ref.u0);
    summary["reference_cost_without_diffusion"] = ref.cost;
    summary["reference_cost"] = ref_cost;
    const bool saturated = !(cfg.budget.C < cfg.budget.M * grid.total_measure());
    if (cfg.pde.optimize && !saturated) {
        const PdeOptimum opt =
            optimize_pde(K, grid, cfg.budget, cfg.pde.solver, cfg.params, ref.u0, cfg.pde.options);
        u0 = opt.u0;
        summary["iterations"] = opt.iterations;
        summary["evaluations"] = opt.evaluations;
        summary["first_order_residual"] = opt.first_order_residual;
        summary["converged"] = opt.converged;
        summary["line_search_failed"] = opt.line_search_failed;
    } else if (saturated) {
        summary["notes"] = json::array({"stock covers the cap everywhere; the release is u0 = M"});
    }
    std::vector<double> snaps = cfg.pde.snapshot_times;
    if (snaps.empty()) snaps = {0.0, 0.5 * cfg.budget.T, cfg.budget.T};
    const PdeRun run = solver.run(release_to_p0(u0, K, cfg.params), snaps);
    summary["cost"] = run.cost;
    summary["max_principle_violation"] = run.max_principle_violation;
    summary["D"] = cfg.pde.solver.D;

    auto header = coordinate_header(grid);
    for (const char* h : {"K", "u0_reference", "u0", "p0", "pT"}) header.push_back(h);
    std::vector<std::vector<double>> rows;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        auto row = coordinates(grid, c);
        for (double v : {K.samples[c], ref.u0[c], u0[c], run.p0[c], run.pT[c]}) row.push_back(v);
        rows.push_back(std::move(row));
    }
    out.csv("release.csv", header, rows);
    std::ostringstream traj;
    write_trajectory_csv(traj, run);
    out.text("trajectory.csv", traj.str());
}

void run_limit_sweep(const ExperimentConfig& cfg, Artifacts& out, json& summary) {
    const Grid grid = cfg.grid.build();
    const CarryingCapacity K = make_K(cfg, grid);
    const LimitSweep sw = diffusion_limit_sweep(K, grid, cfg.budget, cfg.params, cfg.pde.D_list,
                                                cfg.pde.solver, cfg.pde.optimize, cfg.threads,
                                                cfg.pde.options);
    std::vector<std::vector<double>> rows;
    json jrows = json::array();
    for (const auto& r : sw.rows) {
        rows.push_back({r.D, r.cost_of_reference, r.reoptimized_cost, r.l1_distance,
                        static_cast<double>(r.iterations)});
        jrows.push_back({{"D", r.D},
                         {"cost_of_reference", r.cost_of_reference},
                         {"reoptimized_cost", r.reoptimized_cost},
                         {"l1_distance", r.l1_distance},
                         {"iterations", r.iterations}});
    }
    out.csv("limit_sweep.csv", {"D", "cost_of_reference", "reoptimized_cost", "l1_distance", "iterations"},
            rows);
    auto header = coordinate_header(grid);
    header.push_back("K");
    header.push_back("u0_reference");
    for (const auto& r : sw.rows) header.push_back("u0_D" + fmt_double(r.D));
    std::vector<std::vector<double>> prof;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        auto row = coordinates(grid, c);
        row.push_back(K.samples[c]);
        row.push_back(sw.reference_u0[c]);
        for (const auto& r : sw.rows) row.push_back(r.u0[c]);
        prof.push_back(std::move(row));
    }
    out.csv("profiles.csv", header, prof);
    // Monotone in the order listed, which presets give from large to small D.
    bool monotone = true;
    for (std::size_t k = 1; k < sw.rows.size(); ++k) {
        monotone = monotone && sw.rows[k].l1_distance <= sw.rows[k - 1].l1_distance;
    }
    summary["reference_cost"] = sw.reference_cost;
    summary["rows"] = jrows;
    summary["l1_nonincreasing"] = monotone;
}

void run_two_species(const ExperimentConfig& cfg, Artifacts& out, json& summary) {
    const Grid grid = cfg.grid.build();
    const CarryingCapacity K = make_K(cfg, grid);
    const Plan plan = solve(K, grid, cfg.budget, cfg.params);
    std::ostringstream os;
    write_plan_csv(os, plan, K, grid, cfg.params);
    out.text("plan.csv", os.str());
    const int ns = cfg.reduction.snapshots;
    std::vector<double> snaps(ns);
    for (int k = 0; k < ns; ++k) snaps[k] = cfg.budget.T * (k + 1) / ns;
    std::vector<std::vector<double>> table, props;
    json jrows = json::array();
    double ratio_lo = INFINITY, ratio_hi = 0.0, last_gap = INFINITY;
    bool decreasing = true;
    for (double eps : cfg.reduction.epsilons) {
        ReductionConfig rc{eps, cfg.reduction.release, cfg.reduction.pulse_duration};
        const TwoSpeciesRun run = simulate_two_species(plan.u0, K, grid, cfg.budget.T, snaps, cfg.params, rc);
        const auto red = reduced_release_trajectory(plan.u0, K, snaps, cfg.params, rc);
        double gap = 0.0;
        for (int k = 0; k < ns; ++k) {
            for (std::size_t c = 0; c < grid.size(); ++c) {
                const double pf = run.states[k][c].proportion();
                gap = std::max(gap, std::abs(pf - red[k][c]));
                props.push_back({eps, snaps[k], static_cast<double>(c), pf, red[k][c]});
            }
        }
        const double full = cost_full(run.states.back(), K, grid, cfg.params, eps);
        table.push_back({eps, gap, gap / eps, full});
        jrows.push_back({{"epsilon", eps}, {"sup_gap", gap}, {"gap_over_epsilon", gap / eps}, {"cost_full", full}});
        ratio_lo = std::min(ratio_lo, gap / eps);
        ratio_hi = std::max(ratio_hi, gap / eps);
        decreasing = decreasing && gap < last_gap;
        last_gap = gap;
    }
    out.csv("reduction.csv", {"epsilon", "sup_gap", "gap_over_epsilon", "cost_full"}, table);
    out.csv("proportions.csv", {"epsilon", "t", "cell_index", "p_full", "p_reduced"}, props);
    summary["release"] = to_string(cfg.reduction.release);
    summary["rows"] = jrows;
    summary["gap_decreasing"] = decreasing;
    summary["gap_ratio_spread"] = ratio_hi / ratio_lo;
    summary["cost"] = plan.cost;
}

void run_hypothesis_sweep(const ExperimentConfig& cfg, Artifacts& out, json& summary) {
    const HypothesisSweep hs = hypothesis_sweep(cfg.sweep, cfg.seed, cfg.threads);
    std::vector<std::vector<double>> rows, cells;
    for (const auto& s : hs.samples) {
        rows.push_back({s.s_h, s.b2_0, static_cast<double>(s.sample), s.d1, s.d2, s.theta, s.holds ? 1.0 : 0.0});
    }
    json jcells = json::array();
    for (const auto& c : hs.cells) {
        cells.push_back({c.s_h, c.b2_0, static_cast<double>(c.accepted), static_cast<double>(c.rejected),
                         static_cast<double>(c.failed)});
        jcells.push_back({{"s_h", c.s_h}, {"b2_0", c.b2_0}, {"accepted", c.accepted},
                          {"rejected", c.rejected}, {"failed", c.failed}});
    }
    out.csv("hypothesis_samples.csv", {"s_h", "b2_0", "sample", "d1", "d2", "theta", "holds"}, rows);
    out.csv("hypothesis_cells.csv", {"s_h", "b2_0", "accepted", "rejected", "failed"}, cells);
    summary["cells"] = jcells;
}

int run_validate(const ExperimentConfig& cfg, Artifacts& out, json& summary) {
    AcceptanceOptions opts;
    opts.reduced_resolution = cfg.validate.reduced_resolution;
    opts.only = cfg.validate.criteria;
    opts.threads = cfg.threads;
    const AcceptanceReport report = run_acceptance(opts);
    out.text("validation.json", report.to_json().dump(2) + "\n");
    summary["passed"] = report.count(CriterionStatus::pass);
    summary["failed"] = report.count(CriterionStatus::fail);
    summary["skipped"] = report.count(CriterionStatus::skipped);
    return report.ok() ? 0 : 3;
}

json versions() {
    return {{"wolb", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"boost", BOOST_LIB_VERSION},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
#if defined(__clang__)
            {"compiler", "clang " __clang_version__},
#elif defined(__GNUC__)
            {"compiler", "gcc " __VERSION__},
#else
            {"compiler", "unknown"},
#endif
            {"cplusplus", __cplusplus}};
}

ExperimentConfig plan_run(std::string name, KKind kind, double C, double T) {
    ExperimentConfig c;
    c.name = std::move(name);
    c.mode = Mode::plan;
    c.landscape.kind = kind;
    c.budget.C = C;
    c.budget.T = T;
    return c;
}

std::string tag(double v) {
    std::string s = fmt_double(v);
    std::replace(s.begin(), s.end(), '.', 'p');
    return s;
}

}  // namespace

const char* to_string(Mode m) {
    switch (m) {
        case Mode::plan: return "plan";
        case Mode::simulate_pde: return "simulate-pde";
        case Mode::limit_sweep: return "limit-sweep";
        case Mode::two_species: return "two-species";
        case Mode::hypothesis_sweep: return "hypothesis-sweep";
        case Mode::validate: return "validate";
    }
    return "?";
}

Mode parse_mode(const std::string& name) {
    const std::string n = lower_dash(name);
    for (Mode m : {Mode::plan, Mode::simulate_pde, Mode::limit_sweep, Mode::two_species,
                   Mode::hypothesis_sweep, Mode::validate}) {
        if (n == to_string(m)) return m;
    }
    throw ConfigError("unknown mode '" + name + "'");
}

Grid GridSpec::build() const {
    if (dim != 1 && dim != 2) throw ConfigError("grid.dim must be 1 or 2");
    if (resolved_cells() < 2) throw ConfigError("grid.cells_per_axis must be >= 2");
    if (dim == 2) return build_grid_2d({length_x, length_y}, resolved_cells(), resolved_cells());
    return build_grid(1, {length_x, length_y}, resolved_cells());
}

ExperimentConfig config_from_json(const json& j, const std::string& mode_override) {
    ExperimentConfig c;
    Block top(j, "config");
    const std::string mode_text = top.text("mode", "");
    if (mode_text.empty() && mode_override.empty()) throw ConfigError("config.mode is required");
    if (!mode_override.empty()) {
        c.mode = parse_mode(mode_override);
        if (!mode_text.empty() && parse_mode(mode_text) != c.mode) {
            throw ConfigError("config.mode '" + mode_text + "' conflicts with subcommand '" + mode_override + "'");
        }
    } else {
        c.mode = parse_mode(mode_text);
    }
    c.name = top.text("name", c.name);
    if (c.name.empty() || c.name.find('/') != std::string::npos || c.name == "." || c.name == "..") {
        throw ConfigError("config.name must be a plain directory name");
    }
    c.seed = top.unsigned_integer("seed", c.seed);
    c.threads = top.integer("threads", c.threads);

    if (top.has("params")) {
        Block b = top.child("params");
        c.params.b1_0 = b.number("b1_0_per_day", c.params.b1_0);
        c.params.b2_0 = b.number("b2_0_per_day", c.params.b2_0);
        c.params.d1 = b.number("d1_per_day", c.params.d1);
        c.params.d2 = b.number("d2_per_day", c.params.d2);
        c.params.s_h = b.number("s_h", c.params.s_h);
        b.finish();
    }
    if (needs_landscape(c.mode)) {
        if (!top.has("budget")) throw ConfigError("mode " + std::string(to_string(c.mode)) + " needs a budget block");
        if (!top.has("landscape")) {
            throw ConfigError("mode " + std::string(to_string(c.mode)) + " needs a landscape block");
        }
    }
    if (top.has("budget")) {
        Block b = top.child("budget");
        c.budget.C = b.number("C_mosquitoes", c.budget.C);
        c.budget.M = b.number("M_mosquitoes_per_area", c.budget.M);
        c.budget.T = b.number("T_days", c.budget.T);
        b.finish();
    }
    if (top.has("landscape")) {
        Block b = top.child("landscape");
        if (!b.has("kind")) throw ConfigError("config.landscape.kind is required");
        c.landscape.kind = parse_kind(b.text("kind", ""));
        c.landscape.K0 = b.number("K0_mosquitoes_per_area", c.landscape.K0);
        c.landscape.table_csv = b.text("table_csv", "");
        b.finish();
        // The 2D landscape implies a 2D grid unless the grid block says otherwise.
        if (c.landscape.kind == KKind::separable_2d) c.grid.dim = 2;
    }
    if (top.has("grid")) {
        Block b = top.child("grid");
        c.grid.dim = b.integer("dim", c.grid.dim);
        c.grid.cells = b.integer("cells_per_axis", c.grid.cells);
        c.grid.length_x = b.number("length_x", c.grid.length_x);
        c.grid.length_y = b.number("length_y", c.grid.length_y);
        b.finish();
    }
    if (top.has("planner")) {
        Block b = top.child("planner");
        c.reverse_ties = b.flag("reverse_ties", c.reverse_ties);
        b.finish();
    }
    if ((c.mode == Mode::simulate_pde || c.mode == Mode::limit_sweep) && !top.has("pde")) {
        throw ConfigError("mode " + std::string(to_string(c.mode)) + " needs a pde block");
    }
    if (top.has("pde")) {
        Block b = top.child("pde");
        PdeConfig& s = c.pde.solver;
        if (c.mode == Mode::simulate_pde && !b.has("D_area_per_day")) {
            throw ConfigError("simulate-pde needs pde.D_area_per_day");
        }
        s.D = b.number("D_area_per_day", s.D);
        s.dt = b.number("dt_days", s.dt);
        try {
            s.scheme = parse_scheme(b.text("scheme", to_string(s.scheme)));
        } catch (const DomainError& e) {
            throw ConfigError(e.what());
        }
        s.psi = parse_psi(b.text("psi", to_string(s.psi)));
        s.reaction = b.flag("reaction", s.reaction);
        s.k_coupling = b.flag("k_coupling", s.k_coupling);
        c.pde.optimize = b.flag("optimize", c.pde.optimize);
        c.pde.D_list = b.numbers("D_list_area_per_day", c.pde.D_list);
        c.pde.snapshot_times = b.numbers("snapshot_times_days", c.pde.snapshot_times);
        c.pde.options.max_iter = b.integer("max_iterations", c.pde.options.max_iter);
        c.pde.options.rel_decrease = b.number("rel_decrease", c.pde.options.rel_decrease);
        b.finish();
    }
    if (c.mode == Mode::two_species && !top.has("reduction")) {
        throw ConfigError("mode two-species needs a reduction block");
    }
    if (top.has("reduction")) {
        Block b = top.child("reduction");
        c.reduction.epsilons = b.numbers("epsilons", c.reduction.epsilons);
        c.reduction.release = parse_release(b.text("release", to_string(c.reduction.release)));
        c.reduction.pulse_duration = b.number("pulse_duration_days", c.reduction.pulse_duration);
        c.reduction.snapshots = b.integer("snapshots", c.reduction.snapshots);
        b.finish();
    }
    if (c.mode == Mode::hypothesis_sweep && !top.has("sweep")) {
        throw ConfigError("mode hypothesis-sweep needs a sweep block");
    }
    if (top.has("sweep")) {
        Block b = top.child("sweep");
        c.sweep.s_h = b.numbers("s_h_values", c.sweep.s_h);
        c.sweep.b2_0 = b.numbers("b2_0_values_per_day", c.sweep.b2_0);
        c.sweep.samples_per_cell = b.integer("samples_per_cell", c.sweep.samples_per_cell);
        c.sweep.T_list = b.numbers("T_days_list", c.sweep.T_list);
        c.sweep.n_grid = b.integer("n_grid", c.sweep.n_grid);
        b.finish();
    }
    if (top.has("validate")) {
        Block b = top.child("validate");
        c.validate.reduced_resolution = b.flag("reduced_resolution", c.validate.reduced_resolution);
        c.validate.criteria = b.texts("criteria");
        b.finish();
    }
    top.finish();
    check_values(c);
    return c;
}

ExperimentConfig load_config(const std::string& path, const std::string& mode_override) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    return config_from_json(j, mode_override);
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["name"] = c.name;
    j["mode"] = to_string(c.mode);
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["params"] = {{"b1_0_per_day", c.params.b1_0},
                   {"b2_0_per_day", c.params.b2_0},
                   {"d1_per_day", c.params.d1},
                   {"d2_per_day", c.params.d2},
                   {"s_h", c.params.s_h}};
    j["budget"] = {{"C_mosquitoes", c.budget.C}, {"M_mosquitoes_per_area", c.budget.M}, {"T_days", c.budget.T}};
    j["landscape"] = {{"kind", to_string(c.landscape.kind)}, {"K0_mosquitoes_per_area", c.landscape.K0}};
    if (!c.landscape.table_csv.empty()) j["landscape"]["table_csv"] = c.landscape.table_csv;
    j["grid"] = {{"dim", c.grid.dim},
                 {"cells_per_axis", c.grid.resolved_cells()},
                 {"length_x", c.grid.length_x},
                 {"length_y", c.grid.length_y}};
    j["planner"] = {{"reverse_ties", c.reverse_ties}};
    const PdeConfig& s = c.pde.solver;
    j["pde"] = {{"D_area_per_day", s.D},
                {"dt_days", s.dt},
                {"scheme", s.scheme == PdeScheme::imex ? "imex" : "explicit"},
                {"psi", to_string(s.psi)},
                {"reaction", s.reaction},
                {"k_coupling", s.k_coupling},
                {"optimize", c.pde.optimize},
                {"D_list_area_per_day", c.pde.D_list},
                {"snapshot_times_days", c.pde.snapshot_times},
                {"max_iterations", c.pde.options.max_iter},
                {"rel_decrease", c.pde.options.rel_decrease}};
    j["reduction"] = {{"epsilons", c.reduction.epsilons},
                      {"release", to_string(c.reduction.release)},
                      {"pulse_duration_days", c.reduction.pulse_duration},
                      {"snapshots", c.reduction.snapshots}};
    j["sweep"] = {{"s_h_values", c.sweep.s_h},
                  {"b2_0_values_per_day", c.sweep.b2_0},
                  {"samples_per_cell", c.sweep.samples_per_cell},
                  {"T_days_list", c.sweep.T_list},
                  {"n_grid", c.sweep.n_grid}};
    j["validate"] = {{"reduced_resolution", c.validate.reduced_resolution}, {"criteria", c.validate.criteria}};
    return j;
}

std::vector<std::string> preset_names() {
    return {"fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11", "fig12", "fig13"};
}

std::vector<ExperimentConfig> preset(const std::string& name) {
    std::vector<ExperimentConfig> runs;
    auto plans = [&](KKind kind, std::vector<double> Cs, std::vector<double> Ts) {
        for (double C : Cs) {
            for (double T : Ts) runs.push_back(plan_run(name + "_C" + tag(C) + "_T" + tag(T), kind, C, T));
        }
    };
    auto diffusive = [&](KKind kind) {
        for (double D : {1e-3, 2e-2}) {
            for (double C : {30.0, 200.0}) {
                ExperimentConfig c = plan_run(name + "_D" + tag(D) + "_C" + tag(C), kind, C, 25.0);
                c.mode = Mode::simulate_pde;
                c.pde.solver.D = D;
                c.pde.snapshot_times = {0.0, 12.5, 25.0};
                runs.push_back(c);
            }
        }
    };
    auto limit = [&](double T) {
        ExperimentConfig c = plan_run(name + "_T" + tag(T), KKind::arctan, 30.0, T);
        c.mode = Mode::limit_sweep;
        c.grid.cells = 100;
        c.pde.D_list = {5e-2, 5e-3, 5e-4, 5e-5};
        runs.push_back(c);
    };
    auto sweep = [&](std::vector<double> s_h, std::vector<double> b2) {
        ExperimentConfig c;
        c.name = name;
        c.mode = Mode::hypothesis_sweep;
        c.sweep.s_h = std::move(s_h);
        c.sweep.b2_0 = std::move(b2);
        runs.push_back(c);
    };
    if (name == "fig3") {
        plans(KKind::sinusoidal, {30.0, 200.0}, {1.0, 25.0});
    } else if (name == "fig4") {
        plans(KKind::two_patch, {30.0, 200.0}, {1.0, 25.0});
    } else if (name == "fig5") {
        plans(KKind::two_patch, {30.0}, {25.0});
        runs.back().reverse_ties = true;
    } else if (name == "fig6") {
        diffusive(KKind::sinusoidal);
    } else if (name == "fig7") {
        diffusive(KKind::two_patch);
    } else if (name == "fig8") {
        // Diffusion-free references of the limit study.
        plans(KKind::arctan, {30.0}, {1.0, 20.0});
    } else if (name == "fig9") {
        limit(1.0);
    } else if (name == "fig10") {
        limit(20.0);
    } else if (name == "fig11") {
        sweep({0.5, 0.67, 0.83, 1.0}, {0.6, 0.73, 0.87, 1.0});
    } else if (name == "fig12") {
        sweep({0.9, 1.0}, {0.33, 0.47});
    } else if (name == "fig13") {
        plans(KKind::separable_2d, {30.0, 200.0}, {25.0});
        for (auto& r : runs) r.grid.dim = 2;
    } else {
        throw ConfigError("unknown preset '" + name + "'");
    }
    for (const auto& r : runs) check_values(r);
    return runs;
}

double keyed_uniform(std::uint64_t seed, std::uint64_t cell, std::uint64_t sample, std::uint64_t stream) {
    std::uint64_t x = splitmix64(seed);
    x = splitmix64(x ^ cell);
    x = splitmix64(x ^ sample);
    x = splitmix64(x ^ stream);
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

HypothesisSweep hypothesis_sweep(const SweepSpec& spec, std::uint64_t seed, int threads) {
    if (spec.samples_per_cell < 100) throw DomainError("samples_per_cell must be >= 100");
    const std::size_t nb = spec.b2_0.size();
    const std::size_t n_cells = spec.s_h.size() * nb;
    std::vector<std::vector<SweepSample>> per_cell(n_cells);
    HypothesisSweep out;
    out.cells.resize(n_cells);
    parallel_for(n_cells, threads, [&](std::size_t cell) {
        const double sh = spec.s_h[cell / nb], b2 = spec.b2_0[cell % nb];
        SweepCell& summary = out.cells[cell];
        summary.s_h = sh;
        summary.b2_0 = b2;
        for (int k = 0; k < spec.samples_per_cell; ++k) {
            const double a = b2 * keyed_uniform(seed, cell, k, 0);
            const double b = b2 * keyed_uniform(seed, cell, k, 1);
            const BioParams p{1.0, b2, std::min(a, b), std::max(a, b), sh};
            const double th = (1.0 - p.d1 * p.b2_0 / (p.d2 * p.b1_0)) / p.s_h;
            if (!(p.d1 > 0.0 && th > 0.0 && th < 1.0)) {
                ++summary.rejected;
                continue;
            }
            const auto checks = check_hypothesis_H(p, spec.T_list, spec.n_grid);
            const bool holds = std::all_of(checks.begin(), checks.end(), [](const auto& h) { return h.holds; });
            ++summary.accepted;
            if (!holds) ++summary.failed;
            per_cell[cell].push_back({sh, b2, k, p.d1, p.d2, th, holds});
        }
    });
    for (auto& v : per_cell) out.samples.insert(out.samples.end(), v.begin(), v.end());
    return out;
}

RunResult run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + out_dir.string() + ": " + ec.message());
    const auto start = std::chrono::steady_clock::now();
    Artifacts out(out_dir);
    RunResult r;
    json summary;
    summary["name"] = cfg.name;
    summary["mode"] = to_string(cfg.mode);
    summary["theta"] = theta(cfg.params);
    summary["T0"] = compute_T0(cfg.params);
    switch (cfg.mode) {
        case Mode::plan: run_plan(cfg, out, summary); break;
        case Mode::simulate_pde: run_simulate_pde(cfg, out, summary); break;
        case Mode::limit_sweep: run_limit_sweep(cfg, out, summary); break;
        case Mode::two_species: run_two_species(cfg, out, summary); break;
        case Mode::hypothesis_sweep: run_hypothesis_sweep(cfg, out, summary); break;
        case Mode::validate: r.exit_code = run_validate(cfg, out, summary); break;
    }
    summary["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    summary["exit_code"] = r.exit_code;
    out.text("summary.json", summary.dump(2) + "\n");
    json manifest{{"config", config_to_json(cfg)}, {"versions", versions()}, {"files", out.files()}};
    out.text("manifest.json", manifest.dump(2) + "\n");
    r.summary = std::move(summary);
    r.files = out.files();
    return r;
}

}  // namespace wolb
