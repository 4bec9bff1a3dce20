#pragma once

#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "wolb/model_core.hpp"
#include "wolb/planner.hpp"
#include "wolb/spatial.hpp"

namespace wolb {

enum class PdeScheme { imex, explicit_euler };
const char* to_string(PdeScheme s);
PdeScheme parse_scheme(const std::string& name);

struct PdeConfig {
    double D = 0.0;
    double dt = 1e-3;
    PdeScheme scheme = PdeScheme::imex;
    PsiVariant psi = PsiVariant::printed;
    /// Switches for identity checks: with both off only D*Laplacian remains.
    bool reaction = true;
    bool k_coupling = true;

    /// Throws DomainError on bad values or, for the explicit scheme, when
    /// dt > dx^2/(2 D dim).
    void validate(const Grid& grid) const;
};

struct PdeRun {
    std::vector<double> p0;
    std::vector<double> times;
    /// snapshots[k][c]: p at times[k].
    std::vector<std::vector<double>> snapshots;
    std::vector<double> pT;
    double cost = 0.0;
    int steps = 0;
    /// Largest excursion of any state outside [0,1].
    double max_principle_violation = 0.0;
};

/// Lie splitting per step: RK4 on the local reaction f(p) - D (Lap K/K) psi(p),
/// then the transport operator D Lap p + 2 D (grad K/K).grad p with
/// homogeneous Neumann walls, implicit (imex) or forward (explicit).
class PdeSolver {
public:
    PdeSolver(const CarryingCapacity& K, const Grid& grid, double T, const PdeConfig& cfg,
              const BioParams& params);
    ~PdeSolver();
    PdeSolver(const PdeSolver&) = delete;
    PdeSolver& operator=(const PdeSolver&) = delete;

    int steps() const { return steps_; }
    double dt() const { return dt_; }
    double T() const { return T_; }
    const std::vector<double>& grad_log_K_x() const { return beta_x_; }
    const std::vector<double>& lap_K_over_K() const { return kappa_; }

    /// Snapshot times are rounded to the nearest step.
    PdeRun run(std::span<const double> p0, std::span<const double> snapshot_times = {}) const;

    /// J0 = sum K^2 (1 - p(T))^2 |cell| of the release u0, p0 = G^-1(u0/K).
    double cost_of_release(std::span<const double> u0) const;
    /// Same cost with its exact discrete gradient with respect to u0.
    double cost_and_gradient(std::span<const double> u0, std::vector<double>& grad) const;

private:
    struct Transport;
    void reaction_step(std::vector<double>& p) const;
    double reaction_rate(std::size_t c, double p) const;
    double reaction_slope(std::size_t c, double p) const;
    std::vector<double> release_to_p0(std::span<const double> u0) const;

    const CarryingCapacity& K_;
    const Grid& grid_;
    BioParams params_;
    RateKernel kernel_;
    PdeConfig cfg_;
    double T_;
    int steps_;
    double dt_;
    std::vector<double> kappa_, beta_x_, beta_y_;
    std::unique_ptr<Transport> transport_;
};

PdeRun simulate_pde(std::span<const double> p0, const CarryingCapacity& K, const Grid& grid,
                    double T, const PdeConfig& cfg, const BioParams& params,
                    std::span<const double> snapshot_times = {});

/// Euclidean projection onto {0 <= u <= M, sum u |cell| <= C}.
std::vector<double> project_capped(std::span<const double> v, std::span<const double> measure,
                                   double M, double C);

struct PdeOptions {
    int max_iter = 500;
    double rel_decrease = 1e-8;
    double armijo = 1e-4;
};

struct PdeOptimum {
    std::vector<double> u0;
    std::vector<double> p0;
    double cost = 0.0;
    double initial_cost = 0.0;
    int iterations = 0;
    int evaluations = 0;
    /// || P(u - grad) - u ||_inf at the returned iterate.
    double first_order_residual = 0.0;
    bool converged = false;
    bool line_search_failed = false;
};

/// Projected gradient on u0 with Barzilai-Borwein trial steps and Armijo
/// backtracking; the gradient comes from the discrete adjoint.
PdeOptimum optimize_pde(const CarryingCapacity& K, const Grid& grid, const Budget& budget,
                        const PdeConfig& cfg, const BioParams& params,
                        std::span<const double> init_u0, const PdeOptions& opts = {});

struct LimitSweepRow {
    double D = 0.0;
    /// Cost of the diffusion-free plan simulated with diffusion D.
    double cost_of_reference = 0.0;
    double reoptimized_cost = 0.0;
    /// sum |u_D - u_ref| |cell|.
    double l1_distance = 0.0;
    int iterations = 0;
    /// Re-optimized release (the reference when re-optimization is off).
    std::vector<double> u0;
};

struct LimitSweep {
    double reference_cost = 0.0;
    std::vector<double> reference_u0;
    std::vector<LimitSweepRow> rows;
};

/// The reference is the planner's diffusion-free optimum; every D in the list
/// is re-optimized from it. Independent D values run on up to `threads` threads.
LimitSweep diffusion_limit_sweep(const CarryingCapacity& K, const Grid& grid, const Budget& budget,
                                 const BioParams& params, std::span<const double> D_list,
                                 const PdeConfig& base, bool reoptimize = true, int threads = 1,
                                 const PdeOptions& opts = {});

/// Rows t,cell_index,p.
void write_trajectory_csv(std::ostream& os, const PdeRun& run);

}  // namespace wolb
