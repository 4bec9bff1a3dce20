#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wolb/model_core.hpp"
#include "wolb/planner.hpp"
#include "wolb/spatial.hpp"

namespace wolb {

struct TwoSpeciesState {
    double n1 = 0.0;
    double n2 = 0.0;

    double proportion() const { return n1 + n2 > 0.0 ? n2 / (n1 + n2) : 0.0; }
};

/// How the single release enters the two-species system.
enum class ReleaseMode {
    /// n2(0+) = u0: an instantaneous state jump.
    jump,
    /// Constant rate u0/tau on [0, tau).
    pulse,
};

struct ReductionConfig {
    double epsilon = 1e-3;
    ReleaseMode release = ReleaseMode::pulse;
    double pulse_duration = 0.05;

    void validate() const;
};

struct TwoSpeciesRun {
    std::vector<double> times;
    /// states[k][c]: cell c at times[k].
    std::vector<std::vector<TwoSpeciesState>> states;
    int steps = 0;
};

/// Wild equilibrium K (1 - d1/b1) with b1 = b1_0/epsilon.
double wild_equilibrium(double K, double epsilon, const BioParams& params);
/// Invasion steady state K (1 - d2/b2) with b2 = b2_0/epsilon.
double invasion_equilibrium(double K, double epsilon, const BioParams& params);

/// Per-cell RK4 of the diffusion-free two-species system with fecundity
/// b_i0/epsilon, starting at the wild equilibrium unless `initial` is given.
/// Step dt = epsilon/100.
TwoSpeciesRun simulate_two_species(std::span<const double> u0, const CarryingCapacity& K,
                                   const Grid& grid, double T, std::span<const double> snapshots,
                                   const BioParams& params, const ReductionConfig& cfg,
                                   std::span<const TwoSpeciesState> initial = {});

/// 1/2 sum (n1^2 + ((n2* - n2)_+)^2) |cell|.
double cost_full(std::span<const TwoSpeciesState> states, const CarryingCapacity& K,
                 const Grid& grid, const BioParams& params, double epsilon);

/// Reduced-model counterpart of a release: p' = f(p) + (u/K) g(p) with the
/// same release profile (a jump becomes p(0+) = G^-1(u0/K)). Returns
/// proportions at the snapshot times, indexed [k][c].
std::vector<std::vector<double>> reduced_release_trajectory(std::span<const double> u0,
                                                            const CarryingCapacity& K,
                                                            std::span<const double> snapshots,
                                                            const BioParams& params,
                                                            const ReductionConfig& cfg);

/// Independent propagation: solves int_{p0}^{pT} dv/f(v) = T by bisection
/// on pT, with the integral from adaptive Gauss-Kronrod quadrature.
double propagate_by_F(double p0, double T, const BioParams& params);

struct BruteForceResult {
    double cost = 0.0;
    std::vector<double> p0;
    std::vector<int> levels;
    std::uint64_t feasible = 0;
};

/// Exhaustive search over p0 in {0, p_M/(L-1), ..., p_M} per cell, subject to
/// the budget. Nonzero seeds shuffle the enumeration order per cell.
BruteForceResult brute_force_plan(const CarryingCapacity& K, const Grid& grid,
                                  const Budget& budget, const BioParams& params, int levels = 21,
                                  std::uint64_t shuffle_seed = 0);

}  // namespace wolb
