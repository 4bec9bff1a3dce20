#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wolb/model_core.hpp"
#include "wolb/spatial.hpp"
#include "wolb/switch_profile.hpp"

namespace wolb {

/// Release constraints: total stock C, pointwise cap M, horizon T.
struct Budget {
    double C = 30.0;
    double M = 250.0;
    double T = 1.0;

    void validate() const;
};

enum class Regime { small_T, large_T_direct, large_T_bathtub, constant_K, full_release };
const char* to_string(Regime r);

enum class KktCase { zero, saturated, interior, mixed };
const char* to_string(KktCase c);

/// Largest violation of each first-order case of the optimality system,
/// plus the second-order condition dw/dp0 >= 0 on interior cells.
struct KktSummary {
    double saturated = 0.0;
    double zero = 0.0;
    double interior = 0.0;
    double second_order = 0.0;
    double budget_rel = 0.0;
    std::vector<KktCase> cases;

    double max_first_order() const;
    bool ok(double tol = 1e-6, double so_tol = 1e-8, double budget_tol = 1e-6) const;
};

/// Planner output. One cell may carry chi in (0,1): the fraction of that cell
/// released at p0 (the rest receives nothing), so u0 = chi K G(p0) there.
/// Everywhere else chi = 1 and u0 = K G(p0).
struct Plan {
    Regime regime = Regime::small_T;
    Budget budget;
    double lambda_star = 0.0;
    double lambda0 = 0.0;
    double lambda1 = 0.0;
    std::vector<double> p0;
    std::vector<double> u0;
    std::vector<double> chi;
    std::vector<double> pT;
    std::vector<double> p_M;
    double cost = 0.0;
    double budget_used = 0.0;
    int cost_evaluations = 0;
    KktSummary kkt;
    std::vector<std::string> notes;
};

struct PlannerOptions {
    int n_lambda = 64;
    int profile_intervals = 1024;
    /// Bathtub ties are broken by ascending cell index unless set.
    bool reverse_ties = false;
    bool require_H = true;
    double lambda_tol = 1e-10;
    double budget_rtol = 1e-8;
    double golden_rtol = 1e-8;
    /// Nonzero seeds randomly widen the initial multiplier bracket.
    std::uint64_t bracket_seed = 0;
};

/// Per-run data shared by the multiplier searches: the switch-function table
/// and the per-cell quantities p_M, w(p_M) and min w on (0, p_M).
class PlannerContext {
public:
    PlannerContext(const CarryingCapacity& K, const Grid& grid, const Budget& budget,
                   const BioParams& params, const PlannerOptions& opts = {});

    const CarryingCapacity& K() const { return K_; }
    const Grid& grid() const { return grid_; }
    const Budget& budget() const { return budget_; }
    const BioParams& params() const { return params_; }
    const PlannerOptions& options() const { return opts_; }
    const SwitchProfile& profile() const { return *profile_; }
    const DerivedThresholds& thresholds() const { return thresholds_; }
    bool large_T() const { return budget_.T > thresholds_.T0; }

    std::size_t size() const { return grid_.size(); }
    double p_M(std::size_t c) const { return pM_[c]; }
    double w0() const { return w0_; }
    double w_pM(std::size_t c) const { return wM_[c]; }
    double w_min(std::size_t c) const { return wmin_[c]; }
    double capacity() const;

private:
    const CarryingCapacity& K_;
    const Grid& grid_;
    Budget budget_;
    BioParams params_;
    PlannerOptions opts_;
    DerivedThresholds thresholds_;
    std::unique_ptr<SwitchProfile> profile_;
    double w0_ = 0.0;
    std::vector<double> pM_, wM_, wmin_;
};

double cost_J0(std::span<const double> p0, const CarryingCapacity& K, const Grid& grid, double T,
               const BioParams& params);

double psi_small_T(const PlannerContext& ctx, std::size_t cell, double lambda);
double I_of_lambda(const PlannerContext& ctx, double lambda);
Plan solve_small_T(const CarryingCapacity& K, const Grid& grid, const Budget& budget,
                   const BioParams& params, const PlannerOptions& opts = {});

double psi0_big_T(const PlannerContext& ctx, std::size_t cell, double lambda);
double psi1_big_T(const PlannerContext& ctx, std::size_t cell, double lambda);
double I0_of_lambda(const PlannerContext& ctx, double lambda);
double I1_of_lambda(const PlannerContext& ctx, double lambda);

struct LambdaBrackets {
    double lambda0 = 0.0;
    double lambda1 = 0.0;
    /// I0 just right of lambda0 and I1 just left of lambda1.
    double I0_at_lambda0 = 0.0;
    double I1_at_lambda1 = 0.0;
};
LambdaBrackets lambda_brackets(const PlannerContext& ctx);

struct OmegaTilde {
    std::vector<std::size_t> cells;
    std::vector<char> member;
    /// psi0 (= psi1 off the set) and psi1 per cell.
    std::vector<double> psi0;
    std::vector<double> psi1;
    double c_tilde = 0.0;
    double measure = 0.0;
};
OmegaTilde omega_tilde(const PlannerContext& ctx, double lambda);

struct SecondaryProblem {
    std::vector<std::size_t> cells;
    double c_tilde = 0.0;
    std::vector<double> phi;
    std::vector<double> chi;
    double lambda_tilde = 0.0;
    double surplus = 0.0;
};
SecondaryProblem secondary_bathtub(const PlannerContext& ctx, const OmegaTilde& omega);

Plan solve_large_T(const CarryingCapacity& K, const Grid& grid, const Budget& budget,
                   const BioParams& params, const PlannerOptions& opts = {});

/// Dispatches on the horizon and handles the saturated (C >= M|Omega|) and
/// constant-K special cases.
Plan solve(const CarryingCapacity& K, const Grid& grid, const Budget& budget,
           const BioParams& params, const PlannerOptions& opts = {});

/// Evaluates the optimality system with full-accuracy propagation.
KktSummary kkt_residuals(const Plan& plan, const CarryingCapacity& K, const Grid& grid,
                         const BioParams& params);

/// Exact J0 of a plan, counting the fractional cell as a mixture.
double plan_cost(const Plan& plan, const CarryingCapacity& K, const Grid& grid,
                 const BioParams& params);

/// Maximal runs [begin, end) of cells sharing the same K.
std::vector<std::pair<std::size_t, std::size_t>> constant_K_intervals(const CarryingCapacity& K,
                                                                      double tol = 1e-12);
/// Sorts the field decreasingly on each interval; K must be constant there.
std::vector<double> monotone_rearrange(std::span<const double> p0, const CarryingCapacity& K,
                                       const std::vector<std::pair<std::size_t, std::size_t>>& intervals);

}  // namespace wolb
