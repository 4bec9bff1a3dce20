#include "wolb/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace wolb {

namespace {

// Comparisons that decide between "no release" and a positive release use
// this slack, so that ties go to the cheaper option.
constexpr double kTie = 1e-12;

}  // namespace

void Budget::validate() const {
    if (!(C > 0.0) || !std::isfinite(C)) throw DomainError("budget C must be positive");
    if (!(M > 0.0) || !std::isfinite(M)) throw DomainError("release cap M must be positive");
    if (!(T > 0.0) || !std::isfinite(T)) throw DomainError("horizon T must be positive");
}

const char* to_string(Regime r) {
    switch (r) {
        case Regime::small_T: return "small_T";
        case Regime::large_T_direct: return "large_T_direct";
        case Regime::large_T_bathtub: return "large_T_bathtub";
        case Regime::constant_K: return "constant_K";
        case Regime::full_release: return "full_release";
    }
    return "?";
}

const char* to_string(KktCase c) {
    switch (c) {
        case KktCase::zero: return "zero";
        case KktCase::saturated: return "saturated";
        case KktCase::interior: return "interior";
        case KktCase::mixed: return "mixed";
    }
    return "?";
}

double KktSummary::max_first_order() const { return std::max({saturated, zero, interior}); }

bool KktSummary::ok(double tol, double so_tol, double budget_tol) const {
    return max_first_order() <= tol && second_order <= so_tol && budget_rel <= budget_tol;
}

PlannerContext::PlannerContext(const CarryingCapacity& K, const Grid& grid, const Budget& budget,
                               const BioParams& params, const PlannerOptions& opts)
    : K_(K), grid_(grid), budget_(budget), params_(params), opts_(opts) {
    budget.validate();
    params.validate();
    if (K.samples.size() != grid.size()) throw DomainError("K does not match grid");
    thresholds_ = derive_thresholds(params);
    pM_.resize(grid.size());
    double cap = 0.0;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        pM_[c] = G_inverse(budget.M / K.samples[c], params);
        cap = std::max(cap, pM_[c]);
    }
    profile_ = std::make_unique<SwitchProfile>(params, budget.T, cap, opts.profile_intervals);
    w0_ = profile_->w(0.0);
    wM_.resize(grid.size());
    wmin_.resize(grid.size());
    for (std::size_t c = 0; c < grid.size(); ++c) {
        wM_[c] = profile_->w(pM_[c]);
        wmin_[c] = profile_->w_min_upto(pM_[c]);
    }
}

double PlannerContext::capacity() const { return budget_.M * grid_.total_measure(); }

double cost_J0(std::span<const double> p0, const CarryingCapacity& K, const Grid& grid, double T,
               const BioParams& params) {
    if (p0.size() != grid.size()) throw DomainError("cost_J0: field length does not match grid");
    const auto res = propagate_batch(p0, T, params);
    double s = 0.0;
    for (std::size_t c = 0; c < p0.size(); ++c) {
        const double k = K.samples[c], d = 1.0 - res[c].pT;
        s += k * k * d * d * grid.measure[c];
    }
    return s;
}

double plan_cost(const Plan& plan, const CarryingCapacity& K, const Grid& grid,
                 const BioParams& params) {
    const auto res = propagate_batch(plan.p0, plan.budget.T, params);
    double s = 0.0;
    for (std::size_t c = 0; c < plan.p0.size(); ++c) {
        const double k = K.samples[c], d = 1.0 - res[c].pT;
        // The unreleased part of a mixed cell stays at p = 0.
        s += k * k * (plan.chi[c] * d * d + (1.0 - plan.chi[c])) * grid.measure[c];
    }
    return s;
}

// ---------------------------------------------------------------------------
// Short horizons: w is increasing and the plan is unique.

double psi_small_T(const PlannerContext& ctx, std::size_t cell, double lambda) {
    const double t = -lambda / ctx.K().samples[cell];
    if (t <= ctx.w0() + kTie) return 0.0;
    if (t >= ctx.w_pM(cell)) return ctx.p_M(cell);
    return ctx.profile().inverse_increasing(t, 0.0, ctx.p_M(cell));
}

namespace {

template <class Psi>
double budget_of(const PlannerContext& ctx, double lambda, Psi&& psi) {
    double s = 0.0;
    for (std::size_t c = 0; c < ctx.size(); ++c) {
        const double p = psi(ctx, c, lambda);
        if (p > 0.0) s += ctx.K().samples[c] * G_antideriv(p, ctx.params()) * ctx.grid().measure[c];
    }
    return s;
}

void require_hypothesis(const BioParams& params, double T) {
    const auto h = check_hypothesis_H(params, T, 2000);
    if (!h.holds) {
        throw SolverError("hypothesis H fails at T = " + std::to_string(T) + " (" +
                          std::to_string(h.sign_changes) + " sign changes of A)");
    }
}

// Multiplier range over which every cell moves from p_M to 0.
std::pair<double, double> full_lambda_range(const PlannerContext& ctx) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (std::size_t c = 0; c < ctx.size(); ++c) {
        const double k = ctx.K().samples[c];
        lo = std::min(lo, -k * ctx.w_pM(c));
        hi = std::max(hi, -k * std::min(ctx.w0(), ctx.w_min(c)));
    }
    return {std::max(0.0, lo), hi * (1.0 + 1e-9) + 1e-12};
}

void finish_plan(const PlannerContext& ctx, Plan& plan) {
    const Grid& grid = ctx.grid();
    const auto& K = ctx.K().samples;
    plan.budget = ctx.budget();
    plan.p_M.resize(grid.size());
    plan.u0.resize(grid.size());
    for (std::size_t c = 0; c < grid.size(); ++c) {
        plan.p_M[c] = ctx.p_M(c);
        plan.p0[c] = std::clamp(plan.p0[c], 0.0, ctx.p_M(c));
        plan.u0[c] = plan.p0[c] > 0.0 ? plan.chi[c] * K[c] * G_antideriv(plan.p0[c], ctx.params()) : 0.0;
    }
    plan.budget_used = integrate(plan.u0, grid);
    const auto res = propagate_batch(plan.p0, ctx.budget().T, ctx.params());
    plan.pT.resize(grid.size());
    plan.cost = 0.0;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        plan.pT[c] = res[c].pT;
        const double d = 1.0 - res[c].pT;
        plan.cost += K[c] * K[c] * (plan.chi[c] * d * d + (1.0 - plan.chi[c])) * grid.measure[c];
    }
    plan.kkt = kkt_residuals(plan, ctx.K(), grid, ctx.params());
}

Plan full_release_plan(const PlannerContext& ctx) {
    Plan plan;
    plan.regime = Regime::full_release;
    plan.p0.resize(ctx.size());
    plan.chi.assign(ctx.size(), 1.0);
    for (std::size_t c = 0; c < ctx.size(); ++c) plan.p0[c] = ctx.p_M(c);
    plan.notes.push_back("C >= M|Omega|: the whole stock is released at the cap everywhere");
    finish_plan(ctx, plan);
    return plan;
}

}  // namespace

double I_of_lambda(const PlannerContext& ctx, double lambda) {
    return budget_of(ctx, lambda, psi_small_T);
}

Plan solve_small_T(const CarryingCapacity& K, const Grid& grid, const Budget& budget,
                   const BioParams& params, const PlannerOptions& opts) {
    PlannerContext ctx(K, grid, budget, params, opts);
    if (ctx.large_T()) throw SolverError("solve_small_T requires T <= T0");
    if (budget.C >= ctx.capacity()) return full_release_plan(ctx);
    if (opts.require_H) require_hypothesis(params, budget.T);

    auto [lo, hi] = full_lambda_range(ctx);
    if (opts.bracket_seed != 0) {
        std::mt19937_64 rng(opts.bracket_seed);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        lo *= 1.0 - 0.5 * U(rng);
        hi *= 1.0 + U(rng);
    }
    const double C = budget.C;
    double lambda = 0.5 * (lo + hi);
    for (int it = 0; it < 400; ++it) {
        lambda = 0.5 * (lo + hi);
        const double I = I_of_lambda(ctx, lambda);
        if (std::abs(I - C) <= opts.budget_rtol * C) break;
        if (I > C) lo = lambda; else hi = lambda;
        if (hi - lo <= 4 * std::numeric_limits<double>::epsilon() * hi) break;
    }
    Plan plan;
    plan.regime = Regime::small_T;
    plan.lambda_star = plan.lambda0 = plan.lambda1 = lambda;
    plan.p0.resize(grid.size());
    plan.chi.assign(grid.size(), 1.0);
    for (std::size_t c = 0; c < grid.size(); ++c) plan.p0[c] = psi_small_T(ctx, c, lambda);
    finish_plan(ctx, plan);
    return plan;
}

// ---------------------------------------------------------------------------
// Long horizons: w is unimodal, two candidate values per cell.

double psi0_big_T(const PlannerContext& ctx, std::size_t cell, double lambda) {
    const double t = -lambda / ctx.K().samples[cell];
    const double w0 = ctx.w0(), wM = ctx.w_pM(cell);
    if (t <= w0 + kTie) return 0.0;
    if (t > std::max(w0, wM)) return ctx.p_M(cell);
    return ctx.profile().inverse_increasing(t, 0.0, ctx.p_M(cell));
}

double psi1_big_T(const PlannerContext& ctx, std::size_t cell, double lambda) {
    const double t = -lambda / ctx.K().samples[cell];
    const double wmin = ctx.w_min(cell), wM = ctx.w_pM(cell);
    if (t < wmin + kTie) return 0.0;
    if (t >= wM) return ctx.p_M(cell);
    return ctx.profile().inverse_increasing(t, 0.0, ctx.p_M(cell));
}

double I0_of_lambda(const PlannerContext& ctx, double lambda) {
    return budget_of(ctx, lambda, psi0_big_T);
}

double I1_of_lambda(const PlannerContext& ctx, double lambda) {
    return budget_of(ctx, lambda, psi1_big_T);
}

LambdaBrackets lambda_brackets(const PlannerContext& ctx) {
    const double C = ctx.budget().C;
    if (C >= ctx.capacity()) throw DomainError("lambda brackets need C < M|Omega|");
    const double tol = ctx.options().lambda_tol;
    const auto range = full_lambda_range(ctx);
    LambdaBrackets b;
    // lambda0: smallest multiplier with I0 <= C, approached from the right.
    // Relative width for small multipliers keeps the budget residual tiny.
    const auto wide = [&](double lo, double hi) { return hi - lo > tol * std::min(1.0, hi); };
    double lo = 0.0, hi = range.second;
    while (wide(lo, hi)) {
        const double mid = 0.5 * (lo + hi);
        if (I0_of_lambda(ctx, mid) <= C) hi = mid; else lo = mid;
    }
    b.lambda0 = hi;
    b.I0_at_lambda0 = I0_of_lambda(ctx, hi);
    // lambda1: largest multiplier with I1 >= C, approached from the left.
    lo = 0.0;
    hi = range.second;
    while (wide(lo, hi)) {
        const double mid = 0.5 * (lo + hi);
        if (I1_of_lambda(ctx, mid) >= C) lo = mid; else hi = mid;
    }
    b.lambda1 = lo;
    b.I1_at_lambda1 = I1_of_lambda(ctx, lo);
    return b;
}

OmegaTilde omega_tilde(const PlannerContext& ctx, double lambda) {
    OmegaTilde o;
    const std::size_t n = ctx.size();
    o.member.assign(n, 0);
    o.psi0.resize(n);
    o.psi1.resize(n);
    double outside = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        o.psi0[c] = psi0_big_T(ctx, c, lambda);
        o.psi1[c] = psi1_big_T(ctx, c, lambda);
        if (std::abs(o.psi0[c] - o.psi1[c]) > 1e-12) {
            o.member[c] = 1;
            o.cells.push_back(c);
            o.measure += ctx.grid().measure[c];
        } else if (o.psi0[c] > 0.0) {
            outside += ctx.K().samples[c] * G_antideriv(o.psi0[c], ctx.params()) * ctx.grid().measure[c];
        }
    }
    o.c_tilde = ctx.budget().C - outside;
    return o;
}

SecondaryProblem secondary_bathtub(const PlannerContext& ctx, const OmegaTilde& omega) {
    SecondaryProblem s;
    s.cells = omega.cells;
    s.c_tilde = std::max(0.0, omega.c_tilde);
    const std::size_t m = s.cells.size();
    s.phi.resize(m);
    s.chi.assign(m, 0.0);
    std::vector<double> cost_cell(m);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t c = s.cells[i];
        const double k = ctx.K().samples[c];
        const double p1 = omega.psi1[c];
        const double pT = ctx.profile().pT(p1);
        const double Gp = G_antideriv(p1, ctx.params());
        s.phi[i] = k * pT * (2.0 - pT) / Gp;
        cost_cell[i] = k * Gp * ctx.grid().measure[c];
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    const bool rev = ctx.options().reverse_ties;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (s.phi[a] != s.phi[b]) return s.phi[a] > s.phi[b];
        return rev ? a > b : a < b;
    });
    double remaining = s.c_tilde;
    for (std::size_t r = 0; r < m; ++r) {
        const std::size_t i = order[r];
        s.lambda_tilde = s.phi[i];
        if (remaining >= cost_cell[i]) {
            s.chi[i] = 1.0;
            remaining -= cost_cell[i];
        } else {
            s.chi[i] = remaining / cost_cell[i];
            remaining = 0.0;
            break;
        }
        if (remaining <= 0.0) break;
    }
    s.surplus = remaining;
    return s;
}

namespace {

struct Candidate {
    double lambda = 0.0;
    double cost = std::numeric_limits<double>::infinity();
    std::vector<double> p0;
    std::vector<double> chi;
    bool bathtub = false;
    double surplus = 0.0;
};

Candidate evaluate_candidate(const PlannerContext& ctx, double lambda) {
    Candidate cand;
    cand.lambda = lambda;
    const OmegaTilde omega = omega_tilde(ctx, lambda);
    const std::size_t n = ctx.size();
    cand.p0 = omega.psi0;
    cand.chi.assign(n, 1.0);
    if (!omega.cells.empty()) {
        cand.bathtub = true;
        const SecondaryProblem s = secondary_bathtub(ctx, omega);
        cand.surplus = s.surplus;
        for (std::size_t i = 0; i < s.cells.size(); ++i) {
            const std::size_t c = s.cells[i];
            if (s.chi[i] > 0.0) {
                cand.p0[c] = omega.psi1[c];
                cand.chi[c] = s.chi[i];
            } else {
                cand.p0[c] = 0.0;
            }
        }
    }
    const auto& K = ctx.K().samples;
    double cost = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        const double d = 1.0 - ctx.profile().pT(cand.p0[c]);
        cost += K[c] * K[c] * (cand.chi[c] * d * d + (1.0 - cand.chi[c])) * ctx.grid().measure[c];
    }
    cand.cost = cost;
    return cand;
}

}  // namespace

Plan solve_large_T(const CarryingCapacity& K, const Grid& grid, const Budget& budget,
                   const BioParams& params, const PlannerOptions& opts) {
    PlannerContext ctx(K, grid, budget, params, opts);
    if (!ctx.large_T()) throw SolverError("solve_large_T requires T > T0");
    if (budget.C >= ctx.capacity()) return full_release_plan(ctx);
    if (opts.require_H) require_hypothesis(params, budget.T);

    const LambdaBrackets br = lambda_brackets(ctx);
    Plan plan;
    plan.lambda0 = br.lambda0;
    plan.lambda1 = std::max(br.lambda0, br.lambda1);
    if (br.lambda1 < br.lambda0 - 10 * opts.lambda_tol) {
        plan.notes.push_back("lambda1 < lambda0 by " + std::to_string(br.lambda0 - br.lambda1) +
                             " (bisection tolerance); bracket collapsed to lambda0");
    }
    const OmegaTilde omega0 = omega_tilde(ctx, br.lambda0);
    if (omega0.cells.empty()) {
        plan.regime = Regime::large_T_direct;
        plan.lambda_star = br.lambda0;
        plan.p0 = omega0.psi0;
        plan.chi.assign(grid.size(), 1.0);
        plan.cost_evaluations = 1;
        finish_plan(ctx, plan);
        return plan;
    }

    // One-dimensional search over the multiplier.
    const int n = std::max(2, opts.n_lambda);
    const double a0 = plan.lambda0, b0 = plan.lambda1;
    std::vector<Candidate> scan;
    scan.reserve(n);
    int best = 0;
    for (int i = 0; i < n; ++i) {
        const double lam = b0 > a0 ? a0 + (b0 - a0) * i / (n - 1) : a0;
        scan.push_back(evaluate_candidate(ctx, lam));
        if (scan.back().cost < scan[best].cost) best = i;
        if (!(b0 > a0)) break;
    }
    int evals = static_cast<int>(scan.size());
    Candidate incumbent = scan[best];
    if (b0 > a0) {
        double a = scan[std::max(0, best - 1)].lambda;
        double b = scan[std::min(static_cast<int>(scan.size()) - 1, best + 1)].lambda;
        const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
        double x1 = b - invphi * (b - a), x2 = a + invphi * (b - a);
        Candidate c1 = evaluate_candidate(ctx, x1), c2 = evaluate_candidate(ctx, x2);
        evals += 2;
        while (b - a > opts.golden_rtol * std::max(1.0, std::abs(incumbent.lambda))) {
            if (c1.cost <= c2.cost) {
                b = x2;
                x2 = x1;
                c2 = std::move(c1);
                x1 = b - invphi * (b - a);
                c1 = evaluate_candidate(ctx, x1);
            } else {
                a = x1;
                x1 = x2;
                c1 = std::move(c2);
                x2 = a + invphi * (b - a);
                c2 = evaluate_candidate(ctx, x2);
            }
            ++evals;
            if (c1.cost < incumbent.cost) incumbent = c1;
            if (c2.cost < incumbent.cost) incumbent = c2;
        }
    }
    plan.regime = incumbent.bathtub ? Regime::large_T_bathtub : Regime::large_T_direct;
    plan.lambda_star = incumbent.lambda;
    plan.p0 = std::move(incumbent.p0);
    plan.chi = std::move(incumbent.chi);
    plan.cost_evaluations = evals;
    if (incumbent.surplus > 1e-9 * budget.C) {
        plan.notes.push_back("secondary problem left " + std::to_string(incumbent.surplus) +
                             " individuals unallocated");
    }
    finish_plan(ctx, plan);
    return plan;
}

Plan solve(const CarryingCapacity& K, const Grid& grid, const Budget& budget,
           const BioParams& params, const PlannerOptions& opts) {
    budget.validate();
    const double T0 = compute_T0(params);
    if (K.is_constant()) {
        PlannerContext ctx(K, grid, budget, params, opts);
        if (budget.C >= ctx.capacity()) return full_release_plan(ctx);
        if (opts.require_H) require_hypothesis(params, budget.T);
        const double k = K.samples.front();
        const double pbar = G_inverse(budget.C / (k * grid.total_measure()), params);
        const bool uniform = budget.T <= T0 || ctx.w0() < switch_w(pbar, budget.T, params);
        if (uniform) {
            Plan plan;
            plan.regime = Regime::constant_K;
            plan.lambda_star = plan.lambda0 = plan.lambda1 = -k * switch_w(pbar, budget.T, params);
            plan.p0.assign(grid.size(), pbar);
            plan.chi.assign(grid.size(), 1.0);
            plan.notes.push_back("constant K: uniform release G^-1(C/(K|Omega|))");
            finish_plan(ctx, plan);
            return plan;
        }
        PlannerOptions o = opts;
        o.require_H = false;
        Plan plan = solve_large_T(K, grid, budget, params, o);
        plan.regime = Regime::constant_K;
        plan.notes.push_back("constant K: two-level release on a subdomain D");
        return plan;
    }
    return budget.T <= T0 ? solve_small_T(K, grid, budget, params, opts)
                          : solve_large_T(K, grid, budget, params, opts);
}

KktSummary kkt_residuals(const Plan& plan, const CarryingCapacity& K, const Grid& grid,
                         const BioParams& params) {
    const std::size_t n = grid.size();
    if (plan.p0.size() != n || plan.chi.size() != n) throw DomainError("plan does not match grid");
    const double T = plan.budget.T;
    const RateKernel kernel(params);
    const double w0 = switch_eval(0.0, T, params).w;
    const auto res = propagate_batch(plan.p0, T, params);
    KktSummary s;
    s.cases.resize(n);
    for (std::size_t c = 0; c < n; ++c) {
        const double t = -plan.lambda_star / K.samples[c];
        const double p = plan.p0[c];
        const double pM = plan.p_M.empty() ? G_inverse(plan.budget.M / K.samples[c], params) : plan.p_M[c];
        const SwitchValue v = switch_from_propagation(p, res[c], kernel);
        const bool mixed = plan.chi[c] < 1.0 && p > 0.0;
        if (p == 0.0 || mixed) s.zero = std::max(s.zero, t - w0);
        if (p == 0.0) {
            s.cases[c] = KktCase::zero;
        } else if (p >= pM - 1e-12) {
            s.saturated = std::max(s.saturated, v.w - t);
            s.cases[c] = mixed ? KktCase::mixed : KktCase::saturated;
        } else {
            s.interior = std::max(s.interior, std::abs(v.w - t));
            s.second_order = std::max(s.second_order, -v.dw_dp0);
            s.cases[c] = mixed ? KktCase::mixed : KktCase::interior;
        }
    }
    s.zero = std::max(0.0, s.zero);
    s.saturated = std::max(0.0, s.saturated);
    const double cap = plan.budget.M * grid.total_measure();
    if (plan.budget.C < cap) {
        s.budget_rel = std::abs(plan.budget_used - plan.budget.C) / plan.budget.C;
    } else {
        s.budget_rel = std::abs(plan.budget_used - cap) / cap;
    }
    return s;
}

std::vector<std::pair<std::size_t, std::size_t>> constant_K_intervals(const CarryingCapacity& K,
                                                                      double tol) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    const auto& k = K.samples;
    std::size_t start = 0;
    for (std::size_t c = 1; c <= k.size(); ++c) {
        if (c == k.size() || std::abs(k[c] - k[start]) > tol * std::max(1.0, std::abs(k[start]))) {
            out.emplace_back(start, c);
            start = c;
        }
    }
    return out;
}

std::vector<double> monotone_rearrange(std::span<const double> p0, const CarryingCapacity& K,
                                       const std::vector<std::pair<std::size_t, std::size_t>>& intervals) {
    if (p0.size() != K.samples.size()) throw DomainError("rearrangement: field does not match K");
    std::vector<double> out(p0.begin(), p0.end());
    for (const auto& [b, e] : intervals) {
        if (b > e || e > out.size()) throw DomainError("rearrangement: interval out of range");
        for (std::size_t c = b; c < e; ++c) {
            if (std::abs(K.samples[c] - K.samples[b]) > 1e-12 * std::max(1.0, K.samples[b])) {
                throw DomainError("rearrangement: K varies inside an interval");
            }
        }
        std::sort(out.begin() + b, out.begin() + e, std::greater<>());
    }
    return out;
}

}  // namespace wolb
