#include "wolb/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "wolb/diffusion.hpp"
#include "wolb/experiments.hpp"
#include "wolb/planner.hpp"
#include "wolb/reference.hpp"

namespace wolb {

namespace {

const BioParams P = BioParams::table1();

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Setup {
    Grid grid;
    CarryingCapacity K;
};

Setup landscape(KKind kind, int n, double K0 = 100.0) {
    Setup s{build_grid(1, {1.0, 1.0}, n), {}};
    s.K = eval_K(kind, K0, s.grid);
    return s;
}

const char* short_name(KKind k) {
    switch (k) {
        case KKind::sinusoidal: return "K_S";
        case KKind::two_patch: return "K_P";
        case KKind::arctan: return "K_A";
        default: return to_string(k);
    }
}

Outcome check_t0(const AcceptanceOptions& o) {
    const auto t0 = std::chrono::steady_clock::now();
    double T0 = NAN;
    try {
        T0 = t0_from_derivatives(o.f_sign * f_prime(0.0, P), o.f_sign * f_second(0.0, P), g_frac(0.0, P),
                                 g_prime(0.0, P));
    } catch (const std::exception& e) {
        return {false, std::string("T0 formula rejected the rates: ") + e.what()};
    }
    const double dt = seconds_since(t0);
    const bool ok = std::abs(T0 - 3.51) <= 0.02 && dt < 1e-3;
    return {ok, fmt("T0=%.6f target 3.51+-0.02, %.2e s", T0, dt)};
}

Outcome check_theta(const AcceptanceOptions&) {
    const auto t0 = std::chrono::steady_clock::now();
    const double th = theta(P);
    const double dt = seconds_since(t0);
    const double err = std::abs(th - 19.0 / 90.0);
    return {err <= 1e-12 && dt < 1e-3, fmt("theta=%.15f |theta-19/90|=%.1e, %.2e s", th, err, dt)};
}

Outcome check_hypothesis(const AcceptanceOptions&) {
    const auto t0 = std::chrono::steady_clock::now();
    const double Ts[] = {1.0, 25.0};
    const auto h = check_hypothesis_H(P, Ts, 2000);
    const double dt = seconds_since(t0);
    return {h[0].holds && h[1].holds && dt < 1.0,
            fmt("sign changes T=1: %d, T=25: %d, %.2f s", h[0].sign_changes, h[1].sign_changes, dt)};
}

std::vector<double> w_on_grid(double T, int n) {
    std::vector<double> p(n);
    for (int i = 0; i < n; ++i) p[i] = static_cast<double>(i) / (n - 1);
    const auto res = propagate_batch(p, T, P);
    const RateKernel kernel(P);
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = switch_from_propagation(p[i], res[i], kernel).w;
    return w;
}

Outcome check_switch(const AcceptanceOptions&) {
    const auto t0 = std::chrono::steady_clock::now();
    const int n = 1000;
    const auto w1 = w_on_grid(1.0, n);
    int non_increasing = 0;
    for (int i = 1; i < n; ++i) non_increasing += w1[i] <= w1[i - 1];
    const auto w25 = w_on_grid(25.0, n);
    std::vector<int> minima;
    for (int i = 1; i + 1 < n; ++i) {
        if (w25[i] < w25[i - 1] && w25[i] <= w25[i + 1]) minima.push_back(i);
    }
    const double tb = derive_thresholds(P).theta_bar;
    const double pT = w_minimizer(25.0, P);
    const double dt = seconds_since(t0);
    const bool ok = non_increasing == 0 && minima.size() == 1 && pT < tb &&
                    std::abs(static_cast<double>(minima[0]) / (n - 1) - pT) <= 2.0 / (n - 1) && dt < 5.0;
    return {ok, fmt("T=1 non-increasing steps %d; T=25 interior minima %zu, p0T=%.5f < theta_bar=%.5f; %.2f s",
                    non_increasing, minima.size(), pT, tb, dt)};
}

Outcome check_kkt(const AcceptanceOptions&) {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0, worst_budget = 0.0;
    int bad = 0;
    std::string where;
    for (KKind kind : {KKind::sinusoidal, KKind::two_patch, KKind::arctan}) {
        const Setup s = landscape(kind, 200);
        for (double C : {30.0, 200.0}) {
            for (double T : {1.0, 25.0}) {
                const Plan plan = solve(s.K, s.grid, {C, 250.0, T}, P);
                const KktSummary k = kkt_residuals(plan, s.K, s.grid, P);
                const double r = std::max(k.max_first_order(), k.second_order);
                const double b = std::abs(plan.budget_used - C) / C;
                if (r > 1e-6 || b > 1e-6) {
                    ++bad;
                    where += fmt(" %s/C=%g/T=%g", short_name(kind), C, T);
                }
                worst = std::max(worst, r);
                worst_budget = std::max(worst_budget, b);
            }
        }
    }
    const double dt = seconds_since(t0);
    return {bad == 0 && dt < 120.0,
            fmt("12 plans, max residual %.2e, max budget gap %.2e, %.1f s", worst, worst_budget, dt) +
                (bad ? " failing:" + where : "")};
}

Outcome check_constant_k(const AcceptanceOptions&) {
    const auto t0 = std::chrono::steady_clock::now();
    const Setup s = landscape(KKind::constant, 200);
    const double C = 30.0, K0 = 100.0;
    const double pbar = G_inverse(C / K0, P);
    const Plan short_plan = solve(s.K, s.grid, {C, 250.0, 1.0}, P);
    double dev = 0.0;
    for (double p : short_plan.p0) dev = std::max(dev, std::abs(p - pbar));
    // Long horizon: the two-level structure applies when w(0) >= w(pbar).
    const double T = 25.0;
    const bool applies = switch_w(0.0, T, P) >= switch_w(pbar, T, P);
    const Plan long_plan = solve(s.K, s.grid, {C, 250.0, T}, P);
    double level = 0.0, support = 0.0;
    bool two_level = true;
    for (std::size_t c = 0; c < s.grid.size(); ++c) {
        if (long_plan.p0[c] <= 0.0) continue;
        if (level == 0.0) level = long_plan.p0[c];
        two_level = two_level && long_plan.p0[c] == level;
        support += long_plan.chi[c] * s.grid.measure[c];
    }
    const double expected = level > 0.0 ? C / (K0 * G_antideriv(level, P)) : 0.0;
    const double rel = expected > 0.0 ? std::abs(support - expected) / expected : INFINITY;
    const double dt = seconds_since(t0);
    return {dev <= 1e-8 && applies && two_level && rel <= 1e-6 && dt < 10.0,
            fmt("T=1 max |p0-G^-1(C/K|O|)|=%.1e; T=25 level %.6f on |D|=%.6f vs %.6f (rel %.1e); %.2f s", dev,
                level, support, expected, rel, dt)};
}

Outcome check_oracle(const AcceptanceOptions&) {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = -INFINITY;
    int cases = 0, bad = 0;
    for (KKind kind : {KKind::sinusoidal, KKind::two_patch, KKind::arctan}) {
        const Setup s = landscape(kind, 6);
        for (double C : {30.0, 12.0}) {
            for (double T : {1.0, 25.0}) {
                const Budget B{C, 250.0, T};
                const Plan plan = solve(s.K, s.grid, B, P);
                const BruteForceResult bf = brute_force_plan(s.K, s.grid, B, P, 21);
                const double rel = (plan.cost - bf.cost) / bf.cost;
                worst = std::max(worst, rel);
                bad += rel > 1e-4;
                ++cases;
            }
        }
    }
    const double dt = seconds_since(t0);
    return {bad == 0 && dt < 300.0,
            fmt("%d cases, worst (planner - oracle)/oracle = %.2e, %.1f s", cases, worst, dt)};
}

Outcome check_monotonicity(const AcceptanceOptions&) {
    int violations = 0, plans = 0;
    double worst = 0.0;
    const double T0 = compute_T0(P);
    for (KKind kind : {KKind::sinusoidal, KKind::two_patch, KKind::arctan}) {
        const Setup s = landscape(kind, 200);
        for (double C : {30.0, 200.0}) {
            for (double T : {1.0, std::floor(T0 * 100.0) / 100.0}) {
                const Plan plan = solve(s.K, s.grid, {C, 250.0, T}, P);
                ++plans;
                std::vector<std::size_t> idx(s.grid.size());
                std::iota(idx.begin(), idx.end(), 0);
                std::stable_sort(idx.begin(), idx.end(),
                                 [&](auto a, auto b) { return s.K.samples[a] < s.K.samples[b]; });
                // Largest release over strictly smaller K seen so far.
                double prev_max = -INFINITY, group_max = -INFINITY, group_K = -INFINITY;
                for (std::size_t c : idx) {
                    if (s.K.samples[c] > group_K) {
                        prev_max = std::max(prev_max, group_max);
                        group_max = -INFINITY;
                        group_K = s.K.samples[c];
                    }
                    const double excess = prev_max - plan.u0[c];
                    if (excess > 1e-9) {
                        ++violations;
                        worst = std::max(worst, excess);
                    }
                    group_max = std::max(group_max, plan.u0[c]);
                }
            }
        }
    }
    return {violations == 0, fmt("%d plans with T <= T0, %d violations (worst %.1e)", plans, violations, worst)};
}

Outcome check_propagation(const AcceptanceOptions&) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> Up(0.0, 1.0), UT(0.1, 25.0);
    const double th = theta(P);
    double worst_p = 0.0, worst_s = 0.0;
    for (int k = 0; k < 100;) {
        const double p0 = Up(rng);
        if (p0 < 1e-3 || p0 > 1.0 - 1e-3 || std::abs(p0 - th) < 1e-3) continue;
        const double T = UT(rng);
        const PropagationResult r = propagate(p0, T, P);
        worst_p = std::max(worst_p, std::abs(r.pT - propagate_by_F(p0, T, P)));
        const double h = 1e-6;
        const double fd = (propagate(p0 + h, T, P).pT - propagate(p0 - h, T, P).pT) / (2.0 * h);
        worst_s = std::max(worst_s, std::abs(fd - r.sensitivity) / std::abs(r.sensitivity));
        ++k;
    }
    const double dt = seconds_since(t0);
    return {worst_p <= 1e-8 && worst_s <= 1e-5 && dt < 30.0,
            fmt("100 pairs: max |pT - oracle| %.1e, max sensitivity rel err %.1e, %.2f s", worst_p, worst_s, dt)};
}

Outcome check_reduction(const AcceptanceOptions&) {
    const auto t0 = std::chrono::steady_clock::now();
    const Setup s = landscape(KKind::sinusoidal, 20);
    const Plan plan = solve(s.K, s.grid, {30.0, 250.0, 1.0}, P);
    std::vector<double> snaps;
    for (int k = 1; k <= 10; ++k) snaps.push_back(0.1 * k);
    std::vector<double> gaps;
    std::string detail = "gap/eps:";
    double lo = INFINITY, hi = 0.0;
    bool decreasing = true;
    for (double eps : {4e-3, 2e-3, 1e-3}) {
        ReductionConfig cfg;
        cfg.epsilon = eps;
        const TwoSpeciesRun run = simulate_two_species(plan.u0, s.K, s.grid, 1.0, snaps, P, cfg);
        const auto red = reduced_release_trajectory(plan.u0, s.K, snaps, P, cfg);
        double gap = 0.0;
        for (std::size_t k = 0; k < snaps.size(); ++k) {
            for (std::size_t c = 0; c < s.grid.size(); ++c) {
                gap = std::max(gap, std::abs(run.states[k][c].proportion() - red[k][c]));
            }
        }
        if (!gaps.empty()) decreasing = decreasing && gap < gaps.back();
        gaps.push_back(gap);
        lo = std::min(lo, gap / eps);
        hi = std::max(hi, gap / eps);
        detail += fmt(" %.3f", gap / eps);
    }
    const double dt = seconds_since(t0);
    return {decreasing && hi / lo <= 2.0 && dt < 180.0,
            detail + fmt(" (spread %.2f), decreasing=%s, %.1f s", hi / lo, decreasing ? "yes" : "no", dt)};
}

Outcome check_rearrangement(const AcceptanceOptions&) {
    const auto t0 = std::chrono::steady_clock::now();
    const Setup s = landscape(KKind::two_patch, 40);
    const auto intervals = constant_K_intervals(s.K);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(0.0, 0.6);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> p0(40);
        for (double& v : p0) v = U(rng);
        const auto r = monotone_rearrange(p0, s.K, intervals);
        const double b0 = budget_integral(p0, s.K, s.grid, P);
        worst = std::max(worst, std::abs(budget_integral(r, s.K, s.grid, P) - b0) / b0);
        for (double T : {1.0, 25.0}) {
            const double c0 = cost_J0(p0, s.K, s.grid, T, P);
            worst = std::max(worst, std::abs(cost_J0(r, s.K, s.grid, T, P) - c0) / c0);
        }
    }
    const double dt = seconds_since(t0);
    return {worst <= 1e-10 && dt < 5.0, fmt("max relative change %.1e over 10 fields, %.2f s", worst, dt)};
}

Outcome check_diffusion_limit(const AcceptanceOptions& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const Setup s = landscape(KKind::arctan, 100);
    const Budget B{30.0, 250.0, 20.0};
    PdeConfig base;
    base.dt = 1e-2;
    const double Ds[] = {5e-2, 5e-3, 5e-4, 5e-5};
    const LimitSweep sw = diffusion_limit_sweep(s.K, s.grid, B, P, Ds, base, true, o.threads);
    bool monotone = true;
    std::string detail = "L1:";
    for (std::size_t k = 0; k < sw.rows.size(); ++k) {
        detail += fmt(" D=%g->%.3f", sw.rows[k].D, sw.rows[k].l1_distance);
        if (k > 0) monotone = monotone && sw.rows[k].l1_distance < sw.rows[k - 1].l1_distance;
    }
    // Adjoint check on the D = 5e-3 solver around the reference release.
    PdeConfig cfg = base;
    cfg.D = 5e-3;
    const PdeSolver solver(s.K, s.grid, B.T, cfg, P);
    std::vector<double> u0 = sw.reference_u0;
    for (std::size_t c = 0; c < u0.size(); ++c) u0[c] = 0.5 * u0[c] + 5.0;
    std::vector<double> grad;
    solver.cost_and_gradient(u0, grad);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
        std::vector<double> d(u0.size()), up(u0), um(u0);
        for (std::size_t c = 0; c < d.size(); ++c) {
            d[c] = U(rng);
            up[c] += 1e-5 * d[c];
            um[c] -= 1e-5 * d[c];
        }
        const double fd = (solver.cost_of_release(up) - solver.cost_of_release(um)) / 2e-5;
        const double an = std::inner_product(grad.begin(), grad.end(), d.begin(), 0.0);
        worst = std::max(worst, std::abs(fd - an) / std::abs(an));
    }
    const double dt = seconds_since(t0);
    return {monotone && worst <= 1e-4 && dt < 600.0,
            detail + fmt("; monotone=%s; adjoint rel err %.1e; %.1f s", monotone ? "yes" : "no", worst, dt)};
}

Outcome check_sweep(const AcceptanceOptions& o) {
    const auto t0 = std::chrono::steady_clock::now();
    SweepSpec grid;
    const HypothesisSweep main = hypothesis_sweep(grid, 1, o.threads);
    SweepSpec corner;
    corner.s_h = {1.0};
    corner.b2_0 = {0.33};
    const HypothesisSweep low = hypothesis_sweep(corner, 1, o.threads);
    int high_failed = 0, high_accepted = 0;
    for (const auto& c : main.cells) {
        if (c.b2_0 == 1.0) {
            high_failed += c.failed;
            high_accepted += c.accepted;
        }
    }
    const SweepCell& lc = low.cells.front();
    const double dt = seconds_since(t0);
    return {high_failed == 0 && high_accepted > 0 && lc.failed > 0 && dt < 300.0,
            fmt("b2_0=1 row: %d accepted, %d failed; (s_h=1, b2_0=0.33): %d accepted, %d failed; %.1f s",
                high_accepted, high_failed, lc.accepted, lc.failed, dt)};
}

using Check = Outcome (*)(const AcceptanceOptions&);

struct Entry {
    CriterionInfo info;
    Check check;
};

const std::vector<Entry>& entries() {
    static const std::vector<Entry> list{
        {{"t0", "T0 reproduction", false}, check_t0},
        {{"theta", "theta reproduction", false}, check_theta},
        {{"hypothesis", "hypothesis H for the reference parameters", false}, check_hypothesis},
        {{"switch", "switch-function regimes", false}, check_switch},
        {{"kkt", "KKT suite on 200 cells", true}, check_kkt},
        {{"constant_k", "constant-K closed form", false}, check_constant_k},
        {{"oracle", "brute-force oracle on 6 cells", false}, check_oracle},
        {{"monotonicity", "release nondecreasing in K for T <= T0", false}, check_monotonicity},
        {{"propagation", "propagation cross-check", false}, check_propagation},
        {{"reduction", "two-species reduction is O(epsilon)", false}, check_reduction},
        {{"rearrangement", "rearrangement invariance", false}, check_rearrangement},
        {{"diffusion_limit", "diffusion-limit trend and adjoint", true}, check_diffusion_limit},
        {{"sweep", "hypothesis sweep shape", true}, check_sweep},
    };
    return list;
}

}  // namespace

const char* to_string(CriterionStatus s) {
    switch (s) {
        case CriterionStatus::pass: return "PASS";
        case CriterionStatus::fail: return "FAIL";
        case CriterionStatus::skipped: return "SKIP";
    }
    return "?";
}

bool AcceptanceReport::ok() const { return count(CriterionStatus::fail) == 0; }

int AcceptanceReport::count(CriterionStatus s) const {
    return static_cast<int>(std::count_if(results.begin(), results.end(), [&](const auto& r) { return r.status == s; }));
}

nlohmann::json AcceptanceReport::to_json() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& r : results) {
        list.push_back({{"id", r.id}, {"title", r.title}, {"status", to_string(r.status)},
                        {"seconds", r.seconds}, {"detail", r.detail}});
    }
    return {{"criteria", list},
            {"passed", count(CriterionStatus::pass)},
            {"failed", count(CriterionStatus::fail)},
            {"skipped", count(CriterionStatus::skipped)},
            {"ok", ok()}};
}

const std::vector<CriterionInfo>& acceptance_criteria() {
    static const std::vector<CriterionInfo> infos = [] {
        std::vector<CriterionInfo> v;
        for (const auto& e : entries()) v.push_back(e.info);
        return v;
    }();
    return infos;
}

AcceptanceReport run_acceptance(const AcceptanceOptions& opts,
                                const std::function<void(const CriterionResult&)>& on_result) {
    AcceptanceReport report;
    for (const auto& e : entries()) {
        if (!opts.only.empty() && std::find(opts.only.begin(), opts.only.end(), e.info.id) == opts.only.end()) {
            continue;
        }
        CriterionResult r{e.info.id, e.info.title, CriterionStatus::skipped, 0.0, ""};
        if (opts.reduced_resolution && e.info.resolution_bound) {
            r.detail = "reduced resolution";
        } else {
            const auto t0 = std::chrono::steady_clock::now();
            try {
                const Outcome out = e.check(opts);
                r.status = out.pass ? CriterionStatus::pass : CriterionStatus::fail;
                r.detail = out.detail;
            } catch (const std::exception& ex) {
                r.status = CriterionStatus::fail;
                r.detail = std::string("threw: ") + ex.what();
            }
            r.seconds = seconds_since(t0);
        }
        if (on_result) on_result(r);
        report.results.push_back(std::move(r));
    }
    return report;
}

std::string format_result(const CriterionResult& r) {
    return fmt("%s %-15s %s (%s) [%.2fs]", to_string(r.status), r.id.c_str(), r.title.c_str(), r.detail.c_str(),
               r.seconds);
}

}  // namespace wolb
