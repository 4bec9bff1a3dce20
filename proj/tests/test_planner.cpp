#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "wolb/planner.hpp"
#include "wolb/reference.hpp"

using namespace wolb;

namespace {

const BioParams P = BioParams::table1();

struct Setup {
    Grid grid;
    CarryingCapacity K;
};

Setup landscape(KKind kind, int n, double K0 = 100.0) {
    Setup s{build_grid(1, {1.0, 1.0}, n), {}};
    s.K = eval_K(kind, K0, s.grid);
    return s;
}

void check_plan_invariants(const Plan& plan, const Setup& s) {
    const double C = plan.budget.C;
    CHECK(plan.kkt.max_first_order() <= 1e-6);
    CHECK(plan.kkt.second_order <= 1e-8);
    CHECK(std::abs(plan.budget_used - C) <= 1e-6 * C);
    int fractional = 0;
    for (std::size_t c = 0; c < s.grid.size(); ++c) {
        CHECK(plan.p0[c] >= 0.0);
        CHECK(plan.p0[c] <= plan.p_M[c] + 1e-9);
        CHECK(plan.u0[c] <= plan.budget.M + 1e-9);
        if (plan.chi[c] > 0.0 && plan.chi[c] < 1.0) ++fractional;
        else CHECK(plan.u0[c] == doctest::Approx(s.K.samples[c] * G_antideriv(plan.p0[c], P)).epsilon(1e-12));
    }
    CHECK(fractional <= 1);
}

}  // namespace

TEST_CASE("cost of the three uniform equilibria") {
    const Setup s = landscape(KKind::sinusoidal, 40);
    double k2 = 0.0;
    for (std::size_t c = 0; c < 40; ++c) k2 += s.K.samples[c] * s.K.samples[c] * s.grid.measure[c];
    CHECK(cost_J0(std::vector<double>(40, 1.0), s.K, s.grid, 3.0, P) == 0.0);
    CHECK(cost_J0(std::vector<double>(40, 0.0), s.K, s.grid, 3.0, P) == doctest::Approx(k2).epsilon(1e-14));
    const double th = theta(P);
    CHECK(cost_J0(std::vector<double>(40, th), s.K, s.grid, 3.0, P) ==
          doctest::Approx(k2 * (1 - th) * (1 - th)).epsilon(1e-12));
}

TEST_CASE("short-horizon mappings and budget function") {
    const Setup s = landscape(KKind::sinusoidal, 50);
    const Budget B{30.0, 250.0, 1.0};
    const PlannerContext ctx(s.K, s.grid, B, P);
    // Every cell is at zero once -lambda/K <= w(0) holds for the largest K.
    const double lam_max = -ctx.w0() * s.K.max();
    double lam_min = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < 50; ++c) lam_min = std::min(lam_min, -s.K.samples[c] * ctx.w_pM(c));
    for (std::size_t c = 0; c < 50; ++c) {
        CHECK(psi_small_T(ctx, c, lam_max * 1.0001) == 0.0);
        CHECK(psi_small_T(ctx, c, lam_min * 0.9999) == ctx.p_M(c));
    }
    CHECK(I_of_lambda(ctx, lam_max * 1.0001) == 0.0);
    CHECK(I_of_lambda(ctx, 0.0) == doctest::Approx(250.0).epsilon(1e-10));
    const double mid = 0.5 * (lam_min + lam_max);
    for (std::size_t c = 0; c < 50; c += 7) {
        const double p = psi_small_T(ctx, c, mid);
        if (p > 0.0 && p < ctx.p_M(c)) {
            CHECK(switch_w(p, 1.0, P) == doctest::Approx(-mid / s.K.samples[c]).epsilon(1e-8));
        }
    }
    double prev = I_of_lambda(ctx, 0.0);
    for (int i = 1; i <= 40; ++i) {
        const double I = I_of_lambda(ctx, lam_max * i / 40.0);
        CHECK(I <= prev);
        prev = I;
    }
}

TEST_CASE("short-horizon plans satisfy the optimality system") {
    for (KKind kind : {KKind::sinusoidal, KKind::two_patch, KKind::arctan}) {
        for (double C : {30.0, 200.0}) {
            const Setup s = landscape(kind, 100);
            const Plan plan = solve_small_T(s.K, s.grid, {C, 250.0, 1.0}, P);
            CHECK(plan.regime == Regime::small_T);
            check_plan_invariants(plan, s);
        }
    }
}

TEST_CASE("perturbing an interior cell breaks stationarity") {
    const Setup s = landscape(KKind::sinusoidal, 60);
    const Plan plan = solve_small_T(s.K, s.grid, {30.0, 250.0, 1.0}, P);
    std::vector<std::size_t> interior;
    for (std::size_t c = 0; c < 60; ++c) {
        if (plan.kkt.cases[c] == KktCase::interior) interior.push_back(c);
    }
    REQUIRE(interior.size() >= 2);
    const std::size_t a = interior.front();
    Plan bad = plan;
    bad.p0[a] += 0.05;
    // Rebalance the budget by scaling the other interior releases.
    const double extra = (s.K.samples[a] * G_antideriv(bad.p0[a], P) - plan.u0[a]) * s.grid.measure[a];
    double rest = 0.0;
    for (std::size_t i = 1; i < interior.size(); ++i) rest += plan.u0[interior[i]] * s.grid.measure[interior[i]];
    REQUIRE(rest > extra);
    const double scale = 1.0 - extra / rest;
    for (std::size_t i = 1; i < interior.size(); ++i) {
        const std::size_t c = interior[i];
        bad.p0[c] = G_inverse(scale * plan.u0[c] / s.K.samples[c], P);
    }
    CHECK(budget_integral(bad.p0, s.K, s.grid, P) == doctest::Approx(plan.budget.C).epsilon(1e-7));
    const KktSummary k = kkt_residuals(bad, s.K, s.grid, P);
    CHECK(k.interior > 1e-3);
}

TEST_CASE("release grows with the carrying capacity for short horizons") {
    for (KKind kind : {KKind::sinusoidal, KKind::two_patch, KKind::arctan}) {
        const Setup s = landscape(kind, 200);
        const Plan plan = solve(s.K, s.grid, {30.0, 250.0, 1.0}, P);
        int violations = 0;
        for (std::size_t i = 0; i < 200; ++i) {
            for (std::size_t j = 0; j < 200; ++j) {
                if (s.K.samples[i] < s.K.samples[j] && plan.u0[i] > plan.u0[j] + 1e-9) ++violations;
            }
        }
        CHECK(violations == 0);
    }
}

TEST_CASE("short-horizon plan does not depend on the initial bracket") {
    const Setup s = landscape(KKind::arctan, 100);
    const Plan base = solve_small_T(s.K, s.grid, {30.0, 250.0, 1.0}, P);
    for (std::uint64_t seed : {1u, 2u, 99u}) {
        PlannerOptions o;
        o.bracket_seed = seed;
        const Plan other = solve_small_T(s.K, s.grid, {30.0, 250.0, 1.0}, P, o);
        for (std::size_t c = 0; c < 100; ++c) CHECK(std::abs(other.p0[c] - base.p0[c]) <= 1e-7);
    }
}

TEST_CASE("constant K releases uniformly for short horizons") {
    const Setup s = landscape(KKind::constant, 50, 80.0);
    const Plan plan = solve(s.K, s.grid, {30.0, 250.0, 2.0}, P);
    CHECK(plan.regime == Regime::constant_K);
    const double expected = G_inverse(30.0 / 80.0, P);
    for (double p : plan.p0) CHECK(std::abs(p - expected) <= 1e-8);
    CHECK(plan.kkt.ok());
}

TEST_CASE("scaling K and C together leaves p0 unchanged") {
    const Setup a = landscape(KKind::constant, 30, 100.0);
    const Setup b = landscape(KKind::constant, 30, 250.0);
    const Plan pa = solve(a.K, a.grid, {30.0, 250.0, 1.0}, P);
    const Plan pb = solve(b.K, b.grid, {75.0, 625.0, 1.0}, P);
    for (std::size_t c = 0; c < 30; ++c) CHECK(pb.p0[c] == doctest::Approx(pa.p0[c]).epsilon(1e-10));
}

TEST_CASE("constant K with a long horizon gives a two-level release on a subdomain") {
    const Setup s = landscape(KKind::constant, 200, 100.0);
    const double C = 30.0, T = 25.0;
    const double pbar = G_inverse(C / 100.0, P);
    REQUIRE(switch_w(0.0, T, P) >= switch_w(pbar, T, P));
    const Plan plan = solve(s.K, s.grid, {C, 250.0, T}, P);
    CHECK(plan.regime == Regime::constant_K);
    const PlannerContext ctx(s.K, s.grid, plan.budget, P);
    const OmegaTilde om = omega_tilde(ctx, plan.lambda_star);
    CHECK(om.cells.size() == 200);
    double level = 0.0, support = 0.0;
    for (std::size_t c = 0; c < 200; ++c) {
        if (plan.p0[c] > 0.0) {
            if (level == 0.0) level = plan.p0[c];
            CHECK(plan.p0[c] == level);
            support += plan.chi[c] * s.grid.measure[c];
        }
    }
    CHECK(support == doctest::Approx(C / (100.0 * G_antideriv(level, P))).epsilon(1e-6));
    check_plan_invariants(plan, s);
}

TEST_CASE("stock beyond the cap releases the cap everywhere") {
    const Setup s = landscape(KKind::sinusoidal, 20);
    const Plan plan = solve(s.K, s.grid, {300.0, 250.0, 25.0}, P);
    CHECK(plan.regime == Regime::full_release);
    for (std::size_t c = 0; c < 20; ++c) {
        CHECK(plan.p0[c] == plan.p_M[c]);
        CHECK(plan.u0[c] == doctest::Approx(250.0).epsilon(1e-9));
    }
}

TEST_CASE("long-horizon mappings") {
    const Setup s = landscape(KKind::sinusoidal, 60);
    const Budget B{30.0, 250.0, 25.0};
    const PlannerContext ctx(s.K, s.grid, B, P);
    REQUIRE(ctx.large_T());
    for (std::size_t c = 0; c < 60; c += 3) {
        const double k = s.K.samples[c];
        CHECK(psi1_big_T(ctx, c, -k * ctx.w_min(c) * 1.001) == 0.0);
        CHECK(psi0_big_T(ctx, c, -k * ctx.w_pM(c) * 0.999) == ctx.p_M(c));
        CHECK(psi1_big_T(ctx, c, -k * ctx.w_pM(c) * 0.999) == ctx.p_M(c));
        for (int i = 0; i <= 50; ++i) {
            const double lam = -k * ctx.w_min(c) * i / 50.0;
            const double p0 = psi0_big_T(ctx, c, lam), p1 = psi1_big_T(ctx, c, lam);
            CHECK(p0 <= p1);
            if (p0 != p1) CHECK(p0 == 0.0);
        }
    }
}

TEST_CASE("multiplier brackets and the secondary problem") {
    const Setup s = landscape(KKind::sinusoidal, 100);
    const Budget B{30.0, 250.0, 25.0};
    const PlannerContext ctx(s.K, s.grid, B, P);
    const LambdaBrackets br = lambda_brackets(ctx);
    CHECK(br.lambda0 <= br.lambda1 + 1e-9);
    CHECK(I0_of_lambda(ctx, br.lambda0 + 1e-6) <= B.C);
    CHECK(I1_of_lambda(ctx, br.lambda1 - 1e-6) >= B.C);

    const OmegaTilde om = omega_tilde(ctx, br.lambda0);
    CHECK(om.c_tilde <= B.C);
    REQUIRE(!om.cells.empty());
    const SecondaryProblem sp = secondary_bathtub(ctx, om);
    int fractional = 0;
    double used = 0.0;
    for (std::size_t i = 0; i < sp.cells.size(); ++i) {
        const std::size_t c = sp.cells[i];
        if (sp.chi[i] > 0.0 && sp.chi[i] < 1.0) ++fractional;
        used += s.K.samples[c] * G_antideriv(om.psi1[c], P) * sp.chi[i] * s.grid.measure[c];
    }
    CHECK(fractional <= 1);
    CHECK(used == doctest::Approx(sp.c_tilde).epsilon(1e-9));

    const OmegaTilde none = omega_tilde(ctx, 1e6);
    CHECK(none.cells.empty());
}

TEST_CASE("bathtub saturation and smallest fill") {
    const Setup s = landscape(KKind::sinusoidal, 100);
    const PlannerContext ctx(s.K, s.grid, {30.0, 250.0, 25.0}, P);
    OmegaTilde om = omega_tilde(ctx, lambda_brackets(ctx).lambda0);
    REQUIRE(!om.cells.empty());
    double capacity = 0.0;
    for (std::size_t c : om.cells) capacity += s.K.samples[c] * G_antideriv(om.psi1[c], P) * s.grid.measure[c];
    om.c_tilde = capacity;
    const SecondaryProblem full = secondary_bathtub(ctx, om);
    for (double x : full.chi) CHECK(x == doctest::Approx(1.0));
    om.c_tilde = 1e-9;
    const SecondaryProblem tiny = secondary_bathtub(ctx, om);
    const auto top = std::max_element(tiny.phi.begin(), tiny.phi.end()) - tiny.phi.begin();
    for (std::size_t i = 0; i < tiny.chi.size(); ++i) {
        if (static_cast<long>(i) == top) CHECK(tiny.chi[i] > 0.0);
        else CHECK(tiny.chi[i] == 0.0);
    }
}

TEST_CASE("long-horizon plans satisfy the optimality system") {
    for (KKind kind : {KKind::sinusoidal, KKind::two_patch, KKind::arctan}) {
        for (double C : {30.0, 200.0}) {
            const Setup s = landscape(kind, 100);
            const Plan plan = solve_large_T(s.K, s.grid, {C, 250.0, 25.0}, P);
            CHECK(plan.regime != Regime::small_T);
            check_plan_invariants(plan, s);
        }
    }
}

TEST_CASE("two-patch long horizon has the two-level structure") {
    const Setup s = landscape(KKind::two_patch, 200);
    const double K0 = 100.0, C = 30.0;
    const Plan plan = solve(s.K, s.grid, {C, 250.0, 25.0}, P);
    const PlannerContext ctx(s.K, s.grid, plan.budget, P);
    const double left = psi1_big_T(ctx, 0, plan.lambda_star);
    const double right = psi1_big_T(ctx, 199, plan.lambda_star);
    double D = 0.0;
    for (std::size_t c = 0; c < 200; ++c) {
        if (s.grid.x[c] < 0.5) {
            CHECK(plan.p0[c] == doctest::Approx(left).epsilon(1e-12));
        } else if (plan.p0[c] > 0.0) {
            CHECK(plan.p0[c] == doctest::Approx(right).epsilon(1e-12));
            D += plan.chi[c] * s.grid.measure[c];
        }
    }
    CHECK(D > 0.0);
    CHECK(D < 0.5);
    const double identity = 0.75 * K0 * G_antideriv(left, P) + 0.5 * D * K0 * G_antideriv(right, P);
    CHECK(identity == doctest::Approx(C).epsilon(1e-6));
}

TEST_CASE("large stock: plan barely changes between short and long horizon") {
    const Setup s = landscape(KKind::sinusoidal, 200);
    const Plan shortT = solve(s.K, s.grid, {200.0, 250.0, 1.0}, P);
    const Plan longT = solve(s.K, s.grid, {200.0, 250.0, 25.0}, P);
    const double reuse = cost_J0(shortT.p0, s.K, s.grid, 25.0, P);
    CHECK(std::abs(reuse - longT.cost) <= 0.01 * longT.cost);
}

TEST_CASE("long horizon, small stock: released cells start above the threshold") {
    const Setup s = landscape(KKind::sinusoidal, 200);
    const Plan plan = solve(s.K, s.grid, {30.0, 250.0, 25.0}, P);
    const double th = theta(P);
    for (std::size_t c = 1; c + 1 < 200; ++c) {
        const bool interior = plan.p0[c] > 0.0 && plan.p0[c - 1] > 0.0 && plan.p0[c + 1] > 0.0;
        if (interior) CHECK(plan.p0[c] > th);
    }
}

TEST_CASE("planner matches exhaustive enumeration on six cells") {
    struct Case {
        KKind kind;
        double C, T;
    };
    const Case cases[] = {{KKind::sinusoidal, 30.0, 1.0},
                          {KKind::two_patch, 30.0, 1.0},
                          {KKind::sinusoidal, 30.0, 25.0},
                          {KKind::two_patch, 30.0, 25.0},
                          {KKind::arctan, 12.0, 25.0}};
    for (const Case& cs : cases) {
        const Setup s = landscape(cs.kind, 6);
        const Budget B{cs.C, 250.0, cs.T};
        const Plan plan = solve(s.K, s.grid, B, P);
        const BruteForceResult bf = brute_force_plan(s.K, s.grid, B, P, 21);
        CAPTURE(cs.C);
        CAPTURE(cs.T);
        CHECK(plan.cost <= bf.cost * (1.0 + 1e-4));
    }
}

TEST_CASE("rearrangement on constant-K runs") {
    const Setup s = landscape(KKind::two_patch, 40);
    const auto intervals = constant_K_intervals(s.K);
    REQUIRE(intervals.size() == 2);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(0.0, 0.6);
    std::vector<double> p0(40);
    for (double& p : p0) p = U(rng);
    const auto r = monotone_rearrange(p0, s.K, intervals);
    for (const auto& [b, e] : intervals) {
        for (std::size_t c = b + 1; c < e; ++c) CHECK(r[c] <= r[c - 1]);
        std::vector<double> x(p0.begin() + b, p0.begin() + e), y(r.begin() + b, r.begin() + e);
        std::sort(x.begin(), x.end());
        std::sort(y.begin(), y.end());
        CHECK(x == y);
    }
    CHECK(monotone_rearrange(r, s.K, intervals) == r);
    const double b0 = budget_integral(p0, s.K, s.grid, P), b1 = budget_integral(r, s.K, s.grid, P);
    CHECK(std::abs(b0 - b1) <= 1e-12 * b0);
    const double c0 = cost_J0(p0, s.K, s.grid, 5.0, P), c1 = cost_J0(r, s.K, s.grid, 5.0, P);
    CHECK(std::abs(c0 - c1) <= 1e-10 * c0);

    const Setup smooth = landscape(KKind::sinusoidal, 40);
    CHECK_THROWS_AS(monotone_rearrange(p0, smooth.K, {{0, 40}}), DomainError);
}

TEST_CASE("planner input errors") {
    const Setup s = landscape(KKind::sinusoidal, 20);
    CHECK_THROWS_AS(solve(s.K, s.grid, {-1.0, 250.0, 1.0}, P), DomainError);
    CHECK_THROWS_AS(solve(s.K, s.grid, {30.0, 0.0, 1.0}, P), DomainError);
    CHECK_THROWS_AS(solve(s.K, s.grid, {30.0, 250.0, 0.0}, P), DomainError);
    CHECK_THROWS_AS(solve_small_T(s.K, s.grid, {30.0, 250.0, 25.0}, P), SolverError);
    CHECK_THROWS_AS(solve_large_T(s.K, s.grid, {30.0, 250.0, 1.0}, P), SolverError);
}
