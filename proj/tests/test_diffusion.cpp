#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "wolb/diffusion.hpp"

using namespace wolb;

namespace {

const BioParams P = BioParams::table1();

struct Setup {
    Grid grid;
    CarryingCapacity K;
};

Setup landscape(KKind kind, int n, double K0 = 100.0) {
    Setup s{build_grid(kind == KKind::separable_2d ? 2 : 1, {1.0, 1.0}, n), {}};
    s.K = eval_K(kind, K0, s.grid);
    return s;
}

PdeConfig config(double D, double dt) {
    PdeConfig c;
    c.D = D;
    c.dt = dt;
    return c;
}

double mass(std::span<const double> p, const Grid& g) { return integrate(p, g); }

std::vector<double> bump(const Grid& g, double amp = 0.6) {
    std::vector<double> p0(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) p0[i] = amp * std::exp(-20.0 * std::pow(g.x[i] - 0.5, 2));
    return p0;
}

// Rightmost cell center where p reaches theta, -1 if none.
double front(std::span<const double> p, const Grid& g) {
    const double th = theta(P);
    double x = -1.0;
    for (std::size_t i = 0; i < g.size(); ++i) if (p[i] >= th) x = g.x[i];
    return x;
}

}  // namespace

TEST_CASE("without diffusion each cell follows the reaction") {
    const Setup s = landscape(KKind::sinusoidal, 40);
    std::vector<double> p0(40);
    for (std::size_t i = 0; i < 40; ++i) p0[i] = 0.9 * s.grid.x[i];
    const PdeRun run = simulate_pde(p0, s.K, s.grid, 1.0, config(0.0, 1e-3), P);
    for (std::size_t i = 0; i < 40; ++i) {
        CHECK(std::abs(run.pT[i] - propagate(p0[i], 1.0, P).pT) < 1e-6);
    }
    CHECK(run.cost == doctest::Approx(cost_J0(p0, s.K, s.grid, 1.0, P)).epsilon(1e-6));
}

TEST_CASE("the invaded and wild states are invariant") {
    for (KKind kind : {KKind::sinusoidal, KKind::arctan, KKind::separable_2d}) {
        const Setup s = landscape(kind, kind == KKind::separable_2d ? 16 : 60);
        const std::size_t n = s.grid.size();
        for (double level : {0.0, 1.0}) {
            const std::vector<double> p0(n, level);
            const PdeRun run = simulate_pde(p0, s.K, s.grid, 1.0, config(1e-2, 1e-2), P);
            double dev = 0.0;
            for (double v : run.pT) dev = std::max(dev, std::abs(v - level));
            CHECK(dev < 1e-12);
        }
    }
}

TEST_CASE("pure diffusion conserves mass") {
    for (PdeScheme scheme : {PdeScheme::imex, PdeScheme::explicit_euler}) {
        for (KKind kind : {KKind::sinusoidal, KKind::separable_2d}) {
            const Setup s = landscape(kind, kind == KKind::separable_2d ? 12 : 50);
            PdeConfig c = config(1e-2, 1e-3);
            c.scheme = scheme;
            c.reaction = false;
            c.k_coupling = false;
            std::vector<double> p0 = s.grid.dim == 2 ? std::vector<double>(s.grid.size(), 0.0) : bump(s.grid);
            if (s.grid.dim == 2) {
                for (std::size_t i = 0; i < s.grid.size(); ++i) p0[i] = s.grid.x[i] * s.grid.y[i];
            }
            const PdeRun run = simulate_pde(p0, s.K, s.grid, 1.0, c, P);
            CHECK(mass(run.pT, s.grid) == doctest::Approx(mass(p0, s.grid)).epsilon(1e-12));
            // Diffusion flattens the profile.
            const auto [lo0, hi0] = std::minmax_element(p0.begin(), p0.end());
            const auto [lo, hi] = std::minmax_element(run.pT.begin(), run.pT.end());
            CHECK(*hi - *lo < *hi0 - *lo0);
        }
    }
}

TEST_CASE("adjoint gradient matches finite differences") {
    const Setup s = landscape(KKind::sinusoidal, 30);
    const PdeSolver solver(s.K, s.grid, 1.0, config(1e-2, 1e-2), P);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(20.0, 80.0), dir(-1.0, 1.0);
    std::vector<double> u0(30);
    for (double& v : u0) v = U(rng);
    std::vector<double> grad;
    const double J = solver.cost_and_gradient(u0, grad);
    CHECK(J == doctest::Approx(solver.cost_of_release(u0)).epsilon(1e-14));
    const double h = 1e-5;
    for (int k = 0; k < 10; ++k) {
        std::vector<double> d(30), up(u0), um(u0);
        for (double& v : d) v = dir(rng);
        for (std::size_t c = 0; c < 30; ++c) {
            up[c] += h * d[c];
            um[c] -= h * d[c];
        }
        const double fd = (solver.cost_of_release(up) - solver.cost_of_release(um)) / (2.0 * h);
        const double an = std::inner_product(grad.begin(), grad.end(), d.begin(), 0.0);
        CAPTURE(k);
        CHECK(std::abs(fd - an) <= 1e-4 * std::abs(an));
    }
}

TEST_CASE("solutions stay in the unit interval") {
    const Setup s = landscape(KKind::sinusoidal, 100);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<double> p0(100);
    for (double& v : p0) v = U(rng);
    for (double D : {1e-3, 5e-2}) {
        const PdeRun run = simulate_pde(p0, s.K, s.grid, 2.0, config(D, 1e-3), P);
        CHECK(run.max_principle_violation <= 1e-10);
    }
}

TEST_CASE("explicit scheme enforces its stability limit") {
    const Setup s = landscape(KKind::sinusoidal, 100);
    PdeConfig c = config(1e-1, 1e-3);
    c.scheme = PdeScheme::explicit_euler;
    CHECK_THROWS_AS(c.validate(s.grid), DomainError);
    CHECK_THROWS_AS(simulate_pde(bump(s.grid), s.K, s.grid, 1.0, c, P), DomainError);
    c.D = 1e-2;
    CHECK_NOTHROW(c.validate(s.grid));
    c.scheme = PdeScheme::imex;
    c.D = 1e-1;
    CHECK_NOTHROW(c.validate(s.grid));
}

TEST_CASE("explicit and implicit transport agree at small steps") {
    const Setup s = landscape(KKind::arctan, 50);
    PdeConfig ex = config(1e-2, 1e-4);
    ex.scheme = PdeScheme::explicit_euler;
    const auto p0 = bump(s.grid);
    const PdeRun a = simulate_pde(p0, s.K, s.grid, 1.0, ex, P);
    const PdeRun b = simulate_pde(p0, s.K, s.grid, 1.0, config(1e-2, 1e-4), P);
    double diff = 0.0;
    for (std::size_t i = 0; i < 50; ++i) diff = std::max(diff, std::abs(a.pT[i] - b.pT[i]));
    CHECK(diff < 1e-4);
    CHECK(a.cost == doctest::Approx(b.cost).epsilon(1e-5));
}

TEST_CASE("cost refines at first order in time and second order in space") {
    auto cost = [](int n, double dt) {
        const Setup s = landscape(KKind::sinusoidal, n);
        return simulate_pde(bump(s.grid), s.K, s.grid, 1.0, config(1e-2, dt), P).cost;
    };
    const double t1 = cost(400, 4e-3), t2 = cost(400, 2e-3), t3 = cost(400, 1e-3);
    CHECK(std::log2((t1 - t2) / (t2 - t3)) == doctest::Approx(1.0).epsilon(0.1));
    const double x1 = cost(25, 1e-4), x2 = cost(50, 1e-4), x3 = cost(100, 1e-4);
    CHECK(std::log2((x1 - x2) / (x2 - x3)) == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("snapshots and trajectory output") {
    const Setup s = landscape(KKind::sinusoidal, 8);
    const double ts[] = {0.0, 0.5, 1.0};
    const PdeRun run = simulate_pde(bump(s.grid), s.K, s.grid, 1.0, config(1e-2, 1e-2), P, ts);
    REQUIRE(run.snapshots.size() == 3);
    CHECK(run.snapshots[0] == run.p0);
    CHECK(run.snapshots[2] == run.pT);
    CHECK(run.steps == 100);
    std::ostringstream os;
    write_trajectory_csv(os, run);
    std::string line;
    std::istringstream is(os.str());
    std::getline(is, line);
    CHECK(line == "t,cell_index,p");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 24);
}

TEST_CASE("solver input errors") {
    const Setup s = landscape(KKind::sinusoidal, 8);
    const Setup tiny = landscape(KKind::sinusoidal, 3);
    CHECK_THROWS_AS(simulate_pde(bump(tiny.grid), tiny.K, tiny.grid, 1.0, config(1e-2, 1e-2), P), DomainError);
    CHECK_THROWS_AS(simulate_pde(std::vector<double>(8, 1.5), s.K, s.grid, 1.0, config(1e-2, 1e-2), P),
                    DomainError);
    CHECK_THROWS_AS(simulate_pde(bump(s.grid), s.K, s.grid, -1.0, config(1e-2, 1e-2), P), DomainError);
    CHECK_THROWS_AS(simulate_pde(bump(s.grid), s.K, s.grid, 1.0, config(-1.0, 1e-2), P), DomainError);
    const double late[] = {2.0};
    CHECK_THROWS_AS(simulate_pde(bump(s.grid), s.K, s.grid, 1.0, config(1e-2, 1e-2), P, late), DomainError);
    CHECK(parse_scheme("explicit") == PdeScheme::explicit_euler);
    CHECK_THROWS_AS(parse_scheme("crank"), DomainError);
}

TEST_CASE("two-dimensional runs") {
    const Setup s = landscape(KKind::separable_2d, 16);
    std::vector<double> p0(s.grid.size());
    for (std::size_t i = 0; i < p0.size(); ++i) {
        p0[i] = 0.8 * std::exp(-10.0 * (std::pow(s.grid.x[i] - 0.3, 2) + std::pow(s.grid.y[i] - 0.6, 2)));
    }
    const PdeRun still = simulate_pde(p0, s.K, s.grid, 1.0, config(0.0, 1e-3), P);
    for (std::size_t i = 0; i < p0.size(); ++i) {
        CHECK(std::abs(still.pT[i] - propagate(p0[i], 1.0, P).pT) < 1e-6);
    }
    const PdeRun run = simulate_pde(p0, s.K, s.grid, 1.0, config(1e-2, 1e-2), P);
    CHECK(run.max_principle_violation <= 1e-10);
    CHECK(std::isfinite(run.cost));
    // Diffusion spreads the release beyond its diffusion-free footprint.
    std::size_t far = 0;
    for (std::size_t i = 0; i < p0.size(); ++i) if (s.grid.x[i] > 0.8 && s.grid.y[i] < 0.2) far = i;
    CHECK(run.pT[far] > still.pT[far]);
}

TEST_CASE("projection onto the capped budget set") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-50.0, 300.0), W(0.0, 1.0);
    const Grid g = build_grid(1, {1.0, 1.0}, 40);
    const double M = 250.0, C = 30.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> v(40);
        for (double& x : v) x = U(rng);
        const auto u = project_capped(v, g.measure, M, C);
        double used = 0.0;
        for (std::size_t c = 0; c < 40; ++c) {
            CHECK(u[c] >= 0.0);
            CHECK(u[c] <= M);
            used += u[c] * g.measure[c];
        }
        CHECK(used <= C * (1.0 + 1e-12));
        const auto again = project_capped(u, g.measure, M, C);
        for (std::size_t c = 0; c < 40; ++c) CHECK(again[c] == doctest::Approx(u[c]).epsilon(1e-10));
        // Variational inequality against random feasible points.
        for (int k = 0; k < 5; ++k) {
            std::vector<double> w(40);
            for (double& x : w) x = W(rng) * M;
            w = project_capped(w, g.measure, M, C * W(rng));
            double ip = 0.0;
            for (std::size_t c = 0; c < 40; ++c) ip += (v[c] - u[c]) * (w[c] - u[c]) * g.measure[c];
            CHECK(ip <= 1e-8);
        }
    }
    // Points already inside the set are kept.
    const std::vector<double> inside(40, 0.5);
    CHECK(project_capped(inside, g.measure, M, C) == inside);
}

TEST_CASE("diffusion-free optimization reproduces the planner") {
    const Setup s = landscape(KKind::sinusoidal, 40);
    const Budget B{30.0, 250.0, 1.0};
    const Plan plan = solve(s.K, s.grid, B, P);
    const std::vector<double> uniform(40, 30.0);
    const PdeOptimum opt = optimize_pde(s.K, s.grid, B, config(0.0, 1e-2), P, uniform);
    CHECK(opt.cost <= opt.initial_cost);
    CHECK(opt.cost == doctest::Approx(plan.cost).epsilon(1e-3));
    CHECK(integrate(opt.u0, s.grid) <= B.C * (1.0 + 1e-10));
}

TEST_CASE("strong diffusion pulls the release away from the low-capacity tail") {
    const Setup s = landscape(KKind::arctan, 100);
    const Budget B{30.0, 250.0, 1.0};
    const Plan plan = solve(s.K, s.grid, B, P);
    const PdeOptimum opt = optimize_pde(s.K, s.grid, B, config(5e-2, 1e-3), P, plan.u0);
    auto tail = [&](const std::vector<double>& u) {
        const double top = *std::max_element(u.begin(), u.end());
        double x = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) if (u[i] > 1e-3 * top) x = s.grid.x[i];
        return x;
    };
    auto left = [&](const std::vector<double>& u) {
        double m = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) if (s.grid.x[i] < 0.5) m += u[i] * s.grid.measure[i];
        return m;
    };
    CHECK(opt.cost < opt.initial_cost);
    CHECK(tail(opt.u0) < tail(plan.u0));
    CHECK(left(opt.u0) > left(plan.u0));
}

TEST_CASE("invasion front advances through the two-patch landscape") {
    const Setup s = landscape(KKind::two_patch, 200);
    const Plan plan = solve(s.K, s.grid, {30.0, 250.0, 25.0}, P);
    std::vector<double> ts;
    for (int k = 0; k <= 25; ++k) ts.push_back(k);
    const PdeRun run = simulate_pde(plan.p0, s.K, s.grid, 25.0, config(1e-3, 1e-3), P, ts);
    // After an early adjustment the front never recedes.
    for (int k = 6; k <= 25; ++k) {
        CAPTURE(k);
        CHECK(front(run.snapshots[k], s.grid) >= front(run.snapshots[k - 1], s.grid));
    }
    CHECK(front(run.pT, s.grid) > front(run.p0, s.grid));
}

TEST_CASE("limit sweep at a short horizon") {
    const Setup s = landscape(KKind::arctan, 50);
    const Budget B{30.0, 250.0, 1.0};
    const Plan plan = solve(s.K, s.grid, B, P);
    const double Ds[] = {1e-2, 1e-3, 1e-4, 0.0};
    const LimitSweep sw = diffusion_limit_sweep(s.K, s.grid, B, P, Ds, config(0.0, 1e-2));
    REQUIRE(sw.rows.size() == 4);
    CHECK(sw.reference_cost == doctest::Approx(plan.cost).epsilon(1e-3));
    for (std::size_t i = 1; i < 4; ++i) {
        CHECK(sw.rows[i].l1_distance <= sw.rows[i - 1].l1_distance);
        CHECK(std::abs(sw.rows[i].reoptimized_cost - sw.reference_cost) <=
              std::abs(sw.rows[i - 1].reoptimized_cost - sw.reference_cost) + 1e-9);
    }
    CHECK(sw.rows[3].l1_distance < 0.05 * B.C);
    for (const auto& r : sw.rows) CHECK(r.reoptimized_cost <= r.cost_of_reference * (1.0 + 1e-12));
    // Threads only change scheduling.
    const LimitSweep par = diffusion_limit_sweep(s.K, s.grid, B, P, Ds, config(0.0, 1e-2), true, 3);
    for (std::size_t i = 0; i < 4; ++i) CHECK(par.rows[i].reoptimized_cost == sw.rows[i].reoptimized_cost);
    CHECK(diffusion_limit_sweep(s.K, s.grid, B, P, {}, config(0.0, 1e-2)).rows.empty());
}
