#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "wolb/spatial.hpp"

using namespace wolb;

namespace {

const BioParams P = BioParams::table1();

std::string temp_csv(const std::string& name, const std::string& body) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream(path) << body;
    return path.string();
}

}  // namespace

TEST_CASE("uniform 1D grid") {
    const Grid g = build_grid(1, {1.0, 1.0}, 4);
    REQUIRE(g.size() == 4);
    const double centers[] = {0.125, 0.375, 0.625, 0.875};
    for (int i = 0; i < 4; ++i) {
        CHECK(g.x[i] == doctest::Approx(centers[i]).epsilon(1e-15));
        CHECK(g.measure[i] == doctest::Approx(0.25).epsilon(1e-15));
    }
    for (int n : {2, 3, 7, 200, 1001}) {
        CHECK(build_grid(1, {1.0, 1.0}, n).total_measure() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("product 2D grid is row-major with x fastest") {
    const Grid g = build_grid(2, {1.0, 1.0}, 10);
    REQUIRE(g.size() == 100);
    CHECK(g.measure[37] == doctest::Approx(0.01).epsilon(1e-14));
    CHECK(g.x[1] == doctest::Approx(0.15));
    CHECK(g.y[1] == doctest::Approx(0.05));
    CHECK(g.y[10] == doctest::Approx(0.15));
    CHECK(g.total_measure() == doctest::Approx(1.0).epsilon(1e-12));
    const Grid r = build_grid_2d({2.0, 1.0}, 8, 4);
    CHECK(r.total_measure() == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("grid construction errors") {
    CHECK_THROWS_AS(build_grid(1, {0.0, 1.0}, 10), DomainError);
    CHECK_THROWS_AS(build_grid(1, {-1.0, 1.0}, 10), DomainError);
    CHECK_THROWS_AS(build_grid(1, {1.0, 1.0}, 1), DomainError);
    CHECK_THROWS_AS(build_grid(3, {1.0, 1.0}, 10), DomainError);
}

TEST_CASE("landscape formulas") {
    const Grid g = build_grid(1, {1.0, 1.0}, 200);
    const auto KS = eval_K(KKind::sinusoidal, 100.0, g);
    CHECK(KS.samples[0] == doctest::Approx(100.0 * (1.0 - 0.5 * std::cos(2 * M_PI * 0.0025))));
    // x = 0 itself is not a cell center; evaluate the formula on a grid whose
    // first center approaches it.
    const Grid fine = build_grid(1, {1.0, 1.0}, 200000);
    CHECK(eval_K(KKind::sinusoidal, 100.0, fine).samples[0] == doctest::Approx(50.0).epsilon(1e-8));

    const auto KP = eval_K(KKind::two_patch, 100.0, g);
    CHECK(KP.samples[99] == 150.0);
    CHECK(KP.samples[100] == 50.0);

    const auto KA = eval_K(KKind::arctan, 100.0, g);
    CHECK(KA.samples[0] > KA.samples[199]);
    for (std::size_t c = 1; c < g.size(); ++c) CHECK(KA.samples[c] < KA.samples[c - 1]);
}

TEST_CASE("builtin landscapes average to K0") {
    const Grid g = build_grid(1, {1.0, 1.0}, 200);
    for (KKind k : {KKind::sinusoidal, KKind::two_patch, KKind::arctan, KKind::constant}) {
        const auto K = eval_K(k, 100.0, g);
        CHECK(integrate(K.samples, g) == doctest::Approx(100.0).epsilon(1e-6));
        CHECK(K.min() > 0.0);
    }
    const Grid g2 = build_grid(2, {1.0, 1.0}, 64);
    const auto K2 = eval_K(KKind::separable_2d, 100.0, g2);
    CHECK(integrate(K2.samples, g2) == doctest::Approx(100.0).epsilon(1e-6));
    // The two-patch interface sits on a cell boundary, so the integral is exact.
    const Grid g4 = build_grid(1, {1.0, 1.0}, 4);
    CHECK(integrate(eval_K(KKind::two_patch, 100.0, g4).samples, g4) == 100.0);
}

TEST_CASE("landscape errors") {
    const Grid g1 = build_grid(1, {1.0, 1.0}, 11);
    const Grid g2 = build_grid(2, {1.0, 1.0}, 8);
    CHECK_THROWS_AS(eval_K(KKind::two_patch, 100.0, g1), DomainError);
    CHECK_THROWS_AS(eval_K(KKind::sinusoidal, 100.0, g2), DomainError);
    CHECK_THROWS_AS(eval_K(KKind::separable_2d, 100.0, g1), DomainError);
    CHECK_THROWS_AS(eval_K(KKind::table, 100.0, g1), DomainError);
    CHECK_THROWS_AS(eval_K(KKind::sinusoidal, 0.0, g1), DomainError);
    CHECK_THROWS_AS(parse_kind("K_Q"), ConfigError);
    CHECK(parse_kind("K_A") == KKind::arctan);
    CHECK(parse_kind("two_patch") == KKind::two_patch);
}

TEST_CASE("carrying capacity tables") {
    const Grid g = build_grid(1, {1.0, 1.0}, 3);
    const auto ok = load_K_csv(temp_csv("wolb_k_ok.csv", "cell_index,K\n2,30\n0,10\n1,20\n"), g);
    CHECK(ok.samples == std::vector<double>{10, 20, 30});
    CHECK(ok.K0 == doctest::Approx(20.0));
    CHECK_THROWS_AS(load_K_csv(temp_csv("wolb_k_hdr.csv", "i,K\n0,1\n1,1\n2,1\n"), g), ConfigError);
    CHECK_THROWS_AS(load_K_csv(temp_csv("wolb_k_neg.csv", "cell_index,K\n0,1\n1,-1\n2,1\n"), g),
                    ConfigError);
    CHECK_THROWS_AS(load_K_csv(temp_csv("wolb_k_dup.csv", "cell_index,K\n0,1\n0,1\n2,1\n"), g),
                    ConfigError);
    CHECK_THROWS_AS(load_K_csv(temp_csv("wolb_k_miss.csv", "cell_index,K\n0,1\n2,1\n"), g),
                    ConfigError);
    CHECK_THROWS_AS(load_K_csv(temp_csv("wolb_k_txt.csv", "cell_index,K\n0,1\n1,x\n2,1\n"), g),
                    ConfigError);
    CHECK_THROWS_AS(load_K_csv("/nonexistent/k.csv", g), ConfigError);
    CHECK_THROWS_AS(K_from_values({1.0, 2.0}, g), DomainError);
}

TEST_CASE("field validation") {
    const Grid g = build_grid(1, {1.0, 1.0}, 3);
    auto check = [&](FieldLabel label, std::vector<double> v) {
        Field f;
        f.label = label;
        f.values = std::move(v);
        f.validate(g);
    };
    CHECK_NOTHROW(check(FieldLabel::p0, {0.0, 0.5, 1.0}));
    CHECK_THROWS_AS(check(FieldLabel::p0, {0.0, 1.5, 1.0}), DomainError);
    CHECK_THROWS_AS(check(FieldLabel::u0, {0.0, -1.0, 1.0}), DomainError);
    CHECK_NOTHROW(check(FieldLabel::u0, {0.0, 250.0, 1.0}));
    CHECK_THROWS_AS(check(FieldLabel::chi, {0.0, 1.0}), DomainError);
    CHECK_THROWS_AS(check(FieldLabel::phi, {0.0, NAN, 1.0}), DomainError);
}

TEST_CASE("integration and budget") {
    const Grid g = build_grid(1, {1.0, 1.0}, 50);
    const std::vector<double> ones(50, 1.0), zeros(50, 0.0);
    CHECK(integrate(ones, g) == doctest::Approx(1.0).epsilon(1e-14));
    const auto K = eval_K(KKind::constant, 100.0, g);
    CHECK(budget_integral(zeros, K, g, P) == 0.0);
    const double p = G_inverse(30.0 / 100.0, P);
    const std::vector<double> level(50, p);
    CHECK(budget_integral(level, K, g, P) == doctest::Approx(30.0).epsilon(1e-10));
    CHECK_THROWS_AS(integrate(std::vector<double>(49, 1.0), g), DomainError);
}

TEST_CASE("budget integral of a smooth field converges at second order") {
    auto budget = [](int n) {
        const Grid g = build_grid(1, {1.0, 1.0}, n);
        const auto K = eval_K(KKind::sinusoidal, 100.0, g);
        std::vector<double> p0(n);
        for (int i = 0; i < n; ++i) p0[i] = 0.5 * std::exp(-10.0 * std::pow(g.x[i] - 0.4, 2));
        return budget_integral(p0, K, g, P);
    };
    const double b50 = budget(50), b100 = budget(100), b200 = budget(200);
    const double order = std::log2(std::abs(b100 - b50) / std::abs(b200 - b100));
    CHECK(order == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("two-patch budget does not depend on resolution") {
    auto budget = [](int n) {
        const Grid g = build_grid(1, {1.0, 1.0}, n);
        const auto K = eval_K(KKind::two_patch, 100.0, g);
        std::vector<double> p0(n);
        for (int i = 0; i < n; ++i) p0[i] = g.x[i] < 0.5 ? 0.3 : 0.1;
        return budget_integral(p0, K, g, P);
    };
    CHECK(budget(4) == doctest::Approx(budget(200)).epsilon(1e-13));
    CHECK(budget(50) == doctest::Approx(budget(1000)).epsilon(1e-13));
}
