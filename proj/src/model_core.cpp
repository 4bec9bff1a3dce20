#include "wolb/model_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>

#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

namespace wolb {

namespace {

double clamp_unit(double p, const char* what) {
    if (!(p >= -1e-12 && p <= 1.0 + 1e-12)) {
        throw DomainError(std::string(what) + ": proportion " + std::to_string(p) +
                          " outside [0,1]");
    }
    return std::clamp(p, 0.0, 1.0);
}

// log1p(x)/x with the removable singularity filled in.
double log1p_ratio(double x) {
    if (std::abs(x) < 1e-8) return 1.0 - 0.5 * x + x * x / 3.0;
    return std::log1p(x) / x;
}

template <class F>
double bracket_root(F&& fn, double lo, double hi, double flo, double fhi, const char* what) {
    std::uintmax_t iters = 200;
    auto tol = boost::math::tools::eps_tolerance<double>(50);
    auto r = boost::math::tools::toms748_solve(fn, lo, hi, flo, fhi, tol, iters);
    if (iters >= 200) throw SolverError(std::string(what) + ": root refinement did not converge");
    return 0.5 * (r.first + r.second);
}

}  // namespace

void BioParams::validate() const {
    const auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(b1_0) || !finite(b2_0) || !finite(d1) || !finite(d2) || !finite(s_h)) {
        throw InvalidParams("biological parameters must be finite");
    }
    if (!(d1 > 0.0 && d1 <= d2 && d2 <= b2_0 && b2_0 <= b1_0)) {
        throw InvalidParams("require 0 < d1 <= d2 <= b2_0 <= b1_0");
    }
    if (!(s_h > 0.0 && s_h <= 1.0)) throw InvalidParams("require s_h in (0,1]");
    const double th = (1.0 - d1 * b2_0 / (d2 * b1_0)) / s_h;
    if (!(th > 0.0 && th < 1.0)) {
        throw InvalidParams("unstable equilibrium theta = " + std::to_string(th) +
                            " is not inside (0,1)");
    }
}

RateKernel::RateKernel(const BioParams& params) : params_(params) {
    params.validate();
    b1_ = params.b1_0;
    b2_ = params.b2_0;
    s_ = params.s_h;
    theta_ = (1.0 - params.d1 * b2_ / (params.d2 * b1_)) / s_;
    c_ = b1_ * params.d2 * s_;
}

double RateKernel::psi(double p, PsiVariant variant) const {
    const double a = variant == PsiVariant::printed ? 1.0 : b1_;
    const double num = p * (1.0 - p) * (b2_ - b1_ * (1.0 - s_ * p));
    const double den = a * (1.0 - p) * (1.0 - s_ * p) + b2_ * p;
    return num / den;
}

double RateKernel::psi_prime(double p, PsiVariant variant) const {
    const double a = variant == PsiVariant::printed ? 1.0 : b1_;
    const double u = p * (1.0 - p);
    const double du = 1.0 - 2.0 * p;
    const double v = b2_ - b1_ + b1_ * s_ * p;
    const double dv = b1_ * s_;
    const double num = u * v;
    const double dnum = du * v + u * dv;
    const double den = a * (1.0 - p) * (1.0 - s_ * p) + b2_ * p;
    const double dden = a * (2.0 * s_ * p - (1.0 + s_)) + b2_;
    return (dnum * den - num * dden) / (den * den);
}

double f_rate(double p, const BioParams& params) {
    return RateKernel(params).jet(clamp_unit(p, "f")).f;
}
double f_prime(double p, const BioParams& params) {
    return RateKernel(params).jet(clamp_unit(p, "f'")).df;
}
double f_second(double p, const BioParams& params) {
    return RateKernel(params).jet(clamp_unit(p, "f''")).d2f;
}
double g_frac(double p, const BioParams& params) {
    return RateKernel(params).g(clamp_unit(p, "g"));
}
double g_prime(double p, const BioParams& params) {
    return RateKernel(params).g_prime(clamp_unit(p, "g'"));
}
double psi_term(double p, const BioParams& params, PsiVariant variant) {
    return RateKernel(params).psi(clamp_unit(p, "psi"), variant);
}

double G_antideriv(double p, const BioParams& params) {
    params.validate();
    if (!(p >= -1e-12 && p <= kGMaxProportion)) {
        throw DomainError("G: proportion " + std::to_string(p) + " outside [0, 1-1e-9]");
    }
    p = std::max(p, 0.0);
    const double s = params.s_h;
    const double q = p / (1.0 - p);
    // int_0^p x/((1-x)(1-s x)) dx written so that s -> 1 stays well conditioned.
    const double frac = std::log1p(-p) / s + (q / s) * log1p_ratio((1.0 - s) * q);
    return p + (params.b2_0 / params.b1_0) * frac;
}

double G_inverse(double y, const BioParams& params) {
    const RateKernel kernel(params);
    if (!(y >= -1e-12)) throw DomainError("G^-1: negative argument");
    y = std::max(y, 0.0);
    if (y == 0.0) return 0.0;
    const double y_max = G_antideriv(kGMaxProportion, params);
    if (y > y_max) {
        throw DomainError("G^-1: argument " + std::to_string(y) + " exceeds G(1-1e-9) = " +
                          std::to_string(y_max));
    }
    double lo = 0.0, hi = kGMaxProportion;
    double x = y / (1.0 + y);
    const double tol = 1e-12 * std::max(1.0, y);
    for (int it = 0; it < 200; ++it) {
        const double r = G_antideriv(x, params) - y;
        if (std::abs(r) <= tol) return x;
        if (r > 0.0) hi = x; else lo = x;
        // G' = 1/g, so a Newton step is -r g(x).
        double next = x - r * kernel.g(x);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (hi - lo < 1e-16) return x;
        x = next;
    }
    throw SolverError("G^-1: no convergence");
}

double theta(const BioParams& params) { return RateKernel(params).theta(); }

double theta2(const BioParams& params) {
    const RateKernel kernel(params);
    const double s = params.s_h;
    const double th = kernel.theta();
    const double k = 1.0 + s - params.b2_0 / params.b1_0;
    const double A = s - s * s * th - k * k + k * s + k * s * th;
    const double B = 3.0 * (k - s - s * th);
    const double C = -3.0 * (1.0 - s * th);
    const double D = th - k * th + 1.0;
    auto R = [&](double p) { return ((A * p + B) * p + C) * p + D; };
    const double r0 = R(0.0), r1 = R(1.0);
    if (!(r0 * r1 < 0.0)) {
        throw InvalidParams("inflection cubic has no sign change on [0,1]");
    }
    const double root = bracket_root(R, 0.0, 1.0, r0, r1, "theta2");
    const double lo = kernel.jet(std::max(root - 1e-6, 0.0)).d2f;
    const double hi = kernel.jet(std::min(root + 1e-6, 1.0)).d2f;
    if (!(lo * hi <= 0.0)) throw SolverError("theta2: f'' does not change sign at the cubic root");
    return root;
}

double t0_from_derivatives(double f1_at0, double f2_at0, double g_at0, double g1_at0) {
    const double arg = (f2_at0 * g_at0 - f1_at0 * g1_at0) / (g_at0 * (f2_at0 - f1_at0));
    if (!(arg > 0.0 && arg < 1.0) || !(f1_at0 < 0.0)) {
        throw InvalidParams("switch horizon T0 undefined: logarithm argument " +
                            std::to_string(arg) + " not in (0,1)");
    }
    return std::log(arg) / f1_at0;
}

double compute_T0(const BioParams& params) {
    const RateKernel kernel(params);
    const RateJet j = kernel.jet(0.0);
    return t0_from_derivatives(j.df, j.d2f, kernel.g(0.0), kernel.g_prime(0.0));
}

DerivedThresholds derive_thresholds(const BioParams& params) {
    DerivedThresholds d;
    d.theta = theta(params);
    d.theta2 = theta2(params);
    d.theta_bar = std::max(d.theta, d.theta2);
    d.T0 = compute_T0(params);
    return d;
}

int rk4_steps(double T) {
    if (!(T >= 0.0) || !std::isfinite(T)) throw DomainError("horizon must be finite and >= 0");
    if (T == 0.0) return 0;
    return std::max(1000, static_cast<int>(std::ceil(T / 1e-3 - 1e-9)));
}

namespace {

struct Aug {
    double p, S, a;
};

inline Aug aug_rhs(const RateKernel& k, double p, double S) {
    const RateJet j = k.jet(p);
    return {j.f, j.df * S, j.d2f * S};
}

inline void rk4_step(const RateKernel& k, double dt, double& p, double& S, double& a) {
    const Aug k1 = aug_rhs(k, p, S);
    const Aug k2 = aug_rhs(k, p + 0.5 * dt * k1.p, S + 0.5 * dt * k1.S);
    const Aug k3 = aug_rhs(k, p + 0.5 * dt * k2.p, S + 0.5 * dt * k2.S);
    const Aug k4 = aug_rhs(k, p + dt * k3.p, S + dt * k3.S);
    const double h6 = dt / 6.0;
    p += h6 * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p);
    S += h6 * (k1.S + 2.0 * k2.S + 2.0 * k3.S + k4.S);
    a += h6 * (k1.a + 2.0 * k2.a + 2.0 * k3.a + k4.a);
}

}  // namespace

PropagationResult propagate(double p0, double T, const BioParams& params) {
    const RateKernel kernel(params);
    double p = clamp_unit(p0, "propagate");
    const int n = rk4_steps(T);
    double S = 1.0, a = 0.0;
    if (n > 0) {
        const double dt = T / n;
        for (int i = 0; i < n; ++i) rk4_step(kernel, dt, p, S, a);
    }
    return {p, S, a};
}

std::vector<PropagationResult> propagate_batch(std::span<const double> p0, double T,
                                               const BioParams& params) {
    const RateKernel kernel(params);
    const std::size_t m = p0.size();
    std::vector<double> p(m), S(m, 1.0), a(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) p[i] = clamp_unit(p0[i], "propagate_batch");
    const int n = rk4_steps(T);
    if (n > 0) {
        const double dt = T / n;
        double* pp = p.data();
        double* ps = S.data();
        double* pa = a.data();
        // Steps outer, points inner: the inner loop vectorizes.
        for (int step = 0; step < n; ++step) {
            for (std::size_t i = 0; i < m; ++i) rk4_step(kernel, dt, pp[i], ps[i], pa[i]);
        }
    }
    std::vector<PropagationResult> out(m);
    for (std::size_t i = 0; i < m; ++i) out[i] = {p[i], S[i], a[i]};
    return out;
}

SwitchValue switch_from_propagation(double p0, const PropagationResult& r,
                                    const RateKernel& kernel) {
    const double g = kernel.g(p0);
    const double dg = kernel.g_prime(p0);
    const double one_m = 1.0 - r.pT;
    const double S = r.sensitivity;
    SwitchValue v{};
    v.w = -g * one_m * S;
    // Product rule on w, no division so that p0 = 1 stays finite.
    v.dw_dp0 = -dg * one_m * S + g * S * S - g * one_m * S * r.a_integral;
    v.A = v.w != 0.0 ? v.dw_dp0 / v.w : -std::numeric_limits<double>::infinity();
    v.pT = r.pT;
    v.sensitivity = S;
    return v;
}

SwitchValue switch_eval(double p0, double T, const BioParams& params) {
    const RateKernel kernel(params);
    p0 = clamp_unit(p0, "switch");
    return switch_from_propagation(p0, propagate(p0, T, params), kernel);
}

double switch_w(double p0, double T, const BioParams& params) {
    return switch_eval(p0, T, params).w;
}

double A_function(double p0, double T, const BioParams& params) {
    return switch_eval(p0, T, params).A;
}

namespace {

HypothesisResult count_sign_changes(std::span<const double> grid, std::span<const double> p,
                                    std::span<const double> S, std::span<const double> a,
                                    const RateKernel& kernel) {
    HypothesisResult h;
    int last_sign = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double A = switch_from_propagation(grid[i], {p[i], S[i], a[i]}, kernel).A;
        if (std::abs(A) < 1e-9) continue;
        const int sg = A > 0.0 ? 1 : -1;
        if (last_sign != 0 && sg != last_sign) ++h.sign_changes;
        last_sign = sg;
    }
    h.holds = h.sign_changes <= 1;
    return h;
}

}  // namespace

HypothesisResult check_hypothesis_H(const BioParams& params, double T, int n_grid) {
    const double Ts[] = {T};
    return check_hypothesis_H(params, Ts, n_grid)[0];
}

std::vector<HypothesisResult> check_hypothesis_H(const BioParams& params,
                                                 std::span<const double> T_list, int n_grid) {
    if (n_grid < 100) throw DomainError("hypothesis grid needs at least 100 points");
    const RateKernel kernel(params);
    const double tb = std::max(kernel.theta(), theta2(params));
    const double lo = 1e-6, hi = tb - 1e-6;
    const std::size_t m = static_cast<std::size_t>(n_grid);
    std::vector<double> grid(m), p(m), S(m, 1.0), a(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) p[i] = grid[i] = lo + (hi - lo) * i / (n_grid - 1);
    std::vector<std::size_t> order(T_list.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return T_list[x] < T_list[y]; });
    std::vector<HypothesisResult> out(T_list.size());
    double t = 0.0;
    for (std::size_t k : order) {
        // Segments use the step rule of propagate, so a single horizon matches it exactly.
        const int n = rk4_steps(T_list[k] - t);
        if (n > 0) {
            const double dt = (T_list[k] - t) / n;
            for (int step = 0; step < n; ++step) {
                for (std::size_t i = 0; i < m; ++i) rk4_step(kernel, dt, p[i], S[i], a[i]);
            }
        }
        t = T_list[k];
        out[k] = count_sign_changes(grid, p, S, a, kernel);
    }
    return out;
}

double w_inverse_increasing(double target, double T, const BioParams& params, double p_lo,
                            double p_hi) {
    p_lo = clamp_unit(p_lo, "w^-1");
    p_hi = clamp_unit(p_hi, "w^-1");
    if (!(p_lo < p_hi)) throw DomainError("w^-1: empty bracket");
    auto fn = [&](double p) { return switch_w(p, T, params) - target; };
    const double flo = fn(p_lo), fhi = fn(p_hi);
    const double slack = 1e-12 * std::max(1.0, std::abs(target));
    if (flo > slack || fhi < -slack) {
        throw DomainError("w^-1: target " + std::to_string(target) + " outside [" +
                          std::to_string(flo + target) + ", " + std::to_string(fhi + target) +
                          "]");
    }
    if (flo >= 0.0) return p_lo;
    if (fhi <= 0.0) return p_hi;
    return bracket_root(fn, p_lo, p_hi, flo, fhi, "w^-1");
}

double w_minimizer(double T, const BioParams& params) {
    const DerivedThresholds d = derive_thresholds(params);
    if (!(T > d.T0)) {
        throw DomainError("w_T has no interior minimizer for T <= T0 = " + std::to_string(d.T0));
    }
    const RateKernel kernel(params);
    constexpr int n = 400;
    std::vector<double> grid(n + 1);
    for (int i = 0; i <= n; ++i) grid[i] = d.theta_bar * i / n;
    const auto res = propagate_batch(grid, T, params);
    double prev = switch_from_propagation(grid[0], res[0], kernel).A;
    for (int i = 1; i <= n; ++i) {
        const double cur = switch_from_propagation(grid[i], res[i], kernel).A;
        if (prev > 0.0 && cur <= 0.0) {
            if (cur == 0.0) return grid[i];
            auto fn = [&](double p) { return A_function(p, T, params); };
            return bracket_root(fn, grid[i - 1], grid[i], prev, cur, "w minimizer");
        }
        prev = cur;
    }
    throw SolverError("w_T has no descent-to-ascent transition on [0, theta_bar]");
}

}  // namespace wolb
