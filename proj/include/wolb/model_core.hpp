#pragma once

#include <span>
#include <vector>

#include "wolb/errors.hpp"

namespace wolb {

/// Normalized birth/death rates and cytoplasmic incompatibility of the
/// wild (1) and Wolbachia-infected (2) populations.
struct BioParams {
    double b1_0 = 1.0;
    double b2_0 = 0.9;
    double d1 = 0.27;
    double d2 = 0.3;
    double s_h = 0.9;

    /// Reference parameter set used throughout the numerical experiments.
    static BioParams table1() { return {}; }

    /// Throws InvalidParams unless 0 < d1 <= d2 <= b2_0 <= b1_0, s_h in (0,1]
    /// and the unstable equilibrium theta lies strictly inside (0,1).
    void validate() const;
};

struct DerivedThresholds {
    double theta = 0.0;
    double theta2 = 0.0;
    double theta_bar = 0.0;
    double T0 = 0.0;
};

struct PropagationResult {
    double pT = 0.0;
    /// dp(T)/dp0 = exp(int_0^T f'(p(s)) ds)
    double sensitivity = 1.0;
    /// int_0^T f''(p(s)) exp(int_0^s f'(p)) ds
    double a_integral = 0.0;
};

/// Which denominator the diffusion coupling term psi uses. `printed` is the
/// form (1-p)(1-s_h p) + b2_0 p; `restored_b1` multiplies the first product
/// by b1_0 like the denominators of f and g. The two agree when b1_0 = 1.
enum class PsiVariant { printed, restored_b1 };

/// f together with its first two derivatives at one point.
struct RateJet {
    double f;
    double df;
    double d2f;
};

/// Precomputed coefficients of the bistable rate f. Construction validates
/// the parameters once so that hot loops can evaluate without checks.
class RateKernel {
public:
    explicit RateKernel(const BioParams& params);

    const BioParams& params() const { return params_; }
    double theta() const { return theta_; }

    /// Unchecked evaluation, p is expected in [0,1].
    RateJet jet(double p) const {
        const double n0 = p * (1.0 - p) * (p - theta_);
        const double n1 = (-3.0 * p + 2.0 * (1.0 + theta_)) * p - theta_;
        const double n2 = -6.0 * p + 2.0 * (1.0 + theta_);
        const double d0 = b1_ * (1.0 - p) * (1.0 - s_ * p) + b2_ * p;
        const double d1 = b1_ * (2.0 * s_ * p - (1.0 + s_)) + b2_;
        const double d2 = 2.0 * b1_ * s_;
        const double inv = 1.0 / d0;
        const double q = (n1 * d0 - n0 * d1) * inv * inv;
        return {c_ * n0 * inv, c_ * q, c_ * ((n2 * d0 - n0 * d2) * inv * inv - 2.0 * d1 * q * inv)};
    }

    double g(double p) const {
        const double num = b1_ * (1.0 - p) * (1.0 - s_ * p);
        return num / (num + b2_ * p);
    }

    double g_prime(double p) const {
        const double num = b1_ * (1.0 - p) * (1.0 - s_ * p);
        const double dnum = b1_ * (2.0 * s_ * p - (1.0 + s_));
        const double den = num + b2_ * p;
        const double dden = dnum + b2_;
        return (dnum * den - num * dden) / (den * den);
    }

    double psi(double p, PsiVariant variant) const;
    double psi_prime(double p, PsiVariant variant) const;

private:
    BioParams params_;
    double b1_, b2_, s_, theta_, c_;
};

// Rate functions. Inputs within 1e-12 outside [0,1] are clamped, anything
// further out raises DomainError.
double f_rate(double p, const BioParams& params);
double f_prime(double p, const BioParams& params);
double f_second(double p, const BioParams& params);
double g_frac(double p, const BioParams& params);
double g_prime(double p, const BioParams& params);
double psi_term(double p, const BioParams& params, PsiVariant variant = PsiVariant::printed);

/// Largest proportion on which G is evaluated; 1/g is not integrable at 1.
inline constexpr double kGMaxProportion = 1.0 - 1e-9;

/// Antiderivative of 1/g vanishing at zero, in closed form (partial fractions).
double G_antideriv(double p, const BioParams& params);
/// Inverse of G on [0, kGMaxProportion]. Throws DomainError for y < 0 or
/// y beyond G(kGMaxProportion).
double G_inverse(double y, const BioParams& params);

double theta(const BioParams& params);
/// Unique zero of f'' in (0,1), from the cubic factor of the numerator of f''.
double theta2(const BioParams& params);

/// Horizon below which the switch function is increasing, from the values
/// of f', f'', g, g' at zero.
double t0_from_derivatives(double f1_at0, double f2_at0, double g_at0, double g1_at0);
double compute_T0(const BioParams& params);
DerivedThresholds derive_thresholds(const BioParams& params);

/// Number of RK4 steps used for horizon T (dt = min(1e-3, T/1000)).
int rk4_steps(double T);

/// Integrates p' = f(p) jointly with the variational equation and the
/// f''-weighted sensitivity integral.
PropagationResult propagate(double p0, double T, const BioParams& params);
/// Same as propagate for many initial values at once.
std::vector<PropagationResult> propagate_batch(std::span<const double> p0, double T,
                                               const BioParams& params);

/// w_T(p0) = -g(p0) (1 - p(T)) dp(T)/dp0, always negative on [0,1).
double switch_w(double p0, double T, const BioParams& params);
/// The bracket that controls the sign of dw/dp0 = w A.
double A_function(double p0, double T, const BioParams& params);

struct SwitchValue {
    double w;
    double A;
    double dw_dp0;
    double pT;
    double sensitivity;
};
SwitchValue switch_eval(double p0, double T, const BioParams& params);
SwitchValue switch_from_propagation(double p0, const PropagationResult& r, const RateKernel& kernel);

struct HypothesisResult {
    bool holds = false;
    int sign_changes = 0;
};
/// Counts strict sign changes of A on a uniform grid of (0, theta_bar).
/// Values with |A| < 1e-9 are treated as zero and skipped.
HypothesisResult check_hypothesis_H(const BioParams& params, double T, int n_grid = 2000);
/// Same check for several horizons from a single integration up to max(T_list).
std::vector<HypothesisResult> check_hypothesis_H(const BioParams& params,
                                                 std::span<const double> T_list, int n_grid = 2000);

/// Solves w_T(p0) = target on a bracket where w_T is increasing.
double w_inverse_increasing(double target, double T, const BioParams& params, double p_lo,
                            double p_hi);
/// Interior minimizer p0^T of w_T, defined only for T > T0.
double w_minimizer(double T, const BioParams& params);

}  // namespace wolb
