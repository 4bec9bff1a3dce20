#include "wolb/switch_profile.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include <boost/math/tools/toms748_solve.hpp>

namespace wolb {

SwitchProfile::SwitchProfile(const BioParams& params, double T, double p_cap, int n_intervals)
    : kernel_(params), T_(T), p_cap_(p_cap), n_(n_intervals) {
    if (!(p_cap > 0.0 && p_cap <= 1.0)) throw DomainError("switch profile range must be in (0,1]");
    if (!(T > 0.0)) throw DomainError("switch profile needs T > 0");
    if (n_intervals < 16) throw DomainError("switch profile needs at least 16 intervals");
    h_ = p_cap / n_;
    std::vector<double> nodes(n_ + 1);
    for (int j = 0; j <= n_; ++j) nodes[j] = std::min(j * h_, p_cap);
    const auto res = propagate_batch(nodes, T, params);
    w_.resize(n_ + 1);
    dw_.resize(n_ + 1);
    pT_.resize(n_ + 1);
    S_.resize(n_ + 1);
    for (int j = 0; j <= n_; ++j) {
        const SwitchValue v = switch_from_propagation(nodes[j], res[j], kernel_);
        w_[j] = v.w;
        dw_[j] = v.dw_dp0;
        pT_[j] = v.pT;
        S_[j] = v.sensitivity;
    }
    if (T > compute_T0(params)) {
        unimodal_ = true;
        p_branch_ = w_minimizer(T, params);
        w_branch_ = switch_w(p_branch_, T, params);
    } else {
        p_branch_ = 0.0;
        w_branch_ = w_[0];
    }
}

double SwitchProfile::hermite(const std::vector<double>& y, const std::vector<double>& dy,
                              double p) const {
    if (!(p >= -1e-12 && p <= p_cap_ + 1e-12)) {
        throw DomainError("switch profile queried outside [0, p_cap]");
    }
    p = std::clamp(p, 0.0, p_cap_);
    int j = std::min(static_cast<int>(p / h_), n_ - 1);
    const double s = (p - j * h_) / h_;
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    return h00 * y[j] + h10 * h_ * dy[j] + h01 * y[j + 1] + h11 * h_ * dy[j + 1];
}

double SwitchProfile::w(double p0) const { return hermite(w_, dw_, p0); }
double SwitchProfile::pT(double p0) const { return hermite(pT_, S_, p0); }

double SwitchProfile::w_min_upto(double p_hi) const {
    if (!unimodal_) return w_[0];
    return p_hi >= p_branch_ ? w_branch_ : w(p_hi);
}

double SwitchProfile::inverse_increasing(double target, double lo, double hi) const {
    const double a = std::max(lo, p_branch_);
    if (!(a < hi)) return hi;
    const double wa = a == p_branch_ ? w_branch_ : w(a);
    if (target <= wa) return a;
    if (target >= w(hi)) return hi;
    // First node inside (a, hi] whose value reaches the target.
    int j_lo = static_cast<int>(a / h_) + 1;
    int j_hi = std::min(static_cast<int>(hi / h_), n_);
    double left = a, right = hi;
    if (j_lo <= j_hi) {
        auto first = w_.begin() + j_lo, last = w_.begin() + j_hi + 1;
        auto it = std::lower_bound(first, last, target);
        const int j = static_cast<int>(it - w_.begin());
        if (it != last) right = std::min(hi, j * h_);
        if (j > j_lo) left = std::max(a, (j - 1) * h_);
    }
    auto fn = [&](double p) { return w(p) - target; };
    double fl = fn(left), fr = fn(right);
    if (fl >= 0.0) return left;
    if (fr <= 0.0) return right;
    std::uintmax_t iters = 100;
    auto tol = boost::math::tools::eps_tolerance<double>(52);
    auto r = boost::math::tools::toms748_solve(fn, left, right, fl, fr, tol, iters);
    return 0.5 * (r.first + r.second);
}

}  // namespace wolb
