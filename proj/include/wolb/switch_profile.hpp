#pragma once

#include <vector>

#include "wolb/model_core.hpp"

namespace wolb {

/// Tabulated w_T and p(T) over [0, p_cap] with cubic Hermite interpolation.
/// Node slopes come from the variational equation (dw/dp0 = w A and
/// dp(T)/dp0 = sensitivity), so the interpolant is C1 and accurate to
/// O(h^4). w_T does not depend on K, so one table serves every cell.
class SwitchProfile {
public:
    SwitchProfile(const BioParams& params, double T, double p_cap, int n_intervals = 1024);

    double T() const { return T_; }
    double p_cap() const { return p_cap_; }
    const BioParams& params() const { return kernel_.params(); }
    const RateKernel& kernel() const { return kernel_; }

    /// p0^T for T > T0, zero otherwise (w increasing from the origin).
    double branch_start() const { return p_branch_; }
    bool unimodal() const { return unimodal_; }

    double w(double p0) const;
    double pT(double p0) const;
    /// min of w on [0, p_hi].
    double w_min_upto(double p_hi) const;

    /// Root of w(p) = target on the increasing branch restricted to
    /// [max(lo, branch_start), hi]. The caller guarantees the bracket.
    double inverse_increasing(double target, double lo, double hi) const;

private:
    double hermite(const std::vector<double>& y, const std::vector<double>& dy, double p) const;

    RateKernel kernel_;
    double T_, p_cap_, h_;
    int n_;
    double p_branch_ = 0.0;
    double w_branch_ = 0.0;
    bool unimodal_ = false;
    std::vector<double> w_, dw_, pT_, S_;
};

}  // namespace wolb
