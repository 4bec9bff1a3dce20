#include "wolb/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace wolb {

void ReductionConfig::validate() const {
    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw DomainError("epsilon must lie in (0,1]");
    if (release == ReleaseMode::pulse && !(pulse_duration > 0.0)) {
        throw DomainError("pulse duration must be positive");
    }
}

double wild_equilibrium(double K, double epsilon, const BioParams& params) {
    return K * (1.0 - epsilon * params.d1 / params.b1_0);
}

double invasion_equilibrium(double K, double epsilon, const BioParams& params) {
    return K * (1.0 - epsilon * params.d2 / params.b2_0);
}

namespace {

struct Rates {
    double b1, b2, d1, d2, s;
};

inline void two_species_rhs(const Rates& r, double K, double u, double n1, double n2, double& dn1,
                            double& dn2) {
    const double N = n1 + n2;
    const double logistic = 1.0 - N / K;
    const double ci = N > 0.0 ? 1.0 - r.s * n2 / N : 1.0;
    dn1 = r.b1 * n1 * logistic * ci - r.d1 * n1;
    dn2 = r.b2 * n2 * logistic - r.d2 * n2 + u;
}

}  // namespace

TwoSpeciesRun simulate_two_species(std::span<const double> u0, const CarryingCapacity& K,
                                   const Grid& grid, double T, std::span<const double> snapshots,
                                   const BioParams& params, const ReductionConfig& cfg,
                                   std::span<const TwoSpeciesState> initial) {
    params.validate();
    cfg.validate();
    if (u0.size() != grid.size()) throw DomainError("release does not match grid");
    if (!initial.empty() && initial.size() != grid.size()) {
        throw DomainError("initial states do not match grid");
    }
    if (!(T > 0.0)) throw DomainError("horizon must be positive");
    const double eps = cfg.epsilon;
    const Rates r{params.b1_0 / eps, params.b2_0 / eps, params.d1, params.d2, params.s_h};
    const double dt_target = eps / 100.0;
    const int steps = static_cast<int>(std::ceil(T / dt_target - 1e-9));
    const double dt = T / steps;
    int pulse_steps = 0;
    if (cfg.release == ReleaseMode::pulse) {
        pulse_steps = static_cast<int>(std::lround(cfg.pulse_duration / dt));
        if (std::abs(pulse_steps * dt - cfg.pulse_duration) > 1e-9 * cfg.pulse_duration ||
            pulse_steps == 0) {
            throw DomainError("pulse duration must be a multiple of the step epsilon/100");
        }
    }
    std::vector<int> snap_step(snapshots.size());
    for (std::size_t k = 0; k < snapshots.size(); ++k) {
        if (!(snapshots[k] >= 0.0 && snapshots[k] <= T)) throw DomainError("snapshot outside [0,T]");
        snap_step[k] = static_cast<int>(std::lround(snapshots[k] / dt));
    }
    TwoSpeciesRun run;
    run.times.assign(snapshots.begin(), snapshots.end());
    run.states.assign(snapshots.size(), std::vector<TwoSpeciesState>(grid.size()));
    run.steps = steps;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        const double k = K.samples[c];
        double n1 = initial.empty() ? wild_equilibrium(k, eps, params) : initial[c].n1;
        double n2 = initial.empty() ? 0.0 : initial[c].n2;
        double rate = 0.0;
        if (cfg.release == ReleaseMode::jump) n2 += u0[c];
        else rate = u0[c] / cfg.pulse_duration;
        auto record = [&](int step) {
            for (std::size_t s = 0; s < snap_step.size(); ++s) {
                if (snap_step[s] == step) run.states[s][c] = {n1, n2};
            }
        };
        record(0);
        for (int i = 0; i < steps; ++i) {
            const double u = i < pulse_steps ? rate : 0.0;
            double a1, a2, b1, b2, c1, c2, e1, e2;
            two_species_rhs(r, k, u, n1, n2, a1, a2);
            two_species_rhs(r, k, u, n1 + 0.5 * dt * a1, n2 + 0.5 * dt * a2, b1, b2);
            two_species_rhs(r, k, u, n1 + 0.5 * dt * b1, n2 + 0.5 * dt * b2, c1, c2);
            two_species_rhs(r, k, u, n1 + dt * c1, n2 + dt * c2, e1, e2);
            n1 += dt / 6.0 * (a1 + 2 * b1 + 2 * c1 + e1);
            n2 += dt / 6.0 * (a2 + 2 * b2 + 2 * c2 + e2);
            if (!std::isfinite(n1) || !std::isfinite(n2)) {
                throw SolverError("two-species integration diverged; reduce the step");
            }
            record(i + 1);
        }
    }
    return run;
}

double cost_full(std::span<const TwoSpeciesState> states, const CarryingCapacity& K,
                 const Grid& grid, const BioParams& params, double epsilon) {
    if (states.size() != grid.size()) throw DomainError("states do not match grid");
    double s = 0.0;
    for (std::size_t c = 0; c < states.size(); ++c) {
        const double target = invasion_equilibrium(K.samples[c], epsilon, params);
        const double gap = std::max(0.0, target - states[c].n2);
        s += (states[c].n1 * states[c].n1 + gap * gap) * grid.measure[c];
    }
    return 0.5 * s;
}

std::vector<std::vector<double>> reduced_release_trajectory(std::span<const double> u0,
                                                            const CarryingCapacity& K,
                                                            std::span<const double> snapshots,
                                                            const BioParams& params,
                                                            const ReductionConfig& cfg) {
    cfg.validate();
    const RateKernel kernel(params);
    std::vector<std::vector<double>> out(snapshots.size(), std::vector<double>(u0.size()));
    const double tau = cfg.release == ReleaseMode::pulse ? cfg.pulse_duration : 0.0;
    // Fine steps: this trajectory is the reference the two-species gap is measured against.
    const double h = 1e-4;
    for (std::size_t c = 0; c < u0.size(); ++c) {
        const double k = K.samples[c];
        const double rate = tau > 0.0 ? u0[c] / (k * tau) : 0.0;
        double p = tau > 0.0 ? 0.0 : G_inverse(u0[c] / k, params);
        double t = 0.0;
        auto rhs = [&](double q, bool on) {
            q = std::clamp(q, 0.0, 1.0);
            return kernel.jet(q).f + (on ? rate * kernel.g(q) : 0.0);
        };
        auto advance = [&](double t_end, bool on) {
            const int n = std::max(1, static_cast<int>(std::ceil((t_end - t) / h - 1e-9)));
            const double dt = (t_end - t) / n;
            for (int i = 0; i < n; ++i) {
                const double k1 = rhs(p, on);
                const double k2 = rhs(p + 0.5 * dt * k1, on);
                const double k3 = rhs(p + 0.5 * dt * k2, on);
                const double k4 = rhs(p + dt * k3, on);
                p += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
            }
            t = t_end;
        };
        std::vector<std::size_t> order(snapshots.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return snapshots[a] < snapshots[b]; });
        for (std::size_t idx : order) {
            const double ts = snapshots[idx];
            if (t < tau && ts > t) advance(std::min(ts, tau), true);
            if (ts > t) advance(ts, false);
            out[idx][c] = p;
        }
    }
    return out;
}

double propagate_by_F(double p0, double T, const BioParams& params) {
    params.validate();
    const double th = theta(params);
    if (!(p0 > 1e-9 && p0 < 1.0 - 1e-9 && std::abs(p0 - th) > 1e-9)) {
        throw DomainError("propagate_by_F: p0 too close to an equilibrium");
    }
    if (!(T >= 0.0)) throw DomainError("propagate_by_F: negative horizon");
    if (T == 0.0) return p0;
    const bool below = p0 < th;
    const double b1 = params.b1_0, b2 = params.b2_0, sh = params.s_h;
    const double c = b1 * params.d2 * sh;
    // s = log of the distance to the stable end (0 below theta, 1 above), so
    // that p and 1-p are both exact and dv/f has no cancellation:
    // f = c p (1-p) (p - theta) / (b1 (1-p)(1-sh p) + b2 p).
    auto integrand = [&](double s) {
        const double e = std::exp(s);
        const double p = below ? e : 1.0 - e;
        const double q = below ? 1.0 - e : e;
        const double den = b1 * q * (1.0 - sh * p) + b2 * p;
        return den / (c * (below ? q : p) * std::abs(p - th));
    };
    const double s0 = below ? std::log(p0) : std::log1p(-p0);
    auto travel = [&](double s) {
        return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, s, s0, 12,
                                                                            1e-12);
    };
    double step = 1.0;
    while (travel(s0 - step) < T) {
        step *= 2.0;
        if (step > 700.0) throw SolverError("propagate_by_F: horizon beyond representable range");
    }
    double lo = s0, hi = s0 - step;
    for (int it = 0; it < 200 && std::abs(hi - lo) > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (travel(mid) < T) lo = mid; else hi = mid;
    }
    const double e = std::exp(0.5 * (lo + hi));
    return below ? e : 1.0 - e;
}

BruteForceResult brute_force_plan(const CarryingCapacity& K, const Grid& grid,
                                  const Budget& budget, const BioParams& params, int levels,
                                  std::uint64_t shuffle_seed) {
    budget.validate();
    const std::size_t n = grid.size();
    if (levels < 2) throw DomainError("brute force needs at least two levels");
    if (std::pow(static_cast<double>(levels), static_cast<double>(n)) > 1e9) {
        throw DomainError("brute force search space exceeds 1e9 combinations");
    }
    std::vector<std::vector<double>> p(n), cost(n), use(n);
    std::vector<std::vector<int>> order(n);
    std::mt19937_64 rng(shuffle_seed);
    for (std::size_t c = 0; c < n; ++c) {
        const double k = K.samples[c], m = grid.measure[c];
        const double pM = G_inverse(budget.M / k, params);
        p[c].resize(levels);
        for (int l = 0; l < levels; ++l) p[c][l] = l == levels - 1 ? pM : pM * l / (levels - 1);
        const auto res = propagate_batch(p[c], budget.T, params);
        cost[c].resize(levels);
        use[c].resize(levels);
        for (int l = 0; l < levels; ++l) {
            const double d = 1.0 - res[l].pT;
            cost[c][l] = k * k * d * d * m;
            use[c][l] = l == 0 ? 0.0 : k * G_antideriv(p[c][l], params) * m;
        }
        order[c].resize(levels);
        std::iota(order[c].begin(), order[c].end(), 0);
        if (shuffle_seed != 0) std::shuffle(order[c].begin(), order[c].end(), rng);
    }
    // Cheapest completion of cells c.. regardless of budget: a valid lower bound.
    std::vector<double> tail_min(n + 1, 0.0);
    for (std::size_t c = n; c-- > 0;) {
        tail_min[c] = tail_min[c + 1] + *std::min_element(cost[c].begin(), cost[c].end());
    }
    BruteForceResult best;
    best.cost = std::numeric_limits<double>::infinity();
    std::vector<int> cur(n, 0);
    const double C = budget.C * (1.0 + 1e-12);
    auto dfs = [&](auto&& self, std::size_t c, double spent, double acc) -> void {
        if (c == n) {
            ++best.feasible;
            if (acc < best.cost) {
                best.cost = acc;
                best.levels = cur;
            }
            return;
        }
        for (int l : order[c]) {
            const double s = spent + use[c][l];
            if (s > C) continue;
            if (acc + cost[c][l] + tail_min[c + 1] > best.cost) {
                ++best.feasible;  // counted but pruned
                continue;
            }
            cur[c] = l;
            self(self, c + 1, s, acc + cost[c][l]);
        }
    };
    dfs(dfs, 0, 0.0, 0.0);
    best.p0.resize(n);
    for (std::size_t c = 0; c < n; ++c) best.p0[c] = p[c][best.levels[c]];
    return best;
}

}  // namespace wolb
