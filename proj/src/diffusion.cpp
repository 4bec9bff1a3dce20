#include "wolb/diffusion.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "wolb/plan_io.hpp"

namespace wolb {

const char* to_string(PdeScheme s) { return s == PdeScheme::imex ? "imex" : "explicit"; }

PdeScheme parse_scheme(const std::string& name) {
    if (name == "imex") return PdeScheme::imex;
    if (name == "explicit") return PdeScheme::explicit_euler;
    throw DomainError("unknown scheme '" + name + "' (imex|explicit)");
}

void PdeConfig::validate(const Grid& grid) const {
    if (!(D >= 0.0) || !std::isfinite(D)) throw DomainError("D must be finite and >= 0");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("dt must be positive");
    if (scheme == PdeScheme::explicit_euler && D > 0.0) {
        const double h = std::min(grid.dx(), grid.dim == 2 ? grid.dy() : grid.dx());
        const double limit = h * h / (2.0 * D * grid.dim);
        if (dt > limit) {
            throw DomainError("explicit scheme violates CFL: dt=" + fmt_double(dt) +
                              " > " + fmt_double(limit));
        }
    }
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;

// Thomas factorization of a tridiagonal matrix, row i = a[i] x[i-1] + b[i] x[i] + c[i] x[i+1].
struct Tridiagonal {
    std::vector<double> a, cp, inv_m;

    Tridiagonal() = default;
    Tridiagonal(std::vector<double> sub, const std::vector<double>& diag,
                const std::vector<double>& sup)
        : a(std::move(sub)), cp(diag.size()), inv_m(diag.size()) {
        const std::size_t n = diag.size();
        for (std::size_t i = 0; i < n; ++i) {
            const double m = diag[i] - (i ? a[i] * cp[i - 1] : 0.0);
            if (!(std::abs(m) > 0.0)) throw SolverError("singular tridiagonal system");
            inv_m[i] = 1.0 / m;
            cp[i] = i + 1 < n ? sup[i] * inv_m[i] : 0.0;
        }
    }

    void solve(std::vector<double>& d) const {
        const std::size_t n = d.size();
        d[0] *= inv_m[0];
        for (std::size_t i = 1; i < n; ++i) d[i] = (d[i] - a[i] * d[i - 1]) * inv_m[i];
        for (std::size_t i = n - 1; i-- > 0;) d[i] -= cp[i] * d[i + 1];
    }
};

// Central differences inside, second-order one-sided at the two ends.
void axis_derivatives(const std::vector<double>& v, double h, std::vector<double>& d1,
                      std::vector<double>& d2) {
    const std::size_t n = v.size();
    d1.assign(n, 0.0);
    d2.assign(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        d1[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
        d2[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
    }
    d1[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    d1[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    d2[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / (h * h);
    d2[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / (h * h);
}

}  // namespace

struct PdeSolver::Transport {
    bool active = false;
    bool implicit = true;
    bool tri = false;
    SpMat L;
    SpMat Lt;
    Tridiagonal fwd, adj;
    Eigen::SparseLU<SpMat> lu, lu_t;
    double dt = 0.0;

    void apply(std::vector<double>& x, bool transpose) const {
        if (!active) return;
        if (implicit) {
            if (tri) {
                (transpose ? adj : fwd).solve(x);
            } else {
                Eigen::Map<Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
                Eigen::VectorXd r = transpose ? lu_t.solve(v) : lu.solve(v);
                v = r;
            }
        } else {
            Eigen::Map<Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
            Eigen::VectorXd r = v + dt * ((transpose ? Lt : L) * v);
            v = r;
        }
    }
};

PdeSolver::PdeSolver(const CarryingCapacity& K, const Grid& grid, double T, const PdeConfig& cfg,
                     const BioParams& params)
    : K_(K), grid_(grid), params_(params), kernel_(params), cfg_(cfg), T_(T),
      transport_(std::make_unique<Transport>()) {
    cfg.validate(grid);
    if (!(T > 0.0)) throw DomainError("horizon must be positive");
    if (K.samples.size() != grid.size()) throw DomainError("K does not match grid");
    if (grid.nx < 4 || (grid.dim == 2 && grid.ny < 4)) {
        throw DomainError("diffusion needs at least 4 cells per axis");
    }
    steps_ = std::max(1, static_cast<int>(std::ceil(T / cfg.dt - 1e-9)));
    dt_ = T / steps_;

    const std::size_t n = grid.size();
    const int nx = grid.nx, ny = grid.dim == 2 ? grid.ny : 1;
    kappa_.assign(n, 0.0);
    beta_x_.assign(n, 0.0);
    beta_y_.assign(n, 0.0);
    if (cfg.k_coupling) {
        std::vector<double> line, d1, d2;
        for (int j = 0; j < ny; ++j) {
            line.assign(nx, 0.0);
            for (int i = 0; i < nx; ++i) line[i] = K.samples[i + nx * j];
            axis_derivatives(line, grid.dx(), d1, d2);
            for (int i = 0; i < nx; ++i) {
                const std::size_t c = i + nx * j;
                beta_x_[c] = d1[i] / K.samples[c];
                kappa_[c] += d2[i] / K.samples[c];
            }
        }
        if (grid.dim == 2) {
            for (int i = 0; i < nx; ++i) {
                line.assign(ny, 0.0);
                for (int j = 0; j < ny; ++j) line[j] = K.samples[i + nx * j];
                axis_derivatives(line, grid.dy(), d1, d2);
                for (int j = 0; j < ny; ++j) {
                    const std::size_t c = i + nx * j;
                    beta_y_[c] = d1[j] / K.samples[c];
                    kappa_[c] += d2[j] / K.samples[c];
                }
            }
        }
    }

    Transport& tr = *transport_;
    tr.active = cfg.D > 0.0;
    tr.implicit = cfg.scheme == PdeScheme::imex;
    tr.dt = dt_;
    if (!tr.active) return;
    // Mirror ghost cells: the missing neighbour's coefficient folds into the diagonal.
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(5 * n);
    auto add_axis = [&](std::size_t c, int idx, int len, std::size_t stride, double h,
                        double beta) {
        const double diff = cfg.D / (h * h);
        const double conv = cfg.D * beta / h;
        const double left = diff - conv, right = diff + conv;
        trip.emplace_back(c, c, -2.0 * diff);
        trip.emplace_back(c, idx > 0 ? c - stride : c, left);
        trip.emplace_back(c, idx + 1 < len ? c + stride : c, right);
    };
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const std::size_t c = i + static_cast<std::size_t>(nx) * j;
            add_axis(c, i, nx, 1, grid.dx(), beta_x_[c]);
            if (grid.dim == 2) add_axis(c, j, ny, nx, grid.dy(), beta_y_[c]);
        }
    }
    tr.L.resize(n, n);
    tr.L.setFromTriplets(trip.begin(), trip.end());
    tr.Lt = tr.L.transpose();
    if (!tr.implicit) return;
    SpMat A(n, n);
    A.setIdentity();
    A -= dt_ * tr.L;
    if (grid.dim == 1) {
        tr.tri = true;
        std::vector<double> sub(n, 0.0), diag(n, 0.0), sup(n, 0.0);
        for (int k = 0; k < A.outerSize(); ++k) {
            for (SpMat::InnerIterator it(A, k); it; ++it) {
                const auto r = static_cast<std::size_t>(it.row()), col = static_cast<std::size_t>(it.col());
                if (col == r) diag[r] = it.value();
                else if (col + 1 == r) sub[r] = it.value();
                else sup[r] = it.value();
            }
        }
        // A^T has sub'[i] = sup[i-1] and sup'[i] = sub[i+1].
        std::vector<double> sub_t(n, 0.0), sup_t(n, 0.0);
        for (std::size_t i = 1; i < n; ++i) sub_t[i] = sup[i - 1];
        for (std::size_t i = 0; i + 1 < n; ++i) sup_t[i] = sub[i + 1];
        tr.fwd = Tridiagonal(sub, diag, sup);
        tr.adj = Tridiagonal(sub_t, diag, sup_t);
    } else {
        A.makeCompressed();
        tr.lu.compute(A);
        SpMat At = A.transpose();
        At.makeCompressed();
        tr.lu_t.compute(At);
        if (tr.lu.info() != Eigen::Success || tr.lu_t.info() != Eigen::Success) {
            throw SolverError("sparse LU factorization failed");
        }
    }
}

PdeSolver::~PdeSolver() = default;

double PdeSolver::reaction_rate(std::size_t c, double p) const {
    double r = cfg_.reaction ? kernel_.jet(p).f : 0.0;
    if (cfg_.k_coupling && cfg_.D > 0.0) r -= cfg_.D * kappa_[c] * kernel_.psi(p, cfg_.psi);
    return r;
}

double PdeSolver::reaction_slope(std::size_t c, double p) const {
    double r = cfg_.reaction ? kernel_.jet(p).df : 0.0;
    if (cfg_.k_coupling && cfg_.D > 0.0) r -= cfg_.D * kappa_[c] * kernel_.psi_prime(p, cfg_.psi);
    return r;
}

void PdeSolver::reaction_step(std::vector<double>& p) const {
    if (!cfg_.reaction && !(cfg_.k_coupling && cfg_.D > 0.0)) return;
    const double h = dt_;
    for (std::size_t c = 0; c < p.size(); ++c) {
        const double x = p[c];
        const double k1 = reaction_rate(c, x);
        const double k2 = reaction_rate(c, x + 0.5 * h * k1);
        const double k3 = reaction_rate(c, x + 0.5 * h * k2);
        const double k4 = reaction_rate(c, x + h * k3);
        p[c] = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
}

PdeRun PdeSolver::run(std::span<const double> p0, std::span<const double> snapshot_times) const {
    if (p0.size() != grid_.size()) throw DomainError("p0 does not match grid");
    for (double v : p0) {
        if (!(v >= 0.0 && v <= 1.0)) throw DomainError("p0 must lie in [0,1]");
    }
    PdeRun out;
    out.p0.assign(p0.begin(), p0.end());
    out.steps = steps_;
    std::vector<int> snap_step(snapshot_times.size());
    for (std::size_t k = 0; k < snapshot_times.size(); ++k) {
        const double t = snapshot_times[k];
        if (!(t >= 0.0 && t <= T_ + 1e-12)) throw DomainError("snapshot outside [0,T]");
        snap_step[k] = static_cast<int>(std::lround(t / dt_));
    }
    out.times.assign(snapshot_times.begin(), snapshot_times.end());
    out.snapshots.resize(snapshot_times.size());
    std::vector<double> p(p0.begin(), p0.end());
    auto record = [&](int step) {
        for (std::size_t k = 0; k < snap_step.size(); ++k) {
            if (snap_step[k] == step) out.snapshots[k] = p;
        }
    };
    record(0);
    for (int s = 0; s < steps_; ++s) {
        reaction_step(p);
        transport_->apply(p, false);
        for (double v : p) {
            if (!std::isfinite(v)) throw SolverError("non-finite state at step " + std::to_string(s + 1));
            out.max_principle_violation = std::max({out.max_principle_violation, -v, v - 1.0});
        }
        record(s + 1);
    }
    double cost = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
        const double d = 1.0 - p[c];
        cost += K_.samples[c] * K_.samples[c] * d * d * grid_.measure[c];
    }
    out.cost = cost;
    out.pT = std::move(p);
    return out;
}

std::vector<double> PdeSolver::release_to_p0(std::span<const double> u0) const {
    if (u0.size() != grid_.size()) throw DomainError("u0 does not match grid");
    std::vector<double> p0(u0.size());
    for (std::size_t c = 0; c < u0.size(); ++c) p0[c] = G_inverse(u0[c] / K_.samples[c], params_);
    return p0;
}

double PdeSolver::cost_of_release(std::span<const double> u0) const {
    return run(release_to_p0(u0)).cost;
}

double PdeSolver::cost_and_gradient(std::span<const double> u0, std::vector<double>& grad) const {
    const std::vector<double> p0 = release_to_p0(u0);
    const std::size_t n = p0.size();
    if (static_cast<double>(n) * (steps_ + 1) > 2.5e7) {
        throw DomainError("adjoint trajectory storage too large; coarsen dt or the grid");
    }
    std::vector<double> traj(n * (steps_ + 1));
    std::vector<double> p = p0;
    std::copy(p.begin(), p.end(), traj.begin());
    for (int s = 0; s < steps_; ++s) {
        reaction_step(p);
        transport_->apply(p, false);
        std::copy(p.begin(), p.end(), traj.begin() + (s + 1) * n);
    }
    double cost = 0.0;
    std::vector<double> lam(n);
    for (std::size_t c = 0; c < n; ++c) {
        const double k2 = K_.samples[c] * K_.samples[c];
        const double d = 1.0 - p[c];
        if (!std::isfinite(d)) throw SolverError("non-finite state in forward sweep");
        cost += k2 * d * d * grid_.measure[c];
        lam[c] = -2.0 * k2 * d * grid_.measure[c];
    }
    const bool has_reaction = cfg_.reaction || (cfg_.k_coupling && cfg_.D > 0.0);
    const double h = dt_;
    for (int s = steps_ - 1; s >= 0; --s) {
        transport_->apply(lam, true);
        if (!has_reaction) continue;
        const double* ps = traj.data() + s * n;
        for (std::size_t c = 0; c < n; ++c) {
            const double x = ps[c];
            const double k1 = reaction_rate(c, x);
            const double x2 = x + 0.5 * h * k1;
            const double k2 = reaction_rate(c, x2);
            const double x3 = x + 0.5 * h * k2;
            const double k3 = reaction_rate(c, x3);
            const double x4 = x + h * k3;
            const double d1 = reaction_slope(c, x);
            const double d2 = reaction_slope(c, x2) * (1.0 + 0.5 * h * d1);
            const double d3 = reaction_slope(c, x3) * (1.0 + 0.5 * h * d2);
            const double d4 = reaction_slope(c, x4) * (1.0 + h * d3);
            lam[c] *= 1.0 + h / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
        }
    }
    grad.resize(n);
    for (std::size_t c = 0; c < n; ++c) grad[c] = lam[c] * kernel_.g(p0[c]) / K_.samples[c];
    return cost;
}

PdeRun simulate_pde(std::span<const double> p0, const CarryingCapacity& K, const Grid& grid,
                    double T, const PdeConfig& cfg, const BioParams& params,
                    std::span<const double> snapshot_times) {
    return PdeSolver(K, grid, T, cfg, params).run(p0, snapshot_times);
}

std::vector<double> project_capped(std::span<const double> v, std::span<const double> measure,
                                   double M, double C) {
    const std::size_t n = v.size();
    std::vector<double> u(n);
    auto fill = [&](double mu) {
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            u[c] = std::clamp(v[c] - mu * measure[c], 0.0, M);
            s += u[c] * measure[c];
        }
        return s;
    };
    if (fill(0.0) <= C) return u;
    double lo = 0.0, hi = 0.0;
    for (std::size_t c = 0; c < n; ++c) hi = std::max(hi, v[c] / measure[c]);
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (fill(mid) > C) lo = mid; else hi = mid;
    }
    fill(hi);
    return u;
}

PdeOptimum optimize_pde(const CarryingCapacity& K, const Grid& grid, const Budget& budget,
                        const PdeConfig& cfg, const BioParams& params,
                        std::span<const double> init_u0, const PdeOptions& opts) {
    budget.validate();
    if (!(budget.C < budget.M * grid.total_measure())) {
        throw DomainError("optimize_pde needs C < M |Omega|");
    }
    if (init_u0.size() != grid.size()) throw DomainError("initial release does not match grid");
    const PdeSolver solver(K, grid, budget.T, cfg, params);
    // The release cap cannot exceed what G^-1 can represent.
    double cap = budget.M;
    const double g_max = G_antideriv(kGMaxProportion, params);
    for (double k : K.samples) cap = std::min(cap, k * g_max);
    const std::size_t n = grid.size();
    auto project = [&](std::span<const double> v) {
        auto u = project_capped(v, grid.measure, cap, budget.C);
        return u;
    };
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
    };
    PdeOptimum out;
    std::vector<double> u = project(init_u0);
    std::vector<double> g;
    double J = solver.cost_and_gradient(u, g);
    out.initial_cost = J;
    ++out.evaluations;
    double gmax = 0.0;
    for (double v : g) gmax = std::max(gmax, std::abs(v));
    double alpha = gmax > 0.0 ? 0.01 * cap / gmax : 1.0;
    std::vector<double> trial(n), u_new, g_new, step(n);
    for (out.iterations = 0; out.iterations < opts.max_iter;) {
        bool accepted = false;
        double J_new = 0.0;
        for (int bt = 0; bt < 60; ++bt) {
            for (std::size_t c = 0; c < n; ++c) trial[c] = u[c] - alpha * g[c];
            u_new = project(trial);
            for (std::size_t c = 0; c < n; ++c) step[c] = u_new[c] - u[c];
            const double slope = dot(g, step);
            if (slope >= 0.0) {
                // Projected step is not a descent direction: stationary.
                out.converged = true;
                break;
            }
            J_new = solver.cost_of_release(u_new);
            ++out.evaluations;
            if (J_new <= J + opts.armijo * slope) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (out.converged) break;
        if (!accepted) {
            out.line_search_failed = true;
            break;
        }
        ++out.iterations;
        J_new = solver.cost_and_gradient(u_new, g_new);
        ++out.evaluations;
        std::vector<double> y(n);
        for (std::size_t c = 0; c < n; ++c) y[c] = g_new[c] - g[c];
        const double sy = dot(step, y);
        const double decrease = (J - J_new) / std::max(std::abs(J), 1e-300);
        u.swap(u_new);
        g.swap(g_new);
        J = J_new;
        alpha = sy > 0.0 ? dot(step, step) / sy : 2.0 * alpha;
        if (decrease < opts.rel_decrease) {
            out.converged = true;
            break;
        }
    }
    for (std::size_t c = 0; c < n; ++c) trial[c] = u[c] - g[c];
    const auto pu = project(trial);
    double res = 0.0;
    for (std::size_t c = 0; c < n; ++c) res = std::max(res, std::abs(pu[c] - u[c]));
    out.first_order_residual = res;
    out.cost = J;
    out.p0.resize(n);
    for (std::size_t c = 0; c < n; ++c) out.p0[c] = G_inverse(u[c] / K.samples[c], params);
    out.u0 = std::move(u);
    return out;
}

LimitSweep diffusion_limit_sweep(const CarryingCapacity& K, const Grid& grid, const Budget& budget,
                                 const BioParams& params, std::span<const double> D_list,
                                 const PdeConfig& base, bool reoptimize, int threads,
                                 const PdeOptions& opts) {
    LimitSweep out;
    const Plan ref = solve(K, grid, budget, params);
    out.reference_cost = ref.cost;
    out.reference_u0 = ref.u0;
    out.rows.resize(D_list.size());
    if (D_list.empty()) return out;
    auto work = [&](std::size_t k) {
        PdeConfig cfg = base;
        cfg.D = D_list[k];
        LimitSweepRow& row = out.rows[k];
        row.D = cfg.D;
        const PdeSolver solver(K, grid, budget.T, cfg, params);
        row.cost_of_reference = solver.cost_of_release(ref.u0);
        row.reoptimized_cost = row.cost_of_reference;
        row.u0 = ref.u0;
        if (!reoptimize) return;
        const PdeOptimum opt = optimize_pde(K, grid, budget, cfg, params, ref.u0, opts);
        row.reoptimized_cost = opt.cost;
        row.iterations = opt.iterations;
        double l1 = 0.0;
        for (std::size_t c = 0; c < grid.size(); ++c) {
            l1 += std::abs(opt.u0[c] - ref.u0[c]) * grid.measure[c];
        }
        row.l1_distance = l1;
        row.u0 = opt.u0;
    };
    const std::size_t n_threads =
        std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, D_list.size());
    if (n_threads <= 1) {
        for (std::size_t k = 0; k < D_list.size(); ++k) work(k);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n_threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t k; (k = next++) < D_list.size();) work(k);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

void write_trajectory_csv(std::ostream& os, const PdeRun& run) {
    os << "t,cell_index,p\n";
    for (std::size_t k = 0; k < run.times.size(); ++k) {
        for (std::size_t c = 0; c < run.snapshots[k].size(); ++c) {
            os << fmt_double(run.times[k]) << ',' << c << ',' << fmt_double(run.snapshots[k][c])
               << '\n';
        }
    }
}

}  // namespace wolb
