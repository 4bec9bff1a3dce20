#include "wolb/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace wolb {

double Grid::total_measure() const {
    return std::accumulate(measure.begin(), measure.end(), 0.0);
}

Grid build_grid_2d(std::array<double, 2> extents, int nx, int ny) {
    if (!(extents[0] > 0.0) || !(extents[1] > 0.0)) throw DomainError("grid extents must be positive");
    if (nx < 2 || ny < 2) throw DomainError("grid resolution must be at least 2");
    Grid g;
    g.dim = 2;
    g.extents = extents;
    g.nx = nx;
    g.ny = ny;
    const double hx = extents[0] / nx, hy = extents[1] / ny;
    g.x.resize(static_cast<std::size_t>(nx) * ny);
    g.y.resize(g.x.size());
    g.measure.assign(g.x.size(), hx * hy);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            g.x[i + nx * j] = (i + 0.5) * hx;
            g.y[i + nx * j] = (j + 0.5) * hy;
        }
    }
    return g;
}

Grid build_grid(int dim, std::array<double, 2> extents, int resolution) {
    if (dim == 2) return build_grid_2d(extents, resolution, resolution);
    if (dim != 1) throw DomainError("grid dimension must be 1 or 2");
    if (!(extents[0] > 0.0)) throw DomainError("grid extents must be positive");
    if (resolution < 2) throw DomainError("grid resolution must be at least 2");
    Grid g;
    g.dim = 1;
    g.extents = {extents[0], 1.0};
    g.nx = resolution;
    g.ny = 1;
    const double h = extents[0] / resolution;
    g.x.resize(resolution);
    g.y.assign(resolution, 0.0);
    g.measure.assign(resolution, h);
    for (int i = 0; i < resolution; ++i) g.x[i] = (i + 0.5) * h;
    return g;
}

const char* to_string(KKind kind) {
    switch (kind) {
        case KKind::sinusoidal: return "sinusoidal";
        case KKind::two_patch: return "two_patch";
        case KKind::arctan: return "arctan";
        case KKind::separable_2d: return "separable_2d";
        case KKind::table: return "table";
        case KKind::constant: return "constant";
    }
    return "?";
}

KKind parse_kind(const std::string& name) {
    if (name == "sinusoidal" || name == "K_S") return KKind::sinusoidal;
    if (name == "two_patch" || name == "K_P") return KKind::two_patch;
    if (name == "arctan" || name == "K_A") return KKind::arctan;
    if (name == "separable_2d" || name == "K_2D") return KKind::separable_2d;
    if (name == "table") return KKind::table;
    if (name == "constant") return KKind::constant;
    throw ConfigError("unknown carrying capacity kind '" + name + "'");
}

double CarryingCapacity::min() const { return *std::min_element(samples.begin(), samples.end()); }
double CarryingCapacity::max() const { return *std::max_element(samples.begin(), samples.end()); }

bool CarryingCapacity::is_constant(double tol) const {
    return max() - min() <= tol * std::max(1.0, max());
}

CarryingCapacity eval_K(KKind kind, double K0, const Grid& grid) {
    if (!(K0 > 0.0)) throw DomainError("K0 must be positive");
    CarryingCapacity K;
    K.kind = kind;
    K.K0 = K0;
    K.samples.resize(grid.size());
    const double pi = std::numbers::pi;
    const double Lx = grid.extents[0];
    const auto need_1d = [&] {
        if (grid.dim != 1) throw DomainError(std::string(to_string(kind)) + " landscape is one-dimensional");
    };
    switch (kind) {
        case KKind::sinusoidal:
            need_1d();
            for (std::size_t c = 0; c < grid.size(); ++c)
                K.samples[c] = K0 * (1.0 - 0.5 * std::cos(2.0 * pi * grid.x[c] / Lx));
            break;
        case KKind::two_patch:
            need_1d();
            if (grid.nx % 2 != 0) throw DomainError("two-patch landscape needs an even resolution");
            for (std::size_t c = 0; c < grid.size(); ++c)
                K.samples[c] = grid.x[c] <= 0.5 * Lx ? 1.5 * K0 : 0.5 * K0;
            break;
        case KKind::arctan:
            need_1d();
            for (std::size_t c = 0; c < grid.size(); ++c)
                K.samples[c] = K0 * (1.0 + std::atan(-10.0 * (grid.x[c] - 0.5 * Lx)) / pi);
            break;
        case KKind::separable_2d:
            if (grid.dim != 2) throw DomainError("separable_2d landscape is two-dimensional");
            for (std::size_t c = 0; c < grid.size(); ++c)
                K.samples[c] = K0 * (1.0 - std::cos(2.0 * pi * grid.x[c] / Lx) / 6.0 -
                                     std::cos(2.0 * pi * grid.y[c] / grid.extents[1]) / 3.0);
            break;
        case KKind::constant:
            std::fill(K.samples.begin(), K.samples.end(), K0);
            break;
        case KKind::table:
            throw DomainError("table landscapes are built with K_from_values or load_K_csv");
    }
    return K;
}

CarryingCapacity K_from_values(std::vector<double> values, const Grid& grid) {
    if (values.size() != grid.size()) {
        throw DomainError("carrying capacity table has " + std::to_string(values.size()) +
                          " values for " + std::to_string(grid.size()) + " cells");
    }
    for (double v : values) {
        if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("carrying capacity must be positive");
    }
    CarryingCapacity K;
    K.kind = KKind::table;
    K.samples = std::move(values);
    K.K0 = integrate(K.samples, grid) / grid.total_measure();
    return K;
}

CarryingCapacity load_K_csv(const std::string& path, const Grid& grid) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open carrying capacity file " + path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path + ": empty file");
    line.erase(std::remove_if(line.begin(), line.end(), ::isspace), line.end());
    if (line != "cell_index,K") throw ConfigError(path + ": expected header 'cell_index,K'");
    std::vector<double> values(grid.size(), std::nan(""));
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream row(line);
        std::string a, b;
        if (!std::getline(row, a, ',') || !std::getline(row, b)) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected two columns");
        }
        std::size_t idx;
        double k;
        try {
            idx = std::stoul(a);
            k = std::stod(b);
        } catch (const std::exception&) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": not a number");
        }
        if (idx >= values.size()) throw ConfigError(path + ": cell index out of range");
        if (!std::isnan(values[idx])) throw ConfigError(path + ": duplicate cell index");
        if (!(k > 0.0)) throw ConfigError(path + ":" + std::to_string(lineno) + ": K must be > 0");
        values[idx] = k;
    }
    for (double v : values) {
        if (std::isnan(v)) throw ConfigError(path + ": not every cell has a K value");
    }
    return K_from_values(std::move(values), grid);
}

void Field::validate(const Grid& grid) const {
    if (values.size() != grid.size()) throw DomainError("field length does not match grid");
    for (double v : values) {
        if (!std::isfinite(v)) throw DomainError("field holds a non-finite value");
        switch (label) {
            case FieldLabel::p0:
            case FieldLabel::pT:
            case FieldLabel::chi:
                if (v < -1e-12 || v > 1.0 + 1e-12) throw DomainError("field value outside [0,1]");
                break;
            case FieldLabel::u0:
                if (v < -1e-12) throw DomainError("release density must be nonnegative");
                break;
            case FieldLabel::phi:
                break;
        }
    }
}

double integrate(std::span<const double> values, const Grid& grid) {
    if (values.size() != grid.size()) throw DomainError("field length does not match grid");
    double s = 0.0;
    for (std::size_t c = 0; c < values.size(); ++c) s += values[c] * grid.measure[c];
    return s;
}

double integrate(const Field& field, const Grid& grid) { return integrate(field.values, grid); }

double budget_integral(std::span<const double> p0, const CarryingCapacity& K, const Grid& grid,
                       const BioParams& params) {
    if (p0.size() != grid.size() || K.samples.size() != grid.size()) {
        throw DomainError("budget_integral: field length does not match grid");
    }
    double s = 0.0;
    for (std::size_t c = 0; c < p0.size(); ++c) {
        if (p0[c] == 0.0) continue;
        s += K.samples[c] * G_antideriv(p0[c], params) * grid.measure[c];
    }
    return s;
}

}  // namespace wolb
