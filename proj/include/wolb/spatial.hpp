#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "wolb/model_core.hpp"

namespace wolb {

/// Uniform cell-centered grid on [0,Lx] or [0,Lx]x[0,Ly]. Cells are stored
/// row-major with x fastest: index = i + nx*j.
struct Grid {
    int dim = 1;
    std::array<double, 2> extents{1.0, 1.0};
    int nx = 0;
    int ny = 1;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> measure;

    std::size_t size() const { return measure.size(); }
    double dx() const { return extents[0] / nx; }
    double dy() const { return dim == 2 ? extents[1] / ny : 1.0; }
    double total_measure() const;
};

Grid build_grid(int dim, std::array<double, 2> extents, int resolution);
Grid build_grid_2d(std::array<double, 2> extents, int nx, int ny);

enum class KKind { sinusoidal, two_patch, arctan, separable_2d, table, constant };

const char* to_string(KKind kind);
KKind parse_kind(const std::string& name);

struct CarryingCapacity {
    KKind kind = KKind::constant;
    double K0 = 100.0;
    std::vector<double> samples;

    double min() const;
    double max() const;
    bool is_constant(double tol = 1e-12) const;
};

/// Samples a builtin landscape at the cell centers. The two-patch landscape
/// needs an even resolution so that the interface is a cell boundary.
CarryingCapacity eval_K(KKind kind, double K0, const Grid& grid);
/// Per-cell values given explicitly, validated positive.
CarryingCapacity K_from_values(std::vector<double> values, const Grid& grid);
/// Reads `cell_index,K` rows (header required) covering every cell once.
CarryingCapacity load_K_csv(const std::string& path, const Grid& grid);

enum class FieldLabel { p0, u0, pT, phi, chi };

struct Field {
    FieldLabel label = FieldLabel::p0;
    std::vector<double> values;

    /// Length must match the grid; p- and chi-labeled values lie in [0,1],
    /// u-labeled values are nonnegative.
    void validate(const Grid& grid) const;
};

double integrate(std::span<const double> values, const Grid& grid);
double integrate(const Field& field, const Grid& grid);
/// sum K G(p0) |cell|, the number of released individuals.
double budget_integral(std::span<const double> p0, const CarryingCapacity& K, const Grid& grid,
                       const BioParams& params);

}  // namespace wolb
