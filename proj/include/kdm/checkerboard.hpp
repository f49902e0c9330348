#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "kdm/errors.hpp"
#include "kdm/rng.hpp"

namespace kdm {

using Point = std::array<double, 2>;

inline double norm2(const Point& p) { return std::sqrt(p[0] * p[0] + p[1] * p[1]); }
inline double dist2(const Point& a, const Point& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1];
    return std::sqrt(dx * dx + dy * dy);
}

// 2D checkerboard support: a grid x grid lattice over [-extent, extent]^2,
// with cells of odd (i+j) parity occupied. Occupied cells are indexed in
// row-major order (rows = y index from the bottom).
struct CheckerboardSpec {
    int grid = 4;
    double extent = 4.0;

    void validate() const {
        if (grid < 2 || grid % 2 != 0) throw ConfigError("checkerboard grid must be even and >= 2");
        if (!(extent > 0.0)) throw ConfigError("checkerboard extent must be > 0");
    }

    double cell_side() const { return 2.0 * extent / grid; }
    int occupied_cells() const { return grid * grid / 2; }

    bool operator==(const CheckerboardSpec& o) const {
        return grid == o.grid && extent == o.extent;
    }
};

constexpr int kOutsideCell = -1;

// Occupied-cell index of a point strictly inside an occupied cell, or
// kOutsideCell for unoccupied cells, grid lines and anything beyond the
// extent.
inline int cell_of(const CheckerboardSpec& spec, const Point& p) {
    spec.validate();
    if (!std::isfinite(p[0]) || !std::isfinite(p[1])) return kOutsideCell;
    const double side = spec.cell_side();
    const double ux = (p[0] + spec.extent) / side;
    const double uy = (p[1] + spec.extent) / side;
    if (ux <= 0.0 || uy <= 0.0 || ux >= spec.grid || uy >= spec.grid) return kOutsideCell;
    const int i = static_cast<int>(std::floor(ux));
    const int j = static_cast<int>(std::floor(uy));
    if (ux == static_cast<double>(i) || uy == static_cast<double>(j)) return kOutsideCell;
    if ((i + j) % 2 != 1) return kOutsideCell;
    // Occupied columns in row j alternate starting at (j+1) mod 2, so i/2
    // counts the occupied cells before column i within the row.
    return j * (spec.grid / 2) + i / 2;
}

// Uniform samples over the union of occupied cells, with their cell labels.
struct LabeledPoints {
    std::vector<Point> points;
    std::vector<int> labels;
};

inline LabeledPoints sample_checkerboard(const CheckerboardSpec& spec, size_t n, Rng& rng) {
    spec.validate();
    LabeledPoints out;
    out.points.reserve(n);
    out.labels.reserve(n);
    const double side = spec.cell_side();
    const int half = spec.grid / 2;
    for (size_t s = 0; s < n; ++s) {
        const int idx = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(spec.occupied_cells())));
        const int j = idx / half;
        const int col_rank = idx % half;
        const int i = (j % 2 == 0 ? 1 : 0) + 2 * col_rank;
        const double x0 = -spec.extent + i * side;
        const double y0 = -spec.extent + j * side;
        out.points.push_back({x0 + side * rng.uniform(), y0 + side * rng.uniform()});
        out.labels.push_back(idx);
    }
    return out;
}

// Euclidean distance to the nearest grid line segment within the extent
// (all lines k = 0..grid in both orientations, including the border).
inline double boundary_distance(const CheckerboardSpec& spec, const Point& p) {
    spec.validate();
    const double side = spec.cell_side();
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= spec.grid; ++k) {
        const double line = -spec.extent + k * side;
        // Vertical segment x = line, y in [-extent, extent].
        {
            const double dx = p[0] - line;
            const double dy = std::max(0.0, std::fabs(p[1]) - spec.extent);
            best = std::min(best, std::sqrt(dx * dx + dy * dy));
        }
        // Horizontal segment y = line, x in [-extent, extent].
        {
            const double dy = p[1] - line;
            const double dx = std::max(0.0, std::fabs(p[0]) - spec.extent);
            best = std::min(best, std::sqrt(dx * dx + dy * dy));
        }
    }
    return best;
}

}  // namespace kdm
