#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "kdm/checkerboard.hpp"
#include "kdm/errors.hpp"
#include "kdm/pairs.hpp"

namespace kdm {

// DBSCAN-style outlier detection. A point is core when it has >= min_pts
// neighbors (itself excluded) within eps; an outlier is a non-core point with
// no core point within eps. Status is permutation-invariant.
struct OutlierReport {
    double eps = 0.15;
    int min_pts = 4;
    std::vector<uint8_t> outlier_mask;  // 1 = outlier, aligned with the input
    size_t outlier_count = 0;
};

namespace detail {

struct EpsGrid {
    double eps;
    std::unordered_map<uint64_t, std::vector<uint32_t>> cells;

    static uint64_t key(int64_t ix, int64_t iy) {
        return (static_cast<uint64_t>(ix) << 32) ^ (static_cast<uint64_t>(iy) & 0xFFFFFFFFULL);
    }

    EpsGrid(const std::vector<Point>& pts, double eps_) : eps(eps_) {
        for (size_t i = 0; i < pts.size(); ++i)
            cells[key(cell_x(pts[i]), cell_y(pts[i]))].push_back(static_cast<uint32_t>(i));
    }

    int64_t cell_x(const Point& p) const { return static_cast<int64_t>(std::floor(p[0] / eps)); }
    int64_t cell_y(const Point& p) const { return static_cast<int64_t>(std::floor(p[1] / eps)); }

    template <typename F>
    void for_neighbors(const std::vector<Point>& pts, size_t i, F&& f) const {
        const int64_t cx = cell_x(pts[i]), cy = cell_y(pts[i]);
        const double eps_sq = eps * eps;
        for (int64_t dx = -1; dx <= 1; ++dx) {
            for (int64_t dy = -1; dy <= 1; ++dy) {
                const auto it = cells.find(key(cx + dx, cy + dy));
                if (it == cells.end()) continue;
                for (uint32_t j : it->second) {
                    if (j == i) continue;
                    const double ddx = pts[i][0] - pts[j][0];
                    const double ddy = pts[i][1] - pts[j][1];
                    if (ddx * ddx + ddy * ddy <= eps_sq) f(j);
                }
            }
        }
    }
};

}  // namespace detail

inline OutlierReport detect_outliers(const std::vector<Point>& pts, double eps = 0.15,
                                     int min_pts = 4) {
    if (!(eps > 0.0)) throw ConfigError("detect_outliers: eps must be > 0");
    if (min_pts < 1) throw ConfigError("detect_outliers: min_pts must be >= 1");
    OutlierReport rep;
    rep.eps = eps;
    rep.min_pts = min_pts;
    rep.outlier_mask.assign(pts.size(), 0);
    if (pts.empty()) return rep;
    const detail::EpsGrid grid(pts, eps);
    std::vector<uint8_t> core(pts.size(), 0);
    for (size_t i = 0; i < pts.size(); ++i) {
        int count = 0;
        grid.for_neighbors(pts, i, [&](uint32_t) { ++count; });
        core[i] = count >= min_pts ? 1 : 0;
    }
    for (size_t i = 0; i < pts.size(); ++i) {
        if (core[i]) continue;
        bool near_core = false;
        grid.for_neighbors(pts, i, [&](uint32_t j) { near_core = near_core || core[j]; });
        if (!near_core) {
            rep.outlier_mask[i] = 1;
            ++rep.outlier_count;
        }
    }
    return rep;
}

// Two-group comparison of outlier vs inlier pairs: prior-norm of the
// preimage (normalized by the prior std) and boundary distance of the
// output.
struct ProvenanceStats {
    bool empty = false;  // set when there are no outliers
    size_t n_out = 0, n_in = 0;
    double out_mean_norm = 0.0, in_mean_norm = 0.0;
    double out_median_norm = 0.0, in_median_norm = 0.0;
    double out_mean_bdist = 0.0, in_mean_bdist = 0.0;
};

namespace detail {
inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const size_t m = v.size() / 2;
    return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}
}  // namespace detail

inline ProvenanceStats outlier_provenance(const PairSet& set, const OutlierReport& rep,
                                          double prior_std) {
    if (rep.outlier_mask.size() != set.pairs.size())
        throw ShapeError("outlier_provenance: mask not aligned with pairs");
    if (!(prior_std > 0.0)) throw ConfigError("outlier_provenance: prior_std must be > 0");
    ProvenanceStats st;
    std::vector<double> out_norms, in_norms;
    for (size_t i = 0; i < set.pairs.size(); ++i) {
        const NoisePair& p = set.pairs[i];
        const double norm = norm2(p.x_t) / prior_std;
        const double bdist = boundary_distance(set.meta.data_spec, p.x_0);
        if (rep.outlier_mask[i]) {
            ++st.n_out;
            st.out_mean_norm += norm;
            st.out_mean_bdist += bdist;
            out_norms.push_back(norm);
        } else {
            ++st.n_in;
            st.in_mean_norm += norm;
            st.in_mean_bdist += bdist;
            in_norms.push_back(norm);
        }
    }
    if (st.n_out == 0) {
        st.empty = true;
        return st;
    }
    st.out_mean_norm /= static_cast<double>(st.n_out);
    st.out_mean_bdist /= static_cast<double>(st.n_out);
    if (st.n_in > 0) {
        st.in_mean_norm /= static_cast<double>(st.n_in);
        st.in_mean_bdist /= static_cast<double>(st.n_in);
    }
    st.out_median_norm = detail::median_of(std::move(out_norms));
    st.in_median_norm = detail::median_of(std::move(in_norms));
    return st;
}

}  // namespace kdm
