#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "kdm/checkerboard.hpp"
#include "kdm/errors.hpp"
#include "kdm/matrix.hpp"
#include "kdm/pairs.hpp"
#include "kdm/rng.hpp"

namespace kdm {

struct EnergyDistanceOptions {
    size_t max_points = 5000;  // subsample cap (seed-deterministic)
    uint64_t seed = 1234;
};

namespace detail {

// Deterministic ordering so energy_distance(a, b) and (b, a) execute the
// exact same arithmetic.
inline bool point_set_less(const std::vector<Point>& a, const std::vector<Point>& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i][0] != b[i][0]) return a[i][0] < b[i][0];
        if (a[i][1] != b[i][1]) return a[i][1] < b[i][1];
    }
    return false;
}

inline std::vector<Point> subsample(const std::vector<Point>& pts, size_t cap, Rng rng) {
    if (pts.size() <= cap) return pts;
    // Partial Fisher-Yates over an index vector.
    std::vector<size_t> idx(pts.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<Point> out;
    out.reserve(cap);
    for (size_t i = 0; i < cap; ++i) {
        const size_t j = i + static_cast<size_t>(rng.uniform_int(idx.size() - i));
        std::swap(idx[i], idx[j]);
        out.push_back(pts[idx[i]]);
    }
    return out;
}

inline double mean_cross_distance(const std::vector<Point>& p, const std::vector<Point>& q) {
    double s = 0.0;
    for (const Point& a : p) {
        double row = 0.0;
        for (const Point& b : q) row += dist2(a, b);
        s += row;
    }
    return s / (static_cast<double>(p.size()) * static_cast<double>(q.size()));
}

}  // namespace detail

// 2 E||a-b|| - E||a-a'|| - E||b-b'|| with exact pairwise V-statistics.
// Symmetric by construction and exactly zero on identical multisets.
inline double energy_distance(const std::vector<Point>& a, const std::vector<Point>& b,
                              const EnergyDistanceOptions& opts = {}) {
    if (a.empty() || b.empty()) throw ConfigError("energy_distance: empty input");
    const bool swap = detail::point_set_less(b, a);
    const std::vector<Point>& first = swap ? b : a;
    const std::vector<Point>& second = swap ? a : b;
    Rng base(opts.seed);
    const std::vector<Point> p = detail::subsample(first, opts.max_points, base.substream(0));
    const std::vector<Point> q = detail::subsample(second, opts.max_points, base.substream(1));
    const double cross = detail::mean_cross_distance(p, q);
    const double within_p = detail::mean_cross_distance(p, p);
    const double within_q = detail::mean_cross_distance(q, q);
    return 2.0 * cross - within_p - within_q;
}

// Fraction of each noise point's k nearest noise-space neighbors that map to
// the same checkerboard cell.
struct StructureReport {
    int k = 0;
    double purity = 0.0;
    double chance = 0.0;
    size_t points_used = 0;
};

inline StructureReport knn_purity_points(const std::vector<Point>& pts,
                                         const std::vector<int>& labels, int k, int n_classes) {
    if (pts.size() != labels.size()) throw ShapeError("knn_purity: points/labels mismatch");
    if (k < 1) throw ConfigError("knn_purity: k must be >= 1");
    if (pts.size() < static_cast<size_t>(k) + 1)
        throw ConfigError("knn_purity: need at least k+1 points");
    const size_t n = pts.size();
    std::vector<double> nd(static_cast<size_t>(k));
    std::vector<size_t> ni(static_cast<size_t>(k));
    double purity_sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        int filled = 0;
        for (size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dx = pts[i][0] - pts[j][0];
            const double dy = pts[i][1] - pts[j][1];
            const double d = dx * dx + dy * dy;
            if (filled == k && d >= nd[static_cast<size_t>(k) - 1]) continue;
            // Insertion into the running top-k, ties broken by index.
            int pos = std::min(filled, k - 1);
            while (pos > 0 && (nd[pos - 1] > d || (nd[pos - 1] == d && ni[pos - 1] > j))) {
                if (pos < k) {
                    nd[pos] = nd[pos - 1];
                    ni[pos] = ni[pos - 1];
                }
                --pos;
            }
            nd[pos] = d;
            ni[pos] = j;
            if (filled < k) ++filled;
        }
        int same = 0;
        for (int t = 0; t < k; ++t)
            if (labels[ni[t]] == labels[i]) ++same;
        purity_sum += static_cast<double>(same) / k;
    }
    StructureReport rep;
    rep.k = k;
    rep.purity = purity_sum / static_cast<double>(n);
    rep.chance = 1.0 / n_classes;
    rep.points_used = n;
    return rep;
}

// Labels come from cell_of on each pair's x_0; pairs landing outside are
// excluded.
inline StructureReport knn_purity(const PairSet& set, int k) {
    std::vector<Point> pts;
    std::vector<int> labels;
    for (const auto& p : set.pairs) {
        const int cell = cell_of(set.meta.data_spec, p.x_0);
        if (cell == kOutsideCell) continue;
        pts.push_back(p.x_t);
        labels.push_back(cell);
    }
    return knn_purity_points(pts, labels, k, set.meta.data_spec.occupied_cells());
}

// Paired vs permuted-baseline MSE between two samplers on fresh noise.
struct AgreementReport {
    double paired_mse = 0.0;
    double permuted_mse = 0.0;
    size_t n = 0;
};

inline AgreementReport agreement_maps(const std::function<Matrix(const Matrix&)>& teacher_map,
                                      const std::function<Matrix(const Matrix&)>& student_map,
                                      size_t n, uint64_t seed, double prior_std) {
    if (n < 2) throw ConfigError("agreement: n must be >= 2");
    Rng rng(seed);
    Matrix xt(static_cast<int>(n), 2);
    for (auto& x : xt.data) x = prior_std * rng.gaussian();
    const Matrix a = teacher_map(xt);
    const Matrix b = student_map(xt);
    AgreementReport rep;
    rep.n = n;
    for (size_t i = 0; i < n; ++i) {
        const int ii = static_cast<int>(i);
        const double dx = a(ii, 0) - b(ii, 0), dy = a(ii, 1) - b(ii, 1);
        rep.paired_mse += (dx * dx + dy * dy) / static_cast<double>(n);
    }
    // Derangement (Sattolo) so no pair stays aligned.
    const std::vector<size_t> perm = rng.derangement(n);
    for (size_t i = 0; i < n; ++i) {
        const int ii = static_cast<int>(i);
        const int jj = static_cast<int>(perm[i]);
        const double dx = a(ii, 0) - b(jj, 0), dy = a(ii, 1) - b(jj, 1);
        rep.permuted_mse += (dx * dx + dy * dy) / static_cast<double>(n);
    }
    return rep;
}

}  // namespace kdm
