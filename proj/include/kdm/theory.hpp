#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "kdm/matrix.hpp"
#include "kdm/rng.hpp"

namespace kdm {

// --- monomial lifting -------------------------------------------------------

// All multi-indices with |alpha| <= degree, ordered by total degree, then by
// descending leading exponents (so for n=2, degree=1: 1, x1, x2). Size is
// C(n + degree, degree); the constant monomial comes first.
struct MonomialBasis {
    int n = 2;
    int degree = 1;
    std::vector<std::vector<int>> exponents;

    int dim() const { return static_cast<int>(exponents.size()); }
};

namespace detail {
inline void enumerate_exponents(int pos, int remaining, std::vector<int>& current,
                                std::vector<std::vector<int>>& out) {
    if (pos == static_cast<int>(current.size()) - 1) {
        current[pos] = remaining;
        out.push_back(current);
        return;
    }
    for (int e = remaining; e >= 0; --e) {
        current[pos] = e;
        enumerate_exponents(pos + 1, remaining - e, current, out);
    }
}
}  // namespace detail

inline MonomialBasis make_monomial_basis(int n, int degree) {
    if (n < 1 || degree < 0) throw ConfigError("monomial basis: need n >= 1, degree >= 0");
    MonomialBasis b;
    b.n = n;
    b.degree = degree;
    std::vector<int> current(n, 0);
    for (int d = 0; d <= degree; ++d)
        detail::enumerate_exponents(0, d, current, b.exponents);
    return b;
}

inline std::vector<double> monomial_lift(const MonomialBasis& basis, std::span<const double> x) {
    if (static_cast<int>(x.size()) != basis.n)
        throw ShapeError("monomial_lift: state dim " + std::to_string(x.size()) + ", expected " +
                         std::to_string(basis.n));
    std::vector<double> out(basis.exponents.size());
    for (size_t k = 0; k < basis.exponents.size(); ++k) {
        double v = 1.0;
        for (int i = 0; i < basis.n; ++i)
            for (int e = 0; e < basis.exponents[k][i]; ++e) v *= x[i];
        out[k] = v;
    }
    return out;
}

inline Matrix monomial_lift_batch(const MonomialBasis& basis, const Matrix& x) {
    if (x.cols != basis.n) throw ShapeError("monomial_lift: batch width mismatch");
    Matrix out(x.rows, basis.dim());
    for (int i = 0; i < x.rows; ++i) {
        const std::vector<double> row =
            monomial_lift(basis, std::span<const double>(x.row(i), basis.n));
        for (int j = 0; j < out.cols; ++j) out(i, j) = row[j];
    }
    return out;
}

// --- EDMD fitting -----------------------------------------------------------

using BatchMapFn = std::function<Matrix(const Matrix&)>;

struct EdmdOptions {
    double ridge = 1e-10;
    double holdout_fraction = 0.2;  // residuals are reported out of sample
    double truncation_radius = 0.0; // > 0 restricts draws to the ball B_R
};

struct EdmdReport {
    int degree = 0;
    int lifted_dim = 0;
    double full_residual = 0.0;   // E||xi(Phi x) - C xi(x)||^2 / E||xi(Phi x)||^2
    double state_residual = 0.0;  // E||Phi x - K xi(x)||^2
    Matrix c;                     // d x d
    Matrix k;                     // n x d
    bool undersampled = false;
};

inline Matrix draw_gaussian_batch(int n_samples, int dim, Rng& rng, double std = 1.0,
                                  double truncation_radius = 0.0) {
    Matrix x(n_samples, dim);
    for (int i = 0; i < n_samples; ++i) {
        for (;;) {
            double norm_sq = 0.0;
            for (int j = 0; j < dim; ++j) {
                x(i, j) = std * rng.gaussian();
                norm_sq += x(i, j) * x(i, j);
            }
            if (truncation_radius <= 0.0 || norm_sq <= truncation_radius * truncation_radius)
                break;
        }
    }
    return x;
}

// Core fit over a precomputed snapshot set (x, Phi(x)).
inline EdmdReport edmd_fit_samples(const Matrix& x, const Matrix& phi_x,
                                   const MonomialBasis& basis, const EdmdOptions& opts = {}) {
    if (x.rows != phi_x.rows || x.cols != basis.n || phi_x.cols != basis.n)
        throw ShapeError("edmd_fit: sample shapes inconsistent with basis");
    const int total = x.rows;
    const int holdout = std::max(1, static_cast<int>(opts.holdout_fraction * total));
    const int fit = total - holdout;
    if (fit < 1) throw ConfigError("edmd_fit: no fitting samples left after holdout");

    const Matrix xi = monomial_lift_batch(basis, x);
    const Matrix xi_next = monomial_lift_batch(basis, phi_x);

    auto top_rows = [](const Matrix& m, int r) {
        Matrix out(r, m.cols);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < m.cols; ++j) out(i, j) = m(i, j);
        return out;
    };
    auto bottom_rows = [](const Matrix& m, int r) {
        Matrix out(r, m.cols);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < m.cols; ++j) out(i, j) = m(m.rows - r + i, j);
        return out;
    };

    const Matrix xi_fit = top_rows(xi, fit);
    EdmdReport rep;
    rep.degree = basis.degree;
    rep.lifted_dim = basis.dim();
    rep.undersampled = fit < basis.dim();
    rep.c = transpose(lstsq(xi_fit, top_rows(xi_next, fit), opts.ridge));
    rep.k = transpose(lstsq(xi_fit, top_rows(phi_x, fit), opts.ridge));

    const Matrix xi_ho = bottom_rows(xi, holdout);
    const Matrix xi_next_ho = bottom_rows(xi_next, holdout);
    const Matrix state_ho = bottom_rows(phi_x, holdout);
    Matrix pred_full = matmul_nt(xi_ho, rep.c);
    add_inplace(pred_full, xi_next_ho, -1.0);
    const double denom = frobenius_sq(xi_next_ho);
    rep.full_residual = denom > 0.0 ? frobenius_sq(pred_full) / denom : 0.0;
    Matrix pred_state = matmul_nt(xi_ho, rep.k);
    add_inplace(pred_state, state_ho, -1.0);
    rep.state_residual = frobenius_sq(pred_state) / holdout;
    return rep;
}

// Draws x ~ N(0, I_n) (optionally truncated to B_R), fits the lifted operator
// C and the state readout K by least squares, reports held-out residuals.
inline EdmdReport edmd_fit(const BatchMapFn& phi, const MonomialBasis& basis, int n_samples,
                           Rng& rng, const EdmdOptions& opts = {}) {
    const Matrix x = draw_gaussian_batch(n_samples, basis.n, rng, 1.0, opts.truncation_radius);
    return edmd_fit_samples(x, phi(x), basis, opts);
}

// Degree sweep over one shared sample set (feature spaces are nested, so the
// fitted state residual cannot worsen with degree).
inline std::vector<EdmdReport> edmd_sweep(const BatchMapFn& phi, int n, int max_degree,
                                          int n_samples, Rng& rng,
                                          const EdmdOptions& opts = {}) {
    const Matrix x = draw_gaussian_batch(n_samples, n, rng, 1.0, opts.truncation_radius);
    const Matrix phi_x = phi(x);
    std::vector<EdmdReport> out;
    for (int d = 1; d <= max_degree; ++d)
        out.push_back(edmd_fit_samples(x, phi_x, make_monomial_basis(n, d), opts));
    return out;
}

// --- operator norm ----------------------------------------------------------

struct OperatorNorm {
    double value = 0.0;
    bool converged = false;
    int iterations = 0;
};

// Spectral norm by power iteration on C^T C; tolerance 1e-10 on successive
// estimates, at most 10k iterations. Rayleigh estimates approach the top
// singular value from below.
inline OperatorNorm estimate_operator_norm(const Matrix& c, uint64_t seed = 0) {
    OperatorNorm result;
    if (c.rows == 0 || c.cols == 0) {
        result.converged = true;
        return result;
    }
    Rng rng(seed);
    Matrix v(c.cols, 1);
    for (auto& x : v.data) x = rng.gaussian();
    {
        const double vn = std::sqrt(frobenius_sq(v));
        if (vn == 0.0) v(0, 0) = 1.0;
        else scale_inplace(v, 1.0 / vn);
    }
    double prev = -1.0;
    for (int it = 1; it <= 10000; ++it) {
        const Matrix w = matmul(c, v);  // v stays unit, so sigma = ||C v||
        const double sigma = std::sqrt(frobenius_sq(w));
        result.value = sigma;
        result.iterations = it;
        if (sigma == 0.0 || std::fabs(sigma - prev) <= 1e-10 * std::max(1.0, sigma)) {
            result.converged = true;
            return result;
        }
        prev = sigma;
        Matrix u = matmul_tn(c, w);  // C^T C v
        const double un = std::sqrt(frobenius_sq(u));
        if (un == 0.0) {
            result.converged = true;
            return result;
        }
        scale_inplace(u, 1.0 / un);
        v = std::move(u);
    }
    return result;  // non-convergence: value holds the last iterate
}

// --- Theorem 2 verifier -----------------------------------------------------

struct ProximityOptions {
    double prior_std = 1.0;       // scale of the base-point distribution
    int edmd_samples = 4000;      // snapshots for the C_T fit
    double ridge = 1e-10;
    size_t eval_pairs = 0;        // 0 = same as the calibration count
    bool calibrate_on_eval = false;  // tautological self-test mode
    size_t chunk = 4096;
};

struct ProximityReport {
    size_t pair_count = 0;  // evaluation pairs actually scored
    double lipschitz_hat = 0.0;
    double operator_norm = 0.0;
    bool norm_converged = false;
    double violation_rate = 0.0;
    double worst_ratio = 0.0;  // max lhs / rhs over evaluation pairs
    size_t degenerate_skipped = 0;
};

namespace detail {

struct PairStats {
    std::vector<double> lhs;        // ||Phi(x1) - Phi(x2)||
    std::vector<double> dx;         // ||x1 - x2||
    std::vector<double> dlift;      // ||xi(x1) - xi(x2)||
    size_t degenerate = 0;
};

inline PairStats proximity_pairs(const BatchMapFn& phi, const MonomialBasis& basis,
                                 size_t n_pairs, double radius, Rng& rng,
                                 const ProximityOptions& opts) {
    PairStats stats;
    for (size_t start = 0; start < n_pairs; start += opts.chunk) {
        const size_t count = std::min(opts.chunk, n_pairs - start);
        Matrix x1(static_cast<int>(count), basis.n), x2(static_cast<int>(count), basis.n);
        for (size_t i = 0; i < count; ++i) {
            for (int j = 0; j < basis.n; ++j)
                x1(static_cast<int>(i), j) = opts.prior_std * rng.gaussian();
            // Uniform offset in the radius ball (2D: r = R sqrt(u)).
            double dir_sq = 0.0;
            std::vector<double> dir(basis.n);
            for (int j = 0; j < basis.n; ++j) {
                dir[j] = rng.gaussian();
                dir_sq += dir[j] * dir[j];
            }
            if (dir_sq == 0.0) {
                dir[0] = 1.0;
                dir_sq = 1.0;
            }
            const double r =
                radius * std::pow(rng.uniform_open(), 1.0 / basis.n) / std::sqrt(dir_sq);
            for (int j = 0; j < basis.n; ++j)
                x2(static_cast<int>(i), j) = x1(static_cast<int>(i), j) + r * dir[j];
        }
        const Matrix y1 = phi(x1), y2 = phi(x2);
        const Matrix l1 = monomial_lift_batch(basis, x1), l2 = monomial_lift_batch(basis, x2);
        for (size_t i = 0; i < count; ++i) {
            const int ii = static_cast<int>(i);
            double dxs = 0.0, lhss = 0.0, dls = 0.0;
            for (int j = 0; j < basis.n; ++j) {
                const double dxj = x1(ii, j) - x2(ii, j);
                dxs += dxj * dxj;
                const double dyj = y1(ii, j) - y2(ii, j);
                lhss += dyj * dyj;
            }
            for (int j = 0; j < basis.dim(); ++j) {
                const double dlj = l1(ii, j) - l2(ii, j);
                dls += dlj * dlj;
            }
            if (dxs == 0.0 || dls == 0.0) {
                ++stats.degenerate;
                continue;
            }
            stats.lhs.push_back(std::sqrt(lhss));
            stats.dx.push_back(std::sqrt(dxs));
            stats.dlift.push_back(std::sqrt(dls));
        }
    }
    return stats;
}

}  // namespace detail

// Verifies ||x0_1 - x0_2|| <= L_hat * ||C_T|| * ||xi(xT_1) - xi(xT_2)|| on
// close pairs. L_hat is the max output/input distance ratio over a
// calibration pair set; C_T comes from an EDMD fit of the same map on the
// same base distribution. Pass the degree-1 basis for the xi = id form.
inline ProximityReport verify_semantic_proximity(const BatchMapFn& phi,
                                                 const MonomialBasis& basis, size_t n_pairs,
                                                 double radius, Rng& rng,
                                                 const ProximityOptions& opts = {}) {
    if (!(radius > 0.0)) throw ConfigError("verify_semantic_proximity: radius must be > 0");
    if (n_pairs < 1) throw ConfigError("verify_semantic_proximity: n_pairs must be >= 1");
    ProximityReport rep;

    EdmdOptions eopts;
    eopts.ridge = opts.ridge;
    const Matrix snap =
        draw_gaussian_batch(opts.edmd_samples, basis.n, rng, opts.prior_std, 0.0);
    const EdmdReport fit = edmd_fit_samples(snap, phi(snap), basis, eopts);
    const OperatorNorm norm = estimate_operator_norm(fit.c);
    rep.operator_norm = norm.value;
    rep.norm_converged = norm.converged;

    const size_t n_eval = opts.eval_pairs > 0 ? opts.eval_pairs : n_pairs;
    detail::PairStats eval_stats;
    if (opts.calibrate_on_eval) {
        eval_stats = detail::proximity_pairs(phi, basis, n_eval, radius, rng, opts);
        for (size_t i = 0; i < eval_stats.lhs.size(); ++i)
            rep.lipschitz_hat = std::max(rep.lipschitz_hat, eval_stats.lhs[i] / eval_stats.dx[i]);
        rep.degenerate_skipped += eval_stats.degenerate;
    } else {
        const detail::PairStats calib =
            detail::proximity_pairs(phi, basis, n_pairs, radius, rng, opts);
        for (size_t i = 0; i < calib.lhs.size(); ++i)
            rep.lipschitz_hat = std::max(rep.lipschitz_hat, calib.lhs[i] / calib.dx[i]);
        rep.degenerate_skipped += calib.degenerate;
        eval_stats = detail::proximity_pairs(phi, basis, n_eval, radius, rng, opts);
        rep.degenerate_skipped += eval_stats.degenerate;
    }

    // Relative slack absorbs the below-from power-iteration estimate and
    // division rounding; genuine violations dwarf it.
    constexpr double kSlack = 1e-9;
    size_t violations = 0;
    for (size_t i = 0; i < eval_stats.lhs.size(); ++i) {
        const double rhs = rep.lipschitz_hat * rep.operator_norm * eval_stats.dlift[i];
        if (rhs > 0.0) rep.worst_ratio = std::max(rep.worst_ratio, eval_stats.lhs[i] / rhs);
        if (eval_stats.lhs[i] > rhs * (1.0 + kSlack)) ++violations;
    }
    rep.pair_count = eval_stats.lhs.size();
    rep.violation_rate =
        rep.pair_count > 0 ? static_cast<double>(violations) / rep.pair_count : 0.0;
    return rep;
}

}  // namespace kdm
