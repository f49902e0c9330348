#pragma once

#include <cmath>
#include <complex>
#include <variant>
#include <vector>

#include "kdm/matrix.hpp"
#include "kdm/mlp.hpp"
#include "kdm/rng.hpp"

namespace kdm {

// Dense d x d Koopman matrix.
struct DenseKoopman {
    Matrix c;

    int dim() const { return c.rows; }
};

// Factorized form C = P_inv Lambda P with complex arithmetic realized through
// real 2d x 2d block structure. Eigenvalues are polar-parameterized,
// lambda_j = exp(-exp(nu_j)) * exp(i theta_j), so every modulus lies in (0,1).
struct FactorizedKoopman {
    Matrix p_re, p_im;        // d x d
    Matrix pinv_re, pinv_im;  // d x d
    Matrix nu;                // 1 x d
    Matrix theta;             // 1 x d

    int dim() const { return p_re.rows; }

    double modulus(int j) const { return std::exp(-std::exp(nu(0, j))); }
};

using KoopmanOperator = std::variant<DenseKoopman, FactorizedKoopman>;

inline int koopman_dim(const KoopmanOperator& op) {
    return std::visit([](const auto& o) { return o.dim(); }, op);
}

inline DenseKoopman make_dense_koopman(int d, Rng& rng) {
    DenseKoopman k;
    k.c = Matrix(d, d);
    const double std = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& x : k.c.data) x = std * rng.gaussian();
    return k;
}

// Near-identity eigenvector matrices and moduli close to (but strictly
// below) 1, a stable starting point for training.
inline FactorizedKoopman make_factorized_koopman(int d, Rng& rng) {
    FactorizedKoopman k;
    k.p_re = Matrix::identity(d);
    k.p_im = Matrix(d, d);
    k.pinv_re = Matrix::identity(d);
    k.pinv_im = Matrix(d, d);
    const double s = 0.1 / std::sqrt(static_cast<double>(d));
    for (auto& x : k.p_re.data) x += s * rng.gaussian();
    for (auto& x : k.p_im.data) x = s * rng.gaussian();
    for (auto& x : k.pinv_re.data) x += s * rng.gaussian();
    for (auto& x : k.pinv_im.data) x = s * rng.gaussian();
    k.nu = Matrix(1, d);
    k.theta = Matrix(1, d);
    for (auto& x : k.nu.data) x = -3.0 + 0.1 * rng.gaussian();
    for (auto& x : k.theta.data) x = 0.1 * rng.gaussian();
    return k;
}

// Intermediates of a factorized application, kept because the training
// backward pass reuses them.
struct FactorizedCache {
    Matrix t_re, t_im;  // P ztilde (top/bottom blocks)
    Matrix l_re, l_im;  // Lambda (P ztilde)
};

// Batched apply: rows of z are latent states. Dense: z C^T. Factorized: the
// real part of P_inv Lambda P [z; 0], truncated to the first d entries.
inline Matrix koopman_apply_batch(const KoopmanOperator& op, const Matrix& z,
                                  FactorizedCache* cache = nullptr) {
    if (z.cols != koopman_dim(op))
        throw ShapeError("koopman_apply: state width " + std::to_string(z.cols) + ", operator " +
                         std::to_string(koopman_dim(op)));
    if (const auto* dense = std::get_if<DenseKoopman>(&op)) return matmul_nt(z, dense->c);
    const auto& f = std::get<FactorizedKoopman>(op);
    const int d = f.dim();
    // Augmenting with zeros means the imaginary input block vanishes:
    // top = z P_re^T, bottom = z P_im^T.
    Matrix t_re = matmul_nt(z, f.p_re);
    Matrix t_im = matmul_nt(z, f.p_im);
    Matrix l_re(z.rows, d), l_im(z.rows, d);
    for (int i = 0; i < z.rows; ++i) {
        for (int j = 0; j < d; ++j) {
            const double r = std::exp(-std::exp(f.nu(0, j)));
            const double lre = r * std::cos(f.theta(0, j));
            const double lim = r * std::sin(f.theta(0, j));
            l_re(i, j) = lre * t_re(i, j) - lim * t_im(i, j);
            l_im(i, j) = lim * t_re(i, j) + lre * t_im(i, j);
        }
    }
    Matrix out = matmul_nt(l_re, f.pinv_re);
    const Matrix out_im_part = matmul_nt(l_im, f.pinv_im);
    add_inplace(out, out_im_part, -1.0);
    if (cache) {
        cache->t_re = std::move(t_re);
        cache->t_im = std::move(t_im);
        cache->l_re = std::move(l_re);
        cache->l_im = std::move(l_im);
    }
    return out;
}

inline std::vector<double> koopman_apply(const KoopmanOperator& op,
                                         const std::vector<double>& z) {
    Matrix zm(1, static_cast<int>(z.size()), std::vector<double>(z));
    return koopman_apply_batch(op, zm).data;
}

// Gradients of the factorized apply w.r.t. its parameters and input.
struct FactorizedGrads {
    Matrix p_re, p_im, pinv_re, pinv_im, nu, theta;
    Matrix input;
};

inline FactorizedGrads factorized_backward(const FactorizedKoopman& f, const Matrix& z,
                                           const FactorizedCache& cache, const Matrix& dout) {
    const int d = f.dim();
    FactorizedGrads g;
    // out = l_re pinv_re^T - l_im pinv_im^T
    g.pinv_re = matmul_tn(dout, cache.l_re);
    g.pinv_im = matmul_tn(dout, cache.l_im);
    scale_inplace(g.pinv_im, -1.0);
    Matrix dl_re = matmul(dout, f.pinv_re);
    Matrix dl_im = matmul(dout, f.pinv_im);
    scale_inplace(dl_im, -1.0);
    // l = Lambda t (complex componentwise product)
    Matrix dt_re(z.rows, d), dt_im(z.rows, d);
    g.nu = Matrix(1, d);
    g.theta = Matrix(1, d);
    for (int j = 0; j < d; ++j) {
        const double e = std::exp(f.nu(0, j));
        const double r = std::exp(-e);
        const double ct = std::cos(f.theta(0, j)), st = std::sin(f.theta(0, j));
        const double lre = r * ct, lim = r * st;
        double dlre = 0.0, dlim = 0.0;
        for (int i = 0; i < z.rows; ++i) {
            const double a = dl_re(i, j), b = dl_im(i, j);
            dlre += a * cache.t_re(i, j) + b * cache.t_im(i, j);
            dlim += -a * cache.t_im(i, j) + b * cache.t_re(i, j);
            dt_re(i, j) = a * lre + b * lim;
            dt_im(i, j) = -a * lim + b * lre;
        }
        // lambda_re = r cos(theta), lambda_im = r sin(theta), dr/dnu = -e r.
        g.nu(0, j) = (dlre * ct + dlim * st) * (-e * r);
        g.theta(0, j) = r * (-dlre * st + dlim * ct);
    }
    // t_re = z p_re^T, t_im = z p_im^T
    g.p_re = matmul_tn(dt_re, z);
    g.p_im = matmul_tn(dt_im, z);
    g.input = matmul(dt_re, f.p_re);
    add_inplace(g.input, matmul(dt_im, f.p_im));
    return g;
}

// Eigenvalues of a factorized operator from its polar parameters. Dense
// operators would need an eigendecomposition, which this library does not do.
inline std::vector<std::complex<double>> koopman_eigenvalues(const KoopmanOperator& op) {
    const auto* f = std::get_if<FactorizedKoopman>(&op);
    if (!f)
        throw UnsupportedError("koopman_eigenvalues: only factorized operators expose spectra");
    std::vector<std::complex<double>> out;
    out.reserve(f->dim());
    for (int j = 0; j < f->dim(); ++j) {
        const double r = f->modulus(j);
        out.emplace_back(r * std::cos(f->theta(0, j)), r * std::sin(f->theta(0, j)));
    }
    return out;
}

inline void collect_koopman_params(KoopmanOperator& op, const std::string& prefix,
                                   ParamRefs& out) {
    if (auto* dense = std::get_if<DenseKoopman>(&op)) {
        out.add(&dense->c, prefix + ".c");
        return;
    }
    auto& f = std::get<FactorizedKoopman>(op);
    out.add(&f.p_re, prefix + ".p_re");
    out.add(&f.p_im, prefix + ".p_im");
    out.add(&f.pinv_re, prefix + ".pinv_re");
    out.add(&f.pinv_im, prefix + ".pinv_im");
    out.add(&f.nu, prefix + ".nu");
    out.add(&f.theta, prefix + ".theta");
}

}  // namespace kdm
