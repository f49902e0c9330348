#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "kdm/errors.hpp"

namespace kdm {

// Dense row-major matrix of doubles. The single tensor type of the library;
// vectors are 1xN (or Nx1) matrices where convenient.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // rows*cols, row-major

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
    Matrix(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != static_cast<size_t>(r) * c)
            throw ShapeError("matrix data length does not match rows*cols");
    }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

    double* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }
    const double* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }

    size_t size() const { return data.size(); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double x : data)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void fill(double v) {
        for (auto& x : data) x = v;
    }

    bool operator==(const Matrix& o) const {
        return rows == o.rows && cols == o.cols && data == o.data;
    }
};

inline std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

// C = A * B. Accumulates row by row (ikj order); each output row depends only
// on the matching input row, so batched and single-row calls produce bitwise
// identical rows.
inline void matmul_into(Matrix& c, const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw ShapeError("matmul: " + shape_str(a) + " * " + shape_str(b));
    c.rows = a.rows;
    c.cols = b.cols;
    c.data.assign(static_cast<size_t>(a.rows) * b.cols, 0.0);
    for (int i = 0; i < a.rows; ++i) {
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double av = ai[k];
            const double* bk = b.row(k);
            for (int j = 0; j < b.cols; ++j) ci[j] += av * bk[j];
        }
    }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix c;
    matmul_into(c, a, b);
    return c;
}

// C = A * B^T.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols)
        throw ShapeError("matmul_nt: " + shape_str(a) + " * " + shape_str(b) + "^T");
    Matrix c(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (int j = 0; j < b.rows; ++j) {
            const double* bj = b.row(j);
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
            ci[j] = s;
        }
    }
    return c;
}

// C = A^T * B (rank-1 accumulation over the shared row index).
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows)
        throw ShapeError("matmul_tn: " + shape_str(a) + "^T * " + shape_str(b));
    Matrix c(a.cols, b.cols);
    for (int s = 0; s < a.rows; ++s) {
        const double* as = a.row(s);
        const double* bs = b.row(s);
        for (int m = 0; m < a.cols; ++m) {
            const double av = as[m];
            if (av == 0.0) continue;
            double* cm = c.row(m);
            for (int j = 0; j < b.cols; ++j) cm[j] += av * bs[j];
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

inline void add_inplace(Matrix& a, const Matrix& b, double scale = 1.0) {
    if (!a.same_shape(b)) throw ShapeError("add: " + shape_str(a) + " vs " + shape_str(b));
    for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += scale * b.data[i];
}

inline void scale_inplace(Matrix& a, double s) {
    for (auto& x : a.data) x *= s;
}

// Broadcast-add a 1xN bias to every row.
inline void add_row_broadcast(Matrix& a, const Matrix& bias) {
    if (bias.rows != 1 || bias.cols != a.cols)
        throw ShapeError("bias broadcast: " + shape_str(a) + " += " + shape_str(bias));
    for (int i = 0; i < a.rows; ++i) {
        double* ai = a.row(i);
        for (int j = 0; j < a.cols; ++j) ai[j] += bias.data[j];
    }
}

inline double frobenius_sq(const Matrix& a) {
    double s = 0.0;
    for (double x : a.data) s += x * x;
    return s;
}

inline double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double x : a.data) m = std::max(m, std::fabs(x));
    return m;
}

// In-place Cholesky solve of the SPD system G X = B. Throws NumericError when
// a pivot collapses (rank deficiency).
inline Matrix cholesky_solve(Matrix g, Matrix b) {
    if (g.rows != g.cols || g.rows != b.rows)
        throw ShapeError("cholesky_solve: " + shape_str(g) + ", " + shape_str(b));
    const int n = g.rows;
    // Factor G = L L^T, L stored in the lower triangle of g.
    for (int j = 0; j < n; ++j) {
        double d = g(j, j);
        for (int k = 0; k < j; ++k) d -= g(j, k) * g(j, k);
        if (!(d > 0.0) || !std::isfinite(d))
            throw NumericError("cholesky: matrix not positive definite (pivot " +
                               std::to_string(j) + ")");
        const double lj = std::sqrt(d);
        g(j, j) = lj;
        for (int i = j + 1; i < n; ++i) {
            double s = g(i, j);
            for (int k = 0; k < j; ++k) s -= g(i, k) * g(j, k);
            g(i, j) = s / lj;
        }
    }
    // Forward substitution L Y = B, then back substitution L^T X = Y.
    for (int col = 0; col < b.cols; ++col) {
        for (int i = 0; i < n; ++i) {
            double s = b(i, col);
            for (int k = 0; k < i; ++k) s -= g(i, k) * b(k, col);
            b(i, col) = s / g(i, i);
        }
        for (int i = n - 1; i >= 0; --i) {
            double s = b(i, col);
            for (int k = i + 1; k < n; ++k) s -= g(k, i) * b(k, col);
            b(i, col) = s / g(i, i);
        }
    }
    return b;
}

// Least squares: X minimizing ||A X - B||_F, via ridge-damped normal
// equations (A^T A + ridge*I) X = A^T B. ridge = 0 demands full column rank.
inline Matrix lstsq(const Matrix& a, const Matrix& b, double ridge = 1e-10) {
    if (a.rows != b.rows)
        throw ShapeError("lstsq: " + shape_str(a) + " vs " + shape_str(b));
    Matrix g = matmul_tn(a, a);
    for (int i = 0; i < g.rows; ++i) g(i, i) += ridge;
    Matrix rhs = matmul_tn(a, b);
    try {
        return cholesky_solve(std::move(g), std::move(rhs));
    } catch (const NumericError&) {
        throw NumericError("lstsq: normal equations not solvable (rank-deficient A with ridge=" +
                           std::to_string(ridge) + ")");
    }
}

}  // namespace kdm
