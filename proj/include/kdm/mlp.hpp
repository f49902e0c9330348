#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "kdm/matrix.hpp"
#include "kdm/rng.hpp"

namespace kdm {

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// x * sigmoid(x). Smooth, non-monotone below ~-1.28, lower-bounded by ~-0.2785.
inline double silu(double x) { return x * sigmoid(x); }

inline double silu_derivative(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

// Sinusoidal embedding of a scalar (log-sigma or t) with geometrically spaced
// frequencies from 1 down to 1/1000; layout [sin(v f0), cos(v f0), sin(v f1), ...].
inline std::vector<double> time_embedding(double v, int dim) {
    if (dim % 2 != 0) throw ShapeError("time_embedding: dim must be even");
    std::vector<double> e(dim);
    const int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        const double f = half > 1 ? std::pow(1000.0, -static_cast<double>(k) / (half - 1)) : 1.0;
        e[2 * k] = std::sin(v * f);
        e[2 * k + 1] = std::cos(v * f);
    }
    return e;
}

struct DenseLayer {
    Matrix w;  // in x out
    Matrix b;  // 1 x out
};

// Feed-forward net: SiLU on hidden layers, identity on the output layer.
// The first layer consumes the data input concatenated with an embedding
// vector (time/condition); embed_dim may be zero.
struct Mlp {
    std::vector<DenseLayer> layers;
    int embed_dim = 0;

    int input_dim() const { return layers.front().w.rows - embed_dim; }
    int output_dim() const { return layers.back().w.cols; }
    int layer_count() const { return static_cast<int>(layers.size()); }
};

// He-style initialization (weights ~ N(0, 2/fan_in), zero biases), suited to
// SiLU hidden units.
inline Mlp make_mlp(int data_in, int embed_dim, const std::vector<int>& hidden, int out,
                    Rng& rng) {
    if (data_in < 0 || embed_dim < 0 || out < 1)
        throw ShapeError("make_mlp: bad dimensions");
    Mlp net;
    net.embed_dim = embed_dim;
    std::vector<int> widths;
    widths.push_back(data_in + embed_dim);
    for (int h : hidden) widths.push_back(h);
    widths.push_back(out);
    for (size_t l = 0; l + 1 < widths.size(); ++l) {
        DenseLayer layer;
        layer.w = Matrix(widths[l], widths[l + 1]);
        const double std = std::sqrt(2.0 / widths[l]);
        for (auto& x : layer.w.data) x = std * rng.gaussian();
        layer.b = Matrix(1, widths[l + 1]);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

struct MlpCache {
    Matrix input;             // B x (data_in + embed_dim)
    std::vector<Matrix> pre;  // preactivation per layer
    std::vector<Matrix> act;  // post-activation per layer (act.back() = output)
};

struct MlpGrads {
    std::vector<DenseLayer> layers;  // same shapes as the net
    Matrix input;                    // B x (data_in + embed_dim)
};

inline MlpGrads zero_grads(const Mlp& net) {
    MlpGrads g;
    for (const auto& l : net.layers)
        g.layers.push_back({Matrix(l.w.rows, l.w.cols), Matrix(1, l.b.cols)});
    return g;
}

inline Matrix concat_cols(const Matrix& a, const Matrix& b) {
    if (b.cols == 0) return a;
    if (a.rows != b.rows) throw ShapeError("concat_cols: row mismatch");
    Matrix c(a.rows, a.cols + b.cols);
    for (int i = 0; i < a.rows; ++i) {
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (int j = 0; j < a.cols; ++j) ci[j] = ai[j];
        const double* bi = b.row(i);
        for (int j = 0; j < b.cols; ++j) ci[a.cols + j] = bi[j];
    }
    return c;
}

// Batched forward pass. x is B x input_dim, embed is B x embed_dim (ignored
// when embed_dim == 0). The cache is required for a later backward pass.
inline Matrix mlp_forward_batch(const Mlp& net, const Matrix& x, const Matrix& embed,
                                MlpCache* cache = nullptr) {
    if (x.cols != net.input_dim())
        throw ShapeError("mlp_forward: input width " + std::to_string(x.cols) + ", expected " +
                         std::to_string(net.input_dim()));
    if (net.embed_dim > 0 && (embed.cols != net.embed_dim || embed.rows != x.rows))
        throw ShapeError("mlp_forward: embed shape " + shape_str(embed) + ", expected " +
                         std::to_string(x.rows) + "x" + std::to_string(net.embed_dim));
    Matrix a = net.embed_dim > 0 ? concat_cols(x, embed) : x;
    if (cache) {
        cache->input = a;
        cache->pre.clear();
        cache->act.clear();
    }
    const int last = net.layer_count() - 1;
    for (int l = 0; l <= last; ++l) {
        Matrix z = matmul(a, net.layers[l].w);
        add_row_broadcast(z, net.layers[l].b);
        if (cache) cache->pre.push_back(z);
        if (l < last) {
            a = z;
            for (auto& v : a.data) v = silu(v);
        } else {
            a = std::move(z);
        }
        if (cache) cache->act.push_back(a);
    }
    return a;
}

// Reverse-mode gradients for a cached forward pass: parameter gradients plus
// the gradient w.r.t. the concatenated input (data slice first, then embed).
inline MlpGrads mlp_backward_batch(const Mlp& net, const MlpCache& cache, const Matrix& dy) {
    const int last = net.layer_count() - 1;
    if (dy.rows != cache.input.rows || dy.cols != net.output_dim())
        throw ShapeError("mlp_backward: output grad shape " + shape_str(dy));
    MlpGrads g = zero_grads(net);
    Matrix d = dy;
    for (int l = last; l >= 0; --l) {
        if (l < last) {
            // d arrived w.r.t. act[l]; convert through SiLU.
            const Matrix& pre = cache.pre[l];
            for (size_t i = 0; i < d.data.size(); ++i)
                d.data[i] *= silu_derivative(pre.data[i]);
        }
        const Matrix& below = l == 0 ? cache.input : cache.act[l - 1];
        g.layers[l].w = matmul_tn(below, d);
        for (int j = 0; j < d.cols; ++j) {
            double s = 0.0;
            for (int i = 0; i < d.rows; ++i) s += d(i, j);
            g.layers[l].b(0, j) = s;
        }
        d = matmul_nt(d, net.layers[l].w);
    }
    g.input = std::move(d);
    return g;
}

// Single-sample wrappers.
inline std::vector<double> mlp_forward(const Mlp& net, std::span<const double> input,
                                       std::span<const double> embed) {
    Matrix x(1, static_cast<int>(input.size()));
    for (size_t i = 0; i < input.size(); ++i) x.data[i] = input[i];
    Matrix e(1, static_cast<int>(embed.size()));
    for (size_t i = 0; i < embed.size(); ++i) e.data[i] = embed[i];
    Matrix y = mlp_forward_batch(net, x, e);
    return y.data;
}

struct MlpSampleGrads {
    std::vector<DenseLayer> layers;
    std::vector<double> input;  // data slice only
};

inline MlpSampleGrads mlp_backward(const Mlp& net, std::span<const double> input,
                                   std::span<const double> embed,
                                   std::span<const double> output_grad) {
    Matrix x(1, static_cast<int>(input.size()));
    for (size_t i = 0; i < input.size(); ++i) x.data[i] = input[i];
    Matrix e(1, static_cast<int>(embed.size()));
    for (size_t i = 0; i < embed.size(); ++i) e.data[i] = embed[i];
    MlpCache cache;
    mlp_forward_batch(net, x, e, &cache);
    Matrix dy(1, static_cast<int>(output_grad.size()));
    for (size_t i = 0; i < output_grad.size(); ++i) dy.data[i] = output_grad[i];
    MlpGrads g = mlp_backward_batch(net, cache, dy);
    MlpSampleGrads out;
    out.layers = std::move(g.layers);
    out.input.assign(g.input.data.begin(), g.input.data.begin() + input.size());
    return out;
}

// Parameter traversal in a fixed order, shared by the optimizer, checkpoints
// and gradient tests.
struct ParamRefs {
    std::vector<Matrix*> tensors;
    std::vector<std::string> names;

    void add(Matrix* m, std::string name) {
        tensors.push_back(m);
        names.push_back(std::move(name));
    }
};

inline void collect_params(Mlp& net, const std::string& prefix, ParamRefs& out) {
    for (size_t l = 0; l < net.layers.size(); ++l) {
        out.add(&net.layers[l].w, prefix + ".l" + std::to_string(l) + ".w");
        out.add(&net.layers[l].b, prefix + ".l" + std::to_string(l) + ".b");
    }
}

inline void collect_grads(MlpGrads& g, std::vector<Matrix*>& out) {
    for (auto& l : g.layers) {
        out.push_back(&l.w);
        out.push_back(&l.b);
    }
}

}  // namespace kdm
