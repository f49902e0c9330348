#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "kdm/errors.hpp"
#include "kdm/matrix.hpp"

namespace kdm {

// Bias-corrected Adam. Accumulators mirror the parameter list shape for shape.
struct AdamState {
    std::vector<Matrix> first_moment;
    std::vector<Matrix> second_moment;
    long step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
};

inline AdamState make_adam_state(const std::vector<Matrix*>& params, double beta1 = 0.9,
                                 double beta2 = 0.999, double eps = 1e-8) {
    AdamState s;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps_adam = eps;
    for (const Matrix* p : params) {
        s.first_moment.emplace_back(p->rows, p->cols);
        s.second_moment.emplace_back(p->rows, p->cols);
    }
    return s;
}

// One update. grads[i] matches params[i] in shape; names (optional) label the
// offending parameter when a non-finite gradient shows up.
inline void adam_step(const std::vector<Matrix*>& params, const std::vector<Matrix*>& grads,
                      AdamState& state, double lr,
                      const std::vector<std::string>* names = nullptr) {
    if (lr <= 0.0) throw ConfigError("adam_step: lr must be > 0");
    if (params.size() != grads.size() || params.size() != state.first_moment.size())
        throw ShapeError("adam_step: parameter/gradient/state count mismatch");
    // Validate everything before touching any state.
    for (size_t t = 0; t < params.size(); ++t) {
        if (!params[t]->same_shape(*grads[t]) || !params[t]->same_shape(state.first_moment[t]))
            throw ShapeError("adam_step: shape mismatch at tensor " + std::to_string(t));
        if (!grads[t]->all_finite())
            throw OptimError("non-finite gradient",
                             names ? (*names)[t] : "tensor " + std::to_string(t));
    }
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (size_t t = 0; t < params.size(); ++t) {
        Matrix& p = *params[t];
        const Matrix& g = *grads[t];
        Matrix& m = state.first_moment[t];
        Matrix& v = state.second_moment[t];
        for (size_t i = 0; i < p.data.size(); ++i) {
            const double gi = g.data[i];
            m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * gi;
            v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * gi * gi;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps_adam);
        }
    }
}

}  // namespace kdm
