#pragma once

#include <cmath>
#include <vector>

#include "kdm/errors.hpp"

namespace kdm {

// Strictly decreasing noise-level grid with an appended terminal 0.
struct SigmaSchedule {
    std::vector<double> sigmas;  // sigma_max ... sigma_min, 0
    double sigma_max = 0.0;
    double sigma_min = 0.0;
    double rho = 0.0;

    int steps() const { return static_cast<int>(sigmas.size()) - 1; }
};

// sigma_i = (smax^(1/rho) + i/(n-1) * (smin^(1/rho) - smax^(1/rho)))^rho,
// endpoints pinned exactly, terminal 0 appended.
inline SigmaSchedule karras_grid(int n_steps, double sigma_min, double sigma_max, double rho) {
    if (n_steps < 1) throw ConfigError("karras_grid: n_steps must be >= 1");
    if (!(sigma_min > 0.0) || !(sigma_min < sigma_max))
        throw ConfigError("karras_grid: need 0 < sigma_min < sigma_max");
    if (!(rho > 0.0)) throw ConfigError("karras_grid: rho must be > 0");
    SigmaSchedule s;
    s.sigma_max = sigma_max;
    s.sigma_min = sigma_min;
    s.rho = rho;
    s.sigmas.resize(static_cast<size_t>(n_steps) + 1);
    if (n_steps == 1) {
        s.sigmas[0] = sigma_max;
    } else {
        const double a = std::pow(sigma_max, 1.0 / rho);
        const double b = std::pow(sigma_min, 1.0 / rho);
        for (int i = 0; i < n_steps; ++i) {
            const double t = static_cast<double>(i) / (n_steps - 1);
            s.sigmas[i] = std::pow(a + t * (b - a), rho);
        }
        s.sigmas[0] = sigma_max;
        s.sigmas[n_steps - 1] = sigma_min;
    }
    s.sigmas[n_steps] = 0.0;
    for (int i = 0; i + 1 < n_steps; ++i)
        if (!(s.sigmas[i] > s.sigmas[i + 1]))
            throw NumericError("karras_grid: grid not strictly decreasing");
    return s;
}

}  // namespace kdm
