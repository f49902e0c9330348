#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "kdm/checkerboard.hpp"
#include "kdm/errors.hpp"
#include "kdm/rng.hpp"

namespace kdm {

using PointMapFn = std::function<Point(const Point&)>;

struct PerturbResult {
    std::vector<double> sigmas;
    std::vector<Point> outputs;    // one per sigma
    std::vector<Point> perturbed;  // the normalized inputs actually sampled
    std::vector<uint8_t> skipped;  // degenerate (zero-norm) inputs
};

namespace detail {
// 2D stand-in for the per-sample normalization: project onto the prior's
// typical shell (radius prior_std * sqrt(2)). Coordinate-wise
// standardization would collapse a 2-vector onto +-(1,-1), so the vector
// norm is rescaled instead.
inline bool normalize_to_prior_shell(Point& v, double prior_std) {
    const double n = norm2(v);
    if (n == 0.0 || !std::isfinite(n)) return false;
    const double target = prior_std * std::sqrt(2.0);
    v[0] *= target / n;
    v[1] *= target / n;
    return true;
}
}  // namespace detail

// For each sigma: perturb x_T by sigma * eps (eps ~ N(0, I), none drawn when
// sigma == 0), renormalize to the prior shell, and run the sampler. The
// first grid entry is conventionally 0, making outputs[0] the reference.
inline PerturbResult perturbation_sweep(const PointMapFn& sampler, const Point& x_t,
                                        const std::vector<double>& sigmas, Rng& rng,
                                        double prior_std) {
    if (sigmas.empty()) throw ConfigError("perturbation_sweep: empty sigma grid");
    if (!(prior_std > 0.0)) throw ConfigError("perturbation_sweep: prior_std must be > 0");
    PerturbResult res;
    res.sigmas = sigmas;
    for (double sigma : sigmas) {
        Point xp = x_t;
        if (sigma != 0.0) {
            xp[0] += sigma * rng.gaussian();
            xp[1] += sigma * rng.gaussian();
        }
        if (!detail::normalize_to_prior_shell(xp, prior_std)) {
            res.outputs.push_back({0.0, 0.0});
            res.perturbed.push_back({0.0, 0.0});
            res.skipped.push_back(1);
            continue;
        }
        res.perturbed.push_back(xp);
        res.outputs.push_back(sampler(xp));
        res.skipped.push_back(0);
    }
    return res;
}

// Mean output displacement from the sigma = 0 reference, averaged over base
// points drawn from the prior. The curve behind the locality claim.
inline std::vector<double> sweep_mean_displacement(const PointMapFn& sampler,
                                                   const std::vector<double>& sigmas,
                                                   int base_points, Rng& rng, double prior_std) {
    if (sigmas.empty() || sigmas[0] != 0.0)
        throw ConfigError("sweep_mean_displacement: sigma grid must start at 0");
    std::vector<double> mean(sigmas.size(), 0.0);
    std::vector<int> counts(sigmas.size(), 0);
    for (int b = 0; b < base_points; ++b) {
        Point x{prior_std * rng.gaussian(), prior_std * rng.gaussian()};
        const PerturbResult r = perturbation_sweep(sampler, x, sigmas, rng, prior_std);
        if (r.skipped[0]) continue;
        for (size_t s = 1; s < sigmas.size(); ++s) {
            if (r.skipped[s]) continue;
            mean[s] += dist2(r.outputs[s], r.outputs[0]);
            counts[s] += 1;
        }
    }
    for (size_t s = 1; s < sigmas.size(); ++s)
        if (counts[s] > 0) mean[s] /= counts[s];
    return mean;
}

}  // namespace kdm
