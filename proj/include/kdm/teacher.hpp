#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "kdm/adam.hpp"
#include "kdm/checkerboard.hpp"
#include "kdm/mlp.hpp"
#include "kdm/pairs.hpp"
#include "kdm/schedule.hpp"

namespace kdm {

enum class TeacherKind { edm, fm };

inline std::string to_string(TeacherKind k) { return k == TeacherKind::edm ? "edm" : "fm"; }

struct TeacherConfig {
    int iterations = 50000;
    int batch = 512;
    double lr = 3e-4;
    std::vector<int> hidden = {128, 128, 128};
    double sigma_min = 0.002;
    double sigma_max = 10.0;
    double rho = 7.0;
    int embed_dim = 16;
    int log_every = 1000;
};

// A trained (or freshly initialized) generative teacher over the 2D
// checkerboard. EDM kind holds a denoiser D(x; sigma) conditioned on
// log sigma; FM kind holds a velocity field v(x, t), t in [0, 1] with t = 1
// at the noise end.
struct Teacher {
    TeacherKind kind = TeacherKind::edm;
    Mlp net;
    CheckerboardSpec data_spec;
    double sigma_min = 0.002;
    double sigma_max = 10.0;
    double rho = 7.0;
    int embed_dim = 16;

    double prior_std() const { return kind == TeacherKind::edm ? sigma_max : 1.0; }
};

namespace detail {

inline Matrix embed_rows(int n, double value, int dim) {
    Matrix e(n, dim);
    const std::vector<double> row = time_embedding(value, dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) e(i, j) = row[j];
    return e;
}

inline Matrix embed_rows(const std::vector<double>& values, int dim) {
    Matrix e(static_cast<int>(values.size()), dim);
    for (int i = 0; i < e.rows; ++i) {
        const std::vector<double> row = time_embedding(values[i], dim);
        for (int j = 0; j < dim; ++j) e(i, j) = row[j];
    }
    return e;
}

}  // namespace detail

// D(x; sigma), one shared sigma for the whole batch.
inline Matrix teacher_denoise(const Teacher& t, const Matrix& x, double sigma) {
    return mlp_forward_batch(t.net, x, detail::embed_rows(x.rows, std::log(sigma), t.embed_dim));
}

// v(x, t), one shared t for the whole batch.
inline Matrix teacher_velocity(const Teacher& t, const Matrix& x, double time) {
    return mlp_forward_batch(t.net, x, detail::embed_rows(x.rows, time, t.embed_dim));
}

struct TrainLogRow {
    long iteration;
    double loss;
};

struct TeacherTrainResult {
    Teacher teacher;
    std::vector<TrainLogRow> log;
};

// Denoiser training: D(x0 + sigma*eps; sigma) -> x0 with sigma log-uniform on
// [sigma_min, sigma_max]. No preconditioning wrappers; the raw net trains
// stably at this scale.
inline TeacherTrainResult train_teacher_edm(const CheckerboardSpec& spec,
                                            const TeacherConfig& cfg, Rng& rng) {
    spec.validate();
    Teacher t;
    t.kind = TeacherKind::edm;
    t.data_spec = spec;
    t.sigma_min = cfg.sigma_min;
    t.sigma_max = cfg.sigma_max;
    t.rho = cfg.rho;
    t.embed_dim = cfg.embed_dim;
    t.net = make_mlp(2, cfg.embed_dim, cfg.hidden, 2, rng);

    ParamRefs params;
    collect_params(t.net, "teacher", params);
    AdamState opt = make_adam_state(params.tensors);

    std::vector<TrainLogRow> log;
    const double log_smin = std::log(cfg.sigma_min), log_smax = std::log(cfg.sigma_max);
    for (long it = 0; it < cfg.iterations; ++it) {
        LabeledPoints data = sample_checkerboard(spec, cfg.batch, rng);
        Matrix x0(cfg.batch, 2), xn(cfg.batch, 2);
        std::vector<double> log_sigmas(cfg.batch);
        for (int i = 0; i < cfg.batch; ++i) {
            x0(i, 0) = data.points[i][0];
            x0(i, 1) = data.points[i][1];
            const double ls = rng.uniform(log_smin, log_smax);
            log_sigmas[i] = ls;
            const double s = std::exp(ls);
            xn(i, 0) = x0(i, 0) + s * rng.gaussian();
            xn(i, 1) = x0(i, 1) + s * rng.gaussian();
        }
        MlpCache cache;
        Matrix pred = mlp_forward_batch(t.net, xn, detail::embed_rows(log_sigmas, cfg.embed_dim),
                                        &cache);
        double loss = 0.0;
        Matrix dy(cfg.batch, 2);
        const double inv = 1.0 / (static_cast<double>(cfg.batch) * 2.0);
        for (size_t i = 0; i < pred.data.size(); ++i) {
            const double r = pred.data[i] - x0.data[i];
            loss += r * r * inv;
            dy.data[i] = 2.0 * r * inv;
        }
        if (!std::isfinite(loss)) throw TrainingError("edm teacher loss diverged", it);
        MlpGrads g = mlp_backward_batch(t.net, cache, dy);
        std::vector<Matrix*> gref;
        collect_grads(g, gref);
        adam_step(params.tensors, gref, opt, cfg.lr, &params.names);
        if (it % cfg.log_every == 0 || it == cfg.iterations - 1) log.push_back({it, loss});
    }
    return {std::move(t), std::move(log)};
}

// Flow-matching training on the linear interpolant x_t = (1-t) x0 + t x1 with
// x1 ~ N(0, I). The regression target is x0 - x1, the displacement toward the
// data end, matching the sampler below which advances along +v while t runs
// from 1 to 0.
inline TeacherTrainResult train_teacher_fm_on(
    const std::function<void(int, Rng&, Matrix&)>& draw_data, const CheckerboardSpec& spec,
    const TeacherConfig& cfg, Rng& rng) {
    Teacher t;
    t.kind = TeacherKind::fm;
    t.data_spec = spec;
    t.sigma_min = cfg.sigma_min;
    t.sigma_max = cfg.sigma_max;
    t.rho = cfg.rho;
    t.embed_dim = cfg.embed_dim;
    t.net = make_mlp(2, cfg.embed_dim, cfg.hidden, 2, rng);

    ParamRefs params;
    collect_params(t.net, "teacher", params);
    AdamState opt = make_adam_state(params.tensors);

    std::vector<TrainLogRow> log;
    for (long it = 0; it < cfg.iterations; ++it) {
        Matrix x0(cfg.batch, 2);
        draw_data(cfg.batch, rng, x0);
        Matrix xt(cfg.batch, 2), target(cfg.batch, 2);
        std::vector<double> times(cfg.batch);
        for (int i = 0; i < cfg.batch; ++i) {
            const double time = rng.uniform();
            times[i] = time;
            for (int c = 0; c < 2; ++c) {
                const double noise = rng.gaussian();
                xt(i, c) = (1.0 - time) * x0(i, c) + time * noise;
                target(i, c) = x0(i, c) - noise;
            }
        }
        MlpCache cache;
        Matrix pred =
            mlp_forward_batch(t.net, xt, detail::embed_rows(times, cfg.embed_dim), &cache);
        double loss = 0.0;
        Matrix dy(cfg.batch, 2);
        const double inv = 1.0 / (static_cast<double>(cfg.batch) * 2.0);
        for (size_t i = 0; i < pred.data.size(); ++i) {
            const double r = pred.data[i] - target.data[i];
            loss += r * r * inv;
            dy.data[i] = 2.0 * r * inv;
        }
        if (!std::isfinite(loss)) throw TrainingError("fm teacher loss diverged", it);
        MlpGrads g = mlp_backward_batch(t.net, cache, dy);
        std::vector<Matrix*> gref;
        collect_grads(g, gref);
        adam_step(params.tensors, gref, opt, cfg.lr, &params.names);
        if (it % cfg.log_every == 0 || it == cfg.iterations - 1) log.push_back({it, loss});
    }
    return {std::move(t), std::move(log)};
}

inline TeacherTrainResult train_teacher_fm(const CheckerboardSpec& spec, const TeacherConfig& cfg,
                                           Rng& rng) {
    spec.validate();
    return train_teacher_fm_on(
        [&spec](int n, Rng& r, Matrix& out) {
            LabeledPoints data = sample_checkerboard(spec, n, r);
            for (int i = 0; i < n; ++i) {
                out(i, 0) = data.points[i][0];
                out(i, 1) = data.points[i][1];
            }
        },
        spec, cfg, rng);
}

// --- deterministic reverse-ODE integration ---------------------------------

using BatchFieldFn = std::function<Matrix(const Matrix&, double)>;

namespace detail {
inline void check_finite_state(const Matrix& x, int step) {
    if (!x.all_finite())
        throw NumericError("ode integration produced non-finite state at step " +
                           std::to_string(step));
}
}  // namespace detail

// Heun over a decreasing sigma grid for dx/dsigma = (x - D(x; sigma)) / sigma,
// Euler on the final step to sigma = 0. Rows integrate independently.
inline Matrix edm_heun_integrate(const BatchFieldFn& denoiser, const SigmaSchedule& schedule,
                                 Matrix x, std::vector<Matrix>* trajectory = nullptr) {
    if (trajectory) trajectory->push_back(x);
    const int steps = schedule.steps();
    for (int k = 0; k < steps; ++k) {
        const double s = schedule.sigmas[k];
        const double sn = schedule.sigmas[k + 1];
        const double h = sn - s;
        const Matrix d0 = denoiser(x, s);
        Matrix slope0 = x;
        for (size_t i = 0; i < slope0.data.size(); ++i)
            slope0.data[i] = (slope0.data[i] - d0.data[i]) / s;
        Matrix xe = x;
        add_inplace(xe, slope0, h);
        if (sn > 0.0) {
            const Matrix d1 = denoiser(xe, sn);
            for (size_t i = 0; i < x.data.size(); ++i) {
                const double slope1 = (xe.data[i] - d1.data[i]) / sn;
                x.data[i] += h * 0.5 * (slope0.data[i] + slope1);
            }
        } else {
            x = std::move(xe);
        }
        detail::check_finite_state(x, k);
        if (trajectory) trajectory->push_back(x);
    }
    return x;
}

// Heun for the flow-matching field: the state advances along +v while the
// net's time input runs from 1 down to 0. nfe is the exact evaluation
// budget; odd budgets end with an Euler step.
inline Matrix fm_heun_integrate(const BatchFieldFn& velocity, int nfe, Matrix x,
                                std::vector<Matrix>* trajectory = nullptr) {
    if (nfe < 1) throw ConfigError("fm integration: nfe must be >= 1");
    const int steps = (nfe + 1) / 2;
    const bool last_euler = nfe % 2 == 1;
    const double h = 1.0 / steps;
    if (trajectory) trajectory->push_back(x);
    for (int k = 0; k < steps; ++k) {
        const double time = 1.0 - k * h;
        const Matrix v0 = velocity(x, time);
        Matrix xe = x;
        add_inplace(xe, v0, h);
        if (k == steps - 1 && last_euler) {
            x = std::move(xe);
        } else {
            const Matrix v1 = velocity(xe, time - h);
            for (size_t i = 0; i < x.data.size(); ++i)
                x.data[i] += h * 0.5 * (v0.data[i] + v1.data[i]);
        }
        detail::check_finite_state(x, k);
        if (trajectory) trajectory->push_back(x);
    }
    return x;
}

// Grid points for an EDM sigma schedule fitting an evaluation budget: Heun
// spends 2 evals per interval except the final Euler step, so N points cost
// 2N-1 evaluations.
inline int edm_grid_points_for_nfe(int nfe) { return std::max(1, (nfe + 1) / 2); }

inline Matrix sample_ode_batch(const Teacher& t, Matrix x_t, int nfe,
                               std::vector<Matrix>* trajectory = nullptr) {
    if (nfe < 1) throw ConfigError("sample_ode: nfe must be >= 1");
    if (x_t.cols != 2) throw ShapeError("sample_ode: expected B x 2 states");
    if (t.kind == TeacherKind::edm) {
        const SigmaSchedule sched =
            karras_grid(edm_grid_points_for_nfe(nfe), t.sigma_min, t.sigma_max, t.rho);
        return edm_heun_integrate(
            [&t](const Matrix& x, double s) { return teacher_denoise(t, x, s); }, sched,
            std::move(x_t), trajectory);
    }
    return fm_heun_integrate(
        [&t](const Matrix& x, double time) { return teacher_velocity(t, x, time); }, nfe,
        std::move(x_t), trajectory);
}

// Full trajectory of one state. Deterministic; identical to the matching row
// of a batched call.
inline std::vector<Point> sample_ode(const Teacher& t, const Point& x_t, int nfe) {
    if (!std::isfinite(x_t[0]) || !std::isfinite(x_t[1]))
        throw NumericError("sample_ode: non-finite initial state");
    Matrix x(1, 2);
    x(0, 0) = x_t[0];
    x(0, 1) = x_t[1];
    std::vector<Matrix> traj;
    sample_ode_batch(t, std::move(x), nfe, &traj);
    std::vector<Point> out;
    out.reserve(traj.size());
    for (const Matrix& m : traj) out.push_back({m(0, 0), m(0, 1)});
    return out;
}

// End map x_T -> x_0 as a plain function, for the theory and eval harnesses.
// Owns a copy of the teacher so the returned closure outlives the original.
inline std::function<Matrix(const Matrix&)> ode_end_map(Teacher t, int nfe) {
    return [t = std::move(t), nfe](const Matrix& x) { return sample_ode_batch(t, x, nfe); };
}

// Harvest n noise->data pairs. Initial noise for pair i comes from
// rng.substream(i), so any chunking (or parallel split) of the index range
// yields bitwise identical pairs.
inline PairSet generate_pairs(const Teacher& t, size_t n, int nfe, const Rng& rng,
                              bool conditional = false, size_t chunk = 2048) {
    if (n < 1) throw ConfigError("generate_pairs: n must be >= 1");
    PairSet set;
    set.meta.teacher_kind = to_string(t.kind);
    set.meta.nfe = static_cast<uint32_t>(nfe);
    set.meta.seed = rng.seed();
    set.meta.data_spec = t.data_spec;
    set.meta.conditional = conditional;
    set.pairs.reserve(n);
    const double prior = t.prior_std();
    for (size_t start = 0; start < n; start += chunk) {
        const size_t count = std::min(chunk, n - start);
        Matrix xt(static_cast<int>(count), 2);
        for (size_t i = 0; i < count; ++i) {
            Rng sub = rng.substream(start + i);
            xt(static_cast<int>(i), 0) = prior * sub.gaussian();
            xt(static_cast<int>(i), 1) = prior * sub.gaussian();
        }
        const Matrix x0 = sample_ode_batch(t, xt, nfe);
        for (size_t i = 0; i < count; ++i) {
            NoisePair p;
            p.x_t = {xt(static_cast<int>(i), 0), xt(static_cast<int>(i), 1)};
            p.x_0 = {x0(static_cast<int>(i), 0), x0(static_cast<int>(i), 1)};
            if (conditional) {
                const int cell = cell_of(t.data_spec, p.x_0);
                if (cell == kOutsideCell) {
                    p.outside = true;
                } else {
                    p.label = cell;
                }
            }
            set.pairs.push_back(p);
        }
    }
    return set;
}

}  // namespace kdm
