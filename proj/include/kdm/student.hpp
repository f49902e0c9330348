#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "kdm/adam.hpp"
#include "kdm/koopman.hpp"
#include "kdm/mlp.hpp"
#include "kdm/pairs.hpp"

namespace kdm {

// Time-slot markers fed to the encoders/decoder embedding: the noisy-side
// encoder sees 1, the clean side and the decoder see 0.
constexpr double kCleanTimeMarker = 0.0;
constexpr double kNoisyTimeMarker = 1.0;

struct Discriminator {
    Mlp net;  // 2D point (+ one-hot label embed when conditional) -> one logit
};

// The one-step student: x0_hat = dec(C enc_noisy(x_T) [+ control(label)]).
struct KdmModel {
    Mlp enc_clean;   // x0 -> latent
    Mlp enc_noisy;   // xT -> latent
    KoopmanOperator koopman;
    Matrix control;  // n_classes x latent_dim; empty when unconditional
    Mlp dec;         // latent -> x0
    int latent_dim = 64;
    bool conditional = false;
    int n_classes = 0;
    int time_embed_dim = 16;
};

struct KdmTrainConfig {
    int iterations = 30000;
    int batch = 256;
    double lr = 3e-4;
    double lambda_adv = 0.01;  // adversarial weight
    double noise_std = 0.4;    // latent noise injection (std dev)
    int latent_dim = 64;
    bool conditional = false;
    bool factorized = false;
    // Loss toggles for the ablation; a disabled term reports 0 and neither
    // contributes to the total nor receives gradients.
    bool use_rec = true;
    bool use_lat = true;
    bool use_pred = true;
    bool use_adv = true;
    // Compute the reconstruction loss on the noise-free clean encoding
    // instead of the injected one.
    bool rec_noise_free = false;
    std::vector<int> enc_hidden = {128, 128};
    std::vector<int> dec_hidden = {128, 128};
    std::vector<int> disc_hidden = {64, 64};
    int time_embed_dim = 16;
    int log_every = 1000;
    uint64_t seed = 1;

    void validate() const {
        if (lambda_adv < 0.0) throw ConfigError("kdm: lambda_adv must be >= 0");
        if (noise_std < 0.0) throw ConfigError("kdm: noise_std must be >= 0");
        if (latent_dim < 1) throw ConfigError("kdm: latent_dim must be >= 1");
        if (iterations < 0 || batch < 1) throw ConfigError("kdm: bad iterations/batch");
    }
};

struct KdmLosses {
    double rec = 0.0;
    double lat = 0.0;
    double pred = 0.0;
    double adv_gen = 0.0;
    double total = 0.0;
};

struct KdmBatch {
    Matrix x_t;               // B x 2
    Matrix x_0;               // B x 2
    std::vector<int> labels;  // size B when conditional, else empty
};

namespace detail {

inline Matrix one_hot(const std::vector<int>& labels, int n_classes) {
    Matrix m(static_cast<int>(labels.size()), n_classes);
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= n_classes)
            throw ConfigError("label " + std::to_string(labels[i]) + " out of range");
        m(static_cast<int>(i), labels[i]) = 1.0;
    }
    return m;
}

// [time embedding | one-hot label] rows for a whole batch.
inline Matrix kdm_embed(int rows, double marker, int time_dim, const std::vector<int>* labels,
                        int n_classes) {
    const std::vector<double> time_row = time_embedding(marker, time_dim);
    const int cols = time_dim + (labels ? n_classes : 0);
    Matrix e(rows, cols);
    for (int i = 0; i < rows; ++i) {
        double* r = e.row(i);
        for (int j = 0; j < time_dim; ++j) r[j] = time_row[j];
        if (labels) r[time_dim + (*labels)[static_cast<size_t>(i)]] = 1.0;
    }
    return e;
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

}  // namespace detail

inline KdmModel make_kdm_model(const KdmTrainConfig& cfg, int n_classes, Rng& rng) {
    cfg.validate();
    if (cfg.conditional && n_classes < 1)
        throw ConfigError("conditional model needs n_classes >= 1");
    KdmModel m;
    m.latent_dim = cfg.latent_dim;
    m.conditional = cfg.conditional;
    m.n_classes = cfg.conditional ? n_classes : 0;
    m.time_embed_dim = cfg.time_embed_dim;
    const int embed = cfg.time_embed_dim + (cfg.conditional ? n_classes : 0);
    m.enc_clean = make_mlp(2, embed, cfg.enc_hidden, cfg.latent_dim, rng);
    m.enc_noisy = make_mlp(2, embed, cfg.enc_hidden, cfg.latent_dim, rng);
    if (cfg.factorized) {
        m.koopman = make_factorized_koopman(cfg.latent_dim, rng);
    } else {
        m.koopman = make_dense_koopman(cfg.latent_dim, rng);
    }
    if (cfg.conditional) {
        m.control = Matrix(n_classes, cfg.latent_dim);
        const double std = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
        for (auto& x : m.control.data) x = std * rng.gaussian();
    }
    m.dec = make_mlp(cfg.latent_dim, embed, cfg.dec_hidden, 2, rng);
    return m;
}

inline Discriminator make_discriminator(const KdmTrainConfig& cfg, int n_classes, Rng& rng) {
    Discriminator d;
    d.net = make_mlp(2, cfg.conditional ? n_classes : 0, cfg.disc_hidden, 1, rng);
    return d;
}

// Fixed parameter order shared by the optimizer and checkpoints.
inline ParamRefs kdm_params(KdmModel& m) {
    ParamRefs p;
    collect_params(m.enc_clean, "enc_clean", p);
    collect_params(m.enc_noisy, "enc_noisy", p);
    collect_koopman_params(m.koopman, "koopman", p);
    if (m.conditional) p.add(&m.control, "control.c_mu");
    collect_params(m.dec, "dec", p);
    return p;
}

// CE(1, disc(x0)) + CE(0, disc(x0_hat)) with logits, each term averaged over
// its batch. Optionally returns parameter gradients (fakes are constants).
inline double disc_loss(Discriminator& disc, const Matrix& real, const Matrix& fake,
                        const std::vector<int>* real_labels = nullptr,
                        const std::vector<int>* fake_labels = nullptr,
                        std::vector<Matrix>* grads_out = nullptr) {
    if (real.rows < 1 || fake.rows < 1) throw ConfigError("disc_loss: empty batch");
    const int n_classes = real_labels ? disc.net.embed_dim : 0;
    const Matrix embed_real =
        detail::kdm_embed(real.rows, 0.0, 0, real_labels, n_classes);
    const Matrix embed_fake =
        detail::kdm_embed(fake.rows, 0.0, 0, fake_labels, n_classes);
    MlpCache cache_real, cache_fake;
    const Matrix logit_real = mlp_forward_batch(disc.net, real, embed_real, &cache_real);
    const Matrix logit_fake = mlp_forward_batch(disc.net, fake, embed_fake, &cache_fake);
    double loss = 0.0;
    for (int i = 0; i < real.rows; ++i) loss += detail::softplus(-logit_real(i, 0)) / real.rows;
    for (int i = 0; i < fake.rows; ++i) loss += detail::softplus(logit_fake(i, 0)) / fake.rows;
    if (grads_out) {
        Matrix dreal(real.rows, 1), dfake(fake.rows, 1);
        for (int i = 0; i < real.rows; ++i)
            dreal(i, 0) = (sigmoid(logit_real(i, 0)) - 1.0) / real.rows;
        for (int i = 0; i < fake.rows; ++i)
            dfake(i, 0) = sigmoid(logit_fake(i, 0)) / fake.rows;
        MlpGrads gr = mlp_backward_batch(disc.net, cache_real, dreal);
        MlpGrads gf = mlp_backward_batch(disc.net, cache_fake, dfake);
        grads_out->clear();
        for (size_t l = 0; l < gr.layers.size(); ++l) {
            add_inplace(gr.layers[l].w, gf.layers[l].w);
            add_inplace(gr.layers[l].b, gf.layers[l].b);
            grads_out->push_back(std::move(gr.layers[l].w));
            grads_out->push_back(std::move(gr.layers[l].b));
        }
    }
    return loss;
}

// One fused evaluation of Algorithm 1's losses on a batch, optionally with
// gradients for the model (ordered as kdm_params) and the discriminator.
// Latent noise is drawn from rng only when cfg.noise_std > 0.
inline KdmLosses kdm_step(KdmModel& model, Discriminator* disc, const KdmBatch& batch,
                          const KdmTrainConfig& cfg, Rng& rng,
                          std::vector<Matrix>* model_grads = nullptr,
                          std::vector<Matrix>* disc_grads = nullptr,
                          double* disc_loss_out = nullptr) {
    const int b = batch.x_t.rows;
    if (b < 1) throw ConfigError("kdm_step: empty batch");
    if (batch.x_0.rows != b) throw ShapeError("kdm_step: x_t/x_0 row mismatch");
    const bool adv_active = cfg.use_adv && cfg.lambda_adv > 0.0;
    if (adv_active && !disc) throw ConfigError("kdm_step: discriminator required (lambda_adv > 0)");
    if (model.conditional && batch.labels.size() != static_cast<size_t>(b))
        throw ConfigError("kdm_step: conditional model needs labels");
    const std::vector<int>* labels = model.conditional ? &batch.labels : nullptr;

    const Matrix embed_clean =
        detail::kdm_embed(b, kCleanTimeMarker, model.time_embed_dim, labels, model.n_classes);
    const Matrix embed_noisy =
        detail::kdm_embed(b, kNoisyTimeMarker, model.time_embed_dim, labels, model.n_classes);

    MlpCache cache_c, cache_n;
    const Matrix z0 = mlp_forward_batch(model.enc_clean, batch.x_0, embed_clean, &cache_c);
    const Matrix zt = mlp_forward_batch(model.enc_noisy, batch.x_t, embed_noisy, &cache_n);

    Matrix z0_tilde = z0, zt_tilde = zt;
    if (cfg.noise_std > 0.0) {
        for (auto& x : z0_tilde.data) x += cfg.noise_std * rng.gaussian();
        for (auto& x : zt_tilde.data) x += cfg.noise_std * rng.gaussian();
    }

    FactorizedCache kcache;
    Matrix z_push = koopman_apply_batch(model.koopman, zt_tilde,
                                        model_grads ? &kcache : nullptr);
    Matrix onehot;
    if (model.conditional) {
        onehot = detail::one_hot(batch.labels, model.n_classes);
        add_inplace(z_push, matmul(onehot, model.control));
    }

    KdmLosses losses;
    const double inv_out = 1.0 / (static_cast<double>(b) * 2.0);

    const Matrix& rec_input = cfg.rec_noise_free ? z0 : z0_tilde;
    MlpCache cache_dr, cache_dp;
    Matrix xr, xp;
    if (cfg.use_rec) {
        xr = mlp_forward_batch(model.dec, rec_input, embed_clean, &cache_dr);
        for (size_t i = 0; i < xr.data.size(); ++i) {
            const double r = xr.data[i] - batch.x_0.data[i];
            losses.rec += r * r * inv_out;
        }
    }
    const bool need_pred_decode = cfg.use_pred || adv_active;
    if (need_pred_decode) {
        xp = mlp_forward_batch(model.dec, z_push, embed_clean, &cache_dp);
        if (cfg.use_pred) {
            for (size_t i = 0; i < xp.data.size(); ++i) {
                const double r = xp.data[i] - batch.x_0.data[i];
                losses.pred += r * r * inv_out;
            }
        }
    }
    if (cfg.use_lat) {
        for (size_t i = 0; i < z0.data.size(); ++i) {
            const double r = z0.data[i] - z_push.data[i];
            losses.lat += r * r / b;
        }
    }

    const int n_disc_classes = model.conditional && disc ? disc->net.embed_dim : 0;
    MlpCache cache_disc_fake;
    Matrix logit_fake;
    if (adv_active) {
        const Matrix embed_disc =
            detail::kdm_embed(b, 0.0, 0, labels, n_disc_classes);
        logit_fake = mlp_forward_batch(disc->net, xp, embed_disc, &cache_disc_fake);
        for (int i = 0; i < b; ++i)
            losses.adv_gen += detail::softplus(-logit_fake(i, 0)) / b;
    }

    losses.total = losses.rec + losses.lat + losses.pred + cfg.lambda_adv * losses.adv_gen;

    if (model_grads) {
        MlpGrads g_dec = zero_grads(model.dec);
        Matrix dz_push(b, model.latent_dim);
        Matrix dz0(b, model.latent_dim);
        Matrix dz0_tilde(b, model.latent_dim);

        if (need_pred_decode) {
            Matrix dxp(b, 2);
            if (cfg.use_pred)
                for (size_t i = 0; i < dxp.data.size(); ++i)
                    dxp.data[i] = 2.0 * (xp.data[i] - batch.x_0.data[i]) * inv_out;
            if (adv_active) {
                Matrix dlogit(b, 1);
                for (int i = 0; i < b; ++i)
                    dlogit(i, 0) = cfg.lambda_adv * (sigmoid(logit_fake(i, 0)) - 1.0) / b;
                MlpGrads g_disc_in = mlp_backward_batch(disc->net, cache_disc_fake, dlogit);
                for (int i = 0; i < b; ++i)
                    for (int c = 0; c < 2; ++c) dxp(i, c) += g_disc_in.input(i, c);
            }
            MlpGrads g = mlp_backward_batch(model.dec, cache_dp, dxp);
            for (size_t l = 0; l < g_dec.layers.size(); ++l) {
                add_inplace(g_dec.layers[l].w, g.layers[l].w);
                add_inplace(g_dec.layers[l].b, g.layers[l].b);
            }
            for (int i = 0; i < b; ++i)
                for (int j = 0; j < model.latent_dim; ++j) dz_push(i, j) = g.input(i, j);
        }
        if (cfg.use_rec) {
            Matrix dxr(b, 2);
            for (size_t i = 0; i < dxr.data.size(); ++i)
                dxr.data[i] = 2.0 * (xr.data[i] - batch.x_0.data[i]) * inv_out;
            MlpGrads g = mlp_backward_batch(model.dec, cache_dr, dxr);
            for (size_t l = 0; l < g_dec.layers.size(); ++l) {
                add_inplace(g_dec.layers[l].w, g.layers[l].w);
                add_inplace(g_dec.layers[l].b, g.layers[l].b);
            }
            for (int i = 0; i < b; ++i)
                for (int j = 0; j < model.latent_dim; ++j)
                    (cfg.rec_noise_free ? dz0 : dz0_tilde)(i, j) += g.input(i, j);
        }
        if (cfg.use_lat) {
            const double s = 2.0 / b;
            for (size_t i = 0; i < z0.data.size(); ++i) {
                const double r = z0.data[i] - z_push.data[i];
                dz0.data[i] += s * r;
                dz_push.data[i] -= s * r;
            }
        }

        Matrix control_grad;
        if (model.conditional) control_grad = matmul_tn(onehot, dz_push);

        Matrix dzt_tilde;
        std::vector<Matrix> koopman_grads;
        if (const auto* dense = std::get_if<DenseKoopman>(&model.koopman)) {
            koopman_grads.push_back(matmul_tn(dz_push, zt_tilde));
            dzt_tilde = matmul(dz_push, dense->c);
        } else {
            const auto& f = std::get<FactorizedKoopman>(model.koopman);
            FactorizedGrads fg = factorized_backward(f, zt_tilde, kcache, dz_push);
            koopman_grads.push_back(std::move(fg.p_re));
            koopman_grads.push_back(std::move(fg.p_im));
            koopman_grads.push_back(std::move(fg.pinv_re));
            koopman_grads.push_back(std::move(fg.pinv_im));
            koopman_grads.push_back(std::move(fg.nu));
            koopman_grads.push_back(std::move(fg.theta));
            dzt_tilde = std::move(fg.input);
        }

        // Additive noise passes gradients through unchanged.
        add_inplace(dz0, dz0_tilde);
        MlpGrads g_enc_clean = mlp_backward_batch(model.enc_clean, cache_c, dz0);
        MlpGrads g_enc_noisy = mlp_backward_batch(model.enc_noisy, cache_n, dzt_tilde);

        model_grads->clear();
        for (auto& l : g_enc_clean.layers) {
            model_grads->push_back(std::move(l.w));
            model_grads->push_back(std::move(l.b));
        }
        for (auto& l : g_enc_noisy.layers) {
            model_grads->push_back(std::move(l.w));
            model_grads->push_back(std::move(l.b));
        }
        for (auto& k : koopman_grads) model_grads->push_back(std::move(k));
        if (model.conditional) model_grads->push_back(std::move(control_grad));
        for (auto& l : g_dec.layers) {
            model_grads->push_back(std::move(l.w));
            model_grads->push_back(std::move(l.b));
        }
    }

    if (disc_grads || disc_loss_out) {
        if (!adv_active) {
            if (disc_loss_out) *disc_loss_out = 0.0;
            if (disc_grads) disc_grads->clear();
        } else {
            const std::vector<int>* dl = model.conditional ? &batch.labels : nullptr;
            const double loss =
                disc_loss(*disc, batch.x_0, xp, dl, dl, disc_grads);
            if (disc_loss_out) *disc_loss_out = loss;
        }
    }
    return losses;
}

// Forward-only losses of Algorithm 1 on one batch.
inline KdmLosses kdm_losses(KdmModel& model, const KdmBatch& batch, Discriminator* disc,
                            const KdmTrainConfig& cfg, Rng& rng) {
    return kdm_step(model, disc, batch, cfg, rng);
}

// Algorithm 2: one forward pass per network, no noise injection, no RNG.
inline Matrix sample_one_step_batch(const KdmModel& model, const Matrix& x_t,
                                    const std::vector<int>* labels = nullptr) {
    if (model.conditional && (!labels || labels->size() != static_cast<size_t>(x_t.rows)))
        throw ConfigError("sample_one_step: conditional model needs a label per sample");
    if (!model.conditional && labels)
        throw ConfigError("sample_one_step: unconditional model takes no label");
    const Matrix embed_noisy = detail::kdm_embed(x_t.rows, kNoisyTimeMarker,
                                                 model.time_embed_dim, labels, model.n_classes);
    const Matrix embed_dec = detail::kdm_embed(x_t.rows, kCleanTimeMarker, model.time_embed_dim,
                                               labels, model.n_classes);
    const Matrix zt = mlp_forward_batch(model.enc_noisy, x_t, embed_noisy);
    Matrix z_push = koopman_apply_batch(model.koopman, zt);
    if (model.conditional)
        add_inplace(z_push, matmul(detail::one_hot(*labels, model.n_classes), model.control));
    return mlp_forward_batch(model.dec, z_push, embed_dec);
}

inline Point sample_one_step(const KdmModel& model, const Point& x_t,
                             std::optional<int> label = std::nullopt) {
    Matrix x(1, 2);
    x(0, 0) = x_t[0];
    x(0, 1) = x_t[1];
    std::vector<int> labels;
    if (label) labels.push_back(*label);
    const Matrix y = sample_one_step_batch(model, x, label ? &labels : nullptr);
    return {y(0, 0), y(0, 1)};
}

struct KdmLogRow {
    long iteration;
    double rec, lat, pred, adv_gen, disc;
};

struct KdmTrainResult {
    KdmModel model;
    Discriminator disc;
    std::vector<KdmLogRow> log;
};

// Per-coordinate mean squared error of the one-step prediction against the
// teacher's recorded outputs. Outside-flagged pairs are skipped when
// conditional.
inline double eval_pred_mse(const KdmModel& model, const PairSet& set, size_t chunk = 4096) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < set.pairs.size(); ++i)
        if (!model.conditional || set.pairs[i].label) idx.push_back(i);
    if (idx.empty()) throw ConfigError("eval_pred_mse: no usable pairs");
    double se = 0.0;
    for (size_t start = 0; start < idx.size(); start += chunk) {
        const size_t count = std::min(chunk, idx.size() - start);
        Matrix xt(static_cast<int>(count), 2);
        std::vector<int> labels(model.conditional ? count : 0);
        for (size_t i = 0; i < count; ++i) {
            const NoisePair& p = set.pairs[idx[start + i]];
            xt(static_cast<int>(i), 0) = p.x_t[0];
            xt(static_cast<int>(i), 1) = p.x_t[1];
            if (model.conditional) labels[i] = *p.label;
        }
        const Matrix pred =
            sample_one_step_batch(model, xt, model.conditional ? &labels : nullptr);
        for (size_t i = 0; i < count; ++i) {
            const NoisePair& p = set.pairs[idx[start + i]];
            for (int c = 0; c < 2; ++c) {
                const double r = pred(static_cast<int>(i), c) - p.x_0[c];
                se += r * r;
            }
        }
    }
    return se / (static_cast<double>(idx.size()) * 2.0);
}

// Algorithm 1 training loop: one Adam step on the model and one on the
// discriminator per iteration, separate optimizers, fakes as constants.
inline KdmTrainResult train_kdm(const PairSet& pairs, const KdmTrainConfig& cfg, Rng& rng) {
    cfg.validate();
    if (pairs.pairs.empty()) throw ConfigError("train_kdm: empty pair set");
    if (cfg.conditional && !pairs.meta.conditional)
        throw ConfigError("train_kdm: conditional training needs a labeled pair set");
    std::vector<size_t> usable;
    for (size_t i = 0; i < pairs.pairs.size(); ++i)
        if (!cfg.conditional || pairs.pairs[i].label) usable.push_back(i);
    if (usable.empty()) throw ConfigError("train_kdm: no usable pairs");
    const int n_classes = cfg.conditional ? pairs.meta.data_spec.occupied_cells() : 0;

    KdmTrainResult result;
    result.model = make_kdm_model(cfg, n_classes, rng);
    result.disc = make_discriminator(cfg, n_classes, rng);
    const bool adv_active = cfg.use_adv && cfg.lambda_adv > 0.0;

    ParamRefs mp = kdm_params(result.model);
    AdamState mopt = make_adam_state(mp.tensors);
    ParamRefs dp;
    collect_params(result.disc.net, "disc", dp);
    AdamState dopt = make_adam_state(dp.tensors);

    std::vector<Matrix> mg, dg;
    for (long it = 0; it < cfg.iterations; ++it) {
        KdmBatch batch;
        batch.x_t = Matrix(cfg.batch, 2);
        batch.x_0 = Matrix(cfg.batch, 2);
        if (cfg.conditional) batch.labels.resize(cfg.batch);
        for (int i = 0; i < cfg.batch; ++i) {
            const NoisePair& p = pairs.pairs[usable[rng.uniform_int(usable.size())]];
            batch.x_t(i, 0) = p.x_t[0];
            batch.x_t(i, 1) = p.x_t[1];
            batch.x_0(i, 0) = p.x_0[0];
            batch.x_0(i, 1) = p.x_0[1];
            if (cfg.conditional) batch.labels[static_cast<size_t>(i)] = *p.label;
        }
        double dloss = 0.0;
        const KdmLosses losses =
            kdm_step(result.model, adv_active ? &result.disc : nullptr, batch, cfg, rng, &mg,
                     adv_active ? &dg : nullptr, &dloss);
        if (!std::isfinite(losses.total)) throw TrainingError("kdm training diverged", it);
        std::vector<Matrix*> mgp;
        mgp.reserve(mg.size());
        for (auto& g : mg) mgp.push_back(&g);
        adam_step(mp.tensors, mgp, mopt, cfg.lr, &mp.names);
        if (adv_active) {
            std::vector<Matrix*> dgp;
            dgp.reserve(dg.size());
            for (auto& g : dg) dgp.push_back(&g);
            adam_step(dp.tensors, dgp, dopt, cfg.lr, &dp.names);
        }
        if (it % cfg.log_every == 0 || it == cfg.iterations - 1)
            result.log.push_back({it, losses.rec, losses.lat, losses.pred, losses.adv_gen, dloss});
    }
    return result;
}

}  // namespace kdm
