#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "kdm/config.hpp"
#include "kdm/metrics.hpp"
#include "kdm/model_io.hpp"
#include "kdm/outliers.hpp"
#include "kdm/perturb.hpp"
#include "kdm/student.hpp"
#include "kdm/svg.hpp"
#include "kdm/teacher.hpp"
#include "kdm/theory.hpp"

namespace kdm {

// --- artifact naming --------------------------------------------------------
//
// Filenames are content-addressed: seed plus a hash of every config section
// that influences the artifact. Downstream commands recompute the same name,
// so a stale or missing input is detected by path.

inline std::string resolve_workdir(const RunConfig& cfg) {
    const char* env = std::getenv("KDM_WORKDIR");
    return env && *env ? std::string(env) : cfg.paths_workdir;
}

namespace detail {
inline std::string subdir(const RunConfig& cfg, const std::string& name) {
    const std::filesystem::path p = std::filesystem::path(resolve_workdir(cfg)) / name;
    std::filesystem::create_directories(p);
    return p.string();
}
}  // namespace detail

inline std::string teacher_ckpt_path(const RunConfig& cfg) {
    return detail::subdir(cfg, "teacher") + "/teacher_" + cfg.teacher_kind + "_s" +
           std::to_string(cfg.teacher_seed) + "_" + config_hash(cfg, {"data.", "teacher."}) +
           ".kdmc";
}

inline std::string pairs_path(const RunConfig& cfg) {
    return detail::subdir(cfg, "pairs") + "/pairs_s" + std::to_string(cfg.pairs_seed) + "_" +
           config_hash(cfg, {"data.", "teacher.", "pairs."}) + ".kdmp";
}

inline std::string kdm_ckpt_path(const RunConfig& cfg) {
    return detail::subdir(cfg, "kdm") + "/kdm_s" + std::to_string(cfg.kdm_seed) + "_" +
           config_hash(cfg, {"data.", "teacher.", "pairs.", "kdm."}) + ".kdmc";
}

inline void write_effective_config(const RunConfig& cfg, const std::string& artifact_path) {
    std::ofstream f(artifact_path + ".cfg");
    if (!f) throw IoError("cannot open for writing: " + artifact_path + ".cfg");
    f << config_serialize(cfg);
}

// --- config adapters --------------------------------------------------------

inline CheckerboardSpec data_spec_from(const RunConfig& cfg) {
    CheckerboardSpec spec;
    spec.grid = cfg.data_grid;
    spec.extent = cfg.data_extent;
    spec.validate();
    return spec;
}

inline TeacherConfig teacher_config_from(const RunConfig& cfg) {
    TeacherConfig tc;
    tc.iterations = cfg.teacher_iterations;
    tc.batch = cfg.teacher_batch;
    tc.lr = cfg.teacher_lr;
    tc.hidden = parse_int_list("teacher.hidden", cfg.teacher_hidden);
    tc.sigma_min = cfg.teacher_sigma_min;
    tc.sigma_max = cfg.teacher_sigma_max;
    tc.rho = cfg.teacher_rho;
    return tc;
}

inline KdmTrainConfig kdm_config_from(const RunConfig& cfg) {
    KdmTrainConfig kc;
    kc.iterations = cfg.kdm_iterations;
    kc.batch = cfg.kdm_batch;
    kc.lr = cfg.kdm_lr;
    kc.lambda_adv = cfg.kdm_lambda_adv;
    kc.noise_std = cfg.kdm_noise_std;
    kc.latent_dim = cfg.kdm_latent_dim;
    kc.conditional = cfg.kdm_conditional;
    if (cfg.kdm_operator != "dense" && cfg.kdm_operator != "factorized")
        throw ConfigError("kdm.operator must be dense or factorized");
    kc.factorized = cfg.kdm_operator == "factorized";
    kc.use_rec = cfg.kdm_use_rec;
    kc.use_lat = cfg.kdm_use_lat;
    kc.use_pred = cfg.kdm_use_pred;
    kc.use_adv = cfg.kdm_use_adv;
    kc.rec_noise_free = cfg.kdm_rec_noise_free;
    kc.enc_hidden = parse_int_list("kdm.enc_hidden", cfg.kdm_enc_hidden);
    kc.dec_hidden = parse_int_list("kdm.dec_hidden", cfg.kdm_dec_hidden);
    kc.disc_hidden = parse_int_list("kdm.disc_hidden", cfg.kdm_disc_hidden);
    kc.seed = cfg.kdm_seed;
    return kc;
}

// --- commands ---------------------------------------------------------------

inline std::string cmd_train_teacher(const RunConfig& cfg,
                                     const std::optional<std::string>& out = std::nullopt) {
    const CheckerboardSpec spec = data_spec_from(cfg);
    const TeacherConfig tc = teacher_config_from(cfg);
    Rng rng(cfg.teacher_seed);
    TeacherTrainResult res;
    if (cfg.teacher_kind == "edm") {
        res = train_teacher_edm(spec, tc, rng);
    } else if (cfg.teacher_kind == "fm") {
        res = train_teacher_fm(spec, tc, rng);
    } else {
        throw ConfigError("teacher.kind must be edm or fm");
    }
    const std::string path = out.value_or(teacher_ckpt_path(cfg));
    save_checkpoint(teacher_to_checkpoint(res.teacher), path);
    write_effective_config(cfg, path);
    std::ofstream log(path + ".log.csv");
    log << "iteration,loss\n";
    for (const auto& row : res.log) log << row.iteration << ',' << row.loss << '\n';
    return path;
}

inline std::string cmd_gen_pairs(const RunConfig& cfg,
                                 const std::optional<std::string>& out = std::nullopt) {
    const std::string teacher_path = teacher_ckpt_path(cfg);
    if (!std::filesystem::exists(teacher_path)) throw MissingInputError(teacher_path);
    const Teacher teacher = teacher_from_checkpoint(load_checkpoint(teacher_path));
    const PairSet set = generate_pairs(teacher, static_cast<size_t>(cfg.pairs_n), cfg.pairs_nfe,
                                       Rng(cfg.pairs_seed), cfg.pairs_conditional);
    const std::string path = out.value_or(pairs_path(cfg));
    save_pairs(set, path);
    write_effective_config(cfg, path);
    export_pairs_csv(set, path + ".csv");
    return path;
}

inline std::string cmd_train_kdm(const RunConfig& cfg,
                                 const std::optional<std::string>& out = std::nullopt) {
    const std::string pp = pairs_path(cfg);
    if (!std::filesystem::exists(pp)) throw MissingInputError(pp);
    const PairSet set = load_pairs(pp);
    const KdmTrainConfig kc = kdm_config_from(cfg);
    if (kc.conditional && !set.meta.conditional)
        throw ConfigError("kdm.conditional requires pairs.conditional=true");
    auto [train, val] = split(set, cfg.kdm_train_fraction, cfg.kdm_seed ^ 0x5EEDULL);
    Rng rng(cfg.kdm_seed);
    KdmTrainResult res = train_kdm(train, kc, rng);
    const std::string path = out.value_or(kdm_ckpt_path(cfg));
    save_checkpoint(kdm_to_checkpoint(res.model, &res.disc), path);
    write_effective_config(cfg, path);
    std::ofstream log(path + ".log.csv");
    log << "iteration,L_rec,L_lat,L_pred,L_adv_gen,L_disc\n";
    for (const auto& row : res.log)
        log << row.iteration << ',' << row.rec << ',' << row.lat << ',' << row.pred << ','
            << row.adv_gen << ',' << row.disc << '\n';
    std::ofstream summary(path + ".val.txt");
    summary << "val_pred_mse=" << eval_pred_mse(res.model, val) << "\n";
    return path;
}

enum class SamplerChoice { teacher, student };

inline std::string cmd_sample(const RunConfig& cfg, int count, uint64_t seed,
                              std::optional<int> label, SamplerChoice which,
                              const std::optional<std::string>& out = std::nullopt) {
    if (count < 0) throw ConfigError("sample: count must be >= 0");
    const std::string path =
        out.value_or(detail::subdir(cfg, "eval") + "/samples_" +
                     (which == SamplerChoice::teacher ? std::string("teacher") : "student") +
                     "_s" + std::to_string(seed) + "_" +
                     config_hash(cfg, {"data.", "teacher.", "pairs.", "kdm."}) + ".csv");
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "x,y,label\n";
    f.precision(9);
    if (count == 0) return path;

    Rng rng(seed);
    if (which == SamplerChoice::teacher) {
        const std::string tp = teacher_ckpt_path(cfg);
        if (!std::filesystem::exists(tp)) throw MissingInputError(tp);
        const Teacher teacher = teacher_from_checkpoint(load_checkpoint(tp));
        Matrix xt(count, 2);
        for (int i = 0; i < count; ++i) {
            Rng sub = rng.substream(static_cast<uint64_t>(i));
            xt(i, 0) = teacher.prior_std() * sub.gaussian();
            xt(i, 1) = teacher.prior_std() * sub.gaussian();
        }
        const Matrix x0 = sample_ode_batch(teacher, xt, cfg.pairs_nfe);
        for (int i = 0; i < count; ++i) f << x0(i, 0) << ',' << x0(i, 1) << ",\n";
        return path;
    }
    const std::string kp = kdm_ckpt_path(cfg);
    if (!std::filesystem::exists(kp)) throw MissingInputError(kp);
    const KdmModel model = kdm_from_checkpoint(load_checkpoint(kp));
    if (model.conditional && !label)
        throw ConfigError("sample: conditional student needs --label");
    if (!model.conditional && label)
        throw ConfigError("sample: unconditional student takes no --label");
    const double prior = cfg.teacher_kind == "edm" ? cfg.teacher_sigma_max : 1.0;
    Matrix xt(count, 2);
    for (int i = 0; i < count; ++i) {
        Rng sub = rng.substream(static_cast<uint64_t>(i));
        xt(i, 0) = prior * sub.gaussian();
        xt(i, 1) = prior * sub.gaussian();
    }
    std::vector<int> labels;
    if (model.conditional) labels.assign(static_cast<size_t>(count), *label);
    const Matrix x0 = sample_one_step_batch(model, xt, model.conditional ? &labels : nullptr);
    for (int i = 0; i < count; ++i) {
        f << x0(i, 0) << ',' << x0(i, 1) << ',';
        if (label) f << *label;
        f << '\n';
    }
    return path;
}

// All quantitative reports plus the scatter/sweep figures.
inline std::string cmd_eval(const RunConfig& cfg) {
    const std::string tp = teacher_ckpt_path(cfg);
    if (!std::filesystem::exists(tp)) throw MissingInputError(tp);
    const std::string pp = pairs_path(cfg);
    if (!std::filesystem::exists(pp)) throw MissingInputError(pp);
    const std::string kp = kdm_ckpt_path(cfg);
    if (!std::filesystem::exists(kp)) throw MissingInputError(kp);

    const Teacher teacher = teacher_from_checkpoint(load_checkpoint(tp));
    const PairSet pairs = load_pairs(pp);
    const KdmModel model = kdm_from_checkpoint(load_checkpoint(kp));
    const CheckerboardSpec spec = data_spec_from(cfg);
    const std::string dir = detail::subdir(cfg, "eval");
    const std::string tag = config_hash(cfg, {});
    Rng rng(cfg.eval_seed);

    // Emergent structure: noise-space purity plus the Fig.-2-style scatters.
    const StructureReport structure = knn_purity(pairs, cfg.eval_k);
    {
        std::ofstream f(dir + "/structure_" + tag + ".csv");
        f << "k,purity,chance,points\n"
          << structure.k << ',' << structure.purity << ',' << structure.chance << ','
          << structure.points_used << '\n';
        std::vector<Point> xt, x0;
        std::vector<int> color;
        for (const auto& p : pairs.pairs) {
            const int cell = cell_of(spec, p.x_0);
            xt.push_back(p.x_t);
            x0.push_back(p.x_0);
            color.push_back(cell);
        }
        SvgScatterOptions noise_opts;
        noise_opts.extent = teacher.prior_std() * 3.0;
        noise_opts.title = "noise space colored by destination cell";
        svg_scatter(dir + "/noise_space_" + tag + ".svg", xt, color, noise_opts);
        SvgScatterOptions data_opts;
        data_opts.extent = spec.extent * 1.25;
        data_opts.grid = &spec;
        data_opts.title = "teacher outputs";
        svg_scatter(dir + "/data_space_" + tag + ".svg", x0, color, data_opts);
    }

    // Sample quality: energy distance to the true distribution.
    const int n = cfg.eval_samples;
    LabeledPoints truth = sample_checkerboard(spec, static_cast<size_t>(n), rng);
    Matrix xt(n, 2);
    for (int i = 0; i < n; ++i) {
        Rng sub = Rng(cfg.eval_seed ^ 0xA5A5ULL).substream(static_cast<uint64_t>(i));
        xt(i, 0) = teacher.prior_std() * sub.gaussian();
        xt(i, 1) = teacher.prior_std() * sub.gaussian();
    }
    const Matrix teacher_samples = sample_ode_batch(teacher, xt, cfg.pairs_nfe);
    std::vector<int> student_labels;
    if (model.conditional)
        for (int i = 0; i < n; ++i)
            student_labels.push_back(static_cast<int>(rng.uniform_int(spec.occupied_cells())));
    const Matrix student_samples =
        sample_one_step_batch(model, xt, model.conditional ? &student_labels : nullptr);
    auto to_points = [](const Matrix& m) {
        std::vector<Point> out;
        out.reserve(m.rows);
        for (int i = 0; i < m.rows; ++i) out.push_back({m(i, 0), m(i, 1)});
        return out;
    };
    const std::vector<Point> teacher_pts = to_points(teacher_samples);
    const std::vector<Point> student_pts = to_points(student_samples);
    {
        const double ed_teacher = energy_distance(truth.points, teacher_pts);
        const double ed_student = energy_distance(truth.points, student_pts);
        std::ofstream f(dir + "/sample_quality_" + tag + ".csv");
        f << "set,energy_distance\nteacher," << ed_teacher << "\nstudent," << ed_student << '\n';
        std::vector<int> scolor;
        for (const Point& p : student_pts) scolor.push_back(cell_of(spec, p));
        SvgScatterOptions sopts;
        sopts.extent = spec.extent * 1.25;
        sopts.grid = &spec;
        sopts.title = "student one-step samples";
        svg_scatter(dir + "/student_samples_" + tag + ".svg", student_pts, scolor, sopts);
    }

    // Teacher-student agreement on fresh noise.
    {
        const AgreementReport agr = agreement_maps(
            [&teacher, &cfg](const Matrix& x) { return sample_ode_batch(teacher, x, cfg.pairs_nfe); },
            [&model, &spec, &cfg](const Matrix& x) {
                std::vector<int> labels;
                if (model.conditional) {
                    Rng lr(cfg.eval_seed ^ 0x1ABE1ULL);
                    for (int i = 0; i < x.rows; ++i)
                        labels.push_back(static_cast<int>(lr.uniform_int(spec.occupied_cells())));
                }
                return sample_one_step_batch(model, x, model.conditional ? &labels : nullptr);
            },
            static_cast<size_t>(cfg.eval_samples), cfg.eval_seed ^ 0xA62EEULL,
            teacher.prior_std());
        std::ofstream f(dir + "/agreement_" + tag + ".csv");
        f << "paired_mse,permuted_mse,n\n"
          << agr.paired_mse << ',' << agr.permuted_mse << ',' << agr.n << '\n';
    }

    // Outlier provenance on the harvest.
    {
        std::vector<Point> x0;
        for (const auto& p : pairs.pairs) x0.push_back(p.x_0);
        const OutlierReport rep = detect_outliers(x0, cfg.eval_eps, cfg.eval_min_pts);
        const ProvenanceStats st = outlier_provenance(pairs, rep, teacher.prior_std());
        std::ofstream f(dir + "/outliers_" + tag + ".csv");
        f << "outliers,inliers,out_mean_norm,in_mean_norm,out_median_norm,in_median_norm,"
             "out_mean_bdist,in_mean_bdist,empty\n";
        f << st.n_out << ',' << st.n_in << ',' << st.out_mean_norm << ',' << st.in_mean_norm
          << ',' << st.out_median_norm << ',' << st.in_median_norm << ',' << st.out_mean_bdist
          << ',' << st.in_mean_bdist << ',' << (st.empty ? 1 : 0) << '\n';
        std::vector<int> ocolor;
        for (size_t i = 0; i < x0.size(); ++i)
            ocolor.push_back(rep.outlier_mask[i] ? -1 : cell_of(spec, x0[i]));
        SvgScatterOptions oopts;
        oopts.extent = spec.extent * 1.25;
        oopts.grid = &spec;
        oopts.title = "harvest outliers (black)";
        svg_scatter(dir + "/outliers_" + tag + ".svg", x0, ocolor, oopts);
    }

    // Perturbation sweep (locality of the learned maps).
    {
        const std::vector<double> sigmas = parse_double_list("eval.sigmas", cfg.eval_sigmas);
        Rng sweep_rng(cfg.eval_seed ^ 0x51EE9ULL);
        const std::vector<double> student_disp = sweep_mean_displacement(
            [&model, &spec, &cfg](const Point& p) {
                Matrix x(1, 2);
                x(0, 0) = p[0];
                x(0, 1) = p[1];
                std::vector<int> labels{0};
                const Matrix y =
                    sample_one_step_batch(model, x, model.conditional ? &labels : nullptr);
                return Point{y(0, 0), y(0, 1)};
            },
            sigmas, cfg.eval_sweep_points, sweep_rng, teacher.prior_std());
        Rng sweep_rng2(cfg.eval_seed ^ 0x51EE9ULL);
        const std::vector<double> teacher_disp = sweep_mean_displacement(
            [&teacher, &cfg](const Point& p) {
                Matrix x(1, 2);
                x(0, 0) = p[0];
                x(0, 1) = p[1];
                const Matrix y = sample_ode_batch(teacher, x, cfg.pairs_nfe);
                return Point{y(0, 0), y(0, 1)};
            },
            sigmas, cfg.eval_sweep_points, sweep_rng2, teacher.prior_std());
        std::ofstream f(dir + "/sweep_" + tag + ".csv");
        f << "sigma,teacher_disp,student_disp\n";
        for (size_t s = 0; s < sigmas.size(); ++s)
            f << sigmas[s] << ',' << teacher_disp[s] << ',' << student_disp[s] << '\n';
        svg_line_chart(dir + "/sweep_" + tag + ".svg", sigmas, student_disp,
                       "student mean displacement vs sigma");
    }
    return dir;
}

inline std::string cmd_verify_theory(const RunConfig& cfg) {
    const std::string tp = teacher_ckpt_path(cfg);
    if (!std::filesystem::exists(tp)) throw MissingInputError(tp);
    const Teacher teacher = teacher_from_checkpoint(load_checkpoint(tp));
    const std::string dir = detail::subdir(cfg, "theory");
    const std::string tag = config_hash(cfg, {});
    Rng rng(cfg.theory_seed);

    // Theorem 1: EDMD residuals of the teacher end map over monomial degrees.
    // The map is evaluated through its prior, reparameterized so draws follow
    // the theorem's N(0, I).
    const double prior = teacher.prior_std();
    const BatchMapFn end_map_prior = [&teacher, &cfg, prior](const Matrix& u) {
        Matrix x = u;
        scale_inplace(x, prior);
        return sample_ode_batch(teacher, x, cfg.pairs_nfe);
    };
    EdmdOptions eopts;
    eopts.ridge = cfg.theory_ridge;
    const std::vector<EdmdReport> sweep =
        edmd_sweep(end_map_prior, 2, cfg.theory_degrees, cfg.theory_samples, rng, eopts);
    {
        std::ofstream f(dir + "/edmd_" + tag + ".csv");
        f << "degree,lifted_dim,full_residual,state_residual,undersampled\n";
        for (const auto& rep : sweep)
            f << rep.degree << ',' << rep.lifted_dim << ',' << rep.full_residual << ','
              << rep.state_residual << ',' << (rep.undersampled ? 1 : 0) << '\n';
    }

    // Theorem 2: proximity chain with xi = id (degree-1 lift) on raw prior
    // coordinates.
    const BatchMapFn end_map = [&teacher, &cfg](const Matrix& x) {
        return sample_ode_batch(teacher, x, cfg.pairs_nfe);
    };
    ProximityOptions popts;
    popts.prior_std = prior;
    popts.ridge = cfg.theory_ridge;
    const ProximityReport prox =
        verify_semantic_proximity(end_map, make_monomial_basis(2, 1),
                                  static_cast<size_t>(cfg.theory_pairs), cfg.theory_radius, rng,
                                  popts);
    {
        std::ofstream f(dir + "/proximity_" + tag + ".txt");
        f << "semantic proximity verification (xi = id)\n";
        f << "pairs evaluated:    " << prox.pair_count << "\n";
        f << "lipschitz estimate: " << prox.lipschitz_hat << "\n";
        f << "operator norm:      " << prox.operator_norm
          << (prox.norm_converged ? "" : " (power iteration not converged)") << "\n";
        f << "violation rate:     " << prox.violation_rate << "\n";
        f << "worst lhs/rhs:      " << prox.worst_ratio << "\n";
        f << "degenerate skipped: " << prox.degenerate_skipped << "\n";
    }
    write_effective_config(cfg, dir + "/theory_" + tag);
    return dir;
}

}  // namespace kdm
