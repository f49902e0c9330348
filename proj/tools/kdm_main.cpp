#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kdm/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "run configuration file (key=value lines)")
        ->required();
    cmd->add_option("--seed", args.seed, "override the seed of this command's config section");
    cmd->add_option("--out", args.out, "override the primary output path");
}

kdm::RunConfig load(const CommonArgs& args) { return kdm::load_config(args.config_path); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Koopman distillation of 2D diffusion/flow teachers"};
    app.require_subcommand(1);

    CommonArgs train_teacher_args, gen_pairs_args, train_kdm_args, sample_args, eval_args,
        theory_args;

    CLI::App* c_train_teacher =
        app.add_subcommand("train-teacher", "train the EDM or FM teacher on the checkerboard");
    add_common(c_train_teacher, train_teacher_args);

    CLI::App* c_gen_pairs =
        app.add_subcommand("gen-pairs", "harvest noise->data pairs by reverse-ODE sampling");
    add_common(c_gen_pairs, gen_pairs_args);

    CLI::App* c_train_kdm = app.add_subcommand("train-kdm", "distill the one-step student");
    add_common(c_train_kdm, train_kdm_args);

    CLI::App* c_sample = app.add_subcommand("sample", "write samples as CSV");
    add_common(c_sample, sample_args);
    int sample_count = 1000;
    std::string sampler = "student";
    std::optional<int> sample_label;
    int sample_nfe = 0;
    c_sample->add_option("--count", sample_count, "number of samples");
    c_sample->add_option("--sampler", sampler, "teacher (multi-step) or student (one-step)")
        ->check(CLI::IsMember({"teacher", "student"}));
    c_sample->add_option("--label", sample_label, "cell label for conditional students");
    c_sample->add_option("--nfe", sample_nfe, "override pairs.nfe for teacher sampling");

    CLI::App* c_eval = app.add_subcommand("eval", "structure/quality/outlier/sweep reports");
    add_common(c_eval, eval_args);

    CLI::App* c_theory =
        app.add_subcommand("verify-theory", "EDMD residual sweep and proximity verification");
    add_common(c_theory, theory_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_train_teacher->parsed()) {
            kdm::RunConfig cfg = load(train_teacher_args);
            if (train_teacher_args.seed) cfg.teacher_seed = *train_teacher_args.seed;
            std::cout << kdm::cmd_train_teacher(cfg, train_teacher_args.out) << "\n";
        } else if (c_gen_pairs->parsed()) {
            kdm::RunConfig cfg = load(gen_pairs_args);
            if (gen_pairs_args.seed) cfg.pairs_seed = *gen_pairs_args.seed;
            std::cout << kdm::cmd_gen_pairs(cfg, gen_pairs_args.out) << "\n";
        } else if (c_train_kdm->parsed()) {
            kdm::RunConfig cfg = load(train_kdm_args);
            if (train_kdm_args.seed) cfg.kdm_seed = *train_kdm_args.seed;
            std::cout << kdm::cmd_train_kdm(cfg, train_kdm_args.out) << "\n";
        } else if (c_sample->parsed()) {
            kdm::RunConfig cfg = load(sample_args);
            if (sample_nfe > 0) cfg.pairs_nfe = sample_nfe;
            const uint64_t seed = sample_args.seed.value_or(cfg.eval_seed);
            const auto which = sampler == "teacher" ? kdm::SamplerChoice::teacher
                                                    : kdm::SamplerChoice::student;
            std::cout << kdm::cmd_sample(cfg, sample_count, seed, sample_label, which,
                                         sample_args.out)
                      << "\n";
        } else if (c_eval->parsed()) {
            kdm::RunConfig cfg = load(eval_args);
            if (eval_args.seed) cfg.eval_seed = *eval_args.seed;
            std::cout << kdm::cmd_eval(cfg) << "\n";
        } else if (c_theory->parsed()) {
            kdm::RunConfig cfg = load(theory_args);
            if (theory_args.seed) cfg.theory_seed = *theory_args.seed;
            std::cout << kdm::cmd_verify_theory(cfg) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
