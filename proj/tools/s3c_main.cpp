// Command-line front door: generate synthetic benchmark data, run full
// base + incremental experiments, re-evaluate checkpoints, and compare runs.
//
// Exit codes: 0 success, 2 bad flags or config, 3 I/O failure, 4 training
// abort, 5 missing metrics.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "s3c/dataset.hpp"
#include "s3c/errors.hpp"
#include "s3c/evaluation.hpp"
#include "s3c/experiment.hpp"
#include "s3c/numerics.hpp"
#include "s3c/protocol.hpp"

namespace {

constexpr int kExitBadFlags = 2;
constexpr int kExitIoFailure = 3;
constexpr int kExitTrainingAbort = 4;
constexpr int kExitMissingMetrics = 5;

struct GenDataArgs {
    s3c::SyntheticSpec spec;
    std::uint64_t seed = 1;
    std::string out;
};

int run_gen_data(const GenDataArgs& args) {
    try {
        s3c::Rng rng(args.seed);
        s3c::GeneratedData generated = s3c::generate_synthetic(args.spec, rng);
        s3c::save_dataset(generated.data, args.out);
        std::printf("wrote %s: %d classes, %zu samples (%d train + %d test per class), "
                    "%dx%dx%d pixels, embedding dim %d\n",
                    args.out.c_str(), generated.data.class_count, generated.data.samples.size(),
                    generated.train_per_class, generated.test_per_class, generated.data.channels,
                    generated.data.height, generated.data.width,
                    static_cast<int>(generated.data.embeddings.dimension()));
        return 0;
    } catch (const s3c::ConfigError& error) {
        std::fprintf(stderr, "error: %s\n", error.what());
        return kExitBadFlags;
    } catch (const std::exception& error) {
        std::fprintf(stderr, "error: %s\n", error.what());
        return kExitIoFailure;
    }
}

struct RunArgs {
    std::string dataset_path;
    std::string out_dir;
    std::string config_path;
    std::string variant_text;
    std::string ablation_text = "s3c";
    std::uint64_t seed = 0;
    bool seed_given = false;

    // protocol overrides, applied only when the flag was passed
    int base_classes = -1;
    int tasks = -1;
    int ways = -1;
    int shots = -1;
    std::vector<int> shot_list;
    int train_per_class = -1;
    int lb_base_classes = -1;

    s3c::TrainConfig train;
    std::vector<int> hidden_dims = {64};
    int feature_dim = 32;
};

int run_run(const RunArgs& args) {
    s3c::RunOptions options;
    try {
        if (!args.config_path.empty()) {
            options.protocol = s3c::parse_protocol_config_file(args.config_path);
        }
        if (args.base_classes >= 0) options.protocol.base_classes = args.base_classes;
        if (args.tasks >= 0) options.protocol.tasks = args.tasks;
        if (args.ways >= 0) options.protocol.ways = args.ways;
        if (args.shots >= 0) options.protocol.shots = args.shots;
        if (!args.shot_list.empty()) options.protocol.shot_list = args.shot_list;
        if (args.train_per_class >= 0) options.protocol.train_per_class = args.train_per_class;
        if (args.lb_base_classes >= 0) options.protocol.lb_base_classes = args.lb_base_classes;
        if (!args.variant_text.empty()) {
            options.protocol.variant = s3c::parse_variant(args.variant_text);
        }
        if (args.seed_given) options.protocol.seed = args.seed;
        options.protocol.validate();

        options.dataset_path = args.dataset_path;
        options.run_dir = args.out_dir;
        options.train = args.train;
        options.train.validate();
        options.hidden_dims = args.hidden_dims;
        options.feature_dim = args.feature_dim;
        options.ablation = s3c::parse_ablation(args.ablation_text);
    } catch (const std::exception& error) {
        std::fprintf(stderr, "error: %s\n", error.what());
        return kExitBadFlags;
    }

    if (!std::filesystem::exists(options.dataset_path)) {
        std::fprintf(stderr, "error: dataset %s does not exist\n", options.dataset_path.c_str());
        return kExitIoFailure;
    }

    try {
        s3c::MetricsReport report = s3c::run_experiment(options);
        std::fputs(s3c::render_metrics_table(report).c_str(), stdout);
        std::printf("run directory: %s\n", options.run_dir.c_str());
        return 0;
    } catch (const std::exception& error) {
        std::fprintf(stderr, "error: %s\n", error.what());
        return kExitTrainingAbort;
    }
}

int run_eval(const std::string& run_dir, const std::string& out_csv) {
    try {
        s3c::MetricsReport report = s3c::evaluate_run_dir(run_dir);
        std::fputs(s3c::render_metrics_table(report).c_str(), stdout);
        if (!out_csv.empty()) s3c::write_metrics_csv(report, out_csv);
        return 0;
    } catch (const std::exception& error) {
        std::fprintf(stderr, "error: %s\n", error.what());
        return kExitIoFailure;
    }
}

int run_report(const std::vector<std::string>& run_dirs, const std::string& out_csv) {
    try {
        std::fputs(s3c::render_comparison(run_dirs).c_str(), stdout);
        if (!out_csv.empty()) {
            std::ofstream out(out_csv, std::ios::binary);
            if (!out) throw s3c::Error("cannot open " + out_csv + " for writing");
            s3c::write_comparison_csv(run_dirs, out);
        }
        return 0;
    } catch (const s3c::MissingMetricsError& error) {
        std::fprintf(stderr, "error: %s\n", error.what());
        return kExitMissingMetrics;
    } catch (const std::exception& error) {
        std::fprintf(stderr, "error: %s\n", error.what());
        return kExitIoFailure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot class-incremental learning engine"};
    app.require_subcommand(1);
    int exit_code = 0;

    GenDataArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic benchmark dataset");
    gen_cmd->add_option("--classes", gen.spec.classes, "Number of classes")
        ->check(CLI::PositiveNumber);
    gen_cmd->add_option("--train", gen.spec.train_per_class, "Train samples per class")
        ->check(CLI::PositiveNumber);
    gen_cmd->add_option("--test", gen.spec.test_per_class, "Test samples per class")
        ->check(CLI::PositiveNumber);
    gen_cmd->add_option("--image-size", gen.spec.image_size, "Square image side length")
        ->check(CLI::PositiveNumber);
    gen_cmd->add_option("--latent-dim", gen.spec.latent_dim, "Latent space dimension")
        ->check(CLI::PositiveNumber);
    gen_cmd->add_option("--separation", gen.spec.class_separation, "Latent class-mean magnitude");
    gen_cmd->add_option("--latent-noise", gen.spec.latent_noise, "Per-sample latent jitter");
    gen_cmd->add_option("--pixel-noise", gen.spec.pixel_noise, "Additive pixel noise");
    gen_cmd->add_option("--seed", gen.seed, "Generator seed");
    gen_cmd->add_option("-o,--out", gen.out, "Output dataset path")->required();
    gen_cmd->callback([&] { exit_code = run_gen_data(gen); });

    RunArgs run;
    CLI::App* run_cmd =
        app.add_subcommand("run", "Train base + incremental sessions and evaluate each");
    run_cmd->add_option("--data", run.dataset_path, "Dataset file")->required();
    run_cmd->add_option("-o,--out", run.out_dir, "Run directory to create")->required();
    run_cmd->add_option("--config", run.config_path, "Protocol config file");
    auto* seed_option = run_cmd->add_option("--seed", run.seed, "Seed for all randomness");
    run_cmd->add_option("--variant", run.variant_text, "Protocol variant: standard, im or lb");
    run_cmd->add_option("--ablation", run.ablation_text,
                        "s3c, no-stochastic, no-selfsup or linear-head");
    run_cmd->add_option("--base-classes", run.base_classes, "Base session class count");
    run_cmd->add_option("--tasks", run.tasks, "Number of incremental sessions");
    run_cmd->add_option("--ways", run.ways, "Classes per incremental session");
    run_cmd->add_option("--shots", run.shots, "Shots per incremental class");
    run_cmd->add_option("--shot-list", run.shot_list,
                        "Per-class shot counts inside each incremental session (im variant)")
        ->delimiter(',');
    run_cmd->add_option("--train-per-class", run.train_per_class,
                        "Train-pool size per class inside the dataset file");
    run_cmd->add_option("--lb-base-classes", run.lb_base_classes,
                        "Base class count for the lb variant");
    run_cmd->add_option("--base-epochs", run.train.base_epochs, "Base session epochs");
    run_cmd->add_option("--base-lr", run.train.base_lr, "Base session learning rate");
    run_cmd->add_option("--inc-epochs", run.train.incremental_epochs, "Incremental epochs");
    run_cmd->add_option("--inc-lr", run.train.incremental_lr, "Incremental learning rate");
    run_cmd->add_option("--batch-size", run.train.batch_size, "Base session batch size");
    run_cmd->add_option("--momentum", run.train.momentum, "Optimizer momentum");
    run_cmd->add_option("--lambda-proto", run.train.lambda_proto,
                        "Weight of the prototype rehearsal loss");
    run_cmd->add_option("--lambda-s3c", run.train.lambda_s3c,
                        "Weight of the rotation-prediction loss");
    run_cmd->add_option("--scale", run.train.scale, "Cosine logit multiplier");
    run_cmd->add_option("--base-sigma", run.train.base_sigma,
                        "Initial classifier noise scale for base classes");
    run_cmd->add_option("--sigma-lr-scale", run.train.sigma_lr_scale,
                        "Learning-rate multiplier for sigma updates");
    run_cmd->add_option("--weight-decay", run.train.weight_decay,
                        "L2 penalty on trainable means and backbone weights");
    run_cmd->add_option("--hidden-dims", run.hidden_dims, "Backbone hidden layer sizes")
        ->delimiter(',');
    run_cmd->add_option("--feature-dim", run.feature_dim, "Feature dimension")
        ->check(CLI::PositiveNumber);
    run_cmd->callback([&, seed_option] {
        run.seed_given = seed_option->count() > 0;
        exit_code = run_run(run);
    });

    std::string eval_run_dir;
    std::string eval_out;
    CLI::App* eval_cmd =
        app.add_subcommand("eval", "Re-evaluate the final checkpoints of a run directory");
    eval_cmd->add_option("--run", eval_run_dir, "Run directory")->required();
    eval_cmd->add_option("-o,--out", eval_out, "Optional metrics CSV output path");
    eval_cmd->callback([&] { exit_code = run_eval(eval_run_dir, eval_out); });

    std::vector<std::string> report_dirs;
    std::string report_out;
    CLI::App* report_cmd = app.add_subcommand("report", "Compare metrics across run directories");
    report_cmd->add_option("dirs", report_dirs, "Run directories")->required();
    report_cmd->add_option("-o,--out", report_out, "Optional comparison CSV output path");
    report_cmd->callback([&] { exit_code = run_report(report_dirs, report_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& help) {
        return app.exit(help);
    } catch (const CLI::ParseError& error) {
        app.exit(error);
        return kExitBadFlags;
    }
    return exit_code;
}
