#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "s3c/dataset.hpp"
#include "s3c/errors.hpp"
#include "s3c/experiment.hpp"
#include "s3c/numerics.hpp"

using namespace s3c;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct Workspace {
    fs::path root;

    Workspace() {
        root = fs::temp_directory_path() / "s3c_experiment_tests";
        fs::remove_all(root);
        fs::create_directories(root);
    }

    std::string dataset_path() {
        const fs::path path = root / "mini.s3cd";
        if (!fs::exists(path)) {
            SyntheticSpec spec;
            spec.classes = 6;
            spec.train_per_class = 6;
            spec.test_per_class = 2;
            spec.image_size = 5;
            spec.latent_dim = 2;
            spec.class_separation = 4.0;
            spec.latent_noise = 0.8;
            Rng rng(7);
            save_dataset(generate_synthetic(spec, rng).data, path.string());
        }
        return path.string();
    }

    RunOptions options(const std::string& name) {
        RunOptions run;
        run.dataset_path = dataset_path();
        run.run_dir = (root / name).string();
        run.protocol.base_classes = 4;
        run.protocol.tasks = 1;
        run.protocol.ways = 2;
        run.protocol.shots = 3;
        run.protocol.train_per_class = 6;
        run.protocol.seed = 5;
        run.train.base_epochs = 4;
        run.train.incremental_epochs = 10;
        run.hidden_dims = {8};
        run.feature_dim = 8;
        return run;
    }
};

}  // namespace

TEST_CASE("ablation names round-trip and configure the method switches") {
    for (Ablation a : {Ablation::s3c, Ablation::no_stochastic, Ablation::no_selfsup,
                       Ablation::linear_head}) {
        CHECK(parse_ablation(ablation_name(a)) == a);
    }
    CHECK_THROWS_AS(parse_ablation("none"), ConfigError);

    TrainConfig cfg;
    apply_ablation(cfg, Ablation::s3c);
    CHECK(cfg.stochastic);
    CHECK(cfg.rotation_count == 4);
    apply_ablation(cfg, Ablation::no_stochastic);
    CHECK_FALSE(cfg.stochastic);
    CHECK(cfg.rotation_count == 4);

    TrainConfig cfg2;
    apply_ablation(cfg2, Ablation::no_selfsup);
    CHECK(cfg2.stochastic);
    CHECK(cfg2.rotation_count == 1);
    TrainConfig cfg3;
    apply_ablation(cfg3, Ablation::linear_head);
    CHECK_FALSE(cfg3.stochastic);
    CHECK(cfg3.rotation_count == 1);
}

TEST_CASE("config hashes fingerprint every knob that shapes a run") {
    Workspace ws;
    const RunOptions base = ws.options("hash");
    const std::string digest = run_config_hash(base);
    CHECK(digest.size() == 16);
    CHECK(digest == run_config_hash(base));

    RunOptions other = base;
    other.ablation = Ablation::linear_head;
    CHECK(run_config_hash(other) != digest);
    other = base;
    other.protocol.seed = 6;
    CHECK(run_config_hash(other) != digest);
    other = base;
    other.train.weight_decay *= 2.0;
    CHECK(run_config_hash(other) != digest);
    other = base;
    other.train.sigma_lr_scale *= 2.0;
    CHECK(run_config_hash(other) != digest);
    other = base;
    other.dataset_path = "elsewhere.s3cd";
    CHECK(run_config_hash(other) != digest);
    other = base;
    other.hidden_dims = {8, 8};
    CHECK(run_config_hash(other) != digest);
}

TEST_CASE("a run directory holds every promised artifact") {
    Workspace ws;
    RunOptions options = ws.options("full");
    const MetricsReport report = run_experiment(options);

    REQUIRE(report.sessions.size() == 2);
    CHECK(report.has_pd);
    CHECK(report.sessions.back().has_hm);

    const fs::path dir(options.run_dir);
    for (const char* name : {"manifest.json", "protocol.cfg", "train.cfg", "losses.csv",
                             "metrics.csv", "metrics.txt", "backbone.s3cb", "head.s3ch",
                             "prototypes.s3cp"}) {
        CHECK(fs::exists(dir / name));
    }

    const std::string manifest = slurp(dir / "manifest.json");
    CHECK(manifest.find("\"status\": \"completed\"") != std::string::npos);
    CHECK(manifest.find(run_config_hash(options)) != std::string::npos);
    CHECK(manifest.find("\"sessions_completed\": 2") != std::string::npos);
    CHECK(manifest.find("\"ablation\": \"s3c\"") != std::string::npos);

    const MetricsReport reloaded = read_metrics_csv((dir / "metrics.csv").string());
    REQUIRE(reloaded.sessions.size() == 2);
    CHECK(reloaded.sessions.back().top1 == report.sessions.back().top1);
    CHECK(reloaded.pd == report.pd);

    const std::string losses = slurp(dir / "losses.csv");
    CHECK(losses.rfind("epoch,split,loss\n", 0) == 0);
    CHECK(losses.find("session0") != std::string::npos);
    CHECK(losses.find("session1") != std::string::npos);

    const std::string train_cfg = slurp(dir / "train.cfg");
    CHECK(train_cfg.find("weight_decay=") != std::string::npos);
    CHECK(train_cfg.find("sigma_lr_scale=") != std::string::npos);
}

TEST_CASE("identical options give byte-identical metrics files") {
    Workspace ws;
    RunOptions first = ws.options("det_a");
    RunOptions second = ws.options("det_b");
    run_experiment(first);
    run_experiment(second);
    CHECK(slurp(fs::path(first.run_dir) / "metrics.csv") ==
          slurp(fs::path(second.run_dir) / "metrics.csv"));
    CHECK(slurp(fs::path(first.run_dir) / "losses.csv") ==
          slurp(fs::path(second.run_dir) / "losses.csv"));

    RunOptions reseeded = ws.options("det_c");
    reseeded.protocol.seed = 6;
    run_experiment(reseeded);
    CHECK(slurp(fs::path(first.run_dir) / "metrics.csv") !=
          slurp(fs::path(reseeded.run_dir) / "metrics.csv"));
}

TEST_CASE("evaluate_run_dir rescores the stored checkpoints") {
    Workspace ws;
    RunOptions options = ws.options("rescore");
    const MetricsReport trained = run_experiment(options);
    const MetricsReport rescored = evaluate_run_dir(options.run_dir);
    REQUIRE(rescored.sessions.size() == 1);
    const SessionMetrics& fresh = rescored.sessions.front();
    const SessionMetrics& final_session = trained.sessions.back();
    CHECK(fresh.session == final_session.session);
    CHECK(fresh.task_samples == final_session.task_samples);
    // backbone weights pass through an f32 checkpoint, so scores may move a
    // hair; accuracies are counts and should rarely change on tiny data
    CHECK(fresh.top1 == doctest::Approx(final_session.top1).epsilon(0.25));
}

TEST_CASE("failed runs leave a manifest naming the error") {
    Workspace ws;
    RunOptions options = ws.options("broken");
    options.dataset_path = (ws.root / "missing.s3cd").string();
    CHECK_THROWS(run_experiment(options));
    const std::string manifest = slurp(fs::path(options.run_dir) / "manifest.json");
    CHECK(manifest.find("\"status\": \"failed\"") != std::string::npos);
    CHECK(manifest.find("\"error\"") != std::string::npos);
    CHECK(manifest.find("\"sessions_completed\": 0") != std::string::npos);
}

TEST_CASE("comparisons read final metrics across runs") {
    Workspace ws;
    RunOptions a = ws.options("cmp_a");
    RunOptions b = ws.options("cmp_b");
    b.ablation = Ablation::linear_head;
    run_experiment(a);
    run_experiment(b);

    const std::string table = render_comparison({a.run_dir, b.run_dir});
    CHECK(table.find("cmp_a") != std::string::npos);
    CHECK(table.find("cmp_b") != std::string::npos);
    CHECK(table.find("top1%") != std::string::npos);

    std::stringstream csv;
    write_comparison_csv({a.run_dir, b.run_dir}, csv);
    const std::string text = csv.str();
    CHECK(text.rfind("run,top1,hm,pd\n", 0) == 0);
    CHECK(text.find("cmp_a,") != std::string::npos);

    CHECK_THROWS_AS(render_comparison({(ws.root / "nowhere").string()}), MissingMetricsError);
}
