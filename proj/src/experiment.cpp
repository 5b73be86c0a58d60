#include "s3c/experiment.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <utility>

#include "s3c/errors.hpp"

namespace s3c {

namespace fs = std::filesystem;
using nlohmann::json;

Ablation parse_ablation(const std::string& name) {
    if (name == "s3c") return Ablation::s3c;
    if (name == "no-stochastic") return Ablation::no_stochastic;
    if (name == "no-selfsup") return Ablation::no_selfsup;
    if (name == "linear-head") return Ablation::linear_head;
    throw ConfigError("unknown ablation \"" + name +
                      "\" (expected s3c, no-stochastic, no-selfsup or linear-head)");
}

std::string ablation_name(Ablation ablation) {
    switch (ablation) {
        case Ablation::s3c: return "s3c";
        case Ablation::no_stochastic: return "no-stochastic";
        case Ablation::no_selfsup: return "no-selfsup";
        case Ablation::linear_head: return "linear-head";
    }
    throw Error("unknown ablation value");
}

void apply_ablation(TrainConfig& cfg, Ablation ablation) {
    switch (ablation) {
        case Ablation::s3c:
            break;
        case Ablation::no_stochastic:
            cfg.stochastic = false;
            break;
        case Ablation::no_selfsup:
            cfg.rotation_count = 1;
            break;
        case Ablation::linear_head:
            cfg.rotation_count = 1;
            cfg.stochastic = false;
            break;
    }
}

void write_train_config(const TrainConfig& cfg, std::ostream& out) {
    out << "base_epochs=" << cfg.base_epochs << '\n';
    out << "base_lr=" << cfg.base_lr << '\n';
    out << "lr_milestones=";
    for (std::size_t i = 0; i < cfg.lr_milestones.size(); ++i) {
        out << (i ? "," : "") << cfg.lr_milestones[i];
    }
    out << '\n';
    out << "incremental_epochs=" << cfg.incremental_epochs << '\n';
    out << "incremental_lr=" << cfg.incremental_lr << '\n';
    out << "batch_size=" << cfg.batch_size << '\n';
    out << "momentum=" << cfg.momentum << '\n';
    out << "weight_decay=" << cfg.weight_decay << '\n';
    out << "lambda_proto=" << cfg.lambda_proto << '\n';
    out << "lambda_s3c=" << cfg.lambda_s3c << '\n';
    out << "scale=" << cfg.scale << '\n';
    out << "rotation_count=" << cfg.rotation_count << '\n';
    out << "stochastic=" << (cfg.stochastic ? 1 : 0) << '\n';
    out << "base_sigma=" << cfg.base_sigma << '\n';
    out << "sigma_lr_scale=" << cfg.sigma_lr_scale << '\n';
}

namespace {

std::string hex64(std::uint64_t value) {
    char buffer[17];
    std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(value));
    return buffer;
}

std::string config_snapshot_text(const RunOptions& options, const TrainConfig& effective) {
    std::ostringstream text;
    write_protocol_config(options.protocol, text);
    write_train_config(effective, text);
    text << "hidden_dims=";
    for (std::size_t i = 0; i < options.hidden_dims.size(); ++i) {
        text << (i ? "," : "") << options.hidden_dims[i];
    }
    text << '\n';
    text << "feature_dim=" << options.feature_dim << '\n';
    text << "ablation=" << ablation_name(options.ablation) << '\n';
    text << "dataset=" << options.dataset_path << '\n';
    return text.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw Error("write to " + path.string() + " failed");
}

void write_manifest(const fs::path& dir, const RunOptions& options, const std::string& status,
                    int sessions_completed, const std::string& error) {
    json manifest;
    manifest["tool_version"] = kToolVersion;
    manifest["command"] = "run";
    manifest["status"] = status;
    manifest["seed"] = options.protocol.seed;
    manifest["config_hash"] = run_config_hash(options);
    manifest["ablation"] = ablation_name(options.ablation);
    manifest["variant"] = to_string(options.protocol.variant);
    manifest["dataset"] = options.dataset_path;
    manifest["sessions_completed"] = sessions_completed;
    manifest["artifacts"] = {
        {"protocol_config", "protocol.cfg"}, {"train_config", "train.cfg"},
        {"losses", "losses.csv"},            {"metrics_csv", "metrics.csv"},
        {"metrics_table", "metrics.txt"},    {"backbone", "backbone.s3cb"},
        {"head", "head.s3ch"},               {"prototypes", "prototypes.s3cp"},
    };
    if (!error.empty()) manifest["error"] = error;
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace

std::string run_config_hash(const RunOptions& options) {
    TrainConfig effective = options.train;
    apply_ablation(effective, options.ablation);
    std::string text = config_snapshot_text(options, effective);
    return hex64(fnv1a64(text.data(), text.size()));
}

MetricsReport run_experiment(const RunOptions& options) {
    TrainConfig cfg = options.train;
    apply_ablation(cfg, options.ablation);
    cfg.validate();
    options.protocol.validate();

    fs::path dir(options.run_dir);
    fs::create_directories(dir);
    {
        std::ostringstream protocol_text;
        write_protocol_config(options.protocol, protocol_text);
        write_text_file(dir / "protocol.cfg", protocol_text.str());
        std::ostringstream train_text;
        write_train_config(cfg, train_text);
        write_text_file(dir / "train.cfg", train_text.str());
    }

    int sessions_completed = 0;
    try {
        Dataset data = load_dataset(options.dataset_path);
        SessionPlan plan = build_sessions(options.protocol, data.class_count);
        plan.rotation_count = cfg.rotation_count;

        Rng rng(options.protocol.seed);
        InputShape shape{data.channels, data.height, data.width};
        FeatureExtractor extractor =
            FeatureExtractor::mlp(shape, options.hidden_dims, options.feature_dim, rng);
        SessionState state = make_initial_state(std::move(extractor), cfg);

        std::ofstream losses(dir / "losses.csv", std::ios::binary);
        if (!losses) throw Error("cannot open the loss log for writing");
        losses << "epoch,split,loss\n";
        auto log_epochs = [&losses](const TrainLog& log, int session) {
            char value[40];
            for (std::size_t i = 0; i < log.epoch_mean_loss.size(); ++i) {
                std::snprintf(value, sizeof(value), "%.17g", log.epoch_mean_loss[i]);
                losses << (i + 1) << ",session" << session << ',' << value << '\n';
            }
        };

        MetricsReport report;
        log_epochs(train_base(state, data, plan, cfg, rng), 0);
        report.sessions.push_back(evaluate_session(state.head, state.extractor, data, plan, 0));
        sessions_completed = 1;
        for (int task = 1; task < plan.session_count(); ++task) {
            log_epochs(train_incremental(state, data, plan, task, cfg, rng), task);
            report.sessions.push_back(
                evaluate_session(state.head, state.extractor, data, plan, task));
            sessions_completed = task + 1;
        }
        report.finalize();

        save_backbone(state.extractor, (dir / "backbone.s3cb").string());
        save_head(state.head, (dir / "head.s3ch").string());
        save_store(state.prototypes, (dir / "prototypes.s3cp").string());
        write_metrics_csv(report, (dir / "metrics.csv").string());
        write_text_file(dir / "metrics.txt", render_metrics_table(report));
        write_manifest(dir, options, "completed", sessions_completed, "");
        return report;
    } catch (const std::exception& error) {
        write_manifest(dir, options, "failed", sessions_completed, error.what());
        throw;
    }
}

MetricsReport evaluate_run_dir(const std::string& run_dir) {
    fs::path dir(run_dir);
    std::ifstream manifest_in(dir / "manifest.json");
    if (!manifest_in) throw Error("no manifest.json in " + run_dir);
    json manifest = json::parse(manifest_in);

    Dataset data = load_dataset(manifest.at("dataset").get<std::string>());
    ProtocolConfig protocol = parse_protocol_config_file((dir / "protocol.cfg").string());
    SessionPlan plan = build_sessions(protocol, data.class_count);
    FeatureExtractor extractor = load_backbone((dir / "backbone.s3cb").string());
    StochasticHead head = load_head((dir / "head.s3ch").string());
    plan.rotation_count = head.rotation_count();
    PrototypeStore store = load_store((dir / "prototypes.s3cp").string());
    if (!fingerprint_matches(store, extractor)) {
        std::fprintf(stderr,
                     "warning: stored prototypes were computed by a different extractor\n");
    }

    MetricsReport report;
    report.sessions.push_back(
        evaluate_session(head, extractor, data, plan, plan.session_count() - 1));
    return report;
}

namespace {

struct RunSummary {
    std::string name;
    double top1 = 0.0;
    double hm = 0.0;
    bool has_hm = false;
    double pd = 0.0;
    bool has_pd = false;
};

RunSummary summarize_run(const std::string& run_dir) {
    fs::path metrics_path = fs::path(run_dir) / "metrics.csv";
    if (!fs::exists(metrics_path)) {
        throw MissingMetricsError("no metrics.csv in " + run_dir);
    }
    MetricsReport report = read_metrics_csv(metrics_path.string());
    if (report.sessions.empty()) throw MissingMetricsError("empty metrics in " + run_dir);
    RunSummary summary;
    summary.name = fs::path(run_dir).filename().string();
    if (summary.name.empty()) summary.name = run_dir;
    const SessionMetrics& last = report.sessions.back();
    summary.top1 = last.top1;
    summary.hm = last.hm;
    summary.has_hm = last.has_hm;
    summary.pd = report.pd;
    summary.has_pd = report.has_pd;
    return summary;
}

}  // namespace

std::string render_comparison(const std::vector<std::string>& run_dirs) {
    std::ostringstream out;
    out << "run" << std::string(29, ' ') << "top1%   hm%     pd\n";
    char row[160];
    for (const std::string& run_dir : run_dirs) {
        RunSummary summary = summarize_run(run_dir);
        std::string name = summary.name.substr(0, 31);
        std::snprintf(row, sizeof(row), "%-31s %-7.2f ", name.c_str(), 100.0 * summary.top1);
        out << row;
        if (summary.has_hm) {
            std::snprintf(row, sizeof(row), "%-7.2f ", 100.0 * summary.hm);
        } else {
            std::snprintf(row, sizeof(row), "%-7s ", "-");
        }
        out << row;
        if (summary.has_pd) {
            std::snprintf(row, sizeof(row), "%.2f\n", 100.0 * summary.pd);
        } else {
            std::snprintf(row, sizeof(row), "-\n");
        }
        out << row;
    }
    return out.str();
}

void write_comparison_csv(const std::vector<std::string>& run_dirs, std::ostream& out) {
    out << "run,top1,hm,pd\n";
    char value[40];
    for (const std::string& run_dir : run_dirs) {
        RunSummary summary = summarize_run(run_dir);
        out << summary.name << ',';
        std::snprintf(value, sizeof(value), "%.17g", summary.top1);
        out << value << ',';
        if (summary.has_hm) {
            std::snprintf(value, sizeof(value), "%.17g", summary.hm);
            out << value;
        }
        out << ',';
        if (summary.has_pd) {
            std::snprintf(value, sizeof(value), "%.17g", summary.pd);
            out << value;
        }
        out << '\n';
    }
}

}  // namespace s3c
