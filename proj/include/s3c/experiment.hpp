#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "s3c/evaluation.hpp"
#include "s3c/protocol.hpp"
#include "s3c/trainer.hpp"

namespace s3c {

inline constexpr const char* kToolVersion = "0.1.0";

// Which pieces of the method are active. `s3c` is the full method; the other
// values switch off weight sampling, the rotation pretext task, or both
// (plain deterministic cosine classifier).
enum class Ablation {
    s3c,
    no_stochastic,  // 4 rotations, sigma pinned to zero
    no_selfsup,     // single rotation, stochastic weights
    linear_head,    // single rotation, sigma pinned to zero
};

/// Throws ConfigError on unknown names.
Ablation parse_ablation(const std::string& name);
std::string ablation_name(Ablation ablation);
void apply_ablation(TrainConfig& cfg, Ablation ablation);

struct RunOptions {
    std::string dataset_path;
    std::string run_dir;
    ProtocolConfig protocol;  // protocol.seed drives all randomness
    TrainConfig train;
    std::vector<int> hidden_dims = {64};
    int feature_dim = 32;
    Ablation ablation = Ablation::s3c;
};

/// Hex digest over the config snapshot + dataset path + ablation; stored in
/// the manifest so a run directory can prove which configuration made it.
std::string run_config_hash(const RunOptions& options);

void write_train_config(const TrainConfig& cfg, std::ostream& out);

// Runs the base session plus every incremental session, evaluating after
// each one. The run directory receives: manifest.json, protocol.cfg,
// train.cfg, losses.csv (epoch,split,loss), metrics.csv, metrics.txt and the
// three checkpoints (backbone.s3cb, head.s3ch, prototypes.s3cp). On failure
// the manifest records status "failed" and the error; partial artifacts stay.
MetricsReport run_experiment(const RunOptions& options);

/// Re-evaluates the final checkpoints of a run directory on its dataset and
/// returns the final-session metrics.
MetricsReport evaluate_run_dir(const std::string& run_dir);

/// Side-by-side final top-1 / hm / pd comparison of several run directories.
/// Throws MissingMetricsError when a directory has no metrics.csv.
std::string render_comparison(const std::vector<std::string>& run_dirs);
void write_comparison_csv(const std::vector<std::string>& run_dirs, std::ostream& out);

}  // namespace s3c
