#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "s3c/dataset.hpp"

namespace s3c {

enum class Variant {
    standard,
    imbalanced,  // "im": descending shot list within each incremental task
    fewer_base,  // "lb": reduced base class count, incremental tasks unchanged
};

std::string to_string(Variant variant);
Variant parse_variant(const std::string& text);

// Key-value protocol description. Recognized keys:
//   base_classes, tasks, ways, shots, shot_list (comma separated), variant
//   (standard|im|lb), seed, train_per_class, lb_base_classes.
// Lines starting with '#' are comments.
struct ProtocolConfig {
    int base_classes = 60;
    int tasks = 8;  // incremental sessions after the base session
    int ways = 5;
    int shots = 5;
    std::vector<int> shot_list;  // used by the im variant; overrides `shots`
    Variant variant = Variant::standard;
    std::uint64_t seed = 1;
    int train_per_class = -1;   // per-class train-pool size inside the dataset file
    int lb_base_classes = -1;   // lb override; default is 40% of the class budget

    void validate() const;
};

ProtocolConfig parse_protocol_config(std::istream& in);
ProtocolConfig parse_protocol_config_file(const std::string& path);
void write_protocol_config(const ProtocolConfig& config, std::ostream& out);

/// All shots of a class (base-session semantics).
inline constexpr int kAllShots = -1;

struct TaskSpec {
    std::vector<int> class_ids;
    std::vector<int> shots;  // aligned with class_ids; kAllShots = whole train pool
};

struct SessionPlan {
    std::vector<TaskSpec> tasks;  // tasks[0] is the base session
    Variant variant = Variant::standard;
    int rotation_count = 4;
    std::uint64_t seed = 1;
    int train_per_class = -1;

    int session_count() const { return static_cast<int>(tasks.size()); }
    int total_classes() const;
    /// Classes of tasks 0..upto_task inclusive, ascending.
    std::vector<int> classes_up_to(int upto_task) const;
};

/// Expands a config into per-session class lists with disjoint label spaces.
/// Throws InsufficientClassesError when the budget cannot cover the plan.
SessionPlan build_sessions(const ProtocolConfig& config, int available_classes);

/// Train-pool sample indices of a class: the first train_per_class entries of
/// its file-order block. Throws ConfigError when the block is too small.
std::vector<int> class_train_pool(const Dataset& dataset, int class_id, int train_per_class);
/// Remaining file-order entries, used as the test split.
std::vector<int> class_test_pool(const Dataset& dataset, int class_id, int train_per_class);

/// Training sample indices for one session: the full pool for kAllShots
/// classes, otherwise a seeded draw of `shots` samples. The draw depends only
/// on (plan seed, task, class), so paired runs see identical shots.
std::vector<int> session_train_indices(const Dataset& dataset, const SessionPlan& plan, int task);

/// Test sample indices of one task's classes.
std::vector<int> task_test_indices(const Dataset& dataset, const SessionPlan& plan, int task);

}  // namespace s3c
