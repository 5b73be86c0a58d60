#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

#include "s3c/backbone.hpp"
#include "s3c/dataset.hpp"
#include "s3c/head.hpp"
#include "s3c/protocol.hpp"

namespace s3c {

struct Prediction {
    int class_id = -1;
    int task_id = -1;
};

/// Test-time score per class: mean over rotations r of
/// scale * cosine(rotation-r mean, feature of the r-rotated image).
/// Means only — no weight sampling at inference. Order matches head storage.
VectorXd aggregate_scores(const StochasticHead& head, const FeatureExtractor& extractor,
                          const ImageGrid& image);

/// Column n scores sample indices[n]; rows follow head class order.
MatrixXd aggregate_scores_batch(const StochasticHead& head, const FeatureExtractor& extractor,
                                const Dataset& data, const std::vector<int>& indices);

/// Argmax of the aggregate scores; ties go to the lowest (task, class) pair.
/// The softmax of the scores is asserted to share the argmax.
Prediction predict(const StochasticHead& head, const FeatureExtractor& extractor,
                   const ImageGrid& image);

std::vector<Prediction> predict_batch(const StochasticHead& head,
                                      const FeatureExtractor& extractor, const Dataset& data,
                                      const std::vector<int>& indices);

/// 2ab/(a+b), 0 when both are 0. Throws Error on negative input.
double harmonic_mean(double a, double b);

/// first - last. Throws UnitMismatchError when one side looks like a percent
/// (> 1.5) and the other like a fraction.
double performance_drop(double first, double last);

struct SessionMetrics {
    int session = 0;
    std::vector<double> task_accuracy;  // index = task, tasks 0..session
    std::vector<int> task_samples;
    double top1 = 0.0;           // pooled over all tasks seen so far
    double base_accuracy = 0.0;  // task 0 alone
    double new_accuracy = 0.0;   // pooled tasks >= 1; meaningful when session >= 1
    double hm = 0.0;
    bool has_hm = false;
};

struct MetricsReport {
    std::vector<SessionMetrics> sessions;
    double pd = 0.0;
    bool has_pd = false;

    /// Recomputes pd from the first and last sessions.
    void finalize();
};

/// Accuracies over the test pools of every task seen up to `session`.
/// Throws UnknownClassError when a test class has no classifier yet.
SessionMetrics evaluate_session(const StochasticHead& head, const FeatureExtractor& extractor,
                                const Dataset& data, const SessionPlan& plan, int session);

// CSV is long-format: header "session,task,metric,value"; per-task rows carry
// metrics task_acc and task_samples; session rows use task -1 with metrics
// top1, base_acc, new_acc, hm; the final row is pd. Doubles print as %.17g so
// files round-trip exactly.
void write_metrics_csv(const MetricsReport& report, std::ostream& out);
void write_metrics_csv(const MetricsReport& report, const std::string& path);
MetricsReport read_metrics_csv(std::istream& in);
MetricsReport read_metrics_csv(const std::string& path);

/// Percent-rendered summary table, one row per session.
std::string render_metrics_table(const MetricsReport& report);

}  // namespace s3c
