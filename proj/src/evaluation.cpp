#include "s3c/evaluation.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>

#include "s3c/errors.hpp"
#include "s3c/numerics.hpp"

namespace s3c {

namespace {

VectorXd checked_inverse_norms(const MatrixXd& columns, const char* what) {
    VectorXd norms = columns.colwise().norm();
    for (Eigen::Index i = 0; i < norms.size(); ++i) {
        if (norms(i) < kZeroVectorThreshold) {
            throw ZeroVectorError(std::string(what) + " " + std::to_string(i) + " is zero");
        }
        norms(i) = 1.0 / norms(i);
    }
    return norms;
}

MatrixXd scores_from_pixel_batches(const StochasticHead& head, const FeatureExtractor& extractor,
                                   const std::vector<MatrixXd>& rotated_pixels) {
    const int m = head.rotation_count();
    const int classes = head.class_count();
    if (classes == 0) throw UnknownClassError("the classifier bank is empty");
    MatrixXd scores;
    for (int r = 0; r < m; ++r) {
        MatrixXd features = extractor.features(rotated_pixels[static_cast<std::size_t>(r)]);
        features *= checked_inverse_norms(features, "feature column").asDiagonal();
        MatrixXd means(head.feature_dim(), classes);
        for (int pos = 0; pos < classes; ++pos) means.col(pos) = head.at(pos).means.col(r);
        means *= checked_inverse_norms(means, "classifier mean").asDiagonal();
        if (r == 0) {
            scores.noalias() = means.transpose() * features;
        } else {
            scores.noalias() += means.transpose() * features;
        }
    }
    return (head.scale() / static_cast<double>(m)) * scores;
}

Prediction argmax_prediction(const StochasticHead& head,
                             const Eigen::Ref<const VectorXd>& scores) {
    int best = 0;
    for (int pos = 1; pos < head.class_count(); ++pos) {
        const ClassHead& candidate = head.at(pos);
        const ClassHead& current = head.at(best);
        if (scores(pos) > scores(best) ||
            (scores(pos) == scores(best) &&
             std::pair(candidate.task_id, candidate.class_id) <
                 std::pair(current.task_id, current.class_id))) {
            best = pos;
        }
    }
    // The softmax of the scores must select the same head; exp is monotone,
    // so a disagreement means the scoring went numerically wrong.
    VectorXd probabilities = softmax(scores);
    int softmax_best = 0;
    for (int pos = 1; pos < head.class_count(); ++pos) {
        if (probabilities(pos) > probabilities(softmax_best)) softmax_best = pos;
    }
    if (probabilities(softmax_best) != probabilities(best)) {
        throw Error("softmax argmax diverged from raw-score argmax");
    }
    return Prediction{head.at(best).class_id, head.at(best).task_id};
}

}  // namespace

VectorXd aggregate_scores(const StochasticHead& head, const FeatureExtractor& extractor,
                          const ImageGrid& image) {
    std::vector<MatrixXd> rotated;
    rotated.reserve(static_cast<std::size_t>(head.rotation_count()));
    for (int r = 0; r < head.rotation_count(); ++r) {
        rotated.push_back(MatrixXd(rotate(image, r).pixels));
    }
    return scores_from_pixel_batches(head, extractor, rotated).col(0);
}

MatrixXd aggregate_scores_batch(const StochasticHead& head, const FeatureExtractor& extractor,
                                const Dataset& data, const std::vector<int>& indices) {
    std::vector<MatrixXd> rotated;
    rotated.reserve(static_cast<std::size_t>(head.rotation_count()));
    for (int r = 0; r < head.rotation_count(); ++r) {
        rotated.push_back(image_batch(data, indices, r));
    }
    return scores_from_pixel_batches(head, extractor, rotated);
}

Prediction predict(const StochasticHead& head, const FeatureExtractor& extractor,
                   const ImageGrid& image) {
    return argmax_prediction(head, aggregate_scores(head, extractor, image));
}

std::vector<Prediction> predict_batch(const StochasticHead& head,
                                      const FeatureExtractor& extractor, const Dataset& data,
                                      const std::vector<int>& indices) {
    MatrixXd scores = aggregate_scores_batch(head, extractor, data, indices);
    std::vector<Prediction> predictions;
    predictions.reserve(indices.size());
    for (Eigen::Index n = 0; n < scores.cols(); ++n) {
        predictions.push_back(argmax_prediction(head, scores.col(n)));
    }
    return predictions;
}

double harmonic_mean(double a, double b) {
    if (a < 0.0 || b < 0.0) throw Error("harmonic mean requires non-negative inputs");
    if (a + b == 0.0) return 0.0;
    return 2.0 * a * b / (a + b);
}

double performance_drop(double first, double last) {
    bool first_percent = first > 1.5;
    bool last_percent = last > 1.5;
    if (first_percent != last_percent) {
        throw UnitMismatchError("mixing percent and fraction accuracies");
    }
    return first - last;
}

void MetricsReport::finalize() {
    has_pd = !sessions.empty();
    if (has_pd) pd = performance_drop(sessions.front().top1, sessions.back().top1);
}

SessionMetrics evaluate_session(const StochasticHead& head, const FeatureExtractor& extractor,
                                const Dataset& data, const SessionPlan& plan, int session) {
    if (session < 0 || session >= plan.session_count()) throw Error("session out of range");
    for (int class_id : plan.classes_up_to(session)) {
        if (!head.has_class(class_id)) {
            throw UnknownClassError("test class " + std::to_string(class_id) +
                                    " has no classifier");
        }
    }

    SessionMetrics metrics;
    metrics.session = session;
    int total_correct = 0, total_samples = 0;
    int new_correct = 0, new_samples = 0;
    for (int task = 0; task <= session; ++task) {
        std::vector<int> indices = task_test_indices(data, plan, task);
        std::vector<Prediction> predictions = predict_batch(head, extractor, data, indices);
        int correct = 0;
        for (std::size_t n = 0; n < indices.size(); ++n) {
            if (predictions[n].class_id ==
                data.samples[static_cast<std::size_t>(indices[n])].class_id) {
                ++correct;
            }
        }
        metrics.task_accuracy.push_back(static_cast<double>(correct) /
                                        static_cast<double>(indices.size()));
        metrics.task_samples.push_back(static_cast<int>(indices.size()));
        total_correct += correct;
        total_samples += static_cast<int>(indices.size());
        if (task >= 1) {
            new_correct += correct;
            new_samples += static_cast<int>(indices.size());
        }
    }
    metrics.top1 = static_cast<double>(total_correct) / static_cast<double>(total_samples);
    metrics.base_accuracy = metrics.task_accuracy.front();
    if (session >= 1) {
        metrics.new_accuracy =
            static_cast<double>(new_correct) / static_cast<double>(new_samples);
        metrics.hm = harmonic_mean(metrics.base_accuracy, metrics.new_accuracy);
        metrics.has_hm = true;
    }
    return metrics;
}

namespace {

std::string format_double(double value) {
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.17g", value);
    return buffer;
}

}  // namespace

void write_metrics_csv(const MetricsReport& report, std::ostream& out) {
    out << "session,task,metric,value\n";
    for (const SessionMetrics& s : report.sessions) {
        for (std::size_t task = 0; task < s.task_accuracy.size(); ++task) {
            out << s.session << ',' << task << ",task_acc," << format_double(s.task_accuracy[task])
                << '\n';
            out << s.session << ',' << task << ",task_samples," << s.task_samples[task] << '\n';
        }
        out << s.session << ",-1,top1," << format_double(s.top1) << '\n';
        out << s.session << ",-1,base_acc," << format_double(s.base_accuracy) << '\n';
        if (s.has_hm) {
            out << s.session << ",-1,new_acc," << format_double(s.new_accuracy) << '\n';
            out << s.session << ",-1,hm," << format_double(s.hm) << '\n';
        }
    }
    if (report.has_pd) {
        out << (report.sessions.empty() ? 0 : report.sessions.back().session) << ",-1,pd,"
            << format_double(report.pd) << '\n';
    }
}

void write_metrics_csv(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // binary: no newline translation
    if (!out) throw Error("cannot open " + path + " for writing");
    write_metrics_csv(report, out);
    if (!out) throw Error("write to " + path + " failed");
}

MetricsReport read_metrics_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "session,task,metric,value") {
        throw FormatError("missing metrics CSV header", 0);
    }
    MetricsReport report;
    auto session_slot = [&report](int session) -> SessionMetrics& {
        for (SessionMetrics& s : report.sessions) {
            if (s.session == session) return s;
        }
        report.sessions.push_back(SessionMetrics{});
        report.sessions.back().session = session;
        return report.sessions.back();
    };
    std::size_t line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string session_text, task_text, metric, value_text;
        if (!std::getline(fields, session_text, ',') || !std::getline(fields, task_text, ',') ||
            !std::getline(fields, metric, ',') || !std::getline(fields, value_text)) {
            throw FormatError("malformed metrics row", line_number);
        }
        int session = std::stoi(session_text);
        int task = std::stoi(task_text);
        double value = std::stod(value_text);
        SessionMetrics& slot = session_slot(session);
        if (metric == "task_acc" || metric == "task_samples") {
            std::size_t need = static_cast<std::size_t>(task) + 1;
            if (slot.task_accuracy.size() < need) {
                slot.task_accuracy.resize(need, 0.0);
                slot.task_samples.resize(need, 0);
            }
            if (metric == "task_acc") {
                slot.task_accuracy[static_cast<std::size_t>(task)] = value;
            } else {
                slot.task_samples[static_cast<std::size_t>(task)] = static_cast<int>(value);
            }
        } else if (metric == "top1") {
            slot.top1 = value;
        } else if (metric == "base_acc") {
            slot.base_accuracy = value;
        } else if (metric == "new_acc") {
            slot.new_accuracy = value;
        } else if (metric == "hm") {
            slot.hm = value;
            slot.has_hm = true;
        } else if (metric == "pd") {
            report.pd = value;
            report.has_pd = true;
        } else {
            throw FormatError("unknown metric '" + metric + "'", line_number);
        }
    }
    return report;
}

MetricsReport read_metrics_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return read_metrics_csv(in);
}

std::string render_metrics_table(const MetricsReport& report) {
    std::ostringstream out;
    out << "session  top1%   base%   new%    hm%\n";
    char row[128];
    for (const SessionMetrics& s : report.sessions) {
        if (s.has_hm) {
            std::snprintf(row, sizeof(row), "%-8d %-7.2f %-7.2f %-7.2f %-7.2f\n", s.session,
                          100.0 * s.top1, 100.0 * s.base_accuracy, 100.0 * s.new_accuracy,
                          100.0 * s.hm);
        } else {
            std::snprintf(row, sizeof(row), "%-8d %-7.2f %-7.2f -       -\n", s.session,
                          100.0 * s.top1, 100.0 * s.base_accuracy);
        }
        out << row;
    }
    if (report.has_pd) {
        std::snprintf(row, sizeof(row), "pd: %.2f points\n", 100.0 * report.pd);
        out << row;
    }
    return out.str();
}

}  // namespace s3c
