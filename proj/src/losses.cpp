#include "s3c/losses.hpp"

#include <cmath>
#include <string>

#include "s3c/errors.hpp"

namespace s3c {

namespace {

// Probabilities are floored here before the log so adversarial inputs cannot
// produce NaN; with scale 16 the spread of logits is at most 32, far above
// the floor, so the guard never fires in normal operation. The gradient is
// the plain softmax-CE expression either way.
constexpr double kLogFloor = 1e-30;

VectorXd column_norms_checked(const MatrixXd& columns, const char* what) {
    VectorXd norms = columns.colwise().norm();
    for (Eigen::Index i = 0; i < norms.size(); ++i) {
        if (norms(i) < kZeroVectorThreshold) {
            throw ZeroVectorError(std::string(what) + " " + std::to_string(i) + " is zero");
        }
    }
    return norms;
}

// Shared core: scaled-cosine softmax cross entropy of feature columns against
// the sampled weight bank. `term_weight(n)` scales column n's loss term.
LossValue scored_cross_entropy(const StochasticHead& head, const SampledWeights& sampled,
                               const MatrixXd& features, const std::vector<int>& target_flat,
                               const VectorXd& term_weight, const GradientMask& mask,
                               bool want_feature_grads) {
    const Eigen::Index n_cols = features.cols();
    if (features.rows() != head.feature_dim()) {
        throw ShapeMismatchError("feature dimension does not match the head");
    }
    if (static_cast<Eigen::Index>(target_flat.size()) != n_cols || term_weight.size() != n_cols) {
        throw ShapeMismatchError("one target and weight per feature column required");
    }
    if (sampled.weights.rows() != head.feature_dim() ||
        sampled.weights.cols() != head.flat_count()) {
        throw ShapeMismatchError("sampled weights do not match the head layout");
    }

    const double eta = head.scale();
    VectorXd w_norms = column_norms_checked(sampled.weights, "classifier weight");
    VectorXd f_norms = column_norms_checked(features, "feature column");
    MatrixXd w_bar = sampled.weights * w_norms.cwiseInverse().asDiagonal();
    MatrixXd f_bar = features * f_norms.cwiseInverse().asDiagonal();

    MatrixXd logits = eta * (w_bar.transpose() * f_bar);  // flat_count x n_cols

    LossValue out;
    // d(loss)/d(logits), premultiplied by each column's term weight.
    MatrixXd g(logits.rows(), logits.cols());
    for (Eigen::Index n = 0; n < n_cols; ++n) {
        int target = target_flat[static_cast<std::size_t>(n)];
        if (target < 0 || target >= head.flat_count()) {
            throw ShapeMismatchError("target index " + std::to_string(target) + " out of range");
        }
        VectorXd p = softmax(logits.col(n));
        out.value -= term_weight(n) * std::log(std::max(p(target), kLogFloor));
        p(target) -= 1.0;
        g.col(n) = term_weight(n) * p;
    }

    MatrixXd d_cos = eta * g;
    // Through w_bar = w / ||w||: subtract the radial component, divide by ||w||.
    MatrixXd d_w_bar = f_bar * d_cos.transpose();  // d x flat_count
    VectorXd w_dots = (w_bar.array() * d_w_bar.array()).colwise().sum();
    out.d_means =
        (d_w_bar - w_bar * w_dots.asDiagonal()) * w_norms.cwiseInverse().asDiagonal();

    const int m = head.rotation_count();
    out.d_sigma = MatrixXd::Zero(head.feature_dim(), head.class_count());
    for (int pos = 0; pos < head.class_count(); ++pos) {
        for (int r = 0; r < m; ++r) {
            Eigen::Index col = head.flat_index(pos, r);
            out.d_sigma.col(pos) +=
                out.d_means.col(col).cwiseProduct(sampled.noise.col(col));
        }
    }

    for (int pos = 0; pos < head.class_count(); ++pos) {
        for (int r = 0; r < m; ++r) {
            out.d_means.col(head.flat_index(pos, r)) *= mask.mean_columns(head.flat_index(pos, r));
        }
        out.d_sigma.col(pos) *= mask.sigma_columns(pos);
    }

    if (want_feature_grads) {
        MatrixXd d_f_bar = w_bar * d_cos;  // d x n_cols
        VectorXd f_dots = (f_bar.array() * d_f_bar.array()).colwise().sum();
        out.d_features =
            (d_f_bar - f_bar * f_dots.asDiagonal()) * f_norms.cwiseInverse().asDiagonal();
    }
    return out;
}

void check_mask(const StochasticHead& head, const GradientMask& mask) {
    if (mask.mean_columns.size() != head.flat_count() ||
        mask.sigma_columns.size() != head.class_count()) {
        throw ShapeMismatchError("gradient mask does not match the head layout");
    }
}

}  // namespace

GradientMask GradientMask::allow_all(const StochasticHead& head) {
    GradientMask mask;
    mask.mean_columns = VectorXd::Ones(head.flat_count());
    mask.sigma_columns = VectorXd::Ones(head.class_count());
    return mask;
}

GradientMask GradientMask::incremental(const StochasticHead& head, int current_task) {
    GradientMask mask = allow_all(head);
    for (int pos = 0; pos < head.class_count(); ++pos) {
        if (head.at(pos).task_id >= current_task) continue;
        for (int r = 1; r < head.rotation_count(); ++r) {
            mask.mean_columns(head.flat_index(pos, r)) = 0.0;
        }
        mask.sigma_columns(pos) = 0.0;
    }
    return mask;
}

bool GradientMask::allows_mean(const StochasticHead& head, int class_pos, int rotation) const {
    return mean_columns(head.flat_index(class_pos, rotation)) != 0.0;
}

bool GradientMask::allows_sigma(int class_pos) const {
    return sigma_columns(class_pos) != 0.0;
}

LossValue& LossValue::axpy(double weight, const LossValue& other) {
    value += weight * other.value;
    if (d_means.size() == 0) {
        d_means = weight * other.d_means;
        d_sigma = weight * other.d_sigma;
    } else {
        d_means += weight * other.d_means;
        d_sigma += weight * other.d_sigma;
    }
    return *this;
}

VectorXd class_rotation_posterior(const StochasticHead& head, const SampledWeights& sampled,
                                  const Eigen::Ref<const VectorXd>& feature) {
    if (sampled.weights.cols() != head.flat_count()) {
        throw ShapeMismatchError("sampled weights do not match the head layout");
    }
    return softmax(cosine_logits(sampled.weights, feature, head.scale()));
}

double joint_probability(const StochasticHead& head, const SampledWeights& sampled,
                         const Eigen::Ref<const VectorXd>& feature, int class_id, int rotation) {
    if (rotation < 0 || rotation >= head.rotation_count()) {
        throw ShapeMismatchError("rotation " + std::to_string(rotation) + " out of range");
    }
    VectorXd posterior = class_rotation_posterior(head, sampled, feature);
    return posterior(head.flat_index(head.position_of(class_id), rotation));
}

LossValue s3c_loss_batch(const StochasticHead& head, const SampledWeights& sampled,
                         const MatrixXd& rotated_features, const std::vector<int>& class_ids,
                         const GradientMask& mask, bool want_feature_grads) {
    check_mask(head, mask);
    const Eigen::Index batch = static_cast<Eigen::Index>(class_ids.size());
    const int m = head.rotation_count();
    if (batch == 0) throw ShapeMismatchError("empty batch");
    if (rotated_features.cols() != batch * m) {
        throw ShapeMismatchError("expected one feature column per (rotation, sample)");
    }
    std::vector<int> targets(static_cast<std::size_t>(batch * m));
    for (Eigen::Index b = 0; b < batch; ++b) {
        int pos = head.position_of(class_ids[static_cast<std::size_t>(b)]);
        for (int r = 0; r < m; ++r) {
            targets[static_cast<std::size_t>(r * batch + b)] = head.flat_index(pos, r);
        }
    }
    VectorXd term_weight =
        VectorXd::Constant(batch * m, 1.0 / static_cast<double>(batch * m));
    return scored_cross_entropy(head, sampled, rotated_features, targets, term_weight, mask,
                                want_feature_grads);
}

LossValue s3c_loss(const StochasticHead& head, const FeatureExtractor& extractor,
                   const ImageGrid& image, int class_id, Rng& rng) {
    SampledWeights sampled = sample_weights(head, rng);
    const int m = head.rotation_count();
    MatrixXd features(head.feature_dim(), m);
    for (int r = 0; r < m; ++r) {
        features.col(r) = extractor.features(rotate(image, r));
    }
    return s3c_loss_batch(head, sampled, features, {class_id}, GradientMask::allow_all(head),
                          false);
}

LossValue prototype_loss_batch(const StochasticHead& head, const SampledWeights& sampled,
                               const MatrixXd& prototypes, const std::vector<int>& class_ids,
                               const GradientMask& mask) {
    check_mask(head, mask);
    const Eigen::Index count = static_cast<Eigen::Index>(class_ids.size());
    if (count == 0) throw ShapeMismatchError("empty prototype batch");
    if (prototypes.cols() != count) {
        throw ShapeMismatchError("one class id per prototype column required");
    }
    std::vector<int> targets(static_cast<std::size_t>(count));
    for (Eigen::Index n = 0; n < count; ++n) {
        targets[static_cast<std::size_t>(n)] =
            head.flat_index(head.position_of(class_ids[static_cast<std::size_t>(n)]), 0);
    }
    VectorXd term_weight = VectorXd::Constant(count, 1.0 / static_cast<double>(count));
    return scored_cross_entropy(head, sampled, prototypes, targets, term_weight, mask, false);
}

LossValue incremental_loss_batch(const StochasticHead& head, const SampledWeights& sampled,
                                 const MatrixXd& rotated_features,
                                 const std::vector<int>& class_ids, const MatrixXd& prototypes,
                                 const std::vector<int>& prototype_class_ids, double lambda_proto,
                                 double lambda_s3c, const GradientMask& mask,
                                 bool want_feature_grads) {
    if (lambda_proto < 0.0 || lambda_s3c < 0.0) {
        throw Error("loss weights must be non-negative");
    }
    LossValue rotation_part =
        s3c_loss_batch(head, sampled, rotated_features, class_ids, mask, want_feature_grads);
    LossValue proto_part =
        prototype_loss_batch(head, sampled, prototypes, prototype_class_ids, mask);

    LossValue out;
    out.axpy(lambda_s3c, rotation_part);
    out.axpy(lambda_proto, proto_part);
    if (want_feature_grads) out.d_features = lambda_s3c * rotation_part.d_features;
    return out;
}

}  // namespace s3c
