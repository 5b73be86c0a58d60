#pragma once

#include <Eigen/Dense>

#include <vector>

#include "s3c/backbone.hpp"
#include "s3c/head.hpp"
#include "s3c/numerics.hpp"

namespace s3c {

// 0/1 column gates deciding which classifier parameters receive gradient.
// Means are gated per (class, rotation) column, sigmas per class.
struct GradientMask {
    VectorXd mean_columns;   // head.flat_count() entries
    VectorXd sigma_columns;  // head.class_count() entries

    static GradientMask allow_all(const StochasticHead& head);
    /// Classes from sessions before `current_task` keep only their rotation-0
    /// mean trainable; their other means and their sigma are frozen.
    static GradientMask incremental(const StochasticHead& head, int current_task);

    bool allows_mean(const StochasticHead& head, int class_pos, int rotation) const;
    bool allows_sigma(int class_pos) const;
};

struct LossValue {
    double value = 0.0;
    MatrixXd d_means;     // d x flat_count, same layout as SampledWeights
    MatrixXd d_sigma;     // d x class_count
    MatrixXd d_features;  // d x input columns; empty unless requested

    LossValue& axpy(double weight, const LossValue& other);
};

/// Softmax over every (task, class, rotation) head for one feature vector,
/// flat layout class_pos * M + rotation. The denominator therefore spans all
/// sessions seen so far.
VectorXd class_rotation_posterior(const StochasticHead& head, const SampledWeights& sampled,
                                  const Eigen::Ref<const VectorXd>& feature);

/// One entry of the posterior above.
double joint_probability(const StochasticHead& head, const SampledWeights& sampled,
                         const Eigen::Ref<const VectorXd>& feature, int class_id, int rotation);

// Rotation-prediction cross entropy: `rotated_features` holds the features of
// every rotated view, column r * B + b for view r of batch element b, and the
// target of that column is (class of b, rotation r). Loss is the mean over all
// M*B view terms. Gradients cover means, sigma (through the retained noise),
// and optionally the stacked features.
LossValue s3c_loss_batch(const StochasticHead& head, const SampledWeights& sampled,
                         const MatrixXd& rotated_features, const std::vector<int>& class_ids,
                         const GradientMask& mask, bool want_feature_grads);

/// Convenience wrapper for a single image: rotates, extracts features and
/// draws fresh weights from `rng`.
LossValue s3c_loss(const StochasticHead& head, const FeatureExtractor& extractor,
                   const ImageGrid& image, int class_id, Rng& rng);

// Memory-rehearsal cross entropy over stored class means: each column of
// `prototypes` is scored against every head and its target is (its class,
// rotation 0). Mean over the prototype batch.
LossValue prototype_loss_batch(const StochasticHead& head, const SampledWeights& sampled,
                               const MatrixXd& prototypes, const std::vector<int>& class_ids,
                               const GradientMask& mask);

/// lambda_proto * prototype loss + lambda_s3c * rotation loss, sharing one
/// weight draw. Feature gradients (when requested) belong to the rotated
/// image features only; prototypes are constants.
LossValue incremental_loss_batch(const StochasticHead& head, const SampledWeights& sampled,
                                 const MatrixXd& rotated_features,
                                 const std::vector<int>& class_ids, const MatrixXd& prototypes,
                                 const std::vector<int>& prototype_class_ids, double lambda_proto,
                                 double lambda_s3c, const GradientMask& mask,
                                 bool want_feature_grads);

}  // namespace s3c
