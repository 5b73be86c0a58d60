#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "s3c/backbone.hpp"
#include "s3c/dataset.hpp"
#include "s3c/numerics.hpp"

namespace s3c {

// One class's classifier bank: a mean vector per rotation plus a single
// per-coordinate noise scale shared by all rotations of the class.
struct ClassHead {
    int task_id = 0;
    int class_id = 0;
    MatrixXd means;  // d x rotation_count, column r pairs with rotation r
    VectorXd sigma;  // d, entries kept >= 0
};

// The full classifier bank across every session seen so far. Classes are
// stored in insertion order (sessions append in ascending task order), and
// flat layouts everywhere use column class_pos * rotation_count + rotation.
class StochasticHead {
public:
    StochasticHead(int feature_dim, int rotation_count, double scale);

    int feature_dim() const { return feature_dim_; }
    int rotation_count() const { return rotation_count_; }
    /// Multiplier applied to cosines before softmax.
    double scale() const { return scale_; }

    int class_count() const { return static_cast<int>(classes_.size()); }
    /// Total number of (class, rotation) weight vectors.
    int flat_count() const { return class_count() * rotation_count_; }
    int flat_index(int class_pos, int rotation) const {
        return class_pos * rotation_count_ + rotation;
    }

    const std::vector<ClassHead>& classes() const { return classes_; }
    const ClassHead& at(int class_pos) const { return classes_.at(class_pos); }
    ClassHead& at(int class_pos) { return classes_.at(class_pos); }

    bool has_class(int class_id) const;
    /// Throws UnknownClassError.
    int position_of(int class_id) const;
    int max_task() const;

    /// Validates shapes, sigma sign, unique class id, non-decreasing task id.
    void add_class(ClassHead head);

    /// All means as one d x flat_count matrix (no sampling).
    MatrixXd mean_weights() const;

private:
    int feature_dim_;
    int rotation_count_;
    double scale_;
    std::vector<ClassHead> classes_;
};

// A concrete draw of every classifier weight, with the noise retained so
// gradients can flow back to sigma and tests can freeze the randomness.
struct SampledWeights {
    MatrixXd weights;  // d x flat_count, weight = mean + noise .* sigma
    MatrixXd noise;    // the epsilon actually used
};

/// Fresh epsilon per (class, rotation): classes in storage order, rotations
/// 0..M-1 within a class, coordinates in order within a vector.
SampledWeights sample_weights(const StochasticHead& head, Rng& rng);
/// Deterministic variant for gradient checks.
SampledWeights weights_from_noise(const StochasticHead& head, const MatrixXd& noise);

/// scale * cosine(column, feature) per column. Throws ZeroVectorError when the
/// feature or any column is numerically zero.
VectorXd cosine_logits(const MatrixXd& weight_columns, const Eigen::Ref<const VectorXd>& feature,
                       double scale);

/// Appends a class whose rotation-r mean is the centroid of the shots'
/// rotation-r features and whose sigma is copied from the base (task 0) class
/// most similar in embedding space (cosine; ties to the lowest class_id).
void init_new_class(StochasticHead& head, const FeatureExtractor& extractor, int task_id,
                    int class_id, const std::vector<ImageGrid>& shots,
                    const ClassEmbeddingTable& embeddings);

// Checkpoint layout: magic "S3CH" | version u16 | feature_dim u32 |
// rotation_count u16 | scale f64 | class_count u32 | per class (task_id u16,
// class_id u32, means f64 column-major, sigma f64). Doubles keep training
// resumable without drift.
void save_head(const StochasticHead& head, std::ostream& out);
void save_head(const StochasticHead& head, const std::string& path);
StochasticHead load_head(std::istream& in);
StochasticHead load_head(const std::string& path);

}  // namespace s3c
