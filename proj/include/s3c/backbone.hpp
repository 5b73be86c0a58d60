#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "s3c/dataset.hpp"
#include "s3c/numerics.hpp"

namespace s3c {

enum class Activation : std::uint8_t {
    identity = 0,
    tanh = 1,
};

struct AffineLayer {
    MatrixXd weight;  // out x in
    VectorXd bias;    // out
    Activation activation = Activation::identity;
};

struct InputShape {
    int channels = 1;
    int height = 0;
    int width = 0;
    Eigen::Index flat() const {
        return static_cast<Eigen::Index>(channels) * height * width;
    }
    bool operator==(const InputShape&) const = default;
};

struct BackboneGradients;
struct ForwardCache;

// Small fully-connected feature extractor with exact analytic gradients.
// Forward is const and safe to share; parameter mutation requires exclusive
// access and is rejected outright once the extractor is frozen.
class FeatureExtractor {
public:
    FeatureExtractor(InputShape input, std::vector<AffineLayer> layers);

    /// flatten -> affine+tanh per hidden dim -> affine(feature_dim).
    /// Weights are Gaussian with std 1/sqrt(fan_in), biases zero.
    static FeatureExtractor mlp(InputShape input, const std::vector<int>& hidden_dims,
                                int feature_dim, Rng& rng);
    /// Frozen single Gaussian projection; handy as a fixed baseline backbone.
    static FeatureExtractor random_projection(std::uint64_t seed, InputShape input,
                                              int feature_dim);

    const InputShape& input_shape() const { return input_; }
    int feature_dim() const { return static_cast<int>(layers_.back().weight.rows()); }
    const std::vector<AffineLayer>& layers() const { return layers_; }
    bool frozen() const { return frozen_; }
    void freeze() { frozen_ = true; }
    /// Bumped on every parameter change; caches remember it.
    std::uint64_t revision() const { return revision_; }

    Eigen::Index parameter_count() const;
    VectorXd parameters_flat() const;
    /// Throws Error when frozen; ShapeMismatchError on wrong length.
    void set_parameters_flat(const Eigen::Ref<const VectorXd>& values);

    /// Columns of `inputs` are flattened images.
    ForwardCache forward(const MatrixXd& inputs) const;
    MatrixXd features(const MatrixXd& inputs) const;
    VectorXd features(const ImageGrid& image) const;

    /// Exact gradients of a scalar loss given d(loss)/d(features) per column.
    /// Throws StaleCacheError if parameters changed since the forward pass.
    BackboneGradients backward(const ForwardCache& cache, const MatrixXd& d_features) const;

private:
    InputShape input_;
    std::vector<AffineLayer> layers_;
    bool frozen_ = false;
    std::uint64_t revision_ = 0;
};

struct ForwardCache {
    MatrixXd input;                  // flat x B
    std::vector<MatrixXd> outputs;   // post-activation per layer; back() = features
    std::uint64_t revision = 0;

    const MatrixXd& features() const { return outputs.back(); }
};

struct BackboneGradients {
    std::vector<MatrixXd> d_weights;
    std::vector<VectorXd> d_biases;

    static BackboneGradients zeros_like(const FeatureExtractor& extractor);
    BackboneGradients& operator+=(const BackboneGradients& other);
    void scale(double factor);
    VectorXd flat() const;
};

// Checkpoint layout: magic "S3CB" | version u16 | channels u16 | height u16 |
// width u16 | layer_count u32 | per layer (in u32, out u32, activation u8,
// weights f32 LE row-major, bias f32 LE) | frozen u8.
void save_backbone(const FeatureExtractor& extractor, std::ostream& out);
void save_backbone(const FeatureExtractor& extractor, const std::string& path);
FeatureExtractor load_backbone(std::istream& in);
FeatureExtractor load_backbone(const std::string& path);

/// FNV-1a hash of the checkpoint parameter bytes; prototype stores carry it
/// to detect a changed extractor.
std::uint64_t parameter_fingerprint(const FeatureExtractor& extractor);

}  // namespace s3c
