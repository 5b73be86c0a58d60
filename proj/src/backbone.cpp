#include "s3c/backbone.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>

#include "s3c/errors.hpp"
#include "s3c/serialize.hpp"

namespace s3c {

namespace {

MatrixXd apply_activation(Activation activation, MatrixXd z) {
    switch (activation) {
        case Activation::identity:
            return z;
        case Activation::tanh:
            return z.array().tanh().matrix();
    }
    throw Error("unknown activation code");
}

}  // namespace

FeatureExtractor::FeatureExtractor(InputShape input, std::vector<AffineLayer> layers)
    : input_(input), layers_(std::move(layers)) {
    if (layers_.empty()) throw Error("feature extractor needs at least one layer");
    Eigen::Index in = input_.flat();
    if (in <= 0) throw ShapeMismatchError("input shape has zero pixels");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const AffineLayer& layer = layers_[i];
        if (layer.weight.cols() != in) {
            throw ShapeMismatchError("layer " + std::to_string(i) + " expects input size " +
                                     std::to_string(layer.weight.cols()) + ", got " +
                                     std::to_string(in));
        }
        if (layer.bias.size() != layer.weight.rows()) {
            throw ShapeMismatchError("layer " + std::to_string(i) + " bias size mismatch");
        }
        in = layer.weight.rows();
    }
}

FeatureExtractor FeatureExtractor::mlp(InputShape input, const std::vector<int>& hidden_dims,
                                       int feature_dim, Rng& rng) {
    if (feature_dim <= 0) throw ShapeMismatchError("feature_dim must be positive");
    std::vector<AffineLayer> layers;
    Eigen::Index in = input.flat();
    auto push = [&](Eigen::Index out, Activation activation) {
        AffineLayer layer;
        double std_dev = 1.0 / std::sqrt(static_cast<double>(in));
        layer.weight = std_dev * rng.gaussian_matrix(out, in);
        layer.bias = VectorXd::Zero(out);
        layer.activation = activation;
        layers.push_back(std::move(layer));
        in = out;
    };
    for (int h : hidden_dims) {
        if (h <= 0) throw ShapeMismatchError("hidden dim must be positive");
        push(h, Activation::tanh);
    }
    push(feature_dim, Activation::identity);
    return FeatureExtractor(input, std::move(layers));
}

FeatureExtractor FeatureExtractor::random_projection(std::uint64_t seed, InputShape input,
                                                     int feature_dim) {
    Rng rng(seed);
    FeatureExtractor extractor = mlp(input, {}, feature_dim, rng);
    extractor.freeze();
    return extractor;
}

Eigen::Index FeatureExtractor::parameter_count() const {
    Eigen::Index n = 0;
    for (const AffineLayer& layer : layers_) n += layer.weight.size() + layer.bias.size();
    return n;
}

VectorXd FeatureExtractor::parameters_flat() const {
    VectorXd flat(parameter_count());
    Eigen::Index at = 0;
    for (const AffineLayer& layer : layers_) {
        // Column-major weight storage order, then the bias.
        flat.segment(at, layer.weight.size()) =
            Eigen::Map<const VectorXd>(layer.weight.data(), layer.weight.size());
        at += layer.weight.size();
        flat.segment(at, layer.bias.size()) = layer.bias;
        at += layer.bias.size();
    }
    return flat;
}

void FeatureExtractor::set_parameters_flat(const Eigen::Ref<const VectorXd>& values) {
    if (frozen_) throw Error("feature extractor is frozen; parameters are immutable");
    if (values.size() != parameter_count()) {
        throw ShapeMismatchError("expected " + std::to_string(parameter_count()) +
                                 " parameters, got " + std::to_string(values.size()));
    }
    Eigen::Index at = 0;
    for (AffineLayer& layer : layers_) {
        Eigen::Map<VectorXd>(layer.weight.data(), layer.weight.size()) =
            values.segment(at, layer.weight.size());
        at += layer.weight.size();
        layer.bias = values.segment(at, layer.bias.size());
        at += layer.bias.size();
    }
    ++revision_;
}

ForwardCache FeatureExtractor::forward(const MatrixXd& inputs) const {
    if (inputs.rows() != input_.flat()) {
        throw ShapeMismatchError("forward expects " + std::to_string(input_.flat()) +
                                 " rows, got " + std::to_string(inputs.rows()));
    }
    ForwardCache cache;
    cache.input = inputs;
    cache.revision = revision_;
    const MatrixXd* current = &cache.input;
    for (const AffineLayer& layer : layers_) {
        MatrixXd z = (layer.weight * (*current)).colwise() + layer.bias;
        cache.outputs.push_back(apply_activation(layer.activation, std::move(z)));
        current = &cache.outputs.back();
    }
    return cache;
}

MatrixXd FeatureExtractor::features(const MatrixXd& inputs) const {
    return forward(inputs).outputs.back();
}

VectorXd FeatureExtractor::features(const ImageGrid& image) const {
    return features(MatrixXd(image.pixels)).col(0);
}

BackboneGradients FeatureExtractor::backward(const ForwardCache& cache,
                                             const MatrixXd& d_features) const {
    if (cache.revision != revision_) {
        throw StaleCacheError("forward cache predates a parameter update");
    }
    if (d_features.rows() != feature_dim() || d_features.cols() != cache.input.cols()) {
        throw ShapeMismatchError("feature gradient shape mismatch");
    }
    BackboneGradients grads;
    grads.d_weights.resize(layers_.size());
    grads.d_biases.resize(layers_.size());
    MatrixXd d_out = d_features;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        const AffineLayer& layer = layers_[i];
        MatrixXd d_z;
        switch (layer.activation) {
            case Activation::identity:
                d_z = std::move(d_out);
                break;
            case Activation::tanh:
                // d tanh(z)/dz = 1 - tanh(z)^2, and outputs[i] holds tanh(z).
                d_z = (d_out.array() * (1.0 - cache.outputs[i].array().square())).matrix();
                break;
        }
        const MatrixXd& layer_in = i == 0 ? cache.input : cache.outputs[i - 1];
        grads.d_weights[i] = d_z * layer_in.transpose();
        grads.d_biases[i] = d_z.rowwise().sum();
        if (i > 0) d_out = layer.weight.transpose() * d_z;
    }
    return grads;
}

BackboneGradients BackboneGradients::zeros_like(const FeatureExtractor& extractor) {
    BackboneGradients grads;
    for (const AffineLayer& layer : extractor.layers()) {
        grads.d_weights.push_back(MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()));
        grads.d_biases.push_back(VectorXd::Zero(layer.bias.size()));
    }
    return grads;
}

BackboneGradients& BackboneGradients::operator+=(const BackboneGradients& other) {
    if (other.d_weights.size() != d_weights.size()) {
        throw ShapeMismatchError("gradient layer count mismatch");
    }
    for (std::size_t i = 0; i < d_weights.size(); ++i) {
        d_weights[i] += other.d_weights[i];
        d_biases[i] += other.d_biases[i];
    }
    return *this;
}

void BackboneGradients::scale(double factor) {
    for (MatrixXd& w : d_weights) w *= factor;
    for (VectorXd& b : d_biases) b *= factor;
}

VectorXd BackboneGradients::flat() const {
    Eigen::Index n = 0;
    for (std::size_t i = 0; i < d_weights.size(); ++i) {
        n += d_weights[i].size() + d_biases[i].size();
    }
    VectorXd flat(n);
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < d_weights.size(); ++i) {
        flat.segment(at, d_weights[i].size()) =
            Eigen::Map<const VectorXd>(d_weights[i].data(), d_weights[i].size());
        at += d_weights[i].size();
        flat.segment(at, d_biases[i].size()) = d_biases[i];
        at += d_biases[i].size();
    }
    return flat;
}

namespace {

constexpr char kBackboneMagic[5] = "S3CB";
constexpr std::uint16_t kBackboneVersion = 1;

void write_parameter_payload(BinaryWriter& writer, const FeatureExtractor& extractor) {
    for (const AffineLayer& layer : extractor.layers()) {
        writer.u32(static_cast<std::uint32_t>(layer.weight.cols()));
        writer.u32(static_cast<std::uint32_t>(layer.weight.rows()));
        writer.u8(static_cast<std::uint8_t>(layer.activation));
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
                writer.f32(static_cast<float>(layer.weight(r, c)));
            }
        }
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
            writer.f32(static_cast<float>(layer.bias(i)));
        }
    }
}

}  // namespace

void save_backbone(const FeatureExtractor& extractor, std::ostream& out) {
    BinaryWriter writer(out);
    writer.bytes(kBackboneMagic, 4);
    writer.u16(kBackboneVersion);
    const InputShape& shape = extractor.input_shape();
    writer.u16(static_cast<std::uint16_t>(shape.channels));
    writer.u16(static_cast<std::uint16_t>(shape.height));
    writer.u16(static_cast<std::uint16_t>(shape.width));
    writer.u32(static_cast<std::uint32_t>(extractor.layers().size()));
    write_parameter_payload(writer, extractor);
    writer.u8(extractor.frozen() ? 1 : 0);
}

void save_backbone(const FeatureExtractor& extractor, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    save_backbone(extractor, out);
    if (!out) throw Error("write to " + path + " failed");
}

FeatureExtractor load_backbone(std::istream& in) {
    BinaryReader reader(in);
    reader.expect_magic(kBackboneMagic);
    std::uint16_t version = reader.u16();
    if (version != kBackboneVersion) {
        reader.fail("unsupported backbone version " + std::to_string(version));
    }
    InputShape shape;
    shape.channels = reader.u16();
    shape.height = reader.u16();
    shape.width = reader.u16();
    std::uint32_t layer_count = reader.u32();
    if (layer_count == 0) reader.fail("backbone has no layers");
    std::vector<AffineLayer> layers;
    layers.reserve(layer_count);
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        std::uint32_t in_dim = reader.u32();
        std::uint32_t out_dim = reader.u32();
        std::uint8_t activation = reader.u8();
        if (activation > static_cast<std::uint8_t>(Activation::tanh)) {
            reader.fail("unknown activation code " + std::to_string(activation));
        }
        AffineLayer layer;
        layer.activation = static_cast<Activation>(activation);
        layer.weight.resize(out_dim, in_dim);
        for (std::uint32_t r = 0; r < out_dim; ++r) {
            for (std::uint32_t c = 0; c < in_dim; ++c) {
                layer.weight(r, c) = reader.f32();
            }
        }
        layer.bias.resize(out_dim);
        for (std::uint32_t i = 0; i < out_dim; ++i) layer.bias(i) = reader.f32();
        layers.push_back(std::move(layer));
    }
    std::uint8_t frozen = reader.u8();
    if (frozen > 1) reader.fail("frozen flag must be 0 or 1");
    reader.expect_end();
    FeatureExtractor extractor(shape, std::move(layers));
    if (frozen) extractor.freeze();
    return extractor;
}

FeatureExtractor load_backbone(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return load_backbone(in);
}

std::uint64_t parameter_fingerprint(const FeatureExtractor& extractor) {
    std::ostringstream buffer(std::ios::binary);
    BinaryWriter writer(buffer);
    write_parameter_payload(writer, extractor);
    std::string bytes = buffer.str();
    return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace s3c
