#include "s3c/head.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <utility>

#include "s3c/errors.hpp"
#include "s3c/serialize.hpp"

namespace s3c {

StochasticHead::StochasticHead(int feature_dim, int rotation_count, double scale)
    : feature_dim_(feature_dim), rotation_count_(rotation_count), scale_(scale) {
    if (feature_dim <= 0) throw ShapeMismatchError("feature_dim must be positive");
    if (rotation_count <= 0) throw ShapeMismatchError("rotation_count must be positive");
    if (!(scale > 0.0)) throw Error("cosine scale must be positive");
}

bool StochasticHead::has_class(int class_id) const {
    for (const ClassHead& c : classes_) {
        if (c.class_id == class_id) return true;
    }
    return false;
}

int StochasticHead::position_of(int class_id) const {
    for (std::size_t i = 0; i < classes_.size(); ++i) {
        if (classes_[i].class_id == class_id) return static_cast<int>(i);
    }
    throw UnknownClassError("class " + std::to_string(class_id) + " has no classifier");
}

int StochasticHead::max_task() const {
    int top = -1;
    for (const ClassHead& c : classes_) top = std::max(top, c.task_id);
    return top;
}

void StochasticHead::add_class(ClassHead head) {
    if (head.means.rows() != feature_dim_ || head.means.cols() != rotation_count_) {
        throw ShapeMismatchError("class means must be " + std::to_string(feature_dim_) + "x" +
                                 std::to_string(rotation_count_));
    }
    if (head.sigma.size() != feature_dim_) {
        throw ShapeMismatchError("sigma length must equal feature_dim");
    }
    if ((head.sigma.array() < 0.0).any()) throw Error("sigma entries must be >= 0");
    if (has_class(head.class_id)) {
        throw DuplicateClassError("class " + std::to_string(head.class_id) +
                                  " already has a classifier");
    }
    if (!classes_.empty() && head.task_id < classes_.back().task_id) {
        throw Error("classes must be added in ascending task order");
    }
    classes_.push_back(std::move(head));
}

MatrixXd StochasticHead::mean_weights() const {
    MatrixXd out(feature_dim_, flat_count());
    for (int pos = 0; pos < class_count(); ++pos) {
        out.middleCols(static_cast<Eigen::Index>(pos) * rotation_count_, rotation_count_) =
            classes_[static_cast<std::size_t>(pos)].means;
    }
    return out;
}

SampledWeights sample_weights(const StochasticHead& head, Rng& rng) {
    MatrixXd noise(head.feature_dim(), head.flat_count());
    for (Eigen::Index col = 0; col < noise.cols(); ++col) {
        noise.col(col) = rng.gaussian_vector(head.feature_dim());
    }
    return weights_from_noise(head, noise);
}

SampledWeights weights_from_noise(const StochasticHead& head, const MatrixXd& noise) {
    if (noise.rows() != head.feature_dim() || noise.cols() != head.flat_count()) {
        throw ShapeMismatchError("noise must be feature_dim x flat_count");
    }
    SampledWeights sampled;
    sampled.noise = noise;
    sampled.weights.resize(noise.rows(), noise.cols());
    const int m = head.rotation_count();
    for (int pos = 0; pos < head.class_count(); ++pos) {
        const ClassHead& c = head.at(pos);
        for (int r = 0; r < m; ++r) {
            Eigen::Index col = head.flat_index(pos, r);
            sampled.weights.col(col) = c.means.col(r) + noise.col(col).cwiseProduct(c.sigma);
        }
    }
    return sampled;
}

VectorXd cosine_logits(const MatrixXd& weight_columns, const Eigen::Ref<const VectorXd>& feature,
                       double scale) {
    if (weight_columns.rows() != feature.size()) {
        throw ShapeMismatchError("weight/feature dimension mismatch");
    }
    double feature_norm = feature.norm();
    if (feature_norm < kZeroVectorThreshold) {
        throw ZeroVectorError("cannot score a zero feature vector");
    }
    VectorXd logits(weight_columns.cols());
    for (Eigen::Index col = 0; col < weight_columns.cols(); ++col) {
        double weight_norm = weight_columns.col(col).norm();
        if (weight_norm < kZeroVectorThreshold) {
            throw ZeroVectorError("classifier weight " + std::to_string(col) + " is zero");
        }
        double cosine = weight_columns.col(col).dot(feature) / (weight_norm * feature_norm);
        logits(col) = scale * std::clamp(cosine, -1.0, 1.0);
    }
    return logits;
}

void init_new_class(StochasticHead& head, const FeatureExtractor& extractor, int task_id,
                    int class_id, const std::vector<ImageGrid>& shots,
                    const ClassEmbeddingTable& embeddings) {
    if (shots.empty()) throw EmptyClassError("class " + std::to_string(class_id) + " has no shots");

    ClassHead entry;
    entry.task_id = task_id;
    entry.class_id = class_id;
    entry.means.resize(head.feature_dim(), head.rotation_count());
    for (int r = 0; r < head.rotation_count(); ++r) {
        VectorXd centroid = VectorXd::Zero(head.feature_dim());
        for (const ImageGrid& shot : shots) {
            centroid += extractor.features(rotate(shot, r));
        }
        entry.means.col(r) = centroid / static_cast<double>(shots.size());
    }

    // Sigma is inherited from the most similar base class in embedding space.
    VectorXd query = embeddings.embedding(class_id);
    const ClassHead* donor = nullptr;
    double best = -std::numeric_limits<double>::infinity();
    for (const ClassHead& candidate : head.classes()) {
        if (candidate.task_id != 0) continue;
        double similarity = cosine_similarity(query, embeddings.embedding(candidate.class_id));
        if (similarity > best || (similarity == best && donor != nullptr &&
                                  candidate.class_id < donor->class_id)) {
            best = similarity;
            donor = &candidate;
        }
    }
    if (donor == nullptr) throw UnknownClassError("no base classes available to donate sigma");
    entry.sigma = donor->sigma;

    head.add_class(std::move(entry));
}

namespace {

constexpr char kHeadMagic[5] = "S3CH";
constexpr std::uint16_t kHeadVersion = 1;

}  // namespace

void save_head(const StochasticHead& head, std::ostream& out) {
    BinaryWriter writer(out);
    writer.bytes(kHeadMagic, 4);
    writer.u16(kHeadVersion);
    writer.u32(static_cast<std::uint32_t>(head.feature_dim()));
    writer.u16(static_cast<std::uint16_t>(head.rotation_count()));
    writer.f64(head.scale());
    writer.u32(static_cast<std::uint32_t>(head.class_count()));
    for (const ClassHead& c : head.classes()) {
        writer.u16(static_cast<std::uint16_t>(c.task_id));
        writer.u32(static_cast<std::uint32_t>(c.class_id));
        for (Eigen::Index r = 0; r < c.means.cols(); ++r) {
            for (Eigen::Index i = 0; i < c.means.rows(); ++i) writer.f64(c.means(i, r));
        }
        for (Eigen::Index i = 0; i < c.sigma.size(); ++i) writer.f64(c.sigma(i));
    }
}

void save_head(const StochasticHead& head, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    save_head(head, out);
    if (!out) throw Error("write to " + path + " failed");
}

StochasticHead load_head(std::istream& in) {
    BinaryReader reader(in);
    reader.expect_magic(kHeadMagic);
    std::uint16_t version = reader.u16();
    if (version != kHeadVersion) {
        reader.fail("unsupported head version " + std::to_string(version));
    }
    std::uint32_t dim = reader.u32();
    std::uint16_t rotations = reader.u16();
    double scale = reader.f64();
    if (dim == 0 || rotations == 0) reader.fail("degenerate head dimensions");
    if (!(scale > 0.0)) reader.fail("cosine scale must be positive");
    std::uint32_t class_count = reader.u32();
    StochasticHead head(static_cast<int>(dim), rotations, scale);
    for (std::uint32_t n = 0; n < class_count; ++n) {
        ClassHead c;
        c.task_id = reader.u16();
        c.class_id = static_cast<int>(reader.u32());
        c.means.resize(dim, rotations);
        for (std::uint16_t r = 0; r < rotations; ++r) {
            for (std::uint32_t i = 0; i < dim; ++i) c.means(i, r) = reader.f64();
        }
        c.sigma.resize(dim);
        for (std::uint32_t i = 0; i < dim; ++i) {
            c.sigma(i) = reader.f64();
            if (!(c.sigma(i) >= 0.0)) reader.fail("sigma entries must be >= 0");
        }
        head.add_class(std::move(c));
    }
    reader.expect_end();
    return head;
}

StochasticHead load_head(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return load_head(in);
}

}  // namespace s3c
