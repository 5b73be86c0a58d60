#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

#include "s3c/errors.hpp"
#include "s3c/numerics.hpp"

namespace s3c {

// Row-major single image, pixel values in [0, 1].
struct ImageGrid {
    int channels = 0;
    int height = 0;
    int width = 0;
    VectorXd pixels;  // index = c * height * width + y * width + x

    static ImageGrid zeros(int channels, int height, int width);

    double at(int c, int y, int x) const {
        return pixels[static_cast<Eigen::Index>(c) * height * width + static_cast<Eigen::Index>(y) * width + x];
    }
    double& at(int c, int y, int x) {
        return pixels[static_cast<Eigen::Index>(c) * height * width + static_cast<Eigen::Index>(y) * width + x];
    }
    Eigen::Index pixel_count() const {
        return static_cast<Eigen::Index>(channels) * height * width;
    }
};

/// Counter-clockwise rotation by quarter_turns * 90 degrees; 0 is the identity.
/// Throws NonSquareError unless height == width.
ImageGrid rotate(const ImageGrid& image, int quarter_turns);

struct LabeledSample {
    ImageGrid image;
    int class_id = 0;
    int task_id = -1;  // assigned when a session plan is materialized
};

// Fixed per-class embedding vectors (class id = column index). Stands in for
// pretrained word vectors when ranking classes by semantic similarity.
class ClassEmbeddingTable {
public:
    ClassEmbeddingTable() = default;
    explicit ClassEmbeddingTable(MatrixXd embeddings);

    bool empty() const { return embeddings_.cols() == 0; }
    Eigen::Index dimension() const { return embeddings_.rows(); }
    Eigen::Index size() const { return embeddings_.cols(); }
    bool contains(int class_id) const {
        return class_id >= 0 && class_id < embeddings_.cols();
    }
    /// Throws MissingEmbeddingError for unknown class ids.
    VectorXd embedding(int class_id) const;
    const MatrixXd& matrix() const { return embeddings_; }

private:
    MatrixXd embeddings_;
};

struct Dataset {
    int channels = 1;
    int height = 0;
    int width = 0;
    int class_count = 0;
    ClassEmbeddingTable embeddings;
    std::vector<LabeledSample> samples;
    std::vector<std::vector<int>> samples_by_class;  // indices in file order

    void rebuild_class_index();
    const ImageGrid& image(int sample_index) const { return samples[sample_index].image; }
};

// Generator for a rotation-sensitive stand-in benchmark: every class is a
// Gaussian blob in a small latent space, rendered onto the grid through fixed
// oriented cosine patterns plus a horizontal ramp so that the four rotations
// stay distinguishable. Class latent means double as the class embeddings.
struct SyntheticSpec {
    int classes = 10;
    int train_per_class = 50;
    int test_per_class = 20;
    int image_size = 16;
    int channels = 1;
    int latent_dim = 8;
    double class_separation = 3.0;   // latent mean magnitude
    double latent_noise = 1.0;       // per-sample latent jitter
    double pixel_noise = 0.02;
    double render_gain = 0.12;
    double orientation_strength = 0.25;  // ramp amplitude
};

struct GeneratedData {
    Dataset data;  // per class: train block first, then test block
    int train_per_class = 0;
    int test_per_class = 0;
};

GeneratedData generate_synthetic(const SyntheticSpec& spec, Rng& rng);

// On-disk layout (all integers and floats little-endian):
//   magic "S3CD" | version u16 | channels u16 | height u16 | width u16 |
//   class_count u32 | sample_count u32 | embedding_dim u32 |
//   class_count * embedding_dim f32 (class-major) |
//   sample records: class_id u32, pixels f32 row-major.
void save_dataset(const Dataset& dataset, std::ostream& out);
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(std::istream& in);
Dataset load_dataset(const std::string& path);

/// Flattened pixel columns for the given samples, rotated in lockstep.
MatrixXd image_batch(const Dataset& dataset, const std::vector<int>& sample_indices,
                     int quarter_turns);

}  // namespace s3c
