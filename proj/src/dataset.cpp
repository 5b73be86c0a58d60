#include "s3c/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "s3c/serialize.hpp"

namespace s3c {

namespace {
constexpr char kDatasetMagic[5] = "S3CD";
constexpr std::uint16_t kDatasetVersion = 1;
}  // namespace

ImageGrid ImageGrid::zeros(int channels, int height, int width) {
    ImageGrid image;
    image.channels = channels;
    image.height = height;
    image.width = width;
    image.pixels = VectorXd::Zero(static_cast<Eigen::Index>(channels) * height * width);
    return image;
}

ImageGrid rotate(const ImageGrid& image, int quarter_turns) {
    if (image.height != image.width) {
        throw NonSquareError("rotate requires a square image, got " +
                             std::to_string(image.height) + "x" + std::to_string(image.width));
    }
    const int turns = ((quarter_turns % 4) + 4) % 4;
    if (turns == 0) {
        return image;
    }
    const int n = image.height;
    ImageGrid out = image;
    for (int c = 0; c < image.channels; ++c) {
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                double value;
                switch (turns) {
                    case 1: value = image.at(c, x, n - 1 - y); break;
                    case 2: value = image.at(c, n - 1 - y, n - 1 - x); break;
                    default: value = image.at(c, n - 1 - x, y); break;
                }
                out.at(c, y, x) = value;
            }
        }
    }
    return out;
}

ClassEmbeddingTable::ClassEmbeddingTable(MatrixXd embeddings)
    : embeddings_(std::move(embeddings)) {
    for (Eigen::Index c = 0; c < embeddings_.cols(); ++c) {
        if (embeddings_.col(c).norm() < kZeroVectorThreshold) {
            throw ZeroVectorError("class embedding " + std::to_string(c) + " is zero");
        }
    }
}

VectorXd ClassEmbeddingTable::embedding(int class_id) const {
    if (!contains(class_id)) {
        throw MissingEmbeddingError("no embedding for class " + std::to_string(class_id));
    }
    return embeddings_.col(class_id);
}

void Dataset::rebuild_class_index() {
    samples_by_class.assign(class_count, {});
    for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
        const int cls = samples[i].class_id;
        if (cls < 0 || cls >= class_count) {
            throw UnknownClassError("sample " + std::to_string(i) + " has class " +
                                    std::to_string(cls) + " outside [0, " +
                                    std::to_string(class_count) + ")");
        }
        samples_by_class[cls].push_back(i);
    }
}

GeneratedData generate_synthetic(const SyntheticSpec& spec, Rng& rng) {
    if (spec.classes < 2) {
        throw ConfigError("synthetic generator needs at least 2 classes");
    }
    if (spec.train_per_class < 1 || spec.test_per_class < 0) {
        throw ConfigError("synthetic generator needs >= 1 train sample per class");
    }
    const int size = spec.image_size;
    const Eigen::Index flat = static_cast<Eigen::Index>(spec.channels) * size * size;

    // Fixed oriented render basis: low-frequency cosines, unit RMS each.
    MatrixXd basis(flat, spec.latent_dim);
    for (int j = 0; j < spec.latent_dim; ++j) {
        const double fx = rng.uniform() * 5.0 - 2.5;
        const double fy = rng.uniform() * 5.0 - 2.5;
        const double phase = rng.uniform() * 2.0 * M_PI;
        for (int c = 0; c < spec.channels; ++c) {
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    const Eigen::Index idx =
                        static_cast<Eigen::Index>(c) * size * size + static_cast<Eigen::Index>(y) * size + x;
                    basis(idx, j) = std::cos(2.0 * M_PI * (fx * x + fy * y) / size + phase);
                }
            }
        }
        const double rms = std::sqrt(basis.col(j).squaredNorm() / static_cast<double>(flat));
        basis.col(j) /= std::max(rms, 1e-9);
    }

    // Horizontal ramp shared by every class; rotations map it onto the four
    // axis directions, which keeps the rotation pretext task learnable.
    VectorXd ramp(flat);
    for (int c = 0; c < spec.channels; ++c) {
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const Eigen::Index idx =
                    static_cast<Eigen::Index>(c) * size * size + static_cast<Eigen::Index>(y) * size + x;
                ramp[idx] = static_cast<double>(x) / (size - 1) - 0.5;
            }
        }
    }

    MatrixXd class_means(spec.latent_dim, spec.classes);
    for (int cls = 0; cls < spec.classes; ++cls) {
        VectorXd direction = rng.gaussian_vector(spec.latent_dim);
        class_means.col(cls) = spec.class_separation * direction / direction.norm();
    }

    GeneratedData out;
    out.train_per_class = spec.train_per_class;
    out.test_per_class = spec.test_per_class;
    Dataset& dataset = out.data;
    dataset.channels = spec.channels;
    dataset.height = size;
    dataset.width = size;
    dataset.class_count = spec.classes;
    dataset.embeddings = ClassEmbeddingTable(class_means);
    dataset.samples.reserve(static_cast<std::size_t>(spec.classes) *
                            (spec.train_per_class + spec.test_per_class));

    const double latent_scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
    for (int cls = 0; cls < spec.classes; ++cls) {
        for (int n = 0; n < spec.train_per_class + spec.test_per_class; ++n) {
            const VectorXd latent =
                class_means.col(cls) + spec.latent_noise * rng.gaussian_vector(spec.latent_dim);
            VectorXd raw = spec.render_gain * latent_scale * (basis * latent);
            raw += spec.orientation_strength * ramp;
            raw += spec.pixel_noise * rng.gaussian_vector(flat);
            LabeledSample sample;
            sample.class_id = cls;
            sample.image.channels = spec.channels;
            sample.image.height = size;
            sample.image.width = size;
            sample.image.pixels.resize(flat);
            for (Eigen::Index i = 0; i < flat; ++i) {
                const double value = std::clamp(0.5 + raw[i], 0.0, 1.0);
                // Quantize through f32 so the on-disk format is lossless.
                sample.image.pixels[i] = static_cast<double>(static_cast<float>(value));
            }
            dataset.samples.push_back(std::move(sample));
        }
    }
    dataset.rebuild_class_index();
    return out;
}

void save_dataset(const Dataset& dataset, std::ostream& out) {
    BinaryWriter writer(out);
    writer.bytes(kDatasetMagic, 4);
    writer.u16(kDatasetVersion);
    writer.u16(static_cast<std::uint16_t>(dataset.channels));
    writer.u16(static_cast<std::uint16_t>(dataset.height));
    writer.u16(static_cast<std::uint16_t>(dataset.width));
    writer.u32(static_cast<std::uint32_t>(dataset.class_count));
    writer.u32(static_cast<std::uint32_t>(dataset.samples.size()));
    writer.u32(static_cast<std::uint32_t>(dataset.embeddings.dimension()));
    const MatrixXd& embeddings = dataset.embeddings.matrix();
    for (Eigen::Index cls = 0; cls < embeddings.cols(); ++cls) {
        for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
            writer.f32(static_cast<float>(embeddings(i, cls)));
        }
    }
    for (const LabeledSample& sample : dataset.samples) {
        writer.u32(static_cast<std::uint32_t>(sample.class_id));
        for (Eigen::Index i = 0; i < sample.image.pixel_count(); ++i) {
            writer.f32(static_cast<float>(sample.image.pixels[i]));
        }
    }
}

void save_dataset(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot open " + path + " for writing");
    }
    save_dataset(dataset, out);
    if (!out) {
        throw Error("write failure on " + path);
    }
}

Dataset load_dataset(std::istream& in) {
    BinaryReader reader(in);
    reader.expect_magic(kDatasetMagic);
    const std::uint16_t version = reader.u16();
    if (version != kDatasetVersion) {
        throw FormatError("unsupported dataset version " + std::to_string(version),
                          reader.offset() - 2);
    }
    Dataset dataset;
    dataset.channels = reader.u16();
    dataset.height = reader.u16();
    dataset.width = reader.u16();
    dataset.class_count = static_cast<int>(reader.u32());
    const std::uint32_t sample_count = reader.u32();
    const std::uint32_t embedding_dim = reader.u32();
    if (dataset.channels == 0 || dataset.height == 0 || dataset.width == 0) {
        throw FormatError("zero image dimension in header", reader.offset());
    }

    MatrixXd embeddings(embedding_dim, dataset.class_count);
    for (int cls = 0; cls < dataset.class_count; ++cls) {
        for (std::uint32_t i = 0; i < embedding_dim; ++i) {
            embeddings(i, cls) = reader.f32();
        }
    }
    dataset.embeddings = ClassEmbeddingTable(std::move(embeddings));

    const Eigen::Index flat =
        static_cast<Eigen::Index>(dataset.channels) * dataset.height * dataset.width;
    dataset.samples.reserve(sample_count);
    for (std::uint32_t n = 0; n < sample_count; ++n) {
        LabeledSample sample;
        sample.class_id = static_cast<int>(reader.u32());
        if (sample.class_id >= dataset.class_count) {
            throw FormatError("sample class id " + std::to_string(sample.class_id) +
                                  " out of range",
                              reader.offset() - 4);
        }
        sample.image.channels = dataset.channels;
        sample.image.height = dataset.height;
        sample.image.width = dataset.width;
        sample.image.pixels.resize(flat);
        for (Eigen::Index i = 0; i < flat; ++i) {
            const double value = static_cast<double>(reader.f32());
            if (!std::isfinite(value)) {
                throw FormatError("non-finite pixel value", reader.offset() - 4);
            }
            sample.image.pixels[i] = value;
        }
        dataset.samples.push_back(std::move(sample));
    }
    reader.expect_end();
    dataset.rebuild_class_index();
    return dataset;
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path + " for reading");
    }
    return load_dataset(in);
}

MatrixXd image_batch(const Dataset& dataset, const std::vector<int>& sample_indices,
                     int quarter_turns) {
    const Eigen::Index flat =
        static_cast<Eigen::Index>(dataset.channels) * dataset.height * dataset.width;
    MatrixXd batch(flat, static_cast<Eigen::Index>(sample_indices.size()));
    for (std::size_t i = 0; i < sample_indices.size(); ++i) {
        const ImageGrid rotated = rotate(dataset.samples[sample_indices[i]].image, quarter_turns);
        batch.col(static_cast<Eigen::Index>(i)) = rotated.pixels;
    }
    return batch;
}

}  // namespace s3c
