#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "s3c/dataset.hpp"
#include "s3c/errors.hpp"
#include "s3c/numerics.hpp"

using namespace s3c;

namespace {

ImageGrid make_2x2(double a, double b, double c, double d) {
    ImageGrid image = ImageGrid::zeros(1, 2, 2);
    image.at(0, 0, 0) = a;
    image.at(0, 0, 1) = b;
    image.at(0, 1, 0) = c;
    image.at(0, 1, 1) = d;
    return image;
}

bool grids_equal(const ImageGrid& a, const ImageGrid& b) {
    return a.channels == b.channels && a.height == b.height && a.width == b.width &&
           a.pixels == b.pixels;
}

}  // namespace

TEST_CASE("ImageGrid::at addresses row-major pixels per channel") {
    ImageGrid image = ImageGrid::zeros(2, 2, 3);
    CHECK(image.pixel_count() == 12);
    image.at(1, 1, 2) = 0.5;
    // channel 1 starts at 6, row 1 at +3, column 2 at +2
    CHECK(image.pixels[11] == 0.5);
}

TEST_CASE("one quarter turn moves the right column to the top row") {
    const ImageGrid image = make_2x2(1, 2, 3, 4);
    const ImageGrid turned = rotate(image, 1);
    CHECK(turned.at(0, 0, 0) == 2);
    CHECK(turned.at(0, 0, 1) == 4);
    CHECK(turned.at(0, 1, 0) == 1);
    CHECK(turned.at(0, 1, 1) == 3);
}

TEST_CASE("half and three-quarter turns match the hand-worked grids") {
    const ImageGrid image = make_2x2(1, 2, 3, 4);
    const ImageGrid half = rotate(image, 2);
    CHECK(half.at(0, 0, 0) == 4);
    CHECK(half.at(0, 0, 1) == 3);
    CHECK(half.at(0, 1, 0) == 2);
    CHECK(half.at(0, 1, 1) == 1);
    const ImageGrid three = rotate(image, 3);
    CHECK(three.at(0, 0, 0) == 3);
    CHECK(three.at(0, 0, 1) == 1);
    CHECK(three.at(0, 1, 0) == 4);
    CHECK(three.at(0, 1, 1) == 2);
}

TEST_CASE("rotation composes, wraps and inverts") {
    Rng rng(3);
    ImageGrid image = ImageGrid::zeros(1, 5, 5);
    image.pixels = rng.gaussian_vector(image.pixel_count());

    CHECK(grids_equal(rotate(image, 0), image));
    CHECK(grids_equal(rotate(image, 4), image));
    CHECK(grids_equal(rotate(image, -1), rotate(image, 3)));
    CHECK(grids_equal(rotate(rotate(image, 1), 1), rotate(image, 2)));
    ImageGrid four = image;
    for (int i = 0; i < 4; ++i) four = rotate(four, 1);
    CHECK(grids_equal(four, image));
}

TEST_CASE("rotation treats channels independently") {
    ImageGrid image = ImageGrid::zeros(2, 2, 2);
    image.at(0, 0, 1) = 1.0;
    image.at(1, 1, 0) = 2.0;
    const ImageGrid turned = rotate(image, 1);
    CHECK(turned.at(0, 0, 0) == 1.0);
    CHECK(turned.at(1, 1, 1) == 2.0);
}

TEST_CASE("rotation rejects non-square images") {
    ImageGrid image = ImageGrid::zeros(1, 2, 3);
    CHECK_THROWS_AS(rotate(image, 1), NonSquareError);
}

TEST_CASE("embedding table lookups and guards") {
    MatrixXd embeddings(2, 3);
    embeddings << 1, 0, 1, 0, 1, 1;
    ClassEmbeddingTable table(embeddings);
    CHECK(table.size() == 3);
    CHECK(table.dimension() == 2);
    CHECK(table.contains(2));
    CHECK_FALSE(table.contains(3));
    CHECK_FALSE(table.contains(-1));
    CHECK(table.embedding(1)(1) == 1.0);
    CHECK_THROWS_AS(table.embedding(3), MissingEmbeddingError);

    MatrixXd with_zero = embeddings;
    with_zero.col(1).setZero();
    CHECK_THROWS_AS(ClassEmbeddingTable{with_zero}, ZeroVectorError);
}

TEST_CASE("rebuild_class_index groups file order per class and validates ids") {
    Dataset data;
    data.channels = 1;
    data.height = 1;
    data.width = 1;
    data.class_count = 2;
    for (int cls : {1, 0, 1}) {
        LabeledSample sample;
        sample.class_id = cls;
        sample.image = ImageGrid::zeros(1, 1, 1);
        data.samples.push_back(sample);
    }
    data.rebuild_class_index();
    CHECK(data.samples_by_class[0] == std::vector<int>{1});
    CHECK(data.samples_by_class[1] == std::vector<int>{0, 2});

    data.samples[0].class_id = 5;
    CHECK_THROWS_AS(data.rebuild_class_index(), UnknownClassError);
}

TEST_CASE("the generator lays out train then test per class") {
    SyntheticSpec spec;
    spec.classes = 3;
    spec.train_per_class = 4;
    spec.test_per_class = 2;
    spec.image_size = 6;
    spec.latent_dim = 3;
    Rng rng(11);
    GeneratedData generated = generate_synthetic(spec, rng);
    const Dataset& data = generated.data;

    CHECK(generated.train_per_class == 4);
    CHECK(generated.test_per_class == 2);
    CHECK(data.class_count == 3);
    CHECK(data.height == 6);
    CHECK(static_cast<int>(data.samples.size()) == 3 * 6);
    // class-major blocks in file order
    for (int i = 0; i < 18; ++i) {
        CHECK(data.samples[static_cast<std::size_t>(i)].class_id == i / 6);
    }
    for (int cls = 0; cls < 3; ++cls) {
        CHECK(static_cast<int>(data.samples_by_class[static_cast<std::size_t>(cls)].size()) == 6);
    }
}

TEST_CASE("generated pixels live in [0,1] and survive the f32 quantization") {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.train_per_class = 3;
    spec.test_per_class = 1;
    spec.image_size = 5;
    Rng rng(4);
    const Dataset data = generate_synthetic(spec, rng).data;
    for (const LabeledSample& sample : data.samples) {
        CHECK(sample.image.pixels.minCoeff() >= 0.0);
        CHECK(sample.image.pixels.maxCoeff() <= 1.0);
        for (Eigen::Index i = 0; i < sample.image.pixels.size(); ++i) {
            const double value = sample.image.pixels[i];
            CHECK(static_cast<double>(static_cast<float>(value)) == value);
        }
    }
}

TEST_CASE("class embeddings are the latent means, one per class") {
    SyntheticSpec spec;
    spec.classes = 4;
    spec.train_per_class = 2;
    spec.test_per_class = 0;
    spec.image_size = 4;
    spec.latent_dim = 5;
    spec.class_separation = 3.0;
    Rng rng(8);
    const Dataset data = generate_synthetic(spec, rng).data;
    CHECK(data.embeddings.size() == 4);
    CHECK(data.embeddings.dimension() == 5);
    for (int cls = 0; cls < 4; ++cls) {
        CHECK(data.embeddings.embedding(cls).norm() == doctest::Approx(3.0).epsilon(1e-12));
    }
}

TEST_CASE("the generator is a pure function of its rng") {
    SyntheticSpec spec;
    spec.classes = 3;
    spec.train_per_class = 2;
    spec.test_per_class = 1;
    spec.image_size = 4;
    Rng a(21), b(21), c(22);
    const Dataset da = generate_synthetic(spec, a).data;
    const Dataset db = generate_synthetic(spec, b).data;
    const Dataset dc = generate_synthetic(spec, c).data;
    REQUIRE(da.samples.size() == db.samples.size());
    bool identical = true;
    bool differs = false;
    for (std::size_t i = 0; i < da.samples.size(); ++i) {
        identical = identical && da.samples[i].image.pixels == db.samples[i].image.pixels;
        differs = differs || da.samples[i].image.pixels != dc.samples[i].image.pixels;
    }
    CHECK(identical);
    CHECK(differs);
}

TEST_CASE("generator rejects degenerate shapes") {
    SyntheticSpec spec;
    spec.classes = 1;
    Rng rng(1);
    CHECK_THROWS_AS(generate_synthetic(spec, rng), ConfigError);
    spec.classes = 2;
    spec.train_per_class = 0;
    CHECK_THROWS_AS(generate_synthetic(spec, rng), ConfigError);
}

TEST_CASE("save/load round-trips a dataset exactly") {
    SyntheticSpec spec;
    spec.classes = 3;
    spec.train_per_class = 2;
    spec.test_per_class = 1;
    spec.image_size = 4;
    spec.latent_dim = 3;
    Rng rng(6);
    const Dataset original = generate_synthetic(spec, rng).data;

    std::stringstream buf;
    save_dataset(original, buf);
    const Dataset loaded = load_dataset(buf);

    CHECK(loaded.channels == original.channels);
    CHECK(loaded.height == original.height);
    CHECK(loaded.width == original.width);
    CHECK(loaded.class_count == original.class_count);
    REQUIRE(loaded.samples.size() == original.samples.size());
    for (std::size_t i = 0; i < original.samples.size(); ++i) {
        CHECK(loaded.samples[i].class_id == original.samples[i].class_id);
        // pixels were quantized through f32 at generation time, so the f32
        // file format loses nothing
        CHECK(loaded.samples[i].image.pixels == original.samples[i].image.pixels);
    }
    REQUIRE(loaded.embeddings.size() == original.embeddings.size());
    for (int cls = 0; cls < original.class_count; ++cls) {
        const VectorXd a = original.embeddings.embedding(cls);
        const VectorXd b = loaded.embeddings.embedding(cls);
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            CHECK(b(i) == static_cast<double>(static_cast<float>(a(i))));
        }
    }
    CHECK(loaded.samples_by_class == original.samples_by_class);

    // a second save of the loaded dataset is byte-identical
    std::stringstream buf1, buf2;
    save_dataset(loaded, buf1);
    save_dataset(load_dataset(buf1), buf2);
    CHECK(buf1.str() == buf2.str());
}

TEST_CASE("load rejects malformed dataset files") {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.train_per_class = 1;
    spec.test_per_class = 0;
    spec.image_size = 3;
    Rng rng(2);
    const Dataset data = generate_synthetic(spec, rng).data;
    std::stringstream buf;
    save_dataset(data, buf);
    const std::string blob = buf.str();

    {
        std::string bad = blob;
        bad[0] = 'X';
        std::stringstream in(bad);
        CHECK_THROWS_AS(load_dataset(in), FormatError);
    }
    {
        std::string bad = blob;
        bad[4] = 9;  // unsupported version
        std::stringstream in(bad);
        CHECK_THROWS_AS(load_dataset(in), FormatError);
    }
    {
        std::stringstream in(blob + "x");
        CHECK_THROWS_AS(load_dataset(in), FormatError);
    }
    {
        std::stringstream in(blob.substr(0, blob.size() - 3));
        CHECK_THROWS_AS(load_dataset(in), FormatError);
    }
}

TEST_CASE("image_batch stacks rotated pixel columns") {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.train_per_class = 3;
    spec.test_per_class = 0;
    spec.image_size = 4;
    Rng rng(13);
    const Dataset data = generate_synthetic(spec, rng).data;
    const std::vector<int> indices = {4, 0, 2};
    const MatrixXd batch = image_batch(data, indices, 3);
    REQUIRE(batch.cols() == 3);
    REQUIRE(batch.rows() == 16);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const ImageGrid expected = rotate(data.samples[static_cast<std::size_t>(indices[i])].image, 3);
        CHECK(batch.col(static_cast<Eigen::Index>(i)) == expected.pixels);
    }
}
