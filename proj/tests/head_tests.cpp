#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "s3c/backbone.hpp"
#include "s3c/dataset.hpp"
#include "s3c/errors.hpp"
#include "s3c/head.hpp"
#include "s3c/numerics.hpp"

using namespace s3c;

namespace {

ClassHead make_class(Rng& rng, int task_id, int class_id, int dim, int rotations,
                     double sigma_value) {
    ClassHead head;
    head.task_id = task_id;
    head.class_id = class_id;
    head.means = rng.gaussian_matrix(dim, rotations);
    head.sigma = VectorXd::Constant(dim, sigma_value);
    return head;
}

double loop_cosine(const VectorXd& a, const VectorXd& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        dot += a(i) * b(i);
        na += a(i) * a(i);
        nb += b(i) * b(i);
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

TEST_CASE("add_class validates shape, sign and ordering") {
    StochasticHead head(4, 2, 16.0);
    Rng rng(1);
    head.add_class(make_class(rng, 0, 0, 4, 2, 0.1));
    CHECK(head.class_count() == 1);
    CHECK(head.flat_count() == 2);
    CHECK(head.has_class(0));
    CHECK_FALSE(head.has_class(1));
    CHECK(head.position_of(0) == 0);
    CHECK_THROWS_AS(head.position_of(9), UnknownClassError);

    CHECK_THROWS_AS(head.add_class(make_class(rng, 0, 1, 4, 3, 0.1)), ShapeMismatchError);
    CHECK_THROWS_AS(head.add_class(make_class(rng, 0, 1, 5, 2, 0.1)), ShapeMismatchError);
    CHECK_THROWS_AS(head.add_class(make_class(rng, 0, 0, 4, 2, 0.1)), DuplicateClassError);
    CHECK_THROWS_AS(head.add_class(make_class(rng, 0, 1, 4, 2, -0.1)), Error);

    head.add_class(make_class(rng, 1, 1, 4, 2, 0.1));
    CHECK(head.max_task() == 1);
    CHECK_THROWS_AS(head.add_class(make_class(rng, 0, 2, 4, 2, 0.1)), Error);
}

TEST_CASE("constructor guards its arguments") {
    CHECK_THROWS_AS(StochasticHead(0, 4, 16.0), ShapeMismatchError);
    CHECK_THROWS_AS(StochasticHead(4, 0, 16.0), ShapeMismatchError);
    CHECK_THROWS_AS(StochasticHead(4, 4, 0.0), Error);
}

TEST_CASE("flat layout interleaves rotations within each class") {
    StochasticHead head(3, 2, 8.0);
    Rng rng(2);
    head.add_class(make_class(rng, 0, 0, 3, 2, 0.1));
    head.add_class(make_class(rng, 0, 5, 3, 2, 0.2));
    CHECK(head.flat_index(0, 1) == 1);
    CHECK(head.flat_index(1, 0) == 2);
    const MatrixXd means = head.mean_weights();
    REQUIRE(means.cols() == 4);
    CHECK(means.col(0) == head.at(0).means.col(0));
    CHECK(means.col(1) == head.at(0).means.col(1));
    CHECK(means.col(2) == head.at(1).means.col(0));
    CHECK(means.col(3) == head.at(1).means.col(1));
}

TEST_CASE("sampled weights equal mean plus sigma-scaled noise") {
    StochasticHead head(5, 3, 16.0);
    Rng rng(3);
    head.add_class(make_class(rng, 0, 0, 5, 3, 0.3));
    head.add_class(make_class(rng, 0, 1, 5, 3, 0.05));

    Rng draw(4);
    const SampledWeights sampled = sample_weights(head, draw);
    REQUIRE(sampled.weights.cols() == 6);
    REQUIRE(sampled.noise.cols() == 6);
    for (int pos = 0; pos < 2; ++pos) {
        for (int r = 0; r < 3; ++r) {
            const Eigen::Index col = head.flat_index(pos, r);
            const VectorXd expected = head.at(pos).means.col(r) +
                                      sampled.noise.col(col).cwiseProduct(head.at(pos).sigma);
            CHECK((sampled.weights.col(col) - expected).cwiseAbs().maxCoeff() == 0.0);
        }
    }

    // same seed, same draw; the stream advances between draws
    Rng draw_b(4);
    CHECK(sample_weights(head, draw_b).weights == sampled.weights);
    CHECK(sample_weights(head, draw).weights != sampled.weights);
}

TEST_CASE("draw statistics match the per-class sigma") {
    const int dim = 6;
    StochasticHead head(dim, 2, 16.0);
    Rng rng(5);
    head.add_class(make_class(rng, 0, 0, dim, 2, 0.4));
    head.at(0).sigma(2) = 0.0;  // one frozen coordinate

    const int draws = 20000;
    MatrixXd sum = MatrixXd::Zero(dim, 2);
    MatrixXd sum_sq = MatrixXd::Zero(dim, 2);
    Rng draw(6);
    for (int n = 0; n < draws; ++n) {
        const SampledWeights sampled = sample_weights(head, draw);
        sum += sampled.weights;
        sum_sq += sampled.weights.cwiseProduct(sampled.weights);
    }
    for (int r = 0; r < 2; ++r) {
        for (int i = 0; i < dim; ++i) {
            const double mean = sum(i, r) / draws;
            const double var = sum_sq(i, r) / draws - mean * mean;
            const double sd = std::sqrt(std::max(var, 0.0));
            const double sigma = head.at(0).sigma(i);
            CHECK(std::abs(mean - head.at(0).means(i, r)) < 0.02);
            CHECK(std::abs(sd - sigma) < 0.05 * std::max(sigma, 0.1));
        }
    }
}

TEST_CASE("zero noise collapses sampling onto the means") {
    StochasticHead head(4, 4, 16.0);
    Rng rng(7);
    head.add_class(make_class(rng, 0, 0, 4, 4, 0.25));
    const SampledWeights sampled =
        weights_from_noise(head, MatrixXd::Zero(4, head.flat_count()));
    CHECK(sampled.weights == head.mean_weights());
    CHECK_THROWS_AS(weights_from_noise(head, MatrixXd::Zero(4, 3)), ShapeMismatchError);
}

TEST_CASE("cosine_logits agrees with an explicit loop") {
    Rng rng(8);
    const MatrixXd weights = rng.gaussian_matrix(7, 5);
    const VectorXd feature = rng.gaussian_vector(7);
    const double scale = 16.0;
    const VectorXd logits = cosine_logits(weights, feature, scale);
    REQUIRE(logits.size() == 5);
    for (int col = 0; col < 5; ++col) {
        CHECK(logits(col) ==
              doctest::Approx(scale * loop_cosine(weights.col(col), feature)).epsilon(1e-12));
        CHECK(std::abs(logits(col)) <= scale);
    }
    // the scale is a plain multiplier
    const VectorXd doubled = cosine_logits(weights, feature, 2.0 * scale);
    CHECK((doubled - 2.0 * logits).cwiseAbs().maxCoeff() < 1e-12);
    // and the cosine ignores feature magnitude
    const VectorXd rescaled = cosine_logits(weights, VectorXd(3.0 * feature), scale);
    CHECK((rescaled - logits).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(cosine_logits(weights, VectorXd::Zero(7), scale), ZeroVectorError);
    MatrixXd with_zero = weights;
    with_zero.col(2).setZero();
    CHECK_THROWS_AS(cosine_logits(with_zero, feature, scale), ZeroVectorError);
    CHECK_THROWS_AS(cosine_logits(weights, rng.gaussian_vector(6), scale), ShapeMismatchError);
}

namespace {

struct NewClassFixture {
    FeatureExtractor extractor = FeatureExtractor::random_projection(11, InputShape{1, 4, 4}, 6);
    StochasticHead head{6, 4, 16.0};
    ClassEmbeddingTable embeddings;
    std::vector<ImageGrid> shots;

    NewClassFixture() {
        // class 4's embedding matches classes 1 and 3 exactly; class 0 points away
        MatrixXd table(2, 5);
        table << 1, 0, 1, 0, 0,
                 0, 1, 1, 1, 1;
        // make class 3's embedding a scaled copy so the cosine ties at exactly 1
        table.col(3) *= 2.0;
        table.col(4) = table.col(1);
        embeddings = ClassEmbeddingTable(table);

        Rng rng(12);
        // deliberately add class 3 before class 1: a tie must still pick id 1
        for (int class_id : {3, 1, 0}) {
            ClassHead entry;
            entry.task_id = 0;
            entry.class_id = class_id;
            entry.means = rng.gaussian_matrix(6, 4);
            entry.sigma = VectorXd::Constant(6, 0.1 * (class_id + 1));
            head.add_class(std::move(entry));
        }
        for (int n = 0; n < 3; ++n) {
            ImageGrid image = ImageGrid::zeros(1, 4, 4);
            image.pixels = rng.gaussian_vector(16);
            shots.push_back(image);
        }
    }
};

}  // namespace

TEST_CASE("init_new_class averages per-rotation shot features") {
    NewClassFixture fx;
    init_new_class(fx.head, fx.extractor, 1, 4, fx.shots, fx.embeddings);
    REQUIRE(fx.head.has_class(4));
    const ClassHead& added = fx.head.at(fx.head.position_of(4));
    CHECK(added.task_id == 1);
    for (int r = 0; r < 4; ++r) {
        VectorXd centroid = VectorXd::Zero(6);
        for (const ImageGrid& shot : fx.shots) {
            centroid += fx.extractor.features(rotate(shot, r));
        }
        centroid /= 3.0;
        CHECK((added.means.col(r) - centroid).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("sigma donation picks the nearest base class, ties to the lowest id") {
    NewClassFixture fx;
    init_new_class(fx.head, fx.extractor, 1, 4, fx.shots, fx.embeddings);
    const ClassHead& added = fx.head.at(fx.head.position_of(4));
    // classes 1 and 3 both sit at cosine 1; class 1 wins the tie
    CHECK(added.sigma == fx.head.at(fx.head.position_of(1)).sigma);
}

TEST_CASE("init_new_class guards its inputs") {
    NewClassFixture fx;
    CHECK_THROWS_AS(init_new_class(fx.head, fx.extractor, 1, 4, {}, fx.embeddings),
                    EmptyClassError);

    StochasticHead empty(6, 4, 16.0);
    CHECK_THROWS_AS(init_new_class(empty, fx.extractor, 1, 4, fx.shots, fx.embeddings),
                    UnknownClassError);

    CHECK_THROWS_AS(init_new_class(fx.head, fx.extractor, 1, 9, fx.shots, fx.embeddings),
                    MissingEmbeddingError);
}

TEST_CASE("head checkpoints round-trip bit for bit") {
    StochasticHead head(3, 4, 12.5);
    Rng rng(13);
    head.add_class(make_class(rng, 0, 0, 3, 4, 0.1));
    head.add_class(make_class(rng, 0, 2, 3, 4, 0.0));
    head.add_class(make_class(rng, 1, 7, 3, 4, 0.3));
    head.at(2).means(1, 2) = 1.0 / 3.0;  // not representable in f32

    std::stringstream buf;
    save_head(head, buf);
    const StochasticHead loaded = load_head(buf);

    CHECK(loaded.feature_dim() == 3);
    CHECK(loaded.rotation_count() == 4);
    CHECK(loaded.scale() == 12.5);
    REQUIRE(loaded.class_count() == 3);
    for (int pos = 0; pos < 3; ++pos) {
        CHECK(loaded.at(pos).task_id == head.at(pos).task_id);
        CHECK(loaded.at(pos).class_id == head.at(pos).class_id);
        CHECK(loaded.at(pos).means == head.at(pos).means);
        CHECK(loaded.at(pos).sigma == head.at(pos).sigma);
    }

    std::stringstream original, reread;
    save_head(head, original);
    save_head(loaded, reread);
    CHECK(original.str() == reread.str());
}

TEST_CASE("head loader rejects corrupted files") {
    StochasticHead head(3, 2, 16.0);
    Rng rng(14);
    head.add_class(make_class(rng, 0, 0, 3, 2, 0.1));
    std::stringstream buf;
    save_head(head, buf);
    const std::string blob = buf.str();
    {
        std::string bad = blob;
        bad[2] = 'q';
        std::stringstream in(bad);
        CHECK_THROWS_AS(load_head(in), FormatError);
    }
    {
        std::stringstream in(blob.substr(0, blob.size() - 5));
        CHECK_THROWS_AS(load_head(in), FormatError);
    }
    {
        std::stringstream in(blob + "zz");
        CHECK_THROWS_AS(load_head(in), FormatError);
    }
}
