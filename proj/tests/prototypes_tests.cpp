#include <doctest.h>

#include <algorithm>
#include <sstream>
#include <vector>

#include "s3c/backbone.hpp"
#include "s3c/dataset.hpp"
#include "s3c/errors.hpp"
#include "s3c/numerics.hpp"
#include "s3c/prototypes.hpp"

using namespace s3c;

namespace {

struct Fixture {
    Dataset data;
    FeatureExtractor extractor = FeatureExtractor::random_projection(3, InputShape{1, 4, 4}, 5);

    Fixture() {
        SyntheticSpec spec;
        spec.classes = 3;
        spec.train_per_class = 4;
        spec.test_per_class = 0;
        spec.image_size = 4;
        spec.latent_dim = 2;
        Rng rng(44);
        data = generate_synthetic(spec, rng).data;
    }
};

}  // namespace

TEST_CASE("prototypes are per-class means of unrotated features") {
    Fixture fx;
    std::vector<int> indices;
    for (int cls = 0; cls < 3; ++cls) {
        const auto& block = fx.data.samples_by_class[static_cast<std::size_t>(cls)];
        indices.insert(indices.end(), block.begin(), block.end());
    }
    const auto entries = compute_prototypes(fx.extractor, fx.data, indices, {0, 1, 2}, 0);

    REQUIRE(entries.size() == 3);
    for (int cls = 0; cls < 3; ++cls) {
        CHECK(entries[static_cast<std::size_t>(cls)].class_id == cls);
        CHECK(entries[static_cast<std::size_t>(cls)].task_id == 0);
        VectorXd expected = VectorXd::Zero(5);
        int count = 0;
        for (int idx : fx.data.samples_by_class[static_cast<std::size_t>(cls)]) {
            expected += fx.extractor.features(fx.data.samples[static_cast<std::size_t>(idx)].image);
            ++count;
        }
        expected /= static_cast<double>(count);
        CHECK((entries[static_cast<std::size_t>(cls)].mean_feature - expected)
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
    }
}

TEST_CASE("prototype means ignore the order of the index list") {
    Fixture fx;
    std::vector<int> indices = fx.data.samples_by_class[1];
    indices.insert(indices.end(), fx.data.samples_by_class[0].begin(),
                   fx.data.samples_by_class[0].end());
    const auto forward = compute_prototypes(fx.extractor, fx.data, indices, {0, 1}, 0);
    std::reverse(indices.begin(), indices.end());
    const auto reversed = compute_prototypes(fx.extractor, fx.data, indices, {0, 1}, 0);
    REQUIRE(forward.size() == reversed.size());
    for (std::size_t i = 0; i < forward.size(); ++i) {
        CHECK(forward[i].mean_feature == reversed[i].mean_feature);
    }
}

TEST_CASE("compute_prototypes flags missing and unexpected classes") {
    Fixture fx;
    const std::vector<int>& class0 = fx.data.samples_by_class[0];
    CHECK_THROWS_AS(compute_prototypes(fx.extractor, fx.data, class0, {0, 1}, 0),
                    EmptyClassError);
    CHECK_THROWS_AS(compute_prototypes(fx.extractor, fx.data, class0, {1}, 0),
                    UnknownClassError);
}

TEST_CASE("the store keeps insertion order and rejects duplicates") {
    PrototypeStore store(123u);
    CHECK(store.empty());
    PrototypeEntry a{4, 0, VectorXd::Constant(3, 1.0)};
    PrototypeEntry b{2, 1, VectorXd::Constant(3, 2.0)};
    store.add(a);
    store.add(b);
    CHECK(store.size() == 2);
    CHECK(store.dimension() == 3);
    CHECK(store.class_ids() == std::vector<int>{4, 2});
    CHECK(store.matrix().col(1) == b.mean_feature);
    CHECK(store.has_class(2));
    CHECK_FALSE(store.has_class(3));
    CHECK(store.for_class(4).task_id == 0);
    CHECK_THROWS_AS(store.for_class(9), UnknownClassError);
    CHECK_THROWS_AS(store.add(a), DuplicateClassError);
    PrototypeEntry wrong_dim{7, 1, VectorXd::Constant(4, 1.0)};
    CHECK_THROWS_AS(store.add(wrong_dim), ShapeMismatchError);
    CHECK(store.extractor_fingerprint() == 123u);
}

TEST_CASE("update_store appends without touching old entries") {
    PrototypeStore store(1u);
    store.add({0, 0, VectorXd::Constant(2, 5.0)});
    const VectorXd before = store.for_class(0).mean_feature;
    update_store(store, {{1, 1, VectorXd::Constant(2, 6.0)},
                         {2, 1, VectorXd::Constant(2, 7.0)}});
    CHECK(store.size() == 3);
    CHECK(store.for_class(0).mean_feature == before);
    CHECK(store.class_ids() == std::vector<int>{0, 1, 2});
}

TEST_CASE("store files round-trip through the f32 format") {
    Fixture fx;
    PrototypeStore store(parameter_fingerprint(fx.extractor));
    std::vector<int> indices = fx.data.samples_by_class[0];
    indices.insert(indices.end(), fx.data.samples_by_class[2].begin(),
                   fx.data.samples_by_class[2].end());
    update_store(store, compute_prototypes(fx.extractor, fx.data, indices, {0, 2}, 0));

    std::stringstream buf;
    save_store(store, buf);
    const PrototypeStore loaded = load_store(buf);

    CHECK(loaded.size() == store.size());
    CHECK(loaded.extractor_fingerprint() == store.extractor_fingerprint());
    CHECK(loaded.class_ids() == store.class_ids());
    for (const PrototypeEntry& e : store.entries()) {
        const VectorXd& reloaded = loaded.for_class(e.class_id).mean_feature;
        for (Eigen::Index i = 0; i < reloaded.size(); ++i) {
            CHECK(reloaded(i) == static_cast<double>(static_cast<float>(e.mean_feature(i))));
        }
        CHECK(loaded.for_class(e.class_id).task_id == e.task_id);
    }

    std::stringstream once, twice;
    save_store(loaded, once);
    save_store(load_store(once), twice);
    CHECK(once.str() == twice.str());
}

TEST_CASE("fingerprint_matches spots a swapped extractor") {
    Fixture fx;
    PrototypeStore store(parameter_fingerprint(fx.extractor));
    CHECK(fingerprint_matches(store, fx.extractor));
    const FeatureExtractor other =
        FeatureExtractor::random_projection(99, InputShape{1, 4, 4}, 5);
    CHECK_FALSE(fingerprint_matches(store, other));
}

TEST_CASE("store loader rejects corrupted files") {
    PrototypeStore store(7u);
    store.add({0, 0, VectorXd::Constant(2, 1.5)});
    std::stringstream buf;
    save_store(store, buf);
    const std::string blob = buf.str();
    {
        std::string bad = blob;
        bad[0] = '?';
        std::stringstream in(bad);
        CHECK_THROWS_AS(load_store(in), FormatError);
    }
    {
        std::stringstream in(blob.substr(0, blob.size() - 2));
        CHECK_THROWS_AS(load_store(in), FormatError);
    }
    {
        std::stringstream in(blob + "~");
        CHECK_THROWS_AS(load_store(in), FormatError);
    }
}
