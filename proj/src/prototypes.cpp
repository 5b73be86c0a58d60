#include "s3c/prototypes.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <utility>

#include "s3c/errors.hpp"
#include "s3c/serialize.hpp"

namespace s3c {

bool PrototypeStore::has_class(int class_id) const {
    for (const PrototypeEntry& e : entries_) {
        if (e.class_id == class_id) return true;
    }
    return false;
}

const PrototypeEntry& PrototypeStore::for_class(int class_id) const {
    for (const PrototypeEntry& e : entries_) {
        if (e.class_id == class_id) return e;
    }
    throw UnknownClassError("no prototype stored for class " + std::to_string(class_id));
}

void PrototypeStore::add(PrototypeEntry entry) {
    if (has_class(entry.class_id)) {
        throw DuplicateClassError("class " + std::to_string(entry.class_id) +
                                  " already has a prototype");
    }
    if (!entries_.empty() && entry.mean_feature.size() != dimension()) {
        throw ShapeMismatchError("prototype dimension mismatch");
    }
    entries_.push_back(std::move(entry));
}

MatrixXd PrototypeStore::matrix() const {
    MatrixXd out(dimension(), size());
    for (int i = 0; i < size(); ++i) {
        out.col(i) = entries_[static_cast<std::size_t>(i)].mean_feature;
    }
    return out;
}

std::vector<int> PrototypeStore::class_ids() const {
    std::vector<int> ids;
    ids.reserve(entries_.size());
    for (const PrototypeEntry& e : entries_) ids.push_back(e.class_id);
    return ids;
}

std::vector<PrototypeEntry> compute_prototypes(const FeatureExtractor& extractor,
                                               const Dataset& dataset,
                                               const std::vector<int>& sample_indices,
                                               const std::vector<int>& expected_class_ids,
                                               int task_id) {
    std::map<int, std::vector<int>> by_class;
    for (int class_id : expected_class_ids) by_class[class_id];
    for (int index : sample_indices) {
        int class_id = dataset.samples.at(static_cast<std::size_t>(index)).class_id;
        auto it = by_class.find(class_id);
        if (it == by_class.end()) {
            throw UnknownClassError("sample of unexpected class " + std::to_string(class_id));
        }
        it->second.push_back(index);
    }

    std::vector<PrototypeEntry> result;
    result.reserve(expected_class_ids.size());
    for (int class_id : expected_class_ids) {
        std::vector<int>& group = by_class[class_id];
        if (group.empty()) {
            throw EmptyClassError("class " + std::to_string(class_id) + " has no samples");
        }
        std::sort(group.begin(), group.end());
        MatrixXd features = extractor.features(image_batch(dataset, group, 0));
        PrototypeEntry entry;
        entry.class_id = class_id;
        entry.task_id = task_id;
        entry.mean_feature = features.rowwise().sum() / static_cast<double>(group.size());
        result.push_back(std::move(entry));
    }
    return result;
}

void update_store(PrototypeStore& store, const std::vector<PrototypeEntry>& new_prototypes) {
    for (const PrototypeEntry& entry : new_prototypes) store.add(entry);
}

namespace {

constexpr char kStoreMagic[5] = "S3CP";
constexpr std::uint16_t kStoreVersion = 1;

}  // namespace

void save_store(const PrototypeStore& store, std::ostream& out) {
    BinaryWriter writer(out);
    writer.bytes(kStoreMagic, 4);
    writer.u16(kStoreVersion);
    writer.u32(static_cast<std::uint32_t>(store.dimension()));
    writer.u32(static_cast<std::uint32_t>(store.size()));
    for (const PrototypeEntry& e : store.entries()) {
        writer.u32(static_cast<std::uint32_t>(e.class_id));
        writer.u16(static_cast<std::uint16_t>(e.task_id));
        for (Eigen::Index i = 0; i < e.mean_feature.size(); ++i) {
            writer.f32(static_cast<float>(e.mean_feature(i)));
        }
        writer.u64(store.extractor_fingerprint());
    }
}

void save_store(const PrototypeStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    save_store(store, out);
    if (!out) throw Error("write to " + path + " failed");
}

PrototypeStore load_store(std::istream& in) {
    BinaryReader reader(in);
    reader.expect_magic(kStoreMagic);
    std::uint16_t version = reader.u16();
    if (version != kStoreVersion) {
        reader.fail("unsupported prototype file version " + std::to_string(version));
    }
    std::uint32_t dim = reader.u32();
    std::uint32_t count = reader.u32();
    if (count > 0 && dim == 0) reader.fail("prototype dimension must be positive");
    PrototypeStore store;
    for (std::uint32_t n = 0; n < count; ++n) {
        PrototypeEntry entry;
        entry.class_id = static_cast<int>(reader.u32());
        entry.task_id = reader.u16();
        entry.mean_feature.resize(dim);
        for (std::uint32_t i = 0; i < dim; ++i) entry.mean_feature(i) = reader.f32();
        std::uint64_t fingerprint = reader.u64();
        if (n == 0) {
            store.set_extractor_fingerprint(fingerprint);
        } else if (fingerprint != store.extractor_fingerprint()) {
            reader.fail("records disagree about the extractor fingerprint");
        }
        store.add(std::move(entry));
    }
    reader.expect_end();
    return store;
}

PrototypeStore load_store(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return load_store(in);
}

bool fingerprint_matches(const PrototypeStore& store, const FeatureExtractor& extractor) {
    return store.extractor_fingerprint() == parameter_fingerprint(extractor);
}

}  // namespace s3c
