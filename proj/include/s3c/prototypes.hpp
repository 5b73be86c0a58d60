#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "s3c/backbone.hpp"
#include "s3c/dataset.hpp"

namespace s3c {

struct PrototypeEntry {
    int class_id = 0;
    int task_id = 0;
    VectorXd mean_feature;
};

// One stored mean feature per seen class; the only memory of past sessions.
// Entries keep insertion order (base classes first, then each session's).
// The fingerprint records which extractor produced the features so stale
// stores are detectable after a reload.
class PrototypeStore {
public:
    PrototypeStore() = default;
    explicit PrototypeStore(std::uint64_t extractor_fingerprint)
        : fingerprint_(extractor_fingerprint) {}

    bool empty() const { return entries_.empty(); }
    int size() const { return static_cast<int>(entries_.size()); }
    const std::vector<PrototypeEntry>& entries() const { return entries_; }

    bool has_class(int class_id) const;
    /// Throws UnknownClassError.
    const PrototypeEntry& for_class(int class_id) const;
    /// Throws DuplicateClassError; all entries must share one dimension.
    void add(PrototypeEntry entry);

    Eigen::Index dimension() const {
        return entries_.empty() ? 0 : entries_.front().mean_feature.size();
    }
    /// Columns in insertion order; pairs with class_ids().
    MatrixXd matrix() const;
    std::vector<int> class_ids() const;

    std::uint64_t extractor_fingerprint() const { return fingerprint_; }
    void set_extractor_fingerprint(std::uint64_t value) { fingerprint_ = value; }

private:
    std::vector<PrototypeEntry> entries_;
    std::uint64_t fingerprint_ = 0;
};

/// Per-class mean feature of the unrotated images among `sample_indices`.
/// Summation runs in ascending sample-index order, so the result is invariant
/// to the caller's index order. Throws EmptyClassError when an expected class
/// has no samples and UnknownClassError when an index's class is unexpected.
std::vector<PrototypeEntry> compute_prototypes(const FeatureExtractor& extractor,
                                               const Dataset& dataset,
                                               const std::vector<int>& sample_indices,
                                               const std::vector<int>& expected_class_ids,
                                               int task_id);

/// Appends; existing entries are never touched.
void update_store(PrototypeStore& store, const std::vector<PrototypeEntry>& new_prototypes);

// File layout: magic "S3CP" | version u16 | feature_dim u32 | count u32 |
// records (class_id u32, task_id u16, feature_dim f32 LE, fingerprint u64).
// Every record must carry the same fingerprint.
void save_store(const PrototypeStore& store, std::ostream& out);
void save_store(const PrototypeStore& store, const std::string& path);
PrototypeStore load_store(std::istream& in);
PrototypeStore load_store(const std::string& path);

/// False when the store was built by a different extractor; callers warn.
bool fingerprint_matches(const PrototypeStore& store, const FeatureExtractor& extractor);

}  // namespace s3c
