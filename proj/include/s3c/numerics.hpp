#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "s3c/errors.hpp"

namespace s3c {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kZeroVectorThreshold = 1e-12;

/// Returns v / ||v||_2. Throws ZeroVectorError when ||v||_2 < 1e-12.
VectorXd l2_normalize(const Eigen::Ref<const VectorXd>& v);

/// Cosine similarity <u/||u||, v/||v||>, clamped into [-1, 1].
double cosine_similarity(const Eigen::Ref<const VectorXd>& u,
                         const Eigen::Ref<const VectorXd>& v);

/// Max-subtracted softmax; entries positive and summing to 1.
VectorXd softmax(const Eigen::Ref<const VectorXd>& logits);

// Seeded random stream. The algorithm is pinned so streams are reproducible
// by construction, not by accident: the engine is std::mt19937_64 (bit-exact
// across platforms), uniforms take the top 53 bits of each 64-bit draw, and
// gaussians come from the basic Box-Muller transform with the sine-branch
// value cached for the next call. A single Rng must not be shared across
// concurrent callers; use split() to derive an independent stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal draw via Box-Muller.
    double gaussian();

    VectorXd gaussian_vector(Eigen::Index dim);
    MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols);

    /// Uniform integer in [0, n). Modulo bias is negligible for desk-scale n.
    std::uint64_t uniform_below(std::uint64_t n) { return next_u64() % n; }

    /// Derives a new independent stream and advances this one.
    Rng split();

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
    double cached_gaussian_ = 0.0;
    bool has_cached_gaussian_ = false;
};

/// In-place Fisher-Yates shuffle driven by the given stream.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[rng.uniform_below(i)]);
    }
}

/// Central-difference gradient estimate of a scalar function at x.
VectorXd finite_difference_gradient(const std::function<double(const VectorXd&)>& f,
                                    const VectorXd& x, double step);

/// |a - b| relative to max(|a|, |b|, floor); used by the gradient checks.
double relative_error(double a, double b, double floor = 1e-3);

/// FNV-1a 64-bit hash.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace s3c
