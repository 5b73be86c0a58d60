#include "s3c/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace s3c {

VectorXd l2_normalize(const Eigen::Ref<const VectorXd>& v) {
    const double norm = v.norm();
    if (norm < kZeroVectorThreshold) {
        throw ZeroVectorError();
    }
    return v / norm;
}

double cosine_similarity(const Eigen::Ref<const VectorXd>& u,
                         const Eigen::Ref<const VectorXd>& v) {
    if (u.size() != v.size()) {
        throw ShapeMismatchError("cosine_similarity: dimension mismatch");
    }
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu < kZeroVectorThreshold || nv < kZeroVectorThreshold) {
        throw ZeroVectorError();
    }
    return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

VectorXd softmax(const Eigen::Ref<const VectorXd>& logits) {
    if (logits.size() == 0) {
        throw ShapeMismatchError("softmax: empty input");
    }
    VectorXd shifted = (logits.array() - logits.maxCoeff()).exp();
    return shifted / shifted.sum();
}

double Rng::gaussian() {
    if (has_cached_gaussian_) {
        has_cached_gaussian_ = false;
        return cached_gaussian_;
    }
    // u1 in (0, 1] keeps the log finite.
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    cached_gaussian_ = radius * std::sin(angle);
    has_cached_gaussian_ = true;
    return radius * std::cos(angle);
}

VectorXd Rng::gaussian_vector(Eigen::Index dim) {
    VectorXd out(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        out[i] = gaussian();
    }
    return out;
}

MatrixXd Rng::gaussian_matrix(Eigen::Index rows, Eigen::Index cols) {
    MatrixXd out(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) {
            out(r, c) = gaussian();
        }
    }
    return out;
}

Rng Rng::split() {
    const std::uint64_t derived = next_u64() ^ 0x9e3779b97f4a7c15ULL;
    return Rng(derived * 0xbf58476d1ce4e5b9ULL + 1);
}

VectorXd finite_difference_gradient(const std::function<double(const VectorXd&)>& f,
                                    const VectorXd& x, double step) {
    VectorXd grad(x.size());
    VectorXd probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double original = probe[i];
        probe[i] = original + step;
        const double plus = f(probe);
        probe[i] = original - step;
        const double minus = f(probe);
        probe[i] = original;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    return grad;
}

double relative_error(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t basis) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t hash = basis;
    for (std::size_t i = 0; i < size; ++i) {
        hash ^= bytes[i];
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

}  // namespace s3c
