#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace sface {

inline constexpr std::size_t kEmbeddingDim = 5;

/// A face reduced to a 5-d feature vector; verification and identification
/// both operate on Euclidean distances between these.
struct Embedding {
  std::array<float, kEmbeddingDim> values{};
};

inline float euclidean_distance(const Embedding& a, const Embedding& b) {
  double s = 0;
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
    const double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
    s += d * d;
  }
  return static_cast<float>(std::sqrt(s));
}

/// Similarity in (0, 1]: 1 at distance zero, decaying with distance.
inline float match_score(float distance) { return 1.0f / (1.0f + distance); }

}  // namespace sface
