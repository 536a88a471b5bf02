#pragma once

#include <cstdlib>
#include <stdexcept>

#include "sface/pgm.hpp"

namespace sface {

/// Default motion threshold: mean per-pixel change of 8 grey levels.
inline constexpr double kMotionThreshold = 8.0 / 255.0;

/// Mean absolute per-pixel difference between two equally sized frames,
/// normalized to [0, 1].
inline double motion_score(const data::RawImage& a, const data::RawImage& b) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("motion: frame dimensions differ");
  if (a.pixels.empty()) throw std::invalid_argument("motion: empty frames");
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i)
    total += static_cast<std::uint64_t>(
        std::abs(static_cast<int>(a.pixels[i]) - static_cast<int>(b.pixels[i])));
  return static_cast<double>(total) / (255.0 * static_cast<double>(a.pixels.size()));
}

/// True when enough changed between consecutive frames to be worth analyzing.
inline bool has_motion(const data::RawImage& prev, const data::RawImage& cur,
                       double threshold = kMotionThreshold) {
  return motion_score(prev, cur) > threshold;
}

}  // namespace sface
