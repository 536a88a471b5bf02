#pragma once

// Shared helpers for the test binaries: a deterministic stand-in corpus with
// the same shape as the 40-subject face archive (92x112 binary PGMs laid out
// as s<subject>/<shot>.pgm). Each subject gets a smooth random pattern; each
// shot jitters it with a small shift, a brightness change, and pixel noise,
// so same-subject images stay correlated and different subjects do not.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "sface/pgm.hpp"

namespace testsupport {

inline sface::data::RawImage synth_face(int subject, int shot) {
  constexpr int W = 92, H = 112;

  std::mt19937 srng(1000003u * static_cast<std::uint32_t>(subject));
  auto su = [&srng] { return srng() * (1.0 / 4294967296.0); };
  const double fx = 0.03 + 0.06 * su(), px = 6.28 * su();
  const double fy = 0.03 + 0.06 * su(), py = 6.28 * su();
  struct Blob {
    double cx, cy, sigma, amp;
  } blobs[3];
  for (auto& b : blobs) {
    b.cx = W * su();
    b.cy = H * su();
    b.sigma = 8.0 + 14.0 * su();
    b.amp = (su() < 0.5 ? -1 : 1) * (40.0 + 40.0 * su());
  }

  std::mt19937 jrng(1000003u * static_cast<std::uint32_t>(subject) +
                    17u * static_cast<std::uint32_t>(shot) + 5u);
  auto ju = [&jrng] { return jrng() * (1.0 / 4294967296.0); };
  const double dx = 6.0 * ju() - 3.0, dy = 6.0 * ju() - 3.0;
  const double gain = 0.88 + 0.24 * ju();

  sface::data::RawImage img;
  img.width = W;
  img.height = H;
  img.pixels.resize(static_cast<std::size_t>(W) * H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double sx = x + dx, sy = y + dy;
      double v = 128.0 + 55.0 * std::sin(fx * sx + px) * std::cos(fy * sy + py);
      for (const auto& b : blobs) {
        const double d2 = (sx - b.cx) * (sx - b.cx) + (sy - b.cy) * (sy - b.cy);
        v += b.amp * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
      }
      v = v * gain + (10.0 * ju() - 5.0);
      img.pixels[static_cast<std::size_t>(y) * W + x] =
          static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  return img;
}

inline void write_corpus(const std::filesystem::path& root, int subjects = 40, int shots = 10) {
  for (int s = 1; s <= subjects; ++s) {
    const auto dir = root / ("s" + std::to_string(s));
    std::filesystem::create_directories(dir);
    for (int t = 1; t <= shots; ++t)
      sface::data::write_pgm(synth_face(s, t), dir / (std::to_string(t) + ".pgm"));
  }
}

/// Fresh unique directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  auto base = std::filesystem::temp_directory_path() / ("sface_" + tag);
  std::filesystem::remove_all(base);
  std::filesystem::create_directories(base);
  return base;
}

}  // namespace testsupport
