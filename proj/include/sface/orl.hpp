#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sface/errors.hpp"
#include "sface/pgm.hpp"

namespace sface::data {

/// Network-ready face image: fixed 100x100, intensities scaled into [0,1].
struct FaceImage {
  static constexpr std::size_t kSize = 100;
  std::vector<float> pixels;  // kSize * kSize, row-major
  int subject_id = 0;         // 1-based; 0 when unknown (ad-hoc probes)
  int shot_id = 0;
  std::string source_path;
};

/// Bilinear resize to 100x100 with corner-anchored sampling
/// (src = dst * (src_extent-1) / (dst_extent-1)), then scale bytes to [0,1].
inline FaceImage preprocess(const RawImage& raw, int subject_id = 0, int shot_id = 0,
                            std::string source_path = {}) {
  if (raw.width < 2 || raw.height < 2)
    throw std::invalid_argument("preprocess: image must be at least 2x2, got " +
                                std::to_string(raw.width) + "x" + std::to_string(raw.height));
  constexpr std::size_t S = FaceImage::kSize;
  FaceImage out;
  out.pixels.resize(S * S);
  out.subject_id = subject_id;
  out.shot_id = shot_id;
  out.source_path = std::move(source_path);
  const double sx_step = static_cast<double>(raw.width - 1) / (S - 1);
  const double sy_step = static_cast<double>(raw.height - 1) / (S - 1);
  for (std::size_t y = 0; y < S; ++y) {
    const double sy = y * sy_step;
    std::size_t y0 = static_cast<std::size_t>(sy);
    if (y0 >= raw.height - 1) y0 = raw.height - 2;
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < S; ++x) {
      const double sx = x * sx_step;
      std::size_t x0 = static_cast<std::size_t>(sx);
      if (x0 >= raw.width - 1) x0 = raw.width - 2;
      const double fx = sx - static_cast<double>(x0);
      const double p00 = raw.pixels[y0 * raw.width + x0];
      const double p01 = raw.pixels[y0 * raw.width + x0 + 1];
      const double p10 = raw.pixels[(y0 + 1) * raw.width + x0];
      const double p11 = raw.pixels[(y0 + 1) * raw.width + x0 + 1];
      const double v = p00 * (1 - fy) * (1 - fx) + p01 * (1 - fy) * fx + p10 * fy * (1 - fx) +
                       p11 * fy * fx;
      out.pixels[y * S + x] = static_cast<float>(v / 255.0);
    }
  }
  return out;
}

/// Load a corpus laid out as `<root>/s<subject>/<shot>.pgm`, subjects 1..40,
/// shots 1..10. Missing files are skipped; parse failures propagate.
inline std::vector<FaceImage> load_corpus(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root))
    throw std::invalid_argument("corpus root is not a directory: " + root.string());
  std::vector<FaceImage> images;
  for (int s = 1; s <= 40; ++s) {
    const auto dir = root / ("s" + std::to_string(s));
    if (!std::filesystem::is_directory(dir)) continue;
    for (int t = 1; t <= 10; ++t) {
      const auto path = dir / (std::to_string(t) + ".pgm");
      if (!std::filesystem::exists(path)) continue;
      images.push_back(preprocess(load_pgm(path), s, t, path.string()));
    }
  }
  return images;
}

struct DataSplit {
  std::vector<FaceImage> train, test;
  std::uint32_t seed = 0;
};

namespace detail {

/// Fisher-Yates with raw mt19937 words; reproduces across standard libraries.
inline void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = rng() % i;
    std::swap(idx[i - 1], idx[j]);
  }
}

inline double unit_uniform(std::mt19937& rng) { return rng() * (1.0 / 4294967296.0); }

}  // namespace detail

/// Shuffle all images with the seed and cut 90/10 into train/test.
/// The corpus must be complete (400 images) so splits are comparable.
inline DataSplit split_corpus(const std::vector<FaceImage>& images, std::uint32_t seed) {
  if (images.size() != 400)
    throw std::invalid_argument("split: expected the full 400-image corpus, found " +
                                std::to_string(images.size()));
  std::vector<std::size_t> idx(images.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937 rng(seed);
  detail::shuffle_indices(idx, rng);
  const std::size_t n_train = images.size() * 9 / 10;
  DataSplit out;
  out.seed = seed;
  out.train.reserve(n_train);
  out.test.reserve(images.size() - n_train);
  for (std::size_t i = 0; i < idx.size(); ++i)
    (i < n_train ? out.train : out.test).push_back(images[idx[i]]);
  return out;
}

/// Record the split for reproducibility: a seed line, then one
/// `<path> <role>` line per image in split order.
inline void write_manifest(const DataSplit& split, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot open manifest for writing: " + path.string());
  f << "seed " << split.seed << "\n";
  for (const auto& img : split.train) f << img.source_path << " train\n";
  for (const auto& img : split.test) f << img.source_path << " test\n";
  if (!f) throw FormatError("failed writing manifest: " + path.string());
}

enum class PairLabel { Genuine = 0, Impostor = 1 };

struct PairSample {
  FaceImage a, b;
  PairLabel label = PairLabel::Genuine;
};

struct PairIndices {
  std::size_t a = 0, b = 0;
  PairLabel label = PairLabel::Genuine;
};

/// Draw `count` index pairs over a pool described by its subject ids. Each
/// pair is genuine with probability `genuine_fraction`; genuine pairs take
/// two distinct images of one subject, impostor pairs take images of two
/// different subjects.
inline std::vector<PairIndices> sample_pair_indices(const std::vector<int>& subject_ids,
                                                    std::size_t count, double genuine_fraction,
                                                    std::uint32_t seed) {
  if (genuine_fraction < 0.0 || genuine_fraction > 1.0)
    throw std::invalid_argument("sample_pairs: genuine_fraction must be in [0,1]");
  std::map<int, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < subject_ids.size(); ++i) by_subject[subject_ids[i]].push_back(i);
  std::vector<const std::vector<std::size_t>*> genuine_subjects;
  for (const auto& [sid, members] : by_subject)
    if (members.size() >= 2) genuine_subjects.push_back(&members);
  if (genuine_fraction > 0.0 && genuine_subjects.empty())
    throw std::invalid_argument("sample_pairs: no subject has two images, genuine pairs impossible");
  if (genuine_fraction < 1.0 && by_subject.size() < 2)
    throw std::invalid_argument("sample_pairs: need images of two subjects for impostor pairs");

  std::mt19937 rng(seed);
  auto pick = [&rng](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  std::vector<PairIndices> out;
  out.reserve(count);
  for (std::size_t c = 0; c < count; ++c) {
    PairIndices p;
    if (detail::unit_uniform(rng) < genuine_fraction) {
      const auto& members = *genuine_subjects[pick(genuine_subjects.size())];
      const std::size_t i = pick(members.size());
      std::size_t j = pick(members.size() - 1);
      if (j >= i) ++j;
      p.a = members[i];
      p.b = members[j];
      p.label = PairLabel::Genuine;
    } else {
      p.a = pick(subject_ids.size());
      p.b = pick(subject_ids.size());
      while (subject_ids[p.b] == subject_ids[p.a]) p.b = pick(subject_ids.size());
      p.label = PairLabel::Impostor;
    }
    out.push_back(p);
  }
  return out;
}

/// Image-level variant of sample_pair_indices.
inline std::vector<PairSample> sample_pairs(const std::vector<FaceImage>& pool, std::size_t count,
                                            double genuine_fraction, std::uint32_t seed) {
  std::vector<int> subject_ids;
  subject_ids.reserve(pool.size());
  for (const auto& img : pool) subject_ids.push_back(img.subject_id);
  std::vector<PairSample> out;
  out.reserve(count);
  for (const PairIndices& p : sample_pair_indices(subject_ids, count, genuine_fraction, seed))
    out.push_back({pool[p.a], pool[p.b], p.label});
  return out;
}

}  // namespace sface::data
