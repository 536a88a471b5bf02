#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <shared_mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sface/embedding.hpp"
#include "sface/errors.hpp"
#include "sface/util.hpp"

namespace sface {

struct GalleryRecord {
  std::string user_id;
  std::int64_t enrolled_at_ms = 0;
  Embedding embedding;
};

struct SearchHit {
  std::size_t index = 0;  // enrollment index into the gallery
  std::string user_id;
  float distance = 0;
  float score = 0;  // match_score(distance)
};

/**
 * @brief Append-only store of enrolled embeddings with nearest-neighbor search.
 *
 * Records keep their enrollment order forever; user ids are labels, not keys,
 * so one person may be enrolled many times. Searches rank by Euclidean
 * distance and break exact ties by enrollment index, which keeps results
 * reproducible. A reader/writer lock lets many searches run while enrollment
 * continues.
 */
class Gallery {
 public:
  Gallery() = default;

  std::size_t enroll(const std::string& user_id, const Embedding& e, std::int64_t enrolled_at_ms) {
    if (user_id.empty()) throw std::invalid_argument("enroll: user id must not be empty");
    for (float v : e.values)
      if (!std::isfinite(v)) throw NumericError("enroll: embedding has a non-finite component");
    std::unique_lock lock(mu_);
    records_.push_back({user_id, enrolled_at_ms, e});
    return records_.size() - 1;
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return records_.size();
  }

  GalleryRecord record(std::size_t index) const {
    std::shared_lock lock(mu_);
    if (index >= records_.size())
      throw std::invalid_argument("record: index " + std::to_string(index) + " out of range");
    return records_[index];
  }

  std::vector<GalleryRecord> snapshot() const {
    std::shared_lock lock(mu_);
    return records_;
  }

  /// The k nearest enrolled records to the probe (fewer if the gallery is
  /// smaller), ordered by (distance, enrollment index) ascending. k of zero
  /// is a well-defined empty query.
  std::vector<SearchHit> top_k(const Embedding& probe, std::size_t k) const {
    std::shared_lock lock(mu_);
    const std::size_t n = records_.size();
    std::vector<std::pair<float, std::size_t>> order(n);
    for (std::size_t i = 0; i < n; ++i)
      order[i] = {euclidean_distance(probe, records_[i].embedding), i};
    const std::size_t take = std::min(k, n);
    std::partial_sort(order.begin(), order.begin() + take, order.end());
    std::vector<SearchHit> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
      const auto& [dist, idx] = order[i];
      out.push_back({idx, records_[idx].user_id, dist, match_score(dist)});
    }
    return out;
  }

  // ---- binary persistence ----------------------------------------------------

  void save(std::ostream& os) const {
    std::shared_lock lock(mu_);
    os.write(kGalleryMagic, 7);
    util::put_u32(os, static_cast<std::uint32_t>(records_.size()));
    for (const auto& r : records_) {
      util::put_u32(os, static_cast<std::uint32_t>(r.user_id.size()));
      os.write(r.user_id.data(), static_cast<std::streamsize>(r.user_id.size()));
      util::put_i64(os, r.enrolled_at_ms);
      for (float v : r.embedding.values) util::put_f32(os, v);
    }
  }

  static Gallery load(std::istream& is) {
    char magic[7] = {};
    is.read(magic, 7);
    if (is.gcount() != 7 || std::string(magic, 7) != kGalleryMagic)
      throw FormatError("gallery: bad magic, not a gallery file");
    const std::uint32_t count = util::get_u32(is, "gallery record count");
    if (count > (1u << 24)) throw FormatError("gallery: implausible record count");
    std::vector<GalleryRecord> records;
    records.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      GalleryRecord r;
      const std::uint32_t idlen = util::get_u32(is, "gallery id length");
      if (idlen > 4096) throw FormatError("gallery: implausible user id length");
      r.user_id.resize(idlen);
      is.read(r.user_id.data(), idlen);
      if (is.gcount() != static_cast<std::streamsize>(idlen))
        throw FormatError("gallery: truncated user id");
      r.enrolled_at_ms = util::get_i64(is, "gallery timestamp");
      for (auto& v : r.embedding.values) v = util::get_f32(is, "gallery embedding");
      records.push_back(std::move(r));
    }
    is.peek();
    if (!is.eof()) throw FormatError("gallery: trailing bytes after last record");
    return Gallery(std::move(records));
  }

  void save_file(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path);
    save(os);
    if (!os) throw FormatError("write failed: " + path);
  }

  static Gallery load_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path);
    return load(is);
  }

  // ---- CSV interchange ---------------------------------------------------------

  /// Writes "ID,Vector1..Vector5" rows. Ids containing commas, quotes, or
  /// newlines are quoted; vector components use %.9g, which round-trips
  /// single-precision exactly. Timestamps are not part of this format.
  void export_csv(std::ostream& os) const {
    std::shared_lock lock(mu_);
    os << kCsvHeader << "\n";
    for (const auto& r : records_) {
      os << csv_quote(r.user_id);
      char buf[32];
      for (float v : r.embedding.values) {
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
        os << ',' << buf;
      }
      os << "\n";
    }
  }

  static Gallery import_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("csv row 1: missing header");
    strip_cr(line);
    if (line != kCsvHeader)
      throw FormatError("csv row 1: header must be exactly \"" + std::string(kCsvHeader) + "\"");
    std::vector<GalleryRecord> records;
    std::size_t row = 1;
    while (std::getline(is, line)) {
      ++row;
      strip_cr(line);
      if (line.empty()) continue;
      const std::vector<std::string> fields = split_csv_row(line, row);
      if (fields.size() != 1 + kEmbeddingDim)
        throw FormatError("csv row " + std::to_string(row) + ": expected " +
                          std::to_string(1 + kEmbeddingDim) + " fields, got " +
                          std::to_string(fields.size()));
      GalleryRecord r;
      r.user_id = fields[0];
      if (r.user_id.empty())
        throw FormatError("csv row " + std::to_string(row) + ": empty user id");
      for (std::size_t d = 0; d < kEmbeddingDim; ++d) {
        const std::string& f = fields[1 + d];
        std::size_t used = 0;
        float v = 0;
        try {
          v = std::stof(f, &used);
        } catch (const std::exception&) {
          throw FormatError("csv row " + std::to_string(row) + ": bad number \"" + f + "\"");
        }
        if (used != f.size() || !std::isfinite(v))
          throw FormatError("csv row " + std::to_string(row) + ": bad number \"" + f + "\"");
        r.embedding.values[d] = v;
      }
      records.push_back(std::move(r));
    }
    return Gallery(std::move(records));
  }

  void export_csv_file(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path);
    export_csv(os);
    if (!os) throw FormatError("write failed: " + path);
  }

  static Gallery import_csv_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path);
    return import_csv(is);
  }

  static constexpr const char* kGalleryMagic = "SFGAL1\n";
  static constexpr const char* kCsvHeader = "ID,Vector1,Vector2,Vector3,Vector4,Vector5";

 private:
  explicit Gallery(std::vector<GalleryRecord> records) : records_(std::move(records)) {}

  static void strip_cr(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  }

  static std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
      out += c;
      if (c == '"') out += '"';
    }
    out += '"';
    return out;
  }

  static std::vector<std::string> split_csv_row(const std::string& line, std::size_t row) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    std::size_t i = 0;
    while (i < line.size()) {
      const char c = line[i];
      if (quoted) {
        if (c == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            cur += '"';
            ++i;
          } else {
            quoted = false;
          }
        } else {
          cur += c;
        }
      } else if (c == '"') {
        if (!cur.empty())
          throw FormatError("csv row " + std::to_string(row) + ": quote inside unquoted field");
        quoted = true;
      } else if (c == ',') {
        out.push_back(std::move(cur));
        cur.clear();
      } else {
        cur += c;
      }
      ++i;
    }
    if (quoted) throw FormatError("csv row " + std::to_string(row) + ": unterminated quote");
    out.push_back(std::move(cur));
    return out;
  }

  mutable std::shared_mutex mu_;
  std::vector<GalleryRecord> records_;
};

}  // namespace sface
