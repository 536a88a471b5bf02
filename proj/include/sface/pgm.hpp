#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "sface/errors.hpp"

namespace sface::data {

/// Grayscale image as stored on disk: row-major bytes, one per pixel.
struct RawImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;
};

namespace detail {

// Header tokens are separated by whitespace; '#' starts a comment that runs
// to end of line and can appear between any two tokens.
inline std::size_t pgm_int(std::string_view buf, std::size_t& pos, const std::string& name) {
  while (pos < buf.size()) {
    if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
      ++pos;
    } else if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  if (pos >= buf.size() || !std::isdigit(static_cast<unsigned char>(buf[pos])))
    throw FormatError(name + ": expected integer in header");
  std::size_t v = 0;
  while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos]))) {
    v = v * 10 + static_cast<std::size_t>(buf[pos] - '0');
    if (v > 1000000000) throw FormatError(name + ": header value out of range");
    ++pos;
  }
  return v;
}

}  // namespace detail

/// Parse a binary (P5) PGM from memory. `name` labels error messages.
inline RawImage decode_pgm(std::string_view buf, const std::string& name) {
  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5')
    throw FormatError(name + ": not a binary PGM (missing P5 magic)");
  std::size_t pos = 2;
  RawImage img;
  img.width = detail::pgm_int(buf, pos, name);
  img.height = detail::pgm_int(buf, pos, name);
  const std::size_t maxval = detail::pgm_int(buf, pos, name);
  if (img.width == 0 || img.height == 0)
    throw FormatError(name + ": zero image extent");
  if (maxval != 255)
    throw FormatError(name + ": unsupported maxval " + std::to_string(maxval) +
                      " (only 255 is handled)");
  if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos])))
    throw FormatError(name + ": missing whitespace after header");
  ++pos;  // exactly one whitespace byte separates header from raster
  const std::size_t need = img.width * img.height;
  if (buf.size() - pos < need)
    throw FormatError(name + ": truncated raster (" + std::to_string(buf.size() - pos) +
                      " of " + std::to_string(need) + " bytes)");
  img.pixels.assign(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                    buf.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return img;
}

inline RawImage load_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open image: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_pgm(buf, path.string());
}

inline std::string encode_pgm(const RawImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

inline void write_pgm(const RawImage& img, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open image for writing: " + path.string());
  const std::string buf = encode_pgm(img);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw FormatError("failed writing image: " + path.string());
}

}  // namespace sface::data
