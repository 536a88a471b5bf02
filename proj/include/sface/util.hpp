#pragma once

#include <bit>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sface/errors.hpp"

namespace sface::util {

// ---- little-endian binary i/o --------------------------------------------
// All on-disk formats in this project are little-endian regardless of host.

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_i64(std::ostream& os, std::int64_t v) {
  auto u = static_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f32(std::ostream& os, float v) {
  put_u32(os, std::bit_cast<std::uint32_t>(v));
}

inline std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::int64_t get_i64(std::istream& is, const std::string& what) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw FormatError("truncated " + what);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<std::int64_t>(u);
}

inline float get_f32(std::istream& is, const std::string& what) {
  return std::bit_cast<float>(get_u32(is, what));
}

// ---- number formatting -----------------------------------------------------

/// Shortest decimal string that round-trips the value (Python repr style).
inline std::string format_float(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, end);
}

// ---- base64 ----------------------------------------------------------------

inline std::string base64_encode(const unsigned char* data, std::size_t n) {
  static constexpr char tab[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= n; i += 3) {
    std::uint32_t w = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out.push_back(tab[(w >> 18) & 63]);
    out.push_back(tab[(w >> 12) & 63]);
    out.push_back(tab[(w >> 6) & 63]);
    out.push_back(tab[w & 63]);
  }
  if (i + 1 == n) {
    std::uint32_t w = data[i] << 16;
    out.push_back(tab[(w >> 18) & 63]);
    out.push_back(tab[(w >> 12) & 63]);
    out += "==";
  } else if (i + 2 == n) {
    std::uint32_t w = (data[i] << 16) | (data[i + 1] << 8);
    out.push_back(tab[(w >> 18) & 63]);
    out.push_back(tab[(w >> 12) & 63]);
    out.push_back(tab[(w >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

inline std::string base64_encode(std::string_view s) {
  return base64_encode(reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

inline std::vector<unsigned char> base64_decode(std::string_view s) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<unsigned char> out;
  out.reserve(s.size() / 4 * 3);
  std::uint32_t w = 0;
  int have = 0;
  std::size_t pad = 0;
  for (char c : s) {
    if (c == '\n' || c == '\r') continue;
    if (c == '=') {
      ++pad;
      continue;
    }
    if (pad) throw FormatError("base64: data after padding");
    int v = val(c);
    if (v < 0) throw FormatError(std::string("base64: invalid character '") + c + "'");
    w = (w << 6) | static_cast<std::uint32_t>(v);
    if (++have == 4) {
      out.push_back(static_cast<unsigned char>((w >> 16) & 0xff));
      out.push_back(static_cast<unsigned char>((w >> 8) & 0xff));
      out.push_back(static_cast<unsigned char>(w & 0xff));
      have = 0;
      w = 0;
    }
  }
  if (have == 3 && pad <= 1) {
    out.push_back(static_cast<unsigned char>((w >> 10) & 0xff));
    out.push_back(static_cast<unsigned char>((w >> 2) & 0xff));
  } else if (have == 2 && pad <= 2) {
    out.push_back(static_cast<unsigned char>((w >> 4) & 0xff));
  } else if (have != 0 || pad > 2) {
    throw FormatError("base64: truncated group");
  }
  return out;
}

// ---- key=value config files ------------------------------------------------
// One `key=value` pair per line; blank lines and lines starting with '#' are
// skipped; whitespace around key and value is trimmed.

inline std::map<std::string, std::string> parse_kv(std::istream& is) {
  auto trim = [](std::string s) {
    const char* ws = " \t\r";
    auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return std::string();
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
  };
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw FormatError("config line " + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(t.substr(0, eq));
    if (key.empty())
      throw FormatError("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open config file: " + path);
  return parse_kv(f);
}

// ---- clocks ------------------------------------------------------------------

inline std::int64_t wall_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

inline std::int64_t steady_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace sface::util
