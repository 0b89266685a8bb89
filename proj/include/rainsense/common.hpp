// Shared plumbing: error type, UTC timestamps, hashing, CSV helpers.
#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace rainsense {

/// Domain error raised by every module; the CLI maps it to exit status 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Timestamp = std::chrono::sys_time<std::chrono::microseconds>;
using Date = std::chrono::sys_days;

inline Timestamp truncate_minute(Timestamp t) {
  return std::chrono::floor<std::chrono::minutes>(t);
}

inline Timestamp from_seconds(Timestamp base, double seconds) {
  return base + std::chrono::microseconds(std::llround(seconds * 1e6));
}

inline double seconds_between(Timestamp a, Timestamp b) {
  return std::chrono::duration<double>(b - a).count();
}

namespace detail {

inline int parse_int(std::string_view s, std::string_view what) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw Error("bad " + std::string(what) + " in timestamp: '" + std::string(s) + "'");
  }
  return v;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline Date parse_date(std::string_view s) {
  s = detail::trim(s);
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw Error("bad date: '" + std::string(s) + "'");
  using namespace std::chrono;
  year_month_day ymd{year{detail::parse_int(s.substr(0, 4), "year")},
                     month{static_cast<unsigned>(detail::parse_int(s.substr(5, 2), "month"))},
                     day{static_cast<unsigned>(detail::parse_int(s.substr(8, 2), "day"))}};
  if (!ymd.ok()) throw Error("invalid date: '" + std::string(s) + "'");
  return sys_days{ymd};
}

/// Accepts `YYYY-MM-DD[T ]HH:MM[:SS[.ffffff]][Z]`.
inline Timestamp parse_timestamp(std::string_view s) {
  s = detail::trim(s);
  if (!s.empty() && (s.back() == 'Z' || s.back() == 'z')) s.remove_suffix(1);
  if (s.size() < 16 || (s[10] != 'T' && s[10] != ' ') || s[13] != ':') {
    throw Error("bad timestamp: '" + std::string(s) + "'");
  }
  using namespace std::chrono;
  Timestamp t = parse_date(s.substr(0, 10));
  t += hours{detail::parse_int(s.substr(11, 2), "hour")};
  t += minutes{detail::parse_int(s.substr(14, 2), "minute")};
  if (s.size() > 16) {
    if (s[16] != ':' || s.size() < 19) throw Error("bad timestamp: '" + std::string(s) + "'");
    t += seconds{detail::parse_int(s.substr(17, 2), "second")};
    if (s.size() > 19) {
      if (s[19] != '.') throw Error("bad timestamp: '" + std::string(s) + "'");
      std::string frac(s.substr(20));
      if (frac.empty() || frac.size() > 6) throw Error("bad fractional seconds: '" + std::string(s) + "'");
      frac.resize(6, '0');
      t += microseconds{detail::parse_int(frac, "fraction")};
    }
  }
  return t;
}

inline std::string format_date(Date d) {
  std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

/// ISO-8601 UTC; fractional seconds are printed only when present.
inline std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  auto day = floor<days>(t);
  auto rest = t - day;
  auto h = duration_cast<hours>(rest);
  rest -= h;
  auto m = duration_cast<minutes>(rest);
  rest -= m;
  auto s = duration_cast<seconds>(rest);
  rest -= s;
  char buf[48];
  if (rest.count() == 0) {
    std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", format_date(day).c_str(), static_cast<int>(h.count()),
                  static_cast<int>(m.count()), static_cast<int>(s.count()));
  } else {
    std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02d.%06dZ", format_date(day).c_str(), static_cast<int>(h.count()),
                  static_cast<int>(m.count()), static_cast<int>(s.count()), static_cast<int>(rest.count()));
  }
  return buf;
}

/// Shortest representation that round-trips exactly.
inline std::string format_number(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline double parse_number(std::string_view s) {
  s = detail::trim(s);
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw Error("bad number: '" + std::string(s) + "'");
  return v;
}

/// FNV-1a, 64 bit.
class Hasher {
 public:
  Hasher& bytes(const void* data, std::size_t n) {
    auto p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Hasher& str(std::string_view s) { return bytes(s.data(), s.size()).bytes("\0", 1); }
  template <typename T>
  Hasher& value(const T& v) {
    return bytes(&v, sizeof v);
  }
  std::uint64_t digest() const { return state_; }
  std::string hex() const {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
    return buf;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    out.emplace_back(detail::trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace rainsense
