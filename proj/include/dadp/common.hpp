#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dadp {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Error category, mapped to process exit codes by the CLI.
enum class ErrorKind { usage = 1, data = 2, numerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& what) { return Error(ErrorKind::usage, what); }
inline Error data_error(const std::string& what) { return Error(ErrorKind::data, what); }
inline Error numerical_error(const std::string& what) { return Error(ErrorKind::numerical, what); }

// ---------------------------------------------------------------------------
// Deterministic random numbers
//
// mt19937_64 output is fixed by the standard; the float transforms below
// avoid std::*_distribution, whose sequences vary between library
// implementations. Identical seeds give identical streams everywhere.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent child seed from a base seed and a stream id.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t x = base ^ (0x9e3779b97f4a7c15ULL + stream * 0xd1b54a32d192ed03ULL);
  splitmix64(x);
  return splitmix64(x);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    eng_.seed(derive_seed(seed, 0));
    has_spare_ = false;
    spare_ = 0.0;
  }

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1); never returns 0 (safe for log()).
  double uniform_open() { return (double(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = std::uint64_t(hi - lo) + 1;
    return lo + std::int64_t(next_u64() % span);
  }

  /// Standard normal via Box-Muller; second value of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Little-endian binary IO (host independent)
// ---------------------------------------------------------------------------

namespace io {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  write_u64(os, v);
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, std::uint32_t(s.size()));
  os.write(s.data(), std::streamsize(s.size()));
}

inline bool try_read_u32(std::istream& is, std::uint32_t& out) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  out = 0;
  for (int i = 0; i < 4; ++i) out |= std::uint32_t(b[i]) << (8 * i);
  return true;
}

inline bool try_read_u64(std::istream& is, std::uint64_t& out) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
  out = 0;
  for (int i = 0; i < 8; ++i) out |= std::uint64_t(b[i]) << (8 * i);
  return true;
}

inline std::uint32_t read_u32(std::istream& is, const std::string& what) {
  std::uint32_t v;
  if (!try_read_u32(is, v)) throw data_error("truncated file while reading " + what);
  return v;
}

inline std::uint64_t read_u64(std::istream& is, const std::string& what) {
  std::uint64_t v;
  if (!try_read_u64(is, v)) throw data_error("truncated file while reading " + what);
  return v;
}

inline double read_f64(std::istream& is, const std::string& what) {
  std::uint64_t v = read_u64(is, what);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

inline std::string read_string(std::istream& is, const std::string& what) {
  std::uint32_t len = read_u32(is, what);
  std::string s(len, '\0');
  if (len > 0 && !is.read(s.data(), len)) throw data_error("truncated file while reading " + what);
  return s;
}

}  // namespace io

// ---------------------------------------------------------------------------
// Formatting helpers (deterministic text output, locale independent)
// ---------------------------------------------------------------------------

inline std::string format_double(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

/// Short form used in file names and reports: "0.05" rather than "0.050000".
inline std::string format_compact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace dadp
