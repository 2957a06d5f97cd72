#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace citeflow {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input data; carries a 1-based line number when known.
struct ParseError : Error {
  explicit ParseError(const std::string& what, long long line = -1)
      : Error(line >= 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_number(line) {}
  long long line_number;
};

struct ShapeError : Error {
  using Error::Error;
};

// A numeric op produced NaN or Inf.
struct NonFiniteError : Error {
  using Error::Error;
};

std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);

// Seeded FNV-1a over bytes. Stable across platforms, unlike std::hash.
std::uint64_t fnv1a64(const std::string& s, std::uint64_t seed = 0);

// Uniform in [0,1) with 53 random bits. mt19937_64 output is pinned by the
// standard, so draws are reproducible everywhere; std::uniform_real_distribution
// is not.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Bounded draw used by the deterministic shuffles.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  return n == 0 ? 0 : rng() % n;
}

}  // namespace citeflow
