#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

namespace gsid {

// Error hierarchy. Every failure surfaced by the library derives from Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error { using Error::Error; };
class RoutingError : public Error { using Error::Error; };
class SelectionError : public Error { using Error::Error; };
class IntentError : public Error { using Error::Error; };
class GraphError : public Error { using Error::Error; };
class DatasetError : public Error { using Error::Error; };
class InjectionError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class UsageError : public Error { using Error::Error; };
class EncodingError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class CheckError : public Error { using Error::Error; };
class TrainingError : public Error { using Error::Error; };

class IngestError : public Error {
 public:
  IngestError(std::string where, const std::string& what)
      : Error(where + ": " + what), location_(std::move(where)) {}
  const std::string& location() const noexcept { return location_; }

 private:
  std::string location_;
};

/// Inclusive integer interval.
struct IntRange {
  int lo = 0;
  int hi = 0;

  constexpr bool contains(int v) const noexcept { return v >= lo && v <= hi; }
  constexpr int size() const noexcept { return hi - lo + 1; }
  constexpr bool valid() const noexcept { return lo <= hi; }
  friend constexpr bool operator==(const IntRange&, const IntRange&) = default;
};

inline std::string to_string(const IntRange& r) {
  return std::to_string(r.lo) + "-" + std::to_string(r.hi);
}

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent sub-seeds.
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename... Rest>
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, Rest... rest) noexcept {
  return mix_seed(mix_seed(a, b), static_cast<std::uint64_t>(rest)...);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, const IntRange& r) { return uniform_int(rng, r.lo, r.hi); }

inline double uniform_real(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace gsid
