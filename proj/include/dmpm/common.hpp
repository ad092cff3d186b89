#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dmpm {

// Mirrors dmpm_status in the C API; keep the numeric values in sync.
enum class ErrorCode : int {
  kArgument = 1,
  kDimensionMismatch = 2,
  kEnumerationLimit = 3,
  kInvalidScore = 4,
  kUnreachableState = 5,
  kAssumptionViolation = 6,
  kModelCorrupt = 7,
  kTraining = 8,
  kCheckpointFormat = 9,
  kCheckpointVersion = 10,
  kCheckpointTruncated = 11,
  kConfigMismatch = 12,
  kConfig = 13,
  kIo = 14,
  kSampler = 15,
  kPlanning = 16,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorCode::kArgument, what);
}

/// Largest d for which 2^d tables are materialized.
inline constexpr int kEnumerationLimit = 24;

/// Forward-time floor for the 1/(1-alpha^2) terms.
inline constexpr double kForwardTimeGuard = 1e-4;

/// SplitMix64 finalizer; used to derive independent sub-stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_name(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for the named sub-stream `name` (optionally indexed) of a master seed.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
  return mix64(mix64(master ^ hash_name(name)) + index);
}

/// Seedable generator owned by one caller. Identical seeds give identical streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  /// Uniform on the open interval (0,1).
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }
  double exponential() { return -std::log(uniform_open()); }
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  std::uint64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    return std::poisson_distribution<std::uint64_t>(mean)(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dmpm
