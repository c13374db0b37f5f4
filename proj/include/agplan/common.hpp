#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace agplan {

using Vec3 = Eigen::Vector3d;

/// Locomotion mode of an aerial-ground robot.
enum class Mode : std::uint8_t { Ground, Aerial };

inline std::string_view to_string(Mode m) { return m == Mode::Ground ? "ground" : "aerial"; }

enum class ErrorCode {
  InvalidArgument,
  PlacementExhausted,
  ResolutionTooCoarse,
  OutOfSpan,
  DegreeUnderflow,
  Underdetermined,
  DegenerateSpacing,
  MarchEscapedGrid,
  Diverged,
  IoFailure,
};

inline std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::PlacementExhausted: return "PlacementExhausted";
    case ErrorCode::ResolutionTooCoarse: return "ResolutionTooCoarse";
    case ErrorCode::OutOfSpan: return "OutOfSpan";
    case ErrorCode::DegreeUnderflow: return "DegreeUnderflow";
    case ErrorCode::Underdetermined: return "Underdetermined";
    case ErrorCode::DegenerateSpacing: return "DegenerateSpacing";
    case ErrorCode::MarchEscapedGrid: return "MarchEscapedGrid";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// SplitMix64 finalizer; used for per-voxel hashing and seed derivation.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) { return mix64(a ^ mix64(b)); }

/// Maps 64 random bits to [0, 1) using the top 53 bits.
constexpr double unit_double(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Seeded generator whose output is identical on every platform.
/// std::mt19937_64 is fully specified by the standard; the distribution
/// mapping is done here rather than with <random> distributions, whose
/// algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return unit_double(engine_()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Integer in [lo, hi].
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(engine_() % span);
  }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

inline constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

}  // namespace agplan
