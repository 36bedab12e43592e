#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mwsim {

using Vec = std::vector<double>;

enum class ErrorKind {
  ConfigInvalid,
  DimensionTooLarge,
  NotMaximal,
  NotOnBoundary,
  DegenerateFace,
  LoadPointInvalid,
  MeanOutOfRange,
  EmptyFace,
  InsufficientData,
  DimensionMismatch,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::DimensionTooLarge: return "DimensionTooLarge";
    case ErrorKind::NotMaximal: return "NotMaximal";
    case ErrorKind::NotOnBoundary: return "NotOnBoundary";
    case ErrorKind::DegenerateFace: return "DegenerateFace";
    case ErrorKind::LoadPointInvalid: return "LoadPointInvalid";
    case ErrorKind::MeanOutOfRange: return "MeanOutOfRange";
    case ErrorKind::EmptyFace: return "EmptyFace";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Absolute tolerance for geometric equality tests.
inline constexpr double kGeomTol = 1e-9;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline Vec scaled(std::span<const double> a, double c) {
  Vec out(a.begin(), a.end());
  for (auto& x : out) x *= c;
  return out;
}

inline Vec add(std::span<const double> a, std::span<const double> b) {
  Vec out(a.begin(), a.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

inline Vec sub(std::span<const double> a, std::span<const double> b) {
  Vec out(a.begin(), a.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

inline Vec hadamard(std::span<const double> a, std::span<const double> b) {
  Vec out(a.begin(), a.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

inline Vec normalized(std::span<const double> a) {
  const double n = norm(a);
  if (n == 0.0) throw Error(ErrorKind::ConfigInvalid, "cannot normalize a zero vector");
  return scaled(a, 1.0 / n);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace mwsim
