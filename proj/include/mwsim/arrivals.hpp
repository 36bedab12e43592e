#pragma once

// Arrival-vector laws on the rectangle [0, A^max]: independent coordinates,
// each an exponentially tilted uniform with density
//   f(x) = theta e^{theta x} / (e^{theta M} - 1)  on [0, M]
// (uniform 1/M at theta = 0). The tilt is solved to hit a target mean.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "mwsim/common.hpp"
#include "mwsim/rng.hpp"

namespace mwsim {

namespace tilted {

/// Mean of the unit-interval tilted law with tilt s: 1/(1-e^{-s}) - 1/s.
inline double unit_mean(double s) {
  if (std::abs(s) < 1e-4) return 0.5 + s / 12.0 - s * s * s / 720.0;
  if (s < 0.0) return 1.0 - unit_mean(-s);
  return 1.0 / (-std::expm1(-s)) - 1.0 / s;
}

inline double mean(double theta, double a_max) { return a_max * unit_mean(theta * a_max); }

inline double density(double x, double theta, double a_max) {
  if (x < 0.0 || x > a_max) return 0.0;
  const double s = theta * a_max;
  if (std::abs(s) < 1e-12) return 1.0 / a_max;
  return theta * std::exp(theta * x) / std::expm1(s);
}

inline double cdf(double x, double theta, double a_max) {
  if (x <= 0.0) return 0.0;
  if (x >= a_max) return 1.0;
  const double s = theta * a_max;
  if (std::abs(s) < 1e-12) return x / a_max;
  return std::expm1(theta * x) / std::expm1(s);
}

inline double inverse_cdf(double u, double theta, double a_max) {
  const double s = theta * a_max;
  if (std::abs(s) < 1e-12) return u * a_max;
  const double x = std::log1p(u * std::expm1(s)) / theta;
  return std::clamp(x, 0.0, a_max);
}

}  // namespace tilted

inline constexpr double kTiltBracket = 50.0;
inline constexpr int kTiltIterations = 200;
inline constexpr double kTiltTolerance = 1e-10;

/// Tilt theta such that the tilted law on [0, a_max] has the given mean.
inline double solve_tilt(double target_mean, double a_max) {
  if (!(a_max > 0.0) || !(target_mean > 0.0) || !(target_mean < a_max))
    throw Error(ErrorKind::MeanOutOfRange,
                "target mean " + std::to_string(target_mean) + " not in (0, " + std::to_string(a_max) + ")");
  double lo = -kTiltBracket;
  double hi = kTiltBracket;
  if (tilted::mean(lo, a_max) > target_mean || tilted::mean(hi, a_max) < target_mean)
    throw Error(ErrorKind::MeanOutOfRange, "target mean " + std::to_string(target_mean) + " outside the tilt bracket");
  for (int it = 0; it < kTiltIterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (tilted::mean(mid, a_max) < target_mean ? lo : hi) = mid;
  }
  const double theta = 0.5 * (lo + hi);
  if (std::abs(tilted::mean(theta, a_max) - target_mean) > kTiltTolerance)
    throw Error(ErrorKind::MeanOutOfRange, "tilt bisection did not reach tolerance");
  return theta;
}

struct ArrivalFamily {
  Vec a_max;
  Vec tilt;
  Vec mean;
  double density_lower = 0.0;
  double density_upper = 0.0;

  std::size_t dimension() const { return a_max.size(); }

  /// Joint density (product of coordinate densities).
  double density(std::span<const double> x) const {
    double f = 1.0;
    for (std::size_t i = 0; i < a_max.size(); ++i) f *= tilted::density(x[i], tilt[i], a_max[i]);
    return f;
  }
};

/// (delta_*, delta^*) bounds of the joint density on its rectangle.
inline std::pair<double, double> density_bounds(const ArrivalFamily& family) {
  double lower = 1.0;
  double upper = 1.0;
  for (std::size_t i = 0; i < family.a_max.size(); ++i) {
    const double f0 = tilted::density(0.0, family.tilt[i], family.a_max[i]);
    const double fm = tilted::density(family.a_max[i], family.tilt[i], family.a_max[i]);
    lower *= std::min(f0, fm);
    upper *= std::max(f0, fm);
  }
  return {lower, upper};
}

inline ArrivalFamily make_arrival_family(std::span<const double> a_max, std::span<const double> mean) {
  if (a_max.size() != mean.size()) throw Error(ErrorKind::DimensionMismatch, "a_max and mean differ in length");
  ArrivalFamily fam;
  fam.a_max.assign(a_max.begin(), a_max.end());
  fam.mean.assign(mean.begin(), mean.end());
  fam.tilt.resize(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) fam.tilt[i] = solve_tilt(mean[i], a_max[i]);
  std::tie(fam.density_lower, fam.density_upper) = density_bounds(fam);
  return fam;
}

/// Draws one arrival vector by coordinatewise inverse CDF.
inline void sample(const ArrivalFamily& family, RandomStream& rng, std::span<double> out) {
  for (std::size_t i = 0; i < family.a_max.size(); ++i)
    out[i] = tilted::inverse_cdf(rng.uniform(), family.tilt[i], family.a_max[i]);
}

inline Vec sample(const ArrivalFamily& family, RandomStream& rng) {
  Vec out(family.dimension());
  sample(family, rng, out);
  return out;
}

/// Precomputed inverse-CDF constants for the simulation hot loop.
class ArrivalSampler {
 public:
  explicit ArrivalSampler(const ArrivalFamily& family) : family_(&family), scale_(family.dimension()) {
    for (std::size_t i = 0; i < family.dimension(); ++i) scale_[i] = std::expm1(family.tilt[i] * family.a_max[i]);
  }

  void operator()(RandomStream& rng, std::span<double> out) const {
    for (std::size_t i = 0; i < scale_.size(); ++i) {
      const double u = rng.uniform();
      const double theta = family_->tilt[i];
      const double m = family_->a_max[i];
      if (std::abs(theta * m) < 1e-12) {
        out[i] = u * m;
      } else {
        out[i] = std::clamp(std::log1p(u * scale_[i]) / theta, 0.0, m);
      }
    }
  }

 private:
  const ArrivalFamily* family_;
  Vec scale_;
};

}  // namespace mwsim
