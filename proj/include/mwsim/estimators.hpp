#pragma once

// Steady-state estimation and the metrics reported per load point:
// empirical distributions of Y, projected two-sample KS, smoothness gaps,
// Lyapunov drift tables, face fractions, wasted service, tail fits and the
// cone-boundary distance diagnostic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mwsim/common.hpp"
#include "mwsim/geometry.hpp"
#include "mwsim/rng.hpp"
#include "mwsim/simcore.hpp"
#include "mwsim/ylimit.hpp"

namespace mwsim {

inline constexpr std::size_t kBatchCount = 32;

struct MeanEstimate {
  double mean = 0.0;
  double se = 0.0;
};

/// Mean with a batch-means standard error (contiguous batches).
inline MeanEstimate batch_means(std::span<const double> series, std::size_t batches = kBatchCount) {
  MeanEstimate out;
  const std::size_t n = series.size();
  if (n == 0) return out;
  out.mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
  if (n < 2 * batches) {
    if (n < 2) return out;
    double ss = 0.0;
    for (double x : series) ss += (x - out.mean) * (x - out.mean);
    out.se = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
    return out;
  }
  Vec bm(batches, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t lo = b * n / batches;
    const std::size_t hi = (b + 1) * n / batches;
    bm[b] = std::accumulate(series.begin() + static_cast<std::ptrdiff_t>(lo), series.begin() + static_cast<std::ptrdiff_t>(hi), 0.0) /
            static_cast<double>(hi - lo);
  }
  const double m = std::accumulate(bm.begin(), bm.end(), 0.0) / static_cast<double>(batches);
  double ss = 0.0;
  for (double x : bm) ss += (x - m) * (x - m);
  out.se = std::sqrt(ss / static_cast<double>(batches - 1) / static_cast<double>(batches));
  return out;
}

/// Streaming batch means: keeps sums of fixed-size blocks and groups them
/// into batches on demand.
class OnlineBatchMeans {
 public:
  explicit OnlineBatchMeans(std::size_t block = 1024) : block_(block) {}

  void add(double x) {
    total_ += x;
    ++count_;
    partial_ += x;
    if (++in_block_ == block_) {
      block_means_.push_back(partial_ / static_cast<double>(block_));
      partial_ = 0.0;
      in_block_ = 0;
    }
  }

  std::uint64_t count() const { return count_; }

  MeanEstimate finish() const {
    MeanEstimate out;
    if (count_ == 0) return out;
    out.mean = total_ / static_cast<double>(count_);
    if (block_means_.size() >= 2) out.se = batch_means(block_means_).se;
    return out;
  }

 private:
  std::size_t block_;
  double total_ = 0.0;
  double partial_ = 0.0;
  std::size_t in_block_ = 0;
  std::uint64_t count_ = 0;
  Vec block_means_;
};

/// Type-7 (linear interpolation) quantile of an ascending-sorted sample.
inline double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorKind::InsufficientData, "quantile of an empty sample");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(Vec values, double p) {
  std::sort(values.begin(), values.end());
  return sorted_quantile(values, p);
}

/// Uniformly weighted sample set in R^m, stored row-major.
class EmpiricalDistribution {
 public:
  explicit EmpiricalDistribution(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dimension() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }

  void add(std::span<const double> x) {
    if (x.size() != dim_) throw Error(ErrorKind::DimensionMismatch, "sample has wrong dimension");
    data_.insert(data_.end(), x.begin(), x.end());
  }

  std::span<const double> sample(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  Vec projected(std::span<const double> direction) const {
    if (direction.size() != dim_) throw Error(ErrorKind::DimensionMismatch, "direction has wrong dimension");
    Vec out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = dot(sample(i), direction);
    return out;
  }

  Vec norms() const {
    Vec out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = norm(sample(i));
    return out;
  }

  double quantile(std::span<const double> direction, double p) const { return mwsim::quantile(projected(direction), p); }

  const Vec& raw() const { return data_; }

 private:
  std::size_t dim_;
  Vec data_;
};

struct StationaryEstimate {
  std::uint64_t burn_in = 0;
  std::uint64_t thin = 1;
  std::size_t n_samples = 0;
  EmpiricalDistribution distribution;
  MeanEstimate mean_norm;
};

/// Collects every thin-th vector from slot burn_in onwards.
class StationarySampler {
 public:
  StationarySampler(std::size_t dim, std::uint64_t burn_in, std::uint64_t thin)
      : burn_in_(burn_in), thin_(thin), dist_(dim) {
    if (thin == 0) throw Error(ErrorKind::ConfigInvalid, "thin must be at least 1");
  }

  void feed(std::uint64_t t, std::span<const double> x) {
    seen_ = std::max(seen_, t + 1);
    if (t >= burn_in_ && (t - burn_in_) % thin_ == 0) dist_.add(x);
  }

  StationaryEstimate finish() const {
    if (seen_ <= burn_in_ || dist_.size() == 0)
      throw Error(ErrorKind::InsufficientData, "stream length does not exceed the burn-in");
    StationaryEstimate est;
    est.burn_in = burn_in_;
    est.thin = thin_;
    est.n_samples = dist_.size();
    est.distribution = dist_;
    est.mean_norm = batch_means(dist_.norms());
    return est;
  }

 private:
  std::uint64_t burn_in_;
  std::uint64_t thin_;
  std::uint64_t seen_ = 0;
  EmpiricalDistribution dist_;
};

inline StationaryEstimate estimate_stationary(const std::vector<Vec>& stream, std::uint64_t burn_in, std::uint64_t thin) {
  if (stream.size() <= burn_in) throw Error(ErrorKind::InsufficientData, "stream length does not exceed the burn-in");
  StationarySampler s(stream.front().size(), burn_in, thin);
  for (std::size_t t = 0; t < stream.size(); ++t) s.feed(t, stream[t]);
  return s.finish();
}

/// Same, selecting a field from each record (e.g. &SlotRecord::y).
template <class Record>
StationaryEstimate estimate_stationary(const std::vector<Record>& stream, std::uint64_t burn_in, std::uint64_t thin,
                                       Vec Record::*field) {
  if (stream.size() <= burn_in) throw Error(ErrorKind::InsufficientData, "stream length does not exceed the burn-in");
  StationarySampler s((stream.front().*field).size(), burn_in, thin);
  for (std::size_t t = 0; t < stream.size(); ++t) s.feed(t, stream[t].*field);
  return s.finish();
}

/// Classical two-sample Kolmogorov-Smirnov statistic sup|F_a - F_b|.
inline double ks_statistic(Vec a, Vec b) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::InsufficientData, "KS needs two nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

/// Energy distance 2 * integral (F_a - F_b)^2 dx between 1-D samples.
inline double energy_distance_1d(Vec a, Vec b) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::InsufficientData, "energy distance needs two nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double x_prev = std::min(a.front(), b.front());
  double total = 0.0;
  while (i < a.size() || j < b.size()) {
    const double x = (j == b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
    const double diff = static_cast<double>(i) / na - static_cast<double>(j) / nb;
    total += diff * diff * (x - x_prev);
    x_prev = x;
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
  }
  return 2.0 * total;
}

inline constexpr std::size_t kExtraDirections = 8;
inline constexpr std::uint64_t kDirectionSeed = 0x6d77'7369'6d64'6972ull;

/// Perp-basis axes, plus `extra` fixed pseudo-random unit directions when
/// the dimension is at least 2 (in 1-D every direction is +-axis).
inline std::vector<Vec> default_directions(std::size_t m, std::size_t extra = kExtraDirections) {
  std::vector<Vec> dirs;
  for (std::size_t b = 0; b < m; ++b) {
    Vec e(m, 0.0);
    e[b] = 1.0;
    dirs.push_back(std::move(e));
  }
  if (m >= 2) {
    RandomStream rng(kDirectionSeed, Substream::Directions);
    for (std::size_t k = 0; k < extra; ++k) {
      Vec v(m);
      for (auto& c : v) c = rng.normal();
      dirs.push_back(normalized(v));
    }
  }
  return dirs;
}

struct KsResult {
  double statistic = 0.0;
  Vec per_direction;
  std::size_t argmax = 0;
};

inline KsResult ks_by_direction(const EmpiricalDistribution& p, const EmpiricalDistribution& q,
                                const std::vector<Vec>& directions) {
  if (p.dimension() != q.dimension()) throw Error(ErrorKind::DimensionMismatch, "distributions differ in dimension");
  if (directions.empty()) throw Error(ErrorKind::ConfigInvalid, "no KS directions");
  KsResult r;
  for (std::size_t k = 0; k < directions.size(); ++k) {
    const double d = ks_statistic(p.projected(directions[k]), q.projected(directions[k]));
    r.per_direction.push_back(d);
    if (d > r.statistic) {
      r.statistic = d;
      r.argmax = k;
    }
  }
  return r;
}

/// Max over directions of the projected two-sample KS statistic.
inline double ks_distance(const EmpiricalDistribution& p, const EmpiricalDistribution& q,
                          const std::vector<Vec>& directions) {
  return ks_by_direction(p, q, directions).statistic;
}

inline double ks_distance(const EmpiricalDistribution& p, const EmpiricalDistribution& q) {
  if (p.dimension() != q.dimension()) throw Error(ErrorKind::DimensionMismatch, "distributions differ in dimension");
  return ks_distance(p, q, default_directions(p.dimension()));
}

inline double energy_distance(const EmpiricalDistribution& p, const EmpiricalDistribution& q,
                              const std::vector<Vec>& directions) {
  if (p.dimension() != q.dimension()) throw Error(ErrorKind::DimensionMismatch, "distributions differ in dimension");
  double e = 0.0;
  for (const auto& d : directions) e = std::max(e, energy_distance_1d(p.projected(d), q.projected(d)));
  return e;
}

/// Effective sample size of a correlated series from batch means.
inline double effective_sample_size(std::span<const double> series, std::size_t batches = kBatchCount) {
  const std::size_t n = series.size();
  if (n < 2 * batches) return static_cast<double>(n);
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : series) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(n - 1);
  const double se = batch_means(series, batches).se;
  if (var == 0.0 || se == 0.0) return static_cast<double>(n);
  return std::min(static_cast<double>(n), var / (se * se));
}

/// Standard deviation of the Kolmogorov limit law times sqrt(1/n + 1/m).
inline double ks_standard_error(double n_eff, double m_eff) { return 0.2603 * std::sqrt(1.0 / n_eff + 1.0 / m_eff); }

/// Per-flow fraction of disjoint length-T windows with zero cumulative service.
class SmoothnessGapAccumulator {
 public:
  SmoothnessGapAccumulator(std::size_t flows, std::vector<std::uint64_t> windows, std::uint64_t burn_in = 0)
      : flows_(flows), windows_(std::move(windows)), burn_in_(burn_in) {
    for (auto w : windows_)
      if (w == 0) throw Error(ErrorKind::ConfigInvalid, "window length must be positive");
    served_.assign(windows_.size(), std::vector<bool>(flows, false));
    zero_.assign(windows_.size(), std::vector<std::uint64_t>(flows, 0));
    complete_.assign(windows_.size(), 0);
    position_.assign(windows_.size(), 0);
  }

  void feed(std::uint64_t t, std::span<const double> service) {
    if (t < burn_in_) return;
    for (std::size_t w = 0; w < windows_.size(); ++w) {
      auto& served = served_[w];
      for (std::size_t i = 0; i < flows_; ++i)
        if (service[i] > 0.0) served[i] = true;
      if (++position_[w] == windows_[w]) {
        for (std::size_t i = 0; i < flows_; ++i) {
          if (!served[i]) ++zero_[w][i];
          served[i] = false;
        }
        position_[w] = 0;
        ++complete_[w];
      }
    }
  }

  /// Gap probability per flow for the w-th window length.
  Vec result(std::size_t w) const {
    if (complete_[w] == 0) throw Error(ErrorKind::InsufficientData, "no complete window of length " + std::to_string(windows_[w]));
    Vec out(flows_);
    for (std::size_t i = 0; i < flows_; ++i) out[i] = static_cast<double>(zero_[w][i]) / static_cast<double>(complete_[w]);
    return out;
  }

  std::uint64_t windows_completed(std::size_t w) const { return complete_[w]; }
  const std::vector<std::uint64_t>& window_lengths() const { return windows_; }

 private:
  std::size_t flows_;
  std::vector<std::uint64_t> windows_;
  std::uint64_t burn_in_;
  std::vector<std::vector<bool>> served_;
  std::vector<std::vector<std::uint64_t>> zero_;
  std::vector<std::uint64_t> complete_;
  std::vector<std::uint64_t> position_;
};

template <class Record>
Vec smoothness_gap(const std::vector<Record>& stream, std::uint64_t window, std::uint64_t burn_in = 0) {
  if (stream.empty()) throw Error(ErrorKind::InsufficientData, "empty stream");
  SmoothnessGapAccumulator acc(stream.front().service.size(), {window}, burn_in);
  for (std::size_t t = 0; t < stream.size(); ++t) acc.feed(t, stream[t].service);
  return acc.result(0);
}

enum class Lyapunov { SqrtWeightedNorm, WeightedSquare };

/// ||sqrt(gamma) q|| or sum gamma_i q_i^2.
inline double lyapunov_value(Lyapunov kind, std::span<const double> q, std::span<const double> gamma) {
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) s += gamma[i] * q[i] * q[i];
  return kind == Lyapunov::SqrtWeightedNorm ? std::sqrt(s) : s;
}

inline constexpr std::size_t kMinBucketTransitions = 100;

struct DriftBucket {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double mean = 0.0;
  double se = 0.0;
  bool dropped = false;  // fewer than kMinBucketTransitions transitions
};

/// Mean one-step increment of L, bucketed by the level L(t) against the
/// ascending thresholds `levels` (last bucket is open above).
inline std::vector<DriftBucket> drift_check(std::span<const double> series, const Vec& levels) {
  if (series.size() < 2) throw Error(ErrorKind::InsufficientData, "drift needs at least one transition");
  if (levels.empty() || !std::is_sorted(levels.begin(), levels.end()))
    throw Error(ErrorKind::ConfigInvalid, "drift levels must be a nonempty ascending list");
  std::vector<Vec> increments(levels.size());
  for (std::size_t t = 0; t + 1 < series.size(); ++t) {
    const double l = series[t];
    if (l < levels.front()) continue;
    const auto b = static_cast<std::size_t>(std::upper_bound(levels.begin(), levels.end(), l) - levels.begin()) - 1;
    increments[b].push_back(series[t + 1] - l);
  }
  std::vector<DriftBucket> out;
  for (std::size_t b = 0; b < levels.size(); ++b) {
    DriftBucket bucket;
    bucket.lower = levels[b];
    bucket.upper = b + 1 < levels.size() ? levels[b + 1] : std::numeric_limits<double>::infinity();
    bucket.count = increments[b].size();
    bucket.dropped = bucket.count < kMinBucketTransitions;
    if (bucket.count > 0) {
      const auto est = batch_means(increments[b]);
      bucket.mean = est.mean;
      bucket.se = est.se;
    }
    out.push_back(bucket);
  }
  return out;
}

/// Fraction of decisions whose mean is off the face V*.
class FaceFractionAccumulator {
 public:
  explicit FaceFractionAccumulator(const RateRegionGeometry& geom) : on_face_(geom.decision_means.size(), false) {
    for (auto k : geom.face_decisions) on_face_[k] = true;
  }

  void feed(std::size_t decision) {
    ++total_;
    if (!on_face_[decision]) ++off_;
  }

  double fraction() const { return total_ == 0 ? 0.0 : static_cast<double>(off_) / static_cast<double>(total_); }
  std::uint64_t total() const { return total_; }

 private:
  std::vector<bool> on_face_;
  std::uint64_t total_ = 0;
  std::uint64_t off_ = 0;
};

template <class Record>
double face_fraction(const std::vector<Record>& stream, const RateRegionGeometry& geom, std::uint64_t burn_in = 0) {
  FaceFractionAccumulator acc(geom);
  for (std::size_t t = burn_in; t < stream.size(); ++t) acc.feed(stream[t].decision);
  return acc.fraction();
}

struct VectorMeanEstimate {
  Vec mean;
  Vec se;
};

class WastedServiceAccumulator {
 public:
  explicit WastedServiceAccumulator(std::size_t flows, std::size_t block = 1024) : per_flow_(flows, OnlineBatchMeans(block)) {}

  void feed(std::span<const double> wasted) {
    for (std::size_t i = 0; i < per_flow_.size(); ++i) per_flow_[i].add(wasted[i]);
  }

  VectorMeanEstimate finish() const {
    VectorMeanEstimate out;
    for (const auto& f : per_flow_) {
      const auto e = f.finish();
      out.mean.push_back(e.mean);
      out.se.push_back(e.se);
    }
    return out;
  }

 private:
  std::vector<OnlineBatchMeans> per_flow_;
};

inline VectorMeanEstimate wasted_service_mean(const std::vector<SlotRecord>& stream, std::uint64_t burn_in = 0) {
  if (stream.empty()) throw Error(ErrorKind::InsufficientData, "empty stream");
  WastedServiceAccumulator acc(stream.front().wasted.size());
  for (std::size_t t = burn_in; t < stream.size(); ++t) acc.feed(stream[t].wasted);
  return acc.finish();
}

struct TailFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 1.0;
  double residual_rms = 0.0;
  bool degenerate = false;  // upper decile collapses to a point: slope is -inf
  bool poor_fit = false;    // r_squared below kTailFitMinR2
  Vec levels;
  Vec log_survival;
};

inline constexpr double kTailFitMinR2 = 0.99;

/// Least-squares fit of log P(L >= u) against u over the upper-decile grid
/// u = q_{0.90}, q_{0.91}, ..., q_{0.99}.
inline TailFit tail_fit(Vec samples) {
  if (samples.size() < 100) throw Error(ErrorKind::InsufficientData, "tail fit needs at least 100 samples");
  std::sort(samples.begin(), samples.end());
  TailFit fit;
  const double n = static_cast<double>(samples.size());
  for (int k = 90; k <= 99; ++k) {
    const double u = sorted_quantile(samples, k / 100.0);
    const auto at_least = samples.end() - std::lower_bound(samples.begin(), samples.end(), u);
    fit.levels.push_back(u);
    fit.log_survival.push_back(std::log(static_cast<double>(at_least) / n));
  }
  const double span = fit.levels.back() - fit.levels.front();
  if (!(span > 1e-12 * std::max(1.0, std::abs(fit.levels.back())))) {
    fit.degenerate = true;
    fit.slope = -std::numeric_limits<double>::infinity();
    return fit;
  }
  const double k = static_cast<double>(fit.levels.size());
  const double mx = std::accumulate(fit.levels.begin(), fit.levels.end(), 0.0) / k;
  const double my = std::accumulate(fit.log_survival.begin(), fit.log_survival.end(), 0.0) / k;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t j = 0; j < fit.levels.size(); ++j) {
    sxy += (fit.levels[j] - mx) * (fit.log_survival[j] - my);
    sxx += (fit.levels[j] - mx) * (fit.levels[j] - mx);
    syy += (fit.log_survival[j] - my) * (fit.log_survival[j] - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t j = 0; j < fit.levels.size(); ++j) {
    const double r = fit.log_survival[j] - (fit.intercept + fit.slope * fit.levels[j]);
    rss += r * r;
  }
  fit.residual_rms = std::sqrt(rss / k);
  fit.r_squared = syy > 0.0 ? 1.0 - rss / syy : 1.0;
  fit.poor_fit = fit.r_squared < kTailFitMinR2;
  return fit;
}

struct QuantileSummary {
  double p10 = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
};

inline QuantileSummary summarize(Vec values) {
  if (values.empty()) throw Error(ErrorKind::InsufficientData, "no values to summarize");
  std::sort(values.begin(), values.end());
  return {sorted_quantile(values, 0.1), sorted_quantile(values, 0.5), sorted_quantile(values, 0.9)};
}

/// Quantiles of h(gamma Q) over weighted-queue samples. For a CRP geometry
/// h reduces to ||(gamma Q)_*||.
inline QuantileSummary h_diagnostic(const EmpiricalDistribution& weighted_queues, const RateRegionGeometry& geom) {
  Vec h(weighted_queues.size());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = rel_boundary_distance(weighted_queues.sample(i), geom);
  return summarize(std::move(h));
}

inline QuantileSummary h_diagnostic(const std::vector<SlotRecord>& stream, const RateRegionGeometry& geom,
                                    const Vec& gamma, std::uint64_t burn_in = 0, std::uint64_t thin = 1) {
  EmpiricalDistribution wq(geom.dimension);
  for (std::size_t t = burn_in; t < stream.size(); t += thin) wq.add(hadamard(stream[t].q_before, gamma));
  return h_diagnostic(wq, geom);
}

/// Least-squares slope of log y against log x.
inline double log_log_slope(std::span<const double> x, std::span<const double> y) {
  const double k = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= k;
  my /= k;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

}  // namespace mwsim
