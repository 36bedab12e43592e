#pragma once

// Experiment orchestration: config validation, one load point, the limit
// chain, heavy-traffic sweeps with ordered crash-safe row output, and the
// Y^(n)-vs-Y* comparison artifact.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <cmath>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mwsim/arrivals.hpp"
#include "mwsim/config.hpp"
#include "mwsim/estimators.hpp"
#include "mwsim/geometry.hpp"
#include "mwsim/io.hpp"
#include "mwsim/simcore.hpp"
#include "mwsim/ylimit.hpp"

namespace mwsim {

inline RateRegionGeometry build_geometry(const SweepConfig& c) {
  std::vector<Vec> means;
  for (const auto& d : c.decisions) means.push_back(d.mean);
  if (c.cone_generators) return build_rate_region_with_generators(means, c.lambda_star, *c.cone_generators);
  return build_rate_region(means, c.lambda_star);
}

inline SwitchModel build_model(const SweepConfig& c, std::span<const double> mean) {
  return make_switch_model(c.decisions, c.gamma, make_arrival_family(c.a_max, mean), c.tie_break);
}

struct ValidationReport {
  std::vector<std::string> errors;
  std::optional<RateRegionGeometry> geometry;
  std::vector<Vec> loads;

  bool ok() const { return errors.empty(); }

  std::string message() const {
    std::string s;
    for (const auto& e : errors) s += (s.empty() ? "" : "\n") + e;
    return s;
  }
};

/// Checks every config invariant and collects all violations.
inline ValidationReport validate_config(const SweepConfig& c) {
  ValidationReport r;
  auto attempt = [&](auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      r.errors.emplace_back(e.what());
    }
  };
  const std::size_t n = c.lambda_star.size();
  if (c.gamma.size() != n) r.errors.emplace_back("ConfigInvalid: gamma has " + std::to_string(c.gamma.size()) + " entries, expected " + std::to_string(n));
  if (c.a_max.size() != n) r.errors.emplace_back("ConfigInvalid: a_max has " + std::to_string(c.a_max.size()) + " entries, expected " + std::to_string(n));
  if (std::any_of(c.gamma.begin(), c.gamma.end(), [](double g) { return !(g > 0.0); }))
    r.errors.emplace_back("ConfigInvalid: gamma must be strictly positive");
  attempt([&] { r.geometry = build_geometry(c); });
  if (c.a_max.size() == n) {
    const Vec smax = componentwise_service_max(c.decisions, n);
    for (std::size_t i = 0; i < n; ++i)
      if (!(c.a_max[i] > smax[i]))
        r.errors.emplace_back("ConfigInvalid: A^max must exceed S^max componentwise (flow " + std::to_string(i) + ": " +
                              fmt_double(c.a_max[i]) + " <= " + fmt_double(smax[i]) + ")");
  }
  if (c.epsilons.empty()) r.errors.emplace_back("ConfigInvalid: empty epsilon schedule");
  for (std::size_t e = 0; e < c.epsilons.size(); ++e) {
    if (!(c.epsilons[e] > 0.0)) r.errors.emplace_back("ConfigInvalid: epsilon " + fmt_double(c.epsilons[e]) + " is not positive");
    if (e > 0 && !(c.epsilons[e] < c.epsilons[e - 1])) r.errors.emplace_back("ConfigInvalid: epsilons must be strictly decreasing");
  }
  if (c.replications == 0) r.errors.emplace_back("ConfigInvalid: replications must be at least 1");
  if (c.estimators.thin == 0) r.errors.emplace_back("ConfigInvalid: thin must be at least 1");
  const auto& dq = c.estimators.drift_quantiles;
  if (dq.empty() || !std::is_sorted(dq.begin(), dq.end()) || !(dq.front() > 0.0) || !(dq.back() < 1.0))
    r.errors.emplace_back("ConfigInvalid: drift_quantiles must be an ascending list in (0, 1)");
  const auto& ws = c.estimators.smoothness_windows;
  if (ws.empty() || std::find(ws.begin(), ws.end(), 0u) != ws.end())
    r.errors.emplace_back("ConfigInvalid: smoothness_windows must be nonempty and positive");
  if (r.geometry) {
    attempt([&] { limiting_family(make_switch_model(c.decisions, c.gamma, make_arrival_family(c.a_max, c.lambda_star)), *r.geometry); });
    if (r.geometry->face_decisions.empty()) r.errors.emplace_back("EmptyFace: no decision mean lies on V*");
    for (double eps : c.epsilons) {
      if (!(eps > 0.0)) continue;
      attempt([&] {
        Vec load = heavy_traffic_point(*r.geometry, eps);
        build_model(c, load);
        r.loads.push_back(std::move(load));
      });
      const std::uint64_t h = c.horizon_for(eps);
      if (!c.allow_short_horizon && static_cast<double>(h) < c.horizon_c / (eps * eps))
        r.errors.emplace_back("ConfigInvalid: horizon " + std::to_string(h) + " below c/eps^2 at eps=" + fmt_double(eps));
      if (c.burn_in_for(h) >= h) r.errors.emplace_back("InsufficientData: burn-in exceeds horizon at eps=" + fmt_double(eps));
    }
    if (c.burn_in_for(c.limit_horizon()) >= c.limit_horizon()) r.errors.emplace_back("InsufficientData: burn-in exceeds the limit-chain horizon");
  }
  return r;
}

struct KsSummary {
  double statistic = 0.0;
  double se = 0.0;
  double energy = 0.0;
  Vec per_direction;
  std::size_t argmax = 0;
};

struct PointResult {
  double epsilon = 0.0;
  std::size_t epsilon_index = 0;
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  std::uint64_t horizon = 0;
  std::uint64_t burn_in = 0;
  std::uint64_t thin = 1;
  Vec load;
  StationaryEstimate y;
  EmpiricalDistribution weighted_queues;
  QuantileSummary star_norm;
  QuantileSummary h;
  std::vector<std::uint64_t> windows;
  std::vector<Vec> gaps;
  double face_fraction = 0.0;
  VectorMeanEstimate wasted;
  VectorMeanEstimate throughput;
  Vec drift_levels;
  std::vector<DriftBucket> drift;
  TailFit tail;
  double window_ratio = 0.0;
  std::uint64_t tie_slots = 0;
  std::optional<KsSummary> ks;
  double runtime_seconds = 0.0;

  double max_gap(std::size_t w) const { return *std::max_element(gaps[w].begin(), gaps[w].end()); }
};

struct LimitResult {
  std::uint64_t seed = 0;
  std::uint64_t horizon = 0;
  std::uint64_t burn_in = 0;
  std::uint64_t thin = 1;
  StationaryEstimate y;
  std::vector<std::uint64_t> windows;
  std::vector<Vec> gaps;
  VectorMeanEstimate mean_increment;  // perp coordinates of gamma(A - S)
  VectorMeanEstimate mean_service_perp;
  Vec mean_chosen;                    // time average of mu^k over chosen k
  double window_ratio = 0.0;
  MeanEstimate return_time;           // to the ball ||y|| <= median ||y||
  std::uint64_t returns = 0;
  std::uint64_t tie_slots = 0;
  double runtime_seconds = 0.0;

  double max_gap(std::size_t w) const { return *std::max_element(gaps[w].begin(), gaps[w].end()); }
};

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> horizon;
  std::ostream* trajectory = nullptr;
  TrajectoryFormat trajectory_format = TrajectoryFormat::Csv;
  std::uint64_t trajectory_thin = 1;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Mean of x over [h/4, h/2) and [h/2, h): their ratio approaches 1 once the
/// chain has settled.
class WindowStability {
 public:
  explicit WindowStability(std::uint64_t horizon) : q1_(horizon / 4), q2_(horizon / 2), end_(horizon) {}

  void feed(std::uint64_t t, double x) {
    if (t >= q1_ && t < q2_) first_ += x;
    if (t >= q2_ && t < end_) second_ += x;
  }

  double ratio() const {
    const double a = first_ / static_cast<double>(std::max<std::uint64_t>(1, q2_ - q1_));
    const double b = second_ / static_cast<double>(std::max<std::uint64_t>(1, end_ - q2_));
    return a == 0.0 ? (b == 0.0 ? 1.0 : std::numeric_limits<double>::infinity()) : b / a;
  }

 private:
  std::uint64_t q1_, q2_, end_;
  double first_ = 0.0;
  double second_ = 0.0;
};

}  // namespace detail

/// Simulates one load point lambda* - eps nu' and computes every metric
/// except the comparison with the limit chain.
inline PointResult run_point(const SweepConfig& c, const RateRegionGeometry& geom, std::size_t eps_index,
                             std::size_t replication, const RunOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  PointResult r;
  r.epsilon = c.epsilons.at(eps_index);
  r.epsilon_index = eps_index;
  r.replication = replication;
  r.seed = opts.seed ? *opts.seed : c.point_seed(eps_index, replication);
  r.horizon = opts.horizon ? *opts.horizon : c.horizon_for(r.epsilon);
  r.burn_in = c.burn_in_for(r.horizon);
  r.thin = c.estimators.thin;
  if (r.burn_in >= r.horizon) throw Error(ErrorKind::InsufficientData, "burn-in exceeds horizon");
  r.load = heavy_traffic_point(geom, r.epsilon);
  const SwitchModel model = build_model(c, r.load);
  const std::size_t n = model.flows();

  StationarySampler y_sampler(geom.perp_dimension(), r.burn_in, r.thin);
  r.weighted_queues = EmpiricalDistribution(n);
  Vec stationary_l;
  Vec l_series;
  l_series.reserve(r.horizon - r.burn_in);
  r.windows = c.estimators.smoothness_windows;
  SmoothnessGapAccumulator gaps(n, r.windows, r.burn_in);
  FaceFractionAccumulator face(geom);
  WastedServiceAccumulator wasted(n);
  WastedServiceAccumulator served(n);
  detail::WindowStability stability(r.horizon);
  Vec wq(n);
  Vec net(n);
  std::optional<TrajectoryWriter> writer;
  if (opts.trajectory) writer.emplace(*opts.trajectory, opts.trajectory_format, n, geom.perp_dimension(), true, opts.trajectory_thin);

  r.tie_slots = run(model, geom, r.horizon, r.seed, {}, [&](const SlotRecord& rec) {
    if (writer) writer->write(rec);
    for (std::size_t i = 0; i < n; ++i) wq[i] = model.gamma[i] * rec.q_before[i];
    stability.feed(rec.t, norm(rec.q_before));
    if (rec.t < r.burn_in) return;
    const double l = lyapunov_value(c.estimators.drift_lyapunov, rec.q_before, model.gamma);
    l_series.push_back(l);
    y_sampler.feed(rec.t, rec.y);
    if ((rec.t - r.burn_in) % r.thin == 0) {
      r.weighted_queues.add(wq);
      stationary_l.push_back(l);
    }
    gaps.feed(rec.t, rec.service);
    face.feed(rec.decision);
    wasted.feed(rec.wasted);
    for (std::size_t i = 0; i < n; ++i) net[i] = rec.service[i] - rec.wasted[i];
    served.feed(net);
  });

  r.y = y_sampler.finish();
  for (std::size_t w = 0; w < r.windows.size(); ++w) r.gaps.push_back(gaps.result(w));
  r.face_fraction = face.fraction();
  r.wasted = wasted.finish();
  r.throughput = served.finish();
  r.window_ratio = stability.ratio();

  Vec star(r.weighted_queues.size());
  for (std::size_t i = 0; i < star.size(); ++i) star[i] = norm(project_cone(r.weighted_queues.sample(i), geom));
  r.star_norm = summarize(std::move(star));
  r.h = geom.crp() ? r.star_norm : h_diagnostic(r.weighted_queues, geom);

  {
    Vec sorted = l_series;
    std::sort(sorted.begin(), sorted.end());
    for (double p : c.estimators.drift_quantiles) r.drift_levels.push_back(sorted_quantile(sorted, p));
    // Collapse equal thresholds (possible for point-mass streams).
    r.drift_levels.erase(std::unique(r.drift_levels.begin(), r.drift_levels.end()), r.drift_levels.end());
  }
  r.drift = drift_check(l_series, r.drift_levels);
  r.tail = tail_fit(stationary_l);
  r.runtime_seconds = detail::seconds_since(t0);
  return r;
}

/// Runs the limit chain Y* (arrivals at mean lambda*).
inline LimitResult run_limit(const SweepConfig& c, const RateRegionGeometry& geom, const RunOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  LimitResult r;
  r.seed = opts.seed ? *opts.seed : c.limit_seed();
  r.horizon = opts.horizon ? *opts.horizon : c.limit_horizon();
  r.burn_in = c.burn_in_for(r.horizon);
  r.thin = c.estimators.thin;
  if (r.burn_in >= r.horizon) throw Error(ErrorKind::InsufficientData, "burn-in exceeds horizon");
  const SwitchModel model = build_model(c, geom.lambda_star);
  const std::size_t n = model.flows();
  const std::size_t m = geom.perp_dimension();

  StationarySampler y_sampler(m, r.burn_in, r.thin);
  r.windows = c.estimators.smoothness_windows;
  SmoothnessGapAccumulator gaps(n, r.windows, r.burn_in);
  WastedServiceAccumulator increment(m);
  WastedServiceAccumulator service_perp(m);
  detail::WindowStability stability(r.horizon);
  Vec chosen(n, 0.0);
  Vec inc(n), sp(m), ip(m);
  Vec norms;
  std::optional<TrajectoryWriter> writer;
  if (opts.trajectory) writer.emplace(*opts.trajectory, opts.trajectory_format, n, m, false, opts.trajectory_thin);

  std::vector<double> y_norm_series;
  y_norm_series.reserve(r.horizon - r.burn_in);
  r.tie_slots = run_ystar(model, geom, r.horizon, r.seed, {}, [&](const YStarRecord& rec) {
    if (writer) writer->write(rec);
    const double yn = norm(rec.y);
    stability.feed(rec.t, yn);
    if (rec.t < r.burn_in) return;
    y_norm_series.push_back(yn);
    y_sampler.feed(rec.t, rec.y);
    gaps.feed(rec.t, rec.service);
    for (std::size_t i = 0; i < n; ++i) {
      inc[i] = model.gamma[i] * (rec.arrival[i] - rec.service[i]);
      chosen[i] += model.decisions[rec.decision].mean[i];
    }
    const Vec gs = hadamard(rec.service, model.gamma);
    for (std::size_t b = 0; b < m; ++b) {
      ip[b] = dot(inc, geom.perp_basis[b]);
      sp[b] = dot(gs, geom.perp_basis[b]);
    }
    increment.feed(ip);
    service_perp.feed(sp);
  });

  r.y = y_sampler.finish();
  for (std::size_t w = 0; w < r.windows.size(); ++w) r.gaps.push_back(gaps.result(w));
  r.mean_increment = increment.finish();
  r.mean_service_perp = service_perp.finish();
  const double kept = static_cast<double>(r.horizon - r.burn_in);
  for (auto& x : chosen) x /= kept;
  r.mean_chosen = chosen;
  r.window_ratio = stability.ratio();

  // Return times to the ball of median radius.
  const double radius = quantile(y_norm_series, 0.5);
  Vec excursions;
  std::optional<std::size_t> last_inside;
  for (std::size_t t = 0; t < y_norm_series.size(); ++t) {
    if (y_norm_series[t] <= radius) {
      if (last_inside) excursions.push_back(static_cast<double>(t - *last_inside));
      last_inside = t;
    }
  }
  r.returns = excursions.size();
  r.return_time = batch_means(excursions);
  r.runtime_seconds = detail::seconds_since(t0);
  return r;
}

inline KsSummary compare_samples(const EmpiricalDistribution& p, const EmpiricalDistribution& q, const std::vector<Vec>& dirs) {
  KsSummary s;
  const KsResult ks = ks_by_direction(p, q, dirs);
  s.statistic = ks.statistic;
  s.per_direction = ks.per_direction;
  s.argmax = ks.argmax;
  s.energy = energy_distance(p, q, dirs);
  const Vec a = p.projected(dirs[ks.argmax]);
  const Vec b = q.projected(dirs[ks.argmax]);
  s.se = ks_standard_error(effective_sample_size(a), effective_sample_size(b));
  return s;
}

inline void attach_ks(PointResult& point, const LimitResult& limit, const std::vector<Vec>& dirs) {
  point.ks = compare_samples(point.y.distribution, limit.y.distribution, dirs);
}

struct SweepRow {
  std::string fixture;
  std::vector<std::pair<std::string, double>> fields;

  double get(const std::string& name) const {
    for (const auto& [k, v] : fields)
      if (k == name) return v;
    throw Error(ErrorKind::ConfigInvalid, "row has no field '" + name + "'");
  }

  std::string header() const {
    std::string s = "fixture";
    for (const auto& f : fields) s += "," + f.first;
    return s + ",checksum";
  }

  /// CSV line with a trailing FNV-1a checksum of everything before it.
  std::string csv_line() const {
    std::string s = fixture;
    for (const auto& f : fields) s += "," + fmt_double(f.second);
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(s)));
    return s + "," + buf;
  }
};

inline SweepRow make_row(const SweepConfig& c, const PointResult& p) {
  SweepRow row;
  row.fixture = c.fixture;
  auto add = [&](std::string k, double v) { row.fields.emplace_back(std::move(k), v); };
  add("epsilon_index", static_cast<double>(p.epsilon_index));
  add("epsilon", p.epsilon);
  add("replication", static_cast<double>(p.replication));
  add("seed", static_cast<double>(p.seed));
  add("horizon", static_cast<double>(p.horizon));
  add("burn_in", static_cast<double>(p.burn_in));
  add("thin", static_cast<double>(p.thin));
  add("n_samples", static_cast<double>(p.y.n_samples));
  add("mean_norm_y", p.y.mean_norm.mean);
  add("mean_norm_y_se", p.y.mean_norm.se);
  add("star_norm_p50", p.star_norm.p50);
  add("h_p10", p.h.p10);
  add("h_p50", p.h.p50);
  add("h_p90", p.h.p90);
  add("ks", p.ks ? p.ks->statistic : std::nan(""));
  add("ks_se", p.ks ? p.ks->se : std::nan(""));
  add("energy", p.ks ? p.ks->energy : std::nan(""));
  for (std::size_t w = 0; w < p.windows.size(); ++w) add("gap_T" + std::to_string(p.windows[w]), p.max_gap(w));
  add("face_fraction", p.face_fraction);
  for (std::size_t i = 0; i < p.wasted.mean.size(); ++i) add("wasted_" + std::to_string(i), p.wasted.mean[i]);
  for (std::size_t i = 0; i < p.wasted.se.size(); ++i) add("wasted_se_" + std::to_string(i), p.wasted.se[i]);
  double worst_z = -std::numeric_limits<double>::infinity();
  double used = 0.0;
  for (const auto& b : p.drift) {
    if (b.dropped || b.se == 0.0) continue;
    worst_z = std::max(worst_z, b.mean / b.se);
    used += 1.0;
  }
  add("drift_worst_z", worst_z);
  add("drift_buckets_used", used);
  add("tail_slope", p.tail.slope);
  add("tail_r2", p.tail.r_squared);
  add("window_ratio", p.window_ratio);
  add("ties", static_cast<double>(p.tie_slots));
  add("runtime_s", p.runtime_seconds);
  return row;
}

inline nlohmann::json row_schema(const SweepRow& row) {
  static const std::map<std::string, std::string> docs = {
      {"epsilon_index", "position of epsilon in the schedule"},
      {"epsilon", "distance of the load point from lambda* along -nu'"},
      {"replication", "replication index"},
      {"seed", "simulation seed"},
      {"horizon", "simulated slots"},
      {"burn_in", "discarded initial slots"},
      {"thin", "sampling stride for stationary samples"},
      {"n_samples", "stationary Y samples kept"},
      {"mean_norm_y", "E||Y|| estimate"},
      {"mean_norm_y_se", "batch-means standard error of E||Y||"},
      {"star_norm_p50", "median ||(gamma Q)_*||, cone projection"},
      {"h_p10", "10% quantile of h(gamma Q) (equals ||(gamma Q)_*|| when d = 1)"},
      {"h_p50", "median of h(gamma Q)"},
      {"h_p90", "90% quantile of h(gamma Q)"},
      {"ks", "max projected two-sample KS between Y samples and Y* samples"},
      {"ks_se", "approximate standard error of ks from effective sample sizes"},
      {"energy", "max projected 1-D energy distance"},
      {"face_fraction", "fraction of slots with a decision off the face V*"},
      {"drift_worst_z", "max over retained drift buckets of mean/SE of the one-step Lyapunov increment"},
      {"drift_buckets_used", "drift buckets with enough transitions"},
      {"tail_slope", "slope of log P(L >= u) over the upper decile"},
      {"tail_r2", "R^2 of the tail fit"},
      {"window_ratio", "mean ||Q|| over [H/2,H) divided by mean over [H/4,H/2)"},
      {"ties", "slots with a non-unique MaxWeight argmax"},
      {"runtime_s", "wall-clock seconds (excluded from determinism checks)"},
      {"checksum", "FNV-1a 64 of the row text before this column"},
  };
  nlohmann::json cols = nlohmann::json::array();
  cols.push_back({{"name", "fixture"}, {"description", "fixture name"}});
  for (const auto& [name, v] : row.fields) {
    std::string desc;
    if (auto it = docs.find(name); it != docs.end()) {
      desc = it->second;
    } else if (name.rfind("gap_T", 0) == 0) {
      desc = "max over flows of P(G_i(T) = 0), T = " + name.substr(5);
    } else if (name.rfind("wasted_se_", 0) == 0) {
      desc = "standard error of wasted_" + name.substr(10);
    } else if (name.rfind("wasted_", 0) == 0) {
      desc = "E[U_i] per slot, flow " + name.substr(7);
    }
    cols.push_back({{"name", name}, {"description", desc}});
  }
  cols.push_back({{"name", "checksum"}, {"description", docs.at("checksum")}});
  return {{"format", "csv"}, {"precision", "17 significant digits"}, {"columns", cols}};
}

struct SweepOptions {
  std::size_t threads = 1;
  std::optional<std::filesystem::path> out_root;  // none: in memory only
  std::optional<std::filesystem::path> resume_dir;
  bool keep_trajectories = false;
  std::uint64_t trajectory_thin = 16;
  bool keep_points = false;
};

struct SweepError {
  std::size_t epsilon_index = 0;
  std::size_t replication = 0;
  std::string message;
};

struct SweepReport {
  RateRegionGeometry geometry;
  std::vector<SweepRow> rows;  // ordered by (epsilon index, replication)
  std::vector<PointResult> points;
  std::optional<LimitResult> limit;
  std::vector<SweepError> errors;
  std::uint64_t simulated_slots = 0;
  std::uint64_t expected_slots = 0;
  std::optional<std::filesystem::path> directory;
};

namespace detail {

inline std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

/// Reads rows.csv keeping only lines whose checksum verifies.
inline std::vector<std::string> verified_lines(const std::filesystem::path& file, std::string& header) {
  std::vector<std::string> lines;
  std::ifstream in(file);
  if (!in) return lines;
  std::getline(in, header);
  std::string line;
  while (std::getline(in, line)) {
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) continue;
    const std::string body = line.substr(0, comma);
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(body)));
    if (line.substr(comma + 1) == buf) lines.push_back(line);
  }
  return lines;
}

inline std::pair<std::size_t, std::size_t> row_key(const std::string& line) {
  // fixture,epsilon_index,epsilon,replication,...
  std::vector<std::string> parts;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',') && parts.size() < 4) parts.push_back(tok);
  return {static_cast<std::size_t>(std::stod(parts.at(1))), static_cast<std::size_t>(std::stod(parts.at(3)))};
}

}  // namespace detail

/// Runs every (epsilon, replication) task plus one shared limit chain.
/// Rows are appended to rows.csv in task order as soon as all earlier rows
/// are done; a resumed sweep skips rows whose checksums verify.
inline SweepReport run_sweep(const SweepConfig& c, const SweepOptions& opts = {}) {
  const ValidationReport v = validate_config(c);
  if (!v.ok()) throw Error(ErrorKind::ConfigInvalid, v.message());
  SweepReport report;
  report.geometry = *v.geometry;
  const auto& geom = report.geometry;

  std::optional<std::filesystem::path> dir;
  if (opts.resume_dir) {
    dir = *opts.resume_dir;
  } else if (opts.out_root) {
    dir = *opts.out_root / c.fixture / detail::timestamp();
  }

  std::set<std::pair<std::size_t, std::size_t>> done;
  std::vector<std::string> kept_lines;
  std::string kept_header;
  if (dir) {
    std::filesystem::create_directories(*dir);
    if (opts.keep_trajectories) std::filesystem::create_directories(*dir / "trajectories");
    if (opts.resume_dir) {
      kept_lines = detail::verified_lines(*dir / "rows.csv", kept_header);
      for (const auto& l : kept_lines) done.insert(detail::row_key(l));
    }
    std::ofstream(*dir / "geometry.json") << geometry_json(geom).dump(2) << '\n';
    report.directory = dir;
  }

  const auto t_dirs = default_directions(geom.perp_dimension(), c.estimators.ks_extra_directions);

  std::ofstream limit_traj;
  RunOptions limit_opts;
  if (dir && opts.keep_trajectories) {
    limit_traj.open(*dir / "trajectories" / "ystar.csv");
    limit_opts.trajectory = &limit_traj;
    limit_opts.trajectory_thin = opts.trajectory_thin;
  }
  report.limit = run_limit(c, geom, limit_opts);
  report.simulated_slots += report.limit->horizon;
  report.expected_slots += c.limit_horizon();

  struct Task {
    std::size_t e;
    std::size_t rep;
  };
  std::vector<Task> tasks;
  for (std::size_t e = 0; e < c.epsilons.size(); ++e)
    for (std::size_t rep = 0; rep < c.replications; ++rep)
      if (!done.count({e, rep})) tasks.push_back({e, rep});
  for (const auto& t : tasks) report.expected_slots += c.horizon_for(c.epsilons[t.e]);

  std::vector<std::optional<SweepRow>> rows(tasks.size());
  std::vector<std::optional<PointResult>> points(tasks.size());
  std::vector<bool> finished(tasks.size(), false);
  std::size_t next_to_write = 0;
  std::mutex mu;
  std::ofstream rows_out;
  bool header_written = false;
  if (dir) {
    // Rewrite the verified prefix so a torn trailing line is dropped.
    rows_out.open(*dir / "rows.csv", std::ios::trunc);
    if (!kept_lines.empty()) {
      rows_out << kept_header << '\n';
      for (const auto& l : kept_lines) rows_out << l << '\n';
      rows_out.flush();
      header_written = true;
    }
  }

  auto flush_ready = [&] {
    while (next_to_write < tasks.size() && finished[next_to_write]) {
      if (rows[next_to_write] && rows_out.is_open()) {
        if (!header_written) {
          rows_out << rows[next_to_write]->header() << '\n';
          header_written = true;
        }
        rows_out << rows[next_to_write]->csv_line() << '\n';
        rows_out.flush();
      }
      ++next_to_write;
    }
  };

  std::atomic<std::size_t> cursor{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= tasks.size()) return;
      const auto [e, rep] = tasks[i];
      try {
        std::ofstream traj;
        RunOptions ro;
        if (dir && opts.keep_trajectories) {
          traj.open(*dir / "trajectories" / ("eps" + std::to_string(e) + "_rep" + std::to_string(rep) + ".csv"));
          ro.trajectory = &traj;
          ro.trajectory_thin = opts.trajectory_thin;
        }
        PointResult p = run_point(c, geom, e, rep, ro);
        attach_ks(p, *report.limit, t_dirs);
        SweepRow row = make_row(c, p);
        std::lock_guard lock(mu);
        report.simulated_slots += p.horizon;
        rows[i] = std::move(row);
        if (opts.keep_points) points[i] = std::move(p);
        finished[i] = true;
        flush_ready();
      } catch (const std::exception& ex) {
        std::lock_guard lock(mu);
        report.errors.push_back({e, rep, ex.what()});
        finished[i] = true;
        flush_ready();
      }
    }
  };
  const std::size_t nthreads = std::max<std::size_t>(1, std::min(opts.threads, tasks.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
  }

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (rows[i]) report.rows.push_back(std::move(*rows[i]));
    if (points[i]) report.points.push_back(std::move(*points[i]));
  }

  if (dir) {
    nlohmann::json rep;
    rep["fixture"] = c.fixture;
    rep["simulated_slots"] = report.simulated_slots;
    rep["expected_slots"] = report.expected_slots;
    auto jrows = nlohmann::json::array();
    for (const auto& r : report.rows) {
      nlohmann::json m;
      for (const auto& [k, val] : r.fields)
        if (std::isfinite(val)) m[k] = val;
      jrows.push_back({{"fixture", c.fixture}, {"epsilon", r.get("epsilon")}, {"seed", r.get("seed")}, {"metrics", m}});
    }
    rep["rows"] = jrows;
    rep["limit"] = {{"seed", report.limit->seed},
                    {"horizon", report.limit->horizon},
                    {"mean_norm_y", report.limit->y.mean_norm.mean},
                    {"mean_norm_y_se", report.limit->y.mean_norm.se}};
    auto errs = nlohmann::json::array();
    for (const auto& e : report.errors) errs.push_back({{"epsilon_index", e.epsilon_index}, {"replication", e.replication}, {"error", e.message}});
    rep["errors"] = errs;
    std::ofstream(*dir / "report.json") << rep.dump(2) << '\n';
    if (!report.rows.empty()) std::ofstream(*dir / "schema.json") << row_schema(report.rows.front()).dump(2) << '\n';
  }
  return report;
}

struct ComparisonArtifact {
  std::vector<Vec> directions;
  Vec probabilities;
  std::vector<Vec> quantiles_n;     // per direction
  std::vector<Vec> quantiles_star;  // per direction
  KsSummary ks;
};

inline ComparisonArtifact compare_distributions(const EmpiricalDistribution& p, const EmpiricalDistribution& q,
                                                const std::vector<Vec>& dirs) {
  ComparisonArtifact a;
  a.directions = dirs;
  a.probabilities = {0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99};
  for (const auto& d : dirs) {
    Vec pn = p.projected(d);
    Vec ps = q.projected(d);
    std::sort(pn.begin(), pn.end());
    std::sort(ps.begin(), ps.end());
    Vec qn, qs;
    for (double pr : a.probabilities) {
      qn.push_back(sorted_quantile(pn, pr));
      qs.push_back(sorted_quantile(ps, pr));
    }
    a.quantiles_n.push_back(std::move(qn));
    a.quantiles_star.push_back(std::move(qs));
  }
  a.ks = compare_samples(p, q, dirs);
  return a;
}

/// Paired quantile tables and per-direction KS of Y^(n) at epsilon vs Y*.
inline ComparisonArtifact compare_to_limit(const SweepConfig& c, double epsilon, std::optional<std::uint64_t> seed = {}) {
  const ValidationReport v = validate_config(c);
  if (!v.ok()) throw Error(ErrorKind::ConfigInvalid, v.message());
  const auto it = std::find(c.epsilons.begin(), c.epsilons.end(), epsilon);
  if (it == c.epsilons.end()) throw Error(ErrorKind::ConfigInvalid, "epsilon " + fmt_double(epsilon) + " is not in the schedule");
  const auto e = static_cast<std::size_t>(it - c.epsilons.begin());
  const auto& geom = *v.geometry;
  RunOptions po;
  RunOptions lo;
  if (seed) {
    po.seed = *seed + 1000 * (e + 1);
    lo.seed = *seed;
  }
  const PointResult p = run_point(c, geom, e, 0, po);
  const LimitResult l = run_limit(c, geom, lo);
  return compare_distributions(p.y.distribution, l.y.distribution,
                               default_directions(geom.perp_dimension(), c.estimators.ks_extra_directions));
}

inline nlohmann::json comparison_json(const ComparisonArtifact& a) {
  nlohmann::json j;
  j["probabilities"] = a.probabilities;
  auto dirs = nlohmann::json::array();
  for (std::size_t k = 0; k < a.directions.size(); ++k)
    dirs.push_back({{"direction", a.directions[k]},
                    {"quantiles_n", a.quantiles_n[k]},
                    {"quantiles_star", a.quantiles_star[k]},
                    {"ks", a.ks.per_direction[k]}});
  j["directions"] = dirs;
  j["ks"] = a.ks.statistic;
  j["ks_se"] = a.ks.se;
  j["energy"] = a.ks.energy;
  j["argmax_direction"] = a.ks.argmax;
  return j;
}

}  // namespace mwsim
