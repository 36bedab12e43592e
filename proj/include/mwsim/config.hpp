#pragma once

// Sweep configuration: a single JSON document describing the switch, the
// heavy-traffic point, the epsilon schedule and estimator settings.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mwsim/common.hpp"
#include "mwsim/estimators.hpp"
#include "mwsim/simcore.hpp"

namespace mwsim {

struct EstimatorSettings {
  double burn_in_fraction = 0.2;
  std::uint64_t burn_in_min = 100'000;
  std::uint64_t thin = 16;
  std::vector<std::uint64_t> smoothness_windows{10, 25, 50};
  std::size_t ks_extra_directions = kExtraDirections;
  Vec drift_quantiles{0.90, 0.95};
  Lyapunov drift_lyapunov = Lyapunov::SqrtWeightedNorm;
};

struct SweepConfig {
  std::string fixture = "unnamed";
  std::vector<ServiceDecision> decisions;
  Vec gamma;
  TieBreak tie_break = TieBreak::LowestIndex;
  Vec lambda_star;
  std::optional<std::vector<Vec>> cone_generators;  // explicit nu (one entry) or generators
  Vec a_max;
  Vec epsilons{0.05, 0.02, 0.01, 0.005};
  std::uint64_t horizon_min = 5'000'000;
  double horizon_c = 50.0;
  std::optional<std::uint64_t> horizon;  // fixed override
  bool allow_short_horizon = false;
  std::optional<std::uint64_t> ystar_horizon;
  std::size_t replications = 1;
  std::uint64_t seed = 1;
  EstimatorSettings estimators;
  std::string output_dir = "out";
  nlohmann::json thresholds = nlohmann::json::object();

  /// Slots simulated at load point epsilon.
  std::uint64_t horizon_for(double epsilon) const {
    if (horizon) return *horizon;
    const double scaled = std::ceil(horizon_c / (epsilon * epsilon));
    return std::max<std::uint64_t>(horizon_min, static_cast<std::uint64_t>(scaled));
  }

  std::uint64_t limit_horizon() const { return ystar_horizon ? *ystar_horizon : (horizon ? *horizon : horizon_min); }

  std::uint64_t burn_in_for(std::uint64_t horizon_slots) const {
    const auto frac = static_cast<std::uint64_t>(std::ceil(estimators.burn_in_fraction * static_cast<double>(horizon_slots)));
    return std::max(frac, estimators.burn_in_min);
  }

  /// Seed of replication `rep` at epsilon index `e`; the limit chain uses its own offset.
  std::uint64_t point_seed(std::size_t e, std::size_t rep) const { return seed + 1000 * (e + 1) + rep; }
  std::uint64_t limit_seed() const { return seed; }
};

namespace detail {

inline Vec json_vec(const nlohmann::json& j, const char* what) {
  if (!j.is_array()) throw Error(ErrorKind::ConfigInvalid, std::string(what) + " must be an array of numbers");
  Vec out;
  for (const auto& x : j) {
    if (!x.is_number()) throw Error(ErrorKind::ConfigInvalid, std::string(what) + " must be an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

}  // namespace detail

inline SweepConfig parse_config(const nlohmann::json& j) {
  SweepConfig c;
  try {
    c.fixture = j.value("fixture", c.fixture);
    if (!j.contains("decisions")) throw Error(ErrorKind::ConfigInvalid, "missing 'decisions'");
    for (const auto& d : j.at("decisions")) {
      if (d.contains("outcomes")) {
        std::vector<ServiceOutcome> outs;
        for (const auto& o : d.at("outcomes")) outs.push_back({detail::json_vec(o.at("v"), "outcome v"), o.at("p").get<double>()});
        c.decisions.push_back(ServiceDecision::make(std::move(outs)));
      } else if (d.contains("mean")) {
        c.decisions.push_back(ServiceDecision::deterministic(detail::json_vec(d.at("mean"), "decision mean")));
      } else if (d.is_array()) {
        c.decisions.push_back(ServiceDecision::deterministic(detail::json_vec(d, "decision")));
      } else {
        throw Error(ErrorKind::ConfigInvalid, "decision needs 'mean' or 'outcomes'");
      }
    }
    c.lambda_star = detail::json_vec(j.at("lambda_star"), "lambda_star");
    c.gamma = j.contains("gamma") ? detail::json_vec(j.at("gamma"), "gamma") : Vec(c.lambda_star.size(), 1.0);
    c.a_max = detail::json_vec(j.at("a_max"), "a_max");
    const std::string tie = j.value("tie_break", std::string("lowest_index"));
    if (tie == "lowest_index") {
      c.tie_break = TieBreak::LowestIndex;
    } else if (tie == "uniform_random") {
      c.tie_break = TieBreak::UniformRandom;
    } else {
      throw Error(ErrorKind::ConfigInvalid, "unknown tie_break '" + tie + "'");
    }
    if (j.contains("nu")) c.cone_generators = std::vector<Vec>{detail::json_vec(j.at("nu"), "nu")};
    if (j.contains("cone_generators")) {
      std::vector<Vec> g;
      for (const auto& v : j.at("cone_generators")) g.push_back(detail::json_vec(v, "cone generator"));
      c.cone_generators = std::move(g);
    }
    if (j.contains("epsilons")) c.epsilons = detail::json_vec(j.at("epsilons"), "epsilons");
    c.horizon_min = j.value("horizon_min", c.horizon_min);
    c.horizon_c = j.value("horizon_c", c.horizon_c);
    if (j.contains("horizon")) c.horizon = j.at("horizon").get<std::uint64_t>();
    c.allow_short_horizon = j.value("allow_short_horizon", false);
    if (j.contains("ystar_horizon")) c.ystar_horizon = j.at("ystar_horizon").get<std::uint64_t>();
    c.replications = j.value("replications", c.replications);
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("thresholds")) c.thresholds = j.at("thresholds");
    if (j.contains("estimators")) {
      const auto& e = j.at("estimators");
      auto& s = c.estimators;
      s.burn_in_fraction = e.value("burn_in_fraction", s.burn_in_fraction);
      s.burn_in_min = e.value("burn_in_min", s.burn_in_min);
      s.thin = e.value("thin", s.thin);
      if (e.contains("smoothness_windows")) s.smoothness_windows = e.at("smoothness_windows").get<std::vector<std::uint64_t>>();
      s.ks_extra_directions = e.value("ks_extra_directions", s.ks_extra_directions);
      if (e.contains("drift_quantiles")) s.drift_quantiles = detail::json_vec(e.at("drift_quantiles"), "drift_quantiles");
      const std::string lyap = e.value("drift_lyapunov", std::string("sqrt_weighted_norm"));
      if (lyap == "sqrt_weighted_norm") {
        s.drift_lyapunov = Lyapunov::SqrtWeightedNorm;
      } else if (lyap == "weighted_square") {
        s.drift_lyapunov = Lyapunov::WeightedSquare;
      } else {
        throw Error(ErrorKind::ConfigInvalid, "unknown drift_lyapunov '" + lyap + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, e.what());
  }
  return c;
}

inline SweepConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigInvalid, "cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, "malformed JSON in '" + path + "': " + e.what());
  }
  return parse_config(j);
}

}  // namespace mwsim
