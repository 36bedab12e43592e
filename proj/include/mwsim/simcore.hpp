#pragma once

// Generalized switch under MaxWeight: decision, random service outcome and
// the queue update with wasted service.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>

#include "mwsim/arrivals.hpp"
#include "mwsim/common.hpp"
#include "mwsim/geometry.hpp"
#include "mwsim/rng.hpp"

namespace mwsim {

struct ServiceOutcome {
  Vec amount;
  double probability = 1.0;
};

struct ServiceDecision {
  std::vector<ServiceOutcome> outcomes;
  Vec mean;
  Vec cumulative;  // running sums of outcome probabilities

  static ServiceDecision make(std::vector<ServiceOutcome> outcomes) {
    if (outcomes.empty()) throw Error(ErrorKind::ConfigInvalid, "decision without outcomes");
    ServiceDecision d;
    const std::size_t n = outcomes.front().amount.size();
    d.mean.assign(n, 0.0);
    double total = 0.0;
    for (const auto& o : outcomes) {
      if (o.amount.size() != n) throw Error(ErrorKind::ConfigInvalid, "outcome vectors differ in length");
      if (!(o.probability >= 0.0)) throw Error(ErrorKind::ConfigInvalid, "negative outcome probability");
      if (std::any_of(o.amount.begin(), o.amount.end(), [](double v) { return !(v >= 0.0); }))
        throw Error(ErrorKind::ConfigInvalid, "negative service amount");
      total += o.probability;
      d.cumulative.push_back(total);
      for (std::size_t i = 0; i < n; ++i) d.mean[i] += o.probability * o.amount[i];
    }
    if (std::abs(total - 1.0) > 1e-12) throw Error(ErrorKind::ConfigInvalid, "outcome probabilities do not sum to 1");
    d.cumulative.back() = 1.0;
    d.outcomes = std::move(outcomes);
    return d;
  }

  static ServiceDecision deterministic(Vec amount) { return make({ServiceOutcome{std::move(amount), 1.0}}); }
};

enum class TieBreak { LowestIndex, UniformRandom };

struct SwitchModel {
  std::vector<ServiceDecision> decisions;
  Vec gamma;
  ArrivalFamily arrivals;
  Vec s_max;
  TieBreak tie_break = TieBreak::LowestIndex;

  std::size_t flows() const { return gamma.size(); }

  std::vector<Vec> decision_means() const {
    std::vector<Vec> out;
    for (const auto& d : decisions) out.push_back(d.mean);
    return out;
  }
};

inline Vec componentwise_service_max(const std::vector<ServiceDecision>& decisions, std::size_t n) {
  Vec s(n, 0.0);
  for (const auto& d : decisions)
    for (const auto& o : d.outcomes)
      for (std::size_t i = 0; i < n; ++i) s[i] = std::max(s[i], o.amount[i]);
  return s;
}

/// Throws ConfigInvalid listing the first violated model invariant.
inline void validate_model(const SwitchModel& model) {
  const std::size_t n = model.gamma.size();
  if (n == 0) throw Error(ErrorKind::ConfigInvalid, "empty gamma");
  if (std::any_of(model.gamma.begin(), model.gamma.end(), [](double g) { return !(g > 0.0); }))
    throw Error(ErrorKind::ConfigInvalid, "gamma must be strictly positive");
  if (model.decisions.empty()) throw Error(ErrorKind::ConfigInvalid, "no service decisions");
  for (std::size_t k = 0; k < model.decisions.size(); ++k) {
    const auto& mu = model.decisions[k].mean;
    if (mu.size() != n) throw Error(ErrorKind::ConfigInvalid, "decision " + std::to_string(k) + " has wrong dimension");
    if (std::all_of(mu.begin(), mu.end(), [](double v) { return v == 0.0; }))
      throw Error(ErrorKind::ConfigInvalid, "decision " + std::to_string(k) + " has zero mean");
    for (std::size_t l = 0; l < k; ++l)
      if (max_abs_diff(mu, model.decisions[l].mean) <= kGeomTol)
        throw Error(ErrorKind::ConfigInvalid, "decisions " + std::to_string(l) + " and " + std::to_string(k) + " share a mean");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::none_of(model.decisions.begin(), model.decisions.end(), [&](const ServiceDecision& d) { return d.mean[i] > 0.0; }))
      throw Error(ErrorKind::ConfigInvalid, "flow " + std::to_string(i) + " is never served");
  }
  if (model.arrivals.a_max.size() != n || model.s_max.size() != n)
    throw Error(ErrorKind::ConfigInvalid, "arrival family dimension mismatch");
  for (std::size_t i = 0; i < n; ++i)
    if (!(model.arrivals.a_max[i] > model.s_max[i]))
      throw Error(ErrorKind::ConfigInvalid, "A^max must exceed S^max componentwise (flow " + std::to_string(i) + ")");
}

inline SwitchModel make_switch_model(std::vector<ServiceDecision> decisions, Vec gamma, ArrivalFamily arrivals,
                                     TieBreak tie = TieBreak::LowestIndex) {
  SwitchModel m;
  m.s_max = componentwise_service_max(decisions, gamma.size());
  m.decisions = std::move(decisions);
  m.gamma = std::move(gamma);
  m.arrivals = std::move(arrivals);
  m.tie_break = tie;
  validate_model(m);
  return m;
}

struct Decision {
  std::size_t index = 0;
  std::size_t ties = 1;  // number of maximizers
};

/// argmax over `candidates` of weights . mu^l. Lowest index wins ties unless
/// a tie stream is supplied, in which case a maximizer is drawn uniformly.
template <class Candidates>
Decision argmax_weight(std::span<const double> weights, const std::vector<ServiceDecision>& decisions,
                       const Candidates& candidates, RandomStream* tie_rng = nullptr) {
  Decision best;
  double best_value = -std::numeric_limits<double>::infinity();
  bool first = true;
  for (std::size_t k : candidates) {
    const double v = dot(weights, decisions[k].mean);
    if (first || v > best_value) {
      best = {k, 1};
      best_value = v;
      first = false;
    } else if (v == best_value) {
      ++best.ties;
      // Reservoir choice keeps the draw uniform over all maximizers.
      if (tie_rng != nullptr && tie_rng->uniform() * static_cast<double>(best.ties) < 1.0) best.index = k;
    }
  }
  return best;
}

struct IndexRange {
  std::size_t n;
  struct iterator {
    std::size_t i;
    std::size_t operator*() const { return i; }
    iterator& operator++() {
      ++i;
      return *this;
    }
    bool operator!=(const iterator& o) const { return i != o.i; }
  };
  iterator begin() const { return {0}; }
  iterator end() const { return {n}; }
};

/// MaxWeight decision for queue vector q (lowest index among maximizers).
inline std::size_t maxweight_decide(std::span<const double> q, const SwitchModel& model) {
  const Vec w = hadamard(q, model.gamma);
  return argmax_weight(w, model.decisions, IndexRange{model.decisions.size()}).index;
}

inline const Vec& sample_service(const ServiceDecision& decision, RandomStream& rng) {
  if (decision.outcomes.size() == 1) return decision.outcomes.front().amount;
  const double u = rng.uniform();
  for (std::size_t j = 0; j < decision.cumulative.size(); ++j)
    if (u < decision.cumulative[j]) return decision.outcomes[j].amount;
  return decision.outcomes.back().amount;
}

struct StepResult {
  Vec q_next;
  Vec wasted;
};

/// Queue update: q_next = (q - s)^+ + a, wasted = (s - q)^+.
inline void step(std::span<const double> q, std::span<const double> s, std::span<const double> a,
                 std::span<double> q_next, std::span<double> wasted) {
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double u = std::max(s[i] - q[i], 0.0);
    wasted[i] = u;
    q_next[i] = std::max(q[i] - s[i], 0.0) + a[i];
  }
}

inline StepResult step(std::span<const double> q, std::span<const double> s, std::span<const double> a) {
  StepResult r{Vec(q.size()), Vec(q.size())};
  step(q, s, a, r.q_next, r.wasted);
  return r;
}

struct SlotRecord {
  std::uint64_t t = 0;
  Vec q_before;
  std::size_t decision = 0;
  Vec service;
  Vec arrival;
  Vec wasted;
  Vec q_after;
  Vec y;  // perp-basis coordinates of (gamma q_before) projected on nu_perp
};

/// Sequential switch trajectory. Deterministic in (model, seed, q0).
class SwitchSimulator {
 public:
  SwitchSimulator(const SwitchModel& model, const RateRegionGeometry& geom, std::uint64_t seed, Vec q0 = {})
      : model_(&model),
        geom_(&geom),
        sampler_(model.arrivals),
        arrivals_rng_(seed, Substream::Arrivals),
        service_rng_(seed, Substream::Service),
        tie_rng_(seed, Substream::TieBreak) {
    validate_model(model);
    const std::size_t n = model.flows();
    if (geom.dimension != n) throw Error(ErrorKind::ConfigInvalid, "geometry and model dimensions differ");
    if (q0.empty()) q0.assign(n, 0.0);
    if (q0.size() != n || std::any_of(q0.begin(), q0.end(), [](double v) { return !(v >= 0.0); }))
      throw Error(ErrorKind::ConfigInvalid, "initial queue must be a nonnegative vector of length N");
    q_ = std::move(q0);
    weights_.resize(n);
    rec_.q_before.resize(n);
    rec_.service.resize(n);
    rec_.arrival.resize(n);
    rec_.wasted.resize(n);
    rec_.q_after.resize(n);
    rec_.y.resize(geom.perp_dimension());
  }

  const SlotRecord& advance() {
    const std::size_t n = q_.size();
    rec_.t = t_;
    for (std::size_t i = 0; i < n; ++i) {
      rec_.q_before[i] = q_[i];
      weights_[i] = model_->gamma[i] * q_[i];
    }
    for (std::size_t b = 0; b < geom_->perp_basis.size(); ++b) rec_.y[b] = dot(weights_, geom_->perp_basis[b]);

    RandomStream* tie = model_->tie_break == TieBreak::UniformRandom ? &tie_rng_ : nullptr;
    const Decision d = argmax_weight(weights_, model_->decisions, IndexRange{model_->decisions.size()}, tie);
    if (d.ties > 1) ++tie_slots_;
    rec_.decision = d.index;
    const Vec& s = sample_service(model_->decisions[d.index], service_rng_);
    std::copy(s.begin(), s.end(), rec_.service.begin());
    sampler_(arrivals_rng_, rec_.arrival);
    step(rec_.q_before, rec_.service, rec_.arrival, rec_.q_after, rec_.wasted);
    std::copy(rec_.q_after.begin(), rec_.q_after.end(), q_.begin());
    ++t_;
    return rec_;
  }

  const Vec& queue() const { return q_; }
  std::uint64_t slot() const { return t_; }
  /// Slots in which the MaxWeight argmax was not unique.
  std::uint64_t tie_slots() const { return tie_slots_; }

 private:
  const SwitchModel* model_;
  const RateRegionGeometry* geom_;
  ArrivalSampler sampler_;
  RandomStream arrivals_rng_;
  RandomStream service_rng_;
  RandomStream tie_rng_;
  Vec q_;
  Vec weights_;
  SlotRecord rec_;
  std::uint64_t t_ = 0;
  std::uint64_t tie_slots_ = 0;
};

/// Runs `horizon` slots, passing each record to sink(const SlotRecord&).
template <class Sink>
std::uint64_t run(const SwitchModel& model, const RateRegionGeometry& geom, std::uint64_t horizon, std::uint64_t seed,
                  Vec initial_q, Sink&& sink) {
  if (horizon == 0) throw Error(ErrorKind::ConfigInvalid, "horizon must be at least 1");
  SwitchSimulator sim(model, geom, seed, std::move(initial_q));
  for (std::uint64_t t = 0; t < horizon; ++t) sink(sim.advance());
  return sim.tie_slots();
}

inline std::vector<SlotRecord> run_collect(const SwitchModel& model, const RateRegionGeometry& geom, std::uint64_t horizon,
                                           std::uint64_t seed, Vec initial_q = {}) {
  std::vector<SlotRecord> out;
  out.reserve(horizon);
  run(model, geom, horizon, seed, std::move(initial_q), [&](const SlotRecord& r) { out.push_back(r); });
  return out;
}

}  // namespace mwsim
