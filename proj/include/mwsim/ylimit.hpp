#pragma once

// Limiting queue-differential chain Y* on nu_perp. Decisions are the
// face-restricted MaxWeight argmax driven by y alone; the state moves by the
// projected weighted arrival-minus-service increment, with no wasted service.

#include <cstdint>
#include <utility>

#include "mwsim/arrivals.hpp"
#include "mwsim/geometry.hpp"
#include "mwsim/simcore.hpp"

namespace mwsim {

/// State of Y* in perp-basis coordinates (length N - d).
struct YState {
  Vec y;
};

inline Decision ystar_decision(std::span<const double> y, const RateRegionGeometry& geom, const SwitchModel& model,
                               RandomStream* tie_rng = nullptr) {
  if (geom.face_decisions.empty()) throw Error(ErrorKind::EmptyFace, "no decision mean lies on V*");
  const Vec x = geom.embed(y);
  return argmax_weight(x, model.decisions, geom.face_decisions, tie_rng);
}

inline std::size_t ystar_decide(const YState& state, const RateRegionGeometry& geom, const SwitchModel& model) {
  return ystar_decision(state.y, geom, model).index;
}

/// y' = y + perp coordinates of (gamma A - gamma S).
inline YState ystar_step(const YState& state, std::span<const double> arrival, std::span<const double> service,
                         const RateRegionGeometry& geom, const SwitchModel& model) {
  Vec inc(arrival.size());
  for (std::size_t i = 0; i < inc.size(); ++i) inc[i] = model.gamma[i] * arrival[i] - model.gamma[i] * service[i];
  YState next{state.y};
  for (std::size_t b = 0; b < geom.perp_basis.size(); ++b) next.y[b] += dot(inc, geom.perp_basis[b]);
  return next;
}

struct YStarRecord {
  std::uint64_t t = 0;
  Vec y;  // state before the step
  std::size_t decision = 0;
  Vec service;
  Vec arrival;
};

/// The limiting arrival family: same A^max, mean lambda*.
inline ArrivalFamily limiting_family(const SwitchModel& model, const RateRegionGeometry& geom) {
  return make_arrival_family(model.arrivals.a_max, geom.lambda_star);
}

class YStarSimulator {
 public:
  YStarSimulator(const SwitchModel& model, const RateRegionGeometry& geom, ArrivalFamily limit, std::uint64_t seed,
                 Vec y0 = {})
      : model_(&model),
        geom_(&geom),
        limit_(std::move(limit)),
        sampler_(limit_),
        arrivals_rng_(seed, Substream::Arrivals),
        service_rng_(seed, Substream::Service),
        tie_rng_(seed, Substream::TieBreak) {
    if (geom.face_decisions.empty()) throw Error(ErrorKind::EmptyFace, "no decision mean lies on V*");
    const std::size_t m = geom.perp_dimension();
    if (y0.empty()) y0.assign(m, 0.0);
    if (y0.size() != m) throw Error(ErrorKind::DimensionMismatch, "y0 must have N - d coordinates");
    y_ = std::move(y0);
    const std::size_t n = model.flows();
    x_.resize(n);
    inc_.resize(n);
    rec_.y.resize(m);
    rec_.service.resize(n);
    rec_.arrival.resize(n);
  }

  YStarSimulator(const YStarSimulator&) = delete;
  YStarSimulator& operator=(const YStarSimulator&) = delete;

  const YStarRecord& advance() {
    const std::size_t n = x_.size();
    rec_.t = t_;
    std::copy(y_.begin(), y_.end(), rec_.y.begin());
    std::fill(x_.begin(), x_.end(), 0.0);
    for (std::size_t b = 0; b < y_.size(); ++b)
      for (std::size_t i = 0; i < n; ++i) x_[i] += y_[b] * geom_->perp_basis[b][i];
    RandomStream* tie = model_->tie_break == TieBreak::UniformRandom ? &tie_rng_ : nullptr;
    const Decision d = argmax_weight(x_, model_->decisions, geom_->face_decisions, tie);
    if (d.ties > 1) ++tie_slots_;
    rec_.decision = d.index;
    const Vec& s = sample_service(model_->decisions[d.index], service_rng_);
    std::copy(s.begin(), s.end(), rec_.service.begin());
    sampler_(arrivals_rng_, rec_.arrival);
    for (std::size_t i = 0; i < n; ++i) inc_[i] = model_->gamma[i] * rec_.arrival[i] - model_->gamma[i] * s[i];
    for (std::size_t b = 0; b < y_.size(); ++b) y_[b] += dot(inc_, geom_->perp_basis[b]);
    ++t_;
    return rec_;
  }

  const Vec& state() const { return y_; }
  const ArrivalFamily& arrivals() const { return limit_; }
  std::uint64_t tie_slots() const { return tie_slots_; }

 private:
  const SwitchModel* model_;
  const RateRegionGeometry* geom_;
  ArrivalFamily limit_;
  ArrivalSampler sampler_;
  RandomStream arrivals_rng_;
  RandomStream service_rng_;
  RandomStream tie_rng_;
  Vec y_;
  Vec x_;
  Vec inc_;
  YStarRecord rec_;
  std::uint64_t t_ = 0;
  std::uint64_t tie_slots_ = 0;
};

template <class Sink>
std::uint64_t run_ystar(const SwitchModel& model, const RateRegionGeometry& geom, std::uint64_t horizon, std::uint64_t seed,
                        Vec y0, Sink&& sink) {
  if (horizon == 0) throw Error(ErrorKind::ConfigInvalid, "horizon must be at least 1");
  YStarSimulator sim(model, geom, limiting_family(model, geom), seed, std::move(y0));
  for (std::uint64_t t = 0; t < horizon; ++t) sink(sim.advance());
  return sim.tie_slots();
}

inline std::vector<YStarRecord> run_ystar_collect(const SwitchModel& model, const RateRegionGeometry& geom,
                                                  std::uint64_t horizon, std::uint64_t seed, Vec y0 = {}) {
  std::vector<YStarRecord> out;
  out.reserve(horizon);
  run_ystar(model, geom, horizon, seed, std::move(y0), [&](const YStarRecord& r) { out.push_back(r); });
  return out;
}

}  // namespace mwsim
