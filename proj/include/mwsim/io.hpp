#pragma once

// Serialization: geometry summary JSON, trajectory streams (CSV or
// JSON-lines) and full-precision number formatting.

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>

#include "json.hpp"
#include "mwsim/geometry.hpp"
#include "mwsim/simcore.hpp"
#include "mwsim/ylimit.hpp"

namespace mwsim {

/// 17 significant digits; round-trips every double.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline nlohmann::json geometry_json(const RateRegionGeometry& g) {
  nlohmann::json j;
  j["dimension"] = g.dimension;
  j["lambda_star"] = g.lambda_star;
  j["decision_means"] = g.decision_means;
  auto facets = nlohmann::json::array();
  for (const auto& f : g.facets) facets.push_back({{"normal", f.normal}, {"offset", f.offset}});
  j["facets"] = facets;
  j["cone_generators"] = g.cone_generators;
  j["cone_dimension"] = g.cone_dimension;
  j["crp"] = g.crp();
  j["nu_prime"] = g.nu_prime;
  j["perp_basis"] = g.perp_basis;
  j["face_decisions"] = g.face_decisions;
  if (std::isfinite(g.delta_margin)) {
    j["delta_margin"] = g.delta_margin;
  } else {
    j["delta_margin"] = nullptr;
  }
  auto cf = nlohmann::json::array();
  for (const auto& f : g.cone_facets) cf.push_back({{"generators", f.generators}, {"on_orthant_boundary", f.on_orthant_boundary}});
  j["cone_facets"] = cf;
  j["generators_overridden"] = g.generators_overridden;
  return j;
}

enum class TrajectoryFormat { Csv, JsonLines };

/// Writes every thin-th record of a switch or Y* trajectory.
class TrajectoryWriter {
 public:
  TrajectoryWriter(std::ostream& out, TrajectoryFormat format, std::size_t flows, std::size_t perp_dim, bool with_queues,
                   std::uint64_t thin = 1)
      : out_(&out), format_(format), flows_(flows), perp_(perp_dim), queues_(with_queues), thin_(thin == 0 ? 1 : thin) {
    if (format_ == TrajectoryFormat::Csv) {
      *out_ << "t,k";
      auto cols = [&](const char* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) *out_ << ',' << p << i;
      };
      if (queues_) cols("Q", flows_);
      cols("S", flows_);
      cols("A", flows_);
      if (queues_) cols("U", flows_);
      cols("Y", perp_);
      *out_ << '\n';
    }
  }

  void write(const SlotRecord& r) {
    if (r.t % thin_ != 0) return;
    emit(r.t, r.decision, &r.q_before, r.service, r.arrival, &r.wasted, r.y);
  }

  void write(const YStarRecord& r) {
    if (r.t % thin_ != 0) return;
    emit(r.t, r.decision, nullptr, r.service, r.arrival, nullptr, r.y);
  }

 private:
  void emit(std::uint64_t t, std::size_t k, const Vec* q, const Vec& s, const Vec& a, const Vec* u, const Vec& y) {
    if (format_ == TrajectoryFormat::Csv) {
      *out_ << t << ',' << k;
      auto cols = [&](const Vec& v) {
        for (double x : v) *out_ << ',' << fmt_double(x);
      };
      if (queues_ && q) cols(*q);
      cols(s);
      cols(a);
      if (queues_ && u) cols(*u);
      cols(y);
      *out_ << '\n';
    } else {
      auto arr = [&](const Vec& v) {
        std::string s_out = "[";
        for (std::size_t i = 0; i < v.size(); ++i) s_out += (i ? "," : "") + fmt_double(v[i]);
        return s_out + "]";
      };
      *out_ << "{\"t\":" << t << ",\"k\":" << k;
      if (queues_ && q) *out_ << ",\"Q\":" << arr(*q);
      *out_ << ",\"S\":" << arr(s) << ",\"A\":" << arr(a);
      if (queues_ && u) *out_ << ",\"U\":" << arr(*u);
      *out_ << ",\"Y\":" << arr(y) << "}\n";
    }
  }

  std::ostream* out_;
  TrajectoryFormat format_;
  std::size_t flows_;
  std::size_t perp_;
  bool queues_;
  std::uint64_t thin_;
};

}  // namespace mwsim
