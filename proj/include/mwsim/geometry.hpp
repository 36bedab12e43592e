#pragma once

// Rate-region geometry for a generalized switch: facets of the rate region,
// the normal cone at the heavy-traffic point, the outer face V* and the
// projections used by the queue-differential analysis.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mwsim/common.hpp"

namespace mwsim {

struct Facet {
  Vec normal;  // unit outer normal
  double offset = 0.0;
};

/// A relative-boundary facet of the normal cone, as a subset of generators.
struct ConeFacet {
  std::vector<std::size_t> generators;
  bool on_orthant_boundary = false;
};

struct RateRegionGeometry {
  std::size_t dimension = 0;
  std::vector<Vec> decision_means;
  std::vector<Facet> facets;
  Vec lambda_star;
  std::vector<std::size_t> face_decisions;
  std::vector<Vec> cone_generators;
  Vec nu_prime;
  std::vector<Vec> perp_basis;
  double delta_margin = 0.0;
  std::size_t cone_dimension = 0;
  std::vector<ConeFacet> cone_facets;
  bool generators_overridden = false;

  bool crp() const { return cone_dimension == 1; }
  std::size_t perp_dimension() const { return perp_basis.size(); }

  bool is_face_decision(std::size_t k) const {
    return std::find(face_decisions.begin(), face_decisions.end(), k) != face_decisions.end();
  }

  /// Coordinates of x in the perp basis.
  Vec perp_coords(std::span<const double> x) const {
    Vec y(perp_basis.size());
    for (std::size_t b = 0; b < perp_basis.size(); ++b) y[b] = dot(x, perp_basis[b]);
    return y;
  }

  /// Ambient vector with the given perp-basis coordinates.
  Vec embed(std::span<const double> y) const {
    Vec x(dimension, 0.0);
    for (std::size_t b = 0; b < perp_basis.size(); ++b)
      for (std::size_t i = 0; i < dimension; ++i) x[i] += y[b] * perp_basis[b][i];
    return x;
  }
};

namespace detail {

inline Eigen::VectorXd to_eigen(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Vec from_eigen(const Eigen::VectorXd& v) { return Vec(v.data(), v.data() + v.size()); }

inline std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return static_cast<std::uint64_t>(std::llround(r));
}

/// Calls fn(indices) for every k-subset of {0..n-1} in lexicographic order.
template <class Fn>
void for_each_combination(std::size_t n, std::size_t k, Fn&& fn) {
  if (k > n) return;
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    fn(std::as_const(idx));
    if (k == 0) return;
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

inline void dedupe_points(std::vector<Vec>& pts) {
  std::vector<Vec> out;
  for (auto& p : pts) {
    const bool seen = std::any_of(out.begin(), out.end(),
                                  [&](const Vec& q) { return max_abs_diff(p, q) <= kGeomTol; });
    if (!seen) out.push_back(std::move(p));
  }
  pts = std::move(out);
}

inline constexpr std::uint64_t kMaxFacetCandidates = 50'000'000;

/// Facets of conv(points) in R^m by brute force over m-subsets: keep every
/// hyperplane through m affinely independent points that supports all points.
inline std::vector<Facet> hull_facets(const std::vector<Vec>& points, std::size_t m) {
  std::vector<Facet> facets;
  if (points.empty() || m == 0) return facets;
  if (binomial(points.size(), m) > kMaxFacetCandidates)
    throw Error(ErrorKind::DimensionTooLarge, "too many candidate vertices for facet enumeration");

  auto known = [&](const Vec& n, double b) {
    return std::any_of(facets.begin(), facets.end(), [&](const Facet& f) {
      return max_abs_diff(f.normal, n) <= 1e-7 && std::abs(f.offset - b) <= 1e-7;
    });
  };

  for_each_combination(points.size(), m, [&](const std::vector<std::size_t>& idx) {
    Eigen::VectorXd normal(static_cast<Eigen::Index>(m));
    if (m == 1) {
      normal(0) = 1.0;
    } else {
      Eigen::MatrixXd diffs(static_cast<Eigen::Index>(m - 1), static_cast<Eigen::Index>(m));
      const auto p0 = to_eigen(points[idx[0]]);
      for (std::size_t r = 1; r < m; ++r)
        diffs.row(static_cast<Eigen::Index>(r - 1)) = (to_eigen(points[idx[r]]) - p0).transpose();
      Eigen::FullPivLU<Eigen::MatrixXd> lu(diffs);
      lu.setThreshold(1e-10);
      if (lu.rank() != static_cast<Eigen::Index>(m - 1)) return;
      normal = lu.kernel().col(0);
      normal.normalize();
    }
    const double b0 = normal.dot(to_eigen(points[idx[0]]));
    bool below = true;
    bool above = true;
    for (const auto& p : points) {
      const double v = normal.dot(to_eigen(p)) - b0;
      if (v > kGeomTol) below = false;
      if (v < -kGeomTol) above = false;
      if (!below && !above) return;
    }
    // Both true means every point lies on the hyperplane: not full-dimensional.
    if (below && above) return;
    if (above) normal = -normal;
    Vec n = from_eigen(normal);
    for (auto& c : n)
      if (std::abs(c) < 1e-14) c = 0.0;
    const double b = above ? -b0 : b0;
    if (!known(n, b)) facets.push_back({std::move(n), b});
  });
  return facets;
}

/// Least-squares coefficients of x on the columns gens[subset]; nullopt if
/// the columns are linearly dependent.
inline std::optional<Eigen::VectorXd> subset_least_squares(const std::vector<Vec>& gens,
                                                           const std::vector<std::size_t>& subset,
                                                           const Eigen::VectorXd& x) {
  const auto n = x.size();
  Eigen::MatrixXd g(n, static_cast<Eigen::Index>(subset.size()));
  for (std::size_t j = 0; j < subset.size(); ++j) g.col(static_cast<Eigen::Index>(j)) = to_eigen(gens[subset[j]]);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(g);
  qr.setThreshold(1e-10);
  if (qr.rank() != static_cast<Eigen::Index>(subset.size())) return std::nullopt;
  return Eigen::VectorXd(qr.solve(x));
}

/// Euclidean projection of x onto cone(gens[active]) by active-set enumeration.
inline Vec project_onto_subcone(std::span<const double> x, const std::vector<Vec>& gens,
                                const std::vector<std::size_t>& active) {
  const Eigen::VectorXd xe = to_eigen(x);
  Eigen::VectorXd best = Eigen::VectorXd::Zero(xe.size());
  double best_residual = std::numeric_limits<double>::infinity();
  bool found = false;
  // Fallback: best nonnegative-coefficient candidate if no subset passes KKT
  // at the stated tolerance.
  Eigen::VectorXd fallback = Eigen::VectorXd::Zero(xe.size());
  double fallback_residual = xe.norm();

  auto kkt_ok = [&](const Eigen::VectorXd& z) {
    const Eigen::VectorXd r = xe - z;
    const double scale = std::max(1.0, xe.norm());
    for (auto a : active)
      if (r.dot(to_eigen(gens[a])) > kGeomTol * scale) return false;
    return true;
  };

  if (kkt_ok(best)) {
    best_residual = xe.norm();
    found = true;
  }
  const std::size_t d = active.size();
  for (std::size_t size = 1; size <= d; ++size) {
    for_each_combination(d, size, [&](const std::vector<std::size_t>& local) {
      std::vector<std::size_t> subset(size);
      for (std::size_t j = 0; j < size; ++j) subset[j] = active[local[j]];
      auto coef = subset_least_squares(gens, subset, xe);
      if (!coef) return;
      if ((coef->array() < -1e-12).any()) return;
      Eigen::VectorXd z = Eigen::VectorXd::Zero(xe.size());
      for (std::size_t j = 0; j < size; ++j)
        z += std::max(0.0, (*coef)(static_cast<Eigen::Index>(j))) * to_eigen(gens[subset[j]]);
      const double res = (xe - z).norm();
      if (res < fallback_residual) {
        fallback_residual = res;
        fallback = z;
      }
      if (kkt_ok(z) && res < best_residual) {
        best_residual = res;
        best = z;
        found = true;
      }
    });
  }
  return from_eigen(found ? best : fallback);
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

/// Orthonormal basis of the orthogonal complement of span(vectors), built by
/// Gram-Schmidt on the standard basis so the result is canonical.
inline std::vector<Vec> complement_basis(const std::vector<Vec>& vectors, std::size_t n) {
  std::vector<Vec> span_basis;
  for (const auto& v : vectors) {
    Vec w = v;
    for (const auto& b : span_basis) {
      const double c = dot(w, b);
      for (std::size_t i = 0; i < n; ++i) w[i] -= c * b[i];
    }
    if (norm(w) > 1e-9) span_basis.push_back(normalized(w));
  }
  std::vector<Vec> out;
  for (std::size_t e = 0; e < n && span_basis.size() + out.size() < n; ++e) {
    Vec w(n, 0.0);
    w[e] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : span_basis) {
        const double c = dot(w, b);
        for (std::size_t i = 0; i < n; ++i) w[i] -= c * b[i];
      }
      for (const auto& b : out) {
        const double c = dot(w, b);
        for (std::size_t i = 0; i < n; ++i) w[i] -= c * b[i];
      }
    }
    if (norm(w) > 1e-6) {
      Vec u = normalized(w);
      for (auto& c : u)
        if (std::abs(c) < 1e-15) c = 0.0;
      out.push_back(std::move(u));
    }
  }
  return out;
}

inline std::size_t span_rank(const std::vector<Vec>& vectors, std::size_t n) {
  return n - complement_basis(vectors, n).size();
}

/// All points obtained from the means by zeroing any subset of coordinates;
/// their convex hull is the rate region.
inline std::vector<Vec> region_vertices(const std::vector<Vec>& means, std::size_t n) {
  std::vector<Vec> pts;
  for (const auto& mu : means) {
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      Vec p = mu;
      for (std::size_t i = 0; i < n; ++i)
        if (mask & (1u << i)) p[i] = 0.0;
      pts.push_back(std::move(p));
    }
  }
  dedupe_points(pts);
  return pts;
}

/// Relative-boundary facets of cone(gens), computed inside span(gens).
inline std::vector<ConeFacet> cone_facets(const std::vector<Vec>& gens, std::size_t n) {
  std::vector<ConeFacet> out;
  const std::size_t d = span_rank(gens, n);
  if (d < 2) return out;
  // Orthonormal frame of span(gens).
  std::vector<Vec> frame;
  for (const auto& g : gens) {
    Vec w = g;
    for (const auto& b : frame) {
      const double c = dot(w, b);
      for (std::size_t i = 0; i < n; ++i) w[i] -= c * b[i];
    }
    if (norm(w) > 1e-9) frame.push_back(normalized(w));
  }
  std::vector<Vec> local(gens.size(), Vec(d));
  for (std::size_t g = 0; g < gens.size(); ++g)
    for (std::size_t b = 0; b < d; ++b) local[g][b] = dot(gens[g], frame[b]);

  std::vector<std::vector<std::size_t>> seen;
  for_each_combination(gens.size(), d - 1, [&](const std::vector<std::size_t>& idx) {
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(d - 1), static_cast<Eigen::Index>(d));
    for (std::size_t r = 0; r < d - 1; ++r) rows.row(static_cast<Eigen::Index>(r)) = to_eigen(local[idx[r]]).transpose();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(rows);
    lu.setThreshold(1e-10);
    if (lu.rank() != static_cast<Eigen::Index>(d - 1)) return;
    Eigen::VectorXd normal = lu.kernel().col(0);
    bool below = true;
    bool above = true;
    std::vector<std::size_t> on;
    for (std::size_t g = 0; g < gens.size(); ++g) {
      const double v = normal.dot(to_eigen(local[g]));
      if (v > kGeomTol) below = false;
      if (v < -kGeomTol) above = false;
      if (std::abs(v) <= kGeomTol) on.push_back(g);
    }
    if (!(below || above)) return;
    if (std::find(seen.begin(), seen.end(), on) != seen.end()) return;
    seen.push_back(on);
    ConeFacet f;
    f.generators = on;
    for (std::size_t i = 0; i < n && !f.on_orthant_boundary; ++i) {
      f.on_orthant_boundary = std::all_of(on.begin(), on.end(), [&](std::size_t g) { return gens[g][i] <= kGeomTol; });
    }
    out.push_back(std::move(f));
  });
  return out;
}

}  // namespace detail

/// Ray projection: x_star = (x.nu) nu, x_perp = x - x_star.
struct RayProjection {
  Vec x_star;
  Vec x_perp;
};

inline RayProjection project_ray(std::span<const double> x, std::span<const double> nu) {
  const double c = dot(x, nu);
  RayProjection out{scaled(nu, c), Vec(x.begin(), x.end())};
  for (std::size_t i = 0; i < x.size(); ++i) out.x_perp[i] -= out.x_star[i];
  return out;
}

/// Closest point of the normal cone to x.
inline Vec project_cone(std::span<const double> x, const RateRegionGeometry& geom) {
  return detail::project_onto_subcone(x, geom.cone_generators, detail::all_indices(geom.cone_generators.size()));
}

/// Orthogonal projection of x on the subspace orthogonal to the normal cone.
inline Vec project_perp_sp(std::span<const double> x, const RateRegionGeometry& geom) {
  return geom.embed(geom.perp_coords(x));
}

/// Distance from the cone projection of x to the relative boundary of the
/// cone. Boundary facets lying in a coordinate hyperplane are skipped unless
/// every facet does, in which case the full relative boundary is used.
inline double rel_boundary_distance(std::span<const double> x, const RateRegionGeometry& geom) {
  const Vec xs = project_cone(x, geom);
  if (geom.cone_dimension <= 1) return norm(xs);
  const bool all_excluded = std::all_of(geom.cone_facets.begin(), geom.cone_facets.end(),
                                        [](const ConeFacet& f) { return f.on_orthant_boundary; });
  double h = std::numeric_limits<double>::infinity();
  for (const auto& f : geom.cone_facets) {
    if (f.on_orthant_boundary && !all_excluded) continue;
    const Vec p = detail::project_onto_subcone(xs, geom.cone_generators, f.generators);
    h = std::min(h, norm(sub(xs, p)));
  }
  return h;
}

namespace detail {

/// Points of the region lying on every supporting hyperplane of the cone.
inline std::vector<Vec> face_points(const RateRegionGeometry& geom) {
  std::vector<Vec> out;
  const double level = dot(geom.nu_prime, geom.lambda_star);
  const double slack = kGeomTol * std::max(1.0, std::abs(level));
  for (auto& p : region_vertices(geom.decision_means, geom.dimension))
    if (std::abs(dot(geom.nu_prime, p) - level) <= slack) out.push_back(std::move(p));
  return out;
}

}  // namespace detail

/// Distance from lambda* to the relative boundary of the face V*.
inline double face_margin(const RateRegionGeometry& geom) {
  const std::size_t m = geom.perp_dimension();
  if (m == 0) return std::numeric_limits<double>::infinity();
  std::vector<Vec> local;
  for (const auto& p : detail::face_points(geom)) local.push_back(geom.perp_coords(sub(p, geom.lambda_star)));
  const auto facets = detail::hull_facets(local, m);
  if (facets.empty()) throw Error(ErrorKind::DegenerateFace, "face V* is lower-dimensional than expected");
  double delta = std::numeric_limits<double>::infinity();
  for (const auto& f : facets) delta = std::min(delta, f.offset);
  if (delta <= kGeomTol) throw Error(ErrorKind::DegenerateFace, "lambda* lies on the relative boundary of V*");
  return delta;
}

namespace detail {

inline void validate_means(const std::vector<Vec>& means, std::span<const double> lambda_star) {
  const std::size_t n = lambda_star.size();
  if (n > 6) throw Error(ErrorKind::DimensionTooLarge, "at most 6 flows are supported, got " + std::to_string(n));
  if (n == 0) throw Error(ErrorKind::ConfigInvalid, "empty lambda*");
  if (means.empty()) throw Error(ErrorKind::ConfigInvalid, "no service decisions");
  for (std::size_t k = 0; k < means.size(); ++k) {
    const auto& mu = means[k];
    if (mu.size() != n) throw Error(ErrorKind::ConfigInvalid, "decision mean " + std::to_string(k) + " has wrong dimension");
    if (std::any_of(mu.begin(), mu.end(), [](double v) { return !(v >= 0.0) || !std::isfinite(v); }))
      throw Error(ErrorKind::ConfigInvalid, "decision mean " + std::to_string(k) + " has a negative entry");
    if (std::all_of(mu.begin(), mu.end(), [](double v) { return v == 0.0; }))
      throw Error(ErrorKind::ConfigInvalid, "decision mean " + std::to_string(k) + " is zero");
    for (std::size_t l = 0; l < k; ++l)
      if (max_abs_diff(mu, means[l]) <= kGeomTol)
        throw Error(ErrorKind::ConfigInvalid, "decision means " + std::to_string(l) + " and " + std::to_string(k) + " coincide");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::none_of(means.begin(), means.end(), [&](const Vec& mu) { return mu[i] > 0.0; }))
      throw Error(ErrorKind::ConfigInvalid, "flow " + std::to_string(i) + " is never served");
    if (!(lambda_star[i] > 0.0)) throw Error(ErrorKind::ConfigInvalid, "lambda* must be strictly positive");
  }
}

inline std::string format_vec(std::span<const double> v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v[i]);
    s += buf;
  }
  return s + ")";
}

inline void finish_geometry(RateRegionGeometry& geom) {
  const std::size_t n = geom.dimension;
  geom.cone_dimension = span_rank(geom.cone_generators, n);
  Vec sum(n, 0.0);
  for (const auto& g : geom.cone_generators)
    for (std::size_t i = 0; i < n; ++i) sum[i] += g[i];
  geom.nu_prime = normalized(sum);
  if (std::any_of(geom.nu_prime.begin(), geom.nu_prime.end(), [](double v) { return v <= kGeomTol; }))
    throw Error(ErrorKind::NotMaximal, "normal cone has no strictly positive direction at lambda*");
  geom.perp_basis = complement_basis(geom.cone_generators, n);
  geom.cone_facets = cone_facets(geom.cone_generators, n);

  const double level = dot(geom.nu_prime, geom.lambda_star);
  const double slack = kGeomTol * std::max(1.0, std::abs(level));
  geom.face_decisions.clear();
  for (std::size_t k = 0; k < geom.decision_means.size(); ++k)
    if (std::abs(dot(geom.nu_prime, geom.decision_means[k]) - level) <= slack) geom.face_decisions.push_back(k);
  geom.delta_margin = face_margin(geom);
}

}  // namespace detail

/// Builds the rate region from decision means and locates lambda* on its
/// outer boundary. Facets come from brute-force enumeration over N-subsets
/// of region vertices; the normal cone is generated by the outer normals of
/// facets through lambda*.
inline RateRegionGeometry build_rate_region(const std::vector<Vec>& decision_means, std::span<const double> lambda_star) {
  detail::validate_means(decision_means, lambda_star);
  const std::size_t n = lambda_star.size();
  RateRegionGeometry geom;
  geom.dimension = n;
  geom.decision_means = decision_means;
  geom.lambda_star.assign(lambda_star.begin(), lambda_star.end());
  geom.facets = detail::hull_facets(detail::region_vertices(decision_means, n), n);

  for (const auto& f : geom.facets) {
    const double v = dot(f.normal, lambda_star);
    if (v > f.offset + kGeomTol * std::max(1.0, std::abs(f.offset)))
      throw Error(ErrorKind::NotOnBoundary, "lambda* " + detail::format_vec(lambda_star) + " lies outside the rate region");
  }
  for (const auto& f : geom.facets) {
    const bool outer = std::all_of(f.normal.begin(), f.normal.end(), [](double c) { return c >= -kGeomTol; });
    if (outer && std::abs(dot(f.normal, lambda_star) - f.offset) <= kGeomTol * std::max(1.0, std::abs(f.offset)))
      geom.cone_generators.push_back(f.normal);
  }

  // lambda* is maximal iff every coordinate is covered by an active outer
  // normal; otherwise moving along an uncovered axis stays inside V.
  for (std::size_t i = 0; i < n; ++i) {
    const bool covered = std::any_of(geom.cone_generators.begin(), geom.cone_generators.end(),
                                     [&](const Vec& g) { return g[i] > kGeomTol; });
    if (covered) continue;
    double step = std::numeric_limits<double>::infinity();
    for (const auto& f : geom.facets)
      if (f.normal[i] > kGeomTol) step = std::min(step, (f.offset - dot(f.normal, lambda_star)) / f.normal[i]);
    Vec dominating(lambda_star.begin(), lambda_star.end());
    dominating[i] += step;
    throw Error(ErrorKind::NotMaximal, "lambda* " + detail::format_vec(lambda_star) + " is dominated by " +
                                           detail::format_vec(dominating) + " in the rate region");
  }
  detail::finish_geometry(geom);
  return geom;
}

/// Geometry from user-supplied cone generators (a single one for CRP). The
/// generators are verified to support the region at lambda*, not derived.
inline RateRegionGeometry build_rate_region_with_generators(const std::vector<Vec>& decision_means,
                                                            std::span<const double> lambda_star,
                                                            const std::vector<Vec>& generators) {
  detail::validate_means(decision_means, lambda_star);
  const std::size_t n = lambda_star.size();
  if (generators.empty()) throw Error(ErrorKind::ConfigInvalid, "empty generator list");
  RateRegionGeometry geom;
  geom.dimension = n;
  geom.decision_means = decision_means;
  geom.lambda_star.assign(lambda_star.begin(), lambda_star.end());
  geom.generators_overridden = true;
  for (const auto& raw : generators) {
    if (raw.size() != n) throw Error(ErrorKind::ConfigInvalid, "generator has wrong dimension");
    Vec g = normalized(raw);
    if (std::any_of(g.begin(), g.end(), [](double c) { return c < -kGeomTol; }))
      throw Error(ErrorKind::ConfigInvalid, "generator " + detail::format_vec(raw) + " is not nonnegative");
    const double level = dot(g, lambda_star);
    for (std::size_t k = 0; k < decision_means.size(); ++k)
      if (dot(g, decision_means[k]) > level + kGeomTol * std::max(1.0, level))
        throw Error(ErrorKind::NotOnBoundary, "generator " + detail::format_vec(raw) + " does not support the region at lambda* (decision " +
                                                  std::to_string(k) + ")");
    geom.facets.push_back({g, level});
    geom.cone_generators.push_back(std::move(g));
  }
  detail::finish_geometry(geom);
  return geom;
}

/// Checks lambda* - eps * nu' is strictly positive and interior to V.
inline bool is_interior_load(std::span<const double> x, const RateRegionGeometry& geom) {
  if (std::any_of(x.begin(), x.end(), [](double v) { return !(v > kGeomTol); })) return false;
  for (const auto& f : geom.facets)
    if (!(dot(f.normal, x) < f.offset - kGeomTol)) return false;
  return true;
}

inline Vec heavy_traffic_point(const RateRegionGeometry& geom, double epsilon) {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::LoadPointInvalid, "epsilon must be positive");
  Vec x = geom.lambda_star;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] -= epsilon * geom.nu_prime[i];
  if (!is_interior_load(x, geom))
    throw Error(ErrorKind::LoadPointInvalid, "load point " + detail::format_vec(x) + " is not strictly positive and interior");
  return x;
}

}  // namespace mwsim
