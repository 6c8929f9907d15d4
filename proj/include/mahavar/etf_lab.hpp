#pragma once
// Simplex-ETF geometry and numerical checks of the class-wise distance
// variance results:
//
//  * ID bound. For x = mu_{c*} + Delta with ||Delta|| <= eps < K/2,
//      ((C-1)K^4/C^2)(1-g)^2 <= Var_c ||x - mu_c||^2
//                              <= ((C-1)K^4/C^2)(1+g)^2 + 2 eps^2 K^2 (C-2)/C,
//    g = eps * sqrt(2C / (K^2 (C-1))), with the exact value
//      Var = (C-1)(K^2 + xibar)^2 / C^2 + (C-1) S_xi^2 / C,
//      xi_c = 2 Delta^T (mu_{c*} - mu_c).
//  * Separation. Centered ETF, R <= 1, unit features: an OOD unit vector with
//    max_c |x^T mu_c| < R(R-eps)/sqrt(C-1) has strictly lower variance than
//    every ID point within eps of a class mean.
//  * Projection identity. Centered ETF, any unit x:
//      Var_c ||x - mu_c||^2 = 4 R^2 rho / (C-1), rho = ||P x||^2,
//    P the orthogonal projector onto span(mu_1..mu_C).

#include "json.hpp"
#include "mahavar/error.hpp"
#include "mahavar/types.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace mahavar::etf {

struct EtfGeometry {
  Matrix means;  // C x d
  double radius = 0.0;                // ||mu_c - mu_G||
  double inter_class_distance = 0.0;  // K, K^2 = 2 R^2 C / (C-1)
  int num_classes = 0;
  int dim = 0;
  bool centered = true;
  Eigen::MatrixXd span_basis;  // d x (C-1), orthonormal basis of span(mu_c - mu_G)

  Vector global_mean() const { return means.colwise().mean().transpose(); }
};

/// R such that the ETF with C classes has inter-class distance K.
inline double radius_for_distance(int C, double K) { return K * std::sqrt((C - 1.0) / (2.0 * C)); }

inline double distance_for_radius(int C, double R) { return R * std::sqrt(2.0 * C / (C - 1.0)); }

namespace detail {

inline Eigen::MatrixXd random_orthogonal(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
  // Sign fix so the distribution is Haar and the result is deterministic.
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < d; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

inline Vector random_unit(Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vector v(d);
  do {
    for (Eigen::Index i = 0; i < d; ++i) v[i] = normal(rng);
  } while (v.norm() == 0.0);
  return v / v.norm();
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double population_variance(const Vector& v) {
  const double mean = v.mean();
  return (v.array() - mean).square().mean();
}

inline Vector squared_distances(const Matrix& means, const Vector& x) {
  Vector d(means.rows());
  for (Eigen::Index c = 0; c < means.rows(); ++c) d[c] = (means.row(c).transpose() - x).squaredNorm();
  return d;
}

}  // namespace detail

/// Simplex ETF with C classes and radius R embedded in R^d.
///
/// Rows v_c = sqrt(C/(C-1)) R (e_c - 1/C) are expressed in an orthonormal
/// basis of the sum-zero hyperplane (QR completion of the all-ones vector)
/// and zero-padded to d coordinates. A seeded random rotation and a
/// translation are optional.
inline EtfGeometry build_etf(int num_classes, int dim, double radius, std::optional<std::uint64_t> rotation_seed = {},
                             std::optional<Vector> offset = {}) {
  const int C = num_classes;
  if (C < 2) throw ValidationError("an ETF needs at least 2 classes");
  if (dim < C - 1) throw ValidationError("dimension " + std::to_string(dim) + " < C-1 = " + std::to_string(C - 1));
  if (!(radius > 0.0) || !std::isfinite(radius)) throw ValidationError("ETF radius must be positive");
  if (offset && offset->size() != dim) throw ValidationError("ETF offset has wrong dimension");

  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(C, C);
  v.array() -= 1.0 / C;
  v *= std::sqrt(static_cast<double>(C) / (C - 1.0)) * radius;

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd::Ones(C, 1));
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(C, C);
  const Eigen::MatrixXd hyperplane = q.rightCols(C - 1);  // orthonormal, orthogonal to 1

  EtfGeometry g;
  g.num_classes = C;
  g.dim = dim;
  g.radius = radius;
  g.inter_class_distance = distance_for_radius(C, radius);
  g.means = Matrix::Zero(C, dim);
  g.means.leftCols(C - 1) = v * hyperplane;
  g.span_basis = Eigen::MatrixXd::Identity(dim, C - 1);

  if (rotation_seed) {
    auto rng = make_rng(*rotation_seed, 0x0E7F);
    const Eigen::MatrixXd rot = detail::random_orthogonal(dim, rng);
    g.means = (g.means * rot.transpose()).eval();
    g.span_basis = rot.leftCols(C - 1);
  }
  g.centered = true;
  if (offset && offset->norm() > 0.0) {
    g.means.rowwise() += offset->transpose();
    g.centered = false;
  }
  return g;
}

struct EtfInvariants {
  double max_radius_error = 0.0;    // | ||mu_c - mu_G|| - R | / R
  double max_distance_error = 0.0;  // | ||mu_c - mu_c'|| - K | / K
  double max_inner_error = 0.0;     // | <mu_c - mu_G, mu_c' - mu_G> + R^2/(C-1) | / R^2
  double centroid_norm = 0.0;       // ||sum_c mu_c|| / R

  bool ok(double tol = 1e-10, bool require_centered = false) const {
    return max_radius_error <= tol && max_distance_error <= tol && max_inner_error <= tol &&
           (!require_centered || centroid_norm <= tol);
  }
};

inline EtfInvariants check_invariants(const EtfGeometry& g) {
  EtfInvariants r;
  const Vector mg = g.global_mean();
  const double R = g.radius, K = g.inter_class_distance;
  const int C = g.num_classes;
  for (int c = 0; c < C; ++c) {
    const Vector a = g.means.row(c).transpose() - mg;
    r.max_radius_error = std::max(r.max_radius_error, std::abs(a.norm() - R) / R);
    for (int c2 = c + 1; c2 < C; ++c2) {
      const Vector b = g.means.row(c2).transpose() - mg;
      r.max_distance_error =
          std::max(r.max_distance_error, std::abs((g.means.row(c) - g.means.row(c2)).norm() - K) / K);
      r.max_inner_error = std::max(r.max_inner_error, std::abs(a.dot(b) + R * R / (C - 1)) / (R * R));
    }
  }
  r.centroid_norm = g.means.colwise().sum().norm() / R;
  return r;
}

enum class DeltaMode { uniform_ball, boundary, in_span };

inline std::string_view to_string(DeltaMode m) {
  switch (m) {
    case DeltaMode::uniform_ball: return "uniform_ball";
    case DeltaMode::boundary: return "boundary";
    case DeltaMode::in_span: return "in_span";
  }
  return "";
}

struct PerturbationSpec {
  double epsilon = 0.0;
  DeltaMode mode = DeltaMode::uniform_ball;

  void validate(const EtfGeometry& g) const {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ValidationError("epsilon must be finite and >= 0");
    if (!(epsilon < g.inter_class_distance / 2.0))
      throw ValidationError("epsilon " + std::to_string(epsilon) + " must be below K/2 = " +
                            std::to_string(g.inter_class_distance / 2.0));
  }
};

/// Outcome of one ID-bound check.
struct BoundCheck {
  double observed_variance = 0.0;
  double lower_bound = 0.0;
  double upper_bound = 0.0;
  double gamma = 0.0;
  double exact_variance = 0.0;
  double xi_bar = 0.0;
  double xi_spread = 0.0;  // S_xi^2
  /// (C-1)K^4/C^2, the eps -> 0 limit; bound tolerances are relative to it.
  double scale = 0.0;
  bool passed = false;

  double lower_slack() const { return (observed_variance - lower_bound) / scale; }
  double upper_slack() const { return (upper_bound - observed_variance) / scale; }
  double exact_rel_error() const {
    return std::abs(observed_variance - exact_variance) / std::max(std::abs(exact_variance), 1e-300);
  }
};

inline constexpr double kBoundTolerance = 1e-9;
inline constexpr double kExactTolerance = 1e-9;

/// Places x = mu_{c*} + delta and compares the observed class-wise distance
/// variance with the closed-form bounds and the exact xi decomposition.
inline BoundCheck verify_theorem2(const EtfGeometry& g, const PerturbationSpec& spec, int class_index,
                                  const Vector& delta) {
  spec.validate(g);
  const int C = g.num_classes;
  if (class_index < 0 || class_index >= C) throw ValidationError("class index out of range");
  if (delta.size() != g.dim) throw ValidationError("delta has wrong dimension");
  if (delta.norm() > spec.epsilon * (1.0 + 1e-12))
    throw ValidationError("||delta|| = " + std::to_string(delta.norm()) + " exceeds epsilon = " +
                          std::to_string(spec.epsilon));

  const double K = g.inter_class_distance;
  const double K2 = K * K;
  const double eps = spec.epsilon;
  const Vector mu_star = g.means.row(class_index).transpose();
  const Vector x = mu_star + delta;

  BoundCheck b;
  b.observed_variance = detail::population_variance(detail::squared_distances(g.means, x));

  // xi decomposition over c != c*
  Vector xi(C - 1);
  for (int c = 0, k = 0; c < C; ++c)
    if (c != class_index) xi[k++] = 2.0 * delta.dot(mu_star - g.means.row(c).transpose());
  b.xi_bar = xi.mean();
  b.xi_spread = (xi.array() - b.xi_bar).square().sum() / (C - 1.0);
  b.exact_variance =
      (C - 1.0) * (K2 + b.xi_bar) * (K2 + b.xi_bar) / (double(C) * C) + (C - 1.0) * b.xi_spread / C;

  b.scale = (C - 1.0) * K2 * K2 / (double(C) * C);
  b.gamma = eps * std::sqrt(2.0 * C / (K2 * (C - 1.0)));
  b.lower_bound = b.scale * (1.0 - b.gamma) * (1.0 - b.gamma);
  b.upper_bound = b.scale * (1.0 + b.gamma) * (1.0 + b.gamma) + 2.0 * eps * eps * K2 * (C - 2.0) / C;

  const double tol = kBoundTolerance * b.scale;
  b.passed = b.lower_bound - tol <= b.observed_variance && b.observed_variance <= b.upper_bound + tol &&
             b.exact_rel_error() <= kExactTolerance;
  return b;
}

/// Orthonormal basis (d x rank) of the row space of `means`.
inline Eigen::MatrixXd orthonormal_span(const Matrix& means) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(means.transpose());
  qr.setThreshold(1e-10);
  const auto rank = qr.rank();
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(means.cols(), rank);
  return q;
}

namespace detail {

inline void require_centered(const EtfGeometry& g) {
  if (g.means.colwise().sum().norm() > 1e-10 * g.radius * g.num_classes)
    throw ValidationError("geometry must be centered (sum of class means = 0)");
}

inline void require_unit(const Vector& p, std::string_view what) {
  if (std::abs(p.norm() - 1.0) > 1e-9)
    throw ValidationError(std::string(what) + " must be a unit vector (norm " + std::to_string(p.norm()) + ")");
}

}  // namespace detail

/// Squared norm of the orthogonal projection of `point` onto span(mu_c).
/// The projector is built from the means by a rank-revealing QR.
inline double projection_rho(const EtfGeometry& g, const Vector& point) {
  detail::require_centered(g);
  if (point.size() != g.dim) throw ValidationError("point has wrong dimension");
  detail::require_unit(point, "point");
  const Eigen::MatrixXd basis = orthonormal_span(g.means);
  return (basis.transpose() * point).squaredNorm();
}

struct ProjectionIdentity {
  double rho = 0.0;
  double direct_variance = 0.0;  // Var_c ||x - mu_c||^2 from explicit distances
  double closed_form = 0.0;      // 4 R^2 rho / (C-1)
  double rel_error = 0.0;

  bool holds(double tol = 1e-9) const { return rel_error <= tol; }
};

inline ProjectionIdentity check_projection_identity(const EtfGeometry& g, const Vector& point) {
  ProjectionIdentity r;
  r.rho = projection_rho(g, point);
  const int C = g.num_classes;
  const double R = g.radius;
  r.direct_variance = detail::population_variance(detail::squared_distances(g.means, point));
  r.closed_form = 4.0 * R * R * r.rho / (C - 1.0);
  // Relative error; near rho = 0 the denominator is floored at 1e-6 of the
  // rho = 1 variance so exactly-orthogonal points are not judged against 0.
  const double floor = 1e-6 * 4.0 * R * R / (C - 1.0);
  r.rel_error = std::abs(r.direct_variance - r.closed_form) / std::max(std::abs(r.closed_form), floor);
  return r;
}

enum class SeparationStatus { separated, violated, not_applicable };

inline std::string_view to_string(SeparationStatus s) {
  switch (s) {
    case SeparationStatus::separated: return "separated";
    case SeparationStatus::violated: return "violated";
    case SeparationStatus::not_applicable: return "not_applicable";
  }
  return "";
}

struct SeparationVerdict {
  SeparationStatus status = SeparationStatus::not_applicable;
  double ood_variance = 0.0;
  double min_id_variance = 0.0;
  std::vector<double> id_variances;
  double id_lower_bound = 0.0;    // 4 R^2 (R - eps)^2 / (C-1)
  double angular_bound = 0.0;     // R (R - eps) / sqrt(C-1)
  double max_abs_cosine = 0.0;    // max_c |x_ood^T mu_c|
  double condition_margin = 0.0;  // angular_bound - max_abs_cosine
};

/// Checks strict ID-over-OOD variance separation on a centered unit-sphere
/// geometry. `id_points` rows must be unit vectors within eps of some class
/// mean. When the OOD angular condition fails the verdict is
/// not_applicable: the result only runs one way.
inline SeparationVerdict verify_theorem3(const EtfGeometry& g, double epsilon, const Vector& ood_point,
                                         const Matrix& id_points) {
  detail::require_centered(g);
  const int C = g.num_classes;
  const double R = g.radius;
  if (R > 1.0 + 1e-12) throw ValidationError("separation check requires R <= 1");
  if (!(epsilon >= 0.0) || !(epsilon < g.inter_class_distance / 2.0) || !(epsilon < R))
    throw ValidationError("epsilon must satisfy 0 <= eps < min(K/2, R)");
  if (ood_point.size() != g.dim || id_points.cols() != g.dim) throw ValidationError("point has wrong dimension");
  detail::require_unit(ood_point, "OOD point");

  SeparationVerdict v;
  v.angular_bound = R * (R - epsilon) / std::sqrt(C - 1.0);
  v.id_lower_bound = 4.0 * R * R * (R - epsilon) * (R - epsilon) / (C - 1.0);
  v.max_abs_cosine = (g.means * ood_point).cwiseAbs().maxCoeff();
  v.condition_margin = v.angular_bound - v.max_abs_cosine;
  v.ood_variance = detail::population_variance(detail::squared_distances(g.means, ood_point));

  v.min_id_variance = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < id_points.rows(); ++i) {
    const Vector x = id_points.row(i).transpose();
    detail::require_unit(x, "ID point " + std::to_string(i));
    const Vector d2 = detail::squared_distances(g.means, x);
    if (std::sqrt(d2.minCoeff()) > epsilon * (1.0 + 1e-9) + 1e-12)
      throw ValidationError("ID point " + std::to_string(i) + " is farther than epsilon from every class mean");
    const double var = detail::population_variance(d2);
    v.id_variances.push_back(var);
    v.min_id_variance = std::min(v.min_id_variance, var);
  }

  if (!(v.condition_margin > 0.0)) {
    v.status = SeparationStatus::not_applicable;
    return v;
  }
  v.status = v.min_id_variance > v.ood_variance ? SeparationStatus::separated : SeparationStatus::violated;
  return v;
}

struct IdSample {
  Matrix points;
  std::vector<int> classes;
  std::vector<double> deviations;  // ||x_i - mu_{class_i}||
};

inline constexpr int kSampleRetryCap = 1000;

/// Draws n points mu_c + Delta with ||Delta|| <= eps, classes assigned
/// round-robin. Point i depends only on (seed, i).
///
/// With `unit_sphere`, Delta is drawn in the tangent space at mu_c and the
/// point is renormalized to norm 1. A tangent step of length r lands at
/// deviation^2 = 1 + m^2 - 2 m^2 / sqrt(m^2 + r^2) (m = ||mu_c||), so r is
/// drawn below the length that reaches eps. Draws that still exceed eps
/// through rounding are redrawn, up to kSampleRetryCap times.
inline IdSample sample_id_points(const EtfGeometry& g, const PerturbationSpec& spec, int n, std::uint64_t seed,
                                 bool unit_sphere = false) {
  spec.validate(g);
  if (n < 0) throw ValidationError("sample count must be >= 0");
  const int C = g.num_classes;
  const Eigen::Index d = g.dim;
  const double eps = spec.epsilon;

  IdSample out;
  out.points.resize(n, d);
  out.classes.resize(static_cast<std::size_t>(n));
  out.deviations.resize(static_cast<std::size_t>(n));

  for (int i = 0; i < n; ++i) {
    auto rng = make_rng(seed, 0x1D, static_cast<std::uint64_t>(i));
    const int c = i % C;
    const Vector mu = g.means.row(c).transpose();
    double r_max = eps;
    if (unit_sphere) {
      const double m = mu.norm();
      if (std::abs(1.0 - m) > eps)
        throw ValidationError("infeasible perturbation: ||mu_" + std::to_string(c) + "|| = " + std::to_string(m) +
                              " is farther than eps = " + std::to_string(eps) + " from the unit sphere");
      const double reach = 2.0 * m * m / (1.0 + m * m - eps * eps);
      r_max = std::min(eps, std::sqrt(std::max(0.0, reach * reach - m * m)));
    }
    bool accepted = false;
    for (int attempt = 0; attempt < kSampleRetryCap && !accepted; ++attempt) {
      Vector dir;
      double r = r_max;
      if (spec.mode == DeltaMode::in_span) {
        dir = g.span_basis * detail::random_unit(g.span_basis.cols(), rng);
      } else {
        dir = detail::random_unit(d, rng);
      }
      if (unit_sphere) {
        // Tangent direction at mu (for in_span this stays inside the span).
        const Vector axis = mu / mu.norm();
        dir -= dir.dot(axis) * axis;
        if (dir.norm() < 1e-12) continue;
        dir /= dir.norm();
      }
      if (spec.mode != DeltaMode::boundary) {
        const double k = spec.mode == DeltaMode::in_span ? static_cast<double>(g.span_basis.cols())
                                                         : static_cast<double>(unit_sphere ? d - 1 : d);
        r = r_max * std::pow(detail::uniform(rng, 0.0, 1.0), 1.0 / std::max(k, 1.0));
      }
      if (attempt > 0) r *= std::pow(0.5, attempt);
      Vector x = mu + r * dir;
      if (unit_sphere) x /= x.norm();
      const double dev = (x - mu).norm();
      if (dev <= eps * (1.0 + 1e-12)) {
        out.points.row(i) = x.transpose();
        out.classes[static_cast<std::size_t>(i)] = c;
        out.deviations[static_cast<std::size_t>(i)] = dev;
        accepted = true;
      }
    }
    if (!accepted)
      throw ValidationError("infeasible perturbation: could not place a point within eps = " + std::to_string(eps) +
                            " of class " + std::to_string(c) + " after " + std::to_string(kSampleRetryCap) + " draws");
  }
  return out;
}

// Batch verification over random draws.

struct SuiteReport {
  std::string name;
  long draws = 0;
  long violations = 0;        // bound / separation / identity failures
  long exact_mismatches = 0;  // exact-formula disagreements (ID bound only)
  long not_applicable = 0;
  double max_exact_rel_error = 0.0;
  double min_lower_slack = std::numeric_limits<double>::infinity();
  double min_upper_slack = std::numeric_limits<double>::infinity();
  double min_separation_gap = std::numeric_limits<double>::infinity();
  double seconds = 0.0;

  bool passed() const { return draws > 0 && violations == 0 && exact_mismatches == 0; }

  nlohmann::json to_json() const {
    auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    return {{"name", name},
            {"draws", draws},
            {"violations", violations},
            {"exact_mismatches", exact_mismatches},
            {"not_applicable", not_applicable},
            {"max_exact_rel_error", max_exact_rel_error},
            {"min_lower_slack", finite_or_null(min_lower_slack)},
            {"min_upper_slack", finite_or_null(min_upper_slack)},
            {"min_separation_gap", finite_or_null(min_separation_gap)},
            {"passed", passed()}};
  }
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline DeltaMode random_mode(std::mt19937_64& rng) {
  return static_cast<DeltaMode>(uniform_int(rng, 0, 2));
}

}  // namespace detail

/// ID-bound suite: C in [3,50], d in [C-1, C+64], R in [0.1,10],
/// eps uniform in (0, K/2); half the geometries are translated off-center.
inline SuiteReport run_theorem2_suite(long draws, std::uint64_t seed) {
  SuiteReport rep;
  rep.name = "id_variance_bounds";
  detail::Stopwatch sw;
  for (long k = 0; k < draws; ++k) {
    auto rng = make_rng(seed, 0x7E2, static_cast<std::uint64_t>(k));
    const int C = detail::uniform_int(rng, 3, 50);
    const int d = detail::uniform_int(rng, C - 1, C + 64);
    const double R = detail::uniform(rng, 0.1, 10.0);
    std::optional<Vector> offset;
    if (detail::uniform(rng, 0.0, 1.0) < 0.5) offset = detail::random_unit(d, rng) * detail::uniform(rng, 0.0, 10.0 * R);
    const auto g = build_etf(C, d, R, rng(), offset);
    PerturbationSpec spec;
    spec.mode = detail::random_mode(rng);
    do {
      spec.epsilon = detail::uniform(rng, 0.0, g.inter_class_distance / 2.0);
    } while (spec.epsilon == 0.0);
    const int cstar = detail::uniform_int(rng, 0, C - 1);
    const auto sample = sample_id_points(g, spec, 1, rng());
    // sample_id_points assigns class 0 to the first point; re-anchor to c*.
    const Vector delta = sample.points.row(0).transpose() - g.means.row(0).transpose();
    const BoundCheck b = verify_theorem2(g, spec, cstar, delta);

    ++rep.draws;
    const double tol = kBoundTolerance;
    if (b.lower_slack() < -tol || b.upper_slack() < -tol) ++rep.violations;
    if (b.exact_rel_error() > kExactTolerance) ++rep.exact_mismatches;
    rep.max_exact_rel_error = std::max(rep.max_exact_rel_error, b.exact_rel_error());
    rep.min_lower_slack = std::min(rep.min_lower_slack, b.lower_slack());
    rep.min_upper_slack = std::min(rep.min_upper_slack, b.upper_slack());
  }
  rep.seconds = sw.seconds();
  return rep;
}

/// Projection-identity suite on random centered ETFs with random unit
/// vectors (generic, in-span and, when d > C-1, orthogonal to the span).
/// In-span points must give rho = 1, and the in-span variance 4R^2/(C-1)
/// must dominate every point's variance, with equality only at rho = 1.
inline SuiteReport run_corollary_suite(long draws, std::uint64_t seed) {
  SuiteReport rep;
  rep.name = "projection_identity";
  detail::Stopwatch sw;
  for (long k = 0; k < draws; ++k) {
    auto rng = make_rng(seed, 0xC01, static_cast<std::uint64_t>(k));
    const int C = detail::uniform_int(rng, 3, 50);
    const int d = detail::uniform_int(rng, C - 1, C + 64);
    const double R = detail::uniform(rng, 0.1, 10.0);
    const auto g = build_etf(C, d, R, rng());

    const int kind = detail::uniform_int(rng, 0, d > C - 1 ? 2 : 1);
    Vector p;
    if (kind == 1) {
      p = g.span_basis * detail::random_unit(C - 1, rng);
    } else if (kind == 2) {
      Vector z = detail::random_unit(d, rng);
      z -= g.span_basis * (g.span_basis.transpose() * z);
      p = z / z.norm();
    } else {
      p = detail::random_unit(d, rng);
    }
    const auto id = check_projection_identity(g, p);
    ++rep.draws;
    bool ok = id.holds(1e-9);
    if (kind == 1 && std::abs(id.rho - 1.0) > 1e-9) ok = false;
    if (kind == 2 && id.rho > 1e-9) ok = false;
    // Dominance: the in-span unit-vector variance bounds every unit vector.
    const double in_span_var = 4.0 * R * R / (C - 1.0);
    const double gap = (in_span_var - id.direct_variance) / in_span_var;
    if (gap < -1e-9) ok = false;
    if (std::abs(gap) <= 1e-9 && std::abs(id.rho - 1.0) > 1e-9) ok = false;
    if (!ok) ++rep.violations;
    rep.max_exact_rel_error = std::max(rep.max_exact_rel_error, id.rel_error);
    if (kind != 1) rep.min_separation_gap = std::min(rep.min_separation_gap, gap);
  }
  rep.seconds = sw.seconds();
  return rep;
}

/// Unit OOD vector a*u + sqrt(1-a^2)*w with u a random in-span direction
/// scaled so max_c |x^T mu_c| = f * bound (f uniform in [0, 1)) and w a
/// random direction orthogonal to the span. Requires d > C-1.
inline Vector draw_separated_ood(const EtfGeometry& g, double angular_bound, std::mt19937_64& rng) {
  if (g.dim <= g.num_classes - 1) throw ValidationError("OOD construction needs d > C-1");
  const Vector u = g.span_basis * detail::random_unit(g.span_basis.cols(), rng);
  Vector w = detail::random_unit(g.dim, rng);
  w -= g.span_basis * (g.span_basis.transpose() * w);
  w /= w.norm();
  const double t0 = (g.means * u).cwiseAbs().maxCoeff();
  const double a = detail::uniform(rng, 0.0, 1.0) * std::min(1.0, angular_bound / t0);
  Vector x = a * u + std::sqrt(std::max(0.0, 1.0 - a * a)) * w;
  return x / x.norm();
}

/// Separation suite: centered ETF with R in [0.7, 1], unit-sphere ID points
/// within eps (eps in (1-R, min(K/2, R))), and OOD points meeting the
/// angular condition by construction.
inline SuiteReport run_theorem3_suite(long draws, std::uint64_t seed, int id_points_per_draw = 8) {
  SuiteReport rep;
  rep.name = "variance_separation";
  detail::Stopwatch sw;
  for (long k = 0; k < draws; ++k) {
    auto rng = make_rng(seed, 0x7E3, static_cast<std::uint64_t>(k));
    const int C = detail::uniform_int(rng, 3, 50);
    const int d = detail::uniform_int(rng, C, C + 64);
    const double R = detail::uniform(rng, 0.7, 1.0);
    const auto g = build_etf(C, d, R, rng());
    const double hi = 0.99 * std::min(g.inter_class_distance / 2.0, R);
    const double lo = std::max(1.0 - R, 1e-3);
    PerturbationSpec spec;
    spec.epsilon = detail::uniform(rng, lo, hi);
    spec.mode = detail::uniform(rng, 0.0, 1.0) < 0.5 ? DeltaMode::uniform_ball : DeltaMode::in_span;
    const auto ids = sample_id_points(g, spec, id_points_per_draw, rng(), /*unit_sphere=*/true);
    const double bound = R * (R - spec.epsilon) / std::sqrt(C - 1.0);
    const Vector ood = draw_separated_ood(g, bound, rng);
    const auto v = verify_theorem3(g, spec.epsilon, ood, ids.points);
    ++rep.draws;
    if (v.status == SeparationStatus::not_applicable)
      ++rep.not_applicable;
    else if (v.status == SeparationStatus::violated)
      ++rep.violations;
    if (v.status != SeparationStatus::not_applicable)
      rep.min_separation_gap = std::min(rep.min_separation_gap, (v.min_id_variance - v.ood_variance) / v.id_lower_bound);
  }
  // Every draw meets the condition by construction, so a not-applicable
  // verdict is a construction failure.
  rep.violations += rep.not_applicable;
  rep.seconds = sw.seconds();
  return rep;
}

struct MahalanobisAnalogueReport {
  long draws = 0;
  double max_rel_error = 0.0;
  bool passed() const { return draws > 0 && max_rel_error <= 1e-8; }
};

/// Mahalanobis analogue of the ID bound: class means L e_c for an ETF e_c in
/// whitened coordinates (Sigma = L L^T random SPD), x = mu_{c*} + L delta.
/// The class-wise Mahalanobis variance computed through Cholesky solves is
/// compared against explicit-inverse quadratic forms.
inline MahalanobisAnalogueReport run_mahalanobis_analogue(long draws, std::uint64_t seed) {
  MahalanobisAnalogueReport rep;
  for (long k = 0; k < draws; ++k) {
    auto rng = make_rng(seed, 0x3A4, static_cast<std::uint64_t>(k));
    const int C = detail::uniform_int(rng, 3, 20);
    const int d = detail::uniform_int(rng, C - 1, C + 16);
    const auto g = build_etf(C, d, detail::uniform(rng, 0.5, 5.0), rng());
    std::normal_distribution<double> normal;
    Eigen::MatrixXd a(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) a(i, j) = normal(rng);
    Eigen::MatrixXd sigma = a * a.transpose() / d;
    sigma.diagonal().array() += 0.1;
    const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    const Eigen::MatrixXd L = llt.matrixL();
    const Matrix means = g.means * L.transpose();
    PerturbationSpec spec{detail::uniform(rng, 0.0, g.inter_class_distance / 2.0), detail::random_mode(rng)};
    const auto s = sample_id_points(g, spec, 1, rng());
    const Vector x = L * s.points.row(0).transpose();

    Vector chol(C), inv(C);
    const Eigen::MatrixXd sigma_inv = sigma.inverse();
    for (int c = 0; c < C; ++c) {
      const Vector diff = x - means.row(c).transpose();
      chol[c] = L.triangularView<Eigen::Lower>().solve(diff).squaredNorm();
      inv[c] = diff.dot(sigma_inv * diff);
    }
    const double v1 = detail::population_variance(chol);
    const double v2 = detail::population_variance(inv);
    ++rep.draws;
    rep.max_rel_error = std::max(rep.max_rel_error, std::abs(v1 - v2) / std::abs(v2));
  }
  return rep;
}

}  // namespace mahavar::etf
