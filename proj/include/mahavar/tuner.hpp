#pragma once
// Validation-AUROC grid search over the MahaVar weight alpha (and, for the
// extended scores, beta and top_k). Class-wise distances are computed once
// by the caller; each candidate only recombines min, variance and skewness.

#include "json.hpp"
#include "mahavar/error.hpp"
#include "mahavar/metrics.hpp"
#include "mahavar/scorers.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace mahavar {

struct TuneResult {
  std::string parameter = "alpha";
  std::vector<double> grid;
  std::vector<double> auroc_per_candidate;
  double best_value = 0.0;
  double best_auroc = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json curve = nlohmann::json::array();
    for (std::size_t i = 0; i < grid.size(); ++i) curve.push_back({{"value", grid[i]}, {"auroc", auroc_per_candidate[i]}});
    return {{"parameter", parameter}, {"grid", grid},           {"auroc_per_candidate", auroc_per_candidate},
            {"curve", curve},         {"best_value", best_value}, {"best_auroc", best_auroc}};
  }
};

/// 26 candidates in [0, 10]: the 19 values of the published sensitivity
/// table followed by 0.3, 0.5, 1, 2, 5, 7, 10.
inline std::vector<double> default_alpha_grid() {
  return {0,    0.0001, 0.0003, 0.0005, 0.001, 0.002, 0.003, 0.005, 0.007, 0.01, 0.012, 0.015, 0.02,
          0.03, 0.05,   0.07,   0.1,    0.15,  0.2,   0.3,   0.5,   1,     2,     5,     7,     10};
}

namespace detail {

inline void require_compatible(const DistanceMatrix& a, const DistanceMatrix& b) {
  if (a.statistics_id != b.statistics_id)
    throw ValidationError("validation distance matrices come from different statistics (" + a.statistics_id +
                          " vs " + b.statistics_id + ")");
  if (a.metric != b.metric) throw ValidationError("validation distance matrices use different metrics");
  if (a.num_classes() != b.num_classes()) throw ValidationError("validation distance matrices disagree on C");
  if (a.size() == 0 || b.size() == 0) throw ValidationError("validation splits must be nonempty");
}

struct ScoreTerms {
  Vector neg_min;
  Vector variance;
  Vector skewness;
};

inline ScoreTerms score_terms(const DistanceMatrix& dm, std::optional<int> top_k, bool with_skew) {
  ScoreTerms t;
  t.neg_min.resize(dm.size());
  for (Eigen::Index i = 0; i < dm.size(); ++i) t.neg_min[i] = -dm.values.row(i).minCoeff();
  t.variance = classwise_variance(dm, top_k);
  if (with_skew) t.skewness = classwise_skewness(dm);
  return t;
}

inline Vector combine(const ScoreTerms& t, double alpha, double beta) {
  Vector s = t.neg_min;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    s[i] += alpha * t.variance[i];
    if (beta != 0.0) s[i] += beta * t.skewness[i];
  }
  return s;
}

// Arg-max with ties going to the candidate that `prefer(a, b)` ranks first.
template <class Prefer>
inline void select_best(TuneResult& r, Prefer prefer) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < r.grid.size(); ++i) {
    const double a = r.auroc_per_candidate[i], b = r.auroc_per_candidate[best];
    if (a > b || (a == b && prefer(r.grid[i], r.grid[best]))) best = i;
  }
  r.best_value = r.grid[best];
  r.best_auroc = r.auroc_per_candidate[best];
}

}  // namespace detail

/// AUROC(ID-val vs OOD-val) of -min + alpha * Var for every alpha in
/// `grid`. Ties on AUROC go to the smallest alpha.
inline TuneResult tune_alpha(const DistanceMatrix& dm_id, const DistanceMatrix& dm_ood, const std::vector<double>& grid,
                             std::optional<int> top_k = std::nullopt) {
  detail::require_compatible(dm_id, dm_ood);
  if (grid.empty()) throw ValidationError("alpha grid must be nonempty");
  for (double a : grid)
    if (!(a >= 0.0) || !std::isfinite(a)) throw ValidationError("alpha grid values must be finite and >= 0");
  const auto id = detail::score_terms(dm_id, top_k, false);
  const auto ood = detail::score_terms(dm_ood, top_k, false);

  TuneResult r;
  r.parameter = "alpha";
  r.grid = grid;
  for (double a : grid) r.auroc_per_candidate.push_back(auroc(detail::combine(id, a, 0.0), detail::combine(ood, a, 0.0)));
  detail::select_best(r, [](double a, double b) { return a < b; });
  return r;
}

/// Beta sweep for mahavar_skew at fixed alpha. Ties go to the smallest |beta|.
inline TuneResult tune_beta(const DistanceMatrix& dm_id, const DistanceMatrix& dm_ood, double alpha,
                            const std::vector<double>& grid) {
  detail::require_compatible(dm_id, dm_ood);
  if (grid.empty()) throw ValidationError("beta grid must be nonempty");
  if (!(alpha >= 0.0)) throw ValidationError("alpha must be >= 0");
  for (double b : grid)
    if (!std::isfinite(b)) throw ValidationError("beta grid values must be finite");
  const auto id = detail::score_terms(dm_id, std::nullopt, true);
  const auto ood = detail::score_terms(dm_ood, std::nullopt, true);

  TuneResult r;
  r.parameter = "beta";
  r.grid = grid;
  for (double b : grid) r.auroc_per_candidate.push_back(auroc(detail::combine(id, alpha, b), detail::combine(ood, alpha, b)));
  detail::select_best(r, [](double a, double b) { return std::abs(a) < std::abs(b); });
  return r;
}

/// top_k sweep at fixed alpha. Ties go to the largest k (closest to using
/// every class).
inline TuneResult tune_top_k(const DistanceMatrix& dm_id, const DistanceMatrix& dm_ood, double alpha,
                             const std::vector<int>& ks) {
  detail::require_compatible(dm_id, dm_ood);
  if (ks.empty()) throw ValidationError("top_k grid must be nonempty");
  TuneResult r;
  r.parameter = "top_k";
  for (int k : ks) {
    const auto id = detail::score_terms(dm_id, k, false);
    const auto ood = detail::score_terms(dm_ood, k, false);
    r.grid.push_back(k);
    r.auroc_per_candidate.push_back(auroc(detail::combine(id, alpha, 0.0), detail::combine(ood, alpha, 0.0)));
  }
  detail::select_best(r, [](double a, double b) { return a > b; });
  return r;
}

}  // namespace mahavar
