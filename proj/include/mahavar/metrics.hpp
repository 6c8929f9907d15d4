#pragma once

#include "json.hpp"
#include "mahavar/error.hpp"
#include "mahavar/scorers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mahavar {

namespace detail {

inline void require_scores(std::span<const double> id, std::span<const double> ood) {
  if (id.empty() || ood.empty()) throw ValidationError("metric inputs must be nonempty");
  for (double v : id)
    if (!std::isfinite(v)) throw ValidationError("non-finite ID score");
  for (double v : ood)
    if (!std::isfinite(v)) throw ValidationError("non-finite OOD score");
}

inline std::span<const double> as_span(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace detail

/// P(id > ood) + 0.5 * P(id == ood) over all ID/OOD pairs. Computed from
/// sorted OOD scores; the pair counts are exact integers (halves for ties),
/// so the result equals brute-force pair counting.
inline double auroc(std::span<const double> id, std::span<const double> ood) {
  detail::require_scores(id, ood);
  std::vector<double> sorted(ood.begin(), ood.end());
  std::sort(sorted.begin(), sorted.end());
  double wins = 0.0;
  for (double s : id) {
    auto lo = std::lower_bound(sorted.begin(), sorted.end(), s);
    auto hi = std::upper_bound(lo, sorted.end(), s);
    wins += static_cast<double>(lo - sorted.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(id.size()) * static_cast<double>(ood.size()));
}

struct FprAtTpr {
  double fpr = 0.0;
  double threshold = 0.0;
};

/// Threshold T is the largest value with at least ceil(tpr * n_id) ID
/// scores >= T (the ceil(tpr * n_id)-th largest ID score); fpr is the
/// fraction of OOD scores >= T.
inline FprAtTpr fpr_at_tpr(std::span<const double> id, std::span<const double> ood, double tpr = 0.95) {
  detail::require_scores(id, ood);
  if (!(tpr > 0.0 && tpr <= 1.0)) throw ValidationError("tpr must lie in (0, 1]");
  const auto n = static_cast<double>(id.size());
  // The small slack keeps e.g. 0.95 * 100 from rounding up to 96.
  auto k = static_cast<std::size_t>(std::ceil(tpr * n - 1e-9));
  k = std::clamp<std::size_t>(k, 1, id.size());
  std::vector<double> sorted(id.begin(), id.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end(), std::greater<>());
  FprAtTpr out;
  out.threshold = sorted[k - 1];
  const auto passed = std::count_if(ood.begin(), ood.end(), [&](double s) { return s >= out.threshold; });
  out.fpr = static_cast<double>(passed) / static_cast<double>(ood.size());
  return out;
}

inline double auroc(const Vector& id, const Vector& ood) { return auroc(detail::as_span(id), detail::as_span(ood)); }

struct DetectionReport {
  double auroc = 0.0;
  double fpr_at_95 = 0.0;
  double threshold = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
  ScoreConfig scorer_config;

  bool operator==(const DetectionReport&) const = default;

  nlohmann::json to_json() const {
    return {{"auroc", auroc},         {"fpr_at_95", fpr_at_95}, {"threshold", threshold},
            {"n_id", n_id},           {"n_ood", n_ood},         {"scorer_config", scorer_config.to_json()}};
  }
};

inline DetectionReport evaluate(const ScoreVector& id, const ScoreVector& ood) {
  if (!(id.config == ood.config)) throw ValidationError("ID and OOD scores were produced with different configs");
  const auto ids = detail::as_span(id.scores);
  const auto oods = detail::as_span(ood.scores);
  DetectionReport r;
  r.auroc = auroc(ids, oods);
  const auto f = fpr_at_tpr(ids, oods, 0.95);
  r.fpr_at_95 = f.fpr;
  r.threshold = f.threshold;
  r.n_id = ids.size();
  r.n_ood = oods.size();
  r.scorer_config = id.config;
  return r;
}

}  // namespace mahavar
