#pragma once
// Class-wise distances and the scores built from them. Every score follows
// the higher-is-more-in-distribution convention:
//
//   mahalanobis / mahalanobis_pp   S = -min_c d_c
//   mahavar                        S = -min_c d_c + alpha * Var_c[d_c]
//   mahavar_skew                   S = -min_c d_c + alpha * Var_c[d_c] + beta * Skew_c[d_c]
//   msp / maxlogit / energy        logit-based baselines
//
// Var and Skew are population moments (divisor = number of classes used).

#include "json.hpp"
#include "mahavar/error.hpp"
#include "mahavar/feature_store.hpp"
#include "mahavar/gaussian_stats.hpp"
#include "mahavar/npy.hpp"
#include "mahavar/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mahavar {

enum class Metric { mahalanobis, l2, l1 };

enum class Method { mahalanobis, mahalanobis_pp, mahavar, mahavar_skew, msp, maxlogit, energy };

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::mahalanobis: return "mahalanobis";
    case Metric::l2: return "l2";
    case Metric::l1: return "l1";
  }
  return "";
}

inline Metric parse_metric(std::string_view s) {
  if (s == "mahalanobis") return Metric::mahalanobis;
  if (s == "l2") return Metric::l2;
  if (s == "l1") return Metric::l1;
  throw ValidationError("unknown metric '" + std::string(s) + "' (expected mahalanobis, l2, l1)");
}

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::mahalanobis: return "mahalanobis";
    case Method::mahalanobis_pp: return "mahalanobis_pp";
    case Method::mahavar: return "mahavar";
    case Method::mahavar_skew: return "mahavar_skew";
    case Method::msp: return "msp";
    case Method::maxlogit: return "maxlogit";
    case Method::energy: return "energy";
  }
  return "";
}

inline Method parse_method(std::string_view s) {
  for (Method m : {Method::mahalanobis, Method::mahalanobis_pp, Method::mahavar, Method::mahavar_skew, Method::msp,
                   Method::maxlogit, Method::energy})
    if (s == to_string(m)) return m;
  throw ValidationError("unknown scoring method '" + std::string(s) + "'");
}

inline bool is_logit_method(Method m) { return m == Method::msp || m == Method::maxlogit || m == Method::energy; }

struct ScoreConfig {
  Method method = Method::mahavar;
  double alpha = 0.0;
  double beta = 0.0;
  std::optional<int> top_k;  // nullopt: all classes
  Metric metric = Metric::mahalanobis;
  NormMode normalization = NormMode::l2;
  double temperature = 1.0;

  bool operator==(const ScoreConfig&) const = default;

  bool uses_variance() const { return method == Method::mahavar || method == Method::mahavar_skew; }

  /// Default preprocessing: raw features for plain Mahalanobis, L2 for
  /// everything built on Mahalanobis++.
  static ScoreConfig for_method(Method m, double alpha = 0.0) {
    ScoreConfig c;
    c.method = m;
    c.alpha = alpha;
    c.normalization = m == Method::mahalanobis ? NormMode::none : NormMode::l2;
    return c;
  }

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be finite and >= 0");
    if (!std::isfinite(beta)) throw ValidationError("beta must be finite");
    if (top_k && *top_k < 2) throw ValidationError("top_k must be >= 2 when set");
    if (method == Method::energy && !(temperature > 0.0 && std::isfinite(temperature)))
      throw ValidationError("energy temperature must be positive");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["method"] = std::string(to_string(method));
    j["alpha"] = alpha;
    j["beta"] = beta;
    if (top_k)
      j["top_k"] = *top_k;
    else
      j["top_k"] = "all";
    j["metric"] = std::string(to_string(metric));
    j["normalization"] = std::string(to_string(normalization));
    j["temperature"] = temperature;
    return j;
  }

  static ScoreConfig from_json(const nlohmann::json& j) {
    ScoreConfig c;
    try {
      c.method = parse_method(j.at("method").get<std::string>());
      c.normalization = c.method == Method::mahalanobis ? NormMode::none : NormMode::l2;
      c.alpha = j.value("alpha", 0.0);
      c.beta = j.value("beta", 0.0);
      if (j.contains("top_k") && !(j["top_k"].is_string() && j["top_k"].get<std::string>() == "all"))
        c.top_k = j["top_k"].get<int>();
      if (j.contains("metric")) c.metric = parse_metric(j["metric"].get<std::string>());
      if (j.contains("normalization")) c.normalization = parse_norm_mode(j["normalization"].get<std::string>());
      c.temperature = j.value("temperature", 1.0);
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(std::string("malformed score config: ") + ex.what());
    }
    return c;
  }
};

/// N x C class-wise distances. Mahalanobis and l2 entries are squared
/// distances; l1 entries are plain (unsquared) L1 distances.
struct DistanceMatrix {
  Matrix values;
  Metric metric = Metric::mahalanobis;
  std::string statistics_id;

  Eigen::Index size() const { return values.rows(); }
  Eigen::Index num_classes() const { return values.cols(); }
};

struct ScoreVector {
  Vector scores;
  ScoreConfig config;
};

/// Distances from every row of `features` to every class mean of `stats`.
/// Features are normalized with the statistics' own normalization first.
/// Each row is evaluated independently, so a sample's distances do not
/// depend on which batch it is scored in.
inline DistanceMatrix class_distances(const Matrix& features, const ClassStatistics& stats, Metric metric) {
  if (features.cols() != stats.dim())
    throw ValidationError("feature width " + std::to_string(features.cols()) + " does not match statistics dim " +
                          std::to_string(stats.dim()));
  const Matrix x = normalize(features, stats.normalization);
  const Eigen::Index n = x.rows();
  const Eigen::Index C = stats.num_classes();

  DistanceMatrix dm;
  dm.metric = metric;
  dm.statistics_id = stats.fingerprint;
  dm.values.resize(n, C);

  switch (metric) {
    case Metric::mahalanobis: {
      const auto L = stats.precision_factor.triangularView<Eigen::Lower>();
      Matrix white_means(C, stats.dim());
      for (Eigen::Index c = 0; c < C; ++c) {
        Vector m = stats.means.row(c).transpose();
        L.solveInPlace(m);
        white_means.row(c) = m.transpose();
      }
      Vector w;
      for (Eigen::Index i = 0; i < n; ++i) {
        w = x.row(i).transpose();
        L.solveInPlace(w);
        for (Eigen::Index c = 0; c < C; ++c) dm.values(i, c) = (w.transpose() - white_means.row(c)).squaredNorm();
      }
      break;
    }
    case Metric::l2:
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index c = 0; c < C; ++c) dm.values(i, c) = (x.row(i) - stats.means.row(c)).squaredNorm();
      break;
    case Metric::l1:
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index c = 0; c < C; ++c) dm.values(i, c) = (x.row(i) - stats.means.row(c)).cwiseAbs().sum();
      break;
  }
  return dm;
}

inline DistanceMatrix class_distances(const FeatureBundle& bundle, const ClassStatistics& stats, Metric metric) {
  return class_distances(bundle.features, stats, metric);
}

namespace detail {

inline double population_variance(std::span<const double> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*lo == *hi) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size());
}

inline double population_skewness(std::span<const double> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*lo == *hi) return 0.0;
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (double x : v) {
    double dx = x - mean;
    m2 += dx * dx;
    m3 += dx * dx * dx;
  }
  m2 /= n;
  m3 /= n;
  // Rows that are constant up to rounding.
  const double scale = std::max(std::abs(*lo), std::abs(*hi));
  if (m2 <= std::pow(64.0 * std::numeric_limits<double>::epsilon() * scale, 2)) return 0.0;
  return m3 / std::pow(m2, 1.5);
}

inline std::span<const double> row_span(const Matrix& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace detail

/// S = -min_c d_c per row.
inline ScoreVector min_distance_score(const DistanceMatrix& dm) {
  ScoreVector sv;
  sv.config = ScoreConfig::for_method(Method::mahalanobis_pp);
  sv.config.metric = dm.metric;
  sv.scores.resize(dm.size());
  for (Eigen::Index i = 0; i < dm.size(); ++i) sv.scores[i] = -dm.values.row(i).minCoeff();
  return sv;
}

/// Population variance of the `top_k` smallest entries of each row (all
/// entries when top_k is nullopt or >= C).
inline Vector classwise_variance(const DistanceMatrix& dm, std::optional<int> top_k = std::nullopt) {
  const Eigen::Index C = dm.num_classes();
  if (top_k && (*top_k < 2 || *top_k > C))
    throw ValidationError("top_k=" + std::to_string(*top_k) + " outside [2, " + std::to_string(C) + "]");
  const bool all = !top_k || *top_k == C;
  Vector out(dm.size());
  std::vector<double> buf;
  for (Eigen::Index i = 0; i < dm.size(); ++i) {
    auto row = detail::row_span(dm.values, i);
    if (all) {
      out[i] = detail::population_variance(row);
    } else {
      buf.assign(row.begin(), row.end());
      std::nth_element(buf.begin(), buf.begin() + (*top_k - 1), buf.end());
      std::sort(buf.begin(), buf.begin() + *top_k);
      out[i] = detail::population_variance(std::span<const double>(buf.data(), static_cast<std::size_t>(*top_k)));
    }
  }
  return out;
}

/// Standardized third population moment of each row; 0 for constant rows.
inline Vector classwise_skewness(const DistanceMatrix& dm) {
  Vector out(dm.size());
  for (Eigen::Index i = 0; i < dm.size(); ++i) out[i] = detail::population_skewness(detail::row_span(dm.values, i));
  return out;
}

inline ScoreVector composite_score(const DistanceMatrix& dm, const ScoreConfig& config) {
  config.validate();
  if (is_logit_method(config.method))
    throw ValidationError("method '" + std::string(to_string(config.method)) + "' is not a distance-based score");
  if (config.metric != dm.metric)
    throw ValidationError("score config metric '" + std::string(to_string(config.metric)) +
                          "' does not match distance metric '" + std::string(to_string(dm.metric)) + "'");
  ScoreVector sv;
  sv.config = config;
  sv.scores.resize(dm.size());
  for (Eigen::Index i = 0; i < dm.size(); ++i) sv.scores[i] = -dm.values.row(i).minCoeff();
  if (config.uses_variance()) {
    const Vector var = classwise_variance(dm, config.top_k);
    for (Eigen::Index i = 0; i < dm.size(); ++i) sv.scores[i] += config.alpha * var[i];
  }
  if (config.method == Method::mahavar_skew) {
    const Vector skew = classwise_skewness(dm);
    for (Eigen::Index i = 0; i < dm.size(); ++i) sv.scores[i] += config.beta * skew[i];
  }
  return sv;
}

/// MSP, MaxLogit or Energy from stored logits.
inline ScoreVector logit_score(const FeatureBundle& bundle, const ScoreConfig& config) {
  config.validate();
  if (!is_logit_method(config.method))
    throw ValidationError("method '" + std::string(to_string(config.method)) + "' is not a logit-based score");
  if (!bundle.logits) throw ValidationError("split '" + bundle.name + "' has no logits");
  const Matrix& z = *bundle.logits;
  ScoreVector sv;
  sv.config = config;
  sv.scores.resize(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mx = z.row(i).maxCoeff();
    switch (config.method) {
      case Method::maxlogit: sv.scores[i] = mx; break;
      case Method::msp: sv.scores[i] = 1.0 / (z.row(i).array() - mx).exp().sum(); break;
      case Method::energy: {
        const double t = config.temperature;
        sv.scores[i] = mx + t * std::log(((z.row(i).array() - mx) / t).exp().sum());
        break;
      }
      default: break;
    }
  }
  return sv;
}

/// Scores a bundle end to end: logit methods read logits, distance methods
/// compute class-wise distances against `stats`.
inline ScoreVector score(const FeatureBundle& bundle, const ClassStatistics* stats, const ScoreConfig& config) {
  if (is_logit_method(config.method)) return logit_score(bundle, config);
  if (!stats) throw ValidationError("distance-based scoring requires fitted statistics");
  if (config.normalization != stats->normalization.mode)
    throw ValidationError("score config normalization '" + std::string(to_string(config.normalization)) +
                          "' does not match statistics normalization '" +
                          std::string(to_string(stats->normalization.mode)) + "'");
  return composite_score(class_distances(bundle, *stats, config.metric), config);
}

/// Each row sorted ascending; column 0 is the nearest class.
inline Matrix sorted_distance_profile(const DistanceMatrix& dm) {
  Matrix out = dm.values;
  for (Eigen::Index i = 0; i < out.rows(); ++i) std::sort(out.row(i).data(), out.row(i).data() + out.cols());
  return out;
}

struct RankProfile {
  Vector mean;    // per rank, across samples
  Vector stddev;  // population standard deviation per rank
};

inline RankProfile rank_profile(const Matrix& sorted) {
  RankProfile p;
  p.mean = sorted.colwise().mean().transpose();
  p.stddev.resize(sorted.cols());
  for (Eigen::Index c = 0; c < sorted.cols(); ++c)
    p.stddev[c] = std::sqrt((sorted.col(c).array() - p.mean[c]).square().mean());
  return p;
}

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<long> counts;
};

/// Equal-width histogram over [lo, hi]; out-of-range values land in the
/// nearest end bin so counts always sum to values.size().
inline Histogram histogram(std::span<const double> values, double lo, double hi, int bins) {
  if (bins < 1) throw ValidationError("histogram needs at least one bin");
  if (!(hi > lo)) hi = lo + 1.0;
  Histogram h;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b) h.edges[static_cast<std::size_t>(b)] = lo + (hi - lo) * b / bins;
  for (double v : values) {
    auto b = static_cast<long>(std::floor((v - lo) / (hi - lo) * bins));
    b = std::clamp<long>(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

/// Writes `<stem>.npy` (float64 scores) and `<stem>.json` (config echo).
inline void save_scores(const ScoreVector& sv, const fs::path& stem) {
  const std::size_t shape[] = {static_cast<std::size_t>(sv.scores.size())};
  npy::save(fs::path(stem).concat(".npy"), npy::Dtype::f64, shape,
            std::span<const double>(sv.scores.data(), static_cast<std::size_t>(sv.scores.size())));
  nlohmann::json j;
  j["count"] = sv.scores.size();
  j["convention"] = "higher_is_more_id";
  j["config"] = sv.config.to_json();
  npy::write_file(fs::path(stem).concat(".json"), j.dump(2) + "\n");
}

inline ScoreVector load_scores(const fs::path& stem) {
  const auto arr = npy::load(fs::path(stem).concat(".npy"));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(npy::read_file(fs::path(stem).concat(".json")));
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(stem.string() + ".json: invalid JSON: " + ex.what());
  }
  ScoreVector sv;
  sv.config = ScoreConfig::from_json(j.at("config"));
  sv.scores = Eigen::Map<const Vector>(arr.values.data(), static_cast<Eigen::Index>(arr.values.size()));
  return sv;
}

}  // namespace mahavar
