#pragma once
// Class-conditional Gaussian statistics with a tied covariance:
//
//   mu_c  = (1/N_c) sum_{i: y_i = c} x_i
//   Sigma = (1/N)   sum_c sum_{i: y_i = c} (x_i - mu_c)(x_i - mu_c)^T
//
// computed on (optionally) L2-normalized features, plus the Cholesky factor
// L of Sigma + lambda*I used by every distance evaluation.

#include "json.hpp"
#include "mahavar/error.hpp"
#include "mahavar/feature_store.hpp"
#include "mahavar/npy.hpp"
#include "mahavar/types.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mahavar {

enum class NormMode { none, l2, centered_l2 };

inline std::string_view to_string(NormMode m) {
  switch (m) {
    case NormMode::none: return "none";
    case NormMode::l2: return "l2";
    case NormMode::centered_l2: return "centered_l2";
  }
  return "";
}

inline NormMode parse_norm_mode(std::string_view s) {
  if (s == "none") return NormMode::none;
  if (s == "l2") return NormMode::l2;
  if (s == "centered_l2") return NormMode::centered_l2;
  throw ValidationError("unknown normalization mode '" + std::string(s) + "' (expected none, l2, centered_l2)");
}

struct Normalization {
  NormMode mode = NormMode::l2;
  /// Global training mean, subtracted before normalizing in centered_l2 mode.
  std::optional<Vector> global_mean;

  bool operator==(const Normalization& o) const {
    if (mode != o.mode || global_mean.has_value() != o.global_mean.has_value()) return false;
    return !global_mean || (global_mean->size() == o.global_mean->size() && *global_mean == *o.global_mean);
  }
};

/// Applies `norm` row-wise. Throws ValidationError on a zero-norm row under
/// the l2 modes.
inline Matrix normalize(const Matrix& features, const Normalization& norm) {
  if (norm.mode == NormMode::none) return features;
  Matrix out = features;
  if (norm.mode == NormMode::centered_l2) {
    if (!norm.global_mean) throw ValidationError("centered_l2 normalization requires a global mean");
    if (norm.global_mean->size() != features.cols())
      throw ValidationError("global mean has length " + std::to_string(norm.global_mean->size()) +
                            ", features have width " + std::to_string(features.cols()));
    if (!norm.global_mean->allFinite()) throw ValidationError("global mean has non-finite entries");
    out.rowwise() -= norm.global_mean->transpose();
  }
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    double n = out.row(r).norm();
    if (!(n > 0.0)) throw ValidationError("zero-norm feature row " + std::to_string(r) + " cannot be L2-normalized");
    out.row(r) /= n;
  }
  return out;
}

/// Fitted model. Immutable after construction.
struct ClassStatistics {
  Matrix means;                     // C x d
  Eigen::MatrixXd covariance;       // d x d, exactly symmetric
  Eigen::MatrixXd precision_factor; // lower-triangular L, L L^T = covariance + regularizer * I
  double regularizer = 1e-3;
  Normalization normalization;
  std::vector<long> class_counts;
  long total_count = 0;
  std::string fingerprint;

  int num_classes() const { return static_cast<int>(means.rows()); }
  int dim() const { return static_cast<int>(means.cols()); }

  /// Ratio of extreme eigenvalues of covariance + regularizer * I.
  double condition_estimate() const {
    Eigen::MatrixXd a = covariance;
    a.diagonal().array() += regularizer;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
  }
};

namespace detail {

inline std::string fingerprint_of(const ClassStatistics& s) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  mix(s.means.data(), sizeof(double) * static_cast<std::size_t>(s.means.size()));
  mix(s.covariance.data(), sizeof(double) * static_cast<std::size_t>(s.covariance.size()));
  mix(&s.regularizer, sizeof(double));
  int mode = static_cast<int>(s.normalization.mode);
  mix(&mode, sizeof(int));
  if (s.normalization.global_mean)
    mix(s.normalization.global_mean->data(), sizeof(double) * static_cast<std::size_t>(s.normalization.global_mean->size()));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Factorizes covariance + regularizer * I into stats.precision_factor.
inline void factorize(ClassStatistics& s) {
  Eigen::MatrixXd a = s.covariance;
  a.diagonal().array() += s.regularizer;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
    throw ValidationError("Cholesky factorization of covariance + " + std::to_string(s.regularizer) +
                          "*I failed; smallest eigenvalue estimate " + std::to_string(es.eigenvalues().minCoeff()));
  }
  s.precision_factor = llt.matrixL();
  s.fingerprint = fingerprint_of(s);
}

}  // namespace detail

/// Fits class means and the tied covariance on labeled training features.
inline ClassStatistics fit(const FeatureBundle& train, Normalization normalization, double regularizer = 1e-3) {
  if (!train.labels) throw ValidationError("split '" + train.name + "' has no labels; cannot fit class statistics");
  if (!(regularizer > 0.0) || !std::isfinite(regularizer))
    throw ValidationError("regularizer must be a positive finite number");
  const int C = train.num_classes;
  const Eigen::Index d = train.dim();
  if (C < 1) throw ValidationError("split '" + train.name + "': num_classes must be positive");
  const auto& y = *train.labels;

  ClassStatistics s;
  s.regularizer = regularizer;
  s.class_counts.assign(static_cast<std::size_t>(C), 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= C)
      throw ValidationError("split '" + train.name + "': label " + std::to_string(y[i]) + " at row " +
                            std::to_string(i) + " out of range");
    ++s.class_counts[static_cast<std::size_t>(y[i])];
  }
  for (int c = 0; c < C; ++c) {
    if (s.class_counts[static_cast<std::size_t>(c)] == 0)
      throw ValidationError("split '" + train.name + "': class " + std::to_string(c) + " is missing");
    if (s.class_counts[static_cast<std::size_t>(c)] < 2)
      throw ValidationError("split '" + train.name + "': class " + std::to_string(c) + " has fewer than 2 samples");
  }
  s.total_count = static_cast<long>(y.size());

  if (normalization.mode == NormMode::centered_l2 && !normalization.global_mean)
    normalization.global_mean = train.features.colwise().mean().transpose();
  if (normalization.mode != NormMode::centered_l2) normalization.global_mean.reset();
  s.normalization = normalization;
  const Matrix x = normalize(train.features, s.normalization);

  s.means = Matrix::Zero(C, d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) s.means.row(y[static_cast<std::size_t>(i)]) += x.row(i);
  for (int c = 0; c < C; ++c) s.means.row(c) /= static_cast<double>(s.class_counts[static_cast<std::size_t>(c)]);

  Eigen::MatrixXd centered(x.rows(), d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) centered.row(i) = x.row(i) - s.means.row(y[static_cast<std::size_t>(i)]);
  s.covariance = Eigen::MatrixXd::Zero(d, d);
  s.covariance.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(), 1.0 / static_cast<double>(s.total_count));
  s.covariance.triangularView<Eigen::StrictlyUpper>() = s.covariance.transpose();

  detail::factorize(s);
  return s;
}

// Persistence: dir/stats.json plus means.npy, covariance.npy, class_counts.npy
// and (centered_l2 only) global_mean.npy, all float64 / int32.

inline void save_statistics(const ClassStatistics& s, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError(dir.string() + ": cannot create statistics directory");
  detail::save_matrix(dir / "means.npy", s.means, npy::Dtype::f64);
  Matrix cov = s.covariance;
  detail::save_matrix(dir / "covariance.npy", cov, npy::Dtype::f64);
  std::vector<double> counts(s.class_counts.begin(), s.class_counts.end());
  const std::size_t cshape[] = {counts.size()};
  npy::save(dir / "class_counts.npy", npy::Dtype::i32, cshape, counts);

  nlohmann::json j;
  j["schema_version"] = 1;
  j["num_classes"] = s.num_classes();
  j["feature_dim"] = s.dim();
  j["regularizer"] = s.regularizer;
  j["normalization"] = std::string(to_string(s.normalization.mode));
  j["total_count"] = s.total_count;
  j["fingerprint"] = s.fingerprint;
  j["means_path"] = "means.npy";
  j["covariance_path"] = "covariance.npy";
  j["class_counts_path"] = "class_counts.npy";
  if (s.normalization.global_mean) {
    const auto& g = *s.normalization.global_mean;
    const std::size_t gshape[] = {static_cast<std::size_t>(g.size())};
    npy::save(dir / "global_mean.npy", npy::Dtype::f64, gshape, std::span<const double>(g.data(), static_cast<std::size_t>(g.size())));
    j["global_mean_path"] = "global_mean.npy";
  }
  npy::write_file(dir / "stats.json", j.dump(2) + "\n");
}

inline ClassStatistics load_statistics(const fs::path& dir) {
  const fs::path meta = dir / "stats.json";
  if (!fs::exists(meta)) throw IoError(meta.string() + ": statistics artifact not found (run fit first)");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(npy::read_file(meta));
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(meta.string() + ": invalid JSON: " + ex.what());
  }
  ClassStatistics s;
  int C = 0, d = 0;
  try {
    C = j.at("num_classes").get<int>();
    d = j.at("feature_dim").get<int>();
    s.regularizer = j.at("regularizer").get<double>();
    s.normalization.mode = parse_norm_mode(j.at("normalization").get<std::string>());
    s.total_count = j.at("total_count").get<long>();
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(meta.string() + ": malformed statistics metadata: " + ex.what());
  }
  const fs::path mpath = dir / "means.npy";
  s.means = detail::to_matrix(npy::load(mpath), mpath.string());
  const fs::path cpath = dir / "covariance.npy";
  s.covariance = detail::to_matrix(npy::load(cpath), cpath.string());
  if (s.means.rows() != C || s.means.cols() != d || s.covariance.rows() != d || s.covariance.cols() != d)
    throw ValidationError(dir.string() + ": statistics tensors disagree with stats.json shapes");
  auto counts = npy::load(dir / "class_counts.npy");
  if (counts.values.size() != static_cast<std::size_t>(C))
    throw ValidationError(dir.string() + ": class_counts length disagrees with num_classes");
  s.class_counts.assign(counts.values.begin(), counts.values.end());
  if (s.normalization.mode == NormMode::centered_l2) {
    auto g = npy::load(dir / "global_mean.npy");
    if (g.values.size() != static_cast<std::size_t>(d))
      throw ValidationError(dir.string() + ": global_mean length disagrees with feature_dim");
    s.normalization.global_mean = Eigen::Map<const Vector>(g.values.data(), d);
  }
  detail::factorize(s);
  return s;
}

}  // namespace mahavar
