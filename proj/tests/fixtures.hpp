#pragma once
// Shared test helpers: temp directories, small bundles, and a minimal
// property runner (seeded cases, failing seed reported).

#include "mahavar/mahavar.hpp"

#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace testing_support {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("mahavar_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

/// Runs `body(rng, case_index)` for `cases` seeded cases. On failure the
/// case index is attached so the draw can be replayed.
inline void for_all(int cases, std::uint64_t seed, const std::function<void(std::mt19937_64&, int)>& body) {
  for (int k = 0; k < cases; ++k) {
    SCOPED_TRACE("property case " + std::to_string(k) + " seed " + std::to_string(seed));
    auto rng = mahavar::make_rng(seed, 0xFEED, static_cast<std::uint64_t>(k));
    body(rng, k);
    if (::testing::Test::HasFatalFailure()) return;
  }
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Labeled Gaussian blobs: class c centred at 3 * e_{c mod d}.
inline mahavar::FeatureBundle blobs(int C, int d, int per_class, std::mt19937_64& rng, std::string name = "train") {
  mahavar::FeatureBundle b;
  b.name = std::move(name);
  b.num_classes = C;
  b.is_train = true;
  b.source_dtype = mahavar::npy::Dtype::f64;
  b.features.resize(static_cast<Eigen::Index>(C) * per_class, d);
  std::normal_distribution<double> n;
  std::vector<int> y;
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < per_class; ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(c) * per_class + i;
      for (int j = 0; j < d; ++j) b.features(r, j) = n(rng) + (j == c % d ? 3.0 : 0.0) + 0.5;
      y.push_back(c);
    }
  b.labels = y;
  return b;
}

/// Statistics with prescribed means and covariance + regularizer = `a`.
inline mahavar::ClassStatistics stats_with(const mahavar::Matrix& means, const Eigen::MatrixXd& a,
                                           mahavar::NormMode mode = mahavar::NormMode::none, double reg = 1e-3) {
  mahavar::ClassStatistics s;
  s.means = means;
  s.regularizer = reg;
  s.covariance = a;
  s.covariance.diagonal().array() -= reg;
  s.normalization.mode = mode;
  s.class_counts.assign(static_cast<std::size_t>(means.rows()), 2);
  s.total_count = 2 * means.rows();
  mahavar::detail::factorize(s);
  return s;
}

inline mahavar::DistanceMatrix distance_rows(std::initializer_list<std::vector<double>> rows,
                                             mahavar::Metric metric = mahavar::Metric::mahalanobis) {
  mahavar::DistanceMatrix dm;
  dm.metric = metric;
  dm.statistics_id = "fixture";
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto C = static_cast<Eigen::Index>(rows.begin()->size());
  dm.values.resize(n, C);
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    for (Eigen::Index c = 0; c < C; ++c) dm.values(i, c) = r[static_cast<std::size_t>(c)];
    ++i;
  }
  return dm;
}

inline std::vector<double> to_std(const mahavar::Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace testing_support
