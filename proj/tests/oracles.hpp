#pragma once
// Reference implementations used as test oracles. They share no code with
// the library: plain loops, explicit inverses, O(n^2) pair counts.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline Mat class_means(const Mat& x, const std::vector<int>& y, int C) {
  Mat mu = Mat::Zero(C, x.cols());
  std::vector<double> n(static_cast<std::size_t>(C), 0.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) mu(y[static_cast<std::size_t>(i)], j) += x(i, j);
    n[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])] += 1.0;
  }
  for (int c = 0; c < C; ++c)
    for (Eigen::Index j = 0; j < x.cols(); ++j) mu(c, j) /= n[static_cast<std::size_t>(c)];
  return mu;
}

/// Two-pass tied covariance, divisor N, triple loop over samples and entries.
inline Mat tied_covariance(const Mat& x, const std::vector<int>& y, int C) {
  const Mat mu = class_means(x, y, C);
  const Eigen::Index d = x.cols();
  Mat s = Mat::Zero(d, d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int c = y[static_cast<std::size_t>(i)];
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b) s(a, b) += (x(i, a) - mu(c, a)) * (x(i, b) - mu(c, b));
  }
  return s / static_cast<double>(x.rows());
}

/// (x - mu_c)^T A^{-1} (x - mu_c) with A inverted explicitly.
inline Mat quadratic_form_distances(const Mat& x, const Mat& means, const Mat& a) {
  const Mat inv = a.inverse();
  Mat out(x.rows(), means.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index c = 0; c < means.rows(); ++c) {
      double q = 0.0;
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index k = 0; k < x.cols(); ++k)
          q += (x(i, j) - means(c, j)) * inv(j, k) * (x(i, k) - means(c, k));
      out(i, c) = q;
    }
  return out;
}

inline double variance(const std::vector<double>& v) {
  double m = 0.0;
  for (double a : v) m += a;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double a : v) s += (a - m) * (a - m);
  return s / static_cast<double>(v.size());
}

/// Brute-force pair count with ties weighted 1/2.
inline double auroc(const std::vector<double>& id, const std::vector<double>& ood) {
  double wins = 0.0;
  for (double a : id)
    for (double b : ood) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  return wins / (static_cast<double>(id.size()) * static_cast<double>(ood.size()));
}

/// Scans candidate thresholds from high to low and keeps the largest one
/// that at least ceil(tpr * n_id) ID scores clear.
inline std::pair<double, double> fpr_at_tpr(const std::vector<double>& id, const std::vector<double>& ood, double tpr) {
  std::vector<double> cand(id);
  std::sort(cand.begin(), cand.end(), [](double a, double b) { return a > b; });
  const auto need = static_cast<long>(std::ceil(tpr * static_cast<double>(id.size()) - 1e-9));
  for (double t : cand) {
    long pass = 0;
    for (double a : id) pass += a >= t;
    if (pass >= need) {
      long fp = 0;
      for (double b : ood) fp += b >= t;
      return {static_cast<double>(fp) / static_cast<double>(ood.size()), t};
    }
  }
  return {1.0, cand.back()};
}

inline Mat random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

inline double rel_frobenius(const Mat& a, const Mat& b) {
  const double denom = std::max(b.norm(), 1e-300);
  return (a - b).norm() / denom;
}

}  // namespace oracle
