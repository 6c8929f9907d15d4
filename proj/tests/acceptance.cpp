// Acceptance runner: one PASS/FAIL line per primary criterion. Exit status is
// nonzero when any criterion fails.

#include "mahavar/mahavar.hpp"
#include "oracles.hpp"
#include "tuner_fixture.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

using namespace mahavar;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

FeatureBundle gaussian_classes(int C, int d, int n, std::mt19937_64& rng, bool labeled) {
  FeatureBundle b;
  b.name = labeled ? "train" : "test";
  b.num_classes = C;
  b.is_train = labeled;
  b.source_dtype = npy::Dtype::f64;
  const Matrix centers = oracle::random_matrix(C, d, rng, 2.0);
  b.features = oracle::random_matrix(n, d, rng);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    y[static_cast<std::size_t>(i)] = i % C;
    b.features.row(i) += centers.row(i % C);
  }
  if (labeled) b.labels = y;
  return b;
}

Outcome id_variance_bounds() {
  const auto r = etf::run_theorem2_suite(10000, 20260101);
  return {r.passed() && r.draws >= 10000 && r.seconds <= 60.0,
          std::to_string(r.draws) + " draws, violations " + std::to_string(r.violations) + ", exact mismatches " +
              std::to_string(r.exact_mismatches) + ", max exact rel error " + num(r.max_exact_rel_error) + ", " +
              num(r.seconds) + " s"};
}

Outcome projection_identity() {
  const auto r = etf::run_corollary_suite(1000, 20260102);
  return {r.passed() && r.draws >= 1000, std::to_string(r.draws) + " draws, violations " + std::to_string(r.violations) +
                                             ", max rel error " + num(r.max_exact_rel_error)};
}

Outcome variance_separation() {
  const auto r = etf::run_theorem3_suite(1000, 20260103);
  return {r.passed() && r.draws >= 1000 && r.not_applicable == 0,
          std::to_string(r.draws) + " draws, violations " + std::to_string(r.violations) + ", not applicable " +
              std::to_string(r.not_applicable) + ", min normalized gap " + num(r.min_separation_gap)};
}

Outcome metric_oracles() {
  auto rng = make_rng(20260104);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> digit(0, 9);
  double worst = 0.0;
  int instances = 0;
  for (int k = 0; k < 120; ++k) {
    int n_id = std::uniform_int_distribution<int>(1, 1000)(rng);
    int n_ood = std::uniform_int_distribution<int>(1, 1000000 / n_id)(rng);
    if (k == 0) n_id = n_ood = 1000;
    std::vector<double> id(static_cast<std::size_t>(n_id)), ood(static_cast<std::size_t>(n_ood));
    const bool ties = k % 2 == 0;
    for (auto& x : id) x = ties ? digit(rng) : g(rng) + 0.5;
    for (auto& x : ood) x = ties ? digit(rng) : g(rng);
    worst = std::max(worst, std::abs(auroc(id, ood) - oracle::auroc(id, ood)));
    ++instances;
  }
  int fpr_mismatch = 0;
  for (int k = 0; k < 300; ++k) {
    std::vector<double> id(static_cast<std::size_t>(std::uniform_int_distribution<int>(1, 400)(rng)));
    std::vector<double> ood(static_cast<std::size_t>(std::uniform_int_distribution<int>(1, 400)(rng)));
    for (auto& x : id) x = digit(rng);
    for (auto& x : ood) x = digit(rng) - 2;
    const double tpr = k % 2 ? 0.95 : std::uniform_real_distribution<double>(0.01, 1.0)(rng);
    const auto [fpr, t] = oracle::fpr_at_tpr(id, ood, tpr);
    const auto r = fpr_at_tpr(id, ood, tpr);
    if (r.fpr != fpr || r.threshold != t) ++fpr_mismatch;
  }
  return {worst <= 1e-12 && fpr_mismatch == 0, std::to_string(instances) + " AUROC instances, max |diff| " +
                                                   num(worst) + "; 300 FPR@95 fixtures, mismatches " +
                                                   std::to_string(fpr_mismatch)};
}

Outcome degeneration() {
  double worst = 0.0;
  int report_mismatch = 0;
  for (int k = 0; k < 50; ++k) {
    auto rng = make_rng(20260105, static_cast<std::uint64_t>(k));
    const int C = std::uniform_int_distribution<int>(2, 30)(rng);
    const int d = std::uniform_int_distribution<int>(2, 64)(rng);
    const auto stats = fit(gaussian_classes(C, d, 10 * C + d, rng, true), Normalization{NormMode::l2});
    const auto id = gaussian_classes(C, d, 200, rng, false);
    FeatureBundle ood = id;
    ood.features = oracle::random_matrix(150, d, rng, 3.0);
    const auto cv = ScoreConfig::for_method(Method::mahavar, 0.0);
    const auto cp = ScoreConfig::for_method(Method::mahalanobis_pp);
    const auto vi = score(id, &stats, cv), vo = score(ood, &stats, cv);
    const auto pi = score(id, &stats, cp), po = score(ood, &stats, cp);
    worst = std::max({worst, (vi.scores - pi.scores).cwiseAbs().maxCoeff(), (vo.scores - po.scores).cwiseAbs().maxCoeff()});
    const auto a = evaluate(vi, vo), b = evaluate(pi, po);
    if (a.auroc != b.auroc || a.fpr_at_95 != b.fpr_at_95 || a.threshold != b.threshold) ++report_mismatch;
  }
  return {worst <= 1e-12 && report_mismatch == 0,
          "50 draws, max |score diff| " + num(worst) + ", report mismatches " + std::to_string(report_mismatch)};
}

Outcome statistics_oracle() {
  auto rng = make_rng(20260106);
  const int C = 20, d = 64, N = 2000;
  const auto train = gaussian_classes(C, d, N, rng, true);
  const auto s = fit(train, Normalization{NormMode::none});
  const oracle::Mat x = train.features;
  const double e_means = oracle::rel_frobenius(s.means, oracle::class_means(x, *train.labels, C));
  const double e_cov = oracle::rel_frobenius(s.covariance, oracle::tied_covariance(x, *train.labels, C));
  const Matrix test = oracle::random_matrix(200, d, rng, 3.0);
  oracle::Mat a = s.covariance;
  a.diagonal().array() += s.regularizer;
  const auto ref = oracle::quadratic_form_distances(test, s.means, a);
  const auto dm = class_distances(test, s, Metric::mahalanobis);
  const double e_dist = ((dm.values - ref).cwiseAbs().array() / ref.array().abs()).maxCoeff();
  return {e_means <= 1e-10 && e_cov <= 1e-10 && e_dist <= 1e-8,
          "N=2000 C=20 d=64: means " + num(e_means) + ", covariance " + num(e_cov) + ", Mahalanobis " + num(e_dist)};
}

Outcome synthetic() {
  const auto t0 = std::chrono::steady_clock::now();
  double sum_var = 0.0, sum_pp = 0.0;
  int pattern_failures = 0;
  std::ostringstream alphas;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SyntheticSpec spec;
    spec.num_classes = 10;
    spec.dim = 32;
    spec.radius = 1.0;
    spec.within_class_std = 0.1 * spec.radius;
    spec.ood_kind = OodKind::orthogonal;
    spec.seed = seed;
    const auto data = generate(spec);
    const auto stats = fit(data.train, Normalization{NormMode::l2});

    const auto val_id = class_distances(data.val_id, stats, Metric::mahalanobis);
    const auto val_ood = class_distances(data.val_ood, stats, Metric::mahalanobis);
    const double alpha = tune_alpha(val_id, val_ood, default_alpha_grid()).best_value;
    if (seed < 3) alphas << (seed ? "," : "") << alpha;

    const auto cv = ScoreConfig::for_method(Method::mahavar, alpha);
    const auto cp = ScoreConfig::for_method(Method::mahalanobis_pp);
    sum_var += evaluate(score(data.test_id, &stats, cv), score(data.test_ood, &stats, cv)).auroc;
    sum_pp += evaluate(score(data.test_id, &stats, cp), score(data.test_ood, &stats, cp)).auroc;

    const Vector vid = classwise_variance(class_distances(data.test_id, stats, Metric::mahalanobis));
    Vector vood = classwise_variance(class_distances(data.test_ood, stats, Metric::mahalanobis));
    std::sort(vood.data(), vood.data() + vood.size());
    const Eigen::Index n = vood.size();
    const double median = n % 2 ? vood[n / 2] : 0.5 * (vood[n / 2 - 1] + vood[n / 2]);
    if (!(vid.mean() > median)) ++pattern_failures;
  }
  const double secs = seconds_since(t0);
  const double mv = sum_var / 20.0, mp = sum_pp / 20.0;
  return {mv >= mp && pattern_failures == 0 && secs <= 120.0,
          "20 seeds, mean AUROC MahaVar " + num(mv) + " vs Mahalanobis++ " + num(mp) + ", variance pattern failures " +
              std::to_string(pattern_failures) + ", tuned alpha (first seeds) " + alphas.str() + ", " + num(secs) + " s"};
}

Outcome tuner() {
  const auto f = tuner_fixture::make();
  const auto r = tune_alpha(f.id, f.ood, default_alpha_grid());
  const auto peak = static_cast<std::size_t>(std::find(r.grid.begin(), r.grid.end(), tuner_fixture::kPeak) - r.grid.begin());
  bool shape = peak > 0 && peak + 1 < r.grid.size();
  if (shape) {
    shape = r.auroc_per_candidate[0] < r.auroc_per_candidate[peak] && r.auroc_per_candidate.back() < r.best_auroc;
    for (std::size_t i = 1; i <= peak; ++i) shape = shape && r.auroc_per_candidate[i - 1] <= r.auroc_per_candidate[i];
    for (std::size_t i = peak + 1; i < r.grid.size(); ++i)
      shape = shape && r.auroc_per_candidate[i - 1] >= r.auroc_per_candidate[i];
  }
  return {shape && r.best_value == tuner_fixture::kPeak,
          "selected alpha " + num(r.best_value) + " (designed " + num(tuner_fixture::kPeak) + "), AUROC at 0 " +
              num(r.auroc_per_candidate.front()) + ", peak " + num(r.best_auroc) + ", at " + num(r.grid.back()) + " " +
              num(r.auroc_per_candidate.back())};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"etf id variance bounds", id_variance_bounds},
      {"etf projection identity", projection_identity},
      {"etf variance separation", variance_separation},
      {"metric oracles", metric_oracles},
      {"alpha=0 degeneration", degeneration},
      {"statistics oracle", statistics_oracle},
      {"synthetic end-to-end", synthetic},
      {"tuner alpha curve", tuner},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS  " : "FAIL  ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
