#include "fixtures.hpp"
#include "oracles.hpp"
#include "tuner_fixture.hpp"

#include <algorithm>
#include <numeric>

using namespace mahavar;

TEST(DefaultGrid, ShapeAndPublishedPrefix) {
  const auto g = default_alpha_grid();
  ASSERT_EQ(g.size(), 26u);
  const std::vector<double> prefix{0,     0.0001, 0.0003, 0.0005, 0.001, 0.002, 0.003, 0.005, 0.007, 0.01,
                                   0.012, 0.015,  0.02,   0.03,   0.05,  0.07,  0.1,   0.15,  0.2};
  EXPECT_TRUE(std::equal(prefix.begin(), prefix.end(), g.begin()));
  EXPECT_TRUE(std::is_sorted(g.begin(), g.end()));
  EXPECT_EQ(g.front(), 0.0);
  EXPECT_EQ(g.back(), 10.0);
}

TEST(TuneAlpha, SinglePointGridEqualsMahalanobisPlusPlus) {
  std::mt19937_64 rng(2);
  const auto b = testing_support::blobs(4, 6, 20, rng);
  const auto s = fit(b, Normalization{});
  const auto id = class_distances(testing_support::blobs(4, 6, 10, rng, "val_id"), s, Metric::mahalanobis);
  const auto ood = class_distances(Matrix(oracle::random_matrix(30, 6, rng, 3.0)), s, Metric::mahalanobis);
  const auto r = tune_alpha(id, ood, {0.0});
  EXPECT_EQ(r.best_value, 0.0);
  EXPECT_EQ(r.best_auroc, auroc(min_distance_score(id).scores, min_distance_score(ood).scores));
}

TEST(TuneAlpha, DesignedFixturePeaksAtDesignedAlpha) {
  const auto f = tuner_fixture::make();
  const auto r = tune_alpha(f.id, f.ood, default_alpha_grid());
  EXPECT_EQ(r.best_value, tuner_fixture::kPeak);
  EXPECT_EQ(r.best_auroc, 1.0);
  const auto peak = static_cast<std::size_t>(std::find(r.grid.begin(), r.grid.end(), r.best_value) - r.grid.begin());
  for (std::size_t i = 0; i < r.grid.size(); ++i)
    if (i != peak) EXPECT_LT(r.auroc_per_candidate[i], 1.0) << "alpha " << r.grid[i];
  for (std::size_t i = 1; i <= peak; ++i) EXPECT_LE(r.auroc_per_candidate[i - 1], r.auroc_per_candidate[i]);
  for (std::size_t i = peak + 1; i < r.grid.size(); ++i) EXPECT_GE(r.auroc_per_candidate[i - 1], r.auroc_per_candidate[i]);
  EXPECT_LT(r.auroc_per_candidate.front(), r.auroc_per_candidate[1]);
  EXPECT_LT(r.auroc_per_candidate.back(), r.best_auroc);
}

TEST(TuneAlpha, CurveMatchesCompositeScores) {
  const auto f = tuner_fixture::make();
  const auto grid = default_alpha_grid();
  const auto r = tune_alpha(f.id, f.ood, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto cfg = ScoreConfig::for_method(Method::mahavar, grid[i]);
    const double a = oracle::auroc(testing_support::to_std(composite_score(f.id, cfg).scores),
                                   testing_support::to_std(composite_score(f.ood, cfg).scores));
    EXPECT_EQ(r.auroc_per_candidate[i], a);
  }
}

TEST(TuneAlpha, GridPermutationPermutesCurve) {
  const auto f = tuner_fixture::make();
  auto grid = default_alpha_grid();
  const auto base = tune_alpha(f.id, f.ood, grid);
  testing_support::for_all(10, 61, [&](std::mt19937_64& rng, int) {
    std::vector<std::size_t> perm(grid.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> g2;
    for (auto p : perm) g2.push_back(grid[p]);
    const auto r = tune_alpha(f.id, f.ood, g2);
    for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_EQ(r.auroc_per_candidate[i], base.auroc_per_candidate[perm[i]]);
    EXPECT_EQ(r.best_value, base.best_value);
  });
}

TEST(TuneAlpha, TiesGoToSmallestAlpha) {
  const auto id = testing_support::distance_rows({{0, 5, 5}, {0, 6, 6}});
  const auto ood = testing_support::distance_rows({{9, 9, 9}});
  const auto r = tune_alpha(id, ood, {2.0, 0.5, 1.0});
  EXPECT_EQ(r.best_auroc, 1.0);
  EXPECT_EQ(r.best_value, 0.5);
}

TEST(TuneAlpha, Errors) {
  const auto f = tuner_fixture::make();
  auto other = f.ood;
  other.statistics_id = "different";
  EXPECT_THROW(tune_alpha(f.id, other, {0.0}), ValidationError);
  EXPECT_THROW(tune_alpha(f.id, f.ood, {}), ValidationError);
  EXPECT_THROW(tune_alpha(f.id, f.ood, {-0.1}), ValidationError);
  other = f.ood;
  other.metric = Metric::l2;
  EXPECT_THROW(tune_alpha(f.id, other, {0.0}), ValidationError);
}

TEST(TuneAlpha, ReportJson) {
  const auto f = tuner_fixture::make();
  const auto j = tune_alpha(f.id, f.ood, {0.0, 0.05}).to_json();
  EXPECT_EQ(j["best_value"], 0.05);
  EXPECT_EQ(j["curve"].size(), 2u);
}

TEST(TuneBetaAndTopK, CurvesMatchCompositeScores) {
  std::mt19937_64 rng(8);
  DistanceMatrix id, ood;
  id.values = oracle::random_matrix(40, 6, rng).cwiseAbs();
  ood.values = oracle::random_matrix(40, 6, rng).cwiseAbs() * 1.3;
  const auto rb = tune_beta(id, ood, 0.1, {-1.0, 0.0, 1.0});
  for (std::size_t i = 0; i < 3; ++i) {
    auto cfg = ScoreConfig::for_method(Method::mahavar_skew, 0.1);
    cfg.beta = rb.grid[i];
    EXPECT_EQ(rb.auroc_per_candidate[i], auroc(composite_score(id, cfg).scores, composite_score(ood, cfg).scores));
  }
  const auto rk = tune_top_k(id, ood, 0.5, {2, 4, 6});
  for (std::size_t i = 0; i < 3; ++i) {
    auto cfg = ScoreConfig::for_method(Method::mahavar, 0.5);
    cfg.top_k = static_cast<int>(rk.grid[i]);
    EXPECT_EQ(rk.auroc_per_candidate[i], auroc(composite_score(id, cfg).scores, composite_score(ood, cfg).scores));
  }
}
