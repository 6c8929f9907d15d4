#pragma once
// Command-line driver. Every flag can also come from a JSON config file
// (--config); flags given on the command line win. Keys use the flag's
// long name with '-' or '_', either flat or nested under a subcommand:
//
//   {"manifest": "data/manifest.json", "alpha": 0.05,
//    "eval": {"test-ood": ["far", "near"]}}
//
// Exit codes: 0 success, 1 validation error, 2 I/O error.

#include "CLI11.hpp"
#include "json.hpp"
#include "mahavar/mahavar.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mahavar::cli {

struct RunConfig {
  std::string manifest;
  std::optional<std::string> normalization;  // default: l2 for fit, the statistics' mode otherwise
  double regularizer = 1e-3;
  std::string method = "mahavar";
  double alpha = 0.0;
  double beta = 0.0;
  std::optional<int> top_k;
  std::string metric = "mahalanobis";
  double temperature = 1.0;
  std::string train_split = "train";
  std::string val_id_split = "val_id";
  std::string val_ood_split = "val_ood";
  std::string test_id_split = "test_id";
  std::vector<std::string> test_ood_splits{"test_ood"};
  std::vector<std::string> score_splits;
  std::string out = "mahavar_out";
  std::string stats;  // default: <out>/stats
  std::uint64_t seed = 0;
  std::vector<double> grid;
  int bins = 50;

  long bound_draws = 10000;
  long identity_draws = 1000;
  long separation_draws = 1000;
  long analogue_draws = 200;

  SyntheticSpec synthetic;
  std::string ood_kind = "orthogonal";

  fs::path out_dir() const { return fs::path(out); }
  fs::path stats_dir() const { return stats.empty() ? out_dir() / "stats" : fs::path(stats); }

  ScoreConfig score_config(NormMode stats_mode) const {
    ScoreConfig c;
    c.method = parse_method(method);
    c.alpha = alpha;
    c.beta = beta;
    c.top_k = top_k;
    c.metric = parse_metric(metric);
    c.normalization = normalization ? parse_norm_mode(*normalization) : stats_mode;
    c.temperature = temperature;
    c.validate();
    return c;
  }
};

namespace detail {

/// Reads JSON config files for CLI11. Nested objects named after a
/// subcommand address that subcommand; flat keys go to whichever
/// subcommand was invoked.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(input);
    } catch (const nlohmann::json::exception& ex) {
      throw CLI::ConfigError(std::string("config file is not valid JSON: ") + ex.what());
    }
    if (!j.is_object()) throw CLI::ConfigError("config file must hold a JSON object");
    std::vector<std::string> active;
    for (const auto* sub : root_->get_subcommands()) active.push_back(sub->get_name());

    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        for (const auto& [k2, v2] : value.items()) items.push_back(item({key}, k2, v2));
      } else {
        for (const auto& sub : active) items.push_back(item({sub}, key, value));
      }
    }
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static CLI::ConfigItem item(std::vector<std::string> parents, std::string name, const nlohmann::json& v) {
    CLI::ConfigItem it;
    it.parents = std::move(parents);
    std::replace(name.begin(), name.end(), '_', '-');
    it.name = std::move(name);
    if (v.is_array())
      for (const auto& e : v) it.inputs.push_back(scalar(e));
    else
      it.inputs.push_back(scalar(v));
    return it;
  }

  const CLI::App* root_;
};

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Wraps a report so the timestamp is the only run-dependent key.
inline nlohmann::json with_metadata(nlohmann::json body, const std::string& command) {
  body["metadata"] = {{"generated_at", utc_timestamp()}};
  body["command"] = command;
  return body;
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  npy::write_file(path, j.dump(2) + "\n");
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError(dir.string() + ": cannot create output directory");
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

inline void require_manifest(const RunConfig& cfg) {
  if (cfg.manifest.empty()) throw ValidationError("--manifest is required");
}

inline FeatureBundle load_split(const RunConfig& cfg, const std::string& split) {
  require_manifest(cfg);
  return load_bundle(cfg.manifest, split);
}

struct Scored {
  std::optional<ClassStatistics> stats;
  ScoreConfig config;
};

inline Scored prepare_scoring(const RunConfig& cfg) {
  Scored s;
  const Method m = parse_method(cfg.method);
  if (is_logit_method(m)) {
    s.config = cfg.score_config(NormMode::l2);
    return s;
  }
  s.stats = load_statistics(cfg.stats_dir());
  s.config = cfg.score_config(s.stats->normalization.mode);
  return s;
}

inline ScoreVector score_split(const RunConfig& cfg, const Scored& s, const std::string& split) {
  return score(load_split(cfg, split), s.stats ? &*s.stats : nullptr, s.config);
}

}  // namespace detail

// Subcommands

inline int cmd_fit(const RunConfig& cfg, std::ostream& out) {
  const FeatureBundle train = detail::load_split(cfg, cfg.train_split);
  Normalization norm;
  norm.mode = parse_norm_mode(cfg.normalization.value_or("l2"));
  const ClassStatistics stats = fit(train, norm, cfg.regularizer);
  save_statistics(stats, cfg.stats_dir());

  out << "fitted " << stats.num_classes() << " classes, d=" << stats.dim() << ", N=" << stats.total_count
      << ", normalization=" << to_string(stats.normalization.mode) << ", regularizer=" << stats.regularizer << "\n";
  out << "class counts:";
  for (long n : stats.class_counts) out << ' ' << n;
  out << "\ncondition estimate: " << std::setprecision(6) << stats.condition_estimate() << "\n";
  out << "statistics written to " << cfg.stats_dir().string() << "\n";
  return 0;
}

inline int cmd_score(const RunConfig& cfg, std::ostream& out) {
  const auto s = detail::prepare_scoring(cfg);
  std::vector<std::string> splits = cfg.score_splits;
  if (splits.empty()) {
    splits.push_back(cfg.test_id_split);
    splits.insert(splits.end(), cfg.test_ood_splits.begin(), cfg.test_ood_splits.end());
  }
  const fs::path dir = cfg.out_dir() / "scores";
  detail::ensure_dir(dir);
  for (const auto& split : splits) {
    const ScoreVector sv = detail::score_split(cfg, s, split);
    save_scores(sv, dir / split);
    out << split << ": " << sv.scores.size() << " scores -> " << (dir / split).string() << ".npy\n";
  }
  return 0;
}

struct EvalRow {
  std::string split;
  DetectionReport report;
};

/// Per-OOD-split reports plus their arithmetic mean.
inline std::vector<EvalRow> evaluate_splits(const RunConfig& cfg) {
  if (cfg.test_ood_splits.empty()) throw ValidationError("at least one OOD split is required");
  const auto s = detail::prepare_scoring(cfg);
  const ScoreVector id = detail::score_split(cfg, s, cfg.test_id_split);
  std::vector<EvalRow> rows;
  for (const auto& split : cfg.test_ood_splits) rows.push_back({split, evaluate(id, detail::score_split(cfg, s, split))});
  return rows;
}

inline int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const auto rows = evaluate_splits(cfg);
  double auroc_sum = 0.0, fpr_sum = 0.0;
  for (const auto& r : rows) {
    auroc_sum += r.report.auroc;
    fpr_sum += r.report.fpr_at_95;
  }
  const double n = static_cast<double>(rows.size());
  const double avg_auroc = auroc_sum / n, avg_fpr = fpr_sum / n;

  std::size_t w = 8;
  for (const auto& r : rows) w = std::max(w, r.split.size() + 2);
  out << std::left << std::setw(static_cast<int>(w)) << "OOD" << std::right << std::setw(9) << "AUROC" << std::setw(9)
      << "FPR@95" << "\n";
  for (const auto& r : rows)
    out << std::left << std::setw(static_cast<int>(w)) << r.split << std::right << std::setw(9)
        << detail::pct(r.report.auroc) << std::setw(9) << detail::pct(r.report.fpr_at_95) << "\n";
  out << std::left << std::setw(static_cast<int>(w)) << "Avg" << std::right << std::setw(9) << detail::pct(avg_auroc)
      << std::setw(9) << detail::pct(avg_fpr) << "\n";

  nlohmann::json j;
  j["id_split"] = cfg.test_id_split;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    auto rj = r.report.to_json();
    rj["ood_split"] = r.split;
    j["rows"].push_back(rj);
  }
  j["average"] = {{"auroc", avg_auroc}, {"fpr_at_95", avg_fpr}};
  detail::write_json(cfg.out_dir() / "eval.json", detail::with_metadata(j, "eval"));
  return 0;
}

inline int cmd_tune_alpha(const RunConfig& cfg, std::ostream& out) {
  const ClassStatistics stats = load_statistics(cfg.stats_dir());
  const Metric metric = parse_metric(cfg.metric);
  const auto dm_id = class_distances(detail::load_split(cfg, cfg.val_id_split), stats, metric);
  const auto dm_ood = class_distances(detail::load_split(cfg, cfg.val_ood_split), stats, metric);
  const auto grid = cfg.grid.empty() ? default_alpha_grid() : cfg.grid;
  const TuneResult r = tune_alpha(dm_id, dm_ood, grid, cfg.top_k);

  out << std::left << std::setw(12) << "alpha" << std::right << std::setw(9) << "AUROC" << "\n";
  for (std::size_t i = 0; i < r.grid.size(); ++i)
    out << std::left << std::setw(12) << r.grid[i] << std::right << std::setw(9) << detail::pct(r.auroc_per_candidate[i])
        << (r.grid[i] == r.best_value ? "  *" : "") << "\n";
  out << "best alpha " << r.best_value << " (AUROC " << detail::pct(r.best_auroc) << ")\n";

  nlohmann::json j = r.to_json();
  j["val_id_split"] = cfg.val_id_split;
  j["val_ood_split"] = cfg.val_ood_split;
  j["metric"] = std::string(to_string(metric));
  j["statistics"] = stats.fingerprint;
  detail::write_json(cfg.out_dir() / "tune_alpha.json", detail::with_metadata(j, "tune-alpha"));
  return 0;
}

inline int cmd_etf_verify(const RunConfig& cfg, std::ostream& out) {
  const auto bounds = etf::run_theorem2_suite(cfg.bound_draws, cfg.seed);
  const auto identity = etf::run_corollary_suite(cfg.identity_draws, cfg.seed);
  const auto separation = etf::run_theorem3_suite(cfg.separation_draws, cfg.seed);
  const auto analogue = etf::run_mahalanobis_analogue(cfg.analogue_draws, cfg.seed);

  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["suites"] = nlohmann::json::array({bounds.to_json(), identity.to_json(), separation.to_json()});
  j["mahalanobis_analogue"] = {
      {"draws", analogue.draws}, {"max_rel_error", analogue.max_rel_error}, {"passed", analogue.passed()}};
  const bool ok = bounds.passed() && identity.passed() && separation.passed() && analogue.passed();
  j["passed"] = ok;
  detail::write_json(cfg.out_dir() / "etf_verify.json", detail::with_metadata(j, "etf-verify"));

  for (const auto* s : {&bounds, &identity, &separation})
    out << std::left << std::setw(22) << s->name << " draws=" << s->draws << " violations=" << s->violations
        << " mismatches=" << s->exact_mismatches << (s->passed() ? "  ok" : "  FAILED") << "\n";
  out << std::left << std::setw(22) << "mahalanobis_analogue" << " draws=" << analogue.draws
      << " max_rel_error=" << analogue.max_rel_error << (analogue.passed() ? "  ok" : "  FAILED") << "\n";
  if (!ok) throw ValidationError("ETF verification found violations; see " + (cfg.out_dir() / "etf_verify.json").string());
  return 0;
}

inline int cmd_diagnostics(const RunConfig& cfg, std::ostream& out) {
  const ClassStatistics stats = load_statistics(cfg.stats_dir());
  const Metric metric = parse_metric(cfg.metric);
  std::vector<std::string> splits = cfg.score_splits;
  if (splits.empty()) {
    splits.push_back(cfg.test_id_split);
    splits.insert(splits.end(), cfg.test_ood_splits.begin(), cfg.test_ood_splits.end());
  }
  const fs::path dir = cfg.out_dir() / "diagnostics";
  detail::ensure_dir(dir);

  std::vector<Vector> variances;
  std::ostringstream ranks;
  ranks << "split,rank,mean,std\n";
  for (const auto& split : splits) {
    const auto dm = class_distances(detail::load_split(cfg, split), stats, metric);
    const auto prof = rank_profile(sorted_distance_profile(dm));
    for (Eigen::Index r = 0; r < prof.mean.size(); ++r)
      ranks << split << ',' << r << ',' << detail::fmt(prof.mean[r]) << ',' << detail::fmt(prof.stddev[r]) << '\n';
    variances.push_back(classwise_variance(dm));
  }

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& v : variances) {
    lo = std::min(lo, v.minCoeff());
    hi = std::max(hi, v.maxCoeff());
  }
  std::ostringstream hist, summary;
  hist << "split,bin,lower,upper,count\n";
  summary << "split,n,mean_variance,median_variance,id_mean_variance\n";
  const double id_mean = variances.front().mean();
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const Vector& v = variances[s];
    const auto h = histogram(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())), lo, hi, cfg.bins);
    for (std::size_t b = 0; b < h.counts.size(); ++b)
      hist << splits[s] << ',' << b << ',' << detail::fmt(h.edges[b]) << ',' << detail::fmt(h.edges[b + 1]) << ','
           << h.counts[b] << '\n';
    std::vector<double> sorted(v.data(), v.data() + v.size());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    summary << splits[s] << ',' << n << ',' << detail::fmt(v.mean()) << ',' << detail::fmt(median) << ','
            << detail::fmt(id_mean) << '\n';
  }
  npy::write_file(dir / "rank_profile.csv", ranks.str());
  npy::write_file(dir / "variance_histogram.csv", hist.str());
  npy::write_file(dir / "variance_summary.csv", summary.str());
  out << "diagnostics for " << splits.size() << " splits written to " << dir.string() << "\n";
  return 0;
}

inline int cmd_gen_synthetic(const RunConfig& cfg, std::ostream& out) {
  SyntheticSpec spec = cfg.synthetic;
  spec.ood_kind = parse_ood_kind(cfg.ood_kind);
  spec.seed = cfg.seed;
  const auto data = generate(spec);
  const Manifest m = save_synthetic(data, cfg.out_dir());
  out << "wrote " << m.splits.size() << " splits (C=" << m.num_classes << ", d=" << m.feature_dim << ") to "
      << (cfg.out_dir() / "manifest.json").string() << "\n";
  return 0;
}

// Argument parsing

namespace detail {

inline void add_data_options(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--manifest", cfg.manifest, "Dataset manifest.json");
  sub->add_option("--out", cfg.out, "Output directory");
  sub->add_option("--stats", cfg.stats, "Statistics directory (default <out>/stats)");
  sub->add_option("--normalization", cfg.normalization, "none | l2 | centered_l2");
}

inline void add_score_options(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--method", cfg.method,
                  "mahalanobis | mahalanobis_pp | mahavar | mahavar_skew | msp | maxlogit | energy");
  sub->add_option("--alpha", cfg.alpha, "Variance weight");
  sub->add_option("--beta", cfg.beta, "Skewness weight (mahavar_skew)");
  sub->add_option("--top-k", cfg.top_k, "Variance over the k nearest classes only");
  sub->add_option("--metric", cfg.metric, "mahalanobis | l2 | l1");
  sub->add_option("--temperature", cfg.temperature, "Energy temperature");
}

inline void add_split_options(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--test-id", cfg.test_id_split, "ID test split");
  sub->add_option("--test-ood", cfg.test_ood_splits, "OOD test splits")->delimiter(',');
}

}  // namespace detail

/// Parses argv and runs one subcommand. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RunConfig cfg;
  CLI::App app{"Class-wise distance variance OOD detection"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<detail::JsonConfig>(&app));
  app.set_config("--config", "", "JSON config file; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::ignore);

  auto* fit_cmd = app.add_subcommand("fit", "Fit class means and tied covariance on the training split");
  detail::add_data_options(fit_cmd, cfg);
  fit_cmd->add_option("--train", cfg.train_split, "Training split");
  fit_cmd->add_option("--regularizer", cfg.regularizer, "Ridge added to the covariance")
      ->check(CLI::PositiveNumber);

  auto* score_cmd = app.add_subcommand("score", "Score splits and write <out>/scores/<split>.npy");
  detail::add_data_options(score_cmd, cfg);
  detail::add_score_options(score_cmd, cfg);
  detail::add_split_options(score_cmd, cfg);
  score_cmd->add_option("--splits", cfg.score_splits, "Splits to score (default: test splits)")->delimiter(',');

  auto* eval_cmd = app.add_subcommand("eval", "AUROC / FPR@95 per OOD split plus average");
  detail::add_data_options(eval_cmd, cfg);
  detail::add_score_options(eval_cmd, cfg);
  detail::add_split_options(eval_cmd, cfg);

  auto* tune_cmd = app.add_subcommand("tune-alpha", "Grid-search alpha on validation AUROC");
  detail::add_data_options(tune_cmd, cfg);
  tune_cmd->add_option("--metric", cfg.metric, "mahalanobis | l2 | l1");
  tune_cmd->add_option("--top-k", cfg.top_k, "Variance over the k nearest classes only");
  tune_cmd->add_option("--val-id", cfg.val_id_split, "ID validation split");
  tune_cmd->add_option("--val-ood", cfg.val_ood_split, "OOD validation split");
  tune_cmd->add_option("--grid", cfg.grid, "Comma-separated alpha candidates")->delimiter(',');

  auto* etf_cmd = app.add_subcommand("etf-verify", "Random-draw checks of the ETF variance results");
  etf_cmd->add_option("--out", cfg.out, "Output directory");
  etf_cmd->add_option("--seed", cfg.seed, "Base seed");
  etf_cmd->add_option("--bound-draws", cfg.bound_draws, "Draws for the ID variance bounds");
  etf_cmd->add_option("--identity-draws", cfg.identity_draws, "Draws for the projection identity");
  etf_cmd->add_option("--separation-draws", cfg.separation_draws, "Draws for ID/OOD separation");
  etf_cmd->add_option("--analogue-draws", cfg.analogue_draws, "Draws for the Mahalanobis analogue");

  auto* diag_cmd = app.add_subcommand("diagnostics", "Sorted-distance profiles and variance histograms as CSV");
  detail::add_data_options(diag_cmd, cfg);
  detail::add_split_options(diag_cmd, cfg);
  diag_cmd->add_option("--metric", cfg.metric, "mahalanobis | l2 | l1");
  diag_cmd->add_option("--splits", cfg.score_splits, "Splits to profile (default: test splits)")->delimiter(',');
  diag_cmd->add_option("--bins", cfg.bins, "Histogram bins")->check(CLI::PositiveNumber);

  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Write synthetic ETF Gaussian data and a manifest");
  gen_cmd->add_option("--out", cfg.out, "Output directory");
  gen_cmd->add_option("--seed", cfg.seed, "Seed");
  gen_cmd->add_option("--classes", cfg.synthetic.num_classes, "Number of classes");
  gen_cmd->add_option("--dim", cfg.synthetic.dim, "Feature dimension");
  gen_cmd->add_option("--radius", cfg.synthetic.radius, "ETF radius");
  gen_cmd->add_option("--sigma", cfg.synthetic.within_class_std, "Within-class standard deviation");
  gen_cmd->add_option("--train-per-class", cfg.synthetic.train_per_class, "Training samples per class");
  gen_cmd->add_option("--val-per-class", cfg.synthetic.val_per_class, "Validation samples per class");
  gen_cmd->add_option("--test-per-class", cfg.synthetic.test_per_class, "Test samples per class");
  gen_cmd->add_option("--ood-kind", cfg.ood_kind, "orthogonal | shifted-gaussian | uniform-shell | near-ood-interpolated");
  gen_cmd->add_option("--ood-count", cfg.synthetic.ood_count, "OOD samples per OOD split");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::FileError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(cfg, out);
    if (score_cmd->parsed()) return cmd_score(cfg, out);
    if (eval_cmd->parsed()) return cmd_eval(cfg, out);
    if (tune_cmd->parsed()) return cmd_tune_alpha(cfg, out);
    if (etf_cmd->parsed()) return cmd_etf_verify(cfg, out);
    if (diag_cmd->parsed()) return cmd_diagnostics(cfg, out);
    if (gen_cmd->parsed()) return cmd_gen_synthetic(cfg, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace mahavar::cli
