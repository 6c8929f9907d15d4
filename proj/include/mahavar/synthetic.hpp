#pragma once
// Class-conditional Gaussian ID data on simplex-ETF means, N(mu_c, s^2 I),
// plus four kinds of controlled OOD data. Logits are x mu_c^T.

#include "mahavar/error.hpp"
#include "mahavar/etf_lab.hpp"
#include "mahavar/feature_store.hpp"
#include "mahavar/types.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace mahavar {

enum class OodKind { orthogonal, shifted_gaussian, uniform_shell, near_ood_interpolated };

inline std::string_view to_string(OodKind k) {
  switch (k) {
    case OodKind::orthogonal: return "orthogonal";
    case OodKind::shifted_gaussian: return "shifted-gaussian";
    case OodKind::uniform_shell: return "uniform-shell";
    case OodKind::near_ood_interpolated: return "near-ood-interpolated";
  }
  return "";
}

inline OodKind parse_ood_kind(std::string_view s) {
  if (s == "orthogonal" || s == "orthogonal-subspace") return OodKind::orthogonal;
  if (s == "shifted-gaussian") return OodKind::shifted_gaussian;
  if (s == "uniform-shell") return OodKind::uniform_shell;
  if (s == "near-ood-interpolated") return OodKind::near_ood_interpolated;
  throw ValidationError("unknown OOD kind '" + std::string(s) +
                        "' (expected orthogonal, shifted-gaussian, uniform-shell, near-ood-interpolated)");
}

struct SyntheticSpec {
  int num_classes = 10;
  int dim = 32;
  double radius = 1.0;
  double within_class_std = 0.1;
  int train_per_class = 200;
  int val_per_class = 50;
  int test_per_class = 100;
  OodKind ood_kind = OodKind::orthogonal;
  int ood_count = 1000;  // per OOD split (validation and test)
  std::uint64_t seed = 0;

  void validate() const {
    if (num_classes < 2) throw ValidationError("synthetic data needs at least 2 classes");
    if (dim < num_classes - 1) throw ValidationError("dim must be >= num_classes - 1 for ETF means");
    if (!(radius > 0.0)) throw ValidationError("radius must be positive");
    if (!(within_class_std > 0.0) || !std::isfinite(within_class_std))
      throw ValidationError("within_class_std must be positive");
    if (train_per_class < 2 || val_per_class < 1 || test_per_class < 1 || ood_count < 1)
      throw ValidationError("sample counts must be >= 1 (>= 2 per class for training)");
    if (ood_kind == OodKind::orthogonal && dim <= num_classes - 1)
      throw ValidationError("orthogonal OOD needs dim > num_classes - 1 (got d=" + std::to_string(dim) +
                            ", C=" + std::to_string(num_classes) + ")");
  }
};

struct SyntheticData {
  etf::EtfGeometry geometry;
  FeatureBundle train, val_id, val_ood, test_id, test_ood;
};

namespace detail {

enum SplitTag : std::uint64_t { kTrain = 1, kValId = 2, kValOod = 3, kTestId = 4, kTestOod = 5, kGeometry = 6 };

inline void attach_logits(FeatureBundle& b, const Matrix& means) { b.logits = Matrix(b.features * means.transpose()); }

inline FeatureBundle gaussian_split(const SyntheticSpec& spec, const Matrix& means, std::string name, int per_class,
                                    SplitTag tag) {
  const int C = spec.num_classes;
  FeatureBundle b;
  b.name = std::move(name);
  b.num_classes = C;
  b.source_dtype = npy::Dtype::f64;
  b.features.resize(static_cast<Eigen::Index>(C) * per_class, spec.dim);
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(C) * per_class);
  for (int c = 0; c < C; ++c) {
    auto rng = make_rng(spec.seed, tag, static_cast<std::uint64_t>(c));
    std::normal_distribution<double> normal(0.0, spec.within_class_std);
    for (int i = 0; i < per_class; ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(c) * per_class + i;
      for (int j = 0; j < spec.dim; ++j) b.features(r, j) = means(c, j) + normal(rng);
      labels.push_back(c);
    }
  }
  b.labels = std::move(labels);
  attach_logits(b, means);
  return b;
}

inline FeatureBundle ood_split(const SyntheticSpec& spec, const etf::EtfGeometry& g, std::string name, SplitTag tag) {
  const int d = spec.dim, C = spec.num_classes;
  const double R = spec.radius, s = spec.within_class_std;
  FeatureBundle b;
  b.name = std::move(name);
  b.num_classes = C;
  b.source_dtype = npy::Dtype::f64;
  b.features.resize(spec.ood_count, d);

  auto shared = make_rng(spec.seed, tag, 0);
  const Vector shift = etf::detail::random_unit(d, shared) * R;

  for (int i = 0; i < spec.ood_count; ++i) {
    auto rng = make_rng(spec.seed, tag, static_cast<std::uint64_t>(i) + 1);
    std::normal_distribution<double> normal;
    Vector x(d);
    switch (spec.ood_kind) {
      case OodKind::orthogonal: {
        for (int j = 0; j < d; ++j) x[j] = normal(rng);
        x -= g.span_basis * (g.span_basis.transpose() * x);
        // E||x|| ~ sqrt(d - C + 1); rescale so OOD norms match the ID radius.
        x *= R / std::sqrt(static_cast<double>(d - (C - 1)));
        break;
      }
      case OodKind::shifted_gaussian:
        for (int j = 0; j < d; ++j) x[j] = shift[j] + s * normal(rng);
        break;
      case OodKind::uniform_shell: x = etf::detail::random_unit(d, rng) * R; break;
      case OodKind::near_ood_interpolated: {
        const int a = etf::detail::uniform_int(rng, 0, C - 1);
        int c2 = etf::detail::uniform_int(rng, 0, C - 2);
        if (c2 >= a) ++c2;
        x = 0.5 * (g.means.row(a) + g.means.row(c2)).transpose();
        for (int j = 0; j < d; ++j) x[j] += s * normal(rng);
        break;
      }
    }
    b.features.row(i) = x.transpose();
  }
  attach_logits(b, g.means);
  return b;
}

}  // namespace detail

/// Deterministic in spec.seed; every split and class draws from its own
/// derived stream.
inline SyntheticData generate(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticData out;
  out.geometry = etf::build_etf(spec.num_classes, spec.dim, spec.radius,
                                spec.seed ^ (static_cast<std::uint64_t>(detail::kGeometry) << 56));
  const Matrix& m = out.geometry.means;
  out.train = detail::gaussian_split(spec, m, "train", spec.train_per_class, detail::kTrain);
  out.train.is_train = true;
  out.val_id = detail::gaussian_split(spec, m, "val_id", spec.val_per_class, detail::kValId);
  out.test_id = detail::gaussian_split(spec, m, "test_id", spec.test_per_class, detail::kTestId);
  out.val_ood = detail::ood_split(spec, out.geometry, "val_ood", detail::kValOod);
  out.test_ood = detail::ood_split(spec, out.geometry, "test_ood", detail::kTestOod);
  return out;
}

/// Writes all five splits and their manifest into `dir`.
inline Manifest save_synthetic(const SyntheticData& data, const fs::path& dir) {
  Manifest m;
  for (const FeatureBundle* b : {&data.train, &data.val_id, &data.val_ood, &data.test_id, &data.test_ood})
    m = save_bundle(*b, dir);
  return m;
}

}  // namespace mahavar
