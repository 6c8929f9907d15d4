#pragma once
// Feature bundles on disk: one NPY file per tensor plus a JSON manifest
// describing the splits of a dataset.
//
// manifest.json
//   {
//     "schema_version": 1,
//     "num_classes": C,
//     "feature_dim": d,
//     "splits": {
//       "train": {"features_path": "train.features.npy",
//                 "labels_path":   "train.labels.npy",   (optional)
//                 "logits_path":   "train.logits.npy",   (optional)
//                 "is_train": true}                       (optional)
//     }
//   }
//
// Paths are relative to the manifest's directory.

#include "json.hpp"
#include "mahavar/error.hpp"
#include "mahavar/npy.hpp"
#include "mahavar/types.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mahavar {

namespace fs = std::filesystem;

struct SplitEntry {
  std::string features_path;
  std::optional<std::string> labels_path;
  std::optional<std::string> logits_path;
  bool is_train = false;

  bool operator==(const SplitEntry&) const = default;
};

struct Manifest {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  int num_classes = 0;
  int feature_dim = 0;
  std::map<std::string, SplitEntry> splits;

  bool operator==(const Manifest&) const = default;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["schema_version"] = schema_version;
    j["num_classes"] = num_classes;
    j["feature_dim"] = feature_dim;
    j["splits"] = nlohmann::json::object();
    for (const auto& [name, e] : splits) {
      nlohmann::json s;
      s["features_path"] = e.features_path;
      if (e.labels_path) s["labels_path"] = *e.labels_path;
      if (e.logits_path) s["logits_path"] = *e.logits_path;
      if (e.is_train) s["is_train"] = true;
      j["splits"][name] = std::move(s);
    }
    return j;
  }

  static Manifest from_json(const nlohmann::json& j, const std::string& source) {
    Manifest m;
    try {
      m.schema_version = j.at("schema_version").get<int>();
      if (m.schema_version != kSchemaVersion)
        throw ValidationError(source + ": unsupported schema_version " + std::to_string(m.schema_version));
      m.num_classes = j.at("num_classes").get<int>();
      m.feature_dim = j.at("feature_dim").get<int>();
      for (const auto& [name, s] : j.at("splits").items()) {
        SplitEntry e;
        e.features_path = s.at("features_path").get<std::string>();
        if (s.contains("labels_path")) e.labels_path = s["labels_path"].get<std::string>();
        if (s.contains("logits_path")) e.logits_path = s["logits_path"].get<std::string>();
        e.is_train = s.value("is_train", false);
        m.splits.emplace(name, std::move(e));
      }
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(source + ": malformed manifest: " + ex.what());
    }
    if (m.num_classes < 1 || m.feature_dim < 1)
      throw ValidationError(source + ": num_classes and feature_dim must be positive");
    return m;
  }

  static Manifest read(const fs::path& path) {
    auto text = npy::read_file(path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(path.string() + ": invalid JSON: " + ex.what());
    }
    return from_json(j, path.string());
  }

  void write(const fs::path& path) const { npy::write_file(path, to_json().dump(2) + "\n"); }
};

/// Labeled feature matrix with optional logits. Values are held in double
/// regardless of the stored dtype.
struct FeatureBundle {
  std::string name;
  Matrix features;
  std::optional<std::vector<int>> labels;
  std::optional<Matrix> logits;
  npy::Dtype source_dtype = npy::Dtype::f32;
  int num_classes = 0;
  bool is_train = false;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  /// Throws ValidationError naming `source` and the offending row.
  void validate(const std::string& source = "") const {
    const std::string where = source.empty() ? "bundle '" + name + "'" : source;
    for (Eigen::Index r = 0; r < features.rows(); ++r)
      if (!features.row(r).allFinite())
        throw ValidationError(where + ": non-finite feature value at row " + std::to_string(r));
    if (labels) {
      if (static_cast<Eigen::Index>(labels->size()) != features.rows())
        throw ValidationError(where + ": " + std::to_string(labels->size()) + " labels for " +
                              std::to_string(features.rows()) + " feature rows");
      std::vector<int> seen(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
      for (std::size_t r = 0; r < labels->size(); ++r) {
        int y = (*labels)[r];
        if (y < 0 || y >= num_classes)
          throw ValidationError(where + ": label " + std::to_string(y) + " at row " + std::to_string(r) +
                                " outside [0, " + std::to_string(num_classes) + ")");
        seen[static_cast<std::size_t>(y)] = 1;
      }
      if (is_train)
        for (int c = 0; c < num_classes; ++c)
          if (!seen[static_cast<std::size_t>(c)])
            throw ValidationError(where + ": training split has no sample of class " + std::to_string(c));
    }
    if (logits) {
      if (logits->rows() != features.rows())
        throw ValidationError(where + ": logits have " + std::to_string(logits->rows()) + " rows, features have " +
                              std::to_string(features.rows()));
      if (num_classes > 0 && logits->cols() != num_classes)
        throw ValidationError(where + ": logits have " + std::to_string(logits->cols()) + " columns, expected " +
                              std::to_string(num_classes));
      for (Eigen::Index r = 0; r < logits->rows(); ++r)
        if (!logits->row(r).allFinite())
          throw ValidationError(where + ": non-finite logit at row " + std::to_string(r));
    }
  }
};

namespace detail {

inline Matrix to_matrix(const npy::Array& a, const std::string& source) {
  if (a.shape.size() != 2) throw ValidationError(source + ": expected a 2-D tensor");
  if (a.dtype == npy::Dtype::i32) throw ValidationError(source + ": expected float32 or float64 payload");
  Matrix m(static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
  std::copy(a.values.begin(), a.values.end(), m.data());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      if (!std::isfinite(m(r, c)))
        throw ValidationError(source + ": non-finite value at row " + std::to_string(r) + " (byte " +
                              std::to_string(a.payload_offset +
                                             static_cast<std::size_t>(r * m.cols() + c) * npy::item_size(a.dtype)) +
                              ")");
  return m;
}

inline void save_matrix(const fs::path& path, const Matrix& m, npy::Dtype dtype) {
  const std::size_t shape[] = {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
  npy::save(path, dtype, shape, std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
}

}  // namespace detail

/// Loads and validates split `split` of the manifest at `manifest_path`.
inline FeatureBundle load_bundle(const fs::path& manifest_path, const std::string& split) {
  Manifest manifest = Manifest::read(manifest_path);
  auto it = manifest.splits.find(split);
  if (it == manifest.splits.end())
    throw ValidationError(manifest_path.string() + ": split '" + split + "' not found in manifest");
  const SplitEntry& entry = it->second;
  const fs::path base = manifest_path.parent_path();

  FeatureBundle b;
  b.name = split;
  b.num_classes = manifest.num_classes;
  b.is_train = entry.is_train;

  const fs::path fpath = base / entry.features_path;
  auto farr = npy::load(fpath);
  b.features = detail::to_matrix(farr, fpath.string());
  b.source_dtype = farr.dtype;
  if (b.features.cols() != manifest.feature_dim)
    throw ValidationError(fpath.string() + ": feature width " + std::to_string(b.features.cols()) +
                          " disagrees with manifest feature_dim " + std::to_string(manifest.feature_dim));

  if (entry.labels_path) {
    const fs::path lpath = base / *entry.labels_path;
    auto larr = npy::load(lpath);
    if (larr.dtype != npy::Dtype::i32 || larr.shape.size() != 1)
      throw ValidationError(lpath.string() + ": labels must be a 1-D <i4 tensor");
    if (larr.rows() != static_cast<std::size_t>(b.features.rows()))
      throw ValidationError(lpath.string() + ": " + std::to_string(larr.rows()) + " labels for " +
                            std::to_string(b.features.rows()) + " feature rows");
    std::vector<int> labels(larr.values.begin(), larr.values.end());
    for (std::size_t r = 0; r < labels.size(); ++r)
      if (labels[r] < 0 || labels[r] >= manifest.num_classes)
        throw ValidationError(lpath.string() + ": label " + std::to_string(labels[r]) + " at row " +
                              std::to_string(r) + " outside [0, " + std::to_string(manifest.num_classes) + ")");
    b.labels = std::move(labels);
  }

  if (entry.logits_path) {
    const fs::path gpath = base / *entry.logits_path;
    auto garr = npy::load(gpath);
    Matrix logits = detail::to_matrix(garr, gpath.string());
    if (logits.cols() != manifest.num_classes)
      throw ValidationError(gpath.string() + ": logit width " + std::to_string(logits.cols()) +
                            " disagrees with manifest num_classes " + std::to_string(manifest.num_classes));
    b.logits = std::move(logits);
  }

  b.validate(fpath.string());
  return b;
}

/// Writes `bundle` into `dir` and records it in `dir/manifest.json`, merging
/// with an existing manifest when one is present.
inline Manifest save_bundle(const FeatureBundle& bundle, const fs::path& dir) {
  bundle.validate();
  if (bundle.num_classes < 1) throw ValidationError("bundle '" + bundle.name + "': num_classes must be set");
  if (bundle.source_dtype == npy::Dtype::i32)
    throw ValidationError("bundle '" + bundle.name + "': features cannot be stored as int32");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError(dir.string() + ": cannot create output directory");

  const fs::path manifest_path = dir / "manifest.json";
  Manifest m;
  if (fs::exists(manifest_path)) {
    m = Manifest::read(manifest_path);
    if (m.num_classes != bundle.num_classes || m.feature_dim != bundle.dim())
      throw ValidationError(manifest_path.string() + ": existing manifest has C=" + std::to_string(m.num_classes) +
                            ", d=" + std::to_string(m.feature_dim) + "; bundle '" + bundle.name + "' has C=" +
                            std::to_string(bundle.num_classes) + ", d=" + std::to_string(bundle.dim()));
  } else {
    m.num_classes = bundle.num_classes;
    m.feature_dim = static_cast<int>(bundle.dim());
  }

  SplitEntry e;
  e.features_path = bundle.name + ".features.npy";
  e.is_train = bundle.is_train;
  detail::save_matrix(dir / e.features_path, bundle.features, bundle.source_dtype);
  if (bundle.labels) {
    e.labels_path = bundle.name + ".labels.npy";
    std::vector<double> v(bundle.labels->begin(), bundle.labels->end());
    const std::size_t shape[] = {v.size()};
    npy::save(dir / *e.labels_path, npy::Dtype::i32, shape, v);
  }
  if (bundle.logits) {
    e.logits_path = bundle.name + ".logits.npy";
    detail::save_matrix(dir / *e.logits_path, *bundle.logits, bundle.source_dtype);
  }
  m.splits[bundle.name] = e;
  m.write(manifest_path);
  return m;
}

}  // namespace mahavar
