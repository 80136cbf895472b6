// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oceanql/vision/image.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace oceanql::similarity {

struct FeatureVector {
  std::vector<float> values;
  std::string extractor_id;
};

class Extractor {
 public:
  virtual ~Extractor() = default;
  [[nodiscard]] virtual std::string id() const = 0;
  [[nodiscard]] virtual std::size_t dim() const = 0;
  /// Pixels with alpha 0 are ignored. Throws std::invalid_argument when no
  /// pixel contributes.
  [[nodiscard]] virtual FeatureVector extract(const vision::Image& crop) const = 0;
};

/// 8x8x8 HSV histogram, L1-normalised.
class HsvHistogramExtractor final : public Extractor {
 public:
  static constexpr std::size_t kBins = 8;
  [[nodiscard]] std::string id() const override { return "hsv-hist-8x8x8"; }
  [[nodiscard]] std::size_t dim() const override { return kBins * kBins * kBins; }
  [[nodiscard]] FeatureVector extract(const vision::Image& crop) const override;
  [[nodiscard]] static std::size_t bin_of(std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

/// Default extractor.
FeatureVector extract_features(const vision::Image& crop);

struct Hit {
  std::int64_t id;
  double score;  // cosine similarity or L2 distance
  bool operator==(const Hit&) const = default;
};

/// Exact index. Vectors are stored as given; cosine normalises on the fly.
class VectorIndex {
 public:
  VectorIndex(std::size_t dim, std::string extractor_id);

  /// Throws std::invalid_argument on dimension/extractor mismatch or a duplicate id.
  void add(std::int64_t id, const FeatureVector& v);
  void add(std::int64_t id, std::vector<float> values);

  /// Descending score, ties by ascending id. filter restricts candidate ids.
  [[nodiscard]] std::vector<Hit> cosine_topk(const std::vector<float>& query, std::size_t k,
                                             const std::unordered_set<std::int64_t>* filter = nullptr) const;
  /// Ascending distance, ties by ascending id.
  [[nodiscard]] std::vector<Hit> l2_topk(const std::vector<float>& query, std::size_t k) const;

  [[nodiscard]] std::size_t size() const { return ids_.size(); }
  [[nodiscard]] std::size_t dim() const { return dim_; }
  [[nodiscard]] const std::string& extractor_id() const { return extractor_id_; }
  [[nodiscard]] const std::vector<std::int64_t>& ids() const { return ids_; }
  [[nodiscard]] bool contains(std::int64_t id) const { return pos_.count(id) > 0; }
  /// Throws std::out_of_range for an unknown id.
  [[nodiscard]] std::vector<float> vector(std::int64_t id) const;

  /// Binary file: "OQVI", u32 version, u32 d, u32 extractor length + bytes,
  /// u64 count, then count x (i64 id, d x f32), little-endian.
  void save(const std::filesystem::path& path) const;
  static VectorIndex load(const std::filesystem::path& path);

  /// Externally computed vectors as JSON:
  /// {"extractor_id": ..., "entries": [{"bounding_box_id": n, "vector": [...]}, ...]}.
  /// Throws FormatError on mixed dimensions.
  static VectorIndex import_vectors(const std::filesystem::path& path);

 private:
  void check_query(const std::vector<float>& q) const;

  std::size_t dim_;
  std::string extractor_id_;
  std::vector<std::int64_t> ids_;
  std::vector<float> data_;
  std::vector<double> norms_;
  std::unordered_map<std::int64_t, std::size_t> pos_;
};

}  // namespace oceanql::similarity
