// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oceanql/similarity/index.hpp"
#include "oceanql/vision/image.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace oceanql::data {
class Datastore;
}

namespace oceanql::pattern {

struct Pixel {
  int x = 0;
  int y = 0;
};

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h, bool fill = false);

  [[nodiscard]] bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v = true) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  [[nodiscard]] bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  [[nodiscard]] std::size_t count() const;
  /// Every set pixel of this mask is set in other. Dimensions must match.
  [[nodiscard]] bool subset_of(const Mask& other) const;
  bool operator==(const Mask&) const = default;
};

/// Euclidean distance with hue scaled to [0, 0.5] (circular degrees / 360).
double hsv_distance(const vision::HsvColor& a, const vision::HsvColor& b);

struct SegmentConfig {
  std::array<double, 3> tolerances{0.08, 0.18, 0.35};  // tight, medium, loose
};

struct SegmentationResult {
  std::array<Mask, 3> masks;
  Pixel seed;
};

/// 4-connected region growing from seed; a pixel joins when its colour is
/// within tolerance of the seed colour. Throws std::out_of_range when the
/// seed lies outside the image.
SegmentationResult segment(const vision::Image& image, Pixel seed, const SegmentConfig& config = {});

struct HsvRange {
  double h = 18;    // degrees
  double s = 0.15;
  double v = 0.25;
};

/// Pixels of mask whose colour is within range of the target pixel.
/// Throws std::invalid_argument when the target is not in the mask or the
/// mask does not match the image.
Mask select_colour(const vision::Image& image, const Mask& mask, Pixel target, const HsvRange& range = {});

struct PatternImage {
  vision::Image image;  // unselected pixels are transparent
  int offset_x = 0;     // top-left corner in the source image
  int offset_y = 0;
  std::size_t selected = 0;
};

/// select_colour cropped to the selection's bounding rectangle.
PatternImage extract_pattern(const vision::Image& image, const Mask& mask, Pixel target, const HsvRange& range = {});

struct PatternHit {
  std::int64_t bounding_box_id = 0;
  std::int64_t image_id = 0;
  std::string concept_name;
  int x = 0, y = 0, width = 0, height = 0;
  double distance = 0;
};

/// L2 ranking of the pattern's features against the index, joined with box metadata.
std::vector<PatternHit> search_pattern(const vision::Image& pattern, const similarity::VectorIndex& index,
                                       const data::Datastore& db, std::size_t k,
                                       const similarity::Extractor& extractor = similarity::HsvHistogramExtractor{});

}  // namespace oceanql::pattern
