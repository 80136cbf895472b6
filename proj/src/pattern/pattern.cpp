// SPDX-License-Identifier: Apache-2.0
#include "oceanql/pattern/pattern.hpp"

#include "oceanql/data/datastore.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oceanql::pattern {
namespace {

// Absorbs rounding at the range boundary; distinct 8-bit colours differ by far more.
constexpr double kSlack = 1e-9;

vision::HsvColor hsv_at(const vision::Image& img, int x, int y) {
  const auto* p = img.at(x, y);
  return vision::rgb_to_hsv(p[0], p[1], p[2]);
}

}  // namespace

Mask::Mask(int w, int h, bool fill)
    : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

std::size_t Mask::count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

bool Mask::subset_of(const Mask& other) const {
  if (width != other.width || height != other.height) throw std::invalid_argument("mask dimensions differ");
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] && !other.bits[i]) return false;
  }
  return true;
}

double hsv_distance(const vision::HsvColor& a, const vision::HsvColor& b) {
  const double dh = vision::hue_distance(a.h, b.h) / 360.0;
  const double ds = a.s - b.s, dv = a.v - b.v;
  return std::sqrt(dh * dh + ds * ds + dv * dv);
}

SegmentationResult segment(const vision::Image& image, Pixel seed, const SegmentConfig& config) {
  if (!image.contains(seed.x, seed.y)) {
    throw std::out_of_range("seed (" + std::to_string(seed.x) + ", " + std::to_string(seed.y) +
                            ") is outside the image");
  }
  const auto seed_colour = hsv_at(image, seed.x, seed.y);
  std::vector<double> dist(static_cast<std::size_t>(image.width) * image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      dist[static_cast<std::size_t>(y) * image.width + x] = hsv_distance(hsv_at(image, x, y), seed_colour);
    }
  }

  SegmentationResult out;
  out.seed = seed;
  for (std::size_t m = 0; m < 3; ++m) {
    const double tol = config.tolerances[m];
    Mask mask(image.width, image.height);
    std::vector<Pixel> stack{seed};
    mask.set(seed.x, seed.y);
    while (!stack.empty()) {
      const auto p = stack.back();
      stack.pop_back();
      constexpr int dx[] = {1, -1, 0, 0};
      constexpr int dy[] = {0, 0, 1, -1};
      for (int d = 0; d < 4; ++d) {
        const int nx = p.x + dx[d], ny = p.y + dy[d];
        if (!mask.contains(nx, ny) || mask.at(nx, ny)) continue;
        if (dist[static_cast<std::size_t>(ny) * image.width + nx] > tol) continue;
        mask.set(nx, ny);
        stack.push_back({nx, ny});
      }
    }
    out.masks[m] = std::move(mask);
  }
  return out;
}

Mask select_colour(const vision::Image& image, const Mask& mask, Pixel target, const HsvRange& range) {
  if (mask.width != image.width || mask.height != image.height) {
    throw std::invalid_argument("mask does not match the image dimensions");
  }
  if (!mask.contains(target.x, target.y) || !mask.at(target.x, target.y)) {
    throw std::invalid_argument("target pixel is outside the mask");
  }
  const auto t = hsv_at(image, target.x, target.y);
  Mask sel(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (!mask.at(x, y)) continue;
      const auto c = hsv_at(image, x, y);
      if (vision::hue_distance(c.h, t.h) <= range.h + kSlack && std::abs(c.s - t.s) <= range.s + kSlack &&
          std::abs(c.v - t.v) <= range.v + kSlack) {
        sel.set(x, y);
      }
    }
  }
  return sel;
}

PatternImage extract_pattern(const vision::Image& image, const Mask& mask, Pixel target, const HsvRange& range) {
  const auto sel = select_colour(image, mask, target, range);
  int x0 = image.width, y0 = image.height, x1 = -1, y1 = -1;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (!sel.at(x, y)) continue;
      x0 = std::min(x0, x), y0 = std::min(y0, y);
      x1 = std::max(x1, x), y1 = std::max(y1, y);
    }
  }
  // The target always selects itself, so the rectangle is non-empty.
  PatternImage out;
  out.offset_x = x0;
  out.offset_y = y0;
  out.image = vision::Image(x1 - x0 + 1, y1 - y0 + 1, 0, 0, 0, 0);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (!sel.at(x, y)) continue;
      std::copy_n(image.at(x, y), 4, out.image.at(x - x0, y - y0));
      ++out.selected;
    }
  }
  return out;
}

std::vector<PatternHit> search_pattern(const vision::Image& pattern, const similarity::VectorIndex& index,
                                       const data::Datastore& db, std::size_t k,
                                       const similarity::Extractor& extractor) {
  if (k == 0) return {};
  const auto features = extractor.extract(pattern);
  std::vector<PatternHit> out;
  for (const auto& hit : index.l2_topk(features.values, k)) {
    PatternHit h;
    h.bounding_box_id = hit.id;
    h.distance = hit.score;
    if (auto box = db.bounding_box(hit.id)) {
      h.image_id = box->image_id;
      h.concept_name = box->concept_name;
      h.x = box->x, h.y = box->y, h.width = box->width, h.height = box->height;
    }
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace oceanql::pattern
