// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oceanql/vision/image.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace oceanql::vision {

// Stand-in imagery: the seed database has no real photographs, so each image
// is rendered on demand from its id and bounding boxes.

inline constexpr int kSceneWidth = 192;
inline constexpr int kSceneHeight = 144;

enum class Pattern { Solid, Stripes, Spots, Rings };

struct Palette {
  std::array<std::uint8_t, 3> base;
  std::array<std::uint8_t, 3> accent;
  Pattern pattern;
};

/// Fixed palette for the bundled species, hash-derived for anything else.
Palette palette_for(std::string_view concept_name);

struct SceneBox {
  std::string concept_name;
  int x = 0, y = 0, width = 0, height = 0;
};

/// Deterministic for equal arguments. Background darkens with depth.
Image render_scene(std::int64_t image_id, double depth_meters, const std::vector<SceneBox>& boxes,
                   int width = kSceneWidth, int height = kSceneHeight);

}  // namespace oceanql::vision
