// SPDX-License-Identifier: Apache-2.0
#include "oceanql/vision/synth.hpp"

#include "oceanql/text.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace oceanql::vision {

namespace {

using RGB = std::array<std::uint8_t, 3>;

const std::map<std::string, Palette, std::less<>>& palettes() {
  static const std::map<std::string, Palette, std::less<>> table = {
      {"Apostichopus californicus", {RGB{150, 60, 40}, RGB{235, 160, 90}, Pattern::Spots}},
      {"Aurelia aurita", {RGB{205, 220, 240}, RGB{225, 150, 205}, Pattern::Rings}},
      {"Bathochordaeus stygius", {RGB{170, 185, 200}, RGB{120, 80, 60}, Pattern::Solid}},
      {"Bathyraja abyssicola", {RGB{70, 60, 75}, RGB{40, 35, 45}, Pattern::Solid}},
      {"Chionoecetes tanneri", {RGB{225, 110, 40}, RGB{245, 200, 150}, Pattern::Stripes}},
      {"Chrysaora fuscescens", {RGB{200, 120, 50}, RGB{120, 45, 30}, Pattern::Stripes}},
      {"Embassichthys bathybius", {RGB{90, 70, 55}, RGB{60, 50, 45}, Pattern::Spots}},
      {"Graneledone boreopacifica", {RGB{200, 190, 185}, RGB{140, 110, 120}, Pattern::Spots}},
      {"Hexanchus griseus", {RGB{95, 100, 105}, RGB{150, 155, 160}, Pattern::Solid}},
      {"Merluccius productus", {RGB{185, 190, 200}, RGB{80, 90, 110}, Pattern::Stripes}},
      {"Metridium farcimen", {RGB{245, 240, 230}, RGB{240, 150, 80}, Pattern::Rings}},
      {"Mola mola", {RGB{130, 140, 150}, RGB{200, 205, 210}, Pattern::Spots}},
      {"Octopus rubescens", {RGB{190, 60, 45}, RGB{235, 140, 70}, Pattern::Spots}},
      {"Phacellophora camtschatica", {RGB{240, 225, 200}, RGB{245, 170, 40}, Pattern::Rings}},
      {"Praya dubia", {RGB{215, 230, 235}, RGB{235, 200, 120}, Pattern::Stripes}},
      {"Pycnopodia helianthoides", {RGB{200, 80, 120}, RGB{240, 140, 60}, Pattern::Stripes}},
      {"Rathbunaster californicus", {RGB{235, 120, 60}, RGB{250, 200, 160}, Pattern::Rings}},
      {"Sebastes miniatus", {RGB{220, 70, 40}, RGB{240, 140, 60}, Pattern::Spots}},
      {"Sebastes mystinus", {RGB{60, 70, 85}, RGB{120, 130, 140}, Pattern::Stripes}},
      {"Sebastolobus alascanus", {RGB{215, 45, 40}, RGB{245, 150, 70}, Pattern::Solid}},
      {"Solmissus incisa", {RGB{190, 210, 225}, RGB{150, 90, 150}, Pattern::Rings}},
      {"Stenobrachius leucopsarus", {RGB{110, 105, 100}, RGB{180, 190, 230}, Pattern::Spots}},
      {"Strongylocentrotus fragilis", {RGB{200, 110, 140}, RGB{130, 50, 80}, Pattern::Stripes}},
      {"Tarletonbeania crenularis", {RGB{40, 60, 120}, RGB{170, 200, 240}, Pattern::Spots}},
      {"Vampyroteuthis infernalis", {RGB{110, 20, 30}, RGB{60, 10, 40}, Pattern::Solid}},
  };
  return table;
}

// splitmix64 finaliser; stable across platforms unlike <random> distributions.
std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint8_t jitter(std::uint8_t c, std::uint64_t h, int amp) {
  const int d = static_cast<int>(h % static_cast<std::uint64_t>(2 * amp + 1)) - amp;
  return static_cast<std::uint8_t>(std::clamp(static_cast<int>(c) + d, 0, 255));
}

}  // namespace

Palette palette_for(std::string_view concept_name) {
  const auto& t = palettes();
  if (auto it = t.find(concept_name); it != t.end()) return it->second;
  const auto h = text::fnv1a64(concept_name);
  auto ch = [&](int shift) { return static_cast<std::uint8_t>(40 + ((h >> shift) & 0xFF) * 200 / 255); };
  return {RGB{ch(0), ch(8), ch(16)}, RGB{ch(24), ch(32), ch(40)}, static_cast<Pattern>((h >> 48) % 4)};
}

Image render_scene(std::int64_t image_id, double depth_meters, const std::vector<SceneBox>& boxes, int width,
                   int height) {
  Image img(width, height);
  const double dim = std::clamp(1.0 - depth_meters / 5000.0, 0.25, 1.0);
  const auto seed = mix(static_cast<std::uint64_t>(image_id));
  for (int y = 0; y < height; ++y) {
    const double t = static_cast<double>(y) / std::max(1, height - 1);
    const auto r = static_cast<std::uint8_t>(10 * dim);
    const auto g = static_cast<std::uint8_t>((60 - 30 * t) * dim);
    const auto b = static_cast<std::uint8_t>((110 - 50 * t) * dim);
    for (int x = 0; x < width; ++x) {
      const auto h = mix(seed ^ (static_cast<std::uint64_t>(y) << 32 | static_cast<std::uint32_t>(x)));
      img.set(x, y, jitter(r, h, 4), jitter(g, h >> 8, 4), jitter(b, h >> 16, 4));
    }
  }
  for (const auto& box : boxes) {
    const auto pal = palette_for(box.concept_name);
    const double cx = box.x + box.width / 2.0, cy = box.y + box.height / 2.0;
    const double rx = box.width / 2.0, ry = box.height / 2.0;
    for (int y = std::max(0, box.y); y < std::min(height, box.y + box.height); ++y) {
      for (int x = std::max(0, box.x); x < std::min(width, box.x + box.width); ++x) {
        const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
        const double rr = dx * dx + dy * dy;
        if (rr > 1.0) continue;
        bool accent = false;
        switch (pal.pattern) {
          case Pattern::Solid: accent = rr > 0.8; break;
          case Pattern::Stripes: accent = ((x - box.x) / 3) % 2 == 1; break;
          case Pattern::Spots: accent = ((x - box.x) % 6 < 2) && ((y - box.y) % 6 < 2); break;
          case Pattern::Rings: accent = static_cast<int>(std::sqrt(rr) * 5) % 2 == 1; break;
        }
        const auto& c = accent ? pal.accent : pal.base;
        const auto h = mix(seed ^ mix(static_cast<std::uint64_t>(y) * 7919 + x));
        img.set(x, y, jitter(c[0], h, 3), jitter(c[1], h >> 8, 3), jitter(c[2], h >> 16, 3));
      }
    }
  }
  return img;
}

}  // namespace oceanql::vision
