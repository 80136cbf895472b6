// SPDX-License-Identifier: Apache-2.0
#include "oceanql/vision/image.hpp"

#include <algorithm>
#include <cmath>

namespace oceanql::vision {

Image::Image(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b, std::uint8_t a)
    : width(w), height(h), rgba(static_cast<std::size_t>(std::max(w, 0)) * std::max(h, 0) * 4) {
  for (std::size_t i = 0; i < rgba.size(); i += 4) {
    rgba[i] = r;
    rgba[i + 1] = g;
    rgba[i + 2] = b;
    rgba[i + 3] = a;
  }
}

void Image::set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b, std::uint8_t a) {
  auto* p = at(x, y);
  p[0] = r;
  p[1] = g;
  p[2] = b;
  p[3] = a;
}

Image crop(const Image& img, int x, int y, int w, int h) {
  const int x0 = std::clamp(x, 0, img.width);
  const int y0 = std::clamp(y, 0, img.height);
  const int x1 = std::clamp(x + w, 0, img.width);
  const int y1 = std::clamp(y + h, 0, img.height);
  if (x1 <= x0 || y1 <= y0) return {};
  Image out(x1 - x0, y1 - y0);
  for (int yy = y0; yy < y1; ++yy) {
    std::copy_n(img.at(x0, yy), (x1 - x0) * 4, out.at(0, yy - y0));
  }
  return out;
}

Image upscale(const Image& img, int factor) {
  Image out(img.width * factor, img.height * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) std::copy_n(img.at(x / factor, y / factor), 4, out.at(x, y));
  }
  return out;
}

HsvColor rgb_to_hsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  HsvColor c;
  c.v = mx;
  c.s = mx > 0 ? d / mx : 0;
  if (d <= 0) return c;
  double h;
  if (mx == r) {
    h = 60.0 * std::fmod((g - b) / d, 6.0);
  } else if (mx == g) {
    h = 60.0 * ((b - r) / d + 2.0);
  } else {
    h = 60.0 * ((r - g) / d + 4.0);
  }
  if (h < 0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  c.h = h;
  return c;
}

void hsv_to_rgb(const HsvColor& c, std::uint8_t& r, std::uint8_t& g, std::uint8_t& b) {
  const double C = c.v * c.s;
  const double hp = std::fmod(c.h, 360.0) / 60.0;
  const double X = C * (1 - std::fabs(std::fmod(hp, 2.0) - 1));
  double r1 = 0, g1 = 0, b1 = 0;
  switch (static_cast<int>(hp)) {
    case 0: r1 = C; g1 = X; break;
    case 1: r1 = X; g1 = C; break;
    case 2: g1 = C; b1 = X; break;
    case 3: g1 = X; b1 = C; break;
    case 4: r1 = X; b1 = C; break;
    default: r1 = C; b1 = X; break;
  }
  const double m = c.v - C;
  auto to8 = [](double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L)); };
  r = to8(r1 + m);
  g = to8(g1 + m);
  b = to8(b1 + m);
}

double hue_distance(double a, double b) {
  double d = std::fmod(std::fabs(a - b), 360.0);
  return d > 180.0 ? 360.0 - d : d;
}

}  // namespace oceanql::vision
