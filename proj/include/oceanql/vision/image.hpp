// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace oceanql::vision {

/// 8-bit RGBA, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgba;

  Image() = default;
  Image(int w, int h, std::uint8_t r = 0, std::uint8_t g = 0, std::uint8_t b = 0, std::uint8_t a = 255);

  [[nodiscard]] bool empty() const { return width <= 0 || height <= 0; }
  [[nodiscard]] bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  std::uint8_t* at(int x, int y) { return &rgba[(static_cast<std::size_t>(y) * width + x) * 4]; }
  [[nodiscard]] const std::uint8_t* at(int x, int y) const { return &rgba[(static_cast<std::size_t>(y) * width + x) * 4]; }
  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b, std::uint8_t a = 255);

  bool operator==(const Image&) const = default;
};

/// Region clamped to the image; may come back empty.
Image crop(const Image& img, int x, int y, int w, int h);

/// Nearest-neighbour integer upscale.
Image upscale(const Image& img, int factor);

struct HsvColor {
  double h = 0;  // degrees, [0, 360)
  double s = 0;
  double v = 0;
};

/// Standard hexcone conversion. Hue is reported as 0 when s == 0.
HsvColor rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);
void hsv_to_rgb(const HsvColor& c, std::uint8_t& r, std::uint8_t& g, std::uint8_t& b);

/// Circular distance in degrees, in [0, 180].
double hue_distance(double a, double b);

enum class ImageFormat { Png, Jpeg, Unknown };

ImageFormat sniff_format(std::string_view bytes);

/// PNG or JPEG bytes to RGBA. Throws FormatError for anything else or on a
/// corrupt stream.
Image decode_image(std::string_view bytes);

/// Lossless PNG with alpha.
std::string encode_png(const Image& img);

}  // namespace oceanql::vision
