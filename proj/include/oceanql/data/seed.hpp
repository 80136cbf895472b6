// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace oceanql::data {

struct SeedParams {
  std::uint64_t seed = 20231029;
  std::size_t images = 2400;
  std::size_t aurelia_cluster = 60;  // shallow Monterey Bay images of Aurelia aurita
};

/// Observer on the single far-off Aurelia aurita sighting.
inline constexpr const char* kOutlierObserver = "Keoni Kahale";

/// Writes images.csv, bounding_boxes.csv and marine_regions.csv into dir.
/// Byte-identical output for equal params.
void write_seed(const std::filesystem::path& dir, const SeedParams& params = {});

}  // namespace oceanql::data
