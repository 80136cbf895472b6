// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "oceanql/similarity/index.hpp"
#include "oceanql/vision/image.hpp"

#include <cstdint>

namespace oceanql::data {
class Datastore;
}

namespace oceanql::similarity {

/// Renders a database image with all of its boxes. Throws std::out_of_range
/// for an unknown id.
vision::Image render_db_image(const data::Datastore& db, std::int64_t image_id);

/// The pixels inside one bounding box. Throws std::out_of_range for an unknown id.
vision::Image box_crop(const data::Datastore& db, std::int64_t bounding_box_id);

/// One entry per bounding box, inserted in ascending box id.
VectorIndex build_index(const data::Datastore& db, const Extractor& extractor = HsvHistogramExtractor{});

}  // namespace oceanql::similarity
