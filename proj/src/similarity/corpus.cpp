// SPDX-License-Identifier: Apache-2.0
#include "oceanql/similarity/corpus.hpp"

#include "oceanql/data/datastore.hpp"
#include "oceanql/vision/synth.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace oceanql::similarity {
namespace {

vision::Image render(const data::ImageRecord& img, const std::vector<data::BoundingBoxRecord>& boxes) {
  std::vector<vision::SceneBox> scene;
  scene.reserve(boxes.size());
  for (const auto& b : boxes) scene.push_back({b.concept_name, b.x, b.y, b.width, b.height});
  return vision::render_scene(img.id, img.depth_meters, scene);
}

}  // namespace

vision::Image render_db_image(const data::Datastore& db, std::int64_t image_id) {
  auto img = db.image(image_id);
  if (!img) throw std::out_of_range("unknown image " + std::to_string(image_id));
  return render(*img, db.boxes_for_image(image_id));
}

vision::Image box_crop(const data::Datastore& db, std::int64_t bounding_box_id) {
  auto box = db.bounding_box(bounding_box_id);
  if (!box) throw std::out_of_range("unknown bounding box " + std::to_string(bounding_box_id));
  return vision::crop(render_db_image(db, box->image_id), box->x, box->y, box->width, box->height);
}

VectorIndex build_index(const data::Datastore& db, const Extractor& extractor) {
  auto boxes = db.all_bounding_boxes();
  std::sort(boxes.begin(), boxes.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::map<std::int64_t, std::vector<const data::BoundingBoxRecord*>> by_image;
  for (const auto& b : boxes) by_image[b.image_id].push_back(&b);

  // Render each image once.
  std::map<std::int64_t, std::vector<float>> vectors;
  for (const auto& [image_id, members] : by_image) {
    auto img = db.image(image_id);
    if (!img) throw std::out_of_range("bounding box references unknown image " + std::to_string(image_id));
    std::vector<data::BoundingBoxRecord> all;
    for (const auto* b : members) all.push_back(*b);
    const auto scene = render(*img, all);
    for (const auto* b : members) {
      vectors[b->id] = extractor.extract(vision::crop(scene, b->x, b->y, b->width, b->height)).values;
    }
  }

  VectorIndex index(extractor.dim(), extractor.id());
  for (auto& [id, v] : vectors) index.add(id, std::move(v));
  return index;
}

}  // namespace oceanql::similarity
