// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include "oceanql/error.hpp"
#include "oceanql/similarity/index.hpp"
#include "oceanql/vision/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

using namespace oceanql;
using namespace oceanql::similarity;

namespace {

std::vector<float> random_vec(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<float> n(0, 1);
  std::vector<float> v(d);
  for (auto& x : v) x = n(rng);
  return v;
}

// Full scans in plain double arithmetic, fully sorted.
std::vector<std::int64_t> brute_cosine(const std::vector<std::vector<float>>& vs, const std::vector<float>& q,
                                       std::size_t k) {
  std::vector<std::pair<double, std::int64_t>> s;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    double dot = 0, a = 0, b = 0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      dot += double(vs[i][j]) * q[j];
      a += double(vs[i][j]) * vs[i][j];
      b += double(q[j]) * q[j];
    }
    s.emplace_back(-dot / std::sqrt(a * b), static_cast<std::int64_t>(i));
  }
  std::sort(s.begin(), s.end());
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < std::min(k, s.size()); ++i) out.push_back(s[i].second);
  return out;
}

std::vector<std::int64_t> brute_l2(const std::vector<std::vector<float>>& vs, const std::vector<float>& q,
                                   std::size_t k) {
  std::vector<std::pair<double, std::int64_t>> s;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    double d = 0;
    for (std::size_t j = 0; j < q.size(); ++j) d += (double(vs[i][j]) - q[j]) * (double(vs[i][j]) - q[j]);
    s.emplace_back(d, static_cast<std::int64_t>(i));
  }
  std::sort(s.begin(), s.end());
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < std::min(k, s.size()); ++i) out.push_back(s[i].second);
  return out;
}

std::vector<std::int64_t> ids_of(const std::vector<Hit>& hits) {
  std::vector<std::int64_t> out;
  for (const auto& h : hits) out.push_back(h.id);
  return out;
}

}  // namespace

TEST(Features, UniformRedSingleBin) {
  auto fv = extract_features(vision::Image(10, 10, 255, 0, 0));
  EXPECT_EQ(fv.values.size(), 512u);
  EXPECT_EQ(std::count_if(fv.values.begin(), fv.values.end(), [](float x) { return x != 0; }), 1);
  EXPECT_FLOAT_EQ(*std::max_element(fv.values.begin(), fv.values.end()), 1.0F);
}

TEST(Features, DeterministicAndScaleInvariant) {
  auto img = vision::render_scene(5, 200, {{"Octopus rubescens", 10, 10, 50, 40}});
  auto c = vision::crop(img, 10, 10, 50, 40);
  auto a = extract_features(c);
  EXPECT_EQ(a.values, extract_features(c).values);
  auto up = extract_features(vision::upscale(c, 2));
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(a.values[i], up.values[i], 1e-6);
  double sum = 0;
  for (float x : a.values) sum += x;
  EXPECT_NEAR(sum, 1.0, 1e-5);
}

TEST(Features, DegenerateCropRejected) {
  EXPECT_THROW(extract_features(vision::Image()), std::invalid_argument);
  EXPECT_THROW(extract_features(vision::Image(3, 3, 1, 1, 1, 0)), std::invalid_argument);
}

TEST(Index, ExactAgainstBruteForce) {
  std::mt19937_64 rng(2024);
  const std::size_t d = 512, n = 1000;
  std::vector<std::vector<float>> vs;
  VectorIndex idx(d, "test");
  for (std::size_t i = 0; i < n; ++i) {
    vs.push_back(random_vec(rng, d));
    idx.add(static_cast<std::int64_t>(i), vs.back());
  }
  for (int q = 0; q < 100; ++q) {
    auto query = random_vec(rng, d);
    ASSERT_EQ(ids_of(idx.cosine_topk(query, 10)), brute_cosine(vs, query, 10));
    ASSERT_EQ(ids_of(idx.l2_topk(query, 10)), brute_l2(vs, query, 10));
  }
}

TEST(Index, SelfMatchOrthogonalAndBounds) {
  VectorIndex idx(3, "t");
  idx.add(1, std::vector<float>{1, 0, 0});
  idx.add(2, std::vector<float>{0, 1, 0});
  idx.add(3, std::vector<float>{0, 0, 2});
  auto hits = idx.cosine_topk({0, 0, 5}, 10);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].id, 3);
  EXPECT_DOUBLE_EQ(hits[0].score, 1.0);
  EXPECT_DOUBLE_EQ(hits[1].score, 0.0);
  auto l2 = idx.l2_topk({0, 1, 0}, 1);
  EXPECT_EQ(l2[0].id, 2);
  EXPECT_DOUBLE_EQ(l2[0].score, 0.0);
  EXPECT_EQ(idx.l2_topk({0, 1, 0}, 99).size(), 3u);
  EXPECT_TRUE(idx.cosine_topk({1, 1, 1}, 0).empty());
  EXPECT_THROW(idx.cosine_topk({1, 1}, 1), std::invalid_argument);
}

TEST(Index, TiesByAscendingId) {
  VectorIndex idx(2, "t");
  for (std::int64_t id : {9, 3, 7, 1}) idx.add(id, std::vector<float>{1, 1});
  EXPECT_EQ(ids_of(idx.cosine_topk({1, 1}, 4)), (std::vector<std::int64_t>{1, 3, 7, 9}));
  EXPECT_EQ(ids_of(idx.l2_topk({0, 0}, 2)), (std::vector<std::int64_t>{1, 3}));
}

TEST(Index, Filter) {
  VectorIndex idx(2, "t");
  idx.add(1, std::vector<float>{1, 0});
  idx.add(2, std::vector<float>{0.9F, 0.1F});
  idx.add(3, std::vector<float>{0, 1});
  std::unordered_set<std::int64_t> only{2, 3};
  EXPECT_EQ(ids_of(idx.cosine_topk({1, 0}, 5, &only)), (std::vector<std::int64_t>{2, 3}));
}

TEST(Index, RejectsMismatches) {
  VectorIndex idx(4, "hsv-hist-8x8x8");
  EXPECT_THROW(idx.add(1, std::vector<float>{1, 2}), std::invalid_argument);
  EXPECT_THROW(idx.add(1, FeatureVector{{1, 2, 3, 4}, "other"}), std::invalid_argument);
  idx.add(1, std::vector<float>{1, 2, 3, 4});
  EXPECT_THROW(idx.add(1, std::vector<float>{1, 2, 3, 4}), std::invalid_argument);
}

TEST(Index, SaveLoadByteIdentical) {
  std::mt19937_64 rng(1);
  VectorIndex idx(16, "hsv-hist-8x8x8");
  for (int i = 0; i < 50; ++i) idx.add(i * 3, random_vec(rng, 16));
  auto dir = fixture::temp_dir("index");
  idx.save(dir / "a.bin");
  auto back = VectorIndex::load(dir / "a.bin");
  EXPECT_EQ(back.size(), 50u);
  EXPECT_EQ(back.extractor_id(), "hsv-hist-8x8x8");
  EXPECT_EQ(back.vector(21), idx.vector(21));
  back.save(dir / "b.bin");
  std::ifstream a(dir / "a.bin", std::ios::binary), b(dir / "b.bin", std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(sa, sb);

  std::ofstream(dir / "bad.bin", std::ios::binary) << sa.substr(0, sa.size() - 3);
  EXPECT_THROW(VectorIndex::load(dir / "bad.bin"), FormatError);
}

TEST(Index, ImportVectors) {
  auto dir = fixture::temp_dir("import");
  std::ofstream(dir / "ok.json") << R"({"extractor_id":"vit","entries":[{"bounding_box_id":5,"vector":[1,0,0]},{"bounding_box_id":6,"vector":[0,1,0]}]})";
  auto idx = VectorIndex::import_vectors(dir / "ok.json");
  EXPECT_EQ(idx.dim(), 3u);
  EXPECT_EQ(idx.extractor_id(), "vit");
  std::ofstream(dir / "mixed.json") << R"({"extractor_id":"vit","entries":[{"bounding_box_id":5,"vector":[1,0,0]},{"bounding_box_id":6,"vector":[0,1]}]})";
  EXPECT_THROW(VectorIndex::import_vectors(dir / "mixed.json"), FormatError);
}
