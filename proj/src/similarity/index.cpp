// SPDX-License-Identifier: Apache-2.0
#include "oceanql/similarity/index.hpp"

#include "oceanql/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace oceanql::similarity {

std::size_t HsvHistogramExtractor::bin_of(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const auto c = vision::rgb_to_hsv(r, g, b);
  auto q = [](double x) { return std::min<std::size_t>(static_cast<std::size_t>(x * kBins), kBins - 1); };
  return (q(c.h / 360.0) * kBins + q(c.s)) * kBins + q(c.v);
}

FeatureVector HsvHistogramExtractor::extract(const vision::Image& crop) const {
  FeatureVector fv{std::vector<float>(dim(), 0.0F), id()};
  std::vector<std::uint64_t> counts(dim(), 0);
  std::uint64_t total = 0;
  for (int y = 0; y < crop.height; ++y) {
    for (int x = 0; x < crop.width; ++x) {
      const auto* p = crop.at(x, y);
      if (p[3] == 0) continue;
      ++counts[bin_of(p[0], p[1], p[2])];
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("extract_features: degenerate crop");
  for (std::size_t i = 0; i < counts.size(); ++i) {
    fv.values[i] = static_cast<float>(static_cast<double>(counts[i]) / static_cast<double>(total));
  }
  return fv;
}

FeatureVector extract_features(const vision::Image& crop) {
  static const HsvHistogramExtractor extractor;
  return extractor.extract(crop);
}

VectorIndex::VectorIndex(std::size_t dim, std::string extractor_id) : dim_(dim), extractor_id_(std::move(extractor_id)) {
  if (dim_ == 0) throw std::invalid_argument("index dimension must be positive");
}

void VectorIndex::add(std::int64_t id, const FeatureVector& v) {
  if (v.extractor_id != extractor_id_) {
    throw std::invalid_argument("extractor mismatch: " + v.extractor_id + " vs " + extractor_id_);
  }
  add(id, v.values);
}

void VectorIndex::add(std::int64_t id, std::vector<float> values) {
  if (values.size() != dim_) {
    throw std::invalid_argument("dimension mismatch: " + std::to_string(values.size()) + " vs " + std::to_string(dim_));
  }
  if (!pos_.emplace(id, ids_.size()).second) throw std::invalid_argument("duplicate id " + std::to_string(id));
  double n = 0;
  for (float x : values) n += static_cast<double>(x) * x;
  ids_.push_back(id);
  norms_.push_back(std::sqrt(n));
  data_.insert(data_.end(), values.begin(), values.end());
}

std::vector<float> VectorIndex::vector(std::int64_t id) const {
  const auto i = pos_.at(id);
  return {data_.begin() + static_cast<std::ptrdiff_t>(i * dim_),
          data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim_)};
}

void VectorIndex::check_query(const std::vector<float>& q) const {
  if (q.size() != dim_) {
    throw std::invalid_argument("query dimension " + std::to_string(q.size()) + " != " + std::to_string(dim_));
  }
}

namespace {

template <class Better>
std::vector<Hit> top(std::vector<Hit> all, std::size_t k, Better better) {
  auto cmp = [&](const Hit& a, const Hit& b) {
    if (a.score != b.score) return better(a.score, b.score);
    return a.id < b.id;
  };
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), cmp);
  all.resize(k);
  return all;
}

}  // namespace

std::vector<Hit> VectorIndex::cosine_topk(const std::vector<float>& query, std::size_t k,
                                          const std::unordered_set<std::int64_t>* filter) const {
  check_query(query);
  double qn = 0;
  for (float x : query) qn += static_cast<double>(x) * x;
  qn = std::sqrt(qn);
  std::vector<Hit> all;
  all.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (filter && !filter->count(ids_[i])) continue;
    const float* v = &data_[i * dim_];
    double dot = 0;
    for (std::size_t j = 0; j < dim_; ++j) dot += static_cast<double>(v[j]) * query[j];
    const double denom = norms_[i] * qn;
    all.push_back({ids_[i], denom > 0 ? std::clamp(dot / denom, -1.0, 1.0) : 0.0});
  }
  return top(std::move(all), k, std::greater<>());
}

std::vector<Hit> VectorIndex::l2_topk(const std::vector<float>& query, std::size_t k) const {
  check_query(query);
  std::vector<Hit> all;
  all.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const float* v = &data_[i * dim_];
    double s = 0;
    for (std::size_t j = 0; j < dim_; ++j) {
      const double d = static_cast<double>(v[j]) - query[j];
      s += d * d;
    }
    all.push_back({ids_[i], std::sqrt(s)});
  }
  return top(std::move(all), k, std::less<>());
}

namespace {

constexpr char kMagic[4] = {'O', 'Q', 'V', 'I'};
constexpr std::uint32_t kVersion = 1;

// Host order is little-endian on every supported target; the header records
// it implicitly through the magic.
template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::ifstream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("index file truncated at " + what);
  return v;
}

}  // namespace

void VectorIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(extractor_id_.size()));
  out.write(extractor_id_.data(), static_cast<std::streamsize>(extractor_id_.size()));
  put<std::uint64_t>(out, ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    put<std::int64_t>(out, ids_[i]);
    out.write(reinterpret_cast<const char*>(&data_[i * dim_]), static_cast<std::streamsize>(dim_ * sizeof(float)));
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not an index file: " + path.string());
  if (get<std::uint32_t>(in, "version") != kVersion) throw FormatError("unsupported index version");
  const auto d = get<std::uint32_t>(in, "dim");
  const auto n_ext = get<std::uint32_t>(in, "extractor");
  std::string ext(n_ext, '\0');
  if (!in.read(ext.data(), n_ext)) throw FormatError("index file truncated at extractor");
  const auto count = get<std::uint64_t>(in, "count");
  VectorIndex idx(d, ext);
  std::vector<float> v(d);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto id = get<std::int64_t>(in, "entry id");
    if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(d * sizeof(float)))) {
      throw FormatError("index file truncated at entry " + std::to_string(i));
    }
    idx.add(id, v);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in index file");
  return idx;
}

VectorIndex VectorIndex::import_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("import: " + std::string(e.what()));
  }
  const auto& entries = j.at("entries");
  if (entries.empty()) throw FormatError("import: no entries");
  const auto d = entries.at(0).at("vector").size();
  VectorIndex idx(d, j.at("extractor_id").get<std::string>());
  for (const auto& e : entries) {
    auto v = e.at("vector").get<std::vector<float>>();
    if (v.size() != d) {
      throw FormatError("import: mixed dimensions (" + std::to_string(v.size()) + " vs " + std::to_string(d) + ")");
    }
    try {
      idx.add(e.at("bounding_box_id").get<std::int64_t>(), std::move(v));
    } catch (const std::invalid_argument& ex) {
      throw FormatError(std::string("import: ") + ex.what());
    }
  }
  return idx;
}

}  // namespace oceanql::similarity
