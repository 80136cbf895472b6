// SPDX-License-Identifier: Apache-2.0
#include "oceanql/data/seed.hpp"

#include "oceanql/error.hpp"
#include "oceanql/vision/synth.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <random>
#include <vector>

namespace oceanql::data {

namespace {

struct Species {
  const char* name;
  double min_depth, max_depth;
  int weight;
};

// Weights shape the example prompts: Strongylocentrotus fragilis dominates
// Monterey Bay above 5000 m.
constexpr Species kSpecies[] = {
    {"Apostichopus californicus", 10, 400, 3},   {"Bathochordaeus stygius", 100, 400, 3},
    {"Bathyraja abyssicola", 800, 2900, 3},      {"Chionoecetes tanneri", 500, 2000, 4},
    {"Chrysaora fuscescens", 0, 100, 3},         {"Embassichthys bathybius", 700, 1600, 3},
    {"Graneledone boreopacifica", 1200, 3000, 2}, {"Hexanchus griseus", 200, 1100, 1},
    {"Merluccius productus", 50, 500, 4},        {"Metridium farcimen", 10, 300, 3},
    {"Mola mola", 0, 200, 2},                    {"Octopus rubescens", 10, 300, 2},
    {"Phacellophora camtschatica", 0, 200, 2},   {"Praya dubia", 300, 900, 2},
    {"Pycnopodia helianthoides", 5, 400, 2},     {"Rathbunaster californicus", 200, 1600, 3},
    {"Sebastes miniatus", 30, 250, 3},           {"Sebastes mystinus", 0, 80, 3},
    {"Sebastolobus alascanus", 300, 1600, 4},    {"Solmissus incisa", 400, 1200, 2},
    {"Stenobrachius leucopsarus", 300, 1000, 3}, {"Strongylocentrotus fragilis", 200, 1200, 14},
    {"Tarletonbeania crenularis", 100, 700, 2},  {"Vampyroteuthis infernalis", 600, 1200, 2},
};

struct Region {
  const char* name;
  double min_lat, max_lat, min_lon, max_lon;
  int weight;
};

constexpr Region kRegions[] = {
    {"Gulf of the Farallones", 37.5, 38.2, -123.3, -122.5, 2},
    {"Hawaiian Islands", 18.5, 22.5, -160.5, -154.5, 1},
    {"Monterey Bay", 36.5, 37.0, -122.1, -121.7, 10},
    {"Southern California Bight", 32.5, 34.5, -120.5, -117.0, 3},
};

const char* const kObservers[] = {"A. Rivera", "B. Chen", "C. Okafor", "D. Lindqvist", "E. Moreau", "F. Tanaka"};

// Own mapping from raw engine output: <random> distributions differ between
// standard libraries, the engine itself does not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }
  int range(int a, int b) { return a + static_cast<int>(index(static_cast<std::size_t>(b - a + 1))); }
  double normal() {
    double u1 = uniform();
    while (u1 <= 0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * uniform());
  }
  template <class T, std::size_t N>
  std::size_t weighted(const T (&items)[N]) {
    int total = 0;
    for (const auto& it : items) total += it.weight;
    int r = static_cast<int>(index(static_cast<std::size_t>(total)));
    for (std::size_t i = 0; i < N; ++i) {
      if ((r -= items[i].weight) < 0) return i;
    }
    return N - 1;
  }

 private:
  std::mt19937_64 eng_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string iso_utc(std::int64_t epoch) {
  const std::time_t t = static_cast<std::time_t>(epoch);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Env {
  double temperature, pressure, salinity, oxygen;
};

Env environment(double depth, Rng& rng) {
  Env e;
  e.temperature = 2.0 + 11.5 * std::exp(-depth / 450.0) + 0.4 * rng.normal();
  e.pressure = depth * 1.0093 + 0.5 * std::fabs(rng.normal());
  e.salinity = 33.2 + 1.35 * (1.0 - std::exp(-depth / 700.0)) + 0.05 * rng.normal();
  // Oxygen minimum near 700 m.
  e.oxygen = std::max(0.05, 5.8 - 5.4 * std::exp(-std::pow((depth - 700.0) / 450.0, 2)) -
                                1.2 * (1.0 - std::exp(-depth / 150.0)) + 0.1 * rng.normal());
  return e;
}

}  // namespace

void write_seed(const std::filesystem::path& dir, const SeedParams& params) {
  std::filesystem::create_directories(dir);
  Rng rng(params.seed);

  std::ofstream regions(dir / "marine_regions.csv", std::ios::binary | std::ios::trunc);
  regions << "name,min_latitude,max_latitude,min_longitude,max_longitude\n";
  for (const auto& r : kRegions) {
    regions << r.name << ',' << fmt("%.4f", r.min_lat) << ',' << fmt("%.4f", r.max_lat) << ','
            << fmt("%.4f", r.min_lon) << ',' << fmt("%.4f", r.max_lon) << '\n';
  }

  std::ofstream images(dir / "images.csv", std::ios::binary | std::ios::trunc);
  std::ofstream boxes(dir / "bounding_boxes.csv", std::ios::binary | std::ios::trunc);
  images << "id,url,latitude,longitude,depth_meters,temperature_celsius,pressure_dbar,salinity,oxygen_ml_l,"
            "timestamp,observer\n";
  boxes << "id,image_id,concept,x,y,width,height,verification_timestamp\n";
  if (!regions || !images || !boxes) throw FormatError("cannot write seed files to " + dir.string());

  const std::int64_t t0 = 1262304000;  // 2010-01-01
  const std::int64_t span = 13LL * 365 * 86400;
  std::int64_t box_id = 0;

  auto emit_image = [&](std::int64_t id, double lat, double lon, double depth, const std::string& observer,
                        const std::vector<std::string>& concepts) {
    const auto env = environment(depth, rng);
    const std::int64_t ts = t0 + static_cast<std::int64_t>(rng.uniform() * static_cast<double>(span));
    images << id << ",/api/images/" << id << "/image," << fmt("%.5f", lat) << ',' << fmt("%.5f", lon) << ','
           << fmt("%.1f", depth) << ',' << fmt("%.2f", env.temperature) << ',' << fmt("%.1f", env.pressure) << ','
           << fmt("%.3f", env.salinity) << ',' << fmt("%.2f", env.oxygen) << ',' << iso_utc(ts) << ',' << observer
           << '\n';
    for (const auto& c : concepts) {
      const int w = rng.range(24, 80), h = rng.range(20, 64);
      const int x = rng.range(0, vision::kSceneWidth - w), y = rng.range(0, vision::kSceneHeight - h);
      const std::int64_t vts = ts + rng.range(1, 400) * 86400LL;
      boxes << ++box_id << ',' << id << ',' << c << ',' << x << ',' << y << ',' << w << ',' << h << ','
            << iso_utc(vts) << '\n';
    }
  };

  std::int64_t image_id = 0;
  const std::size_t regular = params.images - params.aurelia_cluster - 1;
  for (std::size_t n = 0; n < regular; ++n) {
    const auto& sp = kSpecies[rng.weighted(kSpecies)];
    double lat, lon;
    if (rng.uniform() < 0.1) {
      // Open ocean, outside every region.
      lat = rng.uniform(28.0, 31.0);
      lon = rng.uniform(-135.0, -125.0);
    } else {
      const auto& r = kRegions[rng.weighted(kRegions)];
      lat = rng.uniform(r.min_lat, r.max_lat);
      lon = rng.uniform(r.min_lon, r.max_lon);
    }
    const double depth = rng.uniform(sp.min_depth, sp.max_depth);
    std::vector<std::string> concepts{sp.name};
    const int extra = rng.range(0, 3);
    for (int e = 0; e < extra; ++e) {
      if (rng.uniform() < 0.6) {
        concepts.emplace_back(sp.name);
        continue;
      }
      const auto& other = kSpecies[rng.index(std::size(kSpecies))];
      concepts.emplace_back(depth >= other.min_depth && depth <= other.max_depth ? other.name : sp.name);
    }
    emit_image(++image_id, lat, lon, depth, kObservers[rng.index(std::size(kObservers))], concepts);
  }

  // Shallow Aurelia aurita aggregation inside Monterey Bay.
  for (std::size_t n = 0; n < params.aurelia_cluster; ++n) {
    const double lat = 36.60 + 0.05 * rng.uniform();
    const double lon = -121.92 + 0.06 * rng.uniform();
    std::vector<std::string> concepts(static_cast<std::size_t>(rng.range(1, 3)), "Aurelia aurita");
    emit_image(++image_id, lat, lon, rng.uniform(1.0, 30.0), kObservers[rng.index(std::size(kObservers))],
               concepts);
  }
  // One far outlier, reported by an observer seen nowhere else.
  emit_image(++image_id, 21.2847, -157.8368, 4.0, kOutlierObserver, {"Aurelia aurita"});

  if (!images || !boxes) throw FormatError("write failed for seed files in " + dir.string());
}

}  // namespace oceanql::data
