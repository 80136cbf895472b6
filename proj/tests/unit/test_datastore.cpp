// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include "oceanql/data/datastore.hpp"
#include "oceanql/data/seed.hpp"
#include "oceanql/error.hpp"
#include "oceanql/sql/lexer.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <future>
#include <map>
#include <sstream>

using namespace oceanql;
using namespace oceanql::data;

namespace {

const char* kMontereyQuery = R"(SELECT TOP 1
    b.concept AS species,
    COUNT(*) AS frequency
FROM
    dbo.bounding_boxes AS b
    JOIN dbo.images AS i ON b.image_id = i.id
    JOIN dbo.marine_regions AS mr ON i.latitude
    BETWEEN mr.min_latitude AND mr.max_latitude
    AND i.longitude BETWEEN mr.min_longitude
    AND mr.max_longitude
WHERE
    mr.name = 'Monterey Bay'
    AND i.depth_meters < 5000
GROUP BY
    b.concept
ORDER BY
    frequency DESC;)";

std::vector<std::vector<std::string>> naive_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    rows.push_back(f);
  }
  return rows;
}

const Datastore& seeded() {
  static Datastore* s = [] {
    auto* d = new Datastore();
    d->load_seed(fixture::data_dir() / "seed", kg::load_concepts(fixture::data_dir() / "concepts.json"));
    return d;
  }();
  return *s;
}

void write(const std::filesystem::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::filesystem::path tiny_seed(const std::string& name, const std::string& boxes_body) {
  auto dir = fixture::temp_dir(name);
  write(dir / "marine_regions.csv", "name,min_latitude,max_latitude,min_longitude,max_longitude\nR,0,1,0,1\n");
  write(dir / "images.csv",
        "id,url,latitude,longitude,depth_meters,temperature_celsius,pressure_dbar,salinity,oxygen_ml_l,timestamp,"
        "observer\n1,u,0.5,0.5,10,4,10,34,2,2020-01-01T00:00:00Z,o\n");
  write(dir / "bounding_boxes.csv", "id,image_id,concept,x,y,width,height,verification_timestamp\n" + boxes_body);
  return dir;
}

}  // namespace

TEST(Datastore, SeedMeetsSizeFloor) {
  const auto c = seeded().counts();
  EXPECT_GE(c.images, 2000u);
  EXPECT_GE(c.bounding_boxes, 5000u);
  EXPECT_GE(c.regions, 3u);
  auto regions = seeded().regions();
  auto it = std::find_if(regions.begin(), regions.end(), [](auto& r) { return r.name == "Monterey Bay"; });
  ASSERT_NE(it, regions.end());
  EXPECT_DOUBLE_EQ(it->min_latitude, 36.5);
  EXPECT_DOUBLE_EQ(it->max_longitude, -121.7);
}

TEST(Datastore, SeedGeneratorIsDeterministic) {
  auto dir = fixture::temp_dir("seedgen");
  write_seed(dir);
  for (const char* f : {"images.csv", "bounding_boxes.csv", "marine_regions.csv"}) {
    std::ifstream a(dir / f), b(fixture::data_dir() / "seed" / f);
    std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    EXPECT_TRUE(sa == sb) << f;
  }
}

TEST(Datastore, MontereyQueryMatchesCsvScan) {
  // Oracle: plain scan of the seed CSVs.
  const auto dir = fixture::data_dir() / "seed";
  std::map<std::string, std::array<double, 3>> img;
  for (const auto& r : naive_csv(dir / "images.csv")) img[r[0]] = {std::stod(r[2]), std::stod(r[3]), std::stod(r[4])};
  std::array<double, 4> mb{};
  for (const auto& r : naive_csv(dir / "marine_regions.csv")) {
    if (r[0] == "Monterey Bay") mb = {std::stod(r[1]), std::stod(r[2]), std::stod(r[3]), std::stod(r[4])};
  }
  std::map<std::string, std::int64_t> counts;
  for (const auto& r : naive_csv(dir / "bounding_boxes.csv")) {
    const auto& [lat, lon, depth] = img.at(r[1]);
    if (lat >= mb[0] && lat <= mb[1] && lon >= mb[2] && lon <= mb[3] && depth < 5000) ++counts[r[2]];
  }
  auto best = std::max_element(counts.begin(), counts.end(), [](auto& a, auto& b) { return a.second < b.second; });

  auto t = seeded().run_readonly(kMontereyQuery);
  ASSERT_EQ(t.rows.size(), 1u);
  ASSERT_EQ(t.columns.size(), 2u);
  EXPECT_EQ(t.columns[0].name, "species");
  EXPECT_EQ(t.columns[1].name, "frequency");
  EXPECT_EQ(to_display(t.rows[0][0]), "Strongylocentrotus fragilis");
  EXPECT_EQ(best->first, "Strongylocentrotus fragilis");
  EXPECT_EQ(std::get<std::int64_t>(t.rows[0][1]), best->second);
}

TEST(Datastore, RegionContainmentMatchesJoin) {
  auto regions = seeded().regions();
  auto t = seeded().run_readonly(
      "SELECT i.id, mr.name FROM images i JOIN marine_regions mr ON i.latitude BETWEEN mr.min_latitude AND "
      "mr.max_latitude AND i.longitude BETWEEN mr.min_longitude AND mr.max_longitude ORDER BY i.id, mr.name",
      kDefaultTimeout, 100000);
  std::set<std::pair<std::int64_t, std::string>> sql_pairs;
  for (const auto& r : t.rows) sql_pairs.insert({std::get<std::int64_t>(r[0]), std::get<std::string>(r[1])});
  auto all = seeded().run_readonly("SELECT id, latitude, longitude FROM images", kDefaultTimeout, 100000);
  std::set<std::pair<std::int64_t, std::string>> ours;
  for (const auto& r : all.rows) {
    for (const auto& reg : regions) {
      if (reg.contains(std::get<double>(r[1]), std::get<double>(r[2]))) ours.insert({std::get<std::int64_t>(r[0]), reg.name});
    }
  }
  EXPECT_EQ(ours, sql_pairs);
  EXPECT_GT(ours.size(), 1000u);
}

TEST(Datastore, AureliaClusterAndOutlier) {
  auto t = seeded().run_readonly(
      "SELECT i.observer, COUNT(*) FROM bounding_boxes b JOIN images i ON b.image_id = i.id WHERE b.concept = "
      "'Aurelia aurita' AND i.latitude < 30 GROUP BY i.observer");
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(to_display(t.rows[0][0]), kOutlierObserver);
  auto other = seeded().run_readonly("SELECT COUNT(*) FROM images WHERE observer = '" + std::string(kOutlierObserver) + "'");
  EXPECT_EQ(std::get<std::int64_t>(other.rows[0][0]), 1);
}

TEST(Datastore, SimpleSelectAndTruncation) {
  auto t = seeded().run_readonly("SELECT 1 AS x");
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.columns[0].name, "x");
  EXPECT_EQ(std::get<std::int64_t>(t.rows[0][0]), 1);
  EXPECT_FALSE(t.truncated);

  auto cut = seeded().run_readonly("SELECT id FROM images ORDER BY id LIMIT 11", kDefaultTimeout, 10);
  EXPECT_EQ(cut.rows.size(), 10u);
  EXPECT_TRUE(cut.truncated);
  auto exact = seeded().run_readonly("SELECT id FROM images ORDER BY id LIMIT 10", kDefaultTimeout, 10);
  EXPECT_FALSE(exact.truncated);
  auto dflt = seeded().run_readonly("SELECT id FROM images");
  EXPECT_EQ(dflt.rows.size(), kDefaultRowCap);
  EXPECT_TRUE(dflt.truncated);
}

TEST(Datastore, EngineRefusesWrites) {
  const auto before = seeded().counts();
  for (const char* sql : {"DELETE FROM images", "INSERT INTO marine_regions VALUES ('x',0,1,0,1)",
                          "UPDATE images SET depth_meters = 0", "DROP TABLE bounding_boxes",
                          "CREATE TABLE t (a)", "ATTACH DATABASE ':memory:' AS other", "PRAGMA query_only = 0",
                          "SELECT 1; DELETE FROM images", "VACUUM"}) {
    EXPECT_THROW(seeded().run_readonly(sql), SqlExecutionError) << sql;
  }
  const auto after = seeded().counts();
  EXPECT_EQ(before.images, after.images);
  EXPECT_EQ(before.regions, after.regions);
}

TEST(Datastore, RuntimeErrorIsVerbatim) {
  try {
    seeded().run_readonly("SELECT nope FROM images");
    FAIL();
  } catch (const SqlExecutionError& e) {
    EXPECT_STREQ(e.what(), "no such column: nope");
  }
}

TEST(Datastore, Timeout) {
  EXPECT_THROW(seeded().run_readonly("WITH RECURSIVE c(n) AS (SELECT 1 UNION ALL SELECT n + 1 FROM c) "
                                     "SELECT MAX(n) FROM c",
                                     std::chrono::milliseconds(50)),
               QueryTimeout);
  // Reader still usable afterwards.
  EXPECT_EQ(seeded().run_readonly("SELECT 2").rows.size(), 1u);
}

TEST(Datastore, ConcurrentReaders) {
  std::vector<std::future<std::string>> fs;
  for (int i = 0; i < 8; ++i) {
    fs.push_back(std::async(std::launch::async, [] { return to_display(seeded().run_readonly(kMontereyQuery).rows[0][0]); }));
  }
  for (auto& f : fs) EXPECT_EQ(f.get(), "Strongylocentrotus fragilis");
}

TEST(Datastore, LoadErrors) {
  {
    Datastore d;
    EXPECT_THROW(d.load_seed(tiny_seed("dangling", "1,99,Mola mola,0,0,5,5,t\n")), FormatError);
    EXPECT_FALSE(d.loaded());
  }
  {
    Datastore d;
    try {
      d.load_seed(tiny_seed("badrow", "1,1,Mola mola,0,0,5,5,t\n2,1,Mola mola,0,0,zero,5,t\n"));
      FAIL();
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find("bounding_boxes.csv row 3"), std::string::npos) << e.what();
    }
  }
  {
    Datastore d;
    EXPECT_THROW(d.load_seed(tiny_seed("unknown", "1,1,Glorbus,0,0,5,5,t\n"), {"Mola mola"}), FormatError);
  }
  {
    Datastore d;
    d.load_seed(tiny_seed("twice", "1,1,Mola mola,0,0,5,5,t\n"));
    EXPECT_EQ(d.counts().bounding_boxes, 1u);
    EXPECT_THROW(d.load_seed(tiny_seed("twice2", "")), std::logic_error);
  }
}

TEST(Datastore, Lookups) {
  auto img = seeded().image(1);
  ASSERT_TRUE(img);
  EXPECT_EQ(img->url, "/api/images/1/image");
  auto boxes = seeded().boxes_for_image(1);
  ASSERT_FALSE(boxes.empty());
  EXPECT_EQ(seeded().bounding_box(boxes[0].id)->image_id, 1);
  EXPECT_FALSE(seeded().image(999999));
  EXPECT_EQ(seeded().all_bounding_boxes().size(), seeded().counts().bounding_boxes);
  EXPECT_EQ(seeded().result_columns("SELECT id AS a, concept FROM bounding_boxes"),
            (std::vector<std::string>{"a", "concept"}));
}

TEST(Dialect, TopBecomesLimit) {
  EXPECT_EQ(sql::to_sqlite_dialect("SELECT TOP 5 a FROM t"), "SELECT  a FROM t LIMIT 5");
  EXPECT_EQ(sql::to_sqlite_dialect("SELECT DISTINCT TOP (3) a FROM t ORDER BY a;"),
            "SELECT DISTINCT  a FROM t ORDER BY a LIMIT 3;");
  EXPECT_EQ(sql::to_sqlite_dialect("SELECT a FROM (SELECT TOP 2 a FROM t) s"),
            "SELECT a FROM (SELECT  a FROM t LIMIT 2) s");
  EXPECT_EQ(sql::to_sqlite_dialect("SELECT 'TOP 5' FROM dbo.t"), "SELECT 'TOP 5' FROM t");
  EXPECT_EQ(sql::to_sqlite_dialect("SELECT * FROM [dbo].[images]"), "SELECT * FROM \"images\"");
}

TEST(Lexer, TokensAndErrors) {
  auto t = sql::tokenize("SELECT a.b, 'it''s' -- c\n/* d */ FROM \"x y\" WHERE n >= 1.5e3");
  ASSERT_EQ(t.size(), 12u);
  EXPECT_TRUE(t[0].is_word("SELECT"));
  EXPECT_EQ(t[5].kind, sql::TokenKind::String);
  EXPECT_EQ(t[5].text, "it's");
  EXPECT_EQ(t[7].kind, sql::TokenKind::QuotedIdent);
  EXPECT_EQ(t[7].text, "x y");
  EXPECT_TRUE(t[10].is_punct(">="));
  EXPECT_EQ(t[11].text, "1.5e3");
  EXPECT_THROW(sql::tokenize("SELECT 'open"), sql::LexError);
  EXPECT_THROW(sql::tokenize("SELECT /* open"), sql::LexError);
}
