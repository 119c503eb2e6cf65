#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mvre/rng.hpp"
#include "mvre/tabular/csv.hpp"
#include "mvre/tabular/encode.hpp"
#include "mvre/tabular/split.hpp"

using namespace mvre;
using namespace mvre::tabular;

namespace {

DatasetSchema small_schema() {
  DatasetSchema s;
  s.numeric_fields = {"square_feet"};
  s.categorical_fields = {{"condition", {"A", "B", "C"}}};
  s.target_field = "totalmarketvalue";
  s.locality_field = "city";
  return s;
}

HouseRecord rec(double sqft, std::string cond, std::string city = "L0", double price = 1e5) {
  HouseRecord r;
  r.id = std::to_string(sqft) + cond;
  r.numeric["square_feet"] = sqft;
  r.categorical["condition"] = std::move(cond);
  r.locality = std::move(city);
  r.target = price;
  return r;
}

}  // namespace

TEST(Schema, Validation) {
  auto s = small_schema();
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(s.encoded_width(), 4u);
  auto dup = s;
  dup.numeric_fields.push_back("condition");
  EXPECT_THROW(dup.validate(), InvalidArgument);
  auto empty_vocab = s;
  empty_vocab.categorical_fields[0].vocabulary.clear();
  EXPECT_THROW(empty_vocab.validate(), InvalidArgument);
  auto target_feature = s;
  target_feature.target_field = "square_feet";
  EXPECT_THROW(target_feature.validate(), InvalidArgument);
  EXPECT_EQ(DatasetSchema::from_json(s.to_json()), s);
}

TEST(FitTransform, MinMaxEndpoints) {
  std::vector<HouseRecord> rs{rec(10, "A"), rec(20, "A"), rec(30, "A")};
  auto [fm, stats] = fit_transform(rs, small_schema());
  EXPECT_EQ(fm.column(0), (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_EQ(stats.ranges[0].min, 10.0);
  EXPECT_EQ(stats.ranges[0].max, 30.0);
}

TEST(FitTransform, ConstantColumnMapsToZero) {
  std::vector<HouseRecord> rs{rec(5, "A"), rec(5, "B")};
  auto [fm, stats] = fit_transform(rs, small_schema());
  EXPECT_EQ(fm.column(0), (std::vector<double>{0.0, 0.0}));
}

TEST(FitTransform, OneHot) {
  std::vector<HouseRecord> rs{rec(1, "B")};
  auto [fm, stats] = fit_transform(rs, small_schema());
  EXPECT_EQ(fm.cols, 4u);
  EXPECT_EQ(fm.at(0, 1), 0.0);
  EXPECT_EQ(fm.at(0, 2), 1.0);
  EXPECT_EQ(fm.at(0, 3), 0.0);
  EXPECT_EQ(fm.column_names[2], "condition=B");
}

TEST(FitTransform, Errors) {
  std::vector<HouseRecord> none;
  EXPECT_THROW(fit_transform(none, small_schema()), InvalidArgument);
  auto r = rec(1, "A");
  r.numeric.clear();
  std::vector<HouseRecord> missing{r};
  EXPECT_THROW(fit_transform(missing, small_schema()), DataError);
  std::vector<HouseRecord> nan{rec(std::nan(""), "A")};
  EXPECT_THROW(fit_transform(nan, small_schema()), DataError);
}

TEST(Transform, UsesTrainStatsWithoutClamping) {
  std::vector<HouseRecord> train{rec(10, "A"), rec(30, "C")};
  auto [fm, stats] = fit_transform(train, small_schema());
  std::vector<HouseRecord> test{rec(40, "A"), rec(10, "A"), rec(20, "D")};
  auto t = transform(test, small_schema(), stats);
  EXPECT_DOUBLE_EQ(t.at(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(t.at(1, 0), 0.0);
  EXPECT_EQ(t.at(2, 1) + t.at(2, 2) + t.at(2, 3), 0.0);  // unseen category
}

TEST(Transform, StatsDependOnlyOnTrainRows) {
  Rng rng(3);
  std::vector<HouseRecord> all;
  for (int i = 0; i < 50; ++i) all.push_back(rec(rng.uniform(100, 200), i % 2 ? "A" : "B"));
  auto p = split_random(all_indices(all.size()), 0.8, 4);
  std::vector<HouseRecord> train, test;
  for (auto i : p.first) train.push_back(all[i]);
  for (auto i : p.second) test.push_back(all[i]);
  auto [fm1, stats1] = fit_transform(train, small_schema());
  for (auto& r : test) r.numeric["square_feet"] *= 1000.0;
  auto [fm2, stats2] = fit_transform(train, small_schema());
  EXPECT_EQ(stats1, stats2);
  for (double v : fm1.column(0)) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Transform, OneHotGroupHasAtMostOneOne) {
  Rng rng(8);
  const std::vector<std::string> levels{"A", "B", "C", "Z"};
  std::vector<HouseRecord> rs;
  for (int i = 0; i < 40; ++i) rs.push_back(rec(rng.uniform(), levels[rng.below(4)]));
  auto [fm, stats] = fit_transform(rs, small_schema());
  for (std::size_t r = 0; r < fm.rows; ++r) {
    double s = 0;
    for (std::size_t c = 1; c < 4; ++c) s += fm.at(r, c);
    EXPECT_LE(s, 1.0);
  }
}

TEST(LogTarget, TableMeanAndInverse) {
  EXPECT_NEAR(log_target(275049.91), 12.524707851090316, 1e-12);
  EXPECT_NEAR(log_target(275049.91), 12.5246, 2e-4);
  EXPECT_EQ(log_target(1.0), 0.0);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(1e-6, 1e7);
    EXPECT_NEAR(inv_log_target(log_target(x)) / x, 1.0, 1e-9);
  }
  EXPECT_THROW(log_target(0.0), InvalidArgument);
  EXPECT_THROW(log_target(-5.0), InvalidArgument);
}

TEST(SplitGeographic, PartitionsByLocality) {
  std::vector<HouseRecord> rs;
  std::vector<int> counts(5, 0);
  Rng rng(2);
  for (int i = 0; i < 300; ++i) {
    const auto l = rng.below(5);
    ++counts[l];
    rs.push_back(rec(i, "A", "L" + std::to_string(l)));
  }
  auto p = split_geographic(rs, {"L4"});
  EXPECT_EQ(p.second.size(), static_cast<std::size_t>(counts[4]));
  EXPECT_EQ(p.first.size() + p.second.size(), rs.size());
  for (auto i : p.second) EXPECT_EQ(*rs[i].locality, "L4");
  EXPECT_THROW(split_geographic(rs, {}), InvalidArgument);
  EXPECT_THROW(split_geographic(rs, {"L0", "L1", "L2", "L3", "L4"}), InvalidArgument);
}

TEST(SplitRandom, SizesAndDeterminism) {
  auto p = split_random(all_indices(10), 0.8, 1);
  EXPECT_EQ(p.first.size(), 8u);
  EXPECT_EQ(p.second.size(), 2u);
  auto big = split_random(all_indices(2000), 0.8, 7);
  EXPECT_EQ(big.first.size(), 1600u);
  EXPECT_EQ(big.second.size(), 400u);
  auto again = split_random(all_indices(2000), 0.8, 7);
  EXPECT_EQ(big.first, again.first);
  EXPECT_THROW(split_random(all_indices(1), 0.8, 1), InvalidArgument);
  EXPECT_THROW(split_random(all_indices(10), 1.0, 1), InvalidArgument);
}

TEST(SplitProtocol, ThreeWayPartitionIsDisjointAndExhaustive) {
  std::vector<HouseRecord> rs;
  for (int i = 0; i < 97; ++i) rs.push_back(rec(i, "A", "L" + std::to_string(i % 4)));
  auto geo = split_geographic(rs, {"L1"});
  auto tv = split_random(geo.first, 0.8, 3);
  std::vector<int> seen(rs.size(), 0);
  for (auto i : tv.first) ++seen[i];
  for (auto i : tv.second) ++seen[i];
  for (auto i : geo.second) ++seen[i];
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Csv, ParseAndWrite) {
  auto schema = small_schema();
  std::vector<HouseRecord> rs{rec(1500, "A", "Asheville", 250000.5), rec(2100.25, "C", "Woodfin, NC", 1e6)};
  rs[0].lat = 35.595;
  rs[0].lon = -82.5515;
  std::stringstream ss;
  write_csv(ss, rs, schema);
  auto back = parse_csv(ss, schema);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].numeric["square_feet"], 1500);
  EXPECT_EQ(back[1].numeric["square_feet"], 2100.25);
  EXPECT_EQ(*back[1].locality, "Woodfin, NC");
  EXPECT_EQ(*back[0].target, 250000.5);
  EXPECT_EQ(*back[0].lat, 35.595);
  EXPECT_FALSE(back[1].lat.has_value());

  std::stringstream bad("square_feet,city\n1,x\n");
  EXPECT_THROW(parse_csv(bad, schema), DataError);
  std::stringstream badnum("id,square_feet,condition,city,totalmarketvalue\n1,abc,A,L0,5\n");
  EXPECT_THROW(parse_csv(badnum, schema), DataError);
}
