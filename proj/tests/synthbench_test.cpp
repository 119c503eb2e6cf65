#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mvre/strategies/linear.hpp"
#include "mvre/synthbench/synth.hpp"

namespace fs = std::filesystem;
using namespace mvre;
using namespace mvre::synthbench;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mvre_synth_" + name + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  fs::remove_all(p);
  return p;
}

double mean_abs(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

// Fits LR on the first 70% of rows of the given columns, returns log-space
// MAE on the rest.
double holdout_mae(const std::vector<std::vector<double>>& columns, const std::vector<double>& y) {
  const std::size_t n = y.size();
  const std::size_t n_train = n * 7 / 10;
  const std::size_t d = columns.size();
  std::vector<double> xtr;
  std::vector<double> xte;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < d; ++c) names.push_back("c" + std::to_string(c));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) (r < n_train ? xtr : xte).push_back(columns[c][r]);
  const auto fit = strategies::fit_linear_regression(xtr, n_train, d, std::span(y).first(n_train), names);
  const auto pred = fit.predict(xte, n - n_train);
  return mean_abs(pred, std::vector<double>(y.begin() + static_cast<std::ptrdiff_t>(n_train), y.end()));
}

std::vector<std::vector<double>> unit_columns(const SynthDataset& ds) {
  const std::size_t w = ds.config.encoded_width();
  std::vector<std::vector<double>> cols(w);
  for (std::size_t r = 0; r < ds.records.size(); ++r)
    for (std::size_t c = 0; c < w; ++c) cols[c].push_back(ds.x_unit[r * w + c]);
  return cols;
}

}  // namespace

TEST(SynthConfig, RejectsInvalid) {
  SynthConfig c;
  c.n = 9;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.sigma = -0.1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.beta = {1.0, 2.0};
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.beta.assign(c.encoded_width(), 0.5);
  EXPECT_NO_THROW(c.validate());
}

TEST(Synth, SameSeedIsByteIdentical) {
  SynthConfig c;
  c.n = 40;
  c.image_size = 16;
  const auto a = temp_dir("a");
  const auto b = temp_dir("b");
  write_dataset(generate(c), a);
  write_dataset(generate(c), b);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto other = b / fs::relative(e.path(), a);
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(slurp(e.path()), slurp(other)) << e.path();
  }
  EXPECT_EQ(files, 3u + 40u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Synth, DifferentSeedsDiffer) {
  SynthConfig c;
  c.n = 20;
  auto a = generate(c);
  c.seed = 8;
  auto b = generate(c);
  EXPECT_NE(a.q, b.q);
}

TEST(Synth, NoiselessRecoversBeta) {
  SynthConfig c;
  c.n = 200;
  c.gamma = 0.0;
  c.sigma = 0.0;
  c.locality_as_feature = false;
  const auto ds = generate(c);
  const std::size_t w = c.encoded_width();
  std::vector<std::string> names(w);
  for (std::size_t i = 0; i < w; ++i) names[i] = "x" + std::to_string(i);
  const auto fit = strategies::fit_linear_regression(ds.x_unit, c.n, w, ds.log_price, names);
  for (std::size_t j = 0; j < c.d_num; ++j) EXPECT_NEAR(fit.weights[j], ds.beta[j], 1e-6);
  // The last level of the one-hot group is absorbed by the intercept.
  ASSERT_EQ(fit.dropped.size(), 1u);
  const std::size_t base = c.d_num;
  const double last = ds.beta[base + 2];
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(fit.weights[base + k], ds.beta[base + k] - last, 1e-6);
  EXPECT_NEAR(fit.intercept, c.beta0 + last, 1e-6);
  // Raw prices are exactly exp of the law.
  for (std::size_t i = 0; i < c.n; ++i) EXPECT_NEAR(std::log(*ds.records[i].target), ds.log_price[i], 1e-12);
}

TEST(Synth, DiskCountFollowsQ) {
  SynthConfig c;
  c.n = 100;
  const auto ds = generate(c);
  for (std::size_t i = 0; i < c.n; ++i) EXPECT_EQ(ds.disks[i], static_cast<std::size_t>(std::lround(10 * ds.q[i])));
}

TEST(Render, Endpoints) {
  Rng rng(3);
  const auto empty = render_disks(32, 0, rng);
  EXPECT_EQ(oracle_quality(empty), 0.0);
  const auto full = render_disks(32, 10, rng);
  EXPECT_DOUBLE_EQ(oracle_quality(full), 1.0);
  std::size_t bright = 0;
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) bright += full.at(y, x, 1) > kBrightThreshold;
  EXPECT_EQ(bright, 10 * disk_area(32));
  EXPECT_EQ(disk_area(32), 13u);
  EXPECT_TRUE(full.in_unit_range());
}

TEST(Render, ChannelOneDominatesDisks) {
  Rng rng(4);
  const auto img = render_disks(32, 5, rng);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x)
      if (img.at(y, x, 1) > kBrightThreshold) {
        EXPECT_GT(img.at(y, x, 1), img.at(y, x, 0));
        EXPECT_GT(img.at(y, x, 1), img.at(y, x, 2));
      }
}

TEST(Oracle, AuditOverGeneratedImages) {
  SynthConfig c;
  c.n = 100;
  const auto ds = generate(c);
  double worst = 0.0;
  for (std::size_t i = 0; i < c.n; ++i) worst = std::max(worst, std::abs(oracle_quality(ds.images[i]) - ds.q[i]));
  EXPECT_LE(worst, 0.05);
}

TEST(Oracle, SurvivesPngRoundTrip) {
  Rng rng(5);
  for (std::size_t k = 0; k <= 10; ++k) {
    const auto img = render_disks(32, k, rng);
    EXPECT_DOUBLE_EQ(oracle_quality(geotile::decode_png(geotile::encode_png(img))), k / 10.0);
  }
}

TEST(BayesMae, ClosedForm) {
  EXPECT_EQ(bayes_mae(0.0), 0.0);
  EXPECT_NEAR(bayes_mae(0.1), 0.0797884560802865, 1e-15);
  EXPECT_NEAR(bayes_mae(0.2), 0.159576912160573, 1e-15);
  EXPECT_NEAR(bayes_mae(0.1), 0.0798, 5e-5);
  EXPECT_NEAR(bayes_mae(0.2), 0.1596, 5e-5);
  EXPECT_THROW(bayes_mae(-1.0), InvalidArgument);
}

TEST(BayesMae, MatchesEmpiricalNoise) {
  Rng rng(11);
  double s = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) s += std::abs(0.1 * rng.normal());
  EXPECT_NEAR(s / n, bayes_mae(0.1), 1e-3);
}

TEST(Synth, LocalityBands) {
  SynthConfig c;
  c.n = 300;
  c.locality_fidelity = 1.0;
  const auto ds = generate(c);
  for (std::size_t i = 0; i < c.n; ++i) {
    const auto band = std::min<std::size_t>(static_cast<std::size_t>(ds.q[i] * 5), 4);
    EXPECT_EQ(*ds.records[i].locality, locality_name(band));
    EXPECT_EQ(ds.records[i].categorical.at("city"), *ds.records[i].locality);
  }
}

TEST(Synth, UniqueTilesNearAsheville) {
  SynthConfig c;
  c.n = 150;
  const auto ds = generate(c);
  std::set<std::string> keys;
  for (std::size_t i = 0; i < c.n; ++i) {
    keys.insert(ds.quadkeys[i].str());
    EXPECT_EQ(geotile::record_quadkey(ds.records[i]), ds.quadkeys[i]);
    EXPECT_NEAR(*ds.records[i].lat, 35.6, 0.1);
    EXPECT_NEAR(*ds.records[i].lon, -82.55, 0.1);
  }
  EXPECT_EQ(keys.size(), c.n);
}

TEST(Synth, WrittenDatasetReadsBack) {
  SynthConfig c;
  c.n = 25;
  const auto ds = generate(c);
  const auto dir = temp_dir("rt");
  write_dataset(ds, dir);
  std::ifstream sj(dir / "schema.json");
  const auto schema = tabular::DatasetSchema::from_json(nlohmann::json::parse(sj));
  EXPECT_EQ(schema, ds.schema);
  const auto recs = tabular::read_csv(dir / "data.csv", schema);
  ASSERT_EQ(recs.size(), ds.records.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i].id, ds.records[i].id);
    EXPECT_EQ(recs[i].numeric, ds.records[i].numeric);
    EXPECT_EQ(recs[i].categorical, ds.records[i].categorical);
    EXPECT_EQ(recs[i].target, ds.records[i].target);
    EXPECT_EQ(recs[i].locality, ds.records[i].locality);
    const auto img = geotile::read_png(geotile::DirectoryStore::tile_path(dir / "tiles", geotile::record_quadkey(recs[i])));
    ASSERT_EQ(img.data.size(), ds.images[i].data.size());
    for (std::size_t k = 0; k < img.data.size(); ++k) EXPECT_NEAR(img.data[k], ds.images[i].data[k], 0.5 / 255 + 1e-12);
  }
  fs::remove_all(dir);
}

TEST(SynthProperties, InformationOrderingAndImageSufficiency) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SynthConfig c;
    c.n = 1000;
    c.seed = seed;
    const auto ds = generate(c);
    const auto base = unit_columns(ds);
    auto with_q = base;
    with_q.push_back(ds.q);
    auto with_oracle = base;
    std::vector<double> qhat;
    for (const auto& im : ds.images) qhat.push_back(oracle_quality(im));
    with_oracle.push_back(qhat);
    const double mae_x = holdout_mae(base, ds.log_price);
    const double mae_q = holdout_mae(with_q, ds.log_price);
    const double mae_o = holdout_mae(with_oracle, ds.log_price);
    EXPECT_LT(mae_q, mae_x) << "seed " << seed;
    EXPECT_LE(mae_o, 1.10 * mae_q) << "seed " << seed;
  }
}
