#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "mvre/geotile/fetch.hpp"
#include "mvre/geotile/image.hpp"
#include "mvre/geotile/mock_server.hpp"
#include "mvre/geotile/tile_math.hpp"

using namespace mvre;
using namespace mvre::geotile;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("mvre_geotile_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Independent quadkey oracle: digit i is taken from the binary expansions of
// x and y written out as strings.
std::string interleave_oracle(std::uint32_t x, std::uint32_t y, int level) {
  std::string out;
  for (int i = level - 1; i >= 0; --i) out += static_cast<char>('0' + ((x >> i) & 1) + 2 * ((y >> i) & 1));
  return out;
}

}  // namespace

TEST(TileMath, OriginAndEdges) {
  EXPECT_EQ(latlon_to_tile(GeoPoint(0, 0), 1), (TileCoord{1, 1, 1}));
  EXPECT_EQ(latlon_to_tile(GeoPoint(0, -180), 1), (TileCoord{0, 1, 1}));
  EXPECT_EQ(latlon_to_tile(GeoPoint(kMaxLatitude, 179.9999), 3), (TileCoord{7, 0, 3}));
  EXPECT_THROW(latlon_to_tile(GeoPoint(0, 0), 0), InvalidArgument);
  EXPECT_THROW(latlon_to_tile(GeoPoint(0, 0), 24), InvalidArgument);
  EXPECT_THROW(GeoPoint(86.0, 0), InvalidArgument);
  EXPECT_THROW(GeoPoint(0, 180.0), InvalidArgument);
}

TEST(TileMath, AshevilleTileContainsPoint) {
  const GeoPoint p(35.5950, -82.5515);
  const auto t = latlon_to_tile(p, 16);
  EXPECT_TRUE(tile_bounds(t).contains(p));
  const auto c = tile_center(t);
  EXPECT_EQ(latlon_to_tile(c, 16), t);
}

TEST(TileMath, QuadkeyExamples) {
  EXPECT_EQ(tile_to_quadkey({0, 0, 3}).str(), "000");
  EXPECT_EQ(tile_to_quadkey({3, 5, 3}).str(), "213");
  for (std::uint32_t x = 0; x < 8; ++x)
    for (std::uint32_t y = 0; y < 8; ++y) {
      const TileCoord t{x, y, 3};
      EXPECT_EQ(tile_to_quadkey(t).str(), interleave_oracle(x, y, 3));
      EXPECT_EQ(quadkey_to_tile(tile_to_quadkey(t)), t);
    }
  EXPECT_THROW(Quadkey("0124"), InvalidArgument);
  EXPECT_THROW(Quadkey(""), InvalidArgument);
  EXPECT_THROW(tile_to_quadkey({8, 0, 3}), InvalidArgument);
}

TEST(TileMath, BijectionUpToLevelSix) {
  for (int level = 1; level <= 6; ++level) {
    const std::uint32_t n = 1u << level;
    for (std::uint32_t x = 0; x < n; ++x)
      for (std::uint32_t y = 0; y < n; ++y) ASSERT_EQ(quadkey_to_tile(tile_to_quadkey({x, y, level})), (TileCoord{x, y, level}));
  }
}

TEST(TileMath, LongitudeMonotonic) {
  for (double lat : {-60.0, 0.0, 35.595, 70.0}) {
    std::uint32_t prev = 0;
    for (double lon = -180.0; lon < 180.0; lon += 0.37) {
      const auto t = latlon_to_tile(GeoPoint(lat, lon), 9);
      EXPECT_GE(t.x, prev);
      prev = t.x;
    }
  }
}

TEST(TileMath, GroundResolution) {
  const double eq = ground_resolution(0.0, 16);
  EXPECT_NEAR(eq, 2.388657133911758, 1e-12);
  EXPECT_NEAR(eq * 256, 611.496, 1e-3);
  EXPECT_NEAR(ground_resolution(60.0, 16), eq / 2.0, 1e-12);
  EXPECT_NEAR(ground_resolution(35.595, 16), 1.942340269402786, 1e-12);
  EXPECT_NEAR(ground_resolution(35.595, 16), 1.943, 1e-3);
}

TEST(Image, PngRoundTripAndResize) {
  ImageTensor img(4, 6, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(i % 256) / 255.0;
  const auto back = decode_png(encode_png(img));
  ASSERT_EQ(back.height, 4u);
  ASSERT_EQ(back.width, 6u);
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(back.data[i], img.data[i], 1e-12);
  const auto small = resize(img, 2, 3);
  EXPECT_EQ(small.height, 2u);
  EXPECT_TRUE(small.in_unit_range());
  ImageTensor flat(8, 8, 3, 0.25);
  for (double v : resize(flat, 3, 5).data) EXPECT_NEAR(v, 0.25, 1e-15);
  std::vector<unsigned char> junk{1, 2, 3, 4};
  EXPECT_THROW(decode_png(junk), MalformedImageError);
}

TEST(Fetch, DirectoryStoreBlackTile) {
  const auto root = fresh_dir("store");
  write_png(DirectoryStore::tile_path(root, Quadkey("213")), ImageTensor(32, 32, 3, 0.0));
  TileFetcher fetcher(std::make_shared<DirectoryStore>(root));
  const auto img = fetcher.fetch(Quadkey("213"));
  EXPECT_EQ(img.height, 32u);
  for (double v : img.data) EXPECT_EQ(v, 0.0);
}

TEST(Fetch, MissingTileIsNotRetried) {
  const auto root = fresh_dir("missing");
  TileFetcher fetcher(std::make_shared<DirectoryStore>(root), {.max_retries = 3, .base_backoff = std::chrono::milliseconds(1), .cache_dir = {}});
  EXPECT_THROW(fetcher.fetch(Quadkey("0123")), MissingTileError);
  EXPECT_EQ(fetcher.stats().source_requests.load(), 1u);
  EXPECT_EQ(fetcher.stats().retries.load(), 0u);
}

TEST(Fetch, MalformedTile) {
  const auto root = fresh_dir("malformed");
  const std::vector<unsigned char> junk{'n', 'o', 't', 'p', 'n', 'g'};
  write_file_atomic(DirectoryStore::tile_path(root, Quadkey("1")), junk);
  TileFetcher fetcher(std::make_shared<DirectoryStore>(root));
  EXPECT_THROW(fetcher.fetch(Quadkey("1")), MalformedImageError);
}

TEST(Fetch, RemoteRetriesThenSucceedsAndCaches) {
  const auto root = fresh_dir("remote");
  const auto cache = fresh_dir("remote_cache");
  ImageTensor img(8, 8, 3, 0.0);
  img.at(3, 4, 1) = 1.0;
  write_png(DirectoryStore::tile_path(root, Quadkey("0321")), img);

  MockTileServer server(root, 2);
  server.start();
  FetchOptions opts{.max_retries = 3, .base_backoff = std::chrono::milliseconds(1), .workers = 2, .cache_dir = cache};
  TileFetcher fetcher(std::make_shared<RemoteEndpoint>(server.url_template()), opts);
  const auto got = fetcher.fetch(Quadkey("0321"));
  EXPECT_EQ(got, decode_png(encode_png(img)));
  EXPECT_EQ(fetcher.stats().retries.load(), 2u);
  EXPECT_EQ(server.requests(), 3u);

  const auto before = server.requests();
  fetcher.fetch(Quadkey("0321"));
  EXPECT_EQ(server.requests(), before);
  EXPECT_EQ(fetcher.stats().cache_hits.load(), 1u);

  EXPECT_THROW(fetcher.fetch(Quadkey("0000")), MissingTileError);
}

TEST(Fetch, RetryExhaustion) {
  const auto root = fresh_dir("exhaust");
  write_png(DirectoryStore::tile_path(root, Quadkey("2")), ImageTensor(4, 4));
  MockTileServer server(root, 10);
  server.start();
  TileFetcher fetcher(std::make_shared<RemoteEndpoint>(server.url_template()),
                      {.max_retries = 2, .base_backoff = std::chrono::milliseconds(1), .cache_dir = {}});
  EXPECT_THROW(fetcher.fetch(Quadkey("2")), RetryExhaustedError);
  EXPECT_EQ(server.requests(), 3u);
}

TEST(Fetch, FetchAllBoundedPoolAllNormalized) {
  const auto root = fresh_dir("batch");
  std::vector<Quadkey> keys;
  for (std::uint32_t x = 0; x < 4; ++x)
    for (std::uint32_t y = 0; y < 4; ++y) {
      const auto q = tile_to_quadkey({x, y, 2});
      ImageTensor img(5, 5, 3, (x * 4 + y) / 15.0);
      write_png(DirectoryStore::tile_path(root, q), img);
      keys.push_back(q);
    }
  TileFetcher fetcher(std::make_shared<DirectoryStore>(root), {.workers = 3, .cache_dir = {}});
  const auto images = fetcher.fetch_all(keys);
  ASSERT_EQ(images.size(), keys.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    EXPECT_TRUE(images[i].in_unit_range());
    EXPECT_NEAR(images[i].data[0], static_cast<double>(i) / 15.0, 1.0 / 255.0);
  }
}

TEST(Fetch, UrlTemplateValidation) {
  EXPECT_THROW(RemoteEndpoint("http://localhost/tiles.png"), InvalidArgument);
  EXPECT_THROW(RemoteEndpoint("localhost/{quadkey}"), InvalidArgument);
}
