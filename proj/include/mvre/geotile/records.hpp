#pragma once

#include <span>
#include <vector>

#include "mvre/error.hpp"
#include "mvre/geotile/fetch.hpp"
#include "mvre/geotile/image.hpp"
#include "mvre/geotile/tile_math.hpp"
#include "mvre/tabular/schema.hpp"

namespace mvre::geotile {

/// Zoom level of property imagery (about 600 m across a 256 px tile).
inline constexpr int kImageryLevel = 16;

/// Quadkey of the tile containing a record's coordinates.
inline Quadkey record_quadkey(const tabular::HouseRecord& rec, int level = kImageryLevel) {
  if (!rec.lat || !rec.lon) throw DataError("record '" + rec.id + "' has no coordinates");
  try {
    return tile_to_quadkey(latlon_to_tile(GeoPoint(*rec.lat, *rec.lon), level));
  } catch (const InvalidArgument& e) {
    throw DataError("record '" + rec.id + "': " + e.what());
  }
}

/// One image per record, resized to size x size.
inline std::vector<ImageTensor> fetch_record_images(std::span<const tabular::HouseRecord> records, TileFetcher& fetcher,
                                                    std::size_t size) {
  std::vector<Quadkey> keys;
  keys.reserve(records.size());
  for (const auto& r : records) keys.push_back(record_quadkey(r));
  auto images = fetcher.fetch_all(keys);
  for (auto& im : images) im = resize(im, size, size);
  return images;
}

}  // namespace mvre::geotile
