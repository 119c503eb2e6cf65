#pragma once

#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mvre/error.hpp"
#include "mvre/geotile/image.hpp"
#include "mvre/strategies/models.hpp"
#include "mvre/tabular/encode.hpp"
#include "mvre/tabular/split.hpp"

namespace mvre::strategies {

/// Test-set selection: "random" holds out a seeded 20% of records,
/// "geo:A,B" holds out every record whose locality is A or B.
struct SplitSpec {
  bool geographic = false;
  std::set<std::string> holdout;

  static SplitSpec parse(const std::string& s) {
    if (s == "random") return {};
    if (s.rfind("geo:", 0) == 0) {
      SplitSpec spec{true, {}};
      std::stringstream ss(s.substr(4));
      for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) spec.holdout.insert(item);
      if (spec.holdout.empty()) throw InvalidArgument("split '" + s + "' names no localities");
      return spec;
    }
    throw InvalidArgument("unknown split '" + s + "' (expected random or geo:<locality>[,<locality>...])");
  }

  std::string id() const {
    if (!geographic) return "random";
    std::string out = "geo:";
    bool first = true;
    for (const auto& h : holdout) {
      out += (first ? "" : ",") + h;
      first = false;
    }
    return out;
  }
};

inline constexpr double kTrainFraction = 0.8;
inline constexpr double kRandomTestFraction = 0.2;
inline constexpr std::uint64_t kTestSplitSalt = 0x7e57;

struct PreparedData {
  TrainingData data;
  SplitData test;
  tabular::NormStats stats;
  std::string split_id;
};

/// Encodes the records at `idx` with fixed statistics.
inline SplitData encode_split(std::span<const tabular::HouseRecord> records, std::span<const geotile::ImageTensor> images,
                            std::span<const std::size_t> idx, const tabular::DatasetSchema& schema,
                            const tabular::NormStats& stats, std::size_t image_size) {
  std::vector<tabular::HouseRecord> subset;
  subset.reserve(idx.size());
  for (auto i : idx) subset.push_back(records[i]);
  SplitData d;
  d.features = tabular::transform(subset, schema, stats);
  for (const auto& r : subset) {
    if (!r.target) throw DataError("record '" + r.id + "' has no target value");
    try {
      d.log_target.push_back(tabular::log_target(*r.target));
    } catch (const InvalidArgument& e) {
      throw DataError("record '" + r.id + "': " + e.what());
    }
    d.ids.push_back(r.id);
  }
  if (!images.empty()) {
    std::vector<geotile::ImageTensor> sel;
    sel.reserve(idx.size());
    for (auto i : idx) sel.push_back(geotile::resize(images[i], image_size, image_size));
    d.images = geotile::stack_images(sel);
  }
  return d;
}

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

inline SplitIndices split_indices(std::span<const tabular::HouseRecord> records, const SplitSpec& split, std::uint64_t seed) {
  tabular::Partition outer;
  if (split.geographic) {
    outer = tabular::split_geographic(records, split.holdout);
  } else {
    const auto all = tabular::all_indices(records.size());
    outer = tabular::split_random(all, 1.0 - kRandomTestFraction, seed ^ kTestSplitSalt);
  }
  auto inner = tabular::split_random(outer.first, kTrainFraction, seed);
  if (inner.first.empty() || inner.second.empty() || outer.second.empty())
    throw DataError("too few records for a train/validation/test split");
  return {std::move(inner.first), std::move(inner.second), std::move(outer.second)};
}

/// Splits into train/val/test, fits min-max statistics on the training
/// partition only and encodes all three. `images` is either empty or aligned
/// with `records`.
inline PreparedData prepare(std::span<const tabular::HouseRecord> records, std::span<const geotile::ImageTensor> images,
                            const tabular::DatasetSchema& schema, const SplitSpec& split, std::uint64_t seed,
                            std::size_t image_size) {
  schema.validate();
  if (!images.empty() && images.size() != records.size())
    throw InvalidArgument("prepare: images are not aligned with records");
  const auto idx = split_indices(records, split, seed);
  std::vector<tabular::HouseRecord> train_records;
  for (auto i : idx.train) train_records.push_back(records[i]);
  PreparedData p;
  p.stats = tabular::fit_transform(train_records, schema).second;
  p.split_id = split.id();
  p.data.train = encode_split(records, images, idx.train, schema, p.stats, image_size);
  p.data.val = encode_split(records, images, idx.val, schema, p.stats, image_size);
  p.test = encode_split(records, images, idx.test, schema, p.stats, image_size);
  return p;
}

}  // namespace mvre::strategies
