#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mvre/error.hpp"
#include "mvre/rng.hpp"
#include "mvre/tabular/schema.hpp"

namespace mvre::tabular {

/// Two disjoint, exhaustive index sets over some parent collection.
struct Partition {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
};

/// Holds out every record whose locality is in `holdout`.
/// Returns {pool, test} as indices into `records`.
inline Partition split_geographic(std::span<const HouseRecord> records, const std::set<std::string>& holdout) {
  Partition p;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].locality) throw DataError("record '" + records[i].id + "' has no locality label");
    (holdout.count(*records[i].locality) ? p.second : p.first).push_back(i);
  }
  if (p.second.empty()) throw InvalidArgument("geographic split: holdout selects no records");
  if (p.first.empty()) throw InvalidArgument("geographic split: holdout leaves an empty pool");
  return p;
}

/// Seeded shuffle of `pool`, then the first floor(fraction * n) entries
/// become the training part. Returns {train, val}.
inline Partition split_random(std::span<const std::size_t> pool, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("split_random: fraction must be in (0, 1)");
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(pool.size())));
  if (n_train == 0 || n_train == pool.size()) throw InvalidArgument("split_random: pool too small for both parts");
  std::vector<std::size_t> order(pool.begin(), pool.end());
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  Partition p;
  p.first.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  p.second.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return p;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace mvre::tabular
