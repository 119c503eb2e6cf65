#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mvre/error.hpp"
#include "mvre/tabular/schema.hpp"

namespace mvre::tabular {

struct NumericRange {
  std::string name;
  double min = 0.0;
  double max = 0.0;

  friend bool operator==(const NumericRange&, const NumericRange&) = default;
};

/// Training-partition min/max per numeric column.
struct NormStats {
  std::vector<NumericRange> ranges;

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : ranges) j.push_back({{"name", r.name}, {"min", r.min}, {"max", r.max}});
    return j;
  }
  static NormStats from_json(const nlohmann::json& j) {
    NormStats s;
    for (const auto& r : j) s.ranges.push_back({r.at("name"), r.at("min"), r.at("max")});
    return s;
  }

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

struct OneHotGroup {
  std::string field;
  std::size_t offset = 0;
  std::size_t width = 0;
};

/// Dense n x d design matrix, row-major.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<std::string> column_names;
  NormStats stats;
  std::vector<OneHotGroup> groups;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return std::span(values).subspan(r * cols, cols); }
  std::vector<double> column(std::size_t c) const {
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) out[r] = at(r, c);
    return out;
  }

  FeatureMatrix select_rows(std::span<const std::size_t> idx) const {
    FeatureMatrix out = *this;
    out.rows = idx.size();
    out.values.assign(idx.size() * cols, 0.0);
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(idx[i] * cols), cols,
                  out.values.begin() + static_cast<std::ptrdiff_t>(i * cols));
    return out;
  }
};

namespace detail {

inline double numeric_value(const HouseRecord& rec, const std::string& field) {
  const auto it = rec.numeric.find(field);
  if (it == rec.numeric.end()) throw DataError("record '" + rec.id + "' is missing numeric field '" + field + "'");
  if (!std::isfinite(it->second)) throw DataError("record '" + rec.id + "' has non-finite value for '" + field + "'");
  return it->second;
}

inline const std::string& category_value(const HouseRecord& rec, const std::string& field) {
  const auto it = rec.categorical.find(field);
  if (it == rec.categorical.end())
    throw DataError("record '" + rec.id + "' is missing categorical field '" + field + "'");
  return it->second;
}

}  // namespace detail

/// Encodes records with previously fitted statistics. Out-of-range numeric
/// values are not clamped; categories outside the vocabulary encode as an
/// all-zero group.
inline FeatureMatrix transform(std::span<const HouseRecord> records, const DatasetSchema& schema,
                               const NormStats& stats) {
  if (stats.ranges.size() != schema.numeric_fields.size()) throw DataError("norm stats do not match schema");
  FeatureMatrix fm;
  fm.rows = records.size();
  fm.cols = schema.encoded_width();
  fm.stats = stats;
  fm.values.assign(fm.rows * fm.cols, 0.0);
  for (const auto& f : schema.numeric_fields) fm.column_names.push_back(f);
  std::size_t offset = schema.numeric_fields.size();
  for (const auto& c : schema.categorical_fields) {
    fm.groups.push_back({c.name, offset, c.vocabulary.size()});
    for (const auto& level : c.vocabulary) fm.column_names.push_back(c.name + "=" + level);
    offset += c.vocabulary.size();
  }
  for (std::size_t r = 0; r < records.size(); ++r) {
    double* row = &fm.values[r * fm.cols];
    for (std::size_t j = 0; j < schema.numeric_fields.size(); ++j) {
      const auto& range = stats.ranges[j];
      const double x = detail::numeric_value(records[r], schema.numeric_fields[j]);
      const double span = range.max - range.min;
      row[j] = span > 0.0 ? (x - range.min) / span : 0.0;
    }
    for (std::size_t g = 0; g < schema.categorical_fields.size(); ++g) {
      const auto& field = schema.categorical_fields[g];
      const auto& value = detail::category_value(records[r], field.name);
      for (std::size_t k = 0; k < field.vocabulary.size(); ++k)
        if (field.vocabulary[k] == value) row[fm.groups[g].offset + k] = 1.0;
    }
  }
  return fm;
}

/// Fits min/max on `records` (the training partition) and encodes them.
inline std::pair<FeatureMatrix, NormStats> fit_transform(std::span<const HouseRecord> records,
                                                         const DatasetSchema& schema) {
  if (records.empty()) throw InvalidArgument("fit_transform: no records");
  schema.validate();
  NormStats stats;
  for (const auto& f : schema.numeric_fields) {
    NumericRange r{f, detail::numeric_value(records[0], f), detail::numeric_value(records[0], f)};
    for (const auto& rec : records) {
      const double x = detail::numeric_value(rec, f);
      r.min = std::min(r.min, x);
      r.max = std::max(r.max, x);
    }
    stats.ranges.push_back(r);
  }
  auto fm = transform(records, schema, stats);
  return {std::move(fm), std::move(stats)};
}

inline double log_target(double usd) {
  if (!(usd > 0.0) || !std::isfinite(usd)) throw InvalidArgument("log_target: price must be positive and finite");
  return std::log(usd);
}

inline double inv_log_target(double y) { return std::exp(y); }

}  // namespace mvre::tabular
