#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mvre/error.hpp"
#include "mvre/tabular/schema.hpp"

// Property CSV: UTF-8, comma separated, first row is the header. Columns are
// matched by name against the schema; "id", "lat" and "lon" are optional,
// as is the target column (prediction-only files omit it).

namespace mvre::tabular {

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline double parse_real(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end) throw DataError("cannot parse '" + s + "' as a number for " + what);
  return v;
}

inline std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

/// Shortest representation that round-trips exactly.
inline std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline std::vector<HouseRecord> parse_csv(std::istream& in, const DatasetSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("csv: empty input");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  auto require = [&](const std::string& name) {
    if (!col.count(name)) throw DataError("csv: missing column '" + name + "'");
  };
  for (const auto& f : schema.numeric_fields) require(f);
  for (const auto& c : schema.categorical_fields) require(c.name);
  if (!schema.locality_field.empty()) require(schema.locality_field);
  const bool has_target = col.count(schema.target_field) > 0;

  std::vector<HouseRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("csv line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " cells, got " + std::to_string(cells.size()));
    HouseRecord rec;
    rec.id = col.count("id") ? cells[col["id"]] : std::to_string(records.size());
    const std::string where = "line " + std::to_string(line_no);
    for (const auto& f : schema.numeric_fields) rec.numeric[f] = detail::parse_real(cells[col[f]], f + " at " + where);
    for (const auto& c : schema.categorical_fields) rec.categorical[c.name] = cells[col[c.name]];
    if (has_target && !cells[col[schema.target_field]].empty())
      rec.target = detail::parse_real(cells[col[schema.target_field]], schema.target_field + " at " + where);
    if (rec.target && !(*rec.target > 0.0)) throw DataError("csv " + where + ": target must be positive");
    if (col.count("lat") && col.count("lon") && !cells[col["lat"]].empty() && !cells[col["lon"]].empty()) {
      rec.lat = detail::parse_real(cells[col["lat"]], "lat at " + where);
      rec.lon = detail::parse_real(cells[col["lon"]], "lon at " + where);
    }
    if (!schema.locality_field.empty()) rec.locality = cells[col[schema.locality_field]];
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::vector<HouseRecord> read_csv(const std::filesystem::path& path, const DatasetSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_csv(in, schema);
}

inline void write_csv(std::ostream& os, std::span<const HouseRecord> records, const DatasetSchema& schema) {
  std::vector<std::string> header{"id"};
  for (const auto& f : schema.numeric_fields) header.push_back(f);
  for (const auto& c : schema.categorical_fields) header.push_back(c.name);
  const bool locality_is_feature =
      std::any_of(schema.categorical_fields.begin(), schema.categorical_fields.end(),
                  [&](const CategoricalField& c) { return c.name == schema.locality_field; });
  if (!schema.locality_field.empty() && !locality_is_feature) header.push_back(schema.locality_field);
  header.push_back("lat");
  header.push_back("lon");
  header.push_back(schema.target_field);
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << detail::quote_if_needed(header[i]);
  os << '\n';
  for (const auto& r : records) {
    os << detail::quote_if_needed(r.id);
    for (const auto& f : schema.numeric_fields) os << ',' << detail::format_real(r.numeric.at(f));
    for (const auto& c : schema.categorical_fields) os << ',' << detail::quote_if_needed(r.categorical.at(c.name));
    if (!schema.locality_field.empty() && !locality_is_feature) os << ',' << detail::quote_if_needed(r.locality.value_or(""));
    os << ',' << (r.lat ? detail::format_real(*r.lat) : "") << ',' << (r.lon ? detail::format_real(*r.lon) : "");
    os << ',' << (r.target ? detail::format_real(*r.target) : "") << '\n';
  }
}

}  // namespace mvre::tabular
