#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvre/error.hpp"

namespace mvre::tabular {

struct CategoricalField {
  std::string name;
  std::vector<std::string> vocabulary;

  friend bool operator==(const CategoricalField&, const CategoricalField&) = default;
};

/// Field kinds, vocabularies and target of a property dataset.
///
/// JSON form:
///   {"numeric": ["square_feet", ...],
///    "categorical": [{"name": "condition", "vocabulary": ["Average", ...]}, ...],
///    "target": "totalmarketvalue",
///    "locality": "city"}          // optional; names the field used for geographic splits
struct DatasetSchema {
  std::vector<std::string> numeric_fields;
  std::vector<CategoricalField> categorical_fields;
  std::string target_field;
  std::string locality_field;

  void validate() const {
    std::set<std::string> seen;
    auto claim = [&](const std::string& name) {
      if (name.empty()) throw InvalidArgument("schema: empty field name");
      if (!seen.insert(name).second) throw InvalidArgument("schema: duplicate field name '" + name + "'");
    };
    for (const auto& n : numeric_fields) claim(n);
    for (const auto& c : categorical_fields) {
      claim(c.name);
      if (c.vocabulary.empty()) throw InvalidArgument("schema: empty vocabulary for '" + c.name + "'");
      std::set<std::string> levels(c.vocabulary.begin(), c.vocabulary.end());
      if (levels.size() != c.vocabulary.size())
        throw InvalidArgument("schema: duplicate level in vocabulary of '" + c.name + "'");
    }
    if (target_field.empty()) throw InvalidArgument("schema: target field missing");
    if (seen.count(target_field)) throw InvalidArgument("schema: target '" + target_field + "' is also a feature");
  }

  std::size_t encoded_width() const {
    std::size_t d = numeric_fields.size();
    for (const auto& c : categorical_fields) d += c.vocabulary.size();
    return d;
  }

  nlohmann::json to_json() const {
    nlohmann::json cats = nlohmann::json::array();
    for (const auto& c : categorical_fields) cats.push_back({{"name", c.name}, {"vocabulary", c.vocabulary}});
    nlohmann::json j{{"numeric", numeric_fields}, {"categorical", cats}, {"target", target_field}};
    if (!locality_field.empty()) j["locality"] = locality_field;
    return j;
  }

  static DatasetSchema from_json(const nlohmann::json& j) {
    DatasetSchema s;
    try {
      s.numeric_fields = j.value("numeric", std::vector<std::string>{});
      for (const auto& c : j.value("categorical", nlohmann::json::array()))
        s.categorical_fields.push_back({c.at("name").get<std::string>(), c.at("vocabulary").get<std::vector<std::string>>()});
      s.target_field = j.at("target").get<std::string>();
      s.locality_field = j.value("locality", std::string{});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("schema json: ") + e.what());
    }
    s.validate();
    return s;
  }

  friend bool operator==(const DatasetSchema&, const DatasetSchema&) = default;
};

/// One property: raw attribute values keyed by schema field name.
struct HouseRecord {
  std::string id;
  std::map<std::string, double> numeric;
  std::map<std::string, std::string> categorical;
  std::optional<double> target;
  std::optional<double> lat;
  std::optional<double> lon;
  std::optional<std::string> locality;
};

}  // namespace mvre::tabular
