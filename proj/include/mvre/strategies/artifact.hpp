#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "mvre/error.hpp"
#include "mvre/numkit/serialize.hpp"
#include "mvre/strategies/models.hpp"

// Artifact directory layout:
//   manifest.json       strategy, config, feature names, regression stages,
//                       network specs and training histories, creation time
//   params_<role>.bin   network parameters (numkit snapshot)
//   forest.json         m2 only
//   normstats.json      training min/max per numeric field
//   schema.json         when the schema is known
//   coefficients.json   interpretable strategies only

namespace mvre::strategies {

namespace detail {

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json save_net(const std::filesystem::path& dir, const std::string& role, const NetModel& m) {
  const std::string file = "params_" + role + ".bin";
  numkit::save_snapshot(dir / file, m.params);
  return {{"spec", m.spec.to_json()}, {"scaler", m.scaler.to_json()}, {"fit", m.fit.to_json()}, {"params", file}};
}

inline NetModel load_net(const std::filesystem::path& dir, const nlohmann::json& j) {
  NetModel m;
  m.spec = NetSpec::from_json(j.at("spec"));
  m.scaler = TargetScaler::from_json(j.at("scaler"));
  m.fit = FitResult::from_json(j.at("fit"));
  m.params = numkit::load_snapshot(dir / j.at("params").get<std::string>());
  m.network();  // validates parameter shapes against the spec
  return m;
}

}  // namespace detail

inline void save_artifact(const std::filesystem::path& dir, const TrainedArtifact& a) {
  std::filesystem::create_directories(dir);
  nlohmann::json m{{"strategy", to_string(a.strategy)},
                   {"config", a.config.to_json()},
                   {"feature_names", a.feature_names},
                   {"target_transform", "log"},
                   {"created_at", detail::utc_timestamp()}};
  if (a.linear) m["linear"] = a.linear->to_json();
  if (a.stage3) m["stage3"] = a.stage3->to_json();
  if (a.cnn) m["cnn"] = detail::save_net(dir, "cnn", *a.cnn);
  if (a.fusion) m["fusion"] = detail::save_net(dir, "fusion", *a.fusion);
  if (a.forest) {
    detail::write_json(dir / "forest.json", forest::to_json(*a.forest));
    m["forest"] = "forest.json";
  }
  detail::write_json(dir / "normstats.json", a.norm.to_json());
  if (a.schema) detail::write_json(dir / "schema.json", a.schema->to_json());
  if (interpretable(a.strategy)) detail::write_json(dir / "coefficients.json", extract_coefficients(a).to_json());
  detail::write_json(dir / "manifest.json", m);
}

inline TrainedArtifact load_artifact(const std::filesystem::path& dir) {
  const auto m = detail::read_json(dir / "manifest.json");
  try {
    TrainedArtifact a;
    a.strategy = parse_strategy(m.at("strategy").get<std::string>());
    a.config = TrainConfig::from_json(m.at("config"));
    a.feature_names = m.at("feature_names").get<std::vector<std::string>>();
    if (m.contains("linear")) a.linear = LinearFit::from_json(m.at("linear"));
    if (m.contains("stage3")) a.stage3 = LinearFit::from_json(m.at("stage3"));
    if (m.contains("cnn")) a.cnn = detail::load_net(dir, m.at("cnn"));
    if (m.contains("fusion")) a.fusion = detail::load_net(dir, m.at("fusion"));
    if (m.contains("forest")) a.forest = forest::forest_from_json(detail::read_json(dir / m.at("forest").get<std::string>()));
    a.norm = tabular::NormStats::from_json(detail::read_json(dir / "normstats.json"));
    if (std::filesystem::exists(dir / "schema.json"))
      a.schema = tabular::DatasetSchema::from_json(detail::read_json(dir / "schema.json"));
    const bool complete = [&] {
      switch (a.strategy) {
        case StrategyId::Baseline: return a.linear.has_value();
        case StrategyId::M1: return a.linear && a.cnn;
        case StrategyId::M2: return a.cnn && a.forest;
        case StrategyId::M3: return a.linear && a.stage3 && a.cnn;
        case StrategyId::M4:
        case StrategyId::M5: return a.fusion.has_value();
      }
      return false;
    }();
    if (!complete) throw DataError("artifact in " + dir.string() + " is incomplete for strategy " + to_string(a.strategy));
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + (dir / "manifest.json").string() + ": " + e.what());
  }
}

}  // namespace mvre::strategies
