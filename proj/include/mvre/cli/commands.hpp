#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mvre/error.hpp"
#include "mvre/evalreport/report.hpp"
#include "mvre/geotile/fetch.hpp"
#include "mvre/geotile/records.hpp"
#include "mvre/geotile/tile_math.hpp"
#include "mvre/strategies/artifact.hpp"
#include "mvre/strategies/prepare.hpp"
#include "mvre/synthbench/synth.hpp"
#include "mvre/tabular/csv.hpp"

namespace mvre::cli {

namespace fs = std::filesystem;
using strategies::StrategyId;

enum ExitCode : int { kOk = 0, kUsage = 1, kNotInterpretable = 2, kDataError = 3 };

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NotInterpretableError*>(&e)) return kNotInterpretable;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const MissingInputError*>(&e) ||
      dynamic_cast<const MissingTileError*>(&e) || dynamic_cast<const RetryExhaustedError*>(&e) ||
      dynamic_cast<const MalformedImageError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
      dynamic_cast<const fs::filesystem_error*>(&e))
    return kDataError;
  return kUsage;
}

/// Output root: MVRE_OUT when set, otherwise ./mvre_out.
inline fs::path default_out() {
  if (const char* env = std::getenv("MVRE_OUT"); env && *env) return env;
  return "mvre_out";
}

// ---- synth ------------------------------------------------------------------

struct SynthOptions {
  synthbench::SynthConfig config;
  std::optional<fs::path> out;
};

/// Mean, standard deviation, minimum and maximum per numeric field and the
/// target, in the layout of a descriptive-statistics table.
inline std::string describe(std::span<const tabular::HouseRecord> records, const tabular::DatasetSchema& schema) {
  using evalreport::detail::grouped;
  std::ostringstream out;
  out << "| Variable | Mean | Standard Deviation | Minimum | Maximum |\n";
  out << "|---|---:|---:|---:|---:|\n";
  auto row = [&](const std::string& name, auto value_of) {
    std::vector<double> v;
    for (const auto& r : records)
      if (auto x = value_of(r)) v.push_back(*x);
    if (v.empty()) return;
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    out << "| " << name << " | " << grouped(mean, 2) << " | " << grouped(sd, 2) << " | " << grouped(*lo, 2) << " | "
        << grouped(*hi, 2) << " |\n";
  };
  for (const auto& f : schema.numeric_fields)
    row(f, [&](const tabular::HouseRecord& r) -> std::optional<double> {
      const auto it = r.numeric.find(f);
      return it == r.numeric.end() ? std::nullopt : std::optional<double>(it->second);
    });
  row(schema.target_field, [](const tabular::HouseRecord& r) { return r.target; });
  return out.str();
}

inline void cmd_synth(const SynthOptions& opt, std::ostream& os) {
  const fs::path out = opt.out.value_or(default_out() / "synth");
  const auto ds = synthbench::generate(opt.config);
  synthbench::write_dataset(ds, out);
  os << "wrote " << ds.records.size() << " records and " << ds.images.size() << " tiles to " << out.string() << "\n\n";
  os << describe(ds.records, ds.schema);
}

// ---- tiles ------------------------------------------------------------------

struct TileQuery {
  double lat = 0.0;
  double lon = 0.0;
  int level = geotile::kImageryLevel;
};

inline void cmd_tiles_quadkey(const TileQuery& q, std::ostream& os) {
  const auto t = geotile::latlon_to_tile(geotile::GeoPoint(q.lat, q.lon), q.level);
  os << "tile " << t.x << " " << t.y << " level " << t.level << "\n";
  os << "quadkey " << geotile::tile_to_quadkey(t).str() << "\n";
  os << "ground resolution " << std::fixed << std::setprecision(4) << geotile::ground_resolution(q.lat, q.level)
     << " m/px\n";
}

inline void cmd_tiles_resolution(const TileQuery& q, std::ostream& os) {
  const double res = geotile::ground_resolution(q.lat, q.level);
  os << std::fixed << std::setprecision(4) << "ground resolution " << res << " m/px\n";
  os << std::setprecision(1) << "tile footprint " << res * geotile::kTilePixels << " m";
  if (q.level == geotile::kImageryLevel) os << " (nominal: ≈600m)";
  os << "\n";
}

// ---- data loading ------------------------------------------------------------

struct DataOptions {
  fs::path data;
  std::optional<fs::path> schema;
  /// Tile directory or URL template; MVRE_TILE_ENDPOINT also counts.
  std::optional<std::string> tiles;
  std::string split = "random";
};

struct LoadedData {
  tabular::DatasetSchema schema;
  std::vector<tabular::HouseRecord> records;
};

/// `data` may be a CSV file or a directory holding data.csv; the schema
/// defaults to schema.json beside the CSV.
inline LoadedData load_data(const DataOptions& opt, const std::optional<tabular::DatasetSchema>& fallback = {}) {
  if (opt.data.empty()) throw InvalidArgument("--data is required");
  const fs::path csv = fs::is_directory(opt.data) ? opt.data / "data.csv" : opt.data;
  if (!fs::exists(csv)) throw DataError("data file not found: " + csv.string());
  LoadedData d;
  const fs::path schema_path = opt.schema.value_or(csv.parent_path() / "schema.json");
  if (opt.schema || fs::exists(schema_path)) {
    std::ifstream in(schema_path);
    if (!in) throw DataError("cannot open schema " + schema_path.string());
    try {
      d.schema = tabular::DatasetSchema::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("schema " + schema_path.string() + ": " + e.what());
    }
  } else if (fallback) {
    d.schema = *fallback;
  } else {
    throw DataError("no schema: pass --schema or place schema.json next to " + csv.string());
  }
  d.records = tabular::read_csv(csv, d.schema);
  return d;
}

inline bool have_image_source(const DataOptions& opt) {
  const char* env = std::getenv("MVRE_TILE_ENDPOINT");
  return opt.tiles.has_value() || (env && *env);
}

inline std::vector<geotile::ImageTensor> load_images(std::span<const tabular::HouseRecord> records, const DataOptions& opt,
                                                     std::size_t image_size, const fs::path& out) {
  auto source = geotile::make_source(opt.tiles.value_or(""));
  geotile::FetchOptions fo;
  if (source->remote()) fo.cache_dir = out / "tile_cache";
  geotile::TileFetcher fetcher(std::move(source), fo);
  return geotile::fetch_record_images(records, fetcher, image_size);
}

// ---- train ------------------------------------------------------------------

struct TrainOptions {
  std::vector<StrategyId> models;
  std::vector<std::uint64_t> seeds{7};
  DataOptions data;
  strategies::TrainConfig config;
  std::size_t jobs = 1;
  std::optional<fs::path> out;
};

inline std::vector<StrategyId> parse_models(const std::string& s) {
  std::vector<StrategyId> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item == "all") {
      out.assign(strategies::kAllStrategies.begin(), strategies::kAllStrategies.end());
      return out;
    }
    const auto id = strategies::parse_strategy(item);
    if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
  }
  if (out.empty()) throw InvalidArgument("--model names no strategy");
  std::sort(out.begin(), out.end());
  return out;
}

/// What a train run consumed and produced; the digest covers every setting
/// that can change results.
struct RunManifest {
  std::vector<StrategyId> strategies;
  std::vector<std::uint64_t> seeds;
  strategies::TrainConfig config;
  std::string split;
  std::string data_source;
  std::string data_path;
  std::string tiles;
  fs::path output;

  nlohmann::json settings() const {
    nlohmann::json names = nlohmann::json::array();
    for (auto s : strategies) names.push_back(strategies::to_string(s));
    auto cfg = config.to_json();
    cfg.erase("seed");
    return {{"strategies", names}, {"seeds", seeds}, {"config", cfg}, {"split", split}};
  }
  std::string digest() const { return evalreport::fnv1a_hex(settings().dump()); }

  nlohmann::json to_json() const {
    auto j = settings();
    j["config_digest"] = digest();
    j["data_source"] = {{"kind", data_source}, {"data", data_path}, {"tiles", tiles}};
    j["output"] = output.string();
    j["created_at"] = strategies::detail::utc_timestamp();
    return j;
  }
};

inline fs::path artifact_dir(const fs::path& out, std::uint64_t seed, StrategyId s) {
  return out / "artifacts" / ("seed" + std::to_string(seed)) / strategies::to_string(s);
}

namespace detail {

// Trains `models` on one prepared split with at most `jobs` strategies in
// flight. The shared price CNN is trained up front so workers only read it.
inline std::vector<strategies::TrainedArtifact> train_all(const std::vector<StrategyId>& models,
                                                          const strategies::TrainingData& data,
                                                          const strategies::TrainConfig& cfg, std::size_t jobs) {
  strategies::StrategyCache cache;
  const bool shared = std::count_if(models.begin(), models.end(), [](StrategyId s) {
                        return s == StrategyId::M1 || s == StrategyId::M2;
                      }) > 1;
  if (shared) cache.price_cnn = strategies::train_price_cnn(data, cfg);
  std::vector<std::optional<strategies::TrainedArtifact>> out(models.size());
  std::exception_ptr error;
  std::mutex error_mutex;
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < models.size(); i = next++) {
      try {
        out[i] = strategies::train_strategy(models[i], data, cfg, &cache);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t width = std::clamp<std::size_t>(jobs, 1, models.size());
  if (width == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < width; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
  std::vector<strategies::TrainedArtifact> result;
  for (auto& a : out) result.push_back(std::move(*a));
  return result;
}

}  // namespace detail

/// Trains, saves one artifact per strategy and seed, evaluates each on the
/// held-out split and writes <out>/reports/train.{csv,md,json}.
inline std::vector<evalreport::EvalReport> cmd_train(const TrainOptions& opt, std::ostream& os) {
  if (opt.models.empty()) throw InvalidArgument("--model is required");
  if (opt.seeds.empty()) throw InvalidArgument("at least one --seed is required");
  opt.config.validate();
  const fs::path out = opt.out.value_or(default_out());
  const bool needs_images = std::any_of(opt.models.begin(), opt.models.end(), strategies::uses_images);
  if (needs_images && !have_image_source(opt.data)) {
    std::string names;
    for (auto s : opt.models)
      if (strategies::uses_images(s)) names += (names.empty() ? "" : ",") + strategies::to_string(s);
    throw InvalidArgument("image source required: " + names + " requires --tiles or MVRE_TILE_ENDPOINT");
  }
  const auto split = strategies::SplitSpec::parse(opt.data.split);
  const auto loaded = load_data(opt.data);
  std::vector<geotile::ImageTensor> images;
  if (needs_images) images = load_images(loaded.records, opt.data, opt.config.image_size, out);

  std::vector<evalreport::EvalReport> reports;
  for (auto seed : opt.seeds) {
    auto cfg = opt.config;
    cfg.seed = seed;
    cfg.forest.jobs = opt.jobs;
    const auto prepared = strategies::prepare(loaded.records, images, loaded.schema, split, seed, cfg.image_size);
    auto trained = detail::train_all(opt.models, prepared.data, cfg, opt.jobs);
    for (auto& a : trained) {
      a.schema = loaded.schema;
      const auto dir = artifact_dir(out, seed, a.strategy);
      fs::remove_all(dir);
      strategies::save_artifact(dir, a);
      reports.push_back(evalreport::evaluate(a, prepared.test, prepared.split_id));
      os << "trained " << strategies::to_string(a.strategy) << " seed " << seed;
      if (const auto* net = a.fusion ? &*a.fusion : a.cnn ? &*a.cnn : nullptr)
        os << " (best epoch " << net->fit.best_epoch << " of " << net->fit.history.size() << ")";
      os << " -> " << dir.string() << "\n";
    }
  }

  RunManifest manifest{opt.models,
                       opt.seeds,
                       opt.config,
                       split.id(),
                       "csv+tilestore",
                       opt.data.data.string(),
                       opt.data.tiles.value_or(""),
                       out};
  fs::create_directories(out);
  std::ofstream(out / "run_manifest.json") << manifest.to_json().dump(2) << '\n';
  for (auto f : {evalreport::Format::Csv, evalreport::Format::Markdown, evalreport::Format::Json})
    evalreport::write_report(out, "train", reports, f);
  os << "\n" << evalreport::emit(reports, evalreport::Format::Markdown);
  return reports;
}

// ---- eval -------------------------------------------------------------------

struct EvalOptions {
  std::optional<fs::path> artifacts;
  DataOptions data;
  std::optional<std::uint64_t> seed;
  std::string format = "md";
  std::optional<fs::path> out;
};

/// Every directory at or below `root` holding a manifest.json, sorted.
inline std::vector<fs::path> find_artifacts(const fs::path& root) {
  if (!fs::exists(root)) throw DataError("artifact directory not found: " + root.string());
  std::vector<fs::path> dirs;
  if (fs::exists(root / "manifest.json")) dirs.push_back(root);
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw DataError("no artifacts under " + root.string());
  return dirs;
}

/// Re-derives each artifact's test split (its own seed unless overridden)
/// and encodes it with the artifact's training statistics.
inline std::vector<evalreport::EvalReport> cmd_eval(const EvalOptions& opt, std::ostream& os) {
  const auto format = evalreport::parse_format(opt.format);
  const fs::path out = opt.out.value_or(default_out());
  const auto dirs = find_artifacts(opt.artifacts.value_or(out / "artifacts"));
  std::vector<strategies::TrainedArtifact> artifacts;
  for (const auto& d : dirs) artifacts.push_back(strategies::load_artifact(d));

  const auto loaded = load_data(opt.data, artifacts.front().schema);
  const auto split = strategies::SplitSpec::parse(opt.data.split);
  const bool needs_images =
      std::any_of(artifacts.begin(), artifacts.end(), [](const auto& a) { return strategies::uses_images(a.strategy); });
  if (needs_images && !have_image_source(opt.data)) throw InvalidArgument("image source required: pass --tiles");

  std::vector<evalreport::EvalReport> reports;
  std::map<std::size_t, std::vector<geotile::ImageTensor>> images_by_size;
  for (std::size_t k = 0; k < artifacts.size(); ++k) {
    const auto& a = artifacts[k];
    if (a.schema && *a.schema != loaded.schema)
      throw DataError("artifact/schema mismatch: " + dirs[k].string() + " was trained on a different schema");
    std::span<const geotile::ImageTensor> images;
    if (strategies::uses_images(a.strategy)) {
      auto& imgs = images_by_size[a.config.image_size];
      if (imgs.empty()) imgs = load_images(loaded.records, opt.data, a.config.image_size, out);
      images = imgs;
    }
    const auto idx = strategies::split_indices(loaded.records, split, opt.seed.value_or(a.config.seed));
    const auto test =
        strategies::encode_split(loaded.records, images, idx.test, loaded.schema, a.norm, a.config.image_size);
    if (test.features.column_names != a.feature_names)
      throw DataError("artifact/schema mismatch: encoded columns differ from " + dirs[k].string());
    reports.push_back(evalreport::evaluate(a, test, split.id()));
  }
  evalreport::write_report(out, "eval", reports, format);
  os << evalreport::emit(reports, format);
  return reports;
}

// ---- coef -------------------------------------------------------------------

struct CoefOptions {
  fs::path artifact;
  std::string format = "md";
};

inline std::string format_coefficients(const strategies::CoefficientReport& r) {
  using evalreport::detail::fixed;
  std::ostringstream out;
  out << "Coefficients of " << evalreport::display_name(r.strategy) << " (" << strategies::to_string(r.strategy)
      << ")\n\n";
  if (r.has_standard_errors) {
    out << "| Variable | Estimate | Std. Error | t value |\n|---|---:|---:|---:|\n";
    for (const auto& c : r.coefficients)
      out << "| " << c.name << " | " << fixed(c.estimate, 4) << " | " << fixed(c.std_error, 4) << " | "
          << fixed(c.t_value, 2) << " |\n";
  } else {
    out << "| Variable | Estimate |\n|---|---:|\n";
    for (const auto& c : r.coefficients) out << "| " << c.name << " | " << fixed(c.estimate, 4) << " |\n";
  }
  if (!r.dropped.empty()) {
    out << "\nDropped (collinear): ";
    for (std::size_t i = 0; i < r.dropped.size(); ++i) out << (i ? ", " : "") << r.dropped[i];
    out << "\n";
  }
  return out.str();
}

inline void cmd_coef(const CoefOptions& opt, std::ostream& os) {
  const auto a = strategies::load_artifact(opt.artifact);
  if (!strategies::interpretable(a.strategy))
    throw NotInterpretableError(strategies::to_string(a.strategy) + " is not interpretable");
  const auto report = strategies::extract_coefficients(a);
  const auto format = evalreport::parse_format(opt.format);
  if (format == evalreport::Format::Json)
    os << report.to_json().dump(2) << "\n";
  else if (format == evalreport::Format::Markdown)
    os << format_coefficients(report);
  else
    throw InvalidArgument("coef supports md or json output");
}

}  // namespace mvre::cli
