#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvre/error.hpp"
#include "mvre/geotile/fetch.hpp"
#include "mvre/geotile/image.hpp"
#include "mvre/geotile/records.hpp"
#include "mvre/geotile/tile_math.hpp"
#include "mvre/rng.hpp"
#include "mvre/tabular/csv.hpp"
#include "mvre/tabular/schema.hpp"

// Synthetic price law:
//   log(price) = beta0 + beta' x + gamma q + delta 4 (x0 - 0.5)(q - 0.5) + eps,  eps ~ N(0, sigma^2)
// with x ~ U[0,1]^d (numeric in unit scale, categorical one-hot) and the image
// showing k = round(10 q) bright disks.

namespace mvre::synthbench {

struct SynthConfig {
  std::size_t n = 2000;
  std::size_t d_num = 3;
  std::vector<std::size_t> cat_vocab{3};
  /// One entry per encoded column (numeric, then one-hot levels, then
  /// locality levels when locality is a feature). Empty selects defaults.
  std::vector<double> beta;
  double beta0 = 11.5;
  double gamma = 1.0;
  bool interaction = false;
  double interaction_strength = 0.5;
  double sigma = 0.1;
  std::size_t image_size = 32;
  /// Amplitude of the per-pixel background texture.
  double background_noise = 0.08;
  std::size_t localities = 5;
  /// Probability that a record's locality is its q band (otherwise uniform).
  double locality_fidelity = 0.7;
  bool locality_as_feature = true;
  std::uint64_t seed = 7;

  std::size_t encoded_width() const {
    std::size_t w = d_num;
    for (auto v : cat_vocab) w += v;
    if (locality_as_feature) w += localities;
    return w;
  }

  void validate() const {
    if (n < 10) throw InvalidArgument("synth: n must be at least 10");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("synth: sigma must be >= 0");
    if (!std::isfinite(gamma) || !std::isfinite(beta0) || !std::isfinite(interaction_strength))
      throw InvalidArgument("synth: non-finite coefficient");
    if (interaction && d_num == 0) throw InvalidArgument("synth: interaction needs a numeric feature");
    if (image_size < 10) throw InvalidArgument("synth: image size must be at least 10");
    if (!(background_noise >= 0.0 && background_noise <= 0.3))
      throw InvalidArgument("synth: background noise must be in [0, 0.3]");
    if (localities == 0) throw InvalidArgument("synth: need at least one locality");
    for (auto v : cat_vocab)
      if (v < 2) throw InvalidArgument("synth: categorical vocabularies need at least 2 levels");
    if (!(locality_fidelity >= 0.0 && locality_fidelity <= 1.0))
      throw InvalidArgument("synth: locality fidelity must be in [0, 1]");
    if (!beta.empty() && beta.size() != encoded_width())
      throw InvalidArgument("synth: beta has " + std::to_string(beta.size()) + " entries, encoded width is " +
                            std::to_string(encoded_width()));
    for (double b : beta)
      if (!std::isfinite(b)) throw InvalidArgument("synth: non-finite beta");
  }

  std::vector<double> resolved_beta() const {
    if (!beta.empty()) return beta;
    static constexpr double kNumeric[] = {1.2, 0.6, -0.4, 0.3, -0.2, 0.1};
    static constexpr double kLevels[] = {0.0, 0.15, -0.1, 0.05, -0.05};
    std::vector<double> b;
    for (std::size_t j = 0; j < d_num; ++j) b.push_back(j < std::size(kNumeric) ? kNumeric[j] : 0.1);
    for (auto v : cat_vocab)
      for (std::size_t k = 0; k < v; ++k) b.push_back(k < std::size(kLevels) ? kLevels[k] : 0.0);
    if (locality_as_feature) b.insert(b.end(), localities, 0.0);
    return b;
  }

  nlohmann::json to_json() const {
    return {{"n", n},
            {"d_num", d_num},
            {"cat_vocab", cat_vocab},
            {"beta", resolved_beta()},
            {"beta0", beta0},
            {"gamma", gamma},
            {"interaction", interaction},
            {"interaction_strength", interaction_strength},
            {"sigma", sigma},
            {"image_size", image_size},
            {"background_noise", background_noise},
            {"localities", localities},
            {"locality_fidelity", locality_fidelity},
            {"locality_as_feature", locality_as_feature},
            {"seed", seed}};
  }
};

struct SynthDataset {
  SynthConfig config;
  tabular::DatasetSchema schema;
  std::vector<tabular::HouseRecord> records;
  std::vector<geotile::ImageTensor> images;
  std::vector<geotile::Quadkey> quadkeys;
  // Hidden truths.
  std::vector<double> q;
  std::vector<std::size_t> disks;
  std::vector<double> x_unit;  // n x encoded_width, row-major, the generator's design
  std::vector<double> beta;
  std::vector<double> log_price;
};

inline constexpr int kTileLevel = geotile::kImageryLevel;

/// Field ranges follow the descriptive statistics of the Asheville data.
struct NumericFieldSpec {
  const char* name;
  double lo;
  double hi;
};
inline constexpr NumericFieldSpec kNumericFields[] = {
    {"square_feet", 1022.0, 7352.0}, {"year_built", 1790.0, 2015.0}, {"full_bathrooms", 1.0, 7.0},
    {"half_bathrooms", 0.0, 3.0},    {"bedrooms", 1.0, 7.0},         {"acres", 0.06, 4.88},
};

inline std::string numeric_name(std::size_t j) {
  return j < std::size(kNumericFields) ? kNumericFields[j].name : "num" + std::to_string(j);
}

inline std::pair<double, double> numeric_range(std::size_t j) {
  if (j < std::size(kNumericFields)) return {kNumericFields[j].lo, kNumericFields[j].hi};
  return {0.0, 1.0};
}

inline tabular::CategoricalField categorical_field(std::size_t g, std::size_t vocab) {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> kFields = {
      {"condition", {"Average", "Good", "Fair", "Excellent", "Poor", "Unsound"}},
      {"style", {"Ranch", "Conventional", "Contemporary", "Colonial", "Cape Cod", "Split Level"}},
      {"fireplace", {"No", "Yes"}},
  };
  tabular::CategoricalField f;
  const bool named = g < kFields.size() && vocab <= kFields[g].second.size();
  f.name = g < kFields.size() ? kFields[g].first : "cat" + std::to_string(g);
  for (std::size_t k = 0; k < vocab; ++k)
    f.vocabulary.push_back(named ? kFields[g].second[k] : "level" + std::to_string(k));
  return f;
}

inline std::string locality_name(std::size_t i) { return "L" + std::to_string(i); }

inline tabular::DatasetSchema make_schema(const SynthConfig& cfg) {
  tabular::DatasetSchema s;
  for (std::size_t j = 0; j < cfg.d_num; ++j) s.numeric_fields.push_back(numeric_name(j));
  for (std::size_t g = 0; g < cfg.cat_vocab.size(); ++g)
    s.categorical_fields.push_back(categorical_field(g, cfg.cat_vocab[g]));
  s.locality_field = "city";
  if (cfg.locality_as_feature) {
    tabular::CategoricalField city{"city", {}};
    for (std::size_t i = 0; i < cfg.localities; ++i) city.vocabulary.push_back(locality_name(i));
    s.categorical_fields.push_back(city);
  }
  s.target_field = "totalmarketvalue";
  s.validate();
  return s;
}

inline std::size_t disk_radius(std::size_t image_size) {
  return std::max<std::size_t>(1, (image_size + 8) / 16);
}

/// Number of pixels covered by one rendered disk.
inline std::size_t disk_area(std::size_t image_size) {
  const auto r = static_cast<long>(disk_radius(image_size));
  std::size_t area = 0;
  for (long dy = -r; dy <= r; ++dy)
    for (long dx = -r; dx <= r; ++dx)
      if (dx * dx + dy * dy <= r * r) ++area;
  return area;
}

inline constexpr double kDiskColor[3] = {0.35, 0.9, 0.3};
inline constexpr double kBrightThreshold = 0.5;

/// Renders `k` disks at positions drawn from `rng`. Centers are kept at least
/// 2r+2 apart (so disks never touch) unless placement keeps failing.
inline geotile::ImageTensor render_disks(std::size_t size, std::size_t k, Rng& rng, double noise = 0.08) {
  geotile::ImageTensor img(size, size, 3);
  for (auto& v : img.data) v = 0.02 + noise * rng.uniform();
  const auto r = static_cast<long>(disk_radius(size));
  const long lo = r;
  const long hi = static_cast<long>(size) - 1 - r;
  std::vector<std::pair<long, long>> centers;
  for (std::size_t d = 0; d < k; ++d) {
    long cy = 0;
    long cx = 0;
    for (int attempt = 0; attempt < 500; ++attempt) {
      cy = lo + static_cast<long>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
      cx = lo + static_cast<long>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
      const long min_d = 2 * r + 2;
      const bool clear = std::all_of(centers.begin(), centers.end(), [&](const auto& c) {
        return (c.first - cy) * (c.first - cy) + (c.second - cx) * (c.second - cx) >= min_d * min_d;
      });
      if (clear) break;
    }
    centers.emplace_back(cy, cx);
    for (long dy = -r; dy <= r; ++dy)
      for (long dx = -r; dx <= r; ++dx)
        if (dx * dx + dy * dy <= r * r)
          for (std::size_t c = 0; c < 3; ++c)
            img.at(static_cast<std::size_t>(cy + dy), static_cast<std::size_t>(cx + dx), c) = kDiskColor[c];
  }
  return img;
}

/// Independent estimate of q from pixels: the larger of the count of bright
/// 4-connected components and the bright area in disk units, over 10.
inline double oracle_quality(const geotile::ImageTensor& image) {
  if (image.channels < 2) throw InvalidArgument("oracle_quality: need at least 2 channels");
  const std::size_t h = image.height;
  const std::size_t w = image.width;
  std::vector<char> bright(h * w, 0);
  std::size_t count = 0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      if (image.at(y, x, 1) > kBrightThreshold) {
        bright[y * w + x] = 1;
        ++count;
      }
  std::size_t components = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < bright.size(); ++start) {
    if (bright[start] != 1) continue;
    ++components;
    bright[start] = 2;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t y = p / w;
      const std::size_t x = p % w;
      auto visit = [&](std::size_t ny, std::size_t nx) {
        auto& b = bright[ny * w + nx];
        if (b == 1) {
          b = 2;
          stack.push_back(ny * w + nx);
        }
      };
      if (y > 0) visit(y - 1, x);
      if (y + 1 < h) visit(y + 1, x);
      if (x > 0) visit(y, x - 1);
      if (x + 1 < w) visit(y, x + 1);
    }
  }
  const double by_area = std::round(static_cast<double>(count) / static_cast<double>(disk_area(std::max(h, w))));
  const double k = std::clamp(std::max(static_cast<double>(components), by_area), 0.0, 10.0);
  return k / 10.0;
}

/// Optimal log-space MAE under Gaussian noise: sigma * sqrt(2 / pi).
inline double bayes_mae(double sigma) {
  if (!(sigma >= 0.0)) throw InvalidArgument("bayes_mae: sigma must be >= 0");
  return sigma * std::sqrt(2.0 / std::numbers::pi);
}

inline SynthDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthDataset ds;
  ds.config = cfg;
  ds.schema = make_schema(cfg);
  ds.beta = cfg.resolved_beta();
  const std::size_t width = cfg.encoded_width();
  ds.records.resize(cfg.n);
  ds.images.resize(cfg.n);
  ds.q.resize(cfg.n);
  ds.disks.resize(cfg.n);
  ds.log_price.resize(cfg.n);
  ds.x_unit.assign(cfg.n * width, 0.0);

  // Unique level-16 tiles on a square grid around downtown Asheville.
  const auto origin = geotile::latlon_to_tile(geotile::GeoPoint(35.5951, -82.5515), kTileLevel);
  const auto grid = static_cast<std::uint32_t>(std::ceil(std::sqrt(static_cast<double>(cfg.n))));
  const std::uint32_t half = grid / 2;

  for (std::size_t i = 0; i < cfg.n; ++i) {
    Rng rng(mix_seed(cfg.seed) ^ static_cast<std::uint64_t>(i));
    double* x = &ds.x_unit[i * width];
    auto& rec = ds.records[i];
    rec.id = "s" + std::to_string(i);

    for (std::size_t j = 0; j < cfg.d_num; ++j) {
      x[j] = rng.uniform();
      const auto [lo, hi] = numeric_range(j);
      rec.numeric[numeric_name(j)] = lo + x[j] * (hi - lo);
    }
    std::size_t offset = cfg.d_num;
    for (std::size_t g = 0; g < cfg.cat_vocab.size(); ++g) {
      const auto level = static_cast<std::size_t>(rng.below(cfg.cat_vocab[g]));
      x[offset + level] = 1.0;
      const auto& field = ds.schema.categorical_fields[g];
      rec.categorical[field.name] = field.vocabulary[level];
      offset += cfg.cat_vocab[g];
    }

    const double q = rng.uniform();
    ds.q[i] = q;
    const std::size_t band = std::min(static_cast<std::size_t>(q * static_cast<double>(cfg.localities)), cfg.localities - 1);
    const bool faithful = rng.uniform() < cfg.locality_fidelity;
    const std::size_t drawn = static_cast<std::size_t>(rng.below(cfg.localities));
    const std::size_t locality = faithful ? band : drawn;
    rec.locality = locality_name(locality);
    if (cfg.locality_as_feature) {
      x[offset + locality] = 1.0;
      rec.categorical["city"] = *rec.locality;
    }

    double y = cfg.beta0 + cfg.gamma * q;
    for (std::size_t c = 0; c < width; ++c) y += ds.beta[c] * x[c];
    if (cfg.interaction) y += cfg.interaction_strength * 4.0 * (x[0] - 0.5) * (q - 0.5);
    y += cfg.sigma * rng.normal();
    ds.log_price[i] = y;
    rec.target = std::exp(y);

    const auto k = static_cast<std::size_t>(std::lround(10.0 * q));
    ds.disks[i] = k;
    ds.images[i] = render_disks(cfg.image_size, k, rng, cfg.background_noise);

    const geotile::TileCoord tile{origin.x - half + static_cast<std::uint32_t>(i % grid),
                                  origin.y - half + static_cast<std::uint32_t>(i / grid), kTileLevel};
    const auto center = geotile::tile_center(tile);
    rec.lat = center.lat();
    rec.lon = center.lon();
    ds.quadkeys.push_back(geotile::tile_to_quadkey(tile));
  }
  return ds;
}

/// Writes data.csv, schema.json, truth.json and tiles/16/<quadkey>.png.
inline void write_dataset(const SynthDataset& ds, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  {
    std::ofstream csv(out / "data.csv", std::ios::binary);
    if (!csv) throw DataError("cannot write " + (out / "data.csv").string());
    tabular::write_csv(csv, ds.records, ds.schema);
  }
  {
    std::ofstream js(out / "schema.json", std::ios::binary);
    js << ds.schema.to_json().dump(2) << '\n';
  }
  {
    nlohmann::json truth{{"config", ds.config.to_json()}, {"q", ds.q}, {"log_price", ds.log_price}};
    std::ofstream js(out / "truth.json", std::ios::binary);
    js << truth.dump() << '\n';
  }
  for (std::size_t i = 0; i < ds.records.size(); ++i)
    geotile::write_png(geotile::DirectoryStore::tile_path(out / "tiles", ds.quadkeys[i]), ds.images[i]);
}

}  // namespace mvre::synthbench
