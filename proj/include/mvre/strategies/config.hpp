#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mvre/error.hpp"
#include "mvre/forest/forest.hpp"

namespace mvre::strategies {

enum class StrategyId { Baseline, M1, M2, M3, M4, M5 };

inline constexpr std::array<StrategyId, 6> kAllStrategies = {StrategyId::Baseline, StrategyId::M1, StrategyId::M2,
                                                             StrategyId::M3,       StrategyId::M4, StrategyId::M5};

inline std::string to_string(StrategyId s) {
  switch (s) {
    case StrategyId::Baseline: return "baseline";
    case StrategyId::M1: return "m1";
    case StrategyId::M2: return "m2";
    case StrategyId::M3: return "m3";
    case StrategyId::M4: return "m4";
    case StrategyId::M5: return "m5";
  }
  return "?";
}

inline StrategyId parse_strategy(std::string_view s) {
  for (auto id : kAllStrategies)
    if (to_string(id) == s) return id;
  throw InvalidArgument("unknown strategy '" + std::string(s) + "' (expected baseline, m1..m5)");
}

inline bool uses_images(StrategyId s) { return s != StrategyId::Baseline; }

/// Whether named coefficients can be read off the trained model.
inline bool interpretable(StrategyId s) {
  return s == StrategyId::Baseline || s == StrategyId::M3 || s == StrategyId::M4;
}

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch = 32;
  std::size_t max_epochs = 80;
  std::uint64_t seed = 7;
  std::size_t image_size = 32;
  std::size_t conv1_channels = 8;
  std::size_t conv2_channels = 16;
  /// Width of the dense layer before the image output (the feature layer).
  std::size_t penultimate = 16;
  /// Hidden width of the black-box tabular branch and fusion layer.
  std::size_t branch_width = 64;
  forest::ForestParams forest;

  void validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidArgument("config: lr must be positive");
    if (batch == 0) throw InvalidArgument("config: batch must be positive");
    if (max_epochs == 0) throw InvalidArgument("config: max_epochs must be positive");
    if (image_size < 10) throw InvalidArgument("config: image_size must be at least 10");
    if (conv1_channels == 0 || conv2_channels == 0 || penultimate == 0 || branch_width == 0)
      throw InvalidArgument("config: layer widths must be positive");
    if (forest.n_trees == 0 || forest.min_leaf == 0) throw InvalidArgument("config: invalid forest parameters");
  }

  /// Everything that influences results; `forest.jobs` is excluded because
  /// forests are identical for any job count.
  nlohmann::json to_json() const {
    return {{"lr", lr},
            {"batch", batch},
            {"max_epochs", max_epochs},
            {"seed", seed},
            {"image_size", image_size},
            {"conv1_channels", conv1_channels},
            {"conv2_channels", conv2_channels},
            {"penultimate", penultimate},
            {"branch_width", branch_width},
            {"forest",
             {{"n_trees", forest.n_trees},
              {"max_depth", forest.max_depth},
              {"min_leaf", forest.min_leaf},
              {"max_features", forest.max_features}}}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lr = j.value("lr", c.lr);
    c.batch = j.value("batch", c.batch);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.seed = j.value("seed", c.seed);
    c.image_size = j.value("image_size", c.image_size);
    c.conv1_channels = j.value("conv1_channels", c.conv1_channels);
    c.conv2_channels = j.value("conv2_channels", c.conv2_channels);
    c.penultimate = j.value("penultimate", c.penultimate);
    c.branch_width = j.value("branch_width", c.branch_width);
    if (j.contains("forest")) {
      const auto& f = j.at("forest");
      c.forest.n_trees = f.value("n_trees", c.forest.n_trees);
      c.forest.max_depth = f.value("max_depth", c.forest.max_depth);
      c.forest.min_leaf = f.value("min_leaf", c.forest.min_leaf);
      c.forest.max_features = f.value("max_features", c.forest.max_features);
    }
    c.validate();
    return c;
  }
};

}  // namespace mvre::strategies
