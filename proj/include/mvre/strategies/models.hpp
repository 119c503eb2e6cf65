#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvre/error.hpp"
#include "mvre/forest/forest.hpp"
#include "mvre/numkit/tensor.hpp"
#include "mvre/rng.hpp"
#include "mvre/strategies/config.hpp"
#include "mvre/strategies/fit_loop.hpp"
#include "mvre/strategies/linear.hpp"
#include "mvre/strategies/nets.hpp"
#include "mvre/tabular/encode.hpp"
#include "mvre/tabular/schema.hpp"

namespace mvre::strategies {

inline constexpr const char* kImageColumn = "satellite_image";

/// One partition, already encoded: tabular features, optional [n,H,W,3]
/// images and the log-price target.
struct SplitData {
  tabular::FeatureMatrix features;
  std::optional<numkit::Tensor> images;
  std::vector<double> log_target;
  std::vector<std::string> ids;

  std::size_t rows() const { return features.rows; }

  numkit::Tensor tabular_tensor() const {
    if (features.rows == 0 || features.cols == 0) throw ShapeError("empty feature matrix");
    return numkit::Tensor({features.rows, features.cols}, features.values);
  }

  const numkit::Tensor& require_images() const {
    if (!images) throw MissingInputError("image source required for this strategy");
    if (images->dim(0) != rows()) throw ShapeError("image count does not match record count");
    return *images;
  }
};

struct TrainingData {
  SplitData train;
  SplitData val;
};

/// Affine map to a unit-variance, zero-mean training target.
struct TargetScaler {
  double mean = 0.0;
  double scale = 1.0;

  static TargetScaler fit(std::span<const double> y) {
    if (y.empty()) throw InvalidArgument("target scaler: empty target");
    double m = 0.0;
    for (double v : y) m += v;
    m /= static_cast<double>(y.size());
    double var = 0.0;
    for (double v : y) var += (v - m) * (v - m);
    const double sd = std::sqrt(var / static_cast<double>(y.size()));
    return {m, sd > 1e-12 ? sd : 1.0};
  }
  std::vector<double> forward(std::span<const double> y) const {
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = (y[i] - mean) / scale;
    return out;
  }
  double inverse(double z) const { return z * scale + mean; }

  nlohmann::json to_json() const { return {{"mean", mean}, {"scale", scale}}; }
  static TargetScaler from_json(const nlohmann::json& j) { return {j.at("mean"), j.at("scale")}; }
};

/// A trained network: architecture, parameters, target scaling, history.
struct NetModel {
  NetSpec spec;
  std::vector<numkit::Tensor> params;
  TargetScaler scaler;
  FitResult fit;

  BuiltNet network() const {
    if (params.empty()) throw InvalidArgument("untrained network");
    BuiltNet b = build_network(spec);
    b.net.set_params(params);
    return b;
  }

  /// Predictions in target units (log price or log residual).
  std::vector<double> predict(const NetInputs& in) const {
    const auto b = network();
    auto z = predict_net(b.net, in);
    for (double& v : z) v = scaler.inverse(v);
    return z;
  }
};

/// Seeds parameter initialisation for one network role within a run.
enum class NetRole : std::uint64_t { PriceCnn = 1, ResidualCnn = 2, Fusion = 3 };

inline std::uint64_t role_seed(std::uint64_t seed, NetRole role) {
  return mix_seed(seed) ^ static_cast<std::uint64_t>(role);
}

inline NetModel train_net(const NetSpec& spec, std::uint64_t init_seed, const NetInputs& train,
                          std::span<const double> y_train, const NetInputs& val, std::span<const double> y_val,
                          const TrainConfig& cfg) {
  BuiltNet b = init_network(spec, init_seed);
  NetModel m;
  m.spec = spec;
  m.scaler = TargetScaler::fit(y_train);
  const auto zt = m.scaler.forward(y_train);
  const auto zv = m.scaler.forward(y_val);
  m.fit = fit_loop(b.net, train, zt, val, zv, cfg);
  m.params = b.net.params();
  return m;
}

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
};

/// Penultimate-layer activations of an image network, one row per image.
inline Matrix extract_image_features(const NetModel& cnn, const numkit::Tensor& images) {
  const auto b = cnn.network();
  const NetInputs in{nullptr, &images};
  return {images.dim(0), cnn.spec.penultimate, node_activations(b.net, b.penultimate, in)};
}

/// [a | b] column concatenation; `b` may have zero columns.
inline Matrix concat_columns(std::span<const double> a, std::size_t rows, std::size_t a_cols, const Matrix& b) {
  if (a.size() != rows * a_cols) throw ShapeError("concat_columns: left matrix size mismatch");
  if (b.cols > 0 && b.rows != rows) throw ShapeError("concat_columns: row counts differ");
  Matrix out{rows, a_cols + b.cols, {}};
  out.values.reserve(rows * out.cols);
  for (std::size_t r = 0; r < rows; ++r) {
    out.values.insert(out.values.end(), a.begin() + static_cast<std::ptrdiff_t>(r * a_cols),
                      a.begin() + static_cast<std::ptrdiff_t>((r + 1) * a_cols));
    for (std::size_t c = 0; c < b.cols; ++c) out.values.push_back(b.values[r * b.cols + c]);
  }
  return out;
}

inline std::vector<double> ensemble_mean(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("ensemble: prediction lengths differ");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = 0.5 * a[i] + 0.5 * b[i];
  return out;
}

/// Everything needed to predict with one strategy.
struct TrainedArtifact {
  StrategyId strategy = StrategyId::Baseline;
  TrainConfig config;
  std::vector<std::string> feature_names;
  tabular::NormStats norm;
  std::optional<tabular::DatasetSchema> schema;
  std::optional<LinearFit> linear;  // baseline, m1 tabular kernel, m3 stage 1
  std::optional<LinearFit> stage3;  // m3
  std::optional<NetModel> cnn;      // m1, m2 (price target), m3 (residual target)
  std::optional<NetModel> fusion;   // m4, m5
  std::optional<forest::ForestModel> forest;

  /// Log-price predictions.
  std::vector<double> predict_log(const tabular::FeatureMatrix& x, const numkit::Tensor* images) const {
    if (x.cols != feature_names.size())
      throw ShapeError("artifact expects " + std::to_string(feature_names.size()) + " features, got " +
                       std::to_string(x.cols));
    if (uses_images(strategy)) {
      if (!images) throw MissingInputError("image source required for strategy " + to_string(strategy));
      if (images->dim(0) != x.rows) throw ShapeError("image count does not match record count");
    }
    const numkit::Tensor tab = x.rows && x.cols ? numkit::Tensor({x.rows, x.cols}, x.values) : numkit::Tensor({1});
    switch (strategy) {
      case StrategyId::Baseline: return linear->predict(x.values, x.rows);
      case StrategyId::M1:
        return ensemble_mean(linear->predict(x.values, x.rows), cnn->predict({nullptr, images}));
      case StrategyId::M2: {
        const auto m = concat_columns(x.values, x.rows, x.cols, extract_image_features(*cnn, *images));
        return forest->predict(forest::MatrixView(m.values, m.rows, m.cols));
      }
      case StrategyId::M3: {
        const Matrix boost{x.rows, 1, cnn->predict({nullptr, images})};
        const auto m = concat_columns(x.values, x.rows, x.cols, boost);
        return stage3->predict(m.values, m.rows);
      }
      case StrategyId::M4:
      case StrategyId::M5: return fusion->predict({&tab, images});
    }
    throw Error("unknown strategy");
  }
};

// ---- trainers ---------------------------------------------------------------

inline LinearFit fit_linear_on(const SplitData& d, std::span<const double> y) {
  return fit_linear_regression(d.features.values, d.rows(), d.features.cols, y, d.features.column_names);
}

inline TrainedArtifact new_artifact(StrategyId s, const TrainingData& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.train.rows() == 0 || data.val.rows() == 0) throw InvalidArgument("training and validation sets must be non-empty");
  if (data.train.log_target.size() != data.train.rows() || data.val.log_target.size() != data.val.rows())
    throw ShapeError("target length does not match feature rows");
  if (data.train.features.column_names != data.val.features.column_names)
    throw ShapeError("train and validation features are encoded differently");
  TrainedArtifact a;
  a.strategy = s;
  a.config = cfg;
  a.feature_names = data.train.features.column_names;
  a.norm = data.train.features.stats;
  return a;
}

inline TrainedArtifact train_baseline(const TrainingData& data, const TrainConfig& cfg) {
  auto a = new_artifact(StrategyId::Baseline, data, cfg);
  a.linear = fit_linear_on(data.train, data.train.log_target);
  return a;
}

/// Image CNN on log price; shared by m1 and m2.
inline NetModel train_price_cnn(const TrainingData& data, const TrainConfig& cfg) {
  const NetInputs tr{nullptr, &data.train.require_images()};
  const NetInputs va{nullptr, &data.val.require_images()};
  return train_net(NetSpec::from_config(NetKind::ImageCnn, 0, cfg), role_seed(cfg.seed, NetRole::PriceCnn), tr,
                   data.train.log_target, va, data.val.log_target, cfg);
}

inline TrainedArtifact train_m1_multikernel(const TrainingData& data, const TrainConfig& cfg,
                                            const NetModel* price_cnn = nullptr) {
  auto a = new_artifact(StrategyId::M1, data, cfg);
  a.linear = fit_linear_on(data.train, data.train.log_target);
  a.cnn = price_cnn ? *price_cnn : train_price_cnn(data, cfg);
  return a;
}

/// Forest on [tabular | image features]; `image_features` may have zero columns.
inline forest::ForestModel fit_concat_forest(const SplitData& d, const Matrix& image_features, const TrainConfig& cfg) {
  const auto m = concat_columns(d.features.values, d.rows(), d.features.cols, image_features);
  return forest::fit_forest(forest::MatrixView(m.values, m.rows, m.cols), d.log_target, cfg.forest, cfg.seed);
}

inline TrainedArtifact train_m2_concat_rf(const TrainingData& data, const TrainConfig& cfg,
                                          const NetModel* price_cnn = nullptr) {
  auto a = new_artifact(StrategyId::M2, data, cfg);
  a.cnn = price_cnn ? *price_cnn : train_price_cnn(data, cfg);
  a.forest = fit_concat_forest(data.train, extract_image_features(*a.cnn, data.train.require_images()), cfg);
  return a;
}

inline TrainedArtifact train_m3_boosted(const TrainingData& data, const TrainConfig& cfg) {
  auto a = new_artifact(StrategyId::M3, data, cfg);
  a.linear = fit_linear_on(data.train, data.train.log_target);
  auto residual = [&](const SplitData& d) {
    auto r = a.linear->predict(d.features.values, d.rows());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = d.log_target[i] - r[i];
    return r;
  };
  const auto r_train = residual(data.train);
  const auto r_val = residual(data.val);
  const NetInputs tr{nullptr, &data.train.require_images()};
  const NetInputs va{nullptr, &data.val.require_images()};
  a.cnn = train_net(NetSpec::from_config(NetKind::ImageCnn, 0, cfg), role_seed(cfg.seed, NetRole::ResidualCnn), tr,
                    r_train, va, r_val, cfg);
  const Matrix boost{data.train.rows(), 1, a.cnn->predict(tr)};
  const auto x3 = concat_columns(data.train.features.values, data.train.rows(), data.train.features.cols, boost);
  auto names = a.feature_names;
  names.emplace_back(kImageColumn);
  a.stage3 = fit_linear_regression(x3.values, x3.rows, x3.cols, data.train.log_target, names);
  return a;
}

struct HybridOptions {
  bool image_branch = true;
};

inline TrainedArtifact train_m4_hybrid(const TrainingData& data, const TrainConfig& cfg, HybridOptions opt = {}) {
  auto a = new_artifact(StrategyId::M4, data, cfg);
  auto spec = NetSpec::from_config(NetKind::Hybrid, data.train.features.cols, cfg);
  spec.image_branch = opt.image_branch;
  const auto tab_tr = data.train.tabular_tensor();
  const auto tab_va = data.val.tabular_tensor();
  a.fusion = train_net(spec, role_seed(cfg.seed, NetRole::Fusion), {&tab_tr, &data.train.require_images()},
                       data.train.log_target, {&tab_va, &data.val.require_images()}, data.val.log_target, cfg);
  return a;
}

inline TrainedArtifact train_m5_blackbox(const TrainingData& data, const TrainConfig& cfg) {
  auto a = new_artifact(StrategyId::M5, data, cfg);
  const auto spec = NetSpec::from_config(NetKind::BlackBox, data.train.features.cols, cfg);
  const auto tab_tr = data.train.tabular_tensor();
  const auto tab_va = data.val.tabular_tensor();
  a.fusion = train_net(spec, role_seed(cfg.seed, NetRole::Fusion), {&tab_tr, &data.train.require_images()},
                       data.train.log_target, {&tab_va, &data.val.require_images()}, data.val.log_target, cfg);
  return a;
}

/// Lets m1 and m2 reuse one price CNN within a run.
struct StrategyCache {
  std::optional<NetModel> price_cnn;
};

inline TrainedArtifact train_strategy(StrategyId s, const TrainingData& data, const TrainConfig& cfg,
                                      StrategyCache* cache = nullptr) {
  auto shared_cnn = [&]() -> const NetModel* {
    if (!cache) return nullptr;
    if (!cache->price_cnn) cache->price_cnn = train_price_cnn(data, cfg);
    return &*cache->price_cnn;
  };
  switch (s) {
    case StrategyId::Baseline: return train_baseline(data, cfg);
    case StrategyId::M1: return train_m1_multikernel(data, cfg, shared_cnn());
    case StrategyId::M2: return train_m2_concat_rf(data, cfg, shared_cnn());
    case StrategyId::M3: return train_m3_boosted(data, cfg);
    case StrategyId::M4: return train_m4_hybrid(data, cfg);
    case StrategyId::M5: return train_m5_blackbox(data, cfg);
  }
  throw InvalidArgument("unknown strategy");
}

// ---- coefficients -----------------------------------------------------------

struct CoefficientReport {
  StrategyId strategy = StrategyId::Baseline;
  std::vector<Coefficient> coefficients;  // intercept first
  bool has_standard_errors = true;
  std::vector<std::string> dropped;

  const Coefficient* find(const std::string& name) const {
    for (const auto& c : coefficients)
      if (c.name == name) return &c;
    return nullptr;
  }

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& c : coefficients) {
      nlohmann::json r{{"name", c.name}, {"estimate", c.estimate}};
      if (has_standard_errors) {
        r["std_error"] = c.std_error;
        r["t_value"] = c.t_value;
      }
      rows.push_back(r);
    }
    return {{"strategy", to_string(strategy)}, {"coefficients", rows}, {"dropped", dropped}};
  }
};

inline CoefficientReport extract_coefficients(const TrainedArtifact& a) {
  CoefficientReport r;
  r.strategy = a.strategy;
  switch (a.strategy) {
    case StrategyId::Baseline:
      r.coefficients = a.linear->coefficients;
      r.dropped = a.linear->dropped;
      return r;
    case StrategyId::M3:
      r.coefficients = a.stage3->coefficients;
      r.dropped = a.stage3->dropped;
      return r;
    case StrategyId::M4: {
      // Final layer weights rescaled from the standardised to the log-price target.
      const auto& p = a.fusion->params;
      const auto b = build_network(a.fusion->spec);
      const auto& w = p.at(b.head_weight);
      const auto& bias = p.at(b.head_bias);
      const double s = a.fusion->scaler.scale;
      r.has_standard_errors = false;
      r.coefficients.push_back({"intercept", bias[0] * s + a.fusion->scaler.mean, 0.0, 0.0});
      for (std::size_t j = 0; j < a.feature_names.size(); ++j) r.coefficients.push_back({a.feature_names[j], w[j] * s, 0.0, 0.0});
      r.coefficients.push_back({kImageColumn, w[a.feature_names.size()] * s, 0.0, 0.0});
      return r;
    }
    default:
      throw NotInterpretableError("strategy " + to_string(a.strategy) + " is not interpretable (coefficients exist for baseline, m3, m4)");
  }
}

}  // namespace mvre::strategies
