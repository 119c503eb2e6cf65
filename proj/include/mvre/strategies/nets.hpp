#pragma once

#include <string>

#include <json.hpp>

#include "mvre/error.hpp"
#include "mvre/numkit/network.hpp"
#include "mvre/strategies/config.hpp"

namespace mvre::strategies {

enum class NetKind {
  ImageCnn,  // image -> trunk -> Dense(1)
  Hybrid,    // [identity(tabular), trunk -> Dense(1)] -> Dense(1)
  BlackBox,  // [Dense(64)+ReLU(tabular), trunk] -> Dense(64)+ReLU -> Dense(1)
};

inline std::string to_string(NetKind k) {
  switch (k) {
    case NetKind::ImageCnn: return "image_cnn";
    case NetKind::Hybrid: return "hybrid";
    case NetKind::BlackBox: return "black_box";
  }
  return "?";
}

inline NetKind parse_net_kind(const std::string& s) {
  for (auto k : {NetKind::ImageCnn, NetKind::Hybrid, NetKind::BlackBox})
    if (to_string(k) == s) return k;
  throw DataError("unknown network kind '" + s + "'");
}

struct NetSpec {
  NetKind kind = NetKind::ImageCnn;
  std::size_t tabular_width = 0;
  std::size_t image_size = 32;
  std::size_t conv1_channels = 8;
  std::size_t conv2_channels = 16;
  std::size_t penultimate = 16;
  std::size_t branch_width = 64;
  /// Hybrid only: false pins the image scalar to 0 (weights zeroed and frozen).
  bool image_branch = true;

  static NetSpec from_config(NetKind kind, std::size_t tabular_width, const TrainConfig& c) {
    return {kind, tabular_width, c.image_size, c.conv1_channels, c.conv2_channels, c.penultimate, c.branch_width, true};
  }

  nlohmann::json to_json() const {
    return {{"kind", to_string(kind)},
            {"tabular_width", tabular_width},
            {"image_size", image_size},
            {"conv1_channels", conv1_channels},
            {"conv2_channels", conv2_channels},
            {"penultimate", penultimate},
            {"branch_width", branch_width},
            {"image_branch", image_branch}};
  }

  static NetSpec from_json(const nlohmann::json& j) {
    NetSpec s;
    s.kind = parse_net_kind(j.at("kind").get<std::string>());
    s.tabular_width = j.at("tabular_width");
    s.image_size = j.at("image_size");
    s.conv1_channels = j.at("conv1_channels");
    s.conv2_channels = j.at("conv2_channels");
    s.penultimate = j.at("penultimate");
    s.branch_width = j.at("branch_width");
    s.image_branch = j.at("image_branch");
    return s;
  }
};

struct BuiltNet {
  numkit::Network net;
  numkit::NodeId penultimate = 0;  // ReLU after the trunk's feature layer
  std::size_t head_weight = numkit::kNoParam;
  std::size_t head_bias = numkit::kNoParam;
  std::size_t image_scalar_weight = numkit::kNoParam;  // Hybrid only
  std::size_t image_scalar_bias = numkit::kNoParam;
};

/// Builds the architecture; parameters are left uninitialised (zero).
inline BuiltNet build_network(const NetSpec& spec) {
  if (spec.kind != NetKind::ImageCnn && spec.tabular_width == 0)
    throw InvalidArgument("network needs at least one tabular feature");
  BuiltNet b;
  auto& n = b.net;
  const auto img = n.image_input(spec.image_size, spec.image_size, 3);
  auto h = n.maxpool2(n.relu(n.conv2d(img, spec.conv1_channels, 3)));
  h = n.maxpool2(n.relu(n.conv2d(h, spec.conv2_channels, 3)));
  b.penultimate = n.relu(n.dense(n.flatten(h), spec.penultimate));

  auto head = [&](numkit::NodeId in) {
    const auto out = n.dense(in, 1);
    b.head_weight = n.node(out).weight;
    b.head_bias = n.node(out).bias;
    n.set_output(out);
  };
  switch (spec.kind) {
    case NetKind::ImageCnn: head(b.penultimate); break;
    case NetKind::Hybrid: {
      const auto tab = n.identity(n.tabular_input(spec.tabular_width));
      const auto scalar = n.dense(b.penultimate, 1);
      b.image_scalar_weight = n.node(scalar).weight;
      b.image_scalar_bias = n.node(scalar).bias;
      head(n.concat(tab, scalar));
      break;
    }
    case NetKind::BlackBox: {
      const auto tab = n.relu(n.dense(n.tabular_input(spec.tabular_width), spec.branch_width));
      head(n.relu(n.dense(n.concat(tab, b.penultimate), spec.branch_width)));
      break;
    }
  }
  return b;
}

/// Builds and seeds the parameters; for a Hybrid without image branch the
/// image scalar is zeroed and frozen.
inline BuiltNet init_network(const NetSpec& spec, std::uint64_t seed) {
  BuiltNet b = build_network(spec);
  b.net.init_params(seed);
  if (spec.kind == NetKind::Hybrid && !spec.image_branch) {
    auto& p = b.net.mutable_params();
    for (auto idx : {b.image_scalar_weight, b.image_scalar_bias}) {
      for (double& v : p[idx].data()) v = 0.0;
      b.net.freeze(idx);
    }
  }
  return b;
}

}  // namespace mvre::strategies
