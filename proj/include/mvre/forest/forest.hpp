#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mvre/error.hpp"
#include "mvre/rng.hpp"

namespace mvre::forest {

/// Row-major n x d view of training or query data.
struct MatrixView {
  std::span<const double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;

  MatrixView(std::span<const double> v, std::size_t r, std::size_t c) : values(v), rows(r), cols(c) {
    if (v.size() != r * c) throw ShapeError("matrix view: value count does not match rows x cols");
  }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return values.subspan(r * cols, cols); }
};

struct ForestParams {
  std::size_t n_trees = 50;
  std::size_t max_depth = 12;
  std::size_t min_leaf = 2;
  std::size_t max_features = 0;  // 0 = ceil(d / 3)
  std::size_t jobs = 1;

  std::size_t features_for(std::size_t d) const {
    const std::size_t m = max_features == 0 ? (d + 2) / 3 : max_features;
    return std::clamp<std::size_t>(m, 1, d);
  }
};

/// Flat tree node. Leaves have feature == -1.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  double value = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;

  bool is_leaf() const noexcept { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> row) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf())
      i = static_cast<std::size_t>(row[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold ? nodes[i].left
                                                                                                          : nodes[i].right);
    return nodes[i].value;
  }

  std::size_t depth(std::size_t i = 0) const {
    if (nodes[i].is_leaf()) return 0;
    return 1 + std::max(depth(static_cast<std::size_t>(nodes[i].left)), depth(static_cast<std::size_t>(nodes[i].right)));
  }
};

namespace detail {

struct SplitChoice {
  std::int32_t feature = -1;
  double threshold = 0.0;
  double score = -std::numeric_limits<double>::infinity();
};

class TreeBuilder {
 public:
  TreeBuilder(const MatrixView& x, std::span<const double> y, const ForestParams& params, Rng& rng)
      : x_(x), y_(y), params_(params), rng_(rng), n_features_(params.features_for(x.cols)) {}

  Tree build(std::vector<std::size_t> sample) {
    Tree tree;
    tree.nodes.emplace_back();
    grow(tree, 0, sample, 0);
    return tree;
  }

 private:
  void grow(Tree& tree, std::size_t node, std::vector<std::size_t>& sample, std::size_t depth) {
    double sum = 0.0;
    for (auto i : sample) sum += y_[i];
    const double n = static_cast<double>(sample.size());
    tree.nodes[node].value = sum / n;

    const bool pure = std::all_of(sample.begin(), sample.end(), [&](std::size_t i) { return y_[i] == y_[sample[0]]; });
    if (pure || depth >= params_.max_depth || sample.size() < 2 * params_.min_leaf) return;

    const auto choice = best_split(sample, sum * sum / n);
    if (choice.feature < 0) return;

    std::vector<std::size_t> left, right;
    for (auto i : sample)
      (x_.at(i, static_cast<std::size_t>(choice.feature)) <= choice.threshold ? left : right).push_back(i);
    sample.clear();
    sample.shrink_to_fit();

    tree.nodes[node].feature = choice.feature;
    tree.nodes[node].threshold = choice.threshold;
    const auto l = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    const auto r = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[node].left = l;
    tree.nodes[node].right = r;
    grow(tree, static_cast<std::size_t>(l), left, depth + 1);
    grow(tree, static_cast<std::size_t>(r), right, depth + 1);
  }

  // Maximizes sum_L^2/n_L + sum_R^2/n_R, which is equivalent to minimizing
  // the children's summed squared error. Features are scanned in ascending
  // index order and thresholds ascending; only strict improvements replace
  // the incumbent, so ties resolve to the lowest feature then threshold.
  SplitChoice best_split(const std::vector<std::size_t>& sample, double parent_score) {
    SplitChoice best;
    best.score = parent_score;
    std::vector<std::size_t> order = sample;
    for (std::size_t f : feature_subset()) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x_.at(a, f) < x_.at(b, f); });
      const std::size_t n = order.size();
      double total = 0.0;
      for (auto i : order) total += y_[i];
      double left_sum = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left_sum += y_[order[k]];
        const double lo = x_.at(order[k], f);
        const double hi = x_.at(order[k + 1], f);
        if (!(lo < hi)) continue;
        const std::size_t nl = k + 1, nr = n - nl;
        if (nl < params_.min_leaf || nr < params_.min_leaf) continue;
        const double right_sum = total - left_sum;
        const double score = left_sum * left_sum / static_cast<double>(nl) + right_sum * right_sum / static_cast<double>(nr);
        if (score > best.score + 1e-12 * std::abs(best.score)) {
          best.score = score;
          best.feature = static_cast<std::int32_t>(f);
          best.threshold = lo + (hi - lo) / 2.0;
        }
      }
    }
    return best;
  }

  std::vector<std::size_t> feature_subset() {
    std::vector<std::size_t> all(x_.cols);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (n_features_ < all.size()) {
      for (std::size_t i = 0; i < n_features_; ++i) std::swap(all[i], all[i + rng_.below(all.size() - i)]);
      all.resize(n_features_);
      std::sort(all.begin(), all.end());
    }
    return all;
  }

  const MatrixView& x_;
  std::span<const double> y_;
  const ForestParams& params_;
  Rng& rng_;
  std::size_t n_features_;
};

inline void check_inputs(const MatrixView& x, std::span<const double> y) {
  if (x.rows == 0 || x.cols == 0) throw InvalidArgument("forest: empty training input");
  if (y.size() != x.rows) throw ShapeError("forest: target length does not match rows");
  for (double v : x.values)
    if (!std::isfinite(v)) throw NonFiniteError("forest: non-finite feature value");
  for (double v : y)
    if (!std::isfinite(v)) throw NonFiniteError("forest: non-finite target value");
}

}  // namespace detail

/// Greedy CART regression tree on all rows of `x`.
inline Tree fit_tree(const MatrixView& x, std::span<const double> y, const ForestParams& params, Rng& rng) {
  detail::check_inputs(x, y);
  std::vector<std::size_t> sample(x.rows);
  std::iota(sample.begin(), sample.end(), std::size_t{0});
  return detail::TreeBuilder(x, y, params, rng).build(std::move(sample));
}

struct ForestModel {
  std::vector<Tree> trees;
  ForestParams params;
  std::uint64_t seed = 0;
  std::size_t n_features = 0;

  double predict_row(std::span<const double> row) const {
    if (row.size() != n_features) throw ShapeError("forest: expected " + std::to_string(n_features) + " features");
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(row);
    return s / static_cast<double>(trees.size());
  }

  std::vector<double> predict(const MatrixView& x) const {
    if (x.cols != n_features)
      throw ShapeError("forest: expected " + std::to_string(n_features) + " features, got " + std::to_string(x.cols));
    std::vector<double> out(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) out[r] = predict_row(x.row(r));
    return out;
  }
};

/// Bagged forest. Tree i draws its bootstrap sample and feature subsets from
/// its own stream seeded by mix(seed) xor i, so any `jobs` value yields the
/// same model.
inline ForestModel fit_forest(const MatrixView& x, std::span<const double> y, const ForestParams& params,
                              std::uint64_t seed) {
  detail::check_inputs(x, y);
  if (params.n_trees == 0) throw InvalidArgument("forest: n_trees must be at least 1");
  if (params.min_leaf == 0) throw InvalidArgument("forest: min_leaf must be at least 1");
  ForestModel model{std::vector<Tree>(params.n_trees), params, seed, x.cols};
  auto fit_one = [&](std::size_t t) {
    Rng rng(mix_seed(seed) ^ static_cast<std::uint64_t>(t));
    std::vector<std::size_t> sample(x.rows);
    for (auto& s : sample) s = rng.below(x.rows);
    model.trees[t] = detail::TreeBuilder(x, y, params, rng).build(std::move(sample));
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(params.jobs, params.n_trees));
  if (jobs == 1) {
    for (std::size_t t = 0; t < params.n_trees; ++t) fit_one(t);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j)
      pool.emplace_back([&, j] {
        for (std::size_t t = j; t < params.n_trees; t += jobs) fit_one(t);
      });
  }
  return model;
}

// ---- JSON (nested nodes) ---------------------------------------------------

namespace detail {

inline nlohmann::json node_to_json(const Tree& tree, std::size_t i) {
  const auto& n = tree.nodes[i];
  if (n.is_leaf()) return {{"value", n.value}};
  return {{"feature", n.feature},
          {"threshold", n.threshold},
          {"left", node_to_json(tree, static_cast<std::size_t>(n.left))},
          {"right", node_to_json(tree, static_cast<std::size_t>(n.right))}};
}

inline std::int32_t node_from_json(Tree& tree, const nlohmann::json& j) {
  const auto idx = static_cast<std::int32_t>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (j.contains("value")) {
    tree.nodes[static_cast<std::size_t>(idx)].value = j.at("value").get<double>();
    return idx;
  }
  const auto feature = j.at("feature").get<std::int32_t>();
  const auto threshold = j.at("threshold").get<double>();
  const auto l = node_from_json(tree, j.at("left"));
  const auto r = node_from_json(tree, j.at("right"));
  auto& n = tree.nodes[static_cast<std::size_t>(idx)];
  n.feature = feature;
  n.threshold = threshold;
  n.left = l;
  n.right = r;
  return idx;
}

}  // namespace detail

inline nlohmann::json to_json(const ForestModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) trees.push_back(detail::node_to_json(t, 0));
  return {{"n_features", m.n_features},
          {"seed", m.seed},
          {"params",
           {{"n_trees", m.params.n_trees},
            {"max_depth", m.params.max_depth},
            {"min_leaf", m.params.min_leaf},
            {"max_features", m.params.max_features}}},
          {"trees", trees}};
}

inline ForestModel forest_from_json(const nlohmann::json& j) {
  try {
    ForestModel m;
    m.n_features = j.at("n_features").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& p = j.at("params");
    m.params.n_trees = p.at("n_trees");
    m.params.max_depth = p.at("max_depth");
    m.params.min_leaf = p.at("min_leaf");
    m.params.max_features = p.at("max_features");
    for (const auto& t : j.at("trees")) {
      Tree tree;
      detail::node_from_json(tree, t);
      for (const auto& n : tree.nodes)
        if (!n.is_leaf() && static_cast<std::size_t>(n.feature) >= m.n_features)
          throw DataError("forest json: split feature out of range");
      m.trees.push_back(std::move(tree));
    }
    if (m.trees.empty()) throw DataError("forest json: no trees");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("forest json: ") + e.what());
  }
}

}  // namespace mvre::forest
