#pragma once

#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvre/error.hpp"
#include "mvre/numkit/adam.hpp"
#include "mvre/numkit/loss.hpp"
#include "mvre/numkit/network.hpp"
#include "mvre/rng.hpp"
#include "mvre/strategies/config.hpp"

namespace mvre::strategies {

/// Non-owning view of a network's inputs for n samples.
struct NetInputs {
  const numkit::Tensor* tabular = nullptr;  // [n, d]
  const numkit::Tensor* images = nullptr;   // [n, H, W, C]

  std::size_t rows() const {
    if (tabular && images && tabular->dim(0) != images->dim(0)) throw ShapeError("tabular and image row counts differ");
    if (tabular) return tabular->dim(0);
    if (images) return images->dim(0);
    return 0;
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct FitResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();

  nlohmann::json to_json() const {
    nlohmann::json h = nlohmann::json::array();
    for (const auto& e : history) h.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    return {{"best_epoch", best_epoch}, {"best_val_loss", best_val_loss}, {"history", h}};
  }
  static FitResult from_json(const nlohmann::json& j) {
    FitResult r;
    r.best_epoch = j.at("best_epoch");
    r.best_val_loss = j.at("best_val_loss");
    for (const auto& e : j.at("history")) r.history.push_back({e.at("epoch"), e.at("train_loss"), e.at("val_loss")});
    return r;
  }
};

/// Replaces the validation loss computation; receives the network after the
/// given (1-based) epoch.
using ValidationOverride = std::function<double(const numkit::Network&, std::size_t epoch)>;

/// Calls `fn(result, first_row, count)` for consecutive chunks of samples.
template <class Fn>
void forward_chunks(const numkit::Network& net, const NetInputs& in, Fn&& fn, std::size_t chunk = 256) {
  const std::size_t n = in.rows();
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    idx.resize(count);
    std::iota(idx.begin(), idx.end(), start);
    std::optional<numkit::Tensor> tab;
    std::optional<numkit::Tensor> img;
    if (in.tabular) tab = numkit::slice_rows(*in.tabular, idx);
    if (in.images) img = numkit::slice_rows(*in.images, idx);
    fn(net.forward(tab ? &*tab : nullptr, img ? &*img : nullptr), start, count);
  }
}

inline std::vector<double> predict_net(const numkit::Network& net, const NetInputs& in) {
  std::vector<double> out(in.rows());
  forward_chunks(net, in, [&](const numkit::ForwardResult& r, std::size_t start, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) out[start + i] = r.output[i];
  });
  return out;
}

/// Activations of `node` for every sample, row-major [n, width].
inline std::vector<double> node_activations(const numkit::Network& net, numkit::NodeId node, const NetInputs& in) {
  const std::size_t width = numkit::shape_size(net.node(node).out_shape);
  std::vector<double> out(in.rows() * width);
  forward_chunks(net, in, [&](const numkit::ForwardResult& r, std::size_t start, std::size_t count) {
    const auto& a = r.cache.activations.at(node);
    if (a.empty()) throw InvalidArgument("node is not on the path to the output");
    std::copy_n(a.data().begin(), count * width, out.begin() + static_cast<std::ptrdiff_t>(start * width));
  });
  return out;
}

/// Mini-batch Adam on the composite loss with early stopping: after each
/// epoch the validation loss is measured and the parameters of the best epoch
/// (earliest on ties) are restored at the end. Frozen parameters receive no
/// updates. Epoch e shuffles with Rng(seed + e).
inline FitResult fit_loop(numkit::Network& net, const NetInputs& train, std::span<const double> y_train,
                          const NetInputs& val, std::span<const double> y_val, const TrainConfig& cfg,
                          const ValidationOverride& val_override = {}) {
  cfg.validate();
  const std::size_t n = train.rows();
  if (n == 0 || n != y_train.size()) throw ShapeError("fit_loop: training inputs and targets disagree");
  if (!val_override && (val.rows() == 0 || val.rows() != y_val.size()))
    throw ShapeError("fit_loop: validation inputs and targets disagree");

  const numkit::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};
  numkit::AdamState state;
  FitResult result;
  std::vector<numkit::Tensor> best = net.params();
  std::vector<std::size_t> order(n);
  std::vector<double> batch_target;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.seed + epoch);
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    for (std::size_t start = 0, b = 0; start < n; start += cfg.batch, ++b) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch, n - start));
      std::optional<numkit::Tensor> tab;
      std::optional<numkit::Tensor> img;
      if (train.tabular) tab = numkit::slice_rows(*train.tabular, idx);
      if (train.images) img = numkit::slice_rows(*train.images, idx);
      batch_target.clear();
      for (auto i : idx) batch_target.push_back(y_train[i]);
      auto fail = [&](const std::string& why) {
        return DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                               ": " + why + " (try a smaller learning rate)");
      };
      numkit::ForwardResult fwd;
      numkit::LossResult loss;
      try {
        fwd = net.forward(tab ? &*tab : nullptr, img ? &*img : nullptr);
        loss = numkit::composite_loss(fwd.output, batch_target);
      } catch (const NonFiniteError& e) {
        throw fail(e.what());
      }
      auto grads = net.backward(fwd.cache, loss.grad);
      for (std::size_t p = 0; p < grads.size(); ++p)
        if (net.frozen(p)) std::fill(grads[p].data().begin(), grads[p].data().end(), 0.0);
      numkit::adam_step(net.mutable_params(), grads, state, adam);
      loss_sum += loss.value * static_cast<double>(idx.size());
    }

    double val_loss = 0.0;
    if (val_override) {
      val_loss = val_override(net, epoch);
    } else {
      try {
        const auto pred = predict_net(net, val);
        val_loss = numkit::composite_loss(numkit::Tensor({pred.size(), 1}, pred), y_val).value;
      } catch (const NonFiniteError& e) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + " (validation): " + e.what());
      }
    }
    if (!std::isfinite(val_loss))
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ": non-finite validation loss");
    result.history.push_back({epoch, loss_sum / static_cast<double>(n), val_loss});
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      best = net.params();
    }
  }
  net.set_params(std::move(best));
  return result;
}

}  // namespace mvre::strategies
