#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mvre/error.hpp"
#include "mvre/numkit/tensor.hpp"
#include "mvre/rng.hpp"

namespace mvre::numkit {

enum class LayerKind { TabularInput, ImageInput, Dense, Conv2D, ReLU, MaxPool2, Flatten, Concat, Identity };

inline const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::TabularInput: return "tabular_input";
    case LayerKind::ImageInput: return "image_input";
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2D: return "conv2d";
    case LayerKind::ReLU: return "relu";
    case LayerKind::MaxPool2: return "maxpool2";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Concat: return "concat";
    case LayerKind::Identity: return "identity";
  }
  return "?";
}

using NodeId = std::size_t;
inline constexpr std::size_t kNoParam = std::numeric_limits<std::size_t>::max();

/// One layer of the graph. Shapes are per sample; the batch axis is implicit.
struct Node {
  LayerKind kind{};
  std::vector<NodeId> inputs;
  Shape out_shape;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t weight = kNoParam;
  std::size_t bias = kNoParam;
};

/// Activation record of one forward pass. Valid for backward only while the
/// producing network's parameters are unchanged.
struct ForwardCache {
  std::uint64_t network_id = 0;
  std::uint64_t version = 0;
  std::size_t batch = 0;
  std::vector<Tensor> activations;
  std::vector<std::vector<std::uint32_t>> argmax;
};

struct ForwardResult {
  Tensor output;  // [batch, 1]
  ForwardCache cache;
};

/// Acyclic layer graph with at most one tabular port, at most one image port
/// and a single scalar-per-sample output.
///
/// Nodes are appended in topological order: every builder call may only
/// reference nodes that already exist, so the wiring cannot contain cycles.
/// Images use NHWC layout.
class Network {
 public:
  Network() : id_(next_id()) {}
  Network(const Network& other) : Network() { copy_from(other); }
  Network& operator=(const Network& other) {
    if (this != &other) {
      copy_from(other);
      ++version_;
    }
    return *this;
  }
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  // ---- graph construction -------------------------------------------------

  NodeId tabular_input(std::size_t width) {
    if (tabular_port_) throw InvalidArgument("network already has a tabular input port");
    if (width == 0) throw ShapeError("tabular port width must be positive");
    tabular_port_ = add({LayerKind::TabularInput, {}, {width}});
    return *tabular_port_;
  }

  NodeId image_input(std::size_t height, std::size_t width, std::size_t channels) {
    if (image_port_) throw InvalidArgument("network already has an image input port");
    if (height == 0 || width == 0 || channels == 0) throw ShapeError("image port dims must be positive");
    image_port_ = add({LayerKind::ImageInput, {}, {height, width, channels}});
    return *image_port_;
  }

  NodeId dense(NodeId in, std::size_t out_features, bool bias = true) {
    const Shape& s = shape_of(in);
    if (s.size() != 1) throw ShapeError("dense expects a flat input, got " + to_string(s));
    if (out_features == 0) throw ShapeError("dense output width must be positive");
    Node n{LayerKind::Dense, {in}, {out_features}};
    n.weight = add_param({out_features, s[0]}, s[0], out_features);
    if (bias) n.bias = add_param({out_features}, 0, 0);
    return add(std::move(n));
  }

  NodeId conv2d(NodeId in, std::size_t c_out, std::size_t kernel, std::size_t stride = 1) {
    const Shape& s = shape_of(in);
    if (s.size() != 3) throw ShapeError("conv2d expects [H,W,C] input, got " + to_string(s));
    if (kernel == 0 || stride == 0 || c_out == 0) throw ShapeError("conv2d kernel/stride/channels must be positive");
    if (s[0] < kernel || s[1] < kernel) throw ShapeError("conv2d kernel larger than input " + to_string(s));
    const std::size_t h = (s[0] - kernel) / stride + 1;
    const std::size_t w = (s[1] - kernel) / stride + 1;
    Node n{LayerKind::Conv2D, {in}, {h, w, c_out}};
    n.kernel = kernel;
    n.stride = stride;
    n.weight = add_param({c_out, kernel, kernel, s[2]}, kernel * kernel * s[2], kernel * kernel * c_out);
    n.bias = add_param({c_out}, 0, 0);
    return add(std::move(n));
  }

  NodeId relu(NodeId in) { return add({LayerKind::ReLU, {in}, shape_of(in)}); }
  NodeId identity(NodeId in) { return add({LayerKind::Identity, {in}, shape_of(in)}); }

  NodeId maxpool2(NodeId in) {
    const Shape& s = shape_of(in);
    if (s.size() != 3 || s[0] < 2 || s[1] < 2) throw ShapeError("maxpool2 expects [H>=2,W>=2,C], got " + to_string(s));
    return add({LayerKind::MaxPool2, {in}, {s[0] / 2, s[1] / 2, s[2]}});
  }

  NodeId flatten(NodeId in) { return add({LayerKind::Flatten, {in}, {shape_size(shape_of(in))}}); }

  NodeId concat(NodeId a, NodeId b) {
    const Shape& sa = shape_of(a);
    const Shape& sb = shape_of(b);
    if (sa.size() != 1 || sb.size() != 1) throw ShapeError("concat expects flat inputs");
    return add({LayerKind::Concat, {a, b}, {sa[0] + sb[0]}});
  }

  void set_output(NodeId out) {
    const Shape& s = shape_of(out);
    if (s != Shape{1}) throw ShapeError("output port must be scalar per sample, got " + to_string(s));
    output_ = out;
    ancestors_ = compute_ancestors(out);
  }

  // ---- parameters -----------------------------------------------------------

  /// Seeded uniform init in +-sqrt(6/(fan_in+fan_out)); biases start at zero.
  void init_params(std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      const auto [fan_in, fan_out] = fans_[i];
      if (fan_in + fan_out == 0) {
        std::fill(p.data().begin(), p.data().end(), 0.0);
        continue;
      }
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (double& v : p.data()) v = rng.uniform(-limit, limit);
    }
    ++version_;
  }

  const std::vector<Tensor>& params() const noexcept { return params_; }
  /// Mutable access invalidates outstanding forward caches.
  std::vector<Tensor>& mutable_params() noexcept {
    ++version_;
    return params_;
  }

  void set_params(std::vector<Tensor> params) {
    if (params.size() != params_.size()) throw ShapeError("parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i].shape() != params_[i].shape())
        throw ShapeError("parameter " + std::to_string(i) + " shape " + to_string(params[i].shape()) +
                         " does not match " + to_string(params_[i].shape()));
    params_ = std::move(params);
    ++version_;
  }

  void freeze(std::size_t param) { frozen_.at(param) = true; }
  bool frozen(std::size_t param) const { return frozen_.at(param); }

  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::optional<NodeId> tabular_port() const noexcept { return tabular_port_; }
  std::optional<NodeId> image_port() const noexcept { return image_port_; }
  std::optional<NodeId> output() const noexcept { return output_; }
  std::uint64_t id() const noexcept { return id_; }

  // ---- evaluation ---------------------------------------------------------

  /// Runs the graph on a batch. `tabular` is [N, width], `image` is [N, H, W, C].
  /// Only ports connected to the output are required.
  ForwardResult forward(const Tensor* tabular, const Tensor* image) const {
    if (!output_) throw InvalidArgument("network output not set");
    std::optional<std::size_t> batch;
    auto check_port = [&](const std::optional<NodeId>& port, const Tensor* t, const char* name) {
      if (!port || !ancestors_[*port]) return;
      if (t == nullptr) throw MissingInputError(std::string("missing required ") + name + " input");
      const Shape& per_sample = nodes_[*port].out_shape;
      if (t->rank() != per_sample.size() + 1 || !std::equal(per_sample.begin(), per_sample.end(), t->shape().begin() + 1))
        throw ShapeError(std::string(name) + " input shape " + to_string(t->shape()) + " does not match port " +
                         to_string(per_sample));
      if (batch && *batch != t->dim(0)) throw ShapeError("input batch sizes differ between ports");
      batch = t->dim(0);
    };
    check_port(tabular_port_, tabular, "tabular");
    check_port(image_port_, image, "image");
    if (!batch) throw MissingInputError("network has no connected input port");

    ForwardCache cache;
    cache.network_id = id_;
    cache.version = version_;
    cache.batch = *batch;
    cache.activations.resize(nodes_.size());
    cache.argmax.resize(nodes_.size());

    for (NodeId id = 0; id < nodes_.size(); ++id) {
      if (!ancestors_[id]) continue;
      const Node& n = nodes_[id];
      Tensor out = [&]() -> Tensor {
        switch (n.kind) {
          case LayerKind::TabularInput: return *tabular;
          case LayerKind::ImageInput: return *image;
          case LayerKind::Dense: return dense_forward(n, cache.activations[n.inputs[0]]);
          case LayerKind::Conv2D: return conv_forward(n, cache.activations[n.inputs[0]]);
          case LayerKind::ReLU: {
            Tensor t = cache.activations[n.inputs[0]];
            for (double& v : t.data()) v = v > 0.0 ? v : 0.0;
            return t;
          }
          case LayerKind::MaxPool2: return pool_forward(n, cache.activations[n.inputs[0]], cache.argmax[id]);
          case LayerKind::Flatten:
          case LayerKind::Identity: {
            const Tensor& in = cache.activations[n.inputs[0]];
            return in.reshaped(batched(n.out_shape, *batch));
          }
          case LayerKind::Concat: return concat_forward(n, cache.activations[n.inputs[0]], cache.activations[n.inputs[1]]);
        }
        throw Error("unknown layer kind");
      }();
      if (!out.all_finite())
        throw NonFiniteError(std::string("non-finite activation at node ") + std::to_string(id) + " (" +
                             to_string(n.kind) + ")");
      cache.activations[id] = std::move(out);
    }
    Tensor output = cache.activations[*output_];
    return {std::move(output), std::move(cache)};
  }

  /// Reverse pass. `loss_grad` holds dLoss/dOutput, one value per sample.
  /// Returns one gradient per parameter tensor; parameters outside the
  /// output's ancestry get zero gradients.
  std::vector<Tensor> backward(const ForwardCache& cache, const Tensor& loss_grad) const {
    if (cache.network_id != id_ || cache.version != version_ || cache.activations.size() != nodes_.size())
      throw StaleCacheError("forward cache does not belong to this network state");
    if (loss_grad.size() != cache.batch) throw ShapeError("loss gradient length does not match batch");
    require_finite(loss_grad, "loss gradient");

    std::vector<Tensor> grads;
    grads.reserve(params_.size());
    for (const auto& p : params_) grads.emplace_back(p.shape());

    std::vector<std::optional<Tensor>> node_grad(nodes_.size());
    node_grad[*output_] = loss_grad.reshaped({cache.batch, 1});

    for (NodeId id = nodes_.size(); id-- > 0;) {
      if (!node_grad[id]) continue;
      const Node& n = nodes_[id];
      const Tensor& g = *node_grad[id];
      auto accumulate = [&](NodeId target, Tensor contribution) {
        if (is_port(target)) return;
        if (!node_grad[target]) {
          node_grad[target] = std::move(contribution);
        } else {
          auto dst = node_grad[target]->data();
          const auto src = contribution.data();
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
      };
      switch (n.kind) {
        case LayerKind::TabularInput:
        case LayerKind::ImageInput: break;
        case LayerKind::Dense:
          dense_backward(n, cache.activations[n.inputs[0]], g, grads, accumulate);
          break;
        case LayerKind::Conv2D:
          conv_backward(n, cache.activations[n.inputs[0]], g, grads, accumulate);
          break;
        case LayerKind::ReLU: {
          Tensor dx = g.reshaped(cache.activations[n.inputs[0]].shape());
          const auto x = cache.activations[n.inputs[0]].data();
          auto d = dx.data();
          for (std::size_t i = 0; i < d.size(); ++i)
            if (!(x[i] > 0.0)) d[i] = 0.0;
          accumulate(n.inputs[0], std::move(dx));
          break;
        }
        case LayerKind::MaxPool2: {
          const Tensor& x = cache.activations[n.inputs[0]];
          Tensor dx(x.shape());
          const auto& idx = cache.argmax[id];
          const auto gd = g.data();
          auto d = dx.data();
          for (std::size_t i = 0; i < gd.size(); ++i) d[idx[i]] += gd[i];
          accumulate(n.inputs[0], std::move(dx));
          break;
        }
        case LayerKind::Flatten:
        case LayerKind::Identity:
          accumulate(n.inputs[0], g.reshaped(cache.activations[n.inputs[0]].shape()));
          break;
        case LayerKind::Concat: {
          const Tensor& a = cache.activations[n.inputs[0]];
          const Tensor& b = cache.activations[n.inputs[1]];
          const std::size_t wa = a.size() / cache.batch;
          const std::size_t wb = b.size() / cache.batch;
          Tensor da(a.shape());
          Tensor db(b.shape());
          for (std::size_t r = 0; r < cache.batch; ++r) {
            const auto row = g.data().subspan(r * (wa + wb), wa + wb);
            std::copy(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(wa), da.data().begin() + static_cast<std::ptrdiff_t>(r * wa));
            std::copy(row.begin() + static_cast<std::ptrdiff_t>(wa), row.end(), db.data().begin() + static_cast<std::ptrdiff_t>(r * wb));
          }
          accumulate(n.inputs[0], std::move(da));
          accumulate(n.inputs[1], std::move(db));
          break;
        }
      }
    }
    return grads;
  }

 private:
  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter++;
  }

  void copy_from(const Network& other) {
    nodes_ = other.nodes_;
    params_ = other.params_;
    fans_ = other.fans_;
    frozen_ = other.frozen_;
    tabular_port_ = other.tabular_port_;
    image_port_ = other.image_port_;
    output_ = other.output_;
    ancestors_ = other.ancestors_;
  }

  static Shape batched(const Shape& per_sample, std::size_t batch) {
    Shape s{batch};
    s.insert(s.end(), per_sample.begin(), per_sample.end());
    return s;
  }

  const Shape& shape_of(NodeId id) const {
    if (id >= nodes_.size()) throw InvalidArgument("unknown node id " + std::to_string(id));
    return nodes_[id].out_shape;
  }

  bool is_port(NodeId id) const {
    return nodes_[id].kind == LayerKind::TabularInput || nodes_[id].kind == LayerKind::ImageInput;
  }

  NodeId add(Node n) {
    if (output_) throw InvalidArgument("cannot extend a network after its output is set");
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  std::size_t add_param(Shape shape, std::size_t fan_in, std::size_t fan_out) {
    params_.emplace_back(std::move(shape));
    fans_.emplace_back(fan_in, fan_out);
    frozen_.push_back(false);
    return params_.size() - 1;
  }

  std::vector<bool> compute_ancestors(NodeId out) const {
    std::vector<bool> mark(nodes_.size(), false);
    mark[out] = true;
    for (NodeId id = out + 1; id-- > 0;)
      if (mark[id])
        for (NodeId in : nodes_[id].inputs) mark[in] = true;
    return mark;
  }

  Tensor dense_forward(const Node& n, const Tensor& x) const {
    const Tensor& w = params_[n.weight];
    const std::size_t out = w.dim(0);
    const std::size_t in = w.dim(1);
    const std::size_t batch = x.dim(0);
    Tensor y({batch, out});
    const auto xd = x.data();
    const auto wd = w.data();
    auto yd = y.data();
    for (std::size_t r = 0; r < batch; ++r) {
      const double* xr = &xd[r * in];
      for (std::size_t o = 0; o < out; ++o) {
        const double* wr = &wd[o * in];
        double acc = n.bias != kNoParam ? params_[n.bias][o] : 0.0;
        for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
        yd[r * out + o] = acc;
      }
    }
    return y;
  }

  template <typename Accumulate>
  void dense_backward(const Node& n, const Tensor& x, const Tensor& g, std::vector<Tensor>& grads,
                      Accumulate&& accumulate) const {
    const Tensor& w = params_[n.weight];
    const std::size_t out = w.dim(0);
    const std::size_t in = w.dim(1);
    const std::size_t batch = x.dim(0);
    const auto xd = x.data();
    const auto wd = w.data();
    const auto gd = g.data();
    auto dw = grads[n.weight].data();
    const bool need_dx = !is_port(n.inputs[0]);
    Tensor dx = need_dx ? Tensor(x.shape()) : Tensor();
    for (std::size_t r = 0; r < batch; ++r) {
      const double* xr = &xd[r * in];
      for (std::size_t o = 0; o < out; ++o) {
        const double go = gd[r * out + o];
        if (go == 0.0) continue;
        double* dwr = &dw[o * in];
        for (std::size_t i = 0; i < in; ++i) dwr[i] += go * xr[i];
        if (need_dx) {
          const double* wr = &wd[o * in];
          double* dxr = &dx.data()[r * in];
          for (std::size_t i = 0; i < in; ++i) dxr[i] += go * wr[i];
        }
      }
    }
    if (n.bias != kNoParam) {
      auto db = grads[n.bias].data();
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t o = 0; o < out; ++o) db[o] += gd[r * out + o];
    }
    if (need_dx) accumulate(n.inputs[0], std::move(dx));
  }

  // Valid (unpadded) convolution over NHWC input. For a fixed kernel row the
  // (kx, c_in) patch is contiguous in memory, which the inner loops exploit.
  Tensor conv_forward(const Node& n, const Tensor& x) const {
    const Tensor& w = params_[n.weight];
    const Tensor& b = params_[n.bias];
    const std::size_t batch = x.dim(0), h = x.dim(1), wd = x.dim(2), cin = x.dim(3);
    const std::size_t oh = n.out_shape[0], ow = n.out_shape[1], cout = n.out_shape[2];
    const std::size_t k = n.kernel, s = n.stride, row = k * cin;
    Tensor y({batch, oh, ow, cout});
    const auto xd = x.data();
    const auto wt = w.data();
    auto yd = y.data();
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double* yo = &yd[((r * oh + oy) * ow + ox) * cout];
          for (std::size_t co = 0; co < cout; ++co) yo[co] = b[co];
          for (std::size_t ky = 0; ky < k; ++ky) {
            const double* xin = &xd[((r * h + oy * s + ky) * wd + ox * s) * cin];
            for (std::size_t co = 0; co < cout; ++co) {
              const double* wr = &wt[(co * k + ky) * row];
              double acc = 0.0;
              for (std::size_t j = 0; j < row; ++j) acc += xin[j] * wr[j];
              yo[co] += acc;
            }
          }
        }
    return y;
  }

  template <typename Accumulate>
  void conv_backward(const Node& n, const Tensor& x, const Tensor& g, std::vector<Tensor>& grads,
                     Accumulate&& accumulate) const {
    const Tensor& w = params_[n.weight];
    const std::size_t batch = x.dim(0), h = x.dim(1), wd = x.dim(2), cin = x.dim(3);
    const std::size_t oh = n.out_shape[0], ow = n.out_shape[1], cout = n.out_shape[2];
    const std::size_t k = n.kernel, s = n.stride, row = k * cin;
    const bool need_dx = !is_port(n.inputs[0]);
    Tensor dx = need_dx ? Tensor(x.shape()) : Tensor();
    const auto xd = x.data();
    const auto wt = w.data();
    const auto gd = g.data();
    auto dw = grads[n.weight].data();
    auto db = grads[n.bias].data();
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double* go = &gd[((r * oh + oy) * ow + ox) * cout];
          for (std::size_t co = 0; co < cout; ++co) db[co] += go[co];
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::size_t offset = ((r * h + oy * s + ky) * wd + ox * s) * cin;
            const double* xin = &xd[offset];
            for (std::size_t co = 0; co < cout; ++co) {
              const double gv = go[co];
              if (gv == 0.0) continue;
              double* dwr = &dw[(co * k + ky) * row];
              for (std::size_t j = 0; j < row; ++j) dwr[j] += gv * xin[j];
              if (need_dx) {
                const double* wr = &wt[(co * k + ky) * row];
                double* dxin = &dx.data()[offset];
                for (std::size_t j = 0; j < row; ++j) dxin[j] += gv * wr[j];
              }
            }
          }
        }
    if (need_dx) accumulate(n.inputs[0], std::move(dx));
  }

  Tensor pool_forward(const Node& n, const Tensor& x, std::vector<std::uint32_t>& argmax) const {
    const std::size_t batch = x.dim(0), w = x.dim(2), c = x.dim(3);
    const std::size_t oh = n.out_shape[0], ow = n.out_shape[1];
    Tensor y({batch, oh, ow, c});
    argmax.assign(y.size(), 0);
    const auto xd = x.data();
    auto yd = y.data();
    const std::size_t h = x.dim(1);
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
          for (std::size_t ch = 0; ch < c; ++ch) {
            std::size_t best = ((r * h + 2 * oy) * w + 2 * ox) * c + ch;
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dxp = 0; dxp < 2; ++dxp) {
                const std::size_t i = ((r * h + 2 * oy + dy) * w + 2 * ox + dxp) * c + ch;
                if (xd[i] > xd[best]) best = i;
              }
            const std::size_t o = ((r * oh + oy) * ow + ox) * c + ch;
            yd[o] = xd[best];
            argmax[o] = static_cast<std::uint32_t>(best);
          }
    return y;
  }

  static Tensor concat_forward(const Node& n, const Tensor& a, const Tensor& b) {
    const std::size_t batch = a.dim(0);
    const std::size_t wa = a.size() / batch, wb = b.size() / batch;
    Tensor y({batch, n.out_shape[0]});
    auto yd = y.data();
    for (std::size_t r = 0; r < batch; ++r) {
      std::copy_n(&a.data()[r * wa], wa, &yd[r * (wa + wb)]);
      std::copy_n(&b.data()[r * wb], wb, &yd[r * (wa + wb) + wa]);
    }
    return y;
  }

  std::uint64_t id_;
  std::uint64_t version_ = 0;
  std::vector<Node> nodes_;
  std::vector<Tensor> params_;
  std::vector<std::pair<std::size_t, std::size_t>> fans_;
  std::vector<bool> frozen_;
  std::optional<NodeId> tabular_port_;
  std::optional<NodeId> image_port_;
  std::optional<NodeId> output_;
  std::vector<bool> ancestors_;
};

}  // namespace mvre::numkit
