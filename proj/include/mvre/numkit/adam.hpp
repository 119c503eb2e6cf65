#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mvre/error.hpp"
#include "mvre/numkit/tensor.hpp"

namespace mvre::numkit {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates, one pair per parameter tensor.
struct AdamState {
  std::uint64_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

namespace detail {

// Unchecked recurrence; eps may be zero here.
inline void adam_update(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
                        const AdamConfig& cfg) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.shape());
      state.v.emplace_back(p.shape());
    }
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    const auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      const double denom = std::sqrt(v_hat) + cfg.eps;
      if (denom > 0.0) p[j] -= cfg.lr * m_hat / denom;
    }
  }
}

}  // namespace detail

/// One bias-corrected Adam step applied in place.
inline void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
                      const AdamConfig& cfg = {}) {
  if (!(cfg.lr > 0.0)) throw InvalidArgument("adam: lr must be positive");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
    throw InvalidArgument("adam: betas must lie in [0, 1)");
  if (!(cfg.eps > 0.0)) throw InvalidArgument("adam: eps must be positive");
  if (params.size() != grads.size()) throw ShapeError("adam: parameter/gradient count mismatch");
  if (!state.m.empty() && (state.m.size() != params.size() || state.v.size() != params.size()))
    throw ShapeError("adam: state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape())
      throw ShapeError("adam: gradient " + std::to_string(i) + " shape mismatch");
    if (!state.m.empty() && state.m[i].shape() != params[i].shape())
      throw ShapeError("adam: moment " + std::to_string(i) + " shape mismatch");
    require_finite(grads[i], "adam gradient " + std::to_string(i));
  }
  detail::adam_update(params, grads, state, cfg);
}

}  // namespace mvre::numkit
