#pragma once

#include <cmath>
#include <span>

#include "mvre/error.hpp"
#include "mvre/numkit/tensor.hpp"

namespace mvre::numkit {

struct LossResult {
  double value = 0.0;
  Tensor grad;  // d value / d pred, same shape as pred
};

/// RMSE + MAE, with the analytic gradient of both terms. The MAE
/// subgradient at an exact tie is 0, as is the RMSE gradient when every
/// residual is 0.
inline LossResult composite_loss(const Tensor& pred, std::span<const double> target) {
  const std::size_t n = pred.size();
  if (n == 0 || target.empty()) throw InvalidArgument("composite_loss: empty input");
  if (target.size() != n) throw ShapeError("composite_loss: prediction/target length mismatch");
  const auto p = pred.data();
  double sq = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = p[i] - target[i];
    sq += r * r;
    abs_sum += std::abs(r);
  }
  const double dn = static_cast<double>(n);
  const double rmse = std::sqrt(sq / dn);
  LossResult out{rmse + abs_sum / dn, Tensor(pred.shape())};
  auto g = out.grad.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double r = p[i] - target[i];
    const double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
    g[i] = sign / dn + (rmse > 0.0 ? r / (dn * rmse) : 0.0);
  }
  if (!std::isfinite(out.value)) throw NonFiniteError("composite_loss: non-finite loss");
  return out;
}

inline LossResult composite_loss(const Tensor& pred, const Tensor& target) {
  return composite_loss(pred, target.data());
}

}  // namespace mvre::numkit
