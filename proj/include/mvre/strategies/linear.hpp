#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mvre/error.hpp"

namespace mvre::strategies {

struct Coefficient {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double t_value = 0.0;
};

/// Ordinary least squares with intercept.
///
/// `weights` has one entry per input column (0 for dropped columns);
/// `coefficients` lists the intercept followed by every retained column with
/// its standard error from sigma^2 (X'X)^-1.
struct LinearFit {
  double intercept = 0.0;
  std::vector<double> weights;
  std::vector<std::string> column_names;
  std::vector<std::string> dropped;
  std::vector<Coefficient> coefficients;
  double sigma2 = 0.0;
  std::size_t n = 0;

  double predict_row(std::span<const double> row) const {
    if (row.size() != weights.size()) throw ShapeError("linear model: feature count mismatch");
    double s = intercept;
    for (std::size_t i = 0; i < row.size(); ++i) s += weights[i] * row[i];
    return s;
  }

  std::vector<double> predict(std::span<const double> x, std::size_t rows) const {
    if (x.size() != rows * weights.size()) throw ShapeError("linear model: feature count mismatch");
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) out[r] = predict_row(x.subspan(r * weights.size(), weights.size()));
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json coefs = nlohmann::json::array();
    for (const auto& c : coefficients)
      coefs.push_back({{"name", c.name}, {"estimate", c.estimate}, {"std_error", c.std_error}, {"t_value", c.t_value}});
    return {{"intercept", intercept}, {"weights", weights},     {"columns", column_names},
            {"dropped", dropped},     {"coefficients", coefs}, {"sigma2", sigma2},
            {"n", n}};
  }

  static LinearFit from_json(const nlohmann::json& j) {
    LinearFit f;
    f.intercept = j.at("intercept");
    f.weights = j.at("weights").get<std::vector<double>>();
    f.column_names = j.at("columns").get<std::vector<std::string>>();
    f.dropped = j.at("dropped").get<std::vector<std::string>>();
    for (const auto& c : j.at("coefficients")) f.coefficients.push_back({c.at("name"), c.at("estimate"), c.at("std_error"), c.at("t_value")});
    f.sigma2 = j.at("sigma2");
    f.n = j.at("n");
    return f;
  }
};

/// Fits y ~ 1 + X. Columns that are linear combinations of the intercept and
/// earlier columns (the last level of a one-hot group, constant columns) are
/// dropped and listed in `dropped` when `drop_redundant` is set; otherwise
/// they raise RankDeficientError.
inline LinearFit fit_linear_regression(std::span<const double> x, std::size_t rows, std::size_t cols,
                                       std::span<const double> y, const std::vector<std::string>& names,
                                       bool drop_redundant = true) {
  if (x.size() != rows * cols) throw ShapeError("linear regression: X has wrong size");
  if (y.size() != rows) throw ShapeError("linear regression: y length does not match rows");
  if (names.size() != cols) throw ShapeError("linear regression: column name count mismatch");
  for (double v : x)
    if (!std::isfinite(v)) throw NonFiniteError("linear regression: non-finite feature");
  for (double v : y)
    if (!std::isfinite(v)) throw NonFiniteError("linear regression: non-finite target");

  // Greedy column selection by modified Gram-Schmidt against the intercept
  // and the columns kept so far.
  std::vector<Eigen::VectorXd> basis;
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(rows));
  basis.push_back(ones / ones.norm());
  std::vector<std::size_t> kept;
  std::vector<std::string> redundant;
  for (std::size_t c = 0; c < cols; ++c) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(rows));
    for (std::size_t r = 0; r < rows; ++r) v[static_cast<Eigen::Index>(r)] = x[r * cols + c];
    const double norm0 = v.norm();
    for (const auto& b : basis) v -= b.dot(v) * b;
    const double norm = v.norm();
    if (norm0 == 0.0 || norm <= 1e-9 * norm0) {
      redundant.push_back(names[c]);
      continue;
    }
    basis.push_back(v / norm);
    kept.push_back(c);
  }
  if (!redundant.empty() && !drop_redundant)
    throw RankDeficientError("linear regression: design matrix is rank deficient", redundant);

  const std::size_t p = kept.size() + 1;
  if (rows <= p)
    throw RankDeficientError("linear regression: need more rows (" + std::to_string(rows) + ") than parameters (" +
                                 std::to_string(p) + ")",
                             {});

  Eigen::MatrixXd design(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(p));
  Eigen::VectorXd target(static_cast<Eigen::Index>(rows));
  for (std::size_t r = 0; r < rows; ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    design(ri, 0) = 1.0;
    for (std::size_t k = 0; k < kept.size(); ++k) design(ri, static_cast<Eigen::Index>(k + 1)) = x[r * cols + kept[k]];
    target[ri] = y[r];
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(design);
  const Eigen::VectorXd beta = qr.solve(target);
  const Eigen::VectorXd resid = target - design * beta;
  const double dof = static_cast<double>(rows - p);

  LinearFit fit;
  fit.n = rows;
  fit.column_names = names;
  fit.dropped = redundant;
  fit.sigma2 = resid.squaredNorm() / dof;
  fit.intercept = beta[0];
  fit.weights.assign(cols, 0.0);
  for (std::size_t k = 0; k < kept.size(); ++k) fit.weights[kept[k]] = beta[static_cast<Eigen::Index>(k + 1)];

  // (X'X)^-1 = R^-1 R^-T with R the upper triangle of the QR factorization.
  const Eigen::MatrixXd r_full = qr.matrixQR().topRows(static_cast<Eigen::Index>(p));
  const Eigen::MatrixXd r = r_full.triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p)));
  const Eigen::VectorXd var = (r_inv * r_inv.transpose()).diagonal() * fit.sigma2;
  auto coefficient = [&](std::string name, std::size_t idx) {
    const double se = std::sqrt(std::max(var[static_cast<Eigen::Index>(idx)], 0.0));
    const double est = beta[static_cast<Eigen::Index>(idx)];
    return Coefficient{std::move(name), est, se, se > 0.0 ? est / se : 0.0};
  };
  fit.coefficients.push_back(coefficient("intercept", 0));
  for (std::size_t k = 0; k < kept.size(); ++k) fit.coefficients.push_back(coefficient(names[kept[k]], k + 1));
  return fit;
}

}  // namespace mvre::strategies
