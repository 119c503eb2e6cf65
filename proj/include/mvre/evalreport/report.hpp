#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvre/error.hpp"
#include "mvre/strategies/models.hpp"

namespace mvre::evalreport {

using strategies::StrategyId;

inline double mae(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw InvalidArgument("mae: length mismatch");
  if (pred.empty()) throw InvalidArgument("mae: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

inline double rmse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw InvalidArgument("rmse: length mismatch");
  if (pred.empty()) throw InvalidArgument("rmse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_digest(StrategyId s, const strategies::TrainConfig& cfg) {
  return fnv1a_hex(std::string(strategies::to_string(s)) + "|" + cfg.to_json().dump());
}

/// Metrics on the currency scale. The timestamp is kept in memory only;
/// emitted documents leave it out so reruns compare byte for byte.
class EvalReport {
 public:
  EvalReport(StrategyId strategy, std::string split, std::uint64_t seed, double mae_usd, double rmse_usd, std::size_t n,
             std::string config_digest)
      : strategy_(strategy),
        split_(std::move(split)),
        seed_(seed),
        mae_(mae_usd),
        rmse_(rmse_usd),
        n_(n),
        digest_(std::move(config_digest)),
        timestamp_(std::chrono::system_clock::now()) {
    if (n_ == 0) throw InvalidArgument("EvalReport: empty test set");
    if (!std::isfinite(mae_) || !std::isfinite(rmse_)) throw NonFiniteError("EvalReport: non-finite metric");
    if (mae_ > rmse_ * (1.0 + 1e-12)) throw InvalidArgument("EvalReport: MAE exceeds RMSE");
  }

  StrategyId strategy() const { return strategy_; }
  const std::string& split() const { return split_; }
  std::uint64_t seed() const { return seed_; }
  double mae() const { return mae_; }
  double rmse() const { return rmse_; }
  std::size_t n() const { return n_; }
  const std::string& config_digest() const { return digest_; }
  std::chrono::system_clock::time_point timestamp() const { return timestamp_; }

  nlohmann::json to_json() const {
    return {{"strategy", strategies::to_string(strategy_)},
            {"split", split_},
            {"seed", seed_},
            {"mae", mae_},
            {"rmse", rmse_},
            {"n", n_},
            {"config_digest", digest_}};
  }

  static EvalReport from_json(const nlohmann::json& j) {
    return {strategies::parse_strategy(j.at("strategy").get<std::string>()),
            j.at("split").get<std::string>(),
            j.at("seed").get<std::uint64_t>(),
            j.at("mae").get<double>(),
            j.at("rmse").get<double>(),
            j.at("n").get<std::size_t>(),
            j.at("config_digest").get<std::string>()};
  }

 private:
  StrategyId strategy_;
  std::string split_;
  std::uint64_t seed_;
  double mae_;
  double rmse_;
  std::size_t n_;
  std::string digest_;
  std::chrono::system_clock::time_point timestamp_;
};

/// Metrics from log-space predictions: both sides are exponentiated first.
inline EvalReport report_from_log(StrategyId s, std::span<const double> log_pred, std::span<const double> log_truth,
                                  std::string split, std::uint64_t seed, std::string digest) {
  std::vector<double> pred(log_pred.size());
  std::vector<double> truth(log_truth.size());
  std::transform(log_pred.begin(), log_pred.end(), pred.begin(), [](double v) { return std::exp(v); });
  std::transform(log_truth.begin(), log_truth.end(), truth.begin(), [](double v) { return std::exp(v); });
  return {s, std::move(split), seed, mae(pred, truth), rmse(pred, truth), pred.size(), std::move(digest)};
}

inline EvalReport evaluate(const strategies::TrainedArtifact& a, const strategies::SplitData& test, const std::string& split_id) {
  const numkit::Tensor* images = test.images ? &*test.images : nullptr;
  const auto pred = a.predict_log(test.features, images);
  return report_from_log(a.strategy, pred, test.log_target, split_id, a.config.seed, config_digest(a.strategy, a.config));
}

/// Relative MAE reduction of `b` over `a`, in percent.
inline double improvement(const EvalReport& a, const EvalReport& b) {
  if (a.split() != b.split())
    throw InvalidArgument("improvement: split mismatch ('" + a.split() + "' vs '" + b.split() + "')");
  return (a.mae() - b.mae()) / a.mae() * 100.0;
}

enum class Format { Csv, Markdown, Json };

inline Format parse_format(const std::string& s) {
  if (s == "csv") return Format::Csv;
  if (s == "md" || s == "markdown") return Format::Markdown;
  if (s == "json") return Format::Json;
  throw InvalidArgument("unknown report format '" + s + "' (expected csv, md or json)");
}

inline const char* extension(Format f) {
  switch (f) {
    case Format::Csv: return "csv";
    case Format::Markdown: return "md";
    case Format::Json: return "json";
  }
  return "";
}

inline std::string display_name(StrategyId s) {
  return s == StrategyId::Baseline ? "Baseline" : "Model " + std::to_string(static_cast<int>(s));
}

namespace detail {

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// 40303 -> "40,303"; 3061.806 with 2 decimals -> "3,061.81"
inline std::string grouped(double v, int decimals = 0) {
  std::string text = fixed(decimals == 0 ? std::round(v) : v, decimals);
  const bool neg = !text.empty() && text[0] == '-';
  if (neg) text.erase(0, 1);
  const auto dot = text.find('.');
  const std::string digits = text.substr(0, dot);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  if (dot != std::string::npos) out += text.substr(dot);
  return neg ? "-" + out : out;
}

}  // namespace detail

inline std::vector<EvalReport> sorted(std::vector<EvalReport> reports) {
  std::stable_sort(reports.begin(), reports.end(), [](const EvalReport& a, const EvalReport& b) {
    if (a.strategy() != b.strategy()) return a.strategy() < b.strategy();
    if (a.seed() != b.seed()) return a.seed() < b.seed();
    return a.split() < b.split();
  });
  return reports;
}

inline std::string emit(std::vector<EvalReport> reports, Format format) {
  if (reports.empty()) throw InvalidArgument("emit: no reports");
  reports = sorted(std::move(reports));
  std::ostringstream out;
  switch (format) {
    case Format::Csv:
      out << "strategy,split,seed,mae,rmse,n,config_digest\n";
      for (const auto& r : reports)
        out << strategies::to_string(r.strategy()) << ",\"" << r.split() << "\"," << r.seed() << ','
            << detail::fixed(r.mae(), 4) << ',' << detail::fixed(r.rmse(), 4) << ',' << r.n() << ','
            << r.config_digest() << '\n';
      break;
    case Format::Markdown:
      out << "| Model | MAE | RMSE | Split | Seed | n |\n";
      out << "|---|---:|---:|---|---:|---:|\n";
      for (const auto& r : reports)
        out << "| " << display_name(r.strategy()) << " | " << detail::grouped(r.mae()) << " | "
            << detail::grouped(r.rmse()) << " | " << r.split() << " | " << r.seed() << " | " << r.n() << " |\n";
      break;
    case Format::Json: {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& r : reports) arr.push_back(r.to_json());
      out << arr.dump(2) << '\n';
      break;
    }
  }
  return out.str();
}

inline std::vector<EvalReport> parse_json_reports(const std::string& text) {
  std::vector<EvalReport> out;
  try {
    for (const auto& j : nlohmann::json::parse(text)) out.push_back(EvalReport::from_json(j));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report JSON: ") + e.what());
  }
  return out;
}

/// Writes <out>/reports/<stem>.<ext> and returns the path.
inline std::filesystem::path write_report(const std::filesystem::path& out, const std::string& stem,
                                          const std::vector<EvalReport>& reports, Format format) {
  const auto dir = out / "reports";
  std::filesystem::create_directories(dir);
  const auto path = dir / (stem + "." + extension(format));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << emit(reports, format);
  return path;
}

}  // namespace mvre::evalreport
