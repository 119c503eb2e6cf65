// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes. Optional arguments select criteria by number.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../gradcheck.hpp"
#include "mvre/evalreport/report.hpp"
#include "mvre/geotile/fetch.hpp"
#include "mvre/geotile/mock_server.hpp"
#include "mvre/geotile/tile_math.hpp"
#include "mvre/strategies/prepare.hpp"
#include "mvre/synthbench/synth.hpp"

#ifndef MVRE_CLI_PATH
#define MVRE_CLI_PATH "mvre"
#endif

namespace fs = std::filesystem;
using namespace mvre;
using strategies::StrategyId;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mvre_accept_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Benchmark training settings used for the strategy comparisons.
strategies::TrainConfig bench_config(std::uint64_t seed) {
  strategies::TrainConfig cfg;
  cfg.lr = 5e-3;
  cfg.batch = 16;
  cfg.max_epochs = 30;
  cfg.seed = seed;
  return cfg;
}

double log_mae(std::span<const double> pred, std::span<const double> truth) {
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

const numkit::Tensor* images_of(const strategies::SplitData& d) { return d.images ? &*d.images : nullptr; }

// ---- 1 ------------------------------------------------------------------------

numkit::Network layer_net(int which) {
  numkit::Network net;
  switch (which) {
    case 0:
      net.set_output(net.dense(net.dense(net.tabular_input(5), 4), 1));
      break;
    case 1:
      net.set_output(net.dense(net.relu(net.dense(net.tabular_input(5), 6)), 1));
      break;
    case 2: {
      auto c = net.conv2d(net.conv2d(net.image_input(7, 7, 2), 3, 3), 2, 2, 2);
      net.set_output(net.dense(net.flatten(c), 1));
      break;
    }
    case 3: {
      auto c = net.maxpool2(net.conv2d(net.image_input(6, 6, 2), 3, 3));
      net.set_output(net.dense(net.flatten(c), 1));
      break;
    }
    default: {
      auto a = net.identity(net.dense(net.tabular_input(3), 2));
      auto b = net.dense(net.flatten(net.image_input(2, 2, 2)), 3);
      net.set_output(net.dense(net.concat(a, b), 1));
    }
  }
  return net;
}

// Two-view network with widths drawn from the seed.
numkit::Network composed_net(std::uint64_t seed) {
  Rng rng(seed);
  numkit::Network net;
  const auto c1 = 2 + rng.below(3);
  const auto c2 = 2 + rng.below(3);
  const auto hidden = 3 + rng.below(4);
  auto img = net.image_input(10, 10, 3);
  auto trunk = net.maxpool2(net.relu(net.conv2d(img, c1, 3)));
  trunk = net.relu(net.conv2d(trunk, c2, 3));
  trunk = net.relu(net.dense(net.flatten(trunk), hidden));
  auto tab = net.relu(net.dense(net.tabular_input(4), hidden));
  auto fused = net.relu(net.dense(net.concat(tab, trunk), hidden));
  net.set_output(net.dense(fused, 1));
  return net;
}

Outcome gradient_oracle() {
  std::vector<double> errors;
  double worst = 0.0;
  auto check = [&](numkit::Network net, std::uint64_t init, std::uint64_t data) {
    net.init_params(init);
    const auto r = testing_support::gradient_check(net, data, 4, 1e-4);
    errors.insert(errors.end(), r.rel_errors.begin(), r.rel_errors.end());
    worst = std::max(worst, r.worst);
  };
  for (int k = 0; k < 5; ++k) check(layer_net(k), 100 + k, 11 + k);
  for (std::uint64_t seed : {1u, 2u}) check(composed_net(seed), seed, seed);
  const double within = static_cast<double>(std::count_if(errors.begin(), errors.end(), [](double e) { return e <= 1e-4; })) /
                        static_cast<double>(errors.size());
  return {within >= 0.99 && worst <= 1e-3,
          fmt("%zu parameters, %.2f%% within 1e-4, worst %.2e", errors.size(), 100.0 * within, worst)};
}

// ---- 2 ------------------------------------------------------------------------

Outcome tile_oracle() {
  std::size_t checked = 0;
  std::size_t bad = 0;
  for (int level = 1; level <= 6; ++level) {
    const std::uint32_t n = 1u << level;
    for (std::uint32_t y = 0; y < n; ++y)
      for (std::uint32_t x = 0; x < n; ++x) {
        const geotile::TileCoord t{x, y, level};
        const auto q = geotile::tile_to_quadkey(t);
        bad += !(geotile::quadkey_to_tile(q) == t) || !(geotile::tile_to_quadkey(geotile::quadkey_to_tile(q)) == q) ||
               !(geotile::latlon_to_tile(geotile::tile_center(t), level) == t);
        ++checked;
      }
  }
  const double footprint = geotile::ground_resolution(0.0, 16) * geotile::kTilePixels;
  return {bad == 0 && footprint >= 610.0 && footprint <= 613.0,
          fmt("%zu tiles round-tripped, %zu mismatches; level-16 footprint %.2f m (nominal ~600 m)", checked, bad,
              footprint)};
}

// ---- 3 ------------------------------------------------------------------------

Outcome strategy_ordering() {
  bool all = true;
  std::string detail;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    synthbench::SynthConfig c;
    c.n = 2000;
    c.image_size = 32;
    c.interaction = true;
    c.seed = seed;
    const auto ds = synthbench::generate(c);
    if (seed == 1) {
      double mq = 0, my = 0;
      for (std::size_t i = 0; i < c.n; ++i) {
        mq += ds.q[i];
        my += ds.log_price[i];
      }
      mq /= c.n;
      my /= c.n;
      double vq = 0, vy = 0;
      for (std::size_t i = 0; i < c.n; ++i) {
        vq += std::pow(c.gamma * (ds.q[i] - mq), 2);
        vy += std::pow(ds.log_price[i] - my, 2);
      }
      detail += fmt("image share of log-price variance %.2f; ", vq / vy);
    }
    const auto p = strategies::prepare(ds.records, ds.images, ds.schema, {}, seed, 32);
    const auto cfg = bench_config(seed);
    strategies::StrategyCache cache;
    std::map<StrategyId, double> mae;
    for (auto s : strategies::kAllStrategies) {
      const auto a = strategies::train_strategy(s, p.data, cfg, &cache);
      mae[s] = evalreport::evaluate(a, p.test, p.split_id).mae();
    }
    const double base = mae[StrategyId::Baseline];
    const bool a = mae[StrategyId::M1] > base;
    const bool b = mae[StrategyId::M2] < base;
    const bool cc = mae[StrategyId::M4] < base;
    const bool d = mae[StrategyId::M5] <= mae[StrategyId::M4];
    const bool e = mae[StrategyId::M5] <= 0.95 * base;
    all = all && a && b && cc && d && e;
    detail += fmt("seed %d: base %.0f m1 %.0f m2 %.0f m3 %.0f m4 %.0f m5 %.0f [%c%c%c%c%c]; ", static_cast<int>(seed), base,
                  mae[StrategyId::M1], mae[StrategyId::M2], mae[StrategyId::M3], mae[StrategyId::M4],
                  mae[StrategyId::M5], a ? 'a' : '-', b ? 'b' : '-', cc ? 'c' : '-', d ? 'd' : '-', e ? 'e' : '-');
  }
  return {all, detail};
}

// ---- 4 ------------------------------------------------------------------------

Outcome boosting_recovery() {
  synthbench::SynthConfig c;
  c.n = 1500;
  c.sigma = 0.05;
  c.gamma = 1.0;
  c.locality_as_feature = false;
  c.seed = 1;
  c.beta.assign(c.encoded_width(), 0.0);
  const auto ds = synthbench::generate(c);
  const auto p = strategies::prepare(ds.records, ds.images, ds.schema, {}, 1, 32);
  const auto cfg = bench_config(1);
  const auto m3 = strategies::train_m3_boosted(p.data, cfg);
  const auto base = strategies::train_baseline(p.data, cfg);
  const double coef = strategies::extract_coefficients(m3).find(strategies::kImageColumn)->estimate;
  const double m3_usd = evalreport::evaluate(m3, p.test, p.split_id).mae();
  const double base_usd = evalreport::evaluate(base, p.test, p.split_id).mae();
  const double m3_log = log_mae(m3.predict_log(p.test.features, images_of(p.test)), p.test.log_target);
  const double base_log = log_mae(base.predict_log(p.test.features, nullptr), p.test.log_target);
  return {coef >= 0.8 && coef <= 1.2 && m3_usd < 0.5 * base_usd,
          fmt("image coefficient %.4f; MAE m3 %.0f vs baseline %.0f (ratio %.3f); log MAE %.4f vs %.4f", coef, m3_usd,
              base_usd, m3_usd / base_usd, m3_log, base_log)};
}

// ---- 5 ------------------------------------------------------------------------

Outcome hybrid_reduction() {
  synthbench::SynthConfig c;
  c.n = 500;
  c.seed = 5;
  c.sigma = 0.0;
  c.gamma = 0.0;
  c.cat_vocab = {};
  c.locality_as_feature = false;
  c.image_size = 16;
  const auto ds = synthbench::generate(c);
  const auto p = strategies::prepare(ds.records, ds.images, ds.schema, {}, 5, 16);
  strategies::TrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.batch = 16;
  cfg.max_epochs = 200;
  cfg.image_size = 16;
  cfg.seed = 5;
  const auto m4 = strategies::extract_coefficients(strategies::train_m4_hybrid(p.data, cfg, {false}));
  const auto ls = strategies::extract_coefficients(strategies::train_baseline(p.data, cfg));
  double worst = 0.0;
  for (const auto& k : ls.coefficients) {
    const auto* got = m4.find(k.name);
    worst = std::max(worst, got ? std::abs(got->estimate - k.estimate) : INFINITY);
  }
  return {worst < 0.05, fmt("max |m4 - least squares| over %zu coefficients: %.5f", ls.coefficients.size(), worst)};
}

// ---- 6 ------------------------------------------------------------------------

Outcome baseline_gap() {
  const double bayes = synthbench::bayes_mae(0.1);
  bool all = true;
  std::string detail = fmt("bayes %.4f; ", bayes);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    synthbench::SynthConfig c;
    c.gamma = 0.0;
    c.sigma = 0.1;
    c.image_size = 10;
    c.seed = seed;
    const auto ds = synthbench::generate(c);
    const auto p = strategies::prepare(ds.records, {}, ds.schema, {}, seed, 10);
    const auto a = strategies::train_baseline(p.data, bench_config(seed));
    const double m = log_mae(a.predict_log(p.test.features, nullptr), p.test.log_target);
    all = all && m <= 1.15 * bayes;
    detail += fmt("seed %d log MAE %.4f (%.3fx); ", static_cast<int>(seed), m, m / bayes);
  }
  return {all, detail};
}

// ---- 7 ------------------------------------------------------------------------

int run_cli(const fs::path& cwd, const std::string& args) {
  const std::string cmd = "cd '" + cwd.string() + "' && env -u MVRE_TILE_ENDPOINT -u MVRE_OUT '" + MVRE_CLI_PATH +
                          "' " + args + " > /dev/null 2> cli_stderr.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path g_determinism_dir;

Outcome determinism() {
  const auto dir = scratch("determinism");
  g_determinism_dir = dir;
  const std::string train_flags = " --data ds --tiles ds/tiles --model all --seed 7 --epochs 4 --image-size 16";
  if (run_cli(dir, "synth --n 400 --seed 7 --image-size 16 --out ds") != 0) return {false, "synth failed"};
  if (run_cli(dir, "train" + train_flags + " --out run_a") != 0) return {false, "first train failed"};
  if (run_cli(dir, "train" + train_flags + " --out run_b") != 0) return {false, "second train failed"};
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const char* f : {"train.csv", "train.md", "train.json"}) {
    const auto a = slurp(dir / "run_a" / "reports" / f);
    const auto b = slurp(dir / "run_b" / "reports" / f);
    ++compared;
    if (a.empty() || a != b) differing.push_back(f);
  }
  const auto csv = slurp(dir / "run_a" / "reports" / "train.csv");
  const auto rows = std::count(csv.begin(), csv.end(), '\n');
  std::string detail = fmt("%zu report files compared, %zu differ; %d report rows", compared, differing.size(),
                           static_cast<int>(rows) - 1);
  for (const auto& d : differing) detail += " [" + d + "]";
  return {differing.empty() && rows == 7, detail};
}

// ---- 8 ------------------------------------------------------------------------

Outcome evaluation_contract() {
  std::string detail;
  bool ok = true;

  const std::vector<double> log_pred{std::log(110.0), std::log(800.0)};
  const std::vector<double> log_truth{std::log(100.0), std::log(1000.0)};
  const auto r = evalreport::report_from_log(StrategyId::Baseline, log_pred, log_truth, "random", 1, "hand");
  const bool hand = std::abs(r.mae() - 105.0) < 1e-9 && std::abs(r.rmse() - std::sqrt(20050.0)) < 1e-9;
  ok = ok && hand;
  detail += fmt("hand-built: MAE %.6f (expect 105), RMSE %.6f (expect %.6f); ", r.mae(), r.rmse(), std::sqrt(20050.0));

  bool rejected = false;
  try {
    evalreport::EvalReport bad(StrategyId::Baseline, "random", 1, 2.0, 1.0, 1, "x");
  } catch (const InvalidArgument&) {
    rejected = true;
  }
  ok = ok && rejected;

  Rng rng(8);
  std::size_t violations = 0;
  for (int t = 0; t < 500; ++t) {
    const auto n = 1 + rng.below(40);
    std::vector<double> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = 11.0 + rng.normal();
      y[i] = 11.0 + rng.normal();
    }
    const auto rep = evalreport::report_from_log(StrategyId::M5, p, y, "random", 1, "r");
    violations += rep.mae() > rep.rmse();
  }
  ok = ok && violations == 0;
  detail += fmt("%zu random reports, %zu with MAE > RMSE; ", std::size_t{500}, violations);

  std::size_t emitted = 0;
  if (!g_determinism_dir.empty()) {
    const auto text = slurp(g_determinism_dir / "run_a" / "reports" / "train.json");
    if (!text.empty())
      for (const auto& e : evalreport::parse_json_reports(text)) {
        ++emitted;
        ok = ok && e.mae() <= e.rmse();
      }
  }
  detail += fmt("%zu emitted CLI reports checked", emitted);
  return {ok && rejected && hand, detail};
}

// ---- 9 ------------------------------------------------------------------------

Outcome ingestion() {
  const auto dir = scratch("ingestion");
  Rng rng(9);
  const auto q = geotile::tile_to_quadkey(geotile::latlon_to_tile(geotile::GeoPoint(35.5951, -82.5515), 16));
  geotile::write_png(geotile::DirectoryStore::tile_path(dir / "store", q), synthbench::render_disks(32, 4, rng));

  geotile::MockTileServer server(dir / "store", 2);
  server.start();
  geotile::FetchOptions opt;
  opt.max_retries = 3;
  opt.base_backoff = std::chrono::milliseconds(1);
  opt.workers = 1;
  opt.cache_dir = dir / "cache";
  geotile::TileFetcher first(std::make_shared<geotile::RemoteEndpoint>(server.url_template()), opt);
  const auto img = first.fetch(q);
  const std::size_t retries = first.stats().retries;
  const std::size_t served = server.requests();

  geotile::TileFetcher second(std::make_shared<geotile::RemoteEndpoint>(server.url_template()), opt);
  const auto cached = second.fetch(q);
  const std::size_t after = server.requests() - served;
  server.stop();
  const bool ok = retries == 2 && served == 3 && after == 0 && second.stats().source_requests == 0 &&
                  second.stats().cache_hits == 1 && cached.data == img.data;
  return {ok, fmt("retries %zu (server saw %zu requests); cached fetch issued %zu remote requests, %zu cache hit", retries,
                  served, after, static_cast<std::size_t>(second.stats().cache_hits))};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient oracle", gradient_oracle},
      {"tile math oracle", tile_oracle},
      {"strategy ordering", strategy_ordering},
      {"boosting recovery", boosting_recovery},
      {"hybrid reduction", hybrid_reduction},
      {"baseline optimality gap", baseline_gap},
      {"determinism", determinism},
      {"evaluation contract", evaluation_contract},
      {"ingestion integration", ingestion},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %d %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, secs, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  fs::remove_all(fs::temp_directory_path() / ("mvre_accept_" + std::to_string(::getpid())));
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
